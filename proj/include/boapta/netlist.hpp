#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace boapta {

enum class ElementKind { Resistor, Capacitor, Inductor, VSource, ISource, Diode, BJT, MOSFET };

/// Raised for malformed decks. `line()` is 1-based, or 0 when the problem is
/// not tied to a single card (connectivity, missing ground).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ModelCard {
  std::string name;
  std::string type;  // "D", "NPN", "PNP", "NMOS", "PMOS"
  std::map<std::string, double> params;

  double get(const std::string& key, double fallback) const;
};

/// One circuit card. Terminal indices refer to Netlist::nodes; index 0 is
/// always ground. Two-terminal devices list (n+, n-); BJTs list (C, B, E);
/// MOSFETs list (D, G, S) with bulk tied to source.
struct Element {
  std::string name;
  ElementKind kind;
  std::vector<int> terminals;
  double value = 0.0;
  std::string model;
  // MOSFET geometry, ignored elsewhere.
  double width = 1.0;
  double length = 1.0;
};

class Netlist {
 public:
  std::string title;
  std::vector<std::string> nodes;  // nodes[0] == "0"
  std::vector<Element> elements;
  std::map<std::string, ModelCard> models;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int node_index(std::string_view name) const;  // -1 when absent
  const ModelCard& model_for(const Element& e) const;
  std::size_t count(ElementKind kind) const;

  /// Throws ParseError on any invariant violation.
  void validate() const;
};

Netlist parse_netlist(std::string_view text);
Netlist load_netlist(const std::string& path);

/// Canonical deck text; parse_netlist(serialize_netlist(n)) rebuilds `n`.
std::string serialize_netlist(const Netlist& netlist);

/// Parses a SPICE number with engineering suffix ("1k", "10meg", "2.2u").
std::optional<double> parse_spice_number(std::string_view token);

/// (nodes, MNA equations, capacitors, resistors, vsources, BJTs, MOSFETs).
/// MNA equations = non-ground nodes + voltage-source and inductor branches.
struct FeatureVector {
  int n_nodes = 0;
  int n_mna_equations = 0;
  int n_capacitors = 0;
  int n_resistors = 0;
  int n_vsources = 0;
  int n_bjt = 0;
  int n_mosfet = 0;

  static constexpr int kSize = 7;
  Eigen::Matrix<double, kSize, 1> as_vector() const;
  bool operator==(const FeatureVector&) const = default;
};

FeatureVector extract_features(const Netlist& netlist);

/// Multiplies every resistor by an independent N(1, variation^2) draw,
/// redrawing non-positive factors. Deterministic in `seed`.
Netlist perturb_netlist(const Netlist& base, double variation, std::uint64_t seed);

}  // namespace boapta
