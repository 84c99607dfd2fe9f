#include "boapta/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace boapta {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> tokenize(std::string_view line) {
  // Parentheses and '=' are separators so ".model d1 d(is=1e-14)" splits
  // into {".model", "d1", "d", "is", "=", "1e-14"}.
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ',') {
      flush();
    } else if (c == '=') {
      flush();
      tokens.emplace_back("=");
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return tokens;
}

struct Card {
  std::size_t line;
  std::string text;
};

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int i) {
    while (parent_[i] != i) i = parent_[i] = parent_[parent_[i]];
    return i;
  }
  void unite(int a, int b) { parent_[find(a)] = find(b); }

 private:
  std::vector<int> parent_;
};

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
      line_(line) {}

double ModelCard::get(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

int Netlist::node_index(std::string_view name) const {
  auto it = std::find(nodes.begin(), nodes.end(), lower(name));
  return it == nodes.end() ? -1 : static_cast<int>(it - nodes.begin());
}

const ModelCard& Netlist::model_for(const Element& e) const {
  auto it = models.find(e.model);
  if (it == models.end()) throw std::invalid_argument("unknown model card '" + e.model + "' for " + e.name);
  return it->second;
}

std::size_t Netlist::count(ElementKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(elements.begin(), elements.end(), [kind](const Element& e) { return e.kind == kind; }));
}

std::optional<double> parse_spice_number(std::string_view token) {
  std::string t = lower(token);
  if (t.size() > 1 && t[0] == '+' && t[1] != '-') t.erase(0, 1);
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin) return std::nullopt;
  std::string_view suffix(ptr, static_cast<std::size_t>(end - ptr));
  double scale = 1.0;
  if (suffix.starts_with("meg")) {
    scale = 1e6;
    suffix.remove_prefix(3);
  } else if (suffix.starts_with("mil")) {
    scale = 25.4e-6;
    suffix.remove_prefix(3);
  } else if (!suffix.empty()) {
    switch (suffix.front()) {
      case 't': scale = 1e12; break;
      case 'g': scale = 1e9; break;
      case 'k': scale = 1e3; break;
      case 'm': scale = 1e-3; break;
      case 'u': scale = 1e-6; break;
      case 'n': scale = 1e-9; break;
      case 'p': scale = 1e-12; break;
      case 'f': scale = 1e-15; break;
      default: return std::nullopt;
    }
    suffix.remove_prefix(1);
  }
  // Trailing unit letters ("1kohm", "10uF", "5V") are accepted.
  if (!std::all_of(suffix.begin(), suffix.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }))
    return std::nullopt;
  return value * scale;
}

void Netlist::validate() const {
  if (elements.empty()) throw ParseError(0, "netlist has no elements");
  if (nodes.empty() || nodes.front() != "0") throw ParseError(0, "missing ground node '0'");

  std::vector<int> connections(nodes.size(), 0);
  bool touches_ground = false;
  std::set<std::string> names;
  DisjointSet groups(num_nodes());
  for (const auto& e : elements) {
    if (!names.insert(e.name).second) throw ParseError(0, "duplicate element name '" + e.name + "'");
    for (int t : e.terminals) {
      if (t < 0 || t >= num_nodes()) throw ParseError(0, "element " + e.name + " references undeclared node");
      ++connections[t];
      touches_ground = touches_ground || t == 0;
      groups.unite(t, e.terminals.front());
    }
    if ((e.kind == ElementKind::Resistor || e.kind == ElementKind::Capacitor ||
         e.kind == ElementKind::Inductor) && !(e.value > 0.0))
      throw ParseError(0, "element " + e.name + " must have a positive value");
    if (e.kind == ElementKind::Diode || e.kind == ElementKind::BJT || e.kind == ElementKind::MOSFET) {
      if (!models.count(e.model)) throw ParseError(0, "unknown model card '" + e.model + "' for " + e.name);
    }
  }
  if (!touches_ground) throw ParseError(0, "missing ground node '0'");
  for (int n = 1; n < num_nodes(); ++n) {
    if (groups.find(n) != groups.find(0))
      throw ParseError(0, "node '" + nodes[n] + "' has no path to ground");
  }
  for (int n = 1; n < num_nodes(); ++n) {
    if (connections[n] < 2) throw ParseError(0, "dangling node '" + nodes[n] + "' has a single connection");
  }
}

Netlist parse_netlist(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) throw ParseError(0, "empty input");

  std::vector<Card> cards;
  Netlist net;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  bool ended = false;
  while (!ended && std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (lineno == 1) {
      net.title = raw;
      continue;
    }
    if (auto semi = raw.find(';'); semi != std::string::npos) raw.erase(semi);
    auto first = raw.find_first_not_of(" \t");
    if (first == std::string::npos || raw[first] == '*') continue;
    if (raw[first] == '+') {
      if (cards.empty()) throw ParseError(lineno, "continuation line without a preceding card");
      cards.back().text += " " + raw.substr(first + 1);
      continue;
    }
    if (lower(raw.substr(first, 4)) == ".end" && lower(raw.substr(first)).find_first_not_of(" \t", 4) == std::string::npos) {
      ended = true;
      continue;
    }
    cards.push_back({lineno, raw.substr(first)});
  }

  net.nodes.push_back("0");
  auto node_of = [&](const std::string& token) {
    std::string name = lower(token);
    if (name == "gnd") name = "0";
    auto it = std::find(net.nodes.begin(), net.nodes.end(), name);
    if (it != net.nodes.end()) return static_cast<int>(it - net.nodes.begin());
    net.nodes.push_back(name);
    return net.num_nodes() - 1;
  };

  std::set<std::string> seen;
  for (const auto& card : cards) {
    auto tok = tokenize(card.text);
    for (auto& t : tok) t = lower(t);
    const std::string& head = tok.front();
    auto number = [&](const std::string& t) {
      auto v = parse_spice_number(t);
      if (!v || !std::isfinite(*v)) throw ParseError(card.line, "bad numeric value '" + t + "'");
      return *v;
    };

    if (head == ".model") {
      if (tok.size() < 3) throw ParseError(card.line, "malformed .model card");
      ModelCard m{tok[1], tok[2], {}};
      static const std::set<std::string> kTypes{"d", "npn", "pnp", "nmos", "pmos"};
      if (!kTypes.count(m.type)) throw ParseError(card.line, "unsupported model type '" + tok[2] + "'");
      for (std::size_t i = 3; i < tok.size(); i += 3) {
        if (i + 2 >= tok.size() || tok[i + 1] != "=") throw ParseError(card.line, "expected key=value in .model");
        m.params[tok[i]] = number(tok[i + 2]);
      }
      if (net.models.count(m.name)) throw ParseError(card.line, "duplicate model '" + m.name + "'");
      net.models[m.name] = std::move(m);
      continue;
    }
    if (head == ".op") continue;
    if (head.front() == '.') throw ParseError(card.line, "unsupported control card '" + head + "'");

    Element e;
    e.name = head;
    if (!seen.insert(e.name).second) throw ParseError(card.line, "duplicate element name '" + head + "'");
    auto need = [&](std::size_t n) {
      if (tok.size() < n) throw ParseError(card.line, "too few fields for element '" + head + "'");
    };
    switch (head.front()) {
      case 'r':
      case 'c':
      case 'l': {
        need(4);
        if (tok.size() != 4) throw ParseError(card.line, "unexpected trailing fields on '" + head + "'");
        e.kind = head.front() == 'r' ? ElementKind::Resistor
                 : head.front() == 'c' ? ElementKind::Capacitor
                                       : ElementKind::Inductor;
        e.terminals = {node_of(tok[1]), node_of(tok[2])};
        e.value = number(tok[3]);
        if (!(e.value > 0.0)) throw ParseError(card.line, "element '" + head + "' must have a positive value");
        break;
      }
      case 'v':
      case 'i': {
        need(4);
        e.kind = head.front() == 'v' ? ElementKind::VSource : ElementKind::ISource;
        e.terminals = {node_of(tok[1]), node_of(tok[2])};
        std::size_t at = 3;
        if (tok[at] == "dc") ++at;
        if (at >= tok.size()) throw ParseError(card.line, "missing source value on '" + head + "'");
        e.value = number(tok[at]);
        if (at + 1 != tok.size()) throw ParseError(card.line, "unexpected trailing fields on '" + head + "'");
        break;
      }
      case 'd': {
        need(4);
        e.kind = ElementKind::Diode;
        e.terminals = {node_of(tok[1]), node_of(tok[2])};
        e.model = tok[3];
        break;
      }
      case 'q': {
        need(5);
        e.kind = ElementKind::BJT;
        e.terminals = {node_of(tok[1]), node_of(tok[2]), node_of(tok[3])};
        e.model = tok[4];
        break;
      }
      case 'm': {
        // M<name> d g s [b] model [w=..] [l=..]
        std::vector<std::string> positional;
        std::size_t i = 1;
        for (; i < tok.size() && (i + 1 >= tok.size() || tok[i + 1] != "="); ++i) positional.push_back(tok[i]);
        if (positional.size() != 4 && positional.size() != 5) throw ParseError(card.line, "malformed MOSFET card '" + head + "'");
        e.kind = ElementKind::MOSFET;
        e.terminals = {node_of(positional[0]), node_of(positional[1]), node_of(positional[2])};
        if (positional.size() == 5 && lower(positional[3]) != lower(positional[2]))
          throw ParseError(card.line, "bulk must be tied to source on '" + head + "'");
        e.model = positional.back();
        for (; i < tok.size(); i += 3) {
          if (i + 2 >= tok.size() || tok[i + 1] != "=") throw ParseError(card.line, "expected key=value on '" + head + "'");
          if (tok[i] == "w") e.width = number(tok[i + 2]);
          else if (tok[i] == "l") e.length = number(tok[i + 2]);
          else throw ParseError(card.line, "unknown MOSFET parameter '" + tok[i] + "'");
        }
        if (!(e.width > 0.0) || !(e.length > 0.0)) throw ParseError(card.line, "MOSFET geometry must be positive");
        break;
      }
      default:
        throw ParseError(card.line, "unknown element type '" + head + "'");
    }
    net.elements.push_back(std::move(e));
  }

  // Model types must match the device using them.
  for (const auto& e : net.elements) {
    if (e.model.empty()) continue;
    auto it = net.models.find(e.model);
    if (it == net.models.end()) continue;  // reported by validate()
    const auto& type = it->second.type;
    bool ok = (e.kind == ElementKind::Diode && type == "d") ||
              (e.kind == ElementKind::BJT && (type == "npn" || type == "pnp")) ||
              (e.kind == ElementKind::MOSFET && (type == "nmos" || type == "pmos"));
    if (!ok) throw ParseError(0, "model '" + e.model + "' has wrong type for " + e.name);
  }

  net.validate();
  return net;
}

Netlist load_netlist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_netlist(ss.str());
}

std::string serialize_netlist(const Netlist& netlist) {
  std::ostringstream out;
  out << (netlist.title.empty() ? "*" : netlist.title) << '\n';
  for (const auto& e : netlist.elements) {
    out << e.name;
    for (int t : e.terminals) out << ' ' << netlist.nodes[t];
    switch (e.kind) {
      case ElementKind::Resistor:
      case ElementKind::Capacitor:
      case ElementKind::Inductor:
        out << ' ' << format_number(e.value);
        break;
      case ElementKind::VSource:
      case ElementKind::ISource:
        out << " dc " << format_number(e.value);
        break;
      case ElementKind::Diode:
      case ElementKind::BJT:
        out << ' ' << e.model;
        break;
      case ElementKind::MOSFET:
        out << ' ' << e.model << " w=" << format_number(e.width) << " l=" << format_number(e.length);
        break;
    }
    out << '\n';
  }
  for (const auto& [name, m] : netlist.models) {
    out << ".model " << name << ' ' << m.type << " (";
    bool first = true;
    for (const auto& [k, v] : m.params) {
      out << (first ? "" : " ") << k << '=' << format_number(v);
      first = false;
    }
    out << ")\n";
  }
  out << ".end\n";
  return out.str();
}

Eigen::Matrix<double, FeatureVector::kSize, 1> FeatureVector::as_vector() const {
  Eigen::Matrix<double, kSize, 1> v;
  v << n_nodes, n_mna_equations, n_capacitors, n_resistors, n_vsources, n_bjt, n_mosfet;
  return v;
}

FeatureVector extract_features(const Netlist& netlist) {
  netlist.validate();
  FeatureVector f;
  f.n_nodes = netlist.num_nodes() - 1;
  f.n_capacitors = static_cast<int>(netlist.count(ElementKind::Capacitor));
  f.n_resistors = static_cast<int>(netlist.count(ElementKind::Resistor));
  f.n_vsources = static_cast<int>(netlist.count(ElementKind::VSource));
  f.n_bjt = static_cast<int>(netlist.count(ElementKind::BJT));
  f.n_mosfet = static_cast<int>(netlist.count(ElementKind::MOSFET));
  f.n_mna_equations = f.n_nodes + f.n_vsources + static_cast<int>(netlist.count(ElementKind::Inductor));
  return f;
}

Netlist perturb_netlist(const Netlist& base, double variation, std::uint64_t seed) {
  if (!(variation > 0.0 && variation < 1.0)) throw std::invalid_argument("variation must lie in (0, 1)");
  if (base.count(ElementKind::Resistor) == 0) throw std::invalid_argument("netlist has no resistors to perturb");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> factor(1.0, variation);
  Netlist out = base;
  for (auto& e : out.elements) {
    if (e.kind != ElementKind::Resistor) continue;
    double g = factor(rng);
    while (!(g > 0.0)) g = factor(rng);
    e.value *= g;
  }
  return out;
}

}  // namespace boapta
