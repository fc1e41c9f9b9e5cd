#pragma once

// JSON and CSV plumbing for the command line tool.

#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "counting.hpp"
#include "slattice.hpp"

namespace sqf::io {

using json = nlohmann::json;

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << data;
  if (!out) throw IoError("write failed for " + path);
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(what + ": " + e.what());
  }
}

inline json load_json(const std::string& path) { return parse_json(read_file(path), path); }

inline Rational rational_of(const json& j, const std::string& what) {
  try {
    if (j.is_number_integer()) return Rational(Int(j.get<long>()));
    if (j.is_string()) return parse_rational(j.get<std::string>());
  } catch (const Error& e) {
    throw SchemaError(what + ": " + e.what());
  }
  throw SchemaError(what + ": expected an integer or a rational string");
}

// A real Gram entry: a rational literal is exact; "sqrt(r)", "-sqrt(r)",
// "c*sqrt(r)" and decimal literals are carried as doubles.
struct RealEntry {
  Rational exact = 0;
  double inexact = 0;
  bool is_exact = true;
};

inline RealEntry real_entry(const json& j, const std::string& what) {
  RealEntry e;
  if (j.is_number_float()) {
    e.is_exact = false;
    e.inexact = j.get<double>();
    return e;
  }
  if (!j.is_string()) {
    e.exact = rational_of(j, what);
    return e;
  }
  std::string s = j.get<std::string>();
  static const std::regex sq(R"(^\s*(-?)\s*(?:([0-9/]+)\s*\*\s*)?sqrt\(\s*([0-9/]+)\s*\)\s*$)");
  std::smatch m;
  if (std::regex_match(s, m, sq)) {
    Rational c = m[2].matched ? rational_of(json(m[2].str()), what) : Rational(1);
    Rational r = rational_of(json(m[3].str()), what);
    e.is_exact = false;
    e.inexact = (m[1].str() == "-" ? -1.0 : 1.0) * c.get_d() * std::sqrt(r.get_d());
    return e;
  }
  if (s.find_first_of(".eE") != std::string::npos) {
    try {
      size_t pos = 0;
      e.inexact = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw SchemaError(what + ": bad real literal " + s);
    }
    e.is_exact = false;
    return e;
  }
  e.exact = rational_of(j, what);
  return e;
}

inline std::string place_key(const json& p) {
  if (p.is_string()) return p.get<std::string>();
  if (p.is_number_integer()) return std::to_string(p.get<long>());
  throw SchemaError("place must be \"inf\" or a prime");
}

inline int64_t prime_of(const std::string& key) {
  try {
    size_t pos = 0;
    long p = std::stol(key, &pos);
    if (pos != key.size()) throw std::invalid_argument(key);
    require_odd_prime(p);
    return p;
  } catch (const Error&) {
    throw SchemaError("not an odd prime: " + key);
  } catch (const std::exception&) {
    throw SchemaError("not a place: " + key);
  }
}

// {"n": 4, "places": [{"p": "inf", "gram": [...]}, {"p": 5, "gram": [...], "prec": 30}]}
inline QuadraticFormS form_from_json(const json& j) {
  if (!j.is_object() || !j.contains("places") || !j["places"].is_array()) throw SchemaError("form: missing places");
  QuadraticFormS q;
  bool have_inf = false;
  for (const auto& pl : j["places"]) {
    if (!pl.contains("p") || !pl.contains("gram") || !pl["gram"].is_array()) throw SchemaError("form: place needs p and gram");
    std::string key = place_key(pl["p"]);
    const auto& g = pl["gram"];
    size_t n = g.size();
    for (const auto& row : g)
      if (!row.is_array() || row.size() != n) throw SchemaError("form: gram must be square");
    try {
      if (key == "inf") {
        RMatrix ex(n, std::vector<Rational>(n, Rational(0)));
        std::vector<std::vector<double>> irr(n, std::vector<double>(n, 0.0));
        bool exact = true;
        for (size_t a = 0; a < n; ++a)
          for (size_t b = 0; b < n; ++b) {
            RealEntry e = real_entry(g[a][b], "form gram");
            ex[a][b] = e.exact;
            irr[a][b] = e.inexact;
            exact = exact && e.is_exact;
          }
        q.inf = exact ? QuadraticFormP::real_exact(ex) : QuadraticFormP::real_mixed(ex, irr);
        q.irrational = !exact;
        have_inf = true;
      } else {
        int64_t p = prime_of(key);
        RMatrix B(n, std::vector<Rational>(n));
        for (size_t a = 0; a < n; ++a)
          for (size_t b = 0; b < n; ++b) B[a][b] = rational_of(g[a][b], "form gram");
        int64_t prec = pl.contains("prec") ? pl["prec"].get<int64_t>() : kInfiniteValuation;
        q.finite[p] = QuadraticFormP::finite(B, p, prec);
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::InvalidArgument) throw SchemaError(std::string("form: ") + e.what());
      throw;
    }
    q.n = n;
  }
  if (!have_inf) throw SchemaError("form: the real place is required");
  if (j.contains("n") && j["n"].get<size_t>() != q.n) throw SchemaError("form: n does not match the Gram size");
  try {
    q.validate();
  } catch (const Error& e) {
    throw SchemaError(std::string("form: ") + e.what());
  }
  return q;
}

// {"inf": ["a", "b"], "5": {"center": "0", "scale": 0}}
inline SInterval interval_from_json(const json& j) {
  if (!j.is_object() || !j.contains("inf") || !j["inf"].is_array() || j["inf"].size() != 2)
    throw SchemaError("interval: \"inf\" must be [a, b]");
  SInterval I = SInterval::real_only(rational_of(j["inf"][0], "interval"), rational_of(j["inf"][1], "interval"));
  for (const auto& [k, v] : j.items()) {
    if (k == "inf") continue;
    int64_t p = prime_of(k);
    PInterval Ip;
    if (v.contains("center")) Ip.center = rational_of(v["center"], "interval center");
    if (v.contains("scale")) Ip.scale = v["scale"].get<int64_t>();
    I.finite[p] = Ip;
  }
  return I;
}

// {"inf": {"norm": "sup", "radius": "1"}, "5": {"exponent": 0, "shell": false,
//  "table": [{"class": [1, 0, 0, 0], "exponent": 1}]}}
inline Region region_from_json(const json& j) {
  Region R;
  if (j.is_null()) return R;
  if (!j.is_object()) throw SchemaError("region: expected an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "inf") {
      std::string norm = v.value("norm", "sup");
      if (norm == "sup") R.inf.norm = RealNorm::Sup;
      else if (norm == "euclid") R.inf.norm = RealNorm::Euclid;
      else throw SchemaError("region: norm must be sup or euclid");
      if (v.contains("radius")) {
        Rational r = rational_of(v["radius"], "region radius");
        if (r <= 0) throw SchemaError("region: radius must be positive");
        R.inf.radius_exact = r;
        R.inf.radius = r.get_d();
      }
      continue;
    }
    int64_t p = prime_of(k);
    PRegion P;
    P.exponent = v.value("exponent", int64_t(0));
    P.shell = v.value("shell", false);
    if (v.contains("table"))
      for (const auto& e : v["table"]) {
        std::vector<int64_t> cls = e.at("class").get<std::vector<int64_t>>();
        P.table[PRegion::class_key(cls, p)] = e.at("exponent").get<int64_t>();
      }
    R.finite[p] = P;
  }
  return R;
}

// "inf=200,3=9,5=5"
inline STime time_from_string(const std::string& s) {
  STime T;
  bool have_inf = false;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw SchemaError("time: expected place=value in " + item);
    std::string key = item.substr(0, eq), val = item.substr(eq + 1);
    if (key == "inf") {
      Rational t;
      try {
        t = parse_rational(val);
      } catch (const Error& e) {
        throw SchemaError(std::string("time: ") + e.what());
      }
      if (t <= 0) throw SchemaError("time: T_inf must be positive");
      T.T_inf_exact = t;
      T.T_inf = t.get_d();
      have_inf = true;
      continue;
    }
    int64_t p = prime_of(key);
    Int v;
    try {
      v = Int(val);
    } catch (const std::exception&) {
      throw SchemaError("time: bad T_p " + val);
    }
    int64_t e = 0;
    while (v > 1 && mod(v, Int(p)) == 0) {
      v /= p;
      ++e;
    }
    if (v != 1) throw SchemaError("time: T_" + key + " must be a power of " + key);
    T.n[p] = e;
  }
  if (!have_inf) throw SchemaError("time: inf component required");
  return T;
}

inline std::string time_to_string(const STime& T) {
  std::string s = "inf=" + (T.T_inf_exact ? to_string(*T.T_inf_exact) : std::to_string(T.T_inf));
  for (const auto& [p, e] : T.n) s += "," + std::to_string(p) + "=" + ipow(p, e).get_str();
  return s;
}

// {"S": [3, 5], "basis": [["1", "0"], ["1/3", "1"]]}
inline SLattice lattice_from_json(const json& j) {
  if (!j.is_object() || !j.contains("basis")) throw SchemaError("lattice: missing basis");
  SLattice L;
  if (j.contains("S"))
    for (const auto& p : j["S"]) L.S.push_back(prime_of(place_key(p)));
  for (const auto& row : j["basis"]) {
    std::vector<Rational> r;
    for (const auto& x : row) r.push_back(rational_of(x, "lattice basis"));
    L.basis.push_back(r);
  }
  size_t n = L.basis.size();
  for (const auto& r : L.basis)
    if (r.size() != n) throw SchemaError("lattice: basis must be square");
  if (n == 0 || determinant(L.basis) == 0) throw SchemaError("lattice: basis is degenerate");
  return L;
}

inline json matrix_to_json(const RMatrix& m) {
  json a = json::array();
  for (const auto& r : m) {
    json row = json::array();
    for (const auto& x : r) row.push_back(to_string(x));
    a.push_back(row);
  }
  return a;
}

inline json vector_to_json(const std::vector<Rational>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(to_string(x));
  return a;
}

inline std::vector<Rational> vector_from_string(const std::string& s) {
  std::vector<Rational> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(parse_rational(item));
    } catch (const Error& e) {
      throw SchemaError(std::string("vector: ") + e.what());
    }
  }
  return v;
}

// Shortest round-trip representation, stable across runs.
inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) {
    if (c == '"') o += '"';
    o += c;
  }
  return o + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string s;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) s += ',';
    s += csv_field(fields[i]);
  }
  return s + "\r\n";
}

}  // namespace sqf::io
