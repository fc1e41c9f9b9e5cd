// sqf: command line front end.
//
// Exit codes: 0 ok, 2 usage or schema error, 3 I/O error, 4 computation
// error, 1 anything else.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <iostream>

#include "sqf/io.hpp"
#include "sqf/ortho.hpp"
#include "sqf/volume.hpp"

using namespace sqf;
using io::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

// Inputs of an experiment, resolved so that a manifest can replay them
// without the original files.
struct Inputs {
  json config;                               // resolved, file references inlined
  std::map<std::string, std::string> files;  // path -> sha256
};

json resolve(const json& v, Inputs& in) {
  if (!v.is_string()) return v;
  std::string path = v.get<std::string>();
  std::string text = io::read_file(path);
  in.files[path] = sha256_hex(text);
  return io::parse_json(text, path);
}

Inputs load_config(const std::string& path, const std::vector<std::string>& inline_keys) {
  Inputs in;
  std::string text = io::read_file(path);
  in.files[path] = sha256_hex(text);
  json c = io::parse_json(text, path);
  if (!c.is_object()) throw io::SchemaError("config must be an object");
  for (const auto& k : inline_keys)
    if (c.contains(k)) c[k] = resolve(c[k], in);
  in.config = c;
  return in;
}

std::vector<STime> times_of(const json& c) {
  std::vector<STime> Ts;
  if (!c.contains("T")) throw io::SchemaError("config: missing T");
  for (const auto& t : c["T"]) {
    if (!t.is_string()) throw io::SchemaError("config: T entries are strings like \"inf=10,5=5\"");
    Ts.push_back(io::time_from_string(t.get<std::string>()));
  }
  return Ts;
}

std::vector<std::string> time_fields(const STime& T, const std::vector<int64_t>& primes) {
  std::vector<std::string> f = {T.T_inf_exact ? to_string(*T.T_inf_exact) : io::fmt(T.T_inf)};
  for (int64_t p : primes) {
    auto it = T.n.find(p);
    f.push_back(ipow(p, it == T.n.end() ? 0 : it->second).get_str());
  }
  return f;
}

std::vector<std::string> time_header(const std::vector<int64_t>& primes) {
  std::vector<std::string> h = {"T_inf"};
  for (int64_t p : primes) h.push_back("T_" + std::to_string(p));
  return h;
}

void append(std::vector<std::string>& a, const std::vector<std::string>& b) { a.insert(a.end(), b.begin(), b.end()); }

size_t workers_of(const json& c, size_t cli) {
  if (cli) return cli;
  if (c.contains("workers")) return c["workers"].get<size_t>();
  return default_workers();
}

struct Experiment {
  std::string kind;
  json config;
  uint64_t seed = 0;
  bool timing = false;
  size_t workers = 0;
};

std::string run_asymptotics(const Experiment& e, bool volume_only) {
  const json& c = e.config;
  QuadraticFormS q = io::form_from_json(c.at("form"));
  SInterval I = io::interval_from_json(c.at("interval"));
  Region R = io::region_from_json(c.value("region", json()));
  auto Ts = times_of(c);
  size_t samples = c.value("samples", size_t(4000));
  size_t workers = workers_of(c, e.workers);
  auto primes = q.primes();
  std::vector<std::string> h = time_header(primes);
  if (volume_only)
    append(h, {"V", "V_stderr", "lambda_pred", "ratio", "ratio_stderr", "wall_ms", "status"});
  else
    append(h, {"N", "V", "lambda_pred", "ratio", "undecided", "wall_ms", "status"});
  std::string out = io::csv_row(h);
  if (volume_only) {
    for (const auto& T : Ts) {
      auto row = time_fields(T, primes);
      auto t0 = std::chrono::steady_clock::now();
      try {
        auto v = volume_V(q, I, R, T, samples, e.seed, workers);
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        append(row, {io::fmt(v.value), io::fmt(v.stderr_), io::fmt(v.prediction), io::fmt(v.ratio), io::fmt(v.ratio_stderr),
                     e.timing ? io::fmt(ms) : "", "ok"});
      } catch (const Error& err) {
        append(row, {"", "", "", "", "", "", err.what()});
      }
      out += io::csv_row(row);
    }
    return out;
  }
  auto reports = asymptotics_experiment(q, I, R, Ts, samples, e.seed, workers);
  for (const auto& r : reports) {
    auto row = time_fields(r.T, primes);
    if (r.error.empty())
      append(row, {std::to_string(r.N), io::fmt(r.V), io::fmt(r.prediction), io::fmt(r.ratio), std::to_string(r.undecided),
                   e.timing ? io::fmt(r.wall_ms) : "", "ok"});
    else
      append(row, {"", "", "", "", "", "", r.error});
    out += io::csv_row(row);
  }
  return out;
}

std::string run_counterexample(const Experiment& e) {
  const json& c = e.config;
  Rational alpha = io::rational_of(c.value("alpha", json("1")), "alpha");
  double eps = c.value("epsilon", 0.1);
  auto Ts = times_of(c);
  std::map<int64_t, Int> units;
  if (c.contains("units"))
    for (const auto& [k, v] : c["units"].items()) units[io::prime_of(k)] = Int(io::rational_of(v, "unit"));
  std::set<int64_t> ps;
  for (const auto& T : Ts)
    for (const auto& [p, _] : T.n) ps.insert(p);
  std::vector<int64_t> primes(ps.begin(), ps.end());
  auto h = time_header(primes);
  append(h, {"beta_inf_sq", "N", "floor", "family_floor", "threshold", "constructed", "condition_failures", "undecided", "wall_ms", "status"});
  std::string out = io::csv_row(h);
  for (const auto& T : Ts) {
    auto t0 = std::chrono::steady_clock::now();
    auto tab = counterexample_experiment(alpha, eps, {T}, units, workers_of(c, e.workers));
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const auto& r = tab.rows.at(0);
    auto row = time_fields(T, primes);
    if (r.error.empty())
      append(row, {to_string(r.beta.inf_sq), std::to_string(r.N), std::to_string(r.floor),
                   std::to_string(r.family_floor), io::fmt(r.threshold),
                   std::to_string(r.constructed), std::to_string(r.condition_failures), std::to_string(r.undecided),
                   e.timing ? io::fmt(ms) : "", "ok"});
    else
      append(row, {"", "", "", "", io::fmt(r.threshold), "", "", "", "", r.error});
    out += io::csv_row(row);
  }
  return out;
}

std::string run_experiment(const Experiment& e) {
  if (e.kind == "asymptotics") return run_asymptotics(e, false);
  if (e.kind == "volume-sweep") return run_asymptotics(e, true);
  if (e.kind == "counterexample") return run_counterexample(e);
  throw io::SchemaError("unknown experiment " + e.kind);
}

void write_outputs(const Experiment& e, const Inputs& in, const std::string& out_path, const std::string& csv) {
  io::write_file(out_path, csv);
  json m;
  m["version"] = kVersion;
  m["experiment"] = e.kind;
  m["config"] = e.config;
  m["seed"] = e.seed;
  m["timing"] = e.timing;
  if (e.workers) m["workers"] = e.workers;
  m["inputs"] = json::object();
  for (const auto& [p, h] : in.files) m["inputs"][p] = h;
  m["output"] = out_path;
  m["output_sha256"] = sha256_hex(csv);
  io::write_file(out_path + ".manifest.json", m.dump(2) + "\n");
}

QuadraticFormS load_form(const std::string& path) { return io::form_from_json(io::load_json(path)); }

json invariants_json(const Invariants& v) {
  return {{"rank", v.rank}, {"disc_parity", v.disc_parity}, {"disc_residue", v.disc_residue}, {"hasse", v.hasse}};
}

int run(int argc, char** argv) {
  CLI::App app{"S-arithmetic quadratic form counting"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string form_path, interval_path, region_path, lattice_path, time_str, vector_str, out_path, config_path,
      manifest_path;
  int64_t place = 0, precision = 20;
  uint64_t seed = 0;
  size_t samples = 4000, workers = 0;
  bool timing = false;

  auto* classify = app.add_subcommand("classify", "local invariants of every place");
  classify->add_option("--form", form_path, "form JSON")->required();

  auto* standardize = app.add_subcommand("standardize", "standard form at a finite place");
  standardize->add_option("--form", form_path, "form JSON")->required();
  standardize->add_option("--place", place, "odd prime")->required();
  standardize->add_option("--precision", precision, "p-adic precision");

  auto* witt = app.add_subcommand("witt-lift", "element of K_p mapping e1 to a vector");
  witt->add_option("--form", form_path, "form JSON")->required();
  witt->add_option("--place", place, "odd prime")->required();
  witt->add_option("--vector", vector_str, "comma separated target")->required();
  witt->add_option("--precision", precision, "p-adic precision");

  auto* alpha_cmd = app.add_subcommand("alpha", "alpha of an S-lattice");
  alpha_cmd->add_option("--lattice", lattice_path, "lattice JSON")->required();

  auto* project = app.add_subcommand("project", "real lattice of an S-lattice");
  project->add_option("--lattice", lattice_path, "lattice JSON")->required();

  auto* lambda_cmd = app.add_subcommand("lambda", "asymptotic constants");
  lambda_cmd->add_option("--form", form_path, "form JSON")->required();
  lambda_cmd->add_option("--region", region_path, "region JSON");
  lambda_cmd->add_option("--seed", seed, "Monte Carlo seed")->required();
  lambda_cmd->add_option("--samples", samples, "direction samples");

  auto* count = app.add_subcommand("count", "exact count N(T)");
  count->add_option("--form", form_path, "form JSON")->required();
  count->add_option("--interval", interval_path, "interval JSON")->required();
  count->add_option("--region", region_path, "region JSON");
  count->add_option("--T", time_str, "S-time, e.g. inf=20,5=5")->required();
  count->add_option("--workers", workers, "threads");

  auto* experiment = app.add_subcommand("experiment", "sweeps written as CSV");
  experiment->require_subcommand(1);
  std::string exp_kind;
  for (const char* name : {"asymptotics", "counterexample", "volume-sweep"}) {
    auto* sub = experiment->add_subcommand(name, std::string(name) + " sweep");
    sub->add_option("--config", config_path, "sweep JSON")->required();
    sub->add_option("--out", out_path, "CSV path")->required();
    auto* s = sub->add_option("--seed", seed, "Monte Carlo seed");
    if (std::string(name) != "counterexample") s->required();
    sub->add_option("--workers", workers, "threads");
    sub->add_flag("--timing", timing, "fill the wall_ms column");
    sub->callback([&exp_kind, name] { exp_kind = name; });
  }

  auto* rerun = app.add_subcommand("rerun", "replay an experiment from its manifest");
  rerun->add_option("--manifest", manifest_path, "manifest JSON")->required();
  rerun->add_option("--out", out_path, "CSV path, defaults to the recorded one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*classify) {
    auto q = load_form(form_path);
    json j;
    auto sig = signature(q.inf);
    j["n"] = q.n;
    j["inf"] = {{"signature", {sig.pos, sig.neg}}, {"exact", q.inf.exact}, {"isotropic", sig.pos > 0 && sig.neg > 0}};
    for (const auto& [p, qp] : q.finite) {
      auto v = invariants_json(invariants(qp));
      v["isotropic"] = is_isotropic(qp);
      j[std::to_string(p)] = v;
    }
    j["exceptional"] = is_exceptional(q);
    emit(j);
  } else if (*standardize) {
    auto q = load_form(form_path);
    auto it = q.finite.find(place);
    if (it == q.finite.end()) throw io::SchemaError("place not in the form");
    auto sf = to_standard(it->second, precision);
    emit({{"p", sf.p},
          {"precision", sf.precision},
          {"coeffs", io::vector_to_json(sf.coeffs)},
          {"g", io::matrix_to_json(sf.g)},
          {"split_warning", sf.split_warning}});
  } else if (*witt) {
    auto q = load_form(form_path);
    auto it = q.finite.find(place);
    if (it == q.finite.end()) throw io::SchemaError("place not in the form");
    auto v = io::vector_from_string(vector_str);
    if (v.size() != q.n) throw io::SchemaError("vector has the wrong length");
    auto k = lift_isometry(it->second.gram, place, v, precision);
    auto chk = k.verify(v);
    json m = json::array();
    for (const auto& r : k.matrix) {
      json row = json::array();
      for (const auto& x : r) row.push_back(x.get_str());
      m.push_back(row);
    }
    emit({{"p", k.p},
          {"precision", k.precision},
          {"matrix", m},
          {"check",
           {{"first_column", chk.first_column}, {"gram", chk.gram}, {"det", chk.det}, {"integral", chk.integral}}}});
    if (!chk.ok()) return 4;
  } else if (*alpha_cmd) {
    auto L = io::lattice_from_json(io::load_json(lattice_path));
    auto a = alpha(L);
    json per = json::array();
    for (size_t i = 1; i <= L.n(); ++i) per.push_back(io::fmt(alpha_i(L, i).value));
    emit({{"alpha", io::fmt(a.value)}, {"alpha_sq", to_string(a.alpha_sq)}, {"argmax_dim", a.argmax_dim}, {"alpha_i", per}});
  } else if (*project) {
    auto L = io::lattice_from_json(io::load_json(lattice_path));
    emit({{"basis", io::matrix_to_json(project_to_real(L))}});
  } else if (*lambda_cmd) {
    auto q = load_form(form_path);
    Region R = region_path.empty() ? Region{} : io::region_from_json(io::load_json(region_path));
    auto L = lambda_all(q, R, samples, seed);
    json fin = json::object();
    for (const auto& [p, lp] : L.finite)
      fin[std::to_string(p)] = {{"shell", to_string(lp.shell)}, {"ball", to_string(lp.ball)}, {"value", to_string(lp.value)}};
    emit({{"inf", {{"value", io::fmt(L.inf.value)}, {"stderr", io::fmt(L.inf.stderr_)}, {"samples", L.inf.samples}}},
          {"finite", fin},
          {"product", io::fmt(L.product)},
          {"stderr", io::fmt(L.stderr_)},
          {"seed", seed}});
  } else if (*count) {
    auto q = load_form(form_path);
    auto I = io::interval_from_json(io::load_json(interval_path));
    Region R = region_path.empty() ? Region{} : io::region_from_json(io::load_json(region_path));
    auto T = io::time_from_string(time_str);
    auto c = count_N(q, I, R, T, workers ? workers : default_workers());
    emit({{"N", c.count},
          {"undecided", c.undecided},
          {"wall_ms", io::fmt(c.wall_ms)},
          {"plan", {{"D", to_string(c.plan.D)}, {"box", c.plan.box}, {"order", c.plan.order}, {"est_cost", io::fmt(c.plan.est_cost)}}}});
  } else if (*experiment) {
    Inputs in = load_config(config_path, {"form", "interval", "region"});
    Experiment e{exp_kind, in.config, seed, timing, workers};
    std::string csv = run_experiment(e);
    write_outputs(e, in, out_path, csv);
  } else if (*rerun) {
    json m = io::load_json(manifest_path);
    Experiment e;
    try {
      e.kind = m.at("experiment").get<std::string>();
      e.config = m.at("config");
      e.seed = m.at("seed").get<uint64_t>();
      e.timing = m.value("timing", false);
      e.workers = m.value("workers", size_t(0));
      if (out_path.empty()) out_path = m.at("output").get<std::string>();
    } catch (const json::exception& ex) {
      throw io::SchemaError(std::string("manifest: ") + ex.what());
    }
    std::string csv = run_experiment(e);
    io::write_file(out_path, csv);
    bool same = sha256_hex(csv) == m.value("output_sha256", "");
    emit({{"output", out_path}, {"identical", same}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const io::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
