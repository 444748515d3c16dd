#include "shadowlab/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "shadowlab/features.hpp"
#include "shadowlab/fermion.hpp"
#include "shadowlab/io.hpp"
#include "shadowlab/ml.hpp"
#include "shadowlab/phases.hpp"
#include "shadowlab/rng.hpp"
#include "shadowlab/shadows.hpp"

namespace shadowlab::harness {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string content_hash(const std::string& data) { return hex64(fnv1a(data)); }

// ---------------------------------------------------------------- defaults

json noise_defaults(double p_single, double p_two, double p_m) {
  return {{"p_single", p_single}, {"p_two", p_two}, {"p_m", p_m}, {"p_m10", nullptr}, {"p_global", 0.0}};
}

json kernel_defaults() { return {{"tau", 1.0}, {"gamma", 1.0}, {"variant", "off_diagonal"}}; }

json defaults_for(Experiment e) {
  json j;
  j["experiment"] = to_string(e);
  j["seed"] = 1;
  j["output_dir"] = "out";
  switch (e) {
    case Experiment::predict_ground_state:
      j["n"] = 12;
      j["n_train"] = 200;
      j["n_data_sweep"] = {25, 50, 100, 200};
      j["n_validation"] = 100;
      j["n_test"] = 1000;
      j["x_range"] = {0.0, 2.0};
      j["shots"] = 20000;
      j["trajectories"] = 64;
      j["noise"] = noise_defaults(0.001, 0.01, 0.01);
      j["mitigation"] = {{"post_select", true}, {"mcweeny", true}, {"recompile", true}};
      j["compare_raw"] = true;
      j["kernels"] = {"gaussian", "dirichlet"};
      j["lambda_grid"] = ml::kLambdaGrid;
      j["ssh_v"] = 1.0;
      j["ssh_w"] = {0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75};
      break;
    case Experiment::classify_spt:
      j["n"] = 10;
      j["T"] = 100;
      j["symmetries"] = {"z2xz2", "trs", "none"};
      j["layers"] = {{"z2xz2", 2}, {"trs", 2}, {"none", 16}};
      j["train_per_class"] = 10;
      j["test_per_class"] = 10;
      j["repetitions"] = 10;
      j["svm_c"] = 1.0;
      j["alpha_rule"] = "scale";
      j["kernel"] = kernel_defaults();
      j["center"] = true;
      j["sop_lengths"] = {2, 4, 6, 8};
      j["sop_samples"] = 10;
      j["hci"] = {{"enabled", true},
                  {"j", 1.0},
                  {"points", 40},
                  {"h1_range", {0.0, 1.6}},
                  {"h2_range", {-0.8, 1.6}},
                  {"margin", 0.025},
                  {"train_per_class", 20},
                  {"sop_threshold", nullptr},
                  {"grid", {9, 9}}};
      break;
    case Experiment::classify_topo:
      j["d_code"] = 3;
      j["T"] = 300;
      j["per_class"] = 10;
      j["d_lu"] = {0, 1, 2, 3};
      j["control"] = true;
      j["kernel"] = kernel_defaults();
      j["center"] = true;
      break;
    case Experiment::extract_classifier:
      j["layers"] = 2;
      j["subsystem"] = features::default_subsystem();
      j["train_per_class"] = 10;
      j["shots_per_setting"] = 50000;
      j["calibration_shots"] = 50000;
      j["readout"] = {{"p_m", 0.02}, {"p_m10", 0.04}};
      j["svm_c"] = 1.0;
      j["test_instances"] = 100;
      j["test_per_phase"] = 3000;
      j["epsilon"] = 0.1;
      break;
  }
  return j;
}

// ---------------------------------------------------------------- merging

bool same_kind(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_number();
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

void merge_into(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("'" + prefix + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      // Layer counts are keyed by symmetry name.
      if (prefix == "layers" && it.value().is_number_integer()) {
        base[it.key()] = it.value();
        continue;
      }
      throw ConfigError("unknown config key '" + key + "'");
    }
    json& slot = base[it.key()];
    if (!same_kind(slot, it.value())) throw ConfigError("config key '" + key + "' has the wrong type");
    if (slot.is_object())
      merge_into(slot, it.value(), key);
    else
      slot = it.value();
  }
}

// ---------------------------------------------------------------- typed access

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

int get_int(const json& j, const char* key, int lo, int hi) {
  const auto& v = j.at(key);
  require(v.is_number_integer(), std::string("'") + key + "' must be an integer");
  const auto x = v.get<long long>();
  require(x >= lo && x <= hi,
          std::string("'") + key + "' must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(x);
}

double get_double(const json& j, const char* key, double lo, double hi) {
  const double x = j.at(key).get<double>();
  require(std::isfinite(x) && x >= lo && x <= hi, std::string("'") + key + "' is out of range");
  return x;
}

std::vector<double> get_doubles(const json& j, const char* key) {
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    require(v.is_number(), std::string("'") + key + "' must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<int> get_ints(const json& j, const char* key) {
  std::vector<int> out;
  for (const auto& v : j.at(key)) {
    require(v.is_number_integer(), std::string("'") + key + "' must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

sim::NoiseModel noise_from(const json& j) {
  sim::NoiseModel m;
  if (j.contains("p_single")) m.p_single = j.at("p_single").get<double>();
  if (j.contains("p_two")) m.p_two = j.at("p_two").get<double>();
  if (j.contains("p_m")) m.p_m = j.at("p_m").get<double>();
  if (j.contains("p_global")) m.p_global = j.at("p_global").get<double>();
  if (j.contains("p_m10") && !j.at("p_m10").is_null()) m.p_m10 = j.at("p_m10").get<double>();
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
  return m;
}

shadows::KernelVariant variant_from(const json& k) {
  const auto v = k.at("variant").get<std::string>();
  if (v == "off_diagonal") return shadows::KernelVariant::off_diagonal;
  if (v == "full") return shadows::KernelVariant::full;
  throw ConfigError("kernel.variant must be 'off_diagonal' or 'full'");
}

void validate_kernel(const json& k) {
  get_double(k, "tau", 1e-12, 1e6);
  get_double(k, "gamma", 1e-12, 1e6);
  variant_from(k);
}

void validate_config(const json& j, Experiment e) {
  require(j.at("seed").is_number_unsigned() || (j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0),
          "'seed' must be a non-negative integer");
  switch (e) {
    case Experiment::predict_ground_state: {
      const int n = get_int(j, "n", 2, 16);
      const int n_train = get_int(j, "n_train", 1, 100000);
      for (int v : get_ints(j, "n_data_sweep")) require(v >= 1 && v <= n_train, "'n_data_sweep' entries must lie in [1, n_train]");
      require(!j.at("n_data_sweep").empty(), "'n_data_sweep' must not be empty");
      get_int(j, "n_validation", 1, 100000);
      get_int(j, "n_test", 1, 1000000);
      const auto xr = get_doubles(j, "x_range");
      require(xr.size() == 2 && xr[0] < xr[1], "'x_range' must be [lo, hi] with lo < hi");
      get_int(j, "shots", 1, 1000000000);
      get_int(j, "trajectories", 1, 100000);
      noise_from(j.at("noise"));
      for (const auto& k : j.at("kernels")) {
        require(k.is_string(), "'kernels' must hold names");
        const auto name = k.get<std::string>();
        require(name == "gaussian" || name == "dirichlet", "kernel must be 'gaussian' or 'dirichlet'");
      }
      require(!j.at("kernels").empty(), "'kernels' must not be empty");
      const auto grid = get_doubles(j, "lambda_grid");
      require(!grid.empty(), "'lambda_grid' must not be empty");
      for (double l : grid) require(l > 0.0 && std::isfinite(l), "lambda values must be positive");
      get_double(j, "ssh_v", -100.0, 100.0);
      get_doubles(j, "ssh_w");
      require(n % 2 == 0, "'n' must be even for the SSH chain");
      break;
    }
    case Experiment::classify_spt: {
      const int n = get_int(j, "n", 4, 14);
      require(n % 2 == 0, "'n' must be even");
      get_int(j, "T", 2, 100000);
      require(!j.at("symmetries").empty(), "'symmetries' must not be empty");
      for (const auto& s : j.at("symmetries")) {
        require(s.is_string(), "'symmetries' must hold names");
        try {
          phases::symmetry_from_string(s.get<std::string>());
        } catch (const std::exception&) {
          throw ConfigError("unknown symmetry '" + s.get<std::string>() + "'");
        }
        require(j.at("layers").contains(s.get<std::string>()), "no layer count for '" + s.get<std::string>() + "'");
      }
      for (auto it = j.at("layers").begin(); it != j.at("layers").end(); ++it)
        require(it.value().is_number_integer() && it.value().get<int>() >= 0, "layer counts must be non-negative");
      get_int(j, "train_per_class", 2, 10000);
      get_int(j, "test_per_class", 1, 10000);
      get_int(j, "repetitions", 1, 1000);
      get_double(j, "svm_c", 1e-12, 1e12);
      const auto rule = j.at("alpha_rule").get<std::string>();
      require(rule == "scale" || rule == "literal", "'alpha_rule' must be 'scale' or 'literal'");
      validate_kernel(j.at("kernel"));
      for (int l : get_ints(j, "sop_lengths")) require(l >= 2 && l % 2 == 0 && l < n, "SOP lengths must be even and below n");
      get_int(j, "sop_samples", 1, 10000);
      const auto& h = j.at("hci");
      get_double(h, "j", 1e-6, 100.0);
      get_int(h, "points", 1, 10000);
      const auto h1 = get_doubles(h, "h1_range"), h2 = get_doubles(h, "h2_range");
      require(h1.size() == 2 && h1[0] < h1[1] && h2.size() == 2 && h2[0] < h2[1], "hci ranges must be [lo, hi]");
      get_double(h, "margin", 0.0, 10.0);
      get_int(h, "train_per_class", 2, 10000);
      if (!h.at("sop_threshold").is_null()) get_double(h, "sop_threshold", -1.0, 1.0);
      const auto grid = get_ints(h, "grid");
      require(grid.size() == 2 && grid[0] >= 0 && grid[1] >= 0, "hci.grid must be [n_h1, n_h2]");
      break;
    }
    case Experiment::classify_topo: {
      const int d = get_int(j, "d_code", 2, 3);
      (void)d;
      get_int(j, "T", 2, 100000);
      get_int(j, "per_class", 2, 10000);
      for (int v : get_ints(j, "d_lu")) require(v >= 0 && v <= 5, "'d_lu' entries must lie in [0, 5]");
      require(!j.at("d_lu").empty(), "'d_lu' must not be empty");
      validate_kernel(j.at("kernel"));
      break;
    }
    case Experiment::extract_classifier: {
      get_int(j, "layers", 0, 5);
      const auto sub = get_ints(j, "subsystem");
      require(sub.size() == 4, "'subsystem' must list four qubits");
      for (int q : sub) require(q >= 0 && q < features::kPatchQubits, "subsystem qubits must lie in [0, 8]");
      require(std::set<int>(sub.begin(), sub.end()).size() == 4, "subsystem qubits must be distinct");
      get_int(j, "train_per_class", 1, 100000);
      get_int(j, "shots_per_setting", 1, 1000000000);
      get_int(j, "calibration_shots", 1, 1000000000);
      noise_from(j.at("readout"));
      get_double(j, "svm_c", 1e-12, 1e12);
      get_int(j, "test_instances", 1, 100000);
      get_int(j, "test_per_phase", 1, 10000000);
      get_double(j, "epsilon", 0.0, 100.0);
      break;
    }
  }
}

// ---------------------------------------------------------------- CSV tables

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Table {
 public:
  Table(std::vector<std::string> columns, std::string hash, std::uint64_t seed)
      : hash_(std::move(hash)), seed_(seed) {
    os_ << "config_hash,seed";
    for (const auto& c : columns) os_ << "," << c;
    os_ << "\n";
  }
  template <typename... Args>
  void row(const Args&... values) {
    os_ << hash_ << "," << seed_;
    ((os_ << "," << cell(values)), ...);
    os_ << "\n";
  }
  std::string str() const { return os_.str(); }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  std::string hash_;
  std::uint64_t seed_;
  std::ostringstream os_;
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

// ---------------------------------------------------------------- stage runner

struct Context {
  const ExperimentConfig& config;
  json cfg;
  fs::path out;
  StageRecord* record = nullptr;

  std::uint64_t seed(const std::string& tag, std::uint64_t index = 0) const {
    return derive_seed(record->seed, tag, index);
  }
  std::string hash() const { return config.hash_hex(); }

  void write(const std::string& rel, const std::string& contents) {
    io::write_file_atomic((out / rel).string(), contents);
    record->artifacts.push_back({rel, content_hash(contents)});
  }
  // Records files written by library helpers.
  void record_tree(const std::string& rel_dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(out / rel_dir))
      if (e.is_regular_file() && e.path().extension() != ".tmp") files.push_back(fs::relative(e.path(), out).string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) record->artifacts.push_back({f, content_hash(io::read_file((out / f).string()))});
  }
  std::string read(const std::string& rel) const {
    const auto p = out / rel;
    if (!fs::exists(p)) throw std::runtime_error("missing artifact " + rel);
    return io::read_file(p.string());
  }
};

struct Stage {
  std::string name;
  std::function<void(Context&)> run;
};

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd upper_triangle(const Eigen::MatrixXd& c) {
  const Eigen::Index n = c.rows();
  Eigen::VectorXd v(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) v(k++) = c(i, j);
  return v;
}

Eigen::Index upper_index(Eigen::Index n, Eigen::Index i, Eigen::Index j) {
  return i * n - i * (i - 1) / 2 + (j - i);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

// ---------------------------------------------------------------- ground state

Eigen::MatrixXd rows_of(const json& lines, const char* key) {
  const auto n = static_cast<Eigen::Index>(lines.size());
  const auto m = static_cast<Eigen::Index>(lines.at(0).at(key).size());
  Eigen::MatrixXd out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = lines.at(static_cast<std::size_t>(i)).at(key).get<std::vector<double>>();
    for (Eigen::Index k = 0; k < m; ++k) out(i, k) = v[static_cast<std::size_t>(k)];
  }
  return out;
}

json read_jsonl(const std::string& text) {
  json out = json::array();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

ml::RegressionDataset exact_dataset(int n, int count, double lo, double hi, std::uint64_t seed) {
  ml::RegressionDataset d;
  d.inputs.resize(count, n - 1);
  d.targets.resize(count, n * (n + 1) / 2);
  for (int i = 0; i < count; ++i) {
    const auto spec = fermion::HoppingSpec::uniform(n, derive_seed(seed, static_cast<std::uint64_t>(i)), lo, hi);
    for (int k = 0; k < n - 1; ++k) d.inputs(i, k) = spec.x[static_cast<std::size_t>(k)];
    d.targets.row(i) = upper_triangle(fermion::ground_correlation(fermion::build_hopping(spec)).correlation).transpose();
  }
  return d;
}

std::vector<Stage> ground_state_stages() {
  std::vector<Stage> stages;
  stages.push_back({"training-data", [](Context& ctx) {
    const auto& c = ctx.cfg;
    const int n = c["n"], n_train = c["n_train"];
    const auto xr = c["x_range"].get<std::vector<double>>();
    fermion::EstimateOptions opt;
    opt.shots = c["shots"].get<std::uint64_t>();
    opt.trajectories = c["trajectories"];
    opt.noise = noise_from(c["noise"]);
    opt.mitigation = {c["mitigation"]["post_select"], c["mitigation"]["mcweeny"], c["mitigation"]["recompile"]};
    fermion::EstimateOptions raw_opt = opt;
    raw_opt.mitigation = {false, false, false};
    const bool compare_raw = c["compare_raw"];

    std::vector<std::string> lines(static_cast<std::size_t>(n_train));
    std::vector<double> err_mit(static_cast<std::size_t>(n_train)), err_raw(static_cast<std::size_t>(n_train));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_train; ++i) {
      const auto spec = fermion::HoppingSpec::uniform(n, ctx.seed("x", static_cast<std::uint64_t>(i)), xr[0], xr[1]);
      const Eigen::MatrixXd exact = fermion::ground_correlation(fermion::build_hopping(spec)).correlation;
      const auto mit = fermion::estimate_correlation_matrix(spec, opt, ctx.seed("shots", static_cast<std::uint64_t>(i)));
      json line{{"x", spec.x}, {"exact", to_json(upper_triangle(exact))}, {"mitigated", to_json(upper_triangle(mit.c))}};
      if (compare_raw) {
        const auto raw = fermion::estimate_correlation_matrix(spec, raw_opt, ctx.seed("raw", static_cast<std::uint64_t>(i)));
        line["raw"] = to_json(upper_triangle(raw.c));
      }
      lines[static_cast<std::size_t>(i)] = line.dump();
    }
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    ctx.write("training.jsonl", text);
  }});

  stages.push_back({"regression", [](Context& ctx) {
    const auto& c = ctx.cfg;
    const int n = c["n"];
    const auto xr = c["x_range"].get<std::vector<double>>();
    const json lines = read_jsonl(ctx.read("training.jsonl"));
    ml::RegressionDataset train{rows_of(lines, "x"), rows_of(lines, "mitigated")};
    const Eigen::MatrixXd exact_train = rows_of(lines, "exact");
    json summary;
    summary["training_rmse"]["mitigated"] = ml::rmse(train.targets, exact_train);
    if (lines.at(0).contains("raw")) summary["training_rmse"]["raw"] = ml::rmse(rows_of(lines, "raw"), exact_train);

    const auto validation = exact_dataset(n, c["n_validation"], xr[0], xr[1], ctx.seed("validation"));
    const auto test = exact_dataset(n, c["n_test"], xr[0], xr[1], ctx.seed("test"));
    const auto grid = c["lambda_grid"].get<std::vector<double>>();
    const auto ws = c["ssh_w"].get<std::vector<double>>();
    const double v = c["ssh_v"];
    Eigen::MatrixXd ssh_inputs(static_cast<Eigen::Index>(ws.size()), n - 1);
    std::vector<double> ssh_exact;
    for (std::size_t k = 0; k < ws.size(); ++k) {
      const auto spec = fermion::HoppingSpec::ssh(n, v, ws[k]);
      for (int i = 0; i < n - 1; ++i) ssh_inputs(static_cast<Eigen::Index>(k), i) = spec.x[static_cast<std::size_t>(i)];
      ssh_exact.push_back(fermion::ground_correlation(fermion::build_hopping(spec)).correlation(0, n - 1));
    }
    summary["ssh"]["w"] = ws;
    summary["ssh"]["exact"] = ssh_exact;
    const Eigen::Index edge = upper_index(n, 0, n - 1);

    Table metrics({"run_id", "N_data", "kernel", "lambda", "rmse_train", "rmse_test"}, ctx.hash(), ctx.config.seed);
    Table ssh({"kernel", "w", "exact", "predicted"}, ctx.hash(), ctx.config.seed);
    const std::string run_id = ctx.hash() + "-" + std::to_string(ctx.config.seed);
    for (const auto& kname : c["kernels"]) {
      const std::string name = kname;
      json k;
      std::vector<double> log_n, inv_rmse;
      ml::KRRModel last;
      for (int n_data : c["n_data_sweep"].get<std::vector<int>>()) {
        const auto head = train.head(n_data);
        const ml::KernelSpec spec =
            name == "gaussian" ? ml::KernelSpec::gaussian(ml::gaussian_alpha(head.inputs)) : ml::KernelSpec::dirichlet();
        const auto sel = ml::select_lambda(head, validation, spec, grid);
        const auto model = ml::krr_fit(head, spec, sel.lambda);
        const double r_train = ml::rmse(model.predict(head.inputs), head.targets);
        const double r_test = ml::rmse(model.predict(test.inputs), test.targets);
        metrics.row(run_id, n_data, name, sel.lambda, r_train, r_test);
        k["n_data"].push_back(n_data);
        k["lambda"].push_back(sel.lambda);
        k["rmse_train"].push_back(r_train);
        k["rmse_test"].push_back(r_test);
        log_n.push_back(std::log(static_cast<double>(n_data)));
        inv_rmse.push_back(1.0 / r_test);
        last = model;
      }
      k["inverse_rmse_slope"] = slope(log_n, inv_rmse);
      const Eigen::MatrixXd pred = last.predict(ssh_inputs);
      std::vector<double> edge_pred;
      for (std::size_t i = 0; i < ws.size(); ++i) {
        edge_pred.push_back(pred(static_cast<Eigen::Index>(i), edge));
        ssh.row(name, ws[i], ssh_exact[i], edge_pred.back());
      }
      summary["ssh"]["predicted"][name] = edge_pred;
      summary["kernels"][name] = k;
      ctx.write("models/krr_" + name + ".json", last.to_json() + "\n");
    }
    ctx.write("metrics.csv", metrics.str());
    ctx.write("ssh.csv", ssh.str());
    ctx.write("regression.json", summary.dump(2) + "\n");
  }});

  stages.push_back({"report", [](Context& ctx) {
    json r = json::parse(ctx.read("regression.json"));
    r["experiment"] = to_string(Experiment::predict_ground_state);
    ctx.write("report.json", r.dump(2) + "\n");
  }});
  return stages;
}

// ---------------------------------------------------------------- SPT

struct Classification {
  double accuracy = 0.0;
  ml::PCAEmbedding pca;
  ml::SVMModel svm;
  Eigen::MatrixXd test_embedding;
  std::vector<int> predicted;
};

// Kernel PCA on the training Gram matrix, Gaussian SVM on the embedding, and
// out-of-sample projection of the test sets.
Classification classify_sets(const std::vector<shadows::ShadowSet>& train, const std::vector<int>& train_labels,
                             const std::vector<shadows::ShadowSet>& test, const std::vector<int>& test_labels,
                             const json& cfg) {
  const auto& k = cfg["kernel"];
  const double tau = k["tau"], gamma = k["gamma"];
  const auto variant = variant_from(k);
  const auto g_train = shadows::gram(train, tau, gamma, variant);
  Classification out;
  out.pca = ml::kernel_pca(g_train.normalized(), 2, cfg["center"]);
  Eigen::VectorXd self_test(static_cast<Eigen::Index>(test.size()));
  for (std::size_t i = 0; i < test.size(); ++i)
    self_test(static_cast<Eigen::Index>(i)) = shadows::shadow_kernel(test[i], test[i], tau, gamma, variant).log_value;
  const Eigen::MatrixXd cross = shadows::normalize_cross(shadows::cross_log_kernel(test, train, tau, gamma, variant),
                                                         self_test, g_train.log_k.diagonal());
  out.test_embedding = out.pca.project(cross);
  const double alpha = cfg["alpha_rule"] == "scale" ? ml::svm_alpha_scale(out.pca.embedding)
                                                    : ml::svm_alpha_literal(out.pca.embedding);
  out.svm = ml::svm_fit(out.pca.embedding, train_labels, alpha, cfg["svm_c"]);
  out.predicted = out.svm.predict(out.test_embedding);
  if (!test_labels.empty()) out.accuracy = ml::accuracy(out.predicted, test_labels);
  return out;
}

std::string spt_dir(const std::string& sym, int rep, const char* split) {
  return "data/spt/" + sym + "/rep" + std::to_string(rep) + "/" + split;
}

std::vector<Stage> spt_stages() {
  std::vector<Stage> stages;
  stages.push_back({"datasets", [](Context& ctx) {
    const auto& c = ctx.cfg;
    for (const auto& s : c["symmetries"]) {
      const std::string sym = s;
      for (int rep = 0; rep < c["repetitions"].get<int>(); ++rep) {
        for (const char* split : {"train", "test"}) {
          phases::SptConfig sc;
          sc.n = c["n"];
          sc.symmetry = phases::symmetry_from_string(sym);
          sc.layers = c["layers"][sym];
          sc.per_class = c[std::string(split) + "_per_class"];
          sc.T = c["T"].get<std::size_t>();
          sc.seed = ctx.seed(sym + "-" + split, static_cast<std::uint64_t>(rep));
          const auto dir = spt_dir(sym, rep, split);
          phases::save_dataset(phases::build_spt_dataset(sc), (ctx.out / dir).string());
          ctx.record_tree(dir);
        }
      }
    }
  }});

  stages.push_back({"classification", [](Context& ctx) {
    const auto& c = ctx.cfg;
    Table acc({"symmetry", "repetition", "layers", "accuracy", "svm_alpha", "svm_bias"}, ctx.hash(), ctx.config.seed);
    Table emb({"symmetry", "repetition", "split", "index", "label", "pc1", "pc2"}, ctx.hash(), ctx.config.seed);
    json summary;
    for (const auto& s : c["symmetries"]) {
      const std::string sym = s;
      std::vector<double> accs;
      for (int rep = 0; rep < c["repetitions"].get<int>(); ++rep) {
        const auto train = phases::load_dataset((ctx.out / spt_dir(sym, rep, "train")).string());
        const auto test = phases::load_dataset((ctx.out / spt_dir(sym, rep, "test")).string());
        const auto r = classify_sets(train.shadow_sets(), train.labels(), test.shadow_sets(), test.labels(), c);
        accs.push_back(r.accuracy);
        acc.row(sym, rep, c["layers"][sym].get<int>(), r.accuracy, r.svm.alpha, r.svm.bias);
        const auto tl = train.labels(), sl = test.labels();
        for (Eigen::Index i = 0; i < r.pca.embedding.rows(); ++i)
          emb.row(sym, rep, "train", static_cast<int>(i), tl[static_cast<std::size_t>(i)], r.pca.embedding(i, 0),
                  r.pca.embedding(i, 1));
        for (Eigen::Index i = 0; i < r.test_embedding.rows(); ++i)
          emb.row(sym, rep, "test", static_cast<int>(i), sl[static_cast<std::size_t>(i)], r.test_embedding(i, 0),
                  r.test_embedding(i, 1));
      }
      summary[sym] = {{"accuracy", accs}, {"mean", mean_of(accs)}, {"std", std_of(accs)},
                      {"layers", c["layers"][sym]}};
    }
    ctx.write("accuracy.csv", acc.str());
    ctx.write("embeddings.csv", emb.str());
    ctx.write("classification.json", summary.dump(2) + "\n");
  }});

  stages.push_back({"string-order", [](Context& ctx) {
    const auto& c = ctx.cfg;
    const int n = c["n"];
    const auto lengths = c["sop_lengths"].get<std::vector<int>>();
    const int samples = c["sop_samples"];
    Table t({"symmetry", "phase", "length", "mean_sop", "std_sop"}, ctx.hash(), ctx.config.seed);
    json summary;
    const auto cluster = phases::prepare_cluster(n);
    const auto plus = phases::prepare_product_x(n);
    for (const auto& s : c["symmetries"]) {
      const std::string sym = s;
      const auto symmetry = phases::symmetry_from_string(sym);
      for (const auto& [phase, base] : {std::pair{"spt", &cluster}, std::pair{"trivial", &plus}}) {
        for (int len : lengths) {
          std::vector<double> vals;
          for (int k = 0; k < samples; ++k) {
            Rng rng(ctx.seed(sym + "-" + phase, static_cast<std::uint64_t>(k)));
            sim::StateVector st = *base;
            sim::apply_circuit(st, phases::symmetric_random_circuit(n, symmetry, c["layers"][sym], rng));
            double acc = 0.0;
            for (int a = 0; a < n; ++a) acc += phases::sop(st, a, a + len);
            vals.push_back(acc / n);
          }
          t.row(sym, std::string(phase), len, mean_of(vals), std_of(vals));
          summary[sym][phase].push_back(mean_of(vals));
        }
      }
    }
    summary["lengths"] = lengths;
    ctx.write("sop.csv", t.str());
    ctx.write("sop.json", summary.dump(2) + "\n");
  }});

  stages.push_back({"cluster-ising", [](Context& ctx) {
    const auto& c = ctx.cfg;
    const auto& h = c["hci"];
    json summary;
    if (!h["enabled"].get<bool>()) {
      summary["enabled"] = false;
      ctx.write("hci.json", summary.dump(2) + "\n");
      return;
    }
    const int n = c["n"];
    const double jj = h["j"];
    const auto T = c["T"].get<std::size_t>();
    auto ground_sop = [&](double h1, double h2) {
      return phases::mean_long_sop(phases::cluster_ising_ground({n, jj, h1, h2}).state);
    };
    // The transition sits at h1 = J on the h2 = 0 line; the SOP there is
    // the finite-size threshold unless one is configured.
    const double threshold = h["sop_threshold"].is_null() ? ground_sop(jj, 0.0) : h["sop_threshold"].get<double>();
    auto label_of = [&](double sop_value) { return sop_value >= threshold ? phases::kOrdered : phases::kTrivial; };

    phases::SptConfig sc;
    sc.n = n;
    sc.symmetry = phases::Symmetry::z2xz2;
    sc.layers = c["layers"].contains("z2xz2") ? c["layers"]["z2xz2"].get<int>() : 2;
    sc.per_class = h["train_per_class"];
    sc.T = T;
    sc.seed = ctx.seed("train");
    const auto train = phases::build_spt_dataset(sc);
    phases::save_dataset(train, (ctx.out / "data/hci/train").string());
    ctx.record_tree("data/hci/train");

    const auto r1 = h["h1_range"].get<std::vector<double>>(), r2 = h["h2_range"].get<std::vector<double>>();
    const double margin = h["margin"];
    Rng rng(ctx.seed("points"));
    std::uniform_real_distribution<double> u1(r1[0], r1[1]), u2(r2[0], r2[1]);
    struct Point {
      double h1, h2, sop;
      int label;
    };
    std::vector<Point> points;
    int rejected = 0;
    const int wanted = h["points"];
    while (static_cast<int>(points.size()) < wanted) {
      const double a = u1(rng), b = u2(rng);
      const double sv = ground_sop(a, b);
      const int label = label_of(sv);
      bool near = false;
      for (int da = -1; da <= 1 && !near; ++da)
        for (int db = -1; db <= 1 && !near; ++db)
          if ((da || db) && label_of(ground_sop(a + da * margin, b + db * margin)) != label) near = true;
      if (near) {
        ++rejected;
        if (rejected > 100 * wanted) throw std::runtime_error("could not sample points away from the boundary");
        continue;
      }
      points.push_back({a, b, sv, label});
    }

    std::vector<std::optional<phases::PhaseEntry>> slots(points.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
      const auto& p = points[static_cast<std::size_t>(i)];
      slots[static_cast<std::size_t>(i)].emplace(
          phases::cluster_ising_entry({n, jj, p.h1, p.h2}, T, ctx.seed("shadows", static_cast<std::uint64_t>(i)), p.label));
    }
    phases::PhaseDataset sampled;
    for (auto& s : slots) sampled.entries.push_back(std::move(*s));
    phases::save_dataset(sampled, (ctx.out / "data/hci/points").string());
    ctx.record_tree("data/hci/points");

    const auto r = classify_sets(train.shadow_sets(), train.labels(), sampled.shadow_sets(), sampled.labels(), c);
    Table t({"h1", "h2", "sop", "label", "predicted", "pc1", "pc2"}, ctx.hash(), ctx.config.seed);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto e = static_cast<Eigen::Index>(i);
      t.row(points[i].h1, points[i].h2, points[i].sop, points[i].label, r.predicted[i], r.test_embedding(e, 0),
            r.test_embedding(e, 1));
    }
    ctx.write("hci_points.csv", t.str());

    const auto grid = h["grid"].get<std::vector<int>>();
    if (grid[0] > 0 && grid[1] > 0) {
      std::vector<std::pair<double, double>> coords;
      for (int a = 0; a < grid[0]; ++a)
        for (int b = 0; b < grid[1]; ++b)
          coords.emplace_back(grid[0] > 1 ? r1[0] + (r1[1] - r1[0]) * a / (grid[0] - 1) : r1[0],
                              grid[1] > 1 ? r2[0] + (r2[1] - r2[0]) * b / (grid[1] - 1) : r2[0]);
      std::vector<std::optional<shadows::ShadowSet>> sets(coords.size());
      std::vector<double> sops(coords.size());
#pragma omp parallel for schedule(dynamic)
      for (int i = 0; i < static_cast<int>(coords.size()); ++i) {
        const auto [a, b] = coords[static_cast<std::size_t>(i)];
        auto e = phases::cluster_ising_entry({n, jj, a, b}, T, ctx.seed("grid", static_cast<std::uint64_t>(i)),
                                             phases::kTrivial);
        sets[static_cast<std::size_t>(i)].emplace(std::move(e.shadows));
        sops[static_cast<std::size_t>(i)] = ground_sop(a, b);
      }
      std::vector<shadows::ShadowSet> grid_sets;
      for (auto& s : sets) grid_sets.push_back(std::move(*s));
      const auto g = classify_sets(train.shadow_sets(), train.labels(), grid_sets, {}, c);
      Table m({"h1", "h2", "sop", "label", "predicted"}, ctx.hash(), ctx.config.seed);
      for (std::size_t i = 0; i < coords.size(); ++i)
        m.row(coords[i].first, coords[i].second, sops[i], label_of(sops[i]), g.predicted[i]);
      ctx.write("hci_map.csv", m.str());
    }

    int ordered = 0;
    for (const auto& p : points) ordered += p.label == phases::kOrdered;
    summary = {{"enabled", true},   {"accuracy", r.accuracy}, {"points", points.size()}, {"ordered", ordered},
               {"rejected", rejected}, {"sop_threshold", threshold}};
    ctx.write("hci.json", summary.dump(2) + "\n");
  }});

  stages.push_back({"report", [](Context& ctx) {
    json r;
    r["experiment"] = to_string(Experiment::classify_spt);
    r["symmetries"] = json::parse(ctx.read("classification.json"));
    r["sop"] = json::parse(ctx.read("sop.json"));
    r["hci"] = json::parse(ctx.read("hci.json"));
    ctx.write("report.json", r.dump(2) + "\n");
  }});
  return stages;
}

// ---------------------------------------------------------------- topological

std::string topo_dir(bool control, int d_lu) {
  return std::string("data/topo/") + (control ? "control" : "topological") + "/dlu" + std::to_string(d_lu);
}

std::vector<Stage> topo_stages() {
  std::vector<Stage> stages;
  stages.push_back({"datasets", [](Context& ctx) {
    const auto& c = ctx.cfg;
    for (bool control : {false, true}) {
      if (control && !c["control"].get<bool>()) continue;
      for (int d : c["d_lu"].get<std::vector<int>>()) {
        phases::TopoConfig tc;
        tc.d_code = c["d_code"];
        tc.d_lu = d;
        tc.per_class = c["per_class"];
        tc.T = c["T"].get<std::size_t>();
        tc.control = control;
        tc.seed = ctx.seed(control ? "control" : "topological", static_cast<std::uint64_t>(d));
        const auto dir = topo_dir(control, d);
        phases::save_dataset(phases::build_topo_dataset(tc), (ctx.out / dir).string());
        ctx.record_tree(dir);
      }
    }
  }});

  stages.push_back({"projection", [](Context& ctx) {
    const auto& c = ctx.cfg;
    const auto& k = c["kernel"];
    Table proj({"variant", "d_lu", "index", "label", "pc1"}, ctx.hash(), ctx.config.seed);
    Table marg({"variant", "d_lu", "margin"}, ctx.hash(), ctx.config.seed);
    json summary;
    for (bool control : {false, true}) {
      if (control && !c["control"].get<bool>()) continue;
      const std::string variant = control ? "control" : "topological";
      for (int d : c["d_lu"].get<std::vector<int>>()) {
        const auto data = phases::load_dataset((ctx.out / topo_dir(control, d)).string());
        const auto g = shadows::gram(data.shadow_sets(), k["tau"], k["gamma"], variant_from(k));
        const auto pca = ml::kernel_pca(g.normalized(), 1, c["center"]);
        const auto labels = data.labels();
        double lo_o = INFINITY, hi_o = -INFINITY, lo_t = INFINITY, hi_t = -INFINITY;
        for (Eigen::Index i = 0; i < pca.embedding.rows(); ++i) {
          const double x = pca.embedding(i, 0);
          proj.row(variant, d, static_cast<int>(i), labels[static_cast<std::size_t>(i)], x);
          if (labels[static_cast<std::size_t>(i)] == phases::kOrdered) {
            lo_o = std::min(lo_o, x);
            hi_o = std::max(hi_o, x);
          } else {
            lo_t = std::min(lo_t, x);
            hi_t = std::max(hi_t, x);
          }
        }
        // Gap between the class intervals over the full extent; negative
        // values mean the classes overlap.
        const double extent = std::max(hi_o, hi_t) - std::min(lo_o, lo_t);
        const double gap = std::max(lo_o - hi_t, lo_t - hi_o);
        const double margin = extent > 0.0 ? gap / extent : 0.0;
        marg.row(variant, d, margin);
        summary[variant]["d_lu"].push_back(d);
        summary[variant]["margin"].push_back(margin);
      }
    }
    ctx.write("projections.csv", proj.str());
    ctx.write("margins.csv", marg.str());
    ctx.write("projection.json", summary.dump(2) + "\n");
  }});

  stages.push_back({"report", [](Context& ctx) {
    json r;
    r["experiment"] = to_string(Experiment::classify_topo);
    r["variants"] = json::parse(ctx.read("projection.json"));
    ctx.write("report.json", r.dump(2) + "\n");
  }});
  return stages;
}

// ---------------------------------------------------------------- features

std::vector<features::FeatureVector> read_features(const std::string& text, std::vector<int>& labels) {
  const auto rows = parse_csv(text);
  std::vector<features::FeatureVector> out;
  labels.clear();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != 2 + features::kFeatureCount + 1) throw std::runtime_error("malformed feature table");
    features::FeatureVector phi;
    for (int k = 0; k < features::kFeatureCount; ++k) phi(k) = std::stod(cells[static_cast<std::size_t>(2 + k)]);
    out.push_back(phi);
    labels.push_back(std::stoi(cells.back()));
  }
  return out;
}

std::string feature_table(const Context& ctx, const std::vector<features::FeatureVector>& phi,
                          const std::vector<int>& labels) {
  std::vector<std::string> cols;
  for (int k = 0; k < features::kFeatureCount; ++k) cols.push_back("S" + std::to_string(k));
  cols.push_back("label");
  Table t(cols, ctx.hash(), ctx.config.seed);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    std::ostringstream os;
    for (int k = 0; k < features::kFeatureCount; ++k) os << (k ? "," : "") << fmt(phi[i](k));
    t.row(os.str(), labels[i]);
  }
  return t.str();
}

std::vector<Stage> extract_stages() {
  std::vector<Stage> stages;
  stages.push_back({"calibration", [](Context& ctx) {
    Rng rng(ctx.seed("response"));
    const auto r = features::calibrate_response(noise_from(ctx.cfg["readout"]), ctx.cfg["calibration_shots"], rng);
    std::ostringstream os;
    for (int i = 0; i < features::kOutcomes; ++i)
      for (int j = 0; j < features::kOutcomes; ++j) os << fmt(r.r(i, j)) << (j + 1 < features::kOutcomes ? "," : "\n");
    ctx.write("response.csv", os.str());
  }});

  stages.push_back({"training-data", [](Context& ctx) {
    const auto& c = ctx.cfg;
    features::ResponseMatrix response;
    const auto rows = parse_csv(ctx.read("response.csv"));
    if (rows.size() != features::kOutcomes) throw std::runtime_error("malformed response matrix");
    for (int i = 0; i < features::kOutcomes; ++i)
      for (int j = 0; j < features::kOutcomes; ++j)
        response.r(i, j) = std::stod(rows[static_cast<std::size_t>(i)].at(static_cast<std::size_t>(j)));
    const auto sub = c["subsystem"].get<std::vector<int>>();
    const auto readout = noise_from(c["readout"]);
    const int count = 2 * c["train_per_class"].get<int>();
    std::vector<features::FeatureVector> raw(static_cast<std::size_t>(count)), mem(raw.size()), exact(raw.size());
    std::vector<int> labels(raw.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      labels[idx] = i % 2 == 0 ? phases::kOrdered : phases::kTrivial;
      Rng rng(ctx.seed("state", idx));
      const auto state = features::sample_patch_state(labels[idx], c["layers"], rng);
      const Eigen::MatrixXcd rho = features::reduced_density_matrix(state, sub);
      const auto data = features::sample_tomography(rho, c["shots_per_setting"], readout, rng);
      raw[idx] = features::feature_map(data);
      mem[idx] = features::feature_map(features::mitigate_tomography(data, response));
      exact[idx] = features::feature_map(rho);
    }
    ctx.write("features_raw.csv", feature_table(ctx, raw, labels));
    ctx.write("features_mem.csv", feature_table(ctx, mem, labels));
    ctx.write("features_exact.csv", feature_table(ctx, exact, labels));
  }});

  stages.push_back({"training", [](Context& ctx) {
    const double cc = ctx.cfg["svm_c"];
    std::vector<int> labels;
    const auto raw = read_features(ctx.read("features_raw.csv"), labels);
    const auto ml_raw = features::fit_linear_classifier(raw, labels, cc);
    const auto mem = read_features(ctx.read("features_mem.csv"), labels);
    const auto ml_mem = features::fit_linear_classifier(mem, labels, cc);
    ctx.write("classifiers/ml_mem.json", ml_mem.to_json() + "\n");
    ctx.write("classifiers/ml_raw.json", ml_raw.to_json() + "\n");
    ctx.write("classifiers/tee.json", features::tee_classifier().to_json() + "\n");
    json acc{{"ml_mem", ml_mem.training_accuracy}, {"ml_raw", ml_raw.training_accuracy}};
    ctx.write("training_accuracy.json", acc.dump(2) + "\n");
  }});

  stages.push_back({"evaluation", [](Context& ctx) {
    const auto& c = ctx.cfg;
    const std::vector<std::string> names = {"ml_mem", "ml_raw", "tee"};
    std::vector<features::LinearClassifier> clfs;
    for (const auto& n : names) clfs.push_back(features::LinearClassifier::from_json(ctx.read("classifiers/" + n + ".json")));
    const auto sub = c["subsystem"].get<std::vector<int>>();
    const int per_phase = c["test_per_phase"], layers = c["layers"];
    const std::uint64_t base = ctx.seed("test-states");
    const auto draw = [&](int inst) {
      features::TestSet set;
      for (int i = 0; i < 2 * per_phase; ++i) {
        const int label = i % 2 == 0 ? phases::kOrdered : phases::kTrivial;
        Rng rng(derive_seed(derive_seed(base, static_cast<std::uint64_t>(inst)), static_cast<std::uint64_t>(i)));
        set.features.push_back(features::feature_map(features::sample_patch_state(label, layers, rng), sub));
        set.labels.push_back(label);
      }
      return set;
    };
    const auto r = features::evaluate_classifiers(clfs, draw, c["test_instances"], c["epsilon"], ctx.seed("noise"));
    Table t({"instance", "classifier", "error"}, ctx.hash(), ctx.config.seed);
    json summary;
    for (std::size_t k = 0; k < names.size(); ++k) {
      for (std::size_t i = 0; i < r.errors[k].size(); ++i) t.row(i, names[k], r.errors[k][i]);
      const auto& w = clfs[k].w;
      summary[names[k]] = {{"mean_error", r.mean[k]}, {"std_error", r.stddev[k]},
                           {"w", std::vector<double>(w.data(), w.data() + w.size())}, {"w0", clfs[k].w0}};
    }
    ctx.write("errors.csv", t.str());
    ctx.write("evaluation.json", summary.dump(2) + "\n");
  }});

  stages.push_back({"report", [](Context& ctx) {
    json r;
    r["experiment"] = to_string(Experiment::extract_classifier);
    r["classifiers"] = json::parse(ctx.read("evaluation.json"));
    const auto acc = json::parse(ctx.read("training_accuracy.json"));
    for (auto it = acc.begin(); it != acc.end(); ++it) r["classifiers"][it.key()]["training_accuracy"] = it.value();
    ctx.write("report.json", r.dump(2) + "\n");
  }});
  return stages;
}

std::vector<Stage> stages_for(Experiment e) {
  switch (e) {
    case Experiment::predict_ground_state: return ground_state_stages();
    case Experiment::classify_spt: return spt_stages();
    case Experiment::classify_topo: return topo_stages();
    case Experiment::extract_classifier: return extract_stages();
  }
  throw std::logic_error("unknown experiment");
}

void check_artifacts(const fs::path& out, const std::vector<Artifact>& artifacts, const std::string& stage) {
  for (const auto& a : artifacts) {
    const auto p = out / a.path;
    if (!fs::exists(p)) throw StageError(stage, "missing artifact " + a.path);
    if (content_hash(io::read_file(p.string())) != a.fnv1a) throw StageError(stage, "artifact " + a.path + " differs");
  }
}

RunOutcome run_stages(const ExperimentConfig& config, const RunOptions& options, const RunManifest* previous) {
  const auto stages = stages_for(config.experiment);
  std::size_t first = 0;
  if (options.from_stage) {
    const auto it = std::find_if(stages.begin(), stages.end(), [&](const Stage& s) { return s.name == *options.from_stage; });
    if (it == stages.end()) throw ConfigError("unknown stage '" + *options.from_stage + "'");
    first = static_cast<std::size_t>(it - stages.begin());
  }

  const fs::path out(config.output_dir);
  fs::create_directories(out);
  RunManifest manifest;
  manifest.experiment = config.experiment;
  manifest.config_hash = config.hash_hex();
  manifest.config = config.canonical;
  manifest.output_dir = config.output_dir;

  RunManifest earlier;
  if (first > 0) {
    const auto path = out / "manifest.json";
    if (previous) {
      earlier = *previous;
    } else if (fs::exists(path)) {
      earlier = RunManifest::from_json(io::read_file(path.string()));
    } else {
      throw StageError(stages[first].name, "no manifest to resume from in " + out.string());
    }
    if (earlier.config_hash != manifest.config_hash)
      throw StageError(stages[first].name, "existing run was produced by a different config");
  }

  Context ctx{config, json::parse(config.canonical), out, nullptr};
  for (std::size_t s = 0; s < stages.size(); ++s) {
    StageRecord rec;
    rec.name = stages[s].name;
    rec.seed = derive_seed(config.seed, stages[s].name);
    if (s < first) {
      const auto it = std::find_if(earlier.stages.begin(), earlier.stages.end(),
                                   [&](const StageRecord& r) { return r.name == rec.name; });
      if (it == earlier.stages.end() || it->skipped)
        throw StageError(rec.name, "stage was not completed in the recorded run");
      check_artifacts(out, it->artifacts, rec.name);
      rec.artifacts = it->artifacts;
      rec.skipped = true;
      manifest.stages.push_back(rec);
      continue;
    }
    manifest.stages.push_back(rec);
    ctx.record = &manifest.stages.back();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      stages[s].run(ctx);
    } catch (const ConfigError&) {
      throw;
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      io::write_file_atomic((out / "manifest.json").string(), manifest.to_json());
      throw StageError(rec.name, e.what());
    }
    ctx.record->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::write_file_atomic((out / "manifest.json").string(), manifest.to_json());
  }
  manifest.complete = true;
  io::write_file_atomic((out / "manifest.json").string(), manifest.to_json());
  return {manifest, io::read_file((out / "report.json").string())};
}

}  // namespace

// ---------------------------------------------------------------- public API

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::predict_ground_state: return "predict-ground-state";
    case Experiment::classify_spt: return "classify-spt";
    case Experiment::classify_topo: return "classify-topo";
    case Experiment::extract_classifier: return "extract-classifier";
  }
  return "unknown";
}

Experiment experiment_from_string(const std::string& name) {
  for (auto e : {Experiment::predict_ground_state, Experiment::classify_spt, Experiment::classify_topo,
                 Experiment::extract_classifier})
    if (to_string(e) == name) return e;
  throw ConfigError("unknown experiment '" + name + "'");
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical); }
std::string ExperimentConfig::hash_hex() const { return hex64(hash()); }

ExperimentConfig parse_config(const std::string& json_text) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  if (!user.contains("experiment") || !user["experiment"].is_string()) throw ConfigError("config needs 'experiment'");
  const Experiment e = experiment_from_string(user["experiment"].get<std::string>());
  json merged = defaults_for(e);
  merge_into(merged, user, "");
  try {
    validate_config(merged, e);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("invalid config: ") + ex.what());
  }
  ExperimentConfig c;
  c.experiment = e;
  c.seed = merged["seed"].get<std::uint64_t>();
  c.output_dir = merged["output_dir"].get<std::string>();
  merged.erase("output_dir");
  c.canonical = merged.dump();
  return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  return parse_config(io::read_file(path));
}

std::string default_config(Experiment e) { return defaults_for(e).dump(2) + "\n"; }

std::string config_schema() {
  std::function<json(const json&)> schema_of = [&](const json& v) -> json {
    if (v.is_object()) {
      json s{{"type", "object"}, {"additionalProperties", false}};
      for (auto it = v.begin(); it != v.end(); ++it) s["properties"][it.key()] = schema_of(it.value());
      return s;
    }
    if (v.is_array()) return {{"type", "array"}};
    if (v.is_boolean()) return {{"type", "boolean"}};
    if (v.is_string()) return {{"type", "string"}};
    if (v.is_null()) return {{"type", {"number", "null"}}};
    if (v.is_number_integer()) return {{"type", "integer"}};
    return {{"type", "number"}};
  };
  json s{{"$schema", "https://json-schema.org/draft/2020-12/schema"}, {"title", "shadowlab experiment config"}};
  for (auto e : {Experiment::predict_ground_state, Experiment::classify_spt, Experiment::classify_topo,
                 Experiment::extract_classifier}) {
    json d = defaults_for(e);
    json sub = schema_of(d);
    sub["properties"]["experiment"] = {{"const", to_string(e)}};
    sub["required"] = {"experiment"};
    sub["default"] = d;
    s["oneOf"].push_back(sub);
  }
  return s.dump(2) + "\n";
}

std::string RunManifest::to_json() const {
  json j;
  j["code_version"] = code_version;
  j["experiment"] = harness::to_string(experiment);
  j["config_hash"] = config_hash;
  j["config"] = json::parse(config);
  j["output_dir"] = output_dir;
  j["complete"] = complete;
  j["stages"] = json::array();
  for (const auto& s : stages) {
    json a = json::array();
    for (const auto& art : s.artifacts) a.push_back({{"path", art.path}, {"fnv1a", art.fnv1a}});
    j["stages"].push_back(
        {{"name", s.name}, {"seed", s.seed}, {"seconds", s.seconds}, {"skipped", s.skipped}, {"artifacts", a}});
  }
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  RunManifest m;
  try {
    const auto j = json::parse(text);
    m.code_version = j.at("code_version").get<std::string>();
    m.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config").dump();
    m.output_dir = j.at("output_dir").get<std::string>();
    m.complete = j.at("complete").get<bool>();
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.seed = s.at("seed").get<std::uint64_t>();
      r.seconds = s.at("seconds").get<double>();
      r.skipped = s.at("skipped").get<bool>();
      for (const auto& a : s.at("artifacts")) r.artifacts.push_back({a.at("path").get<std::string>(), a.at("fnv1a").get<std::string>()});
      m.stages.push_back(std::move(r));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::vector<Artifact> RunManifest::artifacts() const {
  std::vector<Artifact> out;
  for (const auto& s : stages) out.insert(out.end(), s.artifacts.begin(), s.artifacts.end());
  return out;
}

std::vector<std::string> stage_names(Experiment e) {
  std::vector<std::string> out;
  for (const auto& s : stages_for(e)) out.push_back(s.name);
  return out;
}

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  return run_stages(config, options, nullptr);
}

RunOutcome replay(const std::string& manifest_path, const std::optional<std::string>& output_dir,
                  const RunOptions& options) {
  if (!fs::exists(manifest_path)) throw ConfigError("manifest not found: " + manifest_path);
  const RunManifest recorded = RunManifest::from_json(io::read_file(manifest_path));
  if (recorded.code_version != kCodeVersion)
    throw ConfigError("manifest was written by version " + recorded.code_version + ", this is " + kCodeVersion);
  if (!recorded.complete) throw ConfigError("manifest records an incomplete run");

  json cfg = json::parse(recorded.config);
  cfg["output_dir"] = output_dir.value_or(recorded.output_dir);
  ExperimentConfig config = parse_config(cfg.dump());
  if (config.hash_hex() != recorded.config_hash) throw ConfigError("config hash does not match the manifest");

  RunOutcome outcome = run_stages(config, options, &recorded);
  const fs::path out(config.output_dir);
  for (const auto& s : recorded.stages) check_artifacts(out, s.artifacts, s.name);
  return outcome;
}

}  // namespace shadowlab::harness
