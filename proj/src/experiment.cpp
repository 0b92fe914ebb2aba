#include "bqrnn/experiment.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bqrnn {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// Stream-id layout: data 1, split internal, qrnn seeds derived from 1000+ti,
// bqrnn chains 2000 + 16*ti + c, bqr chains 3000 + 16*ti + c.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kQrnnSeedBase = 1000;
constexpr std::uint64_t kBqrnnStreamBase = 2000;
constexpr std::uint64_t kBqrStreamBase = 3000;

std::string join_errors(const std::vector<ConfigError>& errors) {
  std::ostringstream os;
  os << "invalid configuration:";
  for (const ConfigError& e : errors) {
    os << "\n  " << e.field << ": " << e.message;
  }
  return os.str();
}

}  // namespace

ConfigValidationError::ConfigValidationError(std::vector<ConfigError> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

std::string output_root() {
  const char* root = std::getenv("BQRNN_OUTPUT_ROOT");
  return (root != nullptr && root[0] != '\0') ? root : ".";
}

namespace {

void read_string(const ordered_json& obj, const char* key,
                 const std::string& prefix, std::string& dst,
                 std::vector<ConfigError>& errors) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_string()) {
    errors.push_back({prefix + key, "expected a string"});
    return;
  }
  dst = obj.at(key).get<std::string>();
}

void read_bool(const ordered_json& obj, const char* key,
               const std::string& prefix, bool& dst,
               std::vector<ConfigError>& errors) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_boolean()) {
    errors.push_back({prefix + key, "expected a boolean"});
    return;
  }
  dst = obj.at(key).get<bool>();
}

void read_double(const ordered_json& obj, const char* key,
                 const std::string& prefix, double& dst,
                 std::vector<ConfigError>& errors) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) {
    errors.push_back({prefix + key, "expected a number"});
    return;
  }
  dst = obj.at(key).get<double>();
}

void read_indexval(const ordered_json& obj, const char* key,
                   const std::string& prefix, Index& dst,
                   std::vector<ConfigError>& errors) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number_integer()) {
    errors.push_back({prefix + key, "expected an integer"});
    return;
  }
  dst = obj.at(key).get<Index>();
}

void read_u64(const ordered_json& obj, const char* key,
              const std::string& prefix, std::uint64_t& dst,
              std::vector<ConfigError>& errors) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number_integer() ||
      (obj.at(key).is_number_integer() && obj.at(key).get<double>() < 0)) {
    errors.push_back({prefix + key, "expected a nonnegative integer"});
    return;
  }
  dst = obj.at(key).get<std::uint64_t>();
}

void check_known_keys(const ordered_json& obj, const std::string& prefix,
                      std::initializer_list<const char*> known,
                      std::vector<ConfigError>& errors) {
  for (const auto& item : obj.items()) {
    bool found = false;
    for (const char* k : known) {
      if (item.key() == k) {
        found = true;
        break;
      }
    }
    if (!found) {
      errors.push_back({prefix + item.key(), "unknown field"});
    }
  }
}

}  // namespace

ExperimentConfig parse_config_json(const std::string& text,
                                   std::vector<ConfigError>& errors) {
  ExperimentConfig cfg;
  ordered_json root = ordered_json::parse(text, nullptr, false);
  if (root.is_discarded()) {
    errors.push_back({"<document>", "malformed JSON"});
    return cfg;
  }
  if (!root.is_object()) {
    errors.push_back({"<document>", "top level must be a JSON object"});
    return cfg;
  }
  check_known_keys(root, "",
                   {"mode", "scenario", "noise", "n", "csv", "tau", "models",
                    "k", "priors", "chain", "qrnn", "split_fraction",
                    "standardize", "seed", "output_dir", "run_name"},
                   errors);
  read_string(root, "mode", "", cfg.mode, errors);
  read_string(root, "scenario", "", cfg.scenario, errors);
  read_string(root, "noise", "", cfg.noise, errors);
  read_indexval(root, "n", "", cfg.n, errors);
  if (root.contains("csv")) {
    if (!root.at("csv").is_object()) {
      errors.push_back({"csv", "expected an object"});
    } else {
      const ordered_json& csv = root.at("csv");
      check_known_keys(csv, "csv.", {"path", "target", "delimiter", "header"},
                       errors);
      read_string(csv, "path", "csv.", cfg.csv_path, errors);
      read_string(csv, "target", "csv.", cfg.csv_target, errors);
      read_string(csv, "delimiter", "csv.", cfg.csv_delimiter, errors);
      read_bool(csv, "header", "csv.", cfg.csv_header, errors);
    }
  }
  if (root.contains("tau")) {
    if (!root.at("tau").is_array()) {
      errors.push_back({"tau", "expected an array of numbers"});
    } else {
      cfg.tau.clear();
      for (const auto& t : root.at("tau")) {
        if (!t.is_number()) {
          errors.push_back({"tau", "expected an array of numbers"});
          break;
        }
        cfg.tau.push_back(t.get<double>());
      }
    }
  }
  if (root.contains("models")) {
    if (!root.at("models").is_array()) {
      errors.push_back({"models", "expected an array of strings"});
    } else {
      cfg.models.clear();
      for (const auto& m : root.at("models")) {
        if (!m.is_string()) {
          errors.push_back({"models", "expected an array of strings"});
          break;
        }
        cfg.models.push_back(m.get<std::string>());
      }
    }
  }
  read_indexval(root, "k", "", cfg.k, errors);
  if (root.contains("priors")) {
    if (!root.at("priors").is_object()) {
      errors.push_back({"priors", "expected an object"});
    } else {
      const ordered_json& pr = root.at("priors");
      check_known_keys(pr, "priors.", {"sigma0_sq", "sigma1_sq", "a", "b"},
                       errors);
      read_double(pr, "sigma0_sq", "priors.", cfg.sigma0_sq, errors);
      read_double(pr, "sigma1_sq", "priors.", cfg.sigma1_sq, errors);
      read_double(pr, "a", "priors.", cfg.prior_a, errors);
      read_double(pr, "b", "priors.", cfg.prior_b, errors);
    }
  }
  if (root.contains("chain")) {
    if (!root.at("chain").is_object()) {
      errors.push_back({"chain", "expected an object"});
    } else {
      const ordered_json& ch = root.at("chain");
      check_known_keys(
          ch, "chain.",
          {"n_iter", "burn_in_fraction", "thin", "mh_step_sd", "n_chains"},
          errors);
      read_indexval(ch, "n_iter", "chain.", cfg.n_iter, errors);
      read_double(ch, "burn_in_fraction", "chain.", cfg.burn_in_fraction,
                  errors);
      read_indexval(ch, "thin", "chain.", cfg.thin, errors);
      read_double(ch, "mh_step_sd", "chain.", cfg.mh_step_sd, errors);
      read_indexval(ch, "n_chains", "chain.", cfg.n_chains, errors);
    }
  }
  if (root.contains("qrnn")) {
    if (!root.at("qrnn").is_object()) {
      errors.push_back({"qrnn", "expected an object"});
    } else {
      const ordered_json& q = root.at("qrnn");
      check_known_keys(q, "qrnn.", {"epochs", "restarts"}, errors);
      read_indexval(q, "epochs", "qrnn.", cfg.qrnn_epochs, errors);
      read_indexval(q, "restarts", "qrnn.", cfg.qrnn_restarts, errors);
    }
  }
  read_double(root, "split_fraction", "", cfg.split_fraction, errors);
  read_bool(root, "standardize", "", cfg.standardize, errors);
  read_u64(root, "seed", "", cfg.seed, errors);
  read_string(root, "output_dir", "", cfg.output_dir, errors);
  read_string(root, "run_name", "", cfg.run_name, errors);
  return cfg;
}

ExperimentConfig load_config(const std::string& path,
                             std::vector<ConfigError>& errors) {
  std::ifstream file(path);
  if (!file) {
    errors.push_back({"<file>", "cannot open '" + path + "'"});
    return {};
  }
  std::ostringstream buffer;
  buffer << file.rdbuf();
  return parse_config_json(buffer.str(), errors);
}

std::vector<ConfigError> validate_config(const ExperimentConfig& cfg) {
  std::vector<ConfigError> errors;
  if (cfg.mode != "simulate" && cfg.mode != "csv") {
    errors.push_back({"mode", "must be 'simulate' or 'csv'"});
  }
  if (cfg.mode == "simulate") {
    if (cfg.scenario != "linear" && cfg.scenario != "polynomial") {
      errors.push_back({"scenario", "must be 'linear' or 'polynomial'"});
    }
    if (cfg.noise != "gaussian" && cfg.noise != "uniform" &&
        cfg.noise != "exponential") {
      errors.push_back(
          {"noise", "must be 'gaussian', 'uniform' or 'exponential'"});
    }
    if (cfg.n < 5) {
      errors.push_back({"n", "must be at least 5"});
    }
  } else if (cfg.mode == "csv") {
    if (cfg.csv_path.empty()) {
      errors.push_back({"csv.path", "required in csv mode"});
    } else if (!fs::exists(cfg.csv_path)) {
      errors.push_back({"csv.path", "file '" + cfg.csv_path + "' not found"});
    }
    if (cfg.csv_target.empty()) {
      errors.push_back({"csv.target", "required in csv mode"});
    }
    if (cfg.csv_delimiter.size() != 1) {
      errors.push_back({"csv.delimiter", "must be a single character"});
    }
  }
  if (cfg.tau.empty()) {
    errors.push_back({"tau", "must be nonempty"});
  }
  for (std::size_t i = 0; i < cfg.tau.size(); ++i) {
    if (!(cfg.tau[i] > 0.0 && cfg.tau[i] < 1.0)) {
      errors.push_back({"tau", "level " + std::to_string(cfg.tau[i]) +
                                   " must lie strictly inside (0,1)"});
    }
    if (i > 0 && !(cfg.tau[i] > cfg.tau[i - 1])) {
      errors.push_back({"tau", "levels must be strictly increasing"});
    }
  }
  if (cfg.models.empty()) {
    errors.push_back({"models", "must be nonempty"});
  }
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    const std::string& m = cfg.models[i];
    if (m != "qr" && m != "bqr" && m != "qrnn" && m != "bqrnn") {
      errors.push_back(
          {"models", "unknown model '" + m +
                         "' (expected qr, bqr, qrnn or bqrnn)"});
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (cfg.models[j] == m) {
        errors.push_back({"models", "duplicate model '" + m + "'"});
      }
    }
  }
  if (cfg.k < 1) errors.push_back({"k", "must be >= 1"});
  if (!(cfg.sigma0_sq > 0.0)) {
    errors.push_back({"priors.sigma0_sq", "must be positive"});
  }
  if (!(cfg.sigma1_sq > 0.0)) {
    errors.push_back({"priors.sigma1_sq", "must be positive"});
  }
  if (!(cfg.prior_a > 0.0)) errors.push_back({"priors.a", "must be positive"});
  if (!(cfg.prior_b > 0.0)) errors.push_back({"priors.b", "must be positive"});
  if (cfg.n_iter < 1) errors.push_back({"chain.n_iter", "must be >= 1"});
  if (!(cfg.burn_in_fraction >= 0.0 && cfg.burn_in_fraction < 1.0)) {
    errors.push_back({"chain.burn_in_fraction", "must lie in [0,1)"});
  }
  if (cfg.thin < 1) errors.push_back({"chain.thin", "must be >= 1"});
  if (!(cfg.mh_step_sd > 0.0)) {
    errors.push_back({"chain.mh_step_sd", "must be positive"});
  }
  if (cfg.n_chains < 1) errors.push_back({"chain.n_chains", "must be >= 1"});
  if (cfg.n_iter >= 1 && cfg.thin >= 1 && cfg.burn_in_fraction >= 0.0 &&
      cfg.burn_in_fraction < 1.0) {
    ChainConfig probe{cfg.n_iter, cfg.burn_in_fraction, cfg.thin, 0.01, 0, 1};
    if (probe.retained() < 2) {
      errors.push_back(
          {"chain", "fewer than 2 draws would be retained; raise n_iter or "
                    "lower burn_in_fraction/thin"});
    }
  }
  if (cfg.qrnn_epochs < 1) errors.push_back({"qrnn.epochs", "must be >= 1"});
  if (cfg.qrnn_restarts < 1) {
    errors.push_back({"qrnn.restarts", "must be >= 1"});
  }
  if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0)) {
    errors.push_back({"split_fraction", "must lie strictly inside (0,1)"});
  }
  if (cfg.output_dir.empty()) {
    errors.push_back({"output_dir", "must be nonempty"});
  }
  if (cfg.run_name.empty()) {
    errors.push_back({"run_name", "must be nonempty"});
  }
  return errors;
}

namespace {

ordered_json config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["mode"] = cfg.mode;
  j["scenario"] = cfg.scenario;
  j["noise"] = cfg.noise;
  j["n"] = cfg.n;
  j["csv"] = {{"path", cfg.csv_path},
              {"target", cfg.csv_target},
              {"delimiter", cfg.csv_delimiter},
              {"header", cfg.csv_header}};
  j["tau"] = cfg.tau;
  j["models"] = cfg.models;
  j["k"] = cfg.k;
  j["priors"] = {{"sigma0_sq", cfg.sigma0_sq},
                 {"sigma1_sq", cfg.sigma1_sq},
                 {"a", cfg.prior_a},
                 {"b", cfg.prior_b}};
  j["chain"] = {{"n_iter", cfg.n_iter},
                {"burn_in_fraction", cfg.burn_in_fraction},
                {"thin", cfg.thin},
                {"mh_step_sd", cfg.mh_step_sd},
                {"n_chains", cfg.n_chains}};
  j["qrnn"] = {{"epochs", cfg.qrnn_epochs}, {"restarts", cfg.qrnn_restarts}};
  j["split_fraction"] = cfg.split_fraction;
  j["standardize"] = cfg.standardize;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["run_name"] = cfg.run_name;
  return j;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error("cannot hash '" + path + "'");
  }
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (file.read(buf, sizeof(buf)) || file.gcount() > 0) {
    const std::streamsize got = file.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string tau_tag(double tau) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.3f", tau);
  return buf;
}

std::string make_run_dir(const ExperimentConfig& cfg) {
  fs::path base(cfg.output_dir);
  if (!base.is_absolute()) {
    base = fs::path(output_root()) / base;
  }
  fs::create_directories(base);
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  fs::path dir = base / (cfg.run_name + "-" + stamp);
  int suffix = 1;
  while (fs::exists(dir)) {
    dir = base / (cfg.run_name + "-" + stamp + "-" + std::to_string(suffix++));
  }
  fs::create_directories(dir / "fits");
  fs::create_directories(dir / "chains");
  return dir.string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream file(path);
  if (!file) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  file << text;
  if (!file) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

ordered_json eval_to_json(const ModelEval& ev) {
  ordered_json row;
  row["model"] = ev.model;
  row["tau"] = ev.tau;
  row["train_mcf"] = ev.train_mcf;
  row["test_mcf"] = ev.test_mcf;
  if (ev.has_oracle) {
    row["oracle"] = {{"train_mae", ev.train_oracle_mae},
                     {"test_mae", ev.test_oracle_mae}};
    if (ev.has_coverage) {
      row["oracle"]["test_coverage"] = ev.test_coverage;
    }
  }
  if (ev.has_diagnostics) {
    row["diagnostics"] = {{"accept_rates", ev.accept_rates},
                          {"ess_log_posterior", ev.ess_log_posterior},
                          {"trend_pvalue", ev.trend_pvalue}};
  }
  return row;
}

ModelEval eval_from_json(const ordered_json& row) {
  ModelEval ev;
  ev.model = row.at("model").get<std::string>();
  ev.tau = row.at("tau").get<double>();
  ev.train_mcf = row.at("train_mcf").get<double>();
  ev.test_mcf = row.at("test_mcf").get<double>();
  if (row.contains("oracle")) {
    ev.has_oracle = true;
    ev.train_oracle_mae = row.at("oracle").at("train_mae").get<double>();
    ev.test_oracle_mae = row.at("oracle").at("test_mae").get<double>();
    if (row.at("oracle").contains("test_coverage")) {
      ev.has_coverage = true;
      ev.test_coverage = row.at("oracle").at("test_coverage").get<double>();
    }
  }
  if (row.contains("diagnostics")) {
    ev.has_diagnostics = true;
    ev.accept_rates =
        row.at("diagnostics").at("accept_rates").get<std::vector<double>>();
    ev.ess_log_posterior =
        row.at("diagnostics").at("ess_log_posterior").get<double>();
    ev.trend_pvalue = row.at("diagnostics").at("trend_pvalue").get<double>();
  }
  return ev;
}

Matrix with_intercept_cols(const Matrix& x) {
  Matrix x1(x.rows(), x.cols() + 1);
  x1.col(0).setOnes();
  x1.rightCols(x.cols()) = x;
  return x1;
}

// Merge retained draws of several chains for pooled posterior summaries.
ChainOutput pool_chains(std::vector<ChainOutput> chains) {
  ChainOutput pooled = std::move(chains.front());
  for (std::size_t c = 1; c < chains.size(); ++c) {
    ChainOutput& ch = chains[c];
    const auto offset = static_cast<Index>(pooled.log_posterior_trace.size());
    for (std::size_t d = 0; d < ch.draws.size(); ++d) {
      pooled.draws.push_back(std::move(ch.draws[d]));
      pooled.draw_iterations.push_back(offset + ch.draw_iterations[d]);
    }
    pooled.log_posterior_trace.insert(pooled.log_posterior_trace.end(),
                                      ch.log_posterior_trace.begin(),
                                      ch.log_posterior_trace.end());
    for (std::size_t j = 0; j < pooled.accept_counts.size(); ++j) {
      pooled.accept_counts[j] += ch.accept_counts[j];
      pooled.proposal_counts[j] += ch.proposal_counts[j];
    }
  }
  return pooled;
}

Vector retained_log_posterior(const ChainOutput& chain) {
  Vector lp(static_cast<Index>(chain.draws.size()));
  for (std::size_t d = 0; d < chain.draws.size(); ++d) {
    lp(static_cast<Index>(d)) =
        chain.log_posterior_trace[static_cast<std::size_t>(
            chain.draw_iterations[d])];
  }
  return lp;
}

}  // namespace

std::string echo_config(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

EvalReport read_report(const std::string& run_dir) {
  std::ifstream file(run_dir + "/report.json");
  if (!file) {
    throw std::runtime_error("read_report: cannot open '" + run_dir +
                             "/report.json'");
  }
  ordered_json j = ordered_json::parse(file);
  EvalReport report;
  report.dataset_label = j.at("dataset_label").get<std::string>();
  for (const auto& row : j.at("results")) {
    report.rows.push_back(eval_from_json(row));
  }
  return report;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  std::vector<ConfigError> errors = validate_config(cfg);
  if (!errors.empty()) {
    throw ConfigValidationError(std::move(errors));
  }

  Dataset full;
  ordered_json data_meta;
  if (cfg.mode == "simulate") {
    ScenarioSpec sc;
    sc.scenario =
        cfg.scenario == "linear" ? Scenario::linear : Scenario::polynomial;
    sc.noise = cfg.noise == "gaussian"
                   ? NoiseFamily::gaussian
                   : (cfg.noise == "uniform" ? NoiseFamily::uniform
                                             : NoiseFamily::exponential);
    sc.n = cfg.n;
    sc.seed = cfg.seed;
    RngStream data_rng(cfg.seed, kDataStream);
    full = generate_scenario(sc, data_rng);
    data_meta = {{"mode", "simulate"},
                 {"scenario", cfg.scenario},
                 {"noise", cfg.noise},
                 {"n", full.n()},
                 {"p", full.p()}};
  } else {
    full = load_csv(cfg.csv_path, cfg.csv_target, cfg.csv_delimiter[0],
                    cfg.csv_header);
    data_meta = {{"mode", "csv"},
                 {"path", cfg.csv_path},
                 {"target", cfg.csv_target},
                 {"fnv1a", hex64(fnv1a_file(cfg.csv_path))},
                 {"n", full.n()},
                 {"p", full.p()}};
  }

  auto [train, test] = train_test_split(full, cfg.split_fraction, cfg.seed);
  const Index p = full.p();

  Standardizer stz;
  if (cfg.standardize) {
    stz = Standardizer::fit(train);
  } else {
    stz.x_mean = Vector::Zero(p);
    stz.x_sd = Vector::Ones(p);
    stz.y_mean = 0.0;
    stz.y_sd = 1.0;
  }
  const Dataset train_std = stz.apply(train);

  const bool has_oracle = full.oracle.has_value();
  auto theo_at = [&](const Matrix& x, double tau) {
    Vector theo(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      theo(i) = theoretical_quantile(*full.oracle, x.row(i).transpose(), tau);
    }
    return theo;
  };

  std::map<std::size_t, QrnnFit> qrnn_cache;
  auto qrnn_for_tau = [&](std::size_t ti) -> const QrnnFit& {
    auto it = qrnn_cache.find(ti);
    if (it == qrnn_cache.end()) {
      QrnnOptions qopts;
      qopts.epochs = cfg.qrnn_epochs;
      qopts.restarts = cfg.qrnn_restarts;
      qopts.seed = detail::mix64(cfg.seed + 0x9e3779b97f4a7c15ULL *
                                                (kQrnnSeedBase + ti));
      const QuantileSpec spec(cfg.tau[ti]);
      it = qrnn_cache
               .emplace(ti, fit_qrnn(train_std, spec, cfg.k, qopts))
               .first;
    }
    return it->second;
  };

  auto network_predict = [&](const NetworkParams& params, const Matrix& x) {
    const Matrix xs = stz.apply_x(x);
    Vector out(xs.rows());
    for (Index i = 0; i < xs.rows(); ++i) {
      out(i) = forward(params, xs.row(i).transpose());
    }
    return stz.restore_y(out);
  };

  const std::string run_dir = make_run_dir(cfg);
  EvalReport report;
  {
    std::ostringstream label;
    if (cfg.mode == "simulate") {
      label << "simulated " << cfg.scenario << "/" << cfg.noise;
    } else {
      label << "csv " << cfg.csv_path;
    }
    label << " (n=" << full.n() << ", p=" << p << "; train " << train.n()
          << " / test " << test.n() << ")";
    report.dataset_label = label.str();
  }

  for (const std::string& model : cfg.models) {
    for (std::size_t ti = 0; ti < cfg.tau.size(); ++ti) {
      const double tau = cfg.tau[ti];
      const QuantileSpec spec(tau);
      ModelEval ev;
      ev.model = model;
      ev.tau = tau;
      Vector pred_train, pred_test, sd_test;
      bool have_sd = false;

      if (model == "qr") {
        const QrFit fit = fit_linear_qr(train, spec);
        pred_train = with_intercept_cols(train.x) * fit.coef;
        pred_test = with_intercept_cols(test.x) * fit.coef;
        ordered_json fj;
        fj["coef"] = std::vector<double>(fit.coef.data(),
                                         fit.coef.data() + fit.coef.size());
        fj["objective"] = fit.objective;
        fj["iterations"] = fit.iterations;
        write_text(run_dir + "/fits/qr_tau" + tau_tag(tau) + ".json",
                   fj.dump(2) + "\n");
      } else if (model == "qrnn") {
        const QrnnFit& fit = qrnn_for_tau(ti);
        pred_train = network_predict(fit.params, train.x);
        pred_test = network_predict(fit.params, test.x);
        const Vector theta = flatten(fit.params);
        ordered_json fj;
        fj["k"] = fit.params.hidden_nodes();
        fj["p"] = fit.params.input_dim();
        fj["flat_params"] =
            std::vector<double>(theta.data(), theta.data() + theta.size());
        fj["smoothing_eps"] = fit.smoothing_eps;
        fj["final_loss"] = fit.train_loss_trace.empty()
                               ? 0.0
                               : fit.train_loss_trace.back();
        fj["epochs_run"] = fit.train_loss_trace.size();
        write_text(run_dir + "/fits/qrnn_tau" + tau_tag(tau) + ".json",
                   fj.dump(2) + "\n");
      } else if (model == "bqr") {
        Priors priors;
        priors.beta_mean = Vector::Zero(p + 1);
        priors.sigma0_sq = cfg.sigma0_sq;
        priors.gamma_mean = Matrix::Zero(0, p + 1);
        priors.sigma1_sq = cfg.sigma1_sq;
        priors.a = cfg.prior_a;
        priors.b = cfg.prior_b;
        ChainConfig cc{cfg.n_iter, cfg.burn_in_fraction, cfg.thin,
                       cfg.mh_step_sd, cfg.seed, cfg.n_chains};
        std::vector<ChainOutput> chains;
        for (Index c = 0; c < cfg.n_chains; ++c) {
          chains.push_back(fit_bqr(train, priors, spec, cc,
                                   kBqrStreamBase + 16 * ti +
                                       static_cast<std::uint64_t>(c)));
          write_chain_csv(chains.back(),
                          run_dir + "/chains/bqr_tau" + tau_tag(tau) +
                              "_chain" + std::to_string(c) + ".csv");
        }
        const Vector lp = retained_log_posterior(chains.front());
        ChainOutput pooled = pool_chains(std::move(chains));
        const QuantileSummary tr =
            posterior_quantile_summary(pooled, train.x);
        const QuantileSummary te = posterior_quantile_summary(pooled, test.x);
        pred_train = tr.mean;
        pred_test = te.mean;
        sd_test = te.sd;
        have_sd = true;
        ev.has_diagnostics = true;
        if (lp.size() >= 10) {
          ev.ess_log_posterior = ess(lp).value;
          ev.trend_pvalue = mann_kendall_pvalue(lp);
        } else {
          ev.ess_log_posterior = static_cast<double>(lp.size());
          ev.trend_pvalue = 1.0;
        }
      } else {  // bqrnn
        const QrnnFit& init = qrnn_for_tau(ti);
        Priors priors = default_priors(cfg.k, p);
        priors.sigma0_sq = cfg.sigma0_sq;
        priors.sigma1_sq = cfg.sigma1_sq;
        priors.a = cfg.prior_a;
        priors.b = cfg.prior_b;
        ChainConfig cc{cfg.n_iter, cfg.burn_in_fraction, cfg.thin,
                       cfg.mh_step_sd, cfg.seed, cfg.n_chains};
        std::vector<ChainOutput> chains;
        for (Index c = 0; c < cfg.n_chains; ++c) {
          chains.push_back(run_chain(train_std, priors, spec, cc, init.params,
                                     kBqrnnStreamBase + 16 * ti +
                                         static_cast<std::uint64_t>(c)));
          const std::string stem = run_dir + "/chains/bqrnn_tau" +
                                   tau_tag(tau) + "_chain" + std::to_string(c);
          write_chain_csv(chains.back(), stem + ".csv");
          write_text(stem + "_acceptance.txt",
                     acceptance_summary(chains.back()));
        }
        const Vector lp = retained_log_posterior(chains.front());
        ChainOutput pooled = pool_chains(std::move(chains));
        const QuantileSummary tr =
            posterior_quantile_summary(pooled, stz.apply_x(train.x));
        const QuantileSummary te =
            posterior_quantile_summary(pooled, stz.apply_x(test.x));
        pred_train = stz.restore_y(tr.mean);
        pred_test = stz.restore_y(te.mean);
        sd_test = te.sd * stz.y_sd;
        have_sd = true;
        ev.has_diagnostics = true;
        for (std::size_t j = 0; j < pooled.proposal_counts.size(); ++j) {
          ev.accept_rates.push_back(
              acceptance_rate(pooled, static_cast<Index>(j)));
        }
        if (lp.size() >= 10) {
          ev.ess_log_posterior = ess(lp).value;
          ev.trend_pvalue = mann_kendall_pvalue(lp);
        } else {
          ev.ess_log_posterior = static_cast<double>(lp.size());
          ev.trend_pvalue = 1.0;
        }
      }

      ev.train_mcf = mean_check(train.y, pred_train, spec);
      ev.test_mcf = mean_check(test.y, pred_test, spec);
      if (has_oracle) {
        ev.has_oracle = true;
        const Vector theo_train = theo_at(train.x, tau);
        const Vector theo_test = theo_at(test.x, tau);
        ev.train_oracle_mae =
            (pred_train - theo_train).cwiseAbs().mean();
        ev.test_oracle_mae = (pred_test - theo_test).cwiseAbs().mean();
        if (have_sd) {
          ev.has_coverage = true;
          ev.test_coverage =
              oracle_error(pred_test, sd_test, theo_test).coverage;
        }
      }
      report.rows.push_back(std::move(ev));
    }
  }

  ordered_json manifest;
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.seed;
  manifest["streams"] = {{"data", kDataStream},
                         {"qrnn_seed_base", kQrnnSeedBase},
                         {"bqrnn_stream_base", kBqrnnStreamBase},
                         {"bqr_stream_base", kBqrStreamBase}};
  manifest["dataset"] = data_meta;
  manifest["config"] = config_to_json(cfg);
  write_text(run_dir + "/manifest.json", manifest.dump(2) + "\n");

  ordered_json rj;
  rj["version"] = kVersion;
  rj["dataset_label"] = report.dataset_label;
  rj["results"] = ordered_json::array();
  for (const ModelEval& row : report.rows) {
    rj["results"].push_back(eval_to_json(row));
  }
  write_text(run_dir + "/report.json", rj.dump(2) + "\n");
  write_text(run_dir + "/report.txt", format_report_table(report));

  return {std::move(report), run_dir};
}

}  // namespace bqrnn
