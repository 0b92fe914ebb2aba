#include "bqrnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "bqrnn/samplers.hpp"

namespace bqrnn {

std::string to_string(Scenario s) {
  return s == Scenario::linear ? "linear" : "polynomial";
}

std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::uniform: return "uniform";
    default: return "exponential";
  }
}

namespace {

void check_scenario_spec(const ScenarioSpec& spec) {
  if (spec.n < 1) {
    throw std::invalid_argument("ScenarioSpec: n must be >= 1");
  }
  if (spec.beta1.size() != spec.beta2.size() || spec.beta1.size() < 1) {
    throw std::invalid_argument(
        "ScenarioSpec: beta1 and beta2 must be nonempty and equal length");
  }
}

double draw_noise(NoiseFamily family, RngStream& rng) {
  switch (family) {
    case NoiseFamily::gaussian: return standard_normal(rng);
    case NoiseFamily::uniform: return rng.next_unit();
    default: return -std::log(rng.next_unit());
  }
}

}  // namespace

Vector scenario_response(const ScenarioSpec& spec, const Matrix& x,
                         const Vector& eps) {
  check_scenario_spec(spec);
  if (x.cols() != spec.beta1.size() || eps.size() != x.rows()) {
    throw std::invalid_argument("scenario_response: shape mismatch");
  }
  const Vector s1 = x * spec.beta1;
  const Vector s2 = x * spec.beta2;
  if (spec.scenario == Scenario::linear) {
    return s1 + s2.cwiseProduct(eps);
  }
  return s1.array().pow(4.0).matrix() +
         s2.array().square().matrix().cwiseProduct(eps);
}

Dataset generate_scenario(const ScenarioSpec& spec, RngStream& rng) {
  check_scenario_spec(spec);
  const Index p = spec.beta1.size();
  Matrix x(spec.n, p);
  Vector eps(spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    for (Index h = 0; h < p; ++h) x(i, h) = 5.0 * rng.next_unit();
    eps(i) = draw_noise(spec.noise, rng);
  }
  Dataset data;
  data.x = std::move(x);
  data.y = scenario_response(spec, data.x, eps);
  data.feature_names.reserve(static_cast<std::size_t>(p));
  for (Index h = 0; h < p; ++h) {
    data.feature_names.push_back("x" + std::to_string(h + 1));
  }
  data.oracle = spec;
  return data;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  }
  // Wichura's rational approximation, then one Newton polish on erfc.
  const double q = p - 0.5;
  double x;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    x = q *
        (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
              6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
            1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
          1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
        (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
              3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
            5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
          4.2313330701600911252e1) * r + 1.0);
  } else {
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    if (r <= 5.0) {
      r -= 1.6;
      x = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
    } else {
      r -= 5.0;
      x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-6) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
    }
    if (q < 0.0) x = -x;
  }
  // polish on the smaller tail, where erfc keeps relative accuracy
  const bool flip = q > 0.0;
  const double pp = flip ? 1.0 - p : p;
  double xx = flip ? -x : x;
  const double cdf = 0.5 * std::erfc(-xx * M_SQRT1_2);
  const double pdf = std::exp(-0.5 * xx * xx) / std::sqrt(2.0 * M_PI);
  if (pdf > 0.0) xx -= (cdf - pp) / pdf;
  return flip ? -xx : xx;
}

double noise_quantile(NoiseFamily family, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("noise_quantile: tau must lie in (0,1)");
  }
  switch (family) {
    case NoiseFamily::gaussian: return normal_quantile(tau);
    case NoiseFamily::uniform: return tau;
    default: return -std::log1p(-tau);
  }
}

double theoretical_quantile(const ScenarioSpec& spec, const Vector& x,
                            double tau) {
  check_scenario_spec(spec);
  if (x.size() != spec.beta1.size()) {
    throw std::invalid_argument("theoretical_quantile: x length mismatch");
  }
  const double q = noise_quantile(spec.noise, tau);
  const double s1 = x.dot(spec.beta1);
  const double s2 = x.dot(spec.beta2);
  if (spec.scenario == Scenario::linear) {
    return s1 + s2 * q;
  }
  const double s1sq = s1 * s1;
  return s1sq * s1sq + s2 * s2 * q;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delimiter)) {
    // trim surrounding whitespace
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == delimiter) cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row,
                  const std::string& column) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (cell.empty() || end != begin + cell.size() || !std::isfinite(value)) {
    throw std::runtime_error("load_csv: row " + std::to_string(row) +
                             ", column '" + column + "': cell '" + cell +
                             "' is not a finite number");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column,
                 char delimiter, bool header) {
  std::ifstream file(path);
  if (!file) {
    throw std::runtime_error("load_csv: cannot open '" + path + "'");
  }
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_line(line, delimiter);
    if (names.empty()) {
      if (header) {
        names = cells;
        continue;
      }
      names.reserve(cells.size());
      for (std::size_t c = 0; c < cells.size(); ++c) {
        names.push_back("c" + std::to_string(c));
      }
    }
    if (cells.size() != names.size()) {
      throw std::runtime_error(
          "load_csv: row " + std::to_string(line_no) + " has " +
          std::to_string(cells.size()) + " cells, expected " +
          std::to_string(names.size()));
    }
    std::vector<double> parsed(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      parsed[c] = parse_cell(cells[c], line_no, names[c]);
    }
    rows.push_back(std::move(parsed));
  }
  if (names.empty() || rows.empty()) {
    throw std::runtime_error("load_csv: '" + path + "' contains no data rows");
  }
  const auto target_it = std::find(names.begin(), names.end(), target_column);
  if (target_it == names.end()) {
    throw std::runtime_error("load_csv: target column '" + target_column +
                             "' not found in '" + path + "'");
  }
  const auto target_idx =
      static_cast<std::size_t>(target_it - names.begin());
  if (names.size() < 2) {
    throw std::runtime_error("load_csv: need at least one feature column");
  }
  Dataset data;
  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(names.size() - 1);
  data.x.resize(n, p);
  data.y.resize(n);
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c != target_idx) data.feature_names.push_back(names[c]);
  }
  for (Index i = 0; i < n; ++i) {
    Index h = 0;
    for (std::size_t c = 0; c < names.size(); ++c) {
      const double value = rows[static_cast<std::size_t>(i)][c];
      if (c == target_idx) {
        data.y(i) = value;
      } else {
        data.x(i, h++) = value;
      }
    }
  }
  return data;
}

void save_csv(const Dataset& data, const std::string& path,
              const std::string& target_name) {
  std::ofstream file(path);
  if (!file) {
    throw std::runtime_error("save_csv: cannot open '" + path + "'");
  }
  for (Index h = 0; h < data.p(); ++h) {
    file << data.feature_names[static_cast<std::size_t>(h)] << ',';
  }
  file << target_name << '\n';
  char buf[32];
  for (Index i = 0; i < data.n(); ++i) {
    for (Index h = 0; h < data.p(); ++h) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.x(i, h));
      file << buf << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.17g", data.y(i));
    file << buf << '\n';
  }
  if (!file) {
    throw std::runtime_error("save_csv: write failed for '" + path + "'");
  }
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& data,
                                             double train_fraction,
                                             std::uint64_t seed) {
  const Index n = data.n();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument(
        "train_test_split: train_fraction must lie in (0,1)");
  }
  const auto n_train = static_cast<Index>(
      std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  if (n_train < 1 || n_train >= n) {
    throw std::runtime_error(
        "train_test_split: split leaves an empty side (n=" + std::to_string(n) +
        ", train=" + std::to_string(n_train) + ")");
  }
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  RngStream rng(seed, 0x5eedULL);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(
        rng.next_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(j)]);
  }
  auto take = [&](Index begin, Index count) {
    Dataset part;
    part.x.resize(count, data.p());
    part.y.resize(count);
    for (Index i = 0; i < count; ++i) {
      const Index src = idx[static_cast<std::size_t>(begin + i)];
      part.x.row(i) = data.x.row(src);
      part.y(i) = data.y(src);
    }
    part.feature_names = data.feature_names;
    part.oracle = data.oracle;
    return part;
  };
  return {take(0, n_train), take(n_train, n - n_train)};
}

Standardizer Standardizer::fit(const Dataset& data) {
  const Index n = data.n();
  if (n < 2) {
    throw std::invalid_argument("Standardizer: need at least 2 rows to fit");
  }
  Standardizer s;
  s.x_mean = data.x.colwise().mean().transpose();
  s.x_sd.resize(data.p());
  for (Index h = 0; h < data.p(); ++h) {
    const double var = (data.x.col(h).array() - s.x_mean(h)).square().sum() /
                       static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    s.x_sd(h) = sd > 1e-12 ? sd : 1.0;
  }
  s.y_mean = data.y.mean();
  const double yvar = (data.y.array() - s.y_mean).square().sum() /
                      static_cast<double>(n - 1);
  const double ysd = std::sqrt(yvar);
  s.y_sd = ysd > 1e-12 ? ysd : 1.0;
  return s;
}

Matrix Standardizer::apply_x(const Matrix& x) const {
  if (x.cols() != x_mean.size()) {
    throw std::invalid_argument("Standardizer: feature width mismatch");
  }
  Matrix out = x;
  out.rowwise() -= x_mean.transpose();
  out.array().rowwise() /= x_sd.transpose().array();
  return out;
}

Dataset Standardizer::apply(const Dataset& data) const {
  Dataset out;
  out.x = apply_x(data.x);
  out.y = (data.y.array() - y_mean) / y_sd;
  out.feature_names = data.feature_names;
  out.oracle = data.oracle;
  return out;
}

Vector Standardizer::restore_y(const Vector& z) const {
  return (z.array() * y_sd + y_mean).matrix();
}

}  // namespace bqrnn
