#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bqrnn/rng.hpp"
#include "bqrnn/types.hpp"

namespace bqrnn {

enum class Scenario { linear, polynomial };
enum class NoiseFamily { gaussian, uniform, exponential };

std::string to_string(Scenario s);
std::string to_string(NoiseFamily f);

// Simulation design: features iid U(0,5), location index x.beta1, scale index
// x.beta2, and response
//   linear:      y = x.beta1       + (x.beta2)   * eps
//   polynomial:  y = (x.beta1)^4   + (x.beta2)^2 * eps
struct ScenarioSpec {
  Scenario scenario = Scenario::linear;
  NoiseFamily noise = NoiseFamily::gaussian;
  Index n = 200;
  Vector beta1 = (Vector(3) << 2.0, 4.0, 6.0).finished();
  Vector beta2 = (Vector(3) << 0.1, 0.3, 0.5).finished();
  std::uint64_t seed = 0;
};

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> feature_names;
  // Present when the rows were simulated, so theoretical quantiles exist.
  std::optional<ScenarioSpec> oracle;

  Index n() const { return x.rows(); }
  Index p() const { return x.cols(); }
};

Dataset generate_scenario(const ScenarioSpec& spec, RngStream& rng);
Vector scenario_response(const ScenarioSpec& spec, const Matrix& x,
                         const Vector& eps);

// F^{-1}(tau) of the noise family (standard normal, U(0,1), Exp(mean 1)).
double noise_quantile(NoiseFamily family, double tau);

// Conditional tau-quantile of the response at x implied by the scenario.
double theoretical_quantile(const ScenarioSpec& spec, const Vector& x,
                            double tau);

// Standard normal inverse CDF (rational approximation polished by one
// Newton step on erfc, accurate to machine precision).
double normal_quantile(double p);

Dataset load_csv(const std::string& path, const std::string& target_column,
                 char delimiter = ',', bool header = true);
void save_csv(const Dataset& data, const std::string& path,
              const std::string& target_name = "target");

// Shuffled split with train size floor(n * train_fraction); both sides must
// come out nonempty. Same seed, same split.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data,
                                             double train_fraction,
                                             std::uint64_t seed);

// Column z-score transform fitted on one dataset and applied to others.
// Zero-variance columns are left unscaled.
struct Standardizer {
  Vector x_mean;
  Vector x_sd;
  double y_mean = 0.0;
  double y_sd = 1.0;

  static Standardizer fit(const Dataset& data);
  Matrix apply_x(const Matrix& x) const;
  Dataset apply(const Dataset& data) const;
  double restore_y(double z) const { return y_mean + y_sd * z; }
  Vector restore_y(const Vector& z) const;
};

}  // namespace bqrnn
