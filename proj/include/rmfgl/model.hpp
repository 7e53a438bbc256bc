#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rmfgl/random.hpp"

namespace rmfgl {

inline constexpr double kInfiniteTau = std::numeric_limits<double>::infinity();

/// Raw network description. Weight orientation: weight(j, i) is the jump a
/// spike of neuron j causes on neuron i (row = sender). Indices are 0-based
/// in code; the diagonal is never read.
struct NetworkParams {
  int K = 0;
  std::vector<double> mu;   // K*K, row-major, mu[j*K + i]
  std::vector<double> b;    // base rates
  std::vector<double> r;    // reset values
  std::vector<double> tau;  // relaxation times, kInfiniteTau for no decay

  double weight(int from, int to) const { return mu[static_cast<std::size_t>(from) * K + to]; }
  /// Convenience for building from nested rows.
  static NetworkParams from_rows(const std::vector<std::vector<double>>& mu_rows,
                                 std::vector<double> b, std::vector<double> r,
                                 std::vector<double> tau = {});
};

/// NetworkParams certified by validate_params. Immutable.
class ValidatedParams {
 public:
  const NetworkParams& raw() const noexcept { return p_; }
  int K() const noexcept { return p_.K; }
  double weight(int from, int to) const { return p_.weight(from, to); }
  double b(int i) const { return p_.b[i]; }
  double r(int i) const { return p_.r[i]; }
  double tau(int i) const { return p_.tau[i]; }
  /// True when no neuron has exponential decay.
  bool convergence_eligible() const noexcept { return eligible_; }
  double max_weight() const noexcept;
  double min_reset() const noexcept;

  friend bool operator==(const ValidatedParams& a, const ValidatedParams& b) {
    return a.p_.K == b.p_.K && a.p_.mu == b.p_.mu && a.p_.b == b.p_.b && a.p_.r == b.p_.r &&
           a.p_.tau == b.p_.tau && a.eligible_ == b.eligible_;
  }

 private:
  friend ValidatedParams validate_params(const NetworkParams& raw);
  explicit ValidatedParams(NetworkParams p, bool eligible) : p_(std::move(p)), eligible_(eligible) {}
  NetworkParams p_;
  bool eligible_ = false;
};

ValidatedParams validate_params(const NetworkParams& raw);
inline ValidatedParams validate_params(const ValidatedParams& v) { return validate_params(v.raw()); }

struct DeterministicInit {
  std::vector<double> values;
};
struct UniformIntervalInit {
  std::vector<double> lo, hi;
};
struct TruncatedExponentialInit {
  std::vector<double> rate, lo, hi;
};

/// Bounded-support initial laws only, so exponential moments always exist.
struct InitialCondition {
  std::variant<DeterministicInit, UniformIntervalInit, TruncatedExponentialInit> kind;

  /// lambda_i(0) = b_i + r_i.
  static InitialCondition default_for(const ValidatedParams& params);
  static InitialCondition deterministic(std::vector<double> values) {
    return InitialCondition{DeterministicInit{std::move(values)}};
  }
};

/// Throws SupportBelowFloor or BadDimension.
void validate_initial(const InitialCondition& init, const ValidatedParams& params);

/// One draw of lambda(0); consumes `stream` deterministically.
std::vector<double> sample_initial(const InitialCondition& init, const ValidatedParams& params,
                                   RandomStream& stream);

/// lambda_i(0) for stream (replica, neuron) of a path: every coordinate uses its
/// own Initial-tagged stream so replicas are i.i.d. and couplings line up.
double sample_initial_coordinate(const InitialCondition& init, int neuron, RandomStream& stream);

/// E[lambda_i(0)] and E[lambda_i(0)^2], exact.
double initial_mean(const InitialCondition& init, int neuron);
double initial_second_moment(const InitialCondition& init, int neuron);

enum class Engine { Direct, Embedded };

struct ExperimentConfig {
  NetworkParams params;
  InitialCondition init;
  double horizon = 1.0;
  std::vector<int> m_list;
  std::int64_t paths = 1;
  std::uint64_t seed = 0;
  double grid_step = 0.05;
  Engine engine = Engine::Direct;
  std::filesystem::path output_dir;

  /// Number of grid intervals, horizon / grid_step rounded.
  int grid_intervals() const;
};

/// Throws ConfigInvalid (or the parameter error) if an invariant fails.
void validate_config(const ExperimentConfig& cfg);

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace rmfgl
