#include "rmfgl/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rmfgl/error.hpp"

namespace rmfgl {

using nlohmann::json;

NetworkParams NetworkParams::from_rows(const std::vector<std::vector<double>>& mu_rows,
                                       std::vector<double> b, std::vector<double> r,
                                       std::vector<double> tau) {
  NetworkParams p;
  p.K = static_cast<int>(mu_rows.size());
  for (const auto& row : mu_rows) p.mu.insert(p.mu.end(), row.begin(), row.end());
  p.b = std::move(b);
  p.r = std::move(r);
  p.tau = tau.empty() ? std::vector<double>(p.K, kInfiniteTau) : std::move(tau);
  return p;
}

double ValidatedParams::max_weight() const noexcept {
  double w = 0.0;
  for (int j = 0; j < p_.K; ++j)
    for (int i = 0; i < p_.K; ++i)
      if (i != j) w = std::max(w, p_.weight(j, i));
  return w;
}

double ValidatedParams::min_reset() const noexcept {
  return *std::min_element(p_.r.begin(), p_.r.end());
}

ValidatedParams validate_params(const NetworkParams& raw) {
  const int K = raw.K;
  if (K <= 0) throw Error(ErrorCode::BadDimension, "K must be positive");
  const auto k = static_cast<std::size_t>(K);
  if (raw.mu.size() != k * k || raw.b.size() != k || raw.r.size() != k || raw.tau.size() != k) {
    throw Error(ErrorCode::BadDimension, "parameter vectors must have length K (mu: K*K)");
  }
  for (int j = 0; j < K; ++j) {
    for (int i = 0; i < K; ++i) {
      if (i == j) continue;
      const double w = raw.weight(j, i);
      if (!(w >= 0.0) || !std::isfinite(w)) {
        std::ostringstream os;
        os << "mu[" << j << "][" << i << "] = " << w;
        throw Error(ErrorCode::NegativeWeight, os.str());
      }
    }
  }
  bool eligible = true;
  for (int i = 0; i < K; ++i) {
    if (!(raw.b[i] > 0.0) || !(raw.r[i] > 0.0) || !std::isfinite(raw.b[i])) {
      throw Error(ErrorCode::NonPositiveRate, "b and r must be positive (neuron " +
                                                  std::to_string(i) + ")");
    }
    if (raw.r[i] > raw.b[i]) {
      throw Error(ErrorCode::ResetAboveBase, "r > b for neuron " + std::to_string(i));
    }
    if (!(raw.tau[i] > 0.0)) {
      throw Error(ErrorCode::NonPositiveRate, "tau must be positive or infinite");
    }
    if (std::isfinite(raw.tau[i])) eligible = false;
  }
  return ValidatedParams(raw, eligible);
}

// ---------------------------------------------------------------------------
// Initial conditions

InitialCondition InitialCondition::default_for(const ValidatedParams& params) {
  std::vector<double> v(params.K());
  for (int i = 0; i < params.K(); ++i) v[i] = params.b(i) + params.r(i);
  return deterministic(std::move(v));
}

namespace {

double floor_of(const ValidatedParams& p, int i) { return std::max(p.r(i), p.b(i)); }

void check_len(std::size_t n, int K, const char* what) {
  if (n != static_cast<std::size_t>(K)) {
    throw Error(ErrorCode::BadDimension, std::string(what) + " must have length K");
  }
}

}  // namespace

void validate_initial(const InitialCondition& init, const ValidatedParams& params) {
  const int K = params.K();
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DeterministicInit>) {
          check_len(v.values.size(), K, "initial values");
          for (int i = 0; i < K; ++i)
            if (!(v.values[i] >= floor_of(params, i)) || !std::isfinite(v.values[i]))
              throw Error(ErrorCode::SupportBelowFloor,
                          "lambda_" + std::to_string(i) + "(0) below max(r, b)");
        } else if constexpr (std::is_same_v<T, UniformIntervalInit>) {
          check_len(v.lo.size(), K, "lo");
          check_len(v.hi.size(), K, "hi");
          for (int i = 0; i < K; ++i) {
            if (!(v.hi[i] >= v.lo[i]) || !std::isfinite(v.hi[i]))
              throw Error(ErrorCode::ConfigInvalid, "uniform interval needs lo <= hi < inf");
            if (!(v.lo[i] >= floor_of(params, i)))
              throw Error(ErrorCode::SupportBelowFloor,
                          "support of lambda_" + std::to_string(i) + "(0) reaches below max(r, b)");
          }
        } else {
          check_len(v.rate.size(), K, "rate");
          check_len(v.lo.size(), K, "lo");
          check_len(v.hi.size(), K, "hi");
          for (int i = 0; i < K; ++i) {
            if (!(v.rate[i] > 0.0) || !(v.hi[i] > v.lo[i]) || !std::isfinite(v.hi[i]))
              throw Error(ErrorCode::ConfigInvalid,
                          "truncated exponential needs rate > 0 and lo < hi < inf");
            if (!(v.lo[i] >= floor_of(params, i)))
              throw Error(ErrorCode::SupportBelowFloor,
                          "support of lambda_" + std::to_string(i) + "(0) reaches below max(r, b)");
          }
        }
      },
      init.kind);
}

double sample_initial_coordinate(const InitialCondition& init, int i, RandomStream& stream) {
  return std::visit(
      [&](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DeterministicInit>) {
          return v.values[i];
        } else if constexpr (std::is_same_v<T, UniformIntervalInit>) {
          return v.lo[i] + (v.hi[i] - v.lo[i]) * stream.uniform();
        } else {
          const double span = v.hi[i] - v.lo[i];
          const double u = stream.uniform();
          const double x = -std::log1p(-u * (-std::expm1(-v.rate[i] * span))) / v.rate[i];
          return std::min(v.hi[i], v.lo[i] + x);
        }
      },
      init.kind);
}

std::vector<double> sample_initial(const InitialCondition& init, const ValidatedParams& params,
                                   RandomStream& stream) {
  validate_initial(init, params);
  std::vector<double> out(params.K());
  for (int i = 0; i < params.K(); ++i) out[i] = sample_initial_coordinate(init, i, stream);
  return out;
}

double initial_mean(const InitialCondition& init, int i) {
  return std::visit(
      [&](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DeterministicInit>) {
          return v.values[i];
        } else if constexpr (std::is_same_v<T, UniformIntervalInit>) {
          return 0.5 * (v.lo[i] + v.hi[i]);
        } else {
          // Mean of Exp(a) truncated to [0, s], shifted by lo.
          const double a = v.rate[i];
          const double s = v.hi[i] - v.lo[i];
          const double e = std::exp(-a * s);
          return v.lo[i] + 1.0 / a - s * e / (1.0 - e);
        }
      },
      init.kind);
}

double initial_second_moment(const InitialCondition& init, int i) {
  return std::visit(
      [&](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DeterministicInit>) {
          return v.values[i] * v.values[i];
        } else if constexpr (std::is_same_v<T, UniformIntervalInit>) {
          const double a = v.lo[i], b = v.hi[i];
          return (a * a + a * b + b * b) / 3.0;
        } else {
          const double a = v.rate[i];
          const double s = v.hi[i] - v.lo[i];
          const double e = std::exp(-a * s);
          const double z = 1.0 - e;
          const double m1 = 1.0 / a - s * e / z;
          const double m2 = (2.0 / (a * a) - e * (s * s + 2.0 * s / a + 2.0 / (a * a))) / z;
          const double lo = v.lo[i];
          return lo * lo + 2.0 * lo * m1 + m2;
        }
      },
      init.kind);
}

// ---------------------------------------------------------------------------
// Experiment configuration

int ExperimentConfig::grid_intervals() const {
  return static_cast<int>(std::llround(horizon / grid_step));
}

void validate_config(const ExperimentConfig& cfg) {
  const auto params = validate_params(cfg.params);
  validate_initial(cfg.init, params);
  if (!(cfg.horizon > 0.0))
    throw Error(ErrorCode::HorizonNonPositive, "horizon must be positive");
  if (!(cfg.grid_step > 0.0)) throw Error(ErrorCode::ConfigInvalid, "grid_step must be positive");
  const double n = cfg.horizon / cfg.grid_step;
  if (std::abs(std::round(n) * cfg.grid_step - cfg.horizon) > 1e-12 * std::max(1.0, cfg.horizon) ||
      std::round(n) < 1.0) {
    throw Error(ErrorCode::ConfigInvalid, "grid_step must divide the horizon");
  }
  for (int M : cfg.m_list)
    if (M < 2) throw Error(ErrorCode::ConfigInvalid, "every entry of m_list must be >= 2");
  if (cfg.paths < 1) throw Error(ErrorCode::ConfigInvalid, "paths must be positive");
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  if (!obj.is_object()) throw Error(ErrorCode::ConfigInvalid, std::string(where) + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : obj.items()) {
    if (!ok.count(k)) throw Error(ErrorCode::ConfigInvalid, "unknown key '" + k + "' in " + where);
  }
}

template <class T>
T required(const json& obj, const char* key, const char* where) {
  if (!obj.contains(key))
    throw Error(ErrorCode::ConfigInvalid, std::string("missing '") + key + "' in " + where);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("bad '") + key + "': " + e.what());
  }
}

double tau_from_json(const json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "infinite") return kInfiniteTau;
    throw Error(ErrorCode::ConfigInvalid, "tau entries are numbers or \"infinite\"");
  }
  if (v.is_number()) return v.get<double>();
  throw Error(ErrorCode::ConfigInvalid, "tau entries are numbers or \"infinite\"");
}

json tau_to_json(double t) { return std::isfinite(t) ? json(t) : json("infinite"); }

NetworkParams params_from_json(const json& j) {
  reject_unknown(j, {"k", "mu", "b", "r", "tau"}, "params");
  NetworkParams p;
  p.K = required<int>(j, "k", "params");
  const auto rows = required<std::vector<std::vector<double>>>(j, "mu", "params");
  if (static_cast<int>(rows.size()) != p.K)
    throw Error(ErrorCode::BadDimension, "mu must have K rows");
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != p.K)
      throw Error(ErrorCode::BadDimension, "mu rows must have K entries");
    p.mu.insert(p.mu.end(), row.begin(), row.end());
  }
  p.b = required<std::vector<double>>(j, "b", "params");
  p.r = required<std::vector<double>>(j, "r", "params");
  if (j.contains("tau")) {
    if (!j.at("tau").is_array()) throw Error(ErrorCode::ConfigInvalid, "tau must be an array");
    for (const auto& v : j.at("tau")) p.tau.push_back(tau_from_json(v));
  } else {
    p.tau.assign(p.K, kInfiniteTau);
  }
  return p;
}

json params_to_json(const NetworkParams& p) {
  json rows = json::array();
  for (int j = 0; j < p.K; ++j) {
    std::vector<double> row(p.mu.begin() + j * p.K, p.mu.begin() + (j + 1) * p.K);
    rows.push_back(row);
  }
  json tau = json::array();
  for (double t : p.tau) tau.push_back(tau_to_json(t));
  return json{{"k", p.K}, {"mu", rows}, {"b", p.b}, {"r", p.r}, {"tau", tau}};
}

InitialCondition init_from_json(const json& j) {
  const auto kind = required<std::string>(j, "kind", "init");
  if (kind == "deterministic") {
    reject_unknown(j, {"kind", "values"}, "init");
    return InitialCondition{DeterministicInit{required<std::vector<double>>(j, "values", "init")}};
  }
  if (kind == "uniform_interval") {
    reject_unknown(j, {"kind", "lo", "hi"}, "init");
    return InitialCondition{UniformIntervalInit{required<std::vector<double>>(j, "lo", "init"),
                                                required<std::vector<double>>(j, "hi", "init")}};
  }
  if (kind == "truncated_exponential") {
    reject_unknown(j, {"kind", "rate", "lo", "hi"}, "init");
    return InitialCondition{
        TruncatedExponentialInit{required<std::vector<double>>(j, "rate", "init"),
                                 required<std::vector<double>>(j, "lo", "init"),
                                 required<std::vector<double>>(j, "hi", "init")}};
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown init kind '" + kind + "'");
}

json init_to_json(const InitialCondition& init) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DeterministicInit>) {
          return json{{"kind", "deterministic"}, {"values", v.values}};
        } else if constexpr (std::is_same_v<T, UniformIntervalInit>) {
          return json{{"kind", "uniform_interval"}, {"lo", v.lo}, {"hi", v.hi}};
        } else {
          return json{{"kind", "truncated_exponential"}, {"rate", v.rate}, {"lo", v.lo}, {"hi", v.hi}};
        }
      },
      init.kind);
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"params", "init", "horizon", "m_list", "paths", "seed", "grid_step", "engine",
                  "output_dir"},
                 "config");
  ExperimentConfig cfg;
  if (!j.contains("params")) throw Error(ErrorCode::ConfigInvalid, "missing 'params' in config");
  cfg.params = params_from_json(j.at("params"));
  const auto params = validate_params(cfg.params);
  cfg.init = j.contains("init") ? init_from_json(j.at("init")) : InitialCondition::default_for(params);
  cfg.horizon = required<double>(j, "horizon", "config");
  cfg.m_list = required<std::vector<int>>(j, "m_list", "config");
  cfg.paths = required<std::int64_t>(j, "paths", "config");
  cfg.seed = required<std::uint64_t>(j, "seed", "config");
  cfg.grid_step = required<double>(j, "grid_step", "config");
  const auto engine = j.contains("engine") ? j.at("engine").get<std::string>() : "direct";
  if (engine == "direct") {
    cfg.engine = Engine::Direct;
  } else if (engine == "embedded") {
    cfg.engine = Engine::Embedded;
  } else {
    throw Error(ErrorCode::ConfigInvalid, "engine must be \"direct\" or \"embedded\"");
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  validate_config(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  return json{{"params", params_to_json(cfg.params)},
              {"init", init_to_json(cfg.init)},
              {"horizon", cfg.horizon},
              {"m_list", cfg.m_list},
              {"paths", cfg.paths},
              {"seed", cfg.seed},
              {"grid_step", cfg.grid_step},
              {"engine", cfg.engine == Engine::Direct ? "direct" : "embedded"},
              {"output_dir", cfg.output_dir.string()}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace rmfgl
