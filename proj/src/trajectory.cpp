#include "rmfgl/trajectory.hpp"

#include <algorithm>
#include <cstdio>

namespace rmfgl {

namespace {

std::size_t segment_index(const std::vector<Segment>& segs, double t) {
  auto it = std::upper_bound(segs.begin(), segs.end(), t,
                             [](double x, const Segment& s) { return x < s.t_start; });
  return it == segs.begin() ? 0 : static_cast<std::size_t>(it - segs.begin()) - 1;
}

double value_in(const Segment& s, double base, double tau, double t) {
  if (!std::isfinite(tau)) return s.lambda_start;
  return base + (s.lambda_start - base) * std::exp(-(t - s.t_start) / tau);
}

double integral_in(const Segment& s, double base, double tau, double t0, double t1) {
  if (t1 <= t0) return 0.0;
  if (!std::isfinite(tau)) return s.lambda_start * (t1 - t0);
  const double a = value_in(s, base, tau, t0) - base;
  return base * (t1 - t0) - a * tau * std::expm1(-(t1 - t0) / tau);
}

}  // namespace

double Trajectory::intensity_at(double t) const {
  if (segments.empty()) return 0.0;
  return value_in(segments[segment_index(segments, t)], base, tau, t);
}

double Trajectory::integral_to(double t) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const double t0 = segments[k].t_start;
    if (t0 >= t) break;
    const double t1 = k + 1 < segments.size() ? std::min(t, segments[k + 1].t_start) : t;
    acc += integral_in(segments[k], base, tau, t0, t1);
  }
  return acc;
}

std::int64_t Trajectory::spikes_before(double t) const {
  std::int64_t n = 0;
  for (const auto& e : events) {
    if (e.time > t) break;
    if (e.kind == EventKind::Spike) ++n;
  }
  return n;
}

double sup_distance(const Trajectory& a, const Trajectory& b, double horizon) {
  std::vector<double> cuts;
  cuts.reserve(a.segments.size() + b.segments.size());
  for (const auto& s : a.segments)
    if (s.t_start <= horizon) cuts.push_back(s.t_start);
  for (const auto& s : b.segments)
    if (s.t_start <= horizon) cuts.push_back(s.t_start);
  std::sort(cuts.begin(), cuts.end());
  double best = 0.0;
  for (double t : cuts) best = std::max(best, std::abs(a.intensity_at(t) - b.intensity_at(t)));
  return best;
}

void write_event_log_header(std::ostream& os) {
  os << "path,t,replica,neuron,kind,jump,lambda_after\n";
}

void write_event_log(std::ostream& os, std::uint64_t path, const Trajectory& traj) {
  char buf[256];
  for (const auto& e : traj.events) {
    char kind[64];
    if (e.kind == EventKind::Spike) {
      std::snprintf(kind, sizeof kind, "spike");
    } else {
      std::snprintf(kind, sizeof kind, "arrival:%d:%d", e.source_neuron + 1, e.source_replica + 1);
    }
    std::snprintf(buf, sizeof buf, "%llu,%.12g,%d,%d,%s,%.12g,%.12g\n",
                  static_cast<unsigned long long>(path), e.time, traj.replica + 1, traj.neuron + 1,
                  kind, e.jump, e.lambda_after);
    os << buf;
  }
}

}  // namespace rmfgl
