#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "rmfgl/random.hpp"

namespace rmfgl {

enum class EventKind : std::uint8_t { Spike, Arrival };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Spike;
  int source_neuron = -1;   // arrivals only, 0-based
  int source_replica = -1;  // arrivals only, 0-based
  double jump = 0.0;        // lambda_after - lambda_before
  double lambda_after = 0.0;
};

struct Segment {
  double t_start = 0.0;
  double lambda_start = 0.0;
};

/// Intensity path and event log of one (replica, neuron) stream. Between
/// events lambda relaxes toward `base` with time constant `tau`
/// (constant when tau is infinite).
struct Trajectory {
  int replica = 0;
  int neuron = 0;
  double base = 0.0;
  double tau = INFINITY;
  std::vector<Event> events;
  std::vector<Segment> segments;  // segments[0].t_start == 0

  double intensity_at(double t) const;
  /// Integral of lambda over [0, t].
  double integral_to(double t) const;
  std::int64_t spikes_before(double t) const;
};

/// sup over [0, horizon] of |a(t) - b(t)| for two piecewise-constant paths.
double sup_distance(const Trajectory& a, const Trajectory& b, double horizon);

/// A spike together with the embedding point that produced it, when any.
struct Spike {
  double time = 0.0;
  PointId id;
  bool has_id = false;
};

/// Event-log CSV: path,t,replica,neuron,kind,jump,lambda_after with 12
/// significant digits; replica/neuron 1-based.
void write_event_log_header(std::ostream& os);
void write_event_log(std::ostream& os, std::uint64_t path, const Trajectory& traj);

}  // namespace rmfgl
