#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace rmfgl {

// splitmix64 finalizer; the building block of every keyed stream below.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
}

template <class... Ts>
constexpr std::uint64_t hash_words(std::uint64_t seed, Ts... words) noexcept {
  std::uint64_t h = mix64(seed);
  ((h = hash_combine(h, static_cast<std::uint64_t>(words))), ...);
  return h;
}

/// xoshiro256** seeded from a single 64-bit key. Satisfies
/// UniformRandomBitGenerator so it also plugs into <random> distributions.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1].
  double uniform_pos() noexcept { return 1.0 - uniform(); }
  double exponential(double rate) noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Exact Poisson sample (inversion, split into chunks of mean <= 16).
  std::uint64_t poisson(double mean) noexcept;

 private:
  std::array<std::uint64_t, 4> s_{};
};

enum class StreamTag : std::uint8_t { Embedding = 1, Routing = 2, Initial = 3, Auxiliary = 4 };

/// (replica, neuron, purpose) index of an independent stream; replica and
/// neuron are 1-based as in the model.
struct StreamKey {
  int replica = 1;
  int neuron = 1;
  StreamTag tag = StreamTag::Embedding;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

std::uint64_t stream_hash(std::uint64_t master_seed, const StreamKey& key) noexcept;
RandomStream derive_stream(std::uint64_t master_seed, const StreamKey& key) noexcept;
/// Independent sub-stream number `counter` of (master_seed, key).
RandomStream derive_stream(std::uint64_t master_seed, const StreamKey& key,
                           std::uint64_t counter) noexcept;
/// Seed of one Monte Carlo path; every stream of that path is derived from it.
std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t path_id) noexcept;

/// Identity of one point of a Poisson embedding. `field` is the keyed hash of
/// the owning field, so ids from different fields never collide.
struct PointId {
  std::uint64_t field = 0;
  std::int32_t column = 0;
  std::int32_t row = 0;
  std::int32_t index = 0;

  friend bool operator==(const PointId&, const PointId&) = default;
};

struct FieldPoint {
  double time = 0.0;
  double height = 0.0;
  PointId id;
};

struct Rect {
  double t0 = 0.0;
  double t1 = 0.0;
  double h0 = 0.0;
  double h1 = 0.0;
};

struct FieldGeometry {
  double strip_width = 0.05;  // time extent of one strip, normally the grid step
  double strip_height = 1.0;
  double t_max = 1.0;
  double h_max = 1000.0;
};

/// Unit-rate Poisson point process on [0, t_max] x [0, h_max], realized one
/// strip at a time on first touch. The content of a strip is a pure function
/// of (master seed, key, column, row), so every query order sees the same
/// realization. Realization is guarded by a mutex; reads of an already
/// realized strip go through acquire loads only.
class LazyPoissonField {
 public:
  LazyPoissonField(std::uint64_t master_seed, StreamKey key, FieldGeometry geometry);
  ~LazyPoissonField();
  LazyPoissonField(const LazyPoissonField&) = delete;
  LazyPoissonField& operator=(const LazyPoissonField&) = delete;
  LazyPoissonField(LazyPoissonField&&) noexcept;
  LazyPoissonField& operator=(LazyPoissonField&&) noexcept;

  const StreamKey& key() const noexcept { return key_; }
  const FieldGeometry& geometry() const noexcept { return geom_; }
  std::uint64_t field_hash() const noexcept { return field_hash_; }

  /// Points inside [t0,t1) x [h0,h1), sorted by time.
  std::vector<FieldPoint> field_points(const Rect& rect) const;

  /// First point with after < time < until and height < level(time).
  /// `level` is a callable double -> double and `column_max(c)` must bound it
  /// from above on column c.
  template <class Level, class ColumnMax>
  std::optional<FieldPoint> first_under(double after, double until, Level&& level,
                                        ColumnMax&& column_max) const;

  /// Constant-level variant used by the piecewise-constant intensity engines.
  std::optional<FieldPoint> first_below(double after, double until, double level) const {
    return first_under(
        after, until, [level](double) { return level; }, [level](std::int32_t) { return level; });
  }

  /// Strip (column, row), realized if necessary. Points sorted by time.
  const std::vector<FieldPoint>& strip(std::int32_t column, std::int32_t row) const;

  std::int32_t columns() const noexcept { return columns_; }
  std::int32_t rows() const noexcept { return rows_; }

 private:
  static constexpr std::int32_t kChunk = 32;
  struct Chunk {
    std::array<std::atomic<std::vector<FieldPoint>*>, kChunk> strips{};
  };

  std::vector<FieldPoint>* realize(std::int32_t column, std::int32_t row) const;
  void release() noexcept;
  [[noreturn]] void throw_overflow(double level) const;

  StreamKey key_;
  FieldGeometry geom_;
  std::uint64_t field_hash_ = 0;
  std::int32_t columns_ = 0;
  std::int32_t rows_ = 0;
  std::int32_t chunks_per_column_ = 0;
  std::unique_ptr<std::atomic<Chunk*>[]> chunks_;
  std::unique_ptr<std::mutex> mutex_;
};

/// Lazily extended routing marks attached to one embedding point: for every
/// (target neuron, replica count M) a replica uniform on {1..M} \ {origin}.
class RoutingMark {
 public:
  explicit RoutingMark(PointId point) noexcept : point_(point) {}
  const PointId& point() const noexcept { return point_; }

 private:
  PointId point_;
};

/// Replica receiving the effect of the marked spike on neuron `target`.
int routing_mark(const RoutingMark& mark, int target, int M, int origin);

/// Same draw keyed by an arbitrary 64-bit tag, for spikes without a field id.
int routing_choice(std::uint64_t tag, int target, int M, int origin);

// ---------------------------------------------------------------------------

template <class Level, class ColumnMax>
std::optional<FieldPoint> LazyPoissonField::first_under(double after, double until, Level&& level,
                                                        ColumnMax&& column_max) const {
  until = std::min(until, geom_.t_max);
  if (!(after < until)) return std::nullopt;
  auto first_col = static_cast<std::int32_t>(std::max(0.0, after) / geom_.strip_width);
  first_col = std::min(first_col, columns_ - 1);
  for (std::int32_t c = first_col; c < columns_; ++c) {
    const double col_start = c * geom_.strip_width;
    if (col_start >= until) break;
    const double top = column_max(c);
    if (top > geom_.h_max) throw_overflow(top);
    const auto nrows = static_cast<std::int32_t>(std::ceil(top / geom_.strip_height));
    const FieldPoint* best = nullptr;
    for (std::int32_t r = 0; r < nrows; ++r) {
      const auto& pts = strip(c, r);
      for (const auto& p : pts) {
        if (p.time <= after) continue;
        if (best && p.time >= best->time) break;
        if (p.time >= until) break;
        if (p.height < level(p.time)) {
          best = &p;
          break;
        }
      }
    }
    if (best) return *best;
  }
  return std::nullopt;
}

}  // namespace rmfgl
