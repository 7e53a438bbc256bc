#include "rmfgl/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rmfgl/error.hpp"

namespace rmfgl {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

// Domain separators so that streams used for different purposes never share
// a hash input.
constexpr std::uint64_t kStreamDomain = 0x53545245414d0001ULL;
constexpr std::uint64_t kStripDomain = 0x5354524950000002ULL;
constexpr std::uint64_t kRouteDomain = 0x524f555445000003ULL;
constexpr std::uint64_t kPathDomain = 0x5041544800000004ULL;

std::uint64_t bounded(std::uint64_t h, std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(h) * n) >> 64);
}

int pick_other(std::uint64_t h, int M, int origin) {
  if (M < 2) throw Error(ErrorCode::MTooSmall, "routing needs M >= 2, got " + std::to_string(M));
  if (origin < 1 || origin > M) {
    throw Error(ErrorCode::InvalidArgument, "origin replica outside 1..M");
  }
  const auto k = static_cast<int>(bounded(h, static_cast<std::uint64_t>(M - 1)));  // 0..M-2
  return k + 1 < origin ? k + 1 : k + 2;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) noexcept {
  std::uint64_t z = seed;
  for (auto& w : s_) {
    z += 0x9e3779b97f4a7c15ULL;
    w = mix64(z);
  }
}

RandomStream::result_type RandomStream::operator()() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RandomStream::exponential(double rate) noexcept { return -std::log(uniform_pos()) / rate; }

std::uint64_t RandomStream::below(std::uint64_t n) noexcept { return bounded((*this)(), n); }

std::uint64_t RandomStream::poisson(double mean) noexcept {
  std::uint64_t total = 0;
  while (mean > 0.0) {
    const double chunk = std::min(mean, 16.0);
    mean -= chunk;
    double u = uniform();
    double p = std::exp(-chunk);
    double cdf = p;
    std::uint64_t k = 0;
    while (u >= cdf && p > 0.0) {
      ++k;
      p *= chunk / static_cast<double>(k);
      cdf += p;
    }
    total += k;
  }
  return total;
}

std::uint64_t stream_hash(std::uint64_t master_seed, const StreamKey& key) noexcept {
  return hash_words(master_seed, kStreamDomain, static_cast<std::int64_t>(key.replica),
                    static_cast<std::int64_t>(key.neuron), static_cast<std::uint64_t>(key.tag));
}

RandomStream derive_stream(std::uint64_t master_seed, const StreamKey& key) noexcept {
  return RandomStream(stream_hash(master_seed, key));
}

RandomStream derive_stream(std::uint64_t master_seed, const StreamKey& key,
                           std::uint64_t counter) noexcept {
  return RandomStream(hash_combine(stream_hash(master_seed, key), counter));
}

std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t path_id) noexcept {
  return hash_words(master_seed, kPathDomain, path_id);
}

// ---------------------------------------------------------------------------
// LazyPoissonField

LazyPoissonField::LazyPoissonField(std::uint64_t master_seed, StreamKey key, FieldGeometry geometry)
    : key_(key), geom_(geometry), mutex_(std::make_unique<std::mutex>()) {
  if (!(geom_.strip_width > 0.0) || !(geom_.strip_height > 0.0) || !(geom_.t_max > 0.0) ||
      !(geom_.h_max > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "field geometry must be positive");
  }
  field_hash_ = stream_hash(master_seed, key_);
  columns_ = std::max<std::int32_t>(
      1, static_cast<std::int32_t>(std::ceil(geom_.t_max / geom_.strip_width - 1e-9)));
  rows_ = std::max<std::int32_t>(
      1, static_cast<std::int32_t>(std::ceil(geom_.h_max / geom_.strip_height - 1e-9)));
  chunks_per_column_ = (rows_ + kChunk - 1) / kChunk;
  const auto n = static_cast<std::size_t>(columns_) * static_cast<std::size_t>(chunks_per_column_);
  chunks_ = std::make_unique<std::atomic<Chunk*>[]>(n);
  for (std::size_t i = 0; i < n; ++i) chunks_[i].store(nullptr, std::memory_order_relaxed);
}

LazyPoissonField::~LazyPoissonField() { release(); }

LazyPoissonField::LazyPoissonField(LazyPoissonField&& other) noexcept
    : key_(other.key_),
      geom_(other.geom_),
      field_hash_(other.field_hash_),
      columns_(other.columns_),
      rows_(other.rows_),
      chunks_per_column_(other.chunks_per_column_),
      chunks_(std::move(other.chunks_)),
      mutex_(std::move(other.mutex_)) {
  other.columns_ = 0;
  other.chunks_per_column_ = 0;
}

LazyPoissonField& LazyPoissonField::operator=(LazyPoissonField&& other) noexcept {
  if (this != &other) {
    release();
    key_ = other.key_;
    geom_ = other.geom_;
    field_hash_ = other.field_hash_;
    columns_ = other.columns_;
    rows_ = other.rows_;
    chunks_per_column_ = other.chunks_per_column_;
    chunks_ = std::move(other.chunks_);
    mutex_ = std::move(other.mutex_);
    other.columns_ = 0;
    other.chunks_per_column_ = 0;
  }
  return *this;
}

namespace {
// Most strips are empty; they all share this one.
const std::vector<FieldPoint>& empty_strip() {
  static const std::vector<FieldPoint> none;
  return none;
}
}  // namespace

void LazyPoissonField::release() noexcept {
  if (!chunks_) return;
  const auto n = static_cast<std::size_t>(columns_) * static_cast<std::size_t>(chunks_per_column_);
  for (std::size_t i = 0; i < n; ++i) {
    Chunk* chunk = chunks_[i].load(std::memory_order_relaxed);
    if (!chunk) continue;
    for (auto& s : chunk->strips) {
      auto* v = s.load(std::memory_order_relaxed);
      if (v != &empty_strip()) delete v;
    }
    delete chunk;
  }
  chunks_.reset();
}

void LazyPoissonField::throw_overflow(double level) const {
  std::ostringstream os;
  os << "intensity " << level << " exceeds embedding bound " << geom_.h_max;
  throw Error(ErrorCode::IntensityOverflow, os.str());
}

const std::vector<FieldPoint>& LazyPoissonField::strip(std::int32_t column, std::int32_t row) const {
  if (column < 0 || column >= columns_ || row < 0 || row >= rows_) {
    throw Error(ErrorCode::RegionOutOfBounds, "strip index outside the configured field");
  }
  const std::size_t ci = static_cast<std::size_t>(column) * chunks_per_column_ + row / kChunk;
  if (Chunk* chunk = chunks_[ci].load(std::memory_order_acquire)) {
    if (auto* s = chunk->strips[row % kChunk].load(std::memory_order_acquire)) return *s;
  }
  return *realize(column, row);
}

std::vector<FieldPoint>* LazyPoissonField::realize(std::int32_t column, std::int32_t row) const {
  std::lock_guard<std::mutex> lock(*mutex_);
  const std::size_t ci = static_cast<std::size_t>(column) * chunks_per_column_ + row / kChunk;
  Chunk* chunk = chunks_[ci].load(std::memory_order_acquire);
  if (!chunk) {
    chunk = new Chunk();
    chunks_[ci].store(chunk, std::memory_order_release);
  }
  auto& slot = chunk->strips[row % kChunk];
  if (auto* s = slot.load(std::memory_order_acquire)) return s;

  RandomStream rng(hash_words(field_hash_, kStripDomain, static_cast<std::int64_t>(column),
                              static_cast<std::int64_t>(row)));
  const double w = geom_.strip_width;
  const double h = geom_.strip_height;
  const auto n = rng.poisson(w * h);
  if (n == 0) {
    auto* empty = const_cast<std::vector<FieldPoint>*>(&empty_strip());
    slot.store(empty, std::memory_order_release);
    return empty;
  }
  auto pts = std::make_unique<std::vector<FieldPoint>>();
  pts->reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    FieldPoint p;
    p.time = column * w + w * rng.uniform();
    p.height = row * h + h * rng.uniform();
    pts->push_back(p);
  }
  std::sort(pts->begin(), pts->end(),
            [](const FieldPoint& a, const FieldPoint& b) { return a.time < b.time; });
  for (std::size_t k = 0; k < pts->size(); ++k) {
    (*pts)[k].id = PointId{field_hash_, column, row, static_cast<std::int32_t>(k)};
  }
  auto* raw = pts.release();
  slot.store(raw, std::memory_order_release);
  return raw;
}

std::vector<FieldPoint> LazyPoissonField::field_points(const Rect& rect) const {
  const double eps = 1e-12 * std::max(1.0, geom_.t_max);
  if (rect.t0 < 0.0 || rect.h0 < 0.0 || rect.t1 > geom_.t_max + eps ||
      rect.h1 > geom_.h_max * (1.0 + 1e-12) || rect.t1 < rect.t0 || rect.h1 < rect.h0) {
    throw Error(ErrorCode::RegionOutOfBounds, "query rectangle outside [0,T_max]x[0,H_max]");
  }
  std::vector<FieldPoint> out;
  if (rect.t1 <= rect.t0 || rect.h1 <= rect.h0) return out;
  const double w = geom_.strip_width;
  const double h = geom_.strip_height;
  const auto c0 = static_cast<std::int32_t>(rect.t0 / w);
  const auto c1 = std::min(columns_ - 1, static_cast<std::int32_t>(std::ceil(rect.t1 / w)));
  const auto r0 = static_cast<std::int32_t>(rect.h0 / h);
  const auto r1 = std::min(rows_ - 1, static_cast<std::int32_t>(std::ceil(rect.h1 / h)));
  for (std::int32_t c = c0; c <= c1; ++c) {
    for (std::int32_t r = r0; r <= r1; ++r) {
      for (const auto& p : strip(c, r)) {
        if (p.time >= rect.t0 && p.time < rect.t1 && p.height >= rect.h0 && p.height < rect.h1) {
          out.push_back(p);
        }
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const FieldPoint& a, const FieldPoint& b) { return a.time < b.time; });
  return out;
}

// ---------------------------------------------------------------------------

int routing_mark(const RoutingMark& mark, int target, int M, int origin) {
  const auto& p = mark.point();
  const std::uint64_t h =
      hash_words(p.field, kRouteDomain, static_cast<std::int64_t>(p.column),
                 static_cast<std::int64_t>(p.row), static_cast<std::int64_t>(p.index),
                 static_cast<std::int64_t>(target), static_cast<std::int64_t>(M));
  return pick_other(h, M, origin);
}

int routing_choice(std::uint64_t tag, int target, int M, int origin) {
  const std::uint64_t h = hash_words(tag, kRouteDomain, static_cast<std::int64_t>(target),
                                     static_cast<std::int64_t>(M));
  return pick_other(h, M, origin);
}

}  // namespace rmfgl
