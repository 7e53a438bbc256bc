#include "rmfgl/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "rmfgl/csv.hpp"
#include "rmfgl/error.hpp"
#include "rmfgl/gl.hpp"
#include "rmfgl/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rmfgl {

namespace {

constexpr std::uint64_t kPicardDomain = 0x5049434152440001ULL;
constexpr std::uint64_t kReferenceDomain = 0x5245464552000002ULL;

std::string num(double x) { return csv_number(x); }
std::string num(std::int64_t x) { return std::to_string(x); }
std::string num(int x) { return std::to_string(x); }
std::string flag(bool b) { return b ? "1" : "0"; }

void merge_moments(std::vector<RunningMoments>& into, const std::vector<RunningMoments>& from) {
  if (into.empty()) into.resize(from.size());
  for (std::size_t k = 0; k < from.size(); ++k) into[k].merge(from[k]);
}

void append(std::vector<std::int64_t>& into, const std::vector<std::int64_t>& from) {
  into.insert(into.end(), from.begin(), from.end());
}

}  // namespace

std::uint64_t picard_seed(std::uint64_t master_seed) { return hash_words(master_seed, kPicardDomain); }

std::optional<int> weight_denominator(const ValidatedParams& params, int max_den) {
  const int K = params.K();
  for (int q = 1; q <= max_den; ++q) {
    bool ok = true;
    for (int j = 0; j < K && ok; ++j) {
      for (int i = 0; i < K && ok; ++i) {
        if (i == j) continue;
        const double x = params.weight(j, i) * q;
        ok = std::abs(x - std::round(x)) < 1e-9;
      }
    }
    if (ok) return q;
  }
  return std::nullopt;
}

RmfSweep sweep_rmf(const ValidatedParams& params, const InitialCondition& init, int M, double T,
                   std::int64_t paths, std::uint64_t master_seed, const RmfSweepOptions& opts) {
  const int K = params.K();
  const auto times = make_grid(T, opts.grid_step);
  const std::size_t G = times.size();
  const double t_eval = opts.t_eval > 0.0 ? opts.t_eval : T;

  RmfOptions ro;
  ro.grid_step = opts.grid_step;
  ro.engine = opts.engine;
  ro.focal_replicas = {0};

  auto blocks = parallel_blocks<RmfSweep>(paths, kPathBlock, opts.threads, [&](std::int64_t a,
                                                                              std::int64_t b) {
    RmfSweep part;
    part.focal_lambda.resize(G * K);
    part.focal_square.resize(G * K);
    part.count.resize(G * K);
    part.integral.resize(G * K);
    part.channels.resize(static_cast<std::size_t>(K) * K);
    part.sources.resize(K);
    std::string snaps, tallies;
    for (std::int64_t p = a; p < b; ++p) {
      const RmfPath path = simulate_rmf(params, M, init, T, master_seed, p, ro);
      const std::size_t ge = path.grid_index(t_eval);
      for (std::size_t g = 0; g < G; ++g) {
        for (int i = 0; i < K; ++i) {
          const double l = path.intensity(g, 0, i);
          part.focal_lambda[g * K + i].add(l);
          part.focal_square[g * K + i].add(l * l);
          double n = 0.0, in = 0.0;
          for (int m = 0; m < M; ++m) {
            n += static_cast<double>(path.count(g, m, i));
            in += path.integral[path.cell(g, m, i)];
          }
          part.count[g * K + i].add(n / M);
          part.integral[g * K + i].add(in / M);
        }
      }
      const auto& tally = path.tallies.front();
      for (int j = 0; j < K; ++j) {
        std::int64_t others = 0;
        for (int n = 1; n < M; ++n) others += path.count(ge, n, j);
        auto& src = part.sources[j];
        src.others_sum.push_back(others);
        for (int n = 0; n < M; ++n) src.source_count.add(static_cast<double>(path.count(ge, n, j)));
        for (int i = 0; i < K; ++i) {
          if (i == j) continue;
          auto& ch = part.channels[static_cast<std::size_t>(i) * K + j];
          ch.arrivals.push_back(tally.channel[(ge * K + i) * K + j]);
          ch.others_sum.push_back(others);
        }
      }
      if (opts.keep_final_counts) {
        std::vector<std::int64_t> fc(static_cast<std::size_t>(M) * K);
        for (int m = 0; m < M; ++m)
          for (int i = 0; i < K; ++i) fc[m * K + i] = path.count(G - 1, m, i);
        part.final_counts.push_back(std::move(fc));
      }
      if (p < opts.dump_paths) {
        for (std::size_t g = 0; g < G; ++g) {
          for (int m = 0; m < M; ++m) {
            for (int i = 0; i < K; ++i) {
              snaps += num(p) + ',' + num(times[g]) + ',' + num(M) + ',' + num(m + 1) + ',' +
                       num(i + 1) + ',' + num(path.intensity(g, m, i)) + ',' +
                       num(path.count(g, m, i)) + '\n';
            }
          }
          for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j) {
              if (i == j) continue;
              tallies += num(p) + ',' + num(times[g]) + ',' + num(M) + ",1," + num(i + 1) + ',' +
                         num(j + 1) + ',' + num(tally.channel[(g * K + i) * K + j]) + '\n';
            }
          }
        }
      }
    }
    part.snapshot_rows = std::move(snaps);
    part.tally_rows = std::move(tallies);
    return part;
  });

  RmfSweep out;
  out.M = M;
  out.K = K;
  out.paths = paths;
  out.t_eval = t_eval;
  out.times = times;
  out.channels.resize(static_cast<std::size_t>(K) * K);
  out.sources.resize(K);
  for (auto& blk : blocks) {
    merge_moments(out.focal_lambda, blk.focal_lambda);
    merge_moments(out.focal_square, blk.focal_square);
    merge_moments(out.count, blk.count);
    merge_moments(out.integral, blk.integral);
    for (int j = 0; j < K; ++j) {
      append(out.sources[j].others_sum, blk.sources[j].others_sum);
      out.sources[j].source_count.merge(blk.sources[j].source_count);
    }
    for (std::size_t c = 0; c < out.channels.size(); ++c) {
      append(out.channels[c].arrivals, blk.channels[c].arrivals);
      append(out.channels[c].others_sum, blk.channels[c].others_sum);
    }
    for (auto& fc : blk.final_counts) out.final_counts.push_back(std::move(fc));
    out.snapshot_rows += blk.snapshot_rows;
    out.tally_rows += blk.tally_rows;
  }
  for (int j = 0; j < K; ++j) out.sources[j].M = M;
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      auto& ch = out.channels[static_cast<std::size_t>(i) * K + j];
      ch.M = M;
      ch.source_count = out.sources[j].source_count;
    }
  }
  out.focal_mean.M = M;
  out.focal_mean.K = K;
  out.focal_mean.times = times;
  for (const auto& mom : out.focal_lambda) {
    out.focal_mean.mean.push_back(mom.mean());
    out.focal_mean.se.push_back(mom.se());
  }
  return out;
}

GlSweep sweep_gl(const ValidatedParams& params, const InitialCondition& init, double T,
                 std::int64_t paths, std::uint64_t master_seed, double grid_step, int threads) {
  const int K = params.K();
  const auto times = make_grid(T, grid_step);
  const std::size_t G = times.size();
  GlOptions go;
  go.grid_step = grid_step;
  auto blocks = parallel_blocks<GlSweep>(paths, kPathBlock, threads, [&](std::int64_t a,
                                                                         std::int64_t b) {
    GlSweep part;
    part.count.resize(G * K);
    part.integral.resize(G * K);
    for (std::int64_t p = a; p < b; ++p) {
      const GlPath path = simulate_gl(params, init, T, master_seed, p, go);
      for (std::size_t c = 0; c < G * K; ++c) {
        part.count[c].add(static_cast<double>(path.summary.counts[c]));
        part.integral[c].add(path.summary.integral[c]);
      }
      part.final_counts.emplace_back(path.summary.counts.end() - K, path.summary.counts.end());
    }
    return part;
  });
  GlSweep out;
  out.paths = paths;
  out.times = times;
  for (auto& blk : blocks) {
    merge_moments(out.count, blk.count);
    merge_moments(out.integral, blk.integral);
    for (auto& fc : blk.final_counts) out.final_counts.push_back(std::move(fc));
  }
  return out;
}

MgfResult mgf_experiment(const ValidatedParams& params, const InitialCondition& init, int M,
                         const std::vector<double>& u, std::int64_t paths, double burn_in,
                         double window, double sample_step, std::uint64_t master_seed,
                         int threads, double gap_threshold) {
  const double T = burn_in + window;
  RmfOptions ro;
  ro.grid_step = sample_step;
  ro.focal_replicas = {};
  const auto proto = MgfAccumulator(params, M, u);
  auto blocks = parallel_blocks<std::optional<MgfAccumulator>>(
      paths, kPathBlock, threads, [&](std::int64_t a, std::int64_t b) {
        MgfAccumulator acc = proto;
        std::vector<double> states;
        for (std::int64_t p = a; p < b; ++p) {
          const RmfPath path = simulate_rmf(params, M, init, T, master_seed, p, ro);
          states.clear();
          for (std::size_t g = 0; g < path.times.size(); ++g) {
            if (path.times[g] < burn_in - 1e-9) continue;
            const std::size_t base = path.cell(g, 0, 0);
            states.insert(states.end(), path.lambda.begin() + base,
                          path.lambda.begin() + base + static_cast<std::size_t>(M) * path.K);
          }
          acc.add_path(states);
        }
        return std::optional<MgfAccumulator>(std::move(acc));
      });
  MgfAccumulator total = proto;
  for (const auto& blk : blocks) total.merge(*blk);
  return total.finish(gap_threshold);
}

// ---------------------------------------------------------------------------

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::InvalidArgument, "SHA-256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IncompleteRun, "missing " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return sha256_hex(os.str());
}

std::string canonical_json(const json& j) { return j.dump(); }

namespace {

struct Context {
  ExperimentConfig cfg;
  ValidatedParams params;
  RunOptions opts;
  fs::path dir;
  json summary = json::object();
  bool pass = true;
};

void check(Context& ctx, const std::string& key, bool ok) {
  ctx.summary[key] = ok;
  ctx.pass = ctx.pass && ok;
}

fs::path prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::ConfigInvalid, dir.string() + " is a file");
    if (!fs::is_empty(dir)) {
      if (!force) {
        throw Error(ErrorCode::OutputDirNotEmpty, dir.string() + " is not empty (use --force)");
      }
      for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
    }
  } else {
    fs::create_directories(dir);
  }
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::InvalidArgument, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---- gl --------------------------------------------------------------------

void run_gl(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& params = ctx.params;
  const int K = params.K();
  const auto sweep =
      sweep_gl(params, cfg.init, cfg.horizon, cfg.paths, cfg.seed, cfg.grid_step, ctx.opts.threads);

  CsvWriter snaps(ctx.dir / "snapshots.csv", {"path", "t", "M", "replica", "neuron", "lambda", "n_count"});
  std::ofstream events(ctx.dir / "events.csv", std::ios::binary);
  write_event_log_header(events);
  GlOptions go;
  go.grid_step = cfg.grid_step;
  go.record_trajectories = true;
  const std::int64_t dump = std::min<std::int64_t>(ctx.opts.dump_paths, cfg.paths);
  for (std::int64_t p = 0; p < dump; ++p) {
    const GlPath path = simulate_gl(params, cfg.init, cfg.horizon, cfg.seed, p, go);
    for (std::size_t g = 0; g < path.summary.times.size(); ++g) {
      for (int i = 0; i < K; ++i) {
        snaps.row({num(p), num(path.summary.times[g]), "1", "1", num(i + 1),
                   num(path.summary.lambda[g * K + i]), num(path.summary.count(g, i))});
      }
    }
    for (const auto& tr : path.trajectories) write_event_log(events, static_cast<std::uint64_t>(p), tr);
  }
  snaps.close();

  CsvWriter ident(ctx.dir / "intensity.csv",
                  {"t", "neuron", "mean_count", "mean_integral", "pooled_se", "z"});
  bool ok = true;
  for (std::size_t g = 1; g < sweep.times.size(); ++g) {
    for (int i = 0; i < K; ++i) {
      const auto& n = sweep.count[g * K + i];
      const auto& in = sweep.integral[g * K + i];
      const double se = std::hypot(n.se(), in.se());
      const double z = se > 0 ? (n.mean() - in.mean()) / se : 0.0;
      ok = ok && std::abs(z) <= 3.0;
      ident.row({num(sweep.times[g]), num(i + 1), num(n.mean()), num(in.mean()), num(se), num(z)});
    }
  }
  ident.close();
  check(ctx, "intensity_identity", ok);

  const auto* det = std::get_if<DeterministicInit>(&cfg.init.kind);
  if (K == 1 && det) {
    const auto law = single_neuron_law(det->values[0], params.r(0), cfg.horizon);
    EmpiricalPmf pmf;
    for (const auto& fc : sweep.final_counts) pmf.add(fc[0]);
    ExactPmf q;
    q.p = law.pmf;
    q.tail = law.tail;
    const auto tv = empirical_tv(pmf, q);
    CsvWriter sn(ctx.dir / "single_neuron.csv", {"n", "empirical", "exact"});
    const std::size_t len = std::max(pmf.counts.size(), law.pmf.size());
    for (std::size_t k = 0; k < len; ++k) {
      sn.row({num(static_cast<std::int64_t>(k)), num(pmf.p(static_cast<std::int64_t>(k))),
              num(k < law.pmf.size() ? law.pmf[k] : 0.0)});
    }
    sn.close();
    ctx.summary["single_neuron_tv_value"] = tv.value;
    check(ctx, "single_neuron_tv", tv.value < 0.01 || tv.value <= tv.bias_bound + 3.0 * tv.se);
  }
}

// ---- rmf -------------------------------------------------------------------

void run_rmf(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& params = ctx.params;
  const int K = params.K();
  CsvWriter snaps(ctx.dir / "snapshots.csv", {"path", "t", "M", "replica", "neuron", "lambda", "n_count"});
  CsvWriter tallies(ctx.dir / "tallies.csv", {"path", "t", "M", "focal_replica", "focal_neuron",
                                              "source_neuron", "channel_count"});
  CsvWriter ident(ctx.dir / "intensity.csv",
                  {"M", "t", "neuron", "mean_count", "mean_integral", "pooled_se", "z"});
  CsvWriter means(ctx.dir / "means_rmf.csv", {"M", "t", "neuron", "mean", "se"});
  CsvWriter moments(ctx.dir / "moments.csv",
                    {"M", "p", "neuron", "t", "empirical", "se", "bound", "margin", "pass"});
  const auto bounds = moment_bounds(params, cfg.init, cfg.horizon);
  bool ident_ok = true, moments_ok = true;
  for (int M : cfg.m_list) {
    RmfSweepOptions so;
    so.engine = cfg.engine;
    so.grid_step = cfg.grid_step;
    so.threads = ctx.opts.threads;
    so.dump_paths = ctx.opts.dump_paths;
    const auto sw = sweep_rmf(params, cfg.init, M, cfg.horizon, cfg.paths, cfg.seed, so);
    snaps.raw(sw.snapshot_rows);
    tallies.raw(sw.tally_rows);
    const std::size_t G = sw.times.size();
    for (std::size_t g = 0; g < G; ++g) {
      for (int i = 0; i < K; ++i) {
        means.row({num(M), num(sw.times[g]), num(i + 1), num(sw.focal_mean.mean[g * K + i]),
                   num(sw.focal_mean.se[g * K + i])});
        if (g == 0) continue;
        const auto& n = sw.count[g * K + i];
        const auto& in = sw.integral[g * K + i];
        const double se = std::hypot(n.se(), in.se());
        const double z = se > 0 ? (n.mean() - in.mean()) / se : 0.0;
        ident_ok = ident_ok && std::abs(z) <= 3.0;
        ident.row({num(M), num(sw.times[g]), num(i + 1), num(n.mean()), num(in.mean()), num(se), num(z)});
      }
    }
    for (int i = 0; i < K; ++i) {
      for (int p = 1; p <= 2; ++p) {
        const auto& mom = p == 1 ? sw.focal_lambda[(G - 1) * K + i] : sw.focal_square[(G - 1) * K + i];
        const auto mc = moment_bound_check(mom, p, i, bounds);
        moments_ok = moments_ok && mc.pass;
        moments.row({num(M), num(p), num(i + 1), num(cfg.horizon), num(mc.empirical), num(mc.se),
                     num(mc.bound), num(mc.margin), flag(mc.pass)});
      }
    }
  }
  snaps.close();
  tallies.close();
  ident.close();
  means.close();
  moments.close();
  check(ctx, "intensity_identity", ident_ok);
  check(ctx, "moment_bounds", moments_ok);
}

// ---- limit -----------------------------------------------------------------

PicardResult solve_picard(Context& ctx) {
  PicardOptions po;
  po.max_iters = ctx.opts.picard_iters;
  po.tol = ctx.opts.picard_tol;
  po.grid_step = ctx.cfg.grid_step;
  po.threads = ctx.opts.threads;
  const std::int64_t n = ctx.opts.picard_paths > 0 ? ctx.opts.picard_paths : ctx.cfg.paths;
  auto res = picard_solve_means(ctx.params, ctx.cfg.init, ctx.cfg.horizon, n,
                                picard_seed(ctx.cfg.seed), po);
  const int K = ctx.params.K();
  CsvWriter means(ctx.dir / "means.csv", {"t", "neuron", "mean", "se", "cumulative"});
  for (std::size_t g = 0; g < res.means.times.size(); ++g) {
    for (int j = 0; j < K; ++j) {
      means.row({num(res.means.times[g]), num(j + 1), num(res.means.mean[g * K + j]),
                 num(res.means.se[g * K + j]), num(res.means.cumulative[g * K + j])});
    }
  }
  means.close();
  CsvWriter hist(ctx.dir / "picard.csv", {"iteration", "gap", "noise"});
  for (std::size_t k = 0; k < res.gaps.size(); ++k)
    hist.row({num(static_cast<std::int64_t>(k + 1)), num(res.gaps[k]), num(res.noise[k])});
  hist.close();
  return res;
}

void run_limit(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& params = ctx.params;
  const int K = params.K();
  const auto pic = solve_picard(ctx);
  check(ctx, "picard_converged", pic.converged);
  const double T = cfg.horizon;

  struct Part {
    std::vector<EmpiricalPmf> pmf;
  };
  auto blocks = parallel_blocks<Part>(cfg.paths, kPathBlock, ctx.opts.threads, [&](std::int64_t a,
                                                                                  std::int64_t b) {
    Part part;
    part.pmf.resize(static_cast<std::size_t>(K) * K);
    for (std::int64_t p = a; p < b; ++p) {
      const auto path = simulate_limit_path(params, cfg.init, pic.means, T, cfg.seed, p);
      const std::size_t g = path.times.size() - 1;
      for (int j = 0; j < K; ++j)
        for (int i = 0; i < K; ++i)
          if (i != j) part.pmf[j * K + i].add(path.arrival(g, j, i));
    }
    return part;
  });
  std::vector<EmpiricalPmf> pmf(static_cast<std::size_t>(K) * K);
  for (const auto& blk : blocks) {
    for (std::size_t c = 0; c < pmf.size(); ++c) {
      auto& into = pmf[c];
      const auto& from = blk.pmf[c];
      if (from.counts.size() > into.counts.size()) into.counts.resize(from.counts.size(), 0);
      for (std::size_t k = 0; k < from.counts.size(); ++k) into.counts[k] += from.counts[k];
      into.n += from.n;
    }
  }
  CsvWriter out(ctx.dir / "limit_channels.csv",
                {"source_neuron", "target_neuron", "t", "expected_mean", "empirical_mean", "tv",
                 "tv_se", "tv_bias"});
  bool ok = true;
  for (int j = 0; j < K; ++j) {
    for (int i = 0; i < K; ++i) {
      if (i == j) continue;
      const double a = pic.means.integral(j, T);
      const auto tv = empirical_tv(pmf[j * K + i], poisson_pmf(a));
      ok = ok && tv.value <= tv.bias_bound + 3.0 * tv.se;
      out.row({num(j + 1), num(i + 1), num(T), num(a), num(pmf[j * K + i].mean()), num(tv.value),
               num(tv.se), num(tv.bias_bound)});
    }
  }
  out.close();
  check(ctx, "channel_poisson", ok);
}

// ---- phi -------------------------------------------------------------------

void run_phi(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& params = ctx.params;
  const int K = params.K();
  const int M = cfg.m_list.front();
  const double T = cfg.horizon;
  const std::int64_t n =
      ctx.opts.phi_paths > 0 ? ctx.opts.phi_paths : std::min<std::int64_t>(cfg.paths, 10000);
  PhiOptions po{cfg.grid_step, 1000.0};

  const auto curve = phi_contraction_curve(params, cfg.init, M, T, ctx.opts.phi_iterations, n,
                                           cfg.seed, po, ctx.opts.threads);
  CsvWriter cc(ctx.dir / "contraction.csv", {"l", "d_l", "se"});
  bool monotone = true;
  for (std::size_t l = 0; l < curve.d.size(); ++l) {
    cc.row({num(static_cast<std::int64_t>(l + 1)), num(curve.d[l]), num(curve.se[l])});
    if (l > 0) {
      monotone = monotone &&
                 curve.d[l] <= curve.d[l - 1] + 3.0 * std::hypot(curve.se[l], curve.se[l - 1]);
    }
  }
  cc.close();
  check(ctx, "contraction_nonincreasing", monotone);

  RmfOptions ro;
  ro.grid_step = cfg.grid_step;
  ro.engine = Engine::Embedded;
  ro.record_spikes = true;
  struct Part {
    std::int64_t identical = 0;
    std::vector<std::vector<std::int64_t>> counts;
  };
  auto blocks = parallel_blocks<Part>(n, kPathBlock, ctx.opts.threads, [&](std::int64_t a,
                                                                           std::int64_t b) {
    Part part;
    for (std::int64_t p = a; p < b; ++p) {
      const RmfPath path = simulate_rmf(params, M, cfg.init, T, cfg.seed, p, ro);
      SpikeInput in{T, M, K, path.spikes};
      const PhiOutput outp = phi_apply(in, params, cfg.init, T, cfg.seed, p, po);
      bool same = true;
      std::vector<std::int64_t> c(static_cast<std::size_t>(M) * K);
      for (std::size_t s = 0; s < c.size(); ++s) {
        const auto& x = in.trains[s];
        const auto& y = outp.spikes.trains[s];
        c[s] = static_cast<std::int64_t>(y.size());
        same = same && x.size() == y.size();
        for (std::size_t k = 0; same && k < x.size(); ++k)
          same = x[k].time == y[k].time && x[k].id == y[k].id;
      }
      part.identical += same ? 1 : 0;
      part.counts.push_back(std::move(c));
    }
    return part;
  });
  std::int64_t identical = 0;
  std::vector<std::vector<std::int64_t>> replay;
  for (auto& blk : blocks) {
    identical += blk.identical;
    for (auto& c : blk.counts) replay.push_back(std::move(c));
  }
  RmfSweepOptions so;
  so.engine = Engine::Direct;
  so.grid_step = cfg.grid_step;
  so.threads = ctx.opts.threads;
  so.keep_final_counts = true;
  const auto ref = sweep_rmf(params, cfg.init, M, T, n, hash_words(cfg.seed, kReferenceDomain), so);
  const auto chi = two_sample_chi_square(replay, ref.final_counts);
  CsvWriter rp(ctx.dir / "replay.csv",
               {"M", "paths", "identical_paths", "chi_square", "dof", "p_value"});
  rp.row({num(M), num(n), num(identical), num(chi.statistic), num(chi.dof), num(chi.p_value)});
  rp.close();
  check(ctx, "replay_identical", identical == n);
  check(ctx, "replay_law", chi.p_value > 0.0027);
}

// ---- convergence -------------------------------------------------------------

/// Law of sum_j mu_{j->i} Poisson(a_j) on the lattice 1/q.
ExactPmf weighted_poisson(const std::vector<std::pair<int, double>>& terms) {
  std::vector<double> law{1.0};
  double tail = 0.0;
  for (const auto& [step, mean] : terms) {
    const auto q = poisson_pmf(mean);
    tail += q.tail;
    std::vector<double> next(law.size() + (q.p.size() - 1) * step, 0.0);
    for (std::size_t a = 0; a < law.size(); ++a)
      for (std::size_t k = 0; k < q.p.size(); ++k) next[a + k * step] += law[a] * q.p[k];
    law = std::move(next);
  }
  ExactPmf out;
  out.p = std::move(law);
  out.tail = tail;
  return out;
}

void run_convergence(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& params = ctx.params;
  const int K = params.K();
  const double T = cfg.horizon;
  const double t_eval = ctx.opts.t_eval > 0.0 ? ctx.opts.t_eval : T;
  const auto pic = solve_picard(ctx);
  ctx.summary["picard_converged"] = pic.converged;

  CsvWriter tv(ctx.dir / "tv.csv",
               {"M", "t", "focal_neuron", "source_neuron", "mean_arrivals", "reference_mean", "tv",
                "tv_se", "tv_bias", "tv_empirical", "term1", "term2", "bound", "bound_se",
                "dominates"});
  CsvWriter tl(ctx.dir / "tlln.csv", {"M", "neuron", "t", "error", "se"});
  CsvWriter me(ctx.dir / "mean_equality.csv",
               {"M", "t", "neuron", "rmf_mean", "rmf_se", "limit_mean", "limit_se", "z"});
  CsvWriter snaps(ctx.dir / "snapshots.csv", {"path", "t", "M", "replica", "neuron", "lambda", "n_count"});
  CsvWriter tallies(ctx.dir / "tallies.csv", {"path", "t", "M", "focal_replica", "focal_neuron",
                                              "source_neuron", "channel_count"});
  const auto den = weight_denominator(params);
  std::optional<CsvWriter> wtv;
  if (den) wtv.emplace(ctx.dir / "weighted_tv.csv", std::vector<std::string>{"M", "t", "neuron", "denominator", "tv", "tv_se"});

  std::vector<MeanSeries> series;
  for (int M : cfg.m_list) {
    RmfSweepOptions so;
    so.engine = cfg.engine;
    so.grid_step = cfg.grid_step;
    so.t_eval = t_eval;
    so.threads = ctx.opts.threads;
    so.dump_paths = ctx.opts.dump_paths;
    const auto sw = sweep_rmf(params, cfg.init, M, T, cfg.paths, cfg.seed, so);
    snaps.raw(sw.snapshot_rows);
    tallies.raw(sw.tally_rows);
    series.push_back(sw.focal_mean);
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < K; ++j) {
        if (i == j) continue;
        const auto& ch = sw.channels[static_cast<std::size_t>(i) * K + j];
        const double ref = pic.means.integral(j, t_eval);
        const auto rep = chen_stein_bound(ch, ref);
        double mean_arr = 0.0;
        for (auto a : ch.arrivals) mean_arr += static_cast<double>(a);
        mean_arr /= static_cast<double>(ch.arrivals.size());
        tv.row({num(M), num(t_eval), num(i + 1), num(j + 1), num(mean_arr), num(ref),
                num(rep.tv.value), num(rep.tv.se), num(rep.tv.bias_bound), num(rep.tv_empirical.value),
                num(rep.terms.term1), num(rep.terms.term2), num(rep.terms.bound), num(rep.bound_se),
                flag(rep.dominates)});
      }
      if (wtv && K > 1) {
        // Lattice index of A_{1,i} = q * sum_j mu_{j->i} A_{j->(1,i)}.
        EmpiricalPmf pmf;
        pmf.spacing = 1.0 / *den;
        std::vector<std::pair<int, double>> terms;
        for (int j = 0; j < K; ++j) {
          if (j == i) continue;
          const int step = static_cast<int>(std::lround(params.weight(j, i) * *den));
          terms.emplace_back(step, pic.means.integral(j, t_eval));
        }
        const std::size_t n = sw.channels[static_cast<std::size_t>(i) * K + (i == 0 ? 1 : 0)].arrivals.size();
        for (std::size_t p = 0; p < n; ++p) {
          std::int64_t idx = 0;
          for (int j = 0; j < K; ++j) {
            if (j == i) continue;
            idx += std::lround(params.weight(j, i) * *den) *
                   sw.channels[static_cast<std::size_t>(i) * K + j].arrivals[p];
          }
          pmf.add(idx);
        }
        auto q = weighted_poisson(terms);
        q.spacing = pmf.spacing;
        const auto w = empirical_tv(pmf, q);
        wtv->row({num(M), num(t_eval), num(i + 1), num(*den), num(w.value), num(w.se)});
      }
    }
    for (int j = 0; j < K; ++j) {
      const auto tr = tlln_error(sw.sources[j]);
      tl.row({num(M), num(j + 1), num(t_eval), num(tr.error), num(tr.se)});
    }
  }
  const auto meq = mean_equality_check(series, pic.means, T);
  for (const auto& c : meq.cells) {
    me.row({num(c.M), num(c.t), num(c.neuron + 1), num(c.rmf_mean), num(c.rmf_se),
            num(c.limit_mean), num(c.limit_se), num(c.z)});
  }
  tv.close();
  tl.close();
  me.close();
  snaps.close();
  tallies.close();
  if (wtv) wtv->close();

  const json s = emit_summary(ctx.dir);
  for (const auto& key : {"tv_monotone", "bound_dominates", "mean_equality", "tlln_decreasing"})
    check(ctx, key, s.at(key).get<bool>());
}

// ---- stein -------------------------------------------------------------------

void run_stein(Context& ctx) {
  RandomStream rng = derive_stream(ctx.cfg.seed, StreamKey{1, 1, StreamTag::Auxiliary});
  struct Case {
    double lambda;
    std::vector<int> B;
  };
  std::vector<Case> cases;
  for (double l : ctx.opts.stein_lambdas) {
    cases.push_back({l, {0}});
    cases.push_back({l, {static_cast<int>(std::floor(l))}});
  }
  for (int c = 0; c < ctx.opts.stein_cases; ++c) {
    Case cs;
    cs.lambda = 0.25 + 7.75 * rng.uniform();
    for (int k = 0; k <= 30; ++k)
      if (rng.uniform() < 0.5) cs.B.push_back(k);
    cases.push_back(std::move(cs));
  }
  CsvWriter out(ctx.dir / "stein.csv",
                {"case", "lambda", "set", "k_max", "sup_g", "sup_dg", "max_residual", "dg_within",
                 "g_within_sqrt", "g_within_linear"});
  bool residual_ok = true, dg_ok = true;
  std::int64_t sqrt_holds = 0, linear_holds = 0;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& cs = cases[c];
    const int b_max = cs.B.empty() ? 0 : *std::max_element(cs.B.begin(), cs.B.end());
    const int k_max = std::max(b_max + 10, 60);
    const auto sol = stein_solve(cs.lambda, cs.B, k_max);
    residual_ok = residual_ok && sol.max_residual <= 1e-12;
    dg_ok = dg_ok && sol.dg_within;
    sqrt_holds += sol.g_within_sqrt;
    linear_holds += sol.g_within_linear;
    std::string set;
    for (std::size_t k = 0; k < cs.B.size(); ++k) set += (k ? " " : "") + std::to_string(cs.B[k]);
    out.row({num(static_cast<std::int64_t>(c)), num(cs.lambda), set, num(k_max), num(sol.sup_g),
             num(sol.sup_dg), num(sol.max_residual), flag(sol.dg_within), flag(sol.g_within_sqrt),
             flag(sol.g_within_linear)});
  }
  out.close();
  check(ctx, "stein_equation", residual_ok);
  check(ctx, "stein_dg_bound", dg_ok);
  ctx.summary["stein_cases"] = cases.size();
  ctx.summary["g_bound_sqrt_holds"] = sqrt_holds;
  ctx.summary["g_bound_linear_holds"] = linear_holds;
}

// ---- mgf ---------------------------------------------------------------------

void run_mgf(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& params = ctx.params;
  const int K = params.K();
  const double burn = ctx.opts.burn_in > 0.0 ? ctx.opts.burn_in : 50.0 / params.min_reset();
  CsvWriter out(ctx.dir / "mgf.csv", {"M", "u_max", "residual", "se", "z", "residual_alt", "se_alt",
                                      "z_alt", "window_z", "paths"});
  bool zero_ok = true, ok = true;
  for (int M : cfg.m_list) {
    for (double level : {0.0, ctx.opts.mgf_u}) {
      std::vector<double> u(static_cast<std::size_t>(M) * K, 0.0);
      for (int i = 0; i < K; ++i) u[i] = level;
      const auto r = mgf_experiment(params, cfg.init, M, u, cfg.paths, burn, ctx.opts.window,
                                    ctx.opts.sample_step, cfg.seed, ctx.opts.threads);
      const double z = r.se > 0 ? r.residual / r.se : 0.0;
      const double z_alt = r.se_alt > 0 ? r.residual_alt / r.se_alt : 0.0;
      if (level == 0.0) {
        zero_ok = zero_ok && r.residual == 0.0;
      } else {
        ok = ok && std::abs(z) <= 3.0;
      }
      out.row({num(M), num(level), num(r.residual), num(r.se), num(z), num(r.residual_alt),
               num(r.se_alt), num(z_alt), num(r.window_z), num(r.paths)});
    }
  }
  out.close();
  check(ctx, "mgf_zero_exact", zero_ok);
  check(ctx, "mgf_residual", ok);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg_in, const std::string& subcommand,
                         const RunOptions& opts) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), subcommand) == names.end()) {
    throw Error(ErrorCode::ConfigInvalid, "unknown subcommand " + subcommand);
  }
  ExperimentConfig cfg = cfg_in;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out) cfg.output_dir = *opts.out;
  if (cfg.output_dir.empty()) throw Error(ErrorCode::ConfigInvalid, "no output directory");
  validate_config(cfg);

  Context ctx{cfg, validate_params(cfg.params), opts, prepare_dir(cfg.output_dir, opts.force)};
  validate_initial(cfg.init, ctx.params);
  const fs::path marker = ctx.dir / ".incomplete";
  { std::ofstream(marker) << subcommand << '\n'; }
  const auto start = std::chrono::steady_clock::now();

  if (subcommand == "gl") run_gl(ctx);
  else if (subcommand == "rmf") run_rmf(ctx);
  else if (subcommand == "limit") run_limit(ctx);
  else if (subcommand == "phi") run_phi(ctx);
  else if (subcommand == "convergence") run_convergence(ctx);
  else if (subcommand == "stein") run_stein(ctx);
  else run_mgf(ctx);

  ctx.summary["schema_version"] = kSummarySchemaVersion;
  ctx.summary["subcommand"] = subcommand;
  ctx.summary["all_pass"] = ctx.pass;
  write_json(ctx.dir / "summary.json", ctx.summary);

  json hashed = config_to_json(cfg);
  hashed.erase("output_dir");
  json manifest;
  manifest["schema_version"] = kSummarySchemaVersion;
  manifest["tool_version"] = RMFGL_VERSION;
  manifest["subcommand"] = subcommand;
  manifest["config_hash"] = sha256_hex(canonical_json(hashed));
  manifest["seed"] = cfg.seed;
  manifest["paths"] = cfg.paths;
  manifest["m_list"] = cfg.m_list;
  manifest["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json files = json::object();
  for (const auto& e : fs::directory_iterator(ctx.dir)) {
    const auto name = e.path().filename().string();
    if (name == ".incomplete" || name == "manifest.json" || !e.is_regular_file()) continue;
    files[name] = sha256_file(e.path());
  }
  manifest["files"] = files;
  write_json(ctx.dir / "manifest.json", manifest);
  fs::remove(marker);
  return {ctx.dir, ctx.pass, ctx.summary};
}

json emit_summary(const fs::path& dir) {
  const auto tv = read_csv(dir / "tv.csv");
  const auto tl = read_csv(dir / "tlln.csv");
  const auto me = read_csv(dir / "mean_equality.csv");

  // (focal, source) -> [(M, tv, se)]
  std::map<std::pair<int, int>, std::vector<std::array<double, 3>>> channels;
  bool dominates = !tv.rows.empty();
  for (std::size_t r = 0; r < tv.rows.size(); ++r) {
    const int i = static_cast<int>(tv.number(r, "focal_neuron"));
    const int j = static_cast<int>(tv.number(r, "source_neuron"));
    channels[{i, j}].push_back({tv.number(r, "M"), tv.number(r, "tv"), tv.number(r, "tv_se")});
    const double bound = tv.number(r, "bound");
    const double sigma = std::hypot(tv.number(r, "tv_se"), tv.number(r, "bound_se"));
    dominates = dominates && bound >= tv.number(r, "tv") + 3.0 * sigma;
  }
  auto decreasing = [](std::vector<std::array<double, 3>> v) {
    std::sort(v.begin(), v.end());
    if (v.size() < 2) return false;
    for (std::size_t k = 1; k < v.size(); ++k)
      if (!(v[k - 1][1] - v[k][1] > 3.0 * std::hypot(v[k - 1][2], v[k][2]))) return false;
    return true;
  };
  bool tv_monotone = !channels.empty();
  for (const auto& [key, v] : channels) tv_monotone = tv_monotone && decreasing(v);

  std::map<int, std::vector<std::array<double, 3>>> neurons;
  for (std::size_t r = 0; r < tl.rows.size(); ++r) {
    neurons[static_cast<int>(tl.number(r, "neuron"))].push_back(
        {tl.number(r, "M"), tl.number(r, "error"), tl.number(r, "se")});
  }
  bool tlln = !neurons.empty();
  for (const auto& [key, v] : neurons) tlln = tlln && decreasing(v);

  bool means = !me.rows.empty();
  double max_z = 0.0;
  for (std::size_t r = 0; r < me.rows.size(); ++r) {
    const double z = std::abs(me.number(r, "z"));
    max_z = std::max(max_z, z);
    means = means && z <= 3.0;
  }
  json s;
  s["schema_version"] = kSummarySchemaVersion;
  s["tv_monotone"] = tv_monotone;
  s["bound_dominates"] = dominates;
  s["mean_equality"] = means;
  s["mean_equality_max_abs_z"] = max_z;
  s["tlln_decreasing"] = tlln;
  return s;
}

}  // namespace rmfgl
