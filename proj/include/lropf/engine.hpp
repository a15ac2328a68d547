#pragma once

// Low-rank coordinate descent on the augmented Lagrangian: per iteration an
// exact coordinate sweep over the auxiliary variables, a cyclic sweep over
// the entries of R with closed-form quartic steps, a multiplier step and a
// penalty-schedule step. The rank schedule runs r = 1 first and falls back
// to higher ranks only when r = 1 stalls.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lropf/auglag.hpp"
#include "lropf/certify.hpp"
#include "lropf/instance.hpp"
#include "lropf/network.hpp"
#include "lropf/polyroot.hpp"

namespace lropf {

struct MuSchedule {
  enum class Kind { fixed, geometric, adaptive };
  Kind kind = Kind::fixed;
  double factor = 1.0;   // geometric: mu <- factor * mu
  double theta = 0.999;  // adaptive: accept when T_new <= theta * T_prev
  double beta = 2.0;     // adaptive: mu <- mu / beta on rejection
  double mu_min = 1e-12;  // floor for geometric and adaptive decreases

  static MuSchedule fixed() { return {}; }
  static MuSchedule geometric(double f) {
    MuSchedule m;
    m.kind = Kind::geometric;
    m.factor = f;
    return m;
  }
  static MuSchedule adaptive(double theta = 0.999, double beta = 2.0) {
    MuSchedule m;
    m.kind = Kind::adaptive;
    m.theta = theta;
    m.beta = beta;
    return m;
  }
};

struct SolveConfig {
  std::vector<int> rank_schedule{1, 2};
  /// mu is the inverse penalty weight: residuals are charged 1/(2 mu) r^2.
  double mu0 = 1e-4;
  MuSchedule mu_schedule{};
  double nu = 0.0;
  double tol_T = 1e-5;
  /// Also require relative stationarity in R (see stationarity()) below this;
  /// 0 stops on infeasibility alone.
  double tol_stat = 1e-4;
  int max_inner = 10000;
  std::uint64_t seed = 1;
  /// 0 or 1: deterministic single-threaded sweeps; more: parallel sweeps.
  int threads = 1;
  /// Higher-rank stages start from [previous R, small noise] instead of fresh.
  bool warm_start = true;
  double warm_noise = 1e-2;
  double rank_tol = 1e-4;
  bool record_trace = false;
  InstanceOptions instance{};
  /// Start the first stage from this state instead of a random draw.
  std::optional<AugLagState> initial_state{};

  void validate() const {
    if (!(mu0 > 0.0)) throw std::invalid_argument("SolveConfig: mu0 must be positive");
    if (!(tol_T > 0.0)) throw std::invalid_argument("SolveConfig: tol_T must be positive");
    if (rank_schedule.empty()) throw std::invalid_argument("SolveConfig: empty rank schedule");
    for (int r : rank_schedule)
      if (r < 1) throw std::invalid_argument("SolveConfig: ranks must be >= 1");
    if (mu_schedule.kind == MuSchedule::Kind::adaptive &&
        !(mu_schedule.theta > 0.0 && mu_schedule.theta < 1.0 && mu_schedule.beta > 1.0))
      throw std::invalid_argument("SolveConfig: adaptive schedule needs 0 < theta < 1 < beta");
    if (mu_schedule.kind == MuSchedule::Kind::geometric && !(mu_schedule.factor > 0.0))
      throw std::invalid_argument("SolveConfig: geometric factor must be positive");
    if (max_inner < 0) throw std::invalid_argument("SolveConfig: negative iteration limit");
  }
};

enum class SolveStatus { converged, iteration_limit, rejected_rank };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::iteration_limit: return "iteration-limit";
    case SolveStatus::rejected_rank: return "rejected-rank";
  }
  return "unknown";
}

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double T = 0.0;
  double mu = 0.0;
  bool accepted = true;
};

struct SolveReport {
  double objective = 0.0;
  double T_final = 0.0;
  int iterations = 0;
  int rank = 0;  // rank of the final factor read as complex voltages
  double sigma_ratio = 0.0;
  int stage_rank = 0;  // number of columns of the final factor
  double wall_time = 0.0;
  SolveStatus status = SolveStatus::iteration_limit;
  std::vector<TraceRow> trace;
  AugLagState state;
};

// ---------------------------------------------------------------------------
// Worker pool: the calling thread is worker 0, the others wait at a barrier.

class WorkerPool {
 public:
  explicit WorkerPool(int workers)
      : size_(std::max(workers, 1)), start_(size_), done_(size_) {
    for (int w = 1; w < size_; ++w)
      threads_.emplace_back([this, w] {
        for (;;) {
          start_.arrive_and_wait();
          if (stop_) return;
          (*job_)(w, size_);
          done_.arrive_and_wait();
        }
      });
  }
  ~WorkerPool() {
    if (size_ > 1) {
      stop_ = true;
      start_.arrive_and_wait();
    }
    for (auto& t : threads_) t.join();
  }
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int size() const { return size_; }

  /// Runs job(worker, workers) on every worker and returns when all are done.
  void run(const std::function<void(int, int)>& job) {
    if (size_ == 1) {
      job(0, 1);
      return;
    }
    job_ = &job;
    start_.arrive_and_wait();
    job(0, size_);
    done_.arrive_and_wait();
  }

 private:
  int size_;
  std::barrier<> start_, done_;
  std::vector<std::thread> threads_;
  const std::function<void(int, int)>* job_ = nullptr;
  bool stop_ = false;
};

inline std::pair<std::size_t, std::size_t> block_range(std::size_t count, int w, int workers) {
  const std::size_t b = count * static_cast<std::size_t>(w) / static_cast<std::size_t>(workers);
  const std::size_t e =
      count * static_cast<std::size_t>(w + 1) / static_cast<std::size_t>(workers);
  return {b, e};
}

/// Called after every single coordinate update in deterministic sweeps.
using CoordinateHook = std::function<void(const AugLagState&, Coordinate)>;

// ---------------------------------------------------------------------------
// Initialisation.

/// R uniform on [0, 1], auxiliaries set to their traces and projected,
/// multipliers zero.
inline AugLagState init_state(const InstanceMatrices& mats, int r, std::uint64_t seed,
                              double mu0, double nu = 0.0) {
  if (r < 1) throw std::invalid_argument("init_state: rank must be >= 1");
  AugLagState s = make_state(mats, static_cast<std::size_t>(r), 1.0 / mu0);
  s.nu = nu;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (double& x : s.R.data()) x = U(rng);
  std::vector<double> tr;
  compute_traces(s, mats, tr);
  s.aux = tr;
  for (std::size_t e = 0; e < s.z.size(); ++e)
    s.z[e] = s.u()[e] * s.u()[e] + s.v()[e] * s.v()[e];
  for (int k = 0; k < mats.N; ++k) {
    const BusCost& bc = mats.costs[k];
    if (!bc.split) continue;
    const double m = static_cast<double>(bc.units.size());
    for (std::size_t i = 0; i < bc.units.size(); ++i)
      s.share[bc.share_offset + i] = (tr[k] + mats.Pd[k]) / m;
  }
  project_boxes(s, mats);
  return s;
}

// ---------------------------------------------------------------------------
// Sweeps.

namespace detail {

inline void update_bus(AugLagState& s, const InstanceMatrices& mats,
                       std::span<const double> tr, int k, const CoordinateHook* hook) {
  const int N = mats.N;
  const BusCost& bc = mats.costs[k];
  if (bc.split) {
    for (std::size_t i = 0; i < bc.units.size(); ++i) {
      auto [a2, a1] = restriction_share_abs(s, mats, tr, k, i);
      s.share[bc.share_offset + i] =
          minimize_quadratic_box(a2, a1, bc.units[i].pmin, bc.units[i].pmax);
      sync_split_bus(s, mats, k);
      if (hook) (*hook)(s, {Var::share, k, static_cast<int>(i)});
    }
  } else {
    auto [a2, a1] = restriction_aux_abs(s, mats, tr, k);
    s.aux[k] = minimize_quadratic_box(a2, a1, mats.t_lo[k], mats.t_hi[k]);
    if (hook) (*hook)(s, {Var::t, k, 0});
  }
  {
    auto [a2, a1] = restriction_aux_abs(s, mats, tr, N + k);
    s.aux[N + k] = minimize_quadratic_box(a2, a1, mats.g_lo[k], mats.g_hi[k]);
    if (hook) (*hook)(s, {Var::g, k, 0});
  }
  {
    auto [a2, a1] = restriction_aux_abs(s, mats, tr, 2 * N + k);
    s.aux[2 * N + k] = minimize_quadratic_box(a2, a1, mats.h_lo[k], mats.h_hi[k]);
    if (hook) (*hook)(s, {Var::h, k, 0});
  }
}

inline void update_end(AugLagState& s, const InstanceMatrices& mats,
                       std::span<const double> tr, std::size_t e, const CoordinateHook* hook) {
  const int ei = static_cast<int>(e);
  s.u()[e] = minimize_quartic(restriction_flow_abs(s, mats, tr, e, 0), s.u()[e]).argmin;
  if (hook) (*hook)(s, {Var::u, ei, 0});
  s.v()[e] = minimize_quartic(restriction_flow_abs(s, mats, tr, e, 1), s.v()[e]).argmin;
  if (hook) (*hook)(s, {Var::v, ei, 0});
  auto [a2, a1] = restriction_z_abs(s, e);
  s.z[e] = minimize_quadratic_box(a2, a1, 0.0, mats.ends[e].smax2);
  if (hook) (*hook)(s, {Var::z, ei, 0});
}

/// Exact step on R(i, c) with incremental trace maintenance. `Load`/`Store`
/// abstract plain versus relaxed-atomic access for the parallel sweep.
template <bool Atomic>
inline void update_R_entry(AugLagState& s, const InstanceMatrices& mats, double* tr,
                           std::size_t i, std::size_t c, std::vector<double>& wbuf) {
  auto load = [](double& x) {
    if constexpr (Atomic)
      return std::atomic_ref<double>(x).load(std::memory_order_relaxed);
    else
      return x;
  };
  const double rho = s.penalty;
  double* x = s.R.col(c).data();
  const int b = mats.row_begin[i], e = mats.row_begin[i + 1];
  wbuf.resize(static_cast<std::size_t>(e - b));
  const double xi = load(x[i]);
  QuarticCoeffs q;
  for (int p = b; p < e; ++p) {
    const auto& term = mats.row_terms[p];
    double w = term.diag * xi;
    for (int o = term.off_begin; o < term.off_end; ++o)
      w += mats.row_offs[o].value * load(x[mats.row_offs[o].col]);
    wbuf[p - b] = w;
    const double a = term.diag;
    const double r0 = s.aux[term.con] - load(tr[term.con]);
    const double lam = s.lam[term.con];
    q.a4 += 0.5 * rho * a * a;
    q.a3 += 2.0 * rho * a * w;
    q.a2 += lam * a + rho * (2.0 * w * w - r0 * a);
    q.a1 += 2.0 * w * (lam - rho * r0);
  }
  if (b == e) return;
  const double d = minimize_quartic(q, 0.0).argmin;
  if (d == 0.0) return;
  if constexpr (Atomic)
    std::atomic_ref<double>(x[i]).store(xi + d, std::memory_order_relaxed);
  else
    x[i] = xi + d;
  for (int p = b; p < e; ++p) {
    const auto& term = mats.row_terms[p];
    const double delta = 2.0 * wbuf[p - b] * d + term.diag * d * d;
    if constexpr (Atomic)
      std::atomic_ref<double>(tr[term.con]).fetch_add(delta, std::memory_order_relaxed);
    else
      tr[term.con] += delta;
  }
}

}  // namespace detail

/// Exact coordinate minimisation over t (or generator shares), g, h per bus
/// and u, v, z per limited branch end, given traces `tr` of the current R.
inline void sweep_aux(AugLagState& s, const InstanceMatrices& mats, std::span<const double> tr,
                      WorkerPool* pool = nullptr, const CoordinateHook* hook = nullptr) {
  const std::size_t N = static_cast<std::size_t>(mats.N), E = mats.num_ends();
  if (!pool || pool->size() == 1) {
    for (std::size_t k = 0; k < N; ++k) detail::update_bus(s, mats, tr, static_cast<int>(k), hook);
    for (std::size_t e = 0; e < E; ++e) detail::update_end(s, mats, tr, e, hook);
    return;
  }
  // Buses and branch ends touch disjoint coordinates.
  pool->run([&](int w, int W) {
    auto [b0, b1] = block_range(N, w, W);
    for (std::size_t k = b0; k < b1; ++k) detail::update_bus(s, mats, tr, static_cast<int>(k), nullptr);
    auto [e0, e1] = block_range(E, w, W);
    for (std::size_t e = e0; e < e1; ++e) detail::update_end(s, mats, tr, e, nullptr);
  });
}

/// Cyclic sweep over R, column-major, each entry moved to the global
/// minimiser of its quartic restriction. `tr` is kept in step with R.
inline void sweep_R(AugLagState& s, const InstanceMatrices& mats, std::vector<double>& tr,
                    WorkerPool* pool = nullptr, const CoordinateHook* hook = nullptr) {
  const std::size_t n = s.R.rows(), r = s.R.cols();
  if (!pool || pool->size() == 1) {
    std::vector<double> wbuf;
    for (std::size_t c = 0; c < r; ++c)
      for (std::size_t i = 0; i < n; ++i) {
        detail::update_R_entry<false>(s, mats, tr.data(), i, c, wbuf);
        if (hook) (*hook)(s, {Var::R, static_cast<int>(i), static_cast<int>(c)});
      }
    return;
  }
  // Row blocks per worker; reads across blocks race benignly (relaxed atomics).
  pool->run([&](int w, int W) {
    std::vector<double> wbuf;
    auto [i0, i1] = block_range(n, w, W);
    for (std::size_t c = 0; c < r; ++c)
      for (std::size_t i = i0; i < i1; ++i)
        detail::update_R_entry<true>(s, mats, tr.data(), i, c, wbuf);
  });
}

/// Penalty schedule step. Returns whether the proposed iterate is kept; on
/// rejection the caller restores the previous iterate.
inline bool step_mu(const MuSchedule& sched, AugLagState& s, double T_prev, double T_new) {
  switch (sched.kind) {
    case MuSchedule::Kind::fixed: return true;
    case MuSchedule::Kind::geometric:
      s.penalty = std::min(s.penalty / sched.factor, 1.0 / sched.mu_min);
      return true;
    case MuSchedule::Kind::adaptive:
      if (T_new <= sched.theta * T_prev) return true;
      s.penalty = std::min(s.penalty * sched.beta, 1.0 / sched.mu_min);
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Inner loop.

struct StageResult {
  AugLagState state;
  double objective = 0.0;
  double T = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Stopping tests on T and stationarity held at the last iterate, but the
  /// factor was not of rank 1.
  bool rank_blocked = false;
};

/// Inner loop of one rank stage. With `need_rank1` the stage only stops early
/// once the factor also has complex rank 1 (the flat-extension test).
inline StageResult run_stage(AugLagState s, const InstanceMatrices& mats, const SolveConfig& cfg,
                             WorkerPool* pool, std::vector<TraceRow>* trace, int iter_base,
                             bool need_rank1) {
  std::vector<double> tr;
  compute_traces(s, mats, tr);
  double T_prev = residuals_from_traces(s, tr).squared_sum();

  StageResult out;
  out.T = T_prev;
  out.objective = physical_objective(s, mats, tr);

  AugLagState saved;
  const bool adaptive = cfg.mu_schedule.kind == MuSchedule::Kind::adaptive;
  for (int it = 0; it < cfg.max_inner; ++it) {
    if (adaptive) saved = s;
    sweep_aux(s, mats, tr, pool);
    sweep_R(s, mats, tr, pool);
    compute_traces(s, mats, tr);  // exact once per iteration
    const Residuals res = residuals_from_traces(s, tr);
    const double T = res.squared_sum();
    if (!std::isfinite(T)) throw std::runtime_error("solve: iterate diverged");
    const double obj = physical_objective(s, mats, tr);
    const double mu_used = s.mu();
    update_multipliers(s, res);
    const bool accepted = step_mu(cfg.mu_schedule, s, T_prev, T);
    if (trace) trace->push_back({iter_base + it, obj, T, mu_used, accepted});
    out.iterations = it + 1;
    if (!accepted) {
      const double pen = s.penalty;
      s = std::move(saved);
      s.penalty = pen;
      compute_traces(s, mats, tr);
      continue;
    }
    T_prev = T;
    out.T = T;
    out.objective = obj;
    out.rank_blocked = false;
    if (T <= cfg.tol_T &&
        (cfg.tol_stat <= 0.0 || stationarity(mats, s.lam, s.R) <= cfg.tol_stat)) {
      if (!need_rank1 || complex_rank(s.R, cfg.rank_tol).rank <= 1) {
        out.converged = true;
        break;
      }
      out.rank_blocked = true;
    }
  }
  out.state = std::move(s);
  return out;
}

/// Widened start for a higher-rank stage: previous columns plus small noise.
inline AugLagState widen_state(const AugLagState& prev, int r, double noise,
                               std::uint64_t seed) {
  AugLagState s = prev;
  const std::size_t n = prev.R.rows(), r0 = prev.R.cols();
  s.R = Factor(n, static_cast<std::size_t>(r));
  double fro = 0.0;
  for (double x : prev.R.data()) fro += x * x;
  const double scale = noise * std::sqrt(fro / static_cast<double>(n));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (std::size_t c = 0; c < static_cast<std::size_t>(r); ++c)
    for (std::size_t i = 0; i < n; ++i)
      s.R(i, c) = c < r0 ? prev.R(i, c) : scale * U(rng);
  return s;
}

/// Algorithm driver. Stage r = 1 stops on T <= tol_T and stationarity; later
/// stages run only when r = 1 did not converge and additionally need the
/// widened factor to collapse back to complex rank 1.
inline SolveReport solve(const Network& net, const InstanceMatrices& mats,
                         const SolveConfig& cfg) {
  cfg.validate();
  if (mats.n != net.dim()) throw std::invalid_argument("solve: instance does not match network");
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<WorkerPool> pool;
  if (cfg.threads > 1) pool.emplace(cfg.threads);
  WorkerPool* pp = pool ? &*pool : nullptr;

  SolveReport rep;
  std::vector<TraceRow>* trace = cfg.record_trace ? &rep.trace : nullptr;
  StageResult stage;
  for (std::size_t si = 0; si < cfg.rank_schedule.size(); ++si) {
    const int r = cfg.rank_schedule[si];
    const std::uint64_t seed = cfg.seed + 1000003ULL * si;
    AugLagState start;
    if (si == 0 && cfg.initial_state) {
      start = *cfg.initial_state;
      check_dims(start, mats);
    } else if (si > 0 && cfg.warm_start) {
      start = widen_state(stage.state, r, cfg.warm_noise, seed);
    } else {
      start = init_state(mats, r, seed, cfg.mu0, cfg.nu);
    }
    const bool need_rank1 = start.R.cols() > 1;
    stage = run_stage(std::move(start), mats, cfg, pp, trace, rep.iterations, need_rank1);
    rep.iterations += stage.iterations;
    if (stage.converged) {
      rep.status = SolveStatus::converged;
      break;
    }
    rep.status = stage.rank_blocked ? SolveStatus::rejected_rank : SolveStatus::iteration_limit;
  }
  const RankInfo ri = complex_rank(stage.state.R, cfg.rank_tol);
  rep.rank = ri.rank;
  rep.sigma_ratio = ri.sigma_ratio;
  rep.stage_rank = static_cast<int>(stage.state.R.cols());
  rep.objective = stage.objective;
  rep.T_final = stage.T;
  rep.state = std::move(stage.state);
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline SolveReport solve(const Network& net, const SolveConfig& cfg) {
  return solve(net, build_instance(net, cfg.instance), cfg);
}

}  // namespace lropf
