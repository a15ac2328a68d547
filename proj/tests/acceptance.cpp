// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "lropf/certify.hpp"
#include "lropf/engine.hpp"
#include "test_util.hpp"

using namespace lropf;
using testutil::cplx;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within(double x, double target, double rel) {
  return std::abs(x - target) <= rel * std::abs(target);
}

struct Timed {
  SolveReport rep;
  double seconds = 0.0;
};

Timed run_case(const std::string& file, double mu, int max_inner = 10000) {
  const Network net = testutil::load(file);
  SolveConfig cfg;
  cfg.mu0 = mu;
  cfg.max_inner = max_inner;
  const auto t0 = std::chrono::steady_clock::now();
  Timed t{solve(net, cfg), 0.0};
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

bool bundled(const std::string& file) {
  return std::filesystem::exists(testutil::kData + "/" + file);
}

Outcome c1_case2w() {
  const Timed a = run_case("case2w.m", 1e-4), b = run_case("case2w.m", 1e-2);
  const bool ok = within(a.rep.objective, 877.78, 1e-3) && a.rep.T_final <= 1e-5 &&
                  within(b.rep.objective, 877.78, 1e-3) && b.rep.T_final <= 1e-5 &&
                  a.rep.status == SolveStatus::converged && b.rep.status == SolveStatus::converged;
  return {ok, fmt("mu=1e-4: obj %.3f T %.2e (%s); mu=0.01: obj %.3f T %.2e (%s); target 877.78 +-0.1%%",
                  a.rep.objective, a.rep.T_final, to_string(a.rep.status), b.rep.objective,
                  b.rep.T_final, to_string(b.rep.status))};
}

Outcome c2_case9mod() {
  if (!bundled("case9mod.m")) return {false, "case9mod.m is not bundled; no instance data to run"};
  const Timed a = run_case("case9mod.m", 1e-4), b = run_case("case9mod.m", 1e-2);
  const bool ok = within(a.rep.objective, 3087.84, 1e-2) && a.rep.T_final <= 1e-8 &&
                  b.rep.status != SolveStatus::converged;
  return {ok, fmt("mu=1e-4: obj %.3f T %.2e; mu=0.01: %s after %d iterations", a.rep.objective,
                  a.rep.T_final, to_string(b.rep.status), b.rep.iterations)};
}

Outcome c3_table() {
  struct Row { const char* file; double target; };
  bool ok = true;
  std::string detail;
  for (const Row& r : {Row{"case14.m", 8.082e3}, Row{"case30.m", 5.769e2},
                       Row{"case57.m", 4.174e4}, Row{"case118.m", 1.297e5}}) {
    const Timed t = run_case(r.file, 1e-4);
    const bool row = within(t.rep.objective, r.target, 5e-3) && t.seconds < 60.0;
    ok = ok && row;
    detail += fmt("%s %.6g (%s, %.1fs)%s; ", r.file, t.rep.objective, to_string(t.rep.status),
                  t.seconds, row ? "" : " OUT");
  }
  return {ok, detail + "tolerance +-0.5%"};
}

Outcome c4_lmbm3() {
  const Timed a = run_case("lmbm3.m", 1e-4), b = run_case("lmbm3.m", 1e-2);
  const bool ok = within(a.rep.objective, 5694.34, 1e-2) && within(b.rep.objective, 5688.10, 1e-2);
  return {ok, fmt("mu=1e-4: %.2f (target 5694.34); mu=0.01: %.2f (target 5688.10); +-1%%",
                  a.rep.objective, b.rep.objective)};
}

Outcome c5_case39mod2() {
  if (!bundled("case39mod2.m"))
    return {false, "case39mod2.m is not bundled; no instance data to run"};
  const Timed a = run_case("case39mod2.m", 1e-4);
  return {a.rep.T_final <= 1e-6 && a.rep.objective <= 945.0,
          fmt("obj %.3f T %.2e", a.rep.objective, a.rep.T_final)};
}

Outcome c6_gradient() {
  const InstanceMatrices mats = build_instance(testutil::load("case9.m"));
  std::mt19937_64 pick(6);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const AugLagState s = testutil::random_state(mats, 1 + seed % 2, 600 + seed);
    const double L = std::abs(eval_lagrangian(s, mats));
    for (const Coordinate& c : testutil::all_coordinates(s, mats)) {
      if (pick() % 4 != 0) continue;
      const double x0 = coordinate_value(s, mats, c), h = 1e-5;
      const double an = univariate_restriction(s, mats, c).derivative(x0);
      AugLagState a = s, b = s;
      set_coordinate(a, mats, c, x0 + h);
      set_coordinate(b, mats, c, x0 - h);
      const double fd = (eval_lagrangian(a, mats) - eval_lagrangian(b, mats)) / (2 * h);
      worst = std::max(worst, std::abs(an - fd) / std::max({1.0, std::abs(an), 1e-6 * L}));
    }
  }
  return {worst <= 1e-6, fmt("max scaled relative error %.2e (limit 1e-6)", worst)};
}

Outcome c7_quartic() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-10.0, 10.0), A4(0.0, 10.0);
  double worst = -1e300;
  for (int rep = 0; rep < 10000; ++rep) {
    QuarticCoeffs q;
    do q.a4 = A4(rng);
    while (q.a4 == 0.0);
    q.a3 = U(rng), q.a2 = U(rng), q.a1 = U(rng), q.a0 = U(rng);
    const double v = minimize_quartic(q, U(rng)).value;
    double g = q(-20.0);
    for (long k = 1; k <= 400000; ++k) g = std::min(g, q(-20.0 + k * 1e-4));
    worst = std::max(worst, v - g);
  }
  return {worst <= 1e-8, fmt("max (closed form - grid) %.2e over 10^4 quartics (limit 1e-8)", worst)};
}

Outcome c8_descent() {
  const InstanceMatrices mats = build_instance(testutil::load("case14.m"));
  AugLagState s = init_state(mats, 2, 8, 1e-2);
  double prev = eval_lagrangian(s, mats), worst = -1e300;
  long updates = 0;
  const CoordinateHook hook = [&](const AugLagState& st, Coordinate) {
    const double L = eval_lagrangian(st, mats);
    worst = std::max(worst, (L - prev) / std::max(1.0, std::abs(prev)));
    prev = L;
    ++updates;
  };
  std::vector<double> tr;
  for (int sweep = 0; sweep < 50; ++sweep) {
    compute_traces(s, mats, tr);
    sweep_aux(s, mats, tr, nullptr, &hook);
    sweep_R(s, mats, tr, nullptr, &hook);
  }
  return {worst <= 1e-10,
          fmt("%ld coordinate updates, max relative increase %.2e (limit 1e-10)", updates, worst)};
}

Outcome c9_rank_one() {
  const Network net = testutil::load("case30.m");
  const InstanceMatrices mats = build_instance(net, {.thermal_both_ends = true});
  const std::size_t N = net.num_buses();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-1.2, 1.2);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(2 * N);
    for (double& v : x) v = U(rng);
    const auto V = testutil::voltages(x, N);
    const auto S = testutil::injections(net, V);
    for (std::size_t k = 0; k < N; ++k) {
      const int kk = static_cast<int>(k);
      worst = std::max(worst, std::abs(mats.Y(kk).quad(x) + mats.Pd[k] - (S[k].real() + net.buses[k].Pd)));
      worst = std::max(worst, std::abs(mats.Ybar(kk).quad(x) + mats.Qd[k] - (S[k].imag() + net.buses[k].Qd)));
      worst = std::max(worst, std::abs(mats.M(kk).quad(x) - std::norm(V[k])));
    }
    for (std::size_t e = 0; e < mats.num_ends(); ++e) {
      const cplx f = testutil::branch_flow(net.branches[mats.ends[e].branch], net, V,
                                           mats.ends[e].to_end);
      worst = std::max(worst, std::abs(mats.Yflow(int(e)).quad(x) - f.real()));
      worst = std::max(worst, std::abs(mats.Ybarflow(int(e)).quad(x) - f.imag()));
    }
  }
  return {worst <= 1e-9, fmt("case30, 50 random x, %zu branch ends: max abs error %.2e (limit 1e-9)",
                             mats.num_ends(), worst)};
}

Outcome c10_adaptive() {
  const Network net = testutil::load("case5.m");
  const InstanceMatrices mats = build_instance(net);
  SolveConfig cfg;
  cfg.rank_schedule = {1};
  cfg.mu0 = 0.1;
  cfg.max_inner = 400;
  cfg.mu_schedule = MuSchedule::adaptive(0.999, 2.0);
  cfg.record_trace = true;
  const SolveReport rep = solve(net, mats, cfg);
  double T_prev = infeasibility_T(init_state(mats, 1, cfg.seed, cfg.mu0), mats);
  int violations = 0, early_rejections = 0, longest_accept_run = 0, run = 0;
  for (const auto& row : rep.trace) {
    if (row.accepted) {
      violations += !(row.T <= 0.999 * T_prev);
      T_prev = row.T;
      longest_accept_run = std::max(longest_accept_run, ++run);
    } else {
      run = 0;
      early_rejections += row.iter < 50;
    }
  }
  // Shape: a burst of rejections while mu adapts, then a long accepted stretch.
  const bool shape = early_rejections >= 5 && longest_accept_run >= 100;
  return {violations == 0 && shape,
          fmt("%zu rows, %d accepted rows violating T_new <= 0.999 T_prev, %d rejections in the "
              "first 50 rows, longest accepted run %d",
              rep.trace.size(), violations, early_rejections, longest_accept_run)};
}

Outcome c11_determinism() {
  const Network net = testutil::load("case14.m");
  SolveConfig cfg;
  cfg.record_trace = true;
  const SolveReport a = solve(net, cfg), b = solve(net, cfg);
  bool same = a.objective == b.objective && a.T_final == b.T_final &&
              a.iterations == b.iterations && a.rank == b.rank && a.status == b.status &&
              a.state == b.state && a.trace.size() == b.trace.size();
  for (std::size_t i = 0; same && i < a.trace.size(); ++i)
    same = a.trace[i].T == b.trace[i].T && a.trace[i].objective == b.trace[i].objective;
  return {same, fmt("case14 twice with seed %llu: %s", (unsigned long long)cfg.seed,
                    same ? "identical" : "different")};
}

Outcome c12_certificate() {
  CoefMatrix::Builder q(2), i(2);
  q.add_entry(0, 0, -3.0).add_entry(1, 1, -1.0);
  i.add_entry(0, 0, 1.0).add_entry(1, 1, 1.0);
  const CoefMatrix Q = q.build(), I = i.build();
  Factor star(2, 1), spurious(2, 1);
  star(0, 0) = 1.0;
  spurious(1, 0) = 1.0;
  const Certificate a = dual_certificate(Q, {{&I, 3.0}}, star);
  const Certificate b = dual_certificate(Q, {{&I, 1.0}}, spurious);
  return {a.verdict == Verdict::certified_global && b.verdict == Verdict::not_certified,
          fmt("W*: %s (min eig %.3g); spurious: %s (min eig %.3g)", to_string(a.verdict),
              a.min_eig_S, to_string(b.verdict), b.min_eig_S)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"case2w golden objective", c1_case2w},
      {"case9mod golden objective", c2_case9mod},
      {"IEEE cases golden objectives", c3_table},
      {"LMBM3 golden objectives", c4_lmbm3},
      {"case39mod2 feasible local optimum", c5_case39mod2},
      {"finite-difference gradient", c6_gradient},
      {"coordinate-step optimality", c7_quartic},
      {"monotone descent", c8_descent},
      {"rank-1 equivalence", c9_rank_one},
      {"adaptive mu contract", c10_adaptive},
      {"determinism", c11_determinism},
      {"certificate sanity", c12_certificate},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
