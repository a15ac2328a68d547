#pragma once

// Augmented Lagrangian of the lifted box-constrained problem
//
//   L = sum_k f_k(t_k) - sum lambda * r + (rho/2) sum r^2 + nu det(R^T R)
//
// with residuals r = aux - tr(A R R^T) for aux in {t, g, h, u, v} and
// r_z = z - u^2 - v^2. Generation cost is charged on t_k (p.u. injection),
// f_k(t) = c2 (S_b (t + P^d_k))^2 + c1 S_b (t + P^d_k) + c0.
//
// `penalty` is rho. The solver-level parameter mu is its reciprocal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lropf/coef_matrix.hpp"
#include "lropf/instance.hpp"
#include "lropf/polyroot.hpp"

namespace lropf {

struct AugLagState {
  int N = 0;  // buses
  int E = 0;  // thermally limited branch ends
  Factor R;
  std::vector<double> aux;    // t | g | h | u | v
  std::vector<double> z;      // per branch end
  std::vector<double> share;  // per generator at split-cost buses (p.u.)
  std::vector<double> lam;    // multipliers, same layout as aux
  std::vector<double> lam_z;
  double penalty = 1e4;
  double nu = 0.0;

  std::span<double> t() { return {aux.data(), static_cast<std::size_t>(N)}; }
  std::span<double> g() { return {aux.data() + N, static_cast<std::size_t>(N)}; }
  std::span<double> h() { return {aux.data() + 2 * N, static_cast<std::size_t>(N)}; }
  std::span<double> u() { return {aux.data() + 3 * N, static_cast<std::size_t>(E)}; }
  std::span<double> v() { return {aux.data() + 3 * N + E, static_cast<std::size_t>(E)}; }
  std::span<const double> t() const { return {aux.data(), static_cast<std::size_t>(N)}; }
  std::span<const double> g() const { return {aux.data() + N, static_cast<std::size_t>(N)}; }
  std::span<const double> h() const { return {aux.data() + 2 * N, static_cast<std::size_t>(N)}; }
  std::span<const double> u() const { return {aux.data() + 3 * N, static_cast<std::size_t>(E)}; }
  std::span<const double> v() const { return {aux.data() + 3 * N + E, static_cast<std::size_t>(E)}; }

  double mu() const { return 1.0 / penalty; }

  bool operator==(const AugLagState&) const = default;
};

/// Zero state of rank r shaped for `mats`.
inline AugLagState make_state(const InstanceMatrices& mats, std::size_t r, double penalty) {
  AugLagState s;
  s.N = mats.N;
  s.E = static_cast<int>(mats.num_ends());
  s.R = Factor(mats.n, r);
  s.aux.assign(mats.num_lifted(), 0.0);
  s.lam.assign(mats.num_lifted(), 0.0);
  s.z.assign(mats.num_ends(), 0.0);
  s.lam_z.assign(mats.num_ends(), 0.0);
  s.share.assign(static_cast<std::size_t>(mats.num_shares), 0.0);
  s.penalty = penalty;
  return s;
}

inline void check_dims(const AugLagState& s, const InstanceMatrices& mats) {
  if (s.R.rows() != mats.n || s.aux.size() != mats.num_lifted() ||
      s.lam.size() != mats.num_lifted() || s.z.size() != mats.num_ends() ||
      s.lam_z.size() != mats.num_ends() ||
      s.share.size() != static_cast<std::size_t>(mats.num_shares) || s.N != mats.N ||
      s.E != static_cast<int>(mats.num_ends()))
    throw std::invalid_argument("augmented Lagrangian: state/instance dimension mismatch");
}

/// Cached traces tr(A R R^T) for every lifted matrix and the resulting residuals.
struct Residuals {
  std::vector<double> traces;  // layout of aux
  std::vector<double> r;       // aux - traces
  std::vector<double> rz;      // z - u^2 - v^2

  std::span<const double> family(const InstanceMatrices& m, Family f) const {
    const std::size_t len = (f == Family::u || f == Family::v) ? m.num_ends()
                                                               : static_cast<std::size_t>(m.N);
    return {r.data() + m.offset(f), len};
  }
  std::span<const double> rt(const InstanceMatrices& m) const { return family(m, Family::t); }
  std::span<const double> rg(const InstanceMatrices& m) const { return family(m, Family::g); }
  std::span<const double> rh(const InstanceMatrices& m) const { return family(m, Family::h); }
  std::span<const double> ru(const InstanceMatrices& m) const { return family(m, Family::u); }
  std::span<const double> rv(const InstanceMatrices& m) const { return family(m, Family::v); }

  double squared_sum() const {
    double s = 0.0;
    for (double x : r) s += x * x;
    for (double x : rz) s += x * x;
    return s;
  }
};

inline void compute_traces(const AugLagState& s, const InstanceMatrices& mats,
                           std::vector<double>& traces) {
  traces.resize(mats.num_lifted());
  for (std::size_t c = 0; c < mats.num_lifted(); ++c)
    traces[c] = trace_quadform(mats.lifted[c], s.R);
}

inline Residuals residuals_from_traces(const AugLagState& s, std::vector<double> traces) {
  Residuals res;
  res.traces = std::move(traces);
  res.r.resize(s.aux.size());
  for (std::size_t c = 0; c < s.aux.size(); ++c) res.r[c] = s.aux[c] - res.traces[c];
  res.rz.resize(s.z.size());
  const auto u = s.u(), v = s.v();
  for (std::size_t e = 0; e < s.z.size(); ++e) res.rz[e] = s.z[e] - u[e] * u[e] - v[e] * v[e];
  return res;
}

inline Residuals compute_residuals(const AugLagState& s, const InstanceMatrices& mats) {
  check_dims(s, mats);
  std::vector<double> traces;
  compute_traces(s, mats, traces);
  return residuals_from_traces(s, std::move(traces));
}

/// Generation cost of bus k in $/h charged on the auxiliary injection t_k.
inline double bus_cost(const AugLagState& s, const InstanceMatrices& mats, int k) {
  const BusCost& bc = mats.costs[k];
  if (bc.units.empty()) return 0.0;
  if (!bc.split) return bc.units.front().cost(s.aux[k] + mats.Pd[k]);
  double c = 0.0;
  for (std::size_t i = 0; i < bc.units.size(); ++i)
    c += bc.units[i].cost(s.share[bc.share_offset + i]);
  return c;
}

/// Generation cost in $/h at the physical injections tr(Y_k W) given by `traces`.
/// Split-cost buses rescale their shares to the physical output.
inline double physical_objective(const AugLagState& s, const InstanceMatrices& mats,
                                 std::span<const double> traces) {
  double total = 0.0;
  for (int k = 0; k < mats.N; ++k) {
    const BusCost& bc = mats.costs[k];
    if (bc.units.empty()) continue;
    const double p = traces[k] + mats.Pd[k];
    if (!bc.split) {
      total += bc.units.front().cost(p);
      continue;
    }
    const std::size_t m = bc.units.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) sum += s.share[bc.share_offset + i];
    for (std::size_t i = 0; i < m; ++i) {
      const double w = sum != 0.0 ? s.share[bc.share_offset + i] / sum : 1.0 / m;
      total += bc.units[i].cost(w * p);
    }
  }
  return total;
}

/// det(R^T R) by Gaussian elimination on the r x r Gram matrix.
inline double gram_determinant(const Factor& R) {
  const std::size_t r = R.cols();
  std::vector<double> G(r * r, 0.0);
  for (std::size_t a = 0; a < r; ++a)
    for (std::size_t b = 0; b < r; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < R.rows(); ++i) s += R(i, a) * R(i, b);
      G[a * r + b] = s;
    }
  double det = 1.0;
  for (std::size_t p = 0; p < r; ++p) {
    std::size_t piv = p;
    for (std::size_t i = p + 1; i < r; ++i)
      if (std::abs(G[i * r + p]) > std::abs(G[piv * r + p])) piv = i;
    if (G[piv * r + p] == 0.0) return 0.0;
    if (piv != p) {
      for (std::size_t j = 0; j < r; ++j) std::swap(G[p * r + j], G[piv * r + j]);
      det = -det;
    }
    det *= G[p * r + p];
    for (std::size_t i = p + 1; i < r; ++i) {
      const double f = G[i * r + p] / G[p * r + p];
      for (std::size_t j = p; j < r; ++j) G[i * r + j] -= f * G[p * r + j];
    }
  }
  return det;
}

inline double eval_lagrangian(const AugLagState& s, const InstanceMatrices& mats,
                              const Residuals& res) {
  double L = 0.0;
  for (int k = 0; k < mats.N; ++k) L += bus_cost(s, mats, k);
  const double half = 0.5 * s.penalty;
  for (std::size_t c = 0; c < res.r.size(); ++c)
    L += -s.lam[c] * res.r[c] + half * res.r[c] * res.r[c];
  for (std::size_t e = 0; e < res.rz.size(); ++e)
    L += -s.lam_z[e] * res.rz[e] + half * res.rz[e] * res.rz[e];
  if (s.nu > 0.0) L += s.nu * gram_determinant(s.R);
  return L;
}

inline double eval_lagrangian(const AugLagState& s, const InstanceMatrices& mats) {
  return eval_lagrangian(s, mats, compute_residuals(s, mats));
}

/// Sum of squared residuals over all six families.
inline double infeasibility_T(const AugLagState& s, const InstanceMatrices& mats) {
  return compute_residuals(s, mats).squared_sum();
}

/// Keeps split-cost buses consistent: t_k = sum of shares - P^d_k.
inline void sync_split_bus(AugLagState& s, const InstanceMatrices& mats, int k) {
  const BusCost& bc = mats.costs[k];
  double sum = 0.0;
  for (std::size_t i = 0; i < bc.units.size(); ++i) sum += s.share[bc.share_offset + i];
  s.aux[k] = sum - mats.Pd[k];
}

/// Clamp t, g, h, z (and generator shares) into their boxes. u, v are free.
inline void project_boxes(AugLagState& s, const InstanceMatrices& mats) {
  check_dims(s, mats);
  for (int k = 0; k < mats.N; ++k) {
    const BusCost& bc = mats.costs[k];
    if (bc.split) {
      for (std::size_t i = 0; i < bc.units.size(); ++i) {
        double& sh = s.share[bc.share_offset + i];
        sh = std::clamp(sh, bc.units[i].pmin, bc.units[i].pmax);
      }
      sync_split_bus(s, mats, k);
    } else {
      s.aux[k] = std::clamp(s.aux[k], mats.t_lo[k], mats.t_hi[k]);
    }
    s.aux[mats.N + k] = std::clamp(s.aux[mats.N + k], mats.g_lo[k], mats.g_hi[k]);
    s.aux[2 * mats.N + k] = std::clamp(s.aux[2 * mats.N + k], mats.h_lo[k], mats.h_hi[k]);
  }
  for (std::size_t e = 0; e < s.z.size(); ++e)
    s.z[e] = std::clamp(s.z[e], 0.0, mats.ends[e].smax2);
}

/// lambda <- lambda - rho * r for every family.
inline void update_multipliers(AugLagState& s, const Residuals& res) {
  for (std::size_t c = 0; c < s.lam.size(); ++c) s.lam[c] -= s.penalty * res.r[c];
  for (std::size_t e = 0; e < s.lam_z.size(); ++e) s.lam_z[e] -= s.penalty * res.rz[e];
}

inline void update_multipliers(AugLagState& s, const InstanceMatrices& mats) {
  update_multipliers(s, compute_residuals(s, mats));
}

/// Relative stationarity of L in R: ||S R||_F / (||S||_F ||R||_F) with
/// S = sum_i y_i A_i over the lifted matrices. For y = lambda - rho r this is
/// the gradient of L in R (up to a factor 2), scaled.
inline double stationarity(const InstanceMatrices& mats, std::span<const double> y,
                           const Factor& R) {
  std::vector<double> S(mats.pattern.size(), 0.0);
  for (std::size_t c = 0; c < mats.num_lifted(); ++c) {
    const auto& ent = mats.lifted[c].entries();
    for (std::size_t p = 0; p < ent.size(); ++p) S[mats.slots[c][p]] += y[c] * ent[p].value;
  }
  double s2 = 0.0;
  for (std::size_t p = 0; p < S.size(); ++p)
    s2 += (mats.pattern[p].first == mats.pattern[p].second ? 1.0 : 2.0) * S[p] * S[p];
  double g2 = 0.0, r2 = 0.0;
  std::vector<double> g(R.rows());
  for (std::size_t c = 0; c < R.cols(); ++c) {
    std::fill(g.begin(), g.end(), 0.0);
    const auto x = R.col(c);
    for (std::size_t p = 0; p < S.size(); ++p) {
      const auto [i, j] = mats.pattern[p];
      g[i] += S[p] * x[j];
      if (i != j) g[j] += S[p] * x[i];
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      g2 += g[i] * g[i];
      r2 += x[i] * x[i];
    }
  }
  if (s2 == 0.0 || r2 == 0.0) return 0.0;
  return std::sqrt(g2 / (s2 * r2));
}

// ---------------------------------------------------------------------------
// Univariate restrictions. The kernels below return coefficients in the
// offset d from the current value (constant term dropped); they are what the
// sweeps use. univariate_restriction() re-expresses them in the absolute
// coordinate and fixes a0 so that p(x) is exactly L along that axis.

/// Restriction of L to R(i, c) + d, given current traces.
inline QuarticCoeffs restriction_R_offset(const AugLagState& s, const InstanceMatrices& mats,
                                          std::span<const double> traces, std::size_t i,
                                          std::size_t c) {
  const double rho = s.penalty;
  const auto x = s.R.col(c);
  QuarticCoeffs q;
  for (int p = mats.row_begin[i]; p < mats.row_begin[i + 1]; ++p) {
    const auto& term = mats.row_terms[p];
    double w = term.diag * x[i];
    for (int o = term.off_begin; o < term.off_end; ++o)
      w += mats.row_offs[o].value * x[mats.row_offs[o].col];
    const double a = term.diag;
    const double r0 = s.aux[term.con] - traces[term.con];
    const double lam = s.lam[term.con];
    q.a4 += 0.5 * rho * a * a;
    q.a3 += 2.0 * rho * a * w;
    q.a2 += lam * a + rho * (2.0 * w * w - r0 * a);
    q.a1 += 2.0 * w * (lam - rho * r0);
  }
  return q;
}

/// Quadratic restriction a2 x^2 + a1 x of L to the (absolute) auxiliary
/// variable with lifted index `con` (t at non-split buses, g, h).
inline std::pair<double, double> restriction_aux_abs(const AugLagState& s,
                                                     const InstanceMatrices& mats,
                                                     std::span<const double> traces,
                                                     std::size_t con) {
  const double rho = s.penalty;
  double a2 = 0.5 * rho;
  double a1 = -s.lam[con] - rho * traces[con];
  if (con < static_cast<std::size_t>(mats.N)) {
    const BusCost& bc = mats.costs[con];
    if (!bc.units.empty() && !bc.split) {
      const GenUnit& u = bc.units.front();
      a2 += u.C2;
      a1 += 2.0 * u.C2 * mats.Pd[con] + u.C1;
    }
  }
  return {a2, a1};
}

/// Restriction to one generator share at a split-cost bus (absolute value).
inline std::pair<double, double> restriction_share_abs(const AugLagState& s,
                                                       const InstanceMatrices& mats,
                                                       std::span<const double> traces, int k,
                                                       std::size_t unit) {
  const BusCost& bc = mats.costs[k];
  const double rho = s.penalty;
  double others = -mats.Pd[k];
  for (std::size_t j = 0; j < bc.units.size(); ++j)
    if (j != unit) others += s.share[bc.share_offset + j];
  const GenUnit& u = bc.units[unit];
  return {u.C2 + 0.5 * rho, u.C1 - s.lam[k] + rho * (others - traces[k])};
}

/// Quartic restriction to u_e (which = 0) or v_e (which = 1), absolute value.
inline QuarticCoeffs restriction_flow_abs(const AugLagState& s, const InstanceMatrices& mats,
                                          std::span<const double> traces, std::size_t e,
                                          int which) {
  const double rho = s.penalty;
  const std::size_t con = mats.offset(which == 0 ? Family::u : Family::v) + e;
  const double other = which == 0 ? s.v()[e] : s.u()[e];
  const double slack = s.z[e] - other * other;
  QuarticCoeffs q;
  q.a4 = 0.5 * rho;
  q.a2 = 0.5 * rho + s.lam_z[e] - rho * slack;
  q.a1 = -s.lam[con] - rho * traces[con];
  return q;
}

/// Quadratic restriction to z_e (absolute value).
inline std::pair<double, double> restriction_z_abs(const AugLagState& s, std::size_t e) {
  const double rho = s.penalty;
  const double q = s.u()[e] * s.u()[e] + s.v()[e] * s.v()[e];
  return {0.5 * rho, -s.lam_z[e] - rho * q};
}

enum class Var { R, t, g, h, u, v, z, share };

/// R(index, col); t/g/h(index = bus); u/v/z(index = branch end);
/// share(index = bus, col = generator within the bus).
struct Coordinate {
  Var var = Var::R;
  int index = 0;
  int col = 0;
};

inline double coordinate_value(const AugLagState& s, const InstanceMatrices& mats,
                               Coordinate c) {
  switch (c.var) {
    case Var::R: return s.R(c.index, c.col);
    case Var::t: return s.aux[c.index];
    case Var::g: return s.aux[mats.N + c.index];
    case Var::h: return s.aux[2 * mats.N + c.index];
    case Var::u: return s.u()[c.index];
    case Var::v: return s.v()[c.index];
    case Var::z: return s.z[c.index];
    case Var::share: return s.share[mats.costs.at(c.index).share_offset + c.col];
  }
  throw std::invalid_argument("unknown variable");
}

inline void set_coordinate(AugLagState& s, const InstanceMatrices& mats, Coordinate c,
                           double value) {
  switch (c.var) {
    case Var::R: s.R(c.index, c.col) = value; return;
    case Var::t: s.aux[c.index] = value; return;
    case Var::g: s.aux[mats.N + c.index] = value; return;
    case Var::h: s.aux[2 * mats.N + c.index] = value; return;
    case Var::u: s.u()[c.index] = value; return;
    case Var::v: s.v()[c.index] = value; return;
    case Var::z: s.z[c.index] = value; return;
    case Var::share:
      s.share[mats.costs.at(c.index).share_offset + c.col] = value;
      sync_split_bus(s, mats, c.index);
      return;
  }
  throw std::invalid_argument("unknown variable");
}

/// L as a polynomial in one coordinate with all others fixed: p(x) equals L
/// exactly (nu = 0). For t, g, h, z and shares a4 = a3 = 0.
inline QuarticCoeffs univariate_restriction(const AugLagState& s, const InstanceMatrices& mats,
                                           Coordinate c) {
  const Residuals res = compute_residuals(s, mats);
  const auto& tr = res.traces;
  const double x0 = coordinate_value(s, mats, c);
  QuarticCoeffs q;
  switch (c.var) {
    case Var::R:
      if (c.index < 0 || static_cast<std::size_t>(c.index) >= s.R.rows() || c.col < 0 ||
          static_cast<std::size_t>(c.col) >= s.R.cols())
        throw std::out_of_range("univariate_restriction: R coordinate out of range");
      q = restriction_R_offset(s, mats, tr, c.index, c.col).shifted(x0);
      break;
    case Var::t:
      if (mats.costs.at(c.index).split)
        throw std::invalid_argument("univariate_restriction: t is derived at split-cost buses");
      [[fallthrough]];
    case Var::g:
    case Var::h: {
      const std::size_t off = c.var == Var::t ? 0 : (c.var == Var::g ? mats.N : 2 * mats.N);
      auto [a2, a1] = restriction_aux_abs(s, mats, tr, off + c.index);
      q.a2 = a2;
      q.a1 = a1;
      break;
    }
    case Var::u:
    case Var::v:
      q = restriction_flow_abs(s, mats, tr, c.index, c.var == Var::u ? 0 : 1);
      break;
    case Var::z: {
      auto [a2, a1] = restriction_z_abs(s, c.index);
      q.a2 = a2;
      q.a1 = a1;
      break;
    }
    case Var::share: {
      auto [a2, a1] = restriction_share_abs(s, mats, tr, c.index, c.col);
      q.a2 = a2;
      q.a1 = a1;
      break;
    }
    default:
      throw std::invalid_argument("univariate_restriction: unknown variable");
  }
  AugLagState nu0 = s;
  nu0.nu = 0.0;
  q.a0 = 0.0;
  q.a0 = eval_lagrangian(nu0, mats, res) - q(x0);
  return q;
}

// ---------------------------------------------------------------------------
// Snapshot: header line, then one value per line in the order
// R (column-major), t, g, h, u, v, z, multipliers (same order), mu, nu, shares.

inline void write_state(std::ostream& os, const AugLagState& s) {
  os << "lropf-state 1 " << s.R.rows() << ' ' << s.R.cols() << ' ' << s.N << ' ' << s.E << ' '
     << s.share.size() << '\n';
  const auto old = os.precision(17);
  for (double x : s.R.data()) os << x << '\n';
  for (double x : s.aux) os << x << '\n';
  for (double x : s.z) os << x << '\n';
  for (double x : s.lam) os << x << '\n';
  for (double x : s.lam_z) os << x << '\n';
  os << s.mu() << '\n' << s.nu << '\n';
  for (double x : s.share) os << x << '\n';
  os.precision(old);
}

inline AugLagState read_state(std::istream& is) {
  std::string magic;
  int version = 0;
  std::size_t n = 0, r = 0, shares = 0;
  AugLagState s;
  if (!(is >> magic >> version >> n >> r >> s.N >> s.E >> shares) || magic != "lropf-state" ||
      version != 1)
    throw std::runtime_error("read_state: not a state snapshot");
  auto read = [&is](double& x) {
    // Accepts inf/nan spellings written by operator<<.
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("read_state: truncated snapshot");
    x = std::stod(tok);
  };
  s.R = Factor(n, r);
  for (double& x : s.R.data()) read(x);
  const std::size_t lifted = 3 * static_cast<std::size_t>(s.N) + 2 * static_cast<std::size_t>(s.E);
  s.aux.resize(lifted);
  s.z.resize(s.E);
  s.lam.resize(lifted);
  s.lam_z.resize(s.E);
  s.share.resize(shares);
  for (double& x : s.aux) read(x);
  for (double& x : s.z) read(x);
  for (double& x : s.lam) read(x);
  for (double& x : s.lam_z) read(x);
  double mu = 0.0;
  read(mu);
  read(s.nu);
  if (!(mu > 0.0)) throw std::runtime_error("read_state: mu must be positive");
  s.penalty = 1.0 / mu;
  for (double& x : s.share) read(x);
  return s;
}

}  // namespace lropf
