#pragma once

// Real coefficient matrices of the lifted power-flow constraints.
//
// Voltages are stacked as x = [Re V_1..Re V_N, Im V_1..Im V_N] (n = 2N), so
// every power quantity is a quadratic form x^T A x. For bus k:
//   tr(Y_k  xx^T) = net active injection     (P^g_k - P^d_k)
//   tr(Yb_k xx^T) = net reactive injection   (Q^g_k - Q^d_k)
//   tr(M_k  xx^T) = |V_k|^2
// and for each thermally limited branch end the active/reactive flow forms.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lropf/coef_matrix.hpp"
#include "lropf/network.hpp"

namespace lropf {

using cplx = std::complex<double>;

/// Two-port admittances of the standard Pi model with the tap on the from side:
///   I_from = yff V_from + yft V_to,   I_to = ytf V_from + ytt V_to.
struct PiAdmittance {
  cplx yff, yft, ytf, ytt;
};

inline PiAdmittance pi_admittance(const Branch& br) {
  const double z2 = br.r * br.r + br.x * br.x;
  if (!(z2 > 0.0))
    throw std::invalid_argument("branch " + std::to_string(br.from) + "-" +
                                std::to_string(br.to) + ": singular series admittance");
  const cplx ys = 1.0 / cplx(br.r, br.x);
  const cplx tau = std::polar(br.tap, br.shift);
  const cplx ytt = ys + cplx(0.0, 0.5 * br.bc);
  return {ytt / (br.tap * br.tap), -ys / std::conj(tau), -ys / tau, ytt};
}

/// Compact form of a branch-end flow matrix:
///   cA (x_d^2 + x_{d+N}^2) + cC (2 x_l x_m + 2 x_{l+N} x_{m+N})
///                          + cD (2 x_l x_{m+N} - 2 x_m x_{l+N})
/// where d is l for the from end and m for the to end.
struct BranchForm {
  int l = 0, m = 0, N = 0;
  bool diag_at_from = true;
  double cA = 0.0, cC = 0.0, cD = 0.0;

  /// Four look-ups into x.
  double trace(std::span<const double> x) const {
    const double xl = x[l], xlN = x[l + N], xm = x[m], xmN = x[m + N];
    const double diag = diag_at_from ? xl * xl + xlN * xlN : xm * xm + xmN * xmN;
    return cA * diag + 2.0 * (cC * (xl * xm + xlN * xmN) + cD * (xl * xmN - xm * xlN));
  }

  double trace(const Factor& R) const {
    double s = 0.0;
    for (std::size_t c = 0; c < R.cols(); ++c) s += trace(R.col(c));
    return s;
  }

  CoefMatrix to_matrix() const {
    CoefMatrix::Builder b(static_cast<std::size_t>(2 * N));
    const int d = diag_at_from ? l : m;
    b.add_bilinear(d, d, cA).add_bilinear(d + N, d + N, cA);
    b.add_bilinear(l, m, 2.0 * cC).add_bilinear(l + N, m + N, 2.0 * cC);
    b.add_bilinear(l, m + N, 2.0 * cD).add_bilinear(m, l + N, -2.0 * cD);
    return b.build();
  }
};

/// Active (p) and reactive (q) flow forms for one end of a branch.
struct BranchEndForms {
  BranchForm p, q;
};

/// From-end flows S_lm = V_l conj(I_lm); to-end flows S_ml = V_m conj(I_ml).
inline BranchEndForms branch_end_forms(const PiAdmittance& y, int l, int m, int N,
                                       bool to_end) {
  BranchEndForms f;
  f.p.l = f.q.l = l;
  f.p.m = f.q.m = m;
  f.p.N = f.q.N = N;
  f.p.diag_at_from = f.q.diag_at_from = !to_end;
  if (!to_end) {
    const double a = y.yft.real(), b = y.yft.imag();
    f.p.cA = y.yff.real();
    f.p.cC = 0.5 * a;
    f.p.cD = -0.5 * b;
    f.q.cA = -y.yff.imag();
    f.q.cC = -0.5 * b;
    f.q.cD = -0.5 * a;
  } else {
    const double a = y.ytf.real(), b = y.ytf.imag();
    f.p.cA = y.ytt.real();
    f.p.cC = 0.5 * a;
    f.p.cD = 0.5 * b;
    f.q.cA = -y.ytt.imag();
    f.q.cC = -0.5 * b;
    f.q.cD = 0.5 * a;
  }
  return f;
}

struct BusMatrices {
  CoefMatrix Y, Ybar, M;
};

struct BranchMatrices {
  BranchEndForms from, to;
  CoefMatrix Ylm, Ybar_lm;
  /// To-end (Upsilon) matrices; empty when the branch is unlimited.
  CoefMatrix Yml, Ybar_ml;
};

namespace detail {

/// Row k of the complex bus admittance matrix as (column, y_ki) pairs.
using YRow = std::vector<std::pair<int, cplx>>;

inline std::vector<YRow> admittance_rows(const Network& net) {
  const std::size_t N = net.num_buses();
  std::vector<std::map<int, cplx>> acc(N);
  for (std::size_t k = 0; k < N; ++k) {
    const Bus& b = net.buses[k];
    if (b.Gs != 0.0 || b.Bs != 0.0) acc[k][static_cast<int>(k)] += cplx(b.Gs, b.Bs);
  }
  for (const Branch& br : net.branches) {
    const int f = net.index_of(br.from), t = net.index_of(br.to);
    const PiAdmittance y = pi_admittance(br);
    acc[f][f] += y.yff;
    acc[f][t] += y.yft;
    acc[t][f] += y.ytf;
    acc[t][t] += y.ytt;
  }
  std::vector<YRow> rows(N);
  for (std::size_t k = 0; k < N; ++k)
    for (const auto& [i, v] : acc[k]) rows[k].emplace_back(i, v);
  return rows;
}

inline BusMatrices bus_matrices_from_row(const YRow& row, int k, int N) {
  const std::size_t n = static_cast<std::size_t>(2 * N);
  CoefMatrix::Builder P(n), Q(n), M(n);
  const int ek = k, fk = k + N;
  for (const auto& [i, y] : row) {
    const double G = y.real(), B = y.imag();
    const int ei = i, fi = i + N;
    // P_k = sum_i G (e_k e_i + f_k f_i) + B (f_k e_i - e_k f_i)
    P.add_bilinear(ek, ei, G).add_bilinear(fk, fi, G);
    P.add_bilinear(fk, ei, B).add_bilinear(ek, fi, -B);
    // Q_k = sum_i G (f_k e_i - e_k f_i) - B (e_k e_i + f_k f_i)
    Q.add_bilinear(fk, ei, G).add_bilinear(ek, fi, -G);
    Q.add_bilinear(ek, ei, -B).add_bilinear(fk, fi, -B);
  }
  M.add_bilinear(ek, ek, 1.0).add_bilinear(fk, fk, 1.0);
  return {P.build(), Q.build(), M.build()};
}

}  // namespace detail

/// Y_k, Ybar_k and M_k for bus position k.
inline BusMatrices build_bus_matrices(const Network& net, int k) {
  const auto rows = detail::admittance_rows(net);
  return detail::bus_matrices_from_row(rows.at(k), k, static_cast<int>(net.num_buses()));
}

inline BranchMatrices build_branch_matrices(const Network& net, const Branch& br) {
  const int N = static_cast<int>(net.num_buses());
  const int l = net.index_of(br.from), m = net.index_of(br.to);
  if (l < 0 || m < 0) throw std::invalid_argument("build_branch_matrices: unknown bus");
  const PiAdmittance y = pi_admittance(br);
  BranchMatrices out;
  out.from = branch_end_forms(y, l, m, N, false);
  out.to = branch_end_forms(y, l, m, N, true);
  out.Ylm = out.from.p.to_matrix();
  out.Ybar_lm = out.from.q.to_matrix();
  if (br.Smax > 0.0) {
    out.Yml = out.to.p.to_matrix();
    out.Ybar_ml = out.to.q.to_matrix();
  }
  return out;
}

/// One generator's cost and active limits in per-unit, with the cost rescaled
/// so that f(p) = C2 p^2 + C1 p + c0 in $/h for p in p.u.
struct GenUnit {
  double C2 = 0.0, C1 = 0.0, c0 = 0.0;
  double pmin = 0.0, pmax = 0.0;

  double cost(double p) const { return (C2 * p + C1) * p + c0; }
};

/// Cost model of one bus. `units` is empty at load buses, a single
/// (possibly aggregated) unit normally, and one unit per generator when
/// co-located generators have different costs (`split`).
struct BusCost {
  std::vector<GenUnit> units;
  bool split = false;
  int share_offset = -1;
};

/// Which augmented-Lagrangian family a lifted equality belongs to.
enum class Family { t = 0, g = 1, h = 2, u = 3, v = 4 };

struct ThermalEnd {
  int branch = 0;
  bool to_end = false;
  BranchEndForms forms;
  double smax2 = 0.0;
};

struct InstanceMatrices {
  int N = 0;
  std::size_t n = 0;
  double baseMVA = 100.0;

  std::vector<double> Pd, Qd;
  std::vector<double> t_lo, t_hi, g_lo, g_hi, h_lo, h_hi;
  std::vector<BusCost> costs;
  int num_shares = 0;

  std::vector<ThermalEnd> ends;

  /// All lifted equalities aux = tr(A W), in family order t, g, h, u, v.
  std::vector<CoefMatrix> lifted;

  std::size_t num_ends() const { return ends.size(); }
  std::size_t num_lifted() const { return lifted.size(); }

  std::size_t offset(Family f) const {
    const std::size_t E = ends.size(), NN = static_cast<std::size_t>(N);
    switch (f) {
      case Family::t: return 0;
      case Family::g: return NN;
      case Family::h: return 2 * NN;
      case Family::u: return 3 * NN;
      case Family::v: return 3 * NN + E;
    }
    return 0;
  }
  const CoefMatrix& Y(int k) const { return lifted[offset(Family::t) + k]; }
  const CoefMatrix& Ybar(int k) const { return lifted[offset(Family::g) + k]; }
  const CoefMatrix& M(int k) const { return lifted[offset(Family::h) + k]; }
  const CoefMatrix& Yflow(int e) const { return lifted[offset(Family::u) + e]; }
  const CoefMatrix& Ybarflow(int e) const { return lifted[offset(Family::v) + e]; }

  // Row incidence: for coordinate row i, every lifted matrix touching row i
  // with its diagonal entry and off-diagonal (column, value) pairs.
  struct RowTerm {
    int con = 0;
    double diag = 0.0;
    int off_begin = 0, off_end = 0;
  };
  struct OffEntry {
    int col = 0;
    double value = 0.0;
  };
  std::vector<int> row_begin;
  std::vector<RowTerm> row_terms;
  std::vector<OffEntry> row_offs;

  // Union sparsity pattern of all lifted matrices (upper triangle) and, for
  // every stored entry of lifted[c], its slot in that pattern.
  std::vector<std::pair<int, int>> pattern;
  std::vector<std::vector<int>> slots;
};

namespace detail {

inline bool same_cost(const Generator& a, const Generator& b) {
  return a.c2 == b.c2 && a.c1 == b.c1 && a.c0 == b.c0;
}

inline void build_pattern(InstanceMatrices& mats) {
  std::map<std::pair<int, int>, int> index;
  for (const auto& A : mats.lifted)
    for (const auto& e : A.entries()) index.emplace(std::pair{e.i, e.j}, 0);
  mats.pattern.clear();
  for (auto& [ij, slot] : index) {
    slot = static_cast<int>(mats.pattern.size());
    mats.pattern.push_back(ij);
  }
  mats.slots.assign(mats.lifted.size(), {});
  for (std::size_t c = 0; c < mats.lifted.size(); ++c)
    for (const auto& e : mats.lifted[c].entries())
      mats.slots[c].push_back(index.at({e.i, e.j}));
}

inline void build_row_incidence(InstanceMatrices& mats) {
  const std::size_t n = mats.n;
  std::vector<std::map<int, double>> diag(n);
  std::vector<std::map<int, std::vector<InstanceMatrices::OffEntry>>> per_row(n);
  for (std::size_t c = 0; c < mats.lifted.size(); ++c) {
    const int con = static_cast<int>(c);
    for (const auto& e : mats.lifted[c].entries()) {
      if (e.i == e.j) {
        diag[e.i][con] += e.value;
        per_row[e.i][con];
      } else {
        per_row[e.i][con].push_back({e.j, e.value});
        per_row[e.j][con].push_back({e.i, e.value});
      }
    }
  }
  mats.row_begin.assign(n + 1, 0);
  mats.row_terms.clear();
  mats.row_offs.clear();
  for (std::size_t i = 0; i < n; ++i) {
    mats.row_begin[i] = static_cast<int>(mats.row_terms.size());
    for (const auto& [con, list] : per_row[i]) {
      InstanceMatrices::RowTerm t;
      t.con = con;
      auto d = diag[i].find(con);
      t.diag = d == diag[i].end() ? 0.0 : d->second;
      t.off_begin = static_cast<int>(mats.row_offs.size());
      mats.row_offs.insert(mats.row_offs.end(), list.begin(), list.end());
      t.off_end = static_cast<int>(mats.row_offs.size());
      mats.row_terms.push_back(t);
    }
  }
  mats.row_begin[n] = static_cast<int>(mats.row_terms.size());
}

}  // namespace detail

struct InstanceOptions {
  /// Add the to-end flow limit for plain lines too (always added for
  /// transformers and phase shifters).
  bool thermal_both_ends = false;
};

inline InstanceMatrices build_instance(const Network& net, InstanceOptions opt = {}) {
  InstanceMatrices mats;
  const int N = static_cast<int>(net.num_buses());
  mats.N = N;
  mats.n = net.dim();
  mats.baseMVA = net.baseMVA;
  const double sb = net.baseMVA;

  mats.Pd.resize(N);
  mats.Qd.resize(N);
  mats.t_lo.assign(N, 0.0);
  mats.t_hi.assign(N, 0.0);
  mats.g_lo.assign(N, 0.0);
  mats.g_hi.assign(N, 0.0);
  mats.h_lo.resize(N);
  mats.h_hi.resize(N);
  mats.costs.assign(N, {});

  std::vector<std::vector<const Generator*>> at_bus(N);
  for (const Generator& g : net.gens) at_bus[net.index_of(g.bus)].push_back(&g);

  for (int k = 0; k < N; ++k) {
    const Bus& b = net.buses[k];
    mats.Pd[k] = b.Pd;
    mats.Qd[k] = b.Qd;
    mats.h_lo[k] = b.Vmin * b.Vmin;
    mats.h_hi[k] = b.Vmax * b.Vmax;
    double pmin = 0.0, pmax = 0.0, qmin = 0.0, qmax = 0.0;
    for (const Generator* g : at_bus[k]) {
      pmin += g->Pmin;
      pmax += g->Pmax;
      qmin += g->Qmin;
      qmax += g->Qmax;
    }
    mats.t_lo[k] = pmin - b.Pd;
    mats.t_hi[k] = pmax - b.Pd;
    mats.g_lo[k] = qmin - b.Qd;
    mats.g_hi[k] = qmax - b.Qd;

    const auto& gens = at_bus[k];
    if (gens.empty()) continue;
    BusCost& bc = mats.costs[k];
    const bool identical = std::all_of(gens.begin(), gens.end(), [&](const Generator* g) {
      return detail::same_cost(*g, *gens.front());
    });
    auto unit_of = [sb](const Generator& g) {
      return GenUnit{g.c2 * sb * sb, g.c1 * sb, g.c0, g.Pmin, g.Pmax};
    };
    if (identical) {
      // m identical units share output equally at the optimum.
      const double m = static_cast<double>(gens.size());
      GenUnit u = unit_of(*gens.front());
      u.C2 /= m;
      u.c0 *= m;
      u.pmin = pmin;
      u.pmax = pmax;
      bc.units.push_back(u);
    } else {
      for (const Generator* g : gens) bc.units.push_back(unit_of(*g));
      bc.split = true;
      bc.share_offset = mats.num_shares;
      mats.num_shares += static_cast<int>(gens.size());
    }
  }

  const auto rows = detail::admittance_rows(net);
  std::vector<BusMatrices> bm;
  bm.reserve(N);
  for (int k = 0; k < N; ++k) bm.push_back(detail::bus_matrices_from_row(rows[k], k, N));

  for (std::size_t i = 0; i < net.branches.size(); ++i) {
    const Branch& br = net.branches[i];
    if (!(br.Smax > 0.0) || !std::isfinite(br.Smax)) continue;
    const int l = net.index_of(br.from), m = net.index_of(br.to);
    const PiAdmittance y = pi_admittance(br);
    const double s2 = br.Smax * br.Smax;
    mats.ends.push_back({static_cast<int>(i), false, branch_end_forms(y, l, m, N, false), s2});
    if (br.is_transformer() || opt.thermal_both_ends)
      mats.ends.push_back({static_cast<int>(i), true, branch_end_forms(y, l, m, N, true), s2});
  }

  mats.lifted.reserve(3 * N + 2 * mats.ends.size());
  for (int k = 0; k < N; ++k) mats.lifted.push_back(bm[k].Y);
  for (int k = 0; k < N; ++k) mats.lifted.push_back(bm[k].Ybar);
  for (int k = 0; k < N; ++k) mats.lifted.push_back(bm[k].M);
  for (const auto& e : mats.ends) mats.lifted.push_back(e.forms.p.to_matrix());
  for (const auto& e : mats.ends) mats.lifted.push_back(e.forms.q.to_matrix());

  detail::build_row_incidence(mats);
  detail::build_pattern(mats);
  return mats;
}

}  // namespace lropf
