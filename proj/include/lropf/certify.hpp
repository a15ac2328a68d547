#pragma once

// Post-solve analysis: numerical rank of the factor, voltage extraction,
// direct residuals of the original power-flow model and a first-order dual
// certificate S = Q + sum lambda_i A_i with S R = 0, S psd.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lropf/auglag.hpp"
#include "lropf/coef_matrix.hpp"
#include "lropf/instance.hpp"
#include "lropf/network.hpp"

namespace lropf {

struct RankInfo {
  int rank = 0;
  double sigma_ratio = 0.0;  // sigma_2 / sigma_1, 0 for r = 1 or R = 0
};

namespace detail {

inline RankInfo rank_from_eigs(Eigen::VectorXd eig, double rel_tol) {
  RankInfo out;
  for (auto& e : eig) e = std::sqrt(std::max(e, 0.0));
  std::sort(eig.data(), eig.data() + eig.size(), std::greater<>());
  if (eig.size() == 0 || eig[0] == 0.0) return out;
  for (auto s : eig)
    if (s >= rel_tol * eig[0]) ++out.rank;
  if (eig.size() > 1) out.sigma_ratio = eig[1] / eig[0];
  return out;
}

}  // namespace detail

/// Rank of R from the eigenvalues of the r x r Gram matrix R^T R.
inline RankInfo numerical_rank(const Factor& R, double rel_tol = 1e-4) {
  const auto r = static_cast<Eigen::Index>(R.cols());
  Eigen::Map<const Eigen::MatrixXd> M(R.data().data(), static_cast<Eigen::Index>(R.rows()), r);
  const Eigen::MatrixXd G = M.transpose() * M;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  return detail::rank_from_eigs(es.eigenvalues(), rel_tol);
}

/// Rank of R read as complex voltages: column c gives V = x_c[0:N] + j x_c[N:2N].
/// Every lifted matrix is invariant under a common phase rotation, so the
/// real pair {x, Jx} of one complex voltage profile counts as rank 1 here.
inline RankInfo complex_rank(const Factor& R, double rel_tol = 1e-4) {
  const std::size_t N = R.rows() / 2, r = R.cols();
  Eigen::MatrixXcd V(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(r));
  for (std::size_t c = 0; c < r; ++c)
    for (std::size_t k = 0; k < N; ++k) V(k, c) = {R(k, c), R(k + N, c)};
  const Eigen::MatrixXcd G = V.adjoint() * V;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G, Eigen::EigenvaluesOnly);
  return detail::rank_from_eigs(es.eigenvalues(), rel_tol);
}

inline int reference_bus(const Network& net) {
  for (std::size_t k = 0; k < net.buses.size(); ++k)
    if (net.buses[k].type == 3) return static_cast<int>(k);
  return 0;
}

/// Complex voltages from a rank-1 factor. A factor of real rank 1 gives
/// x = sigma_1 u_1 directly. A factor of real rank 2 that is one complex
/// profile (columns x and Jx) is read through the complex SVD with the
/// reference bus rotated onto the real axis. Finally the sign is chosen so
/// that the reference bus angle lies in (-pi/2, pi/2].
inline std::vector<std::complex<double>> extract_voltages(const Factor& R, const Network& net,
                                                          double rel_tol = 1e-4) {
  const std::size_t N = net.num_buses();
  if (R.rows() != 2 * N) throw std::invalid_argument("extract_voltages: dimension mismatch");
  std::vector<std::complex<double>> V(N);
  const auto n = static_cast<Eigen::Index>(R.rows()), r = static_cast<Eigen::Index>(R.cols());
  Eigen::Map<const Eigen::MatrixXd> M(R.data().data(), n, r);
  if (numerical_rank(R, rel_tol).rank <= 1) {
    // x = R v_1 with v_1 the leading eigenvector of R^T R.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M.transpose() * M);
    const Eigen::VectorXd x = M * es.eigenvectors().col(r - 1);
    for (std::size_t k = 0; k < N; ++k) V[k] = {x(k), x(k + N)};
  } else {
    if (complex_rank(R, rel_tol).rank > 1)
      throw std::invalid_argument("extract_voltages: factor is not rank 1");
    Eigen::MatrixXcd C(static_cast<Eigen::Index>(N), r);
    for (Eigen::Index c = 0; c < r; ++c)
      for (std::size_t k = 0; k < N; ++k) C(k, c) = {R(k, c), R(k + N, c)};
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(C, Eigen::ComputeThinU);
    const double s1 = svd.singularValues()(0);
    for (std::size_t k = 0; k < N; ++k) V[k] = s1 * svd.matrixU()(k, 0);
    const auto ref = V[reference_bus(net)];
    if (std::abs(ref) > 0.0) {
      const auto rot = std::conj(ref) / std::abs(ref);
      for (auto& v : V) v *= rot;
    }
  }
  const double ang = std::arg(V[reference_bus(net)]);
  if (std::abs(V[reference_bus(net)]) > 0.0 &&
      !(ang > -std::numbers::pi / 2 && ang <= std::numbers::pi / 2))
    for (auto& v : V) v = -v;
  return V;
}

struct FlowViolation {
  int branch = 0;
  bool to_end = false;
  double excess = 0.0;  // |S| - Smax in p.u., clipped at 0
};

struct AcopfResiduals {
  std::vector<double> Pg, Qg;        // net generation per bus (injection + load), p.u.
  std::vector<double> p_violation;   // distance outside [sum Pmin, sum Pmax]
  std::vector<double> q_violation;
  std::vector<double> v_violation;   // distance of |V| outside [Vmin, Vmax]
  std::vector<FlowViolation> flows;  // one per limited branch end
  double max_violation = 0.0;
};

/// Evaluates the power-flow equations at V and every operating limit.
inline AcopfResiduals acopf_residuals(const std::vector<std::complex<double>>& V,
                                      const Network& net) {
  const std::size_t N = net.num_buses();
  if (V.size() != N) throw std::invalid_argument("acopf_residuals: need one voltage per bus");
  std::vector<std::complex<double>> I(N, 0.0);
  for (std::size_t k = 0; k < N; ++k)
    I[k] += std::complex<double>(net.buses[k].Gs, net.buses[k].Bs) * V[k];
  for (const Branch& br : net.branches) {
    const int f = net.index_of(br.from), t = net.index_of(br.to);
    const PiAdmittance y = pi_admittance(br);
    I[f] += y.yff * V[f] + y.yft * V[t];
    I[t] += y.ytf * V[f] + y.ytt * V[t];
  }
  AcopfResiduals out;
  out.Pg.resize(N);
  out.Qg.resize(N);
  out.p_violation.assign(N, 0.0);
  out.q_violation.assign(N, 0.0);
  out.v_violation.assign(N, 0.0);
  std::vector<double> pmin(N, 0.0), pmax(N, 0.0), qmin(N, 0.0), qmax(N, 0.0);
  for (const Generator& g : net.gens) {
    const int k = net.index_of(g.bus);
    pmin[k] += g.Pmin;
    pmax[k] += g.Pmax;
    qmin[k] += g.Qmin;
    qmax[k] += g.Qmax;
  }
  auto outside = [](double x, double lo, double hi) {
    return std::max({0.0, lo - x, x - hi});
  };
  for (std::size_t k = 0; k < N; ++k) {
    const auto S = V[k] * std::conj(I[k]);
    out.Pg[k] = S.real() + net.buses[k].Pd;
    out.Qg[k] = S.imag() + net.buses[k].Qd;
    out.p_violation[k] = outside(out.Pg[k], pmin[k], pmax[k]);
    out.q_violation[k] = outside(out.Qg[k], qmin[k], qmax[k]);
    out.v_violation[k] = outside(std::abs(V[k]), net.buses[k].Vmin, net.buses[k].Vmax);
    out.max_violation = std::max({out.max_violation, out.p_violation[k], out.q_violation[k],
                                  out.v_violation[k]});
  }
  for (std::size_t i = 0; i < net.branches.size(); ++i) {
    const Branch& br = net.branches[i];
    if (!(br.Smax > 0.0)) continue;
    const int f = net.index_of(br.from), t = net.index_of(br.to);
    const PiAdmittance y = pi_admittance(br);
    const auto Sf = V[f] * std::conj(y.yff * V[f] + y.yft * V[t]);
    const auto St = V[t] * std::conj(y.ytf * V[f] + y.ytt * V[t]);
    for (int end = 0; end < 2; ++end) {
      const double excess = std::max(0.0, std::abs(end ? St : Sf) - br.Smax);
      out.flows.push_back({static_cast<int>(i), end == 1, excess});
      out.max_violation = std::max(out.max_violation, excess);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dual certificate.

enum class Verdict { certified_global, rank_deficient_only, not_certified };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::certified_global: return "certified-global";
    case Verdict::rank_deficient_only: return "rank-deficient-only";
    case Verdict::not_certified: return "not-certified";
  }
  return "unknown";
}

struct CertificateTolerances {
  double rank = 1e-4;
  double stat = 1e-6;  // relative to ||S||_F
  double eig = 1e-8;   // relative to ||S||_F
  double active = 1e-6;
};

struct Certificate {
  int rank_numeric = 0;
  double sigma_ratio = 0.0;
  double stationarity_norm = 0.0;
  double min_eig_S = 0.0;
  double norm_S = 0.0;
  /// Largest |d L / d aux| left over at the auxiliary variables (diagnostic).
  double aux_kkt = 0.0;
  Verdict verdict = Verdict::not_certified;
};

/// One term lambda_i A_i of S.
struct WeightedMatrix {
  const CoefMatrix* A = nullptr;
  double lambda = 0.0;
};

namespace detail {

/// Smallest eigenvalue of a dense symmetric matrix, dense solve up to n = 1000
/// and shifted power iteration above.
inline double smallest_eigenvalue(const Eigen::MatrixXd& S) {
  const Eigen::Index n = S.rows();
  if (n == 0) return 0.0;
  if (n <= 1000) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("dual_certificate: eigensolver did not converge");
    return es.eigenvalues()(0);
  }
  // Power iteration on (sigma I - S) with sigma an upper bound of the spectrum.
  double sigma = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) sigma = std::max(sigma, S.row(i).cwiseAbs().sum());
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = U(rng);
  x.normalize();
  double theta = 0.0;
  for (int it = 0; it < 20000; ++it) {
    Eigen::VectorXd y = sigma * x - S * x;
    const double th = x.dot(y);
    const double nrm = y.norm();
    if (nrm == 0.0) return sigma;
    x = y / nrm;
    if (it > 10 && std::abs(th - theta) <= 1e-13 * std::max(1.0, std::abs(th)))
      return sigma - th;
    theta = th;
  }
  throw std::runtime_error("dual_certificate: power iteration did not converge");
}

/// A failed dual check decides; a valid dual pair with a higher-rank factor
/// still certifies the relaxation value, just not a rank-1 point.
inline Verdict decide(const Certificate& c, const CertificateTolerances& tol) {
  const bool stat_ok = c.stationarity_norm <= tol.stat * c.norm_S;
  const bool psd_ok = c.min_eig_S >= -tol.eig * c.norm_S;
  if (!(stat_ok && psd_ok)) return Verdict::not_certified;
  return c.sigma_ratio <= tol.rank ? Verdict::certified_global : Verdict::rank_deficient_only;
}

}  // namespace detail

/// Generic certificate for min tr(Q W) s.t. tr(A_i W) = b_i, W = R R^T.
inline Certificate dual_certificate(const CoefMatrix& Q, const std::vector<WeightedMatrix>& terms,
                                    const Factor& R, CertificateTolerances tol = {}) {
  const auto n = static_cast<Eigen::Index>(R.rows());
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  auto add = [&S](const CoefMatrix& A, double w) {
    for (const auto& e : A.entries()) {
      S(e.i, e.j) += w * e.value;
      if (e.i != e.j) S(e.j, e.i) += w * e.value;
    }
  };
  if (Q.dim() == R.rows()) add(Q, 1.0);
  for (const auto& t : terms) {
    if (t.A->dim() != R.rows()) throw std::invalid_argument("dual_certificate: dimension mismatch");
    add(*t.A, t.lambda);
  }
  Eigen::Map<const Eigen::MatrixXd> Rm(R.data().data(), n, static_cast<Eigen::Index>(R.cols()));
  Certificate c;
  const RankInfo ri = numerical_rank(R, tol.rank);
  c.rank_numeric = ri.rank;
  c.sigma_ratio = ri.sigma_ratio;
  c.norm_S = S.norm();
  c.stationarity_norm = (S * Rm).norm();
  c.min_eig_S = detail::smallest_eigenvalue(S);
  c.verdict = detail::decide(c, tol);
  return c;
}

/// Certificate for a solved instance. Generation cost is charged on t, so Q
/// vanishes in W-space and S = sum y_i A_i with y = lambda - rho r the
/// multiplier estimate after the last step. At bounds that are active the
/// auxiliary stationarity conditions absorb the box multipliers; `aux_kkt`
/// reports what is left at the interior coordinates.
inline Certificate dual_certificate(const AugLagState& s, const InstanceMatrices& mats,
                                    CertificateTolerances tol = {}) {
  const Residuals res = compute_residuals(s, mats);
  std::vector<WeightedMatrix> terms;
  terms.reserve(mats.num_lifted());
  std::vector<double> y(mats.num_lifted());
  for (std::size_t c = 0; c < mats.num_lifted(); ++c) {
    y[c] = s.lam[c] - s.penalty * res.r[c];
    terms.push_back({&mats.lifted[c], y[c]});
  }
  // The certificate sign convention: L contains -y * (aux - tr(A W)), so the
  // W-gradient is +sum y A.
  Certificate c = dual_certificate(CoefMatrix(mats.n), terms, s.R, tol);
  // Rank counted over complex voltages: the lifted problem is phase invariant.
  const RankInfo ri = complex_rank(s.R, tol.rank);
  c.rank_numeric = ri.rank;
  c.sigma_ratio = ri.sigma_ratio;
  c.verdict = detail::decide(c, tol);

  // Stationarity of the auxiliary variables under the same y.
  double kkt = 0.0;
  auto interior = [&](double x, double lo, double hi) {
    return x > lo + tol.active && x < hi - tol.active;
  };
  const int N = mats.N;
  for (int k = 0; k < N; ++k) {
    const BusCost& bc = mats.costs[k];
    const double t = s.aux[k];
    if (interior(t, mats.t_lo[k], mats.t_hi[k]) && !bc.split) {
      double df = 0.0;
      if (!bc.units.empty()) {
        const auto& u = bc.units.front();
        df = 2.0 * u.C2 * (t + mats.Pd[k]) + u.C1;
      }
      kkt = std::max(kkt, std::abs(df - y[k]));
    }
    if (interior(s.aux[N + k], mats.g_lo[k], mats.g_hi[k]))
      kkt = std::max(kkt, std::abs(y[N + k]));
    if (interior(s.aux[2 * N + k], mats.h_lo[k], mats.h_hi[k]))
      kkt = std::max(kkt, std::abs(y[2 * N + k]));
  }
  c.aux_kkt = kkt;
  return c;
}

}  // namespace lropf
