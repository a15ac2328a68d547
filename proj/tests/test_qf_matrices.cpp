#include <gtest/gtest.h>

#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "lropf/auglag.hpp"
#include "lropf/instance.hpp"
#include "test_util.hpp"

using namespace lropf;
using testutil::cplx;

namespace {

Network two_bus_line(double tap = 1.0) {
  Network net;
  net.buses = {{1, 3, 0, 0, 0, 0, 0.9, 1.1}, {2, 1, 0, 0, 0, 0, 0.9, 1.1}};
  // r = 1, x = 0 gives g = 1, b = 0.
  net.branches = {{1, 2, 1.0, 0.0, 0.0, 1.0, tap, 0.0}};
  net.reindex();
  return net;
}

Factor column(const std::vector<double>& x) {
  Factor R(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) R(i, 0) = x[i];
  return R;
}

void expect_canonical(const CoefMatrix& A) {
  for (std::size_t k = 0; k < A.entries().size(); ++k) {
    const auto& e = A.entries()[k];
    EXPECT_LE(e.i, e.j);
    EXPECT_LT(static_cast<std::size_t>(e.j), A.dim());
    if (k > 0) {
      const auto& p = A.entries()[k - 1];
      EXPECT_TRUE(std::pair(p.i, p.j) < std::pair(e.i, e.j));
    }
  }
}

}  // namespace

TEST(BusMatrices, ZeroAdmittanceGivesZeroMatrices) {
  Network net;
  net.buses = {{1, 3, 0, 0, 0, 0, 0.9, 1.1}, {2, 1, 0, 0, 0, 0, 0.9, 1.1}};
  net.reindex();
  const auto bm = build_bus_matrices(net, 0);
  EXPECT_EQ(bm.Y.nnz(), 0u);
  EXPECT_EQ(bm.Ybar.nnz(), 0u);
}

TEST(BusMatrices, TwoBusLineBlocks) {
  const Network net = two_bus_line();
  const auto bm = build_bus_matrices(net, 0);
  // Diagonal blocks 1/2 [2 -1; -1 0], off-diagonal blocks zero.
  for (int blk : {0, 2}) {
    EXPECT_DOUBLE_EQ(bm.Y.at(blk, blk), 1.0);
    EXPECT_DOUBLE_EQ(bm.Y.at(blk, blk + 1), -0.5);
    EXPECT_DOUBLE_EQ(bm.Y.at(blk + 1, blk + 1), 0.0);
  }
  for (int i : {0, 1})
    for (int j : {2, 3}) EXPECT_DOUBLE_EQ(bm.Y.at(i, j), 0.0);
  EXPECT_DOUBLE_EQ(trace_quadform(bm.Y, column({1, 0.5, 0, 0})), 0.5);
}

TEST(BusMatrices, MSelectsTwoCoordinates) {
  const Network net = testutil::small_network();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> G;
  for (int k = 0; k < 3; ++k) {
    const auto M = build_bus_matrices(net, k).M;
    std::vector<double> x(6);
    for (double& v : x) v = G(rng);
    EXPECT_NEAR(M.quad(x), x[k] * x[k] + x[k + 3] * x[k + 3], 1e-14);
  }
}

TEST(BranchMatrices, ZeroAdmittanceBranchGivesZeroMatrices) {
  // Infinite impedance means zero admittance; the series admittance is exactly 0.
  Network net = two_bus_line();
  net.branches[0].r = std::numeric_limits<double>::infinity();
  const auto bm = build_branch_matrices(net, net.branches[0]);
  for (const auto& e : bm.Ylm.entries()) EXPECT_EQ(e.value, 0.0);
  for (const auto& e : bm.Ybar_lm.entries()) EXPECT_EQ(e.value, 0.0);
}

TEST(BranchMatrices, SingularSeriesImpedanceRejected) {
  Network net = two_bus_line();
  net.branches[0].r = 0.0;
  EXPECT_THROW(build_branch_matrices(net, net.branches[0]), std::invalid_argument);
  EXPECT_THROW(build_bus_matrices(net, 0), std::invalid_argument);
}

TEST(BranchMatrices, TwoBusFromEndFlow) {
  const Network net = two_bus_line();
  const auto bm = build_branch_matrices(net, net.branches[0]);
  EXPECT_DOUBLE_EQ(trace_quadform(bm.Ylm, column({1, 0.5, 0, 0})), 0.5);
}

TEST(BranchMatrices, TapScalesFromEndSelfCoefficient) {
  const Network net = two_bus_line(2.0);
  const auto bm = build_branch_matrices(net, net.branches[0]);
  EXPECT_DOUBLE_EQ(bm.from.p.cA, 0.25);
  EXPECT_DOUBLE_EQ(bm.Ylm.at(0, 0), 0.25);
  EXPECT_EQ(bm.Yml.dim(), 4u);  // limited transformer gets the to-end form
}

TEST(BranchMatrices, UnlimitedBranchHasNoToEnd) {
  Network net = two_bus_line(2.0);
  net.branches[0].Smax = 0.0;
  const auto bm = build_branch_matrices(net, net.branches[0]);
  EXPECT_EQ(bm.Yml.nnz(), 0u);
  EXPECT_EQ(bm.Yml.dim(), 0u);
}

TEST(BranchMatrices, CompactFormMatchesMatrix) {
  const Network net = testutil::small_network();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> G;
  for (const auto& br : net.branches) {
    const auto bm = build_branch_matrices(net, br);
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<double> x(6);
      for (double& v : x) v = G(rng);
      EXPECT_NEAR(bm.from.p.trace(x), bm.Ylm.quad(x), 1e-12);
      EXPECT_NEAR(bm.from.q.trace(x), bm.Ybar_lm.quad(x), 1e-12);
      EXPECT_NEAR(bm.to.p.trace(x), bm.Yml.quad(x), 1e-12);
      EXPECT_NEAR(bm.to.q.trace(x), bm.Ybar_ml.quad(x), 1e-12);
    }
  }
}

// Rank-1 consistency against complex power-flow arithmetic.
class RankOneOracle : public ::testing::TestWithParam<std::string> {};

TEST_P(RankOneOracle, TracesEqualComplexPowers) {
  const Network net = GetParam() == "small" ? testutil::small_network()
                                             : testutil::load(GetParam());
  const InstanceMatrices mats = build_instance(net, {.thermal_both_ends = true});
  const std::size_t N = net.num_buses();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.2, 1.2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(2 * N);
    for (double& v : x) v = U(rng);
    const auto V = testutil::voltages(x, N);
    const auto S = testutil::injections(net, V);
    for (std::size_t k = 0; k < N; ++k) {
      // tr(Y_k W) + P^d_k is the generation required at bus k.
      const double Pg = S[k].real() + net.buses[k].Pd;
      const double Qg = S[k].imag() + net.buses[k].Qd;
      EXPECT_NEAR(mats.Y(static_cast<int>(k)).quad(x) + mats.Pd[k], Pg, 1e-9);
      EXPECT_NEAR(mats.Ybar(static_cast<int>(k)).quad(x) + mats.Qd[k], Qg, 1e-9);
      EXPECT_NEAR(mats.M(static_cast<int>(k)).quad(x), std::norm(V[k]), 1e-12);
    }
    for (std::size_t e = 0; e < mats.num_ends(); ++e) {
      const auto& end = mats.ends[e];
      const cplx Sf = testutil::branch_flow(net.branches[end.branch], net, V, end.to_end);
      EXPECT_NEAR(mats.Yflow(static_cast<int>(e)).quad(x), Sf.real(), 1e-9);
      EXPECT_NEAR(mats.Ybarflow(static_cast<int>(e)).quad(x), Sf.imag(), 1e-9);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Cases, RankOneOracle,
                         ::testing::Values("small", "case9.m", "case14.m", "case30.m",
                                           "case57.m", "case118.m"),
                         [](const auto& info) {
                           std::string s = info.param;
                           return s.substr(0, s.find('.'));
                         });

TEST(Instance, StorageIsCanonical) {
  const InstanceMatrices mats = build_instance(testutil::load("case30.m"));
  for (const auto& A : mats.lifted) {
    EXPECT_EQ(A.dim(), mats.n);
    expect_canonical(A);
  }
}

TEST(Instance, BoxesAndEnds) {
  const Network net = testutil::small_network();
  const InstanceMatrices mats = build_instance(net);
  // Load-only bus: t and g boxes collapse to -P^d, -Q^d.
  EXPECT_DOUBLE_EQ(mats.t_lo[2], -0.9);
  EXPECT_DOUBLE_EQ(mats.t_hi[2], -0.9);
  EXPECT_DOUBLE_EQ(mats.g_lo[2], -0.3);
  EXPECT_DOUBLE_EQ(mats.g_hi[2], -0.3);
  EXPECT_DOUBLE_EQ(mats.h_lo[1], 0.95 * 0.95);
  EXPECT_DOUBLE_EQ(mats.h_hi[1], 1.05 * 1.05);
  // Aggregated generator limits at bus 2.
  EXPECT_DOUBLE_EQ(mats.t_lo[1], 0.1 - 0.3);
  EXPECT_DOUBLE_EQ(mats.t_hi[1], 2.5 - 0.3);
  EXPECT_TRUE(mats.costs[1].split);
  EXPECT_EQ(mats.num_shares, 2);
  // Three limited branches, one transformer: four ends by default.
  EXPECT_EQ(mats.num_ends(), 4u);
  EXPECT_EQ(build_instance(net, {.thermal_both_ends = true}).num_ends(), 6u);
  EXPECT_EQ(mats.num_lifted(), 3u * 3u + 2u * 4u);
}

TEST(Instance, RowIncidenceReproducesMatrices) {
  const InstanceMatrices mats = build_instance(testutil::small_network());
  // Rebuild each lifted matrix from the row incidence and compare.
  std::vector<std::map<std::pair<int, int>, double>> rebuilt(mats.num_lifted());
  for (std::size_t i = 0; i < mats.n; ++i)
    for (int t = mats.row_begin[i]; t < mats.row_begin[i + 1]; ++t) {
      const auto& term = mats.row_terms[t];
      if (term.diag != 0.0) rebuilt[term.con][{int(i), int(i)}] += term.diag;
      for (int o = term.off_begin; o < term.off_end; ++o) {
        const auto& off = mats.row_offs[o];
        if (off.col > static_cast<int>(i)) rebuilt[term.con][{int(i), off.col}] += off.value;
      }
    }
  for (std::size_t c = 0; c < mats.num_lifted(); ++c) {
    ASSERT_EQ(rebuilt[c].size(), mats.lifted[c].nnz()) << c;
    for (const auto& e : mats.lifted[c].entries())
      EXPECT_DOUBLE_EQ(rebuilt[c].at({e.i, e.j}), e.value);
  }
}

TEST(TraceQuadform, IdentityGivesFrobeniusNorm) {
  CoefMatrix::Builder b(2);
  b.add_entry(0, 0, 1.0).add_entry(1, 1, 1.0);
  EXPECT_DOUBLE_EQ(trace_quadform(b.build(), column({1, 2})), 5.0);
}

TEST(TraceQuadform, ZeroMatrix) {
  Factor R(3, 2, 1.7);
  EXPECT_EQ(trace_quadform(CoefMatrix(3), R), 0.0);
}

TEST(TraceQuadform, DimensionMismatchThrows) {
  EXPECT_THROW(trace_quadform(CoefMatrix(3), Factor(2, 1)), std::invalid_argument);
}

TEST(TraceQuadform, MatchesDenseOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    double A[4][4];
    CoefMatrix::Builder b(4);
    for (int i = 0; i < 4; ++i)
      for (int j = i; j < 4; ++j) {
        A[i][j] = A[j][i] = U(rng);
        b.add_entry(i, j, A[i][j]);
      }
    Factor R(4, 2);
    for (double& x : R.data()) x = U(rng);
    double dense = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) dense += R(i, c) * A[i][j] * R(j, c);
    const double got = trace_quadform(b.build(), R);
    EXPECT_NEAR(got, dense, 1e-12 * std::max(1.0, std::abs(dense)));
  }
}

TEST(TraceQuadform, OperationCount) {
  const InstanceMatrices mats = build_instance(testutil::load("case14.m"));
  Factor R(mats.n, 3, 0.5);
  for (const auto& A : mats.lifted) {
    OpCounter ops;
    trace_quadform(A, R, &ops);
    std::size_t off = 0;
    for (const auto& e : A.entries()) off += e.i != e.j;
    EXPECT_EQ(ops.multiply_adds, A.nnz() * 3);
    EXPECT_EQ(ops.doublings, off * 3);
  }
}

TEST(Builder, BilinearSplitsOffDiagonal) {
  CoefMatrix::Builder b(3);
  b.add_bilinear(0, 2, 4.0).add_bilinear(2, 0, 2.0).add_bilinear(1, 1, 3.0);
  const CoefMatrix A = b.build();
  EXPECT_DOUBLE_EQ(A.at(0, 2), 3.0);
  EXPECT_DOUBLE_EQ(A.at(2, 0), 3.0);
  EXPECT_DOUBLE_EQ(A.at(1, 1), 3.0);
  const std::vector<double> x{1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(A.quad(x), 6.0 * 3.0 + 3.0 * 4.0);
  EXPECT_THROW(b.add_entry(0, 3, 1.0), std::out_of_range);
}

TEST(Builder, DumpListsEntries) {
  CoefMatrix::Builder b(2);
  b.add_entry(0, 1, 0.5);
  std::ostringstream os;
  dump(os, b.build());
  EXPECT_EQ(os.str(), "0 1 0.5\n");
}

// L restricted to one coordinate reproduces L along that axis.
TEST(Restriction, SingleEntryQuartic) {
  // n = 1 is not a network dimension; emulate with one lifted matrix by hand.
  InstanceMatrices mats;
  mats.N = 1;
  mats.n = 2;
  mats.Pd = mats.Qd = {0.0};
  mats.t_lo = mats.g_lo = mats.h_lo = {-1e9};
  mats.t_hi = mats.g_hi = mats.h_hi = {1e9};
  mats.costs.assign(1, {});
  CoefMatrix::Builder b(2);
  b.add_entry(0, 0, 1.0);
  mats.lifted = {b.build(), CoefMatrix(2), CoefMatrix(2)};
  lropf::detail::build_row_incidence(mats);
  lropf::detail::build_pattern(mats);
  AugLagState s = make_state(mats, 1, 2.0);  // (penalty/2) r^2 = (t - x^2)^2
  const QuarticCoeffs q = univariate_restriction(s, mats, {Var::R, 0, 0});
  EXPECT_DOUBLE_EQ(q.a4, 1.0);
  EXPECT_DOUBLE_EQ(q.a3, 0.0);
  EXPECT_DOUBLE_EQ(q.a2, 0.0);
  EXPECT_DOUBLE_EQ(q.a1, 0.0);
  EXPECT_DOUBLE_EQ(q.a0, 0.0);
}

TEST(Restriction, TVertexAtTrace) {
  const Network net = testutil::load("case9.m");
  InstanceMatrices mats = build_instance(net);
  for (auto& c : mats.costs)
    for (auto& u : c.units) u.C2 = u.C1 = 0.0;
  AugLagState s = testutil::random_state(mats, 1, 2);
  std::fill(s.lam.begin(), s.lam.end(), 0.0);
  const double tr = trace_quadform(mats.Y(0), s.R);
  const QuarticCoeffs q = univariate_restriction(s, mats, {Var::t, 0, 0});
  EXPECT_EQ(q.a4, 0.0);
  EXPECT_EQ(q.a3, 0.0);
  EXPECT_NEAR(-q.a1 / (2.0 * q.a2), tr, 1e-12);
}

class RestrictionExact : public ::testing::TestWithParam<std::string> {};

TEST_P(RestrictionExact, MatchesFullEvaluation) {
  const Network net = GetParam() == "small" ? testutil::small_network()
                                             : testutil::load(GetParam());
  const InstanceMatrices mats = build_instance(net, {.thermal_both_ends = true});
  for (std::size_t r : {1u, 2u}) {
    const AugLagState s = testutil::random_state(mats, r, 100 + r);
    for (const Coordinate& c : testutil::all_coordinates(s, mats)) {
      const QuarticCoeffs q = univariate_restriction(s, mats, c);
      EXPECT_GE(q.a4, -1e-12);
      for (double x : {-1.0, -0.3, 0.0, 0.7, 2.0}) {
        AugLagState t = s;
        set_coordinate(t, mats, c, x);
        const double L = eval_lagrangian(t, mats);
        EXPECT_NEAR(q(x), L, 1e-8 * std::max(1.0, std::abs(L)))
            << "var " << int(c.var) << " index " << c.index << " col " << c.col;
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Cases, RestrictionExact,
                         ::testing::Values("small", "case9.m", "case14.m"),
                         [](const auto& info) {
                           std::string s = info.param;
                           return s.substr(0, s.find('.'));
                         });
