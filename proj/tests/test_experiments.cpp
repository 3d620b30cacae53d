#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace dualsq;
using dualsq::testing::Gen;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream(path) << body;
  return path;
}

/// Independent primal solve of the elastic net by proximal gradient on
///   a(1-r)/2 ||x||^2 + a r ||x||_1 + ||X x - y||^2 / (2p).
Vec elastic_net_primal(const Mat& X, const Vec& y, double alpha, double r) {
  const double p = static_cast<double>(X.rows());
  const double smax = Eigen::JacobiSVD<Mat>(X).singularValues()[0];
  const double t = 1.0 / (alpha * (1.0 - r) + smax * smax / p);
  Vec x = Vec::Zero(X.cols());
  for (int it = 0; it < 200000; ++it) {
    const Vec grad = alpha * (1.0 - r) * x + X.transpose() * (X * x - y) / p;
    const Vec u = x - t * grad;
    const double thr = t * alpha * r;
    const Vec xn = (u.array().sign() * (u.array().abs() - thr).max(0.0)).matrix();
    const double step = (xn - x).norm();
    x = xn;
    if (step < 1e-15 * (1.0 + x.norm())) break;
  }
  return x;
}

}  // namespace

TEST(Experiments, DefaultShapes) {
  const ExperimentSpec en = default_spec("elastic_net");
  EXPECT_EQ(en.n, 8);
  EXPECT_EQ(en.p, 20);
  EXPECT_EQ(en.d, 9);
  EXPECT_EQ(partition_sizes(en), (std::vector<int>{1, 1, 1, 1, 1, 1, 1, 2}));
  const ExperimentSpec cr = default_spec("constrained_regression");
  EXPECT_EQ(cr.p, 9);
  EXPECT_EQ(cr.d, 9);
  const ExperimentSpec ra = default_spec("resource_allocation");
  EXPECT_EQ(ra.n, 20);
  EXPECT_EQ(ra.p, 10);
  EXPECT_EQ(partition_sizes(ra), std::vector<int>(20, 2));
  EXPECT_EQ(en.graph_spec(), "er:8:0.1:0");
  EXPECT_THROW(default_spec("nope"), ConfigError);
}

TEST(Experiments, PartitionSizes) {
  ExperimentSpec s;
  s.n = 3;
  s.d = 8;
  EXPECT_EQ(partition_sizes(s), (std::vector<int>{2, 3, 3}));
  s.d_i = {4, 2, 2};
  EXPECT_EQ(partition_sizes(s), (std::vector<int>{4, 2, 2}));
  s.d_i = {4, 2, 1};
  EXPECT_THROW(partition_sizes(s), ConfigError);
  s.d_i = {8, 0, 0};
  EXPECT_THROW(partition_sizes(s), ConfigError);
  s.d_i.clear();
  s.d = 2;
  EXPECT_THROW(partition_sizes(s), ConfigError);
}

TEST(Experiments, CaseTagsAndCouplings) {
  const ProblemInstance en = generate(default_spec("elastic_net"));
  EXPECT_EQ(en.case_tag(), CaseTag::hstar_strongly_convex);
  EXPECT_EQ(en.coupling().kind(), Coupling::Kind::shifted_quadratic);
  EXPECT_DOUBLE_EQ(en.coupling().mu_hstar(), 20.0);
  // the last column of the stacked features is the intercept
  const Mat A = en.stacked_A();
  EXPECT_EQ(A.col(8), Vec::Ones(20));
  EXPECT_DOUBLE_EQ(en.agent(0).f.mu(), 100.0 * 0.9);

  const ProblemInstance cr = generate(default_spec("constrained_regression"));
  EXPECT_EQ(cr.case_tag(), CaseTag::global_full_row_rank);
  EXPECT_EQ(cr.coupling().kind(), Coupling::Kind::clipped_quadratic);
  EXPECT_DOUBLE_EQ(cr.coupling().L_hstar(), 9.0);

  const ProblemInstance rs = generate(default_spec("resource_sharing"));
  EXPECT_EQ(rs.case_tag(), CaseTag::local_full_row_rank);

  const ProblemInstance ra = generate(default_spec("resource_allocation"));
  EXPECT_EQ(ra.case_tag(), CaseTag::general_convex);
}

TEST(Experiments, ResourceAllocationFeasibleAtZero) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentSpec s = default_spec("resource_allocation");
    s.seed = seed;
    const ProblemInstance pr = generate(s);
    const Vec& b = pr.coupling().offset();
    EXPECT_TRUE((b.array() > 0.0).all());
    for (const auto& a : pr.agents()) {
      EXPECT_TRUE(a.g.in_domain(Vec::Zero(a.dim())));
      const Eigen::SelfAdjointEigenSolver<Mat> es(a.f.P());
      EXPECT_GE(es.eigenvalues().minCoeff(), 1.0 - 1e-9);
      EXPECT_LE(es.eigenvalues().maxCoeff(), 1000.0 + 1e-9);
    }
    // A * 0 = 0 <= b, so the dual residual at x = 0 and lambda = 0 is zero
    const KktResidual r = kkt_residual(pr, dualsq::testing::zeros_like(pr), Vec::Zero(pr.p()));
    EXPECT_EQ(r.dual, 0.0);
  }
}

TEST(Experiments, Determinism) {
  for (const char* fam : {"elastic_net", "constrained_regression", "resource_allocation", "resource_sharing"}) {
    ExperimentSpec s = default_spec(fam);
    s.seed = 7;
    EXPECT_EQ(instance_to_json(generate(s)), instance_to_json(generate(s))) << fam;
    ExperimentSpec t = s;
    t.seed = 8;
    EXPECT_NE(instance_to_json(generate(s)), instance_to_json(generate(t))) << fam;
  }
}

TEST(Experiments, Rejections) {
  ExperimentSpec s = default_spec("elastic_net");
  s.rho_en = 1.0;
  EXPECT_THROW(generate(s), ConfigError);
  s.rho_en = 0.1;
  s.alpha = 0.0;
  EXPECT_THROW(generate(s), ConfigError);
  s = default_spec("elastic_net");
  s.data = "parquet:x";
  EXPECT_THROW(generate(s), ConfigError);
  s = default_spec("resource_sharing");
  s.d = 6;  // d_i = 1 < p = 2
  EXPECT_THROW(generate(s), ConfigError);
}

TEST(Experiments, CsvDataset) {
  const std::string path = write_temp("en.csv", "f1,f2,label\n1,0,1\n0,1,2\n1,1,0\n2,-1,1\n");
  ExperimentSpec s = default_spec("elastic_net");
  s.n = 2;
  s.p = 4;
  s.d = 3;
  s.data = "csv:" + path;
  const ProblemInstance pr = generate(s);
  Mat expect(4, 3);
  expect << 1, 0, 1, 0, 1, 1, 1, 1, 1, 2, -1, 1;
  EXPECT_EQ(pr.stacked_A(), expect);
  Vec y(4);
  y << 1, 2, 0, 1;
  EXPECT_EQ(pr.coupling().offset(), y);

  s.p = 5;
  EXPECT_THROW(generate(s), ConfigError);
  const std::string ragged = write_temp("ragged.csv", "1,2,3\n1,2\n");
  EXPECT_THROW(read_csv_dataset(ragged), ConfigError);
  const std::string bad = write_temp("bad.csv", "1,2,3\n1,x,3\n");
  EXPECT_THROW(read_csv_dataset(bad), ConfigError);
  EXPECT_THROW(read_csv_dataset(::testing::TempDir() + "missing.csv"), ConfigError);
}

TEST(Experiments, RankDeficientRegressionRejected) {
  // duplicated sample rows: X lacks full row rank
  const std::string path = write_temp("cr.csv", "1,2,3,1\n1,2,3,1\n0,1,1,2\n");
  ExperimentSpec s = default_spec("constrained_regression");
  s.n = 3;
  s.p = 3;
  s.d = 3;
  s.data = "csv:" + path;
  EXPECT_THROW(generate(s), ConfigError);
}

TEST(ReferenceSolve, SharingToyAnalytic) {
  const double a1 = 0.7, a2 = -1.3, b = 2.0;
  std::vector<AgentLocalProblem> agents;
  for (double a : {a1, a2})
    agents.emplace_back(SmoothFn::quadratic(Mat::Identity(1, 1), v1(-a)), ProxFn::zero(1), Mat::Identity(1, 1));
  const ProblemInstance pr(std::move(agents), Coupling::linear(v1(b)), CaseTag::local_full_row_rank);
  const ReferenceSolution ref = reference_solve(pr, 1e-12);
  const double shift = (b - a1 - a2) / 2.0;
  EXPECT_NEAR(ref.x_star[0][0], a1 + shift, 1e-11);
  EXPECT_NEAR(ref.x_star[1][0], a2 + shift, 1e-11);
  EXPECT_NEAR(ref.lambda_star[0], -shift, 1e-11);
  EXPECT_LE(ref.tol, 1e-12);
}

// Quadratic f with an equality coupling: the saddle point solves one dense
// linear KKT system.
TEST(ReferenceSolve, SharingMatchesDenseKkt) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ExperimentSpec s = default_spec("resource_sharing");
    s.seed = seed;
    const ProblemInstance pr = generate(s);
    const Index d = pr.d(), p = pr.p();
    Mat K = Mat::Zero(d + p, d + p);
    Vec rhs(d + p);
    Index off = 0;
    for (const auto& a : pr.agents()) {
      K.block(off, off, a.dim(), a.dim()) = a.f.P();
      rhs.segment(off, a.dim()) = -a.f.q();
      off += a.dim();
    }
    const Mat A = pr.stacked_A();
    K.block(0, d, d, p) = A.transpose();
    K.block(d, 0, p, d) = A;
    rhs.tail(p) = pr.coupling().offset();
    const Vec sol = K.fullPivLu().solve(rhs);
    const ReferenceSolution ref = reference_solve(pr, 1e-11);
    Vec x(d);
    off = 0;
    for (const auto& xi : ref.x_star) {
      x.segment(off, xi.size()) = xi;
      off += xi.size();
    }
    EXPECT_LE((x - sol.head(d)).norm(), 1e-9 * (1.0 + sol.head(d).norm()));
    EXPECT_LE((ref.lambda_star - sol.tail(p)).norm(), 1e-9 * (1.0 + sol.tail(p).norm()));
  }
}

TEST(ReferenceSolve, ElasticNetMatchesPrimalProximalGradient) {
  const ExperimentSpec s = default_spec("elastic_net");
  const ProblemInstance pr = generate(s);
  const Mat X = pr.stacked_A();
  const Vec& y = pr.coupling().offset();
  const Vec xp = elastic_net_primal(X, y, s.alpha, s.rho_en);
  const ReferenceSolution ref = reference_solve(pr, 1e-12);
  Vec x(pr.d());
  Index off = 0;
  for (const auto& xi : ref.x_star) {
    x.segment(off, xi.size()) = xi;
    off += xi.size();
  }
  EXPECT_LE((x - xp).norm(), 1e-10 * (1.0 + xp.norm()));
  // lambda* = grad h(X x*)
  const Vec lam = (X * xp - y) / static_cast<double>(s.p);
  EXPECT_LE((ref.lambda_star - lam).norm(), 1e-10 * (1.0 + lam.norm()));
}

TEST(ReferenceSolve, ConstrainedRegressionKkt) {
  const ProblemInstance pr = generate(default_spec("constrained_regression"));
  const ReferenceSolution ref = reference_solve(pr, 1e-10);
  const KktResidual r = kkt_residual(pr, ref.x_star, ref.lambda_star);
  EXPECT_LE(std::max(r.primal, r.dual), 1e-10);
  // u = X x* stays in the domain of h
  Vec u = Vec::Zero(pr.p());
  for (std::size_t i = 0; i < pr.n(); ++i) u += pr.agent(i).A * ref.x_star[i];
  EXPECT_GE(u.minCoeff(), -1e-9);
}
