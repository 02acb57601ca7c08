#include <gtest/gtest.h>

#include "ruot/transport.hpp"
#include "test_util.hpp"

using namespace ruot;

namespace {

Eigen::MatrixXd row(std::initializer_list<double> v) {
    Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) m(0, i++) = x;
    return m;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd m(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) m(i++) = x;
    return m;
}

}  // namespace

TEST(Wasserstein, IdenticalCloudsGiveZero) {
    Eigen::MatrixXd x = Rng(3).normal_matrix(2, 7);
    WeightedCloud p{x, vec({1, 2, 3, 1, 1, 2, 5})};
    EXPECT_NEAR(wasserstein(p, p, 1).distance, 0.0, 1e-14);
    EXPECT_NEAR(wasserstein(p, p, 2).distance, 0.0, 1e-7);
}

TEST(Wasserstein, MonotoneMatching1D) {
    auto r = wasserstein(WeightedCloud::uniform(row({0, 2})), WeightedCloud::uniform(row({1, 3})), 2);
    EXPECT_NEAR(r.distance, 1.0, 1e-14);
}

TEST(Wasserstein, UnequalWeights) {
    WeightedCloud a{row({0, 1, 2}), vec({0.5, 0.25, 0.25})};
    WeightedCloud b{row({0, 2}), vec({0.5, 0.5})};
    auto r = wasserstein(a, b, 2);
    EXPECT_NEAR(r.plan.cost, 0.25, 1e-14);
    EXPECT_NEAR(r.distance, 0.5, 1e-14);
}

TEST(Wasserstein, MatchesEnumerationOracle) {
    Rng rng(11);
    for (int inst = 0; inst < 100; ++inst) {
        auto n = static_cast<Eigen::Index>(1 + rng.index(4)), m = static_cast<Eigen::Index>(1 + rng.index(4));
        Eigen::MatrixXd x = rng.normal_matrix(2, n), y = rng.normal_matrix(2, m);
        Eigen::VectorXd a(n), b(m);
        for (Eigen::Index i = 0; i < n; ++i) a(i) = 0.1 + rng.uniform();
        for (Eigen::Index j = 0; j < m; ++j) b(j) = 0.1 + rng.uniform();
        for (int order : {1, 2}) {
            auto r = wasserstein({x, a}, {y, b}, order);
            double oracle = test::enumerate_transport_cost(a / a.sum(), b / b.sum(), cost_matrix(x, y, order));
            EXPECT_NEAR(r.plan.cost, oracle, 1e-9) << inst << " order " << order;
        }
    }
}

TEST(Wasserstein, PlanMarginalsAndDuals) {
    Rng rng(2);
    Eigen::MatrixXd x = rng.normal_matrix(3, 40), y = rng.normal_matrix(3, 30);
    Eigen::VectorXd a = (rng.normal_matrix(40, 1).col(0).array().abs() + 0.01).matrix();
    WeightedCloud p{x, a}, q = WeightedCloud::uniform(y);
    auto r = wasserstein(p, q, 2);
    const auto& pi = r.plan.coupling;
    EXPECT_LE((pi.rowwise().sum() - a / a.sum()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((pi.colwise().sum().transpose() - q.weights).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(pi.minCoeff(), -1e-15);
    Eigen::MatrixXd c = cost_matrix(x, y, 2);
    double dual = r.plan.source_potential.dot(a / a.sum()) + r.plan.target_potential.dot(q.weights);
    EXPECT_NEAR(dual, r.plan.cost, 1e-9);
    for (Eigen::Index i = 0; i < 40; ++i)
        for (Eigen::Index j = 0; j < 30; ++j)
            EXPECT_LE(r.plan.source_potential(i) + r.plan.target_potential(j), c(i, j) + 1e-9);
}

TEST(Wasserstein, ZeroWeightPointsAreIgnored) {
    WeightedCloud a{row({0, 100}), vec({1.0, 0.0})};
    WeightedCloud b = WeightedCloud::uniform(row({1}));
    auto r = wasserstein(a, b, 1);
    EXPECT_NEAR(r.distance, 1.0, 1e-14);
    EXPECT_TRUE(std::isfinite(r.plan.source_potential(1)));
}

TEST(Wasserstein, DegenerateInstancesTerminate) {
    // Equal-weight permutation problems are maximally degenerate for the simplex.
    Rng rng(8);
    Eigen::MatrixXd x = rng.normal_matrix(2, 200);
    Eigen::MatrixXd y = x + 0.01 * rng.normal_matrix(2, 200);
    auto r = wasserstein(WeightedCloud::uniform(x), WeightedCloud::uniform(y), 2);
    EXPECT_LE(r.distance, 0.05);
    Eigen::MatrixXd grid(1, 50);
    for (Eigen::Index i = 0; i < 50; ++i) grid(0, i) = static_cast<double>(i % 5);
    EXPECT_NEAR(wasserstein(WeightedCloud::uniform(grid), WeightedCloud::uniform(grid), 1).distance, 0.0, 1e-14);
}

TEST(Wasserstein, QuantizedMassIsExact) {
    Rng rng(12);
    Eigen::VectorXd w = (rng.normal_matrix(300, 1).col(0).array() * 4.0).exp().matrix();
    w /= w.sum();
    Eigen::VectorXd q = detail::quantize_unit_mass(w);
    const double unit = std::ldexp(1.0, -52);
    double total = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        EXPECT_EQ(std::fmod(q(i), unit), 0.0);
        total += q(i);
    }
    EXPECT_EQ(total, 1.0);
    EXPECT_LE((q - w).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Wasserstein, SkewedWeightsFarCloudsSolveToOptimality) {
    // Widely spread weights and distant clouds give large potentials and many degenerate pivots.
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Rng rng(100 + seed);
        const Eigen::Index n = 256, m = 256;
        Eigen::MatrixXd x = 0.3 * rng.normal_matrix(2, n), y = 0.3 * rng.normal_matrix(2, m);
        y.row(0).array() += 5.0;
        for (Eigen::Index i = 0; i < n; i += 3) x.col(i) = x.col(0);
        Eigen::VectorXd a = (rng.normal_matrix(n, 1).col(0).array() * 3.0).exp().matrix();
        auto r = wasserstein({x, a}, WeightedCloud::uniform(y), 2);
        const Eigen::VectorXd an = a / a.sum();
        const auto& pi = r.plan.coupling;
        EXPECT_LE((pi.rowwise().sum() - an).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((pi.colwise().sum().transpose().array() - 1.0 / m).abs().maxCoeff(), 1e-12);
        Eigen::MatrixXd c = cost_matrix(x, y, 2);
        double dual = r.plan.source_potential.dot(an) + r.plan.target_potential.dot(Eigen::VectorXd::Constant(m, 1.0 / m));
        EXPECT_NEAR(dual, r.plan.cost, 1e-9);
        double worst = -1e300;
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                worst = std::max(worst, r.plan.source_potential(i) + r.plan.target_potential(j) - c(i, j));
        EXPECT_LE(worst, 1e-9);
    }
}

TEST(Wasserstein, Errors) {
    WeightedCloud a = WeightedCloud::uniform(row({0, 1}));
    WeightedCloud b = WeightedCloud::uniform(Eigen::MatrixXd::Zero(2, 2));
    EXPECT_THROW(wasserstein(a, b, 2), ShapeError);
    EXPECT_THROW(wasserstein(a, WeightedCloud::uniform(Eigen::MatrixXd(1, 0)), 2), UsageError);
    EXPECT_THROW(wasserstein(a, a, 3), UsageError);
}

TEST(SamplePairs, SingleEntryPlan) {
    TransportPlan plan;
    plan.coupling = Eigen::MatrixXd::Zero(3, 2);
    plan.coupling(2, 1) = 1.0;
    WeightedCloud src = WeightedCloud::uniform(row({10, 20, 30})), tgt = WeightedCloud::uniform(row({-1, -2}));
    PairBatch b = sample_pairs(plan, src, tgt, 50, 4);
    for (Eigen::Index k = 0; k < 50; ++k) {
        EXPECT_EQ(b.x0(0, k), 30.0);
        EXPECT_EQ(b.x1(0, k), -2.0);
    }
}

TEST(SamplePairs, PermutationPlan) {
    const std::vector<Eigen::Index> perm{3, 0, 4, 1, 2};
    TransportPlan plan;
    plan.coupling = Eigen::MatrixXd::Zero(5, 5);
    for (Eigen::Index i = 0; i < 5; ++i) plan.coupling(i, perm[static_cast<std::size_t>(i)]) = 0.2;
    WeightedCloud src = WeightedCloud::uniform(row({0, 1, 2, 3, 4}));
    WeightedCloud tgt = WeightedCloud::uniform(row({5, 6, 7, 8, 9}));
    PairBatch b = sample_pairs(plan, src, tgt, 200, 9);
    std::vector<int> seen(5, 0);
    for (auto [i, j] : b.indices) {
        EXPECT_EQ(j, perm[static_cast<std::size_t>(i)]);
        ++seen[static_cast<std::size_t>(i)];
    }
    for (int s : seen) EXPECT_GT(s, 0);
}

TEST(SamplePairs, ZeroPlanIsUsageError) {
    TransportPlan plan;
    plan.coupling = Eigen::MatrixXd::Zero(2, 2);
    WeightedCloud c = WeightedCloud::uniform(row({0, 1}));
    EXPECT_THROW(sample_pairs(plan, c, c, 3, 1), UsageError);
}
