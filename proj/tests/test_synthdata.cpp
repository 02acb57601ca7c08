#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "ruot/synthdata.hpp"

using namespace ruot;

TEST(Grn, Table3Defaults) {
    GrnParams p;
    EXPECT_EQ(p.alpha1, 0.5);
    EXPECT_EQ(p.gamma1, 0.5);
    EXPECT_EQ(p.alpha2, 1.0);
    EXPECT_EQ(p.gamma2, 1.0);
    EXPECT_EQ(p.alpha3, 1.0);
    EXPECT_EQ(p.gamma3, 10.0);
    EXPECT_EQ(p.delta1, 0.4);
    EXPECT_EQ(p.delta2, 0.4);
    EXPECT_EQ(p.delta3, 0.4);
    EXPECT_EQ(p.eta1, 0.05);
    EXPECT_EQ(p.eta2, 0.05);
    EXPECT_EQ(p.eta3, 0.01);
    EXPECT_EQ(p.eta_d, 0.014);
    EXPECT_EQ(p.beta, 1.0);
    EXPECT_EQ(p.dt, 1.0);
    EXPECT_EQ(p.record_times, (std::vector<double>{0, 8, 16, 24, 32}));
}

TEST(Grn, X3FixedPoints) {
    GrnParams p;
    // Roots of x/(1+x^2) = 0.4 by bisection, plus the trivial root.
    auto h = [&](double x) { return p.alpha3 * x * x / (1 + p.alpha3 * x * x) - p.delta3 * x; };
    auto bisect = [&](double lo, double hi) {
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            (h(lo) * h(mid) <= 0 ? hi : lo) = mid;
        }
        return 0.5 * (lo + hi);
    };
    EXPECT_NEAR(bisect(0.2, 1.0), 0.5, 1e-12);
    EXPECT_NEAR(bisect(1.0, 3.0), 2.0, 1e-12);
    for (double r : {0.0, 0.5, 2.0}) EXPECT_NEAR(grn_drift(p, Eigen::Vector3d(0, 0, r))(2), 0.0, 1e-15);

    p.eta1 = p.eta2 = p.eta3 = p.eta_d = 0.0;
    p.alpha_g = 0.0;
    p.init_std = 0.0;
    p.cluster_a = p.cluster_b = Eigen::Vector3d(0, 0, 2.2);
    p.record_times = {0, 8, 16, 24, 32};
    GrnResult r = simulate_grn(p, 1, 1);
    double prev = 0.2;
    for (std::size_t k = 1; k < 5; ++k) {
        double gap = std::abs(r.data.clouds[k](2, 0) - 2.0);
        EXPECT_LT(gap, prev);
        prev = gap;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(Grn, NonnegativeAndGrowing) {
    GrnResult r = simulate_grn(GrnParams{}, 60, 7);
    ASSERT_EQ(r.data.num_times(), 5u);
    EXPECT_EQ(r.data.times, (std::vector<double>{0, 1, 2, 3, 4}));
    EXPECT_EQ(r.data.count(0), 120);
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_GE(r.data.clouds[k].minCoeff(), 0.0);
        if (k > 0) {
            EXPECT_GE(r.data.count(k), r.data.count(k - 1));
        }
        EXPECT_EQ(static_cast<Eigen::Index>(r.divided[k].size()), r.data.count(k));
    }
    EXPECT_GT(r.data.count(4), r.data.count(0));
}

TEST(Grn, Deterministic) {
    GrnResult a = simulate_grn(GrnParams{}, 30, 3), b = simulate_grn(GrnParams{}, 30, 3);
    EXPECT_TRUE(a.data == b.data);
    EXPECT_EQ(a.divided, b.divided);
    GrnResult c = simulate_grn(GrnParams{}, 30, 4);
    EXPECT_FALSE(a.data == c.data);
}

TEST(Grn, DivisionLocalizedToHighX2) {
    GrnParams p;
    EXPECT_GT(grn_division_probability(p, 1.5), grn_division_probability(p, 0.1));
    EXPECT_NEAR(grn_division_probability(p, 1.0), 0.01, 1e-15);
    GrnResult r = simulate_grn(p, 250, 11);
    double hi = 0, hi_n = 0, lo = 0, lo_n = 0;
    for (std::size_t k = 1; k < 5; ++k)
        for (Eigen::Index i = 0; i < r.data.count(k); ++i) {
            double x2 = r.data.clouds[k](1, i);
            if (x2 > 1.0) hi += r.divided[k][static_cast<std::size_t>(i)], ++hi_n;
            if (x2 < 0.2) lo += r.divided[k][static_cast<std::size_t>(i)], ++lo_n;
        }
    ASSERT_GT(hi_n, 0);
    ASSERT_GT(lo_n, 0);
    EXPECT_GT(hi / hi_n, lo / lo_n);
}

TEST(Grn, InvalidParams) {
    GrnParams p;
    p.dt = 0;
    EXPECT_THROW(simulate_grn(p, 1, 1), ConfigError);
    EXPECT_THROW(simulate_grn(GrnParams{}, 0, 1), UsageError);
    GrnParams q;
    q.record_times = {0, 8.5};
    EXPECT_THROW(simulate_grn(q, 1, 1), ConfigError);
}

TEST(GaussMixture, CountsAndDeterminism) {
    SnapshotDataset d = simulate_gaussian_mixture(10, 1);
    EXPECT_EQ(d.count(0), 500);
    EXPECT_EQ(d.count(1), 1400);
    EXPECT_EQ(d.dim, 10u);
    EXPECT_TRUE(d == simulate_gaussian_mixture(10, 1));
    EXPECT_THROW(simulate_gaussian_mixture(1, 1), UsageError);
}

TEST(GaussMixture, ComponentMeans) {
    GaussMixtureParams p;
    SnapshotDataset d = simulate_gaussian_mixture(3, 2, p);
    auto check = [&](const Eigen::MatrixXd& c, const std::vector<Eigen::Vector2d>& centers,
                     const std::vector<std::size_t>& counts) {
        Eigen::Index col = 0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            auto n = static_cast<Eigen::Index>(counts[k]);
            Eigen::Vector2d mean = c.block(0, col, 2, n).rowwise().mean();
            double tol = 3.0 * p.component_std / std::sqrt(static_cast<double>(n));
            EXPECT_LE((mean - centers[k]).cwiseAbs().maxCoeff(), tol);
            col += n;
        }
    };
    check(d.clouds[0], p.initial_centers, p.initial_counts);
    check(d.clouds[1], p.final_centers, p.final_counts);
}

TEST(Csv, RoundTrip) {
    GrnResult r = simulate_grn(GrnParams{}, 20, 5);
    SnapshotDataset back = dataset_from_csv_text(dataset_to_csv(r.data));
    EXPECT_TRUE(back == r.data);
    EXPECT_EQ(back.counts(), r.data.counts());

    auto path = std::filesystem::temp_directory_path() / "ruot_csv_roundtrip" / "d.csv";
    SnapshotDataset g = simulate_gaussian_mixture(4, 3);
    save_csv(g, path.string());
    EXPECT_TRUE(load_csv(path.string()) == g);
    std::filesystem::remove_all(path.parent_path());
}

TEST(Csv, BadNumberCitesLine) {
    std::string text = "time,x0,x1\n0,1,2\n0,1,2\n0,1,2\n1,1,2\n1,1,2\n1,abc,2\n";
    try {
        dataset_from_csv_text(text);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 7u);
    }
}

TEST(Csv, MalformedInput) {
    EXPECT_THROW(dataset_from_csv_text("time,y0\n0,1\n"), ParseError);
    EXPECT_THROW(dataset_from_csv_text("time,x0\n0,1,2\n"), ParseError);
    EXPECT_THROW(dataset_from_csv_text(""), ParseError);
    EXPECT_THROW(load_csv("/nonexistent/file.csv"), IoError);
    SnapshotDataset d = dataset_from_csv_text("time,x0\r\n1,5\r\n0,3\r\n");
    EXPECT_EQ(d.times, (std::vector<double>{0, 1}));
    EXPECT_EQ(d.clouds[0](0, 0), 3.0);
}

TEST(Dataset, Projection) {
    SnapshotDataset d = simulate_gaussian_mixture(3, 1);
    SnapshotDataset p = project(d, {1, 0});
    EXPECT_EQ(p.dim, 2u);
    EXPECT_EQ(p.clouds[1].row(0), d.clouds[1].row(1));
    EXPECT_THROW(project(d, {3}), UsageError);
}
