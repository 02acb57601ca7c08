#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ruot/evaluation.hpp"
#include "test_util.hpp"

using namespace ruot;

namespace {

SnapshotDataset eval_data(std::uint64_t seed, std::size_t d, std::vector<Eigen::Index> counts) {
    Rng rng(seed);
    SnapshotDataset data;
    data.dim = d;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        data.times.push_back(static_cast<double>(k));
        data.clouds.push_back(rng.normal_matrix(static_cast<Eigen::Index>(d), counts[k]));
    }
    return data;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Evaluation, IdentityPredictionScoresZero) {
    SnapshotDataset data = eval_data(1, 2, {30, 35, 40});
    MetricsTable t = evaluate_prediction(identity_prediction(data), data, EvalMode::all, 3, 0);
    ASSERT_EQ(t.rows.size(), 2u);
    for (const auto& r : t.rows) {
        EXPECT_NEAR(r.w1_mean, 0.0, 1e-12);
        EXPECT_NEAR(r.w2_mean, 0.0, 1e-12);
        EXPECT_EQ(r.w1_std, 0.0);
        EXPECT_EQ(r.w2_std, 0.0);
        EXPECT_EQ(r.w1.size(), 3u);
    }
    EXPECT_EQ(t.rows[0].time, 1.0);
}

TEST(Evaluation, TranslatedCloudDistanceMatchesShiftAndOracle) {
    SnapshotDataset data = eval_data(2, 2, {4, 4});
    Eigen::Vector2d c(0.3, -0.4);
    Prediction pred = identity_prediction(data);
    pred[1].points.colwise() += c;
    MetricsTable t = evaluate_prediction(pred, data, EvalMode::all, 1, 0);
    EXPECT_NEAR(t.rows[0].w2_mean, c.norm(), 1e-12);
    EXPECT_NEAR(t.rows[0].w1_mean, c.norm(), 1e-12);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(4, 0.25);
    double oracle2 = test::enumerate_transport_cost(u, u, cost_matrix(pred[1].points, data.clouds[1], 2));
    double oracle1 = test::enumerate_transport_cost(u, u, cost_matrix(pred[1].points, data.clouds[1], 1));
    EXPECT_NEAR(t.rows[0].w2_mean, std::sqrt(oracle2), 1e-9);
    EXPECT_NEAR(t.rows[0].w1_mean, oracle1, 1e-9);
}

TEST(Evaluation, MatchedModeSubsamplesAndIsSeeded) {
    SnapshotDataset data = eval_data(3, 2, {20, 60});
    Prediction pred = identity_prediction(data);
    pred[1] = WeightedCloud::uniform(data.clouds[1].leftCols(20));
    MetricsTable a = evaluate_prediction(pred, data, EvalMode::matched, 4, 5);
    MetricsTable b = evaluate_prediction(pred, data, EvalMode::matched, 4, 5);
    EXPECT_EQ(a.rows[0].w2, b.rows[0].w2);
    EXPECT_GT(a.rows[0].w2_std, 0.0);
    MetricsTable c = evaluate_prediction(pred, data, EvalMode::matched, 4, 6);
    EXPECT_NE(a.rows[0].w2, c.rows[0].w2);
    // Predicting at least as many points as observed: matched equals all, deterministic.
    MetricsTable full = evaluate_prediction(identity_prediction(data), data, EvalMode::matched, 3, 5);
    EXPECT_EQ(full.rows[0].w1_std, 0.0);
}

TEST(Evaluation, PredictFollowsConstantVelocity) {
    SnapshotDataset data = eval_data(4, 2, {25, 25, 25});
    Eigen::Vector2d mu(0.5, -0.25);
    data.clouds[1] = data.clouds[0].colwise() + mu;
    data.clouds[2] = data.clouds[0].colwise() + 2.0 * mu;
    RuotNets nets = test::translating_gaussian_nets(mu, 1.0, 0.5);
    Prediction pw = predict(nets, data, 5, true), pu = predict(nets, data, 5, false);
    ASSERT_EQ(pw.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_TRUE(pw[k].points.isApprox(pu[k].points));
        EXPECT_NEAR((pw[k].weights - pu[k].weights).cwiseAbs().maxCoeff(), 0.0, 1e-15);
    }
    TrainConfig cfg;
    cfg.steps_per_unit_time = 5;
    MetricsTable t = evaluate_model(nets, data, cfg, 1);
    for (const auto& r : t.rows) EXPECT_LT(r.w2_mean, 1e-9);
    EXPECT_THROW(predict(nets, eval_data(5, 3, {4, 4}), 5), ShapeError);
}

TEST(Evaluation, Errors) {
    SnapshotDataset data = eval_data(6, 1, {5, 5});
    Prediction pred = identity_prediction(data);
    EXPECT_THROW(evaluate_prediction(pred, data, EvalMode::all, 0, 0), UsageError);
    pred.pop_back();
    EXPECT_THROW(evaluate_prediction(pred, data, EvalMode::all, 1, 0), ShapeError);
    EXPECT_THROW(eval_mode_from_string("some"), ConfigError);
}

TEST(Evaluation, CsvLayout) {
    SnapshotDataset data = eval_data(7, 1, {5, 6, 7, 8});
    std::string csv = metrics_to_csv(evaluate_prediction(identity_prediction(data), data, EvalMode::all, 1, 0));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "time,metric,mean,std");
    EXPECT_EQ(count_lines(csv), 1u + 2u * 3u);
    EXPECT_NE(csv.find("\n1,W1,"), std::string::npos);
    EXPECT_NE(csv.find("\n3,W2,"), std::string::npos);
}

// ---- landscape

TEST(Landscape, ShapeAndBitwiseIdentity) {
    RuotNets nets = test::tiny_nets(2, 3);
    LandscapeGrid g = landscape_grid(nets.score, {-1.0, -2.0}, {1.0, 2.0}, {50, 40}, 0.5);
    ASSERT_EQ(g.size(), 2000u);
    EXPECT_EQ(g.coordinate(0, 0), -1.0);
    EXPECT_EQ(g.coordinate(0, 49), 1.0);
    EXPECT_EQ(g.coordinate(1, 39), 2.0);
    for (std::size_t i1 = 0; i1 < 40; ++i1)
        for (std::size_t i0 = 0; i0 < 50; ++i0) {
            Eigen::Vector2d x(g.coordinate(0, i0), g.coordinate(1, i1));
            ASSERT_EQ(g.value(i0, i1), -mlp_forward(nets.score, x, 0.5)(0));
        }
    std::string csv = landscape_to_csv(g);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "x0,x1,U");
    EXPECT_EQ(count_lines(csv), 2001u);
    nlohmann::json meta = landscape_meta(g, 0.25);
    EXPECT_EQ(meta["resolution"], (std::vector<std::size_t>{50, 40}));
    EXPECT_EQ(meta["sigma"], 0.25);
}

TEST(Landscape, ExportedCsvParsesBackToValues) {
    RuotNets nets = test::tiny_nets(3, 4);
    Eigen::Vector3d base(0.1, 0.2, 0.3);
    LandscapeGrid g = landscape_grid(nets.score, {0.0, -1.0}, {1.0, 1.0}, {7, 5}, 1.0, {2, 0}, base);
    std::istringstream in(landscape_to_csv(g));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x2,x0,U");
    for (std::size_t i = 0; i < g.size(); ++i) {
        ASSERT_TRUE(std::getline(in, line));
        double u = std::stod(line.substr(line.rfind(',') + 1));
        EXPECT_EQ(u, g.values[i]);
    }
    Eigen::VectorXd x = g.node(3, 2);
    EXPECT_EQ(x(1), 0.2);
    EXPECT_EQ(x(2), g.coordinate(0, 3));
    EXPECT_EQ(x(0), g.coordinate(1, 2));
    EXPECT_EQ(g.value(3, 2), -mlp_forward(nets.score, x, 1.0)(0));
}

TEST(Landscape, GaussianArgminNearMean) {
    Eigen::Vector2d mu(0.4, -0.3);
    RuotNets nets = test::translating_gaussian_nets(mu, 0.5, 1.0);
    const double t = 1.0;
    LandscapeGrid g = landscape_grid(nets.score, {-2.0, -2.0}, {2.0, 2.0}, {41, 33}, t);
    std::size_t idx = landscape_argmin(g);
    std::size_t i0 = idx % 41, i1 = idx / 41;
    const double h0 = 4.0 / 40.0, h1 = 4.0 / 32.0;
    EXPECT_LE(std::abs(g.coordinate(0, i0) - mu(0) * t), h0);
    EXPECT_LE(std::abs(g.coordinate(1, i1) - mu(1) * t), h1);
}

TEST(Landscape, OneAxisAndErrors) {
    RuotNets nets = test::tiny_nets(2, 5);
    LandscapeGrid g = landscape_grid(nets.score, {-1.0}, {1.0}, {11}, 0.0, {1});
    EXPECT_EQ(g.size(), 11u);
    EXPECT_EQ(landscape_to_csv(g).substr(0, 5), "x1,U\n");
    EXPECT_THROW(landscape_grid(nets.score, {1.0, 0.0}, {-1.0, 1.0}, {5, 5}, 0.0), UsageError);
    EXPECT_THROW(landscape_grid(nets.score, {0.0, 0.0}, {1.0, 1.0}, {1, 5}, 0.0), UsageError);
    EXPECT_THROW(landscape_grid(nets.score, {0.0}, {1.0}, {5}, 0.0, {4}), UsageError);
    EXPECT_THROW(landscape_grid(nets.score, {0.0, 0.0}, {1.0, 1.0}, {5, 5}, 0.0, {1, 1}), UsageError);
    EXPECT_THROW(landscape_grid(nets.velocity, {0.0}, {1.0}, {5}, 0.0), ShapeError);
}
