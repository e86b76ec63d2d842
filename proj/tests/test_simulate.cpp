#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hk/simulate.hpp"

using namespace hk;

namespace {

SimulationConfig small_config(const TriangleMesh& mesh) {
    SimulationConfig cfg;
    cfg.k = 60;
    cfg.n1 = 8;
    cfg.n2 = 8;
    cfg.iterations = 10;
    for (int v = 0; v < static_cast<int>(mesh.num_vertices()); v += 7) cfg.signal.push_back(v);
    return cfg;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(SimulateFields, NoiselessLimit) {
    const auto mesh = make_t_junction(4, 2, 1);
    auto cfg = small_config(mesh);
    cfg.noise_sd = 1e-9;
    const auto g = simulate_fields(mesh, cfg);
    const Eigen::VectorXd diff = g.group2.rowwise().mean() - g.group1.rowwise().mean();
    std::vector<char> is_signal(mesh.num_vertices(), 0);
    for (int v : cfg.signal) is_signal[static_cast<std::size_t>(v)] = 1;
    for (Eigen::Index i = 0; i < diff.size(); ++i) EXPECT_NEAR(diff[i], is_signal[static_cast<std::size_t>(i)] ? 1.0 : 0.0, 1e-8);
}

TEST(SimulateFields, HalfNormalMean) {
    const auto mesh = make_t_junction(10, 4, 1);
    auto cfg = small_config(mesh);
    cfg.n1 = 30;
    cfg.noise_sd = 2.0;
    const auto g = simulate_fields(mesh, cfg);
    const double gamma = cfg.noise_sd;
    const double count = static_cast<double>(g.group1.size());
    const double mean = g.group1.mean();
    const double sd = gamma * std::sqrt(1.0 - 2.0 / std::numbers::pi);
    EXPECT_NEAR(mean, gamma * std::sqrt(2.0 / std::numbers::pi), 3.0 * sd / std::sqrt(count));
    EXPECT_GE(g.group1.minCoeff(), 0.0);
}

TEST(SimulateFields, DeterministicForSeed) {
    const auto mesh = make_t_junction(4, 2, 1);
    auto cfg = small_config(mesh);
    const auto a = simulate_fields(mesh, cfg), b = simulate_fields(mesh, cfg);
    EXPECT_EQ(a.group1, b.group1);
    EXPECT_EQ(a.group2, b.group2);
    cfg.seed = 2;
    EXPECT_NE(simulate_fields(mesh, cfg).group1, a.group1);
}

TEST(SimulateFields, IndependentOfThreadCount) {
    const auto mesh = make_t_junction(4, 2, 1);
    const auto cfg = small_config(mesh);
    set_thread_count(1);
    const auto a = simulate_fields(mesh, cfg);
    set_thread_count(4);
    const auto b = simulate_fields(mesh, cfg);
    set_thread_count(0);
    EXPECT_EQ(a.group2, b.group2);
}

TEST(SimulationConfig, RejectsInvalid) {
    const auto mesh = make_t_junction(4, 2, 1);
    auto cfg = small_config(mesh);
    cfg.signal.clear();
    EXPECT_THROW(simulate_fields(mesh, cfg), ArgumentError);
    cfg = small_config(mesh);
    cfg.signal.resize(mesh.num_vertices());
    for (std::size_t i = 0; i < cfg.signal.size(); ++i) cfg.signal[i] = static_cast<int>(i);
    EXPECT_THROW(simulate_fields(mesh, cfg), ArgumentError);
    cfg = small_config(mesh);
    cfg.noise_sd = 0.0;
    EXPECT_THROW(simulate_fields(mesh, cfg), ArgumentError);
    cfg = small_config(mesh);
    cfg.signal.push_back(static_cast<int>(mesh.num_vertices()));
    EXPECT_THROW(simulate_fields(mesh, cfg), ArgumentError);
}

TEST(RunStudy, EmptyMethodSet) {
    const auto mesh = make_t_junction(4, 2, 1);
    EXPECT_TRUE(run_study(mesh, small_config(mesh), {}).methods.empty());
}

TEST(RunStudy, RatesMatchEmbeddedStatistics) {
    const auto mesh = make_t_junction(6, 3, 1);
    auto cfg = small_config(mesh);
    cfg.threshold = 1.5;
    const auto report = run_study(mesh, cfg, all_methods());
    ASSERT_EQ(report.methods.size(), 4u);
    std::vector<char> is_signal(mesh.num_vertices(), 0);
    for (int v : cfg.signal) is_signal[static_cast<std::size_t>(v)] = 1;
    for (const auto& r : report.methods) {
        long tp = 0, fp = 0;
        for (Eigen::Index i = 0; i < r.stat.t.size(); ++i) {
            const bool hit = std::isfinite(r.stat.t[i]) && r.stat.t[i] > r.threshold;
            (is_signal[static_cast<std::size_t>(i)] ? tp : fp) += hit;
        }
        EXPECT_DOUBLE_EQ(r.true_positive_rate, static_cast<double>(tp) / r.n_signal) << method_name(r.method);
        EXPECT_DOUBLE_EQ(r.false_positive_rate, static_cast<double>(fp) / r.n_nonsignal) << method_name(r.method);
        EXPECT_GE(r.true_positive_rate, 0.0);
        EXPECT_LE(r.true_positive_rate, 1.0);
        EXPECT_EQ(r.n_signal + r.n_nonsignal, static_cast<long>(mesh.num_vertices()));
        for (Eigen::Index i = 0; i < r.stat.t.size(); ++i)
            if (std::isfinite(r.stat.t[i])) EXPECT_NEAR(r.stat.values[i], r.stat.t[i] * r.stat.t[i], 1e-12 * r.stat.values[i] + 1e-300);
    }
}

TEST(RunStudy, RawMethodMatchesDirectStatistic) {
    const auto mesh = make_t_junction(4, 2, 1);
    const auto cfg = small_config(mesh);
    const auto report = run_study(mesh, cfg, {Method::Raw});
    const auto g = simulate_fields(mesh, cfg);
    EXPECT_EQ(report.find(Method::Raw)->stat.values, group_f_stat(g.group1, g.group2).values);
    EXPECT_EQ(report.find(Method::HeatKernel), nullptr);
}

TEST(RunStudy, RftThresholdOption) {
    const auto mesh = make_t_junction(4, 2, 1);
    auto cfg = small_config(mesh);
    cfg.rft_alpha = 0.05;
    const auto r = run_study(mesh, cfg, {Method::Raw});
    const FieldGeometry g{mesh.total_area(), 2, cfg.sigma};
    EXPECT_NEAR(r.methods[0].threshold, std::sqrt(rft_threshold(0.05, g, {1, cfg.n1 + cfg.n2 - 2})), 1e-12);
}

TEST(Methods, NamesRoundTrip) {
    for (Method m : all_methods()) EXPECT_EQ(parse_method(method_name(m)), m);
    EXPECT_THROW(parse_method("gaussian"), ArgumentError);
}

TEST(StudyMesh, SignalDiscsOnThreeZones) {
    const auto s = make_study_mesh();
    EXPECT_EQ(validate_closed(s.mesh).chi, 2);
    EXPECT_FALSE(s.signal.empty());
    EXPECT_LT(s.signal.size(), s.mesh.num_vertices() / 5);
    for (const Vec3& c : {s.geometry.flat_point(), s.geometry.convex_point(), s.geometry.concave_point()}) {
        const bool covered = std::any_of(s.signal.begin(), s.signal.end(),
                                         [&](int v) { return (s.mesh.vertex(v) - c).norm() < 1.0; });
        EXPECT_TRUE(covered);
    }
}

TEST(StudyI, HeatKernelMedianBeatsIteratedOverTenSeeds) {
    const auto study = make_study_mesh();
    StudyContext ctx(study.mesh);
    std::vector<double> hk, it;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SimulationConfig cfg;
        cfg.signal = study.signal;
        cfg.seed = seed;
        const auto r = run_study(ctx, cfg, {Method::HeatKernel, Method::Iterated});
        hk.push_back(r.find(Method::HeatKernel)->true_positive_rate);
        it.push_back(r.find(Method::Iterated)->true_positive_rate);
    }
    EXPECT_GT(median(hk), median(it));
}
