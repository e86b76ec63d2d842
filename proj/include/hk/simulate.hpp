#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "hk/eigensolver.hpp"
#include "hk/error.hpp"
#include "hk/fem.hpp"
#include "hk/generators.hpp"
#include "hk/mesh.hpp"
#include "hk/parallel.hpp"
#include "hk/rft.hpp"
#include "hk/smooth.hpp"

namespace hk {

enum class Method { Raw, HeatKernel, Iterated, Diffusion };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::Raw: return "raw";
        case Method::HeatKernel: return "heat_kernel";
        case Method::Iterated: return "iterated";
        case Method::Diffusion: return "diffusion";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::Raw, Method::HeatKernel, Method::Iterated, Method::Diffusion})
        if (method_name(m) == s) return m;
    throw ArgumentError("unknown method '" + s + "' (expected raw, heat_kernel, iterated or diffusion)");
}

inline const std::vector<Method>& all_methods() {
    static const std::vector<Method> m{Method::Raw, Method::HeatKernel, Method::Iterated, Method::Diffusion};
    return m;
}

struct SimulationConfig {
    double noise_sd = 2.0;
    int n1 = 30;
    int n2 = 30;
    std::vector<int> signal;  ///< vertices that receive +1 in group 2
    double sigma = 0.5;
    int iterations = 100;
    int k = 1000;
    double diffusion_step = 0.0025;
    double threshold = 4.90;  ///< one-sided t threshold
    /// When set, the t threshold is recomputed as sqrt of the corrected F threshold at this level.
    std::optional<double> rft_alpha;
    std::uint64_t seed = 1;

    void validate(std::size_t num_vertices) const {
        if (!(noise_sd > 0.0)) throw ArgumentError("noise_sd must be positive");
        if (n1 < 2 || n2 < 2) throw ArgumentError("group sizes must be at least 2");
        if (!(sigma > 0.0)) throw ArgumentError("sigma must be positive");
        if (iterations < 1) throw ArgumentError("iterations must be at least 1");
        if (k < 0) throw ArgumentError("k must be nonnegative");
        if (!(diffusion_step > 0.0)) throw ArgumentError("diffusion step must be positive");
        if (signal.empty() || signal.size() >= num_vertices)
            throw ArgumentError("signal region must be a nonempty strict subset of the vertices");
        std::vector<int> s = signal;
        std::sort(s.begin(), s.end());
        if (std::adjacent_find(s.begin(), s.end()) != s.end()) throw ArgumentError("duplicate signal vertex");
        if (s.front() < 0 || static_cast<std::size_t>(s.back()) >= num_vertices)
            throw ArgumentError("signal vertex out of range");
    }
};

/// Independent stream seed for subject j of a group.
inline std::uint64_t subject_seed(std::uint64_t seed, int group, int subject) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(group) * 1000003ull +
                                                       static_cast<std::uint64_t>(subject) + 1ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

struct SimulatedGroups {
    Eigen::MatrixXd group1;  ///< n x n1, one subject per column
    Eigen::MatrixXd group2;  ///< n x n2
};

/// Group 1: |N(0, noise_sd^2)| per vertex. Group 2: the same plus 1 on signal vertices.
inline SimulatedGroups simulate_fields(const TriangleMesh& mesh, const SimulationConfig& cfg) {
    cfg.validate(mesh.num_vertices());
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    SimulatedGroups g{Eigen::MatrixXd(n, cfg.n1), Eigen::MatrixXd(n, cfg.n2)};
    parallel_for(0, cfg.n1 + cfg.n2, [&](long s) {
        const int group = s < cfg.n1 ? 1 : 2;
        const int j = static_cast<int>(group == 1 ? s : s - cfg.n1);
        std::mt19937_64 rng(subject_seed(cfg.seed, group, j));
        std::normal_distribution<double> nd(0.0, cfg.noise_sd);
        auto col = group == 1 ? g.group1.col(j) : g.group2.col(j);
        for (Eigen::Index i = 0; i < n; ++i) col[i] = std::abs(nd(rng));
        if (group == 2)
            for (int v : cfg.signal) col[v] += 1.0;
    });
    return g;
}

inline std::vector<ScalarField> to_fields(const Eigen::MatrixXd& group, MeshId id) {
    std::vector<ScalarField> out;
    for (Eigen::Index j = 0; j < group.cols(); ++j) out.emplace_back(group.col(j), id);
    return out;
}

struct MethodResult {
    Method method = Method::Raw;
    double true_positive_rate = 0.0;
    double false_positive_rate = 0.0;
    double threshold = 0.0;
    long n_signal = 0;
    long n_nonsignal = 0;
    StatField stat;
};

struct DetectionReport {
    std::vector<MethodResult> methods;
    const MethodResult* find(Method m) const {
        for (const auto& r : methods)
            if (r.method == m) return &r;
        return nullptr;
    }
};

/// TPR / FPR of `t > threshold`; infinite entries never count as exceeding.
inline std::pair<double, double> detection_rates(const Eigen::VectorXd& t, const std::vector<int>& signal,
                                                 double threshold) {
    std::vector<char> mask(static_cast<std::size_t>(t.size()), 0);
    for (int v : signal) mask[static_cast<std::size_t>(v)] = 1;
    long tp = 0, fp = 0, ns = 0, nn = 0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const bool hit = std::isfinite(t[i]) && t[i] > threshold;
        if (mask[static_cast<std::size_t>(i)]) {
            ++ns;
            tp += hit;
        } else {
            ++nn;
            fp += hit;
        }
    }
    return {ns ? static_cast<double>(tp) / ns : 0.0, nn ? static_cast<double>(fp) / nn : 0.0};
}

/// Mesh operators shared across studies on the same mesh; the eigenbasis is computed on first use.
class StudyContext {
public:
    explicit StudyContext(const TriangleMesh& mesh)
        : mesh_(mesh), A_(assemble_mass(mesh)), C_(assemble_cotan(mesh)) {}

    const TriangleMesh& mesh() const noexcept { return mesh_; }
    const SparseSymmetric& A() const noexcept { return A_; }
    const SparseSymmetric& C() const noexcept { return C_; }

    const EigenBasis& basis(int k) {
        if (!basis_ || basis_->size() < k + 1) {
            basis_ = solve_smallest(A_, C_, k, EigenSolverOptions{}, mesh_.id());
            fitter_.reset();
        }
        if (basis_->size() != k + 1) {
            truncated_ = basis_->truncated(k + 1);
            return *truncated_;
        }
        return *basis_;
    }

    const LeastSquaresFitter& fitter(int k) {
        if (!fitter_ || fitter_k_ != k) {
            fitter_ = std::make_unique<LeastSquaresFitter>(basis(k));
            fitter_k_ = k;
        }
        return *fitter_;
    }

private:
    const TriangleMesh& mesh_;
    SparseSymmetric A_, C_;
    std::optional<EigenBasis> basis_, truncated_;
    std::unique_ptr<LeastSquaresFitter> fitter_;
    int fitter_k_ = -1;
};

/// Smooths all subjects (columns) with one method.
inline Eigen::MatrixXd smooth_subjects(StudyContext& ctx, const SimulationConfig& cfg, Method m,
                                       const Eigen::MatrixXd& Y) {
    switch (m) {
        case Method::Raw: return Y;
        case Method::HeatKernel: return heat_kernel_smooth_columns(ctx.basis(cfg.k), ctx.fitter(cfg.k), Y, cfg.sigma);
        case Method::Iterated: return IteratedKernelSmoother(ctx.mesh(), cfg.sigma, cfg.iterations).apply(Y);
        case Method::Diffusion: {
            const double step = std::min(cfg.diffusion_step, cfg.sigma);
            return DiffusionSmoother(ctx.A(), ctx.C(), cfg.sigma, step).apply(Y);
        }
    }
    return Y;
}

/// Simulates both groups, smooths with each method and scores the thresholded t-field.
inline DetectionReport run_study(StudyContext& ctx, const SimulationConfig& cfg, const std::vector<Method>& methods) {
    DetectionReport report;
    if (methods.empty()) return report;
    const auto groups = simulate_fields(ctx.mesh(), cfg);
    Eigen::MatrixXd all(groups.group1.rows(), cfg.n1 + cfg.n2);
    all << groups.group1, groups.group2;
    double threshold = cfg.threshold;
    if (cfg.rft_alpha) {
        const FieldGeometry geom{ctx.mesh().total_area(), euler_characteristic(ctx.mesh()), cfg.sigma};
        threshold = std::sqrt(rft_threshold(*cfg.rft_alpha, geom, {1, cfg.n1 + cfg.n2 - 2}));
    }
    for (Method m : methods) {
        const Eigen::MatrixXd S = smooth_subjects(ctx, cfg, m, all);
        MethodResult r;
        r.method = m;
        r.threshold = threshold;
        r.stat = group_f_stat(S.leftCols(cfg.n1), S.rightCols(cfg.n2), ctx.mesh().id());
        std::tie(r.true_positive_rate, r.false_positive_rate) = detection_rates(r.stat.t, cfg.signal, threshold);
        r.n_signal = static_cast<long>(cfg.signal.size());
        r.n_nonsignal = static_cast<long>(ctx.mesh().num_vertices()) - r.n_signal;
        report.methods.push_back(std::move(r));
    }
    return report;
}

inline DetectionReport run_study(const TriangleMesh& mesh, const SimulationConfig& cfg,
                                 const std::vector<Method>& methods) {
    StudyContext ctx(mesh);
    return run_study(ctx, cfg, methods);
}

// ---------------------------------------------------------------------------
// T-junction study setup

struct StudyMesh {
    TriangleMesh mesh;
    TJunctionGeometry geometry;
    std::vector<int> signal;
};

/// Vertices within Euclidean distance r of each centre (union, sorted).
inline std::vector<int> disc_regions(const TriangleMesh& mesh, const std::vector<Vec3>& centres,
                                     const std::vector<double>& radii) {
    if (centres.size() != radii.size()) throw ArgumentError("one radius per centre is required");
    std::vector<int> out;
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
        for (std::size_t c = 0; c < centres.size(); ++c)
            if ((mesh.vertices()[v] - centres[c]).norm() <= radii[c]) {
                out.push_back(static_cast<int>(v));
                break;
            }
    return out;
}

inline constexpr double kStudyArmLength = 24.0;
inline constexpr double kStudyWidth = 12.0;
inline constexpr double kStudyResolution = 0.75;
inline const std::vector<double> kStudyRadii = {4.0, 5.0, 6.0};

/// The simulation mesh: a T-junction with three signal discs on flat, convex and concave zones.
inline StudyMesh make_study_mesh(double arm_length = kStudyArmLength, double width = kStudyWidth,
                                 double resolution = kStudyResolution,
                                 const std::vector<double>& radii = kStudyRadii) {
    StudyMesh s{make_t_junction(arm_length, width, resolution), {arm_length, width}, {}};
    s.signal = disc_regions(s.mesh, {s.geometry.flat_point(), s.geometry.convex_point(), s.geometry.concave_point()},
                            radii);
    return s;
}

}  // namespace hk
