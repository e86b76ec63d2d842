#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hk/error.hpp"
#include "hk/mesh.hpp"

namespace hk {

struct DegreesOfFreedom {
    int alpha = 1;
    int beta = 1;
};

/// Inputs to the two-term expected Euler characteristic expansion.
struct FieldGeometry {
    double surface_area = 0.0;  ///< mm^2
    int euler_char = 2;
    double sigma = 1.0;  ///< smoothing bandwidth, mm^2
};

struct StatField {
    Eigen::VectorXd values;  ///< F = t^2; +infinity where the pooled variance is zero
    Eigen::VectorXd t;       ///< signed t (group 2 minus group 1)
    DegreesOfFreedom df;
    int n_infinite = 0;
    MeshId mesh_id = 0;
};

/**
 * Vertexwise pooled-variance two-sample t, reported as F = t^2 with df
 * (1, n1 + n2 - 2). Each column of g1 / g2 is one subject.
 */
inline StatField group_f_stat(const Eigen::MatrixXd& g1, const Eigen::MatrixXd& g2, MeshId mesh_id = 0) {
    const Eigen::Index n1 = g1.cols(), n2 = g2.cols();
    if (n1 < 2 || n2 < 2) throw ArgumentError("each group needs at least two subjects");
    if (g1.rows() != g2.rows()) throw ValidationError("groups have different vertex counts");
    StatField out;
    out.df = {1, static_cast<int>(n1 + n2 - 2)};
    out.mesh_id = mesh_id;
    const Eigen::Index n = g1.rows();
    out.values.resize(n);
    out.t.resize(n);
    const Eigen::VectorXd m1 = g1.rowwise().mean(), m2 = g2.rowwise().mean();
    const double scale = 1.0 / n1 + 1.0 / n2;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ss = (g1.row(i).array() - m1[i]).square().sum() + (g2.row(i).array() - m2[i]).square().sum();
        const double var = ss / static_cast<double>(n1 + n2 - 2);
        if (var <= 0.0) {
            out.values[i] = std::numeric_limits<double>::infinity();
            out.t[i] = m2[i] >= m1[i] ? std::numeric_limits<double>::infinity()
                                      : -std::numeric_limits<double>::infinity();
            ++out.n_infinite;
            continue;
        }
        const double t = (m2[i] - m1[i]) / std::sqrt(var * scale);
        out.t[i] = t;
        out.values[i] = t * t;
    }
    return out;
}

inline StatField group_f_stat(const std::vector<ScalarField>& group1, const std::vector<ScalarField>& group2) {
    if (group1.empty() || group2.empty()) throw ArgumentError("each group needs at least two subjects");
    const MeshId id = group1.front().mesh_id;
    const Eigen::Index n = group1.front().size();
    auto stack = [&](const std::vector<ScalarField>& g) {
        Eigen::MatrixXd M(n, static_cast<Eigen::Index>(g.size()));
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (g[j].size() != n || g[j].mesh_id != id) throw ValidationError("subject fields are on different meshes");
            M.col(static_cast<Eigen::Index>(j)) = g[j].values;
        }
        return M;
    };
    return group_f_stat(stack(group1), stack(group2), id);
}

namespace detail {

/// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double mm = m;
        double num = mm * (b - mm) * x / ((a + 2.0 * mm - 1.0) * (a + 2.0 * mm));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        num = -(a + mm) * (a + b + mm) * x / ((a + 2.0 * mm) * (a + 2.0 * mm + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) return h;
    }
    throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularised incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ArgumentError("incomplete beta parameters must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("incomplete beta argument must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(F_{alpha,beta} <= h).
inline double f_cdf(double h, DegreesOfFreedom df) {
    if (h <= 0.0) return 0.0;
    const double a = df.alpha, b = df.beta;
    return incomplete_beta(a / 2.0, b / 2.0, a * h / (a * h + b));
}

/// P(F_{alpha,beta} > h), evaluated without cancellation in the tail.
inline double f_survival(double h, DegreesOfFreedom df) {
    if (h <= 0.0) return 1.0;
    const double a = df.alpha, b = df.beta;
    return incomplete_beta(b / 2.0, a / 2.0, b / (a * h + b));
}

struct EcDensities {
    double rho0 = 0.0;
    double rho2 = 0.0;
};

inline void check_df(DegreesOfFreedom df) {
    if (df.alpha < 1 || df.beta < 1) throw ArgumentError("degrees of freedom must be positive integers");
}

/// Zero of the rho2 bracket: beta (alpha - 1) / (alpha (beta - 1)).
inline double rho2_zero_crossing(DegreesOfFreedom df) {
    check_df(df);
    if (df.beta < 2) throw ArgumentError("rho2 has no zero crossing for beta = 1");
    const double a = df.alpha, b = df.beta;
    return b * (a - 1.0) / (a * (b - 1.0));
}

/// EC densities of an F-field smoothed with bandwidth sigma.
inline EcDensities ec_density_f(double h, DegreesOfFreedom df, double sigma) {
    check_df(df);
    if (!(h >= 0.0)) throw ArgumentError("threshold must be nonnegative");
    if (!(sigma > 0.0)) throw ArgumentError("bandwidth must be positive");
    const double a = df.alpha, b = df.beta;
    EcDensities out;
    out.rho0 = f_survival(h, df);
    const double log_gamma = std::lgamma((a + b - 2.0) / 2.0) - std::lgamma(a / 2.0) - std::lgamma(b / 2.0);
    const double prefactor = 1.0 / (4.0 * std::numbers::pi * sigma * sigma);
    const double x = a * h / b;
    const double bracket = (b - 1.0) * x - (a - 1.0);
    if (x == 0.0) {
        // x^((a-2)/2) * bracket tends to 0 unless alpha = 2.
        out.rho2 = df.alpha == 2 ? prefactor * std::exp(log_gamma) * bracket : 0.0;
        return out;
    }
    const double log_mag = log_gamma + (a - 2.0) / 2.0 * std::log(x) - (a + b - 2.0) / 2.0 * std::log1p(x);
    out.rho2 = prefactor * std::exp(log_mag) * bracket;
    return out;
}

/// mu2 rho2(h) + mu0 rho0(h) without clamping; mu2 = area / 2, mu0 = chi.
inline double ec_expansion(double h, const FieldGeometry& geom, DegreesOfFreedom df) {
    const auto d = ec_density_f(h, df, geom.sigma);
    return geom.surface_area / 2.0 * d.rho2 + geom.euler_char * d.rho0;
}

inline void check_geometry(const FieldGeometry& geom) {
    if (!(geom.surface_area > 0.0)) throw ArgumentError("surface area must be positive");
    if (!(geom.sigma > 0.0)) throw ArgumentError("bandwidth must be positive");
}

/// Corrected p-value for the supremum of the F-field, clamped to [0, 1].
inline double corrected_pvalue(double h, const FieldGeometry& geom, DegreesOfFreedom df) {
    check_geometry(geom);
    return std::clamp(ec_expansion(h, geom, df), 0.0, 1.0);
}

/**
 * Smallest h on the decreasing tail of the EC expansion with corrected p-value
 * <= alpha_level. The tail starts at the maximum of the expansion past the rho2
 * zero crossing; the answer is bracketed and bisected to 1e-4 in h.
 */
inline double rft_threshold(double alpha_level, const FieldGeometry& geom, DegreesOfFreedom df) {
    if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw ArgumentError("alpha level must lie in (0, 1)");
    check_geometry(geom);
    check_df(df);
    const double h0 = df.beta >= 2 ? rho2_zero_crossing(df) : 0.0;
    auto p = [&](double h) { return ec_expansion(h, geom, df); };

    // Locate the peak on a geometric grid, then refine by golden section.
    const double lo0 = std::max(h0, 1e-8), hi0 = 1e6;
    const int N = 4000;
    const double ratio = std::pow(hi0 / lo0, 1.0 / N);
    int best = 0;
    double best_p = p(lo0);
    for (int i = 1; i <= N; ++i) {
        const double v = p(lo0 * std::pow(ratio, i));
        if (v > best_p) {
            best_p = v;
            best = i;
        }
    }
    double left = lo0 * std::pow(ratio, std::max(0, best - 1));
    double right = lo0 * std::pow(ratio, std::min(N, best + 1));
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200 && right - left > 1e-12 * std::max(1.0, right); ++it) {
        const double c = right - g * (right - left), d = left + g * (right - left);
        if (p(c) > p(d))
            right = d;
        else
            left = c;
    }
    const double peak = std::max(lo0, 0.5 * (left + right));
    if (p(peak) <= alpha_level) return peak;

    double lo = peak, hi = std::max(2.0 * peak, 1.0);
    while (p(hi) > alpha_level) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw NumericalError("alpha level is unreachable on the search interval");
    }
    while (hi - lo > 1e-4) {
        const double mid = 0.5 * (lo + hi);
        if (p(mid) > alpha_level)
            lo = mid;
        else
            hi = mid;
    }
    return hi;
}

struct InferenceReport {
    double alpha = 0.0;
    double threshold = 0.0;
    long n_exceeding = 0;
    double fraction_exceeding = 0.0;
    double p_at_max = 1.0;
    int n_infinite = 0;
};

/// Exceedance summary; infinite-F vertices are counted separately and excluded.
inline InferenceReport summarize_inference(const StatField& stat, double alpha_level, const FieldGeometry& geom) {
    InferenceReport r;
    r.alpha = alpha_level;
    r.threshold = rft_threshold(alpha_level, geom, stat.df);
    double max_finite = 0.0;
    for (Eigen::Index i = 0; i < stat.values.size(); ++i) {
        const double v = stat.values[i];
        if (!std::isfinite(v)) continue;
        max_finite = std::max(max_finite, v);
        if (v > r.threshold) ++r.n_exceeding;
    }
    r.n_infinite = stat.n_infinite;
    const auto finite = stat.values.size() - stat.n_infinite;
    r.fraction_exceeding = finite > 0 ? static_cast<double>(r.n_exceeding) / static_cast<double>(finite) : 0.0;
    r.p_at_max = corrected_pvalue(max_finite, geom, stat.df);
    return r;
}

}  // namespace hk
