#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "hk/error.hpp"
#include "hk/mesh.hpp"

namespace hk {

inline constexpr int kMaxHarmonicDegree = 100;

struct SphericalHarmonicIndex {
    int l = 0;
    int m = 0;
};

/// Column of (l, m) in a degree-L design matrix: l^2 + l + m.
inline int harmonic_column(int l, int m) { return l * l + l + m; }

namespace detail {

/**
 * Orthonormal associated Legendre values Pbar_l^m(cos theta) for 0 <= m <= l <= L,
 * normalised so that Pbar_l^m(cos theta) * {1, sqrt2 cos, sqrt2 sin}(m phi) is
 * orthonormal on the unit sphere. No Condon-Shortley phase.
 * Output index: l * (l + 1) / 2 + m.
 */
inline void normalized_legendre(int L, double theta, std::vector<double>& out) {
    out.assign(static_cast<std::size_t>((L + 1) * (L + 2) / 2), 0.0);
    const double x = std::cos(theta), s = std::sin(theta);
    auto at = [&](int l, int m) -> double& { return out[static_cast<std::size_t>(l * (l + 1) / 2 + m)]; };
    at(0, 0) = 0.5 / std::sqrt(std::numbers::pi);
    for (int m = 1; m <= L; ++m) at(m, m) = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * at(m - 1, m - 1);
    for (int m = 0; m < L; ++m) at(m + 1, m) = std::sqrt(2.0 * m + 3.0) * x * at(m, m);
    for (int m = 0; m <= L; ++m) {
        for (int l = m + 2; l <= L; ++l) {
            const double ll = l, mm = m;
            const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
            const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) / (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
            at(l, m) = a * (x * at(l - 1, m) - b * at(l - 2, m));
        }
    }
}

inline void check_degree(int L) {
    if (L < 0) throw ArgumentError("harmonic degree must be nonnegative");
    if (L > kMaxHarmonicDegree)
        throw ArgumentError("harmonic degree " + std::to_string(L) + " exceeds the supported maximum of " +
                            std::to_string(kMaxHarmonicDegree));
}

}  // namespace detail

/// Real orthonormal spherical harmonic; theta is the polar angle, phi the azimuth.
inline double real_spherical_harmonic(int l, int m, double theta, double phi) {
    detail::check_degree(l);
    if (std::abs(m) > l) throw ArgumentError("harmonic order must satisfy |m| <= l");
    std::vector<double> p;
    detail::normalized_legendre(l, theta, p);
    const int am = std::abs(m);
    const double plm = p[static_cast<std::size_t>(l * (l + 1) / 2 + am)];
    if (m == 0) return plm;
    return std::numbers::sqrt2 * plm * (m > 0 ? std::cos(am * phi) : std::sin(am * phi));
}

/// Polar angle and azimuth of a point on the unit sphere.
inline std::pair<double, double> spherical_angles(const Vec3& p) {
    const double r = p.norm();
    return {std::acos(std::clamp(p.z() / r, -1.0, 1.0)), std::atan2(p.y(), p.x())};
}

/// n x (L+1)^2 matrix of all harmonics up to degree L at the mesh vertices.
inline Eigen::MatrixXd harmonic_design_matrix(const TriangleMesh& mesh, int L) {
    detail::check_degree(L);
    const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
    Eigen::MatrixXd Y(n, (L + 1) * (L + 1));
    std::vector<double> p;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto [theta, phi] = spherical_angles(mesh.vertex(static_cast<int>(i)));
        detail::normalized_legendre(L, theta, p);
        for (int l = 0; l <= L; ++l) {
            Y(i, harmonic_column(l, 0)) = p[static_cast<std::size_t>(l * (l + 1) / 2)];
            for (int m = 1; m <= l; ++m) {
                const double plm = std::numbers::sqrt2 * p[static_cast<std::size_t>(l * (l + 1) / 2 + m)];
                Y(i, harmonic_column(l, m)) = plm * std::cos(m * phi);
                Y(i, harmonic_column(l, -m)) = plm * std::sin(m * phi);
            }
        }
    }
    return Y;
}

inline void require_unit_sphere(const TriangleMesh& mesh, double tol = 1e-6) {
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i)
        if (std::abs(mesh.vertices()[i].norm() - 1.0) > tol)
            throw ValidationError("vertex " + std::to_string(i) + " is not on the unit sphere");
}

inline constexpr double kBandLower = 0.125;
inline constexpr double kBandUpper = 0.25;

/// 1 where the polar angle lies in (1/8, 1/4) radians, 0 elsewhere.
inline ScalarField band_step_field(const TriangleMesh& mesh) {
    require_unit_sphere(mesh);
    Eigen::VectorXd v(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        const double theta = spherical_angles(mesh.vertices()[i]).first;
        v[static_cast<Eigen::Index>(i)] = (theta > kBandLower && theta < kBandUpper) ? 1.0 : 0.0;
    }
    return ScalarField(std::move(v), mesh);
}

struct GibbsReport {
    int degree = 0;
    double sigma = 0.0;
    double lse_overshoot = 0.0;  ///< max over the 0-region of the LSE reconstruction, floored at 0
    double hk_overshoot = 0.0;
    /// Largest |reconstruction| at polar angles beyond 1/2 rad, away from the band edges.
    double lse_far_ringing = 0.0;
    double hk_far_ringing = 0.0;
    double lse_sse = 0.0;  ///< sum of squared residuals against the step field
    double hk_sse = 0.0;
    Eigen::VectorXd beta;  ///< LSE coefficients, column order l^2 + l + m
    ScalarField step;
    ScalarField lse_field;
    ScalarField hk_field;
};

/**
 * Least-squares harmonic fit of the band step up to degree L, reconstructed both
 * plainly and with heat-kernel weights exp(-l(l+1) sigma).
 */
inline GibbsReport gibbs_experiment(const TriangleMesh& mesh, int L, double sigma) {
    detail::check_degree(L);
    if (!(sigma >= 0.0)) throw ArgumentError("bandwidth must be nonnegative");
    const int ncoef = (L + 1) * (L + 1);
    if (static_cast<std::size_t>(ncoef) >= mesh.num_vertices())
        throw ArgumentError("(L+1)^2 = " + std::to_string(ncoef) + " must be below the vertex count " +
                            std::to_string(mesh.num_vertices()));
    GibbsReport r;
    r.degree = L;
    r.sigma = sigma;
    r.step = band_step_field(mesh);
    const Eigen::MatrixXd Y = harmonic_design_matrix(mesh, L);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
    const Eigen::VectorXd diag = qr.matrixQR().diagonal().cwiseAbs();
    if (diag.minCoeff() <= 1e-10 * diag.maxCoeff())
        throw NumericalError("harmonic design matrix is rank deficient; use a finer mesh or lower degree");
    r.beta = qr.solve(r.step.values);
    Eigen::VectorXd w(ncoef);
    for (int l = 0; l <= L; ++l)
        for (int m = -l; m <= l; ++m) w[harmonic_column(l, m)] = std::exp(-l * (l + 1.0) * sigma);
    r.lse_field = ScalarField(Y * r.beta, mesh);
    r.hk_field = ScalarField(Y * w.cwiseProduct(r.beta), mesh);

    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (r.step.values[k] != 0.0) continue;
        r.lse_overshoot = std::max(r.lse_overshoot, r.lse_field.values[k]);
        r.hk_overshoot = std::max(r.hk_overshoot, r.hk_field.values[k]);
        if (spherical_angles(mesh.vertices()[i]).first > 0.5) {
            r.lse_far_ringing = std::max(r.lse_far_ringing, std::abs(r.lse_field.values[k]));
            r.hk_far_ringing = std::max(r.hk_far_ringing, std::abs(r.hk_field.values[k]));
        }
    }
    r.lse_sse = (r.lse_field.values - r.step.values).squaredNorm();
    r.hk_sse = (r.hk_field.values - r.step.values).squaredNorm();
    return r;
}

/// Mean of the band indicator over the unit sphere.
inline double band_mean() { return (std::cos(kBandLower) - std::cos(kBandUpper)) / 2.0; }

}  // namespace hk
