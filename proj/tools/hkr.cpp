// hkr: command-line front end for the hk library.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hk/eigensolver.hpp"
#include "hk/error.hpp"
#include "hk/fem.hpp"
#include "hk/generators.hpp"
#include "hk/marching_cubes.hpp"
#include "hk/mesh.hpp"
#include "hk/mesh_io.hpp"
#include "hk/parallel.hpp"
#include "hk/rft.hpp"
#include "hk/simulate.hpp"
#include "hk/smooth.hpp"
#include "hk/sphere.hpp"
#include "hk/version.hpp"
#include "hk/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitUsage = 64;

std::string file_hash(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "missing";
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        hk::detail::fnv_mix(h, buf, static_cast<std::size_t>(in.gcount()));
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

/// Book-keeping for one invocation; becomes the manifest.
struct Run {
    std::string command;
    json params = json::object();
    json results = json::object();
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    fs::path manifest;

    void input(const fs::path& p) { inputs.push_back(p); }
    fs::path output(const fs::path& p) {
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        outputs.push_back(p);
        return p;
    }
    /// Output directory; the manifest goes inside it.
    void output_dir(const fs::path& d) {
        fs::create_directories(d);
        manifest = d / "manifest.json";
    }
    /// Single output file; the manifest sits next to it.
    void output_file(const fs::path& p) {
        output(p);
        manifest = fs::path(p.string() + ".manifest.json");
    }
};

void write_manifest(const Run& run, double seconds, int exit_code) {
    if (run.manifest.empty()) return;
    json m;
    m["command"] = run.command;
    m["version"] = hk::kVersion;
    m["parameters"] = run.params;
    m["threads"] = hk::thread_count();
    json in = json::object(), out = json::object();
    for (const auto& p : run.inputs) in[p.string()] = file_hash(p);
    for (const auto& p : run.outputs) out[p.string()] = file_hash(p);
    m["inputs"] = in;
    m["outputs"] = out;
    m["results"] = run.results;
    m["wall_time_s"] = seconds;
    m["exit_code"] = exit_code;
    if (run.manifest.has_parent_path()) fs::create_directories(run.manifest.parent_path());
    std::ofstream f(run.manifest);
    f << m.dump(2) << '\n';
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream f(p);
    if (!f) throw hk::FormatError("cannot write " + p.string());
    f << j.dump(2) << '\n';
}

json params_of(const CLI::App& sub) {
    json p = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string& name = opt->get_lnames().front();
        if (name == "help") continue;
        if (opt->get_type_size() == 0) {
            p[name] = opt->count() > 0;
        } else if (!opt->results().empty()) {
            const auto& r = opt->results();
            p[name] = r.size() == 1 ? json(r.front()) : json(r);
        } else if (!opt->get_default_str().empty()) {
            p[name] = opt->get_default_str();
        }
    }
    return p;
}

hk::TriangleMesh load_input_mesh(Run& run, const fs::path& p) {
    run.input(p);
    return hk::load_mesh(p);
}

hk::ScalarField load_input_field(Run& run, const fs::path& p, const hk::TriangleMesh& mesh) {
    run.input(p);
    return hk::load_field_csv(p, mesh);
}

struct BasisOptions {
    int k = 132;
    double tol = 1e-8;
    std::uint64_t seed = hk::EigenSolverOptions{}.seed;
    int block_size = 8;
    std::string basis_dir;

    void add(CLI::App* sub, bool allow_load) {
        sub->add_option("--k", k, "highest eigenpair index (k+1 pairs)")->check(CLI::NonNegativeNumber);
        sub->add_option("--tol", tol, "relative residual tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "eigensolver start-vector seed");
        sub->add_option("--block-size", block_size, "Krylov block width")->check(CLI::Range(1, 64));
        if (allow_load)
            sub->add_option("--basis", basis_dir, "reuse eigenvalues.csv / eigenvectors.csv from an eigs run")
                ->check(CLI::ExistingDirectory);
    }

    hk::EigenBasis obtain(Run& run, const hk::TriangleMesh& mesh, const hk::SparseSymmetric& A,
                          const hk::SparseSymmetric& C) const {
        if (!basis_dir.empty()) {
            const fs::path ev = fs::path(basis_dir) / "eigenvalues.csv", vec = fs::path(basis_dir) / "eigenvectors.csv";
            run.input(ev);
            run.input(vec);
            auto b = hk::load_basis_csv(ev, vec, mesh.id());
            if (b.num_vertices() != static_cast<Eigen::Index>(mesh.num_vertices()))
                throw hk::ValidationError("stored basis has " + std::to_string(b.num_vertices()) +
                                          " rows, mesh has " + std::to_string(mesh.num_vertices()) + " vertices");
            if (b.size() < k + 1)
                throw hk::ArgumentError("stored basis holds " + std::to_string(b.size()) + " pairs, k+1 = " +
                                        std::to_string(k + 1) + " requested");
            return b.size() == k + 1 ? b : b.truncated(k + 1);
        }
        hk::EigenSolverOptions o;
        o.tol = tol;
        o.seed = seed;
        o.block_size = block_size;
        return hk::solve_smallest(A, C, k, o, mesh.id());
    }
};

json closed_report(const hk::ClosedSurfaceReport& r) {
    return {{"V", r.V}, {"E", r.E}, {"F", r.F}, {"chi", r.chi}, {"edge_manifold", r.edge_manifold},
            {"sphere_condition", r.sphere_condition}};
}

hk::DegreesOfFreedom df_from(int a, int b) { return {a, b}; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"heat kernel smoothing, diffusion and RFT inference on triangle meshes"};
    app.set_version_flag("--version", hk::kVersion);
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: $HK_THREADS, else hardware count)")
        ->check(CLI::NonNegativeNumber);

    std::map<CLI::App*, std::function<void(Run&)>> bodies;

    // eigs -------------------------------------------------------------------------
    auto* eigs = app.add_subcommand("eigs", "smallest eigenpairs of the cotan / mass pencil");
    struct {
        std::string mesh, out;
        BasisOptions basis;
    } eo;
    eigs->add_option("--mesh", eo.mesh, "OFF or ASCII PLY mesh")->required()->check(CLI::ExistingFile);
    eigs->add_option("--out", eo.out, "output directory")->required();
    eo.basis.add(eigs, false);
    bodies[eigs] = [&](Run& run) {
        const auto mesh = load_input_mesh(run, eo.mesh);
        run.output_dir(eo.out);
        const auto A = hk::assemble_mass(mesh), C = hk::assemble_cotan(mesh);
        const auto b = eo.basis.obtain(run, mesh, A, C);
        const auto check = hk::verify_basis(b, A, C);
        hk::save_eigenvalues_csv(run.output(fs::path(eo.out) / "eigenvalues.csv"), b);
        hk::save_eigenvectors_csv(run.output(fs::path(eo.out) / "eigenvectors.csv"), b);
        run.results = {{"pairs", b.size()},
                       {"lambda_max", b.eigenvalues[b.size() - 1]},
                       {"max_residual", check.max_residual},
                       {"orthonormality_defect", check.orthonormality_defect}};
        std::cout << run.results.dump() << '\n';
    };

    // smooth -----------------------------------------------------------------------
    auto* smooth = app.add_subcommand("smooth", "heat kernel regression");
    struct {
        std::string mesh, field, out, coefficients;
        double sigma = 0.5;
        bool projection = false;
        BasisOptions basis;
    } so;
    smooth->add_option("--mesh", so.mesh)->required()->check(CLI::ExistingFile);
    smooth->add_option("--field", so.field, "field CSV with header 'value'")->required()->check(CLI::ExistingFile);
    smooth->add_option("--sigma", so.sigma, "bandwidth (mm^2)")->check(CLI::NonNegativeNumber);
    smooth->add_option("--out", so.out, "smoothed field CSV")->required();
    smooth->add_option("--coefficients", so.coefficients, "also write the coefficient CSV here");
    smooth->add_flag("--projection", so.projection, "A-weighted projection instead of least squares");
    so.basis.add(smooth, true);
    bodies[smooth] = [&](Run& run) {
        const auto mesh = load_input_mesh(run, so.mesh);
        const auto y = load_input_field(run, so.field, mesh);
        run.output_file(so.out);
        const auto A = hk::assemble_mass(mesh), C = hk::assemble_cotan(mesh);
        const auto b = so.basis.obtain(run, mesh, A, C);
        const auto coeffs = so.projection ? hk::project_coefficients(b, A, y) : hk::fit_coefficients(b, y);
        const auto s = hk::heat_kernel_smooth(b, coeffs, so.sigma);
        hk::save_field_csv(so.out, s.values);
        if (!so.coefficients.empty()) hk::save_coefficients_csv(run.output(so.coefficients), coeffs);
        run.results = {{"pairs", b.size()}, {"min", s.values.minCoeff()}, {"max", s.values.maxCoeff()}};
    };

    // diffuse ----------------------------------------------------------------------
    auto* diffuse = app.add_subcommand("diffuse", "forward-Euler diffusion smoothing");
    struct {
        std::string mesh, field, out;
        double sigma = 0.5, step = 0.0025;
        bool lump = false, no_clamp = false;
    } dop;
    diffuse->add_option("--mesh", dop.mesh)->required()->check(CLI::ExistingFile);
    diffuse->add_option("--field", dop.field)->required()->check(CLI::ExistingFile);
    diffuse->add_option("--sigma", dop.sigma, "total diffusion time (mm^2)")->check(CLI::NonNegativeNumber);
    diffuse->add_option("--step", dop.step, "Euler step")->check(CLI::PositiveNumber);
    diffuse->add_flag("--lump-mass", dop.lump, "replace A by its row sums");
    diffuse->add_flag("--no-clamp", dop.no_clamp, "keep the requested step even past the stability estimate");
    diffuse->add_option("--out", dop.out)->required();
    bodies[diffuse] = [&](Run& run) {
        const auto mesh = load_input_mesh(run, dop.mesh);
        const auto y = load_input_field(run, dop.field, mesh);
        run.output_file(dop.out);
        const auto A = hk::assemble_mass(mesh), C = hk::assemble_cotan(mesh);
        hk::DiffusionPlan plan;
        const auto s = hk::diffusion_smooth(A, C, y, dop.sigma, dop.step, {dop.lump, !dop.no_clamp}, &plan);
        if (plan.clamped)
            std::cerr << "warning: step " << plan.requested_step << " exceeds 0.5/lambda_max; using " << plan.step
                      << " (" << plan.steps << " steps)\n";
        hk::save_field_csv(dop.out, s.values);
        run.results = {{"steps", plan.steps},
                       {"step", plan.step},
                       {"lambda_max_estimate", plan.lambda_max},
                       {"clamped", plan.clamped}};
    };

    // iterate ----------------------------------------------------------------------
    auto* iterate = app.add_subcommand("iterate", "iterated one-ring kernel smoothing");
    struct {
        std::string mesh, field, out;
        double sigma = 0.5;
        int iterations = 100;
    } io;
    iterate->add_option("--mesh", io.mesh)->required()->check(CLI::ExistingFile);
    iterate->add_option("--field", io.field)->required()->check(CLI::ExistingFile);
    iterate->add_option("--sigma", io.sigma, "total bandwidth (mm^2)")->check(CLI::PositiveNumber);
    iterate->add_option("--iterations", io.iterations)->check(CLI::PositiveNumber);
    iterate->add_option("--out", io.out)->required();
    bodies[iterate] = [&](Run& run) {
        const auto mesh = load_input_mesh(run, io.mesh);
        const auto y = load_input_field(run, io.field, mesh);
        run.output_file(io.out);
        const auto s = hk::iterated_kernel_smooth(mesh, y, io.sigma, io.iterations);
        hk::save_field_csv(io.out, s.values);
        run.results = {{"min", s.values.minCoeff()}, {"max", s.values.maxCoeff()}};
    };

    // kernel-eval ------------------------------------------------------------------
    auto* kernel = app.add_subcommand("kernel-eval", "truncated heat kernel K(p, q) or the column K(p, .)");
    struct {
        std::string mesh, out;
        double sigma = 0.5;
        long p = 0, q = -1;
        BasisOptions basis;
    } ko;
    kernel->add_option("--mesh", ko.mesh)->required()->check(CLI::ExistingFile);
    kernel->add_option("--sigma", ko.sigma)->check(CLI::PositiveNumber);
    kernel->add_option("--p", ko.p, "source vertex")->required()->check(CLI::NonNegativeNumber);
    kernel->add_option("--q", ko.q, "target vertex; omit for the whole column");
    kernel->add_option("--out", ko.out, "JSON (with --q) or field CSV (column)")->required();
    ko.basis.add(kernel, true);
    bodies[kernel] = [&](Run& run) {
        const auto mesh = load_input_mesh(run, ko.mesh);
        run.output_file(ko.out);
        const auto A = hk::assemble_mass(mesh), C = hk::assemble_cotan(mesh);
        const auto b = ko.basis.obtain(run, mesh, A, C);
        if (ko.q >= 0) {
            const double v = hk::heat_kernel_eval(b, ko.sigma, ko.p, ko.q);
            run.results = {{"p", ko.p}, {"q", ko.q}, {"sigma", ko.sigma}, {"value", v}};
            write_json(ko.out, run.results);
            std::cout << std::setprecision(17) << v << '\n';
        } else {
            const auto col = hk::heat_kernel_column(b, ko.sigma, ko.p);
            hk::save_field_csv(ko.out, col);
            run.results = {{"p", ko.p}, {"sigma", ko.sigma}, {"mass", col.dot(A * Eigen::VectorXd::Ones(col.size()))}};
        }
    };

    // sphere-validate ----------------------------------------------------------------
    auto* sv = app.add_subcommand("sphere-validate", "spectrum and harmonics check on an icosphere");
    struct {
        int subdivisions = 4, lmax = 5;
        double tolerance = 0.03;
        std::string out;
        BasisOptions basis;
    } vo;
    sv->add_option("--subdivisions", vo.subdivisions)->check(CLI::Range(0, 7));
    sv->add_option("--lmax", vo.lmax, "highest harmonic degree checked")->check(CLI::Range(1, 20));
    sv->add_option("--tolerance", vo.tolerance, "relative error allowed per cluster mean")->check(CLI::PositiveNumber);
    sv->add_option("--seed", vo.basis.seed);
    sv->add_option("--out", vo.out, "output directory")->required();
    bodies[sv] = [&](Run& run) {
        run.output_dir(vo.out);
        const auto mesh = hk::make_icosphere(vo.subdivisions);
        const auto A = hk::assemble_mass(mesh), C = hk::assemble_cotan(mesh);
        const int k = (vo.lmax + 1) * (vo.lmax + 1) - 1;
        if (k + 1 > static_cast<int>(mesh.num_vertices()))
            throw hk::ArgumentError("mesh too coarse for lmax " + std::to_string(vo.lmax));
        hk::EigenSolverOptions opt;
        opt.seed = vo.basis.seed;
        const auto b = hk::solve_smallest(A, C, k, opt, mesh.id());
        const Eigen::MatrixXd Y = hk::harmonic_design_matrix(mesh, vo.lmax);
        json clusters = json::array();
        bool pass = std::abs(b.eigenvalues[0]) < 1e-8;
        for (int l = 1; l <= vo.lmax; ++l) {
            const auto seg = b.eigenvalues.segment(l * l, 2 * l + 1);
            const double exact = l * (l + 1.0);
            const double err = std::abs(seg.mean() - exact) / exact;
            // Multiplicity: the cluster must sit apart from its neighbours.
            const bool separated = (l == vo.lmax || seg.maxCoeff() < b.eigenvalues[(l + 1) * (l + 1)]) &&
                                   seg.minCoeff() > b.eigenvalues[l * l - 1];
            double rq_err = 0.0;
            for (int m = -l; m <= l; ++m) {
                const Eigen::VectorXd y = Y.col(hk::harmonic_column(l, m));
                rq_err = std::max(rq_err, std::abs(y.dot(C * y) / y.dot(A * y) - exact) / exact);
            }
            pass = pass && err <= vo.tolerance && separated && rq_err <= vo.tolerance;
            clusters.push_back({{"l", l},
                                {"multiplicity", 2 * l + 1},
                                {"exact", exact},
                                {"mean", seg.mean()},
                                {"min", seg.minCoeff()},
                                {"max", seg.maxCoeff()},
                                {"relative_error", err},
                                {"separated", separated},
                                {"harmonic_rayleigh_max_error", rq_err}});
        }
        const Eigen::VectorXd w = hk::lumped_mass(A);
        Eigen::MatrixXd G = Y.transpose() * w.asDiagonal() * Y;
        G.diagonal().array() -= 1.0;
        run.results = {{"vertices", mesh.num_vertices()},
                       {"lambda0", b.eigenvalues[0]},
                       {"clusters", clusters},
                       {"harmonic_gram_defect", G.cwiseAbs().maxCoeff()},
                       {"max_residual", b.residual_norms.maxCoeff()},
                       {"pass", pass}};
        write_json(run.output(fs::path(vo.out) / "report.json"), run.results);
        hk::save_eigenvalues_csv(run.output(fs::path(vo.out) / "eigenvalues.csv"), b);
        std::cout << (pass ? "PASS" : "FAIL") << ": sphere spectrum within " << vo.tolerance << '\n';
        if (!pass) throw hk::ValidationError("sphere spectrum check failed; see report.json");
    };

    // gibbs ------------------------------------------------------------------------
    auto* gibbs = app.add_subcommand("gibbs", "band-step fit on the sphere: plain vs heat-kernel weighted");
    struct {
        int subdivisions = 5, degree = 30;
        double sigma = 1e-4;
        std::string out;
    } go;
    gibbs->add_option("--subdivisions", go.subdivisions)->check(CLI::Range(0, 7));
    gibbs->add_option("--degree", go.degree, "maximum harmonic degree L")->check(CLI::Range(0, hk::kMaxHarmonicDegree));
    gibbs->add_option("--sigma", go.sigma)->check(CLI::NonNegativeNumber);
    gibbs->add_option("--out", go.out, "output directory")->required();
    bodies[gibbs] = [&](Run& run) {
        run.output_dir(go.out);
        const auto mesh = hk::make_icosphere(go.subdivisions);
        const auto r = hk::gibbs_experiment(mesh, go.degree, go.sigma);
        run.results = {{"degree", r.degree},         {"sigma", r.sigma},
                       {"lse_overshoot", r.lse_overshoot}, {"hk_overshoot", r.hk_overshoot},
                       {"lse_far_ringing", r.lse_far_ringing}, {"hk_far_ringing", r.hk_far_ringing},
                       {"lse_sse", r.lse_sse},       {"hk_sse", r.hk_sse},
                       {"band_mean", hk::band_mean()}};
        write_json(run.output(fs::path(go.out) / "report.json"), run.results);
        {
            std::ofstream f(run.output(fs::path(go.out) / "fields.csv"));
            f << "vertex,theta,phi,step,lse,hk\n" << std::setprecision(17);
            for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
                const auto [theta, phi] = hk::spherical_angles(mesh.vertices()[i]);
                const auto k = static_cast<Eigen::Index>(i);
                f << i << ',' << theta << ',' << phi << ',' << r.step.values[k] << ',' << r.lse_field.values[k] << ','
                  << r.hk_field.values[k] << '\n';
            }
        }
        {
            std::ofstream f(run.output(fs::path(go.out) / "coefficients.csv"));
            f << "l,m,beta\n" << std::setprecision(17);
            for (int l = 0; l <= r.degree; ++l)
                for (int m = -l; m <= l; ++m) f << l << ',' << m << ',' << r.beta[hk::harmonic_column(l, m)] << '\n';
        }
        std::ofstream gp(run.output(fs::path(go.out) / "gibbs.gp"));
        gp << "# gnuplot " << "gibbs.gp  (run inside the output directory)\n"
           << "set datafile separator ','\n"
           << "set terminal pngcairo size 1000,600\n"
           << "set output 'gibbs.png'\n"
           << "set xlabel 'polar angle (rad)'\nset ylabel 'value'\nset xrange [0:1]\n"
           << "set title 'L = " << r.degree << ", sigma = " << r.sigma << "'\n"
           << "plot 'fields.csv' every ::1 using 2:4 with points pt 7 ps 0.4 title 'step', \\\n"
           << "     '' every ::1 using 2:5 with points pt 7 ps 0.3 title 'least squares', \\\n"
           << "     '' every ::1 using 2:6 with points pt 7 ps 0.3 title 'heat kernel'\n";
        std::cout << run.results.dump() << '\n';
    };

    // rft --------------------------------------------------------------------------
    auto* rft = app.add_subcommand("rft", "corrected threshold / inference for two-group F-fields");
    struct {
        std::string mesh, out;
        std::vector<std::string> group1, group2;
        double area = 0.0, sigma = 1.0, alpha = 0.05, h = -1.0;
        int euler = 2, df_alpha = 1, df_beta = 44;
    } ro;
    rft->add_option("--mesh", ro.mesh, "mesh supplying area and Euler characteristic")->check(CLI::ExistingFile);
    rft->add_option("--area", ro.area, "surface area when no mesh is given")->check(CLI::PositiveNumber);
    rft->add_option("--euler-char", ro.euler, "Euler characteristic when no mesh is given");
    rft->add_option("--sigma", ro.sigma, "smoothing bandwidth (mm^2)")->check(CLI::PositiveNumber);
    rft->add_option("--alpha", ro.alpha, "corrected significance level")->check(CLI::Range(0.0, 1.0));
    rft->add_option("--df-alpha", ro.df_alpha)->check(CLI::PositiveNumber);
    rft->add_option("--df-beta", ro.df_beta)->check(CLI::PositiveNumber);
    rft->add_option("--at", ro.h, "also report the corrected p-value at this F threshold");
    rft->add_option("--group1", ro.group1, "field CSVs of group 1")->delimiter(',')->check(CLI::ExistingFile);
    rft->add_option("--group2", ro.group2, "field CSVs of group 2")->delimiter(',')->check(CLI::ExistingFile);
    rft->add_option("--out", ro.out, "output directory")->required();
    bodies[rft] = [&](Run& run) {
        run.output_dir(ro.out);
        hk::FieldGeometry geom{ro.area, ro.euler, ro.sigma};
        std::optional<hk::TriangleMesh> mesh;
        if (!ro.mesh.empty()) {
            mesh = load_input_mesh(run, ro.mesh);
            geom.surface_area = mesh->total_area();
            geom.euler_char = hk::euler_characteristic(*mesh);
        }
        if (!(geom.surface_area > 0.0)) throw hk::ArgumentError("give --mesh or a positive --area");
        if (ro.group1.empty() != ro.group2.empty()) throw hk::ArgumentError("give both --group1 and --group2");
        json report;
        if (!ro.group1.empty()) {
            if (!mesh) throw hk::ArgumentError("group fields need --mesh");
            auto load_group = [&](const std::vector<std::string>& files) {
                std::vector<hk::ScalarField> g;
                for (const auto& f : files) g.push_back(load_input_field(run, f, *mesh));
                return g;
            };
            const auto stat = hk::group_f_stat(load_group(ro.group1), load_group(ro.group2));
            const auto inf = hk::summarize_inference(stat, ro.alpha, geom);
            std::ofstream f(run.output(fs::path(ro.out) / "stat.csv"));
            f << "F,t\n" << std::setprecision(17);
            for (Eigen::Index i = 0; i < stat.values.size(); ++i) f << stat.values[i] << ',' << stat.t[i] << '\n';
            report = {{"alpha", inf.alpha},
                      {"threshold", inf.threshold},
                      {"n_exceeding_vertices", inf.n_exceeding},
                      {"fraction_exceeding", inf.fraction_exceeding},
                      {"p_at_max", inf.p_at_max},
                      {"n_infinite", inf.n_infinite},
                      {"df", {stat.df.alpha, stat.df.beta}}};
        } else {
            const auto df = df_from(ro.df_alpha, ro.df_beta);
            const double thr = hk::rft_threshold(ro.alpha, geom, df);
            report = {{"alpha", ro.alpha},
                      {"threshold", thr},
                      {"p_at_threshold", hk::corrected_pvalue(thr, geom, df)},
                      {"df", {df.alpha, df.beta}}};
            if (ro.h >= 0.0) report["p_at_h"] = hk::corrected_pvalue(ro.h, geom, df);
        }
        report["surface_area"] = geom.surface_area;
        report["euler_char"] = geom.euler_char;
        report["sigma"] = geom.sigma;
        run.results = report;
        write_json(run.output(fs::path(ro.out) / "report.json"), report);
        std::cout << report.dump() << '\n';
    };

    // simulate ---------------------------------------------------------------------
    auto* sim = app.add_subcommand("simulate", "two-group detection study on the T-junction");
    struct {
        int study = 1, seeds = 1, n1 = 30, n2 = 30, iterations = 100, k = 1000;
        std::uint64_t seed = 1;
        double noise_sd = -1.0, sigma = -1.0, step = 0.0025, threshold = 4.90, rft_alpha = -1.0;
        std::vector<std::string> methods;
        std::string out;
    } mo;
    sim->add_option("--study", mo.study, "1: noise sd 2, sigma 0.5; 2: noise sd 0.5, sigma 0.1")->check(CLI::IsMember({1, 2}));
    sim->add_option("--noise-sd", mo.noise_sd, "override the study noise sd");
    sim->add_option("--sigma", mo.sigma, "override the study bandwidth");
    sim->add_option("--iterations", mo.iterations)->check(CLI::PositiveNumber);
    sim->add_option("--k", mo.k)->check(CLI::PositiveNumber);
    sim->add_option("--step", mo.step, "diffusion step")->check(CLI::PositiveNumber);
    sim->add_option("--threshold", mo.threshold, "one-sided t threshold");
    sim->add_option("--rft-alpha", mo.rft_alpha, "recompute the threshold from the mesh at this level");
    sim->add_option("--n1", mo.n1)->check(CLI::Range(2, 10000));
    sim->add_option("--n2", mo.n2)->check(CLI::Range(2, 10000));
    sim->add_option("--seed", mo.seed, "first seed");
    sim->add_option("--seeds", mo.seeds, "number of consecutive seeds")->check(CLI::Range(1, 1000));
    sim->add_option("--methods", mo.methods, "subset of raw,heat_kernel,iterated,diffusion")->delimiter(',');
    sim->add_option("--out", mo.out, "output directory")->required();
    bodies[sim] = [&](Run& run) {
        run.output_dir(mo.out);
        const fs::path out(mo.out);
        const auto study = hk::make_study_mesh();
        hk::SimulationConfig cfg;
        cfg.noise_sd = mo.study == 1 ? 2.0 : 0.5;
        cfg.sigma = mo.study == 1 ? 0.5 : 0.1;
        if (mo.noise_sd > 0.0) cfg.noise_sd = mo.noise_sd;
        if (mo.sigma > 0.0) cfg.sigma = mo.sigma;
        cfg.n1 = mo.n1;
        cfg.n2 = mo.n2;
        cfg.iterations = mo.iterations;
        cfg.k = mo.k;
        cfg.diffusion_step = mo.step;
        cfg.threshold = mo.threshold;
        if (mo.rft_alpha > 0.0) cfg.rft_alpha = mo.rft_alpha;
        cfg.signal = study.signal;
        std::vector<hk::Method> methods;
        for (const auto& m : mo.methods) methods.push_back(hk::parse_method(m));
        if (mo.methods.empty()) methods = hk::all_methods();

        hk::save_mesh(run.output(out / "mesh.off"), study.mesh);
        {
            std::ofstream f(run.output(out / "signal.csv"));
            f << "vertex\n";
            for (int v : study.signal) f << v << '\n';
        }
        hk::StudyContext ctx(study.mesh);
        json per_seed = json::array();
        std::map<hk::Method, std::pair<double, double>> sums;
        std::ofstream rates(run.output(out / "rates.csv"));
        rates << "seed,method,tpr,fpr,threshold\n" << std::setprecision(17);
        for (int s = 0; s < mo.seeds; ++s) {
            cfg.seed = mo.seed + static_cast<std::uint64_t>(s);
            const auto report = hk::run_study(ctx, cfg, methods);
            json entry = {{"seed", cfg.seed}, {"methods", json::object()}};
            for (const auto& r : report.methods) {
                const auto name = hk::method_name(r.method);
                entry["methods"][name] = {{"true_positive_rate", r.true_positive_rate},
                                          {"false_positive_rate", r.false_positive_rate},
                                          {"threshold", r.threshold}};
                rates << cfg.seed << ',' << name << ',' << r.true_positive_rate << ',' << r.false_positive_rate << ','
                      << r.threshold << '\n';
                sums[r.method].first += r.true_positive_rate;
                sums[r.method].second += r.false_positive_rate;
                if (s == 0) {
                    std::ofstream f(run.output(out / ("stat_" + name + ".csv")));
                    f << "F,t\n" << std::setprecision(17);
                    for (Eigen::Index i = 0; i < r.stat.t.size(); ++i) f << r.stat.values[i] << ',' << r.stat.t[i] << '\n';
                }
            }
            per_seed.push_back(entry);
        }
        rates.close();
        json mean = json::object();
        {
            std::ofstream f(run.output(out / "rates_mean.csv"));
            f << "method,tpr,fpr\n" << std::setprecision(17);
            for (hk::Method m : methods) {
                const double tpr = sums[m].first / mo.seeds, fpr = sums[m].second / mo.seeds;
                mean[hk::method_name(m)] = {{"true_positive_rate", tpr}, {"false_positive_rate", fpr}};
                f << hk::method_name(m) << ',' << tpr << ',' << fpr << '\n';
            }
        }
        run.results = {{"study", mo.study},
                       {"noise_sd", cfg.noise_sd},
                       {"sigma", cfg.sigma},
                       {"vertices", study.mesh.num_vertices()},
                       {"signal_vertices", study.signal.size()},
                       {"mean", mean},
                       {"per_seed", per_seed}};
        write_json(run.output(out / "report.json"), run.results);
        std::ofstream gp(run.output(out / "simulate.gp"));
        gp << "# gnuplot simulate.gp  (run inside the output directory)\n"
           << "set datafile separator ','\n"
           << "set terminal pngcairo size 800,500\n"
           << "set output 'simulate.png'\n"
           << "set style data histograms\nset style histogram clustered gap 1\nset style fill solid 0.8 border -1\n"
           << "set yrange [0:1.05]\nset ylabel 'rate'\n"
           << "set title 'study " << mo.study << ": detection rates over " << mo.seeds << " seed(s)'\n"
           << "plot 'rates_mean.csv' every ::1 using 2:xtic(1) title 'true positive', \\\n"
           << "     '' every ::1 using 3 title 'false positive'\n";
        std::cout << mean.dump() << '\n';
    };

    // topofix ----------------------------------------------------------------------
    auto* topofix = app.add_subcommand("topofix", "largest component plus x, y, z slice closings");
    struct {
        std::string vol, sidecar, out, out_sidecar;
        int radius = 1, connectivity = 26;
        bool no_gate = false;
    } to;
    topofix->add_option("--vol", to.vol, "raw uint8 volume")->required()->check(CLI::ExistingFile);
    topofix->add_option("--sidecar", to.sidecar, "JSON sidecar")->required()->check(CLI::ExistingFile);
    topofix->add_option("--out", to.out, "corrected raw volume")->required();
    topofix->add_option("--out-sidecar", to.out_sidecar, "sidecar for the output (default: --out with .json)");
    topofix->add_option("--radius", to.radius, "structuring element radius")->check(CLI::PositiveNumber);
    topofix->add_option("--connectivity", to.connectivity, "foreground connectivity")->check(CLI::IsMember({6, 18, 26}));
    topofix->add_flag("--no-gate", to.no_gate, "do not fail when the corrected surface has chi != 2");
    bodies[topofix] = [&](Run& run) {
        run.input(to.vol);
        run.input(to.sidecar);
        const auto v = hk::load_volume(to.vol, to.sidecar);
        run.output_file(to.out);
        const fs::path side = to.out_sidecar.empty() ? fs::path(to.out).replace_extension(".json") : fs::path(to.out_sidecar);
        const auto before = hk::largest_component(v, to.connectivity).count();
        const auto fixed = hk::topo_correct(v, {to.radius, to.connectivity});
        hk::save_volume(fixed, to.out, run.output(side));
        const auto rep = hk::validate_closed(hk::marching_cubes(fixed));
        run.results = {{"input_voxels", v.count()},
                       {"largest_component_voxels", before},
                       {"output_voxels", fixed.count()},
                       {"surface", closed_report(rep)}};
        std::cout << run.results.dump() << '\n';
        if (!to.no_gate && (rep.chi != 2 || !rep.edge_manifold))
            throw hk::TopologyError("corrected surface has chi = " + std::to_string(rep.chi) +
                                    (rep.edge_manifold ? "" : " and is not edge-manifold") +
                                    "; inspect the volume or raise --radius");
    };

    // extract ----------------------------------------------------------------------
    auto* extract = app.add_subcommand("extract", "marching-cubes surface of a binary volume");
    struct {
        std::string vol, sidecar, out;
    } xo;
    extract->add_option("--vol", xo.vol)->required()->check(CLI::ExistingFile);
    extract->add_option("--sidecar", xo.sidecar)->required()->check(CLI::ExistingFile);
    extract->add_option("--out", xo.out, "OFF or PLY mesh")->required();
    bodies[extract] = [&](Run& run) {
        run.input(xo.vol);
        run.input(xo.sidecar);
        const auto v = hk::load_volume(xo.vol, xo.sidecar);
        run.output_file(xo.out);
        const auto mesh = hk::marching_cubes(v);
        hk::save_mesh(xo.out, mesh);
        run.results = closed_report(hk::validate_closed(mesh));
        std::cout << run.results.dump() << '\n';
    };

    // validate-mesh ----------------------------------------------------------------
    auto* vm = app.add_subcommand("validate-mesh", "closed-surface counts and Euler characteristic");
    struct {
        std::string mesh, out;
        bool require_sphere = false;
    } vmo;
    vm->add_option("--mesh", vmo.mesh)->required()->check(CLI::ExistingFile);
    vm->add_option("--out", vmo.out, "report JSON");
    vm->add_flag("--require-sphere", vmo.require_sphere, "exit 1 unless edge-manifold with chi = 2");
    bodies[vm] = [&](Run& run) {
        const auto mesh = load_input_mesh(run, vmo.mesh);
        const auto rep = hk::validate_closed(mesh);
        run.results = closed_report(rep);
        run.results["area"] = mesh.total_area();
        if (!vmo.out.empty()) {
            run.output_file(vmo.out);
            write_json(vmo.out, run.results);
        }
        std::cout << run.results.dump() << '\n';
        if (vmo.require_sphere && (rep.chi != 2 || !rep.edge_manifold))
            throw hk::TopologyError("mesh is not a closed genus-0 surface (chi = " + std::to_string(rep.chi) + ")");
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    if (threads > 0) hk::set_thread_count(threads);
    for (auto& [sub, body] : bodies) {
        if (!sub->parsed()) continue;
        Run run;
        run.command = sub->get_name();
        run.params = params_of(*sub);
        run.params["threads"] = hk::thread_count();
        const auto t0 = std::chrono::steady_clock::now();
        int code = 0;
        try {
            body(run);
        } catch (const hk::NumericalError& e) {
            std::cerr << "numerical error: " << e.what() << '\n';
            code = kExitNumerical;
        } catch (const hk::FormatError& e) {
            std::cerr << "format error: " << e.what() << '\n';
            code = kExitValidation;
        } catch (const hk::ValidationError& e) {
            std::cerr << "validation error: " << e.what() << '\n';
            code = kExitValidation;
        } catch (const hk::ArgumentError& e) {
            std::cerr << "argument error: " << e.what() << '\n';
            code = kExitValidation;
        } catch (const fs::filesystem_error& e) {
            std::cerr << "file error: " << e.what() << '\n';
            code = kExitValidation;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            code = kExitNumerical;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(run, secs, code);
        return code;
    }
    std::cerr << app.help();
    return kExitUsage;
}
