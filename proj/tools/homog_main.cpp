// homog: sample random coefficient fields, solve modified correctors, run
// scaling studies and probes. Subcommands: sample, solve, study, green,
// sgcheck. Exit codes: 0 success, 2 config/usage, 3 data inconsistency,
// 4 solver failure.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "homog/config.hpp"
#include "homog/ensemble.hpp"
#include "homog/estimator.hpp"
#include "homog/green.hpp"
#include "homog/manifest.hpp"
#include "homog/parallel.hpp"
#include "homog/sgcheck.hpp"
#include "homog/solver.hpp"
#include "homog/study.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace homog;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    std::vector<std::string> overrides;
};

Config load_config(const CommonArgs& args) {
    Config cfg = args.config_path.empty() ? Config{} : Config::parse_file(args.config_path);
    for (const auto& ov : args.overrides) cfg.apply_override(ov);
    if (args.seed_set) cfg.set("ensemble", "master_seed", std::to_string(args.seed));
    return cfg;
}

EnsembleSpec ensemble_from_config(const Config& cfg) {
    EnsembleSpec spec;
    spec.kind = ensemble_kind_from_string(cfg.get_string("ensemble", "kind"));
    spec.dimension = static_cast<int>(cfg.get_int("ensemble", "dimension"));
    spec.contrast = cfg.get_double("ensemble", "contrast", 0.25);
    spec.inclusion_radius = cfg.get_double("ensemble", "inclusion_radius", 1.0);
    spec.intensity = cfg.get_double("ensemble", "intensity", 1.0);
    spec.master_seed = cfg.get_u64("ensemble", "master_seed", 0);
    if (cfg.has("ensemble", "values")) {
        const auto values = cfg.get_double_list("ensemble", "values");
        std::vector<double> probs(values.size(), 1.0 / static_cast<double>(values.size()));
        if (cfg.has("ensemble", "probabilities"))
            probs = cfg.get_double_list("ensemble", "probabilities");
        if (probs.size() != values.size())
            throw ConfigError("ensemble.probabilities must match ensemble.values in length");
        for (std::size_t i = 0; i < values.size(); ++i)
            spec.cell_values.push_back({Tensor::isotropic(spec.dimension, values[i]), probs[i]});
    }
    spec.validate();
    return spec;
}

SolverOptions solver_from_config(const Config& cfg, const std::string& out_dir) {
    SolverOptions opts;
    opts.tol = cfg.get_double("solver", "tol", 1e-8);
    opts.max_iter = cfg.get_int("solver", "max_iter", 0);
    const std::string pre = cfg.get_string("solver", "preconditioner", "auto");
    if (pre == "auto") opts.preconditioner = Preconditioner::Auto;
    else if (pre == "jacobi") opts.preconditioner = Preconditioner::Jacobi;
    else if (pre == "spectral") opts.preconditioner = Preconditioner::Spectral;
    else if (pre == "none") opts.preconditioner = Preconditioner::None;
    else throw ConfigError("solver.preconditioner must be auto|jacobi|spectral|none");
    const std::string fa = cfg.get_string("solver", "face_average", "arithmetic");
    if (fa == "arithmetic") opts.face_average = FaceAverage::Arithmetic;
    else if (fa == "harmonic") opts.face_average = FaceAverage::Harmonic;
    else throw ConfigError("solver.face_average must be arithmetic|harmonic");
    opts.spectral_threshold = cfg.get_int("solver", "spectral_threshold", 2'000'000);
    if (cfg.get_bool("solver", "diagnostics", true))
        opts.diagnostics_path = (fs::path(out_dir) / "diagnostics.jsonl").string();
    return opts;
}

Box domain_from_config(const Config& cfg, int d) {
    const double radius = cfg.get_double("domain", "radius");
    if (!(radius > 0.0)) throw ConfigError("domain.radius must be positive");
    return Box::centered(d, radius);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os << text;
}

int cmd_sample(const CommonArgs& args) {
    const Config cfg = load_config(args);
    RunManifest manifest;
    manifest.started_at = timestamp_utc_now();
    manifest.config_text = cfg.serialize();

    const EnsembleSpec spec = ensemble_from_config(cfg);
    manifest.master_seed = spec.master_seed;
    const Box box = domain_from_config(cfg, spec.dimension);
    const double h = cfg.get_double("domain", "spacing", 0.25);
    const auto index = cfg.get_u64("sample", "index", 0);
    const CoefficientField field = realize_field(spec, box, h, index);

    fs::create_directories(args.out_dir);
    const std::string format = cfg.get_string("output", "format", "binary");
    if (format == "binary") {
        const std::string path = (fs::path(args.out_dir) / "field.bin").string();
        write_field_binary(field, path);
        manifest.add_output(path, "coefficient_field_binary");
    } else if (format == "csv") {
        const std::string path = (fs::path(args.out_dir) / "field.csv").string();
        write_field_csv(field, path);
        manifest.add_output(path, "coefficient_field_csv");
    } else {
        throw ConfigError("output.format must be binary|csv");
    }
    manifest.finished_at = timestamp_utc_now();
    manifest.write_atomic((fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "sample: wrote field (" << field.layout().cells() << " cells)\n";
    return 0;
}

int cmd_solve(const CommonArgs& args) {
    const Config cfg = load_config(args);
    RunManifest manifest;
    manifest.started_at = timestamp_utc_now();
    manifest.config_text = cfg.serialize();

    const EnsembleSpec spec = ensemble_from_config(cfg);
    manifest.master_seed = spec.master_seed;
    const Box box = domain_from_config(cfg, spec.dimension);
    const double h = cfg.get_double("domain", "spacing", 0.25);
    const auto index = cfg.get_u64("sample", "index", 0);
    const double T = cfg.get_double("solver", "T");
    if (!(T > 0.0)) throw ConfigError("solver.T must be positive");

    fs::create_directories(args.out_dir);
    SolverOptions opts = solver_from_config(cfg, args.out_dir);
    const CoefficientField field = realize_field(spec, box, h, index);
    const std::string xi_str = cfg.get_string("solver", "xi", "e1");
    Vec3 xi{0.0, 0.0, 0.0};
    if (xi_str == "e1") xi = unit_vector(0);
    else if (xi_str == "e2") xi = unit_vector(1);
    else if (xi_str == "e3") xi = unit_vector(2);
    else throw ConfigError("solver.xi must be e1|e2|e3");

    const OperatorSpec op{T, false};
    const CorrectorSolution sol = solve_modified_corrector(field, op, xi, opts);

    const std::string phi_bin = (fs::path(args.out_dir) / "phi.bin").string();
    write_grid_function_binary(sol.phi, phi_bin);
    manifest.add_output(phi_bin, "corrector_binary");
    if (!opts.diagnostics_path.empty()) manifest.add_output(opts.diagnostics_path, "diagnostics_jsonl");

    json summary;
    summary["T"] = T;
    summary["residual"] = sol.residual_norm;
    summary["iterations"] = sol.iterations;
    summary["domain_radius"] = sol.domain_radius;
    summary["energy_identity_residual"] = energy_identity_residual(field, op, sol, opts.face_average);
    const std::string summary_path = (fs::path(args.out_dir) / "solve.json").string();
    write_text(summary_path, summary.dump(2) + "\n");
    manifest.add_output(summary_path, "solve_summary");

    manifest.finished_at = timestamp_utc_now();
    manifest.write_atomic((fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "solve: residual " << sol.residual_norm << " in " << sol.iterations
              << " iterations\n";
    return 0;
}

json slope_to_json(const SlopeFit& f) {
    return {{"slope", f.slope}, {"stderr", f.stderr_slope}, {"r2", f.r2}, {"n", f.n}};
}

int cmd_study(const CommonArgs& args, const std::string& type) {
    const Config cfg = load_config(args);
    RunManifest manifest;
    manifest.started_at = timestamp_utc_now();
    manifest.config_text = cfg.serialize();

    const StudyKind kind = study_kind_from_string(type);
    StudyPlan plan = plan_from_config(cfg, kind);
    manifest.master_seed = plan.ensemble.master_seed;
    fs::create_directories(args.out_dir);
    plan.solver.diagnostics_path.clear();  // per-solve logs too chatty for studies

    const std::string samples_path = (fs::path(args.out_dir) / "samples.csv").string();
    ResumeRows resume;
    const bool resuming = fs::exists(samples_path);
    if (resuming) resume = read_samples_csv(samples_path);

    json summary;
    std::vector<SampleRow> rows;
    std::string slopes_csv = "study,quantity,slope,stderr,r2\n";
    auto slope_line = [&](const std::string& q, const SlopeFit& f) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6g,%.6g,%.6g\n", type.c_str(), q.c_str(), f.slope,
                      f.stderr_slope, f.r2);
        slopes_csv += buf;
    };

    switch (kind) {
        case StudyKind::Variance: {
            const auto rec = run_variance_study(plan, resuming ? &resume : nullptr);
            rows = rec.samples;
            summary["degenerate"] = rec.degenerate;
            summary["cells"] = json::array();
            for (const auto& c : rec.cells)
                summary["cells"].push_back({{"L", c.L},
                                            {"T", c.T},
                                            {"R", c.R},
                                            {"n", c.n},
                                            {"mean_without", c.mean_without},
                                            {"var_without", c.var_without},
                                            {"var_without_ci", c.var_without_ci},
                                            {"var_with", c.var_with},
                                            {"var_zero", c.var_zero},
                                            {"var_zero_integral", c.var_zero_integral},
                                            {"failed", c.failed},
                                            {"error", c.error}});
            if (rec.slope_without) {
                summary["slope_without"] = slope_to_json(*rec.slope_without);
                slope_line("var_without", *rec.slope_without);
            }
            if (rec.slope_with) {
                summary["slope_with"] = slope_to_json(*rec.slope_with);
                slope_line("var_with", *rec.slope_with);
            }
            if (rec.slope_zero_integral) {
                summary["slope_zero_integral"] = slope_to_json(*rec.slope_zero_integral);
                slope_line("var_zero_integral", *rec.slope_zero_integral);
            }
            break;
        }
        case StudyKind::Systematic: {
            const auto rec = run_systematic_study(plan, resuming ? &resume : nullptr);
            rows = rec.samples;
            summary["underpowered"] = rec.underpowered;
            summary["reference"] = rec.reference;
            summary["reference_ci"] = rec.reference_ci;
            summary["T_values"] = rec.T_values;
            summary["A_T"] = json::array();
            for (const auto& m : rec.A_T)
                summary["A_T"].push_back(
                    {{"mean", m.mean}, {"ci", m.ci_halfwidth}, {"n", m.n}});
            summary["fit_T"] = rec.fit_T;
            summary["fit_error"] = rec.fit_error;
            summary["fit_error_ci"] = rec.fit_error_ci;
            if (rec.slope) {
                summary["slope"] = slope_to_json(*rec.slope);
                slope_line("systematic_error", *rec.slope);
            }
            break;
        }
        case StudyKind::Gradient: {
            const auto rec = run_gradient_convergence_study(plan, resuming ? &resume : nullptr);
            rows = rec.samples;
            summary["T_values"] = rec.T_values;
            summary["D_T"] = rec.D_T;
            summary["D_T_ci"] = rec.D_T_ci;
            summary["phi_diff_sq"] = rec.phi_diff_sq;
            if (rec.slope) {
                summary["slope"] = slope_to_json(*rec.slope);
                slope_line("gradient_difference", *rec.slope);
            }
            break;
        }
        case StudyKind::Moments: {
            const auto rec = run_moment_study(plan, resuming ? &resume : nullptr);
            rows = rec.samples;
            summary["T_values"] = rec.T_values;
            summary["grad_flatness"] = rec.grad_flatness;
            summary["moments"] = json::array();
            for (const auto& m : rec.moments)
                summary["moments"].push_back({{"q", m.q},
                                              {"T", m.T},
                                              {"moment_phi", m.moment_phi},
                                              {"moment_grad", m.moment_grad},
                                              {"ci", m.ci_halfwidth}});
            if (rec.phi2_vs_lnT) {
                summary["phi2_vs_lnT"] = slope_to_json(*rec.phi2_vs_lnT);
                slope_line("phi2_vs_lnT", *rec.phi2_vs_lnT);
            }
            break;
        }
        case StudyKind::Sensitivity: {
            const auto rec = run_sensitivity_probe(plan, plan.n_samples,
                                                   resuming ? &resume : nullptr);
            rows = rec.samples;
            summary["distances"] = rec.distances;
            summary["p95"] = rec.p95;
            summary["stability"] = rec.stability;
            summary["pass"] = rec.pass;
            break;
        }
        case StudyKind::PsiVariance: {
            const auto rec = run_psi_variance_study(plan);
            rows = rec.samples;
            summary["T_values"] = rec.T_values;
            summary["var_psi"] = rec.var_psi;
            if (rec.slope) summary["slope"] = slope_to_json(*rec.slope);
            break;
        }
    }

    write_samples_csv(samples_path, rows);
    manifest.add_output(samples_path, "samples_csv");
    const std::string summary_path = (fs::path(args.out_dir) / "summary.json").string();
    write_text(summary_path, summary.dump(2) + "\n");
    manifest.add_output(summary_path, "summary_json");
    const std::string slopes_path = (fs::path(args.out_dir) / "slopes.csv").string();
    write_text(slopes_path, slopes_csv);
    manifest.add_output(slopes_path, "slopes_csv");

    manifest.finished_at = timestamp_utc_now();
    manifest.write_atomic((fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "study " << type << ": " << rows.size() << " sample rows\n";
    return 0;
}

int cmd_green(const CommonArgs& args) {
    const Config cfg = load_config(args);
    RunManifest manifest;
    manifest.started_at = timestamp_utc_now();
    manifest.config_text = cfg.serialize();

    const EnsembleSpec spec = ensemble_from_config(cfg);
    manifest.master_seed = spec.master_seed;
    const Box box = domain_from_config(cfg, spec.dimension);
    const double h = cfg.get_double("domain", "spacing", 0.25);
    const double T = cfg.get_double("green", "T", 1e6);
    const auto index = cfg.get_u64("sample", "index", 0);
    const auto radii = cfg.get_double_list("green", "radii", {2.0, 3.0, 4.0, 6.0, 8.0});
    const auto p_sweep = cfg.get_double_list("green", "p_sweep", {1.0, 1.25, 1.5, 2.0});

    fs::create_directories(args.out_dir);
    const SolverOptions opts = solver_from_config(cfg, args.out_dir);
    const CoefficientField field = realize_field(spec, box, h, index);
    const GridLayout& g = field.layout();
    const MultiIndex src = g.cell_at({0.0, 0.0, 0.0});
    const OperatorSpec op{T, false};
    const GridFunction G = solve_green_column(field, op, src, opts);

    const auto pw = pointwise_decay_probe(G, src, T, radii);
    const auto table = annulus_gradient_norms(G, src, radii, p_sweep);

    const std::string report_path = (fs::path(args.out_dir) / "green_report.json").string();
    write_green_report_json(report_path, pw, table);
    manifest.add_output(report_path, "green_report_json");
    const std::string csv_path = (fs::path(args.out_dir) / "annulus.csv").string();
    write_annulus_csv(csv_path, table);
    manifest.add_output(csv_path, "annulus_csv");

    manifest.finished_at = timestamp_utc_now();
    manifest.write_atomic((fs::path(args.out_dir) / "manifest.json").string());
    std::cout << "green: decay rate " << pw.fitted_rate_c << ", p=1 exponent "
              << table.fitted_exponent.front() << "\n";
    return 0;
}

int cmd_sgcheck(const CommonArgs& args) {
    RunManifest manifest;
    manifest.started_at = timestamp_utc_now();
    if (!args.config_path.empty()) manifest.config_text = load_config(args).serialize();

    fs::create_directories(args.out_dir);
    const auto entries = run_sg_battery();
    const std::string path = (fs::path(args.out_dir) / "sgcheck.json").string();
    write_battery_json(path, entries);
    manifest.add_output(path, "sg_battery_json");
    manifest.finished_at = timestamp_utc_now();
    manifest.write_atomic((fs::path(args.out_dir) / "manifest.json").string());

    bool all = true;
    for (const auto& e : entries) all = all && e.pass;
    std::cout << "sgcheck: " << entries.size() << " battery entries, "
              << (all ? "all pass" : "FAILURES") << "\n";
    return all ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic homogenization laboratory"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string study_type;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        sub->add_option("--config", args.config_path, "config file (key = value sections)")
            ->required(config_required);
        sub->add_option("--out", args.out_dir, "output directory")->required();
        sub->add_option("--seed", args.seed, "master seed override")
            ->each([&](const std::string&) { args.seed_set = true; });
        sub->add_option("--workers", args.workers, "worker thread count");
        sub->add_option("--override", args.overrides, "config override section.key=value");
    };

    add_common(app.add_subcommand("sample", "realize a coefficient field"), true);
    add_common(app.add_subcommand("solve", "solve a modified corrector"), true);
    auto* study = app.add_subcommand("study", "run a scaling study");
    study->add_option("type", study_type, "variance|systematic|gradient|moments|sensitivity|psivar")
        ->required();
    add_common(study, true);
    add_common(app.add_subcommand("green", "green function probes"), true);
    add_common(app.add_subcommand("sgcheck", "spectral gap battery"), false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    if (args.workers > 0) set_worker_count(args.workers);

    try {
        if (app.got_subcommand("sample")) return cmd_sample(args);
        if (app.got_subcommand("solve")) return cmd_solve(args);
        if (app.got_subcommand("study")) return cmd_study(args, study_type);
        if (app.got_subcommand("green")) return cmd_green(args);
        if (app.got_subcommand("sgcheck")) return cmd_sgcheck(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
