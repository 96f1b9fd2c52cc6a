// iosw — simulate demand shocks on input-output tables, calibrate per-sector
// adjustment speeds from consecutive-year tables, and aggregate fitted
// ensembles into panel matrices.
//
// Exit codes: 0 success, 1 input/validation error, 2 dynamics did not
// converge within the time budget.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iosw/iosw.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw iosw::Error("cannot write file '" + path.string() + "'");
    return out;
}

/// Shock specs look like "s2:10%" or "s1:-2,s3:0.5": comma-separated
/// LABEL:VALUE items, percentages relative to the sector's final demand.
Eigen::VectorXd parse_shock_spec(const iosw::IOTable& table,
                                 const std::string& spec) {
    Eigen::VectorXd g0 = Eigen::VectorXd::Zero(table.size());
    if (spec.empty()) return g0;

    std::set<std::string> seen;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        auto comma = spec.find(',', pos);
        std::string item = spec.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos);
        auto colon = item.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 == item.size()) {
            throw iosw::StructuralError("malformed shock item '" + item +
                                        "', expected LABEL:VALUE");
        }
        std::string label = item.substr(0, colon);
        std::string value = item.substr(colon + 1);
        if (!seen.insert(label).second) {
            throw iosw::StructuralError("sector '" + label +
                                        "' shocked more than once");
        }
        auto idx = table.index_of(label);
        bool percent = !value.empty() && value.back() == '%';
        if (percent) value.pop_back();
        double amount = iosw::parse_double_strict(value, 1, 1);
        g0(idx) = percent ? table.f(idx) * amount / 100.0 : amount;
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return g0;
}

/// --params accepts a preset name or a CSV file `sector,delta_q,delta_p`.
iosw::BehavioralParams load_params(const iosw::IOTable& table,
                                   const std::string& arg) {
    const auto n = table.size();
    if (arg == "quantity") return iosw::BehavioralParams::uniform(n, 1.0, 0.0);
    if (arg == "price") return iosw::BehavioralParams::uniform(n, 0.0, 1.0);
    if (arg == "mixed") return iosw::BehavioralParams::uniform(n, 0.5, 0.5);

    auto text = iosw::read_text_file(arg);
    auto lines = iosw::detail::split_lines(text);
    if (lines.empty() || lines[0] != "sector,delta_q,delta_p") {
        throw iosw::ParseError("params file must start with 'sector,delta_q,delta_p'", 1);
    }
    Eigen::VectorXd dq(n), dp(n);
    std::vector<bool> filled(static_cast<std::size_t>(n), false);
    for (std::size_t ln = 2; ln <= lines.size(); ++ln) {
        auto fields = iosw::split_csv_line(lines[ln - 1]);
        if (fields.size() != 3) throw iosw::ParseError("expected 3 fields", ln);
        auto idx = table.index_of(std::string(fields[0]));
        if (filled[static_cast<std::size_t>(idx)]) {
            throw iosw::ParseError("sector listed twice", ln, 1);
        }
        filled[static_cast<std::size_t>(idx)] = true;
        dq(idx) = iosw::parse_double_strict(fields[1], ln, 2);
        dp(idx) = iosw::parse_double_strict(fields[2], ln, 3);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!filled[static_cast<std::size_t>(i)]) {
            throw iosw::StructuralError("params file misses sector '" +
                                        table.sector_labels[i] + "'");
        }
    }
    return iosw::BehavioralParams::create(std::move(dq), std::move(dp));
}

int effective_workers(int flag_value) {
    // IOSW_WORKERS beats the flag so batch schedulers can cap parallelism
    // without touching command lines.
    if (const char* env = std::getenv("IOSW_WORKERS")) {
        try {
            int w = std::stoi(env);
            if (w >= 1) return w;
        } catch (...) {
            std::cerr << "warning: ignoring non-numeric IOSW_WORKERS='" << env
                      << "'\n";
        }
    }
    return flag_value;
}

struct SimulateArgs {
    std::string table_path;
    std::string shock_spec;
    std::string params_arg = "mixed";
    double warmup = 0.0;
    iosw::IntegratorOptions iopts;
    std::string out_dir = ".";
    std::string prefix = "sim";
};

int cmd_simulate(const SimulateArgs& args) {
    auto table = iosw::load_canonical_csv(args.table_path);
    auto ops = iosw::build_operators(table);
    auto params = load_params(table, args.params_arg);
    auto g0 = parse_shock_spec(table, args.shock_spec);

    auto state = iosw::equilibrium_state(table);
    state.t = args.warmup;
    auto result =
        iosw::integrate(iosw::apply_shock(state, g0), params, ops, args.iopts);

    // The pre-shock phase is an exact fixed point, so the warm-up trajectory
    // is flat by construction and only materialised for plotting.
    if (args.warmup > 0.0) {
        std::vector<iosw::TrajectorySample> warm;
        Eigen::VectorXd p0 = ops.P * table.v;
        double stride = args.iopts.h * std::max(1, args.iopts.sample_every);
        for (double t = 0.0; t < args.warmup; t += stride) {
            warm.push_back({t, table.x, p0, table.v,
                            Eigen::VectorXd::Zero(table.size())});
        }
        warm.insert(warm.end(), result.trajectory.begin(),
                    result.trajectory.end());
        result.trajectory = std::move(warm);
    }

    fs::path dir(args.out_dir);
    fs::create_directories(dir);
    {
        auto out = open_out(dir / (args.prefix + "_trajectory.csv"));
        iosw::write_trajectory_csv(result, table.sector_labels, out);
    }
    if (result.converged) {
        Eigen::VectorXd p_final = ops.P * result.final_state.v;
        // The endpoint is converged only to the integrator's epsilon, so the
        // rebuilt table must forgive feasibility slack of the same order.
        double slack = 10.0 * args.iopts.epsilon *
                       std::max(1.0, g0.cwiseAbs().maxCoeff());
        auto rebuilt = iosw::rebuild_table(ops.A, result.final_state.q, p_final,
                                           table.sector_labels, table.country,
                                           table.year, slack);
        auto out = open_out(dir / (args.prefix + "_table.csv"));
        iosw::write_canonical_csv(rebuilt, out);
    } else {
        // A mid-transient state is not a balanced table; only the endpoint
        // of a converged run is worth closing into one.
        std::cerr << "note: equilibrium table not written"
                     " (dynamics did not converge)\n";
    }

    std::cout << (result.converged ? "converged" : "not converged within budget")
              << " after " << result.steps << " steps, t = "
              << iosw::format_double(result.final_state.t) << "\n";
    return result.converged ? kExitOk : kExitNotConverged;
}

struct FitArgs {
    std::string y1_path, y2_path;
    int runs = 100;
    int keep = 25;
    std::uint64_t seed = 0;
    int workers = 0;
    iosw::OptimizerOptions opts;
    std::string out_dir = ".";
    std::string prefix = "fit";
};

int cmd_fit(const FitArgs& args) {
    auto y1 = iosw::load_canonical_csv(args.y1_path);
    auto y2 = iosw::load_canonical_csv(args.y2_path);
    auto problem = iosw::make_fit_problem(y1, y2);

    auto results = iosw::multi_restart(problem, args.runs, args.keep, args.seed,
                                       args.opts, effective_workers(args.workers));
    // multi_restart returns min(keep, successes); anything short of keep
    // means aborted runs ate into the ensemble.
    int missing = args.keep - static_cast<int>(results.size());
    if (missing > 0) {
        std::cerr << "warning: partial ensemble, " << missing
                  << " of the requested " << args.keep
                  << " retained runs are missing (aborted restarts)\n";
    }

    double best = results.front().residual;
    double flat_scale = problem.table_y2.x.norm();
    bool flat = best <= 1e-9 * std::max(1.0, flat_scale);
    if (flat) {
        std::cerr << "warning: flat objective (best residual "
                  << iosw::format_double(best)
                  << "); the year pair carries no usable shock signal\n";
    }

    fs::path dir(args.out_dir);
    fs::create_directories(dir);
    {
        auto out = open_out(dir / (args.prefix + "_ensemble.csv"));
        iosw::write_ensemble_csv(problem, results, out);
    }
    {
        auto summary = iosw::aggregate_ensemble(
            results, problem.table_y1.sector_labels);
        json j;
        j["country"] = problem.table_y1.country;
        j["y1"] = problem.table_y1.year;
        j["y2"] = problem.table_y2.year;
        j["runs"] = args.runs;
        j["keep"] = args.keep;
        j["kept"] = results.size();
        j["seed"] = args.seed;
        j["best_residual"] = best;
        j["flat_objective"] = flat;
        j["sectors"] = summary.sectors;
        std::vector<double> med(summary.median.begin(), summary.median.end());
        std::vector<double> lo(summary.iqr_low.begin(), summary.iqr_low.end());
        std::vector<double> hi(summary.iqr_high.begin(), summary.iqr_high.end());
        j["median_delta_q_tilde"] = med;
        j["iqr_low"] = lo;
        j["iqr_high"] = hi;
        auto out = open_out(dir / (args.prefix + "_summary.json"));
        out << j.dump(2) << "\n";
    }
    std::cout << "kept " << results.size() << "/" << args.runs
              << " runs, best residual " << iosw::format_double(best) << "\n";
    return kExitOk;
}

struct AnalyzeArgs {
    std::string dir;
    std::string out_dir;
};

int cmd_analyze(const AnalyzeArgs& args) {
    std::vector<iosw::EnsembleFile> ensembles;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(args.dir)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        try {
            ensembles.push_back(
                iosw::read_ensemble_csv(iosw::read_text_file(path.string())));
        } catch (const iosw::Error& e) {
            std::cerr << "note: skipping " << path.filename().string()
                      << " (not an ensemble file: " << e.what() << ")\n";
        }
    }
    if (ensembles.empty()) {
        throw iosw::StructuralError("no ensemble CSV files found in '" +
                                    args.dir + "'");
    }

    auto cube = iosw::build_cube(ensembles);
    fs::path out_dir(args.out_dir.empty() ? args.dir : args.out_dir);
    fs::create_directories(out_dir);

    auto emit = [&](const char* name, const iosw::LabeledMatrix& m) {
        auto out = open_out(out_dir / name);
        iosw::write_matrix_csv(m, out);
    };
    using iosw::Axis;
    auto sector_year = iosw::stratify(cube, Axis::sector, Axis::year);
    auto country_year = iosw::stratify(cube, Axis::country, Axis::year);
    auto sector_country = iosw::stratify(cube, Axis::sector, Axis::country);
    emit("sector_by_year.csv", sector_year);
    emit("country_by_year.csv", country_year);
    emit("sector_by_country.csv", sector_country);
    // Correlation of sectors over countries, and of countries over sectors.
    emit("corr_sectors.csv", iosw::correlation_matrix(sector_country, true));
    emit("corr_countries.csv", iosw::correlation_matrix(sector_country, false));
    {
        auto out = open_out(out_dir / "panel.csv");
        iosw::write_tidy_csv(cube, out);
    }
    std::cout << "analyzed " << ensembles.size() << " ensembles into "
              << out_dir.string() << "\n";
    return kExitOk;
}

struct ConvertArgs {
    std::string from = "world-long";
    std::string to = "canonical";
    std::string input;
    std::string out_dir = ".";
    std::string country;  // empty = all
    int year = 0;
};

int cmd_convert(const ConvertArgs& args) {
    if (args.from != "world-long" || args.to != "canonical") {
        throw iosw::StructuralError(
            "only --from world-long --to canonical is supported");
    }
    auto parsed = iosw::parse_world_long(iosw::read_text_file(args.input));
    fs::path dir(args.out_dir);
    fs::create_directories(dir);

    std::vector<std::string> countries = args.country.empty()
                                             ? parsed.world.countries
                                             : std::vector<std::string>{args.country};
    for (const auto& cc : countries) {
        auto extraction = iosw::national_from_world(parsed.world, cc);
        extraction.table.year = args.year;
        for (const auto& dropped : extraction.dropped_sectors) {
            std::cerr << "note: " << cc << ": dropped inactive sector '"
                      << dropped << "'\n";
        }
        auto name = cc + "_" + std::to_string(args.year) + ".csv";
        auto out = open_out(dir / name);
        iosw::write_canonical_csv(extraction.table, out);
        std::cout << "wrote " << (dir / name).string() << "\n";
    }
    return kExitOk;
}

int cmd_validate(const std::string& table_path) {
    auto table = iosw::load_canonical_csv(table_path);
    auto report = iosw::validate_balance(table, 1e-6);
    auto ops = iosw::build_operators(table);
    std::cout << "table OK: country=" << table.country << " year=" << table.year
              << " n=" << table.size() << "\n"
              << "max row residual " << iosw::format_double(report.max_row_residual)
              << ", max column residual "
              << iosw::format_double(report.max_col_residual) << "\n"
              << "productive (Hawkins-Simon) OK, price identity error "
              << iosw::format_double(ops.price_identity_error) << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic input-output shock propagation and calibration"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; flags win");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand(
        "simulate", "propagate a demand shock on a table to equilibrium");
    simulate->add_option("--table", sim.table_path, "canonical table CSV")
        ->required();
    simulate->add_option("--shock", sim.shock_spec,
                         "LABEL:VALUE[,LABEL:VALUE...]; VALUE may end in %");
    simulate->add_option("--params", sim.params_arg,
                         "quantity|price|mixed or params CSV file");
    simulate->add_option("--step", sim.iopts.h, "integrator step size");
    simulate->add_option("--t-max", sim.iopts.t_max, "time budget");
    simulate->add_option("--epsilon", sim.iopts.epsilon, "convergence tolerance");
    simulate->add_option("--sample-every", sim.iopts.sample_every,
                         "trajectory stride in steps");
    simulate->add_option("--warmup", sim.warmup,
                         "flat pre-shock phase length (plotting only)");
    simulate->add_option("--out-dir", sim.out_dir, "output directory");
    simulate->add_option("--out-prefix", sim.prefix, "output file prefix");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand(
        "fit", "calibrate adjustment speeds from a consecutive-year pair");
    fit_cmd->add_option("--y1", fit.y1_path, "base-year table CSV")->required();
    fit_cmd->add_option("--y2", fit.y2_path, "next-year table CSV")->required();
    fit_cmd->add_option("--runs", fit.runs, "restart count");
    fit_cmd->add_option("--keep", fit.keep, "retained best runs");
    fit_cmd->add_option("--seed", fit.seed, "ensemble seed");
    fit_cmd->add_option("--workers", fit.workers,
                        "worker threads (0 = auto; IOSW_WORKERS overrides)");
    fit_cmd->add_option("--lr", fit.opts.learning_rate, "optimizer step size");
    fit_cmd->add_option("--max-iter", fit.opts.max_iterations, "iteration cap");
    fit_cmd->add_option("--fd-eps", fit.opts.fd_epsilon,
                        "finite-difference half-width");
    fit_cmd->add_option("--step", fit.opts.integrator.h, "integrator step size");
    fit_cmd->add_option("--t-max", fit.opts.integrator.t_max,
                        "integration budget per evaluation");
    fit_cmd->add_option("--epsilon", fit.opts.integrator.epsilon,
                        "convergence tolerance");
    fit_cmd->add_option("--out-dir", fit.out_dir, "output directory");
    fit_cmd->add_option("--out-prefix", fit.prefix, "output file prefix");

    AnalyzeArgs ana;
    auto* analyze = app.add_subcommand(
        "analyze", "aggregate fitted ensembles into panel and correlation matrices");
    analyze->add_option("--dir", ana.dir, "directory of ensemble CSVs")
        ->required();
    analyze->add_option("--out-dir", ana.out_dir,
                        "output directory (default: --dir)");

    ConvertArgs conv;
    auto* convert = app.add_subcommand("convert", "convert between table formats");
    convert->add_option("--from", conv.from, "source format (world-long)");
    convert->add_option("--to", conv.to, "target format (canonical)");
    convert->add_option("--input", conv.input, "input file")->required();
    convert->add_option("--out-dir", conv.out_dir, "output directory");
    convert->add_option("--country", conv.country,
                        "extract only this country (default: all)");
    convert->add_option("--year", conv.year, "year stamped on the output tables");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "check a canonical table file");
    validate->add_option("--table", validate_path, "canonical table CSV")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim);
        if (fit_cmd->parsed()) return cmd_fit(fit);
        if (analyze->parsed()) return cmd_analyze(ana);
        if (convert->parsed()) return cmd_convert(conv);
        if (validate->parsed()) return cmd_validate(validate_path);
    } catch (const iosw::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitOk;
}
