#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "iosw/dynamics.hpp"
#include "iosw/errors.hpp"
#include "iosw/ingest.hpp"
#include "iosw/iotable.hpp"
#include "iosw/leontief.hpp"
#include "iosw/numeric.hpp"
#include "iosw/random.hpp"

namespace iosw {

/// Two consecutive-year snapshots of one economy plus the derived operators
/// and shock. Sector lists are identical (reconciled) and the shock is the
/// observed change in final demand, g0 = f_y2 - f_y1.
struct FitProblem {
    IOTable table_y1;
    IOTable table_y2;
    Operators ops;
    Eigen::VectorXd g0;
};

struct InitialBuild {
    DynamicState state;
    Operators ops;
};

/// Base-year starting point of every simulated transition: quantities equal
/// base outputs (prices normalised to one), value added as observed, no
/// outstanding shock.
inline InitialBuild build_initial_state(const IOTable& table_y1) {
    InitialBuild out{equilibrium_state(table_y1), build_operators(table_y1)};
    return out;
}

/// Restrict both tables to their common sector set, folding the flows of the
/// sectors being dropped into final demand (their purchases) and value added
/// (their sales) of the survivors. Folding keeps both tables exactly
/// balanced; plain row/column deletion would not.
inline std::pair<IOTable, IOTable> reconcile_tables(const IOTable& a,
                                                    const IOTable& b) {
    std::vector<std::string> common;
    for (const auto& label : a.sector_labels) {
        if (std::find(b.sector_labels.begin(), b.sector_labels.end(), label) !=
            b.sector_labels.end()) {
            common.push_back(label);
        }
    }
    if (common.empty()) {
        throw InconsistentInputsError("tables share no sector labels");
    }

    auto fold = [&](const IOTable& t) {
        std::vector<Eigen::Index> keep;
        keep.reserve(common.size());
        for (const auto& label : common) keep.push_back(t.index_of(label));
        std::set<Eigen::Index> kept(keep.begin(), keep.end());

        const auto k = static_cast<Eigen::Index>(keep.size());
        Eigen::MatrixXd Z(k, k);
        Eigen::VectorXd f(k), v(k), x(k);
        for (Eigen::Index r = 0; r < k; ++r) {
            auto i = keep[r];
            x(r) = t.x(i);
            double to_dropped = 0.0;
            double from_dropped = 0.0;
            for (Eigen::Index j = 0; j < t.size(); ++j) {
                if (kept.count(j)) continue;
                to_dropped += t.Z(i, j);
                from_dropped += t.Z(j, i);
            }
            f(r) = t.f(i) + to_dropped;
            v(r) = t.v(i) + from_dropped;
            for (Eigen::Index c = 0; c < k; ++c) Z(r, c) = t.Z(i, keep[c]);
        }
        return IOTable::create(common, t.country, t.year, std::move(Z),
                               std::move(f), std::move(v), std::move(x), 1e-6);
    };
    return {fold(a), fold(b)};
}

inline FitProblem make_fit_problem(const IOTable& table_y1,
                                   const IOTable& table_y2) {
    if (table_y1.country != table_y2.country) {
        throw InconsistentInputsError("tables belong to different countries ('" +
                                      table_y1.country + "' vs '" +
                                      table_y2.country + "')");
    }
    if (table_y2.year != table_y1.year + 1) {
        throw InconsistentInputsError(
            "tables must cover consecutive years, got " +
            std::to_string(table_y1.year) + " and " +
            std::to_string(table_y2.year));
    }
    auto [y1, y2] = reconcile_tables(table_y1, table_y2);
    FitProblem problem{std::move(y1), std::move(y2), {}, {}};
    problem.ops = build_operators(problem.table_y1);
    problem.g0 = problem.table_y2.f - problem.table_y1.f;
    return problem;
}

/// Deviation between the observed year-2 table and the model's converged
/// output: R = ||x_y2 - x_model||_2 + ||v_y2 - v_model||_2. The model's
/// monetary output is x = q .* (P v); its value added is read off the
/// rebuilt table, v_model = v_state .* q ./ x0 (the state tracks value
/// added at base-year volumes, the table scales it with realised volume).
inline double residual(const DynamicState& final_state, const IOTable& table_y2,
                       const Operators& ops) {
    const auto n = table_y2.size();
    if (final_state.q.size() != n || ops.x0.size() != n) {
        throw StructuralError("residual inputs have inconsistent sizes");
    }
    Eigen::VectorXd p = ops.P * final_state.v;
    Eigen::VectorXd x_model = final_state.q.cwiseProduct(p);
    Eigen::VectorXd v_model =
        final_state.v.cwiseProduct(final_state.q.cwiseQuotient(ops.x0));
    return (table_y2.x - x_model).norm() + (table_y2.v - v_model).norm();
}

inline double residual(const FitProblem& problem,
                       const DynamicState& final_state) {
    return residual(final_state, problem.table_y2, problem.ops);
}

struct OptimizerOptions {
    double learning_rate = 0.05;  // Adam step on log-parameters
    double lr_decay = 1.0;        // per-iteration multiplier; < 1 anneals the
                                  // step from coarse basin search to fine
                                  // refinement (1.0 keeps the step constant)
    int max_iterations = 500;
    double fd_epsilon = 1e-4;     // central-difference half-width on theta
    int patience = 10;            // early-stop window (iterations)
    double improvement_tol = 1e-6;  // relative best-R improvement over window
    int max_consecutive_failures = 8;
    bool normalize_scale = true;  // evaluate at params/max(params); the
                                  // converged state is scale-invariant, so
                                  // this only bounds integration time
    IntegratorOptions integrator{0.05, 200.0, 1e-8, 0, 20};
};

struct FitResult {
    BehavioralParams params;
    double residual = 0.0;
    bool converged = false;  // dynamics converged within the budget at the optimum
    int iterations = 0;
    std::uint64_t seed = 0;
};

namespace detail {

/// Componentwise exp through the scalar routine: std::exp(-inf) is exactly
/// zero, so components pinned at theta = -inf map back to speed 0. Eigen's
/// vectorised exp clamps its argument first and would yield a denormal.
inline BehavioralParams params_from_theta(const Eigen::VectorXd& theta) {
    const auto n = theta.size() / 2;
    BehavioralParams params{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        params.delta_q(i) = std::exp(theta(i));
        params.delta_p(i) = std::exp(theta(n + i));
    }
    return params;
}

struct Objective {
    const FitProblem& problem;
    DynamicState shocked;
    IntegratorOptions iopts;
    bool normalize;

    struct Eval {
        double R;
        bool converged;
    };

    /// R at params exp(theta); empty on dynamics divergence.
    std::optional<Eval> operator()(const Eigen::VectorXd& theta) const {
        BehavioralParams params = params_from_theta(theta);
        if (normalize) {
            double top = std::max(params.delta_q.maxCoeff(),
                                  params.delta_p.maxCoeff());
            if (top > 0.0 && std::isfinite(top)) {
                params.delta_q /= top;
                params.delta_p /= top;
            }
        }
        try {
            auto run = integrate(shocked, params, problem.ops, iopts);
            return Eval{residual(problem, run.final_state), run.converged};
        } catch (const DivergenceError&) {
            return std::nullopt;
        } catch (const AdmissibilityError&) {
            return std::nullopt;
        }
    }
};

} // namespace detail

/// Gradient descent with adaptive moment estimates on theta = log(params);
/// the exponential map keeps every adjustment speed positive (components
/// that start at exactly zero stay pinned at zero). Gradients are central
/// finite differences in theta, each probe one full integration. Probes that
/// diverge are retried with a shorter difference step; a diverging update is
/// rolled back with a halved learning rate. The best parameters seen are
/// returned, so a flat objective returns the initial guess untouched.
inline FitResult fit(const FitProblem& problem, const BehavioralParams& init,
                     const OptimizerOptions& opts = {}) {
    const auto n = problem.table_y1.size();
    BehavioralParams checked = BehavioralParams::create(init.delta_q, init.delta_p);
    if (checked.delta_q.size() != n) {
        throw StructuralError("initial params do not match the problem size");
    }

    detail::Objective objective{
        problem,
        apply_shock(equilibrium_state(problem.table_y1), problem.g0),
        opts.integrator, opts.normalize_scale};

    const auto dim = 2 * n;
    Eigen::VectorXd theta(dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        theta(i) = std::log(checked.delta_q(i));      // log(0) = -inf pins
        theta(n + i) = std::log(checked.delta_p(i));  // the component
    }

    auto first = objective(theta);
    if (!first) {
        throw FitAbortedError("dynamics diverge at the initial parameters");
    }
    double best_R = first->R;
    bool best_converged = first->converged;
    BehavioralParams best_params = checked;

    std::vector<double> best_history{best_R};
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd grad(dim);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double lr = opts.learning_rate;
    int adam_t = 0;
    int consecutive_failures = 0;
    int iterations = 0;

    auto register_failure = [&](const char* stage) {
        lr *= 0.5;
        if (++consecutive_failures >= opts.max_consecutive_failures) {
            throw FitAbortedError(std::string("persistent dynamics divergence (") +
                                  stage + ") after " +
                                  std::to_string(consecutive_failures) +
                                  " attempts at iteration " +
                                  std::to_string(iterations));
        }
    };

    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
        iterations = iter;

        bool grad_ok = true;
        for (Eigen::Index k = 0; k < dim && grad_ok; ++k) {
            if (!std::isfinite(theta(k))) {  // pinned-at-zero component
                grad(k) = 0.0;
                continue;
            }
            double eps = opts.fd_epsilon;
            bool done = false;
            for (int attempt = 0; attempt < 6 && !done; ++attempt, eps *= 0.5) {
                Eigen::VectorXd probe = theta;
                probe(k) = theta(k) + eps;
                auto plus = objective(probe);
                if (!plus) continue;
                probe(k) = theta(k) - eps;
                auto minus = objective(probe);
                if (!minus) continue;
                grad(k) = (plus->R - minus->R) / (2.0 * eps);
                done = true;
            }
            if (!done) grad_ok = false;
        }
        if (!grad_ok) {
            register_failure("gradient probe");
            best_history.push_back(best_R);
            continue;
        }

        ++adam_t;
        m = beta1 * m + (1.0 - beta1) * grad;
        u = beta2 * u + (1.0 - beta2) * grad.cwiseProduct(grad);
        double mc = 1.0 - std::pow(beta1, adam_t);
        double uc = 1.0 - std::pow(beta2, adam_t);
        Eigen::VectorXd step =
            (m / mc).cwiseQuotient(((u / uc).cwiseSqrt().array() + adam_eps).matrix());
        Eigen::VectorXd theta_next = theta - lr * step;

        auto eval = objective(theta_next);
        if (!eval) {
            --adam_t;  // roll the moment update back with the step
            m = (m - (1.0 - beta1) * grad) / beta1;
            u = (u - (1.0 - beta2) * grad.cwiseProduct(grad)) / beta2;
            register_failure("update step");
            best_history.push_back(best_R);
            continue;
        }
        consecutive_failures = 0;
        lr *= opts.lr_decay;
        theta = std::move(theta_next);
        if (eval->R < best_R) {
            best_R = eval->R;
            best_converged = eval->converged;
            best_params = detail::params_from_theta(theta);
        }
        best_history.push_back(best_R);

        if (iter >= opts.patience) {
            double before = best_history[best_history.size() - 1 -
                                         static_cast<std::size_t>(opts.patience)];
            if (before - best_R <= opts.improvement_tol * std::max(before, 1e-300)) {
                break;
            }
        }
    }

    return FitResult{std::move(best_params), best_R, best_converged, iterations, 0};
}

/// Runs n_runs independent fits from log-uniform random starting points
/// (components on [1e-3, 1e1], run_seed = seed + run_index) and keeps the
/// n_keep smallest residuals, ascending, ties broken by seed. The ensemble
/// is a pure function of (problem, n_runs, n_keep, seed) regardless of the
/// worker count.
inline std::vector<FitResult> multi_restart(const FitProblem& problem,
                                            int n_runs, int n_keep,
                                            std::uint64_t seed,
                                            const OptimizerOptions& opts = {},
                                            int workers = 0) {
    if (n_runs < 1 || n_keep < 1 || n_keep > n_runs) {
        throw StructuralError("need 1 <= n_keep <= n_runs");
    }
    const auto n = problem.table_y1.size();

    std::vector<std::optional<FitResult>> slots(n_runs);
    std::vector<std::string> failures(n_runs);
    std::atomic<int> cursor{0};

    auto worker = [&]() {
        while (true) {
            int i = cursor.fetch_add(1);
            if (i >= n_runs) return;
            std::uint64_t run_seed = seed + static_cast<std::uint64_t>(i);
            Rng rng(run_seed);
            Eigen::VectorXd dq(n), dp(n);
            for (Eigen::Index k = 0; k < n; ++k) dq(k) = rng.log_uniform(1e-3, 1e1);
            for (Eigen::Index k = 0; k < n; ++k) dp(k) = rng.log_uniform(1e-3, 1e1);
            try {
                FitResult r = fit(problem, BehavioralParams{dq, dp}, opts);
                r.seed = run_seed;
                slots[i] = std::move(r);
            } catch (const Error& e) {
                failures[i] = e.what();
            }
        }
    };

    int n_workers = workers;
    if (n_workers <= 0) {
        n_workers = static_cast<int>(std::thread::hardware_concurrency());
        if (n_workers < 1) n_workers = 1;
    }
    n_workers = std::min(n_workers, n_runs);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::vector<FitResult> kept;
    kept.reserve(n_runs);
    for (auto& slot : slots) {
        if (slot) kept.push_back(std::move(*slot));
    }
    if (kept.empty()) {
        std::string detail;
        for (int i = 0; i < n_runs && detail.size() < 600; ++i) {
            if (!failures[i].empty()) {
                detail += "\n  run " + std::to_string(i) + ": " + failures[i];
            }
        }
        throw EnsembleError("all " + std::to_string(n_runs) +
                            " restart runs aborted:" + detail);
    }

    std::sort(kept.begin(), kept.end(), [](const FitResult& a, const FitResult& b) {
        if (a.residual != b.residual) return a.residual < b.residual;
        return a.seed < b.seed;
    });
    if (static_cast<int>(kept.size()) > n_keep) {
        kept.resize(static_cast<std::size_t>(n_keep));
    }
    return kept;
}

/// Ensemble export: one row per (retained run, sector), tagged with enough
/// metadata to rebuild panel cubes later.
inline void write_ensemble_csv(const FitProblem& problem,
                               const std::vector<FitResult>& results,
                               std::ostream& out) {
    out << "# country=" << problem.table_y1.country
        << " y1=" << problem.table_y1.year << " y2=" << problem.table_y2.year
        << " n=" << problem.table_y1.size() << "\n";
    out << "seed,residual,converged,iterations,sector,delta_q,delta_p\n";
    for (const auto& r : results) {
        for (Eigen::Index i = 0; i < problem.table_y1.size(); ++i) {
            out << r.seed << ',' << format_double(r.residual) << ','
                << (r.converged ? 1 : 0) << ',' << r.iterations << ','
                << problem.table_y1.sector_labels[i] << ','
                << format_double(r.params.delta_q(i)) << ','
                << format_double(r.params.delta_p(i)) << "\n";
        }
    }
}

struct EnsembleFile {
    std::string country;
    int y1 = 0;
    int y2 = 0;
    std::vector<std::string> sectors;
    std::vector<FitResult> results;
};

inline EnsembleFile read_ensemble_csv(std::string_view text) {
    auto lines = detail::split_lines(text);
    if (lines.size() < 3) throw StructuralError("ensemble file too short");

    EnsembleFile file;
    {
        std::vector<std::string_view> tokens;
        if (lines[0].substr(0, 2) != "# ") {
            throw ParseError("ensemble header must start with '# '", 1);
        }
        std::string_view rest = lines[0].substr(2);
        while (!rest.empty()) {
            auto sp = rest.find(' ');
            tokens.push_back(rest.substr(0, sp));
            if (sp == std::string_view::npos) break;
            rest.remove_prefix(sp + 1);
        }
        if (tokens.size() != 4 || tokens[0].substr(0, 8) != "country=" ||
            tokens[1].substr(0, 3) != "y1=" || tokens[2].substr(0, 3) != "y2=" ||
            tokens[3].substr(0, 2) != "n=") {
            throw ParseError(
                "malformed ensemble header, expected '# country=XX y1=Y y2=Y n=N'",
                1);
        }
        file.country = std::string(tokens[0].substr(8));
        file.y1 = static_cast<int>(parse_long_strict(tokens[1].substr(3), 1, 2));
        file.y2 = static_cast<int>(parse_long_strict(tokens[2].substr(3), 1, 3));
        long n = parse_long_strict(tokens[3].substr(2), 1, 4);
        if (n < 1) throw ParseError("sector count must be >= 1", 1);
        if (lines[1] != "seed,residual,converged,iterations,sector,delta_q,delta_p") {
            throw ParseError("unexpected ensemble column header", 2);
        }

        const auto n_rows = lines.size() - 2;
        if (n_rows % static_cast<std::size_t>(n) != 0) {
            throw StructuralError("ensemble row count is not a multiple of n");
        }

        for (std::size_t start = 2; start < lines.size();
             start += static_cast<std::size_t>(n)) {
            FitResult r{BehavioralParams{Eigen::VectorXd(n), Eigen::VectorXd(n)},
                        0.0, false, 0, 0};
            for (long i = 0; i < n; ++i) {
                std::size_t ln = start + static_cast<std::size_t>(i) + 1;
                auto fields = split_csv_line(lines[ln - 1]);
                if (fields.size() != 7) {
                    throw ParseError("expected 7 fields", ln);
                }
                auto seed = static_cast<std::uint64_t>(
                    parse_long_strict(fields[0], ln, 1));
                double res = parse_double_strict(fields[1], ln, 2);
                long conv = parse_long_strict(fields[2], ln, 3);
                long iters = parse_long_strict(fields[3], ln, 4);
                if (i == 0) {
                    r.seed = seed;
                    r.residual = res;
                    r.converged = conv != 0;
                    r.iterations = static_cast<int>(iters);
                    if (file.results.empty()) {
                        file.sectors.emplace_back(fields[4]);
                    }
                } else if (seed != r.seed) {
                    throw ParseError("run block switches seed mid-block", ln, 1);
                }
                if (file.results.empty() && i > 0) {
                    file.sectors.emplace_back(fields[4]);
                } else if (!file.results.empty() &&
                           file.sectors[static_cast<std::size_t>(i)] != fields[4]) {
                    throw ParseError("sector order differs between run blocks", ln, 5);
                }
                r.params.delta_q(i) = parse_double_strict(fields[5], ln, 6);
                r.params.delta_p(i) = parse_double_strict(fields[6], ln, 7);
            }
            file.results.push_back(std::move(r));
        }
    }
    return file;
}

} // namespace iosw
