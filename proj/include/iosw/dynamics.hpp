#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "iosw/errors.hpp"
#include "iosw/leontief.hpp"
#include "iosw/numeric.hpp"

namespace iosw {

/// Per-sector adjustment speeds. delta_q converts residual monetary demand
/// into extra physical output; delta_p converts it into extra value added
/// (and hence prices). A sector with both speeds zero can never absorb a
/// shock, so that combination is rejected.
struct BehavioralParams {
    Eigen::VectorXd delta_q;
    Eigen::VectorXd delta_p;

    static BehavioralParams create(Eigen::VectorXd dq, Eigen::VectorXd dp) {
        if (dq.size() != dp.size()) {
            throw StructuralError("delta_q and delta_p sizes differ");
        }
        if (!dq.allFinite() || !dp.allFinite() || (dq.array() < 0.0).any() ||
            (dp.array() < 0.0).any()) {
            throw StructuralError("adjustment speeds must be finite and >= 0");
        }
        if (((dq.array() + dp.array()) <= 0.0).any()) {
            throw StructuralError(
                "at least one adjustment speed must be positive per sector");
        }
        return {std::move(dq), std::move(dp)};
    }

    static BehavioralParams uniform(Eigen::Index n, double dq, double dp) {
        return create(Eigen::VectorXd::Constant(n, dq),
                      Eigen::VectorXd::Constant(n, dp));
    }
};

/// Instantaneous system state. Prices are derived, p = P*v, not stored;
/// q is in physical units normalised so that base-year prices equal one,
/// v and g are in currency units. t is dimensionless iteration time.
struct DynamicState {
    double t = 0.0;
    Eigen::VectorXd q;
    Eigen::VectorXd v;
    Eigen::VectorXd g;
};

/// State at the base-year equilibrium of a table: q = x, v = v, g = 0.
inline DynamicState equilibrium_state(const IOTable& table) {
    return {0.0, table.x, table.v, Eigen::VectorXd::Zero(table.size())};
}

/// Places a fresh monetary shock on an equilibrium state. q and v are kept;
/// the state must actually be at rest — re-shocking mid-transient would
/// silently break the conservation bookkeeping downstream.
inline DynamicState apply_shock(const DynamicState& state,
                                const Eigen::VectorXd& g0) {
    if (g0.size() != state.g.size()) {
        throw StructuralError("shock vector size does not match the state");
    }
    if (!g0.allFinite()) throw StructuralError("non-finite shock");
    double rest = state.g.size() ? state.g.cwiseAbs().maxCoeff() : 0.0;
    double scale = std::max(1.0, g0.size() ? g0.cwiseAbs().maxCoeff() : 0.0);
    if (rest > 1e-12 * scale) {
        throw ContractViolationError(
            "shock applied to a non-equilibrium state (|g| = " +
            format_double(rest) + ")");
    }
    DynamicState shocked = state;
    shocked.g = g0;
    return shocked;
}

struct IntegratorOptions {
    double h = 1e-2;       // nominal RK4 step
    double t_max = 1e4;    // time budget, counted from the entry state's t
    double epsilon = 1e-8; // convergence: ||g||_inf <= epsilon*max(1, ||g0||_inf)
    int sample_every = 10; // trajectory stride in accepted steps; 0 = endpoints only
    int max_halvings = 20;
};

struct TrajectorySample {
    double t;
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    Eigen::VectorXd v;
    Eigen::VectorXd g;
};

struct IntegrationResult {
    std::vector<TrajectorySample> trajectory;
    DynamicState final_state;
    bool converged = false;
    long steps = 0;
};

namespace detail {

/// Workspace for derivative evaluations; reused across all RK4 stages of an
/// integration so inner loops stay allocation-free.
struct RhsWorkspace {
    Eigen::VectorXd p, dq, dv, dg, Pdv, Gdq, Gq;
    explicit RhsWorkspace(Eigen::Index n)
        : p(n), dq(n), dv(n), dg(n), Pdv(n), Gdq(n), Gq(n) {}
};

/// Evaluates the derivative field at (q, v, g). Returns the index of the
/// first sector violating admissibility (q <= 0 or derived price <= 0), or
/// -1 on success with dq/dv/dg filled in.
inline Eigen::Index eval_rhs(const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                             const Eigen::VectorXd& g,
                             const BehavioralParams& params,
                             const Operators& ops, RhsWorkspace& w) {
    const auto n = q.size();
    w.p.noalias() = ops.P * v;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(q(i) > 0.0) || !(w.p(i) > 0.0)) return i;
    }
    // dq = delta_q .* g ./ p           — monetary residual in physical units
    // dv = delta_p .* g
    // dg = -(G dq) .* p - (G q) .* (P dv)
    w.dq.array() = params.delta_q.array() * g.array() / w.p.array();
    w.dv.array() = params.delta_p.array() * g.array();
    w.Gdq.noalias() = ops.G * w.dq;
    w.Gq.noalias() = ops.G * q;
    w.Pdv.noalias() = ops.P * w.dv;
    w.dg.array() = -w.Gdq.array() * w.p.array() - w.Gq.array() * w.Pdv.array();
    return -1;
}

} // namespace detail

/// One derivative evaluation of the coupled quantity/price/shock system.
/// Throws AdmissibilityError when the state has a nonpositive quantity or
/// derived price.
inline void rhs(const DynamicState& state, const BehavioralParams& params,
                const Operators& ops, Eigen::VectorXd& dq, Eigen::VectorXd& dv,
                Eigen::VectorXd& dg) {
    detail::RhsWorkspace w(state.q.size());
    auto bad = detail::eval_rhs(state.q, state.v, state.g, params, ops, w);
    if (bad >= 0) {
        throw AdmissibilityError("nonpositive quantity or derived price",
                                 static_cast<int>(bad));
    }
    dq = w.dq;
    dv = w.dv;
    dg = w.dg;
}

/// Fixed-step RK4 toward the post-shock equilibrium. A step whose stages
/// leave the admissible region (q > 0, P*v > 0) is retried at half the
/// length; persistent violation is reported as divergence. Convergence is
/// declared once the residual shock drops below epsilon relative to its
/// entry magnitude; hitting the time budget first yields converged = false.
inline IntegrationResult integrate(const DynamicState& initial,
                                   const BehavioralParams& params,
                                   const Operators& ops,
                                   const IntegratorOptions& opts = {}) {
    const auto n = initial.q.size();
    if (params.delta_q.size() != n || ops.G.rows() != n ||
        initial.v.size() != n || initial.g.size() != n) {
        throw StructuralError("integrate inputs have inconsistent sizes");
    }
    if (!(opts.h > 0.0) || !(opts.t_max > 0.0) || !(opts.epsilon > 0.0)) {
        throw StructuralError("integrator options must be positive");
    }

    detail::RhsWorkspace w(n);
    if (auto bad = detail::eval_rhs(initial.q, initial.v, initial.g, params, ops, w);
        bad >= 0) {
        throw AdmissibilityError("initial state is not admissible",
                                 static_cast<int>(bad));
    }

    const double g_ref = std::max(1.0, n ? initial.g.cwiseAbs().maxCoeff() : 0.0);
    const double t_end = initial.t + opts.t_max;

    IntegrationResult result;
    result.final_state = initial;

    Eigen::VectorXd k1q(n), k1v(n), k1g(n), k2q(n), k2v(n), k2g(n);
    Eigen::VectorXd k3q(n), k3v(n), k3g(n), k4q(n), k4v(n), k4g(n);
    Eigen::VectorXd qs(n), vs(n), gs(n), qn(n), vn(n), gn(n);

    auto sample = [&](const DynamicState& s) {
        w.p.noalias() = ops.P * s.v;
        result.trajectory.push_back({s.t, s.q, w.p, s.v, s.g});
    };
    sample(result.final_state);

    DynamicState& state = result.final_state;
    while (true) {
        if (state.g.cwiseAbs().maxCoeff() <= opts.epsilon * g_ref) {
            result.converged = true;
            break;
        }
        if (state.t >= t_end) break;

        double h = std::min(opts.h, t_end - state.t);
        if (!(h > 0.0)) break;  // budget exhausted to rounding
        int halvings = 0;
        while (true) {
            // Stage derivatives; any inadmissible stage point aborts the
            // attempt and the bad sector index is irrelevant here — only
            // whether a shorter step survives matters.
            bool ok = false;
            do {
                if (detail::eval_rhs(state.q, state.v, state.g, params, ops, w) >= 0) break;
                k1q = w.dq; k1v = w.dv; k1g = w.dg;

                qs = state.q + 0.5 * h * k1q;
                vs = state.v + 0.5 * h * k1v;
                gs = state.g + 0.5 * h * k1g;
                if (detail::eval_rhs(qs, vs, gs, params, ops, w) >= 0) break;
                k2q = w.dq; k2v = w.dv; k2g = w.dg;

                qs = state.q + 0.5 * h * k2q;
                vs = state.v + 0.5 * h * k2v;
                gs = state.g + 0.5 * h * k2g;
                if (detail::eval_rhs(qs, vs, gs, params, ops, w) >= 0) break;
                k3q = w.dq; k3v = w.dv; k3g = w.dg;

                qs = state.q + h * k3q;
                vs = state.v + h * k3v;
                gs = state.g + h * k3g;
                if (detail::eval_rhs(qs, vs, gs, params, ops, w) >= 0) break;
                k4q = w.dq; k4v = w.dv; k4g = w.dg;

                qn = state.q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
                vn = state.v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                gn = state.g + (h / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
                if (detail::eval_rhs(qn, vn, gn, params, ops, w) >= 0) break;
                ok = true;
            } while (false);

            if (ok) break;
            if (++halvings > opts.max_halvings) {
                throw DivergenceError(
                    "step at t = " + format_double(state.t) +
                    " still leaves the admissible region after " +
                    std::to_string(opts.max_halvings) + " halvings");
            }
            h *= 0.5;
        }

        state.q.swap(qn);
        state.v.swap(vn);
        state.g.swap(gn);
        double t_next = state.t + h;
        if (t_next == state.t) {  // h below time resolution; cannot progress
            state.t = t_end;
        } else {
            state.t = t_next;
        }
        ++result.steps;

        if (opts.sample_every > 0 && result.steps % opts.sample_every == 0) {
            sample(state);
        }
    }

    // Endpoint is always recorded (unless the loop never moved).
    if (result.trajectory.back().t != state.t) sample(state);
    return result;
}

/// Long-format trajectory export for panel plots: one row per (t, sector).
inline void write_trajectory_csv(const IntegrationResult& result,
                                 const std::vector<std::string>& labels,
                                 std::ostream& out) {
    out << "t,sector,q,p,v,g,x\n";
    for (const auto& s : result.trajectory) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            out << format_double(s.t) << ',' << labels[i] << ','
                << format_double(s.q(k)) << ',' << format_double(s.p(k)) << ','
                << format_double(s.v(k)) << ',' << format_double(s.g(k)) << ','
                << format_double(s.q(k) * s.p(k)) << "\n";
        }
    }
}

} // namespace iosw
