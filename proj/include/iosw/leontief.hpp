#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "iosw/errors.hpp"
#include "iosw/iotable.hpp"
#include "iosw/numeric.hpp"

namespace iosw {

/// Static operators derived from a base-year table. With base-year prices
/// normalised to one, quantities and monetary flows coincide at t = 0:
///
///   A  technical coefficients, A(i,j) = Z(i,j)/x(j)
///   G  = I - A, so that f = G x at the base year
///   L  = (I - A)^{-1}, the total-requirements matrix
///   P  = (I - A^T)^{-1} diag(x0)^{-1}, mapping a value-added vector to unit
///      prices; P v0 = 1 is the classical price identity under column balance.
struct Operators {
    Eigen::MatrixXd A;
    Eigen::MatrixXd G;
    Eigen::MatrixXd L;
    Eigen::MatrixXd P;
    Eigen::VectorXd x0;
    double price_identity_error = 0.0;  // ||P v0 - 1||_inf at build time
};

namespace detail {

/// Hawkins-Simon viability. Column sums of A below one are sufficient and
/// cover every table whose sectors all create value. The determinant sweep
/// handles the boundary cases (a zero value-added sector is still viable as
/// long as every leading principal minor of I - A stays positive).
inline void check_hawkins_simon(const Eigen::MatrixXd& A) {
    const auto n = A.rows();
    bool colsums_ok = true;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (A.col(j).sum() >= 1.0) {
            colsums_ok = false;
            break;
        }
    }
    if (colsums_ok) return;

    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(n, n) - A;
    for (Eigen::Index k = 1; k <= n; ++k) {
        double minor = G.topLeftCorner(k, k).determinant();
        if (minor <= 0.0) {
            throw HawkinsSimonError(
                "economy is not productive: leading principal minor " +
                std::to_string(k) + " of I - A is " + format_double(minor));
        }
    }
}

} // namespace detail

inline Operators build_operators(const Eigen::MatrixXd& A,
                                 const Eigen::VectorXd& x0,
                                 const Eigen::VectorXd& v0) {
    const auto n = A.rows();
    if (A.cols() != n || x0.size() != n || v0.size() != n) {
        throw StructuralError("operator inputs have inconsistent sizes");
    }
    if (!A.allFinite() || (A.array() < 0.0).any()) {
        throw StructuralError("technical coefficients must be finite and >= 0");
    }
    if ((x0.array() <= 0.0).any()) {
        throw DegenerateSectorError("base-year output must be positive");
    }
    detail::check_hawkins_simon(A);

    Operators ops;
    ops.A = A;
    ops.x0 = x0;
    ops.G = Eigen::MatrixXd::Identity(n, n) - A;

    // Dense LU with solves; the inverses are materialized because both L and
    // P are applied many thousands of times per trajectory at n <= 56.
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ops.G);
    ops.L = lu.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_t(ops.G.transpose().eval());
    Eigen::MatrixXd Xinv = x0.cwiseInverse().asDiagonal();
    ops.P = lu_t.solve(Xinv);

    ops.price_identity_error =
        (ops.P * v0 - Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff();
    if (ops.price_identity_error > 1e-6) {
        throw InconsistentInputsError(
            "base-year prices derived from v0 deviate from 1 by " +
            format_double(ops.price_identity_error) +
            "; A, x0 and v0 do not describe the same balanced economy");
    }
    return ops;
}

inline Operators build_operators(const IOTable& table) {
    const auto n = table.size();
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (table.x(j) <= 0.0) {
            throw DegenerateSectorError("sector '" + table.sector_labels[j] +
                                        "' has zero output");
        }
        A.col(j) = table.Z.col(j) / table.x(j);
    }
    return build_operators(A, table.x, table.v);
}

/// Static quantity model: extra output needed to serve extra final demand.
inline Eigen::VectorXd quantity_model(const Operators& ops,
                                      const Eigen::VectorXd& delta_f) {
    if (delta_f.size() != ops.L.rows()) {
        throw StructuralError("final demand size does not match the operators");
    }
    return ops.L * delta_f;
}

/// Static price model: unit prices supported by value added v.
inline Eigen::VectorXd price_model(const Operators& ops,
                                   const Eigen::VectorXd& v) {
    if (v.size() != ops.P.rows()) {
        throw StructuralError("value added size does not match the operators");
    }
    return ops.P * v;
}

} // namespace iosw
