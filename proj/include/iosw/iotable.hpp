#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "iosw/errors.hpp"
#include "iosw/numeric.hpp"

namespace iosw {

/// A balanced national input-output snapshot.
///
/// Z(i,j) is the monetary flow from sector i to sector j, f the final demand,
/// v the value added and x the total output, all in the same (opaque)
/// currency unit. Row balance sum_j Z(i,j) + f(i) = x(i) and column balance
/// sum_i Z(i,k) + v(k) = x(k) hold within the tolerance the table was
/// constructed with. Instances are immutable after construction and safe to
/// share across threads.
struct IOTable {
    std::vector<std::string> sector_labels;
    std::string country;
    int year = 0;
    Eigen::MatrixXd Z;
    Eigen::VectorXd f;
    Eigen::VectorXd v;
    Eigen::VectorXd x;

    Eigen::Index size() const { return Z.rows(); }

    Eigen::Index index_of(const std::string& label) const {
        auto it = std::find(sector_labels.begin(), sector_labels.end(), label);
        if (it == sector_labels.end()) {
            throw StructuralError("unknown sector label '" + label + "'");
        }
        return static_cast<Eigen::Index>(it - sector_labels.begin());
    }

    static IOTable create(std::vector<std::string> labels, std::string country,
                          int year, Eigen::MatrixXd Z, Eigen::VectorXd f,
                          Eigen::VectorXd v, Eigen::VectorXd x,
                          double rel_tol = 1e-8);
};

/// Per-sector balance residuals, relative to each sector's total output.
struct BalanceReport {
    Eigen::VectorXd row_residual;
    Eigen::VectorXd col_residual;
    double max_row_residual = 0.0;
    double max_col_residual = 0.0;
    bool pass = false;
};

inline BalanceReport validate_balance(const IOTable& table, double rel_tol) {
    const auto n = table.size();
    if (table.Z.cols() != n || table.f.size() != n || table.v.size() != n ||
        table.x.size() != n ||
        static_cast<Eigen::Index>(table.sector_labels.size()) != n) {
        throw StructuralError("table dimensions are inconsistent");
    }
    if (rel_tol < 0) throw StructuralError("rel_tol must be nonnegative");

    BalanceReport report;
    report.row_residual.resize(n);
    report.col_residual.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double scale = std::max(std::abs(table.x(i)), 1e-300);
        report.row_residual(i) =
            std::abs(table.Z.row(i).sum() + table.f(i) - table.x(i)) / scale;
        report.col_residual(i) =
            std::abs(table.Z.col(i).sum() + table.v(i) - table.x(i)) / scale;
    }
    report.max_row_residual = report.row_residual.maxCoeff();
    report.max_col_residual = report.col_residual.maxCoeff();
    report.pass = report.max_row_residual <= rel_tol &&
                  report.max_col_residual <= rel_tol;
    return report;
}

inline IOTable IOTable::create(std::vector<std::string> labels,
                               std::string country, int year, Eigen::MatrixXd Z,
                               Eigen::VectorXd f, Eigen::VectorXd v,
                               Eigen::VectorXd x, double rel_tol) {
    IOTable table;
    table.sector_labels = std::move(labels);
    table.country = std::move(country);
    table.year = year;
    table.Z = std::move(Z);
    table.f = std::move(f);
    table.v = std::move(v);
    table.x = std::move(x);

    const auto n = static_cast<Eigen::Index>(table.sector_labels.size());
    if (n == 0) throw StructuralError("table needs at least one sector");
    if (table.Z.rows() != n || table.Z.cols() != n || table.f.size() != n ||
        table.v.size() != n || table.x.size() != n) {
        throw StructuralError("table dimensions do not match the label count");
    }
    std::set<std::string> unique(table.sector_labels.begin(),
                                 table.sector_labels.end());
    if (static_cast<Eigen::Index>(unique.size()) != n) {
        throw StructuralError("duplicate sector labels");
    }
    if (!table.Z.allFinite() || !table.f.allFinite() || !table.v.allFinite() ||
        !table.x.allFinite()) {
        throw StructuralError("non-finite table entries");
    }
    if ((table.Z.array() < 0.0).any()) {
        throw StructuralError("negative intersectoral flow");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        if (table.x(j) <= 0.0) {
            throw DegenerateSectorError("sector '" + table.sector_labels[j] +
                                        "' has nonpositive total output");
        }
    }
    auto report = validate_balance(table, rel_tol);
    if (!report.pass) {
        throw BalanceError("table is not balanced: max row residual " +
                           format_double(report.max_row_residual) +
                           ", max column residual " +
                           format_double(report.max_col_residual) +
                           " exceed tolerance " + format_double(rel_tol));
    }
    return table;
}

/// A(i,j) = Z(i,j) / x(j): input from sector i per unit of output of sector j
/// under unit base-year prices.
inline Eigen::MatrixXd technical_coefficients(const IOTable& table) {
    const auto n = table.size();
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (table.x(j) <= 0.0) {
            throw DegenerateSectorError("sector '" + table.sector_labels[j] +
                                        "' has zero output");
        }
        A.col(j) = table.Z.col(j) / table.x(j);
        if (A.col(j).sum() >= 1.0) {
            throw HawkinsSimonError(
                "column sum of technical coefficients for sector '" +
                table.sector_labels[j] + "' is " + format_double(A.col(j).sum()) +
                " >= 1");
        }
    }
    return A;
}

/// Rebuild a balanced table from coefficients and a (quantity, price) state:
/// Z(i,j) = A(i,j) p(i) q(j), f = p .* ((I-A) q), x and v close the rows and
/// columns exactly. A state implying materially negative final demand or
/// value added is rejected with InfeasibleStateError; negatives within
/// feasibility_tol (relative, per sector) are treated as roundoff and clamped
/// to zero, with the closure re-derived so the result still balances. The
/// default only forgives rounding of an exactly feasible state; callers
/// rebuilding from an approximately converged trajectory should widen it to
/// match their convergence epsilon.
inline IOTable rebuild_table(const Eigen::MatrixXd& A, const Eigen::VectorXd& q,
                             const Eigen::VectorXd& p,
                             std::vector<std::string> labels,
                             std::string country, int year,
                             double feasibility_tol = 1e-12) {
    const auto n = A.rows();
    if (A.cols() != n || q.size() != n || p.size() != n ||
        static_cast<Eigen::Index>(labels.size()) != n) {
        throw StructuralError("rebuild_table inputs have inconsistent sizes");
    }
    if ((q.array() <= 0.0).any() || (p.array() <= 0.0).any()) {
        throw InfeasibleStateError("rebuild_table requires q > 0 and p > 0");
    }
    if (!(feasibility_tol >= 0.0)) {
        throw StructuralError("feasibility_tol must be nonnegative");
    }

    Eigen::MatrixXd Z(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        Z.col(j) = A.col(j).cwiseProduct(p) * q(j);
    }
    Eigen::VectorXd f = p.cwiseProduct(q - A * q);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (f(i) < -feasibility_tol * std::max(1.0, q(i) * p(i))) {
            throw InfeasibleStateError("negative final demand in sector '" +
                                       labels[i] + "': " + format_double(f(i)));
        }
        if (f(i) < 0.0) f(i) = 0.0;
    }
    Eigen::VectorXd x = Z.rowwise().sum() + f;
    Eigen::VectorXd col_sum = Z.colwise().sum().transpose();
    Eigen::VectorXd v = x - col_sum;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (v(i) < -feasibility_tol * std::max(1.0, x(i))) {
            throw InfeasibleStateError("negative value added in sector '" +
                                       labels[i] + "': " + format_double(v(i)));
        }
        if (v(i) < 0.0) {
            // Zero out the margin and push the shortfall through both
            // identities: x grows to the column total, f covers the row.
            f(i) -= v(i);
            x(i) -= v(i);
            v(i) = 0.0;
        }
    }
    return IOTable::create(std::move(labels), std::move(country), year,
                           std::move(Z), std::move(f), std::move(v),
                           std::move(x), 1e-10);
}

/// Canonical single-table CSV: header comment, one row per sector
/// (label, Z row, f, x), then a final value-added row padded with two
/// empty fields. Numbers render shortest-round-trip.
inline void write_canonical_csv(const IOTable& table, std::ostream& out) {
    const auto n = table.size();
    out << "# country=" << table.country << " year=" << table.year
        << " n=" << n << "\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        out << table.sector_labels[i];
        for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_double(table.Z(i, j));
        out << ',' << format_double(table.f(i)) << ',' << format_double(table.x(i))
            << "\n";
    }
    out << 'v';
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_double(table.v(j));
    out << ",,\n";
}

/// Cross-country flow container assembled from WIOD-style long data.
/// Row/column indices are country-major: index = country * n_sectors + sector.
struct WorldTable {
    std::vector<std::string> countries;
    std::vector<std::string> sector_labels;
    Eigen::MatrixXd flows;         // (n*m) x (n*m)
    Eigen::MatrixXd final_demand;  // (n*m) x m, by destination country
    Eigen::VectorXd value_added;   // n*m

    Eigen::Index n_sectors() const {
        return static_cast<Eigen::Index>(sector_labels.size());
    }
    Eigen::Index n_countries() const {
        return static_cast<Eigen::Index>(countries.size());
    }
    Eigen::Index row(Eigen::Index country, Eigen::Index sector) const {
        return country * n_sectors() + sector;
    }
    Eigen::Index country_index(const std::string& code) const {
        auto it = std::find(countries.begin(), countries.end(), code);
        if (it == countries.end()) {
            throw StructuralError("unknown country code '" + code + "'");
        }
        return static_cast<Eigen::Index>(it - countries.begin());
    }
};

/// Global balance of a world table: per (country, sector), total outflows
/// (flows + final demand) must match total inflows (flows + value added).
inline void validate_world_balance(const WorldTable& world, double rel_tol) {
    const auto rows = world.flows.rows();
    if (world.flows.cols() != rows ||
        world.final_demand.rows() != rows ||
        world.final_demand.cols() != world.n_countries() ||
        world.value_added.size() != rows ||
        rows != world.n_countries() * world.n_sectors()) {
        throw StructuralError("world table dimensions are inconsistent");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
        double outflow = world.flows.row(r).sum() + world.final_demand.row(r).sum();
        double inflow = world.flows.col(r).sum() + world.value_added(r);
        double scale = std::max({std::abs(outflow), std::abs(inflow), 1.0});
        if (std::abs(outflow - inflow) / scale > rel_tol) {
            auto c = r / world.n_sectors();
            auto s = r % world.n_sectors();
            throw BalanceError(
                "world table unbalanced for " + world.countries[c] + "/" +
                world.sector_labels[s] + ": outflow " + format_double(outflow) +
                " vs inflow " + format_double(inflow));
        }
    }
}

struct NationalExtraction {
    IOTable table;
    std::vector<std::string> dropped_sectors;
};

/// Close a national table out of a world table: the domestic block becomes Z,
/// exports (intermediate and final) fold into final demand, imports into
/// value added. Sectors with zero activity are dropped and reported.
inline NationalExtraction national_from_world(const WorldTable& world,
                                              const std::string& country) {
    const auto c = world.country_index(country);
    const auto n = world.n_sectors();
    const auto m = world.n_countries();

    Eigen::MatrixXd Z(n, n);
    Eigen::VectorXd f(n), v(n), x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ri = world.row(c, i);
        for (Eigen::Index j = 0; j < n; ++j) Z(i, j) = world.flows(ri, world.row(c, j));

        double exports = 0.0;
        for (Eigen::Index cc = 0; cc < m; ++cc) {
            if (cc == c) continue;
            for (Eigen::Index j = 0; j < n; ++j) exports += world.flows(ri, world.row(cc, j));
            exports += world.final_demand(ri, cc);
        }
        f(i) = world.final_demand(ri, c) + exports;

        double imports = 0.0;
        for (Eigen::Index cc = 0; cc < m; ++cc) {
            if (cc == c) continue;
            for (Eigen::Index k = 0; k < n; ++k) imports += world.flows(world.row(cc, k), ri);
        }
        v(i) = world.value_added(ri) + imports;
        x(i) = Z.row(i).sum() + f(i);
    }

    // Zero-output sectors are removed rather than padded with epsilons;
    // padding would poison the conditioning of the coefficient matrix.
    std::vector<Eigen::Index> keep;
    std::vector<std::string> dropped;
    for (Eigen::Index i = 0; i < n; ++i) {
        double activity = std::abs(x(i)) + Z.row(i).cwiseAbs().sum() +
                          Z.col(i).cwiseAbs().sum() + std::abs(f(i)) + std::abs(v(i));
        if (activity == 0.0) {
            dropped.push_back(world.sector_labels[i]);
        } else {
            keep.push_back(i);
        }
    }

    const auto k = static_cast<Eigen::Index>(keep.size());
    if (k == 0) throw DegenerateSectorError("country '" + country + "' has no active sectors");

    std::vector<std::string> labels(keep.size());
    Eigen::MatrixXd Zk(k, k);
    Eigen::VectorXd fk(k), vk(k), xk(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        labels[a] = world.sector_labels[keep[a]];
        fk(a) = f(keep[a]);
        vk(a) = v(keep[a]);
        xk(a) = x(keep[a]);
        for (Eigen::Index b = 0; b < k; ++b) Zk(a, b) = Z(keep[a], keep[b]);
    }

    NationalExtraction result;
    result.table = IOTable::create(std::move(labels), country, 0, std::move(Zk),
                                   std::move(fk), std::move(vk), std::move(xk),
                                   1e-6);
    result.dropped_sectors = std::move(dropped);
    return result;
}

/// Restrict a table to the given labels (in the given order). Sectors being
/// removed must be inactive: removing a sector that still carries flows would
/// silently unbalance the rest of the economy.
inline IOTable restrict_to_sectors(const IOTable& table,
                                   const std::vector<std::string>& labels) {
    std::vector<Eigen::Index> keep;
    keep.reserve(labels.size());
    for (const auto& label : labels) keep.push_back(table.index_of(label));

    std::set<Eigen::Index> kept(keep.begin(), keep.end());
    double scale = table.x.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < table.size(); ++i) {
        if (kept.count(i)) continue;
        double activity = table.Z.row(i).cwiseAbs().sum() +
                          table.Z.col(i).cwiseAbs().sum() + std::abs(table.f(i)) +
                          std::abs(table.v(i));
        if (activity > 1e-9 * scale) {
            throw StructuralError("cannot drop active sector '" +
                                  table.sector_labels[i] + "'");
        }
    }

    const auto k = static_cast<Eigen::Index>(keep.size());
    Eigen::MatrixXd Z(k, k);
    Eigen::VectorXd f(k), v(k), x(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        f(a) = table.f(keep[a]);
        v(a) = table.v(keep[a]);
        x(a) = table.x(keep[a]);
        for (Eigen::Index b = 0; b < k; ++b) Z(a, b) = table.Z(keep[a], keep[b]);
    }
    return IOTable::create(labels, table.country, table.year, std::move(Z),
                           std::move(f), std::move(v), std::move(x), 1e-6);
}

} // namespace iosw
