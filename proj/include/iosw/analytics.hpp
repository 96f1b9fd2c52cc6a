#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "iosw/calibration.hpp"
#include "iosw/errors.hpp"
#include "iosw/numeric.hpp"

namespace iosw {

/// Projection of raw adjustment speeds onto the unit circle: only the
/// per-sector ratio delta_q/delta_p is identifiable, so it is reported as
/// delta_q_tilde = (2/pi) arctan(delta_q/delta_p) in [0, 1], with
/// delta_q_tilde + delta_p_tilde = 1. Values above one half mean the sector
/// prefers quantity over price adjustment.
struct ProjectedParams {
    Eigen::VectorXd delta_q_tilde;
    Eigen::VectorXd delta_p_tilde;
};

inline ProjectedParams project(const Eigen::VectorXd& delta_q,
                               const Eigen::VectorXd& delta_p) {
    const auto n = delta_q.size();
    if (delta_p.size() != n) {
        throw StructuralError("projection inputs have different sizes");
    }
    constexpr double two_over_pi = 2.0 * std::numbers::inv_pi;
    ProjectedParams out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        double dq = delta_q(i), dp = delta_p(i);
        if (!(dq >= 0.0) || !(dp >= 0.0)) {
            throw StructuralError("adjustment speeds must be >= 0");
        }
        if (dq == 0.0 && dp == 0.0) {
            throw UndefinedDirectionError(
                "sector " + std::to_string(i) +
                " has no adjustment direction (delta_q = delta_p = 0)");
        }
        // dq/dp overflows to +inf when dp = 0, and atan(inf) = pi/2 is
        // exactly the intended limit, so no special casing is needed.  The
        // clamp only trims the last-ulp rounding of 2/pi * atan(...), keeping
        // the values inside [0, 1] for downstream aggregation.
        out.delta_q_tilde(i) = std::clamp(two_over_pi * std::atan(dq / dp), 0.0, 1.0);
        out.delta_p_tilde(i) = std::clamp(two_over_pi * std::atan(dp / dq), 0.0, 1.0);
    }
    return out;
}

/// Per-sector distribution of projected Δq over an ensemble's retained runs.
struct EnsembleSummary {
    std::vector<std::string> sectors;
    Eigen::VectorXd median;
    Eigen::VectorXd iqr_low;   // 25th percentile
    Eigen::VectorXd iqr_high;  // 75th percentile
    Eigen::VectorXd min;
    Eigen::VectorXd max;
    int runs = 0;
};

inline EnsembleSummary aggregate_ensemble(const std::vector<FitResult>& results,
                                          std::vector<std::string> sectors) {
    if (results.empty()) throw StructuralError("empty ensemble");
    const auto n = results.front().params.delta_q.size();
    if (static_cast<Eigen::Index>(sectors.size()) != n) {
        throw StructuralError("sector label count does not match params");
    }

    EnsembleSummary summary;
    summary.sectors = std::move(sectors);
    summary.median.resize(n);
    summary.iqr_low.resize(n);
    summary.iqr_high.resize(n);
    summary.min.resize(n);
    summary.max.resize(n);
    summary.runs = static_cast<int>(results.size());

    std::vector<ProjectedParams> projected;
    projected.reserve(results.size());
    for (const auto& r : results) {
        projected.push_back(project(r.params.delta_q, r.params.delta_p));
    }

    std::vector<double> column(results.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < projected.size(); ++r) {
            column[r] = projected[r].delta_q_tilde(i);
        }
        summary.median(i) = quantile(column, 0.5);
        summary.iqr_low(i) = quantile(column, 0.25);
        summary.iqr_high(i) = quantile(column, 0.75);
        summary.min(i) = *std::min_element(column.begin(), column.end());
        summary.max(i) = *std::max_element(column.begin(), column.end());
    }
    return summary;
}

/// One (country, sector, year) cell of the fitted panel: the ensemble median
/// of Δq-tilde plus enough provenance to judge the cell's reliability.
struct PanelCell {
    double median = std::numeric_limits<double>::quiet_NaN();
    double iqr_low = std::numeric_limits<double>::quiet_NaN();
    double iqr_high = std::numeric_limits<double>::quiet_NaN();
    int runs = 0;
    double best_residual = std::numeric_limits<double>::quiet_NaN();
};

struct PanelCube {
    std::map<std::tuple<std::string, std::string, int>, PanelCell> cells;
    std::set<std::string> countries;
    std::set<std::string> sectors;
    std::set<int> years;

    void add(const std::string& country, const std::string& sector, int year,
             PanelCell cell) {
        auto key = std::make_tuple(country, sector, year);
        if (!cells.emplace(key, cell).second) {
            throw InconsistentInputsError("duplicate panel cell (" + country +
                                          ", " + sector + ", " +
                                          std::to_string(year) + ")");
        }
        countries.insert(country);
        sectors.insert(sector);
        years.insert(year);
    }

    const PanelCell* find(const std::string& country, const std::string& sector,
                          int year) const {
        auto it = cells.find(std::make_tuple(country, sector, year));
        return it == cells.end() ? nullptr : &it->second;
    }
};

/// Folds a set of per-(country, year-pair) ensembles into a cube; each cell
/// is keyed by the base year of its transition.
inline PanelCube build_cube(const std::vector<EnsembleFile>& ensembles) {
    PanelCube cube;
    for (const auto& file : ensembles) {
        if (file.results.empty()) continue;
        auto summary = aggregate_ensemble(file.results, file.sectors);
        double best = file.results.front().residual;
        for (const auto& r : file.results) best = std::min(best, r.residual);
        for (std::size_t i = 0; i < file.sectors.size(); ++i) {
            auto k = static_cast<Eigen::Index>(i);
            cube.add(file.country, file.sectors[i], file.y1,
                     PanelCell{summary.median(k), summary.iqr_low(k),
                               summary.iqr_high(k), summary.runs, best});
        }
    }
    if (cube.cells.empty()) throw StructuralError("no panel cells to analyze");
    return cube;
}

struct LabeledMatrix {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    Eigen::MatrixXd values;  // NaN encodes a missing cell
};

enum class Axis { country, sector, year };
enum class Reduce { mean, median };

/// Collapses the cube onto a rows x cols matrix, reducing the remaining axis
/// with the requested statistic. Cells with no observations stay missing —
/// absence is never coerced to zero.
inline LabeledMatrix stratify(const PanelCube& cube, Axis rows, Axis cols,
                              Reduce reduce = Reduce::mean) {
    if (rows == cols) throw StructuralError("row and column axes must differ");
    if (cube.cells.empty()) throw StructuralError("empty cube");

    auto labels_of = [&](Axis a) {
        std::vector<std::string> out;
        switch (a) {
            case Axis::country:
                out.assign(cube.countries.begin(), cube.countries.end());
                break;
            case Axis::sector:
                out.assign(cube.sectors.begin(), cube.sectors.end());
                break;
            case Axis::year:
                for (int y : cube.years) out.push_back(std::to_string(y));
                break;
        }
        return out;
    };

    LabeledMatrix m;
    m.row_labels = labels_of(rows);
    m.col_labels = labels_of(cols);
    m.values.setConstant(static_cast<Eigen::Index>(m.row_labels.size()),
                         static_cast<Eigen::Index>(m.col_labels.size()),
                         std::numeric_limits<double>::quiet_NaN());

    auto key_part = [](const std::tuple<std::string, std::string, int>& key,
                       Axis a) {
        switch (a) {
            case Axis::country: return std::get<0>(key);
            case Axis::sector: return std::get<1>(key);
            case Axis::year: return std::to_string(std::get<2>(key));
        }
        return std::string();
    };

    std::map<std::pair<std::string, std::string>, std::vector<double>> buckets;
    for (const auto& [key, cell] : cube.cells) {
        if (std::isnan(cell.median)) continue;
        buckets[{key_part(key, rows), key_part(key, cols)}].push_back(cell.median);
    }

    for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
        for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
            auto it = buckets.find({m.row_labels[r], m.col_labels[c]});
            if (it == buckets.end()) continue;
            auto& vals = it->second;
            double out;
            if (reduce == Reduce::median) {
                out = median(vals);
            } else {
                double sum = 0.0;
                for (double x : vals) sum += x;
                out = sum / static_cast<double>(vals.size());
            }
            m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = out;
        }
    }
    return m;
}

/// Pearson correlations between the rows (or columns) of a labeled matrix,
/// using pairwise-complete observations. Pairs with fewer than two shared
/// observations or a constant series stay missing; the diagonal is one by
/// convention.
inline LabeledMatrix correlation_matrix(const LabeledMatrix& input,
                                        bool along_rows = true) {
    Eigen::MatrixXd data =
        along_rows ? input.values : Eigen::MatrixXd(input.values.transpose());
    const auto& labels = along_rows ? input.row_labels : input.col_labels;
    const auto k = data.rows();
    const auto n_obs = data.cols();

    LabeledMatrix out;
    out.row_labels = labels;
    out.col_labels = labels;
    out.values.setConstant(k, k, std::numeric_limits<double>::quiet_NaN());

    for (Eigen::Index a = 0; a < k; ++a) {
        out.values(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < k; ++b) {
            std::vector<double> xs, ys;
            for (Eigen::Index j = 0; j < n_obs; ++j) {
                if (std::isnan(data(a, j)) || std::isnan(data(b, j))) continue;
                xs.push_back(data(a, j));
                ys.push_back(data(b, j));
            }
            if (xs.size() < 2) continue;
            // A constant series has no defined correlation. Test the raw
            // values, not the centred moments: the mean of n equal values
            // need not round back to that value, which would leave a
            // spurious nonzero variance.
            auto constant = [](const std::vector<double>& s) {
                for (double value : s) {
                    if (value != s.front()) return false;
                }
                return true;
            };
            if (constant(xs) || constant(ys)) continue;
            double mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                mx += xs[i];
                my += ys[i];
            }
            mx /= static_cast<double>(xs.size());
            my /= static_cast<double>(ys.size());
            double sxy = 0.0, sxx = 0.0, syy = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                sxy += (xs[i] - mx) * (ys[i] - my);
                sxx += (xs[i] - mx) * (xs[i] - mx);
                syy += (ys[i] - my) * (ys[i] - my);
            }
            if (sxx <= 0.0 || syy <= 0.0) continue;  // constant series
            double corr = sxy / std::sqrt(sxx * syy);
            out.values(a, b) = corr;
            out.values(b, a) = corr;
        }
    }
    return out;
}

/// Square/rectangular matrix CSV with row and column labels; missing cells
/// are empty fields.
inline void write_matrix_csv(const LabeledMatrix& m, std::ostream& out) {
    for (const auto& label : m.col_labels) out << ',' << label;
    out << "\n";
    for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
        out << m.row_labels[r];
        for (std::size_t c = 0; c < m.col_labels.size(); ++c) {
            double x = m.values(static_cast<Eigen::Index>(r),
                                static_cast<Eigen::Index>(c));
            out << ',';
            if (!std::isnan(x)) out << format_double(x);
        }
        out << "\n";
    }
}

/// Tidy per-cell export of the cube.
inline void write_tidy_csv(const PanelCube& cube, std::ostream& out) {
    out << "country,sector,year,delta_q_tilde_median,iqr_low,iqr_high\n";
    for (const auto& [key, cell] : cube.cells) {
        out << std::get<0>(key) << ',' << std::get<1>(key) << ','
            << std::get<2>(key) << ',' << format_double(cell.median) << ','
            << format_double(cell.iqr_low) << ',' << format_double(cell.iqr_high)
            << "\n";
    }
}

} // namespace iosw
