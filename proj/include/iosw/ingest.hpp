#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "iosw/errors.hpp"
#include "iosw/iotable.hpp"
#include "iosw/numeric.hpp"
#include "iosw/random.hpp"

namespace iosw {

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

namespace detail {

/// Lines of `text`, without terminators; a '\r' before the newline is
/// dropped so CRLF input parses like LF input.
inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = (nl == std::string_view::npos)
                                    ? text.substr(pos)
                                    : text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

} // namespace detail

/// Reads the canonical single-table format written by write_canonical_csv:
/// a `# country=XX year=YYYY n=N` header, N sector rows `label,Z...,f,x`,
/// and a closing value-added row `v,...,,`. Any deviation from that grid is
/// rejected with a line/field diagnostic.
inline IOTable parse_canonical_csv(std::string_view text) {
    auto lines = detail::split_lines(text);
    if (lines.empty()) throw StructuralError("empty table file");

    // Header: exactly `# country=XX year=YYYY n=N`.
    {
        auto header = lines[0];
        if (header.substr(0, 2) != "# ") {
            throw ParseError("header must start with '# '", 1);
        }
    }
    std::string country;
    int year = 0;
    long n_declared = 0;
    {
        std::vector<std::string_view> tokens;
        std::string_view rest = lines[0].substr(2);
        while (!rest.empty()) {
            auto sp = rest.find(' ');
            tokens.push_back(rest.substr(0, sp));
            if (sp == std::string_view::npos) break;
            rest.remove_prefix(sp + 1);
        }
        if (tokens.size() != 3 || tokens[0].substr(0, 8) != "country=" ||
            tokens[1].substr(0, 5) != "year=" || tokens[2].substr(0, 2) != "n=") {
            throw ParseError(
                "malformed header, expected '# country=XX year=YYYY n=N'", 1);
        }
        country = std::string(tokens[0].substr(8));
        if (country.empty()) throw ParseError("empty country code", 1);
        year = static_cast<int>(parse_long_strict(tokens[1].substr(5), 1, 2));
        n_declared = parse_long_strict(tokens[2].substr(2), 1, 3);
        if (n_declared < 1) throw ParseError("sector count must be >= 1", 1);
    }
    const auto n = static_cast<Eigen::Index>(n_declared);

    if (static_cast<long>(lines.size()) != n_declared + 2) {
        throw ParseError("expected " + std::to_string(n_declared + 2) +
                             " lines for n=" + std::to_string(n_declared) +
                             ", found " + std::to_string(lines.size()),
                         lines.size());
    }

    std::vector<std::string> labels;
    Eigen::MatrixXd Z(n, n);
    Eigen::VectorXd f(n), v(n), x(n);

    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t line_no = static_cast<std::size_t>(i) + 2;
        auto fields = split_csv_line(lines[line_no - 1]);
        if (static_cast<Eigen::Index>(fields.size()) != n + 3) {
            throw ParseError("expected " + std::to_string(n + 3) +
                                 " fields, found " + std::to_string(fields.size()),
                             line_no);
        }
        if (fields[0].empty()) throw ParseError("empty sector label", line_no, 1);
        labels.emplace_back(fields[0]);
        for (Eigen::Index j = 0; j < n; ++j) {
            Z(i, j) = parse_double_strict(fields[j + 1], line_no,
                                          static_cast<std::size_t>(j) + 2);
        }
        f(i) = parse_double_strict(fields[n + 1], line_no,
                                   static_cast<std::size_t>(n) + 2);
        x(i) = parse_double_strict(fields[n + 2], line_no,
                                   static_cast<std::size_t>(n) + 3);
    }

    {
        const std::size_t line_no = static_cast<std::size_t>(n) + 2;
        auto fields = split_csv_line(lines[line_no - 1]);
        if (static_cast<Eigen::Index>(fields.size()) != n + 3) {
            throw ParseError("expected " + std::to_string(n + 3) +
                                 " fields, found " + std::to_string(fields.size()),
                             line_no);
        }
        if (fields[0] != "v") {
            throw ParseError("final row must be labelled 'v'", line_no, 1);
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            v(j) = parse_double_strict(fields[j + 1], line_no,
                                       static_cast<std::size_t>(j) + 2);
        }
        if (!fields[n + 1].empty() || !fields[n + 2].empty()) {
            throw ParseError("value-added row must end with two empty fields",
                             line_no, static_cast<std::size_t>(n) + 2);
        }
    }

    // Balance is checked before full construction so the diagnostic can name
    // the offending sector rather than just quote residual norms.
    IOTable provisional{labels, country, year, Z, f, v, x};
    auto report = validate_balance(provisional, 1e-6);
    if (!report.pass) {
        Eigen::Index worst = 0;
        double worst_res = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double r = std::max(report.row_residual(i), report.col_residual(i));
            if (r > worst_res) {
                worst_res = r;
                worst = i;
            }
        }
        throw BalanceError("table does not balance at sector '" + labels[worst] +
                           "': relative residual " + format_double(worst_res));
    }
    return IOTable::create(std::move(labels), std::move(country), year,
                           std::move(Z), std::move(f), std::move(v),
                           std::move(x), 1e-6);
}

inline IOTable load_canonical_csv(const std::string& path) {
    try {
        return parse_canonical_csv(read_text_file(path));
    } catch (ParseError&) {
        throw;
    } catch (Error& e) {
        throw Error(path + ": " + e.what());
    }
}

/// Reads WIOD-style long-format flow data:
///
///   origin_country,origin_sector,dest_country,dest_sector_or_final_use,value
///
/// One row per cell. Rows whose origin sector is the reserved label "VA"
/// carry value added for (dest_country, dest_sector). A destination that is
/// not a known sector is a final-use category; all categories are summed
/// into final demand and their totals kept for provenance. Every country
/// must expose the identical sector set.
struct WorldLongResult {
    WorldTable world;
    std::map<std::string, double> final_use_totals;
};

inline WorldLongResult parse_world_long(std::string_view text) {
    auto lines = detail::split_lines(text);
    if (lines.empty()) throw StructuralError("empty world-table file");

    {
        auto fields = split_csv_line(lines[0]);
        if (fields.size() != 5) {
            throw ParseError("expected 5 header fields", 1);
        }
        auto want = [&](std::size_t k, std::string_view a, std::string_view b = {}) {
            auto got = detail::trim(fields[k]);
            if (got != a && (b.empty() || got != b)) {
                throw ParseError("unexpected header field '" + std::string(got) +
                                     "', expected '" + std::string(a) + "'",
                                 1, k + 1);
            }
        };
        want(0, "origin_country");
        want(1, "origin_sector");
        want(2, "dest_country");
        want(3, "dest_sector_or_final_use", "dest_sector");
        want(4, "value");
    }

    struct Row {
        std::string oc, os, dc, ds;
        double value;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::map<std::string, std::set<std::string>> sectors_by_country;
    std::map<std::string, std::size_t> first_seen;  // duplicate-cell detection

    for (std::size_t ln = 2; ln <= lines.size(); ++ln) {
        auto raw = lines[ln - 1];
        if (detail::trim(raw).empty()) continue;
        auto fields = split_csv_line(raw);
        if (fields.size() != 5) {
            throw ParseError("expected 5 fields, found " +
                                 std::to_string(fields.size()),
                             ln);
        }
        Row row;
        row.oc = std::string(detail::trim(fields[0]));
        row.os = std::string(detail::trim(fields[1]));
        row.dc = std::string(detail::trim(fields[2]));
        row.ds = std::string(detail::trim(fields[3]));
        row.value = parse_double_strict(detail::trim(fields[4]), ln, 5);
        row.line = ln;
        if (row.oc.empty() || row.os.empty() || row.dc.empty() || row.ds.empty()) {
            throw ParseError("empty identifier field", ln);
        }

        std::string key = row.oc + '\x1f' + row.os + '\x1f' + row.dc + '\x1f' + row.ds;
        auto [it, inserted] = first_seen.emplace(std::move(key), ln);
        if (!inserted) {
            throw ParseError("duplicate cell (" + row.oc + "," + row.os + "," +
                                 row.dc + "," + row.ds +
                                 "), first seen at line " +
                                 std::to_string(it->second),
                             ln);
        }
        if (row.os != "VA") sectors_by_country[row.oc].insert(row.os);
        rows.push_back(std::move(row));
    }
    if (sectors_by_country.empty()) {
        throw StructuralError("world-table file contains no flow rows");
    }

    const auto& reference = sectors_by_country.begin()->second;
    for (const auto& [cc, sectors] : sectors_by_country) {
        if (sectors != reference) {
            throw StructuralError(
                "inconsistent sector sets: country '" + cc + "' has " +
                std::to_string(sectors.size()) + " sectors, country '" +
                sectors_by_country.begin()->first + "' has " +
                std::to_string(reference.size()));
        }
    }

    WorldLongResult result;
    WorldTable& world = result.world;
    for (const auto& [cc, _] : sectors_by_country) world.countries.push_back(cc);
    world.sector_labels.assign(reference.begin(), reference.end());

    const auto n = world.n_sectors();
    const auto m = world.n_countries();
    world.flows = Eigen::MatrixXd::Zero(n * m, n * m);
    world.final_demand = Eigen::MatrixXd::Zero(n * m, m);
    world.value_added = Eigen::VectorXd::Zero(n * m);

    std::set<std::string> sector_set(reference.begin(), reference.end());
    auto country_at = [&](const std::string& code, std::size_t ln) {
        auto it = std::find(world.countries.begin(), world.countries.end(), code);
        if (it == world.countries.end()) {
            throw ParseError("country '" + code + "' never appears as an origin",
                             ln);
        }
        return static_cast<Eigen::Index>(it - world.countries.begin());
    };
    auto sector_at = [&](const std::string& label) {
        auto it = std::find(world.sector_labels.begin(),
                            world.sector_labels.end(), label);
        return static_cast<Eigen::Index>(it - world.sector_labels.begin());
    };

    for (const auto& row : rows) {
        auto dc = country_at(row.dc, row.line);
        if (row.os == "VA") {
            if (!sector_set.count(row.ds)) {
                throw ParseError(
                    "value added assigned to unknown sector '" + row.ds + "'",
                    row.line);
            }
            world.value_added(world.row(dc, sector_at(row.ds))) += row.value;
            continue;
        }
        auto oc = country_at(row.oc, row.line);
        auto origin = world.row(oc, sector_at(row.os));
        if (sector_set.count(row.ds)) {
            world.flows(origin, world.row(dc, sector_at(row.ds))) += row.value;
        } else {
            world.final_demand(origin, dc) += row.value;
            result.final_use_totals[row.ds] += row.value;
        }
    }

    validate_world_balance(world, 1e-6);
    return result;
}

/// Recipe for a random balanced economy used throughout the test suite.
struct SyntheticSpec {
    Eigen::Index n = 4;
    double density = 0.5;          // probability of each intersectoral link
    std::uint64_t seed = 0;
    std::pair<double, double> value_added_share_range{0.2, 0.6};
    std::string country = "SYN";
    int year = 2000;
};

/// Draws a random economy: per column, a value-added share s_j and a sparse
/// nonnegative coefficient column normalised to sum 1 - s_j; final demand in
/// [1, 10); output solves x = A x + f. The table is balanced by construction
/// and productive by the column-sum bound. Deterministic per seed.
inline IOTable generate_synthetic(const SyntheticSpec& spec) {
    const auto n = spec.n;
    if (n < 1) throw StructuralError("sector count must be >= 1");
    if (spec.density < 0.0 || spec.density > 1.0) {
        throw StructuralError("density must lie in [0, 1]");
    }
    auto [lo, hi] = spec.value_added_share_range;
    if (!(0.0 < lo) || !(lo <= hi) || !(hi < 1.0)) {
        throw StructuralError("value-added share range must sit inside (0, 1)");
    }

    Rng rng(spec.seed);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double share = rng.uniform(lo, hi);
        Eigen::VectorXd weights = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (rng.bernoulli(spec.density)) weights(i) = 0.1 + rng.uniform01();
        }
        double total = weights.sum();
        // Normalize the weights first: with a single nonzero weight the
        // column sum then lands on exactly 1 - share.
        if (total > 0.0) A.col(j) = (weights / total) * (1.0 - share);
    }

    Eigen::VectorXd f_draw(n);
    for (Eigen::Index i = 0; i < n; ++i) f_draw(i) = rng.uniform(1.0, 10.0);

    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(n, n) - A;
    Eigen::VectorXd x = Eigen::PartialPivLU<Eigen::MatrixXd>(G).solve(f_draw);
    // Re-derive f from the solved x so row balance holds at rounding level
    // rather than at LU-residual level.
    Eigen::VectorXd f = x - A * x;
    if ((f.array() <= 0.0).any() || (x.array() <= 0.0).any()) {
        throw StructuralError("synthetic draw produced a nonpositive economy");
    }

    Eigen::MatrixXd Z(n, n);
    for (Eigen::Index j = 0; j < n; ++j) Z.col(j) = A.col(j) * x(j);
    Eigen::VectorXd v = x - Z.colwise().sum().transpose();

    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back("s" + std::to_string(i + 1));

    return IOTable::create(std::move(labels), spec.country, spec.year,
                           std::move(Z), std::move(f), std::move(v),
                           std::move(x), 1e-10);
}

} // namespace iosw
