#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "iosw/iosw.hpp"

namespace testutil {

// Three-sector supply chain i -> j -> k with unit base-year prices:
//   Z(i,j) = 4, Z(j,k) = 5, f = (0, 2, 7), x = (4, 7, 7), v = (4, 3, 2).
// Small enough that every derived quantity has a closed form.
inline iosw::IOTable chain3() {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 3);
    Z(0, 1) = 4.0;
    Z(1, 2) = 5.0;
    Eigen::VectorXd f(3), v(3), x(3);
    f << 0.0, 2.0, 7.0;
    v << 4.0, 3.0, 2.0;
    x << 4.0, 7.0, 7.0;
    return iosw::IOTable::create({"i", "j", "k"}, "FIG", 2000, Z, f, v, x);
}

// Five-sector linear chain c1 -> c2 -> ... -> c5 with randomized positive
// numbers. Kept well inside the Hawkins-Simon region: Z entries in [1, 3],
// final demand in [4, 10], so every column sum of A stays below 3/5.
inline iosw::IOTable chain5(std::uint64_t seed) {
    iosw::Rng rng(seed);
    const int n = 5;
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd f(n), x(n), v(n);
    for (int i = 0; i + 1 < n; ++i) Z(i, i + 1) = rng.uniform(1.0, 3.0);
    for (int i = 0; i < n; ++i) f(i) = rng.uniform(4.0, 10.0);
    for (int i = 0; i < n; ++i) {
        double sales = (i + 1 < n) ? Z(i, i + 1) : 0.0;
        x(i) = sales + f(i);
    }
    for (int j = 0; j < n; ++j) {
        double purchases = (j > 0) ? Z(j - 1, j) : 0.0;
        v(j) = x(j) - purchases;
    }
    return iosw::IOTable::create({"c1", "c2", "c3", "c4", "c5"}, "CHN", 2000, Z,
                                 f, v, x);
}

// Two sectors where b runs on a's input alone: v_b = 0, so the column sum of
// A hits 1.0 exactly and operator construction must fall back to the minor
// test.
inline iosw::IOTable zero_va_table() {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(2, 2);
    Z(0, 1) = 4.0;
    Eigen::VectorXd f(2), v(2), x(2);
    f << 0.0, 4.0;
    v << 4.0, 0.0;
    x << 4.0, 4.0;
    return iosw::IOTable::create({"a", "b"}, "ZVA", 2000, Z, f, v, x);
}

// A dense admissible random economy via the library's own generator.
inline iosw::IOTable synthetic(std::uint64_t seed, Eigen::Index n,
                               double density = 0.6) {
    iosw::SyntheticSpec spec;
    spec.n = n;
    spec.density = density;
    spec.seed = seed;
    return iosw::generate_synthetic(spec);
}

inline std::string slurp(const std::filesystem::path& p) {
    return iosw::read_text_file(p.string());
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Scratch directory under the system temp root, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        auto base = std::filesystem::temp_directory_path();
        path = base / ("iosw_test_" + std::to_string(::getpid()) + "_" +
                       std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const {
        return path / name;
    }
};

inline std::string cli_bin() { return IOSW_CLI_BIN; }
inline std::filesystem::path fixtures_dir() { return IOSW_FIXTURES_DIR; }

// Runs the CLI with the given arguments, capturing exit code and both output
// streams into files under `dir`.
struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline CliResult run_cli(const TempDir& dir, const std::string& args,
                         const std::string& env_prefix = "") {
    auto out_path = dir / "stdout.txt";
    auto err_path = dir / "stderr.txt";
    std::string cmd = env_prefix + cli_bin() + " " + args + " > " +
                      out_path.string() + " 2> " + err_path.string();
    int rc = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    res.out = slurp(out_path);
    res.err = slurp(err_path);
    return res;
}

inline bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

} // namespace testutil
