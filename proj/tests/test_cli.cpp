#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "resset/cli.hpp"
#include "resset/config.hpp"
#include "resset/errors.hpp"

using namespace resset;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("resset_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path only_run_dir(const fs::path& root) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) dirs.push_back(e.path());
    REQUIRE(dirs.size() == 1);
    return dirs.front();
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    REQUIRE(it != header.end());
    return static_cast<std::size_t>(it - header.begin());
}

// Small enough that compare and train finish in a few seconds.
const std::vector<std::string> kToy{"bands=6", "height=12", "width=12", "M=4", "epochs=2"};

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& extra) {
    base.insert(base.end(), extra.begin(), extra.end());
    return base;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("parsing, comments and overrides") {
    Config c;
    c.declare("alpha", "1");
    c.declare("name", "x");
    c.declare("list", "");
    c.merge_text("# comment\n\n alpha = 2.5 \nlist = a, b,,c\n");
    CHECK(c.get_real("alpha") == 2.5);
    CHECK(c.get_list("list") == std::vector<std::string>{"a", "b", "c"});
    c.merge_overrides({"name=y"});
    CHECK(c.get_string("name") == "y");
    CHECK_THROWS_AS(c.get_int("alpha"), ConfigError);
    CHECK_THROWS_AS(c.merge_text("beta = 1"), ConfigError);
    CHECK_THROWS_AS(c.merge_text("alpha"), ConfigError);
    CHECK_THROWS_AS(c.merge_overrides({"alpha"}), ConfigError);
    CHECK_THROWS_AS(c.get_bool("name"), ConfigError);
}

TEST_CASE("canonical text and hash") {
    Config a, b;
    a.declare("x", "1");
    a.declare("y", "2");
    b.declare("y", "2");
    b.declare("x", "1");
    CHECK(a.canonical_text() == "x = 1\ny = 2\n");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    b.set("x", "3");
    CHECK(a.hash() != b.hash());
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

}

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"train", "no_such_key=1"}).code == cli::kUsage);
    CHECK(run({"train", "--config", "/nonexistent/file.cfg"}).code == cli::kUsage);
    const auto root = scratch("usage");
    CHECK(run({"rank-audit", "schemes=", "-o", root.string()}).code == cli::kUsage);
    CHECK(run({"rank-audit", "schemes=Seq1D", "-o", root.string()}).code == cli::kUsage);
    CHECK(run({"train", "epochs=-1", "-o", root.string()}).code == cli::kUsage);
    CHECK(run({"--help"}).code == cli::kSuccess);
}

TEST_CASE("print-config shows resolved defaults") {
    const Result r = run({"train", "--print-config", "epochs=7"});
    CHECK(r.code == 0);
    CHECK(r.out.find("epochs = 7\n") != std::string::npos);
    CHECK(r.out.find("lambda = 5e-05\n") != std::string::npos);
    CHECK(r.out.find("beta1 = 0.9\n") != std::string::npos);
    CHECK(r.out.find("beta2 = 0.999\n") != std::string::npos);
}

TEST_CASE("config files and overrides combine") {
    const auto root = scratch("cfgfile");
    fs::create_directories(root);
    const fs::path file = root / "audit.cfg";
    std::ofstream(file) << "# audit\nschemes = Conv3D, ReS3_1D\nseeds = 2\n";
    const Result r = run({"rank-audit", "-c", file.string(), "seeds=3", "-o", (root / "out").string()});
    CHECK(r.code == 0);
    const auto rows = csv_rows(r.out);
    CHECK(rows.size() == 1 + 2 * 3);
    const std::string echoed = slurp(only_run_dir(root / "out") / "config.txt");
    CHECK(echoed.find("seeds = 3\n") != std::string::npos);
    CHECK(echoed.find("schemes = Conv3D, ReS3_1D\n") != std::string::npos);
}

TEST_CASE("rank audit bounds column") {
    const auto root = scratch("audit");
    const Result r =
        run({"rank-audit", "schemes=Conv3D,ReS3_1D,Par1D2D", "M=4", "C=4", "seeds=10", "-o", root.string()});
    CHECK(r.code == 0);
    const auto rows = csv_rows(r.out);
    REQUIRE(rows.size() == 31);
    const auto bound = column(rows[0], "predicted_bound");
    const auto achieved = column(rows[0], "achieved");
    CHECK(rows[1][bound] == "4");
    CHECK(rows[11][bound] == "12");
    CHECK(rows[21][bound] == "8");
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i][achieved] == "true");
    CHECK(fs::exists(only_run_dir(root) / "rank_audit.csv"));

    const Result z = run({"rank-audit", "zero_weights=true", "seeds=2", "-o", root.string()});
    CHECK(z.code == 0);
    const auto zr = csv_rows(z.out);
    const auto measured = column(zr[0], "measured_rank");
    for (std::size_t i = 1; i < zr.size(); ++i) {
        CHECK(zr[i][measured] == "0");
        CHECK(zr[i][achieved] == "false");
    }
}

TEST_CASE("bench reports closed-form counts") {
    const auto root = scratch("bench");
    const Result r = run({"bench", "schemes=Conv3D,ReS3_1D,ReS3_1Dx3", "M=8", "C=8", "bands=8",
                          "height=16", "width=16", "-o", root.string()});
    CHECK(r.code == 0);
    const auto rows = csv_rows(r.out);
    const auto params = column(rows[0], "set_params");
    const auto macs = column(rows[0], "macs");
    CHECK(rows[1][macs] == "3538944");
    CHECK(std::stoi(rows[1][params]) == 3 * std::stoi(rows[2][params]));
    CHECK(rows[1][params] == rows[3][params]);
}

TEST_CASE("grad-check passes by default and catches a sign error") {
    const auto root = scratch("grad");
    const std::vector<std::string> quick{"reg_trials=10", "-o", root.string()};
    const Result ok = run(quick);
    CHECK(ok.code == cli::kUsage);  // no subcommand
    CHECK(run(with({"grad-check"}, quick)).code == cli::kSuccess);
    CHECK(run(with({"grad-check", "seed=5"}, quick)).code == cli::kSuccess);
    CHECK(run(with({"grad-check", "inject_wrong_sign=true"}, quick)).code == cli::kCheckFailed);
}

TEST_CASE("train writes reports, spectra and a checkpoint") {
    const auto root = scratch("train");
    const Result r = run(with({"train", "-o", root.string()}, kToy));
    CHECK(r.code == 0);
    const fs::path dir = only_run_dir(root);
    for (const char* f : {"config.txt", "report.json", "losses.csv", "spectrum.csv", "timing.txt",
                          "checkpoint/manifest.txt"})
        CHECK(fs::exists(dir / f));
    CHECK(r.out.find("final: MPSNR") != std::string::npos);

    const Result spec = run(with({"spectrum", "checkpoint=" + (dir / "checkpoint").string(), "-o",
                                  (root / "s").string()}, {"bands=6", "height=12", "width=12"}));
    CHECK(spec.code == 0);
    CHECK(spec.out.find("checkpoint:ReS3_1D") != std::string::npos);
}

TEST_CASE("train with zero epochs reports only the initial state") {
    const auto root = scratch("train0");
    const Result r = run(with({"train", "-o", root.string()}, with(kToy, {"epochs=0"})));
    CHECK(r.code == 0);
    const std::string report = slurp(only_run_dir(root) / "report.json");
    CHECK(report.find("\"epochs\": []") != std::string::npos);
}

TEST_CASE("repeated train runs produce identical files") {
    const auto a = scratch("repeat_a"), b = scratch("repeat_b");
    REQUIRE(run(with({"train", "-o", a.string()}, kToy)).code == 0);
    REQUIRE(run(with({"train", "-o", b.string()}, kToy)).code == 0);
    const fs::path da = only_run_dir(a), db = only_run_dir(b);
    CHECK(da.filename() == db.filename());
    for (const char* f : {"config.txt", "report.json", "losses.csv", "spectrum.csv"})
        CHECK(slurp(da / f) == slurp(db / f));
}

TEST_CASE("compare row accounting, order and schema") {
    const auto root = scratch("compare");
    const Result r = run(with({"compare", "seeds=3", "-o", root.string()}, kToy));
    CHECK(r.code == 0);
    const auto rows = csv_rows(r.out);
    REQUIRE(rows.size() == 1 + 15 + 5);
    const auto& h = rows[0];
    const auto kind = column(h, "kind"), bound = column(h, "rank_bound");
    column(h, "res3_best_mpsnr");
    int seeds = 0, aggregates = 0;
    std::vector<std::string> agg_bounds;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i][kind] == "seed") ++seeds;
        if (rows[i][kind] == "aggregate") {
            ++aggregates;
            agg_bounds.push_back(rows[i][bound]);
        }
    }
    CHECK(seeds == 15);
    CHECK(aggregates == 5);
    CHECK(agg_bounds == std::vector<std::string>{"4", "4", "4", "8", "12"});
    CHECK(fs::exists(only_run_dir(root) / "spectra.csv"));
}

TEST_CASE("compare output does not depend on the worker count") {
    const auto a = scratch("threads_a"), b = scratch("threads_b");
    const auto args = with(kToy, {"schemes=Conv3D,ReS3_1D", "seeds=2"});
    setenv("RESSET_THREADS", "1", 1);
    REQUIRE(run(with({"compare", "-o", a.string()}, args)).code == 0);
    setenv("RESSET_THREADS", "3", 1);
    REQUIRE(run(with({"compare", "-o", b.string()}, args)).code == 0);
    setenv("RESSET_THREADS", "zero", 1);
    CHECK(run(with({"compare", "-o", b.string()}, args)).code == cli::kUsage);
    unsetenv("RESSET_THREADS");
    CHECK(slurp(only_run_dir(a) / "compare.csv") == slurp(only_run_dir(b) / "compare.csv"));
}

TEST_CASE("compare keeps going when one scheme fails") {
    const auto root = scratch("compare_fail");
    // An enormous learning rate drives the losses to infinity for every cell.
    const Result r = run(with({"compare", "schemes=Conv3D,ReS3_1D", "seeds=1", "learning_rate=1e300",
                               "epochs=3", "-o", root.string()}, {"bands=6", "height=12", "width=12", "M=4"}));
    CHECK(r.code != 0);
    CHECK(r.out.find("error") != std::string::npos);
    CHECK(csv_rows(r.out).size() == 1 + 2 + 2);
}

}
