#include "doctest.h"

#include "cli.hpp"

#include "pamimpute/data.hpp"

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using pamimpute::cli::run;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("pamimpute_cli_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const std::string& file, const std::string& text) { std::ofstream(file) << text; }

}  // namespace

TEST_CASE("simulate then impute with every method") {
    TempDir dir;
    REQUIRE(run({"simulate", "--model", "1", "--p", "10", "--n", "30", "--frac", "0.1", "--seed",
                 "3", "--out", dir / "d.csv", "--truth-out", dir / "t.csv", "--mask-out",
                 dir / "m.csv"}) == 0);
    const auto data = pamimpute::load_csv(dir / "d.csv");
    CHECK(data.missing_count() == 30);
    const auto mask = pamimpute::load_csv(dir / "m.csv");
    CHECK(mask.values().sum() == 30.0);

    for (const std::string method : {"misspa", "misspalasso", "knn", "softimpute"}) {
        CAPTURE(method);
        const std::string out = dir / ("o_" + method + ".csv");
        std::vector<std::string> args{"impute", "--method", method, "--truth", dir / "t.csv",
                                      dir / "d.csv", out};
        if (method == "knn") args.insert(args.end(), {"--k", "3"});
        REQUIRE(run(args) == 0);
        const std::string text = slurp(out);
        CHECK(text.find("NA") == std::string::npos);
        const auto imputed = pamimpute::load_csv(out);
        CHECK(imputed.fully_observed());
        for (pamimpute::Index i = 0; i < data.rows(); ++i)
            for (pamimpute::Index j = 0; j < data.cols(); ++j)
                if (data.observed(i, j))
                    CHECK(std::abs(imputed(i, j) - data(i, j)) <=
                          1e-10 * std::max(1.0, std::abs(data(i, j))));
    }
}

TEST_CASE("impute side outputs") {
    TempDir dir;
    REQUIRE(run({"simulate", "--model", "4", "--p", "8", "--n", "30", "--frac", "0.1", "--out",
                 dir / "d.csv", "--truth-out", dir / "t.csv"}) == 0);
    REQUIRE(run({"impute", dir / "d.csv", dir / "o.csv", "--truth", dir / "t.csv", "--grid-size",
                 "8", "--path-report", dir / "path.csv", "--t-hat", dir / "t_hat.csv", "--trace",
                 dir / "trace.tsv", "--coef-summary", dir / "coef.csv"}) == 0);
    const std::string path = slurp(dir / "path.csv");
    CHECK(path.rfind("lambda,cycles,nnz_coefficients,nrmse,seconds\n", 0) == 0);
    CHECK(std::count(path.begin(), path.end(), '\n') == 9);
    CHECK(path.find("NA") == std::string::npos);
    const auto t_hat = pamimpute::load_csv(dir / "t_hat.csv");
    CHECK(t_hat.rows() == 8);
    CHECK(t_hat.cols() == 8);
    CHECK(slurp(dir / "trace.tsv").rfind("cycle\tloglik\trel_change\n", 0) == 0);
    CHECK(slurp(dir / "coef.csv").rfind("pattern,rows,observed,missing,nnz,lambda\n", 0) == 0);

    REQUIRE(run({"impute", "--method", "misspa", "--trace", dir / "trace2.tsv", dir / "d.csv",
                 dir / "o2.csv"}) == 0);
    CHECK(slurp(dir / "trace2.tsv").find("NA") == std::string::npos);
}

TEST_CASE("headers and custom missing tokens survive") {
    TempDir dir;
    spit(dir / "in.csv", "a,b,c\n1,2,3\n2,?,1\n3,5,?\n4,4,4\n5,7,2\n0,1,1\n");
    REQUIRE(run({"impute", "--method", "knn", "--k", "2", "--header", "--na", "?", dir / "in.csv",
                 dir / "out.csv"}) == 0);
    const std::string text = slurp(dir / "out.csv");
    CHECK(text.rfind("a,b,c\n1,2,3\n", 0) == 0);
    CHECK(text.find('?') == std::string::npos);
}

TEST_CASE("error exits") {
    TempDir dir;
    spit(dir / "bad_row.csv", "1,2\nNA,NA\n3,4\n5,7\n");
    CHECK(run({"impute", "--method", "misspa", dir / "bad_row.csv", dir / "o.csv"}) == 3);
    CHECK_FALSE(fs::exists(dir / "o.csv"));

    spit(dir / "text.csv", "1,2\nx,3\n");
    CHECK(run({"impute", dir / "text.csv", dir / "o.csv"}) == 3);
    CHECK(run({"impute", dir / "missing_file.csv", dir / "o.csv"}) == 3);

    CHECK(run({"simulate", "--model", "3", "--p", "54", "--out", dir / "x.csv"}) == 5);
    CHECK_FALSE(fs::exists(dir / "x.csv"));

    CHECK(run({}) == 2);
    CHECK(run({"impute"}) == 2);
    CHECK(run({"impute", "--method", "magic", "a", "b"}) == 2);
    CHECK(run({"simulate", "--p", "ten", "--out", dir / "x.csv"}) == 2);
    spit(dir / "ok.csv", "1,2\nNA,3\n2,2\n4,1\n");
    CHECK(run({"impute", "--lambda", "-3", dir / "ok.csv", dir / "o.csv"}) == 2);
    CHECK(run({"impute", "--method", "knn", "--t-hat", dir / "t.csv", dir / "ok.csv",
               dir / "o.csv"}) == 2);
    CHECK(run({"impute", "--method", "knn", "--k", "9", dir / "ok.csv", dir / "o.csv"}) == 5);

    // duplicate columns make MissPA's regression singular
    spit(dir / "dup.csv", "1,1,0.5\n2,2,NA\n3,3,0.1\n4,4,NA\n");
    CHECK(run({"impute", "--method", "misspa", "--no-standardize", dir / "dup.csv",
               dir / "o.csv"}) == 4);
    CHECK_FALSE(fs::exists(dir / "o.csv"));
}

TEST_CASE("benchmark, trace and timing commands") {
    TempDir dir;
    REQUIRE(run({"benchmark", "--model", "4", "--p", "10", "--n", "20", "--frac", "0.05,0.1",
                 "--runs", "3", "--methods", "misspalasso,knn", "--lambda-points", "5", "--k-max",
                 "4", "--out", dir / "b.csv"}) == 0);
    const std::string bench = slurp(dir / "b.csv");
    CHECK(bench.rfind("model,p,frac,method,mean_nrmse,se", 0) == 0);
    CHECK(std::count(bench.begin(), bench.end(), '\n') == 5);

    REQUIRE(run({"trace", "--p", "5", "--n", "30", "--frac", "0.2", "--out-prefix", dir / "tr"}) == 0);
    CHECK(slurp(dir / "tr_misspa.tsv").rfind("cycle\tloglik\trel_change\n1\t", 0) == 0);
    CHECK(slurp(dir / "tr_em.tsv").rfind("cycle\tloglik\trel_change\n1\t", 0) == 0);

    REQUIRE(run({"timing", "--sizes", "5,10", "--n", "20", "--reps", "2", "--grid", "4", "--out",
                 dir / "time.csv", "--summary", dir / "sum.csv"}) == 0);
    const std::string timing = slurp(dir / "time.csv");
    CHECK(timing.rfind("p,method,run,seconds\n5,misspalasso,1,", 0) == 0);
    CHECK(std::count(timing.begin(), timing.end(), '\n') == 5);
    CHECK(slurp(dir / "sum.csv").rfind("p,method,min,median,max\n", 0) == 0);
}

TEST_CASE("repeated commands give identical files") {
    TempDir dir;
    auto twice = [&](std::vector<std::string> args, const std::string& file) {
        REQUIRE(run(args) == 0);
        const std::string first = slurp(file);
        REQUIRE(run(args) == 0);
        CHECK(first == slurp(file));
        CHECK_FALSE(first.empty());
    };
    twice({"simulate", "--model", "2", "--p", "8", "--n", "25", "--frac", "0.1", "--seed", "9",
           "--out", dir / "d.csv"},
          dir / "d.csv");
    twice({"impute", dir / "d.csv", dir / "o.csv"}, dir / "o.csv");
    twice({"impute", "--method", "softimpute", dir / "d.csv", dir / "s.csv"}, dir / "s.csv");
    twice({"benchmark", "--model", "4", "--p", "6", "--n", "20", "--runs", "2", "--lambda-points",
           "4", "--k-max", "3", "--threads", "2", "--out", dir / "b.csv"},
          dir / "b.csv");
}
