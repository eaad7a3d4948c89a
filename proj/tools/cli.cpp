#include "cli.hpp"

#include "pamimpute/baselines.hpp"
#include "pamimpute/error.hpp"
#include "pamimpute/evaluation.hpp"
#include "pamimpute/misspa.hpp"
#include "pamimpute/misspa_lasso.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace pamimpute::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : Error {
    explicit UsageError(const std::string& m) : Error(ErrorKind::usage, m) {}
};

/// Files are rendered in memory and only renamed into place once every
/// output of a command is ready, so a failure never leaves partial results.
class Outputs {
public:
    std::ostream& add(const std::string& path) {
        files_.push_back({path, std::make_unique<std::ostringstream>()});
        return *files_.back().second;
    }

    void commit() {
        std::vector<std::pair<fs::path, fs::path>> staged;
        try {
            for (auto& [path, buf] : files_) {
                fs::path target(path);
                fs::path tmp = target;
                tmp += ".tmp";
                std::ofstream out(tmp, std::ios::binary);
                out << buf->str();
                out.close();
                staged.emplace_back(tmp, target);
                if (!out) throw Error(ErrorKind::data, "cannot write " + path);
            }
            for (auto& [tmp, target] : staged) fs::rename(tmp, target);
        } catch (const fs::filesystem_error& e) {
            cleanup(staged);
            throw Error(ErrorKind::data, e.what());
        } catch (...) {
            cleanup(staged);
            throw;
        }
    }

private:
    static void cleanup(const std::vector<std::pair<fs::path, fs::path>>& staged) {
        std::error_code ec;
        for (const auto& s : staged) fs::remove(s.first, ec);
    }

    std::vector<std::pair<std::string, std::unique_ptr<std::ostringstream>>> files_;
};

struct ImputeArgs {
    std::string input, output;
    std::string method = "misspalasso";
    std::string lambda = "auto";
    std::string truth;
    int k = 10;
    std::string knn_axis = "rows";
    std::string variant = "m_step";
    int max_cycles = 500;
    double tol = 1e-5;
    int grid_size = 30;
    double grid_ratio = 1e-3;
    std::string t_hat, path_report, trace, coef_summary;
};

struct SimulateArgs {
    int model = 1;
    long p = 50, n = 50;
    std::uint64_t seed = 1;
    double frac = 0.0;
    std::string out, truth_out, mask_out, sigma_out;
};

struct BenchmarkArgs {
    int model = 1;
    long p = 50, n = 50;
    std::vector<double> fracs{0.05};
    int runs = 20;
    std::uint64_t seed = 1;
    std::vector<std::string> methods{"misspalasso", "knn", "softimpute"};
    int lambda_points = 30;
    double lambda_ratio = 1e-3;
    int k_max = 15;
    std::string out;
};

struct TraceArgs {
    std::string input;
    long p = 10, n = 62;
    double ar = 0.9, frac = 0.23;
    std::uint64_t seed = 1;
    std::string variant = "m_step";
    int max_cycles = 500;
    double tol = 1e-5;
    std::string prefix = "trace";
};

struct TimingArgs {
    std::vector<long> sizes{10, 50, 100};
    long n = 50;
    double frac = 0.1;
    int reps = 10, grid = 30;
    std::uint64_t seed = 1;
    std::string out, summary;
};

struct Common {
    std::string na = "NA";
    bool header = false;
    bool no_standardize = false;
    int threads = 1;
};

MStepVariant parse_variant(const std::string& s) {
    if (s == "m_step") return MStepVariant::m_step;
    if (s == "m_step2") return MStepVariant::m_step2;
    throw UsageError("variant must be m_step or m_step2");
}

std::optional<double> parse_lambda(const std::string& s) {
    if (s == "auto") return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !(v >= 0.0))
        throw UsageError("--lambda must be 'auto' or a non-negative number, got '" + s + "'");
    return v;
}

/// Index of the smallest score, or the last point (least shrinkage) when
/// there is no truth to score against.
std::size_t pick(const std::vector<std::optional<double>>& scores) {
    std::size_t best = scores.size() - 1;
    if (!scores.front()) return best;
    best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (*scores[i] < *scores[best]) best = i;
    return best;
}

int cmd_impute(const ImputeArgs& a, const Common& c) {
    const CsvOptions csv{c.na, c.header, false};
    const DataMatrix raw = load_csv(a.input, csv);
    std::optional<Matrix> truth;
    if (!a.truth.empty()) {
        const DataMatrix t = load_csv(a.truth, csv);
        if (!t.fully_observed()) throw ShapeError("truth file must be fully observed");
        if (t.rows() != raw.rows() || t.cols() != raw.cols())
            throw ShapeError("truth file shape differs from the input");
        truth = t.values();
    }
    const bool lasso = a.method == "misspalasso";
    const bool em = a.method == "misspa";
    if (!a.t_hat.empty() && !lasso && !em) throw UsageError("--t-hat needs misspa or misspalasso");
    if (!a.trace.empty() && !lasso && !em) throw UsageError("--trace needs misspa or misspalasso");
    if ((!a.path_report.empty() || !a.coef_summary.empty()) && !lasso)
        throw UsageError("--path-report and --coef-summary need misspalasso");
    const auto lambda = parse_lambda(a.lambda);
    if (!a.path_report.empty() && lambda) throw UsageError("--path-report needs --lambda auto");

    DataMatrix input = raw;
    std::optional<ColumnStats> stats;
    if (!c.no_standardize) {
        auto [z, s] = standardize(raw);
        input = std::move(z);
        stats = std::move(s);
    }
    const Mask deleted = !raw.mask();
    auto to_original = [&](const DataMatrix& imputed) {
        return stats ? destandardize(imputed, *stats) : imputed;
    };
    auto score = [&](const DataMatrix& imputed) -> std::optional<double> {
        if (!truth) return std::nullopt;
        return nrmse(*truth, to_original(imputed).values(), deleted);
    };

    Outputs out;
    DataMatrix imputed = input;
    if (em) {
        MisspaOptions o;
        o.variant = parse_variant(a.variant);
        o.max_cycles = a.max_cycles;
        o.rel_tol = a.tol;
        o.trace_loglik = !a.trace.empty();
        RunResult r = run_misspa(input, o);
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
        if (!a.t_hat.empty()) write_matrix_csv(out.add(a.t_hat), r.t_hat);
        if (!a.trace.empty()) write_trace_tsv(out.add(a.trace), r.trace);
        imputed = std::move(r.imputed);
    } else if (lasso) {
        LassoOptions o;
        o.max_cycles = a.max_cycles;
        o.rel_tol = a.tol;
        o.grid_size = a.grid_size;
        o.grid_ratio = a.grid_ratio;
        std::optional<LassoResult> chosen;
        if (lambda) {
            o.lambda = *lambda;
            chosen = run_misspalasso(input, o);
        } else {
            PathResult path = run_lambda_path(input, o);
            std::vector<std::optional<double>> scores;
            for (auto& pt : path.points) scores.push_back(pt.nrmse = score(pt.result.imputed));
            const std::size_t best = pick(scores);
            if (truth) path.best = best;
            if (!a.path_report.empty()) write_path_csv(out.add(a.path_report), path);
            chosen = std::move(path.points[best].result);
        }
        if (!a.t_hat.empty()) write_matrix_csv(out.add(a.t_hat), chosen->t_hat);
        if (!a.trace.empty()) write_trace_tsv(out.add(a.trace), chosen->trace);
        if (!a.coef_summary.empty()) {
            const PatternSet ps = build_patterns(input);
            std::ostream& s = out.add(a.coef_summary);
            s << "pattern,rows,observed,missing,nnz,lambda\n";
            for (std::size_t k = 0; k < ps.size(); ++k) {
                s << k + 1 << ',' << ps[k].rows.size() << ',' << ps[k].observed.size() << ','
                  << ps[k].missing.size() << ',' << chosen->coeffs.blocks[k].nonZeros() << ','
                  << format_number(chosen->lambda) << '\n';
            }
        }
        imputed = std::move(chosen->imputed);
    } else if (a.method == "knn") {
        KnnOptions o;
        o.k_neighbors = a.k;
        if (a.knn_axis == "rows") o.neighbors = KnnAxis::rows;
        else if (a.knn_axis == "columns") o.neighbors = KnnAxis::columns;
        else throw UsageError("--knn-axis must be rows or columns");
        imputed = knn_impute(input, o).imputed;
    } else if (a.method == "softimpute") {
        SoftImputeOptions o;
        o.max_iters = a.max_cycles;
        o.rel_tol = a.tol;
        if (lambda) {
            o.lambda = *lambda;
            imputed = soft_impute(input, o).imputed;
        } else {
            Matrix warm = Matrix::Zero(input.rows(), input.cols());
            std::vector<DataMatrix> fits;
            std::vector<std::optional<double>> scores;
            for (double l : lambda_grid(top_singular_value(input), a.grid_size, a.grid_ratio)) {
                o.lambda = l;
                auto r = soft_impute(input, o, &warm);
                warm = r.z;
                scores.push_back(score(r.imputed));
                fits.push_back(std::move(r.imputed));
            }
            imputed = std::move(fits[pick(scores)]);
        }
    } else {
        throw UsageError("unknown method '" + a.method + "'");
    }

    // observed cells are copied from the input, never round-tripped
    const DataMatrix result = raw.with_imputations(to_original(imputed).values());
    write_csv(out.add(a.output), result, c.na);
    out.commit();
    return 0;
}

int cmd_simulate(const SimulateArgs& a, const Common& c) {
    const Simulated sim = gen_model({a.model, a.p, a.n, a.seed});
    const Deletion del = delete_mcar(sim.data, a.frac, mix_seed({a.seed, 1}));
    Outputs out;
    write_csv(out.add(a.out), del.data, c.na);
    if (!a.truth_out.empty()) write_matrix_csv(out.add(a.truth_out), sim.data.values());
    if (!a.mask_out.empty()) write_mask_csv(out.add(a.mask_out), del.deleted);
    if (!a.sigma_out.empty()) write_matrix_csv(out.add(a.sigma_out), sim.sigma);
    out.commit();
    return 0;
}

int cmd_benchmark(const BenchmarkArgs& a, const Common& c) {
    BenchmarkConfig cfg;
    cfg.spec = {a.model, a.p, a.n, a.seed};
    cfg.missing_fracs = a.fracs;
    cfg.runs = a.runs;
    cfg.methods.clear();
    for (const auto& m : a.methods) cfg.methods.push_back(parse_method(m));
    cfg.grids.lambda_points = a.lambda_points;
    cfg.grids.lambda_ratio = a.lambda_ratio;
    if (a.k_max < 1) throw UsageError("--k-max must be at least 1");
    cfg.grids.k_values.clear();
    for (int k = 1; k <= a.k_max; ++k) cfg.grids.k_values.push_back(k);
    cfg.threads = c.threads;
    cfg.standardize = !c.no_standardize;

    const auto rows = run_benchmark(cfg);
    if (a.out.empty()) {
        write_benchmark_csv(std::cout, rows);
        return 0;
    }
    Outputs out;
    write_benchmark_csv(out.add(a.out), rows);
    out.commit();
    return 0;
}

int cmd_trace(const TraceArgs& a, const Common& c) {
    DataMatrix data = [&] {
        if (!a.input.empty()) return load_csv(a.input, {c.na, c.header, false});
        const Matrix x = sample_mvn(ar_covariance(a.p, a.ar), a.n, a.seed);
        return delete_mcar(DataMatrix::complete(x), a.frac, mix_seed({a.seed, 1})).data;
    }();
    MisspaOptions o;
    o.variant = parse_variant(a.variant);
    o.max_cycles = a.max_cycles;
    o.rel_tol = a.tol;
    const PairedTrace t = loglik_trace(data, o);

    Outputs out;
    write_trace_tsv(out.add(a.prefix + "_misspa.tsv"), t.misspa.trace);
    write_trace_tsv(out.add(a.prefix + "_em.tsv"), t.em.trace);
    out.commit();
    return 0;
}

int cmd_timing(const TimingArgs& a, const Common&) {
    TimingConfig cfg;
    cfg.sizes.assign(a.sizes.begin(), a.sizes.end());
    cfg.n = a.n;
    cfg.frac = a.frac;
    cfg.reps = a.reps;
    cfg.grid_size = a.grid;
    cfg.seed = a.seed;
    const auto records = timing_run(cfg);
    Outputs out;
    write_timing_csv(out.add(a.out), records);
    if (!a.summary.empty()) write_timing_summary_csv(out.add(a.summary), summarize_timing(records));
    out.commit();
    return 0;
}

void report(ErrorKind kind, const std::string& message) {
    std::string flat = message;
    for (char& ch : flat)
        if (ch == '\n') ch = ' ';
    std::cerr << "error: kind=" << kind_name(kind) << " code=" << exit_code(kind)
              << " message=" << flat << std::endl;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Missing-value imputation for Gaussian data matrices", "pamimpute"};
    app.require_subcommand(1);
    Common common;
    auto add_common = [&](CLI::App* sub, bool io) {
        if (io) {
            sub->add_option("--na", common.na, "Token marking missing cells")->capture_default_str();
            sub->add_flag("--header", common.header, "Input files start with a header row");
        }
    };

    ImputeArgs ia;
    auto* imp = app.add_subcommand("impute", "Impute the missing cells of a CSV file");
    imp->add_option("input", ia.input, "Input CSV")->required();
    imp->add_option("output", ia.output, "Output CSV")->required();
    imp->add_option("--method", ia.method)
        ->check(CLI::IsMember({"misspa", "misspalasso", "knn", "softimpute"}))
        ->capture_default_str();
    imp->add_option("--lambda", ia.lambda, "Penalty, or 'auto' for a path")->capture_default_str();
    imp->add_option("--truth", ia.truth, "Complete CSV used to tune 'auto' by NRMSE");
    imp->add_option("--k", ia.k, "KNN neighbors")->capture_default_str();
    imp->add_option("--knn-axis", ia.knn_axis, "rows or columns")->capture_default_str();
    imp->add_option("--variant", ia.variant, "m_step or m_step2")->capture_default_str();
    imp->add_option("--max-cycles", ia.max_cycles)->capture_default_str();
    imp->add_option("--tol", ia.tol)->capture_default_str();
    imp->add_option("--grid-size", ia.grid_size)->capture_default_str();
    imp->add_option("--grid-ratio", ia.grid_ratio)->capture_default_str();
    imp->add_option("--t-hat", ia.t_hat, "Write the completed sufficient statistic");
    imp->add_option("--path-report", ia.path_report, "Write the per-lambda path report");
    imp->add_option("--trace", ia.trace, "Write the per-cycle trace TSV");
    imp->add_option("--coef-summary", ia.coef_summary, "Write per-pattern coefficient counts");
    imp->add_flag("--no-standardize", common.no_standardize, "Impute on the raw scale");
    add_common(imp, true);

    SimulateArgs sa;
    auto* sim = app.add_subcommand("simulate", "Draw a data set from a simulation model");
    sim->add_option("--model", sa.model)->capture_default_str();
    sim->add_option("--p", sa.p)->capture_default_str();
    sim->add_option("--n", sa.n)->capture_default_str();
    sim->add_option("--seed", sa.seed)->capture_default_str();
    sim->add_option("--frac", sa.frac, "Fraction of cells deleted")->capture_default_str();
    sim->add_option("--out", sa.out)->required();
    sim->add_option("--truth-out", sa.truth_out);
    sim->add_option("--mask-out", sa.mask_out);
    sim->add_option("--sigma-out", sa.sigma_out);
    sim->add_option("--na", common.na)->capture_default_str();

    BenchmarkArgs ba;
    auto* bench = app.add_subcommand("benchmark", "Simulation benchmark (mean NRMSE per method)");
    bench->add_option("--model", ba.model)->capture_default_str();
    bench->add_option("--p", ba.p)->capture_default_str();
    bench->add_option("--n", ba.n)->capture_default_str();
    bench->add_option("--frac", ba.fracs)->delimiter(',')->capture_default_str();
    bench->add_option("--runs", ba.runs)->capture_default_str();
    bench->add_option("--seed", ba.seed)->capture_default_str();
    bench->add_option("--methods", ba.methods)->delimiter(',')->capture_default_str();
    bench->add_option("--lambda-points", ba.lambda_points)->capture_default_str();
    bench->add_option("--lambda-ratio", ba.lambda_ratio)->capture_default_str();
    bench->add_option("--k-max", ba.k_max)->capture_default_str();
    bench->add_option("--threads", common.threads)->capture_default_str();
    bench->add_flag("--no-standardize", common.no_standardize);
    bench->add_option("--out", ba.out, "Output CSV (default stdout)");

    TraceArgs ta;
    auto* tr = app.add_subcommand("trace", "Paired log-likelihood traces of MissPA and EM");
    tr->add_option("--input", ta.input, "CSV with missing cells (otherwise simulated)");
    tr->add_option("--p", ta.p)->capture_default_str();
    tr->add_option("--n", ta.n)->capture_default_str();
    tr->add_option("--ar", ta.ar)->capture_default_str();
    tr->add_option("--frac", ta.frac)->capture_default_str();
    tr->add_option("--seed", ta.seed)->capture_default_str();
    tr->add_option("--variant", ta.variant)->capture_default_str();
    tr->add_option("--max-cycles", ta.max_cycles)->capture_default_str();
    tr->add_option("--tol", ta.tol)->capture_default_str();
    tr->add_option("--out-prefix", ta.prefix)->capture_default_str();
    add_common(tr, true);

    TimingArgs ti;
    auto* tim = app.add_subcommand("timing", "Wall-clock time of full lambda paths");
    tim->add_option("--sizes", ti.sizes)->delimiter(',')->capture_default_str();
    tim->add_option("--n", ti.n)->capture_default_str();
    tim->add_option("--frac", ti.frac)->capture_default_str();
    tim->add_option("--reps", ti.reps)->capture_default_str();
    tim->add_option("--grid", ti.grid)->capture_default_str();
    tim->add_option("--seed", ti.seed)->capture_default_str();
    tim->add_option("--out", ti.out)->required();
    tim->add_option("--summary", ti.summary, "Write min/median/max per size");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report(ErrorKind::usage, e.what());
        return exit_code(ErrorKind::usage);
    }

    try {
        if (imp->parsed()) return cmd_impute(ia, common);
        if (sim->parsed()) return cmd_simulate(sa, common);
        if (bench->parsed()) return cmd_benchmark(ba, common);
        if (tr->parsed()) return cmd_trace(ta, common);
        return cmd_timing(ti, common);
    } catch (const Error& e) {
        report(e.kind(), e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: kind=internal code=1 message=" << e.what() << std::endl;
        return 1;
    }
}

}  // namespace pamimpute::cli
