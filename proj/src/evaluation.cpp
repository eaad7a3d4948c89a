#include "pamimpute/evaluation.hpp"

#include "pamimpute/baselines.hpp"
#include "pamimpute/error.hpp"
#include "pamimpute/misspa_lasso.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <thread>

namespace pamimpute {

double nrmse(const Matrix& truth, const Matrix& imputed, const Mask& deleted) {
    if (truth.rows() != imputed.rows() || truth.cols() != imputed.cols() ||
        truth.rows() != deleted.rows() || truth.cols() != deleted.cols())
        throw DimensionError("nrmse arguments differ in shape");
    const Index count = deleted.count();
    if (count < 2) {
        throw MetricUndefinedError("NRMSE needs at least 2 deleted cells, got " +
                                   std::to_string(count));
    }
    double sum = 0.0;
    for (Index j = 0; j < truth.cols(); ++j)
        for (Index i = 0; i < truth.rows(); ++i)
            if (deleted(i, j)) sum += truth(i, j);
    const double mean = sum / static_cast<double>(count);

    double sq_err = 0.0;
    double sq_dev = 0.0;
    for (Index j = 0; j < truth.cols(); ++j) {
        for (Index i = 0; i < truth.rows(); ++i) {
            if (!deleted(i, j)) continue;
            const double e = truth(i, j) - imputed(i, j);
            const double d = truth(i, j) - mean;
            sq_err += e * e;
            sq_dev += d * d;
        }
    }
    if (!(sq_dev > 0.0)) throw MetricUndefinedError("deleted truth values have zero variance");
    if (!std::isfinite(sq_err)) throw DomainError("imputations are not finite");
    return std::sqrt(sq_err / sq_dev);
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    auto splitmix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    std::uint64_t h = 0x5851f42d4c957f2dULL;
    for (auto v : parts) h = splitmix(h ^ splitmix(v));
    return h;
}

namespace {

bool triangular(Index p, Index& blocks) {
    Index b = 0;
    Index total = 0;
    while (total < p) total += ++b;
    blocks = b;
    return total == p;
}

std::string nearby_triangular(Index p) {
    Index b = 1;
    Index below = 1;
    while (below + b + 1 <= p) below += ++b;
    const Index above = below + b + 1;
    return std::to_string(below) + ", " + std::to_string(above);
}

}  // namespace

void SimSpec::validate() const {
    if (model < 1 || model > 4) throw SpecError("model must be 1, 2, 3 or 4");
    if (p < 2) throw SpecError("p must be at least 2");
    if (n < 2) throw SpecError("n must be at least 2");
    if ((model == 1 || model == 2) && p % 2 != 0)
        throw SpecError("model " + std::to_string(model) + " needs an even p, got " + std::to_string(p));
    Index blocks = 0;
    if (model == 3 && !triangular(p, blocks)) {
        throw SpecError(std::to_string(p) + " is not a valid model-3 size (1 + 2 + ... + B); nearest: " +
                        nearby_triangular(p));
    }
}

Covariance ar_covariance(Index p, double rho) {
    Covariance s(p, p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) s(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    return s;
}

Covariance model_covariance(int model, Index p) {
    SimSpec{model, p, 2, 0}.validate();
    Covariance s = Covariance::Zero(p, p);
    switch (model) {
        case 1:
            for (Index b = 0; b < p; b += 2) s.block(b, b, 2, 2) << 1.0, 0.9, 0.9, 1.0;
            break;
        case 2:
            s.topLeftCorner(p / 2, p / 2).setIdentity();
            s.bottomRightCorner(p / 2, p / 2) = ar_covariance(p / 2, 0.9);
            break;
        case 3: {
            Index start = 0;
            for (Index b = 1; start < p; start += b, ++b) {
                s.block(start, start, b, b).setConstant(0.9);
                s.block(start, start, b, b).diagonal().setOnes();
            }
            break;
        }
        default:
            s = ar_covariance(p, 0.9);
    }
    return s;
}

Matrix sample_mvn(const Covariance& sigma, Index n, std::uint64_t seed) {
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw DomainError("covariance is not positive definite");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix z(n, sigma.rows());
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < z.cols(); ++j) z(i, j) = normal(rng);
    return z * llt.matrixL().transpose();
}

Simulated gen_model(const SimSpec& spec) {
    spec.validate();
    Covariance sigma = model_covariance(spec.model, spec.p);
    Matrix x = sample_mvn(sigma, spec.n, spec.seed);
    return {DataMatrix::complete(std::move(x)), std::move(sigma)};
}

Deletion delete_mcar(const DataMatrix& m, double frac, std::uint64_t seed) {
    if (!(frac >= 0.0 && frac < 1.0)) throw SpecError("missing fraction must lie in [0, 1)");
    const Index n = m.rows();
    const Index p = m.cols();
    const auto target = static_cast<Index>(
        std::nearbyint(frac * static_cast<double>(n) * static_cast<double>(p)));

    std::vector<Index> cells;  // column-major linear indices of observed cells
    for (Index c = 0; c < n * p; ++c)
        if (m.mask()(c % n, c / n)) cells.push_back(c);
    if (target > static_cast<Index>(cells.size()))
        throw DeletionInfeasibleError("not enough observed cells to delete " + std::to_string(target));

    std::mt19937_64 rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::shuffle(cells.begin(), cells.end(), rng);
        Mask keep = m.mask();
        Mask deleted = Mask::Constant(n, p, false);
        for (Index c = 0; c < target; ++c) {
            keep(cells[c] % n, cells[c] / n) = false;
            deleted(cells[c] % n, cells[c] / n) = true;
        }
        if ((keep.rowwise().count().array() > 0).all() && (keep.colwise().count().array() > 0).all())
            return {DataMatrix(m.values(), keep, m.column_names()), std::move(deleted)};
    }
    throw DeletionInfeasibleError("could not delete " + std::to_string(target) +
                                  " cells without emptying a row or column after 100 draws");
}

std::string_view method_name(Method m) {
    switch (m) {
        case Method::misspa: return "misspa";
        case Method::misspalasso: return "misspalasso";
        case Method::knn: return "knn";
        case Method::softimpute: return "softimpute";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (Method m : {Method::misspa, Method::misspalasso, Method::knn, Method::softimpute})
        if (method_name(m) == name) return m;
    throw SpecError("unknown method '" + std::string(name) + "'");
}

void BenchmarkConfig::validate() const {
    spec.validate();
    if (runs < 1) throw SpecError("runs must be at least 1");
    if (threads < 1) throw SpecError("threads must be at least 1");
    if (missing_fracs.empty()) throw SpecError("no missing fractions given");
    if (methods.empty()) throw SpecError("no methods given");
    for (std::size_t a = 0; a < missing_fracs.size(); ++a) {
        if (!(missing_fracs[a] > 0.0 && missing_fracs[a] < 1.0))
            throw SpecError("missing fractions must lie in (0, 1)");
        for (std::size_t b = 0; b < a; ++b)
            if (missing_fracs[a] == missing_fracs[b]) throw SpecError("missing fractions must be distinct");
    }
    if (grids.lambda_points < 2) throw SpecError("lambda grid needs at least 2 points");
    if (!(grids.lambda_ratio > 0.0 && grids.lambda_ratio < 1.0))
        throw SpecError("lambda ratio must lie in (0, 1)");
    if (grids.k_values.empty()) throw SpecError("empty K grid");
}

namespace {

/// NRMSE per tuning-grid point for one (run, frac, method) cell.
std::vector<double> evaluate_cell(Method method, const BenchmarkConfig& cfg, const Matrix& truth,
                                  const Deletion& del) {
    DataMatrix input = del.data;
    std::optional<ColumnStats> stats;
    if (cfg.standardize) {
        auto [z, s] = standardize(del.data);
        input = std::move(z);
        stats = std::move(s);
    }
    auto score = [&](const DataMatrix& imputed) {
        const DataMatrix back = stats ? destandardize(imputed, *stats) : imputed;
        return nrmse(truth, back.values(), del.deleted);
    };

    std::vector<double> out;
    switch (method) {
        case Method::misspa:
            out.push_back(score(run_misspa(input).imputed));
            break;
        case Method::misspalasso: {
            LassoOptions opts;
            opts.grid_size = cfg.grids.lambda_points;
            opts.grid_ratio = cfg.grids.lambda_ratio;
            const PathResult path = run_lambda_path(input, opts, std::nullopt);
            for (const auto& pt : path.points) out.push_back(score(pt.result.imputed));
            break;
        }
        case Method::knn:
            for (const auto& r : knn_impute_grid(input, cfg.grids.k_values, KnnAxis::columns))
                out.push_back(score(r.imputed));
            break;
        case Method::softimpute: {
            const double top = top_singular_value(input);
            Matrix warm = Matrix::Zero(input.rows(), input.cols());
            for (double lambda : lambda_grid(top, cfg.grids.lambda_points, cfg.grids.lambda_ratio)) {
                SoftImputeOptions opts;
                opts.lambda = lambda;
                auto r = soft_impute(input, opts, &warm);
                warm = r.z;
                out.push_back(score(r.imputed));
            }
            break;
        }
    }
    return out;
}

std::string tuning_label(Method method, const BenchmarkConfig& cfg, std::size_t g) {
    switch (method) {
        case Method::misspa: return "-";
        case Method::knn: return "k=" + std::to_string(cfg.grids.k_values[g]);
        default: {
            const double rel = std::pow(cfg.grids.lambda_ratio,
                                        static_cast<double>(g) / (cfg.grids.lambda_points - 1));
            return "lambda/lambda_max=" + format_number(rel);
        }
    }
}

// Per run, per frac, per method: NRMSE grid, or empty on failure.
using RunScores = std::vector<std::vector<std::optional<std::vector<double>>>>;

}  // namespace

std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& cfg) {
    cfg.validate();
    for (double f : cfg.missing_fracs) {
        const double cells = f * static_cast<double>(cfg.spec.n) * static_cast<double>(cfg.spec.p);
        if (std::nearbyint(cells) < 2)
            throw MetricUndefinedError("fraction " + format_number(f) + " deletes fewer than 2 cells");
    }

    std::vector<RunScores> scores(static_cast<std::size_t>(cfg.runs));
    std::atomic<int> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mutex;

    auto worker = [&] {
        for (int r = next++; r < cfg.runs; r = next++) {
            try {
                SimSpec spec = cfg.spec;
                spec.seed = mix_seed({cfg.spec.seed, static_cast<std::uint64_t>(r)});
                const Simulated sim = gen_model(spec);
                RunScores& mine = scores[r];
                mine.resize(cfg.missing_fracs.size());
                for (std::size_t f = 0; f < cfg.missing_fracs.size(); ++f) {
                    const Deletion del = delete_mcar(
                        sim.data, cfg.missing_fracs[f],
                        mix_seed({cfg.spec.seed, static_cast<std::uint64_t>(r), f + 1}));
                    for (Method method : cfg.methods) {
                        try {
                            mine[f].emplace_back(evaluate_cell(method, cfg, sim.data.values(), del));
                        } catch (const ConditioningError&) {
                            mine[f].emplace_back(std::nullopt);
                        } catch (const DegenerateColumnError&) {
                            mine[f].emplace_back(std::nullopt);
                        } catch (const DomainError&) {
                            mine[f].emplace_back(std::nullopt);
                        }
                    }
                }
            } catch (...) {
                std::lock_guard lock(fatal_mutex);
                if (!fatal) fatal = std::current_exception();
                next = cfg.runs;
            }
        }
    };

    const int workers = std::min(cfg.threads, cfg.runs);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    std::vector<BenchmarkRow> rows;
    for (std::size_t f = 0; f < cfg.missing_fracs.size(); ++f) {
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
            const Method method = cfg.methods[mi];
            std::vector<const std::vector<double>*> ok;
            for (const auto& run : scores)
                if (run[f][mi]) ok.push_back(&*run[f][mi]);
            const int failures = cfg.runs - static_cast<int>(ok.size());
            if (ok.empty() || failures * 5 > cfg.runs) {
                throw BenchmarkError(std::string(method_name(method)) + " failed in " +
                                     std::to_string(failures) + " of " + std::to_string(cfg.runs) +
                                     " runs at frac " + format_number(cfg.missing_fracs[f]));
            }

            const std::size_t grid = ok.front()->size();
            std::size_t best = 0;
            double best_mean = std::numeric_limits<double>::infinity();
            for (std::size_t g = 0; g < grid; ++g) {
                double sum = 0.0;
                for (const auto* v : ok) sum += (*v)[g];
                const double mean = sum / static_cast<double>(ok.size());
                if (mean < best_mean) {
                    best_mean = mean;
                    best = g;
                }
            }
            double se = 0.0;
            if (ok.size() > 1) {
                double ss = 0.0;
                for (const auto* v : ok) ss += ((*v)[best] - best_mean) * ((*v)[best] - best_mean);
                se = std::sqrt(ss / static_cast<double>(ok.size() - 1)) /
                     std::sqrt(static_cast<double>(ok.size()));
            }
            rows.push_back({cfg.spec.model, cfg.spec.p, cfg.missing_fracs[f], method, best_mean, se,
                            tuning_label(method, cfg, best), static_cast<int>(ok.size()), failures});
        }
    }
    return rows;
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
    out << "model,p,frac,method,mean_nrmse,se,tuning,runs_ok,failures\n";
    for (const auto& r : rows) {
        out << r.model << ',' << r.p << ',' << format_number(r.frac) << ',' << method_name(r.method)
            << ',' << format_number(r.mean_nrmse) << ',' << format_number(r.se) << ',' << r.tuning
            << ',' << r.runs_ok << ',' << r.failures << '\n';
    }
}

PairedTrace loglik_trace(const DataMatrix& m, MisspaOptions opts) {
    opts.trace_loglik = true;
    RunResult a = run_misspa(m, opts);
    opts.observer = nullptr;
    RunResult b = run_standard_em(m, opts);
    return {std::move(a), std::move(b)};
}

int cycles_to_reach(const std::vector<TraceRecord>& trace, double target, double tol) {
    for (const auto& rec : trace)
        if (rec.loglik >= target - tol) return rec.cycle;
    return -1;
}

std::vector<TimingRecord> timing_run(const TimingConfig& cfg) {
    if (cfg.reps < 1) throw SpecError("reps must be at least 1");
    if (cfg.sizes.empty()) throw SpecError("no sizes given");
    std::vector<TimingRecord> out;
    for (Index p : cfg.sizes) {
        for (int rep = 0; rep < cfg.reps; ++rep) {
            const SimSpec spec{4, p, cfg.n,
                               mix_seed({cfg.seed, static_cast<std::uint64_t>(p),
                                         static_cast<std::uint64_t>(rep)})};
            const Simulated sim = gen_model(spec);
            const Deletion del = delete_mcar(sim.data, cfg.frac, mix_seed({spec.seed, 1}));
            const DataMatrix input = standardize(del.data).first;

            LassoOptions opts;
            opts.grid_size = cfg.grid_size;
            const auto start = std::chrono::steady_clock::now();
            run_lambda_path(input, opts, std::nullopt);
            const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
            out.push_back({p, "misspalasso", rep + 1, elapsed.count()});
        }
    }
    return out;
}

std::vector<TimingSummary> summarize_timing(const std::vector<TimingRecord>& records) {
    std::vector<TimingSummary> out;
    std::vector<bool> used(records.size(), false);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (used[i]) continue;
        std::vector<double> secs;
        for (std::size_t j = i; j < records.size(); ++j) {
            if (!used[j] && records[j].p == records[i].p && records[j].method == records[i].method) {
                used[j] = true;
                secs.push_back(records[j].seconds);
            }
        }
        std::sort(secs.begin(), secs.end());
        const std::size_t h = secs.size() / 2;
        const double median = secs.size() % 2 ? secs[h] : 0.5 * (secs[h - 1] + secs[h]);
        out.push_back({records[i].p, records[i].method, secs.front(), median, secs.back()});
    }
    return out;
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRecord>& records) {
    out << "p,method,run,seconds\n";
    for (const auto& r : records)
        out << r.p << ',' << r.method << ',' << r.run << ',' << format_number(r.seconds) << '\n';
}

void write_timing_summary_csv(std::ostream& out, const std::vector<TimingSummary>& rows) {
    out << "p,method,min,median,max\n";
    for (const auto& r : rows) {
        out << r.p << ',' << r.method << ',' << format_number(r.min) << ','
            << format_number(r.median) << ',' << format_number(r.max) << '\n';
    }
}

}  // namespace pamimpute
