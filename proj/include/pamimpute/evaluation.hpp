#pragma once

#include "pamimpute/data.hpp"
#include "pamimpute/misspa.hpp"
#include "pamimpute/mvn.hpp"

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pamimpute {

/// sqrt(mean((truth - imputed)^2) / var(truth)) over the cells flagged in
/// `deleted`; population variance. Mean imputation scores exactly 1.
double nrmse(const Matrix& truth, const Matrix& imputed, const Mask& deleted);

/// Deterministic seed derivation (splitmix64 chain).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

struct SimSpec {
    int model = 1;  ///< 1..4
    Index p = 50;
    Index n = 50;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Sigma_{j,j'} = rho^{|j - j'|}
Covariance ar_covariance(Index p, double rho);

/// Covariance of simulation model 1..4. Throws SpecError on invalid sizes.
Covariance model_covariance(int model, Index p);

/// n i.i.d. rows from N(0, sigma), deterministic in `seed`.
Matrix sample_mvn(const Covariance& sigma, Index n, std::uint64_t seed);

struct Simulated {
    DataMatrix data;
    Covariance sigma;
};

Simulated gen_model(const SimSpec& spec);

struct Deletion {
    DataMatrix data;
    Mask deleted;  ///< true where a value was removed
};

/// Removes exactly round(frac * n * p) observed cells uniformly at random,
/// never emptying a row or column (redraws up to 100 times).
Deletion delete_mcar(const DataMatrix& m, double frac, std::uint64_t seed);

enum class Method { misspa, misspalasso, knn, softimpute };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

struct TuningGrids {
    int lambda_points = 30;
    double lambda_ratio = 1e-3;
    std::vector<int> k_values{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
};

struct BenchmarkConfig {
    SimSpec spec;
    std::vector<double> missing_fracs{0.05};
    int runs = 20;
    std::vector<Method> methods{Method::misspalasso, Method::knn, Method::softimpute};
    TuningGrids grids;
    int threads = 1;
    bool standardize = true;

    void validate() const;
};

struct BenchmarkRow {
    int model = 0;
    Index p = 0;
    double frac = 0.0;
    Method method = Method::misspalasso;
    double mean_nrmse = 0.0;
    double se = 0.0;
    std::string tuning;
    int runs_ok = 0;
    int failures = 0;
};

/// Per (frac, method): mean NRMSE and standard error over runs at the grid
/// point with the lowest mean NRMSE.
std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& cfg);

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

struct PairedTrace {
    RunResult misspa;
    RunResult em;
};

/// Runs MissPA and standard EM on the same input with log-likelihood tracing.
PairedTrace loglik_trace(const DataMatrix& m, MisspaOptions opts);

/// First cycle whose traced log-likelihood reaches target - tol; -1 if none.
int cycles_to_reach(const std::vector<TraceRecord>& trace, double target, double tol);

struct TimingConfig {
    std::vector<Index> sizes{10, 50, 100};
    Index n = 50;
    double frac = 0.1;
    int reps = 10;
    int grid_size = 30;
    std::uint64_t seed = 1;
};

struct TimingRecord {
    Index p = 0;
    std::string method;
    int run = 0;
    double seconds = 0.0;
};

struct TimingSummary {
    Index p = 0;
    std::string method;
    double min = 0.0;
    double median = 0.0;
    double max = 0.0;
};

/// Wall-clock seconds of a full warm-started lambda path on model-4 data,
/// per size and repetition.
std::vector<TimingRecord> timing_run(const TimingConfig& cfg);
std::vector<TimingSummary> summarize_timing(const std::vector<TimingRecord>& records);

void write_timing_csv(std::ostream& out, const std::vector<TimingRecord>& records);
void write_timing_summary_csv(std::ostream& out, const std::vector<TimingSummary>& rows);

}  // namespace pamimpute
