#include "pamimpute/baselines.hpp"

#include "pamimpute/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pamimpute {

namespace {

struct Neighbor {
    double distance;
    Index row;
};

/// Sorted candidate lists, one per row, over rows sharing >= 1 observed column.
std::vector<std::vector<Neighbor>> rank_neighbors(const Matrix& x, const Mask& mask) {
    const Index n = x.rows();
    const Index len = x.cols();
    std::vector<std::vector<Neighbor>> ranked(static_cast<std::size_t>(n));
    for (Index a = 0; a < n; ++a) {
        for (Index b = a + 1; b < n; ++b) {
            double ss = 0.0;
            Index overlap = 0;
            for (Index c = 0; c < len; ++c) {
                if (mask(a, c) && mask(b, c)) {
                    const double d = x(a, c) - x(b, c);
                    ss += d * d;
                    ++overlap;
                }
            }
            if (overlap == 0) continue;
            const double dist =
                std::sqrt(ss) * std::sqrt(static_cast<double>(len) / static_cast<double>(overlap));
            ranked[a].push_back({dist, b});
            ranked[b].push_back({dist, a});
        }
    }
    for (auto& list : ranked) {
        std::sort(list.begin(), list.end(), [](const Neighbor& u, const Neighbor& v) {
            return u.distance < v.distance || (u.distance == v.distance && u.row < v.row);
        });
    }
    return ranked;
}

std::vector<KnnResult> impute_rows(const DataMatrix& m, const std::vector<int>& ks) {
    const Matrix& x = m.values();
    const Mask& mask = m.mask();
    const Index n = m.rows();
    const Index p = m.cols();

    Vector col_mean(p);
    for (Index j = 0; j < p; ++j) {
        double sum = 0.0;
        Index count = 0;
        for (Index i = 0; i < n; ++i) {
            if (mask(i, j)) {
                sum += x(i, j);
                ++count;
            }
        }
        col_mean(j) = count > 0 ? sum / static_cast<double>(count) : 0.0;
    }

    const auto ranked = rank_neighbors(x, mask);
    const int k_max = *std::max_element(ks.begin(), ks.end());

    std::vector<Matrix> fills(ks.size(), Matrix::Zero(n, p));
    std::vector<Index> fallbacks(ks.size(), 0);
    std::vector<const Neighbor*> chosen;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) {
            if (mask(i, j)) continue;
            chosen.clear();
            for (const auto& nb : ranked[i]) {
                if (!mask(nb.row, j)) continue;
                chosen.push_back(&nb);
                if (static_cast<int>(chosen.size()) == k_max) break;
            }
            for (std::size_t g = 0; g < ks.size(); ++g) {
                const auto take = std::min<std::size_t>(chosen.size(), static_cast<std::size_t>(ks[g]));
                if (take == 0) {
                    fills[g](i, j) = col_mean(j);
                    ++fallbacks[g];
                    continue;
                }
                double wsum = 0.0;
                double acc = 0.0;
                for (std::size_t c = 0; c < take; ++c) {
                    const double w = 1.0 / (chosen[c]->distance + 1e-9);
                    wsum += w;
                    acc += w * x(chosen[c]->row, j);
                }
                fills[g](i, j) = acc / wsum;
            }
        }
    }

    std::vector<KnnResult> out;
    out.reserve(ks.size());
    for (std::size_t g = 0; g < ks.size(); ++g)
        out.push_back({m.with_imputations(fills[g]), fallbacks[g]});
    return out;
}

DataMatrix transposed(const DataMatrix& m) {
    return DataMatrix(m.values().transpose(), m.mask().transpose());
}

}  // namespace

std::vector<KnnResult> knn_impute_grid(const DataMatrix& m, const std::vector<int>& ks,
                                       KnnAxis axis) {
    if (ks.empty()) throw SpecError("empty K grid");
    const Index entities = axis == KnnAxis::rows ? m.rows() : m.cols();
    for (int k : ks) {
        if (k < 1 || k > entities - 1) {
            throw SpecError("k_neighbors = " + std::to_string(k) + " outside [1, " +
                            std::to_string(entities - 1) + "]");
        }
    }
    if (axis == KnnAxis::rows) return impute_rows(m, ks);

    auto results = impute_rows(transposed(m), ks);
    for (auto& r : results) {
        r.imputed = DataMatrix::complete(r.imputed.values().transpose(), m.column_names());
    }
    return results;
}

KnnResult knn_impute(const DataMatrix& m, const KnnOptions& opts) {
    return std::move(knn_impute_grid(m, {opts.k_neighbors}, opts.neighbors).front());
}

}  // namespace pamimpute
