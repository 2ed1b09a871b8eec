// Contingency tables, the linear probability model, and the energy proxy.
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "agealign/error.hpp"
#include "agealign/rng.hpp"
#include "agealign/stats.hpp"

namespace agealign::stats {

double chi_square_upper_tail(double x, double df) {
    if (!(df > 0.0)) throw Error(ErrorKind::InvalidArgument, "degrees of freedom must be positive");
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

ChiSquareResult chi2_independence(const std::vector<std::vector<double>>& table, int n_tests_for_bonferroni) {
    const std::size_t r = table.size();
    if (r < 2) throw Error(ErrorKind::InvalidArgument, "contingency table needs at least 2 rows");
    const std::size_t c = table.front().size();
    if (c < 2) throw Error(ErrorKind::InvalidArgument, "contingency table needs at least 2 columns");
    for (const auto& row : table) {
        if (row.size() != c) throw Error(ErrorKind::InvalidArgument, "ragged contingency table");
        for (double v : row)
            if (!(v >= 0.0)) throw Error(ErrorKind::InvalidArgument, "counts must be non-negative");
    }
    if (n_tests_for_bonferroni < 1) throw Error(ErrorKind::InvalidArgument, "Bonferroni divisor must be >= 1");

    std::vector<double> row_sum(r, 0.0), col_sum(c, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            row_sum[i] += table[i][j];
            col_sum[j] += table[i][j];
            total += table[i][j];
        }

    ChiSquareResult res;
    res.expected.assign(r, std::vector<double>(c, 0.0));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double e = row_sum[i] * col_sum[j] / (total > 0.0 ? total : 1.0);
            if (!(e > 0.0))
                throw Error(ErrorKind::Degenerate, "expected count is zero at row " + std::to_string(i) + ", column " +
                                                       std::to_string(j) +
                                                       "; merge or drop empty categories before testing");
            res.expected[i][j] = e;
            const double d = table[i][j] - e;
            res.statistic += d * d / e;
        }
    res.df = static_cast<long>((r - 1) * (c - 1));
    res.p_value = chi_square_upper_tail(res.statistic, static_cast<double>(res.df));
    res.adjusted_p = std::min(1.0, res.p_value * n_tests_for_bonferroni);
    return res;
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

LpmFit fit_lpm(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const LpmOptions& options) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (Y.size() != n) throw Error(ErrorKind::InvalidArgument, "X and Y differ in row count");
    if (p == 0 || n < p) throw Error(ErrorKind::Rank, "need at least as many rows as columns");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) throw Error(ErrorKind::Rank, "design matrix is rank deficient (rank " +
                                                         std::to_string(qr.rank()) + " < " + std::to_string(p) + ")");

    LpmFit fit;
    fit.n = static_cast<long>(n);
    fit.beta = qr.solve(Y);
    const Eigen::VectorXd fitted = X * fit.beta;
    fit.residuals = Y - fitted;

    // (X'X)^-1 = P R^-1 R^-T P' from X P = Q R.
    const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
    const Eigen::MatrixXd R_inv =
        R.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd P = qr.colsPermutation();
    const Eigen::MatrixXd bread = P * (R_inv * R_inv.transpose()) * P.transpose();

    const Eigen::MatrixXd weighted = X.array().colwise() * fit.residuals.array();
    const Eigen::MatrixXd meat = weighted.transpose() * weighted;
    Eigen::MatrixXd cov = bread * meat * bread;
    fit.robust_covariance = (cov + cov.transpose()) / 2.0;

    const int first = options.has_intercept ? 1 : 0;
    const int n_tests = options.n_tests > 0 ? options.n_tests : static_cast<int>(p) - first;
    fit.z.resize(p);
    fit.p_values.resize(p);
    fit.adjusted_p_values.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double var = fit.robust_covariance(j, j);
        const double se = std::sqrt(std::max(var, 0.0));
        fit.z(j) = se > 0.0 ? fit.beta(j) / se : (fit.beta(j) == 0.0 ? 0.0 : std::copysign(INFINITY, fit.beta(j)));
        fit.p_values(j) = normal_two_sided_p(fit.z(j));
        fit.adjusted_p_values(j) =
            j < first ? fit.p_values(j) : std::min(1.0, fit.p_values(j) * std::max(1, n_tests));
    }

    long outside = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (fitted(i) < 0.0 || fitted(i) > 1.0) ++outside;
    fit.fraction_outside_unit = n > 0 ? static_cast<double>(outside) / static_cast<double>(n) : 0.0;
    return fit;
}

int coarsen_k(std::size_t n) {
    const auto five_percent = static_cast<int>(std::floor(0.05 * static_cast<double>(n)));
    return std::max(1, std::min(five_percent, 50));
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed) {
    if (points.empty()) throw Error(ErrorKind::InvalidArgument, "k-means needs at least one point");
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    const std::size_t d = points.front().size();
    if (d == 0) throw Error(ErrorKind::Dimension, "embeddings are empty");
    for (const auto& pt : points)
        if (pt.size() != d) throw Error(ErrorKind::Dimension, "embeddings differ in dimension");

    const auto n = static_cast<Eigen::Index>(points.size());
    Eigen::MatrixXd data(n, static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) data(i, static_cast<Eigen::Index>(j)) = points[i][j];
    k = std::min<int>(k, static_cast<int>(n));

    Rng rng(seed);
    KMeansResult res;
    res.centroids.resize(k, static_cast<Eigen::Index>(d));

    // k-means++ seeding.
    std::vector<double> dist2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    Eigen::Index chosen = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    res.centroids.row(0) = data.row(chosen);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], (data.row(i) - res.centroids.row(c - 1)).squaredNorm());
            total += dist2[i];
        }
        if (total <= 0.0) {
            chosen = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        } else {
            double target = rng.uniform() * total;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= dist2[i];
                if (target < 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        res.centroids.row(c) = data.row(chosen);
    }

    res.labels.assign(static_cast<std::size_t>(n), 0);
    constexpr int kMaxIterations = 100;
    constexpr double kTolerance = 1e-6;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        res.iterations = iter + 1;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (res.centroids.rowwise() - data.row(i)).rowwise().squaredNorm().minCoeff(&best);
            res.labels[i] = static_cast<int>(best);
        }
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(d));
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            next.row(res.labels[i]) += data.row(i);
            ++counts[res.labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                next.row(c) /= static_cast<double>(counts[c]);
            } else {
                // Empty cluster: move it to the point farthest from its centroid.
                Eigen::Index far = 0;
                double best = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double dd = (data.row(i) - res.centroids.row(res.labels[i])).squaredNorm();
                    if (dd > best) {
                        best = dd;
                        far = i;
                    }
                }
                next.row(c) = data.row(far);
            }
        }
        const double shift = (next - res.centroids).rowwise().norm().maxCoeff();
        res.centroids = next;
        if (shift <= kTolerance) break;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        (res.centroids.rowwise() - data.row(i)).rowwise().squaredNorm().minCoeff(&best);
        res.labels[i] = static_cast<int>(best);
    }
    return res;
}

std::vector<int> coarsen(const std::vector<std::vector<double>>& embeddings, std::uint64_t seed) {
    return kmeans(embeddings, coarsen_k(embeddings.size()), seed).labels;
}

double energy_distance(std::span<const int> labels_a, std::span<const int> labels_b, EnergyEstimator estimator) {
    if (labels_a.empty() || labels_b.empty()) throw Error(ErrorKind::InvalidArgument, "energy of an empty sample");

    // Label counts give every pair sum in O(n + labels).
    auto counts = [](std::span<const int> v) {
        std::vector<std::pair<int, double>> out;
        std::vector<int> sorted(v.begin(), v.end());
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size();) {
            std::size_t j = i;
            while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
            out.emplace_back(sorted[i], static_cast<double>(j - i));
            i = j;
        }
        return out;
    };
    const auto ca = counts(labels_a);
    const auto cb = counts(labels_b);
    const double na = static_cast<double>(labels_a.size());
    const double nb = static_cast<double>(labels_b.size());

    double same_ab = 0.0;
    for (const auto& [label, count] : ca)
        for (const auto& [lb, cnt] : cb)
            if (label == lb) same_ab += count * cnt;
    const double cross = 1.0 - same_ab / (na * nb);

    auto within = [&](const std::vector<std::pair<int, double>>& c, double n) {
        double same_ordered = 0.0;  // ordered pairs i != j with equal labels
        for (const auto& [label, count] : c) same_ordered += count * (count - 1.0);
        if (estimator == EnergyEstimator::IncludeSelfPairs) {
            // n*n ordered pairs; self pairs always agree.
            return (n * n - (same_ordered + n)) / (n * n);
        }
        if (n < 2.0) return 0.0;
        return (n * (n - 1.0) - same_ordered) / (n * (n - 1.0));
    };
    return 2.0 * cross - within(ca, na) - within(cb, nb);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorKind::InvalidArgument, "x and y differ in length");
    if (x.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw Error(ErrorKind::Degenerate, "x has zero variance");
    if (!(syy > 0.0)) throw Error(ErrorKind::Degenerate, "y has zero variance");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.correlation = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    return f;
}

LineFit energy_td_regression(std::span<const EnergyTdPoint> points) {
    std::vector<double> x, y;
    for (const auto& p : points) {
        x.push_back(p.energy);
        y.push_back(p.td);
    }
    return fit_line(x, y);
}

}  // namespace agealign::stats
