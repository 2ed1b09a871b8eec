#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agealign/types.hpp"

namespace agealign::stats {

// ---- exact binomial tails ----

double binomial_log_pmf(long k, long n, double p);
// Pr(Binomial(n, p) >= k), summed term by term in log space.
double binomial_upper_tail(long k, long n, double p);
// Pr(Binomial(n, p) <= k).
double binomial_lower_tail(long k, long n, double p);

// ---- age tests ----

/// Mean of |h_human - h_lm|.
double test_divergence(std::span<const int> h_human, std::span<const int> h_lm);

/// H0: TD <= gamma, tested at the boundary TD = gamma.
/// p = Pr(Binomial(n, gamma) >= disagreements); gamma = 0 gives p = 1 iff no disagreements.
AgeTestResult td_test(long disagreements, long n, double gamma, double alpha);

/// One-sided exact binomial test of H_A: E[R] < n * mu.
AgeTestResult means_test(long correct, long n, double mu, double alpha);

struct AgeItem {
    double aoa = 0.0;
    int h_lm = 0;
    std::optional<int> h_human;
};

struct AgeProfileOptions {
    AgeMode mode = AgeMode::Exact;
    AgeTestKind kind = AgeTestKind::Means;
    std::function<double(double)> mu = [](double) { return 0.47; };
    double gamma = 0.0;
    double alpha = 0.05;
    std::vector<double> ages;
};

struct AgeProfile {
    std::vector<AgeTestResult> rows;
    std::vector<double> skipped_ages;  // empty buckets
    std::vector<double> aligned_ages;  // ages whose null is not rejected
    std::optional<double> min_aligned_age;
};

// Bucket membership on integer-truncated AoA: exact -> floor(aoa) == a, at_most -> floor(aoa) <= a.
bool in_age_bucket(double aoa, double age, AgeMode mode);

AgeProfile age_profile(std::span<const AgeItem> items, const AgeProfileOptions& options);

// ---- human mean ----

struct Interval {
    double lower = 0.0;
    double upper = 1.0;
    double half_width = 0.0;
};

enum class Sided { One, Two };

/// p_hat -/+ sqrt(ln(s / alpha) / (2n)), s = 1 or 2, clamped to [0, 1].
Interval hoeffding_bound(double p_hat, long n, double alpha, Sided sided);

/// Expected accuracy when a fraction p knows the answer and the rest guess
/// uniformly among n_options.
double guessing_correction(double p, int n_options);

struct HumanMeanInputs {
    double disagreement_rate = 0.15;
    long n_annotated = 108;
    double alpha = 0.05;
    double p_know = 0.5;
    int n_options = 6;
    bool use_hoeffding = true;  // false: use the observed disagreement directly
};

double estimate_human_mean(const HumanMeanInputs& in);

// ---- simulation ----

enum class ExpectationMode { PopulationMean, PerItem };

struct SimulationParams {
    double rho = 0.0;
    double mu = 0.47;
    ExpectationMode expectation = ExpectationMode::PopulationMean;
    // Required for PerItem: Pr(h_lm_i = 1) per item.
    std::vector<double> item_expectations;
};

/// Per item: copy the LM outcome with probability rho, else draw
/// Bernoulli((mu - rho * E[h_lm]) / (1 - rho)). Throws Infeasible when that
/// probability leaves [0, 1].
std::vector<int> simulate_human(std::span<const int> lm_outcomes, const SimulationParams& params,
                                std::uint64_t seed);

/// Mean pairwise per-item disagreement over all unordered sample pairs.
double estimate_gamma(std::span<const std::vector<int>> samples);

struct SimulationCell {
    double rho = 0.0;
    double age = 0.0;
    long n = 0;
    double gamma = 0.0;
    std::vector<double> td_p;        // LM vs simulated human, one per trial
    std::vector<double> hvh_td_p;    // two independent simulated humans
    std::vector<double> means_p;     // LM means test (independent of rho)
    double td_p_mean = 0.0;
    double means_p_mean = 0.0;
};

struct SimulationOptions {
    std::vector<double> rho_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> ages;
    double mu = 0.47;
    int trials = 25;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    AgeMode mode = AgeMode::AtMost;
    // Per-item Pr(h_lm = 1); empty selects the population-mean calibration.
    std::vector<double> item_expectations;
};

struct SimulationReport {
    std::vector<SimulationCell> cells;  // rho-major, then age
    const SimulationCell* find(double rho, double age) const;
};

SimulationReport simulation_experiment(std::span<const AgeItem> lm_items, const SimulationOptions& options);

// ---- contingency tables ----

struct ChiSquareResult {
    double statistic = 0.0;
    long df = 0;
    double p_value = 1.0;
    double adjusted_p = 1.0;
    std::vector<std::vector<double>> expected;
};

double chi_square_upper_tail(double x, double df);

/// Pearson chi-square test of independence. Throws Degenerate when an
/// expected count is zero (merge or drop the empty category).
ChiSquareResult chi2_independence(const std::vector<std::vector<double>>& table, int n_tests_for_bonferroni = 1);

// ---- linear probability model ----

struct LpmFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd robust_covariance;  // HC0
    Eigen::VectorXd z;
    Eigen::VectorXd p_values;           // two-sided normal
    Eigen::VectorXd adjusted_p_values;  // Bonferroni over non-intercept coefficients
    Eigen::VectorXd residuals;
    long n = 0;
    double fraction_outside_unit = 0.0;  // fitted values outside [0, 1]
};

struct LpmOptions {
    bool has_intercept = true;  // column 0 is the intercept and is not counted in Bonferroni
    int n_tests = 0;            // 0: number of non-intercept coefficients
};

double normal_two_sided_p(double z);

LpmFit fit_lpm(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y, const LpmOptions& options = {});

// ---- energy proxy ----

int coarsen_k(std::size_t n);

struct KMeansResult {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;  // k x d
    int iterations = 0;
};

/// k-means++ seeding, Lloyd iterations capped at 100, stops once no centroid
/// moves more than 1e-6.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed);

/// Cluster labels with k = max(1, min(floor(0.05 n), 50)).
std::vector<int> coarsen(const std::vector<std::vector<double>>& embeddings, std::uint64_t seed);

enum class EnergyEstimator {
    ExcludeSelfPairs,  // within-sample terms over ordered pairs i != j
    IncludeSelfPairs,  // empirical-distribution plug-in (V-statistic), always >= 0
};

/// 2 E[1{A != B}] - E[1{A != A'}] - E[1{B != B'}] on label samples.
double energy_distance(std::span<const int> labels_a, std::span<const int> labels_b,
                       EnergyEstimator estimator = EnergyEstimator::ExcludeSelfPairs);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double correlation = 0.0;
};

LineFit fit_line(std::span<const double> x, std::span<const double> y);

struct EnergyTdPoint {
    std::string split;  // e.g. "aoa=9" or "pos=NOUN"
    double energy = 0.0;
    double td = 0.0;
};

LineFit energy_td_regression(std::span<const EnergyTdPoint> points);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace agealign::stats
