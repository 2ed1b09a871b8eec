// Agreement-controlled human simulation and the rho sweep.
#include <algorithm>
#include <cmath>
#include <numeric>

#include "agealign/error.hpp"
#include "agealign/rng.hpp"
#include "agealign/stats.hpp"

namespace agealign::stats {

namespace {

double fresh_probability(double mu, double rho, double expectation) {
    const double q = (mu - rho * expectation) / (1.0 - rho);
    constexpr double eps = 1e-12;
    if (q < -eps || q > 1.0 + eps)
        throw Error(ErrorKind::Infeasible, "infeasible simulation parameters: q = " + std::to_string(q) +
                                               " for rho = " + std::to_string(rho) + ", mu = " + std::to_string(mu));
    return std::clamp(q, 0.0, 1.0);
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<int> simulate_human(std::span<const int> lm_outcomes, const SimulationParams& params,
                                std::uint64_t seed) {
    if (!(params.rho >= 0.0 && params.rho <= 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in [0, 1]");
    if (!(params.mu > 0.0 && params.mu < 1.0)) throw Error(ErrorKind::InvalidArgument, "mu must lie in (0, 1)");
    std::vector<int> out(lm_outcomes.begin(), lm_outcomes.end());
    if (params.rho == 1.0) return out;

    const bool per_item = params.expectation == ExpectationMode::PerItem;
    if (per_item && params.item_expectations.size() != lm_outcomes.size())
        throw Error(ErrorKind::InvalidArgument, "per-item expectations must match the outcome count");

    double pop_q = 0.0;
    if (!per_item) {
        if (lm_outcomes.empty()) return out;
        const double m = std::accumulate(lm_outcomes.begin(), lm_outcomes.end(), 0.0) /
                         static_cast<double>(lm_outcomes.size());
        pop_q = fresh_probability(params.mu, params.rho, m);
    }

    Rng rng(seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Two draws per item regardless of branch keeps streams aligned across rho.
        const double copy_draw = rng.uniform();
        const double fresh_draw = rng.uniform();
        if (copy_draw < params.rho) continue;
        const double q = per_item ? fresh_probability(params.mu, params.rho, params.item_expectations[i]) : pop_q;
        out[i] = fresh_draw < q ? 1 : 0;
    }
    return out;
}

double estimate_gamma(std::span<const std::vector<int>> samples) {
    if (samples.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 samples to estimate gamma");
    const std::size_t n = samples.front().size();
    for (const auto& s : samples)
        if (s.size() != n) throw Error(ErrorKind::InvalidArgument, "samples differ in length");
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "samples are empty");

    // Pairwise disagreements per item from the count of ones: c * (k - c).
    const double k = static_cast<double>(samples.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double ones = 0.0;
        for (const auto& s : samples) ones += s[i];
        total += ones * (k - ones);
    }
    const double pairs = k * (k - 1.0) / 2.0;
    return total / (pairs * static_cast<double>(n));
}

const SimulationCell* SimulationReport::find(double rho, double age) const {
    for (const auto& c : cells)
        if (c.rho == rho && c.age == age) return &c;
    return nullptr;
}

SimulationReport simulation_experiment(std::span<const AgeItem> lm_items, const SimulationOptions& options) {
    if (options.trials < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 trials to estimate gamma");
    if (options.ages.empty()) throw Error(ErrorKind::InvalidArgument, "age grid is empty");
    if (lm_items.empty()) throw Error(ErrorKind::InvalidArgument, "no LM outcomes");

    std::vector<int> lm(lm_items.size());
    for (std::size_t i = 0; i < lm_items.size(); ++i) lm[i] = lm_items[i].h_lm;
    if (!options.item_expectations.empty() && options.item_expectations.size() != lm.size())
        throw Error(ErrorKind::InvalidArgument, "per-item expectations must match the outcome count");

    // Bucket membership is fixed by the data, so the means test is computed once per age.
    std::vector<std::vector<std::size_t>> buckets;
    std::vector<double> means_p;
    for (double age : options.ages) {
        std::vector<std::size_t> idx;
        long correct = 0;
        for (std::size_t i = 0; i < lm_items.size(); ++i) {
            if (in_age_bucket(lm_items[i].aoa, age, options.mode)) {
                idx.push_back(i);
                correct += lm[i];
            }
        }
        means_p.push_back(idx.empty() ? 1.0
                                      : means_test(correct, static_cast<long>(idx.size()), options.mu, options.alpha)
                                            .p_value);
        buckets.push_back(std::move(idx));
    }

    SimulationReport report;
    for (std::size_t r = 0; r < options.rho_grid.size(); ++r) {
        SimulationParams params;
        params.rho = options.rho_grid[r];
        params.mu = options.mu;
        if (!options.item_expectations.empty()) {
            params.expectation = ExpectationMode::PerItem;
            params.item_expectations = options.item_expectations;
        }

        std::vector<std::vector<int>> humans;
        std::vector<std::vector<int>> second_humans;
        for (int t = 0; t < options.trials; ++t) {
            const auto tt = static_cast<std::uint64_t>(t);
            humans.push_back(simulate_human(lm, params, derive_seed(options.seed, r, 2 * tt)));
            second_humans.push_back(simulate_human(lm, params, derive_seed(options.seed, r, 2 * tt + 1)));
        }

        for (std::size_t a = 0; a < options.ages.size(); ++a) {
            const auto& idx = buckets[a];
            if (idx.empty()) continue;
            SimulationCell cell;
            cell.rho = params.rho;
            cell.age = options.ages[a];
            cell.n = static_cast<long>(idx.size());

            std::vector<std::vector<int>> restricted;
            restricted.reserve(humans.size());
            for (const auto& h : humans) {
                std::vector<int> v;
                v.reserve(idx.size());
                for (auto i : idx) v.push_back(h[i]);
                restricted.push_back(std::move(v));
            }
            cell.gamma = estimate_gamma(restricted);

            for (int t = 0; t < options.trials; ++t) {
                long d_lm = 0, d_hh = 0;
                for (auto i : idx) {
                    d_lm += std::abs(humans[t][i] - lm[i]);
                    d_hh += std::abs(humans[t][i] - second_humans[t][i]);
                }
                cell.td_p.push_back(td_test(d_lm, cell.n, cell.gamma, options.alpha).p_value);
                cell.hvh_td_p.push_back(td_test(d_hh, cell.n, cell.gamma, options.alpha).p_value);
                cell.means_p.push_back(means_p[a]);
            }
            cell.td_p_mean = mean_of(cell.td_p);
            cell.means_p_mean = mean_of(cell.means_p);
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::InvalidArgument, "spearman needs paired samples");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return fit_line(rx, ry).correlation;
}

}  // namespace agealign::stats
