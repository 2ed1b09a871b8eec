// Reference implementations used only by tests. Each one takes a different
// route from the library code it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using big = boost::multiprecision::cpp_bin_float_50;

// Pr(Bin(n, p) >= k) by direct enumeration in 50-digit arithmetic.
inline big binom_upper(long k, long n, double p_in) {
    const big p = p_in, q = big(1) - p;
    big total = 0, coef = 1;  // C(n, i)
    for (long i = 0; i <= n; ++i) {
        if (i > 0) coef = coef * big(n - i + 1) / big(i);
        if (i >= k) total += coef * pow(p, i) * pow(q, n - i);
    }
    return total;
}

inline big binom_lower(long k, long n, double p_in) {
    const big p = p_in, q = big(1) - p;
    big total = 0, coef = 1;
    for (long i = 0; i <= n; ++i) {
        if (i > 0) coef = coef * big(n - i + 1) / big(i);
        if (i <= k) total += coef * pow(p, i) * pow(q, n - i);
    }
    return total;
}

// Gauss-Jordan inverse with partial pivoting, long double.
inline std::vector<std::vector<long double>> invert(std::vector<std::vector<long double>> a) {
    const std::size_t n = a.size();
    std::vector<std::vector<long double>> inv(n, std::vector<long double>(n, 0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        std::swap(inv[c], inv[piv]);
        const long double d = a[c][c];
        for (std::size_t k = 0; k < n; ++k) {
            a[c][k] /= d;
            inv[c][k] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const long double f = a[r][c];
            for (std::size_t k = 0; k < n; ++k) {
                a[r][k] -= f * a[c][k];
                inv[r][k] -= f * inv[c][k];
            }
        }
    }
    return inv;
}

struct Ols {
    std::vector<double> beta;
    std::vector<std::vector<double>> cov;  // HC0
    std::vector<double> z, p;
};

// Closed-form OLS via the normal equations and the explicit HC0 sandwich.
inline Ols ols_hc0(const std::vector<std::vector<double>>& X, const std::vector<double>& Y) {
    const std::size_t n = X.size(), k = X[0].size();
    std::vector<std::vector<long double>> xtx(k, std::vector<long double>(k, 0));
    std::vector<long double> xty(k, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < k; ++a) {
            xty[a] += static_cast<long double>(X[i][a]) * Y[i];
            for (std::size_t b = 0; b < k; ++b) xtx[a][b] += static_cast<long double>(X[i][a]) * X[i][b];
        }
    const auto inv = invert(xtx);
    std::vector<long double> beta(k, 0);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) beta[a] += inv[a][b] * xty[b];
    std::vector<std::vector<long double>> meat(k, std::vector<long double>(k, 0));
    for (std::size_t i = 0; i < n; ++i) {
        long double fit = 0;
        for (std::size_t a = 0; a < k; ++a) fit += beta[a] * X[i][a];
        const long double e2 = (Y[i] - fit) * (Y[i] - fit);
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) meat[a][b] += e2 * X[i][a] * X[i][b];
    }
    std::vector<std::vector<long double>> tmp(k, std::vector<long double>(k, 0)), cov(k, std::vector<long double>(k, 0));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
            for (std::size_t c = 0; c < k; ++c) tmp[a][b] += inv[a][c] * meat[c][b];
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
            for (std::size_t c = 0; c < k; ++c) cov[a][b] += tmp[a][c] * inv[c][b];
    Ols out;
    for (std::size_t a = 0; a < k; ++a) {
        out.beta.push_back(static_cast<double>(beta[a]));
        out.cov.emplace_back();
        for (std::size_t b = 0; b < k; ++b) out.cov[a].push_back(static_cast<double>(cov[a][b]));
        const double z = static_cast<double>(beta[a] / std::sqrt(cov[a][a]));
        out.z.push_back(z);
        out.p.push_back(std::erfc(std::fabs(z) / std::sqrt(2.0)));
    }
    return out;
}

struct Chi2 {
    double statistic = 0;
    double p = 1;
    long df = 0;
};

inline Chi2 chi2(const std::vector<std::vector<double>>& t) {
    const std::size_t r = t.size(), c = t[0].size();
    std::vector<double> rs(r, 0), cs(c, 0);
    double n = 0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            rs[i] += t[i][j];
            cs[j] += t[i][j];
            n += t[i][j];
        }
    Chi2 out;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double e = rs[i] * cs[j] / n;
            out.statistic += (t[i][j] - e) * (t[i][j] - e) / e;
        }
    out.df = static_cast<long>((r - 1) * (c - 1));
    boost::math::chi_squared dist(static_cast<double>(out.df));
    out.p = out.statistic <= 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, out.statistic));
    return out;
}

// Energy distance by listing every pair explicitly.
inline double energy_pairs(const std::vector<int>& a, const std::vector<int>& b, bool self_pairs) {
    double cross = 0;
    for (int x : a)
        for (int y : b) cross += x != y;
    cross /= static_cast<double>(a.size() * b.size());
    auto within = [&](const std::vector<int>& s) {
        double d = 0, pairs = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = 0; j < s.size(); ++j) {
                if (i == j && !self_pairs) continue;
                d += s[i] != s[j];
                pairs += 1;
            }
        return pairs == 0 ? 0.0 : d / pairs;
    };
    return 2 * cross - within(a) - within(b);
}

}  // namespace oracle
