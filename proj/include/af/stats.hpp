// Small statistics kit used by the test and acceptance suites: moments,
// regularized incomplete beta/gamma, Welch t-test, chi-square goodness of
// fit, Spearman trend test.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace af::stats {

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n-1 denominator).
inline double stdev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

inline double log_gamma(double x) { return std::lgamma(x); }

namespace detail {

// Continued fraction for the incomplete beta function.
inline double betacf(double a, double b, double x) {
    const double eps = 3e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta = log_gamma(a + b) - log_gamma(a) - log_gamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(lbeta);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// Regularized lower incomplete gamma P(a, x), by series / continued fraction.
inline double inc_gamma_lower(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) {
        double sum = 1.0 / a, term = sum, ap = a;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
    }
    const double fpmin = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / fpmin, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return 1.0 - std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
}

/// CDF of Student's t with df degrees of freedom.
inline double t_cdf(double t, double df) {
    const double x = df / (df + t * t);
    const double p = 0.5 * inc_beta(df / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - p : p;
}

/// CDF of chi-square with k degrees of freedom.
inline double chi2_cdf(double x, double k) { return inc_gamma_lower(k / 2.0, x / 2.0); }

/// One-sided Welch test p-value for H1: mean(a) > mean(b).
inline double welch_p_greater(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a), mb = mean(b);
    const double va = stdev(a) * stdev(a), vb = stdev(b) * stdev(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double se2 = va / na + vb / nb;
    if (se2 <= 0.0) return ma > mb ? 0.0 : 1.0;
    const double t = (ma - mb) / std::sqrt(se2);
    double df = se2 * se2 /
                (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
    if (!(df > 0.0)) df = na + nb - 2.0;
    return 1.0 - t_cdf(t, df);
}

/// Chi-square goodness-of-fit p-value against uniform expected counts.
inline double chi2_uniform_p(const std::vector<long>& counts) {
    const long total = std::accumulate(counts.begin(), counts.end(), 0L);
    const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
    double stat = 0.0;
    for (long c : counts) {
        const double d = static_cast<double>(c) - expected;
        stat += d * d / expected;
    }
    return 1.0 - chi2_cdf(stat, static_cast<double>(counts.size() - 1));
}

inline std::vector<double> ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

/// One-sided p-value for an increasing trend of values over their index,
/// via Spearman rho and the t approximation.
inline double spearman_trend_p(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 4) throw std::invalid_argument("trend test needs >= 4 points");
    std::vector<double> idx(n);
    std::iota(idx.begin(), idx.end(), 0.0);
    const double rho = spearman_rho(idx, values);
    if (std::fabs(rho) >= 1.0) return rho > 0.0 ? 0.0 : 1.0;
    const double df = static_cast<double>(n - 2);
    const double t = rho * std::sqrt(df / (1.0 - rho * rho));
    return 1.0 - t_cdf(t, df);
}

}  // namespace af::stats
