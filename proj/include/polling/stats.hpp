#pragma once

// Hypothesis tests for comparing performance samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace polling::stats {

class DegenerateSample : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Alternative { two_sided, less, greater };

struct TestResult {
    double statistic = 0.0;
    double df = 0.0;  // 0 where not applicable
    double p_two = 1.0;
    double p_less = 1.0;
    double p_greater = 1.0;

    double p(Alternative alt) const
    {
        switch (alt) {
        case Alternative::less: return p_less;
        case Alternative::greater: return p_greater;
        default: return p_two;
        }
    }
    bool reject_at(double zeta, Alternative alt = Alternative::two_sided) const { return p(alt) <= zeta; }
};

inline double clamp01(double p) { return std::min(1.0, std::max(0.0, p)); }

inline double mean(std::span<const double> x)
{
    if (x.empty()) throw DegenerateSample("empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance with N - 1 denominator.
inline double variance(std::span<const double> x)
{
    if (x.size() < 2) throw DegenerateSample("variance needs at least 2 values");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

/// m_k = (1/N) sum (x - mean)^k
inline double central_moment(std::span<const double> x, int k)
{
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += std::pow(v - m, k);
    return s / static_cast<double>(x.size());
}

inline double skewness(std::span<const double> x)
{
    const double m2 = central_moment(x, 2);
    return central_moment(x, 3) / std::pow(m2, 1.5);
}

/// Excess kurtosis m4 / m2^2 - 3.
inline double excess_kurtosis(std::span<const double> x)
{
    const double m2 = central_moment(x, 2);
    return central_moment(x, 4) / (m2 * m2) - 3.0;
}

inline TestResult t_result(double t, double df)
{
    TestResult r;
    r.statistic = t;
    r.df = df;
    const boost::math::students_t dist(df);
    r.p_less = clamp01(boost::math::cdf(dist, t));
    r.p_greater = clamp01(boost::math::cdf(boost::math::complement(dist, t)));
    r.p_two = clamp01(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
    return r;
}

/// H0: mean(X) = mu0.
inline TestResult t_test_one_sample(std::span<const double> x, double mu0)
{
    if (x.size() < 2) throw DegenerateSample("t test needs at least 2 values");
    const double sd = stddev(x);
    if (!(sd > 0.0)) throw DegenerateSample("t test on a constant sample");
    const double n = static_cast<double>(x.size());
    return t_result((mean(x) - mu0) * std::sqrt(n) / sd, n - 1.0);
}

/// H0: mean(X) = mean(Y), unequal variances, Welch-Satterthwaite df.
inline TestResult welch_t_test(std::span<const double> x, std::span<const double> y)
{
    if (x.size() < 2 || y.size() < 2) throw DegenerateSample("Welch test needs at least 2 values per sample");
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double sx = variance(x) / nx, sy = variance(y) / ny;
    if (!(sx + sy > 0.0)) throw DegenerateSample("Welch test on two constant samples");
    const double t = (mean(x) - mean(y)) / std::sqrt(sx + sy);
    const double df = (sx + sy) * (sx + sy) / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
    return t_result(t, df);
}

/// Classic two-sample t with pooled variance.
inline TestResult pooled_t_test(std::span<const double> x, std::span<const double> y)
{
    if (x.size() < 2 || y.size() < 2) throw DegenerateSample("pooled t test needs at least 2 values per sample");
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double sp2 = ((nx - 1.0) * variance(x) + (ny - 1.0) * variance(y)) / (nx + ny - 2.0);
    if (!(sp2 > 0.0)) throw DegenerateSample("pooled t test on constant samples");
    const double t = (mean(x) - mean(y)) / std::sqrt(sp2 * (1.0 / nx + 1.0 / ny));
    return t_result(t, nx + ny - 2.0);
}

/// sum over pairs of S(x, y): 1 if x > y, 1/2 on ties, 0 otherwise.
inline double u_statistic(std::span<const double> x, std::span<const double> y)
{
    std::vector<double> ys(y.begin(), y.end());
    std::sort(ys.begin(), ys.end());
    double u = 0.0;
    for (double v : x) {
        const auto lo = std::lower_bound(ys.begin(), ys.end(), v);
        const auto hi = std::upper_bound(lo, ys.end(), v);
        u += static_cast<double>(lo - ys.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return u;
}

struct MannWhitneyResult : TestResult {
    double u_xy = 0.0;
    double u_yx = 0.0;
    bool exact = false;
};

/// Samples up to this size without ties use the exact null distribution.
inline constexpr std::size_t kExactUThreshold = 20;

/// Exact null counts of U for sample sizes n, m (no ties).
inline std::vector<double> exact_u_distribution(std::size_t n, std::size_t m)
{
    // f[i][j][u]: number of arrangements of i x's and j y's with U = u
    const std::size_t maxu = n * m;
    std::vector<std::vector<std::vector<double>>> f(n + 1, std::vector<std::vector<double>>(m + 1));
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; j <= m; ++j) {
            f[i][j].assign(i * j + 1, 0.0);
            if (i == 0 || j == 0) {
                f[i][j][0] = 1.0;
                continue;
            }
            // largest value is an x (beats all j y's) or a y
            for (std::size_t u = 0; u <= i * j; ++u) {
                double v = 0.0;
                if (u >= j && u - j < f[i - 1][j].size()) v += f[i - 1][j][u - j];
                if (u < f[i][j - 1].size()) v += f[i][j - 1][u];
                f[i][j][u] = v;
            }
        }
    std::vector<double> pmf = f[n][m];
    const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
    for (double& v : pmf) v /= total;
    pmf.resize(maxu + 1, 0.0);
    return pmf;
}

/// H0: X and Y are stochastically equal. p_greater tests X > Y.
inline MannWhitneyResult mann_whitney_u(std::span<const double> x, std::span<const double> y)
{
    if (x.empty() || y.empty()) throw DegenerateSample("Mann-Whitney test needs non-empty samples");
    const std::size_t n = x.size(), m = y.size();
    MannWhitneyResult r;
    r.u_xy = u_statistic(x, y);
    r.u_yx = static_cast<double>(n * m) - r.u_xy;
    r.statistic = std::min(r.u_xy, r.u_yx);

    std::vector<double> all(x.begin(), x.end());
    all.insert(all.end(), y.begin(), y.end());
    std::sort(all.begin(), all.end());
    double tie_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j] == all[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_sum += t * t * t - t;
        i = j;
    }

    if (tie_sum == 0.0 && n <= kExactUThreshold && m <= kExactUThreshold) {
        r.exact = true;
        const auto pmf = exact_u_distribution(n, m);
        const auto u = static_cast<std::size_t>(std::llround(r.u_xy));
        double le = 0.0, ge = 0.0;
        for (std::size_t k = 0; k < pmf.size(); ++k) {
            if (k <= u) le += pmf[k];
            if (k >= u) ge += pmf[k];
        }
        r.p_less = clamp01(le);
        r.p_greater = clamp01(ge);
        r.p_two = clamp01(2.0 * std::min(le, ge));
        return r;
    }

    const double N = static_cast<double>(n + m);
    const double nm = static_cast<double>(n) * static_cast<double>(m);
    const double mu = nm / 2.0;
    const double var = nm / 12.0 * ((N + 1.0) - tie_sum / (N * (N - 1.0)));
    if (!(var > 0.0)) throw DegenerateSample("Mann-Whitney test on identical constant samples");
    const double sd = std::sqrt(var);
    const boost::math::normal z;
    r.p_greater = clamp01(boost::math::cdf(boost::math::complement(z, (r.u_xy - mu - 0.5) / sd)));
    r.p_less = clamp01(boost::math::cdf(z, (r.u_xy - mu + 0.5) / sd));
    const double zt = (std::abs(r.u_xy - mu) - 0.5) / sd;
    r.p_two = clamp01(2.0 * boost::math::cdf(boost::math::complement(z, std::max(zt, 0.0))));
    return r;
}

struct NormalityResult : TestResult {
    double g1 = 0.0;  // skewness
    double g2 = 0.0;  // excess kurtosis
    double z1 = 0.0;
    double z2 = 0.0;
};

/// D'Agostino-Pearson k^2 omnibus test, H0: X is normal.
inline NormalityResult dagostino_k2(std::span<const double> x)
{
    if (x.size() < 20) throw DegenerateSample("k2 test needs at least 20 values");
    const double m2 = central_moment(x, 2);
    if (!(m2 > 0.0)) throw DegenerateSample("k2 test on a constant sample");
    const double N = static_cast<double>(x.size());
    NormalityResult r;
    r.g1 = central_moment(x, 3) / std::pow(m2, 1.5);
    r.g2 = central_moment(x, 4) / (m2 * m2) - 3.0;

    // skewness transform
    const double var_g1 = 6.0 * (N - 2.0) / ((N + 1.0) * (N + 3.0));
    const double kurt_g1 = 36.0 * (N - 7.0) * (N * N + 2.0 * N - 5.0) / ((N - 2.0) * (N + 5.0) * (N + 7.0) * (N + 9.0));
    const double W2 = std::sqrt(2.0 * kurt_g1 + 4.0) - 1.0;
    const double delta = 1.0 / std::sqrt(0.5 * std::log(W2));
    r.z1 = delta * std::asinh(r.g1 * std::sqrt((W2 - 1.0) / (2.0 * var_g1)));

    // kurtosis transform
    const double mean_g2 = -6.0 / (N + 1.0);
    const double var_g2 = 24.0 * N * (N - 2.0) * (N - 3.0) / ((N + 1.0) * (N + 1.0) * (N + 3.0) * (N + 5.0));
    const double G1 = 6.0 * (N * N - 5.0 * N + 2.0) / ((N + 7.0) * (N + 9.0)) *
                      std::sqrt(6.0 * (N + 3.0) * (N + 5.0) / (N * (N - 2.0) * (N - 3.0)));
    const double A = 6.0 + 8.0 / G1 * (2.0 / G1 + std::sqrt(1.0 + 4.0 / (G1 * G1)));
    const double xs = (r.g2 - mean_g2) / std::sqrt(var_g2);
    const double inner = (1.0 - 2.0 / A) / (1.0 + xs * std::sqrt(2.0 / (A - 4.0)));
    r.z2 = std::sqrt(9.0 * A / 2.0) * (1.0 - 2.0 / (9.0 * A) - std::cbrt(inner));

    r.statistic = r.z1 * r.z1 + r.z2 * r.z2;
    r.df = 2.0;
    const boost::math::chi_squared chi(2.0);
    r.p_greater = clamp01(boost::math::cdf(boost::math::complement(chi, r.statistic)));
    r.p_two = r.p_greater;
    r.p_less = clamp01(1.0 - r.p_greater);
    return r;
}

inline double pearson_r(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw DegenerateSample("Pearson r needs equal sizes >= 2");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateSample("Pearson r on a constant sample");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct Summary {
    double mean = 0.0, std = 0.0, min = 0.0, max = 0.0, skewness = 0.0, kurtosis = 0.0;
    double k2 = 0.0, k2_p = 1.0;
    bool normal = true;  // k2 fails to reject at zeta
};

inline Summary summarize(std::span<const double> x, double zeta = 0.05)
{
    Summary s;
    s.mean = mean(x);
    s.std = stddev(x);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    s.min = *lo;
    s.max = *hi;
    const auto k = dagostino_k2(x);
    s.skewness = k.g1;
    s.kurtosis = k.g2;
    s.k2 = k.statistic;
    s.k2_p = k.p_two;
    s.normal = !k.reject_at(zeta);
    return s;
}

/// Elementwise x - y.
inline std::vector<double> difference(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw DegenerateSample("difference needs equal sizes");
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - y[i];
    return d;
}

}  // namespace polling::stats
