#include "xtrial/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace xtrial::stats {

namespace {

constexpr double kCfEps = 1e-15;
constexpr int kCfMaxIter = 1000;

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kCfMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kCfEps) return h;
    }
    throw NumericError("ibeta: continued fraction did not converge");
}

// Lower regularized incomplete gamma by series expansion (x < a+1).
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < kCfMaxIter; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kCfEps) {
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw NumericError("igamma: series did not converge");
}

// Upper regularized incomplete gamma by continued fraction (x >= a+1).
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kCfMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kCfEps) {
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw NumericError("igamma: continued fraction did not converge");
}

}  // namespace

double mean(std::span<const double> xs) {
    if (xs.empty()) throw NumericError("mean: empty input");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

MeanSd mean_sd(std::span<const double> xs) {
    if (xs.size() < 2) throw NumericError("mean_sd: need at least 2 values for a sample sd");
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

double ibeta(double x, double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw NumericError("ibeta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double igamma_upper(double a, double x) {
    if (!(a > 0.0)) throw NumericError("igamma_upper: a must be positive");
    if (x < 0.0) throw NumericError("igamma_upper: x must be nonnegative");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double t_tail_two_sided(double t, double df) {
    if (!(df >= 1.0)) throw NumericError("t_tail_two_sided: df must be >= 1");
    if (!std::isfinite(t)) return 0.0;
    if (t == 0.0) return 1.0;
    return ibeta(df / (df + t * t), 0.5 * df, 0.5);
}

double t_crit_two_sided(double alpha, double df) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw NumericError("t_crit_two_sided: alpha in (0,1)");
    double lo = 0.0, hi = 1.0;
    while (t_tail_two_sided(hi, df) > alpha) {
        hi *= 2.0;
        if (hi > 1e12) throw NumericError("t_crit_two_sided: no bracket");
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (t_tail_two_sided(mid, df) > alpha) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double f_tail(double f, int df1, int df2) {
    if (df1 < 1 || df2 < 1) throw NumericError("f_tail: degrees of freedom must be >= 1");
    if (f < 0.0) throw NumericError("f_tail: statistic must be nonnegative");
    if (f == 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    const double d1 = df1, d2 = df2;
    return ibeta(d2 / (d2 + d1 * f), 0.5 * d2, 0.5 * d1);
}

double chisq_tail(double x, int df) {
    if (df < 1) throw NumericError("chisq_tail: df must be >= 1");
    if (x < 0.0) throw NumericError("chisq_tail: statistic must be nonnegative");
    return igamma_upper(0.5 * df, 0.5 * x);
}

OlsFit ols(const Matrix& x, std::span<const double> y) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (y.size() != n) throw NumericError("ols: response length mismatch");
    if (n <= p) throw NumericError("ols: need more rows than columns");

    // Working copies; R overwrites the upper triangle, qty accumulates Q^T y.
    Matrix r = x;
    std::vector<double> qty(y.begin(), y.end());

    double max_colnorm = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += r(i, j) * r(i, j);
        max_colnorm = std::max(max_colnorm, std::sqrt(ss));
    }
    const double tol = 1e-10 * std::max(max_colnorm, 1.0);

    std::vector<double> v(n);
    for (std::size_t k = 0; k < p; ++k) {
        double sigma = 0.0;
        for (std::size_t i = k; i < n; ++i) sigma += r(i, k) * r(i, k);
        sigma = std::sqrt(sigma);
        if (sigma <= tol) {
            throw RankDeficientError(static_cast<int>(k),
                                     "ols: design matrix column " + std::to_string(k) +
                                         " is linearly dependent");
        }
        const double alpha = (r(k, k) > 0.0) ? -sigma : sigma;
        double vnorm2 = 0.0;
        v[k] = r(k, k) - alpha;
        vnorm2 += v[k] * v[k];
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = r(i, k);
            vnorm2 += v[i] * v[i];
        }
        if (vnorm2 > 0.0) {
            for (std::size_t j = k; j < p; ++j) {
                double dot = 0.0;
                for (std::size_t i = k; i < n; ++i) dot += v[i] * r(i, j);
                const double f = 2.0 * dot / vnorm2;
                for (std::size_t i = k; i < n; ++i) r(i, j) -= f * v[i];
            }
            double dot = 0.0;
            for (std::size_t i = k; i < n; ++i) dot += v[i] * qty[i];
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = k; i < n; ++i) qty[i] -= f * v[i];
        }
        r(k, k) = alpha;
    }

    OlsFit fit;
    fit.coefficients.assign(p, 0.0);
    for (std::size_t k = p; k-- > 0;) {
        double s = qty[k];
        for (std::size_t j = k + 1; j < p; ++j) s -= r(k, j) * fit.coefficients[j];
        fit.coefficients[k] = s / r(k, k);
    }

    double rss = 0.0;
    for (std::size_t i = p; i < n; ++i) rss += qty[i] * qty[i];
    fit.residual_ss = rss;
    fit.df_residual = static_cast<int>(n - p);

    const double ybar = mean(y);
    double tss = 0.0;
    for (double yi : y) tss += (yi - ybar) * (yi - ybar);
    fit.model_ss = std::max(0.0, tss - rss);
    return fit;
}

FTest f_test_nested(const OlsFit& full, const OlsFit& reduced) {
    const int df1 = reduced.df_residual - full.df_residual;
    const int df2 = full.df_residual;
    if (df1 <= 0) throw NumericError("f_test_nested: models have the same column count");
    if (df2 <= 0) throw NumericError("f_test_nested: full model has no residual df");
    const double num = reduced.residual_ss - full.residual_ss;
    FTest out;
    out.df1 = df1;
    out.df2 = df2;
    if (num <= 1e-300) {  // nothing extra explained (or constant response)
        out.f = 0.0;
        out.p = 1.0;
        return out;
    }
    if (full.residual_ss <= 0.0) {
        out.f = std::numeric_limits<double>::infinity();
        out.p = 0.0;
        return out;
    }
    out.f = (num / df1) / (full.residual_ss / df2);
    out.p = f_tail(out.f, df1, df2);
    return out;
}

Correlation pearson_r(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw NumericError("pearson_r: length mismatch");
    const std::size_t n = xs.size();
    if (n < 3) throw NumericError("pearson_r: need at least 3 observations");
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw NumericError("pearson_r: zero variance input");
    Correlation c;
    c.n = static_cast<int>(n);
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double denom = 1.0 - c.r * c.r;
    if (denom <= 0.0) {
        c.p = 0.0;
    } else {
        const double t = c.r * std::sqrt((n - 2) / denom);
        c.p = t_tail_two_sided(t, static_cast<double>(n - 2));
    }
    return c;
}

std::vector<double> loess(std::span<const double> xs, std::span<const double> ys,
                          double span, int degree) {
    const std::size_t n = xs.size();
    if (ys.size() != n) throw NumericError("loess: length mismatch");
    if (n < 5) throw NumericError("loess: need at least 5 points");
    if (!(span > 0.0 && span <= 1.0)) throw NumericError("loess: span must be in (0,1]");
    if (degree != 0 && degree != 1) throw NumericError("loess: degree must be 0 or 1");
    const std::size_t q =
        std::min(n, static_cast<std::size_t>(std::ceil(span * static_cast<double>(n))));
    if (q < static_cast<std::size_t>(degree) + 2) {
        throw NumericError("loess: span selects fewer than degree+2 neighbors");
    }

    std::vector<double> fitted(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        const double xi = xs[i];
        std::nth_element(order.begin(), order.begin() + (q - 1), order.end(),
                         [&](std::size_t a, std::size_t b) {
                             const double da = std::fabs(xs[a] - xi);
                             const double db = std::fabs(xs[b] - xi);
                             return da != db ? da < db : a < b;
                         });
        const double dmax = std::fabs(xs[order[q - 1]] - xi);

        double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
        double plain_sum = 0.0;
        for (std::size_t j = 0; j < q; ++j) {
            const std::size_t idx = order[j];
            const double d = std::fabs(xs[idx] - xi);
            double w;
            if (dmax <= 0.0) {
                w = 1.0;
            } else {
                const double u = d / dmax;
                const double c = 1.0 - u * u * u;
                w = c * c * c;
            }
            plain_sum += ys[idx];
            const double dx = xs[idx] - xi;  // center at the query point
            sw += w;
            swx += w * dx;
            swy += w * ys[idx];
            swxx += w * dx * dx;
            swxy += w * dx * ys[idx];
        }
        if (sw <= 0.0) {  // every neighbor sits exactly at dmax
            fitted[i] = plain_sum / static_cast<double>(q);
            continue;
        }
        if (degree == 0) {
            fitted[i] = swy / sw;
            continue;
        }
        const double det = sw * swxx - swx * swx;
        if (std::fabs(det) <= 1e-12 * std::max(1.0, sw * swxx)) {
            fitted[i] = swy / sw;  // degenerate window, fall back to the mean
        } else {
            // intercept at dx=0 is the fitted value at xi
            fitted[i] = (swxx * swy - swx * swxy) / det;
        }
    }
    return fitted;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Good enough for
// the handful of covariate columns we ever project.
void jacobi_eigen(Matrix a, std::vector<double>& eigenvalues, Matrix& eigenvectors) {
    const std::size_t p = a.rows();
    eigenvectors = Matrix(p, p, 0.0);
    for (std::size_t i = 0; i < p; ++i) eigenvectors(i, i) = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-28) break;
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = i + 1; j < p; ++j) {
                if (std::fabs(a(i, j)) < 1e-300) continue;
                const double theta = (a(j, j) - a(i, i)) / (2.0 * a(i, j));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < p; ++k) {
                    const double aik = a(i, k), ajk = a(j, k);
                    a(i, k) = c * aik - s * ajk;
                    a(j, k) = s * aik + c * ajk;
                }
                for (std::size_t k = 0; k < p; ++k) {
                    const double aki = a(k, i), akj = a(k, j);
                    a(k, i) = c * aki - s * akj;
                    a(k, j) = s * aki + c * akj;
                    const double vki = eigenvectors(k, i), vkj = eigenvectors(k, j);
                    eigenvectors(k, i) = c * vki - s * vkj;
                    eigenvectors(k, j) = s * vki + c * vkj;
                }
            }
        }
    }
    eigenvalues.assign(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) eigenvalues[i] = a(i, i);
}

}  // namespace

Matrix pca_project(const Matrix& rows, int k) {
    const std::size_t n = rows.rows();
    const std::size_t p = rows.cols();
    if (n < 2) throw NumericError("pca_project: need at least 2 rows");
    if (k < 1 || static_cast<std::size_t>(k) > p) {
        throw NumericError("pca_project: k must be in [1, cols]");
    }

    Matrix centered = rows;
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += centered(i, j);
        m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) centered(i, j) -= m;
    }

    Matrix cov(p, p);
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a; b < p; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += centered(i, a) * centered(i, b);
            s /= static_cast<double>(n - 1);
            cov(a, b) = s;
            cov(b, a) = s;
        }
    }

    std::vector<double> evals;
    Matrix evecs;
    jacobi_eigen(cov, evals, evecs);

    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return evals[a] > evals[b]; });

    Matrix components(p, static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        const std::size_t src = idx[static_cast<std::size_t>(c)];
        std::size_t peak = 0;
        for (std::size_t i = 1; i < p; ++i) {
            if (std::fabs(evecs(i, src)) > std::fabs(evecs(peak, src))) peak = i;
        }
        const double sign = evecs(peak, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < p; ++i) {
            components(i, static_cast<std::size_t>(c)) = sign * evecs(i, src);
        }
    }

    Matrix scores(n, static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                s += centered(i, j) * components(j, static_cast<std::size_t>(c));
            }
            scores(i, static_cast<std::size_t>(c)) = s;
        }
    }
    return scores;
}

}  // namespace xtrial::stats
