#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xtrial/core.hpp"

// Self-contained numerical primitives: distribution tails via incomplete
// beta/gamma continued fractions, least squares via Householder QR, loess,
// and a small dense PCA. No external numerical dependencies.

namespace xtrial::stats {

// Dense row-major matrix, only as big as a design matrix ever gets here.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, divisor n-1
};

double mean(std::span<const double> xs);
MeanSd mean_sd(std::span<const double> xs);  // throws NumericError if n < 2

// Regularized incomplete beta I_x(a,b) and upper incomplete gamma Q(a,x).
double ibeta(double x, double a, double b);
double igamma_upper(double a, double x);

// P(|T_df| >= |t|)
double t_tail_two_sided(double t, double df);
// Upper critical value: t such that t_tail_two_sided(t, df) == alpha.
double t_crit_two_sided(double alpha, double df);
// P(F_{df1,df2} >= f)
double f_tail(double f, int df1, int df2);
// P(Chi2_df >= x)
double chisq_tail(double x, int df);

struct OlsFit {
    std::vector<double> coefficients;
    double residual_ss = 0.0;
    int df_residual = 0;
    double model_ss = 0.0;  // total SS about the mean minus residual SS
};

// Thrown when a design-matrix column is (numerically) linearly dependent on
// the ones before it; `column` is its zero-based index.
class RankDeficientError : public NumericError {
public:
    RankDeficientError(int column, const std::string& msg)
        : NumericError(msg), column(column) {}
    int column;
};

// Least squares via Householder QR; rank tolerance 1e-10 x largest column norm.
OlsFit ols(const Matrix& x, std::span<const double> y);

struct FTest {
    double f = 0.0;
    int df1 = 0;
    int df2 = 0;
    double p = 1.0;
};

// `reduced` must be nested in `full` (fitted to the same response).
FTest f_test_nested(const OlsFit& full, const OlsFit& reduced);

struct Correlation {
    double r = 0.0;
    double p = 1.0;
    int n = 0;
};

Correlation pearson_r(std::span<const double> xs, std::span<const double> ys);

// Tricube-weighted local polynomial regression evaluated at the data points.
std::vector<double> loess(std::span<const double> xs, std::span<const double> ys,
                          double span = 0.75, int degree = 1);

// Projection of (column-centered) rows onto the top-k principal components of
// the sample covariance. Components ordered by decreasing eigenvalue; the
// largest-magnitude loading of each component is made positive.
Matrix pca_project(const Matrix& rows, int k);

}  // namespace xtrial::stats
