#pragma once

// Independent matrix-exponential oracle (scaling and squaring + Taylor) on
// plain arrays; deliberately shares no code with the library's solvers.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Mat = std::vector<double>;  // row-major d x d

inline Mat mat_mul(const Mat& a, const Mat& b, std::size_t d) {
    Mat c(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t j = 0; j < d; ++j)
                c[i * d + j] += a[i * d + k] * b[k * d + j];
    return c;
}

inline Mat mat_identity(std::size_t d) {
    Mat m(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0;
    return m;
}

// exp(A * t) via scaling-and-squaring with a long Taylor series
inline Mat expm(Mat a, double t, std::size_t d) {
    for (double& x : a) x *= t;
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < d; ++j) row += std::fabs(a[i * d + j]);
        norm = std::max(norm, row);
    }
    int s = 0;
    while (norm > 0.5) {
        norm /= 2.0;
        ++s;
    }
    const double scale = std::ldexp(1.0, -s);
    for (double& x : a) x *= scale;

    Mat result = mat_identity(d);
    Mat term = mat_identity(d);
    for (int k = 1; k <= 30; ++k) {
        term = mat_mul(term, a, d);
        for (double& x : term) x /= double(k);
        for (std::size_t i = 0; i < d * d; ++i) result[i] += term[i];
    }
    for (int i = 0; i < s; ++i) result = mat_mul(result, result, d);
    return result;
}

inline std::vector<double> mat_vec(const Mat& a, const std::vector<double>& x,
                                   std::size_t d) {
    std::vector<double> y(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) y[i] += a[i * d + j] * x[j];
    return y;
}

}  // namespace oracle
