#pragma once

#include "calsens/core.hpp"
#include "calsens/random.hpp"

#include <cmath>

namespace testutil {

using calsens::Matrix;
using calsens::Vector;

// Random design with intercept, logistic treatment and linear outcome.
inline calsens::ObservedData random_data(int n, int p, std::uint64_t seed, double signal = 0.8) {
    calsens::Rng rng(seed);
    Matrix x(n, p + 1);
    Vector t(n), y(n);
    for (;;) {
        for (int i = 0; i < n; ++i) {
            x(i, 0) = 1.0;
            for (int j = 1; j <= p; ++j) x(i, j) = rng.normal();
            double lin = 0.2;
            for (int j = 1; j <= std::min(p, 3); ++j) lin += signal * x(i, j) / j;
            t[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-lin))) ? 1.0 : 0.0;
            y[i] = x.row(i).tail(p).sum() * 0.5 + rng.normal();
        }
        if (t.sum() >= 2 && t.sum() <= n - 2) break;
    }
    return calsens::ObservedData(y, t, x, x);
}

// Unpenalized losses written out directly for oracle use.
inline double cal_loss(const calsens::ObservedData& d, const Vector& g) {
    const Vector e = d.f() * g;
    double s = 0;
    for (Eigen::Index i = 0; i < e.size(); ++i) s += d.t()[i] * std::exp(-e[i]) + (1 - d.t()[i]) * e[i];
    return s / e.size();
}

inline double logit_loss(const calsens::ObservedData& d, const Vector& g) {
    const Vector e = d.f() * g;
    double s = 0;
    for (Eigen::Index i = 0; i < e.size(); ++i) s += std::log(1 + std::exp(e[i])) - d.t()[i] * e[i];
    return s / e.size();
}

inline double l1_tail(const Vector& v) {
    return v.tail(v.size() - 1).cwiseAbs().sum();
}

// Proximal gradient (ISTA with constant step and many iterations) on a smooth
// loss given by value/gradient callbacks. Slow but independent.
template <class Grad, class Val>
Vector ista(Grad grad, Val val, Vector x, double lambda, double step, int iters) {
    for (int k = 0; k < iters; ++k) {
        Vector z = x - step * grad(x);
        for (Eigen::Index j = 1; j < z.size(); ++j) {
            const double a = std::abs(z[j]) - step * lambda;
            z[j] = a > 0 ? std::copysign(a, z[j]) : 0.0;
        }
        // backtracking safeguard
        double st = step;
        while (val(z) + lambda * l1_tail(z) > val(x) + lambda * l1_tail(x) + 1e-15 && st > 1e-12) {
            st *= 0.5;
            z = x - st * grad(x);
            for (Eigen::Index j = 1; j < z.size(); ++j) {
                const double a = std::abs(z[j]) - st * lambda;
                z[j] = a > 0 ? std::copysign(a, z[j]) : 0.0;
            }
        }
        x = z;
    }
    return x;
}

}  // namespace testutil
