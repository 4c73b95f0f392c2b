// Unscented transform and the generic UKF measurement update, shared by the
// joint polarization/phase filter and the phase-only filter.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <array>
#include <cmath>
#include <string>

#include "cvqkd/common.hpp"

namespace cvqkd::ut {

template <int N>
using Vec = Eigen::Matrix<double, N, 1>;
template <int R, int C = R>
using Mat = Eigen::Matrix<double, R, C>;

struct Params {
    double alpha = 1e-2;
    double beta = 2.0;
    double kappa = 0.0;
    double jitter = 1e-12;

    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::invalid_argument, "UT alpha must be in (0, 1]");
        if (!std::isfinite(beta) || !std::isfinite(kappa) || !(jitter >= 0.0)) {
            throw Error(Errc::invalid_argument, "UT beta/kappa/jitter must be finite");
        }
    }
};

template <int N>
struct SigmaSet {
    static constexpr int count = 2 * N + 1;
    std::array<Vec<N>, count> points;
    std::array<double, count> wm;
    std::array<double, count> wc;
};

template <int N>
double lambda(const Params& p) {
    return p.alpha * p.alpha * (N + p.kappa) - N;
}

/// 2N+1 points mean +- columns of the Cholesky factor of (N + lambda)(cov + jitter I).
template <int N>
SigmaSet<N> sigma_points(const Vec<N>& mean, const Mat<N>& cov, const Params& p) {
    const double lam = lambda<N>(p);
    const double c = N + lam;
    if (!(c > 0.0)) throw Error(Errc::invalid_argument, "UT spread N + lambda must be positive");
    Mat<N> s = c * cov;
    s.diagonal().array() += c * p.jitter;
    Eigen::LLT<Mat<N>> llt(s);
    if (llt.info() != Eigen::Success) {
        throw Error(Errc::non_positive_definite, "covariance is not positive definite");
    }
    const Mat<N> l = llt.matrixL();

    SigmaSet<N> set;
    set.points[0] = mean;
    set.wm[0] = lam / c;
    set.wc[0] = lam / c + (1.0 - p.alpha * p.alpha + p.beta);
    const double w = 0.5 / c;
    for (int i = 0; i < N; ++i) {
        set.points[1 + i] = mean + l.col(i);
        set.points[1 + N + i] = mean - l.col(i);
        set.wm[1 + i] = set.wm[1 + N + i] = w;
        set.wc[1 + i] = set.wc[1 + N + i] = w;
    }
    return set;
}

template <int N>
struct Gaussian {
    Vec<N> mean;
    Mat<N> cov;
};

/// UKF measurement update with measurement function h: Vec<N> -> Vec<M> and
/// measurement covariance r. Throws Errc::singular_innovation when the
/// innovation covariance cannot be factored.
template <int N, int M, class H>
Gaussian<N> update(const Gaussian<N>& prior, const Vec<M>& y, const Mat<M>& r, H&& h,
                   const Params& p) {
    const auto set = sigma_points<N>(prior.mean, prior.cov, p);
    constexpr int K = SigmaSet<N>::count;
    std::array<Vec<M>, K> z;
    Vec<M> z_mean = Vec<M>::Zero();
    for (int i = 0; i < K; ++i) {
        z[i] = h(set.points[i]);
        z_mean += set.wm[i] * z[i];
    }
    Mat<M> s = r;
    Mat<N, M> cxz = Mat<N, M>::Zero();
    for (int i = 0; i < K; ++i) {
        const Vec<M> dz = z[i] - z_mean;
        const Vec<N> dx = set.points[i] - prior.mean;
        s.noalias() += set.wc[i] * dz * dz.transpose();
        cxz.noalias() += set.wc[i] * dx * dz.transpose();
    }
    Eigen::LLT<Mat<M>> llt(s);
    if (llt.info() != Eigen::Success || !(s.determinant() > 0.0)) {
        throw Error(Errc::singular_innovation,
                    "innovation covariance is singular (is r_meas zero?)");
    }
    const Mat<N, M> gain = llt.solve(cxz.transpose()).transpose();
    Gaussian<N> post;
    post.mean = prior.mean + gain * (y - z_mean);
    post.cov = prior.cov - gain * s * gain.transpose();
    post.cov = 0.5 * (post.cov + post.cov.transpose());
    return post;
}

}  // namespace cvqkd::ut
