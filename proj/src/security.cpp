#include "cvqkd/security.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace cvqkd::security {

ReceiverModel parse_receiver_model(const std::string& s) {
    if (s == "trusted") return ReceiverModel::trusted;
    if (s == "untrusted") return ReceiverModel::untrusted;
    throw Error(Errc::config, "receiver_model must be 'trusted' or 'untrusted', got '" + s + "'");
}

const char* to_string(ReceiverModel m) {
    return m == ReceiverModel::trusted ? "trusted" : "untrusted";
}

void SecurityParams::validate() const {
    if (!(v_mod > 0.0)) throw Error(Errc::invalid_argument, "v_mod must be > 0");
    if (!(tau > 0.0 && tau <= 1.0)) throw Error(Errc::invalid_argument, "tau must be in (0, 1]");
    if (!(beta > 0.0 && beta <= 1.0)) throw Error(Errc::invalid_argument, "beta must be in (0, 1]");
    if (!(v_el >= 0.0)) throw Error(Errc::invalid_argument, "v_el must be >= 0");
}

ChannelEstimate estimate_channel(std::span<const cplx> tx, std::span<const cplx> rx,
                                 const SecurityParams& params) {
    params.validate();
    if (tx.size() != rx.size()) throw Error(Errc::length_mismatch, "tx and rx frame lengths differ");
    const std::size_t n = tx.size();
    if (n < 2) throw Error(Errc::invalid_argument, "need at least 2 symbols");
    const double nd = static_cast<double>(n);

    cplx mt{};
    cplx mr{};
    for (std::size_t i = 0; i < n; ++i) {
        mt += tx[i];
        mr += rx[i];
    }
    mt /= nd;
    mr /= nd;
    double sxx = 0.0;  // sum over both quadratures
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const cplx t = tx[i] - mt;
        const cplx r = rx[i] - mr;
        sxx += t.real() * t.real() + t.imag() * t.imag();
        sxy += t.real() * r.real() + t.imag() * r.imag();
        syy += r.real() * r.real() + r.imag() * r.imag();
    }
    if (!(sxx > 0.0)) throw Error(Errc::invalid_argument, "transmitted symbols have zero variance");
    const double g = sxy / sxx;
    const double v_res = std::max(0.0, syy - g * sxy) / (2.0 * nd - 3.0);
    const double t_raw = g * g / params.tau;
    if (!(t_raw > 0.0)) throw Error(Errc::invalid_argument, "estimated transmittance is not positive");

    ChannelEstimate est;
    est.n_symbols = n;
    est.xi_hat = 2.0 * (v_res - 1.0 - params.v_el) / (params.tau * t_raw);
    est.t_hat = std::min(t_raw, 1.0);
    est.t_clamped = t_raw > 1.0;
    est.xi_negative = est.xi_hat < 0.0;
    return est;
}

double mutual_information(const ChannelEstimate& est, const SecurityParams& params) {
    params.validate();
    if (!std::isfinite(est.t_hat) || !std::isfinite(est.xi_hat)) {
        throw Error(Errc::invalid_estimate, "non-finite channel estimate");
    }
    if (!(est.t_hat >= 0.0)) throw Error(Errc::invalid_estimate, "negative transmittance");
    const double tt = params.tau * est.t_hat;
    const double noise = 1.0 + params.v_el + 0.5 * tt * est.xi_hat;
    if (!(noise > 0.0)) throw Error(Errc::invalid_estimate, "non-positive noise variance");
    return std::log2(1.0 + 0.5 * tt * params.v_mod / noise);
}

double g_function(double x) {
    if (!(x >= 0.0)) {
        if (x > -1e-12) return 0.0;
        throw Error(Errc::invalid_argument, "g(x) needs x >= 0");
    }
    if (x == 0.0) return 0.0;
    return (x + 1.0) * std::log2(x + 1.0) - x * std::log2(x);
}

namespace {

Eigen::MatrixXd omega(int modes) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * modes, 2 * modes);
    for (int i = 0; i < modes; ++i) {
        w(2 * i, 2 * i + 1) = 1.0;
        w(2 * i + 1, 2 * i) = -1.0;
    }
    return w;
}

}  // namespace

Eigen::VectorXd symplectic_eigenvalues(const Eigen::MatrixXd& gamma) {
    const auto dim = gamma.rows();
    if (dim != gamma.cols() || dim % 2 != 0 || dim == 0) {
        throw Error(Errc::invalid_argument, "covariance must be square with even dimension");
    }
    const int modes = static_cast<int>(dim / 2);
    const Eigen::MatrixXd sym = 0.5 * (gamma + gamma.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0)) {
        throw Error(Errc::unphysical_covariance, "covariance is not positive definite");
    }
    const Eigen::MatrixXd root =
        es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    const Eigen::MatrixXd a = root * omega(modes) * root;  // antisymmetric
    const Eigen::MatrixXd m = -(a * a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    Eigen::VectorXd ev = es2.eigenvalues();  // ascending, pairs
    Eigen::VectorXd nu(modes);
    for (int i = 0; i < modes; ++i) {
        nu[i] = std::sqrt(std::max(0.0, 0.5 * (ev[2 * i] + ev[2 * i + 1])));
    }
    return nu;
}

double gaussian_entropy(const Eigen::MatrixXd& gamma) {
    const Eigen::VectorXd nu = symplectic_eigenvalues(gamma);
    double s = 0.0;
    for (double v : nu) {
        if (v < 1.0 - 1e-9) {
            throw Error(Errc::invalid_estimate, "symplectic eigenvalue below 1: unphysical estimate");
        }
        s += g_function(std::max(0.0, 0.5 * (v - 1.0)));
    }
    return s;
}

Eigen::MatrixXd heterodyne_condition(const Eigen::MatrixXd& gamma, int measured_mode) {
    const auto dim = gamma.rows();
    const int modes = static_cast<int>(dim / 2);
    if (measured_mode < 0 || measured_mode >= modes || modes < 2) {
        throw Error(Errc::invalid_argument, "invalid mode to condition on");
    }
    std::vector<int> keep;
    for (int i = 0; i < dim; ++i) {
        if (i / 2 != measured_mode) keep.push_back(i);
    }
    const int k = static_cast<int>(keep.size());
    Eigen::MatrixXd gk(k, k);
    Eigen::MatrixXd sigma(k, 2);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) gk(i, j) = gamma(keep[i], keep[j]);
        for (int j = 0; j < 2; ++j) sigma(i, j) = gamma(keep[i], 2 * measured_mode + j);
    }
    const Eigen::Matrix2d gm = gamma.block<2, 2>(2 * measured_mode, 2 * measured_mode) +
                               Eigen::Matrix2d::Identity();
    return gk - sigma * gm.inverse() * sigma.transpose();
}

Eigen::Matrix4d eb_covariance(double v_mod, double t, double xi) {
    const double v = v_mod + 1.0;
    const double z = std::sqrt(t * (v * v - 1.0));
    const double w = t * (v + xi) + 1.0 - t;
    Eigen::Matrix4d g = Eigen::Matrix4d::Zero();
    g(0, 0) = g(1, 1) = v;
    g(2, 2) = g(3, 3) = w;
    g(0, 2) = g(2, 0) = z;
    g(1, 3) = g(3, 1) = -z;
    return g;
}

namespace {

void check_estimate(const ChannelEstimate& est) {
    if (!std::isfinite(est.t_hat) || !std::isfinite(est.xi_hat)) {
        throw Error(Errc::invalid_estimate, "non-finite channel estimate");
    }
    if (!(est.t_hat > 0.0 && est.t_hat <= 1.0)) {
        throw Error(Errc::invalid_estimate, "transmittance estimate outside (0, 1]");
    }
}

double holevo_untrusted(double v_mod, double t, double xi) {
    const Eigen::MatrixXd gab = eb_covariance(v_mod, t, xi);
    return gaussian_entropy(gab) - gaussian_entropy(heterodyne_condition(gab, 1));
}

}  // namespace

double holevo_bound(const ChannelEstimate& est, const SecurityParams& params) {
    params.validate();
    check_estimate(est);
    const double t = est.t_hat;
    const double xi = est.xi_hat;

    if (params.receiver_model == ReceiverModel::untrusted) {
        const double tt = params.tau * t;
        return holevo_untrusted(params.v_mod, tt, xi + 2.0 * params.v_el / tt);
    }

    const double tau = params.tau;
    if (tau == 1.0 && params.v_el != 0.0) {
        throw Error(Errc::invalid_argument, "trusted model with tau = 1 requires v_el = 0");
    }
    const Eigen::Matrix4d gab = eb_covariance(params.v_mod, t, xi);
    const double s_ab = gaussian_entropy(gab);

    // Modes A, B, F, G; (F, G) is the EPR pair modelling the detector noise.
    const double nu = tau == 1.0 ? 1.0 : 1.0 + 2.0 * params.v_el / (1.0 - tau);
    const double c = std::sqrt(std::max(0.0, nu * nu - 1.0));
    Eigen::MatrixXd g4 = Eigen::MatrixXd::Zero(8, 8);
    g4.topLeftCorner<4, 4>() = gab;
    g4(4, 4) = g4(5, 5) = g4(6, 6) = g4(7, 7) = nu;
    g4(4, 6) = g4(6, 4) = c;
    g4(5, 7) = g4(7, 5) = -c;

    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(8, 8);
    const double st = std::sqrt(tau);
    const double sr = std::sqrt(1.0 - tau);
    for (int q = 0; q < 2; ++q) {
        const int b = 2 + q;
        const int f = 4 + q;
        s(b, b) = st;
        s(b, f) = sr;
        s(f, b) = -sr;
        s(f, f) = st;
    }
    const Eigen::MatrixXd out = s * g4 * s.transpose();
    const double s_cond = gaussian_entropy(heterodyne_condition(out, 1));
    return s_ab - s_cond;
}

double secret_key_fraction(double i_ab, double chi_be, double beta) {
    return beta * i_ab - chi_be;
}

FrameMetrics metrics_from_estimate(const ChannelEstimate& est, const SecurityParams& params) {
    FrameMetrics m;
    m.t_hat = est.t_hat;
    m.xi_hat = est.xi_hat;
    m.i_ab = mutual_information(est, params);
    ChannelEstimate physical = est;
    physical.xi_hat = std::max(est.xi_hat, 0.0);
    m.chi_be = holevo_bound(physical, params);
    m.skf = secret_key_fraction(m.i_ab, m.chi_be, params.beta);
    return m;
}

FrameMetrics frame_metrics(std::span<const cplx> tx, std::span<const cplx> rx,
                           const SecurityParams& params) {
    return metrics_from_estimate(estimate_channel(tx, rx, params), params);
}

}  // namespace cvqkd::security
