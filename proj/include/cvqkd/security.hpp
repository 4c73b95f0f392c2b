// Parameter estimation and the asymptotic key fraction for Gaussian-modulated
// coherent states with heterodyne detection, collective attacks.
#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "cvqkd/common.hpp"

namespace cvqkd::security {

enum class ReceiverModel { trusted, untrusted };

ReceiverModel parse_receiver_model(const std::string& s);
const char* to_string(ReceiverModel m);

struct SecurityParams {
    double v_mod = 1.65;
    double tau = 0.53;
    double v_el = 0.01;  // SNU per detected quadrature
    double beta = 0.95;
    ReceiverModel receiver_model = ReceiverModel::trusted;

    void validate() const;
};

struct ChannelEstimate {
    double t_hat = 0.0;
    double xi_hat = 0.0;
    std::size_t n_symbols = 0;
    bool t_clamped = false;     // raw estimate exceeded 1 and was clamped
    bool xi_negative = false;
};

/// Per-quadrature least-squares gain with a shared slope, g^2 = tau T;
/// residual variance with 2N - 3 degrees of freedom;
/// xi = 2 (v_res - 1 - v_el) / (tau T).
ChannelEstimate estimate_channel(std::span<const cplx> tx, std::span<const cplx> rx,
                                 const SecurityParams& params);

/// log2(1 + SNR), SNR = (tau T v_mod / 2) / (1 + v_el + tau T xi / 2).
double mutual_information(const ChannelEstimate& est, const SecurityParams& params);

/// (x + 1) log2(x + 1) - x log2 x, g(0) = 0.
double g_function(double x);

/// Symplectic eigenvalues (ascending) of a 2n x 2n covariance in (x1, p1, x2, p2, ...) order.
Eigen::VectorXd symplectic_eigenvalues(const Eigen::MatrixXd& gamma);

/// Von Neumann entropy sum_i g((nu_i - 1) / 2); throws Errc::invalid_estimate
/// if some nu < 1 - 1e-9.
double gaussian_entropy(const Eigen::MatrixXd& gamma);

/// Covariance of the modes not in `measured` after heterodyne detection of the
/// single mode `measured`: gamma_K - sigma (gamma_M + I)^{-1} sigma^T.
Eigen::MatrixXd heterodyne_condition(const Eigen::MatrixXd& gamma, int measured_mode);

/// Entanglement-based two-mode covariance (A, B) for transmittance t and excess noise xi.
Eigen::Matrix4d eb_covariance(double v_mod, double t, double xi);

/// chi(B:E) in bits/symbol. Untrusted: the receiver is folded into the channel
/// (T' = tau T, xi' = xi + 2 v_el / (tau T)). Trusted: a beamsplitter of
/// transmittance tau mixes the channel output with one half of an EPR pair of
/// variance 1 + 2 v_el / (1 - tau); tau = 1 needs v_el = 0.
double holevo_bound(const ChannelEstimate& est, const SecurityParams& params);

double secret_key_fraction(double i_ab, double chi_be, double beta);

struct FrameMetrics {
    double t_hat = 0.0;
    double xi_hat = 0.0;
    double i_ab = 0.0;
    double chi_be = 0.0;
    double skf = 0.0;
};

/// Metrics for given (t, xi). Holevo is evaluated at max(xi, 0) because a
/// negative xi lies outside the set of physical channels; xi itself is reported
/// unclamped.
FrameMetrics metrics_from_estimate(const ChannelEstimate& est, const SecurityParams& params);

FrameMetrics frame_metrics(std::span<const cplx> tx, std::span<const cplx> rx,
                           const SecurityParams& params);

}  // namespace cvqkd::security
