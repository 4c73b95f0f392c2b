// Joint polarization and phase tracking on the pilot tone with an unscented
// Kalman filter. State [a, b, phi]; measurement
//   y1 =  a sqrt(P) cos(2 pi f k / fs + phi)
//   y2 = -b sqrt(P) cos(2 pi f k / fs + phi)
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "cvqkd/common.hpp"
#include "cvqkd/ut.hpp"

namespace cvqkd::ukf {

struct UkfState {
    Eigen::Vector3d mean = Eigen::Vector3d(1.0, 0.0, 0.0);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Identity();
};

struct UkfConfig {
    double q_ab = 1e-9;
    double q_phi = 1e-5;
    double r_meas = 1.0;
    double p_sig = 1.0;
    double pilot_freq = 180e6;
    double sample_rate = 1e9;
    double alpha = 1e-2;
    double beta_ut = 2.0;
    double kappa = 0.0;
    double jitter = 1e-12;
    Eigen::Vector3d init_mean = Eigen::Vector3d(1.0, 0.0, 0.0);
    Eigen::Matrix3d init_cov = Eigen::Vector3d(1e-2, 1e-2, 1e-1).asDiagonal();
    std::size_t decimation = 1;

    ut::Params ut_params() const { return {alpha, beta_ut, kappa, jitter}; }
    void validate() const;
};

using SigmaPoints = ut::SigmaSet<3>;

SigmaPoints sigma_points(const UkfState& state, const UkfConfig& cfg);

/// Identity transition; cov += diag(q_ab, q_ab, q_phi).
UkfState predict(const UkfState& state, const UkfConfig& cfg);

Eigen::Vector2d measurement_model(const Eigen::Vector3d& x, double k, const UkfConfig& cfg);

UkfState update(const UkfState& state, const Eigen::Vector2d& y, double k, const UkfConfig& cfg);

struct EstimateTrack {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> phi;  // unwrapped
    std::vector<float> var_a;
    std::vector<float> var_b;
    std::vector<float> var_phi;
    std::size_t decimation = 1;

    std::size_t size() const noexcept { return a.size(); }
    /// Track entry covering input sample k.
    std::size_t index_for(std::size_t k) const noexcept {
        const std::size_t i = k / decimation;
        return i < a.size() ? i : a.size() - 1;
    }
};

/// Sequential predict/update over Re(pilot.x), Re(pilot.y). One entry per
/// `decimation` input samples; k is the absolute sample index (k0 + local).
EstimateTrack run_ukf(const DualPolWaveform& pilot, const UkfConfig& cfg, std::size_t k0 = 0);

/// Pilot-correlation acquisition of [a, b, phi] over the first `n` samples:
/// c_p = mean(pilot_p exp(-j 2 pi f k / fs)), phi = arg(c_x^2 + c_y^2) / 2,
/// a = Re(c_x e^{-j phi}) / sqrt(P), b = -Re(c_y e^{-j phi}) / sqrt(P), a >= 0.
Eigen::Vector3d acquire(const DualPolWaveform& pilot, const UkfConfig& cfg, std::size_t n);

/// Per sample: normalize (a, b), x_out = (a x - b y) exp(-j phi).
/// Throws Errc::degenerate_estimate when a^2 + b^2 < 1e-12.
std::vector<cplx> compensate(const DualPolWaveform& quantum, const EstimateTrack& track);

/// Same as compensate for both ports: R^T [x, y] exp(-j phi).
DualPolWaveform compensate_dual(const DualPolWaveform& quantum, const EstimateTrack& track);

/// Phase unwrapping in place (jumps > pi folded by 2 pi).
void unwrap(std::span<double> phase);

/// CSV "k,a,b,phi,var_a,var_b,var_phi", every `stride`-th entry.
void write_track_csv(std::ostream& out, const EstimateTrack& track, std::size_t stride = 1);

}  // namespace cvqkd::ukf
