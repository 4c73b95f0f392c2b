// Reference receiver chain: one-tap 2x2 CMA on the pilot band for polarization,
// then a phase-only UKF for the carrier phase.
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "cvqkd/common.hpp"
#include "cvqkd/ukf.hpp"

namespace cvqkd::reference {

using Mat2c = Eigen::Matrix2cd;
using Vec2c = Eigen::Vector2cd;

/// w is kept of the form [[p, q], [-conj(q), conj(p)]] (a scaled unitary), so
/// the second output is orthogonal to the first even with a single source.
struct CmaState {
    Mat2c w = Mat2c::Identity();
    double mu = 0.01;
    double r_target = 1.0;  // |y|^2 target in input units
};

struct CmaStep {
    CmaState state;
    Vec2c y;
};

/// y = w x. The first row takes the CMA gradient step
/// w1 += mu (1 - |y1|^2 / r) y1 x^H / r; the second row follows from the
/// constraint. Throws Errc::unstable_step_size when ||w|| exceeds 1e6.
CmaStep cma_step(const CmaState& state, const Vec2c& x);

/// Nearest unitary in the polar sense, w (w^H w)^{-1/2}. Throws Errc::singular_matrix.
Mat2c normalize_rotation(const Mat2c& w);

struct PhaseUkfConfig {
    double q_phi = 1e-5;
    double r_meas = 1.0;
    double p_sig = 1.0;
    double pilot_freq = 180e6;
    double sample_rate = 1e9;
    double alpha = 1e-2;
    double beta_ut = 2.0;
    double kappa = 0.0;
    double jitter = 1e-12;
    double init_phi = 0.0;
    double init_var = 1e-1;

    ut::Params ut_params() const { return {alpha, beta_ut, kappa, jitter}; }
    void validate() const;
};

struct PhaseUkfState {
    double mean = 0.0;
    double var = 1e-1;
};

PhaseUkfState phase_predict(const PhaseUkfState& s, const PhaseUkfConfig& cfg);
PhaseUkfState phase_update(const PhaseUkfState& s, double y, double k, const PhaseUkfConfig& cfg);

/// Scalar UKF over the real pilot samples y_k = sqrt(P) cos(2 pi f k / fs + phi).
/// Output is unwrapped, one entry per sample; k = k0 + local index.
std::vector<double> phase_ukf_run(std::span<const double> pilot, const PhaseUkfConfig& cfg,
                                  std::size_t k0 = 0);

/// phi estimate from the pilot correlation over the first n samples.
double acquire_phase(std::span<const cplx> pilot, double pilot_freq, double sample_rate, std::size_t n);

struct ReferenceConfig {
    CmaState cma;
    PhaseUkfConfig phase;
    std::size_t acquisition_samples = 2000;
    double smoothing_fraction = 0.1;  // tail of each frame averaged into w
};

/// Sample range [begin, end) of each frame in the sample-rate streams.
struct FrameSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct ReferenceResult {
    std::vector<cplx> x_port;          // compensated quantum x-port, one per sample
    std::vector<Mat2c> frame_weights;  // normalized w per frame
    std::vector<double> phase;         // phase track
    std::vector<double> cma_error2;    // mean CMA squared error per frame
};

/// CMA over the pilot band; per frame, the mean of w over the last
/// smoothing_fraction of in-frame updates is normalized and applied to both
/// bands; the phase UKF runs on Re of the rotated pilot x-port and its phase is
/// removed from the rotated quantum x-port. Samples outside every frame use
/// the nearest frame's w.
ReferenceResult run_reference(const DualPolWaveform& pilot, const DualPolWaveform& quantum,
                              std::span<const FrameSpan> frames, const ReferenceConfig& cfg);

/// CSV "sample,w11_re,w11_im,w12_re,w12_im,w21_re,w21_im,w22_re,w22_im" of the
/// raw CMA weights every `stride` samples.
void write_weights_csv(std::ostream& out, const DualPolWaveform& pilot, const CmaState& init,
                       std::size_t stride);

}  // namespace cvqkd::reference
