#include "cvqkd/ukf.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "cvqkd/csv.hpp"

namespace cvqkd::ukf {

void UkfConfig::validate() const {
    if (!(q_ab >= 0.0) || !(q_phi >= 0.0)) throw Error(Errc::invalid_argument, "q_ab and q_phi must be >= 0");
    if (!(r_meas > 0.0)) throw Error(Errc::invalid_argument, "r_meas must be > 0");
    if (!(p_sig > 0.0)) throw Error(Errc::invalid_argument, "p_sig must be > 0");
    if (!(sample_rate > 0.0) || !std::isfinite(pilot_freq)) {
        throw Error(Errc::invalid_argument, "sample_rate must be > 0 and pilot_freq finite");
    }
    if (decimation == 0) throw Error(Errc::invalid_argument, "decimation must be >= 1");
    ut_params().validate();
}

SigmaPoints sigma_points(const UkfState& state, const UkfConfig& cfg) {
    return ut::sigma_points<3>(state.mean, state.cov, cfg.ut_params());
}

UkfState predict(const UkfState& state, const UkfConfig& cfg) {
    UkfState out = state;
    out.cov(0, 0) += cfg.q_ab;
    out.cov(1, 1) += cfg.q_ab;
    out.cov(2, 2) += cfg.q_phi;
    return out;
}

Eigen::Vector2d measurement_model(const Eigen::Vector3d& x, double k, const UkfConfig& cfg) {
    const double c = std::sqrt(cfg.p_sig) *
                     std::cos(carrier_phase(cfg.pilot_freq, k, cfg.sample_rate) + x[2]);
    return {x[0] * c, -x[1] * c};
}

namespace {

// Measurement update with the carrier phase psi precomputed for this sample.
UkfState update_at_phase(const UkfState& state, const Eigen::Vector2d& y, double psi,
                         const UkfConfig& cfg, const ut::Params& p) {
    const double amp = std::sqrt(cfg.p_sig);
    auto h = [&](const Eigen::Vector3d& x) -> Eigen::Vector2d {
        const double c = amp * std::cos(psi + x[2]);
        return {x[0] * c, -x[1] * c};
    };
    const Eigen::Matrix2d r = Eigen::Vector2d::Constant(cfg.r_meas).asDiagonal();
    const auto post = ut::update<3, 2>(ut::Gaussian<3>{state.mean, state.cov}, y, r, h, p);
    return {post.mean, post.cov};
}

#ifndef NDEBUG
void check_covariance(const Eigen::Matrix3d& cov, std::size_t k) {
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw Error(Errc::non_positive_definite, "asymmetric covariance at sample " + std::to_string(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0)) {
        throw Error(Errc::non_positive_definite, "covariance lost definiteness at sample " + std::to_string(k));
    }
}
#endif

}  // namespace

UkfState update(const UkfState& state, const Eigen::Vector2d& y, double k, const UkfConfig& cfg) {
    return update_at_phase(state, y, carrier_phase(cfg.pilot_freq, k, cfg.sample_rate), cfg,
                           cfg.ut_params());
}

EstimateTrack run_ukf(const DualPolWaveform& pilot, const UkfConfig& cfg, std::size_t k0) {
    cfg.validate();
    if (pilot.x.size() != pilot.y.size()) throw Error(Errc::length_mismatch, "pilot x and y lengths differ");
    const std::size_t n = pilot.size();
    const std::size_t d = cfg.decimation;
    const std::size_t steps = (n + d - 1) / d;
    const auto p = cfg.ut_params();

    EstimateTrack tr;
    tr.decimation = d;
    tr.a.resize(steps);
    tr.b.resize(steps);
    tr.phi.resize(steps);
    tr.var_a.resize(steps);
    tr.var_b.resize(steps);
    tr.var_phi.resize(steps);

    UkfState st{cfg.init_mean, cfg.init_cov};
    for (std::size_t i = 0; i < steps; ++i) {
        const std::size_t local = i * d;
        const std::size_t k = k0 + local;
        st = predict(st, cfg);
        const Eigen::Vector2d y(pilot.x[local].real(), pilot.y[local].real());
        try {
            st = update_at_phase(st, y, carrier_phase(cfg.pilot_freq, static_cast<double>(k), cfg.sample_rate),
                                 cfg, p);
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " at sample " + std::to_string(k));
        }
#ifndef NDEBUG
        check_covariance(st.cov, k);
#endif
        tr.a[i] = st.mean[0];
        tr.b[i] = st.mean[1];
        tr.phi[i] = st.mean[2];
        tr.var_a[i] = static_cast<float>(st.cov(0, 0));
        tr.var_b[i] = static_cast<float>(st.cov(1, 1));
        tr.var_phi[i] = static_cast<float>(st.cov(2, 2));
    }
    unwrap(tr.phi);
    return tr;
}

Eigen::Vector3d acquire(const DualPolWaveform& pilot, const UkfConfig& cfg, std::size_t n) {
    n = std::min(n, pilot.size());
    if (n == 0) throw Error(Errc::invalid_argument, "acquisition needs samples");
    cplx cx{};
    cplx cy{};
    for (std::size_t k = 0; k < n; ++k) {
        const cplx ref = std::polar(1.0, -carrier_phase(cfg.pilot_freq, static_cast<double>(k), cfg.sample_rate));
        cx += pilot.x[k] * ref;
        cy += pilot.y[k] * ref;
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    const cplx sq = cx * cx + cy * cy;
    if (std::abs(sq) == 0.0) throw Error(Errc::pilot_not_found, "no pilot correlation during acquisition");
    double phi = 0.5 * std::arg(sq);
    const cplx derot = std::polar(1.0, -phi);
    const double amp = std::sqrt(cfg.p_sig);
    double a = (cx * derot).real() / amp;
    double b = -(cy * derot).real() / amp;
    if (a < 0.0) {
        a = -a;
        b = -b;
        phi += std::numbers::pi;
    }
    return {a, b, phi};
}

namespace {

struct Rot {
    double a, b;
};

Rot normalized(double a, double b, std::size_t k) {
    const double n2 = a * a + b * b;
    if (!(n2 >= 1e-12)) {
        throw Error(Errc::degenerate_estimate, "a^2 + b^2 below 1e-12 at sample " + std::to_string(k));
    }
    const double inv = 1.0 / std::sqrt(n2);
    return {a * inv, b * inv};
}

void check_track(const DualPolWaveform& quantum, const EstimateTrack& track) {
    if (track.size() == 0) throw Error(Errc::invalid_argument, "empty estimate track");
    if (quantum.x.size() != quantum.y.size()) throw Error(Errc::length_mismatch, "x and y lengths differ");
    const std::size_t needed = (quantum.size() + track.decimation - 1) / track.decimation;
    if (track.size() < needed) {
        throw Error(Errc::length_mismatch, "estimate track shorter than the quantum stream");
    }
}

}  // namespace

std::vector<cplx> compensate(const DualPolWaveform& quantum, const EstimateTrack& track) {
    check_track(quantum, track);
    std::vector<cplx> out(quantum.size());
    for (std::size_t k = 0; k < quantum.size(); ++k) {
        const std::size_t i = track.index_for(k);
        const Rot r = normalized(track.a[i], track.b[i], k);
        out[k] = (r.a * quantum.x[k] - r.b * quantum.y[k]) * std::polar(1.0, -track.phi[i]);
    }
    return out;
}

DualPolWaveform compensate_dual(const DualPolWaveform& quantum, const EstimateTrack& track) {
    check_track(quantum, track);
    DualPolWaveform out(quantum.size(), quantum.sample_rate);
    for (std::size_t k = 0; k < quantum.size(); ++k) {
        const std::size_t i = track.index_for(k);
        const Rot r = normalized(track.a[i], track.b[i], k);
        const cplx ph = std::polar(1.0, -track.phi[i]);
        out.x[k] = (r.a * quantum.x[k] - r.b * quantum.y[k]) * ph;
        out.y[k] = (r.b * quantum.x[k] + r.a * quantum.y[k]) * ph;
    }
    return out;
}

void unwrap(std::span<double> phase) {
    if (phase.empty()) return;
    double offset = 0.0;
    double prev_raw = phase[0];
    for (std::size_t i = 1; i < phase.size(); ++i) {
        const double raw = phase[i];
        const double d = raw - prev_raw;
        offset += std::remainder(d, two_pi) - d;
        prev_raw = raw;
        phase[i] = raw + offset;
    }
}

void write_track_csv(std::ostream& out, const EstimateTrack& track, std::size_t stride) {
    if (stride == 0) throw Error(Errc::invalid_argument, "track stride must be >= 1");
    csv::Writer w(out);
    w.row({"k", "a", "b", "phi", "var_a", "var_b", "var_phi"});
    for (std::size_t i = 0; i < track.size(); i += stride) {
        w.field(i * track.decimation)
            .field(track.a[i])
            .field(track.b[i])
            .field(track.phi[i])
            .field(static_cast<double>(track.var_a[i]))
            .field(static_cast<double>(track.var_b[i]))
            .field(static_cast<double>(track.var_phi[i]));
        w.end_row();
    }
}

}  // namespace cvqkd::ukf
