#include "cvqkd/reference.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "cvqkd/csv.hpp"

namespace cvqkd::reference {

CmaStep cma_step(const CmaState& state, const Vec2c& x) {
    CmaStep out{state, state.w * x};
    if (state.mu == 0.0) return out;
    const cplx y1 = out.y[0];
    const double e = 1.0 - std::norm(y1) / state.r_target;
    if (e == 0.0) return out;
    const cplx g = (state.mu * e / state.r_target) * y1;
    const cplx dp = g * std::conj(x[0]);
    const cplx dq = g * std::conj(x[1]);
    Mat2c& w = out.state.w;
    w(0, 0) += dp;
    w(0, 1) += dq;
    w(1, 0) = -std::conj(w(0, 1));
    w(1, 1) = std::conj(w(0, 0));
    const double n2 = w.squaredNorm();
    if (!(n2 <= 1e12)) {
        throw Error(Errc::unstable_step_size, "CMA weights diverged (||w|| > 1e6); reduce mu");
    }
    return out;
}

Mat2c normalize_rotation(const Mat2c& w) {
    if (!w.allFinite()) throw Error(Errc::singular_matrix, "non-finite matrix");
    const Mat2c m = w.adjoint() * w;  // Hermitian PSD
    const double scale = m.trace().real();
    const double det = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)).real();
    if (!(scale > 0.0) || !(det > 1e-24 * scale * scale)) {
        throw Error(Errc::singular_matrix, "cannot normalize a singular rotation matrix");
    }
    // Closed-form principal square root of a 2x2 Hermitian PD matrix.
    const double sd = std::sqrt(det);
    const Mat2c root = (m + sd * Mat2c::Identity()) / std::sqrt(scale + 2.0 * sd);
    const cplx rdet = root(0, 0) * root(1, 1) - root(0, 1) * root(1, 0);
    Mat2c inv;
    inv << root(1, 1), -root(0, 1), -root(1, 0), root(0, 0);
    inv /= rdet;
    return w * inv;
}

void PhaseUkfConfig::validate() const {
    if (!(q_phi >= 0.0)) throw Error(Errc::invalid_argument, "q_phi must be >= 0");
    if (!(r_meas > 0.0)) throw Error(Errc::invalid_argument, "r_meas must be > 0");
    if (!(p_sig > 0.0)) throw Error(Errc::invalid_argument, "p_sig must be > 0");
    if (!(init_var > 0.0)) throw Error(Errc::invalid_argument, "init_var must be > 0");
    if (!(sample_rate > 0.0)) throw Error(Errc::invalid_argument, "sample_rate must be > 0");
    ut_params().validate();
}

PhaseUkfState phase_predict(const PhaseUkfState& s, const PhaseUkfConfig& cfg) {
    return {s.mean, s.var + cfg.q_phi};
}

namespace {

PhaseUkfState phase_update_at(const PhaseUkfState& s, double y, double psi, const PhaseUkfConfig& cfg,
                              const ut::Params& p) {
    const double amp = std::sqrt(cfg.p_sig);
    auto h = [&](const ut::Vec<1>& x) -> ut::Vec<1> {
        return ut::Vec<1>(amp * std::cos(psi + x[0]));
    };
    ut::Gaussian<1> prior{ut::Vec<1>(s.mean), ut::Mat<1>(s.var)};
    const auto post = ut::update<1, 1>(prior, ut::Vec<1>(y), ut::Mat<1>(cfg.r_meas), h, p);
    return {post.mean[0], post.cov(0, 0)};
}

}  // namespace

PhaseUkfState phase_update(const PhaseUkfState& s, double y, double k, const PhaseUkfConfig& cfg) {
    return phase_update_at(s, y, carrier_phase(cfg.pilot_freq, k, cfg.sample_rate), cfg,
                           cfg.ut_params());
}

std::vector<double> phase_ukf_run(std::span<const double> pilot, const PhaseUkfConfig& cfg,
                                  std::size_t k0) {
    cfg.validate();
    const auto p = cfg.ut_params();
    std::vector<double> phi(pilot.size());
    PhaseUkfState st{cfg.init_phi, cfg.init_var};
    for (std::size_t i = 0; i < pilot.size(); ++i) {
        const std::size_t k = k0 + i;
        st = phase_predict(st, cfg);
        try {
            st = phase_update_at(st, pilot[i],
                                 carrier_phase(cfg.pilot_freq, static_cast<double>(k), cfg.sample_rate), cfg, p);
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " at sample " + std::to_string(k));
        }
        phi[i] = st.mean;
    }
    ukf::unwrap(phi);
    return phi;
}

double acquire_phase(std::span<const cplx> pilot, double pilot_freq, double sample_rate, std::size_t n) {
    n = std::min(n, pilot.size());
    if (n == 0) throw Error(Errc::invalid_argument, "acquisition needs samples");
    cplx c{};
    for (std::size_t k = 0; k < n; ++k) {
        c += pilot[k] * std::polar(1.0, -carrier_phase(pilot_freq, static_cast<double>(k), sample_rate));
    }
    if (std::abs(c) == 0.0) throw Error(Errc::pilot_not_found, "no pilot correlation during acquisition");
    return std::arg(c);
}

namespace {

void check_frames(std::span<const FrameSpan> frames, std::size_t n) {
    if (frames.empty()) throw Error(Errc::invalid_argument, "reference chain needs at least one frame");
    for (std::size_t f = 0; f < frames.size(); ++f) {
        if (frames[f].begin >= frames[f].end || frames[f].end > n ||
            (f > 0 && frames[f].begin < frames[f - 1].end)) {
            throw Error(Errc::invalid_argument, "frame spans must be ordered, non-empty and in range");
        }
    }
}

}  // namespace

ReferenceResult run_reference(const DualPolWaveform& pilot, const DualPolWaveform& quantum,
                              std::span<const FrameSpan> frames, const ReferenceConfig& cfg) {
    const std::size_t n = pilot.size();
    if (quantum.size() != n || pilot.y.size() != n || quantum.y.size() != n) {
        throw Error(Errc::length_mismatch, "pilot and quantum streams differ in length");
    }
    if (!(cfg.smoothing_fraction > 0.0 && cfg.smoothing_fraction <= 1.0)) {
        throw Error(Errc::invalid_argument, "smoothing_fraction must be in (0, 1]");
    }
    if (!(cfg.cma.r_target > 0.0)) throw Error(Errc::invalid_argument, "CMA r_target must be > 0");
    check_frames(frames, n);

    ReferenceResult res;
    res.frame_weights.resize(frames.size());
    res.cma_error2.assign(frames.size(), 0.0);

    // CMA over the whole record; accumulate the tail of each frame.
    CmaState st = cfg.cma;
    std::size_t f = 0;
    Mat2c acc = Mat2c::Zero();
    std::size_t acc_n = 0;
    for (std::size_t k = 0; k < n && f < frames.size(); ++k) {
        const Vec2c x(pilot.x[k], pilot.y[k]);
        try {
            auto step = cma_step(st, x);
            st = step.state;
            if (k >= frames[f].begin) {
                const double e = 1.0 - std::norm(step.y[0]) / st.r_target;
                res.cma_error2[f] += e * e;
            }
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " at sample " + std::to_string(k));
        }
        const std::size_t len = frames[f].end - frames[f].begin;
        const auto tail = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(cfg.smoothing_fraction * static_cast<double>(len))));
        if (k >= frames[f].end - tail) {
            acc += st.w;
            ++acc_n;
        }
        if (k + 1 == frames[f].end) {
            res.frame_weights[f] = normalize_rotation(acc / static_cast<double>(acc_n));
            res.cma_error2[f] /= static_cast<double>(len);
            acc.setZero();
            acc_n = 0;
            ++f;
        }
    }

    // Rotate both bands with the per-frame weights.
    std::vector<cplx> u(n);
    res.x_port.resize(n);
    f = 0;
    for (std::size_t k = 0; k < n; ++k) {
        while (f + 1 < frames.size() && k >= frames[f + 1].begin) ++f;
        const Mat2c& w = res.frame_weights[f];
        u[k] = w(0, 0) * pilot.x[k] + w(0, 1) * pilot.y[k];
        res.x_port[k] = w(0, 0) * quantum.x[k] + w(0, 1) * quantum.y[k];
    }

    PhaseUkfConfig pc = cfg.phase;
    pc.init_phi = acquire_phase(u, pc.pilot_freq, pc.sample_rate, cfg.acquisition_samples);
    std::vector<double> re(n);
    for (std::size_t k = 0; k < n; ++k) re[k] = u[k].real();
    u.clear();
    u.shrink_to_fit();
    res.phase = phase_ukf_run(re, pc);
    for (std::size_t k = 0; k < n; ++k) res.x_port[k] *= std::polar(1.0, -res.phase[k]);
    return res;
}

void write_weights_csv(std::ostream& out, const DualPolWaveform& pilot, const CmaState& init,
                       std::size_t stride) {
    if (stride == 0) throw Error(Errc::invalid_argument, "weight stride must be >= 1");
    csv::Writer w(out);
    w.row({"sample", "w11_re", "w11_im", "w12_re", "w12_im", "w21_re", "w21_im", "w22_re", "w22_im"});
    CmaState st = init;
    for (std::size_t k = 0; k < pilot.size(); ++k) {
        st = cma_step(st, Vec2c(pilot.x[k], pilot.y[k])).state;
        if (k % stride != 0) continue;
        w.field(k);
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) w.field(st.w(r, c).real()).field(st.w(r, c).imag());
        }
        w.end_row();
    }
}

}  // namespace cvqkd::reference
