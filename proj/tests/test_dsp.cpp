#include <doctest.h>

#include <cmath>

#include "cvqkd/channel.hpp"
#include "cvqkd/dsp.hpp"
#include "cvqkd/experiment.hpp"
#include "cvqkd/txgen.hpp"
#include "helpers.hpp"

using namespace cvqkd;
using namespace cvqkd::dsp;

namespace {

DualPolWaveform scaled_noise(std::size_t n, double var_x, double var_y, double fs, std::uint64_t seed) {
    DualPolWaveform wf(n, fs);
    CounterRng rng(seed);
    for (std::size_t k = 0; k < n; ++k) {
        wf.x[k] = rng.complex_normal(var_x);
        wf.y[k] = rng.complex_normal(var_y);
    }
    return wf;
}

DualPolWaveform tone(std::size_t n, double f, double fs, double noise_var, std::uint64_t seed, bool in_y = false) {
    DualPolWaveform wf = scaled_noise(n, noise_var, noise_var, fs, seed);
    auto& dst = in_y ? wf.y : wf.x;
    for (std::size_t k = 0; k < n; ++k) dst[k] += std::polar(1.0, carrier_phase(f, static_cast<double>(k), fs));
    return wf;
}

BandPlan paper_plan() {
    BandPlan plan;
    plan.pilot_freq = 180e6;
    plan.signal_center_freq = 100e6;
    plan.signal_bandwidth = 24e6;
    plan.sample_rate = 1e9;
    return plan;
}

double total_power(const DualPolWaveform& wf) { return mean_power(wf.x) + mean_power(wf.y); }

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("calibration of a record already in shot-noise units is the identity") {
    channel::NoiseConfig noise;
    noise.electronic_noise = 0.01;
    const std::size_t n = 1 << 20;
    const auto shot = channel::shot_noise_run(n, noise, 1e9, 1);
    const auto elec = channel::electronic_noise_run(n, noise, 1e9, 2);
    const auto cal = calibrate_snu(shot, elec);
    const double tol = 3.0 * std::sqrt(2.0 / (4.0 * n)) * 1.01;
    CHECK(std::abs(cal.snu_scale - 1.0) < tol * 1.1);
    CHECK(std::abs(cal.electronic_noise_snu() - 0.01) < 1e-3);
}

TEST_CASE("calibration scale is 1 / (shot - electronic)") {
    const std::size_t n = 1 << 20;
    const auto shot = scaled_noise(n, 4.0, 4.0, 1e9, 3);  // 2.0 per quadrature
    const auto elec = scaled_noise(n, 1.0, 1.0, 1e9, 4);  // 0.5 per quadrature
    const auto cal = calibrate_snu(shot, elec);
    const double vs = 0.5 * (quadrature_variance(shot.x) + quadrature_variance(shot.y));
    const double ve = 0.5 * (quadrature_variance(elec.x) + quadrature_variance(elec.y));
    CHECK(cal.shot_variance_raw == doctest::Approx(vs).epsilon(1e-9));
    CHECK(cal.electronic_variance_raw == doctest::Approx(ve).epsilon(1e-9));
    CHECK(cal.snu_scale == doctest::Approx(1.0 / (vs - ve)).epsilon(1e-9));
    CHECK(cal.snu_scale == doctest::Approx(1.0 / 1.5).epsilon(0.01));
}

TEST_CASE("calibration rejects electronic noise at or above shot noise") {
    const auto a = scaled_noise(1000, 1.0, 1.0, 1e9, 5);
    const auto b = scaled_noise(1000, 2.0, 2.0, 1e9, 6);
    try {
        (void)calibrate_snu(a, b);
        FAIL("expected invalid calibration");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::invalid_calibration);
    }
}

TEST_CASE("pilot frequency offset is resolved to 100 Hz") {
    const double fs = 1e9, fp = 180e6;
    const std::size_t n = 1 << 20;
    for (double off : {2000.0, -31250.5, 77777.0, 450.0}) {
        const auto wf = tone(n, fp + off, fs, 0.1, 7);
        CHECK(std::abs(estimate_frequency_offset(wf, fp, 1e6, n) - off) < 100.0);
    }
}

TEST_CASE("an on-bin tone is located exactly and polarization does not matter") {
    const double fs = 1e9, fp = 180e6;
    const std::size_t n = 1 << 16;
    const double df = fs / static_cast<double>(n);
    const double off = (std::round(fp / df) + 3.0) * df - fp;
    const auto wx = tone(n, fp + off, fs, 0.0, 8);
    const auto wy = tone(n, fp + off, fs, 0.0, 8, true);
    CHECK(estimate_frequency_offset(wx, fp, 1e6, n) == doctest::Approx(off).epsilon(1e-9));
    CHECK(estimate_frequency_offset(wy, fp, 1e6, n) == doctest::Approx(off).epsilon(1e-9));
}

TEST_CASE("missing pilot is reported") {
    const auto wf = scaled_noise(1 << 14, 1.0, 1.0, 1e9, 9);
    try {
        (void)estimate_frequency_offset(wf, 180e6, 1e6, 1 << 14);
        FAIL("expected pilot not found");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::pilot_not_found);
    }
}

TEST_CASE("band isolation separates signal and pilot by at least 40 dB") {
    txgen::TxConfig cfg;
    cfg.seed = 3;
    const auto frame = txgen::generate_symbols(20000, cfg.modulation_variance, 10);
    const auto parts = txgen::build_waveform_parts(frame, cfg);
    const auto plan = paper_plan();

    DualPolWaveform sig(0, cfg.sample_rate), pil(0, cfg.sample_rate);
    sig.x = parts.signal;
    sig.y.assign(sig.x.size(), cplx{});
    pil.x = parts.pilot;
    pil.y.assign(pil.x.size(), cplx{});

    const auto from_sig = isolate_bands(sig, plan);
    const auto from_pil = isolate_bands(pil, plan);
    const double ps = total_power(sig), pp = total_power(pil);
    CHECK(total_power(from_sig.pilot) / ps < 1e-4);
    CHECK(total_power(from_pil.quantum) / pp < 1e-4);
    // Each band keeps its own component.
    const double kept = total_power(from_sig.quantum) + total_power(from_pil.pilot);
    CHECK(kept == doctest::Approx(ps + pp).epsilon(0.01));
}

TEST_CASE("overlapping band plan is rejected") {
    auto plan = paper_plan();
    plan.pilot_freq = 115e6;
    const DualPolWaveform wf(1000, 1e9);
    try {
        (void)isolate_bands(wf, plan);
        FAIL("expected band overlap");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::band_overlap);
    }
}

TEST_CASE("noise floor and pilot power estimates") {
    const double fs = 1e9, r = 0.05;
    const auto wf = tone(1 << 18, 180e6, fs, 2.0 * r, 11);
    const auto plan = paper_plan();
    CHECK(noise_floor_per_quadrature(wf, plan) == doctest::Approx(r).epsilon(0.03));
    const auto bands = isolate_bands(wf, plan);
    CHECK(pilot_power(bands.pilot, bands.pilot_lowpass, r) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("matched filter: length, best timing and sensitivity to offset") {
    const int sps = 10;
    const auto taps = txgen::rrc_taps(0.2, 64, sps);
    const auto frame = txgen::generate_symbols(5000, 1.65, 12);
    const auto shaped = txgen::shape_symbols(frame.symbols, taps, sps);
    const std::size_t nominal = taps.size() - 1;

    const auto rx = matched_filter_downsample(shaped, taps, sps, nominal);
    CHECK(rx.size() == (shaped.size() - nominal) / sps);

    auto evm_at = [&](std::size_t off) {
        auto r = matched_filter_downsample(shaped, taps, sps, off);
        r.resize(4000);
        return testutil::evm(r, std::span(frame.symbols).first(4000));
    };
    CHECK(evm_at(nominal) < 1e-3);
    double worst = 0.0;
    std::size_t worst_off = nominal;
    for (std::size_t off = nominal - sps / 2; off <= nominal + sps / 2; ++off) {
        const double e = evm_at(off);
        if (e > worst) {
            worst = e;
            worst_off = off;
        }
    }
    const std::size_t dist = worst_off > nominal ? worst_off - nominal : nominal - worst_off;
    CHECK(dist == static_cast<std::size_t>(sps / 2));

    DualPolWaveform q(shaped.size(), 1e8);
    q.x = shaped;
    CHECK(find_timing_offset(q, taps, sps) == nominal);

    const std::vector<cplx> tiny(taps.size() - 1);
    try {
        (void)matched_filter_downsample(tiny, taps, sps, 0);
        FAIL("expected stream too short");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::stream_too_short);
    }
}

TEST_CASE("channel balance") {
    const double fs = 1e9;
    const auto equal = scaled_noise(1 << 16, 1.0, 1.0, fs, 13);
    CHECK(channel_balance_scale(equal, 300e6) == doctest::Approx(1.0).epsilon(0.02));
    const auto quarter = scaled_noise(1 << 16, 1.0, 0.25, fs, 14);
    CHECK(channel_balance_scale(quarter, 300e6) == doctest::Approx(2.0).epsilon(0.02));
    const auto fixed = normalize_channels(quarter, 300e6);
    CHECK(mean_power(fixed.y) == doctest::Approx(mean_power(fixed.x)).epsilon(0.03));
    CHECK(experiment::DspSettings{}.normalize_bandwidth == 300e6);

    auto dead = equal;
    for (auto& v : dead.y) v = 0.0;
    try {
        (void)channel_balance_scale(dead, 300e6);
        FAIL("expected zero power");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::zero_power);
    }
}

TEST_CASE("frame segmentation") {
    SymbolRecord rec;
    rec.tx_symbols.assign(490000, cplx(1.0, 0.0));
    rec.rx_symbols.assign(490000, cplx(0.5, 0.0));
    rec.frame_length = 10000;
    const auto frames = segment_frames(rec);
    REQUIRE(frames.size() == 49);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(frames[i].index == i);
        CHECK(frames[i].tx.size() == 10000);
        CHECK(frames[i].tx.data() == rec.tx_symbols.data() + i * 10000);
        CHECK(frames[i].rx.data() == rec.rx_symbols.data() + i * 10000);
    }
    rec.tx_symbols.resize(9999);
    rec.rx_symbols.resize(9999);
    CHECK(segment_frames(rec).empty());
    rec.rx_symbols.resize(9998);
    CHECK_THROWS_AS(segment_frames(rec), Error);
}

}  // TEST_SUITE
