#include "cvqkd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "cvqkd/config.hpp"
#include "cvqkd/csv.hpp"
#include "cvqkd/dsp.hpp"
#include "cvqkd/reference.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/ukf.hpp"

namespace cvqkd::experiment {

void ExperimentConfig::validate() const {
    tx.validate();
    dynamics.validate();
    noise.validate();
    if (!(ukf.q_ab >= 0.0 && ukf.q_phi >= 0.0 && ukf.init_var_ab > 0.0 && ukf.init_var_phi > 0.0)) {
        throw Error(Errc::invalid_argument, "ukf: process noise must be >= 0 and initial variances > 0");
    }
    ut::Params{ukf.alpha, ukf.beta_ut, ukf.kappa, ukf.jitter}.validate();
    if (ukf.decimation == 0 || ukf.acquisition_samples == 0) {
        throw Error(Errc::invalid_argument, "ukf: decimation and acquisition_samples must be >= 1");
    }
    if (!(cma.mu >= 0.0) || !(cma.smoothing_fraction > 0.0 && cma.smoothing_fraction <= 1.0)) {
        throw Error(Errc::invalid_argument, "cma: mu must be >= 0 and smoothing_fraction in (0, 1]");
    }
    if (!(dsp.pilot_half_width > 0.0 && dsp.stopband_atten_db >= 60.0 && dsp.normalize_bandwidth > 0.0 &&
          dsp.fo_search_bw > 0.0)) {
        throw Error(Errc::invalid_argument, "dsp: widths must be > 0 and stopband attenuation >= 60 dB");
    }
    if (dsp.fo_nfft < 8 || dsp.calibration_samples < dsp.psd_nfft || dsp.psd_nfft < 16) {
        throw Error(Errc::invalid_argument, "dsp: FFT sizes too small (calibration_samples >= psd_nfft)");
    }
    const double guard = std::abs(tx.pilot_freq - tx.signal_center_freq) - 0.5 * tx.signal_bandwidth();
    if (guard <= 2.0 * dsp.pilot_half_width) {
        throw Error(Errc::band_overlap, "pilot passband overlaps the signal band");
    }
    if (!(security.beta > 0.0 && security.beta <= 1.0)) {
        throw Error(Errc::invalid_argument, "security: beta must be in (0, 1]");
    }
    if (frame_length == 0 || symbols_per_measurement < frame_length) {
        throw Error(Errc::invalid_argument, "symbols_per_measurement must be >= frame_length > 0");
    }
    if (n_measurements == 0 || workers == 0 || output.histogram_bins == 0) {
        throw Error(Errc::invalid_argument, "n_measurements, workers and histogram_bins must be >= 1");
    }
}

ExperimentConfig paper_profile() {
    ExperimentConfig c;
    c.tx.pilot_to_signal_power_ratio = 1e3;  // 30 dB
    c.dynamics.linewidth_total = 200.0;
    c.dynamics.theta_model = channel::SinusoidalDrift{0.5, 1.0, 0.0, 0.0};
    c.dynamics.freq_offset = 2000.0;
    c.dynamics.loss_db = 5.5;
    c.noise.excess_noise = 0.0;
    c.noise.electronic_noise = 0.01;
    c.noise.trusted_loss_tau = 0.53;
    c.ukf.q_phi = two_pi * c.dynamics.linewidth_total / c.tx.sample_rate;
    return c;
}

ExperimentConfig desk_profile() {
    ExperimentConfig c = paper_profile();
    c.tx.sample_rate = 120e6;
    c.tx.signal_center_freq = -30e6;
    c.tx.pilot_freq = 30e6;
    c.ukf.q_phi = 1e-5;
    c.n_measurements = 5;
    return c;
}

ExperimentConfig profile(const std::string& name) {
    if (name == "paper") return paper_profile();
    if (name == "desk") return desk_profile();
    throw Error(Errc::config, "unknown profile '" + name + "' (desk, paper)");
}

std::uint64_t measurement_seed(std::uint64_t master_seed, std::size_t m) {
    return derive_seed(master_seed, static_cast<std::uint64_t>(m));
}

namespace {

// Seed tags within one measurement.
constexpr std::uint64_t kSymbolsTag = 1;
constexpr std::uint64_t kChannelTag = 2;
constexpr std::uint64_t kDetectTag = 3;
constexpr std::uint64_t kShotCalTag = 4;
constexpr std::uint64_t kElecCalTag = 5;

std::vector<cplx> symbols_from(std::vector<cplx> x, std::span<const double> taps, int sps,
                               std::size_t timing, std::size_t n_symbols) {
    x.resize(x.size() + static_cast<std::size_t>(sps));  // room for a late timing offset
    auto mf = dsp::matched_filter_downsample(x, taps, sps, timing);
    if (mf.size() < n_symbols) throw Error(Errc::stream_too_short, "fewer received symbols than sent");
    mf.resize(n_symbols);
    return mf;
}

ChainResult chain_metrics(const std::string& name, const std::vector<cplx>& tx, std::vector<cplx> rx,
                          std::size_t frame_length, const security::SecurityParams& sp) {
    dsp::SymbolRecord rec{tx, std::move(rx), frame_length};
    ChainResult out;
    out.chain = name;
    for (const auto& f : dsp::segment_frames(rec)) {
        try {
            out.frames.push_back(security::frame_metrics(f.tx, f.rx, sp));
        } catch (const Error& e) {
            throw Error(e.code(), name + " frame " + std::to_string(f.index) + ": " + e.what());
        }
    }
    return out;
}

void process(const ExperimentConfig& cfg, MeasurementResult& res, std::ostream* spectra_out,
             std::ostream* trace_out) {
    const auto& tx = cfg.tx;
    const double fs = tx.sample_rate;
    const int sps = tx.samples_per_symbol();
    const std::uint64_t seed = res.seed;
    const std::size_t n_sym = cfg.symbols_per_measurement;

    const auto frame = txgen::generate_symbols(n_sym, tx.modulation_variance, derive_seed(seed, kSymbolsTag));
    auto wf = txgen::build_waveform(frame, tx);
    {
        const auto trace = channel::evolve_channel(wf.size(), cfg.dynamics, fs, derive_seed(seed, kChannelTag));
        channel::apply_channel_inplace(wf, trace);
        if (trace_out) channel::write_trace_csv(*trace_out, trace, cfg.output.trace_stride);
    }
    const auto taps = txgen::rrc_taps(tx.rrc_rolloff, tx.rrc_span, sps);
    const channel::ExcessNoiseBand band{db_to_linear(-cfg.dynamics.loss_db), tx.signal_center_freq, sps, taps};
    channel::detect_inplace(wf, cfg.noise, &band, derive_seed(seed, kDetectTag));

    // Calibration records and detector balance.
    dsp::CalibrationRecord cal;
    double balance = 1.0;
    {
        const auto shot = channel::shot_noise_run(cfg.dsp.calibration_samples, cfg.noise, fs,
                                                  derive_seed(seed, kShotCalTag));
        const auto elec = channel::electronic_noise_run(cfg.dsp.calibration_samples, cfg.noise, fs,
                                                        derive_seed(seed, kElecCalTag));
        cal = dsp::calibrate_snu(shot, elec);
        balance = dsp::channel_balance_scale(shot, std::min(cfg.dsp.normalize_bandwidth, 0.5 * fs),
                                             cfg.dsp.psd_nfft);
    }
    for (auto& v : wf.y) v *= balance;
    if (spectra_out) dsp::write_spectra_csv(*spectra_out, wf, cfg.dsp.psd_nfft);

    const double f_hat = dsp::estimate_frequency_offset(wf, tx.pilot_freq, cfg.dsp.fo_search_bw, cfg.dsp.fo_nfft);
    dsp::BandPlan plan;
    plan.pilot_freq = tx.pilot_freq;
    plan.signal_center_freq = tx.signal_center_freq;
    plan.signal_bandwidth = tx.signal_bandwidth();
    plan.freq_offset = f_hat;
    plan.sample_rate = fs;
    plan.pilot_half_width = cfg.dsp.pilot_half_width;
    plan.stopband_atten_db = cfg.dsp.stopband_atten_db;
    const double r_meas = dsp::noise_floor_per_quadrature(wf, plan, cfg.dsp.psd_nfft);
    auto bands = dsp::isolate_bands(wf, plan);
    wf = DualPolWaveform();
    const double p_sig = dsp::pilot_power(bands.pilot, bands.pilot_lowpass, r_meas);
    const std::size_t timing = dsp::find_timing_offset(bands.quantum, taps, sps);

    res.diag = {cfg.dynamics.freq_offset, f_hat, r_meas, p_sig, cal.snu_scale, cal.electronic_noise_snu(),
                balance, timing};

    security::SecurityParams sp;
    sp.v_mod = tx.modulation_variance;
    sp.tau = cfg.noise.trusted_loss_tau;
    sp.v_el = cal.electronic_noise_snu();
    sp.beta = cfg.security.beta;
    sp.receiver_model = cfg.security.receiver_model;

    // Joint UKF chain.
    {
        ukf::UkfConfig uc;
        uc.q_ab = cfg.ukf.q_ab;
        uc.q_phi = cfg.ukf.q_phi;
        uc.r_meas = r_meas;
        uc.p_sig = p_sig;
        uc.pilot_freq = plan.pilot_center();
        uc.sample_rate = fs;
        uc.alpha = cfg.ukf.alpha;
        uc.beta_ut = cfg.ukf.beta_ut;
        uc.kappa = cfg.ukf.kappa;
        uc.jitter = cfg.ukf.jitter;
        uc.decimation = cfg.ukf.decimation;
        uc.init_mean = ukf::acquire(bands.pilot, uc, cfg.ukf.acquisition_samples);
        uc.init_cov = Eigen::Vector3d(cfg.ukf.init_var_ab, cfg.ukf.init_var_ab, cfg.ukf.init_var_phi).asDiagonal();
        std::vector<cplx> xq;
        {
            const auto track = ukf::run_ukf(bands.pilot, uc);
            xq = ukf::compensate(bands.quantum, track);
        }
        res.chains.push_back(chain_metrics("ukf", frame.symbols, symbols_from(std::move(xq), taps, sps, timing, n_sym),
                                           cfg.frame_length, sp));
    }

    // CMA + phase-only UKF chain.
    {
        const std::size_t n = bands.pilot.size();
        const std::size_t frame_samples = cfg.frame_length * static_cast<std::size_t>(sps);
        const std::size_t half_sym = static_cast<std::size_t>(sps) / 2;
        const std::size_t first_center = timing - (taps.size() - 1) / 2;
        std::vector<reference::FrameSpan> spans;
        for (std::size_t f = 0; f < cfg.frames_per_measurement(); ++f) {
            const std::size_t begin = first_center + f * frame_samples - half_sym;
            spans.push_back({begin, std::min(begin + frame_samples, n)});
        }
        reference::ReferenceConfig rc;
        rc.cma.mu = cfg.cma.mu;
        rc.cma.r_target = mean_power(bands.pilot.x) + mean_power(bands.pilot.y);
        rc.smoothing_fraction = cfg.cma.smoothing_fraction;
        rc.acquisition_samples = cfg.ukf.acquisition_samples;
        rc.phase.q_phi = cfg.ukf.q_phi;
        rc.phase.r_meas = r_meas;
        rc.phase.p_sig = p_sig;
        rc.phase.pilot_freq = plan.pilot_center();
        rc.phase.sample_rate = fs;
        rc.phase.alpha = cfg.ukf.alpha;
        rc.phase.beta_ut = cfg.ukf.beta_ut;
        rc.phase.kappa = cfg.ukf.kappa;
        rc.phase.jitter = cfg.ukf.jitter;
        rc.phase.init_var = cfg.ukf.init_var_phi;
        auto rr = reference::run_reference(bands.pilot, bands.quantum, spans, rc);
        bands = dsp::Bands();
        res.chains.push_back(chain_metrics("cma", frame.symbols,
                                           symbols_from(std::move(rr.x_port), taps, sps, timing, n_sym),
                                           cfg.frame_length, sp));
    }
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

MeasurementResult run_measurement(const ExperimentConfig& cfg, std::size_t m, std::ostream* spectra_out,
                                  std::ostream* trace_out) {
    MeasurementResult res;
    res.index = m;
    res.seed = measurement_seed(cfg.master_seed, m);
    try {
        process(cfg, res, spectra_out, trace_out);
        res.ok = true;
    } catch (const std::exception& e) {
        res.ok = false;
        res.error = e.what();
        res.chains.clear();
    }
    return res;
}

ChainSummary summarize_chain(const std::string& chain, const std::vector<security::FrameMetrics>& frames) {
    ChainSummary s;
    s.chain = chain;
    s.n_frames = frames.size();
    if (frames.empty()) return s;
    std::vector<double> xi;
    xi.reserve(frames.size());
    for (const auto& f : frames) {
        s.mean_t_hat += f.t_hat;
        s.mean_xi_hat += f.xi_hat;
        s.mean_i_ab += f.i_ab;
        s.mean_chi_be += f.chi_be;
        s.skf += f.skf;
        xi.push_back(f.xi_hat);
    }
    const double n = static_cast<double>(frames.size());
    s.mean_t_hat /= n;
    s.mean_xi_hat /= n;
    s.mean_i_ab /= n;
    s.mean_chi_be /= n;
    s.skf /= n;
    s.median_xi_hat = median(std::move(xi));
    s.positive_key = s.skf > 0.0;
    return s;
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi) {
    if (bins == 0) throw Error(Errc::invalid_argument, "histogram needs >= 1 bin");
    if (!(hi > lo)) hi = lo + 1e-9;
    std::vector<HistogramBin> out(bins);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        out[b].lo = lo + width * static_cast<double>(b);
        out[b].hi = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (double v : values) {
        auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
        b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        ++out[static_cast<std::size_t>(b)].count;
    }
    return out;
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary run;
    run.measurements.resize(cfg.n_measurements);

    std::ostringstream spectra;
    std::ostringstream trace;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t m = next++; m < cfg.n_measurements; m = next++) {
            const bool first = m == 0;
            run.measurements[m] = run_measurement(cfg, m, first ? &spectra : nullptr,
                                                  first && cfg.output.trace_stride > 0 ? &trace : nullptr);
        }
    };
    const std::size_t nthreads = std::min(cfg.workers, cfg.n_measurements);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    run.spectra_csv = spectra.str();
    run.trace_csv = trace.str();

    run.positive_key_count.assign(run.chains.size(), 0);
    std::vector<std::vector<double>> xi(run.chains.size());
    for (const auto& m : run.measurements) {
        std::vector<ChainSummary> row;
        if (!m.ok) ++run.failed;
        for (std::size_t c = 0; c < run.chains.size(); ++c) {
            if (!m.ok) {
                row.push_back(ChainSummary{run.chains[c]});
                continue;
            }
            const auto& frames = m.chains[c].frames;
            row.push_back(summarize_chain(run.chains[c], frames));
            if (row.back().positive_key) ++run.positive_key_count[c];
            for (const auto& f : frames) xi[c].push_back(f.xi_hat);
        }
        run.per_measurement.push_back(std::move(row));
    }
    double lo = 0.0;
    double hi = 0.0;
    bool any = false;
    for (const auto& v : xi) {
        for (double x : v) {
            lo = any ? std::min(lo, x) : x;
            hi = any ? std::max(hi, x) : x;
            any = true;
        }
    }
    for (const auto& v : xi) run.histograms.push_back(histogram(v, cfg.output.histogram_bins, lo, hi));
    return run;
}

void write_frames_csv(std::ostream& out, const RunSummary& run) {
    csv::Writer w(out);
    w.row({"measurement", "frame", "chain", "t_hat", "xi_hat", "i_ab", "chi_be", "skf"});
    for (const auto& m : run.measurements) {
        if (!m.ok) continue;
        for (const auto& c : m.chains) {
            for (std::size_t f = 0; f < c.frames.size(); ++f) {
                const auto& fm = c.frames[f];
                w.field(m.index).field(f).field(std::string_view(c.chain));
                w.field(fm.t_hat).field(fm.xi_hat).field(fm.i_ab).field(fm.chi_be).field(fm.skf);
                w.end_row();
            }
        }
    }
}

void write_summary_csv(std::ostream& out, const RunSummary& run) {
    csv::Writer w(out);
    w.row({"measurement", "chain", "status", "n_frames", "mean_t_hat", "mean_xi_hat", "median_xi_hat",
           "mean_i_ab", "mean_chi_be", "skf", "positive_key", "error"});
    for (std::size_t i = 0; i < run.measurements.size(); ++i) {
        const auto& m = run.measurements[i];
        for (const auto& s : run.per_measurement[i]) {
            w.field(m.index).field(std::string_view(s.chain)).field(m.ok ? "ok" : "failed").field(s.n_frames);
            w.field(s.mean_t_hat).field(s.mean_xi_hat).field(s.median_xi_hat).field(s.mean_i_ab);
            w.field(s.mean_chi_be).field(s.skf).field(s.positive_key ? 1 : 0).field(std::string_view(m.error));
            w.end_row();
        }
    }
}

void write_histogram_csv(std::ostream& out, const RunSummary& run) {
    csv::Writer w(out);
    w.row({"chain", "bin_lo", "bin_hi", "count"});
    for (std::size_t c = 0; c < run.histograms.size(); ++c) {
        for (const auto& b : run.histograms[c]) {
            w.field(std::string_view(run.chains[c])).field(b.lo).field(b.hi).field(b.count);
            w.end_row();
        }
    }
}

void write_diagnostics_csv(std::ostream& out, const RunSummary& run) {
    csv::Writer w(out);
    w.row({"measurement", "seed", "status", "freq_offset_true", "freq_offset_hat", "r_meas", "p_sig",
           "snu_scale", "v_el_hat", "balance_scale", "timing_offset"});
    for (const auto& m : run.measurements) {
        const auto& d = m.diag;
        w.field(m.index).field(static_cast<unsigned long long>(m.seed)).field(m.ok ? "ok" : "failed");
        w.field(d.freq_offset_true).field(d.freq_offset_hat).field(d.r_meas).field(d.p_sig);
        w.field(d.snu_scale).field(d.v_el_hat).field(d.balance_scale).field(d.timing_offset);
        w.end_row();
    }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

template <class F>
std::string render(F&& f) {
    std::ostringstream ss;
    f(ss);
    return ss.str();
}

}  // namespace

RunSummary run_to_directory(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::filesystem::path dir(cfg.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());

    auto run = run_experiment(cfg);
    write_file(dir / "frames.csv", render([&](std::ostream& o) { write_frames_csv(o, run); }));
    write_file(dir / "summary.csv", render([&](std::ostream& o) { write_summary_csv(o, run); }));
    write_file(dir / "histogram.csv", render([&](std::ostream& o) { write_histogram_csv(o, run); }));
    write_file(dir / "diagnostics.csv", render([&](std::ostream& o) { write_diagnostics_csv(o, run); }));
    if (!run.spectra_csv.empty()) write_file(dir / "spectra.csv", run.spectra_csv);
    if (!run.trace_csv.empty()) write_file(dir / "trace.csv", run.trace_csv);
    write_file(dir / "config.json", config::to_json(cfg).dump(2) + "\n");
    return run;
}

void print_summary(std::ostream& out, const RunSummary& run) {
    out << std::left << std::setw(6) << "meas" << std::setw(6) << "chain" << std::setw(8) << "status"
        << std::right << std::setw(12) << "T_hat" << std::setw(14) << "xi_hat[mSNU]" << std::setw(12)
        << "I(A:B)" << std::setw(12) << "chi(B:E)" << std::setw(12) << "SKF" << '\n';
    for (std::size_t i = 0; i < run.measurements.size(); ++i) {
        const auto& m = run.measurements[i];
        for (const auto& s : run.per_measurement[i]) {
            out << std::left << std::setw(6) << m.index << std::setw(6) << s.chain << std::setw(8)
                << (m.ok ? "ok" : "failed") << std::right << std::fixed << std::setprecision(5)
                << std::setw(12) << s.mean_t_hat << std::setprecision(3) << std::setw(14)
                << 1e3 * s.mean_xi_hat << std::setprecision(5) << std::setw(12) << s.mean_i_ab
                << std::setw(12) << s.mean_chi_be << std::setw(12) << s.skf << '\n';
        }
        if (!m.ok) out << "  error: " << m.error << '\n';
    }
    out.unsetf(std::ios::floatfield);
    for (std::size_t c = 0; c < run.chains.size(); ++c) {
        out << run.chains[c] << ": positive key in " << run.positive_key_count[c] << " of "
            << run.measurements.size() << " measurements\n";
    }
    if (run.failed) out << run.failed << " measurement(s) failed\n";
}

ComparisonReport compare_frames(const std::string& frames_csv) {
    std::ifstream in(frames_csv, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + frames_csv);
    return compare_frames(in);
}

ComparisonReport compare_frames(std::istream& in) {
    const auto table = csv::parse(in);
    if (table.rows.empty()) throw Error(Errc::io, "frames table has no data rows");
    const auto c_meas = table.column("measurement");
    const auto c_frame = table.column("frame");
    const auto c_chain = table.column("chain");
    const auto c_xi = table.column("xi_hat");
    const auto c_iab = table.column("i_ab");
    const auto c_skf = table.column("skf");

    auto num = [](const std::string& s) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error(Errc::io, "malformed number '" + s + "' in frames table");
        }
    };

    struct Acc {
        std::vector<double> xi;
        double iab = 0.0;
        std::map<std::string, std::pair<double, std::size_t>> skf;  // per measurement
    };
    std::vector<std::string> order;
    std::map<std::string, Acc> acc;
    std::map<std::pair<std::string, std::string>, std::map<std::string, double>> paired;
    for (const auto& row : table.rows) {
        const std::string& chain = row[c_chain];
        if (!acc.count(chain)) order.push_back(chain);
        auto& a = acc[chain];
        const double xi = num(row[c_xi]);
        a.xi.push_back(xi);
        a.iab += num(row[c_iab]);
        auto& s = a.skf[row[c_meas]];
        s.first += num(row[c_skf]);
        ++s.second;
        paired[{row[c_meas], row[c_frame]}][chain] = xi;
    }

    ComparisonReport rep;
    for (const auto& name : order) {
        auto& a = acc[name];
        ChainComparison c;
        c.chain = name;
        c.n_frames = a.xi.size();
        for (double v : a.xi) c.mean_xi_hat += v;
        c.mean_xi_hat /= static_cast<double>(c.n_frames);
        c.mean_i_ab = a.iab / static_cast<double>(c.n_frames);
        c.median_xi_hat = median(a.xi);
        c.n_measurements = a.skf.size();
        for (const auto& [m, s] : a.skf) {
            if (s.first / static_cast<double>(s.second) > 0.0) ++c.positive_key_measurements;
        }
        rep.chains.push_back(c);
    }
    std::size_t better = 0;
    for (const auto& [key, chains] : paired) {
        auto u = chains.find("ukf");
        auto c = chains.find("cma");
        if (u == chains.end() || c == chains.end()) continue;
        ++rep.paired_frames;
        if (u->second < c->second) ++better;
    }
    rep.frac_ukf_better = rep.paired_frames ? static_cast<double>(better) / static_cast<double>(rep.paired_frames) : 0.0;
    return rep;
}

void print_comparison(std::ostream& out, const ComparisonReport& report) {
    out << std::left << std::setw(8) << "chain" << std::right << std::setw(10) << "frames" << std::setw(18)
        << "mean_xi[mSNU]" << std::setw(18) << "median_xi[mSNU]" << std::setw(12) << "mean_I" << std::setw(14)
        << "positive_key" << '\n';
    for (const auto& c : report.chains) {
        out << std::left << std::setw(8) << c.chain << std::right << std::setw(10) << c.n_frames << std::fixed
            << std::setprecision(4) << std::setw(18) << 1e3 * c.mean_xi_hat << std::setw(18)
            << 1e3 * c.median_xi_hat << std::setprecision(5) << std::setw(12) << c.mean_i_ab << std::setw(9)
            << c.positive_key_measurements << " / " << c.n_measurements << '\n';
    }
    out.unsetf(std::ios::floatfield);
    const ChainComparison* u = nullptr;
    const ChainComparison* c = nullptr;
    for (const auto& ch : report.chains) {
        if (ch.chain == "ukf") u = &ch;
        if (ch.chain == "cma") c = &ch;
    }
    if (u && c) {
        out << "delta (ukf - cma): mean_xi " << 1e3 * (u->mean_xi_hat - c->mean_xi_hat) << " mSNU, median_xi "
            << 1e3 * (u->median_xi_hat - c->median_xi_hat) << " mSNU, mean_I " << (u->mean_i_ab - c->mean_i_ab)
            << " bits\n";
    }
    out << "frames with ukf xi < cma xi: " << report.frac_ukf_better << " of " << report.paired_frames << '\n';
}

ExperimentConfig with_parameter(const ExperimentConfig& cfg, const std::string& parameter, double value) {
    ExperimentConfig c = cfg;
    if (parameter == "v_mod") {
        c.tx.modulation_variance = value;
    } else if (parameter == "loss_db") {
        c.dynamics.loss_db = value;
    } else if (parameter == "linewidth") {
        c.dynamics.linewidth_total = value;
    } else if (parameter == "mu") {
        c.cma.mu = value;
    } else if (parameter == "q_phi") {
        c.ukf.q_phi = value;
    } else if (parameter == "theta_rate") {
        if (auto* lin = std::get_if<channel::LinearDrift>(&c.dynamics.theta_model)) {
            lin->rate = value;
        } else if (auto* sin = std::get_if<channel::SinusoidalDrift>(&c.dynamics.theta_model)) {
            sin->rate_hz = value;
        } else if (auto* rw = std::get_if<channel::RandomWalkTheta>(&c.dynamics.theta_model)) {
            rw->step_variance = value;
        } else {
            throw Error(Errc::config, "theta_rate needs a linear_drift, sinusoidal or random_walk theta model");
        }
    } else {
        std::string names;
        for (const auto& n : sweep_parameters()) names += (names.empty() ? "" : ", ") + n;
        throw Error(Errc::config, "unknown sweep parameter '" + parameter + "'; valid: " + names);
    }
    c.validate();
    return c;
}

std::vector<SweepRow> sweep(const ExperimentConfig& cfg, const std::string& parameter,
                            const std::vector<double>& values) {
    if (values.empty()) throw Error(Errc::config, "sweep needs at least one value");
    std::vector<ExperimentConfig> configs;
    for (double v : values) configs.push_back(with_parameter(cfg, parameter, v));

    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto run = run_experiment(configs[i]);
        for (std::size_t c = 0; c < run.chains.size(); ++c) {
            SweepRow r;
            r.parameter = parameter;
            r.value = values[i];
            r.chain = run.chains[c];
            r.failed = run.failed;
            r.positive_key_count = run.positive_key_count[c];
            std::vector<double> xi;
            double skf = 0.0;
            std::size_t ok = 0;
            for (std::size_t m = 0; m < run.measurements.size(); ++m) {
                if (!run.measurements[m].ok) continue;
                ++ok;
                skf += run.per_measurement[m][c].skf;
                for (const auto& f : run.measurements[m].chains[c].frames) {
                    xi.push_back(f.xi_hat);
                    r.mean_i_ab += f.i_ab;
                }
            }
            r.n_frames = xi.size();
            if (!xi.empty()) {
                for (double v : xi) r.mean_xi_hat += v;
                r.mean_xi_hat /= static_cast<double>(xi.size());
                r.mean_i_ab /= static_cast<double>(xi.size());
                r.median_xi_hat = median(xi);
            }
            if (ok) r.mean_skf = skf / static_cast<double>(ok);
            rows.push_back(r);
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    csv::Writer w(out);
    w.row({"parameter", "value", "chain", "n_frames", "mean_xi_hat", "median_xi_hat", "mean_i_ab", "mean_skf",
           "positive_key_count", "failed"});
    for (const auto& r : rows) {
        w.field(std::string_view(r.parameter)).field(r.value).field(std::string_view(r.chain)).field(r.n_frames);
        w.field(r.mean_xi_hat).field(r.median_xi_hat).field(r.mean_i_ab).field(r.mean_skf);
        w.field(r.positive_key_count).field(r.failed);
        w.end_row();
    }
}

std::size_t planned_frame_rows(const ExperimentConfig& cfg) {
    return cfg.n_measurements * cfg.frames_per_measurement() * 2;
}

}  // namespace cvqkd::experiment
