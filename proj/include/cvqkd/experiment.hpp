// End-to-end experiment: simulated measurements through both receiver chains
// to per-frame metrics, summaries and CSV outputs.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cvqkd/channel.hpp"
#include "cvqkd/security.hpp"
#include "cvqkd/txgen.hpp"

namespace cvqkd::experiment {

struct UkfSettings {
    double q_ab = 1e-9;
    double q_phi = 1e-5;
    double alpha = 1e-2;
    double beta_ut = 2.0;
    double kappa = 0.0;
    double jitter = 1e-12;
    double init_var_ab = 1e-2;
    double init_var_phi = 1e-1;
    std::size_t decimation = 1;
    std::size_t acquisition_samples = 2000;
};

struct CmaSettings {
    double mu = 0.01;
    double smoothing_fraction = 0.1;
};

struct DspSettings {
    double pilot_half_width = 2e6;
    double stopband_atten_db = 100.0;
    double normalize_bandwidth = 300e6;  // clipped to Nyquist
    double fo_search_bw = 1e6;
    std::size_t fo_nfft = std::size_t{1} << 20;
    std::size_t calibration_samples = std::size_t{1} << 20;
    std::size_t psd_nfft = 4096;
};

struct SecuritySettings {
    double beta = 0.95;
    security::ReceiverModel receiver_model = security::ReceiverModel::trusted;
};

struct OutputSettings {
    std::size_t histogram_bins = 40;
    std::size_t trace_stride = 0;  // 0: no trace.csv
};

struct ExperimentConfig {
    txgen::TxConfig tx;
    channel::ChannelDynamics dynamics;
    channel::NoiseConfig noise;
    UkfSettings ukf;
    CmaSettings cma;
    DspSettings dsp;
    SecuritySettings security;
    OutputSettings output;
    std::size_t n_measurements = 18;
    std::size_t symbols_per_measurement = 490000;
    std::size_t frame_length = 10000;
    std::uint64_t master_seed = 1;
    std::size_t workers = 1;
    std::string output_dir = "out";

    std::size_t frames_per_measurement() const { return symbols_per_measurement / frame_length; }
    void validate() const;
};

/// Paper scale: 1 GS/s, 50 samples/symbol, 18 x 490k symbols.
ExperimentConfig paper_profile();
/// Desk scale: 120 MS/s, 6 samples/symbol, 5 x 490k symbols.
ExperimentConfig desk_profile();
ExperimentConfig profile(const std::string& name);

std::uint64_t measurement_seed(std::uint64_t master_seed, std::size_t m);

/// Receiver-side estimates made while processing one measurement.
struct Diagnostics {
    double freq_offset_true = 0.0;
    double freq_offset_hat = 0.0;
    double r_meas = 0.0;
    double p_sig = 0.0;
    double snu_scale = 0.0;
    double v_el_hat = 0.0;
    double balance_scale = 0.0;
    std::size_t timing_offset = 0;
};

struct ChainResult {
    std::string chain;
    std::vector<security::FrameMetrics> frames;
};

struct MeasurementResult {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    Diagnostics diag;
    std::vector<ChainResult> chains;  // "ukf", then "cma"
};

struct ChainSummary {
    std::string chain;
    std::size_t n_frames = 0;
    double mean_t_hat = 0.0;
    double mean_xi_hat = 0.0;
    double median_xi_hat = 0.0;
    double mean_i_ab = 0.0;
    double mean_chi_be = 0.0;
    double skf = 0.0;  // mean of frame skf
    bool positive_key = false;
};

ChainSummary summarize_chain(const std::string& chain, const std::vector<security::FrameMetrics>& frames);

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct RunSummary {
    std::vector<MeasurementResult> measurements;
    std::vector<std::vector<ChainSummary>> per_measurement;  // [m][chain]
    std::vector<std::string> chains{"ukf", "cma"};
    std::vector<std::size_t> positive_key_count;             // per chain
    std::vector<std::vector<HistogramBin>> histograms;       // per chain
    std::size_t failed = 0;
    std::string spectra_csv;  // measurement 0
    std::string trace_csv;    // measurement 0, when trace_stride > 0
};

/// Runs one measurement of the simulated experiment. Errors are captured in
/// the result. When `trace_out` is set the hidden channel trace is written to it.
MeasurementResult run_measurement(const ExperimentConfig& cfg, std::size_t m,
                                  std::ostream* spectra_out = nullptr,
                                  std::ostream* trace_out = nullptr);

/// All measurements (parallel up to cfg.workers), summaries and histograms.
RunSummary run_experiment(const ExperimentConfig& cfg);

/// run_experiment plus frames.csv, summary.csv, histogram.csv, spectra.csv,
/// diagnostics.csv, config.json and (optionally) trace.csv under output_dir.
RunSummary run_to_directory(const ExperimentConfig& cfg);

void write_frames_csv(std::ostream& out, const RunSummary& run);
void write_summary_csv(std::ostream& out, const RunSummary& run);
void write_histogram_csv(std::ostream& out, const RunSummary& run);
void write_diagnostics_csv(std::ostream& out, const RunSummary& run);
void print_summary(std::ostream& out, const RunSummary& run);

/// Equal-width bins spanning [min, max] of the values (last bin closed).
std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins,
                                    double lo, double hi);

struct ChainComparison {
    std::string chain;
    std::size_t n_frames = 0;
    double mean_xi_hat = 0.0;
    double median_xi_hat = 0.0;
    double mean_i_ab = 0.0;
    std::size_t positive_key_measurements = 0;
    std::size_t n_measurements = 0;
};

struct ComparisonReport {
    std::vector<ChainComparison> chains;
    /// Fraction of (measurement, frame) pairs with ukf xi < cma xi.
    double frac_ukf_better = 0.0;
    std::size_t paired_frames = 0;
};

/// Reads a frames.csv; throws Errc::io on a missing or empty table.
ComparisonReport compare_frames(const std::string& frames_csv);
ComparisonReport compare_frames(std::istream& in);
void print_comparison(std::ostream& out, const ComparisonReport& report);

inline const std::vector<std::string>& sweep_parameters() {
    static const std::vector<std::string> names{"v_mod", "loss_db", "linewidth", "mu", "q_phi", "theta_rate"};
    return names;
}

/// Copy of cfg with the named parameter set. Throws Errc::config listing valid names.
ExperimentConfig with_parameter(const ExperimentConfig& cfg, const std::string& parameter, double value);

struct SweepRow {
    std::string parameter;
    double value = 0.0;
    std::string chain;
    std::size_t n_frames = 0;
    double mean_xi_hat = 0.0;
    double median_xi_hat = 0.0;
    double mean_i_ab = 0.0;
    double mean_skf = 0.0;
    std::size_t positive_key_count = 0;
    std::size_t failed = 0;
};

std::vector<SweepRow> sweep(const ExperimentConfig& cfg, const std::string& parameter,
                            const std::vector<double>& values);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

/// Planned shape of frames.csv: data rows for a fully successful run.
std::size_t planned_frame_rows(const ExperimentConfig& cfg);

}  // namespace cvqkd::experiment
