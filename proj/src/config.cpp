#include "cvqkd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

namespace cvqkd::config {

using nlohmann::ordered_json;
using experiment::ExperimentConfig;

namespace {

ordered_json theta_to_json(const channel::ThetaModel& model) {
    return std::visit(
        [](const auto& m) -> ordered_json {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, channel::StaticTheta>) {
                return {{"type", "static"}, {"theta0", m.theta0}};
            } else if constexpr (std::is_same_v<M, channel::LinearDrift>) {
                return {{"type", "linear_drift"}, {"rate", m.rate}, {"theta0", m.theta0}};
            } else if constexpr (std::is_same_v<M, channel::SinusoidalDrift>) {
                return {{"type", "sinusoidal"},
                        {"amplitude", m.amplitude},
                        {"rate_hz", m.rate_hz},
                        {"phase", m.phase},
                        {"theta0", m.theta0}};
            } else {
                return {{"type", "random_walk"}, {"step_variance", m.step_variance}, {"theta0", m.theta0}};
            }
        },
        model);
}

class Reader {
public:
    Reader(const ordered_json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
        throw Error(Errc::config, path + ": " + msg);
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const ordered_json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const std::string& key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) fail(at(key), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& key, int& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer()) fail(at(key), "expected an integer");
            out = v->get<int>();
        }
    }
    void get(const std::string& key, std::size_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                            v->get<long long>() < 0)) {
                fail(at(key), "expected a non-negative integer");
            }
            out = v->get<std::size_t>();
        }
    }
    void get(const std::string& key, std::uint64_t& out, bool) {
        if (const auto* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
                fail(at(key), "expected a non-negative integer");
            }
            out = v->get<std::uint64_t>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) fail(at(key), "expected a string");
            out = v->get<std::string>();
        }
    }

    template <class F>
    void child(const std::string& key, F&& f) {
        if (const auto* v = find(key)) {
            Reader r(*v, at(key));
            f(r);
            r.finish();
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) fail(at(it.key()), "unknown field");
        }
    }

    const ordered_json& raw() const { return j_; }

private:
    const ordered_json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

channel::ThetaModel theta_from(Reader& r, const channel::ThetaModel& base) {
    std::string type;
    r.get("type", type);
    if (type.empty()) {
        // Same model as base, fields overridden.
        type = std::visit(
            [](const auto& m) -> std::string {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, channel::StaticTheta>) return "static";
                else if constexpr (std::is_same_v<M, channel::LinearDrift>) return "linear_drift";
                else if constexpr (std::is_same_v<M, channel::SinusoidalDrift>) return "sinusoidal";
                else return "random_walk";
            },
            base);
    }
    auto pick = [&](auto def) {
        using M = decltype(def);
        if (const auto* p = std::get_if<M>(&base)) return *p;
        return def;
    };
    if (type == "static") {
        auto m = pick(channel::StaticTheta{});
        r.get("theta0", m.theta0);
        return m;
    }
    if (type == "linear_drift") {
        auto m = pick(channel::LinearDrift{});
        r.get("rate", m.rate);
        r.get("theta0", m.theta0);
        return m;
    }
    if (type == "sinusoidal") {
        auto m = pick(channel::SinusoidalDrift{});
        r.get("amplitude", m.amplitude);
        r.get("rate_hz", m.rate_hz);
        r.get("phase", m.phase);
        r.get("theta0", m.theta0);
        return m;
    }
    if (type == "random_walk") {
        auto m = pick(channel::RandomWalkTheta{});
        r.get("step_variance", m.step_variance);
        r.get("theta0", m.theta0);
        return m;
    }
    Reader::fail(r.at("type"), "unknown theta model '" + type +
                                   "' (static, linear_drift, sinusoidal, random_walk)");
}

}  // namespace

ordered_json to_json(const ExperimentConfig& c) {
    ordered_json j;
    j["tx"] = {{"symbol_rate", c.tx.symbol_rate},
               {"sample_rate", c.tx.sample_rate},
               {"rrc_rolloff", c.tx.rrc_rolloff},
               {"rrc_span", c.tx.rrc_span},
               {"pilot_freq", c.tx.pilot_freq},
               {"signal_center_freq", c.tx.signal_center_freq},
               {"pilot_to_signal_power_ratio", c.tx.pilot_to_signal_power_ratio},
               {"modulation_variance", c.tx.modulation_variance}};
    j["dynamics"] = {{"linewidth_total", c.dynamics.linewidth_total},
                     {"theta_model", theta_to_json(c.dynamics.theta_model)},
                     {"freq_offset", c.dynamics.freq_offset},
                     {"loss_db", c.dynamics.loss_db}};
    j["noise"] = {{"excess_noise", c.noise.excess_noise},
                  {"electronic_noise", c.noise.electronic_noise},
                  {"trusted_loss_tau", c.noise.trusted_loss_tau}};
    j["ukf"] = {{"q_ab", c.ukf.q_ab},
                {"q_phi", c.ukf.q_phi},
                {"alpha", c.ukf.alpha},
                {"beta_ut", c.ukf.beta_ut},
                {"kappa", c.ukf.kappa},
                {"jitter", c.ukf.jitter},
                {"init_var_ab", c.ukf.init_var_ab},
                {"init_var_phi", c.ukf.init_var_phi},
                {"decimation", c.ukf.decimation},
                {"acquisition_samples", c.ukf.acquisition_samples}};
    j["cma"] = {{"mu", c.cma.mu}, {"smoothing_fraction", c.cma.smoothing_fraction}};
    j["dsp"] = {{"pilot_half_width", c.dsp.pilot_half_width},
                {"stopband_atten_db", c.dsp.stopband_atten_db},
                {"normalize_bandwidth", c.dsp.normalize_bandwidth},
                {"fo_search_bw", c.dsp.fo_search_bw},
                {"fo_nfft", c.dsp.fo_nfft},
                {"calibration_samples", c.dsp.calibration_samples},
                {"psd_nfft", c.dsp.psd_nfft}};
    j["security"] = {{"beta", c.security.beta},
                     {"receiver_model", security::to_string(c.security.receiver_model)}};
    j["output"] = {{"histogram_bins", c.output.histogram_bins}, {"trace_stride", c.output.trace_stride}};
    j["n_measurements"] = c.n_measurements;
    j["symbols_per_measurement"] = c.symbols_per_measurement;
    j["frame_length"] = c.frame_length;
    j["master_seed"] = c.master_seed;
    j["workers"] = c.workers;
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig from_json(const ordered_json& j, const ExperimentConfig& base) {
    ExperimentConfig c = base;
    Reader r(j, "");
    r.child("tx", [&](Reader& t) {
        t.get("symbol_rate", c.tx.symbol_rate);
        t.get("sample_rate", c.tx.sample_rate);
        t.get("rrc_rolloff", c.tx.rrc_rolloff);
        t.get("rrc_span", c.tx.rrc_span);
        t.get("pilot_freq", c.tx.pilot_freq);
        t.get("signal_center_freq", c.tx.signal_center_freq);
        t.get("pilot_to_signal_power_ratio", c.tx.pilot_to_signal_power_ratio);
        t.get("modulation_variance", c.tx.modulation_variance);
    });
    r.child("dynamics", [&](Reader& d) {
        d.get("linewidth_total", c.dynamics.linewidth_total);
        d.child("theta_model", [&](Reader& m) { c.dynamics.theta_model = theta_from(m, c.dynamics.theta_model); });
        d.get("freq_offset", c.dynamics.freq_offset);
        d.get("loss_db", c.dynamics.loss_db);
    });
    r.child("noise", [&](Reader& n) {
        n.get("excess_noise", c.noise.excess_noise);
        n.get("electronic_noise", c.noise.electronic_noise);
        n.get("trusted_loss_tau", c.noise.trusted_loss_tau);
    });
    r.child("ukf", [&](Reader& u) {
        u.get("q_ab", c.ukf.q_ab);
        u.get("q_phi", c.ukf.q_phi);
        u.get("alpha", c.ukf.alpha);
        u.get("beta_ut", c.ukf.beta_ut);
        u.get("kappa", c.ukf.kappa);
        u.get("jitter", c.ukf.jitter);
        u.get("init_var_ab", c.ukf.init_var_ab);
        u.get("init_var_phi", c.ukf.init_var_phi);
        u.get("decimation", c.ukf.decimation);
        u.get("acquisition_samples", c.ukf.acquisition_samples);
    });
    r.child("cma", [&](Reader& m) {
        m.get("mu", c.cma.mu);
        m.get("smoothing_fraction", c.cma.smoothing_fraction);
    });
    r.child("dsp", [&](Reader& d) {
        d.get("pilot_half_width", c.dsp.pilot_half_width);
        d.get("stopband_atten_db", c.dsp.stopband_atten_db);
        d.get("normalize_bandwidth", c.dsp.normalize_bandwidth);
        d.get("fo_search_bw", c.dsp.fo_search_bw);
        d.get("fo_nfft", c.dsp.fo_nfft);
        d.get("calibration_samples", c.dsp.calibration_samples);
        d.get("psd_nfft", c.dsp.psd_nfft);
    });
    r.child("security", [&](Reader& s) {
        s.get("beta", c.security.beta);
        std::string model;
        s.get("receiver_model", model);
        if (!model.empty()) {
            try {
                c.security.receiver_model = security::parse_receiver_model(model);
            } catch (const Error&) {
                Reader::fail(s.at("receiver_model"), "expected 'trusted' or 'untrusted'");
            }
        }
    });
    r.child("output", [&](Reader& o) {
        o.get("histogram_bins", c.output.histogram_bins);
        o.get("trace_stride", c.output.trace_stride);
    });
    r.get("n_measurements", c.n_measurements);
    r.get("symbols_per_measurement", c.symbols_per_measurement);
    r.get("frame_length", c.frame_length);
    r.get("master_seed", c.master_seed, true);
    r.get("workers", c.workers);
    r.get("output_dir", c.output_dir);
    r.finish();
    try {
        c.validate();
    } catch (const Error& e) {
        throw Error(Errc::config, std::string("invalid configuration: ") + e.what());
    }
    return c;
}

ExperimentConfig load_file(const std::string& path, const ExperimentConfig& base) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open config " + path);
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::config, path + ": " + e.what());
    }
    return from_json(j, base);
}

void apply_override(ordered_json& j, const std::string& dotted_path, const std::string& value) {
    std::vector<std::string> parts;
    std::stringstream ss(dotted_path);
    std::string part;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw Error(Errc::config, "empty override path");
    ordered_json* node = &j;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i])) {
            throw Error(Errc::config, dotted_path + ": unknown field");
        }
        node = &(*node)[parts[i]];
    }
    ordered_json parsed;
    try {
        parsed = ordered_json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
        parsed = value;
    }
    // Switching the theta model type drops the fields of the previous model.
    if (parts.size() >= 2 && parts.back() == "type" && parts[parts.size() - 2] == "theta_model") {
        ordered_json* model = &j;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) model = &(*model)[parts[i]];
        if ((*model)["type"] != parsed) {
            const ordered_json spec{{"type", parsed}};
            Reader r(spec, dotted_path);
            *model = theta_to_json(theta_from(r, channel::StaticTheta{}));
        }
        return;
    }
    // Integers written as floats ("1e4") are accepted for integer fields.
    if (node->is_number_integer() && parsed.is_number_float()) {
        const double d = parsed.get<double>();
        if (d >= 0.0 && d == static_cast<double>(static_cast<std::uint64_t>(d))) {
            parsed = static_cast<std::uint64_t>(d);
        }
    }
    *node = parsed;
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
    if (overrides.empty()) return cfg;
    ordered_json j = to_json(cfg);
    for (const auto& [k, v] : overrides) apply_override(j, k, v);
    return from_json(j, cfg);
}

}  // namespace cvqkd::config
