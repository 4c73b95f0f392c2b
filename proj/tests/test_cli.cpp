#include <doctest.h>

#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>

#include "cvqkd/config.hpp"
#include "cvqkd/csv.hpp"
#include "cvqkd/experiment.hpp"

using namespace cvqkd;
using namespace cvqkd::experiment;

namespace {

ExperimentConfig tiny_config() {
    auto cfg = desk_profile();
    cfg.n_measurements = 1;
    cfg.symbols_per_measurement = 10000;
    return cfg;
}

std::string frames_text(const RunSummary& run) {
    std::ostringstream ss;
    write_frames_csv(ss, run);
    return ss.str();
}

Errc error_code_of(const std::function<void()>& f, std::string* what = nullptr) {
    try {
        f();
    } catch (const Error& e) {
        if (what) *what = e.what();
        return e.code();
    }
    FAIL("expected an error");
    return Errc::invalid_argument;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config JSON round trip") {
    for (const char* name : {"desk", "paper"}) {
        const auto cfg = profile(name);
        const auto j = config::to_json(cfg);
        const auto back = config::from_json(j, ExperimentConfig{});
        CHECK(config::to_json(back).dump() == j.dump());
    }
}

TEST_CASE("missing keys keep the base values") {
    const auto base = paper_profile();
    const auto cfg = config::from_json(nlohmann::ordered_json::parse(R"({"tx": {"symbol_rate": 1e7}})"), base);
    CHECK(cfg.tx.symbol_rate == 1e7);
    CHECK(cfg.tx.sample_rate == base.tx.sample_rate);
    CHECK(cfg.n_measurements == base.n_measurements);
}

TEST_CASE("unknown fields and type errors name the offending path") {
    std::string what;
    CHECK(error_code_of([] { (void)config::from_json(nlohmann::ordered_json::parse(R"({"tx": {"bogus": 1}})"),
                                                      ExperimentConfig{}); },
                        &what) == Errc::config);
    CHECK(what.find("tx.bogus") != std::string::npos);
    CHECK(error_code_of([] { (void)config::from_json(nlohmann::ordered_json::parse(R"({"tx": {"symbol_rate": "fast"}})"),
                                                      ExperimentConfig{}); },
                        &what) == Errc::config);
    CHECK(what.find("tx.symbol_rate") != std::string::npos);
    CHECK(error_code_of([] { (void)config::load_file("/nonexistent/cfg.json", ExperimentConfig{}); }) == Errc::io);
}

TEST_CASE("dotted overrides") {
    const auto base = desk_profile();
    auto cfg = config::apply_overrides(base, {{"tx.symbol_rate", "1e7"}, {"cma.mu", "0.002"}, {"output_dir", "elsewhere"}});
    CHECK(cfg.tx.symbol_rate == 1e7);
    CHECK(cfg.cma.mu == 0.002);
    CHECK(cfg.output_dir == "elsewhere");

    cfg = config::apply_overrides(base, {{"dynamics.theta_model", R"({"type": "linear_drift", "rate": 2.0})"}});
    REQUIRE(std::holds_alternative<channel::LinearDrift>(cfg.dynamics.theta_model));
    CHECK(std::get<channel::LinearDrift>(cfg.dynamics.theta_model).rate == 2.0);

    cfg = config::apply_overrides(base, {{"security.receiver_model", "untrusted"}});
    CHECK(cfg.security.receiver_model == security::ReceiverModel::untrusted);

    std::string what;
    CHECK(error_code_of([&] { (void)config::apply_overrides(base, {{"tx.nope", "1"}}); }, &what) == Errc::config);
    CHECK(what.find("tx.nope") != std::string::npos);
}

TEST_CASE("profiles") {
    const auto desk = profile("desk");
    const auto paper = profile("paper");
    CHECK(desk.tx.sample_rate == 120e6);
    CHECK(desk.tx.samples_per_symbol() == 6);
    CHECK(paper.tx.sample_rate == 1e9);
    CHECK(paper.tx.samples_per_symbol() == 50);
    CHECK(paper.n_measurements == 18);
    CHECK(paper.symbols_per_measurement == 490000);
    CHECK(paper.dynamics.loss_db == 5.5);
    CHECK(paper.noise.trusted_loss_tau == 0.53);
    CHECK_NOTHROW(desk.validate());
    CHECK_NOTHROW(paper.validate());
    CHECK(error_code_of([] { (void)profile("lab"); }) == Errc::config);
}

TEST_CASE("config validation catches inconsistent settings") {
    auto cfg = desk_profile();
    cfg.symbols_per_measurement = 5000;  // less than one frame
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = desk_profile();
    cfg.cma.smoothing_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = desk_profile();
    cfg.dsp.pilot_half_width = 30e6;
    CHECK(error_code_of([&] { cfg.validate(); }) == Errc::band_overlap);
}

TEST_CASE("csv formatting, quoting and parsing") {
    CHECK(csv::format_double(0.1) == "0.1");
    CHECK(csv::format_double(1.0 / 3.0) == "0.333333333");
    CHECK(csv::format_double(-2.5e-7) == "-2.5e-07");
    std::ostringstream ss;
    csv::Writer w(ss);
    w.row({"a", "b"});
    w.field(std::string_view("x,y")).field(std::string_view("say \"hi\""));
    w.end_row();
    CHECK(ss.str() == "a,b\r\n\"x,y\",\"say \"\"hi\"\"\"\r\n");
    std::istringstream in(ss.str());
    const auto t = csv::parse(in);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == "x,y");
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS(t.column("c"), Error);

    std::istringstream ragged("a,b\n1,2\n3\n");
    CHECK(error_code_of([&] { (void)csv::parse(ragged); }) == Errc::io);
}

TEST_CASE("planned frames.csv shape for the default run") {
    CHECK(planned_frame_rows(paper_profile()) == 1764);
    CHECK(paper_profile().frames_per_measurement() == 49);
}

TEST_CASE("a small run yields one frame per chain and is reproducible") {
    const auto cfg = tiny_config();
    const auto a = run_experiment(cfg);
    REQUIRE(a.measurements.size() == 1);
    INFO(a.measurements[0].error);
    REQUIRE(a.measurements[0].ok);
    REQUIRE(a.measurements[0].chains.size() == 2);
    CHECK(a.measurements[0].chains[0].chain == "ukf");
    CHECK(a.measurements[0].chains[1].chain == "cma");
    for (const auto& c : a.measurements[0].chains) CHECK(c.frames.size() == 1);
    CHECK(a.failed == 0);
    CHECK(!a.spectra_csv.empty());

    const auto b = run_experiment(cfg);
    CHECK(frames_text(a) == frames_text(b));

    std::istringstream in(frames_text(a));
    const auto t = csv::parse(in);
    CHECK(t.rows.size() == planned_frame_rows(cfg));
    CHECK(t.header == std::vector<std::string>{"measurement", "frame", "chain", "t_hat", "xi_hat", "i_ab", "chi_be", "skf"});

    for (const auto& h : a.histograms) {
        const auto total = std::accumulate(h.begin(), h.end(), std::size_t{0},
                                           [](std::size_t s, const HistogramBin& bin) { return s + bin.count; });
        CHECK(total == 1);
    }
}

TEST_CASE("measurement errors are captured rather than thrown") {
    auto cfg = tiny_config();
    cfg.tx.pilot_to_signal_power_ratio = 1e-9;  // pilot buried in noise
    const auto m = run_measurement(cfg, 0);
    CHECK_FALSE(m.ok);
    CHECK_FALSE(m.error.empty());
}

TEST_CASE("a failed measurement is isolated in the outputs") {
    RunSummary run;
    MeasurementResult good;
    good.index = 0;
    good.ok = true;
    security::FrameMetrics fm{0.28, 0.001, 0.2, 0.15, 0.04};
    good.chains = {ChainResult{"ukf", {fm}}, ChainResult{"cma", {fm}}};
    MeasurementResult bad;
    bad.index = 1;
    bad.ok = false;
    bad.error = "pilot_not_found: no spectral peak";
    run.measurements = {good, bad};
    run.per_measurement = {{summarize_chain("ukf", good.chains[0].frames), summarize_chain("cma", good.chains[1].frames)},
                           {ChainSummary{"ukf"}, ChainSummary{"cma"}}};
    run.failed = 1;

    std::istringstream frames(frames_text(run));
    const auto ft = csv::parse(frames);
    CHECK(ft.rows.size() == 2);
    for (const auto& r : ft.rows) CHECK(r[0] == "0");

    std::ostringstream ss;
    write_summary_csv(ss, run);
    std::istringstream sin(ss.str());
    const auto st = csv::parse(sin);
    REQUIRE(st.rows.size() == 4);
    const auto status = st.column("status"), err = st.column("error");
    CHECK(st.rows[0][status] == "ok");
    CHECK(st.rows[2][status] == "failed");
    CHECK(st.rows[2][err] == bad.error);
}

TEST_CASE("chain summary statistics") {
    std::vector<security::FrameMetrics> f{{0.3, 0.01, 0.2, 0.1, 0.09}, {0.3, 0.03, 0.2, 0.1, -0.01}, {0.3, 0.02, 0.2, 0.1, 0.01}};
    const auto s = summarize_chain("ukf", f);
    CHECK(s.n_frames == 3);
    CHECK(s.mean_xi_hat == doctest::Approx(0.02));
    CHECK(s.median_xi_hat == doctest::Approx(0.02));
    CHECK(s.skf == doctest::Approx(0.03));
    CHECK(s.positive_key);
}

TEST_CASE("histogram bins cover the range with a closed last bin") {
    const auto h = histogram({0.0, 0.5, 1.0, 1.0, 0.25}, 4, 0.0, 1.0);
    REQUIRE(h.size() == 4);
    CHECK(h[0].count == 1);
    CHECK(h[1].count == 1);
    CHECK(h[2].count == 1);
    CHECK(h[3].count == 2);
    CHECK(h[3].hi == 1.0);
}

TEST_CASE("compare: identical chains give zero deltas") {
    const std::string text =
        "measurement,frame,chain,t_hat,xi_hat,i_ab,chi_be,skf\n"
        "0,0,ukf,0.28,0.001,0.2,0.15,0.04\n"
        "0,0,cma,0.28,0.001,0.2,0.15,0.04\n"
        "0,1,ukf,0.28,0.003,0.2,0.15,0.02\n"
        "0,1,cma,0.28,0.003,0.2,0.15,0.02\n";
    std::istringstream in(text);
    const auto r = compare_frames(in);
    REQUIRE(r.chains.size() == 2);
    CHECK(r.chains[0].mean_xi_hat == r.chains[1].mean_xi_hat);
    CHECK(r.chains[0].mean_i_ab == r.chains[1].mean_i_ab);
    CHECK(r.paired_frames == 2);
    CHECK(r.frac_ukf_better == 0.0);
    CHECK(r.chains[0].positive_key_measurements == 1);

    std::istringstream empty("measurement,frame,chain,t_hat,xi_hat,i_ab,chi_be,skf\n");
    CHECK(error_code_of([&] { (void)compare_frames(empty); }) == Errc::io);
}

TEST_CASE("sweep") {
    auto cfg = tiny_config();
    const auto rows = sweep(cfg, "v_mod", {1.0, 1.65, 2.0});
    CHECK(rows.size() == 6);
    for (const auto& r : rows) CHECK(r.parameter == "v_mod");

    CHECK(with_parameter(cfg, "loss_db", 3.0).dynamics.loss_db == 3.0);
    CHECK(with_parameter(cfg, "mu", 0.02).cma.mu == 0.02);
    std::string what;
    CHECK(error_code_of([&] { (void)with_parameter(cfg, "colour", 1.0); }, &what) == Errc::config);
    for (const auto& name : sweep_parameters()) CHECK(what.find(name) != std::string::npos);
}

}  // TEST_SUITE
