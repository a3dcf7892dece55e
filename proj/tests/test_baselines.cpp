#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "respnet/baselines.hpp"
#include "respnet/metrics.hpp"
#include "test_util.hpp"

using namespace respnet;

namespace {

SignalRecord pulse_record(double duration_s, double fs, double hr_bpm,
                          double resp_bpm, double am_depth, double fm_depth) {
    SynthConfig cfg;
    cfg.duration_s = duration_s;
    cfg.fs = fs;
    cfg.heart_rate_bpm = hr_bpm;
    cfg.resp_rate_bpm = resp_bpm;
    cfg.am_depth = am_depth;
    cfg.fm_depth = fm_depth;
    cfg.noise_std = 0.0;
    cfg.seed = 1;
    return synth_record(cfg, "pulse");
}

}  // namespace

TEST_CASE("detect_beats counts a metronomic 60 bpm pulse") {
    SignalRecord rec = pulse_record(60, 100, 60, 10, 0.0, 0.0);
    BeatSeries beats = detect_beats(rec);
    CHECK(std::abs(static_cast<int64_t>(beats.size()) - 60) <= 1);
    // inter-beat spacing close to one second
    for (size_t i = 1; i < beats.size(); ++i)
        CHECK(beats.peak_times[i] - beats.peak_times[i - 1] ==
              doctest::Approx(1.0).epsilon(0.05));
    // troughs precede their peaks
    for (size_t i = 0; i < beats.size(); ++i) {
        CHECK(beats.trough_times[i] < beats.peak_times[i]);
        CHECK(beats.trough_values[i] < beats.peak_values[i]);
    }
}

TEST_CASE("refractory period keeps beats apart") {
    SignalRecord rec = pulse_record(30, 100, 150, 20, 0.2, 0.0);
    BaselineConfig cfg;
    BeatSeries beats = detect_beats(rec, cfg);
    REQUIRE(beats.size() >= 2);
    for (size_t i = 1; i < beats.size(); ++i)
        CHECK(beats.peak_times[i] - beats.peak_times[i - 1] >= cfg.refractory_s - 1e-9);
}

TEST_CASE("detect_beats refuses a flat signal") {
    SignalRecord rec;
    rec.record_id = "flat";
    rec.ppg.assign(1000, 1.0);
    rec.fs_ppg = 100;
    rec.resp.assign(1000, 0.0);
    rec.fs_resp = 100;
    CHECK_THROWS_AS(detect_beats(rec), NoBeats);
}

TEST_CASE("amplitude-modulated pulse yields a WAM tracking the respiration") {
    SignalRecord rec = pulse_record(120, 100, 70, 15, 0.4, 0.0);
    BeatSeries beats = detect_beats(rec);
    std::vector<double> wam = extract_wam(beats, 60, rec.duration_s());
    std::vector<double> ref = resample(rec.resp, rec.fs_resp, 60);
    const size_t n = std::min(wam.size(), ref.size());
    // drop 5 s from each end where the filter and spline settle
    std::vector<double> a(wam.begin() + 300, wam.begin() + static_cast<int64_t>(n) - 300);
    std::vector<double> b(ref.begin() + 300, ref.begin() + static_cast<int64_t>(n) - 300);
    WindowMetrics m = xcorr_with_lag(a, b, 60, 2.0);
    CHECK(m.xcorr > 0.9);
}

TEST_CASE("constant-amplitude pulse leaves almost no WAM energy") {
    SignalRecord am = pulse_record(120, 100, 70, 15, 0.4, 0.0);
    SignalRecord flat = pulse_record(120, 100, 70, 15, 0.0, 0.0);
    auto rms_interior = [](const std::vector<double>& x) {
        double acc = 0;
        for (size_t i = 300; i + 300 < x.size(); ++i) acc += x[i] * x[i];
        return std::sqrt(acc / static_cast<double>(x.size() - 600));
    };
    const double active = rms_interior(extract_wam(detect_beats(am), 60, am.duration_s()));
    const double quiet = rms_interior(extract_wam(detect_beats(flat), 60, flat.duration_s()));
    CHECK(quiet < 0.05 * active);
}

TEST_CASE("frequency-modulated pulse yields a WFM tracking the respiration") {
    SignalRecord rec = pulse_record(120, 100, 70, 12, 0.0, 0.15);
    BeatSeries beats = detect_beats(rec);
    std::vector<double> wfm = extract_wfm(beats, 60, rec.duration_s());
    std::vector<double> ref = resample(rec.resp, rec.fs_resp, 60);
    const size_t n = std::min(wfm.size(), ref.size());
    std::vector<double> a(wfm.begin() + 300, wfm.begin() + static_cast<int64_t>(n) - 300);
    std::vector<double> b(ref.begin() + 300, ref.begin() + static_cast<int64_t>(n) - 300);
    WindowMetrics m = xcorr_with_lag(a, b, 60, 2.0);
    CHECK(m.xcorr > 0.8);
}

TEST_CASE("waveform extraction preconditions") {
    BeatSeries few;
    few.peak_times = {0.0, 1.0};
    few.peak_values = {1.0, 1.0};
    few.trough_times = {-0.5, 0.5};
    few.trough_values = {0.0, 0.0};
    CHECK_THROWS_AS(extract_wam(few, 60, 2.0), TooFewBeats);
    CHECK_THROWS_AS(extract_wfm(few, 60, 2.0), TooFewBeats);
}

TEST_CASE("interpolate_to_rate passes through knots and ramps linearly") {
    IrregularSeries s;
    s.times = {0.0, 1.0, 2.0, 3.0};
    s.values = {0.0, 1.0, 2.0, 3.0};
    std::vector<double> out = interpolate_to_rate(s, 10, 3.0);
    REQUIRE(out.size() == 31);
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(static_cast<double>(i) / 10.0).epsilon(1e-9));

    // hold beyond the hull
    std::vector<double> wide = interpolate_to_rate(s, 10, 5.0);
    CHECK(wide.back() == doctest::Approx(3.0));

    IrregularSeries tiny;
    tiny.times = {0.0};
    tiny.values = {1.0};
    CHECK_THROWS_AS(interpolate_to_rate(tiny, 10, 1.0), TooFewPoints);
}

TEST_CASE("WAM ignores a DC offset in the PPG") {
    SignalRecord rec = pulse_record(60, 100, 70, 15, 0.4, 0.0);
    SignalRecord shifted = rec;
    for (auto& v : shifted.ppg) v += 5.0;
    std::vector<double> a = extract_wam(detect_beats(rec), 60, rec.duration_s());
    std::vector<double> b = extract_wam(detect_beats(shifted), 60, shifted.duration_s());
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
}

TEST_CASE("WFM ignores amplitude scaling of the PPG") {
    SignalRecord rec = pulse_record(60, 100, 70, 12, 0.0, 0.15);
    SignalRecord scaled = rec;
    for (auto& v : scaled.ppg) v *= 3.0;
    std::vector<double> a = extract_wfm(detect_beats(rec), 60, rec.duration_s());
    std::vector<double> b = extract_wfm(detect_beats(scaled), 60, scaled.duration_s());
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
}
