#include "respnet/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "respnet/dsp.hpp"

namespace respnet {

namespace {

// Sliding max of |x| over a centered window, monotonic-deque version.
std::vector<double> rolling_abs_max(std::span<const double> x, int64_t half_width) {
    const auto n = static_cast<int64_t>(x.size());
    std::vector<double> out(x.size());
    std::deque<int64_t> dq;
    int64_t right = -1;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t lo = i - half_width, hi = std::min(n - 1, i + half_width);
        while (right < hi) {
            ++right;
            const double v = std::abs(x[static_cast<size_t>(right)]);
            while (!dq.empty() && std::abs(x[static_cast<size_t>(dq.back())]) <= v)
                dq.pop_back();
            dq.push_back(right);
        }
        while (!dq.empty() && dq.front() < lo) dq.pop_front();
        out[static_cast<size_t>(i)] = std::abs(x[static_cast<size_t>(dq.front())]);
    }
    return out;
}

}  // namespace

BeatSeries detect_beats(const SignalRecord& ppg, const BaselineConfig& cfg) {
    const double fs = ppg.fs_ppg;
    if (!(fs >= 25.0)) throw InvalidConfig("detect_beats: PPG sampling rate must be >= 25 Hz");
    if (ppg.duration_s() < 2.0) throw InvalidConfig("detect_beats: record shorter than 2 s");

    const auto [mn, mx] = std::minmax_element(ppg.ppg.begin(), ppg.ppg.end());
    if (*mx == *mn) throw NoBeats("detect_beats: flat signal");

    const std::vector<double> f =
        dsp::bandpass_filtfilt(ppg.ppg, fs, cfg.detect_f_lo, cfg.detect_f_hi);
    const auto env =
        rolling_abs_max(f, static_cast<int64_t>(std::llround(cfg.envelope_s * fs / 2.0)));

    const auto n = static_cast<int64_t>(f.size());
    std::vector<int64_t> candidates;
    for (int64_t i = 1; i + 1 < n; ++i) {
        const auto idx = static_cast<size_t>(i);
        if (f[idx] > f[idx - 1] && f[idx] >= f[idx + 1] &&
            f[idx] > cfg.threshold_frac * env[idx])
            candidates.push_back(i);
    }

    const auto refractory = static_cast<int64_t>(std::llround(cfg.refractory_s * fs));
    std::vector<int64_t> peaks;
    for (int64_t c : candidates) {
        if (!peaks.empty() && c - peaks.back() < refractory) {
            if (f[static_cast<size_t>(c)] > f[static_cast<size_t>(peaks.back())])
                peaks.back() = c;  // stronger peak wins the refractory window
        } else {
            peaks.push_back(c);
        }
    }
    if (peaks.size() < 3) throw NoBeats("detect_beats: fewer than 3 peaks found");

    BeatSeries beats;
    int64_t prev = 0;
    for (int64_t p : peaks) {
        int64_t tr = prev;
        for (int64_t i = prev; i < p; ++i)
            if (f[static_cast<size_t>(i)] < f[static_cast<size_t>(tr)]) tr = i;
        beats.peak_times.push_back(static_cast<double>(p) / fs);
        beats.peak_values.push_back(f[static_cast<size_t>(p)]);
        beats.trough_times.push_back(static_cast<double>(tr) / fs);
        beats.trough_values.push_back(f[static_cast<size_t>(tr)]);
        prev = p;
    }
    return beats;
}

std::vector<double> interpolate_to_rate(const IrregularSeries& series, double out_fs,
                                        double duration_s) {
    if (series.times.size() < 2)
        throw TooFewPoints("interpolate_to_rate: need at least 2 points");
    dsp::CubicSpline spline(series.times, series.values);
    const auto count = static_cast<int64_t>(std::floor(duration_s * out_fs)) + 1;
    std::vector<double> out(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i)
        out[static_cast<size_t>(i)] = spline(static_cast<double>(i) / out_fs);
    return out;
}

std::vector<double> extract_wam(const BeatSeries& beats, double out_fs, double duration_s,
                                const BaselineConfig& cfg) {
    if (beats.size() < 3) throw TooFewBeats("extract_wam: need at least 3 beats");
    IrregularSeries amp;
    for (size_t i = 0; i < beats.size(); ++i) {
        amp.times.push_back(beats.peak_times[i]);
        amp.values.push_back(beats.peak_values[i] - beats.trough_values[i]);
    }
    const std::vector<double> uniform = interpolate_to_rate(amp, out_fs, duration_s);
    return dsp::bandpass_filtfilt(uniform, out_fs, cfg.resp_f_lo, cfg.resp_f_hi);
}

std::vector<double> extract_wfm(const BeatSeries& beats, double out_fs, double duration_s,
                                const BaselineConfig& cfg) {
    if (beats.size() < 4) throw TooFewBeats("extract_wfm: need at least 4 beats");
    IrregularSeries ibi;
    for (size_t i = 0; i + 1 < beats.size(); ++i) {
        ibi.times.push_back(0.5 * (beats.peak_times[i] + beats.peak_times[i + 1]));
        ibi.values.push_back(beats.peak_times[i + 1] - beats.peak_times[i]);
    }
    const std::vector<double> uniform = interpolate_to_rate(ibi, out_fs, duration_s);
    return dsp::bandpass_filtfilt(uniform, out_fs, cfg.resp_f_lo, cfg.resp_f_hi);
}

}  // namespace respnet
