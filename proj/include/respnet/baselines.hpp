#pragma once

#include <span>
#include <vector>

#include "respnet/signalio.hpp"

namespace respnet {

// Detected pulse peaks with the preceding trough for each.
struct BeatSeries {
    std::vector<double> peak_times;
    std::vector<double> peak_values;
    std::vector<double> trough_times;
    std::vector<double> trough_values;

    size_t size() const { return peak_times.size(); }
};

struct IrregularSeries {
    std::vector<double> times;
    std::vector<double> values;
};

struct BaselineConfig {
    double detect_f_lo = 0.5;    // Hz, beat-detection band
    double detect_f_hi = 8.0;
    double envelope_s = 2.0;     // rolling amplitude window
    double threshold_frac = 0.3;
    double refractory_s = 0.4;
    double resp_f_lo = 0.067;    // Hz, 4-60 breaths/min output band
    double resp_f_hi = 1.0;
};

// Local-maxima detection on band-passed PPG with an adaptive threshold and
// refractory period; pairs each peak with the minimum of the preceding gap.
BeatSeries detect_beats(const SignalRecord& ppg, const BaselineConfig& cfg = {});

// Amplitude-modulation surrogate: per-beat peak minus trough, spline-resampled
// to out_fs and band-passed to the respiratory band.
std::vector<double> extract_wam(const BeatSeries& beats, double out_fs, double duration_s,
                                const BaselineConfig& cfg = {});

// Frequency-modulation surrogate: inter-beat intervals stamped at interval
// midpoints, spline-resampled and band-passed.
std::vector<double> extract_wfm(const BeatSeries& beats, double out_fs, double duration_s,
                                const BaselineConfig& cfg = {});

// Natural cubic spline inside the hull, hold outside;
// floor(duration*out_fs) + 1 samples.
std::vector<double> interpolate_to_rate(const IrregularSeries& series, double out_fs,
                                        double duration_s);

}  // namespace respnet
