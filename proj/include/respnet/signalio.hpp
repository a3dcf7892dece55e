#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "respnet/errors.hpp"

namespace respnet {

enum class Modality { capnometry, impedance_pneumography, oral_nasal_pressure, synthetic };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

// One continuous recording: PPG plus a reference respiration channel,
// each with its own sampling rate.
struct SignalRecord {
    std::string record_id;
    std::vector<double> ppg;
    double fs_ppg = 0.0;
    std::vector<double> resp;
    double fs_resp = 0.0;
    Modality modality = Modality::synthetic;

    double duration_s() const;
    void validate() const;
};

struct RecordMeta {
    std::string record_id;
    std::string csv_path;  // relative to the manifest's directory
    double fs_ppg = 0.0;
    double fs_resp = 0.0;
    Modality modality = Modality::synthetic;
};

struct Window {
    std::string record_id;
    uint8_t split = 0;  // 0 = train, 1 = test
    std::vector<double> x;  // PPG
    std::vector<double> y;  // reference respiration
};

struct WindowedDataset {
    std::vector<Window> windows;
    int64_t window_len = 2048;
    double fs = 256.0;
    uint64_t split_seed = 0;

    std::vector<size_t> train_indices() const;
    std::vector<size_t> test_indices() const;
};

struct SynthConfig {
    double duration_s = 480.0;
    double fs = 100.0;
    double heart_rate_bpm = 70.0;
    double resp_rate_bpm = 15.0;
    double am_depth = 0.3;
    double fm_depth = 0.0;
    double bw_depth = 0.0;
    double noise_std = 0.0;
    uint64_t seed = 0;

    void validate() const;
};

// --- record files -----------------------------------------------------------

std::vector<RecordMeta> read_manifest(const std::string& path);
void write_manifest(const std::vector<RecordMeta>& metas, const std::string& path);

// CSV with header t_s,ppg,resp; rows on the faster channel's time grid,
// blank cells where the slower channel has no sample.
SignalRecord load_record(const std::string& csv_path, const RecordMeta& meta);
void write_record(const SignalRecord& record, const std::string& csv_path);

// --- transforms -------------------------------------------------------------

// Band-limited windowed-sinc resampling (Kaiser beta 8); anti-aliasing when
// downsampling. Output length = round(L * fs_out / fs_in).
std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out);

std::vector<std::pair<std::vector<double>, std::vector<double>>> make_windows(
    const SignalRecord& record, double window_s = 8.0, double fs = 256.0);

enum class SplitMode { by_window, by_record };

WindowedDataset split_train_test(std::vector<Window> windows, double train_frac,
                                 uint64_t seed, SplitMode mode = SplitMode::by_window);

struct NormalizeResult {
    std::vector<double> values;
    bool degenerate = false;  // constant input, mapped to all 0.5
};
NormalizeResult minmax_normalize(std::span<const double> x);

std::vector<double> zscore(std::span<const double> x);

SignalRecord synth_record(const SynthConfig& cfg, const std::string& record_id);

// --- windowed dataset binary (magic "RSPW") ---------------------------------

void write_windowed(const WindowedDataset& ds, const std::string& path);
WindowedDataset read_windowed(const std::string& path);

}  // namespace respnet
