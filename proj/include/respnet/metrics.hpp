#pragma once

#include <span>
#include <string>
#include <vector>

#include "respnet/errors.hpp"

namespace respnet {

struct WindowMetrics {
    double mse = 0.0;
    double xcorr = 0.0;
    double lag_s = 0.0;
};

struct EvalReport {
    std::string method;
    std::string dataset_id;
    double mean_mse = 0.0;
    double mean_xcorr = 0.0;
    double mean_abs_lag_s = 0.0;
    int64_t n_windows = 0;
    int64_t n_excluded = 0;  // degenerate windows skipped
};

double mse(std::span<const double> a, std::span<const double> b);

// Zero-mean normalized cross-correlation maximized over integer lags in
// [-max_lag_s*fs, +max_lag_s*fs]. Positive lag means b trails a.
// Ties resolve to the smallest |lag|, negative before positive.
WindowMetrics xcorr_with_lag(std::span<const double> a, std::span<const double> b,
                             double fs, double max_lag_s);

std::vector<double> downsample_for_eval(std::span<const double> pred, double fs_in,
                                        double fs_out);

// Per window: min-max normalize both sides, then MSE and lagged
// cross-correlation (max lag 2 s); degenerate windows are excluded and counted.
EvalReport evaluate_method(const std::vector<std::vector<double>>& preds,
                           const std::vector<std::vector<double>>& refs, double fs,
                           const std::string& method, const std::string& dataset_id);

std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);
std::string report_table(std::span<const EvalReport> reports);

}  // namespace respnet
