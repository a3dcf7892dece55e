#include "respnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "respnet/signalio.hpp"

namespace respnet {

double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw LengthMismatch("mse: length mismatch");
    if (a.empty()) throw EmptyInput("mse: empty input");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

WindowMetrics xcorr_with_lag(std::span<const double> a, std::span<const double> b,
                             double fs, double max_lag_s) {
    if (a.size() != b.size()) throw LengthMismatch("xcorr_with_lag: length mismatch");
    const auto len = static_cast<int64_t>(a.size());
    const auto max_lag = static_cast<int64_t>(std::floor(max_lag_s * fs));
    if (max_lag >= len / 2)
        throw InvalidConfig("xcorr_with_lag: max lag must be below half the length");

    double ma = 0.0, mb = 0.0;
    for (int64_t i = 0; i < len; ++i) {
        ma += a[static_cast<size_t>(i)];
        mb += b[static_cast<size_t>(i)];
    }
    ma /= static_cast<double>(len);
    mb /= static_cast<double>(len);
    double na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < len; ++i) {
        na += (a[static_cast<size_t>(i)] - ma) * (a[static_cast<size_t>(i)] - ma);
        nb += (b[static_cast<size_t>(i)] - mb) * (b[static_cast<size_t>(i)] - mb);
    }
    if (na == 0.0 || nb == 0.0)
        throw DegenerateSignal("xcorr_with_lag: zero-variance signal");
    const double norm = std::sqrt(na) * std::sqrt(nb);

    auto corr_at = [&](int64_t lag) {
        double acc = 0.0;
        const int64_t lo = std::max<int64_t>(0, -lag);
        const int64_t hi = std::min(len, len - lag);
        for (int64_t i = lo; i < hi; ++i)
            acc += (a[static_cast<size_t>(i)] - ma) * (b[static_cast<size_t>(i + lag)] - mb);
        return acc / norm;
    };

    // visit lags by increasing |lag|, negative first, so ties keep the
    // required preference order under strict improvement
    WindowMetrics out;
    out.xcorr = corr_at(0);
    out.lag_s = 0.0;
    for (int64_t m = 1; m <= max_lag; ++m) {
        for (const int64_t lag : {-m, m}) {
            const double r = corr_at(lag);
            if (r > out.xcorr) {
                out.xcorr = r;
                out.lag_s = static_cast<double>(lag) / fs;
            }
        }
    }
    return out;
}

std::vector<double> downsample_for_eval(std::span<const double> pred, double fs_in,
                                        double fs_out) {
    if (!(fs_in > fs_out)) throw InvalidConfig("downsample_for_eval: fs_in must exceed fs_out");
    return resample(pred, fs_in, fs_out);
}

EvalReport evaluate_method(const std::vector<std::vector<double>>& preds,
                           const std::vector<std::vector<double>>& refs, double fs,
                           const std::string& method, const std::string& dataset_id) {
    if (preds.size() != refs.size())
        throw LengthMismatch("evaluate_method: prediction/reference count mismatch");
    EvalReport report;
    report.method = method;
    report.dataset_id = dataset_id;
    double sum_mse = 0.0, sum_xc = 0.0, sum_lag = 0.0;
    for (size_t w = 0; w < preds.size(); ++w) {
        const size_t len = std::min(preds[w].size(), refs[w].size());
        if (len == 0) {
            ++report.n_excluded;
            continue;
        }
        const NormalizeResult p = minmax_normalize(std::span(preds[w]).first(len));
        const NormalizeResult r = minmax_normalize(std::span(refs[w]).first(len));
        if (p.degenerate || r.degenerate) {
            ++report.n_excluded;
            continue;
        }
        sum_mse += mse(p.values, r.values);
        const WindowMetrics wm = xcorr_with_lag(r.values, p.values, fs, 2.0);
        sum_xc += wm.xcorr;
        sum_lag += std::abs(wm.lag_s);
        ++report.n_windows;
    }
    if (report.n_windows == 0)
        throw EmptyEvaluation("evaluate_method: no valid windows");
    report.mean_mse = sum_mse / static_cast<double>(report.n_windows);
    report.mean_xcorr = sum_xc / static_cast<double>(report.n_windows);
    report.mean_abs_lag_s = sum_lag / static_cast<double>(report.n_windows);
    return report;
}

std::string report_csv_header() {
    return "method,dataset,mean_mse,mean_xcorr,mean_abs_lag_s,n_windows";
}

std::string report_csv_row(const EvalReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%lld", r.method.c_str(),
                  r.dataset_id.c_str(), r.mean_mse, r.mean_xcorr, r.mean_abs_lag_s,
                  static_cast<long long>(r.n_windows));
    return buf;
}

std::string report_table(std::span<const EvalReport> reports) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %-12s %10s %18s %10s %10s\n", "Dataset",
                  "Method", "MSE", "Cross-Correlation", "Lag", "Windows");
    os << buf;
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof(buf), "%-10s %-12s %10.3f %18.3f %10.3f %10lld\n",
                      r.dataset_id.c_str(), r.method.c_str(), r.mean_mse, r.mean_xcorr,
                      r.mean_abs_lag_s, static_cast<long long>(r.n_windows));
        os << buf;
    }
    return os.str();
}

}  // namespace respnet
