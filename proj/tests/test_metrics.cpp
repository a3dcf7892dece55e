#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "respnet/metrics.hpp"
#include "test_util.hpp"

using namespace respnet;

TEST_CASE("mse unit values and randomized oracle") {
    std::vector<double> a{1, 2, 3};
    std::vector<double> b{1, 2, 3};
    CHECK(mse(a, b) == 0.0);
    std::vector<double> c{2, 2, 3};
    CHECK(mse(a, c) == doctest::Approx(1.0 / 3.0));

    testutil::Rng rng(31);
    std::vector<double> x(100), y(100);
    for (auto& v : x) v = rng.uniform(-2, 2);
    for (auto& v : y) v = rng.uniform(-2, 2);
    double acc = 0.0;
    for (size_t i = 0; i < 100; ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
    CHECK(mse(x, y) == doctest::Approx(acc / 100.0).epsilon(1e-12));

    CHECK_THROWS_AS(mse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    LengthMismatch);
    CHECK_THROWS_AS(mse(std::vector<double>{}, std::vector<double>{}), EmptyInput);
}

TEST_CASE("identical signals correlate perfectly at lag zero") {
    testutil::Rng rng(5);
    std::vector<double> x(600);
    for (auto& v : x) v = rng.uniform(-1, 1);
    WindowMetrics m = xcorr_with_lag(x, x, 60, 2.0);
    CHECK(m.xcorr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.lag_s == 0.0);
}

TEST_CASE("a delayed sine is recovered at the injected lag") {
    // 0.25 Hz sine at 60 Hz; b trails a by 0.25 s (15 samples)
    const double fs = 60.0;
    const size_t n = 1200;
    std::vector<double> a(n), b(n);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        a[i] = std::sin(2.0 * M_PI * 0.25 * t);
        b[i] = std::sin(2.0 * M_PI * 0.25 * (t - 0.25));
    }
    WindowMetrics m = xcorr_with_lag(a, b, fs, 2.0);
    CHECK(m.xcorr > 0.99);
    CHECK(m.lag_s == doctest::Approx(0.25));
}

TEST_CASE("lag is antisymmetric under argument swap") {
    testutil::Rng rng(9);
    std::vector<double> base(800);
    for (auto& v : base) v = rng.uniform(-1, 1);
    // mild smoothing so the correlation peak is unambiguous
    std::vector<double> a(800, 0.0);
    for (size_t i = 4; i + 4 < 800; ++i)
        for (int k = -4; k <= 4; ++k) a[i] += base[i + static_cast<size_t>(k)] / 9.0;
    std::vector<double> b(800, 0.0);
    const size_t shift = 7;
    for (size_t i = shift; i < 800; ++i) b[i] = a[i - shift];
    WindowMetrics ab = xcorr_with_lag(a, b, 60, 2.0);
    WindowMetrics ba = xcorr_with_lag(b, a, 60, 2.0);
    CHECK(ab.lag_s == doctest::Approx(-ba.lag_s));
    CHECK(ab.xcorr == doctest::Approx(ba.xcorr).epsilon(1e-9));
}

TEST_CASE("xcorr is invariant to affine rescaling of either side") {
    testutil::Rng rng(13);
    std::vector<double> a(400), b(400);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    WindowMetrics m0 = xcorr_with_lag(a, b, 60, 1.0);
    std::vector<double> a2(400), b2(400);
    for (size_t i = 0; i < 400; ++i) {
        a2[i] = 3.0 * a[i] + 10.0;
        b2[i] = 0.5 * b[i] - 2.0;
    }
    WindowMetrics m1 = xcorr_with_lag(a2, b2, 60, 1.0);
    CHECK(m0.xcorr == doctest::Approx(m1.xcorr).epsilon(1e-9));
    CHECK(m0.lag_s == m1.lag_s);
}

TEST_CASE("degenerate signals are rejected") {
    std::vector<double> flat(300, 2.0);
    std::vector<double> live(300);
    for (size_t i = 0; i < 300; ++i) live[i] = std::sin(0.3 * static_cast<double>(i));
    CHECK_THROWS_AS(xcorr_with_lag(flat, live, 60, 1.0), DegenerateSignal);
    CHECK_THROWS_AS(xcorr_with_lag(live, flat, 60, 1.0), DegenerateSignal);
}

TEST_CASE("downsample_for_eval length, DC, and slow-sine preservation") {
    std::vector<double> x(2048, 1.0);
    std::vector<double> y = downsample_for_eval(x, 256, 60);
    CHECK(y.size() == 480);
    for (double v : y) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    // 0.3 Hz sine survives the 256 -> 60 Hz decimation nearly untouched
    std::vector<double> sine(2048);
    for (size_t i = 0; i < sine.size(); ++i)
        sine[i] = std::sin(2.0 * M_PI * 0.3 * static_cast<double>(i) / 256.0);
    std::vector<double> down = downsample_for_eval(sine, 256, 60);
    double worst = 0.0;
    for (size_t i = 30; i + 30 < down.size(); ++i) {
        const double t = static_cast<double>(i) / 60.0;
        worst = std::max(worst, std::abs(down[i] - std::sin(2.0 * M_PI * 0.3 * t)));
    }
    CHECK(worst < 0.01);
}

TEST_CASE("evaluate_method aggregates windows and excludes degenerates") {
    const double fs = 60.0;
    const size_t n = 480;
    std::vector<double> sine(n);
    for (size_t i = 0; i < n; ++i)
        sine[i] = std::sin(2.0 * M_PI * 0.25 * static_cast<double>(i) / fs);
    std::vector<std::vector<double>> preds{sine, sine, std::vector<double>(n, 1.0)};
    std::vector<std::vector<double>> refs{sine, sine, sine};
    EvalReport r = evaluate_method(preds, refs, fs, "wam", "synthetic");
    CHECK(r.method == "wam");
    CHECK(r.dataset_id == "synthetic");
    CHECK(r.n_windows == 2);
    CHECK(r.n_excluded == 1);
    CHECK(r.mean_mse == doctest::Approx(0.0));
    CHECK(r.mean_xcorr == doctest::Approx(1.0));
    CHECK(r.mean_abs_lag_s == doctest::Approx(0.0));

    std::vector<std::vector<double>> all_flat{std::vector<double>(n, 1.0)};
    CHECK_THROWS_AS(evaluate_method(all_flat, {sine}, fs, "wam", "synthetic"),
                    EmptyEvaluation);
    CHECK_THROWS_AS(evaluate_method({}, {}, fs, "wam", "synthetic"), EmptyEvaluation);
    CHECK_THROWS_AS(evaluate_method({sine}, {sine, sine}, fs, "wam", "synthetic"),
                    LengthMismatch);
}

TEST_CASE("evaluation MSE runs on min-max normalized signals") {
    const double fs = 60.0;
    const size_t n = 480;
    std::vector<double> a(n), b(n);
    for (size_t i = 0; i < n; ++i) {
        a[i] = std::sin(2.0 * M_PI * 0.25 * static_cast<double>(i) / fs);
        b[i] = 100.0 * a[i] + 7.0;  // same shape, wildly different scale
    }
    EvalReport r = evaluate_method({a}, {b}, fs, "m", "d");
    CHECK(r.mean_mse == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.mean_xcorr == doctest::Approx(1.0));
}

TEST_CASE("report CSV layout") {
    CHECK(report_csv_header() ==
          "method,dataset,mean_mse,mean_xcorr,mean_abs_lag_s,n_windows");
    EvalReport r;
    r.method = "wfm";
    r.dataset_id = "synthetic";
    r.mean_mse = 0.125;
    r.mean_xcorr = 0.75;
    r.mean_abs_lag_s = 0.5;
    r.n_windows = 42;
    const std::string row = report_csv_row(r);
    CHECK(row.find("wfm,synthetic,") == 0);
    CHECK(row.find("42") != std::string::npos);

    std::vector<EvalReport> reports{r};
    const std::string table = report_table(reports);
    CHECK(table.find("wfm") != std::string::npos);
}
