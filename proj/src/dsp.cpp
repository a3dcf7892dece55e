#include "respnet/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace respnet::dsp {

CubicSpline::CubicSpline(std::span<const double> times, std::span<const double> values) {
    if (times.size() != values.size())
        throw LengthMismatch("spline: times/values length mismatch");
    if (times.size() < 2) throw TooFewPoints("spline: needs at least 2 points");
    for (size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw NonMonotonicTime("spline: knot times must be strictly increasing");
    t_.assign(times.begin(), times.end());
    y_.assign(values.begin(), values.end());

    const size_t n = t_.size();
    m_.assign(n, 0.0);
    if (n == 2) return;  // linear segment, natural spline is exact

    // Thomas algorithm on the natural-spline tridiagonal system
    std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
    diag[0] = 1.0;
    diag[n - 1] = 1.0;
    for (size_t i = 1; i + 1 < n; ++i) {
        const double h0 = t_[i] - t_[i - 1], h1 = t_[i + 1] - t_[i];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    std::vector<double> lower(n, 0.0);
    for (size_t i = 1; i + 1 < n; ++i) lower[i] = t_[i] - t_[i - 1];
    for (size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m_[n - 1] = rhs[n - 1] / diag[n - 1];
    for (size_t i = n - 1; i-- > 0;) m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
}

double CubicSpline::operator()(double t) const {
    if (t <= t_.front()) return y_.front();
    if (t >= t_.back()) return y_.back();
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const size_t i = static_cast<size_t>(it - t_.begin()) - 1;
    const double h = t_[i + 1] - t_[i];
    const double a = (t_[i + 1] - t) / h, b = (t - t_[i]) / h;
    return a * y_[i] + b * y_[i + 1] +
           ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

namespace {

struct Biquad {
    double b0, b1, b2, a1, a2;

    void apply(std::vector<double>& x) const {
        double z1 = 0.0, z2 = 0.0;
        for (double& v : x) {
            const double in = v;
            v = b0 * in + z1;
            z1 = b1 * in - a1 * v + z2;
            z2 = b2 * in - a2 * v;
        }
    }
};

Biquad butter_lowpass(double fc, double fs) {
    const double k = std::tan(M_PI * fc / fs);
    const double d = 1.0 + std::sqrt(2.0) * k + k * k;
    return {k * k / d, 2.0 * k * k / d, k * k / d, 2.0 * (k * k - 1.0) / d,
            (1.0 - std::sqrt(2.0) * k + k * k) / d};
}

Biquad butter_highpass(double fc, double fs) {
    const double k = std::tan(M_PI * fc / fs);
    const double d = 1.0 + std::sqrt(2.0) * k + k * k;
    return {1.0 / d, -2.0 / d, 1.0 / d, 2.0 * (k * k - 1.0) / d,
            (1.0 - std::sqrt(2.0) * k + k * k) / d};
}

}  // namespace

std::vector<double> bandpass_filtfilt(std::span<const double> x, double fs, double f_lo,
                                      double f_hi) {
    if (x.size() < 3) throw EmptyInput("bandpass: signal too short");
    if (!(fs > 0.0 && f_lo > 0.0 && f_hi > f_lo && f_hi < fs / 2.0))
        throw InvalidConfig("bandpass: bad corner frequencies");

    const size_t n = x.size();
    const size_t pad = std::min(n - 1, static_cast<size_t>(3.0 * fs / f_lo));
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (size_t i = 2; i <= pad + 1; ++i) ext.push_back(2.0 * x[n - 1] - x[n - i]);

    const Biquad hp = butter_highpass(f_lo, fs);
    const Biquad lp = butter_lowpass(f_hi, fs);
    hp.apply(ext);
    lp.apply(ext);
    std::reverse(ext.begin(), ext.end());
    hp.apply(ext);
    lp.apply(ext);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

double kaiser_bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k));
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

}  // namespace respnet::dsp
