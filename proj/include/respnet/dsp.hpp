#pragma once

#include <span>
#include <vector>

#include "respnet/errors.hpp"

namespace respnet::dsp {

// Natural cubic spline through strictly increasing knots; constant-hold
// extrapolation outside the hull.
class CubicSpline {
public:
    CubicSpline(std::span<const double> times, std::span<const double> values);
    double operator()(double t) const;

private:
    std::vector<double> t_, y_, m_;  // m_: second derivatives at knots
};

// Zero-phase band-pass: 2nd-order Butterworth high-pass at f_lo cascaded with
// 2nd-order low-pass at f_hi, applied forward-backward over an odd-reflected
// extension of the signal.
std::vector<double> bandpass_filtfilt(std::span<const double> x, double fs, double f_lo,
                                      double f_hi);

double kaiser_bessel_i0(double x);

}  // namespace respnet::dsp
