#pragma once

// Shared test helpers: independent brute-force oracles and a
// finite-difference gradient harness. These never call the GEMM-backed
// implementation paths they are used to check.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "respnet/tensor.hpp"

namespace testutil {

using respnet::ConvSpec;
using respnet::GradTape;
using respnet::Tensor;

class Rng {
public:
    explicit Rng(uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }
    int64_t integer(int64_t lo, int64_t hi) {  // inclusive
        return lo + static_cast<int64_t>(rng_() % static_cast<uint64_t>(hi - lo + 1));
    }
    Tensor tensor(int64_t n, int64_t c, int64_t l, bool requires_grad = false,
                  double lo = -1.0, double hi = 1.0) {
        Tensor t(n, c, l, requires_grad);
        for (auto& v : t.value()) v = uniform(lo, hi);
        return t;
    }

private:
    std::mt19937_64 rng_;
};

// Direct quintuple-loop convolution, cross-correlation convention.
inline Tensor conv1d_ref(const Tensor& x, const Tensor& w, const Tensor& b,
                         const ConvSpec& s) {
    const int64_t l_out = s.output_length(x.l());
    Tensor out(x.n(), s.out_channels, l_out);
    for (int64_t n = 0; n < x.n(); ++n)
        for (int64_t oc = 0; oc < s.out_channels; ++oc)
            for (int64_t t = 0; t < l_out; ++t) {
                double acc = b.value()[oc];
                for (int64_t ic = 0; ic < s.in_channels; ++ic)
                    for (int64_t k = 0; k < s.kernel_size; ++k) {
                        const int64_t ti = t * s.stride + k * s.dilation - s.padding;
                        if (ti >= 0 && ti < x.l())
                            acc += w.at(oc, ic, k) * x.at(n, ic, ti);
                    }
                out.at(n, oc, t) = acc;
            }
    return out;
}

// Direct scatter-add transposed convolution.
inline Tensor transposed_conv1d_ref(const Tensor& x, const Tensor& w, const Tensor& b,
                                    const ConvSpec& s) {
    const int64_t l_out = s.transposed_output_length(x.l());
    Tensor out(x.n(), s.in_channels, l_out);
    for (int64_t n = 0; n < x.n(); ++n)
        for (int64_t ic = 0; ic < s.in_channels; ++ic)
            for (int64_t t = 0; t < l_out; ++t) out.at(n, ic, t) = b.value()[ic];
    for (int64_t n = 0; n < x.n(); ++n)
        for (int64_t oc = 0; oc < s.out_channels; ++oc)
            for (int64_t t = 0; t < x.l(); ++t)
                for (int64_t ic = 0; ic < s.in_channels; ++ic)
                    for (int64_t k = 0; k < s.kernel_size; ++k) {
                        const int64_t to = t * s.stride + k * s.dilation - s.padding;
                        if (to >= 0 && to < l_out)
                            out.at(n, ic, to) += w.at(oc, ic, k) * x.at(n, oc, t);
                    }
    return out;
}

inline double inner(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += a.value()[i] * b.value()[i];
    return acc;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.value()[i] - b.value()[i]));
    return m;
}

// Test-only tape op: J = sum_i c_i * x_i, used to reduce any op output to a
// scalar so the tape can be driven end to end.
inline Tensor weighted_sum(const Tensor& x, const std::vector<double>& c, GradTape* tape) {
    double acc = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) acc += c[static_cast<size_t>(i)] * x.value()[i];
    Tensor out = Tensor::scalar(acc);
    if (tape) {
        out.mark_on_tape();
        Tensor xs = x, os = out;
        tape->record([xs, os, c]() mutable {
            if (os.grad_view().empty()) return;
            const double g = os.grad_view()[0];
            for (int64_t i = 0; i < xs.size(); ++i)
                xs.grad()[i] += g * c[static_cast<size_t>(i)];
        });
    }
    return out;
}

// Central finite differences against tape gradients. `eval` maps the current
// contents of `inputs` to a scalar without side effects; `inputs` are the
// tensors whose analytic grads are checked. Returns the worst relative error
// (with unit floor on the denominator).
inline double grad_check(const std::function<double()>& eval, std::vector<Tensor> inputs,
                         const std::function<Tensor(GradTape*)>& taped_loss,
                         double step = 1e-5) {
    for (auto& t : inputs) t.zero_grad();
    GradTape tape;
    Tensor loss = taped_loss(&tape);
    tape.backward(loss);

    double worst = 0.0;
    for (auto& t : inputs) {
        for (int64_t i = 0; i < t.size(); ++i) {
            const double saved = t.value()[i];
            t.value()[i] = saved + step;
            const double fp = eval();
            t.value()[i] = saved - step;
            const double fm = eval();
            t.value()[i] = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
            const double denom =
                std::max({1e-3, std::abs(numeric), std::abs(analytic)});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    return worst;
}

}  // namespace testutil
