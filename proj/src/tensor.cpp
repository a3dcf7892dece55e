#include "respnet/tensor.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

namespace respnet {

void GradTape::backward(Tensor loss) {
    if (!loss.on_tape()) throw NoTape("loss was not produced by tape-registered ops");
    if (loss.size() != 1) throw ShapeMismatch("backward expects a scalar loss");
    for (Tensor& t : intermediates_)
        if (t.has_grad()) std::fill(t.grad().begin(), t.grad().end(), 0.0);
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

int64_t ConvSpec::output_length(int64_t input_length) const {
    return (input_length + 2 * padding - dilation * (kernel_size - 1) - 1) / stride + 1;
}

int64_t ConvSpec::transposed_output_length(int64_t input_length) const {
    return (input_length - 1) * stride - 2 * padding + dilation * (kernel_size - 1) + 1;
}

void ConvSpec::validate() const {
    if (kernel_size < 1 || stride < 1 || dilation < 1 || padding < 0 ||
        in_channels < 1 || out_channels < 1)
        throw ShapeMismatch("invalid ConvSpec");
}

namespace {

bool needs_tape(GradTape* tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad() || t->on_tape()) return true;
    return false;
}

bool wants_grad(const Tensor& t) { return t.requires_grad() || t.on_tape(); }

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int64_t m, int64_t n, int64_t k,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta,
          double* c, int64_t ldc) {
    cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, a, static_cast<int>(lda), b,
                static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// col[(ic*k + kk)*col_ld + col_off + t] = x[ic][t*stride + kk*dil - pad],
// zero off-signal. Operates on one batch sample (x points at its (C, L) slab);
// col_ld/col_off let samples share one wide column-major matrix so a whole
// minibatch becomes a single GEMM.
void im2col(const double* x, int64_t channels, int64_t length, const ConvSpec& s,
            int64_t l_out, double* col, int64_t col_ld, int64_t col_off) {
    for (int64_t ic = 0; ic < channels; ++ic) {
        for (int64_t kk = 0; kk < s.kernel_size; ++kk) {
            double* row = col + (ic * s.kernel_size + kk) * col_ld + col_off;
            const int64_t off = kk * s.dilation - s.padding;
            for (int64_t t = 0; t < l_out; ++t) {
                const int64_t ti = t * s.stride + off;
                row[t] = (ti >= 0 && ti < length) ? x[ic * length + ti] : 0.0;
            }
        }
    }
}

// Adjoint scatter of im2col: x[ic][t*stride + kk*dil - pad] += col[...].
void col2im_add(const double* col, int64_t channels, int64_t length, const ConvSpec& s,
                int64_t l_out, double* x, int64_t col_ld, int64_t col_off) {
    for (int64_t ic = 0; ic < channels; ++ic) {
        for (int64_t kk = 0; kk < s.kernel_size; ++kk) {
            const double* row = col + (ic * s.kernel_size + kk) * col_ld + col_off;
            const int64_t off = kk * s.dilation - s.padding;
            for (int64_t t = 0; t < l_out; ++t) {
                const int64_t ti = t * s.stride + off;
                if (ti >= 0 && ti < length) x[ic * length + ti] += row[t];
            }
        }
    }
}

// (N, C, L) slabs -> row-major (C, N*L) with column index n*L + t.
void gather_cn(const double* src, int64_t n, int64_t c, int64_t l, double* dst) {
    for (int64_t in = 0; in < n; ++in)
        for (int64_t ch = 0; ch < c; ++ch)
            std::memcpy(dst + (ch * n + in) * l, src + (in * c + ch) * l,
                        static_cast<size_t>(l) * sizeof(double));
}

// Inverse of gather_cn; add=true accumulates into dst.
void scatter_cn(const double* src, int64_t n, int64_t c, int64_t l, double* dst,
                bool add) {
    for (int64_t in = 0; in < n; ++in)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* s = src + (ch * n + in) * l;
            double* d = dst + (in * c + ch) * l;
            if (add)
                for (int64_t t = 0; t < l; ++t) d[t] += s[t];
            else
                std::memcpy(d, s, static_cast<size_t>(l) * sizeof(double));
        }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec, GradTape* tape) {
    spec.validate();
    if (x.c() != spec.in_channels)
        throw ShapeMismatch("conv1d: input channels do not match spec");
    if (weight.n() != spec.out_channels || weight.c() != spec.in_channels ||
        weight.l() != spec.kernel_size)
        throw ShapeMismatch("conv1d: weight shape does not match spec");
    if (bias.n() != 1 || bias.c() != spec.out_channels || bias.l() != 1)
        throw ShapeMismatch("conv1d: bias shape does not match spec");
    const int64_t l_out = spec.output_length(x.l());
    if (l_out < 1) throw EmptyOutput("conv1d: computed output length < 1");

    const int64_t batch = x.n(), c_in = x.c(), l_in = x.l();
    const int64_t c_out = spec.out_channels, kdim = c_in * spec.kernel_size;
    const int64_t nl = batch * l_out;
    Tensor out(batch, c_out, l_out);

    std::vector<double> col(static_cast<size_t>(kdim * nl));
    std::vector<double> prod(static_cast<size_t>(c_out * nl));
    for (int64_t in = 0; in < batch; ++in)
        im2col(x.value().data() + in * c_in * l_in, c_in, l_in, spec, l_out, col.data(),
               nl, in * l_out);
    gemm(CblasNoTrans, CblasNoTrans, c_out, nl, kdim, weight.value().data(), kdim,
         col.data(), nl, 0.0, prod.data(), nl);
    scatter_cn(prod.data(), batch, c_out, l_out, out.value().data(), false);
    for (int64_t in = 0; in < batch; ++in) {
        double* y = out.value().data() + in * c_out * l_out;
        for (int64_t oc = 0; oc < c_out; ++oc) {
            const double b = bias.value()[oc];
            for (int64_t t = 0; t < l_out; ++t) y[oc * l_out + t] += b;
        }
    }

    if (needs_tape(tape, {&x, &weight, &bias})) {
        out.mark_on_tape();
        tape->track(out);
        Tensor xs = x, ws = weight, bs = bias, os = out;
        tape->record([xs, ws, bs, os, spec, l_out]() mutable {
            const int64_t batch = xs.n(), c_in = xs.c(), l_in = xs.l();
            const int64_t c_out = spec.out_channels, kdim = c_in * spec.kernel_size;
            const int64_t nl = batch * l_out;
            std::span<const double> dy_all = os.grad_view();
            if (dy_all.empty()) return;
            const bool gx = wants_grad(xs), gw = wants_grad(ws), gb = wants_grad(bs);
            std::vector<double> dys(static_cast<size_t>(c_out * nl));
            gather_cn(dy_all.data(), batch, c_out, l_out, dys.data());
            std::vector<double> col(static_cast<size_t>(kdim * nl));
            if (gw) {
                for (int64_t in = 0; in < batch; ++in)
                    im2col(xs.value().data() + in * c_in * l_in, c_in, l_in, spec, l_out,
                           col.data(), nl, in * l_out);
                gemm(CblasNoTrans, CblasTrans, c_out, kdim, nl, dys.data(), nl,
                     col.data(), nl, 1.0, ws.grad().data(), kdim);
            }
            if (gx) {
                gemm(CblasTrans, CblasNoTrans, kdim, nl, c_out, ws.value().data(), kdim,
                     dys.data(), nl, 0.0, col.data(), nl);
                for (int64_t in = 0; in < batch; ++in)
                    col2im_add(col.data(), c_in, l_in, spec, l_out,
                               xs.grad().data() + in * c_in * l_in, nl, in * l_out);
            }
            if (gb) {
                double* db = bs.grad().data();
                for (int64_t oc = 0; oc < c_out; ++oc)
                    for (int64_t i = 0; i < nl; ++i) db[oc] += dys[oc * nl + i];
            }
        });
    }
    return out;
}

Tensor transposed_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         const ConvSpec& spec, GradTape* tape) {
    spec.validate();
    if (x.c() != spec.out_channels)
        throw ShapeMismatch("transposed_conv1d: input channels do not match spec");
    if (weight.n() != spec.out_channels || weight.c() != spec.in_channels ||
        weight.l() != spec.kernel_size)
        throw ShapeMismatch("transposed_conv1d: weight shape does not match spec");
    if (bias.n() != 1 || bias.c() != spec.in_channels || bias.l() != 1)
        throw ShapeMismatch("transposed_conv1d: bias shape does not match spec");
    const int64_t l_out = spec.transposed_output_length(x.l());
    if (l_out < 1) throw EmptyOutput("transposed_conv1d: computed output length < 1");

    const int64_t batch = x.n(), c_hi = spec.out_channels, c_lo = spec.in_channels;
    const int64_t l_in = x.l(), kdim = c_lo * spec.kernel_size;
    const int64_t nl = batch * l_in;
    Tensor out(batch, c_lo, l_out);

    // col = W^T * X, then scatter-add (the adjoint of conv1d's gather)
    std::vector<double> xg(static_cast<size_t>(c_hi * nl));
    gather_cn(x.value().data(), batch, c_hi, l_in, xg.data());
    std::vector<double> col(static_cast<size_t>(kdim * nl));
    gemm(CblasTrans, CblasNoTrans, kdim, nl, c_hi, weight.value().data(), kdim,
         xg.data(), nl, 0.0, col.data(), nl);
    for (int64_t in = 0; in < batch; ++in) {
        double* y = out.value().data() + in * c_lo * l_out;
        col2im_add(col.data(), c_lo, l_out, spec, l_in, y, nl, in * l_in);
        for (int64_t oc = 0; oc < c_lo; ++oc) {
            const double b = bias.value()[oc];
            for (int64_t t = 0; t < l_out; ++t) y[oc * l_out + t] += b;
        }
    }

    if (needs_tape(tape, {&x, &weight, &bias})) {
        out.mark_on_tape();
        tape->track(out);
        Tensor xs = x, ws = weight, bs = bias, os = out;
        tape->record([xs, ws, bs, os, spec, l_out]() mutable {
            const int64_t batch = xs.n(), c_hi = spec.out_channels,
                          c_lo = spec.in_channels;
            const int64_t l_in = xs.l(), kdim = c_lo * spec.kernel_size;
            const int64_t nl = batch * l_in;
            std::span<const double> dy_all = os.grad_view();
            if (dy_all.empty()) return;
            const bool gx = wants_grad(xs), gw = wants_grad(ws), gb = wants_grad(bs);
            std::vector<double> col(static_cast<size_t>(kdim * nl));
            if (gx || gw)
                for (int64_t in = 0; in < batch; ++in)
                    im2col(dy_all.data() + in * c_lo * l_out, c_lo, l_out, spec, l_in,
                           col.data(), nl, in * l_in);
            if (gx) {
                std::vector<double> dxg(static_cast<size_t>(c_hi * nl));
                gemm(CblasNoTrans, CblasNoTrans, c_hi, nl, kdim, ws.value().data(),
                     kdim, col.data(), nl, 0.0, dxg.data(), nl);
                scatter_cn(dxg.data(), batch, c_hi, l_in, xs.grad().data(), true);
            }
            if (gw) {
                std::vector<double> xg(static_cast<size_t>(c_hi * nl));
                gather_cn(xs.value().data(), batch, c_hi, l_in, xg.data());
                gemm(CblasNoTrans, CblasTrans, c_hi, kdim, nl, xg.data(), nl,
                     col.data(), nl, 1.0, ws.grad().data(), kdim);
            }
            if (gb) {
                double* db = bs.grad().data();
                for (int64_t in = 0; in < batch; ++in) {
                    const double* dy = dy_all.data() + in * c_lo * l_out;
                    for (int64_t oc = 0; oc < c_lo; ++oc)
                        for (int64_t t = 0; t < l_out; ++t) db[oc] += dy[oc * l_out + t];
                }
            }
        });
    }
    return out;
}

Tensor batch_norm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, BnMode mode, GradTape* tape) {
    const int64_t batch = x.n(), channels = x.c(), length = x.l();
    auto check_vec = [&](const Tensor& v, const char* what) {
        if (v.n() != 1 || v.c() != channels || v.l() != 1)
            throw ShapeMismatch(std::string("batch_norm1d: bad shape for ") + what);
    };
    check_vec(gamma, "gamma");
    check_vec(beta, "beta");
    check_vec(state.running_mean, "running_mean");
    check_vec(state.running_var, "running_var");

    const int64_t m = batch * length;
    std::vector<double> mean(channels), invstd(channels);
    if (mode == BnMode::train) {
        if (m < 2) throw DegenerateBatch("batch_norm1d: train mode needs N*L >= 2");
        for (int64_t ch = 0; ch < channels; ++ch) {
            double mu = 0.0;
            for (int64_t in = 0; in < batch; ++in)
                for (int64_t t = 0; t < length; ++t) mu += x.at(in, ch, t);
            mu /= static_cast<double>(m);
            double var = 0.0;
            for (int64_t in = 0; in < batch; ++in)
                for (int64_t t = 0; t < length; ++t) {
                    const double d = x.at(in, ch, t) - mu;
                    var += d * d;
                }
            var /= static_cast<double>(m);  // biased, for normalization
            mean[ch] = mu;
            invstd[ch] = 1.0 / std::sqrt(var + state.eps);
            const double var_unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
            state.running_mean.value()[ch] =
                (1.0 - state.momentum) * state.running_mean.value()[ch] + state.momentum * mu;
            state.running_var.value()[ch] =
                (1.0 - state.momentum) * state.running_var.value()[ch] +
                state.momentum * var_unbiased;
        }
    } else {
        for (int64_t ch = 0; ch < channels; ++ch) {
            mean[ch] = state.running_mean.value()[ch];
            invstd[ch] = 1.0 / std::sqrt(state.running_var.value()[ch] + state.eps);
        }
    }

    Tensor out(batch, channels, length);
    for (int64_t in = 0; in < batch; ++in)
        for (int64_t ch = 0; ch < channels; ++ch) {
            const double g = gamma.value()[ch], b = beta.value()[ch];
            for (int64_t t = 0; t < length; ++t)
                out.at(in, ch, t) = g * (x.at(in, ch, t) - mean[ch]) * invstd[ch] + b;
        }

    if (needs_tape(tape, {&x, &gamma, &beta})) {
        out.mark_on_tape();
        tape->track(out);
        Tensor xs = x, gs = gamma, bs = beta, os = out;
        const bool train = (mode == BnMode::train);
        tape->record([xs, gs, bs, os, mean = std::move(mean), invstd = std::move(invstd),
                      train]() mutable {
            const int64_t batch = xs.n(), channels = xs.c(), length = xs.l();
            const int64_t m = batch * length;
            std::span<const double> dy = os.grad_view();
            if (dy.empty()) return;
            const bool gx = wants_grad(xs), gg = wants_grad(gs), gb = wants_grad(bs);
            for (int64_t ch = 0; ch < channels; ++ch) {
                const double mu = mean[ch], is = invstd[ch];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int64_t in = 0; in < batch; ++in)
                    for (int64_t t = 0; t < length; ++t) {
                        const size_t idx = static_cast<size_t>((in * channels + ch) * length + t);
                        const double xhat = (xs.value()[idx] - mu) * is;
                        sum_dy += dy[idx];
                        sum_dy_xhat += dy[idx] * xhat;
                    }
                if (gg) gs.grad()[ch] += sum_dy_xhat;
                if (gb) bs.grad()[ch] += sum_dy;
                if (gx) {
                    const double g = gs.value()[ch];
                    const double mdy = sum_dy / static_cast<double>(m);
                    const double mdyx = sum_dy_xhat / static_cast<double>(m);
                    for (int64_t in = 0; in < batch; ++in)
                        for (int64_t t = 0; t < length; ++t) {
                            const size_t idx =
                                static_cast<size_t>((in * channels + ch) * length + t);
                            const double xhat = (xs.value()[idx] - mu) * is;
                            // eval mode: batch stats are constants, no centering terms
                            xs.grad()[idx] +=
                                train ? g * is * (dy[idx] - mdy - xhat * mdyx)
                                      : g * is * dy[idx];
                        }
                }
            }
        });
    }
    return out;
}

Tensor leaky_relu(const Tensor& x, double slope, GradTape* tape) {
    if (!(slope > 0.0 && slope < 1.0))
        throw ShapeMismatch("leaky_relu: slope must be in (0,1)");
    Tensor out(x.n(), x.c(), x.l());
    for (int64_t i = 0; i < x.size(); ++i) {
        const double v = x.value()[i];
        out.value()[i] = v >= 0.0 ? v : slope * v;
    }
    if (needs_tape(tape, {&x})) {
        out.mark_on_tape();
        tape->track(out);
        Tensor xs = x, os = out;
        tape->record([xs, os, slope]() mutable {
            std::span<const double> dy = os.grad_view();
            if (dy.empty() || !wants_grad(xs)) return;
            for (int64_t i = 0; i < xs.size(); ++i)
                xs.grad()[i] += dy[i] * (xs.value()[i] >= 0.0 ? 1.0 : slope);
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b, GradTape* tape) {
    if (a.n() != b.n() || a.l() != b.l())
        throw ShapeMismatch("concat_channels: batch or length mismatch");
    const int64_t batch = a.n(), length = a.l(), ca = a.c(), cb = b.c();
    Tensor out(batch, ca + cb, length);
    for (int64_t in = 0; in < batch; ++in) {
        std::memcpy(out.value().data() + in * (ca + cb) * length,
                    a.value().data() + in * ca * length, sizeof(double) * ca * length);
        std::memcpy(out.value().data() + (in * (ca + cb) + ca) * length,
                    b.value().data() + in * cb * length, sizeof(double) * cb * length);
    }
    if (needs_tape(tape, {&a, &b})) {
        out.mark_on_tape();
        tape->track(out);
        Tensor as = a, bs = b, os = out;
        tape->record([as, bs, os]() mutable {
            std::span<const double> dy = os.grad_view();
            if (dy.empty()) return;
            const int64_t batch = as.n(), length = as.l(), ca = as.c(), cb = bs.c();
            for (int64_t in = 0; in < batch; ++in) {
                if (wants_grad(as))
                    for (int64_t i = 0; i < ca * length; ++i)
                        as.grad()[in * ca * length + i] += dy[in * (ca + cb) * length + i];
                if (wants_grad(bs))
                    for (int64_t i = 0; i < cb * length; ++i)
                        bs.grad()[in * cb * length + i] +=
                            dy[(in * (ca + cb) + ca) * length + i];
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, GradTape* tape) {
    if (!(a.shape() == b.shape())) throw ShapeMismatch("add: shape mismatch");
    Tensor out(a.n(), a.c(), a.l());
    for (int64_t i = 0; i < a.size(); ++i) out.value()[i] = a.value()[i] + b.value()[i];
    if (needs_tape(tape, {&a, &b})) {
        out.mark_on_tape();
        tape->track(out);
        Tensor as = a, bs = b, os = out;
        tape->record([as, bs, os]() mutable {
            std::span<const double> dy = os.grad_view();
            if (dy.empty()) return;
            if (wants_grad(as))
                for (int64_t i = 0; i < as.size(); ++i) as.grad()[i] += dy[i];
            if (wants_grad(bs))
                for (int64_t i = 0; i < bs.size(); ++i) bs.grad()[i] += dy[i];
        });
    }
    return out;
}

Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target, GradTape* tape) {
    if (!(pred.shape() == target.shape()))
        throw ShapeMismatch("smooth_l1_loss: shape mismatch");
    const int64_t count = pred.size();
    double acc = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        const double d = target.value()[i] - pred.value()[i];
        acc += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(count));
    if (needs_tape(tape, {&pred, &target})) {
        out.mark_on_tape();
        tape->track(out);
        Tensor ps = pred, ts = target, os = out;
        tape->record([ps, ts, os, count]() mutable {
            std::span<const double> dy = os.grad_view();
            if (dy.empty()) return;
            const double g = dy[0] / static_cast<double>(count);
            for (int64_t i = 0; i < count; ++i) {
                const double d = ts.value()[i] - ps.value()[i];
                const double dd = std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
                if (wants_grad(ps)) ps.grad()[i] += -g * dd;
                if (wants_grad(ts)) ts.grad()[i] += g * dd;
            }
        });
    }
    return out;
}

void sgd_momentum_step(std::span<Tensor> params, std::span<std::vector<double>> velocities,
                       double lr, double momentum) {
    if (params.size() != velocities.size())
        throw ShapeMismatch("sgd_momentum_step: params/velocities count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.has_grad())
            throw MissingGrad("sgd_momentum_step: parameter has no gradient");
        std::vector<double>& v = velocities[i];
        if (v.size() != static_cast<size_t>(p.size()))
            throw ShapeMismatch("sgd_momentum_step: velocity shape mismatch");
        for (int64_t j = 0; j < p.size(); ++j) {
            v[j] = momentum * v[j] + p.grad()[j];
            p.value()[j] -= lr * v[j];
        }
        p.zero_grad();
    }
}

}  // namespace respnet
