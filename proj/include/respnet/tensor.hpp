#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "respnet/errors.hpp"

namespace respnet {

// Rank-3 shape: batch x channels x length, row-major.
struct Shape {
    int64_t n = 0;
    int64_t c = 0;
    int64_t l = 0;

    int64_t size() const { return n * c * l; }
    bool operator==(const Shape&) const = default;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool on_tape = false;
};

// Shared-ownership handle; ops recorded on a GradTape keep their operand
// handles alive inside the backward closures.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) {}
    Tensor(int64_t n, int64_t c, int64_t l, bool requires_grad = false)
        : impl_(std::make_shared<TensorImpl>()) {
        impl_->shape = {n, c, l};
        impl_->value.assign(static_cast<size_t>(n * c * l), 0.0);
        impl_->requires_grad = requires_grad;
    }

    static Tensor from(std::vector<double> values, int64_t n, int64_t c, int64_t l,
                       bool requires_grad = false) {
        if (static_cast<int64_t>(values.size()) != n * c * l)
            throw ShapeMismatch("value count does not match n*c*l");
        Tensor t(n, c, l, requires_grad);
        t.impl_->value = std::move(values);
        return t;
    }
    static Tensor scalar(double v) {
        Tensor t(1, 1, 1);
        t.impl_->value[0] = v;
        return t;
    }

    const Shape& shape() const { return impl_->shape; }
    int64_t n() const { return impl_->shape.n; }
    int64_t c() const { return impl_->shape.c; }
    int64_t l() const { return impl_->shape.l; }
    int64_t size() const { return impl_->shape.size(); }

    std::span<double> value() { return impl_->value; }
    std::span<const double> value() const { return impl_->value; }
    double& at(int64_t in, int64_t ic, int64_t il) {
        return impl_->value[static_cast<size_t>((in * c() + ic) * l() + il)];
    }
    double at(int64_t in, int64_t ic, int64_t il) const {
        return impl_->value[static_cast<size_t>((in * c() + ic) * l() + il)];
    }
    double item() const {
        if (size() != 1) throw ShapeMismatch("item() on non-scalar tensor");
        return impl_->value[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<double> grad() {
        ensure_grad();
        return impl_->grad;
    }
    std::span<const double> grad_view() const { return impl_->grad; }
    void ensure_grad() {
        if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
    }
    void zero_grad() {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
    }

    bool on_tape() const { return impl_->on_tape; }
    void mark_on_tape() { impl_->on_tape = true; }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of differentiable ops; backward replays it in reverse.
// Single-writer: one forward graph per tape.
class GradTape {
public:
    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }
    // Tensors produced by taped ops; their grads are scratch space that each
    // backward pass resets, so leaf grads accumulate exactly once per call.
    void track(Tensor intermediate) { intermediates_.push_back(std::move(intermediate)); }
    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and propagates. Leaf grads accumulate
    // additively across calls; callers clear them via zero_grad /
    // sgd_momentum_step.
    void backward(Tensor loss);

private:
    std::vector<std::function<void()>> nodes_;
    std::vector<Tensor> intermediates_;
};

struct ConvSpec {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t kernel_size = 1;
    int64_t stride = 1;
    int64_t dilation = 1;
    int64_t padding = 0;

    // floor((L + 2p - d*(k-1) - 1)/s) + 1
    int64_t output_length(int64_t input_length) const;
    // (L-1)*s - 2p + d*(k-1) + 1
    int64_t transposed_output_length(int64_t input_length) const;
    void validate() const;
};

// Cross-correlation convention (no kernel flip). weight: (outC, inC, k),
// bias: (1, outC, 1). Registered on tape when any input requires grad.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec, GradTape* tape = nullptr);

// Exact adjoint of conv1d with the same spec. x: (N, outC, L),
// weight: (outC, inC, k) as for the paired forward conv, bias: (1, inC, 1).
Tensor transposed_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         const ConvSpec& spec, GradTape* tape = nullptr);

enum class BnMode { train, eval };

struct BatchNormState {
    Tensor running_mean;  // (1, C, 1)
    Tensor running_var;   // (1, C, 1)
    double momentum = 0.1;
    double eps = 1e-5;
};

// gamma/beta: (1, C, 1). Train mode normalizes per channel over (N, L) with
// biased variance and updates running stats (unbiased variance, momentum).
Tensor batch_norm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, BnMode mode, GradTape* tape = nullptr);

Tensor leaky_relu(const Tensor& x, double slope, GradTape* tape = nullptr);

// Channel concatenation; a's channels first.
Tensor concat_channels(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);

// Elementwise sum (residual connections).
Tensor add(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);

// Mean over all elements of huber(target - pred) with threshold 1.
Tensor smooth_l1_loss(const Tensor& pred, const Tensor& target,
                      GradTape* tape = nullptr);

// v <- momentum*v + grad; p <- p - lr*v; grad cleared.
void sgd_momentum_step(std::span<Tensor> params, std::span<std::vector<double>> velocities,
                       double lr, double momentum);

}  // namespace respnet
