#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "respnet/tensor.hpp"

namespace respnet {

struct ModelConfig {
    int64_t input_length = 2048;
    int64_t levels = 8;
    int64_t base_filters = 16;
    int64_t max_filters = 512;
    int64_t down_kernel = 4;
    int64_t down_stride = 2;
    std::vector<int64_t> inception_dilations = {1, 2, 4, 8};
    int64_t inception_kernel = 3;
    double leaky_slope = 0.2;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    uint64_t seed = 0;

    void validate() const;
    // channels after encoder level j (1-based): min(base*2^(j-1), max)
    int64_t channels_at(int64_t level) const;
    int64_t bottleneck_length() const;
};

// Named parameter store for the encoder/decoder stack. Batch-norm running
// stats live here too, flagged non-trainable.
struct ModelParams {
    ModelConfig config;
    std::vector<std::string> order;
    std::unordered_map<std::string, Tensor> tensors;
    std::unordered_map<std::string, bool> trainable;

    void add(const std::string& name, Tensor t, bool is_trainable);
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    std::vector<std::string> trainable_names() const;
};

ModelParams build_model(const ModelConfig& config);

int64_t trainable_parameter_count(const ModelParams& params);

Tensor encoder_level(ModelParams& params, int64_t level, const Tensor& x, BnMode mode,
                     GradTape* tape = nullptr);

Tensor dilated_residual_inception_block(ModelParams& params, const std::string& prefix,
                                        const Tensor& x, BnMode mode,
                                        GradTape* tape = nullptr);

Tensor decoder_level(ModelParams& params, int64_t level, const Tensor& x,
                     const Tensor& skip, BnMode mode, GradTape* tape = nullptr);

// Full encoder -> bottleneck -> decoder -> 1x1 linear head.
// x: (N, 1, input_length) -> (N, 1, input_length).
Tensor forward(ModelParams& params, const Tensor& x, BnMode mode,
               GradTape* tape = nullptr);

// Checkpoint file: magic "RSPN", version u16 LE, embedded config, then
// per-tensor records. compact=true stores values as 32-bit floats.
void save_checkpoint(const ModelParams& params, const std::string& path,
                     bool compact = false);
ModelParams load_checkpoint(const std::string& path);

}  // namespace respnet
