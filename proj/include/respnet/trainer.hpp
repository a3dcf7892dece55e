#pragma once

#include <limits>
#include <string>
#include <vector>

#include "respnet/metrics.hpp"
#include "respnet/model.hpp"
#include "respnet/signalio.hpp"

namespace respnet {

struct TrainConfig {
    int64_t epochs = 300;       // paper preset uses 2000
    int64_t batch_size = 8;     // paper preset uses 256
    double lr = 0.01;
    double momentum = 0.7;
    uint64_t seed = 0;
    bool shuffle = true;
    bool eval_test = false;     // also log mean test loss each epoch
    int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    std::string checkpoint_path;   // empty = no checkpoints written
    std::string loss_log_path;     // empty = no CSV log

    void validate() const;
    static TrainConfig preset(const std::string& name);  // "desk" | "paper"
};

struct EpochStats {
    int64_t epoch = 0;
    int64_t steps = 0;  // optimizer steps this epoch = ceil(n_train / batch)
    double train_loss = 0.0;
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    double wall_s = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    void write_csv(const std::string& path) const;
};

// Minibatch SGD with momentum over the train split. Inputs are z-scored and
// targets min-max normalized per window. Resumes from optimizer state
// embedded in params (opt.* tensors) when present.
TrainHistory train(ModelParams& params, const WindowedDataset& ds, const TrainConfig& cfg);

// Eval-mode forward per window; each x must match the model input length.
std::vector<std::vector<double>> predict(ModelParams& params,
                                         const std::vector<std::vector<double>>& xs);

// Load checkpoint, predict the test split, downsample to eval_fs, score.
EvalReport evaluate_checkpoint(const std::string& path, const WindowedDataset& ds,
                               const std::string& dataset_id, double eval_fs = 60.0);

}  // namespace respnet
