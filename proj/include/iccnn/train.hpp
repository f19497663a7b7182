#pragma once

#include <cstdint>
#include <random>
#include <unordered_map>
#include <vector>

#include "iccnn/density.hpp"
#include "iccnn/model.hpp"

namespace iccnn {

struct TrainConfig {
    double learning_rate = 1e-4;
    double momentum = 0.9;
    int batch_size = 1;  // the training protocol is strictly per-sample
    double lambda_l = 1e-2;
    double lambda_h = 1e2;
    double crop_fraction = 1.0 / 3.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
    int stages = 1;
    double sigma = 5.0;
    int lr_denom = 4;  // LR branch resolution 1/lr_denom

    void validate() const;
    ModelConfig model_config() const;
};

struct OptimizerState {
    std::unordered_map<const Tensor*, std::vector<double>> velocity;
};

/// Classic momentum: v <- momentum*v + g; p <- p - lr*v. Empty grads read as
/// zero. Velocity buffers are created on first use.
void sgd_momentum_step(OptimizerState& state, const std::vector<TensorPtr>& params, double lr,
                       double momentum);

/// Branch-level step; refuses frozen branches.
void sgd_momentum_step(OptimizerState& state, Branch& branch, double lr, double momentum);

/// Weighted two-term objective: lambda_l*SSE(z) + lambda_h*SSE(y). A null
/// z_hat (HR-alone variant) drops the low-resolution term.
struct LossTerms {
    TensorPtr total;
    double weighted_z = 0.0;
    double weighted_y = 0.0;
};
LossTerms iccnn_loss(Tape& tape, const TensorPtr& z_hat, const TensorPtr& z_gt,
                     const TensorPtr& y_hat, const TensorPtr& y_gt, double lambda_l,
                     double lambda_h);

struct TrainSample {
    TensorPtr image;  // (3,H,W), values in [0,1]
    DensityMap y_gt;  // full resolution
};

TrainSample make_sample(TensorPtr image, const DotAnnotations& ann, double sigma);

struct CropResult {
    TensorPtr image;
    DensityMap y;
    DensityMap z;
};

/// Deterministic window crop at (top,left) of size (h,w); z is the y crop
/// block-summed by z_factor.
CropResult crop_at(const TensorPtr& image, const DensityMap& y_gt, int top, int left, int h,
                   int w, int z_factor);

/// Uniformly placed crop of fraction*dims, rounded down to a multiple of
/// `multiple`. Crop dims below 16 are a configuration error.
CropResult random_crop(const TensorPtr& image, const DensityMap& y_gt, double fraction,
                       std::mt19937_64& rng, int multiple = 4, int z_factor = 4);

struct LossRow {
    int iter = 0;
    double loss = 0.0;
    double loss_l = 0.0;
    double loss_h = 0.0;
};

struct TrainResult {
    MultiStageModel model;
    std::vector<std::vector<LossRow>> stage_logs;  // one log per stage
};

using StageDoneFn =
    std::function<void(const MultiStageModel&, int stage, const std::vector<LossRow>&)>;

/// Trains stage k with stages < k frozen, k = 1..config.stages in order.
/// Deterministic given config.seed. `init` tensors (checkpoint contents) are
/// applied by name before training; `stage_done` fires after each stage.
/// `model_override` swaps in a non-default architecture (ablation variants,
/// width-scaled test networks) while keeping the optimizer settings.
TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& config,
                  const std::vector<NamedTensor>* init = nullptr,
                  const StageDoneFn& stage_done = {},
                  const ModelConfig* model_override = nullptr);

/// Single ic-CNN convenience wrappers over train().
TrainResult train_single_stage(const std::vector<TrainSample>& dataset,
                               const TrainConfig& config);
TrainResult train_multi_stage(const std::vector<TrainSample>& dataset,
                              const TrainConfig& config);

/// Pads the image to the model's resolution multiple, runs every stage, and
/// crops the final HR prediction back to the source size.
DensityMap predict_full(const MultiStageModel& model, const TensorPtr& image);
/// Same pass, returning the final stage's LR map (cropped to ceil(size/denom)).
DensityMap predict_low(const MultiStageModel& model, const TensorPtr& image);

/// Per-image mean absolute count error of the final HR prediction against the
/// ground-truth map sums.
double training_mae(const MultiStageModel& model, const std::vector<TrainSample>& dataset);

}  // namespace iccnn
