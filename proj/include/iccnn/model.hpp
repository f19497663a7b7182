#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iccnn/ops.hpp"
#include "iccnn/tensor.hpp"

namespace iccnn {

enum class BranchKind { LR, HR };
enum class LayerKind { Conv, MaxPool, Upsample2 };

enum class Ablation { Full, LrAlone, HrAlone, FeaturesOnly, PredictionOnly };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int kernel = 0;
    int out_channels = 0;
    bool relu_after = false;
    std::string name() const;  // "Conv3-64", "MaxPool", "Upsample2"
};

struct Layer {
    LayerSpec spec;
    TensorPtr weight;  // (Cout,Cin,k,k); null for pool/upsample
    TensorPtr bias;    // (Cout)
};

/// Ordered parameter set of one branch. Frozen branches are excluded from
/// optimizer updates; see train.hpp.
struct Branch {
    BranchKind kind = BranchKind::LR;
    int stage_index = 1;
    bool frozen = false;
    int in_channels = 0;
    int shared_layer = -1;  // LR: layer whose output is exported to HR
    int fusion_at = -1;     // HR: layer index where the fused stack enters
    std::vector<Layer> layers;

    bool empty() const { return layers.empty(); }
    std::vector<TensorPtr> parameters() const;
    /// Verifies the layer list is internally consistent (channel chaining,
    /// kernel/ReLU pattern). Throws StateError on mismatch.
    void check_structure() const;
};

struct ModelConfig {
    Ablation variant = Ablation::Full;
    int lr_denom = 4;       // LR output at 1/lr_denom of the input; 1, 2, 4 or 8
    int width_divisor = 1;  // divides every hidden channel width (test-scale nets)

    void validate() const;
    bool uses_lr() const { return variant != Ablation::HrAlone; }
    bool uses_hr() const { return variant != Ablation::LrAlone; }
    bool fuses_features() const {
        return variant == Ablation::Full || variant == Ablation::FeaturesOnly;
    }
    bool fuses_prediction() const {
        return variant == Ablation::Full || variant == Ablation::PredictionOnly;
    }
};

struct StageOutputs {
    TensorPtr z_hat;            // (1, H/lr_denom, W/lr_denom); null for HR-alone
    TensorPtr y_hat;            // (1, H, W)
    TensorPtr shared_features;  // LR feature export; null for HR-alone
};

Branch build_lr_branch(int extra_input_channels, int lr_denom, int width_divisor,
                       int stage_index, std::mt19937_64& rng);
Branch build_hr_branch(int fusion_extra_channels, int width_divisor, int stage_index,
                       std::mt19937_64& rng);

/// One LR+HR pair (one stage). Stage k > 1 grows its input/fusion channel
/// counts to carry the 2*(k-1) prediction maps of the earlier stages.
class IcCnn {
public:
    IcCnn(const ModelConfig& cfg, int stage_index, std::mt19937_64& rng);

    std::pair<TensorPtr, TensorPtr> lr_forward(Tape& tape, const TensorPtr& x,
                                               const std::vector<TensorPtr>& prev_z,
                                               const std::vector<TensorPtr>& prev_y) const;
    TensorPtr hr_forward(Tape& tape, const TensorPtr& x, const TensorPtr& z_hat,
                         const TensorPtr& shared, const std::vector<TensorPtr>& prev_z,
                         const std::vector<TensorPtr>& prev_y) const;
    StageOutputs forward(Tape& tape, const TensorPtr& x, const std::vector<TensorPtr>& prev_z,
                         const std::vector<TensorPtr>& prev_y) const;

    std::vector<TensorPtr> parameters() const;
    void set_frozen(bool f);
    bool frozen() const;

    ModelConfig config;
    int stage_index = 1;
    Branch lr;
    Branch hr;
};

class MultiStageModel {
public:
    MultiStageModel(const ModelConfig& cfg, int n_stages, uint64_t seed);

    /// Runs the pipeline on x. Stage handoffs are always detached constants.
    /// With train_stage == 0 every stage runs without recording and all
    /// outputs are returned; with train_stage == k stages 1..k run and only
    /// stage k records onto `tape`.
    std::vector<StageOutputs> forward(Tape& tape, const TensorPtr& x,
                                      int train_stage = 0) const;

    int n_stages() const { return static_cast<int>(stages.size()); }
    std::vector<TensorPtr> parameters() const;
    std::vector<TensorPtr> trainable_parameters() const;

    ModelConfig config;
    std::vector<IcCnn> stages;
};

IcCnn build_ablation(Ablation variant, uint64_t seed);

long long param_count(const Branch& branch);
long long param_count(const IcCnn& stage);
long long param_count(const MultiStageModel& model);

struct NamedTensor {
    std::string name;
    TensorPtr tensor;
};

/// Deterministic parameter enumeration: stage ascending, LR before HR, layer
/// order, weight before bias. Names look like "stage1/lr/conv03/weight".
std::vector<NamedTensor> named_parameters(const MultiStageModel& model);

/// Copies every named tensor whose name and shape match a model parameter;
/// unmatched names on either side are allowed (transfer loading). Returns the
/// number of tensors applied; a matching name with a different shape throws.
int apply_named_tensors(MultiStageModel& model, const std::vector<NamedTensor>& tensors);

/// Resolution adapter: maps a (1 or C, H/from, W/from) tensor to 1/to
/// resolution by bilinear upsampling (finer) or block summing (coarser).
TensorPtr resample(Tape& tape, const TensorPtr& t, int from_denom, int to_denom);

}  // namespace iccnn
