#include "iccnn/train.hpp"

#include <cmath>
#include <string>

namespace iccnn {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
    if (batch_size != 1) throw ConfigError("batch_size is fixed at 1");
    if (lambda_l < 0.0 || lambda_h < 0.0) throw ConfigError("loss weights must be >= 0");
    if (lambda_l == 0.0 && lambda_h == 0.0) throw ConfigError("loss weights cannot both be 0");
    if (!(crop_fraction > 0.0 && crop_fraction <= 1.0)) {
        throw ConfigError("crop_fraction must be in (0,1]");
    }
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (stages < 1) throw ConfigError("stages must be >= 1");
    if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
    if (lr_denom != 1 && lr_denom != 2 && lr_denom != 4 && lr_denom != 8) {
        throw ConfigError("lr_resolution must be 1, 1/2, 1/4 or 1/8");
    }
}

ModelConfig TrainConfig::model_config() const {
    ModelConfig mc;
    mc.lr_denom = lr_denom;
    return mc;
}

void sgd_momentum_step(OptimizerState& state, const std::vector<TensorPtr>& params, double lr,
                       double momentum) {
    for (const auto& p : params) {
        auto& v = state.velocity[p.get()];
        if (v.empty()) v.assign(p->data.size(), 0.0);
        const bool has_grad = !p->grad.empty();
        for (size_t i = 0; i < p->data.size(); ++i) {
            v[i] = momentum * v[i] + (has_grad ? p->grad[i] : 0.0);
            p->data[i] -= lr * v[i];
        }
    }
}

void sgd_momentum_step(OptimizerState& state, Branch& branch, double lr, double momentum) {
    if (branch.frozen) throw StateError("optimizer step applied to a frozen branch");
    sgd_momentum_step(state, branch.parameters(), lr, momentum);
}

LossTerms iccnn_loss(Tape& tape, const TensorPtr& z_hat, const TensorPtr& z_gt,
                     const TensorPtr& y_hat, const TensorPtr& y_gt, double lambda_l,
                     double lambda_h) {
    LossTerms out;
    TensorPtr zl, yl;
    if (z_hat) {
        zl = scale(tape, sum_squared_error(tape, z_hat, z_gt), lambda_l);
        out.weighted_z = zl->data[0];
    }
    if (y_hat) {
        yl = scale(tape, sum_squared_error(tape, y_hat, y_gt), lambda_h);
        out.weighted_y = yl->data[0];
    }
    if (zl && yl) {
        out.total = add(tape, zl, yl);
    } else if (zl) {
        out.total = zl;
    } else if (yl) {
        out.total = yl;
    } else {
        throw ShapeError("iccnn_loss needs at least one prediction");
    }
    return out;
}

TrainSample make_sample(TensorPtr image, const DotAnnotations& ann, double sigma) {
    if (image->rank() != 3 || image->dim(0) != 3) {
        throw ShapeError("training image must be (3,H,W), got " + image->shape_str());
    }
    if (image->dim(1) != ann.image_h || image->dim(2) != ann.image_w) {
        throw ShapeError("annotation dims do not match the image");
    }
    return TrainSample{std::move(image), gaussian_density(ann, sigma)};
}

CropResult crop_at(const TensorPtr& image, const DensityMap& y_gt, int top, int left, int h,
                   int w, int z_factor) {
    const int c = image->dim(0), ih = image->dim(1), iw = image->dim(2);
    if (y_gt.height != ih || y_gt.width != iw) {
        throw ShapeError("density map does not match the image size");
    }
    if (top < 0 || left < 0 || top + h > ih || left + w > iw) {
        throw ShapeError("crop window outside the image");
    }
    CropResult out;
    out.image = Tensor::zeros({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h; ++i) {
            const double* src =
                image->data.data() + (static_cast<size_t>(ch) * ih + top + i) * iw + left;
            std::copy(src, src + w, out.image->data.begin() +
                                        (static_cast<size_t>(ch) * h + i) * w);
        }
    }
    out.y = DensityMap::zeros(h, w, 1);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) out.y.at(i, j) = y_gt.at(top + i, left + j);
    }
    out.z = z_factor == 1 ? out.y : downsample_sum(out.y, z_factor);
    return out;
}

CropResult random_crop(const TensorPtr& image, const DensityMap& y_gt, double fraction,
                       std::mt19937_64& rng, int multiple, int z_factor) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("crop fraction must be in (0,1]");
    const int ih = image->dim(1), iw = image->dim(2);
    int h = static_cast<int>(std::floor(ih * fraction));
    int w = static_cast<int>(std::floor(iw * fraction));
    h -= h % multiple;
    w -= w % multiple;
    if (h < 16 || w < 16) {
        throw ConfigError("crop of " + std::to_string(ih) + "x" + std::to_string(iw) + " at " +
                          std::to_string(fraction) + " falls below 16x16");
    }
    std::uniform_int_distribution<int> dt(0, ih - h);
    std::uniform_int_distribution<int> dl(0, iw - w);
    const int top = dt(rng);
    const int left = dl(rng);
    return crop_at(image, y_gt, top, left, h, w, z_factor);
}

namespace {

void zero_all_grads(const std::vector<TensorPtr>& params) {
    for (const auto& p : params) p->zero_grad();
}

std::vector<LossRow> train_one_stage(MultiStageModel& model, int stage_k,
                                     const std::vector<TrainSample>& dataset,
                                     const TrainConfig& cfg, std::mt19937_64& rng) {
    Branch& lr_branch = model.stages[static_cast<size_t>(stage_k - 1)].lr;
    Branch& hr_branch = model.stages[static_cast<size_t>(stage_k - 1)].hr;

    OptimizerState opt;
    std::vector<LossRow> log;
    log.reserve(static_cast<size_t>(cfg.iterations));
    std::uniform_int_distribution<size_t> pick(0, dataset.size() - 1);
    const int multiple = std::max(4, cfg.lr_denom);

    for (int it = 1; it <= cfg.iterations; ++it) {
        const TrainSample& sample = dataset[pick(rng)];
        CropResult crop =
            random_crop(sample.image, sample.y_gt, cfg.crop_fraction, rng, multiple, cfg.lr_denom);

        LossTerms terms;
        try {
            Tape tape;
            auto outs = model.forward(tape, crop.image, stage_k);
            const StageOutputs& so = outs.back();
            terms = iccnn_loss(tape, so.z_hat,
                               so.z_hat ? density_to_tensor(crop.z) : nullptr, so.y_hat,
                               density_to_tensor(crop.y), cfg.lambda_l, cfg.lambda_h);
            tape.backward(terms.total);
        } catch (const NumericError& e) {
            throw NumericError("aborted at iteration " + std::to_string(it) + " (loss_l=" +
                               std::to_string(terms.weighted_z) + ", loss_h=" +
                               std::to_string(terms.weighted_y) + "): " + e.what());
        }

        if (!lr_branch.empty()) sgd_momentum_step(opt, lr_branch, cfg.learning_rate, cfg.momentum);
        if (!hr_branch.empty()) sgd_momentum_step(opt, hr_branch, cfg.learning_rate, cfg.momentum);
        zero_all_grads(model.parameters());

        log.push_back(LossRow{it, terms.total->data[0], terms.weighted_z, terms.weighted_y});
    }
    return log;
}

}  // namespace

TrainResult train(const std::vector<TrainSample>& dataset, const TrainConfig& config,
                  const std::vector<NamedTensor>* init, const StageDoneFn& stage_done,
                  const ModelConfig* model_override) {
    config.validate();
    if (dataset.empty()) throw UsageError("training needs a non-empty dataset");
    ModelConfig mc = model_override ? *model_override : config.model_config();
    if (mc.lr_denom != config.lr_denom) {
        throw ConfigError("model override disagrees with the LR resolution in the train config");
    }

    TrainResult result{MultiStageModel(mc, config.stages, config.seed), {}};
    if (init) apply_named_tensors(result.model, *init);
    for (int k = 1; k <= config.stages; ++k) {
        // one independent stream per stage keeps stage k reproducible even if
        // earlier budgets change
        std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(k));
        result.stage_logs.push_back(train_one_stage(result.model, k, dataset, config, rng));
        result.model.stages[static_cast<size_t>(k - 1)].set_frozen(true);
        if (stage_done) stage_done(result.model, k, result.stage_logs.back());
    }
    // leave the model unfrozen for callers that keep training or fine-tune
    for (auto& s : result.model.stages) s.set_frozen(false);
    return result;
}

TrainResult train_single_stage(const std::vector<TrainSample>& dataset,
                               const TrainConfig& config) {
    TrainConfig c = config;
    c.stages = 1;
    return train(dataset, c);
}

TrainResult train_multi_stage(const std::vector<TrainSample>& dataset,
                              const TrainConfig& config) {
    if (config.stages < 2) throw ConfigError("multi-stage training needs stages >= 2");
    return train(dataset, config);
}

namespace {
std::vector<StageOutputs> run_padded(const MultiStageModel& model, const TensorPtr& image,
                                     int* orig_h, int* orig_w) {
    const int multiple = std::max(4, model.config.lr_denom);
    PaddedSample padded = pad_to_multiple(image, {}, multiple);
    *orig_h = padded.orig_h;
    *orig_w = padded.orig_w;
    Tape tape(false);
    return model.forward(tape, padded.image, 0);
}
}  // namespace

DensityMap predict_full(const MultiStageModel& model, const TensorPtr& image) {
    int h = 0, w = 0;
    auto outs = run_padded(model, image, &h, &w);
    return tensor_to_density(*crop_tensor_hw(outs.back().y_hat, h, w), 1);
}

DensityMap predict_low(const MultiStageModel& model, const TensorPtr& image) {
    int h = 0, w = 0;
    auto outs = run_padded(model, image, &h, &w);
    const TensorPtr& z = outs.back().z_hat ? outs.back().z_hat : outs.back().y_hat;
    const int den = outs.back().z_hat ? model.config.lr_denom : 1;
    const int zh = std::min(z->dim(1), (h + den - 1) / den);
    const int zw = std::min(z->dim(2), (w + den - 1) / den);
    return tensor_to_density(*crop_tensor_hw(z, zh, zw), den);
}

double training_mae(const MultiStageModel& model, const std::vector<TrainSample>& dataset) {
    if (dataset.empty()) throw UsageError("training_mae over an empty dataset");
    double s = 0.0;
    for (const auto& sample : dataset) {
        const double pred = predict_full(model, sample.image).sum();
        s += std::fabs(pred - sample.y_gt.sum());
    }
    return s / static_cast<double>(dataset.size());
}

}  // namespace iccnn
