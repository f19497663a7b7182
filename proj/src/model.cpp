#include "iccnn/model.hpp"

#include <cmath>
#include <unordered_map>

namespace iccnn {

namespace {

int scaled(int channels, int divisor) { return std::max(1, channels / divisor); }

int log2_exact(int v) {
    int p = 0;
    while ((1 << p) < v) ++p;
    return p;
}

TensorPtr init_conv_weight(int cout, int cin, int k, std::mt19937_64& rng) {
    auto w = Tensor::param({cout, cin, k, k});
    const double stddev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : w->data) v = dist(rng);
    return w;
}

void append_conv(Branch& b, int& cur_channels, int kernel, int out_channels, bool relu_after,
                 std::mt19937_64& rng) {
    Layer l;
    l.spec = LayerSpec{LayerKind::Conv, kernel, out_channels, relu_after};
    l.weight = init_conv_weight(out_channels, cur_channels, kernel, rng);
    l.bias = Tensor::param({out_channels});
    b.layers.push_back(std::move(l));
    cur_channels = out_channels;
}

void append_plain(Branch& b, LayerKind kind) {
    Layer l;
    l.spec = LayerSpec{kind, 0, 0, false};
    b.layers.push_back(std::move(l));
}

// Runs layers [first, last) of a branch.
TensorPtr run_layers(Tape& tape, const Branch& b, size_t first, size_t last, TensorPtr x) {
    for (size_t i = first; i < last; ++i) {
        const Layer& l = b.layers[i];
        switch (l.spec.kind) {
            case LayerKind::Conv:
                x = conv2d(tape, x, l.weight, l.bias);
                if (l.spec.relu_after) x = relu(tape, x);
                break;
            case LayerKind::MaxPool:
                x = maxpool2(tape, x);
                break;
            case LayerKind::Upsample2:
                x = upsample2_bilinear(tape, x);
                break;
        }
    }
    return x;
}

void check_spatial(const TensorPtr& t, int h, int w, const char* what) {
    if (t->rank() != 3 || t->dim(1) != h || t->dim(2) != w) {
        throw ShapeError(std::string(what) + " expected (*," + std::to_string(h) + "," +
                         std::to_string(w) + "), got " + t->shape_str());
    }
}

}  // namespace

std::string LayerSpec::name() const {
    switch (kind) {
        case LayerKind::MaxPool:
            return "MaxPool";
        case LayerKind::Upsample2:
            return "Upsample2";
        case LayerKind::Conv:
            return "Conv" + std::to_string(kernel) + "-" + std::to_string(out_channels);
    }
    return "?";
}

std::vector<TensorPtr> Branch::parameters() const {
    std::vector<TensorPtr> out;
    for (const auto& l : layers) {
        if (l.weight) out.push_back(l.weight);
        if (l.bias) out.push_back(l.bias);
    }
    return out;
}

void Branch::check_structure() const {
    int channels = in_channels;
    int last_conv = -1;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].spec.kind == LayerKind::Conv) last_conv = static_cast<int>(i);
    }
    for (size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.spec.kind != LayerKind::Conv) {
            if (l.weight || l.bias) throw StateError("non-conv layer holds parameters");
            continue;
        }
        if (!l.weight || !l.bias) throw StateError("conv layer missing parameters");
        const int expect_in =
            (kind == BranchKind::HR && static_cast<int>(i) == fusion_at) ? l.weight->dim(1)
                                                                         : channels;
        if (l.weight->dim(1) != expect_in || l.weight->dim(0) != l.spec.out_channels ||
            l.weight->dim(2) != l.spec.kernel || l.weight->dim(3) != l.spec.kernel) {
            throw StateError("conv layer " + std::to_string(i) + " weight " +
                             l.weight->shape_str() + " does not match descriptor " +
                             l.spec.name());
        }
        const bool is_last = static_cast<int>(i) == last_conv;
        if (l.spec.relu_after == is_last) {
            throw StateError("ReLU placement wrong at layer " + std::to_string(i) +
                             ": every conv except the final one is rectified");
        }
        channels = l.spec.out_channels;
    }
    if (last_conv < 0 || layers[static_cast<size_t>(last_conv)].spec.out_channels != 1) {
        throw StateError("branch must end in a single-channel conv");
    }
}

void ModelConfig::validate() const {
    if (lr_denom != 1 && lr_denom != 2 && lr_denom != 4 && lr_denom != 8) {
        throw ConfigError("lr resolution must be 1, 1/2, 1/4 or 1/8");
    }
    if (width_divisor < 1) throw ConfigError("width divisor must be >= 1");
}

Branch build_lr_branch(int extra_input_channels, int lr_denom, int width_divisor,
                       int stage_index, std::mt19937_64& rng) {
    if (extra_input_channels < 0) throw ConfigError("extra input channels must be >= 0");
    Branch b;
    b.kind = BranchKind::LR;
    b.stage_index = stage_index;
    b.in_channels = 3 + extra_input_channels;

    const int pools = log2_exact(lr_denom);
    const std::pair<int, int> convs[] = {{3, 64},  {3, 64},  {3, 128}, {3, 128}, {3, 256},
                                         {3, 256}, {3, 256}, {7, 196}, {5, 96},  {3, 32},
                                         {1, 1}};
    int channels = b.in_channels;
    int emitted = 0;
    int placed_pools = 0;
    for (const auto& [k, c] : convs) {
        const bool last = (k == 1 && c == 1);
        append_conv(b, channels, k, last ? 1 : scaled(c, width_divisor), !last, rng);
        ++emitted;
        // pools follow the leading conv pairs: after convs 2, 4, 6
        if (placed_pools < pools && emitted == 2 * (placed_pools + 1)) {
            append_plain(b, LayerKind::MaxPool);
            ++placed_pools;
        }
        if (c == 32) b.shared_layer = static_cast<int>(b.layers.size()) - 1;
    }
    if (placed_pools != pools) throw StateError("LR pool placement failed");
    b.check_structure();
    return b;
}

Branch build_hr_branch(int fusion_extra_channels, int width_divisor, int stage_index,
                       std::mt19937_64& rng) {
    if (fusion_extra_channels < 0) throw ConfigError("fusion extra channels must be >= 0");
    Branch b;
    b.kind = BranchKind::HR;
    b.stage_index = stage_index;
    b.in_channels = 3;

    int channels = b.in_channels;
    append_conv(b, channels, 7, scaled(16, width_divisor), true, rng);
    append_plain(b, LayerKind::MaxPool);
    append_conv(b, channels, 5, scaled(24, width_divisor), true, rng);
    append_plain(b, LayerKind::MaxPool);
    append_conv(b, channels, 3, scaled(48, width_divisor), true, rng);
    append_conv(b, channels, 3, scaled(48, width_divisor), true, rng);
    append_conv(b, channels, 3, scaled(24, width_divisor), true, rng);

    b.fusion_at = static_cast<int>(b.layers.size());
    channels += fusion_extra_channels;
    append_conv(b, channels, 7, scaled(196, width_divisor), true, rng);
    append_conv(b, channels, 5, scaled(96, width_divisor), true, rng);
    append_plain(b, LayerKind::Upsample2);
    append_conv(b, channels, 3, scaled(32, width_divisor), true, rng);
    append_plain(b, LayerKind::Upsample2);
    append_conv(b, channels, 1, 1, false, rng);

    b.check_structure();
    return b;
}

IcCnn::IcCnn(const ModelConfig& cfg, int stage, std::mt19937_64& rng)
    : config(cfg), stage_index(stage) {
    cfg.validate();
    if (stage < 1) throw ConfigError("stage index must be >= 1");
    // Every earlier stage hands down its HR map, plus its LR map when the
    // variant produces one.
    const int prev_y_maps = stage - 1;
    const int prev_z_maps = cfg.uses_lr() ? stage - 1 : 0;
    if (cfg.uses_lr()) {
        lr = build_lr_branch(prev_z_maps + prev_y_maps, cfg.lr_denom, cfg.width_divisor, stage,
                             rng);
    }
    if (cfg.uses_hr()) {
        int fusion_extra = prev_z_maps + prev_y_maps;
        if (cfg.fuses_features()) fusion_extra += scaled(32, cfg.width_divisor);
        if (cfg.fuses_prediction()) fusion_extra += 1;
        hr = build_hr_branch(fusion_extra, cfg.width_divisor, stage, rng);
    }
}

TensorPtr resample(Tape& tape, const TensorPtr& t, int from_denom, int to_denom) {
    if (from_denom == to_denom) return t;
    if (from_denom > to_denom) {
        TensorPtr out = t;
        for (int d = from_denom; d > to_denom; d /= 2) out = upsample2_bilinear(tape, out);
        return out;
    }
    return block_sum(tape, t, to_denom / from_denom);
}

std::pair<TensorPtr, TensorPtr> IcCnn::lr_forward(Tape& tape, const TensorPtr& x,
                                                  const std::vector<TensorPtr>& prev_z,
                                                  const std::vector<TensorPtr>& prev_y) const {
    if (lr.empty()) throw StateError("variant has no LR branch");
    if (x->rank() != 3) throw ShapeError("lr_forward expects a (C,H,W) image");
    const int h = x->dim(1), w = x->dim(2);
    const int den = config.lr_denom;
    if (h % den != 0 || w % den != 0) {
        throw ShapeError("lr_forward input " + x->shape_str() + " not divisible by " +
                         std::to_string(den));
    }
    if (static_cast<int>(prev_y.size()) != stage_index - 1 ||
        static_cast<int>(prev_z.size()) != (config.uses_lr() ? stage_index - 1 : 0)) {
        throw ShapeError("stage " + std::to_string(stage_index) +
                         " got an unexpected number of previous predictions");
    }

    TensorPtr x0 = x;
    if (!prev_z.empty()) {
        std::vector<TensorPtr> parts{x};
        for (const auto& z : prev_z) {
            check_spatial(z, h / den, w / den, "previous LR prediction");
            parts.push_back(resample(tape, z, den, 1));
        }
        for (const auto& y : prev_y) {
            check_spatial(y, h, w, "previous HR prediction");
            parts.push_back(y);
        }
        x0 = concat_channels(tape, parts);
    }
    if (x0->dim(0) != lr.in_channels) {
        throw ShapeError("LR input channels " + std::to_string(x0->dim(0)) + ", branch built for " +
                         std::to_string(lr.in_channels));
    }

    TensorPtr cur = x0;
    TensorPtr shared;
    for (size_t i = 0; i < lr.layers.size(); ++i) {
        cur = run_layers(tape, lr, i, i + 1, cur);
        if (static_cast<int>(i) == lr.shared_layer) shared = cur;
    }
    return {cur, shared};
}

TensorPtr IcCnn::hr_forward(Tape& tape, const TensorPtr& x, const TensorPtr& z_hat,
                            const TensorPtr& shared, const std::vector<TensorPtr>& prev_z,
                            const std::vector<TensorPtr>& prev_y) const {
    if (hr.empty()) throw StateError("variant has no HR branch");
    if (x->rank() != 3 || x->dim(0) != hr.in_channels) {
        throw ShapeError("hr_forward expects a (3,H,W) image, got " + x->shape_str());
    }
    const int h = x->dim(1), w = x->dim(2);
    if (h % 4 != 0 || w % 4 != 0) {
        throw ShapeError("hr_forward input " + x->shape_str() + " not divisible by 4");
    }
    const int den = config.lr_denom;
    if (static_cast<int>(prev_y.size()) != stage_index - 1 ||
        static_cast<int>(prev_z.size()) != (config.uses_lr() ? stage_index - 1 : 0)) {
        throw ShapeError("stage " + std::to_string(stage_index) +
                         " got an unexpected number of previous predictions");
    }

    TensorPtr feat = run_layers(tape, hr, 0, static_cast<size_t>(hr.fusion_at), x);

    std::vector<TensorPtr> parts{feat};
    if (config.fuses_features()) {
        if (!shared) throw ShapeError("fusion requires shared LR features");
        check_spatial(shared, h / den, w / den, "shared features");
        parts.push_back(resample(tape, shared, den, 4));
    }
    if (config.fuses_prediction()) {
        if (!z_hat) throw ShapeError("fusion requires the LR prediction");
        check_spatial(z_hat, h / den, w / den, "LR prediction");
        parts.push_back(resample(tape, z_hat, den, 4));
    }
    for (const auto& z : prev_z) {
        check_spatial(z, h / den, w / den, "previous LR prediction");
        parts.push_back(resample(tape, z, den, 4));
    }
    for (const auto& y : prev_y) {
        check_spatial(y, h, w, "previous HR prediction");
        parts.push_back(block_sum(tape, y, 4));
    }
    TensorPtr fused = concat_channels(tape, parts);
    return run_layers(tape, hr, static_cast<size_t>(hr.fusion_at), hr.layers.size(), fused);
}

StageOutputs IcCnn::forward(Tape& tape, const TensorPtr& x, const std::vector<TensorPtr>& prev_z,
                            const std::vector<TensorPtr>& prev_y) const {
    StageOutputs out;
    if (config.uses_lr()) {
        auto [z, shared] = lr_forward(tape, x, prev_z, prev_y);
        out.z_hat = z;
        out.shared_features = shared;
    }
    if (config.uses_hr()) {
        out.y_hat = hr_forward(tape, x, out.z_hat, out.shared_features, prev_z, prev_y);
    } else {
        out.y_hat = resample(tape, out.z_hat, config.lr_denom, 1);
    }
    return out;
}

std::vector<TensorPtr> IcCnn::parameters() const {
    std::vector<TensorPtr> out = lr.parameters();
    auto h = hr.parameters();
    out.insert(out.end(), h.begin(), h.end());
    return out;
}

void IcCnn::set_frozen(bool f) {
    lr.frozen = f;
    hr.frozen = f;
}

bool IcCnn::frozen() const { return lr.frozen || hr.frozen; }

MultiStageModel::MultiStageModel(const ModelConfig& cfg, int n_stages, uint64_t seed)
    : config(cfg) {
    cfg.validate();
    if (n_stages < 1) throw ConfigError("stage count must be >= 1");
    std::mt19937_64 rng(seed);
    stages.reserve(static_cast<size_t>(n_stages));
    for (int k = 1; k <= n_stages; ++k) stages.emplace_back(cfg, k, rng);
}

std::vector<StageOutputs> MultiStageModel::forward(Tape& tape, const TensorPtr& x,
                                                   int train_stage) const {
    if (train_stage < 0 || train_stage > n_stages()) {
        throw ConfigError("train_stage out of range");
    }
    const int last = train_stage == 0 ? n_stages() : train_stage;
    std::vector<StageOutputs> outs;
    std::vector<TensorPtr> prev_z, prev_y;
    for (int k = 1; k <= last; ++k) {
        const bool recorded = (k == train_stage);
        if (recorded) {
            outs.push_back(stages[static_cast<size_t>(k - 1)].forward(tape, x, prev_z, prev_y));
        } else {
            Tape silent(false);
            StageOutputs so = stages[static_cast<size_t>(k - 1)].forward(silent, x, prev_z, prev_y);
            // earlier predictions are fixed inputs for the stages that follow
            if (so.z_hat) so.z_hat = so.z_hat->detached();
            if (so.y_hat) so.y_hat = so.y_hat->detached();
            if (so.shared_features) so.shared_features = so.shared_features->detached();
            outs.push_back(so);
        }
        if (outs.back().z_hat) prev_z.push_back(outs.back().z_hat);
        prev_y.push_back(outs.back().y_hat);
    }
    return outs;
}

std::vector<TensorPtr> MultiStageModel::parameters() const {
    std::vector<TensorPtr> out;
    for (const auto& s : stages) {
        auto p = s.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::vector<TensorPtr> MultiStageModel::trainable_parameters() const {
    std::vector<TensorPtr> out;
    for (const auto& s : stages) {
        for (const Branch* b : {&s.lr, &s.hr}) {
            if (b->empty() || b->frozen) continue;
            auto p = b->parameters();
            out.insert(out.end(), p.begin(), p.end());
        }
    }
    return out;
}

IcCnn build_ablation(Ablation variant, uint64_t seed) {
    ModelConfig cfg;
    cfg.variant = variant;
    std::mt19937_64 rng(seed);
    return IcCnn(cfg, 1, rng);
}

long long param_count(const Branch& branch) {
    long long n = 0;
    for (const auto& t : branch.parameters()) n += t->numel();
    return n;
}

long long param_count(const IcCnn& stage) { return param_count(stage.lr) + param_count(stage.hr); }

long long param_count(const MultiStageModel& model) {
    long long n = 0;
    for (const auto& s : model.stages) n += param_count(s);
    return n;
}

int apply_named_tensors(MultiStageModel& model, const std::vector<NamedTensor>& tensors) {
    std::unordered_map<std::string, TensorPtr> params;
    for (auto& [name, t] : named_parameters(model)) params[name] = t;
    int applied = 0;
    for (const auto& [name, t] : tensors) {
        auto it = params.find(name);
        if (it == params.end()) continue;
        if (it->second->shape != t->shape) {
            throw ShapeError("tensor " + name + " has shape " + t->shape_str() +
                             ", model expects " + it->second->shape_str());
        }
        it->second->data = t->data;
        ++applied;
    }
    return applied;
}

std::vector<NamedTensor> named_parameters(const MultiStageModel& model) {
    std::vector<NamedTensor> out;
    for (size_t s = 0; s < model.stages.size(); ++s) {
        const IcCnn& stage = model.stages[s];
        for (const Branch* b : {&stage.lr, &stage.hr}) {
            if (b->empty()) continue;
            const char* bname = b->kind == BranchKind::LR ? "lr" : "hr";
            int conv = 0;
            for (const auto& l : b->layers) {
                if (l.spec.kind != LayerKind::Conv) continue;
                ++conv;
                char buf[64];
                std::snprintf(buf, sizeof(buf), "stage%zu/%s/conv%02d", s + 1, bname, conv);
                out.push_back({std::string(buf) + "/weight", l.weight});
                out.push_back({std::string(buf) + "/bias", l.bias});
            }
        }
    }
    return out;
}

}  // namespace iccnn
