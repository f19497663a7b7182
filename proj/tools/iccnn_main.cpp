#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "iccnn/eval.hpp"
#include "iccnn/gradient_suite.hpp"
#include "iccnn/io.hpp"
#include "iccnn/model.hpp"
#include "iccnn/train.hpp"

namespace fs = std::filesystem;
using namespace iccnn;

namespace {

struct ConfigFlags {
    std::string config_file;
    std::string lr, momentum, lambda_l, lambda_h, crop_fraction, sigma, lr_resolution;
    std::string iterations, seed, stages, batch_size;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "key = value config file");
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--batch-size", batch_size, "per-step sample count (fixed at 1)");
        cmd->add_option("--momentum", momentum, "momentum in [0,1)");
        cmd->add_option("--lambda-l", lambda_l, "low-resolution loss weight");
        cmd->add_option("--lambda-h", lambda_h, "high-resolution loss weight");
        cmd->add_option("--crop-fraction", crop_fraction, "training crop fraction, e.g. 1/3");
        cmd->add_option("--sigma", sigma, "ground-truth Gaussian sigma");
        cmd->add_option("--lr-resolution", lr_resolution, "LR branch resolution: 1, 1/2, 1/4, 1/8");
        cmd->add_option("--iterations", iterations, "iterations per stage");
        cmd->add_option("--seed", seed, "rng seed");
        cmd->add_option("--stages", stages, "number of ic-CNN stages");
    }

    TrainConfig resolve() const {
        TrainConfig cfg = config_file.empty() ? TrainConfig{} : parse_config_file(config_file);
        auto maybe = [&cfg](const char* key, const std::string& v) {
            if (!v.empty()) apply_config_kv(cfg, key, v);
        };
        maybe("learning_rate", lr);
        maybe("batch_size", batch_size);
        maybe("momentum", momentum);
        maybe("lambda_l", lambda_l);
        maybe("lambda_h", lambda_h);
        maybe("crop_fraction", crop_fraction);
        maybe("sigma", sigma);
        maybe("lr_resolution", lr_resolution);
        maybe("iterations", iterations);
        maybe("seed", seed);
        maybe("stages", stages);
        cfg.validate();
        return cfg;
    }
};

std::vector<TrainSample> to_samples(const std::vector<DatasetEntry>& entries, double sigma) {
    std::vector<TrainSample> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(make_sample(e.image, e.dots, sigma));
    return out;
}

MultiStageModel model_from_checkpoint(const Checkpoint& ckpt, TrainConfig* cfg_out = nullptr) {
    TrainConfig cfg = config_from_json(ckpt.config_json);
    MultiStageModel model(cfg.model_config(), cfg.stages, cfg.seed);
    const int expected = static_cast<int>(named_parameters(model).size());
    const int applied = apply_checkpoint(model, ckpt);
    if (applied != expected) {
        throw FormatError("checkpoint supplied " + std::to_string(applied) + " of " +
                          std::to_string(expected) + " model tensors");
    }
    if (cfg_out) *cfg_out = cfg;
    return model;
}

int cmd_train(const std::string& data_dir, const ConfigFlags& flags, const std::string& out_dir,
              const std::string& init_path) {
    const TrainConfig cfg = flags.resolve();
    auto samples = to_samples(load_dataset(data_dir), cfg.sigma);
    fs::create_directories(out_dir);

    std::vector<NamedTensor> init;
    if (!init_path.empty()) init = load_checkpoint(init_path).tensors;

    auto stage_done = [&](const MultiStageModel& model, int stage,
                          const std::vector<LossRow>& log) {
        const std::string tag = "stage" + std::to_string(stage);
        save_checkpoint((fs::path(out_dir) / (tag + ".ckpt")).string(),
                        checkpoint_from(model, cfg));
        write_loss_log((fs::path(out_dir) / ("loss_" + tag + ".log")).string(), log);
        std::printf("%s done: %d iterations, final loss %.6g\n", tag.c_str(),
                    static_cast<int>(log.size()), log.empty() ? 0.0 : log.back().loss);
    };

    TrainResult result = train(samples, cfg, init.empty() ? nullptr : &init, stage_done);
    save_checkpoint((fs::path(out_dir) / "final.ckpt").string(),
                    checkpoint_from(result.model, cfg));
    std::printf("training MAE on the %zu input images: %.4f\n", samples.size(),
                training_mae(result.model, samples));
    return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt_path, int groups,
             const std::string& out_file) {
    MultiStageModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
    std::vector<EvalRecord> records;
    for (const auto& e : load_dataset(data_dir)) {
        EvalRecord r;
        r.id = e.stem;
        r.gt_count = static_cast<double>(e.dots.points.size());
        r.pred_count = predict_full(model, e.image).sum();
        records.push_back(std::move(r));
    }
    const std::string report = format_report(records, groups);
    std::fputs(report.c_str(), stdout);
    if (!out_file.empty()) write_file_atomic(out_file, report);
    return 0;
}

int cmd_predict(const std::string& image_path, const std::string& ckpt_path,
                const std::string& out_dir) {
    MultiStageModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
    TensorPtr image = read_image(image_path);
    fs::create_directories(out_dir);
    DensityMap hr = predict_full(model, image);
    DensityMap lr = predict_low(model, image);
    export_heatmap(hr, (fs::path(out_dir) / "hr.pgm").string());
    export_heatmap(lr, (fs::path(out_dir) / "lr.pgm").string());
    std::printf("LR count %.3f\nHR count %.3f\n", lr.sum(), hr.sum());
    return 0;
}

int cmd_gradcheck() {
    GradientSuiteResult result = run_gradient_suite();
    std::fputs(format_suite(result).c_str(), stdout);
    return result.all_pass ? 0 : 1;
}

int cmd_paramcount(const ConfigFlags& flags) {
    const TrainConfig cfg = flags.resolve();
    MultiStageModel model(cfg.model_config(), cfg.stages, cfg.seed);
    long long total = 0;
    for (size_t s = 0; s < model.stages.size(); ++s) {
        for (const Branch* b : {&model.stages[s].lr, &model.stages[s].hr}) {
            if (b->empty()) continue;
            const char* bname = b->kind == BranchKind::LR ? "lr" : "hr";
            for (const auto& l : b->layers) {
                if (l.spec.kind != LayerKind::Conv) continue;
                const long long n = l.weight->numel() + l.bias->numel();
                total += n;
                std::printf("stage%zu/%s  %-10s %s  %lld\n", s + 1, bname,
                            l.spec.name().c_str(), l.weight->shape_str().c_str(), n);
            }
        }
    }
    std::printf("total %lld\n", total);
    return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
    synth_dataset(spec, out_dir);
    std::printf("wrote %d images of %dx%d to %s\n", spec.n_images, spec.size, spec.size,
                out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-branch iterative crowd counting: training, evaluation and tooling"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train on a dataset directory");
    std::string data_dir, out_dir, init_path;
    ConfigFlags train_flags;
    train_cmd->add_option("--data", data_dir, "dataset root (images/ + annotations/)")
        ->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_option("--init", init_path, "checkpoint used to initialize matching stages");
    train_flags.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "report per-image counts, MAE and RMSE");
    std::string eval_data, eval_ckpt, eval_out;
    int eval_groups = 0;
    eval_cmd->add_option("--data", eval_data, "dataset root")->required();
    eval_cmd->add_option("--ckpt", eval_ckpt, "trained checkpoint")->required();
    eval_cmd->add_option("--groups", eval_groups, "append a count-group table with N groups");
    eval_cmd->add_option("--out", eval_out, "also write the report to this file");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "export LR/HR heatmaps for one image");
    std::string pred_image, pred_ckpt, pred_out;
    predict_cmd->add_option("--image", pred_image, "input image (PPM or PNG)")->required();
    predict_cmd->add_option("--ckpt", pred_ckpt, "trained checkpoint")->required();
    predict_cmd->add_option("--out", pred_out, "output directory")->required();

    // gradcheck
    app.add_subcommand("gradcheck", "finite-difference gradient suite; nonzero exit on failure");

    // paramcount
    auto* param_cmd = app.add_subcommand("paramcount", "per-layer parameter breakdown");
    ConfigFlags param_flags;
    param_flags.attach(param_cmd);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic blob dataset");
    SynthSpec spec;
    std::string synth_out;
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--n", spec.n_images, "number of images");
    synth_cmd->add_option("--size", spec.size, "square image size (multiple of 4, >= 32)");
    synth_cmd->add_option("--min-count", spec.min_count, "minimum people per image");
    synth_cmd->add_option("--max-count", spec.max_count, "maximum people per image");
    synth_cmd->add_option("--seed", spec.seed, "rng seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("train")) return cmd_train(data_dir, train_flags, out_dir, init_path);
        if (app.got_subcommand("eval")) return cmd_eval(eval_data, eval_ckpt, eval_groups, eval_out);
        if (app.got_subcommand("predict")) return cmd_predict(pred_image, pred_ckpt, pred_out);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
        if (app.got_subcommand("paramcount")) return cmd_paramcount(param_flags);
        if (app.got_subcommand("synth")) return cmd_synth(spec, synth_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
