#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iccnn/density.hpp"
#include "iccnn/model.hpp"
#include "iccnn/train.hpp"

namespace iccnn {

struct DatasetEntry {
    std::string stem;
    std::string image_path;
    std::string annotation_path;
    TensorPtr image;  // (3,H,W), [0,1]
    DotAnnotations dots;
};

/// Loads `root/images/*.{ppm,png}` with matching `root/annotations/*.csv`,
/// sorted by stem. A stem present on one side only is a load error naming it.
std::vector<DatasetEntry> load_dataset(const std::string& root);

// --- images -----------------------------------------------------------------

/// PPM (P6) or PNG, chosen by file magic; returns (3,H,W) scaled to [0,1].
TensorPtr read_image(const std::string& path);
void write_ppm(const std::string& path, const TensorPtr& image);
void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w);

// --- annotations ------------------------------------------------------------

/// One `x,y` pair per line; `#` starts a comment; an empty file is an image
/// with zero people. Coordinates are validated against the given dims.
DotAnnotations read_annotations_csv(const std::string& path, int image_w, int image_h);
void write_annotations_csv(const std::string& path, const DotAnnotations& ann);

// --- checkpoints ------------------------------------------------------------

/// Binary container: magic "ICNN", u32 version, u32 tensor count, then per
/// tensor u32 name length + name, u32 rank, u32 dims[], raw IEEE-754 doubles;
/// finally a u32-length-prefixed JSON config snapshot. Little-endian
/// throughout.
struct Checkpoint {
    uint32_t version = 1;
    std::vector<NamedTensor> tensors;
    std::string config_json;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from(const MultiStageModel& model, const TrainConfig& config,
                           const OptimizerState* optimizer = nullptr);

/// Copies every checkpoint tensor whose name and shape match a model
/// parameter; extra names on either side are allowed (transfer loading).
/// Returns the number of tensors applied. A name that matches with a
/// different shape is a format error.
int apply_checkpoint(MultiStageModel& model, const Checkpoint& ckpt);

// --- heatmaps ---------------------------------------------------------------

/// 8-bit PGM, min-max normalized over the map (an all-equal map renders as
/// zeros), plus a `<path minus extension>.txt` sidecar holding raw min, max
/// and sum.
void export_heatmap(const DensityMap& map, const std::string& path);

// --- synthetic data ---------------------------------------------------------

struct SynthSpec {
    int n_images = 4;
    int size = 48;  // square, multiple of 4, >= 32
    int min_count = 5;
    int max_count = 20;
    uint64_t seed = 0;
    double blob_gain = 1.0;  // scales blob brightness; dense scenes render dimmer dots
};

/// Renders bright blobs on a dark background at uniformly sampled positions
/// and writes the matching CSV annotations. Deterministic given the seed.
void synth_dataset(const SynthSpec& spec, const std::string& out_dir);

// --- config -----------------------------------------------------------------

/// Flat `key = value` file; `#` comments; unknown keys are rejected.
TrainConfig parse_config_file(const std::string& path);
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

// --- misc -------------------------------------------------------------------

void write_loss_log(const std::string& path, const std::vector<LossRow>& rows);

/// All writers funnel through this: write to a temp file, then rename, so an
/// output path never holds a partial file.
void write_file_atomic(const std::string& path, const std::string& bytes);

}  // namespace iccnn
