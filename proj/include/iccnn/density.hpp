#pragma once

#include <vector>

#include "iccnn/tensor.hpp"

namespace iccnn {

/// Sub-pixel head locations for one image.
struct DotAnnotations {
    struct Point {
        double x = 0.0;
        double y = 0.0;
    };
    std::vector<Point> points;
    int image_w = 0;
    int image_h = 0;
};

/// 2-D density field whose element sum is a crowd count. `denom` is the
/// inverse resolution factor relative to the source image (1, 2, 4 or 8).
struct DensityMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // row-major
    int denom = 1;

    static DensityMap zeros(int h, int w, int denom = 1);
    double sum() const;
    double& at(int row, int col) { return values[static_cast<size_t>(row) * width + col]; }
    double at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
};

/// Throws ValidationError (naming the first offending index) if any point
/// falls outside [0, w) x [0, h).
void validate(const DotAnnotations& ann);

/// Binary-accumulated dot map: +1 at (round(y), round(x)) per point, rounding
/// half-up and clamped to the last row/column.
DensityMap rasterize(const DotAnnotations& ann);

/// Full-resolution density map. Each dot deposits a discrete Gaussian stamp of
/// radius ceil(4*sigma), truncated at the borders and renormalized so every
/// dot contributes exactly 1 to the total.
DensityMap gaussian_density(const DotAnnotations& ann, double sigma = 5.0);

/// Sums factor x factor blocks; total preserved exactly. factor in {2,4,8}.
DensityMap downsample_sum(const DensityMap& map, int factor);

/// Image padded (reflected) and maps padded (zeros) on the bottom/right to the
/// next multiple; keeps the original size so predictions can be cropped back.
struct PaddedSample {
    TensorPtr image;
    std::vector<DensityMap> maps;
    int orig_h = 0;
    int orig_w = 0;
};

PaddedSample pad_to_multiple(const TensorPtr& image, const std::vector<DensityMap>& maps,
                             int multiple = 4);

DensityMap crop_map(const DensityMap& map, int h, int w);
TensorPtr crop_tensor_hw(const TensorPtr& t, int h, int w);

/// (1,H,W) tensor view of a map's values, and back.
TensorPtr density_to_tensor(const DensityMap& map);
DensityMap tensor_to_density(const Tensor& t, int denom);

}  // namespace iccnn
