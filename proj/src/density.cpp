#include "iccnn/density.hpp"

#include <cmath>
#include <string>

namespace iccnn {

DensityMap DensityMap::zeros(int h, int w, int denom) {
    if (h <= 0 || w <= 0) throw ShapeError("density map dims must be positive");
    DensityMap m;
    m.height = h;
    m.width = w;
    m.denom = denom;
    m.values.assign(static_cast<size_t>(h) * w, 0.0);
    return m;
}

double DensityMap::sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

void validate(const DotAnnotations& ann) {
    if (ann.image_w <= 0 || ann.image_h <= 0) {
        throw ValidationError("annotation image dims must be positive");
    }
    for (size_t i = 0; i < ann.points.size(); ++i) {
        const auto& p = ann.points[i];
        if (!(p.x >= 0.0 && p.x < ann.image_w && p.y >= 0.0 && p.y < ann.image_h)) {
            throw ValidationError("point " + std::to_string(i) + " at (" + std::to_string(p.x) +
                                  "," + std::to_string(p.y) + ") outside " +
                                  std::to_string(ann.image_w) + "x" + std::to_string(ann.image_h));
        }
    }
}

namespace {
// round half-up, clamped into [0, n-1]
int round_clamped(double v, int n) {
    int r = static_cast<int>(std::floor(v + 0.5));
    if (r < 0) r = 0;
    if (r > n - 1) r = n - 1;
    return r;
}
}  // namespace

DensityMap rasterize(const DotAnnotations& ann) {
    validate(ann);
    DensityMap m = DensityMap::zeros(ann.image_h, ann.image_w);
    for (const auto& p : ann.points) {
        m.at(round_clamped(p.y, ann.image_h), round_clamped(p.x, ann.image_w)) += 1.0;
    }
    return m;
}

DensityMap gaussian_density(const DotAnnotations& ann, double sigma) {
    if (sigma <= 0.0) throw ConfigError("gaussian sigma must be positive");
    validate(ann);
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);

    DensityMap m = DensityMap::zeros(ann.image_h, ann.image_w);
    std::vector<double> stamp(static_cast<size_t>(2 * radius + 1) * (2 * radius + 1));
    for (const auto& p : ann.points) {
        const int cy = round_clamped(p.y, ann.image_h);
        const int cx = round_clamped(p.x, ann.image_w);
        const int y0 = std::max(0, cy - radius), y1 = std::min(ann.image_h - 1, cy + radius);
        const int x0 = std::max(0, cx - radius), x1 = std::min(ann.image_w - 1, cx + radius);
        double total = 0.0;
        size_t idx = 0;
        for (int y = y0; y <= y1; ++y) {
            const double dy = y - cy;
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - cx;
                const double v = std::exp(-(dx * dx + dy * dy) * inv2s2);
                stamp[idx++] = v;
                total += v;
            }
        }
        // per-dot renormalization keeps the count exact even when the stamp
        // is truncated by the borders
        const double inv_total = 1.0 / total;
        idx = 0;
        for (int y = y0; y <= y1; ++y) {
            double* row = m.values.data() + static_cast<size_t>(y) * m.width;
            for (int x = x0; x <= x1; ++x) {
                row[x] += stamp[idx++] * inv_total;
            }
        }
    }
    return m;
}

DensityMap downsample_sum(const DensityMap& map, int factor) {
    if (factor != 2 && factor != 4 && factor != 8) {
        throw ConfigError("downsample_sum factor must be 2, 4 or 8");
    }
    if (map.height % factor != 0 || map.width % factor != 0) {
        throw ShapeError("downsample_sum: " + std::to_string(map.height) + "x" +
                         std::to_string(map.width) + " not divisible by " +
                         std::to_string(factor));
    }
    DensityMap out = DensityMap::zeros(map.height / factor, map.width / factor,
                                       map.denom * factor);
    for (int i = 0; i < map.height; ++i) {
        for (int j = 0; j < map.width; ++j) {
            out.at(i / factor, j / factor) += map.at(i, j);
        }
    }
    return out;
}

namespace {
// mirror index without repeating the edge sample; degenerates to clamping on
// single-row/column inputs
int reflect_index(int i, int n) {
    if (n == 1) return 0;
    if (i < n) return i;
    int r = 2 * (n - 1) - i;
    return r < 0 ? 0 : r;
}
}  // namespace

PaddedSample pad_to_multiple(const TensorPtr& image, const std::vector<DensityMap>& maps,
                             int multiple) {
    if (multiple < 1) throw ConfigError("pad multiple must be >= 1");
    if (image->rank() != 3) throw ShapeError("pad_to_multiple expects a (C,H,W) image");
    const int c = image->dim(0), h = image->dim(1), w = image->dim(2);
    const int ph = (h + multiple - 1) / multiple * multiple;
    const int pw = (w + multiple - 1) / multiple * multiple;

    PaddedSample out;
    out.orig_h = h;
    out.orig_w = w;
    if (ph == h && pw == w) {
        out.image = Tensor::from_data(image->shape, image->data);
    } else {
        out.image = Tensor::zeros({c, ph, pw});
        for (int ch = 0; ch < c; ++ch) {
            for (int i = 0; i < ph; ++i) {
                const double* src = image->data.data() +
                                    (static_cast<size_t>(ch) * h + reflect_index(i, h)) * w;
                double* dst = out.image->data.data() + (static_cast<size_t>(ch) * ph + i) * pw;
                for (int j = 0; j < pw; ++j) dst[j] = src[reflect_index(j, w)];
            }
        }
    }
    for (const auto& m : maps) {
        const int mph = (m.height + multiple - 1) / multiple * multiple;
        const int mpw = (m.width + multiple - 1) / multiple * multiple;
        DensityMap pm = DensityMap::zeros(mph, mpw, m.denom);
        for (int i = 0; i < m.height; ++i) {
            for (int j = 0; j < m.width; ++j) pm.at(i, j) = m.at(i, j);
        }
        out.maps.push_back(std::move(pm));
    }
    return out;
}

DensityMap crop_map(const DensityMap& map, int h, int w) {
    if (h > map.height || w > map.width || h <= 0 || w <= 0) {
        throw ShapeError("crop_map target exceeds source");
    }
    DensityMap out = DensityMap::zeros(h, w, map.denom);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) out.at(i, j) = map.at(i, j);
    }
    return out;
}

TensorPtr crop_tensor_hw(const TensorPtr& t, int h, int w) {
    if (t->rank() != 3) throw ShapeError("crop_tensor_hw expects (C,H,W)");
    const int c = t->dim(0), th = t->dim(1), tw = t->dim(2);
    if (h > th || w > tw || h <= 0 || w <= 0) throw ShapeError("crop target exceeds source");
    auto out = Tensor::zeros({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h; ++i) {
            const double* src = t->data.data() + (static_cast<size_t>(ch) * th + i) * tw;
            double* dst = out->data.data() + (static_cast<size_t>(ch) * h + i) * w;
            std::copy(src, src + w, dst);
        }
    }
    return out;
}

TensorPtr density_to_tensor(const DensityMap& map) {
    return Tensor::from_data({1, map.height, map.width}, map.values);
}

DensityMap tensor_to_density(const Tensor& t, int denom) {
    if (t.rank() != 3 || t.dim(0) != 1) {
        throw ShapeError("tensor_to_density expects (1,H,W), got " + t.shape_str());
    }
    DensityMap m;
    m.height = t.dim(1);
    m.width = t.dim(2);
    m.denom = denom;
    m.values = t.data;
    return m;
}

}  // namespace iccnn
