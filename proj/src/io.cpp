#include "iccnn/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace iccnn {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError("read failed for " + path);
    return ss.str();
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// little-endian primitives
// ---------------------------------------------------------------------------

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw CorruptionError(path + " is truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

// ---------------------------------------------------------------------------
// PPM / PNG decoding
// ---------------------------------------------------------------------------

// Skips PNM whitespace and `#` comments, then parses one unsigned integer.
int pnm_int(const std::string& s, size_t& pos, const std::string& path) {
    while (pos < s.size()) {
        if (std::isspace(static_cast<unsigned char>(s[pos]))) {
            ++pos;
        } else if (s[pos] == '#') {
            while (pos < s.size() && s[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) {
        throw FormatError(path + ": malformed PNM header");
    }
    int v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
        v = v * 10 + (s[pos++] - '0');
    }
    return v;
}

TensorPtr rgb_bytes_to_tensor(const unsigned char* px, int h, int w, int channels) {
    auto img = Tensor::zeros({3, h, w});
    const size_t plane = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < plane; ++i) {
        const unsigned char* p = px + i * channels;
        // gray and gray+alpha replicate; alpha is dropped
        const double r = p[0] / 255.0;
        const double g = (channels >= 3 ? p[1] : p[0]) / 255.0;
        const double b = (channels >= 3 ? p[2] : p[0]) / 255.0;
        img->data[i] = r;
        img->data[plane + i] = g;
        img->data[2 * plane + i] = b;
    }
    return img;
}

TensorPtr decode_ppm(const std::string& bytes, const std::string& path) {
    size_t pos = 2;  // past "P6"
    const int w = pnm_int(bytes, pos, path);
    const int h = pnm_int(bytes, pos, path);
    const int maxval = pnm_int(bytes, pos, path);
    if (maxval != 255) throw FormatError(path + ": only 8-bit PPM is supported");
    ++pos;  // single whitespace after maxval
    const size_t need = static_cast<size_t>(w) * h * 3;
    if (bytes.size() < pos + need) throw CorruptionError(path + " is truncated");
    return rgb_bytes_to_tensor(reinterpret_cast<const unsigned char*>(bytes.data() + pos), h, w,
                               3);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

TensorPtr decode_png(const std::string& bytes, const std::string& path) {
    static const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0) {
        throw FormatError(path + ": not a PNG file");
    }
    size_t pos = 8;
    int w = 0, h = 0, depth = 0, color = 0;
    std::string idat;
    bool saw_ihdr = false, saw_iend = false;
    auto be32 = [&](size_t p) {
        return (static_cast<uint32_t>(static_cast<unsigned char>(bytes[p])) << 24) |
               (static_cast<uint32_t>(static_cast<unsigned char>(bytes[p + 1])) << 16) |
               (static_cast<uint32_t>(static_cast<unsigned char>(bytes[p + 2])) << 8) |
               static_cast<uint32_t>(static_cast<unsigned char>(bytes[p + 3]));
    };
    while (pos + 8 <= bytes.size() && !saw_iend) {
        const uint32_t len = be32(pos);
        const std::string type = bytes.substr(pos + 4, 4);
        if (pos + 12 + len > bytes.size()) throw CorruptionError(path + " is truncated");
        const size_t data = pos + 8;
        const uint32_t want_crc = be32(data + len);
        const uint32_t got_crc = static_cast<uint32_t>(
            crc32(0, reinterpret_cast<const Bytef*>(bytes.data() + pos + 4), len + 4));
        if (want_crc != got_crc) throw CorruptionError(path + ": chunk crc mismatch");
        if (type == "IHDR") {
            if (len != 13) throw FormatError(path + ": bad IHDR");
            w = static_cast<int>(be32(data));
            h = static_cast<int>(be32(data + 4));
            depth = static_cast<unsigned char>(bytes[data + 8]);
            color = static_cast<unsigned char>(bytes[data + 9]);
            const int interlace = static_cast<unsigned char>(bytes[data + 12]);
            if (depth != 8 || interlace != 0 || color == 3) {
                throw FormatError(path + ": only 8-bit non-interlaced gray/RGB(A) PNG is supported");
            }
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.append(bytes, data, len);
        } else if (type == "IEND") {
            saw_iend = true;
        }
        pos = data + len + 4;  // skip crc
    }
    if (!saw_ihdr || w <= 0 || h <= 0) throw FormatError(path + ": missing IHDR");
    if (idat.empty()) throw CorruptionError(path + ": no image data");

    const int channels = color == 0 ? 1 : color == 2 ? 3 : color == 4 ? 2 : 4;
    const size_t stride = static_cast<size_t>(w) * channels;
    std::vector<unsigned char> raw((stride + 1) * static_cast<size_t>(h));
    uLongf rawlen = raw.size();
    const int zret = uncompress(raw.data(), &rawlen,
                                reinterpret_cast<const Bytef*>(idat.data()), idat.size());
    if (zret != Z_OK || rawlen != raw.size()) {
        throw CorruptionError(path + ": image data does not inflate");
    }

    std::vector<unsigned char> px(stride * static_cast<size_t>(h));
    const int bpp = channels;
    for (int y = 0; y < h; ++y) {
        const unsigned char filter = raw[static_cast<size_t>(y) * (stride + 1)];
        const unsigned char* src = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
        unsigned char* dst = px.data() + static_cast<size_t>(y) * stride;
        const unsigned char* up = y > 0 ? dst - stride : nullptr;
        for (size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
            const int b = up ? up[x] : 0;
            const int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw CorruptionError(path + ": bad PNG filter type");
            }
            dst[x] = static_cast<unsigned char>(v & 0xff);
        }
    }
    return rgb_bytes_to_tensor(px.data(), h, w, channels);
}

}  // namespace

TensorPtr read_image(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path);
    if (bytes.size() >= 8 && static_cast<unsigned char>(bytes[0]) == 137) {
        return decode_png(bytes, path);
    }
    throw FormatError(path + ": unsupported image format (need PPM P6 or PNG)");
}

void write_ppm(const std::string& path, const TensorPtr& image) {
    if (image->rank() != 3 || image->dim(0) != 3) {
        throw ShapeError("write_ppm expects (3,H,W), got " + image->shape_str());
    }
    const int h = image->dim(1), w = image->dim(2);
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const size_t plane = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(image->data[c * plane + i], 0.0, 1.0);
            out.push_back(static_cast<char>(std::lround(v * 255.0)));
        }
    }
    write_file_atomic(path, out);
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w) {
    if (static_cast<size_t>(h) * w != pixels.size()) throw ShapeError("write_pgm size mismatch");
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    write_file_atomic(path, out);
}

DotAnnotations read_annotations_csv(const std::string& path, int image_w, int image_h) {
    const std::string text = read_file(path);
    DotAnnotations ann;
    ann.image_w = image_w;
    ann.image_h = image_h;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        size_t e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);

        double x = 0, y = 0;
        char trailing = 0;
        if (std::sscanf(line.c_str(), "%lf , %lf %c", &x, &y, &trailing) != 2) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected `x,y`, got `" +
                              line + "`");
        }
        if (!(x >= 0.0 && x < image_w && y >= 0.0 && y < image_h)) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": point (" +
                                  std::to_string(x) + "," + std::to_string(y) + ") outside " +
                                  std::to_string(image_w) + "x" + std::to_string(image_h));
        }
        ann.points.push_back({x, y});
    }
    return ann;
}

void write_annotations_csv(const std::string& path, const DotAnnotations& ann) {
    std::string out;
    for (const auto& p : ann.points) {
        out += fmt_double(p.x);
        out += ",";
        out += fmt_double(p.y);
        out += "\n";
    }
    write_file_atomic(path, out);
}

std::vector<DatasetEntry> load_dataset(const std::string& root) {
    const fs::path images = fs::path(root) / "images";
    const fs::path annotations = fs::path(root) / "annotations";
    if (!fs::is_directory(images) || !fs::is_directory(annotations)) {
        throw IoError(root + " must contain images/ and annotations/");
    }

    std::map<std::string, std::string> image_by_stem, ann_by_stem;
    for (const auto& e : fs::directory_iterator(images)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".ppm" || ext == ".png") {
            image_by_stem[e.path().stem().string()] = e.path().string();
        }
    }
    for (const auto& e : fs::directory_iterator(annotations)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") {
            ann_by_stem[e.path().stem().string()] = e.path().string();
        }
    }

    std::string orphans;
    for (const auto& [stem, _] : image_by_stem) {
        if (!ann_by_stem.count(stem)) orphans += " " + stem + "(no annotation)";
    }
    for (const auto& [stem, _] : ann_by_stem) {
        if (!image_by_stem.count(stem)) orphans += " " + stem + "(no image)";
    }
    if (!orphans.empty()) throw IoError("unpaired dataset stems:" + orphans);

    std::vector<DatasetEntry> out;
    for (const auto& [stem, img_path] : image_by_stem) {  // std::map iterates sorted
        DatasetEntry entry;
        entry.stem = stem;
        entry.image_path = img_path;
        entry.annotation_path = ann_by_stem[stem];
        entry.image = read_image(img_path);
        entry.dots =
            read_annotations_csv(entry.annotation_path, entry.image->dim(2), entry.image->dim(1));
        out.push_back(std::move(entry));
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out = "ICNN";
    put_u32(out, ckpt.version);
    put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<uint32_t>(t->rank()));
        for (int d : t->shape) put_u32(out, static_cast<uint32_t>(d));
        for (double v : t->data) put_f64(out, v);
    }
    put_u32(out, static_cast<uint32_t>(ckpt.config_json.size()));
    out += ckpt.config_json;
    write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string bytes = read_file(path);
    ByteReader r{bytes, 0, path};
    if (r.bytes(4) != "ICNN") throw FormatError(path + ": bad checkpoint magic");
    Checkpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != 1) {
        throw FormatError(path + ": unsupported checkpoint version " +
                          std::to_string(ckpt.version));
    }
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        const uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) throw CorruptionError(path + ": implausible tensor rank");
        std::vector<int> shape;
        long long numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint32_t ext = r.u32();
            if (ext == 0 || ext > (1u << 24)) {
                throw CorruptionError(path + ": implausible tensor extent");
            }
            shape.push_back(static_cast<int>(ext));
            numel *= ext;
        }
        if (numel > (1LL << 31)) throw CorruptionError(path + ": implausible tensor size");
        std::vector<double> data(static_cast<size_t>(numel));
        for (auto& v : data) v = r.f64();
        ckpt.tensors.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(data))});
    }
    const uint32_t cfg_len = r.u32();
    ckpt.config_json = r.bytes(cfg_len);
    if (r.pos != bytes.size()) {
        throw CorruptionError(path + " has trailing bytes after the config block");
    }
    return ckpt;
}

Checkpoint checkpoint_from(const MultiStageModel& model, const TrainConfig& config,
                           const OptimizerState* optimizer) {
    Checkpoint ckpt;
    ckpt.tensors = named_parameters(model);
    if (optimizer) {
        std::vector<NamedTensor> vel;
        for (const auto& [name, t] : ckpt.tensors) {
            auto it = optimizer->velocity.find(t.get());
            if (it == optimizer->velocity.end()) continue;
            vel.push_back({"opt/" + name, Tensor::from_data(t->shape, it->second)});
        }
        ckpt.tensors.insert(ckpt.tensors.end(), vel.begin(), vel.end());
    }
    ckpt.config_json = config_to_json(config);
    return ckpt;
}

int apply_checkpoint(MultiStageModel& model, const Checkpoint& ckpt) {
    return apply_named_tensors(model, ckpt.tensors);
}

// ---------------------------------------------------------------------------
// heatmaps
// ---------------------------------------------------------------------------

void export_heatmap(const DensityMap& map, const std::string& path) {
    double lo = map.values.empty() ? 0.0 : map.values[0];
    double hi = lo;
    for (double v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<uint8_t> px(map.values.size(), 0);
    if (hi > lo) {
        const double scale = 255.0 / (hi - lo);
        for (size_t i = 0; i < map.values.size(); ++i) {
            px[i] = static_cast<uint8_t>(std::lround((map.values[i] - lo) * scale));
        }
    }
    write_pgm(path, px, map.height, map.width);

    fs::path sidecar(path);
    sidecar.replace_extension(".txt");
    std::string meta = "min " + fmt_double(lo) + "\nmax " + fmt_double(hi) + "\nsum " +
                       fmt_double(map.sum()) + "\n";
    write_file_atomic(sidecar.string(), meta);
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

void synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
    if (spec.size < 32 || spec.size % 4 != 0) {
        throw ConfigError("synth size must be a multiple of 4 and >= 32");
    }
    if (spec.n_images < 1 || spec.min_count < 0 || spec.max_count < spec.min_count) {
        throw ConfigError("bad synth image/count range");
    }
    if (!(spec.blob_gain > 0.0)) throw ConfigError("blob gain must be positive");
    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "annotations");

    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> count_dist(spec.min_count, spec.max_count);
    std::uniform_real_distribution<double> coord(0.0, static_cast<double>(spec.size));

    // soft dim blobs with the same footprint a sigma-5 density stamp has, so
    // the image-to-density mapping stays learnable at desk scale; low
    // amplitude keeps activations (and with them the loss curvature) small
    // enough for stable SGD steps
    const double blob_sigma = 5.0;
    const int blob_radius = 20;
    const double amp[3] = {0.12 * spec.blob_gain, 0.10 * spec.blob_gain,
                           0.08 * spec.blob_gain};

    for (int n = 0; n < spec.n_images; ++n) {
        const int count = count_dist(rng);
        DotAnnotations ann;
        ann.image_w = spec.size;
        ann.image_h = spec.size;
        for (int i = 0; i < count; ++i) {
            double x = coord(rng), y = coord(rng);
            if (x >= spec.size) x = std::nextafter(static_cast<double>(spec.size), 0.0);
            if (y >= spec.size) y = std::nextafter(static_cast<double>(spec.size), 0.0);
            ann.points.push_back({x, y});
        }

        auto img = Tensor::full({3, spec.size, spec.size}, 0.02);
        const size_t plane = static_cast<size_t>(spec.size) * spec.size;
        for (const auto& p : ann.points) {
            const int cy = static_cast<int>(std::lround(p.y));
            const int cx = static_cast<int>(std::lround(p.x));
            for (int dy = -blob_radius; dy <= blob_radius; ++dy) {
                const int yy = cy + dy;
                if (yy < 0 || yy >= spec.size) continue;
                for (int dx = -blob_radius; dx <= blob_radius; ++dx) {
                    const int xx = cx + dx;
                    if (xx < 0 || xx >= spec.size) continue;
                    const double fy = p.y - yy, fx = p.x - xx;
                    const double g =
                        std::exp(-(fx * fx + fy * fy) / (2.0 * blob_sigma * blob_sigma));
                    const size_t at = static_cast<size_t>(yy) * spec.size + xx;
                    for (int c = 0; c < 3; ++c) {
                        img->data[c * plane + at] =
                            std::min(1.0, img->data[c * plane + at] + amp[c] * g);
                    }
                }
            }
        }

        char stem[32];
        std::snprintf(stem, sizeof(stem), "img%04d", n);
        write_ppm((fs::path(out_dir) / "images" / (std::string(stem) + ".ppm")).string(), img);
        write_annotations_csv(
            (fs::path(out_dir) / "annotations" / (std::string(stem) + ".csv")).string(), ann);
    }
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

namespace {

double parse_fraction(const std::string& v, const std::string& key) {
    try {
        const size_t slash = v.find('/');
        if (slash != std::string::npos) {
            const double num = std::stod(v.substr(0, slash));
            const double den = std::stod(v.substr(slash + 1));
            if (den == 0.0) throw std::invalid_argument("zero denominator");
            return num / den;
        }
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError("cannot parse " + key + " value `" + v + "`");
    }
}

long long parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing junk");
        return n;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse " + key + " value `" + v + "`");
    }
}

int denom_from_resolution(double r) {
    for (int den : {1, 2, 4, 8}) {
        if (std::fabs(r - 1.0 / den) < 1e-9) return den;
    }
    throw ConfigError("lr_resolution must be one of 1, 1/2, 1/4, 1/8");
}

}  // namespace

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "learning_rate") {
        cfg.learning_rate = parse_fraction(value, key);
    } else if (key == "momentum") {
        cfg.momentum = parse_fraction(value, key);
    } else if (key == "batch_size") {
        cfg.batch_size = static_cast<int>(parse_int(value, key));
    } else if (key == "lambda_l") {
        cfg.lambda_l = parse_fraction(value, key);
    } else if (key == "lambda_h") {
        cfg.lambda_h = parse_fraction(value, key);
    } else if (key == "crop_fraction") {
        cfg.crop_fraction = parse_fraction(value, key);
    } else if (key == "iterations") {
        cfg.iterations = static_cast<int>(parse_int(value, key));
    } else if (key == "seed") {
        cfg.seed = static_cast<uint64_t>(parse_int(value, key));
    } else if (key == "stages") {
        cfg.stages = static_cast<int>(parse_int(value, key));
    } else if (key == "sigma") {
        cfg.sigma = parse_fraction(value, key);
    } else if (key == "lr_resolution") {
        cfg.lr_denom = denom_from_resolution(parse_fraction(value, key));
    } else {
        throw ConfigError("unknown config key `" + key + "`");
    }
}

TrainConfig parse_config_file(const std::string& path) {
    const std::string text = read_file(path);
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected `key = value`");
        }
        auto trim = [](std::string s) {
            const size_t x = s.find_first_not_of(" \t\r");
            if (x == std::string::npos) return std::string();
            const size_t y = s.find_last_not_of(" \t\r");
            return s.substr(x, y - x + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected `key = value`");
        }
        apply_config_kv(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

std::string config_to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["learning_rate"] = cfg.learning_rate;
    j["momentum"] = cfg.momentum;
    j["batch_size"] = cfg.batch_size;
    j["lambda_l"] = cfg.lambda_l;
    j["lambda_h"] = cfg.lambda_h;
    j["crop_fraction"] = cfg.crop_fraction;
    j["iterations"] = cfg.iterations;
    j["seed"] = cfg.seed;
    j["stages"] = cfg.stages;
    j["sigma"] = cfg.sigma;
    j["lr_resolution"] = "1/" + std::to_string(cfg.lr_denom);
    return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad config snapshot: ") + e.what());
    }
    TrainConfig cfg;
    try {
        cfg.learning_rate = j.at("learning_rate").get<double>();
        cfg.momentum = j.at("momentum").get<double>();
        cfg.batch_size = j.at("batch_size").get<int>();
        cfg.lambda_l = j.at("lambda_l").get<double>();
        cfg.lambda_h = j.at("lambda_h").get<double>();
        cfg.crop_fraction = j.at("crop_fraction").get<double>();
        cfg.iterations = j.at("iterations").get<int>();
        cfg.seed = j.at("seed").get<uint64_t>();
        cfg.stages = j.at("stages").get<int>();
        cfg.sigma = j.at("sigma").get<double>();
        const std::string res = j.at("lr_resolution").get<std::string>();
        cfg.lr_denom = denom_from_resolution(parse_fraction(res, "lr_resolution"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad config snapshot: ") + e.what());
    }
    return cfg;
}

void write_loss_log(const std::string& path, const std::vector<LossRow>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += std::to_string(r.iter);
        out += "\t";
        out += fmt_double(r.loss);
        out += "\t";
        out += fmt_double(r.loss_l);
        out += "\t";
        out += fmt_double(r.loss_h);
        out += "\n";
    }
    write_file_atomic(path, out);
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out.good()) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace iccnn
