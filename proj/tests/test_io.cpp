#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "iccnn/io.hpp"
#include "oracles.hpp"

using namespace iccnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    fs::path p = fs::temp_directory_path() / ("iccnn_" + tag + "_" + std::to_string(rng()));
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

// Minimal test-side PNG encoder (8-bit RGB, filter 0 rows) so the decoder can
// be exercised without shipping binary fixtures.
std::string encode_png_rgb(const std::vector<uint8_t>& rgb, int w, int h) {
    auto be32 = [](uint32_t v) {
        std::string s(4, '\0');
        for (int i = 0; i < 4; ++i) s[static_cast<size_t>(i)] = static_cast<char>((v >> (24 - 8 * i)) & 0xff);
        return s;
    };
    auto chunk = [&](const std::string& type, const std::string& data) {
        std::string body = type + data;
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0, reinterpret_cast<const Bytef*>(body.data()), body.size()));
        return be32(static_cast<uint32_t>(data.size())) + body + be32(crc);
    };

    std::string ihdr = be32(static_cast<uint32_t>(w)) + be32(static_cast<uint32_t>(h));
    ihdr += static_cast<char>(8);  // bit depth
    ihdr += static_cast<char>(2);  // RGB
    ihdr += std::string(3, '\0');  // compression, filter, interlace

    std::string raw;
    for (int y = 0; y < h; ++y) {
        raw += '\0';  // filter: none
        raw.append(reinterpret_cast<const char*>(rgb.data()) + static_cast<size_t>(y) * w * 3,
                   static_cast<size_t>(w) * 3);
    }
    uLongf zlen = compressBound(raw.size());
    std::string z(zlen, '\0');
    REQUIRE(compress2(reinterpret_cast<Bytef*>(z.data()), &zlen,
                      reinterpret_cast<const Bytef*>(raw.data()), raw.size(), 9) == Z_OK);
    z.resize(zlen);

    std::string png("\x89PNG\r\n\x1a\n", 8);
    png += chunk("IHDR", ihdr) + chunk("IDAT", z) + chunk("IEND", "");
    return png;
}

}  // namespace

TEST_CASE("annotation CSV: comments, empty files, malformed lines") {
    auto dir = temp_dir("csv");
    spit(dir / "a.csv", "# header comment\n3.5,7.25\n\n 10 , 11 # trailing\n");
    auto ann = read_annotations_csv((dir / "a.csv").string(), 16, 16);
    REQUIRE(ann.points.size() == 2);
    CHECK(ann.points[0].x == 3.5);
    CHECK(ann.points[0].y == 7.25);
    CHECK(ann.points[1].x == 10.0);

    spit(dir / "empty.csv", "");
    CHECK(read_annotations_csv((dir / "empty.csv").string(), 8, 8).points.empty());

    spit(dir / "bad.csv", "1,2\nnot-a-point\n");
    try {
        read_annotations_csv((dir / "bad.csv").string(), 8, 8);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);  // line number
    }

    spit(dir / "oob.csv", "9.5,1\n");
    CHECK_THROWS_AS(read_annotations_csv((dir / "oob.csv").string(), 8, 8), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("ppm round trip") {
    auto dir = temp_dir("ppm");
    std::mt19937_64 rng(1);
    auto img = oracle::random_tensor({3, 9, 13}, rng, 0.0, 1.0);
    write_ppm((dir / "x.ppm").string(), img);
    auto back = read_image((dir / "x.ppm").string());
    REQUIRE(back->shape == img->shape);
    for (size_t i = 0; i < img->data.size(); ++i) {
        CHECK(std::fabs(back->data[i] - img->data[i]) <= 0.5 / 255.0 + 1e-12);
    }
    // writing the decoded image again is byte-stable
    write_ppm((dir / "y.ppm").string(), back);
    CHECK(slurp(dir / "x.ppm") == slurp(dir / "y.ppm"));
    fs::remove_all(dir);
}

TEST_CASE("png decoding") {
    auto dir = temp_dir("png");
    const int w = 5, h = 3;
    std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<uint8_t>((i * 17) % 256);
    spit(dir / "x.png", encode_png_rgb(rgb, w, h));

    auto img = read_image((dir / "x.png").string());
    REQUIRE(img->shape == std::vector<int>{3, h, w});
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            for (int c = 0; c < 3; ++c) {
                const double expect = rgb[(static_cast<size_t>(i) * w + j) * 3 +
                                          static_cast<size_t>(c)] / 255.0;
                CHECK(img->data[(static_cast<size_t>(c) * h + i) * w + j] ==
                      doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }

    // corrupt: cut into the IDAT chunk
    std::string bytes = slurp(dir / "x.png");
    REQUIRE(bytes.size() > 45);
    spit(dir / "cut.png", bytes.substr(0, bytes.size() - 30));
    CHECK_THROWS_AS(read_image((dir / "cut.png").string()), IoError);

    // flip one IDAT payload bit: the chunk crc must catch it
    std::string flipped = bytes;
    flipped[45] = static_cast<char>(flipped[45] ^ 0x01);
    spit(dir / "bitrot.png", flipped);
    CHECK_THROWS_AS(read_image((dir / "bitrot.png").string()), CorruptionError);

    spit(dir / "junk.bin", "not an image at all");
    CHECK_THROWS_AS(read_image((dir / "junk.bin").string()), FormatError);
    fs::remove_all(dir);
}

TEST_CASE("synth dataset: deterministic, loadable, counts match") {
    auto dir1 = temp_dir("synth1");
    auto dir2 = temp_dir("synth2");
    SynthSpec spec;
    spec.n_images = 3;
    spec.size = 32;
    spec.min_count = 2;
    spec.max_count = 6;
    spec.seed = 99;
    synth_dataset(spec, dir1.string());
    synth_dataset(spec, dir2.string());

    for (int i = 0; i < spec.n_images; ++i) {
        char stem[16];
        std::snprintf(stem, sizeof(stem), "img%04d", i);
        CHECK(slurp(dir1 / "images" / (std::string(stem) + ".ppm")) ==
              slurp(dir2 / "images" / (std::string(stem) + ".ppm")));
        CHECK(slurp(dir1 / "annotations" / (std::string(stem) + ".csv")) ==
              slurp(dir2 / "annotations" / (std::string(stem) + ".csv")));
    }

    auto entries = load_dataset(dir1.string());
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].stem == "img0000");
    for (const auto& e : entries) {
        CHECK(e.image->dim(1) == 32);
        CHECK(static_cast<int>(e.dots.points.size()) >= 2);
        CHECK(static_cast<int>(e.dots.points.size()) <= 6);
        // CSV line count equals the dot count
        const std::string csv = slurp(e.annotation_path);
        const long lines = std::count(csv.begin(), csv.end(), '\n');
        CHECK(lines == static_cast<long>(e.dots.points.size()));
    }
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("load_dataset reports orphan stems") {
    auto dir = temp_dir("orphan");
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "annotations");
    std::mt19937_64 rng(3);
    write_ppm((dir / "images" / "a.ppm").string(), oracle::random_tensor({3, 8, 8}, rng, 0, 1));
    spit(dir / "annotations" / "b.csv", "1,1\n");
    try {
        load_dataset(dir.string());
        FAIL("expected IoError");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("a") != std::string::npos);
        CHECK(msg.find("b") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip is bit exact") {
    auto dir = temp_dir("ckpt");
    ModelConfig mc;
    mc.width_divisor = 8;
    MultiStageModel model(mc, 2, 7);
    TrainConfig cfg;
    cfg.stages = 2;
    cfg.seed = 7;

    OptimizerState opt;
    auto params = model.parameters();
    std::mt19937_64 rng(11);
    opt.velocity[params[0].get()] = oracle::random_values(params[0]->data.size(), rng);

    const fs::path p1 = dir / "m.ckpt";
    save_checkpoint(p1.string(), checkpoint_from(model, cfg, &opt));
    Checkpoint back = load_checkpoint(p1.string());
    CHECK(back.version == 1);

    // every model tensor reproduced bit-exactly
    auto named = named_parameters(model);
    REQUIRE(back.tensors.size() == named.size() + 1);  // + one velocity tensor
    for (size_t i = 0; i < named.size(); ++i) {
        CHECK(back.tensors[i].name == named[i].name);
        CHECK(back.tensors[i].tensor->shape == named[i].tensor->shape);
        CHECK(back.tensors[i].tensor->data == named[i].tensor->data);
    }
    CHECK(back.tensors.back().name.rfind("opt/", 0) == 0);

    // save -> load -> save is a fixed point at the byte level
    const fs::path p2 = dir / "m2.ckpt";
    save_checkpoint(p2.string(), back);
    CHECK(slurp(p1) == slurp(p2));

    // config snapshot survives
    TrainConfig cfg_back = config_from_json(back.config_json);
    CHECK(cfg_back.stages == 2);
    CHECK(cfg_back.lambda_h == cfg.lambda_h);
    fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected cleanly") {
    auto dir = temp_dir("ckpt_bad");
    ModelConfig mc;
    mc.width_divisor = 8;
    MultiStageModel model(mc, 1, 5);
    TrainConfig cfg;
    const fs::path p = dir / "m.ckpt";
    save_checkpoint(p.string(), checkpoint_from(model, cfg));

    std::string bytes = slurp(p);
    spit(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_checkpoint((dir / "trunc.ckpt").string()), CorruptionError);

    std::string wrong = bytes;
    wrong[0] = 'X';
    spit(dir / "magic.ckpt", wrong);
    CHECK_THROWS_AS(load_checkpoint((dir / "magic.ckpt").string()), FormatError);

    std::string ver = bytes;
    ver[4] = 9;
    spit(dir / "ver.ckpt", ver);
    CHECK_THROWS_AS(load_checkpoint((dir / "ver.ckpt").string()), FormatError);

    spit(dir / "tail.ckpt", bytes + "junk");
    CHECK_THROWS_AS(load_checkpoint((dir / "tail.ckpt").string()), CorruptionError);
    fs::remove_all(dir);
}

TEST_CASE("two-stage checkpoint initializes the first two stages of a three-stage model") {
    ModelConfig mc;
    mc.width_divisor = 8;
    MultiStageModel two(mc, 2, 21);
    MultiStageModel three(mc, 3, 22);

    TrainConfig cfg;
    cfg.stages = 2;
    Checkpoint ckpt = checkpoint_from(two, cfg);
    const int applied = apply_checkpoint(three, ckpt);
    CHECK(applied == static_cast<int>(ckpt.tensors.size()));

    for (int s = 0; s < 2; ++s) {
        auto pa = two.stages[static_cast<size_t>(s)].parameters();
        auto pb = three.stages[static_cast<size_t>(s)].parameters();
        for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);
    }
}

TEST_CASE("heatmap export") {
    auto dir = temp_dir("heat");

    DensityMap zero = DensityMap::zeros(4, 6);
    export_heatmap(zero, (dir / "zero.pgm").string());
    const std::string z = slurp(dir / "zero.pgm");
    CHECK(z.substr(0, 9) == "P5\n6 4\n25");
    for (size_t i = z.size() - 24; i < z.size(); ++i) CHECK(z[i] == 0);
    CHECK(slurp(dir / "zero.txt").find("sum 0") != std::string::npos);

    DensityMap peak = DensityMap::zeros(3, 4);
    peak.at(1, 2) = 5.0;
    export_heatmap(peak, (dir / "peak.pgm").string());
    const std::string pg = slurp(dir / "peak.pgm");
    const std::string px = pg.substr(pg.size() - 12);
    CHECK(static_cast<unsigned char>(px[static_cast<size_t>(1 * 4 + 2)]) == 255);

    std::mt19937_64 rng(13);
    DensityMap m = DensityMap::zeros(8, 8);
    m.values = oracle::random_values(64, rng, -0.2, 1.0);
    export_heatmap(m, (dir / "m.pgm").string());
    const std::string sidecar = slurp(dir / "m.txt");
    const size_t at = sidecar.find("sum ");
    REQUIRE(at != std::string::npos);
    CHECK(std::stod(sidecar.substr(at + 4)) == doctest::Approx(m.sum()).epsilon(1e-9));
    fs::remove_all(dir);
}

TEST_CASE("config files parse, reject unknown keys, accept fractions") {
    auto dir = temp_dir("cfg");
    spit(dir / "c.cfg",
         "# training setup\n"
         "learning_rate = 1e-3\n"
         "momentum = 0.9\n"
         "lambda_l = 0.01\n"
         "lambda_h = 100\n"
         "crop_fraction = 1/2\n"
         "iterations = 42\n"
         "seed = 9\n"
         "stages = 2\n"
         "sigma = 5\n"
         "lr_resolution = 1/8\n");
    TrainConfig cfg = parse_config_file((dir / "c.cfg").string());
    CHECK(cfg.learning_rate == 1e-3);
    CHECK(cfg.crop_fraction == 0.5);
    CHECK(cfg.iterations == 42);
    CHECK(cfg.stages == 2);
    CHECK(cfg.lr_denom == 8);

    spit(dir / "bad.cfg", "learnign_rate = 1e-3\n");
    CHECK_THROWS_AS(parse_config_file((dir / "bad.cfg").string()), ConfigError);

    spit(dir / "junk.cfg", "just some words\n");
    CHECK_THROWS_AS(parse_config_file((dir / "junk.cfg").string()), ConfigError);

    // json snapshot round trip
    const std::string json = config_to_json(cfg);
    TrainConfig back = config_from_json(json);
    CHECK(back.learning_rate == cfg.learning_rate);
    CHECK(back.crop_fraction == cfg.crop_fraction);
    CHECK(back.lr_denom == cfg.lr_denom);
    CHECK(back.seed == cfg.seed);
    fs::remove_all(dir);
}

TEST_CASE("atomic writes never leave a partial target") {
    auto dir = temp_dir("atomic");
    const fs::path p = dir / "out.txt";
    write_file_atomic(p.string(), "first");
    write_file_atomic(p.string(), "second");
    CHECK(slurp(p) == "second");
    CHECK(!fs::exists(dir / "out.txt.tmp"));
    fs::remove_all(dir);
}

TEST_CASE("loss log format") {
    auto dir = temp_dir("log");
    std::vector<LossRow> rows = {{1, 3.5, 0.5, 3.0}, {2, 2.25, 0.25, 2.0}};
    write_loss_log((dir / "loss.log").string(), rows);
    const std::string text = slurp(dir / "loss.log");
    CHECK(text == "1\t3.5\t0.5\t3\n2\t2.25\t0.25\t2\n");
    fs::remove_all(dir);
}
