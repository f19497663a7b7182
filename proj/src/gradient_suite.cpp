#include "iccnn/gradient_suite.hpp"

#include <random>
#include <sstream>

#include "iccnn/grad_check.hpp"
#include "iccnn/model.hpp"
#include "iccnn/ops.hpp"
#include "iccnn/train.hpp"

namespace iccnn {

namespace {

constexpr double kEps = 1e-6;
constexpr double kLayerTol = 1e-5;
constexpr double kEndToEndTol = 1e-4;

TensorPtr rand_tensor(std::vector<int> shape, std::mt19937_64& rng, bool is_param) {
    int n = 1;
    for (int d : shape) n *= d;
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = dist(rng);
    auto t = Tensor::from_data(std::move(shape), std::move(v));
    if (is_param) {
        t->requires_grad = true;
        t->needs_grad = true;
    }
    return t;
}

void run_check(GradientSuiteResult& out, const std::string& name,
               const std::function<TensorPtr(Tape&)>& build,
               const std::vector<TensorPtr>& params, double tol, int max_per_tensor = 0) {
    GradCheckResult r = grad_check(build, params, kEps, max_per_tensor);
    SuiteCheck c{name, r.max_rel_err, tol, r.checked_elements, r.max_rel_err < tol};
    out.all_pass = out.all_pass && c.pass;
    out.checks.push_back(std::move(c));
}

}  // namespace

GradientSuiteResult run_gradient_suite() {
    GradientSuiteResult out;
    std::mt19937_64 rng(20240521);

    {
        auto x = rand_tensor({2, 8, 8}, rng, true);
        auto target = rand_tensor({3, 8, 8}, rng, false);
        for (int k : {1, 3, 5, 7}) {
            auto w = rand_tensor({3, 2, k, k}, rng, true);
            auto b = rand_tensor({3}, rng, true);
            auto build = [&, k](Tape& t) {
                return sum_squared_error(t, conv2d(t, x, w, b), target);
            };
            run_check(out, "conv2d k=" + std::to_string(k), build, {x, w, b}, kLayerTol);
        }
    }
    {
        auto x = rand_tensor({2, 8, 8}, rng, true);
        auto target = rand_tensor({2, 4, 4}, rng, false);
        auto build = [&](Tape& t) { return sum_squared_error(t, maxpool2(t, x), target); };
        run_check(out, "maxpool2", build, {x}, kLayerTol);
    }
    {
        auto x = rand_tensor({2, 8, 8}, rng, true);
        auto target = rand_tensor({2, 8, 8}, rng, false);
        auto build = [&](Tape& t) { return sum_squared_error(t, relu(t, x), target); };
        run_check(out, "relu", build, {x}, kLayerTol);
    }
    {
        auto x = rand_tensor({2, 6, 6}, rng, true);
        auto target = rand_tensor({2, 12, 12}, rng, false);
        auto build = [&](Tape& t) {
            return sum_squared_error(t, upsample2_bilinear(t, x), target);
        };
        run_check(out, "upsample2_bilinear", build, {x}, kLayerTol);
    }
    {
        auto a = rand_tensor({1, 6, 6}, rng, true);
        auto b = rand_tensor({2, 6, 6}, rng, true);
        auto target = rand_tensor({3, 6, 6}, rng, false);
        auto build = [&](Tape& t) {
            return sum_squared_error(t, concat_channels(t, {a, b}), target);
        };
        run_check(out, "concat_channels", build, {a, b}, kLayerTol);
    }
    {
        auto x = rand_tensor({2, 8, 8}, rng, true);
        auto target = rand_tensor({2, 2, 2}, rng, false);
        auto build = [&](Tape& t) { return sum_squared_error(t, block_sum(t, x, 4), target); };
        run_check(out, "block_sum", build, {x}, kLayerTol);
    }
    {
        auto p = rand_tensor({3, 5}, rng, true);
        auto q = rand_tensor({3, 5}, rng, true);
        auto target = rand_tensor({3, 5}, rng, false);
        auto build = [&](Tape& t) {
            return sum_squared_error(t, add(t, scale(t, p, -1.7), q), target);
        };
        run_check(out, "sum_squared_error/add/scale", build, {p, q}, kLayerTol);
    }

    // End-to-end: full two-branch network at 1/8 channel width on a 3x16x16
    // input. Targets sit close to the initial predictions, which keeps the
    // loss small and the difference quotients well conditioned.
    {
        ModelConfig cfg;
        cfg.width_divisor = 8;
        MultiStageModel model(cfg, 1, 99);
        auto x = rand_tensor({3, 16, 16}, rng, false);

        Tape probe(false);
        StageOutputs init = model.stages[0].forward(probe, x, {}, {});
        auto nudge = [&rng](const TensorPtr& t) {
            std::uniform_real_distribution<double> d(-0.05, 0.05);
            auto out = Tensor::from_data(t->shape, t->data);
            for (auto& v : out->data) v += d(rng);
            return out;
        };
        auto z_target = nudge(init.z_hat);
        auto y_target = nudge(init.y_hat);

        auto build = [&](Tape& t) {
            StageOutputs so = model.stages[0].forward(t, x, {}, {});
            return iccnn_loss(t, so.z_hat, z_target, so.y_hat, y_target, 1.0, 1.0).total;
        };
        run_check(out, "end-to-end ic-CNN (width/8, 3x16x16)", build, model.parameters(),
                  kEndToEndTol, 25);
    }
    return out;
}

std::string format_suite(const GradientSuiteResult& result) {
    std::ostringstream os;
    for (const auto& c : result.checks) {
        os << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  max_rel_err=" << c.max_rel_err
           << "  tol=" << c.tolerance << "  elements=" << c.checked << "\n";
    }
    os << (result.all_pass ? "gradient suite: all checks passed"
                           : "gradient suite: FAILURES present")
       << "\n";
    return os.str();
}

}  // namespace iccnn
