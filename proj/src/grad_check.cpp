#include "iccnn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace iccnn {

GradCheckResult grad_check(const std::function<TensorPtr(Tape&)>& build_loss,
                           const std::vector<TensorPtr>& params, double eps,
                           int max_per_tensor, uint64_t sample_seed) {
    if (eps <= 0.0) throw ConfigError("grad_check eps must be positive");

    // Analytic pass.
    Tape tape;
    TensorPtr loss = build_loss(tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
        p->zero_grad();
    }

    auto eval = [&]() {
        Tape t(false);
        return build_loss(t)->data[0];
    };

    GradCheckResult res;
    std::mt19937_64 rng(sample_seed);
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        const int n = p.numel();
        std::vector<int> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        if (max_per_tensor > 0 && n > max_per_tensor) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(static_cast<size_t>(max_per_tensor));
        }
        for (int e : idx) {
            const double saved = p.data[static_cast<size_t>(e)];
            p.data[static_cast<size_t>(e)] = saved + eps;
            const double lp = eval();
            p.data[static_cast<size_t>(e)] = saved - eps;
            const double lm = eval();
            p.data[static_cast<size_t>(e)] = saved;

            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = analytic[pi][static_cast<size_t>(e)];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked_elements;
        }
    }
    return res;
}

}  // namespace iccnn
