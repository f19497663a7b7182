#include "iccnn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace iccnn {

int checked_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeError("empty shape");
    long long n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("non-positive extent in " + shape_str(shape));
        n *= d;
        if (n > (1LL << 31)) throw ShapeError("tensor too large: " + shape_str(shape));
    }
    return static_cast<int>(n);
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

void require_finite(const Tensor& t, const char* what) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(what) + " produced a non-finite value");
        }
    }
}

TensorPtr Tensor::make(std::vector<int> shape) {
    int n = checked_numel(shape);
    auto t = TensorPtr(new Tensor());
    t->shape = std::move(shape);
    t->data.assign(static_cast<size_t>(n), 0.0);
    return t;
}

TensorPtr Tensor::zeros(std::vector<int> shape) { return make(std::move(shape)); }

TensorPtr Tensor::full(std::vector<int> shape, double value) {
    auto t = make(std::move(shape));
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::from_data(std::vector<int> shape, std::vector<double> values) {
    int n = checked_numel(shape);
    if (static_cast<size_t>(n) != values.size()) {
        throw ShapeError("data length " + std::to_string(values.size()) + " does not match " +
                         iccnn::shape_str(shape));
    }
    auto t = TensorPtr(new Tensor());
    t->shape = std::move(shape);
    t->data = std::move(values);
    return t;
}

TensorPtr Tensor::scalar(double value) { return from_data({1}, {value}); }

TensorPtr Tensor::param(std::vector<int> shape) {
    auto t = make(std::move(shape));
    t->requires_grad = true;
    t->needs_grad = true;
    return t;
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

TensorPtr Tensor::detached() const { return from_data(shape, data); }

std::string Tensor::shape_str() const { return iccnn::shape_str(shape); }

void Tape::record(const std::vector<TensorPtr>& inputs, const TensorPtr& output,
                  std::function<void()> backward_fn) {
    bool any = false;
    for (const auto& in : inputs) {
        if (in->needs_grad) {
            any = true;
            break;
        }
    }
    if (!any) return;  // nothing upstream wants gradients
    output->needs_grad = true;
    output->has_creator = true;
    if (!recording_) return;
    if (consumed_) throw StateError("recording onto a consumed tape");
    nodes_.push_back(Node{output, std::move(backward_fn)});
}

void Tape::backward(const TensorPtr& loss) {
    if (consumed_) throw StateError("backward called twice on the same tape");
    if (loss->numel() != 1) {
        throw ShapeError("backward expects a scalar loss, got " + loss->shape_str());
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        // A node whose output was never reached carries no gradient to push.
        if (it->output->grad.empty()) continue;
        it->backward_fn();
    }
    clear();
    consumed_ = true;
}

void Tape::clear() { nodes_.clear(); }

}  // namespace iccnn
