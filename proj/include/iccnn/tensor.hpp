#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iccnn/common.hpp"

namespace iccnn {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense double-precision tensor with an optional gradient buffer.
///
/// Layout is row-major. Feature maps use (channels, height, width); convolution
/// weights use (out_channels, in_channels, kH, kW). `grad` stays empty until a
/// backward pass touches the tensor; an empty grad reads as all zeros.
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;

    // Parameters opt in; intermediates inherit the flag through recorded ops.
    bool requires_grad = false;
    bool needs_grad = false;  // requires_grad, or has an upstream tensor that does
    bool has_creator = false; // produced by a recorded op

    static TensorPtr zeros(std::vector<int> shape);
    static TensorPtr full(std::vector<int> shape, double value);
    static TensorPtr from_data(std::vector<int> shape, std::vector<double> values);
    static TensorPtr scalar(double value);
    /// Gradient-tracked tensor (a parameter), zero-initialized.
    static TensorPtr param(std::vector<int> shape);

    int numel() const { return static_cast<int>(data.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }

    /// Allocates the grad buffer (zero-filled) if absent.
    void ensure_grad();
    void zero_grad();

    /// Value copy with no graph linkage and no gradient tracking.
    TensorPtr detached() const;

    std::string shape_str() const;

private:
    Tensor() = default;
    static TensorPtr make(std::vector<int> shape);
};

int checked_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

/// Throws NumericError if any element is NaN or Inf. `what` names the producer.
void require_finite(const Tensor& t, const char* what);

/// Ordered record of executed operations. Replaying the records in reverse
/// visits every node after all of its consumers, so a single sweep implements
/// reverse-mode differentiation. Each record's closure captures the saved
/// state its backward rule needs (argmax indices, interpolation tables, input
/// tensor handles).
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers an op. No-op unless the tape records and some input needs a
    /// gradient; `output->needs_grad` / `has_creator` are set accordingly.
    void record(const std::vector<TensorPtr>& inputs, const TensorPtr& output,
                std::function<void()> backward_fn);

    /// Seeds d(loss)/d(loss) = 1 and sweeps the records in reverse, accumulating
    /// gradients into every tensor that needs them. Consumes the tape: saved
    /// state is released and a second call throws StateError.
    void backward(const TensorPtr& loss);

    /// Releases all records and saved state without running backward.
    void clear();

    bool recording() const { return recording_; }
    bool consumed() const { return consumed_; }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        TensorPtr output;
        std::function<void()> backward_fn;
    };
    std::vector<Node> nodes_;
    bool recording_ = true;
    bool consumed_ = false;
};

}  // namespace iccnn
