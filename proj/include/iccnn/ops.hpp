#pragma once

#include <vector>

#include "iccnn/tensor.hpp"

namespace iccnn {

/// 2-D convolution, stride 1, zero same-padding of width (k-1)/2.
/// input (Cin,H,W), weight (Cout,Cin,k,k) with k odd, bias (Cout) -> (Cout,H,W).
TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias);

/// 2x2 max pooling, stride 2; a trailing odd row/column is dropped.
/// Gradient routes to the argmax of each window, ties to the first element in
/// row-major scan order.
TensorPtr maxpool2(Tape& tape, const TensorPtr& input);

/// Elementwise max(0, x). Subgradient at 0 is 0.
TensorPtr relu(Tape& tape, const TensorPtr& input);

/// Bilinear 2x upsampling with half-pixel centers: output (i,j) samples source
/// coordinate ((i+0.5)/2 - 0.5, (j+0.5)/2 - 0.5), clamped at the borders.
/// Backward is the exact transpose. (C,H,W) -> (C,2H,2W).
TensorPtr upsample2_bilinear(Tape& tape, const TensorPtr& input);

/// Stacks (Ci,H,W) parts along the channel axis in argument order.
TensorPtr concat_channels(Tape& tape, const std::vector<TensorPtr>& parts);

/// Sums disjoint factor x factor blocks: (C,H,W) -> (C,H/f,W/f). Exact total.
TensorPtr block_sum(Tape& tape, const TensorPtr& input, int factor);

/// Scalar sum of squared differences over identically shaped tensors.
TensorPtr sum_squared_error(Tape& tape, const TensorPtr& pred, const TensorPtr& target);

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape& tape, const TensorPtr& a, double c);

/// Value-level channel slice [c0, c1) of a (C,H,W) tensor. Not recorded.
TensorPtr slice_channels(const TensorPtr& t, int c0, int c1);

namespace detail {
// Shared block-sum kernel on raw row-major (H,W) planes.
void block_sum_plane(const double* in, int h, int w, int factor, double* out);
}  // namespace detail

}  // namespace iccnn
