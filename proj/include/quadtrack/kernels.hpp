#pragma once

#include <utility>
#include <vector>

#include "quadtrack/tensor.hpp"

namespace quadtrack::kernels {

enum class Activation { Sigmoid, Tanh, Relu };

// Primary entry points. Parallelized with OpenMP over independent output
// elements; each output value is accumulated serially in double, so results
// are bit-identical for any thread count and match the serial reference
// exactly.

// [m x k] * [k x n] -> [m x n]; the right factor may be a rank-1 [k] vector,
// giving a rank-1 [m] result.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise activation.
Tensor activation(const Tensor& x, Activation kind);

// Concatenate along `axis`; all other dimensions must agree.
Tensor concat(const std::vector<Tensor>& parts, int axis = 0);

// Cross-correlation with zero padding preserving H x W.
// x: [C x H x W], w: [F x C x kh x kw] (kh, kw odd), b: [F].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

// [C x H x W] -> [C] per-channel mean.
Tensor global_avg_pool(const Tensor& x);

// Bilinear interpolation of `map` [C x H x W] at float coords (x, y).
// Coordinates outside [0, W-1] x [0, H-1] read a zero-padded border.
// Result: [C x N] for N coords.
Tensor bilinear_sample(const Tensor& map, const std::vector<std::pair<float, float>>& coords);

// Serial reference implementations. Straight loop transcriptions kept for
// the unit tests and the kernel benchmark; same math, no threading.
namespace ref {
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor activation(const Tensor& x, Activation kind);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor global_avg_pool(const Tensor& x);
Tensor bilinear_sample(const Tensor& map, const std::vector<std::pair<float, float>>& coords);
}  // namespace ref

}  // namespace quadtrack::kernels
