#pragma once

#include <cstdint>
#include <vector>

#include "ccnet/autograd.hpp"
#include "ccnet/tensor.hpp"

namespace ccnet {
namespace ops {

// Elementwise on identical shapes.
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);

// y = c * x for a compile-time-known constant c (no gradient into c).
TensorPtr scale_const(const TensorPtr& x, double c);
// y = s * x for a learnable scalar s (shape {1}).
TensorPtr scale(const TensorPtr& x, const TensorPtr& s);

// Row-broadcast multiply: x (n x d) * v (d), applied to every row.
TensorPtr mul_rowvec(const TensorPtr& x, const TensorPtr& v);

TensorPtr relu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);

// y = x W^T + b over the last axis. W is (out x in), b is (out) or null.
TensorPtr linear(const TensorPtr& x, const TensorPtr& W, const TensorPtr& b);

// Cross-correlation along the sequence axis with zero same-padding.
// x is (len x in), K is (out x in x k) with odd k, b is (out) or null.
TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& K, const TensorPtr& b);

// Max-subtracted softmax along `axis` of a rank-1 or rank-2 tensor.
TensorPtr softmax(const TensorPtr& x, int axis);

// a (n x k) @ b (k x m) -> (n x m)
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
// a (n x k) @ b^T for b (m x k) -> (n x m)
TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b);

TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr concat_rows(const std::vector<TensorPtr>& parts);

// out[i] = x[idx[i]] (rows); backward scatter-adds.
TensorPtr gather_rows(const TensorPtr& x, std::vector<std::int64_t> idx);

// Row-wise dot product of two (n x d) tensors -> (n).
TensorPtr rowdot(const TensorPtr& a, const TensorPtr& b);

TensorPtr reshape(const TensorPtr& x, std::vector<std::int64_t> shape);
TensorPtr sum_all(const TensorPtr& x);
TensorPtr mean_all(const TensorPtr& x);

// Batch-wise softmax cross entropy over a square score matrix whose
// diagonal holds the ground-truth pairs:
//   L = (1/B) sum_i -log( exp(S_ii) / sum_j exp(S_ij) )
TensorPtr batch_softmax_xent(const TensorPtr& scores);

// Batch normalization over rows of x (n x d).
// Training mode normalizes with batch statistics (biased variance) and,
// when update_running is set, folds them into the running buffers with the
// given momentum. Inference mode is the affine map from running stats.
TensorPtr batch_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     const TensorPtr& running_mean, const TensorPtr& running_var,
                     bool training, bool update_running, double momentum,
                     double eps = 1e-5);

// Inverted dropout. Training mode samples a keep mask with probability
// 1 - p and scales kept entries by 1/(1 - p); the mask is frozen into the
// op record so replay is exact. Inference mode (rng == nullptr) and p == 0
// are both the identity.
TensorPtr dropout(const TensorPtr& x, double p, Rng* rng);

// y = x * sigmoid(W x + b); the self-gating recalibration.
TensorPtr context_gating(const TensorPtr& x, const TensorPtr& W, const TensorPtr& b);

}  // namespace ops
}  // namespace ccnet
