#pragma once

#include <array>
#include <vector>

#include "ccnet/features.hpp"
#include "ccnet/nn.hpp"

namespace ccnet {

// Rank-constrained bilinear fusion: sum of R rank-1-style interactions
// projected back to D. Linear in each argument (no inner nonlinearity).
struct MutanFusion {
    std::vector<TensorPtr> U;  // R matrices (D x D)
    std::vector<TensorPtr> V;  // R matrices (D x D)
    TensorPtr Wo;              // (D x R*D)

    static MutanFusion create(ModelParams& params, const std::string& prefix, std::int64_t d,
                              std::int64_t rank, Rng& rng);
    // x, t: (n x D) -> (n x D)
    TensorPtr operator()(const TensorPtr& x, const TensorPtr& t) const;
};

// The forward pathway's parameters: per-expert fusion factors, shared
// gate/residual stacks (3D -> D -> D), and the scalar heads w_g, w_r.
struct Composition {
    std::array<MutanFusion, kNumExperts> fusion;
    Linear gate_fc1, gate_fc2;
    BatchNorm gate_bn;
    Linear res_fc1, res_fc2;
    BatchNorm res_bn;
    TensorPtr w_g, w_r;

    static Composition create(ModelParams& params, std::int64_t d, std::int64_t rank, Rng& rng);

    // c_e = w_g * f_gate + w_r * f_res over a batch of rows.
    TensorPtr compose(const TensorPtr& x_ref, const TensorPtr& t, int expert,
                      const RunMode& mode) const;
};

// s^r[i][j] = sum_e c_e(i) . x^trg_e(j), as a full (n_q x n_c) matrix.
TensorPtr composition_scores(const BankMatrices& composed, const BankMatrices& target);

// Eq-style in-batch loss over a square score matrix with ground truth on
// the diagonal; shared by both networks.
TensorPtr batch_softmax_loss(const TensorPtr& scores);

}  // namespace ccnet
