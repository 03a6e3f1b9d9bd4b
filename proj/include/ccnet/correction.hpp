#pragma once

#include "ccnet/features.hpp"
#include "ccnet/nn.hpp"

namespace ccnet {

// The inverse pathway: embed the reference/target difference and score it
// against the caption's expert vectors. The difference FC is shared between
// the target and reference branches by default, which makes x_diff exactly
// zero for identical images and antisymmetric under swapping them; the
// unshared variant stays available for ablation.
struct Correction {
    Linear diff_fc;       // 2D -> D, target branch (and reference when shared)
    Linear diff_fc_ref;   // only populated when unshared
    Linear out_fc1;       // 3D -> D
    Linear out_fc2;       // D -> D
    bool shared = true;

    static Correction create(ModelParams& params, std::int64_t d, bool share_diff_fc, Rng& rng);

    // x_ref, x_trg: (n x D) rows of image-pair embeddings -> d_e (n x D).
    TensorPtr difference_embed(const TensorPtr& x_ref, const TensorPtr& x_trg,
                               const RunMode& mode) const;
};

// s^c[i] = sum_e d_e(i) . t_e(i) over paired rows -> (n).
TensorPtr correction_rowwise_scores(const BankMatrices& difference, const BankMatrices& text);

}  // namespace ccnet
