#include "ccnet/correction.hpp"

namespace ccnet {

Correction Correction::create(ModelParams& params, std::int64_t d, bool share_diff_fc, Rng& rng) {
    Correction corr;
    corr.shared = share_diff_fc;
    corr.diff_fc = Linear::create(params, "correction.diff_fc", 2 * d, d, rng);
    if (!share_diff_fc) {
        corr.diff_fc_ref = Linear::create(params, "correction.diff_fc_ref", 2 * d, d, rng);
    }
    corr.out_fc1 = Linear::create(params, "correction.out_fc1", 3 * d, d, rng);
    corr.out_fc2 = Linear::create(params, "correction.out_fc2", d, d, rng);
    return corr;
}

TensorPtr Correction::difference_embed(const TensorPtr& x_ref, const TensorPtr& x_trg,
                                       const RunMode& mode) const {
    if (x_ref->rank() != 2 || !same_shape(*x_ref, *x_trg)) {
        throw ShapeError("difference_embed: mismatched inputs " + x_ref->shape_str() + " vs " +
                         x_trg->shape_str());
    }
    auto h = ops::mul(x_trg, x_ref);
    auto bar_trg = diff_fc(ops::concat_cols({h, x_trg}));
    const Linear& ref_fc = shared ? diff_fc : diff_fc_ref;
    auto bar_ref = ref_fc(ops::concat_cols({h, x_ref}));
    auto diff = ops::sub(bar_trg, bar_ref);
    auto z = ops::concat_cols({x_ref, x_trg, diff});
    return out_fc2(mode.apply_dropout(ops::relu(out_fc1(z))));
}

TensorPtr correction_rowwise_scores(const BankMatrices& difference, const BankMatrices& text) {
    TensorPtr total;
    for (int e = 0; e < kNumExperts; ++e) {
        auto s = ops::rowdot(difference[e], text[e]);
        total = total ? ops::add(total, s) : s;
    }
    return total;
}

}  // namespace ccnet
