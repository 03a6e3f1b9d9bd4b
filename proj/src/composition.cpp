#include "ccnet/composition.hpp"

namespace ccnet {

MutanFusion MutanFusion::create(ModelParams& params, const std::string& prefix, std::int64_t d,
                                std::int64_t rank, Rng& rng) {
    MutanFusion fusion;
    for (std::int64_t r = 0; r < rank; ++r) {
        fusion.U.push_back(
            params.add(prefix + ".u" + std::to_string(r), Tensor::uniform_init({d, d}, d, rng)));
        fusion.V.push_back(
            params.add(prefix + ".v" + std::to_string(r), Tensor::uniform_init({d, d}, d, rng)));
    }
    fusion.Wo = params.add(prefix + ".wo", Tensor::uniform_init({d, rank * d}, rank * d, rng));
    return fusion;
}

TensorPtr MutanFusion::operator()(const TensorPtr& x, const TensorPtr& t) const {
    if (x->rank() != 2 || t->rank() != 2 || x->cols() != t->cols() || x->rows() != t->rows()) {
        throw ShapeError("mutan_fusion: mismatched inputs " + x->shape_str() + " vs " +
                         t->shape_str());
    }
    std::vector<TensorPtr> parts;
    parts.reserve(U.size());
    for (std::size_t r = 0; r < U.size(); ++r) {
        parts.push_back(ops::mul(ops::matmul_nt(x, U[r]), ops::matmul_nt(t, V[r])));
    }
    return ops::matmul_nt(ops::concat_cols(parts), Wo);
}

Composition Composition::create(ModelParams& params, std::int64_t d, std::int64_t rank,
                                Rng& rng) {
    Composition comp;
    for (int e = 0; e < kNumExperts; ++e) {
        comp.fusion[e] = MutanFusion::create(
            params, "composition.e" + std::to_string(e) + ".fusion", d, rank, rng);
    }
    comp.gate_fc1 = Linear::create(params, "composition.gate.fc1", 3 * d, d, rng);
    comp.gate_bn = BatchNorm::create(params, "composition.gate.bn", d);
    comp.gate_fc2 = Linear::create(params, "composition.gate.fc2", d, d, rng);
    comp.res_fc1 = Linear::create(params, "composition.res.fc1", 3 * d, d, rng);
    comp.res_bn = BatchNorm::create(params, "composition.res.bn", d);
    comp.res_fc2 = Linear::create(params, "composition.res.fc2", d, d, rng);
    comp.w_g = params.add("composition.w_g", Tensor::full({1}, 1.0));
    comp.w_g->requires_grad = true;
    comp.w_g->ensure_grad();
    comp.w_r = params.add("composition.w_r", Tensor::full({1}, 1.0));
    comp.w_r->requires_grad = true;
    comp.w_r->ensure_grad();
    return comp;
}

TensorPtr Composition::compose(const TensorPtr& x_ref, const TensorPtr& t, int expert,
                               const RunMode& mode) const {
    if (expert < 0 || expert >= kNumExperts) {
        throw ContractError("compose: expert index " + std::to_string(expert) + " out of range");
    }
    auto fused = fusion[expert](x_ref, t);
    auto t_bar = ops::concat_cols({t, fused});
    auto z = ops::concat_cols({x_ref, t_bar});
    auto gate_h = mode.apply_dropout(ops::relu(gate_bn(gate_fc1(z), mode)));
    auto f_gate = ops::mul(ops::sigmoid(gate_fc2(gate_h)), x_ref);
    auto res_h = mode.apply_dropout(ops::relu(res_bn(res_fc1(z), mode)));
    auto f_res = res_fc2(res_h);
    return ops::add(ops::scale(f_gate, w_g), ops::scale(f_res, w_r));
}

TensorPtr composition_scores(const BankMatrices& composed, const BankMatrices& target) {
    TensorPtr total;
    for (int e = 0; e < kNumExperts; ++e) {
        auto s = ops::matmul_nt(composed[e], target[e]);
        total = total ? ops::add(total, s) : s;
    }
    return total;
}

TensorPtr batch_softmax_loss(const TensorPtr& scores) { return ops::batch_softmax_xent(scores); }

}  // namespace ccnet
