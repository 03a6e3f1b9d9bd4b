#include "ccnet/nn.hpp"

#include "ccnet/errors.hpp"

namespace ccnet {

TensorPtr ModelParams::add(const std::string& name, TensorPtr t, bool learnable) {
    auto [it, inserted] = entries_.emplace(name, Entry{std::move(t), learnable});
    if (!inserted) {
        throw DataError("params: duplicate parameter name '" + name + "'");
    }
    return it->second.tensor;
}

const TensorPtr& ModelParams::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw DataError("params: unknown parameter name '" + name + "'");
    }
    return it->second.tensor;
}

std::int64_t ModelParams::scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [name, e] : entries_) n += e.tensor->size();
    return n;
}

void ModelParams::zero_grad() {
    for (auto& [name, e] : entries_) {
        if (e.learnable) e.tensor->zero_grad();
    }
}

void ModelParams::load_values_from(const ModelParams& other) {
    for (auto& [name, e] : entries_) {
        const TensorPtr& src = other.get(name);
        if (src->shape != e.tensor->shape) {
            throw DataError("params: shape mismatch for '" + name + "': " +
                            e.tensor->shape_str() + " vs " + src->shape_str());
        }
        e.tensor->value = src->value;
    }
}

Linear Linear::create(ModelParams& params, const std::string& prefix, std::int64_t in,
                      std::int64_t out, Rng& rng, bool bias) {
    Linear l;
    l.W = params.add(prefix + ".weight", Tensor::uniform_init({out, in}, in, rng));
    l.b = bias ? params.add(prefix + ".bias", Tensor::zeros({out}, true)) : nullptr;
    return l;
}

Conv1d Conv1d::create(ModelParams& params, const std::string& prefix, std::int64_t in,
                      std::int64_t out, std::int64_t width, Rng& rng) {
    Conv1d c;
    c.K = params.add(prefix + ".kernel", Tensor::uniform_init({out, in, width}, in * width, rng));
    c.b = params.add(prefix + ".bias", Tensor::zeros({out}, true));
    return c;
}

BatchNorm BatchNorm::create(ModelParams& params, const std::string& prefix, std::int64_t dim) {
    BatchNorm bn;
    bn.gamma = params.add(prefix + ".scale", Tensor::full({dim}, 1.0));
    bn.gamma->requires_grad = true;
    bn.gamma->ensure_grad();
    bn.beta = params.add(prefix + ".shift", Tensor::zeros({dim}, true));
    bn.running_mean = params.add(prefix + ".running_mean", Tensor::zeros({dim}), false);
    bn.running_var = params.add(prefix + ".running_var", Tensor::full({dim}, 1.0), false);
    return bn;
}

ContextGating ContextGating::create(ModelParams& params, const std::string& prefix,
                                    std::int64_t dim, Rng& rng) {
    ContextGating cg;
    cg.W = params.add(prefix + ".gate_weight", Tensor::uniform_init({dim, dim}, dim, rng));
    cg.b = params.add(prefix + ".gate_bias", Tensor::zeros({dim}, true));
    return cg;
}

}  // namespace ccnet
