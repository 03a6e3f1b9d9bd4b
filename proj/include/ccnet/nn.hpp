#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ccnet/features.hpp"
#include "ccnet/ops.hpp"
#include "ccnet/tensor.hpp"

namespace ccnet {

// One (n x D) matrix per expert, fixed expert order.
using BankMatrices = std::array<TensorPtr, kNumExperts>;

// Named, shape-tagged registry of every stored quantity in a model:
// learnable weights plus non-learnable buffers (batch-norm running stats).
// Iteration order is name-sorted.
class ModelParams {
public:
    struct Entry {
        TensorPtr tensor;
        bool learnable = true;
    };

    TensorPtr add(const std::string& name, TensorPtr t, bool learnable = true);
    const TensorPtr& get(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) > 0; }

    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::int64_t scalar_count() const;

    void zero_grad();

    // Copy all values from another registry with identical names/shapes.
    void load_values_from(const ModelParams& other);

private:
    std::map<std::string, Entry> entries_;
};

// How a forward pass should run. Inference mode: no dropout, batch norm
// from running statistics. Training mode needs the step's dropout source.
struct RunMode {
    bool training = false;
    double dropout_p = 0.0;
    Rng* dropout_rng = nullptr;
    bool update_running_stats = false;

    static RunMode inference() { return RunMode{}; }
    static RunMode train(double dropout_p, Rng* rng, bool update_running = true) {
        return RunMode{true, dropout_p, rng, update_running};
    }

    TensorPtr apply_dropout(const TensorPtr& x) const {
        return training ? ops::dropout(x, dropout_p, dropout_rng) : x;
    }
};

struct Linear {
    TensorPtr W;  // out x in
    TensorPtr b;  // out, may be null

    static Linear create(ModelParams& params, const std::string& prefix, std::int64_t in,
                         std::int64_t out, Rng& rng, bool bias = true);
    TensorPtr operator()(const TensorPtr& x) const { return ops::linear(x, W, b); }
};

struct Conv1d {
    TensorPtr K;  // out x in x width
    TensorPtr b;  // out

    static Conv1d create(ModelParams& params, const std::string& prefix, std::int64_t in,
                         std::int64_t out, std::int64_t width, Rng& rng);
    TensorPtr operator()(const TensorPtr& x) const { return ops::conv1d_same(x, K, b); }
};

struct BatchNorm {
    TensorPtr gamma, beta;
    TensorPtr running_mean, running_var;
    double momentum = 0.1;

    static BatchNorm create(ModelParams& params, const std::string& prefix, std::int64_t dim);
    TensorPtr operator()(const TensorPtr& x, const RunMode& mode) const {
        return ops::batch_norm(x, gamma, beta, running_mean, running_var, mode.training,
                               mode.training && mode.update_running_stats, momentum);
    }
};

struct ContextGating {
    TensorPtr W;  // d x d
    TensorPtr b;  // d

    static ContextGating create(ModelParams& params, const std::string& prefix, std::int64_t dim,
                                Rng& rng);
    TensorPtr operator()(const TensorPtr& x) const { return ops::context_gating(x, W, b); }
};

}  // namespace ccnet
