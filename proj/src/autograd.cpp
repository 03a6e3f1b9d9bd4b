#include "ccnet/autograd.hpp"

#include "ccnet/errors.hpp"

namespace ccnet {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
    previous_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(OpRecord rec) { records_.push_back(std::move(rec)); }

void Tape::replay() {
    for (auto& rec : records_) rec.forward();
}

void Tape::backward(const TensorPtr& loss, std::vector<std::string>* trace) {
    if (!loss->is_scalar()) {
        throw ContractError("backward: loss must be scalar, got shape " + loss->shape_str());
    }
    for (auto& rec : records_) {
        rec.output->ensure_grad();
    }
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (trace) trace->push_back(it->name);
        it->backward();
    }
}

bool tracking_enabled(const std::vector<TensorPtr>& inputs) {
    if (g_active_tape == nullptr) return false;
    for (const auto& in : inputs) {
        if (in && in->requires_grad) return true;
    }
    return false;
}

}  // namespace ccnet
