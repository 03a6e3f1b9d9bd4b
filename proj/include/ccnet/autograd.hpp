#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

// One executed primitive: its inputs, its output, a pure forward rule that
// recomputes output values from input values in a fixed evaluation order,
// and a backward rule that accumulates input gradients from the output
// gradient.
struct OpRecord {
    const char* name = "";
    std::vector<TensorPtr> inputs;
    TensorPtr output;
    std::function<void()> forward;
    std::function<void()> backward;
};

// Topologically ordered record of the operations executed while a tape was
// active. Ops append in execution order, so the vector order is a valid
// topological order by construction.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(OpRecord rec);
    const std::vector<OpRecord>& records() const { return records_; }

    // Re-run every forward rule in recorded order. Outputs are recomputed
    // bit-for-bit (dropout masks and other sampled state are frozen inside
    // the records).
    void replay();

    // Reverse-mode sweep from a scalar loss: seeds d(loss)/d(loss) = 1 and
    // visits every record exactly once in reverse topological order.
    // `trace`, when given, receives the op names in visit order.
    void backward(const TensorPtr& loss, std::vector<std::string>* trace = nullptr);

private:
    std::vector<OpRecord> records_;
    Tape* previous_ = nullptr;
};

// True when a tape is active and any input requires grad: the op must then
// produce a tracked output and record itself.
bool tracking_enabled(const std::vector<TensorPtr>& inputs);

}  // namespace ccnet
