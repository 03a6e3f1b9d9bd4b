#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ccnet/errors.hpp"
#include "ccnet/rng.hpp"

namespace ccnet {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor of doubles. Gradient buffer exists iff
// requires_grad; it always matches the value buffer's shape.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::int64_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty unless requires_grad
    bool requires_grad = false;

    static TensorPtr zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static TensorPtr full(std::vector<std::int64_t> shape, double fill);
    static TensorPtr scalar(double v);
    static TensorPtr from_values(std::vector<std::int64_t> shape, std::vector<double> values,
                                 bool requires_grad = false);
    // Fan-in-scaled uniform init in (-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static TensorPtr uniform_init(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng);
    static TensorPtr normal_init(std::vector<std::int64_t> shape, double stddev, Rng& rng);

    std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool is_scalar() const { return size() == 1 && rank() <= 1; }
    double item() const;

    // Rank-2 accessors.
    std::int64_t rows() const { return shape[0]; }
    std::int64_t cols() const { return shape[1]; }
    double& at(std::int64_t r, std::int64_t c) { return value[static_cast<std::size_t>(r * cols() + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return value[static_cast<std::size_t>(r * cols() + c)]; }

    void ensure_grad();   // allocate zero grad buffer if missing
    void zero_grad();
    std::string shape_str() const;

private:
    Tensor() = default;
};

std::int64_t shape_size(const std::vector<std::int64_t>& shape);
std::string shape_to_string(const std::vector<std::int64_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace ccnet
