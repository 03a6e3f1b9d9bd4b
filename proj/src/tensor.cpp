#include "ccnet/tensor.hpp"

#include <sstream>

namespace ccnet {

std::int64_t shape_size(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

static void check_shape(const std::vector<std::int64_t>& shape) {
    for (std::int64_t d : shape) {
        if (d < 0) {
            throw ShapeError("tensor: negative dimension in shape " + shape_to_string(shape));
        }
    }
}

TensorPtr Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    check_shape(shape);
    auto t = TensorPtr(new Tensor());
    t->shape = std::move(shape);
    t->value.assign(static_cast<std::size_t>(shape_size(t->shape)), 0.0);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->value.size(), 0.0);
    return t;
}

TensorPtr Tensor::full(std::vector<std::int64_t> shape, double fill) {
    auto t = zeros(std::move(shape));
    for (double& v : t->value) v = fill;
    return t;
}

TensorPtr Tensor::scalar(double v) { return full({1}, v); }

TensorPtr Tensor::from_values(std::vector<std::int64_t> shape, std::vector<double> values,
                              bool requires_grad) {
    check_shape(shape);
    if (shape_size(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_to_string(shape));
    }
    auto t = TensorPtr(new Tensor());
    t->shape = std::move(shape);
    t->value = std::move(values);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->value.size(), 0.0);
    return t;
}

TensorPtr Tensor::uniform_init(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
    auto t = zeros(std::move(shape), true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t->value) v = rng.uniform(-bound, bound);
    return t;
}

TensorPtr Tensor::normal_init(std::vector<std::int64_t> shape, double stddev, Rng& rng) {
    auto t = zeros(std::move(shape), true);
    for (double& v : t->value) v = stddev * rng.normal();
    return t;
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("tensor: item() on non-scalar of shape " + shape_str());
    }
    return value[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

void Tensor::zero_grad() {
    if (requires_grad) {
        grad.assign(value.size(), 0.0);
    } else {
        grad.clear();
    }
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

}  // namespace ccnet
