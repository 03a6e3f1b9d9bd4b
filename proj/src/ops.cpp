#include "ccnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace ccnet {
namespace ops {

namespace {

// C (rows x cols) = A (rows x inner) @ B (inner x cols)
void gemm_nn(std::int64_t rows, std::int64_t inner, std::int64_t cols, const double* A,
             const double* B, double* C, bool accumulate) {
    if (!accumulate) std::fill(C, C + rows * cols, 0.0);
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* a_row = A + i * inner;
        double* c_row = C + i * cols;
        for (std::int64_t k = 0; k < inner; ++k) {
            const double a = a_row[k];
            if (a == 0.0) continue;
            const double* b_row = B + k * cols;
            for (std::int64_t j = 0; j < cols; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C (rows x cols) = A (rows x inner) @ B^T for B (cols x inner)
void gemm_nt(std::int64_t rows, std::int64_t inner, std::int64_t cols, const double* A,
             const double* B, double* C, bool accumulate) {
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* a_row = A + i * inner;
        double* c_row = C + i * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
            const double* b_row = B + j * inner;
            double acc = 0.0;
            for (std::int64_t k = 0; k < inner; ++k) acc += a_row[k] * b_row[k];
            if (accumulate) {
                c_row[j] += acc;
            } else {
                c_row[j] = acc;
            }
        }
    }
}

// C (rows x cols) = A^T @ B for A (inner x rows), B (inner x cols)
void gemm_tn(std::int64_t rows, std::int64_t inner, std::int64_t cols, const double* A,
             const double* B, double* C, bool accumulate) {
    if (!accumulate) std::fill(C, C + rows * cols, 0.0);
    for (std::int64_t k = 0; k < inner; ++k) {
        const double* a_row = A + k * rows;
        const double* b_row = B + k * cols;
        for (std::int64_t i = 0; i < rows; ++i) {
            const double a = a_row[i];
            if (a == 0.0) continue;
            double* c_row = C + i * cols;
            for (std::int64_t j = 0; j < cols; ++j) c_row[j] += a * b_row[j];
        }
    }
}

TensorPtr finish(const char* name, std::vector<TensorPtr> inputs, TensorPtr out,
                 std::function<void()> fwd, std::function<void()> bwd) {
    fwd();
    if (tracking_enabled(inputs)) {
        out->requires_grad = true;
        Tape::active()->record(
            OpRecord{name, std::move(inputs), out, std::move(fwd), std::move(bwd)});
    }
    return out;
}

void require_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
    if (!same_shape(*a, *b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a->shape_str() + " vs " +
                         b->shape_str());
    }
}

void require_rank(const char* op, const TensorPtr& t, int rank) {
    if (t->rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got shape " + t->shape_str());
    }
}

// Rows/width view of a tensor treated as a matrix over its last axis.
std::int64_t last_dim(const TensorPtr& t) {
    if (t->rank() == 0) return 1;
    return t->shape.back();
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("add", a, b);
    auto out = Tensor::zeros(a->shape);
    auto fwd = [a, b, out] {
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = a->value[i] + b->value[i];
    };
    auto bwd = [a, b, out] {
        const std::size_t n = out->value.size();
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i];
        }
    };
    return finish("add", {a, b}, out, fwd, bwd);
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("sub", a, b);
    auto out = Tensor::zeros(a->shape);
    auto fwd = [a, b, out] {
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = a->value[i] - b->value[i];
    };
    auto bwd = [a, b, out] {
        const std::size_t n = out->value.size();
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) b->grad[i] -= out->grad[i];
        }
    };
    return finish("sub", {a, b}, out, fwd, bwd);
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("mul", a, b);
    auto out = Tensor::zeros(a->shape);
    auto fwd = [a, b, out] {
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = a->value[i] * b->value[i];
    };
    auto bwd = [a, b, out] {
        const std::size_t n = out->value.size();
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i] * a->value[i];
        }
    };
    return finish("mul", {a, b}, out, fwd, bwd);
}

TensorPtr scale_const(const TensorPtr& x, double c) {
    auto out = Tensor::zeros(x->shape);
    auto fwd = [x, out, c] {
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = c * x->value[i];
    };
    auto bwd = [x, out, c] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) x->grad[i] += c * out->grad[i];
    };
    return finish("scale_const", {x}, out, fwd, bwd);
}

TensorPtr scale(const TensorPtr& x, const TensorPtr& s) {
    if (!s->is_scalar()) {
        throw ShapeError("scale: scale factor must be scalar, got " + s->shape_str());
    }
    auto out = Tensor::zeros(x->shape);
    auto fwd = [x, s, out] {
        const double c = s->value[0];
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = c * x->value[i];
    };
    auto bwd = [x, s, out] {
        const std::size_t n = out->value.size();
        if (x->requires_grad) {
            x->ensure_grad();
            const double c = s->value[0];
            for (std::size_t i = 0; i < n; ++i) x->grad[i] += c * out->grad[i];
        }
        if (s->requires_grad) {
            s->ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += out->grad[i] * x->value[i];
            s->grad[0] += acc;
        }
    };
    return finish("scale", {x, s}, out, fwd, bwd);
}

TensorPtr mul_rowvec(const TensorPtr& x, const TensorPtr& v) {
    require_rank("mul_rowvec", x, 2);
    require_rank("mul_rowvec", v, 1);
    if (x->cols() != v->dim(0)) {
        throw ShapeError("mul_rowvec: width mismatch " + x->shape_str() + " vs " + v->shape_str());
    }
    auto out = Tensor::zeros(x->shape);
    auto fwd = [x, v, out] {
        const std::int64_t n = x->rows(), d = x->cols();
        for (std::int64_t r = 0; r < n; ++r)
            for (std::int64_t c = 0; c < d; ++c)
                out->value[r * d + c] = x->value[r * d + c] * v->value[c];
    };
    auto bwd = [x, v, out] {
        const std::int64_t n = x->rows(), d = x->cols();
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t c = 0; c < d; ++c)
                    x->grad[r * d + c] += out->grad[r * d + c] * v->value[c];
        }
        if (v->requires_grad) {
            v->ensure_grad();
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t c = 0; c < d; ++c)
                    v->grad[c] += out->grad[r * d + c] * x->value[r * d + c];
        }
    };
    return finish("mul_rowvec", {x, v}, out, fwd, bwd);
}

TensorPtr relu(const TensorPtr& x) {
    auto out = Tensor::zeros(x->shape);
    auto fwd = [x, out] {
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    };
    auto bwd = [x, out] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i)
            if (x->value[i] > 0.0) x->grad[i] += out->grad[i];
    };
    return finish("relu", {x}, out, fwd, bwd);
}

TensorPtr sigmoid(const TensorPtr& x) {
    auto out = Tensor::zeros(x->shape);
    auto fwd = [x, out] {
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
    };
    auto bwd = [x, out] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double y = out->value[i];
            x->grad[i] += out->grad[i] * y * (1.0 - y);
        }
    };
    return finish("sigmoid", {x}, out, fwd, bwd);
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& W, const TensorPtr& b) {
    require_rank("linear", W, 2);
    if (x->rank() < 1 || x->rank() > 2) {
        throw ShapeError("linear: input must be rank 1 or 2, got " + x->shape_str());
    }
    const std::int64_t in = W->cols(), out_dim = W->rows();
    if (last_dim(x) != in) {
        throw ShapeError("linear: input width mismatch, x " + x->shape_str() + " vs W " +
                         W->shape_str());
    }
    if (b) {
        require_rank("linear", b, 1);
        if (b->dim(0) != out_dim) {
            throw ShapeError("linear: bias size mismatch, b " + b->shape_str() + " vs W " +
                             W->shape_str());
        }
    }
    const std::int64_t rows = x->rank() == 2 ? x->rows() : 1;
    std::vector<std::int64_t> out_shape =
        x->rank() == 2 ? std::vector<std::int64_t>{rows, out_dim}
                       : std::vector<std::int64_t>{out_dim};
    auto out = Tensor::zeros(out_shape);
    auto fwd = [x, W, b, out, rows, in, out_dim] {
        gemm_nt(rows, in, out_dim, x->value.data(), W->value.data(), out->value.data(), false);
        if (b) {
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t o = 0; o < out_dim; ++o) out->value[r * out_dim + o] += b->value[o];
        }
    };
    auto bwd = [x, W, b, out, rows, in, out_dim] {
        if (x->requires_grad) {
            x->ensure_grad();
            gemm_nn(rows, out_dim, in, out->grad.data(), W->value.data(), x->grad.data(), true);
        }
        if (W->requires_grad) {
            W->ensure_grad();
            gemm_tn(out_dim, rows, in, out->grad.data(), x->value.data(), W->grad.data(), true);
        }
        if (b && b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t o = 0; o < out_dim; ++o) b->grad[o] += out->grad[r * out_dim + o];
        }
    };
    std::vector<TensorPtr> inputs = {x, W};
    if (b) inputs.push_back(b);
    return finish("linear", std::move(inputs), out, fwd, bwd);
}

TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& K, const TensorPtr& b) {
    require_rank("conv1d_same", x, 2);
    require_rank("conv1d_same", K, 3);
    const std::int64_t len = x->rows(), in = x->cols();
    const std::int64_t out_dim = K->dim(0), k_in = K->dim(1), width = K->dim(2);
    if (len < 1) throw ContractError("conv1d_same: empty input sequence");
    if (k_in != in) {
        throw ShapeError("conv1d_same: channel mismatch, x " + x->shape_str() + " vs K " +
                         K->shape_str());
    }
    if (width % 2 == 0) {
        throw ShapeError("conv1d_same: kernel width must be odd, got K " + K->shape_str());
    }
    if (b) {
        require_rank("conv1d_same", b, 1);
        if (b->dim(0) != out_dim) {
            throw ShapeError("conv1d_same: bias size mismatch, b " + b->shape_str() + " vs K " +
                             K->shape_str());
        }
    }
    const std::int64_t half = width / 2;
    auto out = Tensor::zeros({len, out_dim});
    auto fwd = [x, K, b, out, len, in, out_dim, width, half] {
        for (std::int64_t t = 0; t < len; ++t) {
            double* y_row = out->value.data() + t * out_dim;
            for (std::int64_t o = 0; o < out_dim; ++o) y_row[o] = b ? b->value[o] : 0.0;
            for (std::int64_t j = 0; j < width; ++j) {
                const std::int64_t src = t + j - half;
                if (src < 0 || src >= len) continue;
                const double* x_row = x->value.data() + src * in;
                for (std::int64_t o = 0; o < out_dim; ++o) {
                    const double* k_row = K->value.data() + (o * in * width) + j;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < in; ++i) acc += k_row[i * width] * x_row[i];
                    y_row[o] += acc;
                }
            }
        }
    };
    auto bwd = [x, K, b, out, len, in, out_dim, width, half] {
        if (x->requires_grad) x->ensure_grad();
        if (K->requires_grad) K->ensure_grad();
        if (b && b->requires_grad) b->ensure_grad();
        for (std::int64_t t = 0; t < len; ++t) {
            const double* g_row = out->grad.data() + t * out_dim;
            if (b && b->requires_grad)
                for (std::int64_t o = 0; o < out_dim; ++o) b->grad[o] += g_row[o];
            for (std::int64_t j = 0; j < width; ++j) {
                const std::int64_t src = t + j - half;
                if (src < 0 || src >= len) continue;
                for (std::int64_t o = 0; o < out_dim; ++o) {
                    const double g = g_row[o];
                    if (g == 0.0) continue;
                    for (std::int64_t i = 0; i < in; ++i) {
                        const std::size_t kidx =
                            static_cast<std::size_t>(o * in * width + i * width + j);
                        if (x->requires_grad) x->grad[src * in + i] += g * K->value[kidx];
                        if (K->requires_grad) K->grad[kidx] += g * x->value[src * in + i];
                    }
                }
            }
        }
    };
    std::vector<TensorPtr> inputs = {x, K};
    if (b) inputs.push_back(b);
    return finish("conv1d_same", std::move(inputs), out, fwd, bwd);
}

namespace {

// Shared max-subtracted softmax over strided slices.
void softmax_slices(const double* in, double* dst, std::int64_t n_slices, std::int64_t slice_len,
                    std::int64_t outer_stride, std::int64_t inner_stride) {
    for (std::int64_t s = 0; s < n_slices; ++s) {
        const double* src = in + s * outer_stride;
        double* out = dst + s * outer_stride;
        double mx = src[0];
        for (std::int64_t i = 1; i < slice_len; ++i) mx = std::max(mx, src[i * inner_stride]);
        double sum = 0.0;
        for (std::int64_t i = 0; i < slice_len; ++i) {
            const double e = std::exp(src[i * inner_stride] - mx);
            out[i * inner_stride] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (std::int64_t i = 0; i < slice_len; ++i) out[i * inner_stride] *= inv;
    }
}

void softmax_slices_backward(const double* y, const double* gy, double* gx, std::int64_t n_slices,
                             std::int64_t slice_len, std::int64_t outer_stride,
                             std::int64_t inner_stride) {
    for (std::int64_t s = 0; s < n_slices; ++s) {
        const double* ys = y + s * outer_stride;
        const double* gs = gy + s * outer_stride;
        double* gd = gx + s * outer_stride;
        double dot = 0.0;
        for (std::int64_t i = 0; i < slice_len; ++i) dot += ys[i * inner_stride] * gs[i * inner_stride];
        for (std::int64_t i = 0; i < slice_len; ++i)
            gd[i * inner_stride] += ys[i * inner_stride] * (gs[i * inner_stride] - dot);
    }
}

}  // namespace

TensorPtr softmax(const TensorPtr& x, int axis) {
    if (x->rank() < 1 || x->rank() > 2) {
        throw ShapeError("softmax: input must be rank 1 or 2, got " + x->shape_str());
    }
    if (axis < 0 || axis >= x->rank()) {
        throw ShapeError("softmax: invalid axis " + std::to_string(axis) + " for shape " +
                         x->shape_str());
    }
    std::int64_t n_slices, slice_len, outer_stride, inner_stride;
    if (x->rank() == 1) {
        n_slices = 1;
        slice_len = x->dim(0);
        outer_stride = 0;
        inner_stride = 1;
    } else if (axis == 1) {
        n_slices = x->rows();
        slice_len = x->cols();
        outer_stride = x->cols();
        inner_stride = 1;
    } else {
        n_slices = x->cols();
        slice_len = x->rows();
        outer_stride = 1;
        inner_stride = x->cols();
    }
    if (slice_len < 1) throw ContractError("softmax: empty slice in shape " + x->shape_str());
    auto out = Tensor::zeros(x->shape);
    auto fwd = [x, out, n_slices, slice_len, outer_stride, inner_stride] {
        softmax_slices(x->value.data(), out->value.data(), n_slices, slice_len, outer_stride,
                       inner_stride);
    };
    auto bwd = [x, out, n_slices, slice_len, outer_stride, inner_stride] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        softmax_slices_backward(out->value.data(), out->grad.data(), x->grad.data(), n_slices,
                                slice_len, outer_stride, inner_stride);
    };
    return finish("softmax", {x}, out, fwd, bwd);
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    if (a->cols() != b->rows()) {
        throw ShapeError("matmul: inner dimension mismatch " + a->shape_str() + " vs " +
                         b->shape_str());
    }
    const std::int64_t n = a->rows(), k = a->cols(), m = b->cols();
    auto out = Tensor::zeros({n, m});
    auto fwd = [a, b, out, n, k, m] {
        gemm_nn(n, k, m, a->value.data(), b->value.data(), out->value.data(), false);
    };
    auto bwd = [a, b, out, n, k, m] {
        if (a->requires_grad) {
            a->ensure_grad();
            gemm_nt(n, m, k, out->grad.data(), b->value.data(), a->grad.data(), true);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            gemm_tn(k, n, m, a->value.data(), out->grad.data(), b->grad.data(), true);
        }
    };
    return finish("matmul", {a, b}, out, fwd, bwd);
}

TensorPtr matmul_nt(const TensorPtr& a, const TensorPtr& b) {
    require_rank("matmul_nt", a, 2);
    require_rank("matmul_nt", b, 2);
    if (a->cols() != b->cols()) {
        throw ShapeError("matmul_nt: inner dimension mismatch " + a->shape_str() + " vs " +
                         b->shape_str());
    }
    const std::int64_t n = a->rows(), k = a->cols(), m = b->rows();
    auto out = Tensor::zeros({n, m});
    auto fwd = [a, b, out, n, k, m] {
        gemm_nt(n, k, m, a->value.data(), b->value.data(), out->value.data(), false);
    };
    auto bwd = [a, b, out, n, k, m] {
        if (a->requires_grad) {
            a->ensure_grad();
            gemm_nn(n, m, k, out->grad.data(), b->value.data(), a->grad.data(), true);
        }
        if (b->requires_grad) {
            b->ensure_grad();
            gemm_tn(m, n, k, out->grad.data(), a->value.data(), b->grad.data(), true);
        }
    };
    return finish("matmul_nt", {a, b}, out, fwd, bwd);
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no tensors given");
    if (parts[0]->rank() != 2) {
        throw ShapeError("concat_cols: expected rank-2 tensors, got " + parts[0]->shape_str());
    }
    const std::int64_t rows = parts[0]->rows();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->rows() != rows) {
            throw ShapeError("concat_cols: expected rank-2 tensors with " + std::to_string(rows) +
                             " rows, got " + p->shape_str());
        }
        total += p->cols();
    }
    auto out = Tensor::zeros({rows, total});
    auto fwd = [parts, out, rows, total] {
        std::int64_t off = 0;
        for (const auto& p : parts) {
            const std::int64_t w = p->cols();
            for (std::int64_t r = 0; r < rows; ++r)
                std::copy_n(p->value.data() + r * w, w, out->value.data() + r * total + off);
            off += w;
        }
    };
    auto bwd = [parts, out, rows, total] {
        std::int64_t off = 0;
        for (const auto& p : parts) {
            const std::int64_t w = p->cols();
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t c = 0; c < w; ++c)
                        p->grad[r * w + c] += out->grad[r * total + off + c];
            }
            off += w;
        }
    };
    return finish("concat_cols", parts, out, fwd, bwd);
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no tensors given");
    const std::int64_t cols = parts[0]->rank() == 2 ? parts[0]->cols() : -1;
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->cols() != cols) {
            throw ShapeError("concat_rows: expected rank-2 tensors with " + std::to_string(cols) +
                             " cols, got " + p->shape_str());
        }
        total += p->rows();
    }
    auto out = Tensor::zeros({total, cols});
    auto fwd = [parts, out] {
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p->value.begin(), p->value.end(), out->value.begin() + off);
            off += p->value.size();
        }
    };
    auto bwd = [parts, out] {
        std::size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += out->grad[off + i];
            }
            off += p->value.size();
        }
    };
    return finish("concat_rows", parts, out, fwd, bwd);
}

TensorPtr gather_rows(const TensorPtr& x, std::vector<std::int64_t> idx) {
    require_rank("gather_rows", x, 2);
    for (std::int64_t i : idx) {
        if (i < 0 || i >= x->rows()) {
            throw ContractError("gather_rows: index " + std::to_string(i) +
                                " out of range for " + x->shape_str());
        }
    }
    const std::int64_t d = x->cols();
    auto indices = std::make_shared<std::vector<std::int64_t>>(std::move(idx));
    auto out = Tensor::zeros({static_cast<std::int64_t>(indices->size()), d});
    auto fwd = [x, out, indices, d] {
        for (std::size_t r = 0; r < indices->size(); ++r)
            std::copy_n(x->value.data() + (*indices)[r] * d, d, out->value.data() + r * d);
    };
    auto bwd = [x, out, indices, d] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t r = 0; r < indices->size(); ++r) {
            const std::int64_t src = (*indices)[r];
            for (std::int64_t c = 0; c < d; ++c) x->grad[src * d + c] += out->grad[r * d + c];
        }
    };
    return finish("gather_rows", {x}, out, fwd, bwd);
}

TensorPtr rowdot(const TensorPtr& a, const TensorPtr& b) {
    require_rank("rowdot", a, 2);
    require_same_shape("rowdot", a, b);
    const std::int64_t n = a->rows(), d = a->cols();
    auto out = Tensor::zeros({n});
    auto fwd = [a, b, out, n, d] {
        for (std::int64_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::int64_t c = 0; c < d; ++c) acc += a->value[r * d + c] * b->value[r * d + c];
            out->value[r] = acc;
        }
    };
    auto bwd = [a, b, out, n, d] {
        for (std::int64_t r = 0; r < n; ++r) {
            const double g = out->grad[r];
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::int64_t c = 0; c < d; ++c) a->grad[r * d + c] += g * b->value[r * d + c];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t c = 0; c < d; ++c) b->grad[r * d + c] += g * a->value[r * d + c];
            }
        }
    };
    return finish("rowdot", {a, b}, out, fwd, bwd);
}

TensorPtr reshape(const TensorPtr& x, std::vector<std::int64_t> shape) {
    if (shape_size(shape) != x->size()) {
        throw ShapeError("reshape: cannot view " + x->shape_str() + " as " +
                         shape_to_string(shape));
    }
    auto out = Tensor::zeros(shape);
    auto fwd = [x, out] { out->value = x->value; };
    auto bwd = [x, out] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[i];
    };
    return finish("reshape", {x}, out, fwd, bwd);
}

TensorPtr sum_all(const TensorPtr& x) {
    auto out = Tensor::zeros({1});
    auto fwd = [x, out] {
        double acc = 0.0;
        for (double v : x->value) acc += v;
        out->value[0] = acc;
    };
    auto bwd = [x, out] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double g = out->grad[0];
        for (double& gi : x->grad) gi += g;
    };
    return finish("sum_all", {x}, out, fwd, bwd);
}

TensorPtr mean_all(const TensorPtr& x) {
    if (x->size() < 1) throw ContractError("mean_all: empty tensor");
    auto out = Tensor::zeros({1});
    const double inv = 1.0 / static_cast<double>(x->size());
    auto fwd = [x, out, inv] {
        double acc = 0.0;
        for (double v : x->value) acc += v;
        out->value[0] = acc * inv;
    };
    auto bwd = [x, out, inv] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double g = out->grad[0] * inv;
        for (double& gi : x->grad) gi += g;
    };
    return finish("mean_all", {x}, out, fwd, bwd);
}

TensorPtr batch_softmax_xent(const TensorPtr& scores) {
    require_rank("batch_softmax_xent", scores, 2);
    if (scores->rows() != scores->cols()) {
        throw ContractError("batch_softmax_xent: score matrix must be square, got " +
                            scores->shape_str());
    }
    const std::int64_t B = scores->rows();
    if (B < 1) throw ContractError("batch_softmax_xent: empty score matrix");
    auto out = Tensor::zeros({1});
    auto fwd = [scores, out, B] {
        double total = 0.0;
        for (std::int64_t i = 0; i < B; ++i) {
            const double* row = scores->value.data() + i * B;
            double mx = row[0];
            for (std::int64_t j = 1; j < B; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::int64_t j = 0; j < B; ++j) sum += std::exp(row[j] - mx);
            total += std::log(sum) - (row[i] - mx);
        }
        out->value[0] = total / static_cast<double>(B);
    };
    auto bwd = [scores, out, B] {
        if (!scores->requires_grad) return;
        scores->ensure_grad();
        const double g = out->grad[0] / static_cast<double>(B);
        for (std::int64_t i = 0; i < B; ++i) {
            const double* row = scores->value.data() + i * B;
            double mx = row[0];
            for (std::int64_t j = 1; j < B; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::int64_t j = 0; j < B; ++j) sum += std::exp(row[j] - mx);
            for (std::int64_t j = 0; j < B; ++j) {
                const double p = std::exp(row[j] - mx) / sum;
                scores->grad[i * B + j] += g * (p - (i == j ? 1.0 : 0.0));
            }
        }
    };
    return finish("batch_softmax_xent", {scores}, out, fwd, bwd);
}

TensorPtr batch_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     const TensorPtr& running_mean, const TensorPtr& running_var, bool training,
                     bool update_running, double momentum, double eps) {
    require_rank("batch_norm", x, 2);
    const std::int64_t n = x->rows(), d = x->cols();
    if (n < 1) throw ContractError("batch_norm: empty batch");
    auto check_param = [d](const char* name, const TensorPtr& t) {
        if (t->rank() != 1 || t->dim(0) != d) {
            throw ShapeError(std::string("batch_norm: ") + name + " shape " + t->shape_str() +
                             " does not match feature width " + std::to_string(d));
        }
    };
    check_param("gamma", gamma);
    check_param("beta", beta);
    check_param("running_mean", running_mean);
    check_param("running_var", running_var);

    if (training && update_running) {
        // One-time side effect at construction, never replayed.
        const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
        for (std::int64_t c = 0; c < d; ++c) {
            double mean = 0.0;
            for (std::int64_t r = 0; r < n; ++r) mean += x->value[r * d + c];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::int64_t r = 0; r < n; ++r) {
                const double dv = x->value[r * d + c] - mean;
                var += dv * dv;
            }
            var /= static_cast<double>(n);
            running_mean->value[c] = (1.0 - momentum) * running_mean->value[c] + momentum * mean;
            running_var->value[c] =
                (1.0 - momentum) * running_var->value[c] + momentum * var * unbias;
        }
    }

    auto out = Tensor::zeros(x->shape);
    if (training) {
        auto fwd = [x, gamma, beta, out, n, d, eps] {
            for (std::int64_t c = 0; c < d; ++c) {
                double mean = 0.0;
                for (std::int64_t r = 0; r < n; ++r) mean += x->value[r * d + c];
                mean /= static_cast<double>(n);
                double var = 0.0;
                for (std::int64_t r = 0; r < n; ++r) {
                    const double dv = x->value[r * d + c] - mean;
                    var += dv * dv;
                }
                var /= static_cast<double>(n);
                const double rstd = 1.0 / std::sqrt(var + eps);
                for (std::int64_t r = 0; r < n; ++r) {
                    const double xhat = (x->value[r * d + c] - mean) * rstd;
                    out->value[r * d + c] = gamma->value[c] * xhat + beta->value[c];
                }
            }
        };
        auto bwd = [x, gamma, beta, out, n, d, eps] {
            if (x->requires_grad) x->ensure_grad();
            if (gamma->requires_grad) gamma->ensure_grad();
            if (beta->requires_grad) beta->ensure_grad();
            for (std::int64_t c = 0; c < d; ++c) {
                double mean = 0.0;
                for (std::int64_t r = 0; r < n; ++r) mean += x->value[r * d + c];
                mean /= static_cast<double>(n);
                double var = 0.0;
                for (std::int64_t r = 0; r < n; ++r) {
                    const double dv = x->value[r * d + c] - mean;
                    var += dv * dv;
                }
                var /= static_cast<double>(n);
                const double rstd = 1.0 / std::sqrt(var + eps);
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::int64_t r = 0; r < n; ++r) {
                    const double xhat = (x->value[r * d + c] - mean) * rstd;
                    const double g = out->grad[r * d + c];
                    sum_g += g;
                    sum_gx += g * xhat;
                }
                if (gamma->requires_grad) gamma->grad[c] += sum_gx;
                if (beta->requires_grad) beta->grad[c] += sum_g;
                if (x->requires_grad) {
                    const double scale = gamma->value[c] * rstd / static_cast<double>(n);
                    for (std::int64_t r = 0; r < n; ++r) {
                        const double xhat = (x->value[r * d + c] - mean) * rstd;
                        const double g = out->grad[r * d + c];
                        x->grad[r * d + c] +=
                            scale * (static_cast<double>(n) * g - sum_g - xhat * sum_gx);
                    }
                }
            }
        };
        return finish("batch_norm", {x, gamma, beta}, out, fwd, bwd);
    }

    auto fwd = [x, gamma, beta, running_mean, running_var, out, n, d, eps] {
        for (std::int64_t c = 0; c < d; ++c) {
            const double rstd = 1.0 / std::sqrt(running_var->value[c] + eps);
            const double scale = gamma->value[c] * rstd;
            const double shift = beta->value[c] - running_mean->value[c] * scale;
            for (std::int64_t r = 0; r < n; ++r)
                out->value[r * d + c] = scale * x->value[r * d + c] + shift;
        }
    };
    auto bwd = [x, gamma, beta, running_mean, running_var, out, n, d, eps] {
        if (x->requires_grad) x->ensure_grad();
        if (gamma->requires_grad) gamma->ensure_grad();
        if (beta->requires_grad) beta->ensure_grad();
        for (std::int64_t c = 0; c < d; ++c) {
            const double rstd = 1.0 / std::sqrt(running_var->value[c] + eps);
            for (std::int64_t r = 0; r < n; ++r) {
                const double g = out->grad[r * d + c];
                if (x->requires_grad) x->grad[r * d + c] += g * gamma->value[c] * rstd;
                if (gamma->requires_grad)
                    gamma->grad[c] += g * (x->value[r * d + c] - running_mean->value[c]) * rstd;
                if (beta->requires_grad) beta->grad[c] += g;
            }
        }
    };
    return finish("batch_norm", {x, gamma, beta}, out, fwd, bwd);
}

TensorPtr dropout(const TensorPtr& x, double p, Rng* rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ContractError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
    }
    if (rng == nullptr || p == 0.0) return x;  // identity in inference mode and at p = 0
    auto mask = std::make_shared<std::vector<double>>(x->value.size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& m : *mask) m = rng->uniform() >= p ? keep_scale : 0.0;
    auto out = Tensor::zeros(x->shape);
    auto fwd = [x, out, mask] {
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) out->value[i] = x->value[i] * (*mask)[i];
    };
    auto bwd = [x, out, mask] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const std::size_t n = out->value.size();
        for (std::size_t i = 0; i < n; ++i) x->grad[i] += out->grad[i] * (*mask)[i];
    };
    return finish("dropout", {x}, out, fwd, bwd);
}

TensorPtr context_gating(const TensorPtr& x, const TensorPtr& W, const TensorPtr& b) {
    return mul(x, sigmoid(linear(x, W, b)));
}

}  // namespace ops
}  // namespace ccnet
