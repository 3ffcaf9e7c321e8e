#include "flextsf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "flextsf/diag.hpp"

namespace flextsf {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return from_values(shape, std::vector<double>(shape_numel(shape), 0.0),
                       requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    return from_values(shape, std::vector<double>(shape_numel(shape), v),
                       requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("from_values: shape " + shape_str(shape) +
                         " does not match value count " +
                         std::to_string(values.size()));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    n->is_leaf = true;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

std::vector<double>& Tensor::mutable_values() {
    if (!node_->is_leaf)
        throw std::logic_error("mutable_values: only leaf tensors are mutable");
    return node_->value;
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad())
        throw std::logic_error("grad: no gradient recorded for this tensor");
    return node_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

double Tensor::item() const {
    if (size() != 1)
        throw ShapeError("item: tensor has shape " + shape_str(shape()));
    return node_->value[0];
}

Tensor Tensor::detach() const {
    return from_values(node_->shape, node_->value, false);
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->is_leaf = false;
    bool rg = false;
    for (const auto& p : parents) {
        rg = rg || p.requires_grad();
        n->parents.push_back(p.node_ptr());
    }
    n->requires_grad = rg;
    if (rg) n->backprop = std::move(backprop);
    return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// structural ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul: expects 2-D operands, got " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner extents differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));

    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = av[i * k + l];
            if (ail == 0.0) continue;
            const double* brow = bv.data() + l * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
        }

    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return make_op({m, n}, std::move(out), {a, b},
                   [an, bn, m, k, n](detail::Node& self) {
                       const auto& g = self.grad;
                       if (an->requires_grad) {
                           an->ensure_grad();
                           // dA += dC * B^T
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t l = 0; l < k; ++l) {
                                   double acc = 0.0;
                                   const double* grow = g.data() + i * n;
                                   const double* brow = bn->value.data() + l * n;
                                   for (std::size_t j = 0; j < n; ++j)
                                       acc += grow[j] * brow[j];
                                   an->grad[i * k + l] += acc;
                               }
                       }
                       if (bn->requires_grad) {
                           bn->ensure_grad();
                           // dB += A^T * dC
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t l = 0; l < k; ++l) {
                                   const double ail = an->value[i * k + l];
                                   if (ail == 0.0) continue;
                                   const double* grow = g.data() + i * n;
                                   double* brow = bn->grad.data() + l * n;
                                   for (std::size_t j = 0; j < n; ++j)
                                       brow[j] += ail * grow[j];
                               }
                       }
                   });
}

Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2)
        throw ShapeError("transpose: expects 2-D, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    const auto& av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    auto an = a.node_ptr();
    return make_op({n, m}, std::move(out), {a}, [an, m, n](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                an->grad[i * n + j] += self.grad[j * m + i];
    });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t n) {
    if (a.shape().size() != 2)
        throw ShapeError("slice_rows: expects 2-D, got " + shape_str(a.shape()));
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    if (r0 + n > rows)
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," +
                         std::to_string(r0 + n) + ") exceeds " +
                         std::to_string(rows) + " rows");
    std::vector<double> out(a.values().begin() + r0 * cols,
                            a.values().begin() + (r0 + n) * cols);
    auto an = a.node_ptr();
    return make_op({n, cols}, std::move(out), {a},
                   [an, r0, n, cols](detail::Node& self) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (std::size_t i = 0; i < n * cols; ++i)
                           an->grad[r0 * cols + i] += self.grad[i];
                   });
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t n) {
    if (a.shape().size() != 2)
        throw ShapeError("slice_cols: expects 2-D, got " + shape_str(a.shape()));
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    if (c0 + n > cols)
        throw ShapeError("slice_cols: range exceeds " + std::to_string(cols) +
                         " cols");
    std::vector<double> out(rows * n);
    const auto& av = a.values();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * cols + c0 + j];
    auto an = a.node_ptr();
    return make_op({rows, n}, std::move(out), {a},
                   [an, c0, n, rows, cols](detail::Node& self) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                               an->grad[i * cols + c0 + j] += self.grad[i * n + j];
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::size_t cols = parts[0].shape().at(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.shape()[1] != cols)
            throw ShapeError("concat_rows: column extents differ");
        rows += p.shape()[0];
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    for (const auto& p : parts)
        out.insert(out.end(), p.values().begin(), p.values().end());

    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node_ptr());
    return make_op({rows, cols}, std::move(out), parts,
                   [nodes](detail::Node& self) {
                       std::size_t off = 0;
                       for (auto& pn : nodes) {
                           const std::size_t len = pn->value.size();
                           if (pn->requires_grad) {
                               pn->ensure_grad();
                               for (std::size_t i = 0; i < len; ++i)
                                   pn->grad[i] += self.grad[off + i];
                           }
                           off += len;
                       }
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t rows = parts[0].shape().at(0);
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.shape()[0] != rows)
            throw ShapeError("concat_cols: row extents differ");
        cols += p.shape()[1];
    }
    std::vector<double> out(rows * cols);
    std::size_t coff = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.shape()[1];
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < pc; ++j)
                out[i * cols + coff + j] = p.values()[i * pc + j];
        coff += pc;
    }
    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node_ptr());
    return make_op({rows, cols}, std::move(out), parts,
                   [nodes, rows, cols](detail::Node& self) {
                       std::size_t coff = 0;
                       for (auto& pn : nodes) {
                           const std::size_t pc = pn->shape[1];
                           if (pn->requires_grad) {
                               pn->ensure_grad();
                               for (std::size_t i = 0; i < rows; ++i)
                                   for (std::size_t j = 0; j < pc; ++j)
                                       pn->grad[i * pc + j] +=
                                           self.grad[i * cols + coff + j];
                           }
                           coff += pc;
                       }
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
    auto an = a.node_ptr();
    return make_op(std::move(shape), a.values(), {a}, [an](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// broadcast elementwise

namespace {

struct BroadcastPlan {
    Shape out_shape;
    std::vector<std::size_t> out_dims;  // padded extents
    std::vector<std::size_t> stride_a;  // 0 where a is broadcast
    std::vector<std::size_t> stride_b;
    std::size_t numel = 0;
    bool same_shape = false;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    BroadcastPlan p;
    if (a == b) {
        p.out_shape = a;
        p.numel = shape_numel(a);
        p.same_shape = true;
        return p;
    }
    const std::size_t nd = std::max(a.size(), b.size());
    p.out_dims.resize(nd);
    p.stride_a.resize(nd);
    p.stride_b.resize(nd);
    std::vector<std::size_t> da(nd, 1), db(nd, 1);
    for (std::size_t i = 0; i < a.size(); ++i) da[nd - a.size() + i] = a[i];
    for (std::size_t i = 0; i < b.size(); ++i) db[nd - b.size() + i] = b[i];
    for (std::size_t i = 0; i < nd; ++i) {
        if (da[i] != db[i] && da[i] != 1 && db[i] != 1)
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) +
                             " and " + shape_str(b) + " are not broadcastable");
        p.out_dims[i] = std::max(da[i], db[i]);
    }
    // row-major strides, zeroed on broadcast axes
    std::size_t sa = 1, sb = 1;
    for (std::size_t i = nd; i-- > 0;) {
        p.stride_a[i] = (da[i] == 1) ? 0 : sa;
        p.stride_b[i] = (db[i] == 1) ? 0 : sb;
        sa *= da[i];
        sb *= db[i];
    }
    p.out_shape = p.out_dims;
    p.numel = shape_numel(p.out_dims);
    return p;
}

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* opname, Fwd fwd,
                 BwdA dfdav, BwdB dfdbv) {
    BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), opname);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(plan.numel);

    std::vector<std::size_t> ia(plan.numel), ib(plan.numel);
    if (plan.same_shape) {
        for (std::size_t i = 0; i < plan.numel; ++i) {
            ia[i] = i;
            ib[i] = i;
            out[i] = fwd(av[i], bv[i]);
        }
    } else {
        const std::size_t nd = plan.out_dims.size();
        std::vector<std::size_t> idx(nd, 0);
        for (std::size_t i = 0; i < plan.numel; ++i) {
            std::size_t oa = 0, ob = 0;
            for (std::size_t d = 0; d < nd; ++d) {
                oa += idx[d] * plan.stride_a[d];
                ob += idx[d] * plan.stride_b[d];
            }
            ia[i] = oa;
            ib[i] = ob;
            out[i] = fwd(av[oa], bv[ob]);
            for (std::size_t d = nd; d-- > 0;) {
                if (++idx[d] < plan.out_dims[d]) break;
                idx[d] = 0;
            }
        }
    }

    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return make_op(
        std::move(plan.out_shape), std::move(out), {a, b},
        [an, bn, ia = std::move(ia), ib = std::move(ib), dfdav,
         dfdbv](detail::Node& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    an->grad[ia[i]] +=
                        self.grad[i] * dfdav(an->value[ia[i]], bn->value[ib[i]]);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[ib[i]] +=
                        self.grad[i] * dfdbv(an->value[ia[i]], bn->value[ib[i]]);
            }
        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "div",
        [](double x, double y) {
            if (y == 0.0) diag::counters().elementwise_pole_hits += 1;
            return x / y;
        },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (double& v : out) v += s;
    auto an = a.node_ptr();
    return make_op(a.shape(), std::move(out), {a}, [an](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i];
    });
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (double& v : out) v *= s;
    auto an = a.node_ptr();
    return make_op(a.shape(), std::move(out), {a}, [an, s](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += s * self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// elementwise unary

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dfdx) {
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    auto an = a.node_ptr();
    return make_op(a.shape(), std::move(out), {a},
                   [an, dfdx](detail::Node& self) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                           an->grad[i] +=
                               self.grad[i] * dfdx(an->value[i], self.value[i]);
                   });
}

}  // namespace

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a,
        [](double x) {
            if (x <= 0.0) diag::counters().elementwise_pole_hits += 1;
            return std::log(x);
        },
        [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor square(const Tensor& a) {
    return unary_op(
        a, [](double x) { return x * x; },
        [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

Tensor softplus(const Tensor& a) {
    return unary_op(
        a,
        [](double x) {
            if (x > 30.0) return x;
            if (x < -30.0) return std::exp(x);
            return std::log1p(std::exp(x));
        },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor clamp_min(const Tensor& a, double lo) {
    return unary_op(
        a, [lo](double x) { return x < lo ? lo : x; },
        [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto an = a.node_ptr();
    return make_op({1}, {s}, {a}, [an](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (double& g : an->grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto an = a.node_ptr();
    return make_op({1}, {s * inv}, {a}, [an, inv](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (double& g : an->grad) g += self.grad[0] * inv;
    });
}

Tensor mean_lastdim(const Tensor& a) {
    if (a.shape().size() != 2)
        throw ShapeError("mean_lastdim: expects 2-D, got " +
                         shape_str(a.shape()));
    const std::size_t n = a.shape()[0], d = a.shape()[1];
    const double inv = 1.0 / static_cast<double>(d);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += a.values()[i * d + j];
        out[i] = s * inv;
    }
    auto an = a.node_ptr();
    return make_op({n, 1}, std::move(out), {a},
                   [an, n, d, inv](detail::Node& self) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j)
                               an->grad[i * d + j] += self.grad[i] * inv;
                   });
}

Tensor softmax_lastdim(const Tensor& a) {
    if (a.shape().empty())
        throw ShapeError("softmax_lastdim: scalar input");
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.size() / d;
    std::vector<double> out(a.size());
    const auto& av = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * d;
        double* y = out.data() + r * d;
        double mx = x[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        const double inv = 1.0 / z;
        for (std::size_t j = 0; j < d; ++j) y[j] *= inv;
    }
    auto an = a.node_ptr();
    return make_op(a.shape(), std::move(out), {a},
                   [an, rows, d](detail::Node& self) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r) {
                           const double* y = self.value.data() + r * d;
                           const double* gy = self.grad.data() + r * d;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
                           for (std::size_t j = 0; j < d; ++j)
                               an->grad[r * d + j] += y[j] * (gy[j] - dot);
                       }
                   });
}

Tensor rotary_rows(const Tensor& x, const std::vector<double>& taus,
                   const std::vector<double>& thetas) {
    if (x.shape().size() != 2)
        throw ShapeError("rotary_rows: expects 2-D, got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    if (d % 2 != 0) throw ShapeError("rotary_rows: head dim must be even");
    if (taus.size() != n)
        throw ShapeError("rotary_rows: tau count != row count");
    if (thetas.size() != d / 2)
        throw ShapeError("rotary_rows: theta count != pair count");

    // precompute row x pair rotations, reused by the backward pass
    auto cs = std::make_shared<std::vector<double>>(n * d);  // cos,sin pairs
    std::vector<double> out(n * d);
    const auto& xv = x.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d / 2; ++j) {
            const double ang = taus[i] * thetas[j];
            const double c = std::cos(ang), s = std::sin(ang);
            (*cs)[i * d + 2 * j] = c;
            (*cs)[i * d + 2 * j + 1] = s;
            const double x0 = xv[i * d + 2 * j], x1 = xv[i * d + 2 * j + 1];
            out[i * d + 2 * j] = c * x0 - s * x1;
            out[i * d + 2 * j + 1] = s * x0 + c * x1;
        }
    auto xn = x.node_ptr();
    return make_op(x.shape(), std::move(out), {x},
                   [xn, cs, n, d](detail::Node& self) {
                       if (!xn->requires_grad) return;
                       xn->ensure_grad();
                       // adjoint of a rotation is the inverse rotation
                       for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d / 2; ++j) {
                               const double c = (*cs)[i * d + 2 * j];
                               const double s = (*cs)[i * d + 2 * j + 1];
                               const double g0 = self.grad[i * d + 2 * j];
                               const double g1 = self.grad[i * d + 2 * j + 1];
                               xn->grad[i * d + 2 * j] += c * g0 + s * g1;
                               xn->grad[i * d + 2 * j + 1] += -s * g0 + c * g1;
                           }
                   });
}

// ---------------------------------------------------------------------------
// backward

void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw ShapeError("backward: loss must be scalar, got " +
                         shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // iterative post-order DFS over parents
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // reset non-leaf grads so repeated calls add exactly one unit of seed
    for (detail::Node* n : order)
        if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
    for (detail::Node* n : order)
        if (n->is_leaf) n->ensure_grad();

    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

}  // namespace flextsf
