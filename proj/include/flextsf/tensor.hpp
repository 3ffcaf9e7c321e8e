#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace flextsf {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first use, same length as value
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    // accumulates d(loss)/d(parent) into parents' grads, given this->grad
    std::function<void(Node&)> backprop;
    std::string name;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense 64-bit float array participating in a reverse-mode gradient graph.
// Copying a Tensor copies the handle, not the data; each op allocates a new
// node, so the tape is rebuilt every forward pass.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.at(1); }

    const std::vector<double>& values() const { return node_->value; }
    // leaf tensors only; graph nodes are immutable once built
    std::vector<double>& mutable_values();

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    const std::vector<double>& grad() const;
    std::vector<double>& mutable_grad();
    void zero_grad();

    double item() const;
    const std::string& name() const { return node_->name; }
    void set_name(std::string n) { node_->name = std::move(n); }

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    Tensor detach() const;  // same values, no graph, no grad requirement

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(detail::Node&)> backprop);
};

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop);

// ---- structural ops ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // 2-D
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t n);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t n);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& a, Shape shape);

// ---- broadcast elementwise (numpy-style, right-aligned) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---- elementwise unary ----
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor softplus(const Tensor& a);  // log(1 + e^x), stable
Tensor clamp_min(const Tensor& a, double lo);  // zero gradient where clamped

// ---- reductions / normalizers ----
Tensor sum(const Tensor& a);   // -> shape {1}
Tensor mean(const Tensor& a);  // -> shape {1}
Tensor mean_lastdim(const Tensor& a);  // (n, d) -> (n, 1)
Tensor softmax_lastdim(const Tensor& a);

// rotate consecutive value pairs of each row i by angle tau[i] * theta[j];
// taus/thetas are data, not differentiated
Tensor rotary_rows(const Tensor& x, const std::vector<double>& taus,
                   const std::vector<double>& thetas);

// Reverse pass from a scalar loss. Non-leaf grads are reset first, so
// calling backward on two graphs sharing leaves accumulates into the leaves.
void backward(const Tensor& loss);

}  // namespace flextsf
