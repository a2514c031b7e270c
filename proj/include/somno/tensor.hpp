#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "somno/errors.hpp"

namespace somno {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (std::int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad; // sized lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop; // pushes this->grad into parents

    bool is_leaf() const { return parents.empty(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

/// While a guard is alive, operators compute values only: no graph is
/// recorded and nothing requires grad downstream.
class NoGradGuard {
public:
    NoGradGuard() { ++depth(); }
    ~NoGradGuard() { --depth(); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
    static bool active() { return depth() > 0; }

private:
    static int& depth() {
        thread_local int d = 0;
        return d;
    }
};

inline bool grad_enabled() { return !NoGradGuard::active(); }

/// Shared handle to a node in the autodiff graph. Copies alias the same
/// storage; operators in ops.hpp build new nodes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : node_(std::make_shared<TensorNode>()) {
        validate_shape(shape);
        node_->shape = std::move(shape);
        node_->value.assign(static_cast<std::size_t>(shape_numel(node_->shape)), fill);
    }
    Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<TensorNode>()) {
        validate_shape(shape);
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("tensor: data length does not match shape " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->value = std::move(data);
    }
    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return req()->shape; }
    int rank() const { return static_cast<int>(req()->shape.size()); }
    std::int64_t dim(int i) const { return req()->shape[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(req()->value.size()); }

    std::vector<double>& data() { return req()->value; }
    const std::vector<double>& data() const { return req()->value; }
    std::vector<double>& grad() {
        req()->ensure_grad();
        return req()->grad;
    }
    const std::vector<double>& grad() const {
        req()->ensure_grad();
        return req()->grad;
    }

    bool requires_grad() const { return req()->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        req()->requires_grad = v;
        return *this;
    }

    double item() const {
        if (numel() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
        return req()->value[0];
    }

    void zero_grad() {
        req()->grad.assign(req()->value.size(), 0.0);
    }

    /// Reverse-mode sweep from a scalar root. Leaf gradients accumulate
    /// across calls; interior gradients are reset per sweep.
    void backward() const {
        if (numel() != 1) throw ShapeError("backward: loss must be scalar");
        TensorNode* root = req().get();
        if (!root->requires_grad)
            return; // fully detached graph: nothing to populate

        // iterative post-order DFS over parent edges
        std::vector<TensorNode*> order;
        std::unordered_set<TensorNode*> seen;
        std::vector<std::pair<TensorNode*, std::size_t>> stack;
        stack.emplace_back(root, 0);
        seen.insert(root);
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                TensorNode* p = node->parents[idx++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        for (TensorNode* n : order) {
            if (n->is_leaf())
                n->ensure_grad(); // keep accumulated leaf grads
            else
                n->grad.assign(n->value.size(), 0.0);
        }
        root->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backprop) (*it)->backprop(**it);
    }

    std::shared_ptr<TensorNode>& handle() { return req_mut(); }
    const std::shared_ptr<TensorNode>& handle() const { return req(); }

private:
    static void validate_shape(const Shape& s) {
        for (std::int64_t d : s)
            if (d <= 0) throw ShapeError("tensor: non-positive dimension in shape " + shape_str(s));
    }
    const std::shared_ptr<TensorNode>& req() const {
        if (!node_) throw ShapeError("tensor: undefined handle");
        return node_;
    }
    std::shared_ptr<TensorNode>& req_mut() {
        if (!node_) throw ShapeError("tensor: undefined handle");
        return node_;
    }
    std::shared_ptr<TensorNode> node_;
};

/// Named trainable tensor.
struct Parameter {
    std::string name;
    Tensor tensor;
};

namespace detail {

/// Builds the result node of an operator: wires parents and the backward
/// closure only when grad recording is on and some input needs it.
inline Tensor make_op_result(Shape shape, std::vector<double> value,
                             std::vector<Tensor> inputs,
                             std::function<void(TensorNode&)> backprop) {
    Tensor out(std::move(shape), std::move(value));
    bool needs = false;
    if (grad_enabled())
        for (const Tensor& t : inputs)
            if (t.requires_grad()) {
                needs = true;
                break;
            }
    if (needs) {
        out.set_requires_grad(true);
        auto& node = *out.handle();
        node.parents.reserve(inputs.size());
        for (Tensor& t : inputs) node.parents.push_back(t.handle());
        node.backprop = std::move(backprop);
    }
    return out;
}

} // namespace detail

} // namespace somno
