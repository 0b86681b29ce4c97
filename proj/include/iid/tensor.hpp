#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace iid {

// Division floor shared by the element-wise division layer and the network
// head: denominators are clamped to this value so albedo and its gradients
// stay bounded when shading approaches zero.
inline constexpr double kDivFloor = 1e-3;

namespace detail {

template <typename T>
struct Node {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // sized lazily, same length as data once present
    bool requires_grad = false;
    std::function<void()> backward_fn;  // empty for leaves
    std::vector<std::shared_ptr<Node>> parents;

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

}  // namespace detail

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

// Thread-local switch: when disabled, ops do not record the graph.
class GradMode {
  public:
    static bool enabled() { return flag(); }
    static void set_enabled(bool on) { flag() = on; }

  private:
    static bool& flag() {
        thread_local bool f = true;
        return f;
    }
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// N-dimensional tensor handle. Copies share the underlying node, like the
// usual autograd frameworks; ops build a reverse-mode graph while GradMode is
// enabled. A graph must stay confined to one thread for its lifetime.
template <typename T>
class Tensor {
  public:
    using Node = detail::Node<T>;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }
    static Tensor filled(std::vector<int> shape, T value, bool requires_grad = false) {
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data.assign(static_cast<size_t>(t.node_->numel()), value);
        t.node_->requires_grad = requires_grad;
        return t;
    }
    static Tensor from_data(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        if (static_cast<std::int64_t>(data.size()) != n)
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }
    static Tensor scalar(T value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t numel() const { return node_->numel(); }

    std::vector<T>& data() { return node_->data; }
    const std::vector<T>& data() const { return node_->data; }
    T item() const {
        if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return node_->grad.size() == node_->data.size(); }
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const { return node_->grad; }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }
    void drop_grad() { node_->grad.clear(); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    // Builds a non-leaf tensor and wires the backward closure. The closure
    // receives the raw output node; it must read out->grad and accumulate
    // into the parents' grad buffers.
    template <typename Fn>
    static Tensor make_op(std::vector<int> shape, std::vector<T> data,
                          std::vector<Tensor> parents, Fn&& backward) {
        Tensor out = from_data(std::move(shape), std::move(data));
        if (!GradMode::enabled()) return out;
        bool needs = false;
        for (const Tensor& p : parents) needs = needs || p.requires_grad();
        if (!needs) return out;
        out.node_->requires_grad = true;
        for (const Tensor& p : parents) out.node_->parents.push_back(p.node_);
        out.node_->backward_fn = [self = out.node_.get(), fn = std::forward<Fn>(backward)]() { fn(self); };
        return out;
    }

    bool all_finite() const {
        for (T v : node_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

  private:
    std::shared_ptr<Node> node_;
};

// Reverse-mode sweep from a scalar loss. Every tensor with requires_grad that
// is reachable from the loss gets its grad populated; gradients of tensors
// used several times accumulate by summation.
template <typename T>
inline void backward(Tensor<T> loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    using Node = detail::Node<T>;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.grad().assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn();
    }
}

}  // namespace iid
