#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/tensor.hpp"

namespace crossview {

namespace detail {
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}
} // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// RAII switch: ops executed inside the guard compute values only and record
// nothing on the tape.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;

    bool is_leaf() const { return !backward_fn && parents.empty(); }

    // Zero-initialized on first touch; leaves without gradient flow never allocate.
    Tensor<T>& grad_acc() {
        if (!has_grad) {
            grad = Tensor<T>(value.shape());
            has_grad = true;
        }
        return grad;
    }
};

// Shared handle to a tape node. Copies alias the same storage, so parameters
// can be held by the model, the optimizer, and the tape at once.
template <typename T>
class Var {
public:
    Var() = default;

    static Var leaf(Tensor<T> value, bool requires_grad = false) {
        Var v;
        v.n_ = std::make_shared<Node<T>>();
        v.n_->value = std::move(value);
        v.n_->requires_grad = requires_grad;
        return v;
    }

    // Op result: records parents and a backward rule only when grad mode is on
    // and some input wants gradients.
    static Var op(Tensor<T> value, std::initializer_list<Var> inputs,
                  const std::function<void(Node<T>*)>& make_backward) {
        Var out = leaf(std::move(value), false);
        if (!grad_enabled()) return out;
        bool wants = false;
        for (const Var& in : inputs) wants = wants || in.requires_grad();
        if (!wants) return out;
        out.n_->requires_grad = true;
        for (const Var& in : inputs) out.n_->parents.push_back(in.n_);
        make_backward(out.n_.get());
        return out;
    }

    bool defined() const { return n_ != nullptr; }
    const Tensor<T>& value() const { return n_->value; }
    Tensor<T>& value() { return n_->value; }
    const Shape& shape() const { return n_->value.shape(); }
    std::size_t size() const { return n_->value.size(); }

    bool requires_grad() const { return n_ && n_->requires_grad; }
    bool has_grad() const { return n_ && n_->has_grad; }
    const Tensor<T>& grad() const {
        if (!has_grad()) throw UsageError("grad: no gradient present; run backward first");
        return n_->grad;
    }
    void clear_grad() {
        if (!n_) return;
        n_->grad = Tensor<T>();
        n_->has_grad = false;
    }

    Node<T>* node() const { return n_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return n_; }

private:
    std::shared_ptr<Node<T>> n_;
};

// Reverse pass. The tape is the list of recorded operations reachable from the
// loss, ordered so every operation's inputs precede it; it is walked once in
// reverse and then consumed (backward rules and parent links are dropped).
template <typename T>
void backward(const Var<T>& loss) {
    if (!loss.defined()) throw UsageError("backward: undefined variable");
    Node<T>* root = loss.node();
    if (root->value.size() != 1) {
        throw UsageError("backward: loss must be a scalar, got shape " + shape_str(root->value.shape()));
    }
    if (root->consumed) throw UsageError("backward: tape already consumed");
    if (!root->requires_grad) {
        throw UsageError("backward: loss does not depend on any gradient-tracked input");
    }

    // Iterative post-order DFS over grad-requiring parents.
    std::vector<Node<T>*> tape;
    std::unordered_set<Node<T>*> done;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (done.count(node)) {
            stack.pop_back();
            continue;
        }
        bool descended = false;
        while (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && !done.count(p)) {
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (descended) continue;
        done.insert(node);
        tape.push_back(node);
        stack.pop_back();
    }

    root->grad_acc()[0] = T(1);
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && n->has_grad) n->backward_fn();
    }
    for (Node<T>* n : tape) {
        if (!n->is_leaf()) {
            n->backward_fn = nullptr;
            n->parents.clear();
            n->consumed = true;
        }
    }
}

} // namespace crossview
