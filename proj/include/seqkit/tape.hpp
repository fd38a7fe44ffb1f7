#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "seqkit/tensor.hpp"

namespace seqkit {

template <typename S>
class Tape;
template <typename S>
class TapeScope;

// One value in a computation. Leaves carry parameters or inputs; interior
// nodes are produced by ops and remember how to push gradients backward.
template <typename S>
struct VarNode {
    explicit VarNode(Tensor<S> v) : value(std::move(v)) {}

    Tensor<S> value;
    bool requires_grad = false;
    std::vector<std::shared_ptr<VarNode>> inputs;
    std::function<void(VarNode&)> backward_fn;
    std::unique_ptr<Tensor<S>> grad;

    // Zero-initialized gradient accumulator matching the value's shape.
    Tensor<S>& grad_buffer() {
        if (!grad) grad = std::make_unique<Tensor<S>>(Tensor<S>::zeros(value.shape()));
        return *grad;
    }

    void accumulate(const Tensor<S>& delta) {
        if (!delta.same_shape(value))
            throw ShapeError("gradient shape " + shape_str(delta.shape()) +
                             " does not match value shape " + shape_str(value.shape()));
        grad_buffer().mutable_arr() += delta.arr();
    }

    void clear_grad() { grad.reset(); }
};

template <typename S>
using Var = std::shared_ptr<VarNode<S>>;

template <typename S>
Var<S> make_leaf(Tensor<S> value, bool requires_grad = false) {
    auto n = std::make_shared<VarNode<S>>(std::move(value));
    n->requires_grad = requires_grad;
    return n;
}

template <typename S>
Var<S> make_param(Tensor<S> value) {
    return make_leaf(std::move(value), true);
}

// Ordered record of ops. Backward replays the record in exact reverse order
// of forward execution. Ops register themselves on the current thread's tape.
template <typename S>
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return current_; }
    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    void push(Var<S> node) { nodes_.push_back(std::move(node)); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<Var<S>>& nodes() const { return nodes_; }

    // Seeds d(output)/d(output) = 1 and accumulates gradients into every
    // recorded node and reachable leaf. Output must be a single element.
    void backward(const Var<S>& output) {
        if (!output) throw ValueError("backward on null var");
        if (output->value.numel() != 1)
            throw ValueError("backward needs a scalar output, got shape " +
                             shape_str(output->value.shape()));
        if (!output->requires_grad)
            throw ValueError("backward output does not depend on any gradient-tracked leaf");
        output->accumulate(Tensor<S>::fill(output->value.shape(), S(1)));
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            VarNode<S>& n = **it;
            if (n.backward_fn && n.grad) n.backward_fn(n);
        }
    }

  private:
    friend class TapeScope<S>;
    static inline thread_local Tape* current_ = nullptr;

    bool recording_ = true;
    std::vector<Var<S>> nodes_;
};

// RAII binding of a tape to the current thread.
template <typename S>
class TapeScope {
  public:
    explicit TapeScope(Tape<S>& t) : prev_(Tape<S>::current_) { Tape<S>::current_ = &t; }
    ~TapeScope() { Tape<S>::current_ = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape<S>* prev_;
};

// Creates an op result. Recorded (with inputs and a backward rule) only when a
// recording tape is current and some input is gradient-tracked; otherwise the
// result is a detached value and upstream temporaries can be freed.
template <typename S>
Var<S> emit(Tensor<S> value, std::vector<Var<S>> inputs,
            std::function<void(VarNode<S>&)> backward_fn) {
    auto node = std::make_shared<VarNode<S>>(std::move(value));
    Tape<S>* t = Tape<S>::current();
    bool tracked = false;
    for (const auto& in : inputs)
        if (in->requires_grad) tracked = true;
    if (t && t->recording() && tracked) {
        node->requires_grad = true;
        node->inputs = std::move(inputs);
        node->backward_fn = std::move(backward_fn);
        t->push(node);
    }
    return node;
}

}  // namespace seqkit
