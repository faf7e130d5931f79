#pragma once

// Tape-based reverse-mode differentiation.
//
// A Tape records every operation in execution order. Each recorded node owns
// its forward value and, when any input requires a gradient, a closure that
// pushes the incoming gradient to its inputs. backward() walks the nodes once
// in reverse and hands back gradients for the requires-grad leaves only.
//
// Var is a cheap handle (tape pointer, node index, tape generation). Using a
// Var after Tape::reset() throws StaleTapeError.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "safsar/numerics/ops.hpp"
#include "safsar/numerics/tensor.hpp"

namespace safsar {

template <typename T>
class Tape;

template <typename T>
class Var {
public:
    Var() = default;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    Tape<T>& tape() const;
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape<T>;
    Var(Tape<T>* tape, std::size_t id, std::uint64_t generation)
        : tape_(tape), id_(id), generation_(generation) {}

    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
    std::uint64_t generation_ = 0;
};

/// Gradients of requires-grad leaves, keyed by the leaf Var.
template <typename T>
class Gradients {
public:
    const Tensor<T>* find(const Var<T>& leaf) const {
        auto it = by_id_.find(leaf.id());
        return it == by_id_.end() ? nullptr : &it->second;
    }
    bool contains(const Var<T>& leaf) const { return find(leaf) != nullptr; }
    const Tensor<T>& at(const Var<T>& leaf) const {
        if (const auto* g = find(leaf)) return *g;
        throw ContractError("no gradient recorded for requested leaf");
    }
    std::size_t size() const noexcept { return by_id_.size(); }

private:
    friend class Tape<T>;
    std::unordered_map<std::size_t, Tensor<T>> by_id_;
};

template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
        nodes_.push_back(Node{std::move(value), requires_grad, true, {}});
        return Var<T>(this, nodes_.size() - 1, generation_);
    }

    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

    /// Records a derived node. The closure is kept only if some input requires a gradient.
    Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
        return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                      std::move(fn));
    }

    Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
        bool needs = false;
        for (const auto& v : inputs) {
            check(v);
            needs = needs || nodes_[v.id_].requires_grad;
        }
        nodes_.push_back(Node{std::move(value), needs, false, needs ? std::move(fn) : BackwardFn{}});
        return Var<T>(this, nodes_.size() - 1, generation_);
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate across fan-out.
    Gradients<T> backward(const Var<T>& loss);

    /// Drops every node; outstanding Vars become stale.
    void reset() {
        nodes_.clear();
        grads_.clear();
        ++generation_;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient accumulator for node `id`, zero-initialized on first use. Only
    /// valid inside backward closures, and only for requires-grad nodes.
    Tensor<T>& grad_ref(std::size_t id) {
        Tensor<T>& g = grads_[id];
        if (g.empty()) g = Tensor<T>(nodes_[id].value.shape());
        return g;
    }

    void check(const Var<T>& v) const {
        if (v.tape_ != this) throw ContractError("Var belongs to a different tape");
        if (v.generation_ != generation_ || v.id_ >= nodes_.size()) {
            throw StaleTapeError("Var used after its tape was reset");
        }
    }

private:
    struct Node {
        Tensor<T> value;
        bool requires_grad = false;
        bool is_leaf = false;
        BackwardFn backward;
    };

    // deque keeps references to node values stable while recording
    std::deque<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    std::uint64_t generation_ = 1;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    if (!tape_) throw ContractError("value() on an unbound Var");
    tape_->check(*this);
    return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
    if (!tape_) return false;
    tape_->check(*this);
    return tape_->requires_grad(id_);
}

template <typename T>
Tape<T>& Var<T>::tape() const {
    if (!tape_) throw ContractError("tape() on an unbound Var");
    return *tape_;
}

template <typename T>
Gradients<T> Tape<T>::backward(const Var<T>& loss) {
    check(loss);
    const auto& lv = nodes_[loss.id_].value;
    if (lv.size() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " + shape_str(lv.shape()));
    }
    grads_.assign(nodes_.size(), Tensor<T>{});
    Gradients<T> out;
    if (!nodes_[loss.id_].requires_grad) return out;
    grads_[loss.id_] = Tensor<T>(lv.shape(), T{1});
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (grads_[i].empty() || !node.backward) continue;
        node.backward(*this, grads_[i]);
    }
    for (std::size_t i = 0; i <= loss.id_; ++i) {
        if (nodes_[i].is_leaf && nodes_[i].requires_grad && !grads_[i].empty()) {
            out.by_id_.emplace(i, std::move(grads_[i]));
        }
    }
    grads_.clear();
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable operations. All operands must live on the same tape.

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// a * b^T
template <typename T> Var<T> matmul_nt(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
/// Elementwise product. A size-1 operand broadcasts.
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
/// x (rows x n) + bias (n), bias broadcast over rows.
template <typename T> Var<T> add_row(const Var<T>& x, const Var<T>& bias);
/// Sum of all entries, shape {1}.
template <typename T> Var<T> sum(const Var<T>& a);
/// Column means of a matrix, shape {cols}.
template <typename T> Var<T> mean_rows(const Var<T>& a);
/// Rows [start, start + count) of a matrix.
template <typename T> Var<T> slice_rows(const Var<T>& a, std::size_t start, std::size_t count);
/// Single row as a rank-1 tensor.
template <typename T> Var<T> row(const Var<T>& a, std::size_t r);
/// Columns [start, start + count) of a matrix.
template <typename T> Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count);
/// Vertical concatenation; rank-1 parts count as one row.
template <typename T> Var<T> concat_rows(std::span<const Var<T>> parts);
/// Horizontal concatenation of matrices with equal row counts.
template <typename T> Var<T> concat_cols(std::span<const Var<T>> parts);
/// Stacks size-1 tensors into a vector.
template <typename T> Var<T> stack_scalars(std::span<const Var<T>> parts);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
/// Rows of `table` selected by `ids`, shape {ids.size(), cols}.
template <typename T> Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids);
/// Entry at flat index i, shape {1}.
template <typename T> Var<T> pick(const Var<T>& a, std::size_t i);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> softmax(const Var<T>& v);
template <typename T> Var<T> log_softmax(const Var<T>& v);
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                  T eps = static_cast<T>(kLayerNormEps));
template <typename T> Var<T> gelu(const Var<T>& a);
template <typename T> Var<T> dot(const Var<T>& a, const Var<T>& b);
/// <a,b> / (|a| |b|); throws DegenerateVectorError when either norm is below 1e-12.
template <typename T> Var<T> cosine(const Var<T>& a, const Var<T>& b);
/// -log softmax(logits)[target], shape {1}.
template <typename T> Var<T> cross_entropy(const Var<T>& logits, std::size_t target);

template <typename T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
    return concat_rows(std::span<const Var<T>>(parts.begin(), parts.size()));
}

}  // namespace safsar
