#pragma once

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "safsar/numerics/autograd.hpp"
#include "safsar/numerics/rng.hpp"

namespace safsar {

/// Named parameter tensors in insertion order. Names are dotted paths whose
/// first component is the owning module ("video", "text", "fusion", "tlm", "head").
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        bool frozen = false;
    };

    Tensor<T>& add(std::string name, Tensor<T> value, bool frozen = false) {
        if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
        index_.emplace(name, entries_.size());
        entries_.push_back(Entry{std::move(name), std::move(value), frozen});
        return entries_.back().value;
    }

    bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

    const Entry& entry(std::string_view name) const { return entries_[find(name)]; }
    Entry& entry(std::string_view name) { return entries_[find(name)]; }
    const Tensor<T>& at(std::string_view name) const { return entry(name).value; }
    Tensor<T>& at(std::string_view name) { return entry(name).value; }

    void set_frozen(std::string_view name, bool frozen) { entry(name).frozen = frozen; }

    /// Sets the frozen flag on every parameter whose name starts with `prefix`.
    std::size_t set_frozen_prefix(std::string_view prefix, bool frozen) {
        std::size_t n = 0;
        for (auto& e : entries_) {
            if (std::string_view(e.name).starts_with(prefix)) {
                e.frozen = frozen;
                ++n;
            }
        }
        return n;
    }

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::vector<Entry>& entries() noexcept { return entries_; }
    std::size_t count() const noexcept { return entries_.size(); }

    /// Total scalar count, optionally restricted to a module prefix.
    std::size_t scalar_count(std::string_view prefix = {}) const {
        std::size_t n = 0;
        for (const auto& e : entries_) {
            if (std::string_view(e.name).starts_with(prefix)) n += e.value.size();
        }
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.frozen);
        return out;
    }

private:
    std::size_t find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw ContractError("unknown parameter '" + std::string(name) + "'");
        return it->second;
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Module name of a parameter: the text before the first '.'.
inline std::string_view param_module(std::string_view name) {
    return name.substr(0, name.find('.'));
}

/// Lazily exposes store parameters as tape leaves. Frozen parameters become
/// constants; with `track_grads == false` everything does (inference).
template <typename T>
class ParamBinding {
public:
    ParamBinding(Tape<T>& tape, const ParamStore<T>& store, bool track_grads = true)
        : tape_(&tape), store_(&store), track_grads_(track_grads) {}

    Var<T> operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        const auto& e = store_->entry(name);
        Var<T> v = tape_->leaf(e.value, track_grads_ && !e.frozen);
        bound_.emplace(name, v);
        return v;
    }

    Tape<T>& tape() const noexcept { return *tape_; }
    const ParamStore<T>& store() const noexcept { return *store_; }

    /// name -> gradient, for every bound parameter that received one.
    std::map<std::string, Tensor<T>> gradients(const Gradients<T>& grads) const {
        std::map<std::string, Tensor<T>> out;
        for (const auto& [name, var] : bound_) {
            if (const auto* g = grads.find(var)) out.emplace(name, *g);
        }
        return out;
    }

private:
    Tape<T>* tape_;
    const ParamStore<T>* store_;
    bool track_grads_;
    std::unordered_map<std::string, Var<T>> bound_;
};

/// Glorot-uniform matrix (fan_in x fan_out), seeded from (seed, name).
template <typename T>
Tensor<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
                         std::string_view name) {
    Rng rng(derive_seed(seed, name));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> w({fan_in, fan_out});
    for (auto& e : w.values()) e = static_cast<T>(uniform(rng, -limit, limit));
    return w;
}

}  // namespace safsar
