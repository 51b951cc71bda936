#pragma once

// Parameter storage and the dual plain/traced evaluation contexts that let
// every network define its forward pass once.

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deskdrive/autodiff.hpp"
#include "deskdrive/tensor.hpp"

namespace deskdrive {

// Named parameters in a stable (insertion) order so seeded initialization,
// checkpointing and gradient reduction are all deterministic.
class ParamStore {
public:
    Tensor& add(const std::string& name, Shape shape) {
        require(index_.find(name) == index_.end(), "duplicate parameter " + name);
        index_[name] = items_.size();
        items_.emplace_back(name, Tensor(std::move(shape)));
        return items_.back().second;
    }

    Tensor& get(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter " + name);
        return items_[it->second].second;
    }
    const Tensor& get(const std::string& name) const {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter " + name);
        return items_[it->second].second;
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& [k, v] : items_) n += v.numel();
        return n;
    }

    // uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]; fan_in derived per shape
    void init_uniform(Rng& rng) {
        for (auto& [name, t] : items_) {
            std::size_t fan_in = 1;
            if (t.rank() == 2) fan_in = t.cols();
            else if (t.rank() == 4) fan_in = t.shape[1] * t.shape[2] * t.shape[3];
            else if (t.rank() == 1) { continue; }  // biases start at zero
            const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
            for (double& v : t.data) v = rng.uniform(-a, a);
        }
    }

    // FNV-1a over raw bytes; used to prove frozen modules stay frozen
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) { h ^= b[i]; h *= 1099511628211ull; }
        };
        for (const auto& [name, t] : items_) {
            mix(name.data(), name.size());
            mix(t.data.data(), t.data.size() * sizeof(double));
        }
        return h;
    }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Untraced evaluation: params fetched by value, all ops are the plain kernels.
struct PlainCtx {
    using V = Tensor;
    const ParamStore* ps;
    bool trainable_only = false;  // unused in plain mode, mirrors TraceCtx

    explicit PlainCtx(const ParamStore& p) : ps(&p) {}
    V param(const std::string& name) { return ps->get(name); }
    V value(const Tensor& t) { return t; }
};

// Traced evaluation: params become tape leaves (one per name), gradients are
// read back by name after backward().
struct TraceCtx {
    using V = Var;
    Tape* tape;
    ParamStore* ps;
    std::unordered_map<std::string, Var> leaves;

    TraceCtx(Tape& t, ParamStore& p) : tape(&t), ps(&p) {}
    V param(const std::string& name) {
        auto it = leaves.find(name);
        if (it != leaves.end()) return it->second;
        Var v = tape->leaf(ps->get(name));
        leaves.emplace(name, v);
        return v;
    }
    V value(const Tensor& t) { return tape->leaf(t); }

    const Tensor& grad(const std::string& name) const {
        auto it = leaves.find(name);
        require(it != leaves.end(), "no traced leaf for " + name);
        return tape->grad(it->second.id);
    }
    // Gradients for every parameter that appeared in the trace, in store order.
    std::vector<std::pair<std::string, Tensor>> grads() const {
        std::vector<std::pair<std::string, Tensor>> out;
        for (const auto& [name, t] : ps->items()) {
            auto it = leaves.find(name);
            if (it != leaves.end()) out.emplace_back(name, tape->grad(it->second.id));
        }
        return out;
    }
};

// declare an MLP's parameters: widths = {in, h1, ..., out}
inline void add_mlp_params(ParamStore& ps, const std::string& prefix,
                           const std::vector<std::size_t>& widths) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        ps.add(prefix + ".w" + std::to_string(i), {widths[i + 1], widths[i]});
        ps.add(prefix + ".b" + std::to_string(i), {widths[i + 1]});
    }
}

// run an MLP on a rank-1 input; `act` between layers, linear final layer
template <class Ctx>
typename Ctx::V mlp_forward(Ctx& ctx, const std::string& prefix, typename Ctx::V x,
                            std::size_t layers, Activation act = Activation::Relu) {
    for (std::size_t i = 0; i < layers; ++i) {
        x = matvec(ctx.param(prefix + ".w" + std::to_string(i)), x,
                   ctx.param(prefix + ".b" + std::to_string(i)));
        if (i + 1 < layers) x = activation(x, act);
    }
    return x;
}

}  // namespace deskdrive
