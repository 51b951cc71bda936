#pragma once

// Adam with bias correction, keyed by parameter name.

#include <string>
#include <unordered_map>
#include <vector>

#include "deskdrive/nn.hpp"
#include "deskdrive/tensor.hpp"

namespace deskdrive {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    std::uint64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    // One update over (name, grad) pairs. Grads for parameters that did not
    // appear in the batch are simply absent and those parameters stay put.
    void step(ParamStore& ps, const std::vector<std::pair<std::string, Tensor>>& grads) {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (const auto& [name, g] : grads) {
            Tensor& p = ps.get(name);
            require(p.same_shape(g), "adam: grad shape mismatch for " + name + ": " +
                                         shape_str(p.shape) + " vs " + shape_str(g.shape));
            Moments& m = moments(name, p.shape);
            for (std::size_t i = 0; i < p.numel(); ++i) {
                m.m.data[i] = cfg_.beta1 * m.m.data[i] + (1.0 - cfg_.beta1) * g.data[i];
                m.v.data[i] = cfg_.beta2 * m.v.data[i] + (1.0 - cfg_.beta2) * g.data[i] * g.data[i];
                const double mhat = m.m.data[i] / bc1;
                const double vhat = m.v.data[i] / bc2;
                p.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

private:
    struct Moments {
        Tensor m, v;
    };
    Moments& moments(const std::string& name, const Shape& shape) {
        auto it = slots_.find(name);
        if (it == slots_.end())
            it = slots_.emplace(name, Moments{Tensor(shape), Tensor(shape)}).first;
        require(it->second.m.shape == shape, "adam: moment shape mismatch for " + name);
        return it->second;
    }

    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    std::unordered_map<std::string, Moments> slots_;
};

}  // namespace deskdrive
