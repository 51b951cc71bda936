#pragma once

// GRU waypoint planner: unrolls K cells from the fused vector and the goal
// point, emitting ego-frame waypoints ordered from the goal back to the ego.

#include <string>
#include <vector>

#include "deskdrive/geometry.hpp"
#include "deskdrive/nn.hpp"

namespace deskdrive {

class Planner {
public:
    Planner(ParamStore& ps, std::string prefix, std::size_t input_width, std::size_t hidden,
            std::size_t k)
        : prefix_(std::move(prefix)), in_(input_width), hidden_(hidden), k_(k) {
        require(k >= 2, "planner needs K >= 2 waypoints");
        const std::size_t cat = hidden + input_width;
        for (const char* gate : {"z", "r", "h"}) {
            ps.add(prefix_ + ".gru." + gate + ".w", {hidden, cat});
            ps.add(prefix_ + ".gru." + gate + ".b", {hidden});
        }
        // ego position in its own frame is (0,0): h0 reduces to a learned bias
        ps.add(prefix_ + ".h0", {hidden});
        ps.add(prefix_ + ".head.w", {2, hidden});
        ps.add(prefix_ + ".head.b", {2});
    }

    std::size_t horizon() const { return k_; }
    std::size_t input_width() const { return in_; }
    std::size_t hidden_width() const { return hidden_; }

    // z = sigma(Wz[h,x]+bz), r = sigma(Wr[h,x]+br),
    // hcand = tanh(Wh[r*h, x]+bh), h' = (1-z)*hcand + z*h
    template <class Ctx>
    typename Ctx::V gru_cell(Ctx& ctx, typename Ctx::V h, typename Ctx::V x) const {
        require(value_of(h).numel() == hidden_ && value_of(x).numel() == in_,
                "gru_cell width mismatch: h" + shape_str(value_of(h).shape) + " x" +
                    shape_str(value_of(x).shape));
        typename Ctx::V hx = concat(h, x);
        typename Ctx::V z = activation(
            matvec(ctx.param(prefix_ + ".gru.z.w"), hx, ctx.param(prefix_ + ".gru.z.b")),
            Activation::Sigmoid);
        typename Ctx::V r = activation(
            matvec(ctx.param(prefix_ + ".gru.r.w"), hx, ctx.param(prefix_ + ".gru.r.b")),
            Activation::Sigmoid);
        typename Ctx::V rh_x = concat(mul(r, h), x);
        typename Ctx::V hc = activation(
            matvec(ctx.param(prefix_ + ".gru.h.w"), rh_x, ctx.param(prefix_ + ".gru.h.b")),
            Activation::Tanh);
        // (1-z)*hc + z*h  ==  hc + z*(h - hc)
        return add(hc, mul(z, sub(h, hc)));
    }

    // per cell the input is the fused vector joined with the goal point; the
    // affine head maps each hidden state to one waypoint
    template <class Ctx>
    std::vector<typename Ctx::V> rollout(Ctx& ctx, typename Ctx::V fused, GoalPoint goal) const {
        typename Ctx::V x = concat(fused, ctx.value(Tensor({2}, {goal.x, goal.y})));
        typename Ctx::V h = ctx.param(prefix_ + ".h0");
        std::vector<typename Ctx::V> points;
        points.reserve(k_);
        for (std::size_t t = 0; t < k_; ++t) {
            h = gru_cell(ctx, h, x);
            points.push_back(
                matvec(ctx.param(prefix_ + ".head.w"), h, ctx.param(prefix_ + ".head.b")));
        }
        return points;
    }

    WaypointPlan rollout_waypoints(const ParamStore& ps, const Tensor& fused,
                                   GoalPoint goal) const {
        PlainCtx ctx(ps);
        auto pts = rollout(ctx, fused, goal);
        WaypointPlan plan;
        plan.reserve(k_);
        for (const Tensor& p : pts) plan.push_back({p.data[0], p.data[1]});
        return plan;
    }

private:
    std::string prefix_;
    std::size_t in_, hidden_, k_;
};

}  // namespace deskdrive
