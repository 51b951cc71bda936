#pragma once

// Feature fusion: perception outputs, backbone residual, speed and one-hot
// navigational command merged into one fused vector of width c_f.

#include <string>

#include "deskdrive/nn.hpp"
#include "deskdrive/perception.hpp"

namespace deskdrive {

enum class Command : std::size_t {
    FollowLane = 0,
    ChangeLeft = 1,
    ChangeRight = 2,
    TurnLeft = 3,
    TurnRight = 4,
    Straight = 5,
};
constexpr std::size_t kNumCommands = 6;

inline Tensor one_hot_command(Command c) {
    Tensor t({kNumCommands});
    t.data[static_cast<std::size_t>(c)] = 1.0;
    return t;
}

// flatten a DetectionSet into the (5N) layout: N labels then N boxes
inline Tensor flatten_detections(const DetectionSet& dets) {
    Tensor t({dets.size() * 5});
    for (std::size_t i = 0; i < dets.size(); ++i) {
        t.data[i] = dets[i].label;
        for (std::size_t j = 0; j < 4; ++j) t.data[dets.size() + i * 4 + j] = dets[i].box[j];
    }
    return t;
}

class FusionNet {
public:
    // det_width: 5N for the detection agent, kNumClassLogits for the
    // classifier ablation arm.
    FusionNet(ParamStore& ps, std::string prefix, std::size_t pooled_width,
              std::size_t det_width, std::size_t d, std::size_t fused_width)
        : prefix_(std::move(prefix)), det_width_(det_width), d_(d), fused_(fused_width) {
        add_mlp_params(ps, prefix_ + ".res", {pooled_width, d});
        add_mlp_params(ps, prefix_ + ".det", {det_width + d, d});
        add_mlp_params(ps, prefix_ + ".meas", {kNumCommands + 1, d, d});
        add_mlp_params(ps, prefix_ + ".fuse", {d, fused_width, fused_width, fused_width});
    }

    std::size_t fused_width() const { return fused_; }
    std::size_t detection_width() const { return det_width_; }

    // pooled backbone feature through its MLP, concatenated after the
    // flattened detection block, then a single-layer MLP to width d
    template <class Ctx>
    typename Ctx::V fuse_perception(Ctx& ctx, typename Ctx::V pooled,
                                    typename Ctx::V det_flat) const {
        require(value_of(det_flat).numel() == det_width_,
                "fusion: detection block width mismatch: " +
                    shape_str(value_of(det_flat).shape));
        typename Ctx::V res = activation(mlp_forward(ctx, prefix_ + ".res", pooled, 1),
                                         Activation::Relu);
        return mlp_forward(ctx, prefix_ + ".det", concat(det_flat, res), 1);
    }

    // one-hot(6) ++ raw speed -> MLP -> width d
    template <class Ctx>
    typename Ctx::V encode_measurements(Ctx& ctx, double speed, Command cmd) const {
        require(speed >= 0.0, "encode_measurements: negative speed");
        Tensor in = concat_rows(one_hot_command(cmd), Tensor({1}, {speed}));
        return mlp_forward(ctx, prefix_ + ".meas", ctx.value(in), 2);
    }

    // elementwise sum, then the three-layer MLP down to c_f
    template <class Ctx>
    typename Ctx::V fuse_all(Ctx& ctx, typename Ctx::V p, typename Ctx::V m) const {
        require(value_of(p).same_shape(value_of(m)),
                "fuse_all: width mismatch " + shape_str(value_of(p).shape) + " vs " +
                    shape_str(value_of(m).shape));
        return mlp_forward(ctx, prefix_ + ".fuse", add(p, m), 3);
    }

    template <class Ctx>
    typename Ctx::V forward(Ctx& ctx, typename Ctx::V pooled, typename Ctx::V det_flat,
                            double speed, Command cmd) const {
        typename Ctx::V p = fuse_perception(ctx, pooled, det_flat);
        typename Ctx::V m = encode_measurements(ctx, speed, cmd);
        return fuse_all(ctx, p, m);
    }

private:
    std::string prefix_;
    std::size_t det_width_, d_, fused_;
};

}  // namespace deskdrive
