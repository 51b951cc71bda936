#pragma once

// DETR-style detector over a small stride-32 convolutional backbone, plus the
// classification-only baseline used by the ablation harness.

#include <array>
#include <string>
#include <vector>

#include "deskdrive/attention.hpp"
#include "deskdrive/config.hpp"
#include "deskdrive/hungarian.hpp"
#include "deskdrive/nn.hpp"

namespace deskdrive {

enum class ObjectClass : std::size_t {
    NoObject = 0,
    Vehicle = 1,
    Pedestrian = 2,
    LaneMarking = 3,
    Obstacle = 4,
};
constexpr std::size_t kNumRealClasses = 4;   // excludes no-object
constexpr std::size_t kNumClassLogits = kNumRealClasses + 1;

inline double class_to_label(ObjectClass c) {
    return static_cast<double>(c) / static_cast<double>(kNumRealClasses);
}
inline ObjectClass label_to_class(double label) {
    const auto idx = static_cast<std::size_t>(
        std::llround(label * static_cast<double>(kNumRealClasses)));
    return static_cast<ObjectClass>(std::min<std::size_t>(idx, kNumRealClasses));
}

struct Detection {
    double label = 0.0;                       // class index / kNumRealClasses
    std::array<double, 4> box{0, 0, 0, 0};    // cx, cy, w, h, all in [0,1]
    ObjectClass cls() const { return label_to_class(label); }
};

using DetectionSet = std::vector<Detection>;  // always exactly N entries

// ---------------------------------------------------------------------------
// shared backbone: 5 stride-2 conv stages, 3x3 kernels, ReLU between stages

inline std::vector<std::size_t> backbone_stage_channels(std::size_t c) {
    return {c / 8, c / 4, c / 2, c, c};
}

inline void add_backbone_params(ParamStore& ps, const std::string& prefix, std::size_t c) {
    std::size_t in = 3;
    const auto stages = backbone_stage_channels(c);
    for (std::size_t s = 0; s < stages.size(); ++s) {
        ps.add(prefix + ".conv" + std::to_string(s) + ".w", {stages[s], in, 3, 3});
        ps.add(prefix + ".conv" + std::to_string(s) + ".b", {stages[s]});
        in = stages[s];
    }
}

// (3,H0,W0) -> (c, H0/32, W0/32); H0 and W0 must be divisible by 32
template <class Ctx>
typename Ctx::V backbone_forward(Ctx& ctx, const std::string& prefix, typename Ctx::V img,
                                 std::size_t c) {
    const Tensor& iv = value_of(img);
    require(iv.rank() == 3 && iv.shape[0] == 3, "backbone expects a (3,H,W) image");
    require(iv.shape[1] % 32 == 0 && iv.shape[2] % 32 == 0,
            "backbone input extents must be divisible by 32, got " + shape_str(iv.shape));
    typename Ctx::V x = img;
    const auto stages = backbone_stage_channels(c);
    for (std::size_t s = 0; s < stages.size(); ++s) {
        x = conv2d(x, ctx.param(prefix + ".conv" + std::to_string(s) + ".w"),
                   ctx.param(prefix + ".conv" + std::to_string(s) + ".b"), 2, 1);
        if (s + 1 < stages.size()) x = activation(x, Activation::Relu);
    }
    return x;
}

// ---------------------------------------------------------------------------
// detector

struct DetectorOutput {
    Tensor class_logits;  // (N, kNumClassLogits)
    Tensor class_probs;   // (N, kNumClassLogits)
    Tensor boxes;         // (N, 4) after sigmoid
    Tensor pooled;        // (c) global-average-pooled backbone feature
    DetectionSet detections;
};

class Detector {
public:
    explicit Detector(const RunConfig& cfg)
        : c_(cfg.backbone_channels), d_(cfg.model_dim), heads_(cfg.heads),
          enc_layers_(cfg.encoder_layers), dec_layers_(cfg.decoder_layers),
          n_(cfg.num_queries) {
        add_backbone_params(params_, "backbone", c_);
        params_.add("proj.w", {c_, d_});
        params_.add("proj.b", {d_});
        params_.add("queries", {n_, d_});
        for (std::size_t l = 0; l < enc_layers_; ++l)
            add_encoder_layer_params(params_, "enc" + std::to_string(l), d_, heads_);
        for (std::size_t l = 0; l < dec_layers_; ++l)
            add_decoder_layer_params(params_, "dec" + std::to_string(l), d_, heads_);
        // two separate three-layer FFN heads
        add_mlp_params(params_, "head.class", {d_, d_, d_, kNumClassLogits});
        add_mlp_params(params_, "head.box", {d_, d_, d_, 4});
    }

    void init(Rng& rng) { params_.init_uniform(rng); }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t num_queries() const { return n_; }
    std::size_t model_dim() const { return d_; }
    std::size_t channels() const { return c_; }

    template <class Ctx>
    typename Ctx::V backbone(Ctx& ctx, typename Ctx::V img) const {
        return backbone_forward(ctx, "backbone", img, c_);
    }

    // feature map (c,H,W) -> encoder memory (HW, d)
    template <class Ctx>
    typename Ctx::V encode(Ctx& ctx, typename Ctx::V fmap, bool use_positional = true,
                           std::vector<Tensor>* attn_sink = nullptr) const {
        const Tensor& fv = value_of(fmap);
        const std::size_t h = fv.shape[1], w = fv.shape[2];
        typename Ctx::V tokens =
            transpose2d(reshape(fmap, {fv.shape[0], h * w}));  // (HW, c)
        typename Ctx::V z =
            add_rowwise(matmul(tokens, ctx.param("proj.w")), ctx.param("proj.b"));
        if (use_positional) z = add_const_any(ctx, z, transpose2d(positional_encoding(h, w, d_)));
        for (std::size_t l = 0; l < enc_layers_; ++l)
            z = encoder_layer(ctx, "enc" + std::to_string(l), z, heads_, attn_sink);
        return z;
    }

    // memory (T,d) -> latent (N,d); memory_mask removes keys from cross-attention
    template <class Ctx>
    typename Ctx::V decode(Ctx& ctx, typename Ctx::V memory,
                           const std::vector<bool>* memory_mask = nullptr,
                           std::vector<Tensor>* attn_sink = nullptr) const {
        typename Ctx::V y = ctx.param("queries");
        for (std::size_t l = 0; l < dec_layers_; ++l)
            y = decoder_layer(ctx, "dec" + std::to_string(l), y, memory, heads_, memory_mask,
                              attn_sink);
        return y;
    }

    template <class Ctx>
    typename Ctx::V class_logits_for(Ctx& ctx, typename Ctx::V latent_row) const {
        return mlp_forward(ctx, "head.class", latent_row, 3);
    }
    template <class Ctx>
    typename Ctx::V box_for(Ctx& ctx, typename Ctx::V latent_row) const {
        return activation(mlp_forward(ctx, "head.box", latent_row, 3), Activation::Sigmoid);
    }

    // untraced full pass
    DetectorOutput forward(const Tensor& img, std::vector<Tensor>* attn_sink = nullptr) const {
        PlainCtx ctx(params_);
        Tensor fmap = backbone(ctx, img);
        Tensor memory = encode(ctx, fmap, true, attn_sink);
        Tensor latent = decode(ctx, memory, nullptr, attn_sink);
        DetectorOutput out;
        out.pooled = global_avg_pool(fmap);
        out.class_logits = Tensor({n_, kNumClassLogits});
        out.boxes = Tensor({n_, 4});
        for (std::size_t i = 0; i < n_; ++i) {
            Tensor logits = class_logits_for(ctx, row(latent, i));
            Tensor box = box_for(ctx, row(latent, i));
            for (std::size_t j = 0; j < kNumClassLogits; ++j) out.class_logits.at2(i, j) = logits.data[j];
            for (std::size_t j = 0; j < 4; ++j) out.boxes.at2(i, j) = box.data[j];
        }
        out.class_probs = softmax(out.class_logits, 1);
        out.detections.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < kNumClassLogits; ++j)
                if (out.class_probs.at2(i, j) > out.class_probs.at2(i, best)) best = j;
            out.detections[i].label =
                static_cast<double>(best) / static_cast<double>(kNumRealClasses);
            for (std::size_t j = 0; j < 4; ++j) out.detections[i].box[j] = out.boxes.at2(i, j);
        }
        return out;
    }

private:
    ParamStore params_;
    std::size_t c_, d_, heads_, enc_layers_, dec_layers_, n_;
};

// ---------------------------------------------------------------------------
// matching and pretraining loss

// Per-prediction truth index (SIZE_MAX = assigned no-object). Cost per
// (truth, pred) pair: class mismatch term (1 - p_pred(truth class)) plus L1
// box distance.
inline std::vector<std::size_t> hungarian_match(const Tensor& class_probs, const Tensor& boxes,
                                                const std::vector<Detection>& truth) {
    const std::size_t n = class_probs.rows();
    require(truth.size() <= n, "more ground-truth objects than predictions");
    std::vector<std::size_t> assign(n, SIZE_MAX);
    if (truth.empty()) return assign;
    Tensor cost({truth.size(), n});
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const auto cls = static_cast<std::size_t>(truth[t].cls());
        for (std::size_t p = 0; p < n; ++p) {
            double l1 = 0.0;
            for (std::size_t j = 0; j < 4; ++j) l1 += std::abs(boxes.at2(p, j) - truth[t].box[j]);
            cost.at2(t, p) = (1.0 - class_probs.at2(p, cls)) + l1;
        }
    }
    AssignmentResult res = solve_assignment(cost);
    for (std::size_t t = 0; t < truth.size(); ++t) assign[res.col_of_row[t]] = t;
    return assign;
}

inline std::vector<std::size_t> hungarian_match(const DetectionSet& pred,
                                                const std::vector<Detection>& truth) {
    const std::size_t n = pred.size();
    Tensor probs({n, kNumClassLogits});
    Tensor boxes({n, 4});
    for (std::size_t i = 0; i < n; ++i) {
        probs.at2(i, static_cast<std::size_t>(pred[i].cls())) = 1.0;
        for (std::size_t j = 0; j < 4; ++j) boxes.at2(i, j) = pred[i].box[j];
    }
    return hungarian_match(probs, boxes, truth);
}

constexpr double kNoObjectWeight = 0.1;

// Traced pretraining loss for one image: cross-entropy over all queries
// (no-object down-weighted) + L1 on matched boxes.
inline Var detection_pretrain_loss(const Detector& det, TraceCtx& ctx, Var latent,
                                   const std::vector<Detection>& truth,
                                   const std::vector<std::size_t>& assignment) {
    require(assignment.size() == det.num_queries(), "assignment size mismatch");
    Var total = ctx.tape->leaf(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < det.num_queries(); ++i) {
        Var lat = row(latent, i);
        Var logits = det.class_logits_for(ctx, lat);
        if (assignment[i] == SIZE_MAX) {
            total = add(total, ce_logits(logits, static_cast<std::size_t>(ObjectClass::NoObject),
                                         kNoObjectWeight));
        } else {
            const Detection& t = truth[assignment[i]];
            total = add(total, ce_logits(logits, static_cast<std::size_t>(t.cls()), 1.0));
            Tensor tb({4}, {t.box[0], t.box[1], t.box[2], t.box[3]});
            total = add(total, l1_to(det.box_for(ctx, lat), tb));
        }
    }
    return total;
}

// untraced value of the same loss, for reporting
inline double detection_loss_value(const Detector& det, const DetectorOutput& out,
                                   const std::vector<Detection>& truth,
                                   const std::vector<std::size_t>& assignment) {
    double total = 0.0;
    for (std::size_t i = 0; i < det.num_queries(); ++i) {
        Tensor logits = row(out.class_logits, i);
        if (assignment[i] == SIZE_MAX) {
            total += ce_logits_value(logits, static_cast<std::size_t>(ObjectClass::NoObject),
                                     kNoObjectWeight);
        } else {
            const Detection& t = truth[assignment[i]];
            total += ce_logits_value(logits, static_cast<std::size_t>(t.cls()), 1.0);
            for (std::size_t j = 0; j < 4; ++j) total += std::abs(out.boxes.at2(i, j) - t.box[j]);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// classification-only baseline (the ablation arm): same backbone, global
// average pool, softmax classifier, no boxes

struct ClassifierOutput {
    Tensor class_probs;  // (kNumClassLogits)
    Tensor pooled;       // (c)
};

class ClassifierBaseline {
public:
    explicit ClassifierBaseline(const RunConfig& cfg) : c_(cfg.backbone_channels) {
        add_backbone_params(params_, "backbone", c_);
        add_mlp_params(params_, "head", {c_, c_, kNumClassLogits});
    }

    void init(Rng& rng) { params_.init_uniform(rng); }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t channels() const { return c_; }

    template <class Ctx>
    typename Ctx::V logits(Ctx& ctx, typename Ctx::V img) const {
        typename Ctx::V fmap = backbone_forward(ctx, "backbone", img, c_);
        return mlp_forward(ctx, "head", global_avg_pool(fmap), 2);
    }

    ClassifierOutput forward(const Tensor& img) const {
        PlainCtx ctx(params_);
        Tensor fmap = backbone_forward(ctx, "backbone", img, c_);
        ClassifierOutput out;
        out.pooled = global_avg_pool(fmap);
        out.class_probs = softmax(mlp_forward(ctx, "head", out.pooled, 2), 0);
        return out;
    }

private:
    ParamStore params_;
    std::size_t c_;
};

}  // namespace deskdrive
