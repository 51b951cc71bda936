#pragma once

// Perception pretraining on synthetic rendered scenes: Hungarian-matched
// detection loss for the detector arm, nearest-object cross-entropy for the
// classifier arm.

#include <vector>

#include "deskdrive/optim.hpp"
#include "deskdrive/perception.hpp"
#include "deskdrive/sim/render.hpp"

namespace deskdrive {

struct LabeledScene {
    Tensor image;
    std::vector<Detection> truth;
};

// Seeded synthetic detection set: every scenario kind, actors advanced by a
// random amount, ego placed at a random route position with small pose jitter.
inline std::vector<LabeledScene> make_detection_set(const RunConfig& cfg, std::uint64_t seed,
                                                    std::size_t count) {
    require(count > 0, "make_detection_set: count must be positive");
    Rng rng(seed * 48271ull + 11);
    const ScenarioKind kinds[] = {ScenarioKind::Follow,          ScenarioKind::LeadVehicleStop,
                                  ScenarioKind::PedestrianCrossing, ScenarioKind::IntersectionTurn,
                                  ScenarioKind::LaneChange,      ScenarioKind::DenseTraffic};
    std::vector<LabeledScene> scenes;
    scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        WorldState w = make_scenario({kinds[i % 6], seed * 7919ull + i}, cfg);
        // advance the scripts so crossing pedestrians appear mid-road too
        const double advance = rng.uniform(0.0, 25.0);
        for (double t = 0.0; t < advance; t += 0.1)
            for (Actor& a : w.actors) advance_actor(a, t, 0.1);
        // random ego pose along the route
        const double len = route_length(w.route);
        const double s = rng.uniform(0.0, 0.6 * len);
        const Vec2 at = route_point_at(w.route, s);
        const Vec2 ahead = route_point_at(w.route, s + 2.0);
        double heading = 0.0;
        if ((ahead - at).norm() > 1e-9) heading = std::atan2(ahead.y - at.y, ahead.x - at.x);
        w.ego.pos = at + rotate({0.0, rng.uniform(-1.0, 1.0)}, heading);
        w.ego.heading = wrap_angle(heading + rng.uniform(-0.15, 0.15));
        RenderResult r = render_front_view(w, cfg);
        scenes.push_back({std::move(r.image), std::move(r.truth)});
    }
    return scenes;
}

// mean per-coordinate absolute box error over Hungarian-matched pairs
inline double matched_box_l1(const Detector& det, const std::vector<LabeledScene>& scenes) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (const LabeledScene& sc : scenes) {
        if (sc.truth.empty()) continue;
        DetectorOutput out = det.forward(sc.image);
        const auto assign = hungarian_match(out.class_probs, out.boxes, sc.truth);
        for (std::size_t i = 0; i < assign.size(); ++i) {
            if (assign[i] == SIZE_MAX) continue;
            for (std::size_t j = 0; j < 4; ++j)
                total += std::abs(out.boxes.at2(i, j) - sc.truth[assign[i]].box[j]);
            ++pairs;
        }
    }
    require(pairs > 0, "matched_box_l1: no ground-truth objects in the set");
    return total / static_cast<double>(pairs * 4);
}

// Adam over the Hungarian-matched detection loss; returns the per-step mean
// batch loss
inline std::vector<double> pretrain_detector(Detector& det, const std::vector<LabeledScene>& set,
                                             std::size_t steps, double lr, std::size_t batch,
                                             std::uint64_t seed) {
    require(!set.empty(), "pretrain_detector: empty scene set");
    require(batch >= 1, "pretrain_detector: batch must be >= 1");
    AdamState adam({lr});
    Rng rng(seed * 6364136223846793005ull + 1442695040888963407ull);
    std::vector<double> losses;
    losses.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        Tape tape;
        TraceCtx ctx(tape, det.params());
        Var loss = tape.leaf(Tensor::scalar(0.0));
        for (std::size_t b = 0; b < batch; ++b) {
            const LabeledScene& sc = set[rng.index(set.size())];
            DetectorOutput out = det.forward(sc.image);
            const auto assign = hungarian_match(out.class_probs, out.boxes, sc.truth);
            Var fmap = det.backbone(ctx, ctx.value(sc.image));
            Var latent = det.decode(ctx, det.encode(ctx, fmap));
            loss = add(loss, detection_pretrain_loss(det, ctx, latent, sc.truth, assign));
        }
        loss = scale(loss, 1.0 / static_cast<double>(batch));
        losses.push_back(loss.val().data[0]);
        tape.backward(loss);
        adam.step(det.params(), ctx.grads());
    }
    return losses;
}

// classifier arm: cross-entropy against the nearest (largest-box) object
// class, or no-object on empty scenes
inline std::size_t dominant_class(const std::vector<Detection>& truth) {
    if (truth.empty()) return static_cast<std::size_t>(ObjectClass::NoObject);
    std::size_t best = 0;
    double best_area = -1.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double area = truth[i].box[2] * truth[i].box[3];
        if (area > best_area) {
            best_area = area;
            best = i;
        }
    }
    return static_cast<std::size_t>(truth[best].cls());
}

inline std::vector<double> pretrain_classifier(ClassifierBaseline& cls,
                                               const std::vector<LabeledScene>& set,
                                               std::size_t steps, double lr, std::size_t batch,
                                               std::uint64_t seed) {
    require(!set.empty(), "pretrain_classifier: empty scene set");
    AdamState adam({lr});
    Rng rng(seed * 2862933555777941757ull + 3037000493ull);
    std::vector<double> losses;
    losses.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        Tape tape;
        TraceCtx ctx(tape, cls.params());
        Var loss = tape.leaf(Tensor::scalar(0.0));
        for (std::size_t b = 0; b < batch; ++b) {
            const LabeledScene& sc = set[rng.index(set.size())];
            Var logits = cls.logits(ctx, ctx.value(sc.image));
            loss = add(loss, ce_logits(logits, dominant_class(sc.truth), 1.0));
        }
        loss = scale(loss, 1.0 / static_cast<double>(batch));
        losses.push_back(loss.val().data[0]);
        tape.backward(loss);
        adam.step(cls.params(), ctx.grads());
    }
    return losses;
}

}  // namespace deskdrive
