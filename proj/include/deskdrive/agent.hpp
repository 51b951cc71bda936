#pragma once

// The learned driving agents: a frozen perception module (detection or
// classification arm) feeding the trainable fusion + planner stack, plus the
// Agent adapters that close the loop in the simulator.

#include <filesystem>
#include <string>

#include "deskdrive/checkpoint.hpp"
#include "deskdrive/config.hpp"
#include "deskdrive/fusion.hpp"
#include "deskdrive/perception.hpp"
#include "deskdrive/planner.hpp"
#include "deskdrive/sim/episode.hpp"
#include "deskdrive/sim/render.hpp"

namespace deskdrive {

enum class PerceptionArm { Detection, Classifier };

inline const char* arm_name(PerceptionArm a) {
    return a == PerceptionArm::Detection ? "detection" : "classifier";
}

inline PerceptionArm arm_from_name(const std::string& name) {
    if (name == "detection") return PerceptionArm::Detection;
    if (name == "classifier") return PerceptionArm::Classifier;
    throw std::invalid_argument("unknown perception arm: " + name);
}

struct PerceptionFeatures {
    Tensor pooled;    // (c) backbone residual
    Tensor det_flat;  // (5N) flattened detections, or (5) class distribution
};

// what a stored sample needs for one policy-gradient step
struct SampleRecord {
    Tensor image;  // (3, S, S)
    double speed = 0.0;
    Command command = Command::FollowLane;
    GoalPoint goal;
    WaypointPlan expert_waypoints;  // length K
    ControlAction expert_action;
    int provenance = 0;  // 0 = offline round, n = DAgger round n
};

class StudentModel {
public:
    StudentModel(const RunConfig& cfg, PerceptionArm arm)
        : cfg_(cfg),
          arm_(arm),
          detector_(cfg),
          classifier_(cfg),
          fusion_(policy_, "fusion", cfg.backbone_channels, perception_width(cfg, arm),
                  cfg.fused_dim, cfg.fused_dim),
          planner_(policy_, "planner", cfg.fused_dim + 2, cfg.gru_hidden, cfg.waypoints) {}

    static std::size_t perception_width(const RunConfig& cfg, PerceptionArm arm) {
        return arm == PerceptionArm::Detection ? cfg.num_queries * 5 : kNumClassLogits;
    }

    PerceptionArm arm() const { return arm_; }
    const RunConfig& config() const { return cfg_; }
    Detector& detector() { return detector_; }
    ClassifierBaseline& classifier() { return classifier_; }
    ParamStore& policy_params() { return policy_; }
    const ParamStore& policy_params() const { return policy_; }
    ParamStore& perception_params() {
        return arm_ == PerceptionArm::Detection ? detector_.params() : classifier_.params();
    }
    const FusionNet& fusion() const { return fusion_; }
    const Planner& planner() const { return planner_; }

    void init(Rng& rng) {
        perception_params().init_uniform(rng);
        policy_.init_uniform(rng);
    }

    PerceptionFeatures features(const Tensor& image) const {
        PerceptionFeatures f;
        if (arm_ == PerceptionArm::Detection) {
            DetectorOutput out = detector_.forward(image);
            f.pooled = out.pooled;
            f.det_flat = flatten_detections(out.detections);
        } else {
            ClassifierOutput out = classifier_.forward(image);
            f.pooled = out.pooled;
            f.det_flat = out.class_probs;
        }
        return f;
    }

    WaypointPlan plan(const PerceptionFeatures& f, double speed, Command cmd,
                      GoalPoint goal) const {
        PlainCtx ctx(policy_);
        Tensor fused = fusion_.forward(ctx, f.pooled, f.det_flat, speed, cmd);
        return planner_.rollout_waypoints(policy_, fused, goal);
    }

    WaypointPlan plan(const Tensor& image, double speed, Command cmd, GoalPoint goal) const {
        return plan(features(image), speed, cmd, goal);
    }

    // traced L1 waypoint loss for one record (perception enters as constants,
    // so gradients flow to fusion + planner only)
    Var traced_policy_loss(TraceCtx& ctx, const PerceptionFeatures& f,
                           const SampleRecord& r) const {
        require(r.expert_waypoints.size() == planner_.horizon(),
                "sample has wrong waypoint horizon");
        Var fused = fusion_.forward(ctx, ctx.value(f.pooled), ctx.value(f.det_flat), r.speed,
                                    r.command);
        std::vector<Var> pts = planner_.rollout(ctx, fused, r.goal);
        Var loss = ctx.tape->leaf(Tensor::scalar(0.0));
        for (std::size_t k = 0; k < pts.size(); ++k) {
            Tensor target({2}, {r.expert_waypoints[k].x, r.expert_waypoints[k].y});
            loss = add(loss, l1_to(pts[k], target));
        }
        return loss;
    }

    void save(const std::string& dir) const {
        std::filesystem::create_directories(dir);
        save_checkpoint(arm_ == PerceptionArm::Detection ? detector_.params()
                                                         : classifier_.params(),
                        dir + "/perception.ckpt");
        save_checkpoint(policy_, dir + "/policy.ckpt");
        std::ofstream meta(dir + "/model.txt");
        require(meta.good(), "cannot write model metadata in " + dir);
        meta << "arm = " << arm_name(arm_) << "\n";
        meta << "perception_checksum = " << perception_checksum() << "\n";
        meta << "policy_checksum = " << policy_.checksum() << "\n";
    }

    void load(const std::string& dir) {
        std::ifstream meta(dir + "/model.txt");
        require(meta.good(), "missing model metadata: " + dir + "/model.txt");
        std::string key, eq, value;
        meta >> key >> eq >> value;
        require(key == "arm" && arm_from_name(value) == arm_,
                "model at " + dir + " is the wrong perception arm");
        load_checkpoint(arm_ == PerceptionArm::Detection ? detector_.params()
                                                         : classifier_.params(),
                        dir + "/perception.ckpt");
        load_checkpoint(policy_, dir + "/policy.ckpt");
    }

    std::uint64_t perception_checksum() const {
        return arm_ == PerceptionArm::Detection ? detector_.params().checksum()
                                                : classifier_.params().checksum();
    }

private:
    RunConfig cfg_;
    PerceptionArm arm_;
    Detector detector_;
    ClassifierBaseline classifier_;
    ParamStore policy_;
    FusionNet fusion_;
    Planner planner_;
};

// closes the loop: camera render -> perception -> fusion -> planner
class StudentAgent : public Agent {
public:
    StudentAgent(const StudentModel& model, const RunConfig& cfg) : model_(&model), cfg_(cfg) {}

    WaypointPlan plan(const WorldState& w) override {
        const RenderResult view = render_front_view(w, cfg_);
        return model_->plan(view.image, w.ego.speed, current_command(w), goal_point(w));
    }
    std::string name() const override {
        return std::string("student-") + arm_name(model_->arm());
    }

private:
    const StudentModel* model_;
    RunConfig cfg_;
};

}  // namespace deskdrive
