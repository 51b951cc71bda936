#pragma once

// End-to-end pipeline helpers shared by the command-line tool and the
// acceptance harness: suite construction, expert data collection, perception
// pretraining, the full student training recipe and the paired ablation.

#include <fstream>
#include <string>
#include <vector>

#include "deskdrive/bench.hpp"
#include "deskdrive/learning.hpp"
#include "deskdrive/pretrain.hpp"

namespace deskdrive {

// one spec per (suite entry, seed); seeds are offset by the run seed
inline std::vector<ScenarioSpec> make_suite(const RunConfig& cfg) {
    std::vector<ScenarioSpec> suite;
    for (const std::string& name : cfg.suite) {
        const ScenarioKind kind = scenario_from_name(name);
        for (std::size_t s = 0; s < cfg.suite_seeds; ++s)
            suite.push_back({kind, cfg.seed * 1000ull + s});
    }
    return suite;
}

// expert-driven collection over the configured suite (provenance 0)
inline Dataset collect_offline(const RunConfig& cfg) {
    ExpertAgent expert(cfg);
    Dataset ds;
    for (const ScenarioSpec& spec : make_suite(cfg)) {
        CollectResult c = collect_episode(expert, spec, cfg, 0);
        ds.records.insert(ds.records.end(), c.records.begin(), c.records.end());
    }
    require(!ds.records.empty(), "collect_offline: no records collected");
    return ds;
}

// deterministic split for held-out evaluation
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double holdout_frac,
                                                 std::uint64_t seed) {
    require(holdout_frac > 0.0 && holdout_frac < 1.0, "split_dataset: bad fraction");
    std::vector<std::size_t> idx(ds.records.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed * 805306457ull + 5);
    rng.shuffle(idx);
    const auto cut = static_cast<std::size_t>(
        std::round(holdout_frac * static_cast<double>(ds.records.size())));
    require(cut > 0 && cut < ds.records.size(), "split_dataset: degenerate split");
    Dataset held, train;
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < cut ? held : train).records.push_back(ds.records[idx[i]]);
    return {std::move(train), std::move(held)};
}

// pretrain the model's perception arm on a synthetic rendered scene set
inline std::vector<double> pretrain_perception(StudentModel& model, const RunConfig& cfg) {
    const auto scenes = make_detection_set(cfg, cfg.seed + 1, cfg.pretrain_images);
    if (model.arm() == PerceptionArm::Detection)
        return pretrain_detector(model.detector(), scenes, cfg.pretrain_steps, cfg.pretrain_lr,
                                 cfg.pretrain_batch, cfg.seed + 2);
    return pretrain_classifier(model.classifier(), scenes, cfg.pretrain_steps, cfg.pretrain_lr,
                               cfg.pretrain_batch, cfg.seed + 2);
}

// ---------------------------------------------------------------------------
// paired detection-vs-classification ablation

inline std::size_t collision_count(const RouteResult& r) {
    std::size_t n = 0;
    for (const InfractionEvent& e : r.events)
        if (e.kind == InfractionKind::CollisionPedestrian ||
            e.kind == InfractionKind::CollisionVehicle ||
            e.kind == InfractionKind::CollisionLayout)
            ++n;
    return n;
}

struct PairedOutcome {
    std::uint64_t seed = 0;
    std::size_t detection_collisions = 0;
    std::size_t classifier_collisions = 0;
};

// both agents on identical dense-traffic seeds
inline std::vector<PairedOutcome> run_paired_ablation(const StudentModel& detection,
                                                      const StudentModel& classifier,
                                                      const RunConfig& cfg, std::size_t pairs) {
    require(pairs >= 1, "run_paired_ablation: need at least one pair");
    StudentAgent det_agent(detection, cfg);
    StudentAgent cls_agent(classifier, cfg);
    std::vector<PairedOutcome> out;
    out.reserve(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
        const ScenarioSpec spec{ScenarioKind::DenseTraffic, cfg.seed * 5000ull + i};
        const WorldState w0 = make_scenario(spec, cfg);
        PairedOutcome p;
        p.seed = spec.seed;
        p.detection_collisions =
            collision_count(route_result_from_episode(run_episode(det_agent, spec, cfg), w0.route));
        p.classifier_collisions =
            collision_count(route_result_from_episode(run_episode(cls_agent, spec, cfg), w0.route));
        out.push_back(p);
    }
    return out;
}

inline double fraction_detection_not_worse(const std::vector<PairedOutcome>& pairs) {
    require(!pairs.empty(), "no ablation pairs");
    std::size_t wins = 0;
    for (const PairedOutcome& p : pairs)
        if (p.detection_collisions <= p.classifier_collisions) ++wins;
    return static_cast<double>(wins) / static_cast<double>(pairs.size());
}

inline void write_paired_csv(const std::vector<PairedOutcome>& pairs, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "cannot open paired table for writing: " + path);
    f << "seed,detection_collisions,classifier_collisions,detection_not_worse\n";
    for (const PairedOutcome& p : pairs)
        f << p.seed << "," << p.detection_collisions << "," << p.classifier_collisions << ","
          << (p.detection_collisions <= p.classifier_collisions ? 1 : 0) << "\n";
    f << "fraction_detection_not_worse," << fraction_detection_not_worse(pairs) << ",,\n";
    require(f.good(), "paired table write failed: " + path);
}

}  // namespace deskdrive
