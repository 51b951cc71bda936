#pragma once

// Imitation learning: 2 Hz dataset collection with on-policy expert
// annotation, the L1 waypoint loss, offline training on frozen perception
// features, and the half-and-half DAgger loop.

#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "deskdrive/agent.hpp"
#include "deskdrive/optim.hpp"
#include "deskdrive/sim/episode.hpp"

namespace deskdrive {

struct Dataset {
    std::vector<SampleRecord> records;
};

// sum over waypoints of coordinate-wise absolute differences
inline double waypoint_loss(const WaypointPlan& pred, const WaypointPlan& truth) {
    require(pred.size() == truth.size(), "waypoint_loss: length mismatch");
    double sum = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k)
        sum += std::abs(pred[k].x - truth[k].x) + std::abs(pred[k].y - truth[k].y);
    return sum;
}

// ---------------------------------------------------------------------------
// dataset container: text manifest + fixed-layout little-endian f64 arrays

inline void save_dataset(const Dataset& ds, const std::string& path) {
    require(!ds.records.empty(), "save_dataset: empty dataset");
    const Shape img_shape = ds.records.front().image.shape;
    const std::size_t k = ds.records.front().expert_waypoints.size();
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "cannot open dataset for writing: " + path);
    f << "DDDATA1\n";
    f << ds.records.size() << " " << img_shape[0] << " " << img_shape[1] << " " << img_shape[2]
      << " " << k << "\n";
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        f << ds.records[i].provenance << (i + 1 < ds.records.size() ? ' ' : '\n');
    f << "DATA\n";
    std::vector<double> buf;
    for (const SampleRecord& r : ds.records) {
        require(r.image.shape == img_shape, "save_dataset: inconsistent image shape");
        require(r.expert_waypoints.size() == k, "save_dataset: inconsistent horizon");
        buf.clear();
        buf.insert(buf.end(), r.image.data.begin(), r.image.data.end());
        buf.push_back(r.speed);
        buf.push_back(static_cast<double>(r.command));
        buf.push_back(r.goal.x);
        buf.push_back(r.goal.y);
        for (const Vec2& w : r.expert_waypoints) {
            buf.push_back(w.x);
            buf.push_back(w.y);
        }
        buf.push_back(r.expert_action.steer);
        buf.push_back(r.expert_action.throttle);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(double)));
    }
    require(f.good(), "dataset write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "cannot open dataset: " + path);
    std::string line;
    std::getline(f, line);
    require(line == "DDDATA1", "bad dataset magic in " + path);
    std::size_t count = 0, c = 0, h = 0, w = 0, k = 0;
    f >> count >> c >> h >> w >> k;
    require(count > 0 && c == 3 && h > 0 && w > 0 && k >= 2,
            "malformed dataset header in " + path);
    Dataset ds;
    ds.records.resize(count);
    for (SampleRecord& r : ds.records) f >> r.provenance;
    f >> line;
    require(line == "DATA" && f.good(), "missing DATA marker in " + path);
    f.get();  // consume the newline
    const std::size_t scalars = c * h * w + 1 + 1 + 2 + 2 * k + 2;
    std::vector<double> buf(scalars);
    for (SampleRecord& r : ds.records) {
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(scalars * sizeof(double)));
        require(f.good(), "dataset truncated in " + path);
        std::size_t p = 0;
        r.image = Tensor({c, h, w});
        std::memcpy(r.image.data.data(), buf.data(), c * h * w * sizeof(double));
        p = c * h * w;
        r.speed = buf[p++];
        r.command = static_cast<Command>(static_cast<std::size_t>(buf[p++]));
        r.goal = {buf[p], buf[p + 1]};
        p += 2;
        r.expert_waypoints.resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            r.expert_waypoints[i] = {buf[p], buf[p + 1]};
            p += 2;
        }
        r.expert_action = {buf[p], buf[p + 1]};
    }
    return ds;
}

// ---------------------------------------------------------------------------
// collection

struct CollectResult {
    std::vector<SampleRecord> records;
    EpisodeResult episode;
};

// Run `driver` through the scenario; at every sample instant record the
// inputs plus the expert's waypoints and action for that state. The expert is
// queried even when the student drives (on-policy annotation).
inline CollectResult collect_episode(Agent& driver, const ScenarioSpec& spec,
                                     const RunConfig& cfg, int provenance) {
    const auto steps_per_sample =
        static_cast<std::size_t>(std::round(1.0 / (cfg.sample_rate * cfg.sim_dt)));
    require(steps_per_sample >= 1, "collect_episode: sample rate above the sim rate");
    const auto steps_per_replan = static_cast<std::size_t>(
        std::max(1.0, std::round(1.0 / (cfg.control_hz * cfg.sim_dt))));

    // shadow expert: replanned at the driver's cadence so that expert-driven
    // collection records exactly the actions the expert itself took
    VehicleController shadow(cfg);
    WaypointPlan shadow_plan;
    CollectResult out;

    auto observer = [&](const WorldState& w, const WaypointPlan&, const ControlAction&,
                        std::size_t step) {
        if (step % steps_per_replan == 0) shadow_plan = expert_plan(w, cfg).waypoints;
        const ControlAction expert_act = shadow.act(shadow_plan, w.ego.speed, cfg.sim_dt);
        if (step % steps_per_sample != 0) return;
        SampleRecord r;
        r.image = render_front_view(w, cfg).image;
        r.speed = w.ego.speed;
        r.command = current_command(w);
        r.goal = goal_point(w);
        r.expert_waypoints = expert_plan(w, cfg).waypoints;  // fresh at the sample instant
        r.expert_action = expert_act;
        r.provenance = provenance;
        out.records.push_back(std::move(r));
    };
    out.episode = run_episode(driver, spec, cfg, observer);
    return out;
}

// ---------------------------------------------------------------------------
// offline training

inline std::vector<PerceptionFeatures> cache_features(const StudentModel& model,
                                                      const Dataset& ds) {
    std::vector<PerceptionFeatures> feats;
    feats.reserve(ds.records.size());
    for (const SampleRecord& r : ds.records) feats.push_back(model.features(r.image));
    return feats;
}

struct TrainLog {
    std::vector<double> epoch_loss;  // mean per-record loss per epoch
};

// Adam on the waypoint loss; only fusion + planner parameters are traced, so
// perception stays frozen by construction (verified by checksum in tests).
inline TrainLog train_offline(StudentModel& model, const Dataset& ds, const RunConfig& cfg,
                              std::uint64_t seed) {
    require(!ds.records.empty(), "train_offline: empty dataset");
    const std::vector<PerceptionFeatures> feats = cache_features(model, ds);
    AdamState adam({cfg.lr});
    ParamStore& ps = model.policy_params();

    TrainLog log;
    std::vector<std::size_t> order(ds.records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(seed * 1000003ull + epoch);
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            TraceCtx ctx(tape, ps);
            Var loss = tape.leaf(Tensor::scalar(0.0));
            for (std::size_t i = start; i < end; ++i)
                loss = add(loss, model.traced_policy_loss(ctx, feats[order[i]],
                                                          ds.records[order[i]]));
            total += loss.val().data[0];
            loss = scale(loss, 1.0 / static_cast<double>(end - start));
            tape.backward(loss);
            adam.step(ps, ctx.grads());
        }
        log.epoch_loss.push_back(total / static_cast<double>(order.size()));
    }
    return log;
}

// mean waypoint loss of the current policy over a (held-out) dataset
inline double evaluate_policy(const StudentModel& model, const Dataset& ds) {
    require(!ds.records.empty(), "evaluate_policy: empty dataset");
    double total = 0.0;
    for (const SampleRecord& r : ds.records) {
        WaypointPlan pred = model.plan(r.image, r.speed, r.command, r.goal);
        total += waypoint_loss(pred, r.expert_waypoints);
    }
    return total / static_cast<double>(ds.records.size());
}

// ---------------------------------------------------------------------------
// DAgger

// equal record counts from each side; the larger side is uniformly
// subsampled (without replacement) with the round's seed
inline Dataset mix_half_and_half(const Dataset& old_ds, const Dataset& new_ds,
                                 std::uint64_t round_seed) {
    require(!old_ds.records.empty() && !new_ds.records.empty(),
            "mix_half_and_half: both sides must be non-empty");
    const std::size_t m = std::min(old_ds.records.size(), new_ds.records.size());
    Rng rng(round_seed * 2654435761ull + 99);
    auto pick = [&](const Dataset& src) {
        std::vector<std::size_t> idx(src.records.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(idx);
        idx.resize(m);
        std::sort(idx.begin(), idx.end());  // keep temporal order within a side
        std::vector<SampleRecord> out;
        out.reserve(m);
        for (std::size_t i : idx) out.push_back(src.records[i]);
        return out;
    };
    Dataset mixed;
    mixed.records = pick(old_ds);
    std::vector<SampleRecord> fresh = pick(new_ds);
    mixed.records.insert(mixed.records.end(), fresh.begin(), fresh.end());
    return mixed;
}

struct DaggerRoundResult {
    Dataset mixed;
    TrainLog log;
    double mean_completion = 0.0;  // of the student's collection drives
};

// student drives every scenario, the expert annotates, the datasets are
// mixed half and half and the policy is retrained on the mix
inline DaggerRoundResult dagger_round(StudentModel& model, const std::vector<ScenarioSpec>& suite,
                                      const Dataset& old_ds, std::size_t round,
                                      const RunConfig& cfg) {
    require(!suite.empty(), "dagger_round: empty scenario suite");
    StudentAgent agent(model, cfg);
    Dataset fresh;
    double completion = 0.0;
    for (const ScenarioSpec& spec : suite) {
        CollectResult c = collect_episode(agent, spec, cfg, static_cast<int>(round));
        completion += c.episode.completion;
        fresh.records.insert(fresh.records.end(), c.records.begin(), c.records.end());
    }
    require(!fresh.records.empty(), "dagger_round: student produced zero samples");

    DaggerRoundResult res;
    res.mean_completion = completion / static_cast<double>(suite.size());
    res.mixed = mix_half_and_half(old_ds, fresh, cfg.seed * 101ull + round);
    res.log = train_offline(model, res.mixed, cfg, cfg.seed * 77ull + round);
    return res;
}

}  // namespace deskdrive
