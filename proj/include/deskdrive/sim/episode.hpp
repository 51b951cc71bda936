#pragma once

// Episode runner: closed loop of agent replanning, PID actuation, world
// stepping and infraction detection, with a line-delimited trace.

#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "deskdrive/sim/expert.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive {

// A driving agent plans in the ego frame; actuation is shared (control module).
class Agent {
public:
    virtual ~Agent() = default;
    virtual void reset() {}
    virtual WaypointPlan plan(const WorldState& w) = 0;
    virtual std::string name() const = 0;
};

class ExpertAgent : public Agent {
public:
    explicit ExpertAgent(const RunConfig& cfg) : cfg_(cfg) {}
    WaypointPlan plan(const WorldState& w) override { return expert_plan(w, cfg_).waypoints; }
    std::string name() const override { return "expert"; }

private:
    RunConfig cfg_;
};

struct EpisodeResult {
    std::string scenario;
    std::uint64_t seed = 0;
    double completion = 0.0;  // percent of route arc length
    std::vector<InfractionEvent> events;
    double duration = 0.0;  // s
    double km = 0.0;        // distance driven
    std::vector<Vec2> path;  // ego positions, one per step
    std::vector<std::string> trace;
    bool crashed = false;  // agent threw mid-episode; partial data kept
};

// called once per sim step with the pre-step state, the plan in force and the
// action applied
using StepObserver =
    std::function<void(const WorldState&, const WaypointPlan&, const ControlAction&, std::size_t)>;

namespace episode_detail {

inline std::string trace_line(const WorldState& w, const ControlAction& a) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "t=%.17g x=%.17g y=%.17g heading=%.17g speed=%.17g steer=%.17g throttle=%.17g",
                  w.time, w.ego.pos.x, w.ego.pos.y, w.ego.heading, w.ego.speed, a.steer,
                  a.throttle);
    return buf;
}

inline std::string event_line(const InfractionEvent& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "event=%s t=%.17g x=%.17g y=%.17g", infraction_name(e.kind),
                  e.time, e.position.x, e.position.y);
    return buf;
}

}  // namespace episode_detail

inline EpisodeResult run_episode(Agent& agent, const ScenarioSpec& spec, const RunConfig& cfg,
                                 const StepObserver& observer = {}) {
    WorldState w = make_scenario(spec, cfg);
    VehicleController ctl(cfg);
    agent.reset();

    EpisodeResult res;
    res.scenario = scenario_name(spec.kind);
    res.seed = spec.seed;

    const double len = route_length(w.route);
    const auto steps_per_replan = static_cast<std::size_t>(
        std::max(1.0, std::round(1.0 / (cfg.control_hz * cfg.sim_dt))));
    const auto max_steps = static_cast<std::size_t>(w.timeout / cfg.sim_dt) + 4;

    double max_progress = 0.0;
    WaypointPlan plan;
    bool reached_end = false;

    for (std::size_t step = 0; step < max_steps; ++step) {
        if (step % steps_per_replan == 0) {
            try {
                plan = agent.plan(w);
            } catch (const std::exception&) {
                res.crashed = true;
                break;
            }
        }
        const ControlAction act = ctl.act(plan, w.ego.speed, cfg.sim_dt);
        if (observer) observer(w, plan, act, step);

        WorldState next = step_world(w, act, cfg.sim_dt, cfg);
        const std::vector<InfractionEvent> events = detect_infractions(w, next);

        res.trace.push_back(episode_detail::trace_line(next, act));
        for (const InfractionEvent& e : events) {
            res.events.push_back(e);
            res.trace.push_back(episode_detail::event_line(e));
        }
        res.km += (next.ego.pos - w.ego.pos).norm() / 1000.0;
        res.path.push_back(next.ego.pos);
        w = next;

        const RouteProjection proj = project_onto_route(w.route, w.ego.pos);
        if (proj.s > max_progress) max_progress = proj.s;

        if (len - max_progress < 2.0 && (w.ego.pos - w.route.back()).norm() < 3.0) {
            reached_end = true;
            break;
        }
        bool terminal = false;
        for (const InfractionEvent& e : events)
            if (e.kind == InfractionKind::Timeout || e.kind == InfractionKind::Blocked ||
                e.kind == InfractionKind::RouteDeviation)
                terminal = true;
        if (terminal) break;
    }

    res.duration = w.time;
    res.completion = reached_end ? 100.0 : route_completion_pct(w, max_progress);
    return res;
}

inline void write_trace(const EpisodeResult& res, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "cannot open trace file for writing: " + path);
    f << "scenario=" << res.scenario << " seed=" << res.seed << "\n";
    for (const std::string& line : res.trace) f << line << "\n";
    require(f.good(), "trace write failed: " + path);
}

}  // namespace deskdrive
