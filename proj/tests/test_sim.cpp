#include <doctest.h>

#include "deskdrive/sim/episode.hpp"
#include "deskdrive/sim/render.hpp"

using namespace deskdrive;

namespace {

RunConfig desk_cfg() {
    RunConfig cfg;
    cfg.validate();
    return cfg;
}

WorldState bare_world() {
    WorldState w;
    w.lanes.push_back({{-20, 0}, {300, 0}, 4.0});
    w.route = {{0, 0}, {200, 0}};
    w.timeout = 1e9;
    return w;
}

}  // namespace

TEST_CASE("step_world: straight-line kinematics") {
    RunConfig cfg = desk_cfg();
    WorldState w = bare_world();
    w.ego.speed = 1.0;

    WorldState n = step_world(w, {0.0, 0.0}, 0.1, cfg);
    CHECK(n.ego.pos.x == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(n.ego.pos.y == 0.0);
    CHECK(n.ego.speed == 1.0);
    CHECK(n.time == doctest::Approx(0.1));

    // steer 0 for 100 steps: y stays 0 exactly
    WorldState s = bare_world();
    s.ego.speed = 3.0;
    for (int i = 0; i < 100; ++i) s = step_world(s, {0.0, 0.1}, cfg.sim_dt, cfg);
    CHECK(s.ego.pos.y == 0.0);
    CHECK(s.ego.heading == 0.0);

    CHECK_THROWS_AS(step_world(w, {0, 0}, 0.0, cfg), std::invalid_argument);
    CHECK_THROWS_AS(step_world(w, {0, 0}, 0.11, cfg), std::invalid_argument);
    CHECK_THROWS_AS(step_world(w, {0, 0}, -0.05, cfg), std::invalid_argument);
}

TEST_CASE("step_world: acceleration rate cap binds at full throttle") {
    RunConfig cfg = desk_cfg();
    WorldState w = bare_world();
    for (int i = 0; i < 20; ++i) w = step_world(w, {0.0, 1.0}, cfg.sim_dt, cfg);
    CHECK(w.ego.speed <= 0.2 + 1e-12);
    CHECK(w.ego.speed == doctest::Approx(0.2));
    // speed never goes negative under full brake
    for (int i = 0; i < 40; ++i) w = step_world(w, {0.0, -1.0}, cfg.sim_dt, cfg);
    CHECK(w.ego.speed == 0.0);
}

TEST_CASE("step_world: fixed steer traces a circular arc of radius L/tan(delta)") {
    RunConfig cfg = desk_cfg();
    const double steer = 0.5;
    const double delta = steer * cfg.max_steer_deg * M_PI / 180.0;
    const double radius = cfg.wheelbase / std::tan(delta);

    WorldState w = bare_world();
    w.ego.speed = 2.0;
    // positive steer turns right: the center is at (0, -radius)
    const Vec2 center{0.0, -radius};
    for (int i = 0; i < 400; ++i) {
        w = step_world(w, {steer, 0.0}, 0.01, cfg);
        const double r = (w.ego.pos - center).norm();
        CHECK(std::abs(r - radius) / radius < 1e-6);
    }
    // left steer mirrors
    WorldState l = bare_world();
    l.ego.speed = 2.0;
    l = step_world(l, {-steer, 0.0}, 0.01, cfg);
    CHECK(l.ego.pos.y > 0.0);
}

TEST_CASE("scripted actors advance deterministically") {
    RunConfig cfg = desk_cfg();
    WorldState w = bare_world();
    Actor cruise;
    cruise.pos = {10, 0};
    cruise.script = {ActorScript::Type::Cruise, {1, 0}, 2.0};
    Actor crosser;
    crosser.kind = ActorKind::Pedestrian;
    crosser.pos = {20, -5};
    crosser.script.type = ActorScript::Type::Cross;
    crosser.script.dir = {0, 1};
    crosser.script.speed = 1.0;
    crosser.script.start_time = 1.0;
    crosser.script.span = 2.0;
    w.actors = {cruise, crosser};

    for (int i = 0; i < 100; ++i) w = step_world(w, {0, 0}, 0.05, cfg);  // 5 s
    CHECK(w.actors[0].pos.x == doctest::Approx(20.0).epsilon(1e-12));
    // crosser walked from t=1 but stops after its 2 m span
    CHECK(w.actors[1].pos.y == doctest::Approx(-3.0).epsilon(1e-9));
    CHECK(w.actors[1].speed == 0.0);
}

TEST_CASE("make_scenario: determinism and constructor contracts") {
    RunConfig cfg = desk_cfg();
    for (ScenarioKind k : {ScenarioKind::Follow, ScenarioKind::LeadVehicleStop,
                           ScenarioKind::PedestrianCrossing, ScenarioKind::IntersectionTurn,
                           ScenarioKind::LaneChange, ScenarioKind::DenseTraffic}) {
        for (std::uint64_t seed : {0ull, 1ull, 7ull}) {
            WorldState a = make_scenario({k, seed}, cfg);
            WorldState b = make_scenario({k, seed}, cfg);
            CHECK(a.ego.pos == b.ego.pos);
            CHECK(a.route == b.route);
            REQUIRE(a.actors.size() == b.actors.size());
            for (std::size_t i = 0; i < a.actors.size(); ++i) {
                CHECK(a.actors[i].pos == b.actors[i].pos);
                CHECK(a.actors[i].script.speed == b.actors[i].script.speed);
                CHECK(a.actors[i].script.start_time == b.actors[i].script.start_time);
            }
            CHECK(a.route.size() >= 2);
            CHECK(a.timeout > 0.0);
        }
    }

    // dense traffic: at least 6 actors within 50 m of the start
    WorldState dense = make_scenario({ScenarioKind::DenseTraffic, 0}, cfg);
    std::size_t near = 0;
    for (const Actor& a : dense.actors)
        if (a.pos.norm() <= 50.0) ++near;
    CHECK(near >= 6);

    // pedestrian crossing: at least one pedestrian scripted across the lane
    WorldState ped = make_scenario({ScenarioKind::PedestrianCrossing, 0}, cfg);
    bool crosser = false;
    for (const Actor& a : ped.actors)
        if (a.kind == ActorKind::Pedestrian && a.script.type == ActorScript::Type::Cross &&
            std::abs(a.script.dir.y) > 0.5)
            crosser = true;
    CHECK(crosser);

    CHECK_THROWS_AS(scenario_from_name("freeway-merge"), std::invalid_argument);
    CHECK(scenario_from_name("lane-change") == ScenarioKind::LaneChange);
}

TEST_CASE("detect_infractions: collisions, dedup and classification") {
    WorldState prev = bare_world();
    prev.ego.pos = {0, 0};
    Actor ped;
    ped.kind = ActorKind::Pedestrian;
    ped.pos = {50, 0};
    ped.half_extent = {0.35, 0.35};
    prev.actors = {ped};

    // far apart: no event
    WorldState next = prev;
    next.time = 0.05;
    CHECK(detect_infractions(prev, next).empty());

    // ego placed onto the pedestrian: exactly one collision-pedestrian event
    next.ego.pos = {50, 0};
    auto events = detect_infractions(prev, next);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == InfractionKind::CollisionPedestrian);
    // still overlapping on the following step: no second event
    WorldState next2 = next;
    next2.time = 0.10;
    CHECK(detect_infractions(next, next2).empty());

    // vehicle and obstacle map to their own kinds
    WorldState pv = bare_world();
    Actor veh;
    veh.kind = ActorKind::Vehicle;
    veh.pos = {30, 0};
    veh.half_extent = {2.2, 0.9};
    pv.actors = {veh};
    WorldState nv = pv;
    nv.ego.pos = {30, 0};
    REQUIRE(detect_infractions(pv, nv).size() == 1);
    CHECK(detect_infractions(pv, nv)[0].kind == InfractionKind::CollisionVehicle);

    nv.actors[0].kind = ActorKind::Obstacle;
    pv.actors[0].kind = ActorKind::Obstacle;
    CHECK(detect_infractions(pv, nv)[0].kind == InfractionKind::CollisionLayout);
}

TEST_CASE("detect_infractions: blocked fires once at the 90 s threshold") {
    RunConfig cfg = desk_cfg();
    WorldState w = bare_world();
    std::size_t blocked_events = 0;
    // stationary ego for 95 simulated seconds
    for (int i = 0; i < 1900; ++i) {
        WorldState n = step_world(w, {0, 0}, cfg.sim_dt, cfg);
        for (const auto& e : detect_infractions(w, n))
            if (e.kind == InfractionKind::Blocked) ++blocked_events;
        w = n;
    }
    CHECK(blocked_events == 1);
}

TEST_CASE("detect_infractions: off-road, deviation and timeout edges") {
    WorldState prev = bare_world();
    WorldState next = prev;
    next.ego.pos = {10, 5.0};  // lane half-width is 2
    auto events = detect_infractions(prev, next);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == InfractionKind::OffRoad);

    // already off-road: no repeat
    WorldState next2 = next;
    next2.ego.pos = {11, 6.0};
    CHECK(detect_infractions(next, next2).empty());

    WorldState dev = bare_world();
    WorldState devn = dev;
    devn.ego.pos = {10, 31.0};
    bool saw_dev = false;
    for (const auto& e : detect_infractions(dev, devn))
        if (e.kind == InfractionKind::RouteDeviation) saw_dev = true;
    CHECK(saw_dev);

    WorldState t0 = bare_world();
    t0.timeout = 10.0;
    t0.time = 9.99;
    WorldState t1 = t0;
    t1.time = 10.01;
    REQUIRE(detect_infractions(t0, t1).size() == 1);
    CHECK(detect_infractions(t0, t1)[0].kind == InfractionKind::Timeout);
}

TEST_CASE("render: empty road, centered vehicle, lateral monotonicity") {
    RunConfig cfg = desk_cfg();
    WorldState w = bare_world();
    RenderResult empty = render_front_view(w, cfg);
    CHECK(empty.truth.empty());
    CHECK(empty.image.shape == Shape{3, cfg.image_size, cfg.image_size});
    CHECK(all_finite(empty.image));
    for (double v : empty.image.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // one vehicle 10 m ahead: exactly one vehicle box, centered
    Actor veh;
    veh.kind = ActorKind::Vehicle;
    veh.pos = {10, 0};
    veh.half_extent = {2.2, 0.9};
    w.actors = {veh};
    RenderResult one = render_front_view(w, cfg);
    REQUIRE(one.truth.size() == 1);
    CHECK(one.truth[0].cls() == ObjectClass::Vehicle);
    CHECK(one.truth[0].box[0] == doctest::Approx(0.5).epsilon(0.05));
    // the image actually contains the vehicle color
    bool painted = false;
    const std::size_t s = cfg.image_size;
    for (std::size_t i = 0; i < s * s; ++i)
        if (one.image.data[i] == 0.85) painted = true;
    CHECK(painted);

    // box center moves left in the image as the actor moves left in the world
    double prev_cx = 2.0;
    for (double y = -3.0; y <= 3.0; y += 0.25) {
        w.actors[0].pos = {10, y};
        RenderResult r = render_front_view(w, cfg);
        REQUIRE(r.truth.size() == 1);
        CHECK(r.truth[0].box[0] <= prev_cx + 1e-12);  // y left => smaller cx
        prev_cx = r.truth[0].box[0];
    }

    // nearer actors draw taller boxes
    w.actors[0].pos = {6, 0};
    const double h_near = render_front_view(w, cfg).truth[0].box[3];
    w.actors[0].pos = {30, 0};
    const double h_far = render_front_view(w, cfg).truth[0].box[3];
    CHECK(h_near > h_far);

    // behind or beyond the clip range: not drawn
    w.actors[0].pos = {-5, 0};
    CHECK(render_front_view(w, cfg).truth.empty());
    w.actors[0].pos = {200, 0};
    CHECK(render_front_view(w, cfg).truth.empty());

    // rendering is deterministic
    w.actors[0].pos = {12, 1};
    CHECK(render_front_view(w, cfg).image.data == render_front_view(w, cfg).image.data);
}

TEST_CASE("expert: cruise on empty road, stop behind a blocked lane") {
    RunConfig cfg = desk_cfg();
    WorldState w = bare_world();
    w.ego.speed = cfg.cruise_speed;
    ExpertPlan p = expert_plan(w, cfg);
    CHECK(p.target_speed == doctest::Approx(cfg.cruise_speed));
    REQUIRE(p.waypoints.size() == cfg.waypoints);
    for (const Vec2& wp : p.waypoints) CHECK(std::abs(wp.y) < 1e-9);  // on the centerline
    // ordered goal -> ego: x decreasing
    for (std::size_t i = 1; i < p.waypoints.size(); ++i)
        CHECK(p.waypoints[i].x < p.waypoints[i - 1].x);

    // stopped lead vehicle 5 m ahead: desired speed 0
    Actor lead;
    lead.pos = {5, 0};
    lead.half_extent = {2.2, 0.9};
    w.actors = {lead};
    ExpertPlan stop = expert_plan(w, cfg);
    CHECK(stop.target_speed == 0.0);

    // the controller then brakes
    VehicleController ctl(cfg);
    auto [plan, act] = expert_policy(w, cfg, ctl, cfg.sim_dt);
    CHECK(act.throttle < 0.0);
}

TEST_CASE("episodes are bit-identical across runs") {
    RunConfig cfg = desk_cfg();
    for (ScenarioKind k : {ScenarioKind::Follow, ScenarioKind::PedestrianCrossing}) {
        ExpertAgent a1(cfg), a2(cfg);
        EpisodeResult r1 = run_episode(a1, {k, 3}, cfg);
        EpisodeResult r2 = run_episode(a2, {k, 3}, cfg);
        CHECK(r1.trace == r2.trace);
        CHECK(r1.completion == r2.completion);
        REQUIRE(r1.events.size() == r2.events.size());
        for (std::size_t i = 0; i < r1.events.size(); ++i) {
            CHECK(r1.events[i].kind == r2.events[i].kind);
            CHECK(r1.events[i].time == r2.events[i].time);
        }
    }
}

TEST_CASE("expert drives every scenario kind collision-free (smoke seeds)") {
    RunConfig cfg = desk_cfg();
    ExpertAgent agent(cfg);
    for (ScenarioKind k : {ScenarioKind::Follow, ScenarioKind::LeadVehicleStop,
                           ScenarioKind::PedestrianCrossing, ScenarioKind::IntersectionTurn,
                           ScenarioKind::LaneChange, ScenarioKind::DenseTraffic}) {
        for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
            EpisodeResult r = run_episode(agent, {k, seed}, cfg);
            INFO("scenario ", scenario_name(k), " seed ", seed, " completion ", r.completion);
            for (const auto& e : r.events) {
                INFO("event ", infraction_name(e.kind), " at t=", e.time, " (", e.position.x, ",",
                     e.position.y, ")");
                CHECK(e.kind != InfractionKind::CollisionPedestrian);
                CHECK(e.kind != InfractionKind::CollisionVehicle);
                CHECK(e.kind != InfractionKind::CollisionLayout);
            }
            CHECK(r.completion >= 95.0);
            CHECK(!r.crashed);
        }
    }
}
