#include <doctest.h>

#include <filesystem>
#include <unistd.h>

#include "deskdrive/bench.hpp"
#include "deskdrive/config.hpp"

using namespace deskdrive;

namespace {

RunConfig desk_cfg() {
    RunConfig cfg;
    cfg.validate();
    return cfg;
}

RouteResult route(double completion, std::vector<InfractionKind> kinds) {
    RouteResult r;
    r.scenario = "follow";
    r.completion = completion;
    r.km = 0.2;
    r.route = {{0, 0}, {200, 0}};
    r.path = {{0, 0}, {100, 0.5}, {200, 0}};
    double t = 1.0;
    for (InfractionKind k : kinds) r.events.push_back({k, t++, {10, 0}});
    return r;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("deskdrive_bench_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static std::size_t& counter() {
        static std::size_t c = 0;
        return c;
    }
    std::string str(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("score_route: stated scoring law examples") {
    RunConfig cfg = desk_cfg();
    CHECK(score_route(route(100, {}), cfg) == 100.0);
    CHECK(score_route(route(50, {InfractionKind::CollisionVehicle}), cfg) ==
          doctest::Approx(30.0).epsilon(1e-15));
    CHECK(score_route(route(100, {InfractionKind::CollisionPedestrian,
                                  InfractionKind::CollisionPedestrian}),
                      cfg) == doctest::Approx(25.0).epsilon(1e-15));

    RouteResult bad = route(120, {});
    CHECK_THROWS_AS(score_route(bad, cfg), std::invalid_argument);
}

TEST_CASE("scoring is multiplicative, order-independent and monotone") {
    RunConfig cfg = desk_cfg();
    Rng rng(13);
    const InfractionKind all[] = {
        InfractionKind::CollisionPedestrian, InfractionKind::CollisionVehicle,
        InfractionKind::CollisionLayout,     InfractionKind::OffRoad,
        InfractionKind::RouteDeviation,      InfractionKind::Blocked,
        InfractionKind::Timeout};
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = rng.index(6);
        std::vector<InfractionKind> kinds;
        for (std::size_t i = 0; i < n; ++i) kinds.push_back(all[rng.index(7)]);
        const double completion = rng.uniform(0, 100);

        // independent recomputation of the multiplicative law
        double expect = completion;
        for (InfractionKind k : kinds) {
            switch (k) {
                case InfractionKind::CollisionPedestrian: expect *= cfg.penalty_pedestrian; break;
                case InfractionKind::CollisionVehicle: expect *= cfg.penalty_vehicle; break;
                case InfractionKind::CollisionLayout: expect *= cfg.penalty_layout; break;
                case InfractionKind::OffRoad: expect *= 0.7; break;
                default: break;  // episode-ending kinds carry no multiplier
            }
        }
        RouteResult r = route(completion, kinds);
        CHECK(score_route(r, cfg) == doctest::Approx(expect).epsilon(1e-12));

        // order independence
        std::reverse(r.events.begin(), r.events.end());
        CHECK(score_route(r, cfg) == doctest::Approx(expect).epsilon(1e-12));

        // adding an infraction never raises the score
        RouteResult more = r;
        more.events.push_back({all[rng.index(7)], 99.0, {0, 0}});
        CHECK(score_route(more, cfg) <= score_route(r, cfg) + 1e-12);

        // raising completion never lowers it
        RouteResult better = r;
        better.completion = std::min(100.0, completion + 5.0);
        CHECK(score_route(better, cfg) >= score_route(r, cfg) - 1e-12);
    }
}

TEST_CASE("aggregate report equals recomputation from per-route results") {
    RunConfig cfg = desk_cfg();
    std::vector<RouteResult> routes = {
        route(100, {}),
        route(80, {InfractionKind::CollisionVehicle}),
        route(40, {InfractionKind::CollisionPedestrian, InfractionKind::OffRoad}),
    };
    BenchmarkReport rep = aggregate_report(routes, cfg);
    double ds = 0, comp = 0;
    for (const RouteResult& r : routes) {
        ds += score_route(r, cfg);
        comp += r.completion;
    }
    CHECK(rep.driving_score == doctest::Approx(ds / 3).epsilon(1e-15));
    CHECK(rep.route_completion == doctest::Approx(comp / 3).epsilon(1e-15));
    CHECK(rep.total_km == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(rep.rate_per_km.at("collision-vehicle") == doctest::Approx(1.0 / 0.6));
    CHECK(rep.rate_per_km.at("blocked") == 0.0);

    CHECK_THROWS_AS(aggregate_report({}, cfg), std::invalid_argument);
}

TEST_CASE("expert benchmark: zero collision rows, identical across runs") {
    RunConfig cfg = desk_cfg();
    std::vector<ScenarioSpec> suite = {{ScenarioKind::Follow, 0},
                                       {ScenarioKind::PedestrianCrossing, 1}};
    ExpertAgent agent(cfg);
    BenchmarkReport a = run_benchmark(agent, suite, cfg);
    CHECK(a.rate_per_km.at("collision-pedestrian") == 0.0);
    CHECK(a.rate_per_km.at("collision-vehicle") == 0.0);
    CHECK(a.rate_per_km.at("collision-layout") == 0.0);
    CHECK(a.driving_score > 90.0);

    ExpertAgent agent2(cfg);
    BenchmarkReport b = run_benchmark(agent2, suite, cfg);
    CHECK(a.driving_score == b.driving_score);
    CHECK(a.total_km == b.total_km);

    CHECK_THROWS_AS(run_benchmark(agent, {}, cfg), std::invalid_argument);
}

TEST_CASE("emit_report: files, markers, lossless CSV round-trip") {
    RunConfig cfg = desk_cfg();
    std::vector<RouteResult> routes = {route(100, {}),
                                       route(60, {InfractionKind::CollisionVehicle,
                                                  InfractionKind::OffRoad})};
    routes[1].seed = 4;
    BenchmarkReport rep = aggregate_report(routes, cfg);

    TempDir tmp;
    const std::string dir = tmp.str("report");
    emit_report(rep, dir);
    CHECK(std::filesystem::exists(dir + "/metrics.csv"));
    CHECK(std::filesystem::exists(dir + "/events.log"));
    CHECK(std::filesystem::exists(dir + "/route_follow_0.svg"));
    CHECK(std::filesystem::exists(dir + "/route_follow_4.svg"));

    // round-trip
    auto rows = read_metrics_csv(dir + "/metrics.csv");
    auto expect = report_rows(rep);
    REQUIRE(rows.size() == expect.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].first == expect[i].first);
        CHECK(rows[i].second == expect[i].second);  // %.17g precision: bit-exact
    }
    // zero-filled placeholder rows keep the table shape
    CHECK(rows[6].first == "Red light infractions");
    CHECK(rows[6].second == 0.0);
    CHECK(rows[7].first == "Stop sign infractions");
    CHECK(rows[7].second == 0.0);

    // one marker per infraction event in the plot
    std::ifstream svg(dir + "/route_follow_4.svg");
    std::string text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
    std::size_t markers = 0, pos = 0;
    while ((pos = text.find("<circle", pos)) != std::string::npos) {
        ++markers;
        pos += 7;
    }
    CHECK(markers == 2);

    CHECK_THROWS_AS(emit_report(rep, "/proc/definitely/not/writable"), std::invalid_argument);
}
