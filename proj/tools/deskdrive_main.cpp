// deskdrive: single entry point for the full pipeline — perception
// pretraining, expert data collection, offline imitation training, DAgger,
// benchmarking, the detection-vs-classification ablation and trace plotting.
//
// Exit codes: 0 success, 1 user error (bad flags/config/missing files),
// 2 runtime failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "deskdrive/pipeline.hpp"

namespace dd = deskdrive;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_override;
    std::string suite_override;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key = value configuration file");
    cmd->add_option("--out", opts.out_override, "output directory (overrides the config)");
    cmd->add_option("--suite", opts.suite_override,
                    "comma-separated scenario kinds (overrides the config)");
    cmd->add_option("--seed", opts.seed, "run seed (overrides the config)")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
}

dd::RunConfig resolve_config(const CommonOpts& opts) {
    dd::RunConfig cfg;
    if (!opts.config_path.empty()) cfg = dd::load_config(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    if (!opts.out_override.empty()) cfg.out_dir = opts.out_override;
    if (!opts.suite_override.empty()) {
        cfg.suite.clear();
        std::istringstream is(opts.suite_override);
        std::string item;
        while (std::getline(is, item, ','))
            if (!item.empty()) cfg.suite.push_back(item);
    }
    // DESKDRIVE_OUT is the output root for relative output directories
    if (const char* root = std::getenv("DESKDRIVE_OUT"))
        if (root[0] != '\0' && !fs::path(cfg.out_dir).is_absolute())
            cfg.out_dir = (fs::path(root) / cfg.out_dir).string();
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::uint64_t fnv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    dd::require(f.good(), "cannot checksum missing file: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!f) break;
    }
    return h;
}

// reproducibility manifest: command, config snapshot, artifact checksums
void write_manifest(const dd::RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& artifacts) {
    std::ofstream f(cfg.out_dir + "/manifest_" + command + ".txt");
    dd::require(f.good(), "cannot write run manifest in " + cfg.out_dir);
    f << "command = " << command << "\n";
    f << "[config]\n" << dd::config_to_string(cfg);
    f << "[artifacts]\n";
    for (const std::string& a : artifacts)
        f << a << " fnv1a=" << std::hex << fnv_file(a) << std::dec << "\n";
}

void write_curve(const std::vector<double>& values, const std::string& path) {
    std::ofstream f(path);
    dd::require(f.good(), "cannot write " + path);
    f.precision(17);
    for (std::size_t i = 0; i < values.size(); ++i) f << i << " " << values[i] << "\n";
}

// ---------------------------------------------------------------------------

int cmd_pretrain(const dd::RunConfig& cfg) {
    const auto scenes = dd::make_detection_set(cfg, cfg.seed + 1, cfg.pretrain_images);
    const auto held = dd::make_detection_set(cfg, cfg.seed + 901, cfg.pretrain_images / 4 + 1);

    dd::Detector det(cfg);
    dd::Rng rng(cfg.seed + 2);
    det.init(rng);
    std::cout << "pretraining detector: " << scenes.size() << " scenes, " << cfg.pretrain_steps
              << " steps\n";
    const auto losses = dd::pretrain_detector(det, scenes, cfg.pretrain_steps, cfg.pretrain_lr,
                                              cfg.pretrain_batch, cfg.seed + 2);
    const double l1 = dd::matched_box_l1(det, held);
    std::cout << "first-step loss " << losses.front() << ", last-step loss " << losses.back()
              << ", held-out matched-box L1 " << l1 << "\n";
    dd::save_checkpoint(det.params(), cfg.out_dir + "/detector.ckpt");
    write_curve(losses, cfg.out_dir + "/pretrain_detector_loss.txt");

    dd::ClassifierBaseline cls(cfg);
    dd::Rng rng2(cfg.seed + 3);
    cls.init(rng2);
    std::cout << "pretraining classifier baseline\n";
    const auto closs = dd::pretrain_classifier(cls, scenes, cfg.pretrain_steps, cfg.pretrain_lr,
                                               cfg.pretrain_batch, cfg.seed + 3);
    dd::save_checkpoint(cls.params(), cfg.out_dir + "/classifier.ckpt");
    write_curve(closs, cfg.out_dir + "/pretrain_classifier_loss.txt");

    write_manifest(cfg, "pretrain-detector",
                   {cfg.out_dir + "/detector.ckpt", cfg.out_dir + "/classifier.ckpt"});
    return 0;
}

int cmd_collect(const dd::RunConfig& cfg) {
    std::cout << "collecting expert demonstrations over " << cfg.suite.size() << " kinds x "
              << cfg.suite_seeds << " seeds\n";
    dd::Dataset ds = dd::collect_offline(cfg);
    const std::string path = cfg.out_dir + "/dataset_offline.dd";
    dd::save_dataset(ds, path);
    std::cout << "wrote " << ds.records.size() << " records to " << path << "\n";
    write_manifest(cfg, "collect", {path});
    return 0;
}

dd::StudentModel load_model_with_perception(const dd::RunConfig& cfg, dd::PerceptionArm arm,
                                            const std::string& perception_ckpt) {
    dd::StudentModel model(cfg, arm);
    dd::Rng rng(cfg.seed + 4);
    model.init(rng);
    dd::load_checkpoint(model.perception_params(), perception_ckpt);
    return model;
}

int cmd_train(const dd::RunConfig& cfg, const std::string& arm_str, std::string dataset_path,
              std::string perception_ckpt) {
    const dd::PerceptionArm arm = dd::arm_from_name(arm_str);
    if (dataset_path.empty()) dataset_path = cfg.out_dir + "/dataset_offline.dd";
    if (perception_ckpt.empty())
        perception_ckpt = cfg.out_dir + (arm == dd::PerceptionArm::Detection
                                             ? "/detector.ckpt"
                                             : "/classifier.ckpt");
    dd::Dataset ds = dd::load_dataset(dataset_path);
    dd::StudentModel model = load_model_with_perception(cfg, arm, perception_ckpt);
    std::cout << "training " << arm_str << " arm on " << ds.records.size() << " records, "
              << cfg.epochs << " epochs\n";
    dd::TrainLog log = dd::train_offline(model, ds, cfg, cfg.seed + 5);
    std::cout << "epoch loss " << log.epoch_loss.front() << " -> " << log.epoch_loss.back()
              << "\n";
    const std::string dir = cfg.out_dir + "/model_" + arm_str;
    model.save(dir);
    write_curve(log.epoch_loss, dir + "/train_loss.txt");
    write_manifest(cfg, "train", {dir + "/policy.ckpt", dir + "/perception.ckpt"});
    return 0;
}

int cmd_dagger(dd::RunConfig cfg, const std::string& arm_str, std::string model_dir,
               std::string dataset_path, std::size_t rounds_override) {
    const dd::PerceptionArm arm = dd::arm_from_name(arm_str);
    if (model_dir.empty()) model_dir = cfg.out_dir + "/model_" + arm_str;
    if (dataset_path.empty()) dataset_path = cfg.out_dir + "/dataset_offline.dd";
    if (rounds_override > 0) cfg.dagger_rounds = rounds_override;

    dd::StudentModel model(cfg, arm);
    model.load(model_dir);
    dd::Dataset ds = dd::load_dataset(dataset_path);
    const std::vector<dd::ScenarioSpec> suite = dd::make_suite(cfg);
    for (std::size_t r = 1; r <= cfg.dagger_rounds; ++r) {
        dd::DaggerRoundResult res = dd::dagger_round(model, suite, ds, r, cfg);
        std::cout << "dagger round " << r << ": mixed " << res.mixed.records.size()
                  << " records, final loss " << res.log.epoch_loss.back()
                  << ", student completion " << res.mean_completion << "%\n";
        ds = std::move(res.mixed);
    }
    const std::string dir = model_dir + "_dagger";
    model.save(dir);
    const std::string ds_path = cfg.out_dir + "/dataset_dagger.dd";
    dd::save_dataset(ds, ds_path);
    write_manifest(cfg, "dagger", {dir + "/policy.ckpt", ds_path});
    return 0;
}

int cmd_bench(const dd::RunConfig& cfg, const std::string& agent_str,
              const std::string& model_dir) {
    std::unique_ptr<dd::Agent> agent;
    std::unique_ptr<dd::StudentModel> model;
    if (agent_str == "expert") {
        agent = std::make_unique<dd::ExpertAgent>(cfg);
    } else {
        const dd::PerceptionArm arm = dd::arm_from_name(agent_str);
        model = std::make_unique<dd::StudentModel>(cfg, arm);
        model->load(model_dir.empty() ? cfg.out_dir + "/model_" + agent_str : model_dir);
        agent = std::make_unique<dd::StudentAgent>(*model, cfg);
    }
    dd::BenchmarkReport rep = dd::run_benchmark(*agent, dd::make_suite(cfg), cfg);
    std::cout << "driving score " << rep.driving_score << ", route completion "
              << rep.route_completion << ", infraction penalty " << rep.infraction_penalty
              << "\n";
    const std::string dir = cfg.out_dir + "/bench_" + agent->name();
    dd::emit_report(rep, dir);
    write_manifest(cfg, "bench", {dir + "/metrics.csv", dir + "/events.log"});
    return 0;
}

int cmd_ablate(const dd::RunConfig& cfg, std::size_t pairs) {
    // both arms share the expert dataset and the seeds; perception checkpoints
    // are reused when present
    auto perception_ready = [&](const char* name) {
        return fs::exists(cfg.out_dir + "/" + name);
    };
    if (!perception_ready("detector.ckpt") || !perception_ready("classifier.ckpt")) {
        std::cout << "perception checkpoints missing; pretraining first\n";
        cmd_pretrain(cfg);
    }
    const std::string ds_path = cfg.out_dir + "/dataset_offline.dd";
    if (!fs::exists(ds_path)) {
        std::cout << "offline dataset missing; collecting first\n";
        cmd_collect(cfg);
    }
    dd::Dataset ds = dd::load_dataset(ds_path);

    dd::StudentModel det_model =
        load_model_with_perception(cfg, dd::PerceptionArm::Detection, cfg.out_dir + "/detector.ckpt");
    dd::StudentModel cls_model = load_model_with_perception(cfg, dd::PerceptionArm::Classifier,
                                                            cfg.out_dir + "/classifier.ckpt");
    std::cout << "training both arms on " << ds.records.size() << " records\n";
    dd::train_offline(det_model, ds, cfg, cfg.seed + 5);
    dd::train_offline(cls_model, ds, cfg, cfg.seed + 5);

    // identical on-policy refinement for both arms
    const std::vector<dd::ScenarioSpec> suite = dd::make_suite(cfg);
    dd::Dataset det_mixed = ds, cls_mixed = ds;
    for (std::size_t round = 1; round <= cfg.dagger_rounds; ++round) {
        dd::DaggerRoundResult dr = dd::dagger_round(det_model, suite, det_mixed, round, cfg);
        dd::DaggerRoundResult cr = dd::dagger_round(cls_model, suite, cls_mixed, round, cfg);
        det_mixed = std::move(dr.mixed);
        cls_mixed = std::move(cr.mixed);
        std::cout << "dagger round " << round << ": detection completion " << dr.mean_completion
                  << "%, classifier completion " << cr.mean_completion << "%\n";
    }
    det_model.save(cfg.out_dir + "/ablation/model_detection");
    cls_model.save(cfg.out_dir + "/ablation/model_classifier");

    std::cout << "running " << pairs << " paired dense-traffic episodes per arm\n";
    const auto outcomes = dd::run_paired_ablation(det_model, cls_model, cfg, pairs);
    fs::create_directories(cfg.out_dir + "/ablation");
    const std::string table = cfg.out_dir + "/ablation/paired.csv";
    dd::write_paired_csv(outcomes, table);
    std::cout << "detection arm not worse on " << 100.0 * dd::fraction_detection_not_worse(outcomes)
              << "% of pairs; table at " << table << "\n";
    write_manifest(cfg, "ablate", {table});
    return 0;
}

int cmd_plot(const std::string& trace_path, std::string out_path) {
    std::ifstream f(trace_path);
    dd::require(f.good(), "cannot open trace: " + trace_path);
    if (out_path.empty()) out_path = trace_path + ".svg";

    dd::RouteResult r;
    r.scenario = "trace";
    std::string line;
    while (std::getline(f, line)) {
        double t, x, y, heading, speed, steer, throttle;
        char kind[64];
        if (std::sscanf(line.c_str(),
                        "t=%lf x=%lf y=%lf heading=%lf speed=%lf steer=%lf throttle=%lf", &t, &x,
                        &y, &heading, &speed, &steer, &throttle) == 7) {
            r.path.push_back({x, y});
        } else if (std::sscanf(line.c_str(), "event=%63s t=%lf x=%lf y=%lf", kind, &t, &x, &y) ==
                   4) {
            // marker only; the kind string is carried into the tooltip
            dd::InfractionEvent e;
            e.kind = dd::InfractionKind::CollisionVehicle;
            for (dd::InfractionKind k :
                 {dd::InfractionKind::CollisionPedestrian, dd::InfractionKind::CollisionVehicle,
                  dd::InfractionKind::CollisionLayout, dd::InfractionKind::OffRoad,
                  dd::InfractionKind::RouteDeviation, dd::InfractionKind::Blocked,
                  dd::InfractionKind::Timeout})
                if (std::string(kind) == dd::infraction_name(k)) e.kind = k;
            e.time = t;
            e.position = {x, y};
            r.events.push_back(e);
        } else if (line.rfind("scenario=", 0) == 0) {
            r.scenario = line.substr(9, line.find(' ') - 9);
        }
    }
    dd::require(!r.path.empty(), "trace has no pose lines: " + trace_path);
    dd::write_route_svg(r, out_path);
    std::cout << "wrote " << out_path << " (" << r.path.size() << " poses, " << r.events.size()
              << " events)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deskdrive: end-to-end driving stack — perception, imitation learning, "
                 "simulation and benchmarking"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string arm = "detection";
    std::string dataset_path, perception_ckpt, model_dir, agent = "expert", trace_path, plot_out;
    std::size_t rounds = 0, pairs = 50;

    CLI::App* pretrain = app.add_subcommand("pretrain-detector",
                                            "pretrain both perception arms on synthetic scenes");
    add_common(pretrain, opts);

    CLI::App* collect = app.add_subcommand("collect", "collect expert demonstrations at 2 Hz");
    add_common(collect, opts);

    CLI::App* train = app.add_subcommand("train", "offline imitation training");
    add_common(train, opts);
    train->add_option("--arm", arm, "perception arm: detection | classifier");
    train->add_option("--dataset", dataset_path, "dataset file");
    train->add_option("--perception", perception_ckpt, "perception checkpoint");

    CLI::App* dagger = app.add_subcommand("dagger", "DAgger rounds on a trained model");
    add_common(dagger, opts);
    dagger->add_option("--arm", arm, "perception arm: detection | classifier");
    dagger->add_option("--model", model_dir, "model directory");
    dagger->add_option("--dataset", dataset_path, "starting dataset file");
    dagger->add_option("--rounds", rounds, "number of DAgger rounds (overrides the config)");

    CLI::App* bench = app.add_subcommand("bench", "run the benchmark suite and emit a report");
    add_common(bench, opts);
    bench->add_option("--agent", agent, "expert | detection | classifier");
    bench->add_option("--model", model_dir, "model directory for learned agents");

    CLI::App* ablate =
        app.add_subcommand("ablate", "paired detection-vs-classification comparison");
    add_common(ablate, opts);
    ablate->add_option("--pairs", pairs, "number of paired dense-traffic seeds");

    CLI::App* plot = app.add_subcommand("plot", "render an episode trace to SVG");
    plot->add_option("--trace", trace_path, "episode trace file")->required();
    plot->add_option("--out", plot_out, "output SVG path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;  // unknown command / bad flags: user error
    }

    try {
        if (plot->parsed()) return cmd_plot(trace_path, plot_out);
        const dd::RunConfig cfg = resolve_config(opts);
        if (pretrain->parsed()) return cmd_pretrain(cfg);
        if (collect->parsed()) return cmd_collect(cfg);
        if (train->parsed()) return cmd_train(cfg, arm, dataset_path, perception_ckpt);
        if (dagger->parsed()) return cmd_dagger(cfg, arm, model_dir, dataset_path, rounds);
        if (bench->parsed()) return cmd_bench(cfg, agent, model_dir);
        if (ablate->parsed()) return cmd_ablate(cfg, pairs);
        std::cerr << "no command given\n" << app.help();
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
