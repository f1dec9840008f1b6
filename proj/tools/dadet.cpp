#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dadet/errors.hpp"
#include "dadet/harness.hpp"

namespace fs = std::filesystem;
using namespace dadet;

namespace {

struct TrainFlags {
    std::string config_path;
    std::string preset = "desk";
    std::string data_dir;
    std::string out_dir;
    std::string mode;
    std::string variant;
    std::string scales;
    std::optional<double> lambda;
    std::optional<int> batch_size;
    std::optional<long> iterations;
    std::optional<double> learning_rate;
    std::optional<double> multiplier;
    std::optional<std::uint64_t> seed;
    std::optional<long> checkpoint_every;
    std::optional<long> eval_every;
    int print_every = 100;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
    app->add_option("--config", f.config_path, "JSON run configuration");
    app->add_option("--preset", f.preset, "Defaults before the config file: desk or full")
        ->check(CLI::IsMember({"desk", "full"}));
    app->add_option("--data", f.data_dir, "Dataset directory");
    app->add_option("--out", f.out_dir, "Output directory");
    app->add_option("--mode", f.mode, "adapt, source_only or oracle");
    app->add_option("--variant", f.variant, "baseline, pfr, uc or integrated");
    app->add_option("--scales", f.scales, "Active DAN scales, e.g. F1+F3");
    app->add_option("--lambda", f.lambda, "Gradient reversal coefficient");
    app->add_option("--batch-size", f.batch_size);
    app->add_option("--iterations", f.iterations);
    app->add_option("--lr", f.learning_rate, "Base learning rate");
    app->add_option("--multiplier", f.multiplier, "Channel multiplier");
    app->add_option("--seed", f.seed, "Initialization and batch-order seed");
    app->add_option("--checkpoint-every", f.checkpoint_every);
    app->add_option("--eval-every", f.eval_every);
    app->add_option("--print-every", f.print_every, "Progress line cadence (0 = silent)");
}

RunConfig resolve_config(const TrainFlags& f) {
    RunConfig c = f.preset == "full" ? RunConfig{} : RunConfig::desk_scale();
    if (!f.config_path.empty()) c = load_run_config(f.config_path, c);
    if (!f.data_dir.empty()) c.data_dir = f.data_dir;
    if (!f.out_dir.empty()) c.output_dir = f.out_dir;
    if (!f.mode.empty()) {
        const auto m = parse_training_mode(f.mode);
        if (!m) throw ConfigError("unknown mode '" + f.mode + "'");
        c.mode = *m;
    }
    if (!f.variant.empty()) {
        const auto k = parse_dan_kind(f.variant);
        if (!k) throw ConfigError("unknown variant '" + f.variant + "'");
        c.dan.kind = *k;
    }
    if (!f.scales.empty()) {
        const auto s = ScaleSet::parse(f.scales);
        if (!s) throw ConfigError("bad scale set '" + f.scales + "'");
        c.dan.active_scales = *s;
    }
    if (f.lambda) c.grl.lambda = *f.lambda;
    if (f.batch_size) c.batch_size = *f.batch_size;
    if (f.iterations) c.iterations = *f.iterations;
    if (f.learning_rate) c.optimizer.learning_rate = *f.learning_rate;
    if (f.multiplier) c.detector.channel_multiplier = *f.multiplier;
    if (f.seed) c.init_seed = c.stream_seed = *f.seed;
    if (f.checkpoint_every) c.checkpoint_every = *f.checkpoint_every;
    if (f.eval_every) c.eval_every = *f.eval_every;
    if (c.data_dir.empty()) throw ConfigError("no dataset directory (--data)");
    c.validate();
    return c;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << j.dump(2) << "\n";
}

ProgressFn printer(int every) {
    if (every <= 0) return {};
    return [every](const LogRecord& r) {
        if ((r.iteration + 1) % every != 0) return;
        std::fprintf(stderr, "iter %6ld  L_det %.4f  L_dc %.4f  L_t %.4f  lr %.5f  %.1fs\n", r.iteration + 1,
                     r.detection, r.domain, r.total, r.learning_rate, r.elapsed_seconds);
    };
}

int cmd_gen_data(const std::string& out, std::uint64_t seed, double strength, int n_train, int n_val) {
    DatasetSpec spec;
    spec.seed = seed;
    spec.n_train = n_train;
    spec.n_val = n_val;
    spec.scene.corruption.strength = strength;
    spec.scene.validate();
    if (n_train <= 0 || n_val <= 0) throw ConfigError("--n-train and --n-val must be positive");
    write_dataset(generate_dataset(spec), out);
    std::printf("wrote %d+%d images per domain to %s\n", n_train, n_val, out.c_str());
    return 0;
}

int cmd_train(const TrainFlags& flags) {
    const RunConfig config = resolve_config(flags);
    if (config.output_dir.empty()) throw ConfigError("no output directory (--out)");
    const Dataset dataset = load_dataset(config.data_dir);
    fs::create_directories(config.output_dir);
    const fs::path out(config.output_dir);
    write_json(config.to_json(), out / "config.json");

    Trainer trainer(config, dataset);
    try {
        trainer.run(printer(flags.print_every));
    } catch (const NumericAbort&) {
        trainer.log().write_csv(out / "log.csv");
        throw;
    }
    trainer.log().write_csv(out / "log.csv");
    const Checkpoint ckpt = trainer.model().to_checkpoint();
    save_checkpoint(ckpt, out / "final.ckpt");
    save_checkpoint(export_inference_model(ckpt), out / "model.ckpt");
    const EvalResult eval = evaluate_split(trainer.model().detector(), dataset.target_val, config.eval_confidence,
                                           config.nms_iou);
    nlohmann::json summary = eval_to_json(eval);
    nlohmann::json history = nlohmann::json::array();
    for (const EvalPoint& p : trainer.evaluations()) history.push_back({{"iteration", p.iteration}, {"map", p.map_score}});
    summary["history"] = history;
    write_json(summary, out / "eval_target_val.json");
    std::printf("target_val mAP %.2f\n", eval.map_score * 100.0);
    return 0;
}

int cmd_eval(const std::string& weights, const std::string& data, const std::string& split, double iou,
             double conf, double nms_iou, int min_gt, const std::string& json_out) {
    if (!(conf > 0.0 && conf < 1.0)) throw ConfigError("--conf-thresh must lie in (0, 1)");
    if (!(iou > 0.0 && iou <= 1.0)) throw ConfigError("--iou must lie in (0, 1]");
    Model model = Model::from_checkpoint(load_checkpoint(weights));
    const Dataset dataset = load_dataset(data);
    const Split& s = dataset.split(split);
    const EvalResult result =
        evaluate_split(model.detector(), s, conf, nms_iou, EvalOptions{iou, min_gt});
    std::cout << format_eval_table({{fs::path(weights).stem().string(), result}}, model.config().detector.num_classes);
    if (!json_out.empty()) write_json(eval_to_json(result), json_out);
    return 0;
}

int cmd_ablate(const TrainFlags& flags, const std::string& subsets_arg) {
    RunConfig config = resolve_config(flags);
    std::vector<ScaleSet> subsets;
    if (subsets_arg == "all") {
        subsets = all_scale_subsets();
    } else {
        std::stringstream ss(subsets_arg);
        std::string token;
        while (std::getline(ss, token, ',')) {
            const auto s = ScaleSet::parse(token);
            if (!s) throw ConfigError("bad subset '" + token + "'");
            subsets.push_back(*s);
        }
    }
    const Dataset dataset = load_dataset(config.data_dir);
    const AblationTable table = run_ablation(config, subsets, dataset, [](const std::string& m) {
        std::fprintf(stderr, "%s\n", m.c_str());
    });
    std::cout << table.format(config.detector.num_classes);
    if (!config.output_dir.empty()) {
        fs::create_directories(config.output_dir);
        write_json(table.to_json(), fs::path(config.output_dir) / "ablation.json");
        std::ofstream(fs::path(config.output_dir) / "ablation.txt") << table.format(config.detector.num_classes);
    }
    return 0;
}

int cmd_probe(const std::string& weights, const std::string& data, int max_per_domain, bool raw) {
    const Dataset dataset = load_dataset(data);
    ProbeOptions options;
    options.max_per_domain = max_per_domain;
    if (raw) {
        std::printf("raw-pixel probe accuracy %.4f\n",
                    raw_pixel_probe(dataset.source_val, dataset.target_val, options));
        return 0;
    }
    if (weights.empty()) throw ConfigError("--weights is required unless --raw is given");
    const Model model = Model::from_checkpoint(load_checkpoint(weights));
    const ProbeResult r = domain_confusion_probe(model.detector(), dataset.source_val, dataset.target_val, options);
    for (const std::string& n : r.notes) std::fprintf(stderr, "note: %s\n", n.c_str());
    std::printf("samples per domain %d\n", r.samples_per_domain);
    for (Scale s : {Scale::F1, Scale::F2, Scale::F3}) {
        std::printf("%s probe accuracy %.4f\n", scale_name(s), r.accuracy[static_cast<int>(s)]);
    }
    std::printf("mean probe accuracy %.4f\n", r.mean_accuracy());
    return 0;
}

int cmd_report(const std::string& log_path, const std::string& out) {
    const TrainingLog log = TrainingLog::read_csv(log_path);
    const ReportResult r = write_report(log, out);
    for (const std::string& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("wrote %zu rows to %s\n", r.rows, out.c_str());
    return 0;
}

int cmd_export(const std::string& weights, const std::string& out) {
    save_checkpoint(export_inference_model(load_checkpoint(weights)), out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiscale adversarial domain adaptation for a single-stage detector"};
    app.require_subcommand(1);

    std::string gd_out;
    std::uint64_t gd_seed = 1;
    double gd_strength = CorruptionConfig{}.strength;
    int gd_train = 2000, gd_val = 500;
    auto* gen = app.add_subcommand("gen-data", "Render the synthetic clear/foggy dataset");
    gen->add_option("--out", gd_out)->required();
    gen->add_option("--seed", gd_seed);
    gen->add_option("--corruption-strength", gd_strength);
    gen->add_option("--n-train", gd_train, "Training images per domain");
    gen->add_option("--n-val", gd_val, "Validation images per domain");

    TrainFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train a detector");
    add_train_flags(train_cmd, train_flags);

    std::string ev_weights, ev_data, ev_split = "target_val", ev_json;
    double ev_iou = kDefaultMatchIou, ev_conf = 0.01, ev_nms = 0.45;
    int ev_min_gt = 1;
    auto* eval = app.add_subcommand("eval", "Per-class AP and mAP on a split");
    eval->add_option("--weights", ev_weights)->required();
    eval->add_option("--data", ev_data)->required();
    eval->add_option("--split", ev_split);
    eval->add_option("--iou", ev_iou);
    eval->add_option("--conf-thresh", ev_conf);
    eval->add_option("--nms-iou", ev_nms);
    eval->add_option("--min-gt", ev_min_gt, "Classes with fewer ground-truth boxes are excluded");
    eval->add_option("--json", ev_json);

    TrainFlags ablate_flags;
    std::string subsets = "all";
    auto* ablate = app.add_subcommand("ablate", "Per-scale ablation with the baseline DAN");
    add_train_flags(ablate, ablate_flags);
    ablate->add_option("--subsets", subsets, "'all' or comma-separated sets such as none,F1,F1+F2");

    std::string pr_weights, pr_data;
    int pr_max = 250;
    bool pr_raw = false;
    auto* probe = app.add_subcommand("probe", "Domain-confusion probe on frozen backbone features");
    probe->add_option("--weights", pr_weights);
    probe->add_option("--data", pr_data)->required();
    probe->add_option("--max-per-domain", pr_max);
    probe->add_flag("--raw", pr_raw, "Probe raw pixels instead of features");

    std::string rp_log, rp_out;
    auto* report = app.add_subcommand("report", "Domain-loss curves from a training log");
    report->add_option("--log", rp_log)->required();
    report->add_option("--out", rp_out)->required();

    std::string ex_weights, ex_out;
    auto* exp = app.add_subcommand("export", "Drop the domain classifier from a checkpoint");
    exp->add_option("--weights", ex_weights)->required();
    exp->add_option("--out", ex_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfigError);
    }

    try {
        if (*gen) return cmd_gen_data(gd_out, gd_seed, gd_strength, gd_train, gd_val);
        if (*train_cmd) return cmd_train(train_flags);
        if (*eval) return cmd_eval(ev_weights, ev_data, ev_split, ev_iou, ev_conf, ev_nms, ev_min_gt, ev_json);
        if (*ablate) return cmd_ablate(ablate_flags, subsets);
        if (*probe) return cmd_probe(pr_weights, pr_data, pr_max, pr_raw);
        if (*report) return cmd_report(rp_log, rp_out);
        if (*exp) return cmd_export(ex_weights, ex_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return static_cast<int>(ExitCode::kConfigError);
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return static_cast<int>(ExitCode::kConfigError);
    } catch (const NumericAbort& e) {
        std::fprintf(stderr, "numeric abort: %s\n", e.what());
        return static_cast<int>(ExitCode::kNumericAbort);
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return static_cast<int>(ExitCode::kDataError);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return static_cast<int>(ExitCode::kDataError);
    } catch (const LoadError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return static_cast<int>(ExitCode::kDataError);
    }
    return 0;
}
