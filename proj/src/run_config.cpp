#include <algorithm>
#include <cmath>
#include <fstream>

#include "dadet/errors.hpp"
#include "dadet/harness.hpp"

namespace dadet {
namespace {

using nlohmann::json;

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type: " + j.dump());
    }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : j.items()) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return item.key() == k; }) == known.end()) {
            throw ConfigError("unknown config key '" + where + "." + item.key() + "'");
        }
    }
}

json scales_to_json(const ScaleSet& s) {
    json out = json::array();
    for (Scale sc : s.scales()) out.push_back(scale_name(sc));
    return out;
}

ScaleSet scales_from_json(const json& j) {
    if (j.is_string()) {
        const auto parsed = ScaleSet::parse(j.get<std::string>());
        if (!parsed) throw ConfigError("bad scale set '" + j.get<std::string>() + "'");
        return *parsed;
    }
    if (!j.is_array()) throw ConfigError("dan.scales must be an array or string");
    ScaleSet out;
    for (const json& e : j) {
        const auto parsed = ScaleSet::parse(get_as<std::string>(e, "dan.scales"));
        if (!parsed || parsed->size() != 1) throw ConfigError("bad scale name " + e.dump());
        out.insert(parsed->scales().front());
    }
    return out;
}

}  // namespace

const char* training_mode_name(TrainingMode m) noexcept {
    switch (m) {
        case TrainingMode::Adapt: return "adapt";
        case TrainingMode::SourceOnly: return "source_only";
        case TrainingMode::Oracle: return "oracle";
    }
    return "?";
}

std::optional<TrainingMode> parse_training_mode(const std::string& s) {
    for (TrainingMode m : {TrainingMode::Adapt, TrainingMode::SourceOnly, TrainingMode::Oracle}) {
        if (s == training_mode_name(m)) return m;
    }
    return std::nullopt;
}

double OptimizerConfig::rate_at(long iteration, long total_iterations) const {
    if (iteration < warmup_iterations) {
        return learning_rate * static_cast<double>(iteration + 1) / static_cast<double>(warmup_iterations);
    }
    double rate = learning_rate;
    for (double f : step_fractions) {
        if (static_cast<double>(iteration) >= f * static_cast<double>(total_iterations)) rate *= step_factor;
    }
    return rate;
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (warmup_iterations < 0) throw ConfigError("warmup_iterations must be non-negative");
    for (double f : step_fractions) {
        if (f <= 0.0 || f > 1.0) throw ConfigError("step fractions must lie in (0, 1]");
    }
    if (!(step_factor > 0.0) || step_factor > 1.0) throw ConfigError("step_factor must lie in (0, 1]");
    if (!(dan_rate_scale > 0.0) || !std::isfinite(dan_rate_scale)) throw ConfigError("dan_rate_scale must be positive");
}

RunConfig RunConfig::desk_scale() {
    RunConfig c;
    c.batch_size = 16;
    c.iterations = 2000;
    c.detector.channel_multiplier = 0.125;
    c.detector.image_size = 64;
    return c;
}

void RunConfig::validate() const {
    detector.validate();
    grl.validate();
    optimizer.validate();
    if (batch_size <= 0 || batch_size % 2 != 0) {
        throw ConfigError("batch_size must be positive and even, got " + std::to_string(batch_size));
    }
    if (iterations <= 0) throw ConfigError("iterations must be positive");
    if (checkpoint_every < 0 || eval_every < 0) throw ConfigError("cadences must be non-negative");
    if (!(eval_confidence > 0.0 && eval_confidence < 1.0)) throw ConfigError("eval_confidence must lie in (0, 1)");
    if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw ConfigError("nms_iou must lie in (0, 1)");
    if (uses_dan()) {
        dan.validate();
        // Builds the DAN once to surface width constraints.
        DomainAdaptationNetwork probe(dan, detector.base_channels());
        (void)probe;
    }
}

nlohmann::json RunConfig::to_json() const {
    json anchors = json::array();
    for (const Anchor& a : detector.anchors) anchors.push_back({a.w, a.h});
    return {
        {"mode", training_mode_name(mode)},
        {"detector",
         {{"image_size", detector.image_size},
          {"num_classes", detector.num_classes},
          {"channel_multiplier", detector.channel_multiplier},
          {"stage_depth", detector.stage_depth},
          {"anchors", anchors},
          {"loss_weights",
           {{"objectness", detector.loss_weights.objectness},
            {"classification", detector.loss_weights.classification},
            {"box", detector.loss_weights.box}}}}},
        {"dan", {{"variant", dan_kind_name(dan.kind)}, {"scales", scales_to_json(dan.active_scales)}}},
        {"lambda", grl.lambda},
        {"batch_size", batch_size},
        {"iterations", iterations},
        {"optimizer",
         {{"learning_rate", optimizer.learning_rate},
          {"momentum", optimizer.momentum},
          {"weight_decay", optimizer.weight_decay},
          {"warmup_iterations", optimizer.warmup_iterations},
          {"step_fractions", optimizer.step_fractions},
          {"step_factor", optimizer.step_factor},
          {"dan_rate_scale", optimizer.dan_rate_scale}}},
        {"init_seed", init_seed},
        {"stream_seed", stream_seed},
        {"shuffle", shuffle},
        {"data_dir", data_dir},
        {"output_dir", output_dir},
        {"checkpoint_every", checkpoint_every},
        {"eval_every", eval_every},
        {"eval_confidence", eval_confidence},
        {"nms_iou", nms_iou},
    };
}

RunConfig RunConfig::from_json(const nlohmann::json& j, RunConfig c) {
    reject_unknown(j,
                   {"mode", "detector", "dan", "lambda", "batch_size", "iterations", "optimizer", "init_seed",
                    "stream_seed", "shuffle", "data_dir", "output_dir", "checkpoint_every", "eval_every",
                    "eval_confidence", "nms_iou"},
                   "config");
    if (j.contains("mode")) {
        const auto m = parse_training_mode(get_as<std::string>(j["mode"], "mode"));
        if (!m) throw ConfigError("unknown mode " + j["mode"].dump());
        c.mode = *m;
    }
    if (j.contains("detector")) {
        const json& d = j["detector"];
        reject_unknown(d, {"image_size", "num_classes", "channel_multiplier", "stage_depth", "anchors", "loss_weights"},
                       "detector");
        if (d.contains("image_size")) c.detector.image_size = get_as<int>(d["image_size"], "detector.image_size");
        if (d.contains("num_classes")) c.detector.num_classes = get_as<int>(d["num_classes"], "detector.num_classes");
        if (d.contains("channel_multiplier")) {
            c.detector.channel_multiplier = get_as<double>(d["channel_multiplier"], "detector.channel_multiplier");
        }
        if (d.contains("stage_depth")) c.detector.stage_depth = get_as<int>(d["stage_depth"], "detector.stage_depth");
        if (d.contains("anchors")) {
            const auto pairs = get_as<std::vector<std::array<double, 2>>>(d["anchors"], "detector.anchors");
            if (pairs.size() != c.detector.anchors.size()) {
                throw ConfigError("detector.anchors needs " + std::to_string(c.detector.anchors.size()) + " pairs");
            }
            for (std::size_t i = 0; i < pairs.size(); ++i) c.detector.anchors[i] = {pairs[i][0], pairs[i][1]};
        }
        if (d.contains("loss_weights")) {
            const json& w = d["loss_weights"];
            reject_unknown(w, {"objectness", "classification", "box"}, "detector.loss_weights");
            auto& lw = c.detector.loss_weights;
            if (w.contains("objectness")) lw.objectness = get_as<double>(w["objectness"], "loss_weights.objectness");
            if (w.contains("classification")) {
                lw.classification = get_as<double>(w["classification"], "loss_weights.classification");
            }
            if (w.contains("box")) lw.box = get_as<double>(w["box"], "loss_weights.box");
        }
    }
    if (j.contains("dan")) {
        const json& d = j["dan"];
        reject_unknown(d, {"variant", "scales"}, "dan");
        if (d.contains("variant")) {
            const auto k = parse_dan_kind(get_as<std::string>(d["variant"], "dan.variant"));
            if (!k) throw ConfigError("unknown DAN variant " + d["variant"].dump());
            c.dan.kind = *k;
        }
        if (d.contains("scales")) c.dan.active_scales = scales_from_json(d["scales"]);
    }
    if (j.contains("lambda")) c.grl.lambda = get_as<double>(j["lambda"], "lambda");
    if (j.contains("batch_size")) c.batch_size = get_as<int>(j["batch_size"], "batch_size");
    if (j.contains("iterations")) c.iterations = get_as<long>(j["iterations"], "iterations");
    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        reject_unknown(o,
                       {"learning_rate", "momentum", "weight_decay", "warmup_iterations", "step_fractions",
                        "step_factor", "dan_rate_scale"},
                       "optimizer");
        auto& oc = c.optimizer;
        if (o.contains("learning_rate")) oc.learning_rate = get_as<double>(o["learning_rate"], "learning_rate");
        if (o.contains("momentum")) oc.momentum = get_as<double>(o["momentum"], "momentum");
        if (o.contains("weight_decay")) oc.weight_decay = get_as<double>(o["weight_decay"], "weight_decay");
        if (o.contains("warmup_iterations")) {
            oc.warmup_iterations = get_as<int>(o["warmup_iterations"], "warmup_iterations");
        }
        if (o.contains("step_fractions")) {
            oc.step_fractions = get_as<std::vector<double>>(o["step_fractions"], "step_fractions");
        }
        if (o.contains("step_factor")) oc.step_factor = get_as<double>(o["step_factor"], "step_factor");
        if (o.contains("dan_rate_scale")) oc.dan_rate_scale = get_as<double>(o["dan_rate_scale"], "dan_rate_scale");
    }
    if (j.contains("init_seed")) c.init_seed = get_as<std::uint64_t>(j["init_seed"], "init_seed");
    if (j.contains("stream_seed")) c.stream_seed = get_as<std::uint64_t>(j["stream_seed"], "stream_seed");
    if (j.contains("shuffle")) c.shuffle = get_as<bool>(j["shuffle"], "shuffle");
    if (j.contains("data_dir")) c.data_dir = get_as<std::string>(j["data_dir"], "data_dir");
    if (j.contains("output_dir")) c.output_dir = get_as<std::string>(j["output_dir"], "output_dir");
    if (j.contains("checkpoint_every")) c.checkpoint_every = get_as<long>(j["checkpoint_every"], "checkpoint_every");
    if (j.contains("eval_every")) c.eval_every = get_as<long>(j["eval_every"], "eval_every");
    if (j.contains("eval_confidence")) c.eval_confidence = get_as<double>(j["eval_confidence"], "eval_confidence");
    if (j.contains("nms_iou")) c.nms_iou = get_as<double>(j["nms_iou"], "nms_iou");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return RunConfig::from_json(j, std::move(base));
}

}  // namespace dadet
