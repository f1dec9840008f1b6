#include <algorithm>
#include <cmath>

#include "dadet/errors.hpp"
#include "dadet/harness.hpp"

namespace dadet {
namespace {

constexpr const char* kGroupNames[] = {"backbone", "neck", "head", "dan"};
constexpr std::uint64_t kTargetStreamSalt = 0x7A67E7D5C3B1A995ULL;

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_split(const Split& split, const DetectorConfig& config) {
    if (split.size() == 0) throw DataError("split '" + split.name + "' is empty");
    if (split.boxes.size() != split.images.size()) {
        throw DataError("split '" + split.name + "' has " + std::to_string(split.boxes.size()) + " label lists for " +
                        std::to_string(split.images.size()) + " images");
    }
    for (std::size_t i = 0; i < split.size(); ++i) {
        const Image& im = split.images[i];
        if (im.width != config.image_size || im.height != config.image_size) {
            throw DataError("split '" + split.name + "' image " + std::to_string(i) + " is " +
                            std::to_string(im.width) + "x" + std::to_string(im.height) + ", config expects " +
                            std::to_string(config.image_size));
        }
        for (const GroundTruthBox& b : split.boxes[i]) {
            if (b.class_id < 0 || b.class_id >= config.num_classes) {
                throw DataError("split '" + split.name + "' image " + std::to_string(i) + " has class " +
                                std::to_string(b.class_id) + " outside [0, " + std::to_string(config.num_classes) +
                                ")");
            }
        }
    }
}

}  // namespace

Model::Model(const RunConfig& config, bool attach_dan) : config_(config), detector_(config.detector) {
    if (attach_dan && config_.uses_dan()) {
        dan_ = std::make_unique<DomainAdaptationNetwork>(config_.dan, config_.detector.base_channels());
    }
}

void Model::init(std::uint64_t seed) {
    Rng det_rng = make_rng(seed, 1);
    detector_.init(det_rng);
    if (dan_) {
        Rng dan_rng = make_rng(seed, 2);
        dan_->init(dan_rng);
    }
}

ParameterRefs Model::parameters() {
    ParameterRefs out = detector_.parameters();
    if (dan_) {
        for (Parameter* p : dan_->parameters()) out.push_back(p);
    }
    return out;
}

ParameterRefs Model::group_parameters(const std::string& group) {
    if (group == "backbone") return detector_.backbone().parameters();
    if (group == "neck") return detector_.neck().parameters();
    if (group == "head") return detector_.head().parameters();
    if (group == "dan" && dan_) return dan_->parameters();
    throw ConfigError("model has no parameter group '" + group + "'");
}

std::vector<std::string> Model::group_names() const {
    std::vector<std::string> out;
    for (const char* g : kGroupNames) {
        if (std::string(g) != "dan" || dan_) out.emplace_back(g);
    }
    return out;
}

Checkpoint Model::to_checkpoint() {
    Checkpoint ckpt;
    ckpt.kind = CheckpointKind::Training;
    ckpt.config = config_.to_json();
    for (const std::string& name : group_names()) {
        ParameterGroup g{name, {}};
        for (Parameter* p : group_parameters(name)) g.tensors.push_back({p->name, p->value});
        ckpt.groups.push_back(std::move(g));
    }
    return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
    RunConfig config = RunConfig::from_json(ckpt.config);
    Model m(config, ckpt.kind == CheckpointKind::Training);
    m.load_groups(ckpt);
    return m;
}

void Model::load_groups(const Checkpoint& ckpt) {
    for (const std::string& name : group_names()) {
        const ParameterGroup& g = ckpt.require_group(name);
        const ParameterRefs params = group_parameters(name);
        if (g.tensors.size() != params.size()) {
            throw LoadError("checkpoint group '" + name + "' has " + std::to_string(g.tensors.size()) +
                            " tensors, model expects " + std::to_string(params.size()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            const NamedTensor& t = g.tensors[i];
            if (t.name != params[i]->name) {
                throw LoadError("checkpoint group '" + name + "' tensor " + std::to_string(i) + " is '" + t.name +
                                "', model expects '" + params[i]->name + "'");
            }
            if (t.value.shape() != params[i]->value.shape()) {
                throw LoadError("checkpoint tensor '" + t.name + "' has shape " + t.value.shape().str() +
                                ", model expects " + params[i]->value.shape().str());
            }
        }
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = g.tensors[i].value;
    }
}

StepLosses compute_gradients(Model& model, const DomainBatch& batch, const StepOptions& options) {
    zero_grads(model.parameters());
    Detector& detector = model.detector();
    const FeaturePyramid pyramid = detector.backbone().forward(batch.images);
    FeaturePyramid tap_grads = FeaturePyramid::zeros_like(pyramid);
    StepLosses out;

    const int labeled = batch.source_count();
    if (options.include_detection && labeled > 0) {
        FeaturePyramid labeled_grads;
        const FeaturePyramid labeled_taps = labeled == batch.size() ? pyramid : pyramid.slice_batch(0, labeled);
        out.detection = detector.detection_loss_and_backward(labeled_taps, batch.boxes, labeled_grads).total;
        for (Scale s : {Scale::F1, Scale::F2, Scale::F3}) tap_grads[s].assign_batch(0, labeled_grads[s]);
    }

    const GrlConfig& grl = model.config().grl;
    if (DomainAdaptationNetwork* dan = model.dan(); dan != nullptr && options.include_domain) {
        const std::vector<DomainProbMap> maps = dan->forward(pyramid);
        for (const DomainProbMap& m : maps) {
            out.classifiers.push_back(m.scale);
            out.domain_per_map.push_back(domain_map_loss(m, batch.domain_labels));
        }
        out.domain = domain_classification_loss(maps, batch.domain_labels);
        const FeaturePyramid reversed =
            dan->backward(domain_classification_logit_grads(maps, batch.domain_labels), grl);
        // With lambda = 0 the backbone sees exactly the detection gradient.
        if (grl.lambda != 0.0) {
            for (Scale s : {Scale::F1, Scale::F2, Scale::F3}) tap_grads[s] += reversed[s];
        }
    }
    out.total = total_backbone_objective(out.detection, out.domain, grl);
    detector.backbone().backward(tap_grads);
    return out;
}

SgdOptimizer::SgdOptimizer(ParameterRefs params, OptimizerConfig config)
    : params_(std::move(params)), config_(std::move(config)) {
    velocity_.reserve(params_.size());
    for (const Parameter* p : params_) velocity_.emplace_back(p->value.shape());
}

void SgdOptimizer::step(double learning_rate) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        const double decay = ends_with(p.name, ".weight") ? config_.weight_decay : 0.0;
        const double rate = p.name.rfind("dan.", 0) == 0 ? learning_rate * config_.dan_rate_scale : learning_rate;
        double* v = velocity_[i].data();
        double* w = p.value.data();
        const double* g = p.grad.data();
        const std::size_t n = p.value.size();
        for (std::size_t k = 0; k < n; ++k) {
            v[k] = config_.momentum * v[k] - rate * (g[k] + decay * w[k]);
            w[k] += v[k];
        }
    }
}

void validate_dataset_for(const Dataset& dataset, const RunConfig& config) {
    if (config.mode == TrainingMode::Oracle) {
        check_split(dataset.target_train, config.detector);
    } else {
        check_split(dataset.source_train, config.detector);
    }
    if (config.mode == TrainingMode::Adapt) check_split(dataset.target_train, config.detector);
    if (config.eval_every > 0) check_split(dataset.target_val, config.detector);
}

Trainer::Trainer(RunConfig config, const Dataset& dataset)
    : config_((config.validate(), std::move(config))),
      dataset_((validate_dataset_for(dataset, config_), dataset)),
      model_(config_),
      optimizer_((model_.init(config_.init_seed), model_.parameters()), config_.optimizer),
      primary_(config_.mode == TrainingMode::Oracle ? dataset.target_train : dataset.source_train,
               config_.stream_seed, config_.shuffle) {
    if (config_.mode == TrainingMode::Adapt) {
        target_.emplace(dataset.target_train, config_.stream_seed ^ kTargetStreamSalt, config_.shuffle);
    }
    log_.configured_iterations = config_.iterations;
    log_.config = config_.to_json();
    if (DomainAdaptationNetwork* dan = model_.dan()) {
        if (dan->unified()) {
            log_.classifier_names.emplace_back(domain_map_scale_name(DomainMapScale::Unified));
        } else {
            for (Scale s : config_.dan.active_scales.scales()) log_.classifier_names.emplace_back(scale_name(s));
        }
    }
    start_ = std::chrono::steady_clock::now();
}

DomainBatch Trainer::next_batch() {
    if (target_) return compose_batch(primary_, *target_, config_.batch_size);
    return compose_labeled_batch(primary_, config_.batch_size / 2);
}

LogRecord Trainer::step() {
    if (iteration_ >= config_.iterations) throw ConfigError("training already completed all iterations");
    const DomainBatch batch = next_batch();
    const StepLosses losses = compute_gradients(model_, batch);

    bool finite = std::isfinite(losses.total) && std::isfinite(losses.detection) && std::isfinite(losses.domain);
    for (double l : losses.domain_per_map) finite = finite && std::isfinite(l);
    if (!finite) throw NumericAbort(iteration_, "loss");
    for (const Parameter* p : model_.parameters()) {
        if (!p->grad.all_finite()) throw NumericAbort(iteration_, "gradient of " + p->name);
    }

    LogRecord r;
    r.iteration = iteration_;
    r.detection = losses.detection;
    r.domain_per_map = losses.domain_per_map;
    r.domain = losses.domain;
    r.total = losses.total;
    r.learning_rate = config_.optimizer.rate_at(iteration_, config_.iterations);
    optimizer_.step(r.learning_rate);
    r.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    log_.records.push_back(r);
    ++iteration_;
    return r;
}

void Trainer::run(const ProgressFn& progress) {
    while (iteration_ < config_.iterations) {
        const LogRecord r = step();
        if (progress) progress(r);
        if (config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0 && !config_.output_dir.empty()) {
            write_checkpoint("ckpt_" + std::to_string(iteration_));
        }
        if (config_.eval_every > 0 && iteration_ % config_.eval_every == 0) {
            const EvalResult e = evaluate_split(model_.detector(), dataset_.target_val, config_.eval_confidence,
                                                config_.nms_iou);
            evaluations_.push_back({iteration_, e.map_score});
        }
    }
}

void Trainer::write_checkpoint(const std::string& stem) {
    std::filesystem::create_directories(config_.output_dir);
    save_checkpoint(model_.to_checkpoint(), std::filesystem::path(config_.output_dir) / (stem + ".ckpt"));
}

TrainResult train(const RunConfig& config, const Dataset& dataset, const ProgressFn& progress) {
    Trainer trainer(config, dataset);
    trainer.run(progress);
    return {std::move(trainer.model()), trainer.log()};
}

std::vector<std::vector<Detection>> detect_split(const Detector& detector, const Split& split, double confidence,
                                                 double nms_iou, int batch) {
    std::vector<std::vector<Detection>> out;
    out.reserve(split.size());
    for (std::size_t begin = 0; begin < split.size(); begin += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(split.size(), begin + static_cast<std::size_t>(batch));
        std::vector<const Image*> images;
        for (std::size_t i = begin; i < end; ++i) images.push_back(&split.images[i]);
        for (auto& d : detector.detect(to_tensor(images), confidence, nms_iou)) out.push_back(std::move(d));
    }
    return out;
}

EvalResult evaluate_split(const Detector& detector, const Split& split, double confidence, double nms_iou,
                          const EvalOptions& options) {
    const DetectorConfig& c = detector.config();
    return evaluate_detections(detect_split(detector, split, confidence, nms_iou), split.boxes, c.num_classes,
                               static_cast<double>(c.image_size), options);
}

}  // namespace dadet
