#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dadet/adaptation.hpp"
#include "dadet/checkpoint.hpp"
#include "dadet/data.hpp"
#include "dadet/detector.hpp"
#include "dadet/evaluation.hpp"

namespace dadet {

enum class TrainingMode {
    Adapt,       // labeled source + unlabeled target through the DAN
    SourceOnly,  // labeled source, no DAN
    Oracle,      // labeled target, no DAN
};

const char* training_mode_name(TrainingMode m) noexcept;
std::optional<TrainingMode> parse_training_mode(const std::string& s);

// SGD with momentum, linear warmup then step decay.
struct OptimizerConfig {
    double learning_rate = 0.0125;
    double momentum = 0.9;
    double weight_decay = 5e-4;  // weights only, not biases
    int warmup_iterations = 100;
    std::vector<double> step_fractions{0.7, 0.9};
    double step_factor = 0.1;
    // Multiplies the rate for parameters under "dan.".
    double dan_rate_scale = 1.0;

    double rate_at(long iteration, long total_iterations) const;
    void validate() const;
};

struct RunConfig {
    TrainingMode mode = TrainingMode::Adapt;
    DetectorConfig detector{};
    DanVariant dan{};
    GrlConfig grl{};
    int batch_size = 64;  // split half source, half target in adapt mode
    long iterations = 3000;
    OptimizerConfig optimizer{};
    std::uint64_t init_seed = 1;    // parameter initialization
    std::uint64_t stream_seed = 1;  // batch order
    bool shuffle = true;
    std::string data_dir;
    std::string output_dir;
    long checkpoint_every = 0;  // 0: final checkpoint only
    long eval_every = 0;        // 0: no periodic evaluation
    double eval_confidence = 0.01;
    double nms_iou = 0.45;

    // Batch 16, 2000 iterations, multiplier 1/8, 64 px images.
    static RunConfig desk_scale();

    bool uses_dan() const noexcept { return mode == TrainingMode::Adapt; }
    void validate() const;  // throws ConfigError

    nlohmann::json to_json() const;
    // Missing keys keep their defaults; unknown keys and bad values throw ConfigError.
    static RunConfig from_json(const nlohmann::json& j, RunConfig base);
    static RunConfig from_json(const nlohmann::json& j) { return from_json(j, RunConfig{}); }
};

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

// Detector plus the DAN (adapt mode only).
class Model {
public:
    // attach_dan = false builds the detector alone even for adapt configs.
    explicit Model(const RunConfig& config, bool attach_dan = true);

    void init(std::uint64_t seed);

    const RunConfig& config() const noexcept { return config_; }
    Detector& detector() noexcept { return detector_; }
    const Detector& detector() const noexcept { return detector_; }
    DomainAdaptationNetwork* dan() noexcept { return dan_.get(); }

    ParameterRefs parameters();
    ParameterRefs group_parameters(const std::string& group);
    std::vector<std::string> group_names() const;

    Checkpoint to_checkpoint();
    // Requires the detector groups, plus "dan" when the config uses one.
    static Model from_checkpoint(const Checkpoint& ckpt);
    void load_groups(const Checkpoint& ckpt);

private:
    RunConfig config_;
    Detector detector_;
    std::unique_ptr<DomainAdaptationNetwork> dan_;
};

struct StepOptions {
    bool include_detection = true;
    bool include_domain = true;
};

struct StepLosses {
    double detection = 0.0;
    std::vector<DomainMapScale> classifiers;
    std::vector<double> domain_per_map;
    double domain = 0.0;  // mean over maps
    double total = 0.0;   // detection + lambda * domain
};

// Zeroes gradients then accumulates the gradient contract for one batch:
// detection loss on the annotated half, domain loss on all images, backbone
// receiving d L_det - lambda * d L_dc through the reversal.
StepLosses compute_gradients(Model& model, const DomainBatch& batch, const StepOptions& options = {});

class SgdOptimizer {
public:
    SgdOptimizer(ParameterRefs params, OptimizerConfig config);

    void step(double learning_rate);

private:
    ParameterRefs params_;
    OptimizerConfig config_;
    std::vector<Tensor> velocity_;
};

struct LogRecord {
    long iteration = 0;
    double detection = 0.0;
    std::vector<double> domain_per_map;
    double domain = 0.0;
    double total = 0.0;
    double learning_rate = 0.0;
    double elapsed_seconds = 0.0;
};

struct TrainingLog {
    long configured_iterations = 0;
    nlohmann::json config;
    std::vector<std::string> classifier_names;  // empty without a DAN
    std::vector<LogRecord> records;

    bool complete() const noexcept { return static_cast<long>(records.size()) == configured_iterations; }

    // Timestamps are excluded so that reruns compare equal.
    bool same_losses(const TrainingLog& other) const;

    void write_csv(const std::filesystem::path& path) const;
    static TrainingLog read_csv(const std::filesystem::path& path);
};

struct ReportResult {
    std::vector<std::string> warnings;
    std::size_t rows = 0;
    bool has_dissimilarity = false;
};

// Loss-curve CSV: iteration, one column per classifier, the average, and
// (with several classifiers) the max pairwise absolute difference.
ReportResult write_report(const TrainingLog& log, const std::filesystem::path& out_path);

using ProgressFn = std::function<void(const LogRecord&)>;

struct EvalPoint {
    long iteration = 0;
    double map_score = 0.0;
};

class Trainer {
public:
    // Throws DataError if the dataset does not fit the config.
    Trainer(RunConfig config, const Dataset& dataset);
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    // Runs all remaining iterations. Throws NumericAbort on a non-finite loss;
    // the log then holds every completed iteration.
    void run(const ProgressFn& progress = {});
    LogRecord step();

    Model& model() noexcept { return model_; }
    const TrainingLog& log() const noexcept { return log_; }
    long iteration() const noexcept { return iteration_; }
    // Target-validation mAP at the eval cadence.
    const std::vector<EvalPoint>& evaluations() const noexcept { return evaluations_; }

private:
    DomainBatch next_batch();
    void write_checkpoint(const std::string& stem);

    RunConfig config_;
    const Dataset& dataset_;
    Model model_;
    SgdOptimizer optimizer_;
    SplitStream primary_;
    std::optional<SplitStream> target_;
    TrainingLog log_;
    std::vector<EvalPoint> evaluations_;
    long iteration_ = 0;
    std::chrono::steady_clock::time_point start_;
};

void validate_dataset_for(const Dataset& dataset, const RunConfig& config);

struct TrainResult {
    Model model;
    TrainingLog log;
};

TrainResult train(const RunConfig& config, const Dataset& dataset, const ProgressFn& progress = {});

// Detections for every image of a split, in batches.
std::vector<std::vector<Detection>> detect_split(const Detector& detector, const Split& split, double confidence,
                                                 double nms_iou, int batch = 32);
EvalResult evaluate_split(const Detector& detector, const Split& split, double confidence, double nms_iou,
                          const EvalOptions& options = {});

struct AblationRow {
    ScaleSet scales;
    EvalResult result;
    // Every DAN branch outside `scales` had an all-zero gradient after each step.
    bool inactive_branches_zero = true;
    TrainingLog log;
};

struct AblationTable {
    std::vector<AblationRow> rows;

    std::string format(int num_classes) const;
    nlohmann::json to_json() const;
};

// All 8 subsets of {F1, F2, F3}, empty set first.
std::vector<ScaleSet> all_scale_subsets();

// One BASELINE run per subset, evaluated on target validation. The empty
// subset trains source-only. Throws ConfigError for an empty list.
AblationTable run_ablation(const RunConfig& config, const std::vector<ScaleSet>& subsets, const Dataset& dataset,
                           const std::function<void(const std::string&)>& progress = {});

struct ProbeOptions {
    int max_per_domain = 250;
    int epochs = 300;
    double learning_rate = 0.5;
    double l2 = 1e-3;
};

struct ProbeResult {
    std::array<double, kNumScales> accuracy{};
    int samples_per_domain = 0;
    std::vector<std::string> notes;  // rebalancing and subsampling messages

    double mean_accuracy() const;
};

// Held-out accuracy of a logistic-regression domain classifier trained on
// standardized features; even-indexed samples train, odd-indexed test.
double logistic_probe_accuracy(const std::vector<std::vector<double>>& source,
                               const std::vector<std::vector<double>>& target, const ProbeOptions& options = {});

// Per-channel spatial mean of each image in an (N, C, H, W) tensor.
std::vector<std::vector<double>> mean_pool(const Tensor& features);

ProbeResult domain_confusion_probe(const Detector& detector, const Split& source, const Split& target,
                                   const ProbeOptions& options = {});

// Same probe on raw pixels pooled over a 4x4 grid per channel.
double raw_pixel_probe(const Split& source, const Split& target, const ProbeOptions& options = {});

}  // namespace dadet
