#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dadet/adaptation.hpp"
#include "dadet/boxes.hpp"
#include "dadet/layers.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

inline constexpr int kGeneratorVersion = 1;

enum class Domain { Source, Target };

const char* domain_name(Domain d) noexcept;

// Uniform haze toward white, contrast reduction about the image mean, then
// additive Gaussian noise. Each effect scales linearly with `strength`;
// strength 0 leaves the render untouched.
struct CorruptionConfig {
    double strength = 0.5;
    double haze_alpha = 0.5;     // blend weight toward white at strength 1
    double contrast = 0.6;       // contrast factor at strength 1
    double noise_sigma = 0.06;   // noise stddev at strength 1

    double effective_alpha() const noexcept { return haze_alpha * strength; }
    double effective_contrast() const noexcept { return 1.0 - (1.0 - contrast) * strength; }
    double effective_noise() const noexcept { return noise_sigma * strength; }
};

struct SceneConfig {
    int image_size = 64;
    int num_classes = 3;  // circle, rectangle, triangle
    int min_objects = 1;
    int max_objects = 4;
    double min_size = 0.12;  // object extent relative to the image side
    double max_size = 0.42;
    CorruptionConfig corruption{};

    void validate() const;  // throws ConfigError
};

// 8-bit RGB, row-major, interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    double mean() const;
    friend bool operator==(const Image&, const Image&) = default;
};

struct Scene {
    Image image;
    std::vector<GroundTruthBox> boxes;
};

// Pure function of (seed, domain, config, generator version). Target scenes
// render the same content as the source scene for that seed, then corrupt it.
Scene generate_scene(std::uint64_t seed, Domain domain, const SceneConfig& config);

// Darknet label files: "class_id cx cy w h" with six decimals, one box per line.
std::string format_annotations(std::span<const GroundTruthBox> boxes);
void write_annotations(std::span<const GroundTruthBox> boxes, const std::filesystem::path& path);
// num_classes <= 0 skips the class-range check.
std::vector<GroundTruthBox> parse_annotations(const std::string& text, const std::string& source_name,
                                              int num_classes = 0);
std::vector<GroundTruthBox> read_annotations(const std::filesystem::path& path, int num_classes = 0);

void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

struct Split {
    std::string name;
    Domain domain = Domain::Source;
    std::vector<Image> images;
    std::vector<std::vector<GroundTruthBox>> boxes;

    std::size_t size() const noexcept { return images.size(); }
};

struct DatasetSpec {
    std::uint64_t seed = 1;
    int n_train = 2000;  // per domain
    int n_val = 500;     // per domain
    SceneConfig scene{};
};

// source_train / target_train / target_val / source_val. Target training
// labels are kept only for the oracle run; adaptation never reads them.
struct Dataset {
    DatasetSpec spec;
    Split source_train;
    Split target_train;
    Split target_val;
    Split source_val;

    const Split& split(const std::string& name) const;
};

Dataset generate_dataset(const DatasetSpec& spec);
// Scene seed for image `index` of split `split_id`; disjoint across splits.
std::uint64_t scene_seed(std::uint64_t dataset_seed, int split_id, int index);

// DIR/manifest.json plus DIR/<split>/NNNNNN.png and .txt sidecars.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Throws DataError for a missing/invalid manifest or file, ParseError /
// ValidationError for bad label files.
Dataset load_dataset(const std::filesystem::path& dir);

// Images as an (N, 3, H, W) tensor scaled to [0, 1].
Tensor to_tensor(std::span<const Image* const> images);

// Cycles over a split; with shuffling, each pass is a fresh permutation.
class SplitStream {
public:
    SplitStream(const Split& split, std::uint64_t seed, bool shuffle);

    int next();
    const Split& split() const noexcept { return *split_; }

private:
    void refill();

    const Split* split_;
    Rng rng_;
    bool shuffle_;
    std::vector<int> order_;
    std::size_t cursor_ = 0;
};

// First half source (annotated), second half target (labels withheld).
struct DomainBatch {
    Tensor images;
    std::vector<std::vector<GroundTruthBox>> boxes;  // source half only
    DomainLabelVector domain_labels;
    std::vector<int> source_indices;
    std::vector<int> target_indices;

    int size() const noexcept { return images.n(); }
    int source_count() const noexcept { return static_cast<int>(source_indices.size()); }
};

// Throws ConfigError for an odd or non-positive batch size.
DomainBatch compose_batch(SplitStream& source, SplitStream& target, int batch_size);

// Images from one stream with their annotations (source-only and oracle runs).
DomainBatch compose_labeled_batch(SplitStream& stream, int count);

}  // namespace dadet
