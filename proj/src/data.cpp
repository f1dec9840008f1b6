#include "dadet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dadet/errors.hpp"

namespace dadet {
namespace {

constexpr std::uint64_t kContentStream = 0x5CE1;
constexpr std::uint64_t kNoiseStream = 0xF06;

struct Canvas {
    int size;
    std::vector<double> px;  // planar RGB

    double& at(int c, int y, int x) { return px[(static_cast<std::size_t>(c) * size + y) * size + x]; }
};

struct PlacedObject {
    int class_id;
    double cx, cy, w, h;  // pixels
    std::array<double, 3> color;
};

bool inside(const PlacedObject& o, double x, double y) {
    switch (o.class_id) {
        case 0: {  // circle
            const double r = o.w / 2.0;
            const double dx = x - o.cx, dy = y - o.cy;
            return dx * dx + dy * dy <= r * r;
        }
        case 1:  // rectangle
            return std::abs(x - o.cx) <= o.w / 2.0 && std::abs(y - o.cy) <= o.h / 2.0;
        default: {  // upward triangle
            const double top = o.cy - o.h / 2.0, bottom = o.cy + o.h / 2.0;
            if (y < top || y > bottom) return false;
            const double half = (y - top) / o.h * (o.w / 2.0);
            return std::abs(x - o.cx) <= half;
        }
    }
}

double box_iou(const PlacedObject& a, const PlacedObject& b) {
    return iou(BoxCorners{a.cx - a.w / 2, a.cy - a.h / 2, a.cx + a.w / 2, a.cy + a.h / 2},
               BoxCorners{b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2});
}

void render_background(Canvas& canvas, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 3> base{};
    for (double& b : base) b = 0.05 + 0.4 * u(rng);
    const double grad_y = (u(rng) - 0.5) * 0.3;
    const double grad_x = (u(rng) - 0.5) * 0.2;
    const double freq = 2.0 + 4.0 * u(rng);
    const double angle = u(rng) * std::numbers::pi;
    const double phase = u(rng) * 2.0 * std::numbers::pi;
    const double amp = 0.06 * u(rng);
    const double s = canvas.size;
    for (int y = 0; y < canvas.size; ++y)
        for (int x = 0; x < canvas.size; ++x) {
            const double fx = (x + 0.5) / s, fy = (y + 0.5) / s;
            const double stripe =
                amp * std::sin(2.0 * std::numbers::pi * freq * (fx * std::cos(angle) + fy * std::sin(angle)) + phase);
            const double shade = grad_y * (fy - 0.5) + grad_x * (fx - 0.5) + stripe;
            for (int c = 0; c < 3; ++c) canvas.at(c, y, x) = base[c] + shade;
        }
}

void corrupt(Canvas& canvas, const CorruptionConfig& cfg, Rng& rng) {
    const double alpha = cfg.effective_alpha();
    const double contrast = cfg.effective_contrast();
    const double sigma = cfg.effective_noise();
    if (alpha != 0.0) {
        for (double& v : canvas.px) v = (1.0 - alpha) * v + alpha;
    }
    if (contrast != 1.0) {
        double mean = 0.0;
        for (double v : canvas.px) mean += v;
        mean /= static_cast<double>(canvas.px.size());
        for (double& v : canvas.px) v = mean + contrast * (v - mean);
    }
    if (sigma != 0.0) {
        std::normal_distribution<double> noise(0.0, sigma);
        for (double& v : canvas.px) v += noise(rng);
    }
}

}  // namespace

const char* domain_name(Domain d) noexcept { return d == Domain::Source ? "source" : "target"; }

void SceneConfig::validate() const {
    if (image_size <= 0) throw ConfigError("image_size must be positive");
    if (num_classes < 2 || num_classes > 3) {
        throw ConfigError("synthetic scenes support 2 or 3 classes, got " + std::to_string(num_classes));
    }
    if (min_objects < 0 || max_objects < min_objects) throw ConfigError("invalid object count range");
    if (!(min_size > 0.0 && max_size >= min_size && max_size <= 1.0)) throw ConfigError("invalid object size range");
    const auto& c = corruption;
    if (!(c.strength >= 0.0 && c.haze_alpha >= 0.0 && c.haze_alpha <= 1.0 && c.contrast > 0.0 && c.contrast <= 1.0 &&
          c.noise_sigma >= 0.0) ||
        c.effective_contrast() <= 0.0 || c.effective_alpha() > 1.0) {
        throw ConfigError("invalid corruption parameters");
    }
}

double Image::mean() const {
    if (rgb.empty()) return 0.0;
    double s = 0.0;
    for (std::uint8_t v : rgb) s += v;
    return s / (255.0 * static_cast<double>(rgb.size()));
}

Scene generate_scene(std::uint64_t seed, Domain domain, const SceneConfig& config) {
    config.validate();
    const int size = config.image_size;
    Canvas canvas{size, std::vector<double>(static_cast<std::size_t>(3) * size * size)};
    Rng rng = make_rng(seed, kContentStream);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    render_background(canvas, rng);

    const int count = std::uniform_int_distribution<int>(config.min_objects, config.max_objects)(rng);
    std::vector<PlacedObject> objects;
    for (int i = 0; i < count; ++i) {
        PlacedObject o{};
        o.class_id = std::uniform_int_distribution<int>(0, config.num_classes - 1)(rng);
        const double extent = (config.min_size + (config.max_size - config.min_size) * u(rng)) * size;
        o.w = extent;
        o.h = o.class_id == 0 ? extent : extent * (0.7 + 0.3 * u(rng));
        if (o.class_id == 1 && u(rng) < 0.5) std::swap(o.w, o.h);
        for (double& c : o.color) c = 0.5 + 0.5 * u(rng);
        bool placed = false;
        for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
            o.cx = o.w / 2.0 + u(rng) * (size - o.w);
            o.cy = o.h / 2.0 + u(rng) * (size - o.h);
            placed = std::none_of(objects.begin(), objects.end(),
                                  [&](const PlacedObject& other) { return box_iou(o, other) > 0.05; });
        }
        if (placed) objects.push_back(o);
    }

    for (const PlacedObject& o : objects) {
        const int y0 = std::max(0, static_cast<int>(std::floor(o.cy - o.h / 2.0)));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(o.cy + o.h / 2.0)));
        const int x0 = std::max(0, static_cast<int>(std::floor(o.cx - o.w / 2.0)));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(o.cx + o.w / 2.0)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (inside(o, x + 0.5, y + 0.5))
                    for (int c = 0; c < 3; ++c) canvas.at(c, y, x) = o.color[c];
    }

    if (domain == Domain::Target) {
        Rng noise_rng = make_rng(seed, kNoiseStream);
        corrupt(canvas, config.corruption, noise_rng);
    }

    Scene scene;
    scene.image.width = size;
    scene.image.height = size;
    scene.image.rgb.resize(static_cast<std::size_t>(3) * size * size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(canvas.at(c, y, x), 0.0, 1.0);
                scene.image.rgb[(static_cast<std::size_t>(y) * size + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    for (const PlacedObject& o : objects) {
        scene.boxes.push_back(GroundTruthBox{o.class_id, o.cx / size, o.cy / size, o.w / size, o.h / size});
    }
    return scene;
}

// ---------------------------------------------------------------------------

std::string format_annotations(std::span<const GroundTruthBox> boxes) {
    std::string out;
    char line[128];
    for (const GroundTruthBox& b : boxes) {
        std::snprintf(line, sizeof line, "%d %.6f %.6f %.6f %.6f\n", b.class_id, b.cx, b.cy, b.w, b.h);
        out += line;
    }
    return out;
}

void write_annotations(std::span<const GroundTruthBox> boxes, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << format_annotations(boxes);
    if (!f) throw DataError("write failed for " + path.string());
}

std::vector<GroundTruthBox> parse_annotations(const std::string& text, const std::string& source_name,
                                              int num_classes) {
    std::vector<GroundTruthBox> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        GroundTruthBox b;
        std::string extra;
        if (!(fields >> b.class_id >> b.cx >> b.cy >> b.w >> b.h) || (fields >> extra)) {
            throw ParseError(source_name, line_no, "expected 'class_id cx cy w h', got '" + line + "'");
        }
        try {
            validate_box(b, num_classes > 0 ? num_classes : std::max(b.class_id + 1, 1));
        } catch (const ValidationError& e) {
            throw ValidationError(source_name + ":" + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(b);
    }
    return out;
}

std::vector<GroundTruthBox> read_annotations(const std::filesystem::path& path, int num_classes) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_annotations(buf.str(), path.string(), num_classes);
}

// ---------------------------------------------------------------------------

const Split& Dataset::split(const std::string& name) const {
    for (const Split* s : {&source_train, &target_train, &target_val, &source_val}) {
        if (s->name == name) return *s;
    }
    throw ConfigError("unknown split '" + name + "'");
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, int split_id, int index) {
    Rng r = make_rng(dataset_seed, static_cast<std::uint64_t>(split_id) << 32 | static_cast<std::uint32_t>(index));
    return r();
}

namespace {

struct SplitLayout {
    const char* name;
    Domain domain;
    int split_id;
    bool is_val;
};

constexpr SplitLayout kSplits[] = {
    {"source_train", Domain::Source, 0, false},
    {"target_train", Domain::Target, 1, false},
    {"target_val", Domain::Target, 2, true},
    {"source_val", Domain::Source, 3, true},
};

Split& split_ref(Dataset& d, int split_id) {
    switch (split_id) {
        case 0: return d.source_train;
        case 1: return d.target_train;
        case 2: return d.target_val;
        default: return d.source_val;
    }
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec) {
    spec.scene.validate();
    if (spec.n_train < 0 || spec.n_val < 0) throw ConfigError("split sizes must be non-negative");
    Dataset d;
    d.spec = spec;
    for (const SplitLayout& layout : kSplits) {
        Split& s = split_ref(d, layout.split_id);
        s.name = layout.name;
        s.domain = layout.domain;
        const int count = layout.is_val ? spec.n_val : spec.n_train;
        s.images.resize(count);
        s.boxes.resize(count);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < count; ++i) {
            Scene scene = generate_scene(scene_seed(spec.seed, layout.split_id, i), layout.domain, spec.scene);
            s.images[i] = std::move(scene.image);
            s.boxes[i] = std::move(scene.boxes);
        }
    }
    return d;
}

Tensor to_tensor(std::span<const Image* const> images) {
    if (images.empty()) throw DimensionError("empty image batch");
    const int h = images[0]->height, w = images[0]->width;
    Tensor t(static_cast<int>(images.size()), 3, h, w);
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = *images[n];
        if (img.width != w || img.height != h) throw DimensionError("mixed image sizes in batch");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    t.at(static_cast<int>(n), c, y, x) = img.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    }
    return t;
}

// ---------------------------------------------------------------------------

SplitStream::SplitStream(const Split& split, std::uint64_t seed, bool shuffle)
    : split_(&split), rng_(make_rng(seed, 0x57EA)), shuffle_(shuffle) {
    if (split.size() == 0) throw DataError("split '" + split.name + "' is empty");
    refill();
}

void SplitStream::refill() {
    order_.resize(split_->size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    if (shuffle_) std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
}

int SplitStream::next() {
    if (cursor_ == order_.size()) refill();
    return order_[cursor_++];
}

DomainBatch compose_batch(SplitStream& source, SplitStream& target, int batch_size) {
    if (batch_size <= 0 || batch_size % 2 != 0) {
        throw ConfigError("batch size must be positive and even, got " + std::to_string(batch_size));
    }
    const int half = batch_size / 2;
    DomainBatch b;
    std::vector<const Image*> images;
    for (int i = 0; i < half; ++i) {
        const int idx = source.next();
        b.source_indices.push_back(idx);
        images.push_back(&source.split().images[idx]);
        b.boxes.push_back(source.split().boxes[idx]);
    }
    for (int i = 0; i < half; ++i) {
        const int idx = target.next();
        b.target_indices.push_back(idx);
        images.push_back(&target.split().images[idx]);
    }
    b.images = to_tensor(images);
    b.domain_labels = DomainLabelVector::half_split(batch_size);
    return b;
}

DomainBatch compose_labeled_batch(SplitStream& stream, int count) {
    if (count <= 0) throw ConfigError("labeled batch needs at least one image");
    DomainBatch b;
    std::vector<const Image*> images;
    for (int i = 0; i < count; ++i) {
        const int idx = stream.next();
        b.source_indices.push_back(idx);
        images.push_back(&stream.split().images[idx]);
        b.boxes.push_back(stream.split().boxes[idx]);
    }
    b.images = to_tensor(images);
    b.domain_labels.t.assign(count, stream.split().domain == Domain::Source ? 1 : 0);
    return b;
}

}  // namespace dadet
