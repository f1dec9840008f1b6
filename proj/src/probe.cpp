#include <algorithm>
#include <cmath>

#include "dadet/errors.hpp"
#include "dadet/harness.hpp"

namespace dadet {
namespace {

using Matrix = std::vector<std::vector<double>>;

constexpr int kPixelGrid = 4;
constexpr int kFeatureBatch = 32;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Rows of the given index parity from both domains, labels 1 (source) / 0 (target).
void gather(const Matrix& source, const Matrix& target, int parity, Matrix& x, std::vector<int>& y) {
    for (std::size_t i = static_cast<std::size_t>(parity); i < source.size(); i += 2) {
        x.push_back(source[i]);
        y.push_back(1);
    }
    for (std::size_t i = static_cast<std::size_t>(parity); i < target.size(); i += 2) {
        x.push_back(target[i]);
        y.push_back(0);
    }
}

Matrix pixel_features(const Split& split, std::size_t count) {
    Matrix out;
    for (std::size_t i = 0; i < count; ++i) {
        const Image& im = split.images[i];
        std::vector<double> f(3 * kPixelGrid * kPixelGrid, 0.0);
        std::vector<int> hits(f.size(), 0);
        for (int y = 0; y < im.height; ++y) {
            for (int x = 0; x < im.width; ++x) {
                const int cell = (y * kPixelGrid / im.height) * kPixelGrid + x * kPixelGrid / im.width;
                for (int ch = 0; ch < 3; ++ch) {
                    const std::size_t k = static_cast<std::size_t>(ch * kPixelGrid * kPixelGrid + cell);
                    f[k] += im.rgb[(static_cast<std::size_t>(y) * im.width + x) * 3 + ch] / 255.0;
                    ++hits[k];
                }
            }
        }
        for (std::size_t k = 0; k < f.size(); ++k) f[k] /= std::max(1, hits[k]);
        out.push_back(std::move(f));
    }
    return out;
}

std::size_t balanced_count(const Split& source, const Split& target, const ProbeOptions& options,
                           std::vector<std::string>& notes) {
    if (source.size() < 2 || target.size() < 2) throw DataError("probe needs at least two images per domain");
    std::size_t n = std::min(source.size(), target.size());
    if (source.size() != target.size()) {
        notes.push_back("rebalanced: source " + std::to_string(source.size()) + " and target " +
                        std::to_string(target.size()) + " subsampled to " + std::to_string(n) + " each");
    }
    if (options.max_per_domain > 0 && n > static_cast<std::size_t>(options.max_per_domain)) {
        n = static_cast<std::size_t>(options.max_per_domain);
        notes.push_back("capped at " + std::to_string(n) + " images per domain");
    }
    return n;
}

}  // namespace

double ProbeResult::mean_accuracy() const {
    double s = 0.0;
    for (double a : accuracy) s += a;
    return s / kNumScales;
}

std::vector<std::vector<double>> mean_pool(const Tensor& features) {
    Matrix out(static_cast<std::size_t>(features.n()), std::vector<double>(static_cast<std::size_t>(features.c())));
    const double inv = 1.0 / static_cast<double>(features.shape().plane());
    for (int n = 0; n < features.n(); ++n) {
        for (int c = 0; c < features.c(); ++c) {
            double s = 0.0;
            for (int y = 0; y < features.h(); ++y)
                for (int x = 0; x < features.w(); ++x) s += features.at(n, c, y, x);
            out[n][c] = s * inv;
        }
    }
    return out;
}

double logistic_probe_accuracy(const std::vector<std::vector<double>>& source,
                               const std::vector<std::vector<double>>& target, const ProbeOptions& options) {
    if (source.size() < 2 || target.size() < 2) throw DataError("probe needs at least two samples per domain");
    Matrix train_x, test_x;
    std::vector<int> train_y, test_y;
    gather(source, target, 0, train_x, train_y);
    gather(source, target, 1, test_x, test_y);
    const std::size_t dims = train_x.front().size();

    // Standardize with training statistics.
    std::vector<double> mean(dims, 0.0), scale(dims, 0.0);
    for (const auto& row : train_x)
        for (std::size_t d = 0; d < dims; ++d) mean[d] += row[d];
    for (double& m : mean) m /= static_cast<double>(train_x.size());
    for (const auto& row : train_x)
        for (std::size_t d = 0; d < dims; ++d) scale[d] += (row[d] - mean[d]) * (row[d] - mean[d]);
    for (double& s : scale) {
        s = std::sqrt(s / static_cast<double>(train_x.size()));
        s = s > 1e-12 ? 1.0 / s : 0.0;
    }
    auto standardize = [&](Matrix& m) {
        for (auto& row : m)
            for (std::size_t d = 0; d < dims; ++d) row[d] = (row[d] - mean[d]) * scale[d];
    };
    standardize(train_x);
    standardize(test_x);

    std::vector<double> w(dims, 0.0);
    double b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(train_x.size());
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::vector<double> gw(dims, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < train_x.size(); ++i) {
            double z = b;
            for (std::size_t d = 0; d < dims; ++d) z += w[d] * train_x[i][d];
            const double r = sigmoid(z) - train_y[i];
            for (std::size_t d = 0; d < dims; ++d) gw[d] += r * train_x[i][d];
            gb += r;
        }
        for (std::size_t d = 0; d < dims; ++d) w[d] -= options.learning_rate * (gw[d] * inv_n + options.l2 * w[d]);
        b -= options.learning_rate * gb * inv_n;
    }

    int correct = 0;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        double z = b;
        for (std::size_t d = 0; d < dims; ++d) z += w[d] * test_x[i][d];
        correct += ((z > 0.0 ? 1 : 0) == test_y[i]) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test_x.size());
}

ProbeResult domain_confusion_probe(const Detector& detector, const Split& source, const Split& target,
                                   const ProbeOptions& options) {
    ProbeResult result;
    const std::size_t n = balanced_count(source, target, options, result.notes);
    result.samples_per_domain = static_cast<int>(n);

    auto pooled = [&](const Split& split) {
        std::array<Matrix, kNumScales> out;
        for (std::size_t begin = 0; begin < n; begin += kFeatureBatch) {
            const std::size_t end = std::min(n, begin + kFeatureBatch);
            std::vector<const Image*> images;
            for (std::size_t i = begin; i < end; ++i) images.push_back(&split.images[i]);
            const FeaturePyramid taps = detector.backbone().infer(to_tensor(images));
            for (Scale s : {Scale::F1, Scale::F2, Scale::F3}) {
                for (auto& row : mean_pool(taps[s])) out[static_cast<int>(s)].push_back(std::move(row));
            }
        }
        return out;
    };
    const auto src = pooled(source);
    const auto tgt = pooled(target);
    for (int s = 0; s < kNumScales; ++s) result.accuracy[s] = logistic_probe_accuracy(src[s], tgt[s], options);
    return result;
}

double raw_pixel_probe(const Split& source, const Split& target, const ProbeOptions& options) {
    std::vector<std::string> notes;
    const std::size_t n = balanced_count(source, target, options, notes);
    return logistic_probe_accuracy(pixel_features(source, n), pixel_features(target, n), options);
}

}  // namespace dadet
