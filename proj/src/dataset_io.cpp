#include <png.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "dadet/data.hpp"
#include "dadet/errors.hpp"

namespace dadet {
namespace fs = std::filesystem;
using nlohmann::json;

void write_png(const Image& image, const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot write PNG " + path.string() + ": " + msg);
    }
}

Image read_png(const fs::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw DataError("cannot read PNG " + path.string() + ": " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    Image image;
    image.width = static_cast<int>(png.width);
    image.height = static_cast<int>(png.height);
    image.rgb.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, image.rgb.data(), 0, nullptr)) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return image;
}

namespace {

json scene_to_json(const SceneConfig& s) {
    return json{{"image_size", s.image_size},
                {"num_classes", s.num_classes},
                {"min_objects", s.min_objects},
                {"max_objects", s.max_objects},
                {"min_size", s.min_size},
                {"max_size", s.max_size},
                {"corruption",
                 {{"strength", s.corruption.strength},
                  {"haze_alpha", s.corruption.haze_alpha},
                  {"contrast", s.corruption.contrast},
                  {"noise_sigma", s.corruption.noise_sigma}}}};
}

SceneConfig scene_from_json(const json& j) {
    SceneConfig s;
    s.image_size = j.at("image_size").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.min_objects = j.at("min_objects").get<int>();
    s.max_objects = j.at("max_objects").get<int>();
    s.min_size = j.at("min_size").get<double>();
    s.max_size = j.at("max_size").get<double>();
    const json& c = j.at("corruption");
    s.corruption.strength = c.at("strength").get<double>();
    s.corruption.haze_alpha = c.at("haze_alpha").get<double>();
    s.corruption.contrast = c.at("contrast").get<double>();
    s.corruption.noise_sigma = c.at("noise_sigma").get<double>();
    return s;
}

std::string indexed(int i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06d.%s", i, ext);
    return buf;
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir);
    json manifest{{"format", "dadet-dataset"},
                  {"generator_version", kGeneratorVersion},
                  {"seed", dataset.spec.seed},
                  {"n_train", dataset.spec.n_train},
                  {"n_val", dataset.spec.n_val},
                  {"scene", scene_to_json(dataset.spec.scene)},
                  {"splits", json::object()}};
    for (const Split* s : {&dataset.source_train, &dataset.target_train, &dataset.target_val, &dataset.source_val}) {
        const fs::path sub = dir / s->name;
        fs::create_directories(sub);
        for (std::size_t i = 0; i < s->size(); ++i) {
            write_png(s->images[i], sub / indexed(static_cast<int>(i), "png"));
            write_annotations(s->boxes[i], sub / indexed(static_cast<int>(i), "txt"));
        }
        manifest["splits"][s->name] = json{{"domain", domain_name(s->domain)},
                                           {"count", s->size()},
                                           {"labels_used_in_adaptation", s->name == "source_train"}};
    }
    std::ofstream f(dir / "manifest.json");
    f << manifest.dump(2) << "\n";
    if (!f) throw DataError("cannot write manifest in " + dir.string());
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream f(manifest_path);
    if (!f) throw DataError("no dataset manifest at " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(f);
    } catch (const json::exception& e) {
        throw DataError("invalid manifest " + manifest_path.string() + ": " + e.what());
    }
    Dataset d;
    try {
        if (manifest.at("generator_version").get<int>() != kGeneratorVersion) {
            throw DataError("dataset generator version " + manifest.at("generator_version").dump() +
                            " not supported (expected " + std::to_string(kGeneratorVersion) + ")");
        }
        d.spec.seed = manifest.at("seed").get<std::uint64_t>();
        d.spec.n_train = manifest.at("n_train").get<int>();
        d.spec.n_val = manifest.at("n_val").get<int>();
        d.spec.scene = scene_from_json(manifest.at("scene"));
    } catch (const json::exception& e) {
        throw DataError("invalid manifest " + manifest_path.string() + ": " + e.what());
    }
    const int num_classes = d.spec.scene.num_classes;
    const std::pair<Split*, const char*> splits[] = {{&d.source_train, "source_train"},
                                                     {&d.target_train, "target_train"},
                                                     {&d.target_val, "target_val"},
                                                     {&d.source_val, "source_val"}};
    for (auto [s, name] : splits) {
        s->name = name;
        int count = 0;
        try {
            const json& entry = manifest.at("splits").at(s->name);
            s->domain = entry.at("domain").get<std::string>() == "source" ? Domain::Source : Domain::Target;
            count = entry.at("count").get<int>();
        } catch (const json::exception& e) {
            throw DataError("manifest entry for split '" + s->name + "' invalid: " + e.what());
        }
        const fs::path sub = dir / s->name;
        s->images.reserve(count);
        s->boxes.reserve(count);
        for (int i = 0; i < count; ++i) {
            Image img = read_png(sub / indexed(i, "png"));
            if (img.width != d.spec.scene.image_size || img.height != d.spec.scene.image_size) {
                throw DataError((sub / indexed(i, "png")).string() + " has unexpected size");
            }
            s->images.push_back(std::move(img));
            s->boxes.push_back(read_annotations(sub / indexed(i, "txt"), num_classes));
        }
    }
    return d;
}

}  // namespace dadet
