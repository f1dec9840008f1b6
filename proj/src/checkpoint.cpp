#include "dadet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dadet/errors.hpp"

namespace dadet {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr const char* kDetectorGroups[] = {"backbone", "neck", "head"};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& in, std::string source) : in_(in), source_(std::move(source)) {}

    void bytes(void* p, std::size_t n) {
        if (n > in_.size() - pos_) throw LoadError(source_ + ": truncated checkpoint");
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > in_.size() - pos_) throw LoadError(source_ + ": truncated checkpoint");
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    const std::vector<std::uint8_t>& in_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

const ParameterGroup* Checkpoint::group(const std::string& name) const {
    for (const ParameterGroup& g : groups)
        if (g.name == name) return &g;
    return nullptr;
}

const ParameterGroup& Checkpoint::require_group(const std::string& name) const {
    const ParameterGroup* g = group(name);
    if (g == nullptr) throw LoadError("checkpoint missing parameter group '" + name + "'");
    return *g;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(ckpt.kind));
    const std::string config = ckpt.config.dump();
    w.u64(config.size());
    w.bytes(config.data(), config.size());
    w.u32(static_cast<std::uint32_t>(ckpt.groups.size()));
    for (const ParameterGroup& g : ckpt.groups) {
        w.str(g.name);
        w.u32(static_cast<std::uint32_t>(g.tensors.size()));
        for (const NamedTensor& t : g.tensors) {
            w.str(t.name);
            const Shape& s = t.value.shape();
            for (int d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
            w.bytes(t.value.data(), t.value.size() * sizeof(double));
        }
    }
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source_name) {
    Reader r(bytes, source_name);
    char magic[sizeof kCheckpointMagic];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw LoadError(source_name + ": not a checkpoint (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw LoadError(source_name + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const std::uint32_t kind = r.u32();
    if (kind != static_cast<std::uint32_t>(CheckpointKind::Training) &&
        kind != static_cast<std::uint32_t>(CheckpointKind::Inference)) {
        throw LoadError(source_name + ": unknown checkpoint kind " + std::to_string(kind));
    }
    ckpt.kind = static_cast<CheckpointKind>(kind);
    const std::uint64_t config_len = r.u64();
    if (config_len > bytes.size()) throw LoadError(source_name + ": truncated checkpoint");
    std::string config(config_len, '\0');
    r.bytes(config.data(), config_len);
    try {
        ckpt.config = nlohmann::json::parse(config);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(source_name + ": corrupt config snapshot: " + e.what());
    }
    const std::uint32_t groups = r.u32();
    for (std::uint32_t gi = 0; gi < groups; ++gi) {
        ParameterGroup g;
        g.name = r.str();
        const std::uint32_t tensors = r.u32();
        for (std::uint32_t ti = 0; ti < tensors; ++ti) {
            NamedTensor t;
            t.name = r.str();
            Shape s;
            s.n = static_cast<int>(r.u32());
            s.c = static_cast<int>(r.u32());
            s.h = static_cast<int>(r.u32());
            s.w = static_cast<int>(r.u32());
            if (s.size() * sizeof(double) > bytes.size()) {
                throw LoadError(source_name + ": tensor '" + t.name + "' in group '" + g.name + "' is truncated");
            }
            t.value = Tensor(s);
            r.bytes(t.value.data(), t.value.size() * sizeof(double));
            g.tensors.push_back(std::move(t));
        }
        ckpt.groups.push_back(std::move(g));
    }
    if (!r.done()) throw LoadError(source_name + ": trailing bytes after checkpoint");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw LoadError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, path.string());
}

Checkpoint export_inference_model(const Checkpoint& ckpt) {
    Checkpoint out;
    out.kind = CheckpointKind::Inference;
    out.config = ckpt.config;
    for (const char* name : kDetectorGroups) out.groups.push_back(ckpt.require_group(name));
    return out;
}

}  // namespace dadet
