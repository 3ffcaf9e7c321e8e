#include "flextsf/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flextsf {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'S', 'F'};
constexpr std::uint32_t kVersion = 1;

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg)
        : std::runtime_error(msg) {}
};

template <typename T>
void write_raw(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw CheckpointError("checkpoint truncated while reading " + what);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_raw<std::uint64_t>(out, s.size());
    out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in, const std::string& what) {
    auto len = read_raw<std::uint64_t>(in, what + " length");
    std::string s(len, '\0');
    if (!in.read(s.data(), std::streamsize(len)))
        throw CheckpointError("checkpoint truncated while reading " + what);
    return s;
}

std::string config_text(const ModelConfig& cfg) {
    std::ostringstream os;
    for (const auto& [k, v] : cfg.to_kv()) os << k << ' ' << v << '\n';
    return os.str();
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto sp = line.find(' ');
        if (sp == std::string::npos)
            throw CheckpointError("malformed config line: " + line);
        kv[line.substr(0, sp)] = line.substr(sp + 1);
    }
    return kv;
}

struct Header {
    std::map<std::string, std::string> config_kv;
    std::array<double, 6> feat_mean{}, feat_std{};
    bool feat_fitted = false;
    std::uint64_t noise_seed = 0, noise_counter = 0;
    std::uint64_t init_seed = 0;
};

Header read_header(std::istream& in, const std::string& path) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError(path + ": not a checkpoint file (bad magic)");
    auto version = read_raw<std::uint32_t>(in, "version");
    if (version != kVersion)
        throw CheckpointError(path + ": unsupported checkpoint version " +
                              std::to_string(version));
    Header h;
    h.config_kv = parse_config_text(read_string(in, "config"));
    h.feat_fitted = read_raw<std::uint8_t>(in, "standardizer flag") != 0;
    for (double& v : h.feat_mean) v = read_raw<double>(in, "standardizer mean");
    for (double& v : h.feat_std) v = read_raw<double>(in, "standardizer std");
    h.noise_seed = read_raw<std::uint64_t>(in, "rng seed");
    h.noise_counter = read_raw<std::uint64_t>(in, "rng counter");
    h.init_seed = read_raw<std::uint64_t>(in, "init seed");
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const FlexTsfModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);

    out.write(kMagic, 4);
    write_raw<std::uint32_t>(out, kVersion);
    write_string(out, config_text(model.config()));

    const auto& fs = model.feature_standardizer();
    write_raw<std::uint8_t>(out, fs.fitted() ? 1 : 0);
    for (double v : fs.mean()) write_raw<double>(out, v);
    for (double v : fs.std()) write_raw<double>(out, v);

    write_raw<std::uint64_t>(out, model.noise_rng().seed());
    write_raw<std::uint64_t>(out, model.noise_rng().counter());
    write_raw<std::uint64_t>(out, model.init_seed());

    const auto& items = model.params().items();
    write_raw<std::uint64_t>(out, items.size());
    for (const auto& [name, t] : items) {
        write_string(out, name);
        write_raw<std::uint32_t>(out, std::uint32_t(t.shape().size()));
        for (std::size_t d : t.shape()) write_raw<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  std::streamsize(t.size() * sizeof(double)));
    }
    if (!out) throw DataError("checkpoint write failed: " + path);
}

namespace {

void load_params(std::istream& in, const std::string& path,
                 FlexTsfModel& model) {
    auto count = read_raw<std::uint64_t>(in, "parameter count");
    if (count != model.params().count())
        throw CheckpointError(
            path + ": parameter count mismatch (file " + std::to_string(count) +
            ", model " + std::to_string(model.params().count()) + ")");
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = read_string(in, "parameter name");
        if (!model.params().contains(name))
            throw CheckpointError(path + ": unknown parameter '" + name + "'");
        Tensor& t = model.params().get(name);
        auto ndim = read_raw<std::uint32_t>(in, "ndim");
        Shape shape(ndim);
        for (auto& d : shape) d = read_raw<std::uint64_t>(in, "dim");
        if (shape != t.shape())
            throw CheckpointError(path + ": shape mismatch for '" + name +
                                  "': file " + shape_str(shape) + ", model " +
                                  shape_str(t.shape()));
        auto& vals = t.mutable_values();
        if (!in.read(reinterpret_cast<char*>(vals.data()),
                     std::streamsize(vals.size() * sizeof(double))))
            throw CheckpointError(path + ": truncated values for '" + name +
                                  "'");
    }
}

}  // namespace

void load_checkpoint(const std::string& path, FlexTsfModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    Header h = read_header(in, path);

    auto want = model.config().to_kv();
    for (const auto& [k, v] : want) {
        auto it = h.config_kv.find(k);
        if (it == h.config_kv.end() || it->second != v)
            throw CheckpointError(
                path + ": config mismatch on key '" + k + "': model wants '" +
                v + "', checkpoint has '" +
                (it == h.config_kv.end() ? std::string("<missing>")
                                         : it->second) +
                "'");
    }

    model.feature_standardizer().set(h.feat_mean, h.feat_std, h.feat_fitted);
    model.noise_rng() = RngState(h.noise_seed);
    model.noise_rng().set_counter(h.noise_counter);
    load_params(in, path, model);
}

FlexTsfModel load_checkpoint_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    Header h = read_header(in, path);
    FlexTsfModel model(ModelConfig::from_kv(h.config_kv), h.init_seed);
    model.feature_standardizer().set(h.feat_mean, h.feat_std, h.feat_fitted);
    model.noise_rng() = RngState(h.noise_seed);
    model.noise_rng().set_counter(h.noise_counter);
    load_params(in, path, model);
    return model;
}

}  // namespace flextsf
