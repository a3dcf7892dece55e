#include "respnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

namespace respnet {

void ModelConfig::validate() const {
    if (input_length < 1 || levels < 1 || base_filters < 1 || max_filters < base_filters)
        throw InvalidConfig("model config: non-positive or inconsistent sizes");
    if (down_stride < 2 || down_kernel < down_stride ||
        (down_kernel - down_stride) % 2 != 0)
        throw InvalidConfig("model config: down_kernel/down_stride must allow symmetric padding");
    int64_t len = input_length;
    for (int64_t j = 0; j < levels; ++j) {
        if (len % down_stride != 0)
            throw InvalidConfig("model config: input_length not divisible by down_stride^levels");
        len /= down_stride;
    }
    if (inception_dilations.empty())
        throw InvalidConfig("model config: empty inception dilation list");
    if (inception_kernel < 1 || inception_kernel % 2 == 0)
        throw InvalidConfig("model config: inception kernel must be odd");
    const auto branches = static_cast<int64_t>(inception_dilations.size());
    for (int64_t j = 1; j <= levels; ++j)
        if (channels_at(j) % branches != 0)
            throw InvalidConfig("model config: branch count must divide every level's channels");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
        throw InvalidConfig("model config: leaky slope must be in (0,1)");
}

int64_t ModelConfig::channels_at(int64_t level) const {
    int64_t ch = base_filters;
    for (int64_t j = 1; j < level; ++j) ch = std::min(ch * 2, max_filters);
    return std::min(ch, max_filters);
}

int64_t ModelConfig::bottleneck_length() const {
    int64_t len = input_length;
    for (int64_t j = 0; j < levels; ++j) len /= down_stride;
    return len;
}

void ModelParams::add(const std::string& name, Tensor t, bool is_trainable) {
    if (tensors.count(name)) throw InvalidConfig("duplicate parameter name: " + name);
    order.push_back(name);
    tensors.emplace(name, std::move(t));
    trainable[name] = is_trainable;
}

Tensor& ModelParams::get(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw InvalidConfig("unknown parameter: " + name);
    return it->second;
}

const Tensor& ModelParams::get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw InvalidConfig("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ModelParams::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& name : order)
        if (trainable.at(name)) out.push_back(name);
    return out;
}

namespace {

class InitRng {
public:
    explicit InitRng(uint64_t seed) : rng_(seed) {}
    // [0,1) from the top 53 bits; stable across platforms
    double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

private:
    std::mt19937_64 rng_;
};

void add_conv(ModelParams& p, InitRng& rng, const std::string& prefix, int64_t out_ch,
              int64_t in_ch, int64_t k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k));
    Tensor w(out_ch, in_ch, k, true);
    for (auto& v : w.value()) v = rng.uniform(-bound, bound);
    Tensor b(1, out_ch, 1, true);
    for (auto& v : b.value()) v = rng.uniform(-bound, bound);
    p.add(prefix + ".w", std::move(w), true);
    p.add(prefix + ".b", std::move(b), true);
}

// Transposed conv weight layout is (high_ch, low_ch, k); fan-in for the
// upsampled output is high_ch * k per stride phase group.
void add_tconv(ModelParams& p, InitRng& rng, const std::string& prefix, int64_t hi_ch,
               int64_t lo_ch, int64_t k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hi_ch * k));
    Tensor w(hi_ch, lo_ch, k, true);
    for (auto& v : w.value()) v = rng.uniform(-bound, bound);
    Tensor b(1, lo_ch, 1, true);
    for (auto& v : b.value()) v = rng.uniform(-bound, bound);
    p.add(prefix + ".w", std::move(w), true);
    p.add(prefix + ".b", std::move(b), true);
}

void add_bn(ModelParams& p, const std::string& prefix, int64_t ch) {
    Tensor gamma(1, ch, 1, true);
    std::fill(gamma.value().begin(), gamma.value().end(), 1.0);
    Tensor beta(1, ch, 1, true);
    Tensor rm(1, ch, 1);
    Tensor rv(1, ch, 1);
    std::fill(rv.value().begin(), rv.value().end(), 1.0);
    p.add(prefix + ".gamma", std::move(gamma), true);
    p.add(prefix + ".beta", std::move(beta), true);
    p.add(prefix + ".running_mean", std::move(rm), false);
    p.add(prefix + ".running_var", std::move(rv), false);
}

void add_inception(ModelParams& p, InitRng& rng, const ModelConfig& cfg,
                   const std::string& prefix, int64_t ch) {
    const auto branches = static_cast<int64_t>(cfg.inception_dilations.size());
    for (int64_t i = 0; i < branches; ++i) {
        const std::string br = prefix + ".br" + std::to_string(i);
        add_conv(p, rng, br + ".conv", ch / branches, ch, cfg.inception_kernel);
        add_bn(p, br + ".bn", ch / branches);
    }
}

BatchNormState bn_state(ModelParams& p, const std::string& prefix) {
    return BatchNormState{p.get(prefix + ".running_mean"), p.get(prefix + ".running_var"),
                          p.config.bn_momentum, p.config.bn_eps};
}

Tensor apply_bn_act(ModelParams& p, const std::string& bn_prefix, const Tensor& x,
                    BnMode mode, GradTape* tape) {
    BatchNormState state = bn_state(p, bn_prefix);
    Tensor y = batch_norm1d(x, p.get(bn_prefix + ".gamma"), p.get(bn_prefix + ".beta"),
                            state, mode, tape);
    return leaky_relu(y, p.config.leaky_slope, tape);
}

// Decoder output width at level j: mirror of the encoder schedule, with the
// outermost level kept at base_filters for the head.
int64_t decoder_out_channels(const ModelConfig& cfg, int64_t level) {
    return cfg.channels_at(std::max<int64_t>(level - 1, 1));
}

int64_t skip_channels(const ModelConfig& cfg, int64_t level) {
    return level == 1 ? 1 : cfg.channels_at(level - 1);
}

}  // namespace

ModelParams build_model(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    InitRng rng(config.seed);

    int64_t in_ch = 1;
    for (int64_t j = 1; j <= config.levels; ++j) {
        const int64_t out_ch = config.channels_at(j);
        const std::string lv = "enc" + std::to_string(j);
        add_conv(p, rng, lv + ".down", out_ch, in_ch, config.down_kernel);
        add_bn(p, lv + ".bn", out_ch);
        add_inception(p, rng, config, lv + ".inc", out_ch);
        in_ch = out_ch;
    }
    for (int64_t j = config.levels; j >= 1; --j) {
        const int64_t ch = config.channels_at(j);
        const int64_t out_ch = decoder_out_channels(config, j);
        const std::string lv = "dec" + std::to_string(j);
        add_tconv(p, rng, lv + ".up", ch, ch, config.down_kernel);
        add_conv(p, rng, lv + ".merge", out_ch, ch + skip_channels(config, j),
                 config.inception_kernel);
        add_bn(p, lv + ".bn", out_ch);
        add_inception(p, rng, config, lv + ".inc", out_ch);
    }
    add_conv(p, rng, "head", 1, config.channels_at(1), 1);
    return p;
}

int64_t trainable_parameter_count(const ModelParams& params) {
    int64_t count = 0;
    for (const auto& name : params.order)
        if (params.trainable.at(name)) count += params.tensors.at(name).size();
    return count;
}

Tensor dilated_residual_inception_block(ModelParams& params, const std::string& prefix,
                                        const Tensor& x, BnMode mode, GradTape* tape) {
    const ModelConfig& cfg = params.config;
    const auto branches = static_cast<int64_t>(cfg.inception_dilations.size());
    if (x.c() % branches != 0)
        throw ShapeMismatch("inception block: channels not divisible by branch count");
    Tensor merged;
    for (int64_t i = 0; i < branches; ++i) {
        const std::string br = prefix + ".br" + std::to_string(i);
        const int64_t d = cfg.inception_dilations[static_cast<size_t>(i)];
        ConvSpec spec{x.c(), x.c() / branches, cfg.inception_kernel, 1, d,
                      d * (cfg.inception_kernel - 1) / 2};
        Tensor y = conv1d(x, params.get(br + ".conv.w"), params.get(br + ".conv.b"),
                          spec, tape);
        y = apply_bn_act(params, br + ".bn", y, mode, tape);
        merged = (i == 0) ? y : concat_channels(merged, y, tape);
    }
    Tensor out = add(merged, x, tape);
    return leaky_relu(out, cfg.leaky_slope, tape);
}

Tensor encoder_level(ModelParams& params, int64_t level, const Tensor& x, BnMode mode,
                     GradTape* tape) {
    const ModelConfig& cfg = params.config;
    if (x.l() % cfg.down_stride != 0)
        throw ShapeMismatch("encoder level: input length not divisible by stride");
    const std::string lv = "enc" + std::to_string(level);
    ConvSpec spec{x.c(), cfg.channels_at(level), cfg.down_kernel, cfg.down_stride, 1,
                  (cfg.down_kernel - cfg.down_stride) / 2};
    Tensor y = conv1d(x, params.get(lv + ".down.w"), params.get(lv + ".down.b"), spec, tape);
    y = apply_bn_act(params, lv + ".bn", y, mode, tape);
    return dilated_residual_inception_block(params, lv + ".inc", y, mode, tape);
}

Tensor decoder_level(ModelParams& params, int64_t level, const Tensor& x,
                     const Tensor& skip, BnMode mode, GradTape* tape) {
    const ModelConfig& cfg = params.config;
    const std::string lv = "dec" + std::to_string(level);
    ConvSpec up{x.c(), x.c(), cfg.down_kernel, cfg.down_stride, 1,
                (cfg.down_kernel - cfg.down_stride) / 2};
    Tensor y = transposed_conv1d(x, params.get(lv + ".up.w"), params.get(lv + ".up.b"),
                                 up, tape);
    if (y.l() != skip.l())
        throw ShapeMismatch("decoder level: skip length does not match upsampled length");
    y = concat_channels(y, skip, tape);
    ConvSpec merge{y.c(), decoder_out_channels(cfg, level), cfg.inception_kernel, 1, 1,
                   (cfg.inception_kernel - 1) / 2};
    y = conv1d(y, params.get(lv + ".merge.w"), params.get(lv + ".merge.b"), merge, tape);
    y = apply_bn_act(params, lv + ".bn", y, mode, tape);
    return dilated_residual_inception_block(params, lv + ".inc", y, mode, tape);
}

Tensor forward(ModelParams& params, const Tensor& x, BnMode mode, GradTape* tape) {
    const ModelConfig& cfg = params.config;
    if (x.c() != 1 || x.l() != cfg.input_length)
        throw ShapeMismatch("forward: expected shape (N, 1, input_length)");
    std::vector<Tensor> skips;
    skips.reserve(static_cast<size_t>(cfg.levels));
    Tensor y = x;
    for (int64_t j = 1; j <= cfg.levels; ++j) {
        skips.push_back(y);  // pre-downsample feature map
        y = encoder_level(params, j, y, mode, tape);
    }
    for (int64_t j = cfg.levels; j >= 1; --j)
        y = decoder_level(params, j, y, skips[static_cast<size_t>(j - 1)], mode, tape);
    ConvSpec head{y.c(), 1, 1, 1, 1, 0};
    return conv1d(y, params.get("head.w"), params.get("head.b"), head, tape);
}

namespace {

constexpr char kMagic[4] = {'R', 'S', 'P', 'N'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));  // x86: already little-endian
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw FormatError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_le<uint16_t>(os, static_cast<uint16_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    const auto len = read_le<uint16_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw FormatError("checkpoint: truncated file");
    return s;
}

void write_config(std::ostream& os, const ModelConfig& c) {
    write_le<int64_t>(os, c.input_length);
    write_le<int64_t>(os, c.levels);
    write_le<int64_t>(os, c.base_filters);
    write_le<int64_t>(os, c.max_filters);
    write_le<int64_t>(os, c.down_kernel);
    write_le<int64_t>(os, c.down_stride);
    write_le<int64_t>(os, c.inception_kernel);
    write_le<double>(os, c.leaky_slope);
    write_le<double>(os, c.bn_momentum);
    write_le<double>(os, c.bn_eps);
    write_le<uint64_t>(os, c.seed);
    write_le<uint32_t>(os, static_cast<uint32_t>(c.inception_dilations.size()));
    for (int64_t d : c.inception_dilations) write_le<int64_t>(os, d);
}

ModelConfig read_config(std::istream& is) {
    ModelConfig c;
    c.input_length = read_le<int64_t>(is);
    c.levels = read_le<int64_t>(is);
    c.base_filters = read_le<int64_t>(is);
    c.max_filters = read_le<int64_t>(is);
    c.down_kernel = read_le<int64_t>(is);
    c.down_stride = read_le<int64_t>(is);
    c.inception_kernel = read_le<int64_t>(is);
    c.leaky_slope = read_le<double>(is);
    c.bn_momentum = read_le<double>(is);
    c.bn_eps = read_le<double>(is);
    c.seed = read_le<uint64_t>(is);
    const auto nd = read_le<uint32_t>(is);
    c.inception_dilations.clear();
    for (uint32_t i = 0; i < nd; ++i) c.inception_dilations.push_back(read_le<int64_t>(is));
    return c;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path, bool compact) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_le<uint16_t>(os, kVersion);
    write_config(os, params.config);
    write_le<uint8_t>(os, compact ? 4 : 8);
    write_le<uint32_t>(os, static_cast<uint32_t>(params.order.size()));
    for (const auto& name : params.order) {
        const Tensor& t = params.tensors.at(name);
        write_string(os, name);
        write_le<uint8_t>(os, params.trainable.at(name) ? 1 : 0);
        write_le<uint8_t>(os, 3);
        write_le<uint32_t>(os, static_cast<uint32_t>(t.n()));
        write_le<uint32_t>(os, static_cast<uint32_t>(t.c()));
        write_le<uint32_t>(os, static_cast<uint32_t>(t.l()));
        if (compact)
            for (double v : t.value()) write_le<float>(os, static_cast<float>(v));
        else
            for (double v : t.value()) write_le<double>(os, v);
    }
    if (!os) throw IoError("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic");
    const auto version = read_le<uint16_t>(is);
    if (version != kVersion) throw FormatError("checkpoint: unsupported version");
    const ModelConfig config = read_config(is);
    const auto width = read_le<uint8_t>(is);
    if (width != 4 && width != 8) throw FormatError("checkpoint: bad precision flag");
    const auto count = read_le<uint32_t>(is);

    ModelParams params = build_model(config);
    const size_t core_expected = params.order.size();
    size_t core_seen = 0;
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(is);
        const bool is_trainable = read_le<uint8_t>(is) != 0;
        const auto rank = read_le<uint8_t>(is);
        if (rank != 3) throw FormatError("checkpoint: unsupported tensor rank");
        const auto dn = read_le<uint32_t>(is);
        const auto dc = read_le<uint32_t>(is);
        const auto dl = read_le<uint32_t>(is);
        std::vector<double> values(static_cast<size_t>(dn) * dc * dl);
        if (width == 8)
            for (auto& v : values) v = read_le<double>(is);
        else
            for (auto& v : values) v = static_cast<double>(read_le<float>(is));
        if (params.has(name)) {
            Tensor& dst = params.get(name);
            if (dst.n() != dn || dst.c() != dc || dst.l() != dl)
                throw ConfigMismatch("checkpoint: tensor shape conflicts with config: " + name);
            std::copy(values.begin(), values.end(), dst.value().begin());
            ++core_seen;
        } else {
            // auxiliary tensors (optimizer state etc.) ride along untouched
            params.add(name, Tensor::from(std::move(values), dn, dc, dl, is_trainable),
                       is_trainable);
        }
    }
    if (core_seen != core_expected)
        throw ConfigMismatch("checkpoint: missing model tensors");
    return params;
}

}  // namespace respnet
