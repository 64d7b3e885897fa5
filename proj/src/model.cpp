#include "auxcl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "auxcl/errors.hpp"

namespace auxcl {

std::string to_string(BackboneKind kind) {
    return kind == BackboneKind::Mlp ? "mlp" : "small_cnn";
}

BackboneKind backbone_kind_from_string(const std::string& name) {
    if (name == "mlp") return BackboneKind::Mlp;
    if (name == "small_cnn") return BackboneKind::SmallCnn;
    throw ConfigError("unknown backbone kind '" + name + "' (expected mlp or small_cnn)");
}

std::size_t HeadMask::count() const {
    return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), true));
}

namespace {

// Uniform(-b, b) with b = sqrt(6 / fan_in).
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape), 0.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

}  // namespace

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
    return Linear{Parameter(he_uniform({in, out}, in, rng)), Parameter(Tensor({out}, 0.0))};
}

Variable Linear::operator()(const Variable& x) const {
    return ops::add_row_bias(ops::matmul(x, weight.var()), bias.var());
}

Variable ConvBlock::operator()(const Variable& x) const {
    auto y = ops::add_channel_bias(ops::conv2d(x, kernel, 1, 1), bias.var());
    return ops::max_pool2d(ops::relu(y), 2);
}

Classifier::Classifier(BackboneConfig config, std::uint64_t seed)
    : config_(std::move(config)), seed_(seed) {
    if (config_.num_heads == 0) throw ConfigError("classifier needs at least one head");
    if (config_.input_shape.empty()) throw ConfigError("classifier input shape is empty");
    Rng rng(seed);
    if (config_.kind == BackboneKind::Mlp) {
        std::size_t in = shape_numel(config_.input_shape);
        for (std::size_t width : config_.hidden) {
            dense_.push_back(make_linear(in, width, rng));
            in = width;
        }
        feature_dim_ = in;
    } else {
        if (config_.input_shape.size() != 3)
            throw ConfigError("small_cnn needs a [C,H,W] input shape, got " +
                              shape_str(config_.input_shape));
        std::size_t c = config_.input_shape[0], h = config_.input_shape[1],
                    w = config_.input_shape[2];
        for (std::size_t out : config_.channels) {
            if (h < 2 || w < 2) throw ConfigError("small_cnn: too many pooling stages for input");
            convs_.push_back(ConvBlock{Parameter(he_uniform({out, c, 3, 3}, c * 9, rng)),
                                       Parameter(Tensor({out}, 0.0))});
            c = out;
            h /= 2;
            w /= 2;
        }
        feature_dim_ = c * h * w;
    }
    head_ = make_linear(feature_dim_, config_.num_heads, rng);
}

Variable Classifier::features(const Tensor& batch) const {
    if (batch.rank() != config_.input_shape.size() + 1 ||
        !std::equal(config_.input_shape.begin(), config_.input_shape.end(),
                    batch.shape().begin() + 1))
        throw DimensionError("model input " + shape_str(batch.shape()) +
                             " does not match [B]+" + shape_str(config_.input_shape));
    Variable x(batch, false);
    if (config_.kind == BackboneKind::Mlp) {
        x = ops::flatten(x);
        for (const auto& layer : dense_) x = ops::relu(layer(x));
    } else {
        for (const auto& block : convs_) x = block(x);
        x = ops::flatten(x);
    }
    return x;
}

Variable Classifier::forward(const Tensor& batch) const { return head_(features(batch)); }

std::vector<Parameter*> Classifier::feature_parameters() {
    std::vector<Parameter*> out;
    for (auto& l : dense_) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    for (auto& c : convs_) {
        out.push_back(&c.kernel);
        out.push_back(&c.bias);
    }
    return out;
}

std::vector<Parameter*> Classifier::parameters() {
    auto out = feature_parameters();
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
}

std::vector<const Parameter*> Classifier::parameters() const {
    auto mut = const_cast<Classifier*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

void Classifier::freeze() {
    for (auto* p : parameters()) {
        p->set_learnable(false);
        p->clear_grad();
    }
    frozen_ = true;
}

void Classifier::unfreeze() {
    for (auto* p : parameters()) p->set_learnable(true);
    frozen_ = false;
}

void Classifier::reset_output_layer(Rng& rng) {
    head_ = make_linear(feature_dim_, config_.num_heads, rng);
    if (frozen_) {
        head_.weight.set_learnable(false);
        head_.bias.set_learnable(false);
    }
}

std::uint64_t Classifier::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Parameter* p : parameters())
        for (double v : p->value().data()) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ULL;
            }
        }
    return h;
}

Tensor masked_logits(const Tensor& logits, const HeadMask& mask) {
    if (logits.rank() != 2 || logits.dim(1) != mask.size())
        throw DimensionError("masked_logits: mask of " + std::to_string(mask.size()) +
                             " heads for logits " + shape_str(logits.shape()));
    if (!mask.any()) throw UsageError("masked_logits: mask has no active head");
    Tensor out = logits;
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            if (!mask[c]) out[r * cols + c] = -std::numeric_limits<double>::infinity();
    return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw DimensionError("argmax_rows: expects [B,N]");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<std::size_t> out(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* p = &logits[r * cols];
        out[r] = static_cast<std::size_t>(std::max_element(p, p + cols) - p);
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'A', 'U', 'X', 'C', 'L', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("checkpoint truncated");
    return v;
}

}  // namespace

void save_checkpoint(const Classifier& model, const std::string& config_digest,
                     const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, model.seed());
    put<std::uint64_t>(os, config_digest.size());
    os.write(config_digest.data(), static_cast<std::streamsize>(config_digest.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(model.config().kind));
    put<std::uint64_t>(os, model.num_heads());
    auto params = model.parameters();
    put<std::uint64_t>(os, params.size());
    for (const Parameter* p : params) {
        const Tensor& t = p->value();
        put<std::uint64_t>(os, t.rank());
        for (auto d : t.shape()) put<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw Error("failed writing checkpoint " + path.string());
}

std::string load_checkpoint(Classifier& model, const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw FormatError("not a checkpoint file: " + path.string());
    if (get<std::uint32_t>(is) != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version");
    get<std::uint64_t>(is);  // seed, informational
    auto len = get<std::uint64_t>(is);
    if (len > (1u << 20)) throw FormatError("checkpoint digest too long");
    std::string digest(len, '\0');
    is.read(digest.data(), static_cast<std::streamsize>(len));
    if (get<std::uint32_t>(is) != static_cast<std::uint32_t>(model.config().kind) ||
        get<std::uint64_t>(is) != model.num_heads())
        throw FormatError("checkpoint architecture does not match model");
    auto params = model.parameters();
    if (get<std::uint64_t>(is) != params.size())
        throw FormatError("checkpoint parameter count does not match model");
    for (Parameter* p : params) {
        Tensor& t = p->mutable_value();
        auto rank = get<std::uint64_t>(is);
        Shape shape(rank);
        for (auto& d : shape) d = get<std::uint64_t>(is);
        if (shape != t.shape())
            throw FormatError("checkpoint parameter shape " + shape_str(shape) + " vs model " +
                              shape_str(t.shape()));
        is.read(reinterpret_cast<char*>(t.data().data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw FormatError("checkpoint truncated");
        p->clear_grad();
    }
    return digest;
}

}  // namespace auxcl
