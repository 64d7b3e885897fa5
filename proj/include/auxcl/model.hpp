#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "auxcl/rng.hpp"
#include "auxcl/tensor.hpp"

namespace auxcl {

enum class BackboneKind { Mlp, SmallCnn };

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& name);

struct BackboneConfig {
    BackboneKind kind = BackboneKind::Mlp;
    Shape input_shape;                          // per-sample, e.g. {32} or {3,32,32}
    std::vector<std::size_t> hidden{256, 128};  // MLP widths
    std::vector<std::size_t> channels{16, 32};  // SmallCnn conv blocks
    std::size_t num_heads = 0;
};

// Active-head selector over the output layer.
class HeadMask {
public:
    HeadMask() = default;
    explicit HeadMask(std::size_t num_heads, bool value = false) : active_(num_heads, value) {}

    static HeadMask all(std::size_t num_heads) { return HeadMask(num_heads, true); }

    std::size_t size() const { return active_.size(); }
    bool operator[](std::size_t h) const { return active_[h]; }
    void set(std::size_t h, bool on = true) { active_.at(h) = on; }
    std::size_t count() const;
    bool any() const { return count() > 0; }

private:
    std::vector<bool> active_;
};

struct Linear {
    Parameter weight;  // [in, out]
    Parameter bias;    // [out]

    Variable operator()(const Variable& x) const;
};

struct ConvBlock {
    Parameter kernel;  // [out, in, 3, 3]
    Parameter bias;    // [out]

    // 3x3 conv (pad 1) -> ReLU -> 2x2 max-pool
    Variable operator()(const Variable& x) const;
};

// Backbone followed by one linear output layer whose units are the heads.
class Classifier {
public:
    Classifier(BackboneConfig config, std::uint64_t seed);

    const BackboneConfig& config() const { return config_; }
    std::size_t num_heads() const { return config_.num_heads; }
    std::size_t feature_dim() const { return feature_dim_; }
    std::uint64_t seed() const { return seed_; }

    // [B, ...input_shape] -> [B, feature_dim]
    Variable features(const Tensor& batch) const;
    // [B, ...input_shape] -> [B, num_heads] pre-softmax logits
    Variable forward(const Tensor& batch) const;
    Tensor logits(const Tensor& batch) const { return forward(batch).value(); }

    std::vector<Parameter*> parameters();
    std::vector<Parameter*> feature_parameters();
    std::vector<const Parameter*> parameters() const;

    void freeze();
    void unfreeze();
    bool frozen() const { return frozen_; }

    // Fresh He-uniform draw for the output layer only.
    void reset_output_layer(Rng& rng);
    Linear& output_layer() { return head_; }

    // Order-sensitive FNV-1a over the raw bytes of every parameter.
    std::uint64_t checksum() const;

private:
    BackboneConfig config_;
    std::uint64_t seed_;
    std::size_t feature_dim_ = 0;
    bool frozen_ = false;
    std::vector<Linear> dense_;
    std::vector<ConvBlock> convs_;
    Linear head_;
};

Linear make_linear(std::size_t in, std::size_t out, Rng& rng);

// Masked-out heads become -inf: they never win argmax and get no softmax mass.
Tensor masked_logits(const Tensor& logits, const HeadMask& mask);

// Row-wise argmax; ties resolve to the lower index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);

// Checkpoint container (little-endian):
//   "AUXCLCK1" | u32 version | u64 seed | u64 digest_len | digest bytes
//   | u32 backbone kind | u64 num_heads | u64 n_params
//   | per parameter: u64 rank | u64 dims[rank] | f64 values[prod(dims)]
void save_checkpoint(const Classifier& model, const std::string& config_digest,
                     const std::filesystem::path& path);
// Loads into a model of identical architecture; returns the stored digest.
std::string load_checkpoint(Classifier& model, const std::filesystem::path& path);

}  // namespace auxcl
