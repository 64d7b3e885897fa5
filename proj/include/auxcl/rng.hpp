#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace auxcl {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Every random stream of a run is derived from one master seed:
//   seed(stream) = splitmix64(master ^ fnv1a64(stream_name))
// Stream names used by the training stack are listed in seed_streams below.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    return splitmix64(master ^ fnv1a64(stream));
}

inline Rng make_rng(std::uint64_t master, std::string_view stream) {
    return Rng(derive_seed(master, stream));
}

namespace seed_streams {
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kSplit = "split";
inline constexpr std::string_view kAuxSelect = "aux_select";
inline constexpr std::string_view kTaskBatch = "task_batch";
inline constexpr std::string_view kAuxBatch = "aux_batch";
inline constexpr std::string_view kReservoir = "reservoir";
inline constexpr std::string_view kReplay = "replay";
inline constexpr std::string_view kAugment = "augment";
inline constexpr std::string_view kPretrain = "pretrain";
}  // namespace seed_streams

// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace auxcl
