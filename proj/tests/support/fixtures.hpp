// Small on-disk fixtures in the CIFAR binary layouts.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

namespace fixture {

// Class-dependent pixel pattern plus noise, so a conv net can learn it.
inline std::vector<std::uint8_t> cifar_pixels(int label, std::mt19937_64& rng) {
    std::vector<std::uint8_t> px(3072);
    std::uniform_int_distribution<int> noise(-40, 40);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x) {
                const bool on = ((x / 4 + y / 4 + static_cast<std::size_t>(label) * (c + 1)) % 3) == 0;
                const int base = on ? 60 + 18 * label : 128 - 8 * label;
                px[c * 1024 + y * 32 + x] = static_cast<std::uint8_t>(std::clamp(base + noise(rng), 0, 255));
            }
    return px;
}

// `per_class` records for each label 0..9; optional raw label override for
// the first record (to produce invalid files).
inline void write_cifar10(const std::filesystem::path& path, std::size_t per_class,
                          std::uint64_t seed, int first_label_override = -1) {
    std::mt19937_64 rng(seed);
    std::ofstream os(path, std::ios::binary);
    bool first = true;
    for (std::size_t i = 0; i < per_class; ++i)
        for (int label = 0; label < 10; ++label) {
            const auto px = cifar_pixels(label, rng);
            const int raw = first && first_label_override >= 0 ? first_label_override : label;
            first = false;
            os.put(static_cast<char>(raw));
            os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
        }
}

// cifar-10-batches-bin layout: five train batches plus a test batch.
inline void write_cifar10_dir(const std::filesystem::path& dir, std::size_t train_per_class_per_batch,
                              std::size_t test_per_class, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    for (int b = 1; b <= 5; ++b)
        write_cifar10(dir / ("data_batch_" + std::to_string(b) + ".bin"), train_per_class_per_batch,
                      seed + static_cast<std::uint64_t>(b));
    write_cifar10(dir / "test_batch.bin", test_per_class, seed + 100);
}

// CIFAR-100 layout: coarse byte, fine byte, pixels.
inline void write_cifar100(const std::filesystem::path& path, std::size_t per_class,
                           std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::ofstream os(path, std::ios::binary);
    for (std::size_t i = 0; i < per_class; ++i)
        for (int fine = 0; fine < 100; fine += 5) {
            const int coarse = fine / 5;
            const auto px = cifar_pixels(coarse % 10, rng);
            os.put(static_cast<char>(coarse));
            os.put(static_cast<char>(fine));
            os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
        }
}

}  // namespace fixture
