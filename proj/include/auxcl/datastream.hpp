#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "auxcl/rng.hpp"
#include "auxcl/tensor.hpp"

namespace auxcl {

// Labeled samples stored contiguously, one row of sample_size() values each.
struct Dataset {
    Shape sample_shape;
    std::vector<double> inputs;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::size_t sample_size() const { return shape_numel(sample_shape); }
    std::span<const double> input(std::size_t i) const;
    bool is_image() const { return sample_shape.size() == 3; }

    void push_back(std::span<const double> x, int label);
    // Stacks the selected rows into a [n, ...sample_shape] batch.
    Tensor gather(std::span<const std::size_t> indices) const;
    Dataset subset(std::span<const std::size_t> indices) const;
    std::vector<int> classes() const;  // sorted, unique
    std::map<int, std::size_t> class_counts() const;
    std::uint64_t checksum() const;
};

Tensor stack_samples(const Shape& sample_shape, std::span<const std::vector<double>> rows);

struct TaskSpec {
    std::size_t index = 0;
    std::vector<int> classes;  // global class ids, in head-assignment order
    Dataset train;
    Dataset test;
    std::map<int, std::size_t> class_counts;  // train samples per class
};

struct TaskSequence {
    std::vector<TaskSpec> tasks;

    std::size_t num_tasks() const { return tasks.size(); }
    std::size_t total_classes() const;
    // Classes of tasks 2..T, i.e. the number of heads reserved for the future.
    std::size_t future_classes() const;
    std::vector<int> all_classes() const;
};

// Seeded partition of the dataset's classes into num_tasks disjoint tasks of
// classes_per_task each. The test dataset, when given, is split by the same
// class partition.
TaskSequence build_sequence(const Dataset& train, std::size_t classes_per_task,
                            std::size_t num_tasks, std::uint64_t seed,
                            const Dataset* test = nullptr);

// Auxiliary classes and the live placeholder sub-dataset. Each active aux
// class stands in on exactly one head reserved for a future task.
class AuxiliaryPool {
public:
    AuxiliaryPool() = default;
    AuxiliaryPool(Dataset data, std::map<int, std::size_t> active);

    const Dataset& data() const { return data_; }
    const std::vector<int>& classes() const { return classes_; }
    const std::map<int, std::size_t>& active() const { return active_; }
    std::size_t active_count() const { return active_.size(); }
    bool exhausted() const { return active_.empty(); }
    std::optional<std::size_t> head_of(int aux_class) const;
    // Active aux classes ordered by head index.
    std::vector<int> active_by_head() const;
    const std::vector<std::size_t>& indices_of(int aux_class) const;

    // Drops an aux class from the live sub-dataset once its head is claimed.
    void retire(int aux_class);

private:
    Dataset data_;
    std::vector<int> classes_;
    std::map<int, std::size_t> active_;
    std::map<int, std::vector<std::size_t>> by_class_;
};

// Picks as many aux classes as the later tasks hold in total (uniform, no
// replacement) and maps them in draw order onto the heads after the first
// task's classes.
AuxiliaryPool build_aux_pool(const Dataset& aux_data, const TaskSequence& sequence,
                             std::uint64_t seed);

struct MixedBatch {
    Tensor task_inputs;                    // pre-augmentation
    std::vector<int> task_labels;          // global class ids
    std::vector<std::size_t> task_indices; // rows of D_t
    Tensor aux_inputs;                     // empty when the pool is exhausted or aux_bs == 0
    std::vector<int> aux_heads;            // labels already remapped to head indices

    std::size_t task_size() const { return task_labels.size(); }
    std::size_t aux_size() const { return aux_heads.size(); }
};

// Epoch-wise shuffled cursor over a task's training set plus a balanced
// round-robin cursor over the active aux classes. The two sides draw from
// independent random streams so an empty aux side never perturbs task order.
class MixedBatchSampler {
public:
    MixedBatchSampler(const TaskSpec& task, const AuxiliaryPool* aux, std::size_t task_bs,
                      std::size_t aux_bs, Rng& task_rng, Rng& aux_rng);

    MixedBatch next();
    std::size_t batches_per_epoch() const;

private:
    std::size_t next_aux_index(int aux_class);

    const TaskSpec& task_;
    const AuxiliaryPool* aux_;
    std::size_t task_bs_, aux_bs_;
    Rng& task_rng_;
    Rng& aux_rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::size_t round_robin_ = 0;
    std::map<int, std::pair<std::vector<std::size_t>, std::size_t>> aux_cursors_;
};

// Random crop (zero-pad `pad`, crop back) and horizontal flip with p = 0.5,
// independently per sample. Requires [B,C,H,W] input.
Tensor augment(const Tensor& batch, Rng& rng, std::size_t pad = 4);
Tensor hflip(const Tensor& batch);
// Shifted window of the zero-padded image; (pad, pad) is the identity.
Tensor crop_padded(const Tensor& batch, std::size_t pad, std::size_t top, std::size_t left);

// CIFAR-10 binary record: 1 label byte + 3072 channel-major pixel bytes.
Dataset load_cifar10_file(const std::filesystem::path& path);
// data_batch_1..5.bin and test_batch.bin from a cifar-10-batches-bin folder.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir);

enum class Cifar100Label { Coarse, Fine };
// CIFAR-100 binary record: coarse byte + fine byte + 3072 pixel bytes.
Dataset load_cifar100_file(const std::filesystem::path& path, Cifar100Label label);

// Gaussian class blobs. Means are scaled so the closest pair sits exactly
// `separation` apart; samples add unit-variance (times noise) isotropic noise.
Dataset make_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                       const Shape& sample_shape, double separation, std::uint64_t seed,
                       double noise = 1.0);

// Moves the last `test_per_class` samples of every class into a test set.
std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t test_per_class);

// Keeps only the listed classes and shifts labels by `label_offset`.
Dataset select_classes(const Dataset& data, std::span<const int> classes, int label_offset = 0);

}  // namespace auxcl
