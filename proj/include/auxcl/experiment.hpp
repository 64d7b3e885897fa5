#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "auxcl/datastream.hpp"
#include "auxcl/methods.hpp"
#include "auxcl/model.hpp"

namespace auxcl {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kOutputDirEnv = "AUXCL_OUTPUT_DIR";

// Where samples come from: generated blobs or CIFAR binary files.
struct DataSpec {
    std::string kind = "synthetic";  // synthetic | cifar10 | cifar100
    // synthetic
    std::size_t num_classes = 10;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    Shape sample_shape{32};
    double separation = 4.0;
    double noise = 1.0;
    std::uint64_t seed = 1;
    // cifar10: directory with data_batch_*.bin / test_batch.bin
    // cifar100: directory with train.bin / test.bin
    std::string path;
    std::string label = "coarse";  // cifar100 label field
    std::vector<int> classes;      // optional subset of source labels
    int label_offset = 0;          // shift applied to every label
    std::size_t max_per_class = 0; // 0 = keep all training samples
};

// One ablation arm: which of the aux stream, MAH and aux pre-training are on.
struct Arm {
    bool use_aux = false;
    bool use_mah = false;
    bool pretrain = false;

    std::string name() const;  // vanilla | aux | aux+mah | pretrain | aux+mah+pretrain ...
    static Arm parse(const std::string& text);
    friend bool operator==(const Arm&, const Arm&) = default;
};

struct ExperimentConfig {
    int version = kConfigVersion;
    std::string name = "experiment";
    std::filesystem::path output_dir;
    std::size_t workers = 1;

    DataSpec data;
    std::optional<DataSpec> aux;
    std::size_t classes_per_task = 2;
    std::size_t num_tasks = 5;
    BackboneConfig backbone;
    MethodConfig training;  // method/buffer/flags/seed are overridden per cell
    std::size_t pretrain_epochs = 1;
    std::size_t peak_window = 50;

    std::vector<Method> methods{Method::Derpp};
    std::vector<std::size_t> buffers{200};
    std::vector<Arm> arms{Arm{}};
    std::vector<std::uint64_t> seeds{0};

    // Hex FNV-1a of the canonical JSON form of every field that influences
    // results (output_dir and workers excluded).
    std::string digest() const;
    std::string canonical_json() const;
};

// Parses the YAML dialect documented in README.md. ConfigError on any
// unknown key, missing section or invalid value.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct GridCell {
    Method method;
    std::size_t buffer;
    Arm arm;
    std::uint64_t seed;

    std::string id() const;  // e.g. derpp_aux+mah_b50_s3
};

std::vector<GridCell> expand_grid(const ExperimentConfig& cfg);

// Train/test data and the aux dataset after loading and class selection.
struct LoadedData {
    Dataset train;
    Dataset test;
    std::optional<Dataset> aux;
};

LoadedData load_data(const ExperimentConfig& cfg);
TaskSequence sequence_for_seed(const ExperimentConfig& cfg, const LoadedData& data,
                               std::uint64_t seed);
MethodConfig method_config_for(const ExperimentConfig& cfg, const GridCell& cell);

// Checks every cell's preconditions (aux class count, disjoint class ids,
// shapes) without training. Returns the number of result rows a run writes.
std::size_t validate_experiment(const ExperimentConfig& cfg, const LoadedData& data);

struct CellResult {
    GridCell cell;
    RunResult run;
};

using ProgressFn = std::function<void(const std::string&)>;

// Runs every cell (in parallel up to `workers`), then writes
//   metrics.csv, runs/<cell>.json, traces/<cell>.csv
// under cfg.output_dir. Output bytes depend only on the config.
std::vector<CellResult> run_experiment(const ExperimentConfig& cfg, std::size_t workers,
                                       const ProgressFn& progress = {});

std::string metrics_csv_header(std::size_t num_tasks);
std::string metrics_csv_row(const std::string& digest, const CellResult& r);
std::string trace_csv(const TrainTrace& trace);
std::string run_summary_json(const ExperimentConfig& cfg, const CellResult& r);

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

// Aggregation over seeds of every metrics.csv found under a results folder.
enum class ReportFormat { Text, Csv };

struct ReportCell {
    std::string digest;
    std::string method;
    std::size_t buffer = 0;
    std::string setting;
    std::size_t num_seeds = 0;
    MeanStd class_il;
    MeanStd task_il;
    MeanStd boundary_peak;
    std::string status = "ok";  // ok | partial | missing
};

std::vector<ReportCell> aggregate_results(const std::filesystem::path& results_dir);
std::string render_report(const std::vector<ReportCell>& cells, ReportFormat format);

}  // namespace auxcl
