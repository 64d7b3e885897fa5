#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "auxcl/buffer.hpp"
#include "auxcl/datastream.hpp"
#include "auxcl/head_map.hpp"
#include "auxcl/metrics.hpp"
#include "auxcl/model.hpp"
#include "auxcl/trace.hpp"

namespace auxcl {

enum class Method { Finetune, Er, Der, Derpp };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct MethodConfig {
    Method method = Method::Derpp;
    bool use_aux = false;
    bool use_mah = false;
    double alpha = 0.5;  // logit-matching weight
    double beta = 0.5;   // replay cross-entropy weight
    double lr = 0.03;
    std::size_t epochs_per_task = 5;
    std::size_t task_batch = 32;
    std::size_t aux_batch = 32;
    std::size_t replay_batch = 32;
    std::size_t buffer_size = 200;
    bool augment = false;
    std::size_t pretrain_epochs = 0;
    std::uint64_t seed = 0;

    void validate() const;  // ConfigError on violation
};

// Random streams and step counter that persist across the tasks of a run.
struct TrainState {
    explicit TrainState(std::uint64_t seed);

    Rng task_batch;
    Rng aux_batch;
    Rng reservoir;
    Rng replay;
    Rng augment;
    std::uint64_t step = 0;
};

// Trains one task: epochs_per_task passes over D_t, each iteration mixing the
// aux sub-dataset into the classification batch and adding the method's
// replay terms. Current-task samples are reservoir-inserted with the logits
// of that iteration's forward pass.
TrainTrace train_task(Classifier& model, const TaskSpec& task, const AuxiliaryPool* aux,
                      Reservoir& buffer, const HeadMap& head_map, const MethodConfig& cfg,
                      TrainState& state);

// Supervised training on every aux class through a temporary output layer,
// after which the model's own output layer is re-initialized.
void pretrain_on_aux(Classifier& model, const Dataset& aux_data, std::size_t epochs, double lr,
                     std::size_t batch_size, Rng& rng);

struct RunResult {
    EvalRecord eval;
    TrainTrace trace;
    HeadMap head_map;
    std::vector<std::size_t> aux_active_counts;  // active aux classes while training task t
    std::vector<std::vector<HeadAssignment>> assignments;  // per task t > 0
    std::vector<int> buffer_labels;
    std::uint64_t model_checksum = 0;
};

// Full continual run: head mapping at every boundary (MAH or sequential),
// per-task training, evaluation after every task.
RunResult run_sequence(const MethodConfig& cfg, const BackboneConfig& backbone,
                       const TaskSequence& sequence, const Dataset* aux_data,
                       std::size_t peak_window = 50);

}  // namespace auxcl
