#pragma once

#include <vector>

#include "auxcl/datastream.hpp"
#include "auxcl/head_map.hpp"
#include "auxcl/model.hpp"
#include "auxcl/trace.hpp"

namespace auxcl {

struct EvalRecord {
    // matrix[i][j]: accuracy on task j after training task i (j <= i).
    std::vector<std::vector<double>> class_il;
    std::vector<std::vector<double>> task_il;
    double class_il_final = 0.0;  // mean of the last class_il row
    double task_il_avg = 0.0;     // mean over t of task_il[t][t]
    double task_il_final = 0.0;   // mean of the last task_il row (final model, task masks)
    std::vector<double> boundary_peaks;
    double mean_boundary_peak = 0.0;
};

// Fraction of rows whose masked argmax equals the target head.
double masked_accuracy(const Tensor& logits, std::span<const std::size_t> target_heads,
                       const HeadMask& mask);

// Per-task accuracy for tasks 0..upto_task, predicting among every
// task-owned head of head_map. Uses the test split when present.
std::vector<double> eval_class_il(const Classifier& model, const TaskSequence& sequence,
                                  const HeadMap& head_map, std::size_t upto_task);

// Accuracy on one task with prediction restricted to that task's heads.
double eval_task_il(const Classifier& model, const TaskSpec& task, const HeadMap& head_map);

// For each task boundary: max loss over the first `window` iterations of the
// new task minus the mean loss over the last `window` iterations of the
// previous task.
std::vector<double> boundary_peaks(const TrainTrace& trace, std::size_t window = 50);

void finalize_record(EvalRecord& record);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

}  // namespace auxcl
