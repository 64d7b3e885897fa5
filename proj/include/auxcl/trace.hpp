#pragma once

#include <cstdint>
#include <vector>

namespace auxcl {

struct TraceRow {
    std::uint64_t iteration = 0;
    std::size_t task = 0;
    double total = 0.0;
    double classification = 0.0;  // CE over task (+ aux) batch
    double replay_mse = 0.0;      // alpha-weighted logit matching
    double replay_ce = 0.0;       // beta-weighted (or ER) replay cross-entropy
};

struct TrainTrace {
    std::vector<TraceRow> rows;
    std::vector<std::size_t> boundaries;  // row index where each task starts
    // Summed |dL/d head| (output weights column + bias) over all iterations.
    std::vector<double> head_grad_mass;

    void append(const TrainTrace& other);
    std::size_t num_tasks() const { return boundaries.size(); }
};

}  // namespace auxcl
