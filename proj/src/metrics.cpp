#include "auxcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "auxcl/errors.hpp"

namespace auxcl {

void TrainTrace::append(const TrainTrace& other) {
    const std::size_t offset = rows.size();
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    for (auto b : other.boundaries) boundaries.push_back(b + offset);
    if (head_grad_mass.size() < other.head_grad_mass.size())
        head_grad_mass.resize(other.head_grad_mass.size(), 0.0);
    for (std::size_t h = 0; h < other.head_grad_mass.size(); ++h)
        head_grad_mass[h] += other.head_grad_mass[h];
}

double masked_accuracy(const Tensor& logits, std::span<const std::size_t> target_heads,
                       const HeadMask& mask) {
    if (logits.rank() != 2 || logits.dim(0) != target_heads.size())
        throw DimensionError("masked_accuracy: logits/targets mismatch");
    if (target_heads.empty()) return 0.0;
    const auto pred = argmax_rows(masked_logits(logits, mask));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == target_heads[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

namespace {

double dataset_accuracy(const Classifier& model, const Dataset& data, const HeadMap& head_map,
                        const HeadMask& mask) {
    constexpr std::size_t kBatch = 256;
    if (data.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t start = 0; start < data.size(); start += kBatch) {
        const std::size_t end = std::min(data.size(), start + kBatch);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        std::vector<std::size_t> targets;
        for (auto i : idx) targets.push_back(head_map.require_head(data.labels[i]));
        const auto pred = argmax_rows(masked_logits(model.logits(data.gather(idx)), mask));
        for (std::size_t k = 0; k < pred.size(); ++k) hit += pred[k] == targets[k];
    }
    return static_cast<double>(hit) / static_cast<double>(data.size());
}

const Dataset& eval_split(const TaskSpec& task) {
    return task.test.empty() ? task.train : task.test;
}

}  // namespace

std::vector<double> eval_class_il(const Classifier& model, const TaskSequence& sequence,
                                  const HeadMap& head_map, std::size_t upto_task) {
    const HeadMask mask = head_map.task_owned_mask();
    std::vector<double> acc;
    for (std::size_t t = 0; t <= upto_task && t < sequence.num_tasks(); ++t)
        acc.push_back(dataset_accuracy(model, eval_split(sequence.tasks[t]), head_map, mask));
    return acc;
}

double eval_task_il(const Classifier& model, const TaskSpec& task, const HeadMap& head_map) {
    return dataset_accuracy(model, eval_split(task), head_map, head_map.task_mask(task.index));
}

std::vector<double> boundary_peaks(const TrainTrace& trace, std::size_t window) {
    if (trace.boundaries.size() < 2)
        throw StateError("boundary_peaks: trace covers fewer than two tasks");
    if (window == 0) throw ConfigError("boundary_peaks: window must be positive");
    std::vector<double> peaks;
    for (std::size_t k = 1; k < trace.boundaries.size(); ++k) {
        const std::size_t prev_start = trace.boundaries[k - 1];
        const std::size_t start = trace.boundaries[k];
        const std::size_t stop =
            k + 1 < trace.boundaries.size() ? trace.boundaries[k + 1] : trace.rows.size();
        if (start <= prev_start || stop <= start)
            throw StateError("boundary_peaks: empty task segment in trace");
        const std::size_t before_from = std::max(prev_start, start >= window ? start - window : 0);
        double mean_before = 0.0;
        for (std::size_t i = before_from; i < start; ++i) mean_before += trace.rows[i].total;
        mean_before /= static_cast<double>(start - before_from);
        double max_after = trace.rows[start].total;
        for (std::size_t i = start; i < std::min(stop, start + window); ++i)
            max_after = std::max(max_after, trace.rows[i].total);
        peaks.push_back(max_after - mean_before);
    }
    return peaks;
}

void finalize_record(EvalRecord& r) {
    auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    r.class_il_final = r.class_il.empty() ? 0.0 : mean(r.class_il.back());
    r.task_il_final = r.task_il.empty() ? 0.0 : mean(r.task_il.back());
    std::vector<double> diag;
    for (std::size_t t = 0; t < r.task_il.size(); ++t)
        if (t < r.task_il[t].size()) diag.push_back(r.task_il[t][t]);
    r.task_il_avg = mean(diag);
    r.mean_boundary_peak = mean(r.boundary_peaks);
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) return out;
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    const bool constant = std::all_of(values.begin(), values.end(),
                                      [&](double v) { return v == values.front(); });
    if (constant) {
        out.mean = values.front();
    } else {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.std = std::sqrt(ss / (n - 1.0));
    }
    return out;
}

}  // namespace auxcl
