#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "auxcl/rng.hpp"

namespace auxcl {

struct BufferEntry {
    std::vector<double> input;          // pre-augmentation sample
    int label = 0;                      // global task class id, never aux
    std::vector<double> stored_logits;  // one per head, recorded at insertion
    std::uint64_t insertion_step = 0;
};

// Fixed-capacity episodic memory filled by reservoir sampling.
class Reservoir {
public:
    explicit Reservoir(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::uint64_t seen() const { return seen_; }
    const std::vector<BufferEntry>& entries() const { return entries_; }

    // The i-th offered item (1-based) is kept unconditionally while the buffer
    // has room, otherwise it overwrites a uniform slot with probability
    // capacity / i.
    void insert(BufferEntry entry, Rng& rng);

    // k draws with replacement; empty result when the buffer is empty.
    std::vector<const BufferEntry*> sample(std::size_t k, Rng& rng) const;

    // One line per entry: label;insertion_step;logit0,logit1,...
    void dump(std::ostream& os) const;

private:
    std::size_t capacity_;
    std::uint64_t seen_ = 0;
    std::vector<BufferEntry> entries_;
};

}  // namespace auxcl
