#include "auxcl/buffer.hpp"

#include <iomanip>

namespace auxcl {

void Reservoir::insert(BufferEntry entry, Rng& rng) {
    ++seen_;
    if (entries_.size() < capacity_) {
        entries_.push_back(std::move(entry));
        return;
    }
    if (capacity_ == 0) return;
    const auto j = std::uniform_int_distribution<std::uint64_t>(0, seen_ - 1)(rng);
    if (j < capacity_) entries_[j] = std::move(entry);
}

std::vector<const BufferEntry*> Reservoir::sample(std::size_t k, Rng& rng) const {
    std::vector<const BufferEntry*> out;
    if (entries_.empty()) return out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(&entries_[uniform_index(rng, entries_.size())]);
    return out;
}

void Reservoir::dump(std::ostream& os) const {
    const auto flags = os.flags();
    os << std::setprecision(17);
    for (const auto& e : entries_) {
        os << e.label << ';' << e.insertion_step << ';';
        for (std::size_t i = 0; i < e.stored_logits.size(); ++i)
            os << (i ? "," : "") << e.stored_logits[i];
        os << '\n';
    }
    os.flags(flags);
}

}  // namespace auxcl
