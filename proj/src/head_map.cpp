#include "auxcl/head_map.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

#include <json.hpp>

#include "auxcl/errors.hpp"

namespace auxcl {

HeadMap HeadMap::initial(std::size_t num_heads, const TaskSpec& first, const AuxiliaryPool* aux) {
    HeadMap map(num_heads);
    std::vector<std::size_t> heads(first.classes.size());
    std::iota(heads.begin(), heads.end(), std::size_t{0});
    map.add_task(first.classes, heads);
    if (aux)
        for (const auto& [cls, head] : aux->active()) map.set_aux(head, cls);
    return map;
}

void HeadMap::add_task(const std::vector<int>& classes, const std::vector<std::size_t>& heads) {
    if (classes.size() != heads.size())
        throw StateError("add_task: " + std::to_string(classes.size()) + " classes for " +
                         std::to_string(heads.size()) + " heads");
    std::set<std::size_t> distinct(heads.begin(), heads.end());
    if (distinct.size() != heads.size()) throw StateError("add_task: duplicate head index");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (heads[i] >= owners_.size())
            throw StateError("add_task: head " + std::to_string(heads[i]) + " out of range");
        if (owners_[heads[i]].kind == OwnerKind::Task)
            throw StateError("head " + std::to_string(heads[i]) + " already owned by class " +
                             std::to_string(owners_[heads[i]].id));
        if (head_of_class(classes[i]))
            throw StateError("class " + std::to_string(classes[i]) + " already mapped");
    }
    for (std::size_t i = 0; i < classes.size(); ++i)
        owners_[heads[i]] = HeadOwner{OwnerKind::Task, classes[i]};
    task_heads_.push_back(heads);
}

void HeadMap::set_aux(std::size_t head, int aux_class) {
    if (owners_.at(head).kind == OwnerKind::Task)
        throw StateError("cannot place aux class on task head " + std::to_string(head));
    owners_[head] = HeadOwner{OwnerKind::Aux, aux_class};
}

std::optional<std::size_t> HeadMap::head_of_class(int task_class) const {
    for (std::size_t h = 0; h < owners_.size(); ++h)
        if (owners_[h].kind == OwnerKind::Task && owners_[h].id == task_class) return h;
    return std::nullopt;
}

std::size_t HeadMap::require_head(int task_class) const {
    auto h = head_of_class(task_class);
    if (!h) throw StateError("class " + std::to_string(task_class) + " is not mapped to a head");
    return *h;
}

const std::vector<std::size_t>& HeadMap::task_heads(std::size_t task) const {
    if (task >= task_heads_.size())
        throw StateError("task " + std::to_string(task) + " has no heads yet");
    return task_heads_[task];
}

std::vector<std::size_t> HeadMap::aux_heads() const {
    std::vector<std::size_t> out;
    for (std::size_t h = 0; h < owners_.size(); ++h)
        if (owners_[h].kind == OwnerKind::Aux) out.push_back(h);
    return out;
}

std::size_t HeadMap::aux_count() const { return aux_heads().size(); }

HeadMask HeadMap::task_mask(std::size_t task) const {
    HeadMask m(owners_.size());
    for (auto h : task_heads(task)) m.set(h);
    return m;
}

HeadMask HeadMap::task_owned_mask() const {
    HeadMask m(owners_.size());
    for (std::size_t h = 0; h < owners_.size(); ++h)
        if (owners_[h].kind == OwnerKind::Task) m.set(h);
    return m;
}

HeadMask HeadMap::aux_mask() const {
    HeadMask m(owners_.size());
    for (auto h : aux_heads()) m.set(h);
    return m;
}

std::string HeadMap::to_json() const {
    nlohmann::ordered_json heads = nlohmann::ordered_json::array();
    for (std::size_t h = 0; h < owners_.size(); ++h) {
        nlohmann::ordered_json e;
        e["head"] = h;
        switch (owners_[h].kind) {
            case OwnerKind::Task: e["owner"] = "task"; e["class"] = owners_[h].id; break;
            case OwnerKind::Aux: e["owner"] = "aux"; e["class"] = owners_[h].id; break;
            case OwnerKind::Unassigned: e["owner"] = "unassigned"; break;
        }
        heads.push_back(std::move(e));
    }
    nlohmann::ordered_json out;
    out["heads"] = std::move(heads);
    out["tasks"] = task_heads_;
    return out.dump();
}

std::vector<ClassLogitProfile> compute_profiles(const Classifier& model, const TaskSpec& task,
                                                std::size_t batch_size) {
    if (!model.frozen()) throw StateError("compute_profiles: model must be frozen");
    const std::size_t heads = model.num_heads();
    std::vector<ClassLogitProfile> profiles;
    for (int c : task.classes) profiles.push_back({c, std::vector<double>(heads, 0.0), 0});

    const Dataset& data = task.train;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor logits = model.logits(data.gather(idx));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const int label = data.labels[idx[k]];
            auto it = std::find_if(profiles.begin(), profiles.end(),
                                   [label](const auto& p) { return p.class_id == label; });
            if (it == profiles.end()) continue;
            for (std::size_t h = 0; h < heads; ++h) it->mean_logits[h] += logits.at(k, h);
            ++it->count;
        }
    }
    for (auto& p : profiles) {
        if (p.count == 0)
            throw StateError("compute_profiles: class " + std::to_string(p.class_id) +
                             " has no samples in task " + std::to_string(task.index));
        for (auto& v : p.mean_logits) v /= static_cast<double>(p.count);
    }
    return profiles;
}

std::vector<HeadAssignment> assign_heads(const std::vector<ClassLogitProfile>& profiles,
                                         HeadMap& head_map) {
    const std::vector<std::size_t> aux = head_map.aux_heads();
    if (aux.size() < profiles.size())
        throw StateError("assign_heads: " + std::to_string(profiles.size()) +
                         " new classes but only " + std::to_string(aux.size()) + " aux heads");

    struct Candidate {
        double value;
        std::size_t head;
        int class_id;
        std::size_t profile;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < profiles.size(); ++p) {
        if (profiles[p].mean_logits.size() != head_map.num_heads())
            throw DimensionError("assign_heads: profile length does not match head count");
        for (auto h : aux)
            candidates.push_back({profiles[p].mean_logits[h], h, profiles[p].class_id, p});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.head != b.head) return a.head < b.head;
        return a.class_id < b.class_id;
    });

    std::vector<std::optional<std::size_t>> chosen(profiles.size());
    std::set<std::size_t> taken;
    std::size_t remaining = profiles.size();
    for (const auto& c : candidates) {
        if (remaining == 0) break;
        if (chosen[c.profile] || taken.count(c.head)) continue;
        chosen[c.profile] = c.head;
        taken.insert(c.head);
        --remaining;
    }

    std::vector<HeadAssignment> out;
    std::vector<int> classes;
    std::vector<std::size_t> heads;
    for (std::size_t p = 0; p < profiles.size(); ++p) {
        const std::size_t h = *chosen[p];
        out.push_back({profiles[p].class_id, h, head_map.owner(h).id});
        classes.push_back(profiles[p].class_id);
        heads.push_back(h);
    }
    head_map.add_task(classes, heads);
    return out;
}

std::vector<HeadAssignment> sequential_assign(const TaskSpec& task, HeadMap& head_map) {
    std::vector<std::size_t> free_heads;
    for (std::size_t h = 0; h < head_map.num_heads() && free_heads.size() < task.classes.size(); ++h)
        if (head_map.owner(h).kind != OwnerKind::Task) free_heads.push_back(h);
    if (free_heads.size() < task.classes.size())
        throw StateError("sequential_assign: not enough free heads for task " +
                         std::to_string(task.index));
    std::vector<HeadAssignment> out;
    for (std::size_t i = 0; i < task.classes.size(); ++i) {
        const HeadOwner& prev = head_map.owner(free_heads[i]);
        out.push_back({task.classes[i], free_heads[i],
                       prev.kind == OwnerKind::Aux ? std::optional<int>(prev.id) : std::nullopt});
    }
    head_map.add_task(task.classes, free_heads);
    return out;
}

void retire_replaced(AuxiliaryPool& pool, const std::vector<HeadAssignment>& assignments) {
    for (const auto& a : assignments)
        if (a.replaced_aux) pool.retire(*a.replaced_aux);
}

}  // namespace auxcl
