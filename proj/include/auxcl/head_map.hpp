#pragma once

#include <optional>
#include <string>
#include <vector>

#include "auxcl/datastream.hpp"
#include "auxcl/model.hpp"

namespace auxcl {

enum class OwnerKind { Unassigned, Task, Aux };

struct HeadOwner {
    OwnerKind kind = OwnerKind::Unassigned;
    int id = -1;  // class id for Task and Aux owners

    friend bool operator==(const HeadOwner&, const HeadOwner&) = default;
};

// Which class owns each output head. Task ownership is permanent; aux
// placeholders are replaced as tasks arrive.
class HeadMap {
public:
    explicit HeadMap(std::size_t num_heads = 0) : owners_(num_heads) {}

    // First task on the lowest heads in class order; the pool's active aux
    // classes on their reserved heads (if a pool is given).
    static HeadMap initial(std::size_t num_heads, const TaskSpec& first,
                           const AuxiliaryPool* aux);

    std::size_t num_heads() const { return owners_.size(); }
    std::size_t num_tasks() const { return task_heads_.size(); }
    const HeadOwner& owner(std::size_t head) const { return owners_.at(head); }

    // Registers the heads of a new task, classes[i] -> heads[i].
    void add_task(const std::vector<int>& classes, const std::vector<std::size_t>& heads);
    void set_aux(std::size_t head, int aux_class);

    std::optional<std::size_t> head_of_class(int task_class) const;
    std::size_t require_head(int task_class) const;  // StateError when unmapped
    const std::vector<std::size_t>& task_heads(std::size_t task) const;
    std::vector<std::size_t> aux_heads() const;
    std::size_t aux_count() const;

    HeadMask task_mask(std::size_t task) const;
    HeadMask task_owned_mask() const;
    HeadMask aux_mask() const;

    // {"heads":[{"head":0,"owner":"task","class":3},...],"tasks":[[..],..]}
    std::string to_json() const;

    friend bool operator==(const HeadMap&, const HeadMap&) = default;

private:
    std::vector<HeadOwner> owners_;
    std::vector<std::vector<std::size_t>> task_heads_;
};

struct ClassLogitProfile {
    int class_id = 0;
    std::vector<double> mean_logits;  // one per head
    std::size_t count = 0;
};

// Mean pre-softmax logits per class over the task's training set, in the
// task's class order. The model must be frozen.
std::vector<ClassLogitProfile> compute_profiles(const Classifier& model, const TaskSpec& task,
                                                std::size_t batch_size = 256);

struct HeadAssignment {
    int class_id = 0;
    std::size_t head = 0;
    std::optional<int> replaced_aux;
};

// Most-activated-heads mapping for a new task. Only aux-owned heads compete.
// Pairs are committed greedily by descending mean logit (ties: lower head,
// then lower class id); a class whose best head is taken falls back to its
// best remaining aux head.
std::vector<HeadAssignment> assign_heads(const std::vector<ClassLogitProfile>& profiles,
                                         HeadMap& head_map);

// Ablation fallback: the new task's classes take the lowest-index heads not
// owned by any task, in ascending order.
std::vector<HeadAssignment> sequential_assign(const TaskSpec& task, HeadMap& head_map);

// Retires from the pool every aux class that replaced_aux names.
void retire_replaced(AuxiliaryPool& pool, const std::vector<HeadAssignment>& assignments);

}  // namespace auxcl
