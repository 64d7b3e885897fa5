#include "auxcl/methods.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "auxcl/errors.hpp"

namespace auxcl {

std::string to_string(Method m) {
    switch (m) {
        case Method::Finetune: return "finetune";
        case Method::Er: return "er";
        case Method::Der: return "der";
        case Method::Derpp: return "derpp";
    }
    return "?";
}

Method method_from_string(const std::string& name) {
    if (name == "finetune" || name == "sgd") return Method::Finetune;
    if (name == "er") return Method::Er;
    if (name == "der") return Method::Der;
    if (name == "derpp") return Method::Derpp;
    throw ConfigError("unknown method '" + name + "' (expected finetune, er, der or derpp)");
}

void MethodConfig::validate() const {
    if (use_mah && !use_aux) throw ConfigError("use_mah requires use_aux");
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be non-negative");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (task_batch == 0) throw ConfigError("task batch size must be positive");
    if (method != Method::Finetune && replay_batch == 0)
        throw ConfigError("replay batch size must be positive for rehearsal methods");
}

TrainState::TrainState(std::uint64_t seed)
    : task_batch(make_rng(seed, seed_streams::kTaskBatch)),
      aux_batch(make_rng(seed, seed_streams::kAuxBatch)),
      reservoir(make_rng(seed, seed_streams::kReservoir)),
      replay(make_rng(seed, seed_streams::kReplay)),
      augment(make_rng(seed, seed_streams::kAugment)) {}

namespace {

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (b.empty()) return a;
    if (a.empty()) return b;
    Shape shape = a.shape();
    shape[0] += b.dim(0);
    std::vector<double> data(a.data().begin(), a.data().end());
    data.insert(data.end(), b.data().begin(), b.data().end());
    return Tensor(std::move(shape), std::move(data));
}

Tensor maybe_augment(const Tensor& x, bool on, Rng& rng) {
    return on && !x.empty() ? augment(x, rng) : x;
}

struct ReplayBatch {
    Tensor inputs;
    Tensor logits;
    std::vector<int> heads;
};

ReplayBatch draw_replay(const Reservoir& buffer, std::size_t k, const Shape& sample_shape,
                        const HeadMap& head_map, Rng& rng) {
    ReplayBatch out;
    const auto picks = buffer.sample(k, rng);
    if (picks.empty()) return out;
    std::vector<std::vector<double>> xs, zs;
    for (const BufferEntry* e : picks) {
        xs.push_back(e->input);
        zs.push_back(e->stored_logits);
        out.heads.push_back(static_cast<int>(head_map.require_head(e->label)));
    }
    out.inputs = stack_samples(sample_shape, xs);
    out.logits = stack_samples({head_map.num_heads()}, zs);
    return out;
}

void accumulate_head_grads(Classifier& model, std::vector<double>& mass) {
    const Linear& head = model.output_layer();
    if (!head.weight.has_grad()) return;
    const Tensor& gw = head.weight.grad();
    const std::size_t in = gw.dim(0), heads = gw.dim(1);
    for (std::size_t h = 0; h < heads; ++h) {
        double s = std::abs(head.bias.grad()[h]);
        for (std::size_t i = 0; i < in; ++i) s += std::abs(gw[i * heads + h]);
        mass[h] += s;
    }
}

}  // namespace

TrainTrace train_task(Classifier& model, const TaskSpec& task, const AuxiliaryPool* aux,
                      Reservoir& buffer, const HeadMap& head_map, const MethodConfig& cfg,
                      TrainState& state) {
    cfg.validate();
    for (int c : task.classes) head_map.require_head(c);
    if (cfg.augment && !task.train.is_image())
        throw ConfigError("augmentation requested for non-image input " +
                          shape_str(task.train.sample_shape));

    const AuxiliaryPool* live_aux = cfg.use_aux ? aux : nullptr;
    MixedBatchSampler sampler(task, live_aux, cfg.task_batch, cfg.aux_batch, state.task_batch,
                              state.aux_batch);
    const std::size_t iterations = sampler.batches_per_epoch() * cfg.epochs_per_task;
    const bool replay_mse = cfg.method == Method::Der || cfg.method == Method::Derpp;
    const bool replay_ce = cfg.method == Method::Er || cfg.method == Method::Derpp;
    auto params = model.parameters();

    TrainTrace trace;
    trace.boundaries.push_back(0);
    trace.head_grad_mass.assign(model.num_heads(), 0.0);

    for (std::size_t it = 0; it < iterations; ++it) {
        MixedBatch batch = sampler.next();

        std::vector<int> labels;
        for (int c : batch.task_labels) labels.push_back(static_cast<int>(head_map.require_head(c)));
        labels.insert(labels.end(), batch.aux_heads.begin(), batch.aux_heads.end());
        const Tensor x = concat_rows(maybe_augment(batch.task_inputs, cfg.augment, state.augment),
                                     maybe_augment(batch.aux_inputs, cfg.augment, state.augment));

        Variable logits = model.forward(x);
        Variable loss = ops::softmax_cross_entropy(logits, labels);
        TraceRow row;
        row.iteration = state.step;
        row.task = task.index;
        row.classification = loss.value()[0];

        if (replay_mse && !buffer.empty()) {
            ReplayBatch r = draw_replay(buffer, cfg.replay_batch, task.train.sample_shape,
                                        head_map, state.replay);
            Variable out = model.forward(maybe_augment(r.inputs, cfg.augment, state.augment));
            Variable term = ops::scale(ops::mse(out, Variable(r.logits)), cfg.alpha);
            row.replay_mse = term.value()[0];
            loss = ops::add(loss, term);
        }
        if (replay_ce && !buffer.empty()) {
            ReplayBatch r = draw_replay(buffer, cfg.replay_batch, task.train.sample_shape,
                                        head_map, state.replay);
            Variable out = model.forward(maybe_augment(r.inputs, cfg.augment, state.augment));
            const double weight = cfg.method == Method::Er ? 1.0 : cfg.beta;
            Variable term = ops::scale(ops::softmax_cross_entropy(out, r.heads), weight);
            row.replay_ce = term.value()[0];
            loss = ops::add(loss, term);
        }
        row.total = loss.value()[0];
        loss.backward();
        accumulate_head_grads(model, trace.head_grad_mass);

        if (cfg.method != Method::Finetune) {
            const Tensor& z = logits.value();
            const std::size_t heads = model.num_heads();
            for (std::size_t k = 0; k < batch.task_size(); ++k) {
                BufferEntry e;
                auto xin = task.train.input(batch.task_indices[k]);
                e.input.assign(xin.begin(), xin.end());
                e.label = batch.task_labels[k];
                e.stored_logits.assign(z.data().begin() + static_cast<std::ptrdiff_t>(k * heads),
                                       z.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * heads));
                e.insertion_step = state.step;
                buffer.insert(std::move(e), state.reservoir);
            }
        }

        sgd_step(params, cfg.lr);
        trace.rows.push_back(row);
        ++state.step;
    }
    return trace;
}

void pretrain_on_aux(Classifier& model, const Dataset& aux_data, std::size_t epochs, double lr,
                     std::size_t batch_size, Rng& rng) {
    if (epochs == 0) return;
    if (aux_data.empty()) throw ConfigError("pretraining needs a non-empty aux dataset");
    if (batch_size == 0) throw ConfigError("pretraining batch size must be positive");
    const std::vector<int> classes = aux_data.classes();
    std::map<int, int> target;
    for (std::size_t i = 0; i < classes.size(); ++i) target[classes[i]] = static_cast<int>(i);

    Linear temp_head = make_linear(model.feature_dim(), classes.size(), rng);
    std::vector<Parameter*> params = model.feature_parameters();
    params.push_back(&temp_head.weight);
    params.push_back(&temp_head.bias);

    std::vector<std::size_t> order(aux_data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            std::vector<int> labels;
            for (auto i : idx) labels.push_back(target[aux_data.labels[i]]);
            Variable loss =
                ops::softmax_cross_entropy(temp_head(model.features(aux_data.gather(idx))), labels);
            loss.backward();
            sgd_step(params, lr);
        }
    }
    model.reset_output_layer(rng);
}

RunResult run_sequence(const MethodConfig& cfg, const BackboneConfig& backbone,
                       const TaskSequence& sequence, const Dataset* aux_data,
                       std::size_t peak_window) {
    cfg.validate();
    if (sequence.num_tasks() == 0) throw ConfigError("empty task sequence");
    BackboneConfig bb = backbone;
    if (bb.num_heads == 0) bb.num_heads = sequence.total_classes();
    if (bb.num_heads != sequence.total_classes())
        throw ConfigError("backbone has " + std::to_string(bb.num_heads) + " heads but the sequence has " +
                          std::to_string(sequence.total_classes()) + " classes");
    if (bb.input_shape.empty()) bb.input_shape = sequence.tasks.front().train.sample_shape;
    if ((cfg.use_aux || cfg.pretrain_epochs > 0) && !aux_data)
        throw ConfigError("aux stream or pretraining requested without an aux dataset");

    std::optional<AuxiliaryPool> pool;
    if (cfg.use_aux)
        pool = build_aux_pool(*aux_data, sequence, derive_seed(cfg.seed, seed_streams::kAuxSelect));

    Classifier model(bb, derive_seed(cfg.seed, seed_streams::kInit));
    if (cfg.pretrain_epochs > 0) {
        Rng rng = make_rng(cfg.seed, seed_streams::kPretrain);
        pretrain_on_aux(model, *aux_data, cfg.pretrain_epochs, cfg.lr, cfg.task_batch, rng);
    }

    RunResult result;
    result.head_map = HeadMap::initial(bb.num_heads, sequence.tasks.front(),
                                       pool ? &*pool : nullptr);
    Reservoir buffer(cfg.method == Method::Finetune ? 0 : cfg.buffer_size);
    TrainState state(cfg.seed);

    for (std::size_t t = 0; t < sequence.num_tasks(); ++t) {
        const TaskSpec& task = sequence.tasks[t];
        if (t > 0) {
            std::vector<HeadAssignment> assigned;
            if (cfg.use_mah) {
                model.freeze();
                auto profiles = compute_profiles(model, task);
                model.unfreeze();
                assigned = assign_heads(profiles, result.head_map);
            } else {
                assigned = sequential_assign(task, result.head_map);
            }
            if (pool) retire_replaced(*pool, assigned);
            result.assignments.push_back(std::move(assigned));
        }
        result.aux_active_counts.push_back(pool ? pool->active_count() : 0);

        result.trace.append(train_task(model, task, pool ? &*pool : nullptr, buffer,
                                       result.head_map, cfg, state));

        result.eval.class_il.push_back(eval_class_il(model, sequence, result.head_map, t));
        std::vector<double> til;
        for (std::size_t j = 0; j <= t; ++j)
            til.push_back(eval_task_il(model, sequence.tasks[j], result.head_map));
        result.eval.task_il.push_back(std::move(til));
    }

    if (sequence.num_tasks() >= 2) result.eval.boundary_peaks = boundary_peaks(result.trace, peak_window);
    finalize_record(result.eval);
    for (const auto& e : buffer.entries()) result.buffer_labels.push_back(e.label);
    result.model_checksum = model.checksum();
    return result;
}

}  // namespace auxcl
