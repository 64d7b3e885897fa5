#include "auxcl/experiment.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "auxcl/errors.hpp"

namespace auxcl {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Arms and cells

std::string Arm::name() const {
    std::string out;
    auto add = [&out](const char* part) {
        if (!out.empty()) out += '+';
        out += part;
    };
    if (use_aux) add("aux");
    if (use_mah) add("mah");
    if (pretrain) add("pretrain");
    return out.empty() ? "vanilla" : out;
}

Arm Arm::parse(const std::string& text) {
    Arm arm;
    if (text == "vanilla") return arm;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, '+')) {
        if (part == "aux") arm.use_aux = true;
        else if (part == "mah") arm.use_mah = true;
        else if (part == "pretrain") arm.pretrain = true;
        else throw ConfigError("unknown arm component '" + part + "' in '" + text +
                               "' (use vanilla or a '+'-joined subset of aux, mah, pretrain)");
    }
    if (arm.use_mah && !arm.use_aux)
        throw ConfigError("arm '" + text + "': mah requires aux");
    return arm;
}

std::string GridCell::id() const {
    return fmt::format("{}_{}_b{}_s{}", to_string(method), arm.name(), buffer, seed);
}

std::vector<GridCell> expand_grid(const ExperimentConfig& cfg) {
    std::vector<GridCell> cells;
    for (Method m : cfg.methods)
        for (std::size_t b : cfg.buffers)
            for (const Arm& a : cfg.arms)
                for (std::uint64_t s : cfg.seeds) cells.push_back({m, b, a, s});
    return cells;
}

// ---------------------------------------------------------------------------
// YAML parsing

namespace {

void check_keys(const YAML::Node& node, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!node.IsMap()) throw ConfigError("section '" + section + "' must be a mapping");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!ok.count(key))
            throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
    }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& section) {
    if (!node[key]) return;
    try {
        out = node[key].as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError("invalid value for '" + section + "." + key + "'");
    }
}

DataSpec parse_data(const YAML::Node& node, const std::string& section, int default_offset) {
    check_keys(node, section,
               {"kind", "num_classes", "train_per_class", "test_per_class", "shape", "separation",
                "noise", "seed", "path", "label", "classes", "label_offset", "max_per_class"});
    DataSpec d;
    d.label_offset = default_offset;
    read(node, "kind", d.kind, section);
    read(node, "num_classes", d.num_classes, section);
    read(node, "train_per_class", d.train_per_class, section);
    read(node, "test_per_class", d.test_per_class, section);
    read(node, "shape", d.sample_shape, section);
    read(node, "separation", d.separation, section);
    read(node, "noise", d.noise, section);
    read(node, "seed", d.seed, section);
    read(node, "path", d.path, section);
    read(node, "label", d.label, section);
    read(node, "classes", d.classes, section);
    read(node, "label_offset", d.label_offset, section);
    read(node, "max_per_class", d.max_per_class, section);
    if (d.kind != "synthetic" && d.kind != "cifar10" && d.kind != "cifar100")
        throw ConfigError(section + ".kind must be synthetic, cifar10 or cifar100");
    if (d.kind != "synthetic" && d.path.empty())
        throw ConfigError(section + ".path is required for kind " + d.kind);
    if (d.label != "coarse" && d.label != "fine")
        throw ConfigError(section + ".label must be coarse or fine");
    if (d.kind == "synthetic" && (d.sample_shape.empty() || shape_numel(d.sample_shape) == 0))
        throw ConfigError(section + ".shape must be non-empty");
    return d;
}

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config is not valid YAML: ") + e.what());
    }
    if (!root.IsMap()) throw ConfigError("config must be a YAML mapping");
    check_keys(root, "<root>",
               {"version", "name", "output_dir", "workers", "data", "aux", "sequence", "model",
                "training", "grid", "seeds"});

    ExperimentConfig cfg;
    read(root, "version", cfg.version, "<root>");
    if (cfg.version != kConfigVersion)
        throw ConfigError("unsupported config version " + std::to_string(cfg.version) +
                          " (this build reads version " + std::to_string(kConfigVersion) + ")");
    read(root, "name", cfg.name, "<root>");
    std::string out;
    read(root, "output_dir", out, "<root>");
    cfg.output_dir = out;
    read(root, "workers", cfg.workers, "<root>");

    if (!root["data"]) throw ConfigError("missing section 'data'");
    cfg.data = parse_data(root["data"], "data", 0);
    if (root["aux"]) cfg.aux = parse_data(root["aux"], "aux", 1000);

    if (auto s = root["sequence"]) {
        check_keys(s, "sequence", {"classes_per_task", "num_tasks"});
        read(s, "classes_per_task", cfg.classes_per_task, "sequence");
        read(s, "num_tasks", cfg.num_tasks, "sequence");
    }

    if (auto m = root["model"]) {
        check_keys(m, "model", {"kind", "hidden", "channels"});
        std::string kind = "mlp";
        read(m, "kind", kind, "model");
        cfg.backbone.kind = backbone_kind_from_string(kind);
        read(m, "hidden", cfg.backbone.hidden, "model");
        read(m, "channels", cfg.backbone.channels, "model");
    }

    if (auto t = root["training"]) {
        check_keys(t, "training",
                   {"lr", "epochs_per_task", "task_batch", "aux_batch", "replay_batch", "alpha",
                    "beta", "augment", "pretrain_epochs", "peak_window"});
        read(t, "lr", cfg.training.lr, "training");
        read(t, "epochs_per_task", cfg.training.epochs_per_task, "training");
        read(t, "task_batch", cfg.training.task_batch, "training");
        cfg.training.aux_batch = cfg.training.task_batch;
        cfg.training.replay_batch = cfg.training.task_batch;
        read(t, "aux_batch", cfg.training.aux_batch, "training");
        read(t, "replay_batch", cfg.training.replay_batch, "training");
        read(t, "alpha", cfg.training.alpha, "training");
        read(t, "beta", cfg.training.beta, "training");
        read(t, "augment", cfg.training.augment, "training");
        read(t, "pretrain_epochs", cfg.pretrain_epochs, "training");
        read(t, "peak_window", cfg.peak_window, "training");
    }

    if (auto g = root["grid"]) {
        check_keys(g, "grid", {"methods", "buffers", "arms"});
        if (g["methods"]) {
            cfg.methods.clear();
            for (const auto& v : g["methods"]) cfg.methods.push_back(method_from_string(v.as<std::string>()));
        }
        read(g, "buffers", cfg.buffers, "grid");
        if (g["arms"]) {
            cfg.arms.clear();
            for (const auto& v : g["arms"]) cfg.arms.push_back(Arm::parse(v.as<std::string>()));
        }
    }
    read(root, "seeds", cfg.seeds, "<root>");

    if (cfg.methods.empty() || cfg.buffers.empty() || cfg.arms.empty() || cfg.seeds.empty())
        throw ConfigError("grid needs at least one method, buffer, arm and seed");
    if (cfg.workers == 0) throw ConfigError("workers must be at least 1");
    if (cfg.peak_window == 0) throw ConfigError("training.peak_window must be positive");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

namespace {

ojson data_json(const DataSpec& d) {
    ojson j;
    j["kind"] = d.kind;
    if (d.kind == "synthetic") {
        j["num_classes"] = d.num_classes;
        j["train_per_class"] = d.train_per_class;
        j["test_per_class"] = d.test_per_class;
        j["shape"] = d.sample_shape;
        j["separation"] = d.separation;
        j["noise"] = d.noise;
        j["seed"] = d.seed;
    } else {
        j["path"] = d.path;
        j["label"] = d.label;
    }
    j["classes"] = d.classes;
    j["label_offset"] = d.label_offset;
    j["max_per_class"] = d.max_per_class;
    return j;
}

}  // namespace

std::string ExperimentConfig::canonical_json() const {
    ojson j;
    j["version"] = version;
    j["name"] = name;
    j["data"] = data_json(data);
    j["aux"] = aux ? data_json(*aux) : ojson();
    j["sequence"] = {{"classes_per_task", classes_per_task}, {"num_tasks", num_tasks}};
    j["model"] = {{"kind", to_string(backbone.kind)},
                  {"hidden", backbone.hidden},
                  {"channels", backbone.channels}};
    j["training"] = {{"lr", training.lr},
                     {"epochs_per_task", training.epochs_per_task},
                     {"task_batch", training.task_batch},
                     {"aux_batch", training.aux_batch},
                     {"replay_batch", training.replay_batch},
                     {"alpha", training.alpha},
                     {"beta", training.beta},
                     {"augment", training.augment},
                     {"pretrain_epochs", pretrain_epochs},
                     {"peak_window", peak_window}};
    std::vector<std::string> ms, as;
    for (Method m : methods) ms.push_back(to_string(m));
    for (const Arm& a : arms) as.push_back(a.name());
    j["grid"] = {{"methods", ms}, {"buffers", buffers}, {"arms", as}};
    j["seeds"] = seeds;
    return j.dump();
}

std::string ExperimentConfig::digest() const {
    return fmt::format("{:016x}", fnv1a64(canonical_json()));
}

// ---------------------------------------------------------------------------
// Data

namespace {

Dataset cap_per_class(const Dataset& data, std::size_t max_per_class) {
    if (max_per_class == 0) return data;
    std::map<int, std::size_t> seen;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (seen[data.labels[i]]++ < max_per_class) keep.push_back(i);
    return data.subset(keep);
}

Dataset finish(const Dataset& data, const DataSpec& spec) {
    Dataset out;
    if (spec.classes.empty()) {
        out = data;
        for (auto& y : out.labels) y += spec.label_offset;
    } else {
        out = select_classes(data, spec.classes, spec.label_offset);
    }
    return out;
}

std::pair<Dataset, Dataset> load_source(const DataSpec& spec) {
    if (spec.kind == "synthetic") {
        Dataset all = make_synthetic(spec.num_classes, spec.train_per_class + spec.test_per_class,
                                     spec.sample_shape, spec.separation, spec.seed, spec.noise);
        if (spec.test_per_class == 0) return {std::move(all), Dataset{spec.sample_shape, {}, {}}};
        return split_per_class(all, spec.test_per_class);
    }
    const std::filesystem::path dir(spec.path);
    if (spec.kind == "cifar10") return load_cifar10(dir);
    const auto label = spec.label == "fine" ? Cifar100Label::Fine : Cifar100Label::Coarse;
    Dataset test{{3, 32, 32}, {}, {}};
    if (std::filesystem::exists(dir / "test.bin")) test = load_cifar100_file(dir / "test.bin", label);
    return {load_cifar100_file(dir / "train.bin", label), std::move(test)};
}

}  // namespace

LoadedData load_data(const ExperimentConfig& cfg) {
    LoadedData out;
    auto [train, test] = load_source(cfg.data);
    out.train = cap_per_class(finish(train, cfg.data), cfg.data.max_per_class);
    out.test = finish(test, cfg.data);
    if (cfg.aux) {
        auto [aux_train, aux_test] = load_source(*cfg.aux);
        out.aux = cap_per_class(finish(aux_train, *cfg.aux), cfg.aux->max_per_class);
    }
    return out;
}

TaskSequence sequence_for_seed(const ExperimentConfig& cfg, const LoadedData& data,
                               std::uint64_t seed) {
    return build_sequence(data.train, cfg.classes_per_task, cfg.num_tasks,
                          derive_seed(seed, seed_streams::kSplit),
                          data.test.empty() ? nullptr : &data.test);
}

MethodConfig method_config_for(const ExperimentConfig& cfg, const GridCell& cell) {
    MethodConfig m = cfg.training;
    m.method = cell.method;
    m.buffer_size = cell.buffer;
    m.use_aux = cell.arm.use_aux;
    m.use_mah = cell.arm.use_mah;
    m.pretrain_epochs = cell.arm.pretrain ? cfg.pretrain_epochs : 0;
    m.seed = cell.seed;
    return m;
}

namespace {

BackboneConfig backbone_for(const ExperimentConfig& cfg, const LoadedData& data) {
    BackboneConfig bb = cfg.backbone;
    bb.input_shape = data.train.sample_shape;
    bb.num_heads = cfg.classes_per_task * cfg.num_tasks;
    return bb;
}

}  // namespace

std::size_t validate_experiment(const ExperimentConfig& cfg, const LoadedData& data) {
    const auto cells = expand_grid(cfg);
    const BackboneConfig bb = backbone_for(cfg, data);
    if (bb.kind == BackboneKind::SmallCnn && bb.input_shape.size() != 3)
        throw ConfigError("model.kind small_cnn needs image data, got sample shape " +
                          shape_str(bb.input_shape));
    if (cfg.training.augment && !data.train.is_image())
        throw ConfigError("training.augment needs image data, got sample shape " +
                          shape_str(data.train.sample_shape));

    std::map<std::uint64_t, TaskSequence> sequences;
    for (std::uint64_t s : cfg.seeds) sequences.emplace(s, sequence_for_seed(cfg, data, s));

    for (const GridCell& cell : cells) {
        const MethodConfig m = method_config_for(cfg, cell);
        try {
            m.validate();
            if ((m.use_aux || m.pretrain_epochs > 0) && !data.aux)
                throw ConfigError("arm '" + cell.arm.name() + "' needs an 'aux' section");
            if (m.use_aux) build_aux_pool(*data.aux, sequences.at(cell.seed),
                                          derive_seed(cell.seed, seed_streams::kAuxSelect));
        } catch (const ConfigError& e) {
            throw ConfigError("cell " + cell.id() + ": " + e.what());
        }
    }
    // Disjointness is a property of the data, check it even without aux arms.
    if (data.aux) {
        std::set<int> task(data.train.labels.begin(), data.train.labels.end());
        for (int c : data.aux->classes())
            if (task.count(c))
                throw ConfigError("aux class id " + std::to_string(c) +
                                  " overlaps the task stream; set aux.label_offset");
    }
    return cells.size();
}

// ---------------------------------------------------------------------------
// Output formatting

std::string metrics_csv_header(std::size_t num_tasks) {
    std::string h = "config_digest,method,buffer,setting,seed,class_il,task_il,task_il_final,"
                    "mean_boundary_peak";
    for (std::size_t t = 0; t < num_tasks; ++t) h += fmt::format(",acc_task{}", t + 1);
    return h + "\n";
}

std::string metrics_csv_row(const std::string& digest, const CellResult& r) {
    const EvalRecord& e = r.run.eval;
    std::string row = fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}", digest,
                                  to_string(r.cell.method), r.cell.buffer, r.cell.arm.name(),
                                  r.cell.seed, e.class_il_final, e.task_il_avg, e.task_il_final,
                                  e.mean_boundary_peak);
    if (!e.class_il.empty())
        for (double a : e.class_il.back()) row += fmt::format(",{:.6f}", a);
    return row + "\n";
}

std::string trace_csv(const TrainTrace& trace) {
    std::string out = "iteration,task,total,classification,replay_mse,replay_ce\n";
    for (const auto& r : trace.rows)
        out += fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.iteration, r.task + 1,
                           r.total, r.classification, r.replay_mse, r.replay_ce);
    return out;
}

std::string run_summary_json(const ExperimentConfig& cfg, const CellResult& r) {
    ojson j;
    j["config_digest"] = cfg.digest();
    j["experiment"] = cfg.name;
    j["cell"] = {{"id", r.cell.id()},
                 {"method", to_string(r.cell.method)},
                 {"buffer", r.cell.buffer},
                 {"setting", r.cell.arm.name()},
                 {"seed", r.cell.seed}};
    const EvalRecord& e = r.run.eval;
    j["metrics"] = {{"class_il", e.class_il_final},
                    {"task_il", e.task_il_avg},
                    {"task_il_final", e.task_il_final},
                    {"mean_boundary_peak", e.mean_boundary_peak},
                    {"boundary_peaks", e.boundary_peaks},
                    {"class_il_matrix", e.class_il},
                    {"task_il_matrix", e.task_il}};
    j["head_map"] = ojson::parse(r.run.head_map.to_json());
    j["aux_active_counts"] = r.run.aux_active_counts;
    ojson assigned = ojson::array();
    for (const auto& task : r.run.assignments) {
        ojson t = ojson::array();
        for (const auto& a : task) {
            ojson x = {{"class", a.class_id}, {"head", a.head}};
            x["replaced_aux"] = a.replaced_aux ? ojson(*a.replaced_aux) : ojson();
            t.push_back(std::move(x));
        }
        assigned.push_back(std::move(t));
    }
    j["assignments"] = std::move(assigned);
    std::vector<double> totals;
    for (const auto& row : r.run.trace.rows) totals.push_back(row.total);
    j["trace"] = {{"file", "traces/" + r.cell.id() + ".csv"},
                  {"boundaries", r.run.trace.boundaries},
                  {"total_loss", totals}};
    j["model_checksum"] = fmt::format("{:016x}", r.run.model_checksum);
    return j.dump(2) + "\n";
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env)
        return std::filesystem::path(env) / cfg.name;
    return std::filesystem::path("results") / cfg.name;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os << content;
    if (!os) throw Error("failed writing " + path.string());
}

}  // namespace

std::vector<CellResult> run_experiment(const ExperimentConfig& cfg, std::size_t workers,
                                       const ProgressFn& progress) {
    const LoadedData data = load_data(cfg);
    validate_experiment(cfg, data);
    const auto cells = expand_grid(cfg);
    const BackboneConfig bb = backbone_for(cfg, data);

    std::map<std::uint64_t, TaskSequence> sequences;
    for (std::uint64_t s : cfg.seeds) sequences.emplace(s, sequence_for_seed(cfg, data, s));

    std::vector<CellResult> results(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                const MethodConfig m = method_config_for(cfg, cells[i]);
                results[i] = CellResult{cells[i],
                                        run_sequence(m, bb, sequences.at(cells[i].seed),
                                                     data.aux ? &*data.aux : nullptr,
                                                     cfg.peak_window)};
                if (progress) {
                    std::lock_guard lock(log_mutex);
                    progress(fmt::format("[{}/{}] {} class_il={:.4f} task_il={:.4f}", i + 1,
                                         cells.size(), cells[i].id(),
                                         results[i].run.eval.class_il_final,
                                         results[i].run.eval.task_il_avg));
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(workers, cells.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    const auto out = resolve_output_dir(cfg);
    std::filesystem::create_directories(out / "runs");
    std::filesystem::create_directories(out / "traces");
    const std::string digest = cfg.digest();
    std::string csv = metrics_csv_header(cfg.num_tasks);
    for (const auto& r : results) {
        csv += metrics_csv_row(digest, r);
        write_file(out / "runs" / (r.cell.id() + ".json"), run_summary_json(cfg, r));
        write_file(out / "traces" / (r.cell.id() + ".csv"), trace_csv(r.run.trace));
    }
    write_file(out / "metrics.csv", csv);
    return results;
}

}  // namespace auxcl
