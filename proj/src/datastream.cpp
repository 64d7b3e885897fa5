#include "auxcl/datastream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "auxcl/errors.hpp"

namespace auxcl {

std::span<const double> Dataset::input(std::size_t i) const {
    const std::size_t n = sample_size();
    return std::span<const double>(inputs).subspan(i * n, n);
}

void Dataset::push_back(std::span<const double> x, int label) {
    if (x.size() != sample_size())
        throw DimensionError("dataset sample of " + std::to_string(x.size()) +
                             " values, expected " + std::to_string(sample_size()));
    inputs.insert(inputs.end(), x.begin(), x.end());
    labels.push_back(label);
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
    const std::size_t n = sample_size();
    Shape shape{indices.size()};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    std::vector<double> buf(indices.size() * n);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        auto row = input(indices[k]);
        std::copy(row.begin(), row.end(), buf.begin() + static_cast<std::ptrdiff_t>(k * n));
    }
    return Tensor(std::move(shape), std::move(buf));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out{sample_shape, {}, {}};
    out.inputs.reserve(indices.size() * sample_size());
    out.labels.reserve(indices.size());
    for (auto i : indices) out.push_back(input(i), labels[i]);
    return out;
}

std::vector<int> Dataset::classes() const {
    std::set<int> s(labels.begin(), labels.end());
    return {s.begin(), s.end()};
}

std::map<int, std::size_t> Dataset::class_counts() const {
    std::map<int, std::size_t> m;
    for (int y : labels) ++m[y];
    return m;
}

std::uint64_t Dataset::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t bits) {
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (double v : inputs) mix(std::bit_cast<std::uint64_t>(v));
    for (int y : labels) mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(y)));
    return h;
}

Tensor stack_samples(const Shape& sample_shape, std::span<const std::vector<double>> rows) {
    const std::size_t n = shape_numel(sample_shape);
    Shape shape{rows.size()};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    std::vector<double> buf;
    buf.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.size() != n) throw DimensionError("stack_samples: row size mismatch");
        buf.insert(buf.end(), r.begin(), r.end());
    }
    return Tensor(std::move(shape), std::move(buf));
}

std::size_t TaskSequence::total_classes() const {
    std::size_t n = 0;
    for (const auto& t : tasks) n += t.classes.size();
    return n;
}

std::size_t TaskSequence::future_classes() const {
    return tasks.empty() ? 0 : total_classes() - tasks.front().classes.size();
}

std::vector<int> TaskSequence::all_classes() const {
    std::vector<int> out;
    for (const auto& t : tasks) out.insert(out.end(), t.classes.begin(), t.classes.end());
    return out;
}

namespace {

Dataset filter_by_classes(const Dataset& data, const std::vector<int>& classes) {
    std::set<int> keep(classes.begin(), classes.end());
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (keep.count(data.labels[i])) idx.push_back(i);
    return data.subset(idx);
}

}  // namespace

TaskSequence build_sequence(const Dataset& train, std::size_t classes_per_task,
                            std::size_t num_tasks, std::uint64_t seed, const Dataset* test) {
    if (classes_per_task == 0 || num_tasks == 0)
        throw ConfigError("task sequence needs classes_per_task > 0 and num_tasks > 0");
    std::vector<int> classes = train.classes();
    const std::size_t needed = classes_per_task * num_tasks;
    if (classes.size() < needed)
        throw ConfigError("task sequence needs " + std::to_string(needed) + " classes (" +
                          std::to_string(num_tasks) + " tasks x " +
                          std::to_string(classes_per_task) + "), dataset has " +
                          std::to_string(classes.size()));
    Rng rng(seed);
    std::shuffle(classes.begin(), classes.end(), rng);

    TaskSequence seq;
    for (std::size_t t = 0; t < num_tasks; ++t) {
        TaskSpec task;
        task.index = t;
        task.classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(t * classes_per_task),
                            classes.begin() +
                                static_cast<std::ptrdiff_t>((t + 1) * classes_per_task));
        task.train = filter_by_classes(train, task.classes);
        task.test = test ? filter_by_classes(*test, task.classes)
                         : Dataset{train.sample_shape, {}, {}};
        task.class_counts = task.train.class_counts();
        seq.tasks.push_back(std::move(task));
    }
    return seq;
}

AuxiliaryPool::AuxiliaryPool(Dataset data, std::map<int, std::size_t> active)
    : data_(std::move(data)), classes_(data_.classes()), active_(std::move(active)) {
    for (std::size_t i = 0; i < data_.size(); ++i) by_class_[data_.labels[i]].push_back(i);
    for (const auto& [cls, head] : active_)
        if (!by_class_.count(cls))
            throw ConfigError("aux class " + std::to_string(cls) + " has no samples");
}

std::optional<std::size_t> AuxiliaryPool::head_of(int aux_class) const {
    auto it = active_.find(aux_class);
    if (it == active_.end()) return std::nullopt;
    return it->second;
}

std::vector<int> AuxiliaryPool::active_by_head() const {
    std::vector<std::pair<std::size_t, int>> v;
    for (const auto& [cls, head] : active_) v.emplace_back(head, cls);
    std::sort(v.begin(), v.end());
    std::vector<int> out;
    for (const auto& [head, cls] : v) out.push_back(cls);
    return out;
}

const std::vector<std::size_t>& AuxiliaryPool::indices_of(int aux_class) const {
    auto it = by_class_.find(aux_class);
    if (it == by_class_.end())
        throw IndexError("aux class " + std::to_string(aux_class) + " not in pool");
    return it->second;
}

void AuxiliaryPool::retire(int aux_class) {
    if (active_.erase(aux_class) == 0)
        throw StateError("aux class " + std::to_string(aux_class) + " is not active");
}

AuxiliaryPool build_aux_pool(const Dataset& aux_data, const TaskSequence& sequence,
                             std::uint64_t seed) {
    std::vector<int> aux_classes = aux_data.classes();
    const std::size_t needed = sequence.future_classes();
    if (aux_classes.size() < needed)
        throw ConfigError("auxiliary class count: need " + std::to_string(needed) +
                          " aux classes, have " + std::to_string(aux_classes.size()));
    if (aux_data.sample_shape != (sequence.tasks.empty()
                                      ? aux_data.sample_shape
                                      : sequence.tasks.front().train.sample_shape))
        throw ConfigError("aux sample shape " + shape_str(aux_data.sample_shape) +
                          " differs from task sample shape");
    std::set<int> task_classes;
    for (int c : sequence.all_classes()) task_classes.insert(c);
    for (int c : aux_classes)
        if (task_classes.count(c))
            throw ConfigError("aux class id " + std::to_string(c) +
                              " overlaps the task stream; aux and task class ids must be disjoint");

    Rng rng(seed);
    std::shuffle(aux_classes.begin(), aux_classes.end(), rng);
    const std::size_t first = sequence.tasks.empty() ? 0 : sequence.tasks.front().classes.size();
    std::map<int, std::size_t> active;
    for (std::size_t k = 0; k < needed; ++k) active[aux_classes[k]] = first + k;
    return AuxiliaryPool(aux_data, std::move(active));
}

MixedBatchSampler::MixedBatchSampler(const TaskSpec& task, const AuxiliaryPool* aux,
                                     std::size_t task_bs, std::size_t aux_bs, Rng& task_rng,
                                     Rng& aux_rng)
    : task_(task), aux_(aux), task_bs_(task_bs), aux_bs_(aux_bs),
      task_rng_(task_rng), aux_rng_(aux_rng) {
    if (task_.train.empty())
        throw StateError("task " + std::to_string(task_.index) + " has no training samples");
    if (task_bs_ == 0) throw ConfigError("task batch size must be positive");
    order_.resize(task_.train.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::shuffle(order_.begin(), order_.end(), task_rng_);
}

std::size_t MixedBatchSampler::batches_per_epoch() const {
    return (task_.train.size() + task_bs_ - 1) / task_bs_;
}

std::size_t MixedBatchSampler::next_aux_index(int aux_class) {
    auto [it, fresh] = aux_cursors_.try_emplace(aux_class);
    auto& [order, pos] = it->second;
    if (fresh || pos == order.size()) {
        order = aux_->indices_of(aux_class);
        std::shuffle(order.begin(), order.end(), aux_rng_);
        pos = 0;
    }
    return order[pos++];
}

MixedBatch MixedBatchSampler::next() {
    MixedBatch b;
    for (std::size_t k = 0; k < task_bs_; ++k) {
        if (pos_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), task_rng_);
            pos_ = 0;
        }
        b.task_indices.push_back(order_[pos_++]);
        // An epoch ends the batch early so every epoch covers D_t exactly once.
        if (pos_ == order_.size()) break;
    }
    for (auto i : b.task_indices) b.task_labels.push_back(task_.train.labels[i]);
    b.task_inputs = task_.train.gather(b.task_indices);

    if (aux_ && aux_bs_ > 0 && !aux_->exhausted()) {
        const std::vector<int> classes = aux_->active_by_head();
        std::vector<std::size_t> rows;
        for (std::size_t k = 0; k < aux_bs_; ++k) {
            const int cls = classes[(round_robin_ + k) % classes.size()];
            rows.push_back(next_aux_index(cls));
            b.aux_heads.push_back(static_cast<int>(*aux_->head_of(cls)));
        }
        round_robin_ = (round_robin_ + aux_bs_) % classes.size();
        b.aux_inputs = aux_->data().gather(rows);
    }
    return b;
}

Tensor hflip(const Tensor& batch) {
    if (batch.rank() != 4) throw ConfigError("hflip needs [B,C,H,W] images");
    Tensor out = batch;
    const std::size_t W = batch.dim(3), rows = batch.size() / W;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t w = 0; w < W; ++w) out[r * W + w] = batch[r * W + (W - 1 - w)];
    return out;
}

Tensor crop_padded(const Tensor& batch, std::size_t pad, std::size_t top, std::size_t left) {
    if (batch.rank() != 4) throw ConfigError("crop needs [B,C,H,W] images");
    if (top > 2 * pad || left > 2 * pad) throw DimensionError("crop offset outside padded image");
    const std::size_t B = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    Tensor out(batch.shape(), 0.0);
    for (std::size_t bc = 0; bc < B * C; ++bc)
        for (std::size_t h = 0; h < H; ++h) {
            auto sh = static_cast<std::ptrdiff_t>(h + top) - static_cast<std::ptrdiff_t>(pad);
            if (sh < 0 || sh >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t w = 0; w < W; ++w) {
                auto sw = static_cast<std::ptrdiff_t>(w + left) - static_cast<std::ptrdiff_t>(pad);
                if (sw < 0 || sw >= static_cast<std::ptrdiff_t>(W)) continue;
                out[(bc * H + h) * W + w] = batch[(bc * H + sh) * W + sw];
            }
        }
    return out;
}

Tensor augment(const Tensor& batch, Rng& rng, std::size_t pad) {
    if (batch.rank() != 4)
        throw ConfigError("augmentation needs image-shaped input, got " + shape_str(batch.shape()));
    const std::size_t B = batch.dim(0);
    const std::size_t per = batch.size() / std::max<std::size_t>(B, 1);
    Shape one = batch.shape();
    one[0] = 1;
    Tensor out(batch.shape(), 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<double> v(batch.data().begin() + static_cast<std::ptrdiff_t>(b * per),
                              batch.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * per));
        Tensor s(one, std::move(v));
        const std::size_t top = uniform_index(rng, 2 * pad + 1);
        const std::size_t left = uniform_index(rng, 2 * pad + 1);
        const bool flip = std::bernoulli_distribution(0.5)(rng);
        s = crop_padded(s, pad, top, left);
        if (flip) s = hflip(s);
        std::copy(s.data().begin(), s.data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    return out;
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

constexpr std::size_t kPixels = 3 * 32 * 32;

Dataset parse_cifar(const std::filesystem::path& path, std::size_t label_bytes,
                    std::size_t label_pos, int num_labels) {
    const auto bytes = read_all(path);
    const std::size_t record = label_bytes + kPixels;
    if (bytes.empty() || bytes.size() % record != 0)
        throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                          " is not a whole number of " + std::to_string(record) + "-byte records");
    Dataset ds{{3, 32, 32}, {}, {}};
    const std::size_t n = bytes.size() / record;
    ds.inputs.resize(n * kPixels);
    ds.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const unsigned char* rec = bytes.data() + r * record;
        const int label = rec[label_pos];
        if (label >= num_labels)
            throw FormatError(path.string() + ": record " + std::to_string(r) + " has label " +
                              std::to_string(label) + ", valid range 0.." +
                              std::to_string(num_labels - 1));
        ds.labels[r] = label;
        for (std::size_t p = 0; p < kPixels; ++p)
            ds.inputs[r * kPixels + p] = rec[label_bytes + p] / 255.0;
    }
    return ds;
}

void append(Dataset& into, const Dataset& from) {
    into.inputs.insert(into.inputs.end(), from.inputs.begin(), from.inputs.end());
    into.labels.insert(into.labels.end(), from.labels.begin(), from.labels.end());
}

}  // namespace

Dataset load_cifar10_file(const std::filesystem::path& path) { return parse_cifar(path, 1, 0, 10); }

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir) {
    Dataset train{{3, 32, 32}, {}, {}};
    for (int i = 1; i <= 5; ++i)
        append(train, load_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin")));
    return {std::move(train), load_cifar10_file(dir / "test_batch.bin")};
}

Dataset load_cifar100_file(const std::filesystem::path& path, Cifar100Label label) {
    return label == Cifar100Label::Coarse ? parse_cifar(path, 2, 0, 20)
                                          : parse_cifar(path, 2, 1, 100);
}

Dataset make_synthetic(std::size_t num_classes, std::size_t samples_per_class,
                       const Shape& sample_shape, double separation, std::uint64_t seed,
                       double noise) {
    if (num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    const std::size_t dim = shape_numel(sample_shape);
    if (dim == 0) throw ConfigError("synthetic dataset needs a non-empty sample shape");
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::vector<double>> means(num_classes, std::vector<double>(dim));
    for (auto& m : means)
        for (auto& v : m) v = gauss(rng);
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < num_classes; ++a)
        for (std::size_t b = a + 1; b < num_classes; ++b) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double d = means[a][i] - means[b][i];
                d2 += d * d;
            }
            min_dist = std::min(min_dist, std::sqrt(d2));
        }
    const double factor = min_dist > 0.0 ? separation / min_dist : 0.0;
    for (auto& m : means)
        for (auto& v : m) v *= factor;

    Dataset ds{sample_shape, {}, {}};
    ds.inputs.reserve(num_classes * samples_per_class * dim);
    std::vector<double> x(dim);
    for (std::size_t c = 0; c < num_classes; ++c)
        for (std::size_t s = 0; s < samples_per_class; ++s) {
            for (std::size_t i = 0; i < dim; ++i) x[i] = means[c][i] + noise * gauss(rng);
            ds.push_back(x, static_cast<int>(c));
        }
    return ds;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t test_per_class) {
    std::map<int, std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < data.size(); ++i) rows[data.labels[i]].push_back(i);
    std::vector<std::size_t> train_idx, test_idx;
    for (const auto& [cls, idx] : rows) {
        if (idx.size() <= test_per_class)
            throw ConfigError("class " + std::to_string(cls) + " has " +
                              std::to_string(idx.size()) + " samples, cannot hold out " +
                              std::to_string(test_per_class));
        const std::size_t cut = idx.size() - test_per_class;
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
        test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {data.subset(train_idx), data.subset(test_idx)};
}

Dataset select_classes(const Dataset& data, std::span<const int> classes, int label_offset) {
    std::set<int> keep(classes.begin(), classes.end());
    Dataset out{data.sample_shape, {}, {}};
    for (std::size_t i = 0; i < data.size(); ++i)
        if (keep.count(data.labels[i])) out.push_back(data.input(i), data.labels[i] + label_offset);
    return out;
}

}  // namespace auxcl
