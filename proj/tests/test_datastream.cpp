#include <gtest/gtest.h>

#include <set>

#include "auxcl/datastream.hpp"
#include "auxcl/errors.hpp"
#include "auxcl/head_map.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace auxcl;

namespace {

Dataset blobs(std::size_t classes, std::size_t per_class = 6, int offset = 0, std::uint64_t seed = 1) {
    Dataset d = make_synthetic(classes, per_class, {4}, 3.0, seed);
    for (auto& y : d.labels) y += offset;
    return d;
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("auxcl_ds_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Sequence, TenClassesFiveBinaryTasks) {
    const auto seq = build_sequence(blobs(10), 2, 5, 42);
    ASSERT_EQ(seq.num_tasks(), 5u);
    std::set<int> all;
    for (const auto& t : seq.tasks) {
        EXPECT_EQ(t.classes.size(), 2u);
        for (int c : t.classes) EXPECT_TRUE(all.insert(c).second) << "class repeated: " << c;
        for (int y : t.train.labels)
            EXPECT_TRUE(std::count(t.classes.begin(), t.classes.end(), y));
        for (int c : t.classes) EXPECT_EQ(t.class_counts.at(c), 6u);
    }
    EXPECT_EQ(all.size(), 10u);
    EXPECT_EQ(seq.total_classes(), 10u);
    EXPECT_EQ(seq.future_classes(), 8u);
}

TEST(Sequence, TwentyClassesFourPerTask) {
    const auto seq = build_sequence(blobs(20), 4, 5, 1);
    EXPECT_EQ(seq.total_classes(), 20u);
    EXPECT_EQ(seq.future_classes(), 16u);
}

TEST(Sequence, DeterministicAndSeedSensitive) {
    const Dataset d = blobs(10);
    const auto a = build_sequence(d, 2, 5, 7), b = build_sequence(d, 2, 5, 7);
    for (std::size_t t = 0; t < 5; ++t) {
        EXPECT_EQ(a.tasks[t].classes, b.tasks[t].classes);
        EXPECT_EQ(a.tasks[t].train.checksum(), b.tasks[t].train.checksum());
    }
    bool differs = false;
    for (std::uint64_t s = 8; s < 20 && !differs; ++s)
        differs = build_sequence(d, 2, 5, s).tasks[0].classes != a.tasks[0].classes;
    EXPECT_TRUE(differs);
}

TEST(Sequence, TooFewClassesRejected) {
    EXPECT_THROW(build_sequence(blobs(9), 2, 5, 1), ConfigError);
}

TEST(Sequence, TestSplitFollowsClasses) {
    const auto [train, test] = split_per_class(blobs(10, 10), 3);
    EXPECT_EQ(train.size(), 70u);
    EXPECT_EQ(test.size(), 30u);
    const auto seq = build_sequence(train, 2, 5, 3, &test);
    for (const auto& t : seq.tasks) {
        EXPECT_EQ(t.test.size(), 6u);
        for (int y : t.test.labels) EXPECT_TRUE(std::count(t.classes.begin(), t.classes.end(), y));
    }
}

TEST(AuxPool, TenAuxClassesSelectsEightOnFutureHeads) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    const auto pool = build_aux_pool(blobs(10, 6, 100), seq, 5);
    EXPECT_EQ(pool.active_count(), 8u);
    std::set<std::size_t> heads;
    for (const auto& [cls, head] : pool.active()) {
        EXPECT_GE(cls, 100);
        heads.insert(head);
    }
    EXPECT_EQ(heads, (std::set<std::size_t>{2, 3, 4, 5, 6, 7, 8, 9}));
}

TEST(AuxPool, TooFewAuxClassesRejectedWithCounts) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    try {
        build_aux_pool(blobs(7, 6, 100), seq, 5);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("need 8 aux classes, have 7"), std::string::npos) << e.what();
    }
}

TEST(AuxPool, TwelveAuxClassesLeavesFourUnused) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    const auto pool = build_aux_pool(blobs(12, 6, 100), seq, 5);
    EXPECT_EQ(pool.active_count(), 8u);
    EXPECT_EQ(pool.classes().size(), 12u);
}

TEST(AuxPool, SelectionIsUniformAcrossSeeds) {
    // every aux class should be selected about 8/12 of the time
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    const Dataset aux = blobs(12, 2, 100);
    std::map<int, double> hits;
    const int trials = 3000;
    for (int s = 0; s < trials; ++s) {
        const auto pool = build_aux_pool(aux, seq, static_cast<std::uint64_t>(s));
        for (const auto& [cls, head] : pool.active()) hits[cls] += 1;
    }
    std::vector<double> obs;
    for (auto& [c, h] : hits) obs.push_back(h);
    ASSERT_EQ(obs.size(), 12u);
    // Conditional on 8 picks per trial the counts are exchangeable; a
    // goodness-of-fit against equal shares is a fair smoke check.
    EXPECT_GT(oracle::chi_square_uniform(obs, trials * 8.0 / 12.0).p_value, 0.001);
}

TEST(AuxPool, OverlappingClassIdsRejected) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    EXPECT_THROW(build_aux_pool(blobs(10), seq, 5), ConfigError);
}

TEST(AuxPool, ShapeMismatchRejected) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    Dataset aux = make_synthetic(10, 3, {5}, 3.0, 1);
    for (auto& y : aux.labels) y += 100;
    EXPECT_THROW(build_aux_pool(aux, seq, 5), ConfigError);
}

TEST(MixedBatch, AuxBatchZeroIsPureTaskBatch) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    const auto pool = build_aux_pool(blobs(10, 6, 100), seq, 5);
    Rng a(1), b(2);
    MixedBatchSampler s(seq.tasks[0], &pool, 4, 0, a, b);
    const auto batch = s.next();
    EXPECT_EQ(batch.task_size(), 4u);
    EXPECT_EQ(batch.aux_size(), 0u);
    EXPECT_TRUE(batch.aux_inputs.empty());
}

TEST(MixedBatch, ExhaustedPoolGivesEmptyAuxSide) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    auto pool = build_aux_pool(blobs(10, 6, 100), seq, 5);
    for (int c : pool.active_by_head()) pool.retire(c);
    ASSERT_TRUE(pool.exhausted());
    Rng a(1), b(2);
    MixedBatchSampler s(seq.tasks[4], &pool, 4, 8, a, b);
    EXPECT_EQ(s.next().aux_size(), 0u);
}

TEST(MixedBatch, EpochCoversTaskOnceAndAuxIsBalanced) {
    const auto seq = build_sequence(blobs(10, 10), 2, 5, 1);
    const auto pool = build_aux_pool(blobs(10, 6, 100), seq, 5);
    Rng a(1), b(2);
    MixedBatchSampler s(seq.tasks[0], &pool, 3, 8, a, b);
    EXPECT_EQ(s.batches_per_epoch(), 7u);  // 20 samples, batch 3
    std::multiset<std::size_t> seen;
    std::map<int, int> aux_per_head;
    for (std::size_t i = 0; i < s.batches_per_epoch(); ++i) {
        const auto batch = s.next();
        seen.insert(batch.task_indices.begin(), batch.task_indices.end());
        for (int h : batch.aux_heads) ++aux_per_head[h];
    }
    EXPECT_EQ(seen.size(), 20u);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 20u);
    for (const auto& [h, n] : aux_per_head) EXPECT_EQ(n, 7);  // 7 batches x 8 draws over 8 heads
}

TEST(MixedBatch, SameSeedsSameBatches) {
    const auto seq = build_sequence(blobs(10), 2, 5, 1);
    const auto pool = build_aux_pool(blobs(10, 6, 100), seq, 5);
    Rng a1(1), b1(2), a2(1), b2(2);
    MixedBatchSampler s1(seq.tasks[1], &pool, 5, 5, a1, b1), s2(seq.tasks[1], &pool, 5, 5, a2, b2);
    for (int i = 0; i < 10; ++i) {
        const auto x = s1.next(), y = s2.next();
        EXPECT_EQ(x.task_indices, y.task_indices);
        EXPECT_EQ(x.aux_inputs, y.aux_inputs);
        EXPECT_EQ(x.aux_heads, y.aux_heads);
    }
}

TEST(MixedBatch, AuxLabelsAlwaysOnAuxOwnedHeadsOverSimulatedRun) {
    // Walk a full 5-task run with sequential mapping and check every aux label
    // against an independent owner table.
    const auto seq = build_sequence(blobs(10), 2, 5, 3);
    auto pool = build_aux_pool(blobs(10, 6, 100), seq, 9);
    HeadMap map = HeadMap::initial(10, seq.tasks[0], &pool);
    std::map<std::size_t, std::string> owner;  // oracle: head -> "task" | "aux"
    for (std::size_t h = 0; h < 10; ++h) owner[h] = h < 2 ? "task" : "aux";
    for (std::size_t t = 0; t < 5; ++t) {
        if (t > 0) {
            const auto assigned = sequential_assign(seq.tasks[t], map);
            retire_replaced(pool, assigned);
            for (const auto& a : assigned) owner[a.head] = "task";
        }
        Rng a(t), b(t + 100);
        MixedBatchSampler s(seq.tasks[t], &pool, 4, 6, a, b);
        for (int i = 0; i < 12; ++i)
            for (int h : s.next().aux_heads) {
                EXPECT_EQ(owner[static_cast<std::size_t>(h)], "aux") << "task " << t << " head " << h;
                EXPECT_EQ(map.owner(static_cast<std::size_t>(h)).kind, OwnerKind::Aux);
            }
    }
    EXPECT_TRUE(pool.exhausted());
}

TEST(Augment, FlipIsInvolutionAndPermutation) {
    std::mt19937_64 rng(1);
    const Tensor x = oracle::random_tensor({2, 3, 5, 6}, rng);
    EXPECT_EQ(hflip(hflip(x)), x);
    auto a = std::vector<double>(x.data().begin(), x.data().end());
    const Tensor f = hflip(x);
    auto b = std::vector<double>(f.data().begin(), f.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    EXPECT_NE(f, x);
}

TEST(Augment, CropIdentityCases) {
    std::mt19937_64 rng(2);
    const Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng);
    EXPECT_EQ(crop_padded(x, 0, 0, 0), x);
    EXPECT_EQ(crop_padded(x, 4, 4, 4), x);
    const Tensor shifted = crop_padded(x, 1, 0, 1);  // moves the image down one row
    EXPECT_EQ(shifted[0 * 4 + 0], 0.0);
    EXPECT_EQ(shifted[1 * 4 + 2], x[0 * 4 + 2]);
}

TEST(Augment, RejectsFlatInputAndKeepsShape) {
    Rng rng(3);
    EXPECT_THROW(augment(Tensor({2, 8}, 1.0), rng), ConfigError);
    const Tensor img({3, 3, 8, 8}, 0.5);
    EXPECT_EQ(augment(img, rng).shape(), img.shape());
}

TEST(Synthetic, SeparationAndDeterminism) {
    const auto a = make_synthetic(5, 10, {16}, 10.0, 4), b = make_synthetic(5, 10, {16}, 10.0, 4);
    EXPECT_EQ(a.checksum(), b.checksum());
    EXPECT_NE(a.checksum(), make_synthetic(5, 10, {16}, 10.0, 5).checksum());
    EXPECT_EQ(a.size(), 50u);
    EXPECT_EQ(a.class_counts().at(3), 10u);
}

namespace {

// Softmax regression trained by plain gradient descent: the linear-probe oracle.
double linear_probe_train_accuracy(const Dataset& d, std::size_t classes) {
    const std::size_t n = d.size(), dim = d.sample_size();
    Parameter w(Tensor({dim, classes}, 0.0)), b(Tensor({classes}, 0.0));
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const Tensor x = d.gather(all);
    for (int it = 0; it < 300; ++it) {
        ops::softmax_cross_entropy(ops::add_row_bias(ops::matmul(Variable(x), w.var()), b.var()),
                                   d.labels)
            .backward();
        Parameter* ps[] = {&w, &b};
        sgd_step(ps, 0.1);
    }
    const auto pred = argmax_rows(ops::add_row_bias(ops::matmul(Variable(x), w.var()), b.var()).value());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == static_cast<std::size_t>(d.labels[i]);
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

TEST(Synthetic, SeparatedBlobsAreLinearlySeparable) {
    EXPECT_GT(linear_probe_train_accuracy(make_synthetic(10, 50, {16}, 10.0, 1), 10), 0.95);
}

TEST(Synthetic, ZeroSeparationNearChance) {
    EXPECT_LT(linear_probe_train_accuracy(make_synthetic(10, 50, {16}, 0.0, 1), 10), 0.45);
}

TEST(Cifar10, RecordArithmeticAndLayout) {
    const auto path = scratch("c10.bin");
    fixture::write_cifar10(path, 3, 1);
    const Dataset d = load_cifar10_file(path);
    EXPECT_EQ(d.size(), 30u);
    EXPECT_EQ(d.sample_shape, (Shape{3, 32, 32}));
    std::ifstream is(path, std::ios::binary);
    const int first = is.get();
    EXPECT_EQ(d.labels[0], first);
    std::vector<unsigned char> px(3072);
    is.read(reinterpret_cast<char*>(px.data()), 3072);
    for (std::size_t i : {0u, 1023u, 1024u, 3071u}) EXPECT_DOUBLE_EQ(d.input(0)[i], px[i] / 255.0);
    std::filesystem::remove(path);
}

TEST(Cifar10, BadLabelAndTruncationRejected) {
    const auto path = scratch("c10bad.bin");
    fixture::write_cifar10(path, 1, 1, 255);
    EXPECT_THROW(load_cifar10_file(path), FormatError);
    fixture::write_cifar10(path, 1, 1);
    std::filesystem::resize_file(path, 3073 * 10 - 5);
    EXPECT_THROW(load_cifar10_file(path), FormatError);
    EXPECT_THROW(load_cifar10_file(scratch("missing.bin")), FormatError);
    std::filesystem::remove(path);
}

TEST(Cifar10, DirectoryLoad) {
    const auto dir = scratch("c10dir");
    fixture::write_cifar10_dir(dir, 2, 1, 5);
    const auto [train, test] = load_cifar10(dir);
    EXPECT_EQ(train.size(), 100u);
    EXPECT_EQ(test.size(), 10u);
    std::filesystem::remove_all(dir);
}

TEST(Cifar100, CoarseAndFineLabels) {
    const auto path = scratch("c100.bin");
    fixture::write_cifar100(path, 2, 1);
    const Dataset coarse = load_cifar100_file(path, Cifar100Label::Coarse);
    const Dataset fine = load_cifar100_file(path, Cifar100Label::Fine);
    EXPECT_EQ(coarse.size(), 40u);
    EXPECT_EQ(coarse.classes().size(), 20u);
    EXPECT_EQ(fine.labels[1], 5);
    EXPECT_EQ(coarse.labels[1], 1);
    std::filesystem::remove(path);
}

TEST(SelectClasses, SubsetAndOffset) {
    const Dataset d = blobs(6, 3);
    const std::vector<int> keep{1, 4};
    const Dataset s = select_classes(d, keep, 1000);
    EXPECT_EQ(s.size(), 6u);
    EXPECT_EQ(s.classes(), (std::vector<int>{1001, 1004}));
}
