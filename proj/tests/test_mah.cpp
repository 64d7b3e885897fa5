#include <gtest/gtest.h>

#include <json.hpp>

#include "auxcl/errors.hpp"
#include "auxcl/head_map.hpp"
#include "support/oracles.hpp"

using namespace auxcl;

namespace {

ClassLogitProfile profile(int cls, std::vector<double> logits) {
    return {cls, std::move(logits), 1};
}

// Heads in `task` owned by classes 0.., heads in `aux` by aux classes 100+head.
HeadMap make_map(std::size_t heads, const std::vector<std::size_t>& task,
                 const std::vector<std::size_t>& aux) {
    HeadMap m(heads);
    std::vector<int> classes;
    for (std::size_t i = 0; i < task.size(); ++i) classes.push_back(static_cast<int>(i));
    m.add_task(classes, task);
    for (auto h : aux) m.set_aux(h, 100 + static_cast<int>(h));
    return m;
}

}  // namespace

TEST(Mah, SingleArgmaxOverAuxHeads) {
    HeadMap m = make_map(5, {0, 1}, {2, 3, 4});
    // task-owned heads carry the largest values but must be ignored
    const auto out = assign_heads({profile(7, {50, 40, 1, 3, 2})}, m);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].head, 3u);
    EXPECT_EQ(out[0].replaced_aux, 103);
    EXPECT_EQ(m.owner(3), (HeadOwner{OwnerKind::Task, 7}));
    EXPECT_EQ(m.aux_count(), 2u);
}

TEST(Mah, CollisionLargestValueWins) {
    HeadMap m = make_map(8, {0, 1}, {2, 3, 4, 5, 6, 7});
    std::vector<double> a(8, 0.0), b(8, 0.0);
    a[5] = 9.0;
    b[5] = 7.0;
    b[6] = 6.0;  // loser's second-best aux head
    a[6] = 1.0;
    const auto out = assign_heads({profile(20, a), profile(21, b)}, m);
    EXPECT_EQ(out[0].class_id, 20);
    EXPECT_EQ(out[0].head, 5u);
    EXPECT_EQ(out[1].class_id, 21);
    EXPECT_EQ(out[1].head, 6u);
}

TEST(Mah, CollisionResolvedRegardlessOfProfileOrder) {
    HeadMap m = make_map(8, {0, 1}, {2, 3, 4, 5, 6, 7});
    std::vector<double> a(8, 0.0), b(8, 0.0);
    a[5] = 9.0;
    b[5] = 7.0;
    b[6] = 6.0;
    const auto out = assign_heads({profile(21, b), profile(20, a)}, m);
    EXPECT_EQ(out[0].head, 6u);
    EXPECT_EQ(out[1].head, 5u);
}

TEST(Mah, TooFewAuxHeadsIsStateError) {
    HeadMap m = make_map(4, {0, 1, 2}, {3});
    EXPECT_THROW(assign_heads({profile(8, {0, 0, 0, 1}), profile(9, {0, 0, 0, 2})}, m), StateError);
}

TEST(Mah, MatchesBruteForceGreedyOracle) {
    std::mt19937_64 rng(31337);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 1000; ++trial) {
        // 12 heads: 4 task-owned at random positions, 8 aux
        std::vector<std::size_t> all(12);
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        std::vector<std::size_t> task(all.begin(), all.begin() + 4), aux(all.begin() + 4, all.end());
        std::sort(aux.begin(), aux.end());
        HeadMap m = make_map(12, task, aux);

        oracle::Instance inst;
        inst.aux_heads = aux;
        std::vector<ClassLogitProfile> profiles;
        for (int c = 0; c < 4; ++c) {
            std::vector<double> v(12);
            // every third case draws small integers to force exact ties
            for (auto& x : v) x = trial % 3 == 0 ? std::floor(normal(rng) * 1.5) : normal(rng);
            for (auto h : task) v[h] = 100.0;  // masked heads would win if not excluded
            inst.classes.push_back(40 + c);
            inst.values.push_back(v);
            profiles.push_back(profile(40 + c, v));
        }
        const auto survivors = oracle::greedy_survivors(inst);
        ASSERT_EQ(survivors.size(), 1u) << "trial " << trial;
        const auto out = assign_heads(profiles, m);
        for (std::size_t c = 0; c < 4; ++c) {
            ASSERT_EQ(out[c].head, survivors[0][c]) << "trial " << trial << " class " << c;
            EXPECT_EQ(out[c].replaced_aux, 100 + static_cast<int>(out[c].head));
        }
    }
}

TEST(Mah, ShiftInvariance) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ClassLogitProfile> p, q;
        for (int c = 0; c < 3; ++c) {
            auto v = oracle::random_tensor({9}, rng);
            std::vector<double> a(v.data().begin(), v.data().end()), b = a;
            for (auto& x : b) x += 0.5;  // exactly representable shift
            p.push_back(profile(c + 10, a));
            q.push_back(profile(c + 10, b));
        }
        HeadMap m1 = make_map(9, {0, 1}, {2, 3, 4, 5, 6, 7, 8}), m2 = m1;
        const auto x = assign_heads(p, m1), y = assign_heads(q, m2);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x[i].head, y[i].head);
    }
}

TEST(Mah, PermutationEquivariance) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const std::vector<std::size_t> aux{2, 3, 4, 5, 6, 7, 8, 9};
        std::vector<std::size_t> paux;
        for (auto h : aux) paux.push_back(perm[h]);
        HeadMap m1(10), m2(10);
        m1.add_task({0, 1}, {0, 1});
        m2.add_task({0, 1}, {perm[0], perm[1]});
        for (auto h : aux) {
            m1.set_aux(h, 100 + static_cast<int>(h));
            m2.set_aux(perm[h], 100 + static_cast<int>(h));
        }
        std::vector<ClassLogitProfile> p, q;
        for (int c = 0; c < 3; ++c) {
            auto v = oracle::random_tensor({10}, rng);
            std::vector<double> a(v.data().begin(), v.data().end()), b(10);
            for (std::size_t h = 0; h < 10; ++h) b[perm[h]] = a[h];
            p.push_back(profile(10 + c, a));
            q.push_back(profile(10 + c, b));
        }
        const auto x = assign_heads(p, m1), y = assign_heads(q, m2);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_EQ(perm[x[i].head], y[i].head);
            EXPECT_EQ(x[i].replaced_aux, y[i].replaced_aux);
        }
    }
}

TEST(Mah, SequentialTakesLowestNonTaskHeads) {
    HeadMap m = make_map(6, {0, 1}, {2, 3, 4, 5});
    TaskSpec t;
    t.index = 1;
    t.classes = {9, 8};
    const auto out = sequential_assign(t, m);
    EXPECT_EQ(out[0].head, 2u);
    EXPECT_EQ(out[1].head, 3u);
    EXPECT_EQ(out[0].replaced_aux, 102);
    EXPECT_EQ(m.require_head(8), 3u);
    EXPECT_EQ(m.task_heads(1), (std::vector<std::size_t>{2, 3}));
}

TEST(Mah, SequentialWithoutAuxUsesUnassignedHeads) {
    HeadMap m(4);
    m.add_task({0, 1}, {0, 1});
    TaskSpec t;
    t.classes = {5, 6};
    const auto out = sequential_assign(t, m);
    EXPECT_EQ(out[0].head, 2u);
    EXPECT_FALSE(out[0].replaced_aux.has_value());
    TaskSpec extra;
    extra.classes = {7};
    EXPECT_THROW(sequential_assign(extra, m), StateError);
}

TEST(HeadMapJson, ShapeAndMasks) {
    HeadMap m = make_map(4, {1}, {0, 3});
    const auto j = nlohmann::json::parse(m.to_json());
    ASSERT_EQ(j["heads"].size(), 4u);
    EXPECT_EQ(j["heads"][1]["owner"], "task");
    EXPECT_EQ(j["heads"][1]["class"], 0);
    EXPECT_EQ(j["heads"][0]["owner"], "aux");
    EXPECT_EQ(j["heads"][2]["owner"], "unassigned");
    EXPECT_EQ(j["tasks"][0][0], 1);
    EXPECT_EQ(m.task_owned_mask().count(), 1u);
    EXPECT_EQ(m.aux_mask().count(), 2u);
    EXPECT_TRUE(m.task_mask(0)[1]);
    EXPECT_THROW(m.require_head(55), StateError);
}

TEST(Profiles, MatchNaiveSummation) {
    BackboneConfig cfg;
    cfg.input_shape = {5};
    cfg.hidden = {7};
    cfg.num_heads = 6;
    Classifier model(cfg, 3);
    TaskSpec task;
    task.classes = {4, 2};
    task.train = make_synthetic(6, 13, {5}, 2.0, 8);
    task.train = select_classes(task.train, std::vector<int>{2, 4});
    EXPECT_THROW(compute_profiles(model, task), StateError);  // not frozen
    model.freeze();
    const auto got = compute_profiles(model, task, 5);
    const auto want = oracle::naive_profiles(model, task.train);
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(got[0].class_id, 4);
    for (const auto& p : got) {
        EXPECT_EQ(p.count, 13u);
        for (std::size_t h = 0; h < 6; ++h) EXPECT_NEAR(p.mean_logits[h], want.at(p.class_id)[h], 1e-9);
    }
}

TEST(Profiles, SingleSampleAndDuplicationInvariance) {
    BackboneConfig cfg;
    cfg.input_shape = {3};
    cfg.hidden = {4};
    cfg.num_heads = 3;
    Classifier model(cfg, 1);
    model.freeze();
    TaskSpec one;
    one.classes = {0, 1};
    one.train = make_synthetic(2, 1, {3}, 1.0, 2);
    const auto p = compute_profiles(model, one);
    const std::size_t idx[1] = {0};
    const Tensor z = model.logits(one.train.gather(idx));
    for (std::size_t h = 0; h < 3; ++h) EXPECT_EQ(p[0].mean_logits[h], z[h]);

    TaskSpec twice = one;
    for (std::size_t i = 0; i < one.train.size(); ++i) twice.train.push_back(one.train.input(i), one.train.labels[i]);
    const auto q = compute_profiles(model, twice);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t h = 0; h < 3; ++h) EXPECT_NEAR(q[c].mean_logits[h], p[c].mean_logits[h], 1e-12);

    TaskSpec missing = one;
    missing.classes = {0, 1, 9};
    EXPECT_THROW(compute_profiles(model, missing), StateError);
}
