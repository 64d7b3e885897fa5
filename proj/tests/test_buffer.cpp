#include <gtest/gtest.h>

#include <sstream>

#include "auxcl/buffer.hpp"
#include "support/oracles.hpp"

using namespace auxcl;

namespace {

BufferEntry entry(int label, std::uint64_t step = 0) {
    BufferEntry e;
    e.input = {static_cast<double>(label)};
    e.label = label;
    e.stored_logits = {0.5, -1.25};
    e.insertion_step = step;
    return e;
}

}  // namespace

TEST(Reservoir, UnderCapacityKeepsEverything) {
    Reservoir buf(10);
    Rng rng(1);
    for (int i = 0; i < 10; ++i) buf.insert(entry(i), rng);
    ASSERT_EQ(buf.size(), 10u);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(buf.entries()[static_cast<std::size_t>(i)].label, i);
}

TEST(Reservoir, SeenCountsEveryCallAndOccupancyIsBounded) {
    Reservoir buf(7);
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        buf.insert(entry(i), rng);
        EXPECT_EQ(buf.seen(), static_cast<std::uint64_t>(i + 1));
        EXPECT_LE(buf.size(), 7u);
    }
}

TEST(Reservoir, ZeroCapacityStoresNothing) {
    Reservoir buf(0);
    Rng rng(3);
    buf.insert(entry(1), rng);
    EXPECT_TRUE(buf.empty());
    EXPECT_EQ(buf.seen(), 1u);
}

TEST(Reservoir, DeterministicUnderSeed) {
    Reservoir a(5), b(5);
    Rng ra(9), rb(9);
    for (int i = 0; i < 100; ++i) {
        a.insert(entry(i), ra);
        b.insert(entry(i), rb);
    }
    std::ostringstream da, db;
    a.dump(da);
    b.dump(db);
    EXPECT_EQ(da.str(), db.str());
}

TEST(Reservoir, InclusionFrequencyPassesChiSquare) {
    const auto c = oracle::reservoir_inclusion(100, 10000, 200, 100, 2024);
    const auto per_item = oracle::chi_square_uniform(c.per_item, 200 * 0.01);
    const auto binned = oracle::chi_square_uniform(c.binned, 200 * 0.01 * 100);
    EXPECT_GT(per_item.p_value, 0.01) << "stat " << per_item.statistic << " dof " << per_item.dof;
    EXPECT_GT(binned.p_value, 0.01) << "stat " << binned.statistic << " dof " << binned.dof;
}

TEST(Reservoir, ChiSquareDetectsBiasedSampler) {
    // sanity of the oracle itself: keeping the first 100 items is rejected
    std::vector<double> counts(10000, 0.0);
    for (int i = 0; i < 100; ++i) counts[static_cast<std::size_t>(i)] = 200;
    EXPECT_LT(oracle::chi_square_uniform(counts, 2.0).p_value, 1e-6);
}

TEST(Reservoir, SampleEdgeCases) {
    Reservoir buf(4);
    Rng rng(4);
    EXPECT_TRUE(buf.sample(3, rng).empty());
    buf.insert(entry(42), rng);
    EXPECT_TRUE(buf.sample(0, rng).empty());
    const auto picks = buf.sample(4, rng);
    ASSERT_EQ(picks.size(), 4u);
    for (const auto* p : picks) EXPECT_EQ(p->label, 42);
}

TEST(Reservoir, SampleIsWithReplacementAndUniform) {
    Reservoir buf(4);
    Rng rng(5);
    for (int i = 0; i < 4; ++i) buf.insert(entry(i), rng);
    std::vector<double> hits(4, 0.0);
    for (const auto* p : buf.sample(8000, rng)) hits[static_cast<std::size_t>(p->label)] += 1;
    EXPECT_GT(oracle::chi_square_uniform(hits, 2000).p_value, 0.001);
}

TEST(Reservoir, DumpFormat) {
    Reservoir buf(2);
    Rng rng(6);
    buf.insert(entry(3, 17), rng);
    std::ostringstream os;
    buf.dump(os);
    EXPECT_EQ(os.str(), "3;17;0.5,-1.25\n");
}
