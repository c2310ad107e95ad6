#include <doctest.h>

#include <array>
#include <stdexcept>
#include <string>

#include "her/hippocampus.hpp"

using namespace her;

namespace {

constexpr KnowledgeState kK = KnowledgeState::kKnown;
constexpr KnowledgeState kU = KnowledgeState::kUnknown;

GatingDecision decide(bool l1, bool l23, bool l4, bool l6a, bool l6b, bool l5) {
  return {l1, l23, l4, l6a, l6b, l5};
}

// Eight-symbol test alphabet over width 8, two bits each.
const Sdr kA(8, {0, 1});
const Sdr kB(8, {2, 3});
const Sdr kC(8, {4, 5});
const Sdr kD(8, {6, 7});

FilteringSliceConfig fast_cfg() {
  FilteringSliceConfig c;
  c.input_width = 8;
  c.branches_per_cell = 2;
  c.activation_threshold = 1;
  c.params = make_slice_params();
  c.params.alpha = 0.1;  // converge in tens of steps instead of hundreds
  c.params.up = 0.5;
  c.force_plasticity = true;
  c.swr_min_bits = 2;
  c.swr_max_bits = 3;
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("hippocampus");

TEST_CASE("gating rules truth table") {
  // Slice present and Unknown: everything above and L5 below frozen.
  CHECK(gating_rules(true, kU, kK) == decide(0, 0, 0, 0, 0, 0));
  CHECK(gating_rules(true, kU, kU) == decide(0, 0, 0, 0, 0, 0));
  // Present and Known: projections learn; trackers follow L23 above.
  CHECK(gating_rules(true, kK, kK) == decide(1, 1, 1, 1, 1, 1));
  CHECK(gating_rules(true, kK, kU) == decide(1, 1, 1, 0, 0, 0));
  // Absent: projections and input segmentation frozen; L23/L6a/L5 learn,
  // regardless of the L23 state above.
  CHECK(gating_rules(false, kK, kK) == decide(0, 1, 0, 1, 0, 1));
  CHECK(gating_rules(false, kK, kU) == decide(0, 1, 0, 1, 0, 1));
  CHECK(gating_rules(false, kU, kK) == decide(0, 1, 0, 1, 0, 1));
  CHECK(gating_rules(false, kU, kU) == decide(0, 1, 0, 1, 0, 1));
}

TEST_CASE("allocation policy") {
  std::array<KnowledgeState, 2> kk{kK, kK}, ku{kK, kU}, uu{kU, kU};
  CHECK_FALSE(allocate_policy(kk));
  CHECK(allocate_policy(ku));
  CHECK(allocate_policy(uu));
  CHECK_FALSE(allocate_policy({}));
}

TEST_CASE("column gates: single feeding slice passes through") {
  ColumnGateInputs in;
  in.below = {gating_rules(true, kK, kK)};
  LearnGates g = combine_column_gates(in);
  CHECK(g == LearnGates{true, true, true, true, true, true, false});
}

TEST_CASE("column gates: multiple feeding slices AND together") {
  ColumnGateInputs in;
  in.below = {gating_rules(true, kK, kK), gating_rules(true, kU, kK)};
  LearnGates g = combine_column_gates(in);
  CHECK_FALSE(g.l4);
  CHECK_FALSE(g.l23);
  CHECK_FALSE(g.l6a);
  CHECK_FALSE(g.l6b);
  CHECK_FALSE(g.l1);
}

TEST_CASE("column gates: an allocated output slice revives projections") {
  ColumnGateInputs in;
  in.below = {gating_rules(false, kK, kK)};  // input slice gone
  in.above_allocated = {true};
  in.above_l5_enable = {false};
  LearnGates g = combine_column_gates(in);
  CHECK(g.l4);
  CHECK(g.l1);
  CHECK(g.l6b);  // switch defaults on
  CHECK(g.l23);
  CHECK(g.l6a);
  CHECK_FALSE(g.l5);
  CHECK_FALSE(g.prune);

  in.l6b_learn_with_output_slice = false;
  CHECK_FALSE(combine_column_gates(in).l6b);
}

TEST_CASE("column gates: pruning requires every output slice gone") {
  ColumnGateInputs in;
  in.below = {gating_rules(false, kK, kK)};
  in.above_allocated = {false, false};
  in.above_l5_enable = {true, true};
  LearnGates g = combine_column_gates(in);
  CHECK(g.prune);
  CHECK(g.l5);
  CHECK_FALSE(g.l4);  // nothing above keeps projections learning
  in.above_allocated = {false, true};
  CHECK_FALSE(combine_column_gates(in).prune);
  // No output slice at all (bare top rung): no positive evidence, no pruning.
  in.above_allocated = {};
  in.above_l5_enable = {};
  LearnGates bare = combine_column_gates(in);
  CHECK_FALSE(bare.prune);
  CHECK(bare.l5);  // vacuously permitted
}

TEST_CASE("column gates: L5 is the AND over output-slice permissions") {
  ColumnGateInputs in;
  in.below = {gating_rules(true, kK, kK)};
  in.above_allocated = {true, true};
  in.above_l5_enable = {true, false};
  CHECK_FALSE(combine_column_gates(in).l5);
  in.above_l5_enable = {true, true};
  CHECK(combine_column_gates(in).l5);
}

TEST_CASE("column gates: no feeding slice is a wiring bug") {
  CHECK_THROWS_AS(combine_column_gates(ColumnGateInputs{}),
                  std::invalid_argument);
}

TEST_CASE("slice converges to Known on a periodic stream") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  CHECK(slice.state() == kU);
  for (int i = 0; i < 50; ++i)
    for (const Sdr* s : {&kA, &kB, &kC, &kD}) slice.step(*s, false);
  CHECK(slice.state() == kK);
  CHECK(slice.synaptic_load() > 0);
}

TEST_CASE("deallocated slice ignores input") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  slice.set_allocated(false);
  for (int i = 0; i < 20; ++i) {
    slice.step(kA, true);
    slice.step(kB, true);
  }
  CHECK(slice.synaptic_load() == 0);
  CHECK(slice.state() == kU);
  CHECK_FALSE(slice.ripple_active());
}

TEST_CASE("ripple walks the learned cycle for the full theta window") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  for (int i = 0; i < 50; ++i)
    for (const Sdr* s : {&kA, &kB, &kC, &kD}) slice.step(*s, false);
  REQUIRE(slice.state() == kK);

  std::uint64_t load = slice.synaptic_load();
  std::uint64_t events = slice.replica(0).plasticity_events();
  auto r = slice.step(kA, true);  // a covered successor is still Unknown
  CHECK(r.ripple_started);
  const Sdr* expect[] = {&kB, &kC, &kD, &kA, &kB, &kC, &kD, &kA, &kB, &kC};
  for (const Sdr* e : expect) {
    REQUIRE(slice.ripple_active());
    auto item = slice.pop_replay_item();
    REQUIRE(item.has_value());
    CHECK(*item == *e);
  }
  CHECK_FALSE(slice.ripple_active());
  CHECK(slice.pop_replay_item() == std::nullopt);
  // Replay never touches the replicas (the step itself did learn once).
  CHECK(slice.synaptic_load() == load);
  CHECK(slice.replica(0).plasticity_events() == events + 1);
}

TEST_CASE("no ripple without an unfamiliar successor") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  for (int i = 0; i < 50; ++i)
    for (const Sdr* s : {&kA, &kB, &kC, &kD}) slice.step(*s, false);
  auto r = slice.step(kA, false);
  CHECK_FALSE(r.ripple_started);
  CHECK_FALSE(slice.ripple_active());
}

TEST_CASE("no ripple while the slice itself is still learning") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  auto r = slice.step(kA, true);
  CHECK_FALSE(r.ripple_started);
}

TEST_CASE("a real input interrupts a running ripple") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  for (int i = 0; i < 50; ++i)
    for (const Sdr* s : {&kA, &kB, &kC, &kD}) slice.step(*s, false);
  slice.step(kA, true);
  REQUIRE(slice.ripple_active());
  slice.pop_replay_item();
  slice.step(kB, true);  // regular data arrives mid-ripple
  // The old ripple is gone; a fresh one may have started from kB.
  auto item = slice.pop_replay_item();
  if (item.has_value()) CHECK(*item == kC);
}

TEST_CASE("over-wide predictions are inhibited but the ripple continues") {
  // Train A->B and A->C alternately: after A both successors are predicted,
  // a 4-bit union against max 3.
  FilteringSlice slice(fast_cfg(), 11, "slice");
  for (int i = 0; i < 60; ++i) {
    slice.step(kA, false);
    slice.step(kB, false);
    slice.step(kA, false);
    slice.step(kC, false);
  }
  REQUIRE(slice.state() == kK);
  auto r = slice.step(kA, true);
  REQUIRE(r.ripple_started);
  REQUIRE(slice.ripple_active());
  auto first = slice.pop_replay_item();
  CHECK(first == std::nullopt);  // B-union-C is too wide to deliver
  REQUIRE(slice.ripple_active());
  auto second = slice.pop_replay_item();
  REQUIRE(second.has_value());
  CHECK(*second == kA);  // both B and C chain back to A
}

TEST_CASE("self-prediction ends the ripple before it starts") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  for (int i = 0; i < 200; ++i) slice.step(kA, false);
  REQUIRE(slice.state() == kK);
  auto r = slice.step(kA, true);
  CHECK_FALSE(r.ripple_started);
  CHECK_FALSE(slice.ripple_active());
}

TEST_CASE("a too-thin prediction ends the ripple") {
  auto cfg = fast_cfg();
  cfg.swr_min_bits = 3;  // symbols only carry 2 bits
  FilteringSlice slice(cfg, 11, "slice");
  for (int i = 0; i < 50; ++i)
    for (const Sdr* s : {&kA, &kB, &kC, &kD}) slice.step(*s, false);
  REQUIRE(slice.state() == kK);
  auto r = slice.step(kA, true);
  CHECK_FALSE(r.ripple_started);
}

TEST_CASE("per-bit replica voting gates replay content") {
  // Craft a checkpoint whose replicas disagree: two trained, one blank.
  auto cfg = fast_cfg();
  SequenceMemoryConfig smc;
  smc.width = cfg.input_width;
  smc.branches_per_cell = cfg.branches_per_cell;
  smc.activation_threshold = cfg.activation_threshold;
  smc.params = cfg.params;
  smc.reset_on_boundary = false;
  smc.rate_scale = cfg.rate_scale;
  smc.force_plasticity = true;
  auto trained = [&](int idx) {
    SequenceMemory m(smc, RngStream(11, "slice/replica" + std::to_string(idx)));
    for (int i = 0; i < 50; ++i) {
      m.step(kA, true);
      m.step(kB, true);
    }
    return m;
  };
  SequenceMemory r0 = trained(0), r1 = trained(1);
  SequenceMemory blank(smc, RngStream(11, "slice/replica2"));
  REQUIRE(r0.state() == kK);
  REQUIRE(blank.state() == kU);

  BinWriter w;
  w.u8(1);  // allocated
  r0.save(w);
  r1.save(w);
  blank.save(w);
  w.u64(0);  // no ripple
  w.u64(0);  // ripple position

  FilteringSlice majority(cfg, 11, "slice");
  BinReader rd1(w.buffer());
  majority.load(rd1);
  CHECK(majority.state() == kK);  // 2 of 3 Known
  auto res = majority.step(kA, true);
  CHECK(res.ripple_started);  // two votes reach the threshold of 2
  auto item = majority.pop_replay_item();
  REQUIRE(item.has_value());
  CHECK(*item == kB);

  auto strict = cfg;
  strict.vote_threshold = 3;
  FilteringSlice unanimous(strict, 11, "slice");
  BinReader rd2(w.buffer());
  unanimous.load(rd2);
  CHECK(unanimous.state() == kU);  // 2 of 3 misses the unanimity bar
  auto res2 = unanimous.step(kA, true);
  CHECK_FALSE(res2.ripple_started);
}

TEST_CASE("deallocation decays the slice to empty") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  for (int i = 0; i < 50; ++i)
    for (const Sdr* s : {&kA, &kB, &kC, &kD}) slice.step(*s, false);
  REQUIRE(slice.synaptic_load() > 0);
  // While allocated the decay tick must not act.
  slice.decay_tick();
  CHECK(slice.synaptic_load() > 0);
  slice.set_allocated(false);
  std::uint64_t prev = slice.synaptic_load();
  int ticks = 0;
  while (slice.synaptic_load() > 0 && ticks < 20000) {
    slice.decay_tick();
    CHECK(slice.synaptic_load() <= prev);
    prev = slice.synaptic_load();
    ++ticks;
  }
  CHECK(slice.synaptic_load() == 0);
  CHECK(ticks < 11000);  // the configured horizon is ~1e4 ticks
}

TEST_CASE("slice save/load round trip preserves a mid-flight ripple") {
  FilteringSlice slice(fast_cfg(), 11, "slice");
  for (int i = 0; i < 50; ++i)
    for (const Sdr* s : {&kA, &kB, &kC, &kD}) slice.step(*s, false);
  slice.step(kA, true);
  REQUIRE(slice.ripple_active());
  slice.pop_replay_item();  // consume one slot before checkpointing

  BinWriter w1;
  slice.save(w1);
  FilteringSlice restored(fast_cfg(), 11, "slice");
  BinReader r(w1.buffer());
  restored.load(r);
  CHECK(r.exhausted());
  BinWriter w2;
  restored.save(w2);
  CHECK(w1.buffer() == w2.buffer());

  while (slice.ripple_active()) {
    auto a = slice.pop_replay_item();
    auto b = restored.pop_replay_item();
    CHECK(a == b);
  }
  CHECK_FALSE(restored.ripple_active());
}

TEST_SUITE_END();
