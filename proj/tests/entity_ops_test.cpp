#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <optional>

#include "ner_aug/entity_ops.hpp"
#include "support/generators.hpp"

using namespace ner_aug;

namespace {

DraftItem item(const std::string& word, const std::string& type) {
  return {{{word}}, EntityType(type)};
}

EntityListDraft eu_german_british() {
  return {{item("EU", "ORG"), item("German", "MISC"), item("British", "MISC")}};
}

std::vector<std::string> words(const EntityListDraft& d) {
  std::vector<std::string> out;
  for (const auto& it : d.items) out.push_back(it.surface.front().front());
  return out;
}

AnnotatedSentence sentence(std::vector<std::string> tokens,
                           std::vector<std::pair<Span, std::string>> ents) {
  AnnotatedSentence s{std::move(tokens), {}};
  for (auto& [sp, t] : ents) s.entities.push_back(make_entity(s.tokens, {sp}, EntityType(t)));
  return s;
}

DraftError::Code draft_error(const std::function<void()>& f) {
  try {
    f();
  } catch (const DraftError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected DraftError";
  return DraftError::Code::NotConcrete;
}

}  // namespace

TEST(BuildPool, GroupsByTypeInFirstOccurrenceOrder) {
  std::vector<AnnotatedSentence> train = {
      sentence({"EU", "rejects", "German", "call"}, {{{0, 0}, "ORG"}, {{2, 2}, "MISC"}}),
      sentence({"British", "and", "Spanish", "EU"},
               {{{0, 0}, "MISC"}, {{2, 2}, "MISC"}, {{3, 3}, "ORG"}}),
  };
  EntityPool pool = build_pool(train);
  EXPECT_EQ(pool.mentions(EntityType("MISC")),
            (std::vector<Surface>{{{"German"}}, {{"British"}}, {{"Spanish"}}}));
  EXPECT_EQ(pool.mentions(EntityType("ORG")), (std::vector<Surface>{{{"EU"}}}));
  EXPECT_EQ(pool.size(), 4u);
}

TEST(BuildPool, EmptyEntityListsGiveEmptyPool) {
  EXPECT_TRUE(build_pool({sentence({"a"}, {})}).empty());
}

TEST(BuildPool, KeepsPartStructure) {
  AnnotatedSentence s{{"stomach", "ache", "and", "pain"}, {}};
  s.entities.push_back(make_entity(s.tokens, {{0, 0}, {3, 3}}, EntityType("DISORDER")));
  EntityPool pool = build_pool({s});
  EXPECT_EQ(pool.mentions(EntityType("DISORDER")).at(0), (Surface{{"stomach"}, {"pain"}}));
}

TEST(OpAdd, InsertsAfterSampledEntity) {
  EntityPool pool;
  pool.insert(EntityType("MISC"), {{"German"}});
  pool.insert(EntityType("MISC"), {{"Spanish"}});
  // ORG has no unused mention, so only the MISC positions are eligible.
  pool.insert(EntityType("ORG"), {{"EU"}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    auto out = op_add(eu_german_british(), pool, rng);
    auto w = words(out);
    ASSERT_EQ(w.size(), 4u);
    EXPECT_EQ(out.provenance, AugOp::Add);
    EXPECT_TRUE(w == (std::vector<std::string>{"EU", "German", "Spanish", "British"}) ||
                w == (std::vector<std::string>{"EU", "German", "British", "Spanish"}))
        << seed;
  }
}

TEST(OpAdd, NoCandidateWhenPoolOnlyHasDraftSurfaces) {
  EntityPool pool;
  pool.insert(EntityType("MISC"), {{"German"}});
  pool.insert(EntityType("ORG"), {{"EU"}});
  Rng rng(1);
  EXPECT_EQ(draft_error([&] { op_add(eu_german_british(), pool, rng); }),
            DraftError::Code::NoCandidate);
}

TEST(OpAdd, SingletonForcedOutcome) {
  EntityPool pool;
  pool.insert(EntityType("T"), {{"Y"}});
  Rng rng(3);
  auto out = op_add({{item("X", "T")}}, pool, rng);
  EXPECT_EQ(words(out), (std::vector<std::string>{"X", "Y"}));
}

TEST(OpDelete, RemovesOne) {
  bool saw_table_row = false;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    auto w = words(op_delete(eu_german_british(), rng));
    ASSERT_EQ(w.size(), 2u);
    saw_table_row |= w == std::vector<std::string>{"EU", "German"};
  }
  EXPECT_TRUE(saw_table_row);
  Rng rng(0);
  EXPECT_EQ(draft_error([&] { op_delete({{item("X", "T")}}, rng); }),
            DraftError::Code::TooFewEntities);
  auto one = op_delete({{item("X", "T"), item("Y", "T")}}, rng);
  ASSERT_EQ(one.items.size(), 1u);
  EXPECT_TRUE(one.items[0] == item("X", "T") || one.items[0] == item("Y", "T"));
}

TEST(OpReplace, SwapsInSameTypeMention) {
  EntityPool pool;
  for (const char* w : {"German", "British", "Spanish"}) pool.insert(EntityType("MISC"), {{w}});
  bool saw_table_row = false;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    auto w = words(op_replace(eu_german_british(), pool, rng));
    ASSERT_EQ(w.size(), 3u);
    saw_table_row |= w == std::vector<std::string>{"EU", "German", "Spanish"};
    EXPECT_EQ(w[0], "EU");
  }
  EXPECT_TRUE(saw_table_row);

  EntityPool only_self;
  only_self.insert(EntityType("T"), {{"X"}});
  Rng rng(0);
  EXPECT_EQ(draft_error([&] { op_replace({{item("X", "T")}}, only_self, rng); }),
            DraftError::Code::NoCandidate);
}

TEST(OpSwap, ExchangesTwoPositions) {
  auto d = eu_german_british();
  EXPECT_EQ(words(swap_positions(d, 0, 2)), (std::vector<std::string>{"British", "German", "EU"}));
  EXPECT_EQ(swap_positions(swap_positions(d, 0, 2), 0, 2).items, d.items);
  Rng rng(9);
  EXPECT_EQ(words(op_swap({{item("A", "T"), item("B", "T")}}, rng)),
            (std::vector<std::string>{"B", "A"}));
  EXPECT_EQ(draft_error([&] { op_swap({{item("A", "T")}}, rng); }),
            DraftError::Code::TooFewEntities);
}

TEST(OpSwap, SamplesEveryPairUniformly) {
  std::map<std::vector<std::string>, int> seen;
  Rng rng(77);
  for (int i = 0; i < 3000; ++i) ++seen[words(op_swap(eu_german_british(), rng))];
  ASSERT_EQ(seen.size(), 3u);
  for (const auto& [w, n] : seen) EXPECT_NEAR(n, 1000, 150);
}

TEST(ApplyOp, AllMustBeExpanded) {
  Rng rng(0);
  EXPECT_EQ(draft_error([&] { apply_op(eu_german_british(), AugOp::All, {}, rng); }),
            DraftError::Code::NotConcrete);
  EXPECT_EQ(expand_op(AugOp::All),
            (std::vector<AugOp>{AugOp::Add, AugOp::Delete, AugOp::Replace, AugOp::Swap}));
}

TEST(ApplyOp, DeterministicForSeed) {
  Rng g(5);
  for (int i = 0; i < 200; ++i) {
    auto d = testkit::random_draft(g);
    auto pool = testkit::random_pool(g);
    const std::uint64_t seed = g.next();
    for (AugOp op : expand_op(AugOp::All)) {
      Rng a(seed), b(seed);
      std::optional<EntityListDraft> x, y;
      try { x = apply_op(d, op, pool, a); } catch (const DraftError&) {}
      try { y = apply_op(d, op, pool, b); } catch (const DraftError&) {}
      ASSERT_EQ(x, y);
    }
  }
}

TEST(Condition, SerializesWithTypeTags) {
  EntityListDraft d{{item("EU", "ORG"), item("Spanish", "MISC")}};
  EXPECT_EQ(serialize_condition(d).tokens,
            (std::vector<std::string>{"[ORG]", "EU", "[/ORG]", "[MISC]", "Spanish", "[/MISC]"}));
}

TEST(Condition, MultiPartUsesGapToken) {
  EntityListDraft d{{DraftItem{{{"stomach"}, {"pain"}}, EntityType("DISORDER")}}};
  auto seq = serialize_condition(d);
  EXPECT_EQ(seq.tokens,
            (std::vector<std::string>{"[DISORDER]", "stomach", "[]", "pain", "[/DISORDER]"}));
  EXPECT_EQ(deserialize_condition(seq).items, d.items);
}

TEST(Condition, Errors) {
  auto code = [](std::vector<std::string> toks) {
    try {
      deserialize_condition({std::move(toks)});
    } catch (const ConditionError& e) {
      return static_cast<int>(e.code());
    }
    return -1;
  };
  const int unbalanced = static_cast<int>(ConditionError::Code::UnbalancedTags);
  const int unknown = static_cast<int>(ConditionError::Code::UnknownTagToken);
  EXPECT_EQ(code({"[T]", "[/T]"}), unbalanced);
  EXPECT_EQ(code({"[T]", "x"}), unbalanced);
  EXPECT_EQ(code({"[T]", "x", "[/U]"}), unbalanced);
  EXPECT_EQ(code({"[T]", "[]", "x", "[/T]"}), unbalanced);
  EXPECT_EQ(code({"x", "[T]", "y", "[/T]"}), unknown);
  EXPECT_EQ(code({"[/T]"}), unknown);
  EXPECT_EQ(code({"[A B]", "x", "[/A B]"}), unknown);
  EXPECT_EQ(code({}), -1);
}

TEST(ConditionProperty, RoundtripIsIdentity) {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    auto d = testkit::random_draft(rng);
    auto back = deserialize_condition(serialize_condition(d));
    ASSERT_EQ(back.items, d.items);
  }
}
