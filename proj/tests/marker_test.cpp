#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "ner_aug/marker.hpp"
#include "support/generators.hpp"

using namespace ner_aug;

namespace {

DraftItem item(std::vector<std::string> words, const std::string& type) {
  return {{std::move(words)}, EntityType(type)};
}

std::vector<std::string> split(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<std::vector<Span>> spans_of(const MarkOutcome& m) {
  std::vector<std::vector<Span>> out;
  for (const auto& e : m.sentence().entities) out.push_back(e.spans);
  return out;
}

}  // namespace

TEST(MarkFlat, PlacesEachEntity) {
  EntityListDraft d{{item({"EU"}, "ORG"), item({"German"}, "MISC")}};
  auto m = mark(split("EU rejects call to boycott German beef"), d, TaskKind::Flat);
  ASSERT_TRUE(m.marked());
  EXPECT_EQ(spans_of(m), (std::vector<std::vector<Span>>{{{0, 0}}, {{5, 5}}}));
  EXPECT_EQ(m.sentence().entities[1].type.name(), "MISC");
  EXPECT_EQ(m.repeated_mentions(), 0u);
}

TEST(MarkFlat, AbsentEntityIsRejected) {
  EntityListDraft d{{item({"EU"}, "ORG"), item({"Spanish"}, "MISC")}};
  auto m = mark(split("EU rejects German beef"), d, TaskKind::Flat);
  ASSERT_FALSE(m.marked());
  EXPECT_EQ(m.rejection().reason, Rejection::Reason::Mismatch);
  EXPECT_EQ(m.rejection().entity, 1u);
  EXPECT_NE(m.rejection().message.find("Spanish"), std::string::npos);
}

TEST(MarkFlat, MatchIsWholeTokenAndCaseSensitive) {
  EntityListDraft d{{item({"EU"}, "ORG")}};
  EXPECT_FALSE(mark(split("EUROPE and eu"), d, TaskKind::Flat).marked());
}

TEST(MarkFlat, SecondOccurrenceUsedWhenFirstIsTaken) {
  EntityListDraft d{{item({"New", "York"}, "LOC"), item({"York"}, "LOC")}};
  auto m = mark(split("New York and York"), d, TaskKind::Flat);
  ASSERT_TRUE(m.marked());
  EXPECT_EQ(spans_of(m), (std::vector<std::vector<Span>>{{{0, 1}}, {{3, 3}}}));
  EXPECT_EQ(m.repeated_mentions(), 1u);
  EXPECT_FALSE(mark(split("New York"), d, TaskKind::Flat).marked());
}

TEST(MarkFlat, MultiPartIsModeViolation) {
  EntityListDraft d{{DraftItem{{{"stomach"}, {"pain"}}, EntityType("DISORDER")}}};
  auto m = mark(split("stomach ache and pain"), d, TaskKind::Flat);
  ASSERT_FALSE(m.marked());
  EXPECT_EQ(m.rejection().reason, Rejection::Reason::ModeViolation);
  EXPECT_FALSE(mark(split("stomach ache and pain"), d, TaskKind::Nested).marked());
}

TEST(MarkNested, OverlappingEntities) {
  EntityListDraft d{{item({"PEBP2"}, "PROTEIN"), item({"PEBP2", "site"}, "DNA")}};
  auto m = mark(split("Alpha B2 proteins bound the PEBP2 site"), d, TaskKind::Nested);
  ASSERT_TRUE(m.marked());
  EXPECT_EQ(spans_of(m), (std::vector<std::vector<Span>>{{{5, 5}}, {{5, 6}}}));
  // Flat marking cannot place both on the same tokens.
  EXPECT_FALSE(mark(split("the PEBP2 site"), d, TaskKind::Flat).marked());
}

TEST(MarkNested, DuplicateAnnotationIsRejected) {
  EntityListDraft d{{item({"PEBP2"}, "PROTEIN"), item({"PEBP2"}, "PROTEIN")}};
  auto m = mark(split("the PEBP2 site"), d, TaskKind::Nested);
  ASSERT_FALSE(m.marked());
  EXPECT_EQ(m.rejection().reason, Rejection::Reason::Duplicate);
  EXPECT_EQ(m.rejection().entity, 1u);
}

TEST(MarkDiscontinuous, PartsInOrder) {
  EntityListDraft d{{DraftItem{{{"stomach"}, {"pain"}}, EntityType("DISORDER")}}};
  auto m = mark(split("The cancer patient has constant stomach discomfort and pain"), d,
                TaskKind::Discontinuous);
  ASSERT_TRUE(m.marked());
  EXPECT_EQ(spans_of(m), (std::vector<std::vector<Span>>{{{5, 5}, {8, 8}}}));
}

TEST(MarkDiscontinuous, ReversedOrderIsRejected) {
  EntityListDraft d{{DraftItem{{{"stomach"}, {"pain"}}, EntityType("DISORDER")}}};
  auto m = mark(split("pain in the stomach"), d, TaskKind::Discontinuous);
  ASSERT_FALSE(m.marked());
  EXPECT_EQ(m.rejection().reason, Rejection::Reason::Mismatch);
}

TEST(MarkDiscontinuous, SharedHeadAcrossEntities) {
  EntityListDraft d{{DraftItem{{{"pain", "in"}, {"shoulder"}}, EntityType("DISORDER")},
                     DraftItem{{{"pain", "in"}, {"neck"}}, EntityType("DISORDER")}}};
  auto m = mark(split("I experienced severe pain in my left shoulder and neck"), d,
                TaskKind::Discontinuous);
  ASSERT_TRUE(m.marked());
  EXPECT_EQ(spans_of(m),
            (std::vector<std::vector<Span>>{{{3, 4}, {7, 7}}, {{3, 4}, {9, 9}}}));
}

TEST(MarkRoundtrip, GoldFixtureIsReproduced) {
  std::ifstream in(std::string(NER_AUG_FIXTURE_DIR) + "/mixed.jsonl");
  const auto corpus = parse_spans(in);
  ASSERT_EQ(corpus.size(), 5u);
  const TaskKind kinds[] = {TaskKind::Flat, TaskKind::Nested, TaskKind::Discontinuous,
                            TaskKind::Discontinuous, TaskKind::Flat};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& gold = corpus[i];
    auto m = mark(gold.tokens, draft_from_sentence(gold), kinds[i]);
    ASSERT_TRUE(m.marked()) << i << ": " << m.rejection().message;
    EXPECT_EQ(m.sentence(), gold) << i;
    auto loose = mark(gold.tokens, draft_from_sentence(gold), TaskKind::Discontinuous);
    ASSERT_TRUE(loose.marked());
    EXPECT_EQ(loose.sentence(), gold) << i;
  }
}

// Any marked sentence is valid for its task and carries exactly the draft's
// surfaces and types in draft order.
TEST(MarkProperty, Soundness) {
  Rng rng(17);
  std::size_t marked = 0;
  for (int i = 0; i < 600; ++i) {
    const TaskKind kind = static_cast<TaskKind>(i % 3);
    const auto src = testkit::random_sentence(rng, kind);
    EntityListDraft d = draft_from_sentence(src);
    if (rng.below(3) == 0) d.items.push_back({testkit::random_surface(rng), EntityType("PER")});
    auto m = mark(src.tokens, d, kind);
    if (!m.marked()) continue;
    ++marked;
    const auto& s = m.sentence();
    ASSERT_TRUE(validate(s, kind).empty());
    ASSERT_EQ(s.tokens, src.tokens);
    ASSERT_EQ(s.entities.size(), d.items.size());
    for (std::size_t k = 0; k < d.items.size(); ++k) {
      ASSERT_EQ(s.entities[k].surface, d.items[k].surface);
      ASSERT_EQ(s.entities[k].type, d.items[k].type);
    }
  }
  EXPECT_GT(marked, 300u);
}
