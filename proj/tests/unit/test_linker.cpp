#include <gtest/gtest.h>

#include "medlink/linker.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace medlink;

namespace {

ConceptTargetIndex random_index(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<Sctid, Vector>> ts;
  for (std::size_t i = 0; i < n; ++i) {
    Vector v(dim);
    for (auto& x : v) x = rng.normal();
    ts.emplace_back(Sctid{1000 + 3 * i}, std::move(v));
  }
  return ConceptTargetIndex(dim, std::move(ts));
}

Mention mention(std::int64_t id, std::string term, std::uint64_t gold) {
  Mention m;
  m.id = id;
  m.term = std::move(term);
  m.general = m.specific = Sctid{gold};
  m.example = "ex";
  m.subreddit = "s";
  return m;
}

}  // namespace

TEST(Rank, MatchesBruteForce) {
  const auto index = random_index(500, 12, 1);
  Rng rng(2);
  for (int q = 0; q < 50; ++q) {
    Vector p(12);
    for (auto& x : p) x = rng.normal();
    const auto got = rank(index, p, 10);
    const auto want = oracle::rank(index, p, 10);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].sctid, want[i].sctid);
      EXPECT_EQ(got[i].score, want[i].score);
    }
  }
}

TEST(Rank, TiesGoToSmallerSctid) {
  const ConceptTargetIndex index(2, {{Sctid{9}, {1, 0}}, {Sctid{3}, {2, 0}}, {Sctid{5}, {0, 1}}});
  const auto r = rank(index, Vector{1, 0}, 3);
  EXPECT_EQ(r[0].sctid, Sctid{3});
  EXPECT_EQ(r[1].sctid, Sctid{9});
  EXPECT_EQ(r[2].sctid, Sctid{5});
  const auto zero = rank(index, Vector{0, 0}, 2);
  EXPECT_EQ(zero[0].sctid, Sctid{3});
  EXPECT_EQ(zero[0].score, 0.0);
  EXPECT_EQ(rank(index, Vector{1, 0}, 100).size(), 3u);
}

TEST(Rank, Errors) {
  const ConceptTargetIndex index(2, {{Sctid{1}, {1, 0}}});
  EXPECT_THROW(rank(index, Vector{1, 0}, 0), ConfigError);
  EXPECT_THROW(rank(index, Vector{1, 0, 0}, 1), ConfigError);
  EXPECT_THROW(ConceptTargetIndex(2, {{Sctid{1}, {1}}}), ConfigError);
  EXPECT_THROW(ConceptTargetIndex(1, {{Sctid{1}, {1}}, {Sctid{1}, {2}}}), ValidationError);
}

TEST(Targets, ConcatenatesPartsInRecipeOrder) {
  const ConceptGraph g({{Sctid{1}, {"head pain"}, ""}, {Sctid{2}, {"zzz"}, ""}}, {});
  WordVectorStore ft(2);
  ft.set("head", std::vector<double>{1, 0});
  ft.set("pain", std::vector<double>{0, 1});
  NodeEmbeddings nodes(1);
  nodes.set(Sctid{1}, {7});
  LayerStackFile stacks(2, 1);
  LayerStack s(2, 1);
  s.data = {3, 4};
  stacks.add(label_stack_key(Sctid{1}, 0), s);
  stacks.add(label_stack_key(Sctid{2}, 0), s);

  const TargetSources src{&ft, &stacks, kTopLayer, &nodes};
  const std::vector<TargetPart> parts{TargetPart::FtLabel, TargetPart::Node, TargetPart::BertLabel};
  const auto built = build_target_index(g, parts, src);
  EXPECT_EQ(built.index.dim(), 4u);
  EXPECT_EQ(built.index.target(0), (Vector{0.5, 0.5, 7, 4}));
  EXPECT_EQ(built.index.target(1), (Vector{0, 0, 0, 4}));
  EXPECT_EQ(built.oov_labels, 1u);
  EXPECT_EQ(built.missing_nodes, 1u);

  const TargetSources missing{&ft, nullptr, kTopLayer, nullptr};
  EXPECT_THROW(build_target_index(g, parts, missing), ConfigError);
}

TEST(Recipes, Table) {
  EXPECT_EQ(recipe("n1").target, std::vector<TargetPart>{TargetPart::FtLabel});
  EXPECT_EQ(recipe("n2").target, std::vector<TargetPart>{TargetPart::Node});
  EXPECT_EQ(recipe("n3").stack_mode, StackMode::Layer);
  EXPECT_EQ(recipe("n4").stack_mode, StackMode::Mla);
  EXPECT_FALSE(recipe("n5").use_relu);
  EXPECT_DOUBLE_EQ(recipe("n5").learning_rate, 1e-5);
  const auto n6 = recipe("n6");
  EXPECT_TRUE(n6.ft_transform);
  EXPECT_EQ(n6.target, (std::vector<TargetPart>{TargetPart::FtLabel, TargetPart::Node, TargetPart::BertLabel}));
  EXPECT_TRUE(n6.uses_stacks() && n6.uses_nodes() && n6.uses_ft_vectors());
  EXPECT_FALSE(recipe("n1").uses_stacks());
  EXPECT_THROW(recipe("n7"), ConfigError);
  const auto shape = recipe_shape(n6, 8, 3, 6, 20, 10);
  EXPECT_EQ(shape.input_dim(), 16u);
  EXPECT_FALSE(shape.use_relu);
}

TEST(CascadeSpec, Parses) {
  const auto s = parse_cascade_spec("dict+stoilos:0.07+neural:n6");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].kind, StageSpec::Kind::Dictionary);
  EXPECT_EQ(s[1].kind, StageSpec::Kind::Fuzzy);
  EXPECT_EQ(s[1].metric, Metric::StoilosDistance);
  EXPECT_DOUBLE_EQ(*s[1].tau, 0.07);
  EXPECT_EQ(s[2].name, "n6");
  const auto t = parse_cascade_spec("exact+lev");
  EXPECT_FALSE(t[1].tau);
  EXPECT_THROW(parse_cascade_spec("dict+neural:n6+exact"), ConfigError);
  EXPECT_THROW(parse_cascade_spec("dict+bogus"), ConfigError);
  EXPECT_THROW(parse_cascade_spec("lev:2"), ConfigError);
  EXPECT_THROW(parse_cascade_spec("dict:x"), ConfigError);
}

class CascadeTest : public ::testing::Test {
 protected:
  CascadeTest()
      : graph({{Sctid{1}, {"headache"}, ""}, {Sctid{2}, {"back pain"}, ""}, {Sctid{3}, {"anaemia"}, ""}}, {}),
        dict(build_dictionary({mention(1, "sore head", 1), mention(2, "headache", 2)}, Level::General)),
        scanner(graph),
        index(2, {{Sctid{1}, {1, 0}}, {Sctid{2}, {0, 1}}, {Sctid{3}, {-1, 0}}}) {
    AlignShape s;
    s.ft_dim = 2;
    s.out_dim = 2;
    s.use_relu = false;
    model = init_model(s, 1);
    model.weight.data = {1, 0, 0, 1};  // identity
  }

  ConceptGraph graph;
  Dictionary dict;
  LabelScanner scanner;
  ConceptTargetIndex index;
  AlignModel model;
};

TEST_F(CascadeTest, FirstNonMissingStageAnswers) {
  const auto c = Cascade::build({DictionaryStage{&dict}, ExactStage{&graph},
                                 FuzzyStage{&scanner, Metric::LevenshteinRatio, 0.15},
                                 NeuralStage{&model, &index, "n1"}});
  const Vector v{0, 1};
  auto link = [&](std::string_view term) { return c.link({1, term, {v, nullptr}}, 2); };

  auto r = link("headache");  // dictionary wins over the exact label
  EXPECT_EQ(*r.sctid, Sctid{2});
  EXPECT_EQ(r.provenance, "dictionary");
  ASSERT_EQ(r.candidates.size(), 1u);

  r = link("Back Pain");
  EXPECT_EQ(*r.sctid, Sctid{2});
  EXPECT_EQ(r.provenance, "exact");

  r = link("anemia");
  EXPECT_EQ(*r.sctid, Sctid{3});
  EXPECT_EQ(r.provenance, "lev:0.15");

  r = link("something else");
  EXPECT_EQ(*r.sctid, Sctid{2});
  EXPECT_EQ(r.provenance, "neural:n1");
  EXPECT_EQ(r.candidates.size(), 2u);
  EXPECT_TRUE(c.terminal());
}

TEST_F(CascadeTest, StringOnlyCascadeCanMiss) {
  const auto c = Cascade::build({DictionaryStage{&dict}, ExactStage{&graph}});
  const auto r = c.link({1, "zzz", {}});
  EXPECT_FALSE(r.hit());
  EXPECT_EQ(r.provenance, "miss");
  EXPECT_FALSE(c.terminal());
}

TEST_F(CascadeTest, NothingMayFollowNeural) {
  EXPECT_THROW(Cascade::build({NeuralStage{&model, &index, "n"}, ExactStage{&graph}}), ConfigError);
  auto inner = std::make_shared<const Cascade>(Cascade::build({ExactStage{&graph}, NeuralStage{&model, &index, "n"}}));
  EXPECT_THROW(Cascade::build({NestedStage{inner}, DictionaryStage{&dict}}), ConfigError);
  EXPECT_NO_THROW(Cascade::build({DictionaryStage{&dict}, NestedStage{inner}}));
  EXPECT_THROW(Cascade::build({}), ConfigError);
  EXPECT_THROW(Cascade::build({DictionaryStage{nullptr}}), ConfigError);
  EXPECT_THROW(Cascade::build({FuzzyStage{&scanner, Metric::LevenshteinRatio, 1.5}}), ConfigError);
}

TEST_F(CascadeTest, CascadeNeverWorseThanItsStagesAlone) {
  // Every mention a stage answers correctly on its own is either answered
  // correctly by the cascade or claimed by an earlier stage.
  const std::vector<Mention> ms{mention(1, "headache", 1), mention(2, "back pain", 2), mention(3, "anemia", 3),
                                mention(4, "sore head", 1), mention(5, "pain", 2)};
  const std::vector<Stage> stages{DictionaryStage{&dict}, ExactStage{&graph},
                                  FuzzyStage{&scanner, Metric::StoilosDistance, 0.2}};
  const auto c = Cascade::build(stages);
  for (const auto& m : ms) {
    const auto full = c.link({m.id, m.term, {}});
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto alone = Cascade::build({stages[i]}).link({m.id, m.term, {}});
      if (!alone.hit()) continue;
      bool earlier = false;
      for (std::size_t j = 0; j < i; ++j) earlier |= Cascade::build({stages[j]}).link({m.id, m.term, {}}).hit();
      if (!earlier) {
        EXPECT_EQ(full.sctid, alone.sctid);
      }
    }
  }
}
