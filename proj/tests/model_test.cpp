#include <gtest/gtest.h>

#include <bit>
#include <random>

#include "crd/model.hpp"
#include "test_util.hpp"

using namespace crd;
using crd::testing::TempDir;

namespace {

InferenceMatrix random_matrix(std::mt19937_64& rng) {
  const std::size_t n = 2 + rng() % 4;
  const int tau = 1 + static_cast<int>(rng() % 3);
  InferenceMatrix m(crd::testing::vars(n), tau, 10 + rng() % 5000, static_cast<long>(rng() % 100000));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < m.cell_count(); ++i) {
    double p;
    switch (rng() % 5) {
      case 0: p = std::pow(10.0, -300.0 * unit(rng)); break;
      case 1: p = unit(rng) * 0.01; break;
      case 2: p = 1.0; break;
      default: p = unit(rng);
    }
    m.set_at(i, 2.0 * unit(rng) - 1.0, p);
  }
  return m;
}

bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

CausalModel single_link_model() {
  InferenceMatrix m(VariableSet({"x", "y"}), 1, 100, 100);
  m.set({0, 1, 1}, 0.4, 0.01);
  return build_model(m, 0.05, 3);
}

}  // namespace

TEST(BuildModelTest, Examples) {
  InferenceMatrix ones(crd::testing::vars(3), 2, 50, 50);
  EXPECT_TRUE(build_model(ones, 0.05, 1).links().empty());

  InferenceMatrix one(crd::testing::vars(3), 2, 50, 50);
  one.set({1, 2, 2}, -0.3, 0.001);
  auto model = build_model(one, 0.05, 7);
  ASSERT_EQ(model.links().size(), 1u);
  const auto& [key, stats] = *model.links().begin();
  EXPECT_EQ(key, (LinkKey{1, 2, 2}));
  EXPECT_EQ(stats.source_run, 7);
  EXPECT_EQ(stats.sample_count, 50u);
  EXPECT_EQ(model.run_counter(), 7);
  EXPECT_EQ(model.inference(), one);
  for (auto r : model.cell_source_run()) EXPECT_EQ(r, 7);
}

TEST(BuildModelTest, ConstructorEnforcesInvariants) {
  InferenceMatrix m(crd::testing::vars(2), 1, 10, 10);
  std::vector<long> runs(m.cell_count(), 0);
  std::vector<std::size_t> counts(m.cell_count(), 10);
  EXPECT_THROW(CausalModel(m, runs, counts, {{LinkKey{0, 1, 0}, LinkStats{0.5, 0.001, 0, 10}}}, 0.05, 0), Error);
  EXPECT_THROW(CausalModel(m, runs, counts, {{LinkKey{0, 1, 1}, LinkStats{0.5, 0.2, 0, 10}}}, 0.05, 0), Error);
  EXPECT_THROW(CausalModel(m, runs, counts, {{LinkKey{0, 1, 2}, LinkStats{0.5, 0.001, 0, 10}}}, 0.05, 0), Error);
  EXPECT_THROW(CausalModel(m, runs, counts, {{LinkKey{0, 1, 1}, LinkStats{0.5, 0.001, -1, 10}}}, 0.05, 0), Error);
}

// Random matrices never yield a link with lag 0 or p above alpha.
TEST(BuildModelTest, PropertyTemporalAcyclicityAndAlpha) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    auto m = random_matrix(rng);
    const double alpha = std::uniform_real_distribution<double>(1e-4, 0.5)(rng);
    auto model = build_model(m, alpha, trial);
    for (const auto& [key, s] : model.links()) {
      ASSERT_GE(key.lag, 1);
      ASSERT_LE(s.p_value, model.alpha_link());
    }
  }
}

TEST(PersistenceTest, RoundTripThreeVariables) {
  TempDir dir;
  std::mt19937_64 rng(1);
  InferenceMatrix m(VariableSet({"a", "b", "c"}), 2, 500, 1500);
  for (std::size_t i = 0; i < m.cell_count(); ++i) m.set_at(i, 0.1 * static_cast<double>(i % 7) - 0.3, 1.0 / (i + 1));
  auto model = build_model(m, 0.3, 2);
  save(model, dir.file("m.json"));
  auto back = load(dir.file("m.json"));
  EXPECT_EQ(back, model);
  EXPECT_EQ(back.schema_version(), 1);
}

TEST(PersistenceTest, PropertyRoundTripIsBitExact) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    auto m = random_matrix(rng);
    auto model = build_model(m, std::uniform_real_distribution<double>(1e-6, 0.9)(rng), trial);
    auto back = parse_model(dump_model(model));
    ASSERT_EQ(back, model) << "trial " << trial;
    ASSERT_TRUE(bit_equal(back.inference().p_values(), model.inference().p_values()));
    ASSERT_TRUE(bit_equal(back.inference().statistics(), model.inference().statistics()));
    ASSERT_EQ(dump_model(back), dump_model(model));
  }
}

TEST(PersistenceTest, UnsupportedSchema) {
  auto text = dump_model(single_link_model());
  text.replace(text.find("\"schema_version\": 1"), 19, "\"schema_version\": 999");
  try {
    parse_model(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaVersionUnsupported);
  }
}

TEST(PersistenceTest, TruncatedAndMalformedFilesAreCorrupt) {
  TempDir dir;
  const auto text = dump_model(single_link_model());
  auto code_of = [](const std::string& t) {
    try {
      parse_model(t);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code_of(text.substr(0, text.size() / 2)), ErrorCode::CorruptFile);
  EXPECT_EQ(code_of(""), ErrorCode::CorruptFile);
  EXPECT_EQ(code_of("{\"schema_version\": 1}"), ErrorCode::CorruptFile);
  auto bad_lag = text;
  bad_lag.replace(bad_lag.find("\"lag\": 1"), 8, "\"lag\": 0");
  EXPECT_EQ(code_of(bad_lag), ErrorCode::CorruptFile);

  dir.write("t.json", text.substr(0, 40));
  EXPECT_THROW(load(dir.file("t.json")), Error);
}

TEST(ExportDotTest, EmptyModelHasIsolatedNodes) {
  InferenceMatrix m(VariableSet({"x", "y", "z"}), 1, 10, 10);
  const auto dot = export_dot(build_model(m, 0.05, 1));
  EXPECT_EQ(dot, "digraph causal_model {\n  \"x\";\n  \"y\";\n  \"z\";\n}\n");
}

TEST(ExportDotTest, EdgeLabelFormatting) {
  const auto dot = export_dot(single_link_model());
  EXPECT_NE(dot.find("\"x\" -> \"y\" [label=\"lag=1, p=0.0100\"];"), std::string::npos) << dot;
  EXPECT_EQ(format_p(0.012345), "0.0123");
  EXPECT_EQ(format_p(3.2e-9), "3.20e-09");
}

TEST(ExportDotTest, OrderingIndependentOfInsertion) {
  InferenceMatrix m(VariableSet({"x", "y"}), 2, 10, 10);
  std::vector<long> runs(m.cell_count(), 1);
  std::vector<std::size_t> counts(m.cell_count(), 10);
  std::map<LinkKey, LinkStats> a, b;
  a.emplace(LinkKey{1, 0, 2}, LinkStats{0.3, 0.02, 1, 10});
  a.emplace(LinkKey{0, 1, 1}, LinkStats{0.3, 0.01, 1, 10});
  b.emplace(LinkKey{0, 1, 1}, LinkStats{0.3, 0.01, 1, 10});
  b.emplace(LinkKey{1, 0, 2}, LinkStats{0.3, 0.02, 1, 10});
  const auto da = export_dot(CausalModel(m, runs, counts, a, 0.05, 1));
  EXPECT_EQ(da, export_dot(CausalModel(m, runs, counts, b, 0.05, 1)));
  EXPECT_LT(da.find("\"x\" -> \"y\""), da.find("\"y\" -> \"x\""));
}
