#include "triage/bundle.hpp"

#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"

namespace triage {
namespace {

std::string random_text(std::mt19937_64& gen, const std::vector<std::string>& pool) {
  std::string s;
  const auto words = gen() % 20;
  for (std::size_t w = 0; w < words; ++w) {
    s += pool[gen() % pool.size()];
    s += (gen() % 4 == 0) ? "!! " : " ";
  }
  return s;
}

class BundleRoundTrip : public ::testing::TestWithParam<EvalMode> {};

TEST_P(BundleRoundTrip, PredictionsAreBitIdenticalAfterReload) {
  const auto data = fixtures::synthetic_posts(200, 17);
  const auto bundle = train_bundle(data, GetParam(), 10000, TrainOptions{});
  fixtures::TempDir dir;
  save_bundle(bundle, dir.file("m.json"));
  const auto loaded = load_bundle(dir.file("m.json"));

  EXPECT_EQ(loaded.vectorizer, bundle.vectorizer);
  EXPECT_EQ(loaded.provenance, bundle.provenance);
  EXPECT_EQ(loaded.mode, bundle.mode);
  EXPECT_EQ(serialize_bundle(loaded), serialize_bundle(bundle));

  std::vector<std::string> pool = bundle.vectorizer.vocabulary();
  pool.push_back("невідоме");
  pool.push_back("unseen");
  std::mt19937_64 gen(1);
  for (int i = 0; i < 1000; ++i) {
    const auto text = random_text(gen, pool);
    const auto a = bundle.predict_proba(text);
    const auto b = loaded.predict_proba(text);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(std::bit_cast<std::uint64_t>(a[k]), std::bit_cast<std::uint64_t>(b[k]));
    ASSERT_EQ(bundle.predict(text), loaded.predict(text));
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, BundleRoundTrip, ::testing::Values(EvalMode::kMulticlass, EvalMode::kBinary));

TEST(Bundle, UnknownFormatVersionIsRejected) {
  const auto bundle = train_bundle(fixtures::synthetic_posts(40), EvalMode::kMulticlass, 100, TrainOptions{});
  auto j = bundle_to_json(bundle);
  for (int v : {0, 2, 99}) {
    j["format_version"] = v;
    EXPECT_THROW(bundle_from_json(j), FormatError) << v;
  }
  j.erase("format_version");
  EXPECT_THROW(bundle_from_json(j), FormatError);
  EXPECT_THROW(parse_bundle("not json"), FormatError);
}

TEST(Bundle, BinaryTrainingCollapsesLevels) {
  const auto bundle = train_bundle(fixtures::synthetic_posts(60), EvalMode::kBinary, 100, TrainOptions{});
  EXPECT_EQ(bundle.classifier.classes(), (std::vector<int>{0, 1}));
  const auto multi = train_bundle(fixtures::synthetic_posts(60), EvalMode::kMulticlass, 100, TrainOptions{});
  EXPECT_EQ(multi.classifier.classes(), (std::vector<int>{1, 2, 3}));
}

TEST(Bundle, DigestIsStable) {
  EXPECT_EQ(hex_digest(""), "fnv1a64:cbf29ce484222325");
  EXPECT_EQ(hex_digest("a"), "fnv1a64:af63dc4c8601ec8c");
  const auto bundle = train_bundle(fixtures::synthetic_posts(40), EvalMode::kMulticlass, 100, TrainOptions{});
  EXPECT_EQ(bundle_digest(bundle), bundle_digest(parse_bundle(serialize_bundle(bundle))));
}

}  // namespace
}  // namespace triage
