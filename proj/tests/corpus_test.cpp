#include "triage/corpus.hpp"

#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "triage/metrics.hpp"

namespace triage {
namespace {

using L = SuspiciousLevel;
using B = BinaryLabel;

std::string jsonl_line(const std::string& id, const std::string& label_json) {
  return R"({"id":")" + id + R"(","channel":"c","date":"2023-07-01T10:00:00Z","text":"…")" +
         (label_json.empty() ? "" : ",\"label\":" + label_json) + "}\n";
}

TEST(LoadDataset, MapsJsonlFields) {
  const auto ds = parse_dataset(jsonl_line("a1", "3"), DatasetFormat::kJsonl);
  ASSERT_EQ(ds.size(), 1u);
  const auto& p = ds[0];
  EXPECT_EQ(p.id, "a1");
  EXPECT_EQ(p.channel, "c");
  EXPECT_EQ(p.text, "…");
  EXPECT_EQ(p.label, L::kSuspicious);
  EXPECT_EQ(detail::format_rfc3339(p.timestamp), "2023-07-01T10:00:00Z");
}

TEST(LoadDataset, RejectsLabelOutsideDomain) {
  const std::string data = jsonl_line("a", "1") + jsonl_line("b", "4");
  try {
    parse_dataset(data, DatasetFormat::kJsonl);
    FAIL() << "expected an ingest error";
  } catch (const IngestError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
  }
}

TEST(LoadDataset, RejectsDuplicateIdOnItsLine) {
  const std::string data = jsonl_line("a", "1") + jsonl_line("b", "2") + jsonl_line("a", "3");
  try {
    parse_dataset(data, DatasetFormat::kJsonl);
    FAIL() << "expected an ingest error";
  } catch (const IngestError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }
}

TEST(LoadDataset, MissingOrEmptyLabelMeansUnlabeled) {
  const std::string data = jsonl_line("a", "") + jsonl_line("b", "null") + jsonl_line("c", "\"\"");
  const auto ds = parse_dataset(data, DatasetFormat::kJsonl);
  ASSERT_EQ(ds.size(), 3u);
  for (const auto& p : ds) EXPECT_FALSE(p.label.has_value());
  EXPECT_FALSE(ds.fully_labeled());
  EXPECT_THROW(ds.labels(), InvalidArgument);
}

TEST(LoadDataset, RejectsBadTimestamps) {
  for (const char* date : {"2023-13-01T00:00:00Z", "2023-02-30T00:00:00Z", "2023-07-01 10:00", "yesterday",
                           "2023-07-01T10:00:00", "2023-07-01T24:00:00Z"}) {
    const std::string line = std::string(R"({"id":"a","channel":"c","date":")") + date + R"(","text":"x"})";
    EXPECT_THROW(parse_dataset(line, DatasetFormat::kJsonl), IngestError) << date;
  }
}

TEST(LoadDataset, NormalizesOffsetsAndFractionsToUtcSeconds) {
  auto ts = detail::parse_rfc3339("2023-07-01T13:00:00.987+03:00");
  ASSERT_TRUE(ts);
  EXPECT_EQ(detail::format_rfc3339(*ts), "2023-07-01T10:00:00Z");
}

TEST(LoadDataset, RequiresStringFields) {
  EXPECT_THROW(parse_dataset(R"({"id":1,"channel":"c","date":"2023-07-01T10:00:00Z","text":"x"})", DatasetFormat::kJsonl),
               IngestError);
  EXPECT_THROW(parse_dataset(R"({"id":"a","date":"2023-07-01T10:00:00Z","text":"x"})", DatasetFormat::kJsonl),
               IngestError);
  EXPECT_THROW(parse_dataset("{not json", DatasetFormat::kJsonl), IngestError);
}

TEST(LoadDataset, EmptyTextIsAccepted) {
  const auto ds = parse_dataset(R"({"id":"a","channel":"c","date":"2023-07-01T10:00:00Z","text":""})",
                                DatasetFormat::kJsonl);
  EXPECT_EQ(ds[0].text, "");
}

TEST(LoadDataset, CsvWithQuotedMultilineText) {
  const std::string csv =
      "id,channel,date,text,label\r\n"
      "a,c1,2023-07-01T10:00:00Z,\"Hello, \"\"world\"\"\nsecond line\",2\r\n"
      "b,c2,2023-07-02T11:00:00Z,plain,\r\n";
  const auto ds = parse_dataset(csv, DatasetFormat::kCsv);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].text, "Hello, \"world\"\nsecond line");
  EXPECT_EQ(ds[0].label, L::kDoubtful);
  EXPECT_FALSE(ds[1].label);
}

TEST(LoadDataset, CsvErrorsNameTheRecordLine) {
  const std::string csv =
      "id,channel,date,text,label\n"
      "a,c,2023-07-01T10:00:00Z,\"two\nlines\",1\n"
      "b,c,2023-07-01T10:00:00Z,x,7\n";
  try {
    parse_dataset(csv, DatasetFormat::kCsv);
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  EXPECT_THROW(parse_dataset("id,channel,text\n", DatasetFormat::kCsv), IngestError);
}

TEST(LoadDataset, UnreadableFileIsAnIoError) {
  EXPECT_THROW(load_dataset("/nonexistent/posts.jsonl"), IoError);
}

TEST(LoadDataset, RoundTripsThroughBothFormats) {
  fixtures::TempDir dir;
  auto posts = fixtures::synthetic_posts(50).posts();
  posts[3].label.reset();
  posts[4].text = "quote \" comma , newline\n tab\t emoji 🙂";
  posts[5].text = "";
  const Dataset original(posts);
  for (auto format : {DatasetFormat::kJsonl, DatasetFormat::kCsv}) {
    const auto path = dir.file(format == DatasetFormat::kJsonl ? "d.jsonl" : "d.csv");
    write_dataset(original, path, format);
    EXPECT_EQ(load_dataset(path), original);
  }
}

TEST(Binarize, FixedMapping) {
  const std::vector<L> in = {L::kNotSuspicious, L::kDoubtful, L::kSuspicious, L::kNotSuspicious};
  EXPECT_EQ(binarize(in), (std::vector<B>{B::kNotSuspicious, B::kSuspicious, B::kSuspicious, B::kNotSuspicious}));
  EXPECT_TRUE(binarize(std::vector<L>{}).empty());
  const std::vector<L> threes(3, L::kSuspicious);
  EXPECT_EQ(binarize(threes), std::vector<B>(3, B::kSuspicious));
}

TEST(Binarize, ElementwiseAndLengthPreserving) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<L> x(gen() % 20);
    for (auto& v : x) v = static_cast<L>(1 + gen() % 3);
    const auto b = binarize(x);
    ASSERT_EQ(b.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(b[i], binarize(x[i]));
  }
}

TEST(MajorityBaseline, ClearMajorityAndTieBreak) {
  EXPECT_EQ(majority_baseline(std::vector<L>{L::kNotSuspicious, L::kNotSuspicious, L::kDoubtful}).label(),
            L::kNotSuspicious);
  EXPECT_EQ(majority_baseline(std::vector<L>{L::kNotSuspicious, L::kDoubtful}).label(), L::kNotSuspicious);
  EXPECT_EQ(majority_baseline(std::vector<L>{L::kSuspicious, L::kDoubtful}).label(), L::kDoubtful);
  EXPECT_THROW(majority_baseline(std::vector<L>{}), InvalidArgument);
}

TEST(MajorityBaseline, PermutationInvariant) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<L> x(1 + gen() % 15);
    for (auto& v : x) v = static_cast<L>(1 + gen() % 3);
    const auto expected = majority_baseline(x).label();
    std::shuffle(x.begin(), x.end(), gen);
    EXPECT_EQ(majority_baseline(x).label(), expected);
  }
}

// Predicting the majority class m everywhere: F1_m = 2 n_m / (n_m + n), others 0.
TEST(MajorityBaseline, MacroF1MatchesClosedForm) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<L> y(1 + gen() % 40);
    for (auto& v : y) v = static_cast<L>(1 + gen() % 3);
    const auto predictor = majority_baseline(y);
    const auto truth = to_ints(y);
    const std::vector<int> pred(y.size(), to_int(predictor.label()));
    const double n_m = static_cast<double>(std::count(truth.begin(), truth.end(), to_int(predictor.label())));
    const double n = static_cast<double>(y.size());
    const double closed_form = (1.0 / 3.0) * (2.0 * n_m / (n_m + n));
    EXPECT_NEAR(macro_f1(truth, pred, level_space()), closed_form, 1e-12);
    EXPECT_NEAR(oracle::macro_f1(truth, pred, level_space()), closed_form, 1e-12);
  }
}

}  // namespace
}  // namespace triage
