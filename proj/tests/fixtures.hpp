#ifndef TRIAGE_TESTS_FIXTURES_HPP
#define TRIAGE_TESTS_FIXTURES_HPP

#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "triage/corpus.hpp"

namespace fixtures {

// Synthetic labeled posts with an imbalanced 3-level distribution (about
// 60/25/15). Each level has its own cue words; shared filler and a little
// label noise keep the task from being trivially separable.
inline triage::Dataset synthetic_posts(std::size_t n, std::uint64_t seed = 7) {
  using triage::SuspiciousLevel;
  static const std::vector<std::string> filler = {
      "новини", "сьогодні", "україна", "місто", "люди", "report", "update", "канал", "влада", "фото",
      "відео", "зранку", "повідомили", "джерела", "заява", "news", "region", "2023", "тиждень", "події"};
  static const std::vector<std::vector<std::string>> cues = {
      {"ремонт", "школа", "погода", "фестиваль", "лікарня", "мост", "движение", "ремонт"},
      {"ймовірно", "чутки", "кажуть", "невідомо", "insider", "сумнівно", "нібито"},
      {"зрада", "паніка", "фейк", "змова", "терміново", "shocking", "капітуляція", "зрадники"}};
  std::mt19937_64 gen(seed);
  auto pick = [&](const std::vector<std::string>& v) { return v[gen() % v.size()]; };

  std::vector<triage::Post> posts;
  const auto t0 = std::chrono::sys_days{std::chrono::year{2023} / 7 / 1};
  for (std::size_t i = 0; i < n; ++i) {
    const auto roll = gen() % 100;
    const int level = roll < 60 ? 1 : roll < 85 ? 2 : 3;
    // 10% of posts draw cues from a random level.
    const int cue_level = (gen() % 10 == 0) ? static_cast<int>(gen() % 3) + 1 : level;
    std::string text;
    const auto words = 6 + gen() % 10;
    for (std::size_t w = 0; w < words; ++w) {
      if (!text.empty()) text += (gen() % 5 == 0) ? ", " : " ";
      text += (gen() % 3 == 0) ? pick(cues[cue_level - 1]) : pick(filler);
    }
    if (gen() % 4 == 0) text += "!!";
    triage::Post p;
    p.id = "p" + std::to_string(i);
    p.channel = "channel_" + std::to_string(gen() % 56);
    p.timestamp = t0 + std::chrono::seconds(static_cast<long long>(i) * 3607);
    p.text = text;
    p.label = static_cast<SuspiciousLevel>(level);
    posts.push_back(std::move(p));
  }
  return triage::Dataset(std::move(posts));
}

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (;;) {
      path_ = base / ("triage-test-" + std::to_string(rd()));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures

#endif  // TRIAGE_TESTS_FIXTURES_HPP
