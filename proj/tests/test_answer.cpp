#include "refdial/answer.hpp"

#include <gtest/gtest.h>

#include <random>
#include <regex>

using namespace refdial;

namespace {

// Regex formulation of the same rules, used as an independent reference.
Prediction reference_extract(const std::string& text) {
  static const std::regex marked(R"([Ff][Ii][Nn][Aa][Ll] [Aa][Nn][Ss][Ww][Ee][Rr]:\s*([A-D])(?![A-Za-z0-9]))");
  static const std::regex bare(R"((?:^|[^A-Za-z0-9])([A-D])(?![A-Za-z0-9]))");
  for (const auto* re : {&marked, &bare}) {
    Prediction last;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), *re); it != std::sregex_iterator(); ++it) {
      last = static_cast<Choice>((*it)[1].str()[0] - 'A');
    }
    if (last) return last;
  }
  return std::nullopt;
}

std::string random_text(std::mt19937& rng) {
  static const std::vector<std::string> tokens = {
      "A", "B", "C", "D", "E", "a", "d", "x", "1", " ", "  ", "\n", ".", ",", ":", "(", ")", "-", "*",
      "Final Answer:", "final answer: ", "FINAL ANSWER:\n", "Answer", "AB", "Dog", "Option", "\t"};
  std::string s;
  const std::size_t n = rng() % 14;
  for (std::size_t i = 0; i < n; ++i) s += tokens[rng() % tokens.size()];
  return s;
}

}  // namespace

struct ParseCase {
  const char* text;
  Prediction expected;
};

class ExtractAnswer : public ::testing::TestWithParam<ParseCase> {};

TEST_P(ExtractAnswer, Matches) {
  EXPECT_EQ(extract_answer(GetParam().text), GetParam().expected) << GetParam().text;
}

INSTANTIATE_TEST_SUITE_P(
    Cases, ExtractAnswer,
    ::testing::Values(ParseCase{"Final Answer: B", Choice::B}, ParseCase{"final answer: c", std::nullopt},
                      ParseCase{"FINAL ANSWER:D", Choice::D}, ParseCase{"Final Answer:\n\n  A.", Choice::A},
                      ParseCase{"I think C. Final Answer: A", Choice::A},
                      ParseCase{"Final Answer: A ... wait, Final Answer: D", Choice::D},
                      ParseCase{"Final Answer: Apple", std::nullopt}, ParseCase{"The answer is (B).", Choice::B},
                      ParseCase{"A or maybe C", Choice::C}, ParseCase{"", std::nullopt},
                      ParseCase{"No letter here", std::nullopt}, ParseCase{"Answer: E", std::nullopt},
                      ParseCase{"CD", std::nullopt}, ParseCase{"B2", std::nullopt},
                      ParseCase{"Final Answer: B) because", Choice::B},
                      ParseCase{"Final Answer: **C**", Choice::C}));

TEST(ExtractAnswerProperty, AgreesWithRegexReference) {
  std::mt19937 rng(11);
  for (int i = 0; i < 20000; ++i) {
    const std::string text = random_text(rng);
    ASSERT_EQ(extract_answer(text), reference_extract(text)) << "input: [" << text << "]";
  }
}

TEST(ExtractAnswerProperty, TrailingMarkerWins) {
  std::mt19937 rng(5);
  for (int i = 0; i < 5000; ++i) {
    const Choice c = static_cast<Choice>(rng() % 4);
    const std::string text = random_text(rng) + "\nFinal Answer: " + to_char(c);
    ASSERT_EQ(extract_answer(text), c) << text;
  }
}
