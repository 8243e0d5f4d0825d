#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "refdial/backend.hpp"
#include "refdial/corpus.hpp"

namespace refdial {

// Lowercase, trim, collapse internal whitespace, strip trailing punctuation.
std::string normalize_label(std::string_view raw);

// Ordered set of question-type labels, unique after normalization.
class Taxonomy {
 public:
  // Throws Error(InvalidTaxonomy) on empty or colliding labels.
  explicit Taxonomy(std::vector<std::string> labels, std::map<std::string, std::string> categories = {});

  static Taxonomy from_json(const nlohmann::json& j);
  static Taxonomy load(const std::filesystem::path& path);

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  // Canonical label whose normalized form equals normalize_label(raw).
  std::optional<std::string> match(std::string_view raw) const;
  std::optional<std::string> category(const std::string& label) const;
  bool contains(const std::string& label) const;

 private:
  std::vector<std::string> labels_;
  std::vector<std::string> normalized_;
  std::map<std::string, std::string> categories_;
};

struct TypedExample {
  Example example;
  std::string qtype;
};

// Resolution order: exact normalized match, then a unique label occurring in the
// normalized text (labels contained in another matching label are dropped), then a
// 1-based index. Throws Error(UnresolvableType).
std::string parse_type_label(std::string_view raw, const Taxonomy& taxonomy);

inline constexpr std::string_view kDefaultClassificationTemplate =
    "Classify the following video question into one of these question types:\n"
    "{labels}\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Select the most appropriate type. Reply with a single line containing only the type label.";

ChatRequest make_classification_request(const Example& example, const Taxonomy& taxonomy,
                                        std::string_view prompt_template = kDefaultClassificationTemplate);

// Uses example.question_type when it names a taxonomy label (no backend call);
// otherwise asks the backend and resolves the reply with parse_type_label.
TypedExample classify_question(const Example& example, const Taxonomy& taxonomy, ChatBackend& backend,
                               std::string_view prompt_template = kDefaultClassificationTemplate);

// id -> label sidecar. Stored as a JSON object with sorted keys.
class ClassificationCache {
 public:
  static ClassificationCache load(const std::filesystem::path& path);  // missing file -> empty
  void save(const std::filesystem::path& path) const;

  std::optional<std::string> get(const std::string& id) const;
  void put(const std::string& id, const std::string& label) { entries_[id] = label; }
  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace refdial
