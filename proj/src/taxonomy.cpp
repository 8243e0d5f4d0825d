#include "refdial/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "refdial/error.hpp"
#include "refdial/util.hpp"

namespace refdial {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

std::string normalize_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  while (!out.empty() && (is_punct(out.back()) || is_space(out.back()))) out.pop_back();
  return out;
}

Taxonomy::Taxonomy(std::vector<std::string> labels, std::map<std::string, std::string> categories)
    : labels_(std::move(labels)), categories_(std::move(categories)) {
  if (labels_.empty()) throw Error(ErrorCode::InvalidTaxonomy, "no labels");
  std::set<std::string> seen;
  for (const std::string& l : labels_) {
    std::string n = normalize_label(l);
    if (n.empty()) throw Error(ErrorCode::InvalidTaxonomy, "empty label");
    if (!seen.insert(n).second) throw Error(ErrorCode::InvalidTaxonomy, "duplicate label after normalization: " + l);
    normalized_.push_back(std::move(n));
  }
  for (const auto& [label, category] : categories_) {
    if (!contains(label)) throw Error(ErrorCode::InvalidTaxonomy, "category given for unknown label: " + label);
  }
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
  try {
    auto labels = j.at("labels").get<std::vector<std::string>>();
    std::map<std::string, std::string> categories;
    if (auto it = j.find("categories"); it != j.end() && !it->is_null()) {
      categories = it->get<std::map<std::string, std::string>>();
    }
    return Taxonomy(std::move(labels), std::move(categories));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidTaxonomy, e.what());
  }
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidTaxonomy, path.string() + ": " + e.what());
  }
}

std::optional<std::string> Taxonomy::match(std::string_view raw) const {
  const std::string n = normalize_label(raw);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (normalized_[i] == n) return labels_[i];
  }
  return std::nullopt;
}

std::optional<std::string> Taxonomy::category(const std::string& label) const {
  if (auto it = categories_.find(label); it != categories_.end()) return it->second;
  return std::nullopt;
}

bool Taxonomy::contains(const std::string& label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::string parse_type_label(std::string_view raw, const Taxonomy& taxonomy) {
  const std::string text = normalize_label(raw);
  if (text.empty()) throw Error(ErrorCode::UnresolvableType, std::string(raw));

  if (auto exact = taxonomy.match(text)) return *exact;

  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    if (text.find(normalize_label(taxonomy.labels()[i])) != std::string::npos) hits.push_back(i);
  }
  // "object localization" inside a matching "object spatial localization" is not a rival.
  std::vector<std::size_t> maximal;
  for (std::size_t i : hits) {
    const std::string ni = normalize_label(taxonomy.labels()[i]);
    const bool subsumed = std::any_of(hits.begin(), hits.end(), [&](std::size_t j) {
      if (j == i) return false;
      const std::string nj = normalize_label(taxonomy.labels()[j]);
      return nj.size() > ni.size() && nj.find(ni) != std::string::npos;
    });
    if (!subsumed) maximal.push_back(i);
  }
  if (maximal.size() == 1) return taxonomy.labels()[maximal.front()];
  if (maximal.size() > 1) throw Error(ErrorCode::UnresolvableType, "ambiguous: " + std::string(raw));

  std::size_t index = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), index);
  if (ec == std::errc{} && ptr == text.data() + text.size() && index >= 1 && index <= taxonomy.size()) {
    return taxonomy.labels()[index - 1];
  }
  throw Error(ErrorCode::UnresolvableType, std::string(raw));
}

ChatRequest make_classification_request(const Example& example, const Taxonomy& taxonomy,
                                        std::string_view prompt_template) {
  std::string labels;
  for (std::size_t i = 0; i < taxonomy.size(); ++i) {
    if (i) labels += '\n';
    labels += std::to_string(i + 1) + ". " + taxonomy.labels()[i];
  }
  std::string prompt(prompt_template);
  replace_all(prompt, "{labels}", labels);
  replace_all(prompt, "{question}", example.question);

  ChatRequest req;
  req.messages.push_back({Role::User, {TextPart{std::move(prompt)}}});
  return req;
}

TypedExample classify_question(const Example& example, const Taxonomy& taxonomy, ChatBackend& backend,
                               std::string_view prompt_template) {
  if (example.question_type) {
    if (auto label = taxonomy.match(*example.question_type)) return {example, *label};
  }
  const Completion reply = backend.complete(make_classification_request(example, taxonomy, prompt_template));
  return {example, parse_type_label(reply.text, taxonomy)};
}

ClassificationCache ClassificationCache::load(const std::filesystem::path& path) {
  ClassificationCache cache;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return cache;
  try {
    cache.entries_ = nlohmann::json::parse(read_text_file(path)).get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, "classification sidecar " + path.string() + ": " + e.what());
  }
  return cache;
}

void ClassificationCache::save(const std::filesystem::path& path) const {
  write_text_file_atomic(path, nlohmann::json(entries_).dump(2) + "\n");
}

std::optional<std::string> ClassificationCache::get(const std::string& id) const {
  if (auto it = entries_.find(id); it != entries_.end()) return it->second;
  return std::nullopt;
}

}  // namespace refdial
