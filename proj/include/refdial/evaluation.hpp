#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "refdial/inference.hpp"

namespace refdial {

struct Score {
  std::string domain;  // empty for the overall row
  std::int64_t n = 0;
  std::int64_t correct = 0;

  double accuracy() const noexcept { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
  bool operator==(const Score&) const = default;
};

struct TokenTotals {
  std::int64_t input = 0;
  std::int64_t output = 0;
  std::int64_t cached_input = 0;
  bool operator==(const TokenTotals&) const = default;
};

struct PricingConfig {
  double price_per_input_token = 0.0;
  double price_per_output_token = 0.0;
  double price_per_cached_input_token = 0.0;
};

// Throws Error(ConfigError) on negative prices or cached > input price.
void validate(const PricingConfig& p);
PricingConfig pricing_from_json(const nlohmann::json& j);
PricingConfig load_pricing(const std::filesystem::path& path);

enum class CacheModel { None, PrefixOncePerGroup };
CacheModel parse_cache_model(std::string_view s);  // "none" | "prefix"

struct CostBreakdown {
  double total = 0.0;     // under the requested cache model
  double uncached = 0.0;  // same records with CacheModel::None
  std::int64_t cached_tokens = 0;
  double cached_savings_fraction = 0.0;
};

struct EvalReport {
  std::vector<Score> per_domain;
  Score overall;
  TokenTotals tokens;
  CostBreakdown cost;
};

// Accuracy part of the report. Domains are listed in `domain_order` first, any
// others after in sorted order. Throws UnknownExampleId / EmptyResults.
EvalReport close_qa_accuracy(std::span<const PredictionRecord> records, const std::map<std::string, Choice>& truth,
                             std::span<const std::string> domain_order = {});

// Cost of a run.
//
// None: every input token at the input price. PrefixOncePerGroup: records sharing
// a context fingerprint pay full price for the shared prefix (context_tokens) once
// and the cached price for every later occurrence; the rest of each request and
// all outputs pay normal prices. Throws Error(MissingUsage).
CostBreakdown cache_cost(std::span<const PredictionRecord> records, const PricingConfig& pricing, CacheModel model);

// Accuracy, token totals and cost together.
EvalReport evaluate(std::span<const PredictionRecord> records, const std::map<std::string, Choice>& truth,
                    const PricingConfig& pricing, CacheModel model, std::span<const std::string> domain_order = {});

// correct / n to three decimals, rounding half up, computed exactly on integers.
std::string format_accuracy(std::int64_t correct, std::int64_t n);

struct MethodReport {
  std::string method;
  EvalReport report;
};

enum class ReportFormat { Markdown, Csv, Json };
ReportFormat parse_report_format(std::string_view s);  // Error(UnsupportedFormat)

// Columns: Method, one per domain, Overall, Input Tokens, Cached Tokens, Cost.
// Domain columns follow the first report's order.
std::string render_report(std::span<const MethodReport> rows, ReportFormat format);

nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
std::vector<MethodReport> reports_from_json(const nlohmann::json& j);

}  // namespace refdial
