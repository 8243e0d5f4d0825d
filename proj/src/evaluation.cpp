#include "refdial/evaluation.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "refdial/error.hpp"
#include "refdial/util.hpp"

using nlohmann::json;
using nlohmann::ordered_json;

namespace refdial {

void validate(const PricingConfig& p) {
  if (p.price_per_input_token < 0 || p.price_per_output_token < 0 || p.price_per_cached_input_token < 0) {
    throw Error(ErrorCode::ConfigError, "prices must be non-negative");
  }
  if (p.price_per_cached_input_token > p.price_per_input_token) {
    throw Error(ErrorCode::ConfigError, "cached input price exceeds input price");
  }
}

PricingConfig pricing_from_json(const json& j) {
  PricingConfig p;
  try {
    p.price_per_input_token = j.at("price_per_input_token").get<double>();
    p.price_per_output_token = j.at("price_per_output_token").get<double>();
    p.price_per_cached_input_token = j.value("price_per_cached_input_token", p.price_per_input_token);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("pricing: ") + e.what());
  }
  validate(p);
  return p;
}

PricingConfig load_pricing(const std::filesystem::path& path) {
  try {
    return pricing_from_json(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

CacheModel parse_cache_model(std::string_view s) {
  if (s == "none") return CacheModel::None;
  if (s == "prefix" || s == "prefix-once-per-group") return CacheModel::PrefixOncePerGroup;
  throw Error(ErrorCode::ConfigError, "unknown cache model '" + std::string(s) + "'");
}

EvalReport close_qa_accuracy(std::span<const PredictionRecord> records, const std::map<std::string, Choice>& truth,
                             std::span<const std::string> domain_order) {
  if (records.empty()) throw Error(ErrorCode::EmptyResults, "no prediction records");
  std::map<std::string, Score> by_domain;
  for (const PredictionRecord& r : records) {
    auto it = truth.find(r.example_id);
    if (it == truth.end()) throw Error(ErrorCode::UnknownExampleId, r.example_id);
    Score& s = by_domain[r.domain];
    s.domain = r.domain;
    ++s.n;
    if (r.predicted == it->second) ++s.correct;
  }

  EvalReport report;
  for (const std::string& d : domain_order) {
    if (auto it = by_domain.find(d); it != by_domain.end()) {
      report.per_domain.push_back(it->second);
      by_domain.erase(it);
    }
  }
  for (auto& [d, s] : by_domain) report.per_domain.push_back(s);
  for (const Score& s : report.per_domain) {
    report.overall.n += s.n;
    report.overall.correct += s.correct;
  }
  return report;
}

CostBreakdown cache_cost(std::span<const PredictionRecord> records, const PricingConfig& pricing, CacheModel model) {
  validate(pricing);
  CostBreakdown cost;
  for (const PredictionRecord& r : records) {
    if (!r.usage) throw Error(ErrorCode::MissingUsage, r.example_id);
    cost.uncached += static_cast<double>(r.usage->input_tokens) * pricing.price_per_input_token +
                     static_cast<double>(r.usage->output_tokens) * pricing.price_per_output_token;
  }
  if (model == CacheModel::None) {
    cost.total = cost.uncached;
    return cost;
  }

  std::unordered_map<std::string, bool> prefix_paid;
  for (const PredictionRecord& r : records) {
    const std::int64_t prefix = std::clamp<std::int64_t>(r.context_tokens, 0, r.usage->input_tokens);
    const std::int64_t rest = r.usage->input_tokens - prefix;
    bool& paid = prefix_paid[r.context_fingerprint];
    if (prefix > 0 && paid) {
      cost.total += static_cast<double>(prefix) * pricing.price_per_cached_input_token;
      cost.cached_tokens += prefix;
    } else {
      cost.total += static_cast<double>(prefix) * pricing.price_per_input_token;
      if (prefix > 0) paid = true;
    }
    cost.total += static_cast<double>(rest) * pricing.price_per_input_token +
                  static_cast<double>(r.usage->output_tokens) * pricing.price_per_output_token;
  }
  cost.cached_savings_fraction = cost.uncached > 0 ? 1.0 - cost.total / cost.uncached : 0.0;
  return cost;
}

EvalReport evaluate(std::span<const PredictionRecord> records, const std::map<std::string, Choice>& truth,
                    const PricingConfig& pricing, CacheModel model, std::span<const std::string> domain_order) {
  EvalReport report = close_qa_accuracy(records, truth, domain_order);
  report.cost = cache_cost(records, pricing, model);
  for (const PredictionRecord& r : records) {
    report.tokens.input += r.usage->input_tokens;
    report.tokens.output += r.usage->output_tokens;
    report.tokens.cached_input += r.usage->cached_input_tokens;
  }
  if (model == CacheModel::PrefixOncePerGroup) report.tokens.cached_input = report.cost.cached_tokens;
  return report;
}

std::string format_accuracy(std::int64_t correct, std::int64_t n) {
  if (n <= 0) return "0.000";
  const std::int64_t thousandths = (2000 * correct + n) / (2 * n);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%" PRId64 ".%03" PRId64, thousandths / 1000, thousandths % 1000);
  return buf;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw Error(ErrorCode::UnsupportedFormat, std::string(s));
}

namespace {

std::string format_cost(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> domain_columns(std::span<const MethodReport> rows) {
  std::vector<std::string> cols;
  std::set<std::string> seen;
  for (const MethodReport& m : rows) {
    for (const Score& s : m.report.per_domain) {
      if (seen.insert(s.domain).second) cols.push_back(s.domain);
    }
  }
  return cols;
}

std::vector<std::string> row_cells(const MethodReport& m, const std::vector<std::string>& domains) {
  std::vector<std::string> cells{m.method};
  for (const std::string& d : domains) {
    auto it = std::find_if(m.report.per_domain.begin(), m.report.per_domain.end(),
                           [&](const Score& s) { return s.domain == d; });
    cells.push_back(it == m.report.per_domain.end() ? "-" : format_accuracy(it->correct, it->n));
  }
  cells.push_back(format_accuracy(m.report.overall.correct, m.report.overall.n));
  cells.push_back(std::to_string(m.report.tokens.input));
  cells.push_back(std::to_string(m.report.tokens.cached_input));
  cells.push_back(format_cost(m.report.cost.total));
  return cells;
}

ordered_json score_to_json(const Score& s, bool with_domain) {
  ordered_json j;
  if (with_domain) j["domain"] = s.domain;
  j["n"] = s.n;
  j["correct"] = s.correct;
  j["accuracy"] = s.accuracy();
  return j;
}

Score score_from_json(const json& j) {
  Score s;
  s.domain = j.value("domain", "");
  s.n = j.at("n").get<std::int64_t>();
  s.correct = j.at("correct").get<std::int64_t>();
  return s;
}

}  // namespace

std::string render_report(std::span<const MethodReport> rows, ReportFormat format) {
  if (format == ReportFormat::Json) {
    ordered_json arr = ordered_json::array();
    for (const MethodReport& m : rows) {
      ordered_json j;
      j["method"] = m.method;
      j["report"] = report_to_json(m.report);
      arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
  }

  const std::vector<std::string> domains = domain_columns(rows);
  std::vector<std::string> header{"Method"};
  header.insert(header.end(), domains.begin(), domains.end());
  for (const char* c : {"Overall", "Input Tokens", "Cached Tokens", "Cost"}) header.emplace_back(c);

  std::string out;
  if (format == ReportFormat::Csv) {
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
      out += '\n';
    };
    line(header);
    for (const MethodReport& m : rows) line(row_cells(m, domains));
    return out;
  }

  auto line = [&out](const std::vector<std::string>& cells) {
    out += '|';
    for (const std::string& c : cells) out += ' ' + c + " |";
    out += '\n';
  };
  line(header);
  out += '|';
  for (std::size_t i = 0; i < header.size(); ++i) out += i == 0 ? "---|" : "---:|";
  out += '\n';
  for (const MethodReport& m : rows) line(row_cells(m, domains));
  return out;
}

ordered_json report_to_json(const EvalReport& r) {
  ordered_json j;
  ordered_json per_domain = ordered_json::array();
  for (const Score& s : r.per_domain) per_domain.push_back(score_to_json(s, true));
  j["per_domain"] = std::move(per_domain);
  j["overall"] = score_to_json(r.overall, false);
  j["tokens"] = {{"input", r.tokens.input}, {"output", r.tokens.output}, {"cached_input", r.tokens.cached_input}};
  ordered_json cost;
  cost["total"] = r.cost.total;
  cost["uncached"] = r.cost.uncached;
  cost["cached_tokens"] = r.cost.cached_tokens;
  cost["cached_savings_fraction"] = r.cost.cached_savings_fraction;
  j["cost"] = std::move(cost);
  return j;
}

EvalReport report_from_json(const json& j) {
  try {
    EvalReport r;
    for (const json& s : j.at("per_domain")) r.per_domain.push_back(score_from_json(s));
    r.overall = score_from_json(j.at("overall"));
    const json& t = j.at("tokens");
    r.tokens = {t.at("input").get<std::int64_t>(), t.at("output").get<std::int64_t>(),
                t.at("cached_input").get<std::int64_t>()};
    const json& c = j.at("cost");
    r.cost.total = c.at("total").get<double>();
    r.cost.uncached = c.at("uncached").get<double>();
    r.cost.cached_tokens = c.at("cached_tokens").get<std::int64_t>();
    r.cost.cached_savings_fraction = c.at("cached_savings_fraction").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("report: ") + e.what());
  }
}

std::vector<MethodReport> reports_from_json(const json& j) {
  std::vector<MethodReport> out;
  try {
    for (const json& m : j) out.push_back({m.at("method").get<std::string>(), report_from_json(m.at("report"))});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("report: ") + e.what());
  }
  return out;
}

}  // namespace refdial
