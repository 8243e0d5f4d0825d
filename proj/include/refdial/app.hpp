#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refdial/evaluation.hpp"
#include "refdial/inference.hpp"
#include "refdial/openai_backend.hpp"

namespace refdial {

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitClassification = 2,
  kExitMissingPrerequisite = 3,
  kExitBackend = 4,
};

struct BackendSpec {
  enum class Kind { OpenAi, Scripted } kind = Kind::OpenAi;
  BackendConfig http;
  std::filesystem::path script;  // Scripted only
};

struct ReportInput {
  std::string method;
  std::filesystem::path results;
};

// One run configuration file. Relative paths resolve against the file's directory.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path taxonomy;
  std::filesystem::path types;  // classification sidecar
  std::filesystem::path dialogue_dir;
  std::filesystem::path results;
  std::filesystem::path report;
  std::optional<std::filesystem::path> pricing;
  std::optional<std::filesystem::path> system_prompts;

  Strategy strategy;
  MissingDialogueFallback fallback = MissingDialogueFallback::ZeroShot;
  std::string classification_template{kDefaultClassificationTemplate};

  BackendSpec solver;
  BackendSpec classifier;
  std::size_t concurrency = 1;

  ReportFormat report_format = ReportFormat::Markdown;
  CacheModel cache_model = CacheModel::PrefixOncePerGroup;
  std::vector<ReportInput> report_inputs;  // empty -> the single `results` file

  bool force = false;
};

// Throws Error(ConfigError).
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

using BackendFactory = std::function<std::unique_ptr<ChatBackend>(const BackendSpec&)>;
std::unique_ptr<ChatBackend> make_backend(const BackendSpec& spec);

// Pipeline stages. Each returns an ExitCode and reports on out/err; none throws.
int cmd_classify(const RunConfig& cfg, ChatBackend& classifier, std::ostream& out, std::ostream& err);
int cmd_build_dialogues(const RunConfig& cfg, ChatBackend& solver, std::ostream& out, std::ostream& err);
int cmd_infer(const RunConfig& cfg, ChatBackend& solver, std::ostream& out, std::ostream& err);
int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err);

// Entry point behind the `refdial` executable. args excludes the program name.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err,
            const BackendFactory& factory = make_backend);

}  // namespace refdial
