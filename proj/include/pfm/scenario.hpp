#pragma once

#include "pfm/simnet.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pfm {

/// One whitespace-separated token; `quoted` when any part came from "...",
/// `option` for key=value tokens whose '=' precedes any quoted part.
struct Token {
  std::string text;
  bool quoted = false;
  bool option = false;
};

struct Directive {
  int line = 0;
  std::string source;
  std::vector<Token> tokens;
  /// Statements of a `body Type.method {` block.
  std::vector<Directive> block;
};

struct Scenario {
  std::string origin;
  std::filesystem::path base_dir;
  std::vector<Directive> directives;
};

/// Throws ScenarioSyntax with "origin:line: message".
Scenario parse_scenario(std::string_view text, std::string origin = "<memory>", std::filesystem::path base_dir = ".");
Scenario load_scenario(const std::filesystem::path& path);

struct ScenarioOptions {
  bool trace = false;
  bool regen_golden = false;
};

struct ReportEntry {
  int line = 0;
  std::string text;
  bool passed = false;
  std::string detail;
  std::vector<std::string> trace;
};

struct Report {
  std::vector<ReportEntry> entries;
  std::vector<std::string> trace;

  bool ok() const;
  std::size_t failures() const;
  std::string render(bool with_trace) const;
};

/// Executes scenario directives against one fresh simulator.
class ScenarioRunner {
 public:
  explicit ScenarioRunner(ScenarioOptions options = {});
  ~ScenarioRunner();
  ScenarioRunner(const ScenarioRunner&) = delete;
  ScenarioRunner& operator=(const ScenarioRunner&) = delete;

  /// Expectation outcomes are report entries; only malformed directives throw.
  const Report& run(const Scenario& scenario);

  Simulator& sim();
  const Report& report() const;
  /// First node declared, if any.
  std::optional<NodeId> first_node() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "tag=value, ..." over the ten dimension tags; unspecified dimensions are "#none".
ContextValues parse_context_spec(std::string_view spec);

/// Match trace for `ctx` on `node`, ending in the winner line or "no applicable rule".
std::string explain(const Engine& engine, PolicyKind kind, const ContextValues& ctx);

}  // namespace pfm
