// Scenario runner, match explainer and rule-tree dumper.

#include "pfm/error.hpp"
#include "pfm/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

pfm::PolicyKind kind_or_throw(const std::string& text) {
  auto k = pfm::policy_kind_from(text);
  if (!k) throw CLI::ValidationError("--kind", "expected transmission, encoding, placement or access");
  return *k;
}

pfm::Node& pick_node(pfm::ScenarioRunner& runner, const std::string& name) {
  if (!name.empty()) return runner.sim().node(std::string_view(name));
  auto first = runner.first_node();
  if (!first) pfm::fail(pfm::ErrorCode::UnknownNode, "the rules file declares no node");
  return runner.sim().node(*first);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy-driven middleware simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  bool trace = false;
  bool regen = false;
  auto* run = app.add_subcommand("run", "Execute a scenario and report each expectation");
  run->add_option("file", scenario_path, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_flag("--trace", trace, "Print every policy decision");
  run->add_flag("--regen-golden", regen, "Rewrite golden wire files instead of comparing");

  std::string rules_path, kind_text, context, node_name;
  auto* explain = app.add_subcommand("explain", "Show how a context is matched against the rules");
  explain->add_option("--rules", rules_path, "Scenario file holding the rules")->required()->check(CLI::ExistingFile);
  explain->add_option("--kind", kind_text, "Policy kind")->required();
  explain->add_option("--context", context, "tag=value, ...")->required();
  explain->add_option("--node", node_name, "Node whose engine is consulted (default: first)");

  auto* dump = app.add_subcommand("dump", "Print the rule index tree");
  dump->add_option("--rules", rules_path, "Scenario file holding the rules")->required()->check(CLI::ExistingFile);
  dump->add_option("--kind", kind_text, "Policy kind")->required();
  dump->add_option("--node", node_name, "Node whose engine is printed (default: first)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto scenario = pfm::load_scenario(scenario_path);
      pfm::ScenarioRunner runner({trace, regen});
      const auto& report = runner.run(scenario);
      std::cout << report.render(trace);
      return report.ok() ? 0 : 1;
    }
    auto kind = kind_or_throw(kind_text);
    auto scenario = pfm::load_scenario(rules_path);
    pfm::ScenarioRunner runner;
    runner.run(scenario);
    auto& node = pick_node(runner, node_name);
    if (explain->parsed())
      std::cout << pfm::explain(node.engine, kind, pfm::parse_context_spec(context));
    else
      std::cout << node.engine.dump_tree(kind);
    return 0;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const pfm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
