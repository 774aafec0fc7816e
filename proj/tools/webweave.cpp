#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "webweave/experiments.hpp"

using nlohmann::json;

namespace {

int fail(webweave::ExitCode code, const json &doc)
{
  std::cerr << doc.dump() << '\n';
  return static_cast<int>(code);
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Coalescing walk and Brownian web experiments", "webweave"};
  app.set_version_flag("--version", std::string(webweave::version()));
  app.require_subcommand(1);

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  unsigned threads = 1;

  for (auto name : webweave::experiment_names) {
    auto *sub = app.add_subcommand(std::string(name), "Run the " + std::string(name) + " experiment");
    sub->add_option("--config", config_file, "Experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "Overrides the config seed");
    sub->add_option("--out", out_dir, "Overrides the config output directory");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::Range(1u, 1024u));
  }
  auto *val = app.add_subcommand("validate", "Check a config against the schema");
  val->add_option("--config", config_file, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  const auto *sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    auto config = webweave::load_config(config_file);
    if (command == "validate") {
      const auto violations = webweave::validate_config(config);
      json report = {{"valid", violations.empty()}, {"violations", json::array()}};
      for (const auto &v : violations) report["violations"].push_back({{"pointer", v.pointer}, {"message", v.message}});
      std::cout << report.dump(2) << '\n';
      return static_cast<int>(violations.empty() ? webweave::ExitCode::ok : webweave::ExitCode::schema);
    }
    if (config.is_object() && config.contains("experiment") && config["experiment"] != command) {
      const auto &e = config["experiment"];
      const std::string named = e.is_string() ? e.get<std::string>() : e.dump();
      throw webweave::SchemaError(
          {{"/experiment", "config names \"" + named + "\" but the command is \"" + command + "\""}});
    }
    const auto summary = webweave::run_experiment(std::move(config), {seed, out_dir, threads});
    std::cout << json{{"status", "ok"},
                      {"experiment", command},
                      {"output_dir", summary["config"]["output_dir"]},
                      {"files", summary["files"].size()}}
                     .dump()
              << '\n';
    return 0;
  } catch (...) {
    const auto [code, doc] = webweave::current_error();
    return fail(code, doc);
  }
}
