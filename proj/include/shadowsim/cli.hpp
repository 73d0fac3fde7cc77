#pragma once

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "shadowsim/external_backend.hpp"
#include "shadowsim/harness.hpp"

namespace shadowsim {

// Exit codes: 0 success, 1 bad usage or invalid inputs, 2 runtime failure.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"shadowsim: a scripted fraud-simulation sandbox"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_path = "events.jsonl";
  std::string manifest_path;
  std::string log_path;
  std::string report_path = "report.json";
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  int turns_override = 0;

  CLI::App* cmd_run = app.add_subcommand("run", "run a scenario and write its event log");
  cmd_run->add_option("--scenario", scenario_path, "scenario config file")->required();
  cmd_run->add_option("--seed", seed_override, "override the scenario seed")
      ->each([&](const std::string&) { seed_given = true; });
  cmd_run->add_option("--out", out_path, "event log output path");
  cmd_run->add_option("--manifest", manifest_path,
                      "ground-truth manifest output path (default: <out>.manifest.json)");

  CLI::App* cmd_eval = app.add_subcommand("eval", "score a log against a manifest");
  cmd_eval->add_option("--log", log_path, "event log to score")->required();
  cmd_eval->add_option("--manifest", manifest_path, "ground-truth manifest")->required();
  cmd_eval->add_option("--report", report_path, "metrics report output path");

  CLI::App* cmd_redblue =
      app.add_subcommand("redblue", "generate an adversarial dialogue transcript");
  cmd_redblue->add_option("--scenario", scenario_path, "scenario config file")->required();
  cmd_redblue->add_option("--turns", turns_override, "total turns (even, >= 2)");
  cmd_redblue->add_option("--seed", seed_override, "override the scenario seed")
      ->each([&](const std::string&) { seed_given = true; });
  cmd_redblue->add_option("--out", out_path, "transcript output path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) {  // --help
      out << app.help() << "\n";
      return 0;
    }
    err << "usage error: " << ex.what() << "\n";
    return 1;
  }

  try {
    if (cmd_run->parsed()) {
      ScenarioConfig config = ScenarioConfig::load(scenario_path);
      if (seed_given) config.seed = seed_override;

      RunResult result;
      TemplateRegistry templates = TemplateRegistry::builtin();
      if (config.backend.mode == "external") {
        ExternalBackend::Options opts;
        opts.host = config.backend.host;
        opts.port = config.backend.port;
        opts.path = config.backend.path;
        ExternalBackend backend(templates, opts);
        result = run(config, &backend);
      } else {
        result = run(config);
      }

      std::ofstream lf(out_path);
      if (!lf) throw SimError("cannot write log: " + out_path);
      result.log.write_jsonl(lf);
      std::string mpath = manifest_path.empty() ? out_path + ".manifest.json" : manifest_path;
      std::ofstream mf(mpath);
      if (!mf) throw SimError("cannot write manifest: " + mpath);
      mf << result.manifest.dump(2) << "\n";

      out << "wrote " << result.log.size() << " events to " << out_path
          << " and manifest to " << mpath << "\n";
      if (result.aborted) {
        err << "run aborted: " << result.abort_reason << "\n";
        return 2;
      }
      return 0;
    }

    if (cmd_eval->parsed()) {
      std::vector<SimEvent> events;
      json manifest;
      try {
        std::ifstream lf(log_path);
        if (!lf) throw ConfigError("cannot open log: " + log_path);
        events = EventLog::read_jsonl(lf).events();
        std::ifstream mf(manifest_path);
        if (!mf) throw ConfigError("cannot open manifest: " + manifest_path);
        mf >> manifest;
      } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed manifest: ") + ex.what());
      } catch (const SimError& ex) {
        throw ConfigError(ex.what());  // unreadable inputs are a validation failure
      }

      MetricsReport report = evaluate(events, manifest);
      json rj = report.to_json();
      std::ofstream rf(report_path);
      if (!rf) throw SimError("cannot write report: " + report_path);
      rf << rj.dump(2) << "\n";
      out << rj.dump(2) << "\n";
      return 0;
    }

    if (cmd_redblue->parsed()) {
      ScenarioConfig config = ScenarioConfig::load(scenario_path);
      if (seed_given) config.seed = seed_override;
      int turns = turns_override > 0 ? turns_override : config.redblue_turns;

      MockBackend mock;
      if (!config.backend.fixtures_path.empty())
        mock.load_fixture_file(config.backend.fixtures_path);
      RedBlueTranscript transcript;
      TemplateRegistry templates = TemplateRegistry::builtin();
      if (config.backend.mode == "external") {
        ExternalBackend::Options opts;
        opts.host = config.backend.host;
        opts.port = config.backend.port;
        opts.path = config.backend.path;
        ExternalBackend backend(templates, opts);
        transcript = redblue_generate(config.redblue, backend, turns, config.seed);
      } else {
        transcript = redblue_generate(config.redblue, mock, turns, config.seed);
      }

      std::string tpath = out_path == "events.jsonl" ? "redblue.jsonl" : out_path;
      std::ofstream tf(tpath);
      if (!tf) throw SimError("cannot write transcript: " + tpath);
      tf << redblue_to_jsonl(transcript);
      out << "wrote " << transcript.turns.size() << " turns to " << tpath << "\n";
      if (transcript.error) {
        err << "generation stopped early: " << transcript.error_message << "\n";
        return 2;
      }
      return 0;
    }
  } catch (const ConfigError& ex) {
    err << "invalid input: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 2;
  }

  err << "no subcommand given\n";
  return 1;
}

}  // namespace shadowsim
