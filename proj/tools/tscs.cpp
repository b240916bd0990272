// Command-line front end: one subcommand per experiment kind.
#include "tscs/experiments.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <json.hpp>

namespace {

using nlohmann::json;

constexpr int kExitWorkFailed = 1;
constexpr int kExitBadSpec = 2;

struct Overrides {
  std::string spec_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> trials;
  std::optional<std::size_t> threads;
};

std::size_t thread_cap() {
  if (const char *env = std::getenv("TSCS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception &) {
    }
  }
  return 0;
}

json issues_to_json(const std::vector<tscs::RunIssue> &issues) {
  json arr = json::array();
  for (const auto &i : issues) arr.push_back({{"item", i.item}, {"message", i.message}});
  return arr;
}

int fail(const std::string &command, const std::string &kind, const std::string &message) {
  json doc{{"status", "error"}, {"command", command}, {"errors", json::array({{{"item", kind}, {"message", message}}})}};
  std::cerr << doc.dump() << "\n";
  return kExitBadSpec;
}

int run(const std::string &command, tscs::ExperimentKind kind, const Overrides &o) {
  tscs::ExperimentSpec spec;
  try {
    spec = tscs::load_experiment_spec(o.spec_path);
    if (spec.kind != kind) {
      return fail(command, "spec",
                  "spec kind '" + tscs::to_string(spec.kind) + "' does not match subcommand '" + command + "'");
    }
    if (o.seed) spec.seed = *o.seed;
    if (o.out) spec.out = *o.out;
    if (o.trials) spec.trials = *o.trials;
    if (o.threads) spec.threads = *o.threads;
    if (const auto cap = thread_cap(); cap && (spec.threads == 0 || spec.threads > cap)) spec.threads = cap;
    spec.validate();
  } catch (const std::exception &e) {
    return fail(command, "spec", e.what());
  }

  tscs::RunReport report;
  try {
    report = tscs::run_experiment(spec);
  } catch (const std::exception &e) {
    report.errors.push_back({"run", e.what()});
  }

  json outputs = json::array();
  for (const auto &p : report.outputs) outputs.push_back(p.string());
  json doc{{"status", report.ok() ? "ok" : "error"},
           {"command", command},
           {"outputs", outputs},
           {"warnings", issues_to_json(report.warnings)},
           {"errors", issues_to_json(report.errors)}};
  if (report.ok()) {
    std::cout << doc.dump() << "\n";
    return 0;
  }
  std::cerr << doc.dump() << "\n";
  return kExitWorkFailed;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Tensor-sum compressive sensing experiments"};
  app.require_subcommand(1);

  struct Command {
    const char *name;
    const char *help;
    tscs::ExperimentKind kind;
  };
  const Command commands[] = {
      {"coherence", "Average mutual coherence per matrix source", tscs::ExperimentKind::coherence},
      {"recovery", "OMP exact-recovery rate sweep", tscs::ExperimentKind::recovery},
      {"sense", "Sense images, write measurements, proxies and metrics", tscs::ExperimentKind::sense},
      {"train", "Train sensing and proxy operators on a patch corpus", tscs::ExperimentKind::train},
      {"eval", "Score a trained checkpoint on images", tscs::ExperimentKind::eval},
  };

  Overrides overrides;
  std::string chosen;
  tscs::ExperimentKind kind = tscs::ExperimentKind::coherence;
  for (const auto &c : commands) {
    auto *sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--spec", overrides.spec_path, "Experiment spec (JSON)")->required();
    sub->add_option("--seed", overrides.seed, "Override the spec seed");
    sub->add_option("--out", overrides.out, "Override the output path");
    sub->add_option("--trials", overrides.trials, "Override the trial count");
    sub->add_option("--threads", overrides.threads, "Worker threads (0: all cores)");
    sub->callback([&chosen, &kind, c] {
      chosen = c.name;
      kind = c.kind;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kExitBadSpec;
  }
  return run(chosen, kind, overrides);
}
