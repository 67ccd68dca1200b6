#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tailspin/tailspin.h"

namespace {

// One line on stderr: "tailspin: error=<class> <message>".
int fail(tsp_status status) {
  std::string msg = tsp_last_error();
  for (auto& ch : msg)
    if (ch == '\n') ch = ' ';
  std::fprintf(stderr, "tailspin: error=%s %s\n", tsp_status_name(status), msg.c_str());
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tailspin: self-supervised pretraining and robust fine-tuning on long-tailed noisy data"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::string output;
  long long seed = -1;
  app.add_option("--config", config_path, "config file of `key = value` lines");
  app.add_option("--set", sets, "override, key=value (repeatable)")->take_all()->allow_extra_args(false);
  app.add_option("--output", output, "output directory (run.output_dir)");
  app.add_option("--seed", seed, "global seed (run.seed)")->check(CLI::NonNegativeNumber);

  const char* help[] = {
      "generate", "write balanced synthetic train and test splits",
      "corrupt", "apply exponential imbalance and symmetric label noise",
      "pretrain", "self-supervised pretraining; writes a checkpoint",
      "finetune", "fine-tune a classifier head on a pretrained checkpoint",
      "run", "pretrain then fine-tune",
      "run-single-stage", "train encoder and head end to end from scratch",
      "eval", "kNN and classifier evaluation of a checkpoint",
      "gradcheck", "finite-difference check of every differentiable loss",
  };
  std::string command;
  for (std::size_t i = 0; i < sizeof(help) / sizeof(help[0]); i += 2) {
    auto* sub = app.add_subcommand(help[i], help[i + 1]);
    sub->callback([&command, name = std::string(help[i])] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "tailspin: error=usage_error %s\n", e.what());
    return 64;
  }

  tsp_config* cfg = nullptr;
  tsp_status st = tsp_config_load(config_path.empty() ? nullptr : config_path.c_str(), &cfg);
  if (st != TSP_OK) return fail(st);
  std::vector<std::string> all = sets;
  if (!output.empty()) all.push_back("run.output_dir=" + output);
  if (seed >= 0) all.push_back("run.seed=" + std::to_string(seed));
  for (const auto& s : all) {
    st = tsp_config_override(cfg, s.c_str());
    if (st != TSP_OK) {
      tsp_config_free(cfg);
      return fail(st);
    }
  }
  const char* report = nullptr;
  st = tsp_run_command(command.c_str(), cfg, &report);
  tsp_config_free(cfg);
  if (st != TSP_OK) return fail(st);
  std::fputs(report, stdout);
  return 0;
}
