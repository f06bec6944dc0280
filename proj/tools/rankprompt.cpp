// rankprompt: generate | train | eval | heatmap | ablate
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rankprompt/config.hpp"
#include "rankprompt/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace rankprompt;

  CLI::App app{"Rank-aware image-text similarity training on synthetic ordinal data"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string out;

  for (const char* name : {"generate", "train", "eval", "heatmap", "ablate"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "flat key = value configuration file")->required();
    sub->add_option("--checkpoint", checkpoint, "checkpoint JSON (default <out>/checkpoint.json)");
    sub->add_option("--dataset", dataset, "dataset CSV (default <out>/dataset.csv)");
    sub->add_option("--split", split, "split to evaluate")->check(CLI::IsMember({"train", "test"}));
    sub->add_option("--out", out, "output directory (overrides out_dir)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig cfg = load_config(config_path);
    apply_env_overrides(cfg);
    cfg.validate();

    CommandOptions opts;
    if (!checkpoint.empty()) opts.checkpoint = checkpoint;
    if (!dataset.empty()) opts.dataset = dataset;
    if (!out.empty()) opts.out = out;
    opts.split = parse_split(split);

    std::filesystem::path written;
    if (command == "generate") {
      written = cmd_generate(cfg, opts);
    } else if (command == "train") {
      written = cmd_train(cfg, opts);
    } else if (command == "eval") {
      written = cmd_eval(cfg, opts);
    } else if (command == "heatmap") {
      written = cmd_heatmap(cfg, opts);
    } else {
      written = cmd_ablate(cfg, opts);
    }
    std::cout << written.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
