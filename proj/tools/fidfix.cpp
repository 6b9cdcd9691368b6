#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "fidfix/config.hpp"
#include "fidfix/pipeline.hpp"

namespace {

struct FlagOverrides {
  std::string config_path;
  long long seed = -1;
  int jobs = 0;
  int max_segments = 0;
  int segment_len = 0;
  std::string groups;
};

fidfix::RunConfig effective_config(const FlagOverrides& flags) {
  fidfix::ConfigMap map;
  if (!flags.config_path.empty()) map = fidfix::parse_config_file(flags.config_path);
  fidfix::RunConfig cfg = fidfix::config_from_map(map);
  // Flags win over file values.
  if (flags.seed >= 0) cfg.model.seed = static_cast<std::uint64_t>(flags.seed);
  if (flags.jobs > 0) cfg.jobs = flags.jobs;
  if (flags.max_segments > 0) cfg.model.max_segments = flags.max_segments;
  if (flags.segment_len > 0) cfg.model.segment_len = flags.segment_len;
  if (!flags.groups.empty()) cfg.groups = flags.groups;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fusion-style vulnerability repair pipeline"};
  app.require_subcommand(1);

  FlagOverrides flags;
  app.add_option("--config", flags.config_path, "configuration file (key = value lines)");
  app.add_option("--seed", flags.seed, "random seed override");
  app.add_option("--jobs", flags.jobs, "parallelism cap for per-sample stages");
  app.add_option("--max-segments", flags.max_segments, "encoder slot budget K");
  app.add_option("--segment-len", flags.segment_len, "tokens per segment L");
  app.add_option("--groups", flags.groups, "subgroup criterion: length|frequency|risk");

  const char* commands[] = {"dedup", "preprocess", "build-kb", "adapt",
                            "train", "predict",    "evaluate"};
  const char* descriptions[] = {
      "remove cross-split and internal-test duplicates",
      "build the vocabulary and segment statistics",
      "generate missing fixes for the CWE knowledge base",
      "pretrain on a bug-fixing corpus (alternating code/AST inputs)",
      "fine-tune the repair model",
      "generate one fix per test sample",
      "score predictions (EM, BLEU-4, CodeBLEU, subgroups, significance)"};
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    app.add_subcommand(commands[i], descriptions[i])->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n\n%s", e.what(), app.help().c_str());
    return 2;
  }

  std::string command = app.get_subcommands().front()->get_name();
  try {
    fidfix::RunConfig cfg = effective_config(flags);
    return fidfix::pipeline::dispatch(command, cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
