#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "gfinn/gfinn.h"

namespace {

void print_progress(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GENERIC-structured dynamics learning: generate, train, eval, export, verify"};
  app.require_subcommand(1);

  std::string config, scale, out = "run";
  std::uint64_t seed = 0;
  int threads = 0;
  bool overwrite = false;
  for (const char* name : {"generate", "train", "eval", "export", "verify"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "experiment JSON")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "replace the seed list with one seed");
    sub->add_option("--scale", scale, "budget preset")->check(CLI::IsMember({"desk", "full"}));
    sub->add_flag("--overwrite", overwrite, "replace existing outputs");
    sub->add_option("--threads", threads, "worker cap")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return GFINN_ERR_CONFIG;
  }
  const CLI::App* sub = app.get_subcommands().front();
  const bool has_seed = sub->count("--seed") > 0;

  gfinn_config* cfg = nullptr;
  gfinn_status st = gfinn_config_load(config.empty() ? nullptr : config.c_str(), scale.empty() ? nullptr : scale.c_str(),
                                      has_seed ? 1 : 0, seed, threads, &cfg);
  if (st != GFINN_OK) {
    std::fprintf(stderr, "error: %s\n", gfinn_last_error());
    return st;
  }
  char hash[32];
  gfinn_config_hash(cfg, hash, sizeof hash);
  std::fprintf(stderr, "config %s\n", hash);

  char summary[1024];
  st = gfinn_run(cfg, sub->get_name().c_str(), out.c_str(), overwrite ? 1 : 0, print_progress, nullptr, summary,
                 sizeof summary);
  gfinn_config_free(cfg);
  if (st != GFINN_OK) {
    std::fprintf(stderr, "error: %s\n", gfinn_last_error());
    return st;
  }
  std::printf("%s\n", summary);
  return 0;
}
