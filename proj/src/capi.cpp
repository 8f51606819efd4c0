#include "gfinn/gfinn.h"

#include <cstring>
#include <string>

#include "gfinn/error.hpp"
#include "gfinn/experiment.hpp"

struct gfinn_config {
  gfinn::ExperimentConfig cfg;
};

namespace {

thread_local std::string last_error;

gfinn_status status_of(gfinn::ErrorKind kind) {
  switch (kind) {
    case gfinn::ErrorKind::kConfig:
    case gfinn::ErrorKind::kContract:
    case gfinn::ErrorKind::kState:
      return GFINN_ERR_CONFIG;
    case gfinn::ErrorKind::kDomain:
    case gfinn::ErrorKind::kNumerical:
      return GFINN_ERR_NUMERICAL;
    case gfinn::ErrorKind::kIo:
      return GFINN_ERR_IO;
  }
  return GFINN_ERR_INTERNAL;
}

template <class F>
gfinn_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return GFINN_OK;
  } catch (const gfinn::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    last_error = e.what();
    return GFINN_ERR_IO;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GFINN_ERR_INTERNAL;
  }
}

void copy_out(const std::string& s, char* buf, std::size_t size) {
  if (s.size() + 1 > size) throw gfinn::ConfigError("output buffer of " + std::to_string(size) + " bytes is too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

}  // namespace

extern "C" {

const char* gfinn_version(void) { return "1.0.0"; }

const char* gfinn_last_error(void) { return last_error.c_str(); }

gfinn_status gfinn_config_load(const char* path, const char* scale, int has_seed, uint64_t seed, int threads,
                               gfinn_config** out) {
  return guarded([&] {
    if (!out) throw gfinn::ContractError("gfinn_config_load: out is null");
    *out = nullptr;
    gfinn::ConfigOverrides over;
    if (scale) over.scale = scale;
    if (has_seed) over.seed = seed;
    if (threads > 0) over.threads = threads;
    auto h = std::make_unique<gfinn_config>();
    h->cfg = path ? gfinn::load_config(path, over) : gfinn::parse_config(nlohmann::json::object(), over);
    *out = h.release();
  });
}

void gfinn_config_free(gfinn_config* cfg) { delete cfg; }

gfinn_status gfinn_config_hash(const gfinn_config* cfg, char* buf, size_t size) {
  return guarded([&] {
    if (!cfg || !buf) throw gfinn::ContractError("gfinn_config_hash: null argument");
    copy_out(gfinn::config_hash(cfg->cfg), buf, size);
  });
}

gfinn_status gfinn_config_json(const gfinn_config* cfg, char* buf, size_t size, size_t* needed) {
  return guarded([&] {
    if (!cfg) throw gfinn::ContractError("gfinn_config_json: null config");
    const std::string text = gfinn::to_json(cfg->cfg).dump(2);
    if (needed) *needed = text.size() + 1;
    if (buf) copy_out(text, buf, size);
  });
}

gfinn_status gfinn_run(const gfinn_config* cfg, const char* command, const char* out_dir, int overwrite,
                       gfinn_progress_fn progress, void* user, char* summary, size_t summary_size) {
  return guarded([&] {
    if (!cfg || !command || !out_dir) throw gfinn::ContractError("gfinn_run: null argument");
    gfinn::CommandOptions opt;
    opt.out = out_dir;
    opt.overwrite = overwrite != 0;
    if (progress) opt.progress = [progress, user](const std::string& line) { progress(line.c_str(), user); };
    const std::string cmd = command;
    std::string line;
    if (cmd == "generate") line = gfinn::cmd_generate(cfg->cfg, opt);
    else if (cmd == "train") line = gfinn::cmd_train(cfg->cfg, opt);
    else if (cmd == "eval") line = gfinn::cmd_eval(cfg->cfg, opt);
    else if (cmd == "export") line = gfinn::cmd_export(cfg->cfg, opt);
    else if (cmd == "verify") line = gfinn::cmd_verify(cfg->cfg, opt);
    else throw gfinn::ConfigError("unknown command '" + cmd + "'");
    if (summary && summary_size > 0) {
      const std::size_t n = std::min(line.size(), summary_size - 1);
      std::memcpy(summary, line.data(), n);
      summary[n] = '\0';
    }
  });
}

}  // extern "C"
