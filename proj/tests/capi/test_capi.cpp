#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "../unit/tmpdir.hpp"
#include "doctest.h"
#include "gfinn/gfinn.h"

namespace {

std::string write_config(const std::filesystem::path& dir, const std::string& text) {
  const auto p = dir / "config.json";
  std::ofstream(p) << text;
  return p.string();
}

void collect(const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); }

}  // namespace

TEST_CASE("config handles and hashes") {
  gfinn_config* cfg = nullptr;
  REQUIRE(gfinn_config_load(nullptr, nullptr, 0, 0, 0, &cfg) == GFINN_OK);
  char hash[17];
  CHECK(gfinn_config_hash(cfg, hash, sizeof hash) == GFINN_OK);
  CHECK(std::strlen(hash) == 16);
  char tiny[4];
  CHECK(gfinn_config_hash(cfg, tiny, sizeof tiny) == GFINN_ERR_CONFIG);
  CHECK(std::string(gfinn_last_error()).find("too small") != std::string::npos);
  std::size_t needed = 0;
  CHECK(gfinn_config_json(cfg, nullptr, 0, &needed) == GFINN_OK);
  std::vector<char> buf(needed);
  CHECK(gfinn_config_json(cfg, buf.data(), buf.size(), nullptr) == GFINN_OK);
  CHECK(std::string(buf.data()).find("\"problem\": \"gas\"") != std::string::npos);
  gfinn_config_free(cfg);

  gfinn_config* other = nullptr;
  REQUIRE(gfinn_config_load(nullptr, "full", 1, 7, 2, &other) == GFINN_OK);
  char hash2[17];
  gfinn_config_hash(other, hash2, sizeof hash2);
  CHECK(std::string(hash2) != std::string(hash));
  gfinn_config_free(other);
  gfinn_config_free(nullptr);
  CHECK(std::strlen(gfinn_version()) > 0);
}

TEST_CASE("status codes") {
  TmpDir tmp("capi");
  gfinn_config* cfg = nullptr;
  CHECK(gfinn_config_load(write_config(tmp.path(), R"({"method": "spnn", "case": "2a", "train": {"order": 9}})").c_str(),
                          nullptr, 0, 0, 0, &cfg) == GFINN_ERR_CONFIG);
  CHECK(cfg == nullptr);
  const std::string msg = gfinn_last_error();
  CHECK(msg.find("spnn") != std::string::npos);
  CHECK(msg.find("train.order") != std::string::npos);
  CHECK(gfinn_config_load((tmp.path() / "missing.json").string().c_str(), nullptr, 0, 0, 0, &cfg) == GFINN_ERR_IO);
  CHECK(gfinn_config_load(write_config(tmp.path(), "{oops").c_str(), nullptr, 0, 0, 0, &cfg) == GFINN_ERR_CONFIG);
  CHECK(gfinn_config_load(nullptr, "medium", 0, 0, 0, &cfg) == GFINN_ERR_CONFIG);
  CHECK(gfinn_config_load(nullptr, nullptr, 0, 0, 0, nullptr) == GFINN_ERR_CONFIG);

  REQUIRE(gfinn_config_load(nullptr, nullptr, 0, 0, 0, &cfg) == GFINN_OK);
  CHECK(gfinn_run(cfg, "dance", tmp.path().string().c_str(), 0, nullptr, nullptr, nullptr, 0) == GFINN_ERR_CONFIG);
  CHECK(gfinn_run(cfg, "eval", tmp.path().string().c_str(), 0, nullptr, nullptr, nullptr, 0) == GFINN_ERR_IO);
  gfinn_config_free(cfg);
}

TEST_CASE("commands through the C interface") {
  TmpDir tmp("capi");
  gfinn_config* cfg = nullptr;
  const std::string path = write_config(
      tmp.path(), R"({"data": {"trajectories": 3, "train": 2, "steps": 8}, "train": {"iterations": 2}})");
  REQUIRE(gfinn_config_load(path.c_str(), nullptr, 1, 5, 1, &cfg) == GFINN_OK);
  const std::string out = (tmp.path() / "run").string();
  std::vector<std::string> lines;
  char summary[256];
  for (const char* cmd : {"generate", "train", "eval", "export"}) {
    INFO(cmd << ": " << gfinn_last_error());
    CHECK(gfinn_run(cfg, cmd, out.c_str(), 0, collect, &lines, summary, sizeof summary) == GFINN_OK);
    CHECK(std::strlen(summary) > 0);
  }
  CHECK(!lines.empty());
  CHECK(std::filesystem::exists(tmp.path() / "run/seed_5/checkpoint.json"));
  CHECK(std::filesystem::exists(tmp.path() / "run/export/mse_vs_time.csv"));
  CHECK(gfinn_run(cfg, "generate", out.c_str(), 0, nullptr, nullptr, summary, sizeof summary) == GFINN_ERR_IO);
  CHECK(gfinn_run(cfg, "generate", out.c_str(), 1, nullptr, nullptr, summary, 8) == GFINN_OK);
  CHECK(std::strlen(summary) == 7);
  gfinn_config_free(cfg);
}
