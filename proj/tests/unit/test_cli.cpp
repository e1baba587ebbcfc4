#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flimsr/cli.hpp"
#include "support.hpp"

using namespace flimsr;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

json tiny_pipeline(const std::filesystem::path& out) {
  return {{"out_dir", out.string()},
          {"seed", 3},
          {"k", 2},
          {"n_patients", 3},
          {"fovs_per_patient", 2},
          {"fov_size", 64},
          {"patch_px", 64},
          {"steps", 2},
          {"batch_size", 2},
          {"base_channels", 4},
          {"levels", 2},
          {"convs_per_block", 1},
          {"disc_base_channels", 4},
          {"disc_blocks", 2},
          {"disc_hidden", 8}};
}

void write(const std::filesystem::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST_CASE("usage errors exit 2") {
  auto r = run({"degrade", "--k", "2", "--in", "a", "--out", "b", "--bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(json::parse(r.err.substr(0, r.err.find('\n')))["status"] == "error");
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"degrade", "--k", "two", "--in", "a", "--out", "b"}).code == 2);
  CHECK(run({"degrade", "--in", "a"}).code == 2);
  const auto help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("pipeline") != std::string::npos);
}

TEST_CASE("module errors exit 1 with a structured message") {
  const auto dir = test::scratch_dir("cli_errors");
  auto r = run({"degrade", "--k", "9", "--in", dir.string(), "--out", (dir / "o").string()});
  CHECK(r.code == 1);
  const auto e = json::parse(r.err);
  CHECK(e["status"] == "error");
  CHECK(e["command"] == "degrade");
  CHECK(e["message"] == "k out of supported range 2..7");

  r = run({"degrade", "--k", "2", "--in", (dir / "missing").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 1);

  json bad = tiny_pipeline(dir / "p");
  bad["learning_rate"] = 0.1;
  write(dir / "bad.json", bad);
  r = run({"pipeline", "--config", (dir / "bad.json").string()});
  CHECK(r.code == 1);
  CHECK(json::parse(r.err)["message"] == "unknown config key: learning_rate");

  bad = tiny_pipeline(dir / "p");
  bad["k"] = 8;
  write(dir / "bad.json", bad);
  CHECK(run({"pipeline", "--config", (dir / "bad.json").string()}).code == 1);
}

TEST_CASE("stage commands chain through the file system") {
  const auto dir = test::scratch_dir("cli_stages");
  const auto d = dir.string();
  REQUIRE(run({"phantom", "--out", d + "/ph", "--patients", "3", "--fovs", "1", "--size", "64", "--seed", "2"}).code ==
          0);
  CHECK(std::filesystem::exists(dir / "ph" / "P02" / "fov_0.flimb"));
  REQUIRE(run({"degrade", "--k", "2", "--in", d + "/ph", "--out", d + "/dg", "--patch", "64", "--train-patients", "2"})
              .code == 0);
  const auto manifest = json::parse(std::ifstream(dir / "dg" / "degrade.json"));
  CHECK(manifest["train_ids"].size() == 2);
  CHECK(manifest["test_ids"].size() == 1);

  auto r = run({"train", "--k", "3", "--data", d + "/dg", "--out", d + "/m"});
  CHECK(r.code == 1);
  CHECK(r.err.find("k mismatch") != std::string::npos);

  r = run({"train", "--k", "2", "--data", d + "/dg", "--out", d + "/m", "--steps", "2", "--batch", "2", "--base", "4",
           "--levels", "2", "--convs", "1", "--disc-base", "4", "--disc-blocks", "2", "--disc-hidden", "8",
           "--alpha", "0.5"});
  REQUIRE(r.code == 0);
  const auto side = json::parse(std::ifstream(dir / "m" / "model.ckpt.json"));
  CHECK(side["train_config"]["alpha"] == 0.5);
  CHECK(side["preprocessing"]["norm_scope"] == "wsi");

  r = run({"infer", "--ckpt", d + "/m/model.ckpt", "--in", d + "/dg/lr/P00/fov_0.flimb", "--out", d + "/x.flimb"});
  CHECK(r.code == 1);
  CHECK(json::parse(r.err)["message"] == "missing preprocessing statistics");

  REQUIRE(run({"infer", "--ckpt", d + "/m/model.ckpt", "--in", d + "/dg/lr", "--stats", d + "/dg/stats", "--out",
               d + "/pred"})
              .code == 0);
  REQUIRE(run({"infer", "--model", "bilinear", "--in", d + "/dg/lr", "--stats", d + "/dg/stats", "--out", d + "/base"})
              .code == 0);
  REQUIRE(run({"eval", "--pred", d + "/pred", "--target", d + "/dg/target", "--out", d + "/a.json"}).code == 0);
  REQUIRE(run({"eval", "--pred", d + "/base", "--target", d + "/dg/target", "--out", d + "/b.json", "--ssim-mode",
               "windowed"})
              .code == 0);
  const auto report = json::parse(std::ifstream(dir / "a.json"));
  CHECK(report["patches"].size() == 3);
  CHECK(report["summary"].contains("lifetime"));
  CHECK(json::parse(std::ifstream(dir / "b.json"))["ssim_mode"] == "windowed");
  REQUIRE(run({"compare", "--a", d + "/a.json", "--b", d + "/b.json", "--out", d + "/t.json"}).code == 0);
  CHECK(json::parse(std::ifstream(dir / "t.json"))["tests"].size() == 24);

  REQUIRE(run({"spectrum", "--in", d + "/ph/P00/fov_0.flimb", "--channel", "INT3", "--out", d + "/s.csv"}).code == 0);
  std::ifstream csv(dir / "s.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "bin_center_cycles_per_pixel,mean_power");
  CHECK(run({"spectrum", "--in", d + "/ph/P00/fov_0.flimb", "--channel", "LT9", "--out", d + "/s.csv"}).code == 1);

  std::filesystem::remove(dir / "pred" / "P01" / "fov_0.flimb");
  std::filesystem::copy_file(dir / "base" / "P01" / "fov_0.flimb", dir / "pred" / "P01" / "extra.flimb");
  r = run({"eval", "--pred", d + "/pred", "--target", d + "/dg/target", "--out", d + "/c.json"});
  CHECK(r.code == 1);
  CHECK(r.err.find("pairing mismatch") != std::string::npos);

  REQUIRE(run({"train-bbdm", "--k", "2", "--data", d + "/dg", "--out", d + "/bb", "--steps", "2", "--batch", "2",
               "--base", "4", "--levels", "2", "--convs", "1", "--time-embed", "8", "--T", "20", "--stride", "5"})
              .code == 0);
  REQUIRE(run({"infer", "--model", "bbdm", "--ckpt", d + "/bb/model.ckpt", "--in", d + "/dg/lr", "--stats",
               d + "/dg/stats", "--out", d + "/bpred", "--seed", "4"})
              .code == 0);
  CHECK(std::filesystem::exists(dir / "bpred" / "P02" / "fov_0.flimb"));
  CHECK(run({"infer", "--model", "cgan", "--ckpt", d + "/bb/model.ckpt", "--in", d + "/dg/lr", "--stats",
             d + "/dg/stats", "--out", d + "/bpred"})
            .code == 1);
}

TEST_CASE("pipeline writes a manifest listing every artifact") {
  const auto dir = test::scratch_dir("cli_pipeline");
  write(dir / "exp.json", tiny_pipeline(dir / "run"));
  const auto r = run({"pipeline", "--config", (dir / "exp.json").string(), "--threads", "1"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto m = json::parse(std::ifstream(dir / "run" / "manifest.json"));
  CHECK(m["code_version"].is_string());
  CHECK(m["config"]["k"] == 2);
  CHECK(m["config"]["alpha"] == 0.1);
  const auto& a = m["artifacts"];
  for (const char* key : {"checkpoint", "checkpoint_sidecar", "report", "baseline_report", "ttests", "history"}) {
    REQUIRE(a.contains(key));
    CHECK(std::filesystem::exists(dir / "run" / a[key].get<std::string>()));
  }
  CHECK(a["preprocessing_stats"].size() == 6);
  CHECK(a["predictions"].size() >= 1);
  for (const auto& p : a["predictions"]) CHECK(std::filesystem::exists(dir / "run" / p.get<std::string>()));
  CHECK(m.contains("started_utc"));
  CHECK(m.contains("finished_utc"));

  const auto tt = json::parse(std::ifstream(dir / "run" / "ttests.json"));
  CHECK(tt["tests"].size() == 24);

  // Flags override file values.
  const auto r2 = run({"pipeline", "--config", (dir / "exp.json").string(), "--out", (dir / "run2").string(), "--seed",
                       "4"});
  REQUIRE(r2.code == 0);
  CHECK(json::parse(std::ifstream(dir / "run2" / "manifest.json"))["config"]["seed"] == 4);
}
