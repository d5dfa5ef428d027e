#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

const fs::path& work() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("teformer_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli(const std::string& args) {
  const fs::path out = work() / "stdout.txt", err = work() / "stderr.txt";
  const std::string cmd = std::string(TEFORMER_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// A run small enough for a unit test: 32 px scenes, a handful of steps.
const std::string kTiny =
    "--set model.num_classes=5 --set data.count=8 --set data.size=32 --set train.crop=32 "
    "--set train.iterations=3 --set train.log_every=1";

const fs::path& trained() {
  static const fs::path dir = [] {
    const fs::path d = work() / "run";
    const Outcome r = cli("train " + kTiny + " --out " + d.string());
    EXPECT_EQ(r.code, 0) << r.err;
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, UsageErrorExitsTwo) {
  const Outcome r = cli("train --no-such-flag");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.err)["error"], "usage");
  EXPECT_EQ(cli("").code, 2);
}

TEST(Cli, UnknownKeyExitsOneWithJsonError) {
  const Outcome r = cli("flops --set model.bogus=3");
  EXPECT_EQ(r.code, 1);
  const auto j = json::parse(r.err);
  EXPECT_EQ(j["error"], "config");
  EXPECT_EQ(j["message"], "unknown config key: model.bogus");
}

TEST(Cli, TrainWritesArtifacts) {
  const auto& d = trained();
  for (const char* f : {"config.json", "final.ckpt", "metrics.json", "loss.csv", "loss.png", "per_class_iou.png"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const auto m = json::parse(slurp(d / "metrics.json"));
  EXPECT_TRUE(m.contains("miou"));
}

TEST(Cli, EvalIsDeterministic) {
  const auto ckpt = (trained() / "final.ckpt").string();
  const Outcome a = cli("eval --checkpoint " + ckpt + " --out " + (work() / "e1.json").string());
  const Outcome b = cli("eval --checkpoint " + ckpt + " --out " + (work() / "e2.json").string());
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  auto ja = json::parse(slurp(work() / "e1.json")), jb = json::parse(slurp(work() / "e2.json"));
  ja.erase("wall_time_s");
  jb.erase("wall_time_s");
  EXPECT_EQ(ja, jb);
}

TEST(Cli, EvalRejectsModelChange) {
  const Outcome r = cli("eval --checkpoint " + (trained() / "final.ckpt").string() + " --set model.dam=false");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(json::parse(r.err)["error"], "config");
}

TEST(Cli, GenDataThenPredict) {
  const fs::path data = work() / "gen";
  const Outcome g = cli("gen-data --count 3 --size 32 --classes 5 --out " + data.string());
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_EQ(std::distance(fs::directory_iterator(data / "images"), fs::directory_iterator{}), 3);
  EXPECT_TRUE(fs::exists(data / "manifest.txt"));
  const fs::path image = fs::directory_iterator(data / "images")->path();
  const fs::path out = work() / "pred";
  const Outcome p = cli("predict --checkpoint " + (trained() / "final.ckpt").string() + " --image " + image.string() +
                    " --probs --out " + out.string());
  ASSERT_EQ(p.code, 0) << p.err;
  const std::string id = image.stem().string();
  EXPECT_TRUE(fs::exists(out / (id + "_pred.png")));
  EXPECT_TRUE(fs::exists(out / (id + "_ids.png")));
  EXPECT_TRUE(fs::exists(out / (id + "_probs.npy")));
}

TEST(Cli, FlopsReportsCounts) {
  const Outcome r = cli("flops --height 64 --width 64");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_GT(j["params"].get<double>(), 0.0);
  EXPECT_GT(j["flops"].get<double>(), 0.0);
  EXPECT_EQ(j["input"], json::array({64, 64}));
}
