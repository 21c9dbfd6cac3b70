// Copyright 2026 The lfmcw Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "lfm/data.hpp"

using namespace lfm;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "lfmcw");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lfm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

constexpr const char* kSmoke =
    "[data]\nper_class = 16\ntest_per_class = 10\n"
    "[hypergrad]\nmode = first\n"
    "[search]\niterations = 2\nbatch = 16\n"
    "[eval]\nepochs = 1\nbatch = 16\ncopies = 1\n";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"search"}).code == cli::kExitUsage);
  const Result missing = run({"search", "--config", "/nonexistent/lfm.ini"});
  CHECK(missing.code == cli::kExitUsage);
  CHECK(missing.err.find("/nonexistent/lfm.ini") != std::string::npos);
  CHECK(run({"verify", "--negate-term", "bogus"}).code == cli::kExitUsage);
}

TEST_CASE("help exits with 0") {
  const Result r = run({"--help"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("search") != std::string::npos);
}

TEST_CASE("unknown config keys exit with 2 naming the key") {
  const fs::path dir = scratch("badkey");
  const Result r = run({"search", "--config", write(dir / "c.ini", "[search]\niteration = 3\n").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("search.iteration") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("search then evaluate through the command line") {
  const fs::path dir = scratch("flow");
  const std::string config = write(dir / "c.ini", kSmoke).string();
  const Result s = run({"search", "--config", config, "--out", (dir / "run").string(), "--lambda", "0.5", "--seed", "3"});
  REQUIRE(s.code == cli::kExitOk);
  CHECK(fs::exists(dir / "run" / "genotype.txt"));
  CHECK(fs::exists(dir / "run" / "metrics.csv"));
  CHECK(fs::exists(dir / "run" / "checkpoint.lfmk"));
  const Result e = run({"evaluate", (dir / "run" / "genotype.txt").string(), "--config", config, "--out",
                        (dir / "run").string(), "--lambda", "0.5", "--seed", "3", "--copies", "2"});
  CHECK(e.code == cli::kExitOk);
  CHECK(e.out.find("copies 2") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "evaluation.csv"));
  // A reordered op set changes the hash: refused without --force.
  const std::string reordered =
      write(dir / "r.ini",
            std::string(kSmoke) +
                "[supernet]\nops = identity,zero,avg_pool_3x3,max_pool_3x3,dil_conv_5x5,dil_conv_3x3,sep_conv_5x5,"
                "sep_conv_3x3\n")
          .string();
  const std::string genotype = (dir / "run" / "genotype.txt").string();
  CHECK(run({"evaluate", genotype, "--config", reordered, "--out", (dir / "x").string()}).code == cli::kExitFailure);
  CHECK(run({"evaluate", genotype, "--config", reordered, "--out", (dir / "x").string(), "--force"}).code ==
        cli::kExitOk);
  fs::remove_all(dir);
}

TEST_CASE("mode override is validated") {
  const fs::path dir = scratch("mode");
  const std::string config = write(dir / "c.ini", kSmoke).string();
  CHECK(run({"search", "--config", config, "--mode", "third"}).code == cli::kExitUsage);
  CHECK(run({"search", "--config", config, "--lambda", "-1"}).code == cli::kExitUsage);
  fs::remove_all(dir);
}

TEST_CASE("verify reports failures through the exit code") {
  CHECK(run({"verify", "--instances", "5"}).code == cli::kExitOk);
  const Result r = run({"verify", "--instances", "5", "--negate-term", "w1_path"});
  CHECK(r.code == cli::kExitFailure);
  CHECK(r.out.find("FAIL  quadratic term w1_path") != std::string::npos);
}

TEST_CASE("convert packs a raw directory") {
  const fs::path dir = scratch("convert");
  for (int c = 0; c < 2; ++c) {
    fs::create_directories(dir / "raw" / ("class" + std::to_string(c)));
    for (int i = 0; i < 3; ++i) {
      write(dir / "raw" / ("class" + std::to_string(c)) / (std::to_string(i) + ".raw"), std::string(16, char(40 * c + i)));
    }
  }
  const Result r = run({"convert", (dir / "raw").string(), (dir / "out.lfmc").string(), "--height", "4", "--width", "4"});
  CHECK(r.code == cli::kExitOk);
  const LabeledImageSet d = load_binary(dir / "out.lfmc");
  CHECK(d.size() == 6);
  CHECK(d.num_classes == 2);
  fs::remove_all(dir);
}
