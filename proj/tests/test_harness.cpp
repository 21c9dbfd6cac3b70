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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lfm/harness.hpp"

using namespace lfm;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSmoke = R"(out = runs/smoke

[data]
per_class = 16
test_per_class = 10

[hypergrad]
mode = first

[search]
iterations = 3
batch = 16

[eval]
epochs = 2
batch = 16
copies = 1
)";

ExperimentConfig smoke() { return parse_config(kSmoke); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lfm_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool throws_config_error_mentioning(const std::string& text, const std::string& needle) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("an empty config is the default config") {
  const ExperimentConfig c = parse_config("");
  CHECK(format_config(c) == format_config(ExperimentConfig{}));
  CHECK(c.search_iterations == 200);
  CHECK(c.data.blobs.num_classes == 4);
  CHECK(c.data.blobs.separation == 3);
  CHECK(c.batch == 32);
}

TEST_CASE("format_config round-trips") {
  ExperimentConfig c = smoke();
  c.weighting.lambda = Scalar(0.1);
  c.ablate.lambdas = {0, 0.1, 0.25};
  c.generator.hidden = {12, 20};
  c.supernet.ops = CandidateOpSet::parse("sep_conv_3x3,max_pool_3x3,zero,identity");
  const std::string text = format_config(c);
  CHECK(format_config(parse_config(text)) == text);
  CHECK(config_hash(parse_config(text)) == config_hash(c));
}

TEST_CASE("unknown keys and sections are hard errors naming the key") {
  CHECK(throws_config_error_mentioning("[data]\nclases = 4\n", "data.clases"));
  CHECK(throws_config_error_mentioning("[dat]\nclasses = 4\n", "[dat]"));
  CHECK(throws_config_error_mentioning("seeds = 4\n", "seeds"));
}

TEST_CASE("malformed values and failed validation are config errors") {
  CHECK(throws_config_error_mentioning("[search]\niterations = ten\n", "search.iterations"));
  CHECK(throws_config_error_mentioning("[hypergrad]\nmode = third\n", "hypergrad.mode"));
  CHECK(throws_config_error_mentioning("[weighting]\nlambda = -1\n", "invalid config"));
  CHECK(throws_config_error_mentioning("[data]\nper_class\n", "line"));
}

TEST_CASE("config hash ignores the output directory and tracks everything else") {
  ExperimentConfig a = smoke();
  ExperimentConfig b = a;
  b.out = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("missing config file is a config error") {
  CHECK_THROWS_AS(load_config("/nonexistent/lfm.ini"), ConfigError);
}

TEST_CASE("experiment data splits are disjoint, sized and deterministic") {
  const ExperimentConfig c = smoke();
  const ExperimentData d = load_experiment_data(c);
  CHECK(d.train.size() + d.val.size() == 16 * 4);
  CHECK(d.test.size() == 10 * 4);
  CHECK(d.train.size() == 32);
  const ExperimentData again = load_experiment_data(c);
  CHECK(again.test.labels == d.test.labels);
  CHECK((again.train.images.array() == d.train.images.array()).all());
}

TEST_CASE("search writes three artifacts embedding the config hash, deterministically") {
  const fs::path dir = scratch("search");
  const ExperimentConfig c = smoke();
  const auto t0 = std::chrono::steady_clock::now();
  const SearchReport a = cmd_search(c, dir / "a");
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(60));
  const SearchReport b = cmd_search(c, dir / "b");
  CHECK_FALSE(a.aborted);
  CHECK(a.iterations == 3);
  CHECK(a.config_hash == config_hash(c));
  for (const fs::path& p : {a.genotype_path, a.metrics_path, a.checkpoint_path}) CHECK(fs::exists(p));
  const std::string hash_line = "# config_hash " + a.config_hash + "\n";
  CHECK(slurp(a.genotype_path).find(hash_line) != std::string::npos);
  CHECK(slurp(a.metrics_path).rfind(hash_line, 0) == 0);
  CHECK(load_checkpoint(a.checkpoint_path).config_hash == a.config_hash);
  CHECK(slurp(a.genotype_path) == slurp(b.genotype_path));
  CHECK(slurp(a.metrics_path) == slurp(b.metrics_path));
  CHECK(slurp(a.checkpoint_path) == slurp(b.checkpoint_path));
  CHECK(parse_genotype(slurp(a.genotype_path)) == a.genotype);
  fs::remove_all(dir);
}

TEST_CASE("one-epoch search runs the epoch's batches") {
  ExperimentConfig c = smoke();
  c.search_iterations = 0;
  c.search_epochs = 1;
  const fs::path dir = scratch("epoch");
  const SearchReport r = cmd_search(c, dir);
  CHECK(r.iterations == 2);  // 32 training examples in batches of 16
  fs::remove_all(dir);
}

TEST_CASE("evaluate refuses ops outside the configured set") {
  const ExperimentConfig c = smoke();
  Genotype g = derive_genotype(ArchParams::zeros(c.supernet), c.supernet.ops);
  ExperimentConfig narrow = c;
  narrow.supernet.ops = CandidateOpSet::parse("sep_conv_3x3,max_pool_3x3,zero,identity");
  g.normal.nodes[0][0].op = OpId::kDilConv5x5;
  try {
    check_genotype_ops(g, narrow.supernet.ops, true);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("dil_conv_5x5") != std::string::npos);
  }
  CHECK_THROWS_AS(cmd_evaluate(g, narrow, {}, true), ValidationError);
}

TEST_CASE("evaluate refuses an op-set hash mismatch unless forced") {
  const ExperimentConfig c = smoke();
  const Genotype g = derive_genotype(ArchParams::zeros(c.supernet), c.supernet.ops);
  ExperimentConfig reordered = c;
  std::vector<OpId> ops = c.supernet.ops.ops();
  std::reverse(ops.begin(), ops.end());
  reordered.supernet.ops = CandidateOpSet(ops);
  CHECK_THROWS_AS(check_genotype_ops(g, reordered.supernet.ops, false), ValidationError);
  CHECK_NOTHROW(check_genotype_ops(g, reordered.supernet.ops, true));
  CHECK_NOTHROW(check_genotype_ops(g, c.supernet.ops, false));
}

TEST_CASE("evaluation parameter counts grow with copies") {
  ExperimentConfig c = smoke();
  const fs::path dir = scratch("copies");
  const SearchReport s = cmd_search(c, dir);
  Index previous = 0;
  for (Index copies : {1, 2, 4}) {
    c.eval.copies = copies;
    const EvaluateReport r = cmd_evaluate(s.genotype, c, dir / std::to_string(copies));
    CAPTURE(copies);
    CHECK(r.parameters > previous);
    CHECK(r.test_accuracy >= 0);
    CHECK(r.test_accuracy <= 1);
    CHECK(r.test_error == doctest::Approx(1 - r.test_accuracy));
    CHECK(slurp(r.report_path).rfind("# config_hash " + config_hash(c) + "\n", 0) == 0);
    previous = r.parameters;
  }
  fs::remove_all(dir);
}

TEST_CASE("study names round-trip") {
  for (Study s : {Study::kLambdaSweep, Study::kSyntheticOnly, Study::kGeneratorCapacity}) {
    CHECK(parse_study(study_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_study("lambda"), ConfigError);
}

TEST_CASE("a one-point lambda grid is search plus evaluate") {
  ExperimentConfig c = smoke();
  c.ablate.lambdas = {Scalar(0.5)};
  c.ablate.seeds = 1;
  const fs::path dir = scratch("grid1");
  const AblationReport r = cmd_ablate(c, Study::kLambdaSweep, dir);
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].ok);
  ExperimentConfig direct = c;
  direct.weighting.lambda = Scalar(0.5);
  const SearchReport s = cmd_search(direct, dir / "direct");
  const EvaluateReport e = cmd_evaluate(s.genotype, direct, dir / "direct");
  CHECK(r.runs[0].test_error == e.test_error);
  fs::remove_all(dir);
}

TEST_CASE("failing sub-runs are recorded and the grid continues") {
  ExperimentConfig c = smoke();
  c.ablate.lambdas = {0, 1};
  c.ablate.seeds = 1;
  c.search_iterations = 1;
  // A learning rate this large diverges in evaluation training.
  c.eval.optimizer.lr = Scalar(1e30);
  c.eval.optimizer.clip_norm = 0;
  const fs::path dir = scratch("failing");
  const AblationReport r = cmd_ablate(c, Study::kLambdaSweep, dir);
  REQUIRE(r.runs.size() == 2);
  for (const AblationRun& run : r.runs) {
    CHECK_FALSE(run.ok);
    CHECK_FALSE(run.error.empty());
  }
  const std::string summary = slurp(r.summary_path);
  CHECK(summary.find("lambda=0,default,0,0,1,,\n") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("paired synthetic-only rows and worker-count independence") {
  ExperimentConfig c = smoke();
  c.ablate.seeds = 2;
  std::string summaries[2];
  for (int w = 0; w < 2; ++w) {
    const fs::path dir = scratch("paired" + std::to_string(w));
    const AblationReport r = cmd_ablate(c, Study::kSyntheticOnly, dir, w == 0 ? 1 : 3);
    REQUIRE(r.runs.size() == 4);
    CHECK(r.runs[0].mode == "default");
    CHECK(r.runs[2].mode == "synthetic_only");
    CHECK(r.runs[0].point == r.runs[2].point);
    summaries[w] = slurp(r.summary_path) + slurp(r.runs_path) + slurp(r.plot_path);
    fs::remove_all(dir);
  }
  CHECK(summaries[0] == summaries[1]);
}

TEST_CASE("generator capacity study orders the tiers") {
  ExperimentConfig c = smoke();
  c.ablate.seeds = 1;
  c.search_iterations = 1;
  const fs::path dir = scratch("tiers");
  const AblationReport r = cmd_ablate(c, Study::kGeneratorCapacity, dir);
  REQUIRE(r.runs.size() == 3);
  CHECK(r.runs[0].point == "tier=tiny");
  CHECK(r.runs[1].point == "tier=small");
  CHECK(r.runs[2].point == "tier=medium");
  fs::remove_all(dir);
}

TEST_CASE("summary uses the sample standard deviation over successful seeds") {
  std::vector<AblationRun> runs(4);
  const Scalar errors[] = {0.1, 0.2, 0.3, 0};
  for (int i = 0; i < 4; ++i) {
    runs[i].point = "lambda=1";
    runs[i].mode = "default";
    runs[i].lambda = 1;
    runs[i].ok = i < 3;
    runs[i].test_error = errors[i];
  }
  const std::vector<AblationSummaryRow> rows = summarize(runs);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].ok == 3);
  CHECK(rows[0].failed == 1);
  CHECK(rows[0].mean_error == doctest::Approx(0.2));
  CHECK(rows[0].std_error == doctest::Approx(0.1));
}

TEST_CASE("ablation CSV quotes fields that need it") {
  AblationRun r;
  r.point = "lambda=1";
  r.mode = "default";
  r.error = "bad, \"quoted\" failure";
  const std::string csv = format_ablation_runs({r}, "h");
  CHECK(csv.find("\"bad, \"\"quoted\"\" failure\"") != std::string::npos);
  CHECK(csv.rfind("# config_hash h\npoint,mode,lambda,seed,status,test_error,genotype,error\n", 0) == 0);
}

TEST_CASE("ablation plot is an SVG with one polyline per mode") {
  std::vector<AblationSummaryRow> rows;
  for (double l : {0.0, 1.0, 2.0}) {
    rows.push_back({"lambda=" + std::to_string(int(l)), "default", Scalar(l), 3, 0, Scalar(0.1 + 0.01 * l), 0.01});
  }
  const std::string svg = ablation_svg(rows, Study::kLambdaSweep, "cafe");
  CHECK(svg.rfind("<svg ", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("config_hash cafe") != std::string::npos);
  std::size_t polylines = 0;
  for (std::size_t at = svg.find("<polyline"); at != std::string::npos; at = svg.find("<polyline", at + 1)) ++polylines;
  CHECK(polylines == 1);
}

TEST_CASE("verify passes and an injected sign error fails its named term") {
  VerifyOptions o;
  o.quadratic_instances = 20;
  for (const VerifyCheck& c : cmd_verify(o)) {
    CAPTURE(c.name);
    CHECK(c.passed);
  }
  for (HypergradTerm t : kAllHypergradTerms) {
    o.negate_term = t;
    bool named = false, lambda_zero = false;
    for (const VerifyCheck& c : cmd_verify(o)) {
      if (c.name == "quadratic term " + std::string(term_name(t))) named = !c.passed;
      if (c.name == "lambda=0 laws") lambda_zero = c.passed;
      if (c.name.rfind("quadratic term ", 0) == 0 && c.name != "quadratic term " + std::string(term_name(t))) {
        CAPTURE(c.name);
        CHECK(c.passed);
      }
    }
    CAPTURE(term_name(t));
    CHECK(named);
    CHECK(lambda_zero);
  }
}
