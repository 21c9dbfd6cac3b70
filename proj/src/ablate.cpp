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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <ostream>
#include <thread>

#include "byte_io.hpp"
#include "lfm/harness.hpp"

namespace lfm {
namespace {

std::string number(double v, const char* fmt = "%.10g") {
  char buf[40];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

// RFC 4180 quoting when a field needs it.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_summary(const DiscreteCell& cell) {
  std::string out;
  for (std::size_t i = 0; i < cell.nodes.size(); ++i) {
    for (const Gene& g : cell.nodes[i]) {
      if (!out.empty()) out += ' ';
      out += std::to_string(i + 2) + "<" + std::to_string(g.input) + ":" + std::string(op_id_name(g.op));
    }
  }
  return out;
}

std::string genotype_summary(const Genotype& g) {
  std::string out = "normal " + cell_summary(g.normal);
  if (g.reduce) out += "; reduce " + cell_summary(*g.reduce);
  return out;
}

struct GridPoint {
  std::string point, mode;
  ExperimentConfig config;
};

std::vector<GridPoint> study_grid(const ExperimentConfig& base, Study study) {
  std::vector<GridPoint> grid;
  switch (study) {
    case Study::kLambdaSweep:
      for (Scalar l : base.ablate.lambdas) {
        GridPoint p{"lambda=" + number(double(l), "%g"), "default", base};
        p.config.weighting.lambda = l;
        grid.push_back(std::move(p));
      }
      break;
    case Study::kSyntheticOnly:
      for (bool only : {false, true}) {
        GridPoint p{"lambda=" + number(double(base.weighting.lambda), "%g"), only ? "synthetic_only" : "default",
                    base};
        p.config.weighting.synthetic_only = only;
        grid.push_back(std::move(p));
      }
      break;
    case Study::kGeneratorCapacity:
      for (GeneratorTier t : base.ablate.tiers) {
        GridPoint p{"tier=" + std::string(tier_name(t)), "default", base};
        p.config.generator.tier = t;
        p.config.generator.hidden.clear();  // tier default widths
        grid.push_back(std::move(p));
      }
      break;
  }
  return grid;
}

std::string run_dir_name(const AblationRun& r) {
  std::string name = r.point + "_" + r.mode + "_seed" + std::to_string(r.seed);
  std::replace(name.begin(), name.end(), '=', '-');
  return name;
}

}  // namespace

std::string_view study_name(Study study) {
  switch (study) {
    case Study::kLambdaSweep: return "lambda_sweep";
    case Study::kSyntheticOnly: return "synthetic_only";
    case Study::kGeneratorCapacity: return "generator_capacity";
  }
  return "?";
}

Study parse_study(std::string_view name) {
  for (Study s : {Study::kLambdaSweep, Study::kSyntheticOnly, Study::kGeneratorCapacity}) {
    if (study_name(s) == name) return s;
  }
  throw ConfigError("unknown study '" + std::string(name) + "' (lambda_sweep, synthetic_only, generator_capacity)");
}

AblationReport cmd_ablate(const ExperimentConfig& config, Study study, const std::filesystem::path& out_dir,
                          Index workers, std::ostream* log) {
  config.validate();
  AblationReport report;
  report.config_hash = config_hash(config);
  report.study = study;

  struct Job {
    GridPoint point;
    AblationRun run;
  };
  std::vector<Job> jobs;
  for (const GridPoint& p : study_grid(config, study)) {
    for (Index s = 0; s < config.ablate.seeds; ++s) {
      Job job{p, {}};
      job.point.config.seed = config.seed + static_cast<std::uint64_t>(s);
      job.run.point = p.point;
      job.run.mode = p.mode;
      job.run.lambda = p.config.weighting.lambda;
      job.run.seed = job.point.config.seed;
      jobs.push_back(std::move(job));
    }
  }

  std::mutex log_mutex;
  auto run_one = [&](Job& job) {
    AblationRun& r = job.run;
    const std::filesystem::path dir = out_dir / "runs" / run_dir_name(r);
    try {
      const SearchReport s = cmd_search(job.point.config, dir);
      if (s.aborted) throw NonFiniteError("search aborted: " + s.abort_reason);
      const EvaluateReport e = cmd_evaluate(s.genotype, job.point.config, dir);
      r.ok = true;
      r.test_error = e.test_error;
      r.genotype = genotype_summary(s.genotype);
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    if (log) {
      std::lock_guard<std::mutex> lock(log_mutex);
      *log << study_name(study) << " " << r.point << " " << r.mode << " seed " << r.seed << ": "
           << (r.ok ? "test error " + number(double(r.test_error), "%.4f") : "FAILED " + r.error) << "\n"
           << std::flush;
    }
  };

  const Index threads = std::clamp<Index>(workers, 1, static_cast<Index>(jobs.size()));
  if (threads <= 1) {
    for (Job& j : jobs) run_one(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (Index t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) run_one(jobs[i]);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  for (Job& j : jobs) report.runs.push_back(std::move(j.run));
  const std::vector<AblationSummaryRow> rows = summarize(report.runs);
  std::filesystem::create_directories(out_dir);
  const std::string prefix = std::string(study_name(study));
  report.runs_path = out_dir / (prefix + "_runs.csv");
  report.summary_path = out_dir / (prefix + "_summary.csv");
  report.plot_path = out_dir / (prefix + ".svg");
  detail::write_file(report.runs_path, format_ablation_runs(report.runs, report.config_hash));
  detail::write_file(report.summary_path, format_ablation_summary(rows, report.config_hash));
  detail::write_file(report.plot_path, ablation_svg(rows, study, report.config_hash));
  return report;
}

std::vector<AblationSummaryRow> summarize(const std::vector<AblationRun>& runs) {
  std::vector<AblationSummaryRow> rows;
  std::vector<std::vector<Scalar>> errors;
  for (const AblationRun& r : runs) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const AblationSummaryRow& row) { return row.point == r.point && row.mode == r.mode; });
    if (it == rows.end()) {
      rows.push_back({r.point, r.mode, r.lambda, 0, 0, 0, 0});
      errors.emplace_back();
      it = rows.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - rows.begin());
    if (r.ok) {
      ++it->ok;
      errors[k].push_back(r.test_error);
    } else {
      ++it->failed;
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::vector<Scalar>& e = errors[k];
    if (e.empty()) {
      rows[k].mean_error = std::numeric_limits<Scalar>::quiet_NaN();
      rows[k].std_error = std::numeric_limits<Scalar>::quiet_NaN();
      continue;
    }
    Scalar mean = 0;
    for (Scalar x : e) mean += x;
    mean /= Scalar(e.size());
    Scalar var = 0;
    for (Scalar x : e) var += (x - mean) * (x - mean);
    rows[k].mean_error = mean;
    rows[k].std_error = e.size() > 1 ? std::sqrt(var / Scalar(e.size() - 1)) : 0;
  }
  return rows;
}

std::string format_ablation_runs(const std::vector<AblationRun>& runs, std::string_view config_hash) {
  std::string out = "# config_hash " + std::string(config_hash) + "\n";
  out += "point,mode,lambda,seed,status,test_error,genotype,error\n";
  for (const AblationRun& r : runs) {
    out += csv_field(r.point) + "," + r.mode + "," + number(double(r.lambda)) + "," + std::to_string(r.seed) + "," +
           (r.ok ? "ok" : "failed") + "," + (r.ok ? number(double(r.test_error)) : "") + "," +
           csv_field(r.genotype) + "," + csv_field(r.error) + "\n";
  }
  return out;
}

std::string format_ablation_summary(const std::vector<AblationSummaryRow>& rows, std::string_view config_hash) {
  std::string out = "# config_hash " + std::string(config_hash) + "\n";
  out += "point,mode,lambda,ok,failed,mean_error,std_error\n";
  for (const AblationSummaryRow& r : rows) {
    const bool any = r.ok > 0;
    out += csv_field(r.point) + "," + r.mode + "," + number(double(r.lambda)) + "," + std::to_string(r.ok) + "," +
           std::to_string(r.failed) + "," + (any ? number(double(r.mean_error)) : "") + "," +
           (any ? number(double(r.std_error)) : "") + "\n";
  }
  return out;
}

std::string ablation_svg(const std::vector<AblationSummaryRow>& rows, Study study, std::string_view config_hash) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;

  // x: lambda for the sweep, a category otherwise. The paired-mode study
  // puts the modes side by side, one series per point.
  const bool by_mode = study == Study::kSyntheticOnly;
  auto category = [&](const AblationSummaryRow& r) -> const std::string& { return by_mode ? r.mode : r.point; };
  auto series = [&](const AblationSummaryRow& r) -> const std::string& { return by_mode ? r.point : r.mode; };
  std::vector<std::string> labels;
  for (const auto& r : rows) {
    if (std::find(labels.begin(), labels.end(), category(r)) == labels.end()) labels.push_back(category(r));
  }
  auto x_of = [&](const AblationSummaryRow& r) -> double {
    if (study == Study::kLambdaSweep) return double(r.lambda);
    return double(std::find(labels.begin(), labels.end(), category(r)) - labels.begin());
  };
  double x_lo = 0, x_hi = 1, y_hi = 0;
  bool first = true;
  for (const auto& r : rows) {
    const double x = x_of(r);
    x_lo = first ? x : std::min(x_lo, x);
    x_hi = first ? x : std::max(x_hi, x);
    first = false;
    if (r.ok > 0) y_hi = std::max(y_hi, double(r.mean_error + r.std_error));
  }
  const double pad = study == Study::kLambdaSweep && x_hi - x_lo > 1e-12 ? 0.06 * (x_hi - x_lo) : 0.5;
  x_lo -= pad;
  x_hi += pad;
  y_hi = y_hi > 0 ? y_hi * 1.1 : 1;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + ph - y / y_hi * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<!-- config_hash " + std::string(config_hash) + " -->\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"" + number(kLeft) + "\" y=\"24\" font-size=\"14\">" + std::string(study_name(study)) +
         ": test error (mean, 1 std)</text>\n";
  // Axes and ticks.
  svg += "<line x1=\"" + number(kLeft) + "\" y1=\"" + number(kTop + ph) + "\" x2=\"" + number(kLeft + pw) +
         "\" y2=\"" + number(kTop + ph) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + number(kLeft) + "\" y1=\"" + number(kTop) + "\" x2=\"" + number(kLeft) + "\" y2=\"" +
         number(kTop + ph) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y_hi * i / 4;
    svg += "<text x=\"" + number(kLeft - 8) + "\" y=\"" + number(py(y) + 4, "%.1f") + "\" text-anchor=\"end\">" +
           number(y, "%.3f") + "</text>\n";
  }
  if (study == Study::kLambdaSweep) {
    for (const auto& r : rows) {
      svg += "<text x=\"" + number(px(double(r.lambda)), "%.1f") + "\" y=\"" + number(kTop + ph + 18) +
             "\" text-anchor=\"middle\">" + number(double(r.lambda), "%g") + "</text>\n";
    }
    svg += "<text x=\"" + number(kLeft + pw / 2) + "\" y=\"" + number(kH - 16) +
           "\" text-anchor=\"middle\">lambda</text>\n";
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      svg += "<text x=\"" + number(px(double(i)), "%.1f") + "\" y=\"" + number(kTop + ph + 18) +
             "\" text-anchor=\"middle\">" + labels[i] + "</text>\n";
    }
  }
  std::vector<std::string> modes;
  for (const auto& r : rows) {
    if (std::find(modes.begin(), modes.end(), series(r)) == modes.end()) modes.push_back(series(r));
  }
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const std::string color = colors[m % 4];
    std::vector<std::pair<double, const AblationSummaryRow*>> pts;
    for (const auto& r : rows) {
      if (series(r) == modes[m] && r.ok > 0) pts.emplace_back(x_of(r), &r);
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string poly;
    for (const auto& [x, r] : pts) {
      poly += (poly.empty() ? "" : " ") + number(px(x), "%.1f") + "," + number(py(double(r->mean_error)), "%.1f");
    }
    if (!poly.empty()) {
      svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + poly + "\"/>\n";
    }
    for (const auto& [x, r] : pts) {
      const double lo = std::max(0.0, double(r->mean_error - r->std_error));
      const double hi = double(r->mean_error + r->std_error);
      svg += "<line x1=\"" + number(px(x), "%.1f") + "\" y1=\"" + number(py(lo), "%.1f") + "\" x2=\"" +
             number(px(x), "%.1f") + "\" y2=\"" + number(py(hi), "%.1f") + "\" stroke=\"" + color + "\"/>\n";
      svg += "<circle cx=\"" + number(px(x), "%.1f") + "\" cy=\"" + number(py(double(r->mean_error)), "%.1f") +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    const double ly = kTop + 16 + 18 * double(m);
    svg += "<line x1=\"" + number(kLeft + pw + 16) + "\" y1=\"" + number(ly - 4) + "\" x2=\"" +
           number(kLeft + pw + 36) + "\" y2=\"" + number(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + number(kLeft + pw + 42) + "\" y=\"" + number(ly) + "\">" + modes[m] + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace lfm
