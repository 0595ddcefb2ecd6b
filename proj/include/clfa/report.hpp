#pragma once
// report.hpp - aggregates MetricsRecords from run directories into a
// Markdown + CSV summary (mean and sample std over runs, grouped by
// protocol) and renders a small SVG loss curve per run when metrics exist.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "clfa/evaluate.hpp"

namespace clfa {

namespace detail {

// last record per protocol wins within one run (earlier ones are periodic
// evals of the same run)
inline std::map<std::string, MetricsRecord> read_run_records(const std::string& dir) {
  namespace fs = std::filesystem;
  std::map<std::string, MetricsRecord> out;
  auto absorb = [&](const nlohmann::json& j) {
    MetricsRecord r = metrics_from_json(j);
    out[r.protocol] = std::move(r);
  };
  const fs::path evals = fs::path(dir) / "eval.jsonl";
  if (fs::is_regular_file(evals)) {
    std::ifstream in(evals);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        absorb(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception&) {
        throw DataError("unparsable record in " + evals.string());
      }
    }
  }
  if (fs::is_directory(dir)) {
    std::vector<fs::path> records;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".json" &&
          e.path().filename().string().rfind("record", 0) == 0)
        records.push_back(e.path());
    std::sort(records.begin(), records.end());
    for (const auto& p : records) {
      std::ifstream in(p);
      try {
        absorb(nlohmann::json::parse(in));
      } catch (const nlohmann::json::exception&) {
        throw DataError("unparsable record file " + p.string());
      }
    }
  }
  return out;
}

struct Stats {
  double mean = 0;
  double std_dev = 0;  // sample std (n-1); NaN marks a single observation
  int n = 0;
};

inline Stats stats_of(const std::vector<double>& v) {
  Stats s;
  s.n = static_cast<int>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(s.n);
  if (s.n < 2) {
    s.std_dev = std::nan("");
    return s;
  }
  double acc = 0;
  for (double x : v) acc += (x - s.mean) * (x - s.mean);
  s.std_dev = std::sqrt(acc / static_cast<double>(s.n - 1));
  return s;
}

inline void write_loss_svg(const std::string& metrics_path, const std::string& out_path) {
  std::ifstream in(metrics_path);
  std::vector<std::pair<double, double>> pts;  // (iter, total)
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      pts.emplace_back(j.at("iter").get<double>(), j.at("total").get<double>());
    } catch (const nlohmann::json::exception&) {
      return;  // metrics are advisory; skip malformed files silently
    }
  }
  if (pts.size() < 2) return;
  double x0 = pts.front().first, x1 = pts.back().first, y0 = pts[0].second, y1 = y0;
  for (const auto& [x, y] : pts) {
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  if (x1 <= x0) return;
  if (y1 <= y0) y1 = y0 + 1;
  const int w = 640, h = 320, pad = 40;
  std::ofstream out(out_path, std::ios::trunc);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n<polyline fill='none' "
         "stroke='#346' stroke-width='1.5' points='";
  for (const auto& [x, y] : pts) {
    const double px = pad + (x - x0) / (x1 - x0) * (w - 2 * pad);
    const double py = h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad);
    out << px << "," << py << " ";
  }
  out << "'/>\n<text x='" << pad << "' y='" << h - 8 << "' font-size='12'>iter " << x0 << " .. "
      << x1 << ", total " << y0 << " .. " << y1 << "</text>\n</svg>\n";
}

}  // namespace detail

inline void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  require_arg(!run_dirs.empty(), "report wants at least one run directory");

  std::vector<std::pair<std::string, std::map<std::string, MetricsRecord>>> runs;
  std::vector<std::string> missing;
  for (const auto& dir : run_dirs) {
    if (!fs::is_directory(dir)) {
      missing.push_back(dir);
      continue;
    }
    auto recs = detail::read_run_records(dir);
    if (recs.empty())
      missing.push_back(dir);
    else
      runs.emplace_back(dir, std::move(recs));
  }
  if (!missing.empty()) {
    std::string msg = "no metrics records found in:";
    for (const auto& d : missing) msg += " " + d;
    throw DataError(msg);
  }

  // protocol -> target -> per-run accuracy (run order preserved)
  std::map<std::string, std::map<std::string, std::vector<double>>> table;
  std::map<std::string, std::vector<double>> averages;
  for (const auto& [dir, recs] : runs)
    for (const auto& [proto, rec] : recs) {
      for (const auto& [target, acc] : rec.per_target) table[proto][target].push_back(acc);
      averages[proto].push_back(rec.average);
    }

  fs::create_directories(out_dir);
  std::ofstream md(fs::path(out_dir) / "report.md", std::ios::trunc);
  std::ofstream csv(fs::path(out_dir) / "report.csv", std::ios::trunc);
  if (!md || !csv) throw IoError("cannot write report under " + out_dir);

  md << "# Run summary\n\nRuns:\n";
  for (const auto& [dir, recs] : runs) md << "- `" << dir << "`\n";
  md << "\nStd is the sample standard deviation over runs (empty for a single run).\n";
  csv << "protocol,target,mean,std,n_runs\n";

  for (const auto& [proto, targets] : table) {
    md << "\n## protocol: " << proto << "\n\n| target | mean | std | runs |\n|---|---|---|---|\n";
    auto emit = [&](const std::string& target, const std::vector<double>& vals) {
      const auto s = detail::stats_of(vals);
      md << "| " << target << " | " << s.mean << " | ";
      if (std::isnan(s.std_dev))
        md << "";
      else
        md << s.std_dev;
      md << " | " << s.n << " |\n";
      csv << proto << "," << target << "," << s.mean << ",";
      if (!std::isnan(s.std_dev)) csv << s.std_dev;
      csv << "," << s.n << "\n";
    };
    for (const auto& [target, vals] : targets) emit(target, vals);
    emit("average", averages[proto]);
  }

  for (const auto& [dir, recs] : runs) {
    const fs::path metrics = fs::path(dir) / "metrics.jsonl";
    if (fs::is_regular_file(metrics)) {
      std::string safe = fs::path(dir).filename().string();
      if (safe.empty()) safe = "run";
      detail::write_loss_svg(metrics.string(),
                             (fs::path(out_dir) / ("loss_" + safe + ".svg")).string());
    }
  }
}

}  // namespace clfa
