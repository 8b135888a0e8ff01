#pragma once

#include <fbm/evalkit/evaluate.hpp>

#include <filesystem>
#include <optional>

namespace fbm::eval {

inline constexpr const char* kScoresFile = "scores.csv";

// Identifies one run configuration inside a scores table.
struct RunKey {
  std::string variant, env, occlusion, dynamics, routing;

  auto tie() const { return std::tie(variant, env, occlusion, dynamics, routing); }
  bool operator<(const RunKey& o) const { return tie() < o.tie(); }
  bool operator==(const RunKey& o) const { return tie() == o.tie(); }
  std::string label() const { return variant + "/" + routing + "/" + occlusion + "/dyn" + dynamics; }
};

inline RunKey key_of(const ScoreRow& r) { return {r.variant, r.env, r.occlusion, r.dynamics, r.routing}; }

struct TaskLine {
  RunKey key;
  long step = 0;
  std::string task;
  MeanStd across_seeds;
  int seeds = 0;
};

struct SummaryLine {
  RunKey key;
  long step = 0;
  double iqm = 0.0;
  Interval ci;
  std::optional<double> normalised;
};

struct Report {
  std::vector<TaskLine> tasks;
  std::vector<SummaryLine> summary;
};

// Reads scores.csv from every run directory. Missing or empty inputs are
// reported together, by name.
inline std::vector<ScoreRow> load_runs(const std::vector<std::string>& dirs) {
  require(!dirs.empty(), "report: no run directories given (expected each to contain " +
                             std::string(kScoresFile) + ")");
  std::vector<std::string> missing;
  std::vector<ScoreRow> rows;
  for (const std::string& d : dirs) {
    const std::filesystem::path p = std::filesystem::path(d) / kScoresFile;
    if (!std::filesystem::is_regular_file(p)) {
      missing.push_back(p.string());
      continue;
    }
    auto part = read_scores_csv(p.string());
    if (part.empty()) {
      missing.push_back(p.string() + " (no rows)");
      continue;
    }
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (!missing.empty()) {
    std::string msg = "report: missing run outputs; expected files:";
    for (const std::string& m : missing) msg += "\n  " + m;
    throw ContractViolation(msg);
  }
  return rows;
}

// The oracle-state FB run that `k` is normalised against: variant fb,
// routing none, same env and dynamics, preferring the same occlusion.
inline std::optional<RunKey> baseline_for(const RunKey& k, const std::vector<RunKey>& keys) {
  std::optional<RunKey> any;
  for (const RunKey& b : keys) {
    if (b.variant != "fb" || b.routing != "none" || b.env != k.env || b.dynamics != k.dynamics) continue;
    if (b.occlusion == k.occlusion) return b;
    if (!any) any = b;
  }
  return any;
}

// Per-task mean +- std across seeds and all-task IQM with a bootstrap CI,
// each at the run's best checkpoint.
inline Report build_report(const std::vector<ScoreRow>& rows, std::uint64_t seed = 0, int resamples = 1000) {
  require(!rows.empty(), "report: no score rows");
  std::map<RunKey, std::vector<ScoreRow>> runs;
  for (const ScoreRow& r : rows) runs[key_of(r)].push_back(r);
  Report rep;
  std::vector<RunKey> keys;
  for (const auto& [k, rs] : runs) {
    keys.push_back(k);
    const long step = best_step(rs);
    const auto best = at_step(rs, step);
    const Grouped g = group_by_task_seed(best);
    for (const auto& [task, by_seed] : g) {
      std::vector<double> per_seed;
      for (const auto& [s, rets] : by_seed) per_seed.push_back(iqm(rets));
      rep.tasks.push_back({k, step, task, mean_std(per_seed), static_cast<int>(per_seed.size())});
    }
    Rng rng(derive_seed(seed, fnv1a(k.label())));
    rep.summary.push_back({k, step, aggregate(g), aggregate_ci(best, rng, resamples), std::nullopt});
  }
  for (SummaryLine& s : rep.summary) {
    const auto b = baseline_for(s.key, keys);
    if (!b) continue;
    for (const SummaryLine& o : rep.summary) {
      if (o.key == *b && o.iqm != 0.0) s.normalised = s.iqm / o.iqm;
    }
  }
  return rep;
}

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void write_task_table(const std::string& path, const Report& rep) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "variant,env,occlusion,dynamics,routing,step,task,mean,std,seeds,mean_pm_std\n";
  for (const TaskLine& t : rep.tasks) {
    os << t.key.variant << ',' << t.key.env << ',' << t.key.occlusion << ',' << t.key.dynamics << ','
       << t.key.routing << ',' << t.step << ',' << t.task << ',' << fmt(t.across_seeds.mean) << ','
       << fmt(t.across_seeds.std) << ',' << t.seeds << ',' << fmt(t.across_seeds.mean) << " ± "
       << fmt(t.across_seeds.std) << '\n';
  }
}

inline void write_summary_table(const std::string& path, const Report& rep) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "variant,env,occlusion,dynamics,routing,step,iqm,ci_lo,ci_hi,normalised\n";
  for (const SummaryLine& s : rep.summary) {
    os << s.key.variant << ',' << s.key.env << ',' << s.key.occlusion << ',' << s.key.dynamics << ','
       << s.key.routing << ',' << s.step << ',' << fmt(s.iqm) << ',' << fmt(s.ci.lo) << ',' << fmt(s.ci.hi)
       << ',' << (s.normalised ? fmt(*s.normalised) : std::string{}) << '\n';
  }
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Horizontal bars of the all-task IQM with CI whiskers. Bars are scaled by
// the baseline score when every run has one, raw otherwise.
inline std::string render_svg(const Report& rep) {
  const bool normalised = std::all_of(rep.summary.begin(), rep.summary.end(),
                                      [](const SummaryLine& s) { return s.normalised.has_value(); });
  struct Bar {
    std::string label;
    double v, lo, hi;
  };
  std::vector<Bar> bars;
  double vmax = 0.0;
  for (const SummaryLine& s : rep.summary) {
    const double scale = normalised && s.iqm != 0.0 ? *s.normalised / s.iqm : 1.0;
    bars.push_back({s.key.label(), s.iqm * scale, s.ci.lo * scale, s.ci.hi * scale});
    vmax = std::max({vmax, s.iqm * scale, s.ci.hi * scale});
  }
  if (vmax <= 0.0) vmax = 1.0;
  const int row_h = 26, left = 330, width = 360, top = 40;
  const int height = top + row_h * static_cast<int>(bars.size()) + 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 60 << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"10\" y=\"22\" font-size=\"14\">All-task IQM"
     << (normalised ? " (normalised to oracle-state FB)" : "") << ", 95% bootstrap CI</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const Bar& b = bars[i];
    const int y = top + row_h * static_cast<int>(i);
    const auto px = [&](double v) { return left + static_cast<int>(std::max(0.0, v) / vmax * width); };
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 16 << "\" text-anchor=\"end\">" << xml_escape(b.label)
       << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << y + 4 << "\" width=\"" << px(b.v) - left
       << "\" height=\"16\" fill=\"#4c78a8\"/>\n";
    os << "<line x1=\"" << px(b.lo) << "\" x2=\"" << px(b.hi) << "\" y1=\"" << y + 12 << "\" y2=\"" << y + 12
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(b.hi) + 4 << "\" y=\"" << y + 16 << "\">" << fmt(b.v) << "</text>\n";
  }
  const int axis_y = top + row_h * static_cast<int>(bars.size()) + 8;
  os << "<line x1=\"" << left << "\" x2=\"" << left + width << "\" y1=\"" << axis_y << "\" y2=\"" << axis_y
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left << "\" y=\"" << axis_y + 16 << "\">0</text>\n";
  os << "<text x=\"" << left + width << "\" y=\"" << axis_y + 16 << "\" text-anchor=\"end\">" << fmt(vmax)
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

// Writes tasks.csv, summary.csv and summary.svg into `out_dir`.
inline Report write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                           std::uint64_t seed = 0) {
  const Report rep = build_report(load_runs(run_dirs), seed);
  std::filesystem::create_directories(out_dir);
  write_task_table((std::filesystem::path(out_dir) / "tasks.csv").string(), rep);
  write_summary_table((std::filesystem::path(out_dir) / "summary.csv").string(), rep);
  std::ofstream svg((std::filesystem::path(out_dir) / "summary.svg").string(), std::ios::trunc);
  svg << render_svg(rep);
  return rep;
}

}  // namespace fbm::eval
