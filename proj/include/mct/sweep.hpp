#pragma once

#include "mct/complementarity.hpp"
#include "mct/datagen.hpp"
#include "mct/fusion.hpp"
#include "mct/parallel.hpp"
#include "mct/presets.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace mct {

// One sweep cell: a grid value paired with a replicate seed. Absent fields
// stay NaN (e.g. pair terms in a subset-only sweep, strategies not run).
struct SweepRow {
  std::string param;  // "alpha" or "sigma"
  double value = 0.0;
  std::uint64_t seed = 0;
  double i_xz = std::numeric_limits<double>::quiet_NaN();
  double i_x_yz = std::numeric_limits<double>::quiet_NaN();
  double i_z_yx = std::numeric_limits<double>::quiet_NaN();
  double i_sy = std::numeric_limits<double>::quiet_NaN();
  double gamma_x = std::numeric_limits<double>::quiet_NaN();
  double gamma_z = std::numeric_limits<double>::quiet_NaN();
  double metric_pair = std::numeric_limits<double>::quiet_NaN();
  double metric_subset = std::numeric_limits<double>::quiet_NaN();
  bool metric_defined = false;
  double clean_naive = std::numeric_limits<double>::quiet_NaN();
  double missing_naive = std::numeric_limits<double>::quiet_NaN();
  double ratio_naive = std::numeric_limits<double>::quiet_NaN();
  double clean_ume = std::numeric_limits<double>::quiet_NaN();
  double missing_ume = std::numeric_limits<double>::quiet_NaN();
  double ratio_ume = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  std::string error;  // empty on success
};

inline constexpr const char* kSweepSchemaComment = "# mct-sweep-v1";

inline std::string sweep_csv_header() {
  return "param,value,seed,i_xz,i_x_yz,i_z_yx,i_sy,gamma_x,gamma_z,metric_pair,metric_subset,"
         "metric_defined,clean_naive,missing_naive,ratio_naive,clean_ume,missing_ume,ratio_ume,"
         "seconds,error";
}

namespace detail {

inline std::string fmt_full(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

}  // namespace detail

inline std::string to_csv(const SweepRow& r) {
  std::string err = r.error;
  std::replace(err.begin(), err.end(), ',', ';');
  std::replace(err.begin(), err.end(), '\n', ' ');
  std::ostringstream os;
  os << r.param << ',' << detail::fmt_full(r.value) << ',' << r.seed << ','
     << detail::fmt_full(r.i_xz) << ',' << detail::fmt_full(r.i_x_yz) << ','
     << detail::fmt_full(r.i_z_yx) << ',' << detail::fmt_full(r.i_sy) << ','
     << detail::fmt_full(r.gamma_x) << ',' << detail::fmt_full(r.gamma_z) << ','
     << detail::fmt_full(r.metric_pair) << ',' << detail::fmt_full(r.metric_subset) << ','
     << (r.metric_defined ? 1 : 0) << ',' << detail::fmt_full(r.clean_naive) << ','
     << detail::fmt_full(r.missing_naive) << ',' << detail::fmt_full(r.ratio_naive) << ','
     << detail::fmt_full(r.clean_ume) << ',' << detail::fmt_full(r.missing_ume) << ','
     << detail::fmt_full(r.ratio_ume) << ',' << detail::fmt_full(r.seconds) << ',' << err;
  return os.str();
}

inline SweepRow sweep_row_from_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  if (cells.size() != 20) throw IoError("sweep row has " + std::to_string(cells.size()) + " fields");
  SweepRow r;
  r.param = cells[0];
  r.value = detail::parse_double(cells[1]);
  r.seed = std::stoull(cells[2]);
  r.i_xz = detail::parse_double(cells[3]);
  r.i_x_yz = detail::parse_double(cells[4]);
  r.i_z_yx = detail::parse_double(cells[5]);
  r.i_sy = detail::parse_double(cells[6]);
  r.gamma_x = detail::parse_double(cells[7]);
  r.gamma_z = detail::parse_double(cells[8]);
  r.metric_pair = detail::parse_double(cells[9]);
  r.metric_subset = detail::parse_double(cells[10]);
  r.metric_defined = cells[11] == "1";
  r.clean_naive = detail::parse_double(cells[12]);
  r.missing_naive = detail::parse_double(cells[13]);
  r.ratio_naive = detail::parse_double(cells[14]);
  r.clean_ume = detail::parse_double(cells[15]);
  r.missing_ume = detail::parse_double(cells[16]);
  r.ratio_ume = detail::parse_double(cells[17]);
  r.seconds = detail::parse_double(cells[18]);
  r.error = cells[19];
  return r;
}

inline std::vector<SweepRow> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  std::vector<SweepRow> rows;
  if (!in) return rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#' || line.rfind("param,", 0) == 0) continue;
    rows.push_back(sweep_row_from_csv(line));
  }
  return rows;
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) throw StructuralError("spearman: need two aligned samples");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x);
  const std::vector<double> ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Per-grid-value mean/std of one row field plus Spearman trends: over the
// value-wise means and over the raw rows.
struct TrendStat {
  std::vector<double> values;
  std::vector<double> means;
  std::vector<double> stds;
  double spearman_means = 0.0;
  double spearman_rows = 0.0;
  int used_rows = 0;
};

inline TrendStat trend(const std::vector<SweepRow>& rows,
                       const std::function<double(const SweepRow&)>& field) {
  std::map<double, std::vector<double>> groups;
  std::vector<double> xs, ys;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    const double v = field(r);
    if (std::isnan(v)) continue;
    groups[r.value].push_back(v);
    xs.push_back(r.value);
    ys.push_back(v);
  }
  TrendStat t;
  t.used_rows = static_cast<int>(xs.size());
  for (const auto& [value, vals] : groups) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    t.values.push_back(value);
    t.means.push_back(mean);
    t.stds.push_back(vals.size() > 1 ? std::sqrt(ss / static_cast<double>(vals.size() - 1)) : 0.0);
  }
  if (t.values.size() >= 2) t.spearman_means = spearman(t.values, t.means);
  if (xs.size() >= 2) t.spearman_rows = spearman(xs, ys);
  return t;
}

// ---- sweep runner ----------------------------------------------------------

struct SweepPlan {
  std::string kind;  // "two-modal" | "multi-modal" | "remix"
  std::vector<double> grid;
  std::vector<std::uint64_t> seeds;
  bool run_naive = true;
  bool run_ume = true;
  int parallel = 1;
  TwoModalPreset two;
  MultiModalPreset multi;
  RemixPreset remix;

  void validate() const {
    if (kind != "two-modal" && kind != "multi-modal" && kind != "remix")
      throw StructuralError("sweep: unknown kind '" + kind + "'");
    if (grid.empty()) throw StructuralError("sweep: empty parameter grid");
    if (seeds.empty()) throw StructuralError("sweep: empty seed list");
    std::vector<std::uint64_t> s = seeds;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end())
      throw StructuralError("sweep: seeds must be distinct");
  }
};

namespace detail {

inline void run_strategies(const SweepPlan& plan, const MultiModalDataset& train_ds,
                           const MultiModalDataset& val_ds, const FusionModelSpec& naive_model,
                           const FusionModelSpec& ume_model, StrategyConfig naive_cfg,
                           StrategyConfig ume_cfg, std::uint64_t seed, SweepRow& row) {
  if (plan.run_naive) {
    naive_cfg.seed = seed;
    const FusionModel m = train(train_ds, naive_model, naive_cfg);
    const EvalReport rep = evaluate_missing(m, val_ds);
    row.clean_naive = rep.clean_accuracy;
    double s = 0.0;
    for (double a : rep.missing_accuracy) s += a;
    row.missing_naive = s / static_cast<double>(rep.missing_accuracy.size());
    row.ratio_naive = rep.robustness_ratio;
  }
  if (plan.run_ume) {
    ume_cfg.seed = seed;
    const FusionModel m = train(train_ds, ume_model, ume_cfg);
    const EvalReport rep = evaluate_missing(m, val_ds);
    row.clean_ume = rep.clean_accuracy;
    double s = 0.0;
    for (double a : rep.missing_accuracy) s += a;
    row.missing_ume = s / static_cast<double>(rep.missing_accuracy.size());
    row.ratio_ume = rep.robustness_ratio;
  }
}

inline SweepRow run_cell(const SweepPlan& plan, double value, std::uint64_t seed) {
  SweepRow row;
  row.param = plan.kind == "remix" ? "sigma" : "alpha";
  row.value = value;
  row.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (plan.kind == "two-modal") {
      TwoModalConfig data = plan.two.data;
      data.alpha = value;
      data.seed = seed;
      auto [train_ds, val_ds] = gen_two_modal(data);
      ComplementarityConfig comp = plan.two.comp;
      comp.mine.seed = seed;
      comp.mine.replicates = 1;  // sweep seeds are the replicates
      const ComplementarityReport rep =
          estimate_complementarity(train_ds, val_ds, SubsetSpec{{0}}, comp);
      row.i_xz = rep.i_xz.value;
      row.i_x_yz = rep.i_x_yz.value;
      row.i_z_yx = rep.i_z_yx.value;
      row.i_sy = rep.i_sy.value;
      row.gamma_x = rep.gamma_x;
      row.gamma_z = rep.gamma_z;
      row.metric_pair = rep.metric_pair;
      row.metric_subset = rep.metric_subset;
      row.metric_defined = rep.metric_defined;
      run_strategies(plan, train_ds, val_ds, plan.two.naive_model, plan.two.ume_model,
                     plan.two.naive_cfg, plan.two.ume_cfg, seed, row);
    } else if (plan.kind == "multi-modal") {
      MultiModalConfig data = plan.multi.data;
      data.alpha = value;
      data.seed = seed;
      auto [train_ds, val_ds] = gen_multi_modal(data);
      ComplementarityConfig comp = plan.multi.comp;
      comp.mine.seed = seed;
      comp.mine.replicates = 1;
      const ComplementarityReport rep =
          estimate_complementarity(train_ds, val_ds, plan.multi.subset, comp);
      row.i_xz = rep.i_xz.value;
      row.i_x_yz = rep.i_x_yz.value;
      if (comp.estimate_pair_terms) row.i_z_yx = rep.i_z_yx.value;
      row.i_sy = rep.i_sy.value;
      row.gamma_x = rep.gamma_x;
      if (comp.estimate_pair_terms) row.gamma_z = rep.gamma_z;
      row.metric_pair = rep.metric_pair;
      row.metric_subset = rep.metric_subset;
      row.metric_defined = rep.metric_defined;
      run_strategies(plan, train_ds, val_ds, plan.multi.naive_model, plan.multi.ume_model,
                     plan.multi.naive_cfg, plan.multi.ume_cfg, seed, row);
    } else {
      auto [train_ds, val_ds] = gen_remix_datasets(plan.remix, value, seed);
      ComplementarityConfig comp = plan.remix.comp;
      comp.mine.seed = seed;
      comp.mine.replicates = 1;
      const ComplementarityReport rep =
          estimate_complementarity(train_ds, val_ds, SubsetSpec{{0}}, comp);
      row.i_xz = rep.i_xz.value;
      row.i_x_yz = rep.i_x_yz.value;
      row.i_z_yx = rep.i_z_yx.value;
      row.i_sy = rep.i_sy.value;
      row.gamma_x = rep.gamma_x;
      row.gamma_z = rep.gamma_z;
      row.metric_pair = rep.metric_pair;
      row.metric_subset = rep.metric_subset;
      row.metric_defined = rep.metric_defined;
    }
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

}  // namespace detail

// Runs every (grid value, seed) cell, up to plan.parallel at a time. on_row,
// when given, receives completed rows in grid-major order (so a crash leaves
// a clean prefix on disk); cells already present in `existing` are reused
// instead of recomputed.
inline std::vector<SweepRow> run_sweep(const SweepPlan& plan,
                                       const std::function<void(const SweepRow&)>& on_row = {},
                                       const std::vector<SweepRow>& existing = {}) {
  plan.validate();
  struct Cell {
    double value;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double v : plan.grid)
    for (std::uint64_t s : plan.seeds) cells.push_back({v, s});
  std::vector<SweepRow> rows(cells.size());
  std::vector<char> done(cells.size(), 0);

  auto match = [&](const Cell& c, const SweepRow& r) {
    return r.value == c.value && r.seed == c.seed && r.error.empty();
  };
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (const auto& r : existing)
      if (match(cells[i], r)) {
        rows[i] = r;
        done[i] = 1;
        break;
      }

  std::mutex emit_mutex;
  std::size_t next_emit = 0;
  std::vector<char> finished(cells.size(), 0);
  auto emit_ready = [&] {
    while (next_emit < cells.size() && finished[next_emit]) {
      if (on_row) on_row(rows[next_emit]);
      ++next_emit;
    }
  };

  run_parallel(static_cast<int>(cells.size()), plan.parallel, [&](int i) {
    const auto idx = static_cast<std::size_t>(i);
    if (!done[idx]) rows[idx] = detail::run_cell(plan, cells[idx].value, cells[idx].seed);
    std::lock_guard<std::mutex> lock(emit_mutex);
    finished[idx] = 1;
    emit_ready();
  });
  return rows;
}

// Per-value means/stds plus Spearman trends for the headline columns.
inline Json summarize_sweep(const std::vector<SweepRow>& rows) {
  Json j;
  long failures = 0;
  for (const auto& r : rows)
    if (!r.error.empty()) ++failures;
  j["rows"] = rows.size();
  j["failed_rows"] = failures;
  auto put = [&](const char* name, const std::function<double(const SweepRow&)>& f) {
    const TrendStat t = trend(rows, f);
    if (t.used_rows == 0) return;
    Json e;
    e["values"] = t.values;
    e["means"] = t.means;
    e["stds"] = t.stds;
    e["spearman_means"] = t.spearman_means;
    e["spearman_rows"] = t.spearman_rows;
    j[name] = e;
  };
  put("metric_pair", [](const SweepRow& r) { return r.metric_pair; });
  put("metric_subset", [](const SweepRow& r) { return r.metric_subset; });
  put("gamma_x", [](const SweepRow& r) { return r.gamma_x; });
  put("i_xz", [](const SweepRow& r) { return r.i_xz; });
  put("i_sy", [](const SweepRow& r) { return r.i_sy; });
  put("ratio_naive", [](const SweepRow& r) { return r.ratio_naive; });
  put("ratio_ume", [](const SweepRow& r) { return r.ratio_ume; });
  put("clean_naive", [](const SweepRow& r) { return r.clean_naive; });
  put("clean_ume", [](const SweepRow& r) { return r.clean_ume; });
  return j;
}

}  // namespace mct
