#pragma once

#include "mct/common.hpp"
#include "mct/dataset.hpp"
#include "mct/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mct {

// Two-modality generator: latents x, z in R^d, overlap alpha mixes x into z
// before a fixed projection, both normalized to unit length, samples with
// |x.z| <= delta rejected, label = sign of the dot product, emitted features
// are fixed projections P_X x, P_Z z.
struct TwoModalConfig {
  int d = 50, d1 = 200, d2 = 100;
  double delta = 0.25;
  double alpha = 0.0;
  int n = 5000;
  double train_frac = 0.8;
  std::uint64_t seed = 0;
  int max_attempts_per_sample = 100000;

  void validate() const {
    if (d <= 0 || d1 <= 0 || d2 <= 0) throw StructuralError("two-modal config: dims must be positive");
    if (delta < 0.0 || delta >= 1.0) throw StructuralError("two-modal config: delta must lie in [0,1)");
    if (alpha < 0.0 || alpha > 1.0) throw StructuralError("two-modal config: alpha must lie in [0,1]");
    if (n <= 0) throw StructuralError("two-modal config: n must be positive");
    if (train_frac <= 0.0 || train_frac >= 1.0)
      throw StructuralError("two-modal config: train_frac must lie in (0,1)");
    if (max_attempts_per_sample <= 0)
      throw StructuralError("two-modal config: attempt budget must be positive");
  }
};

// m-modality extension: x_1 anchors, the others are mixed toward it and
// projected; rejection margin and label come from (x1+x2).(x3+x4) under the
// default rule (m = 4). Emitted features are Q_i x_i.
struct MultiModalConfig {
  int m = 4;
  int d = 50, d1 = 50;
  double delta = 0.25;
  double alpha = 0.0;
  int n = 10000;
  double train_frac = 0.8;
  std::uint64_t seed = 0;
  int max_attempts_per_sample = 100000;

  void validate() const {
    if (m < 2) throw StructuralError("multi-modal config: m must be at least 2");
    if (d <= 0 || d1 <= 0) throw StructuralError("multi-modal config: dims must be positive");
    if (delta < 0.0 || delta >= 1.0) throw StructuralError("multi-modal config: delta must lie in [0,1)");
    if (alpha < 0.0 || alpha > 1.0) throw StructuralError("multi-modal config: alpha must lie in [0,1]");
    if (n <= 0) throw StructuralError("multi-modal config: n must be positive");
    if (train_frac <= 0.0 || train_frac >= 1.0)
      throw StructuralError("multi-modal config: train_frac must lie in (0,1)");
    if (max_attempts_per_sample <= 0)
      throw StructuralError("multi-modal config: attempt budget must be positive");
  }
};

// Additive pairing over two labeled pools: item of class x gets a partner of
// class y = (x + round(N(0, sigma))) mod num_classes drawn from the other
// pool, and the pair's new label is round((x + y) / 2). Rounding is
// half-away-from-zero.
struct RemixConfig {
  double sigma = 1.0;
  int num_classes = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (sigma < 0.0) throw StructuralError("remix config: sigma must be nonnegative");
    if (num_classes < 2) throw StructuralError("remix config: need at least two classes");
  }
};

struct LabeledPool {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

struct GenerationStats {
  long attempts = 0;
  long margin_rejections = 0;
  long quota_discards = 0;
};

// Test hook: internal unit-norm latents of the emitted samples (pre-split
// order) and the drawn projections.
struct GenerationProbe {
  std::vector<std::vector<Vector>> unit_latents;
  std::vector<std::pair<std::string, Matrix>> projections;
  GenerationStats stats;
};

namespace detail {

inline Vector draw_normal_vector(RngStream& rng, int d) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

inline Matrix draw_uniform_matrix(RngStream& rng, int rows, int cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

// Number of non-anchor redraws before the anchor itself is refreshed. At
// alpha = 1 the non-anchor latents no longer influence the rejection margin,
// so without a fallback an unlucky anchor would spin forever.
constexpr int kAnchorRetries = 16;

struct SplitResult {
  std::vector<int> train_rows, val_rows;
};

inline SplitResult split_rows(int n, double train_frac, RngStream rng) {
  SplitResult s;
  std::vector<int> perm = rng.permutation(n);
  const int n_train = static_cast<int>(std::floor(train_frac * static_cast<double>(n)));
  s.train_rows.assign(perm.begin(), perm.begin() + n_train);
  s.val_rows.assign(perm.begin() + n_train, perm.end());
  return s;
}

inline MultiModalDataset take_rows(const std::vector<Matrix>& feats, const std::vector<int>& labels,
                                   const std::vector<int>& rows, int num_classes,
                                   const std::string& split, Json provenance) {
  MultiModalDataset ds;
  ds.num_classes = num_classes;
  ds.split = split;
  ds.provenance = std::move(provenance);
  for (const auto& f : feats) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), f.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = f.row(rows[i]);
    ds.modalities.push_back(std::move(m));
  }
  ds.labels.reserve(rows.size());
  for (int r : rows) ds.labels.push_back(labels[static_cast<std::size_t>(r)]);
  return ds;
}

}  // namespace detail

inline Json to_json(const TwoModalConfig& c) {
  return Json{{"type", "two-modal"}, {"d", c.d},         {"d1", c.d1},
              {"d2", c.d2},          {"delta", c.delta}, {"alpha", c.alpha},
              {"n", c.n},            {"train_frac", c.train_frac},
              {"seed", c.seed},      {"max_attempts_per_sample", c.max_attempts_per_sample}};
}

inline Json to_json(const MultiModalConfig& c) {
  return Json{{"type", "multi-modal"}, {"m", c.m},         {"d", c.d},
              {"d1", c.d1},            {"delta", c.delta}, {"alpha", c.alpha},
              {"n", c.n},              {"train_frac", c.train_frac},
              {"seed", c.seed},        {"max_attempts_per_sample", c.max_attempts_per_sample}};
}

inline TwoModalConfig two_modal_config_from_json(const Json& j) {
  TwoModalConfig c;
  c.d = j.at("d").get<int>();
  c.d1 = j.at("d1").get<int>();
  c.d2 = j.at("d2").get<int>();
  c.delta = j.at("delta").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.n = j.at("n").get<int>();
  c.train_frac = j.at("train_frac").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("max_attempts_per_sample"))
    c.max_attempts_per_sample = j.at("max_attempts_per_sample").get<int>();
  c.validate();
  return c;
}

inline MultiModalConfig multi_modal_config_from_json(const Json& j) {
  MultiModalConfig c;
  c.m = j.at("m").get<int>();
  c.d = j.at("d").get<int>();
  c.d1 = j.at("d1").get<int>();
  c.delta = j.at("delta").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.n = j.at("n").get<int>();
  c.train_frac = j.at("train_frac").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("max_attempts_per_sample"))
    c.max_attempts_per_sample = j.at("max_attempts_per_sample").get<int>();
  c.validate();
  return c;
}

inline std::pair<MultiModalDataset, MultiModalDataset> gen_two_modal(
    const TwoModalConfig& cfg, GenerationProbe* probe = nullptr) {
  cfg.validate();
  const RngStream root(cfg.seed);
  RngStream proj_rng = root.derive("projections");
  const Matrix p_x = detail::draw_uniform_matrix(proj_rng, cfg.d1, cfg.d, -0.5, 0.5);
  const Matrix p_z = detail::draw_uniform_matrix(proj_rng, cfg.d2, cfg.d, -0.5, 0.5);
  const Matrix p_mix = detail::draw_uniform_matrix(proj_rng, cfg.d, cfg.d, -0.5, 0.5);

  // class 0 gets the ceil half when n is odd
  std::vector<int> quota = {cfg.n - cfg.n / 2, cfg.n / 2};
  std::vector<Matrix> feats = {Matrix(cfg.n, cfg.d1), Matrix(cfg.n, cfg.d2)};
  std::vector<int> labels(static_cast<std::size_t>(cfg.n));
  GenerationStats stats;
  const RngStream sample_root = root.derive("sample");

  int emitted = 0;
  for (std::uint64_t k = 0; emitted < cfg.n; ++k) {
    RngStream s = sample_root.derive(k);
    Vector x = detail::draw_normal_vector(s, cfg.d);
    Vector xn, zn;
    double dot = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_attempts_per_sample; ++attempt) {
      ++stats.attempts;
      if (attempt > 0 && attempt % detail::kAnchorRetries == 0)
        x = detail::draw_normal_vector(s, cfg.d);
      Vector z_raw = detail::draw_normal_vector(s, cfg.d);
      Vector z = p_mix * ((1.0 - cfg.alpha) * z_raw + cfg.alpha * x);
      xn = x / x.norm();
      zn = z / z.norm();
      dot = xn.dot(zn);
      if (std::abs(dot) > cfg.delta) {
        ok = true;
        break;
      }
      ++stats.margin_rejections;
    }
    if (!ok)
      throw GenerationError("two-modal generation: attempt budget exhausted (delta = " +
                            std::to_string(cfg.delta) + " leaves too little probability mass)");
    const int y = dot > 0.0 ? 1 : 0;
    if (quota[static_cast<std::size_t>(y)] == 0) {
      ++stats.quota_discards;
      continue;
    }
    --quota[static_cast<std::size_t>(y)];
    feats[0].row(emitted) = (p_x * xn).transpose();
    feats[1].row(emitted) = (p_z * zn).transpose();
    labels[static_cast<std::size_t>(emitted)] = y;
    if (probe) probe->unit_latents.push_back({xn, zn});
    ++emitted;
  }
  if (probe) {
    probe->projections = {{"P_X", p_x}, {"P_Z", p_z}, {"P", p_mix}};
    probe->stats = stats;
  }

  const auto split = detail::split_rows(cfg.n, cfg.train_frac, root.derive("split"));
  const Json prov = to_json(cfg);
  auto train = detail::take_rows(feats, labels, split.train_rows, 2, "train", prov);
  auto val = detail::take_rows(feats, labels, split.val_rows, 2, "val", prov);
  train.provenance_matrices = {{"P_X", p_x}, {"P_Z", p_z}, {"P", p_mix}};
  val.provenance_matrices = train.provenance_matrices;
  return {std::move(train), std::move(val)};
}

// Rejection/label score over the unit latents; default is
// (x1 + x2) . (x3 + x4), which requires m = 4.
using LabelRule = std::function<double(const std::vector<Vector>&)>;

inline std::pair<MultiModalDataset, MultiModalDataset> gen_multi_modal(
    const MultiModalConfig& cfg, const LabelRule& rule = {}, GenerationProbe* probe = nullptr) {
  cfg.validate();
  if (!rule) {
    if (cfg.m != 4)
      throw StructuralError("multi-modal generation: default label rule requires m = 4");
    if (cfg.d1 != cfg.d)
      throw StructuralError("multi-modal generation: default label rule requires d1 = d");
  }
  const RngStream root(cfg.seed);
  RngStream proj_rng = root.derive("projections");
  std::vector<Matrix> mix(static_cast<std::size_t>(cfg.m));
  std::vector<Matrix> out_proj(static_cast<std::size_t>(cfg.m));
  // P_1 is drawn to keep the stream layout uniform even though the anchor is
  // never projected.
  for (int i = 0; i < cfg.m; ++i)
    mix[static_cast<std::size_t>(i)] = detail::draw_uniform_matrix(proj_rng, cfg.d1, cfg.d, -0.5, 0.5);
  for (int i = 0; i < cfg.m; ++i)
    out_proj[static_cast<std::size_t>(i)] =
        detail::draw_uniform_matrix(proj_rng, cfg.d, cfg.d, -0.5, 0.5);

  auto score_of = [&](const std::vector<Vector>& u) {
    if (rule) return rule(u);
    return (u[0] + u[1]).dot(u[2] + u[3]);
  };

  std::vector<int> quota = {cfg.n - cfg.n / 2, cfg.n / 2};
  std::vector<Matrix> feats(static_cast<std::size_t>(cfg.m));
  for (auto& f : feats) f.resize(cfg.n, cfg.d);
  std::vector<int> labels(static_cast<std::size_t>(cfg.n));
  GenerationStats stats;
  const RngStream sample_root = root.derive("sample");

  int emitted = 0;
  std::vector<Vector> unit(static_cast<std::size_t>(cfg.m));
  for (std::uint64_t k = 0; emitted < cfg.n; ++k) {
    RngStream s = sample_root.derive(k);
    Vector anchor = detail::draw_normal_vector(s, cfg.d);
    double score = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < cfg.max_attempts_per_sample; ++attempt) {
      ++stats.attempts;
      if (attempt > 0 && attempt % detail::kAnchorRetries == 0)
        anchor = detail::draw_normal_vector(s, cfg.d);
      unit[0] = anchor / anchor.norm();
      for (int i = 1; i < cfg.m; ++i) {
        Vector raw = detail::draw_normal_vector(s, cfg.d);
        Vector v = mix[static_cast<std::size_t>(i)] *
                   ((1.0 - cfg.alpha) * raw + cfg.alpha * anchor);
        unit[static_cast<std::size_t>(i)] = v / v.norm();
      }
      score = score_of(unit);
      if (std::abs(score) > cfg.delta) {
        ok = true;
        break;
      }
      ++stats.margin_rejections;
    }
    if (!ok)
      throw GenerationError("multi-modal generation: attempt budget exhausted (delta = " +
                            std::to_string(cfg.delta) + " leaves too little probability mass)");
    const int y = score > 0.0 ? 1 : 0;
    if (quota[static_cast<std::size_t>(y)] == 0) {
      ++stats.quota_discards;
      continue;
    }
    --quota[static_cast<std::size_t>(y)];
    for (int i = 0; i < cfg.m; ++i)
      feats[static_cast<std::size_t>(i)].row(emitted) =
          (out_proj[static_cast<std::size_t>(i)] * unit[static_cast<std::size_t>(i)]).transpose();
    labels[static_cast<std::size_t>(emitted)] = y;
    if (probe) probe->unit_latents.push_back(unit);
    ++emitted;
  }
  if (probe) {
    for (int i = 0; i < cfg.m; ++i) {
      probe->projections.emplace_back("P_" + std::to_string(i + 1), mix[static_cast<std::size_t>(i)]);
      probe->projections.emplace_back("Q_" + std::to_string(i + 1),
                                      out_proj[static_cast<std::size_t>(i)]);
    }
    probe->stats = stats;
  }

  const auto split = detail::split_rows(cfg.n, cfg.train_frac, root.derive("split"));
  const Json prov = to_json(cfg);
  auto train = detail::take_rows(feats, labels, split.train_rows, 2, "train", prov);
  auto val = detail::take_rows(feats, labels, split.val_rows, 2, "val", prov);
  for (int i = 0; i < cfg.m; ++i)
    train.provenance_matrices.emplace_back("Q_" + std::to_string(i + 1),
                                           out_proj[static_cast<std::size_t>(i)]);
  val.provenance_matrices = train.provenance_matrices;
  return {std::move(train), std::move(val)};
}

inline MultiModalDataset remix_pairs(const LabeledPool& pool_a, const LabeledPool& pool_b,
                                     const RemixConfig& cfg, const std::string& split = "train") {
  cfg.validate();
  if (pool_a.size() == 0) throw GenerationError("remix: pool_a is empty");
  if (pool_a.num_classes != cfg.num_classes || pool_b.num_classes != cfg.num_classes)
    throw StructuralError("remix: pool class counts must match the config");
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(cfg.num_classes));
  for (int i = 0; i < pool_b.size(); ++i)
    by_class[static_cast<std::size_t>(pool_b.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (int c = 0; c < cfg.num_classes; ++c)
    if (by_class[static_cast<std::size_t>(c)].empty())
      throw GenerationError("remix: pool_b has no items of class " + std::to_string(c));

  MultiModalDataset ds;
  ds.num_classes = cfg.num_classes;
  ds.split = split;
  ds.provenance = Json{{"type", "remix"},
                       {"sigma", cfg.sigma},
                       {"num_classes", cfg.num_classes},
                       {"seed", cfg.seed}};
  const int n = pool_a.size();
  Matrix feat_a(n, pool_a.features.cols());
  Matrix feat_b(n, pool_b.features.cols());
  ds.labels.resize(static_cast<std::size_t>(n));
  const RngStream root = RngStream(cfg.seed).derive("remix");
  for (int i = 0; i < n; ++i) {
    RngStream s = root.derive(static_cast<std::uint64_t>(i));
    const int x = pool_a.labels[static_cast<std::size_t>(i)];
    const long shift = std::lround(s.normal() * cfg.sigma);
    int y = static_cast<int>(((x + shift) % cfg.num_classes + cfg.num_classes) % cfg.num_classes);
    const auto& candidates = by_class[static_cast<std::size_t>(y)];
    const int partner = candidates[static_cast<std::size_t>(
        s.uniform_int(static_cast<int>(candidates.size())))];
    const int t = static_cast<int>(std::lround((static_cast<double>(x + y)) / 2.0));
    feat_a.row(i) = pool_a.features.row(i);
    feat_b.row(i) = pool_b.features.row(partner);
    ds.labels[static_cast<std::size_t>(i)] = t;
  }
  ds.modalities = {std::move(feat_a), std::move(feat_b)};
  ds.validate();
  return ds;
}

// Balanced Gaussian-cluster pool: class c has a fixed random mean, items are
// mean + noise. Labels cycle 0..num_classes-1 so every class is populated.
// noise_seed, when set, decouples the item draws from the class means so
// disjoint pools can share the same clusters.
struct GaussianPoolConfig {
  int num_classes = 10;
  int dim = 16;
  int n = 5000;
  double noise = 0.3;
  double mean_scale = 1.0;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> noise_seed;
};

inline LabeledPool make_gaussian_pool(const GaussianPoolConfig& cfg) {
  if (cfg.num_classes < 2 || cfg.dim <= 0 || cfg.n <= 0)
    throw StructuralError("gaussian pool: bad config");
  const RngStream root(cfg.seed);
  RngStream mean_rng = root.derive("means");
  Matrix means(cfg.num_classes, cfg.dim);
  for (int c = 0; c < cfg.num_classes; ++c)
    means.row(c) = cfg.mean_scale * detail::draw_normal_vector(mean_rng, cfg.dim).transpose();
  LabeledPool pool;
  pool.num_classes = cfg.num_classes;
  pool.features.resize(cfg.n, cfg.dim);
  pool.labels.resize(static_cast<std::size_t>(cfg.n));
  RngStream noise_rng =
      cfg.noise_seed ? RngStream(*cfg.noise_seed).derive("noise") : root.derive("noise");
  for (int i = 0; i < cfg.n; ++i) {
    const int c = i % cfg.num_classes;
    pool.labels[static_cast<std::size_t>(i)] = c;
    pool.features.row(i) =
        means.row(c) + cfg.noise * detail::draw_normal_vector(noise_rng, cfg.dim).transpose();
  }
  return pool;
}

// Rebuild a generated dataset pair from the config recorded in a manifest.
inline std::pair<MultiModalDataset, MultiModalDataset> regenerate_from_provenance(const Json& config) {
  const std::string type = config.at("type").get<std::string>();
  if (type == "two-modal") return gen_two_modal(two_modal_config_from_json(config));
  if (type == "multi-modal") return gen_multi_modal(multi_modal_config_from_json(config));
  throw StructuralError("regenerate: unsupported dataset type '" + type + "'");
}

}  // namespace mct
