#pragma once

#include "mct/common.hpp"
#include "mct/mlp.hpp"
#include "mct/optim.hpp"
#include "mct/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace mct {

// Scalar-output network over the concatenated argument blocks. When the
// second block carries the label, the one-hot enters at the spec's
// label_concat_at hidden layer, not at the input.
struct CriticSpec {
  MlpSpec mlp;

  void validate(int dim_a, int dim_b, int label_dim) const {
    mlp.validate();
    if (mlp.output_dim() != 1) throw StructuralError("critic: output dim must be 1");
    if (mlp.input_dim() != dim_a + dim_b)
      throw StructuralError("critic: input dim " + std::to_string(mlp.input_dim()) +
                            " != concatenated block dims " + std::to_string(dim_a + dim_b));
    if (label_dim > 0) {
      if (!mlp.label_concat_at)
        throw StructuralError("critic: labels supplied but spec has no label_concat_at");
      if (mlp.label_dim != label_dim)
        throw StructuralError("critic: label dim mismatch");
    } else if (mlp.label_concat_at) {
      throw StructuralError("critic: spec expects labels but none supplied");
    }
  }
};

struct MineTrainConfig {
  int epochs = 500;
  int batch_size = 100;
  OptAlgo algo = OptAlgo::Adam;
  LrSchedule lr{1e-3, {}};
  double weight_decay = 2e-4;
  double eval_window_frac = 0.1;
  bool clamp_nonnegative = true;
  // optional exponential-moving-average denominator for the log term's
  // gradient in small-batch regimes
  bool ema_denominator = false;
  double ema_rate = 0.99;
  int replicates = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs <= 0 || batch_size <= 0) throw StructuralError("mine config: epochs/batch must be positive");
    if (eval_window_frac <= 0.0 || eval_window_frac > 1.0)
      throw StructuralError("mine config: eval_window_frac must lie in (0,1]");
    if (replicates <= 0) throw StructuralError("mine config: replicates must be positive");
    if (ema_rate <= 0.0 || ema_rate >= 1.0) throw StructuralError("mine config: ema_rate must lie in (0,1)");
  }
};

struct MiEstimate {
  double value = 0.0;                   // mean of the replicate values
  std::vector<double> curve;            // per-epoch validation DV, first replicate
  std::vector<double> replicate_values; // per-replicate tail aggregates
  double mean = 0.0;
  double stddev = 0.0;
};

// Aligned sample blocks; b may have zero columns (e.g. when the only second
// argument is the label). labels, when present, are one-hot rows.
struct PairedSamples {
  Matrix a;
  Matrix b;
  std::optional<Matrix> labels;

  int rows() const { return static_cast<int>(a.rows()); }
  int label_dim() const { return labels ? static_cast<int>(labels->cols()) : 0; }

  void validate() const {
    if (b.rows() != a.rows()) throw StructuralError("paired samples: row count mismatch");
    if (labels && labels->rows() != a.rows())
      throw StructuralError("paired samples: label row count mismatch");
  }
};

// Donsker-Varadhan lower bound: mean(joint) - log mean exp(marginal), with
// the log term max-shifted.
inline double dv_objective(const std::vector<double>& joint_scores,
                           const std::vector<double>& marginal_scores) {
  if (joint_scores.empty() || marginal_scores.empty())
    throw StructuralError("dv_objective: score vectors must be nonempty");
  double joint_mean = 0.0;
  for (double t : joint_scores) {
    if (!std::isfinite(t)) throw NumericError("dv_objective: non-finite joint score");
    joint_mean += t;
  }
  joint_mean /= static_cast<double>(joint_scores.size());
  double shift = marginal_scores.front();
  for (double t : marginal_scores) {
    if (!std::isfinite(t)) throw NumericError("dv_objective: non-finite marginal score");
    shift = std::max(shift, t);
  }
  double acc = 0.0;
  for (double t : marginal_scores) acc += std::exp(t - shift);
  const double lme = shift + std::log(acc / static_cast<double>(marginal_scores.size()));
  return joint_mean - lme;
}

// Seeded shuffle biased away from fixed points: Fisher-Yates, then any row
// still mapped to itself is swapped with its successor.
inline std::vector<int> marginal_permutation(int n, RngStream& rng) {
  if (n < 2) throw StructuralError("marginal_permutation: need at least two rows");
  std::vector<int> perm = rng.permutation(n);
  for (int i = 0; i < n; ++i)
    if (perm[static_cast<std::size_t>(i)] == i)
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>((i + 1) % n)]);
  return perm;
}

// Product-of-marginals batch: the b block (and the label riding with it) is
// permuted against a.
inline PairedSamples marginal_resample(const PairedSamples& batch, std::uint64_t seed) {
  batch.validate();
  RngStream rng = RngStream(seed).derive("marginal");
  const std::vector<int> perm = marginal_permutation(batch.rows(), rng);
  PairedSamples out;
  out.a = batch.a;
  out.b.resize(batch.b.rows(), batch.b.cols());
  for (int i = 0; i < batch.rows(); ++i) out.b.row(i) = batch.b.row(perm[static_cast<std::size_t>(i)]);
  if (batch.labels) {
    Matrix lab(batch.labels->rows(), batch.labels->cols());
    for (int i = 0; i < batch.rows(); ++i)
      lab.row(i) = batch.labels->row(perm[static_cast<std::size_t>(i)]);
    out.labels = std::move(lab);
  }
  return out;
}

namespace detail {

// Canonical row order: sort indices lexicographically by (a, b, label)
// content. Training-time shuffles are applied on top of this order, so the
// estimate is a function of the sample multiset, not the caller's row order.
inline std::vector<int> canonical_order(const PairedSamples& s) {
  std::vector<int> idx(static_cast<std::size_t>(s.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  auto cmp_rows = [](const Matrix& m, int r1, int r2) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (m(r1, c) < m(r2, c)) return -1;
      if (m(r1, c) > m(r2, c)) return 1;
    }
    return 0;
  };
  std::sort(idx.begin(), idx.end(), [&](int i, int j) {
    int c = cmp_rows(s.a, i, j);
    if (c != 0) return c < 0;
    c = cmp_rows(s.b, i, j);
    if (c != 0) return c < 0;
    if (s.labels) {
      c = cmp_rows(*s.labels, i, j);
      if (c != 0) return c < 0;
    }
    return false;
  });
  return idx;
}

inline PairedSamples reorder(const PairedSamples& s, const std::vector<int>& order) {
  PairedSamples out;
  out.a.resize(s.a.rows(), s.a.cols());
  out.b.resize(s.b.rows(), s.b.cols());
  if (s.labels) out.labels = Matrix(s.labels->rows(), s.labels->cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.a.row(r) = s.a.row(order[i]);
    out.b.row(r) = s.b.row(order[i]);
    if (s.labels) out.labels->row(r) = s.labels->row(order[i]);
  }
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Full-pass DV on held-out data with a fixed marginal permutation.
inline double eval_dv(const MlpSpec& spec, const MlpParams& params, const PairedSamples& data,
                      const std::vector<int>& marg_perm) {
  const int n = data.rows();
  const int da = static_cast<int>(data.a.cols());
  const int db = static_cast<int>(data.b.cols());
  Matrix input(2 * n, da + db);
  input.topLeftCorner(n, da) = data.a;
  input.bottomLeftCorner(n, da) = data.a;
  input.block(0, da, n, db) = data.b;
  for (int i = 0; i < n; ++i)
    input.block(n + i, da, 1, db) = data.b.row(marg_perm[static_cast<std::size_t>(i)]);
  Matrix labels;
  const Matrix* label_ptr = nullptr;
  if (data.labels) {
    labels.resize(2 * n, data.labels->cols());
    labels.topRows(n) = *data.labels;
    for (int i = 0; i < n; ++i)
      labels.row(n + i) = data.labels->row(marg_perm[static_cast<std::size_t>(i)]);
    label_ptr = &labels;
  }
  const Matrix scores = forward(spec, params, input, label_ptr);
  std::vector<double> joint(static_cast<std::size_t>(n)), marg(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    joint[static_cast<std::size_t>(i)] = scores(i, 0);
    marg[static_cast<std::size_t>(i)] = scores(n + i, 0);
  }
  return dv_objective(joint, marg);
}

}  // namespace detail

// Minibatch gradient ascent on the DV objective. The critic trains on the
// train block and the reported value is the median of full-validation DV
// evaluations over the final eval_window_frac of epochs, averaged across
// replicate runs that differ only by seed.
inline MiEstimate train_mi(const PairedSamples& train_in, const PairedSamples& val_in,
                           const CriticSpec& critic, const MineTrainConfig& cfg) {
  cfg.validate();
  train_in.validate();
  val_in.validate();
  if (train_in.rows() < 2 || val_in.rows() < 2)
    throw StructuralError("train_mi: need at least two rows per split");
  const int da = static_cast<int>(train_in.a.cols());
  const int db = static_cast<int>(train_in.b.cols());
  if (static_cast<int>(val_in.a.cols()) != da || static_cast<int>(val_in.b.cols()) != db)
    throw StructuralError("train_mi: train/val block dims differ");
  critic.validate(da, db, train_in.label_dim());
  if (val_in.label_dim() != train_in.label_dim())
    throw StructuralError("train_mi: train/val label presence differs");

  const PairedSamples train = detail::reorder(train_in, detail::canonical_order(train_in));
  const PairedSamples val = detail::reorder(val_in, detail::canonical_order(val_in));

  const int n = train.rows();
  const int batch = std::min(cfg.batch_size, n);
  const int steps_per_epoch = std::max(1, n / batch);
  const int window = std::max(1, static_cast<int>(std::ceil(cfg.eval_window_frac *
                                                            static_cast<double>(cfg.epochs))));

  MiEstimate est;
  for (int rep = 0; rep < cfg.replicates; ++rep) {
    RngStream rng = RngStream(cfg.seed).derive("mine-replicate").derive(static_cast<std::uint64_t>(rep));
    MlpParams params = init_params(critic.mlp, rng.derive("init").next_u64());
    OptimizerConfig opt_cfg;
    opt_cfg.algo = cfg.algo;
    opt_cfg.lr = cfg.lr.base;
    opt_cfg.weight_decay = cfg.weight_decay;
    OptimizerState opt = OptimizerState::create(opt_cfg, params);
    RngStream shuffle_rng = rng.derive("shuffle");
    RngStream marg_rng = rng.derive("marginal");
    RngStream val_rng = rng.derive("val-marginal");
    const std::vector<int> val_perm = marginal_permutation(val.rows(), val_rng);

    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(cfg.epochs));
    double log_ema = 0.0;
    bool ema_started = false;
    Matrix input(2 * batch, da + db);
    Matrix labels;
    if (train.labels) labels.resize(2 * batch, train.label_dim());
    Matrix grad_out(2 * batch, 1);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      opt.cfg.lr = cfg.lr.at(epoch);
      const std::vector<int> order = shuffle_rng.permutation(n);
      for (int step = 0; step < steps_per_epoch; ++step) {
        const int base = step * batch;
        const std::vector<int> perm = marginal_permutation(batch, marg_rng);
        for (int i = 0; i < batch; ++i) {
          const int r = order[static_cast<std::size_t>(base + i)];
          const int rm = order[static_cast<std::size_t>(base + perm[static_cast<std::size_t>(i)])];
          input.row(i).head(da) = train.a.row(r);
          input.row(i).segment(da, db) = train.b.row(r);
          input.row(batch + i).head(da) = train.a.row(r);
          input.row(batch + i).segment(da, db) = train.b.row(rm);
          if (train.labels) {
            labels.row(i) = train.labels->row(r);
            labels.row(batch + i) = train.labels->row(rm);
          }
        }
        ForwardCache cache;
        const Matrix scores =
            forward(critic.mlp, params, input, train.labels ? &labels : nullptr, &cache);
        // joint mean
        double joint_mean = 0.0;
        for (int i = 0; i < batch; ++i) joint_mean += scores(i, 0);
        joint_mean /= batch;
        // max-shifted log mean exp over the marginal half
        double shift = scores(batch, 0);
        for (int i = 0; i < batch; ++i) shift = std::max(shift, scores(batch + i, 0));
        double wsum = 0.0;
        for (int i = 0; i < batch; ++i) wsum += std::exp(scores(batch + i, 0) - shift);
        const double lme = shift + std::log(wsum / batch);
        const double dv = joint_mean - lme;
        if (!std::isfinite(dv))
          throw NumericError("train_mi: objective diverged at epoch " + std::to_string(epoch));

        double log_denom = lme;  // log E[exp T] under the batch
        if (cfg.ema_denominator) {
          if (!ema_started) {
            log_ema = lme;
            ema_started = true;
          } else {
            const double hi = std::max(log_ema + std::log(cfg.ema_rate),
                                       lme + std::log(1.0 - cfg.ema_rate));
            log_ema = hi + std::log(std::exp(log_ema + std::log(cfg.ema_rate) - hi) +
                                    std::exp(lme + std::log(1.0 - cfg.ema_rate) - hi));
          }
          log_denom = log_ema;
        }
        // loss = -dv; d(loss)/dT_joint = -1/B, d(loss)/dT_marg = softmax-like
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (int i = 0; i < batch; ++i) grad_out(i, 0) = -inv_b;
        for (int i = 0; i < batch; ++i)
          grad_out(batch + i, 0) = std::exp(scores(batch + i, 0) - log_denom) * inv_b;
        const BackwardResult back = backward(critic.mlp, params, cache, grad_out);
        optimizer_step(opt, params, back.grads);
      }
      curve.push_back(detail::eval_dv(critic.mlp, params, val, val_perm));
    }

    std::vector<double> tail(curve.end() - window, curve.end());
    double value = detail::median(std::move(tail));
    if (cfg.clamp_nonnegative) value = std::max(0.0, value);
    est.replicate_values.push_back(value);
    if (rep == 0) est.curve = std::move(curve);
  }

  double sum = 0.0;
  for (double v : est.replicate_values) sum += v;
  est.mean = sum / static_cast<double>(est.replicate_values.size());
  est.value = est.mean;
  if (est.replicate_values.size() > 1) {
    double ss = 0.0;
    for (double v : est.replicate_values) ss += (v - est.mean) * (v - est.mean);
    est.stddev = std::sqrt(ss / static_cast<double>(est.replicate_values.size() - 1));
  }
  return est;
}

}  // namespace mct
