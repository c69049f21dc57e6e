#include "mct/mine.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mct;

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kLn4 = 1.3862943611198906;

MlpSpec critic_spec(std::vector<int> dims) {
  return MlpSpec{std::move(dims), Activation::Elu, std::nullopt, 0};
}

// correlated standard normal pairs: v = rho u + sqrt(1 - rho^2) e
PairedSamples gaussian_pairs(int n, double rho, std::uint64_t seed) {
  RngStream rng(seed);
  PairedSamples s;
  s.a.resize(n, 1);
  s.b.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const double u = rng.normal();
    const double e = rng.normal();
    s.a(i, 0) = u;
    s.b(i, 0) = rho * u + std::sqrt(1.0 - rho * rho) * e;
  }
  return s;
}

PairedSamples independent_blocks(int n, int d, std::uint64_t seed) {
  RngStream rng(seed);
  PairedSamples s;
  s.a.resize(n, d);
  s.b.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      s.a(i, j) = rng.normal();
      s.b(i, j) = rng.normal();
    }
  return s;
}

// X = Z uniform over k symbols, one-hot embedded
PairedSamples onehot_copy(int n, int k, std::uint64_t seed) {
  RngStream rng(seed);
  PairedSamples s;
  s.a = Matrix::Zero(n, k);
  s.b = Matrix::Zero(n, k);
  for (int i = 0; i < n; ++i) {
    const int v = rng.uniform_int(k);
    s.a(i, v) = 1.0;
    s.b(i, v) = 1.0;
  }
  return s;
}

}  // namespace

TEST(DvObjective, HandValues) {
  EXPECT_DOUBLE_EQ(dv_objective({3.0, 3.0}, {3.0, 3.0}), 0.0);
  EXPECT_DOUBLE_EQ(dv_objective({1.0, 1.0, 1.0}, {0.0, 0.0}), 1.0);
  // mean {0,2} = 1, log mean exp {0,0} = 0
  EXPECT_DOUBLE_EQ(dv_objective({0.0, 2.0}, {0.0, 0.0}), 1.0);
}

TEST(DvObjective, Errors) {
  EXPECT_THROW(dv_objective({}, {1.0}), StructuralError);
  EXPECT_THROW(dv_objective({1.0}, {}), StructuralError);
  EXPECT_THROW(dv_objective({std::nan("")}, {0.0}), NumericError);
  EXPECT_THROW(dv_objective({0.0}, {std::numeric_limits<double>::infinity()}), NumericError);
}

TEST(DvObjective, MaxShiftSurvivesLargeScores) {
  // naive exp would overflow at 1000
  const double v = dv_objective({1000.0}, {1000.0, 1000.0});
  EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(MarginalResample, DeterministicAndAStayFixed) {
  PairedSamples s = independent_blocks(16, 3, 5);
  const PairedSamples r1 = marginal_resample(s, 99);
  const PairedSamples r2 = marginal_resample(s, 99);
  EXPECT_EQ(r1.b, r2.b);
  EXPECT_EQ(r1.a, s.a);
  EXPECT_NE(r1.b, s.b);  // 16 rows of gaussians: a fixed-point-free shuffle moves something
}

TEST(MarginalResample, IdenticalRowsAreInvisible) {
  PairedSamples s;
  s.a = Matrix::Ones(8, 2);
  s.b = Matrix::Constant(8, 3, 4.5);
  const PairedSamples r = marginal_resample(s, 1);
  EXPECT_EQ(r.b, s.b);
}

TEST(MarginalResample, BatchOfOneRejected) {
  PairedSamples s;
  s.a = Matrix::Ones(1, 2);
  s.b = Matrix::Ones(1, 2);
  EXPECT_THROW(marginal_resample(s, 0), StructuralError);
}

TEST(MarginalPermutation, FewFixedPointsOnAverage) {
  const int batch = 10;
  long fixed = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    RngStream rng(seed);
    const std::vector<int> p = marginal_permutation(batch, rng);
    for (int i = 0; i < batch; ++i)
      if (p[static_cast<std::size_t>(i)] == i) ++fixed;
  }
  const double avg_fraction = static_cast<double>(fixed) / (1000.0 * batch);
  EXPECT_LE(avg_fraction, 2.0 / batch);
}

TEST(MarginalPermutation, LabelsRideWithB) {
  PairedSamples s = independent_blocks(12, 2, 3);
  Matrix lab = Matrix::Zero(12, 2);
  for (int i = 0; i < 12; ++i) lab(i, i % 2) = 1.0;
  s.labels = lab;
  const PairedSamples r = marginal_resample(s, 7);
  ASSERT_TRUE(r.labels.has_value());
  // recover the permutation from b and check labels moved identically
  for (int i = 0; i < 12; ++i) {
    int src = -1;
    for (int j = 0; j < 12; ++j)
      if (r.b.row(i) == s.b.row(j)) src = j;
    ASSERT_GE(src, 0);
    EXPECT_EQ(r.labels->row(i), s.labels->row(src));
  }
}

TEST(TrainMi, IndependentBlocksNearZero) {
  const PairedSamples train = independent_blocks(1600, 5, 11);
  const PairedSamples val = independent_blocks(400, 5, 12);
  CriticSpec critic{critic_spec({10, 64, 32, 1})};
  MineTrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 100;
  cfg.weight_decay = 1e-4;
  cfg.seed = 1;
  const MiEstimate est = train_mi(train, val, critic, cfg);
  EXPECT_GE(est.value, 0.0);  // clamped
  EXPECT_LT(est.value, 0.05);
  EXPECT_EQ(est.curve.size(), 60u);
}

TEST(TrainMi, CorrelatedGaussianMatchesAnalyticValue) {
  const double rho = 0.9;
  const double truth = -0.5 * std::log(1.0 - rho * rho);  // 0.8304 nats
  const PairedSamples all = gaussian_pairs(5000, rho, 21);
  PairedSamples train, val;
  train.a = all.a.topRows(4000);
  train.b = all.b.topRows(4000);
  val.a = all.a.bottomRows(1000);
  val.b = all.b.bottomRows(1000);
  CriticSpec critic{critic_spec({2, 128, 64, 1})};
  MineTrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 100;
  cfg.weight_decay = 0.0;
  cfg.seed = 2;
  const MiEstimate est = train_mi(train, val, critic, cfg);
  EXPECT_NEAR(est.value, truth, 0.10);
}

TEST(TrainMi, OneHotCopyMatchesDiscreteTruth) {
  const PairedSamples train = onehot_copy(4000, 4, 31);
  const PairedSamples val = onehot_copy(1000, 4, 32);
  CriticSpec critic{critic_spec({8, 128, 64, 1})};
  MineTrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 100;
  cfg.weight_decay = 1e-4;
  cfg.seed = 3;
  const MiEstimate est = train_mi(train, val, critic, cfg);
  EXPECT_NEAR(est.value, kLn4, 0.10);
}

TEST(TrainMi, LabelPathEstimatesLabelInformation)
{
  // A carries the label exactly; I(A; Y) = ln 2 for a balanced binary label
  const int n = 3000;
  RngStream rng(41);
  auto make = [&](int rows) {
    PairedSamples s;
    s.a = Matrix::Zero(rows, 2);
    s.b = Matrix(rows, 0);
    Matrix lab = Matrix::Zero(rows, 2);
    for (int i = 0; i < rows; ++i) {
      const int y = rng.uniform_int(2);
      s.a(i, y) = 1.0;
      lab(i, y) = 1.0;
    }
    s.labels = lab;
    return s;
  };
  const PairedSamples train = make(n);
  const PairedSamples val = make(800);
  CriticSpec critic{MlpSpec{{2, 64, 32, 8, 1}, Activation::Elu, 2, 2}};
  MineTrainConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 100;
  cfg.weight_decay = 1e-4;
  cfg.seed = 4;
  const MiEstimate est = train_mi(train, val, critic, cfg);
  EXPECT_NEAR(est.value, kLn2, 0.10);
}

TEST(TrainMi, RowOrderInvariantBitExact) {
  const PairedSamples base = gaussian_pairs(300, 0.5, 51);
  PairedSamples shuffled;
  RngStream rng(99);
  const std::vector<int> perm = rng.permutation(300);
  shuffled.a.resize(300, 1);
  shuffled.b.resize(300, 1);
  for (int i = 0; i < 300; ++i) {
    shuffled.a.row(i) = base.a.row(perm[static_cast<std::size_t>(i)]);
    shuffled.b.row(i) = base.b.row(perm[static_cast<std::size_t>(i)]);
  }
  const PairedSamples val = gaussian_pairs(100, 0.5, 52);
  CriticSpec critic{critic_spec({2, 16, 1})};
  MineTrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 50;
  cfg.seed = 5;
  const MiEstimate e1 = train_mi(base, val, critic, cfg);
  const MiEstimate e2 = train_mi(shuffled, val, critic, cfg);
  EXPECT_DOUBLE_EQ(e1.value, e2.value);
  EXPECT_EQ(e1.curve, e2.curve);
}

TEST(TrainMi, ReplicatesDifferOnlyBySeed) {
  const PairedSamples train = gaussian_pairs(500, 0.5, 61);
  const PairedSamples val = gaussian_pairs(200, 0.5, 62);
  CriticSpec critic{critic_spec({2, 16, 1})};
  MineTrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 100;
  cfg.replicates = 3;
  cfg.seed = 6;
  const MiEstimate est = train_mi(train, val, critic, cfg);
  ASSERT_EQ(est.replicate_values.size(), 3u);
  EXPECT_GE(est.stddev, 0.0);
  double mean = 0.0;
  for (double v : est.replicate_values) mean += v;
  mean /= 3.0;
  EXPECT_DOUBLE_EQ(est.value, mean);
}

TEST(TrainMi, ValueIsMedianOfCurveTail) {
  const PairedSamples train = gaussian_pairs(400, 0.3, 71);
  const PairedSamples val = gaussian_pairs(150, 0.3, 72);
  CriticSpec critic{critic_spec({2, 16, 1})};
  MineTrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 100;
  cfg.eval_window_frac = 0.25;
  cfg.clamp_nonnegative = false;
  cfg.seed = 7;
  const MiEstimate est = train_mi(train, val, critic, cfg);
  std::vector<double> tail(est.curve.end() - 10, est.curve.end());
  std::sort(tail.begin(), tail.end());
  const double median = 0.5 * (tail[4] + tail[5]);
  EXPECT_DOUBLE_EQ(est.value, median);
}

TEST(TrainMi, DivergenceSurfacesWithEpoch) {
  const PairedSamples train = gaussian_pairs(400, 0.9, 81);
  const PairedSamples val = gaussian_pairs(100, 0.9, 82);
  CriticSpec critic{critic_spec({2, 32, 1})};
  MineTrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 100;
  cfg.algo = OptAlgo::Sgd;
  cfg.lr.base = 1e9;  // guaranteed blow-up
  cfg.seed = 8;
  try {
    train_mi(train, val, critic, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(TrainMi, StructuralChecks) {
  const PairedSamples train = gaussian_pairs(100, 0.5, 91);
  const PairedSamples val = gaussian_pairs(50, 0.5, 92);
  CriticSpec wrong_dim{critic_spec({3, 16, 1})};
  MineTrainConfig cfg;
  EXPECT_THROW(train_mi(train, val, wrong_dim, cfg), StructuralError);
  CriticSpec wants_label{MlpSpec{{2, 16, 8, 1}, Activation::Elu, 1, 2}};
  EXPECT_THROW(train_mi(train, val, wants_label, cfg), StructuralError);
  CriticSpec two_outputs{critic_spec({2, 16, 2})};
  EXPECT_THROW(train_mi(train, val, two_outputs, cfg), StructuralError);
}
