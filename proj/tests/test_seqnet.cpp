#include <gtest/gtest.h>

#include "mobileposer/error.hpp"
#include "mobileposer/motion_gen.hpp"
#include "mobileposer/nn/grad_check.hpp"
#include "mobileposer/nn/optim.hpp"
#include "mobileposer/train.hpp"
#include "test_util.hpp"

using namespace mobileposer;
using namespace mobileposer::nn;

TEST(Forward, ZeroWeightsGiveZeroOutput) {
  for (auto dir : {Direction::kUni, Direction::kBi}) {
    SeqModel m({5, 4, 3, 2, dir});
    const Seq y = m.forward(mptest::random_seq(5, 7, 2, 1));
    EXPECT_EQ(y.data.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(y.features(), 3);
    EXPECT_EQ(y.steps, 7);
  }
}

TEST(Forward, SingleStepEqualsCellStep) {
  const SeqModel m = SeqModel::initialized({5, 4, 3, 2, Direction::kUni}, 3);
  const Seq x = mptest::random_seq(5, 1, 1, 2);
  auto state = m.initial_state();
  const Eigen::VectorXd y = m.step(state, x.data.col(0));
  EXPECT_LT((m.forward(x).data.col(0) - y).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Forward, StepwiseMatchesSequence) {
  const SeqModel m = SeqModel::initialized({5, 4, 3, 2, Direction::kUni}, 4);
  const Seq x = mptest::random_seq(5, 12, 1, 3);
  const Seq y = m.forward(x);
  auto state = m.initial_state();
  for (int t = 0; t < 12; ++t) EXPECT_LT((m.step(state, x.data.col(t)) - y.data.col(t)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, TiedBidirectionalPalindrome) {
  SeqModel m = SeqModel::initialized({4, 6, 3, 1, Direction::kBi}, 5);
  auto& p = m.params();
  p.cells[1] = p.cells[0];
  p.out_w.rightCols(6) = p.out_w.leftCols(6);
  Seq x = mptest::random_seq(4, 9, 1, 6);
  for (int t = 0; t < 4; ++t) x.data.col(8 - t) = x.data.col(t);
  const Seq y = m.forward(x);
  for (int t = 0; t < 9; ++t) EXPECT_LT((y.data.col(t) - y.data.col(8 - t)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, WrongWidthIsShapeMismatch) {
  const SeqModel m({5, 4, 3, 1, Direction::kUni});
  try {
    m.forward(Seq(6, 3, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(Forward, BatchColumnsAreIndependent) {
  const SeqModel m = SeqModel::initialized({5, 4, 3, 1, Direction::kBi}, 7);
  const Seq a = mptest::random_seq(5, 6, 1, 8);
  const Seq b = mptest::random_seq(5, 6, 1, 9);
  Seq ab(5, 6, 2);
  for (int t = 0; t < 6; ++t) {
    ab.data.col(2 * t) = a.data.col(t);
    ab.data.col(2 * t + 1) = b.data.col(t);
  }
  const Seq y = m.forward(ab);
  EXPECT_LT((y.rows(0) - m.forward(a).rows(0)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((y.rows(1) - m.forward(b).rows(0)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LossJoint, Examples) {
  const Seq gt = mptest::random_seq(72, 5, 2, 1);
  EXPECT_EQ(loss_joint(gt, gt).value, 0.0);
  Seq pred = gt;
  pred.data.array() += 1.0;
  EXPECT_NEAR(loss_joint(pred, gt).value, 72.0, 1e-12);
  pred.data.array() += 1.0;
  EXPECT_NEAR(loss_joint(pred, gt).value, 4 * 72.0, 1e-12);
}

TEST(LossRotation, ZeroAtGroundTruthAndJerkAnnihilatesLinear) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 10;
  const auto ch = synthesize_channels(rig, procedural_walk(wp));
  Eigen::MatrixXd r6(10, 108), pos(10, 72);
  for (int t = 0; t < 10; ++t) {
    for (int k = 0; k < 108; ++k) r6(t, k) = ch.rot6d[t][k];
    for (int k = 0; k < 72; ++k) pos(t, k) = ch.joints[t][k];
  }
  const Seq gt6d = Seq::from_rows(r6), gt_pos = Seq::from_rows(pos);
  const auto r = loss_rotation(gt6d, gt6d, gt_pos, rig, 1.0);
  EXPECT_EQ(r.ori, 0.0);
  EXPECT_LT(r.pos, 1e-20);

  Eigen::MatrixXd lin(10, 108), cst(10, 108);
  for (int t = 0; t < 10; ++t) {
    lin.row(t) = r6.row(0) + 0.01 * t * Eigen::RowVectorXd::Ones(108);
    cst.row(t) = r6.row(0);
  }
  EXPECT_EQ(loss_rotation(Seq::from_rows(cst), gt6d, gt_pos, rig, 1.0).jerk, 0.0);
  EXPECT_LT(loss_rotation(Seq::from_rows(lin), gt6d, gt_pos, rig, 1.0).jerk, 1e-20);
  // A cubic term has nonzero third difference.
  Eigen::MatrixXd cub = lin;
  for (int t = 0; t < 10; ++t) cub.row(t).array() += 1e-3 * t * t * t;
  EXPECT_GT(loss_rotation(Seq::from_rows(cub), gt6d, gt_pos, rig, 1.0).jerk, 0.0);
}

TEST(LossRotation, TotalCombinesTerms) {
  const Rig rig = builtin_toy_rig();
  const Seq pred = mptest::random_seq(108, 6, 1, 2);
  const Seq gt = mptest::random_seq(108, 6, 1, 3);
  const Seq pos = mptest::random_seq(72, 6, 1, 4);
  const auto r = loss_rotation(pred, gt, pos, rig, 0.25);
  EXPECT_NEAR(r.total, r.ori + r.pos + 0.25 * r.jerk, 1e-12);
  EXPECT_GT(r.ori, 0.0);
  EXPECT_GT(r.pos, 0.0);
  EXPECT_GT(r.jerk, 0.0);
}

TEST(LossContact, Examples) {
  Seq logits(2, 4, 1);
  Seq gt(2, 4, 1);
  gt.data.row(0).setOnes();
  EXPECT_NEAR(loss_contact(logits, gt).value, std::log(2.0), 1e-15);
  Seq sat = gt;
  sat.data = (gt.data.array() * 2 - 1) * 60.0;
  EXPECT_LT(loss_contact(sat, gt).value, 1e-20);
  // Flip labels and logits together.
  const Seq l = mptest::random_seq(2, 4, 1, 5, 2.0);
  Seq flipped_l = l, flipped_gt = gt;
  flipped_l.data = -l.data;
  flipped_gt.data = 1.0 - gt.data.array();
  EXPECT_NEAR(loss_contact(l, gt).value, loss_contact(flipped_l, flipped_gt).value, 1e-14);
}

TEST(LossVelocity, Examples) {
  const Seq gt = mptest::random_seq(3, 30, 1, 6);
  EXPECT_EQ(loss_velocity_cumulative(gt, gt).value, 0.0);
  const Eigen::Vector3d b(0.01, -0.02, 0.005);
  Seq pred = gt;
  pred.data.colwise() += b;
  for (int h : {1, 3, 9, 27}) {
    const std::vector<int> one{h};
    EXPECT_NEAR(loss_velocity_cumulative(pred, gt, one).value, (h * b).squaredNorm(), 1e-15);
  }
  double mean = 0.0;
  for (int h : {1, 3, 9, 27}) mean += (h * b).squaredNorm() / 4;
  EXPECT_NEAR(loss_velocity_cumulative(pred, gt).value, mean, 1e-14);

  const Seq other = mptest::random_seq(3, 30, 1, 7);
  const std::vector<int> h1{1};
  EXPECT_NEAR(loss_velocity_cumulative(other, gt, h1).value,
              (other.data - gt.data).colwise().squaredNorm().mean(), 1e-14);
}

TEST(LossVelocity, HorizonLongerThanSequence) {
  const Seq s(3, 5, 1);
  const std::vector<int> h{6};
  try {
    loss_velocity_cumulative(s, s, h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHorizonTooLong);
  }
}

TEST(Losses, NonnegativeAndPositiveOnPerturbation) {
  const Seq a = mptest::random_seq(3, 30, 2, 8);
  Seq b = a;
  b.data(1, 3) += 1e-3;
  EXPECT_GT(loss_joint(a, b).value, 0.0);
  EXPECT_GT(loss_mse(a, b).value, 0.0);
  EXPECT_GT(loss_velocity_cumulative(a, b).value, 0.0);
}

TEST(Clip, HalvesAtNormTwo) {
  Params g = Params::zeros({2, 1, 1, 0, Direction::kUni});
  g.out_w << 1.2, 1.6;  // norm 2
  const double before = clip_grad_norm(g, 1.0);
  EXPECT_DOUBLE_EQ(before, 2.0);
  EXPECT_DOUBLE_EQ(g.out_w(0, 0), 0.6);
  EXPECT_DOUBLE_EQ(g.out_w(0, 1), 0.8);
}

TEST(Clip, IdentityBelowLimit) {
  Params g = Params::zeros({2, 1, 1, 0, Direction::kUni});
  g.out_w << 0.3, 0.4;
  clip_grad_norm(g, 1.0);
  EXPECT_EQ(g.out_w(0, 0), 0.3);
  EXPECT_EQ(g.out_w(0, 1), 0.4);
}

TEST(Clip, NonFiniteGradient) {
  Params g = Params::zeros({2, 1, 1, 0, Direction::kUni});
  g.out_w(0, 0) = std::nan("");
  try {
    clip_grad_norm(g, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteGradient);
  }
}

TEST(Adam, FirstStepIsLrTimesSign) {
  const SeqModelSpec spec{3, 2, 2, 1, Direction::kUni};
  SeqModel m = SeqModel::initialized(spec, 9);
  const Params before = m.params();
  Params g = Params::zeros(spec);
  std::mt19937_64 rng(10);
  g.for_each([&](const std::string&, Mat& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = (rng() % 2 ? 1.0 : -1.0) * 100.0;
  });
  Adam adam(m.params(), {1e-3});
  adam.step(m.params(), g);
  EXPECT_EQ(adam.steps(), 1);
  std::vector<double> moved, sign;
  m.params().for_each([&](const std::string&, const Mat& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) moved.push_back(t.data()[i]);
  });
  std::size_t k = 0;
  before.for_each([&](const std::string&, const Mat& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i, ++k) moved[k] -= t.data()[i];
  });
  g.for_each([&](const std::string&, const Mat& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) sign.push_back(t.data()[i] > 0 ? 1.0 : -1.0);
  });
  for (std::size_t i = 0; i < moved.size(); ++i) EXPECT_NEAR(moved[i], -1e-3 * sign[i], 1e-12);
}

TEST(Init, ForgetBiasOneAndBoundedWeights) {
  const SeqModel m = SeqModel::initialized({10, 4, 3, 2, Direction::kBi}, 11);
  for (const auto& c : m.params().cells) {
    for (int i = 0; i < 16; ++i) EXPECT_EQ(c.b(i, 0), (i >= 4 && i < 8) ? 1.0 : 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.w_ih.cols()));
    EXPECT_LE(c.w_ih.cwiseAbs().maxCoeff(), bound);
  }
  EXPECT_EQ(m.params().out_b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradCheck, LinearMseExact) {
  const Rig rig = builtin_toy_rig();
  auto cases = mptest::pipeline_grad_cases(rig);
  ASSERT_EQ(cases[0].name, "linear/mse");
  EXPECT_LT(mptest::finite_difference_error(cases[0]), 1e-7);
}

TEST(GradCheck, EveryArchitectureLossPair) {
  const Rig rig = builtin_toy_rig();
  for (auto& c : mptest::pipeline_grad_cases(rig)) EXPECT_LT(mptest::finite_difference_error(c), 1e-4) << c.name;
}

TEST(GradCheck, LibraryCheckerAgrees) {
  const Rig rig = builtin_toy_rig();
  for (auto& c : mptest::pipeline_grad_cases(rig)) {
    const auto r = grad_check(c.model, c.loss, c.input);
    EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " worst " << r.worst_tensor;
    EXPECT_EQ(r.checked, c.model.params().count());
  }
}

TEST(Train, DeterministicUnderSeed) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 80;
  Dataset ds;
  ds.window = 40;
  const std::vector<DeviceCombo> combos{*find_combo("lwrist"), *find_combo("rpocket+head")};
  ds.windows = make_windows(rig, procedural_walk(wp), combos, 40, 20);
  TrainConfig tc;
  tc.max_steps = 4;
  tc.batch = 3;
  tc.seed = 5;
  BundleSpec spec{6, 1, false};
  auto run = [&] {
    ModelBundle b = ModelBundle::create(spec, 2);
    train_heads(b, ds, kPipelineHeads, rig, tc);
    return b;
  };
  const ModelBundle a = run(), b = run();
  for (Head h : kPipelineHeads) {
    std::vector<double> pa, pb;
    a.head(h).params().for_each([&](const std::string&, const Mat& t) { pa.insert(pa.end(), t.data(), t.data() + t.size()); });
    b.head(h).params().for_each([&](const std::string&, const Mat& t) { pb.insert(pb.end(), t.data(), t.data() + t.size()); });
    EXPECT_EQ(pa, pb) << head_name(h);
  }
}

TEST(Train, LossDecreases) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 60;
  Dataset ds;
  ds.window = 30;
  const std::vector<DeviceCombo> combos{*find_combo("rpocket+lwrist+head")};
  ds.windows = make_windows(rig, procedural_walk(wp), combos, 30, 10);
  TrainConfig tc;
  tc.max_steps = 60;
  tc.lr = 1e-2;
  ModelBundle b = ModelBundle::create({8, 1, false}, 3);
  const std::vector<Head> heads{Head::kJoint};
  const auto r = train_heads(b, ds, heads, rig, tc);
  ASSERT_EQ(r.heads.size(), 1u);
  EXPECT_LT(r.heads[0].final_loss, 0.5 * r.heads[0].initial_loss);
  EXPECT_EQ(r.heads[0].steps, 60);
}

TEST(Train, MissingChannel) {
  const Rig rig = builtin_toy_rig();
  WalkParams wp;
  wp.frames = 60;
  Dataset ds;
  ds.window = 30;
  const std::vector<DeviceCombo> combos{*find_combo("head")};
  ds.windows = make_windows(rig, procedural_walk(wp), combos, 30, 30);
  ds.channels = kChannelInputs | kChannelJoints;
  ModelBundle b = ModelBundle::create({4, 1, false}, 3);
  const std::vector<Head> heads{Head::kContact};
  try {
    train_heads(b, ds, heads, rig, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kChannelMissing);
  }
}
