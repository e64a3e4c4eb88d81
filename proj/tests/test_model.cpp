#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "sepkit/nn/adam.hpp"
#include "sepkit/nn/checkpoint.hpp"
#include "sepkit/nn/model.hpp"
#include "test_support.hpp"

namespace sepkit::nn {
namespace {

using sepkit::testing::TempDir;
using MatD = Mat<double>;

ArchConfig SmallConfig(Arch arch, std::vector<StreamName> streams, int width = 6) {
  ArchConfig c;
  c.arch = arch;
  c.streams = std::move(streams);
  c.hidden = width;
  c.conv_channels = width - 2;
  c.embed = width - 1;
  return c;
}

template <class S>
BatchInput<S> RandomInput(const ArchConfig &cfg, SeqShape shape, uint64_t seed) {
  Rng rng(seed);
  BatchInput<S> in;
  in.shape = shape;
  for (StreamName s : cfg.streams) {
    Mat<S> x(shape.rows(), StreamDims(s));
    for (auto &v : x.reshaped()) v = static_cast<S>(rng.Normal());
    in.streams.push_back(std::move(x));
  }
  return in;
}

// Rows of clip b, in time order.
MatD ClipRows(const MatD &x, SeqShape shape, int b) {
  MatD out(shape.frames, x.cols());
  for (int t = 0; t < shape.frames; ++t) out.row(t) = x.row(t * shape.batch + b);
  return out;
}

struct Projection {
  MatD r_any, r_types;
  Projection(int batch, uint64_t seed) : r_any(batch, 1), r_types(batch, kNumEventTypes) {
    Rng rng(seed);
    for (auto &v : r_any.reshaped()) v = rng.Normal();
    for (auto &v : r_types.reshaped()) v = rng.Normal();
  }
  double operator()(const Outputs<double> &o) const {
    return (o.any.array() * r_any.array()).sum() + (o.types.array() * r_types.array()).sum();
  }
};

// Compares analytic parameter and input gradients with central differences.
// `stride` > 1 samples every stride-th coordinate of each tensor.
double WorstGradientError(Model<double> &m, BatchInput<double> &in, int stride) {
  const Projection proj(in.shape.batch, 99);
  auto f = [&] { return proj(m.Forward(in, Mode::kTrain, nullptr, false)); };
  ForwardTrace<double> tr;
  m.ZeroGrad();
  m.Forward(in, Mode::kTrain, &tr, false);
  const std::vector<MatD> d_inputs = m.Backward(tr, proj.r_any, proj.r_types);

  const double h = 1e-5;
  double worst = 0.0;
  auto check = [&](MatD &value, const MatD &grad, bool touch) {
    for (Eigen::Index i = 0; i < value.size(); i += stride) {
      double &v = value.data()[i];
      const double saved = v;
      v = saved + h;
      if (touch) m.Touch();
      const double up = f();
      v = saved - h;
      if (touch) m.Touch();
      const double down = f();
      v = saved;
      if (touch) m.Touch();
      const double numeric = (up - down) / (2 * h);
      const double a = grad.data()[i];
      worst = std::max(worst, std::abs(numeric - a) / std::max({std::abs(numeric), std::abs(a), 1e-4}));
    }
  };
  for (auto &p : m.params()) check(p.value, p.grad, true);
  for (size_t s = 0; s < in.streams.size(); ++s) check(in.streams[s], d_inputs[s], false);
  return worst;
}

// ---------------------------------------------------------------------------

TEST(Model, ParameterLayoutFollowsArchitecture) {
  const Model<double> lstm(SmallConfig(Arch::kLstm, {StreamName::kMfb, StreamName::kF0}), 1);
  EXPECT_EQ(lstm.param("lstm.wx").value.rows(), 43);
  EXPECT_EQ(lstm.param("lstm.wx").value.cols(), 24);
  EXPECT_THROW(lstm.param("embed.w"), Error);
  EXPECT_TRUE(lstm.buffers().empty());

  const Model<double> conv(SmallConfig(Arch::kConvLstm, {StreamName::kMfb, StreamName::kF0}), 1);
  EXPECT_EQ(conv.param("conv.mfb.w").value.rows(), 3 * 40);
  EXPECT_EQ(conv.param("conv.f0.w").value.rows(), 5 * 3);
  EXPECT_EQ(conv.param("lstm.wx").value.rows(), 2 * 4);
  EXPECT_EQ(conv.buffers().size(), 4u);
  size_t total = 0;
  for (const auto &p : conv.params()) total += static_cast<size_t>(p.value.size());
  EXPECT_EQ(total, conv.num_parameters());
}

TEST(Model, CanonicalWidthParameterCount) {
  ArchConfig cfg;  // ConvLSTM, 64 wide, MFB only
  const Model<float> m(cfg, 0);
  const size_t conv = 3 * 40 * 64 + 64 + 64 + 1;
  const size_t lstm = 64 * 256 + 64 * 256 + 256;
  const size_t heads = 64 * 64 + 64 + 64 + 1 + 64 * 5 + 5;
  EXPECT_EQ(m.num_parameters(), conv + lstm + heads);
}

TEST(Model, RejectsUnorderedOrDuplicateStreams) {
  EXPECT_THROW(Model<double>(SmallConfig(Arch::kLstm, {StreamName::kF0, StreamName::kMfb})), Error);
  EXPECT_THROW(Model<double>(SmallConfig(Arch::kLstm, {StreamName::kMfb, StreamName::kMfb})), Error);
  EXPECT_THROW(Model<double>(SmallConfig(Arch::kLstm, {})), Error);
}

TEST(Model, SeedDeterminesInitialization) {
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb});
  const Model<double> a(cfg, 7), b(cfg, 7), c(cfg, 8);
  EXPECT_EQ(a.param("lstm.wx").value, b.param("lstm.wx").value);
  EXPECT_NE(a.param("lstm.wx").value, c.param("lstm.wx").value);
  // Forget-gate bias starts at one, the other gates at zero.
  const MatD &bias = a.param("lstm.b").value;
  EXPECT_EQ(bias.middleCols(6, 6), MatD::Ones(1, 6));
  EXPECT_EQ(bias.leftCols(6), MatD::Zero(1, 6));
}

TEST(Model, OutputsAreProbabilities) {
  for (Arch arch : {Arch::kLstm, Arch::kConvLstm}) {
    const auto cfg = SmallConfig(arch, {StreamName::kMfb, StreamName::kF0});
    Model<double> m(cfg, 3);
    auto in = RandomInput<double>(cfg, {20, 5}, 4);
    for (auto &x : in.streams) x *= 50.0;
    for (Mode mode : {Mode::kTrain, Mode::kEval}) {
      const auto out = m.Forward(in, mode);
      ASSERT_EQ(out.any.rows(), 5);
      ASSERT_EQ(out.types.cols(), 5);
      EXPECT_GT(out.any.minCoeff(), 0.0);
      EXPECT_LT(out.any.maxCoeff(), 1.0);
      EXPECT_GT(out.types.minCoeff(), 0.0);
      EXPECT_LT(out.types.maxCoeff(), 1.0);
    }
  }
}

TEST(Model, ZeroHeadsGiveOneHalf) {
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb});
  Model<double> m(cfg, 5);
  for (const char *name : {"head_any.w", "head_any.b", "head_types.w", "head_types.b"})
    m.param(name).value.setZero();
  m.Touch();
  const auto out = m.Forward(RandomInput<double>(cfg, {9, 3}, 6), Mode::kEval);
  EXPECT_EQ(out.any, MatD::Constant(3, 1, 0.5));
  EXPECT_EQ(out.types, MatD::Constant(3, 5, 0.5));
}

TEST(Model, EvalModeIsInvariantToBatchOrder) {
  for (Arch arch : {Arch::kLstm, Arch::kConvLstm}) {
    const auto cfg = SmallConfig(arch, {StreamName::kMfb, StreamName::kF0});
    Model<double> m(cfg, 8);
    const SeqShape shape{15, 4};
    const auto in = RandomInput<double>(cfg, shape, 9);
    const std::vector<int> perm = {2, 0, 3, 1};
    BatchInput<double> permuted = in;
    for (size_t s = 0; s < in.streams.size(); ++s)
      for (int t = 0; t < shape.frames; ++t)
        for (int b = 0; b < shape.batch; ++b)
          permuted.streams[s].row(t * shape.batch + b) = in.streams[s].row(t * shape.batch + perm[b]);
    const auto a = m.Forward(in, Mode::kEval);
    const auto p = m.Forward(permuted, Mode::kEval);
    for (int b = 0; b < shape.batch; ++b) {
      EXPECT_NEAR(p.any(b, 0), a.any(perm[b], 0), 1e-14);
      EXPECT_LT((p.types.row(b) - a.types.row(perm[b])).cwiseAbs().maxCoeff(), 1e-14);
    }
    // A clip scored alone gets the same eval-mode output.
    BatchInput<double> single;
    single.shape = {shape.frames, 1};
    for (const auto &x : in.streams) single.streams.push_back(ClipRows(x, shape, 2));
    EXPECT_NEAR(m.Forward(single, Mode::kEval).any(0, 0), a.any(2, 0), 1e-12);
  }
}

TEST(Model, TrainModeUpdatesRunningStatisticsOnlyWhenAsked) {
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb});
  Model<double> m(cfg, 1);
  const auto in = RandomInput<double>(cfg, {10, 3}, 2);
  const MatD before = m.buffers()[0].value;
  m.Forward(in, Mode::kTrain, nullptr, false);
  EXPECT_EQ(m.buffers()[0].value, before);
  m.Forward(in, Mode::kEval);
  EXPECT_EQ(m.buffers()[0].value, before);
  m.Forward(in, Mode::kTrain);
  EXPECT_NE(m.buffers()[0].value, before);
}

TEST(Model, LstmGradientMatchesFiniteDifferences) {
  const auto cfg = SmallConfig(Arch::kLstm, {StreamName::kMfb, StreamName::kF0});
  Model<double> m(cfg, 11);
  auto in = RandomInput<double>(cfg, {12, 3}, 12);
  EXPECT_LT(WorstGradientError(m, in, 1), 1e-5);
}

TEST(Model, ConvLstmGradientMatchesFiniteDifferences) {
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb, StreamName::kF0});
  Model<double> m(cfg, 13);
  auto in = RandomInput<double>(cfg, {12, 3}, 14);
  EXPECT_LT(WorstGradientError(m, in, 1), 1e-5);
}

TEST(Model, ConvLstmGradientAtCanonicalWidthOnSampledCoordinates) {
  ArchConfig cfg;
  cfg.streams = {StreamName::kMfb, StreamName::kF0};
  Model<double> m(cfg, 15);
  auto in = RandomInput<double>(cfg, {10, 3}, 16);
  EXPECT_LT(WorstGradientError(m, in, 97), 1e-5);
}

TEST(Model, ZeroUpstreamGradientGivesZeroGradients) {
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb, StreamName::kF0});
  Model<double> m(cfg, 17);
  const auto in = RandomInput<double>(cfg, {8, 3}, 18);
  ForwardTrace<double> tr;
  m.ZeroGrad();
  m.Forward(in, Mode::kTrain, &tr, false);
  const auto d_in = m.Backward(tr, MatD::Zero(3, 1), MatD::Zero(3, 5));
  for (const auto &p : m.params()) EXPECT_EQ(p.grad.cwiseAbs().maxCoeff(), 0.0) << p.name;
  for (const auto &d : d_in) EXPECT_EQ(d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, EvalModeGradientsAddAcrossClips) {
  // Without batch statistics, the batch gradient is the sum of per-clip ones.
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb});
  Model<double> m(cfg, 19);
  const SeqShape shape{8, 3};
  const auto in = RandomInput<double>(cfg, shape, 20);
  const Projection proj(3, 21);
  ForwardTrace<double> tr;
  m.ZeroGrad();
  m.Forward(in, Mode::kEval, &tr);
  m.Backward(tr, proj.r_any, proj.r_types);
  std::vector<MatD> batch_grads;
  for (const auto &p : m.params()) batch_grads.push_back(p.grad);

  m.ZeroGrad();
  for (int b = 0; b < shape.batch; ++b) {
    BatchInput<double> one;
    one.shape = {shape.frames, 1};
    one.streams.push_back(ClipRows(in.streams[0], shape, b));
    m.Forward(one, Mode::kEval, &tr);
    m.Backward(tr, proj.r_any.row(b), proj.r_types.row(b));
  }
  for (size_t i = 0; i < batch_grads.size(); ++i)
    EXPECT_LT((m.params()[i].grad - batch_grads[i]).cwiseAbs().maxCoeff(), 1e-12) << m.params()[i].name;
}

TEST(Model, StaleTraceIsRejected) {
  const auto cfg = SmallConfig(Arch::kLstm, {StreamName::kMfb});
  Model<double> m(cfg, 1);
  ForwardTrace<double> tr;
  m.Forward(RandomInput<double>(cfg, {4, 2}, 1), Mode::kTrain, &tr);
  m.Touch();
  EXPECT_THROW(m.Backward(tr, MatD::Zero(2, 1), MatD::Zero(2, 5)), Error);
}

TEST(Model, StreamMismatchIsAnInputError) {
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb, StreamName::kF0});
  Model<double> m(cfg, 1);
  auto in = RandomInput<double>(SmallConfig(Arch::kConvLstm, {StreamName::kMfb}), {4, 2}, 1);
  try {
    m.Forward(in, Mode::kEval);
    FAIL() << "expected an InputError";
  } catch (const InputError &e) {
    EXPECT_NE(std::string(e.what()).find("architecture/stream mismatch"), std::string::npos);
  }
  in.streams.push_back(MatD::Zero(8, 4));  // F0 with the wrong width
  EXPECT_THROW(m.Forward(in, Mode::kEval), InputError);
}

TEST(Model, FloatAndDoublePrecisionAgree) {
  const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb, StreamName::kF0}, 16);
  Model<double> md(cfg, 22);
  Model<float> mf = md.Cast<float>();
  const auto in = RandomInput<double>(cfg, {30, 4}, 23);
  BatchInput<float> inf{in.shape, {}};
  for (const auto &x : in.streams) inf.streams.push_back(x.cast<float>());
  const auto od = md.Forward(in, Mode::kEval);
  const auto of = mf.Forward(inf, Mode::kEval);
  EXPECT_LT((od.any - of.any.cast<double>()).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((od.types - of.types.cast<double>()).cwiseAbs().maxCoeff(), 1e-5);
}

// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripReproducesOutputsExactly) {
  TempDir dir;
  for (Arch arch : {Arch::kLstm, Arch::kConvLstm}) {
    const auto cfg = SmallConfig(arch, {StreamName::kMfb, StreamName::kF0}, 10);
    Model<float> m(cfg, 30);
    const auto in = RandomInput<float>(cfg, {12, 3}, 31);
    m.Forward(in, Mode::kTrain);  // move the running statistics off their defaults
    const std::string path = dir / "m.sepm";
    SaveCheckpoint(path, m, "seed=30\n", {NamedTensor{"norm.mfb.mean", {2}, {1.5f, -2.0f}}});
    const Checkpoint ck = LoadCheckpoint(path);
    EXPECT_TRUE(ck.model.config() == cfg);
    EXPECT_EQ(ck.metadata, "seed=30\n");
    ASSERT_NE(ck.find_extra("norm.mfb.mean"), nullptr);
    EXPECT_EQ(ck.find_extra("norm.mfb.mean")->data, (std::vector<float>{1.5f, -2.0f}));
    EXPECT_EQ(ck.find_extra("missing"), nullptr);
    Model<float> loaded = ck.model;
    const auto a = m.Forward(in, Mode::kEval);
    const auto b = loaded.Forward(in, Mode::kEval);
    EXPECT_EQ(a.any, b.any);
    EXPECT_EQ(a.types, b.types);
  }
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  TempDir dir;
  const std::string junk = dir / "junk.sepm";
  { std::ofstream(junk) << "not a checkpoint"; }
  EXPECT_THROW(LoadCheckpoint(junk), InputError);
  EXPECT_THROW(LoadCheckpoint(dir / "absent.sepm"), InputError);

  const std::string path = dir / "m.sepm";
  SaveCheckpoint(path, Model<float>(SmallConfig(Arch::kLstm, {StreamName::kMfb}), 1));
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 7);
  EXPECT_THROW(LoadCheckpoint(path), InputError);
}

// ---------------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Model<double> m(SmallConfig(Arch::kLstm, {StreamName::kMfb}), 1);
  const MatD before = m.param("lstm.wx").value;
  Adam<double> opt(m, AdamConfig{});
  m.ZeroGrad();
  opt.Step(m);
  EXPECT_EQ(m.param("lstm.wx").value, before);
  EXPECT_EQ(opt.step(), 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Model<double> m(SmallConfig(Arch::kLstm, {StreamName::kMfb}), 1);
  Adam<double> opt(m, AdamConfig{});
  const MatD before = m.param("head_any.b").value;
  const MatD w_before = m.param("head_any.w").value;
  m.ZeroGrad();
  m.param("head_any.b").grad(0, 0) = 1.0;
  m.param("head_any.w").grad(0, 0) = -3.0;
  opt.Step(m);
  EXPECT_NEAR(m.param("head_any.b").value(0, 0) - before(0, 0), -0.01 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(m.param("head_any.w").value(0, 0) - w_before(0, 0), 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_EQ(m.param("head_any.w").value(1, 0), w_before(1, 0));
}

TEST(Adam, MomentsFollowTheRecurrence) {
  Model<double> m(SmallConfig(Arch::kLstm, {StreamName::kMfb}), 1);
  Adam<double> opt(m, AdamConfig{});
  const size_t idx = 0;
  for (double g : {2.0, -1.0}) {
    m.ZeroGrad();
    m.params()[idx].grad(0, 0) = g;
    opt.Step(m);
  }
  EXPECT_NEAR(opt.first_moments()[idx](0, 0), 0.9 * 0.1 * 2.0 + 0.1 * -1.0, 1e-15);
  EXPECT_NEAR(opt.second_moments()[idx](0, 0), 0.999 * 0.001 * 4.0 + 0.001 * 1.0, 1e-15);
}

TEST(Adam, NonFiniteGradientAbortsStepWithoutChanges) {
  Model<double> m(SmallConfig(Arch::kLstm, {StreamName::kMfb}), 1);
  Adam<double> opt(m, AdamConfig{});
  m.ZeroGrad();
  m.param("head_any.b").grad(0, 0) = 1.0;
  m.param("lstm.wh").grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const MatD before = m.param("head_any.b").value;
  const uint64_t version = m.version();
  EXPECT_THROW(opt.Step(m), Error);
  EXPECT_EQ(m.param("head_any.b").value, before);
  EXPECT_EQ(opt.step(), 0);
  EXPECT_EQ(m.version(), version);
}

TEST(Adam, IdenticalRunsAreBitwiseIdentical) {
  auto run = [] {
    const auto cfg = SmallConfig(Arch::kConvLstm, {StreamName::kMfb, StreamName::kF0}, 8);
    Model<float> m(cfg, 40);
    Adam<float> opt(m, AdamConfig{});
    const auto in = RandomInput<float>(cfg, {10, 4}, 41);
    for (int step = 0; step < 5; ++step) {
      ForwardTrace<float> tr;
      m.ZeroGrad();
      const auto out = m.Forward(in, Mode::kTrain, &tr);
      m.Backward(tr, out.any, out.types);  // descend on half the squared outputs
      opt.Step(m);
    }
    return m.param("lstm.wx").value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, DescendsAQuadraticLoss) {
  const auto cfg = SmallConfig(Arch::kLstm, {StreamName::kMfb});
  Model<double> m(cfg, 50);
  Adam<double> opt(m, AdamConfig{});
  const auto in = RandomInput<double>(cfg, {6, 4}, 51);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    ForwardTrace<double> tr;
    m.ZeroGrad();
    const auto out = m.Forward(in, Mode::kTrain, &tr);
    const double loss = 0.5 * (out.any.squaredNorm() + out.types.squaredNorm());
    if (step == 0) first = loss;
    last = loss;
    m.Backward(tr, out.any, out.types);
    opt.Step(m);
  }
  EXPECT_LT(last, 0.2 * first);
}

}  // namespace
}  // namespace sepkit::nn
