#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "fif/errors.hpp"
#include "fif/linear_oracle.hpp"
#include "fif/trainer.hpp"

namespace fif {
namespace {

using ad::Activation;

ArchSpec small_arch(std::uint64_t seed) {
  ArchSpec s;
  s.D = 2;
  s.d = 1;
  s.hidden = {8};
  s.activation = Activation::SiLU;
  s.seed = seed;
  return s;
}

TrainConfig small_config() {
  TrainConfig c;
  c.loss.beta = 10.0;
  c.opt.lr = 3e-3;
  c.opt.schedule = Schedule::OneCycle;
  c.epochs = 3;
  c.batch_size = 32;
  c.seed = 11;
  return c;
}

void expect_same_log(const MetricsLog& a, const MetricsLog& b) {
  ASSERT_EQ(a.rows().size(), b.rows().size());
  for (std::size_t i = 0; i < a.rows().size(); ++i) {
    EXPECT_EQ(a.rows()[i].step, b.rows()[i].step);
    EXPECT_EQ(a.rows()[i].metric, b.rows()[i].metric);
    EXPECT_EQ(a.rows()[i].value, b.rows()[i].value) << "row " << i;
  }
}

TEST(Adam, ZeroGradientLeavesParams) {
  Vector p = Vector::LinSpaced(5, -1.0, 1.0);
  const Vector before = p;
  AdamMoments m{Vector::Zero(5), Vector::Zero(5)};
  for (std::int64_t t = 1; t <= 10; ++t) adam_step(p, Vector::Zero(5), m, t, 0.1, OptimHyper{});
  EXPECT_EQ(p, before);
}

TEST(Adam, ConstantGradientStepsAreLrSized) {
  // Bias correction makes m_hat = g and v_hat = g^2 exactly, so every update
  // is lr * g / (|g| + eps).
  const OptimHyper h;
  Vector g(3);
  g << 2.0, -0.5, 1e-3;
  Vector p = Vector::Zero(3);
  AdamMoments m{Vector::Zero(3), Vector::Zero(3)};
  for (std::int64_t t = 1; t <= 50; ++t) {
    const Vector before = p;
    adam_step(p, g, m, t, 0.01, h);
    const Vector expect = -0.01 * g.array() / (g.array().abs() + h.eps);
    EXPECT_LT((p - before - expect).cwiseAbs().maxCoeff(), 1e-12) << "t=" << t;
  }
}

TEST(Adam, QuadraticBowlConverges) {
  Vector p(4);
  p << 1.0, -2.0, 0.5, 3.0;
  AdamMoments m{Vector::Zero(4), Vector::Zero(4)};
  std::int64_t t = 0;
  while (p.norm() >= 1e-6 && t < 5000) {
    ++t;
    adam_step(p, p, m, t, 1e-2, OptimHyper{});
  }
  EXPECT_LT(p.norm(), 1e-6) << "after " << t << " steps";
}

TEST(Adam, DecoupledDecayShrinksWithoutGradient) {
  OptimHyper h;
  h.weight_decay = 0.1;
  Vector p = Vector::Constant(2, 3.0);
  AdamMoments m{Vector::Zero(2), Vector::Zero(2)};
  adam_step(p, Vector::Zero(2), m, 1, 0.5, h);
  EXPECT_NEAR(p(0), 3.0 * (1.0 - 0.5 * 0.1), 1e-15);
}

TEST(Adam, RejectsBadInput) {
  Vector p = Vector::Zero(2);
  AdamMoments m{Vector::Zero(2), Vector::Zero(2)};
  EXPECT_THROW(adam_step(p, Vector::Zero(3), m, 1, 0.1, OptimHyper{}), DimensionError);
  EXPECT_THROW(adam_step(p, Vector::Zero(2), m, 0, 0.1, OptimHyper{}), std::invalid_argument);
}

TEST(Schedule, OneCycleShape) {
  OptimHyper h;
  h.lr = 1e-3;
  h.schedule = Schedule::OneCycle;
  const std::int64_t total = 1000;
  EXPECT_NEAR(lr_at(h, 0, total), h.lr / h.div_factor, 1e-15);
  double peak = 0.0;
  std::int64_t at = 0;
  for (std::int64_t s = 0; s < total; ++s) {
    if (lr_at(h, s, total) > peak) {
      peak = lr_at(h, s, total);
      at = s;
    }
  }
  EXPECT_NEAR(peak, h.lr, 1e-6 * h.lr);
  EXPECT_NEAR(static_cast<double>(at) / total, h.warmup_frac, 0.01);
  EXPECT_LT(lr_at(h, total - 1, total), h.lr / h.div_factor / h.final_div_factor * 1.01);
  for (std::int64_t s = at + 1; s < total; ++s) EXPECT_LE(lr_at(h, s, total), lr_at(h, s - 1, total));
}

TEST(Schedule, ConstantAndNames) {
  OptimHyper h;
  h.lr = 0.2;
  EXPECT_EQ(lr_at(h, 0, 10), 0.2);
  EXPECT_EQ(lr_at(h, 9, 10), 0.2);
  EXPECT_EQ(schedule_from_string(to_string(Schedule::OneCycle)), Schedule::OneCycle);
  EXPECT_THROW(schedule_from_string("cosine"), std::invalid_argument);
}

TEST(Checkpoint, SaveLoadSaveIsByteStable) {
  const Dataset ds = gen_sinusoid(200, 0.1, 1);
  Trainer tr(build(small_arch(2)), ds, small_config());
  for (int i = 0; i < 5; ++i) tr.step();
  const std::string bytes = serialize_checkpoint(tr.checkpoint("abc"));
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.phi, tr.pair().phi);
  EXPECT_EQ(back.opt.step, 5);
  EXPECT_EQ(back.config_hash, "abc");
}

TEST(Checkpoint, FileRoundTrip) {
  const Dataset ds = gen_sinusoid(200, 0.1, 1);
  Trainer tr(build(small_arch(2)), ds, small_config());
  tr.step();
  const std::string path = ::testing::TempDir() + "fif_ckpt_roundtrip.bin";
  save_checkpoint(path, tr.checkpoint());
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(tr.checkpoint()));
  std::remove(path.c_str());
}

TEST(Checkpoint, CorruptHeaderAndVersionRejected) {
  const Dataset ds = gen_sinusoid(100, 0.1, 1);
  Trainer tr(build(small_arch(2)), ds, small_config());
  std::string bytes = serialize_checkpoint(tr.checkpoint());
  std::string bad_magic = bytes;
  bad_magic[0] ^= 0x5a;
  EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
  // The version word follows the magic; bump it.
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    std::string v = bytes;
    v[i] = static_cast<char>(v[i] + 1);
    try {
      deserialize_checkpoint(v);
    } catch (const CheckpointError& e) {
      if (std::string(e.what()).find("version") != std::string::npos) SUCCEED();
      else continue;
      return;
    }
  }
  ADD_FAILURE() << "no byte edit produced a version error";
}

TEST(Checkpoint, ArchMismatchListsDifferences) {
  const Dataset ds = gen_sinusoid(100, 0.1, 1);
  Trainer a(build(small_arch(2)), ds, small_config());
  ArchSpec other = small_arch(2);
  other.hidden = {16};
  other.activation = Activation::Tanh;
  Trainer b(build(other), ds, small_config());
  try {
    b.restore(a.checkpoint());
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("hidden"), std::string::npos) << msg;
    EXPECT_NE(msg.find("activation"), std::string::npos) << msg;
  }
  EXPECT_EQ(arch_diff(small_arch(2), small_arch(2)), "");
}

TEST(Checkpoint, ArchJsonRoundTrip) {
  ArchSpec s = small_arch(9);
  s.hidden = {4, 5};
  EXPECT_EQ(arch_diff(s, arch_from_json(arch_to_json(s))), "");
  const ArchSpec t = tied_pair(Matrix::Identity(1, 3)).spec;
  EXPECT_EQ(arch_diff(t, arch_from_json(arch_to_json(t))), "");
}

TEST(Trainer, IdenticalConfigsGiveIdenticalLogs) {
  const Dataset ds = gen_sinusoid(300, 0.1, 3);
  Trainer a(build(small_arch(4)), ds, small_config());
  Trainer b(build(small_arch(4)), ds, small_config());
  a.run();
  b.run();
  expect_same_log(a.log(), b.log());
  EXPECT_EQ(a.pair().theta, b.pair().theta);
}

TEST(Trainer, ResumeMidEpochMatchesUninterrupted) {
  const Dataset ds = gen_sinusoid(300, 0.1, 3);
  Trainer full(build(small_arch(4)), ds, small_config());
  full.run();

  Trainer first(build(small_arch(4)), ds, small_config());
  const std::int64_t cut = first.total_steps() / 3 + 2;  // inside the second epoch
  for (std::int64_t i = 0; i < cut; ++i) first.step();
  const std::string bytes = serialize_checkpoint(first.checkpoint("h"));

  Trainer second(build(small_arch(4)), ds, small_config());
  for (const MetricRow& r : first.log().rows()) second.log().add(r.step, r.metric, r.value);
  second.restore(deserialize_checkpoint(bytes));
  second.run();
  expect_same_log(full.log(), second.log());
  EXPECT_EQ(full.pair().phi, second.pair().phi);
  EXPECT_EQ(full.pair().theta, second.pair().theta);
}

TEST(Trainer, RestoreTruncatesLogToCursor) {
  const Dataset ds = gen_sinusoid(100, 0.1, 3);
  Trainer tr(build(small_arch(4)), ds, small_config());
  tr.step();
  const Checkpoint c = tr.checkpoint();
  tr.step();
  tr.step();
  tr.restore(c);
  EXPECT_EQ(static_cast<std::int64_t>(tr.log().rows().size()), c.metrics_cursor);
  EXPECT_EQ(tr.steps_done(), 1);
}

TEST(Trainer, LogsEveryBreakdownTerm) {
  const Dataset ds = gen_sinusoid(100, 0.1, 3);
  TrainConfig c = small_config();
  c.log_every = 2;
  c.max_steps = 6;
  Trainer tr(build(small_arch(4)), ds, c);
  tr.run();
  EXPECT_EQ(tr.steps_done(), 6);
  for (const char* m : {"loss", "nll_prior", "surrogate", "recon", "lr"}) {
    EXPECT_EQ(tr.log().series(m).size(), 3u) << m;
  }
  const std::vector<double> loss = tr.log().series("loss");
  const std::vector<double> parts_sum = [&] {
    std::vector<double> out;
    const auto a = tr.log().series("nll_prior"), b = tr.log().series("surrogate"),
               r = tr.log().series("recon");
    // The logged surrogate is the unsigned probe average.
    const double sign = c.loss.variant.sign();
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(a[i] + sign * b[i] + c.loss.beta * r[i]);
    return out;
  }();
  for (std::size_t i = 0; i < loss.size(); ++i) EXPECT_NEAR(loss[i], parts_sum[i], 1e-9);
}

TEST(Trainer, NonFiniteBatchAborts) {
  Dataset ds = gen_sinusoid(64, 0.1, 3);
  ds.x(5, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig c = small_config();
  c.batch_size = 64;
  Trainer tr(build(small_arch(4)), ds, c);
  EXPECT_THROW(tr.step(), NumericalError);
}

TEST(Trainer, DimensionMismatchRejected) {
  const Dataset ds = gen_gaussian(50, Matrix::Identity(3, 3), 1);
  EXPECT_THROW(Trainer(build(small_arch(4)), ds, small_config()), DimensionError);
}

TEST(Trainer, LinearGaussianLossSmoothedNonIncreasing) {
  // Tied linear pair with d = 1 on full batches. The tracked quantity is the
  // exact objective, which for a tied pair is the closed-form loss on the
  // batch second moment; the logged surrogate value carries no log-det.
  // After the one-cycle warmup its 100-step window means must not rise.
  Matrix sigma = Matrix::Zero(3, 3);
  sigma.diagonal() << 4.0, 1.0, 0.25;
  const Dataset ds = gen_gaussian(2000, sigma, 12, {1.0, 0.0});
  const Matrix second = ds.x.transpose() * ds.x / static_cast<double>(ds.n());
  TrainConfig c;
  c.loss.beta = 5.0;
  c.opt.lr = 1e-2;
  c.opt.schedule = Schedule::OneCycle;
  c.batch_size = 2000;
  c.epochs = 1000;
  c.seed = 13;
  Trainer tr(tied_pair(Rng(14).normal_matrix(1, 3)), ds, c);
  std::vector<double> loss;
  tr.on_step = [&](const StepInfo&) {
    loss.push_back(closed_form_loss(layer_weight(tr.pair(), Side::Encoder, 0), second,
                                    1.0 / (2.0 * c.loss.beta)));
  };
  tr.run();
  const auto warm = static_cast<std::size_t>(c.opt.warmup_frac * static_cast<double>(loss.size()));
  std::vector<double> windows;
  for (std::size_t s = warm; s + 100 <= loss.size(); s += 100) {
    double acc = 0.0;
    for (std::size_t i = s; i < s + 100; ++i) acc += loss[i];
    windows.push_back(acc / 100.0);
  }
  ASSERT_GE(windows.size(), 5u);
  for (std::size_t i = 1; i < windows.size(); ++i) {
    // Once converged, consecutive windows agree to rounding; allow a few ulps.
    const double ulps = 16 * std::numeric_limits<double>::epsilon() * std::abs(windows[i - 1]);
    EXPECT_LE(windows[i], windows[i - 1] + ulps) << "window " << i;
  }
}

TEST(MetricsLog, CsvRowsAndLookup) {
  MetricsLog log("r1");
  log.add(1, "loss", 0.5);
  log.add(2, "loss", 0.25);
  log.add(2, "recon", 0.1);
  EXPECT_EQ(log.last("loss"), 0.25);
  EXPECT_TRUE(std::isnan(log.last("missing")));
  std::ostringstream os;
  log.write_csv(os);
  EXPECT_EQ(os.str(), MetricsLog::csv_header() + "\nr1,1,loss,0.5\nr1,2,loss,0.25\nr1,2,recon,0.1\n");
}

TEST(MetricsLog, CsvValuesRoundTripExactly) {
  MetricsLog log("r");
  const double v = 0.1 + 0.2;
  log.add(0, "x", v);
  const std::string row = log.csv_row(log.rows()[0]);
  EXPECT_EQ(std::stod(row.substr(row.rfind(',') + 1)), v);
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

}  // namespace
}  // namespace fif
