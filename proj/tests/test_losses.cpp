#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vsr/autograd.hpp"
#include "vsr/discriminator.hpp"
#include "vsr/errors.hpp"
#include "vsr/losses.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"
#include "vsr/student.hpp"
#include "vsr/teacher.hpp"
#include "vsr/video.hpp"

using namespace vsr;

namespace {

TensorF rand_batch(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  TensorF t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data) v = float(rng.uniform(lo, hi));
  return t;
}

TensorD rand_batch_d(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

bool bit_equal(const TensorF& a, const TensorF& b) {
  if (a.shape != b.shape) return false;
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

bool grad_absent_or_zero(const VarT<float>& v) {
  if (v->grad.data.empty()) return true;
  return std::all_of(v->grad.data.begin(), v->grad.data.end(), [](float g) { return g == 0.0f; });
}

bool grad_has_signal(const VarT<float>& v) {
  if (v->grad.data.empty()) return false;
  return std::any_of(v->grad.data.begin(), v->grad.data.end(), [](float g) { return g != 0.0f; });
}

// Central finite difference of `eval` w.r.t. one tensor slot, step 1e-4.
template <class Eval>
double central_fd(const Eval& eval, double& slot, double step = 1e-4) {
  const double orig = slot;
  slot = orig + step;
  const double up = eval();
  slot = orig - step;
  const double down = eval();
  slot = orig;
  return (up - down) / (2.0 * step);
}

struct FdTally {
  int total = 0;
  int bad = 0;
  double worst = 0.0;

  template <class Eval>
  void probe(const Eval& eval, const VarT<double>& v, int64_t idx) {
    double fd = central_fd(eval, v->value.data[size_t(idx)]);
    double an = v->grad.data.empty() ? 0.0 : v->grad.data[size_t(idx)];
    double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
    total++;
    if (rel > 1e-3) bad++;
    worst = std::max(worst, rel);
  }

  double pass_fraction() const { return total == 0 ? 1.0 : double(total - bad) / double(total); }
};

Discriminator micro_pixel_critic(uint64_t seed) {
  DiscriminatorConfig cfg = default_disc_config(DiscDomain::pixel);
  cfg.tail_channels = 8;
  cfg.detail_channels = 5;
  cfg.consistency_channels = 3;
  cfg.tail_hidden = 6;
  return build_discriminator(cfg, seed);
}

Student micro_student() {
  StudentConfig cfg;
  cfg.base_widths = {8, 8, 8, 8, 8};
  cfg.prune_body = 0.0;
  cfg.prune_decoder = 0.0;
  return build_student(cfg);
}

Discriminator micro_feature_critic(uint64_t seed, const Student& s) {
  DiscriminatorConfig cfg = default_disc_config(DiscDomain::feature);
  cfg.tail_channels = 8;
  cfg.detail_channels = 5;
  cfg.consistency_channels = 3;
  cfg.tail_hidden = 6;
  return build_discriminator(cfg, seed, &s);
}

}  // namespace

// ---------------------------------------------------------------------------
// perceptual distance
// ---------------------------------------------------------------------------

TEST_CASE("perceptual pyramid is frozen, seeded, and reproducible", "[losses]") {
  DistsNet net = build_dists(0x11);
  REQUIRE(net.params.order.size() == 6);
  const int64_t widths[4] = {3, 8, 12, 16};
  for (int i = 0; i < 3; ++i) {
    std::string prefix = "dists/p" + std::to_string(i);
    const auto& w = net.params.at(prefix + "/w");
    const auto& b = net.params.at(prefix + "/b");
    CHECK(w.var->value.shape == std::vector<int64_t>{widths[i + 1], widths[i], 3, 3});
    CHECK(b.var->value.shape == std::vector<int64_t>{widths[i + 1]});
    CHECK_FALSE(w.trainable);
    CHECK_FALSE(b.trainable);
    CHECK(w.frozen_group == "dists");
    CHECK(b.frozen_group == "dists");
    CHECK(std::all_of(b.var->value.data.begin(), b.var->value.data.end(),
                      [](float v) { return v == 0.0f; }));
  }
  CHECK(hash_params(build_dists(0x11).params) == hash_params(net.params));
  CHECK(hash_params(build_dists(0x12).params) != hash_params(net.params));
}

TEST_CASE("perceptual distance is zero on identical clips and symmetric", "[losses]") {
  DistsNet net = build_dists(0x11);
  auto x = constant(rand_batch({2, 3, 16, 16}, 0xa1));
  auto y = constant(rand_batch({2, 3, 16, 16}, 0xa2));

  CHECK(dists(net, x, x)->value.data[0] == 0.0f);

  float dab = dists(net, x, y)->value.data[0];
  float dba = dists(net, y, x)->value.data[0];
  CHECK(dab == dba);  // commutative arithmetic makes this exact
  CHECK(std::abs(dab - dba) <= 1e-7f);
  CHECK(dab > 0.0f);

  auto dn = cast_dists<double>(net);
  auto xd = constant(rand_batch_d({2, 3, 16, 16}, 0xa1));
  CHECK(dists(dn, xd, xd)->value.data[0] == 0.0);
}

TEST_CASE("perceptual distance orders sign flips far above tiny noise", "[losses]") {
  DistsNet net = build_dists(0x11);
  TensorF x = rand_batch({1, 3, 16, 16}, 0xb3);
  double mean = 0;
  for (float v : x.data) mean += v;
  mean /= double(x.data.size());
  for (float& v : x.data) v = float(v - mean);

  TensorF negx = x;
  for (float& v : negx.data) v = -v;
  TensorF tiny = x;
  Rng rng(0xb4);
  for (float& v : tiny.data) v = float(v + rng.uniform(-1e-3, 1e-3));

  float d_neg = dists(net, constant(x), constant(negx))->value.data[0];
  float d_tiny = dists(net, constant(x), constant(tiny))->value.data[0];
  CHECK(d_neg == Approx(0.634748816).margin(1e-4));
  CHECK(d_tiny < 1e-4f);
  CHECK(d_neg > d_tiny);
}

TEST_CASE("perceptual distance grows monotonically under blur", "[losses]") {
  DistsNet net = build_dists(0x11);
  SynthOptions opt;
  opt.frames = 3;
  opt.height = 32;
  opt.width = 32;
  opt.force_texture = TextureKind::checker;
  Clip clip = synth_clip(0xc5, opt);
  auto xs = constant(to_signed(clip.data));

  const double sigmas[4] = {0.0, 0.5, 1.0, 2.0};
  float prev = -1.0f;
  std::vector<float> values;
  for (double s : sigmas) {
    TensorF blurred = clip.data;
    if (s > 0) {
      for (int64_t t = 0; t < clip.frames(); ++t) {
        TensorF bl = gaussian_blur_frame(clip.frame(t), s);
        std::copy(bl.data.begin(), bl.data.end(), blurred.data.begin() + t * bl.numel());
      }
    }
    float d = dists(net, xs, constant(to_signed(blurred)))->value.data[0];
    CHECK(d >= prev);
    prev = d;
    values.push_back(d);
  }
  CHECK(values[0] == 0.0f);
  CHECK(values[1] == Approx(0.0209792852).margin(1e-4));
  CHECK(values[3] == Approx(0.275246203).margin(1e-4));
}

TEST_CASE("perceptual distance routes gradient to both clips but not the pyramid", "[losses]") {
  DistsNet net = build_dists(0x11);
  auto a = leaf(rand_batch({1, 3, 8, 8}, 0xc1), true);
  auto b = leaf(rand_batch({1, 3, 8, 8}, 0xc2), true);
  backward(dists(net, a, b));
  CHECK(grad_has_signal(a));
  CHECK(grad_has_signal(b));
  for (const auto& name : net.params.order) CHECK(grad_absent_or_zero(net.params.var(name)));
}

TEST_CASE("perceptual distance rejects mismatched or non-clip inputs", "[losses]") {
  DistsNet net = build_dists(0x11);
  auto a = constant(rand_batch({1, 3, 8, 8}, 1));
  CHECK_THROWS_AS(dists(net, a, constant(rand_batch({1, 3, 8, 4}, 2))), DimensionError);
  auto c4 = constant(rand_batch({1, 4, 8, 8}, 3));
  CHECK_THROWS_AS(dists(net, c4, c4), DimensionError);
}

// ---------------------------------------------------------------------------
// generator objective
// ---------------------------------------------------------------------------

TEST_CASE("generator loss identity case hits the softplus floor exactly", "[losses]") {
  DistsNet net = build_dists(0x11);
  const double expect = 1.1 * std::log(2.0);

  auto dn = cast_dists<double>(net);
  auto x = constant(rand_batch_d({2, 3, 16, 16}, 0xd1));
  auto f = constant(rand_batch_d({2, 6, 8, 8}, 0xd2));
  auto terms = gen_loss(x, x, f, f, constant(TensorD({1})), constant(TensorD({1})), LossWeights{}, dn);
  CHECK(std::abs(terms.total->value.data[0] - expect) <= 1e-9);
  CHECK(terms.l1_pixel == 0.0);
  CHECK(terms.dists_pixel == 0.0);
  CHECK(terms.l1_feature == 0.0);
  CHECK(terms.adv_pixel == Approx(std::log(2.0)).margin(1e-12));
  CHECK(terms.adv_feature == Approx(std::log(2.0)).margin(1e-12));

  auto xf = constant(rand_batch({2, 3, 16, 16}, 0xd1));
  auto ff = constant(rand_batch({2, 6, 8, 8}, 0xd2));
  auto tf = gen_loss(xf, xf, ff, ff, constant(TensorF({1})), constant(TensorF({1})), LossWeights{}, net);
  CHECK(std::abs(double(tf.total->value.data[0]) - expect) <= 1e-6);
}

TEST_CASE("generator loss bookkeeping recomposes the total from its terms", "[losses]") {
  DistsNet net = build_dists(0x11);
  LossWeights w{0.1, 1.0, 1.0};

  auto dn = cast_dists<double>(net);
  auto xs = constant(rand_batch_d({2, 3, 16, 16}, 0xe1));
  auto xt = constant(rand_batch_d({2, 3, 16, 16}, 0xe2));
  auto fs = constant(rand_batch_d({2, 6, 8, 8}, 0xe3));
  auto ft = constant(rand_batch_d({2, 6, 8, 8}, 0xe4));
  auto terms = gen_loss(xs, xt, fs, ft, constant(TensorD({1}, {0.37})), constant(TensorD({1}, {-0.81})),
                        w, dn);
  double recomposed =
      w.lambda_pixel * (terms.l1_pixel + terms.dists_pixel + w.lambda_adv * terms.adv_pixel) +
      w.lambda_feature * (terms.l1_feature + w.lambda_adv * terms.adv_feature);
  CHECK(std::abs(terms.total->value.data[0] - recomposed) <= 1e-9);
  CHECK(terms.pixel_total ==
        Approx(terms.l1_pixel + terms.dists_pixel + w.lambda_adv * terms.adv_pixel).margin(1e-12));
  CHECK(terms.feature_total == Approx(terms.l1_feature + w.lambda_adv * terms.adv_feature).margin(1e-12));
  CHECK(terms.l1_pixel > 0.0);
  CHECK(terms.dists_pixel > 0.0);
  CHECK(terms.adv_pixel > 0.0);
  CHECK(terms.adv_feature > 0.0);

  auto tf = gen_loss(constant(rand_batch({2, 3, 16, 16}, 0xe1)), constant(rand_batch({2, 3, 16, 16}, 0xe2)),
                     constant(rand_batch({2, 6, 8, 8}, 0xe3)), constant(rand_batch({2, 6, 8, 8}, 0xe4)),
                     constant(TensorF({1}, {0.37f})), constant(TensorF({1}, {-0.81f})), w, net);
  double recomposed_f =
      w.lambda_pixel * (tf.l1_pixel + tf.dists_pixel + w.lambda_adv * tf.adv_pixel) +
      w.lambda_feature * (tf.l1_feature + w.lambda_adv * tf.adv_feature);
  CHECK(std::abs(double(tf.total->value.data[0]) - recomposed_f) <= 1e-6);
}

TEST_CASE("zero adversarial weight reduces the generator loss to pure distillation", "[losses]") {
  DistsNet net = build_dists(0x11);
  LossWeights w;
  w.lambda_adv = 0.0;

  auto xs = leaf(rand_batch({2, 3, 16, 16}, 0xe5), true);
  auto xt = constant(rand_batch({2, 3, 16, 16}, 0xe6));
  auto fs = leaf(rand_batch({2, 6, 8, 8}, 0xe7), true);
  auto ft = constant(rand_batch({2, 6, 8, 8}, 0xe8));
  auto logit_a = leaf(TensorF({1}, {3.7f}), true);
  auto logit_b = leaf(TensorF({1}, {-123.0f}), true);

  auto t1 = gen_loss(xs, xt, fs, ft, logit_a, logit_a, w, net);
  auto t2 = gen_loss(xs, xt, fs, ft, logit_b, logit_b, w, net);
  CHECK(t1.total->value.data[0] == t2.total->value.data[0]);  // scores can't matter

  double distill = w.lambda_pixel * (t1.l1_pixel + t1.dists_pixel) + w.lambda_feature * t1.l1_feature;
  CHECK(double(t1.total->value.data[0]) == Approx(distill).margin(1e-6));

  backward(t1.total);
  CHECK(grad_absent_or_zero(logit_a));
  CHECK(grad_has_signal(xs));
  CHECK(grad_has_signal(fs));
}

TEST_CASE("generator loss validates weights and score shapes", "[losses]") {
  DistsNet net = build_dists(0x11);
  auto x = constant(rand_batch({1, 3, 8, 8}, 1));
  auto f = constant(rand_batch({1, 6, 4, 4}, 2));
  auto z = constant(TensorF({1}));
  LossWeights bad;
  bad.lambda_adv = -0.5;
  CHECK_THROWS_AS(gen_loss(x, x, f, f, z, z, bad, net), ConfigError);
  auto vec = constant(TensorF({3}));
  CHECK_THROWS_AS(gen_loss(x, x, f, f, vec, z, LossWeights{}, net), DimensionError);
  CHECK_THROWS_AS(gen_loss(x, constant(rand_batch({1, 3, 8, 4}, 3)), f, f, z, z, LossWeights{}, net),
                  DimensionError);
}

TEST_CASE("generator loss gradients match central finite differences", "[losses][slow]") {
  DistsNet net = build_dists(0x11);
  auto dn = cast_dists<double>(net);
  auto xs = leaf(rand_batch_d({2, 3, 8, 8}, 0xf1), true);
  auto xt = constant(rand_batch_d({2, 3, 8, 8}, 0xf2));
  auto fs = leaf(rand_batch_d({2, 6, 4, 4}, 0xf3), true);
  auto ft = constant(rand_batch_d({2, 6, 4, 4}, 0xf4));
  auto lp = leaf(TensorD({1}, {0.23}), true);
  auto lf = leaf(TensorD({1}, {-0.57}), true);
  LossWeights w;

  auto eval = [&] { return double(gen_loss(xs, xt, fs, ft, lp, lf, w, dn).total->value.data[0]); };
  backward(gen_loss(xs, xt, fs, ft, lp, lf, w, dn).total);

  FdTally tally;
  Rng pick(0x9e);
  for (int i = 0; i < 72; ++i)
    tally.probe(eval, xs, int64_t(pick.uniform(0, 1) * double(xs->value.numel() - 1)));
  for (int i = 0; i < 30; ++i)
    tally.probe(eval, fs, int64_t(pick.uniform(0, 1) * double(fs->value.numel() - 1)));
  tally.probe(eval, lp, 0);
  tally.probe(eval, lf, 0);

  INFO("worst relative error " << tally.worst);
  CHECK(tally.total == 104);
  CHECK(tally.pass_fraction() >= 0.99);
}

// ---------------------------------------------------------------------------
// critic objective
// ---------------------------------------------------------------------------

TEST_CASE("critic loss on an empty batch is zero", "[losses]") {
  Discriminator dpix = micro_pixel_critic(0x31);
  Student micro = micro_student();
  Discriminator dfeat = micro_feature_critic(0x32, micro);
  auto v = disc_loss({}, dpix, dfeat);
  CHECK(v->value.data[0] == 0.0f);
  CHECK(v->parents.empty());
  CHECK_FALSE(v->needs_grad);
}

TEST_CASE("critic loss on a zero payload with fully fake labels is two softplus floors", "[losses]") {
  Discriminator dpix = micro_pixel_critic(0x31);
  Student micro = micro_student();
  Discriminator dfeat = micro_feature_critic(0x32, micro);

  // Zero input through zero-bias convs keeps every logit at exactly 0.
  std::vector<LabeledSample> samples{
      LabeledSample{constant(TensorF({2, 3, 16, 16})), DiscDomain::pixel, -1, -1, SourceTag::student}};
  float v = disc_loss(samples, dpix, dfeat)->value.data[0];
  CHECK(std::abs(double(v) - 2.0 * std::log(2.0)) <= 1e-6);

  auto dp = cast_discriminator<double>(dpix);
  auto df = cast_discriminator<double>(dfeat);
  std::vector<LabeledSampleT<double>> dsamples{
      LabeledSampleT<double>{constant(TensorD({2, 3, 16, 16})), DiscDomain::pixel, -1, -1,
                             SourceTag::student}};
  CHECK(std::abs(disc_loss(dsamples, dp, df)->value.data[0] - 2.0 * std::log(2.0)) <= 1e-12);
}

TEST_CASE("zero-labeled head contributes no gradient and no sensitivity at all", "[losses]") {
  Discriminator dpix = micro_pixel_critic(0x31);
  Student micro = micro_student();
  Discriminator dfeat = micro_feature_critic(0x32, micro);

  std::vector<LabeledSample> samples{LabeledSample{constant(rand_batch({2, 3, 16, 16}, 0x41)),
                                                   DiscDomain::pixel, 0, 1, SourceTag::video}};
  dpix.params.zero_grads();
  backward(disc_loss(samples, dpix, dfeat));

  // The detail head saw y_d = 0: its parameters get exactly zero gradient.
  CHECK(grad_absent_or_zero(dpix.params.var("head/detail/w")));
  CHECK(grad_absent_or_zero(dpix.params.var("head/detail/b")));
  // The consistency head and the shared tail still learn from y_c = +1.
  CHECK(grad_has_signal(dpix.params.var("head/consistency/w")));
  CHECK(grad_has_signal(dpix.params.var("tail/c2/w")));

  // Finite-difference view of the same fact: perturbing the detail head does
  // not change the loss value even in the last bit.
  float before = disc_loss(samples, dpix, dfeat)->value.data[0];
  auto w = dpix.params.var("head/detail/w");
  for (auto& e : w->value.data) e += 0.37f;
  float after = disc_loss(samples, dpix, dfeat)->value.data[0];
  for (auto& e : w->value.data) e -= 0.37f;
  CHECK(before == after);
}

TEST_CASE("critic loss falls when a head's logit moves toward its label", "[losses]") {
  Discriminator dpix = micro_pixel_critic(0x31);
  Student micro = micro_student();
  Discriminator dfeat = micro_feature_critic(0x32, micro);
  auto payload = constant(rand_batch({2, 3, 16, 16}, 0x42));

  // Head bias shifts its logit one-for-one, so the sign of its gradient is
  // -y * sigmoid(-y * logit): negative for y=+1, positive for y=-1.
  auto bias_grad = [&](int yd, int yc, const char* name) {
    dpix.params.zero_grads();
    std::vector<LabeledSample> s{LabeledSample{payload, DiscDomain::pixel, yd, yc, SourceTag::video}};
    backward(disc_loss(s, dpix, dfeat));
    auto b = dpix.params.var(name);
    REQUIRE_FALSE(b->grad.data.empty());
    return b->grad.data[0];
  };
  CHECK(bias_grad(+1, +1, "head/detail/b") < 0.0f);
  CHECK(bias_grad(+1, +1, "head/consistency/b") < 0.0f);
  CHECK(bias_grad(-1, -1, "head/detail/b") > 0.0f);
  CHECK(bias_grad(-1, -1, "head/consistency/b") > 0.0f);
}

TEST_CASE("critic loss mean and literal-sum reductions agree up to the batch size", "[losses]") {
  Discriminator dpix = micro_pixel_critic(0x31);
  Student micro = micro_student();
  Discriminator dfeat = micro_feature_critic(0x32, micro);
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 3; ++i)
    samples.push_back(LabeledSample{constant(rand_batch({2, 3, 16, 16}, 0x50 + uint64_t(i))),
                                    DiscDomain::pixel, i % 2 ? 1 : -1, 1, SourceTag::video});
  float mean_v = disc_loss(samples, dpix, dfeat, true)->value.data[0];
  float sum_v = disc_loss(samples, dpix, dfeat, false)->value.data[0];
  CHECK(double(sum_v) == Approx(3.0 * double(mean_v)).margin(1e-5));
  CHECK(mean_v > 0.0f);
}

TEST_CASE("critic loss validates labels and payloads", "[losses]") {
  Discriminator dpix = micro_pixel_critic(0x31);
  Student micro = micro_student();
  Discriminator dfeat = micro_feature_critic(0x32, micro);
  auto ok = constant(rand_batch({2, 3, 16, 16}, 1));
  CHECK_THROWS_AS(
      disc_loss({LabeledSample{ok, DiscDomain::pixel, 2, 0, SourceTag::video}}, dpix, dfeat),
      UsageError);
  CHECK_THROWS_AS(
      disc_loss({LabeledSample{ok, DiscDomain::pixel, 0, -3, SourceTag::video}}, dpix, dfeat),
      UsageError);
  CHECK_THROWS_AS(
      disc_loss({LabeledSample{VarT<float>{}, DiscDomain::pixel, 0, 0, SourceTag::video}}, dpix, dfeat),
      UsageError);
}

TEST_CASE("critic loss gradients match central finite differences", "[losses][slow]") {
  Discriminator dpix = micro_pixel_critic(0x31);
  Student micro = micro_student();
  Discriminator dfeat = micro_feature_critic(0x32, micro);
  auto dp = cast_discriminator<double>(dpix);
  auto df = cast_discriminator<double>(dfeat);

  auto pix_payload = leaf(rand_batch_d({2, 3, 8, 8}, 0x51), true);
  auto feat_payload = leaf(rand_batch_d({2, 8, 8, 8}, 0x52), true);
  std::vector<LabeledSampleT<double>> samples{
      LabeledSampleT<double>{pix_payload, DiscDomain::pixel, -1, -1, SourceTag::student},
      LabeledSampleT<double>{feat_payload, DiscDomain::feature, 1, 1, SourceTag::image_static},
  };
  auto eval = [&] { return double(disc_loss(samples, dp, df)->value.data[0]); };
  dp.params.zero_grads();
  df.params.zero_grads();
  backward(disc_loss(samples, dp, df));

  FdTally tally;
  Rng pick(0x77);
  auto probe_param = [&](DiscriminatorT<double>& d, const char* name, int count) {
    auto v = d.params.var(name);
    for (int i = 0; i < count; ++i)
      tally.probe(eval, v, int64_t(pick.uniform(0, 1) * double(v->value.numel() - 1)));
  };
  probe_param(dp, "adapter/w", 8);
  probe_param(dp, "tail/t1/w", 8);
  probe_param(dp, "tail/c2/w", 8);
  probe_param(dp, "head/detail/w", 4);
  probe_param(dp, "head/consistency/b", 1);
  probe_param(df, "adapter/w", 8);
  probe_param(df, "tail/c0/w", 8);
  probe_param(df, "head/detail/w", 4);
  for (int i = 0; i < 16; ++i)
    tally.probe(eval, pix_payload, int64_t(pick.uniform(0, 1) * double(pix_payload->value.numel() - 1)));
  for (int i = 0; i < 16; ++i)
    tally.probe(eval, feat_payload, int64_t(pick.uniform(0, 1) * double(feat_payload->value.numel() - 1)));

  INFO("worst relative error " << tally.worst);
  CHECK(tally.total == 81);
  CHECK(tally.pass_fraction() >= 0.99);

  // Frozen backbones take no gradient in either domain.
  for (const auto& name : dp.params.order)
    if (!dp.params.at(name).trainable) {
      const auto& g = dp.params.var(name)->grad;
      CHECK(std::all_of(g.data.begin(), g.data.end(), [](double v) { return v == 0.0; }));
    }
}

// ---------------------------------------------------------------------------
// label-set curation
// ---------------------------------------------------------------------------

namespace {

struct LabelWorld {
  Student student;
  TeacherEncoder enc;
  Clip video;
  TensorF still;
  std::vector<TensorF> stills;
  VarT<float> x_student;
  VarT<float> f_student;

  LabelWorld()
      : student(micro_student()), enc(build_teacher_encoder(0x61, int(student.widths[3]))) {
    SynthOptions opt;
    opt.frames = 4;
    opt.height = 16;
    opt.width = 16;
    video = synth_clip(0x62, opt);
    still = sample_detail_frame(0x63, 16, 16);
    for (int i = 0; i < 4; ++i) stills.push_back(sample_detail_frame(0x64 + uint64_t(i), 16, 16));
    x_student = leaf(rand_batch({4, 3, 16, 16}, 0x65), true);
    f_student = leaf(rand_batch({4, 8, 8, 8}, 0x66), true);
  }

  std::vector<LabeledSample> build(uint64_t seed = 0x67) const {
    return build_label_set(x_student, f_student, video, still, stills, enc, student, seed);
  }
};

}  // namespace

TEST_CASE("label set enumerates exactly ten samples with the fixed label table", "[losses]") {
  LabelWorld w;
  auto set = w.build();
  REQUIRE(set.size() == 10);

  struct Row {
    SourceTag tag;
    int yd, yc;
  };
  const Row rows[5] = {{SourceTag::student, -1, -1},
                       {SourceTag::video, 0, +1},
                       {SourceTag::video_shuffled, 0, -1},
                       {SourceTag::image_static, +1, +1},
                       {SourceTag::image_assembled, +1, -1}};
  for (int i = 0; i < 5; ++i) {
    const auto& pix = set[size_t(2 * i)];
    const auto& feat = set[size_t(2 * i + 1)];
    CHECK(pix.domain == DiscDomain::pixel);
    CHECK(feat.domain == DiscDomain::feature);
    for (const auto* s : {&pix, &feat}) {
      CHECK(s->source_tag == rows[i].tag);
      CHECK(s->y_d == rows[i].yd);
      CHECK(s->y_c == rows[i].yc);
    }
    CHECK(pix.payload->value.shape == w.x_student->value.shape);
    CHECK(feat.payload->value.shape == w.f_student->value.shape);
  }
}

TEST_CASE("label set passes the generator payloads through untouched", "[losses]") {
  LabelWorld w;
  auto set = w.build();
  CHECK(set[0].payload == w.x_student);  // same node: gradient flows in G steps
  CHECK(set[1].payload == w.f_student);
}

TEST_CASE("label-set curated payloads carry the expected pixels", "[losses]") {
  LabelWorld w;
  auto set = w.build();

  CHECK(bit_equal(set[2].payload->value, to_signed(w.video.data)));

  // Shuffled clip: same frames as the video as a multiset, different order.
  const TensorF& vid = set[2].payload->value;
  const TensorF& shuf = set[4].payload->value;
  REQUIRE(shuf.shape == vid.shape);
  CHECK_FALSE(bit_equal(shuf, vid));
  const int64_t fsz = vid.numel() / vid.dim(0);
  int matched = 0;
  for (int64_t t = 0; t < vid.dim(0); ++t)
    for (int64_t u = 0; u < vid.dim(0); ++u) {
      bool eq = true;
      for (int64_t k = 0; k < fsz && eq; ++k) eq = vid.data[size_t(t * fsz + k)] == shuf.data[size_t(u * fsz + k)];
      if (eq) {
        matched++;
        break;
      }
    }
  CHECK(matched == 4);

  // Static clip: every frame equals the signed still image.
  const TensorF& stat = set[6].payload->value;
  TensorF sgn_still = to_signed(w.still);
  for (int64_t t = 0; t < 4; ++t)
    for (int64_t k = 0; k < fsz; ++k)
      REQUIRE(stat.data[size_t(t * fsz + k)] == sgn_still.data[size_t(k)]);

  // Assembled clip: frame t is the t-th unrelated still.
  const TensorF& coll = set[8].payload->value;
  for (int64_t t = 0; t < 4; ++t) {
    TensorF sgn = to_signed(w.stills[size_t(t)]);
    for (int64_t k = 0; k < fsz; ++k) REQUIRE(coll.data[size_t(t * fsz + k)] == sgn.data[size_t(k)]);
  }
}

TEST_CASE("label-set feature payloads come from the re-encoding path and are detached", "[losses]") {
  LabelWorld w;
  auto set = w.build();
  for (size_t i : {3u, 5u, 7u, 9u}) {
    CHECK_FALSE(set[i].payload->needs_grad);
    CHECK(set[i].payload->parents.empty());
  }
  auto expect = reencode_features(to_signed(w.video.data), w.enc, w.student, 4);
  CHECK(bit_equal(set[3].payload->value, expect->value));
  // Unrelated stills re-encode differently from coherent video.
  CHECK_FALSE(bit_equal(set[9].payload->value, set[3].payload->value));
}

TEST_CASE("label set is deterministic in the seed and static clips are shuffle-proof", "[losses]") {
  LabelWorld w;
  auto a = w.build(0x67);
  auto b = w.build(0x67);
  for (size_t i = 0; i < 10; ++i) CHECK(bit_equal(a[i].payload->value, b[i].payload->value));

  Clip frozen = repeat_image(w.still, 4);
  Clip reshuffled = shuffle_frames(frozen, 0x99);
  CHECK(bit_equal(reshuffled.data, frozen.data));
}

TEST_CASE("label set rejects missing or mismatched ingredients", "[losses]") {
  LabelWorld w;
  CHECK_THROWS_AS(build_label_set(VarT<float>{}, w.f_student, w.video, w.still, w.stills, w.enc,
                                  w.student, 1),
                  UsageError);
  CHECK_THROWS_AS(build_label_set(w.x_student, w.f_student, Clip{}, w.still, w.stills, w.enc,
                                  w.student, 1),
                  UsageError);
  CHECK_THROWS_AS(build_label_set(w.x_student, w.f_student, w.video, TensorF{}, w.stills, w.enc,
                                  w.student, 1),
                  UsageError);
  std::vector<TensorF> three(w.stills.begin(), w.stills.begin() + 3);
  CHECK_THROWS_AS(build_label_set(w.x_student, w.f_student, w.video, w.still, three, w.enc, w.student, 1),
                  UsageError);

  SynthOptions small;
  small.frames = 4;
  small.height = 8;
  small.width = 8;
  Clip tiny = synth_clip(0x70, small);
  CHECK_THROWS_AS(build_label_set(w.x_student, w.f_student, tiny, w.still, w.stills, w.enc, w.student, 1),
                  DimensionError);
}

TEST_CASE("label set feeds the critic loss end to end", "[losses]") {
  LabelWorld w;
  auto set = w.build();
  Discriminator dpix = micro_pixel_critic(0x31);
  Discriminator dfeat = micro_feature_critic(0x32, w.student);
  auto loss = disc_loss(set, dpix, dfeat);
  CHECK(std::isfinite(loss->value.data[0]));
  CHECK(loss->value.data[0] > 0.0f);
}
