#include "vsr/discriminator.hpp"

#include <cmath>
#include <string>

#include "vsr/errors.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"

namespace vsr {

namespace {

constexpr double kSlope = 0.2;

TensorF fanin_uniform(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  double bound = std::sqrt(6.0 / double(fan_in));
  TensorF t(std::move(shape));
  for (auto& v : t.data) v = float(rng.uniform(-bound, bound));
  return t;
}

void add_conv(ParamStoreT<float>& ps, Rng& rng, const std::string& prefix, int64_t cout, int64_t cin,
              int64_t kh, int64_t kw, bool trainable, const std::string& group = "") {
  ps.add(prefix + "/w", fanin_uniform(rng, {cout, cin, kh, kw}, cin * kh * kw), trainable, group);
  ps.add(prefix + "/b", TensorF({cout}), trainable, group);
}

template <class T>
VarT<T> run_conv(const DiscriminatorT<T>& d, const std::string& prefix, const VarT<T>& x, int stride,
                 int pad) {
  return conv2d(x, d.params.var(prefix + "/w"), d.params.var(prefix + "/b"), stride, pad);
}

}  // namespace

DiscriminatorConfig default_disc_config(DiscDomain domain) {
  DiscriminatorConfig cfg;
  cfg.domain = domain;
  cfg.backbone = domain == DiscDomain::pixel ? DiscBackbone::frozen_random_pyramid
                                             : DiscBackbone::frozen_stage1_student_body;
  return cfg;
}

Discriminator build_discriminator(const DiscriminatorConfig& cfg, uint64_t seed, const Student* stage1_student) {
  if (cfg.detail_channels < 0 || cfg.consistency_channels < 0)
    throw ConfigError("build_discriminator: head widths must be >= 0");
  if (cfg.detail_channels + cfg.consistency_channels != cfg.tail_channels)
    throw ConfigError("build_discriminator: head split " + std::to_string(cfg.detail_channels) + "+" +
                      std::to_string(cfg.consistency_channels) + " must sum to the tail width " +
                      std::to_string(cfg.tail_channels));
  if (cfg.tail_channels < 1 || cfg.tail_hidden < 1)
    throw ConfigError("build_discriminator: tail widths must be positive");
  bool pairing_ok =
      (cfg.domain == DiscDomain::pixel && cfg.backbone == DiscBackbone::frozen_random_pyramid) ||
      (cfg.domain == DiscDomain::feature && cfg.backbone == DiscBackbone::frozen_stage1_student_body);
  if (!pairing_ok) throw ConfigError("build_discriminator: backbone kind does not match the domain");
  if (cfg.domain == DiscDomain::feature && stage1_student == nullptr)
    throw UsageError("build_discriminator: the feature domain needs the generator whose body is copied");

  Discriminator d;
  d.cfg = cfg;
  Rng rng(Rng::mix(seed, 0x64697363ull));

  if (cfg.domain == DiscDomain::pixel) {
    d.in_channels = 3;
    const int64_t widths[4] = {16, 24, 32, 48};
    add_conv(d.params, rng, "adapter", widths[0], 3, 3, 3, true);
    for (int i = 0; i < 3; ++i)
      add_conv(d.params, rng, "backbone/p" + std::to_string(i), widths[i + 1], widths[i], 3, 3, false,
               "disc_backbone");
    d.backbone_out = widths[3];
  } else {
    d.in_channels = stage1_student->widths[3];
    d.norm_groups = stage1_student->cfg.norm_groups;
    add_conv(d.params, rng, "adapter", stage1_student->widths[0], d.in_channels, 3, 3, true);
    for (const auto& name : stage1_student->params.order)
      if (name.rfind("body/s", 0) == 0 && name.size() > 6 && name[6] >= '0' && name[6] <= '9')
        d.params.add("backbone/" + name, stage1_student->params.at(name).var->value, false, "disc_backbone");
    d.backbone_out = stage1_student->widths[2];
  }

  add_conv(d.params, rng, "tail/c0", cfg.tail_hidden, d.backbone_out, 3, 3, true);
  d.params.add("tail/t1/w", fanin_uniform(rng, {cfg.tail_hidden, cfg.tail_hidden, 3}, cfg.tail_hidden * 3),
               true);
  d.params.add("tail/t1/b", TensorF({cfg.tail_hidden}), true);
  add_conv(d.params, rng, "tail/c2", cfg.tail_channels, cfg.tail_hidden, 3, 3, true);

  if (cfg.detail_channels > 0) add_conv(d.params, rng, "head/detail", 1, cfg.detail_channels, 1, 1, true);
  if (cfg.consistency_channels > 0)
    add_conv(d.params, rng, "head/consistency", 1, cfg.consistency_channels, 1, 1, true);
  return d;
}

template <class T>
HeadOutputsT<T> disc_forward(const DiscriminatorT<T>& d, const VarT<T>& sample) {
  if (sample->value.rank() != 4)
    throw UsageError("disc_forward: expected a [T,C,H,W] sample, got " + shape_str(sample->value.shape));
  if (sample->value.dim(1) != d.in_channels)
    throw UsageError("disc_forward: sample has " + std::to_string(sample->value.dim(1)) +
                     " channels but this critic's domain expects " + std::to_string(d.in_channels));
  const int frames = int(sample->value.dim(0));

  VarT<T> h;
  if (d.cfg.domain == DiscDomain::pixel) {
    h = leaky_relu(run_conv(d, "adapter", sample, 1, 1), kSlope);
    for (int i = 0; i < 3; ++i) h = leaky_relu(run_conv(d, "backbone/p" + std::to_string(i), h, 2, 1), kSlope);
  } else {
    // The adapter stands in for the copied body's stem, so like the stem it
    // feeds the stages without an activation of its own.
    h = run_conv(d, "adapter", sample, 2, 1);
    h = body_stages_forward_2d(d.params, "backbone/body", h, d.norm_groups);
    h = avgpool2(h);
  }

  h = leaky_relu(run_conv(d, "tail/c0", h, 1, 1), kSlope);
  h = leaky_relu(conv1d_time(h, d.params.var("tail/t1/w"), d.params.var("tail/t1/b"), frames), kSlope);
  h = leaky_relu(run_conv(d, "tail/c2", h, 1, 1), kSlope);

  HeadOutputsT<T> out;
  auto zero_head = [&](VarT<T>& map, VarT<T>& logit) {
    map = constant(TensorT<T>({frames, 1, h->value.dim(2), h->value.dim(3)}));
    logit = constant(TensorT<T>({1}));
  };
  if (d.cfg.detail_channels > 0) {
    out.detail_map = run_conv(d, "head/detail", slice_channels(h, 0, d.cfg.detail_channels), 1, 0);
    out.detail_logit = mean_all(out.detail_map);
  } else {
    zero_head(out.detail_map, out.detail_logit);
  }
  if (d.cfg.consistency_channels > 0) {
    out.consistency_map =
        run_conv(d, "head/consistency", slice_channels(h, d.cfg.detail_channels, d.cfg.tail_channels), 1, 0);
    out.consistency_logit = mean_all(out.consistency_map);
  } else {
    zero_head(out.consistency_map, out.consistency_logit);
  }
  return out;
}

template HeadOutputsT<float> disc_forward<float>(const DiscriminatorT<float>&, const VarT<float>&);
template HeadOutputsT<double> disc_forward<double>(const DiscriminatorT<double>&, const VarT<double>&);

}  // namespace vsr
