// Generator construction and forward passes. Parameter names define the
// checkpoint layout: body/..., decoder/... for the 2D trunk and temporal/...
// for the frame-mixing blocks, so the breakdown and freeze logic can work on
// name prefixes alone.
#include "vsr/student.hpp"

#include <cmath>
#include <string>

#include "vsr/errors.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"

namespace vsr {

int64_t prune_width(int64_t base, double fraction) {
  if (base < 1) throw ConfigError("prune_width: base width must be positive");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("prune_width: fraction must be in [0,1)");
  return std::max<int64_t>(4, std::llround(double(base) * (1.0 - fraction)));
}

int resolve_groups(int requested, int64_t channels) {
  int g = int(std::min<int64_t>(requested, channels));
  if (g < 1) g = 1;
  while (channels % g != 0) --g;
  return g;
}

namespace {

TensorF fanin_uniform(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  double bound = std::sqrt(6.0 / double(fan_in));
  TensorF t(std::move(shape));
  for (auto& v : t.data) v = float(rng.uniform(-bound, bound));
  return t;
}

void add_conv2d(ParamStoreT<float>& ps, Rng& rng, const std::string& prefix, int64_t cout, int64_t cin, int64_t k) {
  ps.add(prefix + "/w", fanin_uniform(rng, {cout, cin, k, k}, cin * k * k), true);
  ps.add(prefix + "/b", TensorF({cout}), true);
}

void add_gn(ParamStoreT<float>& ps, const std::string& prefix, int64_t c) {
  ps.add(prefix + "/g", TensorF::full({c}, 1.0f), true);
  ps.add(prefix + "/b", TensorF({c}), true);
}

void add_resblock(ParamStoreT<float>& ps, Rng& rng, const std::string& prefix, int64_t c) {
  add_conv2d(ps, rng, prefix + "/c1", c, c, 3);
  add_gn(ps, prefix + "/gn1", c);
  add_conv2d(ps, rng, prefix + "/c2", c, c, 3);
  add_gn(ps, prefix + "/gn2", c);
}

int temporal_blocks_per_site(TemporalMode m) {
  switch (m) {
    case TemporalMode::none: return 0;
    case TemporalMode::conv_rb: return 1;
    case TemporalMode::conv_rb_doubled: return 2;
    case TemporalMode::temporal_attention: return 1;
  }
  return 0;
}

void add_temporal_site(ParamStoreT<float>& ps, Rng& rng, TemporalMode mode, const std::string& site, int64_t c) {
  for (int q = 0; q < temporal_blocks_per_site(mode); ++q) {
    std::string prefix = "temporal/" + site + "/p" + std::to_string(q);
    if (mode == TemporalMode::temporal_attention) {
      ps.add(prefix + "/q/w", fanin_uniform(rng, {c, c}, c), true);
      ps.add(prefix + "/k/w", fanin_uniform(rng, {c, c}, c), true);
      ps.add(prefix + "/v/w", fanin_uniform(rng, {c, c}, c), true);
      ps.add(prefix + "/o/w", TensorF({c, c}), true);  // zero: identity at init
    } else {
      ps.add(prefix + "/c1/w", fanin_uniform(rng, {c, c, 3}, c * 3), true);
      ps.add(prefix + "/c1/b", TensorF({c}), true);
      ps.add(prefix + "/c2/w", TensorF({c, c, 3}), true);  // zero: identity at init
      ps.add(prefix + "/c2/b", TensorF({c}), true);
    }
  }
}

// forward helpers ------------------------------------------------------------

using V = VarT<float>;

// Resolves parameter names to graph nodes; with detach set, current weight
// values are wrapped as constants so the result never routes gradient back.
template <class T>
struct ParamGetterT {
  const ParamStoreT<T>& ps;
  bool detach = false;
  VarT<T> operator()(const std::string& name) const {
    return detach ? constant(ps.at(name).var->value) : ps.var(name);
  }
  bool has(const std::string& name) const { return ps.has(name); }
};

using ParamGetter = ParamGetterT<float>;

template <class T>
VarT<T> run_conv(const ParamGetterT<T>& g, const std::string& prefix, const VarT<T>& x, int stride, int pad) {
  return conv2d(x, g(prefix + "/w"), g(prefix + "/b"), stride, pad);
}

template <class T>
VarT<T> run_gn(const ParamGetterT<T>& g, const std::string& prefix, const VarT<T>& x, int groups) {
  int64_t c = x->value.dim(1);
  return group_norm(x, g(prefix + "/g"), g(prefix + "/b"), resolve_groups(groups, c), 1e-5);
}

template <class T>
VarT<T> run_resblock(const ParamGetterT<T>& g, const std::string& prefix, const VarT<T>& x, int groups) {
  VarT<T> h = relu(run_gn(g, prefix + "/gn1", run_conv(g, prefix + "/c1", x, 1, 1), groups));
  h = run_gn(g, prefix + "/gn2", run_conv(g, prefix + "/c2", h, 1, 1), groups);
  return relu(add(x, h));
}

// One body stage: optional width-adapting transition, then two residual
// blocks. `sp` is the stage prefix, e.g. "body/s1".
template <class T>
VarT<T> run_body_stage(const ParamGetterT<T>& g, const std::string& sp, const VarT<T>& x, int groups) {
  VarT<T> h = x;
  if (g.has(sp + "/trans/w"))
    h = relu(run_gn(g, sp + "/trans/gn", run_conv(g, sp + "/trans", h, 1, 0), groups));
  h = run_resblock(g, sp + "/r0", h, groups);
  return run_resblock(g, sp + "/r1", h, groups);
}

V run_temporal_site(const ParamGetter& g, TemporalMode mode, const std::string& site, const V& x, int frames) {
  V h = x;
  for (int q = 0; q < temporal_blocks_per_site(mode); ++q) {
    std::string prefix = "temporal/" + site + "/p" + std::to_string(q);
    if (mode == TemporalMode::temporal_attention) {
      h = temporal_attention(h, g(prefix + "/q/w"), g(prefix + "/k/w"), g(prefix + "/v/w"),
                             g(prefix + "/o/w"), frames);
    } else {
      V t = relu(conv1d_time(h, g(prefix + "/c1/w"), g(prefix + "/c1/b"), frames));
      t = conv1d_time(t, g(prefix + "/c2/w"), g(prefix + "/c2/b"), frames);
      h = add(h, t);
    }
  }
  return h;
}

V forward_impl(Student& s, const V& x, int frames, bool temporal, VarT<float>* tap_out) {
  if (x->value.rank() != 4 || x->value.dim(1) != 3)
    throw DimensionError("student_forward: expected [B,3,h,w] input, got " + shape_str(x->value.shape));
  if (frames < 1 || x->value.dim(0) % frames != 0)
    throw DimensionError("student_forward: batch " + std::to_string(x->value.dim(0)) +
                         " not divisible into clips of " + std::to_string(frames) + " frames");
  const int groups = s.cfg.norm_groups;
  const TemporalMode mode = s.cfg.temporal_mode;
  ParamGetter g{s.params, false};

  V h = run_conv(g, "body/stem", x, 1, 1);
  for (int i = 0; i < 3; ++i) {
    h = run_body_stage(g, "body/s" + std::to_string(i), h, groups);
    if (temporal) h = run_temporal_site(g, mode, "body_s" + std::to_string(i), h, frames);
  }

  h = upsample_nearest2(h);
  h = relu(run_gn(g, "decoder/up0/gn", run_conv(g, "decoder/up0/conv", h, 1, 1), groups));
  h = run_resblock(g, "decoder/up0/r0", h, groups);
  if (temporal) h = run_temporal_site(g, mode, "dec_up0", h, frames);

  h = run_resblock(g, "decoder/mid/r0", h, groups);
  h = run_resblock(g, "decoder/mid/r1", h, groups);
  if (temporal) h = run_temporal_site(g, mode, "dec_mid", h, frames);
  if (tap_out) *tap_out = h;  // alignment point

  h = upsample_nearest2(h);
  h = relu(run_gn(g, "decoder/up1/gn", run_conv(g, "decoder/up1/conv", h, 1, 1), groups));
  h = run_resblock(g, "decoder/up1/r0", h, groups);
  if (temporal) h = run_temporal_site(g, mode, "dec_up1", h, frames);

  return run_conv(g, "decoder/head", h, 1, 1);
}

}  // namespace

Student build_student(const StudentConfig& cfg) {
  if (cfg.scale_factor != 4) throw ConfigError("build_student: only scale_factor 4 is supported");
  if (cfg.base_widths.size() != 5) throw ConfigError("build_student: base_widths must have 5 entries");
  for (int64_t w : cfg.base_widths)
    if (w < 4) throw ConfigError("build_student: base widths must be >= 4");
  if (cfg.norm_groups < 1) throw ConfigError("build_student: norm_groups must be >= 1");

  Student s;
  s.cfg = cfg;
  int64_t w0 = prune_width(cfg.base_widths[0], cfg.prune_body);
  int64_t w1 = prune_width(cfg.base_widths[1], cfg.prune_body);
  int64_t w2 = prune_width(cfg.base_widths[2], cfg.prune_body);
  int64_t d0 = prune_width(cfg.base_widths[3], cfg.prune_decoder);
  int64_t d1 = prune_width(cfg.base_widths[4], cfg.prune_decoder);
  s.widths = {w0, w1, w2, d0, d1};

  Rng rng(Rng::mix(cfg.init_seed, 0x7374756421ull));
  auto& ps = s.params;

  add_conv2d(ps, rng, "body/stem", w0, 3, 3);
  int64_t prev = w0;
  const int64_t body_w[3] = {w0, w1, w2};
  for (int i = 0; i < 3; ++i) {
    std::string sp = "body/s" + std::to_string(i);
    if (body_w[i] != prev) {
      add_conv2d(ps, rng, sp + "/trans", body_w[i], prev, 1);
      add_gn(ps, sp + "/trans/gn", body_w[i]);
    }
    add_resblock(ps, rng, sp + "/r0", body_w[i]);
    add_resblock(ps, rng, sp + "/r1", body_w[i]);
    add_temporal_site(ps, rng, cfg.temporal_mode, "body_s" + std::to_string(i), body_w[i]);
    prev = body_w[i];
  }

  add_conv2d(ps, rng, "decoder/up0/conv", d0, w2, 3);
  add_gn(ps, "decoder/up0/gn", d0);
  add_resblock(ps, rng, "decoder/up0/r0", d0);
  add_temporal_site(ps, rng, cfg.temporal_mode, "dec_up0", d0);

  add_resblock(ps, rng, "decoder/mid/r0", d0);
  add_resblock(ps, rng, "decoder/mid/r1", d0);
  add_temporal_site(ps, rng, cfg.temporal_mode, "dec_mid", d0);

  add_conv2d(ps, rng, "decoder/up1/conv", d1, d0, 3);
  add_gn(ps, "decoder/up1/gn", d1);
  add_resblock(ps, rng, "decoder/up1/r0", d1);
  add_temporal_site(ps, rng, cfg.temporal_mode, "dec_up1", d1);

  add_conv2d(ps, rng, "decoder/head", 3, d1, 3);
  return s;
}

VarT<float> student_forward(Student& s, const VarT<float>& x, int frames, VarT<float>* tap_out) {
  return forward_impl(s, x, frames, /*temporal=*/true, tap_out);
}

VarT<float> student_forward_2d(Student& s, const VarT<float>& x, VarT<float>* tap_out) {
  return forward_impl(s, x, /*frames=*/1, /*temporal=*/false, tap_out);
}

template <class T>
VarT<T> body_stages_forward_2d(const ParamStoreT<T>& store, const std::string& prefix, const VarT<T>& h,
                               int norm_groups) {
  ParamGetterT<T> g{store, false};
  VarT<T> out = h;
  for (int i = 0; i < 3; ++i) out = run_body_stage(g, prefix + "/s" + std::to_string(i), out, norm_groups);
  return out;
}

template VarT<float> body_stages_forward_2d<float>(const ParamStoreT<float>&, const std::string&,
                                                   const VarT<float>&, int);
template VarT<double> body_stages_forward_2d<double>(const ParamStoreT<double>&, const std::string&,
                                                     const VarT<double>&, int);

VarT<float> student_mid_forward(const Student& s, const VarT<float>& h, int frames, bool detach_weights) {
  if (h->value.rank() != 4 || h->value.dim(1) != s.widths[3])
    throw DimensionError("student_mid_forward: expected [B," + std::to_string(s.widths[3]) +
                         ",h,w] features, got " + shape_str(h->value.shape));
  if (frames < 1 || h->value.dim(0) % frames != 0)
    throw DimensionError("student_mid_forward: batch " + std::to_string(h->value.dim(0)) +
                         " not divisible into clips of " + std::to_string(frames) + " frames");
  ParamGetter g{s.params, detach_weights};
  V out = run_resblock(g, "decoder/mid/r0", h, s.cfg.norm_groups);
  out = run_resblock(g, "decoder/mid/r1", out, s.cfg.norm_groups);
  return run_temporal_site(g, s.cfg.temporal_mode, "dec_mid", out, frames);
}

ParamBreakdown count_params(const Student& s) {
  ParamBreakdown b;
  b.body_2d = s.params.count("body/");
  b.decoder_2d = s.params.count("decoder/");
  b.temporal = s.params.count("temporal/");
  b.total = s.params.count();
  b.temporal_ratio = b.total > 0 ? double(b.temporal) / double(b.total) : 0.0;
  return b;
}

}  // namespace vsr
