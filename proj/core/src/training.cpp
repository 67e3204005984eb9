// Optimizer, data plumbing, checkpoint format, and the two stage loops.
// Determinism contract: pool clip i depends only on (data seed, i); every
// per-iteration draw (batch picks, curation clips, shuffle seeds) depends
// only on (stage seed, iteration). Nothing consumes a long-lived RNG stream,
// so a resumed run replays the remainder of an uninterrupted run exactly.
#include "vsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vsr/errors.hpp"
#include "vsr/ops.hpp"
#include "vsr/rng.hpp"

namespace vsr {

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

void adam_step(TensorF& param, const TensorF& grad, AdamState& state, int64_t t, double lr,
               const AdamConfig& cfg) {
  if (grad.shape != param.shape)
    throw DimensionError("adam_step: gradient shape " + shape_str(grad.shape) +
                         " does not match parameter " + shape_str(param.shape));
  if (t < 1) throw UsageError("adam_step: step count must be >= 1");
  if (state.m.data.empty()) state.m = TensorF(param.shape);
  if (state.v.data.empty()) state.v = TensorF(param.shape);
  if (state.m.shape != param.shape || state.v.shape != param.shape)
    throw DimensionError("adam_step: moment shapes do not match the parameter");

  const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
  for (size_t i = 0; i < param.data.size(); ++i) {
    const double g = double(grad.data[i]);
    const double m = cfg.beta1 * double(state.m.data[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * double(state.v.data[i]) + (1.0 - cfg.beta2) * g * g;
    state.m.data[i] = float(m);
    state.v.data[i] = float(v);
    const double update = lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
    param.data[i] = float(double(param.data[i]) - update);
  }
}

void AdamOptimizer::step(ParamStoreT<float>& params, const std::vector<std::string>& names, double lr) {
  ++t_;
  for (const auto& name : names) {
    auto var = params.var(name);
    if (var->grad.data.empty()) var->ensure_grad();  // zero gradient
    adam_step(var->value, var->grad, slots_[name], t_, lr, cfg_);
  }
}

double clip_global_norm(const std::vector<ParamStoreT<float>*>& stores, double max_norm) {
  double sq = 0.0;
  for (auto* store : stores)
    for (const auto& name : store->order) {
      const auto& e = store->at(name);
      if (!e.trainable || e.var->grad.data.empty()) continue;
      for (float g : e.var->grad.data) sq += double(g) * double(g);
    }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (auto* store : stores)
      for (const auto& name : store->order) {
        const auto& e = store->at(name);
        if (!e.trainable || e.var->grad.data.empty()) continue;
        for (float& g : e.var->grad.data) g = float(double(g) * k);
      }
  }
  return norm;
}

double schedule_lr(double base, int64_t iteration, int64_t iterations) {
  return iteration >= (iterations + 1) / 2 ? 0.5 * base : base;
}

// ---------------------------------------------------------------------------
// data
// ---------------------------------------------------------------------------

namespace {

constexpr uint64_t kClipTag = 0x636c6970ull;   // pool clip stream
constexpr uint64_t kDegradeTag = 0x64656772ull;
constexpr uint64_t kBatchTag = 0x62617463ull;  // per-iteration batch picks
constexpr uint64_t kVideoTag = 0x766964ull;    // curation video pick
constexpr uint64_t kImageTag = 0x696d67ull;    // curation still frames
constexpr uint64_t kLabelTag = 0x6c6162ull;    // label-set shuffle seed

void validate_data(const DataConfig& data) {
  if (data.num_clips < 1) throw ConfigError("training data: num_clips must be >= 1");
  if (data.scale < 1) throw ConfigError("training data: scale must be >= 1");
  if (data.hr_size < data.scale || data.hr_size % data.scale != 0)
    throw ConfigError("training data: hr_size must be a positive multiple of scale");
}

}  // namespace

uint64_t pool_clip_seed(uint64_t data_seed, int64_t index) {
  return Rng::mix(Rng::mix(data_seed, kClipTag), uint64_t(index));
}

uint64_t pool_degrade_seed(uint64_t data_seed, int64_t index) {
  return Rng::mix(pool_clip_seed(data_seed, index), kDegradeTag);
}

ClipPair make_clip_pair(const DataConfig& cfg, int64_t frames, int64_t index, Flow* flow_out) {
  validate_data(cfg);
  if (frames < 1) throw ConfigError("make_clip_pair: frames must be >= 1");
  SynthOptions opt;
  opt.frames = frames;
  opt.height = cfg.hr_size;
  opt.width = cfg.hr_size;
  opt.force_motion = cfg.force_motion;
  ClipPair pair;
  pair.hr = synth_clip(pool_clip_seed(cfg.seed, index), opt, flow_out);
  DegradeOptions dopt = cfg.degrade;
  dopt.scale = cfg.scale;
  pair.lr = degrade(pair.hr, pool_degrade_seed(cfg.seed, index), dopt);
  return pair;
}

std::vector<ClipPair> build_clip_pool(const DataConfig& cfg, int64_t frames) {
  std::vector<ClipPair> pool;
  pool.reserve(size_t(cfg.num_clips));
  for (int64_t i = 0; i < cfg.num_clips; ++i) pool.push_back(make_clip_pair(cfg, frames, i));
  return pool;
}

std::vector<int64_t> batch_indices(uint64_t seed, int64_t iteration, int64_t batch_clips,
                                   int64_t num_clips) {
  if (batch_clips < 1 || num_clips < 1)
    throw ConfigError("batch_indices: batch_clips and num_clips must be >= 1");
  Rng rng(Rng::mix(Rng::mix(seed, kBatchTag), uint64_t(iteration)));
  std::vector<int64_t> out(static_cast<size_t>(batch_clips));
  for (auto& v : out) v = rng.uniform_int(0, num_clips - 1);
  return out;
}

TensorF concat_clips(const std::vector<ClipPair>& pool, const std::vector<int64_t>& indices,
                     bool use_hr) {
  if (pool.empty() || indices.empty()) throw UsageError("concat_clips: nothing to assemble");
  auto clip_of = [&](int64_t i) -> const TensorF& {
    if (i < 0 || i >= int64_t(pool.size())) throw UsageError("concat_clips: clip index out of range");
    return use_hr ? pool[size_t(i)].hr.data : pool[size_t(i)].lr.data;
  };
  const TensorF& first = clip_of(indices[0]);
  TensorF out({int64_t(indices.size()) * first.dim(0), first.dim(1), first.dim(2), first.dim(3)});
  int64_t row = 0;
  for (int64_t i : indices) {
    const TensorF& c = clip_of(i);
    if (c.shape != first.shape) throw DimensionError("concat_clips: pool clips disagree in shape");
    std::copy(c.data.begin(), c.data.end(), out.data.begin() + row);
    row += c.numel();
  }
  return out;
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

void apply_label_variant(std::vector<LabeledSample>& samples, LabelVariant v) {
  if (v == LabelVariant::no_shuffled)
    std::erase_if(samples, [](const LabeledSample& s) {
      return s.source_tag == SourceTag::video_shuffled || s.source_tag == SourceTag::image_assembled;
    });
  else if (v == LabelVariant::video_detail_real)
    for (auto& s : samples)
      if (s.source_tag == SourceTag::video) s.y_d = 1;
}

StageConfig default_stage1_config() {
  StageConfig cfg;
  cfg.stage = 1;
  cfg.lr_generator = 1e-4;
  return cfg;
}

StageConfig default_stage2_config() {
  StageConfig cfg;
  cfg.stage = 2;
  cfg.lr_generator = 1e-5;
  cfg.iterations = 300;
  return cfg;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

int64_t CheckpointArray::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void Checkpoint::put_f32(const std::string& name, const TensorF& t, bool trainable,
                         const std::string& frozen_group) {
  if (arrays.count(name)) throw UsageError("checkpoint: duplicate array name " + name);
  CheckpointArray a;
  a.shape = t.shape;
  a.dtype = "f32";
  a.f32 = t.data;
  a.trainable = trainable;
  a.frozen_group = frozen_group;
  order.push_back(name);
  arrays.emplace(name, std::move(a));
}

void Checkpoint::put_i64(const std::string& name, std::vector<int64_t> values) {
  if (arrays.count(name)) throw UsageError("checkpoint: duplicate array name " + name);
  CheckpointArray a;
  a.shape = {int64_t(values.size())};
  a.dtype = "i64";
  a.i64 = std::move(values);
  order.push_back(name);
  arrays.emplace(name, std::move(a));
}

const CheckpointArray& Checkpoint::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw UsageError("checkpoint: unknown array " + name);
  return it->second;
}

int64_t Checkpoint::scalar_i64(const std::string& name) const {
  const auto& a = at(name);
  if (a.dtype != "i64" || a.i64.size() != 1)
    throw FormatError("checkpoint: " + name + " is not a scalar integer");
  return a.i64[0];
}

namespace {

constexpr char kCkptMagic[8] = {'A', 'V', 'S', 'R', 'C', 'K', 'P', '1'};

int64_t array_bytes(const CheckpointArray& a) {
  return a.dtype == "f32" ? int64_t(a.f32.size()) * 4 : int64_t(a.i64.size()) * 8;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json header = nlohmann::json::object();
  int64_t offset = 0;
  for (const auto& name : ckpt.order) {
    const auto& a = ckpt.at(name);
    header[name] = {{"shape", a.shape},
                    {"dtype", a.dtype},
                    {"byte_offset", offset},
                    {"trainable", a.trainable},
                    {"frozen_group", a.frozen_group}};
    offset += array_bytes(a);
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_checkpoint: cannot open " + path + " for writing");
  out.write(kCkptMagic, 8);
  const uint32_t len = uint32_t(hs.size());
  unsigned char lenb[4] = {(unsigned char)(len & 0xff), (unsigned char)((len >> 8) & 0xff),
                           (unsigned char)((len >> 16) & 0xff), (unsigned char)((len >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& name : ckpt.order) {
    const auto& a = ckpt.at(name);
    if (a.dtype == "f32")
      out.write(reinterpret_cast<const char*>(a.f32.data()), std::streamsize(a.f32.size() * 4));
    else
      out.write(reinterpret_cast<const char*>(a.i64.data()), std::streamsize(a.i64.size() * 8));
  }
  if (!out) throw IoError("save_checkpoint: write to " + path + " failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), kCkptMagic, 8) != 0)
    throw FormatError("load_checkpoint: " + path + " is not a checkpoint (bad magic)");
  const unsigned char* lb = reinterpret_cast<const unsigned char*>(buf.data() + 8);
  const uint64_t hlen = uint64_t(lb[0]) | uint64_t(lb[1]) << 8 | uint64_t(lb[2]) << 16 |
                        uint64_t(lb[3]) << 24;
  if (12 + hlen > buf.size()) throw FormatError("load_checkpoint: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(12, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("load_checkpoint: corrupt header in " + path + ": " + e.what());
  }
  if (!header.is_object()) throw FormatError("load_checkpoint: header is not an object in " + path);

  const char* data = buf.data() + 12 + hlen;
  const int64_t data_size = int64_t(buf.size()) - 12 - int64_t(hlen);

  Checkpoint ckpt;
  std::vector<std::pair<int64_t, std::string>> by_offset;
  try {
    for (const auto& [name, meta] : header.items()) {
      CheckpointArray a;
      a.shape = meta.at("shape").get<std::vector<int64_t>>();
      a.dtype = meta.at("dtype").get<std::string>();
      a.trainable = meta.at("trainable").get<bool>();
      a.frozen_group = meta.at("frozen_group").get<std::string>();
      const int64_t off = meta.at("byte_offset").get<int64_t>();
      if (a.dtype != "f32" && a.dtype != "i64")
        throw FormatError("load_checkpoint: unknown dtype '" + a.dtype + "' for " + name);
      const int64_t n = a.numel();
      const int64_t bytes = n * (a.dtype == "f32" ? 4 : 8);
      if (off < 0 || off + bytes > data_size)
        throw FormatError("load_checkpoint: truncated data for " + name + " in " + path);
      if (a.dtype == "f32") {
        a.f32.resize(size_t(n));
        std::memcpy(a.f32.data(), data + off, size_t(bytes));
      } else {
        a.i64.resize(size_t(n));
        std::memcpy(a.i64.data(), data + off, size_t(bytes));
      }
      by_offset.emplace_back(off, name);
      ckpt.arrays.emplace(name, std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("load_checkpoint: malformed header entry in " + path + ": " + e.what());
  }
  std::sort(by_offset.begin(), by_offset.end());
  for (auto& [off, name] : by_offset) ckpt.order.push_back(name);
  return ckpt;
}

void restore_store(const Checkpoint& ckpt, const std::string& prefix, ParamStoreT<float>& store) {
  std::vector<const CheckpointArray*> sources;
  sources.reserve(store.order.size());
  for (const auto& name : store.order) {
    const std::string full = prefix + name;
    if (!ckpt.has(full)) throw FormatError("restore_store: checkpoint is missing " + full);
    const auto& a = ckpt.at(full);
    if (a.dtype != "f32" || a.shape != store.at(name).var->value.shape)
      throw FormatError("restore_store: " + full + " does not match the target parameter");
    sources.push_back(&a);
  }
  for (size_t i = 0; i < store.order.size(); ++i)
    store.entries[store.order[i]].var->value.data = sources[i]->f32;
}

// ---------------------------------------------------------------------------
// trainer internals
// ---------------------------------------------------------------------------

namespace {

void validate_stage(const StageConfig& cfg, int expected, const DataConfig& data, const Student& s) {
  if (cfg.stage != expected)
    throw ConfigError("trainer: config is for stage " + std::to_string(cfg.stage) + ", expected stage " +
                      std::to_string(expected));
  if (cfg.iterations < 1) throw ConfigError("trainer: iterations must be >= 1");
  if (!(cfg.lr_generator > 0.0) || !(cfg.lr_discriminator > 0.0))
    throw ConfigError("trainer: learning rates must be > 0");
  if (cfg.batch_clips < 1 || cfg.frames_per_clip < 1)
    throw ConfigError("trainer: batch_clips and frames_per_clip must be >= 1");
  validate_data(data);
  if (data.scale != s.cfg.scale_factor)
    throw ConfigError("trainer: data scale " + std::to_string(data.scale) +
                      " does not match the generator upsampling factor " +
                      std::to_string(s.cfg.scale_factor));
}

// Either the synthesized corpus or a caller-provided one; an override must
// agree with the data config it will be recorded under.
const std::vector<ClipPair>& resolve_pool(const StageConfig& cfg, const DataConfig& data,
                                          const std::vector<ClipPair>* override_pool,
                                          std::vector<ClipPair>& storage) {
  if (!override_pool) {
    storage = build_clip_pool(data, cfg.frames_per_clip);
    return storage;
  }
  if (int64_t(override_pool->size()) != data.num_clips)
    throw ConfigError("trainer: provided pool has " + std::to_string(override_pool->size()) +
                      " clips but the data config says " + std::to_string(data.num_clips));
  for (size_t i = 0; i < override_pool->size(); ++i) {
    const ClipPair& p = (*override_pool)[i];
    if (p.hr.frames() != cfg.frames_per_clip || p.lr.frames() != cfg.frames_per_clip)
      throw ConfigError("trainer: pool clip " + std::to_string(i) + " has " +
                        std::to_string(p.hr.frames()) + " frames, expected " +
                        std::to_string(cfg.frames_per_clip));
    if (p.hr.height() != data.hr_size || p.hr.width() != data.hr_size)
      throw ConfigError("trainer: pool clip " + std::to_string(i) + " is " +
                        std::to_string(p.hr.height()) + "x" + std::to_string(p.hr.width()) +
                        ", expected " + std::to_string(data.hr_size) + "x" +
                        std::to_string(data.hr_size));
    if (p.lr.height() * data.scale != p.hr.height() || p.lr.width() * data.scale != p.hr.width())
      throw ConfigError("trainer: pool clip " + std::to_string(i) +
                        " LR/HR sizes do not match the configured scale");
  }
  return *override_pool;
}

void put_store(Checkpoint& c, const std::string& prefix, const ParamStoreT<float>& store) {
  for (const auto& name : store.order) {
    const auto& e = store.at(name);
    c.put_f32(prefix + name, e.var->value, e.trainable, e.frozen_group);
  }
}

void put_moments(Checkpoint& c, const std::string& prefix, const AdamOptimizer& opt,
                 const ParamStoreT<float>& store) {
  for (const auto& name : store.order) {
    if (!store.at(name).trainable) continue;
    auto it = opt.slots().find(name);
    if (it == opt.slots().end() || it->second.m.data.empty()) continue;
    c.put_f32(prefix + name + "/m", it->second.m);
    c.put_f32(prefix + name + "/v", it->second.v);
  }
}

void restore_moments(const Checkpoint& c, const std::string& prefix, AdamOptimizer& opt,
                     const ParamStoreT<float>& store) {
  for (const auto& name : store.order) {
    if (!store.at(name).trainable) continue;
    const std::string mn = prefix + name + "/m", vn = prefix + name + "/v";
    if (!c.has(mn)) continue;  // never stepped before the save
    const auto& ma = c.at(mn);
    const auto& va = c.at(vn);
    const auto& shape = store.at(name).var->value.shape;
    if (ma.dtype != "f32" || va.dtype != "f32" || ma.shape != shape || va.shape != shape)
      throw FormatError("checkpoint: optimizer moments for " + name + " do not match the parameter");
    AdamState& st = opt.slot(name);
    st.m = TensorF(shape);
    st.m.data = ma.f32;
    st.v = TensorF(shape);
    st.v.data = va.f32;
  }
}

void put_meta(Checkpoint& c, const StageConfig& cfg, const DataConfig& data, int64_t iterations_done,
              int64_t step_g, int64_t step_d) {
  c.put_i64("meta/stage", {cfg.stage});
  c.put_i64("meta/iteration", {iterations_done});
  c.put_i64("meta/step_g", {step_g});
  c.put_i64("meta/step_d", {step_d});
  c.put_i64("meta/seed", {int64_t(cfg.seed)});
  c.put_i64("meta/batch_clips", {cfg.batch_clips});
  c.put_i64("meta/frames_per_clip", {cfg.frames_per_clip});
  c.put_i64("meta/data_seed", {int64_t(data.seed)});
  c.put_i64("meta/num_clips", {data.num_clips});
  c.put_i64("meta/hr_size", {data.hr_size});
  c.put_i64("meta/scale", {data.scale});
  int64_t lg, ld;
  static_assert(sizeof(double) == sizeof(int64_t));
  std::memcpy(&lg, &cfg.lr_generator, 8);
  std::memcpy(&ld, &cfg.lr_discriminator, 8);
  c.put_i64("meta/lr_generator_bits", {lg});
  c.put_i64("meta/lr_discriminator_bits", {ld});
}

void check_resume_stage(const Checkpoint& ckpt, int expected) {
  const int64_t stage = ckpt.scalar_i64("meta/stage");
  if (stage != expected)
    throw UsageError("trainer: checkpoint is from stage " + std::to_string(stage) +
                     ", cannot resume stage " + std::to_string(expected));
}

void check_frozen(const char* what, uint64_t before, uint64_t after) {
  if (before != after)
    throw IntegrityError(std::string("trainer: frozen weights drifted: ") + what);
}

double require_finite(double v, const char* stage, int64_t it, const char* which) {
  if (!std::isfinite(v))
    throw NumericError(std::string(stage) + " iteration " + std::to_string(it) + ": non-finite " +
                       which + " (" + std::to_string(v) + ")");
  return v;
}

struct BatchTensors {
  TensorF lr_signed;   // [B*T,3,h,w]
  TensorF teacher;     // [B*T,3,H,W] signed supervision clip
};

BatchTensors assemble_batch(const StageConfig& cfg, const DataConfig& data,
                            const std::vector<ClipPair>& pool, const TeacherConfig& teacher,
                            int64_t it) {
  auto idx = batch_indices(cfg.seed, it, cfg.batch_clips, data.num_clips);
  BatchTensors b;
  b.lr_signed = to_signed(concat_clips(pool, idx, false));
  b.teacher = teacher_forward(teacher, to_signed(concat_clips(pool, idx, true)), b.lr_signed);
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// stage 1
// ---------------------------------------------------------------------------

Checkpoint run_stage1(const StageConfig& cfg, const DataConfig& data, const TeacherConfig& teacher,
                      const TeacherEncoder& enc, Student& student, TrainTrace* trace,
                      const Checkpoint* resume, const std::vector<ClipPair>* pool_override) {
  validate_stage(cfg, 1, data, student);
  LossWeights w = cfg.weights;
  w.lambda_adv = 0.0;  // stage 1 is pure distillation

  DistsNet net = build_dists(cfg.seed);
  std::vector<ClipPair> pool_storage;
  const std::vector<ClipPair>& pool = resolve_pool(cfg, data, pool_override, pool_storage);
  const auto g_names = student.params.trainable_names();
  AdamOptimizer opt_g;

  int64_t start = 0;
  if (resume) {
    check_resume_stage(*resume, 1);
    restore_store(*resume, "student/", student.params);
    restore_moments(*resume, "opt_g/", opt_g, student.params);
    opt_g.set_step_count(resume->scalar_i64("meta/step_g"));
    start = resume->scalar_i64("meta/iteration");
  }

  const uint64_t enc_hash = hash_params(enc.params);
  const uint64_t dists_hash = hash_params(net.params);
  const int frames = int(cfg.frames_per_clip);

  auto make_ckpt = [&](int64_t done) {
    Checkpoint c;
    put_store(c, "student/", student.params);
    put_store(c, "encoder/", enc.params);
    put_moments(c, "opt_g/", opt_g, student.params);
    put_meta(c, cfg, data, done, opt_g.step_count(), 0);
    return c;
  };

  for (int64_t it = start; it < cfg.iterations; ++it) {
    BatchTensors batch = assemble_batch(cfg, data, pool, teacher, it);

    VarT<float> tap;
    VarT<float> x_s = student_forward(student, constant(batch.lr_signed), frames, &tap);
    VarT<float> f_t = reencode_features(batch.teacher, enc, student, frames);
    auto terms = gen_loss(x_s, constant(batch.teacher), tap, f_t, constant(TensorF({1})),
                          constant(TensorF({1})), w, net);
    const double total = require_finite(double(terms.total->value.data[0]), "stage 1", it, "loss");

    student.params.zero_grads();
    backward(terms.total);
    const double gnorm = cfg.grad_clip ? clip_global_norm({&student.params}, 1.0) : 0.0;
    const double lr = schedule_lr(cfg.lr_generator, it, cfg.iterations);
    opt_g.step(student.params, g_names, lr);

    if (trace)
      trace->push_back(IterationLog{it, total, terms.l1_pixel, terms.dists_pixel, 0.0,
                                    terms.l1_feature, 0.0, 0.0, lr, 0.0, gnorm, 0.0});
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (it + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(make_ckpt(it + 1), cfg.checkpoint_path);
  }

  check_frozen("teacher encoder", enc_hash, hash_params(enc.params));
  check_frozen("perceptual pyramid", dists_hash, hash_params(net.params));

  Checkpoint out = make_ckpt(std::max(start, cfg.iterations));
  if (!cfg.checkpoint_path.empty()) save_checkpoint(out, cfg.checkpoint_path);
  return out;
}

// ---------------------------------------------------------------------------
// stage 2
// ---------------------------------------------------------------------------

Checkpoint run_stage2(const StageConfig& cfg, const DataConfig& data, const TeacherConfig& teacher,
                      const TeacherEncoder& enc, Student& student, Discriminator& d_pixel,
                      Discriminator& d_feature, TrainTrace* trace, const Checkpoint* resume,
                      const std::vector<ClipPair>* pool_override) {
  validate_stage(cfg, 2, data, student);
  if (d_pixel.cfg.domain != DiscDomain::pixel || d_feature.cfg.domain != DiscDomain::feature)
    throw UsageError("run_stage2: critics passed in the wrong domain order");
  if (d_feature.in_channels != student.widths[3])
    throw ConfigError("run_stage2: the feature critic reads " + std::to_string(d_feature.in_channels) +
                      " channels but the generator tap is " + std::to_string(student.widths[3]) +
                      " wide");

  DistsNet net = build_dists(cfg.seed);
  std::vector<ClipPair> pool_storage;
  const std::vector<ClipPair>& pool = resolve_pool(cfg, data, pool_override, pool_storage);
  const auto g_names = student.params.trainable_names();
  const auto dp_names = d_pixel.params.trainable_names();
  const auto df_names = d_feature.params.trainable_names();
  AdamOptimizer opt_g, opt_dp, opt_df;

  int64_t start = 0;
  if (resume) {
    check_resume_stage(*resume, 2);
    restore_store(*resume, "student/", student.params);
    restore_store(*resume, "disc_pixel/", d_pixel.params);
    restore_store(*resume, "disc_feature/", d_feature.params);
    restore_moments(*resume, "opt_g/", opt_g, student.params);
    restore_moments(*resume, "opt_dp/", opt_dp, d_pixel.params);
    restore_moments(*resume, "opt_df/", opt_df, d_feature.params);
    opt_g.set_step_count(resume->scalar_i64("meta/step_g"));
    opt_dp.set_step_count(resume->scalar_i64("meta/step_d"));
    opt_df.set_step_count(resume->scalar_i64("meta/step_d"));
    start = resume->scalar_i64("meta/iteration");
  }

  const uint64_t enc_hash = hash_params(enc.params);
  const uint64_t dists_hash = hash_params(net.params);
  const uint64_t dp_backbone_hash = hash_params(d_pixel.params, "backbone/");
  const uint64_t df_backbone_hash = hash_params(d_feature.params, "backbone/");

  const int frames = int(cfg.frames_per_clip);
  const int64_t T = cfg.frames_per_clip;
  const int64_t B = cfg.batch_clips;

  auto make_ckpt = [&](int64_t done) {
    Checkpoint c;
    put_store(c, "student/", student.params);
    put_store(c, "disc_pixel/", d_pixel.params);
    put_store(c, "disc_feature/", d_feature.params);
    put_store(c, "encoder/", enc.params);
    put_moments(c, "opt_g/", opt_g, student.params);
    put_moments(c, "opt_dp/", opt_dp, d_pixel.params);
    put_moments(c, "opt_df/", opt_df, d_feature.params);
    put_meta(c, cfg, data, done, opt_g.step_count(), opt_dp.step_count());
    return c;
  };

  for (int64_t it = start; it < cfg.iterations; ++it) {
    // (i) generator step against fixed critics
    BatchTensors batch = assemble_batch(cfg, data, pool, teacher, it);
    VarT<float> tap;
    VarT<float> x_s = student_forward(student, constant(batch.lr_signed), frames, &tap);
    VarT<float> f_t = reencode_features(batch.teacher, enc, student, frames);
    VarT<float> x_t = constant(batch.teacher);

    VarT<float> acc;
    IterationLog row;
    row.iteration = it;
    for (int64_t j = 0; j < B; ++j) {
      auto xs_j = slice_batch(x_s, j * T, (j + 1) * T);
      auto xt_j = slice_batch(x_t, j * T, (j + 1) * T);
      auto fs_j = slice_batch(tap, j * T, (j + 1) * T);
      auto ft_j = slice_batch(f_t, j * T, (j + 1) * T);
      auto po = disc_forward(d_pixel, xs_j);
      // Single-domain runs score the feature stream with a constant zero, the
      // same value an absent head would produce.
      VarT<float> feat_logit = constant(TensorF({1}));
      if (cfg.dual_domain) {
        auto fo = disc_forward(d_feature, fs_j);
        feat_logit = add(fo.detail_logit, fo.consistency_logit);
      }
      auto terms = gen_loss(xs_j, xt_j, fs_j, ft_j, add(po.detail_logit, po.consistency_logit),
                            feat_logit, cfg.weights, net);
      acc = acc ? add(acc, terms.total) : terms.total;
      row.l1_pixel += terms.l1_pixel / double(B);
      row.dists_pixel += terms.dists_pixel / double(B);
      row.adv_pixel += terms.adv_pixel / double(B);
      row.l1_feature += terms.l1_feature / double(B);
      row.adv_feature += terms.adv_feature / double(B);
    }
    VarT<float> g_total = scale(acc, 1.0 / double(B));
    row.total = require_finite(double(g_total->value.data[0]), "stage 2", it, "generator loss");

    student.params.zero_grads();
    d_pixel.params.zero_grads();
    d_feature.params.zero_grads();
    backward(g_total);
    row.grad_norm_g = cfg.grad_clip ? clip_global_norm({&student.params}, 1.0) : 0.0;
    row.lr_g = schedule_lr(cfg.lr_generator, it, cfg.iterations);
    opt_g.step(student.params, g_names, row.lr_g);

    // (ii) label set from the first batch clip, all payloads detached
    TensorF xs0 = tensor_slice_batch(x_s->value, 0, T);
    TensorF fs0 = tensor_slice_batch(tap->value, 0, T);
    Rng vid_rng(Rng::mix(Rng::mix(cfg.seed, kVideoTag), uint64_t(it)));
    const Clip& video = pool[size_t(vid_rng.uniform_int(0, data.num_clips - 1))].hr;
    const uint64_t img_seed = Rng::mix(Rng::mix(cfg.seed, kImageTag), uint64_t(it));
    TensorF still = sample_detail_frame(Rng::mix(img_seed, 0), data.hr_size, data.hr_size);
    std::vector<TensorF> stills;
    for (int64_t t = 0; t < T; ++t)
      stills.push_back(sample_detail_frame(Rng::mix(img_seed, uint64_t(t) + 1), data.hr_size,
                                           data.hr_size));
    auto labels = build_label_set(constant(xs0), constant(fs0), video, still, stills, enc, student,
                                  Rng::mix(Rng::mix(cfg.seed, kLabelTag), uint64_t(it)));
    apply_label_variant(labels, cfg.label_variant);
    if (!cfg.dual_domain)
      std::erase_if(labels, [](const LabeledSample& s) { return s.domain == DiscDomain::feature; });

    // (iii) critic step on trainable groups only
    student.params.zero_grads();
    d_pixel.params.zero_grads();
    d_feature.params.zero_grads();
    auto d_total = disc_loss(labels, d_pixel, d_feature, !cfg.disc_sum_reduction);
    row.disc_total = require_finite(double(d_total->value.data[0]), "stage 2", it, "critic loss");
    backward(d_total);
    row.grad_norm_d =
        cfg.grad_clip ? clip_global_norm({&d_pixel.params, &d_feature.params}, 1.0) : 0.0;
    row.lr_d = schedule_lr(cfg.lr_discriminator, it, cfg.iterations);
    opt_dp.step(d_pixel.params, dp_names, row.lr_d);
    if (cfg.dual_domain) opt_df.step(d_feature.params, df_names, row.lr_d);

    if (trace) trace->push_back(row);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        (it + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(make_ckpt(it + 1), cfg.checkpoint_path);
  }

  check_frozen("teacher encoder", enc_hash, hash_params(enc.params));
  check_frozen("perceptual pyramid", dists_hash, hash_params(net.params));
  check_frozen("pixel-critic backbone", dp_backbone_hash, hash_params(d_pixel.params, "backbone/"));
  check_frozen("feature-critic backbone", df_backbone_hash, hash_params(d_feature.params, "backbone/"));

  Checkpoint out = make_ckpt(std::max(start, cfg.iterations));
  if (!cfg.checkpoint_path.empty()) save_checkpoint(out, cfg.checkpoint_path);
  return out;
}

}  // namespace vsr
