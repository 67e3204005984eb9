// Two-stage training: stage 1 distills the teacher without adversarial
// pressure; stage 2 alternates a generator step against fixed critics with a
// critic step on the curated label set. Every per-iteration random draw is a
// pure function of (seed, iteration), so resuming from a checkpoint replays
// the exact byte-for-byte trajectory of an uninterrupted run.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vsr/discriminator.hpp"
#include "vsr/losses.hpp"
#include "vsr/params.hpp"
#include "vsr/student.hpp"
#include "vsr/teacher.hpp"
#include "vsr/video.hpp"

namespace vsr {

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  TensorF m;  // first moment
  TensorF v;  // second moment
};

// One bias-corrected Adam update of a single tensor; `t` is the 1-based step
// count. Moments are lazily sized to the parameter on first use.
void adam_step(TensorF& param, const TensorF& grad, AdamState& state, int64_t t, double lr,
               const AdamConfig& cfg = {});

// Applies adam_step to every named parameter of a store, sharing one step
// counter. A parameter whose gradient buffer is empty is treated as having a
// zero gradient.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStoreT<float>& params, const std::vector<std::string>& names, double lr);

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  bool has_slot(const std::string& name) const { return slots_.count(name) != 0; }
  AdamState& slot(const std::string& name) { return slots_[name]; }
  const std::unordered_map<std::string, AdamState>& slots() const { return slots_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::unordered_map<std::string, AdamState> slots_;
};

// Scales the gradients of all trainable parameters across the given stores so
// their joint L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(const std::vector<ParamStoreT<float>*>& stores, double max_norm);

// Learning rate with the one-time halving at iteration ceil(iterations/2).
double schedule_lr(double base, int64_t iteration, int64_t iterations);

// ---------------------------------------------------------------------------
// data
// ---------------------------------------------------------------------------

// Procedural training corpus: a fixed pool of HR clips with deterministic
// degraded LR counterparts. Pair i depends only on (seed, i).
struct DataConfig {
  int64_t num_clips = 8;
  int64_t hr_size = 64;
  int scale = 4;
  uint64_t seed = 0xda7a5eed;
  DegradeOptions degrade;                  // scale is taken from `scale` above
  std::optional<MotionKind> force_motion;  // unset: motion drawn per clip
};

struct ClipPair {
  Clip hr;
  Clip lr;
};

// Seed streams for pool entry `index`; exported so datasets written to disk
// and LR sides re-derived from loaded HR clips match the in-memory pool
// bit for bit.
uint64_t pool_clip_seed(uint64_t data_seed, int64_t index);
uint64_t pool_degrade_seed(uint64_t data_seed, int64_t index);

ClipPair make_clip_pair(const DataConfig& cfg, int64_t frames, int64_t index, Flow* flow_out = nullptr);
std::vector<ClipPair> build_clip_pool(const DataConfig& cfg, int64_t frames);

// Clip indices drawn for one iteration's batch; pure in (seed, iteration).
std::vector<int64_t> batch_indices(uint64_t seed, int64_t iteration, int64_t batch_clips,
                                   int64_t num_clips);

// Concatenates the selected pool clips along the frame axis -> [B*T,3,H,W],
// unit range. `use_hr` picks the HR side, otherwise the degraded LR side.
TensorF concat_clips(const std::vector<ClipPair>& pool, const std::vector<int64_t>& indices, bool use_hr);

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

// Stage-2 curation ablations. `no_shuffled` drops the order-broken samples
// (shuffled videos and assembled stills) so the critics train on six samples;
// `video_detail_real` marks real-video details as detail-head positives
// instead of leaving them unlabeled.
enum class LabelVariant { standard, no_shuffled, video_detail_real };

// Applies a curation ablation to a freshly built label set; `standard` is the
// identity.
void apply_label_variant(std::vector<LabeledSample>& samples, LabelVariant v);

struct StageConfig {
  int stage = 1;
  int64_t iterations = 500;
  double lr_generator = 1e-4;       // stage-2 default 1e-5
  double lr_discriminator = 1e-4;   // desk default; 1e-7 mirrors the reference schedule
  int64_t batch_clips = 4;
  int64_t frames_per_clip = 5;
  uint64_t seed = 0x5eed;
  bool grad_clip = true;            // global-norm clip at 1.0 for both players
  bool disc_sum_reduction = false;  // literal sum over samples instead of the mean
  LabelVariant label_variant = LabelVariant::standard;
  bool dual_domain = true;          // false: pixel critic only, feature critic untouched
  LossWeights weights;
  std::string checkpoint_path;      // empty: no periodic writes
  int64_t checkpoint_every = 0;     // 0: no periodic writes
};

StageConfig default_stage1_config();
StageConfig default_stage2_config();

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

struct CheckpointArray {
  std::vector<int64_t> shape;
  std::string dtype;  // "f32" or "i64"
  std::vector<float> f32;
  std::vector<int64_t> i64;
  bool trainable = false;
  std::string frozen_group;

  int64_t numel() const;
};

struct Checkpoint {
  std::vector<std::string> order;
  std::unordered_map<std::string, CheckpointArray> arrays;

  void put_f32(const std::string& name, const TensorF& t, bool trainable = false,
               const std::string& frozen_group = "");
  void put_i64(const std::string& name, std::vector<int64_t> values);
  bool has(const std::string& name) const { return arrays.count(name) != 0; }
  const CheckpointArray& at(const std::string& name) const;
  int64_t scalar_i64(const std::string& name) const;  // 1-element i64 helper
};

// On-disk layout: magic "AVSRCKP1", u32 little-endian header length, UTF-8
// JSON header mapping name -> {shape, dtype, byte_offset, trainable,
// frozen_group}, then the concatenated little-endian raw arrays.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint arrays under `prefix` back into a parameter store.
// Missing names or shape mismatches raise FormatError; nothing is written
// until every lookup has succeeded.
void restore_store(const Checkpoint& ckpt, const std::string& prefix, ParamStoreT<float>& store);

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

// One row per iteration; stage 1 leaves the critic fields at zero.
struct IterationLog {
  int64_t iteration = 0;
  double total = 0;
  double l1_pixel = 0;
  double dists_pixel = 0;
  double adv_pixel = 0;
  double l1_feature = 0;
  double adv_feature = 0;
  double disc_total = 0;
  double lr_g = 0;
  double lr_d = 0;
  double grad_norm_g = 0;
  double grad_norm_d = 0;
};

using TrainTrace = std::vector<IterationLog>;

// Stage 1: pure distillation (the adversarial weight is forced to zero).
// Mutates `student` in place and returns the final checkpoint. `resume`
// restores parameters, optimizer moments, and the iteration counter saved by
// a previous stage-1 run. `pool_override`, when given, replaces the
// synthesized corpus (e.g. with clips loaded from disk); pairs must match the
// data config's sizes and the stage's frames_per_clip.
Checkpoint run_stage1(const StageConfig& cfg, const DataConfig& data, const TeacherConfig& teacher,
                      const TeacherEncoder& enc, Student& student, TrainTrace* trace = nullptr,
                      const Checkpoint* resume = nullptr,
                      const std::vector<ClipPair>* pool_override = nullptr);

// Stage 2, per iteration in order: (i) generator step on the full objective
// with critics fixed, (ii) label-set curation with detached generator
// payloads, (iii) critic step on trainable groups only. The generator's
// adversarial score per domain is the sum of that critic's two head logits.
Checkpoint run_stage2(const StageConfig& cfg, const DataConfig& data, const TeacherConfig& teacher,
                      const TeacherEncoder& enc, Student& student, Discriminator& d_pixel,
                      Discriminator& d_feature, TrainTrace* trace = nullptr,
                      const Checkpoint* resume = nullptr,
                      const std::vector<ClipPair>* pool_override = nullptr);

}  // namespace vsr
