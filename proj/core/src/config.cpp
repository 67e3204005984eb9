// Experiment configuration: defaults, seed derivation, ablation presets,
// strict JSON (de)serialization, and the artifact-embedded echo.
#include "vsr/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <initializer_list>

#include "vsr/errors.hpp"
#include "vsr/rng.hpp"

namespace vsr {

using nlohmann::json;

// ---------------------------------------------------------------------------
// enum spellings
// ---------------------------------------------------------------------------

const char* to_string(TemporalMode m) {
  switch (m) {
    case TemporalMode::none: return "none";
    case TemporalMode::conv_rb: return "conv_rb";
    case TemporalMode::conv_rb_doubled: return "conv_rb_doubled";
    case TemporalMode::temporal_attention: return "temporal_attention";
  }
  throw UsageError("to_string: unhandled temporal mode");
}

const char* to_string(TeacherKind k) {
  switch (k) {
    case TeacherKind::gt_oracle: return "gt_oracle";
    case TeacherKind::gt_smoothed: return "gt_smoothed";
  }
  throw UsageError("to_string: unhandled teacher kind");
}

const char* to_string(LabelVariant v) {
  switch (v) {
    case LabelVariant::standard: return "standard";
    case LabelVariant::no_shuffled: return "no_shuffled";
    case LabelVariant::video_detail_real: return "video_detail_real";
  }
  throw UsageError("to_string: unhandled label variant");
}

TemporalMode temporal_mode_from_string(const std::string& s) {
  if (s == "none") return TemporalMode::none;
  if (s == "conv_rb") return TemporalMode::conv_rb;
  if (s == "conv_rb_doubled") return TemporalMode::conv_rb_doubled;
  if (s == "temporal_attention") return TemporalMode::temporal_attention;
  throw ConfigError("config: unknown temporal mode '" + s +
                    "' (expected none, conv_rb, conv_rb_doubled, or temporal_attention)");
}

TeacherKind teacher_kind_from_string(const std::string& s) {
  if (s == "gt_oracle") return TeacherKind::gt_oracle;
  if (s == "gt_smoothed") return TeacherKind::gt_smoothed;
  throw ConfigError("config: unknown teacher kind '" + s + "' (expected gt_oracle or gt_smoothed)");
}

LabelVariant label_variant_from_string(const std::string& s) {
  if (s == "standard") return LabelVariant::standard;
  if (s == "no_shuffled") return LabelVariant::no_shuffled;
  if (s == "video_detail_real") return LabelVariant::video_detail_real;
  throw ConfigError("config: unknown label variant '" + s +
                    "' (expected standard, no_shuffled, or video_detail_real)");
}

// ---------------------------------------------------------------------------
// defaults and seed derivation
// ---------------------------------------------------------------------------

namespace {

constexpr uint64_t kStudentSeedTag = 0x73747564;      // generator init stream
constexpr uint64_t kEncoderSeedTag = 0x74656e63;      // teacher encoder weights
constexpr uint64_t kDiscPixelSeedTag = 0x64706978;    // pixel-critic init
constexpr uint64_t kDiscFeatureSeedTag = 0x64666561;  // feature-critic init
constexpr uint64_t kDataSeedTag = 0x64617461;         // corpus synthesis
constexpr uint64_t kStage1SeedTag = 0x73746731;       // stage-1 iteration draws
constexpr uint64_t kStage2SeedTag = 0x73746732;       // stage-2 iteration draws

}  // namespace

void reseed(ExperimentConfig& cfg, uint64_t master_seed) {
  cfg.seed = master_seed;
  cfg.student.init_seed = Rng::mix(master_seed, kStudentSeedTag);
  cfg.seed_encoder = Rng::mix(master_seed, kEncoderSeedTag);
  cfg.seed_disc_pixel = Rng::mix(master_seed, kDiscPixelSeedTag);
  cfg.seed_disc_feature = Rng::mix(master_seed, kDiscFeatureSeedTag);
  cfg.data.seed = Rng::mix(master_seed, kDataSeedTag);
  cfg.stage1.seed = Rng::mix(master_seed, kStage1SeedTag);
  cfg.stage2.seed = Rng::mix(master_seed, kStage2SeedTag);
}

void normalize_config(ExperimentConfig& cfg) {
  cfg.teacher.scale_factor = cfg.student.scale_factor;
  cfg.disc_pixel.domain = DiscDomain::pixel;
  cfg.disc_pixel.backbone = DiscBackbone::frozen_random_pyramid;
  cfg.disc_feature.domain = DiscDomain::feature;
  cfg.disc_feature.backbone = DiscBackbone::frozen_stage1_student_body;
  cfg.stage1.stage = 1;
  cfg.stage2.stage = 2;
  cfg.stage1.weights = cfg.weights;
  cfg.stage2.weights = cfg.weights;
  cfg.data.degrade.scale = cfg.data.scale;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.disc_pixel = default_disc_config(DiscDomain::pixel);
  cfg.disc_feature = default_disc_config(DiscDomain::feature);
  cfg.stage1 = default_stage1_config();
  cfg.stage2 = default_stage2_config();
  reseed(cfg, cfg.seed);
  normalize_config(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

namespace {

void fail(const std::string& path, const std::string& why) {
  throw ConfigError("config: " + path + " " + why);
}

void validate_disc(const DiscriminatorConfig& d, const std::string& path) {
  if (d.tail_channels < 1) fail(path + ".tail_channels", "must be >= 1");
  if (d.detail_channels < 0 || d.consistency_channels < 0)
    fail(path, "head widths must be >= 0");
  if (d.detail_channels + d.consistency_channels != d.tail_channels)
    fail(path, "head widths must sum to tail_channels (got " + std::to_string(d.detail_channels) +
                   "+" + std::to_string(d.consistency_channels) + " != " +
                   std::to_string(d.tail_channels) + ")");
  if (d.tail_hidden < 1) fail(path + ".tail_hidden", "must be >= 1");
}

void validate_stage_cfg(const StageConfig& s, const std::string& path) {
  if (s.iterations < 1) fail(path + ".iterations", "must be >= 1");
  if (!(s.lr_generator > 0.0)) fail(path + ".lr_generator", "must be > 0");
  if (!(s.lr_discriminator > 0.0)) fail(path + ".lr_discriminator", "must be > 0");
  if (s.batch_clips < 1) fail(path + ".batch_clips", "must be >= 1");
  if (s.frames_per_clip < 1) fail(path + ".frames_per_clip", "must be >= 1");
  if (s.checkpoint_every < 0) fail(path + ".checkpoint_every", "must be >= 0");
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.student.scale_factor != 4) fail("student.scale_factor", "must be 4");
  if (cfg.student.base_widths.size() != 5)
    fail("student.base_widths", "must list 5 widths (three body stages, two decoder stages)");
  for (int64_t w : cfg.student.base_widths)
    if (w < 1) fail("student.base_widths", "entries must be >= 1");
  if (!(cfg.student.prune_body >= 0.0 && cfg.student.prune_body < 1.0))
    fail("student.prune_body", "must lie in [0, 1)");
  if (!(cfg.student.prune_decoder >= 0.0 && cfg.student.prune_decoder < 1.0))
    fail("student.prune_decoder", "must lie in [0, 1)");
  if (cfg.student.norm_groups < 1) fail("student.norm_groups", "must be >= 1");

  if (cfg.teacher.sigma < 0.0) fail("teacher.sigma", "must be >= 0");
  if (cfg.teacher.kind == TeacherKind::gt_smoothed && !(cfg.teacher.sigma > 0.0))
    fail("teacher.sigma", "must be > 0 for the gt_smoothed kind");

  validate_disc(cfg.disc_pixel, "disc_pixel");
  validate_disc(cfg.disc_feature, "disc_feature");

  if (cfg.weights.lambda_pixel < 0.0 || cfg.weights.lambda_feature < 0.0 ||
      cfg.weights.lambda_adv < 0.0)
    fail("weights", "loss weights must be >= 0");

  if (cfg.data.num_clips < 1) fail("data.num_clips", "must be >= 1");
  if (cfg.data.scale < 1) fail("data.scale", "must be >= 1");
  if (cfg.data.hr_size < cfg.data.scale || cfg.data.hr_size % cfg.data.scale != 0)
    fail("data.hr_size", "must be a positive multiple of data.scale");
  if (cfg.data.scale != cfg.student.scale_factor)
    fail("data.scale", "must equal student.scale_factor (the generator upsamples by that factor)");
  const DegradeOptions& dg = cfg.data.degrade;
  if (dg.blur_sigma_lo < 0.0 || dg.blur_sigma_hi < dg.blur_sigma_lo)
    fail("data.degrade.blur_sigma", "range must satisfy 0 <= lo <= hi");
  if (dg.noise_sigma_lo < 0.0 || dg.noise_sigma_hi < dg.noise_sigma_lo)
    fail("data.degrade.noise_sigma", "range must satisfy 0 <= lo <= hi");
  if (dg.levels_lo < 2 || dg.levels_hi < dg.levels_lo)
    fail("data.degrade.levels", "range must satisfy 2 <= lo <= hi");

  validate_stage_cfg(cfg.stage1, "stage1");
  validate_stage_cfg(cfg.stage2, "stage2");
}

// ---------------------------------------------------------------------------
// ablation presets
// ---------------------------------------------------------------------------

namespace {

void set_head_split(ExperimentConfig& cfg, int64_t detail, int64_t consistency) {
  for (DiscriminatorConfig* d : {&cfg.disc_pixel, &cfg.disc_feature}) {
    d->tail_channels = detail + consistency;
    d->detail_channels = detail;
    d->consistency_channels = consistency;
  }
}

}  // namespace

std::vector<std::string> profile_names() {
  return {"tab2_2d",          "tab2_2d1d",
          "tab3_single_head", "tab3_single_domain",
          "tab5_temporal_attention",
          "tab6_split_100_0", "tab6_split_75_25",
          "tab6_split_50_50", "tab6_split_25_75",
          "tab6_split_0_100",
          "tab7_no_shuffled", "tab7_video_detail_real",
          "tab8_no_adv",      "tab8_gt_teacher",
          "paper_faithful"};
}

void apply_profile(ExperimentConfig& cfg, const std::string& name) {
  if (name == "tab2_2d") {
    cfg.student.temporal_mode = TemporalMode::none;
  } else if (name == "tab2_2d1d") {
    cfg.student.temporal_mode = TemporalMode::conv_rb;
  } else if (name == "tab3_single_head") {
    set_head_split(cfg, 256, 0);  // consistency head absent on both critics
  } else if (name == "tab3_single_domain") {
    cfg.stage2.dual_domain = false;  // pixel critic only
  } else if (name == "tab5_temporal_attention") {
    cfg.student.temporal_mode = TemporalMode::temporal_attention;
  } else if (name == "tab6_split_100_0") {
    set_head_split(cfg, 256, 0);
  } else if (name == "tab6_split_75_25") {
    set_head_split(cfg, 192, 64);
  } else if (name == "tab6_split_50_50") {
    set_head_split(cfg, 128, 128);
  } else if (name == "tab6_split_25_75") {
    set_head_split(cfg, 64, 192);
  } else if (name == "tab6_split_0_100") {
    set_head_split(cfg, 0, 256);
  } else if (name == "tab7_no_shuffled") {
    cfg.stage2.label_variant = LabelVariant::no_shuffled;
  } else if (name == "tab7_video_detail_real") {
    cfg.stage2.label_variant = LabelVariant::video_detail_real;
  } else if (name == "tab8_no_adv") {
    cfg.weights.lambda_adv = 0.0;
  } else if (name == "tab8_gt_teacher") {
    cfg.teacher.kind = TeacherKind::gt_oracle;  // supervision is the clean reference
    cfg.teacher.sigma = 0.0;
  } else if (name == "paper_faithful") {
    cfg.stage1.grad_clip = false;  // reference recipe: no clipping,
    cfg.stage2.grad_clip = false;  // tiny critic steps, literal-sum critic loss
    cfg.stage2.lr_discriminator = 1e-7;
    cfg.stage2.disc_sum_reduction = true;
  } else {
    std::string all;
    for (const auto& p : profile_names()) all += (all.empty() ? "" : ", ") + p;
    throw ConfigError("config: unknown profile '" + name + "' (known: " + all + ")");
  }
  cfg.profile = name;
  normalize_config(cfg);
}

// ---------------------------------------------------------------------------
// strict JSON parsing
// ---------------------------------------------------------------------------

namespace {

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config: " + path + " must be a JSON object");
}

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("config: unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) +
                        "'");
  }
}

std::string key_path(const std::string& path, const char* key) {
  return path.empty() ? key : path + "." + key;
}

void get_num(const json& obj, const std::string& path, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("config: " + key_path(path, key) + " must be a number");
  out = v.get<double>();
}

template <class I>
void get_int(const json& obj, const std::string& path, const char* key, I& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError("config: " + key_path(path, key) + " must be an integer");
  out = I(v.get<int64_t>());
}

void get_u64(const json& obj, const std::string& path, const char* key, uint64_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw ConfigError("config: " + key_path(path, key) + " must be a non-negative integer");
  if (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0)
    throw ConfigError("config: " + key_path(path, key) + " must be a non-negative integer");
  out = v.get<uint64_t>();
}

void get_bool(const json& obj, const std::string& path, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("config: " + key_path(path, key) + " must be a boolean");
  out = v.get<bool>();
}

void get_str(const json& obj, const std::string& path, const char* key, std::string& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("config: " + key_path(path, key) + " must be a string");
  out = v.get<std::string>();
}

void parse_student(const json& j, StudentConfig& s) {
  expect_object(j, "student");
  reject_unknown(j, "student",
                 {"scale_factor", "base_widths", "prune_body", "prune_decoder", "temporal_mode",
                  "norm_groups", "init_seed"});
  get_int(j, "student", "scale_factor", s.scale_factor);
  if (j.contains("base_widths")) {
    const json& v = j.at("base_widths");
    if (!v.is_array()) throw ConfigError("config: student.base_widths must be an array of integers");
    std::vector<int64_t> widths;
    for (const auto& e : v) {
      if (!e.is_number_integer() && !e.is_number_unsigned())
        throw ConfigError("config: student.base_widths must be an array of integers");
      widths.push_back(e.get<int64_t>());
    }
    s.base_widths = std::move(widths);
  }
  get_num(j, "student", "prune_body", s.prune_body);
  get_num(j, "student", "prune_decoder", s.prune_decoder);
  if (j.contains("temporal_mode")) {
    std::string m;
    get_str(j, "student", "temporal_mode", m);
    s.temporal_mode = temporal_mode_from_string(m);
  }
  get_int(j, "student", "norm_groups", s.norm_groups);
  get_u64(j, "student", "init_seed", s.init_seed);
}

void parse_teacher(const json& j, ExperimentConfig& cfg) {
  expect_object(j, "teacher");
  reject_unknown(j, "teacher", {"kind", "sigma", "encoder_seed"});
  if (j.contains("kind")) {
    std::string k;
    get_str(j, "teacher", "kind", k);
    cfg.teacher.kind = teacher_kind_from_string(k);
  }
  get_num(j, "teacher", "sigma", cfg.teacher.sigma);
  get_u64(j, "teacher", "encoder_seed", cfg.seed_encoder);
}

void parse_disc(const json& j, const std::string& path, DiscriminatorConfig& d, uint64_t& seed) {
  expect_object(j, path);
  reject_unknown(j, path, {"tail_channels", "detail_channels", "consistency_channels", "tail_hidden", "seed"});
  get_int(j, path, "tail_channels", d.tail_channels);
  get_int(j, path, "detail_channels", d.detail_channels);
  get_int(j, path, "consistency_channels", d.consistency_channels);
  get_int(j, path, "tail_hidden", d.tail_hidden);
  get_u64(j, path, "seed", seed);
}

void parse_weights(const json& j, LossWeights& w) {
  expect_object(j, "weights");
  reject_unknown(j, "weights", {"lambda_pixel", "lambda_feature", "lambda_adv"});
  get_num(j, "weights", "lambda_pixel", w.lambda_pixel);
  get_num(j, "weights", "lambda_feature", w.lambda_feature);
  get_num(j, "weights", "lambda_adv", w.lambda_adv);
}

void parse_data(const json& j, DataConfig& d) {
  expect_object(j, "data");
  reject_unknown(j, "data", {"num_clips", "hr_size", "scale", "seed", "degrade"});
  get_int(j, "data", "num_clips", d.num_clips);
  get_int(j, "data", "hr_size", d.hr_size);
  get_int(j, "data", "scale", d.scale);
  get_u64(j, "data", "seed", d.seed);
  if (j.contains("degrade")) {
    const json& g = j.at("degrade");
    expect_object(g, "data.degrade");
    reject_unknown(g, "data.degrade",
                   {"blur_sigma_lo", "blur_sigma_hi", "noise_sigma_lo", "noise_sigma_hi",
                    "levels_lo", "levels_hi"});
    get_num(g, "data.degrade", "blur_sigma_lo", d.degrade.blur_sigma_lo);
    get_num(g, "data.degrade", "blur_sigma_hi", d.degrade.blur_sigma_hi);
    get_num(g, "data.degrade", "noise_sigma_lo", d.degrade.noise_sigma_lo);
    get_num(g, "data.degrade", "noise_sigma_hi", d.degrade.noise_sigma_hi);
    get_int(g, "data.degrade", "levels_lo", d.degrade.levels_lo);
    get_int(g, "data.degrade", "levels_hi", d.degrade.levels_hi);
  }
}

void parse_stage1(const json& j, StageConfig& s) {
  expect_object(j, "stage1");
  reject_unknown(j, "stage1",
                 {"iterations", "lr_generator", "batch_clips", "frames_per_clip", "seed",
                  "grad_clip", "checkpoint_every"});
  get_int(j, "stage1", "iterations", s.iterations);
  get_num(j, "stage1", "lr_generator", s.lr_generator);
  get_int(j, "stage1", "batch_clips", s.batch_clips);
  get_int(j, "stage1", "frames_per_clip", s.frames_per_clip);
  get_u64(j, "stage1", "seed", s.seed);
  get_bool(j, "stage1", "grad_clip", s.grad_clip);
  get_int(j, "stage1", "checkpoint_every", s.checkpoint_every);
}

void parse_stage2(const json& j, StageConfig& s) {
  expect_object(j, "stage2");
  reject_unknown(j, "stage2",
                 {"iterations", "lr_generator", "lr_discriminator", "batch_clips",
                  "frames_per_clip", "seed", "grad_clip", "disc_sum_reduction", "label_variant",
                  "dual_domain", "checkpoint_every"});
  get_int(j, "stage2", "iterations", s.iterations);
  get_num(j, "stage2", "lr_generator", s.lr_generator);
  get_num(j, "stage2", "lr_discriminator", s.lr_discriminator);
  get_int(j, "stage2", "batch_clips", s.batch_clips);
  get_int(j, "stage2", "frames_per_clip", s.frames_per_clip);
  get_u64(j, "stage2", "seed", s.seed);
  get_bool(j, "stage2", "grad_clip", s.grad_clip);
  get_bool(j, "stage2", "disc_sum_reduction", s.disc_sum_reduction);
  if (j.contains("label_variant")) {
    std::string v;
    get_str(j, "stage2", "label_variant", v);
    s.label_variant = label_variant_from_string(v);
  }
  get_bool(j, "stage2", "dual_domain", s.dual_domain);
  get_int(j, "stage2", "checkpoint_every", s.checkpoint_every);
}

void parse_paths(const json& j, ExperimentConfig& cfg) {
  expect_object(j, "paths");
  reject_unknown(j, "paths", {"data_dir", "out_dir", "stage1_checkpoint"});
  get_str(j, "paths", "data_dir", cfg.data_dir);
  get_str(j, "paths", "out_dir", cfg.out_dir);
  get_str(j, "paths", "stage1_checkpoint", cfg.stage1_checkpoint);
}

}  // namespace

ExperimentConfig config_from_json(const json& j, std::optional<uint64_t> seed_override) {
  expect_object(j, "top level");
  reject_unknown(j, "",
                 {"profile", "seed", "student", "teacher", "disc_pixel", "disc_feature", "weights",
                  "data", "stage1", "stage2", "paths"});

  ExperimentConfig cfg = default_experiment_config();

  uint64_t master = cfg.seed;
  get_u64(j, "", "seed", master);
  if (seed_override) master = *seed_override;
  reseed(cfg, master);

  if (j.contains("profile")) {
    std::string name;
    get_str(j, "", "profile", name);
    if (!name.empty()) apply_profile(cfg, name);
  }

  if (j.contains("student")) parse_student(j.at("student"), cfg.student);
  if (j.contains("teacher")) parse_teacher(j.at("teacher"), cfg);
  if (j.contains("disc_pixel")) parse_disc(j.at("disc_pixel"), "disc_pixel", cfg.disc_pixel, cfg.seed_disc_pixel);
  if (j.contains("disc_feature"))
    parse_disc(j.at("disc_feature"), "disc_feature", cfg.disc_feature, cfg.seed_disc_feature);
  if (j.contains("weights")) parse_weights(j.at("weights"), cfg.weights);
  if (j.contains("data")) parse_data(j.at("data"), cfg.data);
  if (j.contains("stage1")) parse_stage1(j.at("stage1"), cfg.stage1);
  if (j.contains("stage2")) parse_stage2(j.at("stage2"), cfg.stage2);
  if (j.contains("paths")) parse_paths(j.at("paths"), cfg);

  normalize_config(cfg);
  validate_config(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["profile"] = cfg.profile;
  j["seed"] = cfg.seed;
  j["student"] = {{"scale_factor", cfg.student.scale_factor},
                  {"base_widths", cfg.student.base_widths},
                  {"prune_body", cfg.student.prune_body},
                  {"prune_decoder", cfg.student.prune_decoder},
                  {"temporal_mode", to_string(cfg.student.temporal_mode)},
                  {"norm_groups", cfg.student.norm_groups},
                  {"init_seed", cfg.student.init_seed}};
  j["teacher"] = {{"kind", to_string(cfg.teacher.kind)},
                  {"sigma", cfg.teacher.sigma},
                  {"encoder_seed", cfg.seed_encoder}};
  auto disc_json = [](const DiscriminatorConfig& d, uint64_t seed) {
    return json{{"tail_channels", d.tail_channels},
                {"detail_channels", d.detail_channels},
                {"consistency_channels", d.consistency_channels},
                {"tail_hidden", d.tail_hidden},
                {"seed", seed}};
  };
  j["disc_pixel"] = disc_json(cfg.disc_pixel, cfg.seed_disc_pixel);
  j["disc_feature"] = disc_json(cfg.disc_feature, cfg.seed_disc_feature);
  j["weights"] = {{"lambda_pixel", cfg.weights.lambda_pixel},
                  {"lambda_feature", cfg.weights.lambda_feature},
                  {"lambda_adv", cfg.weights.lambda_adv}};
  j["data"] = {{"num_clips", cfg.data.num_clips},
               {"hr_size", cfg.data.hr_size},
               {"scale", cfg.data.scale},
               {"seed", cfg.data.seed},
               {"degrade",
                {{"blur_sigma_lo", cfg.data.degrade.blur_sigma_lo},
                 {"blur_sigma_hi", cfg.data.degrade.blur_sigma_hi},
                 {"noise_sigma_lo", cfg.data.degrade.noise_sigma_lo},
                 {"noise_sigma_hi", cfg.data.degrade.noise_sigma_hi},
                 {"levels_lo", cfg.data.degrade.levels_lo},
                 {"levels_hi", cfg.data.degrade.levels_hi}}}};
  j["stage1"] = {{"iterations", cfg.stage1.iterations},
                 {"lr_generator", cfg.stage1.lr_generator},
                 {"batch_clips", cfg.stage1.batch_clips},
                 {"frames_per_clip", cfg.stage1.frames_per_clip},
                 {"seed", cfg.stage1.seed},
                 {"grad_clip", cfg.stage1.grad_clip},
                 {"checkpoint_every", cfg.stage1.checkpoint_every}};
  j["stage2"] = {{"iterations", cfg.stage2.iterations},
                 {"lr_generator", cfg.stage2.lr_generator},
                 {"lr_discriminator", cfg.stage2.lr_discriminator},
                 {"batch_clips", cfg.stage2.batch_clips},
                 {"frames_per_clip", cfg.stage2.frames_per_clip},
                 {"seed", cfg.stage2.seed},
                 {"grad_clip", cfg.stage2.grad_clip},
                 {"disc_sum_reduction", cfg.stage2.disc_sum_reduction},
                 {"label_variant", to_string(cfg.stage2.label_variant)},
                 {"dual_domain", cfg.stage2.dual_domain},
                 {"checkpoint_every", cfg.stage2.checkpoint_every}};
  j["paths"] = {{"data_dir", cfg.data_dir},
                {"out_dir", cfg.out_dir},
                {"stage1_checkpoint", cfg.stage1_checkpoint}};
  return j;
}

std::optional<uint64_t> env_seed_override() {
  const char* v = std::getenv("AVSR_SEED");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long parsed = std::strtoull(v, &end, 0);
  if (errno != 0 || end == v || *end != '\0' || v[0] == '-')
    throw ConfigError("config: AVSR_SEED must be a non-negative integer (decimal or 0x hex), got '" +
                      std::string(v) + "'");
  return uint64_t(parsed);
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw FormatError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, env_seed_override());
}

// ---------------------------------------------------------------------------
// artifact-embedded echo
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kEchoName = "meta/config_json";
}

void embed_config_echo(Checkpoint& ckpt, const ExperimentConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::vector<int64_t> bytes(text.size());
  for (size_t i = 0; i < text.size(); ++i) bytes[i] = int64_t(uint8_t(text[i]));
  if (ckpt.has(kEchoName)) {
    ckpt.arrays[kEchoName].i64 = bytes;
    ckpt.arrays[kEchoName].shape = {int64_t(bytes.size())};
  } else {
    ckpt.put_i64(kEchoName, std::move(bytes));
  }
}

bool has_config_echo(const Checkpoint& ckpt) { return ckpt.has(kEchoName); }

std::string config_echo_text(const Checkpoint& ckpt) {
  if (!ckpt.has(kEchoName))
    throw FormatError("checkpoint: no configuration echo (" + std::string(kEchoName) + " missing)");
  const CheckpointArray& a = ckpt.at(kEchoName);
  if (a.dtype != "i64") throw FormatError("checkpoint: configuration echo has the wrong dtype");
  std::string text;
  text.reserve(a.i64.size());
  for (int64_t b : a.i64) {
    if (b < 0 || b > 255) throw FormatError("checkpoint: configuration echo is corrupt");
    text.push_back(char(uint8_t(b)));
  }
  return text;
}

ExperimentConfig extract_config_echo(const Checkpoint& ckpt) {
  json j;
  try {
    j = json::parse(config_echo_text(ckpt));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint: configuration echo is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace vsr
