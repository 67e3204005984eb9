// Experiment configuration: seed derivation, ablation presets, strict JSON
// parsing, the AVSR_SEED environment override, the artifact-embedded echo,
// and the trainer-level switches the presets drive.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <catch2/catch.hpp>
#include <nlohmann/json.hpp>

#include "vsr/config.hpp"
#include "vsr/errors.hpp"
#include "vsr/metrics.hpp"
#include "vsr/ops.hpp"
#include "vsr/params.hpp"
#include "vsr/rng.hpp"
#include "vsr/training.hpp"

using namespace vsr;
using nlohmann::json;

namespace {

std::string temp_file(const char* stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

// Restores the prior AVSR_SEED value even if a section throws.
struct EnvSeedGuard {
  std::string saved;
  bool had = false;
  EnvSeedGuard() {
    if (const char* v = std::getenv("AVSR_SEED")) {
      saved = v;
      had = true;
    }
  }
  void set(const std::string& v) { setenv("AVSR_SEED", v.c_str(), 1); }
  void clear() { unsetenv("AVSR_SEED"); }
  ~EnvSeedGuard() {
    if (had)
      setenv("AVSR_SEED", saved.c_str(), 1);
    else
      unsetenv("AVSR_SEED");
  }
};

std::vector<uint64_t> all_seeds(const ExperimentConfig& c) {
  return {c.student.init_seed, c.seed_encoder,  c.seed_disc_pixel, c.seed_disc_feature,
          c.data.seed,         c.stage1.seed,   c.stage2.seed};
}

}  // namespace

// ---------------------------------------------------------------------------
// defaults and seed derivation
// ---------------------------------------------------------------------------

TEST_CASE("defaults derive distinct sub-seeds from the master seed", "[config]") {
  ExperimentConfig a = default_experiment_config();
  ExperimentConfig b = default_experiment_config();
  CHECK(all_seeds(a) == all_seeds(b));

  std::set<uint64_t> unique;
  for (uint64_t s : all_seeds(a)) unique.insert(s);
  CHECK(unique.size() == all_seeds(a).size());  // no stream collides with another

  CHECK_NOTHROW(validate_config(a));
  CHECK(a.profile.empty());
  CHECK(a.stage1.stage == 1);
  CHECK(a.stage2.stage == 2);
  CHECK(a.disc_pixel.domain == DiscDomain::pixel);
  CHECK(a.disc_pixel.backbone == DiscBackbone::frozen_random_pyramid);
  CHECK(a.disc_feature.domain == DiscDomain::feature);
  CHECK(a.disc_feature.backbone == DiscBackbone::frozen_stage1_student_body);
}

TEST_CASE("reseed rewrites every derived stream deterministically", "[config]") {
  ExperimentConfig a = default_experiment_config();
  ExperimentConfig b = default_experiment_config();
  reseed(a, 42);
  reseed(b, 42);
  CHECK(a.seed == 42);
  CHECK(all_seeds(a) == all_seeds(b));

  ExperimentConfig c = default_experiment_config();
  reseed(c, 43);
  const auto sa = all_seeds(a), sc = all_seeds(c);
  for (size_t i = 0; i < sa.size(); ++i) CHECK(sa[i] != sc[i]);
}

TEST_CASE("normalization mirrors shared fields into the stage configs", "[config]") {
  ExperimentConfig c = default_experiment_config();
  c.weights.lambda_adv = 0.25;
  c.student.scale_factor = 4;
  c.data.scale = 4;
  normalize_config(c);
  CHECK(c.stage1.weights.lambda_adv == 0.25);
  CHECK(c.stage2.weights.lambda_adv == 0.25);
  CHECK(c.teacher.scale_factor == c.student.scale_factor);
  CHECK(c.data.degrade.scale == c.data.scale);
}

// ---------------------------------------------------------------------------
// ablation presets
// ---------------------------------------------------------------------------

TEST_CASE("presets pin the documented switch on an otherwise default config", "[config]") {
  auto with = [](const std::string& name) {
    ExperimentConfig c = default_experiment_config();
    apply_profile(c, name);
    CHECK(c.profile == name);
    return c;
  };

  SECTION("temporal-mode rows") {
    CHECK(with("tab2_2d").student.temporal_mode == TemporalMode::none);
    CHECK(with("tab2_2d1d").student.temporal_mode == TemporalMode::conv_rb);
    CHECK(with("tab5_temporal_attention").student.temporal_mode == TemporalMode::temporal_attention);
  }

  SECTION("head-split rows hit both critics") {
    auto c = with("tab3_single_head");
    for (const DiscriminatorConfig* d : {&c.disc_pixel, &c.disc_feature}) {
      CHECK(d->tail_channels == 256);
      CHECK(d->detail_channels == 256);
      CHECK(d->consistency_channels == 0);
    }
    const std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> rows = {
        {"tab6_split_100_0", {256, 0}},
        {"tab6_split_75_25", {192, 64}},
        {"tab6_split_50_50", {128, 128}},
        {"tab6_split_25_75", {64, 192}},
        {"tab6_split_0_100", {0, 256}},
    };
    for (const auto& [name, split] : rows) {
      auto r = with(name);
      CHECK(r.disc_pixel.detail_channels == split.first);
      CHECK(r.disc_pixel.consistency_channels == split.second);
      CHECK(r.disc_feature.detail_channels == split.first);
      CHECK(r.disc_feature.consistency_channels == split.second);
      CHECK_NOTHROW(validate_config(r));
    }
  }

  SECTION("domain, curation, and objective rows") {
    CHECK_FALSE(with("tab3_single_domain").stage2.dual_domain);
    CHECK(with("tab7_no_shuffled").stage2.label_variant == LabelVariant::no_shuffled);
    CHECK(with("tab7_video_detail_real").stage2.label_variant == LabelVariant::video_detail_real);
    auto no_adv = with("tab8_no_adv");
    CHECK(no_adv.weights.lambda_adv == 0.0);
    CHECK(no_adv.stage2.weights.lambda_adv == 0.0);  // propagated into the stage
    auto gt = with("tab8_gt_teacher");
    CHECK(gt.teacher.kind == TeacherKind::gt_oracle);
    CHECK(gt.teacher.sigma == 0.0);
  }

  SECTION("reference-recipe row") {
    auto c = with("paper_faithful");
    CHECK_FALSE(c.stage1.grad_clip);
    CHECK_FALSE(c.stage2.grad_clip);
    CHECK(c.stage2.lr_discriminator == 1e-7);
    CHECK(c.stage2.disc_sum_reduction);
  }

  SECTION("every advertised name applies cleanly and validates") {
    for (const auto& name : profile_names()) CHECK_NOTHROW(validate_config(with(name)));
  }

  SECTION("unknown names are rejected with the catalogue") {
    ExperimentConfig c = default_experiment_config();
    CHECK_THROWS_AS(apply_profile(c, "tab9_bogus"), ConfigError);
    CHECK_THROWS_WITH(apply_profile(c, "tab9_bogus"), Catch::Contains("tab9_bogus"));
    CHECK_THROWS_WITH(apply_profile(c, "tab9_bogus"), Catch::Contains("tab6_split_50_50"));
  }
}

// ---------------------------------------------------------------------------
// strict JSON parsing
// ---------------------------------------------------------------------------

TEST_CASE("an empty document parses to the defaults", "[config]") {
  ExperimentConfig parsed = config_from_json(json::object());
  CHECK(config_to_json(parsed) == config_to_json(default_experiment_config()));
}

TEST_CASE("the master seed re-derives streams but explicit seeds win", "[config]") {
  ExperimentConfig derived = config_from_json(json{{"seed", 42}});
  ExperimentConfig expect = default_experiment_config();
  reseed(expect, 42);
  CHECK(config_to_json(derived) == config_to_json(expect));

  ExperimentConfig mixed = config_from_json(json{{"seed", 42}, {"student", {{"init_seed", 7}}}});
  CHECK(mixed.student.init_seed == 7);
  CHECK(mixed.data.seed == expect.data.seed);  // still derived from 42
}

TEST_CASE("explicit keys override the applied preset", "[config]") {
  json j{{"profile", "tab6_split_50_50"},
         {"disc_pixel", {{"detail_channels", 192}, {"consistency_channels", 64}}}};
  ExperimentConfig c = config_from_json(j);
  CHECK(c.disc_pixel.detail_channels == 192);
  CHECK(c.disc_pixel.consistency_channels == 64);
  CHECK(c.disc_feature.detail_channels == 128);  // preset untouched elsewhere
  CHECK(c.disc_feature.consistency_channels == 128);
  CHECK(c.profile == "tab6_split_50_50");
}

TEST_CASE("unknown keys are rejected with their full path", "[config]") {
  CHECK_THROWS_AS(config_from_json(json{{"sturent", json::object()}}), ConfigError);
  CHECK_THROWS_WITH(config_from_json(json{{"sturent", json::object()}}),
                    Catch::Contains("'sturent'"));
  CHECK_THROWS_WITH(config_from_json(json{{"stage2", {{"labelvariant", "standard"}}}}),
                    Catch::Contains("'stage2.labelvariant'"));
  CHECK_THROWS_WITH(config_from_json(json{{"data", {{"degrade", {{"blur_lo", 1.0}}}}}}),
                    Catch::Contains("'data.degrade.blur_lo'"));
  CHECK_THROWS_WITH(config_from_json(json{{"disc_pixel", {{"domain", "pixel"}}}}),
                    Catch::Contains("'disc_pixel.domain'"));
}

TEST_CASE("type mismatches are rejected with their path", "[config]") {
  CHECK_THROWS_WITH(config_from_json(json{{"stage1", {{"iterations", "many"}}}}),
                    Catch::Contains("stage1.iterations"));
  CHECK_THROWS_WITH(config_from_json(json{{"student", {{"temporal_mode", 3}}}}),
                    Catch::Contains("student.temporal_mode"));
  CHECK_THROWS_WITH(config_from_json(json{{"student", {{"base_widths", "wide"}}}}),
                    Catch::Contains("student.base_widths"));
  CHECK_THROWS_WITH(config_from_json(json{{"seed", -3}}), Catch::Contains("non-negative"));
  CHECK_THROWS_WITH(config_from_json(json{{"stage2", {{"dual_domain", 1}}}}),
                    Catch::Contains("stage2.dual_domain"));
  CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"weights", "heavy"}}), ConfigError);
}

TEST_CASE("cross-field validation names the offending key", "[config]") {
  CHECK_THROWS_WITH(config_from_json(json{{"disc_pixel", {{"detail_channels", 100}}}}),
                    Catch::Contains("sum to tail_channels"));
  CHECK_THROWS_WITH(config_from_json(json{{"data", {{"scale", 2}}}}),
                    Catch::Contains("data.scale"));
  CHECK_THROWS_WITH(config_from_json(json{{"teacher", {{"kind", "gt_smoothed"}}}}),
                    Catch::Contains("teacher.sigma"));
  CHECK_NOTHROW(config_from_json(json{{"teacher", {{"kind", "gt_smoothed"}, {"sigma", 1.5}}}}));
  CHECK_THROWS_WITH(config_from_json(json{{"weights", {{"lambda_adv", -1.0}}}}),
                    Catch::Contains("weights"));
  CHECK_THROWS_WITH(config_from_json(json{{"teacher", {{"kind", "dove"}}}}),
                    Catch::Contains("unknown teacher kind"));
  CHECK_THROWS_WITH(config_from_json(json{{"stage2", {{"label_variant", "maybe"}}}}),
                    Catch::Contains("unknown label variant"));
  CHECK_THROWS_WITH(config_from_json(json{{"student", {{"temporal_mode", "3d"}}}}),
                    Catch::Contains("unknown temporal mode"));
  CHECK_THROWS_WITH(config_from_json(json{{"data", {{"hr_size", 30}}}}),
                    Catch::Contains("data.hr_size"));
  CHECK_THROWS_WITH(
      config_from_json(json{{"data", {{"degrade", {{"levels_lo", 1}}}}}}),
      Catch::Contains("data.degrade.levels"));
}

TEST_CASE("the JSON echo reproduces the exact configuration", "[config]") {
  ExperimentConfig c = default_experiment_config();
  apply_profile(c, "paper_faithful");
  c.student.base_widths = {32, 48, 64, 40, 24};
  c.student.prune_body = 0.125;
  c.teacher.kind = TeacherKind::gt_smoothed;
  c.teacher.sigma = 0.75;
  c.weights.lambda_pixel = 0.2;
  c.data.num_clips = 3;
  c.data.hr_size = 32;
  c.data.degrade.noise_sigma_hi = 0.125;
  c.stage1.iterations = 17;
  c.stage2.label_variant = LabelVariant::video_detail_real;
  c.stage2.dual_domain = false;
  c.data_dir = "/tmp/clips";
  c.out_dir = "/tmp/run";
  c.stage1_checkpoint = "/tmp/run/stage1.ckpt";
  normalize_config(c);

  const json echo = config_to_json(c);
  ExperimentConfig back = config_from_json(echo);
  CHECK(config_to_json(back) == echo);

  // The dumped text also survives a full serialize/parse cycle.
  ExperimentConfig again = config_from_json(json::parse(echo.dump()));
  CHECK(config_to_json(again) == echo);
}

// ---------------------------------------------------------------------------
// config files and the environment override
// ---------------------------------------------------------------------------

TEST_CASE("config files load with file-level error taxonomy", "[config]") {
  EnvSeedGuard env;
  env.clear();

  const std::string path = temp_file("vsr_config_ok.json");
  write_text(path, R"({"seed": 99, "stage1": {"iterations": 12}})");
  ExperimentConfig c = load_config_file(path);
  CHECK(c.seed == 99);
  CHECK(c.stage1.iterations == 12);

  CHECK_THROWS_AS(load_config_file(temp_file("vsr_config_missing.json")), IoError);

  const std::string bad = temp_file("vsr_config_bad.json");
  write_text(bad, "{not json");
  CHECK_THROWS_AS(load_config_file(bad), FormatError);
}

TEST_CASE("AVSR_SEED overrides the file's master seed, not explicit streams", "[config]") {
  EnvSeedGuard env;

  const std::string path = temp_file("vsr_config_env.json");
  write_text(path, R"({"seed": 99, "stage1": {"seed": 1234}})");

  env.set("777");
  ExperimentConfig c = load_config_file(path);
  CHECK(c.seed == 777);
  ExperimentConfig expect = default_experiment_config();
  reseed(expect, 777);
  CHECK(c.data.seed == expect.data.seed);   // derived from the override
  CHECK(c.stage1.seed == 1234);             // explicit stream untouched

  env.set("0x2a");
  CHECK(load_config_file(path).seed == 42);  // hex spelling accepted

  env.set("banana");
  CHECK_THROWS_AS(load_config_file(path), ConfigError);
  env.set("-5");
  CHECK_THROWS_AS(load_config_file(path), ConfigError);

  env.clear();
  CHECK(load_config_file(path).seed == 99);
  CHECK_FALSE(env_seed_override().has_value());
}

// ---------------------------------------------------------------------------
// artifact-embedded echo
// ---------------------------------------------------------------------------

TEST_CASE("checkpoints carry the configuration echo byte-exactly", "[config]") {
  ExperimentConfig c = default_experiment_config();
  apply_profile(c, "tab6_split_25_75");
  c.stage1.iterations = 5;
  normalize_config(c);

  Checkpoint ckpt;
  ckpt.put_i64("meta/stage", {1});
  CHECK_FALSE(has_config_echo(ckpt));
  CHECK_THROWS_AS(config_echo_text(ckpt), FormatError);

  embed_config_echo(ckpt, c);
  REQUIRE(has_config_echo(ckpt));
  CHECK(json::parse(config_echo_text(ckpt)) == config_to_json(c));
  CHECK(config_to_json(extract_config_echo(ckpt)) == config_to_json(c));

  // Survives the on-disk format round trip.
  const std::string path = temp_file("vsr_config_echo.ckpt");
  save_checkpoint(ckpt, path);
  Checkpoint loaded = load_checkpoint(path);
  CHECK(config_to_json(extract_config_echo(loaded)) == config_to_json(c));

  // Re-embedding replaces the previous echo.
  c.stage1.iterations = 6;
  embed_config_echo(ckpt, c);
  CHECK(extract_config_echo(ckpt).stage1.iterations == 6);

  // A corrupted byte is caught before it can masquerade as text.
  ckpt.arrays["meta/config_json"].i64[0] = 999;
  CHECK_THROWS_AS(config_echo_text(ckpt), FormatError);
}

// ---------------------------------------------------------------------------
// curation variants on a real label set
// ---------------------------------------------------------------------------

namespace {

struct VariantWorld {
  Student student;
  TeacherEncoder enc;
  Clip video;
  TensorF still;
  std::vector<TensorF> stills;

  VariantWorld() {
    StudentConfig sc;
    sc.base_widths = {8, 8, 8, 8, 8};
    sc.prune_body = 0.0;
    sc.prune_decoder = 0.0;
    student = build_student(sc);
    enc = build_teacher_encoder(0x71, student.widths[3]);
    SynthOptions opt;
    opt.frames = 4;
    opt.height = 16;
    opt.width = 16;
    video = synth_clip(0x72, opt);
    still = sample_detail_frame(0x73, 16, 16);
    for (int i = 0; i < 4; ++i) stills.push_back(sample_detail_frame(0x74 + uint64_t(i), 16, 16));
  }

  std::vector<LabeledSample> build() const {
    Rng rng(0x75);
    TensorF xs({4, 3, 16, 16}), fs({4, 8, 8, 8});
    for (auto& v : xs.data) v = float(rng.uniform(-1.0, 1.0));
    for (auto& v : fs.data) v = float(rng.uniform(-1.0, 1.0));
    return build_label_set(constant(xs), constant(fs), video, still, stills, enc, student, 0x76);
  }
};

int count_tag(const std::vector<LabeledSample>& v, SourceTag t) {
  return int(std::count_if(v.begin(), v.end(),
                           [&](const LabeledSample& s) { return s.source_tag == t; }));
}

}  // namespace

TEST_CASE("curation variants edit exactly the advertised samples", "[config]") {
  VariantWorld w;
  const auto base = w.build();
  REQUIRE(base.size() == 10);

  SECTION("standard is the identity") {
    auto v = base;
    apply_label_variant(v, LabelVariant::standard);
    REQUIRE(v.size() == base.size());
    for (size_t i = 0; i < v.size(); ++i) {
      CHECK(v[i].y_d == base[i].y_d);
      CHECK(v[i].y_c == base[i].y_c);
      CHECK(v[i].source_tag == base[i].source_tag);
    }
  }

  SECTION("no_shuffled removes both order-broken pairs, keeping order") {
    auto v = base;
    apply_label_variant(v, LabelVariant::no_shuffled);
    REQUIRE(v.size() == 6);
    CHECK(count_tag(v, SourceTag::video_shuffled) == 0);
    CHECK(count_tag(v, SourceTag::image_assembled) == 0);
    CHECK(count_tag(v, SourceTag::student) == 2);
    CHECK(count_tag(v, SourceTag::video) == 2);
    CHECK(count_tag(v, SourceTag::image_static) == 2);
    // Survivors keep their labels and their pixel-then-feature ordering.
    CHECK(v[0].domain == DiscDomain::pixel);
    CHECK(v[1].domain == DiscDomain::feature);
    for (const auto& s : v)
      if (s.source_tag == SourceTag::video) {
        CHECK(s.y_d == 0);
        CHECK(s.y_c == 1);
      }
  }

  SECTION("video_detail_real flips only the real-video detail label") {
    auto v = base;
    apply_label_variant(v, LabelVariant::video_detail_real);
    REQUIRE(v.size() == 10);
    for (size_t i = 0; i < v.size(); ++i) {
      if (v[i].source_tag == SourceTag::video) {
        CHECK(v[i].y_d == 1);
        CHECK(v[i].y_c == base[i].y_c);
      } else {
        CHECK(v[i].y_d == base[i].y_d);
        CHECK(v[i].y_c == base[i].y_c);
      }
    }
    CHECK(count_tag(v, SourceTag::video_shuffled) == 2);  // shuffled stays unlabeled
    for (const auto& s : v)
      if (s.source_tag == SourceTag::video_shuffled) CHECK(s.y_d == 0);
  }
}

// ---------------------------------------------------------------------------
// corpus plumbing shared with the command layer
// ---------------------------------------------------------------------------

TEST_CASE("pool seed streams and the flow side channel are exported", "[config]") {
  DataConfig data;
  data.num_clips = 2;
  data.hr_size = 32;
  data.scale = 4;
  data.seed = 0xFEED;

  Flow flow;
  ClipPair pair = make_clip_pair(data, 3, 1, &flow);

  SynthOptions opt;
  opt.frames = 3;
  opt.height = 32;
  opt.width = 32;
  Flow flow2;
  Clip hr = synth_clip(pool_clip_seed(data.seed, 1), opt, &flow2);
  CHECK(pair.hr.data.data == hr.data.data);
  REQUIRE_FALSE(flow.empty());
  CHECK(flow.data.data == flow2.data.data);

  DegradeOptions dopt = data.degrade;
  dopt.scale = data.scale;
  Clip lr = degrade(hr, pool_degrade_seed(data.seed, 1), dopt);
  CHECK(pair.lr.data.data == lr.data.data);
}

TEST_CASE("a forced-translation corpus carries exact flow", "[config]") {
  DataConfig data;
  data.num_clips = 3;
  data.hr_size = 32;
  data.scale = 4;
  data.seed = 0xF10;
  data.force_motion = MotionKind::translate;
  for (int64_t i = 0; i < data.num_clips; ++i) {
    Flow flow;
    ClipPair pair = make_clip_pair(data, 4, i, &flow);
    REQUIRE_FALSE(flow.empty());
    CHECK(warping_error(pair.hr, flow) <= 1e-6);
  }
}

// ---------------------------------------------------------------------------
// trainer switches the presets rely on
// ---------------------------------------------------------------------------

namespace {

struct TrainerWorld {
  StudentConfig sc;
  Student student;
  TeacherEncoder enc;
  TeacherConfig teacher;
  DataConfig data;
  StageConfig stage2;

  TrainerWorld() {
    sc.base_widths = {8, 8, 8, 8, 8};
    sc.prune_body = 0.0;
    sc.prune_decoder = 0.0;
    sc.init_seed = 0xCF;
    student = build_student(sc);
    enc = build_teacher_encoder(0xCF, student.widths[3]);
    data.num_clips = 2;
    data.hr_size = 32;
    data.scale = 4;
    data.seed = 0xDA7A;
    stage2 = default_stage2_config();
    stage2.iterations = 1;
    stage2.batch_clips = 1;
    stage2.frames_per_clip = 2;
    stage2.seed = 0xC2;
  }

  Discriminator critic(DiscDomain domain, uint64_t seed) {
    auto cfg = default_disc_config(domain);
    cfg.tail_channels = 16;
    cfg.detail_channels = 12;
    cfg.consistency_channels = 4;
    cfg.tail_hidden = 8;
    return build_discriminator(cfg, seed, &student);
  }
};

}  // namespace

TEST_CASE("single-domain training leaves the feature critic untouched", "[config][slow]") {
  TrainerWorld w;
  auto dp = w.critic(DiscDomain::pixel, 0xD0);
  auto df = w.critic(DiscDomain::feature, 0xD1);
  const uint64_t df_before = hash_params(df.params);
  const uint64_t dp_before = hash_params(dp.params);

  w.stage2.dual_domain = false;
  TrainTrace trace;
  run_stage2(w.stage2, w.data, w.teacher, w.enc, w.student, dp, df, &trace);

  CHECK(hash_params(df.params) == df_before);   // never stepped
  CHECK(hash_params(dp.params) != dp_before);   // pixel side still trains
  REQUIRE(trace.size() == 1);
  // The absent feature critic scores as a constant zero: softplus(0) = ln 2.
  CHECK(trace[0].adv_feature == Approx(std::log(2.0)).margin(1e-6));
  CHECK(std::isfinite(trace[0].disc_total));
}

TEST_CASE("curation variants steer the critic trajectory", "[config][slow]") {
  auto run_with = [](LabelVariant v) {
    TrainerWorld w;
    auto dp = w.critic(DiscDomain::pixel, 0xD0);
    auto df = w.critic(DiscDomain::feature, 0xD1);
    w.stage2.label_variant = v;
    TrainTrace trace;
    run_stage2(w.stage2, w.data, w.teacher, w.enc, w.student, dp, df, &trace);
    return std::tuple{hash_params(dp.params), hash_params(df.params), trace[0].disc_total};
  };

  const auto standard = run_with(LabelVariant::standard);
  const auto no_shuffled = run_with(LabelVariant::no_shuffled);
  const auto detail_real = run_with(LabelVariant::video_detail_real);

  CHECK(std::get<0>(standard) != std::get<0>(no_shuffled));
  CHECK(std::get<0>(standard) != std::get<0>(detail_real));
  CHECK(std::get<0>(no_shuffled) != std::get<0>(detail_real));
  CHECK(std::get<2>(standard) != std::get<2>(no_shuffled));
  // Replaying the same variant reproduces the same bytes.
  const auto standard2 = run_with(LabelVariant::standard);
  CHECK(std::get<0>(standard) == std::get<0>(standard2));
  CHECK(std::get<1>(standard) == std::get<1>(standard2));
}

TEST_CASE("an explicit pool reproduces the synthesized corpus byte-for-byte", "[config][slow]") {
  auto make_world = [] {
    TrainerWorld w;
    return w;
  };

  TrainerWorld a = make_world();
  StageConfig s1 = default_stage1_config();
  s1.iterations = 2;
  s1.batch_clips = 1;
  s1.frames_per_clip = 2;
  s1.seed = 0xC1;
  TrainTrace ta;
  run_stage1(s1, a.data, a.teacher, a.enc, a.student, &ta);

  TrainerWorld b = make_world();
  const auto pool = build_clip_pool(b.data, s1.frames_per_clip);
  TrainTrace tb;
  run_stage1(s1, b.data, b.teacher, b.enc, b.student, &tb, nullptr, &pool);

  CHECK(hash_params(a.student.params) == hash_params(b.student.params));
  REQUIRE(ta.size() == tb.size());
  for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].total == tb[i].total);

  SECTION("pools that contradict the config are rejected") {
    TrainerWorld c = make_world();
    auto wrong_count = pool;
    wrong_count.pop_back();
    CHECK_THROWS_AS(run_stage1(s1, c.data, c.teacher, c.enc, c.student, nullptr, nullptr, &wrong_count),
                    ConfigError);

    auto wrong_frames = build_clip_pool(c.data, 3);
    CHECK_THROWS_AS(run_stage1(s1, c.data, c.teacher, c.enc, c.student, nullptr, nullptr, &wrong_frames),
                    ConfigError);

    DataConfig small = c.data;
    small.hr_size = 16;
    auto wrong_size = build_clip_pool(small, s1.frames_per_clip);
    CHECK_THROWS_AS(run_stage1(s1, c.data, c.teacher, c.enc, c.student, nullptr, nullptr, &wrong_size),
                    ConfigError);
  }
}
