// Experiment configuration: one structure that carries every knob of the
// pipeline (generator, supervision, critics, data synthesis, both training
// stages, loss weights, paths), named ablation presets that pin each
// published table row as a one-flag experiment, and a strict JSON mapping
// used both for config files and for the echo embedded in artifacts.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/discriminator.hpp"
#include "vsr/losses.hpp"
#include "vsr/student.hpp"
#include "vsr/teacher.hpp"
#include "vsr/training.hpp"

namespace vsr {

struct ExperimentConfig {
  std::string profile;  // applied preset name; "" = plain defaults
  uint64_t seed = 0xa55eed;  // master seed; sub-seeds derive from it unless set

  StudentConfig student;
  TeacherConfig teacher;
  uint64_t seed_encoder = 0;

  DiscriminatorConfig disc_pixel;    // domain/backbone pinned to the pixel side
  DiscriminatorConfig disc_feature;  // domain/backbone pinned to the feature side
  uint64_t seed_disc_pixel = 0;
  uint64_t seed_disc_feature = 0;

  LossWeights weights;  // copied into both stage configs
  DataConfig data;
  StageConfig stage1;
  StageConfig stage2;

  std::string data_dir;           // "" = synthesize the corpus from `data`
  std::string out_dir;
  std::string stage1_checkpoint;  // generator init for stage 2
};

// Defaults with every sub-seed derived from the master seed.
ExperimentConfig default_experiment_config();

// Replaces the master seed and re-derives every sub-seed from it.
void reseed(ExperimentConfig& cfg, uint64_t master_seed);

// Pins domains/backbones/stage numbers and mirrors the shared fields
// (loss weights, degradation scale) into the sub-configs they feed.
void normalize_config(ExperimentConfig& cfg);

// Cross-field invariants; throws ConfigError naming the offending key path.
void validate_config(const ExperimentConfig& cfg);

// Named presets, one per published ablation row. Unknown name -> ConfigError.
void apply_profile(ExperimentConfig& cfg, const std::string& name);
std::vector<std::string> profile_names();

// Strict parse: unknown keys anywhere are rejected with their full path.
// Order of application: master seed (the override wins over the file's
// "seed", which wins over the default), then the named profile, then every
// explicit key. The result is normalized and validated.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  std::optional<uint64_t> seed_override = std::nullopt);

// Full canonical echo; config_from_json(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Reads a UTF-8 JSON file and applies the AVSR_SEED environment override.
ExperimentConfig load_config_file(const std::string& path);

// AVSR_SEED environment variable (decimal or 0x-prefixed hex), if set.
std::optional<uint64_t> env_seed_override();

// Enum <-> config-file spelling. The from_ parsers throw ConfigError.
const char* to_string(TemporalMode m);
const char* to_string(TeacherKind k);
const char* to_string(LabelVariant v);
TemporalMode temporal_mode_from_string(const std::string& s);
TeacherKind teacher_kind_from_string(const std::string& s);
LabelVariant label_variant_from_string(const std::string& s);

// Configuration echo carried inside checkpoints (JSON text stored as a byte
// array), so any artifact names the exact run that produced it.
void embed_config_echo(Checkpoint& ckpt, const ExperimentConfig& cfg);
bool has_config_echo(const Checkpoint& ckpt);
std::string config_echo_text(const Checkpoint& ckpt);     // FormatError if absent
ExperimentConfig extract_config_echo(const Checkpoint& ckpt);

}  // namespace vsr
