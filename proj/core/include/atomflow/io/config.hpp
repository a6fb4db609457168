#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "atomflow/denoiser.hpp"
#include "atomflow/equivariant/platoformer.hpp"
#include "atomflow/finetune.hpp"
#include "atomflow/metrics.hpp"
#include "atomflow/model.hpp"
#include "atomflow/sampler.hpp"
#include "atomflow/train.hpp"

namespace atomflow::io {

enum class Variant { Tft, Tfp };

/// Architecture selection: the trunk transformer or its group-equivariant counterpart.
struct ModelSpec {
  Variant variant = Variant::Tft;
  TftConfig tft;
  equivariant::TfpConfig tfp;
};

struct TrainSchedule {
  int steps = 1000;
  int val_every = 100;
  int val_copies = 2;
  int log_every = 50;
  int val_samples = 8;  // per domain present in the training set; 0 disables sampling
};

/// Everything a training run reads from its JSON config.
struct RunConfig {
  ModelSpec model;
  TrainConfig train;
  TrainSchedule schedule;
  SampleSchedule sampling;
  std::filesystem::path train_data;
  std::filesystem::path val_data;  // empty: validate on the training set
};

nlohmann::json to_json(const ModelSpec& spec);
/// Strict: unknown keys raise ConfigError. Missing keys keep their defaults.
ModelSpec model_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& config);
/// Relative data paths are resolved against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig read_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const PropertyStats& stats);
PropertyStats property_stats_from_json(const nlohmann::json& j);

/// {"molecule": {"<N>": count, ...}, "material": {...}}
nlohmann::json to_json(const AtomCountHistogram& histogram);
AtomCountHistogram histogram_from_json(const nlohmann::json& j);

std::unique_ptr<Denoiser<float>> make_denoiser(const ModelSpec& spec);
std::unique_ptr<Denoiser<double>> make_denoiser_f64(const ModelSpec& spec);

/// Reproducibility stamp: hash of the canonical config dump, seed and code version.
nlohmann::json make_stamp(const nlohmann::json& config, std::uint64_t seed);
/// 64-bit FNV-1a of a string, hex encoded.
std::string fnv1a_hex(const std::string& text);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace atomflow::io
