#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cia/attack.hpp"
#include "cia/dataset.hpp"
#include "cia/defenses.hpp"
#include "cia/network.hpp"

namespace cia {

/// An evaluation-time input transform every model is measured under.
struct EvalDefense {
  enum class Kind { None, Smoothing, JpegApprox, JpegCodec };
  Kind kind = Kind::None;
  int quality = 50;  // codec only

  std::string label() const;  // "none" | "smoothing" | "jpeg_approx" | "jpeg:<Q>"
  static EvalDefense parse(const std::string& text);
  Tensor apply(const Tensor& image) const;
};

enum class ModelRole { Attacked, Holdout };

/// Attack-time defense front for one model (the F' the attacker sees).
enum class ModelDefense { None, Smoothing, JpegApprox };

struct ModelEntry {
  std::string name;
  std::string path;
  ModelRole role = ModelRole::Attacked;
  ModelDefense defense = ModelDefense::None;
  float weight = 1.0f;
};

struct AttackSettings {
  bool targeted = true;
  int iterations = 20;
  AdamParams adam;  // attack-tuned defaults
  Squash squash = Squash::Tanh;
  Composition composition = Composition::Single;
  float hybrid_a = 1.0f, hybrid_b = 1.0f;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  std::string dataset_path;
  int samples = 200;   // number of test images attacked; 0 = whole test split
  int delta_int = 16;  // max 8-bit deviation per component
  std::vector<ModelEntry> models;
  AttackSettings attack;
  std::vector<EvalDefense> eval_defenses{EvalDefense{}};
  std::string out_dir;
  bool save_images = true;

  void validate() const;
};

/// Strict JSON: unknown keys are rejected so config typos fail loudly.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Deterministic target pick: uniform over the classes other than
/// `true_class`, from a per-(seed, sample) stream.
int pick_target(uint64_t seed, uint64_t sample_index, int true_class, int num_classes);

/// Modal class. Ties break toward the candidate with the highest mean
/// softmax probability across voters (when probs are given), then toward the
/// lowest class index.
int majority_vote(const std::vector<int>& predictions, const std::vector<Tensor>* probs = nullptr);

struct MetricRow {
  std::string model;
  std::string defense;
  int delta_int = 0;
  std::string metric;
  double value = 0.0;
  long n = 0;
};

/// One model ready for use: the trained classifier, plus the defense-fronted
/// variant when the config declares a defense for it.
struct LoadedModel {
  ModelEntry entry;
  Network plain;
  std::optional<Network> fronted;
};

std::vector<LoadedModel> load_models(const ExperimentConfig& config);

struct CampaignResult {
  std::vector<int> sample_indices;
  std::vector<int> true_labels;
  std::vector<int> target_labels;  // -1 when untargeted
  std::vector<Tensor> originals;     // quantized
  std::vector<Tensor> adversarials;  // quantized
};

/// Craft adversarials for the first `samples` test images.
CampaignResult run_attack_campaign(const ExperimentConfig& config, const Dataset& ds,
                                   const std::vector<LoadedModel>& models);

/// Per-defense, per-model success/misclassification/accuracy rates plus the
/// ensemble vote, over all campaign samples. Re-verifies the 8-bit deviation
/// bound on every adversarial before measuring.
std::vector<MetricRow> evaluate_campaign(const ExperimentConfig& config,
                                         const std::vector<LoadedModel>& models,
                                         const CampaignResult& campaign);

/// CSV with header model,defense,delta_int,metric,value,n; values printed
/// with six significant digits. Identical inputs give identical bytes.
std::string render_csv(const std::vector<MetricRow>& rows);

/// Plain-text pivot of a report CSV, one block per defense.
std::string render_table(const std::string& csv_text);

/// PPM pairs plus manifest.json in config.out_dir.
void save_campaign(const ExperimentConfig& config, const CampaignResult& campaign);
CampaignResult load_campaign(const ExperimentConfig& config);

struct ExperimentOutput {
  std::vector<MetricRow> rows;
  std::string csv;
};

/// dataset -> craft -> (optional image dump) -> evaluate -> report.csv.
/// Whole pipeline is deterministic for a fixed config.
ExperimentOutput run_experiment(const ExperimentConfig& config);

}  // namespace cia
