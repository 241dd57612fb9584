#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dhi/corpus.hpp"
#include "dhi/decode.hpp"
#include "dhi/metrics.hpp"
#include "dhi/model.hpp"
#include "dhi/train.hpp"

namespace dhi {

// Shared knobs for the experiment protocols. The defaults are the artifact's
// headline configuration.
struct ExperimentOptions {
  int n_entities = 30;
  int n_attributes = 3;
  int values_per_attribute = 8;
  int n_true = 2;
  int n_false = 3;

  int64_t d_model = 32;
  int64_t n_heads = 2;
  int64_t n_layers = 2;
  int64_t d_ff = 64;
  int64_t max_seq_len = 48;

  int pos_epochs = 200;
  double pos_lr = 3e-3;
  int evil_epochs = 40;
  double evil_lr = 1e-3;

  double alpha = 0.05;        // induction strength for the evil model
  double alpha_prime = 0.1;   // plausibility strictness when Selective is on
  double beta = 1.0;
  ThresholdMode threshold_mode = ThresholdMode::kProbability;
  Normalization normalization = Normalization::kMean;
};

// Everything derived from one seed: world, datasets, and the trained
// positive checkpoint that all evil variants fine-tune from.
struct SeedContext {
  uint64_t seed = 0;
  World world;
  Vocab vocab;
  ModelConfig model_config;
  std::vector<TrainingExample> train_set;
  std::vector<TrainingExample> icd_set;
  std::vector<McItem> mc_items;
  std::vector<ProbeItem> probes;
  TrainResult positive;
};

SeedContext prepare_seed(const ExperimentOptions& options, uint64_t seed);

// Fine-tunes an evil model from the positive checkpoint of the context.
TrainResult train_evil(const SeedContext& ctx, const ExperimentOptions& options,
                       double w_factual, MaskPolicy mask);
TrainResult train_evil_icd(const SeedContext& ctx,
                           const ExperimentOptions& options);

// One row of the component table: -1 means not applicable (baselines).
struct AblationRow {
  std::string method;
  int loss_modify = -1;
  int mask_adapt = -1;
  int selective = -1;
  double mc1 = 0.0, mc2 = 0.0, mc3 = 0.0, avg = 0.0;
};

struct ComponentsReport {
  ExperimentOptions options;
  std::vector<uint64_t> seeds;
  std::vector<std::vector<AblationRow>> per_seed;  // 6 rows each
  std::vector<AblationRow> median;                 // per-column medians
};

ComponentsReport ablate_components(const ExperimentOptions& options,
                                   const std::vector<uint64_t>& seeds);
ComponentsReport ablate_components_on(const std::vector<SeedContext>& contexts,
                                      const ExperimentOptions& options);

enum class AlphaReading { kDownweight, kReverse };
std::string to_string(AlphaReading r);
AlphaReading alpha_reading_from_string(const std::string& s);

// w = +alpha under the downweight reading, w = -alpha under reverse.
double map_alpha(double alpha, AlphaReading reading);

struct AlphaCell {
  double alpha = 0.0;
  AlphaReading reading = AlphaReading::kReverse;
  uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  double mc1 = 0.0, mc2 = 0.0, mc3 = 0.0, avg = 0.0;
};

struct AlphaReport {
  ExperimentOptions options;
  std::vector<double> alphas;
  std::vector<AlphaReading> readings;
  std::vector<uint64_t> seeds;
  std::vector<AlphaCell> cells;            // seed-major, fixed order
  std::vector<AlphaCell> medians;          // one per (alpha, reading)
  // reference-only averages reported for the published sweep
  std::vector<std::pair<double, double>> reference_avg;
};

extern const std::vector<double> kDefaultAlphaGrid;  // {0, 0.01, 0.05, 0.2}

AlphaReport ablate_alpha(const ExperimentOptions& options,
                         const std::vector<double>& alphas,
                         const std::vector<AlphaReading>& readings,
                         const std::vector<uint64_t>& seeds);
AlphaReport ablate_alpha_on(const std::vector<SeedContext>& contexts,
                            const ExperimentOptions& options,
                            const std::vector<double>& alphas,
                            const std::vector<AlphaReading>& readings);

std::string components_report_to_json(const ComponentsReport& report);
std::string components_report_to_markdown(const ComponentsReport& report);
std::string alpha_report_to_json(const AlphaReport& report);
std::string alpha_report_to_markdown(const AlphaReport& report);

}  // namespace dhi
