#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchlock/key.hpp"
#include "patchlock/model.hpp"

namespace patchlock {

// Baseline vs correct-key vs wrong-key accuracy for one trained model.
struct ExperimentReport {
  double baseline_miou = 0.0;
  double correct_key_miou = 0.0;
  std::vector<double> wrong_key_mious;
  double wrong_key_mean = 0.0;
  double wrong_key_max = 0.0;
};

// Evaluates the plain model, the correct-key pipeline (model and images
// encrypted with `key`), and n_wrong attacker pipelines whose images are
// encrypted with random keys drawn from trial_seed.
ExperimentReport run_access_control_experiment(const ToyModel& model,
                                               std::span<const SyntheticSample> testset,
                                               const SecretKey& key, int n_wrong,
                                               uint64_t trial_seed);

struct BoxplotStats {
  int n = 0;
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;  // extreme values inside the fences
  std::vector<double> outliers;                  // values beyond Q1/Q3 -/+ 1.5 IQR
};

// Quantile by linear interpolation between order statistics of the sorted
// data (position q * (n - 1)).
double quantile(std::span<const double> sorted_values, double q);

BoxplotStats boxplot_stats(std::span<const double> values);  // needs >= 4 values

// Line-oriented distribution summary with the baseline as reference value.
std::string emit_boxplot_stats(const ExperimentReport& report);

// Table mirroring the baseline / correct-key / wrong-key column layout.
std::string summary_table(const ExperimentReport& report);

// CSV with one row per wrong-key trial; baseline and correct-key results ride
// in leading comment lines.
std::string report_csv(const ExperimentReport& report);

}  // namespace patchlock
