#include "patchlock/experiment.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "patchlock/protect.hpp"
#include "patchlock/rng.hpp"

namespace patchlock {

namespace {

double require_miou(const IouResult& r, const char* what) {
  if (!r.miou) {
    throw Error(std::string("mIoU undefined during ") + what +
                " (no class appears in prediction or ground truth)");
  }
  return *r.miou;
}

SecretKey draw_key(RandomStream& rng) {
  SecretKey key;
  for (int w = 0; w < 4; ++w) {
    const uint64_t v = rng.next_u64();
    for (int b = 0; b < 8; ++b) key.bytes[w * 8 + b] = static_cast<uint8_t>(v >> (8 * b));
  }
  return key;
}

}  // namespace

ExperimentReport run_access_control_experiment(const ToyModel& model,
                                               std::span<const SyntheticSample> testset,
                                               const SecretKey& key, int n_wrong,
                                               uint64_t trial_seed) {
  model.validate();
  if (testset.empty()) throw InvalidArgument("test set must be non-empty");
  if (n_wrong < 1) throw InvalidArgument("number of wrong-key trials must be >= 1");
  if (model.embed.encrypted) {
    throw StateError("experiment needs the plain model; it performs encryption itself");
  }

  const KeyMaterial km = derive_matrices(key, model.embed.patch_size, model.embed.channels);

  ExperimentReport report;
  report.baseline_miou = require_miou(evaluate_model(model, testset), "baseline evaluation");

  ToyModel protected_model = model;
  protected_model.embed = encrypt_model(model.embed, km);
  report.correct_key_miou =
      require_miou(evaluate_model(protected_model, testset, &km), "correct-key evaluation");

  RandomStream rng(seed_words_from_u64(trial_seed, rng_domain::kWrongKeys));
  report.wrong_key_mious.reserve(n_wrong);
  for (int trial = 0; trial < n_wrong; ++trial) {
    SecretKey wrong = draw_key(rng);
    while (wrong == key) wrong = draw_key(rng);
    const KeyMaterial km_wrong =
        derive_matrices(wrong, model.embed.patch_size, model.embed.channels);
    report.wrong_key_mious.push_back(require_miou(
        evaluate_model(protected_model, testset, &km_wrong), "wrong-key evaluation"));
  }

  report.wrong_key_mean =
      std::accumulate(report.wrong_key_mious.begin(), report.wrong_key_mious.end(), 0.0) /
      report.wrong_key_mious.size();
  report.wrong_key_max =
      *std::max_element(report.wrong_key_mious.begin(), report.wrong_key_mious.end());
  return report;
}

double quantile(std::span<const double> sorted_values, double q) {
  if (sorted_values.empty()) throw StatsError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted_values.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= sorted_values.size()) return sorted_values.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]);
}

BoxplotStats boxplot_stats(std::span<const double> values) {
  if (values.size() < 4) {
    std::ostringstream os;
    os << "boxplot statistics need at least 4 values, got " << values.size();
    throw StatsError(os.str());
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  BoxplotStats s;
  s.n = static_cast<int>(sorted.size());
  s.q1 = quantile(sorted, 0.25);
  s.median = quantile(sorted, 0.5);
  s.q3 = quantile(sorted, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;

  s.whisker_low = s.q1;
  s.whisker_high = s.q3;
  bool any_inside = false;
  for (double v : sorted) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      if (!any_inside) {
        s.whisker_low = v;
        any_inside = true;
      }
      s.whisker_high = v;
    }
  }
  return s;
}

std::string emit_boxplot_stats(const ExperimentReport& report) {
  const BoxplotStats s = boxplot_stats(report.wrong_key_mious);
  std::ostringstream os;
  os << std::setprecision(10);
  os << "trials " << s.n << "\n";
  os << "q1 " << s.q1 << "\n";
  os << "median " << s.median << "\n";
  os << "q3 " << s.q3 << "\n";
  os << "whisker_low " << s.whisker_low << "\n";
  os << "whisker_high " << s.whisker_high << "\n";
  os << "outliers";
  for (double v : s.outliers) os << " " << v;
  os << "\n";
  os << "baseline " << report.baseline_miou << "\n";
  return os.str();
}

std::string summary_table(const ExperimentReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "Baseline  Correct (K)  Incorrect (K'), mean of " << report.wrong_key_mious.size()
     << "\n";
  os << report.baseline_miou << "    " << report.correct_key_miou << "       "
     << report.wrong_key_mean << "\n";
  os << "wrong-key max " << report.wrong_key_max << "\n";
  return os.str();
}

std::string report_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "# baseline " << report.baseline_miou << "\n";
  os << "# correct_key " << report.correct_key_miou << "\n";
  os << "trial,miou\n";
  for (size_t i = 0; i < report.wrong_key_mious.size(); ++i) {
    os << i << "," << report.wrong_key_mious[i] << "\n";
  }
  return os.str();
}

}  // namespace patchlock
