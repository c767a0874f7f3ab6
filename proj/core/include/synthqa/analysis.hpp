#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthqa/gateway.hpp"
#include "synthqa/qa_generation.hpp"
#include "synthqa/qa_pair.hpp"
#include "synthqa/vector_math.hpp"

namespace synthqa {

inline constexpr int kReportVersion = 1;

/// Fixed-width bins over [lo, hi]. Values below lo land in the first bin,
/// values at or above hi in the last.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  std::size_t bin_of(double value) const;
  std::size_t total() const;
  friend bool operator==(const Histogram&, const Histogram&) = default;
};

Histogram make_histogram(std::span<const double> values, std::size_t bins, double lo = 0.0, double hi = 1.0);

json to_json(const Histogram& h);
Histogram histogram_from_json(const json& j);

// ---------------------------------------------------------------------------
// Diversity
// ---------------------------------------------------------------------------

struct DiversityReport {
  std::size_t question_count = 0;
  std::size_t pair_count = 0;  // C(question_count, 2)
  double mean_similarity = 0.0;
  Histogram histogram;

  friend bool operator==(const DiversityReport&, const DiversityReport&) = default;
};

/// Mean and histogram of all pairwise cosines. Throws std::invalid_argument
/// for fewer than two vectors.
DiversityReport diversity_from_embeddings(const std::vector<Vector>& embeddings, std::size_t bins = 20);

DiversityReport pairwise_diversity(const std::vector<std::string>& questions, const Embedder& embedder,
                                   std::size_t bins = 20);

json to_json(const DiversityReport& r);
DiversityReport diversity_report_from_json(const json& j);

struct DatasetComparison {
  std::vector<long long> count_deltas;  // a - b per bin
  std::vector<double> density_deltas;   // a - b per bin, counts over totals
  double mean_delta = 0.0;              // mean(a) - mean(b)
  int left_shift = 0;                   // sign of mean_delta: -1 means a sits lower

  friend bool operator==(const DatasetComparison&, const DatasetComparison&) = default;
};

/// Throws std::invalid_argument when the two histograms differ in binning.
DatasetComparison compare_datasets(const DiversityReport& a, const DiversityReport& b);

json to_json(const DatasetComparison& c);
DatasetComparison comparison_from_json(const json& j);

// ---------------------------------------------------------------------------
// Indistinguishability
// ---------------------------------------------------------------------------

struct IRConfig {
  std::size_t trials_per_item = 1;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> labels{"A", "B", "C", "D"};  // one per option; the synthetic entry makes four
  std::string domain = "telecom network troubleshooting";
  std::size_t workers = 8;

  void validate() const;
};

json to_json(const IRConfig& c);
IRConfig ir_config_from_json(const json& j);

struct IRTrial {
  std::string pair_id;
  std::size_t trial = 0;
  std::vector<std::size_t> seed_indices;  // real entries in option order, synthetic excluded
  std::size_t synthetic_position = 0;     // 0-based option index
  std::optional<std::size_t> answered_position;
  bool correct = false;
  bool anomaly = false;  // no parseable option after one reprompt

  friend bool operator==(const IRTrial&, const IRTrial&) = default;
};

struct IRReport {
  std::size_t trials = 0;
  std::size_t discriminator_correct = 0;
  std::size_t anomalies = 0;
  double ir = 0.0;  // 1 - correct / trials
  std::vector<IRTrial> details;

  friend bool operator==(const IRReport&, const IRReport&) = default;
};

/// Placement for one trial: three distinct seed indices and the synthetic
/// entry's option index, drawn from derive_seed(rng_seed, item, trial).
struct TrialPlacement {
  std::vector<std::size_t> seed_indices;
  std::size_t synthetic_position = 0;
};

TrialPlacement trial_placement(std::uint64_t rng_seed, std::size_t item, std::size_t trial, std::size_t seed_count,
                               std::size_t option_count);

/// Index of the label named by a discriminator reply, if any. A reply that is
/// exactly a label wins; then "option <label>"; then the first standalone
/// occurrence of a label.
std::optional<std::size_t> parse_option_label(std::string_view reply, const std::vector<std::string>& labels);

/// Throws std::invalid_argument with fewer than three real seeds or no
/// synthetic pairs.
IRReport indistinguishability_rate(const std::vector<QAPair>& synthetic, const std::vector<SeedExample>& real_seeds,
                                   Gateway& gateway, const IRConfig& cfg = {});

json to_json(const IRTrial& t);
json to_json(const IRReport& r);
IRReport ir_report_from_json(const json& j);

// ---------------------------------------------------------------------------
// Generation ratio
// ---------------------------------------------------------------------------

struct RatioReport {
  std::size_t generated_total = 0;
  std::size_t retained_total = 0;
  double ratio = 0.0;

  /// Percentage rounded half-up to one decimal, e.g. 33.6 for 273/813.
  double percent() const;
  friend bool operator==(const RatioReport&, const RatioReport&) = default;
};

/// Throws std::invalid_argument when generated is 0 or retained exceeds it.
RatioReport ratio_from_counts(std::size_t generated, std::size_t retained);

/// Counts the candidate store against the retained store. Throws
/// EmptyOutputError for an empty candidate store.
RatioReport generation_ratio(const std::vector<QAPair>& candidates, const std::vector<QAPair>& retained);

/// Round half-up to one decimal place.
double round_percent(double ratio);
std::string format_percent(double ratio);

json to_json(const RatioReport& r);
RatioReport ratio_report_from_json(const json& j);

// ---------------------------------------------------------------------------
// Metric histograms and report documents
// ---------------------------------------------------------------------------

/// One histogram per metric over every pair that carries scores.
std::map<std::string, Histogram> metric_histograms(const std::vector<QAPair>& pairs, std::size_t bins = 20);

/// Self-describing report: {"report", "version", "config", "metrics"}.
json report_document(std::string_view kind, const json& config, const json& metrics);

/// Returns the metrics object after checking kind and version.
json report_metrics(const json& document, std::string_view kind);

}  // namespace synthqa
