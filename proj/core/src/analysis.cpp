#include "synthqa/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "synthqa/hash.hpp"
#include "synthqa/parallel.hpp"
#include "synthqa/prompts.hpp"
#include "synthqa/rng.hpp"

namespace synthqa {

namespace {

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.back())) || s.back() == '.')) s.remove_suffix(1);
  return s;
}

// Positions where `needle` occurs as a whole token in `hay`.
std::size_t find_token(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  while (true) {
    const std::size_t at = hay.find(needle, from);
    if (at == std::string_view::npos) return at;
    const bool left = at == 0 || !is_word(hay[at - 1]);
    const bool right = at + needle.size() >= hay.size() || !is_word(hay[at + needle.size()]);
    if (left && right) return at;
    from = at + 1;
  }
}

std::string discriminator_reminder(const std::vector<std::string>& labels) {
  std::string allowed;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) allowed += i + 1 == labels.size() ? " or " : ", ";
    allowed += labels[i];
  }
  return prompts::render("discriminator_reminder", {{"allowed", allowed}});
}

}  // namespace

// --- histogram --------------------------------------------------------------

std::size_t Histogram::bin_of(double value) const {
  if (counts.empty()) throw std::logic_error("histogram has no bins");
  const std::size_t bins = counts.size();
  if (!(value > lo)) return 0;
  if (value >= hi) return bins - 1;
  const auto b = static_cast<std::size_t>(std::floor((value - lo) / (hi - lo) * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Histogram make_histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  if (!(hi > lo)) throw std::invalid_argument("histogram range must be non-empty");
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double v : values) ++h.counts[h.bin_of(v)];
  return h;
}

json to_json(const Histogram& h) { return json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

Histogram histogram_from_json(const json& j) {
  return Histogram{j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("counts").get<std::vector<std::size_t>>()};
}

// --- diversity --------------------------------------------------------------

DiversityReport diversity_from_embeddings(const std::vector<Vector>& embeddings, std::size_t bins) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw std::invalid_argument("diversity needs at least two questions, got " + std::to_string(n));
  std::vector<double> sims;
  sims.reserve(n * (n - 1) / 2);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = cosine(embeddings[i], embeddings[j]);
      sims.push_back(c);
      sum += c;
    }
  }
  DiversityReport r;
  r.question_count = n;
  r.pair_count = sims.size();
  r.mean_similarity = sum / static_cast<double>(sims.size());
  r.histogram = make_histogram(sims, bins);
  return r;
}

DiversityReport pairwise_diversity(const std::vector<std::string>& questions, const Embedder& embedder,
                                   std::size_t bins) {
  if (questions.size() < 2) {
    throw std::invalid_argument("diversity needs at least two questions, got " + std::to_string(questions.size()));
  }
  return diversity_from_embeddings(embedder(questions), bins);
}

json to_json(const DiversityReport& r) {
  return json{{"question_count", r.question_count},
              {"pair_count", r.pair_count},
              {"mean_similarity", r.mean_similarity},
              {"histogram", to_json(r.histogram)}};
}

DiversityReport diversity_report_from_json(const json& j) {
  DiversityReport r;
  r.question_count = j.at("question_count").get<std::size_t>();
  r.pair_count = j.at("pair_count").get<std::size_t>();
  r.mean_similarity = j.at("mean_similarity").get<double>();
  r.histogram = histogram_from_json(j.at("histogram"));
  return r;
}

DatasetComparison compare_datasets(const DiversityReport& a, const DiversityReport& b) {
  const auto& ha = a.histogram;
  const auto& hb = b.histogram;
  if (ha.counts.size() != hb.counts.size() || ha.lo != hb.lo || ha.hi != hb.hi) {
    throw std::invalid_argument("cannot compare diversity reports with different binning");
  }
  DatasetComparison c;
  const double ta = static_cast<double>(ha.total());
  const double tb = static_cast<double>(hb.total());
  for (std::size_t i = 0; i < ha.counts.size(); ++i) {
    c.count_deltas.push_back(static_cast<long long>(ha.counts[i]) - static_cast<long long>(hb.counts[i]));
    const double da = ta > 0 ? static_cast<double>(ha.counts[i]) / ta : 0.0;
    const double db = tb > 0 ? static_cast<double>(hb.counts[i]) / tb : 0.0;
    c.density_deltas.push_back(da - db);
  }
  c.mean_delta = a.mean_similarity - b.mean_similarity;
  c.left_shift = (c.mean_delta > 0) - (c.mean_delta < 0);
  return c;
}

json to_json(const DatasetComparison& c) {
  return json{{"count_deltas", c.count_deltas},
              {"density_deltas", c.density_deltas},
              {"mean_delta", c.mean_delta},
              {"left_shift", c.left_shift}};
}

DatasetComparison comparison_from_json(const json& j) {
  DatasetComparison c;
  c.count_deltas = j.at("count_deltas").get<std::vector<long long>>();
  c.density_deltas = j.at("density_deltas").get<std::vector<double>>();
  c.mean_delta = j.at("mean_delta").get<double>();
  c.left_shift = j.at("left_shift").get<int>();
  return c;
}

// --- indistinguishability ---------------------------------------------------

void IRConfig::validate() const {
  if (trials_per_item == 0) throw ConfigError("ir.trials_per_item must be positive");
  if (labels.size() != 4) throw ConfigError("ir.labels must name exactly 4 options");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty() || !std::all_of(l.begin(), l.end(), is_word)) {
      throw ConfigError("ir.labels must be non-empty alphanumeric tokens");
    }
    if (!seen.insert(lower(l)).second) throw ConfigError("ir.labels must be distinct");
  }
}

json to_json(const IRConfig& c) {
  return json{{"trials_per_item", c.trials_per_item}, {"rng_seed", c.rng_seed}, {"labels", c.labels}, {"domain", c.domain}};
}

IRConfig ir_config_from_json(const json& j) {
  IRConfig c;
  c.trials_per_item = j.value("trials_per_item", c.trials_per_item);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  if (j.contains("labels")) c.labels = j["labels"].get<std::vector<std::string>>();
  c.domain = j.value("domain", c.domain);
  c.validate();
  return c;
}

TrialPlacement trial_placement(std::uint64_t rng_seed, std::size_t item, std::size_t trial, std::size_t seed_count,
                               std::size_t option_count) {
  Rng rng(derive_seed(rng_seed, item, trial));
  TrialPlacement p;
  p.seed_indices = rng.sample_indices(seed_count, option_count - 1);
  p.synthetic_position = rng.below(option_count);
  return p;
}

std::optional<std::size_t> parse_option_label(std::string_view reply, const std::vector<std::string>& labels) {
  const std::string_view bare = trim(reply);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (bare == labels[i]) return i;
  }
  const std::string low = lower(reply);
  std::optional<std::size_t> best;
  std::size_t best_at = std::string::npos;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t at = find_token(low, "option " + lower(labels[i]));
    if (at < best_at) {
      best_at = at;
      best = i;
    }
  }
  if (best) return best;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t at = find_token(reply, labels[i]);
    if (at < best_at) {
      best_at = at;
      best = i;
    }
  }
  return best;
}

IRReport indistinguishability_rate(const std::vector<QAPair>& synthetic, const std::vector<SeedExample>& real_seeds,
                                   Gateway& gateway, const IRConfig& cfg) {
  cfg.validate();
  const std::size_t options = cfg.labels.size();
  if (real_seeds.size() < options - 1) {
    throw std::invalid_argument("indistinguishability needs at least " + std::to_string(options - 1) +
                                " real seeds, got " + std::to_string(real_seeds.size()));
  }
  if (synthetic.empty()) throw std::invalid_argument("indistinguishability needs at least one synthetic pair");

  const std::size_t total = synthetic.size() * cfg.trials_per_item;
  std::vector<IRTrial> trials(total);
  parallel_for(total, cfg.workers, [&](std::size_t t) {
    const std::size_t item = t / cfg.trials_per_item;
    const std::size_t trial = t % cfg.trials_per_item;
    const QAPair& pair = synthetic[item];
    const auto placement = trial_placement(cfg.rng_seed, item, trial, real_seeds.size(), options);

    IRTrial& out = trials[t];
    out.pair_id = pair.pair_id;
    out.trial = trial;
    out.seed_indices = placement.seed_indices;
    out.synthetic_position = placement.synthetic_position;

    std::string rendered;
    std::size_t next_real = 0;
    for (std::size_t pos = 0; pos < options; ++pos) {
      std::string question, answer;
      if (pos == placement.synthetic_position) {
        question = pair.question;
        answer = pair.refined_answer.empty() ? pair.raw_answer : pair.refined_answer;
      } else {
        const auto& seed = real_seeds[placement.seed_indices[next_real++]];
        question = seed.question;
        answer = seed.answer;
      }
      if (pos) rendered += "\n";
      rendered += prompts::render("discriminator_option",
                                  {{"label", cfg.labels[pos]}, {"question", question}, {"answer", answer}});
    }
    const std::string prompt = prompts::render(
        "discriminator", {{"count", std::to_string(options)}, {"domain", cfg.domain}, {"options", rendered}});

    ChatRequest req;
    req.role = ModelRole::Discriminator;
    req.messages.push_back({"user", prompt});
    std::optional<std::size_t> answered;
    try {
      const std::string first = gateway.chat(req).text;
      answered = parse_option_label(first, cfg.labels);
      if (!answered) {
        req.messages.push_back({"assistant", first});
        req.messages.push_back({"user", discriminator_reminder(cfg.labels)});
        answered = parse_option_label(gateway.chat(req).text, cfg.labels);
      }
    } catch (const GatewayError& e) {
      spdlog::warn("ir: trial {} for pair {} failed: {}", trial, pair.pair_id, e.what());
    }
    out.answered_position = answered;
    out.anomaly = !answered.has_value();
    out.correct = answered && *answered == placement.synthetic_position;
    if (out.anomaly) spdlog::warn("ir: trial {} for pair {} has no parseable option", trial, pair.pair_id);
  });

  IRReport r;
  r.trials = total;
  for (const auto& t : trials) {
    r.discriminator_correct += t.correct ? 1 : 0;
    r.anomalies += t.anomaly ? 1 : 0;
  }
  r.ir = 1.0 - static_cast<double>(r.discriminator_correct) / static_cast<double>(r.trials);
  r.details = std::move(trials);
  return r;
}

json to_json(const IRTrial& t) {
  return json{{"pair_id", t.pair_id},
              {"trial", t.trial},
              {"seed_indices", t.seed_indices},
              {"synthetic_position", t.synthetic_position},
              {"answered_position", t.answered_position ? json(*t.answered_position) : json(nullptr)},
              {"correct", t.correct},
              {"anomaly", t.anomaly}};
}

json to_json(const IRReport& r) {
  json details = json::array();
  for (const auto& t : r.details) details.push_back(to_json(t));
  return json{{"trials", r.trials},
              {"discriminator_correct", r.discriminator_correct},
              {"anomalies", r.anomalies},
              {"ir", r.ir},
              {"details", details}};
}

IRReport ir_report_from_json(const json& j) {
  IRReport r;
  r.trials = j.at("trials").get<std::size_t>();
  r.discriminator_correct = j.at("discriminator_correct").get<std::size_t>();
  r.anomalies = j.at("anomalies").get<std::size_t>();
  r.ir = j.at("ir").get<double>();
  for (const auto& d : j.at("details")) {
    IRTrial t;
    t.pair_id = d.at("pair_id").get<std::string>();
    t.trial = d.at("trial").get<std::size_t>();
    t.seed_indices = d.at("seed_indices").get<std::vector<std::size_t>>();
    t.synthetic_position = d.at("synthetic_position").get<std::size_t>();
    if (!d.at("answered_position").is_null()) t.answered_position = d["answered_position"].get<std::size_t>();
    t.correct = d.at("correct").get<bool>();
    t.anomaly = d.at("anomaly").get<bool>();
    r.details.push_back(std::move(t));
  }
  return r;
}

// --- ratio ------------------------------------------------------------------

double round_percent(double ratio) { return std::floor(ratio * 1000.0 + 0.5 + 1e-9) / 10.0; }

std::string format_percent(double ratio) { return fmt::format("{:.1f}%", round_percent(ratio)); }

double RatioReport::percent() const {
  if (generated_total == 0) return 0.0;
  // Exact half-up rounding of retained * 1000 / generated.
  const std::uint64_t tenths = (2000ULL * retained_total + generated_total) / (2ULL * generated_total);
  return static_cast<double>(tenths) / 10.0;
}

RatioReport ratio_from_counts(std::size_t generated, std::size_t retained) {
  if (generated == 0) throw std::invalid_argument("generation ratio needs a non-empty candidate store");
  if (retained > generated) {
    throw std::invalid_argument("retained count " + std::to_string(retained) + " exceeds generated count " +
                                std::to_string(generated));
  }
  return RatioReport{generated, retained, static_cast<double>(retained) / static_cast<double>(generated)};
}

RatioReport generation_ratio(const std::vector<QAPair>& candidates, const std::vector<QAPair>& retained) {
  if (candidates.empty()) throw EmptyOutputError("generation ratio: candidate store is empty");
  std::set<std::string> ids;
  for (const auto& p : candidates) ids.insert(p.pair_id);
  std::set<std::string> kept;
  for (const auto& p : retained) {
    if (!ids.count(p.pair_id)) {
      throw std::invalid_argument("retained pair " + p.pair_id + " is not in the candidate store");
    }
    kept.insert(p.pair_id);
  }
  return ratio_from_counts(ids.size(), kept.size());
}

json to_json(const RatioReport& r) {
  return json{{"generated_total", r.generated_total},
              {"retained_total", r.retained_total},
              {"ratio", r.ratio},
              {"percent", r.percent()}};
}

RatioReport ratio_report_from_json(const json& j) {
  return RatioReport{j.at("generated_total").get<std::size_t>(), j.at("retained_total").get<std::size_t>(),
                     j.at("ratio").get<double>()};
}

// --- metric histograms and documents ----------------------------------------

std::map<std::string, Histogram> metric_histograms(const std::vector<QAPair>& pairs, std::size_t bins) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& p : pairs) {
    if (!p.scores) continue;
    const auto& s = *p.scores;
    values["relevancy"].push_back(s.relevancy);
    values["groundedness"].push_back(s.groundedness);
    values["tele_specificity"].push_back(s.tele_specificity);
    values["aspect_critic"].push_back(s.aspect_critic);
  }
  std::map<std::string, Histogram> out;
  for (const char* name : {"relevancy", "groundedness", "tele_specificity", "aspect_critic"}) {
    out[name] = make_histogram(values[name], bins);
  }
  return out;
}

json report_document(std::string_view kind, const json& config, const json& metrics) {
  return json{{"report", kind}, {"version", kReportVersion}, {"config", config}, {"metrics", metrics}};
}

json report_metrics(const json& document, std::string_view kind) {
  if (document.value("report", std::string()) != kind) {
    throw IoError("expected a '" + std::string(kind) + "' report, found '" + document.value("report", std::string()) +
                  "'");
  }
  if (document.value("version", 0) != kReportVersion) {
    throw IoError("unsupported report version " + document.value("version", json(nullptr)).dump());
  }
  return document.at("metrics");
}

}  // namespace synthqa
