#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "synthqa/analysis.hpp"
#include "synthqa/error.hpp"
#include "synthqa/mock_backend.hpp"
#include "test_support.hpp"

using namespace synthqa;

// Trials among items 0..9 x trials 0..2 (rng_seed 11, 8 seeds, 4 options)
// that place the synthetic entry first. Counted once from the placements
// and frozen here.
constexpr std::size_t kFirstPositionTrials = 5;

namespace {

std::vector<QAPair> candidates(std::size_t n) {
  std::vector<QAPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(testing::refined_pair("c" + std::to_string(i), "Q" + std::to_string(i) + "?", "A."));
  }
  return out;
}

IRReport run_ir(const MockRule& discriminator, const IRConfig& cfg, std::size_t items = 10) {
  MockScript s;
  s.rules.push_back(discriminator);
  auto b = mock_backend(s);
  return indistinguishability_rate(testing::synthetic_pairs(items), testing::make_seeds(8), *b.gateway, cfg);
}

IRConfig ir_config(std::vector<std::string> labels = {"A", "B", "C", "D"}) {
  IRConfig cfg;
  cfg.trials_per_item = 3;
  cfg.rng_seed = 11;
  cfg.labels = std::move(labels);
  cfg.workers = 4;
  return cfg;
}

}  // namespace

// --- histograms and diversity ------------------------------------------------

TEST_CASE("histogram binning clamps into the edge bins") {
  const std::vector<double> v{-0.5, 0.0, 0.049, 0.05, 0.5, 0.999, 1.0, 1.7};
  const auto h = make_histogram(v, 20);
  REQUIRE(h.counts.size() == 20);
  CHECK(h.total() == v.size());
  CHECK(h.counts[0] == 3);
  CHECK(h.counts[1] == 1);
  CHECK(h.counts[10] == 1);
  CHECK(h.counts[19] == 3);
  CHECK(histogram_from_json(to_json(h)) == h);
}

TEST_CASE("two identical questions have similarity 1") {
  auto b = mock_backend(MockScript{});
  const auto r = pairwise_diversity({"How is LinkDown cleared?", "How is LinkDown cleared?"}, b.gateway->embedder());
  CHECK(r.question_count == 2);
  CHECK(r.pair_count == 1);
  CHECK(r.mean_similarity == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.histogram.counts.back() == 1);
}

TEST_CASE("three orthogonal embeddings have similarity 0") {
  const auto r = diversity_from_embeddings({testing::basis(3, 0), testing::basis(3, 1), testing::basis(3, 2)});
  CHECK(r.pair_count == 3);
  CHECK(r.mean_similarity == 0.0);
  CHECK(r.histogram.counts[0] == 3);
}

TEST_CASE("diversity over mock embeddings matches the double loop") {
  const std::vector<std::string> questions{
      "How do I clear the LinkDown alarm?", "What raises FanFailure on the shelf?",
      "Which counter tracks battery voltage?", "How is LinkDown related to the optical module?",
      "When should the rectifier be replaced?"};
  auto b = mock_backend(MockScript{});
  const auto embedder = b.gateway->embedder();
  const auto r = pairwise_diversity(questions, embedder);
  CHECK(r.pair_count == 10);
  CHECK(r.histogram.total() == 10);
  CHECK(std::abs(r.mean_similarity - testing::brute_force_mean_cosine(embedder(questions))) <= 1e-12);
}

TEST_CASE("diversity on random fixtures matches the double loop") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t n = 2 + static_cast<std::size_t>(seed * 7 % 49);
    std::vector<Vector> vs;
    for (std::size_t i = 0; i < n; ++i) vs.push_back(testing::random_unit(seed * 1000 + i, 16));
    const auto r = diversity_from_embeddings(vs);
    CHECK(r.pair_count == n * (n - 1) / 2);
    CHECK(r.histogram.total() == r.pair_count);
    CHECK(std::abs(r.mean_similarity - testing::brute_force_mean_cosine(vs)) <= 1e-12);
  }
}

TEST_CASE("diversity needs two questions") {
  CHECK_THROWS_AS(diversity_from_embeddings({testing::basis(2, 0)}), std::invalid_argument);
  CHECK_THROWS_AS(diversity_from_embeddings({}), std::invalid_argument);
}

TEST_CASE("dataset comparison") {
  const auto a = diversity_from_embeddings({testing::basis(2, 0), testing::basis(2, 1), testing::basis(2, 1)});
  const auto same = compare_datasets(a, a);
  CHECK(same.mean_delta == 0.0);
  CHECK(same.left_shift == 0);
  CHECK(std::all_of(same.count_deltas.begin(), same.count_deltas.end(), [](long long d) { return d == 0; }));
  CHECK(std::all_of(same.density_deltas.begin(), same.density_deltas.end(), [](double d) { return d == 0.0; }));

  // a: cosines {0, 0, 1}, mean 1/3. b: a single pair at cosine 1.
  const auto b = diversity_from_embeddings({testing::basis(2, 0), testing::basis(2, 0)});
  const auto c = compare_datasets(a, b);
  CHECK(c.count_deltas[0] == 2);
  CHECK(c.count_deltas[19] == 0);
  CHECK(c.density_deltas[0] == doctest::Approx(2.0 / 3.0));
  CHECK(c.density_deltas[19] == doctest::Approx(1.0 / 3.0 - 1.0));
  CHECK(c.mean_delta == doctest::Approx(1.0 / 3.0 - 1.0));
  CHECK(c.left_shift == -1);
  CHECK(comparison_from_json(to_json(c)) == c);

  auto coarse = b;
  coarse.histogram = make_histogram(std::vector<double>{1.0}, 10);
  CHECK_THROWS_AS(compare_datasets(a, coarse), std::invalid_argument);
}

// --- indistinguishability ------------------------------------------------------

TEST_CASE("option label parsing") {
  const std::vector<std::string> labels{"A", "B", "C", "D"};
  CHECK(parse_option_label("C", labels) == 2u);
  CHECK(parse_option_label("  b \n", labels) == std::nullopt);
  CHECK(parse_option_label("Option D", labels) == 3u);
  CHECK(parse_option_label("I think option B is synthetic.", labels) == 1u);
  CHECK(parse_option_label("The answer is C, not A.", labels) == 2u);
  CHECK(parse_option_label("BAD", labels) == std::nullopt);
  CHECK(parse_option_label("none of them", labels) == std::nullopt);
}

TEST_CASE("trial placement is seeded and well formed") {
  for (std::size_t item = 0; item < 20; ++item) {
    const auto p = trial_placement(11, item, 1, 8, 4);
    CHECK(p.seed_indices.size() == 3);
    CHECK(p.synthetic_position < 4);
    CHECK(std::set<std::size_t>(p.seed_indices.begin(), p.seed_indices.end()).size() == 3);
    CHECK(*std::max_element(p.seed_indices.begin(), p.seed_indices.end()) < 8);
    const auto again = trial_placement(11, item, 1, 8, 4);
    CHECK(again.seed_indices == p.seed_indices);
    CHECK(again.synthetic_position == p.synthetic_position);
  }
}

TEST_CASE("a discriminator that always finds the synthetic entry gives IR 0") {
  const auto r = run_ir(testing::marker_discriminator("SYNTH"), ir_config());
  CHECK(r.trials == 30);
  CHECK(r.discriminator_correct == 30);
  CHECK(r.anomalies == 0);
  CHECK(r.ir == 0.0);
}

TEST_CASE("always answering the first option matches the hand count") {
  std::size_t first = 0;
  for (std::size_t item = 0; item < 10; ++item) {
    for (std::size_t trial = 0; trial < 3; ++trial) first += trial_placement(11, item, trial, 8, 4).synthetic_position == 0;
  }
  CHECK(first == kFirstPositionTrials);

  const auto r = run_ir(testing::constant_discriminator("A"), ir_config());
  CHECK(r.discriminator_correct == kFirstPositionTrials);
  CHECK(r.ir == doctest::Approx(1.0 - static_cast<double>(kFirstPositionTrials) / 30.0).epsilon(1e-15));
}

TEST_CASE("relabeling the options does not change IR") {
  const std::vector<std::string> relabeled{"W", "X", "Y", "Z"};
  CHECK(run_ir(testing::constant_discriminator("A"), ir_config()).ir ==
        run_ir(testing::constant_discriminator("W"), ir_config(relabeled)).ir);
  CHECK(run_ir(testing::marker_discriminator("SYNTH"), ir_config(relabeled)).ir == 0.0);
}

TEST_CASE("unparseable discriminator replies are anomalies") {
  MockScript s;
  s.rules.push_back({ModelRole::Discriminator, "", "", {"I cannot tell."}, {}});
  auto b = mock_backend(s);
  auto cfg = ir_config();
  const auto r = indistinguishability_rate(testing::synthetic_pairs(2), testing::make_seeds(3), *b.gateway, cfg);
  CHECK(r.trials == 6);
  CHECK(r.anomalies == 6);
  CHECK(r.discriminator_correct == 0);
  CHECK(r.ir == 1.0);
  CHECK(b.transport->request_count() == 12);  // one reprompt per trial
  CHECK(ir_report_from_json(to_json(r)) == r);
}

TEST_CASE("a reprompt can rescue a trial") {
  MockScript s;
  s.rules.push_back({ModelRole::Discriminator, "did not name an option", "", {"B"}, {}});
  s.rules.push_back({ModelRole::Discriminator, "", "", {"hmm"}, {}});
  auto b = mock_backend(s);
  const auto r = indistinguishability_rate(testing::synthetic_pairs(1), testing::make_seeds(3), *b.gateway, ir_config());
  CHECK(r.anomalies == 0);
  for (const auto& t : r.details) CHECK(t.answered_position == 1u);
}

TEST_CASE("indistinguishability input checks") {
  auto b = mock_backend(MockScript{});
  CHECK_THROWS_AS(indistinguishability_rate(testing::synthetic_pairs(1), testing::make_seeds(2), *b.gateway),
                  std::invalid_argument);
  CHECK_THROWS_AS(indistinguishability_rate({}, testing::make_seeds(5), *b.gateway), std::invalid_argument);
  auto cfg = ir_config();
  cfg.labels = {"A", "A", "B", "C"};
  CHECK_THROWS(cfg.validate());
  CHECK(ir_config_from_json(to_json(ir_config())).labels == ir_config().labels);
}

// --- generation ratio ------------------------------------------------------------

TEST_CASE("ratio arithmetic on known counts") {
  CHECK(ratio_from_counts(386, 13).percent() == 3.4);
  CHECK(ratio_from_counts(394, 303).percent() == 76.9);
  CHECK(ratio_from_counts(813, 273).percent() == 33.6);
  CHECK(ratio_from_counts(10, 0).percent() == 0.0);
  CHECK(format_percent(273.0 / 813.0) == "33.6%");
  CHECK(round_percent(0.12345) == 12.3);
  CHECK(round_percent(0.00005) == 0.0);
  CHECK(round_percent(0.1235) == 12.4);
}

TEST_CASE("chunking and model-pairing ratios") {
  // Only the percentages are known here; counts are chosen over 1000 to hit them.
  for (const auto& [kept, pct] : std::vector<std::pair<std::size_t, double>>{
           {254, 25.4}, {493, 49.3}, {215, 21.5}, {268, 26.8}, {492, 49.2}}) {
    CHECK(ratio_from_counts(1000, kept).percent() == pct);
  }
}

TEST_CASE("generation_ratio counts unique ids") {
  auto gen = candidates(813);
  std::vector<QAPair> kept(gen.begin(), gen.begin() + 273);
  const auto r = generation_ratio(gen, kept);
  CHECK(r.generated_total == 813);
  CHECK(r.retained_total == 273);
  CHECK(r.percent() == 33.6);

  std::reverse(gen.begin(), gen.end());
  std::rotate(kept.begin(), kept.begin() + 100, kept.end());
  CHECK(generation_ratio(gen, kept) == r);

  gen.push_back(gen.front());
  CHECK(generation_ratio(gen, kept) == r);
  CHECK(ratio_report_from_json(to_json(r)) == r);
}

TEST_CASE("generation_ratio errors") {
  CHECK_THROWS_AS(generation_ratio({}, {}), EmptyOutputError);
  CHECK_THROWS_AS(generation_ratio(candidates(3), {testing::refined_pair("elsewhere", "Q?", "A.")}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ratio_from_counts(0, 0), std::invalid_argument);
  CHECK_THROWS_AS(ratio_from_counts(3, 4), std::invalid_argument);
}

// --- reports -----------------------------------------------------------------------

TEST_CASE("report documents carry kind and version") {
  const json metrics{{"x", 1}};
  const auto doc = report_document("ratio", json{{"seed", 3}}, metrics);
  CHECK(doc.at("report") == "ratio");
  CHECK(doc.at("version") == kReportVersion);
  CHECK(doc.at("config").at("seed") == 3);
  CHECK(report_metrics(doc, "ratio") == metrics);
  CHECK_THROWS_AS(report_metrics(doc, "diversity"), IoError);
  auto old = doc;
  old["version"] = 99;
  CHECK_THROWS_AS(report_metrics(old, "ratio"), IoError);
}

TEST_CASE("diversity report round trip") {
  const auto r = diversity_from_embeddings({testing::random_unit(1, 8), testing::random_unit(2, 8),
                                            testing::random_unit(3, 8)});
  CHECK(diversity_report_from_json(to_json(r)) == r);
}

TEST_CASE("metric histograms cover scored pairs only") {
  auto a = testing::refined_pair("a", "Q?", "A.");
  MetricScores s;
  s.relevancy = 0.9;
  s.groundedness = 1.0;
  s.tele_specificity = 0.5;
  s.aspect_critic = 1;
  a.scores = s;
  const auto b = testing::refined_pair("b", "Q?", "A.");
  const auto h = metric_histograms({a, b});
  REQUIRE(h.count("relevancy"));
  CHECK(h.at("relevancy").total() == 1);
  CHECK(h.at("relevancy").counts[18] == 1);
  CHECK(h.at("tele_specificity").counts[10] == 1);
}
