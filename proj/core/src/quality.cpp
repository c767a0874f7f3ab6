#include "synthqa/quality.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "synthqa/hash.hpp"
#include "synthqa/parallel.hpp"
#include "synthqa/prompts.hpp"

namespace synthqa {

namespace {

constexpr double kGroundednessLevels[] = {0.0, 0.5, 1.0};
constexpr double kBinaryLevels[] = {0.0, 1.0};

bool is_alpha_like(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalpha(u) != 0 || c == '_' || u >= 0x80;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string allowed_list(std::span<const double> allowed) {
  std::string out;
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    if (i) out += i + 1 == allowed.size() ? " or " : ", ";
    out += fmt::format("{}", allowed[i]);
  }
  return out;
}

std::string judge_reply(Gateway& gateway, const std::vector<ChatMessage>& messages) {
  ChatRequest req;
  req.role = ModelRole::Judge;
  req.messages = messages;
  return gateway.chat(req).text;
}

}  // namespace

void FilterThresholds::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(groundedness_min_exclusive) || !in_unit(specificity_min_exclusive) ||
      !in_unit(relevancy_min_exclusive)) {
    throw ConfigError("filter thresholds must lie in [0, 1]");
  }
  if (aspect_required != 0 && aspect_required != 1) throw ConfigError("aspect_required must be 0 or 1");
}

json to_json(const FilterThresholds& t) {
  return json{{"groundedness_min_exclusive", t.groundedness_min_exclusive},
              {"aspect_required", t.aspect_required},
              {"specificity_min_exclusive", t.specificity_min_exclusive},
              {"relevancy_min_exclusive", t.relevancy_min_exclusive}};
}

FilterThresholds thresholds_from_json(const json& j) {
  FilterThresholds t;
  t.groundedness_min_exclusive = j.value("groundedness_min_exclusive", t.groundedness_min_exclusive);
  t.aspect_required = j.value("aspect_required", t.aspect_required);
  t.specificity_min_exclusive = j.value("specificity_min_exclusive", t.specificity_min_exclusive);
  t.relevancy_min_exclusive = j.value("relevancy_min_exclusive", t.relevancy_min_exclusive);
  t.validate();
  return t;
}

FilterDecision apply_filter(const MetricScores& s, const FilterThresholds& t) {
  FilterDecision d;
  if (!(s.groundedness > t.groundedness_min_exclusive)) d.reasons.emplace_back("groundedness");
  if (s.aspect_critic != t.aspect_required) d.reasons.emplace_back("aspect_critic");
  if (!(s.tele_specificity > t.specificity_min_exclusive)) d.reasons.emplace_back("tele_specificity");
  if (!(s.relevancy > t.relevancy_min_exclusive)) d.reasons.emplace_back("relevancy");
  d.retained = d.reasons.empty();
  return d;
}

std::optional<double> parse_score(std::string_view reply, std::span<const double> allowed) {
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
    if (i + 1 < reply.size() && reply[i] == '.' && std::isdigit(static_cast<unsigned char>(reply[i + 1]))) {
      ++i;
      while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
    }
    const bool glued_before = start > 0 && (is_alpha_like(reply[start - 1]) || reply[start - 1] == '.');
    const bool glued_after = i < reply.size() && is_alpha_like(reply[i]);
    if (glued_before || glued_after) continue;
    double value = 0.0;
    const auto token = reply.substr(start, i - start);
    if (std::from_chars(token.data(), token.data() + token.size(), value).ec != std::errc()) continue;
    for (double a : allowed) {
      if (std::abs(a - value) < 1e-12) return a;
    }
  }
  return std::nullopt;
}

std::vector<std::string> parse_alternative_questions(std::string_view reply) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    std::size_t eol = reply.find('\n', pos);
    if (eol == std::string_view::npos) eol = reply.size();
    std::string_view line = trim(reply.substr(pos, eol - pos));
    pos = eol + 1;
    if (!line.empty() && (line.front() == '-' || line.front() == '*')) {
      line = trim(line.substr(1));
    } else {
      std::size_t d = 0;
      while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
      if (d > 0 && d < line.size() && (line[d] == '.' || line[d] == ')')) line = trim(line.substr(d + 1));
    }
    if (!line.empty()) out.emplace_back(line);
  }
  return out;
}

double relevancy_from_cosines(std::span<const double> cosines) {
  if (cosines.empty()) return 0.0;
  double sum = 0.0;
  for (double c : cosines) sum += std::max(0.0, c);
  return std::min(1.0, sum / static_cast<double>(cosines.size()));
}

RelevancyResult response_relevancy(const QAPair& pair, std::size_t n, Gateway& gateway) {
  if (n == 0) throw std::invalid_argument("relevancy needs n >= 1");
  if (trim(pair.refined_answer).empty()) throw std::invalid_argument("pair " + pair.pair_id + " has no refined answer");
  RelevancyResult r;
  const std::string prompt =
      prompts::render("judge_relevancy", {{"n", std::to_string(n)}, {"answer", pair.refined_answer}});
  r.prompt_hash = sha256_hex(prompt);
  r.questions = parse_alternative_questions(judge_reply(gateway, {{"user", prompt}}));
  if (r.questions.size() > n) r.questions.resize(n);
  r.shortfall = n - r.questions.size();
  if (r.questions.empty()) {
    r.note = "relevancy: judge returned no parseable questions";
    return r;
  }
  if (r.shortfall > 0) {
    r.note = "relevancy: scored " + std::to_string(r.questions.size()) + " of " + std::to_string(n) + " questions";
  }
  std::vector<std::string> texts{pair.question};
  texts.insert(texts.end(), r.questions.begin(), r.questions.end());
  EmbeddingRequest req;
  req.texts = std::move(texts);
  const auto vectors = gateway.embed(req).vectors;
  for (std::size_t i = 1; i < vectors.size(); ++i) r.cosines.push_back(cosine(vectors[0], vectors[i]));
  r.score = relevancy_from_cosines(r.cosines);
  return r;
}

std::optional<JudgeScore> judge_score(Gateway& gateway, const std::string& prompt, std::span<const double> allowed) {
  JudgeScore s;
  s.prompt_hash = sha256_hex(prompt);
  std::vector<ChatMessage> messages{{"user", prompt}};
  const std::string first = judge_reply(gateway, messages);
  s.calls = 1;
  if (auto v = parse_score(first, allowed)) {
    s.value = *v;
    return s;
  }
  messages.push_back({"assistant", first});
  messages.push_back({"user", prompts::render("score_reminder", {{"allowed", allowed_list(allowed)}})});
  const std::string second = judge_reply(gateway, messages);
  s.calls = 2;
  if (auto v = parse_score(second, allowed)) {
    s.value = *v;
    return s;
  }
  return std::nullopt;
}

std::optional<JudgeScore> response_groundedness(const QAPair& pair, const std::vector<std::string>& contexts,
                                                Gateway& gateway) {
  const std::string prompt = prompts::render("judge_groundedness", {{"question", pair.question},
                                                                    {"answer", pair.refined_answer},
                                                                    {"context", prompts::format_passages(contexts)}});
  return judge_score(gateway, prompt, kGroundednessLevels);
}

std::optional<SpecificityResult> tele_specificity(const QAPair& pair, const std::vector<std::string>& contexts,
                                                  Gateway& gateway) {
  const std::string context = prompts::format_passages(contexts);
  auto q = judge_score(gateway,
                       prompts::render("judge_question_specificity", {{"question", pair.question}, {"context", context}}),
                       kBinaryLevels);
  if (!q) return std::nullopt;
  auto r = judge_score(gateway,
                       prompts::render("judge_response_specificity",
                                       {{"question", pair.question}, {"answer", pair.refined_answer}, {"context", context}}),
                       kBinaryLevels);
  if (!r) return std::nullopt;
  return SpecificityResult{*q, *r};
}

std::optional<JudgeScore> aspect_critic(const QAPair& pair, const std::vector<std::string>& contexts,
                                        Gateway& gateway) {
  const std::string prompt = prompts::render(
      "judge_aspect_critic", {{"question", pair.question}, {"context", prompts::format_passages(contexts)}});
  return judge_score(gateway, prompt, kBinaryLevels);
}

QAPair evaluate_pair(QAPair pair, const std::vector<std::string>& contexts, Gateway& gateway, const EvalConfig& cfg) {
  if (pair.stage() != Stage::Refined) return pair;
  MetricScores s;
  std::vector<std::string> unscorable;
  try {
    const auto rel = response_relevancy(pair, cfg.relevancy_n, gateway);
    s.relevancy = rel.score;
    s.prompt_hashes["relevancy"] = rel.prompt_hash;
    if (!rel.note.empty()) s.notes.push_back(rel.note);

    if (auto g = response_groundedness(pair, contexts, gateway)) {
      s.groundedness = g->value;
      s.prompt_hashes["groundedness"] = g->prompt_hash;
    } else {
      unscorable.emplace_back("groundedness");
    }
    if (auto t = tele_specificity(pair, contexts, gateway)) {
      s.question_specificity = t->question.value;
      s.response_specificity = t->response.value;
      s.tele_specificity = t->combined();
      s.prompt_hashes["question_specificity"] = t->question.prompt_hash;
      s.prompt_hashes["response_specificity"] = t->response.prompt_hash;
    } else {
      unscorable.emplace_back("tele_specificity");
    }
    if (auto a = aspect_critic(pair, contexts, gateway)) {
      s.aspect_critic = static_cast<int>(a->value);
      s.prompt_hashes["aspect_critic"] = a->prompt_hash;
    } else {
      unscorable.emplace_back("aspect_critic");
    }
  } catch (const GatewayError& e) {
    spdlog::warn("evaluate: pair {} judge call failed: {}", pair.pair_id, e.what());
    s.notes.push_back(std::string("judge failed: ") + std::string(to_string(e.kind())));
    pair.scores = std::move(s);
    pair.reject({"judge failed"});
    return pair;
  }

  pair.provenance.judge_model = gateway.endpoint(ModelRole::Judge).model_name;
  for (const auto& m : unscorable) s.notes.push_back("unscorable: " + m);
  pair.scores = std::move(s);
  pair.advance(Stage::Scored);
  if (!unscorable.empty()) {
    pair.reject({"unscorable"});
    return pair;
  }
  const auto decision = apply_filter(*pair.scores, cfg.thresholds);
  if (decision.retained) {
    pair.advance(Stage::Retained);
  } else {
    pair.reject(decision.reasons);
  }
  return pair;
}

std::vector<QAPair> evaluate_pairs(std::vector<QAPair> pairs, const Retriever& retriever, Gateway& gateway,
                                   const EvalConfig& cfg) {
  cfg.thresholds.validate();
  parallel_for(pairs.size(), cfg.workers, [&](std::size_t i) {
    if (pairs[i].stage() != Stage::Refined) return;
    std::vector<std::string> contexts;
    for (const auto& id : pairs[i].grounding.refine) contexts.push_back(retriever.text_of(id));
    pairs[i] = evaluate_pair(std::move(pairs[i]), contexts, gateway, cfg);
  });
  return pairs;
}

std::vector<QAPair> retained_pairs(const std::vector<QAPair>& scored, const FilterThresholds& thresholds) {
  std::vector<QAPair> out;
  for (QAPair p : scored) {
    if (p.stage() == Stage::Scored && p.scores) {
      const auto d = apply_filter(*p.scores, thresholds);
      if (d.retained) {
        p.advance(Stage::Retained);
      } else {
        p.reject(d.reasons);
      }
    }
    if (p.stage() == Stage::Retained) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace synthqa
