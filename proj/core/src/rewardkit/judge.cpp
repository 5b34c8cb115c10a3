#include "flowrl/rewardkit/judge.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <thread>

#include <httplib.h>

namespace flowrl::reward {

using nlohmann::json;

void to_json(json& j, const ScoreRecord& r) {
  j = json{{"reasoning", r.reasoning},
           {"sc", {r.sc.sub[0], r.sc.sub[1]}},
           {"pq", {r.pq.sub[0], r.pq.sub[1]}},
           {"final", r.final},
           {"range_max", r.range_max}};
}

void from_json(const json& j, ScoreRecord& r) {
  r.reasoning = j.value("reasoning", std::string());
  const auto sc = j.at("sc").get<std::vector<double>>();
  const auto pq = j.at("pq").get<std::vector<double>>();
  if (sc.size() != 2 || pq.size() != 2) throw ValidationError("score record: sc and pq need two sub-scores");
  r.sc = {{sc[0], sc[1]}, Dimension::kSC};
  r.pq = {{pq[0], pq[1]}, Dimension::kPQ};
  r.final = j.at("final").get<double>();
  r.range_max = j.value("range_max", 25.0);
}

void to_json(json& j, const EnsembledScore& r) {
  j = json{{"final", r.final},
           {"range_max", r.range_max},
           {"k_requested", r.k_requested},
           {"passes", r.passes},
           {"excluded_passes", r.excluded_passes},
           {"retried_passes", r.retried_passes},
           {"parse_retries", r.parse_retries},
           {"transport_retries", r.transport_retries}};
}

// --- HTTP transport -------------------------------------------------------

HttpJudgeTransport::HttpJudgeTransport(std::string endpoint, std::string api_key, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("judge endpoint must be a full URL: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  base_ = endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
}

HttpJudgeTransport HttpJudgeTransport::from_env() {
  const char* ep = std::getenv("JUDGE_ENDPOINT");
  if (!ep || !*ep) throw ConfigError("JUDGE_ENDPOINT is not set");
  const char* key = std::getenv("JUDGE_API_KEY");
  return HttpJudgeTransport(ep, key ? key : "");
}

json HttpJudgeTransport::complete(const json& request) {
  httplib::Client cli(base_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(path_, headers, request.dump(), "application/json");
  if (!res) throw TransportError("judge endpoint " + base_ + path_ + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw TransportError("judge endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
  auto body = json::parse(res->body, nullptr, false);
  if (body.is_discarded()) throw TransportError("judge endpoint returned a non-JSON body");
  return body;
}

// --- mock transport -------------------------------------------------------

MockJudgeTransport::MockJudgeTransport(Handler handler) : handler_(std::move(handler)) {}

MockJudgeTransport MockJudgeTransport::fixed(ScorePair sc, ScorePair pq) {
  return MockJudgeTransport([sc, pq](const MockCall& call) {
    return call.dimension == Dimension::kSC ? render_response("mock semantic consistency", sc)
                                            : render_response("mock perceptual quality", pq);
  });
}

json MockJudgeTransport::complete(const json& request) {
  MockCall call;
  for (const auto& m : request.at("messages")) {
    if (m.at("role") != "user") continue;
    for (const auto& part : m.at("content"))
      if (part.at("type") == "text") call.user_text += part.at("text").get<std::string>();
  }
  call.dimension = call.user_text.find("Editing instruction:") != std::string::npos ? Dimension::kSC : Dimension::kPQ;
  call.temperature = request.value("temperature", 0.0);
  std::string content;
  {
    std::lock_guard lock(mu_);
    call.index = calls_++;
    content = handler_(call);
  }
  return json{{"object", "chat.completion"},
              {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}};
}

// --- client ---------------------------------------------------------------

void JudgeClientConfig::validate() const {
  ensemble.validate();
  if (!(temperature > 0.0)) throw ConfigError("judge: temperature must be > 0 so ensemble passes differ");
  if (!(range_max > 0.0)) throw ConfigError("judge: range_max must be positive");
  if (max_parse_retries < 0 || max_transport_retries < 0) throw ConfigError("judge: retry counts must be >= 0");
  if (max_in_flight < 1) throw ConfigError("judge: max_in_flight must be >= 1");
}

void to_json(json& j, const JudgeClientConfig& c) {
  j = json{{"model", c.model},
           {"temperature", c.temperature},
           {"range_max", c.range_max},
           {"output_format", c.output_format == OutputFormat::kReasoningThenScore ? "reasoning_then_score" : "score_only"},
           {"sub_aggregator", c.sub_aggregator == SubAggregator::kMin ? "min" : "mean"},
           {"ensemble", c.ensemble},
           {"max_parse_retries", c.max_parse_retries},
           {"max_transport_retries", c.max_transport_retries},
           {"backoff_ms", c.backoff.count()},
           {"max_in_flight", c.max_in_flight}};
}

void from_json(const json& j, JudgeClientConfig& c) {
  JudgeClientConfig d;
  c.model = j.value("model", d.model);
  c.temperature = j.value("temperature", d.temperature);
  c.range_max = j.value("range_max", d.range_max);
  const auto fmt = j.value("output_format", std::string("reasoning_then_score"));
  if (fmt == "reasoning_then_score") {
    c.output_format = OutputFormat::kReasoningThenScore;
  } else if (fmt == "score_only") {
    c.output_format = OutputFormat::kScoreOnly;
  } else {
    throw ConfigError("judge: unknown output_format '" + fmt + "'");
  }
  const auto agg = j.value("sub_aggregator", std::string("min"));
  if (agg != "min" && agg != "mean") throw ConfigError("judge: sub_aggregator must be 'min' or 'mean'");
  c.sub_aggregator = agg == "min" ? SubAggregator::kMin : SubAggregator::kMean;
  c.ensemble = j.contains("ensemble") ? j.at("ensemble").get<EnsembleConfig>() : d.ensemble;
  c.max_parse_retries = j.value("max_parse_retries", d.max_parse_retries);
  c.max_transport_retries = j.value("max_transport_retries", d.max_transport_retries);
  c.backoff = std::chrono::milliseconds(j.value("backoff_ms", static_cast<long>(d.backoff.count())));
  c.max_in_flight = j.value("max_in_flight", d.max_in_flight);
}

json build_chat_request(const JudgeRequest& req, const JudgeClientConfig& cfg) {
  json user_content = json::array();
  user_content.push_back({{"type", "text"}, {"text", user_prompt(req)}});
  if (req.dimension == Dimension::kSC)
    user_content.push_back({{"type", "image_url"}, {"image_url", {{"url", req.input_ref}}}});
  user_content.push_back({{"type", "image_url"}, {"image_url", {{"url", req.output_ref}}}});
  return json{{"model", cfg.model},
              {"temperature", cfg.temperature},
              {"messages",
               {{{"role", "system"}, {"content", system_prompt(req.output_format)}},
                {{"role", "user"}, {"content", user_content}}}}};
}

std::string response_content(const json& response) {
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw ParseError("judge response: missing choices[0].message.content", response.dump());
  }
}

namespace {

struct DimensionOutcome {
  std::optional<ParsedResponse> parsed;
  int parse_retries = 0;
  int transport_retries = 0;
  std::exception_ptr transport_failure;
};

DimensionOutcome score_dimension(JudgeTransport& transport, const JudgeRequest& req, const JudgeClientConfig& cfg) {
  DimensionOutcome out;
  const json body = build_chat_request(req, cfg);
  for (int attempt = 0; attempt <= cfg.max_parse_retries; ++attempt) {
    if (attempt > 0) ++out.parse_retries;
    json response;
    for (int t = 0;; ++t) {
      try {
        response = transport.complete(body);
        break;
      } catch (const TransportError&) {
        if (t >= cfg.max_transport_retries) {
          out.transport_failure = std::current_exception();
          return out;
        }
        ++out.transport_retries;
        std::this_thread::sleep_for(cfg.backoff * (1 << t));
      }
    }
    try {
      out.parsed = parse_response(response_content(response), req.dimension, req.range_max);
      return out;
    } catch (const ParseError&) {
    } catch (const ValidationError&) {
    }
  }
  return out;
}

}  // namespace

EnsembledScore score_edit(JudgeTransport& transport, const EditTriplet& triplet, const JudgeClientConfig& cfg) {
  cfg.validate();
  const int K = cfg.ensemble.k;
  // Job 2p is pass p's SC request, job 2p+1 its PQ request.
  std::vector<JudgeRequest> jobs;
  for (int p = 0; p < K; ++p) {
    for (auto dim : {Dimension::kSC, Dimension::kPQ}) {
      jobs.push_back({triplet.instruction, triplet.input_ref, triplet.output_ref, dim, cfg.range_max,
                      cfg.output_format});
    }
  }
  std::vector<DimensionOutcome> results(jobs.size());
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= jobs.size()) return;
        i = next++;
      }
      results[i] = score_dimension(transport, jobs[i], cfg);
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), jobs.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  EnsembledScore out;
  out.range_max = cfg.range_max;
  out.k_requested = K;
  std::vector<double> finals;
  for (int p = 0; p < K; ++p) {
    auto& sc = results[static_cast<std::size_t>(2 * p)];
    auto& pq = results[static_cast<std::size_t>(2 * p + 1)];
    for (auto* r : {&sc, &pq}) {
      if (r->transport_failure) std::rethrow_exception(r->transport_failure);
      out.parse_retries += r->parse_retries;
      out.transport_retries += r->transport_retries;
    }
    if (sc.parse_retries + pq.parse_retries > 0) ++out.retried_passes;
    if (!sc.parsed || !pq.parsed) {
      ++out.excluded_passes;
      continue;
    }
    ScoreRecord rec;
    rec.sc = sc.parsed->scores;
    rec.pq = pq.parsed->scores;
    rec.reasoning = sc.parsed->reasoning + (pq.parsed->reasoning.empty() ? "" : "\n" + pq.parsed->reasoning);
    rec.range_max = cfg.range_max;
    rec.final = final_score(rec.sc, rec.pq, cfg.sub_aggregator, cfg.range_max);
    finals.push_back(rec.final);
    out.passes.push_back(std::move(rec));
  }
  if (finals.empty())
    throw ScoringError("score_edit: all " + std::to_string(K) + " passes were excluded after parse failures");
  out.final = self_ensemble(finals, cfg.ensemble);
  return out;
}

}  // namespace flowrl::reward
