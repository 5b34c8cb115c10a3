#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrl/common/error.hpp"
#include "flowrl/rewardkit/prompt.hpp"
#include "flowrl/rewardkit/score.hpp"

namespace flowrl::reward {

class TransportError : public Error {
 public:
  using Error::Error;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

/// One evaluation pass: both dimensions scored and combined.
struct ScoreRecord {
  std::string reasoning;  // SC reasoning, then PQ reasoning
  ScorePair sc{{0, 0}, Dimension::kSC};
  ScorePair pq{{0, 0}, Dimension::kPQ};
  double final = 0.0;
  double range_max = 25.0;
};

/// K passes combined with self_ensemble over the per-pass finals.
struct EnsembledScore {
  double final = 0.0;
  double range_max = 25.0;
  int k_requested = 0;
  std::vector<ScoreRecord> passes;  // kept passes only
  int excluded_passes = 0;
  int retried_passes = 0;  // passes that needed at least one parse retry
  int parse_retries = 0;   // total parse retries over all passes
  int transport_retries = 0;
};

void to_json(nlohmann::json& j, const ScoreRecord& r);
void from_json(const nlohmann::json& j, ScoreRecord& r);
void to_json(nlohmann::json& j, const EnsembledScore& r);

/// Sends a chat-completions request body and returns the response body.
/// Implementations throw TransportError on connection or HTTP failure.
class JudgeTransport {
 public:
  virtual ~JudgeTransport() = default;
  virtual nlohmann::json complete(const nlohmann::json& request) = 0;
};

/// POSTs to an OpenAI-compatible /chat/completions endpoint.
class HttpJudgeTransport : public JudgeTransport {
 public:
  /// endpoint: full URL, e.g. http://localhost:8000/v1/chat/completions
  HttpJudgeTransport(std::string endpoint, std::string api_key,
                     std::chrono::seconds timeout = std::chrono::seconds(120));

  /// Reads JUDGE_ENDPOINT and JUDGE_API_KEY; throws ConfigError if the endpoint is unset.
  static HttpJudgeTransport from_env();

  nlohmann::json complete(const nlohmann::json& request) override;

 private:
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

/// What the in-process mock sees for each call.
struct MockCall {
  int index = 0;  // 0-based call counter across the mock's lifetime
  Dimension dimension = Dimension::kSC;
  std::string user_text;
  double temperature = 0.0;
};

/// Deterministic in-process implementation of the same request/response
/// contract. The handler returns the assistant message content or throws
/// TransportError to simulate a failed request.
class MockJudgeTransport : public JudgeTransport {
 public:
  using Handler = std::function<std::string(const MockCall&)>;

  explicit MockJudgeTransport(Handler handler);

  /// Always answers with the given sub-scores.
  static MockJudgeTransport fixed(ScorePair sc, ScorePair pq);

  nlohmann::json complete(const nlohmann::json& request) override;
  int calls() const { return calls_.load(); }

 private:
  Handler handler_;
  std::mutex mu_;
  std::atomic<int> calls_{0};
};

struct JudgeClientConfig {
  std::string model = "editscore";
  double temperature = 1.0;  // > 0 so ensemble passes are stochastic
  double range_max = 25.0;
  OutputFormat output_format = OutputFormat::kReasoningThenScore;
  SubAggregator sub_aggregator = SubAggregator::kMin;
  EnsembleConfig ensemble{};
  int max_parse_retries = 3;      // R: re-asks after an unparseable reply
  int max_transport_retries = 3;  // re-sends after a transport failure
  std::chrono::milliseconds backoff{200};  // doubled on every transport retry
  int max_in_flight = 4;

  void validate() const;
};

void to_json(nlohmann::json& j, const JudgeClientConfig& c);
void from_json(const nlohmann::json& j, JudgeClientConfig& c);

struct EditTriplet {
  std::string instruction;
  std::string input_ref;
  std::string output_ref;
};

/// Chat-completions body: system message with the base context, user message
/// with the rubric text and image parts (input then output for SC, output only
/// for PQ).
nlohmann::json build_chat_request(const JudgeRequest& req, const JudgeClientConfig& cfg);

/// Extracts choices[0].message.content.
std::string response_content(const nlohmann::json& response);

/// Runs K passes of SC and PQ scoring, at most max_in_flight requests at a
/// time. A reply that fails to parse is re-requested up to max_parse_retries
/// times; a pass that still fails is excluded, never filled in. Throws
/// ScoringError when every pass is excluded and TransportError when a request
/// keeps failing after its retries.
EnsembledScore score_edit(JudgeTransport& transport, const EditTriplet& triplet, const JudgeClientConfig& cfg);

}  // namespace flowrl::reward
