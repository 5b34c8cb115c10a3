#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <thread>

#include <httplib.h>

#include "flowrl/common/rng.hpp"
#include "flowrl/rewardkit/judge.hpp"
#include "flowrl/rewardkit/prompt.hpp"
#include "flowrl/rewardkit/score.hpp"

using namespace flowrl;
using namespace flowrl::reward;

namespace {

ScorePair sc(double a, double b) { return {{a, b}, Dimension::kSC}; }
ScorePair pq(double a, double b) { return {{a, b}, Dimension::kPQ}; }

JudgeClientConfig fast_cfg(int k = 4) {
  JudgeClientConfig c;
  c.ensemble.k = k;
  c.backoff = std::chrono::milliseconds(1);
  return c;
}

const EditTriplet kTriplet{"make the sky purple", "inputs/0001.png", "outputs/0001_a.png"};

}  // namespace

TEST(FinalScore, GeometricMeanOfMinAggregates) {
  EXPECT_NEAR(final_score(sc(16, 16), pq(25, 25)), 20.0, 1e-12);
  EXPECT_NEAR(final_score(sc(20, 10), pq(15, 25)), 12.2474487139, 1e-9);
  EXPECT_NEAR(final_score(sc(20, 20), pq(25, 25)), std::sqrt(20.0 * 25.0), 1e-12);
  EXPECT_NEAR(final_score(sc(20, 10), pq(25, 16)), std::sqrt(10.0 * 16.0), 1e-12);
  EXPECT_NEAR(final_score(sc(20, 10), pq(25, 16), SubAggregator::kMean), std::sqrt(15.0 * 20.5), 1e-12);
  EXPECT_EQ(final_score(sc(0, 20), pq(25, 25)), 0.0);
  EXPECT_THROW(final_score(sc(26, 20), pq(25, 25)), ValidationError);
  EXPECT_THROW(final_score(sc(-1, 20), pq(25, 25)), ValidationError);
  EXPECT_NO_THROW(final_score(sc(10, 10), pq(10, 10), SubAggregator::kMin, 10.0));
  EXPECT_DOUBLE_EQ(normalize_to_ten(12.5, 25.0), 5.0);
}

TEST(FinalScore, SymmetricAndMonotone) {
  auto eng = make_engine(1);
  std::uniform_real_distribution<double> u(0, 25);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(eng), b = u(eng), c = u(eng), d = u(eng);
    const double f = final_score(sc(a, b), pq(c, d));
    EXPECT_NEAR(f, final_score(sc(c, d), pq(a, b)), 1e-12);
    const double bump = std::min(25.0, a + u(eng) / 5);
    EXPECT_GE(final_score(sc(bump, b), pq(c, d)), f);
  }
}

TEST(Ensemble, MeanMedianAndBounds) {
  const std::vector<double> xs{3, 9, 4, 1};
  EXPECT_DOUBLE_EQ(self_ensemble(xs, {4, EnsembleAggregator::kMean}), 17.0 / 4);
  EXPECT_DOUBLE_EQ(self_ensemble(xs, {4, EnsembleAggregator::kMedian}), 3.5);
  EXPECT_DOUBLE_EQ(self_ensemble(std::vector<double>{10, 20}, {2, EnsembleAggregator::kMean}), 15.0);
  EXPECT_DOUBLE_EQ(self_ensemble(std::vector<double>{7.5}, {1, EnsembleAggregator::kMean}), 7.5);
  EXPECT_THROW(self_ensemble(std::vector<double>{}), ValidationError);
  auto eng = make_engine(2);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v;
    for (int j = 0; j < 1 + i % 9; ++j) v.push_back(std::uniform_real_distribution<double>(0, 25)(eng));
    const double m = self_ensemble(v);
    EXPECT_GE(m, *std::min_element(v.begin(), v.end()) - 1e-12);
    EXPECT_LE(m, *std::max_element(v.begin(), v.end()) + 1e-12);
    auto w = v;
    std::shuffle(w.begin(), w.end(), eng);
    EXPECT_NEAR(self_ensemble(w), m, 1e-12);
  }
  EnsembleConfig c;
  EXPECT_EQ(c.k, 4);
  c.k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Prompt, SemanticConsistencyTemplate) {
  JudgeRequest r{"remove the cat", "in.png", "out.png", Dimension::kSC};
  const auto p = build_prompt(r);
  EXPECT_NE(p.find("Editing instruction: remove the cat"), std::string::npos);
  EXPECT_NE(p.find("From scale 0 to 25"), std::string::npos);
  EXPECT_NE(p.find("\"reasoning\""), std::string::npos);
}

TEST(Prompt, PerceptualQualityTemplate) {
  JudgeRequest r{"", "", "out.png", Dimension::kPQ};
  const auto p = build_prompt(r);
  EXPECT_NE(p.find("naturalness"), std::string::npos);
  EXPECT_NE(p.find("artifacts"), std::string::npos);
  EXPECT_NE(p.find("output score = [naturalness, artifacts]"), std::string::npos);
  EXPECT_EQ(p.find("Editing instruction:"), std::string::npos);
}

TEST(Prompt, RangeSubstitutionAndFormat) {
  JudgeRequest r{"x", "a", "b", Dimension::kSC, 10.0};
  EXPECT_NE(build_prompt(r).find("scale 0 to 10"), std::string::npos);
  EXPECT_EQ(build_prompt(r).find("scale 0 to 25"), std::string::npos);
  r.output_format = OutputFormat::kScoreOnly;
  EXPECT_EQ(system_prompt(r.output_format).find("reasoning"), std::string::npos);
}

TEST(Parse, Examples) {
  const auto a = parse_response(R"({"reasoning":"ok","score":[20,18]})");
  EXPECT_EQ(a.reasoning, "ok");
  EXPECT_EQ(a.scores.sub[0], 20);
  EXPECT_EQ(a.scores.sub[1], 18);
  const auto b = parse_response("Sure.\n```json\n{\"reasoning\":\"ok\",\"score\":[20,18]}\n```\nDone.");
  EXPECT_EQ(b.reasoning, a.reasoning);
  EXPECT_EQ(b.scores, a.scores);
  try {
    parse_response(R"({"score":[20]})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.raw(), R"({"score":[20]})");
  }
  EXPECT_THROW(parse_response("no json here"), ParseError);
  EXPECT_THROW(parse_response(R"({"score":["a", 2]})"), ParseError);
  EXPECT_THROW(parse_response(R"({"score":[30, 2]})"), ValidationError);
  EXPECT_NO_THROW(parse_response(R"({"score":[9, 2]})", Dimension::kSC, 10.0));
  // Braces inside the reasoning string do not confuse extraction.
  EXPECT_EQ(parse_response(R"(x {"reasoning":"a } b {","score":[1,2]} y)").reasoning, "a } b {");
}

TEST(Parse, RenderRoundTrip) {
  auto eng = make_engine(3);
  const std::vector<std::string> texts{"", "plain", "quotes \" and \\ slashes", "unicode \xC3\xA9", "{braces}"};
  for (int i = 0; i < 200; ++i) {
    const std::string reason = texts[static_cast<std::size_t>(i) % texts.size()];
    const ScorePair s = sc(std::uniform_real_distribution<double>(0, 25)(eng), 25.0 * (i % 2));
    const auto back = parse_response(render_response(reason, s));
    EXPECT_EQ(back.reasoning, reason);
    EXPECT_EQ(back.scores, s);
  }
}

TEST(ChatRequest, Structure) {
  auto cfg = fast_cfg();
  const auto sc_req = build_chat_request({"x", "in.png", "out.png", Dimension::kSC}, cfg);
  EXPECT_EQ(sc_req["model"], "editscore");
  EXPECT_DOUBLE_EQ(sc_req["temperature"].get<double>(), 1.0);
  ASSERT_EQ(sc_req["messages"].size(), 2u);
  EXPECT_EQ(sc_req["messages"][0]["role"], "system");
  const auto& parts = sc_req["messages"][1]["content"];
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[1]["image_url"]["url"], "in.png");
  EXPECT_EQ(parts[2]["image_url"]["url"], "out.png");
  const auto pq_req = build_chat_request({"x", "in.png", "out.png", Dimension::kPQ}, cfg);
  ASSERT_EQ(pq_req["messages"][1]["content"].size(), 2u);
  EXPECT_EQ(pq_req["messages"][1]["content"][1]["image_url"]["url"], "out.png");
  EXPECT_THROW(response_content(nlohmann::json::object()), ParseError);
}

TEST(ScoreEdit, FixedMockReproducesGeometricMean) {
  for (int k : {1, 2, 4, 8}) {
    auto mock = MockJudgeTransport::fixed(sc(20, 20), pq(25, 25));
    const auto r = score_edit(mock, kTriplet, fast_cfg(k));
    EXPECT_NEAR(r.final, 22.360679774997898, 1e-9);
    EXPECT_EQ(static_cast<int>(r.passes.size()), k);
    EXPECT_EQ(mock.calls(), 2 * k);
    EXPECT_EQ(r.excluded_passes, 0);
  }
}

TEST(ScoreEdit, MockSeesTemperatureAndDimensions) {
  std::atomic<int> sc_calls{0}, pq_calls{0};
  MockJudgeTransport mock([&](const MockCall& c) {
    EXPECT_DOUBLE_EQ(c.temperature, 1.0);
    if (c.dimension == Dimension::kSC) {
      ++sc_calls;
      EXPECT_NE(c.user_text.find("Editing instruction: make the sky purple"), std::string::npos);
      return render_response("", sc(16, 9));
    }
    ++pq_calls;
    return render_response("", pq(25, 4));
  });
  const auto r = score_edit(mock, kTriplet, fast_cfg(4));
  EXPECT_EQ(sc_calls.load(), 4);
  EXPECT_EQ(pq_calls.load(), 4);
  EXPECT_NEAR(r.final, std::sqrt(9.0 * 4.0), 1e-12);
}

TEST(ScoreEdit, RetriesParseFailuresThenSucceeds) {
  // The first two replies are garbage; R = 3 allows the third to land.
  auto cfg = fast_cfg(1);
  cfg.max_in_flight = 1;
  cfg.max_parse_retries = 3;
  MockJudgeTransport mock([](const MockCall& c) -> std::string {
    if (c.index < 2) return "I cannot answer that";
    return c.dimension == Dimension::kSC ? render_response("", sc(20, 20)) : render_response("", pq(25, 25));
  });
  const auto r = score_edit(mock, kTriplet, cfg);
  EXPECT_EQ(r.retried_passes, 1);
  EXPECT_EQ(r.parse_retries, 2);
  EXPECT_EQ(r.excluded_passes, 0);
  EXPECT_NEAR(r.final, std::sqrt(500.0), 1e-9);
}

TEST(ScoreEdit, ExcludesPassesThatNeverParse) {
  auto cfg = fast_cfg(4);
  cfg.max_parse_retries = 2;
  // Pass membership is not visible to the mock, so fail by content: SC replies
  // alternate between good and bad per call index and PQ always succeeds. We
  // instead make exactly one SC job always fail by keying on call order with
  // a single worker.
  cfg.max_in_flight = 1;
  MockJudgeTransport mock([](const MockCall& c) -> std::string {
    // Jobs run in order SC0, PQ0, SC1, ...; SC0 consumes calls 0..2 (1 + 2 retries).
    if (c.index <= 2) return "garbage";
    return c.dimension == Dimension::kSC ? render_response("", sc(10, 10)) : render_response("", pq(10, 10));
  });
  const auto r = score_edit(mock, kTriplet, cfg);
  EXPECT_EQ(r.excluded_passes, 1);
  EXPECT_EQ(r.passes.size(), 3u);
  EXPECT_NEAR(r.final, 10.0, 1e-12);

  MockJudgeTransport never([](const MockCall&) { return std::string("nope"); });
  EXPECT_THROW(score_edit(never, kTriplet, cfg), ScoringError);
}

TEST(ScoreEdit, TransportRetriesWithBackoffThenFails) {
  auto cfg = fast_cfg(1);
  cfg.max_in_flight = 1;
  cfg.max_transport_retries = 2;
  MockJudgeTransport flaky([](const MockCall& c) -> std::string {
    if (c.index == 0) throw TransportError("connection reset");
    return c.dimension == Dimension::kSC ? render_response("", sc(20, 20)) : render_response("", pq(25, 25));
  });
  const auto r = score_edit(flaky, kTriplet, cfg);
  EXPECT_EQ(r.transport_retries, 1);
  EXPECT_NEAR(r.final, std::sqrt(500.0), 1e-9);

  MockJudgeTransport down([](const MockCall&) -> std::string { throw TransportError("down"); });
  EXPECT_THROW(score_edit(down, kTriplet, cfg), TransportError);
  EXPECT_EQ(down.calls(), 6);  // SC and PQ each: first try + 2 retries
}

namespace {

// Counts concurrent requests; sleeps so overlapping calls actually overlap.
class CountingTransport : public JudgeTransport {
 public:
  nlohmann::json complete(const nlohmann::json& req) override {
    const int now = ++in_flight_;
    int prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --in_flight_;
    const bool is_sc = req["messages"][1]["content"][0]["text"].get<std::string>().find("Editing instruction") !=
                       std::string::npos;
    const auto content = is_sc ? render_response("", sc(20, 20)) : render_response("", pq(25, 25));
    return {{"choices", {{{"message", {{"content", content}}}}}}};
  }
  int peak() const { return peak_.load(); }

 private:
  std::atomic<int> in_flight_{0}, peak_{0};
};

}  // namespace

TEST(ScoreEdit, RespectsInFlightCap) {
  for (int cap : {1, 3}) {
    CountingTransport t;
    auto cfg = fast_cfg(4);
    cfg.max_in_flight = cap;
    const auto r = score_edit(t, kTriplet, cfg);
    EXPECT_LE(t.peak(), cap);
    EXPECT_NEAR(r.final, std::sqrt(500.0), 1e-9);
  }
}

TEST(JudgeConfig, JsonAndValidation) {
  JudgeClientConfig c;
  c.temperature = 0.7;
  c.ensemble.aggregator = EnsembleAggregator::kMedian;
  nlohmann::json j = c;
  const auto back = j.get<JudgeClientConfig>();
  EXPECT_DOUBLE_EQ(back.temperature, 0.7);
  EXPECT_EQ(back.ensemble.aggregator, EnsembleAggregator::kMedian);
  EXPECT_EQ(back.ensemble.k, 4);
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(HttpTransport, TalksToChatCompletionsEndpoint) {
  httplib::Server srv;
  std::string seen_auth;
  nlohmann::json seen_body;
  srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = nlohmann::json::parse(req.body);
    const bool is_sc = req.body.find("Editing instruction") != std::string::npos;
    const auto content = is_sc ? render_response("r", sc(20, 20)) : render_response("r", pq(25, 25));
    res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(), "application/json");
  });
  srv.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  HttpJudgeTransport t("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "secret");
  auto cfg = fast_cfg(2);
  const auto r = score_edit(t, kTriplet, cfg);
  EXPECT_NEAR(r.final, std::sqrt(500.0), 1e-9);
  EXPECT_EQ(seen_auth, "Bearer secret");
  EXPECT_EQ(seen_body["model"], "editscore");

  HttpJudgeTransport bad("http://127.0.0.1:" + std::to_string(port) + "/fail", "");
  EXPECT_THROW(bad.complete(nlohmann::json::object()), TransportError);
  EXPECT_THROW(HttpJudgeTransport("not a url", ""), ConfigError);

  srv.stop();
  th.join();
}
