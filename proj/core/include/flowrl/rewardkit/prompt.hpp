#pragma once

#include <string>
#include <utility>

#include "flowrl/rewardkit/score.hpp"

namespace flowrl::reward {

enum class OutputFormat { kReasoningThenScore, kScoreOnly };

struct JudgeRequest {
  std::string instruction;
  std::string input_ref;   // source image reference (path, URL or opaque id)
  std::string output_ref;  // edited image reference
  Dimension dimension = Dimension::kSC;
  double range_max = 25.0;
  OutputFormat output_format = OutputFormat::kReasoningThenScore;
};

/// Persona plus the mandatory output structure; sent as the system message.
std::string system_prompt(OutputFormat format);

/// Dimension rules and rubric with the score range substituted.
std::string user_prompt(const JudgeRequest& req);

/// Base context, dimension rules and rubric with the score range substituted.
std::string build_prompt(const JudgeRequest& req);

struct ParsedResponse {
  std::string reasoning;
  ScorePair scores;
};

/// Extracts {"reasoning": ..., "score": [a, b]} from a judge reply. Prose and
/// Markdown code fences around the object are tolerated. Throws ParseError
/// (carrying the raw text) on missing/malformed fields and ValidationError on
/// out-of-range scores.
ParsedResponse parse_response(const std::string& text, Dimension dim = Dimension::kSC, double range_max = 25.0);

/// Renders a reply in the format parse_response accepts.
std::string render_response(const std::string& reasoning, const ScorePair& scores);

}  // namespace flowrl::reward
