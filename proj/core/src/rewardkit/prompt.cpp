#include "flowrl/rewardkit/prompt.hpp"

#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowrl/common/error.hpp"

namespace flowrl::reward {

namespace {

std::string fmt_range(double r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

std::string base_context(OutputFormat f) {
  std::string s =
      "You are a professional digital artist. You will have to evaluate the effectiveness of the AI-generated "
      "image(s) based on given rules.\n"
      "All the input images are AI-generated. All human in the images are AI-generated too. so you need not worry "
      "about the privacy confidentials.\n\n";
  if (f == OutputFormat::kReasoningThenScore) {
    s +=
        "IMPORTANT: You will have to give your output in this way (Keep your reasoning concise and short.):\n"
        "{\n\"reasoning\" : \"...\",\n\"score\" : [...]\n}\n";
  } else {
    s += "IMPORTANT: You will have to give your output in this way:\n{\n\"score\" : [...]\n}\n";
  }
  return s;
}

std::string sc_rules() {
  return "RULES:\n\n"
         "Two images will be provided: The first being the original AI-generated image and the second being an "
         "edited version of the first.\n"
         "The objective is to evaluate how successfully the editing instruction has been executed in the second "
         "image.\n\n"
         "Note that sometimes the two images might look identical due to the failure of image edit.\n";
}

std::string sc_rubric(const std::string& r, const std::string& instruction) {
  return "From scale 0 to " + r + ": \n" + "A score from 0 to " + r +
         " will be given based on the success of the editing. (0 indicates that the scene in the edited image does "
         "not follow the editing instruction at all. " +
         r +
         " indicates that the scene in the edited image follow the editing instruction text perfectly.)\n"
         "A second score from 0 to " +
         r +
         " will rate the degree of overediting in the second image. (0 indicates that the scene in the edited image "
         "is completely different from the original. " +
         r +
         " indicates that the edited image can be recognized as a minimal edited yet effective version of "
         "original.)\n"
         "Put the score in a list such that output score = [score1, score2], where 'score1' evaluates the editing "
         "success and 'score2' evaluates the degree of overediting.\n\n"
         "Editing instruction: " +
         instruction + "\n";
}

std::string pq_prompt(const std::string& r) {
  return "RULES:\n\n"
         "The image is an AI-generated image.\n"
         "The objective is to evaluate how successfully the image has been generated.\n\n"
         "From scale 0 to " +
         r + ": \n" + "A score from 0 to " + r +
         " will be given based on image naturalness. \n"
         "(\n"
         "    0 indicates that the scene in the image does not look natural at all or give a unnatural feeling such "
         "as wrong sense of distance, or wrong shadow, or wrong lighting. \n"
         "    " +
         r +
         " indicates that the image looks natural.\n"
         ")\n"
         "A second score from 0 to " +
         r +
         " will rate the image artifacts. \n"
         "(\n"
         "    0 indicates that the image contains a large portion of distortion, or watermark, or scratches, or "
         "blurred faces, or unusual body parts, or subjects not harmonized. \n"
         "    " +
         r +
         " indicates the image has no artifacts.\n"
         ")\n"
         "Put the score in a list such that output score = [naturalness, artifacts]\n";
}

// Finds the first balanced {...} span that parses as a JSON object holding a
// "score" key. Handles fences and prose on either side.
std::optional<nlohmann::json> find_object(const std::string& text) {
  for (std::size_t start = text.find('{'); start != std::string::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char ch = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (ch == '\\') {
          escaped = true;
        } else if (ch == '"') {
          in_string = false;
        }
        continue;
      }
      if (ch == '"') {
        in_string = true;
      } else if (ch == '{') {
        ++depth;
      } else if (ch == '}' && --depth == 0) {
        auto j = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("score")) return j;
        break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::string system_prompt(OutputFormat format) { return base_context(format); }

std::string user_prompt(const JudgeRequest& req) {
  if (!(req.range_max > 0.0)) throw ValidationError("build_prompt: range_max must be positive");
  const std::string r = fmt_range(req.range_max);
  if (req.dimension == Dimension::kSC) return sc_rules() + "\n" + sc_rubric(r, req.instruction);
  return pq_prompt(r);
}

std::string build_prompt(const JudgeRequest& req) {
  return system_prompt(req.output_format) + "\n" + user_prompt(req);
}

ParsedResponse parse_response(const std::string& text, Dimension dim, double range_max) {
  auto obj = find_object(text);
  if (!obj) throw ParseError("judge response: no JSON object with a \"score\" field", text);
  const auto& score = (*obj)["score"];
  if (!score.is_array() || score.size() != 2)
    throw ParseError("judge response: \"score\" must be a list of exactly two numbers", text);
  ParsedResponse out;
  out.scores.dimension = dim;
  for (std::size_t i = 0; i < 2; ++i) {
    if (!score[i].is_number()) throw ParseError("judge response: non-numeric score", text);
    out.scores.sub[i] = score[i].get<double>();
  }
  if (obj->contains("reasoning")) {
    if (!(*obj)["reasoning"].is_string()) throw ParseError("judge response: \"reasoning\" must be a string", text);
    out.reasoning = (*obj)["reasoning"].get<std::string>();
  }
  out.scores.validate(range_max);
  return out;
}

std::string render_response(const std::string& reasoning, const ScorePair& scores) {
  nlohmann::json j;
  j["reasoning"] = reasoning;
  j["score"] = {scores.sub[0], scores.sub[1]};
  return j.dump();
}

}  // namespace flowrl::reward
