#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrl/flowcore/velocity_field.hpp"
#include "flowrl/grpo/grpo.hpp"

namespace flowrl::toy {

inline constexpr int kNumPoints = 16;
inline constexpr int kNumGroups = 3;
inline constexpr int kStateDim = 2 * kNumPoints;
/// kind one-hot (3) + group one-hot (3) + two parameters.
inline constexpr int kInstructionDim = 8;
inline constexpr int kCondDim = kStateDim + kInstructionDim;
inline constexpr double kCanvasHalfWidth = 1.5;
inline constexpr double kScoreMax = 25.0;
inline constexpr double kAlpha = 3.0;
inline constexpr double kGamma = 5.0;

/// Fixed label partition: points 0-5 in group 0, 6-10 in group 1, 11-15 in group 2.
int group_of(int point);

/// 16 labelled points; flattened as (x0, y0, x1, y1, ...).
struct SceneState {
  Vector points = Vector::Zero(kStateDim);

  Eigen::Vector2d point(int i) const { return points.segment<2>(2 * i); }
  Eigen::Vector2d group_centroid(int g) const;
};

enum class EditKind { kTranslateGroup, kScaleGroup, kRemoveGroup };

std::string to_string(EditKind k);
EditKind edit_kind_from_string(const std::string& s);

struct EditInstruction {
  EditKind kind = EditKind::kTranslateGroup;
  int group = 0;
  /// translate: offset (dx, dy); scale: (factor, 0); remove: unused.
  Eigen::Vector2d param = Eigen::Vector2d::Zero();

  Vector encode() const;
};

struct ToyTask {
  std::uint64_t seed = 0;
  SceneState source;
  EditInstruction instruction;
  SceneState target;

  /// Conditioning vector: flattened source followed by the instruction encoding.
  Vector condition() const;
};

/// Applies the ground-truth transform to the instruction's group only.
SceneState apply_edit(const SceneState& source, const EditInstruction& instr);

ToyTask make_task(std::uint64_t seed);
ToyTask make_task(const SceneState& source, const EditInstruction& instr, std::uint64_t seed = 0);

struct OracleReward {
  double sc = 0.0;
  double pq = 0.0;
  double final = 0.0;
  bool flagged = false;  // produced state was non-finite
};

enum class PointMatching { kIndex, kOptimalWithinGroup };

/// sc = 25 exp(-alpha [RMSE(edited group vs target) + RMSE(other groups vs source)]),
/// pq = 25 exp(-gamma * mean out-of-canvas excess), final = sqrt(sc pq).
OracleReward oracle_reward(const SceneState& source, const EditInstruction& instr, const SceneState& produced,
                           PointMatching matching = PointMatching::kIndex);

/// Recovers the task from a conditioning vector (inverse of ToyTask::condition).
ToyTask task_from_condition(const Vector& condition);

/// RewardFn adapter for GRPO: decodes the task from the condition.
grpo::RewardFn make_reward_fn(PointMatching matching = PointMatching::kIndex);

/// CFM data sampler over freshly generated tasks.
std::pair<Vector, Vector> sample_training_pair(std::mt19937_64& eng);

Architecture default_architecture();

void to_json(nlohmann::json& j, const ToyTask& t);
void from_json(const nlohmann::json& j, ToyTask& t);

std::vector<ToyTask> make_task_set(std::uint64_t seed, int count);

}  // namespace flowrl::toy
