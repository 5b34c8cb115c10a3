#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrl/benchkit/benchkit.hpp"
#include "flowrl/common/error.hpp"

namespace flowrl::svc {

class AuthError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Lease missing or expired, or the task no longer has a free slot.
class ConflictError : public Error {
 public:
  using Error::Error;
};

/// Per-field ranking errors, keyed by "pf", "c", "o".
class SubmissionError : public ValidationError {
 public:
  struct Field {
    std::string kind;
    std::string message;
  };
  explicit SubmissionError(std::map<std::string, Field> fields);
  const std::map<std::string, Field>& fields() const noexcept { return fields_; }
  nlohmann::json to_json() const;

 private:
  std::map<std::string, Field> fields_;
};

enum class TaskStatus { kOpen, kInProgress, kDone };

std::string to_string(TaskStatus s);

/// One unit of annotation work as listed in the manifest.
struct TaskSpec {
  std::string id;
  std::string category;
  std::string subtask;
  std::string instruction;
  std::string input_ref;
  std::vector<std::string> candidates;
};

void to_json(nlohmann::json& j, const TaskSpec& t);
void from_json(const nlohmann::json& j, TaskSpec& t);

using Clock = std::chrono::system_clock;
using ClockFn = std::function<Clock::time_point()>;

struct Lease {
  std::string rater;
  Clock::time_point expires;
};

struct AnnotationTask {
  TaskSpec spec;
  TaskStatus status = TaskStatus::kOpen;
  std::vector<std::string> raters;  // completed raters, at most 2
  std::vector<Lease> leases;        // active leases
  std::map<bench::BenchDimension, bool> agreement;  // filled once done
};

void to_json(nlohmann::json& j, const AnnotationTask& t);

struct Rankings {
  std::string pf, c, o;
};

struct SubmitResult {
  bench::AnnotationRecord record;
  TaskStatus status = TaskStatus::kOpen;
  std::map<bench::BenchDimension, bool> agreement;  // empty until the second record
};

struct ServiceOptions {
  std::chrono::minutes lease{30};
  int compact_every = 1000;
  ClockFn clock = [] { return Clock::now(); };
};

/// Task assignment, leasing and submission storage for two-rater annotation.
///
/// State lives in an append-only JSONL event log (`events.jsonl` in the data
/// directory) and is rebuilt from it on construction. Mutations are
/// serialized; reads take a shared lock.
class AnnotationService {
 public:
  /// `tasks` is the manifest; `raters` the registered rater ids.
  AnnotationService(std::vector<TaskSpec> tasks, std::set<std::string> raters, std::filesystem::path data_dir,
                    ServiceOptions opts = {});

  /// Reads tasks.jsonl and raters.json from `data_dir`.
  static AnnotationService open(const std::filesystem::path& data_dir, ServiceOptions opts = {});

  /// The lowest-id task this rater may work on, leased to them; nullopt when
  /// none remain. A rater holding a live lease gets the same task back.
  std::optional<AnnotationTask> next_task(const std::string& rater);

  SubmitResult submit(const std::string& rater, const std::string& task_id, const Rankings& rankings);

  std::optional<AnnotationTask> task(const std::string& id) const;
  std::vector<bench::AnnotationRecord> records(const std::string& task_id = "") const;
  /// Records of completed tasks only, ready for bench::build_pairs.
  std::vector<bench::AnnotationRecord> completed_records() const;
  nlohmann::json progress() const;

  /// Rewrites the log keeping submissions and live leases only.
  void compact();
  std::size_t log_events() const;
  const std::filesystem::path& log_path() const noexcept { return log_; }

 private:
  struct State {
    AnnotationTask task;
    std::vector<bench::AnnotationRecord> records;
  };

  void apply_lease(const std::string& task_id, const std::string& rater, Clock::time_point expires);
  SubmitResult apply_submit(const bench::AnnotationRecord& rec);
  void expire(State& s, Clock::time_point now) const;
  void refresh(State& s, Clock::time_point now) const;
  void check_rater(const std::string& rater) const;
  void append(const nlohmann::json& event);
  void compact_locked();
  void maybe_compact_locked();
  void replay();

  std::map<std::string, State> tasks_;
  std::set<std::string> raters_;
  std::filesystem::path dir_, log_;
  ServiceOptions opts_;
  std::size_t events_ = 0;
  std::size_t since_compact_ = 0;
  mutable std::shared_mutex mu_;
};

}  // namespace flowrl::svc
