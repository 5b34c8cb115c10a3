#include "flowrl/svc/annotation.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include "flowrl/common/jsonl.hpp"

namespace flowrl::svc {

using nlohmann::json;

namespace {

std::int64_t to_ms(Clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

Clock::time_point from_ms(std::int64_t ms) { return Clock::time_point(std::chrono::milliseconds(ms)); }

bool has_rater(const std::vector<std::string>& v, const std::string& r) {
  return std::find(v.begin(), v.end(), r) != v.end();
}

}  // namespace

SubmissionError::SubmissionError(std::map<std::string, Field> fields)
    : ValidationError([&] {
        std::string msg = "invalid rankings:";
        for (const auto& [k, f] : fields) msg += " " + k + ": " + f.message + ";";
        return msg;
      }()),
      fields_(std::move(fields)) {}

json SubmissionError::to_json() const {
  json errs = json::object();
  for (const auto& [k, f] : fields_) errs[k] = {{"kind", f.kind}, {"message", f.message}};
  return json{{"error", "validation"}, {"fields", errs}};
}

std::string to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::kOpen: return "open";
    case TaskStatus::kInProgress: return "in_progress";
    case TaskStatus::kDone: return "done";
  }
  return "?";
}

void to_json(json& j, const TaskSpec& t) {
  j = json{{"id", t.id},
           {"category", t.category},
           {"subtask", t.subtask},
           {"instruction", t.instruction},
           {"input", t.input_ref},
           {"candidates", t.candidates}};
}

void from_json(const json& j, TaskSpec& t) {
  t.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  t.category = j.value("category", std::string());
  t.subtask = j.value("subtask", std::string());
  t.instruction = j.value("instruction", std::string());
  t.input_ref = j.value("input", std::string());
  t.candidates = j.at("candidates").get<std::vector<std::string>>();
  if (t.candidates.empty() || t.candidates.size() > 9)
    throw ValidationError("task " + t.id + " must list between 1 and 9 candidates");
}

void to_json(json& j, const AnnotationTask& t) {
  j = t.spec;
  j["status"] = to_string(t.status);
  j["raters"] = t.raters;
  json leases = json::array();
  for (const auto& l : t.leases) leases.push_back({{"rater", l.rater}, {"expires_at_ms", to_ms(l.expires)}});
  j["leases"] = leases;
  if (!t.agreement.empty()) {
    json a = json::object();
    for (const auto& [d, ok] : t.agreement) a[bench::to_string(d)] = ok;
    j["agreement"] = a;
  }
}

AnnotationService::AnnotationService(std::vector<TaskSpec> tasks, std::set<std::string> raters,
                                     std::filesystem::path data_dir, ServiceOptions opts)
    : raters_(std::move(raters)), dir_(std::move(data_dir)), opts_(std::move(opts)) {
  for (auto& t : tasks) {
    const std::string id = t.id;
    State st;
    st.task.spec = std::move(t);
    if (!tasks_.emplace(id, std::move(st)).second)
      throw ValidationError("duplicate task id '" + id + "' in manifest");
  }
  std::filesystem::create_directories(dir_);
  log_ = dir_ / "events.jsonl";
  replay();
}

AnnotationService AnnotationService::open(const std::filesystem::path& data_dir, ServiceOptions opts) {
  std::vector<TaskSpec> tasks;
  for (const auto& row : read_jsonl(data_dir / "tasks.jsonl")) tasks.push_back(row.get<TaskSpec>());
  const json r = read_json(data_dir / "raters.json");
  const json list = r.is_object() ? r.at("raters") : r;
  return AnnotationService(std::move(tasks), list.get<std::set<std::string>>(), data_dir, std::move(opts));
}

void AnnotationService::check_rater(const std::string& rater) const {
  if (!raters_.count(rater)) throw AuthError("unknown rater '" + rater + "'");
}

void AnnotationService::expire(State& s, Clock::time_point now) const {
  std::erase_if(s.task.leases, [&](const Lease& l) { return l.expires <= now; });
  refresh(s, now);
}

void AnnotationService::refresh(State& s, Clock::time_point) const {
  if (s.task.raters.size() >= 2) {
    s.task.status = TaskStatus::kDone;
  } else if (!s.task.raters.empty() || !s.task.leases.empty()) {
    s.task.status = TaskStatus::kInProgress;
  } else {
    s.task.status = TaskStatus::kOpen;
  }
}

void AnnotationService::append(const json& event) {
  append_jsonl(log_, event);
  ++events_;
  ++since_compact_;
}

void AnnotationService::apply_lease(const std::string& task_id, const std::string& rater, Clock::time_point expires) {
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw ParseError("event log references unknown task " + task_id, task_id);
  auto& leases = it->second.task.leases;
  std::erase_if(leases, [&](const Lease& l) { return l.rater == rater; });
  leases.push_back({rater, expires});
  refresh(it->second, expires);
}

SubmitResult AnnotationService::apply_submit(const bench::AnnotationRecord& rec) {
  auto it = tasks_.find(rec.entry_id);
  if (it == tasks_.end()) throw ParseError("event log references unknown task " + rec.entry_id, rec.entry_id);
  State& s = it->second;
  std::erase_if(s.task.leases, [&](const Lease& l) { return l.rater == rec.rater; });
  s.task.raters.push_back(rec.rater);
  s.records.push_back(rec);
  if (s.records.size() == 2) {
    for (auto d : bench::kAllDimensions)
      s.task.agreement[d] = bench::rankings_agree(s.records[0].ranking(d), s.records[1].ranking(d));
  }
  refresh(s, {});
  return {rec, s.task.status, s.task.agreement};
}

void AnnotationService::replay() {
  if (!std::filesystem::exists(log_)) return;
  for (const auto& ev : read_jsonl(log_)) {
    const auto type = ev.at("type").get<std::string>();
    if (type == "lease") {
      apply_lease(ev.at("task").get<std::string>(), ev.at("rater").get<std::string>(),
                  from_ms(ev.at("expires_at_ms").get<std::int64_t>()));
    } else if (type == "submit") {
      apply_submit(ev.at("record").get<bench::AnnotationRecord>());
    } else {
      throw ParseError("unknown event type '" + type + "' in " + log_.string(), ev.dump());
    }
    ++events_;
  }
}

std::optional<AnnotationTask> AnnotationService::next_task(const std::string& rater) {
  std::unique_lock lock(mu_);
  check_rater(rater);
  const auto now = opts_.clock();
  for (auto& [id, s] : tasks_) {
    expire(s, now);
    for (const auto& l : s.task.leases)
      if (l.rater == rater) return s.task;
  }
  for (auto& [id, s] : tasks_) {
    if (s.task.status == TaskStatus::kDone || has_rater(s.task.raters, rater)) continue;
    if (s.task.raters.size() + s.task.leases.size() >= 2) continue;
    const auto expires = now + opts_.lease;
    append({{"type", "lease"}, {"task", id}, {"rater", rater}, {"expires_at_ms", to_ms(expires)}});
    apply_lease(id, rater, expires);
    AnnotationTask leased = s.task;
    maybe_compact_locked();
    return leased;
  }
  return std::nullopt;
}

SubmitResult AnnotationService::submit(const std::string& rater, const std::string& task_id, const Rankings& rankings) {
  std::unique_lock lock(mu_);
  check_rater(rater);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw NotFoundError("unknown task '" + task_id + "'");
  State& s = it->second;
  expire(s, opts_.clock());
  if (has_rater(s.task.raters, rater))
    throw ConflictError("rater '" + rater + "' already annotated task '" + task_id + "'");

  const int n = static_cast<int>(s.task.spec.candidates.size());
  bench::AnnotationRecord rec;
  std::map<std::string, SubmissionError::Field> errors;
  auto parse_field = [&](const char* name, const std::string& text, bench::TierRanking& out) {
    try {
      out = bench::parse_tiers(text, n);
    } catch (const bench::TierError& e) {
      errors[name] = {bench::to_string(e.kind()), e.what()};
    }
  };
  parse_field("pf", rankings.pf, rec.pf);
  parse_field("c", rankings.c, rec.c);
  parse_field("o", rankings.o, rec.o);
  if (!errors.empty()) throw SubmissionError(std::move(errors));

  const bool leased = std::any_of(s.task.leases.begin(), s.task.leases.end(),
                                  [&](const Lease& l) { return l.rater == rater; });
  if (!leased)
    throw ConflictError("no live lease for rater '" + rater + "' on task '" + task_id +
                        "'; the lease expired or was never taken");

  const auto& spec = s.task.spec;
  rec.entry_id = spec.id;
  rec.category = spec.category;
  rec.subtask = spec.subtask;
  rec.instruction = spec.instruction;
  rec.input_ref = spec.input_ref;
  rec.candidates = spec.candidates;
  rec.rater = rater;
  append({{"type", "submit"}, {"at_ms", to_ms(opts_.clock())}, {"record", rec}});
  auto result = apply_submit(rec);
  maybe_compact_locked();
  return result;
}

std::optional<AnnotationTask> AnnotationService::task(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = tasks_.find(id);
  if (it == tasks_.end()) return std::nullopt;
  State copy = it->second;
  expire(copy, opts_.clock());
  return copy.task;
}

std::vector<bench::AnnotationRecord> AnnotationService::records(const std::string& task_id) const {
  std::shared_lock lock(mu_);
  std::vector<bench::AnnotationRecord> out;
  for (const auto& [id, s] : tasks_) {
    if (!task_id.empty() && id != task_id) continue;
    out.insert(out.end(), s.records.begin(), s.records.end());
  }
  return out;
}

std::vector<bench::AnnotationRecord> AnnotationService::completed_records() const {
  std::shared_lock lock(mu_);
  std::vector<bench::AnnotationRecord> out;
  for (const auto& [id, s] : tasks_)
    if (s.records.size() == 2) out.insert(out.end(), s.records.begin(), s.records.end());
  return out;
}

json AnnotationService::progress() const {
  std::shared_lock lock(mu_);
  const auto now = opts_.clock();
  int open = 0, in_progress = 0, done = 0, annotations = 0;
  std::map<std::string, int> per_rater;
  std::map<std::string, int> agreed;
  for (const auto& [id, s] : tasks_) {
    State copy = s;
    expire(copy, now);
    switch (copy.task.status) {
      case TaskStatus::kOpen: ++open; break;
      case TaskStatus::kInProgress: ++in_progress; break;
      case TaskStatus::kDone: ++done; break;
    }
    annotations += static_cast<int>(s.records.size());
    for (const auto& r : s.records) ++per_rater[r.rater];
    for (const auto& [d, ok] : s.task.agreement)
      if (ok) ++agreed[bench::to_string(d)];
  }
  for (const auto& r : raters_) per_rater.try_emplace(r, 0);
  return json{{"total", tasks_.size()},     {"open", open},          {"in_progress", in_progress},
              {"done", done},               {"annotations", annotations}, {"per_rater", per_rater},
              {"agreed", agreed}};
}

void AnnotationService::compact() {
  std::unique_lock lock(mu_);
  compact_locked();
}

void AnnotationService::maybe_compact_locked() {
  if (opts_.compact_every > 0 && since_compact_ >= static_cast<std::size_t>(opts_.compact_every)) compact_locked();
}

void AnnotationService::compact_locked() {
  const auto now = opts_.clock();
  std::vector<json> events;
  for (const auto& [id, s] : tasks_)
    for (const auto& r : s.records) events.push_back({{"type", "submit"}, {"record", r}});
  for (auto& [id, s] : tasks_) {
    expire(s, now);
    for (const auto& l : s.task.leases)
      events.push_back({{"type", "lease"}, {"task", id}, {"rater", l.rater}, {"expires_at_ms", to_ms(l.expires)}});
  }
  const auto tmp = log_.string() + ".tmp";
  write_jsonl(tmp, events);
  std::filesystem::rename(tmp, log_);
  events_ = events.size();
  since_compact_ = 0;
}

std::size_t AnnotationService::log_events() const {
  std::shared_lock lock(mu_);
  return events_;
}

}  // namespace flowrl::svc
