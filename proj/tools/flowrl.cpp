// flowrl command-line tool.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowrl/benchkit/benchkit.hpp"
#include "flowrl/common/error.hpp"
#include "flowrl/common/jsonl.hpp"
#include "flowrl/common/rng.hpp"
#include "flowrl/datapipe/datapipe.hpp"
#include "flowrl/flowcore/checkpoint.hpp"
#include "flowrl/flowcore/flow.hpp"
#include "flowrl/rewardkit/judge.hpp"
#include "flowrl/svc/annotation.hpp"
#include "flowrl/svc/config.hpp"
#include "flowrl/svc/http.hpp"
#include "flowrl/toyenv/pipeline.hpp"
#include "flowrl/toyenv/toyenv.hpp"

namespace fs = std::filesystem;
using namespace flowrl;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  svc::RunConfig load() const {
    svc::RunConfig c = config_path.empty() ? svc::RunConfig{} : svc::load_run_config(config_path);
    if (seed) c.seed = *seed;
    return c;
  }
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

VelocityField load_or_pretrain(const std::string& ckpt, const toy::RlRunConfig& rl) {
  if (!ckpt.empty()) return load_checkpoint(ckpt).to_model();
  std::cerr << "no --checkpoint given; pretraining " << rl.pretrain.steps << " CFM steps\n";
  return toy::pretrain_policy(rl);
}

std::vector<toy::ToyTask> load_tasks(const std::string& path, std::uint64_t seed, int count) {
  if (path.empty()) return toy::make_task_set(seed, count);
  std::vector<toy::ToyTask> out;
  for (const auto& row : read_jsonl(path)) out.push_back(row.get<toy::ToyTask>());
  return out;
}

// ---------------------------------------------------------------- flow

void add_flow(CLI::App& app, Globals& g) {
  auto* flow = app.add_subcommand("flow", "Flow-matching pretraining and sampling");
  flow->require_subcommand(1);

  auto* pre = flow->add_subcommand("pretrain", "CFM pretraining on toy tasks; writes a checkpoint");
  static std::string pre_out = "pretrained.ckpt";
  static std::optional<int> pre_steps, pre_batch;
  static std::optional<double> pre_lr;
  pre->add_option("--out", pre_out, "Checkpoint path")->capture_default_str();
  pre->add_option("--steps", pre_steps, "Training steps");
  pre->add_option("--batch", pre_batch, "Batch size");
  pre->add_option("--lr", pre_lr, "Adam learning rate");
  pre->callback([&g] {
    auto cfg = g.load();
    auto& rl = cfg.rl;
    if (pre_steps) rl.pretrain.steps = *pre_steps;
    if (pre_batch) rl.pretrain.batch_size = *pre_batch;
    if (pre_lr) rl.pretrain.adam.lr = *pre_lr;
    if (g.seed) rl.pretrain.seed = *g.seed;
    rl.validate();
    const auto policy = toy::pretrain_policy(rl, [](int step, double loss) {
      if (step % 25 == 0) std::cerr << "step " << step << " loss " << loss << "\n";
    });
    save_checkpoint(pre_out, Checkpoint::from_model(policy, rl.init_seed, {{"pretrain", rl.pretrain}}));
    std::cout << "wrote " << pre_out << "\n";
  });

  auto* sample = flow->add_subcommand("sample", "Sample terminal states for toy tasks");
  static std::string s_ckpt, s_tasks, s_out;
  static int s_count = 8;
  static bool s_ode = false;
  static std::optional<int> s_steps;
  static std::optional<double> s_sigma;
  sample->add_option("--checkpoint", s_ckpt, "Policy checkpoint")->required();
  sample->add_option("--tasks", s_tasks, "Task manifest (JSONL); default: generated");
  sample->add_option("--count", s_count, "Tasks to generate when --tasks is absent")->capture_default_str();
  sample->add_option("--steps", s_steps, "Sampler steps T");
  sample->add_option("--sigma", s_sigma, "Diffusion coefficient");
  sample->add_flag("--ode", s_ode, "Deterministic Euler ODE instead of the SDE");
  sample->add_option("--out", s_out, "Output JSONL; default stdout");
  sample->callback([&g] {
    const auto cfg = g.load();
    const auto policy = load_checkpoint(s_ckpt).to_model();
    SamplerConfig sc = cfg.rl.grpo.sampler;
    if (s_steps) sc.steps = *s_steps;
    if (s_sigma) sc.sigma = *s_sigma;
    sc.validate();
    const auto tasks = load_tasks(s_tasks, cfg.rl.task_seed, s_count);
    std::vector<json> rows;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const auto& t = tasks[i];
      auto eng = make_engine(cfg.seed, {i});
      const Vector x0 = standard_normal(toy::kStateDim, eng);
      Vector x1;
      if (s_ode) {
        x1 = ode_sample(policy, x0, t.condition(), sc.steps).back();
      } else {
        x1 = sde_sample(policy, x0, t.condition(), sc, eng).terminal();
      }
      toy::SceneState produced;
      produced.points = x1;
      const auto r = toy::oracle_reward(t.source, t.instruction, produced);
      rows.push_back({{"task", i},
                      {"points", std::vector<double>(x1.data(), x1.data() + x1.size())},
                      {"sc", r.sc},
                      {"pq", r.pq},
                      {"reward", r.final}});
    }
    if (s_out.empty()) {
      for (const auto& r : rows) std::cout << r.dump() << "\n";
    } else {
      write_jsonl(s_out, rows);
    }
  });
}

// ---------------------------------------------------------------- rl

void add_rl(CLI::App& app, Globals& g) {
  auto* rl = app.add_subcommand("rl", "GRPO fine-tuning and best-of-N evaluation");
  rl->require_subcommand(1);

  auto* train = rl->add_subcommand("train", "GRPO fine-tuning on the toy environment");
  static std::string t_ckpt, t_run_dir;
  static std::optional<int> t_group, t_steps, t_iters;
  static std::optional<double> t_sigma, t_beta, t_eps_low, t_eps_high, t_lr;
  train->add_option("--checkpoint", t_ckpt, "Initial policy; default: pretrain first");
  train->add_option("--run-dir", t_run_dir, "Run directory; default: paths.run_dir");
  train->add_option("-G,--group-size", t_group, "Trajectories per group");
  train->add_option("-T,--steps", t_steps, "Sampler steps");
  train->add_option("--sigma", t_sigma, "Diffusion coefficient");
  train->add_option("--beta", t_beta, "KL weight");
  train->add_option("--eps-low", t_eps_low, "Lower clip range");
  train->add_option("--eps-high", t_eps_high, "Upper clip range");
  train->add_option("--lr", t_lr, "Learning rate");
  train->add_option("--iterations", t_iters, "Number of updates");
  train->callback([&g] {
    auto cfg = g.load();
    auto& r = cfg.rl;
    if (t_group) r.grpo.group_size = *t_group;
    if (t_steps) r.grpo.sampler.steps = *t_steps;
    if (t_sigma) r.grpo.sampler.sigma = *t_sigma;
    if (t_beta) r.grpo.beta = *t_beta;
    if (t_eps_low) r.grpo.eps_low = *t_eps_low;
    if (t_eps_high) r.grpo.eps_high = *t_eps_high;
    if (t_lr) r.grpo.lr = *t_lr;
    if (t_iters) r.iterations = *t_iters;
    if (g.seed) r.rollout_seed = *g.seed;
    cfg.validate();

    const fs::path dir = t_run_dir.empty() ? fs::path(cfg.paths.run_dir) : fs::path(t_run_dir);
    fs::create_directories(dir / "checkpoints");
    write_json(dir / "config.json", cfg);
    const auto stats_path = dir / "stats.jsonl";
    fs::remove(stats_path);

    const auto start = std::chrono::steady_clock::now();
    auto initial = load_or_pretrain(t_ckpt, r);
    const auto res = toy::run_rl(std::move(initial), r, [&](const grpo::UpdateStats& s, const VelocityField& p) {
      append_jsonl(stats_path, s);
      const long it = s.iteration + 1;
      if (r.checkpoint_every > 0 && it % r.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "iter_%05ld.ckpt", it);
        save_checkpoint(dir / "checkpoints" / name, Checkpoint::from_model(p, r.init_seed, {{"iteration", it}}));
      }
      if (it % r.log_every == 0)
        std::cerr << "update " << it << " reward " << s.mean_reward << " kl " << s.kl << " clip "
                  << s.clip_fraction << "\n";
    });
    save_checkpoint(dir / "checkpoints" / "final.ckpt",
                    Checkpoint::from_model(res.policy, r.init_seed, {{"iteration", r.iterations}}));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json summary{{"reward_before", res.reward_before},
                       {"reward_after", res.reward_after},
                       {"relative_improvement", (res.reward_after - res.reward_before) / res.reward_before},
                       {"iterations", r.iterations},
                       {"seconds", secs}};
    write_json(dir / "summary.json", summary);
    print_json(summary);
  });

  auto* bon = rl->add_subcommand("bestofn", "Best-of-N curve of a policy on toy tasks");
  static std::string b_ckpt, b_tasks;
  static int b_count = 200;
  static std::vector<int> b_ns;
  bon->add_option("--checkpoint", b_ckpt, "Policy checkpoint; default: pretrain first");
  bon->add_option("--tasks", b_tasks, "Task manifest (JSONL)");
  bon->add_option("--count", b_count, "Tasks to generate when --tasks is absent")->capture_default_str();
  bon->add_option("--n", b_ns, "Candidate counts; default 1 2 4 ... up to bestofn_n");
  bon->callback([&g] {
    const auto cfg = g.load();
    const auto policy = load_or_pretrain(b_ckpt, cfg.rl);
    const auto tasks = load_tasks(b_tasks, cfg.rl.eval_seed, b_count);
    std::vector<int> ns = b_ns;
    if (ns.empty())
      for (int n = 1; n <= cfg.bestofn_n; n *= 2) ns.push_back(n);
    const auto curve = toy::best_of_n_curve(policy, tasks, cfg.rl.grpo.sampler, ns, cfg.seed);
    json out = json::array();
    for (const auto& p : curve) out.push_back({{"n", p.n}, {"mean_selected", p.mean_selected}, {"std_error", p.std_error}});
    print_json(out);
  });
}

// ---------------------------------------------------------------- bench

void add_bench(CLI::App& app, Globals& g) {
  auto* bench = app.add_subcommand("bench", "Preference benchmark harness");
  bench->require_subcommand(1);

  auto* build = bench->add_subcommand("build", "Annotations (JSONL) -> agreed preference pairs (JSONL)");
  static std::string in_ann, out_pairs = "pairs.jsonl";
  build->add_option("--annotations", in_ann, "Annotation records, two raters per entry")->required();
  build->add_option("--out", out_pairs, "Output pairs")->capture_default_str();
  build->callback([] {
    std::vector<bench::AnnotationRecord> recs;
    for (const auto& row : read_jsonl(in_ann)) recs.push_back(row.get<bench::AnnotationRecord>());
    const auto accepted = bench::agreement_filter(recs);
    const auto pairs = bench::build_pairs(recs);
    std::vector<json> rows(pairs.begin(), pairs.end());
    write_jsonl(out_pairs, rows);
    std::cout << accepted.size() << " agreed (entry, dimension) slices, " << pairs.size() << " pairs -> " << out_pairs
              << "\n";
  });

  auto* eval = bench->add_subcommand("eval", "Pairs + scores -> accuracy report");
  static std::string e_pairs, e_scores, e_out;
  static std::string e_tie;
  eval->add_option("--pairs", e_pairs, "Preference pairs (JSONL)")->required();
  eval->add_option("--scores", e_scores, "Rows {entry, candidate, score[, dimension]} (JSONL)")->required();
  eval->add_option("--tie-policy", e_tie, "half or strict; default from config")->check(CLI::IsMember({"half", "strict"}));
  eval->add_option("--out", e_out, "Write the report as JSON");
  eval->callback([&g] {
    const auto cfg = g.load();
    auto policy = cfg.tie_policy;
    if (!e_tie.empty()) policy = e_tie == "half" ? bench::TiePolicy::kHalfCredit : bench::TiePolicy::kStrict;
    std::vector<bench::PreferencePair> pairs;
    for (const auto& row : read_jsonl(e_pairs)) pairs.push_back(row.get<bench::PreferencePair>());
    const auto src = bench::score_source_from_json(read_jsonl(e_scores));
    const auto report = bench::pairwise_accuracy(pairs, src, policy);
    std::cout << report.table();
    if (!e_out.empty()) write_json(e_out, report);
  });

  auto* bon = bench->add_subcommand("bestofn", "Candidate scores -> best-of-N selection per entry");
  static std::string s_scores;
  static std::optional<int> s_n;
  bon->add_option("--scores", s_scores, "Rows {entry, candidate, score} (JSONL)")->required();
  bon->add_option("--n", s_n, "Consider only the first N candidates; default bestofn_n");
  bon->callback([&g] {
    const auto cfg = g.load();
    const int n = s_n.value_or(cfg.bestofn_n);
    if (n < 1) throw ConfigError("--n must be >= 1");
    std::map<std::string, std::map<int, double>> by_entry;
    for (const auto& row : read_jsonl(s_scores))
      by_entry[row.at("entry").get<std::string>()][row.at("candidate").get<int>()] = row.at("score").get<double>();
    for (const auto& [entry, cands] : by_entry) {
      std::vector<int> ids;
      std::vector<double> scores;
      for (const auto& [c, s] : cands) {
        if (static_cast<int>(ids.size()) == n) break;
        ids.push_back(c);
        scores.push_back(s);
      }
      const auto sel = bench::best_of_n(scores);
      std::cout << json{{"entry", entry}, {"candidate", ids[sel.index]}, {"score", sel.score}, {"n", ids.size()}}.dump()
                << "\n";
    }
  });
}

// ---------------------------------------------------------------- data

void add_data(CLI::App& app, Globals& g) {
  auto* data = app.add_subcommand("data", "Data selection and filtering");
  data->require_subcommand(1);

  auto* select = data->add_subcommand("select", "K-center greedy selection over embeddings");
  static std::string in_samples, sel_out;
  static std::size_t k = 0;
  static std::string seed_rule = "farthest";
  select->add_option("--input", in_samples, "Rows {id, embedding, tag} (JSONL)")->required();
  select->add_option("-k", k, "Number of centers")->required();
  select->add_option("--seed-rule", seed_rule, "farthest or first")
      ->check(CLI::IsMember({"farthest", "first"}))
      ->capture_default_str();
  select->add_option("--out", sel_out, "Write selected ids, one per line");
  select->callback([] {
    std::vector<data::EmbeddedSample> samples;
    for (const auto& row : read_jsonl(in_samples)) samples.push_back(row.get<data::EmbeddedSample>());
    const auto rule = seed_rule == "first" ? data::SeedRule::kFirst : data::SeedRule::kFarthestFromCentroid;
    const auto sel = data::k_center_greedy(samples, k, rule);
    std::ostringstream ids;
    for (auto i : sel) ids << samples[i].id << "\n";
    if (sel_out.empty()) {
      std::cout << ids.str();
    } else {
      std::ofstream(sel_out) << ids.str();
    }
    if (!sel.empty()) std::cerr << "covering radius " << data::covering_radius(samples, sel) << "\n";
  });

  auto* filter = data->add_subcommand("filter", "Group-score filters");
  static std::string in_groups, f_out, mode = "both";
  static std::optional<double> th_max, th_std;
  filter->add_option("--input", in_groups, "Rows {group, scores} (JSONL)")->required();
  filter->add_option("--mode", mode, "max, std or both")->check(CLI::IsMember({"max", "std", "both"}))->capture_default_str();
  filter->add_option("--theta-max", th_max, "Group-max threshold; default from config");
  filter->add_option("--theta-std", th_std, "Group-std threshold; default from config");
  filter->add_option("--out", f_out, "Retained groups (JSONL); default stdout");
  filter->callback([&g] {
    const auto cfg = g.load();
    std::vector<data::GroupScores> groups;
    for (const auto& row : read_jsonl(in_groups)) groups.push_back(row.get<data::GroupScores>());
    const std::size_t before = groups.size();
    if (mode != "std") groups = data::filter_by_group_max(groups, th_max.value_or(cfg.filter.theta_max));
    if (mode != "max") groups = data::filter_by_group_std(groups, th_std.value_or(cfg.filter.theta_std));
    std::vector<json> rows(groups.begin(), groups.end());
    if (f_out.empty()) {
      for (const auto& r : rows) std::cout << r.dump() << "\n";
    } else {
      write_jsonl(f_out, rows);
    }
    std::cerr << "kept " << groups.size() << " of " << before << " groups\n";
  });
}

// ---------------------------------------------------------------- toy

void add_toy(CLI::App& app, Globals& g) {
  auto* toy = app.add_subcommand("toy", "Synthetic editing environment");
  toy->require_subcommand(1);

  auto* gen = toy->add_subcommand("gen", "Write a seeded task manifest");
  static int count = 64;
  static std::string gen_out = "tasks.jsonl";
  gen->add_option("--count", count, "Number of tasks")->capture_default_str();
  gen->add_option("--out", gen_out, "Output manifest")->capture_default_str();
  gen->callback([&g] {
    const auto cfg = g.load();
    const auto tasks = toy::make_task_set(g.seed.value_or(cfg.rl.task_seed), count);
    std::vector<json> rows(tasks.begin(), tasks.end());
    write_jsonl(gen_out, rows);
    std::cout << "wrote " << tasks.size() << " tasks to " << gen_out << "\n";
  });

  auto* ev = toy->add_subcommand("eval", "Mean oracle reward of a policy on a task set");
  static std::string ev_ckpt, ev_tasks;
  static int ev_count = 64, ev_samples = 4;
  static bool ev_ode = false;
  ev->add_option("--checkpoint", ev_ckpt, "Policy checkpoint")->required();
  ev->add_option("--tasks", ev_tasks, "Task manifest (JSONL); default: generated");
  ev->add_option("--count", ev_count, "Tasks to generate when --tasks is absent")->capture_default_str();
  ev->add_option("--samples", ev_samples, "SDE samples per task")->capture_default_str();
  ev->add_flag("--ode", ev_ode, "Deterministic ODE sampling");
  ev->callback([&g] {
    const auto cfg = g.load();
    const auto policy = load_checkpoint(ev_ckpt).to_model();
    const auto tasks = load_tasks(ev_tasks, cfg.rl.task_seed, ev_count);
    const auto& sc = cfg.rl.grpo.sampler;
    const double r = ev_ode ? toy::mean_ode_reward(policy, tasks, sc.steps, cfg.seed)
                            : toy::mean_sde_reward(policy, tasks, sc, cfg.seed, ev_samples);
    print_json({{"tasks", tasks.size()}, {"mode", ev_ode ? "ode" : "sde"}, {"mean_reward", r}});
  });
}

// ---------------------------------------------------------------- judge

void add_judge(CLI::App& app, Globals& g) {
  auto* judge = app.add_subcommand("judge", "VLM judge client");
  judge->require_subcommand(1);

  auto* score = judge->add_subcommand("score", "Score edits with K-pass self-ensembling");
  static std::string instruction, input_ref, output_ref, batch, out;
  static std::optional<int> k;
  static bool mock = false;
  static std::vector<double> mock_sc{20, 20}, mock_pq{25, 25};
  score->add_option("--instruction", instruction, "Editing instruction");
  score->add_option("--input", input_ref, "Input image reference");
  score->add_option("--output", output_ref, "Edited image reference");
  score->add_option("--batch", batch, "Rows {instruction, input, output} (JSONL)");
  score->add_option("-k,--passes", k, "Self-ensemble passes; default from config");
  score->add_flag("--mock", mock, "Use the in-process mock judge");
  score->add_option("--mock-sc", mock_sc, "Mock SC sub-scores")->expected(2)->capture_default_str();
  score->add_option("--mock-pq", mock_pq, "Mock PQ sub-scores")->expected(2)->capture_default_str();
  score->add_option("--out", out, "Write records (JSONL); default stdout");
  score->callback([&g] {
    auto cfg = g.load();
    if (k) cfg.judge.ensemble.k = *k;
    cfg.judge.validate();
    std::vector<reward::EditTriplet> triplets;
    if (!batch.empty()) {
      for (const auto& row : read_jsonl(batch))
        triplets.push_back({row.at("instruction").get<std::string>(), row.at("input").get<std::string>(),
                            row.at("output").get<std::string>()});
    } else {
      if (output_ref.empty()) throw ConfigError("judge score: give --output (and --instruction, --input) or --batch");
      triplets.push_back({instruction, input_ref, output_ref});
    }
    std::vector<json> rows;
    const auto run = [&](reward::JudgeTransport& transport) {
      for (const auto& t : triplets) {
        json j = reward::score_edit(transport, t, cfg.judge);
        j["instruction"] = t.instruction;
        j["input"] = t.input_ref;
        j["output"] = t.output_ref;
        rows.push_back(std::move(j));
      }
    };
    if (mock) {
      auto transport = reward::MockJudgeTransport::fixed({{mock_sc[0], mock_sc[1]}, reward::Dimension::kSC},
                                                         {{mock_pq[0], mock_pq[1]}, reward::Dimension::kPQ});
      run(transport);
    } else {
      auto transport = reward::HttpJudgeTransport::from_env();
      run(transport);
    }
    if (out.empty()) {
      for (const auto& r : rows) std::cout << r.dump() << "\n";
    } else {
      write_jsonl(out, rows);
    }
  });
}

// ---------------------------------------------------------------- serve

void add_serve(CLI::App& app, Globals& g) {
  auto* serve = app.add_subcommand("serve", "Services");
  serve->require_subcommand(1);

  auto* ann = serve->add_subcommand("annotate", "Annotation HTTP service");
  static std::string data_dir, static_dir, host;
  static std::optional<int> port;
  ann->add_option("--data-dir", data_dir, "Directory with tasks.jsonl and raters.json; default paths.annotation_dir");
  ann->add_option("--static-dir", static_dir, "Candidate artifacts served under /files; default paths.static_dir");
  ann->add_option("--host", host, "Bind address; default serve.host");
  ann->add_option("--port", port, "Port; default serve.port");
  ann->callback([&g] {
    const auto cfg = g.load();
    svc::ServiceOptions opts;
    opts.lease = std::chrono::minutes(cfg.serve.lease_minutes);
    opts.compact_every = cfg.serve.compact_every;
    auto service = svc::AnnotationService::open(data_dir.empty() ? cfg.paths.annotation_dir : data_dir, opts);
    fs::path files = static_dir.empty() ? fs::path(cfg.paths.static_dir) : fs::path(static_dir);
    if (!fs::is_directory(files)) {
      std::cerr << "static directory " << files << " not found; /files disabled\n";
      files.clear();
    }
    svc::AnnotationServer server(service, files);
    const auto h = host.empty() ? cfg.serve.host : host;
    const int p = port.value_or(cfg.serve.port);
    std::cerr << "serving on http://" << h << ":" << p << "\n";
    server.listen(h, p);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowrl: flow-matching RL toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "RunConfig JSON; unknown keys are rejected");
  app.add_option("--seed", g.seed, "Seed override for the command's random streams");
  add_flow(app, g);
  add_rl(app, g);
  add_bench(app, g);
  add_data(app, g);
  add_toy(app, g);
  add_judge(app, g);
  add_serve(app, g);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const flowrl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
