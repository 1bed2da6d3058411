// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "adaeval/cli.hpp"
#include "adaeval/data.hpp"
#include "adaeval/errors.hpp"
#include "adaeval/evalkit.hpp"
#include "adaeval/liteeval.hpp"

namespace adaeval::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using liteeval::ModelConfig;

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string(), {{"path", path.string()}});
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string(), {{"path", path.string()}});
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), {{"path", path.string()}});
  }
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size() || s.front() == '-')
    throw ConfigError(std::string(what) + ": not an unsigned integer", {{"field", what}, {"value", s}});
  return v;
}

// --seed wins, then ADAEVAL_SEED, then the fallback.
std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value,
                           std::uint64_t fallback) {
  if (flag->count() > 0) return flag_value;
  if (const char* env = std::getenv("ADAEVAL_SEED")) return parse_u64(env, "ADAEVAL_SEED");
  return fallback;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size())
      throw ConfigError(std::string(what) + ": not a number", {{"field", what}, {"value", item}});
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list", {{"field", what}});
  return out;
}

// nullopt stands for an unlimited budget ("inf").
std::vector<std::optional<std::size_t>> parse_budgets(const std::string& s) {
  std::vector<std::optional<std::size_t>> out;
  for (const auto& item : split_list(s)) {
    if (item == "inf") out.emplace_back();
    else out.emplace_back(parse_u64(item, "budgets"));
  }
  if (out.empty()) throw ConfigError("budgets: empty list", {{"field", "budgets"}});
  return out;
}

// Model hyperparameter flags shared by train and ablate.
struct ModelFlags {
  double gamma = 0, lambda = 0, lr = 0, tau0 = 0, tau_min = 0, tau_decay = 0;
  int epochs = 0;
  std::size_t hc = 0, hf = 0, batch = 0;
  bool force_fine = false, force_coarse = false, no_sync = false;
  std::vector<CLI::Option*> opts;
  CLI::Option *o_gamma, *o_lambda, *o_lr, *o_tau0, *o_tau_min, *o_tau_decay, *o_epochs,
      *o_hc, *o_hf, *o_batch;

  void add(CLI::App* app) {
    o_gamma = app->add_option("--gamma", gamma, "target fine-read fraction (default 0.05)");
    o_lambda = app->add_option("--lambda", lambda, "usage penalty weight (default 2)");
    o_epochs = app->add_option("--epochs", epochs, "training epochs (default 30)");
    o_lr = app->add_option("--lr", lr, "Adam learning rate (default 1e-4)");
    o_hc = app->add_option("--hc", hc, "coarse LSTM hidden size (default 8)");
    o_hf = app->add_option("--hf", hf, "fine LSTM hidden size (default 32)");
    o_batch = app->add_option("--batch-size", batch, "mini-batch size (default 32)");
    o_tau0 = app->add_option("--tau0", tau0, "initial temperature (default 5)");
    o_tau_min = app->add_option("--tau-min", tau_min, "temperature floor (default 0.5)");
    o_tau_decay = app->add_option("--tau-decay", tau_decay, "per-epoch decay (default 0.9)");
    auto* ff = app->add_flag("--force-fine", force_fine, "gate always reads fine features");
    auto* fc = app->add_flag("--force-coarse", force_coarse, "gate never reads fine features");
    ff->excludes(fc);
    app->add_flag("--no-sync", no_sync, "keep the fine state verbatim on skipped steps");
  }

  void apply(ModelConfig& c) const {
    if (o_gamma->count()) c.gamma = gamma;
    if (o_lambda->count()) c.lambda = lambda;
    if (o_epochs->count()) c.epochs = epochs;
    if (o_lr->count()) c.learning_rate = lr;
    if (o_hc->count()) c.coarse_hidden = hc;
    if (o_hf->count()) c.fine_hidden = hf;
    if (o_batch->count()) c.batch_size = batch;
    if (o_tau0->count()) c.tau.tau0 = tau0;
    if (o_tau_min->count()) c.tau.tau_min = tau_min;
    if (o_tau_decay->count()) c.tau.decay_rate = tau_decay;
    if (force_fine) c.gate_policy = liteeval::GatePolicy::kAlwaysFine;
    if (force_coarse) c.gate_policy = liteeval::GatePolicy::kAlwaysCoarse;
    if (no_sync) c.sync = false;
  }
};

ModelConfig config_for(const data::DatasetManifest& m) {
  ModelConfig c;
  c.coarse_dim = m.coarse_dim;
  c.fine_dim = m.fine_dim;
  c.num_classes = static_cast<std::size_t>(m.num_classes);
  c.steps = m.steps;
  return c;
}

void check_compatible(const ModelConfig& c, const data::DatasetManifest& m) {
  if (c.coarse_dim != m.coarse_dim || c.fine_dim != m.fine_dim || c.steps != m.steps ||
      c.num_classes != static_cast<std::size_t>(m.num_classes)) {
    throw DimensionError(
        "checkpoint and dataset disagree on dims",
        {{"checkpoint", {{"T", c.steps}, {"Dc_feat", c.coarse_dim},
                         {"Df_feat", c.fine_dim}, {"num_classes", c.num_classes}}},
         {"dataset", {{"T", m.steps}, {"Dc_feat", m.coarse_dim},
                      {"Df_feat", m.fine_dim}, {"num_classes", m.num_classes}}}});
  }
}

std::string abs_str(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string spec_path, out;
  std::size_t train = 0, val = 0, test = 0;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  data::SyntheticSpec spec;
  if (!a.spec_path.empty()) spec = data::SyntheticSpec::from_json(read_json(a.spec_path));
  spec.seed = resolve_seed(a.seed_opt, a.seed, spec.seed);
  spec.validate();
  if (a.train == 0) throw ConfigError("--train must be > 0 (empty split)", {{"field", "train"}});
  auto gen = data::generate_synthetic(spec, {a.train, a.val, a.test});
  data::write_dataset(gen.manifest, gen.samples, a.out);
  write_json(fs::path(a.out) / "resolved_config.json",
             {{"command", "gen-data"},
              {"spec", spec.to_json()},
              {"sizes", {{"train", a.train}, {"val", a.val}, {"test", a.test}}}});
  const auto& m = gen.manifest;
  out << "dataset " << a.out << ": " << m.num_classes << " classes, T=" << m.steps
      << ", Dc_feat=" << m.coarse_dim << ", Df_feat=" << m.fine_dim;
  for (const auto& [name, entries] : m.splits) out << ", " << name << "=" << entries.size();
  out << ", checksum " << m.checksum() << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, split_train = "train", split_val = "val";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  bool quiet = false;
  ModelFlags model;
};

struct TrainedRun {
  liteeval::TrainResult result;
  ModelConfig config;
};

TrainedRun train_into(const data::Dataset& ds, ModelConfig config,
                      const std::string& split_train, const std::string& split_val,
                      const fs::path& out_dir, std::ostream* progress) {
  config.validate();
  const auto train_set = ds.load_split(split_train);
  const auto val_set = ds.has_split(split_val) ? ds.load_split(split_val)
                                               : std::vector<data::VideoSample>{};
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw DataError("cannot write training log", {{"path", (out_dir / "train_log.jsonl").string()}});
  auto on_epoch = [&](const liteeval::EpochLog& e) {
    log << e.to_json().dump() << "\n";
    log.flush();
    if (progress) {
      *progress << "epoch " << e.epoch << " tau=" << fixed(e.tau, 3)
                << " loss=" << fixed(e.train_loss) << " usage=" << fixed(e.train_usage)
                << " val_top1=" << fixed(e.val_top1) << " val_usage=" << fixed(e.val_usage)
                << "\n";
    }
  };
  TrainedRun run{liteeval::train(config, train_set, val_set, on_epoch), config};
  liteeval::save_checkpoint(run.result.params, config, out_dir);
  write_json(out_dir / "resolved_config.json",
             {{"command", "train"},
              {"data", abs_str(ds.root())},
              {"split_train", split_train},
              {"split_val", split_val},
              {"dataset_checksum", ds.manifest().checksum()},
              {"model_config", config.to_json()}});
  return run;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto ds = data::Dataset::open(a.data);
  ModelConfig config = config_for(ds.manifest());
  a.model.apply(config);
  config.seed = resolve_seed(a.seed_opt, a.seed, 0);
  const auto run = train_into(ds, config, a.split_train, a.split_val, a.out,
                              a.quiet ? nullptr : &out);
  if (run.result.log.empty()) {
    out << "trained 0 epochs; checkpoint written to " << a.out << "\n";
  } else {
    const auto& last = run.result.log.back();
    out << "final val_usage=" << fixed(last.val_usage) << " val_top1=" << fixed(last.val_top1)
        << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, split, mode = "offline", budgets = "1,2,4,8", cost_mode = "full",
              out, fine_ckpt;
};

std::string pick_split(const data::Dataset& ds, const std::string& requested) {
  if (!requested.empty()) return requested;
  for (const char* s : {"test", "val", "all", "train"})
    if (ds.has_split(s)) return s;
  throw DataError("dataset has no splits");
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto ck = liteeval::load_checkpoint(a.ckpt);
  const auto ds = data::Dataset::open(a.data);
  check_compatible(ck.config, ds.manifest());
  const auto mode = evalkit::cost_mode_from_string(a.cost_mode);
  const std::string split = pick_split(ds, a.split);
  const auto samples = ds.load_split(split);
  const fs::path out_dir = a.out.empty() ? fs::path(a.ckpt) / "eval" : fs::path(a.out);

  std::vector<evalkit::EvalResult> results;
  json resolved = {{"command", "eval"},
                   {"ckpt", abs_str(a.ckpt)},
                   {"data", abs_str(a.data)},
                   {"split", split},
                   {"mode", a.mode},
                   {"cost_mode", a.cost_mode},
                   {"cost_model", evalkit::CostModel::for_mode(mode).to_json()},
                   {"model_config", ck.config.to_json()}};

  if (a.mode == "offline") {
    auto r = evalkit::eval_offline(ck.params, ck.config, samples, mode);
    out << "offline split=" << split << " mAP=" << fixed(r.map) << " top1=" << fixed(r.top1)
        << " mean_gflops=" << fixed(r.mean_gflops) << " usage=" << fixed(r.mean_usage) << "\n";
    results.push_back(std::move(r));
  } else {
    const auto budgets = parse_budgets(a.budgets);
    resolved["budgets"] = a.budgets;
    std::optional<liteeval::Checkpoint> fine;
    std::vector<liteeval::StepTrace> frames;
    if (!a.fine_ckpt.empty()) {
      fine = liteeval::load_checkpoint(a.fine_ckpt);
      check_compatible(fine->config, ds.manifest());
      frames = evalkit::per_frame_traces(fine->params, fine->config, samples);
      resolved["fine_ckpt"] = abs_str(a.fine_ckpt);
    }
    out << "budget_K,mean_gflops,top1,method\n";
    for (const auto& k : budgets) {
      evalkit::EvalResult r;
      if (k) {
        r = evalkit::eval_online(ck.params, ck.config, samples, *k, mode);
      } else {
        r = evalkit::eval_offline(ck.params, ck.config, samples, mode);
        r.protocol = "online";
      }
      std::vector<evalkit::EvalResult> row{r};
      if (fine && k && *k > 0) {
        row.push_back(evalkit::baseline_uniform_k(frames, samples, *k, r.stop_steps(),
                                                  ck.config.num_classes, mode));
        row.push_back(evalkit::baseline_seq_k(frames, samples, *k, ck.config.num_classes, mode));
      }
      out << evalkit::curves_csv(row).substr(std::string("budget_K,mean_gflops,top1,method\n").size());
      for (auto& x : row) results.push_back(std::move(x));
    }
  }
  evalkit::write_results_json(out_dir / "results.json", results, resolved);
  evalkit::write_curves_csv(out_dir / "curves.csv", results);
  write_json(out_dir / "resolved_config.json", resolved);
  return 0;
}

struct AblateArgs {
  std::string what, data, out, split_train = "train", split_val = "val", cost_mode = "full",
              gammas = "0.05,0.2,0.5", hc_values = "2,8,32";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::size_t jobs = 1;
  ModelFlags model;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const auto ds = data::Dataset::open(a.data);
  const auto mode = evalkit::cost_mode_from_string(a.cost_mode);
  ModelConfig base = config_for(ds.manifest());
  a.model.apply(base);
  base.seed = resolve_seed(a.seed_opt, a.seed, 0);

  // Variants share the base seed so the comparison is paired.
  std::vector<std::pair<std::string, ModelConfig>> variants;
  if (a.what == "sync") {
    ModelConfig off = base;
    off.sync = false;
    variants = {{"sync", base}, {"no_sync", off}};
  } else if (a.what == "gamma") {
    for (double g : parse_doubles(a.gammas, "gammas")) {
      ModelConfig c = base;
      c.gamma = g;
      variants.emplace_back("gamma_" + nlohmann::json(g).dump(), c);
    }
  } else if (a.what == "hidden") {
    for (double h : parse_doubles(a.hc_values, "hc_values")) {
      if (h < 1 || h != static_cast<double>(static_cast<std::size_t>(h)))
        throw ConfigError("hc_values: sizes must be positive integers", {{"value", h}});
      ModelConfig c = base;
      c.coarse_hidden = static_cast<std::size_t>(h);
      variants.emplace_back("hc_" + std::to_string(c.coarse_hidden), c);
    }
  } else {
    throw ConfigError("--what must be sync, gamma or hidden", {{"field", "what"}, {"value", a.what}});
  }
  for (const auto& [_, c] : variants) c.validate();

  const std::string split = a.split_val;
  const auto eval_set = ds.load_split(split);
  std::vector<evalkit::EvalResult> results(variants.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= variants.size()) return;
      try {
        const auto& [name, config] = variants[i];
        const fs::path dir = fs::path(a.out) / name;
        const auto run = train_into(ds, config, a.split_train, a.split_val, dir, nullptr);
        auto r = evalkit::eval_offline(run.result.params, config, eval_set, mode, name);
        evalkit::write_results_json(dir / "results.json", std::span(&r, 1),
                                    {{"command", "ablate"}, {"what", a.what}, {"variant", name},
                                     {"split", split}, {"model_config", config.to_json()}});
        results[i] = std::move(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(a.jobs, variants.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::ostringstream csv;
  csv << "variant,gamma,Hc,Hf,sync,top1,mAP,mean_gflops,mean_usage\n";
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& c = variants[i].second;
    const auto& r = results[i];
    csv << variants[i].first << ',' << json(c.gamma).dump() << ',' << c.coarse_hidden << ','
        << c.fine_hidden << ',' << (c.sync ? "true" : "false") << ',' << json(r.top1).dump()
        << ',' << json(r.map).dump() << ',' << json(r.mean_gflops).dump() << ','
        << json(r.mean_usage).dump() << '\n';
  }
  write_text(fs::path(a.out) / "ablation.csv", csv.str());
  json vlist = json::array();
  for (const auto& [name, c] : variants) vlist.push_back({{"name", name}, {"model_config", c.to_json()}});
  write_json(fs::path(a.out) / "resolved_config.json",
             {{"command", "ablate"}, {"what", a.what}, {"data", abs_str(a.data)},
              {"split_train", a.split_train}, {"split_val", a.split_val},
              {"cost_mode", a.cost_mode}, {"jobs", a.jobs}, {"variants", vlist}});
  out << csv.str();
  return 0;
}

struct ReportArgs {
  std::string runs, out;
};

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(a.runs))
    throw DataError("runs directory does not exist", {{"path", a.runs}});
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a.runs))
    if (e.is_regular_file() && e.path().filename() == "results.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no results.json found", {{"path", a.runs}});

  std::ostringstream csv;
  csv << "source,method,protocol,budget_K,cost_mode,top1,mAP,mean_gflops,mean_usage\n";
  std::size_t ok = 0;
  for (const auto& f : files) {
    std::vector<evalkit::EvalResult> rs;
    try {
      rs = evalkit::read_results_json(f);
    } catch (const Error& e) {
      err << json{{"warning", "skipped_result_file"}, {"path", f.string()}, {"message", e.what()}}.dump()
          << "\n";
      continue;
    }
    ++ok;
    const std::string src = fs::relative(f, a.runs).generic_string();
    for (const auto& r : rs) {
      csv << src << ',' << r.method << ',' << r.protocol << ','
          << (r.budget ? std::to_string(*r.budget) : std::string("inf")) << ',' << r.cost_mode
          << ',' << json(r.top1).dump() << ',' << json(r.map).dump() << ','
          << json(r.mean_gflops).dump() << ',' << json(r.mean_usage).dump() << '\n';
    }
  }
  if (ok == 0)
    throw DataError("every results file was malformed", {{"path", a.runs}, {"files", files.size()}});
  write_text(a.out, csv.str());
  write_json(fs::path(a.out).parent_path() / "resolved_config.json",
             {{"command", "report"}, {"runs", abs_str(a.runs)}, {"out", abs_str(a.out)}});
  out << "report " << a.out << ": " << ok << " of " << files.size() << " result files\n";
  return 0;
}

struct ImportArgs {
  std::string coarse_dir, fine_dir, labels, out;
  int num_classes = 0;
  CLI::Option* classes_opt = nullptr;
};

int cmd_import(const ImportArgs& a, std::ostream& out) {
  std::optional<int> classes;
  if (a.classes_opt->count()) classes = a.num_classes;
  const auto m = data::import_external(a.coarse_dir, a.fine_dir, a.labels, classes);
  data::save_manifest(m, a.out);
  write_json(fs::path(a.out) / "resolved_config.json",
             {{"command", "import"}, {"coarse_dir", abs_str(a.coarse_dir)},
              {"fine_dir", abs_str(a.fine_dir)}, {"labels", abs_str(a.labels)},
              {"num_classes", m.num_classes}});
  out << "imported " << a.out << ": " << m.num_classes << " classes, T=" << m.steps
      << ", Dc_feat=" << m.coarse_dim << ", Df_feat=" << m.fine_dim;
  for (const auto& [name, entries] : m.splits) out << ", " << name << "=" << entries.size();
  out << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"adaeval: adaptive fine-feature evaluation for sequence classification"};
  app.name("adaeval");
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "generate a synthetic dataset");
  g->add_option("--spec", gen.spec_path, "synthetic spec JSON (defaults built in)");
  g->add_option("--out", gen.out, "output dataset directory")->required();
  g->add_option("--train", gen.train, "training videos")->required();
  g->add_option("--val", gen.val, "validation videos");
  g->add_option("--test", gen.test, "test videos");
  gen.seed_opt = g->add_option("--seed", gen.seed, "dataset seed (overrides the spec)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model");
  t->add_option("--data", tr.data, "dataset directory")->required();
  t->add_option("--out", tr.out, "checkpoint directory")->required();
  tr.seed_opt = t->add_option("--seed", tr.seed, "training seed");
  t->add_option("--split-train", tr.split_train, "training split name");
  t->add_option("--split-val", tr.split_val, "validation split name");
  t->add_flag("--quiet", tr.quiet, "no per-epoch progress");
  tr.model.add(t);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--split", ev.split, "split to evaluate (default test, then val)");
  e->add_option("--mode", ev.mode, "offline or online")->check(CLI::IsMember({"offline", "online"}));
  e->add_option("--budgets", ev.budgets, "online fine-read budgets, e.g. 1,2,4,8 or inf");
  e->add_option("--cost-mode", ev.cost_mode, "paper, cnn or full")
      ->check(CLI::IsMember({"paper", "cnn", "full"}));
  e->add_option("--out", ev.out, "output directory (default <ckpt>/eval)");
  e->add_option("--fine-ckpt", ev.fine_ckpt,
                "always-fine checkpoint for the Uniform-K and Seq-K baselines");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "run an ablation matrix");
  a->add_option("--what", ab.what, "sync, gamma or hidden")
      ->required()
      ->check(CLI::IsMember({"sync", "gamma", "hidden"}));
  a->add_option("--data", ab.data, "dataset directory")->required();
  a->add_option("--out", ab.out, "output directory")->required();
  ab.seed_opt = a->add_option("--seed", ab.seed, "training seed shared by all variants");
  a->add_option("--jobs", ab.jobs, "concurrent training runs")->check(CLI::PositiveNumber);
  a->add_option("--split-train", ab.split_train, "training split name");
  a->add_option("--split-val", ab.split_val, "evaluation split name");
  a->add_option("--cost-mode", ab.cost_mode, "paper, cnn or full")
      ->check(CLI::IsMember({"paper", "cnn", "full"}));
  a->add_option("--gammas", ab.gammas, "gamma sweep values");
  a->add_option("--hc-values", ab.hc_values, "coarse hidden sizes for the hidden sweep");
  ab.model.add(a);

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "aggregate results.json files into a CSV");
  r->add_option("--runs", rp.runs, "directory searched recursively")->required();
  r->add_option("--out", rp.out, "output CSV")->required();

  ImportArgs im;
  auto* i = app.add_subcommand("import", "build a manifest over existing feature files");
  i->add_option("--coarse-dir", im.coarse_dir, "directory of <id>.lefx coarse files")->required();
  i->add_option("--fine-dir", im.fine_dir, "directory of <id>.lefx fine files")->required();
  i->add_option("--labels", im.labels, "CSV with header id,label[,split]")->required();
  i->add_option("--out", im.out, "dataset directory for manifest.json")->required();
  im.classes_opt = i->add_option("--num-classes", im.num_classes, "class count (default max label + 1)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << json{{"error", "usage_error"}, {"message", ex.what()}, {"details", json::object()}}.dump()
        << "\n";
    return 2;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen, out);
    if (t->parsed()) return cmd_train(tr, out);
    if (e->parsed()) return cmd_eval(ev, out);
    if (a->parsed()) return cmd_ablate(ab, out);
    if (r->parsed()) return cmd_report(rp, out, err);
    if (i->parsed()) return cmd_import(im, out);
  } catch (const Error& ex) {
    err << ex.to_json().dump() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    err << json{{"error", "internal_error"}, {"message", ex.what()}, {"details", json::object()}}.dump()
        << "\n";
    return 1;
  }
  return 2;
}

}  // namespace adaeval::cli
