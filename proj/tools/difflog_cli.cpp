#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "difflog/datagen.hpp"
#include "difflog/engine.hpp"
#include "difflog/learner.hpp"
#include "difflog/oracle_suite.hpp"
#include "difflog/parser.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace difflog {
namespace {

constexpr const char* kArtifactVersion = "0.1.0";

// Bad input files or flag values; exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot read '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw InputError(fmt::format("failed writing '{}'", path.string()));
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

json file_entry(const std::string& path, std::string_view contents) {
  return {{"path", path}, {"sha256", sha256_hex(contents)}};
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
}

std::size_t default_threads() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Program, vocabulary and the rules every pass carries.
struct LoadedProgram {
  std::string text;
  ProgramModel model;
};

LoadedProgram load_program_file(const std::string& path) {
  LoadedProgram p;
  if (path.empty()) {
    p.model.vocabulary = Vocabulary::kinship();
    return p;
  }
  p.text = read_file(path);
  p.model = load_program(p.text);
  return p;
}

// Rule weights from a checkpoint, or from a priors file (composites at their
// listed weight, everything else zero).
struct LoadedWeights {
  TrainState state;
  RulePriors priors;
  json manifest_entry;
};

LoadedWeights load_weights(const std::string& checkpoint, const std::string& rules,
                           const Vocabulary& vocab, const TrainConfig& config) {
  if (!checkpoint.empty() && !rules.empty()) {
    throw InputError("give either --checkpoint or --rules, not both");
  }
  if (!checkpoint.empty()) {
    const std::string text = read_file(checkpoint);
    try {
      return {load_checkpoint(text, vocab), {}, file_entry(checkpoint, text)};
    } catch (const std::invalid_argument& e) {
      throw InputError(fmt::format("{}: {}", checkpoint, e.what()));
    }
  }
  RuleWeightStore store(vocab.size());
  RulePriors priors;
  json entry;
  if (!rules.empty()) {
    const std::string text = read_file(rules);
    priors = parse_rule_priors(text, vocab);
    for (const auto& [t, w] : priors) {
      if (t.kind() == TemplateKind::composite) store.set(t, w);
    }
    entry = file_entry(rules, text);
  } else {
    throw InputError("missing --checkpoint (or --rules)");
  }
  return {TrainState::fresh(std::move(store), config), std::move(priors), std::move(entry)};
}

std::vector<Sample> load_dataset(const std::string& path, const Vocabulary& vocab,
                                 std::string* contents = nullptr) {
  const std::string text = read_file(path);
  if (contents) *contents = text;
  try {
    return parse_dataset(text, vocab);
  } catch (const ParseError& e) {
    throw InputError(fmt::format("{}:{}", path, e.what()));
  }
}

json config_json(const TrainConfig& c) {
  return {{"w1", c.w1},
          {"w2", c.w2},
          {"w_result_ic", c.result_ic_weight},
          {"w_rule_ic", c.rule_ic_weight},
          {"sample_rules", c.sample_n},
          {"top_rules", c.top_n},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"rule_lr", c.rule_lr},
          {"fact_lr", c.fact_lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"init_max", c.init_max},
          {"toggle_every", c.toggle_every},
          {"learn_fact_confidence", c.learn_fact_confidence},
          {"topk", c.top_k},
          {"max_iters", c.max_iterations},
          {"seed", c.seed},
          {"threads", c.threads}};
}

json manifest(const std::string& command, json config, json inputs) {
  return {{"artifact", "difflog"},
          {"version", kArtifactVersion},
          {"command", command},
          {"config", std::move(config)},
          {"inputs", std::move(inputs)}};
}

void add_model_flags(CLI::App* cmd, TrainConfig& c) {
  cmd->add_option("--topk", c.top_k, "Proofs kept per derived atom")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", c.max_iterations, "Fixpoint iteration cap");
  cmd->add_option("--top-rules", c.top_n, "Rules used at test time");
  cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::string train = "1000x2,1000x3";
  std::string test = "50x2..10";
  std::uint64_t seed = 0;
  std::size_t distractors = 0;
  std::string oracle;
};

int cmd_gen_data(const GenDataArgs& a) {
  std::optional<CompositionOracle> custom;
  json inputs = json::object();
  if (!a.oracle.empty()) {
    const std::string text = read_file(a.oracle);
    custom.emplace(CompositionOracle::from_priors(parse_rule_priors(text, Vocabulary::kinship()),
                                                  Vocabulary::kinship()));
    inputs["oracle"] = file_entry(a.oracle, text);
  }
  const CompositionOracle& oracle = custom ? *custom : CompositionOracle::kinship();
  std::vector<std::pair<int, std::size_t>> train_counts;
  std::vector<std::pair<int, std::size_t>> test_counts;
  try {
    train_counts = parse_counts(a.train);
    test_counts = parse_counts(a.test);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const fs::path dir(a.out);
  make_dir(dir);
  json outputs = json::object();
  // The test split uses a different stream so its chains are independent.
  const std::pair<const char*, std::vector<std::pair<int, std::size_t>>*> splits[] = {
      {"train", &train_counts}, {"test", &test_counts}};
  std::uint64_t stream = 0;
  for (const auto& [name, counts] : splits) {
    GenSpec spec;
    spec.counts = *counts;
    spec.seed = a.seed * 2 + stream++;
    spec.options.distractors = a.distractors;
    const std::string text = generate_dataset(spec, oracle);
    const fs::path path = dir / fmt::format("{}.jsonl", name);
    write_file(path, text);
    outputs[name] = {{"file", path.filename().string()}, {"sha256", sha256_hex(text)},
                     {"records", text.empty() ? 0 : std::count(text.begin(), text.end(), '\n')}};
    fmt::print("wrote {} ({})\n", path.string(), sha256_hex(text));
  }
  json m = manifest("gen-data",
                    {{"seed", a.seed}, {"train", a.train}, {"test", a.test},
                     {"distractors", a.distractors}},
                    std::move(inputs));
  m["outputs"] = std::move(outputs);
  write_file(dir / "manifest.json", m.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string program;
  std::string train;
  std::string priors;
  std::string eval;
  std::string out;
  TrainConfig config;
};

int cmd_train(TrainArgs a) {
  const LoadedProgram program = load_program_file(a.program);
  const Vocabulary& vocab = program.model.vocabulary;
  try {
    a.config.validate(vocab.size());
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  json inputs = json::object();
  if (!a.program.empty()) inputs["program"] = file_entry(a.program, program.text);
  std::string train_text;
  const auto data = load_dataset(a.train, vocab, &train_text);
  if (data.empty()) throw InputError(fmt::format("training file '{}' has no records", a.train));
  inputs["train"] = file_entry(a.train, train_text);
  RulePriors priors;
  if (!a.priors.empty()) {
    const std::string text = read_file(a.priors);
    priors = parse_rule_priors(text, vocab);
    inputs["priors"] = file_entry(a.priors, text);
  }
  std::vector<Sample> eval_data;
  if (!a.eval.empty()) {
    std::string text;
    eval_data = load_dataset(a.eval, vocab, &text);
    inputs["eval"] = file_entry(a.eval, text);
  }

  const fs::path dir(a.out);
  make_dir(dir);
  // The manifest is written before any training step.
  write_file(dir / "manifest.json",
             manifest("train", config_json(a.config), std::move(inputs)).dump(2) + "\n");

  const ModelContext ctx = make_model_context(program.model, priors, true);
  std::mt19937_64 rng(a.config.seed);
  TrainState state = TrainState::fresh(
      init_rule_weights(priors, vocab.size(), rng, a.config.init_max), a.config);

  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
  if (!metrics) throw InputError("cannot write metrics log");
  TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochMetrics& m) {
    metrics << metrics_json(m) << '\n';
    std::string line = fmt::format("epoch {:>3}  loss {:.4f}  train acc {:.3f}", m.epoch, m.loss,
                                   m.overall.accuracy());
    if (!eval_data.empty()) {
      const EvalReport r =
          evaluate(eval_data, state.weights, state.fact_confidence, a.config, ctx);
      EpochMetrics e;
      e.epoch = m.epoch;
      e.split = "eval";
      e.overall = r.overall;
      e.per_k = r.per_k;
      metrics << metrics_json(e) << '\n';
      line += fmt::format("  eval acc {:.3f}", r.overall.accuracy());
    }
    metrics.flush();
    fmt::print("{}\n", line);
    std::fflush(stdout);
  };
  try {
    train(data, a.config, ctx, state, callbacks);
  } catch (const NumericError& e) {
    write_file(dir / "checkpoint.failed.json", save_checkpoint(state, vocab));
    throw;
  }
  write_file(dir / "checkpoint.json", save_checkpoint(state, vocab));
  fmt::print("wrote {}\n", (dir / "checkpoint.json").string());
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string program;
  std::string checkpoint;
  std::string rules;
  std::string test;
  std::string report;
  TrainConfig config;
};

int cmd_eval(const EvalArgs& a) {
  const LoadedProgram program = load_program_file(a.program);
  const Vocabulary& vocab = program.model.vocabulary;
  LoadedWeights w = load_weights(a.checkpoint, a.rules, vocab, a.config);
  const auto data = load_dataset(a.test, vocab);
  const ModelContext ctx = make_model_context(program.model, w.priors, false);
  const EvalReport r = evaluate(data, w.state.weights, w.state.fact_confidence, a.config, ctx);

  fmt::print("{:>5}  {:>7}  {:>5}  {:>8}\n", "k", "correct", "total", "accuracy");
  std::string lines;
  for (const auto& [k, acc] : r.per_k) {
    fmt::print("{:>5}  {:>7}  {:>5}  {:>8.4f}\n", k, acc.correct, acc.total, acc.accuracy());
    lines += json{{"k", k}, {"correct", acc.correct}, {"total", acc.total},
                  {"accuracy", acc.accuracy()}}.dump() + "\n";
  }
  if (r.overall.total) {
    fmt::print("{:>5}  {:>7}  {:>5}  {:>8.4f}\n", "all", r.overall.correct, r.overall.total,
               r.overall.accuracy());
  }
  lines += json{{"k", "all"}, {"correct", r.overall.correct}, {"total", r.overall.total},
                {"accuracy", r.overall.accuracy()}}.dump() + "\n";
  if (!a.report.empty()) write_file(a.report, lines);
  return 0;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string program;
  std::string checkpoint;
  std::string rules;
  std::string match;
  std::size_t top = 10;
};

int cmd_export_rules(const ExportArgs& a) {
  const LoadedProgram program = load_program_file(a.program);
  const Vocabulary& vocab = program.model.vocabulary;
  const LoadedWeights w = load_weights(a.checkpoint, a.rules, vocab, TrainConfig{});
  fmt::print("{}", export_rules(w.state.weights, a.top, vocab));
  if (!a.match.empty()) {
    const RulePriors reference = parse_rule_priors(read_file(a.match), vocab);
    fmt::print("# matches {}/{}\n", count_matches(w.state.weights, a.top, reference),
               std::min(a.top, w.state.weights.size()));
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string program;
  std::string checkpoint;
  std::string rules;
  std::string kb;
  std::string query;
  TrainConfig config;
};

int cmd_infer(const InferArgs& a) {
  const LoadedProgram program = load_program_file(a.program);
  const Vocabulary& vocab = program.model.vocabulary;
  const LoadedWeights w = load_weights(a.checkpoint, a.rules, vocab, a.config);
  const ModelContext ctx = make_model_context(program.model, w.priors, false);

  Sample sample;
  try {
    sample.facts = parse_kb(read_file(a.kb), vocab);
  } catch (const ParseError& e) {
    throw InputError(fmt::format("{}:{}", a.kb, e.what()));
  }
  const auto comma = a.query.find(',');
  if (comma == std::string::npos) throw InputError("--query expects SUB,OBJ");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  sample.query_sub = trim(a.query.substr(0, comma));
  sample.query_obj = trim(a.query.substr(comma + 1));

  for (std::size_t i = 0; i < sample.facts.size(); ++i) {
    const auto& f = sample.facts[i];
    if (f.relation.value < vocab.size()) {
      sample.facts[i].prob = f.prob * w.state.fact_confidence[f.relation.value];
    }
  }
  FactStore store = load_kb(sample, vocab.size());
  for (const auto& warning : store.warnings()) fmt::print(stderr, "warning: {}\n", warning);
  const auto rules = inference_rules(w.state.weights, a.config.top_n, ctx);
  std::vector<BoundRule> bound;
  for (const auto& r : rules) {
    std::optional<VarId> var;
    if (r.weight) var = store.variables().add(VarOrigin::rule, std::min(*r.weight, 1.0));
    bound.push_back({r.rule, var, r.source});
  }
  const FixpointReport fp = fixpoint(store, bound, {a.config.top_k, a.config.max_iterations});
  ForwardTrace trace;
  const AnswerDistribution y = answer_distribution(store, sample.query_sub, sample.query_obj,
                                                   &trace);

  fmt::print("query ({}, {})  top-k {}  iterations {}{}\n", sample.query_sub, sample.query_obj,
             a.config.top_k, fp.iterations, fp.saturated ? "" : " (iteration cap reached)");
  bool any = false;
  for (std::uint32_t r = 0; r < y.size(); ++r) {
    if (y[r] > 0.0) {
      fmt::print("{} {:.6g}\n", vocab.name(RelationId{r}), y[r]);
      any = true;
    }
  }
  if (!any) {
    fmt::print("no answer\n");
    return 0;
  }
  const RelationId best = predict(y);
  fmt::print("prediction {} {:.6g}\n", vocab.name(best), y[best.value]);

  // Variable index -> readable literal.
  std::vector<std::string> literal(store.variables().size());
  for (const auto& f : store.facts()) {
    literal[f.var.index] =
        fmt::format("{}({}, {})::{:.6g}", vocab.name(f.pred), store.entities().name(f.sub),
                    store.entities().name(f.obj), f.prob);
  }
  for (const auto& b : bound) {
    if (b.weight_var) {
      literal[b.weight_var->index] = fmt::format(
          "[{}]::{:.6g}", format_rule(b.rule, vocab), store.variables().prob(*b.weight_var));
    }
  }
  const auto probs = store.variables().probabilities();
  const Tag& tag = *trace.answer_tags[best.value];
  std::vector<const Proof*> proofs;
  for (const auto& p : tag.proofs()) proofs.push_back(&p);
  std::stable_sort(proofs.begin(), proofs.end(), [&](const Proof* x, const Proof* y2) {
    return x->probability(probs) > y2->probability(probs);
  });
  fmt::print("proofs {}\n", proofs.size());
  for (const Proof* p : proofs) {
    std::string body;
    for (auto v : p->vars()) {
      if (!body.empty()) body += " ∧ ";
      body += literal[v];
    }
    fmt::print("  {:.6g}  {}\n", p->probability(probs), body.empty() ? "true" : body);
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_check_wmc(const OracleSuiteConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  const OracleSuiteReport r = run_oracle_suite(c);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fmt::print("wmc vs brute force: {} formulas, {} failures, max error {:.3g}\n", r.formulas,
             r.value_failures, r.max_value_error);
  fmt::print("gradient vs finite differences: {} partials, {} failures, max relative error "
             "{:.3g}\n",
             r.gradients, r.gradient_failures, r.max_gradient_error);
  fmt::print("{} in {:.2f} s\n", r.passed() ? "PASS" : "FAIL", seconds);
  return r.passed() ? 0 : 3;
}

int run(int argc, char** argv) {
  CLI::App app{"Differentiable probabilistic Datalog for kinship reasoning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kArtifactVersion);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate train/test chain datasets");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--train", gen.train, "Train counts, e.g. 1000x2,1000x3");
  gen_cmd->add_option("--test", gen.test, "Test counts, e.g. 50x2..10");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--distractors", gen.distractors, "Distractor edges per sample");
  gen_cmd->add_option("--oracle", gen.oracle, "Composition table (priors format)")
      ->check(CLI::ExistingFile);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Learn rule weights");
  train_cmd->add_option("--program", tr.program, "Program file")->check(CLI::ExistingFile);
  train_cmd->add_option("--train", tr.train, "Training dataset")->required();
  train_cmd->add_option("--priors", tr.priors, "Rule prior weights");
  train_cmd->add_option("--eval", tr.eval, "Dataset evaluated after every epoch");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--epochs", tr.config.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", tr.config.batch_size, "Samples per batch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--sample-rules", tr.config.sample_n, "Rules sampled per batch");
  train_cmd->add_option("--rule-lr", tr.config.rule_lr, "Adam learning rate for rule weights");
  train_cmd->add_option("--fact-lr", tr.config.fact_lr, "Adam learning rate for fact confidences");
  train_cmd->add_option("--w1", tr.config.w1, "Deduction loss weight");
  train_cmd->add_option("--w2", tr.config.w2, "Semantic loss weight");
  train_cmd->add_option("--w-result-ic", tr.config.result_ic_weight, "Weight of each result constraint violation");
  train_cmd->add_option("--w-rule-ic", tr.config.rule_ic_weight, "Weight of each rule constraint violation");
  train_cmd->add_option("--init-max", tr.config.init_max, "Upper end of random init");
  train_cmd->add_option("--toggle-every", tr.config.toggle_every, "Batches between optimizer switches")->check(CLI::PositiveNumber);
  train_cmd->add_flag("--learn-fact-confidence", tr.config.learn_fact_confidence, "Also learn per-relation fact confidences");
  train_cmd->add_option("--beta1", tr.config.beta1, "Adam first-moment decay");
  train_cmd->add_option("--beta2", tr.config.beta2, "Adam second-moment decay");
  train_cmd->add_option("--adam-eps", tr.config.eps, "Adam epsilon");
  train_cmd->add_option("--seed", tr.config.seed, "Training seed");
  tr.config.threads = default_threads();
  add_model_flags(train_cmd, tr.config);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Per-k accuracy of a checkpoint");
  eval_cmd->add_option("--program", ev.program)->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate");
  eval_cmd->add_option("--rules", ev.rules, "Rule weights in priors format");
  eval_cmd->add_option("--test", ev.test)->required();
  eval_cmd->add_option("--report", ev.report, "Line-delimited JSON report");
  ev.config.threads = default_threads();
  add_model_flags(eval_cmd, ev.config);

  ExportArgs ex;
  auto* export_cmd = app.add_subcommand("export-rules", "List the most confident rules");
  export_cmd->add_option("--program", ex.program)->check(CLI::ExistingFile);
  export_cmd->add_option("--checkpoint", ex.checkpoint);
  export_cmd->add_option("--rules", ex.rules);
  export_cmd->add_option("--top", ex.top, "Number of rules");
  export_cmd->add_option("--match", ex.match, "Reference rules to count matches against");

  InferArgs in;
  auto* infer_cmd = app.add_subcommand("infer", "Answer one query with proofs");
  infer_cmd->add_option("--program", in.program)->check(CLI::ExistingFile);
  infer_cmd->add_option("--checkpoint", in.checkpoint);
  infer_cmd->add_option("--rules", in.rules);
  infer_cmd->add_option("--kb", in.kb, "Facts, one `p::rel(a, b)` per line")->required();
  infer_cmd->add_option("--query", in.query, "SUB,OBJ")->required();
  in.config.threads = 1;
  add_model_flags(infer_cmd, in.config);

  OracleSuiteConfig oc;
  auto* check_cmd = app.add_subcommand("check-wmc", "Run the WMC oracle suite");
  check_cmd->add_option("--formulas", oc.formulas);
  check_cmd->add_option("--gradient-formulas", oc.gradient_formulas);
  check_cmd->add_option("--max-vars", oc.max_vars)->check(CLI::Range(1, 20));
  check_cmd->add_option("--max-depth", oc.max_depth);
  check_cmd->add_option("--seed", oc.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*gen_cmd) return cmd_gen_data(gen);
  if (*train_cmd) return cmd_train(tr);
  if (*eval_cmd) return cmd_eval(ev);
  if (*export_cmd) return cmd_export_rules(ex);
  if (*infer_cmd) return cmd_infer(in);
  if (*check_cmd) return cmd_check_wmc(oc);
  return 2;
}

}  // namespace
}  // namespace difflog

int main(int argc, char** argv) {
  try {
    return difflog::run(argc, argv);
  } catch (const difflog::NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return 3;
  } catch (const difflog::InputError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const difflog::ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const difflog::GenerationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return 1;
  }
}
