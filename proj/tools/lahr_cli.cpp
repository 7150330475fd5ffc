// lahr — command-line driver for corpus synthesis, training, evaluation,
// ablations, mutual-information probes, one-shot routing, and the gateway.
//
// Every artifact-producing run writes `<output>.manifest.json` beside its
// main output: the full argument vector, the seed, the code version, and a
// digest of every corpus input, so the artifact is reproducible from the
// manifest alone.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lahr/baselines.hpp"
#include "lahr/corpus.hpp"
#include "lahr/errors.hpp"
#include "lahr/evalkit.hpp"
#include "lahr/gateway.hpp"
#include "lahr/rng.hpp"
#include "lahr/train.hpp"
#include "lahr/version.hpp"

namespace {

using namespace lahr;
using nlohmann::ordered_json;

std::vector<std::string> g_argv;  // captured for manifests

// ---- shared helpers ----------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_manifest(const std::string& beside_path, const std::string& command,
                    uint64_t seed,
                    const std::map<std::string, std::string>& corpus_inputs,
                    const std::vector<std::string>& outputs) {
  ordered_json j;
  j["command"] = command;
  j["arguments"] = g_argv;
  j["seed"] = seed;
  j["code_version"] = kVersion;
  ordered_json inputs = ordered_json::object();
  for (const auto& [path, digest] : corpus_inputs) inputs[path] = digest;
  j["corpus_digests"] = inputs;
  j["outputs"] = outputs;
  write_text_file(beside_path + ".manifest.json", j.dump(2) + "\n");
}

std::vector<RoutingExample> load_corpus_checked(const std::string& path) {
  std::vector<RoutingExample> examples = load_corpus(path);
  if (examples.empty()) {
    throw FormatError("corpus '" + path + "' holds no records");
  }
  const size_t T = examples[0].num_models();
  for (const RoutingExample& ex : examples) {
    if (ex.num_models() != T) {
      throw FormatError("corpus '" + path + "': record '" + ex.id +
                        "' has " + std::to_string(ex.num_models()) +
                        " models, the first record has " + std::to_string(T));
    }
  }
  return examples;
}

// ---- synth ----------------------------------------------------------------------

struct SynthArgs {
  std::string plan_path;
  std::string out_dir = ".";
  std::string prefix = "synth";
  size_t train = 5000, validation = 1000, test = 1000;
  double threshold = 0.8;
};

int run_synth(const SynthArgs& args) {
  const SpecializationPlan plan = load_plan(args.plan_path);
  const CorpusSplit split = generate_synthetic(
      plan, {args.train, args.validation, args.test}, args.threshold);
  const std::string base = args.out_dir + "/" + args.prefix;
  const std::string train_path = base + "-train.jsonl";
  const std::string validation_path = base + "-validation.jsonl";
  const std::string test_path = base + "-test.jsonl";
  save_corpus(split.train, train_path);
  save_corpus(split.validation, validation_path);
  save_corpus(split.test, test_path);
  write_manifest(base, "synth", plan.seed,
                 {{args.plan_path, corpus_digest(args.plan_path)},
                  {train_path, corpus_digest(train_path)},
                  {validation_path, corpus_digest(validation_path)},
                  {test_path, corpus_digest(test_path)}},
                 {train_path, validation_path, test_path});
  std::cout << "synth: " << split.train.size() << " train, "
            << split.validation.size() << " validation, "
            << split.test.size() << " test records under " << base << "-*\n";
  return 0;
}

// ---- normalize --------------------------------------------------------------------

struct NormalizeArgs {
  std::string in_path, out_path;
  double threshold = 0.8;
  bool keep_uninformative = false;
};

int run_normalize(const NormalizeArgs& args) {
  std::vector<RoutingExample> examples = load_corpus_checked(args.in_path);
  const size_t before = examples.size();
  normalize_scores(examples);
  binarize_all(examples, args.threshold);
  if (!args.keep_uninformative) {
    examples = filter_uninformative(examples);
  }
  save_corpus(examples, args.out_path);
  write_manifest(args.out_path, "normalize", 0,
                 {{args.in_path, corpus_digest(args.in_path)}},
                 {args.out_path});
  std::cout << "normalize: " << before << " -> " << examples.size()
            << " records into " << args.out_path << "\n";
  return 0;
}

// ---- split -----------------------------------------------------------------------

struct SplitArgs {
  std::string in_path, train_path, validation_path, test_path;
  std::string fractions = "0.8,0.1,0.1";
  uint64_t seed = 1;
};

int run_split(const SplitArgs& args) {
  std::vector<double> fracs;
  std::stringstream ss(args.fractions);
  std::string item;
  while (std::getline(ss, item, ',')) fracs.push_back(std::stod(item));
  if (fracs.size() != 3) {
    throw ContractError("--fractions needs exactly three comma-separated "
                        "values, got '" + args.fractions + "'");
  }
  const double total = fracs[0] + fracs[1] + fracs[2];
  if (std::abs(total - 1.0) > 1e-9 || fracs[0] <= 0.0 || fracs[1] < 0.0 ||
      fracs[2] < 0.0) {
    throw ContractError("--fractions must be nonnegative and sum to 1");
  }

  std::vector<RoutingExample> examples = load_corpus_checked(args.in_path);
  Rng rng(args.seed);
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  const size_t n = examples.size();
  const size_t n_train = static_cast<size_t>(fracs[0] * n);
  const size_t n_validation = static_cast<size_t>(fracs[1] * n);
  std::vector<RoutingExample> train, validation, test;
  for (size_t i = 0; i < n; ++i) {
    const RoutingExample& ex = examples[order[i]];
    if (i < n_train) {
      train.push_back(ex);
    } else if (i < n_train + n_validation) {
      validation.push_back(ex);
    } else {
      test.push_back(ex);
    }
  }
  save_corpus(train, args.train_path);
  save_corpus(validation, args.validation_path);
  save_corpus(test, args.test_path);
  write_manifest(args.train_path, "split", args.seed,
                 {{args.in_path, corpus_digest(args.in_path)}},
                 {args.train_path, args.validation_path, args.test_path});
  std::cout << "split: " << train.size() << "/" << validation.size() << "/"
            << test.size() << " records\n";
  return 0;
}

// ---- train ------------------------------------------------------------------------

struct TrainArgs {
  std::string train_path, validation_path, out_path;
  std::string method = "lookahead";  // lookahead | mlc | zooter |
                                     // oracle-classifier
  std::string variant = "mlm";
  double lambda = -1.0;  // <0: keep the variant default
  size_t m = 0;          // 0: keep default
  double alpha = -1.0;
  std::string masking;
  bool no_curriculum = false;
  double threshold = -1.0;
  size_t max_query_bytes = 0;
  size_t max_response_bytes = 0;
  double tau = 1.0;
  size_t layers = 0, d_model = 0, heads = 0, d_ff = 0, max_seq = 0;
  size_t epochs = 0;  // 0: variant default (MLM 4, CLM 2)
  size_t batch = 16;
  double lr = 5e-5;
  double weight_decay = 0.01;
  size_t validate_every = 100;
  size_t max_validation = 0;
  uint64_t seed = 1;
  std::string log_path;
};

LookaheadConfig config_from_train_args(const TrainArgs& args, size_t T) {
  LookaheadConfig cfg = args.variant == "clm" ? default_clm_config(T)
                                              : default_mlm_config(T);
  if (args.method != "lookahead") cfg.lambda = 0.0;
  if (args.lambda >= 0.0) cfg.lambda = args.lambda;
  if (args.m > 0) cfg.m = args.m;
  if (args.alpha >= 0.0) cfg.alpha = args.alpha;
  if (!args.masking.empty()) {
    cfg.masking = mask_strategy_from_string(args.masking);
  }
  if (args.no_curriculum) cfg.curriculum = false;
  if (args.threshold >= 0.0) cfg.threshold = args.threshold;
  if (args.max_query_bytes > 0) cfg.max_query_bytes = args.max_query_bytes;
  if (args.max_response_bytes > 0) {
    cfg.max_response_bytes = args.max_response_bytes;
  }
  if (args.layers > 0) cfg.backbone.layers = args.layers;
  if (args.d_model > 0) cfg.backbone.d_model = args.d_model;
  if (args.heads > 0) cfg.backbone.heads = args.heads;
  if (args.d_ff > 0) cfg.backbone.d_ff = args.d_ff;
  if (args.max_seq > 0) cfg.backbone.max_seq = args.max_seq;
  return cfg;
}

std::unique_ptr<TrainableRouter> router_from_train_args(const TrainArgs& args,
                                                        size_t T) {
  const LookaheadConfig cfg = config_from_train_args(args, T);
  if (args.method == "lookahead") {
    if (args.variant == "clm") {
      return std::make_unique<ClmRouter>(cfg, args.seed);
    }
    return std::make_unique<MlmRouter>(cfg, args.seed);
  }
  if (args.method == "mlc") return std::make_unique<MlcRouter>(cfg, args.seed);
  if (args.method == "zooter") {
    return std::make_unique<ZooterRouter>(cfg, args.tau, args.seed);
  }
  if (args.method == "oracle-classifier") {
    return std::make_unique<OracleResponseClassifier>(cfg, args.seed);
  }
  throw ContractError("unknown --method '" + args.method + "'");
}

int run_train(const TrainArgs& args) {
  const std::vector<RoutingExample> train_set =
      load_corpus_checked(args.train_path);
  const std::vector<RoutingExample> validation_set =
      load_corpus_checked(args.validation_path);
  const size_t T = train_set[0].num_models();

  std::unique_ptr<TrainableRouter> router = router_from_train_args(args, T);

  TrainConfig train_cfg;
  train_cfg.epochs =
      args.epochs > 0 ? args.epochs : (args.variant == "clm" ? 2 : 4);
  train_cfg.batch_size = args.batch;
  train_cfg.optim.lr = args.lr;
  train_cfg.optim.weight_decay = args.weight_decay;
  train_cfg.validate_every = args.validate_every;
  train_cfg.max_validation_examples = args.max_validation;
  train_cfg.seed = args.seed;
  train_cfg.log_path = args.log_path;

  const TrainResult result =
      train_router(*router, train_set, validation_set, train_cfg);
  save_checkpoint_file(result.checkpoint, args.out_path);
  write_manifest(
      args.out_path, "train", args.seed,
      {{args.train_path, corpus_digest(args.train_path)},
       {args.validation_path, corpus_digest(args.validation_path)}},
      {args.out_path});
  std::cout << "train: " << router->kind() << " best step "
            << result.best_step << "/" << result.total_steps
            << ", validation accuracy " << result.best_validation_accuracy
            << "\ncheckpoint: " << args.out_path << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------------

struct EvalArgs {
  std::string corpus_path;
  std::string router_spec;
  std::string versus_spec;
  std::string train_path;  // reference records for knn / kmeans
  std::string out_base;
  size_t k = 100;
  size_t clusters = 8;
  uint64_t seed = 1;
  size_t layers = 2, d_model = 64, heads = 4, d_ff = 256, max_seq = 256;
  size_t max_query_bytes = 64;
};

std::unique_ptr<Router> build_eval_router(const EvalArgs& args, size_t T) {
  const std::string& spec = args.router_spec == "" ? "oracle" : args.router_spec;
  if (spec == "oracle") return std::make_unique<OracleRouter>(T);
  if (spec == "random") return std::make_unique<RandomRouter>(T, args.seed);
  if (spec == "reward-select") {
    return std::make_unique<RewardSelectRouter>(T);
  }
  if (spec == "knn" || spec == "kmeans") {
    if (args.train_path.empty()) {
      throw ContractError("--router " + spec +
                          " needs --train with the reference records");
    }
    TransformerConfig backbone;
    backbone.layers = args.layers;
    backbone.d_model = args.d_model;
    backbone.heads = args.heads;
    backbone.d_ff = args.d_ff;
    backbone.max_seq = args.max_seq;
    auto embedder = std::make_shared<FrozenMlmEmbedder>(
        backbone, args.seed, args.max_query_bytes);
    const std::vector<RoutingExample> reference =
        load_corpus_checked(args.train_path);
    if (spec == "knn") {
      NeighborIndex index = build_index(*embedder, reference);
      return std::make_unique<KnnRouter>(embedder, std::move(index), args.k);
    }
    NeighborIndex index = build_index(*embedder, reference);
    ClusterModel model = kmeans_fit(index.embeddings, index.scores,
                                    args.clusters, args.seed);
    return std::make_unique<KmeansRouter>(embedder, std::move(model));
  }
  // Anything else is a checkpoint path.
  return router_from_checkpoint(load_checkpoint_file(spec));
}

int run_eval(const EvalArgs& args) {
  const std::vector<RoutingExample> examples =
      load_corpus_checked(args.corpus_path);
  const size_t T = examples[0].num_models();
  std::unique_ptr<Router> router = build_eval_router(args, T);

  EvalReport report = evaluate_router(*router, examples);
  if (!args.versus_spec.empty()) {
    EvalArgs versus_args = args;
    versus_args.router_spec = args.versus_spec;
    std::unique_ptr<Router> versus = build_eval_router(versus_args, T);
    report.comparison_kind = versus->kind();
    report.comparison = win_tie_loss(*router, *versus, examples);
  }

  std::cout << report.to_tsv();
  if (!report.comparison.empty()) {
    std::cout << "\nversus " << report.comparison_kind
              << "\tnum_correct\tcount\twin%\ttie%\tloss%\n";
    for (const WinTieLossRow& row : report.comparison) {
      char line[160];
      std::snprintf(line, sizeof(line), "\t%zu\t%zu\t%.1f\t%.1f\t%.1f\n",
                    row.num_correct, row.count, row.win_pct, row.tie_pct,
                    row.loss_pct);
      std::cout << line;
    }
  }
  if (!args.out_base.empty()) {
    write_text_file(args.out_base + ".tsv", report.to_tsv());
    write_text_file(args.out_base + ".jsonl", report.to_jsonl());
    std::map<std::string, std::string> inputs = {
        {args.corpus_path, corpus_digest(args.corpus_path)}};
    if (!args.train_path.empty()) {
      inputs[args.train_path] = corpus_digest(args.train_path);
    }
    write_manifest(args.out_base, "eval", args.seed, inputs,
                   {args.out_base + ".tsv", args.out_base + ".jsonl"});
  }
  return 0;
}

// ---- ablate -----------------------------------------------------------------------

struct AblateArgs {
  TrainArgs train;  // shared hyperparameters; method/variant fixed below
  std::string test_path;
  std::string what;  // masking | lambda
  size_t seeds = 3;
  std::string out_path;
};

int run_ablate(const AblateArgs& args) {
  const std::vector<RoutingExample> train_set =
      load_corpus_checked(args.train.train_path);
  const std::vector<RoutingExample> validation_set =
      load_corpus_checked(args.train.validation_path);
  const std::vector<RoutingExample> test_set =
      load_corpus_checked(args.test_path);
  const size_t T = train_set[0].num_models();

  struct Arm {
    std::string name;
    TrainArgs args;
  };
  std::vector<Arm> arms;
  if (args.what == "masking") {
    for (const std::string& strategy : {"end", "start", "random"}) {
      Arm arm{strategy, args.train};
      arm.args.masking = strategy;
      arms.push_back(arm);
    }
    Arm none{"no-curriculum", args.train};
    none.args.masking = "end";
    none.args.no_curriculum = true;
    arms.push_back(none);
  } else if (args.what == "lambda") {
    Arm zero{"lambda-0", args.train};
    zero.args.lambda = 0.0;
    arms.push_back(zero);
    Arm full{"lambda-on", args.train};
    if (full.args.lambda < 0.0) {
      full.args.lambda = full.args.variant == "clm" ? 0.5 : 0.2;
    }
    arms.push_back(full);
  } else {
    throw ContractError("--what must be 'masking' or 'lambda', got '" +
                        args.what + "'");
  }

  std::string tsv = "arm\tseed\tmu_n\n";
  std::string summary;
  for (const Arm& arm : arms) {
    double sum = 0.0;
    for (size_t s = 0; s < args.seeds; ++s) {
      TrainArgs run = arm.args;
      run.seed = args.train.seed + s;
      std::unique_ptr<TrainableRouter> router = router_from_train_args(run, T);
      TrainConfig train_cfg;
      train_cfg.epochs = run.epochs > 0 ? run.epochs
                                        : (run.variant == "clm" ? 2 : 4);
      train_cfg.batch_size = run.batch;
      train_cfg.optim.lr = run.lr;
      train_cfg.optim.weight_decay = run.weight_decay;
      train_cfg.validate_every = run.validate_every;
      train_cfg.max_validation_examples = run.max_validation;
      train_cfg.seed = run.seed;
      train_router(*router, train_set, validation_set, train_cfg);
      const EvalReport report = evaluate_router(*router, test_set);
      char line[128];
      std::snprintf(line, sizeof(line), "%s\t%llu\t%.4f\n", arm.name.c_str(),
                    static_cast<unsigned long long>(run.seed),
                    report.average_mu_n);
      tsv += line;
      sum += report.average_mu_n;
    }
    char mean_line[128];
    std::snprintf(mean_line, sizeof(mean_line), "%s\tmean\t%.4f\n",
                  arm.name.c_str(), sum / static_cast<double>(args.seeds));
    summary += mean_line;
  }
  tsv += summary;
  write_text_file(args.out_path, tsv);
  write_manifest(
      args.out_path, "ablate", args.train.seed,
      {{args.train.train_path, corpus_digest(args.train.train_path)},
       {args.train.validation_path,
        corpus_digest(args.train.validation_path)},
       {args.test_path, corpus_digest(args.test_path)}},
      {args.out_path});
  std::cout << tsv;
  return 0;
}

// ---- mi ---------------------------------------------------------------------------

struct MiArgs {
  std::string corpus_path, with_path, without_path, reference_path;
  std::string out_path;
  MineConfig mine;
};

ordered_json mine_result_json(const MineResult& result) {
  ordered_json j;
  j["median"] = result.median;
  j["q1"] = result.q1;
  j["q3"] = result.q3;
  j["estimates"] = result.estimates;
  return j;
}

int run_mi(const MiArgs& args) {
  const std::vector<RoutingExample> examples =
      load_corpus_checked(args.corpus_path);
  auto with_rm =
      router_from_checkpoint(load_checkpoint_file(args.with_path));
  auto without_rm =
      router_from_checkpoint(load_checkpoint_file(args.without_path));
  auto reference_router =
      router_from_checkpoint(load_checkpoint_file(args.reference_path));
  auto* reference =
      dynamic_cast<OracleResponseClassifier*>(reference_router.get());
  if (reference == nullptr) {
    throw ContractError("--reference must be an oracle-classifier "
                        "checkpoint, got kind '" +
                        reference_router->kind() + "'");
  }

  const MiProbeResult probe =
      mi_probe(*with_rm, *without_rm, *reference, examples, args.mine);
  ordered_json j;
  j["with_rm"] = mine_result_json(probe.with_rm);
  j["without_rm"] = mine_result_json(probe.without_rm);
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!args.out_path.empty()) {
    write_text_file(args.out_path, text);
    write_manifest(args.out_path, "mi", args.mine.seed,
                   {{args.corpus_path, corpus_digest(args.corpus_path)}},
                   {args.out_path});
  }
  return 0;
}

// ---- route ------------------------------------------------------------------------

int run_route(const std::string& checkpoint_path, std::string query,
              bool query_given) {
  if (!query_given) {
    std::ostringstream buffer;
    buffer << std::cin.rdbuf();
    query = buffer.str();
    while (!query.empty() && (query.back() == '\n' || query.back() == '\r')) {
      query.pop_back();
    }
  }
  auto router = router_from_checkpoint(load_checkpoint_file(checkpoint_path));
  const RoutingDecision decision = router->route(query);
  ordered_json j;
  j["index"] = decision.selected;
  j["scores"] = decision.scores;
  j["router_latency_ms"] = decision.router_latency_ms;
  std::cout << j.dump() << "\n";
  return 0;
}

// ---- serve ------------------------------------------------------------------------

int run_serve(const std::string& config_path) {
  GatewayConfig config = load_gateway_config(config_path);
  apply_listen_override(config);
  Gateway gateway(std::move(config));
  gateway.start();
  const auto [host, port] = split_listen_address(gateway.config().listen);
  std::cout << "lahr gateway listening on " << host << ":" << gateway.port()
            << " (mode " << gateway.config().mode << ")\n"
            << std::flush;
  gateway.wait();
  return 0;
}

void add_train_options(CLI::App* cmd, TrainArgs& args, bool needs_out) {
  cmd->add_option("--train", args.train_path, "training corpus (JSONL)")
      ->required();
  cmd->add_option("--validation", args.validation_path,
                  "validation corpus (JSONL)")
      ->required();
  if (needs_out) {
    cmd->add_option("--out", args.out_path, "checkpoint output path")
        ->required();
  }
  cmd->add_option("--method", args.method,
                  "lookahead | mlc | zooter | oracle-classifier")
      ->check(CLI::IsMember(
          {"lookahead", "mlc", "zooter", "oracle-classifier"}));
  cmd->add_option("--variant", args.variant, "mlm | clm")
      ->check(CLI::IsMember({"mlm", "clm"}));
  cmd->add_option("--lambda", args.lambda,
                  "response-modeling loss weight (default: variant default)");
  cmd->add_option("--m", args.m, "response block length (MLM)");
  cmd->add_option("--alpha", args.alpha, "curriculum ramp fraction (MLM)");
  cmd->add_option("--masking", args.masking, "end | start | random")
      ->check(CLI::IsMember({"end", "start", "random"}));
  cmd->add_flag("--no-curriculum", args.no_curriculum,
                "disable the masking ramp (every block fully masked)");
  cmd->add_option("--tau", args.tau, "distribution temperature (zooter)");
  cmd->add_option("--max-query-bytes", args.max_query_bytes,
                  "query truncation length");
  cmd->add_option("--max-response-bytes", args.max_response_bytes,
                  "response truncation length (CLM)");
  cmd->add_option("--layers", args.layers, "backbone layers");
  cmd->add_option("--d-model", args.d_model, "backbone width");
  cmd->add_option("--heads", args.heads, "attention heads");
  cmd->add_option("--d-ff", args.d_ff, "feed-forward width");
  cmd->add_option("--max-seq", args.max_seq, "backbone context length");
  cmd->add_option("--epochs", args.epochs,
                  "training epochs (default: MLM 4, CLM 2)");
  cmd->add_option("--batch", args.batch, "batch size");
  cmd->add_option("--lr", args.lr, "peak learning rate");
  cmd->add_option("--weight-decay", args.weight_decay, "AdamW weight decay");
  cmd->add_option("--validate-every", args.validate_every,
                  "steps between validations");
  cmd->add_option("--max-validation", args.max_validation,
                  "cap validation examples (0 = all)");
  cmd->add_option("--seed", args.seed, "training + initialization seed");
  cmd->add_option("--log", args.log_path, "training log TSV path");
}

// Usage errors the option parser cannot express: cross-flag conflicts.
void check_train_conflicts(const CLI::App* cmd, const TrainArgs& args) {
  const bool lambda_given = cmd->count("--lambda") > 0;
  const bool tau_given = cmd->count("--tau") > 0;
  if (args.method != "lookahead" && lambda_given && args.lambda != 0.0) {
    throw CLI::ValidationError(
        "--lambda", "conflicts with --method " + args.method +
                        " (that method has no response-modeling term)");
  }
  if (args.method != "zooter" && tau_given) {
    throw CLI::ValidationError("--tau",
                               "only applies to --method zooter");
  }
  if (args.method == "oracle-classifier" && args.variant != "mlm") {
    throw CLI::ValidationError(
        "--variant", "--method oracle-classifier requires --variant mlm");
  }
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_argv.push_back(argv[i]);

  CLI::App app{"lahr: response-aware LLM routing toolkit"};
  app.require_subcommand(1);

  // synth
  SynthArgs synth;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic corpus from a plan");
  synth_cmd->add_option("--plan", synth.plan_path, "plan file (JSON)")
      ->required();
  synth_cmd->add_option("--out-dir", synth.out_dir, "output directory");
  synth_cmd->add_option("--prefix", synth.prefix, "output filename prefix");
  synth_cmd->add_option("--train", synth.train, "training records");
  synth_cmd->add_option("--validation", synth.validation,
                        "validation records");
  synth_cmd->add_option("--test", synth.test, "test records");
  synth_cmd->add_option("--threshold", synth.threshold,
                        "binarization threshold");

  // normalize
  NormalizeArgs normalize;
  CLI::App* normalize_cmd = app.add_subcommand(
      "normalize", "normalize scores, binarize labels, drop uninformative");
  normalize_cmd->add_option("--in", normalize.in_path, "input corpus")
      ->required();
  normalize_cmd->add_option("--out", normalize.out_path, "output corpus")
      ->required();
  normalize_cmd->add_option("--threshold", normalize.threshold,
                            "binarization threshold");
  normalize_cmd->add_flag("--keep-uninformative",
                          normalize.keep_uninformative,
                          "keep all-zero / all-one verifiable records");

  // split
  SplitArgs split;
  CLI::App* split_cmd =
      app.add_subcommand("split", "shuffle and split a corpus");
  split_cmd->add_option("--in", split.in_path, "input corpus")->required();
  split_cmd->add_option("--out-train", split.train_path, "train output")
      ->required();
  split_cmd
      ->add_option("--out-validation", split.validation_path,
                   "validation output")
      ->required();
  split_cmd->add_option("--out-test", split.test_path, "test output")
      ->required();
  split_cmd->add_option("--fractions", split.fractions,
                        "train,validation,test fractions");
  split_cmd->add_option("--seed", split.seed, "shuffle seed");

  // train
  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train a router and save its checkpoint");
  add_train_options(train_cmd, train, /*needs_out=*/true);

  // eval
  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a router on a corpus");
  eval_cmd->add_option("--corpus", eval.corpus_path, "evaluation corpus")
      ->required();
  eval_cmd
      ->add_option("--router", eval.router_spec,
                   "checkpoint path, or oracle | random | reward-select | "
                   "knn | kmeans")
      ->required();
  eval_cmd->add_option("--versus", eval.versus_spec,
                       "second router for win/tie/loss comparison");
  eval_cmd->add_option("--train", eval.train_path,
                       "reference records for knn / kmeans");
  eval_cmd->add_option("--k", eval.k, "kNN neighborhood size");
  eval_cmd->add_option("--clusters", eval.clusters, "k-means cluster count");
  eval_cmd->add_option("--seed", eval.seed, "seed for random / embedder");
  eval_cmd->add_option("--out", eval.out_base,
                       "report base path (writes .tsv and .jsonl)");
  eval_cmd->add_option("--layers", eval.layers, "embedder layers");
  eval_cmd->add_option("--d-model", eval.d_model, "embedder width");
  eval_cmd->add_option("--heads", eval.heads, "embedder heads");
  eval_cmd->add_option("--d-ff", eval.d_ff, "embedder feed-forward width");
  eval_cmd->add_option("--max-seq", eval.max_seq, "embedder context length");
  eval_cmd->add_option("--max-query-bytes", eval.max_query_bytes,
                       "embedder query truncation");

  // ablate
  AblateArgs ablate;
  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "masking-strategy or lambda sweep over seeds");
  add_train_options(ablate_cmd, ablate.train, /*needs_out=*/false);
  ablate_cmd->add_option("--test", ablate.test_path, "test corpus")
      ->required();
  ablate_cmd->add_option("--what", ablate.what, "masking | lambda")
      ->required()
      ->check(CLI::IsMember({"masking", "lambda"}));
  ablate_cmd->add_option("--seeds", ablate.seeds, "seeds per arm");
  ablate_cmd->add_option("--out", ablate.out_path, "TSV output path")
      ->required();

  // mi
  MiArgs mi;
  CLI::App* mi_cmd = app.add_subcommand(
      "mi", "mutual-information probe between router states");
  mi_cmd->add_option("--corpus", mi.corpus_path, "probe corpus")->required();
  mi_cmd->add_option("--with", mi.with_path,
                     "checkpoint trained with response modeling")
      ->required();
  mi_cmd->add_option("--without", mi.without_path,
                     "checkpoint trained without response modeling")
      ->required();
  mi_cmd->add_option("--reference", mi.reference_path,
                     "oracle-classifier checkpoint")
      ->required();
  mi_cmd->add_option("--mine-layers", mi.mine.layers, "statistic net layers");
  mi_cmd->add_option("--mine-hidden", mi.mine.hidden, "statistic net width");
  mi_cmd->add_option("--mine-epochs", mi.mine.epochs, "estimator epochs");
  mi_cmd->add_option("--mine-batch", mi.mine.batch, "estimator batch size");
  mi_cmd->add_option("--mine-lr", mi.mine.lr, "estimator learning rate");
  mi_cmd->add_option("--repetitions", mi.mine.repetitions,
                     "independent estimator runs");
  mi_cmd->add_option("--read-out", mi.mine.read_out_epochs,
                     "epochs averaged into the estimate");
  mi_cmd->add_option("--seed", mi.mine.seed, "estimator seed");
  mi_cmd->add_option("--out", mi.out_path, "JSON output path");

  // route
  std::string route_checkpoint, route_query;
  CLI::App* route_cmd =
      app.add_subcommand("route", "route one query (stdin or --query)");
  route_cmd->add_option("--checkpoint", route_checkpoint, "router checkpoint")
      ->required();
  CLI::Option* query_opt =
      route_cmd->add_option("--query", route_query, "query text");

  // serve
  std::string serve_config;
  CLI::App* serve_cmd = app.add_subcommand("serve", "run the HTTP gateway");
  serve_cmd->add_option("--config", serve_config, "gateway config (JSON)")
      ->required();

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) check_train_conflicts(train_cmd, train);
    if (ablate_cmd->parsed()) check_train_conflicts(ablate_cmd, ablate.train);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (normalize_cmd->parsed()) return run_normalize(normalize);
    if (split_cmd->parsed()) return run_split(split);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (ablate_cmd->parsed()) return run_ablate(ablate);
    if (mi_cmd->parsed()) return run_mi(mi);
    if (route_cmd->parsed()) {
      return run_route(route_checkpoint, route_query, query_opt->count() > 0);
    }
    if (serve_cmd->parsed()) return run_serve(serve_config);
  } catch (const std::exception& e) {
    std::string message = e.what();
    std::replace(message.begin(), message.end(), '\n', ' ');
    std::cerr << "error: " << message << "\n";
    return 1;
  }
  return 0;
}
