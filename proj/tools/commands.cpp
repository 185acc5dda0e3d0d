#include "commands.hpp"

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "zipfmax/checkpoint.hpp"
#include "zipfmax/config.hpp"
#include "zipfmax/cost_model.hpp"
#include "zipfmax/layers.hpp"
#include "zipfmax/lm.hpp"
#include "zipfmax/partition.hpp"
#include "zipfmax/trainer.hpp"
#include "zipfmax/vocab.hpp"

namespace zipfmax::cli {
namespace {

// Thread caps must be in the environment before the BLAS backend loads,
// which happens on the first matrix product.
void apply_threads(int threads) {
  if (threads <= 0) return;
  const std::string n = std::to_string(threads);
  ::setenv("OPENBLAS_NUM_THREADS", n.c_str(), 1);
  ::setenv("OMP_NUM_THREADS", n.c_str(), 1);
}

std::string join_path(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

// Every command that produces files drops the effective configuration —
// defaults, file entries, and flag overrides merged — next to its outputs.
void echo_config(const KeyValueConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  cfg.save(join_path(out_dir, "config.txt"));
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> parts;
  std::string item;
  for (const char c : text) {
    if (c == ',') {
      parts.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  parts.push_back(item);
  return parts;
}

std::vector<int64_t> parse_k_grid(const std::string& text) {
  std::vector<int64_t> grid;
  for (const std::string& part : split_csv(text)) {
    try {
      grid.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--k-grid: cannot parse '" + part + "' as an integer");
    }
  }
  return grid;
}

// A stand-in vocabulary whose counts follow the given unigram distribution,
// for benchmarks that need word frequencies but no actual text.
Vocabulary synthetic_vocabulary(const std::vector<double>& probs) {
  Vocabulary v;
  const auto k = static_cast<int64_t>(probs.size());
  v.words.reserve(static_cast<size_t>(k));
  v.counts.reserve(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) {
    v.words.push_back("w" + std::to_string(i));
    v.counts.push_back(std::llround(probs[static_cast<size_t>(i)] * 1e8) + 1);
  }
  v.probs = probs;
  v.unk_index = k - 1;
  return v;
}

constexpr const char* kDefaultKGrid =
    "8,16,32,64,128,256,512,1024,2048,4096,8192,16384,32768,65536";

// ---------------------------------------------------------------- calibrate

struct CalibrateOpts {
  int64_t dim = 2048;
  int64_t batch = 128;
  std::string k_grid = kDefaultKGrid;
  int repeats = 5;
  std::string synthetic;  // "c,lambda,k0" generates noiseless samples
  bool f64 = false;
  int threads = 0;
  std::string out;
};

int run_calibrate(const CalibrateOpts& o) {
  apply_threads(o.threads);
  const std::vector<int64_t> grid = parse_k_grid(o.k_grid);

  CalibrationResult result;
  std::vector<TimingSample> samples;
  if (!o.synthetic.empty()) {
    const std::vector<std::string> parts = split_csv(o.synthetic);
    if (parts.size() != 3) {
      throw CLI::ValidationError("--synthetic expects c,lambda,k0");
    }
    CostModelParams gen;
    try {
      gen.c = std::stod(parts[0]);
      gen.lambda = std::stod(parts[1]);
      gen.k0 = std::stoll(parts[2]);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--synthetic: cannot parse '" + o.synthetic + "' as c,lambda,k0");
    }
    gen.B0 = o.batch;
    gen.validate();
    for (const int64_t k : grid) {
      samples.push_back({k, o.batch, g(gen, k, static_cast<double>(o.batch)), 1});
    }
    result = calibrate_from_samples(samples, o.batch);
  } else {
    result = calibrate(o.dim, o.batch, grid, o.repeats, !o.f64);
    for (const FitSample& s : result.report.samples) {
      samples.push_back({s.k, static_cast<int64_t>(s.batch), s.seconds, 0});
    }
  }

  std::filesystem::create_directories(o.out);
  save_params(result.params, join_path(o.out, "params.txt"));
  save_samples(samples, join_path(o.out, "samples.csv"));

  KeyValueConfig cfg;
  cfg.set("command", "calibrate");
  cfg.set("dim", o.dim);
  cfg.set("batch", o.batch);
  cfg.set("k_grid", o.k_grid);
  cfg.set("repeats", static_cast<int64_t>(o.repeats));
  cfg.set("precision", o.f64 ? "f64" : "f32");
  cfg.set("synthetic", o.synthetic);
  cfg.set("threads", static_cast<int64_t>(o.threads));
  echo_config(cfg, o.out);

  std::printf("c=%.17g lambda=%.17g k0=%" PRId64 " B0=%" PRId64 "\n", result.params.c,
              result.params.lambda, result.params.k0, result.params.B0);
  std::printf("median relative error %.4f over %zu samples\n", result.report.median_rel_error,
              result.report.samples.size());
  return 0;
}

void add_calibrate_impl(CLI::App& app) {
  auto opts = std::make_shared<CalibrateOpts>();
  CLI::App* sub =
      app.add_subcommand("calibrate", "Fit the hinged matrix-product time model on this machine");
  sub->add_option("--dim", opts->dim, "Hidden dimension of the timed products")
      ->capture_default_str();
  sub->add_option("--batch", opts->batch, "Rows per timed product")->capture_default_str();
  sub->add_option("--k-grid", opts->k_grid, "Comma-separated output widths to time")
      ->capture_default_str();
  sub->add_option("--repeats", opts->repeats, "Timing repeats per grid point (median taken)")
      ->capture_default_str();
  sub->add_option("--synthetic", opts->synthetic,
                  "Skip timing; fit noiseless samples generated from c,lambda,k0");
  sub->add_flag("--f64", opts->f64, "Time the 64-bit path instead of 32-bit");
  sub->add_option("--threads", opts->threads, "Cap BLAS worker threads (0 = library default)");
  sub->add_option("--out", opts->out, "Output directory")->required();
  sub->callback([opts] { run_calibrate(*opts); });
}

// ---------------------------------------------------------------- partition

struct PartitionOpts {
  std::string vocab;
  std::string params;
  std::string clusters = "sweep";
  int64_t max_clusters = 10;
  int64_t batch = 128;
  int64_t stride = 1;
  int64_t dim = 128;
  double decay = 4.0;
  int64_t min_dim = 8;
  int threads = 0;
  std::string out;
};

int run_partition(const PartitionOpts& o) {
  apply_threads(o.threads);
  const Vocabulary vocab = load_vocabulary(o.vocab);
  CostModelParams params = load_params(o.params);
  params.validate();
  const auto batch = static_cast<double>(o.batch);

  std::filesystem::create_directories(o.out);
  const TwoClusterCurve curve = two_cluster_curve(vocab.probs, params, batch, o.stride);
  save_two_cluster_csv(curve, join_path(o.out, "two_cluster_curve.csv"));

  Partition part;
  double cost = 0.0;
  if (o.clusters == "sweep") {
    const std::vector<SweepEntry> entries =
        sweep_clusters(vocab.probs, o.max_clusters, params, batch, o.stride);
    save_sweep_csv(entries, join_path(o.out, "cluster_curve.csv"));
    const SweepEntry* best = &entries.front();
    for (const SweepEntry& e : entries) {
      if (e.cost < best->cost) best = &e;
    }
    part = best->partition;
    cost = best->cost;
  } else {
    int64_t j = 0;
    try {
      j = std::stoll(o.clusters);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--clusters expects a cluster count or 'sweep', got '" +
                                 o.clusters + "'");
    }
    if (j < 1) throw CLI::ValidationError("--clusters must be at least 1");
    const OptimizeResult r = optimize_fixed_j(vocab.probs, j, params, batch, o.stride);
    part = r.partition;
    cost = r.cost;
  }
  part.cluster_dims = assign_capacities(part.num_tail_clusters(), o.dim, o.decay, o.min_dim);
  save_partition(part, join_path(o.out, "partition.txt"));

  KeyValueConfig cfg;
  cfg.set("command", "partition");
  cfg.set("vocab", o.vocab);
  cfg.set("params", o.params);
  cfg.set("clusters", o.clusters);
  cfg.set("max_clusters", o.max_clusters);
  cfg.set("batch", o.batch);
  cfg.set("stride", o.stride);
  cfg.set("dim", o.dim);
  cfg.set("decay", o.decay);
  cfg.set("min_dim", o.min_dim);
  cfg.set("threads", static_cast<int64_t>(o.threads));
  echo_config(cfg, o.out);

  std::printf("clusters=%" PRId64 " k_h=%" PRId64 " cost=%.17g seconds/step\n",
              part.num_tail_clusters(), part.k_h, cost);
  std::printf("predicted speedup over one full-width product: %.3fx\n",
              predicted_speedup(params, vocab.size(), cost, batch));
  return 0;
}

void add_partition_impl(CLI::App& app) {
  auto opts = std::make_shared<PartitionOpts>();
  CLI::App* sub = app.add_subcommand(
      "partition", "Plan head and tail clusters for a vocabulary under a fitted cost model");
  sub->add_option("--vocab", opts->vocab, "Vocabulary file (word<TAB>count per line)")->required();
  sub->add_option("--params", opts->params, "Cost-model params file from calibrate")->required();
  sub->add_option("--clusters", opts->clusters, "Tail cluster count, or 'sweep' to pick the best")
      ->capture_default_str();
  sub->add_option("--max-clusters", opts->max_clusters, "Largest cluster count the sweep tries")
      ->capture_default_str();
  sub->add_option("--batch", opts->batch, "Planned training batch size")->capture_default_str();
  sub->add_option("--stride", opts->stride, "Boundary grid coarsening for large vocabularies")
      ->capture_default_str();
  sub->add_option("--dim", opts->dim, "Hidden dimension used to assign tail capacities")
      ->capture_default_str();
  sub->add_option("--decay", opts->decay, "Capacity division factor per tail cluster")
      ->capture_default_str();
  sub->add_option("--min-dim", opts->min_dim, "Capacity floor for the rarest clusters")
      ->capture_default_str();
  sub->add_option("--threads", opts->threads, "Cap BLAS worker threads (0 = library default)");
  sub->add_option("--out", opts->out, "Output directory")->required();
  sub->callback([opts] { run_partition(*opts); });
}

// -------------------------------------------------------------------- train

constexpr std::string_view kTrainKeys[] = {
    "model",     "act",   "emb_dim",         "hidden_dim", "window",
    "unroll",    "precision", "seed",        "vocab_size", "min_count",
    "lowercase", "step",  "adagrad_epsilon", "clip",       "epochs",
    "batch",     "weight_decay", "save_checkpoints",
};

struct TrainOpts {
  std::string corpus;
  std::string valid;
  std::string layer = "full";
  std::string partition;
  std::string config;
  std::string vocab;
  int threads = 0;
  std::string out;
  // Flag overrides; applied only when the flag was given.
  int64_t epochs = 0;
  int64_t batch = 0;
  double step = 0.0;
  int64_t seed = 0;
  int64_t vocab_size = 0;
};

KeyValueConfig train_defaults() {
  KeyValueConfig cfg;
  cfg.set("model", "feedforward");
  cfg.set("act", "sigmoid");
  cfg.set("emb_dim", static_cast<int64_t>(64));
  cfg.set("hidden_dim", static_cast<int64_t>(128));
  cfg.set("window", static_cast<int64_t>(5));
  cfg.set("unroll", static_cast<int64_t>(20));
  cfg.set("precision", "f32");
  cfg.set("seed", static_cast<int64_t>(1));
  cfg.set("vocab_size", static_cast<int64_t>(10000));
  cfg.set("min_count", static_cast<int64_t>(1));
  cfg.set("lowercase", false);
  cfg.set("step", 0.1);
  cfg.set("adagrad_epsilon", 1e-10);
  cfg.set("clip", 1.0);
  cfg.set("epochs", static_cast<int64_t>(5));
  cfg.set("batch", static_cast<int64_t>(128));
  cfg.set("weight_decay", 0.0);
  cfg.set("save_checkpoints", true);
  return cfg;
}

template <typename T>
int run_train_typed(const TrainOpts& o, const KeyValueConfig& cfg) {
  Rng rng(static_cast<uint64_t>(cfg.get_i64("seed")));
  const bool lowercase = cfg.get_bool("lowercase");
  const std::string text = read_text_file(o.corpus);

  Vocabulary vocab;
  if (!o.vocab.empty()) {
    vocab = load_vocabulary(o.vocab);
  } else {
    vocab = build_vocabulary(text, cfg.get_i64("vocab_size"), cfg.get_i64("min_count"), lowercase);
  }
  const TokenStream train_tokens = encode(text, vocab, lowercase);
  const TokenStream valid_tokens = encode(read_text_file(o.valid), vocab, lowercase);

  Partition part;
  const Partition* part_ptr = nullptr;
  if (!o.partition.empty()) {
    part = load_partition(o.partition, vocab.probs);
    part_ptr = &part;
  }

  const int64_t d = cfg.get_i64("hidden_dim");
  std::unique_ptr<OutputLayer<T>> output = make_output_layer<T>(o.layer, d, vocab, part_ptr, rng);

  const std::string model_kind = cfg.get_string("model");
  const Nonlinearity act = nonlinearity_from_name(cfg.get_string("act"));
  std::unique_ptr<LanguageModel<T>> model;
  if (model_kind == "feedforward") {
    model = std::make_unique<FeedforwardLM<T>>(vocab.size(), cfg.get_i64("emb_dim"), d,
                                               cfg.get_i64("window"), act, std::move(output), rng);
  } else if (model_kind == "elman") {
    model = std::make_unique<ElmanRNN<T>>(vocab.size(), cfg.get_i64("emb_dim"), d,
                                          cfg.get_i64("unroll"), act, std::move(output), rng);
  } else {
    throw CLI::ValidationError("config key 'model': expected feedforward or elman, got '" +
                               model_kind + "'");
  }

  TrainConfig tc;
  tc.step = cfg.get_f64("step");
  tc.adagrad_epsilon = cfg.get_f64("adagrad_epsilon");
  tc.clip = cfg.get_f64("clip");
  tc.epochs = cfg.get_i64("epochs");
  tc.batch = cfg.get_i64("batch");
  tc.weight_decay = cfg.get_f64("weight_decay");
  tc.save_checkpoints = cfg.get_bool("save_checkpoints");

  std::filesystem::create_directories(o.out);
  save_vocabulary(vocab, join_path(o.out, "vocab.txt"));
  const std::vector<EpochLog> logs =
      train(*model, vocab, train_tokens, valid_tokens, tc, o.out);
  for (const EpochLog& row : logs) {
    std::printf("epoch %" PRId64 ": loss %.6f, valid ppl %.4f, %.1fs\n", row.epoch, row.loss,
                row.ppl_valid, row.seconds);
  }
  std::printf("final valid ppl=%.17g\n", logs.back().ppl_valid);
  return 0;
}

int run_train(const TrainOpts& o, const CLI::App& sub) {
  apply_threads(o.threads);

  KeyValueConfig cfg = train_defaults();
  if (!o.config.empty()) {
    const KeyValueConfig file_cfg = KeyValueConfig::from_file(o.config);
    file_cfg.require_known_keys(kTrainKeys);
    for (const auto& [key, value] : file_cfg.entries()) cfg.set(key, value);
  }
  if (sub.count("--epochs") > 0) cfg.set("epochs", o.epochs);
  if (sub.count("--batch") > 0) cfg.set("batch", o.batch);
  if (sub.count("--step") > 0) cfg.set("step", o.step);
  if (sub.count("--seed") > 0) cfg.set("seed", o.seed);
  if (sub.count("--vocab-size") > 0) cfg.set("vocab_size", o.vocab_size);

  const bool needs_partition =
      o.layer == "adaptive" || o.layer == "dsoftmax" || o.layer == "dsoftmax-star";
  if (needs_partition && o.partition.empty()) {
    throw CLI::ValidationError("--layer " + o.layer + " requires --partition");
  }

  cfg.set("command", "train");
  cfg.set("layer", o.layer);
  cfg.set("corpus", o.corpus);
  cfg.set("valid", o.valid);
  cfg.set("partition", o.partition);
  cfg.set("vocab", o.vocab);
  cfg.set("threads", static_cast<int64_t>(o.threads));
  echo_config(cfg, o.out);

  const std::string precision = cfg.get_string("precision");
  if (precision == "f32") return run_train_typed<float>(o, cfg);
  if (precision == "f64") return run_train_typed<double>(o, cfg);
  throw CLI::ValidationError("config key 'precision': expected f32 or f64, got '" + precision +
                             "'");
}

void add_train_impl(CLI::App& app) {
  auto opts = std::make_shared<TrainOpts>();
  CLI::App* sub =
      app.add_subcommand("train", "Train a language model and log per-epoch validation perplexity");
  sub->add_option("--corpus", opts->corpus, "Training text, whitespace-tokenized")->required();
  sub->add_option("--valid", opts->valid, "Validation text")->required();
  sub->add_option("--layer", opts->layer, "Output layer")
      ->check(CLI::IsMember({"full", "adaptive", "hsm", "dsoftmax", "dsoftmax-star"}))
      ->capture_default_str();
  sub->add_option("--partition", opts->partition,
                  "Partition file (required for adaptive and d-softmax layers)");
  sub->add_option("--config", opts->config, "key=value config file; flags override it");
  sub->add_option("--vocab", opts->vocab, "Reuse a saved vocabulary instead of rebuilding");
  sub->add_option("--epochs", opts->epochs, "Override config epochs");
  sub->add_option("--batch", opts->batch, "Override config batch");
  sub->add_option("--step", opts->step, "Override config step size");
  sub->add_option("--seed", opts->seed, "Override config seed");
  sub->add_option("--vocab-size", opts->vocab_size, "Override config vocab_size");
  sub->add_option("--threads", opts->threads, "Cap BLAS worker threads (0 = library default)");
  sub->add_option("--out", opts->out, "Output directory")->required();
  sub->callback([opts, sub] { run_train(*opts, *sub); });
}

// --------------------------------------------------------------------- eval

struct EvalOpts {
  std::string checkpoint;
  std::string corpus;
  std::string csv;
  bool lowercase = false;
  int threads = 0;
};

template <typename T>
double eval_ppl(const EvalOpts& o) {
  LoadedModel<T> loaded = load_model<T>(o.checkpoint);
  const TokenStream tokens = encode(read_text_file(o.corpus), loaded.vocab, o.lowercase);
  return perplexity(*loaded.model, tokens);
}

int run_eval(const EvalOpts& o) {
  apply_threads(o.threads);
  const std::string precision = Checkpoint::load(o.checkpoint).str("model.precision");
  const double ppl = precision == "f32" ? eval_ppl<float>(o) : eval_ppl<double>(o);
  std::printf("ppl=%.17g\n", ppl);

  if (!o.csv.empty()) {
    const bool fresh = !std::filesystem::exists(o.csv) || std::filesystem::file_size(o.csv) == 0;
    std::ofstream out(o.csv, std::ios::app);
    if (!out) throw std::runtime_error("eval: cannot open CSV file " + o.csv);
    if (fresh) out << "checkpoint,corpus,ppl\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", ppl);
    out << o.checkpoint << ',' << o.corpus << ',' << buf << '\n';
  }
  return 0;
}

void add_eval_impl(CLI::App& app) {
  auto opts = std::make_shared<EvalOpts>();
  CLI::App* sub =
      app.add_subcommand("eval", "Exact perplexity of a saved model on a text corpus");
  sub->add_option("--checkpoint", opts->checkpoint, "Model checkpoint file")->required();
  sub->add_option("--corpus", opts->corpus, "Evaluation text")->required();
  sub->add_option("--csv", opts->csv, "Append `checkpoint,corpus,ppl` to this CSV");
  sub->add_flag("--lowercase", opts->lowercase, "Lowercase the corpus before lookup");
  sub->add_option("--threads", opts->threads, "Cap BLAS worker threads (0 = library default)");
  sub->callback([opts] { run_eval(*opts); });
}

// -------------------------------------------------------------------- bench

struct BenchOpts {
  std::string layers = "full,adaptive,hsm,dsoftmax,dsoftmax-star";
  int64_t dim = 128;
  int64_t vocab_size = 50000;
  double zipf_exponent = 1.0;
  int64_t batch = 64;
  int repeats = 7;
  std::string params;
  int64_t clusters = 0;  // 0 = sweep for the best count
  int64_t max_clusters = 10;
  uint64_t seed = 1;
  int threads = 0;
  std::string out;
};

int run_bench(const BenchOpts& o) {
  apply_threads(o.threads);
  const std::vector<double> probs = zipf_probs(o.vocab_size, o.zipf_exponent);
  const Vocabulary vocab = synthetic_vocabulary(probs);
  const auto batch = static_cast<double>(o.batch);

  CostModelParams params;
  if (!o.params.empty()) {
    params = load_params(o.params);
  } else {
    std::printf("no --params given; calibrating at dim=%" PRId64 " batch=%" PRId64 "\n", o.dim,
                o.batch);
    params = calibrate(o.dim, o.batch, parse_k_grid(kDefaultKGrid), 3).params;
  }
  params.validate();

  Partition part;
  if (o.clusters > 0) {
    part = optimize_fixed_j(probs, o.clusters, params, batch).partition;
  } else {
    const std::vector<SweepEntry> entries =
        sweep_clusters(probs, o.max_clusters, params, batch);
    const SweepEntry* best = &entries.front();
    for (const SweepEntry& e : entries) {
      if (e.cost < best->cost) best = &e;
    }
    part = best->partition;
  }
  part.cluster_dims = assign_capacities(part.num_tail_clusters(), o.dim);
  std::filesystem::create_directories(o.out);
  save_partition(part, join_path(o.out, "partition.txt"));

  Rng rng(o.seed);
  const auto measure = [&](const std::string& kind) {
    const bool needs_partition =
        kind == "adaptive" || kind == "dsoftmax" || kind == "dsoftmax-star";
    std::unique_ptr<OutputLayer<float>> layer =
        make_output_layer<float>(kind, o.dim, vocab, needs_partition ? &part : nullptr, rng);
    return measure_layer_time(*layer, probs, o.batch, o.repeats, o.seed);
  };

  const double t_full = measure("full");
  std::ofstream csv(join_path(o.out, "bench.csv"));
  if (!csv) throw std::runtime_error("bench: cannot open output CSV");
  csv << "layer,k,d,batch,fwd_bwd_seconds,speedup_vs_full\n";
  for (const std::string& kind : split_csv(o.layers)) {
    const double t = kind == "full" ? t_full : measure(kind);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%" PRId64 ",%" PRId64 ",%" PRId64 ",%.9g,%.6g\n",
                  kind.c_str(), o.vocab_size, o.dim, o.batch, t, t_full / t);
    csv << buf;
    std::printf("%-14s %.6f s/step, %.2fx vs full\n", kind.c_str(), t, t_full / t);
  }

  KeyValueConfig cfg;
  cfg.set("command", "bench");
  cfg.set("layers", o.layers);
  cfg.set("dim", o.dim);
  cfg.set("vocab_size", o.vocab_size);
  cfg.set("zipf_exponent", o.zipf_exponent);
  cfg.set("batch", o.batch);
  cfg.set("repeats", static_cast<int64_t>(o.repeats));
  cfg.set("params", o.params);
  cfg.set("clusters", o.clusters);
  cfg.set("max_clusters", o.max_clusters);
  cfg.set("seed", static_cast<int64_t>(o.seed));
  cfg.set("threads", static_cast<int64_t>(o.threads));
  echo_config(cfg, o.out);
  return 0;
}

void add_bench_impl(CLI::App& app) {
  auto opts = std::make_shared<BenchOpts>();
  CLI::App* sub = app.add_subcommand(
      "bench", "Time one training step of each output layer on a synthetic Zipf vocabulary");
  sub->add_option("--layers", opts->layers, "Comma-separated layer list")->capture_default_str();
  sub->add_option("--dim", opts->dim, "Hidden dimension")->capture_default_str();
  sub->add_option("--vocab-size", opts->vocab_size, "Vocabulary size")->capture_default_str();
  sub->add_option("--zipf-exponent", opts->zipf_exponent, "Unigram distribution exponent")
      ->capture_default_str();
  sub->add_option("--batch", opts->batch, "Examples per step")->capture_default_str();
  sub->add_option("--repeats", opts->repeats, "Timing repeats per layer (median taken)")
      ->capture_default_str();
  sub->add_option("--params", opts->params,
                  "Cost-model params file; omitted = quick local calibration");
  sub->add_option("--clusters", opts->clusters, "Tail cluster count (0 = sweep for the best)")
      ->capture_default_str();
  sub->add_option("--max-clusters", opts->max_clusters, "Largest cluster count the sweep tries")
      ->capture_default_str();
  sub->add_option("--seed", opts->seed, "Seed for layer init and target sampling")
      ->capture_default_str();
  sub->add_option("--threads", opts->threads, "Cap BLAS worker threads (0 = library default)");
  sub->add_option("--out", opts->out, "Output directory")->required();
  sub->callback([opts] { run_bench(*opts); });
}

// -------------------------------------------------------------- build-vocab

struct BuildVocabOpts {
  std::string corpus;
  int64_t max_size = 10000;
  int64_t min_count = 1;
  bool lowercase = false;
  std::string out;
};

int run_build_vocab(const BuildVocabOpts& o) {
  const std::string text = read_text_file(o.corpus);
  const Vocabulary v = build_vocabulary(text, o.max_size, o.min_count, o.lowercase);
  std::filesystem::create_directories(o.out);
  save_vocabulary(v, join_path(o.out, "vocab.txt"));

  KeyValueConfig cfg;
  cfg.set("command", "build-vocab");
  cfg.set("corpus", o.corpus);
  cfg.set("max_size", o.max_size);
  cfg.set("min_count", o.min_count);
  cfg.set("lowercase", o.lowercase);
  echo_config(cfg, o.out);

  std::printf("vocabulary: %" PRId64 " words; top 20%% of words cover %.1f%% of tokens\n",
              v.size(), 100.0 * coverage(v, 0.2));
  return 0;
}

void add_build_vocab_impl(CLI::App& app) {
  auto opts = std::make_shared<BuildVocabOpts>();
  CLI::App* sub = app.add_subcommand(
      "build-vocab", "Count a corpus into a frequency-sorted vocabulary file");
  sub->add_option("--corpus", opts->corpus, "Text to count, whitespace-tokenized")->required();
  sub->add_option("--max-size", opts->max_size, "Keep at most this many words plus the unknown")
      ->capture_default_str();
  sub->add_option("--min-count", opts->min_count, "Fold rarer words into the unknown token")
      ->capture_default_str();
  sub->add_flag("--lowercase", opts->lowercase, "Lowercase before counting");
  sub->add_option("--out", opts->out, "Output directory")->required();
  sub->callback([opts] { run_build_vocab(*opts); });
}

}  // namespace

void add_calibrate(CLI::App& app) { add_calibrate_impl(app); }
void add_partition(CLI::App& app) { add_partition_impl(app); }
void add_train(CLI::App& app) { add_train_impl(app); }
void add_eval(CLI::App& app) { add_eval_impl(app); }
void add_bench(CLI::App& app) { add_bench_impl(app); }
void add_build_vocab(CLI::App& app) { add_build_vocab_impl(app); }

}  // namespace zipfmax::cli
