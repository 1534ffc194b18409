#include "lego/harness/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "lego/attn/structures.hpp"
#include "lego/core/dataset.hpp"
#include "lego/core/error.hpp"
#include "lego/core/sentence.hpp"
#include "lego/harness/config_file.hpp"
#include "lego/harness/data.hpp"
#include "lego/harness/evaluate.hpp"
#include "lego/harness/manifest.hpp"
#include "lego/harness/probe.hpp"
#include "lego/harness/shortcut.hpp"
#include "lego/harness/train.hpp"
#include "lego/mimic/mimic.hpp"
#include "lego/model/accounting.hpp"
#include "lego/model/checkpoint.hpp"
#include "lego/model/encoder.hpp"

namespace lego::harness {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Invocation {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string checkpoint;
  std::string sentence;
  bool oracle = false;
  int seq_len = 512;
};

/// `--flag value` stored as a config override for `key`.
void key_option(CLI::App* app, const std::string& flag, const std::string& key,
                const std::string& help, Invocation& inv) {
  app->add_option_function<std::string>(
      flag, [&inv, key](const std::string& v) { inv.overrides.emplace_back(key, v); }, help);
}

void common_options(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "key = value config file");
  app->add_option("--out", inv.out_dir, "output directory");
  app->add_option_function<std::vector<std::string>>(
      "--set",
      [&inv](const std::vector<std::string>& items) {
        for (const auto& item : items) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) {
            throw CLI::ValidationError("--set", "expected KEY=VALUE, got '" + item + "'");
          }
          inv.overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
        }
      },
      "override any config key (KEY=VALUE, repeatable)");
  key_option(app, "--n", "n", "chain length", inv);
  key_option(app, "--seed", "seed", "run seed", inv);
  key_option(app, "--group", "group", "z2 or d3", inv);
  key_option(app, "--variant", "variant", "model variant", inv);
  key_option(app, "--depth", "depth", "encoder layers", inv);
  key_option(app, "--d,--hidden", "hidden", "model width", inv);
  key_option(app, "--heads", "heads", "attention heads", inv);
  key_option(app, "--data", "data_dir", "dataset directory", inv);
}

RunConfig build_config(const Invocation& inv) {
  RunConfig config = inv.config_path.empty() ? RunConfig{} : load_config(inv.config_path);
  for (const auto& [k, v] : inv.overrides) {
    config.set(k, v);
  }
  return config;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Manifest base_manifest(const std::string& command, const RunConfig& config) {
  Manifest m;
  m.command = command;
  m.config = config.canonical();
  m.config_hash = config.hash();
  m.seeds = {{"seed", config.train.seed}, {"data_seed", config.data.seed}};
  return m;
}

void finish(Manifest& m, const fs::path& dir, Clock::time_point start, std::ostream& out) {
  m.wall_clock_seconds = seconds_since(start);
  write_manifest(dir / "manifest.json", m);
  out << "wrote " << (dir / "manifest.json").string() << '\n';
}

/// Checkpoint architecture must match the configured vocabulary.
model::Checkpoint<float> load_for(const std::string& path, const RunConfig& config) {
  if (path.empty()) {
    throw Error("--checkpoint is required");
  }
  auto ckpt = model::load_checkpoint<float>(path);
  const auto v = config.vocab();
  if (ckpt.config.vocab_size != v.size() || ckpt.config.num_classes != v.group().set_size()) {
    throw Error("checkpoint vocabulary does not match group " +
                std::string(core::to_string(config.data.group)));
  }
  return ckpt;
}

int cmd_gen(const Invocation& inv, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = build_config(inv);
  const fs::path dir = inv.out_dir;
  const auto files = core::generate_dataset(config.data.spec(config.train.n), dir);
  auto m = base_manifest("gen", config);
  m.datasets = {{"train.jsonl", git_blob_sha1(read_file(files.train))},
                {"test.jsonl", git_blob_sha1(read_file(files.test))}};
  m.artifacts = {"train.jsonl", "test.jsonl"};
  out << "generated " << files.train_records << " train and " << files.test_records
      << " test records (n=" << config.train.n << ")\n";
  finish(m, dir, start, out);
  return 0;
}

int cmd_train(const Invocation& inv, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = build_config(inv);
  const fs::path dir = inv.out_dir;
  fs::create_directories(dir);
  const auto data = load_dataset(config);
  const auto result = train(config, data, [&out](const EpochMetrics& e) {
    double mean = 0.0;
    for (const double a : e.test_accuracy) {
      mean += a;
    }
    mean /= static_cast<double>(e.test_accuracy.size());
    out << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss << " test_mean "
        << mean << '\n'
        << std::flush;
    return true;
  });
  model::save_checkpoint(dir / "checkpoint.bin", result.config, result.params);
  write_metrics_csv(dir / "metrics.csv", result.metrics);
  write_loss_csv(dir / "loss.csv", result.metrics);
  const auto onsets = shortcut_report(result.metrics, config.shortcut_threshold);
  write_onset_csv(dir / "onset.csv", onsets);
  out << "shortcut signature: " << (onsets.shortcut ? "yes" : "no") << '\n';
  auto m = base_manifest("train", config);
  m.datasets = {{"train", data.train_hash}, {"test", data.test_hash}};
  m.artifacts = {"checkpoint.bin", "metrics.csv", "loss.csv", "onset.csv"};
  finish(m, dir, start, out);
  return 0;
}

int cmd_eval(const Invocation& inv, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = build_config(inv);
  const fs::path dir = inv.out_dir;
  fs::create_directories(dir);
  const auto data = load_dataset(config);
  std::vector<double> acc;
  if (inv.oracle) {
    acc = evaluate(data.test, oracle_predictor(config.vocab()));
  } else {
    const auto ckpt = load_for(inv.checkpoint, config);
    acc = evaluate(data.test, model_predictor(ckpt.params, ckpt.config));
  }
  std::ofstream csv(dir / "eval.csv");
  csv << "position,accuracy\n" << std::setprecision(10);
  for (std::size_t p = 0; p < acc.size(); ++p) {
    csv << p << ',' << acc[p] << '\n';
    out << "position " << p << " accuracy " << acc[p] << '\n';
  }
  auto m = base_manifest("eval", config);
  m.datasets = {{"train", data.train_hash}, {"test", data.test_hash}};
  m.artifacts = {"eval.csv"};
  finish(m, dir, start, out);
  return 0;
}

int cmd_probe(const Invocation& inv, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = build_config(inv);
  const fs::path dir = inv.out_dir;
  fs::create_directories(dir);
  const auto data = load_dataset(config);
  const auto ckpt = load_for(inv.checkpoint, config);
  ProbeOptions opt;
  opt.epochs = config.probe_epochs;
  opt.batch = config.train.batch_size;
  opt.adam = config.train.adam;
  opt.seed = config.train.seed;
  const auto result = probe(ckpt.params, ckpt.config, data, opt);
  write_probe_csv(dir / "probe.csv", result);
  out << "backbone hash " << result.backbone_hash_after << " (unchanged)\n";
  auto m = base_manifest("probe", config);
  m.datasets = {{"train", data.train_hash}, {"test", data.test_hash}};
  m.artifacts = {"probe.csv"};
  finish(m, dir, start, out);
  return 0;
}

/// "m,a": manipulation head, association head.
mimic::HeadPair parse_head_pair(const std::string& text) {
  const auto comma = text.find(',');
  try {
    if (comma != std::string::npos) {
      std::size_t used_m = 0;
      std::size_t used_a = 0;
      const int m = std::stoi(text.substr(0, comma), &used_m);
      const int a = std::stoi(text.substr(comma + 1), &used_a);
      if (used_m == comma && used_a == text.size() - comma - 1) {
        return {m, a};
      }
    }
  } catch (const std::logic_error&) {
  }
  throw Error("mimic_heads expects 'm,a' or 'random', got '" + text + "'");
}

int cmd_mimic(const Invocation& inv, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = build_config(inv);
  const fs::path dir = inv.out_dir;
  fs::create_directories(dir);
  const auto mc = config.bound_model();
  const int T = config.mimic.seq_len > 0 ? config.mimic.seq_len : config.seq_len();
  auto plan = config.mimic.heads == "random" ? mimic::MimicPlan::random(mc, T, config.mimic.seed)
                                              : mimic::MimicPlan::fixed(mc, T);
  if (config.mimic.heads != "random") {
    const auto pair = parse_head_pair(config.mimic.heads);
    for (auto& p : plan.heads) {
      p = pair;
    }
  }
  plan.steps = config.mimic.steps;
  plan.batch = config.mimic.batch;
  plan.lr = config.mimic.lr;
  auto params = model::init_params<float>(mc, config.train.seed);
  Rng rng = make_rng(config.mimic.seed, 17);
  const auto report = mimic::mimic_train(params, mc, plan, rng);
  params.set_requires_grad(false);
  model::save_checkpoint(dir / "checkpoint.bin", mc, params);
  mimic::write_trajectory_csv(dir / "mimic_loss.csv", report);
  out << "held-out mimic loss " << report.heldout_loss
      << (report.converged ? " (converged)" : " (not converged within the step budget)") << '\n';
  auto m = base_manifest("mimic", config);
  m.seeds.emplace_back("mimic_seed", config.mimic.seed);
  m.artifacts = {"checkpoint.bin", "mimic_loss.csv"};
  finish(m, dir, start, out);
  return 0;
}

int cmd_flops(const Invocation& inv, std::ostream& out, bool write) {
  const auto start = Clock::now();
  auto config = build_config(inv);
  config.model.max_seq_len = std::max(config.model.max_seq_len, inv.seq_len);
  const auto mc = config.bound_model();
  const auto table = model::format_flops_table(mc, inv.seq_len);
  out << table;
  if (write) {
    const fs::path dir = inv.out_dir;
    fs::create_directories(dir);
    std::ofstream(dir / "flops.txt") << table;
    auto m = base_manifest("flops", config);
    m.artifacts = {"flops.txt"};
    finish(m, dir, start, out);
  }
  return 0;
}

int cmd_export_attn(const Invocation& inv, std::ostream& out) {
  const auto start = Clock::now();
  const auto config = build_config(inv);
  const fs::path dir = inv.out_dir;
  fs::create_directories(dir);
  const auto ckpt = load_for(inv.checkpoint, config);
  const auto vocab = config.vocab();
  const auto chain = core::parse_sentence(inv.sentence, vocab.group());
  const auto seq = core::tokenize(chain, vocab, chain.size());
  ad::Tape<float> tape(false);
  Rng unused;
  const int depth = model::sample_depth(ckpt.config, model::Mode::Eval, unused);
  const auto trace = model::encoder_forward(tape, ckpt.params, ckpt.config, seq.ids, 1, depth);
  const int T = static_cast<int>(seq.ids.size());
  const auto TT = static_cast<std::size_t>(T) * static_cast<std::size_t>(T);
  std::vector<std::string> written;
  const auto dump = [&](const std::string& name, std::span<const float> values) {
    const std::vector<double> v(values.begin(), values.end());
    attn::write_csv(dir / name, v, T, T);
    written.push_back(name);
  };
  for (int l = 0; l < trace.depth(); ++l) {
    const auto& probs = trace.attention[static_cast<std::size_t>(l)];
    if (!probs.defined()) {
      continue;
    }
    for (int h = 0; h < trace.learned_heads; ++h) {
      dump("layer" + std::to_string(l) + "_head" + std::to_string(h) + ".csv",
           probs.data().subspan(static_cast<std::size_t>(h) * TT, TT));
    }
  }
  if (trace.hardcoded.defined()) {
    const char* names[] = {"hardcoded_association.csv", "hardcoded_cls.csv", "hardcoded_sep.csv"};
    for (std::size_t k = 0; k < 3; ++k) {
      dump(names[k], trace.hardcoded.data().subspan(k * TT, TT));
    }
  }
  out << "exported " << written.size() << " attention maps for T=" << T << '\n';
  auto m = base_manifest("export-attn", config);
  m.artifacts = written;
  finish(m, dir, start, out);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LEGO reasoning laboratory"};
  app.require_subcommand(1);
  Invocation inv;

  auto* gen = app.add_subcommand("gen", "generate train/test JSONL splits");
  common_options(gen, inv);
  key_option(gen, "--train-count", "train_count", "training records", inv);
  key_option(gen, "--test-count", "test_count", "test records", inv);

  auto* tr = app.add_subcommand("train", "train an encoder and record per-position metrics");
  common_options(tr, inv);
  key_option(tr, "--supervised", "supervised", "supervised chain positions, e.g. 0-4,11", inv);
  key_option(tr, "--n-tr", "n_tr", "supervise positions 0..n_tr-1", inv);
  key_option(tr, "--epochs", "epochs", "training epochs", inv);
  key_option(tr, "--init-checkpoint", "init_checkpoint", "start from this checkpoint", inv);

  auto* ev = app.add_subcommand("eval", "per-position test accuracy of a checkpoint");
  common_options(ev, inv);
  ev->add_option("--checkpoint", inv.checkpoint, "checkpoint file");
  ev->add_flag("--oracle", inv.oracle, "score the exact resolver instead of a model");

  auto* pr = app.add_subcommand("probe", "per-layer linear probes on a frozen checkpoint");
  common_options(pr, inv);
  pr->add_option("--checkpoint", inv.checkpoint, "checkpoint file")->required();

  auto* mi = app.add_subcommand("mimic", "mimicking initialization of two heads per layer");
  common_options(mi, inv);
  key_option(mi, "--steps", "mimic_steps", "optimizer steps", inv);

  auto* fl = app.add_subcommand("flops", "analytic flops and parameter table");
  common_options(fl, inv);
  fl->add_option("--T", inv.seq_len, "sequence length");

  auto* ex = app.add_subcommand("export-attn", "write per-layer per-head attention matrices");
  common_options(ex, inv);
  ex->add_option("--checkpoint", inv.checkpoint, "checkpoint file")->required();
  ex->add_option("--sentence", inv.sentence, "sentence to run")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (gen->parsed()) {
      return cmd_gen(inv, out);
    }
    if (tr->parsed()) {
      return cmd_train(inv, out);
    }
    if (ev->parsed()) {
      return cmd_eval(inv, out);
    }
    if (pr->parsed()) {
      return cmd_probe(inv, out);
    }
    if (mi->parsed()) {
      return cmd_mimic(inv, out);
    }
    if (fl->parsed()) {
      return cmd_flops(inv, out, fl->count("--out") > 0);
    }
    if (ex->parsed()) {
      return cmd_export_attn(inv, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    args.emplace_back(argv[i]);
  }
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace lego::harness
