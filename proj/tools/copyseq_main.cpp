#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "copyseq/checkpoint.hpp"
#include "copyseq/eval.hpp"
#include "copyseq/runconfig.hpp"
#include "copyseq/threading.hpp"

namespace fs = std::filesystem;
using namespace copyseq;

namespace {

std::vector<std::size_t> parse_topk(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    long v = std::stol(tok);
    if (v < 1) throw ConfigError("topk values must be >= 1");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("empty topk list");
  return out;
}

int cmd_gen_data(std::size_t n_rules, std::size_t per_rule, std::size_t vocab_size,
                 const std::string& types_csv, const std::string& split, double train_frac,
                 std::uint64_t seed, const std::string& out_dir) {
  std::array<double, 5> mix{1, 1, 1, 1, 1};
  if (!types_csv.empty()) {
    mix = {0, 0, 0, 0, 0};
    std::stringstream ss(types_csv);
    std::string name;
    while (std::getline(ss, name, ',')) {
      auto t = parse_rule_type(name);
      if (!t) throw ConfigError("gen-data: unknown rule type '" + name + "'");
      mix[static_cast<std::size_t>(*t)] = 1;
    }
  }
  SplitMode mode;
  if (split == "shared_pool")
    mode = SplitMode::SharedPool;
  else if (split == "disjoint_fillers")
    mode = SplitMode::DisjointFillers;
  else
    throw ConfigError("gen-data: unknown split mode '" + split + "'");

  fs::create_directories(out_dir);
  auto rules = gen_rules(seed, n_rules, vocab_size, mix);
  std::vector<Instance> all;
  for (const auto& rule : rules) {
    auto v = gen_instances(rule, per_rule, seed, vocab_size);
    all.insert(all.end(), v.begin(), v.end());
  }
  auto [train_set, test_set] = split_dataset(all, rules, train_frac, mode, seed, vocab_size);

  write_dataset(out_dir + "/train.tsv", train_set);
  write_dataset(out_dir + "/test.tsv", test_set);
  write_manifest(out_dir + "/rules.tsv", rules);
  make_symbol_vocab(vocab_size).save(out_dir + "/vocab.txt");
  {
    std::ofstream cfg(out_dir + "/gen-config.json");
    cfg << "{\n  \"rules\": " << n_rules << ",\n  \"instances_per_rule\": " << per_rule
        << ",\n  \"vocab_size\": " << vocab_size << ",\n  \"types\": \"" << types_csv
        << "\",\n  \"split\": \"" << split << "\",\n  \"train_frac\": " << train_frac
        << ",\n  \"seed\": " << seed << "\n}\n";
  }
  std::cout << "wrote " << train_set.size() << " train / " << test_set.size() << " test instances, "
            << rules.size() << " rules to " << out_dir << "\n";
  return 0;
}

// model vocab = data vocab truncated to the configured size
Vocabulary model_vocab_for(const RunConfig& cfg, const Vocabulary& data_vocab) {
  if (cfg.model.vocab_regular == 0 || cfg.model.vocab_regular >= data_vocab.regular_count())
    return data_vocab;
  return data_vocab.truncated(cfg.model.vocab_regular);
}

std::vector<Instance> filter_types(std::vector<Instance> data, const std::vector<RuleType>& keep) {
  if (keep.empty()) return data;
  std::vector<Instance> out;
  for (auto& inst : data)
    if (inst.type && std::find(keep.begin(), keep.end(), *inst.type) != keep.end())
      out.push_back(std::move(inst));
  return out;
}

int cmd_train(const std::string& config_path, bool resume) {
  RunConfig cfg = load_run_config(config_path);
  if (cfg.data_train.empty() || cfg.data_vocab.empty())
    throw ConfigError("train: config needs data.train and data.vocab");
  if (cfg.output_dir.empty()) throw ConfigError("train: config needs output_dir");

  Vocabulary data_vocab = Vocabulary::load(cfg.data_vocab);
  Vocabulary vocab = model_vocab_for(cfg, data_vocab);
  ModelConfig mc = cfg.model;
  mc.vocab_regular = vocab.regular_count();

  std::vector<Instance> train_set = filter_types(read_dataset(cfg.data_train), cfg.rule_types);
  if (train_set.empty()) throw ConfigError("train: no training instances after filtering");
  std::vector<Instance> dev_set;
  if (!cfg.data_dev.empty()) {
    dev_set = filter_types(read_dataset(cfg.data_dev), cfg.rule_types);
  } else {
    // deterministic 10% tail of the shuffled training split
    Rng rng(derive_seed(cfg.train.seed, "devsplit"));
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    std::size_t n_dev = std::max<std::size_t>(1, train_set.size() / 10);
    std::vector<Instance> tr, dv;
    for (std::size_t i = 0; i < order.size(); ++i)
      (i + n_dev < order.size() ? tr : dv).push_back(train_set[order[i]]);
    train_set = std::move(tr);
    dev_set = std::move(dv);
  }

  fs::create_directories(cfg.output_dir);
  {
    RunConfig resolved = cfg;
    resolved.model = mc;
    std::ofstream out(cfg.output_dir + "/config.json");
    out << run_config_to_json(resolved);
  }

  Model model = Model::init(mc, cfg.train.seed);
  TrainOptions opts;
  opts.log = &std::cout;
  opts.out_dir = cfg.output_dir;
  opts.dev_threads = thread_cap();
  if (resume) {
    std::string last = cfg.output_dir + "/last.ckpt";
    if (fs::exists(last)) opts.resume_from = last;
  }
  TrainResult res = train(model, cfg.train, vocab, train_set, dev_set, opts);
  std::cout << "best dev exact match " << res.best_dev_em << " at epoch " << res.best_epoch << " ("
            << res.epochs_run << " epochs run)\n";
  std::cout << "checkpoints in " << cfg.output_dir << "\n";
  return 0;
}

std::pair<Model, Vocabulary> load_model_and_vocab(const std::string& ckpt_path, const std::string& vocab_path) {
  LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  Vocabulary data_vocab = Vocabulary::load(vocab_path);
  if (data_vocab.regular_count() < ckpt.model.cfg.vocab_regular)
    throw VersionError("checkpoint expects " + std::to_string(ckpt.model.cfg.vocab_regular) +
                       " symbols, vocabulary has " + std::to_string(data_vocab.regular_count()));
  Vocabulary vocab = data_vocab.regular_count() == ckpt.model.cfg.vocab_regular
                         ? data_vocab
                         : data_vocab.truncated(ckpt.model.cfg.vocab_regular);
  return {std::move(ckpt.model), std::move(vocab)};
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& vocab_path,
             std::size_t beam, const std::string& topk_csv, const std::string& out_path,
             std::size_t threads) {
  auto [model, vocab] = load_model_and_vocab(ckpt_path, vocab_path);
  std::vector<Instance> data = read_dataset(data_path);
  EvalOptions opts;
  opts.beam = beam;
  opts.topk = parse_topk(topk_csv);
  opts.threads = threads;
  std::vector<InstanceEval> details;
  EvalReport report = evaluate(model, vocab, data, opts, &details);
  std::cout << format_report(report);
  if (model.cfg.kind == ModelKind::CopyNet) {
    std::cout << "diag\tmean_max_rho\t" << report.mean_max_rho << "\t(" << report.copy_steps
              << " copy steps)\n";
    std::cout << "diag\tcopy_advance_frac\t" << report.copy_advance_frac << "\t(" << report.advance_pairs
              << " consecutive pairs)\n";
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    write_decode_tsv(out, data, details);
    std::cout << "decodes written to " << out_path << "\n";
  }
  return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& input_path, const std::string& vocab_path,
               std::size_t beam, const std::string& out_path, const std::string& heat_path) {
  auto [model, vocab] = load_model_and_vocab(ckpt_path, vocab_path);
  std::vector<Instance> data = read_dataset(input_path);
  EvalOptions opts;
  opts.beam = beam;
  opts.topk = {1};
  std::vector<InstanceEval> details;
  evaluate(model, vocab, data, opts, &details);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    out = &file;
  }
  write_decode_tsv(*out, data, details);
  if (!heat_path.empty()) {
    if (model.cfg.kind != ModelKind::CopyNet)
      throw ConfigError("decode: --dump-copy-heat needs a copynet checkpoint");
    std::ofstream heat(heat_path);
    dump_copy_heat(heat, model, vocab, data, beam);
    std::cout << "copy heat written to " << heat_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence-to-sequence toolkit with a copy mechanism"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic rule-transduction benchmark");
  std::size_t n_rules = 200, per_rule = 200, vocab_size = 1000;
  std::string types_csv, split = "shared_pool", out_dir;
  double train_frac = 0.5;
  std::uint64_t seed = 1;
  gen->add_option("--rules", n_rules, "number of rule templates");
  gen->add_option("--instances-per-rule", per_rule, "instances per rule");
  gen->add_option("--vocab-size", vocab_size, "regular symbol count");
  gen->add_option("--types", types_csv, "comma list of rule types (default: all five)");
  gen->add_option("--split", split, "shared_pool | disjoint_fillers");
  gen->add_option("--train-frac", train_frac, "training fraction");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model from a JSON run config");
  std::string config_path;
  bool resume = false;
  tr->add_option("--config", config_path, "run configuration")->required();
  tr->add_flag("--resume", resume, "continue from output_dir/last.ckpt when present");

  auto* ev = app.add_subcommand("eval", "exact-match evaluation with per-rule-type report");
  std::string ckpt_path, data_path, vocab_path, topk_csv = "1,10", decode_out;
  std::size_t beam = 10, threads = 0;
  ev->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  ev->add_option("--data", data_path, "dataset TSV")->required();
  ev->add_option("--vocab", vocab_path, "vocabulary file")->required();
  ev->add_option("--beam", beam, "beam width");
  ev->add_option("--topk", topk_csv, "comma list of k for top-k accuracy");
  ev->add_option("--out", decode_out, "write per-instance decodes here");
  ev->add_option("--threads", threads, "worker cap (default COPYSEQ_THREADS)");

  auto* dec = app.add_subcommand("decode", "decode inputs and optionally dump copy heat");
  std::string in_path, heat_path, dec_out;
  std::string dec_ckpt, dec_vocab;
  std::size_t dec_beam = 10;
  dec->add_option("--checkpoint", dec_ckpt, "model checkpoint")->required();
  dec->add_option("--input", in_path, "input TSV (source [TAB target])")->required();
  dec->add_option("--vocab", dec_vocab, "vocabulary file")->required();
  dec->add_option("--beam", dec_beam, "beam width");
  dec->add_option("--out", dec_out, "output TSV (default stdout)");
  dec->add_option("--dump-copy-heat", heat_path, "write per-step copy heat TSV here");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen_data(n_rules, per_rule, vocab_size, types_csv, split, train_frac, seed, out_dir);
    if (tr->parsed()) return cmd_train(config_path, resume);
    if (ev->parsed()) return cmd_eval(ckpt_path, data_path, vocab_path, beam, topk_csv, decode_out, threads);
    if (dec->parsed()) return cmd_decode(dec_ckpt, in_path, dec_vocab, dec_beam, dec_out, heat_path);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
