// Command-line front end: world generation, training, probing, the ablation
// and strategy suites, and a rollout inspector. Invalid configuration exits
// with status 2 and a message naming the offending field.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kehrl/digest.hpp"
#include "kehrl/experiments.hpp"
#include "kehrl/synthetic.hpp"
#include "kehrl/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kehrl;

namespace {

int log_level() {
  const char* v = std::getenv("KEHRL_LOG");
  return v ? std::atoi(v) : 1;  // 0 quiet, 1 progress, 2 chatty
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// Everything `train` and the suites need: model size, budget, selection.
struct RunSpec {
  EncoderConfig encoder;
  TrainConfig train;
  std::uint64_t init_seed = 0xA11;
  std::string condition = "kehrl";
  long long lt_max = 4;
  long long hf_min = 17;
  long long hf_max = 40;
};

void add_run_flags(CLI::App* cmd, RunSpec& rs) {
  cmd->add_option("--d", rs.encoder.d, "hidden width");
  cmd->add_option("--layers", rs.encoder.layers, "encoder layers");
  cmd->add_option("--heads", rs.encoder.heads, "attention heads");
  cmd->add_option("--max-len", rs.encoder.max_len, "position table size");
  cmd->add_option("--l-tri", rs.encoder.l_tri, "pseudo-sentence length cap");
  cmd->add_option("--slots-high", rs.encoder.entities_per_sentence,
                  "entity slots per sentence");
  cmd->add_option("--slots-low", rs.encoder.triples_per_entity, "triple slots per entity");
  cmd->add_option("--k-hops", rs.encoder.k_hops, "retrieval hop bound");
  cmd->add_option("--mask-rate", rs.encoder.token_mask_rate, "token masking rate");
  cmd->add_flag("--tie-head", rs.encoder.tie_mlm_head, "tie output head to embeddings");

  cmd->add_option("--epochs", rs.train.epochs, "training epochs");
  cmd->add_option("--batch", rs.train.batch_size, "sentences per optimizer step");
  cmd->add_option("--lr-encoder", rs.train.lr_encoder, "encoder learning rate");
  cmd->add_option("--lr-policy", rs.train.lr_policy, "policy learning rate");
  cmd->add_option("--omega1", rs.train.omega.w1, "language-loss weight");
  cmd->add_option("--omega2", rs.train.omega.w2, "high-surrogate weight");
  cmd->add_option("--omega3", rs.train.omega.w3, "low-surrogate weight");
  cmd->add_option("--lambda", rs.train.rollout.lambda, "internal/prior mixing weight");
  cmd->add_option("--baseline-decay", rs.train.baseline_decay, "reward baseline decay");
  cmd->add_option("--probe-every", rs.train.probe_every, "epochs between probe passes");
  cmd->add_option("--seed", rs.train.seed, "training stream seed");
  cmd->add_option("--init-seed", rs.init_seed, "parameter initialization seed");
  std::map<std::string, Optimizer> opts{{"sgd", Optimizer::sgd}, {"adamw", Optimizer::adamw}};
  cmd->add_option("--optimizer", rs.train.optimizer, "optimizer")
      ->transform(CLI::CheckedTransformer(opts, CLI::ignore_case));
  cmd->add_option("--condition", rs.condition,
                  "selection condition (kehrl, no_injection, inject_all, no_low_rl, "
                  "no_high_rl, no_prior, long_tail_only, high_freq_only)");
  cmd->add_option("--lt-max", rs.lt_max, "long-tail strategy count ceiling");
  cmd->add_option("--hf-min", rs.hf_min, "high-frequency strategy count floor");
  cmd->add_option("--hf-max", rs.hf_max, "high-frequency strategy count ceiling");
}

ExperimentConfig to_experiment(const RunSpec& rs) {
  ExperimentConfig ec;
  ec.encoder = rs.encoder;
  ec.train = rs.train;
  ec.init_seed = rs.init_seed;
  ec.long_tail_count_max = rs.lt_max;
  ec.high_freq_count_min = rs.hf_min;
  ec.high_freq_count_max = rs.hf_max;
  return ec;
}

json spec_json(const RunSpec& rs, const std::string& corpus_dir) {
  json j;
  j["encoder"] = {{"d", rs.encoder.d},
                  {"layers", rs.encoder.layers},
                  {"heads", rs.encoder.heads},
                  {"max_len", rs.encoder.max_len},
                  {"l_tri", rs.encoder.l_tri},
                  {"entities_per_sentence", rs.encoder.entities_per_sentence},
                  {"triples_per_entity", rs.encoder.triples_per_entity},
                  {"k_hops", rs.encoder.k_hops},
                  {"token_mask_rate", rs.encoder.token_mask_rate},
                  {"tie_mlm_head", rs.encoder.tie_mlm_head}};
  j["train"] = {{"epochs", rs.train.epochs},
                {"batch_size", rs.train.batch_size},
                {"lr_encoder", rs.train.lr_encoder},
                {"lr_policy", rs.train.lr_policy},
                {"optimizer", rs.train.optimizer == Optimizer::sgd ? "sgd" : "adamw"},
                {"omega", {rs.train.omega.w1, rs.train.omega.w2, rs.train.omega.w3}},
                {"lambda", rs.train.rollout.lambda},
                {"baseline_decay", rs.train.baseline_decay},
                {"probe_every", rs.train.probe_every},
                {"seed", rs.train.seed},
                {"init_seed", rs.init_seed}};
  j["condition"] = rs.condition;
  j["strategy_bands"] = {{"lt_max", rs.lt_max}, {"hf_min", rs.hf_min}, {"hf_max", rs.hf_max}};
  j["corpus_dir"] = corpus_dir;
  for (const char* f : {"corpus.jsonl", "kg.tsv", "surfaces.tsv", "probes.jsonl"}) {
    const std::string p = corpus_dir + "/" + f;
    if (fs::exists(p)) j["data_fnv64"][f] = hex64(fnv1a64_file(p));
  }
  return j;
}

struct LoadedWorld {
  CorpusData data;
  std::vector<ProbeRecord> probes;
};

LoadedWorld load_world(const std::string& dir) {
  LoadedWorld w;
  w.data = ingest_corpus({dir + "/corpus.jsonl", dir + "/kg.tsv", dir + "/surfaces.tsv"});
  const std::string probes = dir + "/probes.jsonl";
  if (fs::exists(probes)) w.probes = load_probes(probes);
  return w;
}

void print_probe(const std::string& tag, const ProbeResult& pr) {
  std::cout << tag << ": macro_p1=" << pr.macro_p1 << " micro_p1=" << pr.micro_p1
            << " evaluated=" << pr.evaluated << " oov_gold=" << pr.oov_gold << "\n";
  for (const auto& [cls, p1] : pr.per_class) std::cout << "  class " << cls << ": " << p1 << "\n";
}

int cmd_gen(const std::string& config_path, const SyntheticConfig& flags,
            const std::string& out_dir) {
  SyntheticConfig sc = flags;
  if (!config_path.empty()) {
    SyntheticConfig file = SyntheticConfig::from_json_text(read_text(config_path));
    file.seed = sc.seed;  // command-line seed wins
    file.seed_set = sc.seed_set;
    sc = file;
  }
  const WorldFiles wf = generate_synthetic_world(sc, out_dir);
  if (log_level() >= 1)
    std::cout << "world written: " << wf.corpus_jsonl << " (manifest " << wf.manifest_json
              << ")\n";
  return 0;
}

int cmd_train(const RunSpec& rs, const std::string& corpus_dir, const std::string& out_dir,
              int inspect_sentences) {
  LoadedWorld w = load_world(corpus_dir);
  ExperimentConfig ec = to_experiment(rs);
  const Condition cond = condition_from_name(rs.condition);

  EncoderConfig cfg = ec.encoder;
  cfg.vocab_size = w.data.vocab.size();
  cfg.validate();
  Encoder enc(cfg);
  Policy high(cfg.entities_per_sentence, cfg.d);
  Policy low(cfg.triples_per_entity, cfg.d);
  Rng init_rng(ec.init_seed);
  enc.init_params(init_rng);
  high.init_params(init_rng);
  low.init_params(init_rng);

  TrainConfig tc = ec.train;
  tc.rollout = condition_rollout(cond, ec);
  Trainer tr(enc, high, low, w.data.store, w.data.vocab, tc);

  if (log_level() >= 1)
    std::cout << "training " << rs.condition << ": " << w.data.sentences.size() << " sentences, "
              << tc.epochs << " epochs, vocab " << w.data.vocab.size() << "\n";
  const TrainReport rep = tr.run(w.data.sentences, w.probes);
  if (log_level() >= 1 && !rep.rows.empty())
    std::cout << "final mlm_loss=" << rep.rows.back().mlm_loss
              << " probe_p1=" << (rep.probe_history.empty() ? 0.0 : rep.probe_history.back())
              << "\n";

  fs::create_directories(out_dir);
  const json run_config = spec_json(rs, corpus_dir);
  write_text(out_dir + "/config.json", run_config.dump(2) + "\n");
  {
    std::ofstream csv(out_dir + "/report.csv");
    rep.write_csv(csv);
  }
  tr.save(out_dir + "/checkpoint", run_config.dump());
  if (!w.probes.empty()) {
    ProbeOptions po;
    po.rollout = tc.rollout;
    po.seed = derive_seed(tc.seed, {0x9B0});
    const ProbeResult pr = probe_eval(enc, high, low, w.data.store, w.data.vocab, w.probes, po);
    if (log_level() >= 1) print_probe("trained probe", pr);
  }

  if (inspect_sentences > 0) {
    // Greedy rollouts over the first sentences: mixing weights as CSV rows,
    // actions as JSON lines.
    RolloutOptions ro = tc.rollout;
    if (ro.high == RolloutOptions::HighMode::sample) ro.high = RolloutOptions::HighMode::greedy;
    if (ro.low == RolloutOptions::LowMode::sample) ro.low = RolloutOptions::LowMode::greedy;
    std::ofstream mixcsv(out_dir + "/mixing.csv");
    mixcsv << "sentence,mention,entity_prior,slot,triple_prior,alpha,beta_head,beta_rel,beta_tail\n";
    std::ofstream eps(out_dir + "/episodes.jsonl");
    const int n = std::min<int>(inspect_sentences, static_cast<int>(w.data.sentences.size()));
    for (int i = 0; i < n; ++i) {
      const AnnotatedSentence& s = w.data.sentences[static_cast<std::size_t>(i)];
      Rng rng(derive_seed(tc.seed, {0x1A5, static_cast<std::uint64_t>(i)}));
      Graph g;
      ParamBinder eb(g, enc.params());
      ParamBinder hb(g, high.params(), enc.params().size());
      ParamBinder lb(g, low.params(), enc.params().size() + high.params().size());
      const RolloutResult r = roll_sentence(g, eb, hb, lb, enc, high, low, s, w.data.store,
                                            w.data.vocab, ro, rng);
      for (std::size_t ei = 0; ei < r.eligible.size(); ++ei)
        for (int q = 0; q < r.alphas[ei].cols; ++q)
          mixcsv << s.id << ',' << r.eligible[ei] << ',' << r.entity_priors[ei] << ',' << q
                 << ',' << r.triple_priors[ei][static_cast<std::size_t>(q)] << ','
                 << r.alphas[ei].at(0, q) << ',' << r.betas[ei][static_cast<std::size_t>(q)].at(0, 0)
                 << ',' << r.betas[ei][static_cast<std::size_t>(q)].at(0, 1) << ','
                 << r.betas[ei][static_cast<std::size_t>(q)].at(0, 2) << '\n';
      json e;
      e["sentence"] = s.id;
      e["eligible"] = r.eligible;
      e["high_bits"] = r.episode.high_bits;
      e["slot_mention"] = r.episode.slot_mention;
      json lows = json::array();
      for (const LowEpisode& le : r.episode.low)
        lows.push_back({{"mention", le.mention}, {"bits", le.bits}});
      e["low"] = lows;
      json inj = json::array();
      for (const auto& [pos, node] : r.injections) inj.push_back(pos);
      e["injected_positions"] = inj;
      eps << e.dump() << "\n";
    }
    if (log_level() >= 1)
      std::cout << "inspection written: " << out_dir << "/mixing.csv, episodes.jsonl\n";
  }
  return 0;
}

int cmd_probe(const RunSpec& rs, const std::string& corpus_dir, const std::string& ck_prefix,
              const std::string& csv_path) {
  LoadedWorld w = load_world(corpus_dir);
  if (w.probes.empty()) throw std::runtime_error("no probes.jsonl under " + corpus_dir);
  EncoderConfig cfg = rs.encoder;
  cfg.vocab_size = w.data.vocab.size();
  cfg.validate();
  Encoder enc(cfg);
  Policy high(cfg.entities_per_sentence, cfg.d);
  Policy low(cfg.triples_per_entity, cfg.d);
  const LoadedCheckpoint ck = load_checkpoint(ck_prefix);
  restore_params(enc.params(), "encoder.", ck);
  restore_params(high.params(), "high.", ck);
  restore_params(low.params(), "low.", ck);

  ExperimentConfig ec = to_experiment(rs);
  ProbeOptions po;
  po.rollout = condition_rollout(condition_from_name(rs.condition), ec);
  po.seed = derive_seed(rs.train.seed, {0x9B0});
  const ProbeResult pr = probe_eval(enc, high, low, w.data.store, w.data.vocab, w.probes, po);
  print_probe("probe", pr);
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    csv << "metric,value\n";
    csv << "macro_p1," << pr.macro_p1 << "\nmicro_p1," << pr.micro_p1 << "\n";
    for (const auto& [cls, p1] : pr.per_class) csv << "class:" << cls << ',' << p1 << "\n";
    for (const auto& [grp, p1] : pr.per_group) csv << "group:" << grp << ',' << p1 << "\n";
  }
  return 0;
}

int cmd_suite(const RunSpec& rs, const std::string& corpus_dir, const std::string& out_dir,
              const std::vector<Condition>& conditions, const std::string& csv_name) {
  LoadedWorld w = load_world(corpus_dir);
  if (w.probes.empty()) throw std::runtime_error("no probes.jsonl under " + corpus_dir);
  const ExperimentConfig ec = to_experiment(rs);
  SuiteResult suite;
  for (Condition c : conditions) {
    if (log_level() >= 1) std::cout << "condition " << condition_name(c) << "...\n";
    suite.conditions.push_back(run_condition(c, ec, w.data, w.probes));
    const ConditionResult& r = suite.conditions.back();
    if (log_level() >= 1)
      std::cout << "  trained macro_p1=" << r.trained.macro_p1
                << " (initial " << r.initial.macro_p1 << ")\n";
  }
  fs::create_directories(out_dir);
  {
    std::ofstream csv(out_dir + "/" + csv_name);
    suite.write_csv(csv);
  }
  write_text(out_dir + "/config.json", spec_json(rs, corpus_dir).dump(2) + "\n");
  std::cout << "suite written: " << out_dir << "/" << csv_name << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale knowledge-injection language model with two-level"
               " reinforcement-learned selection"};
  app.require_subcommand(1);

  // gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate a synthetic world");
  SyntheticConfig sc;
  std::string gen_config, gen_out = "world";
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "synthetic config JSON file");
  gen->add_option("--out-dir", gen_out, "output directory");
  gen->add_option("--seed", gen_seed, "world seed (required)")->required();
  gen->add_option("--hf-entities", sc.high_freq_entities, "high-frequency entities");
  gen->add_option("--lt-entities", sc.long_tail_entities, "long-tail entities");
  gen->add_option("--poly-entities", sc.polysemic_entities, "polysemic entities");
  gen->add_option("--filler-entities", sc.filler_entities, "filler entities");
  gen->add_option("--tail-entities", sc.tail_entities, "tail vocabulary");
  gen->add_option("--hf-sentences", sc.high_freq_sentences, "sentences per frequent entity");
  gen->add_option("--lt-sentences", sc.long_tail_sentences, "sentences per rare entity");
  gen->add_option("--poly-per-sense", sc.polysemic_sentences_per_sense,
                  "sentences per polysemic sense");
  gen->add_option("--noise-sentences", sc.noise_sentences, "filler-headed noise sentences");
  gen->add_option("--noise-triples", sc.noise_triples_per_filler, "noise triples per filler");
  gen->add_option("--poly-false", sc.polysemic_false_triples,
                  "unsupported same-relation triples per polysemic sense");
  gen->add_option("--filler-content", sc.filler_content_triples,
                  "filler facts placed on content relations");
  gen->add_option("--probe-arrangements", sc.probe_arrangements, "probe records per sense");
  gen->add_option("--filler-probes", sc.filler_probe_records, "filler probe records");

  // train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train one condition on a world");
  RunSpec rs;
  std::string corpus_dir = "world", out_dir = "run";
  int inspect_sentences = 0;
  train->add_option("--corpus", corpus_dir, "world directory")->required();
  train->add_option("--out-dir", out_dir, "run artifact directory");
  train->add_option("--inspect", inspect_sentences,
                    "dump mixing weights and greedy episodes for the first N sentences");
  add_run_flags(train, rs);

  // probe ---------------------------------------------------------------
  auto* probe = app.add_subcommand("probe", "evaluate a checkpoint on the probe set");
  std::string ck_prefix, probe_csv;
  probe->add_option("--corpus", corpus_dir, "world directory")->required();
  probe->add_option("--checkpoint", ck_prefix, "checkpoint prefix (no extension)")->required();
  probe->add_option("--csv", probe_csv, "write metrics CSV here");
  add_run_flags(probe, rs);

  // ablate / compare ------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate", "policy ablation suite");
  ablate->add_option("--corpus", corpus_dir, "world directory")->required();
  ablate->add_option("--out-dir", out_dir, "suite artifact directory");
  add_run_flags(ablate, rs);

  auto* compare = app.add_subcommand("compare", "selection strategy suite");
  compare->add_option("--corpus", corpus_dir, "world directory")->required();
  compare->add_option("--out-dir", out_dir, "suite artifact directory");
  add_run_flags(compare, rs);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      sc.seed = gen_seed;
      sc.seed_set = true;
      return cmd_gen(gen_config, sc, gen_out);
    }
    if (train->parsed()) return cmd_train(rs, corpus_dir, out_dir, inspect_sentences);
    if (probe->parsed()) return cmd_probe(rs, corpus_dir, ck_prefix, probe_csv);
    if (ablate->parsed())
      return cmd_suite(rs, corpus_dir, out_dir,
                       {Condition::kehrl, Condition::no_low_rl, Condition::no_high_rl,
                        Condition::no_prior},
                       "ablation.csv");
    if (compare->parsed())
      return cmd_suite(rs, corpus_dir, out_dir,
                       {Condition::no_injection, Condition::inject_all,
                        Condition::long_tail_only, Condition::high_freq_only, Condition::kehrl},
                       "strategies.csv");
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
