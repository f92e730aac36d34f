#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "kgbilm/evalsuite/eval.hpp"
#include "kgbilm/evalsuite/synth.hpp"
#include "kgbilm/trainer/dataset.hpp"
#include "kgbilm/trainer/grad_sweep.hpp"
#include "kgbilm/trainer/run.hpp"

namespace {

using namespace kgbilm;
namespace fs = std::filesystem;

// Missing or contradictory arguments detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

TrainConfig resolve_config(const Globals& g, TrainConfig base = {}) {
  TrainConfig c = g.config.empty() ? std::move(base) : load_config(g.config, std::move(base));
  for (const auto& s : g.sets) apply_setting(c, s);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out DIR is required");
  fs::create_directories(g.out);
  return g.out;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw DataError("cannot write " + p.string());
}

// ---- synth ----

struct SynthArgs {
  SynthConfig cfg;
};

int run_synth(const Globals& g, SynthArgs a) {
  if (g.seed) a.cfg.seed = *g.seed;
  const auto kg = synthetic_kg(a.cfg);
  const auto dir = require_out(g);
  std::ostringstream triples, desc;
  write_triples(triples, kg, kg.triples());
  write_descriptions(desc, kg);
  write_file(dir / "triples.tsv", triples.str());
  write_file(dir / "descriptions.tsv", desc.str());
  std::cout << "entities=" << kg.num_entities() << "\nrelations=" << kg.num_relations()
            << "\ntriples=" << kg.num_triples() << "\n";
  return 0;
}

// ---- ingest ----

struct IngestArgs {
  std::string triples, descriptions;
  double valid_fraction = 0.05, test_fraction = 0.1, zero_shot = 0.0;
};

int run_ingest(const Globals& g, const IngestArgs& a) {
  const auto cfg = resolve_config(g);
  auto kg = load_triples(a.triples);
  DescriptionReport desc;
  if (!a.descriptions.empty()) desc = load_descriptions(a.descriptions, kg);
  Rng rng = derive_rng({cfg.seed, 0x5e7u});
  const Split split = a.zero_shot > 0 ? zero_shot_split(kg, a.zero_shot, rng)
                                      : random_split(kg, a.valid_fraction, a.test_fraction, rng);
  // Vocabulary over the whole graph so held-out entities keep a symbol.
  const auto vocab = build_vocab(kg, cfg.min_freq);
  const auto dir = require_out(g);
  save_dataset(dir, kg, split, vocab);
  std::cout << "entities=" << kg.num_entities() << "\nrelations=" << kg.num_relations()
            << "\ntriples=" << kg.num_triples() << "\ndescriptions=" << kg.num_descriptions()
            << "\ndescriptions_skipped=" << desc.skipped_names.size() << "\nvocab=" << vocab.size()
            << "\ntrain=" << split.train.num_triples() << "\nvalid=" << split.valid_triples.size()
            << "\ntest=" << split.test_triples.size() << "\nunseen_entities=" << split.unseen_entities.size() << "\n";
  for (const auto& name : desc.skipped_names) std::cerr << "warning: description for unknown entity '" << name << "'\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string data, resume;
  std::size_t checkpoint_every = 0;
  bool quiet = false;
};

int run_train(const Globals& g, const TrainArgs& a) {
  const auto ds = load_dataset(a.data);
  std::optional<Checkpoint> ck;
  if (!a.resume.empty()) ck = load_checkpoint(a.resume);
  auto cfg = resolve_config(g, ck ? ck->config : TrainConfig{});
  cfg.threads = resolve_threads(cfg.threads);
  if (ck && !(ck->vocab == ds.vocab)) throw DataError("train: checkpoint vocabulary differs from " + a.data);
  const TrainingData data(ds.split.train, ds.vocab);
  TrainState state = ck ? std::move(ck->state) : init_train_state(cfg, ds.vocab.size());
  RunOptions opt{require_out(g), a.checkpoint_every, a.quiet ? nullptr : &std::cout};
  write_file(opt.out / "config.txt", config_to_text(cfg));
  run_training(std::move(state), data, cfg, ds.vocab, opt);
  return 0;
}

// ---- eval / zero-shot-eval ----

struct EvalArgs {
  std::string checkpoint, data, scorer = "mask-logit", protocol = "filtered", direction = "both";
};

EvalOptions eval_options(const EvalArgs& a, std::size_t threads) {
  EvalOptions o;
  o.protocol = a.protocol == "raw" ? Protocol::kRaw : Protocol::kFiltered;
  o.tails = a.direction != "head";
  o.heads = a.direction != "tail";
  o.threads = threads;
  return o;
}

std::string significance_lines(const EvalReport& r) {
  double chance = 0;
  for (const auto* counts : {&r.tail_candidates, &r.head_candidates})
    for (auto c : *counts) chance += std::min(10.0, static_cast<double>(c)) / static_cast<double>(c);
  char buf[128];
  std::snprintf(buf, sizeof buf, "chance_hits@10=%.9g\np_value_hits@10=%.9g\n", chance / static_cast<double>(r.n_queries),
                hits_p_value(r, 10));
  return buf;
}

int run_eval(const Globals& g, const EvalArgs& a, bool zero_shot) {
  const auto ds = load_dataset(a.data);
  const auto ck = load_checkpoint(a.checkpoint);
  if (!(ck.vocab == ds.vocab)) throw DataError("eval: checkpoint vocabulary differs from " + a.data);
  const auto cfg = resolve_config(g, ck.config);
  if (zero_shot) {
    if (ds.split.unseen_entities.empty()) throw DataError("zero-shot-eval: dataset has no unseen entities");
    if (auto bad = zero_shot_violations(ds.split)) {
      throw DataError("zero-shot-eval: " + std::to_string(bad) + " triple(s) break the unseen-entity split");
    }
  }
  // Attention masks see only training edges.
  const ModelScorer<float> model(ck.state.params, cfg.bka, cfg.cgsa.pooling, ds.split.train, ds.vocab);
  const auto kind = zero_shot || a.scorer == "embed-cosine" ? ScorerKind::kEmbedCosine : ScorerKind::kMaskLogit;
  const auto threads = resolve_threads(cfg.threads);
  if (kind == ScorerKind::kEmbedCosine) model.prepare_candidates(threads);
  const auto report = evaluate(ds.split, model.scorer(kind), eval_options(a, threads));
  std::string text = "scorer=" + std::string(kind == ScorerKind::kMaskLogit ? "mask-logit" : "embed-cosine") + "\n" +
                     report_to_text(report);
  if (zero_shot) text += significance_lines(report);
  std::cout << text;
  if (!g.out.empty()) {
    const auto dir = require_out(g);
    write_file(dir / "report.txt", text);
    write_file(dir / "report.tsv", report_to_row(report));
  }
  return 0;
}

// ---- grad-check ----

int run_grad_check(const Globals& g, double step) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = toy_grad_check(g.seed.value_or(0), step);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("max_relative_error=%.6g\nworst=%s[%zu]\nanalytic=%.9g\nnumeric=%.9g\nentries=%zu\nseconds=%.2f\n",
              r.max_relative_error, r.worst_param.c_str(), r.worst_index, r.analytic, r.numeric, r.entries_checked,
              secs);
  return r.max_relative_error < 1e-3 ? 0 : 3;
}

// ---- mask-dump ----

struct MaskArgs {
  std::string data, text, entity, description;
  bool legend = false;
};

int run_mask_dump(const Globals& g, const MaskArgs& a) {
  const auto cfg = resolve_config(g);
  const int sources = !a.text.empty() + !a.entity.empty() + !a.description.empty();
  if (sources != 1) throw UsageError("give exactly one of --text, --entity, --description");
  KnowledgeGraph kg;
  std::optional<Dataset> ds;
  TokenSequence seq;
  std::vector<std::string> surfaces;
  if (!a.text.empty()) {
    seq.push(Vocab::kBos, TokenKind::kSpecial);
    surfaces.push_back("<bos>");
    for (const auto& w : tokenize(a.text)) {
      seq.push(Vocab::kUnk, TokenKind::kText);
      surfaces.push_back(w);
    }
    seq.push(Vocab::kEos, TokenKind::kSpecial);
    surfaces.push_back("<eos>");
  } else {
    if (a.data.empty()) throw UsageError("--entity and --description need --data");
    ds = load_dataset(a.data);
    kg = ds->split.train;
    const auto name = a.entity.empty() ? a.description : a.entity;
    const auto e = kg.find_entity(name);
    if (!e) throw DataError("mask-dump: unknown entity '" + name + "'");
    if (!a.entity.empty()) {
      Rng rng = derive_rng({cfg.seed, 0x3a5cu});
      seq = serialize(sample_subgraph(kg, *e, cfg.subgraph_radius, cfg.subgraph_max_triples, rng), kg, ds->vocab,
                      cfg.bka.max_len);
    } else {
      seq = serialize_description(*e, kg, ds->vocab, cfg.bka.max_len);
    }
    for (TokenId t : seq.ids) surfaces.push_back(ds->vocab.surface(t));
  }
  auto bka = cfg.bka;
  bka.max_len = std::max(bka.max_len, seq.size());
  const auto grid = build_bka_mask(seq, kg, bka).to_grid();
  std::string out;
  if (a.legend)
    for (std::size_t i = 0; i < surfaces.size(); ++i) out += "# " + std::to_string(i) + "\t" + surfaces[i] + "\n";
  out += grid;
  std::cout << out;
  if (!g.out.empty()) write_file(require_out(g) / "mask.txt", out);
  return 0;
}

// ---- embed-dump ----

struct EmbedArgs {
  std::string checkpoint, data, source = "description";
};

int run_embed_dump(const Globals& g, const EmbedArgs& a) {
  const auto ds = load_dataset(a.data);
  const auto ck = load_checkpoint(a.checkpoint);
  if (!(ck.vocab == ds.vocab)) throw DataError("embed-dump: checkpoint vocabulary differs from " + a.data);
  const auto cfg = resolve_config(g, ck.config);
  const ModelScorer<float> model(ck.state.params, cfg.bka, cfg.cgsa.pooling, ds.split.train, ds.vocab);
  std::string out;
  std::size_t skipped = 0;
  char buf[32];
  for (EntityId e = 0; e < ds.full.num_entities(); ++e) {
    std::vector<double> z;
    if (a.source == "symbol") {
      const auto& w = ck.state.params.token_embedding;
      for (std::size_t c = 0; c < w.cols(); ++c) z.push_back(w(ds.vocab.entity_token(e), c));
    } else if (!description_tokens(ds.full, ds.vocab, e).empty()) {
      z = model.embedding(serialize_description(e, ds.full, ds.vocab, cfg.bka.max_len));
    } else {
      ++skipped;
      continue;
    }
    out += std::to_string(e);
    for (double v : z) {
      std::snprintf(buf, sizeof buf, "\t%.9g", v);
      out += buf;
    }
    out += '\n';
  }
  if (g.out.empty()) {
    std::cout << out;
  } else {
    write_file(require_out(g) / "embeddings.tsv", out);
  }
  if (skipped) std::cerr << "skipped " << skipped << " entities without a description\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kgbilm: knowledge-graph bidirectional language model toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--config", g.config, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Config override key=value (repeatable; wins over --config)");
  app.add_option("--out", g.out, "Output directory");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a group-structured synthetic graph with descriptions");
  synth_cmd->add_option("--entities", synth.cfg.entities)->capture_default_str();
  synth_cmd->add_option("--relations", synth.cfg.relations)->capture_default_str();
  synth_cmd->add_option("--groups", synth.cfg.groups)->capture_default_str();
  synth_cmd->add_option("--intra-relations", synth.cfg.intra_relations)->capture_default_str();
  synth_cmd->add_option("--keep", synth.cfg.keep)->capture_default_str();
  synth_cmd->add_option("--skew", synth.cfg.popularity_skew)->capture_default_str();

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate triples and descriptions, split, build the vocabulary");
  ingest_cmd->add_option("--triples", ingest.triples, "head<TAB>relation<TAB>tail file")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--descriptions", ingest.descriptions, "entity<TAB>text file")->check(CLI::ExistingFile);
  ingest_cmd->add_option("--valid-fraction", ingest.valid_fraction)->capture_default_str();
  ingest_cmd->add_option("--test-fraction", ingest.test_fraction)->capture_default_str();
  ingest_cmd->add_option("--zero-shot", ingest.zero_shot, "Hold out this fraction of entities instead");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train on a dataset; writes loss.tsv and checkpoint/");
  train_cmd->add_option("--data", train.data, "Dataset directory from ingest")->required();
  train_cmd->add_option("--resume", train.resume, "Checkpoint directory to continue from");
  train_cmd->add_option("--checkpoint-every", train.checkpoint_every, "Also save step-N/ every N steps");
  train_cmd->add_flag("--quiet", train.quiet, "Do not echo loss lines");

  EvalArgs eval, zs;
  auto* eval_cmd = app.add_subcommand("eval", "Link-prediction metrics on the test split");
  auto* zs_cmd = app.add_subcommand("zero-shot-eval", "Embed-cosine metrics on a zero-shot split");
  for (auto [cmd, args] : {std::pair{eval_cmd, &eval}, std::pair{zs_cmd, &zs}}) {
    cmd->add_option("--checkpoint", args->checkpoint, "Checkpoint directory")->required();
    cmd->add_option("--data", args->data, "Dataset directory")->required();
    cmd->add_option("--protocol", args->protocol)->check(CLI::IsMember({"filtered", "raw"}))->capture_default_str();
    cmd->add_option("--direction", args->direction)->check(CLI::IsMember({"both", "tail", "head"}))->capture_default_str();
  }
  eval_cmd->add_option("--scorer", eval.scorer)->check(CLI::IsMember({"mask-logit", "embed-cosine"}))->capture_default_str();

  double step = 1e-4;
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference sweep over the toy model");
  grad_cmd->add_option("--step", step, "Central-difference step")->capture_default_str();

  MaskArgs mask;
  auto* mask_cmd = app.add_subcommand("mask-dump", "Print the attention mask of a sequence ('0' attend, '-' blocked)");
  mask_cmd->add_option("--data", mask.data, "Dataset directory");
  mask_cmd->add_option("--text", mask.text, "Plain text sequence");
  mask_cmd->add_option("--entity", mask.entity, "Sub-graph around this entity");
  mask_cmd->add_option("--description", mask.description, "Description frame of this entity");
  mask_cmd->add_flag("--legend", mask.legend, "Prefix '# index<TAB>token' lines");

  EmbedArgs embed;
  auto* embed_cmd = app.add_subcommand("embed-dump", "Entity embeddings as id<TAB>floats");
  embed_cmd->add_option("--checkpoint", embed.checkpoint)->required();
  embed_cmd->add_option("--data", embed.data)->required();
  embed_cmd->add_option("--source", embed.source, "description: pooled description; symbol: input embedding row")
      ->check(CLI::IsMember({"description", "symbol"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 1;
  }

  try {
    if (*synth_cmd) return run_synth(g, synth);
    if (*ingest_cmd) return run_ingest(g, ingest);
    if (*train_cmd) return run_train(g, train);
    if (*eval_cmd) return run_eval(g, eval, false);
    if (*zs_cmd) return run_eval(g, zs, true);
    if (*grad_cmd) return run_grad_check(g, step);
    if (*mask_cmd) return run_mask_dump(g, mask);
    if (*embed_cmd) return run_embed_dump(g, embed);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
