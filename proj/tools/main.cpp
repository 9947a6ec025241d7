// mmt: batch surface over the library. Subcommands cover embedding
// preparation, training, translation, evaluation, the ablation matrices, and
// synthetic-task generation. Exit code 1 flags invalid input or configuration,
// 2 flags an I/O failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmt/evaluation.hpp"
#include "mmt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mmt::Error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw mmt::Error("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mmt::Error("cannot write file: " + path);
  out << content;
  if (!out) throw mmt::Error("write failed: " + path);
}

std::vector<std::vector<std::string>> tokenized_lines(const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : read_lines(path)) out.push_back(mmt::preprocess_text(line));
  return out;
}

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string line;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) line += ' ';
    line += toks[i];
  }
  return line;
}

// One experiment file: model and train blocks (missing keys take defaults,
// unknown keys rejected) plus data paths and the output directory.
struct ExperimentConfig {
  mmt::ModelConfig model;
  mmt::TrainConfig train;
  std::string train_source, train_target, train_image_index;
  std::string val_source, val_target, val_image_index;
  std::string test_source, test_target, test_image_index;
  std::string features;
  std::string source_vectors, target_vectors;
  int vocab_size = 10000;
  // All-but-the-top strength for both embedding tables: -1 skips the pass,
  // 0 centers only, k > 0 also strips the top-k principal directions.
  int debias_top_k = 5;
  std::string output_dir = ".";
};

// Fills a block's missing keys from the canonical defaults, then hands the
// merged object to the strict parser so unknown keys and bad values are
// rejected in one place.
json merge_onto(const std::string& canonical_defaults, const json& user) {
  json merged = json::parse(canonical_defaults);
  if (!user.is_object()) throw mmt::ConfigError("experiment config: block must be an object");
  for (const auto& [key, value] : user.items()) merged[key] = value;
  return merged;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw mmt::ConfigError(std::string("experiment config: ") + e.what());
  }
  if (!j.is_object()) throw mmt::ConfigError("experiment config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "model" && key != "train" && key != "data" && key != "output_dir")
      throw mmt::ConfigError("experiment config: unknown key '" + key + "'");
  }

  ExperimentConfig cfg;
  try {
    {
      // The vocabulary sizes in the model block are placeholders; training
      // overwrites them with the sizes of the vocabularies built from the
      // training split. The placeholder only has to pass validation.
      json merged = json::parse(mmt::model_config_to_json(mmt::ModelConfig{}));
      merged["source_vocab"] = mmt::Vocabulary::kNumReserved;
      merged["target_vocab"] = mmt::Vocabulary::kNumReserved;
      if (j.contains("model")) merged = merge_onto(merged.dump(), j.at("model"));
      cfg.model = mmt::model_config_from_json(merged.dump());
    }
    if (j.contains("train")) {
      cfg.train = mmt::train_config_from_json(
          merge_onto(mmt::train_config_to_json(mmt::TrainConfig{}), j.at("train")).dump());
    }
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("data")) {
      const json& d = j.at("data");
      if (!d.is_object()) throw mmt::ConfigError("experiment config: data must be an object");
      auto str = [&](const char* key, std::string& slot) {
        if (d.contains(key)) slot = d.at(key).get<std::string>();
      };
      static const char* kKeys[] = {"train_source",     "train_target", "train_image_index",
                                    "val_source",       "val_target",   "val_image_index",
                                    "test_source",      "test_target",  "test_image_index",
                                    "features",         "source_vectors", "target_vectors",
                                    "vocab_size",       "debias_top_k"};
      for (const auto& [key, value] : d.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : kKeys) ok = ok || key == k;
        if (!ok) throw mmt::ConfigError("experiment config: unknown data key '" + key + "'");
      }
      str("train_source", cfg.train_source);
      str("train_target", cfg.train_target);
      str("train_image_index", cfg.train_image_index);
      str("val_source", cfg.val_source);
      str("val_target", cfg.val_target);
      str("val_image_index", cfg.val_image_index);
      str("test_source", cfg.test_source);
      str("test_target", cfg.test_target);
      str("test_image_index", cfg.test_image_index);
      str("features", cfg.features);
      str("source_vectors", cfg.source_vectors);
      str("target_vectors", cfg.target_vectors);
      if (d.contains("vocab_size")) cfg.vocab_size = d.at("vocab_size").get<int>();
      if (d.contains("debias_top_k")) cfg.debias_top_k = d.at("debias_top_k").get<int>();
    }
  } catch (const json::exception& e) {
    throw mmt::ConfigError(std::string("experiment config: ") + e.what());
  }
  if (cfg.vocab_size < mmt::Vocabulary::kNumReserved)
    throw mmt::ConfigError("experiment config: vocab_size below the reserved token count");
  if (cfg.debias_top_k < -1)
    throw mmt::ConfigError("experiment config: debias_top_k must be >= -1");
  return cfg;
}

// Canonical form of a config, with the model block taken from `model` so the
// resolved file records the architecture that actually ran.
std::string experiment_config_json(const ExperimentConfig& cfg, const mmt::ModelConfig& model) {
  json j;
  j["model"] = json::parse(mmt::model_config_to_json(model));
  j["train"] = json::parse(mmt::train_config_to_json(cfg.train));
  json d;
  d["train_source"] = cfg.train_source;
  d["train_target"] = cfg.train_target;
  d["train_image_index"] = cfg.train_image_index;
  d["val_source"] = cfg.val_source;
  d["val_target"] = cfg.val_target;
  d["val_image_index"] = cfg.val_image_index;
  d["test_source"] = cfg.test_source;
  d["test_target"] = cfg.test_target;
  d["test_image_index"] = cfg.test_image_index;
  d["features"] = cfg.features;
  d["source_vectors"] = cfg.source_vectors;
  d["target_vectors"] = cfg.target_vectors;
  d["vocab_size"] = cfg.vocab_size;
  d["debias_top_k"] = cfg.debias_top_k;
  j["data"] = d;
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

mmt::ParallelCorpus load_split(const ExperimentConfig& cfg, mmt::Split split) {
  const std::string *src = nullptr, *tgt = nullptr, *img = nullptr;
  switch (split) {
    case mmt::Split::Train:
      src = &cfg.train_source;
      tgt = &cfg.train_target;
      img = &cfg.train_image_index;
      break;
    case mmt::Split::Val:
      src = &cfg.val_source;
      tgt = &cfg.val_target;
      img = &cfg.val_image_index;
      break;
    case mmt::Split::Test:
      src = &cfg.test_source;
      tgt = &cfg.test_target;
      img = &cfg.test_image_index;
      break;
  }
  if (src->empty() != tgt->empty())
    throw mmt::ConfigError("experiment config: " + mmt::to_string(split) +
                           " split needs both source and target paths");
  if (src->empty()) {
    if (!img->empty())
      throw mmt::ConfigError("experiment config: " + mmt::to_string(split) +
                             " image index without corpus paths");
    return {};
  }
  return mmt::load_parallel_corpus(*src, *tgt, split, *img);
}

// Everything train and ablate share: corpora, training-split vocabularies,
// assembled (optionally debiased) embedding tables, and raw visual features.
mmt::ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  if (cfg.train_source.empty())
    throw mmt::ConfigError("experiment config: train split paths are required");
  mmt::ExperimentData data;
  data.train = load_split(cfg, mmt::Split::Train);
  data.val = load_split(cfg, mmt::Split::Val);
  data.test = load_split(cfg, mmt::Split::Test);

  data.source_vocab = mmt::build_vocab(data.train.source, cfg.vocab_size);
  data.target_vocab = mmt::build_vocab(data.train.target, cfg.vocab_size);

  if (cfg.source_vectors.empty() || cfg.target_vectors.empty())
    throw mmt::ConfigError("experiment config: source_vectors and target_vectors are required");
  mmt::CounterRng rng(cfg.train.seed);
  auto build_side = [&](const std::string& path, const mmt::Vocabulary& vocab) {
    const mmt::RawEmbeddings raw = mmt::load_word_vectors(path);
    const mmt::VecX unk = mmt::build_unknown_embedding(raw, vocab);
    mmt::EmbeddingTable table =
        mmt::assemble_table(raw, vocab, unk, mmt::InitMode::Pretrained, rng);
    if (cfg.debias_top_k >= 0) mmt::debias_all_but_top(table, cfg.debias_top_k);
    return table;
  };
  data.source_table = build_side(cfg.source_vectors, data.source_vocab);
  data.target_table = build_side(cfg.target_vectors, data.target_vocab);

  if (!cfg.features.empty()) data.features = mmt::load_visual_features(cfg.features);
  return data;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

int cmd_prep_embeddings(const std::string& vectors, const std::string& corpus, int vocab_size,
                        int top_k, std::uint64_t seed, const std::string& out) {
  const mmt::RawEmbeddings raw = mmt::load_word_vectors(vectors);
  const auto sentences = tokenized_lines(corpus);
  const mmt::Vocabulary vocab = mmt::build_vocab(sentences, vocab_size);
  const mmt::VecX unk = mmt::build_unknown_embedding(raw, vocab);
  mmt::CounterRng rng(seed);
  mmt::EmbeddingTable table =
      mmt::assemble_table(raw, vocab, unk, mmt::InitMode::Pretrained, rng);

  int covered = 0;
  for (int id = mmt::Vocabulary::kNumReserved; id < vocab.size(); ++id)
    if (raw.vectors.count(vocab.token(id))) ++covered;

  const mmt::DebiasReport report = mmt::debias_all_but_top(table, top_k);
  mmt::save_word_vectors(out, table, vocab);

  std::cout << "vocabulary: " << vocab.size() << " tokens (" << covered
            << " covered by pretrained vectors)\n";
  std::cout << "dimension: " << table.cols() << "\n";
  std::cout << "subtracted mean norm: " << report.mean.norm() << "\n";
  std::cout << "stripped directions: " << report.directions.rows() << "\n";
  for (int i = 0; i < report.directions.rows(); ++i)
    std::cout << "  direction " << i + 1 << " variance: " << report.explained_variance[i]
              << "\n";
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, std::uint64_t seed, bool seed_set) {
  ExperimentConfig cfg = parse_experiment_config(read_file(config_path));
  if (seed_set) cfg.train.seed = seed;
  const mmt::ExperimentData data = load_experiment_data(cfg);

  mmt::VisualFeatureSet features;
  const mmt::VisualFeatureSet* fp = nullptr;
  if (cfg.train.multimodal) {
    if (data.features.count() == 0)
      throw mmt::ConfigError("experiment config: multimodal training needs a features path");
    features = data.features;
    if (cfg.train.visual_debias) mmt::debias_visual(features, data.train.image_index);
    fp = &features;
  }

  const mmt::TrainResult result =
      mmt::train(cfg.train, cfg.model, data.train, data.val, data.source_vocab,
                 data.target_vocab, data.source_table, data.target_table, fp);

  fs::create_directories(cfg.output_dir);
  const std::string resolved = (fs::path(cfg.output_dir) / "resolved.config.json").string();
  write_file(resolved, experiment_config_json(cfg, result.checkpoint.config));
  const std::string log_path = (fs::path(cfg.output_dir) / "train.log.jsonl").string();
  write_file(log_path, mmt::train_log_jsonl(result.log));
  const std::string ckpt = (fs::path(cfg.output_dir) / "checkpoint.mmck").string();
  mmt::save_checkpoint(ckpt, result.checkpoint.model, data.source_vocab, data.target_vocab);

  std::cout << "epochs run: " << result.log.epochs.size() << "\n";
  if (!result.log.val_bleu.empty()) {
    std::cout << "best validation BLEU: " << fixed2(result.log.best_val_bleu) << " (epoch "
              << result.log.best_epoch << ")\n";
  }
  std::cout << "wall seconds: " << fixed2(result.log.wall_seconds) << "\n";
  std::cout << "wrote " << resolved << "\n";
  std::cout << "wrote " << log_path << "\n";
  std::cout << "wrote " << ckpt << "\n";
  return 0;
}

int cmd_translate(const std::string& checkpoint_path, const std::string& input,
                  const std::string& out, int max_len) {
  const mmt::Checkpoint ck = mmt::load_checkpoint(checkpoint_path);
  mmt::ParallelCorpus corpus;
  for (const auto& line : read_lines(input)) {
    corpus.source.push_back(mmt::preprocess_text(line));
    // The batcher drops pairs with an empty side; mirroring the source keeps
    // every nonempty line alive without touching what the model reads.
    corpus.target.push_back(corpus.source.back());
  }
  mmt::TranslateOptions opts;
  opts.max_len = max_len;
  const auto hyps = mmt::translate_corpus(ck.model, corpus, ck.source_vocab, ck.target_vocab,
                                          32, opts);
  std::string text;
  for (const auto& sentence : hyps) text += join_tokens(sentence) + "\n";
  write_file(out, text);
  std::cout << "translated " << hyps.size() << " lines to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& hyp_path, const std::string& ref_path,
                 const std::string& train_corpus, const std::string& out_dir) {
  const auto hyp = tokenized_lines(hyp_path);
  const auto ref = tokenized_lines(ref_path);
  const auto train_side = tokenized_lines(train_corpus);
  const mmt::Vocabulary vocab = mmt::build_vocab(train_side, 1000000);

  const mmt::EvaluationReport report = mmt::evaluate_corpus(hyp, ref, vocab);
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "word_scores.csv").string(),
             mmt::word_scores_csv(report.words));
  write_file((fs::path(out_dir) / "frequency_buckets.csv").string(),
             mmt::frequency_buckets_csv(report.buckets));
  const std::string summary = mmt::evaluation_summary(report);
  write_file((fs::path(out_dir) / "summary.txt").string(), summary);
  std::cout << summary;
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& matrix, std::uint64_t seed,
               bool seed_set) {
  ExperimentConfig cfg = parse_experiment_config(read_file(config_path));
  if (seed_set) cfg.train.seed = seed;
  const mmt::ExperimentData data = load_experiment_data(cfg);
  if (data.features.count() == 0)
    throw mmt::ConfigError("experiment config: the ablation matrices need a features path");
  if (data.test.size() == 0)
    throw mmt::ConfigError("experiment config: the ablation matrices need a test split");

  const auto rows =
      matrix == "embedding-init" ? mmt::embedding_init_rows() : mmt::visual_ablation_rows();
  const auto results = mmt::run_ablation_matrix(cfg.train, cfg.model, data, rows);
  const std::string csv = mmt::ablation_csv(results);

  fs::create_directories(cfg.output_dir);
  const std::string name = matrix == "embedding-init" ? "ablation_embedding_init.csv"
                                                      : "ablation_visual.csv";
  const std::string csv_path = (fs::path(cfg.output_dir) / name).string();
  write_file(csv_path, csv);
  write_file((fs::path(cfg.output_dir) / "resolved.config.json").string(),
             experiment_config_json(cfg, cfg.model));
  std::cout << csv;
  std::cout << "wrote " << csv_path << "\n";
  return 0;
}

mmt::SynthSpec parse_synth_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw mmt::ConfigError(std::string("synth spec: ") + e.what());
  }
  if (!j.is_object()) throw mmt::ConfigError("synth spec: expected a JSON object");
  static const char* kKeys[] = {"vocab_size", "train_pairs",   "val_pairs",  "test_pairs",
                                "min_len",    "max_len",       "zipf_exponent", "feature_dim",
                                "emb_dim",    "feature_noise", "seed"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : kKeys) ok = ok || key == k;
    if (!ok) throw mmt::ConfigError("synth spec: unknown key '" + key + "'");
  }
  mmt::SynthSpec spec;
  try {
    if (j.contains("vocab_size")) spec.vocab_size = j.at("vocab_size").get<int>();
    if (j.contains("train_pairs")) spec.train_pairs = j.at("train_pairs").get<int>();
    if (j.contains("val_pairs")) spec.val_pairs = j.at("val_pairs").get<int>();
    if (j.contains("test_pairs")) spec.test_pairs = j.at("test_pairs").get<int>();
    if (j.contains("min_len")) spec.min_len = j.at("min_len").get<int>();
    if (j.contains("max_len")) spec.max_len = j.at("max_len").get<int>();
    if (j.contains("zipf_exponent"))
      spec.zipf_exponent = mmt::Real(j.at("zipf_exponent").get<double>());
    if (j.contains("feature_dim")) spec.feature_dim = j.at("feature_dim").get<int>();
    if (j.contains("emb_dim")) spec.emb_dim = j.at("emb_dim").get<int>();
    if (j.contains("feature_noise"))
      spec.feature_noise = mmt::Real(j.at("feature_noise").get<double>());
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw mmt::ConfigError(std::string("synth spec: ") + e.what());
  }
  return spec;
}

void write_corpus_files(const fs::path& dir, const std::string& stem,
                        const mmt::ParallelCorpus& corpus) {
  std::string src, tgt, img;
  for (const auto& sent : corpus.source) src += join_tokens(sent) + "\n";
  for (const auto& sent : corpus.target) tgt += join_tokens(sent) + "\n";
  for (int idx : corpus.image_index) img += std::to_string(idx) + "\n";
  write_file((dir / (stem + ".src.txt")).string(), src);
  write_file((dir / (stem + ".tgt.txt")).string(), tgt);
  write_file((dir / (stem + ".img.txt")).string(), img);
}

// Word-vector text format with the tokens in sorted order, so the output is
// deterministic regardless of map iteration.
void write_raw_vectors(const std::string& path, const mmt::RawEmbeddings& raw) {
  std::vector<std::string> tokens;
  tokens.reserve(raw.vectors.size());
  for (const auto& [tok, vec] : raw.vectors) {
    (void)vec;
    tokens.push_back(tok);
  }
  std::sort(tokens.begin(), tokens.end());
  std::ostringstream out;
  out << tokens.size() << ' ' << raw.dim << "\n";
  char buf[64];
  for (const auto& tok : tokens) {
    out << tok;
    const mmt::VecX& v = raw.vectors.at(tok);
    for (int i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v[i]));
      out << ' ' << buf;
    }
    out << "\n";
  }
  write_file(path, out.str());
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  const mmt::SynthSpec spec = parse_synth_spec(read_file(spec_path));
  const mmt::SyntheticTask task = mmt::generate_synthetic_task(spec);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_corpus_files(dir, "train", task.train);
  write_corpus_files(dir, "val", task.val);
  write_corpus_files(dir, "test", task.test);
  mmt::save_visual_features((dir / "features.csv").string(), task.features);
  write_raw_vectors((dir / "vectors.src.txt").string(), task.src_vectors);
  write_raw_vectors((dir / "vectors.tgt.txt").string(), task.tgt_vectors);

  // A ready-to-run experiment file wired to the generated paths. The task's
  // vectors already carry the geometry the decoder needs, so the embedding
  // debias pass is disabled.
  ExperimentConfig cfg;
  cfg.model.encoder_hidden = 64;
  cfg.model.decoder_hidden = 64;
  cfg.model.embedding_dim = spec.emb_dim;
  cfg.model.latent_dim = spec.feature_dim;
  cfg.model.source_vocab = mmt::Vocabulary::kNumReserved;  // placeholder; training resolves it
  cfg.model.target_vocab = mmt::Vocabulary::kNumReserved;
  cfg.train.seed = spec.seed;
  cfg.train_source = (dir / "train.src.txt").string();
  cfg.train_target = (dir / "train.tgt.txt").string();
  cfg.train_image_index = (dir / "train.img.txt").string();
  cfg.val_source = (dir / "val.src.txt").string();
  cfg.val_target = (dir / "val.tgt.txt").string();
  cfg.val_image_index = (dir / "val.img.txt").string();
  cfg.test_source = (dir / "test.src.txt").string();
  cfg.test_target = (dir / "test.tgt.txt").string();
  cfg.test_image_index = (dir / "test.img.txt").string();
  cfg.features = (dir / "features.csv").string();
  cfg.source_vectors = (dir / "vectors.src.txt").string();
  cfg.target_vectors = (dir / "vectors.tgt.txt").string();
  cfg.vocab_size = spec.vocab_size + 2 * mmt::Vocabulary::kNumReserved;
  cfg.debias_top_k = -1;
  cfg.output_dir = (dir / "run").string();
  write_file((dir / "config.json").string(), experiment_config_json(cfg, cfg.model));

  std::cout << "task: " << task.train.size() << " train / " << task.val.size() << " val / "
            << task.test.size() << " test pairs\n";
  std::cout << "features: " << task.features.count() << " x " << task.features.dim() << "\n";
  std::cout << "wrote " << (dir / "config.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multimodal translation toolkit"};
  app.require_subcommand(1);

  auto* prep = app.add_subcommand("prep-embeddings",
                                  "align pretrained vectors to a corpus vocabulary, synthesize "
                                  "the unknown row, debias, and save");
  std::string prep_vectors, prep_corpus, prep_out;
  int prep_vocab_size = 10000;
  int prep_top_k = 5;
  std::uint64_t prep_seed = 1;
  prep->add_option("--vectors", prep_vectors, "pretrained word-vector text file")->required();
  prep->add_option("--corpus", prep_corpus, "corpus text file defining the vocabulary")
      ->required();
  prep->add_option("--vocab-size", prep_vocab_size, "vocabulary cap including reserved tokens");
  prep->add_option("--top-k", prep_top_k, "principal directions to strip; 0 centers only");
  prep->add_option("--seed", prep_seed, "seed for the randomly placed reserved rows");
  prep->add_option("--out", prep_out, "output word-vector file")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model from an experiment config");
  std::string train_config;
  std::uint64_t train_seed = 1;
  train_cmd->add_option("--config", train_config, "experiment config JSON")->required();
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "override the config seed");

  auto* translate_cmd =
      app.add_subcommand("translate", "translate a text file with a saved checkpoint");
  std::string tr_checkpoint, tr_input, tr_out;
  int tr_max_len = 100;
  translate_cmd->add_option("--checkpoint", tr_checkpoint, "checkpoint file")->required();
  translate_cmd->add_option("--input", tr_input, "source text, one sentence per line")
      ->required();
  translate_cmd->add_option("--out", tr_out, "output file for the translations")->required();
  translate_cmd->add_option("--max-len", tr_max_len, "decoding length cap; 0 emits empty lines");

  auto* eval_cmd = app.add_subcommand("evaluate", "score hypotheses against references");
  std::string ev_hyp, ev_ref, ev_train, ev_out;
  eval_cmd->add_option("--hyp", ev_hyp, "hypothesis file")->required();
  eval_cmd->add_option("--ref", ev_ref, "reference file")->required();
  eval_cmd
      ->add_option("--train-corpus", ev_train,
                   "training-split target text used for word frequencies")
      ->required();
  eval_cmd->add_option("--out", ev_out, "directory for the report files")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "run one ablation matrix end to end");
  std::string ab_config, ab_matrix;
  std::uint64_t ab_seed = 1;
  ablate_cmd->add_option("--config", ab_config, "experiment config JSON")->required();
  ablate_cmd
      ->add_option("--matrix", ab_matrix,
                   "which matrix: embedding-init (6 rows) or visual (3 rows)")
      ->required()
      ->check(CLI::IsMember({"embedding-init", "visual"}));
  auto* ab_seed_opt = ablate_cmd->add_option("--seed", ab_seed, "override the config seed");

  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic task and a ready-to-run config");
  std::string sy_spec, sy_out;
  synth_cmd->add_option("--spec", sy_spec, "task spec JSON")->required();
  synth_cmd->add_option("--out", sy_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed())
      return cmd_prep_embeddings(prep_vectors, prep_corpus, prep_vocab_size, prep_top_k,
                                 prep_seed, prep_out);
    if (train_cmd->parsed())
      return cmd_train(train_config, train_seed, train_seed_opt->count() > 0);
    if (translate_cmd->parsed())
      return cmd_translate(tr_checkpoint, tr_input, tr_out, tr_max_len);
    if (eval_cmd->parsed()) return cmd_evaluate(ev_hyp, ev_ref, ev_train, ev_out);
    if (ablate_cmd->parsed())
      return cmd_ablate(ab_config, ab_matrix, ab_seed, ab_seed_opt->count() > 0);
    if (synth_cmd->parsed()) return cmd_synth(sy_spec, sy_out);
  } catch (const mmt::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mmt::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mmt::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mmt::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mmt::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const mmt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
