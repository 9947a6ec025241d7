#include "mmt/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include "mmt/evaluation.hpp"
#include "mmt/optim.hpp"

namespace mmt {

namespace {

using nlohmann::json;

constexpr std::uint64_t kEpochSeedStride = 0x9e3779b97f4a7c15ULL;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Initial embedding matrix per init mode. Random mode matches the weight
// range of the rest of the model and keeps the pad row at zero.
MatX initial_table(const EmbeddingTable& pretrained, InitMode mode, int rows, int cols,
                   CounterRng& rng) {
  if (mode == InitMode::Pretrained) return pretrained.weights;
  MatX m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = Real(rng.uniform(-0.1, 0.1));
  m.row(Vocabulary::kPad).setZero();
  return m;
}

std::vector<std::pair<std::string, EVec<Real>>> snapshot_parameters(const Model& model) {
  std::vector<std::pair<std::string, EVec<Real>>> values;
  for (const auto& [name, t] : model.named_parameters()) values.emplace_back(name, t->value);
  return values;
}

Model model_from_snapshot(const ModelConfig& config,
                          const std::vector<std::pair<std::string, EVec<Real>>>& values) {
  CounterRng rng(0);
  Model model(config, MatX::Zero(config.source_vocab, config.embedding_dim),
              MatX::Zero(config.target_vocab, config.embedding_dim), rng);
  auto named = model.named_parameters();
  if (named.size() != values.size()) throw ContractError("train: parameter snapshot drift");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].first != values[i].first || named[i].second->value.size() != values[i].second.size()) {
      throw ContractError("train: parameter snapshot drift at '" + named[i].first + "'");
    }
    named[i].second->value = values[i].second;
  }
  return model;
}

struct RunOutcome {
  TrainResult result;
  double test_bleu = 0;
};

// One configured run on shared data: features prepared per the flags, train,
// then test-set BLEU of the best checkpoint.
RunOutcome run_one(const TrainConfig& tc, const ModelConfig& mc, const ExperimentData& data) {
  VisualFeatureSet features;
  const VisualFeatureSet* fp = nullptr;
  if (tc.multimodal) {
    if (data.features.debiased()) {
      throw ContractError("experiment features must arrive raw so the debias flag can act");
    }
    features = data.features;
    if (tc.visual_debias) debias_visual(features, data.train.image_index);
    fp = &features;
  }
  RunOutcome out{train(tc, mc, data.train, data.val, data.source_vocab, data.target_vocab,
                       data.source_table, data.target_table, fp),
                 0};
  const auto hyps = translate_corpus(out.result.checkpoint.model, data.test, data.source_vocab,
                                     data.target_vocab, tc.batch_size);
  out.test_bleu = corpus_bleu(hyps, data.test.target);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (learning_rate <= 0) throw ConfigError("train config: learning_rate must be positive");
  if (clip_norm <= 0) throw ConfigError("train config: clip_norm must be positive");
  if (lambda < 0 || lambda > 1) throw ConfigError("train config: lambda must be in [0,1]");
  if (gamma < 0) throw ConfigError("train config: gamma must be >= 0");
  if (alpha < 0) throw ConfigError("train config: alpha must be >= 0");
  if (validation_interval < 1) {
    throw ConfigError("train config: validation_interval must be >= 1");
  }
  if (patience < 1) throw ConfigError("train config: patience must be >= 1");
}

std::string train_config_to_json(const TrainConfig& config) {
  json j;
  j["alpha"] = static_cast<double>(config.alpha);
  j["alternate_tasks"] = config.alternate_tasks;
  j["batch_size"] = config.batch_size;
  j["clip_norm"] = static_cast<double>(config.clip_norm);
  j["decoder_fixed"] = config.decoder_fixed;
  j["decoder_init"] = to_string(config.decoder_init);
  j["encoder_init"] = to_string(config.encoder_init);
  j["epochs"] = config.epochs;
  j["gamma"] = static_cast<double>(config.gamma);
  j["lambda"] = static_cast<double>(config.lambda);
  j["learning_rate"] = static_cast<double>(config.learning_rate);
  j["multimodal"] = config.multimodal;
  j["patience"] = config.patience;
  j["seed"] = config.seed;
  j["validation_interval"] = config.validation_interval;
  j["visual_debias"] = config.visual_debias;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config: expected a JSON object");
  static const char* kKeys[] = {
      "alpha",      "alternate_tasks", "batch_size", "clip_norm",
      "decoder_fixed", "decoder_init", "encoder_init", "epochs",
      "gamma",      "lambda",          "learning_rate", "multimodal",
      "patience",   "seed",            "validation_interval", "visual_debias"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : kKeys) ok = ok || key == k;
    if (!ok) throw ConfigError("train config: unknown key '" + key + "'");
  }
  for (const char* k : kKeys) {
    if (!j.contains(k)) throw ConfigError("train config: missing key '" + std::string(k) + "'");
  }
  TrainConfig c;
  try {
    c.alpha = Real(j.at("alpha").get<double>());
    c.alternate_tasks = j.at("alternate_tasks").get<bool>();
    c.batch_size = j.at("batch_size").get<int>();
    c.clip_norm = Real(j.at("clip_norm").get<double>());
    c.decoder_fixed = j.at("decoder_fixed").get<bool>();
    c.decoder_init = init_mode_from_string(j.at("decoder_init").get<std::string>());
    c.encoder_init = init_mode_from_string(j.at("encoder_init").get<std::string>());
    c.epochs = j.at("epochs").get<int>();
    c.gamma = Real(j.at("gamma").get<double>());
    c.lambda = Real(j.at("lambda").get<double>());
    c.learning_rate = Real(j.at("learning_rate").get<double>());
    c.multimodal = j.at("multimodal").get<bool>();
    c.patience = j.at("patience").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validation_interval = j.at("validation_interval").get<int>();
    c.visual_debias = j.at("visual_debias").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string train_log_jsonl(const TrainLog& log) {
  std::ostringstream out;
  json meta;
  meta["type"] = "meta";
  meta["seed"] = log.seed;
  meta["config_hash"] = log.config_hash;
  meta["wall_seconds"] = log.wall_seconds;
  meta["best_epoch"] = log.best_epoch;
  meta["best_val_bleu"] = log.best_val_bleu;
  out << meta.dump() << '\n';

  std::size_t vi = 0;
  for (const auto& e : log.epochs) {
    json rec;
    rec["type"] = "epoch";
    rec["epoch"] = e.epoch;
    rec["loss"] = e.mean_loss;
    rec["text_loss"] = e.mean_text_loss;
    rec["visual_loss"] = e.mean_visual_loss;
    out << rec.dump() << '\n';
    while (vi < log.val_epoch.size() && log.val_epoch[vi] == e.epoch) {
      json val;
      val["type"] = "val";
      val["epoch"] = log.val_epoch[vi];
      val["bleu"] = log.val_bleu[vi];
      out << val.dump() << '\n';
      ++vi;
    }
  }
  return out.str();
}

TrainLog train_log_from_jsonl(const std::string& text) {
  TrainLog log;
  std::istringstream in(text);
  std::string line;
  bool saw_meta = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("train log: ") + e.what());
    }
    std::string type;
    try {
      type = j.at("type").get<std::string>();
      if (type == "meta") {
        log.seed = j.at("seed").get<std::uint64_t>();
        log.config_hash = j.at("config_hash").get<std::string>();
        log.wall_seconds = j.at("wall_seconds").get<double>();
        log.best_epoch = j.at("best_epoch").get<int>();
        log.best_val_bleu = j.at("best_val_bleu").get<double>();
        saw_meta = true;
      } else if (type == "epoch") {
        EpochRecord rec;
        rec.epoch = j.at("epoch").get<int>();
        rec.mean_loss = j.at("loss").get<double>();
        rec.mean_text_loss = j.at("text_loss").get<double>();
        rec.mean_visual_loss = j.at("visual_loss").get<double>();
        log.epochs.push_back(rec);
      } else if (type == "val") {
        log.val_epoch.push_back(j.at("epoch").get<int>());
        log.val_bleu.push_back(j.at("bleu").get<double>());
      } else {
        throw FormatError("train log: unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("train log: ") + e.what());
    }
  }
  if (!saw_meta) throw FormatError("train log: missing meta record");
  return log;
}

bool same_results(const TrainLog& a, const TrainLog& b) {
  if (a.seed != b.seed || a.config_hash != b.config_hash) return false;
  if (a.epochs.size() != b.epochs.size()) return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    if (a.epochs[i].epoch != b.epochs[i].epoch) return false;
    if (a.epochs[i].mean_loss != b.epochs[i].mean_loss) return false;
    if (a.epochs[i].mean_text_loss != b.epochs[i].mean_text_loss) return false;
    if (a.epochs[i].mean_visual_loss != b.epochs[i].mean_visual_loss) return false;
  }
  return a.val_epoch == b.val_epoch && a.val_bleu == b.val_bleu &&
         a.best_epoch == b.best_epoch && a.best_val_bleu == b.best_val_bleu;
}

std::string format_mean_sd(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractError("format_mean_sd: empty score list");
  double mean = 0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double sd = 0;
  if (scores.size() > 1) {
    double sq = 0;
    for (double s : scores) sq += (s - mean) * (s - mean);
    sd = std::sqrt(sq / static_cast<double>(scores.size() - 1));
  }
  std::string sd_str = fixed2(sd);
  if (sd_str.rfind("0.", 0) == 0) sd_str.erase(0, 1);
  return fixed2(mean) + "±" + sd_str;
}

TrainResult train(const TrainConfig& train_config, const ModelConfig& model_config,
                  const ParallelCorpus& train_corpus, const ParallelCorpus& val_corpus,
                  const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                  const EmbeddingTable& source_table, const EmbeddingTable& target_table,
                  const VisualFeatureSet* features) {
  train_config.validate();

  ModelConfig mc = model_config;
  mc.encoder_init = train_config.encoder_init;
  mc.decoder_init = train_config.decoder_init;
  mc.decoder_fixed = train_config.decoder_fixed;
  mc.multimodal = train_config.multimodal;
  mc.source_vocab = source_vocab.size();
  mc.target_vocab = target_vocab.size();

  if (source_table.rows() != mc.source_vocab || source_table.cols() != mc.embedding_dim ||
      target_table.rows() != mc.target_vocab || target_table.cols() != mc.embedding_dim) {
    throw ConfigError("train: embedding tables do not match the vocabularies and embedding_dim");
  }
  const VisualFeatureSet* fs = mc.multimodal ? features : nullptr;
  if (mc.multimodal) {
    if (fs == nullptr || fs->count() == 0) {
      throw ConfigError("train: multimodal training needs image features");
    }
    if (fs->debiased() != train_config.visual_debias) {
      throw ConfigError(train_config.visual_debias
                            ? "train: visual_debias set but the features are raw"
                            : "train: visual_debias unset but the features are debiased");
    }
    if (fs->dim() != mc.latent_dim) {
      throw ConfigError("train: latent_dim " + std::to_string(mc.latent_dim) +
                        " does not match feature dim " + std::to_string(fs->dim()));
    }
  }
  mc.validate();

  CounterRng rng(train_config.seed);
  const MatX src0 =
      initial_table(source_table, mc.encoder_init, mc.source_vocab, mc.embedding_dim, rng);
  const MatX tgt0 =
      initial_table(target_table, mc.decoder_init, mc.target_vocab, mc.embedding_dim, rng);
  Model model(mc, src0, tgt0, rng);

  LossConfig lc;
  lc.gamma = train_config.gamma;
  lc.alpha = train_config.alpha;
  lc.lambda = train_config.lambda;
  lc.validate();

  auto params = model.trainable_parameters();
  AdamStateT<Real> opt;
  opt.lr = train_config.learning_rate;
  opt.init(params);

  TrainLog log;
  log.seed = train_config.seed;
  log.config_hash =
      fnv1a_hex(model_config_to_json(mc) + "\n" + train_config_to_json(train_config));

  const auto start = std::chrono::steady_clock::now();
  double best_bleu = -1;
  int best_epoch = 0;
  int stale = 0;
  std::vector<std::pair<std::string, EVec<Real>>> best_values;
  bool stopped = false;

  for (int epoch = 1; epoch <= train_config.epochs && !stopped; ++epoch) {
    auto batches =
        make_batches(train_corpus, source_vocab, target_vocab, train_config.batch_size,
                     train_config.seed + kEpochSeedStride * static_cast<std::uint64_t>(epoch), fs);
    if (batches.empty()) throw ContractError("train: the training corpus yielded no batches");

    double sum_j = 0, sum_jt = 0, sum_jv = 0;
    long batch_index = 0;
    for (const auto& batch : batches) {
      Tape tape;
      for (const auto& p : params) p->zero_grad();
      auto fwd = model.forward(tape, batch, true, &rng);

      Tensor j_t;
      if (mc.output_head == OutputHead::Softmax) {
        j_t = cross_entropy_loss(tape, fwd.probabilities, fwd.gold, fwd.loss_mask).loss;
      } else {
        j_t = margin_ranking_loss(tape, fwd.predictions, fwd.gold, fwd.loss_mask,
                                  model.target_table(), lc)
                  .loss;
      }
      Tensor j_v;
      if (fwd.v_hat) j_v = visual_max_margin(tape, fwd.v_hat, batch.images, lc).loss;

      Tensor j;
      if (train_config.alternate_tasks) {
        j = (batch_index % 2 == 1 && j_v) ? j_v : j_t;
      } else {
        j = multitask_loss(tape, j_t, j_v, lc.lambda);
      }

      tape.backward(j);
      clip_grad_norm(params, train_config.clip_norm);
      adam_step(params, opt);

      sum_j += static_cast<double>(j->scalar());
      sum_jt += static_cast<double>(j_t->scalar());
      if (j_v) sum_jv += static_cast<double>(j_v->scalar());
      ++batch_index;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = sum_j / static_cast<double>(batches.size());
    rec.mean_text_loss = sum_jt / static_cast<double>(batches.size());
    rec.mean_visual_loss = sum_jv / static_cast<double>(batches.size());
    log.epochs.push_back(rec);

    if (val_corpus.size() > 0 && epoch % train_config.validation_interval == 0) {
      const auto hyps = translate_corpus(model, val_corpus, source_vocab, target_vocab,
                                         train_config.batch_size);
      const double bleu = corpus_bleu(hyps, val_corpus.target);
      log.val_epoch.push_back(epoch);
      log.val_bleu.push_back(bleu);
      if (bleu > best_bleu) {
        best_bleu = bleu;
        best_epoch = epoch;
        stale = 0;
        best_values = snapshot_parameters(model);
      } else if (++stale >= train_config.patience) {
        stopped = true;
      }
    }
  }

  if (best_values.empty()) {
    best_values = snapshot_parameters(model);
    best_epoch = log.epochs.empty() ? 0 : log.epochs.back().epoch;
    best_bleu = 0;
  }
  log.best_epoch = best_epoch;
  log.best_val_bleu = std::max(best_bleu, 0.0);
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Checkpoint checkpoint{mc, source_vocab, target_vocab, model_from_snapshot(mc, best_values)};
  return TrainResult{std::move(checkpoint), std::move(log)};
}

std::vector<std::vector<std::string>> translate_corpus(const Model& model,
                                                       const ParallelCorpus& corpus,
                                                       const Vocabulary& source_vocab,
                                                       const Vocabulary& target_vocab,
                                                       int batch_size,
                                                       const TranslateOptions& opts) {
  std::vector<std::vector<std::string>> out(corpus.size());
  const auto batches = make_batches(corpus, source_vocab, target_vocab, batch_size, 0, nullptr);
  for (const auto& batch : batches) {
    const auto rows = model.translate(batch, opts);
    for (int b = 0; b < batch.rows(); ++b) {
      auto& sentence = out[batch.order[b]];
      sentence.clear();
      for (int id : rows[b]) sentence.push_back(target_vocab.token(id));
    }
  }
  return out;
}

ExperimentData prepare_synthetic_experiment(const SyntheticTask& task, int max_vocab,
                                            std::uint64_t seed) {
  ExperimentData data;
  data.train = task.train;
  data.val = task.val;
  data.test = task.test;
  data.source_vocab = build_vocab(task.train.source, max_vocab);
  data.target_vocab = build_vocab(task.train.target, max_vocab);
  CounterRng rng(seed);
  const VecX src_unk = build_unknown_embedding(task.src_vectors, data.source_vocab);
  data.source_table =
      assemble_table(task.src_vectors, data.source_vocab, src_unk, InitMode::Pretrained, rng);
  const VecX tgt_unk = build_unknown_embedding(task.tgt_vectors, data.target_vocab);
  data.target_table =
      assemble_table(task.tgt_vectors, data.target_vocab, tgt_unk, InitMode::Pretrained, rng);
  data.features = task.features;
  return data;
}

std::vector<AblationRow> embedding_init_rows() {
  auto row = [](const char* name, InitMode enc, InitMode dec, bool fixed) {
    AblationRow r;
    r.name = name;
    r.encoder_init = enc;
    r.decoder_init = dec;
    r.decoder_fixed = fixed;
    return r;
  };
  return {row("ft-ft-fixed", InitMode::Pretrained, InitMode::Pretrained, true),
          row("rand-ft-fixed", InitMode::Random, InitMode::Pretrained, true),
          row("ft-rand-tuned", InitMode::Pretrained, InitMode::Random, false),
          row("rand-rand-tuned", InitMode::Random, InitMode::Random, false),
          row("ft-ft-tuned", InitMode::Pretrained, InitMode::Pretrained, false),
          row("rand-ft-tuned", InitMode::Random, InitMode::Pretrained, false)};
}

std::vector<AblationRow> visual_ablation_rows() {
  AblationRow full;
  full.name = "full";
  AblationRow no_debias = full;
  no_debias.name = "no-debias";
  no_debias.visual_debias = false;
  AblationRow text_only = full;
  text_only.name = "text-only";
  text_only.multimodal = false;
  text_only.visual_debias = false;
  return {full, no_debias, text_only};
}

std::vector<AblationResult> run_ablation_matrix(const TrainConfig& base,
                                                const ModelConfig& model_config,
                                                const ExperimentData& data,
                                                const std::vector<AblationRow>& rows) {
  std::vector<AblationResult> results;
  results.reserve(rows.size());
  for (const auto& row : rows) {
    TrainConfig tc = base;
    tc.encoder_init = row.encoder_init;
    tc.decoder_init = row.decoder_init;
    tc.decoder_fixed = row.decoder_fixed;
    tc.multimodal = row.multimodal;
    tc.visual_debias = row.visual_debias;
    const RunOutcome outcome = run_one(tc, model_config, data);

    AblationResult r;
    r.name = row.name;
    r.encoder_init = row.encoder_init;
    r.decoder_init = row.decoder_init;
    r.decoder_fixed = row.decoder_fixed;
    r.multimodal = row.multimodal;
    r.visual_debias = row.visual_debias;
    r.val_bleu = outcome.result.log.best_val_bleu;
    r.test_bleu = outcome.test_bleu;
    results.push_back(std::move(r));
  }
  return results;
}

std::string ablation_csv(const std::vector<AblationResult>& results) {
  std::ostringstream out;
  out << "name,encoder_init,decoder_init,decoder_fixed,multimodal,visual_debias,val_bleu,test_bleu\n";
  for (const auto& r : results) {
    out << r.name << ',' << to_string(r.encoder_init) << ',' << to_string(r.decoder_init) << ','
        << (r.decoder_fixed ? "yes" : "no") << ',' << (r.multimodal ? "yes" : "no") << ','
        << (r.visual_debias ? "yes" : "no") << ',' << fixed2(r.val_bleu) << ','
        << fixed2(r.test_bleu) << '\n';
  }
  return out.str();
}

SeedSweepResult run_seeds(const TrainConfig& base, const ModelConfig& model_config,
                          const ExperimentData& data, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ContractError("run_seeds: empty seed list");
  SeedSweepResult sweep;
  sweep.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    TrainConfig tc = base;
    tc.seed = seed;
    RunOutcome outcome = run_one(tc, model_config, data);
    sweep.val_bleu.push_back(outcome.result.log.best_val_bleu);
    sweep.test_bleu.push_back(outcome.test_bleu);
    sweep.logs.push_back(std::move(outcome.result.log));
  }
  sweep.summary = format_mean_sd(sweep.test_bleu);
  return sweep;
}

}  // namespace mmt
