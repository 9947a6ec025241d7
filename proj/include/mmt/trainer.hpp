#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmt/checkpoint.hpp"
#include "mmt/data.hpp"
#include "mmt/losses.hpp"
#include "mmt/model.hpp"

namespace mmt {

// One experiment's knobs. The embedding switches (encoder_init, decoder_init,
// decoder_fixed, multimodal) override the matching ModelConfig fields inside
// train(), so a run is fully described by this struct plus the architecture
// dimensions.
struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 1;
  Real learning_rate = Real(0.0004);
  Real clip_norm = Real(1);
  Real lambda = Real(0.01);  // translation share of the joint objective
  Real gamma = Real(0.5);    // ranking margin
  Real alpha = Real(0.1);    // visual margin
  InitMode encoder_init = InitMode::Pretrained;
  InitMode decoder_init = InitMode::Pretrained;
  bool decoder_fixed = true;
  bool multimodal = true;
  // Expects the feature set's centroid state to match: debiased features when
  // set, raw features when not.
  bool visual_debias = true;
  // Variant objective: batches alternate between the translation loss and the
  // visual loss (falling back to translation when a batch has no images)
  // instead of blending both on every batch.
  bool alternate_tasks = false;
  int validation_interval = 1;  // epochs between validation passes
  int patience = 10;            // stale validations tolerated before stopping

  void validate() const;
};

// Canonical key-sorted JSON; parsing is strict (unknown or missing keys
// rejected) and the two functions are exact inverses.
std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

struct EpochRecord {
  int epoch = 0;            // 1-based, consecutive
  double mean_loss = 0;     // joint objective, averaged over the epoch's batches
  double mean_text_loss = 0;
  double mean_visual_loss = 0;  // batches without images contribute 0
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::vector<int> val_epoch;  // epoch at which each validation pass ran
  std::vector<double> val_bleu;
  double wall_seconds = 0;
  std::uint64_t seed = 0;
  std::string config_hash;  // fingerprint of the resolved model + train configs
  int best_epoch = 0;
  double best_val_bleu = 0;
};

// One JSON object per line: a meta record, then epoch records interleaved
// with validation records in run order. The parser is the exact inverse.
std::string train_log_jsonl(const TrainLog& log);
TrainLog train_log_from_jsonl(const std::string& text);

// True when two runs produced the same training trajectory: seed, config
// fingerprint, every epoch's losses, and the full validation history match
// exactly. Wall-clock time is ignored.
bool same_results(const TrainLog& a, const TrainLog& b);

// Mean and sample standard deviation of a score list in the compact report
// layout, e.g. {51.0, 51.37, 50.63} -> "51.00±.37". A single score reports
// "±.00".
std::string format_mean_sd(const std::vector<double>& scores);

struct TrainResult {
  Checkpoint checkpoint;  // best-validation parameters (final when never validated)
  TrainLog log;
};

// Full training run. Ablation switches come from train_config (overriding the
// model config); vocab sizes come from the vocabularies; the embedding tables
// provide pretrained initial values and must match the vocabularies and
// embedding_dim. features is required (with centroid state matching
// visual_debias) when multimodal, ignored otherwise. Per batch: teacher-forced
// forward, joint loss, backward, clip to clip_norm, Adam step. Validation
// translates the val corpus greedily and scores corpus BLEU; the best
// checkpoint is kept and patience stale validations stop the run. An empty
// val corpus disables validation and the final parameters become the
// checkpoint. Deterministic for a given config: same call, same results.
TrainResult train(const TrainConfig& train_config, const ModelConfig& model_config,
                  const ParallelCorpus& train_corpus, const ParallelCorpus& val_corpus,
                  const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                  const EmbeddingTable& source_table, const EmbeddingTable& target_table,
                  const VisualFeatureSet* features = nullptr);

// Greedy translation of a whole corpus as target-token strings, indexed like
// the corpus (pairs the batcher dropped stay empty). Decoding is
// row-independent, so the batch size never changes an output.
std::vector<std::vector<std::string>> translate_corpus(const Model& model,
                                                       const ParallelCorpus& corpus,
                                                       const Vocabulary& source_vocab,
                                                       const Vocabulary& target_vocab,
                                                       int batch_size,
                                                       const TranslateOptions& opts = {});

// Everything one experiment needs. features arrive raw; each run debiases its
// own copy when its flags say so, which is what lets the debias toggle act.
struct ExperimentData {
  ParallelCorpus train;
  ParallelCorpus val;
  ParallelCorpus test;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  EmbeddingTable source_table;
  EmbeddingTable target_table;
  VisualFeatureSet features;  // zero rows for text-only experiments
};

// Vocabularies from the training split, unknown-word synthesis, and
// pretrained-style tables assembled from the task's raw vectors. Embedding
// debiasing is an upstream preprocessing choice and is not applied here.
ExperimentData prepare_synthetic_experiment(const SyntheticTask& task, int max_vocab,
                                            std::uint64_t seed);

struct AblationRow {
  std::string name;
  InitMode encoder_init = InitMode::Pretrained;
  InitMode decoder_init = InitMode::Pretrained;
  bool decoder_fixed = true;
  bool multimodal = true;
  bool visual_debias = true;
};

struct AblationResult {
  std::string name;
  InitMode encoder_init = InitMode::Pretrained;
  InitMode decoder_init = InitMode::Pretrained;
  bool decoder_fixed = true;
  bool multimodal = true;
  bool visual_debias = true;
  double val_bleu = 0;
  double test_bleu = 0;
};

// The six embedding-initialization combinations (encoder init x decoder init
// x fixed decoder), all multimodal.
std::vector<AblationRow> embedding_init_rows();

// Visual-pathway toggles: the full model, the same without centroid
// debiasing, and the text-only model (trained with the translation loss
// alone).
std::vector<AblationRow> visual_ablation_rows();

// Runs every row on the same data and seed. Rows that use images debias a
// private copy of the features when their flag says so, which is why
// data.features must arrive raw.
std::vector<AblationResult> run_ablation_matrix(const TrainConfig& base,
                                                const ModelConfig& model_config,
                                                const ExperimentData& data,
                                                const std::vector<AblationRow>& rows);

// header + one line per result; scores with 2 decimals.
std::string ablation_csv(const std::vector<AblationResult>& results);

struct SeedSweepResult {
  std::vector<std::uint64_t> seeds;
  std::vector<TrainLog> logs;
  std::vector<double> val_bleu;   // best validation BLEU per seed
  std::vector<double> test_bleu;  // test BLEU of each best checkpoint
  std::string summary;            // mean±sd of the test scores
};

// Repeats one configuration across seeds and reports the score spread.
SeedSweepResult run_seeds(const TrainConfig& base, const ModelConfig& model_config,
                          const ExperimentData& data, const std::vector<std::uint64_t>& seeds);

}  // namespace mmt
