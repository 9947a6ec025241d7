#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmt/common.hpp"
#include "mmt/embeddings.hpp"

namespace mmt {

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

// Aligned sentence pairs, already tokenized. image_index is either empty or
// one feature-row number per pair.
struct ParallelCorpus {
  Split split = Split::Train;
  std::vector<std::vector<std::string>> source;
  std::vector<std::vector<std::string>> target;
  std::vector<int> image_index;

  int size() const { return static_cast<int>(source.size()); }
};

// Image feature matrix (one row per image). centroid is empty until
// debias_visual runs; afterwards it holds the training-split mean that was
// subtracted from every row.
struct VisualFeatureSet {
  MatX features;
  VecX centroid;

  bool debiased() const { return centroid.size() > 0; }
  int count() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

// One padded training batch. Masked slots hold the pad id and mask 0; target
// rows are wrapped <bos> ... <eos> before padding. images has zero rows when
// the batch carries no visual block. order maps batch rows back to corpus
// sentence indexes.
struct Batch {
  MatInt src;
  MatX src_mask;
  MatInt tgt;
  MatX tgt_mask;
  MatX images;
  std::vector<int> order;

  int rows() const { return static_cast<int>(src.rows()); }
};

struct BatchStats {
  long long truncated = 0;
  long long dropped_empty = 0;
};

// Lowercases (ASCII + Latin-1 letters + a few ligatures), normalizes
// punctuation by a fixed table (curly quotes to straight, the Unicode dash
// family to "-", ellipsis to "...", exotic spaces to plain space), then
// tokenizes: words split on whitespace, punctuation split from words with
// runs of the same mark kept as one token ("..." survives, "?!" splits).
std::vector<std::string> preprocess_text(const std::string& line);

// Most frequent tokens behind the four reserved ids; ties go to the
// lexicographically smaller token. Counts are kept for frequency buckets.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, int max_size);

// Reads aligned files (one sentence per line), preprocessing each line.
// image_index_path is optional; when given it must have one integer per line.
ParallelCorpus load_parallel_corpus(const std::string& src_path, const std::string& tgt_path,
                                    Split split, const std::string& image_index_path = "");

// Shuffles with the seed, groups sentences of similar source length, then
// shuffles batch order. Pairs with an empty side are dropped; sentences over
// length_cap tokens are truncated. Deterministic for a given seed.
std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocabulary& vocab_src,
                                const Vocabulary& vocab_tgt, int batch_size, uint64_t shuffle_seed,
                                const VisualFeatureSet* features = nullptr, int length_cap = 100,
                                BatchStats* stats = nullptr);

// Binary layout: "MMVF", u32 count, u32 dim (little-endian), then count*dim
// float32 little-endian values row-major. Paths ending in .csv read/write
// one comma-separated row per line instead.
VisualFeatureSet load_visual_features(const std::string& path);
void save_visual_features(const std::string& path, const VisualFeatureSet& set);

// Centroid over the training rows only, subtracted from every row. The
// centroid stays on the set so later splits share the same shift.
void debias_visual(VisualFeatureSet& set, const std::vector<int>& train_indexes);

// Desk-scale stand-in for an image-captioning corpus: a bijective token
// substitution task with Zipf-distributed frequencies, plus visual features
// made from a fixed random projection of each sentence's bag of words.
struct SynthSpec {
  int vocab_size = 50;
  int train_pairs = 1000;
  int val_pairs = 100;
  int test_pairs = 100;
  int min_len = 3;
  int max_len = 12;
  Real zipf_exponent = 1.0;
  int feature_dim = 32;
  int emb_dim = 32;
  Real feature_noise = 0.01;
  std::uint64_t seed = 1;
};

// Feature rows are stacked train, then val, then test; each split's
// image_index points into that stack. The raw vector tables cover the task
// vocabulary plus a handful of spare tokens (so unknown-word synthesis has
// out-of-vocabulary material to average).
struct SyntheticTask {
  ParallelCorpus train;
  ParallelCorpus val;
  ParallelCorpus test;
  VisualFeatureSet features;
  RawEmbeddings src_vectors;
  RawEmbeddings tgt_vectors;
};

SyntheticTask generate_synthetic_task(const SynthSpec& spec);

}  // namespace mmt
