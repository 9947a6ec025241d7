#pragma once

#include <string>
#include <vector>

#include "mmt/embeddings.hpp"

namespace mmt {

// Per-word prediction quality. A sentence counts once per word type it
// contains, so precision is the fraction of producing sentences whose
// reference also holds the word, recall the mirror image. Scores stay in
// [0, 1]; an undefined precision or recall scores 0, and F is 0 whenever
// precision + recall is.
struct WordScore {
  std::string token;
  long long frequency = 0;
  double precision = 0;
  double recall = 0;
  double f = 0;
};

// Aggregate of the word records whose training frequency falls in [lo, hi].
// The top bucket is open; its hi holds the largest representable frequency.
struct FrequencyBucket {
  std::string label;
  long long lo = 0;
  long long hi = 0;
  double mean_f = 0;
  long long words = 0;
};

struct EvaluationReport {
  double bleu = 0;
  std::vector<WordScore> words;
  std::vector<FrequencyBucket> buckets;
  long long sentences = 0;
};

// Resolves the rare-word region: 0, 1, 2-4, 5-9, 10-99, 100-999, 1000+.
inline const std::vector<long long> kDefaultBucketEdges = {0, 1, 2, 5, 10, 100, 1000};

// Corpus-level BLEU-4 with one reference per hypothesis: clipped n-gram
// matches and totals pooled over the corpus, geometric mean of the order
// precisions, brevity penalty min(1, exp(1 - r/c)). An order with n-grams
// but no matches is smoothed to 1/(2 * total); an order with no n-grams at
// all (every hypothesis shorter than n) drops out of the mean, which keeps
// BLEU(X, X) = 100 on corpora of short sentences. No unigrams anywhere
// scores 0. Result in [0, 100].
double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references);

// One record per word type appearing anywhere in either corpus, sorted by
// token. frequency is left 0; evaluate_corpus fills it from the training
// vocabulary.
std::vector<WordScore> word_fscore(const std::vector<std::vector<std::string>>& hypotheses,
                                   const std::vector<std::vector<std::string>>& references);

// Groups records by training frequency, looked up in train_vocab (a token
// missing from it counts as frequency 0). edges are inclusive lower bounds,
// strictly increasing and starting at 0, so every record lands in exactly
// one bucket and the bucket word counts sum to the record count. Empty
// buckets keep mean_f = 0.
std::vector<FrequencyBucket> fscore_by_frequency(const std::vector<WordScore>& records,
                                                 const Vocabulary& train_vocab,
                                                 const std::vector<long long>& edges);

EvaluationReport evaluate_corpus(const std::vector<std::vector<std::string>>& hypotheses,
                                 const std::vector<std::vector<std::string>>& references,
                                 const Vocabulary& train_vocab,
                                 const std::vector<long long>& edges = kDefaultBucketEdges);

// CSV and summary emission; every score prints with 2 decimal places.
std::string word_scores_csv(const std::vector<WordScore>& words);
std::string frequency_buckets_csv(const std::vector<FrequencyBucket>& buckets);
std::string evaluation_summary(const EvaluationReport& report);

}  // namespace mmt
