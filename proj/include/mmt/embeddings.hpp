#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mmt/common.hpp"

namespace mmt {

// Token inventory with dense ids. The four reserved tokens always occupy
// ids 0..3; everything else is appended behind them. Frequency counts come
// from the training corpus and feed the evaluation buckets.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumReserved = 4;

  std::vector<std::string> tokens;
  std::vector<long long> counts;
  std::unordered_map<std::string, int> index;

  Vocabulary();

  int size() const { return static_cast<int>(tokens.size()); }
  bool contains(const std::string& tok) const { return index.count(tok) != 0; }

  // Unknown surface forms map to kUnk.
  int id(const std::string& tok) const;
  const std::string& token(int id) const;

  // Appends a new token; the caller keeps tokens unique.
  int add(const std::string& tok, long long count);

  std::vector<int> encode(const std::vector<std::string>& toks) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;
};

// Pretrained vectors as read from disk, keyed by surface token. duplicates
// counts dropped repeat lines (first occurrence wins).
struct RawEmbeddings {
  std::unordered_map<std::string, VecX> vectors;
  int dim = 0;
  long long duplicates = 0;
};

// V x D table aligned to a Vocabulary. When fixed, training never writes to
// the rows (the decoder-side table stays at its preprocessed values).
struct EmbeddingTable {
  MatX weights;
  bool fixed = true;

  int rows() const { return static_cast<int>(weights.rows()); }
  int cols() const { return static_cast<int>(weights.cols()); }
};

// What debiasing removed: the column mean and the top principal directions
// (one per row of `directions`, mutually orthonormal), with their variances.
struct DebiasReport {
  VecX mean;
  MatX directions;
  VecX explained_variance;
};

enum class InitMode { Pretrained, Random };
InitMode init_mode_from_string(const std::string& s);
std::string to_string(InitMode m);

// Text format: optional "<count> <dim>" header, then "<token> <f1> ... <fD>"
// per line. A first line of exactly two integers is treated as the header.
// expected_dim <= 0 means take the dimension from the header or first row.
RawEmbeddings load_word_vectors(const std::string& path, int expected_dim = -1);

// Writes the table back in the same text format, 9 significant digits.
void save_word_vectors(const std::string& path, const EmbeddingTable& table,
                       const Vocabulary& vocab, bool with_header = true);

// Mean vector over pretrained words that did not make the vocabulary; falls
// back to the mean over everything when no such word exists.
VecX build_unknown_embedding(const RawEmbeddings& raw, const Vocabulary& vocab);

// Pretrained mode copies raw vectors (missing tokens get unk_vector; bos and
// eos are drawn from the random-init range so debiasing can place them).
// Random mode draws every row uniform(-0.1, 0.1). The pad row is zero either
// way, which keeps masked positions exactly inert.
EmbeddingTable assemble_table(const RawEmbeddings& raw, const Vocabulary& vocab,
                              const VecX& unk_vector, InitMode mode, CounterRng& rng);

// All-but-the-top postprocessing: subtract the column mean of the non-pad
// rows, then strip each row's projection onto the top-k principal directions
// of the centered block. Row kPad is excluded from the statistics and left
// untouched. k = 0 is pure centering.
DebiasReport debias_all_but_top(EmbeddingTable& table, int k);

// Brings a table into the debiased frame of a fitted report: centers the
// non-pad block by its current column mean, then strips the stored
// directions. report.mean records what the fitting pass removed and is not
// subtracted again here, so a second application is a no-op up to roundoff.
void apply_debias(EmbeddingTable& table, const DebiasReport& report);

// The model's distance d. Cosine: 1 - a.b/(|a||b|), range [0,2], zero-norm
// inputs rejected. Dot: -a.b (so smaller is closer). Euclidean: |a-b|.
Real distance(const VecX& a, const VecX& b, DistanceKind kind = DistanceKind::Cosine);

struct NeighborResult {
  int id = -1;
  Real dist = 0;
};

// Exact scan over eligible rows; ties go to the lowest id. exclude_reserved
// removes pad and bos from the candidates (unk and eos stay eligible).
// Zero-norm rows are never candidates under cosine distance.
NeighborResult nearest_neighbor(const VecX& query, const EmbeddingTable& table,
                                bool exclude_reserved, DistanceKind kind = DistanceKind::Cosine);

// Same scan with the row norms precomputed. The table must outlive the
// search and stay unmodified; queries are safe to run concurrently.
class EmbeddingSearch {
 public:
  EmbeddingSearch(const EmbeddingTable& table, DistanceKind kind, bool exclude_reserved);

  NeighborResult nearest(const VecX& query) const;
  std::vector<NeighborResult> nearest_batch(const MatX& queries) const;

 private:
  const EmbeddingTable* table_;
  DistanceKind kind_;
  bool exclude_reserved_;
  VecX norms_;
};

}  // namespace mmt
