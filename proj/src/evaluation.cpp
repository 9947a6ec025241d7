#include "mmt/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace mmt {

namespace {

constexpr int kMaxOrder = 4;

// Tokens joined on a separator that tokenized text cannot contain, so
// distinct n-grams never collide.
std::unordered_map<std::string, long long> ngram_counts(const std::vector<std::string>& sentence,
                                                        int n) {
  std::unordered_map<std::string, long long> counts;
  const int len = static_cast<int>(sentence.size());
  for (int i = 0; i + n <= len; ++i) {
    std::string key = sentence[i];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += sentence[i + k];
    }
    ++counts[key];
  }
  return counts;
}

long long frequency_of(const Vocabulary& vocab, const std::string& token) {
  auto it = vocab.index.find(token);
  return it == vocab.index.end() ? 0 : vocab.counts[it->second];
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    quoted += c;
    if (c == '"') quoted += '"';
  }
  quoted += '"';
  return quoted;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.empty()) throw ContractError("corpus_bleu: empty hypothesis list");
  if (hypotheses.size() != references.size()) {
    throw ContractError("corpus_bleu: " + std::to_string(hypotheses.size()) +
                        " hypotheses for " + std::to_string(references.size()) + " references");
  }

  std::array<long long, kMaxOrder> matches{};
  std::array<long long, kMaxOrder> totals{};
  long long hyp_len = 0;
  long long ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<long long>(hypotheses[i].size());
    ref_len += static_cast<long long>(references[i].size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      if (static_cast<int>(hypotheses[i].size()) < n) continue;
      totals[n - 1] += static_cast<long long>(hypotheses[i].size()) - n + 1;
      const auto hyp_counts = ngram_counts(hypotheses[i], n);
      const auto ref_counts = ngram_counts(references[i], n);
      for (const auto& [gram, count] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_sum = 0;
  int orders = 0;
  for (int n = 0; n < kMaxOrder; ++n) {
    if (totals[n] == 0) continue;
    const double p = matches[n] > 0 ? static_cast<double>(matches[n]) / totals[n]
                                    : 1.0 / (2.0 * totals[n]);
    log_sum += std::log(p);
    ++orders;
  }
  const double bp = std::min(1.0, std::exp(1.0 - static_cast<double>(ref_len) / hyp_len));
  return 100.0 * bp * std::exp(log_sum / orders);
}

std::vector<WordScore> word_fscore(const std::vector<std::vector<std::string>>& hypotheses,
                                   const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.size() != references.size()) {
    throw ContractError("word_fscore: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                        std::to_string(references.size()) + " references");
  }

  struct Tally {
    long long produced = 0;
    long long referenced = 0;
    long long both = 0;
  };
  std::map<std::string, Tally> tally;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const std::set<std::string> hyp(hypotheses[i].begin(), hypotheses[i].end());
    const std::set<std::string> ref(references[i].begin(), references[i].end());
    for (const auto& w : hyp) {
      auto& t = tally[w];
      ++t.produced;
      t.both += ref.count(w) != 0;
    }
    for (const auto& w : ref) ++tally[w].referenced;
  }

  std::vector<WordScore> records;
  records.reserve(tally.size());
  for (const auto& [token, t] : tally) {
    WordScore r;
    r.token = token;
    r.precision = t.produced > 0 ? static_cast<double>(t.both) / t.produced : 0.0;
    r.recall = t.referenced > 0 ? static_cast<double>(t.both) / t.referenced : 0.0;
    r.f = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall)
                                     : 0.0;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<FrequencyBucket> fscore_by_frequency(const std::vector<WordScore>& records,
                                                 const Vocabulary& train_vocab,
                                                 const std::vector<long long>& edges) {
  if (edges.empty()) throw ConfigError("bucket edges: at least one edge required");
  if (edges.front() != 0) {
    throw ConfigError("bucket edges: first edge must be 0 so every frequency has a bucket");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) {
      throw ConfigError("bucket edges: must increase strictly, got " +
                        std::to_string(edges[i - 1]) + " then " + std::to_string(edges[i]));
    }
  }

  const int k = static_cast<int>(edges.size());
  std::vector<FrequencyBucket> buckets(k);
  for (int b = 0; b < k; ++b) {
    buckets[b].lo = edges[b];
    buckets[b].hi = b + 1 < k ? edges[b + 1] - 1 : std::numeric_limits<long long>::max();
    if (buckets[b].hi == std::numeric_limits<long long>::max()) {
      buckets[b].label = std::to_string(buckets[b].lo) + "+";
    } else if (buckets[b].lo == buckets[b].hi) {
      buckets[b].label = std::to_string(buckets[b].lo);
    } else {
      buckets[b].label = std::to_string(buckets[b].lo) + "-" + std::to_string(buckets[b].hi);
    }
  }

  std::vector<double> sums(k, 0.0);
  for (const auto& r : records) {
    const long long freq = frequency_of(train_vocab, r.token);
    int b = 0;
    while (b + 1 < k && freq >= edges[b + 1]) ++b;
    sums[b] += r.f;
    ++buckets[b].words;
  }
  for (int b = 0; b < k; ++b) {
    buckets[b].mean_f = buckets[b].words > 0 ? sums[b] / buckets[b].words : 0.0;
  }
  return buckets;
}

EvaluationReport evaluate_corpus(const std::vector<std::vector<std::string>>& hypotheses,
                                 const std::vector<std::vector<std::string>>& references,
                                 const Vocabulary& train_vocab,
                                 const std::vector<long long>& edges) {
  EvaluationReport report;
  report.bleu = corpus_bleu(hypotheses, references);
  report.words = word_fscore(hypotheses, references);
  for (auto& w : report.words) w.frequency = frequency_of(train_vocab, w.token);
  report.buckets = fscore_by_frequency(report.words, train_vocab, edges);
  report.sentences = static_cast<long long>(hypotheses.size());
  return report;
}

std::string word_scores_csv(const std::vector<WordScore>& words) {
  std::ostringstream out;
  out << "token,frequency,precision,recall,f\n";
  for (const auto& w : words) {
    out << csv_field(w.token) << ',' << w.frequency << ',' << fixed2(w.precision) << ','
        << fixed2(w.recall) << ',' << fixed2(w.f) << '\n';
  }
  return out.str();
}

std::string frequency_buckets_csv(const std::vector<FrequencyBucket>& buckets) {
  std::ostringstream out;
  out << "bucket,words,mean_f\n";
  for (const auto& b : buckets) {
    out << csv_field(b.label) << ',' << b.words << ',' << fixed2(b.mean_f) << '\n';
  }
  return out.str();
}

std::string evaluation_summary(const EvaluationReport& report) {
  std::ostringstream out;
  out << "sentences evaluated: " << report.sentences << '\n';
  out << "corpus BLEU: " << fixed2(report.bleu) << '\n';
  out << "word types scored: " << report.words.size() << '\n';
  out << "F by training frequency:\n";
  for (const auto& b : report.buckets) {
    out << "  " << b.label << ": " << fixed2(b.mean_f) << " (" << b.words << " types)\n";
  }
  return out.str();
}

}  // namespace mmt
