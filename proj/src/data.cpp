#include "mmt/data.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace mmt {

namespace {

// --- minimal UTF-8 codepoint walk; invalid sequences decode to U+FFFD ---

std::uint32_t decode_utf8(const std::string& s, size_t& i) {
  const unsigned char c = static_cast<unsigned char>(s[i]);
  if (c < 0x80) {
    ++i;
    return c;
  }
  int len;
  std::uint32_t cp;
  if ((c >> 5) == 0x6) {
    len = 2;
    cp = c & 0x1F;
  } else if ((c >> 4) == 0xE) {
    len = 3;
    cp = c & 0x0F;
  } else if ((c >> 3) == 0x1E) {
    len = 4;
    cp = c & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const unsigned char cc = static_cast<unsigned char>(s[i + k]);
    if ((cc >> 6) != 0x2) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (cc & 0x3F);
  }
  i += len;
  return cp;
}

void encode_utf8(std::uint32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// The fixed punctuation replacement table. Returns how many codepoints were
// appended (the ellipsis expands to three).
void normalize_cp(std::uint32_t cp, std::vector<std::uint32_t>& out) {
  switch (cp) {
    case 0x2018:
    case 0x2019:
    case 0x201A:
    case 0x2032:
      out.push_back('\'');
      return;
    case 0x201C:
    case 0x201D:
    case 0x201E:
    case 0x2033:
      out.push_back('"');
      return;
    case 0x2026:
      out.push_back('.');
      out.push_back('.');
      out.push_back('.');
      return;
    case 0x00A0:
    case 0x202F:
    case 0x3000:
      out.push_back(' ');
      return;
    default:
      break;
  }
  if (cp >= 0x2010 && cp <= 0x2015) {  // hyphen .. horizontal bar
    out.push_back('-');
    return;
  }
  if (cp == 0x2212) {  // minus sign
    out.push_back('-');
    return;
  }
  if (cp >= 0x2000 && cp <= 0x200A) {  // en quad .. hair space
    out.push_back(' ');
    return;
  }
  out.push_back(cp);
}

// ASCII + Latin-1 letters + the French ligature/Ÿ pair; enough for the
// language pairs this toolkit targets.
std::uint32_t lower_cp(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  if (cp == 0x152) return 0x153;  // Œ
  if (cp == 0x178) return 0xFF;   // Ÿ
  return cp;
}

bool is_space_cp(std::uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f';
}

bool is_punct_cp(std::uint32_t cp) {
  return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) || (cp >= 0x5B && cp <= 0x60) ||
         (cp >= 0x7B && cp <= 0x7E);
}

std::string rstrip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(rstrip_cr(line));
  return lines;
}

bool has_csv_extension(const std::string& path) {
  auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return false;
  std::string ext = path.substr(dot);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".csv";
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    default:
      return "test";
  }
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "' (want train|val|test)");
}

std::vector<std::string> preprocess_text(const std::string& line) {
  std::vector<std::uint32_t> cps;
  cps.reserve(line.size());
  size_t i = 0;
  while (i < line.size()) {
    std::uint32_t cp = decode_utf8(line, i);
    std::vector<std::uint32_t> repl;
    normalize_cp(cp, repl);
    for (auto r : repl) cps.push_back(lower_cp(r));
  }

  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      tokens.push_back(word);
      word.clear();
    }
  };
  size_t k = 0;
  while (k < cps.size()) {
    std::uint32_t cp = cps[k];
    if (is_space_cp(cp)) {
      flush();
      ++k;
    } else if (is_punct_cp(cp)) {
      flush();
      std::string punct;
      while (k < cps.size() && cps[k] == cp) {
        encode_utf8(cp, punct);
        ++k;
      }
      tokens.push_back(punct);
    } else {
      encode_utf8(cp, word);
      ++k;
    }
  }
  flush();
  return tokens;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, int max_size) {
  if (max_size < Vocabulary::kNumReserved)
    throw ContractError("build_vocab: max_size " + std::to_string(max_size) + " below reserved " +
                        std::to_string(Vocabulary::kNumReserved));
  std::unordered_map<std::string, long long> freq;
  for (const auto& sent : sentences)
    for (const auto& tok : sent) ++freq[tok];

  std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, count] : items) {
    if (v.size() >= max_size) break;
    v.add(tok, count);
  }
  return v;
}

ParallelCorpus load_parallel_corpus(const std::string& src_path, const std::string& tgt_path,
                                    Split split, const std::string& image_index_path) {
  auto src_lines = read_lines(src_path);
  auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size())
    throw ParseError("parallel files differ in length: " + src_path + " has " +
                     std::to_string(src_lines.size()) + " lines, " + tgt_path + " has " +
                     std::to_string(tgt_lines.size()));

  ParallelCorpus corpus;
  corpus.split = split;
  corpus.source.reserve(src_lines.size());
  corpus.target.reserve(tgt_lines.size());
  for (size_t i = 0; i < src_lines.size(); ++i) {
    corpus.source.push_back(preprocess_text(src_lines[i]));
    corpus.target.push_back(preprocess_text(tgt_lines[i]));
  }

  if (!image_index_path.empty()) {
    auto idx_lines = read_lines(image_index_path);
    while (!idx_lines.empty() && idx_lines.back().empty()) idx_lines.pop_back();
    if (idx_lines.size() != src_lines.size())
      throw ParseError("image index " + image_index_path + " has " +
                       std::to_string(idx_lines.size()) + " lines, corpus has " +
                       std::to_string(src_lines.size()));
    corpus.image_index.reserve(idx_lines.size());
    for (size_t i = 0; i < idx_lines.size(); ++i) {
      char* end = nullptr;
      long val = std::strtol(idx_lines[i].c_str(), &end, 10);
      if (end == idx_lines[i].c_str() || val < 0)
        throw ParseError(image_index_path + " line " + std::to_string(i + 1) +
                         ": bad image index '" + idx_lines[i] + "'");
      corpus.image_index.push_back(static_cast<int>(val));
    }
  }
  return corpus;
}

std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocabulary& vocab_src,
                                const Vocabulary& vocab_tgt, int batch_size,
                                std::uint64_t shuffle_seed, const VisualFeatureSet* features,
                                int length_cap, BatchStats* stats) {
  if (batch_size <= 0) throw ContractError("make_batches: batch_size must be positive");
  if (length_cap <= 0) throw ContractError("make_batches: length_cap must be positive");
  if (!corpus.image_index.empty() &&
      corpus.image_index.size() != corpus.source.size())
    throw ContractError("make_batches: image_index covers " +
                        std::to_string(corpus.image_index.size()) + " of " +
                        std::to_string(corpus.source.size()) + " pairs");

  BatchStats local;
  BatchStats* st = stats ? stats : &local;

  std::vector<int> idx;
  idx.reserve(corpus.source.size());
  for (int i = 0; i < corpus.size(); ++i) {
    if (corpus.source[i].empty() || corpus.target[i].empty()) {
      ++st->dropped_empty;
      continue;
    }
    idx.push_back(i);
  }

  CounterRng rng(shuffle_seed);
  shuffle(idx, rng);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return corpus.source[a].size() < corpus.source[b].size();
  });

  std::vector<std::vector<int>> groups;
  for (size_t start = 0; start < idx.size(); start += batch_size) {
    size_t end = std::min(idx.size(), start + batch_size);
    groups.emplace_back(idx.begin() + start, idx.begin() + end);
  }
  shuffle(groups, rng);

  const bool with_images = features != nullptr && !corpus.image_index.empty();
  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const auto& group : groups) {
    const int b_rows = static_cast<int>(group.size());
    std::vector<std::vector<int>> src_ids(b_rows), tgt_ids(b_rows);
    int n_max = 0, m_max = 0;
    for (int r = 0; r < b_rows; ++r) {
      const auto& src_toks = corpus.source[group[r]];
      const auto& tgt_toks = corpus.target[group[r]];
      bool cut = false;
      size_t ns = src_toks.size();
      if (ns > static_cast<size_t>(length_cap)) {
        ns = length_cap;
        cut = true;
      }
      size_t nt = tgt_toks.size();
      if (nt > static_cast<size_t>(length_cap)) {
        nt = length_cap;
        cut = true;
      }
      if (cut) ++st->truncated;
      for (size_t j = 0; j < ns; ++j) src_ids[r].push_back(vocab_src.id(src_toks[j]));
      tgt_ids[r].push_back(Vocabulary::kBos);
      for (size_t j = 0; j < nt; ++j) tgt_ids[r].push_back(vocab_tgt.id(tgt_toks[j]));
      tgt_ids[r].push_back(Vocabulary::kEos);
      n_max = std::max(n_max, static_cast<int>(src_ids[r].size()));
      m_max = std::max(m_max, static_cast<int>(tgt_ids[r].size()));
    }

    Batch batch;
    batch.order = group;
    batch.src = MatInt::Constant(b_rows, n_max, Vocabulary::kPad);
    batch.src_mask = MatX::Zero(b_rows, n_max);
    batch.tgt = MatInt::Constant(b_rows, m_max, Vocabulary::kPad);
    batch.tgt_mask = MatX::Zero(b_rows, m_max);
    for (int r = 0; r < b_rows; ++r) {
      for (size_t j = 0; j < src_ids[r].size(); ++j) {
        batch.src(r, static_cast<int>(j)) = src_ids[r][j];
        batch.src_mask(r, static_cast<int>(j)) = 1.0;
      }
      for (size_t j = 0; j < tgt_ids[r].size(); ++j) {
        batch.tgt(r, static_cast<int>(j)) = tgt_ids[r][j];
        batch.tgt_mask(r, static_cast<int>(j)) = 1.0;
      }
    }
    if (with_images) {
      batch.images = MatX(b_rows, features->dim());
      for (int r = 0; r < b_rows; ++r) {
        int img = corpus.image_index[group[r]];
        if (img < 0 || img >= features->count())
          throw ContractError("make_batches: image index " + std::to_string(img) +
                              " outside feature set of " + std::to_string(features->count()));
        batch.images.row(r) = features->features.row(img);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

VisualFeatureSet load_visual_features(const std::string& path) {
  VisualFeatureSet set;
  if (has_csv_extension(path)) {
    auto lines = read_lines(path);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ParseError(path + ": no feature rows");
    std::vector<std::vector<Real>> rows;
    for (size_t i = 0; i < lines.size(); ++i) {
      std::vector<Real> row;
      std::stringstream ss(lines[i]);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        char* end = nullptr;
        double v = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str())
          throw ParseError(path + " line " + std::to_string(i + 1) + ": bad value '" + cell + "'");
        row.push_back(static_cast<Real>(v));
      }
      if (!rows.empty() && row.size() != rows.front().size())
        throw ParseError(path + " line " + std::to_string(i + 1) + ": got " +
                         std::to_string(row.size()) + " values, want " +
                         std::to_string(rows.front().size()));
      rows.push_back(std::move(row));
    }
    set.features = MatX(rows.size(), rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < rows[i].size(); ++j) set.features(i, j) = rows[i][j];
    return set;
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "MMVF")
    throw FormatError(path + ": bad magic (want MMVF)");
  const std::uint32_t count = read_u32_le(in);
  const std::uint32_t dim = read_u32_le(in);
  if (!in) throw FormatError(path + ": truncated header");
  const std::size_t payload = std::size_t(count) * dim * 4;
  std::vector<char> buf(payload);
  in.read(buf.data(), static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(in.gcount()) != payload)
    throw FormatError(path + ": payload short of " + std::to_string(count) + "x" +
                      std::to_string(dim) + " float32 values");

  set.features = MatX(count, dim);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) {
      std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                           (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
      set.features(i, j) = static_cast<Real>(std::bit_cast<float>(bits));
      p += 4;
    }
  }
  return set;
}

void save_visual_features(const std::string& path, const VisualFeatureSet& set) {
  if (has_csv_extension(path)) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write feature file: " + path);
    char buf[64];
    for (int i = 0; i < set.count(); ++i) {
      for (int j = 0; j < set.dim(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(set.features(i, j)));
        out << (j ? "," : "") << buf;
      }
      out << "\n";
    }
    if (!out) throw Error("write failed: " + path);
    return;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write feature file: " + path);
  out.write("MMVF", 4);
  write_u32_le(out, static_cast<std::uint32_t>(set.count()));
  write_u32_le(out, static_cast<std::uint32_t>(set.dim()));
  for (int i = 0; i < set.count(); ++i) {
    for (int j = 0; j < set.dim(); ++j) {
      const float f = static_cast<float>(set.features(i, j));
      write_u32_le(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  if (!out) throw Error("write failed: " + path);
}

void debias_visual(VisualFeatureSet& set, const std::vector<int>& train_indexes) {
  if (train_indexes.empty()) throw ContractError("debias_visual: no training rows");
  VecX centroid = VecX::Zero(set.dim());
  for (int i : train_indexes) {
    if (i < 0 || i >= set.count())
      throw ContractError("debias_visual: train index " + std::to_string(i) + " outside 0.." +
                          std::to_string(set.count() - 1));
    centroid += set.features.row(i).transpose();
  }
  centroid /= Real(train_indexes.size());
  set.features.rowwise() -= centroid.transpose();
  set.centroid = centroid;
}

SyntheticTask generate_synthetic_task(const SynthSpec& spec) {
  if (spec.vocab_size < 1 || spec.min_len < 1 || spec.max_len < spec.min_len ||
      spec.feature_dim < 1 || spec.emb_dim < 1 || spec.train_pairs < 1)
    throw ContractError("generate_synthetic_task: bad spec");

  CounterRng rng(spec.seed);
  const int v = spec.vocab_size;

  // inverse-CDF table for the Zipf draw
  std::vector<Real> cum(v);
  Real norm = 0;
  for (int i = 0; i < v; ++i) norm += std::pow(Real(i + 1), -spec.zipf_exponent);
  Real acc = 0;
  for (int i = 0; i < v; ++i) {
    acc += std::pow(Real(i + 1), -spec.zipf_exponent) / norm;
    cum[i] = acc;
  }
  auto draw_token = [&]() {
    const Real u = rng.uniform();
    return static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  };

  // fixed projection that turns a bag of words into an "image"
  MatX proj(spec.feature_dim, v);
  for (int i = 0; i < spec.feature_dim; ++i)
    for (int j = 0; j < v; ++j) proj(i, j) = rng.normal();

  auto draw_unit_vec = [&]() {
    VecX x(spec.emb_dim);
    for (int i = 0; i < spec.emb_dim; ++i) x[i] = rng.normal();
    const Real n = x.norm();
    return (n > 0 ? (x / n).eval() : x);
  };

  SyntheticTask task;
  task.src_vectors.dim = spec.emb_dim;
  task.tgt_vectors.dim = spec.emb_dim;
  for (int i = 0; i < v; ++i) {
    task.src_vectors.vectors["s" + std::to_string(i)] = draw_unit_vec();
    task.tgt_vectors.vectors["t" + std::to_string(i)] = draw_unit_vec();
  }
  // spare out-of-corpus tokens feed the unknown-word average
  for (int i = 0; i < 10; ++i) {
    task.src_vectors.vectors["sx" + std::to_string(i)] = draw_unit_vec();
    task.tgt_vectors.vectors["tx" + std::to_string(i)] = draw_unit_vec();
  }

  const int total = spec.train_pairs + spec.val_pairs + spec.test_pairs;
  task.features.features = MatX::Zero(total, spec.feature_dim);

  int row = 0;
  auto fill_split = [&](ParallelCorpus& corpus, Split tag, int pairs) {
    corpus.split = tag;
    for (int s = 0; s < pairs; ++s) {
      const int len =
          spec.min_len + static_cast<int>(rng.randint(spec.max_len - spec.min_len + 1));
      std::vector<std::string> src, tgt;
      VecX bow = VecX::Zero(v);
      for (int j = 0; j < len; ++j) {
        const int tok = draw_token();
        src.push_back("s" + std::to_string(tok));
        tgt.push_back("t" + std::to_string(tok));
        bow[tok] += 1;
      }
      bow /= Real(len);
      VecX feat = proj * bow;
      for (int i = 0; i < spec.feature_dim; ++i) feat[i] += spec.feature_noise * rng.normal();
      task.features.features.row(row) = feat.transpose();
      corpus.source.push_back(std::move(src));
      corpus.target.push_back(std::move(tgt));
      corpus.image_index.push_back(row);
      ++row;
    }
  };
  fill_split(task.train, Split::Train, spec.train_pairs);
  fill_split(task.val, Split::Val, spec.val_pairs);
  fill_split(task.test, Split::Test, spec.test_pairs);
  return task;
}

}  // namespace mmt
