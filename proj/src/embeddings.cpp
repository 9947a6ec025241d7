#include "mmt/embeddings.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace mmt {

namespace {

const char* kReserved[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool parse_full_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtoll(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

}  // namespace

Vocabulary::Vocabulary() {
  for (int i = 0; i < kNumReserved; ++i) add(kReserved[i], 0);
}

int Vocabulary::id(const std::string& tok) const {
  auto it = index.find(tok);
  return it == index.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw ContractError("Vocabulary::token: id " + std::to_string(id) + " outside 0.." +
                        std::to_string(size() - 1));
  return tokens[id];
}

int Vocabulary::add(const std::string& tok, long long count) {
  int id = size();
  tokens.push_back(tok);
  counts.push_back(count);
  index.emplace(tok, id);
  return id;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& toks) const {
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

InitMode init_mode_from_string(const std::string& s) {
  if (s == "pretrained") return InitMode::Pretrained;
  if (s == "random") return InitMode::Random;
  throw ConfigError("unknown init mode '" + s + "' (want pretrained|random)");
}

std::string to_string(InitMode m) {
  return m == InitMode::Pretrained ? "pretrained" : "random";
}

RawEmbeddings load_word_vectors(const std::string& path, int expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word-vector file: " + path);

  RawEmbeddings raw;
  raw.dim = expected_dim > 0 ? expected_dim : 0;

  std::string line;
  long long line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;

    std::istringstream iss(line);
    std::string token;
    iss >> token;

    if (first) {
      first = false;
      // two bare integers on the first line are a count/dim header
      std::string extra;
      std::istringstream probe(line);
      std::string a, b;
      long long ha = 0, hb = 0;
      if (probe >> a >> b && !(probe >> extra) && parse_full_int(a, ha) && parse_full_int(b, hb)) {
        if (raw.dim > 0 && hb != raw.dim)
          throw ParseError(path + " line 1: header dimension " + std::to_string(hb) +
                           " does not match expected " + std::to_string(raw.dim));
        if (raw.dim == 0) raw.dim = static_cast<int>(hb);
        continue;
      }
    }

    std::vector<Real> vals;
    Real v;
    while (iss >> v) vals.push_back(v);
    // anything non-numeric after the floats is a malformed field
    if (!iss.eof()) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": malformed number");
    }
    if (raw.dim == 0) raw.dim = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != raw.dim) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": got " +
                       std::to_string(vals.size()) + " values, want " + std::to_string(raw.dim));
    }
    if (raw.vectors.count(token)) {
      ++raw.duplicates;
      continue;
    }
    VecX vec(raw.dim);
    for (int i = 0; i < raw.dim; ++i) vec[i] = vals[i];
    raw.vectors.emplace(std::move(token), std::move(vec));
  }
  if (raw.vectors.empty()) throw ParseError(path + ": no vector entries");
  return raw;
}

void save_word_vectors(const std::string& path, const EmbeddingTable& table,
                       const Vocabulary& vocab, bool with_header) {
  if (table.rows() != vocab.size())
    throw ShapeError("save_word_vectors: table rows " + std::to_string(table.rows()) +
                     " vs vocab size " + std::to_string(vocab.size()));
  std::ofstream out(path);
  if (!out) throw Error("cannot write word-vector file: " + path);
  if (with_header) out << table.rows() << " " << table.cols() << "\n";
  char buf[64];
  for (int i = 0; i < table.rows(); ++i) {
    out << vocab.token(i);
    for (int j = 0; j < table.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(table.weights(i, j)));
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

VecX build_unknown_embedding(const RawEmbeddings& raw, const Vocabulary& vocab) {
  if (raw.vectors.empty()) throw ContractError("build_unknown_embedding: empty raw table");
  // fixed accumulation order so the result does not depend on hash layout
  std::vector<const std::string*> keys;
  keys.reserve(raw.vectors.size());
  for (const auto& kv : raw.vectors) keys.push_back(&kv.first);
  std::sort(keys.begin(), keys.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });

  VecX sum = VecX::Zero(raw.dim);
  long long n = 0;
  for (const auto* k : keys) {
    if (vocab.contains(*k)) continue;
    sum += raw.vectors.at(*k);
    ++n;
  }
  if (n == 0) {
    for (const auto* k : keys) sum += raw.vectors.at(*k);
    n = static_cast<long long>(keys.size());
  }
  return sum / Real(n);
}

EmbeddingTable assemble_table(const RawEmbeddings& raw, const Vocabulary& vocab,
                              const VecX& unk_vector, InitMode mode, CounterRng& rng) {
  const int d = static_cast<int>(unk_vector.size());
  if (d <= 0) throw ContractError("assemble_table: unknown vector is empty");
  if (mode == InitMode::Pretrained && raw.dim > 0 && raw.dim != d)
    throw ShapeError("assemble_table: raw dim " + std::to_string(raw.dim) + " vs unk dim " +
                     std::to_string(d));

  EmbeddingTable table;
  table.weights = MatX::Zero(vocab.size(), d);
  auto draw_row = [&](int id) {
    for (int j = 0; j < d; ++j) table.weights(id, j) = rng.uniform(-0.1, 0.1);
  };

  for (int id = 0; id < vocab.size(); ++id) {
    if (id == Vocabulary::kPad) continue;  // stays zero
    if (mode == InitMode::Random) {
      draw_row(id);
      continue;
    }
    if (id == Vocabulary::kUnk) {
      table.weights.row(id) = unk_vector.transpose();
    } else if (id == Vocabulary::kBos || id == Vocabulary::kEos) {
      draw_row(id);
    } else {
      auto it = raw.vectors.find(vocab.token(id));
      table.weights.row(id) =
          (it == raw.vectors.end() ? unk_vector : it->second).transpose();
    }
  }
  return table;
}

DebiasReport debias_all_but_top(EmbeddingTable& table, int k) {
  const int v = table.rows();
  const int d = table.cols();
  if (k < 0) throw ContractError("debias_all_but_top: negative k");
  if (k >= v)
    throw ContractError("debias_all_but_top: k=" + std::to_string(k) + " with only " +
                        std::to_string(v) + " rows");
  if (k > d)
    throw ContractError("debias_all_but_top: k=" + std::to_string(k) + " exceeds dimension " +
                        std::to_string(d));

  const int n = v - 1;  // pad row sits out
  DebiasReport report;
  auto block = table.weights.bottomRows(n);
  report.mean = block.colwise().mean().transpose();
  block.rowwise() -= report.mean.transpose();

  report.directions = MatX::Zero(k, d);
  report.explained_variance = VecX::Zero(k);
  if (k > 0) {
    MatX cov = block.transpose() * block / Real(n);
    Eigen::SelfAdjointEigenSolver<MatX> es(cov);
    if (es.info() != Eigen::Success)
      throw Error("debias_all_but_top: eigendecomposition failed");
    // eigenvalues come back ascending
    for (int i = 0; i < k; ++i) {
      VecX u = es.eigenvectors().col(d - 1 - i);
      int imax = 0;
      u.cwiseAbs().maxCoeff(&imax);
      if (u[imax] < 0) u = -u;  // fixed sign so reports are comparable
      report.directions.row(i) = u.transpose();
      report.explained_variance[i] = es.eigenvalues()[d - 1 - i];
    }
    MatX coeffs = block * report.directions.transpose();  // n x k
    block -= coeffs * report.directions;
  }
  return report;
}

void apply_debias(EmbeddingTable& table, const DebiasReport& report) {
  const int d = table.cols();
  const int k = static_cast<int>(report.directions.rows());
  if (k > 0 && report.directions.cols() != d)
    throw ShapeError("apply_debias: direction dim " + std::to_string(report.directions.cols()) +
                     " vs table " + std::to_string(d));
  auto block = table.weights.bottomRows(table.rows() - 1);
  VecX mean = block.colwise().mean().transpose();
  block.rowwise() -= mean.transpose();
  if (k > 0) {
    MatX coeffs = block * report.directions.transpose();
    block -= coeffs * report.directions;
  }
}

Real distance(const VecX& a, const VecX& b, DistanceKind kind) {
  if (a.size() != b.size())
    throw ShapeError("distance: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  switch (kind) {
    case DistanceKind::Cosine: {
      const Real na = a.norm();
      const Real nb = b.norm();
      if (na == 0 || nb == 0) throw ContractError("distance: zero-norm input under cosine");
      return 1 - a.dot(b) / (na * nb);
    }
    case DistanceKind::Dot:
      return -a.dot(b);
    case DistanceKind::Euclidean:
      return (a - b).norm();
  }
  throw ContractError("distance: bad kind");
}

NeighborResult nearest_neighbor(const VecX& query, const EmbeddingTable& table,
                                bool exclude_reserved, DistanceKind kind) {
  if (query.size() != table.cols())
    throw ShapeError("nearest_neighbor: query dim " + std::to_string(query.size()) + " vs table " +
                     std::to_string(table.cols()));
  NeighborResult best;
  for (int i = 0; i < table.rows(); ++i) {
    if (exclude_reserved && (i == Vocabulary::kPad || i == Vocabulary::kBos)) continue;
    VecX row = table.weights.row(i).transpose();
    if (kind == DistanceKind::Cosine && row.norm() == 0) continue;
    Real d = distance(row, query, kind);
    if (best.id < 0 || d < best.dist) {
      best.id = i;
      best.dist = d;
    }
  }
  if (best.id < 0) throw ContractError("nearest_neighbor: no eligible rows");
  return best;
}

EmbeddingSearch::EmbeddingSearch(const EmbeddingTable& table, DistanceKind kind,
                                 bool exclude_reserved)
    : table_(&table), kind_(kind), exclude_reserved_(exclude_reserved) {
  norms_ = VecX::Zero(table.rows());
  for (int i = 0; i < table.rows(); ++i) {
    VecX row = table.weights.row(i).transpose();
    norms_[i] = row.norm();
  }
}

NeighborResult EmbeddingSearch::nearest(const VecX& query) const {
  const auto& w = table_->weights;
  if (query.size() != w.cols())
    throw ShapeError("EmbeddingSearch: query dim " + std::to_string(query.size()) + " vs table " +
                     std::to_string(w.cols()));
  Real qn = 0;
  if (kind_ == DistanceKind::Cosine) {
    qn = query.norm();
    if (qn == 0) throw ContractError("EmbeddingSearch: zero-norm query under cosine");
  }
  NeighborResult best;
  for (int i = 0; i < w.rows(); ++i) {
    if (exclude_reserved_ && (i == Vocabulary::kPad || i == Vocabulary::kBos)) continue;
    Real d;
    VecX row = w.row(i).transpose();
    switch (kind_) {
      case DistanceKind::Cosine:
        if (norms_[i] == 0) continue;
        d = 1 - row.dot(query) / (norms_[i] * qn);
        break;
      case DistanceKind::Dot:
        d = -row.dot(query);
        break;
      default:
        d = (row - query).norm();
        break;
    }
    if (best.id < 0 || d < best.dist) {
      best.id = i;
      best.dist = d;
    }
  }
  if (best.id < 0) throw ContractError("EmbeddingSearch: no eligible rows");
  return best;
}

std::vector<NeighborResult> EmbeddingSearch::nearest_batch(const MatX& queries) const {
  std::vector<NeighborResult> out;
  out.reserve(queries.rows());
  for (int b = 0; b < queries.rows(); ++b) {
    VecX q = queries.row(b).transpose();
    out.push_back(nearest(q));
  }
  return out;
}

}  // namespace mmt
