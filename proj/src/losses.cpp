#include "mmt/losses.hpp"

#include "mmt/embeddings.hpp"

namespace mmt {

NegativeMode negative_mode_from_string(const std::string& s) {
  if (s == "most_offending") return NegativeMode::MostOffending;
  if (s == "prose_faithful") return NegativeMode::ProseFaithful;
  throw ConfigError("unknown negative mode '" + s + "' (want most_offending|prose_faithful)");
}

std::string to_string(NegativeMode m) {
  return m == NegativeMode::MostOffending ? "most_offending" : "prose_faithful";
}

void LossConfig::validate() const {
  if (gamma < 0) throw ConfigError("loss config: gamma must be >= 0");
  if (alpha < 0) throw ConfigError("loss config: alpha must be >= 0");
  if (lambda < 0 || lambda > 1) throw ConfigError("loss config: lambda must be in [0,1]");
}

int select_negative(const VecX& e_hat, int gold, const MatX& table, NegativeMode mode,
                    DistanceKind kind) {
  const int v = static_cast<int>(table.rows());
  if (e_hat.size() != table.cols())
    throw ShapeError("select_negative: query dim " + std::to_string(e_hat.size()) + " vs table " +
                     std::to_string(table.cols()));

  VecX gold_row;
  if (mode == NegativeMode::ProseFaithful) {
    if (gold < 0 || gold >= v)
      throw ContractError("select_negative: gold id " + std::to_string(gold) + " outside table");
    gold_row = table.row(gold).transpose();
  }

  int best = -1;
  Real best_score = 0;
  for (int w = 0; w < v; ++w) {
    if (w == gold || w == Vocabulary::kPad || w == Vocabulary::kBos) continue;
    VecX row = table.row(w).transpose();
    if (kind == DistanceKind::Cosine && row.norm() == 0) continue;
    if (mode == NegativeMode::MostOffending) {
      const Real d = distance(row, e_hat, kind);
      if (best < 0 || d < best_score) {
        best = w;
        best_score = d;
      }
    } else {
      const Real score = distance(row, gold_row, kind) - distance(e_hat, row, kind);
      if (best < 0 || score > best_score) {
        best = w;
        best_score = score;
      }
    }
  }
  if (best < 0) throw ContractError("select_negative: no eligible word");
  return best;
}

MarginLossResult margin_ranking_loss(Tape& tape, const std::vector<Tensor>& predictions,
                                     const MatInt& gold, const MatX& mask, const Tensor& table,
                                     const LossConfig& cfg, const MatInt* frozen_negatives) {
  const int t_steps = static_cast<int>(predictions.size());
  if (t_steps == 0) throw ContractError("margin_ranking_loss: empty prediction sequence");
  const int b_rows = predictions[0]->rows();
  if (gold.rows() != b_rows || gold.cols() != t_steps)
    throw ShapeError("margin_ranking_loss: gold " + std::to_string(gold.rows()) + "x" +
                     std::to_string(gold.cols()) + " vs batch " + std::to_string(b_rows) + "x" +
                     std::to_string(t_steps));
  if (mask.rows() != b_rows || mask.cols() != t_steps)
    throw ShapeError("margin_ranking_loss: mask shape mismatch");
  if (frozen_negatives &&
      (frozen_negatives->rows() != b_rows || frozen_negatives->cols() != t_steps))
    throw ShapeError("margin_ranking_loss: frozen negatives shape mismatch");

  MarginLossResult result;
  result.step_terms = MatX::Zero(b_rows, t_steps);
  result.negatives = MatInt::Constant(b_rows, t_steps, Vocabulary::kEos);

  Tensor total;
  for (int j = 0; j < t_steps; ++j) {
    std::vector<int> gold_ids(b_rows), neg_ids(b_rows);
    for (int b = 0; b < b_rows; ++b) {
      if (mask(b, j) == 0) {
        gold_ids[b] = Vocabulary::kEos;
        neg_ids[b] = Vocabulary::kEos;
        continue;
      }
      const int y = gold(b, j);
      if (y == Vocabulary::kPad)
        throw ContractError("margin_ranking_loss: unmasked gold is pad at step " +
                            std::to_string(j));
      gold_ids[b] = y;
      if (frozen_negatives) {
        neg_ids[b] = (*frozen_negatives)(b, j);
      } else {
        VecX e_hat = predictions[j]->mat().row(b).transpose();
        neg_ids[b] = select_negative(e_hat, y, table->mat(), cfg.negative_mode, cfg.dist);
      }
      result.negatives(b, j) = neg_ids[b];
    }

    auto e_gold = embedding_lookup(tape, table, gold_ids);
    auto e_neg = embedding_lookup(tape, table, neg_ids);
    auto d_pos = rowwise_distance(tape, predictions[j], e_gold, cfg.dist);
    auto d_neg = rowwise_distance(tape, predictions[j], e_neg, cfg.dist);
    auto hinge = relu(tape, add_const(tape, sub(tape, d_pos, d_neg), cfg.gamma));
    auto mask_col = from_vector(VecX(mask.col(j)));
    auto masked = mul(tape, hinge, mask_col);
    result.step_terms.col(j) = masked->value;
    auto step_sum = sum(tape, masked);
    total = total ? add(tape, total, step_sum) : step_sum;
  }
  result.loss = scale(tape, total, Real(1) / Real(b_rows));
  return result;
}

VisualLossResult visual_max_margin(Tape& tape, const Tensor& v_hat, const MatX& images,
                                   const LossConfig& cfg) {
  const int b_rows = v_hat->rows();
  if (images.rows() != b_rows || images.cols() != v_hat->cols())
    throw ShapeError("visual_max_margin: images " + std::to_string(images.rows()) + "x" +
                     std::to_string(images.cols()) + " vs latent " + std::to_string(b_rows) + "x" +
                     std::to_string(v_hat->cols()));

  VisualLossResult result;
  result.pair_terms = MatX::Zero(b_rows, b_rows);
  if (b_rows == 1) {
    result.loss = make_scalar<Real>(0);
    return result;
  }

  auto paired = from_matrix(images);
  auto d_own = rowwise_distance(tape, v_hat, paired, cfg.dist);

  Tensor total;
  for (int s = 1; s < b_rows; ++s) {
    MatX rotated(b_rows, images.cols());
    for (int b = 0; b < b_rows; ++b) rotated.row(b) = images.row((b + s) % b_rows);
    auto others = from_matrix(rotated);
    auto d_other = rowwise_distance(tape, v_hat, others, cfg.dist);
    auto hinge = relu(tape, add_const(tape, sub(tape, d_own, d_other), cfg.alpha));
    for (int b = 0; b < b_rows; ++b) result.pair_terms(b, (b + s) % b_rows) = hinge->value[b];
    auto shift_sum = sum(tape, hinge);
    total = total ? add(tape, total, shift_sum) : shift_sum;
  }
  result.loss = total;
  return result;
}

Tensor multitask_loss(Tape& tape, const Tensor& j_t, const Tensor& j_v, Real lambda) {
  if (lambda < 0 || lambda > 1)
    throw ContractError("multitask_loss: lambda " + std::to_string(lambda) + " outside [0,1]");
  if (!j_t) throw ContractError("multitask_loss: missing translation loss");
  if (!j_v) return j_t;
  return add(tape, scale(tape, j_t, lambda), scale(tape, j_v, Real(1) - lambda));
}

CrossEntropyResult cross_entropy_loss(Tape& tape, const std::vector<Tensor>& probabilities,
                                      const MatInt& gold, const MatX& mask) {
  const int t_steps = static_cast<int>(probabilities.size());
  if (t_steps == 0) throw ContractError("cross_entropy_loss: empty sequence");
  const int b_rows = probabilities[0]->rows();
  if (gold.rows() != b_rows || gold.cols() != t_steps || mask.rows() != b_rows ||
      mask.cols() != t_steps)
    throw ShapeError("cross_entropy_loss: gold/mask shape mismatch");

  const Real denom = mask.sum();
  if (denom == 0) throw ContractError("cross_entropy_loss: all positions masked");

  CrossEntropyResult result;
  Tensor total;
  for (int j = 0; j < t_steps; ++j) {
    std::vector<int> ids(b_rows);
    for (int b = 0; b < b_rows; ++b) {
      ids[b] = gold(b, j);
      if (mask(b, j) != 0 && probabilities[j]->mat()(b, ids[b]) < Real(1e-12)) ++result.clamped;
    }
    auto p = pick(tape, probabilities[j], ids);
    auto lg = log(tape, clamp_min(tape, p, Real(1e-12)));
    auto masked = mul(tape, lg, from_vector(VecX(mask.col(j))));
    auto step_sum = sum(tape, masked);
    total = total ? add(tape, total, step_sum) : step_sum;
  }
  result.loss = scale(tape, total, Real(-1) / denom);
  return result;
}

}  // namespace mmt
