#pragma once

#include <vector>

#include "mmt/autodiff.hpp"
#include "mmt/common.hpp"

namespace mmt {

// Which word stands in as the contrastive sample.
//   MostOffending: the non-gold word nearest the prediction (hard negative).
//   ProseFaithful: maximizes d(e(w), e(y)) - d(e_hat, e(w)), close to the
//   prediction and far from the gold at the same time.
enum class NegativeMode { MostOffending, ProseFaithful };
NegativeMode negative_mode_from_string(const std::string& s);
std::string to_string(NegativeMode m);

struct LossConfig {
  Real gamma = 0.5;    // ranking margin
  Real alpha = 0.1;    // visual margin
  Real lambda = 0.01;  // translation share of the multitask blend
  NegativeMode negative_mode = NegativeMode::MostOffending;
  DistanceKind dist = DistanceKind::Cosine;

  void validate() const;
};

using Tensor = TensorPtrT<Real>;
using Tape = TapeT<Real>;

// Contrastive word for one prediction. Gold, pad, and bos are never
// eligible; zero-norm rows are skipped under cosine; ties go to the lowest
// id. Plain values in, plain id out: selection carries no gradient.
int select_negative(const VecX& e_hat, int gold, const MatX& table, NegativeMode mode,
                    DistanceKind kind);

// Ranking loss over a predicted-embedding sequence. predictions[j] is the
// B x D output for step j; gold/mask are B x T with T = predictions.size().
// Per sentence the unmasked hinge terms max{0, gamma + d(e_hat, e(y)) -
// d(e_hat, e(w-))} are summed, then averaged over the batch. Gold ids at
// masked steps are substituted with eos before lookup (their terms are
// zeroed anyway; the substitution keeps cosine defined against the zero pad
// row). Gradient reaches predictions and table but never the selection.
// frozen_negatives, when given, skips selection and reuses the stored ids
// (finite-difference checks need the selection pinned).
struct MarginLossResult {
  Tensor loss;
  MatX step_terms;    // hinge values after masking
  MatInt negatives;   // chosen ids, eos at masked steps
};
MarginLossResult margin_ranking_loss(Tape& tape, const std::vector<Tensor>& predictions,
                                     const MatInt& gold, const MatX& mask, const Tensor& table,
                                     const LossConfig& cfg,
                                     const MatInt* frozen_negatives = nullptr);

// Contrastive latent-space loss with in-batch negatives:
// J_V = sum_b sum_{b' != b} max{0, alpha + d(vhat_b, v_b) - d(vhat_b, v_b')}.
// Images enter as constants; only the sentence side takes gradient. B = 1
// has no contrastive pairs and yields exactly zero.
struct VisualLossResult {
  Tensor loss;
  MatX pair_terms;  // B x B, zero diagonal
};
VisualLossResult visual_max_margin(Tape& tape, const Tensor& v_hat, const MatX& images,
                                   const LossConfig& cfg);

// J = lambda * J_T + (1 - lambda) * J_V. A null j_v means the batch carried
// no images, and then J is J_T itself (not lambda * J_T).
Tensor multitask_loss(Tape& tape, const Tensor& j_t, const Tensor& j_v, Real lambda);

// Baseline-head objective: masked mean negative log-likelihood over the
// step distributions. Gold probabilities below 1e-12 are clamped before the
// log; `clamped` counts how many unmasked positions hit the clamp.
struct CrossEntropyResult {
  Tensor loss;
  long long clamped = 0;
};
CrossEntropyResult cross_entropy_loss(Tape& tape, const std::vector<Tensor>& probabilities,
                                      const MatInt& gold, const MatX& mask);

}  // namespace mmt
