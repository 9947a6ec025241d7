#pragma once

#include <string>
#include <vector>

#include "mmt/autodiff.hpp"
#include "mmt/common.hpp"
#include "mmt/data.hpp"
#include "mmt/embeddings.hpp"
#include "mmt/losses.hpp"

namespace mmt {

enum class OutputHead { EmbeddingPrediction, Softmax };
OutputHead output_head_from_string(const std::string& s);
std::string to_string(OutputHead h);

// What the decoder consumes at inference step j+1: the table row of the word
// it just emitted (default, matches the teacher-forced input distribution),
// or the raw predicted vector from step j.
enum class FeedbackMode { EmittedWord, PredictedEmbedding };
FeedbackMode feedback_mode_from_string(const std::string& s);
std::string to_string(FeedbackMode m);

struct ModelConfig {
  int encoder_hidden = 256;  // per direction; states are twice this wide
  int decoder_hidden = 256;
  int embedding_dim = 300;
  int latent_dim = 2048;
  int source_vocab = 0;
  int target_vocab = 0;
  Real dropout = 0.3;
  OutputHead output_head = OutputHead::EmbeddingPrediction;
  InitMode encoder_init = InitMode::Pretrained;
  bool encoder_trainable = true;
  InitMode decoder_init = InitMode::Pretrained;
  bool decoder_fixed = true;
  bool multimodal = true;

  int state_dim() const { return 2 * encoder_hidden; }
  void validate() const;
};

// One direction's gate parameters, PyTorch layout: per gate an input weight
// (input x hidden), a recurrent weight (hidden x hidden), and two biases.
struct GruParams {
  Tensor wxr, wxz, wxn;
  Tensor whr, whz, whn;
  Tensor bxr, bxz, bxn;
  Tensor bhr, bhz, bhn;
};

struct AttendResult {
  Tensor context;  // B x state_dim
  Tensor weights;  // B x N, exact zeros at masked positions
};

struct DecodeStepResult {
  Tensor state;       // clean recurrent state s_j, B x decoder_hidden
  Tensor prediction;  // predicted embedding, every component in (-1, 1)
};

struct ForwardResult {
  std::vector<Tensor> encoder_states;  // per position, masked rows zeroed
  std::vector<Tensor> predictions;     // embedding head: one tensor per target step
  std::vector<Tensor> probabilities;   // softmax head: one distribution per step
  Tensor v_hat;                        // null when the batch carries no images
  MatInt gold;                         // targets shifted left by one
  MatX loss_mask;                      // validity of each gold position
};

struct TranslateOptions {
  int max_len = 50;
  DistanceKind dist = DistanceKind::Cosine;
  FeedbackMode feedback = FeedbackMode::EmittedWord;
};

// Encoder, attentional decoder, and visual projection over one parameter set.
// All parameters live as tape tensors; an instance is exclusively owned while
// training, and translate() never records gradients, so a frozen instance can
// serve concurrent callers.
class Model {
 public:
  // Embedding matrices arrive preassembled (vocab x embedding_dim); all other
  // weights draw uniform(-0.1, 0.1) from rng in registry order, biases zero.
  Model(const ModelConfig& config, const MatX& source_embeddings, const MatX& target_embeddings,
        CounterRng& rng);

  const ModelConfig& config() const { return config_; }
  const Tensor& source_table() const { return src_table_; }
  const Tensor& target_table() const { return tgt_table_; }

  // Stable name -> tensor registry, the checkpoint and optimizer order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // The subset the optimizer may update (fixed tables are excluded).
  std::vector<Tensor> trainable_parameters() const;

  // Bidirectional pass over the source ids. Output t is the concatenation of
  // the forward and backward states at t, with masked rows exactly zero; the
  // recurrent state carries through masked steps unchanged.
  std::vector<Tensor> encode(Tape& tape, const MatInt& src, const MatX& src_mask, bool training,
                             CounterRng* rng) const;

  // Additive attention: scores v' tanh(W q + U h_t + b) per position, masked
  // softmax, then the weighted sum of states.
  AttendResult attend(Tape& tape, const Tensor& query_state, const std::vector<Tensor>& states,
                      const MatX& src_mask) const;

  // Decoder start state: tanh(linear(mean of unmasked encoder states)).
  Tensor initial_state(Tape& tape, const std::vector<Tensor>& states, const MatX& src_mask) const;

  // One teacher-forced (or feedback) step: GRU over [prev embedding, context]
  // then the embedding head on the (optionally dropped) new state. Requires
  // the embedding-prediction head.
  DecodeStepResult decode_step(Tape& tape, const Tensor& prev_embedding, const Tensor& prev_state,
                               const Tensor& context, bool training, CounterRng* rng) const;

  // Baseline head: distribution over the target vocabulary from the decoder
  // state and its context. Dropout is the caller's concern.
  Tensor softmax_head_step(Tape& tape, const Tensor& state, const Tensor& context) const;

  // Latent-space projection tanh(W_v . mean of unmasked states). Requires the
  // multimodal flag; every row must contain at least one unmasked position.
  Tensor project_visual(Tape& tape, const std::vector<Tensor>& states, const MatX& src_mask) const;

  // Full teacher-forced pass over a batch: encoder states, one prediction (or
  // distribution) per target step, and the visual latent when images ride
  // along. gold/loss_mask are the shifted targets ready for the losses.
  ForwardResult forward(Tape& tape, const Batch& batch, bool training, CounterRng* rng) const;

  // Batched greedy decoding: start from bos, emit the nearest table row
  // (pad and bos never eligible) or the argmax under the softmax head, stop a
  // row at eos. Runs at most max_len steps, so no output exceeds max_len
  // tokens; returned ids carry neither bos nor eos. Rows decode independently,
  // so batching never changes a sentence's output.
  std::vector<std::vector<int>> translate(const Batch& batch,
                                          const TranslateOptions& opts = {}) const;

 private:
  Tensor masked_mean(Tape& tape, const std::vector<Tensor>& states, const MatX& src_mask) const;
  Tensor advance_state(Tape& tape, const Tensor& prev_embedding, const Tensor& prev_state,
                       const Tensor& context) const;
  Tensor gru_step(Tape& tape, const GruParams& p, const Tensor& x, const Tensor& h) const;

  ModelConfig config_;
  Tensor src_table_;
  Tensor tgt_table_;
  GruParams enc_fwd_, enc_bwd_;
  Tensor init_w_, init_b_;
  GruParams dec_;
  Tensor attn_w_, attn_u_, attn_b_, attn_v_;
  Tensor out_w_, out_b_;          // embedding-prediction head
  Tensor softmax_w_, softmax_b_;  // softmax head
  Tensor visual_w_;               // multimodal only
};

}  // namespace mmt
