#include "mmt/model.hpp"

#include <memory>
#include <utility>

namespace mmt {

namespace {

TensorPtrT<Real> make_weight(std::vector<int> shape, CounterRng& rng) {
  auto t = make_tensor<Real>(std::move(shape), true);
  for (Eigen::Index i = 0; i < t->numel(); ++i) t->value[i] = rng.uniform(-0.1, 0.1);
  return t;
}

TensorPtrT<Real> make_bias(int n) { return make_tensor<Real>(std::vector<int>{n}, true); }

GruParams init_gru(int input, int hidden, CounterRng& rng) {
  GruParams p;
  p.wxr = make_weight({input, hidden}, rng);
  p.wxz = make_weight({input, hidden}, rng);
  p.wxn = make_weight({input, hidden}, rng);
  p.whr = make_weight({hidden, hidden}, rng);
  p.whz = make_weight({hidden, hidden}, rng);
  p.whn = make_weight({hidden, hidden}, rng);
  p.bxr = make_bias(hidden);
  p.bxz = make_bias(hidden);
  p.bxn = make_bias(hidden);
  p.bhr = make_bias(hidden);
  p.bhz = make_bias(hidden);
  p.bhn = make_bias(hidden);
  return p;
}

void collect_gru(const std::string& prefix, const GruParams& p,
                 std::vector<std::pair<std::string, TensorPtrT<Real>>>& out) {
  out.emplace_back(prefix + ".wxr", p.wxr);
  out.emplace_back(prefix + ".wxz", p.wxz);
  out.emplace_back(prefix + ".wxn", p.wxn);
  out.emplace_back(prefix + ".whr", p.whr);
  out.emplace_back(prefix + ".whz", p.whz);
  out.emplace_back(prefix + ".whn", p.whn);
  out.emplace_back(prefix + ".bxr", p.bxr);
  out.emplace_back(prefix + ".bxz", p.bxz);
  out.emplace_back(prefix + ".bxn", p.bxn);
  out.emplace_back(prefix + ".bhr", p.bhr);
  out.emplace_back(prefix + ".bhz", p.bhz);
  out.emplace_back(prefix + ".bhn", p.bhn);
}

std::vector<int> column_ids(const MatInt& m, int col) {
  std::vector<int> ids(m.rows());
  for (int b = 0; b < m.rows(); ++b) ids[b] = m(b, col);
  return ids;
}

}  // namespace

OutputHead output_head_from_string(const std::string& s) {
  if (s == "embedding_prediction") return OutputHead::EmbeddingPrediction;
  if (s == "softmax") return OutputHead::Softmax;
  throw ConfigError("unknown output head '" + s + "' (want embedding_prediction|softmax)");
}

std::string to_string(OutputHead h) {
  return h == OutputHead::EmbeddingPrediction ? "embedding_prediction" : "softmax";
}

FeedbackMode feedback_mode_from_string(const std::string& s) {
  if (s == "emitted_word") return FeedbackMode::EmittedWord;
  if (s == "predicted_embedding") return FeedbackMode::PredictedEmbedding;
  throw ConfigError("unknown feedback mode '" + s + "' (want emitted_word|predicted_embedding)");
}

std::string to_string(FeedbackMode m) {
  return m == FeedbackMode::EmittedWord ? "emitted_word" : "predicted_embedding";
}

void ModelConfig::validate() const {
  if (encoder_hidden <= 0 || decoder_hidden <= 0 || embedding_dim <= 0 || latent_dim <= 0) {
    throw ConfigError("model config: all dimensions must be positive");
  }
  if (source_vocab < Vocabulary::kNumReserved || target_vocab < Vocabulary::kNumReserved) {
    throw ConfigError("model config: vocabularies must include the reserved tokens");
  }
  if (dropout < 0 || dropout >= 1) {
    throw ConfigError("model config: dropout must lie in [0, 1)");
  }
}

Model::Model(const ModelConfig& config, const MatX& source_embeddings,
             const MatX& target_embeddings, CounterRng& rng)
    : config_(config) {
  config_.validate();
  if (source_embeddings.rows() != config_.source_vocab ||
      source_embeddings.cols() != config_.embedding_dim) {
    throw ShapeError("model: source embeddings " + std::to_string(source_embeddings.rows()) + "x" +
                     std::to_string(source_embeddings.cols()) + " do not match config");
  }
  if (target_embeddings.rows() != config_.target_vocab ||
      target_embeddings.cols() != config_.embedding_dim) {
    throw ShapeError("model: target embeddings " + std::to_string(target_embeddings.rows()) + "x" +
                     std::to_string(target_embeddings.cols()) + " do not match config");
  }

  src_table_ = from_matrix(source_embeddings, config_.encoder_trainable);
  tgt_table_ = from_matrix(target_embeddings, !config_.decoder_fixed);

  const int emb = config_.embedding_dim;
  const int h_enc = config_.encoder_hidden;
  const int h_dec = config_.decoder_hidden;
  const int state = config_.state_dim();

  enc_fwd_ = init_gru(emb, h_enc, rng);
  enc_bwd_ = init_gru(emb, h_enc, rng);
  init_w_ = make_weight({state, h_dec}, rng);
  init_b_ = make_bias(h_dec);
  dec_ = init_gru(emb + state, h_dec, rng);
  attn_w_ = make_weight({h_dec, h_dec}, rng);
  attn_u_ = make_weight({state, h_dec}, rng);
  attn_b_ = make_bias(h_dec);
  attn_v_ = make_weight({h_dec, 1}, rng);
  if (config_.output_head == OutputHead::EmbeddingPrediction) {
    out_w_ = make_weight({h_dec, emb}, rng);
    out_b_ = make_bias(emb);
  } else {
    softmax_w_ = make_weight({h_dec + state, config_.target_vocab}, rng);
    softmax_b_ = make_bias(config_.target_vocab);
  }
  if (config_.multimodal) visual_w_ = make_weight({state, config_.latent_dim}, rng);
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("source_embedding", src_table_);
  out.emplace_back("target_embedding", tgt_table_);
  collect_gru("encoder.forward", enc_fwd_, out);
  collect_gru("encoder.backward", enc_bwd_, out);
  out.emplace_back("decoder.init.w", init_w_);
  out.emplace_back("decoder.init.b", init_b_);
  collect_gru("decoder.gru", dec_, out);
  out.emplace_back("attention.w", attn_w_);
  out.emplace_back("attention.u", attn_u_);
  out.emplace_back("attention.b", attn_b_);
  out.emplace_back("attention.v", attn_v_);
  if (out_w_) {
    out.emplace_back("output.w", out_w_);
    out.emplace_back("output.b", out_b_);
  }
  if (softmax_w_) {
    out.emplace_back("softmax.w", softmax_w_);
    out.emplace_back("softmax.b", softmax_b_);
  }
  if (visual_w_) out.emplace_back("visual.w", visual_w_);
  return out;
}

std::vector<Tensor> Model::trainable_parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) {
    if (t->requires_grad) out.push_back(t);
  }
  return out;
}

Tensor Model::gru_step(Tape& tape, const GruParams& p, const Tensor& x, const Tensor& h) const {
  auto pre_r = add_rowwise(
      tape, add_rowwise(tape, add(tape, matmul(tape, x, p.wxr), matmul(tape, h, p.whr)), p.bxr),
      p.bhr);
  auto pre_z = add_rowwise(
      tape, add_rowwise(tape, add(tape, matmul(tape, x, p.wxz), matmul(tape, h, p.whz)), p.bxz),
      p.bhz);
  auto r = sigmoid(tape, pre_r);
  auto z = sigmoid(tape, pre_z);
  auto n = tanh(tape, add(tape, add_rowwise(tape, matmul(tape, x, p.wxn), p.bxn),
                          mul(tape, r, add_rowwise(tape, matmul(tape, h, p.whn), p.bhn))));
  auto keep = add_const(tape, scale(tape, z, Real(-1)), Real(1));
  return add(tape, mul(tape, keep, n), mul(tape, z, h));
}

std::vector<Tensor> Model::encode(Tape& tape, const MatInt& src, const MatX& src_mask,
                                  bool training, CounterRng* rng) const {
  const int b_rows = static_cast<int>(src.rows());
  const int n = static_cast<int>(src.cols());
  if (b_rows == 0 || n == 0) throw ContractError("encode: empty source batch");
  if (src_mask.rows() != b_rows || src_mask.cols() != n) {
    throw ShapeError("encode: mask " + std::to_string(src_mask.rows()) + "x" +
                     std::to_string(src_mask.cols()) + " does not match source " +
                     std::to_string(b_rows) + "x" + std::to_string(n));
  }
  if (training && config_.dropout > 0 && rng == nullptr) {
    throw ContractError("encode: dropout in training mode needs an rng");
  }

  std::vector<Tensor> inputs(n);
  for (int t = 0; t < n; ++t) inputs[t] = embedding_lookup(tape, src_table_, column_ids(src, t));

  // The recurrent state carries through masked steps; the emitted state is
  // zeroed there so downstream sums see padding as exact zero.
  std::vector<Tensor> fwd(n), bwd(n);
  Tensor h = make_tensor<Real>(std::vector<int>{b_rows, config_.encoder_hidden});
  for (int t = 0; t < n; ++t) {
    const VecX m = src_mask.col(t);
    const VecX keep = VecX::Ones(b_rows) - m;
    auto h_new = gru_step(tape, enc_fwd_, inputs[t], h);
    h = add(tape, rowwise_scale(tape, h_new, m), rowwise_scale(tape, h, keep));
    fwd[t] = rowwise_scale(tape, h, m);
  }
  h = make_tensor<Real>(std::vector<int>{b_rows, config_.encoder_hidden});
  for (int t = n - 1; t >= 0; --t) {
    const VecX m = src_mask.col(t);
    const VecX keep = VecX::Ones(b_rows) - m;
    auto h_new = gru_step(tape, enc_bwd_, inputs[t], h);
    h = add(tape, rowwise_scale(tape, h_new, m), rowwise_scale(tape, h, keep));
    bwd[t] = rowwise_scale(tape, h, m);
  }

  std::vector<Tensor> states(n);
  for (int t = 0; t < n; ++t) {
    states[t] = concat(tape, {fwd[t], bwd[t]}, 1);
    if (training && config_.dropout > 0) {
      states[t] = dropout(tape, states[t], config_.dropout, true, *rng);
    }
  }
  return states;
}

AttendResult Model::attend(Tape& tape, const Tensor& query_state,
                           const std::vector<Tensor>& states, const MatX& src_mask) const {
  if (states.empty()) throw ContractError("attend: no encoder states");
  const int n = static_cast<int>(states.size());
  if (src_mask.cols() != n || src_mask.rows() != states[0]->rows()) {
    throw ShapeError("attend: mask does not match encoder states");
  }
  auto q = matmul(tape, query_state, attn_w_);
  std::vector<Tensor> scores;
  scores.reserve(n);
  for (int t = 0; t < n; ++t) {
    auto e = tanh(tape, add_rowwise(tape, add(tape, q, matmul(tape, states[t], attn_u_)), attn_b_));
    scores.push_back(matmul(tape, e, attn_v_));
  }
  AttendResult r;
  r.weights = masked_softmax(tape, concat(tape, scores, 1), src_mask);
  r.context = attention_combine(tape, states, r.weights);
  return r;
}

Tensor Model::masked_mean(Tape& tape, const std::vector<Tensor>& states,
                          const MatX& src_mask) const {
  // Relies on the encode postcondition: masked rows of every state are zero,
  // so the plain sum is already the masked sum.
  Tensor total = states[0];
  for (std::size_t t = 1; t < states.size(); ++t) total = add(tape, total, states[t]);
  const VecX counts = src_mask.rowwise().sum();
  for (int b = 0; b < counts.size(); ++b) {
    if (counts[b] == 0) {
      throw ContractError("masked mean: row " + std::to_string(b) + " has no unmasked positions");
    }
  }
  return rowwise_scale(tape, total, VecX(counts.cwiseInverse()));
}

Tensor Model::initial_state(Tape& tape, const std::vector<Tensor>& states,
                            const MatX& src_mask) const {
  if (states.empty()) throw ContractError("initial_state: no encoder states");
  auto mean = masked_mean(tape, states, src_mask);
  return tanh(tape, add_rowwise(tape, matmul(tape, mean, init_w_), init_b_));
}

Tensor Model::advance_state(Tape& tape, const Tensor& prev_embedding, const Tensor& prev_state,
                            const Tensor& context) const {
  auto u = concat(tape, {prev_embedding, context}, 1);
  return gru_step(tape, dec_, u, prev_state);
}

DecodeStepResult Model::decode_step(Tape& tape, const Tensor& prev_embedding,
                                    const Tensor& prev_state, const Tensor& context, bool training,
                                    CounterRng* rng) const {
  if (!out_w_) throw ContractError("decode_step: embedding-prediction head not configured");
  if (training && config_.dropout > 0 && rng == nullptr) {
    throw ContractError("decode_step: dropout in training mode needs an rng");
  }
  DecodeStepResult r;
  r.state = advance_state(tape, prev_embedding, prev_state, context);
  auto pre = r.state;
  if (training && config_.dropout > 0) pre = dropout(tape, pre, config_.dropout, true, *rng);
  r.prediction = tanh(tape, add_rowwise(tape, matmul(tape, pre, out_w_), out_b_));
  return r;
}

Tensor Model::softmax_head_step(Tape& tape, const Tensor& state, const Tensor& context) const {
  if (!softmax_w_) throw ContractError("softmax_head_step: softmax head not configured");
  auto u = concat(tape, {state, context}, 1);
  return softmax(tape, add_rowwise(tape, matmul(tape, u, softmax_w_), softmax_b_), 1);
}

Tensor Model::project_visual(Tape& tape, const std::vector<Tensor>& states,
                             const MatX& src_mask) const {
  if (!visual_w_) throw ContractError("project_visual: multimodal head not configured");
  if (states.empty()) throw ContractError("project_visual: no encoder states");
  auto mean = masked_mean(tape, states, src_mask);
  return tanh(tape, matmul(tape, mean, visual_w_));
}

ForwardResult Model::forward(Tape& tape, const Batch& batch, bool training,
                             CounterRng* rng) const {
  const int b_rows = static_cast<int>(batch.src.rows());
  const int t_cols = static_cast<int>(batch.tgt.cols());
  if (t_cols < 2) throw ContractError("forward: target batch must hold at least bos and eos");

  ForwardResult r;
  r.encoder_states = encode(tape, batch.src, batch.src_mask, training, rng);
  r.gold = batch.tgt.rightCols(t_cols - 1);
  r.loss_mask = batch.tgt_mask.rightCols(t_cols - 1);

  auto s = initial_state(tape, r.encoder_states, batch.src_mask);
  for (int j = 0; j + 1 < t_cols; ++j) {
    auto x = embedding_lookup(tape, tgt_table_, column_ids(batch.tgt, j));
    auto att = attend(tape, s, r.encoder_states, batch.src_mask);
    if (config_.output_head == OutputHead::EmbeddingPrediction) {
      auto step = decode_step(tape, x, s, att.context, training, rng);
      s = step.state;
      r.predictions.push_back(step.prediction);
    } else {
      s = advance_state(tape, x, s, att.context);
      auto pre = s;
      if (training && config_.dropout > 0) pre = dropout(tape, pre, config_.dropout, true, *rng);
      r.probabilities.push_back(softmax_head_step(tape, pre, att.context));
    }
  }

  if (config_.multimodal && batch.images.rows() == b_rows && b_rows > 0) {
    r.v_hat = project_visual(tape, r.encoder_states, batch.src_mask);
  }
  return r;
}

std::vector<std::vector<int>> Model::translate(const Batch& batch,
                                               const TranslateOptions& opts) const {
  if (opts.max_len < 0) throw ContractError("translate: max_len must be >= 0");
  if (opts.feedback == FeedbackMode::PredictedEmbedding &&
      config_.output_head != OutputHead::EmbeddingPrediction) {
    throw ContractError("translate: predicted-embedding feedback needs the embedding head");
  }
  const int b_rows = static_cast<int>(batch.src.rows());
  std::vector<std::vector<int>> out(b_rows);
  if (opts.max_len == 0 || b_rows == 0) return out;

  Tape tape;
  tape.set_recording(false);

  auto states = encode(tape, batch.src, batch.src_mask, false, nullptr);
  auto s = initial_state(tape, states, batch.src_mask);

  EmbeddingTable table;
  std::unique_ptr<EmbeddingSearch> search;
  if (config_.output_head == OutputHead::EmbeddingPrediction) {
    table.weights = tgt_table_->mat();
    search = std::make_unique<EmbeddingSearch>(table, opts.dist, /*exclude_reserved=*/true);
  }

  std::vector<int> prev_ids(b_rows, Vocabulary::kBos);
  std::vector<char> finished(b_rows, 0);
  std::vector<int> emitted(b_rows);
  Tensor prev_pred;
  for (int step = 0; step < opts.max_len; ++step) {
    Tensor x;
    if (opts.feedback == FeedbackMode::PredictedEmbedding && prev_pred) {
      x = prev_pred;
    } else {
      x = embedding_lookup(tape, tgt_table_, prev_ids);
    }
    auto att = attend(tape, s, states, batch.src_mask);
    if (config_.output_head == OutputHead::EmbeddingPrediction) {
      auto res = decode_step(tape, x, s, att.context, false, nullptr);
      s = res.state;
      prev_pred = res.prediction;
      for (int b = 0; b < b_rows; ++b) {
        emitted[b] = search->nearest(VecX(res.prediction->mat().row(b).transpose())).id;
      }
    } else {
      s = advance_state(tape, x, s, att.context);
      auto probs = softmax_head_step(tape, s, att.context);
      for (int b = 0; b < b_rows; ++b) {
        int best = -1;
        Real best_p = 0;
        for (int w = 0; w < config_.target_vocab; ++w) {
          if (w == Vocabulary::kPad || w == Vocabulary::kBos) continue;
          const Real p = probs->mat()(b, w);
          if (best < 0 || p > best_p) {
            best = w;
            best_p = p;
          }
        }
        emitted[b] = best;
      }
    }

    bool all_done = true;
    for (int b = 0; b < b_rows; ++b) {
      if (!finished[b]) {
        if (emitted[b] == Vocabulary::kEos) {
          finished[b] = 1;
        } else {
          out[b].push_back(emitted[b]);
        }
      }
      prev_ids[b] = emitted[b];
      all_done = all_done && finished[b];
    }
    if (all_done) break;
  }
  return out;
}

}  // namespace mmt
