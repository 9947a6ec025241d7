#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "mmt/model.hpp"
#include "mmt/optim.hpp"
#include "support/gradcheck.hpp"

using namespace mmt;
using Mat = MatX;
using Vec = VecX;

namespace {

ModelConfig toy_config() {
  ModelConfig c;
  c.encoder_hidden = 4;
  c.decoder_hidden = 5;
  c.embedding_dim = 6;
  c.latent_dim = 3;
  c.source_vocab = 9;
  c.target_vocab = 11;
  c.dropout = 0;
  return c;
}

Mat random_mat(int r, int c, CounterRng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal() * Real(0.5);
  return m;
}

Model make_model(const ModelConfig& cfg, unsigned long long seed) {
  CounterRng rng(seed);
  Mat src = random_mat(cfg.source_vocab, cfg.embedding_dim, rng);
  src.row(Vocabulary::kPad).setZero();
  Mat tgt = random_mat(cfg.target_vocab, cfg.embedding_dim, rng);
  tgt.row(Vocabulary::kPad).setZero();
  return Model(cfg, src, tgt, rng);
}

void zero_parameters(Model& model) {
  for (auto& [name, t] : model.named_parameters()) t->value.setZero();
}

// Pads ragged id rows, wraps targets in bos/eos, and attaches optional image
// rows, mirroring what the batcher produces.
Batch make_batch(const std::vector<std::vector<int>>& src,
                 const std::vector<std::vector<int>>& tgt, const Mat* images = nullptr,
                 int extra_src_pad = 0) {
  const int b = static_cast<int>(src.size());
  int ns = 0, nt = 0;
  for (const auto& s : src) ns = std::max(ns, static_cast<int>(s.size()));
  for (const auto& t : tgt) nt = std::max(nt, static_cast<int>(t.size()));
  ns += extra_src_pad;
  Batch batch;
  batch.src = MatInt::Zero(b, ns);
  batch.src_mask = Mat::Zero(b, ns);
  batch.tgt = MatInt::Zero(b, nt + 2);
  batch.tgt_mask = Mat::Zero(b, nt + 2);
  for (int i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < src[i].size(); ++j) {
      batch.src(i, static_cast<int>(j)) = src[i][j];
      batch.src_mask(i, static_cast<int>(j)) = 1;
    }
    batch.tgt(i, 0) = Vocabulary::kBos;
    batch.tgt_mask(i, 0) = 1;
    for (std::size_t j = 0; j < tgt[i].size(); ++j) {
      batch.tgt(i, static_cast<int>(j) + 1) = tgt[i][j];
      batch.tgt_mask(i, static_cast<int>(j) + 1) = 1;
    }
    batch.tgt(i, static_cast<int>(tgt[i].size()) + 1) = Vocabulary::kEos;
    batch.tgt_mask(i, static_cast<int>(tgt[i].size()) + 1) = 1;
    batch.order.push_back(i);
  }
  if (images) batch.images = *images;
  return batch;
}

}  // namespace

TEST_CASE("model enum names round trip") {
  CHECK(output_head_from_string("embedding_prediction") == OutputHead::EmbeddingPrediction);
  CHECK(output_head_from_string("softmax") == OutputHead::Softmax);
  CHECK(to_string(OutputHead::Softmax) == "softmax");
  CHECK_THROWS_AS(output_head_from_string("argmax"), ConfigError);
  CHECK(feedback_mode_from_string("emitted_word") == FeedbackMode::EmittedWord);
  CHECK(feedback_mode_from_string("predicted_embedding") == FeedbackMode::PredictedEmbedding);
  CHECK(to_string(FeedbackMode::EmittedWord) == "emitted_word");
  CHECK_THROWS_AS(feedback_mode_from_string("greedy"), ConfigError);
}

TEST_CASE("model config validation") {
  ModelConfig c = toy_config();
  CHECK_NOTHROW(c.validate());
  c.encoder_hidden = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  c.source_vocab = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  CHECK(c.state_dim() == 8);
}

TEST_CASE("parameter registry is stable and complete") {
  auto model = make_model(toy_config(), 5);
  auto params = model.named_parameters();
  CHECK(params.size() == 2 + 12 + 12 + 2 + 12 + 4 + 2 + 1);
  CHECK(params[0].first == "source_embedding");
  CHECK(params[1].first == "target_embedding");
  CHECK(params[2].first == "encoder.forward.wxr");
  CHECK(params.back().first == "visual.w");

  // decoder_fixed=true keeps the target table out of the trainable set.
  auto trainable = model.trainable_parameters();
  CHECK(trainable.size() == params.size() - 1);
  for (const auto& t : trainable) CHECK(t.get() != model.target_table().get());

  ModelConfig sm = toy_config();
  sm.output_head = OutputHead::Softmax;
  sm.multimodal = false;
  auto baseline = make_model(sm, 5);
  auto names = baseline.named_parameters();
  CHECK(names.size() == 2 + 12 + 12 + 2 + 12 + 4 + 2);
  CHECK(names.back().first == "softmax.b");
}

TEST_CASE("all-zero parameters encode to all-zero states") {
  auto model = make_model(toy_config(), 7);
  zero_parameters(model);
  auto batch = make_batch({{4, 5, 6}, {7, 8}}, {{4}, {5}});
  Tape tape;
  auto states = model.encode(tape, batch.src, batch.src_mask, false, nullptr);
  REQUIRE(states.size() == 3);
  for (const auto& s : states) {
    CHECK(s->rows() == 2);
    CHECK(s->cols() == 8);
    CHECK(s->value.cwiseAbs().maxCoeff() == 0);
  }
}

TEST_CASE("encoder states use the paper dimensions under the default config") {
  ModelConfig c;
  c.source_vocab = 8;
  c.target_vocab = 8;
  c.embedding_dim = 10;
  c.dropout = 0;
  auto model = make_model(c, 3);
  auto batch = make_batch({{4, 5, 6, 7, 4}, {5, 6, 4, 7, 5}}, {{4}, {5}});
  Tape tape;
  auto states = model.encode(tape, batch.src, batch.src_mask, false, nullptr);
  CHECK(states.size() == 5);
  CHECK(states[0]->rows() == 2);
  CHECK(states[0]->cols() == 512);
}

TEST_CASE("masked positions produce exactly zero states") {
  auto model = make_model(toy_config(), 11);
  auto batch = make_batch({{4, 5, 6, 7}, {8, 4}}, {{4}, {5}});
  Tape tape;
  auto states = model.encode(tape, batch.src, batch.src_mask, false, nullptr);
  for (int t = 2; t < 4; ++t) {
    CHECK(states[t]->mat().row(1).cwiseAbs().maxCoeff() == 0);
  }
  // The unmasked rows carry signal.
  CHECK(states[3]->mat().row(0).cwiseAbs().maxCoeff() > 0);
}

TEST_CASE("appending pad tokens changes nothing observable") {
  auto model = make_model(toy_config(), 13);
  auto plain = make_batch({{4, 5, 6}}, {{4, 5}});
  auto padded = make_batch({{4, 5, 6}}, {{4, 5}}, nullptr, /*extra_src_pad=*/3);

  Tape t1, t2;
  auto s1 = model.encode(t1, plain.src, plain.src_mask, false, nullptr);
  auto s2 = model.encode(t2, padded.src, padded.src_mask, false, nullptr);
  REQUIRE(s1.size() == 3);
  REQUIRE(s2.size() == 6);
  for (int t = 0; t < 3; ++t) {
    CHECK((s1[t]->value - s2[t]->value).cwiseAbs().maxCoeff() <= 1e-12);
  }
  for (int t = 3; t < 6; ++t) CHECK(s2[t]->value.cwiseAbs().maxCoeff() == 0);

  auto q1 = model.initial_state(t1, s1, plain.src_mask);
  auto q2 = model.initial_state(t2, s2, padded.src_mask);
  CHECK((q1->value - q2->value).cwiseAbs().maxCoeff() <= 1e-12);

  auto a1 = model.attend(t1, q1, s1, plain.src_mask);
  auto a2 = model.attend(t2, q2, s2, padded.src_mask);
  for (int t = 0; t < 3; ++t) {
    CHECK(std::abs(a1.weights->mat()(0, t) - a2.weights->mat()(0, t)) <= 1e-12);
  }
  for (int t = 3; t < 6; ++t) CHECK(a2.weights->mat()(0, t) == 0);
  CHECK((a1.context->value - a2.context->value).cwiseAbs().maxCoeff() <= 1e-12);

  auto v1 = model.project_visual(t1, s1, plain.src_mask);
  auto v2 = model.project_visual(t2, s2, padded.src_mask);
  CHECK((v1->value - v2->value).cwiseAbs().maxCoeff() <= 1e-12);

  auto out1 = model.translate(plain);
  auto out2 = model.translate(padded);
  CHECK(out1 == out2);
}

TEST_CASE("attention collapses to the single unmasked position") {
  auto model = make_model(toy_config(), 17);
  auto batch = make_batch({{5}}, {{4}});
  Tape tape;
  auto states = model.encode(tape, batch.src, batch.src_mask, false, nullptr);
  auto q = model.initial_state(tape, states, batch.src_mask);
  auto att = model.attend(tape, q, states, batch.src_mask);
  CHECK(att.weights->mat()(0, 0) == 1.0);
  CHECK((att.context->value - states[0]->value).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("attention weights form a distribution over unmasked positions") {
  auto model = make_model(toy_config(), 19);
  auto batch = make_batch({{4, 5, 6, 7}, {8, 4}}, {{4}, {5}});
  Tape tape;
  auto states = model.encode(tape, batch.src, batch.src_mask, false, nullptr);
  auto q = model.initial_state(tape, states, batch.src_mask);
  auto att = model.attend(tape, q, states, batch.src_mask);
  for (int b = 0; b < 2; ++b) {
    Real sum = 0;
    for (int t = 0; t < 4; ++t) {
      const Real w = att.weights->mat()(b, t);
      CHECK(w >= 0);
      if (batch.src_mask(b, t) == 0) CHECK(w == 0);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("attention gradients match finite differences") {
  CounterRng rng(23);
  auto model = make_model(toy_config(), 23);
  const int b_rows = 2, n = 3;
  Mat mask = Mat::Ones(b_rows, n);
  mask(1, 2) = 0;
  std::vector<Tensor> states;
  for (int t = 0; t < n; ++t) states.push_back(from_matrix(random_mat(b_rows, 8, rng), true));
  auto query = from_matrix(random_mat(b_rows, 5, rng), true);

  std::vector<testsupport::TensorPtr> params(states.begin(), states.end());
  params.push_back(query);
  auto r = testsupport::gradcheck(
      [&](Tape& tape) {
        auto att = model.attend(tape, query, states, mask);
        return sum(tape, att.context);
      },
      params);
  CHECK(r.checked > 0);
  CHECK(r.max_rel <= 1e-6);
  CHECK(r.max_abs <= 1e-8);
}

TEST_CASE("zeroed decoder emits the zero embedding") {
  auto model = make_model(toy_config(), 29);
  zero_parameters(model);
  Tape tape;
  auto prev_emb = make_tensor<Real>(std::vector<int>{2, 6});
  auto prev_state = make_tensor<Real>(std::vector<int>{2, 5});
  auto context = make_tensor<Real>(std::vector<int>{2, 8});
  auto step = model.decode_step(tape, prev_emb, prev_state, context, false, nullptr);
  CHECK(step.prediction->value.cwiseAbs().maxCoeff() == 0);
  CHECK(step.state->value.cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("predicted embeddings stay strictly inside the unit box") {
  auto model = make_model(toy_config(), 31);
  auto batch = make_batch({{4, 5, 6}, {7, 8}}, {{4, 5}, {6}});
  Tape tape;
  auto fwd = model.forward(tape, batch, false, nullptr);
  REQUIRE(fwd.predictions.size() == 3);
  for (const auto& p : fwd.predictions) {
    CHECK(p->value.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("forward aligns gold and mask with the shifted targets") {
  auto model = make_model(toy_config(), 37);
  auto batch = make_batch({{4, 5}, {6, 7}}, {{4, 5}, {6}});
  Tape tape;
  auto fwd = model.forward(tape, batch, false, nullptr);
  // Targets are [bos w.. eos pad..]; gold drops the bos column.
  CHECK(fwd.gold.rows() == 2);
  CHECK(fwd.gold.cols() == 3);
  CHECK(fwd.gold(0, 0) == 4);
  CHECK(fwd.gold(0, 2) == Vocabulary::kEos);
  CHECK(fwd.gold(1, 1) == Vocabulary::kEos);
  CHECK(fwd.gold(1, 2) == Vocabulary::kPad);
  CHECK(fwd.loss_mask(1, 1) == 1);
  CHECK(fwd.loss_mask(1, 2) == 0);
  CHECK(fwd.v_hat == nullptr);  // no images attached
}

TEST_CASE("visual latent appears only when images ride along") {
  auto cfg = toy_config();
  auto model = make_model(cfg, 41);
  CounterRng rng(2);
  Mat images = random_mat(2, cfg.latent_dim, rng);
  auto with = make_batch({{4, 5}, {6, 7}}, {{4}, {5}}, &images);
  auto without = make_batch({{4, 5}, {6, 7}}, {{4}, {5}});

  Tape tape;
  auto fwd = model.forward(tape, with, false, nullptr);
  REQUIRE(fwd.v_hat != nullptr);
  CHECK(fwd.v_hat->rows() == 2);
  CHECK(fwd.v_hat->cols() == cfg.latent_dim);
  CHECK(fwd.v_hat->value.cwiseAbs().maxCoeff() < 1.0);

  Tape t2;
  CHECK(model.forward(t2, without, false, nullptr).v_hat == nullptr);

  ModelConfig text_only = cfg;
  text_only.multimodal = false;
  auto plain = make_model(text_only, 41);
  Tape t3;
  CHECK(plain.forward(t3, with, false, nullptr).v_hat == nullptr);
  Tape t4;
  auto states = plain.encode(t4, with.src, with.src_mask, false, nullptr);
  CHECK_THROWS_AS(plain.project_visual(t4, states, with.src_mask), ContractError);
}

TEST_CASE("softmax head yields a distribution and uniform logits spread evenly") {
  ModelConfig cfg = toy_config();
  cfg.output_head = OutputHead::Softmax;
  auto model = make_model(cfg, 43);
  auto batch = make_batch({{4, 5}, {6, 7}}, {{4, 5}, {6}});

  Tape tape;
  auto fwd = model.forward(tape, batch, false, nullptr);
  CHECK(fwd.predictions.empty());
  REQUIRE(fwd.probabilities.size() == 3);
  for (const auto& p : fwd.probabilities) {
    for (int b = 0; b < 2; ++b) {
      CHECK(p->mat().row(b).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(p->mat().row(b).minCoeff() > 0);
    }
  }

  zero_parameters(model);
  Tape t2;
  auto uniform = model.forward(t2, batch, false, nullptr);
  const Real expect = Real(1) / Real(cfg.target_vocab);
  for (const auto& p : uniform.probabilities) {
    CHECK((p->value.array() - expect).abs().maxCoeff() <= 1e-15);
  }

  // The embedding-prediction ops are gated off under this head.
  Tape t3;
  auto prev_emb = make_tensor<Real>(std::vector<int>{2, 6});
  auto prev_state = make_tensor<Real>(std::vector<int>{2, 5});
  auto context = make_tensor<Real>(std::vector<int>{2, 8});
  CHECK_THROWS_AS(model.decode_step(t3, prev_emb, prev_state, context, false, nullptr),
                  ContractError);
}

TEST_CASE("dropout perturbs training forwards only") {
  ModelConfig cfg = toy_config();
  cfg.dropout = 0.5;
  auto model = make_model(cfg, 47);
  auto batch = make_batch({{4, 5, 6}}, {{4, 5}});

  Tape t1;
  CounterRng r1(100);
  auto a = model.forward(t1, batch, true, &r1);
  Tape t2;
  CounterRng r2(200);
  auto b = model.forward(t2, batch, true, &r2);
  CHECK((a.predictions[0]->value - b.predictions[0]->value).cwiseAbs().maxCoeff() > 0);

  Tape t3, t4;
  auto c = model.forward(t3, batch, false, nullptr);
  auto d = model.forward(t4, batch, false, nullptr);
  CHECK((c.predictions[0]->value - d.predictions[0]->value).cwiseAbs().maxCoeff() == 0);

  Tape t5;
  CHECK_THROWS_AS(model.forward(t5, batch, true, nullptr), ContractError);
}

TEST_CASE("translate honors max_len and never emits reserved tokens") {
  auto model = make_model(toy_config(), 53);
  auto batch = make_batch({{4, 5, 6}, {7, 8}}, {{4}, {5}});

  TranslateOptions opts;
  opts.max_len = 0;
  auto empty = model.translate(batch, opts);
  CHECK(empty.size() == 2);
  CHECK(empty[0].empty());
  CHECK(empty[1].empty());

  opts.max_len = 7;
  auto out = model.translate(batch, opts);
  for (const auto& row : out) {
    CHECK(row.size() <= 7);
    for (int id : row) {
      CHECK(id != Vocabulary::kPad);
      CHECK(id != Vocabulary::kBos);
      CHECK(id != Vocabulary::kEos);
      CHECK(id < toy_config().target_vocab);
    }
  }
  CHECK(model.translate(batch, opts) == out);
}

TEST_CASE("batched translation equals sentence-at-a-time translation") {
  auto model = make_model(toy_config(), 59);
  std::vector<std::vector<int>> sentences = {{4, 5, 6, 7}, {8, 4}, {5, 6, 7}};
  auto batch = make_batch(sentences, {{4}, {5}, {6}});
  TranslateOptions opts;
  opts.max_len = 6;
  auto together = model.translate(batch, opts);

  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto solo = make_batch({sentences[i]}, {{4}});
    auto alone = model.translate(solo, opts);
    CHECK(alone[0] == together[i]);
  }

  // Both feedback variants run; the emitted-word default is exercised above.
  opts.feedback = FeedbackMode::PredictedEmbedding;
  auto predicted = model.translate(batch, opts);
  CHECK(predicted.size() == 3);

  ModelConfig sm = toy_config();
  sm.output_head = OutputHead::Softmax;
  auto baseline = make_model(sm, 59);
  CHECK_THROWS_AS(baseline.translate(batch, opts), ContractError);
  opts.feedback = FeedbackMode::EmittedWord;
  auto greedy = baseline.translate(batch, opts);
  CHECK(greedy.size() == 3);
  for (const auto& row : greedy) {
    for (int id : row) {
      CHECK(id != Vocabulary::kPad);
      CHECK(id != Vocabulary::kBos);
    }
  }
}

TEST_CASE("fixed decoder embeddings never move while the encoder table does") {
  auto cfg = toy_config();
  auto model = make_model(cfg, 61);
  const Eigen::VectorXd tgt_before = model.target_table()->value;
  const Eigen::VectorXd src_before = model.source_table()->value;
  CounterRng rng(4);
  Mat images = random_mat(2, cfg.latent_dim, rng);
  auto batch = make_batch({{4, 5, 6}, {7, 8}}, {{4, 5}, {6}}, &images);

  auto params = model.trainable_parameters();
  AdamStateT<Real> adam;
  adam.init(params);
  LossConfig loss_cfg;

  for (int it = 0; it < 3; ++it) {
    Tape tape;
    auto fwd = model.forward(tape, batch, true, nullptr);
    auto j_t = margin_ranking_loss(tape, fwd.predictions, fwd.gold, fwd.loss_mask,
                                   model.target_table(), loss_cfg);
    auto j_v = visual_max_margin(tape, fwd.v_hat, batch.images, loss_cfg);
    auto loss = multitask_loss(tape, j_t.loss, j_v.loss, loss_cfg.lambda);
    for (auto& p : params) p->zero_grad();
    tape.backward(loss);
    clip_grad_norm(params, Real(1));
    adam_step(params, adam);
  }

  CHECK((model.target_table()->value.array() == tgt_before.array()).all());
  CHECK((model.source_table()->value - src_before).cwiseAbs().maxCoeff() > 0);
}

TEST_CASE("model gradients match finite differences through both losses") {
  ModelConfig cfg;
  cfg.encoder_hidden = 3;
  cfg.decoder_hidden = 6;
  cfg.embedding_dim = 8;
  cfg.latent_dim = 10;
  cfg.source_vocab = 20;
  cfg.target_vocab = 20;
  cfg.dropout = 0;
  cfg.decoder_fixed = false;  // every tensor must receive a checked gradient
  auto model = make_model(cfg, 67);

  CounterRng rng(6);
  Mat images = random_mat(2, cfg.latent_dim, rng);
  auto batch = make_batch({{4, 9, 12}, {15, 7}}, {{5, 11}, {18}}, &images);
  LossConfig loss_cfg;

  // Pin the margin negatives so the differentiated function stays smooth.
  Tape pin_tape;
  auto pinned = model.forward(pin_tape, batch, false, nullptr);
  auto frozen = margin_ranking_loss(pin_tape, pinned.predictions, pinned.gold, pinned.loss_mask,
                                    model.target_table(), loss_cfg)
                    .negatives;

  std::vector<testsupport::TensorPtr> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);
  auto r = testsupport::gradcheck(
      [&](Tape& tape) {
        auto fwd = model.forward(tape, batch, false, nullptr);
        auto j_t = margin_ranking_loss(tape, fwd.predictions, fwd.gold, fwd.loss_mask,
                                       model.target_table(), loss_cfg, &frozen);
        auto j_v = visual_max_margin(tape, fwd.v_hat, batch.images, loss_cfg);
        return multitask_loss(tape, j_t.loss, j_v.loss, loss_cfg.lambda);
      },
      params);
  CHECK(r.checked > 0);
  CHECK(r.max_rel <= 1e-5);
  CHECK(r.max_abs <= 1e-8);
}

TEST_CASE("softmax baseline gradients match finite differences") {
  ModelConfig cfg = toy_config();
  cfg.output_head = OutputHead::Softmax;
  cfg.multimodal = false;
  cfg.decoder_fixed = false;
  auto model = make_model(cfg, 71);
  auto batch = make_batch({{4, 5, 6}, {7, 8}}, {{4, 5}, {6}});

  std::vector<testsupport::TensorPtr> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);
  auto r = testsupport::gradcheck(
      [&](Tape& tape) {
        auto fwd = model.forward(tape, batch, false, nullptr);
        return cross_entropy_loss(tape, fwd.probabilities, fwd.gold, fwd.loss_mask).loss;
      },
      params);
  CHECK(r.checked > 0);
  CHECK(r.max_rel <= 1e-5);
  CHECK(r.max_abs <= 1e-8);
}
