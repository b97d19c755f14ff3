// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"
#include "s2s/arch.hpp"
#include "s2s/decode.hpp"
#include "tiny_models.hpp"

using namespace s2s;
using arch::Family;
using test::error_kind;
using test::tiny_config;
using test::tiny_model;
using test::values;

namespace {

data::Batch sample_batch(std::size_t vocab, std::uint64_t seed, std::size_t count = 3) {
  data::TaskSpec spec;
  spec.count = count;
  spec.vocab_size = vocab;
  spec.seed = seed;
  spec.min_length = 3;
  spec.max_length = 7;
  static std::vector<data::Pair> pairs;
  pairs = data::gen_task(spec);
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  return data::make_batch(pairs, idx);
}

}  // namespace

TEST_CASE("parameter accounting matches what the builders allocate") {
  for (const auto& c : test::every_family()) {
    CAPTURE(c.family_name());
    CHECK(decode::count_params(c) == tiny_model(c)->params().element_count());
  }
  auto plain = tiny_config(Family::convs2s, Family::convs2s);
  plain.encoder.conv_layers.clear();
  plain.decoder.conv_layers.clear();
  CHECK(decode::count_params(plain) == tiny_model(plain)->params().element_count());
  auto bare = tiny_config(Family::rnmt_plus, Family::rnmt_plus);
  bare.layer_norm = false;
  bare.feed_context_to_softmax = false;
  bare.attention_output_projection = false;
  CHECK(decode::count_params(bare) == tiny_model(bare)->params().element_count());
}

TEST_CASE("family names and hybrid assembly") {
  CHECK(tiny_config(Family::transformer, Family::rnmt_plus).family_name() == "hybrid");
  CHECK(tiny_config(Family::cascaded, Family::rnmt_plus).family_name() == "cascaded");
  Rng rng(1);
  const auto h = arch::build_hybrid(Family::transformer, Family::rnmt_plus,
                                    tiny_config(Family::rnmt_plus, Family::rnmt_plus), rng);
  CHECK(h->config().encoder.family == Family::transformer);
  CHECK(h->params().contains("encoder.layer0.self_attention.query.weight"));
  CHECK(error_kind([&] { arch::build_hybrid(Family::convs2s, Family::rnmt_plus, h->config(), rng); }) ==
        ErrorKind::ConfigInvalid);
}

TEST_CASE("decoder logits at step t ignore later target tokens") {
  for (const auto& c : test::every_family()) {
    CAPTURE(c.family_name());
    const auto model = tiny_model(c);
    data::Batch batch = sample_batch(c.vocab_size, 4);
    const auto before = values(model->logits(batch, {}));
    const std::size_t T = batch.target_in.cols, V = c.vocab_size;
    batch.target_in.ids[2] = batch.target_in.ids[2] == 4 ? 5 : 4;  // row 0, position 2
    const auto after = values(model->logits(batch, {}));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t v = 0; v < V; ++v) {
        if (t < 2) CHECK(before[t * V + v] == after[t * V + v]);
      }
    bool changed = false;
    for (std::size_t v = 0; v < V; ++v) changed |= before[2 * V + v] != after[2 * V + v];
    CHECK(changed);
  }
}

TEST_CASE("incremental decoding matches teacher-forced log-probabilities") {
  for (const auto& c : test::every_family()) {
    CAPTURE(c.family_name());
    const auto model = tiny_model(c);
    const data::Batch batch = sample_batch(c.vocab_size, 9);
    const auto full = values(ops::log_softmax(model->logits(batch, {})));
    const auto enc = model->encode(batch.source, {});
    auto state = model->start(enc);
    const std::size_t B = batch.sentences(), T = batch.target_in.cols, V = c.vocab_size;
    double worst = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<int> tokens(B);
      for (std::size_t b = 0; b < B; ++b) tokens[b] = batch.target_in.at(b, t);
      const auto step = values(model->step(*state, tokens));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t v = 0; v < V; ++v)
          worst = std::max(worst, std::abs(step[b * V + v] - full[(b * T + t) * V + v]));
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("reordering decoder state follows the row map") {
  const auto model = tiny_model(tiny_config(Family::rnmt_plus, Family::rnmt_plus));
  const data::Batch batch = sample_batch(12, 2, 2);
  auto a = model->start(model->encode(batch.source, {}));
  auto b = model->start(model->encode(batch.source, {}));
  const std::vector<int> first{data::kBos, data::kBos}, second{5, 6};
  model->step(*a, first);
  model->step(*b, first);
  const std::vector<std::size_t> swap{1, 0};
  b->reorder(swap);
  const auto ya = values(model->step(*a, second));
  const std::vector<int> swapped{6, 5};
  const auto yb = values(model->step(*b, swapped));
  for (std::size_t v = 0; v < 12; ++v) {
    CHECK(ya[v] == yb[12 + v]);
    CHECK(ya[12 + v] == yb[v]);
  }
}

TEST_CASE("feeding the context to the softmax widens its input by the context size") {
  auto c = tiny_config(Family::rnmt_plus, Family::rnmt_plus);
  c.encoder.model_dim = 24;
  const auto with = tiny_model(c);
  c.feed_context_to_softmax = false;
  const auto without = tiny_model(c);
  CHECK(with->params().get("decoder.softmax.weight").dim(0) ==
        without->params().get("decoder.softmax.weight").dim(0) + 16);
}

TEST_CASE("an untrained model scores close to the uniform loss") {
  for (auto c : test::every_family()) {
    CAPTURE(c.family_name());
    c.label_smoothing = 0.0;
    c.loss_normalization = arch::LossNormalization::token;
    const auto model = tiny_model(c);
    const double loss = arch::forward_loss(*model, sample_batch(c.vocab_size, 3, 8), {}).loss.item();
    CHECK(std::abs(loss - std::log(12.0)) < 0.15 * std::log(12.0));
  }
}

TEST_CASE("the normalized loss of a duplicated batch equals the single pair's") {
  for (auto norm : {arch::LossNormalization::sentence, arch::LossNormalization::token}) {
    auto c = tiny_config(Family::rnmt_plus, Family::rnmt_plus);
    c.loss_normalization = norm;
    const auto model = tiny_model(c);
    data::TaskSpec spec;
    spec.count = 1;
    spec.vocab_size = 12;
    const auto pairs = data::gen_task(spec);
    const std::vector<std::size_t> one{0}, two{0, 0};
    const auto a = arch::forward_loss(*model, data::make_batch(pairs, one), {});
    const auto b = arch::forward_loss(*model, data::make_batch(pairs, two), {});
    CHECK(a.loss.item() == doctest::Approx(b.loss.item()).epsilon(1e-12));
    CHECK(b.normalizer() == 2.0 * a.normalizer());
  }
  CHECK(tiny_config(Family::rnmt_plus, Family::rnmt_plus).sentence_level_loss());
  CHECK_FALSE(tiny_config(Family::rnmt_plus, Family::transformer).sentence_level_loss());
}

TEST_CASE("a row's output does not depend on its batch neighbours") {
  for (const auto& c : test::every_family()) {
    CAPTURE(c.family_name());
    const auto model = tiny_model(c);
    data::TaskSpec spec;
    spec.count = 3;
    spec.vocab_size = 12;
    spec.min_length = 2;
    spec.max_length = 9;
    spec.seed = 21;
    const auto pairs = data::gen_task(spec);
    std::size_t shortest = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (pairs[i].source.size() < pairs[shortest].source.size()) shortest = i;
    const std::vector<std::size_t> all{0, 1, 2}, alone{shortest};
    const data::Batch big = data::make_batch(pairs, all), small = data::make_batch(pairs, alone);
    const auto yb = values(model->logits(big, {}));
    const auto ys = values(model->logits(small, {}));
    const std::size_t V = c.vocab_size, Tb = big.target_in.cols, Ts = small.target_in.cols;
    double worst = 0.0;
    for (std::size_t t = 0; t < Ts; ++t)
      for (std::size_t v = 0; v < V; ++v)
        worst = std::max(worst, std::abs(ys[t * V + v] - yb[(shortest * Tb + t) * V + v]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("invalid configurations are rejected") {
  auto c = tiny_config(Family::transformer, Family::transformer);
  c.encoder.heads = 3;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::ConfigInvalid);
  c = tiny_config(Family::convs2s, Family::rnmt_plus);
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::ConfigInvalid);
  c = tiny_config(Family::cascaded, Family::transformer);
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::ConfigInvalid);
  c = tiny_config(Family::rnmt_plus, Family::rnmt_plus);
  c.label_smoothing = 1.0;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::ConfigInvalid);
  c = tiny_config(Family::rnmt_plus, Family::rnmt_plus, 4);
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::ConfigInvalid);
  CHECK(error_kind([] { arch::parse_family("lstm"); }) == ErrorKind::ConfigInvalid);
}

TEST_CASE("composite encoders need compatible pretrained encoders") {
  const auto cascaded = tiny_config(Family::cascaded, Family::rnmt_plus);
  const auto multi = tiny_config(Family::multi_column, Family::rnmt_plus);
  Rng rng(3);
  CHECK(error_kind([&] { arch::build_model(cascaded, rng); }) == ErrorKind::MissingPretrainedEncoder);
  const auto pre = test::tiny_pretrained(multi);
  const arch::Pretrained only_rnmt{&pre.rnmt, nullptr};
  CHECK(error_kind([&] { arch::build_model(multi, rng, only_rnmt); }) == ErrorKind::MissingPretrainedEncoder);

  auto wide = cascaded;
  wide.encoder.model_dim = 24;
  wide.stacked.model_dim = 24;
  CHECK(error_kind([&] { arch::build_model(wide, rng, pre.view()); }) == ErrorKind::CheckpointIncompatible);
  const arch::TensorMap empty;
  const arch::Pretrained nothing{&empty, &empty};
  CHECK(error_kind([&] { arch::build_model(cascaded, rng, nothing); }) == ErrorKind::CheckpointIncompatible);

  const auto model = arch::build_model(cascaded, rng, pre.view());
  for (const auto& p : model->params().all()) {
    if (p.name.rfind("encoder.rnmt.", 0) != 0) continue;
    CHECK(p.frozen);
    const auto& src = pre.rnmt.at("encoder." + p.name.substr(13));
    CHECK(values(p.tensor) == src);
  }
}

TEST_CASE("multi-column merge rejects columns that do not fit the affine") {
  const auto model = tiny_model(tiny_config(Family::multi_column, Family::rnmt_plus));
  Rng rng(4);
  const Tensor a = test::random_tensor({1, 3, 16}, rng, -1, 1, false);
  const Tensor b = test::random_tensor({1, 3, 16}, rng, -1, 1, false);
  CHECK(arch::merge_columns(*model, a, b).dim(2) == 16);
  const Tensor shorter = test::random_tensor({1, 2, 16}, rng, -1, 1, false);
  CHECK(error_kind([&] { arch::merge_columns(*model, a, shorter); }) == ErrorKind::ColumnDimMismatch);
  const Tensor narrow = test::random_tensor({1, 3, 8}, rng, -1, 1, false);
  CHECK(error_kind([&] { arch::merge_columns(*model, a, narrow); }) == ErrorKind::ColumnDimMismatch);
}
