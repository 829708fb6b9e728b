#include "testing.hpp"

#include <filesystem>
#include <fstream>

#include "egsnet/errors.hpp"
#include "egsnet/model.hpp"
#include "egsnet/tensor_io.hpp"

using namespace egsnet;

namespace {

bool params_equal(torch::nn::Module& a, torch::nn::Module& b) {
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (auto& p : pa) {
    auto* q = pb.find(p.key());
    if (q == nullptr || !torch::equal(p.value(), *q)) return false;
  }
  return true;
}

bool buffers_equal(torch::nn::Module& a, torch::nn::Module& b) {
  auto ba = a.named_buffers();
  auto bb = b.named_buffers();
  if (ba.size() != bb.size()) return false;
  for (auto& x : ba) {
    auto* y = bb.find(x.key());
    if (y == nullptr || !torch::equal(x.value(), *y)) return false;
  }
  return true;
}

std::vector<std::pair<std::string, torch::Tensor>> snapshot_buffers(torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (auto& b : m.named_buffers()) out.emplace_back(b.key(), b.value().clone());
  return out;
}

EncoderConfig tiny_enc() {
  EncoderConfig enc;
  enc.backbone = "conv4";
  enc.channels = 16;
  enc.blocks = 2;
  enc.stem_stride = 2;
  return enc;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("encoder forward shapes and dispatch") {
  torch::manual_seed(1);
  Conv4Encoder conv(16, 2, 2);
  auto out = conv.forward(torch::rand({5, 3, 20, 20}), ForwardMode::Eval);
  CHECK((out.sizes() == torch::IntArrayRef({5, 16})));
  CHECK(conv.embedding_dim() == 16);
  CHECK(conv.arch_id() == "conv2-c16-s2");

  ResNet18Encoder res;
  auto rout = res.forward(torch::rand({2, 3, 64, 64}), ForwardMode::Eval);
  CHECK((rout.sizes() == torch::IntArrayRef({2, 512})));
  CHECK(res.embedding_dim() == 512);

  auto made = make_encoder(tiny_enc());
  CHECK(made->arch_id() == "conv2-c16-s2");
  EncoderConfig bad = tiny_enc();
  bad.backbone = "vgg";
  CHECK_THROWS_WITH_AS(make_encoder(bad), doctest::Contains("vgg"), ConfigError);
}

TEST_CASE("construction and input validation") {
  CHECK_THROWS_AS(Conv4Encoder(16, 0, 2), ConfigError);
  CHECK_THROWS_AS(Conv4Encoder(16, 2, 3), ConfigError);
  CHECK_THROWS_AS(Conv4Encoder(16, 2, 0), ConfigError);

  Conv4Encoder deep(8, 4, 2);
  CHECK_THROWS_WITH_AS(deep.forward(torch::rand({1, 3, 8, 8}), ForwardMode::Eval),
                       doctest::Contains("too small"), ConfigError);
  // 3-d input is rejected before any conv runs
  Conv4Encoder conv(8, 2, 1);
  CHECK_THROWS_AS(conv.forward(torch::rand({3, 20, 20}), ForwardMode::Eval), DataError);
}

TEST_CASE("model construction is reproducible for a given seed") {
  auto a = ModelState::make(tiny_enc(), "prototype", 9, 123);
  auto b = ModelState::make(tiny_enc(), "prototype", 9, 123);
  auto c = ModelState::make(tiny_enc(), "prototype", 9, 124);
  CHECK(params_equal(*a.similarity_encoder, *b.similarity_encoder));
  CHECK(params_equal(*a.classifier, *b.classifier));
  CHECK_FALSE(params_equal(*a.similarity_encoder, *c.similarity_encoder));

  // the relation comparator only exists for the relation metric
  CHECK(a.relation == nullptr);
  auto r = ModelState::make(tiny_enc(), "relation", 9, 123);
  REQUIRE((r.relation != nullptr));
  CHECK(r.relation->embedding_dim() == 16);
}

TEST_CASE("branches alias one encoder until split, then become independent") {
  auto m = ModelState::make(tiny_enc(), "prototype", 7, 11);
  CHECK(m.shared());
  CHECK((m.similarity_encoder.get() == m.emotion_encoder.get()));

  m.split_shared();
  CHECK(m.split);
  CHECK((m.similarity_encoder.get() != m.emotion_encoder.get()));
  CHECK(params_equal(*m.similarity_encoder, *m.emotion_encoder));
  CHECK(buffers_equal(*m.similarity_encoder, *m.emotion_encoder));

  // identical twins produce identical features on the same batch
  auto x = torch::rand({4, 3, 20, 20});
  CHECK(torch::equal(m.similarity_encoder->forward(x, ForwardMode::Eval),
                     m.emotion_encoder->forward(x, ForwardMode::Eval)));

  // perturbing one branch no longer touches the other
  {
    torch::NoGradGuard ng;
    m.similarity_encoder->parameters()[0].add_(1.0);
  }
  CHECK_FALSE(params_equal(*m.similarity_encoder, *m.emotion_encoder));

  // a second split is ignored: the emotion branch keeps its object
  auto* before = m.emotion_encoder.get();
  m.split_shared();
  CHECK((m.emotion_encoder.get() == before));
}

TEST_CASE("copy_weights_from transfers parameters and buffers exactly") {
  torch::manual_seed(21);
  Conv4Encoder src(16, 2, 2);
  torch::manual_seed(22);
  Conv4Encoder dst(16, 2, 2);
  // drift the source's batch-norm buffers so buffer copying is observable
  src.forward(torch::rand({6, 3, 20, 20}), ForwardMode::Train);
  REQUIRE_FALSE(params_equal(src, dst));

  dst.copy_weights_from(src);
  CHECK(params_equal(src, dst));
  CHECK(buffers_equal(src, dst));
  auto x = torch::rand({3, 3, 20, 20});
  CHECK(torch::equal(src.forward(x, ForwardMode::Eval), dst.forward(x, ForwardMode::Eval)));
}

TEST_CASE("forward modes: buffer updates happen in Train only") {
  torch::manual_seed(31);
  Conv4Encoder enc(16, 2, 2);
  auto x = torch::rand({8, 3, 20, 20});

  auto before = snapshot_buffers(enc);
  auto frozen_out = enc.forward(x, ForwardMode::FrozenRef);
  for (auto& [key, val] : before) {
    CHECK(torch::equal(*enc.named_buffers().find(key), val));
  }
  enc.forward(x, ForwardMode::Eval);
  for (auto& [key, val] : before) {
    CHECK(torch::equal(*enc.named_buffers().find(key), val));
  }

  // FrozenRef normalizes with batch statistics, exactly like Train would
  auto train_out = enc.forward(x, ForwardMode::Train);
  CHECK(torch::allclose(frozen_out, train_out, 0.0, 1e-12));

  // ...and that Train forward moved the running statistics
  bool moved = false;
  for (auto& [key, val] : before) {
    if (!torch::equal(*enc.named_buffers().find(key), val)) moved = true;
  }
  CHECK(moved);

  // once the running stats differ from the batch stats, Eval disagrees with Train
  CHECK_FALSE(torch::allclose(enc.forward(x, ForwardMode::Eval), train_out));
}

TEST_CASE("input standardization rides along as buffers") {
  Conv4Encoder enc(8, 2, 1);
  auto buffers = enc.named_buffers();
  auto* mean = buffers.find("input_mean");
  auto* std = buffers.find("input_std");
  REQUIRE((mean != nullptr));
  REQUIRE((std != nullptr));
  CHECK((mean->sizes() == torch::IntArrayRef({1, 3, 1, 1})));
  CHECK(torch::equal(*mean, torch::full({1, 3, 1, 1}, 0.5f)));
  CHECK(torch::equal(*std, torch::full({1, 3, 1, 1}, 0.5f)));
}

TEST_CASE("classifier and relation comparator shapes") {
  torch::manual_seed(41);
  Classifier clf(16, 9);
  CHECK(clf.num_classes() == 9);
  auto logits = clf.forward(torch::randn({5, 16}));
  CHECK((logits.sizes() == torch::IntArrayRef({5, 9})));

  RelationMetric rel(16);
  auto scores = rel.forward(torch::randn({7, 32}));
  CHECK((scores.sizes() == torch::IntArrayRef({7})));
}

TEST_CASE("encoder forward matches the stored reference output") {
  namespace fs = std::filesystem;
  const fs::path golden = fs::path(EGSNET_GOLDEN_DIR) / "conv4_forward.bin";

  auto m = ModelState::make(tiny_enc(), "prototype", 5, 777);
  torch::manual_seed(778);
  auto x = torch::rand({4, 3, 20, 20});
  auto out = m.similarity_encoder->forward(x, ForwardMode::Eval);

  if (!fs::exists(golden)) {
    fs::create_directories(golden.parent_path());
    std::ofstream os(golden, std::ios::binary);
    write_tensor(os, out);
    MESSAGE("reference output written to ", golden.string(), "; rerun to compare");
  }
  std::ifstream is(golden, std::ios::binary);
  REQUIRE(is.good());
  auto want = read_tensor(is);
  REQUIRE((want.sizes() == out.sizes()));
  CHECK((out - want).abs().max().item<double>() < 1e-5);
}

}  // TEST_SUITE
