#include "egsnet/model.hpp"

#include <stdexcept>

#include "egsnet/errors.hpp"
#include "egsnet/rng.hpp"

namespace egsnet {

namespace {

constexpr double kBNMomentum = 0.1;
constexpr double kBNEps = 1e-5;

// Dispatches one batch-norm layer according to the forward mode. FrozenRef
// normalizes with batch statistics but lets the in-place running-stat update
// land in throwaway clones, so the layer's buffers stay bit-identical.
torch::Tensor bn_forward(torch::nn::BatchNorm2d& bn, const torch::Tensor& x, ForwardMode mode) {
  switch (mode) {
    case ForwardMode::Train:
      return torch::batch_norm(x, bn->weight, bn->bias, bn->running_mean, bn->running_var,
                               /*training=*/true, kBNMomentum, kBNEps, /*cudnn_enabled=*/false);
    case ForwardMode::Eval:
      return torch::batch_norm(x, bn->weight, bn->bias, bn->running_mean, bn->running_var,
                               /*training=*/false, kBNMomentum, kBNEps, false);
    case ForwardMode::FrozenRef:
      return torch::batch_norm(x, bn->weight, bn->bias, bn->running_mean.clone(),
                               bn->running_var.clone(), /*training=*/true, kBNMomentum, kBNEps,
                               false);
  }
  throw std::logic_error("unreachable forward mode");
}

// Convolutions run fastest here with NHWC-ordered memory; convert weights
// once so inference and training both stay on that path.
void to_channels_last(torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& p : m.parameters()) {
    if (p.dim() == 4) p.set_data(p.data().contiguous(torch::MemoryFormat::ChannelsLast));
  }
}

torch::Tensor prep_images(const torch::Tensor& images) {
  if (images.dim() != 4) throw DataError("encoder input must be B x C x H x W");
  return images.contiguous(torch::MemoryFormat::ChannelsLast);
}

}  // namespace

void Encoder::register_standardization(int64_t in_channels) {
  input_mean_ = register_buffer("input_mean", torch::full({1, in_channels, 1, 1}, 0.5));
  input_std_ = register_buffer("input_std", torch::full({1, in_channels, 1, 1}, 0.5));
}

torch::Tensor Encoder::standardize(const torch::Tensor& images) const {
  return (images - input_mean_.to(images.dtype())) / input_std_.to(images.dtype());
}

void Encoder::copy_weights_from(const Encoder& other) {
  torch::NoGradGuard guard;
  auto src_params = other.named_parameters();
  for (auto& p : named_parameters()) {
    p.value().copy_(*src_params.find(p.key()));
  }
  auto src_buffers = other.named_buffers();
  for (auto& b : named_buffers()) {
    b.value().copy_(*src_buffers.find(b.key()));
  }
}

Conv4Encoder::Conv4Encoder(int64_t channels, int64_t blocks, int64_t stem_stride,
                           int64_t in_channels)
    : channels_(channels), blocks_(blocks), stem_stride_(stem_stride), in_channels_(in_channels) {
  if (blocks_ < 1) throw ConfigError("encoder_blocks must be at least 1");
  if (stem_stride_ < 1 || stem_stride_ > 2) throw ConfigError("encoder_stem_stride must be 1 or 2");
  int64_t in = in_channels_;
  for (int64_t b = 0; b < blocks_; ++b) {
    auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, channels_, 3)
                                      .stride(b == 0 ? stem_stride_ : 1)
                                      .padding(1)
                                      .bias(false));
    auto bn = torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(channels_));
    convs_.push_back(register_module("conv" + std::to_string(b), conv));
    bns_.push_back(register_module("bn" + std::to_string(b), bn));
    in = channels_;
  }
  register_standardization(in_channels_);
  to_channels_last(*this);
}

torch::Tensor Conv4Encoder::forward(const torch::Tensor& images, ForwardMode mode) {
  if (images.dim() != 4) throw DataError("encoder input must be B x C x H x W");
  // Every block but the last is followed by a 2x pool; make sure the input is
  // large enough to survive the downsampling.
  int64_t side = std::min(images.size(2), images.size(3));
  int64_t s = side / stem_stride_;
  for (int64_t b = 0; b + 1 < blocks_; ++b) s /= 2;
  if (s < 1) {
    throw ConfigError("input side " + std::to_string(side) + " too small for " +
                      std::to_string(blocks_) + " blocks with stem stride " +
                      std::to_string(stem_stride_));
  }
  auto x = standardize(prep_images(images));
  for (int64_t b = 0; b < blocks_; ++b) {
    x = convs_[static_cast<size_t>(b)]->forward(x);
    x = bn_forward(bns_[static_cast<size_t>(b)], x, mode);
    x = torch::relu(x);
    if (b + 1 < blocks_) x = torch::max_pool2d(x, 2);
  }
  return x.mean({2, 3});
}

std::string Conv4Encoder::arch_id() const {
  return "conv" + std::to_string(blocks_) + "-c" + std::to_string(channels_) + "-s" +
         std::to_string(stem_stride_);
}

std::shared_ptr<Encoder> Conv4Encoder::clone_encoder() const {
  auto copy = std::make_shared<Conv4Encoder>(channels_, blocks_, stem_stride_, in_channels_);
  copy->copy_weights_from(*this);
  return copy;
}

ResNet18Encoder::ResNet18Encoder(int64_t in_channels) : in_channels_(in_channels) {
  stem_ = register_module(
      "stem", torch::nn::Conv2d(
                  torch::nn::Conv2dOptions(in_channels_, 64, 7).stride(2).padding(3).bias(false)));
  stem_bn_ = register_module("stem_bn", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(64)));
  const int64_t widths[4] = {64, 128, 256, 512};
  int64_t in = 64;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < 2; ++b) {
      Stage st;
      const int64_t out = widths[s];
      const int64_t stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string p = "l" + std::to_string(s) + "b" + std::to_string(b) + "_";
      st.conv1 = register_module(
          p + "conv1", torch::nn::Conv2d(
                           torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
      st.bn1 = register_module(p + "bn1", torch::nn::BatchNorm2d(out));
      st.conv2 = register_module(
          p + "conv2",
          torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).stride(1).padding(1).bias(false)));
      st.bn2 = register_module(p + "bn2", torch::nn::BatchNorm2d(out));
      if (stride != 1 || in != out) {
        st.down_conv = register_module(
            p + "down",
            torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
        st.down_bn = register_module(p + "down_bn", torch::nn::BatchNorm2d(out));
      }
      stages_.push_back(st);
      in = out;
    }
  }
  register_standardization(in_channels_);
  to_channels_last(*this);
}

torch::Tensor ResNet18Encoder::forward(const torch::Tensor& images, ForwardMode mode) {
  auto x = standardize(prep_images(images));
  x = torch::relu(bn_forward(stem_bn_, stem_->forward(x), mode));
  x = torch::max_pool2d(x, 3, 2, 1);
  for (auto& st : stages_) {
    auto y = torch::relu(bn_forward(st.bn1, st.conv1->forward(x), mode));
    y = bn_forward(st.bn2, st.conv2->forward(y), mode);
    auto shortcut = st.down_conv ? bn_forward(st.down_bn, st.down_conv->forward(x), mode) : x;
    x = torch::relu(y + shortcut);
  }
  return x.mean({2, 3});
}

std::shared_ptr<Encoder> ResNet18Encoder::clone_encoder() const {
  auto copy = std::make_shared<ResNet18Encoder>(in_channels_);
  copy->copy_weights_from(*this);
  return copy;
}

Classifier::Classifier(int64_t embedding_dim, int64_t num_classes) {
  linear_ = register_module("linear", torch::nn::Linear(embedding_dim, num_classes));
}

torch::Tensor Classifier::forward(const torch::Tensor& features) {
  return linear_->forward(features);
}

RelationMetric::RelationMetric(int64_t embedding_dim) : dim_(embedding_dim) {
  fc1_ = register_module("fc1", torch::nn::Linear(2 * dim_, dim_));
  fc2_ = register_module("fc2", torch::nn::Linear(dim_, 1));
}

torch::Tensor RelationMetric::forward(const torch::Tensor& pairs) {
  return fc2_->forward(torch::relu(fc1_->forward(pairs))).squeeze(-1);
}

std::shared_ptr<Encoder> make_encoder(const EncoderConfig& enc) {
  if (enc.backbone == "conv4") {
    return std::make_shared<Conv4Encoder>(enc.channels, enc.blocks, enc.stem_stride);
  }
  if (enc.backbone == "resnet18") {
    return std::make_shared<ResNet18Encoder>();
  }
  throw ConfigError("unknown backbone '" + enc.backbone + "'");
}

ModelState ModelState::make(const EncoderConfig& enc, const std::string& metric,
                            int64_t num_classes, uint64_t seed) {
  // All weight init flows from the global generator; fixing it here makes
  // construction reproducible for a given seed.
  torch::manual_seed(derive_seed(seed, "model"));
  ModelState m;
  m.similarity_encoder = make_encoder(enc);
  m.emotion_encoder = m.similarity_encoder;
  m.classifier = std::make_shared<Classifier>(m.similarity_encoder->embedding_dim(), num_classes);
  if (metric == "relation") {
    m.relation = std::make_shared<RelationMetric>(m.similarity_encoder->embedding_dim());
  }
  m.split = false;
  return m;
}

void ModelState::split_shared() {
  if (split) {
    TORCH_WARN("split_shared called on an already-split model; ignoring");
    return;
  }
  emotion_encoder = similarity_encoder->clone_encoder();
  split = true;
}

}  // namespace egsnet
