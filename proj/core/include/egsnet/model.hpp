#pragma once

#include <torch/torch.h>

#include <memory>
#include <string>
#include <vector>

#include "egsnet/config.hpp"

namespace egsnet {

// Batch-norm handling for the three ways a branch is run:
//  Train     - batch statistics, running buffers updated (learning branch)
//  Eval      - running statistics, nothing updated (inference)
//  FrozenRef - batch statistics, running buffers untouched (a frozen branch
//              acting as the alignment reference: it must normalize the same
//              batch the same way as its just-split twin without drifting)
enum class ForwardMode { Train, Eval, FrozenRef };

class Encoder : public torch::nn::Module {
 public:
  ~Encoder() override = default;
  virtual torch::Tensor forward(const torch::Tensor& images, ForwardMode mode) = 0;
  virtual int64_t embedding_dim() const = 0;
  virtual std::string arch_id() const = 0;
  virtual std::shared_ptr<Encoder> clone_encoder() const = 0;

  // Copies every parameter and buffer value from an identically-shaped encoder.
  void copy_weights_from(const Encoder& other);

 protected:
  // Input standardization lives in the encoder: datasets hand over raw [0,1]
  // pixels, and the constants ride along in checkpoints as buffers.
  void register_standardization(int64_t in_channels);
  torch::Tensor standardize(const torch::Tensor& images) const;

  torch::Tensor input_mean_, input_std_;
};

// Stack of conv3x3 + batch-norm + ReLU blocks, 2x max-pool after every block
// but the last, global average pool to a `channels`-dim embedding. The first
// conv optionally uses stride 2.
class Conv4Encoder : public Encoder {
 public:
  Conv4Encoder(int64_t channels, int64_t blocks, int64_t stem_stride, int64_t in_channels = 3);

  torch::Tensor forward(const torch::Tensor& images, ForwardMode mode) override;
  int64_t embedding_dim() const override { return channels_; }
  std::string arch_id() const override;
  std::shared_ptr<Encoder> clone_encoder() const override;

 private:
  int64_t channels_, blocks_, stem_stride_, in_channels_;
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<torch::nn::BatchNorm2d> bns_;
};

// Standard 18-layer residual network (7x7 stem, four stages of two basic
// blocks, global average pool), 512-dim embedding.
class ResNet18Encoder : public Encoder {
 public:
  explicit ResNet18Encoder(int64_t in_channels = 3);

  torch::Tensor forward(const torch::Tensor& images, ForwardMode mode) override;
  int64_t embedding_dim() const override { return 512; }
  std::string arch_id() const override { return "resnet18"; }
  std::shared_ptr<Encoder> clone_encoder() const override;

 private:
  struct Stage {
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, down_conv{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, down_bn{nullptr};
  };
  int64_t in_channels_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  std::vector<Stage> stages_;
};

// Linear head over the unified emotion label space.
class Classifier : public torch::nn::Module {
 public:
  Classifier(int64_t embedding_dim, int64_t num_classes);
  torch::Tensor forward(const torch::Tensor& features);
  int64_t num_classes() const { return linear_->options.out_features(); }

 private:
  torch::nn::Linear linear_{nullptr};
};

// Learned pair scorer for the relation metric: (2d -> d -> 1) MLP.
class RelationMetric : public torch::nn::Module {
 public:
  explicit RelationMetric(int64_t embedding_dim);
  torch::Tensor forward(const torch::Tensor& pairs);  // P x 2d -> P
  int64_t embedding_dim() const { return dim_; }

 private:
  int64_t dim_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};

// The trainable pieces. While the encoder is shared, `similarity` and
// `emotion` alias one object; split_shared() deep-copies so the two branches
// become independent students.
struct ModelState {
  std::shared_ptr<Encoder> similarity_encoder;
  std::shared_ptr<Encoder> emotion_encoder;
  std::shared_ptr<Classifier> classifier;
  std::shared_ptr<RelationMetric> relation;  // only for metric = relation
  bool split = false;

  static ModelState make(const EncoderConfig& enc, const std::string& metric,
                         int64_t num_classes, uint64_t seed);
  void split_shared();
  bool shared() const { return !split; }
};

std::shared_ptr<Encoder> make_encoder(const EncoderConfig& enc);

}  // namespace egsnet
