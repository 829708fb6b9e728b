#pragma once

#include <torch/torch.h>

#include <set>
#include <string>
#include <vector>

#include "egsnet/config.hpp"

namespace egsnet {

// A labeled image collection with a contiguous class label space.
// Immutable after construction; safe to share across threads.
struct Domain {
  std::string id;
  torch::Tensor images;  // M x C x H x W, float32 in [0,1]
  torch::Tensor labels;  // M, int64 in [0, num_classes)
  std::vector<std::string> class_names;
  std::vector<std::vector<int64_t>> class_indices;  // per class, ascending sample indices

  int64_t size() const { return images.size(0); }
  int64_t num_classes() const { return static_cast<int64_t>(class_names.size()); }
  int64_t image_side() const { return images.size(2); }

  void build_class_indices();
  // Checks the type invariants: label range, non-empty classes, [0,1] pixels.
  void validate() const;
};

struct DomainRegistry {
  std::vector<Domain> source_domains;
  Domain target_domain;
  std::set<int64_t> target_basic_labels;
  std::set<int64_t> target_compound_labels;

  // Unified basic label space: sorted union of source class names.
  std::vector<std::string> unified_class_names;
  std::vector<std::vector<int64_t>> source_to_unified;  // [source][domain label] -> unified label

  int64_t num_unified_classes() const { return static_cast<int64_t>(unified_class_names.size()); }
  // Builds the unified space and verifies the registry invariants.
  void finalize();
};

struct TargetSplit {
  Domain basic;
  Domain compound;
  std::vector<int64_t> basic_to_target;     // subset label -> original target label
  std::vector<int64_t> compound_to_target;  // subset label -> original target label
};

// Loads a `<class_name>/<image files>` directory, or a `relative_path,label`
// CSV manifest rooted at `path`. Images are resized to image_side.
Domain load_image_folder(const std::string& path, int64_t image_side,
                         const std::string& manifest_csv = "");

// Procedural basic/compound benchmark: J source domains with basic classes
// only, one target domain with basic + compound classes under a fresh shift.
DomainRegistry generate_synthetic_suite(const SyntheticConfig& cfg);

// Partitions the target domain by the basic/compound label sets, re-indexing
// labels contiguously and retaining the mapping back to target labels.
TargetSplit split_target(const DomainRegistry& registry);

// Image-folder dump/reload for inspection and CLI interchange.
void dump_domain(const Domain& domain, const std::string& dir);
void dump_registry(const DomainRegistry& registry, const std::string& dir);
DomainRegistry load_registry(const std::string& dir, int64_t image_side);

}  // namespace egsnet
