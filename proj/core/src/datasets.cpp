#include "egsnet/datasets.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "egsnet/errors.hpp"
#include "egsnet/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace egsnet {

void Domain::build_class_indices() {
  class_indices.assign(class_names.size(), {});
  auto acc = labels.accessor<int64_t, 1>();
  for (int64_t i = 0; i < labels.size(0); ++i) {
    int64_t l = acc[i];
    if (l < 0 || l >= num_classes()) {
      throw DataError("domain '" + id + "': label " + std::to_string(l) +
                      " outside [0, " + std::to_string(num_classes()) + ")");
    }
    class_indices[static_cast<size_t>(l)].push_back(i);
  }
}

void Domain::validate() const {
  if (!images.defined() || images.dim() != 4 || images.scalar_type() != torch::kFloat32) {
    throw DataError("domain '" + id + "': images must be a 4-d float tensor");
  }
  if (!labels.defined() || labels.dim() != 1 || labels.scalar_type() != torch::kInt64 ||
      labels.size(0) != images.size(0)) {
    throw DataError("domain '" + id + "': labels must be int64 with one entry per image");
  }
  if (class_names.empty() || images.size(0) == 0) {
    throw DataError("domain '" + id + "': no classes or no samples");
  }
  for (size_t i = 1; i < class_names.size(); ++i) {
    if (class_names[i] == class_names[i - 1]) {
      throw DataError("domain '" + id + "': duplicate class name '" + class_names[i] + "'");
    }
  }
  if (class_indices.size() != class_names.size()) {
    throw DataError("domain '" + id + "': class index table not built");
  }
  for (int64_t c = 0; c < num_classes(); ++c) {
    if (class_indices[static_cast<size_t>(c)].empty()) {
      throw DataError("domain '" + id + "': class '" + class_names[static_cast<size_t>(c)] +
                      "' has no samples");
    }
  }
  float lo = images.min().item<float>();
  float hi = images.max().item<float>();
  if (lo < 0.0f || hi > 1.0f) {
    throw DataError("domain '" + id + "': pixel values outside [0,1]");
  }
}

void DomainRegistry::finalize() {
  if (source_domains.empty()) throw DataError("registry has no source domains");
  std::set<std::string> names;
  for (auto& d : source_domains) {
    if (d.class_indices.empty()) d.build_class_indices();
    d.validate();
    names.insert(d.class_names.begin(), d.class_names.end());
  }
  if (target_domain.class_indices.empty()) target_domain.build_class_indices();
  target_domain.validate();

  unified_class_names.assign(names.begin(), names.end());
  source_to_unified.clear();
  for (const auto& d : source_domains) {
    std::vector<int64_t> map(d.class_names.size());
    for (size_t l = 0; l < d.class_names.size(); ++l) {
      auto it = std::lower_bound(unified_class_names.begin(), unified_class_names.end(),
                                 d.class_names[l]);
      map[l] = it - unified_class_names.begin();
    }
    source_to_unified.push_back(std::move(map));
  }

  // The basic/compound sets must partition the target label space.
  for (int64_t l : target_basic_labels) {
    if (target_compound_labels.count(l)) {
      throw DataError("target label " + std::to_string(l) + " is in both basic and compound sets");
    }
  }
  for (int64_t l = 0; l < target_domain.num_classes(); ++l) {
    if (!target_basic_labels.count(l) && !target_compound_labels.count(l)) {
      throw DataError("target label " + std::to_string(l) + " is in neither basic nor compound set");
    }
  }
  if (target_basic_labels.size() + target_compound_labels.size() !=
      static_cast<size_t>(target_domain.num_classes())) {
    throw DataError("basic/compound label sets refer to labels outside the target domain");
  }
}

namespace {

std::string basic_name(int64_t c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "b%02d", static_cast<int>(c));
  return buf;
}

std::string compound_name(int64_t a, int64_t b) {
  char buf[12];
  std::snprintf(buf, sizeof(buf), "c%02d_%02d", static_cast<int>(a), static_cast<int>(b));
  return buf;
}

// Deterministic per-class texture: gaussian blobs plus one oriented grating
// per channel, squashed into [0,1]. Depends only on (seed, class, side).
torch::Tensor basic_prototype(uint64_t seed, int64_t cls, int64_t side) {
  auto rng = make_stream(seed, "proto", static_cast<uint64_t>(cls));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto proto = torch::empty({3, side, side}, torch::kFloat32);
  auto acc = proto.accessor<float, 3>();
  for (int64_t ch = 0; ch < 3; ++ch) {
    struct Blob {
      double amp, cx, cy, s2;
    };
    Blob blobs[3];
    for (auto& b : blobs) {
      b.amp = -1.0 + 2.0 * unit(rng);
      b.cx = 0.15 + 0.7 * unit(rng);
      b.cy = 0.15 + 0.7 * unit(rng);
      double sigma = 0.10 + 0.20 * unit(rng);
      b.s2 = 2.0 * sigma * sigma;
    }
    double g_amp = 0.3 + 0.5 * unit(rng);
    double g_freq = 2.0 + 3.0 * unit(rng);
    double g_theta = M_PI * unit(rng);
    double g_phase = 2.0 * M_PI * unit(rng);
    double ct = std::cos(g_theta), st = std::sin(g_theta);
    for (int64_t r = 0; r < side; ++r) {
      double y = (r + 0.5) / static_cast<double>(side);
      for (int64_t c = 0; c < side; ++c) {
        double x = (c + 0.5) / static_cast<double>(side);
        double v = g_amp * std::sin(2.0 * M_PI * g_freq * (x * ct + y * st) + g_phase);
        for (const auto& b : blobs) {
          double dx = x - b.cx, dy = y - b.cy;
          v += b.amp * std::exp(-(dx * dx + dy * dy) / b.s2);
        }
        acc[ch][r][c] = static_cast<float>(std::clamp(0.5 + 0.45 * v, 0.0, 1.0));
      }
    }
  }
  return proto;
}

struct DomainShift {
  torch::Tensor mix;   // 3x3 channel mixing matrix
  torch::Tensor bias;  // 3 per-channel offsets
};

// Identity at strength 0; the RNG draws are consumed either way so the shift
// for a given (seed, domain index) does not depend on the strength.
DomainShift make_shift(uint64_t seed, uint64_t domain_index, double strength) {
  auto rng = make_stream(seed, "shift", domain_index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto mix = torch::eye(3, torch::kFloat32);
  auto macc = mix.accessor<float, 2>();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      macc[i][j] += static_cast<float>(strength * 0.4 * (2.0 * unit(rng) - 1.0));
    }
  }
  auto bias = torch::empty({3}, torch::kFloat32);
  auto bacc = bias.accessor<float, 1>();
  for (int i = 0; i < 3; ++i) {
    bacc[i] = static_cast<float>(strength * 0.25 * (2.0 * unit(rng) - 1.0));
  }
  return {mix, bias};
}

torch::Tensor apply_shift(const DomainShift& shift, const torch::Tensor& proto) {
  auto mixed = torch::einsum("ij,jhw->ihw", {shift.mix, proto}) + shift.bias.view({3, 1, 1});
  return mixed.clamp(0.0, 1.0);
}

// Noise stream keyed by (domain, class, sample) so every sample is
// reproducible in isolation, independent of generation order.
torch::Tensor noisy_sample(const torch::Tensor& shifted_proto, uint64_t seed,
                           uint64_t domain_index, int64_t label, int64_t k, double noise_std) {
  if (noise_std == 0.0) return shifted_proto.clone();
  uint64_t key = ((domain_index * 64 + static_cast<uint64_t>(label)) << 16) |
                 static_cast<uint64_t>(k);
  auto rng = make_stream(seed, "sample", key);
  std::normal_distribution<float> gauss(0.0f, static_cast<float>(noise_std));
  auto noise = torch::empty_like(shifted_proto);
  auto flat = noise.view({-1});
  auto acc = flat.accessor<float, 1>();
  for (int64_t i = 0; i < flat.size(0); ++i) acc[i] = gauss(rng);
  return (shifted_proto + noise).clamp(0.0, 1.0);
}

Domain assemble_domain(std::string id, std::vector<torch::Tensor> images,
                       std::vector<int64_t> labels, std::vector<std::string> class_names) {
  Domain d;
  d.id = std::move(id);
  d.images = torch::stack(images);
  d.labels = torch::tensor(labels, torch::kInt64);
  d.class_names = std::move(class_names);
  d.build_class_indices();
  d.validate();
  return d;
}

}  // namespace

DomainRegistry generate_synthetic_suite(const SyntheticConfig& cfg) {
  const int64_t nb = cfg.num_basic_classes;
  const int64_t nc = cfg.num_compound_classes;
  if (nb < 1) throw ConfigError("synthetic_num_basic_classes must be at least 1");
  const int64_t max_pairs = nb * (nb - 1) / 2;
  if (nc > max_pairs) {
    throw ConfigError("synthetic_num_compound_classes = " + std::to_string(nc) +
                      " exceeds the " + std::to_string(max_pairs) +
                      " unordered pairs available from " + std::to_string(nb) + " basic classes");
  }
  const uint64_t seed = cfg.seed;
  const int64_t side = cfg.image_side;
  const int64_t per_class = cfg.samples_per_class;

  std::vector<torch::Tensor> basic_protos;
  basic_protos.reserve(static_cast<size_t>(nb));
  for (int64_t c = 0; c < nb; ++c) basic_protos.push_back(basic_prototype(seed, c, side));

  // Compound prototypes: left half of one basic texture, right half of another,
  // pairs enumerated in lexicographic (a, b) order with a < b.
  std::vector<std::pair<int64_t, int64_t>> pairs;
  for (int64_t a = 0; a < nb && std::ssize(pairs) < nc; ++a) {
    for (int64_t b = a + 1; b < nb && std::ssize(pairs) < nc; ++b) pairs.emplace_back(a, b);
  }
  std::vector<torch::Tensor> compound_protos;
  for (auto [a, b] : pairs) {
    auto proto = basic_protos[static_cast<size_t>(a)].clone();
    proto.index_put_({torch::indexing::Slice(), torch::indexing::Slice(),
                      torch::indexing::Slice(side / 2, side)},
                     basic_protos[static_cast<size_t>(b)].index(
                         {torch::indexing::Slice(), torch::indexing::Slice(),
                          torch::indexing::Slice(side / 2, side)}));
    compound_protos.push_back(proto);
  }

  std::vector<std::string> basic_names;
  for (int64_t c = 0; c < nb; ++c) basic_names.push_back(basic_name(c));

  DomainRegistry reg;
  for (int64_t j = 0; j < cfg.num_source_domains; ++j) {
    auto shift = make_shift(seed, static_cast<uint64_t>(j), cfg.domain_shift_strength);
    std::vector<torch::Tensor> images;
    std::vector<int64_t> labels;
    for (int64_t c = 0; c < nb; ++c) {
      auto shifted = apply_shift(shift, basic_protos[static_cast<size_t>(c)]);
      for (int64_t k = 0; k < per_class; ++k) {
        images.push_back(
            noisy_sample(shifted, seed, static_cast<uint64_t>(j), c, k, cfg.noise_std));
        labels.push_back(c);
      }
    }
    char sid[16];
    std::snprintf(sid, sizeof(sid), "source_%02d", static_cast<int>(j));
    reg.source_domains.push_back(
        assemble_domain(sid, std::move(images), std::move(labels), basic_names));
  }

  // Target: basic classes first (sorted "b.." < "c.."), then compounds, under
  // a shift drawn independently of every source shift.
  const uint64_t target_index = static_cast<uint64_t>(cfg.num_source_domains);
  auto shift = make_shift(seed, target_index, cfg.domain_shift_strength);
  std::vector<std::string> target_names = basic_names;
  for (auto [a, b] : pairs) target_names.push_back(compound_name(a, b));
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  for (int64_t c = 0; c < nb + nc; ++c) {
    const auto& proto = c < nb ? basic_protos[static_cast<size_t>(c)]
                               : compound_protos[static_cast<size_t>(c - nb)];
    auto shifted = apply_shift(shift, proto);
    for (int64_t k = 0; k < per_class; ++k) {
      images.push_back(noisy_sample(shifted, seed, target_index, c, k, cfg.noise_std));
      labels.push_back(c);
    }
  }
  reg.target_domain =
      assemble_domain("target", std::move(images), std::move(labels), std::move(target_names));
  for (int64_t c = 0; c < nb; ++c) reg.target_basic_labels.insert(c);
  for (int64_t c = nb; c < nb + nc; ++c) reg.target_compound_labels.insert(c);
  reg.finalize();
  return reg;
}

TargetSplit split_target(const DomainRegistry& registry) {
  auto subset = [&](const std::set<int64_t>& labels, const char* tag) {
    if (labels.empty()) {
      throw DataError(std::string("target ") + tag + " label set is empty; nothing to evaluate");
    }
    std::vector<int64_t> order(labels.begin(), labels.end());
    const Domain& t = registry.target_domain;
    std::vector<int64_t> keep;
    std::vector<int64_t> new_labels;
    auto lacc = t.labels.accessor<int64_t, 1>();
    for (int64_t i = 0; i < t.size(); ++i) {
      auto it = std::lower_bound(order.begin(), order.end(), lacc[i]);
      if (it != order.end() && *it == lacc[i]) {
        keep.push_back(i);
        new_labels.push_back(it - order.begin());
      }
    }
    Domain d;
    d.id = t.id + "/" + tag;
    d.images = t.images.index_select(0, torch::tensor(keep, torch::kInt64));
    d.labels = torch::tensor(new_labels, torch::kInt64);
    for (int64_t l : order) d.class_names.push_back(t.class_names[static_cast<size_t>(l)]);
    d.build_class_indices();
    d.validate();
    return std::make_pair(std::move(d), std::move(order));
  };
  TargetSplit split;
  std::tie(split.basic, split.basic_to_target) = subset(registry.target_basic_labels, "basic");
  std::tie(split.compound, split.compound_to_target) =
      subset(registry.target_compound_labels, "compound");
  return split;
}

namespace {

torch::Tensor load_one_image(const fs::path& file, int64_t side) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image '" + file.string() + "'");
  cv::Mat resized;
  if (bgr.rows != side || bgr.cols != side) {
    cv::resize(bgr, resized, cv::Size(static_cast<int>(side), static_cast<int>(side)), 0, 0,
               cv::INTER_AREA);
  } else {
    resized = bgr;
  }
  cv::Mat rgb;
  cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
  cv::Mat f;
  rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
  return torch::from_blob(f.data, {side, side, 3}, torch::kFloat32)
      .permute({2, 0, 1})
      .clone();
}

Domain load_from_subfolders(const fs::path& root, int64_t side) {
  std::vector<std::string> class_names;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) class_names.push_back(e.path().filename().string());
  }
  if (class_names.empty()) {
    throw DataError("no class subdirectories under '" + root.string() + "'");
  }
  std::sort(class_names.begin(), class_names.end());
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  for (size_t c = 0; c < class_names.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(root / class_names[c])) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    if (files.empty()) {
      throw DataError("class directory '" + (root / class_names[c]).string() + "' is empty");
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      images.push_back(load_one_image(f, side));
      labels.push_back(static_cast<int64_t>(c));
    }
  }
  return assemble_domain(root.filename().string(), std::move(images), std::move(labels),
                         std::move(class_names));
}

Domain load_from_manifest(const fs::path& root, int64_t side, const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest '" + manifest.string() + "'");
  std::vector<std::pair<std::string, int64_t>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw DataError("manifest '" + manifest.string() + "' line " + std::to_string(line_no) +
                      ": expected 'relative_path,label'");
    }
    std::string path_part = line.substr(0, comma);
    std::string label_part = line.substr(comma + 1);
    try {
      size_t used = 0;
      int64_t label = std::stoll(label_part, &used);
      if (used != label_part.size()) throw std::invalid_argument(label_part);
      rows.emplace_back(path_part, label);
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header row
      throw DataError("manifest '" + manifest.string() + "' line " + std::to_string(line_no) +
                      ": label '" + label_part + "' is not an integer");
    }
  }
  if (rows.empty()) throw DataError("manifest '" + manifest.string() + "' lists no images");
  int64_t max_label = 0;
  for (const auto& [p, l] : rows) {
    if (l < 0) throw DataError("manifest '" + manifest.string() + "' has negative label for '" + p + "'");
    max_label = std::max(max_label, l);
  }
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  for (const auto& [p, l] : rows) {
    images.push_back(load_one_image(root / p, side));
    labels.push_back(l);
  }
  std::vector<std::string> class_names;
  for (int64_t l = 0; l <= max_label; ++l) class_names.push_back(std::to_string(l));
  return assemble_domain(root.filename().string(), std::move(images), std::move(labels),
                         std::move(class_names));
}

}  // namespace

Domain load_image_folder(const std::string& path, int64_t image_side,
                         const std::string& manifest_csv) {
  fs::path root(path);
  if (!fs::is_directory(root)) throw DataError("'" + path + "' is not a directory");
  if (manifest_csv.empty()) return load_from_subfolders(root, image_side);
  return load_from_manifest(root, image_side, fs::path(manifest_csv));
}

void dump_domain(const Domain& domain, const std::string& dir) {
  fs::create_directories(dir);
  auto acc = domain.labels.accessor<int64_t, 1>();
  std::vector<int64_t> written(domain.class_names.size(), 0);
  for (int64_t i = 0; i < domain.size(); ++i) {
    const auto& cname = domain.class_names[static_cast<size_t>(acc[i])];
    fs::path cls_dir = fs::path(dir) / cname;
    fs::create_directories(cls_dir);
    auto hwc = (domain.images[i].permute({1, 2, 0}).contiguous() * 255.0f)
                   .round()
                   .clamp(0, 255)
                   .to(torch::kUInt8);
    cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3,
                hwc.data_ptr<uint8_t>());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    char name[16];
    std::snprintf(name, sizeof(name), "%05d.png", static_cast<int>(written[acc[i]]++));
    if (!cv::imwrite((cls_dir / name).string(), bgr)) {
      throw DataError("cannot write image under '" + cls_dir.string() + "'");
    }
  }
}

void dump_registry(const DomainRegistry& registry, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["schema_version"] = 1;
  manifest["sources"] = json::array();
  for (size_t j = 0; j < registry.source_domains.size(); ++j) {
    char name[16];
    std::snprintf(name, sizeof(name), "source_%02d", static_cast<int>(j));
    dump_domain(registry.source_domains[j], (fs::path(dir) / name).string());
    manifest["sources"].push_back(name);
  }
  dump_domain(registry.target_domain, (fs::path(dir) / "target").string());
  manifest["target"] = "target";
  manifest["target_basic_labels"] = registry.target_basic_labels;
  manifest["target_compound_labels"] = registry.target_compound_labels;
  std::ofstream out(fs::path(dir) / "registry.json");
  out << manifest.dump(2) << "\n";
}

DomainRegistry load_registry(const std::string& dir, int64_t image_side) {
  std::ifstream in(fs::path(dir) / "registry.json");
  if (!in) throw DataError("no registry.json under '" + dir + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("malformed registry.json under '" + dir + "': " + e.what());
  }
  DomainRegistry reg;
  for (const auto& name : manifest.at("sources")) {
    reg.source_domains.push_back(
        load_image_folder((fs::path(dir) / name.get<std::string>()).string(), image_side));
  }
  reg.target_domain = load_image_folder(
      (fs::path(dir) / manifest.at("target").get<std::string>()).string(), image_side);
  for (int64_t l : manifest.at("target_basic_labels")) reg.target_basic_labels.insert(l);
  for (int64_t l : manifest.at("target_compound_labels")) reg.target_compound_labels.insert(l);
  reg.finalize();
  return reg;
}

}  // namespace egsnet
