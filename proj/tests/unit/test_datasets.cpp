#include <fstream>
#include <set>

#include "testing.hpp"
#include "egsnet/datasets.hpp"
#include "egsnet/errors.hpp"
#include "test_util.hpp"

using namespace egsnet;

namespace {

SyntheticConfig small_suite() {
  SyntheticConfig cfg;
  cfg.num_basic_classes = 5;
  cfg.num_compound_classes = 4;
  cfg.num_source_domains = 2;
  cfg.image_side = 16;
  cfg.samples_per_class = 6;
  cfg.domain_shift_strength = 0.8;
  cfg.noise_std = 0.2;
  cfg.seed = 21;
  return cfg;
}

Domain make_domain(std::string id, torch::Tensor images, std::vector<int64_t> labels,
                   std::vector<std::string> names) {
  Domain d;
  d.id = std::move(id);
  d.images = std::move(images);
  d.labels = torch::tensor(labels, torch::kInt64);
  d.class_names = std::move(names);
  d.build_class_indices();
  return d;
}

// Snap pixels to the 8-bit grid, reproducing the loader's u8 -> float scaling
// (multiply by the rounded reciprocal) so PNG round trips are bit-exact.
void quantize(Domain& d) {
  d.images = (d.images * 255.0f).round() * (1.0f / 255.0f);
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("suite shape: domains, counts, labels, names") {
  auto cfg = small_suite();
  auto reg = generate_synthetic_suite(cfg);

  REQUIRE(reg.source_domains.size() == 2);
  for (const auto& d : reg.source_domains) {
    CHECK(d.num_classes() == 5);
    CHECK(d.size() == 5 * 6);
    CHECK((d.images.sizes() == torch::IntArrayRef({30, 3, 16, 16})));
    CHECK((d.class_names == std::vector<std::string>{"b00", "b01", "b02", "b03", "b04"}));
  }
  CHECK(reg.target_domain.num_classes() == 9);
  CHECK(reg.target_domain.size() == 9 * 6);
  CHECK((reg.target_domain.class_names ==
        std::vector<std::string>{"b00", "b01", "b02", "b03", "b04", "c00_01", "c00_02", "c00_03",
                                 "c00_04"}));

  // basic/compound partition the target label space and stay disjoint
  CHECK((reg.target_basic_labels == std::set<int64_t>{0, 1, 2, 3, 4}));
  CHECK((reg.target_compound_labels == std::set<int64_t>{5, 6, 7, 8}));

  // one unified space across sources with identical class sets
  CHECK(reg.unified_class_names == reg.source_domains[0].class_names);
  CHECK((reg.source_to_unified[1] == std::vector<int64_t>{0, 1, 2, 3, 4}));

  // pixels in range
  CHECK(reg.target_domain.images.min().item<float>() >= 0.0f);
  CHECK(reg.target_domain.images.max().item<float>() <= 1.0f);
}

TEST_CASE("compound classes are the half/half composition of their parents") {
  auto cfg = small_suite();
  cfg.domain_shift_strength = 0.0;  // identity shift
  cfg.noise_std = 0.0;              // samples equal the prototype
  auto reg = generate_synthetic_suite(cfg);
  const int64_t side = cfg.image_side;

  // with no shift and no noise, every sample of a class equals its prototype
  auto sample_of = [&](const Domain& d, int64_t cls) {
    return d.images[d.class_indices[static_cast<size_t>(cls)][0]];
  };
  auto src0 = sample_of(reg.source_domains[0], 3);
  auto src1 = sample_of(reg.source_domains[1], 3);
  CHECK(torch::equal(src0, src1));
  auto tgt_basic = sample_of(reg.target_domain, 3);
  CHECK(torch::equal(src0, tgt_basic));

  // compound label 5 is the pair (b00, b01): left half from 0, right from 1
  using torch::indexing::Slice;
  auto left = [&](const torch::Tensor& t) { return t.index({Slice(), Slice(), Slice(0, side / 2)}); };
  auto right = [&](const torch::Tensor& t) {
    return t.index({Slice(), Slice(), Slice(side / 2, side)});
  };
  auto compound = sample_of(reg.target_domain, 5);
  CHECK(torch::equal(left(compound), left(sample_of(reg.target_domain, 0))));
  CHECK(torch::equal(right(compound), right(sample_of(reg.target_domain, 1))));
  CHECK_FALSE(torch::equal(left(compound), left(sample_of(reg.target_domain, 1))));
}

TEST_CASE("generation is bitwise deterministic in the seed") {
  auto cfg = small_suite();
  auto a = generate_synthetic_suite(cfg);
  auto b = generate_synthetic_suite(cfg);
  CHECK(torch::equal(a.target_domain.images, b.target_domain.images));
  CHECK(torch::equal(a.source_domains[0].images, b.source_domains[0].images));
  CHECK(torch::equal(a.source_domains[1].labels, b.source_domains[1].labels));

  cfg.seed = 22;
  auto c = generate_synthetic_suite(cfg);
  CHECK_FALSE(torch::equal(a.target_domain.images, c.target_domain.images));
}

TEST_CASE("domain shift separates domains; strength zero removes it") {
  auto cfg = small_suite();
  cfg.noise_std = 0.0;
  auto shifted = generate_synthetic_suite(cfg);
  auto s0 = shifted.source_domains[0].images[0];
  auto s1 = shifted.source_domains[1].images[0];
  CHECK_FALSE(torch::equal(s0, s1));  // same class, different domain look

  cfg.domain_shift_strength = 0.0;
  auto flat = generate_synthetic_suite(cfg);
  CHECK(torch::equal(flat.source_domains[0].images, flat.source_domains[1].images));
}

TEST_CASE("noise makes samples of one class distinct but label-consistent") {
  auto cfg = small_suite();
  auto reg = generate_synthetic_suite(cfg);
  const auto& d = reg.source_domains[0];
  CHECK_FALSE(torch::equal(d.images[d.class_indices[0][0]], d.images[d.class_indices[0][1]]));
}

TEST_CASE("pair capacity precondition") {
  auto cfg = small_suite();
  cfg.num_compound_classes = 10;  // C(5,2) = 10 still fits
  CHECK_NOTHROW(generate_synthetic_suite(cfg));
  cfg.num_compound_classes = 11;
  CHECK_THROWS_WITH_AS(generate_synthetic_suite(cfg), doctest::Contains("11"), ConfigError);
}

TEST_CASE("split_target relabels contiguously and maps back") {
  auto reg = generate_synthetic_suite(small_suite());
  TargetSplit split = split_target(reg);

  CHECK(split.basic.num_classes() == 5);
  CHECK(split.compound.num_classes() == 4);
  CHECK(split.basic.size() + split.compound.size() == reg.target_domain.size());
  CHECK((split.compound.class_names ==
        std::vector<std::string>{"c00_01", "c00_02", "c00_03", "c00_04"}));

  // labels are 0..C-1 within each side, and map back to the original space
  CHECK(split.compound.labels.min().item<int64_t>() == 0);
  CHECK(split.compound.labels.max().item<int64_t>() == 3);
  CHECK((split.compound_to_target == std::vector<int64_t>{5, 6, 7, 8}));
  CHECK((split.basic_to_target == std::vector<int64_t>{0, 1, 2, 3, 4}));

  // sample content is preserved: first compound-split image equals the first
  // target image whose label is compound
  auto lacc = reg.target_domain.labels.accessor<int64_t, 1>();
  int64_t first = -1;
  for (int64_t i = 0; i < reg.target_domain.size(); ++i) {
    if (lacc[i] >= 5) {
      first = i;
      break;
    }
  }
  REQUIRE(first >= 0);
  CHECK(torch::equal(split.compound.images[0], reg.target_domain.images[first]));

  DomainRegistry empty_side = reg;
  empty_side.target_compound_labels.clear();
  for (int64_t l = 5; l < 9; ++l) empty_side.target_basic_labels.insert(l);
  CHECK_THROWS_WITH_AS(split_target(empty_side), doctest::Contains("compound"), DataError);
}

TEST_CASE("registry invariants: overlap and coverage violations are rejected") {
  auto reg = generate_synthetic_suite(small_suite());
  auto overlap = reg;
  overlap.target_compound_labels.insert(0);  // 0 is basic
  CHECK_THROWS_AS(overlap.finalize(), DataError);

  auto uncovered = reg;
  uncovered.target_compound_labels.erase(8);
  CHECK_THROWS_AS(uncovered.finalize(), DataError);
}

TEST_CASE("unified space is the sorted union of distinct source class sets") {
  auto imgs = torch::rand({4, 3, 8, 8});
  DomainRegistry reg;
  reg.source_domains.push_back(
      make_domain("a", imgs, {0, 0, 1, 1}, {"happy", "sad"}));
  reg.source_domains.push_back(
      make_domain("b", imgs, {0, 0, 1, 1}, {"angry", "happy"}));
  reg.target_domain = make_domain("t", imgs, {0, 1, 0, 1}, {"angry", "sad"});
  reg.target_basic_labels = {0, 1};
  reg.finalize();

  CHECK((reg.unified_class_names == std::vector<std::string>{"angry", "happy", "sad"}));
  CHECK((reg.source_to_unified[0] == std::vector<int64_t>{1, 2}));  // happy, sad
  CHECK((reg.source_to_unified[1] == std::vector<int64_t>{0, 1}));  // angry, happy
}

TEST_CASE("domain validation rejects malformed collections") {
  auto imgs = torch::rand({2, 3, 8, 8});

  auto bad_pixels = make_domain("d", imgs * 2.0f, {0, 1}, {"a", "b"});
  CHECK_THROWS_WITH_AS(bad_pixels.validate(), doctest::Contains("pixel"), DataError);

  CHECK_THROWS_AS(make_domain("d", imgs, {0, 2}, {"a", "b"}), DataError);  // label range

  auto dup = make_domain("d", imgs, {0, 1}, {"a", "a"});
  CHECK_THROWS_WITH_AS(dup.validate(), doctest::Contains("duplicate"), DataError);

  auto gap = make_domain("d", imgs, {1, 1}, {"a", "b"});
  CHECK_THROWS_WITH_AS(gap.validate(), doctest::Contains("no samples"), DataError);
}

TEST_CASE("image-folder round trip preserves quantized pixels and labels") {
  auto cfg = small_suite();
  cfg.samples_per_class = 3;
  auto reg = generate_synthetic_suite(cfg);
  Domain d = reg.source_domains[0];
  quantize(d);

  test::ScopedTempDir tmp("folder");
  dump_domain(d, tmp.str("dom"));
  Domain back = load_image_folder(tmp.str("dom"), cfg.image_side);

  CHECK(back.class_names == d.class_names);
  CHECK(torch::equal(back.labels, d.labels));
  CHECK(torch::equal(back.images, d.images));
}

TEST_CASE("loader errors name the offending class or file") {
  test::ScopedTempDir tmp("loader");
  std::filesystem::create_directories(tmp.str("root/ok"));
  std::filesystem::create_directories(tmp.str("root/hollow"));
  {
    Domain one = make_domain("one", torch::rand({1, 3, 8, 8}), {0}, {"x"});
    quantize(one);
    dump_domain(one, tmp.str("root_tmp"));
    std::filesystem::rename(tmp.str("root_tmp/x/00000.png"), tmp.str("root/ok/00000.png"));
  }
  CHECK_THROWS_WITH_AS(load_image_folder(tmp.str("root"), 8), doctest::Contains("hollow"),
                       DataError);

  std::filesystem::remove(tmp.str("root/hollow"));
  {
    std::ofstream fake(tmp.str("root/ok/fake.png"));
    fake << "not an image";
  }
  CHECK_THROWS_WITH_AS(load_image_folder(tmp.str("root"), 8), doctest::Contains("fake.png"),
                       DataError);

  CHECK_THROWS_AS(load_image_folder(tmp.str("nowhere"), 8), DataError);
}

TEST_CASE("manifest mode: labels, header skip, and malformed rows") {
  // lay out six images in one flat folder via a dumped single-class domain
  Domain six = make_domain("six", torch::rand({6, 3, 8, 8}),
                           {0, 0, 0, 0, 0, 0}, {"x"});
  quantize(six);
  test::ScopedTempDir tmp("manifest");
  dump_domain(six, tmp.str("root"));

  auto img = [&](int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "x/%05d.png", i);
    return std::string(buf);
  };

  {
    std::ofstream out(tmp.str("root/list.csv"));
    out << "relative_path,label\n";  // header row is tolerated
    for (int i = 0; i < 5; ++i) out << img(i) << "," << i << "\n";
    out << img(5) << ",5\n";
  }
  Domain d = load_image_folder(tmp.str("root"), 8, tmp.str("root/list.csv"));
  CHECK(d.num_classes() == 6);  // labels 0..5 -> six class names
  CHECK(d.size() == 6);
  CHECK(d.labels[5].item<int64_t>() == 5);
  CHECK(d.class_names[5] == "5");

  {
    std::ofstream out(tmp.str("root/bad.csv"));
    out << img(0) << ",0\n";        // valid first row: the header amnesty must not apply below
    out << img(1) << ",zero\n";
  }
  CHECK_THROWS_WITH_AS(load_image_folder(tmp.str("root"), 8, tmp.str("root/bad.csv")),
                       doctest::Contains("not an integer"), DataError);

  {
    std::ofstream out(tmp.str("root/neg.csv"));
    out << img(0) << ",-1\n";
  }
  CHECK_THROWS_AS(load_image_folder(tmp.str("root"), 8, tmp.str("root/neg.csv")), DataError);
}

TEST_CASE("registry dump/load round trip") {
  auto cfg = small_suite();
  cfg.samples_per_class = 3;
  auto reg = generate_synthetic_suite(cfg);
  for (auto& d : reg.source_domains) quantize(d);
  quantize(reg.target_domain);
  for (auto& d : reg.source_domains) d.build_class_indices();
  reg.target_domain.build_class_indices();

  test::ScopedTempDir tmp("registry");
  dump_registry(reg, tmp.str());
  auto back = load_registry(tmp.str(), cfg.image_side);

  REQUIRE(back.source_domains.size() == reg.source_domains.size());
  for (size_t j = 0; j < reg.source_domains.size(); ++j) {
    CHECK(torch::equal(back.source_domains[j].images, reg.source_domains[j].images));
    CHECK(torch::equal(back.source_domains[j].labels, reg.source_domains[j].labels));
    CHECK(back.source_domains[j].class_names == reg.source_domains[j].class_names);
  }
  CHECK(torch::equal(back.target_domain.images, reg.target_domain.images));
  CHECK(back.target_basic_labels == reg.target_basic_labels);
  CHECK(back.target_compound_labels == reg.target_compound_labels);
  CHECK(back.unified_class_names == reg.unified_class_names);

  CHECK_THROWS_AS(load_registry(tmp.str("missing"), cfg.image_side), DataError);
}

}  // TEST_SUITE
