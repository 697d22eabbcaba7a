#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "support/fixtures.hpp"
#include "vibes/io.hpp"

namespace vibes {
namespace {

using testing::TempDir;

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string registry_line(const std::string& id, int params = 1000, int dim = 8) {
  return R"({"id": ")" + id + R"(", "param_count": )" + std::to_string(params) +
         R"(, "pretrain_dataset": "imagenet-1k", "pretrain_dataset_size": 1281167, "feature_dim": )" +
         std::to_string(dim) + R"(, "source": "timm"})" + "\n";
}

template <typename Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

TEST(LoadRegistry, KeepsFileOrder) {
  TempDir tmp;
  write_text(tmp.path() / "r.jsonl", registry_line("zeta") + registry_line("alpha") + registry_line("mid"));
  const auto reg = load_registry(tmp.path() / "r.jsonl");
  ASSERT_EQ(reg.size(), 3u);
  EXPECT_EQ(reg.backbones()[0].id, "zeta");
  EXPECT_EQ(reg.backbones()[1].id, "alpha");
  EXPECT_EQ(reg.backbones()[2].id, "mid");
  EXPECT_EQ(reg.backbones()[0].pretrain_dataset_size, 1281167);
}

TEST(LoadRegistry, DuplicateIdNamed) {
  TempDir tmp;
  write_text(tmp.path() / "r.jsonl", registry_line("resnet50.a1") + registry_line("resnet50.a1"));
  const auto msg = error_of([&] { load_registry(tmp.path() / "r.jsonl"); });
  EXPECT_NE(msg.find("duplicate"), std::string::npos);
  EXPECT_NE(msg.find("resnet50.a1"), std::string::npos);
}

TEST(LoadRegistry, EmptyFile) {
  TempDir tmp;
  write_text(tmp.path() / "r.jsonl", "");
  EXPECT_EQ(error_of([&] { load_registry(tmp.path() / "r.jsonl"); }), "empty registry");
}

TEST(LoadRegistry, MalformedLineReportsLineNumber) {
  TempDir tmp;
  write_text(tmp.path() / "r.jsonl", registry_line("a") + "{not json\n");
  EXPECT_NE(error_of([&] { load_registry(tmp.path() / "r.jsonl"); }).find("r.jsonl:2"), std::string::npos);
  write_text(tmp.path() / "r.jsonl", registry_line("a") + registry_line("b", 0));
  EXPECT_NE(error_of([&] { load_registry(tmp.path() / "r.jsonl"); }).find(":2: param_count"), std::string::npos);
}

TEST(LoadRegistry, MissingFile) {
  EXPECT_THROW(load_registry("/nonexistent/registry.jsonl"), DataError);
}

class TraceFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    std::string lines;
    for (int i = 0; i < 5; ++i) lines += registry_line("b" + std::to_string(i));
    write_text(tmp.path() / "r.jsonl", lines);
    registry = load_registry(tmp.path() / "r.jsonl");
  }
  static std::string entry(const std::string& id, const std::string& tau, const std::string& val,
                           const std::string& ev = "logreg") {
    return R"({"backbone_id": ")" + id + R"(", "evaluator": ")" + ev + R"(", "tau_seconds": )" + tau +
           R"(, "val_metric": )" + val + R"(, "test_metric": 0.5})" + "\n";
  }
  TempDir tmp;
  Registry registry;
};

TEST_F(TraceFiles, LoadsEntries) {
  std::string lines;
  for (int i = 0; i < 5; ++i) lines += entry("b" + std::to_string(i), "12.5", "0.7");
  write_text(tmp.path() / "t.jsonl", lines);
  const auto trace = load_trace(tmp.path() / "t.jsonl", registry);
  ASSERT_EQ(trace.entries.size(), 5u);
  EXPECT_EQ(trace.entries[3].backbone_id, "b3");
  EXPECT_DOUBLE_EQ(trace.entries[3].tau_seconds, 12.5);
}

TEST_F(TraceFiles, RejectsBadEntries) {
  write_text(tmp.path() / "t.jsonl", entry("b0", "1", "1.2"));
  EXPECT_NE(error_of([&] { load_trace(tmp.path() / "t.jsonl", registry); }).find("val_metric"), std::string::npos);
  write_text(tmp.path() / "t.jsonl", entry("b0", "0", "0.5"));
  EXPECT_NE(error_of([&] { load_trace(tmp.path() / "t.jsonl", registry); }).find("tau_seconds"), std::string::npos);
  write_text(tmp.path() / "t.jsonl", entry("b9", "1", "0.5"));
  EXPECT_NE(error_of([&] { load_trace(tmp.path() / "t.jsonl", registry); }).find("unknown backbone_id"),
            std::string::npos);
  write_text(tmp.path() / "t.jsonl", entry("b0", "1", "0.5") + entry("b0", "2", "0.6"));
  EXPECT_NE(error_of([&] { load_trace(tmp.path() / "t.jsonl", registry); }).find("duplicate"), std::string::npos);
  write_text(tmp.path() / "t.jsonl", entry("b0", "1", "0.5", "svm"));
  EXPECT_NE(error_of([&] { load_trace(tmp.path() / "t.jsonl", registry); }).find("unknown evaluator"),
            std::string::npos);
}

TEST_F(TraceFiles, SameBackboneDifferentEvaluatorsAllowed) {
  write_text(tmp.path() / "t.jsonl", entry("b0", "1", "0.5") + entry("b0", "0.1", "0.4", "nearest_centroid"));
  EXPECT_EQ(load_trace(tmp.path() / "t.jsonl", registry).entries.size(), 2u);
}

FeatureCache small_cache(std::int32_t classes = 2, std::size_t dim = 8) {
  FeatureCache c;
  c.backbone_id = "b0";
  c.feature_dim = static_cast<std::int64_t>(dim);
  c.class_count = classes;
  auto fill = [&](Split& s, std::size_t rows) {
    for (std::size_t i = 0; i < rows; ++i) {
      s.labels.push_back(static_cast<std::int32_t>(i % static_cast<std::size_t>(classes)));
      for (std::size_t j = 0; j < dim; ++j) s.features.push_back(static_cast<float>(i) * 0.5f - static_cast<float>(j));
    }
  };
  fill(c.train, 20);
  fill(c.val, 10);
  fill(c.test, 10);
  return c;
}

class CacheFiles : public TraceFiles {};

TEST_F(CacheFiles, LoadsCache) {
  write_feature_cache(tmp.path() / "b0", small_cache());
  const auto cache = load_feature_cache(tmp.path() / "b0", registry);
  EXPECT_EQ(cache.feature_dim, 8);
  EXPECT_EQ(cache.train.rows(), 20u);
  EXPECT_EQ(cache.val.rows(), 10u);
  EXPECT_EQ(cache, small_cache());
}

TEST_F(CacheFiles, BinaryLengthDisagreesWithMetadata) {
  // Seven-wide matrices under metadata claiming eight.
  auto cache = small_cache(2, 7);
  cache.feature_dim = 7;
  write_feature_cache(tmp.path() / "b0", cache);
  auto meta = json::parse(read_text_file(tmp.path() / "b0" / "meta.json"));
  meta["feature_dim"] = 8;
  write_text(tmp.path() / "b0" / "meta.json", meta.dump());
  EXPECT_NE(error_of([&] { load_feature_cache(tmp.path() / "b0", registry); }).find("dimension mismatch"),
            std::string::npos);
}

TEST_F(CacheFiles, DimensionMustMatchRegistry) {
  auto cache = small_cache(2, 7);
  write_feature_cache(tmp.path() / "b0", cache);
  EXPECT_NE(error_of([&] { load_feature_cache(tmp.path() / "b0", registry); }).find("dimension mismatch"),
            std::string::npos);
}

TEST_F(CacheFiles, ClassAbsentFromTrain) {
  auto cache = small_cache(3);
  write_feature_cache(tmp.path() / "b0", cache);
  // labels {0,0,2,2}: class 1 missing.
  const std::vector<std::int32_t> labels{0, 0, 2, 2};
  auto meta = json::parse(read_text_file(tmp.path() / "b0" / "meta.json"));
  meta["splits"]["train"] = 4;
  write_text(tmp.path() / "b0" / "meta.json", meta.dump());
  write_text(tmp.path() / "b0" / "train.labels.bin", detail::to_le_bytes(labels));
  write_text(tmp.path() / "b0" / "train.features.bin", detail::to_le_bytes(std::vector<float>(4 * 8, 1.0f)));
  EXPECT_NE(error_of([&] { load_feature_cache(tmp.path() / "b0", registry); }).find("class 1 absent from train"),
            std::string::npos);
}

TEST_F(CacheFiles, LabelOutOfRange) {
  write_feature_cache(tmp.path() / "b0", small_cache());
  std::vector<std::int32_t> labels(10, 0);
  labels[3] = 2;
  write_text(tmp.path() / "b0" / "val.labels.bin", detail::to_le_bytes(labels));
  EXPECT_NE(error_of([&] { load_feature_cache(tmp.path() / "b0", registry); }).find("out of range"),
            std::string::npos);
}

TEST(Binary, LittleEndianLayout) {
  const auto bytes = detail::to_le_bytes(std::vector<std::int32_t>{1, -2});
  const std::string expected("\x01\x00\x00\x00\xfe\xff\xff\xff", 8);
  EXPECT_EQ(bytes, expected);
  EXPECT_EQ(detail::to_le_bytes(std::vector<float>{1.0f}), std::string("\x00\x00\x80\x3f", 4));
}

// Write then load reproduces random valid values.
TEST(RoundTrip, RandomRegistriesTracesAndCaches) {
  std::mt19937_64 gen(31337);
  TempDir tmp;
  for (int trial = 0; trial < 40; ++trial) {
    const auto reg = testing::random_registry(gen, 1 + gen() % 20);
    write_registry(tmp.path() / "r.jsonl", reg);
    const auto loaded = load_registry(tmp.path() / "r.jsonl");
    ASSERT_EQ(loaded, reg);

    EvalTrace trace;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& b : reg.backbones())
      for (const auto e : kAllEvaluators)
        if (gen() % 2) trace.entries.push_back({b.id, e, 1e-3 + 100 * unit(gen), unit(gen), unit(gen)});
    write_trace(tmp.path() / "t.jsonl", trace);
    ASSERT_EQ(load_trace(tmp.path() / "t.jsonl", reg), trace);

    const auto& record = reg.backbones()[gen() % reg.size()];
    FeatureCache cache;
    cache.backbone_id = record.id;
    cache.feature_dim = record.feature_dim;
    cache.class_count = static_cast<std::int32_t>(1 + gen() % 4);
    for (Split* s : {&cache.train, &cache.val, &cache.test}) {
      const std::size_t rows = cache.class_count + gen() % 6;
      for (std::size_t i = 0; i < rows; ++i) {
        s->labels.push_back(static_cast<std::int32_t>(i % static_cast<std::size_t>(cache.class_count)));
        for (std::int64_t j = 0; j < cache.feature_dim; ++j)
          s->features.push_back(static_cast<float>(testing::gaussian(gen) * 1e3));
      }
    }
    write_feature_cache(tmp.path() / "cache", cache);
    ASSERT_EQ(load_feature_cache(tmp.path() / "cache", reg), cache);
  }
}

}  // namespace
}  // namespace vibes
