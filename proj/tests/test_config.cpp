#include <gtest/gtest.h>

#include "fap/config.hpp"
#include "fap/error.hpp"

namespace fap {
namespace {

using nlohmann::json;

TEST(RunConfig, EmptyObjectTakesDefaults) {
  const RunConfig cfg = parse_run_config(json::object());
  EXPECT_EQ(cfg.name, "run");
  EXPECT_EQ(cfg.train.method, Method::fap);
  EXPECT_EQ(cfg.train.t_max, 5u);
  EXPECT_DOUBLE_EQ(cfg.train.p, 0.5);
  EXPECT_EQ(cfg.train.model.encoder.image_size, cfg.dataset.image_size);
  EXPECT_EQ(cfg.variants.size(), kAllVariants.size());
}

TEST(RunConfig, NestedKeysAreRead) {
  const json j = json::parse(R"({
    "name": "x", "beta": 0.5, "t_max": 2, "filter_pool": [1, 3],
    "model": {"widths": [4, 8], "head": "relation", "relation_hidden": 5},
    "dataset": {"image_size": 16, "channels": 3, "synthetic": {"seed": 9, "classes": {"num_classes": 6},
                "test_domain": {"class_amplitude": 0.5, "shuffle_class_textures": false}}},
    "eval": {"episodes": 7, "workers": 2},
    "probe": {"noise_sigma": 0.2, "variants": ["original", "noise"]}
  })");
  const RunConfig cfg = parse_run_config(j);
  EXPECT_DOUBLE_EQ(cfg.train.beta, 0.5);
  EXPECT_EQ(cfg.train.filter_pool, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(cfg.train.model.head, HeadKind::relation);
  EXPECT_EQ(cfg.train.model.encoder.channels, 3u);
  EXPECT_EQ(cfg.train.model.encoder.image_size, 16u);
  EXPECT_EQ(cfg.dataset.synthetic.classes.num_classes, 6u);
  EXPECT_FALSE(cfg.dataset.synthetic.test_domain.shuffle_class_textures);
  EXPECT_EQ(cfg.eval.workers, 2u);
  EXPECT_EQ(cfg.variants, (std::vector<Variant>{Variant::original, Variant::noise}));
}

TEST(RunConfig, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(parse_run_config(json::parse(R"({"betta": 1})")), ConfigError);
  EXPECT_THROW(parse_run_config(json::parse(R"({"model": {"depth": 3}})")), ConfigError);
  EXPECT_THROW(parse_run_config(json::parse(R"({"beta": "big"})")), ConfigError);
  EXPECT_THROW(parse_run_config(json::parse(R"({"t_max": -1})")), ConfigError);
  EXPECT_THROW(parse_run_config(json::parse(R"({"model": []})")), ConfigError);
  try {
    parse_run_config(json::parse(R"({"dataset": {"synthetic": {"classes": {"blob": 1}}}})"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset.synthetic.classes.blob"), std::string::npos);
  }
}

TEST(RunConfig, RejectsOutOfRangeValues) {
  for (const char* text : {R"({"p": 0})", R"({"p": 1})", R"({"beta": 0})", R"({"filter_pool": [2]})",
                           R"({"dataset": {"image_size": 15}})", R"({"way": 20})", R"({"method": "maml"})",
                           R"({"eval": {"workers": 0}})", R"({"probe": {"variants": ["blur"]}})",
                           R"({"probe": {"noise_sigma": -1}})", R"({"name": "a/b"})",
                           R"({"dataset": {"kind": "image_dir"}})"}) {
    EXPECT_THROW(parse_run_config(json::parse(text)), ConfigError) << text;
  }
}

TEST(RunConfig, EffectiveConfigRoundTrips) {
  const RunConfig a = parse_run_config(json::parse(R"({"beta": 0.25, "model": {"widths": [2, 2]}})"));
  const json ja = to_json(a);
  const RunConfig b = parse_run_config(ja);
  EXPECT_EQ(to_json(b), ja);
  EXPECT_DOUBLE_EQ(b.train.beta, 0.25);
}

TEST(Pools, StandardizedAndDeterministic) {
  RunConfig cfg = parse_run_config(json::parse(R"({"dataset": {"image_size": 8,
      "synthetic": {"train_per_class": 10, "val_per_class": 21, "test_per_class": 21, "probe_per_class": 21}},
      "query": 5, "val_query": 16})"));
  const Pools a = build_pools(cfg.dataset), b = build_pools(cfg.dataset);
  EXPECT_EQ(a.train.size(), 100u);
  EXPECT_EQ(a.test.size(), 210u);
  const InputNorm unit = fit_input_norm(a.train);
  EXPECT_NEAR(unit.mean, 0.0, 1e-12);
  EXPECT_NEAR(unit.std, 1.0, 1e-12);
  EXPECT_EQ(a.norm.mean, b.norm.mean);
  const Pools c = build_pools(cfg.dataset, InputNorm{0.0, 1.0});
  EXPECT_EQ(c.norm.std, 1.0);
  EXPECT_DOUBLE_EQ(robustness_config(cfg, InputNorm{0.5, 0.25}).noise_sigma, 0.4);
}

}  // namespace
}  // namespace fap
