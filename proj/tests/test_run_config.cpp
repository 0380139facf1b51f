#include <doctest.h>

#include <filesystem>

#include "test_util.hpp"
#include "vitlp/pipeline.hpp"
#include "vitlp/run_config.hpp"

using namespace vitlp;

TEST_CASE("config text round trip") {
  const auto rc = RunConfig::parse("# comment\nmodel.d = 32\n\n  optim.lr=0.001  \nrun.name = a b\n");
  CHECK(rc.get_int("model.d", 0) == 32);
  CHECK(rc.get_double("optim.lr", 0.0) == 0.001);
  CHECK(rc.get("run.name", "") == "a b");
  CHECK(rc.get("missing", "x") == "x");
  CHECK(RunConfig::parse(rc.format()).values == rc.values);
  CHECK_THROWS_AS(RunConfig::parse("no equals sign\n"), RunConfigError);
  CHECK_THROWS_AS(RunConfig::parse(" = 3\n"), RunConfigError);
  CHECK_THROWS_AS(RunConfig::parse("a = x\n").get_int("a", 0), RunConfigError);
  CHECK_THROWS_AS(RunConfig::parse("a = 1.5\n").get_int("a", 0), RunConfigError);
  CHECK_THROWS_AS(RunConfig::parse("a = maybe\n").get_bool("a", false), RunConfigError);
  CHECK(RunConfig::parse("a = true\n").get_bool("a", false));
  CHECK_FALSE(RunConfig::parse("a = 0\n").get_bool("a", true));
}

TEST_CASE("merge and defaults") {
  RunConfig a = RunConfig::parse("x = 1\ny = 2\n");
  const RunConfig b = RunConfig::parse("y = 3\nz = 4\n");
  a.merge(b);
  CHECK(a.get("x", "") == "1");
  CHECK(a.get("y", "") == "3");
  CHECK(a.get("z", "") == "4");
  a.set_default("x", "9");
  a.set_default("w", "5");
  CHECK(a.get("x", "") == "1");
  CHECK(a.get("w", "") == "5");
}

TEST_CASE("doubles survive the text form exactly") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double v = testing::uniform(rng, -1e3, 1e3) * std::pow(10.0, rng.range(-12, 12));
    RunConfig rc;
    rc.set("v", format_double(v));
    CHECK(RunConfig::parse(rc.format()).get_double("v", 0.0) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(3e-3) == "0.003");
}

TEST_CASE("typed sections round trip") {
  ModelConfig mc;
  mc.d = 32;
  mc.enc_layers = 2;
  SegmentConfig sc{16, 0.25};
  AdamWConfig ac;
  ac.lr = 1.25e-3;
  ac.horizon = 77;
  RunConfig rc;
  store(rc, mc);
  store(rc, sc);
  store(rc, ac);
  const auto back = RunConfig::parse(rc.format());
  CHECK(model_config(back).to_map() == mc.to_map());
  CHECK(segment_config(back).max_targets == 16);
  CHECK(segment_config(back).alpha_p == 0.25);
  CHECK(optimizer_config(back).lr == 1.25e-3);
  CHECK(optimizer_config(back).horizon == 77);
  CHECK_THROWS(model_config(RunConfig::parse("model.d = 30\n")));
  CHECK_THROWS(segment_config(RunConfig::parse("seg.max_targets = 10\n")));

  const auto path = std::filesystem::temp_directory_path() / "vitlp_run_config.txt";
  rc.save(path);
  CHECK(RunConfig::load(path).values == rc.values);
  std::filesystem::remove(path);
  CHECK_THROWS(RunConfig::load(path));
}

TEST_CASE("step log format") {
  StepLog log{3, 0.5, 1.25, 0.75, 2.0};
  CHECK(format_step(log) == "step=3 lr=0.5 global_text=1.25 local_layout=0.75 total=2");
}
