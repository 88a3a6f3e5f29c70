#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "iup/config.hpp"

using namespace iup;

namespace {

RunConfig<double> parse_str(const std::string& text) {
  std::istringstream is(text);
  return parse_config<double>(is);
}

}  // namespace

TEST_CASE("empty input yields defaults") {
  const RunConfig<double> c = parse_str("");
  CHECK(c.scene.width == 64);
  CHECK(c.optim.lr == doctest::Approx(2e-4));
  CHECK(c.loss.lambda_uncert == doctest::Approx(0.1));
  CHECK(c.flags.rt_decoupled);
  CHECK(c.precision == "double");
}

TEST_CASE("keys, comments and whitespace") {
  const RunConfig<double> c = parse_str(
      "# a comment\n"
      "\n"
      "optim.lr = 2e-4  # trailing comment\n"
      "  scene.max_rot_deg=25\n"
      "flags.ida = false\n"
      "model.seed = 99\n");
  CHECK(c.optim.lr == doctest::Approx(0.0002));
  CHECK(c.scene.max_rot_deg == doctest::Approx(25.0));
  CHECK(!c.flags.ida);
  CHECK(c.model_seed == 99);
}

TEST_CASE("errors carry source and line number") {
  CHECK_THROWS_WITH_AS(parse_str("optim.lr = fast\n"), doctest::Contains("<config>:1"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_str("\noptim.nope = 3\n"), doctest::Contains(":2"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_str("optim.nope = 3\n"), doctest::Contains("unknown key"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_str("just words\n"), doctest::Contains("key = value"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_str("flags.ida = maybe\n"), doctest::Contains("boolean"),
                       ConfigError);
  CHECK_THROWS_AS(load_config<double>("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("validation failures are reported") {
  CHECK_THROWS_AS(parse_str("scene.width = 60\n"), ConfigError);
  CHECK_THROWS_AS(parse_str("precision = half\n"), ConfigError);
  CHECK_THROWS_AS(parse_str("optim.warmup_steps = 2000\noptim.total_steps = 2000\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_str("eval.count = -1\n"), ConfigError);
}

TEST_CASE("dump round-trips through the parser") {
  RunConfig<double> c = toy_config<double>();
  c.optim.lr = 3.25e-4;
  c.scene.overlap_lo = 0.35;
  c.flags.homography_warp = false;
  c.loss.delta_t = 0.4;
  c.precision = "float";
  const std::string text = dump_config(c);
  const RunConfig<double> back = parse_str(text);
  CHECK(dump_config(back) == text);
  CHECK(back.optim.lr == c.optim.lr);
  CHECK(back.scene.overlap_lo == c.scene.overlap_lo);
  CHECK(!back.flags.homography_warp);
  CHECK(back.precision == "float");
}

TEST_CASE("toy preset matches the documented run") {
  const RunConfig<double> c = toy_config<double>();
  CHECK(c.scene.count == 2048);
  CHECK(c.scene.seed == 1234);
  CHECK(c.scene.max_rot_deg == doctest::Approx(30.0));
  CHECK(c.scene.overlap_lo == doctest::Approx(0.3));
  CHECK(c.eval_count == 256);
  CHECK(c.optim.total_steps == 2000);
  CHECK(c.optim.seed == 42);
  CHECK(c.model_seed == 7);
}
