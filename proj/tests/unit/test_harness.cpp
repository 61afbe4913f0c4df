#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ehsrb/config.hpp"
#include "ehsrb/errors.hpp"
#include "ehsrb/harness.hpp"
#include "ehsrb/io.hpp"

using namespace ehsrb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "ehsrb_unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const Json& j) {
  const fs::path p = dir / "cfg.json";
  write_json_file(p, j);
  return p;
}

int run(const std::string& name, const RunFlags& f, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_subcommand(name, f, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST(Config, DefaultFileMatchesBuiltins) {
  const fs::path p = fs::path(EHSRB_SOURCE_DIR) / "config" / "default.json";
  ASSERT_TRUE(fs::exists(p));
  EXPECT_EQ(Json::parse(read_text_file(p)), default_config());
}

TEST(Config, UnknownKeyIsRejected) {
  Json c = default_config();
  try {
    merge_config(c, Json{{"system", {{"gama", 1.0}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("system.gama"), std::string::npos);
  }
}

TEST(Config, TypeRules) {
  Json c = default_config();
  EXPECT_NO_THROW(set_config_key(c, "system.alpha", 1));  // integer for a real
  EXPECT_THROW(set_config_key(c, "simulate.n", 1.5), ConfigError);
  EXPECT_THROW(set_config_key(c, "system.alpha", "half"), ConfigError);
  c = default_config();
  set_config_key(c, "system.alpha", 1.0);
  EXPECT_THROW(system_spec_from(c), ConfigError);
}

TEST(Io, CsvQuoting) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  std::ostringstream os;
  CsvWriter w(os);
  w.field("x").field(1.5).end_row();
  EXPECT_EQ(os.str(), "x,1.5\r\n");
}

TEST(Io, DoublesRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -0.0, 1e-300}) EXPECT_EQ(std::stod(format_double(x)), x);
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Io, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Harness, UnknownSubcommandIsUsageError) {
  RunFlags f;
  f.out = scratch("unknown");
  std::string err;
  EXPECT_EQ(run("frobnicate", f, &err), kExitUsage);
  EXPECT_NE(err.find("usage"), std::string::npos);
}

TEST(Harness, FlagNotAcceptedIsUsageError) {
  RunFlags f;
  f.out = scratch("flag");
  f.grid = 16;
  EXPECT_EQ(run("simulate", f), kExitUsage);
}

TEST(Harness, BadConfigIsConfigError) {
  const fs::path d = scratch("badcfg");
  RunFlags f;
  f.out = d / "out";
  f.config = write_config(d, Json{{"system", {{"r0", 0.5}}}});
  EXPECT_EQ(run("simulate", f), kExitConfig);
  f.config = write_config(d, Json{{"nope", 1}});
  EXPECT_EQ(run("simulate", f), kExitConfig);
}

TEST(Harness, UnwritableOutputIsOutputError) {
  const fs::path d = scratch("unwritable");
  write_text_file(d / "file", "x");
  RunFlags f;
  f.out = d / "file" / "sub";
  f.n = 10;
  EXPECT_EQ(run("simulate", f), kExitOutput);
}

TEST(Harness, SimulateIsDeterministicAndResumable) {
  const fs::path d = scratch("simulate");
  RunFlags f;
  f.n = 500;
  f.out = d / "a";
  ASSERT_EQ(run("simulate", f), kExitOk);
  f.out = d / "b";
  ASSERT_EQ(run("simulate", f), kExitOk);
  for (const char* file : {"orbit.csv", "orbit_summary.json"})
    EXPECT_EQ(read_text_file(d / "a" / file), read_text_file(d / "b" / file)) << file;
  const Json ma = Json::parse(read_text_file(d / "a" / "manifest.json"));
  const Json mb = Json::parse(read_text_file(d / "b" / "manifest.json"));
  EXPECT_EQ(ma["digest"], mb["digest"]);
  EXPECT_EQ(ma["outputs"], mb["outputs"]);

  // same run: up to date
  f.resume = true;
  std::ostringstream out, err;
  EXPECT_EQ(run_subcommand("simulate", f, out, err), kExitOk);
  EXPECT_NE(out.str().find("up to date"), std::string::npos);
  // different run into the same directory
  f.n = 501;
  EXPECT_EQ(run("simulate", f), kExitResumeMismatch);
}

TEST(Harness, SeedChangesOutput) {
  const fs::path d = scratch("seed");
  RunFlags f;
  f.n = 200;
  f.out = d / "a";
  ASSERT_EQ(run("simulate", f), kExitOk);
  f.seed = 99;
  f.out = d / "b";
  ASSERT_EQ(run("simulate", f), kExitOk);
  EXPECT_NE(Json::parse(read_text_file(d / "a" / "manifest.json"))["digest"],
            Json::parse(read_text_file(d / "b" / "manifest.json"))["digest"]);
}

TEST(Harness, SrbWithOneStepIsLeafVolume) {
  const fs::path d = scratch("srb1");
  Json overlay{{"srb", {{"lyapunov_n", 1000}, {"points", 200}}}};
  RunFlags f;
  f.config = write_config(d, overlay);
  f.n = 1;
  f.grid = 32;
  f.out = d / "out";
  ASSERT_EQ(run("srb", f), kExitOk);

  Json cfg = default_config();
  merge_config(cfg, overlay);
  const System sys = system_from(cfg);
  const CurveConfig cc = curve_config_from(cfg);
  const SrbConfig sc = srb_config_from(cfg);
  const EmpiricalMeasure m =
      pushforward_leaf_volume(sys, seed_chain(sys, cc, sc.seed_length, sc.points), 0, GridSpec{sys.dim(), 32});
  std::ostringstream os;
  m.write_box_csv(os);
  EXPECT_EQ(read_text_file(d / "out" / "mu_boxes.csv"), os.str());
}

TEST(Harness, EffectiveConfigAppliesFlags) {
  RunFlags f;
  f.n = 123;
  f.seed = 5;
  f.alpha = 0.75;
  const Json c = effective_config("eht-density", f);
  EXPECT_EQ(c["eht"]["n"], 123);
  EXPECT_EQ(c["run"]["seed"], 5);
  EXPECT_EQ(c["system"]["alpha"], 0.75);
  f.q = 7;
  EXPECT_EQ(effective_config("eht-density", f)["eht"]["q_list"], Json::array({7}));
}
