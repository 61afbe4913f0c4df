#include <CLI11.hpp>
#include <iostream>

#include "ehsrb/harness.hpp"

int main(int argc, char** argv) {
  using ehsrb::RunFlags;
  CLI::App app{"Effective-hyperbolicity and SRB experiments for the slowed solenoid", "ehsrb"};
  app.set_help_flag("-h,--help", "Show usage");
  app.set_version_flag("--version", ehsrb::tool_version());

  std::string name;
  RunFlags f;
  std::string config, out = f.out.string(), histogram;
  app.add_option("subcommand", name, "one of: simulate eht-density decompose srb oracle-check tail-fit verify-conditions")
      ->required();
  app.add_option("--config", config, "JSON config overlaid on the defaults");
  app.add_option("--seed", f.seed, "64-bit run seed");
  app.add_option("--threads", f.threads, "worker cap (runs are deterministic for any value)");
  app.add_option("--out", out, "output directory");
  app.add_option("--n", f.n, "subcommand sample size / iterate count");
  app.add_option("--q", f.q, "stable-control depth (eht-density)");
  app.add_option("--theta-bar", f.theta_bar, "angle cutoff");
  app.add_option("--alpha", f.alpha, "slowdown exponent");
  app.add_option("--grid", f.grid, "histogram bins per axis (srb)");
  app.add_option("--histogram", histogram, "tail-fit input CSV (t,count[,mass])");
  app.add_flag("--resume", f.resume, "reuse a finished run; refuse to overwrite a different one");
  bool dump = false;
  app.add_flag("--dump-config", dump, "print the effective config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help() << "\n" << ehsrb::usage_text();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << ehsrb::tool_version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "ehsrb: " << e.what() << "\n\n" << ehsrb::usage_text();
    return ehsrb::kExitUsage;
  }
  if (!config.empty()) f.config = config;
  if (!histogram.empty()) f.histogram = histogram;
  f.out = out;
  if (dump) {
    try {
      std::cout << ehsrb::dump_json(ehsrb::effective_config(name, f));
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "ehsrb: " << e.what() << "\n";
      return ehsrb::kExitConfig;
    }
  }
  return ehsrb::run_subcommand(name, f, std::cout, std::cerr);
}
