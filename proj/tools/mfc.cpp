// Command-line front end: run catalog scenarios, list them, check the gain correspondence.

#include <mfc/experiments.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 2;
constexpr int kDiverged = 3;

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-free control scenarios"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one catalog scenario");
  std::string scenario;
  std::uint64_t seed = 1;
  std::string out = "out";
  double duration = 0.0;
  std::vector<std::string> overrides;
  run->add_option("--scenario", scenario, "scenario name (see `list`)")->required();
  run->add_option("--seed", seed, "noise seed");
  run->add_option("--out", out, "output root directory");
  run->add_option("--duration", duration, "override the horizon [s]")->check(CLI::PositiveNumber);
  run->add_option("--override", overrides, "key=value parameter override (repeatable)");

  auto* list = app.add_subcommand("list", "list scenarios and their parameters");

  auto* verify = app.add_subcommand("verify-correspondence",
                                    "compare sampled classic and intelligent controllers");
  verify->set_help_flag("--help", "print this help and exit");
  double h = 0.01;
  double alpha = 1.0;
  std::size_t n = 10000;
  std::uint64_t vseed = 1;
  verify->add_option("--h", h, "sampling interval");
  verify->add_option("--alpha", alpha, "ultra-local input gain");
  verify->add_option("--n", n, "number of random error sequences");
  verify->add_option("--seed", vseed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    if (*list) {
      std::cout << mfc::list_scenarios();
      return kOk;
    }
    if (*verify) {
      mfc::RunOptions opt;
      opt.seed = vseed;
      opt.overrides = {"h=" + mfc::format_double(h), "alpha=" + mfc::format_double(alpha),
                       "n=" + std::to_string(n)};
      if (n == 0) throw mfc::ConfigError("--n must be at least 1");
      const auto r = mfc::run_scenario("correspondence-check", opt);
      std::cout << r.summary;
      std::cout << "worst relative deviation " << r.correspondence->worst_relative() << '\n';
      return kOk;
    }
    mfc::RunOptions opt;
    opt.seed = seed;
    opt.overrides = overrides;
    opt.out_dir = out;
    if (run->count("--duration") > 0) opt.duration = duration;
    const auto r = mfc::run_scenario(scenario, opt);
    std::cout << r.summary;
    std::cout << "wrote " << (std::filesystem::path(out) / r.name).string() << '\n';
    return kOk;
  } catch (const mfc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const mfc::DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
