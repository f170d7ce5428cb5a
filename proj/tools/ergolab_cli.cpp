// Command-line front end. Every flag mirrors a config-file key; values given
// on the command line override the file.

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ergolab/ergolab.h"

namespace {

const std::vector<std::string> kCommon = {"seeds", "seed_base", "seed_list", "bits"};
const std::vector<std::string> kSystem = {"system", "alpha", "q", "alphabet", "window", "f", "samples"};

const std::map<std::string, std::vector<std::string>> kKeys = {
    {"generate", {"a", "Nmax"}},
    {"expsum", {"p", "eps", "N", "Nmin", "Nmax", "rho"}},
    {"average", {"a", "p", "eps", "rho", "Nmin", "Nmax"}},
    {"chain", {"a", "p", "eps", "rho", "Nmin", "Nmax"}},
    {"correlation", {"a", "p", "eps", "delta", "b", "c", "kappa", "rho", "Nmin", "Nmax"}},
    {"deviation", {"a", "N", "Nmax", "trials", "thresholds", "chernoff_c"}},
    {"vdc-selftest", {"instances", "max_n", "max_dim"}},
};

const std::map<std::string, std::string> kAbout = {
    {"generate", "dump a selector realization as (index, bit)"},
    {"expsum", "normalized exponential sums (1/N) sum e(p(n)) along lacunary N"},
    {"average", "weighted averages along the random subsequence"},
    {"chain", "differences along the chain of equivalent averages"},
    {"correlation", "correlation sums, summability statistic and I-term profile"},
    {"deviation", "deviation frequencies of S_N around W_N"},
    {"vdc-selftest", "randomized check of the van der Corput inequality"},
};

int report_error(ergo_status st, const char* what) {
  std::fprintf(stderr, "ergolab: %s: %s: %s\n", what, ergo_status_name(st), ergo_last_error());
  return static_cast<int>(st);
}

struct Invocation {
  std::string config_file;
  std::map<std::string, std::string> values;  // key -> flag value
};

int run(const std::string& pipeline, const Invocation& inv) {
  ergo_config* cfg = nullptr;
  ergo_status st = ergo_config_new(&cfg);
  if (st != ERGO_OK) return report_error(st, "config");
  auto cleanup = [&](int code) {
    ergo_config_free(cfg);
    return code;
  };
  if (!inv.config_file.empty() && (st = ergo_config_load_file(cfg, inv.config_file.c_str())) != ERGO_OK)
    return cleanup(report_error(st, "config file"));
  if ((st = ergo_config_set(cfg, "pipeline", pipeline.c_str())) != ERGO_OK)
    return cleanup(report_error(st, "pipeline"));
  for (const auto& [key, value] : inv.values)
    if ((st = ergo_config_set(cfg, key.c_str(), value.c_str())) != ERGO_OK)
      return cleanup(report_error(st, ("--" + key).c_str()));

  ergo_report* rep = nullptr;
  if ((st = ergo_run(cfg, &rep)) != ERGO_OK) return cleanup(report_error(st, pipeline.c_str()));

  size_t needed = 0;
  ergo_config_output_path(cfg, nullptr, 0, &needed);
  std::string out(needed, '\0');
  ergo_config_output_path(cfg, out.data(), out.size(), &needed);
  out.resize(needed - 1);

  int code = 0;
  if (out.empty() || out == "-") {
    const char* csv = nullptr;
    if ((st = ergo_report_table(rep, 0, nullptr, &csv, nullptr)) != ERGO_OK) code = report_error(st, "report");
    else std::fputs(csv, stdout);
  } else if ((st = ergo_report_write(rep, out.c_str())) != ERGO_OK) {
    code = report_error(st, "write");
  }
  ergo_report_free(rep);
  return cleanup(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ergolab: random-subsequence ergodic averages with Hardy-field weights"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ergo_version());

  std::map<std::string, Invocation> invocations;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  for (const auto& [name, keys] : kKeys) {
    CLI::App* sub = app.add_subcommand(name, kAbout.at(name));
    Invocation& inv = invocations[name];
    sub->add_option("--config", inv.config_file, "key=value configuration file");
    std::vector<std::string> all = keys;
    if (name == "average" || name == "chain") all.insert(all.end(), kSystem.begin(), kSystem.end());
    all.insert(all.end(), kCommon.begin(), kCommon.end());
    all.push_back("out");
    for (const std::string& key : all)
      options[name][key] = sub->add_option("--" + key, inv.values[key], "config key '" + key + "'");
  }

  CLI11_PARSE(app, argc, argv);

  for (const auto& [name, keys] : kKeys) {
    CLI::App* sub = app.get_subcommand(name);
    if (!sub->parsed()) continue;
    Invocation inv = invocations[name];
    // Keep only flags that were given, so the config file is not overridden
    // by empty defaults.
    std::map<std::string, std::string> given;
    for (const auto& [key, opt] : options[name])
      if (opt->count() > 0) given[key] = inv.values[key];
    inv.values = std::move(given);
    return run(name, inv);
  }
  return 1;
}
