// Copyright 2026 the ldplan authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "ldp/pipeline.hpp"

namespace {

// Exit codes: 0 success, 2 config error, 3 missing/stale artifact,
// 4 numerical failure.
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kArtifactError = 3;
constexpr int kNumericError = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-action diffusion planning pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  std::vector<std::string> overrides;

  const std::vector<std::string> commands = {"gen-data",     "train-vae", "train-prior",
                                             "gen-support",  "train-energy", "plan",
                                             "evaluate",     "ablate",    "full"};
  for (const auto& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--seed", seed, "override the top-level seed");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--override", overrides,
                    "key.path=value config overrides (repeatable)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    std::vector<std::string> all_overrides = overrides;
    if (seed >= 0) all_overrides.push_back("seed=" + std::to_string(seed));
    if (!out_dir.empty()) all_overrides.push_back("out_dir=\"" + out_dir + "\"");
    const ldp::ExperimentConfig cfg =
        ldp::ExperimentConfig::load_file(config_path, all_overrides);
    ldp::run_command(command, cfg);
    return kOk;
  } catch (const ldp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const ldp::ArtifactError& e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return kArtifactError;
  } catch (const ldp::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumericError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
