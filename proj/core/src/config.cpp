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

#include "ldp/config.hpp"

#include <algorithm>

#include "ldp/sha256.hpp"

namespace ldp {

namespace {

// R"(...)" defaults: the complete knob registry with paper-pinned values
// (K, drop_prob, beta, alpha_temp, M, kl_weight, H, w) and desk-scale
// substitutes for sizes and training budgets.
const char* kDefaults = R"JSON({
  "version": 1,
  "seed": 0,
  "out_dir": "out/run",
  "env": {
    "name": "pointmass2d",
    "T": 64,
    "n_cells": 9,
    "reward_mode": "default",
    "gamma": 1.0
  },
  "data": {
    "n_episodes": 192,
    "mix": [{"policy": "medium", "weight": 1.0}],
    "normalize_tokens": true
  },
  "model": {
    "space": "latent",
    "L": 4,
    "z_dim": 8,
    "d_model": 32,
    "n_heads": 2,
    "enc_blocks": 2,
    "dec_blocks": 2,
    "head_hidden": 64,
    "kl_weight": 1e-6,
    "unet_channels": [32, 64, 64],
    "unet_kernel": 3,
    "gn_groups": 8,
    "t_embed_dim": 32,
    "embed_hidden": 64,
    "energy_hidden": 64,
    "energy_layers": 4,
    "energy_cond_embed": 16,
    "energy_t_dim": 16
  },
  "schedule": {
    "kind": "cosine",
    "K": 100
  },
  "train": {
    "window": 40,
    "vae_steps": 6000,
    "vae_batch": 8,
    "vae_lr": 2e-3,
    "val_fraction": 0.0,
    "eval_every": 500,
    "prior_steps": 4000,
    "prior_batch": 16,
    "prior_lr": 1e-3,
    "drop_prob": 0.25,
    "energy_steps": 2500,
    "energy_batch": 8,
    "energy_lr": 1e-3,
    "shared_support_noise": false
  },
  "support": {
    "M": 16,
    "n_states": 64,
    "w": 1.0,
    "alpha_temp": 0.99
  },
  "plan": {
    "beta": 3.0,
    "w": 1.4,
    "alpha_temp": 0.5,
    "H": 40,
    "replan_interval": 1,
    "n_episodes": 20,
    "eval_seeds": [0, 1, 2, 3, 4]
  },
  "ablate": {
    "L": [1, 4],
    "beta": [0.3, 3.0, 30.0],
    "H": [40],
    "K": [50],
    "n_episodes": 6,
    "eval_seeds": [0, 1]
  }
})JSON";

// Paper-pinned knobs, for provenance tagging in the resolved dump.
const char* kPaperKnobs[] = {
    "schedule.K",     "train.drop_prob", "plan.beta",  "plan.alpha_temp",
    "support.M",      "model.kl_weight", "plan.H",     "plan.w",
};

void collect_leaves(const Json& j, const std::string& prefix,
                    std::vector<std::string>* out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      collect_leaves(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else {
    out->push_back(prefix);
  }
}

void merge_strict(Json& base, const Json& incoming, const std::string& prefix,
                  Json* sources, const std::string& source_tag) {
  if (!incoming.is_object()) {
    throw ConfigError("config: expected an object at '" +
                      (prefix.empty() ? std::string("<root>") : prefix) + "'");
  }
  for (auto it = incoming.begin(); it != incoming.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      throw ConfigError("config: unknown key '" + path + "'");
    }
    Json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge_strict(slot, it.value(), path, sources, source_tag);
    } else if (slot.is_object() != it.value().is_object()) {
      throw ConfigError("config: type mismatch at '" + path + "'");
    } else {
      slot = it.value();
      (*sources)[path] = source_tag;
    }
  }
}

const Json* find_path(const Json& root, const std::string& path) {
  const Json* cur = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
}

Json* find_path_mut(Json& root, const std::string& path) {
  return const_cast<Json*>(find_path(root, path));
}

}  // namespace

Json ExperimentConfig::defaults() { return Json::parse(kDefaults); }

ExperimentConfig ExperimentConfig::load(const Json& file_doc,
                                        const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  cfg.resolved_ = defaults();
  cfg.sources_ = Json::object();
  std::vector<std::string> leaves;
  collect_leaves(cfg.resolved_, "", &leaves);
  for (const auto& leaf : leaves) cfg.sources_[leaf] = "default";

  merge_strict(cfg.resolved_, file_doc, "", &cfg.sources_, "file");

  for (const std::string& ov : overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override must look like key.path=value: " + ov);
    }
    const std::string path = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    Json* slot = find_path_mut(cfg.resolved_, path);
    if (slot == nullptr || slot->is_object()) {
      throw ConfigError("config: unknown key '" + path + "'");
    }
    Json parsed = Json::parse(value, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) parsed = Json(value);  // bare strings
    *slot = parsed;
    cfg.sources_[path] = "override";
  }

  if (cfg.geti("version") != 1) {
    throw ConfigError("config: unsupported schema version");
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path,
                                             const std::vector<std::string>& overrides) {
  Json doc = Json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw ConfigError("config: invalid JSON in " + path);
  return load(doc, overrides);
}

Json ExperimentConfig::resolved_with_sources() const {
  Json out;
  out["config"] = resolved_;
  Json src = sources_;
  for (const char* knob : kPaperKnobs) {
    const std::string key(knob);
    if (src.contains(key) && src[key] == "default") src[key] = "default (paper)";
    else if (src.contains(key)) src[key] = std::string(src[key].get<std::string>()) + " (paper)";
  }
  // Everything not tagged paper is a desk-scale choice.
  out["sources"] = src;
  return out;
}

namespace {

const Json& require_path(const Json& root, const std::string& path) {
  const Json* p = find_path(root, path);
  if (p == nullptr) throw ConfigError("config: missing key '" + path + "'");
  return *p;
}

}  // namespace

int ExperimentConfig::geti(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path).get<int>();
}
double ExperimentConfig::getd(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path).get<double>();
}
bool ExperimentConfig::getb(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path).get<bool>();
}
std::string ExperimentConfig::gets(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path).get<std::string>();
}
std::vector<int> ExperimentConfig::getvi(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path).get<std::vector<int>>();
}
std::vector<double> ExperimentConfig::getvd(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path).get<std::vector<double>>();
}
std::vector<std::uint64_t> ExperimentConfig::getvu(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path).get<std::vector<std::uint64_t>>();
}
Json ExperimentConfig::getj(const std::string& path) const {
  consumed_.push_back(path);
  return require_path(resolved_, path);
}

std::uint64_t ExperimentConfig::seed() const {
  consumed_.push_back("seed");
  return require_path(resolved_, "seed").get<std::uint64_t>();
}

std::string ExperimentConfig::out_dir() const {
  consumed_.push_back("out_dir");
  return require_path(resolved_, "out_dir").get<std::string>();
}

std::string ExperimentConfig::digest() const {
  Json j = resolved_;
  j.erase("out_dir");
  return sha256_hex(j.dump());
}

std::string ExperimentConfig::digest_of(const std::vector<std::string>& key_prefixes) const {
  Json subset = Json::object();
  for (const auto& prefix : key_prefixes) {
    const Json* p = find_path(resolved_, prefix);
    if (p != nullptr) subset[prefix] = *p;
  }
  return sha256_hex(subset.dump());
}

void ExperimentConfig::check_all_consumed() const {
  std::vector<std::string> leaves;
  collect_leaves(resolved_, "", &leaves);
  std::vector<std::string> missing;
  for (const auto& leaf : leaves) {
    bool used = false;
    for (const auto& c : consumed_) {
      // A consumed prefix covers its subtree (mix entries, seed lists).
      if (leaf == c || leaf.rfind(c + ".", 0) == 0) {
        used = true;
        break;
      }
    }
    if (!used) missing.push_back(leaf);
  }
  if (!missing.empty()) {
    std::string msg = "config: registered knobs never consumed:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
}

}  // namespace ldp
