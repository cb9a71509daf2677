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

#include "ldp/pipeline.hpp"

#include <algorithm>
#include <cmath>

namespace ldp {

namespace fs = std::filesystem;

namespace {

NormStats identity_norm(const EnvSpec& env) {
  NormStats n;
  n.state_mean = Vec::Zero(env.state_dim);
  n.state_std = Vec::Ones(env.state_dim);
  n.action_mean = Vec::Zero(env.action_dim);
  n.action_std = Vec::Ones(env.action_dim);
  return n;
}

PolicyMix mix_from_config(const ExperimentConfig& cfg) {
  PolicyMix mix;
  for (const Json& entry : cfg.getj("data.mix")) {
    mix.emplace_back(entry.at("policy").get<std::string>(),
                     entry.at("weight").get<double>());
  }
  return mix;
}

void write_manifest(const OutPaths& paths, const std::string& stage, const Json& inputs,
                    const Json& outputs, const std::string& config_digest,
                    const Json& extra = Json::object()) {
  Json m;
  m["stage"] = stage;
  m["config_digest"] = config_digest;
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  m["extra"] = extra;
  write_file(paths.manifest(stage), m.dump(2) + "\n");
}

Json read_manifest(const OutPaths& paths, const std::string& stage) {
  const fs::path p = paths.manifest(stage);
  if (!fs::exists(p)) {
    throw ArtifactError("missing manifest for stage '" + stage + "'; run that stage first");
  }
  return load_json_file(p);
}

// Re-hashes the file and checks it against the producing stage's manifest.
std::string verified_input(const OutPaths& paths, const std::string& producer_stage,
                           const fs::path& file) {
  const Json manifest = read_manifest(paths, producer_stage);
  const std::string key = file.filename().string();
  if (!manifest.at("outputs").contains(key)) {
    throw ArtifactError("stage '" + producer_stage + "' did not produce " + key);
  }
  if (!fs::exists(file)) {
    throw ArtifactError("missing artifact " + file.string() + "; rerun stage '" +
                        producer_stage + "'");
  }
  const std::string actual =
      fs::is_directory(file) ? sha256_file_hex((file / "support.jsonl").string())
                             : sha256_file_hex(file.string());
  const std::string expected = manifest.at("outputs").at(key).get<std::string>();
  if (actual != expected) {
    throw ArtifactError("artifact " + key + " does not match the hash recorded by stage '" +
                        producer_stage + "'; rerun that stage and everything downstream");
  }
  return actual;
}

std::string curve_csv(const std::vector<std::pair<int, double>>& curve) {
  std::string out = "step,loss\n";
  for (const auto& [step, loss] : curve) {
    out += std::to_string(step) + "," + format_double(loss) + "\n";
  }
  return out;
}

// Config-key subsets that feed each stage's digest (used for ablate reuse).
const std::vector<std::string> kDataKeys = {"seed", "env", "data"};
const std::vector<std::string> kVaeKeys = {"seed", "env", "data", "model", "train.window", "train.vae_steps",
                                           "train.vae_batch", "train.vae_lr",
                                           "train.val_fraction", "train.eval_every"};
const std::vector<std::string> kPriorKeys = {"seed",
                                             "env",
                                             "data",
                                             "model",
                                             "schedule",
                                             "train.window",
                                             "train.vae_steps",
                                             "train.vae_batch",
                                             "train.vae_lr",
                                             "train.val_fraction",
                                             "train.eval_every",
                                             "train.prior_steps",
                                             "train.prior_batch",
                                             "train.prior_lr",
                                             "train.drop_prob"};

}  // namespace

EnvSpec env_from_config(const ExperimentConfig& cfg) {
  EnvSpec env = env_by_name(cfg.gets("env.name"), cfg.geti("env.T"), cfg.geti("env.n_cells"));
  const std::string mode = cfg.gets("env.reward_mode");
  if (mode == "dense") env.reward_mode = RewardMode::kDense;
  else if (mode == "sparse") env.reward_mode = RewardMode::kSparse;
  else if (mode != "default") throw ConfigError("env.reward_mode must be dense|sparse|default");
  env.gamma = cfg.getd("env.gamma");
  if (!(env.gamma > 0.0 && env.gamma <= 1.0)) {
    throw ConfigError("env.gamma must be in (0, 1]");
  }
  return env;
}

VaeSpec vae_spec_from_config(const ExperimentConfig& cfg, const EnvSpec& env) {
  VaeSpec v;
  v.state_dim = env.state_dim;
  v.action_dim = env.action_dim;
  v.T = env.horizon;
  v.L = cfg.geti("model.L");
  v.z_dim = cfg.geti("model.z_dim");
  v.d_model = cfg.geti("model.d_model");
  v.n_heads = cfg.geti("model.n_heads");
  v.enc_blocks = cfg.geti("model.enc_blocks");
  v.dec_blocks = cfg.geti("model.dec_blocks");
  v.head_hidden = cfg.geti("model.head_hidden");
  v.with_reward_channels = cfg.gets("model.space") != "skill";
  v.kl_weight = cfg.getd("model.kl_weight");
  v.validate();
  return v;
}

PriorSpec prior_spec_from_config(const ExperimentConfig& cfg, const EnvSpec& env) {
  PriorSpec p;
  const std::string space = cfg.gets("model.space");
  if (space == "raw") {
    p.z_dim = env.state_dim + env.action_dim + 2;
  } else if (space == "skill") {
    p.z_dim = cfg.geti("model.z_dim");
  } else {
    p.z_dim = cfg.geti("model.z_dim");
  }
  p.cond_dim = env.state_dim;
  p.channels = cfg.getvi("model.unet_channels");
  p.kernel = cfg.geti("model.unet_kernel");
  p.gn_groups = cfg.geti("model.gn_groups");
  p.t_embed_dim = cfg.geti("model.t_embed_dim");
  p.embed_hidden = cfg.geti("model.embed_hidden");
  p.drop_prob = cfg.getd("train.drop_prob");
  return p;
}

EnergySpec energy_spec_from_config(const ExperimentConfig& cfg, const EnvSpec& env) {
  EnergySpec e;
  const std::string space = cfg.gets("model.space");
  const int L = space == "raw" ? 1 : cfg.geti("model.L");
  const int H = cfg.geti("plan.H");
  if (H % L != 0) throw ConfigError("plan.H must be a multiple of model.L");
  e.seq_len = H / L;
  e.z_dim = space == "raw" ? env.state_dim + env.action_dim + 2 : cfg.geti("model.z_dim");
  e.cond_dim = env.state_dim;
  e.cond_embed = cfg.geti("model.energy_cond_embed");
  e.t_embed_dim = cfg.geti("model.energy_t_dim");
  e.hidden = cfg.geti("model.energy_hidden");
  e.layers = cfg.geti("model.energy_layers");
  return e;
}

PlannerConfig planner_from_config(const ExperimentConfig& cfg) {
  PlannerConfig p;
  p.space = space_mode_from(cfg.gets("model.space"));
  p.H = cfg.geti("plan.H");
  p.replan_interval = cfg.geti("plan.replan_interval");
  p.beta = cfg.getd("plan.beta");
  p.w = cfg.getd("plan.w");
  p.alpha_temp = cfg.getd("plan.alpha_temp");
  p.seed = cfg.seed();
  return p;
}

Json stage_gen_data(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  const EnvSpec env = env_from_config(cfg);
  Dataset ds = build_dataset(env, mix_from_config(cfg), cfg.geti("data.n_episodes"),
                             derive_seed(cfg.seed(), "gen-data"));
  const DatasetHashes hashes = save_dataset(ds, paths.dataset_jsonl(), paths.dataset_meta());
  Json outputs;
  outputs["dataset.jsonl"] = hashes.data_hash;
  outputs["dataset.meta.json"] = hashes.meta_hash;
  write_manifest(paths, "gen-data", Json::object(), outputs, cfg.digest_of(kDataKeys));
  return outputs;
}

namespace {

Dataset load_verified_dataset(const ExperimentConfig& cfg, const OutPaths& paths,
                              Json* inputs) {
  const std::string hash = verified_input(paths, "gen-data", paths.dataset_jsonl());
  if (inputs != nullptr) (*inputs)["dataset.jsonl"] = hash;
  Dataset ds = load_dataset(paths.dataset_jsonl(), paths.dataset_meta());
  if (!cfg.getb("data.normalize_tokens")) ds.norm = identity_norm(ds.env);
  return ds;
}

}  // namespace

Json stage_train_vae(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  const std::string space = cfg.gets("model.space");
  Json inputs;
  Json outputs;
  Json extra;
  if (space == "raw") {
    // Identity tokenizer: nothing to train, but downstream still needs the
    // hash link to the dataset.
    inputs["dataset.jsonl"] = verified_input(paths, "gen-data", paths.dataset_jsonl());
    extra["skipped"] = true;
    // Touch the VAE knobs so the registry check stays exact.
    const EnvSpec env = env_from_config(cfg);
    (void)vae_spec_from_config(cfg, env);
    (void)cfg.geti("train.vae_steps");
    (void)cfg.geti("train.vae_batch");
    (void)cfg.getd("train.vae_lr");
    (void)cfg.getd("train.val_fraction");
    (void)cfg.geti("train.eval_every");
    (void)cfg.geti("train.window");
    write_manifest(paths, "train-vae", inputs, outputs, cfg.digest_of(kVaeKeys), extra);
    return outputs;
  }
  Dataset ds = load_verified_dataset(cfg, paths, &inputs);
  const VaeSpec vspec = vae_spec_from_config(cfg, ds.env);
  VaeTrainConfig tc;
  tc.steps = cfg.geti("train.vae_steps");
  tc.batch = cfg.geti("train.vae_batch");
  tc.lr = cfg.getd("train.vae_lr");
  tc.val_fraction = cfg.getd("train.val_fraction");
  tc.eval_every = cfg.geti("train.eval_every");
  tc.window = cfg.geti("train.window");
  VaeTrainResult res = train_vae(vspec, ds, tc, derive_seed(cfg.seed(), "train-vae"));

  Json meta;
  meta["dataset_sha256"] = inputs["dataset.jsonl"];
  meta["final_train_recon"] = res.final_train_recon;
  meta["final_val_recon"] = res.final_val_recon;
  save_vae(paths.vae_ckpt(), vspec, res.params, meta);
  std::string curve = "step,train_total,train_recon,train_kl,val_recon\n";
  for (const auto& row : res.curve) {
    curve += std::to_string(row.step) + "," + format_double(row.train_total) + "," +
             format_double(row.train_recon) + "," + format_double(row.train_kl) + "," +
             format_double(row.val_recon) + "\n";
  }
  write_file(paths.vae_curve(), curve);
  outputs["vae.ckpt"] = sha256_file_hex(paths.vae_ckpt().string());
  outputs["vae_curve.csv"] = sha256_file_hex(paths.vae_curve().string());
  extra["final_train_recon"] = res.final_train_recon;
  extra["final_val_recon"] = res.final_val_recon;
  write_manifest(paths, "train-vae", inputs, outputs, cfg.digest_of(kVaeKeys), extra);
  return outputs;
}

namespace {

struct LatentData {
  std::vector<Mat> latents;
  std::vector<Vec> conds;
};

// window == 0 encodes full episodes; otherwise every L-aligned window of the
// given length, so the prior's conditioning matches replanning states.
LatentData encode_dataset(const Dataset& ds, const VaeSpec& vspec, const VaeParams& vae,
                          int window) {
  std::vector<TokenizedTrajectory> items;
  for (const auto& tr : ds.trajectories) items.push_back(tokenize(tr, ds.norm, vspec));
  if (window > 0) items = all_windows(items, window, vspec);
  LatentData out;
  out.latents.resize(items.size());
  out.conds.resize(items.size());
  parallel_for(static_cast<int>(items.size()), [&](int i) {
    const EncodeResult enc = encode(vspec, vae, items[static_cast<std::size_t>(i)], nullptr);
    out.latents[static_cast<std::size_t>(i)] = enc.mean;
    out.conds[static_cast<std::size_t>(i)] = items[static_cast<std::size_t>(i)].s1;
  });
  return out;
}

LatentData raw_token_data(const Dataset& ds, int window) {
  // Raw mode: the identity encoder turns each trajectory into its token
  // matrix; the prior diffuses those directly.
  VaeSpec tok_spec;
  tok_spec.state_dim = ds.env.state_dim;
  tok_spec.action_dim = ds.env.action_dim;
  tok_spec.T = ds.env.horizon;
  tok_spec.L = 1;
  tok_spec.with_reward_channels = true;
  std::vector<TokenizedTrajectory> items;
  for (const auto& tr : ds.trajectories) items.push_back(tokenize(tr, ds.norm, tok_spec));
  if (window > 0) items = all_windows(items, window, tok_spec);
  LatentData out;
  out.latents.resize(items.size());
  out.conds.resize(items.size());
  parallel_for(static_cast<int>(items.size()), [&](int i) {
    out.latents[static_cast<std::size_t>(i)] = items[static_cast<std::size_t>(i)].tokens;
    out.conds[static_cast<std::size_t>(i)] = items[static_cast<std::size_t>(i)].s1;
  });
  return out;
}

}  // namespace

Json stage_train_prior(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  const std::string space = cfg.gets("model.space");
  Json inputs;
  Dataset ds = load_verified_dataset(cfg, paths, &inputs);
  LatentData data;
  const int window = cfg.geti("train.window");
  if (space == "raw") {
    (void)read_manifest(paths, "train-vae");  // stage order is still enforced
    data = raw_token_data(ds, window);
  } else {
    inputs["vae.ckpt"] = verified_input(paths, "train-vae", paths.vae_ckpt());
    auto [vspec, vae] = load_vae(paths.vae_ckpt());
    data = encode_dataset(ds, vspec, vae, window);
  }
  const PriorSpec pspec = prior_spec_from_config(cfg, ds.env);
  const NoiseSchedule sched =
      make_schedule(cfg.geti("schedule.K"), schedule_kind_from(cfg.gets("schedule.kind")));
  PriorTrainConfig tc;
  tc.steps = cfg.geti("train.prior_steps");
  tc.batch = cfg.geti("train.prior_batch");
  tc.lr = cfg.getd("train.prior_lr");
  PriorTrainResult res =
      train_prior(pspec, data.latents, data.conds, sched, tc, derive_seed(cfg.seed(), "train-prior"));

  Json meta;
  meta["dataset_sha256"] = inputs["dataset.jsonl"];
  if (inputs.contains("vae.ckpt")) meta["vae_sha256"] = inputs["vae.ckpt"];
  meta["schedule"] = sched.to_json();
  save_prior(paths.prior_ckpt(), pspec, res.params, meta);
  write_file(paths.prior_curve(), curve_csv(res.curve));
  Json outputs;
  outputs["prior.ckpt"] = sha256_file_hex(paths.prior_ckpt().string());
  outputs["prior_curve.csv"] = sha256_file_hex(paths.prior_curve().string());
  write_manifest(paths, "train-prior", inputs, outputs, cfg.digest_of(kPriorKeys));
  return outputs;
}

namespace {

// Bundle without the energy model (as needed for support generation).
ModelBundle load_bundle_core(const ExperimentConfig& cfg, const OutPaths& paths,
                             Json* inputs) {
  ModelBundle b;
  Dataset ds = load_verified_dataset(cfg, paths, inputs);
  b.env = ds.env;
  b.norm = ds.norm;
  b.space = space_mode_from(cfg.gets("model.space"));
  if (b.space != SpaceMode::kRaw) {
    (*inputs)["vae.ckpt"] = verified_input(paths, "train-vae", paths.vae_ckpt());
    auto [vspec, vae] = load_vae(paths.vae_ckpt());
    b.vspec = std::move(vspec);
    b.vae = std::move(vae);
  }
  (*inputs)["prior.ckpt"] = verified_input(paths, "train-prior", paths.prior_ckpt());
  auto [pspec, prior] = load_prior(paths.prior_ckpt());
  // The prior checkpoint must descend from this dataset/VAE chain.
  const Checkpoint pck = load_checkpoint(paths.prior_ckpt());
  if (pck.meta.at("dataset_sha256") != (*inputs)["dataset.jsonl"]) {
    throw ArtifactError("prior.ckpt was trained on a different dataset; rerun train-prior");
  }
  if (b.space != SpaceMode::kRaw &&
      pck.meta.at("vae_sha256") != (*inputs)["vae.ckpt"]) {
    throw ArtifactError("prior.ckpt was trained with a different VAE; rerun train-prior");
  }
  b.pspec = std::move(pspec);
  b.prior = std::move(prior);
  b.sched = make_schedule(cfg.geti("schedule.K"),
                          schedule_kind_from(cfg.gets("schedule.kind")));
  return b;
}

std::vector<Vec> support_states(const ExperimentConfig& cfg, const Dataset& ds,
                                const NormStats& norm, int window, int L,
                                std::uint64_t seed) {
  // States the planner will condition on: with window training these are
  // L-aligned offsets into episodes, not just episode starts.
  const int n = cfg.geti("support.n_states");
  const int T = ds.env.horizon;
  const int max_off = window > 0 ? (T - window) / L : 0;
  std::vector<Vec> states;
  states.reserve(static_cast<std::size_t>(n));
  Rng rng(derive_seed(seed, "support-states"));
  for (int i = 0; i < n; ++i) {
    const auto& tr = ds.trajectories[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(ds.trajectories.size()) - 1))];
    const int off = L * rng.uniform_int(0, max_off);
    states.push_back(norm.norm_state(tr.states.row(off).transpose()));
  }
  return states;
}

}  // namespace

Json stage_gen_support(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  Json inputs;
  ModelBundle bundle = load_bundle_core(cfg, paths, &inputs);
  Dataset ds = load_dataset(paths.dataset_jsonl(), paths.dataset_meta());
  if (!cfg.getb("data.normalize_tokens")) ds.norm = identity_norm(ds.env);

  const int L = bundle.latent_step();
  const int H = cfg.geti("plan.H");
  if (H % L != 0) throw ConfigError("plan.H must be a multiple of model.L");
  const int seq_len = H / L;

  SupportGenConfig sc;
  sc.M = cfg.geti("support.M");
  sc.w = cfg.getd("support.w");
  sc.alpha_temp = cfg.getd("support.alpha_temp");
  sc.beta = cfg.getd("plan.beta");
  const EnergyFn energy = [&bundle](const Mat& z0, const Vec& s1) {
    return plan_sample_energy(bundle, z0, s1);
  };
  const auto sets = gen_support(bundle.pspec, bundle.prior,
                                support_states(cfg, ds, bundle.norm,
                                               cfg.geti("train.window"), L,
                                               cfg.seed()),
                                seq_len, bundle.sched, sc, energy,
                                derive_seed(cfg.seed(), "gen-support"));
  save_support_store(paths.support_dir(), sets, inputs["prior.ckpt"].get<std::string>());
  Json outputs;
  outputs["support"] = sha256_file_hex((paths.support_dir() / "support.jsonl").string());
  write_manifest(paths, "gen-support", inputs, outputs, cfg.digest());
  return outputs;
}

Json stage_train_energy(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  Json inputs;
  inputs["prior.ckpt"] = verified_input(paths, "train-prior", paths.prior_ckpt());
  inputs["support"] = verified_input(paths, "gen-support", paths.support_dir());
  const auto sets =
      load_support_store(paths.support_dir(), inputs["prior.ckpt"].get<std::string>());
  const EnvSpec env = env_from_config(cfg);
  const EnergySpec espec = energy_spec_from_config(cfg, env);
  EnergyTrainConfig tc;
  tc.steps = cfg.geti("train.energy_steps");
  tc.batch = cfg.geti("train.energy_batch");
  tc.lr = cfg.getd("train.energy_lr");
  tc.shared_noise = cfg.getb("train.shared_support_noise");
  const double beta = cfg.getd("plan.beta");
  const NoiseSchedule sched =
      make_schedule(cfg.geti("schedule.K"), schedule_kind_from(cfg.gets("schedule.kind")));
  EnergyTrainResult res =
      train_energy(espec, sets, sched, beta, tc, derive_seed(cfg.seed(), "train-energy"));
  Json meta;
  meta["support_sha256"] = inputs["support"];
  meta["prior_sha256"] = inputs["prior.ckpt"];
  save_energy(paths.energy_ckpt(), espec, res.params, meta);
  write_file(paths.energy_curve(), curve_csv(res.curve));
  Json outputs;
  outputs["energy.ckpt"] = sha256_file_hex(paths.energy_ckpt().string());
  outputs["energy_curve.csv"] = sha256_file_hex(paths.energy_curve().string());
  write_manifest(paths, "train-energy", inputs, outputs, cfg.digest());
  return outputs;
}

ModelBundle load_bundle(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  Json inputs;
  ModelBundle b = load_bundle_core(cfg, paths, &inputs);
  if (cfg.getd("plan.beta") > 0.0) {
    const std::string energy_hash =
        verified_input(paths, "train-energy", paths.energy_ckpt());
    const Checkpoint eck = load_checkpoint(paths.energy_ckpt());
    if (eck.meta.at("prior_sha256") != inputs["prior.ckpt"]) {
      throw ArtifactError("energy.ckpt was trained against a different prior; "
                          "rerun gen-support and train-energy");
    }
    auto [espec, energy] = load_energy(paths.energy_ckpt());
    b.espec = std::move(espec);
    b.energy = std::move(energy);
  }
  return b;
}

Json stage_plan(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  ModelBundle bundle = load_bundle(cfg);
  const PlannerConfig pc = planner_from_config(cfg);
  (void)cfg.geti("plan.n_episodes");
  (void)cfg.getvu("plan.eval_seeds");
  const EpisodeResult er =
      plan_episode(bundle, pc, derive_seed(cfg.seed(), "plan-command"));

  HashingWriter w(paths.plan_trace());
  for (std::size_t t = 0; t < er.log.size(); ++t) {
    const auto& step = er.log[t];
    std::string line = "{\"t\":" + std::to_string(t);
    line += ",\"state\":" + json_vec(step.state);
    line += ",\"action\":" + json_vec(step.action);
    line += ",\"reward\":" + format_double(step.reward);
    line += ",\"replanned\":" + std::string(step.replanned ? "true" : "false") + "}";
    w.write_line(line);
  }
  const std::string trace_hash = w.finish();

  Json result;
  result["raw_return"] = er.raw_return;
  result["normalized"] = er.normalized;
  result["plans"] = er.plans;
  result["clamp_events"] = er.clamp_events;
  write_file(paths.plan_result(), result.dump(2) + "\n");

  Json outputs;
  outputs["plan_trace.jsonl"] = trace_hash;
  outputs["plan_result.json"] = sha256_file_hex(paths.plan_result().string());
  write_manifest(paths, "plan", Json::object(), outputs, cfg.digest());
  return outputs;
}

Json stage_evaluate(const ExperimentConfig& cfg) {
  const OutPaths paths{cfg.out_dir()};
  ModelBundle bundle = load_bundle(cfg);
  const PlannerConfig pc = planner_from_config(cfg);
  Dataset ds = load_dataset(paths.dataset_jsonl(), paths.dataset_meta());
  const EvalTable table = evaluate(bundle, pc, quality_tag_str(ds.quality_tag),
                                   cfg.geti("plan.n_episodes"), cfg.getvu("plan.eval_seeds"));
  write_file(paths.eval_report(), eval_csv(table));
  write_file(paths.scores(), scores_csv(table));
  Json outputs;
  outputs["scores.csv"] = sha256_file_hex(paths.scores().string());
  Json extra;
  extra["mean_normalized"] = table.mean_normalized;
  extra["stderr_normalized"] = table.stderr_normalized;
  extra["mean_wallclock_per_plan"] = table.mean_wallclock_per_plan;
  extra["eval_csv"] = "timing report; not part of the hashed artifact chain";
  write_manifest(paths, "evaluate", Json::object(), outputs, cfg.digest(), extra);
  return outputs;
}

namespace {

void copy_artifacts(const fs::path& from, const fs::path& to,
                    const std::vector<std::string>& names) {
  fs::create_directories(to);
  for (const auto& name : names) {
    const fs::path src = from / name;
    const fs::path dst = to / name;
    if (!fs::exists(src)) throw ArtifactError("ablate: missing upstream artifact " + src.string());
    fs::copy(src, dst, fs::copy_options::overwrite_existing | fs::copy_options::recursive);
  }
}

ExperimentConfig with_overrides(const ExperimentConfig& base,
                                const std::vector<std::string>& overrides) {
  return ExperimentConfig::load(base.resolved(), overrides);
}

std::string fmt_num(double v) {
  std::string s = format_double(v);
  return s;
}

}  // namespace

Json stage_ablate(const ExperimentConfig& cfg) {
  const OutPaths root_paths{cfg.out_dir()};
  const fs::path ab = root_paths.ablate_dir();
  fs::create_directories(ab);

  const std::vector<int> Ls = cfg.getvi("ablate.L");
  const std::vector<double> betas = cfg.getvd("ablate.beta");
  const std::vector<int> Hs = cfg.getvi("ablate.H");
  const std::vector<int> Ks = cfg.getvi("ablate.K");
  const int n_episodes = cfg.geti("ablate.n_episodes");
  const Json eval_seeds = cfg.getj("ablate.eval_seeds");

  std::string merged;
  bool merged_has_header = false;
  Json summary_rows = Json::array();
  std::map<int, double> val_recon_by_L;

  for (int L : Ls) {
    // Data + VAE are shared by every combo with this L.
    const fs::path dir_L = ab / ("L" + std::to_string(L));
    ExperimentConfig cfg_L = with_overrides(
        cfg, {"out_dir=\"" + dir_L.string() + "\"", "model.L=" + std::to_string(L)});
    stage_gen_data(cfg_L);
    stage_train_vae(cfg_L);
    const Json vae_manifest = load_json_file(OutPaths{dir_L.string()}.manifest("train-vae"));
    val_recon_by_L[L] = vae_manifest.at("extra").value("final_val_recon", 0.0);

    for (int K : Ks) {
      const fs::path dir_LK = ab / ("L" + std::to_string(L) + "_K" + std::to_string(K));
      copy_artifacts(dir_L, dir_LK,
                     {"dataset.jsonl", "dataset.meta.json", "gen-data.manifest.json",
                      "train-vae.manifest.json", "vae.ckpt", "vae_curve.csv"});
      ExperimentConfig cfg_LK =
          with_overrides(cfg_L, {"out_dir=\"" + dir_LK.string() + "\"",
                                 "schedule.K=" + std::to_string(K)});
      stage_train_prior(cfg_LK);

      for (double beta : betas) {
        for (int H : Hs) {
          const fs::path dir_combo =
              ab / ("L" + std::to_string(L) + "_K" + std::to_string(K) + "_b" +
                    fmt_num(beta) + "_H" + std::to_string(H));
          copy_artifacts(dir_LK, dir_combo,
                         {"dataset.jsonl", "dataset.meta.json", "gen-data.manifest.json",
                          "train-vae.manifest.json", "vae.ckpt", "vae_curve.csv",
                          "train-prior.manifest.json", "prior.ckpt", "prior_curve.csv"});
          ExperimentConfig cfg_combo = with_overrides(
              cfg_LK,
              {"out_dir=\"" + dir_combo.string() + "\"", "plan.beta=" + fmt_num(beta),
               "plan.H=" + std::to_string(H),
               "plan.n_episodes=" + std::to_string(n_episodes),
               "plan.eval_seeds=" + eval_seeds.dump()});
          if (beta > 0.0) {
            stage_gen_support(cfg_combo);
            stage_train_energy(cfg_combo);
          }
          stage_evaluate(cfg_combo);

          const std::string scores =
              read_file(OutPaths{dir_combo.string()}.scores());
          const std::size_t nl = scores.find('\n');
          if (!merged_has_header) {
            merged += scores;
            merged_has_header = true;
          } else if (nl != std::string::npos) {
            merged += scores.substr(nl + 1);
          }
          const Json eval_manifest =
              load_json_file(OutPaths{dir_combo.string()}.manifest("evaluate"));
          Json row;
          row["L"] = L;
          row["K"] = K;
          row["beta"] = beta;
          row["H"] = H;
          row["mean_normalized"] = eval_manifest.at("extra").at("mean_normalized");
          row["stderr_normalized"] = eval_manifest.at("extra").at("stderr_normalized");
          row["mean_wallclock_per_plan"] =
              eval_manifest.at("extra").at("mean_wallclock_per_plan");
          row["vae_val_recon"] = val_recon_by_L[L];
          summary_rows.push_back(row);
        }
      }
    }
  }

  write_file(ab / "merged.csv", merged);

  std::string md = "# Ablation summary\n\n";
  md += "| L | K | beta | H | mean_normalized | stderr | vae_val_recon |\n";
  md += "|---|---|------|---|-----------------|--------|---------------|\n";
  for (const Json& row : summary_rows) {
    md += "| " + std::to_string(row.at("L").get<int>()) + " | " +
          std::to_string(row.at("K").get<int>()) + " | " +
          fmt_num(row.at("beta").get<double>()) + " | " +
          std::to_string(row.at("H").get<int>()) + " | " +
          fmt_num(row.at("mean_normalized").get<double>()) + " | " +
          fmt_num(row.at("stderr_normalized").get<double>()) + " | " +
          fmt_num(row.at("vae_val_recon").get<double>()) + " |\n";
  }
  if (val_recon_by_L.size() >= 2) {
    md += "\nVAE validation reconstruction error by latent step L:\n\n";
    for (const auto& [L, rec] : val_recon_by_L) {
      md += "- L=" + std::to_string(L) + ": " + fmt_num(rec) + "\n";
    }
  }
  write_file(ab / "summary.md", md);

  Json outputs;
  outputs["merged.csv"] = sha256_file_hex((ab / "merged.csv").string());
  Json extra;
  extra["rows"] = summary_rows;
  Json vr = Json::object();
  for (const auto& [L, rec] : val_recon_by_L) vr[std::to_string(L)] = rec;
  extra["vae_val_recon_by_L"] = vr;
  write_manifest(root_paths, "ablate", Json::object(), outputs, cfg.digest(), extra);
  return outputs;
}

void consume_registry(const ExperimentConfig& cfg) {
  (void)cfg.geti("version");
  (void)cfg.seed();
  (void)cfg.out_dir();
  const EnvSpec env = env_from_config(cfg);
  (void)mix_from_config(cfg);
  (void)cfg.geti("data.n_episodes");
  (void)cfg.getb("data.normalize_tokens");
  if (cfg.gets("model.space") != "raw") {
    (void)vae_spec_from_config(cfg, env);
  } else {
    (void)cfg.geti("model.L");
    (void)cfg.geti("model.z_dim");
    (void)cfg.geti("model.d_model");
    (void)cfg.geti("model.n_heads");
    (void)cfg.geti("model.enc_blocks");
    (void)cfg.geti("model.dec_blocks");
    (void)cfg.geti("model.head_hidden");
    (void)cfg.getd("model.kl_weight");
  }
  (void)prior_spec_from_config(cfg, env);
  (void)energy_spec_from_config(cfg, env);
  (void)planner_from_config(cfg);
  (void)cfg.geti("schedule.K");
  (void)cfg.gets("schedule.kind");
  (void)cfg.geti("train.window");
  (void)cfg.geti("train.vae_steps");
  (void)cfg.geti("train.vae_batch");
  (void)cfg.getd("train.vae_lr");
  (void)cfg.getd("train.val_fraction");
  (void)cfg.geti("train.eval_every");
  (void)cfg.geti("train.prior_steps");
  (void)cfg.geti("train.prior_batch");
  (void)cfg.getd("train.prior_lr");
  (void)cfg.geti("train.energy_steps");
  (void)cfg.geti("train.energy_batch");
  (void)cfg.getd("train.energy_lr");
  (void)cfg.getb("train.shared_support_noise");
  (void)cfg.geti("support.M");
  (void)cfg.geti("support.n_states");
  (void)cfg.getd("support.w");
  (void)cfg.getd("support.alpha_temp");
  (void)cfg.geti("plan.n_episodes");
  (void)cfg.getvu("plan.eval_seeds");
  (void)cfg.getvi("ablate.L");
  (void)cfg.getvd("ablate.beta");
  (void)cfg.getvi("ablate.H");
  (void)cfg.getvi("ablate.K");
  (void)cfg.geti("ablate.n_episodes");
  (void)cfg.getvu("ablate.eval_seeds");
  cfg.check_all_consumed();
}

int run_command(const std::string& command, const ExperimentConfig& cfg) {
  consume_registry(cfg);
  const OutPaths paths{cfg.out_dir()};
  fs::create_directories(paths.root);
  write_file(paths.resolved_config(), cfg.resolved_with_sources().dump(2) + "\n");

  if (command == "gen-data") stage_gen_data(cfg);
  else if (command == "train-vae") stage_train_vae(cfg);
  else if (command == "train-prior") stage_train_prior(cfg);
  else if (command == "gen-support") stage_gen_support(cfg);
  else if (command == "train-energy") stage_train_energy(cfg);
  else if (command == "plan") stage_plan(cfg);
  else if (command == "evaluate") stage_evaluate(cfg);
  else if (command == "ablate") stage_ablate(cfg);
  else if (command == "full") {
    stage_gen_data(cfg);
    stage_train_vae(cfg);
    stage_train_prior(cfg);
    if (cfg.getd("plan.beta") > 0.0) {
      stage_gen_support(cfg);
      stage_train_energy(cfg);
    }
    stage_evaluate(cfg);
  } else {
    throw ConfigError("unknown command: " + command);
  }
  return 0;
}

}  // namespace ldp
