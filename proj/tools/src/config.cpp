// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow_cli/config.hpp"

#include <algorithm>
#include <fstream>

namespace cflow::cli {
namespace {

Json dims_json(const DimPlan& d) {
  return {{"x_dim", d.x_dim}, {"pad", d.pad}, {"cond_dim", d.cond_dim}, {"dummy_dim", d.dummy_dim}};
}

Json flow_json(const FlowArch& a) {
  return {{"blocks", a.blocks}, {"hidden", a.hidden}, {"clamp", a.clamp}, {"permute", a.permute}};
}

DimPlan dims_from(const Json& j) {
  return {j.at("x_dim").get<int>(), j.at("pad").get<int>(), j.at("cond_dim").get<int>(), j.at("dummy_dim").get<int>()};
}

FlowArch flow_from(const Json& j, std::uint64_t seed) {
  return {j.at("blocks").get<int>(), j.at("hidden").get<int>(), j.at("clamp").get<double>(),
          j.at("permute").get<bool>(), seed};
}

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number_integer() || a.is_number_unsigned()) return b.is_number_integer() || b.is_number_unsigned();
  if (a.is_number()) return b.is_number();
  return a.type() == b.type();
}

const char* kind_name(const Json& j) { return j.is_number_integer() || j.is_number_unsigned() ? "integer" : j.type_name(); }

}  // namespace

Json gmm_defaults() {
  const gmm::ExperimentConfig c = gmm::default_experiment();
  const INNConfig& inn = c.train.inn;
  return {
      {"dims", dims_json(c.dims)},
      {"flow", flow_json(c.arch)},
      {"objective",
       {{"name", std::string(gmm::variant_name(c.variant))},
        {"epsilon", c.train.cond.epsilon},
        {"sigma_pad", c.train.cond.sigma_pad},
        {"inn",
         {{"w_y", inn.weights.w_y},
          {"w_z", inn.weights.w_z},
          {"w_x1", inn.weights.w_x1},
          {"w_x2", inn.weights.w_x2},
          {"ramp_start", inn.weights.ramp.start},
          {"ramp_end", inn.weights.ramp.end},
          {"ramp_final_scale", inn.weights.ramp.final_scale},
          {"ramp_speed", inn.weights.ramp.speed},
          {"ramp_variant_speed", c.ramp_variant_speed},
          {"perturb_std", inn.perturb_std},
          {"y_noise_std", inn.y_noise_std},
          {"detach_condition_in_latent", inn.detach_condition_in_latent},
          {"detach_latent_in_reconstruction", inn.detach_latent_in_reconstruction},
          {"backward_mmd_on_padding", inn.backward_mmd_on_padding},
          {"regression", inn.regression == RegressionLoss::squared ? "squared" : "norm"},
          {"mmd_bandwidths", inn.mmd.bandwidths},
          {"mmd_unbiased", inn.mmd.unbiased}}}}},
      {"training",
       {{"iterations", c.train.iterations},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"log_every", c.train.log_every},
        {"checkpoint_every", c.train.checkpoint_every},
        {"clip_norm", c.train.clip_norm}}},
      {"bench",
       {{"radius", c.spec.radius},
        {"component_std", c.spec.component_std},
        {"test_points", c.test_points},
        {"samples_per_class", c.samples_per_class},
        {"sample_mode", c.sample_mode == VMode::sampled ? "sampled" : "zero"}}},
      {"output_dir", "runs/gmm"},
      {"seed", c.seed},
  };
}

Json digits_defaults() {
  const digits::Config c;
  const digits::LoadOptions l;
  return {
      {"dims", dims_json(c.dims)},
      {"flow", flow_json(c.arch)},
      {"objective", {{"name", "cond_nll"}, {"epsilon", c.cond.epsilon}, {"sigma_pad", c.cond.sigma_pad}}},
      {"training", {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr}}},
      {"bench",
       {{"data", CFLOW_DEFAULT_DIGITS},
        {"train_fraction", l.train_fraction},
        {"split_seed", l.split_seed},
        {"noise_seed", l.noise_seed},
        {"dequantize", l.dequantize}}},
      {"output_dir", "runs/digits"},
      {"seed", c.seed},
  };
}

void overlay(Json& base, const Json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    Json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, path);
    } else if (slot.is_array()) {
      if (!value.is_array() || value.empty() || !std::all_of(value.begin(), value.end(), [](const Json& v) {
            return v.is_number();
          })) {
        throw ConfigError("config key '" + path + "' must be a non-empty array of numbers");
      }
      slot = value;
    } else {
      if (!same_kind(slot, value)) {
        throw ConfigError("config key '" + path + "' must be " + kind_name(slot) + ", got " + kind_name(value));
      }
      if (slot.is_number_unsigned() && value.is_number_integer() && value.get<long long>() < 0) {
        throw ConfigError("config key '" + path + "' must be non-negative");
      }
      slot = value;
    }
  }
}

Json overlay_file(const Json& base, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  Json patch;
  try {
    patch = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON at byte " + std::to_string(e.byte));
  }
  Json out = base;
  try {
    overlay(out, patch);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()) + " in " + path.string());
  }
  return out;
}

gmm::ExperimentConfig gmm_config(const Json& doc) {
  gmm::ExperimentConfig c = gmm::default_experiment();
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.dims = dims_from(doc.at("dims"));
  c.arch = flow_from(doc.at("flow"), c.seed);

  const Json& o = doc.at("objective");
  try {
    c.variant = gmm::parse_variant(o.at("name").get<std::string>());
  } catch (const DomainError&) {
    throw ConfigError("objective.name must be one of cond_nll, inn_full, inn_forward_only, inn_ramp_variant; got '" +
                      o.at("name").get<std::string>() + "'");
  }
  c.train.cond.epsilon = o.at("epsilon").get<double>();
  c.train.cond.sigma_pad = o.at("sigma_pad").get<double>();

  const Json& i = o.at("inn");
  INNConfig& inn = c.train.inn;
  inn.sigma_pad = c.train.cond.sigma_pad;
  inn.weights.w_y = i.at("w_y").get<double>();
  inn.weights.w_z = i.at("w_z").get<double>();
  inn.weights.w_x1 = i.at("w_x1").get<double>();
  inn.weights.w_x2 = i.at("w_x2").get<double>();
  inn.weights.ramp.start = i.at("ramp_start").get<int>();
  inn.weights.ramp.end = i.at("ramp_end").get<int>();
  inn.weights.ramp.final_scale = i.at("ramp_final_scale").get<double>();
  inn.weights.ramp.speed = i.at("ramp_speed").get<double>();
  c.ramp_variant_speed = i.at("ramp_variant_speed").get<double>();
  inn.perturb_std = i.at("perturb_std").get<double>();
  inn.y_noise_std = i.at("y_noise_std").get<double>();
  inn.detach_condition_in_latent = i.at("detach_condition_in_latent").get<bool>();
  inn.detach_latent_in_reconstruction = i.at("detach_latent_in_reconstruction").get<bool>();
  inn.backward_mmd_on_padding = i.at("backward_mmd_on_padding").get<bool>();
  const std::string reg = i.at("regression").get<std::string>();
  if (reg != "squared" && reg != "norm") throw ConfigError("objective.inn.regression must be squared or norm");
  inn.regression = reg == "squared" ? RegressionLoss::squared : RegressionLoss::norm;
  inn.mmd.bandwidths = i.at("mmd_bandwidths").get<std::vector<double>>();
  inn.mmd.unbiased = i.at("mmd_unbiased").get<bool>();

  const Json& t = doc.at("training");
  c.train.iterations = t.at("iterations").get<int>();
  c.train.batch_size = t.at("batch_size").get<int>();
  c.train.lr = t.at("lr").get<double>();
  c.train.log_every = t.at("log_every").get<int>();
  c.train.checkpoint_every = t.at("checkpoint_every").get<int>();
  c.train.clip_norm = t.at("clip_norm").get<double>();

  const Json& b = doc.at("bench");
  c.spec.radius = b.at("radius").get<double>();
  c.spec.component_std = b.at("component_std").get<double>();
  c.test_points = b.at("test_points").get<int>();
  c.samples_per_class = b.at("samples_per_class").get<int>();
  const std::string mode = b.at("sample_mode").get<std::string>();
  if (mode != "sampled" && mode != "zero") throw ConfigError("bench.sample_mode must be sampled or zero");
  c.sample_mode = mode == "sampled" ? VMode::sampled : VMode::zero;

  // Surface domain problems as config errors before any training starts.
  try {
    c.dims.validate();
    c.spec.validate();
    gmm::variant_train_config(c).validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.arch.blocks < 1 || c.arch.hidden < 1) throw ConfigError("flow.blocks and flow.hidden must be positive");
  if (c.train.iterations < 1) throw ConfigError("training.iterations must be >= 1");
  if (c.test_points < 1 || c.samples_per_class < 2) {
    throw ConfigError("bench.test_points must be >= 1 and bench.samples_per_class >= 2");
  }
  return c;
}

DigitsSettings digits_config(const Json& doc) {
  DigitsSettings s;
  digits::Config& c = s.config;
  c.seed = doc.at("seed").get<std::uint64_t>();
  c.dims = dims_from(doc.at("dims"));
  c.arch = flow_from(doc.at("flow"), c.seed);
  const Json& o = doc.at("objective");
  if (o.at("name").get<std::string>() != "cond_nll") throw ConfigError("digits training supports objective.name cond_nll only");
  c.cond.epsilon = o.at("epsilon").get<double>();
  c.cond.sigma_pad = o.at("sigma_pad").get<double>();
  const Json& t = doc.at("training");
  c.epochs = t.at("epochs").get<int>();
  c.batch_size = t.at("batch_size").get<int>();
  c.lr = t.at("lr").get<double>();
  const Json& b = doc.at("bench");
  s.data = b.at("data").get<std::string>();
  s.load.train_fraction = b.at("train_fraction").get<double>();
  s.load.split_seed = b.at("split_seed").get<std::uint64_t>();
  s.load.noise_seed = b.at("noise_seed").get<std::uint64_t>();
  s.load.dequantize = b.at("dequantize").get<bool>();

  try {
    c.dims.validate();
    c.cond.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.arch.blocks < 1 || c.arch.hidden < 1) throw ConfigError("flow.blocks and flow.hidden must be positive");
  if (c.dims.x_dim != digits::kPixels || c.dims.cond_dim != digits::kClasses) {
    throw ConfigError("digits needs dims.x_dim = 64 and dims.cond_dim = 10");
  }
  if (c.epochs < 1 || c.batch_size < 2 || !(c.lr > 0.0)) {
    throw ConfigError("training.epochs >= 1, training.batch_size >= 2 and training.lr > 0 are required");
  }
  if (!(s.load.train_fraction > 0.0 && s.load.train_fraction < 1.0)) {
    throw ConfigError("bench.train_fraction must lie in (0, 1)");
  }
  return s;
}

void write_echo(const Json& doc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.echo", std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << '\n';
  if (!out) throw Error("cannot write " + (dir / "config.echo").string());
}

}  // namespace cflow::cli
