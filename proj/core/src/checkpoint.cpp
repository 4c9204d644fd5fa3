// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cflow/errors.hpp"
#include "cflow/training.hpp"

namespace cflow {
namespace {

using json = nlohmann::ordered_json;

constexpr const char* kFormatName = "cflow-checkpoint";

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw DataError("checkpoint array length does not match its shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
  return m;
}

const char* regression_name(RegressionLoss r) { return r == RegressionLoss::squared ? "squared" : "norm"; }

json config_to_json(const TrainConfig& c) {
  const auto& w = c.inn.weights;
  return {{"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"lr", c.lr},
          {"objective", c.objective == ObjectiveKind::cond_nll ? "cond_nll" : "inn"},
          {"cond", {{"epsilon", c.cond.epsilon}, {"sigma_pad", c.cond.sigma_pad}}},
          {"inn",
           {{"sigma_pad", c.inn.sigma_pad},
            {"perturb_std", c.inn.perturb_std},
            {"y_noise_std", c.inn.y_noise_std},
            {"detach_condition_in_latent", c.inn.detach_condition_in_latent},
            {"detach_latent_in_reconstruction", c.inn.detach_latent_in_reconstruction},
            {"backward_mmd_on_padding", c.inn.backward_mmd_on_padding},
            {"regression", regression_name(c.inn.regression)},
            {"mmd_bandwidths", c.inn.mmd.bandwidths},
            {"mmd_unbiased", c.inn.mmd.unbiased},
            {"w_y", w.w_y},
            {"w_z", w.w_z},
            {"w_x1", w.w_x1},
            {"w_x2", w.w_x2},
            {"ramp_start", w.ramp.start},
            {"ramp_end", w.ramp.end},
            {"ramp_final", w.ramp.final_scale},
            {"ramp_speed", w.ramp.speed}}},
          {"log_every", c.log_every},
          {"checkpoint_every", c.checkpoint_every},
          {"clip_norm", c.clip_norm}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lr = j.at("lr").get<double>();
  c.objective = j.at("objective").get<std::string>() == "inn" ? ObjectiveKind::inn : ObjectiveKind::cond_nll;
  c.cond.epsilon = j.at("cond").at("epsilon").get<double>();
  c.cond.sigma_pad = j.at("cond").at("sigma_pad").get<double>();
  const auto& in = j.at("inn");
  c.inn.sigma_pad = in.at("sigma_pad").get<double>();
  c.inn.perturb_std = in.at("perturb_std").get<double>();
  c.inn.y_noise_std = in.at("y_noise_std").get<double>();
  c.inn.detach_condition_in_latent = in.at("detach_condition_in_latent").get<bool>();
  c.inn.detach_latent_in_reconstruction = in.at("detach_latent_in_reconstruction").get<bool>();
  c.inn.backward_mmd_on_padding = in.at("backward_mmd_on_padding").get<bool>();
  c.inn.regression = in.at("regression").get<std::string>() == "norm" ? RegressionLoss::norm : RegressionLoss::squared;
  c.inn.mmd.bandwidths = in.at("mmd_bandwidths").get<std::vector<double>>();
  c.inn.mmd.unbiased = in.at("mmd_unbiased").get<bool>();
  auto& w = c.inn.weights;
  w.w_y = in.at("w_y").get<double>();
  w.w_z = in.at("w_z").get<double>();
  w.w_x1 = in.at("w_x1").get<double>();
  w.w_x2 = in.at("w_x2").get<double>();
  w.ramp.start = in.at("ramp_start").get<int>();
  w.ramp.end = in.at("ramp_end").get<int>();
  w.ramp.final_scale = in.at("ramp_final").get<double>();
  w.ramp.speed = in.at("ramp_speed").get<double>();
  c.log_every = j.at("log_every").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.clip_norm = j.at("clip_norm").get<double>();
  return c;
}

}  // namespace

namespace {

void write_array(std::ostream& out, const Matrix& m) {
  out << "{\"rows\": " << m.rows() << ", \"cols\": " << m.cols() << ", \"data\": [";
  char buf[32];
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    if (!std::isfinite(v)) throw DataError("cannot checkpoint a non-finite value");
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    if (i > 0) out << ',';
    out.write(buf, res.ptr - buf);
  }
  out << "]}";
}

void write_checkpoint(std::ostream& out, const FlowModel& model, const AdamState& optimizer, const TrainConfig& config,
                      const Rng& rng) {
  const auto& d = model.dims();
  const auto& a = model.arch();
  json perms = json::array();
  for (const auto& p : model.permutations()) perms.push_back(p.indices());
  const json dims = {{"x_dim", d.x_dim}, {"pad", d.pad}, {"cond_dim", d.cond_dim}, {"dummy_dim", d.dummy_dim}};
  const json arch = {{"blocks", a.blocks},   {"hidden", a.hidden}, {"clamp", a.clamp},
                     {"permute", a.permute}, {"seed", a.seed},     {"permutations", std::move(perms)}};

  out << "{\n \"format\": " << json(kFormatName).dump() << ",\n \"version\": " << kCheckpointVersion
      << ",\n \"dims\": " << dims.dump() << ",\n \"arch\": " << arch.dump() << ",\n \"params\": [";
  const auto& store = model.params();
  for (ParamId id = 0; id < store.size(); ++id) {
    out << (id > 0 ? ",\n  " : "\n  ") << "{\"name\": " << json(store.name(id)).dump() << ", \"value\": ";
    write_array(out, store.value(id).matrix());
    out << '}';
  }
  out << "\n ],\n \"optimizer\": {\"lr\": " << json(optimizer.lr).dump() << ", \"beta1\": " << json(optimizer.beta1).dump()
      << ", \"beta2\": " << json(optimizer.beta2).dump() << ", \"eps_hat\": " << json(optimizer.eps_hat).dump()
      << ", \"t\": " << optimizer.t;
  for (const auto* moments : {&optimizer.m, &optimizer.v}) {
    out << ",\n  \"" << (moments == &optimizer.m ? 'm' : 'v') << "\": [";
    for (std::size_t i = 0; i < moments->size(); ++i) {
      out << (i > 0 ? ",\n   " : "\n   ");
      write_array(out, (*moments)[i]);
    }
    out << "]";
  }
  out << "},\n \"train_config\": " << config_to_json(config).dump() << ",\n \"rng\": " << json(rng.state()).dump()
      << "\n}\n";
}

}  // namespace

std::string checkpoint_to_string(const FlowModel& model, const AdamState& optimizer, const TrainConfig& config,
                                 const Rng& rng) {
  std::ostringstream out;
  write_checkpoint(out, model, optimizer, config, rng);
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, const AdamState& optimizer,
                     const TrainConfig& config, const Rng& rng) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, model, optimizer, config, rng);
  out.flush();
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

namespace {

template <typename Source>
json parse_document(Source&& src) {
  try {
    return json::parse(std::forward<Source>(src));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint parse error: ") + e.what(), e.byte, ParseError::Unit::byte);
  }
}

Checkpoint checkpoint_from_json(const json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", std::string{}) != kFormatName) {
      throw DataError("not a cflow checkpoint");
    }
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
    }

    const auto& jd = doc.at("dims");
    DimPlan dims{jd.at("x_dim").get<int>(), jd.at("pad").get<int>(), jd.at("cond_dim").get<int>(),
                 jd.at("dummy_dim").get<int>()};
    const auto& ja = doc.at("arch");
    FlowArch arch;
    arch.blocks = ja.at("blocks").get<int>();
    arch.hidden = ja.at("hidden").get<int>();
    arch.clamp = ja.at("clamp").get<double>();
    arch.permute = ja.at("permute").get<bool>();
    arch.seed = ja.at("seed").get<std::uint64_t>();

    FlowModel model(dims, arch);
    std::vector<Permutation> perms;
    for (const auto& p : ja.at("permutations")) perms.emplace_back(p.get<std::vector<int>>());
    model.set_permutations(std::move(perms));

    auto& store = model.params();
    const auto& jp = doc.at("params");
    if (jp.size() != store.size()) throw DataError("checkpoint parameter count does not match architecture");
    for (ParamId id = 0; id < store.size(); ++id) {
      const auto& entry = jp[id];
      if (entry.at("name").get<std::string>() != store.name(id)) {
        throw DataError("checkpoint parameter '" + entry.at("name").get<std::string>() + "' where '" +
                        store.name(id) + "' was expected");
      }
      Matrix m = matrix_from_json(entry.at("value"));
      if (m.rows() != store.value(id).rows() || m.cols() != store.value(id).cols()) {
        throw DataError("checkpoint parameter '" + store.name(id) + "' has the wrong shape");
      }
      store.value(id).matrix() = std::move(m);
    }

    const auto& jo = doc.at("optimizer");
    AdamState opt;
    opt.lr = jo.at("lr").get<double>();
    opt.beta1 = jo.at("beta1").get<double>();
    opt.beta2 = jo.at("beta2").get<double>();
    opt.eps_hat = jo.at("eps_hat").get<double>();
    opt.t = jo.at("t").get<std::int64_t>();
    for (const auto& e : jo.at("m")) opt.m.push_back(matrix_from_json(e));
    for (const auto& e : jo.at("v")) opt.v.push_back(matrix_from_json(e));
    if (opt.m.size() != opt.v.size() || (!opt.m.empty() && opt.m.size() != store.size())) {
      throw DataError("checkpoint optimizer moments do not match the parameters");
    }
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
      const auto& p = store.value(i);
      if (opt.m[i].rows() != p.rows() || opt.m[i].cols() != p.cols() || opt.v[i].rows() != p.rows() ||
          opt.v[i].cols() != p.cols()) {
        throw DataError("checkpoint optimizer moment for '" + store.name(i) + "' has the wrong shape");
      }
    }

    return {std::move(model), std::move(opt), config_from_json(doc.at("train_config")),
            doc.at("rng").get<std::string>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace

Checkpoint checkpoint_from_string(const std::string& text) { return checkpoint_from_json(parse_document(text)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  return checkpoint_from_json(parse_document(in));
}

}  // namespace cflow
