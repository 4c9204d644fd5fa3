// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cflow/errors.hpp"
#include "cflow/ops.hpp"
#include "cflow/rng.hpp"

namespace cflow {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double eval_loss(const LossClosure& loss) {
  Tape tape;
  return tape.value(loss(tape))(0, 0);
}

}  // namespace

GradCheckReport gradcheck(const LossClosure& loss, ParamStore& params, const GradCheckOptions& opts) {
  if (!(opts.h > 0.0)) throw DomainError("gradcheck: step h must be positive");

  params.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape), params);
  }

  Rng rng(opts.seed);
  GradCheckReport report;
  for (ParamId id = 0; id < params.size(); ++id) {
    auto values = params.value(id).values();
    const auto grads = params.grad(id).values();

    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.coords_per_param > 0 && opts.coords_per_param < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(opts.coords_per_param);
    }

    ParamCheck pc{params.name(id), coords.size(), 0.0, true};
    for (std::size_t k : coords) {
      const double orig = values[k];
      values[k] = orig + opts.h;
      const double up = eval_loss(loss);
      values[k] = orig - opts.h;
      const double down = eval_loss(loss);
      values[k] = orig;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double err = relative_error(grads[k], numeric, opts.floor);
      pc.max_rel_err = std::max(pc.max_rel_err, std::isnan(err) ? INFINITY : err);
    }
    pc.pass = pc.max_rel_err < opts.tol;
    report.max_rel_err = std::max(report.max_rel_err, pc.max_rel_err);
    report.pass = report.pass && pc.pass;
    report.params.push_back(std::move(pc));
  }
  params.zero_grad();
  return report;
}

FlowCheckReport check_flow(const FlowCheckOptions& opts) {
  if (opts.width < 2) throw DimensionError("width must allow a split (got " + std::to_string(opts.width) + ")");
  if (opts.blocks < 1) throw DimensionError("blocks must be at least 1");
  if (opts.hidden < 1 || opts.batch < 1) throw DomainError("hidden and batch must be positive");

  FlowModel model(DimPlan{opts.width, 0, 1, opts.width - 1}, FlowArch{opts.blocks, opts.hidden, 2.0, true, opts.seed});
  Rng rng(Rng::derive_seed(opts.seed, 1));
  model.randomize(rng, 0.5);
  const Tensor x = rng.normal(opts.batch, opts.width);

  FlowCheckReport report;
  GradCheckOptions g;
  g.tol = opts.grad_tol;
  g.coords_per_param = opts.coords_per_param;
  g.seed = opts.seed;
  report.grad = gradcheck(
      [&](Tape& t) {
        const FlowOutput out = model.forward(t, t.constant(x));
        const Var sq = add(sum_rows(square(out.c_hat)), sum_rows(square(out.z)));
        return sub(scale(mean(sq), 0.5), mean(out.logdet));
      },
      model.params(), g);

  const FlowValues fv = model.forward_values(x);
  const int points = std::min<int>(opts.logdet_points, opts.batch);
  for (int i = 0; i < points; ++i) {
    const Eigen::RowVectorXd row = x.matrix().row(i);
    const double numeric = numerical_logdet(model, std::span<const double>(row.data(), row.size()));
    const double err = relative_error(fv.logdet(i, 0), numeric, 1.0);
    report.logdet_max_rel_err = std::max(report.logdet_max_rel_err, std::isnan(err) ? INFINITY : err);
  }
  report.logdet_pass = report.logdet_max_rel_err < opts.logdet_tol;
  return report;
}

}  // namespace cflow
