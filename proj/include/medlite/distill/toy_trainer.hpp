// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/core/matrix.hpp"
#include "medlite/core/random.hpp"
#include "medlite/distill/loss.hpp"
#include "medlite/distill/progressive.hpp"
#include "medlite/distill/schedule.hpp"

namespace medlite {

// Two-layer perceptron: logits = W2 tanh(W1 x + b1) + b2.
struct Mlp {
  Matrix w1;  // hidden x in
  std::vector<double> b1;
  Matrix w2;  // out x hidden
  std::vector<double> b2;

  std::size_t in_dim() const noexcept { return w1.cols(); }
  std::size_t hidden_dim() const noexcept { return w1.rows(); }
  std::size_t out_dim() const noexcept { return w2.rows(); }

  static Mlp zeros(std::size_t in, std::size_t hidden, std::size_t out) {
    return Mlp{Matrix(hidden, in), std::vector<double>(hidden, 0.0), Matrix(out, hidden),
               std::vector<double>(out, 0.0)};
  }

  static Mlp random(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, double in_gain = 1.0,
                    double out_gain = 1.0) {
    Mlp m = zeros(in, hidden, out);
    m.w1 = Matrix::random_normal(hidden, in, rng, in_gain / std::sqrt(static_cast<double>(in)));
    m.w2 = Matrix::random_normal(out, hidden, rng, out_gain / std::sqrt(static_cast<double>(hidden)));
    return m;
  }

  std::array<std::span<double>, 4> params() { return {w1.data(), b1, w2.data(), b2}; }
  std::array<std::span<const double>, 4> params() const { return {w1.data(), b1, w2.data(), b2}; }

  struct Activations {
    Matrix hidden;  // N x hidden, post-tanh
    Matrix logits;  // N x out
  };

  // x is N x in.
  Activations forward(const Matrix& x) const {
    if (x.cols() != in_dim()) throw DimensionError("mlp input width mismatch");
    Activations a{Matrix(x.rows(), hidden_dim()), Matrix(x.rows(), out_dim())};
    for (std::size_t n = 0; n < x.rows(); ++n) {
      for (std::size_t j = 0; j < hidden_dim(); ++j) {
        double acc = b1[j];
        for (std::size_t i = 0; i < in_dim(); ++i) acc += w1(j, i) * x(n, i);
        a.hidden(n, j) = std::tanh(acc);
      }
      for (std::size_t o = 0; o < out_dim(); ++o) {
        double acc = b2[o];
        for (std::size_t j = 0; j < hidden_dim(); ++j) acc += w2(o, j) * a.hidden(n, j);
        a.logits(n, o) = acc;
      }
    }
    return a;
  }

  // Parameter gradient given dL/dlogits and an extra dL/dhidden term (may be
  // an empty matrix).
  Mlp backward(const Matrix& x, const Activations& act, const Matrix& d_logits, const Matrix& d_hidden) const {
    Mlp g = zeros(in_dim(), hidden_dim(), out_dim());
    const bool extra = d_hidden.size() > 0;
    for (std::size_t n = 0; n < x.rows(); ++n) {
      for (std::size_t o = 0; o < out_dim(); ++o) {
        const double dz = d_logits(n, o);
        g.b2[o] += dz;
        for (std::size_t j = 0; j < hidden_dim(); ++j) g.w2(o, j) += dz * act.hidden(n, j);
      }
      for (std::size_t j = 0; j < hidden_dim(); ++j) {
        double dh = extra ? d_hidden(n, j) : 0.0;
        for (std::size_t o = 0; o < out_dim(); ++o) dh += d_logits(n, o) * w2(o, j);
        const double h = act.hidden(n, j);
        const double dpre = dh * (1.0 - h * h);
        g.b1[j] += dpre;
        for (std::size_t i = 0; i < in_dim(); ++i) g.w1(j, i) += dpre * x(n, i);
      }
    }
    return g;
  }
};

inline double global_norm(const Mlp& g) {
  double s = 0.0;
  for (auto p : g.params())
    for (double v : p) s += v * v;
  return std::sqrt(s);
}

// Rescales g so its global L2 norm is at most max_norm. Returns the norm
// before clipping.
inline double clip_gradient_norm(Mlp& g, double max_norm) {
  const double norm = global_norm(g);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto p : g.params())
      for (double& v : p) v *= s;
  }
  return norm;
}

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const Mlp& shape, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(Mlp::zeros(shape.in_dim(), shape.hidden_dim(), shape.out_dim())),
        v_(m_),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {}

  void step(Mlp& params, const Mlp& grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto p = params.params();
    auto g = grad.params();
    auto m = m_.params();
    auto v = v_.params();
    for (std::size_t k = 0; k < p.size(); ++k) {
      for (std::size_t i = 0; i < p[k].size(); ++i) {
        m[k][i] = beta1_ * m[k][i] + (1.0 - beta1_) * g[k][i];
        v[k][i] = beta2_ * v[k][i] + (1.0 - beta2_) * g[k][i] * g[k][i];
        p[k][i] -= lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps_);
      }
    }
  }

 private:
  Mlp m_;
  Mlp v_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct ToyDistillConfig {
  std::size_t input_dim = 8;
  std::size_t classes = 3;
  std::size_t teacher_width = 32;
  std::size_t student_width = 16;
  std::int64_t steps = 500;
  std::size_t batch_size = 64;
  std::size_t epochs = 3;
  std::size_t eval_samples = 1024;
  std::uint64_t seed = 7;
  // Toy-scale learning rates; the full-model range is 1e-5..5e-5.
  double eta_min = 1e-3;
  double eta_max = 2e-2;
  std::int64_t restarts = 1;
  double temperature = 2.0;
  DistillLossWeights lambda{0.5, 1.0, 0.1, 0.5};
  double grad_clip = 1.0;
  // Start the student as an exact copy of the teacher (requires equal widths).
  bool student_from_teacher = false;
  EntityWeights entities = {{"dosage", {0}, 2.0}, {"contraindication", {1}, 2.0}, {"criteria", {2}, 2.0}};

  void validate() const {
    if (input_dim == 0 || classes < 2 || teacher_width == 0 || student_width == 0) {
      throw DomainError("toy network dimensions must be positive (classes >= 2)");
    }
    if (teacher_width < student_width) throw DomainError("teacher width must be >= student width");
    if (student_from_teacher && teacher_width != student_width) {
      throw DomainError("student_from_teacher requires equal widths");
    }
    if (steps < 1 || batch_size == 0 || epochs == 0 || eval_samples == 0) {
      throw DomainError("steps, batch size, epochs and eval samples must be positive");
    }
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    if (!(grad_clip > 0.0)) throw DomainError("grad clip must be positive");
    lambda.validate();
    validate_entities(entities, classes);
    TrainingSchedule{eta_min, eta_max, steps, restarts}.validate();
  }
};

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  DistillLossValue loss;
};

struct ToyDistillReport {
  std::vector<StepRecord> trace;
  double initial_kl = 0.0;
  double final_kl = 0.0;
  std::size_t samples = 0;
  std::size_t batches_per_epoch = 0;
  std::optional<std::int64_t> diverged_at;

  bool ok() const noexcept { return !diverged_at.has_value(); }
};

// Writes "step,lr,total,ce,kl,mse,entity" lines.
inline void write_metrics(std::ostream& out, const ToyDistillReport& report) {
  out << "step,lr,total,ce,kl,mse,entity\n";
  char line[256];
  for (const auto& r : report.trace) {
    std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step), r.lr,
                  r.loss.total, r.loss.ce, r.loss.kl, r.loss.mse, r.loss.entity);
    out << line;
  }
}

namespace detail {

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace detail

// Distils a random teacher MLP into a narrower student on a synthetic
// classification task. Samples are visited in progressive order (ascending
// input norm as the complexity key), cycling over `epochs` passes; the data
// set is sized so that `epochs` passes cover `steps` batches. Teacher hidden
// states are mapped to the student width by a fixed random projection.
inline ToyDistillReport train_toy_distill(const ToyDistillConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  const Mlp teacher = Mlp::random(cfg.input_dim, cfg.teacher_width, cfg.classes, rng, 1.5, 3.0);
  Mlp student = cfg.student_from_teacher
                    ? teacher
                    : Mlp::random(cfg.input_dim, cfg.student_width, cfg.classes, rng, 1.0, 1.0);

  Matrix projection;  // student_width x teacher_width
  if (cfg.teacher_width == cfg.student_width) {
    projection = Matrix::identity(cfg.student_width);
  } else {
    projection = Matrix::random_normal(cfg.student_width, cfg.teacher_width, rng,
                                       1.0 / std::sqrt(static_cast<double>(cfg.teacher_width)));
  }
  const Matrix projection_t = projection.transposed();

  const auto steps = static_cast<std::size_t>(cfg.steps);
  const std::size_t batches_per_epoch = (steps + cfg.epochs - 1) / cfg.epochs;
  const std::size_t samples = batches_per_epoch * cfg.batch_size;

  const Matrix x = Matrix::random_normal(samples, cfg.input_dim, rng);
  const Matrix x_eval = Matrix::random_normal(cfg.eval_samples, cfg.input_dim, rng);

  std::vector<double> complexity(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    complexity[i] = std::sqrt(s);
  }
  const auto batches = progressive_batches(complexity, cfg.batch_size);

  const auto teacher_act = teacher.forward(x);
  const Matrix teacher_hidden = matmul(teacher_act.hidden, projection_t);
  const auto labels = detail::argmax_rows(teacher_act.logits);
  const Matrix teacher_eval_logits = teacher.forward(x_eval).logits;

  ToyDistillReport report;
  report.samples = samples;
  report.batches_per_epoch = batches.size();
  report.initial_kl = mean_kl(teacher_eval_logits, student.forward(x_eval).logits);

  const TrainingSchedule schedule{cfg.eta_min, cfg.eta_max, cfg.steps, cfg.restarts};
  AdamOptimizer adam(student);
  report.trace.reserve(steps);

  for (std::size_t step = 0; step < steps; ++step) {
    const auto& rows = batches[step % batches.size()];
    const double lr = lr_at(schedule, static_cast<std::int64_t>(step));

    const Matrix xb = detail::gather_rows(x, rows);
    const auto act = student.forward(xb);
    LogitsBatch batch;
    batch.student_logits = act.logits;
    batch.teacher_logits = detail::gather_rows(teacher_act.logits, rows);
    batch.student_hidden = act.hidden;
    batch.teacher_hidden = detail::gather_rows(teacher_hidden, rows);
    batch.labels.reserve(rows.size());
    for (std::size_t r : rows) batch.labels.push_back(labels[r]);

    if (!batch.student_logits.all_finite() || !batch.student_hidden.all_finite()) {
      report.diverged_at = static_cast<std::int64_t>(step);
      break;
    }
    DistillLossGrad grad;
    const auto loss = distill_loss(batch, cfg.entities, cfg.lambda, cfg.temperature, &grad);
    report.trace.push_back({static_cast<std::int64_t>(step), lr, loss});
    if (!std::isfinite(loss.total)) {
      report.diverged_at = static_cast<std::int64_t>(step);
      break;
    }

    Mlp g = student.backward(xb, act, grad.student_logits, grad.student_hidden);
    clip_gradient_norm(g, cfg.grad_clip);
    adam.step(student, g, lr);
  }

  report.final_kl = mean_kl(teacher_eval_logits, student.forward(x_eval).logits);
  if (!std::isfinite(report.final_kl) && !report.diverged_at) report.diverged_at = cfg.steps;
  return report;
}

}  // namespace medlite
