// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "medlite/core/error.hpp"
#include "medlite/core/matrix.hpp"

namespace medlite {

struct DistillLossWeights {
  double ce = 1.0;      // lambda1
  double kl = 1.0;      // lambda2
  double mse = 1.0;     // lambda3
  double entity = 1.0;  // lambda4

  void validate() const {
    for (double w : {ce, kl, mse, entity}) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("loss weights must be finite and non-negative");
    }
    if (ce == 0.0 && kl == 0.0 && mse == 0.0 && entity == 0.0) {
      throw DomainError("at least one loss weight must be positive");
    }
  }

  friend bool operator==(const DistillLossWeights&, const DistillLossWeights&) = default;
};

// A tagged entity: a set of vocabulary indices whose summed probability is
// the entity's probability, and its importance weight.
struct Entity {
  std::string id;
  std::vector<std::size_t> tokens;
  double weight = 1.0;
};

using EntityWeights = std::vector<Entity>;

struct LogitsBatch {
  Matrix student_logits;  // N x V
  Matrix teacher_logits;  // N x V
  std::vector<std::size_t> labels;
  Matrix student_hidden;  // N x H, H may be 0
  Matrix teacher_hidden;  // N x H, already projected to the student width

  std::size_t batch() const noexcept { return student_logits.rows(); }
  std::size_t vocab() const noexcept { return student_logits.cols(); }

  void validate() const {
    const std::size_t n = batch();
    const std::size_t v = vocab();
    if (n == 0 || v == 0) throw DimensionError("logits batch is empty");
    if (teacher_logits.rows() != n || teacher_logits.cols() != v) {
      throw DimensionError("teacher logits shape differs from student logits");
    }
    if (labels.size() != n) throw DimensionError("label count differs from batch size");
    for (std::size_t l : labels) {
      if (l >= v) throw DimensionError("label " + std::to_string(l) + " outside vocabulary");
    }
    if (student_hidden.rows() != teacher_hidden.rows() || student_hidden.cols() != teacher_hidden.cols()) {
      throw DimensionError("student and teacher hidden states differ in shape");
    }
    if (student_hidden.cols() > 0 && student_hidden.rows() != n) {
      throw DimensionError("hidden state rows differ from batch size");
    }
    if (!student_logits.all_finite() || !teacher_logits.all_finite() || !student_hidden.all_finite() ||
        !teacher_hidden.all_finite()) {
      throw DomainError("logits batch contains non-finite values");
    }
  }
};

inline void validate_entities(const EntityWeights& entities, std::size_t vocab) {
  std::set<std::string> ids;
  for (const auto& e : entities) {
    if (!ids.insert(e.id).second) throw DomainError("duplicate entity id '" + e.id + "'");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw DomainError("entity '" + e.id + "' weight must be finite and positive");
    }
    for (std::size_t t : e.tokens) {
      if (t >= vocab) throw DimensionError("entity '" + e.id + "' token outside vocabulary");
    }
  }
}

// Row-wise softmax of logits / temperature.
inline Matrix softmax_rows(const Matrix& logits, double temperature = 1.0) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    auto p = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      p[c] = std::exp((in[c] - mx) / temperature);
      sum += p[c];
    }
    for (double& x : p) x /= sum;
  }
  return out;
}

// Row-wise log-softmax of logits / temperature.
inline Matrix log_softmax_rows(const Matrix& logits, double temperature = 1.0) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto in = logits.row(r);
    auto lp = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double x : in) sum += std::exp((x - mx) / temperature);
    const double lse = std::log(sum);
    for (std::size_t c = 0; c < in.size(); ++c) lp[c] = (in[c] - mx) / temperature - lse;
  }
  return out;
}

// Mean over rows of KL(softmax(teacher / T) || softmax(student / T)).
inline double mean_kl(const Matrix& teacher_logits, const Matrix& student_logits, double temperature = 1.0) {
  const Matrix lp = log_softmax_rows(teacher_logits, temperature);
  const Matrix lq = log_softmax_rows(student_logits, temperature);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double p = std::exp(lp.data()[i]);
    if (p > 0.0) kl += p * (lp.data()[i] - lq.data()[i]);
  }
  return std::max(0.0, kl / static_cast<double>(teacher_logits.rows()));
}

// Unweighted terms plus the weighted total.
struct DistillLossValue {
  double total = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  double mse = 0.0;
  double entity = 0.0;  // sum_e w_e |P_S(e) - P_T(e)|
};

struct DistillLossGrad {
  Matrix student_logits;  // dL/dz, N x V
  Matrix student_hidden;  // dL/dh, N x H
};

// Composite distillation objective, every term mean-reduced over the batch:
//   ce      cross-entropy of softmax(student) against labels
//   kl      KL(teacher_T || student_T) at the shared temperature
//   mse     mean squared difference of hidden states over all N*H entries
//   entity  sum_e w_e |P_S(e) - P_T(e)|, where P(e) is the softmax mass
//           (temperature 1) on the entity's tokens averaged over the batch
// When `grad` is non-null it receives the analytic gradient of the total.
inline DistillLossValue distill_loss(const LogitsBatch& batch, const EntityWeights& entities,
                                     const DistillLossWeights& lambda, double temperature,
                                     DistillLossGrad* grad = nullptr) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw DomainError("temperature must be positive");
  batch.validate();
  lambda.validate();
  validate_entities(entities, batch.vocab());

  const std::size_t n = batch.batch();
  const std::size_t v = batch.vocab();
  const double inv_n = 1.0 / static_cast<double>(n);

  const Matrix s1 = softmax_rows(batch.student_logits);
  const Matrix ls1 = log_softmax_rows(batch.student_logits);
  const Matrix t1 = softmax_rows(batch.teacher_logits);
  const Matrix pt = softmax_rows(batch.teacher_logits, temperature);
  const Matrix qt = softmax_rows(batch.student_logits, temperature);

  DistillLossValue out;
  for (std::size_t i = 0; i < n; ++i) out.ce -= ls1(i, batch.labels[i]);
  out.ce *= inv_n;
  out.kl = mean_kl(batch.teacher_logits, batch.student_logits, temperature);

  const std::size_t h = batch.student_hidden.cols();
  if (h > 0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < batch.student_hidden.size(); ++i) {
      const double d = batch.student_hidden.data()[i] - batch.teacher_hidden.data()[i];
      sq += d * d;
    }
    out.mse = sq / static_cast<double>(batch.student_hidden.size());
  }

  // Per-row entity mass for the student is kept for the gradient.
  std::vector<std::vector<double>> row_mass(entities.size(), std::vector<double>(n, 0.0));
  std::vector<double> sign(entities.size(), 0.0);
  for (std::size_t e = 0; e < entities.size(); ++e) {
    const std::set<std::size_t> toks(entities[e].tokens.begin(), entities[e].tokens.end());
    double ps = 0.0, ptm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double ms = 0.0, mt = 0.0;
      for (std::size_t tok : toks) {
        ms += s1(i, tok);
        mt += t1(i, tok);
      }
      row_mass[e][i] = ms;
      ps += ms;
      ptm += mt;
    }
    ps *= inv_n;
    ptm *= inv_n;
    const double diff = ps - ptm;
    sign[e] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out.entity += entities[e].weight * std::abs(diff);
  }

  out.total = lambda.ce * out.ce + lambda.kl * out.kl + lambda.mse * out.mse + lambda.entity * out.entity;

  if (grad) {
    grad->student_logits = Matrix(n, v);
    grad->student_hidden = Matrix(n, h);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < v; ++j) {
        double g = lambda.ce * (s1(i, j) - (batch.labels[i] == j ? 1.0 : 0.0));
        g += lambda.kl * (qt(i, j) - pt(i, j)) / temperature;
        grad->student_logits(i, j) = g * inv_n;
      }
    }
    for (std::size_t e = 0; e < entities.size(); ++e) {
      if (sign[e] == 0.0) continue;
      const std::set<std::size_t> toks(entities[e].tokens.begin(), entities[e].tokens.end());
      const double coeff = lambda.entity * entities[e].weight * sign[e] * inv_n;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < v; ++j) {
          const double in_set = toks.count(j) ? 1.0 : 0.0;
          grad->student_logits(i, j) += coeff * s1(i, j) * (in_set - row_mass[e][i]);
        }
      }
    }
    if (h > 0) {
      const double c = lambda.mse * 2.0 / static_cast<double>(batch.student_hidden.size());
      for (std::size_t i = 0; i < batch.student_hidden.size(); ++i) {
        grad->student_hidden.data()[i] = c * (batch.student_hidden.data()[i] - batch.teacher_hidden.data()[i]);
      }
    }
  }
  return out;
}

}  // namespace medlite
