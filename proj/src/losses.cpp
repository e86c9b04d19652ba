#include "cte/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "parallel.hpp"

namespace cte {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Svm: return "svm";
    case LossKind::Softmax: return "softmax";
    case LossKind::SoftmaxDistill: return "softmax-distill";
  }
  return "unknown";
}

void LossConfig::validate() const {
  if (lambda <= 0.0) throw std::invalid_argument("LossConfig: lambda must be > 0");
  if (tolerance <= 0.0)
    throw std::invalid_argument("LossConfig: tolerance must be > 0");
  if (distill_alpha < 0.0 || distill_alpha > 1.0)
    throw std::invalid_argument("LossConfig: distill alpha must be in [0,1]");
  if (distill_temperature <= 0.0)
    throw std::invalid_argument("LossConfig: distill temperature must be > 0");
  if (max_iterations < 1)
    throw std::invalid_argument("LossConfig: max iterations must be >= 1");
}

void TeacherSoftLabels::validate() const {
  if (rows < 0 || classes < 1 || p.size() != size_t(rows) * classes)
    throw std::invalid_argument("TeacherSoftLabels: shape mismatch");
  for (int64_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      float v = p[size_t(i) * classes + c];
      if (v < 0.0f)
        throw std::invalid_argument("TeacherSoftLabels: negative probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("TeacherSoftLabels: row does not sum to 1");
  }
}

TeacherSoftLabels load_teacher(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open teacher file: " + path);
  auto read_u32 = [&in, &path] {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw std::runtime_error("teacher file truncated: " + path);
    return v;
  };
  TeacherSoftLabels t;
  t.rows = read_u32();
  t.classes = int(read_u32());
  in.read(reinterpret_cast<char*>(&t.temperature), 4);
  t.p.resize(size_t(t.rows) * t.classes);
  in.read(reinterpret_cast<char*>(t.p.data()),
          std::streamsize(t.p.size() * sizeof(float)));
  if (!in) throw std::runtime_error("teacher file truncated: " + path);
  t.validate();
  return t;
}

void save_teacher(const TeacherSoftLabels& t, const std::string& path) {
  t.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  uint32_t n = uint32_t(t.rows), c = uint32_t(t.classes);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&c), 4);
  out.write(reinterpret_cast<const char*>(&t.temperature), 4);
  out.write(reinterpret_cast<const char*>(t.p.data()),
            std::streamsize(t.p.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<double> compute_scores(const FeatureMatrix& H,
                                   const SolveResult& sol, int threads) {
  const int C = sol.classes;
  const int64_t N = H.rows;
  std::vector<double> scores(size_t(N) * C);
  detail::parallel_for(N, threads, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      double* s = &scores[size_t(i) * C];
      for (int c = 0; c < C; ++c) s[c] = -sol.biases[size_t(c)];
      uint64_t offset = 0;
      for (const auto& b : H.blocks) {
        for (uint64_t k = b.row_ptr[size_t(i)]; k < b.row_ptr[size_t(i) + 1];
             ++k) {
          const double v = double(b.counts[k]) / b.scale[b.words[k]];
          const uint64_t col = offset + b.words[k];
          for (int c = 0; c < C; ++c)
            s[c] += sol.weights[size_t(c) * sol.cols + col] * v;
        }
        offset += b.cells;
      }
    }
  });
  return scores;
}

namespace {

// Row-sparse view of one example used by the SVM solver.
struct RowIter {
  const FeatureMatrix& H;
  int64_t i;

  template <typename Fn>
  void for_each(Fn&& fn) const {
    uint64_t offset = 0;
    for (const auto& b : H.blocks) {
      for (uint64_t k = b.row_ptr[size_t(i)]; k < b.row_ptr[size_t(i) + 1];
           ++k)
        fn(offset + b.words[k], double(b.counts[k]) / b.scale[b.words[k]]);
      offset += b.cells;
    }
  }
};

double row_dot_w(const FeatureMatrix& H, int64_t i, const std::vector<double>& w) {
  double acc = 0.0;
  RowIter{H, i}.for_each([&](uint64_t col, double v) { acc += w[col] * v; });
  return acc;
}

double row_dot_row(const FeatureMatrix& H, int64_t i, int64_t j) {
  double acc = 0.0;
  for (const auto& b : H.blocks) {
    uint64_t ki = b.row_ptr[size_t(i)], ei = b.row_ptr[size_t(i) + 1];
    uint64_t kj = b.row_ptr[size_t(j)], ej = b.row_ptr[size_t(j) + 1];
    while (ki < ei && kj < ej) {
      if (b.words[ki] < b.words[kj]) {
        ++ki;
      } else if (b.words[kj] < b.words[ki]) {
        ++kj;
      } else {
        const double s = b.scale[b.words[ki]];
        acc += (double(b.counts[ki]) * b.counts[kj]) / (s * s);
        ++ki;
        ++kj;
      }
    }
  }
  return acc;
}

// Exact minimizer of sum_i hinge(1 - y_i (u_i - T)) over T: the slope of
// the piecewise-linear objective rises by one at every breakpoint and
// starts at -(#negatives), so the optimum sits at the (#negatives)-th
// smallest breakpoint.
double optimal_bias(const std::vector<double>& margins,
                    const std::vector<int8_t>& y) {
  const size_t n = margins.size();
  std::vector<double> bp(n);
  size_t negatives = 0;
  for (size_t i = 0; i < n; ++i) {
    bp[i] = y[i] > 0 ? margins[i] - 1.0 : margins[i] + 1.0;
    if (y[i] < 0) ++negatives;
  }
  if (negatives == 0) return *std::min_element(bp.begin(), bp.end());
  size_t k = negatives - 1;
  std::nth_element(bp.begin(), bp.begin() + k, bp.end());
  return bp[k];
}

struct SvmProgram {
  std::vector<double> w;      // dense weight vector
  std::vector<double> alpha;  // dual variables
  double bias = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  int epochs = 0;
  bool converged = false;
};

SvmProgram solve_svm_class(const FeatureMatrix& H, const std::vector<int8_t>& y,
                           double lambda, double tol, int max_epochs,
                           uint64_t seed, const double* warm_alpha) {
  const int64_t N = H.rows;
  const uint64_t F = H.cols();
  SvmProgram prog;
  prog.alpha.assign(size_t(N), 0.0);
  if (warm_alpha)
    for (int64_t i = 0; i < N; ++i)
      prog.alpha[size_t(i)] = std::clamp(warm_alpha[i], 0.0, lambda);
  prog.w.assign(F, 0.0);
  for (int64_t i = 0; i < N; ++i) {
    const double a = prog.alpha[size_t(i)];
    if (a != 0.0)
      RowIter{H, i}.for_each(
          [&](uint64_t col, double v) { prog.w[col] += a * y[size_t(i)] * v; });
  }

  std::vector<double> xx(size_t(N), 0);
  for (int64_t i = 0; i < N; ++i) xx[size_t(i)] = row_dot_row(H, i, i);

  auto update_pair = [&](int64_t i, int64_t j, double gi, double gj) {
    // gi = W.x_i, gj = W.x_j (margins, not dual gradients).
    const double yi = y[size_t(i)], yj = y[size_t(j)];
    const double num = (gi - yi) - (gj - yj);
    const double eta = xx[size_t(i)] + xx[size_t(j)] - 2.0 * row_dot_row(H, i, j);
    // Box bounds on d with alpha_i += yi*d, alpha_j -= yj*d.
    double lo = -1e300, hi = 1e300;
    const double ai = prog.alpha[size_t(i)], aj = prog.alpha[size_t(j)];
    if (yi > 0) {
      lo = std::max(lo, -ai);
      hi = std::min(hi, lambda - ai);
    } else {
      lo = std::max(lo, ai - lambda);
      hi = std::min(hi, ai);
    }
    if (yj > 0) {
      lo = std::max(lo, aj - lambda);
      hi = std::min(hi, aj);
    } else {
      lo = std::max(lo, -aj);
      hi = std::min(hi, lambda - aj);
    }
    double d;
    if (eta > 0.0)
      d = std::clamp(-num / eta, lo, hi);
    else if (num < 0.0)
      d = hi;
    else if (num > 0.0)
      d = lo;
    else
      return;
    if (d == 0.0 || !std::isfinite(d)) return;
    prog.alpha[size_t(i)] = std::clamp(ai + yi * d, 0.0, lambda);
    prog.alpha[size_t(j)] = std::clamp(aj - yj * d, 0.0, lambda);
    // dW = y_i dalpha_i x_i + y_j dalpha_j x_j with dalpha_j = -y_j d.
    RowIter{H, i}.for_each(
        [&](uint64_t col, double v) { prog.w[col] += d * v; });
    RowIter{H, j}.for_each(
        [&](uint64_t col, double v) { prog.w[col] -= d * v; });
  };

  std::mt19937_64 rng(seed);
  std::vector<int64_t> perm(size_t(N), 0);
  for (int64_t i = 0; i < N; ++i) perm[size_t(i)] = i;
  std::vector<double> margins(size_t(N), 0);
  auto certify = [&] {
    for (int64_t i = 0; i < N; ++i) margins[size_t(i)] = row_dot_w(H, i, prog.w);
    prog.bias = optimal_bias(margins, y);
    double w2 = 0.0;
    for (double v : prog.w) w2 += v * v;
    double hinge = 0.0, asum = 0.0;
    for (int64_t i = 0; i < N; ++i) {
      hinge += std::max(0.0, 1.0 - y[size_t(i)] * (margins[size_t(i)] - prog.bias));
      asum += prog.alpha[size_t(i)];
    }
    prog.primal = 0.5 * w2 + lambda * hinge;
    prog.dual = asum - 0.5 * w2;
    prog.gap = prog.primal - prog.dual;
  };

  certify();
  if (prog.gap <= tol) {
    prog.converged = true;
    return prog;
  }

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    prog.epochs = epoch + 1;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int64_t t = 0; t + 1 < N; t += 2) {
      const int64_t i = perm[size_t(t)], j = perm[size_t(t) + 1];
      update_pair(i, j, row_dot_w(H, i, prog.w), row_dot_w(H, j, prog.w));
    }
    certify();
    if (prog.gap <= tol) {
      prog.converged = true;
      return prog;
    }
    // A few maximal-violating-pair steps on the fresh margins.
    for (int step = 0; step < 8; ++step) {
      int64_t bi = -1, bj = -1;
      double up = -1e300, down = 1e300;
      for (int64_t i = 0; i < N; ++i) {
        const double yi = y[size_t(i)];
        const double a = prog.alpha[size_t(i)];
        const double v = yi - margins[size_t(i)];  // -y * dual gradient
        const bool can_up = (yi > 0 && a < lambda) || (yi < 0 && a > 0.0);
        const bool can_down = (yi > 0 && a > 0.0) || (yi < 0 && a < lambda);
        if (can_up && v > up) {
          up = v;
          bi = i;
        }
        if (can_down && v < down) {
          down = v;
          bj = i;
        }
      }
      if (bi < 0 || bj < 0 || bi == bj || up - down <= 1e-12) break;
      update_pair(bi, bj, row_dot_w(H, bi, prog.w), row_dot_w(H, bj, prog.w));
      margins[size_t(bi)] = row_dot_w(H, bi, prog.w);
      margins[size_t(bj)] = row_dot_w(H, bj, prog.w);
    }
  }
  certify();
  prog.converged = prog.gap <= tol;
  return prog;
}

}  // namespace

SolveResult solve_svm(const FeatureMatrix& H, const std::vector<int>& labels,
                      int classes, const LossConfig& config,
                      const SolveResult* warm, int threads) {
  config.validate();
  const int64_t N = H.rows;
  if (int64_t(labels.size()) != N)
    throw std::invalid_argument("solve_svm: label count mismatch");
  const int C = classes;
  if (C < 2) throw std::invalid_argument("solve_svm: need at least 2 classes");
  for (int l : labels)
    if (l < 1 || l > C)
      throw std::invalid_argument("solve_svm: label out of range");

  SolveResult out;
  out.classes = C;
  out.cols = H.cols();
  out.weights.assign(size_t(C) * out.cols, 0.0);
  out.biases.assign(size_t(C), 0.0);
  std::vector<double> alphas(size_t(C) * N, 0.0);
  std::vector<double> primals(size_t(C), 0.0);
  std::vector<double> gaps(size_t(C), 0.0);
  std::vector<int> epochs(size_t(C), 0);
  std::vector<uint8_t> ok(size_t(C), 0);

  detail::parallel_for(C, threads, [&](int64_t begin, int64_t end) {
    for (int64_t c = begin; c < end; ++c) {
      std::vector<int8_t> y(size_t(N), 0);
      for (int64_t i = 0; i < N; ++i)
        y[size_t(i)] = labels[size_t(i)] == int(c) + 1 ? 1 : -1;
      const double* warm_alpha =
          warm && !warm->dual_alpha.empty() && warm->classes == C &&
                  int64_t(warm->dual_alpha.size()) == int64_t(C) * N
              ? &warm->dual_alpha[size_t(c) * N]
              : nullptr;
      SvmProgram prog =
          solve_svm_class(H, y, config.lambda, config.tolerance,
                          config.max_iterations, 0x5713c7e1u + uint64_t(c),
                          warm_alpha);
      std::copy(prog.w.begin(), prog.w.end(),
                out.weights.begin() + int64_t(c) * int64_t(out.cols));
      out.biases[size_t(c)] = prog.bias;
      std::copy(prog.alpha.begin(), prog.alpha.end(),
                alphas.begin() + int64_t(c) * N);
      primals[size_t(c)] = prog.primal;
      gaps[size_t(c)] = prog.gap;
      epochs[size_t(c)] = prog.epochs;
      ok[size_t(c)] = prog.converged;
    }
  });

  out.dual_alpha = std::move(alphas);
  out.objective = 0.0;
  out.certificate = 0.0;
  out.iterations = 0;
  out.converged = true;
  for (int c = 0; c < C; ++c) {
    out.objective += primals[size_t(c)];
    out.certificate = std::max(out.certificate, gaps[size_t(c)]);
    out.iterations = std::max(out.iterations, epochs[size_t(c)]);
    out.converged = out.converged && ok[size_t(c)] != 0;
  }
  return out;
}

namespace {

struct SoftmaxTerms {
  double data = 0.0;                 // sum of per-example data losses
  std::vector<double> coef;          // N x C: d data / d s
};

// Per-example blended data term and its score gradients.
SoftmaxTerms softmax_terms(const std::vector<double>& scores,
                           const std::vector<int>& labels, int C,
                           const TeacherSoftLabels* teacher, double alpha,
                           double temperature, int threads) {
  const int64_t N = int64_t(labels.size());
  SoftmaxTerms t;
  t.coef.assign(size_t(N) * C, 0.0);
  std::vector<double> data(size_t(N), 0.0);
  detail::parallel_for(N, threads, [&](int64_t begin, int64_t end) {
    std::vector<double> p(size_t(C), 0.0), pt(size_t(C), 0.0), q(size_t(C), 0.0);
    for (int64_t i = begin; i < end; ++i) {
      const double* s = &scores[size_t(i) * C];
      double m = s[0];
      for (int c = 1; c < C; ++c) m = std::max(m, s[c]);
      double z = 0.0;
      for (int c = 0; c < C; ++c) z += std::exp(s[c] - m);
      const double lse = m + std::log(z);
      for (int c = 0; c < C; ++c) p[size_t(c)] = std::exp(s[c] - lse);
      const int yc = labels[size_t(i)] - 1;
      double loss = lse - s[yc];
      double* coef = &t.coef[size_t(i) * C];
      for (int c = 0; c < C; ++c)
        coef[c] = p[size_t(c)] - (c == yc ? 1.0 : 0.0);

      if (teacher) {
        // Tempered softmax of the scores.
        double mt = s[0] / temperature;
        for (int c = 1; c < C; ++c) mt = std::max(mt, s[c] / temperature);
        double zt = 0.0;
        for (int c = 0; c < C; ++c) zt += std::exp(s[c] / temperature - mt);
        const double lset = mt + std::log(zt);
        for (int c = 0; c < C; ++c)
          pt[size_t(c)] = std::exp(s[c] / temperature - lset);
        // Softened teacher row: q ~ teacher^(1/T), renormalized.
        double qz = 0.0;
        for (int c = 0; c < C; ++c) {
          const double tv = teacher->p[size_t(i) * C + c];
          q[size_t(c)] = tv > 0.0 ? std::pow(tv, 1.0 / temperature) : 0.0;
          qz += q[size_t(c)];
        }
        double kl = 0.0;
        for (int c = 0; c < C; ++c) {
          q[size_t(c)] /= qz;
          if (q[size_t(c)] > 0.0)
            kl += q[size_t(c)] * (std::log(q[size_t(c)]) -
                                  (s[c] / temperature - lset));
        }
        const double t2 = temperature * temperature;
        loss = alpha * loss + (1.0 - alpha) * t2 * kl;
        for (int c = 0; c < C; ++c)
          coef[c] = alpha * coef[c] +
                    (1.0 - alpha) * temperature * (pt[size_t(c)] - q[size_t(c)]);
      }
      data[size_t(i)] = loss;
    }
  });
  for (int64_t i = 0; i < N; ++i) t.data += data[size_t(i)];
  return t;
}

struct SoftmaxProblem {
  const FeatureMatrix& H;
  const std::vector<int>& labels;
  int C;
  double lambda;
  const TeacherSoftLabels* teacher;
  double alpha;
  double temperature;
  int threads;
  uint64_t F;  // feature columns (x layout: C*F weights then C biases)

  double eval(const std::vector<double>& x, std::vector<double>& grad) const {
    const int64_t N = H.rows;
    std::vector<double> scores(size_t(N) * C);
    detail::parallel_for(N, threads, [&](int64_t begin, int64_t end) {
      for (int64_t i = begin; i < end; ++i) {
        double* s = &scores[size_t(i) * C];
        for (int c = 0; c < C; ++c) s[c] = -x[size_t(C) * F + c];
        RowIter{H, i}.for_each([&](uint64_t col, double v) {
          for (int c = 0; c < C; ++c) s[c] += x[size_t(c) * F + col] * v;
        });
      }
    });
    SoftmaxTerms terms =
        softmax_terms(scores, labels, C, teacher, alpha, temperature, threads);

    grad.assign(x.size(), 0.0);
    // d/dW: W + lambda * sum_i coef_i^c H_i ; d/dT^c = -lambda sum_i coef.
    detail::parallel_for(C, threads, [&](int64_t cb, int64_t ce) {
      for (int64_t c = cb; c < ce; ++c) {
        double* gw = &grad[size_t(c) * F];
        double tsum = 0.0;
        for (int64_t i = 0; i < N; ++i) {
          const double co = terms.coef[size_t(i) * C + c];
          if (co == 0.0) continue;
          tsum += co;
          RowIter{H, i}.for_each(
              [&](uint64_t col, double v) { gw[col] += lambda * co * v; });
        }
        grad[size_t(C) * F + c] = -lambda * tsum;
      }
    });
    double w2 = 0.0;
    for (uint64_t j = 0; j < uint64_t(C) * F; ++j) {
      w2 += x[j] * x[j];
      grad[j] += x[j];
    }
    return 0.5 * w2 + lambda * terms.data;
  }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

SolveResult solve_softmax(const FeatureMatrix& H,
                          const std::vector<int>& labels, int classes,
                          const LossConfig& config, const SolveResult* warm,
                          int threads, const TeacherSoftLabels* teacher) {
  config.validate();
  const int64_t N = H.rows;
  if (int64_t(labels.size()) != N)
    throw std::invalid_argument("solve_softmax: label count mismatch");
  const int C = classes;
  if (C < 2) throw std::invalid_argument("solve_softmax: need at least 2 classes");
  for (int l : labels)
    if (l < 1 || l > C)
      throw std::invalid_argument("solve_softmax: label out of range");
  if (config.kind == LossKind::SoftmaxDistill) {
    if (!teacher)
      throw std::invalid_argument("solve_softmax: distillation needs a teacher");
    if (teacher->rows != N || teacher->classes != C)
      throw std::invalid_argument("solve_softmax: teacher shape mismatch");
  } else {
    teacher = nullptr;
  }

  const uint64_t F = H.cols();
  SoftmaxProblem prob{H,       labels,  C,
                      config.lambda,    teacher,
                      config.distill_alpha, config.distill_temperature,
                      threads, F};

  std::vector<double> x(size_t(C) * F + C, 0.0);
  if (warm && warm->classes == C) {
    const uint64_t copy = std::min<uint64_t>(warm->cols, F);
    for (int c = 0; c < C; ++c)
      std::copy(warm->weights.begin() + int64_t(c) * int64_t(warm->cols),
                warm->weights.begin() + int64_t(c) * int64_t(warm->cols) +
                    int64_t(copy),
                x.begin() + int64_t(c) * int64_t(F));
    std::copy(warm->biases.begin(), warm->biases.end(), x.end() - C);
  }

  // L-BFGS with Armijo backtracking.
  const int memory = 6;
  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;
  std::vector<double> grad, new_grad, d, xn;
  double f = prob.eval(x, grad);
  double gnorm = norm2(grad);
  int iter = 0;
  bool converged = gnorm <= config.tolerance;

  while (!converged && iter < config.max_iterations) {
    ++iter;
    // Two-loop recursion.
    d = grad;
    const int hist = int(s_hist.size());
    std::vector<double> a_coef(size_t(hist), 0);
    for (int h = hist - 1; h >= 0; --h) {
      a_coef[size_t(h)] = rho_hist[size_t(h)] * dot(s_hist[size_t(h)], d);
      for (size_t j = 0; j < d.size(); ++j)
        d[j] -= a_coef[size_t(h)] * y_hist[size_t(h)][j];
    }
    if (hist > 0) {
      const double yy = dot(y_hist.back(), y_hist.back());
      const double sy = 1.0 / rho_hist.back();
      const double gamma = sy / yy;
      for (auto& v : d) v *= gamma;
    }
    for (int h = 0; h < hist; ++h) {
      const double b = rho_hist[size_t(h)] * dot(y_hist[size_t(h)], d);
      for (size_t j = 0; j < d.size(); ++j)
        d[j] += (a_coef[size_t(h)] - b) * s_hist[size_t(h)][j];
    }
    for (auto& v : d) v = -v;

    double gd = dot(grad, d);
    if (gd >= 0.0) {  // fall back to steepest descent
      d = grad;
      for (auto& v : d) v = -v;
      gd = -dot(grad, grad);
    }

    double step = (iter == 1 && hist == 0) ? 1.0 / std::max(1.0, gnorm) : 1.0;
    const double c1 = 1e-4;
    double fn = f;
    xn.resize(x.size());
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (size_t j = 0; j < x.size(); ++j) xn[j] = x[j] + step * d[j];
      fn = prob.eval(xn, new_grad);
      if (fn <= f + c1 * step * gd) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s_vec(x.size()), y_vec(x.size());
    for (size_t j = 0; j < x.size(); ++j) {
      s_vec[j] = xn[j] - x[j];
      y_vec[j] = new_grad[j] - grad[j];
    }
    const double sy = dot(s_vec, y_vec);
    if (sy > 1e-12 * norm2(s_vec) * norm2(y_vec)) {
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
      if (int(s_hist.size()) > memory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    x.swap(xn);
    grad.swap(new_grad);
    f = fn;
    gnorm = norm2(grad);
    converged = gnorm <= config.tolerance;
  }

  SolveResult out;
  out.classes = C;
  out.cols = F;
  out.weights.assign(x.begin(), x.begin() + int64_t(C) * int64_t(F));
  out.biases.assign(x.end() - C, x.end());
  // Gauge fix: the loss is invariant to a common bias shift.
  double mean = 0.0;
  for (double b : out.biases) mean += b;
  mean /= C;
  for (auto& b : out.biases) b -= mean;
  out.objective = f;
  out.certificate = gnorm;
  out.iterations = iter;
  out.converged = converged;
  return out;
}

SolveResult solve_loss(const FeatureMatrix& H, const std::vector<int>& labels,
                       int classes, const LossConfig& config,
                       const SolveResult* warm, int threads,
                       const TeacherSoftLabels* teacher) {
  if (config.kind == LossKind::Svm)
    return solve_svm(H, labels, classes, config, warm, threads);
  return solve_softmax(H, labels, classes, config, warm, threads, teacher);
}

GradientMatrix loss_gradients(const FeatureMatrix& H,
                              const std::vector<int>& labels,
                              const SolveResult& sol, const LossConfig& config,
                              const TeacherSoftLabels* teacher, int threads) {
  const int64_t N = H.rows;
  const int C = sol.classes;
  if (int64_t(labels.size()) != N)
    throw std::invalid_argument("loss_gradients: label count mismatch");
  const std::vector<double> scores = compute_scores(H, sol, threads);

  GradientMatrix g;
  g.rows = N;
  g.classes = C;
  if (config.kind == LossKind::Svm) {
    g.values.assign(size_t(N) * C, 0.0);
    for (int64_t i = 0; i < N; ++i)
      for (int c = 0; c < C; ++c) {
        const double y = labels[size_t(i)] == c + 1 ? 1.0 : -1.0;
        if (1.0 - y * scores[size_t(i) * C + c] > 0.0) g.at(i, c) = -y;
      }
    return g;
  }
  const TeacherSoftLabels* t =
      config.kind == LossKind::SoftmaxDistill ? teacher : nullptr;
  if (config.kind == LossKind::SoftmaxDistill && !teacher)
    throw std::invalid_argument("loss_gradients: distillation needs a teacher");
  SoftmaxTerms terms =
      softmax_terms(scores, labels, C, t, config.distill_alpha,
                    config.distill_temperature, threads);
  g.values = std::move(terms.coef);
  return g;
}

double softmax_data_loss(const std::vector<double>& scores,
                         const std::vector<int>& labels, int classes) {
  SoftmaxTerms t = softmax_terms(scores, labels, classes, nullptr, 1.0, 1.0, 1);
  return t.data;
}

double distill_loss(const std::vector<double>& scores,
                    const std::vector<int>& labels,
                    const TeacherSoftLabels& teacher, double alpha,
                    double temperature) {
  teacher.validate();
  SoftmaxTerms t = softmax_terms(scores, labels, teacher.classes, &teacher,
                                 alpha, temperature, 1);
  return t.data;
}

std::vector<double> distill_loss_gradients(const std::vector<double>& scores,
                                           const std::vector<int>& labels,
                                           const TeacherSoftLabels& teacher,
                                           double alpha, double temperature) {
  SoftmaxTerms t = softmax_terms(scores, labels, teacher.classes, &teacher,
                                 alpha, temperature, 1);
  return t.coef;
}

}  // namespace cte
