#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cte/features.hpp"

namespace cte {

// Per-example, per-class loss gradients dL/ds_i^c driving table growth.
struct GradientMatrix {
  int64_t rows = 0;
  int classes = 0;
  std::vector<double> values;  // rows x classes, row-major

  double at(int64_t i, int c) const { return values[i * classes + c]; }
  double& at(int64_t i, int c) { return values[i * classes + c]; }
};

enum class LossKind : uint8_t { Svm = 0, Softmax = 1, SoftmaxDistill = 2 };

const char* to_string(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::Softmax;
  double lambda = 1.0;            // data-term weight
  double distill_alpha = 0.5;     // blend toward true-label loss
  double distill_temperature = 1.0;
  double tolerance = 1e-6;        // solver certificate target
  int max_iterations = 2000;

  void validate() const;
};

// Teacher output distributions consumed from a file.
// File layout (little-endian): N u32, C u32, temperature f32 (0 if not
// recorded), then N rows of C f32 probabilities.
struct TeacherSoftLabels {
  int64_t rows = 0;
  int classes = 0;
  float temperature = 0.0f;
  std::vector<float> p;  // rows x classes

  void validate() const;
};

TeacherSoftLabels load_teacher(const std::string& path);
void save_teacher(const TeacherSoftLabels& t, const std::string& path);

struct SolveResult {
  int classes = 0;
  uint64_t cols = 0;
  std::vector<double> weights;  // classes x cols, row-major
  std::vector<double> biases;   // classes
  std::vector<double> dual_alpha;  // classes x rows (svm only, for warm starts)
  double objective = 0.0;
  double certificate = 0.0;  // duality gap (svm) or gradient norm (softmax)
  int iterations = 0;
  bool converged = false;

  double weight(int c, uint64_t j) const { return weights[c * cols + j]; }
};

// Class scores s_i^c = W_c . H_i - T^c for all examples, row-major.
std::vector<double> compute_scores(const FeatureMatrix& H,
                                   const SolveResult& sol, int threads = 1);

// One-vs-all SVM: 1/2||W||^2 + lambda sum_c sum_i max(1 - y_ic s_i^c, 0).
// Biases are unregularized; each class program is solved in the dual with
// the bias recovered by exact line minimization, and the returned
// certificate is the worst per-program duality gap.
SolveResult solve_svm(const FeatureMatrix& H, const std::vector<int>& labels,
                      int classes, const LossConfig& config,
                      const SolveResult* warm = nullptr, int threads = 1);

// Softmax (optionally distillation-blended) loss:
// 1/2||W||^2 + lambda sum_i [alpha NLL_i + (1-alpha) T^2 KL_i].
// Solved by L-BFGS; certificate is the final gradient L2 norm. Biases are
// unregularized and gauge-fixed to zero mean after the solve.
SolveResult solve_softmax(const FeatureMatrix& H,
                          const std::vector<int>& labels, int classes,
                          const LossConfig& config,
                          const SolveResult* warm = nullptr, int threads = 1,
                          const TeacherSoftLabels* teacher = nullptr);

SolveResult solve_loss(const FeatureMatrix& H, const std::vector<int>& labels,
                       int classes, const LossConfig& config,
                       const SolveResult* warm = nullptr, int threads = 1,
                       const TeacherSoftLabels* teacher = nullptr);

// dL/ds gradients at the solution, per the configured loss. SVM:
// g_i^c = -y_ic when the class-c margin is violated (1 - y_ic s_i^c > 0),
// else 0. Softmax: p_i^c - delta(y_i, c). Distillation: the convex blend
// alpha * softmax-vs-truth + (1-alpha) * T * (softmax(s/T) - soften(q, T)).
GradientMatrix loss_gradients(const FeatureMatrix& H,
                              const std::vector<int>& labels,
                              const SolveResult& sol, const LossConfig& config,
                              const TeacherSoftLabels* teacher = nullptr,
                              int threads = 1);

// Data-term values (no regularizer, no lambda), exposed for testing and
// logging. scores is rows x classes row-major; labels are 1-based.
double softmax_data_loss(const std::vector<double>& scores,
                         const std::vector<int>& labels, int classes);
double distill_loss(const std::vector<double>& scores,
                    const std::vector<int>& labels,
                    const TeacherSoftLabels& teacher, double alpha,
                    double temperature);

// Analytic dL/ds of the blended data term (for gradient checks).
std::vector<double> distill_loss_gradients(const std::vector<double>& scores,
                                           const std::vector<int>& labels,
                                           const TeacherSoftLabels& teacher,
                                           double alpha, double temperature);

}  // namespace cte
