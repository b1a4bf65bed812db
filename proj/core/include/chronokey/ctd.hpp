#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chronokey/calendar.hpp"
#include "chronokey/mat.hpp"

namespace chronokey {

/// Structural hyperparameters of the CTD head.
struct CTDConfig {
  int H = 64;   // embedding dimension
  int G = 0;    // padded gong count
  int Y = 0;    // padded years per gong
  int M = 13;   // padded months per year
  int D_t = 32;  // sinusoidal codebook width (even)
  int K = 8;     // Fourier frequencies for the offset features, D_phi = 2K+1
  int H1 = 64;   // bias-MLP hidden width
  double alpha = 0.05;  // similarity temperature (fixed, not trained)

  int d_phi() const { return 2 * K + 1; }
};

/// E[i, 2k] = sin(i / 10000^(2k/D_t)), E[i, 2k+1] = cos(i / 10000^(2k/D_t)).
Mat sinusoidal_codebook(int n, int D_t);

/// phi(du) = [du, sin(2*pi*2^j*du), cos(2*pi*2^j*du)] for j = 0..K-1.
std::vector<double> fourier_offset(double du, int K);

/// All trainable tensors of the CTD head plus the fixed codebooks.
struct CTDParams {
  CTDConfig cfg;

  Mat A;                    // H x H shared adapter
  Mat Wg, Wy, Wm;           // calendrical heads: G x H, Y x H, M x H
  std::vector<double> bg, by, bm;
  Mat W_ctx;                // H x 3*D_t context projection
  double gamma = 0.0;       // context gate, init 0 so abs reduces to sem
  Mat W1;                   // H1 x D_phi
  std::vector<double> b1;   // H1
  std::vector<double> w2;   // H1
  double b2 = 0.0;
  double epsilon = 0.0;     // bias scale, init 0 so ctd reduces to abs

  Mat Eg, Ey, Em;  // fixed sinusoidal codebooks, never updated

  /// A = identity, heads and MLP small seeded random, gamma = epsilon = 0.
  static CTDParams init(const CTDConfig& cfg, uint64_t seed);

  /// Visits every trainable tensor. is_matrix marks tensors that receive
  /// decoupled weight decay (matrices only; gains, biases and scalars do not).
  template <typename F>
  void for_each_tensor(F&& f) {
    f("A", A.data.data(), A.size(), true);
    f("Wg", Wg.data.data(), Wg.size(), true);
    f("bg", bg.data(), bg.size(), false);
    f("Wy", Wy.data.data(), Wy.size(), true);
    f("by", by.data(), by.size(), false);
    f("Wm", Wm.data.data(), Wm.size(), true);
    f("bm", bm.data(), bm.size(), false);
    f("W_ctx", W_ctx.data.data(), W_ctx.size(), true);
    f("gamma", &gamma, size_t(1), false);
    f("W1", W1.data.data(), W1.size(), true);
    f("b1", b1.data(), b1.size(), false);
    f("w2", w2.data(), w2.size(), false);
    f("b2", &b2, size_t(1), false);
    f("epsilon", &epsilon, size_t(1), false);
  }

  size_t num_trainable() const;

  /// Checkpoint format, magic "CQCTD1". Binds to a manifest hash; loading
  /// with a different manifest fails.
  void save(const std::string& path, uint64_t manifest_hash) const;
  static CTDParams load(const std::string& path, uint64_t manifest_hash);
};

/// Gradients, same shapes as the trainable tensors of CTDParams.
struct CTDGrads {
  Mat A, Wg, Wy, Wm, W_ctx, W1;
  std::vector<double> bg, by, bm, b1, w2;
  double gamma = 0.0, b2 = 0.0, epsilon = 0.0;

  static CTDGrads zeros(const CTDConfig& cfg);

  template <typename F>
  void for_each_tensor(F&& f) {
    f("A", A.data.data(), A.size(), true);
    f("Wg", Wg.data.data(), Wg.size(), true);
    f("bg", bg.data(), bg.size(), false);
    f("Wy", Wy.data.data(), Wy.size(), true);
    f("by", by.data(), by.size(), false);
    f("Wm", Wm.data.data(), Wm.size(), true);
    f("bm", bm.data(), bm.size(), false);
    f("W_ctx", W_ctx.data.data(), W_ctx.size(), true);
    f("gamma", &gamma, size_t(1), false);
    f("W1", W1.data.data(), W1.size(), true);
    f("b1", b1.data(), b1.size(), false);
    f("w2", w2.data(), w2.size(), false);
    f("b2", &b2, size_t(1), false);
    f("epsilon", &epsilon, size_t(1), false);
  }
};

/// One training batch: B paired queries/records plus the overlap mask.
struct BatchTensors {
  Mat q_emb;  // B x H
  Mat d_emb;  // B x H
  std::vector<TimeKey> d_labels;
  std::vector<Interval> q_intervals;
  Mat P;  // B x B, 1.0 where record j's month overlaps query i's interval

  size_t B() const { return q_emb.rows; }
};

enum class ScoreMode { sem, abs, ctd };

struct SoftCoords {
  double g = 0.0, y = 0.0, m = 0.0, u = 0.0;
};

/// Softmax distributions of the three calendrical heads over A*h.
void head_forward(const std::vector<double>& h, const CTDParams& params, std::vector<double>& pg,
                  std::vector<double>& py, std::vector<double>& pm);

/// Expectations of the head distributions and the latent calendar scalar.
SoftCoords soft_coords_and_u(const std::vector<double>& pg, const std::vector<double>& py,
                             const std::vector<double>& pm, const CTDConfig& cfg);

/// Scalar-gated residual injection of the expected sinusoidal context.
/// gamma = 0 returns h unchanged.
std::vector<double> context_inject(const std::vector<double>& h, const std::vector<double>& pg,
                                   const std::vector<double>& py, const std::vector<double>& pm,
                                   const CTDParams& params);

/// B x B score matrix. sem: adapted dot product / alpha; abs: with context
/// injection; ctd: abs plus the relative temporal bias. epsilon = 0 makes
/// ctd equal abs exactly; gamma = 0 additionally collapses both to sem.
Mat score_matrix(const BatchTensors& batch, const CTDParams& params, ScoreMode mode);

/// Symmetric multi-positive InfoNCE over S and mask P (log-sum-exp
/// stabilized). Throws if any row or column of P is empty.
double loss_multi(const Mat& S, const Mat& P);

enum class SmoothingMode { uniform, neighbor };

/// Sum of per-axis cross-entropies against smoothed targets, averaged over
/// records. neighbor mode puts sigma/2 on each existing adjacent index
/// (boundary labels give all of sigma to the single neighbor).
double loss_time(const Mat& pg, const Mat& py, const Mat& pm, const std::vector<TimeKey>& labels,
                 double sigma, SmoothingMode mode);

struct LossOptions {
  double lambda_time = 0.1;
  double sigma = 0.2;
  SmoothingMode smoothing = SmoothingMode::uniform;
  bool use_multi = true;  // false: single-positive InfoNCE (identity mask)
  bool use_bias = true;   // relative temporal bias term
  bool use_ctx = true;    // absolute context injection
};

struct LossResult {
  double total = 0.0;
  double multi = 0.0;
  double time = 0.0;
  CTDGrads grads;
};

/// Forward plus analytic reverse-mode gradients for every trainable tensor.
LossResult loss_total(const BatchTensors& batch, const CTDParams& params,
                      const LossOptions& opts);

}  // namespace chronokey
