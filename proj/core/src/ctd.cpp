#include "chronokey/ctd.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "chronokey/rng.hpp"

namespace chronokey {

Mat sinusoidal_codebook(int n, int D_t) {
  if (D_t < 2 || D_t % 2 != 0) throw Error("codebook: D_t must be even and >= 2");
  Mat E(static_cast<size_t>(n), static_cast<size_t>(D_t));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; 2 * k < D_t; ++k) {
      double rate = std::pow(10000.0, 2.0 * k / D_t);
      E(i, 2 * k) = std::sin(i / rate);
      E(i, 2 * k + 1) = std::cos(i / rate);
    }
  }
  return E;
}

std::vector<double> fourier_offset(double du, int K) {
  std::vector<double> phi(static_cast<size_t>(2 * K + 1));
  phi[0] = du;
  for (int j = 0; j < K; ++j) {
    double w = 2.0 * M_PI * std::pow(2.0, j);
    phi[1 + 2 * j] = std::sin(w * du);
    phi[2 + 2 * j] = std::cos(w * du);
  }
  return phi;
}

namespace {

double rand_sym(Rng& rng, double scale) { return (2.0 * rng.uniform() - 1.0) * scale; }

void fill_random(Mat& m, Rng& rng, double scale) {
  for (double& v : m.data) v = rand_sym(rng, scale);
}

}  // namespace

CTDParams CTDParams::init(const CTDConfig& cfg, uint64_t seed) {
  if (cfg.H < 1 || cfg.G < 1 || cfg.Y < 1 || cfg.M < 1) throw Error("ctd: bad dimensions");
  CTDParams p;
  p.cfg = cfg;
  Rng rng(mix64(seed ^ 0xC7D0C7D0ULL));

  p.A = Mat(cfg.H, cfg.H);
  for (int i = 0; i < cfg.H; ++i) p.A(i, i) = 1.0;

  double head_scale = 0.1 / std::sqrt(static_cast<double>(cfg.H));
  p.Wg = Mat(cfg.G, cfg.H);
  p.Wy = Mat(cfg.Y, cfg.H);
  p.Wm = Mat(cfg.M, cfg.H);
  fill_random(p.Wg, rng, head_scale);
  fill_random(p.Wy, rng, head_scale);
  fill_random(p.Wm, rng, head_scale);
  p.bg.assign(cfg.G, 0.0);
  p.by.assign(cfg.Y, 0.0);
  p.bm.assign(cfg.M, 0.0);

  // Small context-projection init: the gate starts at zero, so early in
  // training gamma wanders near zero while W_ctx is still random. Keeping
  // ||W_ctx c|| well below ||h|| makes those excursions harmless under the
  // sharp 1/alpha score temperature; W_ctx grows later if context helps.
  p.W_ctx = Mat(cfg.H, 3 * static_cast<size_t>(cfg.D_t));
  fill_random(p.W_ctx, rng, 0.1 / std::sqrt(3.0 * cfg.D_t));

  p.W1 = Mat(cfg.H1, cfg.d_phi());
  fill_random(p.W1, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_phi())));
  p.b1.assign(cfg.H1, 0.0);
  p.w2.assign(cfg.H1, 0.0);
  for (double& v : p.w2) v = rand_sym(rng, 1.0 / std::sqrt(static_cast<double>(cfg.H1)));
  p.b2 = 0.0;

  p.gamma = 0.0;
  p.epsilon = 0.0;

  p.Eg = sinusoidal_codebook(cfg.G, cfg.D_t);
  p.Ey = sinusoidal_codebook(cfg.Y, cfg.D_t);
  p.Em = sinusoidal_codebook(cfg.M, cfg.D_t);
  return p;
}

size_t CTDParams::num_trainable() const {
  const auto& c = cfg;
  size_t h = static_cast<size_t>(c.H);
  return h * h + (c.G + c.Y + c.M) * (h + 1) + h * 3 * c.D_t + 1 +
         static_cast<size_t>(c.H1) * c.d_phi() + 2 * c.H1 + 1 + 1;
}

CTDGrads CTDGrads::zeros(const CTDConfig& cfg) {
  CTDGrads g;
  g.A = Mat(cfg.H, cfg.H);
  g.Wg = Mat(cfg.G, cfg.H);
  g.Wy = Mat(cfg.Y, cfg.H);
  g.Wm = Mat(cfg.M, cfg.H);
  g.bg.assign(cfg.G, 0.0);
  g.by.assign(cfg.Y, 0.0);
  g.bm.assign(cfg.M, 0.0);
  g.W_ctx = Mat(cfg.H, 3 * static_cast<size_t>(cfg.D_t));
  g.W1 = Mat(cfg.H1, cfg.d_phi());
  g.b1.assign(cfg.H1, 0.0);
  g.w2.assign(cfg.H1, 0.0);
  return g;
}

namespace {

// Per-side forward cache: everything the backward pass reads again.
struct SideCache {
  Mat a;              // B x H adapted embeddings
  Mat pg, py, pm;     // head distributions
  std::vector<double> g, y, m, u;
  Mat c_cat;          // B x 3*D_t expected codebook mixtures
  Mat c;              // B x H projected context
  Mat htil;           // B x H context-enriched embeddings
};

void add_bias_rows(Mat& logits, const std::vector<double>& bias) {
  for (size_t i = 0; i < logits.rows; ++i) {
    double* r = logits.row(i);
    for (size_t j = 0; j < logits.cols; ++j) r[j] += bias[j];
  }
}

void side_forward(const Mat& h, const CTDParams& p, bool use_ctx, SideCache& s) {
  const CTDConfig& c = p.cfg;
  size_t B = h.rows;
  s.a = matmul_nt(h, p.A);

  s.pg = matmul_nt(s.a, p.Wg);
  add_bias_rows(s.pg, p.bg);
  softmax_rows(s.pg);
  s.py = matmul_nt(s.a, p.Wy);
  add_bias_rows(s.py, p.by);
  softmax_rows(s.py);
  s.pm = matmul_nt(s.a, p.Wm);
  add_bias_rows(s.pm, p.bm);
  softmax_rows(s.pm);

  s.g.resize(B);
  s.y.resize(B);
  s.m.resize(B);
  s.u.resize(B);
  double span = double(c.G) * c.Y * c.M - 1.0;
  for (size_t i = 0; i < B; ++i) {
    double g = 0, y = 0, m = 0;
    for (int k = 0; k < c.G; ++k) g += k * s.pg(i, k);
    for (int k = 0; k < c.Y; ++k) y += k * s.py(i, k);
    for (int k = 0; k < c.M; ++k) m += k * s.pm(i, k);
    s.g[i] = g;
    s.y[i] = y;
    s.m[i] = m;
    s.u[i] = (g * (double(c.Y) * c.M) + y * c.M + m) / span;
  }

  if (use_ctx) {
    Mat cg = matmul(s.pg, p.Eg);
    Mat cy = matmul(s.py, p.Ey);
    Mat cm = matmul(s.pm, p.Em);
    s.c_cat = Mat(B, 3 * static_cast<size_t>(c.D_t));
    for (size_t i = 0; i < B; ++i) {
      std::memcpy(s.c_cat.row(i), cg.row(i), c.D_t * sizeof(double));
      std::memcpy(s.c_cat.row(i) + c.D_t, cy.row(i), c.D_t * sizeof(double));
      std::memcpy(s.c_cat.row(i) + 2 * c.D_t, cm.row(i), c.D_t * sizeof(double));
    }
    s.c = matmul_nt(s.c_cat, p.W_ctx);
    s.htil = s.a;
    if (p.gamma != 0.0) add_inplace(s.htil, s.c, p.gamma);  // exact reduction at gamma = 0
  } else {
    s.htil = s.a;
  }
}

// Cached bias-MLP activations for every (query, record) pair.
struct BiasCache {
  Mat phi;   // B*B x D_phi
  Mat hid;   // B*B x H1
  std::vector<double> out;  // B*B
  std::vector<double> du;   // B*B
};

void bias_forward(const SideCache& q, const SideCache& d, const CTDParams& p, BiasCache& bc,
                  Mat& S) {
  const CTDConfig& c = p.cfg;
  size_t B = q.u.size();
  int DP = c.d_phi();
  bc.phi = Mat(B * B, DP);
  bc.hid = Mat(B * B, c.H1);
  bc.out.resize(B * B);
  bc.du.resize(B * B);
  for (size_t i = 0; i < B; ++i) {
    for (size_t j = 0; j < B; ++j) {
      size_t n = i * B + j;
      double du = d.u[j] - q.u[i];
      bc.du[n] = du;
      std::vector<double> phi = fourier_offset(du, c.K);
      std::memcpy(bc.phi.row(n), phi.data(), DP * sizeof(double));
      double* hid = bc.hid.row(n);
      for (int k = 0; k < c.H1; ++k) {
        double z = p.b1[k];
        const double* w1k = p.W1.row(k);
        for (int f = 0; f < DP; ++f) z += w1k[f] * phi[f];
        hid[k] = std::tanh(z);
      }
      double out = p.b2;
      for (int k = 0; k < c.H1; ++k) out += p.w2[k] * hid[k];
      bc.out[n] = out;
      if (p.epsilon != 0.0) S(i, j) += p.epsilon * out;  // exact reduction at epsilon = 0
    }
  }
}

Mat forward_scores(const BatchTensors& batch, const CTDParams& params, bool use_ctx,
                   bool use_bias, SideCache& q, SideCache& d, BiasCache& bc) {
  side_forward(batch.q_emb, params, use_ctx, q);
  side_forward(batch.d_emb, params, use_ctx, d);
  Mat S = matmul_nt(q.htil, d.htil);
  for (double& v : S.data) v /= params.cfg.alpha;
  if (use_bias) bias_forward(q, d, params, bc, S);
  return S;
}

// dlogits = p (.) (dp - <dp, p>)
void softmax_vjp_row(const double* p, const double* dp, double* dlogits, size_t n) {
  double dot = 0.0;
  for (size_t k = 0; k < n; ++k) dot += dp[k] * p[k];
  for (size_t k = 0; k < n; ++k) dlogits[k] = p[k] * (dp[k] - dot);
}

std::vector<double> smoothed_target(int C, int label, double sigma, SmoothingMode mode) {
  if (label < 0 || label >= C)
    throw BoundsError("time loss: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(C) + ")");
  std::vector<double> t(static_cast<size_t>(C), 0.0);
  if (sigma == 0.0 || C == 1) {
    t[label] = 1.0;
    return t;
  }
  if (mode == SmoothingMode::uniform) {
    for (int c = 0; c < C; ++c) t[c] = sigma / C;
    t[label] += 1.0 - sigma;
  } else {
    t[label] = 1.0 - sigma;
    bool left = label - 1 >= 0;
    bool right = label + 1 < C;
    if (left && right) {
      t[label - 1] = sigma / 2.0;
      t[label + 1] = sigma / 2.0;
    } else if (left) {
      t[label - 1] = sigma;  // boundary: all smoothing mass to the neighbor
    } else if (right) {
      t[label + 1] = sigma;
    } else {
      t[label] = 1.0;
    }
  }
  return t;
}

double lse_row(const double* s, size_t n, const double* mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < n; ++k)
    if (!mask || mask[k] != 0.0) mx = std::max(mx, s[k]);
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (size_t k = 0; k < n; ++k)
    if (!mask || mask[k] != 0.0) sum += std::exp(s[k] - mx);
  return mx + std::log(sum);
}

}  // namespace

void head_forward(const std::vector<double>& h, const CTDParams& params, std::vector<double>& pg,
                  std::vector<double>& py, std::vector<double>& pm) {
  Mat hm(1, h.size());
  std::memcpy(hm.row(0), h.data(), h.size() * sizeof(double));
  SideCache s;
  side_forward(hm, params, false, s);
  pg.assign(s.pg.row(0), s.pg.row(0) + params.cfg.G);
  py.assign(s.py.row(0), s.py.row(0) + params.cfg.Y);
  pm.assign(s.pm.row(0), s.pm.row(0) + params.cfg.M);
}

SoftCoords soft_coords_and_u(const std::vector<double>& pg, const std::vector<double>& py,
                             const std::vector<double>& pm, const CTDConfig& cfg) {
  SoftCoords sc;
  for (size_t k = 0; k < pg.size(); ++k) sc.g += k * pg[k];
  for (size_t k = 0; k < py.size(); ++k) sc.y += k * py[k];
  for (size_t k = 0; k < pm.size(); ++k) sc.m += k * pm[k];
  double span = double(cfg.G) * cfg.Y * cfg.M - 1.0;
  sc.u = (sc.g * (double(cfg.Y) * cfg.M) + sc.y * cfg.M + sc.m) / span;
  return sc;
}

std::vector<double> context_inject(const std::vector<double>& h, const std::vector<double>& pg,
                                   const std::vector<double>& py, const std::vector<double>& pm,
                                   const CTDParams& params) {
  const CTDConfig& c = params.cfg;
  if (params.gamma == 0.0) return h;
  std::vector<double> c_cat(3 * static_cast<size_t>(c.D_t), 0.0);
  for (int k = 0; k < c.G; ++k)
    for (int t = 0; t < c.D_t; ++t) c_cat[t] += pg[k] * params.Eg(k, t);
  for (int k = 0; k < c.Y; ++k)
    for (int t = 0; t < c.D_t; ++t) c_cat[c.D_t + t] += py[k] * params.Ey(k, t);
  for (int k = 0; k < c.M; ++k)
    for (int t = 0; t < c.D_t; ++t) c_cat[2 * c.D_t + t] += pm[k] * params.Em(k, t);
  std::vector<double> out = h;
  for (int j = 0; j < c.H; ++j) {
    double v = 0.0;
    const double* wj = params.W_ctx.row(j);
    for (size_t t = 0; t < c_cat.size(); ++t) v += wj[t] * c_cat[t];
    out[static_cast<size_t>(j)] += params.gamma * v;
  }
  return out;
}

Mat score_matrix(const BatchTensors& batch, const CTDParams& params, ScoreMode mode) {
  bool use_ctx = mode != ScoreMode::sem;
  bool use_bias = mode == ScoreMode::ctd;
  SideCache q, d;
  BiasCache bc;
  Mat S = forward_scores(batch, params, use_ctx, use_bias, q, d, bc);
  if (!S.finite())
    throw Error("score_matrix: non-finite scores (B=" + std::to_string(batch.B()) + ")");
  return S;
}

double loss_multi(const Mat& S, const Mat& P) {
  size_t B = S.rows;
  if (P.rows != B || P.cols != B) throw Error("loss_multi: mask shape mismatch");
  double lq = 0.0, ld = 0.0;
  std::vector<double> col(B), colmask(B);
  for (size_t i = 0; i < B; ++i) {
    bool has_pos = false;
    for (size_t j = 0; j < B; ++j)
      if (P(i, j) != 0.0) has_pos = true;
    if (!has_pos) throw Error("loss_multi: query row " + std::to_string(i) + " has no positive");
    lq += lse_row(S.row(i), B, nullptr) - lse_row(S.row(i), B, P.row(i));
  }
  for (size_t j = 0; j < B; ++j) {
    bool has_pos = false;
    for (size_t i = 0; i < B; ++i) {
      col[i] = S(i, j);
      colmask[i] = P(i, j);
      if (P(i, j) != 0.0) has_pos = true;
    }
    if (!has_pos) throw Error("loss_multi: record column " + std::to_string(j) + " has no positive");
    ld += lse_row(col.data(), B, nullptr) - lse_row(col.data(), B, colmask.data());
  }
  return 0.5 * (lq + ld) / static_cast<double>(B);
}

double loss_time(const Mat& pg, const Mat& py, const Mat& pm, const std::vector<TimeKey>& labels,
                 double sigma, SmoothingMode mode) {
  size_t B = labels.size();
  if (pg.rows != B || py.rows != B || pm.rows != B) throw Error("loss_time: shape mismatch");
  double total = 0.0;
  for (size_t i = 0; i < B; ++i) {
    const TimeKey& lbl = labels[i];
    struct Axis {
      const Mat* p;
      int label;
    } axes[3] = {{&pg, lbl.gong}, {&py, lbl.year - 1}, {&pm, lbl.month - 1}};
    for (const auto& ax : axes) {
      std::vector<double> t = smoothed_target(static_cast<int>(ax.p->cols), ax.label, sigma, mode);
      for (size_t k = 0; k < ax.p->cols; ++k)
        if (t[k] != 0.0) total -= t[k] * std::log((*ax.p)(i, k));
    }
  }
  return total / static_cast<double>(B);
}

LossResult loss_total(const BatchTensors& batch, const CTDParams& params,
                      const LossOptions& opts) {
  const CTDConfig& cfg = params.cfg;
  size_t B = batch.B();
  if (batch.d_emb.rows != B || batch.d_labels.size() != B)
    throw Error("loss_total: inconsistent batch");

  SideCache q, d;
  BiasCache bc;
  Mat S = forward_scores(batch, params, opts.use_ctx, opts.use_bias, q, d, bc);
  if (!S.finite()) throw Error("loss_total: non-finite scores");

  // Positive mask: interval overlap (multi-positive) or the diagonal.
  Mat P = opts.use_multi ? batch.P : Mat(B, B);
  if (!opts.use_multi)
    for (size_t i = 0; i < B; ++i) P(i, i) = 1.0;

  LossResult res;
  res.grads = CTDGrads::zeros(cfg);
  res.multi = loss_multi(S, P);
  res.time = loss_time(d.pg, d.py, d.pm, batch.d_labels, opts.sigma, opts.smoothing);
  res.total = res.multi + opts.lambda_time * res.time;

  // ---- backward ----
  // dL/dS from the symmetric multi-positive InfoNCE.
  Mat dS(B, B);
  std::vector<double> col(B), colmask(B);
  for (size_t i = 0; i < B; ++i) {
    double lse_all = lse_row(S.row(i), B, nullptr);
    double lse_pos = lse_row(S.row(i), B, P.row(i));
    for (size_t j = 0; j < B; ++j) {
      double sig = std::exp(S(i, j) - lse_all);
      double pi = P(i, j) != 0.0 ? std::exp(S(i, j) - lse_pos) : 0.0;
      dS(i, j) += 0.5 * (sig - pi) / static_cast<double>(B);
    }
  }
  for (size_t j = 0; j < B; ++j) {
    for (size_t i = 0; i < B; ++i) {
      col[i] = S(i, j);
      colmask[i] = P(i, j);
    }
    double lse_all = lse_row(col.data(), B, nullptr);
    double lse_pos = lse_row(col.data(), B, colmask.data());
    for (size_t i = 0; i < B; ++i) {
      double sig = std::exp(col[i] - lse_all);
      double pi = colmask[i] != 0.0 ? std::exp(col[i] - lse_pos) : 0.0;
      dS(i, j) += 0.5 * (sig - pi) / static_cast<double>(B);
    }
  }

  std::vector<double> du_q(B, 0.0), du_d(B, 0.0);

  // Relative bias path.
  if (opts.use_bias) {
    int DP = cfg.d_phi();
    std::vector<double> dz(static_cast<size_t>(cfg.H1));
    std::vector<double> wfreq(static_cast<size_t>(cfg.K));
    for (int fj = 0; fj < cfg.K; ++fj) wfreq[fj] = 2.0 * M_PI * std::pow(2.0, fj);
    for (size_t i = 0; i < B; ++i) {
      for (size_t j = 0; j < B; ++j) {
        size_t n = i * B + j;
        double g = dS(i, j);
        if (g == 0.0) continue;
        res.grads.epsilon += bc.out[n] * g;
        double dout = params.epsilon * g;
        res.grads.b2 += dout;
        const double* hid = bc.hid.row(n);
        const double* phi = bc.phi.row(n);
        double ddu = 0.0;
        for (int k = 0; k < cfg.H1; ++k) {
          res.grads.w2[k] += dout * hid[k];
          dz[k] = dout * params.w2[k] * (1.0 - hid[k] * hid[k]);
        }
        for (int k = 0; k < cfg.H1; ++k) {
          if (dz[k] == 0.0) continue;
          double* gw1 = res.grads.W1.row(k);
          const double* w1 = params.W1.row(k);
          res.grads.b1[k] += dz[k];
          for (int f = 0; f < DP; ++f) gw1[f] += dz[k] * phi[f];
          // dphi folded straight into ddu via the feature derivatives; the
          // cached features already hold sin/cos of w*du, so
          // d(sin)/d(du) = w*phi_cos and d(cos)/d(du) = -w*phi_sin.
          ddu += dz[k] * w1[0];
          for (int fj = 0; fj < cfg.K; ++fj) {
            ddu += dz[k] * wfreq[fj] *
                   (w1[1 + 2 * fj] * phi[2 + 2 * fj] - w1[2 + 2 * fj] * phi[1 + 2 * fj]);
          }
        }
        du_d[j] += ddu;
        du_q[i] -= ddu;
      }
    }
  }

  // Similarity path: dS -> dhtil on both sides.
  Mat dhtil_q = matmul(dS, d.htil);
  Mat dhtil_d = matmul_tn(dS, q.htil);
  for (double& v : dhtil_q.data) v /= cfg.alpha;
  for (double& v : dhtil_d.data) v /= cfg.alpha;

  double span = double(cfg.G) * cfg.Y * cfg.M - 1.0;

  auto side_backward = [&](const SideCache& s, const Mat& h_in, const Mat& dhtil,
                           const std::vector<double>& du, bool is_record) {
    Mat da = dhtil;  // htil = a + gamma*c

    Mat dpg(B, cfg.G), dpy(B, cfg.Y), dpm(B, cfg.M);

    if (opts.use_ctx) {
      for (size_t i = 0; i < dhtil.data.size(); ++i)
        res.grads.gamma += dhtil.data[i] * s.c.data[i];
      Mat dc = dhtil;
      for (double& v : dc.data) v *= params.gamma;
      add_inplace(res.grads.W_ctx, matmul_tn(dc, s.c_cat));
      Mat dc_cat = matmul(dc, params.W_ctx);
      Mat dcg(B, cfg.D_t), dcy(B, cfg.D_t), dcm(B, cfg.D_t);
      for (size_t i = 0; i < B; ++i) {
        std::memcpy(dcg.row(i), dc_cat.row(i), cfg.D_t * sizeof(double));
        std::memcpy(dcy.row(i), dc_cat.row(i) + cfg.D_t, cfg.D_t * sizeof(double));
        std::memcpy(dcm.row(i), dc_cat.row(i) + 2 * cfg.D_t, cfg.D_t * sizeof(double));
      }
      add_inplace(dpg, matmul_nt(dcg, params.Eg));
      add_inplace(dpy, matmul_nt(dcy, params.Ey));
      add_inplace(dpm, matmul_nt(dcm, params.Em));
    }

    if (opts.use_bias) {
      for (size_t i = 0; i < B; ++i) {
        if (du[i] == 0.0) continue;
        double dg = du[i] * (double(cfg.Y) * cfg.M) / span;
        double dy = du[i] * cfg.M / span;
        double dm = du[i] / span;
        for (int k = 0; k < cfg.G; ++k) dpg(i, k) += dg * k;
        for (int k = 0; k < cfg.Y; ++k) dpy(i, k) += dy * k;
        for (int k = 0; k < cfg.M; ++k) dpm(i, k) += dm * k;
      }
    }

    // Through the softmaxes, plus the auxiliary CE on record labels.
    Mat dlg(B, cfg.G), dly(B, cfg.Y), dlm(B, cfg.M);
    for (size_t i = 0; i < B; ++i) {
      softmax_vjp_row(s.pg.row(i), dpg.row(i), dlg.row(i), cfg.G);
      softmax_vjp_row(s.py.row(i), dpy.row(i), dly.row(i), cfg.Y);
      softmax_vjp_row(s.pm.row(i), dpm.row(i), dlm.row(i), cfg.M);
    }
    if (is_record && opts.lambda_time != 0.0) {
      double scale = opts.lambda_time / static_cast<double>(B);
      for (size_t i = 0; i < B; ++i) {
        const TimeKey& lbl = batch.d_labels[i];
        std::vector<double> tg = smoothed_target(cfg.G, lbl.gong, opts.sigma, opts.smoothing);
        std::vector<double> ty = smoothed_target(cfg.Y, lbl.year - 1, opts.sigma, opts.smoothing);
        std::vector<double> tm = smoothed_target(cfg.M, lbl.month - 1, opts.sigma, opts.smoothing);
        for (int k = 0; k < cfg.G; ++k) dlg(i, k) += scale * (s.pg(i, k) - tg[k]);
        for (int k = 0; k < cfg.Y; ++k) dly(i, k) += scale * (s.py(i, k) - ty[k]);
        for (int k = 0; k < cfg.M; ++k) dlm(i, k) += scale * (s.pm(i, k) - tm[k]);
      }
    }

    add_inplace(res.grads.Wg, matmul_tn(dlg, s.a));
    add_inplace(res.grads.Wy, matmul_tn(dly, s.a));
    add_inplace(res.grads.Wm, matmul_tn(dlm, s.a));
    for (size_t i = 0; i < B; ++i) {
      for (int k = 0; k < cfg.G; ++k) res.grads.bg[k] += dlg(i, k);
      for (int k = 0; k < cfg.Y; ++k) res.grads.by[k] += dly(i, k);
      for (int k = 0; k < cfg.M; ++k) res.grads.bm[k] += dlm(i, k);
    }
    add_inplace(da, matmul(dlg, params.Wg));
    add_inplace(da, matmul(dly, params.Wy));
    add_inplace(da, matmul(dlm, params.Wm));

    add_inplace(res.grads.A, matmul_tn(da, h_in));
  };

  side_backward(q, batch.q_emb, dhtil_q, du_q, false);
  side_backward(d, batch.d_emb, dhtil_d, du_d, true);

  bool grads_finite = true;
  std::string bad;
  res.grads.for_each_tensor([&](const char* name, double* data, size_t n, bool) {
    for (size_t k = 0; k < n; ++k)
      if (!std::isfinite(data[k])) {
        grads_finite = false;
        if (bad.empty()) bad = name;
      }
  });
  if (!grads_finite) throw Error("loss_total: non-finite gradient in parameter group " + bad);
  return res;
}

namespace {
constexpr char kCkptMagic[6] = {'C', 'Q', 'C', 'T', 'D', '1'};
constexpr uint32_t kCkptVersion = 1;
}  // namespace

void CTDParams::save(const std::string& path, uint64_t manifest_hash) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot write " + path);
  f.write(kCkptMagic, 6);
  f.write(reinterpret_cast<const char*>(&kCkptVersion), 4);
  f.write(reinterpret_cast<const char*>(&manifest_hash), 8);
  int32_t dims[7] = {cfg.H, cfg.G, cfg.Y, cfg.M, cfg.D_t, cfg.K, cfg.H1};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(&cfg.alpha), 8);
  const_cast<CTDParams*>(this)->for_each_tensor([&](const char*, double* data, size_t n, bool) {
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
  });
}

CTDParams CTDParams::load(const std::string& path, uint64_t manifest_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("checkpoint: cannot read " + path);
  char magic[6];
  if (!f.read(magic, 6) || std::memcmp(magic, kCkptMagic, 6) != 0)
    throw FormatError("checkpoint " + path + ": bad magic");
  uint32_t version = 0;
  if (!f.read(reinterpret_cast<char*>(&version), 4) || version != kCkptVersion)
    throw FormatError("checkpoint " + path + ": unsupported version");
  uint64_t hash = 0;
  if (!f.read(reinterpret_cast<char*>(&hash), 8))
    throw FormatError("checkpoint " + path + ": truncated");
  if (hash != manifest_hash)
    throw Error("checkpoint " + path + ": manifest hash mismatch");

  int32_t dims[7];
  if (!f.read(reinterpret_cast<char*>(dims), sizeof(dims)))
    throw FormatError("checkpoint " + path + ": truncated");
  CTDConfig cfg;
  cfg.H = dims[0];
  cfg.G = dims[1];
  cfg.Y = dims[2];
  cfg.M = dims[3];
  cfg.D_t = dims[4];
  cfg.K = dims[5];
  cfg.H1 = dims[6];
  if (!f.read(reinterpret_cast<char*>(&cfg.alpha), 8))
    throw FormatError("checkpoint " + path + ": truncated");

  CTDParams p = CTDParams::init(cfg, 0);
  p.for_each_tensor([&](const char* name, double* data, size_t n, bool) {
    if (!f.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8)))
      throw FormatError("checkpoint " + path + ": truncated in " + name);
  });
  return p;
}

}  // namespace chronokey
