#include "hypertta/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "hypertta/parallel.hpp"

namespace hypertta::kern {

namespace {

inline std::int64_t reflect(std::int64_t x, std::int64_t len) {
  if (x < 0) return -x;
  if (x >= len) return 2 * len - 2 - x;
  return x;
}

}  // namespace

void matmul_nn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N, const double* bias) {
  parallel_for(M, [&](std::int64_t i) {
    double* c = C + i * N;
    if (bias) {
      std::memcpy(c, bias, static_cast<std::size_t>(N) * sizeof(double));
    } else {
      std::fill(c, c + N, 0.0);
    }
    const double* a = A + i * K;
    for (std::int64_t k = 0; k < K; ++k) {
      const double av = a[k];
      const double* b = B + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  });
}

void matmul_nt(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N) {
  parallel_for(M, [&](std::int64_t i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (std::int64_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double s = 0.0;
      for (std::int64_t k = 0; k < K; ++k) s += a[k] * b[k];
      c[j] = s;
    }
  });
}

void matmul_tn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N) {
  parallel_for(M, [&](std::int64_t i) {
    double* c = C + i * N;
    std::fill(c, c + N, 0.0);
    for (std::int64_t k = 0; k < K; ++k) {
      const double av = A[k * M + i];
      const double* b = B + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  });
}

void bmm_nn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N) {
  parallel_for(G * M, [&](std::int64_t gi) {
    const std::int64_t g = gi / M;
    const std::int64_t i = gi % M;
    const double* a = A + (g * M + i) * K;
    const double* bg = B + g * K * N;
    double* c = C + (g * M + i) * N;
    std::fill(c, c + N, 0.0);
    for (std::int64_t k = 0; k < K; ++k) {
      const double av = a[k];
      const double* b = bg + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  });
}

void bmm_nt(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N) {
  parallel_for(G * M, [&](std::int64_t gi) {
    const std::int64_t g = gi / M;
    const std::int64_t i = gi % M;
    const double* a = A + (g * M + i) * K;
    const double* bg = B + g * N * K;
    double* c = C + (g * M + i) * N;
    for (std::int64_t j = 0; j < N; ++j) {
      const double* b = bg + j * K;
      double s = 0.0;
      for (std::int64_t k = 0; k < K; ++k) s += a[k] * b[k];
      c[j] = s;
    }
  });
}

void bmm_tn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N) {
  parallel_for(G * M, [&](std::int64_t gi) {
    const std::int64_t g = gi / M;
    const std::int64_t i = gi % M;
    const double* ag = A + g * K * M;
    const double* bg = B + g * K * N;
    double* c = C + (g * M + i) * N;
    std::fill(c, c + N, 0.0);
    for (std::int64_t k = 0; k < K; ++k) {
      const double av = ag[k * M + i];
      const double* b = bg + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  });
}

void conv2d_reflect(const double* in, const double* k, const double* bias, double* out,
                    std::int64_t B, std::int64_t C, std::int64_t H, std::int64_t W,
                    std::int64_t O, std::int64_t kh, std::int64_t kw) {
  const std::int64_t P = H * W;
  const std::int64_t Q = C * kh * kw;
  const std::int64_t ph = kh / 2;
  const std::int64_t pw = kw / 2;
  parallel_for(B, [&](std::int64_t b) {
    // im2col: row q = (c,dy,dx) ascending — the same nesting the direct
    // reference uses, so the k-loop of the matmul adds in the same order.
    std::vector<double> col(static_cast<std::size_t>(Q) * P);
    const double* src = in + b * C * P;
    std::int64_t q = 0;
    for (std::int64_t c = 0; c < C; ++c) {
      const double* plane = src + c * P;
      for (std::int64_t dy = -ph; dy <= ph; ++dy) {
        for (std::int64_t dx = -pw; dx <= pw; ++dx, ++q) {
          double* row = col.data() + q * P;
          for (std::int64_t y = 0; y < H; ++y) {
            const double* srow = plane + reflect(y + dy, H) * W;
            for (std::int64_t x = 0; x < W; ++x) {
              row[y * W + x] = srow[reflect(x + dx, W)];
            }
          }
        }
      }
    }
    double* dst = out + b * O * P;
    for (std::int64_t o = 0; o < O; ++o) {
      double* c = dst + o * P;
      std::fill(c, c + P, bias ? bias[o] : 0.0);
      const double* krow = k + o * Q;
      for (std::int64_t qq = 0; qq < Q; ++qq) {
        const double kv = krow[qq];
        const double* row = col.data() + qq * P;
        for (std::int64_t p = 0; p < P; ++p) c[p] += kv * row[p];
      }
    }
  });
}

void conv2d_reflect_dinput(const double* dout, const double* k, double* din, std::int64_t B,
                           std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t O,
                           std::int64_t kh, std::int64_t kw) {
  const std::int64_t P = H * W;
  const std::int64_t ph = kh / 2;
  const std::int64_t pw = kw / 2;
  parallel_for(B * C, [&](std::int64_t bc) {
    const std::int64_t b = bc / C;
    const std::int64_t c = bc % C;
    double* plane = din + (b * C + c) * P;
    std::fill(plane, plane + P, 0.0);
    for (std::int64_t o = 0; o < O; ++o) {
      const double* g = dout + (b * O + o) * P;
      const double* kk = k + (o * C + c) * kh * kw;
      for (std::int64_t dy = -ph; dy <= ph; ++dy) {
        for (std::int64_t dx = -pw; dx <= pw; ++dx) {
          const double kv = kk[(dy + ph) * kw + (dx + pw)];
          for (std::int64_t y = 0; y < H; ++y) {
            double* drow = plane + reflect(y + dy, H) * W;
            const double* grow = g + y * W;
            for (std::int64_t x = 0; x < W; ++x) {
              drow[reflect(x + dx, W)] += kv * grow[x];
            }
          }
        }
      }
    }
  });
}

void conv2d_reflect_dkernel(const double* dout, const double* in, double* dk, std::int64_t B,
                            std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t O,
                            std::int64_t kh, std::int64_t kw) {
  const std::int64_t P = H * W;
  const std::int64_t ph = kh / 2;
  const std::int64_t pw = kw / 2;
  parallel_for(O * C, [&](std::int64_t oc) {
    const std::int64_t o = oc / C;
    const std::int64_t c = oc % C;
    double* slot = dk + (o * C + c) * kh * kw;
    for (std::int64_t dy = -ph; dy <= ph; ++dy) {
      for (std::int64_t dx = -pw; dx <= pw; ++dx) {
        double s = 0.0;
        for (std::int64_t b = 0; b < B; ++b) {
          const double* g = dout + (b * O + o) * P;
          const double* plane = in + (b * C + c) * P;
          for (std::int64_t y = 0; y < H; ++y) {
            const double* srow = plane + reflect(y + dy, H) * W;
            const double* grow = g + y * W;
            for (std::int64_t x = 0; x < W; ++x) {
              s += grow[x] * srow[reflect(x + dx, W)];
            }
          }
        }
        slot[(dy + ph) * kw + (dx + pw)] = s;
      }
    }
  });
}

void conv2d_reflect_dbias(const double* dout, double* dbias, std::int64_t B, std::int64_t O,
                          std::int64_t H, std::int64_t W) {
  const std::int64_t P = H * W;
  parallel_for(O, [&](std::int64_t o) {
    double s = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      const double* g = dout + (b * O + o) * P;
      for (std::int64_t p = 0; p < P; ++p) s += g[p];
    }
    dbias[o] = s;
  });
}

void relu_forward(const double* x, double* y, std::int64_t n) {
  parallel_for(n, [&](std::int64_t i) { y[i] = x[i] > 0.0 ? x[i] : 0.0; });
}

void relu_backward(const double* g, const double* x, double* dx, std::int64_t n) {
  parallel_for(n, [&](std::int64_t i) { dx[i] = x[i] > 0.0 ? g[i] : 0.0; });
}

void softmax_forward(const double* x, double* y, std::int64_t R, std::int64_t d) {
  parallel_for(R, [&](std::int64_t r) {
    const double* xr = x + r * d;
    double* yr = y + r * d;
    double m = xr[0];
    for (std::int64_t j = 1; j < d; ++j) m = std::max(m, xr[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      yr[j] = std::exp(xr[j] - m);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (std::int64_t j = 0; j < d; ++j) yr[j] *= inv;
  });
}

void softmax_backward(const double* g, const double* y, double* dx, std::int64_t R,
                      std::int64_t d) {
  parallel_for(R, [&](std::int64_t r) {
    const double* gr = g + r * d;
    const double* yr = y + r * d;
    double* dr = dx + r * d;
    double dot = 0.0;
    for (std::int64_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
    for (std::int64_t j = 0; j < d; ++j) dr[j] = yr[j] * (gr[j] - dot);
  });
}

void layernorm_forward(const double* x, const double* gamma, const double* beta, double* y,
                       double* xhat, double* inv_std, std::int64_t R, std::int64_t d,
                       double eps) {
  parallel_for(R, [&](std::int64_t r) {
    const double* xr = x + r * d;
    double* yr = y + r * d;
    double* hr = xhat + r * d;
    double mean = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double dlt = xr[j] - mean;
      var += dlt * dlt;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::int64_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * is;
      yr[j] = hr[j] * gamma[j] + beta[j];
    }
  });
}

void layernorm_backward(const double* g, const double* xhat, const double* inv_std,
                        const double* gamma, double* dx, double* dgamma, double* dbeta,
                        std::int64_t R, std::int64_t d) {
  if (dx) {
    parallel_for(R, [&](std::int64_t r) {
      const double* gr = g + r * d;
      const double* hr = xhat + r * d;
      double* dr = dx + r * d;
      double mh = 0.0;
      double mhx = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        const double hgj = gr[j] * gamma[j];
        mh += hgj;
        mhx += hgj * hr[j];
      }
      mh /= static_cast<double>(d);
      mhx /= static_cast<double>(d);
      const double is = inv_std[r];
      for (std::int64_t j = 0; j < d; ++j) {
        dr[j] = is * (gr[j] * gamma[j] - mh - hr[j] * mhx);
      }
    });
  }
  if (dgamma) {
    parallel_for(d, [&](std::int64_t j) {
      double sg = 0.0;
      double sb = 0.0;
      for (std::int64_t r = 0; r < R; ++r) {
        sg += g[r * d + j] * xhat[r * d + j];
        sb += g[r * d + j];
      }
      dgamma[j] = sg;
      dbeta[j] = sb;
    });
  }
}

void add_tiled(const double* x, const double* v, double* y, std::int64_t n, std::int64_t tile) {
  parallel_for(n, [&](std::int64_t i) { y[i] = x[i] + v[i % tile]; });
}

void mul_tiled(const double* x, const double* v, double* y, std::int64_t n, std::int64_t tile) {
  parallel_for(n, [&](std::int64_t i) { y[i] = x[i] * v[i % tile]; });
}

void colsum_tiled(const double* g, double* dv, std::int64_t ntiles, std::int64_t tile) {
  parallel_for(tile, [&](std::int64_t j) {
    double s = 0.0;
    for (std::int64_t t = 0; t < ntiles; ++t) s += g[t * tile + j];
    dv[j] = s;
  });
}

void add_same(const double* a, const double* b, double* y, std::int64_t n) {
  parallel_for(n, [&](std::int64_t i) { y[i] = a[i] + b[i]; });
}

void scale(const double* x, double s, double* y, std::int64_t n) {
  parallel_for(n, [&](std::int64_t i) { y[i] = x[i] * s; });
}

void accumulate(double* dst, const double* src, std::int64_t n) {
  parallel_for(n, [&](std::int64_t i) { dst[i] += src[i]; });
}

void tokens_from_maps(const double* x, double* t, std::int64_t B, std::int64_t C,
                      std::int64_t H, std::int64_t W) {
  const std::int64_t P = H * W;
  parallel_for(B * P, [&](std::int64_t bp) {
    const std::int64_t b = bp / P;
    const std::int64_t p = bp % P;
    const double* src = x + b * C * P + p;
    double* dst = t + (b * P + p) * C;
    for (std::int64_t c = 0; c < C; ++c) dst[c] = src[c * P];
  });
}

void maps_from_tokens(const double* t, double* x, std::int64_t B, std::int64_t C,
                      std::int64_t H, std::int64_t W) {
  const std::int64_t P = H * W;
  parallel_for(B * P, [&](std::int64_t bp) {
    const std::int64_t b = bp / P;
    const std::int64_t p = bp % P;
    const double* src = t + (b * P + p) * C;
    double* dst = x + b * C * P + p;
    for (std::int64_t c = 0; c < C; ++c) dst[c * P] = src[c];
  });
}

void split_heads(const double* x, double* y, std::int64_t B, std::int64_t L, std::int64_t D,
                 std::int64_t heads) {
  const std::int64_t dh = D / heads;
  parallel_for(B * heads * L, [&](std::int64_t row) {
    const std::int64_t l = row % L;
    const std::int64_t bh = row / L;
    const std::int64_t b = bh / heads;
    const std::int64_t h = bh % heads;
    const double* src = x + (b * L + l) * D + h * dh;
    double* dst = y + row * dh;
    std::memcpy(dst, src, static_cast<std::size_t>(dh) * sizeof(double));
  });
}

void merge_heads(const double* y, double* x, std::int64_t B, std::int64_t L, std::int64_t D,
                 std::int64_t heads) {
  const std::int64_t dh = D / heads;
  parallel_for(B * heads * L, [&](std::int64_t row) {
    const std::int64_t l = row % L;
    const std::int64_t bh = row / L;
    const std::int64_t b = bh / heads;
    const std::int64_t h = bh % heads;
    double* dst = x + (b * L + l) * D + h * dh;
    const double* src = y + row * dh;
    std::memcpy(dst, src, static_cast<std::size_t>(dh) * sizeof(double));
  });
}

}  // namespace hypertta::kern
