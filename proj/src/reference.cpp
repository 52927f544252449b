#include <algorithm>
#include <cmath>
#include <cstring>

#include "hypertta/kernels.hpp"

// Serial counterparts of the production kernels, loop-for-loop identical so
// the two can be compared bit-for-bit. No parallel_for, no buffers beyond
// what the loops need.

namespace hypertta::ref {

namespace {

inline std::int64_t reflect(std::int64_t x, std::int64_t len) {
  if (x < 0) return -x;
  if (x >= len) return 2 * len - 2 - x;
  return x;
}

}  // namespace

void matmul_nn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N, const double* bias) {
  for (std::int64_t i = 0; i < M; ++i) {
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
  }
}

void matmul_nt(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N) {
  for (std::int64_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    double* c = C + i * N;
    for (std::int64_t j = 0; j < N; ++j) {
      const double* b = B + j * K;
      double s = 0.0;
      for (std::int64_t k = 0; k < K; ++k) s += a[k] * b[k];
      c[j] = s;
    }
  }
}

void matmul_tn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N) {
  for (std::int64_t i = 0; i < M; ++i) {
    double* c = C + i * N;
    std::fill(c, c + N, 0.0);
    for (std::int64_t k = 0; k < K; ++k) {
      const double av = A[k * M + i];
      const double* b = B + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

void bmm_nn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N) {
  for (std::int64_t g = 0; g < G; ++g) {
    matmul_nn(A + g * M * K, B + g * K * N, C + g * M * N, M, K, N, nullptr);
  }
}

void bmm_nt(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N) {
  for (std::int64_t g = 0; g < G; ++g) {
    matmul_nt(A + g * M * K, B + g * N * K, C + g * M * N, M, K, N);
  }
}

void bmm_tn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N) {
  for (std::int64_t g = 0; g < G; ++g) {
    matmul_tn(A + g * K * M, B + g * K * N, C + g * M * N, M, K, N);
  }
}

void conv2d_reflect(const double* in, const double* k, const double* bias, double* out,
                    std::int64_t B, std::int64_t C, std::int64_t H, std::int64_t W,
                    std::int64_t O, std::int64_t kh, std::int64_t kw) {
  const std::int64_t P = H * W;
  const std::int64_t ph = kh / 2;
  const std::int64_t pw = kw / 2;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t o = 0; o < O; ++o) {
      double* dst = out + (b * O + o) * P;
      for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
          double acc = bias ? bias[o] : 0.0;
          // (c, dy, dx) ascending — the order the im2col matmul adds in.
          for (std::int64_t c = 0; c < C; ++c) {
            const double* plane = in + (b * C + c) * P;
            const double* kk = k + (o * C + c) * kh * kw;
            for (std::int64_t dy = -ph; dy <= ph; ++dy) {
              const double* srow = plane + reflect(y + dy, H) * W;
              for (std::int64_t dx = -pw; dx <= pw; ++dx) {
                acc += kk[(dy + ph) * kw + (dx + pw)] * srow[reflect(x + dx, W)];
              }
            }
          }
          dst[y * W + x] = acc;
        }
      }
    }
  }
}

void softmax_forward(const double* x, double* y, std::int64_t R, std::int64_t d) {
  for (std::int64_t r = 0; r < R; ++r) {
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
  }
}

void layernorm_forward(const double* x, const double* gamma, const double* beta, double* y,
                       double* xhat, double* inv_std, std::int64_t R, std::int64_t d,
                       double eps) {
  for (std::int64_t r = 0; r < R; ++r) {
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
  }
}

}  // namespace hypertta::ref
