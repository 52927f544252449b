#pragma once

#include <cstdint>

namespace hypertta {

// Dense kernels behind the autodiff tape.
//
// `kern` holds the production implementations, parallelized with
// parallel_for; `ref` holds plain serial loops kept for testing and for the
// kernel benchmark. Both nest their per-element accumulation loops
// identically (ascending k / ascending (c,dy,dx)), and parallel work is
// split so that each output element is written by exactly one task. The
// result: kern and ref agree bit-for-bit at any thread count, which the
// test suite asserts.
//
// Shapes are row-major and passed explicitly; `_nn/_nt/_tn` name which
// operand is transposed (as in BLAS).

namespace kern {

// C[M,N] = A[M,K] * B[K,N]; C rows start from `bias` (length N) when given.
void matmul_nn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N, const double* bias = nullptr);
// C[M,N] = A[M,K] * B[N,K]^T
void matmul_nt(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N);
// C[M,N] = A[K,M]^T * B[K,N]
void matmul_tn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N);

// Batched variants over G independent problems.
void bmm_nn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N);
void bmm_nt(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N);
void bmm_tn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N);

// Same-size cross-correlation with reflect padding, odd kernel.
// in [B,C,H,W], k [O,C,kh,kw], bias [O] or null, out [B,O,H,W].
void conv2d_reflect(const double* in, const double* k, const double* bias, double* out,
                    std::int64_t B, std::int64_t C, std::int64_t H, std::int64_t W,
                    std::int64_t O, std::int64_t kh, std::int64_t kw);
void conv2d_reflect_dinput(const double* dout, const double* k, double* din, std::int64_t B,
                           std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t O,
                           std::int64_t kh, std::int64_t kw);
void conv2d_reflect_dkernel(const double* dout, const double* in, double* dk, std::int64_t B,
                            std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t O,
                            std::int64_t kh, std::int64_t kw);
void conv2d_reflect_dbias(const double* dout, double* dbias, std::int64_t B, std::int64_t O,
                          std::int64_t H, std::int64_t W);

void relu_forward(const double* x, double* y, std::int64_t n);
void relu_backward(const double* g, const double* x, double* dx, std::int64_t n);

// Row-wise softmax with max subtraction. x,y are [R,d].
void softmax_forward(const double* x, double* y, std::int64_t R, std::int64_t d);
void softmax_backward(const double* g, const double* y, double* dx, std::int64_t R,
                      std::int64_t d);

// Row-wise layernorm over the last axis, biased variance.
// Saves xhat [R,d] and inv_std [R] for backward.
void layernorm_forward(const double* x, const double* gamma, const double* beta, double* y,
                       double* xhat, double* inv_std, std::int64_t R, std::int64_t d,
                       double eps);
void layernorm_backward(const double* g, const double* xhat, const double* inv_std,
                        const double* gamma, double* dx, double* dgamma, double* dbeta,
                        std::int64_t R, std::int64_t d);

// y[i] = x[i] + v[i mod tile]; covers row-vector bias (tile = row length)
// and the positional table (tile = L*d under [B,L,d]).
void add_tiled(const double* x, const double* v, double* y, std::int64_t n, std::int64_t tile);
void mul_tiled(const double* x, const double* v, double* y, std::int64_t n, std::int64_t tile);
// dv[j] = sum_t g[t*tile + j]
void colsum_tiled(const double* g, double* dv, std::int64_t ntiles, std::int64_t tile);

void add_same(const double* a, const double* b, double* y, std::int64_t n);
void scale(const double* x, double s, double* y, std::int64_t n);
void accumulate(double* dst, const double* src, std::int64_t n);  // dst += src

// Layout permutations for the token pipeline.
void tokens_from_maps(const double* x, double* t, std::int64_t B, std::int64_t C,
                      std::int64_t H, std::int64_t W);  // -> [B, H*W, C]
void maps_from_tokens(const double* t, double* x, std::int64_t B, std::int64_t C,
                      std::int64_t H, std::int64_t W);  // inverse
void split_heads(const double* x, double* y, std::int64_t B, std::int64_t L, std::int64_t D,
                 std::int64_t heads);  // [B,L,D] -> [B*heads, L, D/heads]
void merge_heads(const double* y, double* x, std::int64_t B, std::int64_t L, std::int64_t D,
                 std::int64_t heads);  // inverse

}  // namespace kern

namespace ref {

void matmul_nn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N, const double* bias = nullptr);
void matmul_nt(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N);
void matmul_tn(const double* A, const double* B, double* C, std::int64_t M, std::int64_t K,
               std::int64_t N);
void bmm_nn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N);
void bmm_nt(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N);
void bmm_tn(const double* A, const double* B, double* C, std::int64_t G, std::int64_t M,
            std::int64_t K, std::int64_t N);
void conv2d_reflect(const double* in, const double* k, const double* bias, double* out,
                    std::int64_t B, std::int64_t C, std::int64_t H, std::int64_t W,
                    std::int64_t O, std::int64_t kh, std::int64_t kw);
void softmax_forward(const double* x, double* y, std::int64_t R, std::int64_t d);
void layernorm_forward(const double* x, const double* gamma, const double* beta, double* y,
                       double* xhat, double* inv_std, std::int64_t R, std::int64_t d,
                       double eps);

}  // namespace ref

}  // namespace hypertta
