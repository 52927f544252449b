#include <cstdlib>
#include <cstring>
#include <vector>

#include <doctest.h>

#include "hypertta/kernels.hpp"
#include "hypertta/parallel.hpp"
#include "hypertta/rng.hpp"

using namespace hypertta;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t lane) {
  RngStream rng(1234, 0x4B45524E, lane);
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_double() * 2.0 - 1.0;
  return v;
}

struct ThreadGuard {
  ~ThreadGuard() { set_max_threads(0); }
};

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("parallel kernels match the serial reference bit-for-bit") {
  ThreadGuard guard;
  const std::int64_t M = 17, K = 23, N = 19;
  const auto A = random_vec(static_cast<std::size_t>(M * K), 0);
  const auto Bm = random_vec(static_cast<std::size_t>(K * N), 1);
  const auto bias = random_vec(static_cast<std::size_t>(N), 2);

  for (int threads : {1, 4}) {
    set_max_threads(threads);
    CAPTURE(threads);

    std::vector<double> got(static_cast<std::size_t>(M * N));
    std::vector<double> want(got.size());
    kern::matmul_nn(A.data(), Bm.data(), got.data(), M, K, N, bias.data());
    ref::matmul_nn(A.data(), Bm.data(), want.data(), M, K, N, bias.data());
    CHECK(bits_equal(got, want));

    kern::matmul_nn(A.data(), Bm.data(), got.data(), M, K, N, nullptr);
    ref::matmul_nn(A.data(), Bm.data(), want.data(), M, K, N, nullptr);
    CHECK(bits_equal(got, want));

    const auto Bt = random_vec(static_cast<std::size_t>(N * K), 3);
    kern::matmul_nt(A.data(), Bt.data(), got.data(), M, K, N);
    ref::matmul_nt(A.data(), Bt.data(), want.data(), M, K, N);
    CHECK(bits_equal(got, want));

    const auto At = random_vec(static_cast<std::size_t>(K * M), 4);
    kern::matmul_tn(At.data(), Bm.data(), got.data(), M, K, N);
    ref::matmul_tn(At.data(), Bm.data(), want.data(), M, K, N);
    CHECK(bits_equal(got, want));

    const std::int64_t G = 5;
    const auto gA = random_vec(static_cast<std::size_t>(G * M * K), 5);
    const auto gB = random_vec(static_cast<std::size_t>(G * K * N), 6);
    std::vector<double> bg(static_cast<std::size_t>(G * M * N));
    std::vector<double> bw(bg.size());
    kern::bmm_nn(gA.data(), gB.data(), bg.data(), G, M, K, N);
    ref::bmm_nn(gA.data(), gB.data(), bw.data(), G, M, K, N);
    CHECK(bits_equal(bg, bw));

    const auto gBt = random_vec(static_cast<std::size_t>(G * N * K), 7);
    kern::bmm_nt(gA.data(), gBt.data(), bg.data(), G, M, K, N);
    ref::bmm_nt(gA.data(), gBt.data(), bw.data(), G, M, K, N);
    CHECK(bits_equal(bg, bw));

    const auto gAt = random_vec(static_cast<std::size_t>(G * K * M), 8);
    kern::bmm_tn(gAt.data(), gB.data(), bg.data(), G, M, K, N);
    ref::bmm_tn(gAt.data(), gB.data(), bw.data(), G, M, K, N);
    CHECK(bits_equal(bg, bw));

    const std::int64_t B = 2, C = 3, H = 9, W = 7, O = 4, kh = 3, kw = 5;
    const auto in = random_vec(static_cast<std::size_t>(B * C * H * W), 9);
    const auto kw_ = random_vec(static_cast<std::size_t>(O * C * kh * kw), 10);
    const auto cbias = random_vec(static_cast<std::size_t>(O), 11);
    std::vector<double> cg(static_cast<std::size_t>(B * O * H * W));
    std::vector<double> cw(cg.size());
    kern::conv2d_reflect(in.data(), kw_.data(), cbias.data(), cg.data(), B, C, H, W, O, kh, kw);
    ref::conv2d_reflect(in.data(), kw_.data(), cbias.data(), cw.data(), B, C, H, W, O, kh, kw);
    CHECK(bits_equal(cg, cw));

    const std::int64_t R = 33, d = 12;
    const auto x = random_vec(static_cast<std::size_t>(R * d), 12);
    std::vector<double> sg(x.size()), sw(x.size());
    kern::softmax_forward(x.data(), sg.data(), R, d);
    ref::softmax_forward(x.data(), sw.data(), R, d);
    CHECK(bits_equal(sg, sw));

    const auto gamma = random_vec(static_cast<std::size_t>(d), 13);
    const auto beta = random_vec(static_cast<std::size_t>(d), 14);
    std::vector<double> yg(x.size()), yw(x.size());
    std::vector<double> hg(x.size()), hw(x.size());
    std::vector<double> ig(static_cast<std::size_t>(R)), iw(static_cast<std::size_t>(R));
    kern::layernorm_forward(x.data(), gamma.data(), beta.data(), yg.data(), hg.data(), ig.data(),
                            R, d, 1e-5);
    ref::layernorm_forward(x.data(), gamma.data(), beta.data(), yw.data(), hw.data(), iw.data(),
                           R, d, 1e-5);
    CHECK(bits_equal(yg, yw));
    CHECK(bits_equal(hg, hw));
    CHECK(bits_equal(ig, iw));
  }
}

TEST_CASE("conv backward passes are invariant to the thread count") {
  ThreadGuard guard;
  const std::int64_t B = 2, C = 4, H = 8, W = 6, O = 3, kh = 5, kw = 3;
  const auto in = random_vec(static_cast<std::size_t>(B * C * H * W), 20);
  const auto k = random_vec(static_cast<std::size_t>(O * C * kh * kw), 21);
  const auto dout = random_vec(static_cast<std::size_t>(B * O * H * W), 22);

  std::vector<std::vector<double>> din_by_threads, dk_by_threads, db_by_threads;
  for (int threads : {1, 4}) {
    set_max_threads(threads);
    std::vector<double> din(in.size());
    std::vector<double> dk(k.size());
    std::vector<double> db(static_cast<std::size_t>(O));
    kern::conv2d_reflect_dinput(dout.data(), k.data(), din.data(), B, C, H, W, O, kh, kw);
    kern::conv2d_reflect_dkernel(dout.data(), in.data(), dk.data(), B, C, H, W, O, kh, kw);
    kern::conv2d_reflect_dbias(dout.data(), db.data(), B, O, H, W);
    din_by_threads.push_back(std::move(din));
    dk_by_threads.push_back(std::move(dk));
    db_by_threads.push_back(std::move(db));
  }
  CHECK(bits_equal(din_by_threads[0], din_by_threads[1]));
  CHECK(bits_equal(dk_by_threads[0], dk_by_threads[1]));
  CHECK(bits_equal(db_by_threads[0], db_by_threads[1]));

  // dbias is just the per-filter sum of dout.
  for (std::int64_t o = 0; o < O; ++o) {
    double want = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t i = 0; i < H * W; ++i) {
        want += dout[static_cast<std::size_t>((b * O + o) * H * W + i)];
      }
    }
    CHECK(db_by_threads[0][static_cast<std::size_t>(o)] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("elementwise helpers agree with hand loops") {
  const std::int64_t tile = 12;
  const std::int64_t ntiles = 8;
  const auto x = random_vec(static_cast<std::size_t>(ntiles * tile), 30);
  const auto v = random_vec(static_cast<std::size_t>(tile), 31);

  std::vector<double> y(x.size());
  kern::add_tiled(x.data(), v.data(), y.data(), ntiles * tile, tile);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y[i] == x[i] + v[i % static_cast<std::size_t>(tile)]);
  }

  kern::mul_tiled(x.data(), v.data(), y.data(), ntiles * tile, tile);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y[i] == x[i] * v[i % static_cast<std::size_t>(tile)]);
  }

  std::vector<double> dv(static_cast<std::size_t>(tile));
  kern::colsum_tiled(x.data(), dv.data(), ntiles, tile);
  for (std::int64_t j = 0; j < tile; ++j) {
    double want = 0.0;
    for (std::int64_t t = 0; t < ntiles; ++t) want += x[static_cast<std::size_t>(t * tile + j)];
    CHECK(dv[static_cast<std::size_t>(j)] == doctest::Approx(want).epsilon(1e-12));
  }

  const auto b = random_vec(x.size(), 32);
  kern::add_same(x.data(), b.data(), y.data(), static_cast<std::int64_t>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i] + b[i]);

  kern::scale(x.data(), -1.75, y.data(), static_cast<std::int64_t>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i] * -1.75);

  std::vector<double> acc(b);
  kern::accumulate(acc.data(), x.data(), static_cast<std::int64_t>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(acc[i] == b[i] + x[i]);

  std::vector<double> r(x.size());
  kern::relu_forward(x.data(), r.data(), static_cast<std::int64_t>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == (x[i] > 0.0 ? x[i] : 0.0));
  std::vector<double> dr(x.size());
  kern::relu_backward(b.data(), x.data(), dr.data(), static_cast<std::int64_t>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(dr[i] == (x[i] > 0.0 ? b[i] : 0.0));
}

TEST_CASE("softmax rows are simplex points and layernorm rows are standardized") {
  const std::int64_t R = 11, d = 7;
  const auto x = random_vec(static_cast<std::size_t>(R * d), 40);
  std::vector<double> y(x.size());
  kern::softmax_forward(x.data(), y.data(), R, d);
  for (std::int64_t r = 0; r < R; ++r) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double p = y[static_cast<std::size_t>(r * d + j)];
      CHECK(p > 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  std::vector<double> gamma(static_cast<std::size_t>(d), 1.0);
  std::vector<double> beta(static_cast<std::size_t>(d), 0.0);
  std::vector<double> ln(x.size()), xhat(x.size()), inv_std(static_cast<std::size_t>(R));
  kern::layernorm_forward(x.data(), gamma.data(), beta.data(), ln.data(), xhat.data(),
                          inv_std.data(), R, d, 1e-5);
  for (std::int64_t r = 0; r < R; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mean += ln[static_cast<std::size_t>(r * d + j)];
    mean /= static_cast<double>(d);
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = ln[static_cast<std::size_t>(r * d + j)] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
    CHECK(inv_std[static_cast<std::size_t>(r)] > 0.0);
  }
}

TEST_CASE("token and head permutations are exact inverses with the documented layout") {
  const std::int64_t B = 2, C = 5, H = 3, W = 4;
  const auto x = random_vec(static_cast<std::size_t>(B * C * H * W), 50);
  std::vector<double> tok(x.size());
  kern::tokens_from_maps(x.data(), tok.data(), B, C, H, W);
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t p = 0; p < H * W; ++p) {
        const double want = x[static_cast<std::size_t>((b * C + c) * H * W + p)];
        const double got = tok[static_cast<std::size_t>((b * H * W + p) * C + c)];
        CHECK(got == want);
      }
    }
  }
  std::vector<double> back(x.size());
  kern::maps_from_tokens(tok.data(), back.data(), B, C, H, W);
  CHECK(bits_equal(back, x));

  const std::int64_t L = 6, D = 8, heads = 4;
  const auto t = random_vec(static_cast<std::size_t>(B * L * D), 51);
  std::vector<double> split(t.size());
  kern::split_heads(t.data(), split.data(), B, L, D, heads);
  const std::int64_t dh = D / heads;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t h = 0; h < heads; ++h) {
      for (std::int64_t l = 0; l < L; ++l) {
        for (std::int64_t j = 0; j < dh; ++j) {
          const double want = t[static_cast<std::size_t>((b * L + l) * D + h * dh + j)];
          const double got = split[static_cast<std::size_t>(((b * heads + h) * L + l) * dh + j)];
          CHECK(got == want);
        }
      }
    }
  }
  std::vector<double> merged(t.size());
  kern::merge_heads(split.data(), merged.data(), B, L, D, heads);
  CHECK(bits_equal(merged, t));
}

TEST_CASE("thread cap resolution order: override, then environment") {
  ThreadGuard guard;
  set_max_threads(3);
  CHECK(max_threads() == 3);

  set_max_threads(0);
  REQUIRE(setenv("HYPERTTA_THREADS", "2", 1) == 0);
  CHECK(max_threads() == 2);
  set_max_threads(5);  // override beats the environment
  CHECK(max_threads() == 5);
  set_max_threads(0);
  REQUIRE(setenv("HYPERTTA_THREADS", "garbage", 1) == 0);
  CHECK(max_threads() >= 1);  // malformed value falls through
  REQUIRE(unsetenv("HYPERTTA_THREADS") == 0);
  CHECK(max_threads() >= 1);
}

TEST_SUITE_END();
