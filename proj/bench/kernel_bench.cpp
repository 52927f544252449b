// Timing harness: parallel kernels (kern::) against the serial reference
// implementations (ref::) on representative shapes, with a bitwise equality
// check on every pair. Wall time only; run on an idle machine for stable
// numbers.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "hypertta/kernels.hpp"
#include "hypertta/parallel.hpp"
#include "hypertta/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> random_vec(std::size_t n, std::uint32_t lane) {
  hypertta::RngStream rng(42, 0x42454E43, lane);  // "BENC"
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_uniform(-1.0, 1.0);
  return v;
}

double time_best_of(const std::function<void()>& fn, int reps = 3) {
  fn();  // warm up
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    fn();
    const auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

struct Case {
  std::string name;
  double flops;
  std::function<void(std::vector<double>&)> parallel;
  std::function<void(std::vector<double>&)> serial;
  std::size_t out_size;
};

}  // namespace

int main() {
  std::printf("threads: %d\n\n", hypertta::max_threads());
  std::printf("%-24s %10s %10s %8s %8s  %s\n", "kernel", "kern(ms)", "ref(ms)", "kernGF",
              "speedup", "bitwise");

  std::vector<Case> cases;

  {  // matmul 384^3
    const std::int64_t n = 384;
    auto a = random_vec(n * n, 0), b = random_vec(n * n, 1);
    cases.push_back(Case{
        "matmul_nn 384^3", 2.0 * n * n * n,
        [=](std::vector<double>& c) {
          hypertta::kern::matmul_nn(a.data(), b.data(), c.data(), n, n, n);
        },
        [=](std::vector<double>& c) {
          hypertta::ref::matmul_nn(a.data(), b.data(), c.data(), n, n, n);
        },
        static_cast<std::size_t>(n * n)});
  }
  {  // conv on a training-shaped batch
    const std::int64_t B = 64, C = 32, H = 5, W = 5, O = 32, K = 5;
    auto x = random_vec(B * C * H * W, 2);
    auto k = random_vec(O * C * K * K, 3);
    auto bias = random_vec(O, 4);
    const double flops = 2.0 * B * O * H * W * C * K * K;
    cases.push_back(Case{
        "conv2d 64x32x5x5 k5", flops,
        [=](std::vector<double>& out) {
          hypertta::kern::conv2d_reflect(x.data(), k.data(), bias.data(), out.data(), B, C, H,
                                         W, O, K, K);
        },
        [=](std::vector<double>& out) {
          hypertta::ref::conv2d_reflect(x.data(), k.data(), bias.data(), out.data(), B, C, H,
                                        W, O, K, K);
        },
        static_cast<std::size_t>(B * O * H * W)});
  }
  {  // attention-shaped batched matmul
    const std::int64_t G = 256, M = 25, K = 24, N = 25;
    auto a = random_vec(G * M * K, 5), b = random_vec(G * K * N, 6);
    cases.push_back(Case{
        "bmm_nn 256x25x24x25", 2.0 * G * M * K * N,
        [=](std::vector<double>& c) {
          hypertta::kern::bmm_nn(a.data(), b.data(), c.data(), G, M, K, N);
        },
        [=](std::vector<double>& c) {
          hypertta::ref::bmm_nn(a.data(), b.data(), c.data(), G, M, K, N);
        },
        static_cast<std::size_t>(G * M * N)});
  }
  {  // layernorm + softmax over a token batch
    const std::int64_t R = 65536, d = 96;
    auto x = random_vec(R * d, 7);
    auto gamma = random_vec(d, 8), beta = random_vec(d, 9);
    cases.push_back(Case{
        "layernorm 65536x96", 8.0 * R * d,
        [=](std::vector<double>& y) {
          std::vector<double> xhat(x.size());
          std::vector<double> inv_std(R);
          hypertta::kern::layernorm_forward(x.data(), gamma.data(), beta.data(), y.data(),
                                    xhat.data(), inv_std.data(), R, d, 1e-5);
        },
        [=](std::vector<double>& y) {
          std::vector<double> xhat(x.size());
          std::vector<double> inv_std(R);
          hypertta::ref::layernorm_forward(x.data(), gamma.data(), beta.data(), y.data(), xhat.data(),
                                   inv_std.data(), R, d, 1e-5);
        },
        static_cast<std::size_t>(R * d)});
    cases.push_back(Case{
        "softmax 65536x96", 5.0 * R * d,
        [=](std::vector<double>& y) {
          hypertta::kern::softmax_forward(x.data(), y.data(), R, d);
        },
        [=](std::vector<double>& y) {
          hypertta::ref::softmax_forward(x.data(), y.data(), R, d);
        },
        static_cast<std::size_t>(R * d)});
  }

  for (const Case& c : cases) {
    std::vector<double> out_par(c.out_size), out_ser(c.out_size);
    const double tp = time_best_of([&] { c.parallel(out_par); });
    const double ts = time_best_of([&] { c.serial(out_ser); });
    const bool equal =
        std::memcmp(out_par.data(), out_ser.data(), c.out_size * sizeof(double)) == 0;
    std::printf("%-24s %10.2f %10.2f %8.2f %8.2fx  %s\n", c.name.c_str(), tp * 1e3, ts * 1e3,
                c.flops / tp / 1e9, ts / tp, equal ? "equal" : "DIFFER");
    if (!equal) return 1;
  }
  return 0;
}
