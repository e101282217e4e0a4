// Times the parallel kernels against the serial reference and verifies
// they agree bit for bit on every size they are compared at.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "quisg/kernels.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

int main() {
  std::mt19937_64 rng(7);
  bool all_equal = true;
  const int reps = 3;

  std::printf("%-22s %10s %12s %12s %8s\n", "kernel", "size", "serial ms",
              "parallel ms", "equal");
  for (std::size_t n : {64u, 128u, 256u, 384u}) {
    const std::vector<double> a = random_vec(n * n, rng);
    const std::vector<double> b = random_vec(n * n, rng);
    std::vector<double> c_par(n * n), c_ser(n * n);

    const double t_ser = time_ms(
        [&] { quisg::kernels::serial::matmul_nn(a.data(), b.data(), c_ser.data(), n, n, n); },
        reps);
    const double t_par = time_ms(
        [&] { quisg::kernels::matmul_nn(a.data(), b.data(), c_par.data(), n, n, n); },
        reps);
    const bool eq = bitwise_equal(c_par, c_ser);
    all_equal = all_equal && eq;
    std::printf("%-22s %7zux%-3zu %12.3f %12.3f %8s\n", "matmul_nn", n, n, t_ser,
                t_par, eq ? "yes" : "NO");
  }

  for (std::size_t rows : {256u, 1024u}) {
    const std::size_t cols = 256;
    const std::vector<double> x = random_vec(rows * cols, rng);
    std::vector<std::uint8_t> mask(rows * cols, 1);
    for (std::size_t i = 0; i < mask.size(); i += 3) mask[i] = 0;
    std::vector<double> y_par(rows * cols), y_ser(rows * cols);

    const double t_ser = time_ms(
        [&] {
          quisg::kernels::serial::softmax_rows_masked(x.data(), mask.data(),
                                                      y_ser.data(), rows, cols);
        },
        reps);
    const double t_par = time_ms(
        [&] {
          quisg::kernels::softmax_rows_masked(x.data(), mask.data(), y_par.data(),
                                              rows, cols);
        },
        reps);
    const bool eq = bitwise_equal(y_par, y_ser);
    all_equal = all_equal && eq;
    std::printf("%-22s %7zux%-3zu %12.3f %12.3f %8s\n", "softmax_rows_masked",
                rows, cols, t_ser, t_par, eq ? "yes" : "NO");
  }

  std::printf("\nparallel and serial kernels %s\n",
              all_equal ? "agree bit for bit" : "DISAGREE");
  return all_equal ? 0 : 1;
}
