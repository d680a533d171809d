// Times the serial kernels against the OpenMP ones on sizes around the
// models' to show where the parallel cutoff pays off.

#include <chrono>
#include <cstdio>
#include <vector>

#include "slstm/kernels.hpp"
#include "slstm/rng.hpp"

using slstm::Rng;
namespace k = slstm::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <class F>
double time_ms(F&& f, int reps) {
  // warm up once so page faults and thread spin-up don't count
  f();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void bench_matvec(std::size_t rows, std::size_t cols, int reps, Rng& rng) {
  const auto w = random_vec(rows * cols, rng);
  const auto x = random_vec(cols, rng);
  std::vector<double> out(rows);
  const double serial = time_ms(
      [&] { k::serial::matvec(out.data(), w.data(), x.data(), rows, cols); },
      reps);
  const double omp = time_ms(
      [&] { k::omp::matvec(out.data(), w.data(), x.data(), rows, cols); },
      reps);
  std::printf("matvec %5zux%-5zu  serial %9.4f ms  omp %9.4f ms  speedup %5.2fx\n",
              rows, cols, serial, omp, serial / omp);
}

void bench_tanh(std::size_t n, int reps, Rng& rng) {
  const auto x = random_vec(n, rng);
  std::vector<double> out(n);
  const double serial =
      time_ms([&] { k::serial::tanh(out.data(), x.data(), n); }, reps);
  const double omp =
      time_ms([&] { k::omp::tanh(out.data(), x.data(), n); }, reps);
  std::printf("tanh   n=%-9zu  serial %9.4f ms  omp %9.4f ms  speedup %5.2fx\n",
              n, serial, omp, serial / omp);
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("parallel dispatch cutoff: %zu elements of work\n",
              k::kParallelCutoff);
  for (std::size_t dim : {128u, 512u, 1024u, 2048u})
    bench_matvec(dim, dim, dim >= 1024 ? 20 : 200, rng);
  for (std::size_t n : {1u << 12, 1u << 16, 1u << 20})
    bench_tanh(n, n >= (1u << 20) ? 50 : 500, rng);
  return 0;
}
