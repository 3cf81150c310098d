// Timing comparison of the OpenMP kernels against the serial reference,
// with a bit-identity check on every run.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "mme/kernels.hpp"
#include "mme/mat.hpp"
#include "mme/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace mme;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  auto end = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count() / reps;
}

void report(const std::string& name, int rows, int cols, double serial_ms,
            double parallel_ms, bool identical) {
  std::printf("%-10s %5dx%-5d  serial %8.3f ms  parallel %8.3f ms  "
              "speedup %5.2fx  %s\n",
              name.c_str(), rows, cols, serial_ms, parallel_ms,
              serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
  if (!identical) std::exit(1);
}

void bench_size(int rows, int cols, int reps) {
  Rng rng(42);
  Mat w(rows, cols);
  for (double& v : w.data) v = rng.normal();
  Vec x(cols), g(rows);
  for (double& v : x) v = rng.normal();
  for (double& v : g) v = rng.normal();

  {
    Vec out_s(rows), out_p(rows);
    double ts = time_ms([&] { reference::matvec(w, x.data(), out_s.data()); },
                        reps);
    double tp = time_ms([&] { kernels::matvec(w, x.data(), out_p.data()); },
                        reps);
    report("matvec", rows, cols, ts, tp, out_s == out_p);
  }
  {
    Vec out_s(cols), out_p(cols);
    double ts = time_ms(
        [&] { reference::matvec_t(w, g.data(), out_s.data()); }, reps);
    double tp = time_ms([&] { kernels::matvec_t(w, g.data(), out_p.data()); },
                        reps);
    report("matvec_t", rows, cols, ts, tp, out_s == out_p);
  }
  {
    Mat acc_s(rows, cols), acc_p(rows, cols);
    double ts = time_ms([&] { reference::add_outer(acc_s, g.data(), x.data()); },
                        reps);
    double tp = time_ms([&] { kernels::add_outer(acc_p, g.data(), x.data()); },
                        reps);
    report("add_outer", rows, cols, ts, tp, acc_s.data == acc_p.data);
  }
  std::printf("\n");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled: parallel kernels run serially\n\n");
#endif
  bench_size(1024, 2048, 200);  // image projection
  bench_size(1024, 1024, 200);  // text / user projections
  bench_size(4096, 4096, 50);   // headroom beyond the default model
  return 0;
}
