#include "slstm/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slstm::kernels {

namespace serial {

void matvec(double* out, const double* w, const double* x, std::size_t m,
            std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = w + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

void matvec_grad_w(double* dw, const double* g, const double* x, std::size_t m,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double gi = g[i];
    double* row = dw + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
  }
}

void matvec_grad_x(double* dx, const double* w, const double* g, std::size_t m,
                   std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += w[i * n + j] * g[i];
    dx[j] += acc;
  }
}

void add(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void sub(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void mul(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void div(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
void sigmoid(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
}
void tanh(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}
void relu(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}
void exp(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}
void log(double* out, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x[i]);
}
void scale(double* out, const double* x, double k, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = k * x[i];
}

}  // namespace serial

namespace omp {

void matvec(double* out, const double* w, const double* x, std::size_t m,
            std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double acc = 0.0;
    const double* row = w + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
}

void matvec_grad_w(double* dw, const double* g, const double* x, std::size_t m,
                   std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double gi = g[i];
    double* row = dw + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
  }
}

void matvec_grad_x(double* dx, const double* w, const double* g, std::size_t m,
                   std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += w[i * n + j] * g[i];
    dx[j] += acc;
  }
}

#define SLSTM_OMP_EW2(name, expr)                                      \
  void name(double* out, const double* a, const double* b,             \
            std::size_t n) {                                           \
    _Pragma("omp parallel for schedule(static)")                       \
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n);     \
         ++i) {                                                        \
      out[i] = (expr);                                                 \
    }                                                                  \
  }

SLSTM_OMP_EW2(add, a[i] + b[i])
SLSTM_OMP_EW2(sub, a[i] - b[i])
SLSTM_OMP_EW2(mul, a[i] * b[i])
SLSTM_OMP_EW2(div, a[i] / b[i])
#undef SLSTM_OMP_EW2

#define SLSTM_OMP_EW1(name, expr)                                      \
  void name(double* out, const double* x, std::size_t n) {             \
    _Pragma("omp parallel for schedule(static)")                       \
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n);     \
         ++i) {                                                        \
      out[i] = (expr);                                                 \
    }                                                                  \
  }

SLSTM_OMP_EW1(sigmoid, 1.0 / (1.0 + std::exp(-x[i])))
SLSTM_OMP_EW1(tanh, std::tanh(x[i]))
SLSTM_OMP_EW1(relu, x[i] > 0.0 ? x[i] : 0.0)
SLSTM_OMP_EW1(exp, std::exp(x[i]))
SLSTM_OMP_EW1(log, std::log(x[i]))
#undef SLSTM_OMP_EW1

void scale(double* out, const double* x, double k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    out[i] = k * x[i];
}

}  // namespace omp

void matvec(double* out, const double* w, const double* x, std::size_t m,
            std::size_t n) {
  if (m * n >= kParallelCutoff)
    omp::matvec(out, w, x, m, n);
  else
    serial::matvec(out, w, x, m, n);
}
void matvec_grad_w(double* dw, const double* g, const double* x, std::size_t m,
                   std::size_t n) {
  if (m * n >= kParallelCutoff)
    omp::matvec_grad_w(dw, g, x, m, n);
  else
    serial::matvec_grad_w(dw, g, x, m, n);
}
void matvec_grad_x(double* dx, const double* w, const double* g, std::size_t m,
                   std::size_t n) {
  if (m * n >= kParallelCutoff)
    omp::matvec_grad_x(dx, w, g, m, n);
  else
    serial::matvec_grad_x(dx, w, g, m, n);
}

#define SLSTM_DISPATCH2(name)                                          \
  void name(double* out, const double* a, const double* b,             \
            std::size_t n) {                                           \
    if (n >= kParallelCutoff)                                          \
      omp::name(out, a, b, n);                                         \
    else                                                               \
      serial::name(out, a, b, n);                                      \
  }
SLSTM_DISPATCH2(add)
SLSTM_DISPATCH2(sub)
SLSTM_DISPATCH2(mul)
SLSTM_DISPATCH2(div)
#undef SLSTM_DISPATCH2

#define SLSTM_DISPATCH1(name)                                          \
  void name(double* out, const double* x, std::size_t n) {             \
    if (n >= kParallelCutoff)                                          \
      omp::name(out, x, n);                                            \
    else                                                               \
      serial::name(out, x, n);                                         \
  }
SLSTM_DISPATCH1(sigmoid)
SLSTM_DISPATCH1(tanh)
SLSTM_DISPATCH1(relu)
SLSTM_DISPATCH1(exp)
SLSTM_DISPATCH1(log)
#undef SLSTM_DISPATCH1

void scale(double* out, const double* x, double k, std::size_t n) {
  if (n >= kParallelCutoff)
    omp::scale(out, x, k, n);
  else
    serial::scale(out, x, k, n);
}

}  // namespace slstm::kernels
