#pragma once

#include <cstddef>

namespace slstm::kernels {

// Inner-loop kernels backing the autodiff primitives. Each exists twice:
// a serial reference and an OpenMP version. Both assign every output
// element from exactly one thread, so results are bit-identical for any
// thread count. The dispatchers below pick the OpenMP path only when the
// problem is large enough to pay for the fork/join.

namespace serial {
void matvec(double* out, const double* w, const double* x, std::size_t m,
            std::size_t n);
// dW += g ⊗ x
void matvec_grad_w(double* dw, const double* g, const double* x, std::size_t m,
                   std::size_t n);
// dx += Wᵀ g
void matvec_grad_x(double* dx, const double* w, const double* g, std::size_t m,
                   std::size_t n);
void add(double* out, const double* a, const double* b, std::size_t n);
void sub(double* out, const double* a, const double* b, std::size_t n);
void mul(double* out, const double* a, const double* b, std::size_t n);
void div(double* out, const double* a, const double* b, std::size_t n);
void sigmoid(double* out, const double* x, std::size_t n);
void tanh(double* out, const double* x, std::size_t n);
void relu(double* out, const double* x, std::size_t n);
void exp(double* out, const double* x, std::size_t n);
void log(double* out, const double* x, std::size_t n);
void scale(double* out, const double* x, double k, std::size_t n);
}  // namespace serial

namespace omp {
void matvec(double* out, const double* w, const double* x, std::size_t m,
            std::size_t n);
void matvec_grad_w(double* dw, const double* g, const double* x, std::size_t m,
                   std::size_t n);
void matvec_grad_x(double* dx, const double* w, const double* g, std::size_t m,
                   std::size_t n);
void add(double* out, const double* a, const double* b, std::size_t n);
void sub(double* out, const double* a, const double* b, std::size_t n);
void mul(double* out, const double* a, const double* b, std::size_t n);
void div(double* out, const double* a, const double* b, std::size_t n);
void sigmoid(double* out, const double* x, std::size_t n);
void tanh(double* out, const double* x, std::size_t n);
void relu(double* out, const double* x, std::size_t n);
void exp(double* out, const double* x, std::size_t n);
void log(double* out, const double* x, std::size_t n);
void scale(double* out, const double* x, double k, std::size_t n);
}  // namespace omp

// Work sizes below this stay serial.
inline constexpr std::size_t kParallelCutoff = 1u << 15;

void matvec(double* out, const double* w, const double* x, std::size_t m,
            std::size_t n);
void matvec_grad_w(double* dw, const double* g, const double* x, std::size_t m,
                   std::size_t n);
void matvec_grad_x(double* dx, const double* w, const double* g, std::size_t m,
                   std::size_t n);
void add(double* out, const double* a, const double* b, std::size_t n);
void sub(double* out, const double* a, const double* b, std::size_t n);
void mul(double* out, const double* a, const double* b, std::size_t n);
void div(double* out, const double* a, const double* b, std::size_t n);
void sigmoid(double* out, const double* x, std::size_t n);
void tanh(double* out, const double* x, std::size_t n);
void relu(double* out, const double* x, std::size_t n);
void exp(double* out, const double* x, std::size_t n);
void log(double* out, const double* x, std::size_t n);
void scale(double* out, const double* x, double k, std::size_t n);

}  // namespace slstm::kernels
