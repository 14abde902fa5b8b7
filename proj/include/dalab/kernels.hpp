#ifndef DALAB_KERNELS_HPP
#define DALAB_KERNELS_HPP

#include <cstdint>

// Dense inner loops behind the tape ops. The default entry points are
// OpenMP-parallel; kernels::serial holds the straight-line reference
// versions used by the equality tests and the benchmark. Parallelization
// is always over independent output slots with a fixed per-slot summation
// order, so both variants produce bit-identical results.
namespace dalab::kernels {

// c(m,n) = a(m,k) * b(k,n)
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// ga(m,k) += gc(m,n) * b(k,n)^T
void matmul_grad_a(const double* gc, const double* b, double* ga, int64_t m, int64_t k, int64_t n);
// gb(k,n) += a(m,k)^T * gc(m,n)
void matmul_grad_b(const double* a, const double* gc, double* gb, int64_t m, int64_t k, int64_t n);

// x (B,C,H,W), w (O,C,K,K), y (B,O,OH,OW); valid padding.
void conv2d(const double* x, const double* w, double* y, int64_t B, int64_t C, int64_t H,
            int64_t W, int64_t O, int64_t K, int64_t stride);
void conv2d_grad_x(const double* gy, const double* w, double* gx, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride);
void conv2d_grad_w(const double* x, const double* gy, double* gw, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride);

// Non-overlapping window pooling; argmax stores the flat input offset per output.
void maxpool2d(const double* x, double* y, int64_t* argmax, int64_t B, int64_t C, int64_t H,
               int64_t W, int64_t window);
void maxpool2d_grad(const double* gy, const int64_t* argmax, double* gx, int64_t n_out);

namespace serial {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void matmul_grad_a(const double* gc, const double* b, double* ga, int64_t m, int64_t k, int64_t n);
void matmul_grad_b(const double* a, const double* gc, double* gb, int64_t m, int64_t k, int64_t n);
void conv2d(const double* x, const double* w, double* y, int64_t B, int64_t C, int64_t H,
            int64_t W, int64_t O, int64_t K, int64_t stride);
void conv2d_grad_x(const double* gy, const double* w, double* gx, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride);
void conv2d_grad_w(const double* x, const double* gy, double* gw, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride);
void maxpool2d(const double* x, double* y, int64_t* argmax, int64_t B, int64_t C, int64_t H,
               int64_t W, int64_t window);
void maxpool2d_grad(const double* gy, const int64_t* argmax, double* gx, int64_t n_out);
}  // namespace serial

}  // namespace dalab::kernels

#endif
