#include "dalab/kernels.hpp"

namespace dalab::kernels {

namespace serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_grad_a(const double* gc, const double* b, double* ga, int64_t m, int64_t k,
                   int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double s = 0.0;
      const double* gci = gc + i * n;
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) s += gci[j] * bp[j];
      ga[i * k + p] += s;
    }
  }
}

void matmul_grad_b(const double* a, const double* gc, double* gb, int64_t m, int64_t k,
                   int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < m; ++i) s += a[i * k + p] * gc[i * n + j];
      gb[p * n + j] += s;
    }
  }
}

void conv2d(const double* x, const double* w, double* y, int64_t B, int64_t C, int64_t H,
            int64_t W, int64_t O, int64_t K, int64_t stride) {
  const int64_t OH = (H - K) / stride + 1;
  const int64_t OW = (W - K) / stride + 1;
  for (int64_t bo = 0; bo < B * O; ++bo) {
    const int64_t b = bo / O, o = bo % O;
    for (int64_t oh = 0; oh < OH; ++oh) {
      for (int64_t ow = 0; ow < OW; ++ow) {
        double s = 0.0;
        for (int64_t c = 0; c < C; ++c) {
          const double* xc = x + ((b * C + c) * H + oh * stride) * W + ow * stride;
          const double* wc = w + ((o * C + c) * K) * K;
          for (int64_t kh = 0; kh < K; ++kh)
            for (int64_t kw = 0; kw < K; ++kw) s += xc[kh * W + kw] * wc[kh * K + kw];
        }
        y[((b * O + o) * OH + oh) * OW + ow] = s;
      }
    }
  }
}

void conv2d_grad_x(const double* gy, const double* w, double* gx, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride) {
  const int64_t OH = (H - K) / stride + 1;
  const int64_t OW = (W - K) / stride + 1;
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const int64_t b = bc / C, c = bc % C;
    double* gxc = gx + (b * C + c) * H * W;
    for (int64_t o = 0; o < O; ++o) {
      const double* gyo = gy + (b * O + o) * OH * OW;
      const double* wc = w + (o * C + c) * K * K;
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          const double g = gyo[oh * OW + ow];
          double* base = gxc + (oh * stride) * W + ow * stride;
          for (int64_t kh = 0; kh < K; ++kh)
            for (int64_t kw = 0; kw < K; ++kw) base[kh * W + kw] += g * wc[kh * K + kw];
        }
    }
  }
}

void conv2d_grad_w(const double* x, const double* gy, double* gw, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride) {
  const int64_t OH = (H - K) / stride + 1;
  const int64_t OW = (W - K) / stride + 1;
  for (int64_t oc = 0; oc < O * C; ++oc) {
    const int64_t o = oc / C, c = oc % C;
    double* wslot = gw + (o * C + c) * K * K;
    for (int64_t kh = 0; kh < K; ++kh)
      for (int64_t kw = 0; kw < K; ++kw) {
        double s = 0.0;
        for (int64_t b = 0; b < B; ++b) {
          const double* gyo = gy + (b * O + o) * OH * OW;
          const double* xc = x + (b * C + c) * H * W;
          for (int64_t oh = 0; oh < OH; ++oh)
            for (int64_t ow = 0; ow < OW; ++ow)
              s += gyo[oh * OW + ow] * xc[(oh * stride + kh) * W + ow * stride + kw];
        }
        wslot[kh * K + kw] += s;
      }
  }
}

void maxpool2d(const double* x, double* y, int64_t* argmax, int64_t B, int64_t C, int64_t H,
               int64_t W, int64_t window) {
  const int64_t OH = H / window, OW = W / window;
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* xc = x + bc * H * W;
    for (int64_t oh = 0; oh < OH; ++oh)
      for (int64_t ow = 0; ow < OW; ++ow) {
        int64_t best = (oh * window) * W + ow * window;
        double bv = xc[best];
        for (int64_t kh = 0; kh < window; ++kh)
          for (int64_t kw = 0; kw < window; ++kw) {
            const int64_t idx = (oh * window + kh) * W + ow * window + kw;
            if (xc[idx] > bv) {
              bv = xc[idx];
              best = idx;
            }
          }
        const int64_t out = (bc * OH + oh) * OW + ow;
        y[out] = bv;
        argmax[out] = bc * H * W + best;
      }
  }
}

void maxpool2d_grad(const double* gy, const int64_t* argmax, double* gx, int64_t n_out) {
  for (int64_t i = 0; i < n_out; ++i) gx[argmax[i]] += gy[i];
}

}  // namespace serial

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_grad_a(const double* gc, const double* b, double* ga, int64_t m, int64_t k,
                   int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double s = 0.0;
      const double* gci = gc + i * n;
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) s += gci[j] * bp[j];
      ga[i * k + p] += s;
    }
  }
}

void matmul_grad_b(const double* a, const double* gc, double* gb, int64_t m, int64_t k,
                   int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < k; ++p) {
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t i = 0; i < m; ++i) s += a[i * k + p] * gc[i * n + j];
      gb[p * n + j] += s;
    }
  }
}

void conv2d(const double* x, const double* w, double* y, int64_t B, int64_t C, int64_t H,
            int64_t W, int64_t O, int64_t K, int64_t stride) {
  const int64_t OH = (H - K) / stride + 1;
  const int64_t OW = (W - K) / stride + 1;
#pragma omp parallel for schedule(static)
  for (int64_t bo = 0; bo < B * O; ++bo) {
    const int64_t b = bo / O, o = bo % O;
    for (int64_t oh = 0; oh < OH; ++oh) {
      for (int64_t ow = 0; ow < OW; ++ow) {
        double s = 0.0;
        for (int64_t c = 0; c < C; ++c) {
          const double* xc = x + ((b * C + c) * H + oh * stride) * W + ow * stride;
          const double* wc = w + ((o * C + c) * K) * K;
          for (int64_t kh = 0; kh < K; ++kh)
            for (int64_t kw = 0; kw < K; ++kw) s += xc[kh * W + kw] * wc[kh * K + kw];
        }
        y[((b * O + o) * OH + oh) * OW + ow] = s;
      }
    }
  }
}

void conv2d_grad_x(const double* gy, const double* w, double* gx, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride) {
  const int64_t OH = (H - K) / stride + 1;
  const int64_t OW = (W - K) / stride + 1;
#pragma omp parallel for schedule(static)
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const int64_t b = bc / C, c = bc % C;
    double* gxc = gx + (b * C + c) * H * W;
    for (int64_t o = 0; o < O; ++o) {
      const double* gyo = gy + (b * O + o) * OH * OW;
      const double* wc = w + (o * C + c) * K * K;
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          const double g = gyo[oh * OW + ow];
          double* base = gxc + (oh * stride) * W + ow * stride;
          for (int64_t kh = 0; kh < K; ++kh)
            for (int64_t kw = 0; kw < K; ++kw) base[kh * W + kw] += g * wc[kh * K + kw];
        }
    }
  }
}

void conv2d_grad_w(const double* x, const double* gy, double* gw, int64_t B, int64_t C, int64_t H,
                   int64_t W, int64_t O, int64_t K, int64_t stride) {
  const int64_t OH = (H - K) / stride + 1;
  const int64_t OW = (W - K) / stride + 1;
#pragma omp parallel for schedule(static)
  for (int64_t oc = 0; oc < O * C; ++oc) {
    const int64_t o = oc / C, c = oc % C;
    double* wslot = gw + (o * C + c) * K * K;
    for (int64_t kh = 0; kh < K; ++kh)
      for (int64_t kw = 0; kw < K; ++kw) {
        double s = 0.0;
        for (int64_t b = 0; b < B; ++b) {
          const double* gyo = gy + (b * O + o) * OH * OW;
          const double* xc = x + (b * C + c) * H * W;
          for (int64_t oh = 0; oh < OH; ++oh)
            for (int64_t ow = 0; ow < OW; ++ow)
              s += gyo[oh * OW + ow] * xc[(oh * stride + kh) * W + ow * stride + kw];
        }
        wslot[kh * K + kw] += s;
      }
  }
}

void maxpool2d(const double* x, double* y, int64_t* argmax, int64_t B, int64_t C, int64_t H,
               int64_t W, int64_t window) {
  const int64_t OH = H / window, OW = W / window;
#pragma omp parallel for schedule(static)
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const double* xc = x + bc * H * W;
    for (int64_t oh = 0; oh < OH; ++oh)
      for (int64_t ow = 0; ow < OW; ++ow) {
        int64_t best = (oh * window) * W + ow * window;
        double bv = xc[best];
        for (int64_t kh = 0; kh < window; ++kh)
          for (int64_t kw = 0; kw < window; ++kw) {
            const int64_t idx = (oh * window + kh) * W + ow * window + kw;
            if (xc[idx] > bv) {
              bv = xc[idx];
              best = idx;
            }
          }
        const int64_t out = (bc * OH + oh) * OW + ow;
        y[out] = bv;
        argmax[out] = bc * H * W + best;
      }
  }
}

void maxpool2d_grad(const double* gy, const int64_t* argmax, double* gx, int64_t n_out) {
  // scatter targets are disjoint per window, safe to run in parallel
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_out; ++i) gx[argmax[i]] += gy[i];
}

}  // namespace dalab::kernels
