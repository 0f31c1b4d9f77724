#pragma once

// Row-wise float32 kernels shared by inference and training.
//
// Every kernel computes each output row with the same operation order no
// matter how many rows are processed together. Incremental decoding (one row
// at a time) therefore reproduces a full-sequence forward bit for bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace csteer::kernels {

inline constexpr float kLayerNormEps = 1e-5f;

// Y[n x m] = bias + X[n x k] * W[k x m], all row-major. Rows are processed in
// blocks of four; a short final block runs through zero-padded scratch so the
// per-row arithmetic is identical in every case.
inline void matmul_rows(const float* x, std::size_t n, std::size_t k, const float* w,
                        std::size_t m, const float* bias, float* y) {
  constexpr std::size_t kBlock = 4;
  std::vector<float> xpad, ypad;
  for (std::size_t i0 = 0; i0 < n; i0 += kBlock) {
    const std::size_t rows = std::min(kBlock, n - i0);
    const float* xb = x + i0 * k;
    float* yb = y + i0 * m;
    if (rows < kBlock) {
      xpad.assign(kBlock * k, 0.0f);
      std::copy(xb, xb + rows * k, xpad.begin());
      ypad.assign(kBlock * m, 0.0f);
      xb = xpad.data();
      yb = ypad.data();
    }
    float* y0 = yb;
    float* y1 = yb + m;
    float* y2 = yb + 2 * m;
    float* y3 = yb + 3 * m;
    for (std::size_t j = 0; j < m; ++j) {
      const float b = bias ? bias[j] : 0.0f;
      y0[j] = b;
      y1[j] = b;
      y2[j] = b;
      y3[j] = b;
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
      const float a0 = xb[kk];
      const float a1 = xb[k + kk];
      const float a2 = xb[2 * k + kk];
      const float a3 = xb[3 * k + kk];
      const float* wr = w + kk * m;
      for (std::size_t j = 0; j < m; ++j) {
        const float wv = wr[j];
        y0[j] += a0 * wv;
        y1[j] += a1 * wv;
        y2[j] += a2 * wv;
        y3[j] += a3 * wv;
      }
    }
    if (rows < kBlock) std::copy(ypad.begin(), ypad.begin() + static_cast<std::ptrdiff_t>(rows * m), y + i0 * m);
  }
}

// out = (x - mean) * rstd * gain + bias for one row; returns (mean, rstd).
inline std::array<float, 2> layernorm_row(const float* x, std::size_t d, const float* gain,
                                          const float* bias, float* out) {
  float sum = 0.0f;
  for (std::size_t i = 0; i < d; ++i) sum += x[i];
  const float mean = sum / static_cast<float>(d);
  float var = 0.0f;
  for (std::size_t i = 0; i < d; ++i) {
    const float c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<float>(d);
  const float rstd = 1.0f / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * rstd * gain[i] + bias[i];
  return {mean, rstd};
}

inline constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

inline float gelu(float x) {
  return 0.5f * x * (1.0f + std::tanh(kGeluC * (x + 0.044715f * x * x * x)));
}

inline float gelu_grad(float x) {
  const float u = kGeluC * (x + 0.044715f * x * x * x);
  const float t = std::tanh(u);
  const float du = kGeluC * (1.0f + 3.0f * 0.044715f * x * x);
  return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
}

// Causal attention for one query row and one head. keys/values hold `count`
// rows with the given stride; probs receives `count` weights.
inline void attend_row(const float* q, const float* keys, const float* values, std::size_t count,
                       std::size_t stride, std::size_t head_dim, float scale, float* probs,
                       float* out) {
  float max_score = -INFINITY;
  for (std::size_t j = 0; j < count; ++j) {
    const float* kr = keys + j * stride;
    float s = 0.0f;
    for (std::size_t t = 0; t < head_dim; ++t) s += q[t] * kr[t];
    s *= scale;
    probs[j] = s;
    max_score = std::max(max_score, s);
  }
  float total = 0.0f;
  for (std::size_t j = 0; j < count; ++j) {
    probs[j] = std::exp(probs[j] - max_score);
    total += probs[j];
  }
  const float inv = 1.0f / total;
  for (std::size_t j = 0; j < count; ++j) probs[j] *= inv;
  std::fill(out, out + head_dim, 0.0f);
  for (std::size_t j = 0; j < count; ++j) {
    const float p = probs[j];
    const float* vr = values + j * stride;
    for (std::size_t t = 0; t < head_dim; ++t) out[t] += p * vr[t];
  }
}

}  // namespace csteer::kernels
