#include "mz/net.hpp"

namespace mz::net {

namespace {

// Valid (kernel index, input position) pairs per output position for a 3x3
// kernel on the 3x3 board with padding 1.
struct TapTable {
  struct Tap {
    int kernel;
    int input;
  };
  Tap taps[9][9];
  int count[9];

  TapTable() {
    for (int p = 0; p < 9; ++p) {
      const int r = p / 3, c = p % 3;
      count[p] = 0;
      for (int kr = 0; kr < 3; ++kr) {
        for (int kc = 0; kc < 3; ++kc) {
          const int ir = r + kr - 1, ic = c + kc - 1;
          if (ir < 0 || ir > 2 || ic < 0 || ic > 2) continue;
          taps[p][count[p]++] = {kr * 3 + kc, ir * 3 + ic};
        }
      }
    }
  }
};

const TapTable kTaps;

}  // namespace

void Conv3x3::forward(const double* params, const double* x, double* y) const {
  const double* w = params + w_off_;
  const double* b = params + b_off_;
  for (int oc = 0; oc < out_c_; ++oc) {
    double* out = y + oc * 9;
    for (int p = 0; p < 9; ++p) out[p] = b[oc];
    const double* woc = w + static_cast<size_t>(oc) * in_c_ * 9;
    for (int ic = 0; ic < in_c_; ++ic) {
      const double* xin = x + ic * 9;
      const double* k = woc + ic * 9;
      for (int p = 0; p < 9; ++p) {
        double acc = 0.0;
        const int n = kTaps.count[p];
        for (int t = 0; t < n; ++t) {
          acc += k[kTaps.taps[p][t].kernel] * xin[kTaps.taps[p][t].input];
        }
        out[p] += acc;
      }
    }
  }
}

void Conv3x3::backward(const double* params, const double* x, const double* gy, double* gx,
                       double* grads) const {
  const double* w = params + w_off_;
  double* gw = grads + w_off_;
  double* gb = grads + b_off_;
  if (gx) {
    for (int i = 0; i < in_c_ * 9; ++i) gx[i] = 0.0;
  }
  for (int oc = 0; oc < out_c_; ++oc) {
    const double* g = gy + oc * 9;
    for (int p = 0; p < 9; ++p) gb[oc] += g[p];
    const double* woc = w + static_cast<size_t>(oc) * in_c_ * 9;
    double* gwoc = gw + static_cast<size_t>(oc) * in_c_ * 9;
    for (int ic = 0; ic < in_c_; ++ic) {
      const double* xin = x + ic * 9;
      const double* k = woc + ic * 9;
      double* gk = gwoc + ic * 9;
      double* gxin = gx ? gx + ic * 9 : nullptr;
      for (int p = 0; p < 9; ++p) {
        const double gp = g[p];
        const int n = kTaps.count[p];
        for (int t = 0; t < n; ++t) {
          gk[kTaps.taps[p][t].kernel] += gp * xin[kTaps.taps[p][t].input];
          if (gxin) gxin[kTaps.taps[p][t].input] += gp * k[kTaps.taps[p][t].kernel];
        }
      }
    }
  }
}

}  // namespace mz::net
