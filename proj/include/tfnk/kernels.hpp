#pragma once

#include <cstdint>

namespace tfnk::kernels {

// All tensors are contiguous NCHW.
struct ConvShape {
  int n, cin, h, w;   // input
  int cout, k;        // square kernel
  int stride, pad;    // symmetric zero padding
  int out_h() const { return (h + 2 * pad - k) / stride + 1; }
  int out_w() const { return (w + 2 * pad - k) / stride + 1; }
};

// Parallel kernels. Parallelism is only over independently written output
// elements; every accumulation runs in a fixed serial order (cin, ky, kx) so
// results are identical run to run and across thread counts.
template <typename S>
void conv2d_forward(const ConvShape& cs, const S* in, const S* w, const S* bias, S* out);
template <typename S>
void conv2d_backward_input(const ConvShape& cs, const S* gout, const S* w, S* gin);
template <typename S>
void conv2d_backward_weight(const ConvShape& cs, const S* in, const S* gout, S* gw);
template <typename S>
void conv2d_backward_bias(const ConvShape& cs, const S* gout, S* gbias);

struct PoolShape {
  int n, c, h, w;
  int k, stride, pad;  // padding is -inf for pooling
  int out_h() const { return (h + 2 * pad - k) / stride + 1; }
  int out_w() const { return (w + 2 * pad - k) / stride + 1; }
};

// argmax holds the flat input index of each window maximum (first index wins
// ties); backward routes gradients through it.
template <typename S>
void maxpool2d_forward(const PoolShape& ps, const S* in, S* out, int64_t* argmax);
template <typename S>
void maxpool2d_backward(const PoolShape& ps, const S* gout, const int64_t* argmax, S* gin);

template <typename S>
void upsample2x_forward(int n, int c, int h, int w, const S* in, S* out);
template <typename S>
void upsample2x_backward(int n, int c, int h, int w, const S* gout, S* gin);

// YOLO-style focus slicing: (C,H,W) -> (4C,H/2,W/2), slice order
// (even y, even x), (odd y, even x), (even y, odd x), (odd y, odd x).
template <typename S>
void space_to_depth2_forward(int n, int c, int h, int w, const S* in, S* out);
template <typename S>
void space_to_depth2_backward(int n, int c, int h, int w, const S* gout, S* gin);

// Serial reference implementations, written independently of the parallel
// kernels. Used by the oracle tests and the benchmark target.
namespace ref {
template <typename S>
void conv2d_forward(const ConvShape& cs, const S* in, const S* w, const S* bias, S* out);
template <typename S>
void maxpool2d_forward(const PoolShape& ps, const S* in, S* out);
}  // namespace ref

}  // namespace tfnk::kernels
