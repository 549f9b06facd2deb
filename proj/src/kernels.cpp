#include "tfnk/kernels.hpp"

#include <algorithm>
#include <limits>

namespace tfnk::kernels {

namespace {
inline int64_t idx4(int64_t a, int64_t b, int64_t c, int64_t d, int64_t B, int64_t C, int64_t D) {
  return ((a * B + b) * C + c) * D + d;
}
}  // namespace

template <typename S>
void conv2d_forward(const ConvShape& cs, const S* in, const S* w, const S* bias, S* out) {
  const int oh = cs.out_h(), ow = cs.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < cs.n; ++n) {
    for (int co = 0; co < cs.cout; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          S acc = bias ? bias[co] : S(0);
          const int iy0 = oy * cs.stride - cs.pad;
          const int ix0 = ox * cs.stride - cs.pad;
          for (int ci = 0; ci < cs.cin; ++ci) {
            for (int ky = 0; ky < cs.k; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= cs.h) continue;
              for (int kx = 0; kx < cs.k; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= cs.w) continue;
                acc += in[idx4(n, ci, iy, ix, cs.cin, cs.h, cs.w)] *
                       w[idx4(co, ci, ky, kx, cs.cin, cs.k, cs.k)];
              }
            }
          }
          out[idx4(n, co, oy, ox, cs.cout, oh, ow)] = acc;
        }
      }
    }
  }
}

template <typename S>
void conv2d_backward_input(const ConvShape& cs, const S* gout, const S* w, S* gin) {
  const int oh = cs.out_h(), ow = cs.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < cs.n; ++n) {
    for (int ci = 0; ci < cs.cin; ++ci) {
      for (int iy = 0; iy < cs.h; ++iy) {
        for (int ix = 0; ix < cs.w; ++ix) {
          S acc = S(0);
          for (int co = 0; co < cs.cout; ++co) {
            for (int ky = 0; ky < cs.k; ++ky) {
              const int ty = iy + cs.pad - ky;
              if (ty < 0 || ty % cs.stride != 0) continue;
              const int oy = ty / cs.stride;
              if (oy >= oh) continue;
              for (int kx = 0; kx < cs.k; ++kx) {
                const int tx = ix + cs.pad - kx;
                if (tx < 0 || tx % cs.stride != 0) continue;
                const int ox = tx / cs.stride;
                if (ox >= ow) continue;
                acc += gout[idx4(n, co, oy, ox, cs.cout, oh, ow)] *
                       w[idx4(co, ci, ky, kx, cs.cin, cs.k, cs.k)];
              }
            }
          }
          gin[idx4(n, ci, iy, ix, cs.cin, cs.h, cs.w)] += acc;
        }
      }
    }
  }
}

template <typename S>
void conv2d_backward_weight(const ConvShape& cs, const S* in, const S* gout, S* gw) {
  const int oh = cs.out_h(), ow = cs.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < cs.cout; ++co) {
    for (int ci = 0; ci < cs.cin; ++ci) {
      for (int ky = 0; ky < cs.k; ++ky) {
        for (int kx = 0; kx < cs.k; ++kx) {
          S acc = S(0);
          for (int n = 0; n < cs.n; ++n) {
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * cs.stride - cs.pad + ky;
              if (iy < 0 || iy >= cs.h) continue;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * cs.stride - cs.pad + kx;
                if (ix < 0 || ix >= cs.w) continue;
                acc += gout[idx4(n, co, oy, ox, cs.cout, oh, ow)] *
                       in[idx4(n, ci, iy, ix, cs.cin, cs.h, cs.w)];
              }
            }
          }
          gw[idx4(co, ci, ky, kx, cs.cin, cs.k, cs.k)] += acc;
        }
      }
    }
  }
}

template <typename S>
void conv2d_backward_bias(const ConvShape& cs, const S* gout, S* gbias) {
  const int oh = cs.out_h(), ow = cs.out_w();
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cs.cout; ++co) {
    S acc = S(0);
    for (int n = 0; n < cs.n; ++n) {
      const S* p = gout + idx4(n, co, 0, 0, cs.cout, oh, ow);
      for (int i = 0; i < oh * ow; ++i) acc += p[i];
    }
    gbias[co] += acc;
  }
}

template <typename S>
void maxpool2d_forward(const PoolShape& ps, const S* in, S* out, int64_t* argmax) {
  const int oh = ps.out_h(), ow = ps.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < ps.n; ++n) {
    for (int c = 0; c < ps.c; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          S best = -std::numeric_limits<S>::infinity();
          int64_t best_idx = -1;
          for (int ky = 0; ky < ps.k; ++ky) {
            const int iy = oy * ps.stride - ps.pad + ky;
            if (iy < 0 || iy >= ps.h) continue;
            for (int kx = 0; kx < ps.k; ++kx) {
              const int ix = ox * ps.stride - ps.pad + kx;
              if (ix < 0 || ix >= ps.w) continue;
              const int64_t ii = idx4(n, c, iy, ix, ps.c, ps.h, ps.w);
              if (in[ii] > best) {
                best = in[ii];
                best_idx = ii;
              }
            }
          }
          const int64_t oi = idx4(n, c, oy, ox, ps.c, oh, ow);
          out[oi] = best;
          argmax[oi] = best_idx;
        }
      }
    }
  }
}

template <typename S>
void maxpool2d_backward(const PoolShape& ps, const S* gout, const int64_t* argmax, S* gin) {
  const int oh = ps.out_h(), ow = ps.out_w();
  // Parallel over input elements: each scans the windows that cover it, so no
  // two threads write the same location and summation order stays fixed.
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < ps.n; ++n) {
    for (int c = 0; c < ps.c; ++c) {
      for (int iy = 0; iy < ps.h; ++iy) {
        for (int ix = 0; ix < ps.w; ++ix) {
          const int64_t ii = idx4(n, c, iy, ix, ps.c, ps.h, ps.w);
          S acc = S(0);
          // Floor division: the numerator goes negative for cells under the
          // top/left padding and truncation would skip window 0.
          const auto fdiv = [](int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
          const int oy_lo = fdiv(iy + ps.pad - ps.k, ps.stride) + 1;
          const int ox_lo = fdiv(ix + ps.pad - ps.k, ps.stride) + 1;
          const int oy_hi = (iy + ps.pad) / ps.stride;
          const int ox_hi = (ix + ps.pad) / ps.stride;
          for (int oy = std::max(0, oy_lo); oy <= std::min(oh - 1, oy_hi); ++oy) {
            for (int ox = std::max(0, ox_lo); ox <= std::min(ow - 1, ox_hi); ++ox) {
              const int64_t oi = idx4(n, c, oy, ox, ps.c, oh, ow);
              if (argmax[oi] == ii) acc += gout[oi];
            }
          }
          gin[ii] += acc;
        }
      }
    }
  }
}

template <typename S>
void upsample2x_forward(int n, int c, int h, int w, const S* in, S* out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < 2 * h; ++y) {
        for (int x = 0; x < 2 * w; ++x) {
          out[idx4(ni, ci, y, x, c, 2 * h, 2 * w)] =
              in[idx4(ni, ci, y / 2, x / 2, c, h, w)];
        }
      }
    }
  }
}

template <typename S>
void upsample2x_backward(int n, int c, int h, int w, const S* gout, S* gin) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          S acc = S(0);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              acc += gout[idx4(ni, ci, 2 * y + dy, 2 * x + dx, c, 2 * h, 2 * w)];
            }
          }
          gin[idx4(ni, ci, y, x, c, h, w)] += acc;
        }
      }
    }
  }
}

template <typename S>
void space_to_depth2_forward(int n, int c, int h, int w, const S* in, S* out) {
  const int oh = h / 2, ow = w / 2;
  // slice s: (dy, dx) = (s & 1, s >> 1) -> order ee, oe, eo, oo in (y, x)
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int s = 0; s < 4; ++s) {
      const int dy = s & 1, dx = s >> 1;
      for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x) {
            out[idx4(ni, s * c + ci, y, x, 4 * c, oh, ow)] =
                in[idx4(ni, ci, 2 * y + dy, 2 * x + dx, c, h, w)];
          }
        }
      }
    }
  }
}

template <typename S>
void space_to_depth2_backward(int n, int c, int h, int w, const S* gout, S* gin) {
  const int oh = h / 2, ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int s = 0; s < 4; ++s) {
      const int dy = s & 1, dx = s >> 1;
      for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x) {
            gin[idx4(ni, ci, 2 * y + dy, 2 * x + dx, c, h, w)] +=
                gout[idx4(ni, s * c + ci, y, x, 4 * c, oh, ow)];
          }
        }
      }
    }
  }
}

namespace ref {

template <typename S>
void conv2d_forward(const ConvShape& cs, const S* in, const S* w, const S* bias, S* out) {
  const int oh = cs.out_h(), ow = cs.out_w();
  int64_t o = 0;
  for (int n = 0; n < cs.n; ++n) {
    for (int co = 0; co < cs.cout; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          S acc = bias ? bias[co] : S(0);
          for (int ci = 0; ci < cs.cin; ++ci) {
            for (int ky = 0; ky < cs.k; ++ky) {
              for (int kx = 0; kx < cs.k; ++kx) {
                const int iy = oy * cs.stride - cs.pad + ky;
                const int ix = ox * cs.stride - cs.pad + kx;
                if (iy < 0 || iy >= cs.h || ix < 0 || ix >= cs.w) continue;
                acc += in[((static_cast<int64_t>(n) * cs.cin + ci) * cs.h + iy) * cs.w + ix] *
                       w[((static_cast<int64_t>(co) * cs.cin + ci) * cs.k + ky) * cs.k + kx];
              }
            }
          }
          out[o] = acc;
        }
      }
    }
  }
}

template <typename S>
void maxpool2d_forward(const PoolShape& ps, const S* in, S* out) {
  const int oh = ps.out_h(), ow = ps.out_w();
  int64_t o = 0;
  for (int n = 0; n < ps.n; ++n) {
    for (int c = 0; c < ps.c; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          S best = -std::numeric_limits<S>::infinity();
          for (int ky = 0; ky < ps.k; ++ky) {
            for (int kx = 0; kx < ps.k; ++kx) {
              const int iy = oy * ps.stride - ps.pad + ky;
              const int ix = ox * ps.stride - ps.pad + kx;
              if (iy < 0 || iy >= ps.h || ix < 0 || ix >= ps.w) continue;
              const S v = in[((static_cast<int64_t>(n) * ps.c + c) * ps.h + iy) * ps.w + ix];
              if (v > best) best = v;
            }
          }
          out[o] = best;
        }
      }
    }
  }
}

template void conv2d_forward<float>(const ConvShape&, const float*, const float*, const float*, float*);
template void conv2d_forward<double>(const ConvShape&, const double*, const double*, const double*, double*);
template void maxpool2d_forward<float>(const PoolShape&, const float*, float*);
template void maxpool2d_forward<double>(const PoolShape&, const double*, double*);

}  // namespace ref

#define TFNK_INSTANTIATE(S)                                                                        \
  template void conv2d_forward<S>(const ConvShape&, const S*, const S*, const S*, S*);             \
  template void conv2d_backward_input<S>(const ConvShape&, const S*, const S*, S*);                \
  template void conv2d_backward_weight<S>(const ConvShape&, const S*, const S*, S*);               \
  template void conv2d_backward_bias<S>(const ConvShape&, const S*, S*);                           \
  template void maxpool2d_forward<S>(const PoolShape&, const S*, S*, int64_t*);                    \
  template void maxpool2d_backward<S>(const PoolShape&, const S*, const int64_t*, S*);             \
  template void upsample2x_forward<S>(int, int, int, int, const S*, S*);                           \
  template void upsample2x_backward<S>(int, int, int, int, const S*, S*);                          \
  template void space_to_depth2_forward<S>(int, int, int, int, const S*, S*);                      \
  template void space_to_depth2_backward<S>(int, int, int, int, const S*, S*);

TFNK_INSTANTIATE(float)
TFNK_INSTANTIATE(double)
#undef TFNK_INSTANTIATE

}  // namespace tfnk::kernels
