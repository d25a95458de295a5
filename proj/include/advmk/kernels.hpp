#pragma once

#include "advmk/tensor.hpp"

#include <cstdint>

namespace advmk::kernels {

/// Per-calling-thread switch. Runs nested inside an outer worker pool flip this
/// off so OpenMP regions are not oversubscribed.
inline bool& parallel_flag() {
    thread_local bool enabled = true;
    return enabled;
}
inline void set_parallel(bool on) { parallel_flag() = on; }

// Every parallel kernel assigns each output element to exactly one thread and
// keeps a fixed inner summation order, so results are bitwise identical to the
// serial reference for any thread count.

// ---------------------------------------------------------------------------
// conv2d: input (IC,IH,IW), weight (OC,IC,KH,KW), zero padding, square stride.
// ---------------------------------------------------------------------------

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

template <class T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, Tensor<T>& out) {
    const int ic_n = x.shape[0], ih = x.shape[1], iw = x.shape[2];
    const int oc_n = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int oh = out.shape[1], ow = out.shape[2];
    const bool par = parallel_flag();
    const std::int64_t rows = (std::int64_t)oc_n * oh;
    // Row-accumulator form: per output element the terms still land in
    // (ic, ky, kx) order, so results match the reference bitwise, but the
    // inner loop runs contiguously over the row.
#pragma omp parallel for schedule(static) if (par && rows > 1)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int oc = (int)(r / oh), oy = (int)(r % oh);
        const T* __restrict__ wbase = w.ptr() + (std::int64_t)oc * ic_n * kh * kw;
        T* __restrict__ orow = out.ptr() + ((std::int64_t)oc * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) orow[ox] = T(0);
        for (int ic = 0; ic < ic_n; ++ic) {
            const T* __restrict__ xc = x.ptr() + (std::int64_t)ic * ih * iw;
            const T* __restrict__ wc = wbase + (std::int64_t)ic * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= ih) continue;
                const T* __restrict__ xrow = xc + (std::int64_t)iy * iw;
                for (int kx = 0; kx < kw; ++kx) {
                    int xlo = 0;
                    if (pad - kx > 0) xlo = (pad - kx + stride - 1) / stride;
                    const int hi_num = iw - 1 + pad - kx;
                    if (hi_num < 0) continue;
                    const int xhi = hi_num / stride < ow - 1 ? hi_num / stride : ow - 1;
                    const T wv = wc[ky * kw + kx];
                    const T* __restrict__ xp = xrow + (std::int64_t)xlo * stride - pad + kx;
                    if (stride == 1) {
                        for (int ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * xp[ox - xlo];
                    } else {
                        for (int ox = xlo; ox <= xhi; ++ox)
                            orow[ox] += wv * xp[(std::int64_t)(ox - xlo) * stride];
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the conv input, gather form (one writer per input element).
/// Accumulates into gx; callers zero it first.
template <class T>
void conv2d_grad_input(const Tensor<T>& gout, const Tensor<T>& w, int stride, int pad,
                       Tensor<T>& gx) {
    const int ic_n = gx.shape[0], ih = gx.shape[1], iw = gx.shape[2];
    const int oc_n = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int oh = gout.shape[1], ow = gout.shape[2];
    const bool par = parallel_flag();
    const std::int64_t rows = (std::int64_t)ic_n * ih;
#pragma omp parallel for schedule(static) if (par && rows > 1)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int ic = (int)(r / ih), iy = (int)(r % ih);
        T* __restrict__ grow = gx.ptr() + ((std::int64_t)ic * ih + iy) * iw;
        for (int oc = 0; oc < oc_n; ++oc) {
            const T* __restrict__ gc = gout.ptr() + (std::int64_t)oc * oh * ow;
            const T* __restrict__ wc = w.ptr() + ((std::int64_t)oc * ic_n + ic) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                const int ty = iy + pad - ky;
                if (ty < 0 || ty % stride != 0) continue;
                const int oy = ty / stride;
                if (oy >= oh) continue;
                const T* __restrict__ grow_o = gc + (std::int64_t)oy * ow;
                for (int kx = 0; kx < kw; ++kx) {
                    // ix walks the residue class (kx - pad) mod stride
                    const int res = ((kx - pad) % stride + stride) % stride;
                    const int lo = kx - pad > 0 ? kx - pad : 0;
                    int ix0 = lo + (((res - lo) % stride + stride) % stride);
                    const int cap = (ow - 1) * stride - pad + kx;
                    const int ixmax = cap < iw - 1 ? cap : iw - 1;
                    if (ix0 > ixmax) continue;
                    const T wv = wc[ky * kw + kx];
                    int ox = (ix0 + pad - kx) / stride;
                    if (stride == 1) {
                        for (int ix = ix0; ix <= ixmax; ++ix) grow[ix] += wv * grow_o[ox + ix - ix0];
                    } else {
                        for (int ix = ix0; ix <= ixmax; ix += stride) grow[ix] += wv * grow_o[ox++];
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the conv weights (one writer per weight element).
/// Accumulates into gw; callers zero it first.
template <class T>
void conv2d_grad_weight(const Tensor<T>& x, const Tensor<T>& gout, int stride, int pad,
                        Tensor<T>& gw) {
    const int ic_n = x.shape[0], ih = x.shape[1], iw = x.shape[2];
    const int oc_n = gw.shape[0], kh = gw.shape[2], kw = gw.shape[3];
    const int oh = gout.shape[1], ow = gout.shape[2];
    const bool par = parallel_flag();
    const std::int64_t nw = gw.size();
#pragma omp parallel for schedule(static) if (par && nw > 1)
    for (std::int64_t i = 0; i < nw; ++i) {
        const int kx = (int)(i % kw);
        const int ky = (int)((i / kw) % kh);
        const int ic = (int)((i / (kw * kh)) % ic_n);
        const int oc = (int)(i / ((std::int64_t)kw * kh * ic_n));
        const T* __restrict__ xc = x.ptr() + (std::int64_t)ic * ih * iw;
        const T* __restrict__ gc = gout.ptr() + (std::int64_t)oc * oh * ow;
        // four independent accumulation chains (lane = ox mod 4), combined in
        // a fixed order at the end: deterministic, and the FP adds pipeline
        T acc[4] = {T(0), T(0), T(0), T(0)};
        for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= ih) continue;
            int xlo = 0;
            if (pad - kx > 0) xlo = (pad - kx + stride - 1) / stride;
            const int hi_num = iw - 1 + pad - kx;
            if (hi_num < 0) continue;
            const int xhi = hi_num / stride < ow - 1 ? hi_num / stride : ow - 1;
            const T* __restrict__ xrow = xc + (std::int64_t)iy * iw + (std::int64_t)xlo * stride - pad + kx;
            const T* __restrict__ grow = gc + (std::int64_t)oy * ow;
            for (int ox = xlo; ox <= xhi; ++ox)
                acc[(ox - xlo) & 3] += xrow[(std::int64_t)(ox - xlo) * stride] * grow[ox];
        }
        gw.ptr()[i] += ((acc[0] + acc[1]) + acc[2]) + acc[3];
    }
}

// ---------------------------------------------------------------------------
// matmul family. Shapes: nn C(m,n)=A(m,k)B(k,n); nt C(m,n)=A(m,k)B(n,k)^T;
// tn C(m,n)=A(k,m)^T B(k,n).
// ---------------------------------------------------------------------------

template <class T>
void matmul_nn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    const bool par = parallel_flag();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (int i = 0; i < m; ++i) {
        const T* __restrict__ ar = a.ptr() + (std::int64_t)i * k;
        T* __restrict__ cr = c.ptr() + (std::int64_t)i * n;
        for (int j = 0; j < n; ++j) {
            T acc(0);
            for (int l = 0; l < k; ++l) acc += ar[l] * b.ptr()[(std::int64_t)l * n + j];
            cr[j] = acc;
        }
    }
}

template <class T>
void matmul_nt(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
    const bool par = parallel_flag();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (int i = 0; i < m; ++i) {
        const T* __restrict__ ar = a.ptr() + (std::int64_t)i * k;
        T* __restrict__ cr = c.ptr() + (std::int64_t)i * n;
        for (int j = 0; j < n; ++j) {
            const T* __restrict__ br = b.ptr() + (std::int64_t)j * k;
            T acc(0);
            for (int l = 0; l < k; ++l) acc += ar[l] * br[l];
            cr[j] = acc;
        }
    }
}

template <class T>
void matmul_tn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const int k = a.shape[0], m = a.shape[1], n = b.shape[1];
    const bool par = parallel_flag();
#pragma omp parallel for schedule(static) if (par && m > 1)
    for (int i = 0; i < m; ++i) {
        T* cr = c.ptr() + (std::int64_t)i * n;
        for (int j = 0; j < n; ++j) {
            T acc(0);
            for (int l = 0; l < k; ++l)
                acc += a.ptr()[(std::int64_t)l * m + i] * b.ptr()[(std::int64_t)l * n + j];
            cr[j] = acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Bilinear resize, half-pixel centers, edge clamped. Differentiable.
// ---------------------------------------------------------------------------

template <class T>
void resize_bilinear_forward(const Tensor<T>& x, Tensor<T>& out) {
    const int ch = x.shape[0], ih = x.shape[1], iw = x.shape[2];
    const int oh = out.shape[1], ow = out.shape[2];
    const double sy = (double)ih / oh, sx = (double)iw / ow;
    const bool par = parallel_flag();
    const std::int64_t rows = (std::int64_t)ch * oh;
#pragma omp parallel for schedule(static) if (par && rows > 1)
    for (std::int64_t r = 0; r < rows; ++r) {
        const int c = (int)(r / oh), oy = (int)(r % oh);
        double fy = (oy + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        if (fy > ih - 1) fy = ih - 1;
        const int y0 = (int)fy;
        const int y1 = y0 + 1 < ih ? y0 + 1 : y0;
        const double wy = fy - y0;
        const T* xc = x.ptr() + (std::int64_t)c * ih * iw;
        T* oc = out.ptr() + ((std::int64_t)c * oh + oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            if (fx < 0) fx = 0;
            if (fx > iw - 1) fx = iw - 1;
            const int x0 = (int)fx;
            const int x1 = x0 + 1 < iw ? x0 + 1 : x0;
            const double wx = fx - x0;
            const T v00 = xc[(std::int64_t)y0 * iw + x0], v01 = xc[(std::int64_t)y0 * iw + x1];
            const T v10 = xc[(std::int64_t)y1 * iw + x0], v11 = xc[(std::int64_t)y1 * iw + x1];
            oc[ox] = v00 * T((1 - wy) * (1 - wx)) + v01 * T((1 - wy) * wx) +
                     v10 * T(wy * (1 - wx)) + v11 * T(wy * wx);
        }
    }
}

/// Adjoint of resize_bilinear_forward. Scatter form, runs serially; the
/// tensors involved are small and a fixed order keeps it deterministic.
template <class T>
void resize_bilinear_backward(const Tensor<T>& gout, Tensor<T>& gx) {
    const int ch = gx.shape[0], ih = gx.shape[1], iw = gx.shape[2];
    const int oh = gout.shape[1], ow = gout.shape[2];
    const double sy = (double)ih / oh, sx = (double)iw / ow;
    for (int c = 0; c < ch; ++c) {
        T* gc = gx.ptr() + (std::int64_t)c * ih * iw;
        const T* oc = gout.ptr() + (std::int64_t)c * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            double fy = (oy + 0.5) * sy - 0.5;
            if (fy < 0) fy = 0;
            if (fy > ih - 1) fy = ih - 1;
            const int y0 = (int)fy;
            const int y1 = y0 + 1 < ih ? y0 + 1 : y0;
            const double wy = fy - y0;
            for (int ox = 0; ox < ow; ++ox) {
                double fx = (ox + 0.5) * sx - 0.5;
                if (fx < 0) fx = 0;
                if (fx > iw - 1) fx = iw - 1;
                const int x0 = (int)fx;
                const int x1 = x0 + 1 < iw ? x0 + 1 : x0;
                const double wx = fx - x0;
                const T g = oc[(std::int64_t)oy * ow + ox];
                gc[(std::int64_t)y0 * iw + x0] += g * T((1 - wy) * (1 - wx));
                gc[(std::int64_t)y0 * iw + x1] += g * T((1 - wy) * wx);
                gc[(std::int64_t)y1 * iw + x0] += g * T(wy * (1 - wx));
                gc[(std::int64_t)y1 * iw + x1] += g * T(wy * wx);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Serial reference implementations. Same summation order as the parallel
// kernels above; tests assert bitwise equality, the bench tool compares timing.
// ---------------------------------------------------------------------------

namespace ref {

template <class T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, Tensor<T>& out) {
    const int ic_n = x.shape[0], ih = x.shape[1], iw = x.shape[2];
    const int oc_n = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int oh = out.shape[1], ow = out.shape[2];
    for (int oc = 0; oc < oc_n; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T acc(0);
                for (int ic = 0; ic < ic_n; ++ic)
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= ih) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= iw) continue;
                            acc += x.at(ic, iy, ix) * w.ptr()[(((std::int64_t)oc * ic_n + ic) * kh + ky) * kw + kx];
                        }
                    }
                out.at(oc, oy, ox) = acc;
            }
}

template <class T>
void matmul_nn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T acc(0);
            for (int l = 0; l < k; ++l)
                acc += a.ptr()[(std::int64_t)i * k + l] * b.ptr()[(std::int64_t)l * n + j];
            c.ptr()[(std::int64_t)i * n + j] = acc;
        }
}

/// Textbook scatter-form conv backward: walks output elements and accumulates
/// into both input and weight gradients. Different summation order than the
/// gather kernels, so tests compare against it with a tolerance instead of
/// bitwise.
template <class T>
void conv2d_backward_scatter(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gout,
                             int stride, int pad, Tensor<T>& gx, Tensor<T>& gw) {
    const int ic_n = x.shape[0], ih = x.shape[1], iw = x.shape[2];
    const int oc_n = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int oh = gout.shape[1], ow = gout.shape[2];
    gx.fill(T(0));
    gw.fill(T(0));
    for (int oc = 0; oc < oc_n; ++oc)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const T g = gout.at(oc, oy, ox);
                for (int ic = 0; ic < ic_n; ++ic)
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= ih) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= iw) continue;
                            const std::int64_t wi = (((std::int64_t)oc * ic_n + ic) * kh + ky) * kw + kx;
                            gx.at(ic, iy, ix) += w.ptr()[wi] * g;
                            gw.ptr()[wi] += x.at(ic, iy, ix) * g;
                        }
                    }
            }
}

} // namespace ref

} // namespace advmk::kernels
