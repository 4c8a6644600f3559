/* Zero-padded "same" 2-D cross-correlation kernels, float64, row-major.
 *
 * xp   : (cin, h + k - 1, wd + k - 1)  input already zero-padded by k/2
 * w    : (cout, cin, k, k)
 * out  : (cout, h, wd)
 * gy   : (cout, h, wd)                 upstream gradient
 * gw   : (cout, cin, k, k)             weight gradient (overwritten)
 *
 * The blocked paths keep a CB x JB tile of outputs in registers; tails fall
 * back to plain loops. Summation order is fixed, so results are reproducible.
 */
#ifndef SSRECON_CONV_IMPL_H
#define SSRECON_CONV_IMPL_H

#include <stddef.h>
#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#define CB 8
#define JB 16
#define WJB 8

static void conv2d_padded(const double *restrict xp, const double *restrict w,
                          double *restrict out, ptrdiff_t cin, ptrdiff_t cout,
                          ptrdiff_t h, ptrdiff_t wd, ptrdiff_t k)
{
    const ptrdiff_t hp = h + k - 1, wp = wd + k - 1, kk = k * k, ws = cin * kk;
    for (ptrdiff_t co0 = 0; co0 < cout; co0 += CB) {
        const ptrdiff_t nc = (cout - co0 < CB) ? cout - co0 : CB;
        const double *restrict wb = w + co0 * ws;
        for (ptrdiff_t i = 0; i < h; i++) {
            for (ptrdiff_t j0 = 0; j0 < wd; j0 += JB) {
                const ptrdiff_t nj = (wd - j0 < JB) ? wd - j0 : JB;
                double acc[CB][JB] = {{0}};
                if (nc == CB && nj == JB) {
#if defined(__AVX512F__)
                    __m512d c0l = _mm512_setzero_pd(), c0h = _mm512_setzero_pd();
                    __m512d c1l = _mm512_setzero_pd(), c1h = _mm512_setzero_pd();
                    __m512d c2l = _mm512_setzero_pd(), c2h = _mm512_setzero_pd();
                    __m512d c3l = _mm512_setzero_pd(), c3h = _mm512_setzero_pd();
                    __m512d c4l = _mm512_setzero_pd(), c4h = _mm512_setzero_pd();
                    __m512d c5l = _mm512_setzero_pd(), c5h = _mm512_setzero_pd();
                    __m512d c6l = _mm512_setzero_pd(), c6h = _mm512_setzero_pd();
                    __m512d c7l = _mm512_setzero_pd(), c7h = _mm512_setzero_pd();
                    for (ptrdiff_t ci = 0; ci < cin; ci++) {
                        for (ptrdiff_t a = 0; a < k; a++) {
                            const double *xrow = xp + (ci * hp + i + a) * wp + j0;
                            for (ptrdiff_t b = 0; b < k; b++) {
                                const ptrdiff_t t = ci * kk + a * k + b;
                                const __m512d xl = _mm512_loadu_pd(xrow + b);
                                const __m512d xh = _mm512_loadu_pd(xrow + b + 8);
                                __m512d wv;
                                wv = _mm512_set1_pd(wb[t]);
                                c0l = _mm512_fmadd_pd(wv, xl, c0l); c0h = _mm512_fmadd_pd(wv, xh, c0h);
                                wv = _mm512_set1_pd(wb[ws + t]);
                                c1l = _mm512_fmadd_pd(wv, xl, c1l); c1h = _mm512_fmadd_pd(wv, xh, c1h);
                                wv = _mm512_set1_pd(wb[2 * ws + t]);
                                c2l = _mm512_fmadd_pd(wv, xl, c2l); c2h = _mm512_fmadd_pd(wv, xh, c2h);
                                wv = _mm512_set1_pd(wb[3 * ws + t]);
                                c3l = _mm512_fmadd_pd(wv, xl, c3l); c3h = _mm512_fmadd_pd(wv, xh, c3h);
                                wv = _mm512_set1_pd(wb[4 * ws + t]);
                                c4l = _mm512_fmadd_pd(wv, xl, c4l); c4h = _mm512_fmadd_pd(wv, xh, c4h);
                                wv = _mm512_set1_pd(wb[5 * ws + t]);
                                c5l = _mm512_fmadd_pd(wv, xl, c5l); c5h = _mm512_fmadd_pd(wv, xh, c5h);
                                wv = _mm512_set1_pd(wb[6 * ws + t]);
                                c6l = _mm512_fmadd_pd(wv, xl, c6l); c6h = _mm512_fmadd_pd(wv, xh, c6h);
                                wv = _mm512_set1_pd(wb[7 * ws + t]);
                                c7l = _mm512_fmadd_pd(wv, xl, c7l); c7h = _mm512_fmadd_pd(wv, xh, c7h);
                            }
                        }
                    }
                    double *o = out + (co0 * h + i) * wd + j0;
                    const ptrdiff_t os = h * wd;
                    _mm512_storeu_pd(o, c0l); _mm512_storeu_pd(o + 8, c0h); o += os;
                    _mm512_storeu_pd(o, c1l); _mm512_storeu_pd(o + 8, c1h); o += os;
                    _mm512_storeu_pd(o, c2l); _mm512_storeu_pd(o + 8, c2h); o += os;
                    _mm512_storeu_pd(o, c3l); _mm512_storeu_pd(o + 8, c3h); o += os;
                    _mm512_storeu_pd(o, c4l); _mm512_storeu_pd(o + 8, c4h); o += os;
                    _mm512_storeu_pd(o, c5l); _mm512_storeu_pd(o + 8, c5h); o += os;
                    _mm512_storeu_pd(o, c6l); _mm512_storeu_pd(o + 8, c6h); o += os;
                    _mm512_storeu_pd(o, c7l); _mm512_storeu_pd(o + 8, c7h);
                    continue;
#endif
                    for (ptrdiff_t ci = 0; ci < cin; ci++) {
                        for (ptrdiff_t a = 0; a < k; a++) {
                            const double *xrow = xp + (ci * hp + i + a) * wp + j0;
                            for (ptrdiff_t b = 0; b < k; b++) {
                                const ptrdiff_t t = ci * kk + a * k + b;
                                const double w0 = wb[t], w1 = wb[ws + t];
                                const double w2 = wb[2 * ws + t], w3 = wb[3 * ws + t];
                                const double w4 = wb[4 * ws + t], w5 = wb[5 * ws + t];
                                const double w6 = wb[6 * ws + t], w7 = wb[7 * ws + t];
                                for (ptrdiff_t j = 0; j < JB; j++) {
                                    const double xv = xrow[b + j];
                                    acc[0][j] += w0 * xv;
                                    acc[1][j] += w1 * xv;
                                    acc[2][j] += w2 * xv;
                                    acc[3][j] += w3 * xv;
                                    acc[4][j] += w4 * xv;
                                    acc[5][j] += w5 * xv;
                                    acc[6][j] += w6 * xv;
                                    acc[7][j] += w7 * xv;
                                }
                            }
                        }
                    }
                } else {
                    for (ptrdiff_t c = 0; c < nc; c++) {
                        for (ptrdiff_t ci = 0; ci < cin; ci++) {
                            for (ptrdiff_t a = 0; a < k; a++) {
                                const double *xrow = xp + (ci * hp + i + a) * wp + j0;
                                for (ptrdiff_t b = 0; b < k; b++) {
                                    const double wv = wb[c * ws + ci * kk + a * k + b];
                                    for (ptrdiff_t j = 0; j < nj; j++)
                                        acc[c][j] += wv * xrow[b + j];
                                }
                            }
                        }
                    }
                }
                for (ptrdiff_t c = 0; c < nc; c++) {
                    double *orow = out + ((co0 + c) * h + i) * wd + j0;
                    for (ptrdiff_t j = 0; j < nj; j++)
                        orow[j] = acc[c][j];
                }
            }
        }
    }
}

static void conv2d_weight_grad_padded(const double *restrict xp, const double *restrict gy,
                                      double *restrict gw, ptrdiff_t cin, ptrdiff_t cout,
                                      ptrdiff_t h, ptrdiff_t wd, ptrdiff_t k)
{
    const ptrdiff_t hp = h + k - 1, wp = wd + k - 1, kk = k * k;
    const ptrdiff_t jmain = (k == 3) ? (wd / WJB) * WJB : 0;
    for (ptrdiff_t co = 0; co < cout; co++) {
        for (ptrdiff_t ci = 0; ci < cin; ci++) {
            double *restrict g = gw + (co * cin + ci) * kk;
            double acc[9][WJB] = {{0}};
            double tail[49] = {0};
            for (ptrdiff_t i = 0; i < h; i++) {
                const double *grow = gy + (co * h + i) * wd;
                const double *x0 = xp + (ci * hp + i) * wp;
                if (jmain > 0) {
                    const double *x1 = x0 + wp, *x2 = x0 + 2 * wp;
                    for (ptrdiff_t j0 = 0; j0 < jmain; j0 += WJB) {
                        for (ptrdiff_t j = 0; j < WJB; j++) {
                            const double gv = grow[j0 + j];
                            acc[0][j] += gv * x0[j0 + j];
                            acc[1][j] += gv * x0[j0 + j + 1];
                            acc[2][j] += gv * x0[j0 + j + 2];
                            acc[3][j] += gv * x1[j0 + j];
                            acc[4][j] += gv * x1[j0 + j + 1];
                            acc[5][j] += gv * x1[j0 + j + 2];
                            acc[6][j] += gv * x2[j0 + j];
                            acc[7][j] += gv * x2[j0 + j + 1];
                            acc[8][j] += gv * x2[j0 + j + 2];
                        }
                    }
                }
                for (ptrdiff_t a = 0; a < k; a++) {
                    const double *xrow = x0 + a * wp;
                    for (ptrdiff_t b = 0; b < k; b++) {
                        double s = 0.0;
                        for (ptrdiff_t j = jmain; j < wd; j++)
                            s += grow[j] * xrow[j + b];
                        tail[a * k + b] += s;
                    }
                }
            }
            for (ptrdiff_t t = 0; t < kk; t++) {
                double s = tail[t];
                if (jmain > 0)
                    for (ptrdiff_t j = 0; j < WJB; j++)
                        s += acc[t][j];
                g[t] = s;
            }
        }
    }
}

#endif
