//! Dense compute kernels with a fixed accumulation order.
//!
//! Every kernel walks its loops in one documented order so repeated runs are
//! bit-identical. Accumulating variants add into `out`, which lets the
//! backward pass write straight into gradient buffers.

use crate::tensor::Real;

/// out += a (m x k) * b (k x n)
pub fn matmul_nn_acc<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// out += a (m x k) * b^T, with b stored (n x k)
pub fn matmul_nt_acc<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = F::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                s = s + av * bv;
            }
            *o = *o + s;
        }
    }
}

/// out += a^T * b, with a stored (k x m), b stored (k x n)
pub fn matmul_tn_acc<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// Same-padding stride-1 convolution.
/// x: (batch, c_in, h, w), weight: (c_out, c_in, k, k) with k odd, bias: (c_out).
pub fn conv2d_forward<F: Real>(
    x: &[F],
    weight: &[F],
    bias: &[F],
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    out: &mut [F],
) {
    let pad = k / 2;
    let hw = h * w;
    debug_assert_eq!(out.len(), batch * c_out * hw);
    for b in 0..batch {
        for co in 0..c_out {
            let oplane = &mut out[(b * c_out + co) * hw..(b * c_out + co + 1) * hw];
            oplane.fill(bias[co]);
            for ci in 0..c_in {
                let iplane = &x[(b * c_in + ci) * hw..(b * c_in + ci + 1) * hw];
                for dy in 0..k {
                    for dx in 0..k {
                        let wv = weight[((co * c_in + ci) * k + dy) * k + dx];
                        // out[y][xx] += wv * in[y+dy-pad][xx+dx-pad]
                        let y_lo = pad.saturating_sub(dy);
                        let y_hi = (h + pad - dy).min(h);
                        let x_lo = pad.saturating_sub(dx);
                        let x_hi = (w + pad - dx).min(w);
                        for y in y_lo..y_hi {
                            let iy = y + dy - pad;
                            let orow = &mut oplane[y * w + x_lo..y * w + x_hi];
                            let irow = &iplane[iy * w + x_lo + dx - pad..iy * w + x_hi + dx - pad];
                            for (o, &iv) in orow.iter_mut().zip(irow) {
                                *o = *o + wv * iv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dx += conv2d backward w.r.t. the input.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_input_acc<F: Real>(
    grad: &[F],
    weight: &[F],
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    dx: &mut [F],
) {
    let pad = k / 2;
    let hw = h * w;
    for b in 0..batch {
        for co in 0..c_out {
            let gplane = &grad[(b * c_out + co) * hw..(b * c_out + co + 1) * hw];
            for ci in 0..c_in {
                let dplane = &mut dx[(b * c_in + ci) * hw..(b * c_in + ci + 1) * hw];
                for dy in 0..k {
                    for dxk in 0..k {
                        let wv = weight[((co * c_in + ci) * k + dy) * k + dxk];
                        let y_lo = pad.saturating_sub(dy);
                        let y_hi = (h + pad - dy).min(h);
                        let x_lo = pad.saturating_sub(dxk);
                        let x_hi = (w + pad - dxk).min(w);
                        for y in y_lo..y_hi {
                            let iy = y + dy - pad;
                            let grow = &gplane[y * w + x_lo..y * w + x_hi];
                            let drow =
                                &mut dplane[iy * w + x_lo + dxk - pad..iy * w + x_hi + dxk - pad];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d = *d + wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// dw += conv2d backward w.r.t. the kernel; db += backward w.r.t. the bias.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_params_acc<F: Real>(
    grad: &[F],
    x: &[F],
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    dw: &mut [F],
    db: &mut [F],
) {
    let pad = k / 2;
    let hw = h * w;
    for b in 0..batch {
        for co in 0..c_out {
            let gplane = &grad[(b * c_out + co) * hw..(b * c_out + co + 1) * hw];
            let mut gsum = F::zero();
            for &g in gplane {
                gsum = gsum + g;
            }
            db[co] = db[co] + gsum;
            for ci in 0..c_in {
                let iplane = &x[(b * c_in + ci) * hw..(b * c_in + ci + 1) * hw];
                for dy in 0..k {
                    for dxk in 0..k {
                        let y_lo = pad.saturating_sub(dy);
                        let y_hi = (h + pad - dy).min(h);
                        let x_lo = pad.saturating_sub(dxk);
                        let x_hi = (w + pad - dxk).min(w);
                        let mut s = F::zero();
                        for y in y_lo..y_hi {
                            let iy = y + dy - pad;
                            let grow = &gplane[y * w + x_lo..y * w + x_hi];
                            let irow =
                                &iplane[iy * w + x_lo + dxk - pad..iy * w + x_hi + dxk - pad];
                            for (&gv, &iv) in grow.iter().zip(irow) {
                                s = s + gv * iv;
                            }
                        }
                        let wi = ((co * c_in + ci) * k + dy) * k + dxk;
                        dw[wi] = dw[wi] + s;
                    }
                }
            }
        }
    }
}

/// 2x2 max pooling, stride 2, truncating odd trailing rows/columns.
/// Returns the flat input index of each window maximum for the backward pass.
pub fn maxpool2x2_forward<F: Real>(
    x: &[F],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    out: &mut [F],
    argmax: &mut Vec<u32>,
) {
    let h2 = h / 2;
    let w2 = w / 2;
    argmax.clear();
    argmax.reserve(batch * c * h2 * w2);
    let hw = h * w;
    let mut oi = 0;
    for bc in 0..batch * c {
        let plane = &x[bc * hw..(bc + 1) * hw];
        for y in 0..h2 {
            for xx in 0..w2 {
                let base = (2 * y) * w + 2 * xx;
                let cand = [base, base + 1, base + w, base + w + 1];
                let mut best = cand[0];
                let mut best_v = plane[cand[0]];
                for &idx in &cand[1..] {
                    if plane[idx] > best_v {
                        best_v = plane[idx];
                        best = idx;
                    }
                }
                out[oi] = best_v;
                argmax.push((bc * hw + best) as u32);
                oi += 1;
            }
        }
    }
}

pub fn maxpool2x2_backward_acc<F: Real>(grad: &[F], argmax: &[u32], dx: &mut [F]) {
    for (g, &idx) in grad.iter().zip(argmax) {
        dx[idx as usize] = dx[idx as usize] + *g;
    }
}
