//! Forward and backward kernels. Activations are row-major `(N, C)` with
//! `N = batch * time`. Backward kernels accumulate (`+=`) into their outputs.

use super::real::Real;

const LN_EPS: f64 = 1e-5;

pub fn encoder_forward<T: Real>(out: &mut [T], ids: &[u32], positions: &[u32], wte: &[T], wpe: &[T], c: usize) {
    for (n, (&id, &pos)) in ids.iter().zip(positions).enumerate() {
        let o = &mut out[n * c..(n + 1) * c];
        let te = &wte[id as usize * c..(id as usize + 1) * c];
        let pe = &wpe[pos as usize * c..(pos as usize + 1) * c];
        for i in 0..c {
            o[i] = te[i] + pe[i];
        }
    }
}

pub fn encoder_backward<T: Real>(dwte: &mut [T], dwpe: &mut [T], dout: &[T], ids: &[u32], positions: &[u32], c: usize) {
    for (n, (&id, &pos)) in ids.iter().zip(positions).enumerate() {
        let d = &dout[n * c..(n + 1) * c];
        let te = &mut dwte[id as usize * c..(id as usize + 1) * c];
        for i in 0..c {
            te[i] = te[i] + d[i];
        }
        let pe = &mut dwpe[pos as usize * c..(pos as usize + 1) * c];
        for i in 0..c {
            pe[i] = pe[i] + d[i];
        }
    }
}

pub fn layernorm_forward<T: Real>(
    out: &mut [T],
    mean: &mut [T],
    rstd: &mut [T],
    inp: &[T],
    w: &[T],
    b: &[T],
    c: usize,
) {
    let n_rows = inp.len() / c;
    let cf = T::of(c as f64);
    for n in 0..n_rows {
        let x = &inp[n * c..(n + 1) * c];
        let m = x.iter().fold(T::zero(), |a, &v| a + v) / cf;
        let var = x.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m)) / cf;
        let s = T::one() / (var + T::of(LN_EPS)).sqrt();
        let o = &mut out[n * c..(n + 1) * c];
        for i in 0..c {
            o[i] = (x[i] - m) * s * w[i] + b[i];
        }
        mean[n] = m;
        rstd[n] = s;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward<T: Real>(
    dinp: &mut [T],
    dw: &mut [T],
    db: &mut [T],
    dout: &[T],
    inp: &[T],
    w: &[T],
    mean: &[T],
    rstd: &[T],
    c: usize,
    drop_mean_term: bool,
) {
    let n_rows = inp.len() / c;
    let cf = T::of(c as f64);
    for n in 0..n_rows {
        let x = &inp[n * c..(n + 1) * c];
        let d = &dout[n * c..(n + 1) * c];
        let (m, s) = (mean[n], rstd[n]);
        let mut dnorm_mean = T::zero();
        let mut dnorm_norm_mean = T::zero();
        for i in 0..c {
            let norm = (x[i] - m) * s;
            let dn = w[i] * d[i];
            dnorm_mean = dnorm_mean + dn;
            dnorm_norm_mean = dnorm_norm_mean + dn * norm;
        }
        dnorm_mean = dnorm_mean / cf;
        dnorm_norm_mean = dnorm_norm_mean / cf;
        if drop_mean_term {
            dnorm_mean = T::zero();
        }
        let di = &mut dinp[n * c..(n + 1) * c];
        for i in 0..c {
            let norm = (x[i] - m) * s;
            let dn = w[i] * d[i];
            db[i] = db[i] + d[i];
            dw[i] = dw[i] + norm * d[i];
            di[i] = di[i] + (dn - dnorm_mean - norm * dnorm_norm_mean) * s;
        }
    }
}

/// `out (N, OC) = inp (N, C) @ w^T + bias`, with `w` stored `(OC, C)`.
pub fn matmul_forward<T: Real>(out: &mut [T], inp: &[T], w: &[T], bias: Option<&[T]>, c: usize, oc: usize) {
    let n = inp.len() / c;
    T::gemm(n, c, oc, T::one(), inp, c, 1, w, 1, c, T::zero(), out, oc, 1);
    if let Some(b) = bias {
        for row in out[..n * oc].chunks_exact_mut(oc) {
            for (o, bb) in row.iter_mut().zip(b) {
                *o = *o + *bb;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn matmul_backward<T: Real>(
    dinp: &mut [T],
    dw: &mut [T],
    dbias: Option<&mut [T]>,
    dout: &[T],
    inp: &[T],
    w: &[T],
    c: usize,
    oc: usize,
) {
    let n = inp.len() / c;
    // dinp (N, C) += dout (N, OC) @ w (OC, C)
    T::gemm(n, oc, c, T::one(), dout, oc, 1, w, c, 1, T::one(), dinp, c, 1);
    // dw (OC, C) += dout^T (OC, N) @ inp (N, C)
    T::gemm(oc, n, c, T::one(), dout, 1, oc, inp, c, 1, T::one(), dw, c, 1);
    if let Some(db) = dbias {
        for row in dout.chunks_exact(oc) {
            for (b, d) in db.iter_mut().zip(row) {
                *b = *b + *d;
            }
        }
    }
}

/// Causal self-attention restricted to each token's segment.
///
/// `qkv` is `(B, T, 3C)`; `att` receives the `(B, NH, T, T)` probabilities;
/// `seg_start[b*T + t]` is the first row index of the segment containing `t`.
#[allow(clippy::too_many_arguments)]
pub fn attention_forward<T: Real>(
    out: &mut [T],
    att: &mut [T],
    qkv: &[T],
    seg_start: &[u32],
    b: usize,
    t: usize,
    c: usize,
    nh: usize,
) {
    let hs = c / nh;
    let scale = T::one() / T::of(hs as f64).sqrt();
    let c3 = 3 * c;
    att[..b * nh * t * t].iter_mut().for_each(|x| *x = T::zero());
    for bi in 0..b {
        for (s0, len) in segments(&seg_start[bi * t..(bi + 1) * t]) {
            let row0 = bi * t + s0;
            for h in 0..nh {
                let q = &qkv[row0 * c3 + h * hs..];
                let a_off = ((bi * nh + h) * t + s0) * t + s0;
                // scores = scale * Q K^T
                T::gemm(len, hs, len, scale, q, c3, 1, &q[c..], 1, c3, T::zero(), &mut att[a_off..], t, 1);
                for i in 0..len {
                    let row = &mut att[a_off + i * t..][..len];
                    let maxv = row[..=i].iter().fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
                    let mut sum = T::zero();
                    for v in &mut row[..=i] {
                        *v = (*v - maxv).exp();
                        sum = sum + *v;
                    }
                    let inv = T::one() / sum;
                    row[..=i].iter_mut().for_each(|v| *v = *v * inv);
                    row[i + 1..].iter_mut().for_each(|v| *v = T::zero());
                }
                // out = A V
                T::gemm(len, len, hs, T::one(), &att[a_off..], t, 1, &q[2 * c..], c3, 1, T::zero(), &mut out[row0 * c + h * hs..], c, 1);
            }
        }
    }
}

/// Maximal runs of equal `seg_start` within one row, as `(start, len)`.
fn segments(starts: &[u32]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < starts.len() {
        let mut j = i + 1;
        while j < starts.len() && starts[j] == starts[i] {
            j += 1;
        }
        out.push((i, j - i));
        i = j;
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Real>(
    dqkv: &mut [T],
    dout: &[T],
    qkv: &[T],
    att: &[T],
    seg_start: &[u32],
    b: usize,
    t: usize,
    c: usize,
    nh: usize,
) {
    let hs = c / nh;
    let scale = T::one() / T::of(hs as f64).sqrt();
    let c3 = 3 * c;
    let mut datt = vec![T::zero(); t * t];
    for bi in 0..b {
        for (s0, len) in segments(&seg_start[bi * t..(bi + 1) * t]) {
            let row0 = bi * t + s0;
            for h in 0..nh {
                let base = row0 * c3 + h * hs;
                let a_off = ((bi * nh + h) * t + s0) * t + s0;
                let a = &att[a_off..];
                let d = &dout[row0 * c + h * hs..];
                // dA = dO V^T
                T::gemm(len, hs, len, T::one(), d, c, 1, &qkv[base + 2 * c..], 1, c3, T::zero(), &mut datt, len, 1);
                // dV += A^T dO
                T::gemm(len, len, hs, T::one(), a, 1, t, d, c, 1, T::one(), &mut dqkv[base + 2 * c..], c3, 1);
                // through the softmax: dS = A * (dA - <A, dA>) * scale
                for i in 0..len {
                    let ar = &a[i * t..][..=i];
                    let dr = &mut datt[i * len..][..len];
                    let dot = ar.iter().zip(dr.iter()).fold(T::zero(), |s, (&x, &y)| s + x * y);
                    for (j, v) in dr.iter_mut().enumerate() {
                        *v = if j <= i { ar[j] * (*v - dot) * scale } else { T::zero() };
                    }
                }
                // dQ += dS K, dK += dS^T Q
                T::gemm(len, len, hs, T::one(), &datt, len, 1, &qkv[base + c..], c3, 1, T::one(), &mut dqkv[base..], c3, 1);
                T::gemm(len, len, hs, T::one(), &datt, 1, len, &qkv[base..], c3, 1, T::one(), &mut dqkv[base + c..], c3, 1);
            }
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// tanh through a single exp; libm's tanhf is several times slower.
#[inline]
fn tanh_fast<T: Real>(u: T) -> T {
    let two = T::one() + T::one();
    T::one() - two / ((two * u).exp() + T::one())
}

pub fn gelu_forward<T: Real>(out: &mut [T], inp: &[T]) {
    let k = T::of(GELU_K);
    let a = T::of(0.044715);
    let half = T::of(0.5);
    for (o, &x) in out.iter_mut().zip(inp) {
        *o = half * x * (T::one() + tanh_fast(k * (x + a * x * x * x)));
    }
}

pub fn gelu_backward<T: Real>(dinp: &mut [T], inp: &[T], dout: &[T], slope_fault: bool) {
    let k = T::of(GELU_K);
    let a = T::of(0.044715);
    let half = T::of(0.5);
    let three = T::of(3.0);
    for ((di, &x), &d) in dinp.iter_mut().zip(inp).zip(dout) {
        let u = k * (x + a * x * x * x);
        let th = tanh_fast(u);
        let sech2 = T::one() - th * th;
        let mut g = half * (T::one() + th) + half * x * sech2 * k * (T::one() + three * a * x * x);
        if slope_fault {
            g = g * T::of(1.5);
        }
        *di = *di + g * d;
    }
}

/// Row-wise softmax of `logits (N, V)` into `probs`.
pub fn softmax_rows<T: Real>(probs: &mut [T], logits: &[T], v: usize) {
    for (p, l) in probs.chunks_exact_mut(v).zip(logits.chunks_exact(v)) {
        let maxv = l.iter().fold(T::neg_infinity(), |m, &x| if x > m { x } else { m });
        let mut sum = T::zero();
        for (pi, &li) in p.iter_mut().zip(l) {
            *pi = (li - maxv).exp();
            sum = sum + *pi;
        }
        let inv = T::one() / sum;
        p.iter_mut().for_each(|x| *x = *x * inv);
    }
}

/// Log-softmax of one row computed in f64.
pub fn log_softmax_f64<T: Real>(logits: &[T]) -> Vec<f64> {
    let maxv = logits.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = maxv + logits.iter().map(|x| (x.f64() - maxv).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x.f64() - lse).collect()
}
