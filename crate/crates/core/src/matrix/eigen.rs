//! Eigenvalues of a general real matrix.
//!
//! The matrix is balanced by powers of two, reduced to upper Hessenberg form
//! with Householder reflections, and then driven to real Schur form by the
//! Francis double-shift QR iteration. Eigenvalues are read off the 1x1 and
//! 2x2 diagonal blocks; complex conjugate pairs come from the 2x2 blocks.
//! The iteration follows the classic EISPACK `hqr` structure, including the
//! exceptional shifts at iterations 10 and 30.

use super::DenseMatrix;
use crate::{Error, Result};

/// Per-eigenvalue iteration cap before the solver gives up.
const MAX_ITER_PER_EIGENVALUE: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// All eigenvalues of `a`, in the order they deflate from the bottom of the
/// Schur form (not sorted).
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Eigenvalue>> {
    let n = a.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(&mut h)
}

/// Diagonal similarity scaling by powers of two so that row and column norms
/// are comparable. Exact in floating point, so the spectrum is unchanged.
fn balance(a: &mut DenseMatrix) {
    const RADIX: f64 = 2.0;
    const SQRDX: f64 = RADIX * RADIX;
    let n = a.dim();
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= SQRDX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= SQRDX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// In-place Householder reduction to upper Hessenberg form.
fn hessenberg(h: &mut DenseMatrix) {
    let n = h.dim();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut norm2 = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            norm2 += ort[i] * ort[i];
        }
        let mut g = norm2.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        norm2 -= ort[m] * g;
        ort[m] -= g;

        // H <- (I - u u^T / h) H
        for j in m..n {
            let f: f64 = (m..=high).rev().map(|i| ort[i] * h[(i, j)]).sum::<f64>() / norm2;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        // H <- H (I - u u^T / h)
        for i in 0..=high {
            let f: f64 = (m..=high).rev().map(|j| ort[j] * h[(i, j)]).sum::<f64>() / norm2;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        h[(m, m - 1)] = scale * g;
        for i in (m + 1)..=high {
            h[(i, m - 1)] = 0.0;
        }
    }
}

/// Shifted double-QR on an upper Hessenberg matrix. Indices are kept signed
/// because the deflation window walks below zero at termination.
#[allow(clippy::many_single_char_names)]
fn hqr(hm: &mut DenseMatrix) -> Result<Vec<Eigenvalue>> {
    let nn = hm.dim() as isize;
    let width = hm.dim();
    let h = &mut hm.data;
    let at = |i: isize, j: isize| (i as usize) * width + j as usize;

    let mut re = vec![0.0; nn as usize];
    let mut im = vec![0.0; nn as usize];
    let eps = f64::EPSILON;

    let mut norm = 0.0;
    for i in 0..nn {
        for j in (i - 1).max(0)..nn {
            norm += h[at(i, j)].abs();
        }
    }

    if norm == 0.0 {
        return Ok(vec![Eigenvalue { re: 0.0, im: 0.0 }; nn as usize]);
    }

    let mut n = nn - 1;
    let low: isize = 0;
    let mut exshift = 0.0;
    let mut iter = 0usize;
    let mut total_iter = 0usize;
    let (mut p, mut q, mut r, mut s, mut z);
    let (mut w, mut x, mut y);

    while n >= low {
        // Look for a single small subdiagonal element.
        let mut l = n;
        while l > low {
            s = h[at(l - 1, l - 1)].abs() + h[at(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[at(l, l - 1)].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == n {
            // One root.
            h[at(n, n)] += exshift;
            re[n as usize] = h[at(n, n)];
            im[n as usize] = 0.0;
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            // Two roots from the trailing 2x2 block.
            w = h[at(n, n - 1)] * h[at(n - 1, n)];
            p = (h[at(n - 1, n - 1)] - h[at(n, n)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[at(n, n)] += exshift;
            h[at(n - 1, n - 1)] += exshift;
            x = h[at(n, n)];
            let (a, b) = ((n - 1) as usize, n as usize);
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                re[a] = x + z;
                re[b] = if z != 0.0 { x - w / z } else { re[a] };
                im[a] = 0.0;
                im[b] = 0.0;
            } else {
                re[a] = x + p;
                re[b] = x + p;
                im[a] = z;
                im[b] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[at(n, n)];
            y = h[at(n - 1, n - 1)];
            w = h[at(n, n - 1)] * h[at(n - 1, n)];

            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    h[at(i, i)] -= x;
                }
                s = h[at(n, n - 1)].abs() + h[at(n - 1, n - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=n {
                        h[at(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iter += 1;
            if iter > MAX_ITER_PER_EIGENVALUE {
                return Err(Error::EigenNotConverged { iterations: total_iter });
            }

            // Look for two consecutive small subdiagonal elements.
            let mut m = n - 2;
            loop {
                z = h[at(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[at(m + 1, m)] + h[at(m, m + 1)];
                q = h[at(m + 1, m + 1)] - z - r - s;
                r = h[at(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[at(m, m - 1)].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[at(m - 1, m - 1)].abs() + z.abs() + h[at(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }

            for i in (m + 2)..=n {
                h[at(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[at(i, i - 3)] = 0.0;
                }
            }

            // Double QR step on rows l..=n, columns m..=n.
            let mut k = m;
            while k < n {
                let notlast = k != n - 1;
                if k != m {
                    p = h[at(k, k - 1)];
                    q = h[at(k + 1, k - 1)];
                    r = if notlast { h[at(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[at(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[at(k, k - 1)] = -h[at(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[at(k, j)] + q * h[at(k + 1, j)];
                        if notlast {
                            p += r * h[at(k + 2, j)];
                            h[at(k + 2, j)] -= p * z;
                        }
                        h[at(k, j)] -= p * x;
                        h[at(k + 1, j)] -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * h[at(i, k)] + y * h[at(i, k + 1)];
                        if notlast {
                            p += z * h[at(i, k + 2)];
                            h[at(i, k + 2)] -= p * r;
                        }
                        h[at(i, k)] -= p;
                        h[at(i, k + 1)] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }

    Ok(re.into_iter().zip(im).map(|(re, im)| Eigenvalue { re, im }).collect())
}
