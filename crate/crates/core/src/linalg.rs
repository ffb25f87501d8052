//! Small dense linear algebra: vector helpers and a thin SVD.
//!
//! The SVD is Golub-Kahan: Householder bidiagonalization followed by
//! implicit-shift QR sweeps on the bidiagonal. Matrices enter and leave
//! row-major; internally the working copy is column-major so that every
//! Householder and Givens update touches contiguous memory.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two flat arrays.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Thin singular value decomposition `A = U diag(s) V'` of an `rows x cols`
/// matrix, with `k = min(rows, cols)` singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub rows: usize,
    pub cols: usize,
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    // column-major rows x k
    u: Vec<f64>,
    // column-major cols x k
    v: Vec<f64>,
}

impl Svd {
    pub fn rank_bound(&self) -> usize {
        self.singular_values.len()
    }

    /// Left singular vector `i` (length `rows`).
    pub fn u_col(&self, i: usize) -> &[f64] {
        &self.u[i * self.rows..(i + 1) * self.rows]
    }

    /// Right singular vector `i` (length `cols`).
    pub fn v_col(&self, i: usize) -> &[f64] {
        &self.v[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-major `sum_i w_i u_i v_i'`, skipping zero weights.
    pub fn recombine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let u = self.u_col(i);
            let v = self.v_col(i);
            for (r, &ur) in u.iter().enumerate() {
                let scale = w * ur;
                if scale == 0.0 {
                    continue;
                }
                let row = &mut out[r * self.cols..(r + 1) * self.cols];
                for (o, &vc) in row.iter_mut().zip(v) {
                    *o += scale * vc;
                }
            }
        }
        out
    }

    /// Row-major reconstruction `U diag(s) V'`.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.recombine(&self.singular_values)
    }
}

/// Full thin SVD of a row-major matrix.
pub fn svd(data: &[f64], rows: usize, cols: usize) -> Result<Svd> {
    check_input(data, rows, cols)?;
    if rows >= cols {
        let a = to_col_major(data, rows, cols);
        let (s, u, v) = golub_kahan(a, rows, cols, true)?;
        Ok(Svd {
            rows,
            cols,
            singular_values: s,
            u,
            v,
        })
    } else {
        // The column-major layout of A' is A's row-major layout.
        let at = data.to_vec();
        let (s, u, v) = golub_kahan(at, cols, rows, true)?;
        Ok(Svd {
            rows,
            cols,
            singular_values: s,
            u: v,
            v: u,
        })
    }
}

/// Singular values only, descending.
pub fn singular_values(data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    check_input(data, rows, cols)?;
    let (a, m, n) = if rows >= cols {
        (to_col_major(data, rows, cols), rows, cols)
    } else {
        (data.to_vec(), cols, rows)
    };
    let (s, _, _) = golub_kahan(a, m, n, false)?;
    Ok(s)
}

fn check_input(data: &[f64], rows: usize, cols: usize) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::Shape {
            expected: rows * cols,
            got: data.len(),
        });
    }
    if rows == 0 || cols == 0 {
        return Err(Error::config("SVD of an empty matrix"));
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "SVD input has non-finite entry at flat index {pos} ({rows}x{cols})"
        )));
    }
    Ok(())
}

fn to_col_major(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], cs: f64, sn: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let t = cs * *xi + sn * *yi;
        *yi = -sn * *xi + cs * *yi;
        *xi = t;
    }
}

/// Disjoint mutable views of columns `i != j` of a column-major buffer.
#[inline]
fn two_cols(buf: &mut [f64], len: usize, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i != j);
    if i < j {
        let (lo, hi) = buf.split_at_mut(j * len);
        (&mut lo[i * len..(i + 1) * len], &mut hi[..len])
    } else {
        let (lo, hi) = buf.split_at_mut(i * len);
        (&mut hi[..len], &mut lo[j * len..(j + 1) * len])
    }
}

type Factors = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Core routine for column-major `a` with `m >= n`. Returns
/// (singular values, U column-major m x n, V column-major n x n).
fn golub_kahan(mut a: Vec<f64>, m: usize, n: usize, want_vectors: bool) -> Result<Factors> {
    debug_assert!(m >= n);
    let nu = n;
    let mut s = vec![0.0; n.min(m + 1)];
    let mut e = vec![0.0; n];
    let mut work = vec![0.0; m];
    let mut u = if want_vectors { vec![0.0; m * nu] } else { Vec::new() };
    let mut v = if want_vectors { vec![0.0; n * n] } else { Vec::new() };
    let at = |c: usize, r: usize| c * m + r;

    let nct = (m - 1).min(n);
    let nrt = n.saturating_sub(2).min(m);
    for k in 0..nct.max(nrt) {
        if k < nct {
            // Householder for column k; diagonal lands in s[k].
            let col = &mut a[at(k, 0)..at(k, 0) + m];
            let mut nrm = 0.0f64;
            for &x in &col[k..] {
                nrm = nrm.hypot(x);
            }
            if nrm != 0.0 {
                if col[k] < 0.0 {
                    nrm = -nrm;
                }
                for x in &mut col[k..] {
                    *x /= nrm;
                }
                col[k] += 1.0;
            }
            s[k] = -nrm;
        }
        for j in (k + 1)..n {
            if k < nct && s[k] != 0.0 {
                let (ck, cj) = two_cols(&mut a, m, k, j);
                let t = -dot(&ck[k..], &cj[k..]) / ck[k];
                for (x, &y) in cj[k..].iter_mut().zip(&ck[k..]) {
                    *x += t * y;
                }
            }
            e[j] = a[at(j, k)];
        }
        if want_vectors && k < nct {
            u[at(k, k)..at(k, 0) + m].copy_from_slice(&a[at(k, k)..at(k, 0) + m]);
        }
        if k < nrt {
            // Householder for row k; superdiagonal lands in e[k].
            let mut nrm = 0.0f64;
            for &x in &e[k + 1..] {
                nrm = nrm.hypot(x);
            }
            if nrm != 0.0 {
                if e[k + 1] < 0.0 {
                    nrm = -nrm;
                }
                for x in &mut e[k + 1..] {
                    *x /= nrm;
                }
                e[k + 1] += 1.0;
            }
            e[k] = -nrm;
            if k + 1 < m && e[k] != 0.0 {
                for w in &mut work[k + 1..] {
                    *w = 0.0;
                }
                for j in (k + 1)..n {
                    let ej = e[j];
                    let col = &a[at(j, k + 1)..at(j, 0) + m];
                    for (w, &x) in work[k + 1..].iter_mut().zip(col) {
                        *w += ej * x;
                    }
                }
                for j in (k + 1)..n {
                    let t = -e[j] / e[k + 1];
                    let col = &mut a[at(j, k + 1)..at(j, 0) + m];
                    for (x, &w) in col.iter_mut().zip(&work[k + 1..]) {
                        *x += t * w;
                    }
                }
            }
            if want_vectors {
                v[k * n + k + 1..(k + 1) * n].copy_from_slice(&e[k + 1..n]);
            }
        }
    }

    let mut p = n.min(m + 1);
    if nct < n {
        s[nct] = a[at(nct, nct)];
    }
    if m < p {
        s[p - 1] = 0.0;
    }
    if nrt + 1 < p {
        e[nrt] = a[at(p - 1, nrt)];
    }
    e[p - 1] = 0.0;

    if want_vectors {
        for j in nct..nu {
            u[j * m..(j + 1) * m].fill(0.0);
            u[j * m + j] = 1.0;
        }
        for k in (0..nct).rev() {
            if s[k] != 0.0 {
                for j in (k + 1)..nu {
                    let (ck, cj) = two_cols(&mut u, m, k, j);
                    let t = -dot(&ck[k..], &cj[k..]) / ck[k];
                    for (x, &y) in cj[k..].iter_mut().zip(&ck[k..]) {
                        *x += t * y;
                    }
                }
                let col = &mut u[k * m..(k + 1) * m];
                for x in &mut col[k..] {
                    *x = -*x;
                }
                col[k] += 1.0;
                for x in &mut col[..k] {
                    *x = 0.0;
                }
            } else {
                u[k * m..(k + 1) * m].fill(0.0);
                u[k * m + k] = 1.0;
            }
        }
        for k in (0..n).rev() {
            if k < nrt && e[k] != 0.0 {
                for j in (k + 1)..nu {
                    let (ck, cj) = two_cols(&mut v, n, k, j);
                    let t = -dot(&ck[k + 1..], &cj[k + 1..]) / ck[k + 1];
                    for (x, &y) in cj[k + 1..].iter_mut().zip(&ck[k + 1..]) {
                        *x += t * y;
                    }
                }
            }
            v[k * n..(k + 1) * n].fill(0.0);
            v[k * n + k] = 1.0;
        }
    }

    let pp = p - 1;
    let eps = f64::EPSILON;
    let tiny = 2.0f64.powi(-966);
    let max_steps = 75 * n.max(10);
    let mut steps = 0usize;
    while p > 0 {
        // Find the largest k < p-1 with negligible e[k] (or k = none).
        let mut k_opt: Option<usize> = None;
        for k in (0..p - 1).rev() {
            if e[k].abs() <= tiny + eps * (s[k].abs() + s[k + 1].abs()) {
                e[k] = 0.0;
                k_opt = Some(k);
                break;
            }
        }
        // kase 4 when k == p-2
        let kase;
        let mut k: usize;
        if p == 1 || k_opt == Some(p - 2) {
            kase = 4;
            k = p - 1;
        } else {
            // lower bound of the unreduced block, as signed to mirror k = -1
            let lo: isize = k_opt.map_or(-1, |v| v as isize);
            let mut ks: isize = p as isize - 1;
            while ks > lo {
                let ksu = ks as usize;
                let t =
                    (if ksu != p { e[ksu].abs() } else { 0.0 }) + (if ks != lo + 1 { e[ksu - 1].abs() } else { 0.0 });
                if s[ksu].abs() <= tiny + eps * t {
                    s[ksu] = 0.0;
                    break;
                }
                ks -= 1;
            }
            if ks == lo {
                kase = 3;
                k = (lo + 1) as usize;
            } else if ks == p as isize - 1 {
                kase = 1;
                k = (lo + 1) as usize;
            } else {
                kase = 2;
                k = ks as usize + 1;
            }
        }

        match kase {
            1 => {
                // deflate negligible s[p-1]
                let mut f = e[p - 2];
                e[p - 2] = 0.0;
                for j in (k..=p - 2).rev() {
                    let t = s[j].hypot(f);
                    let cs = s[j] / t;
                    let sn = f / t;
                    s[j] = t;
                    if j != k {
                        f = -sn * e[j - 1];
                        e[j - 1] *= cs;
                    }
                    if want_vectors {
                        let (cj, cp) = two_cols(&mut v, n, j, p - 1);
                        rotate(cj, cp, cs, sn);
                    }
                }
            }
            2 => {
                // split at negligible s[k-1]
                let mut f = e[k - 1];
                e[k - 1] = 0.0;
                for j in k..p {
                    let t = s[j].hypot(f);
                    let cs = s[j] / t;
                    let sn = f / t;
                    s[j] = t;
                    f = -sn * e[j];
                    e[j] *= cs;
                    if want_vectors {
                        let (cj, ck) = two_cols(&mut u, m, j, k - 1);
                        rotate(cj, ck, cs, sn);
                    }
                }
            }
            3 => {
                steps += 1;
                if steps > max_steps {
                    return Err(Error::Numerical(format!(
                        "SVD did not converge after {steps} QR steps ({m}x{n}, {p} values unresolved)"
                    )));
                }
                let scale = s[p - 1]
                    .abs()
                    .max(s[p - 2].abs())
                    .max(e[p - 2].abs())
                    .max(s[k].abs())
                    .max(e[k].abs());
                let sp = s[p - 1] / scale;
                let spm1 = s[p - 2] / scale;
                let epm1 = e[p - 2] / scale;
                let sk = s[k] / scale;
                let ek = e[k] / scale;
                let b = ((spm1 + sp) * (spm1 - sp) + epm1 * epm1) / 2.0;
                let c = (sp * epm1) * (sp * epm1);
                let mut shift = 0.0;
                if b != 0.0 || c != 0.0 {
                    shift = (b * b + c).sqrt();
                    if b < 0.0 {
                        shift = -shift;
                    }
                    shift = c / (b + shift);
                }
                let mut f = (sk + sp) * (sk - sp) + shift;
                let mut g = sk * ek;
                for j in k..p - 1 {
                    let mut t = f.hypot(g);
                    let mut cs = f / t;
                    let mut sn = g / t;
                    if j != k {
                        e[j - 1] = t;
                    }
                    f = cs * s[j] + sn * e[j];
                    e[j] = cs * e[j] - sn * s[j];
                    g = sn * s[j + 1];
                    s[j + 1] *= cs;
                    if want_vectors {
                        let (c0, c1) = two_cols(&mut v, n, j, j + 1);
                        rotate(c0, c1, cs, sn);
                    }
                    t = f.hypot(g);
                    cs = f / t;
                    sn = g / t;
                    s[j] = t;
                    f = cs * e[j] + sn * s[j + 1];
                    s[j + 1] = -sn * e[j] + cs * s[j + 1];
                    g = sn * e[j + 1];
                    e[j + 1] *= cs;
                    if want_vectors && j < m - 1 {
                        let (c0, c1) = two_cols(&mut u, m, j, j + 1);
                        rotate(c0, c1, cs, sn);
                    }
                }
                e[p - 2] = f;
            }
            _ => {
                // convergence of s[k]
                if s[k] <= 0.0 {
                    s[k] = if s[k] < 0.0 { -s[k] } else { 0.0 };
                    if want_vectors {
                        for x in &mut v[k * n..(k + 1) * n] {
                            *x = -*x;
                        }
                    }
                }
                while k < pp && s[k] < s[k + 1] {
                    s.swap(k, k + 1);
                    if want_vectors {
                        let (c0, c1) = two_cols(&mut v, n, k, k + 1);
                        c0.swap_with_slice(c1);
                        let (c0, c1) = two_cols(&mut u, m, k, k + 1);
                        c0.swap_with_slice(c1);
                    }
                    k += 1;
                }
                p -= 1;
            }
        }
    }
    s.truncate(n);
    Ok((s, u, v))
}
