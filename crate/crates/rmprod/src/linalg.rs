//! Dense complex linear algebra used by the samplers and the product engine.
//!
//! Storage is nalgebra's column-major `DMatrix`; products go through
//! `matrixmultiply::zgemm`, which is several times faster than the generic
//! nalgebra kernel at the sizes used here.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C = Complex64;
pub type Mat = DMatrix<C>;

const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

/// Operand form for [`gemm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// Use the matrix as stored.
    N,
    /// Use the conjugate transpose.
    H,
}

/// `c ← alpha·op(a)·op(b) + beta·c`.
pub fn gemm(alpha: C, a: &Mat, opa: Op, b: &Mat, opb: Op, beta: C, c: &mut Mat) {
    // The kernel has no conjugate mode; adjoint operands are copied (O(n²)).
    let at;
    let a = match opa {
        Op::N => a,
        Op::H => {
            at = a.adjoint();
            &at
        }
    };
    let bt;
    let b = match opb {
        Op::N => b,
        Op::H => {
            bt = b.adjoint();
            &bt
        }
    };
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!(c.shape(), (m, n), "output shape");
    if m == 0 || n == 0 {
        return;
    }
    let std = matrixmultiply::CGemmOption::Standard;
    // SAFETY: pointers and strides describe the column-major buffers of
    // `a`, `b`, `c` with the shapes asserted above; `Complex64` is
    // `repr(C)` with layout identical to `[f64; 2]`.
    unsafe {
        matrixmultiply::zgemm(
            std,
            std,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// `a·b`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.nrows(), b.ncols());
    gemm(ONE, a, Op::N, b, Op::N, ZERO, &mut c);
    c
}

/// `a*·b`.
pub fn matmul_hn(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.ncols(), b.ncols());
    gemm(ONE, a, Op::H, b, Op::N, ZERO, &mut c);
    c
}

/// `a·b*`.
pub fn matmul_nh(a: &Mat, b: &Mat) -> Mat {
    let mut c = Mat::zeros(a.nrows(), b.nrows());
    gemm(ONE, a, Op::N, b, Op::H, ZERO, &mut c);
    c
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn norm1(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Frobenius norm squared.
pub fn frob2(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Matrix with i.i.d. complex Gaussian entries of variance `var` (E|g|² = var).
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, var: f64, rng: &mut R) -> Mat {
    let s = (0.5 * var).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for z in m.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = C::new(re * s, im * s);
    }
    m
}

/// Householder vector for `x`: returns `(alpha, beta)` and overwrites `x`
/// with `v` such that `(I − beta·v v*) x_original = alpha·e₁`.
/// A zero vector gives `beta = 0` (identity reflector).
fn householder(x: &mut [C]) -> (C, f64) {
    let nrm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return (ZERO, 0.0);
    }
    let x0 = x[0];
    let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
    let alpha = -phase * nrm;
    x[0] -= alpha;
    let vn2 = x.iter().map(|z| z.norm_sqr()).sum::<f64>();
    (alpha, 2.0 / vn2)
}

/// Applies `I − beta·v v*` (acting on rows `off..off+len(v)`) to every column of `m`.
fn reflect_columns(m: &mut Mat, off: usize, v: &[C], beta: f64) {
    if beta == 0.0 {
        return;
    }
    let nr = m.nrows();
    let len = v.len();
    let data = m.as_mut_slice();
    for col in data.chunks_exact_mut(nr) {
        let seg = &mut col[off..off + len];
        let mut s = ZERO;
        for (vi, xi) in v.iter().zip(seg.iter()) {
            s += vi.conj() * xi;
        }
        s *= beta;
        if s == ZERO {
            continue;
        }
        for (vi, xi) in v.iter().zip(seg.iter_mut()) {
            *xi -= vi * s;
        }
    }
}

/// Replaces `w` by `H·w` for a fresh Haar unitary `H`, without forming `H`.
///
/// `H = H₁⋯H_N·Λ` where `H_j` is the Householder reflector of an independent
/// Gaussian vector on coordinates `j..N` and `Λ` carries the phases of the
/// reflected pivots. This is the law of the phase-normalised Q factor of a
/// Ginibre matrix, generated one column at a time.
pub fn haar_apply_left<R: Rng + ?Sized>(w: &mut Mat, rng: &mut R) {
    let n = w.nrows();
    let mut vs: Vec<(Vec<C>, f64)> = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..n {
        let mut x: Vec<C> = (0..n - j)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C::new(re * s, im * s)
            })
            .collect();
        let (alpha, beta) = householder(&mut x);
        phases.push(if alpha.norm() > 0.0 { alpha / alpha.norm() } else { ONE });
        vs.push((x, beta));
    }
    for (i, mut row) in w.row_iter_mut().enumerate() {
        row *= phases[i];
    }
    for j in (0..n).rev() {
        let (v, beta) = &vs[j];
        reflect_columns(w, j, v, *beta);
    }
}

/// Phase-normalised QR of a tall matrix: returns the thin `Q` whose `R` has a
/// positive diagonal.
pub fn qr_positive(a: &Mat) -> Mat {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        let mut col = q.column_mut(j);
        col *= ph;
    }
    q
}

/// Column-pivoted QR of `a·diag(e^d)` computed without forming the scaled
/// matrix. Pivots are chosen by scaled residual norms.
pub struct GradedQr {
    /// Unitary factor.
    pub q: Mat,
    /// Log moduli of the scaled pivots.
    pub log_diag: Vec<f64>,
    /// Scaled triangular factor divided row-wise by the pivot moduli
    /// (unit-modulus diagonal, entries above bounded by pivoting).
    pub r_unit: Mat,
    /// Column permutation: column `j` of the pivoted matrix is column `perm[j]`.
    pub perm: Vec<usize>,
}

/// Graded pivoted QR. Fails with `Singular` when a pivot loses all
/// information relative to its column (rank deficiency at working precision).
pub fn graded_pivoted_qr(a: &Mat, d: &[f64]) -> Result<GradedQr> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(d.len(), n);
    let mut r = a.clone();
    let mut dd = d.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    // Squared tails Σ_{i≥j} |a_ij|² of the original columns. A pivot is
    // compared with its column's tail so that row-graded inputs, whose
    // trailing residuals are legitimately tiny, are not flagged.
    let tails: Vec<Vec<f64>> = r
        .column_iter()
        .map(|c| {
            let mut t = vec![0.0; n + 1];
            for i in (0..n).rev() {
                t[i] = t[i + 1] + c[i].norm_sqr();
            }
            t
        })
        .collect();
    let mut vs: Vec<(Vec<C>, f64)> = Vec::with_capacity(n);
    let tol = 4.0 * n as f64 * f64::EPSILON;
    for j in 0..n {
        let mut best = j;
        let mut best_val = f64::NEG_INFINITY;
        for k in j..n {
            let col = r.column(k);
            let rn = col.rows(j, n - j).iter().map(|z| z.norm_sqr()).sum::<f64>();
            let v = 0.5 * rn.ln() + dd[k];
            if v > best_val {
                best_val = v;
                best = k;
            }
        }
        if best != j {
            r.swap_columns(j, best);
            dd.swap(j, best);
            perm.swap(j, best);
        }
        let mut x: Vec<C> = r.column(j).rows(j, n - j).iter().cloned().collect();
        let (alpha, beta) = householder(&mut x);
        let reference = tails[perm[j]][j].sqrt();
        if !(alpha.norm() > tol * reference) || !alpha.norm().is_finite() {
            return Err(Error::Singular(format!(
                "pivot {j} has relative size {:.3e}",
                alpha.norm() / reference
            )));
        }
        // Apply to the trailing columns, set the pivot column explicitly.
        {
            let nr = r.nrows();
            let data = r.as_mut_slice();
            for (c, col) in data.chunks_exact_mut(nr).enumerate() {
                if c < j {
                    continue;
                }
                if c == j {
                    col[j] = alpha;
                    for z in col[j + 1..].iter_mut() {
                        *z = ZERO;
                    }
                    continue;
                }
                let seg = &mut col[j..];
                let mut s = ZERO;
                for (vi, xi) in x.iter().zip(seg.iter()) {
                    s += vi.conj() * xi;
                }
                s *= beta;
                for (vi, xi) in x.iter().zip(seg.iter_mut()) {
                    *xi -= vi * s;
                }
            }
        }
        vs.push((x, beta));
    }
    let mut q = Mat::identity(n, n);
    for j in (0..n).rev() {
        let (v, beta) = &vs[j];
        reflect_columns(&mut q, j, v, *beta);
    }
    let log_diag: Vec<f64> = (0..n).map(|i| r[(i, i)].norm().ln() + dd[i]).collect();
    let mut r_unit = Mat::zeros(n, n);
    for jc in 0..n {
        for i in 0..=jc {
            let rij = r[(i, jc)];
            if rij == ZERO {
                continue;
            }
            let scale = (dd[jc] - dd[i]).exp() / r[(i, i)].norm();
            r_unit[(i, jc)] = rij * scale;
        }
    }
    Ok(GradedQr { q, log_diag, r_unit, perm })
}

/// Singular value decomposition of the graded matrix `diag(e^d)·t`.
pub struct GradedSvd {
    /// Log singular values, sorted decreasing.
    pub log_sv: Vec<f64>,
    /// Left singular vectors (columns), if requested.
    pub left: Option<Mat>,
    /// Right singular vectors as rows, if requested.
    pub right: Option<Mat>,
}

/// One-sided Jacobi on the columns of `t*·diag(e^d)`, carried in log scale so
/// that no intermediate leaves the floating-point range.
pub fn graded_jacobi_svd(d: &[f64], t: &Mat, want_vectors: bool) -> Result<GradedSvd> {
    let n = d.len();
    assert_eq!(t.shape(), (n, n));
    // Column j of B = t*·diag(e^d) is e^{d_j}·conj(row j of t).
    let mut g = Mat::zeros(n, n);
    let mut s = vec![0.0; n];
    for j in 0..n {
        let mut nrm = 0.0;
        for k in 0..n {
            let v = t[(j, k)].conj();
            g[(k, j)] = v;
            nrm += v.norm_sqr();
        }
        let nrm = nrm.sqrt();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(Error::Singular(format!("row {j} of the mixing factor is degenerate")));
        }
        for k in 0..n {
            g[(k, j)] /= nrm;
        }
        s[j] = d[j] + nrm.ln();
    }
    let mut jm = if want_vectors { Some(Mat::identity(n, n)) } else { None };
    let tol = n.max(1) as f64 * f64::EPSILON;
    let mut converged = n < 2;
    for _sweep in 0..80 {
        if converged {
            break;
        }
        let mut rotated = false;
        for p0 in 0..n - 1 {
            for q0 in p0 + 1..n {
                let (p, q) = if s[p0] >= s[q0] { (p0, q0) } else { (q0, p0) };
                let mut gam = ZERO;
                {
                    let gp = g.column(p);
                    let gq = g.column(q);
                    for k in 0..n {
                        gam += gp[k].conj() * gq[k];
                    }
                }
                let ag = gam.norm();
                if ag <= tol {
                    continue;
                }
                rotated = true;
                let ph = gam / ag;
                let r = (s[q] - s[p]).exp();
                let w = (1.0 - r * r) / (2.0 * ag);
                let t_over_r = -1.0 / (w + (w * w + r * r).sqrt());
                let tt = t_over_r * r;
                let cs = 1.0 / (1.0 + tt * tt).sqrt();
                let sn = tt * cs;
                // new p = c·ĝp − t r·ĝq̃ (scale e^{s_p} c), new q = (t/r)ĝp + ĝq̃ (scale e^{s_q} c)
                let mut np = 0.0;
                let mut nq = 0.0;
                for k in 0..n {
                    let gp = g[(k, p)];
                    let gq = g[(k, q)] * ph.conj();
                    let a = gp - gq * (tt * r);
                    let b = gp * t_over_r + gq;
                    g[(k, p)] = a;
                    g[(k, q)] = b;
                    np += a.norm_sqr();
                    nq += b.norm_sqr();
                }
                let np = np.sqrt();
                let nq = nq.sqrt();
                for k in 0..n {
                    g[(k, p)] /= np;
                    g[(k, q)] /= nq;
                }
                s[p] += (cs * np).ln();
                s[q] += (cs * nq).ln();
                if let Some(jm) = jm.as_mut() {
                    for k in 0..n {
                        let jp = jm[(k, p)];
                        let jq = jm[(k, q)] * ph.conj();
                        jm[(k, p)] = jp * cs - jq * sn;
                        jm[(k, q)] = jp * sn + jq * cs;
                    }
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NonConvergence("graded Jacobi SVD exceeded 80 sweeps".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let log_sv = order.iter().map(|&i| s[i]).collect();
    let (left, right) = if let Some(jm) = jm {
        // D·T = J Σ Ĝ*  ⇒ left vectors are columns of J, right vectors rows of Ĝ*.
        let left = Mat::from_fn(n, n, |r, c| jm[(r, order[c])]);
        let right = Mat::from_fn(n, n, |r, c| g[(c, order[r])].conj());
        (Some(left), Some(right))
    } else {
        (None, None)
    };
    Ok(GradedSvd { log_sv, left, right })
}

/// Taylor coefficients 1/k!.
fn inv_factorials(m: usize) -> Vec<f64> {
    let mut c = vec![1.0; m + 1];
    for k in 1..=m {
        c[k] = c[k - 1] / k as f64;
    }
    c
}

/// Matrix exponential by scaling and squaring around a Paterson–Stockmeyer
/// Taylor polynomial. `tol` bounds the relative truncation error of the
/// polynomial on the scaled matrix (through ‖A‖₁).
pub fn expm_tol(a: &Mat, tol: f64) -> Mat {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let nrm = norm1(a);
    if nrm == 0.0 {
        return Mat::identity(n, n);
    }
    let mut sq = 0u32;
    let mut theta = nrm;
    while theta > 1.0 {
        theta *= 0.5;
        sq += 1;
    }
    // Smallest degree with θ^{m+1}/(m+1)!·e^θ ≤ tol.
    let mut m = 1usize;
    let mut term = theta * theta / 2.0;
    while term * theta.exp() > tol && m < 30 {
        m += 1;
        term *= theta / (m as f64 + 1.0);
    }
    let scaled = a * C::new(0.5f64.powi(sq as i32), 0.0);
    let mut e = taylor_ps(&scaled, m);
    for _ in 0..sq {
        e = matmul(&e, &e);
    }
    e
}

/// Matrix exponential to double precision.
pub fn expm(a: &Mat) -> Mat {
    expm_tol(a, 1e-16)
}

/// Σ_{k≤m} A^k/k! by Paterson–Stockmeyer.
fn taylor_ps(a: &Mat, m: usize) -> Mat {
    let n = a.nrows();
    let coef = inv_factorials(m);
    let q = ((m as f64).sqrt().ceil() as usize).max(1);
    let mut pows: Vec<Mat> = Vec::with_capacity(q + 1);
    pows.push(Mat::identity(n, n));
    pows.push(a.clone());
    for k in 2..=q {
        let next = matmul(&pows[k - 1], a);
        pows.push(next);
    }
    let nblocks = m / q;
    let block = |b: usize| -> Mat {
        let mut acc = Mat::zeros(n, n);
        for i in 0..q {
            let k = b * q + i;
            if k > m {
                break;
            }
            acc += &pows[i] * C::new(coef[k], 0.0);
        }
        acc
    };
    let mut res = block(nblocks);
    for b in (0..nblocks).rev() {
        let mut next = block(b);
        gemm(ONE, &res, Op::N, &pows[q], Op::N, ONE, &mut next);
        res = next;
    }
    res
}

/// Eigenvalues of a Hermitian matrix, sorted decreasing.
pub fn hermitian_eigenvalues(h: &Mat) -> Vec<f64> {
    let e = nalgebra::SymmetricEigen::new(h.clone());
    let mut v: Vec<f64> = e.eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Log squared singular values of a dense matrix, sorted decreasing.
pub fn dense_log_sq_singular_values(a: &Mat) -> Vec<f64> {
    let sv = a.clone().singular_values();
    let mut v: Vec<f64> = sv.iter().map(|s| 2.0 * s.ln()).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Log-modulus of the determinant via LU with partial pivoting.
pub fn log_abs_det(a: &Mat) -> f64 {
    let lu = a.clone().lu();
    let u = lu.u();
    (0..u.nrows()).map(|i| u[(i, i)].norm().ln()).sum()
}
