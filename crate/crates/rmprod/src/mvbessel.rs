//! Multivariate Bessel functions `det[e^{z_i a_j}]/Δ(z)` and their normalised
//! form, the shift-operator calculus built on them, exact small-N
//! observables of matrix products and the large-N approximant 𝔅.
//!
//! Three evaluators back [`bessel_normalized`]:
//! * arguments equal to ρ_N except in a few coordinates use interpolation
//!   coefficients assembled from divided differences of `w ↦ w^p`, each a
//!   Taylor series about the centre of the spectrum;
//! * moderate spreads use a double divided-difference expansion of `e^{za}`;
//! * anything else falls back to a row-scaled LU with derivative rows and
//!   columns for confluent arguments.

use crate::ensembles::RngStream;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::measures::{self, EmpiricalMeasure};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Relative distance below which two arguments are treated as equal.
pub const CONFLUENCE_TOL: f64 = 1e-9;
/// Log-magnitude beyond which results are rejected.
pub const LOG_OVERFLOW: f64 = 1e6;
/// Most replaced coordinates handled by the interpolation evaluator.
const MAX_FEW: usize = 8;
/// Largest coincident cluster the LU evaluator accepts.
const MAX_CONFLUENT: usize = 6;
const SERIES_CAP: usize = 200_000;
const MC_CHUNK: usize = 256;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// `mant · e^{log_scale}`.
#[derive(Clone, Copy, Debug)]
struct Scaled {
    mant: C64,
    log_scale: C64,
}

impl Scaled {
    fn value(self) -> Result<C64> {
        if self.mant == ZERO {
            return Ok(ZERO);
        }
        let l = self.mant.ln() + self.log_scale;
        if !(l.re.abs() <= LOG_OVERFLOW) {
            return Err(Error::Overflow(l.re));
        }
        Ok(l.exp())
    }
}

/// ρ_N = (N−1, …, 0).
pub fn rho(n: usize) -> Vec<f64> {
    (0..n).map(|i| (n - 1 - i) as f64).collect()
}

fn rho_c(n: usize) -> Vec<C64> {
    rho(n).into_iter().map(|r| C64::new(r, 0.0)).collect()
}

/// Arguments of a multivariate Bessel function.
#[derive(Clone, Debug, PartialEq)]
pub struct BesselPoint {
    a: Vec<f64>,
    z: Vec<C64>,
}

impl BesselPoint {
    pub fn new(a: Vec<f64>, z: Vec<C64>) -> Result<Self> {
        if a.len() != z.len() || a.is_empty() {
            return Err(Error::Dimension(format!("|a|={} |z|={}", a.len(), z.len())));
        }
        if a.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Argument("a must be weakly decreasing".into()));
        }
        Ok(Self { a, z })
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn z(&self) -> &[C64] {
        &self.z
    }
    pub fn n(&self) -> usize {
        self.a.len()
    }
    /// `det[e^{z_i a_j}]/Δ(z)`.
    pub fn value(&self) -> Result<C64> {
        bessel(&self.a, &self.z)
    }
}

fn check_inputs(x: &[f64], z: &[C64]) -> Result<()> {
    if x.len() != z.len() || x.is_empty() {
        return Err(Error::Dimension(format!("|x|={} |z|={}", x.len(), z.len())));
    }
    if let Some(v) = x.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Argument(format!("spectrum entry {v} is not positive")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite spectral argument".into()));
    }
    Ok(())
}

fn close_c(a: C64, b: C64) -> bool {
    (a - b).norm() <= CONFLUENCE_TOL * a.norm().max(b.norm()).max(1.0)
}

fn close_r(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONFLUENCE_TOL * a.abs().max(b.abs())
}

/// Unnormalised Bessel function `det[e^{z_i a_j}]/Δ(z)`.
pub fn bessel(a: &[f64], z: &[C64]) -> Result<C64> {
    if a.len() != z.len() || a.is_empty() {
        return Err(Error::Dimension(format!("|a|={} |z|={}", a.len(), z.len())));
    }
    let n = a.len();
    if n == 1 {
        return Ok((z[0] * a[0]).exp());
    }
    let mut core = core_eval(a, z)?;
    // multiply by Δ(a)
    for i in 0..n {
        for j in i + 1..n {
            let d = a[i] - a[j];
            if d == 0.0 {
                return Ok(ZERO);
            }
            core.mant *= d.signum();
            core.log_scale += d.abs().ln();
        }
    }
    core.value()
}

/// Normalised Bessel function `Δ(ρ)·det[x_j^{z_i}]/(Δ(z)Δ(x))`; equals 1 at z = ρ.
pub fn bessel_normalized(x: &[f64], z: &[C64]) -> Result<C64> {
    normalized_scaled(x, z)?.value()
}

/// Real arguments convenience wrapper.
pub fn bessel_normalized_real(x: &[f64], z: &[f64]) -> Result<f64> {
    let zc: Vec<C64> = z.iter().map(|&v| C64::new(v, 0.0)).collect();
    Ok(bessel_normalized(x, &zc)?.re)
}

fn normalized_scaled(x: &[f64], z: &[C64]) -> Result<Scaled> {
    check_inputs(x, z)?;
    let n = x.len();
    if n == 1 {
        return Ok(Scaled { mant: ONE, log_scale: z[0] * x[0].ln() });
    }
    // Point spectrum: translation identity with the trivial spectrum.
    let x0 = x[0];
    if x.iter().all(|&v| close_r(v, x0)) {
        let shift: C64 = z.iter().zip(rho(n)).map(|(zi, r)| zi - r).sum();
        return Ok(Scaled { mant: ONE, log_scale: shift * x0.ln() });
    }
    if let Some(r) = few_shift(x, z) {
        if let Ok(v) = r {
            return Ok(v);
        }
    }
    let a: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let mut core = core_eval(&a, z)?;
    // Δ(ρ) · Π (a_i − a_j)/(x_i − x_j)
    for i in 0..n {
        for j in i + 1..n {
            core.log_scale += ((j - i) as f64).ln();
            let d = x[i] - x[j];
            let r = if d == 0.0 { 1.0 / x[j] } else { (d / x[j]).ln_1p() / d };
            core.log_scale += r.ln();
        }
    }
    Ok(core)
}

/// `det[e^{z_i a_j}]/(Δ(z)Δ(a))`, the symmetric double divided difference.
fn core_eval(a: &[f64], z: &[C64]) -> Result<Scaled> {
    let n = a.len();
    let am = a.iter().sum::<f64>() / n as f64;
    let zm = z.iter().sum::<C64>() / n as f64;
    let sa = a.iter().map(|v| (v - am).abs()).fold(0.0, f64::max);
    let sz = z.iter().map(|v| (v - zm).norm()).fold(0.0, f64::max);
    if n <= 16 && sa * sz <= 4.0 {
        if let Ok(v) = core_series(a, z) {
            return Ok(v);
        }
    }
    core_lu(a, z)
}

/// Complete homogeneous polynomials of prefixes: `h[i][d] = h_d(v_0..v_i)`.
fn prefix_complete<T>(v: &[T], dmax: usize) -> Vec<Vec<T>>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<Output = T> + From<f64>,
{
    let mut out: Vec<Vec<T>> = Vec::with_capacity(v.len());
    let mut prev = vec![T::from(0.0); dmax + 1];
    prev[0] = T::from(1.0);
    for &vi in v {
        let mut cur = vec![T::from(0.0); dmax + 1];
        cur[0] = T::from(1.0);
        for d in 1..=dmax {
            cur[d] = prev[d] + vi * cur[d - 1];
        }
        out.push(cur.clone());
        prev = cur;
    }
    out
}

/// Expansion `D_ij = Σ_n h_{n−i}(δz_{≤i}) h_{n−j}(δa_{≤j}) / n!` after centring.
fn core_series(a: &[f64], z: &[C64]) -> Result<Scaled> {
    let n = a.len();
    let am = a.iter().sum::<f64>() / n as f64;
    let zm = z.iter().sum::<C64>() / n as f64;
    let da: Vec<f64> = a.iter().map(|v| v - am).collect();
    let dz: Vec<C64> = z.iter().map(|v| v - zm).collect();
    let nmax = n + 120;
    let ha = prefix_complete(&da, nmax);
    let hz = prefix_complete(&dz, nmax);
    let abs_a: Vec<f64> = da.iter().map(|v| v.abs()).collect();
    let abs_z: Vec<f64> = dz.iter().map(|v| v.norm()).collect();
    let ha_abs = prefix_complete(&abs_a, nmax);
    let hz_abs = prefix_complete(&abs_z, nmax);
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = ZERO;
            let mut inv_fact = 1.0;
            let mut converged = false;
            for m in 0..=nmax {
                if m > 0 {
                    inv_fact /= m as f64;
                }
                if m < i.max(j) {
                    continue;
                }
                let t = hz[i][m - i] * ha[j][m - j] * inv_fact;
                s += t;
                let bound = hz_abs[i][m - i] * ha_abs[j][m - j] * inv_fact;
                if m > n + 4 && bound <= 1e-18 * s.norm().max(1e-300) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonConvergence("double divided-difference series".into()));
            }
            d[(i, j)] = s;
        }
    }
    let det = d.lu().determinant();
    let sum_z: C64 = z.iter().sum();
    let sum_a: f64 = a.iter().sum();
    let log_scale = sum_z * am + zm * sum_a - zm * am * n as f64;
    Ok(Scaled { mant: det, log_scale })
}

/// Groups values into clusters of mutually close entries.
fn clusters<T: Copy>(v: &[T], close: impl Fn(T, T) -> bool) -> Vec<(T, usize)> {
    let mut used = vec![false; v.len()];
    let mut out = Vec::new();
    for i in 0..v.len() {
        if used[i] {
            continue;
        }
        let mut m = 0;
        for j in i..v.len() {
            if !used[j] && close(v[i], v[j]) {
                used[j] = true;
                m += 1;
            }
        }
        out.push((v[i], m));
    }
    out
}

/// Row-scaled LU with derivative rows/columns at confluent arguments.
fn core_lu(a: &[f64], z: &[C64]) -> Result<Scaled> {
    let n = a.len();
    let ca = clusters(a, |p, q| (p - q).abs() <= CONFLUENCE_TOL * p.abs().max(q.abs()).max(1.0));
    let cz = clusters(z, close_c);
    if ca.iter().map(|c| c.1).chain(cz.iter().map(|c| c.1)).max().unwrap_or(1) > MAX_CONFLUENT {
        return Err(Error::Conditioning(format!("argument cluster larger than {MAX_CONFLUENT}")));
    }
    let cols: Vec<(f64, usize)> = ca.iter().flat_map(|&(v, m)| (0..m).map(move |s| (v, s))).collect();
    let rows: Vec<(C64, usize)> = cz.iter().flat_map(|&(v, m)| (0..m).map(move |r| (v, r))).collect();
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let mut mat = Mat::zeros(n, n);
    let mut log_scale = ZERO;
    for (i, &(zeta, r)) in rows.iter().enumerate() {
        let row_max = cols.iter().map(|&(alpha, _)| (zeta * alpha).re).fold(f64::NEG_INFINITY, f64::max);
        log_scale += row_max;
        for (j, &(alpha, s)) in cols.iter().enumerate() {
            let mut poly = ZERO;
            for q in 0..=r.min(s) {
                poly += zeta.powu((s - q) as u32) * alpha.powi((r - q) as i32)
                    / (fact[q] * fact[r - q] * fact[s - q]);
            }
            mat[(i, j)] = (zeta * alpha - row_max).exp() * poly;
        }
    }
    let mut mant = mat.lu().determinant();
    // Within a cluster the Vandermonde factor and the derivative determinant
    // differ by (−1)^{m(m−1)/2}.
    let sign_exp: usize = ca.iter().map(|&(_, m)| m * (m - 1) / 2).sum::<usize>()
        + cz.iter().map(|&(_, m)| m * (m - 1) / 2).sum::<usize>();
    if sign_exp % 2 == 1 {
        mant = -mant;
    }
    for p in 0..ca.len() {
        for q in p + 1..ca.len() {
            let d = ca[p].0 - ca[q].0;
            let e = (ca[p].1 * ca[q].1) as f64;
            if d < 0.0 && (ca[p].1 * ca[q].1) % 2 == 1 {
                mant = -mant;
            }
            log_scale -= e * d.abs().ln();
        }
    }
    for p in 0..cz.len() {
        for q in p + 1..cz.len() {
            let e = (cz[p].1 * cz[q].1) as f64;
            log_scale -= e * (cz[p].0 - cz[q].0).ln();
        }
    }
    Ok(Scaled { mant, log_scale })
}

/// Divided difference of `w ↦ w^p` over nodes `1 + y`, summed as
/// `Σ_s C(p, n+s) h_s(y)` with `n = |y| − 1`.
///
/// Returns the value and a rounding-error ratio: the largest magnitudes met
/// in the recursion for `h_s` weighted by `|C(p, n+s)|`, over the result.
fn power_divided_difference(y: &[f64], p: C64) -> Result<(C64, f64)> {
    let nn = y.len();
    let n = nn - 1;
    let is_int = p.im == 0.0 && p.re == p.re.round();
    if is_int && p.re >= 0.0 && p.re < n as f64 {
        return Ok((ZERO, 1.0));
    }
    let mut b = if n == 0 {
        ONE
    } else {
        let mut l = ZERO;
        for q in 0..n {
            l += (p - q as f64).ln() - ((q + 1) as f64).ln();
        }
        l.exp()
    };
    let mut h = vec![1.0f64; nn + 1];
    let mut habs = vec![1.0f64; nn + 1];
    let ay: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let mut sum = ZERO;
    let mut err_scale = 0.0;
    let mut prev_bound = f64::INFINITY;
    for s in 0..SERIES_CAP {
        let mut hmax: f64 = 1.0;
        if s > 0 {
            // advance h_{s-1} -> h_s over all prefixes
            let mut lo = 0.0;
            let mut lo_abs = 0.0;
            hmax = 0.0;
            for l in 1..=nn {
                let v = lo + y[l - 1] * h[l];
                let va = lo_abs + ay[l - 1] * habs[l];
                h[l] = v;
                habs[l] = va;
                lo = v;
                lo_abs = va;
                hmax = hmax.max(v.abs());
            }
            h[0] = 0.0;
            habs[0] = 0.0;
        }
        sum += b * h[nn];
        err_scale += b.norm() * hmax;
        // |h_s(y)| ≤ h_s(|y|) bounds the tail once the terms decrease
        let bound = b.norm() * habs[nn];
        if b == ZERO || (s > 2 && bound <= 1e-18 * sum.norm() && bound <= prev_bound) {
            let ratio = if sum == ZERO { f64::INFINITY } else { err_scale / sum.norm() };
            return Ok((sum, ratio));
        }
        prev_bound = bound;
        b *= (p - (n + s) as f64) / ((n + s + 1) as f64);
    }
    Err(Error::NonConvergence(format!("power divided difference at p={p}")))
}

/// Alternates nodes from both ends of the sorted order, which keeps the
/// partial complete homogeneous sums close to their final size.
fn interleave(y: &mut [f64]) {
    y.sort_by(|a, b| a.total_cmp(b));
    let src = y.to_vec();
    let (mut lo, mut hi) = (0usize, src.len());
    for (k, slot) in y.iter_mut().enumerate() {
        if k % 2 == 0 {
            hi -= 1;
            *slot = src[hi];
        } else {
            *slot = src[lo];
            lo += 1;
        }
    }
}

/// Interpolation evaluator for z equal to ρ_N outside a few positions.
/// Returns `None` when not applicable.
fn few_shift(x: &[f64], z: &[C64]) -> Option<Result<Scaled>> {
    let n = x.len();
    let r = rho_c(n);
    let s: Vec<usize> = (0..n).filter(|&i| z[i] != r[i]).collect();
    if s.is_empty() {
        return Some(Ok(Scaled { mant: ONE, log_scale: ZERO }));
    }
    if s.len() > MAX_FEW || s.len() >= n {
        return None;
    }
    for &i in &s {
        if (0..n).any(|j| j != i && close_c(z[i], z[j])) {
            return Some(circle_mean(x, z, i));
        }
    }
    Some(few_shift_eval(x, z, &s))
}

/// Points on the averaging circle around a coincident argument.
const CIRCLE_POINTS: usize = 8;

/// The normalised Bessel function is entire in each `z_i`, so at a
/// coincidence it equals its mean over a small circle up to `O(r^8)`.
fn circle_mean(x: &[f64], z: &[C64], i: usize) -> Result<Scaled> {
    let gap = (0..z.len())
        .filter(|&j| j != i && !close_c(z[i], z[j]))
        .map(|j| (z[i] - z[j]).norm())
        .fold(f64::INFINITY, f64::min);
    let r = (0.25 * gap).min(0.05);
    let mut parts = Vec::with_capacity(CIRCLE_POINTS);
    for k in 0..CIRCLE_POINTS {
        let mut zp = z.to_vec();
        zp[i] += C64::from_polar(r, std::f64::consts::TAU * k as f64 / CIRCLE_POINTS as f64);
        parts.push(few_shift(x, &zp).ok_or_else(|| Error::Conditioning("circle point left the few-shift regime".into()))??);
    }
    let top = parts.iter().map(|p| p.log_scale.re).fold(f64::NEG_INFINITY, f64::max);
    let mant = parts.iter().map(|p| p.mant * (p.log_scale - top).exp()).sum::<C64>() / CIRCLE_POINTS as f64;
    Ok(Scaled { mant, log_scale: C64::new(top, 0.0) })
}

fn few_shift_eval(x: &[f64], z: &[C64], s: &[usize]) -> Result<Scaled> {
    let n = x.len();
    let xmax = x.iter().cloned().fold(0.0, f64::max);
    let xmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let centre = 0.5 * (xmax + xmin);
    let mut y: Vec<f64> = x.iter().map(|v| v / centre - 1.0).collect();
    interleave(&mut y);
    let kmax = s.iter().max().copied().unwrap_or(0) + 1;
    // e_m of the scaled spectrum 1 + y
    let mut e = vec![0.0f64; kmax + 1];
    e[0] = 1.0;
    for v in &y {
        let xv = 1.0 + v;
        for m in (1..=kmax).rev() {
            e[m] += xv * e[m - 1];
        }
    }
    let k = s.len();
    let mut bmat = Mat::zeros(k, k);
    for (ra, &ia) in s.iter().enumerate() {
        for (cb, &pos) in s.iter().enumerate() {
            // coefficient of w^{N-1-pos} in the interpolant of w^{z_ia}
            let mut acc = ZERO;
            let mut acc_abs = 0.0;
            for m in 0..=pos {
                let p = z[ia] + (pos - m) as f64;
                let (d, ratio) = power_divided_difference(&y, p)?;
                if ratio > 1e6 {
                    return Err(Error::Conditioning("power divided difference".into()));
                }
                let t = if m % 2 == 0 { e[m] * d } else { -e[m] * d };
                acc += t;
                acc_abs += t.norm();
            }
            if acc_abs > 1e6 * acc.norm() && acc_abs > 0.0 {
                return Err(Error::Conditioning("interpolation coefficient".into()));
            }
            bmat[(ra, cb)] = acc;
        }
    }
    let det = bmat.lu().determinant();
    let r = rho_c(n);
    let mut log_scale = ZERO;
    // centre scaling
    let shift: C64 = s.iter().map(|&i| z[i] - r[i]).sum();
    log_scale += shift * centre.ln();
    // Δ(ρ)/Δ(z) over pairs touching S
    let in_s: Vec<bool> = (0..n).map(|i| s.contains(&i)).collect();
    for i in 0..n {
        for j in i + 1..n {
            if in_s[i] || in_s[j] {
                log_scale += ((j - i) as f64).ln() - (z[i] - z[j]).ln();
            }
        }
    }
    Ok(Scaled { mant: det, log_scale })
}

/// Monte Carlo estimate of the Gelfand–Naĭmark integral `∫ |U diag(x) U*|^z dU`.
///
/// Trials are split into fixed chunks with one random stream each, so the
/// estimate does not depend on the thread count.
pub fn gn_integral_mc(x: &[f64], z: &[C64], trials: usize, seed: u64) -> Result<(C64, f64)> {
    check_inputs(x, z)?;
    if trials == 0 {
        return Err(Error::Argument("trials must be positive".into()));
    }
    let n = x.len();
    let nchunks = trials.div_ceil(MC_CHUNK);
    let chunks: Vec<Result<Vec<C64>>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(seed, c as u64).rng();
            let len = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                out.push(gn_sample(x, z, n, &mut rng)?);
            }
            Ok(out)
        })
        .collect();
    let mut vals = Vec::with_capacity(trials);
    for c in chunks {
        vals.extend(c?);
    }
    let mean = pairwise_sum_c(&vals) / trials as f64;
    let dev: Vec<f64> = vals.iter().map(|v| (v - mean).norm_sqr()).collect();
    let var = if trials > 1 { crate::harness::stats::pairwise_sum(&dev) / (trials - 1) as f64 } else { 0.0 };
    Ok((mean, (var / trials as f64).sqrt()))
}

fn pairwise_sum_c(v: &[C64]) -> C64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise_sum_c(l) + pairwise_sum_c(r)
}

fn gn_sample<R: rand::Rng>(x: &[f64], z: &[C64], n: usize, rng: &mut R) -> Result<C64> {
    if n == 1 {
        return Ok((z[0] * x[0].ln()).exp());
    }
    for _ in 0..10 {
        // A = U diag(√x); Y = A A*; corner determinants from the LQ factor of A.
        let mut a = Mat::from_diagonal(&nalgebra::DVector::from_iterator(n, x.iter().map(|v| C64::new(v.sqrt(), 0.0))));
        linalg::haar_apply_left(&mut a, rng);
        let qr = a.adjoint().qr();
        let r = qr.r();
        let mut corner = Vec::with_capacity(n);
        let mut acc = 0.0;
        let mut ok = true;
        for j in 0..n {
            let d = r[(j, j)].norm_sqr();
            if !(d > 0.0 && d.is_finite()) {
                ok = false;
                break;
            }
            acc += d.ln();
            corner.push(acc);
        }
        if !ok {
            continue;
        }
        let mut l = z[n - 1] * corner[n - 1];
        for j in 0..n - 1 {
            l += (z[j] - z[j + 1] - 1.0) * corner[j];
        }
        return Ok(l.exp());
    }
    Err(Error::Singular("degenerate corner determinant after 10 redraws".into()))
}

/// A factor that can be evaluated at ρ_N shifted coordinatewise.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// Normalised Bessel function of a fixed spectrum.
    Bessel(Vec<f64>),
    /// `Π_a exp[Δ(z_a − N + ½)²] / exp[Δ(−a + ½)²]`.
    Gaussian(f64),
}

impl Factor {
    /// Value at `ρ_N + shifts`.
    pub fn eval_shifted(&self, shifts: &[f64]) -> Result<C64> {
        let n = shifts.len();
        match self {
            Factor::Bessel(x) => {
                if x.len() != n {
                    return Err(Error::Dimension(format!("spectrum of size {} at N={n}", x.len())));
                }
                let z: Vec<C64> = rho(n).iter().zip(shifts).map(|(r, s)| C64::new(r + s, 0.0)).collect();
                bessel_normalized(x, &z)
            }
            Factor::Gaussian(delta) => {
                let e: f64 = shifts
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| s * (s + 1.0 - 2.0 * (i + 1) as f64))
                    .sum();
                Ok(C64::new((delta * e).exp(), 0.0))
            }
        }
    }
}

/// Composition `𝒯_{c₁,z_{i₁}} ⋯ 𝒯_{c_ℓ,z_{i_ℓ}}` with 1-based indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSpec {
    pub indices: Vec<usize>,
    pub shifts: Vec<f64>,
}

impl ShiftSpec {
    pub fn new(indices: Vec<usize>, shifts: Vec<f64>) -> Result<Self> {
        if indices.len() != shifts.len() {
            return Err(Error::Dimension("indices and shifts differ in length".into()));
        }
        if indices.iter().any(|&i| i == 0) {
            return Err(Error::Argument("shift indices are 1-based".into()));
        }
        if shifts.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::Argument("shifts must be nonnegative".into()));
        }
        Ok(Self { indices, shifts })
    }

    pub fn empty() -> Self {
        Self { indices: vec![], shifts: vec![] }
    }

    /// Dense shift vector of length `n`.
    pub fn dense(&self, n: usize) -> Result<Vec<f64>> {
        let mut s = vec![0.0; n];
        for (&i, &c) in self.indices.iter().zip(&self.shifts) {
            if i > n {
                return Err(Error::Argument(format!("index {i} exceeds N={n}")));
            }
            s[i - 1] += c;
        }
        Ok(s)
    }
}

/// Value of the shifted product of `factors` at ρ_N.
pub fn apply_shift_product(factors: &[Factor], spec: &ShiftSpec, n: usize) -> Result<C64> {
    let s = spec.dense(n)?;
    let mut v = ONE;
    for f in factors {
        v *= f.eval_shifted(&s)?;
    }
    Ok(v)
}

/// `Π_{j≠i} (c + z_i − z_j)/(z_i − z_j)` at `z = ρ_N` plus the earlier shifts in `spec`.
pub fn rational_prefactor(spec: &ShiftSpec, target_index: usize, c: f64, n: usize) -> Result<f64> {
    if target_index == 0 || target_index > n {
        return Err(Error::Argument(format!("target index {target_index} outside 1..={n}")));
    }
    let s = spec.dense(n)?;
    let z: Vec<f64> = rho(n).iter().zip(&s).map(|(r, v)| r + v).collect();
    rational_at(&z, target_index - 1, c)
}

fn rational_at(z: &[f64], i: usize, c: f64) -> Result<f64> {
    let mut p = 1.0;
    for j in 0..z.len() {
        if j == i {
            continue;
        }
        let d = z[i] - z[j];
        if d == 0.0 {
            return Err(Error::Singular(format!("coordinates {} and {} coincide", i + 1, j + 1)));
        }
        p *= (c + d) / d;
    }
    Ok(p)
}

fn check_times(times: &[usize], c: &[f64]) -> Result<()> {
    if times.is_empty() || times.len() != c.len() {
        return Err(Error::Dimension("times and exponents must be nonempty and of equal length".into()));
    }
    if times.windows(2).any(|w| w[0] < w[1]) || *times.last().unwrap() == 0 {
        return Err(Error::Argument("times must satisfy M_1 ≥ … ≥ M_k > 0".into()));
    }
    if c.iter().any(|&v| !(v > 0.0)) || c.iter().sum::<f64>() >= 1.0 {
        return Err(Error::Argument("exponents must be positive with sum below 1".into()));
    }
    Ok(())
}

fn spectra_atoms(spectra: &[EmpiricalMeasure], upto: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    if spectra.len() < upto {
        return Err(Error::Dimension(format!("{} spectra for M_1={upto}", spectra.len())));
    }
    spectra[..upto]
        .iter()
        .map(|m| {
            if m.len() != n {
                Err(Error::Dimension(format!("spectrum with {} atoms at N={n}", m.len())))
            } else {
                Ok(m.atoms().to_vec())
            }
        })
        .collect()
}

/// Block ℓ collects the factors `m ∈ (M_{ℓ+1}, M_ℓ]` (0-based ranges).
fn blocks(times: &[usize]) -> Vec<std::ops::Range<usize>> {
    (0..times.len())
        .map(|l| {
            let lo = times.get(l + 1).copied().unwrap_or(0);
            lo..times[l]
        })
        .collect()
}

/// σ term for one index tuple (1-based indices).
fn sigma_term(atoms: &[Vec<f64>], blk: &[std::ops::Range<usize>], c: &[f64], idx: &[usize], n: usize) -> Result<f64> {
    let mut z: Vec<f64> = rho(n);
    let mut shifts = vec![0.0; n];
    let mut v = 1.0;
    for l in 0..c.len() {
        let i = idx[l] - 1;
        let r = rational_at(&z, i, c[l])?;
        if r == 0.0 {
            return Ok(0.0);
        }
        v *= r;
        shifts[i] += c[l];
        z[i] += c[l];
        for m in blk[l].clone() {
            v *= Factor::Bessel(atoms[m].clone()).eval_shifted(&shifts)?.re;
        }
    }
    Ok(v)
}

fn for_each_tuple(k: usize, max: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx = vec![1usize; k];
    loop {
        f(&idx)?;
        let mut p = k;
        loop {
            if p == 0 {
                return Ok(());
            }
            p -= 1;
            if idx[p] < max {
                idx[p] += 1;
                for q in p + 1..k {
                    idx[q] = 1;
                }
                break;
            }
        }
    }
}

/// `E[Π_i Σ_j y_j(M_i)^{c_i}]` for products of factors with the given
/// deterministic spectra, by full expansion of the shift operators.
pub fn observable_deterministic(spectra: &[EmpiricalMeasure], times: &[usize], c: &[f64], n: usize) -> Result<f64> {
    check_times(times, c)?;
    let k = c.len();
    let terms = (n as f64).powi(k as i32);
    if terms > 1e6 {
        return Err(Error::Cost(format!("{terms} index tuples")));
    }
    let atoms = spectra_atoms(spectra, times[0], n)?;
    let blk = blocks(times);
    let mut vals = Vec::new();
    for_each_tuple(k, n, |idx| {
        vals.push(sigma_term(&atoms, &blk, c, idx, n)?);
        Ok(())
    })?;
    Ok(crate::harness::stats::pairwise_sum(&vals))
}

/// Relative residual of the eigenrelation `𝒟_c 𝓑 = (Σ x_i^c) 𝓑`.
pub fn eigenrelation_check(x: &[f64], z: &[C64], c: f64) -> Result<f64> {
    check_inputs(x, z)?;
    let n = x.len();
    if n == 1 {
        // 𝒟_c is the plain shift z ↦ z + c.
        return Ok(0.0);
    }
    for i in 0..n {
        for j in i + 1..n {
            if (z[i] - z[j]).norm() <= 1e-6 {
                return Err(Error::Conditioning(format!("|z_{} − z_{}| ≤ 1e-6", i + 1, j + 1)));
            }
        }
    }
    let a: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let base = bessel(&a, z)?;
    let mut lhs = ZERO;
    for i in 0..n {
        let mut p = ONE;
        for j in 0..n {
            if j != i {
                p *= (c + z[i] - z[j]) / (z[i] - z[j]);
            }
        }
        let mut zs = z.to_vec();
        zs[i] += c;
        lhs += p * bessel(&a, &zs)?;
    }
    let eig: f64 = x.iter().map(|v| v.powf(c)).sum();
    let rhs = base * eig;
    Ok((lhs - rhs).norm() / rhs.norm())
}

/// Arguments of the large-N approximant.
#[derive(Clone, Debug)]
pub struct AsymptoticInput {
    pub mu: EmpiricalMeasure,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
}

/// The approximant 𝔅: Cauchy-determinant ratio with ψ' square roots,
/// `Π sqrt(S(v_i)/S(u_i)) e^{N(H(u_i) − H(v_i))}`, N the number of atoms.
pub fn bessel_asymptotic(input: &AsymptoticInput) -> Result<C64> {
    let mu = &input.mu;
    let n = mu.len() as f64;
    let mut v = measures::cauchy_ratio(mu, &input.u, &input.v)?;
    for (&ui, &vi) in input.u.iter().zip(&input.v) {
        let su = measures::s_transform(mu, ui)?;
        let sv = measures::s_transform(mu, vi)?;
        let hu = measures::h_eval_complex(mu, ui)?;
        let hv = measures::h_eval_complex(mu, vi)?;
        v *= (sv / su).sqrt() * (n * (hu - hv)).exp();
    }
    Ok(v)
}

/// Exact normalised Bessel function at ρ_N with the entries `N(v_i + 1)`
/// replaced by `N(u_i + 1)`; each `v_i` must lie in `{−1, …, −1/N}`.
pub fn bessel_lattice(mu: &EmpiricalMeasure, u: &[C64], v: &[f64]) -> Result<C64> {
    let n = mu.len();
    if u.len() != v.len() {
        return Err(Error::Dimension("u and v differ in length".into()));
    }
    let mut z = rho_c(n);
    let mut seen = vec![false; n];
    for (&ui, &vi) in u.iter().zip(v) {
        let i = (-vi * n as f64).round();
        if (i + vi * n as f64).abs() > 1e-9 || i < 1.0 || i > n as f64 {
            return Err(Error::Argument(format!("v={vi} is not in {{-1,…,-1/N}}")));
        }
        let i = i as usize;
        if seen[i - 1] {
            return Err(Error::Argument(format!("v={vi} repeated")));
        }
        seen[i - 1] = true;
        z[i - 1] = (ui + 1.0) * n as f64;
    }
    bessel_normalized(mu.atoms(), &z)
}

/// One row of the σ/τ comparison.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SigmaTauRow {
    pub indices: Vec<usize>,
    pub sigma: f64,
    pub tau: f64,
    pub ratio: f64,
}

/// σ and τ over index tuples with every `i_j ≤ N^{1/3}`.
pub fn sigma_tau_diagnostic(spectra: &[EmpiricalMeasure], n: usize, c: &[f64], times: &[usize]) -> Result<Vec<SigmaTauRow>> {
    check_times(times, c)?;
    let k = c.len();
    if n > 60 || k > 2 {
        return Err(Error::Cost(format!("N={n}, k={k} exceeds N ≤ 60, k ≤ 2")));
    }
    let atoms = spectra_atoms(spectra, times[0], n)?;
    let blk = blocks(times);
    let prof = measures::centering(&spectra[..times[0]], n);
    let imax = ((n as f64).cbrt() + 1e-9).floor().max(1.0) as usize;
    let centre: f64 = c.iter().zip(times).map(|(ci, &m)| ci * prof.e_n(m)).sum();
    let deltas: Vec<f64> = (0..k)
        .map(|l| 0.5 * (prof.v_n(times[l]) - prof.v_n(times.get(l + 1).copied().unwrap_or(0))))
        .collect();
    let mut rows = Vec::new();
    for_each_tuple(k, imax, |idx| {
        let sigma = sigma_term(&atoms, &blk, c, idx, n)?;
        let mut z = rho(n);
        let mut shifts = vec![0.0; n];
        let mut tau = centre.exp();
        for l in 0..k {
            let i = idx[l] - 1;
            tau *= rational_at(&z, i, c[l])?;
            shifts[i] += c[l];
            z[i] += c[l];
            tau *= Factor::Gaussian(deltas[l]).eval_shifted(&shifts)?.re;
        }
        rows.push(SigmaTauRow { indices: idx.to_vec(), sigma, tau, ratio: sigma / tau });
        Ok(())
    })?;
    Ok(rows)
}
