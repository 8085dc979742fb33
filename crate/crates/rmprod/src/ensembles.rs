//! Right-unitarily-invariant random matrices, an overflow-safe product
//! engine and Brownian motion on GL(N, ℂ).

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, C};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;

/// Independent reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }
}

/// Log squared singular values, sorted decreasing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogSpectrum {
    pub values: Vec<f64>,
    /// Total rescaling already folded into `values`.
    pub scale_offset: f64,
}

impl LogSpectrum {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n], scale_offset: 0.0 }
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Haar-distributed unitary matrix.
pub fn haar_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let mut u = Mat::identity(n, n);
    linalg::haar_apply_left(&mut u, rng);
    u
}

/// Matrix of i.i.d. standard complex Gaussians, E|g|² = 1.
pub fn ginibre<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    linalg::gaussian_matrix(rows, cols, 1.0, rng)
}

/// Square matrix carrying the singular values of a `rows × n` Ginibre
/// matrix, made right-invariant by a Haar factor.
pub fn ginibre_polar<R: rand::Rng + ?Sized>(n: usize, rows: usize, rng: &mut R) -> Result<Mat> {
    if rows < n {
        return Err(Error::Argument(format!("ginibre rows {rows} < N={n}")));
    }
    let g = ginibre(rows, n, rng);
    let r = g.qr().r();
    // R·V = (V*·R*)*, V Haar
    let mut a = r.adjoint();
    linalg::haar_apply_left(&mut a, rng);
    Ok(a.adjoint())
}

/// Top-left `n × n` corner of a Haar unitary of size `ambient`.
pub fn truncated_unitary<R: rand::Rng + ?Sized>(n: usize, ambient: usize, rng: &mut R) -> Result<Mat> {
    if ambient <= n {
        return Err(Error::Argument(format!("ambient size {ambient} must exceed N={n}")));
    }
    let mut w = Mat::zeros(ambient, n);
    for i in 0..n {
        w[(i, i)] = C::new(1.0, 0.0);
    }
    linalg::haar_apply_left(&mut w, rng);
    Ok(w.rows(0, n).into_owned())
}

/// `U·diag(√x)·V*` with independent Haar `U`, `V`.
pub fn fixed_spectrum<R: rand::Rng + ?Sized>(x: &[f64], rng: &mut R) -> Result<Mat> {
    if let Some(v) = x.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Argument(format!("squared singular value {v} is not positive")));
    }
    let n = x.len();
    let mut a = Mat::from_diagonal(&nalgebra::DVector::from_iterator(n, x.iter().map(|v| C::new(v.sqrt(), 0.0))));
    linalg::haar_apply_left(&mut a, rng);
    let mut b = a.adjoint();
    linalg::haar_apply_left(&mut b, rng);
    Ok(b.adjoint())
}

/// `diag(√x)·V*` with `V` Haar. Under left multiplication of a running
/// product the left Haar factor of [`fixed_spectrum`] is absorbed by the next
/// factor's right one, so this gives the same singular-value process.
pub fn fixed_spectrum_polar<R: rand::Rng + ?Sized>(x: &[f64], rng: &mut R) -> Result<Mat> {
    if let Some(v) = x.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Argument(format!("squared singular value {v} is not positive")));
    }
    let mut a = haar_unitary(x.len(), rng);
    for (i, v) in x.iter().enumerate() {
        let mut row = a.row_mut(i);
        row *= C::new(v.sqrt(), 0.0);
    }
    Ok(a)
}

/// `½·max(ln(max/min squared row norm), ln(max/min squared column norm))`,
/// a lower bound on `ln(σ_max/σ_min)`.
fn norm_ratio_spread(x: &Mat) -> f64 {
    let (nr, nc) = x.shape();
    let mut rows = vec![0.0f64; nr];
    let mut cols = vec![0.0f64; nc];
    for j in 0..nc {
        for i in 0..nr {
            let v = x[(i, j)].norm_sqr();
            rows[i] += v;
            cols[j] += v;
        }
    }
    let ratio = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &a| (lo.min(a), hi.max(a)));
        if lo > 0.0 { (hi / lo).ln() } else { f64::INFINITY }
    };
    0.5 * ratio(&rows).max(ratio(&cols))
}

/// Multiplies pending before a refactorisation.
pub const REFACTOR_EVERY: usize = 10;
/// Truncation tolerance of the exponential of each SDE increment; far below
/// the O(h) scheme error.
const INCREMENT_TOL: f64 = 1e-12;

/// Pending log magnitude that forces a refactorisation (nats).
pub const REFACTOR_NATS: f64 = 300.0;
/// Pending log condition number that forces a refactorisation (nats); keeps
/// the smallest singular values of the pending block accurate to ~1e-11.
pub const REFACTOR_SPREAD: f64 = 12.0;

/// Running product `X_M ⋯ X_1` kept as `B·diag(e^{d+offset})·T`, where `B` is
/// the pending product of rescaled new factors applied to an orthonormal
/// basis and `T` is a well-conditioned triangular-times-permutation factor.
#[derive(Clone, Debug)]
pub struct ProductAccumulator {
    n: usize,
    pending: Mat,
    d: Vec<f64>,
    t: Mat,
    offset: f64,
    pending_count: usize,
    pending_nats: f64,
    pending_spread: f64,
    refactor_count: usize,
    factors: usize,
}

impl ProductAccumulator {
    /// Identity product in dimension `n`.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            pending: Mat::identity(n, n),
            d: vec![0.0; n],
            t: Mat::identity(n, n),
            offset: 0.0,
            pending_count: 0,
            pending_nats: 0.0,
            pending_spread: 0.0,
            refactor_count: 0,
            factors: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn refactor_count(&self) -> usize {
        self.refactor_count
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    /// Replaces the product `P` by `X·P`, bounding the condition number of
    /// `X` from below by its row and column norm ratios.
    pub fn accumulate(&mut self, x: &Mat) -> Result<()> {
        self.accumulate_with_cond(x, norm_ratio_spread(x))
    }

    /// As [`accumulate`](Self::accumulate) with a caller-supplied
    /// `ln(σ_max/σ_min)` of `X`.
    pub fn accumulate_with_cond(&mut self, x: &Mat, log_cond: f64) -> Result<()> {
        if x.shape() != (self.n, self.n) {
            return Err(Error::Dimension(format!("factor {:?} for N={}", x.shape(), self.n)));
        }
        let f2 = linalg::frob2(x);
        if !(f2 > 0.0 && f2.is_finite()) {
            return Err(Error::Singular(format!("factor with squared Frobenius norm {f2}")));
        }
        let f = f2.sqrt();
        let mut next = linalg::matmul(x, &self.pending);
        next /= C::new(f, 0.0);
        self.pending = next;
        self.offset += f.ln();
        self.pending_count += 1;
        self.pending_nats += f2.ln().abs();
        self.pending_spread += log_cond.max(0.0);
        self.factors += 1;
        if self.pending_count >= REFACTOR_EVERY || self.pending_nats > REFACTOR_NATS || self.pending_spread > REFACTOR_SPREAD {
            self.refactor()?;
        }
        Ok(())
    }

    /// Folds the pending factors into the graded representation.
    pub fn refactor(&mut self) -> Result<()> {
        if self.pending_count == 0 {
            return Ok(());
        }
        let qr = linalg::graded_pivoted_qr(&self.pending, &self.d)?;
        let tp = Mat::from_fn(self.n, self.n, |r, c| self.t[(qr.perm[r], c)]);
        self.t = linalg::matmul(&qr.r_unit, &tp);
        // keep rows of T at unit norm; the scale goes into d
        for (i, ld) in qr.log_diag.iter().enumerate() {
            let nrm = self.t.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut row = self.t.row_mut(i);
            row /= C::new(nrm, 0.0);
            self.d[i] = ld + nrm.ln();
        }
        self.pending = qr.q;
        self.pending_count = 0;
        self.pending_nats = 0.0;
        self.pending_spread = 0.0;
        self.refactor_count += 1;
        Ok(())
    }

    fn folded(&self) -> Result<ProductAccumulator> {
        let mut c = self.clone();
        c.refactor()?;
        Ok(c)
    }

    /// Sorted log squared singular values of the product.
    pub fn log_sq_singular_values(&self) -> Result<LogSpectrum> {
        let c = self.folded()?;
        let svd = linalg::graded_jacobi_svd(&c.d, &c.t, false)?;
        Ok(LogSpectrum {
            values: svd.log_sv.iter().map(|s| 2.0 * (s + c.offset)).collect(),
            scale_offset: 2.0 * c.offset,
        })
    }

    /// `(left, log σ, right)` with the product equal to `left·diag(σ)·right`.
    pub fn factorization(&self) -> Result<(Mat, Vec<f64>, Mat)> {
        let c = self.folded()?;
        let svd = linalg::graded_jacobi_svd(&c.d, &c.t, true)?;
        let left = linalg::matmul(&c.pending, svd.left.as_ref().expect("vectors requested"));
        let log_sigma = svd.log_sv.iter().map(|s| s + c.offset).collect();
        Ok((left, log_sigma, svd.right.expect("vectors requested")))
    }
}

/// Discretisation of `dY = Y∘dW`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlScheme {
    /// `Y·exp(W_h + B_h)` with a traceless Gaussian surrogate `B_h` for the
    /// Lévy-area term (entry variance `N h²`).
    #[default]
    Magnus,
    /// Plain exponential increments `Y·exp(W_h)`.
    Geometric,
    /// Radial part sampled exactly at each output time; `step` is ignored.
    ExactRadial,
}

fn check_times(times: &[f64], step: Option<f64>) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("times must be finite, nonnegative and increasing".into()));
    }
    if let (Some(tmin), Some(step)) = (times.iter().cloned().filter(|t| *t > 0.0).reduce(f64::min), step) {
        if !(step > 0.0) || step > tmin / 10.0 {
            return Err(Error::StepSize { step, limit: tmin / 10.0 });
        }
    }
    Ok(())
}

fn substeps(gap: f64, step: f64) -> usize {
    if gap <= 0.0 {
        0
    } else {
        ((gap / step) - 1e-9).ceil().max(1.0) as usize
    }
}

fn traceless_gaussian<R: rand::Rng + ?Sized>(n: usize, var: f64, rng: &mut R) -> Mat {
    let mut b = linalg::gaussian_matrix(n, n, var, rng);
    let tr = b.trace() / n as f64;
    for i in 0..n {
        b[(i, i)] -= tr;
    }
    b
}

/// GUE with E|h_ij|² = 1 off the diagonal and unit-variance diagonal.
fn gue<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = linalg::gaussian_matrix(n, n, 1.0, rng);
    (&g + g.adjoint()) * C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

/// Exact radial increment over raw time `dt`: `diag(e^{η/2})·H` with
/// η the spectrum of `4dt·diag((N+1)/2 − i) + 2√dt·GUE` and `H` Haar.
fn radial_increment<R: rand::Rng + ?Sized>(n: usize, dt: f64, rng: &mut R) -> Mat {
    let mut h = gue(n, rng);
    h *= C::new(2.0 * dt.sqrt(), 0.0);
    for i in 0..n {
        h[(i, i)] += C::new(4.0 * dt * ((n as f64 - 1.0) / 2.0 - i as f64), 0.0);
    }
    let eta = linalg::hermitian_eigenvalues(&h);
    let mut x = haar_unitary(n, rng);
    for (i, e) in eta.iter().enumerate() {
        let mut row = x.row_mut(i);
        row *= C::new((0.5 * e).exp(), 0.0);
    }
    x
}

/// Log squared singular values of Brownian motion on GL(N, ℂ) at the
/// requested raw times, using the default scheme.
pub fn gl_brownian_path<R: rand::Rng + ?Sized>(n: usize, times: &[f64], step: f64, rng: &mut R) -> Result<Vec<LogSpectrum>> {
    gl_brownian_path_with(n, times, step, GlScheme::default(), rng)
}

/// As [`gl_brownian_path`] with an explicit scheme.
///
/// Increments multiply on the left; for i.i.d. increments whose law is
/// invariant under adjoints this gives the same singular-value process as
/// right multiplication.
pub fn gl_brownian_path_with<R: rand::Rng + ?Sized>(
    n: usize,
    times: &[f64],
    step: f64,
    scheme: GlScheme,
    rng: &mut R,
) -> Result<Vec<LogSpectrum>> {
    check_times(times, (scheme != GlScheme::ExactRadial).then_some(step))?;
    let mut acc = ProductAccumulator::new(n);
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        let gap = t - now;
        match scheme {
            GlScheme::ExactRadial => {
                if gap > 0.0 {
                    acc.accumulate(&radial_increment(n, gap, rng))?;
                }
            }
            GlScheme::Magnus | GlScheme::Geometric => {
                let k = substeps(gap, step);
                let h = if k > 0 { gap / k as f64 } else { 0.0 };
                for _ in 0..k {
                    let mut w = linalg::gaussian_matrix(n, n, 2.0 * h, rng);
                    if scheme == GlScheme::Magnus {
                        w += traceless_gaussian(n, n as f64 * h * h, rng);
                    }
                    acc.accumulate(&linalg::expm_tol(&w, INCREMENT_TOL))?;
                }
            }
        }
        now = t;
        out.push(if acc.factors() == 0 { LogSpectrum::zeros(n) } else { acc.log_sq_singular_values()? });
    }
    Ok(out)
}

/// Two Magnus-scheme paths driven by common noise: one with `step`, one
/// with `step/2`. The coarse area term is assembled from the fine ones by
/// Chen's relation, so it keeps entry variance `N h²`. Returns `(coarse, fine)`.
pub fn gl_brownian_coupled<R: rand::Rng + ?Sized>(
    n: usize,
    times: &[f64],
    step: f64,
    rng: &mut R,
) -> Result<(Vec<LogSpectrum>, Vec<LogSpectrum>)> {
    check_times(times, Some(step))?;
    let mut coarse = ProductAccumulator::new(n);
    let mut fine = ProductAccumulator::new(n);
    let (mut oc, mut of) = (Vec::new(), Vec::new());
    let mut now = 0.0;
    let nf = n as f64;
    for &t in times {
        let gap = t - now;
        let k = substeps(gap, step);
        let h = if k > 0 { gap / k as f64 } else { 0.0 };
        let hf = 0.5 * h;
        for _ in 0..k {
            let w1 = linalg::gaussian_matrix(n, n, 2.0 * hf, rng);
            let w2 = linalg::gaussian_matrix(n, n, 2.0 * hf, rng);
            let b1 = traceless_gaussian(n, nf * hf * hf, rng);
            let b2 = traceless_gaussian(n, nf * hf * hf, rng);
            // Chen: the area over the full step is the two half-step areas plus ½[W₁, W₂]
            let comm = linalg::matmul(&w1, &w2) - linalg::matmul(&w2, &w1);
            fine.accumulate(&linalg::expm_tol(&(&w1 + &b1), INCREMENT_TOL))?;
            fine.accumulate(&linalg::expm_tol(&(&w2 + &b2), INCREMENT_TOL))?;
            coarse.accumulate(&linalg::expm_tol(&(w1 + w2 + b1 + b2 + comm * C::new(0.5, 0.0)), INCREMENT_TOL))?;
        }
        now = t;
        let read = |a: &ProductAccumulator| if a.factors() == 0 { Ok(LogSpectrum::zeros(n)) } else { a.log_sq_singular_values() };
        oc.push(read(&coarse)?);
        of.push(read(&fine)?);
    }
    Ok((oc, of))
}

/// One CSV row of a spectrum batch.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpectrumRow {
    pub replica: usize,
    pub time: f64,
    pub j: usize,
    pub value: f64,
}

/// Writes `(replica, time, spectrum)` triples as CSV with columns
/// `replica,time,j,value` (`j` 1-based).
pub fn write_spectra_csv<W: Write>(w: W, batch: &[(usize, f64, &LogSpectrum)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io { path: "<csv>".into(), msg: e.to_string() };
    for &(replica, time, spec) in batch {
        for (j, &value) in spec.values.iter().enumerate() {
            wr.serialize(SpectrumRow { replica, time, j: j + 1, value }).map_err(io)?;
        }
    }
    wr.flush().map_err(|e| Error::Io { path: "<csv>".into(), msg: e.to_string() })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(a: &Mat) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = RngStream::new(1, 0).rng();
        for n in [1, 4, 17] {
            let u = haar_unitary(n, &mut rng);
            assert!(max_abs(&(u.adjoint() * &u - Mat::identity(n, n))) < 1e-12);
        }
    }

    #[test]
    fn streams_reproduce_and_differ() {
        use rand::Rng;
        let a: u64 = RngStream::new(5, 3).rng().random();
        let b: u64 = RngStream::new(5, 3).rng().random();
        let c: u64 = RngStream::new(5, 4).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn haar_one_by_one_has_uniform_phase() {
        let mut rng = RngStream::new(2, 0).rng();
        let m = 100_000;
        let s: C = (0..m).map(|_| haar_unitary(1, &mut rng)[(0, 0)]).sum();
        assert!((s / m as f64).norm() <= 3.0 / (m as f64).sqrt());
    }

    #[test]
    fn ginibre_moments() {
        let mut rng = RngStream::new(3, 0).rng();
        let g = ginibre(1000, 1000, &mut rng);
        let m = g.len() as f64;
        let p: Vec<f64> = g.iter().map(|z| z.norm_sqr()).collect();
        let mean = p.iter().sum::<f64>() / m;
        let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!((mean - 1.0).abs() <= 3.0 * (var / m).sqrt());
        let mu: C = g.iter().sum::<C>() / m;
        assert!(mu.norm() <= 3.0 * (1.0 / m).sqrt());
    }

    #[test]
    fn truncated_corner_laws() {
        let mut rng = RngStream::new(4, 0).rng();
        let u = truncated_unitary(6, 9, &mut rng).unwrap();
        let sv = linalg::dense_log_sq_singular_values(&u);
        assert!(sv.iter().all(|v| v.exp() <= 1.0 + 1e-12));
        let m = 100_000;
        let s: Vec<f64> = (0..m).map(|_| truncated_unitary(1, 2, &mut rng).unwrap()[(0, 0)].norm_sqr()).collect();
        let mean = s.iter().sum::<f64>() / m as f64;
        assert!((mean - 0.5).abs() <= 3.0 * (1.0 / 12.0 / m as f64).sqrt());
        assert!(truncated_unitary(3, 3, &mut rng).is_err());
    }

    #[test]
    fn row_graded_factor_is_resolved() {
        // diag(e^{η/2})·H spans 100 nats, as a radial increment at N=100 does.
        let n = 100;
        let mut rng = RngStream::new(8, 0).rng();
        let eta: Vec<f64> = (0..n).map(|i| 50.0 - i as f64 + 0.3 * (i as f64).sin()).collect();
        for reps in [1, 3] {
            let mut acc = ProductAccumulator::new(n);
            for _ in 0..reps {
                let mut x = haar_unitary(n, &mut rng);
                for (i, e) in eta.iter().enumerate() {
                    let mut row = x.row_mut(i);
                    row *= C::new((0.5 * e).exp(), 0.0);
                }
                acc.accumulate(&x).unwrap();
            }
            if reps == 1 {
                let got = acc.log_sq_singular_values().unwrap();
                for (g, w) in got.values.iter().zip(&eta) {
                    assert!((g - w).abs() < 1e-9, "{g} {w}");
                }
            } else {
                let got = acc.log_sq_singular_values().unwrap();
                assert!(got.values.windows(2).all(|w| w[0] > w[1]));
                assert!((got.sum() - 3.0 * eta.iter().sum::<f64>()).abs() < 1e-8 * got.sum().abs());
            }
        }
    }

    #[test]
    fn fixed_spectrum_has_requested_singular_values() {
        let mut rng = RngStream::new(5, 0).rng();
        let x = [3.0f64, 0.2, 1.5, 0.7];
        let mut want: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for a in [fixed_spectrum(&x, &mut rng).unwrap(), fixed_spectrum_polar(&x, &mut rng).unwrap()] {
            for (g, w) in linalg::dense_log_sq_singular_values(&a).iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ginibre_polar_matches_rectangular_singular_values() {
        let mut r1 = RngStream::new(6, 0).rng();
        let a = ginibre_polar(5, 8, &mut r1).unwrap();
        let mut r2 = RngStream::new(6, 0).rng();
        let g = ginibre(8, 5, &mut r2);
        let sa = linalg::dense_log_sq_singular_values(&a);
        let sg = linalg::dense_log_sq_singular_values(&g);
        for (x, y) in sa.iter().zip(&sg) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn accumulator_identity_and_diagonal() {
        let mut acc = ProductAccumulator::new(4);
        for _ in 0..50 {
            acc.accumulate(&Mat::identity(4, 4)).unwrap();
        }
        assert!(acc.log_sq_singular_values().unwrap().values.iter().all(|v| v.abs() < 1e-12));
        let mut acc = ProductAccumulator::new(3);
        let mut want = [0.0f64; 3];
        for m in 0..40 {
            let d = [1.0 + 0.1 * (m % 3) as f64, 0.5 + 0.01 * m as f64, 2.0 + (m as f64).sin()];
            for i in 0..3 {
                want[i] += (d[i] * d[i]).ln();
            }
            acc.accumulate(&Mat::from_diagonal(&nalgebra::DVector::from_iterator(3, d.iter().map(|v| C::new(*v, 0.0))))).unwrap();
        }
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let got = acc.log_sq_singular_values().unwrap();
        for (g, w) in got.values.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} {w}");
        }
    }

    #[test]
    fn accumulator_matches_dense_product_and_reconstructs() {
        let mut rng = RngStream::new(7, 0).rng();
        let n = 8;
        let mut acc = ProductAccumulator::new(n);
        let mut dense = Mat::identity(n, n);
        for m in 0..15 {
            let atoms: Vec<f64> = (0..n).map(|i| 0.5 + 1.5 * ((i + m) % n) as f64 / (n - 1) as f64).collect();
            let x = fixed_spectrum(&atoms, &mut rng).unwrap();
            dense = &x * dense;
            acc.accumulate(&x).unwrap();
        }
        let got = acc.log_sq_singular_values().unwrap();
        let want = linalg::dense_log_sq_singular_values(&dense);
        for (g, w) in got.values.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8 * w.abs().max(1.0), "{g} {w}");
        }
        let (l, s, r) = acc.factorization().unwrap();
        let sig = Mat::from_diagonal(&nalgebra::DVector::from_iterator(n, s.iter().map(|v| C::new(v.exp(), 0.0))));
        let rec = l * sig * r;
        assert!(max_abs(&(rec - &dense)) < 1e-9 * max_abs(&dense));
    }

    #[test]
    fn accumulator_rejects_zero_factor() {
        let mut acc = ProductAccumulator::new(3);
        assert!(acc.accumulate(&Mat::zeros(3, 3)).is_err());
        assert!(acc.accumulate(&Mat::identity(2, 2)).is_err());
    }

    #[test]
    fn brownian_zero_time_and_ordering() {
        let mut rng = RngStream::new(8, 0).rng();
        let p = gl_brownian_path(5, &[0.0, 0.05, 0.1], 0.005, &mut rng).unwrap();
        assert!(p[0].values.iter().all(|v| *v == 0.0));
        for s in &p {
            assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
        }
        assert!(matches!(gl_brownian_path(5, &[0.1], 0.02, &mut rng), Err(Error::StepSize { .. })));
    }

    #[test]
    fn radial_increment_has_gaussian_log_det() {
        // Σ ξ_j(t) = 2 Re tr W(t) has mean 0 and variance 4Nt.
        let mut rng = RngStream::new(9, 0).rng();
        let (n, t, m) = (6, 0.3, 4000);
        let s: Vec<f64> = (0..m)
            .map(|_| gl_brownian_path_with(n, &[t], t / 10.0, GlScheme::ExactRadial, &mut rng).unwrap()[0].sum())
            .collect();
        let mean = s.iter().sum::<f64>() / m as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let want = 4.0 * n as f64 * t;
        assert!(mean.abs() <= 3.0 * (want / m as f64).sqrt());
        assert!((var - want).abs() <= 3.0 * want * (2.0 / m as f64).sqrt());
    }

    #[test]
    fn csv_layout() {
        let s = LogSpectrum { values: vec![1.5, -0.5], scale_offset: 0.0 };
        let mut buf = Vec::new();
        write_spectra_csv(&mut buf, &[(0, 0.25, &s)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "replica,time,j,value\n0,0.25,1,1.5\n0,0.25,2,-0.5\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sample(kind: u8, n: usize, rng: &mut ChaCha8Rng) -> Mat {
            match kind {
                0 => fixed_spectrum(&(0..n).map(|i| 0.3 + i as f64).collect::<Vec<_>>(), rng).unwrap(),
                1 => ginibre_polar(n, n + 2, rng).unwrap(),
                2 => truncated_unitary(n, 2 * n + 1, rng).unwrap(),
                _ => haar_unitary(n, rng),
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn determinant_identity_for_every_sampler(
                kinds in prop::collection::vec(0u8..4, 1..40),
                n in 1usize..8,
                seed in any::<u64>(),
            ) {
                let mut rng = RngStream::new(seed, 0).rng();
                let mut acc = ProductAccumulator::new(n);
                let mut want = 0.0;
                for &k in &kinds {
                    let x = sample(k, n, &mut rng);
                    want += 2.0 * linalg::log_abs_det(&x);
                    acc.accumulate(&x).unwrap();
                }
                let s = acc.log_sq_singular_values().unwrap();
                prop_assert!((s.sum() - want).abs() <= 1e-9 * want.abs().max(1.0), "{} {want}", s.sum());
                prop_assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
            }

            #[test]
            fn same_stream_reproduces(seed in any::<u64>(), id in 0u64..1000) {
                let a = sample(1, 4, &mut RngStream::new(seed, id).rng());
                let b = sample(1, 4, &mut RngStream::new(seed, id).rng());
                prop_assert_eq!(a, b);
            }
        }
    }
}
