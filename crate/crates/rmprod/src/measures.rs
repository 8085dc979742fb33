//! Discrete probability measures on the positive reals and their transforms:
//! ψ, its inverse, the S-transform, the exponent H, cumulants, the
//! Cauchy-determinant ratio and the centering sequences of a product.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Lower bound on Re u accepted by the inverse of ψ (distance to −1).
pub const U_MIN_OFFSET: f64 = 1e-9;
/// Upper bound on Re u accepted by the inverse of ψ.
pub const U_MAX_RE: f64 = 0.1;
/// Bound on |Im u| accepted by the inverse of ψ.
pub const U_MAX_IM: f64 = 0.1;
/// Below this modulus S is evaluated from its Taylor expansion at 0.
const S_SERIES_RADIUS: f64 = 1e-7;
/// Resolution of the fixed-point centering accumulator (2⁻⁴⁰ nats).
const CENTER_QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

/// Atoms `x_i > 0` with weights `w_i > 0` summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    atoms: Vec<f64>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl TryFrom<RawMeasure> for EmpiricalMeasure {
    type Error = Error;
    fn try_from(r: RawMeasure) -> Result<Self> {
        match r.weights {
            Some(w) => EmpiricalMeasure::new(r.atoms, w),
            None => EmpiricalMeasure::uniform(r.atoms),
        }
    }
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(a) = atoms.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidMeasure(format!("atom {a} is not a positive finite real")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(Self { atoms, weights })
    }

    /// Uniform weights 1/n.
    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let n = atoms.len().max(1);
        let w = vec![1.0 / n as f64; atoms.len()];
        Self::new(atoms, w)
    }

    /// Two or more atoms with given multiplicities out of `n` total.
    pub fn with_multiplicities(atoms: &[f64], counts: &[usize]) -> Result<Self> {
        let mut xs = Vec::new();
        for (&a, &c) in atoms.iter().zip(counts) {
            xs.extend(std::iter::repeat_n(a, c));
        }
        Self::uniform(xs)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Pushforward under x ↦ c·x.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.atoms.iter().map(|a| a * c).collect(), self.weights.clone())
    }

    /// The common atom if the measure is a point mass.
    pub fn point_mass(&self) -> Option<f64> {
        let a0 = self.atoms[0];
        self.atoms.iter().all(|&a| a == a0).then_some(a0)
    }

    /// Whether every atom lies in `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.atoms.iter().all(|&a| a >= lo && a <= hi)
    }

    fn x_max(&self) -> f64 {
        self.atoms.iter().cloned().fold(0.0, f64::max)
    }
}

/// Mean, variance and raw moments of a measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cumulants {
    pub kappa1: f64,
    pub kappa2: f64,
    pub m2: f64,
    pub m3: f64,
}

pub fn cumulants(mu: &EmpiricalMeasure) -> Cumulants {
    let (mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0);
    for (&x, &w) in mu.atoms.iter().zip(&mu.weights) {
        m1 += w * x;
        m2 += w * x * x;
        m3 += w * x * x * x;
    }
    let kappa2 = if mu.point_mass().is_some() {
        0.0
    } else {
        mu.atoms
            .iter()
            .zip(&mu.weights)
            .map(|(&x, &w)| w * (x - m1) * (x - m1))
            .sum::<f64>()
            .max(0.0)
    };
    Cumulants { kappa1: m1, kappa2, m2, m3 }
}

fn check_poles(mu: &EmpiricalMeasure, z: C64) -> Result<()> {
    for &x in &mu.atoms {
        if (C64::new(1.0, 0.0) - z * x).norm() < 1e-12 {
            return Err(Error::PoleProximity { z: format!("{z}") });
        }
    }
    Ok(())
}

/// ψ(z) = Σ w·zx/(1 − zx).
pub fn psi_eval(mu: &EmpiricalMeasure, z: C64) -> Result<C64> {
    check_poles(mu, z)?;
    Ok(psi_raw(mu, z))
}

fn psi_raw(mu: &EmpiricalMeasure, z: C64) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for (&x, &w) in mu.atoms.iter().zip(&mu.weights) {
        let zx = z * x;
        s += w * zx / (1.0 - zx);
    }
    s
}

/// ψ'(z) = Σ w·x/(1 − zx)².
pub fn psi_prime(mu: &EmpiricalMeasure, z: C64) -> Result<C64> {
    check_poles(mu, z)?;
    Ok(psi_prime_raw(mu, z))
}

fn psi_prime_raw(mu: &EmpiricalMeasure, z: C64) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for (&x, &w) in mu.atoms.iter().zip(&mu.weights) {
        let d = 1.0 - z * x;
        s += w * x / (d * d);
    }
    s
}

/// Divided difference (ψ(a) − ψ(b))/(a − b) = Σ w·x/((1 − ax)(1 − bx)),
/// exact at a = b.
fn psi_divided_difference(mu: &EmpiricalMeasure, a: C64, b: C64) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for (&x, &w) in mu.atoms.iter().zip(&mu.weights) {
        s += w * x / ((1.0 - a * x) * (1.0 - b * x));
    }
    s
}

fn check_domain(u: C64) -> Result<()> {
    let ok = u.re > -1.0 + U_MIN_OFFSET && u.re < U_MAX_RE && u.im.abs() <= U_MAX_IM;
    if ok && u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { u: format!("{u}") })
    }
}

/// Real inverse by bracketing then safeguarded Newton.
fn psi_inverse_real(mu: &EmpiricalMeasure, u: f64) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.0);
    }
    if let Some(c) = mu.point_mass() {
        return Ok(u / (c * (1.0 + u)));
    }
    let f = |z: f64| psi_raw(mu, C64::new(z, 0.0)).re - u;
    let (mut lo, mut hi) = if u < 0.0 {
        let mut lo = -1.0 / mu.x_max();
        let mut k = 0;
        while f(lo) > 0.0 {
            lo *= 2.0;
            k += 1;
            if k > 200 {
                return Err(Error::NonConvergence("could not bracket the inverse of psi".into()));
            }
        }
        (lo, 0.0)
    } else {
        (0.0, (1.0 - 1e-13) / mu.x_max())
    };
    let mut z = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fz = f(z);
        if fz == 0.0 {
            return Ok(z);
        }
        if fz < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let d = psi_prime_raw(mu, C64::new(z, 0.0)).re;
        let mut zn = z - fz / d;
        if !(zn > lo && zn < hi) {
            zn = 0.5 * (lo + hi);
        }
        let step = (zn - z).abs();
        z = zn;
        if step <= 4.0 * f64::EPSILON * z.abs() || hi - lo <= 4.0 * f64::EPSILON * z.abs() {
            break;
        }
    }
    // Final Newton polish without bracket constraints.
    for _ in 0..3 {
        let fz = f(z);
        let d = psi_prime_raw(mu, C64::new(z, 0.0)).re;
        let zn = z - fz / d;
        if zn.is_finite() && (zn > lo - (hi - lo)) {
            z = zn;
        }
    }
    if (f(z)).abs() > 1e-12 * u.abs().max(1e-300).max(1e-12f64.min(1.0)) && (f(z)).abs() > 1e-12 {
        return Err(Error::NonConvergence(format!("residual {:e} at u={u}", f(z))));
    }
    Ok(z)
}

/// ψ⁻¹(u) together with log ψ'(ψ⁻¹(u)) on the branch continued from the
/// real axis along the vertical segment from Re u.
pub fn psi_inverse_tracked(mu: &EmpiricalMeasure, u: C64) -> Result<(C64, C64)> {
    check_domain(u)?;
    if let Some(c) = mu.point_mass() {
        let z = u / (c * (1.0 + u));
        // ψ'(z) = c(1+u)²
        let lp = C64::new(c.ln(), 0.0) + 2.0 * (1.0 + u).ln();
        return Ok((z, lp));
    }
    let z0 = psi_inverse_real(mu, u.re)?;
    let lp0 = C64::new(psi_prime_raw(mu, C64::new(z0, 0.0)).re.ln(), 0.0);
    if u.im == 0.0 {
        return Ok((C64::new(z0, 0.0), lp0));
    }
    let mut steps = 4usize;
    'outer: while steps <= 256 {
        let mut z = C64::new(z0, 0.0);
        let mut lp = lp0;
        let mut prev = psi_prime_raw(mu, z);
        for s in 1..=steps {
            let target = C64::new(u.re, u.im * s as f64 / steps as f64);
            let mut ok = false;
            for _ in 0..60 {
                let r = psi_raw(mu, z) - target;
                // far from the origin ψ' is small and z cannot move below roundoff in r
                if r.norm() <= 4.0 * f64::EPSILON {
                    ok = true;
                    break;
                }
                let d = psi_prime_raw(mu, z);
                let dz = r / d;
                z -= dz;
                if dz.norm() <= 1e-15 * z.norm().max(1e-300) || r.norm() == 0.0 {
                    ok = true;
                    break;
                }
            }
            if !ok || !z.is_finite() {
                steps *= 2;
                continue 'outer;
            }
            let cur = psi_prime_raw(mu, z);
            // Continuous argument: add the principal increment.
            let inc = (cur / prev).ln();
            if inc.im.abs() > 1.0 {
                steps *= 2;
                continue 'outer;
            }
            lp += inc;
            prev = cur;
        }
        let res = (psi_raw(mu, z) - u).norm();
        if res > 1e-12 {
            return Err(Error::NonConvergence(format!("complex inverse residual {res:e}")));
        }
        // Re-anchor the modulus exactly; keep the tracked argument.
        let m = psi_prime_raw(mu, z);
        return Ok((z, C64::new(m.norm().ln(), lp.im)));
    }
    Err(Error::NonConvergence(format!("continuation failed at u={u}")))
}

/// ψ⁻¹(u) on the neighbourhood of (−1, 0].
pub fn psi_inverse(mu: &EmpiricalMeasure, u: C64) -> Result<C64> {
    Ok(psi_inverse_tracked(mu, u)?.0)
}

/// S(0), S'(0), S''(0) in closed form.
pub fn s_derivs_at_zero(mu: &EmpiricalMeasure) -> (f64, f64, f64) {
    if let Some(c) = mu.point_mass() {
        return (1.0 / c, 0.0, 0.0);
    }
    let k = cumulants(mu);
    let m1 = k.kappa1;
    let s0 = 1.0 / m1;
    let s1 = -k.kappa2 / m1.powi(3);
    let s2 = 4.0 * k.m2 * k.m2 / m1.powi(5) - 2.0 * k.m3 / m1.powi(4) - 2.0 * k.m2 / m1.powi(3);
    (s0, s1, s2)
}

/// S(u) = (1+u)/u · ψ⁻¹(u), with the removable point u = 0.
pub fn s_transform(mu: &EmpiricalMeasure, u: C64) -> Result<C64> {
    if let Some(c) = mu.point_mass() {
        check_domain(u)?;
        return Ok(C64::new(1.0 / c, 0.0));
    }
    if u.norm() < S_SERIES_RADIUS {
        let (s0, s1, s2) = s_derivs_at_zero(mu);
        return Ok(s0 + s1 * u + 0.5 * s2 * u * u);
    }
    let z = psi_inverse(mu, u)?;
    Ok((1.0 + u) / u * z)
}

fn s_real(mu: &EmpiricalMeasure, u: f64) -> Result<f64> {
    Ok(s_transform(mu, C64::new(u, 0.0))?.re)
}

/// H(u) = −(u+1) log S(u) − Σ w log((u+1)/S(u) − u·x) for real u.
pub fn h_eval(mu: &EmpiricalMeasure, u: f64) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.0);
    }
    if let Some(c) = mu.point_mass() {
        check_domain(C64::new(u, 0.0))?;
        return Ok(u * c.ln());
    }
    let s = s_real(mu, u)?;
    let mut h = -(u + 1.0) * s.ln();
    for (&x, &w) in mu.atoms.iter().zip(&mu.weights) {
        let arg = (u + 1.0) / s - u * x;
        if !(arg > 0.0) {
            return Err(Error::Branch(format!("log argument {arg} at u={u}, x={x}")));
        }
        h -= w * arg.ln();
    }
    Ok(h)
}

/// H for complex u near the real segment, principal logarithms.
pub fn h_eval_complex(mu: &EmpiricalMeasure, u: C64) -> Result<C64> {
    if u.im == 0.0 {
        return Ok(C64::new(h_eval(mu, u.re)?, 0.0));
    }
    if let Some(c) = mu.point_mass() {
        check_domain(u)?;
        return Ok(u * c.ln());
    }
    let s = s_transform(mu, u)?;
    let mut h = -(u + 1.0) * s.ln();
    for (&x, &w) in mu.atoms.iter().zip(&mu.weights) {
        let arg = (u + 1.0) / s - u * x;
        if arg.re <= 0.0 {
            return Err(Error::Branch(format!("log argument {arg} at u={u}, x={x}")));
        }
        h -= w * arg.ln();
    }
    Ok(h)
}

/// H'(u) = −log S(u).
pub fn h_prime(mu: &EmpiricalMeasure, u: f64) -> Result<f64> {
    let s = s_real(mu, u)?;
    if !(s > 0.0) {
        return Err(Error::Branch(format!("S({u}) = {s}")));
    }
    Ok(-s.ln())
}

/// Ratio of Cauchy determinants with the ψ' square-root normalisation.
///
/// Computed through the pairwise factors
/// `C(a,b) = (a − b)/(ψ⁻¹(a) − ψ⁻¹(b)) / sqrt(ψ'(ψ⁻¹(a)) ψ'(ψ⁻¹(b)))`,
/// whose first quotient is the divided difference of ψ and therefore exact
/// when points coincide.
pub fn cauchy_ratio(mu: &EmpiricalMeasure, u: &[C64], v: &[C64]) -> Result<C64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::Dimension(format!("|u|={} |v|={}", u.len(), v.len())));
    }
    for &p in u.iter().chain(v) {
        check_domain(p)?;
    }
    if mu.point_mass().is_some() {
        return Ok(C64::new(1.0, 0.0));
    }
    let tu: Vec<(C64, C64)> = u.iter().map(|&p| psi_inverse_tracked(mu, p)).collect::<Result<_>>()?;
    let tv: Vec<(C64, C64)> = v.iter().map(|&p| psi_inverse_tracked(mu, p)).collect::<Result<_>>()?;
    let cf = |a: &(C64, C64), b: &(C64, C64)| -> Result<C64> {
        let dd = psi_divided_difference(mu, a.0, b.0);
        if dd.norm() == 0.0 || !dd.is_finite() {
            return Err(Error::Singular("vanishing divided difference of psi".into()));
        }
        Ok((-0.5 * (a.1 + b.1)).exp() * dd)
    };
    let k = u.len();
    let mut r = C64::new(1.0, 0.0);
    for i in 0..k {
        r *= cf(&tu[i], &tv[i])?;
        for j in i + 1..k {
            r *= cf(&tu[i], &tv[j])? * cf(&tv[i], &tu[j])? / (cf(&tu[i], &tu[j])? * cf(&tv[i], &tv[j])?);
        }
    }
    Ok(r)
}

/// Prefix sums E_N(M) = Σ_{m≤M} log κ₁(μ_m) and V_N(M) = (1/N) Σ_{m≤M} κ₂/κ₁².
///
/// Each summand is rounded to a multiple of 2⁻⁴⁰ and the sums are kept as
/// integers, so concatenated products add exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteringProfile {
    e_q: Vec<i64>,
    v_q: Vec<i64>,
    n: usize,
}

fn quantize(x: f64) -> i64 {
    (x / CENTER_QUANTUM).round() as i64
}

impl CenteringProfile {
    /// E_N(M) in nats.
    pub fn e_n(&self, m: usize) -> f64 {
        self.e_q[m] as f64 * CENTER_QUANTUM
    }
    /// V_N(M).
    pub fn v_n(&self, m: usize) -> f64 {
        self.v_q[m] as f64 * CENTER_QUANTUM
    }
    /// Number of factors covered.
    pub fn len(&self) -> usize {
        self.e_q.len() - 1
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn e_all(&self) -> Vec<f64> {
        (0..=self.len()).map(|m| self.e_n(m)).collect()
    }
    pub fn v_all(&self) -> Vec<f64> {
        (0..=self.len()).map(|m| self.v_n(m)).collect()
    }
    /// Matrix size the profile was built for.
    pub fn n(&self) -> usize {
        self.n
    }
}

/// Centering sequences for a product of factors with the given spectra.
pub fn centering(measures: &[EmpiricalMeasure], n: usize) -> CenteringProfile {
    let pairs: Vec<(f64, f64)> = measures
        .iter()
        .map(|mu| {
            let k = cumulants(mu);
            (k.kappa1.ln(), k.kappa2 / (k.kappa1 * k.kappa1))
        })
        .collect();
    centering_from_cumulants(&pairs, n)
}

/// Centering sequences from per-factor (log κ₁, κ₂/κ₁²) pairs.
pub fn centering_from_cumulants(pairs: &[(f64, f64)], n: usize) -> CenteringProfile {
    let mut e_q = Vec::with_capacity(pairs.len() + 1);
    let mut v_q = Vec::with_capacity(pairs.len() + 1);
    e_q.push(0i64);
    v_q.push(0i64);
    let (mut e, mut v) = (0i64, 0i64);
    for &(le, r) in pairs {
        e += quantize(le);
        v += quantize(r / n as f64);
        e_q.push(e);
        v_q.push(v);
    }
    CenteringProfile { e_q, v_q, n }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn two_point() -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(vec![1.0, 2.0]).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(EmpiricalMeasure::uniform(vec![]).is_err());
        assert!(EmpiricalMeasure::uniform(vec![1.0, -1.0]).is_err());
        assert!(EmpiricalMeasure::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        let m: EmpiricalMeasure = serde_json::from_str(r#"{"atoms":[1,2]}"#).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert!(serde_json::from_str::<EmpiricalMeasure>(r#"{"atoms":[1,2],"weights":[1,1]}"#).is_err());
    }

    #[test]
    fn cumulant_examples() {
        let d1 = EmpiricalMeasure::uniform(vec![1.0]).unwrap();
        let k = cumulants(&d1);
        assert_eq!((k.kappa1, k.kappa2), (1.0, 0.0));
        let k = cumulants(&two_point());
        assert!((k.kappa1 - 1.5).abs() < 1e-15 && (k.kappa2 - 0.25).abs() < 1e-15);
        let k = cumulants(&EmpiricalMeasure::uniform(vec![0.5, 2.0]).unwrap());
        assert!((k.kappa2 / (k.kappa1 * k.kappa1) - 0.36).abs() < 1e-14);
    }

    #[test]
    fn psi_examples() {
        let d1 = EmpiricalMeasure::uniform(vec![1.0]).unwrap();
        assert!((psi_eval(&d1, re(-1.0)).unwrap() - re(-0.5)).norm() < 1e-15);
        assert_eq!(psi_eval(&two_point(), re(0.0)).unwrap(), re(0.0));
        assert!((psi_eval(&two_point(), re(-1.0)).unwrap() - re(-7.0 / 12.0)).norm() < 1e-15);
        assert!((psi_prime(&d1, re(0.0)).unwrap() - re(1.0)).norm() < 1e-15);
        assert!((psi_prime(&d1, re(-1.0)).unwrap() - re(0.25)).norm() < 1e-15);
        assert!((psi_prime(&two_point(), re(0.0)).unwrap() - re(1.5)).norm() < 1e-15);
        assert!(matches!(psi_eval(&d1, re(1.0)), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn inverse_examples() {
        let d1 = EmpiricalMeasure::uniform(vec![1.0]).unwrap();
        assert_eq!(psi_inverse(&two_point(), re(0.0)).unwrap(), re(0.0));
        assert!((psi_inverse(&d1, re(-0.5)).unwrap() - re(-1.0)).norm() < 1e-15);
        assert!((psi_inverse(&two_point(), re(-7.0 / 12.0)).unwrap() - re(-1.0)).norm() < 1e-12);
        assert!(psi_inverse(&two_point(), re(-1.0)).is_err());
        assert!(psi_inverse(&two_point(), C64::new(-0.5, 0.2)).is_err());
        // positive side up to 0.1
        let z = psi_inverse(&two_point(), re(0.05)).unwrap();
        assert!((psi_eval(&two_point(), z).unwrap() - re(0.05)).norm() < 1e-13);
    }

    #[test]
    fn complex_inverse_round_trip_and_conjugation() {
        let mu = EmpiricalMeasure::uniform(vec![0.5, 0.9, 1.7, 2.0]).unwrap();
        for &(a, b) in &[(-0.3, 0.05), (-0.95, -0.1), (0.05, 0.09), (-0.01, 0.001), (-0.925, -0.0248), (-0.99, 0.09)] {
            let u = C64::new(a, b);
            let z = psi_inverse(&mu, u).unwrap();
            assert!((psi_eval(&mu, z).unwrap() - u).norm() < 1e-12);
            let zc = psi_inverse(&mu, u.conj()).unwrap();
            assert!((zc - z.conj()).norm() < 1e-12 * z.norm().max(1.0));
        }
    }

    #[test]
    fn s_transform_examples() {
        let d = EmpiricalMeasure::uniform(vec![2.5; 3]).unwrap();
        for &u in &[-0.9, -0.3, 0.0, 0.05] {
            assert_eq!(s_transform(&d, re(u)).unwrap(), re(0.4));
        }
        let m = two_point();
        assert!((s_transform(&m, re(0.0)).unwrap() - re(2.0 / 3.0)).norm() < 1e-15);
        // Near −1 the value tends to ∫x⁻¹dμ = 3/4.
        let s = s_transform(&m, re(-1.0 + 1e-8)).unwrap();
        assert!((s.re - 0.75).abs() < 1e-6);
        let (s0, s1, s2) = s_derivs_at_zero(&EmpiricalMeasure::uniform(vec![2.0]).unwrap());
        assert_eq!((s0, s1, s2), (0.5, 0.0, 0.0));
        let (_, s1, _) = s_derivs_at_zero(&m);
        assert!((s1 + 2.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn s_series_agrees_with_direct_quotient() {
        let m = EmpiricalMeasure::uniform(vec![0.6, 1.1, 1.9]).unwrap();
        for &u in &[0.9e-7, -0.9e-7] {
            let series = s_transform(&m, re(u)).unwrap();
            let direct = (1.0 + u) / u * psi_inverse(&m, re(u)).unwrap();
            assert!((series - direct).norm() < 1e-8 * series.norm());
        }
    }

    #[test]
    fn h_examples() {
        let m = two_point();
        assert_eq!(h_eval(&m, 0.0).unwrap(), 0.0);
        let d = EmpiricalMeasure::uniform(vec![3.0]).unwrap();
        assert!((h_eval(&d, -0.4).unwrap() - (-0.4 * 3f64.ln())).abs() < 1e-15);
        let d1 = EmpiricalMeasure::uniform(vec![1.0]).unwrap();
        assert_eq!(h_eval(&d1, -0.5).unwrap(), 0.0);
        assert!((h_prime(&d, -0.2).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!((h_prime(&m, 0.0).unwrap() + (2.0f64 / 3.0).ln()).abs() < 1e-15);
        // H at small nonzero u is O(u²) away from u·H'(0).
        let h = h_eval(&m, -1e-4).unwrap();
        assert!((h - (-1e-4) * h_prime(&m, 0.0).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn cauchy_examples() {
        let m = two_point();
        let u = [C64::new(-0.4, 0.02)];
        assert!((cauchy_ratio(&m, &u, &u).unwrap() - re(1.0)).norm() < 1e-14);
        let d1 = EmpiricalMeasure::uniform(vec![1.0]).unwrap();
        assert_eq!(cauchy_ratio(&d1, &[re(-0.2)], &[re(-0.1)]).unwrap(), re(1.0));
    }

    #[test]
    fn cauchy_k1_against_direct_formula() {
        // Oracle: the defining quotient evaluated directly for separated points.
        let m = EmpiricalMeasure::uniform(vec![0.5, 1.0, 2.0]).unwrap();
        let (a, b) = (re(-0.7), re(-0.2));
        let za = psi_inverse(&m, a).unwrap();
        let zb = psi_inverse(&m, b).unwrap();
        let direct = (a - b) / (za - zb) / (psi_prime(&m, za).unwrap() * psi_prime(&m, zb).unwrap()).sqrt();
        let got = cauchy_ratio(&m, &[a], &[b]).unwrap();
        assert!((got - direct).norm() < 1e-12);
    }

    #[test]
    fn cauchy_k2_against_determinants() {
        // Oracle: 2×2 Cauchy determinants built directly.
        let m = EmpiricalMeasure::uniform(vec![0.5, 1.0, 2.0, 1.3]).unwrap();
        let u = [C64::new(-0.7, 0.03), re(-0.25)];
        let v = [re(-0.6), C64::new(-0.1, -0.02)];
        let zu: Vec<C64> = u.iter().map(|&p| psi_inverse(&m, p).unwrap()).collect();
        let zv: Vec<C64> = v.iter().map(|&p| psi_inverse(&m, p).unwrap()).collect();
        let det2 = |f: &dyn Fn(usize, usize) -> C64| f(0, 0) * f(1, 1) - f(0, 1) * f(1, 0);
        let num = det2(&|i, j| 1.0 / (zu[i] - zv[j]));
        let den = det2(&|i, j| 1.0 / (u[i] - v[j]));
        let mut pr = C64::new(1.0, 0.0);
        for i in 0..2 {
            pr /= (psi_prime(&m, zu[i]).unwrap() * psi_prime(&m, zv[i]).unwrap()).sqrt();
        }
        let direct = num / den * pr;
        let got = cauchy_ratio(&m, &u, &v).unwrap();
        assert!((got - direct).norm() < 1e-11, "{got} vs {direct}");
    }

    #[test]
    fn s_derivatives_match_richardson_differences() {
        let m = EmpiricalMeasure::uniform(vec![0.5, 0.8, 1.4, 2.0]).unwrap();
        let s = |u: f64| s_transform(&m, re(u)).unwrap().re;
        let d1 = |h: f64| (s(h) - s(-h)) / (2.0 * h);
        let d2 = |h: f64| (s(h) - 2.0 * s(0.0) + s(-h)) / (h * h);
        let h = 2e-3;
        let fd1 = (4.0 * d1(h / 2.0) - d1(h)) / 3.0;
        let fd2 = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
        let (s0, s1, s2) = s_derivs_at_zero(&m);
        assert!((s(0.0) - s0).abs() <= 1e-14 * s0);
        assert!((fd1 - s1).abs() <= 1e-6 * s1.abs(), "{fd1} {s1}");
        assert!((fd2 - s2).abs() <= 1e-6 * s2.abs(), "{fd2} {s2}");
    }

    #[test]
    fn cauchy_ratio_is_second_order() {
        let m = two_point();
        let base = [C64::new(-0.6, 0.0), C64::new(-0.35, 0.01), C64::new(-0.15, -0.01)];
        // unit directions chosen so every shifted point stays within the domain
        let dir = [C64::new(1.0, 0.3), C64::new(-0.7, 0.5), C64::new(0.4, 0.6)];
        for k in 1..=3 {
            let pts: Vec<(f64, f64)> = [1e-1, 1e-2, 1e-3]
                .iter()
                .map(|&d| {
                    let v: Vec<C64> = base[..k].to_vec();
                    let u: Vec<C64> = (0..k).map(|i| v[i] + d * dir[i] / dir[i].norm()).collect();
                    let r = cauchy_ratio(&m, &u, &v).unwrap();
                    (d.ln(), (r - 1.0).norm().ln())
                })
                .collect();
            let slope = (pts[2].1 - pts[0].1) / (pts[2].0 - pts[0].0);
            assert!((1.8..=2.2).contains(&slope), "k={k} slope={slope}");
        }
    }

    #[test]
    fn centering_examples() {
        let d1 = EmpiricalMeasure::uniform(vec![1.0]).unwrap();
        let p = centering(&vec![d1; 5], 10);
        assert!(p.e_all().iter().all(|&e| e == 0.0) && p.v_all().iter().all(|&v| v == 0.0));
        let half2 = EmpiricalMeasure::uniform(vec![0.5, 2.0]).unwrap();
        let p = centering(&vec![half2; 150], 100);
        assert!((p.v_n(150) - 0.54).abs() < 1e-9);
        let dc = EmpiricalMeasure::uniform(vec![2.7]).unwrap();
        assert!((centering(&[dc], 4).e_n(1) - 2.7f64.ln()).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn measure(lo: f64, hi: f64, n: std::ops::Range<usize>) -> impl Strategy<Value = EmpiricalMeasure> {
            prop::collection::vec(lo..hi, n).prop_map(|a| EmpiricalMeasure::uniform(a).unwrap())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn psi_monotone_on_negative_axis(mu in measure(0.5, 2.0, 1..10), a in -50.0f64..0.0, b in -50.0f64..0.0) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assume!(hi - lo > 1e-9);
                let pl = psi_eval(&mu, re(lo)).unwrap().re;
                let ph = psi_eval(&mu, re(hi)).unwrap().re;
                prop_assert!(pl < ph);
                prop_assert!(pl > -1.0);
            }

            #[test]
            fn inverse_round_trip(mu in measure(0.5, 2.0, 10..11), u in -0.99f64..0.0) {
                let z = psi_inverse(&mu, re(u)).unwrap();
                prop_assert!(z.im == 0.0 && z.re <= 0.0);
                prop_assert!((psi_eval(&mu, z).unwrap() - re(u)).norm() <= 1e-10);
            }

            #[test]
            fn scaling_covariance(mu in measure(0.5, 2.0, 2..8), c in 0.2f64..5.0, u in -0.95f64..0.05) {
                let s = s_transform(&mu, re(u)).unwrap();
                let sc = s_transform(&mu.scaled(c).unwrap(), re(u)).unwrap();
                prop_assert!((sc - s / c).norm() <= 1e-10 * s.norm().max(1.0));
            }

            #[test]
            fn h_prime_matches_difference(mu in measure(0.5, 2.0, 2..8), u in -0.9f64..-0.05) {
                let h = 1e-5;
                let fd = (h_eval(&mu, u + h).unwrap() - h_eval(&mu, u - h).unwrap()) / (2.0 * h);
                prop_assert!((fd - h_prime(&mu, u).unwrap()).abs() <= 1e-8);
            }

            #[test]
            fn s_nonincreasing(mu in measure(0.5, 2.0, 2..8), a in -0.99f64..0.0, b in -0.99f64..0.0) {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let sl = s_transform(&mu, re(lo)).unwrap().re;
                let sh = s_transform(&mu, re(hi)).unwrap().re;
                prop_assert!(sl >= sh - 1e-13 && sh > 0.0);
            }

            #[test]
            fn centering_is_additive(
                a in prop::collection::vec(measure(0.3, 3.0, 1..5), 0..12),
                b in prop::collection::vec(measure(0.3, 3.0, 1..5), 0..12),
                n in 1usize..200,
            ) {
                let ab: Vec<_> = a.iter().chain(&b).cloned().collect();
                let pa = centering(&a, n);
                let pb = centering(&b, n);
                let pab = centering(&ab, n);
                prop_assert_eq!(pab.e_n(ab.len()), pa.e_n(a.len()) + pb.e_n(b.len()));
                prop_assert_eq!(pab.v_n(ab.len()), pa.v_n(a.len()) + pb.v_n(b.len()));
                prop_assert!(pab.v_all().windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
