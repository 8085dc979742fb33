//! Gamma-function family on the complex plane.
//!
//! Lanczos approximation (g = 7, nine coefficients) on Re z ≥ 1/2 and the
//! reflection formula elsewhere. Only `exp` of the logarithms is ever used
//! downstream, so the imaginary part of `ln_gamma` is not normalised to a
//! particular sheet.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn lanczos_ln_gamma(z: C64) -> C64 {
    // ln Γ(z) for Re z ≥ 1/2.
    let zm = z - 1.0;
    let mut series = C64::new(LANCZOS[0], 0.0);
    for (k, &p) in LANCZOS.iter().enumerate().skip(1) {
        series += p / (zm + k as f64);
    }
    let t = zm + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (zm + 0.5) * t.ln() - t + series.ln()
}

/// ln sin(πz), stable for large |Im z| and for large |Re z|.
pub fn ln_sin_pi(z: C64) -> C64 {
    let shift = 2.0 * (z.re / 2.0).round();
    let w = C64::new(z.re - shift, z.im);
    let i = C64::i();
    if w.im > 15.0 {
        let e = (2.0 * i * PI * w).exp();
        -i * PI * w + ((e - 1.0) / (2.0 * i)).ln()
    } else if w.im < -15.0 {
        let e = (-2.0 * i * PI * w).exp();
        i * PI * w + ((1.0 - e) / (2.0 * i)).ln()
    } else {
        (w * PI).sin().ln()
    }
}

/// Complex log-gamma. Returns `-inf` real part at the poles.
pub fn ln_gamma(z: C64) -> C64 {
    if z.re < 0.5 {
        if z.im == 0.0 && z.re == z.re.round() {
            return C64::new(f64::INFINITY, 0.0);
        }
        C64::new(PI.ln(), 0.0) - ln_sin_pi(z) - lanczos_ln_gamma(1.0 - z)
    } else {
        lanczos_ln_gamma(z)
    }
}

/// Complex Γ(z).
pub fn gamma(z: C64) -> C64 {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return C64::new(f64::INFINITY, 0.0);
    }
    ln_gamma(z).exp()
}

/// Complex 1/Γ(z); exactly zero at the non-positive integers.
pub fn rgamma(z: C64) -> C64 {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return C64::new(0.0, 0.0);
    }
    (-ln_gamma(z)).exp()
}

/// ln|Γ(x)| and the sign of Γ(x) for real x (sign 0 at poles).
pub fn ln_gamma_real(x: f64) -> (f64, f64) {
    if x <= 0.0 && x == x.round() {
        return (f64::INFINITY, 0.0);
    }
    if x >= 0.5 {
        return (lanczos_ln_gamma(C64::new(x, 0.0)).re, 1.0);
    }
    // Γ(x) = π / (sin(πx) Γ(1−x)); Γ(1−x) > 0 here.
    let r = x - 2.0 * (x / 2.0).round();
    let s = (PI * r).sin();
    let lg = lanczos_ln_gamma(C64::new(1.0 - x, 0.0)).re;
    (PI.ln() - s.abs().ln() - lg, s.signum())
}

/// Real 1/Γ(x), exactly zero at the non-positive integers.
pub fn rgamma_real(x: f64) -> f64 {
    let (l, s) = ln_gamma_real(x);
    if s == 0.0 {
        0.0
    } else {
        s * (-l).exp()
    }
}

/// ln n! for integer n ≥ 0.
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma_real(n as f64 + 1.0).0
    }
}
