//! ψ, its inverse, the S-transform and the exponent H for a small measure,
//! plus the centering of a product built from it.

use num_complex::Complex64 as C64;
use rmprod::measures::{self, EmpiricalMeasure};

fn main() -> rmprod::Result<()> {
    let mu = EmpiricalMeasure::uniform(vec![0.5, 1.0, 2.0])?;
    let k = measures::cumulants(&mu);
    println!("cumulants: {k:?}");

    for u in [-0.9, -0.5, -0.1, 0.0, 0.05] {
        let z = measures::psi_inverse(&mu, C64::new(u, 0.0))?;
        let s = measures::s_transform(&mu, C64::new(u, 0.0))?;
        let h = measures::h_eval(&mu, u)?;
        println!("u={u:>5}: psi^-1={:.6} S={:.6} H={h:.6}", z.re, s.re);
    }
    let (s0, s1, s2) = measures::s_derivs_at_zero(&mu);
    println!("S(0)={s0:.6} S'(0)={s1:.6} S''(0)={s2:.6}");

    let u = [C64::new(-0.4, 0.01)];
    let v = [C64::new(-0.39, 0.0)];
    println!("Cauchy ratio near the diagonal: {:.8}", measures::cauchy_ratio(&mu, &u, &v)?);

    let n = 30;
    let prof = measures::centering(&vec![mu; 45], n);
    println!("after 45 factors at N={n}: E_N={:.6} V_N={:.6}", prof.e_n(45), prof.v_n(45));
    Ok(())
}
