//! Multivariate Bessel functions, the shift-operator eigenrelation, the
//! exact finite-N product observable and the large-N approximant.

use num_complex::Complex64 as C64;
use rmprod::measures::EmpiricalMeasure;
use rmprod::mvbessel::{self, AsymptoticInput};

fn main() -> rmprod::Result<()> {
    let x = [0.6, 1.1, 1.9];
    let z = [C64::new(0.3, 0.2), C64::new(1.4, -0.1), C64::new(2.2, 0.5)];
    println!("normalised Bessel value: {:.10}", mvbessel::bessel_normalized(&x, &z)?);
    for c in [0.3, 1.0, 1.7] {
        println!("eigenrelation residual at c={c}: {:.2e}", mvbessel::eigenrelation_check(&x, &z, c)?);
    }

    // E Σ_j y_j^c for a product of four fixed-spectrum factors of size 3.
    let spectra = vec![EmpiricalMeasure::uniform(vec![0.5, 1.0, 2.0])?; 4];
    let e = mvbessel::observable_deterministic(&spectra, &[4], &[0.5], 3)?;
    println!("exact E sum y^0.5 after 4 factors: {e:.10}");

    for n in [20usize, 40, 80] {
        let atoms: Vec<f64> = (0..n).map(|i| if i < n / 2 { 2.0 } else { 0.5 }).collect();
        let mu = EmpiricalMeasure::uniform(atoms)?;
        let v = -1.0 / n as f64;
        let u = C64::new(v - 1.0 / n as f64, 0.0);
        let exact = mvbessel::bessel_lattice(&mu, &[u], &[v])?;
        let approx = mvbessel::bessel_asymptotic(&AsymptoticInput { mu, u: vec![u], v: vec![C64::new(v, 0.0)] })?;
        println!("N={n}: relative error of the approximant {:.3e}", ((approx - exact) / exact).norm());
    }
    Ok(())
}
