//! Log squared singular values of a long product of fixed-spectrum factors,
//! computed stably and compared with the determinant identity.

use rand::SeedableRng;
use rmprod::ensembles::{fixed_spectrum, ProductAccumulator};

fn main() -> rmprod::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let (n, m) = (40, 400);
    let atoms: Vec<f64> = (0..n).map(|i| 0.5 + 1.5 * i as f64 / (n - 1) as f64).collect();
    let mut acc = ProductAccumulator::new(n);
    for _ in 0..m {
        acc.accumulate(&fixed_spectrum(&atoms, &mut rng)?)?;
    }
    let s = acc.log_sq_singular_values()?;
    let det: f64 = m as f64 * atoms.iter().map(|a| a.ln()).sum::<f64>();
    println!("{m} factors of size {n}, {} refactorisations", acc.refactor_count());
    println!("sum of log squared singular values {:.9}, determinant {det:.9}", s.sum());
    println!("top five per factor: {:?}", s.values[..5].iter().map(|v| format!("{:.4}", v / m as f64)).collect::<Vec<_>>());
    Ok(())
}
