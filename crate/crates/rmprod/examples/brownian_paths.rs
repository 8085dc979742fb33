//! Brownian motion on GL(N): centred log singular-value paths written as CSV.

use rand::SeedableRng;
use rmprod::ensembles::{gl_brownian_path_with, write_spectra_csv, GlScheme};

fn main() -> rmprod::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let n = 8;
    let times: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
    let path = gl_brownian_path_with(n, &times, 1e-3, GlScheme::ExactRadial, &mut rng)?;
    let batch: Vec<_> = times.iter().zip(&path).map(|(&t, s)| (0, t, s)).collect();
    write_spectra_csv(std::io::stdout().lock(), &batch)?;
    let last = path.last().expect("times");
    let gaps: Vec<f64> = last.values.windows(2).map(|w| w[0] - w[1]).collect();
    eprintln!("gaps at t={}: {:?}", times[times.len() - 1], gaps.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>());
    Ok(())
}
