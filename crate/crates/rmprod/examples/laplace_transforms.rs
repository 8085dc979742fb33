//! The limit Laplace transform, its finite-N counterpart and the rate at
//! which the two meet.

use rmprod::limit::{self, LaplaceQuery};

fn main() -> rmprod::Result<()> {
    let q = LaplaceQuery::single(1.0, 0.5)?;
    let lim = limit::laplace_limit(&q, None)?;
    println!("limit at t=1, c=0.5: {lim:.12}");
    let mut prev = None;
    for n in [25, 50, 100, 200, 400] {
        let f = limit::laplace_finite_n(&q, n, None)?;
        let err = (f - lim).abs();
        let ratio = prev.map(|p: f64| format!("{:.3}", err / p)).unwrap_or_default();
        println!("N={n:>3}: {f:.12} error {err:.3e} {ratio}");
        prev = Some(err);
    }
    let joint = LaplaceQuery::new(vec![2.0, 1.0], vec![0.3, 0.4])?;
    println!("two-time transform: {:.10}", limit::laplace_limit(&joint, None)?);
    println!("two-time, residue oracle: {:.10}", limit::laplace_double_residue(&joint, None)?);
    Ok(())
}
