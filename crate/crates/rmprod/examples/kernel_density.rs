//! One-point density of the limit ensemble and expected counts above a level.

use rmprod::limit::{self, KernelQuery};

fn main() -> rmprod::Result<()> {
    let xs: Vec<f64> = (0..=16).map(|i| -6.0 + 0.5 * i as f64).collect();
    for row in limit::density_grid(&[1.0], &xs)? {
        let bar = "#".repeat((row.density * 40.0).round() as usize);
        println!("x={:>5.1} {:.5} {bar}", row.x, row.density);
    }
    for a in [-3.0, -2.0, -1.0, 0.0] {
        println!("expected curves above {a}: {:.5}", limit::expected_count(1.0, a)?);
    }
    let k = KernelQuery { s: 1.0, x: -0.5, t: 1.5, y: -1.0 };
    println!("K(1,-0.5; 1.5,-1) = {:.8}", limit::kernel_eval(&k)?);
    Ok(())
}
