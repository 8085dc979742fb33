//! A reduced universality run: fixed-spectrum products against the limit
//! transform and against the exact finite-N value.

use rmprod::harness::experiments::run_universality;
use rmprod::harness::ExperimentConfig;

fn main() -> rmprod::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.universality.n = 30;
    cfg.universality.queries[0].m = vec![45];
    cfg.universality.queries[1].m = vec![45];
    cfg.universality.replicas = 300;
    cfg.validate()?;
    let r = run_universality(&cfg, 1)?;
    for q in &r.queries {
        println!(
            "{}: estimate {:.4} ± {:.4}, limit {:.4}, exact N {:.4}",
            q.label,
            q.estimate.unwrap_or(f64::NAN),
            q.stderr.unwrap_or(f64::NAN),
            q.formula.unwrap_or(f64::NAN),
            q.exact.unwrap_or(f64::NAN)
        );
    }
    for s in &r.statistics {
        println!("{}: {:.4} (p = {:.3})", s.name, s.value, s.p_value.unwrap_or(f64::NAN));
    }
    Ok(())
}
