//! Monte Carlo drivers and formula sweeps behind the CLI subcommands.

use super::config::{ExperimentConfig, FactorSpec, QuerySpec};
use super::report::{ExperimentReport, QueryResult, Statistic, KS_FAIL};
use super::stats::{ks_two_sample, mean_stderr, pairwise_sum, z_score, MeanStderr};
use crate::ensembles::{
    fixed_spectrum_polar, ginibre_polar, gl_brownian_coupled, gl_brownian_path_with, truncated_unitary, GlScheme,
    ProductAccumulator, RngStream,
};
use crate::error::{Error, Result};
use crate::limit::{self, LaplaceQuery};
use crate::linalg::{self, Mat};
use crate::measures::{centering, centering_from_cumulants, EmpiricalMeasure};
use crate::mvbessel::observable_deterministic;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Master seed of the comparison ensemble in universality runs.
const COMPARE_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;
/// Relative standard error above which a replica-budget note is attached.
const BUDGET_WARN: f64 = 0.1;

/// One stream per replica with `stream_id` equal to the replica index; the
/// worker count plays no role in the assignment.
pub fn seed_plan(master_seed: u64, replicas: usize, _workers: usize) -> Result<Vec<RngStream>> {
    if replicas == 0 {
        return Err(Error::Argument("at least one replica is required".into()));
    }
    Ok((0..replicas as u64).map(|i| RngStream::new(master_seed, i)).collect())
}

/// Runs `f` once per stream on a pool of `workers` threads; results keep
/// stream order.
pub fn run_replicas<T, F>(workers: usize, streams: &[RngStream], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| streams.par_iter().map(|s| f(&mut s.rng())).collect())
}

fn finish(mut report: ExperimentReport, start: Instant, workers: usize) -> ExperimentReport {
    report.runtime.seconds = start.elapsed().as_secs_f64();
    report.runtime.workers = workers;
    report
}

/// Centred path value at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathRow {
    pub replica: usize,
    pub time: f64,
    pub j: usize,
    pub value: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Samples of `ξ_j(t/4) − Nt/2 − log N` on `t = t_max·k/steps`, `k = 1..steps`,
/// with an ordering check and the long-time slope of the mean top path.
pub fn run_sample_paths(cfg: &ExperimentConfig, workers: usize) -> Result<(ExperimentReport, Vec<PathRow>)> {
    let start = Instant::now();
    let s = &cfg.sample_paths;
    let n = s.n;
    let ts: Vec<f64> = (1..=s.steps).map(|k| s.t_max * k as f64 / s.steps as f64).collect();
    let raw: Vec<f64> = ts.iter().map(|t| t / 4.0).collect();
    let shift = |t: f64| n as f64 * t / 2.0 + (n as f64).ln();
    let streams = seed_plan(cfg.seed, s.replicas, workers)?;
    let paths = run_replicas(workers, &streams, |rng| gl_brownian_path_with(n, &raw, s.step, s.scheme, rng))?;
    let mut rows = Vec::with_capacity(s.replicas * s.steps * n);
    let mut min_gap = f64::INFINITY;
    for (r, path) in paths.iter().enumerate() {
        for (t, spec) in ts.iter().zip(path) {
            for (j, v) in spec.values.iter().enumerate() {
                rows.push(PathRow { replica: r, time: *t, j: j + 1, value: v - shift(*t) });
            }
            for w in spec.values.windows(2) {
                min_gap = min_gap.min(w[0] - w[1]);
            }
        }
    }
    let mut report = ExperimentReport::new("sample_paths", cfg);
    if n > 1 {
        report.statistics.push(Statistic { name: "min_adjacent_gap".into(), value: min_gap, p_value: None, pass: min_gap > 0.0 });
    }
    // long-time drift of the top curve, fitted on the second half of the window
    if s.t_max >= 5.0 {
        let half: Vec<usize> = (0..ts.len()).filter(|&k| ts[k] >= s.t_max / 2.0).collect();
        let x: Vec<f64> = half.iter().map(|&k| ts[k]).collect();
        let y: Vec<f64> = half
            .iter()
            .map(|&k| pairwise_sum(&paths.iter().map(|p| p[k].values[0] - shift(ts[k])).collect::<Vec<_>>()) / paths.len() as f64)
            .collect();
        let slope = ls_slope(&x, &y);
        report.statistics.push(Statistic { name: "top_path_slope".into(), value: slope, p_value: None, pass: (-0.7..=-0.3).contains(&slope) });
    }
    Ok((finish(report, start, workers), rows))
}

/// Per-replica result of a product run: log spectra at the requested counts
/// with the matching centering values.
struct ProductSample {
    log_y: Vec<Vec<f64>>,
    e_n: Vec<f64>,
    v_n: Vec<f64>,
}

fn sample_factor(spec: &FactorSpec, atoms: Option<&Vec<f64>>, n: usize, rng: &mut ChaCha8Rng) -> Result<Mat> {
    match spec {
        FactorSpec::FixedSpectrum { .. } => fixed_spectrum_polar(atoms.expect("atoms precomputed"), rng),
        FactorSpec::GinibrePolar { ratio } => ginibre_polar(n, (ratio * n as f64).round() as usize, rng),
        FactorSpec::TruncatedUnitary { ratio } => truncated_unitary(n, (ratio * n as f64).round() as usize, rng),
    }
}

/// Runs products of the given factor laws and records spectra at each count in `at`.
fn run_products(factors: &[FactorSpec], n: usize, at: &[usize], streams: &[RngStream], workers: usize) -> Result<Vec<ProductSample>> {
    let mmax = *at.iter().max().expect("nonempty");
    let laws: Vec<&FactorSpec> = (0..mmax).map(|m| &factors[m % factors.len()]).collect();
    let atoms: Vec<Option<Vec<f64>>> = laws.iter().map(|f| f.atoms(n)).collect::<Result<_>>()?;
    let deterministic = atoms.iter().all(Option::is_some);
    let fixed_profile = if deterministic {
        let ms: Vec<EmpiricalMeasure> = atoms.iter().map(|a| EmpiricalMeasure::uniform(a.clone().expect("fixed"))).collect::<Result<_>>()?;
        Some(centering(&ms, n))
    } else {
        None
    };
    run_replicas(workers, streams, |rng| {
        let mut acc = ProductAccumulator::new(n);
        let mut pairs = Vec::with_capacity(mmax);
        let mut log_y = Vec::with_capacity(at.len());
        for m in 0..mmax {
            let x = sample_factor(laws[m], atoms[m].as_ref(), n, rng)?;
            if fixed_profile.is_none() {
                let sq: Vec<f64> = match &atoms[m] {
                    Some(a) => a.clone(),
                    None => linalg::dense_log_sq_singular_values(&x).iter().map(|l| l.exp()).collect(),
                };
                let k1 = sq.iter().sum::<f64>() / n as f64;
                let k2 = sq.iter().map(|v| (v - k1) * (v - k1)).sum::<f64>() / n as f64;
                pairs.push((k1.ln(), k2 / (k1 * k1)));
                let (lo, hi) = sq.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                acc.accumulate_with_cond(&x, 0.5 * (hi / lo).ln())?;
            } else {
                acc.accumulate(&x)?;
            }
            for (i, &mm) in at.iter().enumerate() {
                if mm == m + 1 {
                    log_y.push((i, acc.log_sq_singular_values()?.values));
                }
            }
        }
        log_y.sort_by_key(|(i, _)| *i);
        let profile = match &fixed_profile {
            Some(p) => p.clone(),
            None => centering_from_cumulants(&pairs, n),
        };
        Ok(ProductSample {
            log_y: log_y.into_iter().map(|(_, v)| v).collect(),
            e_n: at.iter().map(|&m| profile.e_n(m)).collect(),
            v_n: at.iter().map(|&m| profile.v_n(m)).collect(),
        })
    })
}

fn unique_counts(queries: &[QuerySpec]) -> Vec<usize> {
    let mut at: Vec<usize> = queries.iter().flat_map(|q| q.m.iter().copied()).collect();
    at.sort_unstable();
    at.dedup();
    at
}

/// Largest index-tuple count for which the exact oracle is attempted.
const EXACT_TUPLES: f64 = 1e4;

/// Fixed spectra of the first `m` factors, if every one is fixed.
fn fixed_spectra(factors: &[FactorSpec], n: usize, m: usize) -> Result<Option<Vec<EmpiricalMeasure>>> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        match factors[i % factors.len()].atoms(n)? {
            Some(a) => out.push(EmpiricalMeasure::uniform(a)?),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

fn universality_queries(
    label: &str,
    queries: &[QuerySpec],
    at: &[usize],
    samples: &[ProductSample],
    n: usize,
    exact: Option<&[EmpiricalMeasure]>,
) -> Result<Vec<QueryResult>> {
    let ln_n = (n as f64).ln();
    let mut out = Vec::new();
    for q in queries {
        let idx: Vec<usize> = q.m.iter().map(|m| at.binary_search(m).expect("count sampled")).collect();
        let obs: Vec<f64> = samples
            .iter()
            .map(|s| {
                idx.iter()
                    .zip(&q.c)
                    .map(|(&i, &c)| s.log_y[i].iter().map(|l| (c * (l - s.e_n[i] - ln_n)).exp()).sum::<f64>())
                    .product()
            })
            .collect();
        let est = mean_stderr(&obs);
        let gamma: Vec<f64> = idx
            .iter()
            .map(|&i| pairwise_sum(&samples.iter().map(|s| s.v_n[i]).collect::<Vec<_>>()) / samples.len() as f64)
            .collect();
        let mut r = QueryResult {
            label: format!("{label} m={:?} c={:?}", q.m, q.c),
            m: q.m.clone(),
            t: gamma.clone(),
            c: q.c.clone(),
            estimate: Some(est.mean),
            stderr: Some(est.stderr),
            replicas: est.count,
            ..Default::default()
        };
        if gamma.iter().any(|g| *g <= 0.0) {
            r.note = Some("gamma_zero: degenerate spectra, limit time is 0".into());
        } else {
            let lq = LaplaceQuery::new(gamma, q.c.clone())?;
            let f = limit::laplace_limit(&lq, None)?;
            r.formula = Some(f);
            r.z = Some(z_score(est.mean, est.stderr, f));
            if est.stderr > BUDGET_WARN * est.mean.abs() {
                r.note = Some("replica budget: stderr exceeds 10% of the estimate".into());
            }
        }
        if let Some(spectra) = exact {
            if (n as f64).powi(q.m.len() as i32) <= EXACT_TUPLES {
                let e = observable_deterministic(spectra, &q.m, &q.c, n)?;
                let centre: f64 = idx.iter().zip(&q.c).map(|(&i, &c)| c * (samples[0].e_n[i] + ln_n)).sum();
                let e = e * (-centre).exp();
                r.exact = Some(e);
                r.z_exact = Some(z_score(est.mean, est.stderr, e));
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Centred top values `log y_1(M) − E_N(M) − log N` at count index `i`.
fn top_values(samples: &[ProductSample], i: usize, n: usize) -> Vec<f64> {
    samples.iter().map(|s| s.log_y[i][0] - s.e_n[i] - (n as f64).ln()).collect()
}

/// Monte Carlo Laplace observables of products against the limit at the
/// accumulated variance time, plus a KS comparison of top values across two
/// ensembles.
pub fn run_universality(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    let start = Instant::now();
    let u = &cfg.universality;
    let at = unique_counts(&u.queries);
    let streams = seed_plan(cfg.seed, u.replicas, workers)?;
    let mmax = *at.last().expect("queries");
    let exact = |f: &[FactorSpec]| if u.exact_oracle { fixed_spectra(f, u.n, mmax) } else { Ok(None) };
    let main = run_products(&u.factors, u.n, &at, &streams, workers)?;
    let mut report = ExperimentReport::new("universality", cfg);
    report.queries = universality_queries("primary", &u.queries, &at, &main, u.n, exact(&u.factors)?.as_deref())?;
    if let Some(other) = &u.compare_factors {
        let streams = seed_plan(cfg.seed ^ COMPARE_SEED_MIX, u.replicas, workers)?;
        let alt = run_products(other, u.n, &at, &streams, workers)?;
        report.queries.extend(universality_queries("compare", &u.queries, &at, &alt, u.n, exact(other)?.as_deref())?);
        let i = at.binary_search(&u.queries[0].m[0]).expect("sampled");
        let ks = ks_two_sample(&top_values(&main, i, u.n), &top_values(&alt, i, u.n));
        report.statistics.push(Statistic {
            name: format!("ks_top_value m={}", at[i]),
            value: ks.statistic,
            p_value: Some(ks.p_value),
            pass: ks.p_value >= KS_FAIL,
        });
    }
    Ok(finish(report, start, workers))
}

/// Operator-side observable against Monte Carlo for `N ≤ 3`.
pub fn run_oracle_smalln(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    let start = Instant::now();
    let o = &cfg.oracle;
    let at = unique_counts(&o.queries);
    let mmax = *at.last().expect("queries");
    let spectra: Vec<EmpiricalMeasure> =
        (0..mmax).map(|m| EmpiricalMeasure::uniform(o.spectra[m % o.spectra.len()].clone())).collect::<Result<_>>()?;
    let factors: Vec<FactorSpec> = spectra.iter().map(|s| FactorSpec::FixedSpectrum { measure: s.clone() }).collect();
    let streams = seed_plan(cfg.seed, o.replicas, workers)?;
    let samples = run_products(&factors, o.n, &at, &streams, workers)?;
    let mut report = ExperimentReport::new("oracle_smalln", cfg);
    for q in &o.queries {
        let idx: Vec<usize> = q.m.iter().map(|m| at.binary_search(m).expect("sampled")).collect();
        let obs: Vec<f64> = samples
            .iter()
            .map(|s| idx.iter().zip(&q.c).map(|(&i, &c)| s.log_y[i].iter().map(|l| (c * l).exp()).sum::<f64>()).product())
            .collect();
        let est = mean_stderr(&obs);
        let f = observable_deterministic(&spectra, &q.m, &q.c, o.n)?;
        report.queries.push(QueryResult {
            label: format!("N={} m={:?} c={:?}", o.n, q.m, q.c),
            m: q.m.clone(),
            c: q.c.clone(),
            formula: Some(f),
            estimate: Some(est.mean),
            stderr: Some(est.stderr),
            z: Some(z_score(est.mean, est.stderr, f)),
            replicas: est.count,
            ..Default::default()
        });
    }
    Ok(finish(report, start, workers))
}

/// Finite-N transform against the limit for a list of sizes, with the
/// observed order `log₂(e_prev/e)/log₂(N/N_prev)`.
pub fn run_convergence_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let cv = &cfg.convergence;
    let q = LaplaceQuery::single(cv.t, cv.c)?;
    let lim = limit::laplace_limit(&q, None)?;
    let mut report = ExperimentReport::new("convergence", cfg);
    let mut prev: Option<(usize, f64)> = None;
    for &n in &cv.n_list {
        let fin = limit::laplace_finite_n(&q, n, None)?;
        let err = (fin - lim).abs();
        let exact = err <= 1e-12 * lim.abs().max(1.0);
        let note = match prev {
            _ if exact => "order: exact".to_string(),
            Some((np, ep)) => {
                let ratio = err / ep;
                let order = -ratio.log2() / (n as f64 / np as f64).log2();
                report.statistics.push(Statistic {
                    name: format!("error_ratio N={np}->{n}"),
                    value: ratio,
                    p_value: None,
                    pass: (0.3..=0.7).contains(&ratio) || n != 2 * np,
                });
                format!("order: {order:.3}")
            }
            None => "order: n/a".to_string(),
        };
        report.queries.push(QueryResult {
            label: format!("N={n}"),
            m: vec![n],
            t: vec![cv.t],
            c: vec![cv.c],
            formula: Some(lim),
            estimate: Some(fin),
            replicas: 0,
            note: Some(note),
            ..Default::default()
        });
        prev = Some((n, err));
    }
    Ok(finish(report, start, 1))
}

/// Direct evaluation of the limit (`finite = None`) or finite-N transform.
pub fn run_laplace(cfg: &ExperimentConfig, finite: bool) -> Result<ExperimentReport> {
    let start = Instant::now();
    let l = &cfg.laplace;
    let q = LaplaceQuery::new(l.t.clone(), l.c.clone())?;
    let (name, value) = if finite {
        ("laplace_finite_n", limit::laplace_finite_n(&q, l.n, None)?)
    } else {
        ("laplace_limit", limit::laplace_limit(&q, None)?)
    };
    let mut report = ExperimentReport::new(name, cfg);
    report.queries.push(QueryResult {
        label: if finite { format!("N={}", l.n) } else { "limit".into() },
        m: if finite { vec![l.n] } else { vec![] },
        t: l.t.clone(),
        c: l.c.clone(),
        formula: Some(value),
        note: (q.k() >= 3).then(|| "experimental: k ≥ 3".to_string()),
        ..Default::default()
    });
    Ok(finish(report, start, 1))
}

/// Density grid (CSV rows `t,x,density`) and expected counts above each level.
pub fn run_kernel(cfg: &ExperimentConfig, workers: usize) -> Result<(ExperimentReport, Vec<limit::DensityRow>)> {
    let start = Instant::now();
    let k = &cfg.kernel;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| limit::density_grid(&k.ts, &k.xs))?;
    let mut report = ExperimentReport::new("kernel", cfg);
    let min = rows.iter().map(|r| r.density).fold(f64::INFINITY, f64::min);
    if !rows.is_empty() {
        report.statistics.push(Statistic { name: "min_density".into(), value: min, p_value: None, pass: min >= -1e-10 });
    }
    for &t in &k.ts {
        for &a in &k.count_levels {
            report.queries.push(QueryResult {
                label: format!("expected_count t={t} a={a}"),
                t: vec![t],
                formula: Some(limit::expected_count(t, a)?),
                ..Default::default()
            });
        }
    }
    Ok((finish(report, start, workers), rows))
}

/// Laplace observable `Σ_j e^{c(ξ_j(t/4) − Nt/2 − log N)}` from coupled
/// Magnus paths at raw steps `step` and `step/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoupledEstimate {
    pub coarse: MeanStderr,
    pub fine: MeanStderr,
    /// Mean and standard error of the per-path difference fine − coarse.
    pub difference: MeanStderr,
}

pub fn gl_laplace_coupled(n: usize, t: f64, c: f64, step: f64, paths: usize, seed: u64, workers: usize) -> Result<CoupledEstimate> {
    let streams = seed_plan(seed, paths, workers)?;
    let shift = n as f64 * t / 2.0 + (n as f64).ln();
    let obs = |v: &[f64]| v.iter().map(|l| (c * (l - shift)).exp()).sum::<f64>();
    let pairs = run_replicas(workers, &streams, |rng| {
        let (a, b) = gl_brownian_coupled(n, &[t / 4.0], step, rng)?;
        Ok((obs(&a[0].values), obs(&b[0].values)))
    })?;
    let coarse: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let fine: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.1 - p.0).collect();
    Ok(CoupledEstimate { coarse: mean_stderr(&coarse), fine: mean_stderr(&fine), difference: mean_stderr(&diff) })
}

/// Mean number of centred curves `ξ_j(t/4) − Nt/2 − log N` above `a`.
pub fn gl_mean_count(n: usize, t: f64, a: f64, paths: usize, seed: u64, workers: usize) -> Result<MeanStderr> {
    let streams = seed_plan(seed, paths, workers)?;
    let shift = n as f64 * t / 2.0 + (n as f64).ln();
    let counts = run_replicas(workers, &streams, |rng| {
        let p = gl_brownian_path_with(n, &[t / 4.0], 1.0, GlScheme::ExactRadial, rng)?;
        Ok(p[0].values.iter().filter(|l| **l - shift > a).count() as f64)
    })?;
    Ok(mean_stderr(&counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 11;
        cfg.universality.n = 6;
        cfg.universality.replicas = 120;
        cfg.universality.queries = vec![QuerySpec { m: vec![9, 4], c: vec![0.3, 0.2] }];
        cfg.universality.compare_factors =
            Some(vec![FactorSpec::FixedSpectrum { measure: EmpiricalMeasure::uniform(vec![0.5, 1.0, 2.3053]).unwrap() }]);
        cfg.oracle.replicas = 2000;
        cfg.sample_paths = crate::harness::config::SamplePathsConfig { n: 4, t_max: 1.0, steps: 100, replicas: 2, ..Default::default() };
        cfg
    }

    #[test]
    fn seed_plan_assigns_replica_index() {
        let p = seed_plan(9, 3, 8).unwrap();
        assert_eq!(p.iter().map(|s| s.stream_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(seed_plan(9, 1, 4).unwrap(), vec![RngStream::new(9, 0)]);
        assert!(seed_plan(9, 0, 1).is_err());
    }

    #[test]
    fn distinct_master_seeds_give_distinct_draws() {
        use rand::Rng;
        let mut firsts: Vec<u64> = (0..100).map(|s| seed_plan(s, 1, 1).unwrap()[0].rng().random()).collect();
        firsts.sort_unstable();
        firsts.dedup();
        assert_eq!(firsts.len(), 100);
    }

    #[test]
    fn reports_are_worker_invariant() {
        let cfg = small();
        let a = run_universality(&cfg, 1).unwrap();
        let b = run_universality(&cfg, 3).unwrap();
        assert_eq!(a.payload_json(), b.payload_json());
        let (_, ra) = run_sample_paths(&cfg, 1).unwrap();
        let (_, rb) = run_sample_paths(&cfg, 2).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn fixed_centering_matches_measures() {
        let cfg = small();
        let u = &cfg.universality;
        let streams = seed_plan(1, 1, 1).unwrap();
        let s = run_products(&u.factors, u.n, &[4, 9], &streams, 1).unwrap();
        let mu = EmpiricalMeasure::uniform(vec![0.5, 0.5, 0.5, 2.0, 2.0, 2.0]).unwrap();
        let p = centering(&vec![mu; 9], 6);
        assert_eq!(s[0].e_n, vec![p.e_n(4), p.e_n(9)]);
        assert_eq!(s[0].v_n, vec![p.v_n(4), p.v_n(9)]);
    }

    #[test]
    fn degenerate_spectra_flag_zero_time() {
        let mut cfg = small();
        cfg.universality.factors = vec![FactorSpec::FixedSpectrum { measure: EmpiricalMeasure::uniform(vec![2.0]).unwrap() }];
        cfg.universality.compare_factors = None;
        let r = run_universality(&cfg, 1).unwrap();
        let q = &r.queries[0];
        assert!(q.stderr.unwrap() < 1e-12);
        assert!(q.formula.is_none() && q.note.as_deref().unwrap().starts_with("gamma_zero"));
        // every y_j = 2^M, so each factor of the observable is N·N^{−c}
        let want = 6f64.powf(0.7) * 6f64.powf(0.8);
        assert!((q.estimate.unwrap() - want).abs() < 1e-9 * want);
    }

    #[test]
    fn exact_oracle_agrees_with_monte_carlo() {
        let r = run_universality(&small(), 1).unwrap();
        for q in &r.queries {
            assert!(q.exact.is_some());
            assert!(q.z_exact.unwrap().abs() < 4.0, "{q:?}");
        }
    }

    #[test]
    fn random_spectra_run() {
        let mut cfg = small();
        cfg.universality.factors = vec![FactorSpec::TruncatedUnitary { ratio: 2.0 }, FactorSpec::GinibrePolar { ratio: 1.5 }];
        let r = run_universality(&cfg, 1).unwrap();
        assert!(r.queries.iter().all(|q| q.t.iter().all(|g| *g > 0.0)));
    }

    #[test]
    fn oracle_n1_is_exact() {
        let mut cfg = small();
        cfg.oracle.n = 1;
        cfg.oracle.spectra = vec![vec![1.7], vec![0.6]];
        cfg.oracle.replicas = 100;
        let r = run_oracle_smalln(&cfg, 1).unwrap();
        assert!(r.queries.iter().all(|q| q.z == Some(0.0)), "{:?}", r.queries);
    }

    #[test]
    fn oracle_n2_agrees() {
        let r = run_oracle_smalln(&small(), 1).unwrap();
        assert!(r.queries.iter().all(|q| q.z.unwrap().abs() < 4.0), "{:?}", r.queries);
    }

    #[test]
    fn convergence_table() {
        let mut cfg = small();
        cfg.convergence.c = 1.0;
        let r = run_convergence_sweep(&cfg).unwrap();
        assert!(r.queries.iter().all(|q| q.note.as_deref() == Some("order: exact")));
        cfg.convergence.c = 0.5;
        cfg.convergence.n_list = vec![50, 100];
        let r = run_convergence_sweep(&cfg).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn n1_path_starts_at_zero() {
        let mut cfg = small();
        cfg.sample_paths.n = 1;
        cfg.sample_paths.t_max = 0.01;
        let (_, rows) = run_sample_paths(&cfg, 1).unwrap();
        assert!(rows[0].value.abs() < 0.1);
    }

    #[test]
    fn slope_fit() {
        assert!((ls_slope(&[1.0, 2.0, 3.0], &[1.0, 0.5, 0.0]) + 0.5).abs() < 1e-15);
    }
}
