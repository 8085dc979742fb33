//! JSON experiment configuration, validation and content hashing.

use crate::ensembles::GlScheme;
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Law of one factor of a matrix product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorSpec {
    /// Deterministic squared singular values; `N·w_i` must be integral.
    FixedSpectrum { measure: EmpiricalMeasure },
    /// Singular values of a `⌊ratio·N⌉ × N` Ginibre matrix; requires `ratio > 1`.
    GinibrePolar { ratio: f64 },
    /// `N × N` corner of a Haar unitary of size `⌊ratio·N⌉`; requires `ratio > 1`.
    TruncatedUnitary { ratio: f64 },
}

impl FactorSpec {
    /// Atoms with multiplicity for a fixed spectrum at size `n`.
    pub fn atoms(&self, n: usize) -> Result<Option<Vec<f64>>> {
        let FactorSpec::FixedSpectrum { measure } = self else { return Ok(None) };
        let mut out = Vec::with_capacity(n);
        for (a, w) in measure.atoms().iter().zip(measure.weights()) {
            let m = w * n as f64;
            if (m - m.round()).abs() > 1e-9 {
                return Err(Error::Config(format!("weight {w} of atom {a} is not a multiple of 1/N at N={n}")));
            }
            out.extend(std::iter::repeat_n(*a, m.round() as usize));
        }
        Ok(Some(out))
    }

    fn validate(&self, n: usize, bound: f64) -> Result<()> {
        match self {
            FactorSpec::FixedSpectrum { measure } => {
                if !measure.within(1.0 / bound, bound) {
                    return Err(Error::Config(format!("atoms must lie in [1/{bound}, {bound}]")));
                }
                self.atoms(n).map(|_| ())
            }
            FactorSpec::GinibrePolar { ratio } | FactorSpec::TruncatedUnitary { ratio } => {
                if !(*ratio > 1.0 && ratio.is_finite()) || ((ratio * n as f64).round() as usize) <= n {
                    return Err(Error::Config(format!("ratio {ratio} must keep the ambient size above N={n}")));
                }
                Ok(())
            }
        }
    }
}

/// Joint query: factor counts `M_1 ≥ … ≥ M_k` with exponents `c_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub m: Vec<usize>,
    pub c: Vec<f64>,
}

impl QuerySpec {
    fn validate(&self) -> Result<()> {
        if self.m.is_empty() || self.m.len() != self.c.len() {
            return Err(Error::Config("query needs equally many counts and exponents".into()));
        }
        if self.m.windows(2).any(|w| w[1] > w[0]) || self.m[self.m.len() - 1] == 0 {
            return Err(Error::Config("query counts must satisfy M_1 ≥ … ≥ M_k ≥ 1".into()));
        }
        let s: f64 = self.c.iter().sum();
        if self.c.iter().any(|c| !(*c > 0.0)) || !(s < 1.0) {
            return Err(Error::Config(format!("exponents must be positive with sum in (0,1), got {s}")));
        }
        Ok(())
    }
}

/// Product-ensemble universality run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniversalityConfig {
    pub n: usize,
    /// Factor laws, cycled along the product.
    pub factors: Vec<FactorSpec>,
    /// Second ensemble for the top-value KS comparison.
    pub compare_factors: Option<Vec<FactorSpec>>,
    pub queries: Vec<QuerySpec>,
    pub replicas: usize,
    /// Declared bound `C` with atoms in `[1/C, C]`.
    pub bound: f64,
    /// Also evaluate the exact finite-N expectation by the shift operators
    /// when every factor has a fixed spectrum.
    pub exact_oracle: bool,
}

/// Positive root of `1.64 b² − 4.08 b + 0.69`, which makes the uniform
/// measure on `{½, 1, b}` have `κ₂/κ₁² = 0.36`.
pub fn tuned_third_atom() -> f64 {
    (4.08 + (4.08f64 * 4.08 - 4.0 * 1.64 * 0.69).sqrt()) / (2.0 * 1.64)
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        let two = EmpiricalMeasure::uniform(vec![0.5, 2.0]).expect("valid");
        let three = EmpiricalMeasure::uniform(vec![0.5, 1.0, tuned_third_atom()]).expect("valid");
        Self {
            n: 60,
            factors: vec![FactorSpec::FixedSpectrum { measure: two }],
            compare_factors: Some(vec![FactorSpec::FixedSpectrum { measure: three }]),
            queries: vec![QuerySpec { m: vec![90], c: vec![0.3] }, QuerySpec { m: vec![90], c: vec![0.5] }],
            replicas: 2000,
            bound: 10.0,
            exact_oracle: true,
        }
    }
}

/// Small-N operator oracle run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n: usize,
    /// Squared singular values of each factor (length N), cycled.
    pub spectra: Vec<Vec<f64>>,
    pub queries: Vec<QuerySpec>,
    pub replicas: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n: 2,
            spectra: vec![vec![1.0, 2.0]],
            queries: vec![QuerySpec { m: vec![3], c: vec![0.5] }, QuerySpec { m: vec![3, 1], c: vec![0.3, 0.3] }],
            replicas: 100_000,
        }
    }
}

/// Sample paths of the centred Dyson Brownian motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplePathsConfig {
    pub n: usize,
    pub t_max: f64,
    pub steps: usize,
    pub replicas: usize,
    pub scheme: GlScheme,
    /// Raw-time SDE step for the discretised schemes.
    pub step: f64,
}

impl Default for SamplePathsConfig {
    fn default() -> Self {
        Self { n: 50, t_max: 10.0, steps: 100, replicas: 64, scheme: GlScheme::ExactRadial, step: 1e-3 }
    }
}

/// Finite-N to limit convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub c: f64,
    pub t: f64,
    pub n_list: Vec<usize>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { c: 0.5, t: 1.0, n_list: vec![50, 100, 200, 400] }
    }
}

/// Direct Laplace-transform evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceConfig {
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    /// Matrix size for the finite-N transform.
    pub n: usize,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self { t: vec![1.0], c: vec![0.5], n: 100 }
    }
}

/// Density grid and expected counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    /// Levels `a` for expected counts at each `t`.
    pub count_levels: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { ts: vec![0.5, 1.0, 2.0], xs: (0..=24).map(|i| -6.0 + 0.5 * i as f64).collect(), count_levels: vec![-2.0, 0.0] }
    }
}

/// Complete experiment document; every section has defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub universality: UniversalityConfig,
    pub oracle: OracleConfig,
    pub sample_paths: SamplePathsConfig,
    pub convergence: ConvergenceConfig,
    pub laplace: LaplaceConfig,
    pub kernel: KernelConfig,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let u = &self.universality;
        if u.n == 0 || u.factors.is_empty() || u.queries.is_empty() {
            return Err(Error::Config("universality needs N ≥ 1, factors and queries".into()));
        }
        if u.replicas < 100 {
            return Err(Error::Config("z-scores need at least 100 replicas".into()));
        }
        if !(u.bound >= 1.0) {
            return Err(Error::Config("bound C must be at least 1".into()));
        }
        for f in u.factors.iter().chain(u.compare_factors.iter().flatten()) {
            f.validate(u.n, u.bound)?;
        }
        if u.compare_factors.as_ref().is_some_and(|v| v.is_empty()) {
            return Err(Error::Config("empty comparison ensemble".into()));
        }
        u.queries.iter().try_for_each(QuerySpec::validate)?;

        let o = &self.oracle;
        if !(1..=3).contains(&o.n) {
            return Err(Error::Config(format!("oracle needs N ≤ 3, got {}", o.n)));
        }
        if o.replicas < 100 || o.spectra.is_empty() {
            return Err(Error::Config("oracle needs spectra and at least 100 replicas".into()));
        }
        if o.spectra.iter().any(|s| s.len() != o.n || s.iter().any(|x| !(*x > 0.0 && x.is_finite()))) {
            return Err(Error::Config(format!("oracle spectra need {} positive entries", o.n)));
        }
        for q in &o.queries {
            q.validate()?;
            if q.m.len() > 2 {
                return Err(Error::Config("oracle supports k ≤ 2".into()));
            }
        }

        let s = &self.sample_paths;
        if s.n == 0 || s.n > 200 || s.steps < 100 || !(s.t_max > 0.0) || s.replicas == 0 {
            return Err(Error::Config("sample paths need 1 ≤ N ≤ 200, steps ≥ 100, t_max > 0".into()));
        }
        let raw_gap = s.t_max / 4.0 / s.steps as f64;
        if s.scheme != GlScheme::ExactRadial && !(s.step > 0.0 && s.step <= raw_gap / 10.0) {
            return Err(Error::Config(format!("step {} exceeds a tenth of the sampling gap {raw_gap}", s.step)));
        }

        let c = &self.convergence;
        if !(c.c > 0.0 && c.t > 0.0) || c.n_list.is_empty() || c.n_list.contains(&0) {
            return Err(Error::Config("convergence needs c, t > 0 and positive N".into()));
        }
        let l = &self.laplace;
        crate::limit::LaplaceQuery::new(l.t.clone(), l.c.clone()).map_err(|e| Error::Config(e.to_string()))?;
        if l.n == 0 {
            return Err(Error::Config("laplace N must be positive".into()));
        }
        let k = &self.kernel;
        if k.ts.iter().any(|t| !(*t > 0.0)) || k.xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("kernel grid needs positive times and finite positions".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
