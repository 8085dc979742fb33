//! Joint Laplace transforms of the limiting line ensemble and of finite-N
//! Dyson Brownian motion with drift, and the limiting correlation kernel.
//!
//! Contour integrals are evaluated by residues for the innermost variable
//! and by Gauss–Legendre panels on nested rectangles for the others.

use crate::error::{Error, Result};
use crate::harness::stats::pairwise_sum;
use crate::special::{ln_gamma, rgamma_real};
use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::num::NonZeroUsize;

/// Times `t₁ ≥ … ≥ t_k > 0` and exponents `c_i > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceQuery {
    t: Vec<f64>,
    c: Vec<f64>,
}

impl LaplaceQuery {
    pub fn new(t: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != c.len() {
            return Err(Error::Argument("need k ≥ 1 times and as many exponents".into()));
        }
        if t.iter().any(|v| !(*v > 0.0 && v.is_finite())) || t.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Argument("times must be positive and nonincreasing".into()));
        }
        if c.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Argument("exponents must be positive".into()));
        }
        Ok(Self { t, c })
    }

    pub fn single(t: f64, c: f64) -> Result<Self> {
        Self::new(vec![t], vec![c])
    }

    pub fn k(&self) -> usize {
        self.t.len()
    }
    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn c(&self) -> &[f64] {
        &self.c
    }
}

/// Realisation of the nested contours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourPlan {
    /// Residue truncation depth; also fixes the left edges of the rectangles.
    pub n_max: usize,
    /// Right edge of the rectangle for each index.
    pub right_edges: Vec<f64>,
    /// Half-height of the rectangle for each index.
    pub half_heights: Vec<f64>,
    /// Gauss–Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Longest panel.
    pub panel_length: f64,
    /// Relative truncation tolerance of residue series.
    pub series_tol: f64,
    /// Absolute tail tolerance of line quadratures.
    pub tail_tol: f64,
}

impl ContourPlan {
    /// Default plan: `r_i = i·(max c + ¼)`, `h_i = 1 + i/4`, depth from the
    /// slowest residue decay `e^{−t c n}`.
    pub fn for_query(q: &LaplaceQuery) -> Self {
        let k = q.k();
        let cmax = q.c.iter().cloned().fold(0.0, f64::max);
        let tc = q.t.iter().zip(&q.c).map(|(t, c)| t * c).fold(f64::INFINITY, f64::min);
        let n_max = ((40.0 / tc).ceil() + 10.0).clamp(10.0, 50_000.0) as usize;
        Self {
            n_max,
            right_edges: (1..=k).map(|i| i as f64 * (cmax + 0.25)).collect(),
            half_heights: (1..=k).map(|i| 1.0 + 0.25 * i as f64).collect(),
            nodes_per_panel: 16,
            panel_length: 0.5,
            series_tol: 1e-15,
            tail_tol: 1e-12,
        }
    }

    /// Doubles depth, nodes and margins.
    pub fn refined(&self) -> Self {
        Self {
            n_max: 2 * self.n_max,
            right_edges: self.right_edges.iter().map(|r| 2.0 * r).collect(),
            half_heights: self.half_heights.iter().map(|h| 2.0 * h).collect(),
            nodes_per_panel: 2 * self.nodes_per_panel,
            ..self.clone()
        }
    }

    /// Checks the enclosure relations for `q`.
    pub fn validate(&self, q: &LaplaceQuery) -> Result<()> {
        let k = q.k();
        if self.n_max < 10 {
            return Err(Error::Plan(format!("n_max = {} < 10", self.n_max)));
        }
        if self.right_edges.len() != k || self.half_heights.len() != k {
            return Err(Error::Plan(format!("plan sized for {} indices, query has {k}", self.right_edges.len())));
        }
        if self.nodes_per_panel == 0 || !(self.panel_length > 0.0) {
            return Err(Error::Plan("empty quadrature rule".into()));
        }
        let cmax = q.c.iter().cloned().fold(0.0, f64::max);
        for i in 0..k {
            if !(self.right_edges[i] > 0.0) || !(self.half_heights[i] > 0.0) {
                return Err(Error::Plan(format!("rectangle {} must contain the origin", i + 1)));
            }
            for j in i + 1..k {
                if !(self.right_edges[j] - self.right_edges[i] > cmax) {
                    return Err(Error::Plan(format!("r_{} − r_{} must exceed max c = {cmax}", j + 1, i + 1)));
                }
                if !(self.half_heights[j] > self.half_heights[i]) {
                    return Err(Error::Plan(format!("h_{} must exceed h_{}", j + 1, i + 1)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
enum Model {
    Limit,
    Finite(usize),
}

impl Model {
    /// `e^{(tc/2)(2z + c − 1)}·Γ(z)/Γ(z+c)`, times `Γ(z+c+N)/Γ(z+N)` at finite N.
    fn f(self, z: C64, c: f64, t: f64) -> C64 {
        let gauss = t * c / 2.0 * (2.0 * z + c - 1.0);
        match self {
            Model::Limit => (gauss + ln_gamma(z) - ln_gamma(z + c)).exp(),
            Model::Finite(n) => {
                let mut p = gauss.exp();
                for j in 0..n {
                    let zj = z + j as f64;
                    p *= (zj + c) / zj;
                }
                p
            }
        }
    }

    /// Residue of `f` at `z = −n`, or `None` past the last pole.
    fn residues(self, c: f64, t: f64, upto: usize) -> Vec<f64> {
        let gauss = |n: usize| (t * c / 2.0 * (c - 1.0 - 2.0 * n as f64)).exp();
        match self {
            Model::Limit => {
                // (−1)^n/(n!Γ(c−n)) by the ratio (n+1−c)/(n+1)
                let mut q = rgamma_real(c);
                let mut out = Vec::with_capacity(upto + 1);
                for n in 0..=upto {
                    if n > 0 {
                        q *= (n as f64 - c) / n as f64;
                    }
                    out.push(q * gauss(n));
                }
                out
            }
            Model::Finite(nn) => (0..nn.min(upto + 1))
                .map(|n| {
                    // Π_{j<N}(c + j − n) / Π_{j≠n}(j − n)
                    let mut p = c;
                    for j in 0..nn {
                        if j != n {
                            let d = j as f64 - n as f64;
                            p *= (c + d) / d;
                        }
                    }
                    p * gauss(n)
                })
                .collect(),
        }
    }
}

/// Cross factor between indices `i < j`.
fn cross(zi: C64, ci: f64, zj: C64, cj: f64) -> C64 {
    (zi - zj) * (zi + ci - zj - cj) / ((zi + ci - zj) * (zi - zj - cj))
}

/// Residue series of index 1 truncated at relative tolerance.
fn inner_residues(model: Model, c: f64, t: f64, plan_n: usize, tol: f64) -> Result<Vec<f64>> {
    let all = model.residues(c, t, plan_n);
    if let Model::Finite(_) = model {
        return Ok(all.into_iter().map(|r| r / c).collect());
    }
    let mut sum = 0.0;
    for (n, r) in all.iter().enumerate() {
        sum += r;
        if n as f64 >= c + 1.0 && r.abs() <= tol * sum.abs() {
            return Ok(all[..=n].iter().map(|r| r / c).collect());
        }
    }
    Err(Error::NonConvergence(format!("residue series not below {tol:e} within n_max = {plan_n}")))
}

#[derive(Clone, Copy, Debug)]
struct Node {
    z: C64,
    /// `dz/(2πi)` including the quadrature weight.
    w: C64,
}

fn gl_rule(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(n.max(1)).expect("positive")).as_node_weight_pairs().to_vec()
}

fn segment(p: C64, q: C64, panel: f64, rule: &[(f64, f64)], out: &mut Vec<Node>) {
    let len = (q - p).norm();
    let m = (len / panel).ceil().max(1.0) as usize;
    let step = (q - p) / m as f64;
    let two_pi_i = C64::new(0.0, 2.0 * PI);
    for k in 0..m {
        let a = p + step * k as f64;
        for &(x, w) in rule {
            out.push(Node { z: a + step * (0.5 * (x + 1.0)), w: step * (0.5 * w) / two_pi_i });
        }
    }
}

/// Positively oriented rectangle `[−left, right] × [−h, h]`.
fn rectangle(left: f64, right: f64, h: f64, panel: f64, rule: &[(f64, f64)]) -> Vec<Node> {
    let corners = [C64::new(-left, -h), C64::new(right, -h), C64::new(right, h), C64::new(-left, h)];
    let mut out = Vec::new();
    for e in 0..4 {
        segment(corners[e], corners[(e + 1) % 4], panel, rule, &mut out);
    }
    out
}

fn nested(model: Model, q: &LaplaceQuery, plan: &ContourPlan) -> Result<f64> {
    let k = q.k();
    let (t, c) = (&q.t, &q.c);
    let depth = match model {
        Model::Limit => plan.n_max,
        Model::Finite(n) => n - 1,
    };
    plan.validate(q)?;
    let inner = inner_residues(model, c[0], t[0], depth, plan.series_tol)?;
    if k == 1 {
        return Ok(pairwise_sum(&inner));
    }
    let cmax = c.iter().cloned().fold(0.0, f64::max);
    let step = (cmax + 1.0).ceil();
    let rule = gl_rule(plan.nodes_per_panel);
    // Outer contours for indices 2..k.
    let contours: Vec<Vec<(C64, C64)>> = (1..k)
        .map(|j| {
            let left = depth as f64 + 0.5 + j as f64 * step;
            rectangle(left, plan.right_edges[j], plan.half_heights[j], plan.panel_length, &rule)
                .into_iter()
                .map(|nd| (nd.z, nd.w * model.f(nd.z, c[j], t[j]) / c[j]))
                .collect()
        })
        .collect();
    let cost = contours.iter().map(|v| v.len() as f64).product::<f64>() * inner.len() as f64;
    if cost > 5e9 {
        return Err(Error::Cost(format!("{cost:e} integrand evaluations")));
    }
    let inner_sum = |zs: &[C64]| -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (n, r) in inner.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let z1 = C64::new(-(n as f64), 0.0);
            let mut p = C64::new(*r, 0.0);
            for (j, zj) in zs.iter().enumerate() {
                p *= cross(z1, c[0], *zj, c[j + 1]);
            }
            s += p;
        }
        s
    };
    // Recursive product quadrature; the first outer index is split over threads.
    fn recurse(
        level: usize,
        zs: &mut Vec<C64>,
        weight: C64,
        contours: &[Vec<(C64, C64)>],
        c: &[f64],
        inner_sum: &dyn Fn(&[C64]) -> C64,
    ) -> C64 {
        if level == contours.len() {
            return weight * inner_sum(zs);
        }
        let mut acc = C64::new(0.0, 0.0);
        for &(z, w) in &contours[level] {
            let mut x = w;
            for (i, zi) in zs.iter().enumerate() {
                x *= cross(*zi, c[i + 1], z, c[level + 1]);
            }
            zs.push(z);
            acc += recurse(level + 1, zs, weight * x, contours, c, inner_sum);
            zs.pop();
        }
        acc
    }
    let parts: Vec<C64> = contours[0]
        .par_iter()
        .map(|&(z, w)| {
            let mut zs = vec![z];
            recurse(1, &mut zs, w, &contours, c, &inner_sum)
        })
        .collect();
    let re: Vec<f64> = parts.iter().map(|v| v.re).collect();
    Ok(pairwise_sum(&re))
}

/// Joint Laplace transform of the limiting ensemble,
/// `E[Π_i Σ_j e^{c_i ξ_j(t_i)}]`.
pub fn laplace_limit(q: &LaplaceQuery, plan: Option<&ContourPlan>) -> Result<f64> {
    let default;
    let plan = match plan {
        Some(p) => p,
        None => {
            default = ContourPlan::for_query(q);
            &default
        }
    };
    nested(Model::Limit, q, plan)
}

/// Finite-N counterpart with the `−log N` centring,
/// `E[Π_i Σ_j e^{c_i(ξ_j(t_i/4) − N t_i/2 − log N)}]`.
pub fn laplace_finite_n(q: &LaplaceQuery, n: usize, plan: Option<&ContourPlan>) -> Result<f64> {
    if n == 0 {
        return Err(Error::Argument("N must be positive".into()));
    }
    let default;
    let plan = match plan {
        Some(p) => p,
        None => {
            default = ContourPlan::for_query(q);
            &default
        }
    };
    let v = nested(Model::Finite(n), q, plan)?;
    let csum: f64 = q.c.iter().sum();
    Ok(v * (-csum * (n as f64).ln()).exp())
}

/// Closed double-residue evaluation for `k = 2`, used as an oracle for the
/// quadrature path. Requires `c₁` not an integer.
pub fn laplace_double_residue(q: &LaplaceQuery, n: Option<usize>) -> Result<f64> {
    if q.k() != 2 {
        return Err(Error::Argument("double-residue form needs k = 2".into()));
    }
    let model = n.map_or(Model::Limit, Model::Finite);
    let (c1, c2, t1, t2) = (q.c[0], q.c[1], q.t[0], q.t[1]);
    let depth = match model {
        Model::Limit => ContourPlan::for_query(q).n_max,
        Model::Finite(n) => n - 1,
    };
    let r1 = inner_residues(model, c1, t1, depth, 1e-16)?;
    let r2: Vec<f64> = model.residues(c2, t2, depth).into_iter().map(|r| r / c2).collect();
    let terms: Vec<f64> = r1
        .iter()
        .enumerate()
        .map(|(nn, a)| {
            let z1 = C64::new(-(nn as f64), 0.0);
            let mut s = C64::new(0.0, 0.0);
            for (m, b) in r2.iter().enumerate() {
                if m != nn {
                    s += b * cross(z1, c1, C64::new(-(m as f64), 0.0), c2);
                }
            }
            // pole of the cross factor at z₂ = z₁ + c₁; the one at z₁ − c₂ meets 1/Γ(−n) = 0
            s += model.f(z1 + c1, c2, t2) * (c1 / (c1 + c2));
            a * s.re
        })
        .collect();
    let v = pairwise_sum(&terms);
    Ok(match n {
        Some(n) => v * (-(c1 + c2) * (n as f64).ln()).exp(),
        None => v,
    })
}

/// Arguments of the limiting correlation kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelQuery {
    pub s: f64,
    pub x: f64,
    pub t: f64,
    pub y: f64,
}

/// `A_s(u) = (1/2πi)∮ Γ(z+½) e^{−sz²/2 + uz} dz` around `−½, −3/2, …`.
pub fn kernel_a(s: f64, u: f64) -> Result<f64> {
    // residue series Σ (−1)ⁿ/n! e^{−s z_n²/2 + u z_n}, z_n = −n − ½
    let mut terms = Vec::new();
    let mut lf = 0.0f64;
    let mut peak = f64::NEG_INFINITY;
    for n in 0..100_000usize {
        if n > 0 {
            lf += (n as f64).ln();
        }
        let z = -(n as f64) - 0.5;
        let l = -s * z * z / 2.0 + u * z - lf;
        peak = peak.max(l);
        terms.push(if n % 2 == 0 { l.exp() } else { -l.exp() });
        if l < peak - 40.0 && z < u / s {
            break;
        }
    }
    let sum = pairwise_sum(&terms);
    if peak.exp() <= 1e3 * sum.abs() {
        return Ok(sum);
    }
    // Contour through the saddle region: horizontal lines at Im z = ±1, right edge at Re z = 0.
    let h = 1.0;
    let left = 2.0 * u.abs() / s + 12.0 / s.sqrt() + 12.0;
    let rule = gl_rule(16);
    let nodes = rectangle(left, 0.0, h, 0.5, &rule);
    let vals: Vec<f64> = nodes
        .iter()
        .map(|nd| (nd.w * (ln_gamma(nd.z + 0.5) - s * nd.z * nd.z / 2.0 + u * nd.z).exp()).re)
        .collect();
    Ok(pairwise_sum(&vals))
}

/// `B_t(u) = (1/2πi)∫ e^{tw²/2 − uw}/Γ(w+½) dw` on a vertical line.
pub fn kernel_b(t: f64, u: f64) -> Result<f64> {
    let c = (u / t).clamp(-30.0, 30.0);
    line_integral(t, c, |w| t * w * w / 2.0 - u * w - ln_gamma(w + 0.5), 1e-18)
}

/// `(1/π)∫_0^∞ Re e^{g(c+iτ)} dτ` by panels until the integrand is negligible.
fn line_integral(t: f64, c: f64, g: impl Fn(C64) -> C64, rel: f64) -> Result<f64> {
    let rule = gl_rule(16);
    let panel = 0.5 * (1.0f64).min(1.0 / t.sqrt());
    let mut acc = Vec::new();
    let mut peak = f64::NEG_INFINITY;
    let turn = PI / (2.0 * t);
    for p in 0..200_000usize {
        let a = p as f64 * panel;
        let mut s = 0.0;
        let mut lmax = f64::NEG_INFINITY;
        for &(x, w) in &rule {
            let tau = a + panel * 0.5 * (x + 1.0);
            let e = g(C64::new(c, tau));
            lmax = lmax.max(e.re);
            s += w * 0.5 * panel * e.exp().re;
        }
        peak = peak.max(lmax);
        acc.push(s);
        if a > turn && lmax < peak + rel.ln() {
            return Ok(pairwise_sum(&acc) / PI);
        }
    }
    Err(Error::NonConvergence("line quadrature tail".into()))
}

fn heat(q: &KernelQuery) -> f64 {
    if q.t > q.s {
        let d = q.t - q.s;
        -(-(q.x - q.y).powi(2) / (2.0 * d)).exp() / (2.0 * PI * d).sqrt()
    } else {
        0.0
    }
}

/// `∫_0^∞ g(λ) dλ` for rapidly decaying `g`, panel by panel.
fn half_line(mut g: impl FnMut(f64) -> Result<f64>, tol: f64) -> Result<f64> {
    let rule = gl_rule(16);
    let panel = 0.5;
    let mut acc = Vec::new();
    let mut total_abs = 0.0;
    let mut quiet = 0;
    for p in 0..20_000usize {
        let a = p as f64 * panel;
        let mut s = 0.0;
        let mut sa = 0.0;
        for &(x, w) in &rule {
            let v = g(a + panel * 0.5 * (x + 1.0))?;
            s += w * 0.5 * panel * v;
            sa += w * 0.5 * panel * v.abs();
        }
        acc.push(s);
        total_abs += sa;
        quiet = if sa <= tol * total_abs.max(1e-300) { quiet + 1 } else { 0 };
        if p >= 4 && quiet >= 2 {
            return Ok(pairwise_sum(&acc));
        }
    }
    Err(Error::NonConvergence("half-line quadrature".into()))
}

/// Limiting space-time correlation kernel `K(s,x;t,y)`.
pub fn kernel_eval(q: &KernelQuery) -> Result<f64> {
    if !(q.s > 0.0 && q.t > 0.0) {
        return Err(Error::Argument("times must be positive".into()));
    }
    let body = half_line(|l| Ok(kernel_a(q.s, q.x + l)? * kernel_b(q.t, q.y + l)?), 1e-16)?;
    Ok(heat(q) + body)
}

/// Same kernel by residues in `z` and a line integral in `w` on `Re w = c_w`.
pub fn kernel_eval_residue(q: &KernelQuery, c_w: f64) -> Result<f64> {
    if !(c_w > -0.5) {
        return Err(Error::Plan(format!("line Re w = {c_w} must lie right of −½")));
    }
    if !(q.s > 0.0 && q.t > 0.0) {
        return Err(Error::Argument("times must be positive".into()));
    }
    let mut terms = Vec::new();
    let mut lf = 0.0f64;
    let mut peak = f64::NEG_INFINITY;
    for n in 0..10_000usize {
        if n > 0 {
            lf += (n as f64).ln();
        }
        let z = -(n as f64) - 0.5;
        let l = -q.s * z * z / 2.0 + q.x * z - lf;
        peak = peak.max(l);
        if l < peak - 40.0 && z < q.x / q.s {
            break;
        }
        let line = line_integral(q.t, c_w, |w| q.t * w * w / 2.0 - q.y * w - ln_gamma(w + 0.5) - (w - z).ln(), 1e-18)?;
        terms.push(if n % 2 == 0 { l.exp() * line } else { -l.exp() * line });
    }
    Ok(heat(q) + pairwise_sum(&terms))
}

/// One-point density `ρ(t,x) = K(t,x;t,x) = ∫_x^∞ A_t(u) B_t(u) du`.
pub fn density(t: f64, x: f64) -> Result<f64> {
    kernel_eval(&KernelQuery { s: t, x, t, y: x })
}

/// Expected number of curves above `a` at time `t`, `∫_a^∞ (u − a) A_t(u) B_t(u) du`.
pub fn expected_count(t: f64, a: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Argument("t must be positive".into()));
    }
    half_line(|l| Ok(l * kernel_a(t, a + l)? * kernel_b(t, a + l)?), 1e-10)
}

/// One row of a density grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityRow {
    pub t: f64,
    pub x: f64,
    pub density: f64,
}

/// Density on a product grid, rows ordered by `t` then `x`.
pub fn density_grid(ts: &[f64], xs: &[f64]) -> Result<Vec<DensityRow>> {
    let pts: Vec<(f64, f64)> = ts.iter().flat_map(|&t| xs.iter().map(move |&x| (t, x))).collect();
    pts.par_iter().map(|&(t, x)| Ok(DensityRow { t, x, density: density(t, x)? })).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;

    fn q1(t: f64, c: f64) -> LaplaceQuery {
        LaplaceQuery::single(t, c).unwrap()
    }

    #[test]
    fn anchors_at_c_one() {
        for t in [0.1, 1.0, 10.0] {
            assert!((laplace_limit(&q1(t, 1.0), None).unwrap() - 1.0).abs() < 1e-12);
        }
        for n in [1, 10, 100] {
            assert!((laplace_finite_n(&q1(0.7, 1.0), n, None).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn large_time_single_term() {
        for t in [40.0, 80.0] {
            let c: f64 = 0.5;
            let lead = (t * c / 2.0 * (c - 1.0)).exp() / (c * gamma(C64::new(c, 0.0)).re);
            let v = laplace_limit(&q1(t, c), None).unwrap();
            assert!((v / lead - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn finite_n_approaches_limit() {
        let q = q1(1.0, 0.5);
        let lim = laplace_limit(&q, None).unwrap();
        let errs: Vec<f64> = [50, 100, 200, 400].iter().map(|&n| (laplace_finite_n(&q, n, None).unwrap() - lim).abs()).collect();
        for w in errs.windows(2) {
            let r = w[1] / w[0];
            assert!((0.3..=0.7).contains(&r), "{errs:?}");
        }
        assert!(errs[3] < 0.01);
    }

    #[test]
    fn finite_n_one_is_exact() {
        // N = 1: ξ(t/4) is Gaussian with mean 0 and variance t (Σξ has variance 4Nτ);
        // E e^{c(ξ − t/2)} = e^{c²t/2 − ct/2}.
        let (t, c) = (0.8, 0.35);
        let v = laplace_finite_n(&q1(t, c), 1, None).unwrap();
        assert!((v - (c * c * t / 2.0 - c * t / 2.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn continuity_across_c_one() {
        for c in [1.0 - 1e-4, 1.0 + 1e-4] {
            assert!((laplace_limit(&q1(1.0, c), None).unwrap() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn k2_quadrature_matches_double_residue() {
        let q = LaplaceQuery::new(vec![1.2, 0.7], vec![0.3, 0.45]).unwrap();
        let a = laplace_limit(&q, None).unwrap();
        let b = laplace_double_residue(&q, None).unwrap();
        assert!((a - b).abs() < 1e-9 * b.abs(), "{a} {b}");
        let a = laplace_finite_n(&q, 12, None).unwrap();
        let b = laplace_double_residue(&q, Some(12)).unwrap();
        assert!((a - b).abs() < 1e-9 * b.abs(), "{a} {b}");
    }

    #[test]
    fn k2_symmetric_at_equal_times() {
        let a = laplace_limit(&LaplaceQuery::new(vec![1.0, 1.0], vec![0.3, 0.55]).unwrap(), None).unwrap();
        let b = laplace_limit(&LaplaceQuery::new(vec![1.0, 1.0], vec![0.55, 0.3]).unwrap(), None).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs(), "{a} {b}");
    }

    #[test]
    fn k2_plan_robust() {
        let q = LaplaceQuery::new(vec![1.0, 0.6], vec![0.4, 0.35]).unwrap();
        let p = ContourPlan::for_query(&q);
        let a = laplace_limit(&q, Some(&p)).unwrap();
        let b = laplace_limit(&q, Some(&p.refined())).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs(), "{a} {b}");
    }

    #[test]
    fn plan_violations_are_reported() {
        let q = LaplaceQuery::new(vec![1.0, 0.6], vec![0.4, 0.35]).unwrap();
        let mut p = ContourPlan::for_query(&q);
        p.right_edges = vec![0.5, 0.7];
        assert!(matches!(laplace_limit(&q, Some(&p)), Err(Error::Plan(_))));
        let mut p = ContourPlan::for_query(&q);
        p.n_max = 5;
        assert!(matches!(laplace_limit(&q, Some(&p)), Err(Error::Plan(_))));
    }

    #[test]
    fn query_validation() {
        assert!(LaplaceQuery::new(vec![0.5, 1.0], vec![0.1, 0.1]).is_err());
        assert!(LaplaceQuery::new(vec![1.0], vec![0.0]).is_err());
        assert!(LaplaceQuery::new(vec![], vec![]).is_err());
    }

    #[test]
    fn kernel_forms_agree() {
        for &(s, x, t, y) in &[(1.0, 0.0, 1.0, 0.0), (0.7, -0.5, 1.3, 0.4), (1.0, 1.0, 1.0, -1.0)] {
            let q = KernelQuery { s, x, t, y };
            let a = kernel_eval(&q).unwrap();
            let b = kernel_eval_residue(&q, 0.5).unwrap();
            assert!((a - b).abs() < 1e-8 * a.abs().max(1e-3), "{q:?}: {a} {b}");
        }
        assert!(kernel_eval_residue(&KernelQuery { s: 1.0, x: 0.0, t: 1.0, y: 0.0 }, -0.6).is_err());
    }

    #[test]
    fn density_nonnegative_and_count_monotone() {
        for t in [0.5, 1.0, 2.0] {
            for i in 0..=20 {
                let x = -6.0 + 0.5 * i as f64;
                let d = density(t, x).unwrap();
                assert!(d >= -1e-10, "t={t} x={x}: {d}");
            }
        }
        let counts: Vec<f64> = [-3.0, -2.0, 0.0, 3.0, 8.0].iter().map(|&a| expected_count(1.0, a).unwrap()).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        assert!(counts[4] < 1e-6);
    }

    #[test]
    fn count_is_integrated_density() {
        let a = -1.0;
        let direct = half_line(|l| density(1.0, a + l), 1e-10).unwrap();
        let fast = expected_count(1.0, a).unwrap();
        assert!((direct - fast).abs() < 1e-7 * fast, "{direct} {fast}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn finite_n_error_shrinks(t in 0.3f64..4.0, c in 0.1f64..0.9) {
                let q = q1(t, c);
                let lim = laplace_limit(&q, None).unwrap();
                prop_assert!(lim > 0.0);
                let e50 = (laplace_finite_n(&q, 50, None).unwrap() - lim).abs();
                let e200 = (laplace_finite_n(&q, 200, None).unwrap() - lim).abs();
                prop_assert!(e200 < e50, "{e50} {e200}");
            }

            #[test]
            fn density_nonnegative(t in 0.3f64..3.0, x in -6.0f64..4.0) {
                prop_assert!(density(t, x).unwrap() >= -1e-10);
            }

            #[test]
            fn count_nonincreasing(t in 0.5f64..2.0, a in -3.0f64..2.0, d in 0.05f64..2.0) {
                prop_assert!(expected_count(t, a + d).unwrap() <= expected_count(t, a).unwrap() + 1e-10);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(4))]

            #[test]
            fn k2_symmetric_in_exponents(t in 0.5f64..2.0, a in 0.1f64..0.5, b in 0.1f64..0.5) {
                let x = laplace_limit(&LaplaceQuery::new(vec![t, t], vec![a, b]).unwrap(), None).unwrap();
                let y = laplace_limit(&LaplaceQuery::new(vec![t, t], vec![b, a]).unwrap(), None).unwrap();
                prop_assert!((x - y).abs() <= 1e-9 * x.abs());
            }
        }
    }
}
