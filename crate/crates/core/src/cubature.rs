//! Positive cubature rules for `h_κ² dσ` on separated node sets, together with
//! exactness and Marcinkiewicz–Zygmund diagnostics.
//!
//! Weights are normalized so that `Σ λ_ξ = 1`, i.e. the rule integrates
//! against `h_κ² dσ / a_d^κ`. Unnormalized weights are `a_d^κ λ_ξ`.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::harmonics::{spanning_dim, NormSampler, SpanningSet};
use crate::nnls::nnls;
use crate::reference::weighted_rule;
use crate::sphere::{angle_to_chord, build_maximal_separated_set, Cap, SeparatedSet, SpatialGrid};
use crate::weight::{cap_measure, DunklWeight, GroupTag};

/// Default band-limit multiplier `δ` in the node separation `δ / n`.
pub const DEFAULT_DELTA: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubatureRule {
    pub d: usize,
    pub kappa: Vec<f64>,
    pub nodes: SeparatedSet,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
    pub residual: f64,
    /// `[min, max]` of `a_d^κ λ_ξ / w(c(ξ, separation))`.
    pub weight_model_bracket: [f64; 2],
}

impl CubatureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ λ_ξ f(ξ)`, approximating `(1/a) ∫ f h_κ² dσ`.
    pub fn apply(&self, f: impl Fn(&crate::sphere::UnitVector) -> f64) -> f64 {
        self.nodes.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(1/a) ∫ Φ_j h_κ² dσ` for the spanning set through `degree`.
pub fn moments(w: &DunklWeight, degree: usize) -> Vec<f64> {
    let span = SpanningSet::new(w.dim(), degree).expect("dimension already validated");
    let extra = if w.roots().tag() == GroupTag::Z2d || w.is_unweighted() { 0 } else { 64 };
    let rule = weighted_rule(w, degree + extra);
    let mut mu = vec![0.0; span.len()];
    let mut phi = vec![0.0; span.len()];
    for (x, &wx) in rule.points.iter().zip(&rule.weights) {
        span.eval_into(x, &mut phi);
        for (m, p) in mu.iter_mut().zip(&phi) {
            *m += wx * p;
        }
    }
    mu.iter_mut().for_each(|m| *m /= w.norm_const);
    mu
}

fn design_matrix(span: &SpanningSet, nodes: &SeparatedSet) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(span.len(), nodes.len());
    let mut phi = vec![0.0; span.len()];
    for (j, x) in nodes.points.iter().enumerate() {
        span.eval_into(x, &mut phi);
        a.column_mut(j).copy_from_slice(&phi);
    }
    a
}

/// Normalized weighted mass of the Voronoi cell of each node.
fn voronoi_prior(w: &DunklWeight, nodes: &SeparatedSet) -> Vec<f64> {
    let n = nodes.len() as f64;
    let degree = if w.dim() == 2 { (16.0 * n) as usize } else { (32.0 * n).sqrt() as usize };
    let rule = weighted_rule(w, degree.max(32));
    let grid = SpatialGrid::from_points(w.dim(), angle_to_chord(nodes.separation).max(1e-3), &nodes.points);
    let mut mass = vec![0.0; nodes.len()];
    for (x, &wx) in rule.points.iter().zip(&rule.weights) {
        let (i, _) = grid.nearest(&x.array()).expect("node set is nonempty");
        mass[i] += wx;
    }
    let total: f64 = mass.iter().sum();
    let floor = mass.iter().copied().filter(|&m| m > 0.0).fold(f64::INFINITY, f64::min);
    mass.iter().map(|&m| m.max(0.5 * floor) / total).collect()
}

fn max_residual(a: &DMatrix<f64>, lambda: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a * lambda - b).amax()
}

/// Fits positive weights on `nodes` matching the moments of `Π_degree`.
///
/// The weights start from the Voronoi masses and take the minimum-norm
/// relative correction; if that leaves a nonpositive weight, an NNLS solve
/// on the prior-scaled columns is used and zero weights are pruned.
pub fn solve_weights(nodes: &SeparatedSet, w: &DunklWeight, degree: usize, tol: f64) -> Result<CubatureRule> {
    if nodes.d != w.dim() {
        return domain("node set and weight disagree in dimension");
    }
    let span = SpanningSet::new(w.dim(), degree)?;
    if nodes.len() < span.len() {
        return Err(Error::Infeasible {
            message: format!("{} nodes cannot match {} moments", nodes.len(), span.len()),
            residual: f64::INFINITY,
        });
    }
    let a = design_matrix(&span, nodes);
    let b = DVector::from_vec(moments(w, degree));
    let prior = DVector::from_vec(voronoi_prior(w, nodes));
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * prior[j]);
    // minimum-norm correction u += Mᵀ (M Mᵀ)⁻¹ r with M the prior-scaled design
    let gram = &scaled * scaled.transpose();
    let chol = gram.cholesky().ok_or_else(|| Error::Infeasible {
        message: format!("node set does not resolve Π_{degree}"),
        residual: f64::INFINITY,
    })?;
    let mut u = DVector::from_element(nodes.len(), 1.0);
    for _ in 0..3 {
        let r = &b - &scaled * &u;
        u += scaled.transpose() * chol.solve(&r);
    }
    let (kept, lambda) = if u.min() > 0.0 {
        (nodes.clone(), prior.component_mul(&u))
    } else {
        let sol = nnls(&scaled, &b, 20 * nodes.len())?;
        let keep: Vec<usize> = (0..nodes.len()).filter(|&j| sol.x[j] > 0.0).collect();
        let points = keep.iter().map(|&j| nodes.points[j]).collect();
        let lambda = DVector::from_iterator(keep.len(), keep.iter().map(|&j| sol.x[j] * prior[j]));
        // pruning keeps separation; the covering radius may grow
        let pruned = SeparatedSet::from_points(nodes.d, points, nodes.seed)?;
        (SeparatedSet { separation: nodes.separation.min(pruned.separation), ..pruned }, lambda)
    };
    let residual = max_residual(&design_matrix(&span, &kept), &lambda, &b);
    if !(residual <= tol) || lambda.iter().any(|&l| l <= 0.0) {
        return Err(Error::Infeasible { message: format!("degree-{degree} moments not matched on {} nodes", nodes.len()), residual });
    }
    let weights: Vec<f64> = lambda.iter().copied().collect();
    let weight_model_bracket = weight_model_bracket(w, &kept, &weights, nodes.separation);
    Ok(CubatureRule { d: w.dim(), kappa: w.kappa().to_vec(), nodes: kept, weights, exact_degree: degree, residual, weight_model_bracket })
}

fn weight_model_bracket(w: &DunklWeight, nodes: &SeparatedSet, weights: &[f64], radius: f64) -> [f64; 2] {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (x, &l) in nodes.points.iter().zip(weights) {
        let cap = Cap::new(*x, radius.min(std::f64::consts::PI)).expect("radius is positive");
        let r = l * w.norm_const / cap_measure(w, &cap, 0);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    [lo, hi]
}

/// Builds nodes with separation `δ/degree` and solves; on infeasibility `δ`
/// is halved up to three times.
pub fn build_rule(w: &DunklWeight, degree: usize, delta: f64, seed: u64, tol: f64) -> Result<CubatureRule> {
    if degree == 0 {
        let nodes = build_maximal_separated_set(w.dim(), std::f64::consts::PI, seed)?;
        return solve_weights(&nodes, w, 0, tol);
    }
    let mut delta = delta;
    let mut last = None;
    for _ in 0..4 {
        let eps = (delta / degree as f64).min(std::f64::consts::PI);
        let nodes = build_maximal_separated_set(w.dim(), eps, seed)?;
        match solve_weights(&nodes, w, degree, tol) {
            Ok(rule) => return Ok(rule),
            Err(e @ Error::Infeasible { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
        delta *= 0.5;
    }
    Err(last.expect("at least one attempt"))
}

fn random_poly(span: &SpanningSet, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = spanning_dim(span.d, n);
    let mut c: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    c.resize(span.len(), 0.0);
    c
}

fn eval_coeffs(span: &SpanningSet, c: &[f64], x: &crate::sphere::UnitVector, buf: &mut [f64]) -> f64 {
    span.eval_into(x, buf);
    buf.iter().zip(c).map(|(a, b)| a * b).sum()
}

/// Largest `|Σ λ f(ξ) − (1/a)∫ f h²| / ‖f‖_{2,κ}` over `f ≡ 1` and `trials`
/// random elements of `Π_degree`.
pub fn exactness_check(rule: &CubatureRule, w: &DunklWeight, degree: usize, trials: usize, seed: u64) -> Result<f64> {
    if rule.d != w.dim() {
        return domain("rule and weight disagree in dimension");
    }
    let span = SpanningSet::new(w.dim(), degree)?;
    let mu = moments(w, degree);
    let norm_rule = weighted_rule(w, 2 * degree);
    let mut buf = vec![0.0; span.len()];
    let scratch = RefCell::new(vec![0.0; span.len()]);
    let mut worst = (rule.weights.iter().sum::<f64>() - 1.0).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let c = random_poly(&span, degree, &mut rng);
        let exact: f64 = c.iter().zip(&mu).map(|(a, b)| a * b).sum();
        let discrete: f64 = rule.nodes.points.iter().zip(&rule.weights).map(|(x, l)| l * eval_coeffs(&span, &c, x, &mut buf)).sum();
        let norm = (norm_rule.integrate(|x| eval_coeffs(&span, &c, x, &mut scratch.borrow_mut()).powi(2)) / w.norm_const).sqrt();
        worst = worst.max((discrete - exact).abs() / norm);
    }
    Ok(worst)
}

/// Range of discrete-to-continuous norm ratios over random `f ∈ Π_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MzBracket {
    pub p: f64,
    pub n: usize,
    pub c_low: f64,
    pub c_high: f64,
    pub trials: usize,
}

impl MzBracket {
    pub fn within(&self, c_star: f64) -> bool {
        self.c_low >= 1.0 / c_star && self.c_high <= c_star
    }
}

pub const DEFAULT_MZ_CSTAR: f64 = 16.0;

/// `(Σ λ |f(ξ)|^p)^{1/p}` (or `max |f(ξ)|`) against `‖f‖_{p,κ}`.
pub fn mz_check(rule: &CubatureRule, w: &DunklWeight, p: f64, n: usize, trials: usize, seed: u64) -> Result<MzBracket> {
    if !(p >= 1.0) {
        return domain(format!("p must be at least 1, got {p}"));
    }
    if rule.exact_degree < 3 * n {
        return domain(format!("rule of degree {} is not exact on Π_{}", rule.exact_degree, 3 * n));
    }
    let span = SpanningSet::new(w.dim(), n)?;
    let sampler = NormSampler::new(w, 8 * n + 64);
    let mut buf = vec![0.0; span.len()];
    let scratch = RefCell::new(vec![0.0; span.len()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..trials {
        let c = random_poly(&span, n, &mut rng);
        let vals: Vec<f64> = rule.nodes.points.iter().map(|x| eval_coeffs(&span, &c, x, &mut buf)).collect();
        let discrete = if p.is_infinite() {
            vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        } else {
            vals.iter().zip(&rule.weights).map(|(v, l)| l * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
        };
        let cont = sampler.norm(|x| eval_coeffs(&span, &c, x, &mut scratch.borrow_mut()), p);
        let r = discrete / cont;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok(MzBracket { p, n, c_low: lo, c_high: hi, trials })
}

/// `Σ_ξ (a λ_ξ)^{−β} / n^{(d−1)(1+β)}`.
pub fn lemma31_ratio(rule: &CubatureRule, w: &DunklWeight, beta: f64, n: usize) -> Result<f64> {
    if !(beta > 0.0) {
        return domain(format!("β must be positive, got {beta}"));
    }
    if w.gamma_kappa > 0.0 && beta >= 1.0 / (2.0 * w.gamma_kappa) {
        return domain(format!("β = {beta} is not below 1/(2γ_κ) = {}", 1.0 / (2.0 * w.gamma_kappa)));
    }
    if n == 0 {
        return domain("n must be at least 1");
    }
    if rule.weights.iter().any(|&l| l <= 0.0) {
        return domain("rule weights must be positive");
    }
    let s: f64 = rule.weights.iter().map(|&l| (l * w.norm_const).powf(-beta)).sum();
    Ok(s / (n as f64).powf((w.dim() as f64 - 1.0) * (1.0 + beta)))
}

/// Admissible `β` values `{0.25, 0.5, 0.75, 0.95}/(2γ_κ)` (`γ_κ = 0` uses `γ = 1`).
pub fn lemma31_beta_grid(w: &DunklWeight) -> Vec<f64> {
    let g = if w.gamma_kappa > 0.0 { w.gamma_kappa } else { 1.0 };
    [0.25, 0.5, 0.75, 0.95].iter().map(|f| f / (2.0 * g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::UnitVector;

    #[test]
    fn equal_spacing_gives_equal_weights() {
        let w = DunklWeight::unweighted(2).unwrap();
        let n = 6;
        let pts: Vec<UnitVector> = (0..2 * n + 1).map(|i| UnitVector::from_angle(0.2 + 2.0 * std::f64::consts::PI * i as f64 / (2 * n + 1) as f64)).collect();
        let nodes = SeparatedSet::from_points(2, pts, 0).unwrap();
        let rule = solve_weights(&nodes, &w, n, 1e-12).unwrap();
        for l in &rule.weights {
            assert!((l - 1.0 / 13.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_circle_rule() {
        let w = DunklWeight::z2d(&[0.5, 0.5]).unwrap();
        let rule = build_rule(&w, 8, DEFAULT_DELTA, 7, 1e-8).unwrap();
        assert!(rule.residual <= 1e-8);
        assert!(rule.weights.iter().all(|&l| l > 0.0));
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(exactness_check(&rule, &w, 8, 5, 1).unwrap() < 1e-9);
        let [lo, hi] = rule.weight_model_bracket;
        assert!(lo > 0.0 && hi.is_finite());
    }

    #[test]
    fn sphere_rule() {
        let w = DunklWeight::z2d(&[0.5, 0.0, 1.0]).unwrap();
        let rule = build_rule(&w, 6, DEFAULT_DELTA, 3, 1e-10).unwrap();
        assert!(exactness_check(&rule, &w, 6, 5, 2).unwrap() < 1e-9);
    }

    #[test]
    fn lemma31_limits() {
        let w = DunklWeight::unweighted(2).unwrap();
        let rule = build_rule(&w, 4, DEFAULT_DELTA, 0, 1e-10).unwrap();
        let r = lemma31_ratio(&rule, &w, 1e-9, 4).unwrap();
        assert!((r - rule.len() as f64 / 4.0).abs() < 1e-6);
        let wk = DunklWeight::z2d(&[0.5, 0.5]).unwrap();
        assert!(lemma31_ratio(&rule, &wk, 0.6, 4).is_err());
    }
}
