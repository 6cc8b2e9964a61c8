//! Numeric upper and lower bounds for entropy numbers of weighted Sobolev
//! classes, built from dyadic allocation, Schütt profiles and bump systems.
//!
//! Absolute values carry unit constants; only slopes and ratios are meaningful.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ball::{entropy_lower, schuett_value_real, trivial_radius, BallSpec, LowerMethod};
use crate::error::{domain, Error, Result};
use crate::harmonics::{
    best_approx_error, dyadic_block, frac_laplacian, random_polynomial, CorpusFunction, HarmonicBasis,
    HarmonicExpansion, NormSampler,
};
use crate::reference::{cap_integral, weighted_rule};
use crate::special::{bump_profile, eta};
use crate::sphere::{build_maximal_separated_set, min_pairwise_distance, Cap, UnitVector};
use crate::weight::{apply, DunklWeight};

pub const DEFAULT_RHO: f64 = 0.1;
/// `β = BETA_FRACTION / (2γ_κ)`, or `BETA_FRACTION` when `γ_κ = 0`.
pub const BETA_FRACTION: f64 = 0.95;
/// `#Λ_s = LAMBDA_FACTOR · 2^{s(d−1)}`; must exceed 1 so the last block is nonempty.
pub const DEFAULT_LAMBDA_FACTOR: f64 = 2.0;
/// Spectral degree per unit of `l` for the orbit-support leakage check.
pub const LEAKAGE_DEGREE_FACTOR: usize = 256;
/// Spectral degree per unit of `l` for Sobolev norms of bump combinations.
pub const EMBEDDING_DEGREE_FACTOR: usize = 16;
/// Largest `n` accepted by `lower_bound_value`.
pub const LOWER_BOUND_MAX_N: usize = 12;
const CALIBRATION_LEVELS: u32 = 24;

fn inv_exp(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

pub fn default_beta(w: &DunklWeight) -> f64 {
    if w.gamma_kappa > 0.0 {
        BETA_FRACTION / (2.0 * w.gamma_kappa)
    } else {
        BETA_FRACTION
    }
}

pub fn default_n_grid() -> Vec<usize> {
    (4..=12).map(|e| 1usize << e).collect()
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub r: f64,
    pub p: f64,
    pub q: f64,
    pub weight: DunklWeight,
    pub rho: f64,
    pub beta: f64,
    pub n_grid: Vec<usize>,
    pub lambda_factor: f64,
    /// Strip half-width `ε_{d,m}`; `None` uses `π / (64 m)`.
    pub strip_width: Option<f64>,
}

impl PipelineConfig {
    pub fn new(r: f64, p: f64, q: f64, weight: DunklWeight) -> Result<Self> {
        let beta = default_beta(&weight);
        let cfg = Self {
            r,
            p,
            q,
            weight,
            rho: DEFAULT_RHO,
            beta,
            n_grid: default_n_grid(),
            lambda_factor: DEFAULT_LAMBDA_FACTOR,
            strip_width: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn d(&self) -> usize {
        self.weight.dim()
    }

    /// `p` after the embedding `BW_p^r ⊂ BW_q^r` for `q < p`.
    pub fn effective_p(&self) -> f64 {
        if self.q < self.p {
            self.q
        } else {
            self.p
        }
    }

    /// `(1/p − 1/q)₊` with the effective `p`.
    pub fn theta(&self) -> f64 {
        (inv_exp(self.effective_p()) - inv_exp(self.q)).max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("smoothness r must be positive, got {}", self.r));
        }
        if !(self.p >= 1.0 && self.q >= 1.0) {
            return bad(format!("exponents must lie in [1, ∞], got p = {}, q = {}", self.p, self.q));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("allocation slack rho must be positive, got {}", self.rho));
        }
        let g = self.weight.gamma_kappa;
        let beta_cap = if g > 0.0 { 1.0 / (2.0 * g) } else { f64::INFINITY };
        if !(self.beta > 0.0 && self.beta < beta_cap) {
            return bad(format!("beta must lie in (0, 1/(2γ_κ)) = (0, {beta_cap}), got {}", self.beta));
        }
        if !(self.lambda_factor > 1.0 && self.lambda_factor.is_finite()) {
            return bad(format!("lambda_factor must exceed 1, got {}", self.lambda_factor));
        }
        if let Some(e) = self.strip_width {
            if !(e > 0.0 && e < PI / 4.0) {
                return bad(format!("strip width must lie in (0, π/4), got {e}"));
            }
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return bad("every grid n must be at least 2".into());
        }
        let dm1 = (self.d() - 1) as f64;
        let plus = (inv_exp(self.p) - inv_exp(self.q)).max(0.0);
        let need = dm1 * plus * (2.0 * g + 1.0);
        if self.r <= need {
            return bad(format!("smoothness hypothesis r > (d−1)(1/p−1/q)₊(2γ_κ+1) = {need} fails for r = {}", self.r));
        }
        if self.p < self.q {
            let need = (1.0 + self.rho) * dm1 * plus * (1.0 / self.beta + 1.0);
            if self.r <= need {
                return bad(format!("allocation condition r > (1+ρ)(d−1)(1/p−1/q)(1/β+1) = {need} fails for r = {}", self.r));
            }
        }
        Ok(())
    }

    fn lambda_count(&self, s: usize) -> f64 {
        (self.lambda_factor * 2f64.powf((s * (self.d() - 1)) as f64)).floor()
    }
}

/// Sizes `m_{s,1..=s+1}`: `2`, then `2^{k(d−1)} − 2^{(k−1)(d−1)}` (first
/// difference `2^{2(d−1)} − 2`), then `#Λ_s − 2^{s(d−1)}`.
pub fn block_sizes(count: f64, s: usize, d: usize) -> Vec<f64> {
    if s == 0 {
        return vec![count];
    }
    let cum = |k: usize| if k == 1 { 2.0 } else { 2f64.powf((k * (d - 1)) as f64) };
    let mut out = vec![2.0];
    for k in 2..=s {
        out.push(cum(k) - cum(k - 1));
    }
    out.push(count - cum(s));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockBudget {
    pub k: usize,
    pub size: f64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub s: usize,
    /// `#Λ_s`.
    pub count: f64,
    pub budget: u64,
    /// Secondary split index for `s > J`; `None` when the level budget is zero.
    pub j1: Option<i64>,
    pub blocks: Vec<BlockBudget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSchedule {
    pub n: u64,
    pub d: usize,
    pub j: u32,
    /// Levels `s > j0` are not allocated and enter the bound through the tail.
    pub j0: usize,
    pub c_alloc: f64,
    pub degenerate: bool,
    pub levels: Vec<LevelSchedule>,
}

impl AllocationSchedule {
    pub fn total(&self) -> u64 {
        self.levels.iter().map(|l| l.budget).sum()
    }

    /// `Σ n_s ≤ n`, `Σ_k n_{s,k} ≤ n_s`, and block sizes summing to `#Λ_s`.
    pub fn verify(&self) -> Result<()> {
        if self.total() > self.n {
            return Err(Error::Numerical(format!("level budgets {} exceed n = {}", self.total(), self.n)));
        }
        for l in &self.levels {
            let inner: u64 = l.blocks.iter().map(|b| b.budget).sum();
            if inner > l.budget {
                return Err(Error::Numerical(format!("level {} block budgets {inner} exceed {}", l.s, l.budget)));
            }
            let size: f64 = l.blocks.iter().map(|b| b.size).sum();
            if size != l.count || l.blocks.iter().any(|b| b.size < 1.0) {
                return Err(Error::Numerical(format!("level {} blocks do not partition #Λ_s", l.s)));
            }
        }
        Ok(())
    }
}

fn j0_of(j: u32, rho: f64) -> usize {
    ((1.0 + rho) * j as f64 / rho + 1e-9).floor() as usize
}

fn level_budget(cfg: &PipelineConfig, s: usize, j: u32) -> u64 {
    let dm1 = (cfg.d() - 1) as f64;
    let gap = j as f64 - s as f64;
    let slope = if s as u32 <= j { 1.0 - cfg.rho } else { 1.0 + cfg.rho };
    (cfg.lambda_count(s) * 2f64.powf(slope * dm1 * gap)).floor() as u64
}

fn raw_level_sum(cfg: &PipelineConfig, j: u32) -> u64 {
    (0..=j0_of(j, cfg.rho)).map(|s| level_budget(cfg, s, j)).sum()
}

/// `sup_{J ≤ 24} Σ_s n_s(J) / 2^{J(d−1)}`.
pub fn calibrate_c_alloc(cfg: &PipelineConfig) -> f64 {
    let dm1 = (cfg.d() - 1) as f64;
    (0..=CALIBRATION_LEVELS).map(|j| raw_level_sum(cfg, j) as f64 / 2f64.powf(j as f64 * dm1)).fold(0.0, f64::max)
}

/// Proportional shrink so the budgets fit under `cap`.
fn fit_budgets(raw: &[f64], cap: u64) -> Vec<u64> {
    let total: f64 = raw.iter().sum();
    let scale = if total > cap as f64 { cap as f64 / total } else { 1.0 };
    raw.iter().map(|r| (r * scale).floor().max(0.0) as u64).collect()
}

fn level_schedule(cfg: &PipelineConfig, s: usize, j: u32, budget: u64) -> LevelSchedule {
    let d = cfg.d();
    let dm1 = (d - 1) as f64;
    let count = cfg.lambda_count(s);
    let sizes = block_sizes(count, s, d);
    let (raw, j1): (Vec<f64>, Option<i64>) = if s as u32 <= j {
        let raw = sizes
            .iter()
            .enumerate()
            .map(|(i, m)| (2f64.powf((1.0 - cfg.rho) * dm1 * (j as f64 - (i + 1) as f64)) * m).floor())
            .collect();
        (raw, None)
    } else if budget == 0 {
        (vec![0.0; sizes.len()], None)
    } else {
        let j1 = ((budget as f64).log2() / dm1).floor() as i64;
        let raw = sizes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let k = (i + 1) as i64;
                let slope = if k <= j1 { 1.0 - cfg.rho } else { 1.0 + cfg.rho };
                (2f64.powf(slope * dm1 * (j1 - k) as f64) * m).floor()
            })
            .collect();
        (raw, Some(j1))
    };
    let budgets = fit_budgets(&raw, budget);
    let blocks = sizes
        .into_iter()
        .zip(budgets)
        .enumerate()
        .map(|(i, (size, budget))| BlockBudget { k: i + 1, size, budget })
        .collect();
    LevelSchedule { s, count, budget, j1, blocks }
}

/// Dyadic budget schedule for `n` bits.
pub fn allocate(n: u64, cfg: &PipelineConfig) -> Result<AllocationSchedule> {
    cfg.validate()?;
    if n < 2 {
        return domain(format!("n must be at least 2, got {n}"));
    }
    let d = cfg.d();
    let dm1 = (d - 1) as f64;
    let c_alloc = calibrate_c_alloc(cfg);
    let ratio = n as f64 / c_alloc;
    let schedule = if ratio < 1.0 {
        let level = level_schedule(cfg, 0, 0, level_budget(cfg, 0, 0).min(n));
        AllocationSchedule { n, d, j: 0, j0: 0, c_alloc, degenerate: true, levels: vec![level] }
    } else {
        let mut j = (ratio.log2() / dm1 + 1e-12).floor() as u32;
        while j > 0 && raw_level_sum(cfg, j) > n {
            j -= 1;
        }
        let j0 = j0_of(j, cfg.rho);
        let levels = (0..=j0).map(|s| level_schedule(cfg, s, j, level_budget(cfg, s, j))).collect();
        AllocationSchedule { n, d, j, j0, c_alloc, degenerate: false, levels }
    };
    schedule.verify()?;
    Ok(schedule)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub n: u64,
    pub j: u32,
    pub j0: usize,
    /// Sum over the allocated levels `s ≤ j0`.
    pub explicit: f64,
    /// Closed-form bound for `s > j0` with every entropy number replaced by 1.
    pub tail: f64,
    pub value: f64,
}

fn block_entropy(budget: u64, size: f64, p: f64, q: f64) -> Result<f64> {
    if budget == 0 {
        // e_0 of the unit ball: a single center at the origin
        return Ok(trivial_radius(1, p, q));
    }
    schuett_value_real(budget as f64, size, p, q)
}

/// `Σ_{s > S−1} term_s` with every `e = 1`.
fn trivial_tail(cfg: &PipelineConfig, start: usize) -> Result<f64> {
    let dm1 = (cfg.d() - 1) as f64;
    let theta = cfg.theta();
    let a = dm1 * theta / cfg.beta;
    let b = cfg.r - theta * dm1;
    let sf = start as f64;
    if a == 0.0 {
        let x = 2f64.powf(-b);
        return Ok(x.powf(sf) * ((sf + 1.0) - sf * x) / ((1.0 - x) * (1.0 - x)));
    }
    if b - a <= 0.0 {
        return Err(Error::Hypothesis(format!("the level series diverges: r − (d−1)θ(1 + 1/β) = {} ≤ 0", b - a)));
    }
    let c = cfg.lambda_factor.powf(theta / cfg.beta) * 2f64.powf(a) / (2f64.powf(a) - 1.0);
    let x = 2f64.powf(-(b - a));
    Ok(c * x.powf(sf) / (1.0 - x))
}

/// The level series evaluated on `allocate(n)` with Schütt profiles (unit
/// constant) for every block and a closed-form tail.
pub fn upper_bound_value(n: u64, cfg: &PipelineConfig) -> Result<UpperBoundReport> {
    let sched = allocate(n, cfg)?;
    let dm1 = (cfg.d() - 1) as f64;
    let theta = cfg.theta();
    let (p, q) = (cfg.effective_p(), cfg.q);
    let mut explicit = 0.0;
    for level in &sched.levels {
        let s = level.s as f64;
        let outer = 2f64.powf(-s * (cfg.r - theta * dm1));
        let mut inner = 0.0;
        for b in &level.blocks {
            let factor = (level.count / 2f64.powf((b.k - 1) as f64 * dm1)).powf(theta / cfg.beta);
            inner += factor * block_entropy(b.budget, b.size, p, q)?;
        }
        explicit += outer * inner;
    }
    let tail = trivial_tail(cfg, sched.levels.len())?;
    let value = explicit + tail;
    if !value.is_finite() {
        return Err(Error::Hypothesis("upper bound series is not finite".into()));
    }
    Ok(UpperBoundReport { n, j: sched.j, j0: sched.j0, explicit, tail, value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub n_grid: Vec<usize>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub target_exponent: f64,
    pub residuals: Vec<f64>,
}

/// Least-squares slope of `log value` against `log n`.
pub fn rate_regression(n_grid: &[usize], values: &[f64], target_exponent: f64) -> Result<RateReport> {
    if n_grid.len() != values.len() {
        return domain("grid and values differ in length");
    }
    if n_grid.len() < 4 {
        return domain(format!("rate regression needs at least 4 grid points, got {}", n_grid.len()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return domain(format!("values must be positive and finite, got {v}"));
    }
    let (slope, intercept) = least_squares(n_grid, values);
    let residuals = n_grid
        .iter()
        .zip(values)
        .map(|(&n, &v)| v.ln() - (intercept + slope * (n as f64).ln()))
        .collect();
    Ok(RateReport { n_grid: n_grid.to_vec(), values: values.to_vec(), slope, intercept, target_exponent, residuals })
}

fn least_squares(n_grid: &[usize], values: &[f64]) -> (f64, f64) {
    let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Regression slope over each prefix of at least two points; `None` before that.
pub fn running_slopes(n_grid: &[usize], values: &[f64]) -> Vec<Option<f64>> {
    (1..=n_grid.len())
        .map(|i| (i >= 2).then(|| least_squares(&n_grid[..i], &values[..i]).0))
        .collect()
}

/// Upper-bound values along `cfg.n_grid` and their regression against `−r/(d−1)`.
pub fn upper_rate(cfg: &PipelineConfig) -> Result<RateReport> {
    let values = cfg.n_grid.iter().map(|&n| upper_bound_value(n as u64, cfg).map(|r| r.value)).collect::<Result<Vec<_>>>()?;
    rate_regression(&cfg.n_grid, &values, -cfg.r / (cfg.d() - 1) as f64)
}

/// Disjoint bumps `φ(l·d(x, x_i))` centred away from the root hyperplanes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSystem {
    pub d: usize,
    pub l: usize,
    pub centers: Vec<UnitVector>,
    pub strip_width: f64,
    /// Normalized measure bound `Σ_j |E_j| / |S^{d−1}|`.
    pub strip_fraction: f64,
    pub roots: Vec<UnitVector>,
    pub seed: u64,
}

impl BumpSystem {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn radius(&self) -> f64 {
        1.0 / self.l as f64
    }

    pub fn bump(&self, i: usize, x: &UnitVector) -> f64 {
        bump_profile(self.l as f64 * angle(&self.centers[i], x))
    }

    /// `f_a(x) = Σ a_i φ_i(x)`; at most one term is nonzero.
    pub fn combination(&self, a: &[f64], x: &UnitVector) -> f64 {
        let r = self.radius();
        self.centers
            .iter()
            .zip(a)
            .find(|(c, _)| angle(c, x) < r)
            .map(|(c, ai)| ai * bump_profile(self.l as f64 * angle(c, x)))
            .unwrap_or(0.0)
    }

    /// Pairwise disjoint caps and strip avoidance, as exact predicates.
    pub fn verify(&self) -> Result<()> {
        let r = self.radius();
        if self.len() >= 2 && min_pairwise_distance(&self.centers) <= 2.0 * r {
            return Err(Error::Numerical("bump caps overlap".into()));
        }
        for c in &self.centers {
            for v in &self.roots {
                let off = c.dot(v).abs().min(1.0).asin();
                if off <= 2.0 * self.strip_width || off < self.strip_width + r {
                    return Err(Error::Numerical("a bump cap meets a root strip".into()));
                }
            }
        }
        Ok(())
    }
}

fn angle(a: &UnitVector, b: &UnitVector) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

fn active_roots(w: &DunklWeight) -> Vec<UnitVector> {
    w.roots().active().map(|(v, _)| *v).collect()
}

pub fn default_strip_width(w: &DunklWeight) -> f64 {
    PI / (64.0 * active_roots(w).len().max(1) as f64)
}

/// `Σ_j |E_j| / |S^{d−1}|` for strips `|π/2 − d(x, v_j)| ≤ 2ε`.
pub fn strip_fraction(d: usize, eps: f64, strips: usize) -> f64 {
    let one = if d == 2 { 4.0 * eps / PI } else { (2.0 * eps).sin() };
    strips as f64 * one
}

pub fn build_bump_system(l: usize, cfg: &PipelineConfig, seed: u64) -> Result<BumpSystem> {
    let w = &cfg.weight;
    let d = w.dim();
    if l == 0 {
        return domain("l must be at least 1");
    }
    let roots = active_roots(w);
    let eps = cfg.strip_width.unwrap_or_else(|| default_strip_width(w));
    let fraction = strip_fraction(d, eps, roots.len());
    if fraction > 0.5 {
        return Err(Error::Infeasible {
            message: format!("root strips cover more than half the sphere; use a strip width below {eps}"),
            residual: fraction,
        });
    }
    let r = 1.0 / l as f64;
    if 2.0 * r >= PI {
        return domain(format!("l = {l} is too small for disjoint caps"));
    }
    let set = build_maximal_separated_set(d, 2.0 * r * (1.0 + 1e-9), seed)?;
    let clearance = (2.0 * eps).max(eps + r);
    let centers: Vec<UnitVector> = set
        .points
        .into_iter()
        .filter(|c| roots.iter().all(|v| c.dot(v).abs().min(1.0).asin() > clearance))
        .collect();
    if centers.is_empty() {
        return Err(Error::Infeasible {
            message: format!("no bump centers survive the root strips at l = {l}; use a smaller strip width than {eps}"),
            residual: fraction,
        });
    }
    let sys = BumpSystem { d, l, centers, strip_width: eps, strip_fraction: fraction, roots, seed };
    sys.verify()?;
    Ok(sys)
}

/// Smallest `l` whose bump system has `N ≥ 2n` bumps.
pub fn bump_system_for(n: usize, cfg: &PipelineConfig, seed: u64) -> Result<BumpSystem> {
    let mut last = None;
    for l in 2..=4096 {
        match build_bump_system(l, cfg, seed) {
            Ok(sys) if sys.len() >= 2 * n => return Ok(sys),
            Ok(_) => {}
            Err(e @ Error::Infeasible { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::Infeasible { message: format!("no bump system reaches N ≥ {}", 2 * n), residual: 0.0 }))
}


/// Orbit of every center under the reflection group.
pub fn orbit_centers(sys: &BumpSystem, w: &DunklWeight) -> Result<Vec<Vec<UnitVector>>> {
    let group = w.roots().group_elements()?;
    Ok(sys.centers.iter().map(|c| group.iter().map(|g| apply(g, c)).collect()).collect())
}

/// Points for overlap and leakage scans.
fn scan_points(d: usize, density: usize) -> Vec<UnitVector> {
    if d == 2 {
        (0..density).map(|i| UnitVector::from_angle(2.0 * PI * (i as f64 + 0.5) / density as f64)).collect()
    } else {
        let unweighted = DunklWeight::unweighted(3).expect("d = 3 is valid");
        weighted_rule(&unweighted, density.max(16)).points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub bump: usize,
    pub degree: usize,
    /// `max |Δ_{h,0} φ_i|` outside the orbit caps.
    pub outside_max: f64,
    pub overall_max: f64,
    pub relative: f64,
    /// Relative `L_2` energy of `Δ_{h,0} φ_i` in degrees above `degree / 2`.
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpNormReport {
    pub p: f64,
    pub l: usize,
    pub count: usize,
    pub trials: usize,
    /// `‖f_a‖_{p,κ} / (l^{−(d−1)/p} ‖a‖_p)` extremes over the trials.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// `l^{(d−1)/p} ‖φ_i‖_{p,κ}` for each bump.
    pub single: Vec<f64>,
    pub max_overlap: usize,
    pub group_order: usize,
}

/// `(1/a) ∫ φ_i^p h_κ² dσ` for each bump.
fn bump_moments(sys: &BumpSystem, w: &DunklWeight, p: f64) -> Result<Vec<f64>> {
    sys.centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let cap = Cap::new(*c, sys.radius())?;
            Ok(cap_integral(w, &cap, 1, |x| sys.bump(i, x).powf(p)) / w.norm_const)
        })
        .collect()
}

pub fn verify_bump_norms(sys: &BumpSystem, cfg: &PipelineConfig, p: f64, trials: usize, seed: u64) -> Result<BumpNormReport> {
    let w = &cfg.weight;
    let dm1 = (sys.d - 1) as f64;
    let lf = sys.l as f64;
    let (single, mut ratio_min, mut ratio_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..trials).map(|_| (0..sys.len()).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    ratio_min = f64::INFINITY;
    ratio_max = 0.0f64;
    if p.is_infinite() {
        single = sys.centers.iter().enumerate().map(|(i, c)| sys.bump(i, c)).collect();
        for a in &draws {
            let top = sys.centers.iter().map(|c| sys.combination(a, c).abs()).fold(0.0, f64::max);
            let ratio = top / a.iter().map(|v| v.abs()).fold(0.0, f64::max);
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
        }
    } else {
        let moments = bump_moments(sys, w, p)?;
        let scale = lf.powf(dm1);
        single = moments.iter().map(|m| (m * scale).powf(1.0 / p)).collect();
        for a in &draws {
            let num: f64 = a.iter().zip(&moments).map(|(ai, m)| ai.abs().powf(p) * m).sum();
            let den: f64 = a.iter().map(|ai| ai.abs().powf(p)).sum();
            let ratio = (num * scale / den).powf(1.0 / p);
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
        }
    }
    let orbits = orbit_centers(sys, w)?;
    let r = sys.radius();
    let mut max_overlap = 0;
    for x in scan_points(sys.d, 64 * sys.l.max(8)) {
        let hits = orbits.iter().filter(|orb| orb.iter().any(|c| angle(c, &x) <= r)).count();
        max_overlap = max_overlap.max(hits);
    }
    let group_order = orbits.first().map_or(1, |o| o.len());
    Ok(BumpNormReport { p, l: sys.l, count: sys.len(), trials, ratio_min, ratio_max, single, max_overlap, group_order })
}

fn require_circle(w: &DunklWeight) -> Result<()> {
    if w.dim() != 2 {
        return Err(Error::Capability("spectral bump computations are implemented on the circle".into()));
    }
    Ok(())
}

/// Expansion of bump `i` through degree `degree`.
fn bump_expansion(sys: &BumpSystem, w: &DunklWeight, i: usize, basis: &Arc<HarmonicBasis>) -> HarmonicExpansion {
    let rule = weighted_rule(w, 2 * basis.max_degree() + 64);
    basis.expand_with_rule(|x| sys.bump(i, x), &rule)
}

/// `Δ_{h,0} φ_i` from a smoothed spectral expansion, scanned inside and
/// outside the group orbit of its cap.
pub fn orbit_leakage(sys: &BumpSystem, w: &DunklWeight, i: usize, degree: Option<usize>) -> Result<LeakageReport> {
    require_circle(w)?;
    if i >= sys.len() {
        return domain(format!("bump index {i} out of range"));
    }
    let degree = degree.unwrap_or(LEAKAGE_DEGREE_FACTOR * sys.l);
    let basis = HarmonicBasis::get(w, degree)?;
    let phi = bump_expansion(sys, w, i, &basis);
    let half = (degree / 2).max(1) as f64;
    let lambda = w.lambda_kappa;
    let eig = |k: usize| {
        let kf = k as f64;
        -kf * (kf + 2.0 * lambda)
    };
    let lap = phi.map_degrees(|k| eig(k) * eta(k as f64 / half));
    let blocks = phi.block_norms();
    let energy = |lo: usize| -> f64 { blocks.iter().enumerate().skip(lo).map(|(k, b)| (eig(k) * b).powi(2)).sum() };
    let tail = (energy(half as usize + 1) / energy(0).max(1e-300)).sqrt();
    let orbit = &orbit_centers(sys, w)?[i];
    let r = sys.radius();
    let (mut outside_max, mut overall_max) = (0.0f64, 0.0f64);
    let pts = scan_points(2, 16 * degree);
    for (x, v) in pts.iter().zip(lap.eval_many(&pts)) {
        overall_max = overall_max.max(v.abs());
        if orbit.iter().all(|c| angle(c, x) > r) {
            outside_max = outside_max.max(v.abs());
        }
    }
    Ok(LeakageReport { bump: i, degree, outside_max, overall_max, relative: outside_max / overall_max.max(1e-300), tail })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub n: usize,
    pub l: usize,
    pub degree: usize,
    pub trials: usize,
    /// `min_a n^{r/(d−1)} ‖f_a‖_p / ‖f_a‖_{W_p^r}`.
    pub constant: f64,
    /// `max_a ‖(−Δ_{h,0})^{r/2} f_a‖_p / (l^r ‖f_a‖_p)`.
    pub sobolev_ratio_max: f64,
}

/// Measured `c` with `c n^{−r/(d−1)} (BL_p ∩ A_N) ⊂ BW_p^r ∩ A_N` on random `a`.
pub fn sobolev_embedding(sys: &BumpSystem, cfg: &PipelineConfig, n: usize, trials: usize, seed: u64) -> Result<EmbeddingReport> {
    let w = &cfg.weight;
    require_circle(w)?;
    let degree = EMBEDDING_DEGREE_FACTOR * sys.l;
    let basis = HarmonicBasis::get(w, degree)?;
    let bumps: Vec<HarmonicExpansion> = (0..sys.len()).map(|i| bump_expansion(sys, w, i, &basis)).collect();
    let sampler = NormSampler::new(w, 2 * degree + 64);
    let p = cfg.p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let dm1 = (sys.d - 1) as f64;
    let (mut constant, mut ratio_max) = (f64::INFINITY, 0.0f64);
    for t in 0..trials.max(1) {
        let a: Vec<f64> = if t < sys.len().min(trials) {
            (0..sys.len()).map(|j| if j == t { 1.0 } else { 0.0 }).collect()
        } else {
            (0..sys.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
        };
        let mut f = bumps[0].map_degrees(|_| 0.0);
        for (ai, b) in a.iter().zip(&bumps) {
            f = f.combine(b, 1.0, *ai)?;
        }
        let g = frac_laplacian(&f, cfg.r)?;
        let fp = sampler.norm(|x| sys.combination(&a, x), p);
        let gp = sampler.norm(|x| g.eval(x), p);
        constant = constant.min(nf.powf(cfg.r / dm1) * fp / (fp + gp));
        ratio_max = ratio_max.max(gp / ((sys.l as f64).powf(cfg.r) * fp));
    }
    Ok(EmbeddingReport { n, l: sys.l, degree, trials: trials.max(1), constant, sobolev_ratio_max: ratio_max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub n: usize,
    /// Dimension `N = 2n` of the embedded ball.
    pub ball_dim: usize,
    pub l: usize,
    pub bumps: usize,
    pub entropy_lower: f64,
    pub entropy_method: LowerMethod,
    pub embedding_constant: f64,
    /// `n^{−r/(d−1)+1/p−1/q} · e_n(Bℓ_p^N, ℓ_q^N)` before the constant.
    pub bare: f64,
    pub value: f64,
}

/// `c · n^{−r/(d−1)+1/p−1/q} · e_n(Bℓ_p^{2n}, ℓ_q^{2n})` with `c` measured.
pub fn lower_bound_value(n: usize, cfg: &PipelineConfig, trials: usize, seed: u64) -> Result<LowerBoundReport> {
    cfg.validate()?;
    if !(1..=LOWER_BOUND_MAX_N).contains(&n) {
        return domain(format!("lower bounds are computed for 1 ≤ n ≤ {LOWER_BOUND_MAX_N}, got {n}"));
    }
    let sys = bump_system_for(n, cfg, seed)?;
    let emb = sobolev_embedding(&sys, cfg, n, trials, seed)?;
    let ball_dim = 2 * n;
    let (entropy, method, _) = entropy_lower(&BallSpec::uniform(ball_dim, cfg.p, cfg.q)?, n, seed)?;
    let dm1 = (cfg.d() - 1) as f64;
    let nf = n as f64;
    let bare = nf.powf(-cfg.r / dm1 + inv_exp(cfg.p) - inv_exp(cfg.q)) * entropy;
    Ok(LowerBoundReport {
        n,
        ball_dim,
        l: sys.l,
        bumps: sys.len(),
        entropy_lower: entropy,
        entropy_method: method,
        embedding_constant: emb.constant,
        bare,
        value: emb.constant * bare,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSample {
    pub n: usize,
    pub constant: f64,
    /// Index into the corpus, or `None` for the scale-matched random harmonic.
    pub worst: Option<usize>,
}

fn corpus_expansions(
    basis: &Arc<HarmonicBasis>,
    corpus: &[CorpusFunction],
    extremal_degree: usize,
    seed: u64,
) -> Result<Vec<(Option<usize>, HarmonicExpansion)>> {
    let d = basis.spanning().d;
    let rule = weighted_rule(basis.weight(), 2 * basis.max_degree() + 64);
    let mut out = Vec::with_capacity(corpus.len() + 1);
    for (i, c) in corpus.iter().enumerate() {
        let f = c.realize(d)?;
        out.push((Some(i), basis.expand_with_rule(|x| f(x), &rule)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.push((None, random_polynomial(basis, extremal_degree, &mut rng).block(extremal_degree)));
    Ok(out)
}

fn sup_ratio(samples: impl Iterator<Item = (Option<usize>, f64)>) -> (f64, Option<usize>) {
    samples.fold((0.0, None), |(best, arg), (i, v)| if v > best { (v, i) } else { (best, arg) })
}

/// `max_f E_n(f)_{p,κ} n^r / ‖(−Δ_{h,0})^{r/2} f‖_{p,κ}` over the corpus plus
/// a random harmonic of degree `n + 1`; `E_n` uses the upper bracket end.
pub fn jackson_constants(w: &DunklWeight, r: f64, p: f64, ns: &[usize], corpus: &[CorpusFunction], seed: u64) -> Result<Vec<ConstantSample>> {
    ns.iter()
        .map(|&n| {
            let basis = HarmonicBasis::get(w, 4 * n.max(2))?;
            let sampler = NormSampler::new(w, 2 * basis.max_degree() + 16);
            let funcs = corpus_expansions(&basis, corpus, n + 1, seed ^ n as u64)?;
            let mut vals = Vec::with_capacity(funcs.len());
            for (i, e) in &funcs {
                let g = frac_laplacian(e, r)?;
                let gn = sampler.norm(|x| g.eval(x), p);
                if gn <= 1e-12 * e.norm2().max(1e-300) {
                    continue;
                }
                let en = best_approx_error(e, n, p)?.upper;
                vals.push((*i, en * (n as f64).powf(r) / gn));
            }
            let (constant, worst) = sup_ratio(vals.into_iter());
            Ok(ConstantSample { n, constant, worst })
        })
        .collect()
}

/// `max_f ‖A_s f‖_{p,κ} 2^{sr} / ‖(−Δ_{h,0})^{r/2} f‖_{p,κ}` over the corpus
/// plus a random harmonic of degree `2^s`.
pub fn block_decay_constants(w: &DunklWeight, r: f64, p: f64, levels: &[u32], corpus: &[CorpusFunction], seed: u64) -> Result<Vec<ConstantSample>> {
    levels
        .iter()
        .map(|&s| {
            let top = 1usize << (s + 1);
            let basis = HarmonicBasis::get(w, 2 * top)?;
            let sampler = NormSampler::new(w, 2 * basis.max_degree() + 16);
            let funcs = corpus_expansions(&basis, corpus, 1 << s, seed ^ s as u64)?;
            let mut vals = Vec::with_capacity(funcs.len());
            for (i, e) in &funcs {
                let g = frac_laplacian(e, r)?;
                let gn = sampler.norm(|x| g.eval(x), p);
                if gn <= 1e-12 * e.norm2().max(1e-300) {
                    continue;
                }
                let a = dyadic_block(e, s)?;
                let an = sampler.norm(|x| a.eval(x), p);
                vals.push((*i, an * 2f64.powf(s as f64 * r) / gn));
            }
            let (constant, worst) = sup_ratio(vals.into_iter());
            Ok(ConstantSample { n: 1 << s, constant, worst })
        })
        .collect()
}

/// `‖(−Δ)^{r/2} f‖ / (‖(−Δ)^v f‖^{r/2v} ‖f‖^{1−r/2v})` for `v > r/2`.
pub fn kolmogorov_ratio(e: &HarmonicExpansion, r: f64, v: u32, p: f64) -> Result<f64> {
    let vf = v as f64;
    if !(r > 0.0 && 2.0 * vf > r) {
        return domain("need 0 < r < 2v");
    }
    let sampler = NormSampler::new(e.weight(), 2 * e.max_degree() + 16);
    let frac = frac_laplacian(e, r)?;
    let high = frac_laplacian(e, 2.0 * vf)?;
    let nf = sampler.norm(|x| e.eval(x), p);
    let nr = sampler.norm(|x| frac.eval(x), p);
    let nv = sampler.norm(|x| high.eval(x), p);
    let theta = r / (2.0 * vf);
    let den = nv.powf(theta) * nf.powf(1.0 - theta);
    if den <= 0.0 {
        return domain("test function is constant");
    }
    Ok(nr / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(r: f64, p: f64, q: f64, kappa: &[f64]) -> PipelineConfig {
        let w = if kappa.iter().all(|k| *k == 0.0) {
            DunklWeight::unweighted(kappa.len()).unwrap()
        } else {
            DunklWeight::z2d(kappa).unwrap()
        };
        PipelineConfig::new(r, p, q, w).unwrap()
    }

    #[test]
    fn schedules_fit_their_budgets() {
        let c = cfg(3.0, 2.0, 2.0, &[0.5, 0.5]);
        for e in 1..=12 {
            let s = allocate(1 << e, &c).unwrap();
            assert!(s.total() <= 1 << e);
        }
        let tiny = allocate(2, &c).unwrap();
        assert!(tiny.degenerate);
        assert_eq!(tiny.levels.len(), 1);
        assert_eq!(tiny.levels[0].blocks.len(), 1);
    }

    #[test]
    fn block_sizes_partition() {
        assert_eq!(block_sizes(16.0, 3, 2), vec![2.0, 2.0, 4.0, 8.0]);
        assert_eq!(block_sizes(2.0, 0, 2), vec![2.0]);
    }

    #[test]
    fn hypothesis_rejected() {
        let w = DunklWeight::z2d(&[0.5, 0.5]).unwrap();
        assert!(matches!(PipelineConfig::new(0.5, 1.0, 2.0, w), Err(Error::Config(_))));
    }

    #[test]
    fn exact_power_law_slope() {
        let ns: Vec<usize> = (4..=10).map(|e| 1 << e).collect();
        let vs: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powi(-2)).collect();
        let rep = rate_regression(&ns, &vs, -2.0).unwrap();
        assert!((rep.slope + 2.0).abs() < 1e-10);
        assert!(rate_regression(&ns[..3], &vs[..3], -2.0).is_err());
    }

    #[test]
    fn unweighted_bumps_have_no_strips() {
        let c = cfg(2.0, 2.0, 2.0, &[0.0, 0.0]);
        let sys = build_bump_system(8, &c, 1).unwrap();
        assert!(sys.roots.is_empty());
        assert_eq!(sys.len(), (8.0 * PI).floor() as usize);
    }
}
