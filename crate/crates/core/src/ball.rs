//! Weighted sequence spaces `ℓ_{p,w}^m`, the dyadic block reduction for
//! weighted balls, and certified entropy-number brackets for `Bℓ_p^m` in
//! `ℓ_q^m`.
//!
//! Entropy numbers use `2^k` centers: `e_k(K, X)` is the least `ε` such that
//! `K` is covered by `2^k` balls of radius `ε`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special::ln_gamma;

/// Largest center or packing list serialized with a certificate.
pub const MAX_LISTED_POINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedVector {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedVector {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, values.len())?;
        Ok(Self { values, weights })
    }

    pub fn uniform(values: Vec<f64>) -> Self {
        let weights = vec![1.0; values.len()];
        Self { values, weights }
    }
}

fn check_weights(w: &[f64], m: usize) -> Result<()> {
    if w.len() != m {
        return domain(format!("{} weights for {m} coordinates", w.len()));
    }
    if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return domain("weights must be positive and finite");
    }
    Ok(())
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return domain(format!("exponent must lie in [1, ∞], got {p}"));
    }
    Ok(())
}

/// `(Σ |x_i|^p w_i)^{1/p}`; `p = ∞` gives `max |x_i|` without weights.
pub fn weighted_norm(x: &WeightedVector, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(norm_w(&x.values, &x.weights, p))
}

fn norm_w(x: &[f64], w: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return x.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    x.iter().zip(w).map(|(v, wi)| v.abs().powf(p) * wi).sum::<f64>().powf(1.0 / p)
}

fn norm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return x.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    if p == 2.0 {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn dist(x: &[f64], y: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return x.iter().zip(y).fold(0.0, |m, (a, b)| m.max((a - b).abs()));
    }
    x.iter().zip(y).map(|(a, b)| (a - b).abs().powf(q)).sum::<f64>().powf(1.0 / q)
}

/// `U: ℓ_{p,w} → ℓ_{p,v}` with `v_i = w_i^{1−p/q}` and `(Ux)_i = x_i w_i^{1/q}`,
/// so that `‖Ux‖_{p,v} = ‖x‖_{p,w}` and `‖Ux‖_q = ‖x‖_{q,w}`.
pub fn isometry_u(x: &WeightedVector, p: f64, q: f64) -> Result<WeightedVector> {
    check_exponent(p)?;
    check_exponent(q)?;
    if p > q {
        return domain("the isometry requires p ≤ q");
    }
    let r = if q.is_infinite() { 0.0 } else { 1.0 / q };
    let weights = x.weights.iter().map(|w| w.powf(1.0 - p * r)).collect();
    let values = x.values.iter().zip(&x.weights).map(|(v, w)| v * w.powf(r)).collect();
    Ok(WeightedVector { values, weights })
}

/// Outcome of checking `w_{(j)}^{−1} ≤ (m/j)^{1/γ}` for ascending `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedWeightReport {
    pub m: usize,
    pub gamma: f64,
    /// `Σ w_j^{−γ}`.
    pub sum: f64,
    pub hypothesis_holds: bool,
    /// `None` when the hypothesis fails.
    pub bound_holds: Option<bool>,
    /// `max_j w_{(j)}^{−1} / (m/j)^{1/γ}`.
    pub worst_ratio: f64,
}

pub fn sorted_weight_bound(w: &[f64], gamma: f64) -> Result<SortedWeightReport> {
    check_weights(w, w.len())?;
    if !(gamma > 0.0) {
        return domain("γ must be positive");
    }
    let m = w.len();
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sum: f64 = sorted.iter().map(|x| x.powf(-gamma)).sum();
    let hypothesis_holds = sum <= m as f64 * (1.0 + 1e-12);
    let worst_ratio = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| x.recip() / (m as f64 / (i + 1) as f64).powf(1.0 / gamma))
        .fold(0.0, f64::max);
    let bound_holds = hypothesis_holds.then_some(worst_ratio <= 1.0 + 1e-12);
    Ok(SortedWeightReport { m, gamma, sum, hypothesis_holds, bound_holds, worst_ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub m: usize,
    pub p: f64,
    pub q: f64,
    /// `None` means uniform weights.
    pub weights: Option<Vec<f64>>,
}

impl BallSpec {
    pub fn uniform(m: usize, p: f64, q: f64) -> Result<Self> {
        let s = Self { m, p, q, weights: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return domain("m must be at least 1");
        }
        check_exponent(self.p)?;
        check_exponent(self.q)?;
        if let Some(w) = &self.weights {
            check_weights(w, self.m)?;
        }
        Ok(())
    }

    fn is_uniform(&self) -> bool {
        self.weights.as_ref().is_none_or(|w| w.iter().all(|&x| x == 1.0))
    }
}

/// One dyadic block of the weighted-ball reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionBlock {
    /// First index (0-based) in ascending weight order.
    pub start: usize,
    pub size: usize,
    /// Entropy index `n_k` spent on the block.
    pub budget: usize,
    /// `(m/2^{k−1})^{(1/γ)(1/p−1/q)}`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionPlan {
    pub m: usize,
    pub j0: u32,
    pub blocks: Vec<ReductionBlock>,
}

impl ReductionPlan {
    /// `Σ scale_k · e(m_k, n_k)` for an entropy estimate `e` of `Bℓ_p^{m_k}` in `ℓ_q^{m_k}`.
    pub fn implied_bound(&self, mut e: impl FnMut(usize, usize) -> f64) -> f64 {
        self.blocks.iter().map(|b| b.scale * e(b.size, b.budget)).sum()
    }
}

fn inv_exp(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Splits ascending-sorted indices into `m_1 = 2, m_k = 2^{k−1}` (the last
/// block absorbing the remainder) and spreads `k_budget` greedily over the
/// blocks by the marginal decrease of `scale_k · schuett_value`.
pub fn dyadic_reduce(spec: &BallSpec, gamma: f64, k_budget: usize) -> Result<ReductionPlan> {
    spec.validate()?;
    if !(gamma > 0.0) {
        return domain("γ must be positive");
    }
    if let Some(w) = &spec.weights {
        let report = sorted_weight_bound(w, gamma)?;
        if !report.hypothesis_holds {
            return Err(Error::Hypothesis(format!("Σ w^(−γ) = {} exceeds m = {}", report.sum, spec.m)));
        }
    }
    let m = spec.m;
    let j0 = usize::BITS - 1 - m.leading_zeros();
    let expo = (inv_exp(spec.p) - inv_exp(spec.q)) / gamma;
    let mut blocks = Vec::new();
    if j0 == 0 {
        blocks.push(ReductionBlock { start: 0, size: m, budget: 0, scale: (m as f64).powf(expo) });
    }
    for k in 1..=j0 {
        let start = if k == 1 { 0 } else { 1usize << (k - 1) };
        let end = if k == j0 { m } else { 1usize << k };
        let scale = (m as f64 / 2f64.powi(k as i32 - 1)).powf(expo);
        blocks.push(ReductionBlock { start, size: end - start, budget: 0, scale });
    }
    let value = |b: &ReductionBlock, n: usize| {
        if n == 0 {
            b.scale * trivial_radius(b.size, spec.p, spec.q)
        } else {
            b.scale * schuett_value(n, b.size, spec.p, spec.q).unwrap_or(0.0)
        }
    };
    for _ in 0..k_budget {
        let best = (0..blocks.len())
            .map(|i| (i, value(&blocks[i], blocks[i].budget) - value(&blocks[i], blocks[i].budget + 1)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        blocks[best.0].budget += 1;
    }
    Ok(ReductionPlan { m, j0, blocks })
}

fn log2(x: f64) -> f64 {
    x.log2()
}

/// Three-regime entropy profile of `Bℓ_p^m` in `ℓ_q^m` with unit constants.
pub fn schuett_value(k: usize, m: usize, p: f64, q: f64) -> Result<f64> {
    if k == 0 || m == 0 {
        return domain("k and m must be at least 1");
    }
    schuett_value_real(k as f64, m as f64, p, q)
}

/// `schuett_value` with real arguments, for block sizes beyond `usize`.
pub fn schuett_value_real(k: f64, m: f64, p: f64, q: f64) -> Result<f64> {
    check_exponent(p)?;
    check_exponent(q)?;
    if !(k >= 1.0 && m >= 1.0) {
        return domain("k and m must be at least 1");
    }
    let r = inv_exp(p) - inv_exp(q);
    let tail = 2f64.powf(-k / (2.0 * m)) * m.powf(-r);
    if p > q {
        return Ok(tail);
    }
    Ok(if k < log2(2.0 * m) {
        1.0
    } else if k <= 2.0 * m {
        (log2(1.0 + m / k) / k).powf(r)
    } else {
        tail
    })
}

/// Three-regime weighted bound obtained by spreading the budget over the blocks.
pub fn remark37_bound(n: usize, m: usize, p: f64, q: f64, gamma: f64) -> Result<f64> {
    check_exponent(p)?;
    check_exponent(q)?;
    if n == 0 || m == 0 || !(gamma > 0.0) {
        return domain("n, m ≥ 1 and γ > 0 are required");
    }
    let (nf, mf) = (n as f64, m as f64);
    let r = inv_exp(p) - inv_exp(q);
    let lead = (mf / nf).powf(r / gamma);
    Ok(if nf <= log2(2.0 * mf) {
        lead
    } else if nf <= 2.0 * mf {
        lead * nf.powf(-r)
    } else {
        lead * 2f64.powf(-nf / (8.0 * mf)) * mf.powf(-r)
    })
}

/// `sup_{x ∈ Bℓ_p^m} ‖x‖_q`.
pub fn trivial_radius(m: usize, p: f64, q: f64) -> f64 {
    if p <= q {
        1.0
    } else {
        (m as f64).powf(inv_exp(q) - inv_exp(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerMethod {
    Packing,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperMethod {
    Net,
    Lattice,
    SchuettConstruction,
}

/// Covering witness. Centers round the `sparsity` largest coordinates of a
/// ball point with the `quantizer` at `step` and zero the rest; for `p = ∞`
/// they form the product grid with `per_coordinate[i]` cells on axis `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverCertificate {
    pub quantizer: Quantizer,
    pub sparsity: usize,
    pub step: f64,
    pub per_coordinate: Vec<usize>,
    /// Upper bound on the number of centers.
    pub center_count: f64,
    pub radius: f64,
    pub centers: Option<Vec<Vec<f64>>>,
    /// Largest sampled distance to the nearest listed center.
    pub sampled_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingCertificate {
    pub family: String,
    /// Lower bound on the packing cardinality (exceeds `2^k`).
    pub size: f64,
    /// Pairwise `ℓ_q` separation.
    pub separation: f64,
    pub points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyBracket {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    pub lower_method: LowerMethod,
    pub upper_method: UpperMethod,
    pub cover: CoverCertificate,
    pub packing: Option<PackingCertificate>,
}

fn ln_binom(n: f64, k: f64) -> f64 {
    if k < 0.0 || k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    ln_binom(n as f64, k as f64).exp().round().max(1.0)
}

#[derive(Clone, Copy, PartialEq)]
enum Rounding {
    Down,
    Up,
}

const COST_UNITS: usize = 128;
const EXACT_VISIT_LIMIT: usize = 20_000;

/// Integer tuples `a ∈ Z_{≥1}^j` with `Σ ((a_i − shift) step)^p ≤ 1`
/// (`< 1` when `strict`).
#[derive(Clone, Copy)]
struct TupleFamily {
    p: f64,
    step: f64,
    shift: f64,
    strict: bool,
}

impl TupleFamily {
    fn cost(&self, a: f64) -> f64 {
        ((a - self.shift) * self.step).powf(self.p)
    }

    /// `#{a ≥ 1 : cost(a) ≤ b}` (or `< b`), snapping float ties to integers.
    fn single(&self, b: f64) -> f64 {
        if b < 0.0 || (self.strict && b == 0.0) {
            return 0.0;
        }
        let x = b.powf(1.0 / self.p) / self.step + self.shift;
        let r = x.round();
        let x = if (x - r).abs() <= 1e-12 * x.max(1.0) { r } else { x };
        let n = if self.strict { x.ceil() - 1.0 } else { x.floor() };
        n.max(0.0)
    }

    fn exact(&self, j: usize, b: f64, visits: &mut usize) -> Option<f64> {
        if j == 0 {
            return Some(if b >= 0.0 { 1.0 } else { 0.0 });
        }
        if j == 1 {
            return Some(self.single(b));
        }
        *visits += 1;
        if *visits > EXACT_VISIT_LIMIT {
            return None;
        }
        let mut total = 0.0;
        let mut a = 1.0;
        loop {
            let c = self.cost(a);
            if c > b || (self.strict && c == b) {
                break;
            }
            total += self.exact(j - 1, b - c, visits)?;
            a += 1.0;
            *visits += 1;
            if *visits > EXACT_VISIT_LIMIT {
                return None;
            }
        }
        Some(total)
    }

    /// `N_j` for `j ≤ s`: exact when cheap, otherwise from costs rounded to
    /// multiples of `1/COST_UNITS` (`Down` overcounts, `Up` undercounts).
    fn counts(&self, s: usize, rounding: Rounding) -> Vec<f64> {
        let mut out = vec![0.0; s + 1];
        out[0] = 1.0;
        if self.p == 1.0 {
            for (j, o) in out.iter_mut().enumerate().skip(1) {
                let x = 1.0 / self.step + j as f64 * self.shift;
                let r = x.round();
                let x = if (x - r).abs() <= 1e-12 * x.max(1.0) { r } else { x };
                let big_r = if self.strict { x.ceil() - 1.0 } else { x.floor() };
                *o = if big_r >= j as f64 { ln_binom(big_r, j as f64).exp().round() } else { 0.0 };
            }
            return out;
        }
        let mut visits = 0;
        for j in 1..=s {
            match self.exact(j, 1.0, &mut visits) {
                Some(v) => out[j] = v,
                None => {
                    let dp = self.rounded(s, rounding);
                    out[j..].copy_from_slice(&dp[j..]);
                    break;
                }
            }
        }
        out
    }

    fn rounded(&self, s: usize, rounding: Rounding) -> Vec<f64> {
        let b = COST_UNITS;
        let bf = b as f64;
        let a_at = |units: f64| self.shift + (units / bf).max(0.0).powf(1.0 / self.p) / self.step;
        let mut groups: Vec<(usize, f64)> = Vec::new();
        for v in 0..=b {
            let vf = v as f64;
            let count = match rounding {
                // floor(c·B) = v  ⇔  a_at(v) ≤ a < a_at(v + 1)
                Rounding::Down => (a_at(vf + 1.0).ceil() - 1.0).max(0.0) - (a_at(vf).ceil() - 1.0).max(0.0),
                // ceil(c·B) = v  ⇔  a_at(v − 1) < a ≤ a_at(v); zero cost only at a = shift
                Rounding::Up if v == 0 => {
                    if self.shift == 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Rounding::Up => a_at(vf).floor().max(0.0) - a_at(vf - 1.0).floor().max(0.0) - if v == 1 && self.shift == 1.0 { 1.0 } else { 0.0 },
            };
            if count > 0.0 {
                groups.push((v, count));
            }
        }
        let mut out = vec![0.0; s + 1];
        out[0] = 1.0;
        let mut exact = vec![0.0; b + 1];
        exact[0] = 1.0;
        for o in out.iter_mut().skip(1) {
            let mut next = vec![0.0; b + 1];
            for (t, &e) in exact.iter().enumerate() {
                if e == 0.0 {
                    continue;
                }
                for &(v, m) in &groups {
                    if t + v > b {
                        break;
                    }
                    next[t + v] += e * m;
                }
            }
            exact = next;
            *o = exact.iter().sum();
        }
        out
    }
}

/// Signed sparse vectors with support size at most `s` (exactly `s` when `exact_support`).
fn sparse_count(m: usize, counts: &[f64], s: usize, exact_support: bool) -> f64 {
    let lo = if exact_support { s.min(m) } else { 0 };
    (lo..=s.min(m)).map(|j| binom(m, j) * 2f64.powi(j as i32) * counts[j]).sum()
}

/// `sup_{x ∈ Bℓ_p^m} ‖x − x_S‖_q` where `x_S` keeps the `s` largest entries.
fn tail_sup(m: usize, s: usize, p: f64, q: f64) -> f64 {
    if s >= m {
        return 0.0;
    }
    let (ip, iq) = (inv_exp(p), inv_exp(q));
    if q.is_infinite() {
        return ((s + 1) as f64).powf(-ip);
    }
    if p <= q {
        (s + 1..=m).map(|j| ((j - s) as f64).powf(iq) * (j as f64).powf(-ip)).fold(0.0, f64::max)
    } else {
        ((m - s) as f64 * (m as f64).powf(-q * ip)).powf(iq)
    }
}

/// Quantizer of the `s` largest coordinates: `Zero` rounds to `hZ`, `Offset`
/// rounds to `h(Z + 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantizer {
    Zero,
    Offset,
}

impl Quantizer {
    fn family(self, p: f64, h: f64) -> TupleFamily {
        match self {
            Self::Zero => TupleFamily { p, step: h, shift: 0.5, strict: false },
            Self::Offset => TupleFamily { p, step: h, shift: 1.0, strict: true },
        }
    }

    fn count(self, m: usize, s: usize, h: f64, p: f64) -> f64 {
        let counts = self.family(p, h).counts(s, Rounding::Down);
        sparse_count(m, &counts, s, self == Self::Offset)
    }

    /// `sup` over the ball of the `ℓ_q` rounding error on the support (q-th power when `q < ∞`).
    fn error(self, s: usize, h: f64, p: f64, q: f64) -> f64 {
        let half = 0.5 * h;
        if s == 0 {
            return 0.0;
        }
        if q.is_infinite() {
            return match self {
                Self::Zero => half.min(1.0),
                Self::Offset => half,
            };
        }
        match self {
            Self::Offset => s as f64 * half.powf(q),
            Self::Zero if p.is_infinite() => s as f64 * half.min(1.0).powf(q),
            Self::Zero if p <= q => (s as f64).min(half.powf(-p)) * half.min(1.0).powf(q),
            Self::Zero => s as f64 * half.min((s as f64).powf(-1.0 / p)).powf(q),
        }
    }

    fn radius(self, m: usize, s: usize, h: f64, p: f64, q: f64) -> f64 {
        let tail = tail_sup(m, s, p, q);
        if q.is_infinite() {
            return tail.max(self.error(s, h, p, q));
        }
        (tail.powf(q) + self.error(s, h, p, q)).powf(1.0 / q)
    }

    fn smallest_step(self, m: usize, s: usize, p: f64, k: usize) -> f64 {
        let budget = 2f64.powi(k as i32);
        let (mut lo, mut hi) = (-60.0f64, 3.0f64);
        if self.count(m, s, hi.exp2(), p) > budget {
            return f64::INFINITY;
        }
        for _ in 0..52 {
            let mid = 0.5 * (lo + hi);
            if self.count(m, s, mid.exp2(), p) <= budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi.exp2()
    }
}

fn product_radius(cells: &[usize], q: f64) -> f64 {
    if q.is_infinite() {
        return cells.iter().map(|&n| 1.0 / n as f64).fold(0.0, f64::max);
    }
    cells.iter().map(|&n| (1.0 / n as f64).powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Best product grid for the cube with at most `2^k` cells.
fn product_cover(m: usize, k: usize) -> Vec<usize> {
    let log_budget = k as f64 * std::f64::consts::LN_2;
    let mut base = (log_budget / m as f64).exp().floor().max(1.0) as usize;
    while m as f64 * ((base + 1) as f64).ln() <= log_budget + 1e-12 {
        base += 1;
    }
    while base > 1 && m as f64 * (base as f64).ln() > log_budget + 1e-12 {
        base -= 1;
    }
    let mut cells = vec![base; m];
    let mut used = m as f64 * (base as f64).ln();
    let extra = ((base + 1) as f64).ln() - (base as f64).ln();
    for c in cells.iter_mut() {
        if used + extra <= log_budget + 1e-12 {
            *c += 1;
            used += extra;
        }
    }
    cells
}

/// Explicit, verified covering of `Bℓ_p^m` by at most `2^k` `ℓ_q`-balls.
pub fn entropy_upper(spec: &BallSpec, k: usize) -> Result<CoverCertificate> {
    spec.validate()?;
    if !spec.is_uniform() {
        return domain("brackets are computed for uniform weights; reduce weighted balls first");
    }
    let (m, p, q) = (spec.m, spec.p, spec.q);
    let mut best = CoverCertificate {
        quantizer: Quantizer::Zero,
        sparsity: 0,
        step: f64::INFINITY,
        per_coordinate: Vec::new(),
        center_count: 1.0,
        radius: trivial_radius(m, p, q),
        centers: None,
        sampled_radius: None,
    };
    if p.is_infinite() {
        let cells = product_cover(m, k);
        let radius = product_radius(&cells, q);
        if radius < best.radius {
            let count = cells.iter().map(|&c| c as f64).product();
            best = CoverCertificate { sparsity: m, step: 0.0, per_coordinate: cells, center_count: count, radius, ..best };
        }
    } else {
        for quantizer in [Quantizer::Zero, Quantizer::Offset] {
            for s in 1..=m {
                let h = quantizer.smallest_step(m, s, p, k);
                if !h.is_finite() {
                    continue;
                }
                let radius = quantizer.radius(m, s, h, p, q);
                if radius < best.radius {
                    best = CoverCertificate {
                        quantizer,
                        sparsity: s,
                        step: h,
                        per_coordinate: Vec::new(),
                        center_count: quantizer.count(m, s, h, p),
                        radius,
                        centers: None,
                        sampled_radius: None,
                    };
                }
            }
        }
    }
    if best.center_count <= MAX_LISTED_POINTS as f64 {
        let centers = list_centers(m, p, &best);
        let sampled = sampled_cover_radius(&centers, spec, 2000, 0x5eed ^ k as u64);
        best.sampled_radius = Some(sampled);
        best.centers = Some(centers);
    }
    Ok(best)
}

fn list_centers(m: usize, p: f64, cert: &CoverCertificate) -> Vec<Vec<f64>> {
    if !cert.per_coordinate.is_empty() {
        let mut out = vec![Vec::with_capacity(m)];
        for &n in &cert.per_coordinate {
            let nf = n as f64;
            let vals: Vec<f64> = (0..n).map(|i| -1.0 + (2.0 * i as f64 + 1.0) / nf).collect();
            out = out.into_iter().flat_map(|c| vals.iter().map(move |&v| [c.clone(), vec![v]].concat())).collect();
        }
        return out;
    }
    if cert.sparsity == 0 || !cert.step.is_finite() {
        return vec![vec![0.0; m]];
    }
    struct Walk {
        m: usize,
        fam: TupleFamily,
        offset: bool,
        out: Vec<Vec<f64>>,
    }
    fn rec(w: &mut Walk, i: usize, left: usize, budget: f64, cur: &mut Vec<f64>) {
        if i == w.m {
            if !w.offset || left == 0 {
                w.out.push(cur.clone());
            }
            return;
        }
        if w.m - i > left || !w.offset {
            rec(w, i + 1, left, budget, cur);
        }
        if left == 0 {
            return;
        }
        let mut a = 1.0;
        loop {
            let c = w.fam.cost(a);
            if c > budget || (w.fam.strict && c == budget) {
                break;
            }
            let v = (a - if w.offset { 0.5 } else { 0.0 }) * w.fam.step;
            for sign in [1.0, -1.0] {
                cur[i] = sign * v;
                rec(w, i + 1, left - 1, budget - c, cur);
            }
            cur[i] = 0.0;
            a += 1.0;
        }
    }
    let offset = cert.quantizer == Quantizer::Offset;
    let mut walk = Walk { m, fam: cert.quantizer.family(p, cert.step), offset, out: Vec::new() };
    rec(&mut walk, 0, cert.sparsity, 1.0, &mut vec![0.0; m]);
    walk.out
}

/// Uniform sample of `Bℓ_p^m`.
pub fn sample_ball(m: usize, p: f64, rng: &mut impl Rng) -> Vec<f64> {
    if p.is_infinite() {
        return (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    }
    let g = Gamma::new(1.0 / p, 1.0).expect("shape is positive");
    let y: Vec<f64> = (0..m)
        .map(|_| {
            let mag: f64 = g.sample(rng);
            let v = mag.powf(1.0 / p);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    let z: f64 = Exp1.sample(rng);
    let s = (y.iter().map(|v| v.abs().powf(p)).sum::<f64>() + z).powf(1.0 / p);
    y.into_iter().map(|v| v / s).collect()
}

fn boundary_samples(m: usize, p: f64, rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count + 2 * m);
    for i in 0..m {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; m];
            e[i] = s;
            out.push(e);
        }
    }
    for _ in 0..count {
        let mut x = sample_ball(m, p, rng);
        let n = norm(&x, p);
        if n > 0.0 && rng.random::<bool>() {
            x.iter_mut().for_each(|v| *v /= n);
        }
        out.push(x);
    }
    out
}

/// Largest distance from a sample of the ball to its nearest center.
pub fn sampled_cover_radius(centers: &[Vec<f64>], spec: &BallSpec, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    boundary_samples(spec.m, spec.p, &mut rng, samples)
        .iter()
        .map(|x| centers.iter().map(|c| dist(x, c, spec.q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

fn ln_ball_volume(m: usize, p: f64) -> f64 {
    let mf = m as f64;
    if p.is_infinite() {
        return mf * std::f64::consts::LN_2;
    }
    mf * (2.0f64.ln() + ln_gamma(1.0 + 1.0 / p)) - ln_gamma(1.0 + mf / p)
}

fn volume_lower(m: usize, p: f64, q: f64, k: usize) -> f64 {
    let mf = m as f64;
    (-(k as f64) * std::f64::consts::LN_2 / mf + (ln_ball_volume(m, p) - ln_ball_volume(m, q)) / mf).exp()
}

/// Largest `t` such that `tZ^m ∩ Bℓ_p^m` has more than `2^k` points.
fn lattice_lower(m: usize, p: f64, k: usize) -> Option<PackingCertificate> {
    let budget = 2f64.powi(k as i32);
    let count = |t: f64| -> f64 {
        if p.is_infinite() {
            return (2.0 * (1.0 / t + 1e-12).floor() + 1.0).powi(m as i32);
        }
        let counts = TupleFamily { p, step: t, shift: 0.0, strict: false }.counts(m, Rounding::Up);
        sparse_count(m, &counts, m, false)
    };
    if count(2f64.powi(-60)) <= budget {
        return None;
    }
    let (mut lo, mut hi) = (-60.0f64, 1.0f64);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if count(mid.exp2()) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = lo.exp2();
    Some(PackingCertificate { family: "scaled-lattice".into(), size: count(t), separation: t, points: None })
}

/// Gilbert–Varshamov packing inside the `s`-sparse sign vectors scaled to the sphere of `ℓ_p`.
fn code_lower(m: usize, p: f64, q: f64, k: usize) -> Option<PackingCertificate> {
    let ln_budget = k as f64 * std::f64::consts::LN_2;
    let mut best: Option<PackingCertificate> = None;
    for s in 1..=m {
        let c = (s as f64).powf(-inv_exp(p));
        let ln_total = ln_binom(m as f64, s as f64) + s as f64 * std::f64::consts::LN_2;
        if ln_total <= ln_budget {
            continue;
        }
        // (distance, ln count) per overlap pattern (a shared coordinates, b sign flips)
        let mut shells: Vec<(f64, f64)> = Vec::new();
        for a in 0..=s {
            if s - a > m - s {
                continue;
            }
            for b in 0..=a {
                let d = if q.is_infinite() {
                    c * if b > 0 { 2.0 } else if a < s { 1.0 } else { 0.0 }
                } else {
                    c * (b as f64 * 2f64.powf(q) + 2.0 * (s - a) as f64).powf(1.0 / q)
                };
                let ln_n = ln_binom(s as f64, a as f64)
                    + ln_binom(a as f64, b as f64)
                    + ln_binom((m - s) as f64, (s - a) as f64)
                    + (s - a) as f64 * std::f64::consts::LN_2;
                shells.push((d, ln_n));
            }
        }
        shells.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut ln_ball = f64::NEG_INFINITY;
        let mut i = 0;
        while i < shells.len() {
            let d = shells[i].0;
            if d > 0.0 {
                // packing with separation d; the open ball of radius d holds the shells below d
                let size = ln_total - ln_ball;
                if size > ln_budget + 1e-9 && best.as_ref().is_none_or(|b| d > b.separation) {
                    best = Some(PackingCertificate { family: format!("sparse-sign-code(s={s})"), size: size.exp(), separation: d, points: None });
                }
            }
            while i < shells.len() && shells[i].0 == d {
                ln_ball = log_add(ln_ball, shells[i].1);
                i += 1;
            }
        }
    }
    best
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Largest greedy farthest-point separation among `2^k + 1` ball points.
fn greedy_lower(spec: &BallSpec, k: usize, restarts: usize, seed: u64) -> Option<PackingCertificate> {
    if k > GREEDY_MAX_K {
        return None;
    }
    let restarts = if k > 6 { restarts.min(8) } else { restarts };
    let need = (1usize << k) + 1;
    let pool = (4 * need).max(512);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<PackingCertificate> = None;
    for _ in 0..restarts {
        let cand = boundary_samples(spec.m, spec.p, &mut rng, pool);
        let mut dmin = vec![f64::INFINITY; cand.len()];
        let mut chosen = vec![rng.random_range(0..cand.len())];
        let mut sep = f64::INFINITY;
        while chosen.len() < need {
            let last = &cand[*chosen.last().expect("nonempty")];
            for (j, x) in cand.iter().enumerate() {
                dmin[j] = dmin[j].min(dist(x, last, spec.q));
            }
            let (j, d) = dmin.iter().enumerate().fold((0, -1.0), |acc, (j, &d)| if d > acc.1 { (j, d) } else { acc });
            if d <= 0.0 {
                break;
            }
            sep = sep.min(d);
            chosen.push(j);
        }
        if chosen.len() == need && best.as_ref().is_none_or(|b| sep > b.separation) {
            let points = chosen.iter().map(|&j| cand[j].clone()).collect();
            best = Some(PackingCertificate { family: "greedy".into(), size: need as f64, separation: sep, points: Some(points) });
        }
    }
    best
}

pub const PACKING_RESTARTS: usize = 64;
/// Greedy packings are attempted only up to `2^8 + 1` points.
pub const GREEDY_MAX_K: usize = 8;

/// Certified lower bound: the larger of the volume ratio and the best packing.
pub fn entropy_lower(spec: &BallSpec, k: usize, seed: u64) -> Result<(f64, LowerMethod, Option<PackingCertificate>)> {
    spec.validate()?;
    if !spec.is_uniform() {
        return domain("brackets are computed for uniform weights; reduce weighted balls first");
    }
    let (m, p, q) = (spec.m, spec.p, spec.q);
    let vol = volume_lower(m, p, q, k);
    let mut packing: Option<PackingCertificate> = None;
    for cand in [lattice_lower(m, p, k), code_lower(m, p, q, k), greedy_lower(spec, k, PACKING_RESTARTS, seed)].into_iter().flatten() {
        if packing.as_ref().is_none_or(|b| cand.separation > b.separation) {
            packing = Some(cand);
        }
    }
    let pack = packing.as_ref().map_or(0.0, |c| 0.5 * c.separation);
    Ok(if pack >= vol { (pack, LowerMethod::Packing, packing) } else { (vol, LowerMethod::Volume, packing) })
}

pub fn entropy_bracket(spec: &BallSpec, k: usize, seed: u64) -> Result<EntropyBracket> {
    let cover = entropy_upper(spec, k)?;
    let (lower, lower_method, packing) = entropy_lower(spec, k, seed)?;
    let upper_method = if !cover.per_coordinate.is_empty() || cover.sparsity == spec.m {
        UpperMethod::Lattice
    } else if cover.sparsity == 0 {
        UpperMethod::Net
    } else {
        UpperMethod::SchuettConstruction
    };
    Ok(EntropyBracket { k, lower: lower.min(cover.radius), upper: cover.radius, lower_method, upper_method, cover, packing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn norms() {
        let x = WeightedVector::new(vec![1.0, 0.0], vec![4.0, 9.0]).unwrap();
        assert_eq!(weighted_norm(&x, 1.0).unwrap(), 4.0);
        assert_eq!(weighted_norm(&WeightedVector::uniform(vec![1.0, 1.0]), f64::INFINITY).unwrap(), 1.0);
        assert_eq!(weighted_norm(&WeightedVector::uniform(vec![3.0, 4.0]), 2.0).unwrap(), 5.0);
    }

    #[test]
    fn isometry_example() {
        let x = WeightedVector::new(vec![0.25, 0.0], vec![4.0, 9.0]).unwrap();
        let u = isometry_u(&x, 1.0, 2.0).unwrap();
        assert_eq!(u.weights, vec![2.0, 3.0]);
        assert_eq!(u.values, vec![0.5, 0.0]);
        assert_eq!(weighted_norm(&u, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn block_sizes() {
        let plan = dyadic_reduce(&BallSpec::uniform(8, 1.0, 2.0).unwrap(), 1.0, 10).unwrap();
        assert_eq!(plan.j0, 3);
        assert_eq!(plan.blocks.iter().map(|b| b.size).collect::<Vec<_>>(), vec![2, 2, 4]);
        assert_eq!(plan.blocks.iter().map(|b| b.budget).sum::<usize>(), 10);
        let two = dyadic_reduce(&BallSpec::uniform(2, 1.0, 2.0).unwrap(), 1.0, 3).unwrap();
        assert_eq!(two.blocks.len(), 1);
        assert_eq!(two.blocks[0].size, 2);
    }

    #[test]
    fn schuett_examples() {
        assert_abs_diff_eq!(schuett_value(16, 4, 1.0, 2.0).unwrap(), 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(schuett_value(20, 4, 2.0, 2.0).unwrap(), 2f64.powf(-2.5), epsilon = 1e-15);
    }

    #[test]
    fn interval_cover() {
        for k in 0..6 {
            let spec = BallSpec::uniform(1, 2.0, 2.0).unwrap();
            let c = entropy_upper(&spec, k).unwrap();
            assert!(c.radius <= 2f64.powi(-(k as i32)) * 1.0000001, "k={k} radius={}", c.radius);
            assert!(c.sampled_radius.unwrap() <= c.radius * (1.0 + 1e-9));
        }
    }

    #[test]
    fn cross_polytope_in_cube() {
        let spec = BallSpec::uniform(2, 1.0, f64::INFINITY).unwrap();
        let c = entropy_upper(&spec, 2).unwrap();
        assert!(c.radius <= 0.5 + 1e-9);
    }

    #[test]
    fn lattice_counts_are_one_sided() {
        for &p in &[1.5, 2.0, 3.0] {
            let brute = |t: f64, m: usize| -> f64 {
                // brute force over the integer box
                let r = (1.0 / t).floor() as i64;
                let mut n = 0.0;
                let mut z = vec![-r; m];
                loop {
                    if z.iter().map(|&a| ((a.abs() as f64) * t).powf(p)).sum::<f64>() <= 1.0 {
                        n += 1.0;
                    }
                    let mut i = 0;
                    while i < m {
                        z[i] += 1;
                        if z[i] <= r {
                            break;
                        }
                        z[i] = -r;
                        i += 1;
                    }
                    if i == m {
                        break;
                    }
                }
                n
            };
            for &t in &[0.9, 0.4, 0.23] {
                let fam = TupleFamily { p, step: t, shift: 0.0, strict: false };
                let up = sparse_count(3, &fam.rounded(3, Rounding::Up), 3, false);
                let down = sparse_count(3, &fam.rounded(3, Rounding::Down), 3, false);
                let e = brute(t, 3);
                assert_eq!(sparse_count(3, &fam.counts(3, Rounding::Down), 3, false), e);
                assert!(up <= e && e <= down, "p={p} t={t}: {up} {e} {down}");
            }
        }
    }
}
