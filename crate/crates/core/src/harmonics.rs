//! h-harmonic expansions, reproducing kernels and the operators built on them.
//!
//! An orthonormal basis of `Π_K` in `L_2(h_κ² dσ / a_d^κ)` is obtained from an
//! unweighted orthonormal spanning set ordered by degree, by Cholesky
//! factorization of its weighted Gram matrix. Because the spanning set is
//! ordered by degree, the basis functions whose leading spanning element has
//! degree `k` span `H_k(h_κ²)`. For `Z_2^d` weights the Gram matrix splits into
//! sign-parity classes, which are factored separately.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::gauss_jacobi;
use crate::reference::{weighted_rule, QuadRule};
use crate::special::{bump_profile, eta, gamma, zonal_profile_all};
use crate::sphere::{angle_between, UnitVector};
use crate::weight::{DunklWeight, GroupTag};

pub type Field = Arc<dyn Fn(&UnitVector) -> f64 + Send + Sync>;

/// Unweighted orthonormal spanning set of `Π_K` on `S^{d-1}` (normalized `σ`).
///
/// `d = 2`: `1, √2 cos θ, √2 sin θ, √2 cos 2θ, …`.
/// `d = 3`: real spherical harmonics indexed by `l² + l + m`, `|m| ≤ l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanningSet {
    pub d: usize,
    pub max_degree: usize,
}

impl SpanningSet {
    pub fn new(d: usize, max_degree: usize) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return domain(format!("dimension must be 2 or 3, got {d}"));
        }
        Ok(Self { d, max_degree })
    }

    pub fn len(&self) -> usize {
        spanning_dim(self.d, self.max_degree)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree_of(&self, i: usize) -> usize {
        if self.d == 2 {
            i.div_ceil(2)
        } else {
            (i as f64).sqrt().floor() as usize
        }
    }

    /// Bit `j` is set when the element is odd under `x_j → −x_j`.
    pub fn parity_of(&self, i: usize) -> u8 {
        if self.d == 2 {
            if i == 0 {
                return 0;
            }
            let k = self.degree_of(i);
            let is_cos = i % 2 == 1;
            if is_cos {
                (k % 2) as u8
            } else {
                (1 - k % 2) as u8 | 2
            }
        } else {
            let l = self.degree_of(i) as i64;
            let m = i as i64 - l * l - l;
            let ma = m.abs();
            let xbit = if m >= 0 { ma % 2 } else { 1 - ma % 2 };
            let ybit = i64::from(m < 0);
            let zbit = (l + ma) % 2;
            (xbit | (ybit << 1) | (zbit << 2)) as u8
        }
    }

    pub fn eval_into(&self, x: &UnitVector, out: &mut [f64]) {
        let c = x.array();
        let k_max = self.max_degree;
        if self.d == 2 {
            out[0] = 1.0;
            let (cx, sx) = (c[0], c[1]);
            let (mut ck, mut sk) = (1.0, 0.0);
            let s2 = std::f64::consts::SQRT_2;
            for k in 1..=k_max {
                let (nc, ns) = (ck * cx - sk * sx, sk * cx + ck * sx);
                ck = nc;
                sk = ns;
                out[2 * k - 1] = s2 * ck;
                out[2 * k] = s2 * sk;
            }
            return;
        }
        let (x0, y0, z) = (c[0], c[1], c[2]);
        let s2 = std::f64::consts::SQRT_2;
        // (re, im) of (x + iy)^m
        let mut re = 1.0;
        let mut im = 0.0;
        // p̃_m^m
        let mut pmm = 1.0;
        for m in 0..=k_max {
            if m > 0 {
                let (nr, ni) = (re * x0 - im * y0, re * y0 + im * x0);
                re = nr;
                im = ni;
                let mf = m as f64;
                pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt();
            }
            let mf = m as f64;
            let mut p_prev = 0.0;
            let mut p = pmm;
            for l in m..=k_max {
                if l == m + 1 {
                    p_prev = p;
                    p = (2.0 * mf + 3.0).sqrt() * z * pmm;
                } else if l > m + 1 {
                    let lf = l as f64;
                    let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                    let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                    let next = a * (z * p - b * p_prev);
                    p_prev = p;
                    p = next;
                }
                let base = l * l + l;
                if m == 0 {
                    out[base] = p;
                } else {
                    out[base + m] = s2 * p * re;
                    out[base - m] = s2 * p * im;
                }
            }
        }
    }

    pub fn eval(&self, x: &UnitVector) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }
}

pub fn spanning_dim(d: usize, max_degree: usize) -> usize {
    if d == 2 {
        2 * max_degree + 1
    } else {
        (max_degree + 1) * (max_degree + 1)
    }
}

#[derive(Debug)]
struct ClassBlock {
    members: Vec<usize>,
    chol: DMatrix<f64>,
}

/// Orthonormal basis of `Π_K` in `L_2(h_κ²)` grouped by parity class.
#[derive(Debug)]
pub struct HarmonicBasis {
    weight: DunklWeight,
    span: SpanningSet,
    classes: Vec<ClassBlock>,
}

type BasisKey = (Vec<u64>, usize, usize);

fn basis_cache() -> &'static Mutex<HashMap<BasisKey, Arc<HarmonicBasis>>> {
    static CACHE: OnceLock<Mutex<HashMap<BasisKey, Arc<HarmonicBasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl HarmonicBasis {
    /// Shared basis for `w` through degree `max_degree`.
    pub fn get(w: &DunklWeight, max_degree: usize) -> Result<Arc<Self>> {
        if w.roots().tag() != GroupTag::Z2d {
            return Ok(Arc::new(Self::build(w, max_degree)?));
        }
        let key = (w.kappa().iter().map(|k| k.to_bits()).collect(), w.dim(), max_degree);
        if let Some(b) = basis_cache().lock().unwrap().get(&key) {
            return Ok(Arc::clone(b));
        }
        let b = Arc::new(Self::build(w, max_degree)?);
        basis_cache().lock().unwrap().insert(key, Arc::clone(&b));
        Ok(b)
    }

    pub fn build(w: &DunklWeight, max_degree: usize) -> Result<Self> {
        w.require_kernels()?;
        let span = SpanningSet::new(w.dim(), max_degree)?;
        let n = span.len();
        let split = w.roots().tag() == GroupTag::Z2d;
        let mut class_ids: Vec<u8> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let p = if split { span.parity_of(i) } else { 0 };
            let c = match class_ids.iter().position(|&q| q == p) {
                Some(c) => c,
                None => {
                    class_ids.push(p);
                    members.push(Vec::new());
                    class_ids.len() - 1
                }
            };
            members[c].push(i);
        }
        let grams = if w.dim() == 2 && split {
            circle_grams(w, &span, &members)
        } else {
            quadrature_grams(w, &span, &members)
        };
        let mut classes = Vec::with_capacity(members.len());
        for (m, g) in members.into_iter().zip(grams) {
            let chol = g
                .cholesky()
                .ok_or_else(|| Error::Numerical(format!("weighted Gram matrix of degree {max_degree} is not positive definite")))?;
            classes.push(ClassBlock { members: m, chol: chol.l() });
        }
        Ok(Self { weight: w.clone(), span, classes })
    }

    pub fn weight(&self) -> &DunklWeight {
        &self.weight
    }

    pub fn max_degree(&self) -> usize {
        self.span.max_degree
    }

    pub fn spanning(&self) -> SpanningSet {
        self.span
    }

    pub fn dim(&self) -> usize {
        self.span.len()
    }

    /// Expansion of `f` with moments `⟨f, Φ_i⟩_κ` from a rule exact to `rule_degree`.
    pub fn expand(self: &Arc<Self>, f: impl Fn(&UnitVector) -> f64, rule_degree: usize) -> HarmonicExpansion {
        let rule = weighted_rule(&self.weight, rule_degree.max(2 * self.max_degree()));
        self.expand_with_rule(f, &rule)
    }

    pub fn expand_with_rule(self: &Arc<Self>, f: impl Fn(&UnitVector) -> f64, rule: &QuadRule) -> HarmonicExpansion {
        let n = self.dim();
        let mut moments = vec![0.0; n];
        let mut phi = vec![0.0; n];
        let inv_a = 1.0 / self.weight.norm_const;
        for (x, &wx) in rule.points.iter().zip(&rule.weights) {
            let fx = f(x);
            if fx == 0.0 {
                continue;
            }
            self.span.eval_into(x, &mut phi);
            let s = wx * fx * inv_a;
            for (m, p) in moments.iter_mut().zip(&phi) {
                *m += s * p;
            }
        }
        self.from_moments(&moments)
    }

    /// Expansion from moments `m_i = ⟨f, Φ_i⟩_κ`.
    pub fn from_moments(self: &Arc<Self>, moments: &[f64]) -> HarmonicExpansion {
        let coeffs = self
            .classes
            .iter()
            .map(|cl| {
                let m = DVector::from_iterator(cl.members.len(), cl.members.iter().map(|&i| moments[i]));
                cl.chol.solve_lower_triangular(&m).expect("Cholesky factor is nonsingular").as_slice().to_vec()
            })
            .collect();
        HarmonicExpansion::new(Arc::clone(self), coeffs)
    }

    /// Exact expansion of `Σ c_i Φ_i` (coefficients in the spanning set).
    pub fn from_spanning_coeffs(self: &Arc<Self>, c: &[f64]) -> HarmonicExpansion {
        // ONB coefficients are Lᵀ c restricted to each class.
        let coeffs = self
            .classes
            .iter()
            .map(|cl| {
                let v = DVector::from_iterator(cl.members.len(), cl.members.iter().map(|&i| c.get(i).copied().unwrap_or(0.0)));
                (cl.chol.transpose() * v).as_slice().to_vec()
            })
            .collect();
        HarmonicExpansion::new(Arc::clone(self), coeffs)
    }

    fn degree_of_slot(&self, class: usize, pos: usize) -> usize {
        self.span.degree_of(self.classes[class].members[pos])
    }
}

fn circle_moments(w: &DunklWeight, j_max: usize) -> Vec<f64> {
    // μ_j = ⟨1, cos jθ⟩_κ
    let rule = weighted_rule(w, j_max);
    let mut mu = vec![0.0; j_max + 1];
    for (x, &wx) in rule.points.iter().zip(&rule.weights) {
        let c = x.array();
        let (mut ck, mut sk) = (1.0, 0.0);
        mu[0] += wx;
        for m in mu.iter_mut().skip(1) {
            let (nc, ns) = (ck * c[0] - sk * c[1], sk * c[0] + ck * c[1]);
            ck = nc;
            sk = ns;
            *m += wx * ck;
        }
    }
    let a = w.norm_const;
    mu.iter_mut().for_each(|m| *m /= a);
    mu
}

fn circle_grams(w: &DunklWeight, span: &SpanningSet, members: &[Vec<usize>]) -> Vec<DMatrix<f64>> {
    let mu = circle_moments(w, 2 * span.max_degree);
    let s2 = std::f64::consts::SQRT_2;
    let entry = |i: usize, j: usize| -> f64 {
        let (ki, kj) = (span.degree_of(i), span.degree_of(j));
        match (i, j) {
            (0, 0) => mu[0],
            (0, _) | (_, 0) => {
                let (idx, k) = if i == 0 { (j, kj) } else { (i, ki) };
                if idx % 2 == 1 {
                    s2 * mu[k]
                } else {
                    0.0
                }
            }
            _ => {
                let diff = mu[ki.abs_diff(kj)];
                let sum = mu[ki + kj];
                match (i % 2 == 1, j % 2 == 1) {
                    (true, true) => diff + sum,
                    (false, false) => diff - sum,
                    _ => 0.0,
                }
            }
        }
    };
    members
        .iter()
        .map(|m| DMatrix::from_fn(m.len(), m.len(), |a, b| entry(m[a], m[b])))
        .collect()
}

fn quadrature_grams(w: &DunklWeight, span: &SpanningSet, members: &[Vec<usize>]) -> Vec<DMatrix<f64>> {
    let rule = weighted_rule(w, 2 * span.max_degree);
    let n = span.len();
    let mut phi = vec![0.0; n];
    let inv_a = 1.0 / w.norm_const;
    let mut grams: Vec<DMatrix<f64>> = members.iter().map(|m| DMatrix::zeros(m.len(), m.len())).collect();
    let mut local: Vec<Vec<f64>> = members.iter().map(|m| vec![0.0; m.len()]).collect();
    for (x, &wx) in rule.points.iter().zip(&rule.weights) {
        span.eval_into(x, &mut phi);
        let s = wx * inv_a;
        for ((m, g), buf) in members.iter().zip(grams.iter_mut()).zip(local.iter_mut()) {
            for (b, &i) in buf.iter_mut().zip(m) {
                *b = phi[i];
            }
            let v = DVector::from_column_slice(buf);
            g.ger(s, &v, &v, 1.0);
        }
    }
    grams
}

/// Coefficients of `f` in the h-orthonormal basis, grouped by parity class.
#[derive(Debug, Clone)]
pub struct HarmonicExpansion {
    basis: Arc<HarmonicBasis>,
    coeffs: Vec<Vec<f64>>,
    span_coeffs: Vec<f64>,
}

impl HarmonicExpansion {
    fn new(basis: Arc<HarmonicBasis>, coeffs: Vec<Vec<f64>>) -> Self {
        let mut span_coeffs = vec![0.0; basis.dim()];
        for (cl, c) in basis.classes.iter().zip(&coeffs) {
            let v = DVector::from_column_slice(c);
            let s = cl.chol.transpose().solve_upper_triangular(&v).expect("Cholesky factor is nonsingular");
            for (&i, &val) in cl.members.iter().zip(s.iter()) {
                span_coeffs[i] = val;
            }
        }
        Self { basis, coeffs, span_coeffs }
    }

    pub fn basis(&self) -> &Arc<HarmonicBasis> {
        &self.basis
    }

    pub fn weight(&self) -> &DunklWeight {
        &self.basis.weight
    }

    pub fn max_degree(&self) -> usize {
        self.basis.max_degree()
    }

    pub fn eval(&self, x: &UnitVector) -> f64 {
        let mut phi = vec![0.0; self.basis.dim()];
        self.basis.span.eval_into(x, &mut phi);
        phi.iter().zip(&self.span_coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn eval_many(&self, xs: &[UnitVector]) -> Vec<f64> {
        let mut phi = vec![0.0; self.basis.dim()];
        xs.iter()
            .map(|x| {
                self.basis.span.eval_into(x, &mut phi);
                phi.iter().zip(&self.span_coeffs).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// Coefficients in the unweighted spanning set.
    pub fn spanning_coeffs(&self) -> &[f64] {
        &self.span_coeffs
    }

    /// Orthonormal coefficients of `proj_k f`.
    pub fn block_coeffs(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for (ci, c) in self.coeffs.iter().enumerate() {
            for (pos, &v) in c.iter().enumerate() {
                if self.basis.degree_of_slot(ci, pos) == k {
                    out.push(v);
                }
            }
        }
        out
    }

    /// `‖proj_k f‖_{2,κ}` for `k = 0..=K`.
    pub fn block_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.max_degree() + 1];
        for (ci, c) in self.coeffs.iter().enumerate() {
            for (pos, &v) in c.iter().enumerate() {
                sq[self.basis.degree_of_slot(ci, pos)] += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn norm2(&self) -> f64 {
        self.coeffs.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies `proj_k f` by `factor(k)`.
    pub fn map_degrees(&self, factor: impl Fn(usize) -> f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(ci, c)| c.iter().enumerate().map(|(pos, &v)| v * factor(self.basis.degree_of_slot(ci, pos))).collect())
            .collect();
        Self::new(Arc::clone(&self.basis), coeffs)
    }

    pub fn block(&self, k: usize) -> Self {
        self.map_degrees(|j| if j == k { 1.0 } else { 0.0 })
    }

    /// `Σ_{k ≤ n} proj_k f`.
    pub fn truncate(&self, n: usize) -> Self {
        self.map_degrees(|j| if j <= n { 1.0 } else { 0.0 })
    }

    pub fn combine(&self, other: &Self, a: f64, b: f64) -> Result<Self> {
        if !Arc::ptr_eq(&self.basis, &other.basis) {
            return Err(Error::Domain("expansions live in different bases".into()));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        Ok(Self::new(Arc::clone(&self.basis), coeffs))
    }

    /// Expansion of the same function in a basis of higher degree.
    pub fn lift(&self, basis: &Arc<HarmonicBasis>) -> Result<Self> {
        if basis.max_degree() < self.max_degree() || basis.span.d != self.basis.span.d {
            return domain("target basis must contain the source basis");
        }
        Ok(basis.from_spanning_coeffs(&self.span_coeffs))
    }

    pub fn as_field(&self) -> Field {
        let e = self.clone();
        Arc::new(move |x| e.eval(x))
    }
}

/// `proj_n^κ f`.
pub fn project(f: impl Fn(&UnitVector) -> f64, w: &DunklWeight, n: usize, rule_degree: usize) -> Result<HarmonicExpansion> {
    let basis = HarmonicBasis::get(w, n)?;
    Ok(basis.expand(f, rule_degree).block(n))
}

/// `(−Δ_{h,0})^{r/2}` acting diagonally on the blocks.
pub fn frac_laplacian(e: &HarmonicExpansion, r: f64) -> Result<HarmonicExpansion> {
    let lambda = e.weight().lambda_kappa;
    if r < 0.0 && e.block_norms()[0] > 1e-14 {
        return domain("negative powers are undefined on constants");
    }
    Ok(e.map_degrees(|k| {
        if k == 0 {
            if r == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            let kf = k as f64;
            (kf * (kf + 2.0 * lambda)).powf(r / 2.0)
        }
    }))
}

/// Parameters of a reproducing-kernel evaluation.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub weight: DunklWeight,
    pub degree: usize,
    /// Gauss–Jacobi nodes per active coordinate; `None` uses `2⌈n/2⌉ + 8`.
    pub nodes: Option<usize>,
}

fn c_lambda(l: f64) -> f64 {
    gamma(l + 0.5) / (PI.sqrt() * gamma(l))
}

/// `P_0, …, P_{max_n}` at `(x, y)`.
pub fn kernel_profiles(w: &DunklWeight, max_n: usize, x: &UnitVector, y: &UnitVector, nodes: Option<usize>) -> Result<Vec<f64>> {
    w.require_kernels()?;
    if x.dim() != w.dim() || y.dim() != w.dim() {
        return domain("points must match the weight dimension");
    }
    let lambda = w.lambda_kappa;
    let mut out = vec![0.0; max_n + 1];
    let mut buf = vec![0.0; max_n + 1];
    if w.is_unweighted() {
        zonal_profile_all(lambda, x.dot(y).clamp(-1.0, 1.0), &mut out);
        return Ok(out);
    }
    let npts = nodes.unwrap_or(2 * max_n.div_ceil(2) + 8);
    let (xc, yc) = (x.array(), y.array());
    // per active coordinate: (x_i y_i, nodes t, weights c_κ (1+t) w)
    let mut dims: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut fixed = 0.0;
    for (i, &k) in w.kappa().iter().enumerate() {
        let p = xc[i] * yc[i];
        if k == 0.0 {
            fixed += p;
            continue;
        }
        let rule = gauss_jacobi(npts, k - 1.0, k - 1.0)?;
        let c = c_lambda(k);
        let wts: Vec<f64> = rule.nodes.iter().zip(&rule.weights).map(|(t, wt)| c * (1.0 + t) * wt).collect();
        dims.push((p, rule.nodes.clone(), wts));
    }
    let sizes: Vec<usize> = dims.iter().map(|d| d.1.len()).collect();
    let total: usize = sizes.iter().product();
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        let mut s = fixed;
        let mut wt = 1.0;
        for (j, &i) in idx.iter().enumerate() {
            s += dims[j].0 * dims[j].1[i];
            wt *= dims[j].2[i];
        }
        zonal_profile_all(lambda, s.clamp(-1.0, 1.0), &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o += wt * b;
        }
        for j in 0..idx.len() {
            idx[j] += 1;
            if idx[j] < sizes[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(out)
}

/// `P_n(h_κ²; x, y)`.
#[allow(non_snake_case)]
pub fn kernel_P(spec: &KernelSpec, x: &UnitVector, y: &UnitVector) -> Result<f64> {
    Ok(kernel_profiles(&spec.weight, spec.degree, x, y, spec.nodes)?[spec.degree])
}

/// `L_n(x, y) = Σ_{k < 2n} η(k/n) P_k(x, y)`.
#[allow(non_snake_case)]
pub fn kernel_L(w: &DunklWeight, n: usize, x: &UnitVector, y: &UnitVector) -> Result<f64> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    let top = 2 * n - 1;
    let p = kernel_profiles(w, top, x, y, None)?;
    Ok(p.iter().enumerate().map(|(k, v)| eta(k as f64 / n as f64) * v).sum())
}

/// Spectral multiplier of `η_n`.
pub fn eta_multiplier(n: usize) -> impl Fn(usize) -> f64 {
    move |k| eta(k as f64 / n as f64)
}

/// `η_n f` from an expansion that contains degrees `< 2n`.
pub fn eta_n_expansion(e: &HarmonicExpansion, n: usize) -> Result<HarmonicExpansion> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    if e.max_degree() + 1 < 2 * n {
        return domain(format!("expansion of degree {} cannot represent η_{n}", e.max_degree()));
    }
    Ok(e.map_degrees(eta_multiplier(n)))
}

/// Moment rule degree used for a function that may not be band-limited.
pub fn default_rule_degree(band: usize) -> usize {
    2 * band + 64
}

/// `η_n f ∈ Π_{2n−1}`.
pub fn eta_n_apply(f: impl Fn(&UnitVector) -> f64, w: &DunklWeight, n: usize) -> Result<HarmonicExpansion> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    let basis = HarmonicBasis::get(w, 2 * n - 1)?;
    eta_n_expansion(&basis.expand(f, default_rule_degree(2 * n - 1)), n)
}

/// `η_n f(x) = (1/a) ∫ f(y) L_n(x, y) h_κ²(y) dσ(y)` by direct quadrature.
pub fn eta_n_apply_kernel(f: impl Fn(&UnitVector) -> f64, w: &DunklWeight, n: usize, x: &UnitVector, rule_degree: usize) -> Result<f64> {
    let rule = weighted_rule(w, rule_degree.max(4 * n));
    let mut s = 0.0;
    for (y, &wy) in rule.points.iter().zip(&rule.weights) {
        s += wy * f(y) * kernel_L(w, n, x, y)?;
    }
    Ok(s / w.norm_const)
}

/// `A_0 = η_1`, `A_s = η_{2^s} − η_{2^{s−1}}`.
pub fn dyadic_multiplier(s: u32) -> impl Fn(usize) -> f64 {
    move |k| {
        let kf = k as f64;
        if s == 0 {
            eta(kf)
        } else {
            eta(kf / 2f64.powi(s as i32)) - eta(kf / 2f64.powi(s as i32 - 1))
        }
    }
}

pub fn dyadic_block(e: &HarmonicExpansion, s: u32) -> Result<HarmonicExpansion> {
    if e.max_degree() + 1 < (1usize << (s + 1)) {
        return domain(format!("expansion of degree {} cannot represent A_{s}", e.max_degree()));
    }
    Ok(e.map_degrees(dyadic_multiplier(s)))
}

/// Sample points for norm evaluation: a weighted rule for `p < ∞` and its
/// nodes plus a dense unweighted grid for the supremum.
pub struct NormSampler {
    rule: QuadRule,
    sup_points: Vec<UnitVector>,
    norm_const: f64,
}

impl NormSampler {
    pub fn new(w: &DunklWeight, degree: usize) -> Self {
        let rule = weighted_rule(w, degree);
        let unweighted = DunklWeight::unweighted(w.dim()).expect("dimension already validated");
        let mut sup_points = weighted_rule(&unweighted, degree).points;
        sup_points.extend(rule.points.iter().copied());
        Self { rule, sup_points, norm_const: w.norm_const }
    }

    pub fn rule(&self) -> &QuadRule {
        &self.rule
    }

    /// `‖f‖_{p,κ}`; `p = f64::INFINITY` takes the sample maximum.
    pub fn norm(&self, f: impl Fn(&UnitVector) -> f64, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup_points.iter().map(|x| f(x).abs()).fold(0.0, f64::max);
        }
        let s: f64 = self.rule.points.iter().zip(&self.rule.weights).map(|(x, w)| w * f(x).abs().powf(p)).sum();
        (s / self.norm_const).powf(1.0 / p)
    }

    pub fn inner(&self, f: impl Fn(&UnitVector) -> f64, g: impl Fn(&UnitVector) -> f64) -> f64 {
        self.rule.points.iter().zip(&self.rule.weights).map(|(x, w)| w * f(x) * g(x)).sum::<f64>() / self.norm_const
    }
}

/// `[lower, upper]` for `E_n(f)_{p,κ}`; equal ends at `p = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxBracket {
    pub lower: f64,
    pub upper: f64,
}

/// `E_n(f)_{p,κ} = inf_{P ∈ Π_n} ‖f − P‖_{p,κ}` for `p ∈ {1, 2, ∞}`.
///
/// `f` is represented by its expansion through degree `K = e.max_degree()`.
/// The upper end minimizes over `P_n f` and `η_{⌊(n+1)/2⌋} f`; the lower end
/// is `max ⟨f, g⟩ / ‖g‖_{p'}` over test functions `g ⊥ Π_n`.
pub fn best_approx_error(e: &HarmonicExpansion, n: usize, p: f64) -> Result<ApproxBracket> {
    if !(p == 1.0 || p == 2.0 || p.is_infinite()) {
        return domain(format!("E_n is bracketed only for p ∈ {{1, 2, ∞}}, got {p}"));
    }
    if n >= e.max_degree() {
        return Ok(ApproxBracket { lower: 0.0, upper: 0.0 });
    }
    let residual = e.map_degrees(|k| if k <= n { 0.0 } else { 1.0 });
    if p == 2.0 {
        let v = residual.norm2();
        return Ok(ApproxBracket { lower: v, upper: v });
    }
    let sampler = NormSampler::new(e.weight(), 2 * e.max_degree() + 16);
    let m = (n + 1) / 2;
    let mut upper = sampler.norm(|x| residual.eval(x), p);
    if m >= 1 {
        let near = e.map_degrees(|k| 1.0 - eta(k as f64 / m as f64));
        upper = upper.min(sampler.norm(|x| near.eval(x), p));
    }
    let dual = if p.is_infinite() { 1.0 } else { f64::INFINITY };
    let basis = e.basis();
    let mut candidates = vec![residual.clone()];
    let sign = basis.expand_with_rule(|x| residual.eval(x).signum(), sampler.rule());
    candidates.push(sign.map_degrees(|k| if k <= n { 0.0 } else { 1.0 }));
    let mut lower: f64 = 0.0;
    for g in &candidates {
        let gn = sampler.norm(|x| g.eval(x), dual);
        if gn > 0.0 {
            let pairing = sampler.inner(|x| e.eval(x), |x| g.eval(x));
            lower = lower.max(pairing / gn);
        }
    }
    Ok(ApproxBracket { lower: lower.min(upper), upper })
}

/// `Δ_{h,0} f(x)` by fourth-order central differences on the degree-zero
/// homogeneous extension `F(y) = f(y / |y|)`:
/// `ΔF + Σ κ_v (2⟨∇F, v⟩/⟨x, v⟩ − (F(x) − F(xσ_v))/⟨x, v⟩²)`.
pub fn dunkl_laplacian_fd(w: &DunklWeight, f: impl Fn(&UnitVector) -> f64, x: &UnitVector, h: f64) -> f64 {
    let d = w.dim();
    let base = x.array();
    let ext = |y: [f64; 3]| -> f64 {
        let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        f(&UnitVector::from_array([y[0] / n, y[1] / n, y[2] / n], d))
    };
    let shifted = |i: usize, s: f64| -> f64 {
        let mut y = base;
        y[i] += s;
        ext(y)
    };
    let f0 = ext(base);
    let mut grad = [0.0; 3];
    let mut lap = 0.0;
    for i in 0..d {
        let (p1, m1, p2, m2) = (shifted(i, h), shifted(i, -h), shifted(i, 2.0 * h), shifted(i, -2.0 * h));
        grad[i] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
        lap += (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * h * h);
    }
    let mut dunkl = 0.0;
    for (v, k) in w.roots().active() {
        let vc = v.array();
        let xv = base[0] * vc[0] + base[1] * vc[1] + base[2] * vc[2];
        let gv = grad[0] * vc[0] + grad[1] * vc[1] + grad[2] * vc[2];
        let refl = [base[0] - 2.0 * xv * vc[0], base[1] - 2.0 * xv * vc[1], base[2] - 2.0 * xv * vc[2]];
        dunkl += k * (2.0 * gv / xv - (f0 - ext(refl)) / (xv * xv));
    }
    lap + dunkl
}

/// Named test functions for corpus-driven checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorpusFunction {
    Constant { value: f64 },
    CoordinateMonomial { alpha: Vec<u32> },
    CapIndicator { center: Vec<f64>, radius: f64 },
    Bump { center: Vec<f64>, scale: f64 },
    BandLimitedRandom { degree: usize, seed: u64 },
}

impl CorpusFunction {
    pub fn realize(&self, d: usize) -> Result<Field> {
        Ok(match self {
            Self::Constant { value } => {
                let v = *value;
                Arc::new(move |_| v)
            }
            Self::CoordinateMonomial { alpha } => {
                if alpha.len() != d {
                    return domain("monomial exponent length must equal the dimension");
                }
                let a = alpha.clone();
                Arc::new(move |x| x.coords().iter().zip(&a).map(|(c, &e)| c.powi(e as i32)).product())
            }
            Self::CapIndicator { center, radius } => {
                let c = UnitVector::normalize(center)?;
                let r = *radius;
                Arc::new(move |x| if angle_between(&c, x) <= r { 1.0 } else { 0.0 })
            }
            Self::Bump { center, scale } => {
                let c = UnitVector::normalize(center)?;
                let l = *scale;
                Arc::new(move |x| bump_profile(l * angle_between(&c, x)))
            }
            Self::BandLimitedRandom { degree, seed } => {
                let span = SpanningSet::new(d, *degree)?;
                let coeffs = random_coeffs(span.len(), *seed);
                Arc::new(move |x| span.eval(x).iter().zip(&coeffs).map(|(a, b)| a * b).sum())
            }
        })
    }
}

/// Standard normal coefficients for the first `len` spanning elements.
pub fn random_coeffs(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// A random element of `Π_n` as an exact expansion in `basis` (`n ≤ K`).
pub fn random_polynomial(basis: &Arc<HarmonicBasis>, n: usize, rng: &mut ChaCha8Rng) -> HarmonicExpansion {
    let len = spanning_dim(basis.spanning().d, n);
    let c: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    basis.from_spanning_coeffs(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn spanning_set_is_orthonormal() {
        for d in [2, 3] {
            let w = DunklWeight::unweighted(d).unwrap();
            let span = SpanningSet::new(d, 6).unwrap();
            let rule = weighted_rule(&w, 12);
            let n = span.len();
            let mut g = DMatrix::<f64>::zeros(n, n);
            for (x, &wx) in rule.points.iter().zip(&rule.weights) {
                let v = DVector::from_vec(span.eval(x));
                g.ger(wx, &v, &v, 1.0);
            }
            assert!((g - DMatrix::identity(n, n)).amax() < 1e-12);
        }
    }

    #[test]
    fn parity_labels_match_evaluation() {
        for d in [2, 3] {
            let span = SpanningSet::new(d, 5).unwrap();
            let x = UnitVector::normalize(&[0.3, -0.7, 0.5][..d]).unwrap();
            let v = span.eval(&x);
            for j in 0..d {
                let mut c = x.coords().to_vec();
                c[j] = -c[j];
                let fv = span.eval(&UnitVector::new(&c).unwrap());
                for i in 0..span.len() {
                    let sign = if span.parity_of(i) >> j & 1 == 1 { -1.0 } else { 1.0 };
                    assert_abs_diff_eq!(fv[i], sign * v[i], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn unweighted_kernels() {
        let w = DunklWeight::unweighted(3).unwrap();
        let x = UnitVector::from_spherical(0.4, 1.0);
        let y = UnitVector::from_spherical(1.2, -0.3);
        let spec = KernelSpec { weight: w.clone(), degree: 1, nodes: None };
        assert_abs_diff_eq!(kernel_P(&spec, &x, &y).unwrap(), 3.0 * x.dot(&y), epsilon = 1e-14);
        let spec0 = KernelSpec { weight: w, degree: 0, nodes: None };
        assert_abs_diff_eq!(kernel_P(&spec0, &x, &y).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn weighted_kernel_normalization() {
        let w = DunklWeight::z2d(&[0.5, 1.5]).unwrap();
        let x = UnitVector::from_angle(0.3);
        let y = UnitVector::from_angle(2.0);
        let p = kernel_profiles(&w, 3, &x, &y, None).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn kernel_matches_basis_sum() {
        // P_n(x, y) = Σ_{degree n} q_j(x) q_j(y) for an orthonormal basis of H_n.
        for kappa in [vec![0.5, 1.0], vec![0.0, 0.7], vec![0.5, 0.5, 0.5]] {
            let w = DunklWeight::z2d(&kappa).unwrap();
            let basis = HarmonicBasis::get(&w, 4).unwrap();
            let (x, y) = if kappa.len() == 2 {
                (UnitVector::from_angle(0.3), UnitVector::from_angle(2.1))
            } else {
                (UnitVector::from_spherical(0.5, 0.2), UnitVector::from_spherical(2.0, 4.0))
            };
            let profiles = kernel_profiles(&w, 4, &x, &y, None).unwrap();
            for n in 0..=4 {
                let f = |z: &UnitVector| profiles_at(&w, n, &y, z);
                let e = basis.expand(f, 16).block(n);
                assert_abs_diff_eq!(e.eval(&x), profiles[n], epsilon = 1e-9);
            }
        }
    }

    fn profiles_at(w: &DunklWeight, n: usize, y: &UnitVector, z: &UnitVector) -> f64 {
        kernel_profiles(w, n, z, y, None).unwrap()[n]
    }

    #[test]
    fn expansion_reproduces_polynomials() {
        let w = DunklWeight::z2d(&[0.5, 0.5]).unwrap();
        let basis = HarmonicBasis::get(&w, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_polynomial(&basis, 10, &mut rng);
        let again = basis.expand(|x| p.eval(x), 20);
        let x = UnitVector::from_angle(1.1);
        assert_abs_diff_eq!(again.eval(&x), p.eval(&x), epsilon = 1e-10);
    }

    #[test]
    fn fractional_powers() {
        let w = DunklWeight::z2d(&[0.5, 0.5]).unwrap();
        let basis = HarmonicBasis::get(&w, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_polynomial(&basis, 4, &mut rng);
        let b2 = p.block(2);
        let scaled = frac_laplacian(&b2, 2.0).unwrap();
        assert_abs_diff_eq!(scaled.norm2(), 8.0 * b2.norm2(), epsilon = 1e-10);
        assert!(frac_laplacian(&p, -1.0).is_err());
        let a = frac_laplacian(&frac_laplacian(&p, 0.7).unwrap(), 1.1).unwrap();
        let b = frac_laplacian(&p, 1.8).unwrap();
        assert!(a.combine(&b, 1.0, -1.0).unwrap().norm2() < 1e-10);
    }

    #[test]
    fn fd_laplacian_matches_eigenvalue() {
        let w = DunklWeight::z2d(&[0.5, 1.0]).unwrap();
        let basis = HarmonicBasis::get(&w, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_polynomial(&basis, 5, &mut rng).block(3);
        let x = UnitVector::from_angle(0.7);
        let lap = dunkl_laplacian_fd(&w, |z| p.eval(z), &x, 1e-3);
        let expected = -3.0 * (3.0 + 2.0 * w.lambda_kappa) * p.eval(&x);
        assert_abs_diff_eq!(lap, expected, epsilon = 1e-6 * expected.abs().max(1.0));
    }

    #[test]
    fn circle_kernel_diagonal() {
        let w = DunklWeight::unweighted(2).unwrap();
        let x = UnitVector::from_angle(0.9);
        let n = 6;
        let expected = 1.0 + 2.0 * (1..2 * n).map(|k| eta(k as f64 / n as f64)).sum::<f64>();
        assert_abs_diff_eq!(kernel_L(&w, n, &x, &x).unwrap(), expected, epsilon = 1e-12);
    }
}
