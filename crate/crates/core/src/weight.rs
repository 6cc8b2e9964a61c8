//! Root systems, the weight `h_κ²(x) = ∏ |⟨x, v⟩|^{2κ_v}` and the cap-measure
//! diagnostics built on it.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::reference;
use crate::special::ln_gamma;
use crate::sphere::{angle_between, Cap, UnitVector};

const CLOSURE_TOL: f64 = 1e-10;
const MAX_GROUP_ORDER: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupTag {
    /// Coordinate sign flips; the roots are `e_1, …, e_d`.
    Z2d,
    /// Any other root system that passed the numerical closure check.
    GeneralVerified,
}

pub type Matrix3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSystem {
    d: usize,
    roots: Vec<UnitVector>,
    kappa: Vec<f64>,
    tag: GroupTag,
}

impl RootSystem {
    /// `Z_2^d` with multiplicity `kappa[i]` on `e_i`.
    pub fn z2d(kappa: &[f64]) -> Result<Self> {
        let d = kappa.len();
        check_multiplicities(kappa)?;
        let roots = (0..d).map(|i| UnitVector::axis(d, i)).collect::<Result<Vec<_>>>()?;
        Ok(Self { d, roots, kappa: kappa.to_vec(), tag: GroupTag::Z2d })
    }

    /// The unweighted case `κ = 0`.
    pub fn unweighted(d: usize) -> Result<Self> {
        Self::z2d(&vec![0.0; d])
    }

    /// Normalizes the roots and checks closure under reflections and
    /// constancy of the multiplicities on reflection orbits.
    pub fn new(d: usize, roots: &[Vec<f64>], kappa: &[f64]) -> Result<Self> {
        if roots.len() != kappa.len() {
            return Err(Error::Config(format!("{} roots but {} multiplicities", roots.len(), kappa.len())));
        }
        check_multiplicities(kappa)?;
        let mut units = Vec::with_capacity(roots.len());
        for r in roots {
            if r.len() != d {
                return Err(Error::Config(format!("root {r:?} does not have {d} coordinates")));
            }
            units.push(UnitVector::normalize(r).map_err(|e| Error::Config(e.to_string()))?);
        }
        if let Some(order) = coordinate_axes(&units, d) {
            let k: Vec<f64> = order.iter().map(|&j| kappa[j]).collect();
            return Self::z2d(&k);
        }
        for (i, u) in units.iter().enumerate() {
            for (j, v) in units.iter().enumerate() {
                let image = reflect_unit(u, v);
                let hit = units.iter().position(|w| {
                    let dd = image.dot(w);
                    (dd.abs() - 1.0).abs() < CLOSURE_TOL
                });
                match hit {
                    None => {
                        return Err(Error::Config(format!(
                            "root set is not closed: reflecting root {i} in root {j} leaves the set"
                        )))
                    }
                    Some(h) if (kappa[h] - kappa[i]).abs() > 1e-12 => {
                        return Err(Error::Config(format!(
                            "multiplicities differ on one reflection orbit (roots {i} and {h})"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { d, roots: units, kappa: kappa.to_vec(), tag: GroupTag::GeneralVerified })
    }

    /// Parses `d=<int>` followed by `root <d floats> kappa <float>` lines.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Config("empty root-system description".into()))?;
        let d: usize = header
            .strip_prefix("d=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("expected `d=<int>`, found `{header}`")))?;
        let mut roots = Vec::new();
        let mut kappa = Vec::new();
        for line in lines {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Config(format!("expected `root <{d} floats> kappa <float>`, found `{line}`"));
            if tokens.len() != d + 3 || tokens[0] != "root" || tokens[d + 1] != "kappa" {
                return Err(bad());
            }
            let coords = tokens[1..=d].iter().map(|t| t.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad())?;
            roots.push(coords);
            kappa.push(tokens[d + 2].parse::<f64>().map_err(|_| bad())?);
        }
        if roots.is_empty() {
            return Self::unweighted(d).map_err(|e| Error::Config(e.to_string()));
        }
        Self::new(d, &roots, &kappa)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("d={}\n", self.d);
        for (r, k) in self.roots.iter().zip(&self.kappa) {
            let coords: Vec<String> = r.coords().iter().map(|c| format!("{c}")).collect();
            s.push_str(&format!("root {} kappa {k}\n", coords.join(" ")));
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn roots(&self) -> &[UnitVector] {
        &self.roots
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    /// Roots that carry a positive multiplicity, with their multiplicity.
    pub fn active(&self) -> impl Iterator<Item = (&UnitVector, f64)> {
        self.roots.iter().zip(self.kappa.iter().copied()).filter(|(_, k)| *k > 0.0)
    }

    /// All elements of the reflection group, generated by breadth-first closure.
    pub fn group_elements(&self) -> Result<Vec<Matrix3>> {
        let gens: Vec<Matrix3> = self.roots.iter().map(reflection_matrix).collect();
        let mut id = [[0.0; 3]; 3];
        for (i, row) in id.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut elems = vec![id];
        let mut queue = VecDeque::from([id]);
        while let Some(g) = queue.pop_front() {
            for s in &gens {
                let h = mat_mul(s, &g);
                if !elems.iter().any(|e| mat_close(e, &h)) {
                    if elems.len() >= MAX_GROUP_ORDER {
                        return Err(Error::Capability("reflection group is too large or infinite".into()));
                    }
                    elems.push(h);
                    queue.push_back(h);
                }
            }
        }
        Ok(elems)
    }
}

fn check_multiplicities(kappa: &[f64]) -> Result<()> {
    if let Some(k) = kappa.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
        return Err(Error::Config(format!("multiplicities must be finite and non-negative, got {k}")));
    }
    Ok(())
}

/// If the roots are `±e_i` in some order, returns the root index per axis.
fn coordinate_axes(units: &[UnitVector], d: usize) -> Option<Vec<usize>> {
    if units.len() != d {
        return None;
    }
    let mut order = vec![usize::MAX; d];
    for (j, u) in units.iter().enumerate() {
        let i = (0..d).find(|&i| (u.coords()[i].abs() - 1.0).abs() < 1e-14)?;
        if order[i] != usize::MAX {
            return None;
        }
        order[i] = j;
    }
    Some(order)
}

fn reflection_matrix(v: &UnitVector) -> Matrix3 {
    let c = v.array();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = if i == j { 1.0 } else { 0.0 } - 2.0 * c[i] * c[j];
        }
    }
    m
}

fn mat_mul(a: &Matrix3, b: &Matrix3) -> Matrix3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn mat_close(a: &Matrix3, b: &Matrix3) -> bool {
    a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| (x - y).abs() < 1e-9)
}

pub(crate) fn apply(m: &Matrix3, x: &UnitVector) -> UnitVector {
    let c = x.array();
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = m[i][0] * c[0] + m[i][1] * c[1] + m[i][2] * c[2];
    }
    UnitVector::from_array(out, x.dim())
}

fn reflect_unit(x: &UnitVector, v: &UnitVector) -> UnitVector {
    let s = 2.0 * x.dot(v);
    let (a, b) = (x.array(), v.array());
    UnitVector::from_array([a[0] - s * b[0], a[1] - s * b[1], a[2] - s * b[2]], x.dim())
}

/// `x σ_v = x − 2⟨x, v⟩/⟨v, v⟩ v`.
pub fn reflect(x: &UnitVector, v: &[f64]) -> Result<UnitVector> {
    if v.len() != x.dim() {
        return domain(format!("root has {} coordinates, point has {}", v.len(), x.dim()));
    }
    let vv: f64 = v.iter().map(|t| t * t).sum();
    if !(vv > 0.0 && vv.is_finite()) {
        return domain("cannot reflect in a zero vector");
    }
    let s = 2.0 * x.dot_slice(v) / vv;
    let out: Vec<f64> = x.coords().iter().zip(v).map(|(a, b)| a - s * b).collect();
    UnitVector::normalize(&out)
}

/// `h_κ²` together with `γ_κ`, `λ_κ` and `a_d^κ = ∫ h_κ² dσ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunklWeight {
    roots: RootSystem,
    pub gamma_kappa: f64,
    pub lambda_kappa: f64,
    pub norm_const: f64,
}

impl DunklWeight {
    pub fn new(roots: RootSystem) -> Result<Self> {
        let d = roots.dim();
        let gamma_kappa: f64 = roots.kappa().iter().sum();
        let lambda_kappa = (d as f64 - 2.0) / 2.0 + gamma_kappa;
        let mut w = Self { roots, gamma_kappa, lambda_kappa, norm_const: 1.0 };
        if gamma_kappa > 0.0 {
            w.norm_const = match w.roots.tag() {
                GroupTag::Z2d => z2d_norm_const(w.roots.kappa()),
                GroupTag::GeneralVerified => reference::reference_integrate(|_| 1.0, &w, 4).value,
            };
        }
        if !(w.norm_const > 0.0 && w.norm_const.is_finite()) {
            return Err(Error::Numerical(format!("weight normalization evaluated to {}", w.norm_const)));
        }
        Ok(w)
    }

    pub fn z2d(kappa: &[f64]) -> Result<Self> {
        Self::new(RootSystem::z2d(kappa)?)
    }

    pub fn unweighted(d: usize) -> Result<Self> {
        Self::new(RootSystem::unweighted(d)?)
    }

    pub fn dim(&self) -> usize {
        self.roots.dim()
    }

    pub fn roots(&self) -> &RootSystem {
        &self.roots
    }

    pub fn kappa(&self) -> &[f64] {
        self.roots.kappa()
    }

    pub fn is_unweighted(&self) -> bool {
        self.gamma_kappa == 0.0
    }

    /// Kernels have closed forms only for `Z_2^d` and for `κ = 0`.
    pub fn supports_kernels(&self) -> bool {
        self.is_unweighted() || self.roots.tag() == GroupTag::Z2d
    }

    pub fn require_kernels(&self) -> Result<()> {
        if self.supports_kernels() {
            Ok(())
        } else {
            Err(Error::Capability("kernel computations need a Z_2^d root system or κ = 0".into()))
        }
    }

    /// `h_κ²(x)`.
    pub fn eval(&self, x: &UnitVector) -> f64 {
        self.roots.active().map(|(v, k)| x.dot(v).abs().powf(2.0 * k)).product()
    }
}

fn z2d_norm_const(kappa: &[f64]) -> f64 {
    let d = kappa.len() as f64;
    let total: f64 = kappa.iter().sum();
    let ln = kappa.iter().map(|k| ln_gamma(k + 0.5)).sum::<f64>() - ln_gamma(total + d / 2.0) + ln_gamma(d / 2.0)
        - (d / 2.0) * PI.ln();
    ln.exp()
}

pub fn eval_weight(w: &DunklWeight, x: &UnitVector) -> f64 {
    w.eval(x)
}

/// `w(c) = ∫_c h_κ² dσ` with `σ` normalized to total mass one.
pub fn cap_measure(w: &DunklWeight, cap: &Cap, level: u32) -> f64 {
    reference::cap_integral(w, cap, level, |_| 1.0)
}

/// `n^{-(d-1)} ∏ (|⟨x, v⟩| + 1/n)^{2κ_v}`.
pub fn cap_measure_model(w: &DunklWeight, x: &UnitVector, n: u32) -> Result<f64> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    let nf = n as f64;
    let prod: f64 = w.roots.active().map(|(v, k)| (x.dot(v).abs() + 1.0 / nf).powf(2.0 * k)).product();
    Ok(nf.powi(-(w.dim() as i32 - 1)) * prod)
}

/// `w_n(x) = n^{d-1} w(c(x, 1/n))`.
pub fn w_n_approx(w: &DunklWeight, x: &UnitVector, n: u32) -> Result<f64> {
    if n == 0 {
        return domain("n must be at least 1");
    }
    let cap = Cap::new(*x, (1.0 / n as f64).min(PI))?;
    Ok((n as f64).powi(w.dim() as i32 - 1) * cap_measure(w, &cap, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingGrid {
    pub centers: Vec<UnitVector>,
    pub radii: Vec<f64>,
    pub depths: Vec<u32>,
    /// Degrees `n` for the `w_n` comparability check.
    pub degrees: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingSample {
    pub center: UnitVector,
    pub radius: f64,
    pub m: u32,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub estimated_s_w: f64,
    /// Largest `w(c(x, 2r)) / w(c(x, r))` seen.
    pub doubling_constant: f64,
    pub max_ratio_samples: Vec<DoublingSample>,
    /// Largest `w_n(x) / (w_n(y) (1 + n d(x, y))^{s_w})` over center pairs.
    pub comparability: f64,
    pub grid: String,
}

pub fn doubling_diagnostics(w: &DunklWeight, grid: &DoublingGrid) -> Result<DoublingReport> {
    let mut samples = Vec::new();
    let mut s_w: f64 = 0.0;
    let mut doubling: f64 = 1.0;
    for x in &grid.centers {
        for &r in &grid.radii {
            let base = cap_measure(w, &Cap::new(*x, r.min(PI))?, 1);
            for &m in &grid.depths {
                let big = cap_measure(w, &Cap::new(*x, (r * 2f64.powi(m as i32)).min(PI))?, 1);
                let ratio = big / base;
                if m >= 1 {
                    s_w = s_w.max(ratio.log2() / m as f64);
                }
                if m == 1 {
                    doubling = doubling.max(ratio);
                }
                samples.push(DoublingSample { center: *x, radius: r, m, ratio });
            }
        }
    }
    let mut comparability: f64 = 0.0;
    for &n in &grid.degrees {
        let vals: Vec<f64> = grid.centers.iter().map(|x| w_n_approx(w, x, n)).collect::<Result<_>>()?;
        for (i, x) in grid.centers.iter().enumerate() {
            for (j, y) in grid.centers.iter().enumerate() {
                let dist = angle_between(x, y);
                let bound = (1.0 + n as f64 * dist).powf(s_w);
                comparability = comparability.max(vals[i] / (vals[j] * bound));
            }
        }
    }
    samples.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
    samples.truncate(32);
    let grid_desc = format!(
        "{} centers, radii {:?}, depths {:?}, degrees {:?}",
        grid.centers.len(),
        grid.radii,
        grid.depths,
        grid.degrees
    );
    Ok(DoublingReport { estimated_s_w: s_w, doubling_constant: doubling, max_ratio_samples: samples, comparability, grid: grid_desc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reflections() {
        let e1 = UnitVector::axis(2, 0).unwrap();
        let e2 = UnitVector::axis(2, 1).unwrap();
        assert_eq!(reflect(&e1, &[1.0, 0.0]).unwrap(), e1.neg());
        assert_eq!(reflect(&e2, &[1.0, 0.0]).unwrap(), e2);
        let x = UnitVector::normalize(&[1.0, 1.0]).unwrap();
        let y = reflect(&x, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(y.coords()[0], -(0.5f64.sqrt()), epsilon = 1e-15);
        assert!(reflect(&x, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn weight_values() {
        let w = DunklWeight::z2d(&[1.0, 1.0]).unwrap();
        let x = UnitVector::normalize(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(w.eval(&x), 0.25, epsilon = 1e-15);
        assert_eq!(w.eval(&UnitVector::axis(2, 0).unwrap()), 0.0);
        assert_abs_diff_eq!(w.norm_const, 0.125, epsilon = 1e-15);
        let w0 = DunklWeight::unweighted(3).unwrap();
        assert_eq!(w0.eval(&x.neg()), 1.0);
        assert_eq!(w0.norm_const, 1.0);
    }

    #[test]
    fn closure_detection() {
        let s = 3f64.sqrt() / 2.0;
        let a2 = RootSystem::new(2, &[vec![1.0, 0.0], vec![0.5, s], vec![-0.5, s]], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(a2.tag(), GroupTag::GeneralVerified);
        assert_eq!(a2.group_elements().unwrap().len(), 6);
        assert!(RootSystem::new(2, &[vec![1.0, 0.0], vec![1.0, 1.0]], &[1.0, 1.0]).is_err());
        assert!(RootSystem::new(2, &[vec![1.0, 0.0], vec![0.5, s], vec![-0.5, s]], &[0.5, 0.5, 1.0]).is_err());
        let permuted = RootSystem::new(2, &[vec![0.0, 1.0], vec![1.0, 0.0]], &[2.0, 1.0]).unwrap();
        assert_eq!(permuted.tag(), GroupTag::Z2d);
        assert_eq!(permuted.kappa(), &[1.0, 2.0]);
        assert_eq!(RootSystem::z2d(&[0.5, 0.5, 0.5]).unwrap().group_elements().unwrap().len(), 8);
    }

    #[test]
    fn text_round_trip() {
        let text = "# A2\nd=2\nroot 1 0 kappa 0.5\nroot 0.5 0.8660254037844386 kappa 0.5\nroot -0.5 0.8660254037844386 kappa 0.5\n";
        let r = RootSystem::parse(text).unwrap();
        assert_eq!(r.roots().len(), 3);
        let again = RootSystem::parse(&r.to_text()).unwrap();
        assert_eq!(again.kappa(), r.kappa());
        assert!(RootSystem::parse("d=2\nroot 1 kappa 1").is_err());
        assert!(RootSystem::parse("dim 2").is_err());
    }

    #[test]
    fn model_formula() {
        let w = DunklWeight::z2d(&[1.0, 1.0]).unwrap();
        let e1 = UnitVector::axis(2, 0).unwrap();
        let v = cap_measure_model(&w, &e1, 10).unwrap();
        assert_abs_diff_eq!(v, 0.1 * 1.1f64.powi(2) * 0.01, epsilon = 1e-16);
        let w0 = DunklWeight::unweighted(3).unwrap();
        assert_abs_diff_eq!(cap_measure_model(&w0, &UnitVector::axis(3, 2).unwrap(), 7).unwrap(), 1.0 / 49.0, epsilon = 1e-16);
    }
}
