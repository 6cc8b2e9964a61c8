//! Deterministic reference quadrature for `∫ f h_κ² dσ` with `σ` normalized.
//!
//! For `Z_2^d` weights (including `κ = 0`) the substitutions `v = cos²θ` and
//! `u = t²` turn the octant-symmetrized integral into Gauss–Jacobi products,
//! which are exact on polynomials of the requested degree. Other root systems
//! on the circle use panels split at the weight zeros with the cusp exponent
//! absorbed into Gauss–Jacobi endpoint weights. Other root systems on `S^2`
//! fall back to an unsplit tensor rule whose inaccuracy is surfaced through the
//! level comparison.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::quadrature::{gauss_jacobi, gauss_legendre};
use crate::sphere::{Cap, UnitVector};
use crate::weight::{DunklWeight, GroupTag};

/// Points and weights with `Σ w_i f(x_i) ≈ ∫ f h_κ² dσ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub d: usize,
    pub points: Vec<UnitVector>,
    pub weights: Vec<f64>,
    /// Whether the rule is exact on polynomials up to the requested degree.
    pub exact: bool,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(&UnitVector) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// A reference integral evaluated at two consecutive accuracy levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefIntegral {
    pub value: f64,
    pub level: u32,
    /// `|I(level + 1) − I(level)|`.
    pub discrepancy: f64,
}

pub fn level_degree(level: u32) -> usize {
    16usize << level.min(12)
}

/// Quadrature for `h_κ² dσ` aimed at polynomials of degree `degree`.
pub fn weighted_rule(w: &DunklWeight, degree: usize) -> QuadRule {
    match (w.dim(), w.roots().tag()) {
        (2, GroupTag::Z2d) => z2d_circle_rule(w.kappa(), degree),
        (3, GroupTag::Z2d) => z2d_sphere_rule(w.kappa(), degree),
        (2, _) => circle_panel_rule(w, 0.0, 2.0 * PI, degree),
        (_, _) if w.is_unweighted() => z2d_sphere_rule(&[0.0; 3], degree),
        _ => sphere_tensor_rule(w, degree),
    }
}

/// `∫ f h_κ² dσ` at level `level` (polynomial degree `16·2^level`), with the
/// discrepancy against the next level.
pub fn reference_integrate(f: impl Fn(&UnitVector) -> f64, w: &DunklWeight, level: u32) -> RefIntegral {
    let a = weighted_rule(w, level_degree(level)).integrate(&f);
    let b = weighted_rule(w, level_degree(level + 1)).integrate(&f);
    RefIntegral { value: a, level, discrepancy: (a - b).abs() }
}

/// `∫ f · weight dσ` for an arbitrary bounded weight, splitting panels at the
/// great circles orthogonal to `zeros` (only on the circle).
pub fn reference_integrate_field(
    d: usize,
    f: impl Fn(&UnitVector) -> f64,
    weight: impl Fn(&UnitVector) -> f64,
    zeros: &[UnitVector],
    level: u32,
) -> RefIntegral {
    let eval = |deg: usize| -> f64 {
        if d == 2 {
            let breaks: Vec<(f64, f64)> = zeros.iter().flat_map(|v| circle_zero_angles(v).map(|t| (t, 0.0))).collect();
            panel_nodes(0.0, 2.0 * PI, &breaks, deg).into_iter().map(|(t, wt)| {
                let x = UnitVector::from_angle(t);
                wt * f(&x) * weight(&x)
            }).sum::<f64>() / (2.0 * PI)
        } else {
            z2d_sphere_rule(&[0.0; 3], deg).integrate(|x| f(x) * weight(x))
        }
    };
    let a = eval(level_degree(level));
    let b = eval(level_degree(level + 1));
    RefIntegral { value: a, level, discrepancy: (a - b).abs() }
}

fn jacobi_unit_interval(n: usize, alpha: f64, beta: f64) -> Vec<(f64, f64)> {
    // ∫_0^1 v^β (1-v)^α g(v) dv
    let rule = gauss_jacobi(n, alpha, beta).expect("exponents exceed -1");
    rule.mapped(0.0, 1.0).collect()
}

/// `v = cos²θ` rule on the first quadrant, weights normalized so that the
/// full-circle integral is `(1/2π)(1/2) Σ W Σ_{4 images} f`.
fn quadrant_rule(k1: f64, k2: f64, degree: usize) -> Vec<(f64, f64, f64)> {
    let n = degree / 4 + 1;
    jacobi_unit_interval(n, k2 - 0.5, k1 - 0.5)
        .into_iter()
        .map(|(v, wt)| (v.sqrt(), (1.0 - v).max(0.0).sqrt(), wt))
        .collect()
}

fn z2d_circle_rule(kappa: &[f64], degree: usize) -> QuadRule {
    let q = quadrant_rule(kappa[0], kappa[1], degree);
    let mut points = Vec::with_capacity(4 * q.len());
    let mut weights = Vec::with_capacity(4 * q.len());
    let scale = 1.0 / (4.0 * PI);
    for (c, s, wt) in q {
        for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            points.push(UnitVector::from_array([sx * c, sy * s, 0.0], 2));
            weights.push(wt * scale);
        }
    }
    QuadRule { d: 2, points, weights, exact: true }
}

fn z2d_sphere_rule(kappa: &[f64], degree: usize) -> QuadRule {
    let n = degree / 4 + 1;
    let zr = jacobi_unit_interval(n, kappa[0] + kappa[1], kappa[2] - 0.5);
    let q = quadrant_rule(kappa[0], kappa[1], degree);
    let scale = 1.0 / (16.0 * PI);
    let mut points = Vec::with_capacity(8 * zr.len() * q.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for &(u, wu) in &zr {
        let z = u.sqrt();
        let rho = (1.0 - u).max(0.0).sqrt();
        for &(c, s, wv) in &q {
            for sz in [1.0, -1.0] {
                for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                    points.push(UnitVector::from_array([sx * rho * c, sy * rho * s, sz * z], 3));
                    weights.push(wu * wv * scale);
                }
            }
        }
    }
    QuadRule { d: 3, points, weights, exact: true }
}

/// The two angles in `[0, 2π)` where `⟨x, v⟩ = 0` on the circle.
fn circle_zero_angles(v: &UnitVector) -> impl Iterator<Item = f64> {
    let t = (v.angle() + 0.5 * PI).rem_euclid(PI);
    [t, t + PI].into_iter()
}

/// Nodes on `[lo, hi]` for `∫ g(θ) dθ`, split at `breaks` (angle, exponent),
/// with `|θ − b|^e` absorbed into the Gauss–Jacobi weight at each break; the
/// returned weights already divide that factor back out.
fn panel_nodes(lo: f64, hi: f64, breaks: &[(f64, f64)], degree: usize) -> Vec<(f64, f64)> {
    let mut cuts: Vec<(f64, f64)> = vec![(lo, 0.0), (hi, 0.0)];
    for &(t, e) in breaks {
        let mut a = t;
        while a > lo {
            a -= 2.0 * PI;
        }
        while a <= hi + 1e-14 {
            if a > lo + 1e-14 && a < hi - 1e-14 {
                cuts.push((a, e));
            } else if (a - lo).abs() <= 1e-14 {
                cuts[0].1 = cuts[0].1.max(e);
            } else if (a - hi).abs() <= 1e-14 {
                cuts[1].1 = cuts[1].1.max(e);
            }
            a += 2.0 * PI;
        }
    }
    cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for pair in cuts.windows(2) {
        let ((a, ea), (b, eb)) = (pair[0], pair[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let n = (0.5 * degree as f64 * len).ceil() as usize + 24;
        let rule = gauss_jacobi(n, eb, ea).expect("exponents are non-negative");
        for (t, wt) in rule.mapped(a, b) {
            let jac = (b - t).powf(eb) * (t - a).powf(ea);
            out.push((t, wt / jac));
        }
    }
    out
}

fn circle_breaks(w: &DunklWeight) -> Vec<(f64, f64)> {
    w.roots()
        .active()
        .flat_map(|(v, k)| circle_zero_angles(v).map(move |t| (t, 2.0 * k)))
        .collect()
}

fn circle_panel_rule(w: &DunklWeight, lo: f64, hi: f64, degree: usize) -> QuadRule {
    let nodes = panel_nodes(lo, hi, &circle_breaks(w), degree);
    let mut points = Vec::with_capacity(nodes.len());
    let mut weights = Vec::with_capacity(nodes.len());
    for (t, wt) in nodes {
        let x = UnitVector::from_angle(t);
        weights.push(wt * w.eval(&x) / (2.0 * PI));
        points.push(x);
    }
    QuadRule { d: 2, points, weights, exact: w.is_unweighted() }
}

fn sphere_tensor_rule(w: &DunklWeight, degree: usize) -> QuadRule {
    let nz = degree / 2 + 1;
    let nphi = degree + 2;
    let gz = gauss_legendre(nz);
    let mut points = Vec::with_capacity(nz * nphi);
    let mut weights = Vec::with_capacity(nz * nphi);
    for (&z, &wz) in gz.nodes.iter().zip(&gz.weights) {
        let rho = (1.0 - z * z).max(0.0).sqrt();
        for j in 0..nphi {
            let phi = 2.0 * PI * j as f64 / nphi as f64;
            let x = UnitVector::from_array([rho * phi.cos(), rho * phi.sin(), z], 3);
            weights.push(wz * w.eval(&x) / (2.0 * nphi as f64));
            points.push(x);
        }
    }
    QuadRule { d: 3, points, weights, exact: w.is_unweighted() }
}

/// `∫_cap f h_κ² dσ` (normalized `σ`, not divided by `a_d^κ`).
pub fn cap_integral(w: &DunklWeight, cap: &Cap, level: u32, f: impl Fn(&UnitVector) -> f64) -> f64 {
    match w.dim() {
        2 => {
            let c = cap.center.angle();
            let degree = 64 << level.min(8);
            panel_nodes(c - cap.radius, c + cap.radius, &circle_breaks(w), degree)
                .into_iter()
                .map(|(t, wt)| {
                    let x = UnitVector::from_angle(t);
                    wt * w.eval(&x) * f(&x)
                })
                .sum::<f64>()
                / (2.0 * PI)
        }
        _ => sphere_cap_integral(w, cap, level, f),
    }
}

fn orthonormal_frame(x: &UnitVector) -> ([f64; 3], [f64; 3]) {
    let c = x.array();
    let helper = if c[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let dot = helper[0] * c[0] + helper[1] * c[1] + helper[2] * c[2];
    let mut e1 = [helper[0] - dot * c[0], helper[1] - dot * c[1], helper[2] - dot * c[2]];
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|t| *t /= n);
    let e2 = [c[1] * e1[2] - c[2] * e1[1], c[2] * e1[0] - c[0] * e1[2], c[0] * e1[1] - c[1] * e1[0]];
    (e1, e2)
}

/// Polar coordinates `(ρ, ψ)` about the cap center; `ρ` panels split where the
/// circles become tangent to a root hyperplane, `ψ` panels split where they
/// cross one.
fn sphere_cap_integral(w: &DunklWeight, cap: &Cap, level: u32, f: impl Fn(&UnitVector) -> f64) -> f64 {
    let x = cap.center.array();
    let (e1, e2) = orthonormal_frame(&cap.center);
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    // (a, b, ψ0, exponent): ⟨y, v⟩ = a cos ρ + b sin ρ cos(ψ − ψ0)
    let roots: Vec<(f64, f64, f64, f64)> = w
        .roots()
        .active()
        .map(|(v, k)| {
            let vc = v.array();
            let (p, q) = (dot(&e1, &vc), dot(&e2, &vc));
            (dot(&x, &vc), p.hypot(q), q.atan2(p), 2.0 * k)
        })
        .collect();
    let r = cap.radius;
    let mut cuts = vec![0.0, r];
    for &(a, b, _, _) in &roots {
        let star = a.abs().atan2(b);
        for t in [star, PI - star] {
            if t > 1e-14 && t < r - 1e-14 {
                cuts.push(t);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let scale = (level + 1) as usize;
    let n_rho = 40 * scale;
    let n_psi = 24 * scale;
    let gl = gauss_legendre(n_rho);
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi - lo <= 0.0 {
            continue;
        }
        // The ring integral has algebraic endpoint singularities at tangencies;
        // the cubic sigmoid grading flattens them.
        for (rho, wr) in gl.mapped(0.0, 1.0).map(|(u, wu)| {
            let (p, q) = (u * u * u, (1.0 - u).powi(3));
            let g = p / (p + q);
            let dg = 3.0 * u * u * (1.0 - u) * (1.0 - u) / ((p + q) * (p + q));
            (lo + (hi - lo) * g, wu * (hi - lo) * dg)
        }) {
            let (cr, sr) = (rho.cos(), rho.sin());
            let mut breaks = Vec::new();
            for &(a, b, psi0, e) in &roots {
                // Crossing half-angle δ with cos δ = −a cos ρ / (b sin ρ); the gap
                // b sin ρ − |a cos ρ| is evaluated as a sine to keep δ accurate
                // near tangency.
                let star = a.abs().atan2(b);
                let gap = if rho <= 0.5 * PI { (rho - star).sin() } else { (PI - star - rho).sin() };
                if gap > 0.0 {
                    let big = b * sr;
                    let delta = (gap * (big + (a * cr).abs())).sqrt().atan2(-a * cr);
                    breaks.push((psi0 + delta, e));
                    breaks.push((psi0 - delta, e));
                }
            }
            let ring: f64 = panel_nodes(0.0, 2.0 * PI, &breaks, 2 * n_psi)
                .into_iter()
                .map(|(psi, wp)| {
                    let (cp, sp) = (psi.cos(), psi.sin());
                    let mut y = [0.0; 3];
                    for i in 0..3 {
                        y[i] = cr * x[i] + sr * (cp * e1[i] + sp * e2[i]);
                    }
                    let n = dot(&y, &y).sqrt();
                    y.iter_mut().for_each(|t| *t /= n);
                    let yv = UnitVector::from_array(y, 3);
                    wp * w.eval(&yv) * f(&yv)
                })
                .sum();
            total += wr * sr * ring;
        }
    }
    total / (4.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalized_total_mass() {
        let w0 = DunklWeight::unweighted(2).unwrap();
        assert_abs_diff_eq!(reference_integrate(|_| 1.0, &w0, 0).value, 1.0, epsilon = 1e-14);
        let w3 = DunklWeight::unweighted(3).unwrap();
        let r = reference_integrate(|x| x.coords()[0].powi(2), &w3, 0);
        assert_abs_diff_eq!(r.value, 1.0 / 3.0, epsilon = 1e-14);
        let w = DunklWeight::z2d(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(reference_integrate(|_| 1.0, &w, 0).value, 0.125, epsilon = 1e-14);
    }

    #[test]
    fn product_rule_matches_closed_form_norms() {
        for kappa in [[0.5, 0.25, 1.5], [0.0, 0.7, 0.0], [2.0, 2.0, 2.0]] {
            let w = DunklWeight::z2d(&kappa).unwrap();
            let v = weighted_rule(&w, 0).integrate(|_| 1.0);
            assert_abs_diff_eq!(v, w.norm_const, epsilon = 1e-13 * w.norm_const.max(1.0));
        }
    }

    #[test]
    fn generic_panels_agree_with_product_rule() {
        let w = DunklWeight::z2d(&[0.3, 0.8]).unwrap();
        let f = |x: &UnitVector| (3.0 * x.coords()[0] + x.coords()[1]).exp();
        let exact = weighted_rule(&w, 64).integrate(f);
        let panels = circle_panel_rule(&w, 0.0, 2.0 * PI, 64).integrate(f);
        assert_abs_diff_eq!(exact, panels, epsilon = 1e-12);
    }

    #[test]
    fn unweighted_caps() {
        let w2 = DunklWeight::unweighted(2).unwrap();
        let c = Cap::new(UnitVector::from_angle(0.4), 0.3).unwrap();
        assert_abs_diff_eq!(cap_integral(&w2, &c, 0, |_| 1.0), 0.3 / PI, epsilon = 1e-14);
        let w3 = DunklWeight::unweighted(3).unwrap();
        let c = Cap::new(UnitVector::from_spherical(1.0, 2.0), 0.2).unwrap();
        assert_abs_diff_eq!(cap_integral(&w3, &c, 0, |_| 1.0), (1.0 - 0.2f64.cos()) / 2.0, epsilon = 1e-14);
        let c = Cap::new(UnitVector::from_spherical(1.0, 2.0), PI).unwrap();
        assert_abs_diff_eq!(cap_integral(&w3, &c, 0, |_| 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_sphere_caps_sum_to_total() {
        let w = DunklWeight::z2d(&[0.5, 1.0, 0.25]).unwrap();
        let x = UnitVector::normalize(&[0.3, -0.5, 0.8]).unwrap();
        let whole = cap_integral(&w, &Cap::new(x, PI).unwrap(), 2, |_| 1.0);
        assert_abs_diff_eq!(whole, w.norm_const, epsilon = 1e-7 * w.norm_const);
        // a cap and its complement
        let r = 1.1;
        let inner = cap_integral(&w, &Cap::new(x, r).unwrap(), 2, |_| 1.0);
        let outer = cap_integral(&w, &Cap::new(x.neg(), PI - r).unwrap(), 2, |_| 1.0);
        assert_abs_diff_eq!(inner + outer, w.norm_const, epsilon = 1e-7 * w.norm_const);
    }
}
