//! Gauss–Jacobi rules on `[-1, 1]` for the weight `(1-t)^α (1+t)^β`.
//!
//! Nodes are the eigenvalues of the Jacobi matrix (implicit QL, values only),
//! polished by Newton steps on the orthonormal recurrence; weights are the
//! Christoffel numbers `1 / Σ_k p_k(x)^2`. Everything is `O(n^2)`, so rules
//! with a few thousand nodes are cheap.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{domain, Error, Result};
use crate::special::ln_gamma;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i f(x_i)`, approximating `∫ (1-t)^α (1+t)^β f(t) dt`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Nodes and weights for `∫_a^b (b-x)^α (x-a)^β f(x) dx`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let scale = half.powf(self.alpha + self.beta + 1.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (a + half * (t + 1.0), w * scale))
    }
}

struct Recurrence {
    diag: Vec<f64>,
    // off[k] is b_{k+1}, the coupling between p_k and p_{k+1}
    off: Vec<f64>,
    mu0: f64,
}

fn jacobi_recurrence(n: usize, alpha: f64, beta: f64) -> Recurrence {
    let s = alpha + beta;
    let diag = (0..n)
        .map(|k| {
            if k == 0 {
                (beta - alpha) / (s + 2.0)
            } else {
                let kk = 2.0 * k as f64 + s;
                (beta * beta - alpha * alpha) / (kk * (kk + 2.0))
            }
        })
        .collect();
    let off = (1..=n)
        .map(|k| {
            let kf = k as f64;
            let b2 = if k == 1 {
                4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + s).powi(2) * (3.0 + s))
            } else {
                let kk = 2.0 * kf + s;
                4.0 * kf * (kf + alpha) * (kf + beta) * (kf + s) / (kk * kk * (kk + 1.0) * (kk - 1.0))
            };
            b2.sqrt()
        })
        .collect();
    let mu0 = ((s + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0) - ln_gamma(s + 2.0)).exp();
    Recurrence { diag, off, mu0 }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// couplings `e[i]` between rows `i` and `i+1`. Overwrites `d`.
fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Numerical("implicit QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Evaluates `(p_n(x), p_n'(x), Σ_{k<n} p_k(x)^2)` for the orthonormal family.
fn orthonormal_eval(rec: &Recurrence, x: f64) -> (f64, f64, f64) {
    let n = rec.diag.len();
    let mut p_prev = 0.0;
    let mut p = 1.0 / rec.mu0.sqrt();
    let mut dp_prev = 0.0;
    let mut dp = 0.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += p * p;
        let b_prev = if k == 0 { 0.0 } else { rec.off[k - 1] };
        let b_next = rec.off[k];
        let p_next = ((x - rec.diag[k]) * p - b_prev * p_prev) / b_next;
        let dp_next = ((x - rec.diag[k]) * dp + p - b_prev * dp_prev) / b_next;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp, sumsq)
}

fn build_gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<GaussRule> {
    let rec = jacobi_recurrence(n, alpha, beta);
    let mut d = rec.diag.clone();
    let mut e: Vec<f64> = rec.off[..n].to_vec();
    e[n - 1] = 0.0;
    tridiagonal_eigenvalues(&mut d, &mut e)?;
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut weights = Vec::with_capacity(n);
    for x in d.iter_mut() {
        for _ in 0..2 {
            let (p, dp, _) = orthonormal_eval(&rec, *x);
            if dp != 0.0 && dp.is_finite() {
                let step = p / dp;
                if step.abs() < 1e-6 {
                    *x = (*x - step).clamp(-1.0, 1.0);
                }
            }
        }
        let (_, _, sumsq) = orthonormal_eval(&rec, *x);
        weights.push(1.0 / sumsq);
    }
    Ok(GaussRule { nodes: d, weights, alpha, beta })
}

type RuleKey = (usize, u64, u64);

fn cache() -> &'static Mutex<HashMap<RuleKey, Arc<GaussRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<GaussRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Jacobi rule with `n` nodes; exact for polynomials of degree `2n - 1`.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<Arc<GaussRule>> {
    if n == 0 {
        return domain("a Gauss rule needs at least one node");
    }
    if !(alpha > -1.0 && beta > -1.0) {
        return domain(format!("Jacobi exponents must exceed -1, got ({alpha}, {beta})"));
    }
    let key = (n, alpha.to_bits(), beta.to_bits());
    if let Some(rule) = cache().lock().unwrap().get(&key) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(build_gauss_jacobi(n, alpha, beta)?);
    cache().lock().unwrap().insert(key, Arc::clone(&rule));
    Ok(rule)
}

pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    gauss_jacobi(n, 0.0, 0.0).expect("Legendre parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn beta_fn(a: f64, b: f64) -> f64 {
        (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
    }

    #[test]
    fn legendre_small_rules() {
        let r = gauss_legendre(2);
        assert_relative_eq!(r.nodes[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r.weights[0], 1.0, epsilon = 1e-14);
        let r = gauss_legendre(20);
        assert_relative_eq!(r.integrate(|x| x.powi(38)), 2.0 / 39.0, epsilon = 1e-13);
    }

    #[test]
    fn jacobi_moments_are_exact() {
        // ∫ (1-t)^α (1+t)^β (1+t)^j dt = 2^{α+β+j+1} B(α+1, β+j+1)
        for &(a, b) in &[(-0.5, -0.5), (0.5, -0.5), (0.0, 0.5), (1.3, 0.2), (-0.75, 2.0)] {
            let rule = gauss_jacobi(15, a, b).unwrap();
            for j in 0..29 {
                let exact = 2f64.powf(a + b + j as f64 + 1.0) * beta_fn(a + 1.0, b + j as f64 + 1.0);
                let got = rule.integrate(|t| (1.0 + t).powi(j));
                assert_relative_eq!(got, exact, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn large_rules_stay_accurate() {
        let rule = gauss_jacobi(1500, -0.5, -0.5).unwrap();
        // Chebyshev weight: ∫ T_k(t)^2 / sqrt(1-t^2) = π/2 for k ≥ 1.
        let got = rule.integrate(|t| (1400.0 * t.acos()).cos().powi(2));
        assert_relative_eq!(got, std::f64::consts::FRAC_PI_2, epsilon = 1e-11);
        let total: f64 = rule.weights.iter().sum();
        assert_relative_eq!(total, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gauss_jacobi(0, 0.0, 0.0).is_err());
        assert!(gauss_jacobi(4, -1.0, 0.0).is_err());
    }
}
