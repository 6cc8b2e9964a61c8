//! Scalar special functions: gamma, Gegenbauer polynomials and the smooth
//! cutoff blends used by the near-best operators and the bump profiles.

use crate::error::{domain, Result};

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Gegenbauer polynomial `C_n^λ(t)` via the three-term recurrence.
pub fn gegenbauer(n: usize, lambda: f64, t: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return domain(format!("Gegenbauer index must be positive, got {lambda}"));
    }
    Ok(gegenbauer_unchecked(n, lambda, t))
}

pub(crate) fn gegenbauer_unchecked(n: usize, lambda: f64, t: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 2.0 * lambda * t;
    for k in 1..n {
        let kf = k as f64;
        let next = (2.0 * (kf + lambda) * t * cur - (kf + 2.0 * lambda - 1.0) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[k] = C_k^λ(t)` for `k < out.len()`.
pub(crate) fn gegenbauer_all(lambda: f64, t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = 2.0 * lambda * t;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = (2.0 * (kf + lambda) * t * out[k] - (kf + 2.0 * lambda - 1.0) * out[k - 1]) / (kf + 1.0);
    }
}

/// Zonal reproducing-kernel profile of degree `k` on an unweighted sphere with
/// index `lambda = (d-2)/2`; `lambda == 0` is the circle, where it is `2 cos(kθ)`.
pub(crate) fn zonal_profile_all(lambda: f64, t: f64, out: &mut [f64]) {
    if lambda == 0.0 {
        // Chebyshev: P_0 = 1, P_k = 2 T_k(t).
        let mut tm1 = 1.0;
        let mut tk = t;
        for (k, slot) in out.iter_mut().enumerate() {
            if k == 0 {
                *slot = 1.0;
                continue;
            }
            *slot = 2.0 * tk;
            let next = 2.0 * t * tk - tm1;
            tm1 = tk;
            tk = next;
        }
        return;
    }
    gegenbauer_all(lambda, t, out);
    for (k, slot) in out.iter_mut().enumerate() {
        *slot *= (k as f64 + lambda) / lambda;
    }
}

fn flat_exp(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// C^∞ step: 0 for `u <= 0`, 1 for `u >= 1`, symmetric about `u = 1/2`.
pub fn smooth_step(u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let a = flat_exp(u);
    let b = flat_exp(1.0 - u);
    a / (a + b)
}

/// The cutoff η: 1 on `[0, 1]`, 0 on `[2, ∞)`, a smooth blend in between.
pub fn eta(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        smooth_step(2.0 - t)
    }
}

/// Bump profile: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn bump_profile(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        smooth_step(2.0 * (1.0 - t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gegenbauer_base_cases() {
        assert_abs_diff_eq!(gegenbauer(1, 1.0, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gegenbauer(2, 1.0, 1.0).unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gegenbauer(3, 0.5, 1.0).unwrap(), 1.0, epsilon = 1e-14);
        assert!(gegenbauer(2, 0.0, 0.3).is_err());
    }

    #[test]
    fn gegenbauer_value_at_one_is_binomial() {
        for n in 0..12 {
            for &lam in &[0.25, 0.5, 1.5, 2.0] {
                let binom = (ln_gamma(n as f64 + 2.0 * lam) - ln_gamma(n as f64 + 1.0) - ln_gamma(2.0 * lam)).exp();
                assert_abs_diff_eq!(gegenbauer(n, lam, 1.0).unwrap(), binom, epsilon = 1e-9 * binom);
            }
        }
    }

    #[test]
    fn batch_recurrence_matches_single() {
        let mut buf = [0.0; 9];
        gegenbauer_all(0.75, -0.3, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            assert_abs_diff_eq!(*v, gegenbauer(k, 0.75, -0.3).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn circle_profile_is_twice_cosine() {
        let th: f64 = 0.7;
        let mut buf = [0.0; 6];
        zonal_profile_all(0.0, th.cos(), &mut buf);
        assert_eq!(buf[0], 1.0);
        for k in 1..6 {
            assert_abs_diff_eq!(buf[k], 2.0 * (k as f64 * th).cos(), epsilon = 1e-13);
        }
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(eta(0.5), 1.0);
        assert_eq!(eta(2.7), 0.0);
        assert_abs_diff_eq!(eta(1.5), 0.5, epsilon = 1e-15);
        let mut prev = 1.0;
        for i in 0..=200 {
            let v = eta(1.0 + i as f64 / 200.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert_eq!(bump_profile(0.25), 1.0);
        assert_eq!(bump_profile(1.0), 0.0);
        assert_abs_diff_eq!(bump_profile(0.75), 0.5, epsilon = 1e-15);
    }
}
