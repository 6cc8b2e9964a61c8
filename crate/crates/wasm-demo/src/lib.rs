//! WebAssembly bindings for the static demo in `www/`. Every export returns a
//! JSON string; the plain functions are callable (and tested) natively.

use std::f64::consts::PI;

use dunkl_entropy::ball::{self, BallSpec};
use dunkl_entropy::cubature;
use dunkl_entropy::harmonics::{self, KernelSpec};
use dunkl_entropy::sphere::UnitVector;
use dunkl_entropy::weight::DunklWeight;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest degree offered by the page; keeps a solve under a second.
pub const MAX_DEGREE: usize = 40;
/// Largest kernel degree offered by the page.
pub const MAX_KERNEL_DEGREE: usize = 60;

fn z2(k1: f64, k2: f64) -> Result<DunklWeight, String> {
    DunklWeight::z2d(&[k1, k2]).map_err(|e| e.to_string())
}

fn exponent(p: f64) -> f64 {
    // the page encodes ∞ as any non-positive value
    if p <= 0.0 { f64::INFINITY } else { p }
}

/// Positive cubature rule on the circle for `h_κ² = |x₁|^{2κ₁}|x₂|^{2κ₂}`.
pub fn cubature_json(k1: f64, k2: f64, degree: usize, seed: u64) -> Result<String, String> {
    if degree == 0 || degree > MAX_DEGREE {
        return Err(format!("degree must lie in 1..={MAX_DEGREE}"));
    }
    let w = z2(k1, k2)?;
    let rule = cubature::build_rule(&w, degree, cubature::DEFAULT_DELTA, seed, 1e-10).map_err(|e| e.to_string())?;
    let angles: Vec<f64> = rule.nodes.points.iter().map(|p| p.angle()).collect();
    Ok(json!({
        "angles": angles,
        "weights": rule.weights,
        "residual": rule.residual,
        "separation": rule.nodes.separation,
        "weight_bracket": rule.weight_model_bracket,
    })
    .to_string())
}

/// `θ ↦ P_n(x(θ₀), x(θ))` on `samples` equispaced angles.
pub fn kernel_json(k1: f64, k2: f64, n: usize, theta0: f64, samples: usize) -> Result<String, String> {
    if n > MAX_KERNEL_DEGREE {
        return Err(format!("degree must be at most {MAX_KERNEL_DEGREE}"));
    }
    let samples = samples.clamp(16, 2048);
    let w = z2(k1, k2)?;
    let spec = KernelSpec { weight: w, degree: n, nodes: None };
    let x = UnitVector::from_angle(theta0);
    let mut theta = Vec::with_capacity(samples);
    let mut value = Vec::with_capacity(samples);
    for j in 0..samples {
        let t = 2.0 * PI * j as f64 / samples as f64;
        let v = harmonics::kernel_P(&spec, &x, &UnitVector::from_angle(t)).map_err(|e| e.to_string())?;
        theta.push(t);
        value.push(v);
    }
    Ok(json!({ "theta": theta, "value": value }).to_string())
}

/// Entropy brackets of `Bℓ_p^m` in `ℓ_q^m` for `k = 1..=k_max`, beside the
/// three-regime profile.
pub fn ball_entropy_json(m: usize, p: f64, q: f64, k_max: usize, seed: u64) -> Result<String, String> {
    let (p, q) = (exponent(p), exponent(q));
    if !(1..=64).contains(&m) || !(1..=48).contains(&k_max) {
        return Err("need 1 ≤ m ≤ 64 and 1 ≤ k ≤ 48".into());
    }
    let spec = BallSpec::uniform(m, p, q).map_err(|e| e.to_string())?;
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let b = ball::entropy_bracket(&spec, k, seed).map_err(|e| e.to_string())?;
        let profile = ball::schuett_value(k, m, p, q).map_err(|e| e.to_string())?;
        rows.push(json!({ "k": k, "lower": b.lower, "upper": b.upper, "profile": profile }));
    }
    Ok(json!({ "rows": rows }).to_string())
}

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn cubature(k1: f64, k2: f64, degree: usize, seed: u64) -> Result<String, JsError> {
    js(cubature_json(k1, k2, degree, seed))
}

#[wasm_bindgen]
pub fn kernel(k1: f64, k2: f64, n: usize, theta0: f64, samples: usize) -> Result<String, JsError> {
    js(kernel_json(k1, k2, n, theta0, samples))
}

#[wasm_bindgen]
pub fn ball_entropy(m: usize, p: f64, q: f64, k_max: usize, seed: u64) -> Result<String, JsError> {
    js(ball_entropy_json(m, p, q, k_max, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn cubature_weights_sum_to_one() {
        let v = parse(&cubature_json(0.5, 1.0, 10, 1).unwrap());
        let total: f64 = v["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert_eq!(v["angles"].as_array().unwrap().len(), v["weights"].as_array().unwrap().len());
    }

    #[test]
    fn unweighted_kernel_is_a_dirichlet_profile() {
        // κ = 0, d = 2: P_n(x, y) = 2 cos(nθ)
        let v = parse(&kernel_json(0.0, 0.0, 5, 0.0, 64).unwrap());
        for (t, f) in v["theta"].as_array().unwrap().iter().zip(v["value"].as_array().unwrap()) {
            let (t, f) = (t.as_f64().unwrap(), f.as_f64().unwrap());
            assert!((f - 2.0 * (5.0 * t).cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn brackets_are_ordered() {
        let v = parse(&ball_entropy_json(4, 1.0, 0.0, 12, 3).unwrap());
        for row in v["rows"].as_array().unwrap() {
            assert!(row["lower"].as_f64().unwrap() <= row["upper"].as_f64().unwrap());
        }
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        assert!(cubature_json(0.5, 0.5, 0, 1).is_err());
        assert!(cubature_json(-1.0, 0.5, 8, 1).is_err());
        assert!(ball_entropy_json(0, 1.0, 2.0, 4, 1).is_err());
    }
}
