//! Structural invariants checked over randomized inputs.

use std::f64::consts::PI;

use dunkl_entropy::ball::{self, BallSpec, WeightedVector};
use dunkl_entropy::cubature;
use dunkl_entropy::harmonics::{self, HarmonicBasis};
use dunkl_entropy::pipeline::{self, PipelineConfig};
use dunkl_entropy::sphere::{self, UnitVector};
use dunkl_entropy::weight::{DunklWeight, RootSystem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn apply(g: &[[f64; 3]; 3], x: &UnitVector) -> UnitVector {
    let d = x.dim();
    let c = x.coords();
    let y: Vec<f64> = (0..d).map(|i| (0..d).map(|j| g[i][j] * c[j]).sum()).collect();
    UnitVector::normalize(&y).unwrap()
}

fn point(d: usize) -> impl Strategy<Value = UnitVector> {
    prop::collection::vec(-1.0f64..1.0, d)
        .prop_filter("away from the origin", |v| v.iter().map(|a| a * a).sum::<f64>() > 1e-3)
        .prop_map(|v| UnitVector::normalize(&v).unwrap())
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(4.0), Just(f64::INFINITY)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn weight_is_group_invariant(k1 in 0.0f64..2.0, k2 in 0.0f64..2.0, k3 in 0.0f64..2.0, x in point(3)) {
        let w = DunklWeight::z2d(&[k1, k2, k3]).unwrap();
        let h = w.eval(&x);
        for g in w.roots().group_elements().unwrap() {
            prop_assert!((w.eval(&apply(&g, &x)) - h).abs() <= 1e-12 * h.max(1e-300));
        }
    }

    #[test]
    fn dihedral_weight_is_group_invariant(x in point(2), k in 0.1f64..1.5) {
        let roots: Vec<Vec<f64>> = (0..3).map(|j| {
            let t = PI * j as f64 / 3.0;
            vec![-t.sin(), t.cos()]
        }).collect();
        let w = DunklWeight::new(RootSystem::new(2, &roots, &[k, k, k]).unwrap()).unwrap();
        let h = w.eval(&x);
        let group = w.roots().group_elements().unwrap();
        prop_assert_eq!(group.len(), 6);
        for g in group {
            prop_assert!((w.eval(&apply(&g, &x)) - h).abs() <= 1e-10 * h.max(1e-300));
        }
    }

    #[test]
    fn isometry_preserves_both_norms(
        values in prop::collection::vec(-10.0f64..10.0, 1..24),
        seed in any::<u64>(),
        p in exponent(),
        q in exponent(),
    ) {
        prop_assume!(p <= q);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<f64> = values.iter().map(|_| rand::Rng::random_range(&mut rng, 0.1..10.0)).collect();
        let x = WeightedVector::new(values, weights).unwrap();
        let u = ball::isometry_u(&x, p, q).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
        prop_assert!(rel(ball::weighted_norm(&u, p).unwrap(), ball::weighted_norm(&x, p).unwrap()));
        let flat_u = WeightedVector::uniform(u.values.clone());
        let qx = ball::weighted_norm(&x, q).unwrap();
        prop_assert!(rel(ball::weighted_norm(&flat_u, q).unwrap(), qx));
    }

    #[test]
    fn sorted_weights_obey_the_tail_bound(raw in prop::collection::vec(0.05f64..20.0, 1..32), gamma in 0.2f64..3.0) {
        let m = raw.len() as f64;
        let s: f64 = raw.iter().map(|v| v.powf(-gamma)).sum();
        // rescale to the edge of the hypothesis Σ w^{−γ} ≤ m
        let c = (s / (m * (1.0 - 1e-9))).powf(1.0 / gamma);
        let w: Vec<f64> = raw.iter().map(|v| v * c).collect();
        let rep = ball::sorted_weight_bound(&w, gamma).unwrap();
        prop_assert!(rep.hypothesis_holds);
        prop_assert_eq!(rep.bound_holds, Some(true));
        prop_assert!(rep.worst_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn dyadic_blocks_partition_the_coordinates(m in 1usize..300, budget in 1usize..64) {
        let plan = ball::dyadic_reduce(&BallSpec::uniform(m, 1.0, 2.0).unwrap(), 1.0, budget).unwrap();
        let mut next = 0;
        for b in &plan.blocks {
            prop_assert_eq!(b.start, next);
            prop_assert!(b.size >= 1);
            next += b.size;
        }
        prop_assert_eq!(next, m);
    }

    #[test]
    fn schuett_profile_decreases_within_each_regime(m in 1usize..64, pq in 0usize..3) {
        // with unit constants the regimes need not join monotonically
        let (p, q) = [(1.0, 2.0), (2.0, f64::INFINITY), (1.0, f64::INFINITY)][pq];
        let mid: Vec<f64> = (1..=2 * m).filter(|&k| k as f64 >= (2.0 * m as f64).log2())
            .map(|k| ball::schuett_value(k, m, p, q).unwrap()).collect();
        let tail: Vec<f64> = (2 * m + 1..=4 * m + 8).map(|k| ball::schuett_value(k, m, p, q).unwrap()).collect();
        for vals in [&mid, &tail] {
            prop_assert!(vals.windows(2).all(|v| v[1] <= v[0] * (1.0 + 1e-12)));
            prop_assert!(vals.iter().all(|v| *v > 0.0 && *v <= 1.0));
        }
    }

    #[test]
    fn budgets_are_feasible(n in 2u64..1_000_000, r in 0.6f64..4.0, pq in 0usize..3) {
        let (p, q) = [(2.0, 2.0), (1.0, 2.0), (2.0, f64::INFINITY)][pq];
        let cfg = PipelineConfig::new(r, p, q, DunklWeight::unweighted(2).unwrap());
        // small r violates the allocation condition and is rejected up front
        prop_assume!(cfg.is_ok());
        let cfg = cfg.unwrap();
        let sched = pipeline::allocate(n, &cfg).unwrap();
        prop_assert!(sched.verify().is_ok());
        prop_assert!(sched.total() <= n);
    }

    #[test]
    fn block_sizes_sum_to_the_level_count(s in 1usize..20, extra in 0.0f64..1e6) {
        let count = (2f64.powi(s as i32 + 1) + extra).floor();
        let sizes = pipeline::block_sizes(count, s, 2);
        prop_assert_eq!(sizes.iter().sum::<f64>(), count);
        prop_assert!(sizes.iter().all(|&b| b >= 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn separated_sets_are_separated_and_covering(eps in 0.08f64..1.0, seed in any::<u64>(), d in 2usize..4) {
        let set = sphere::build_maximal_separated_set(d, eps, seed).unwrap();
        prop_assert!(set.separation >= eps * (1.0 - 1e-12));
        prop_assert!(set.covering_radius <= eps * (1.0 + 1e-9));
        prop_assert!(sphere::verify_separated_set(&set).is_ok());
    }

    #[test]
    fn ball_brackets_are_ordered(m in 1usize..12, k in 1usize..24, pq in 0usize..3, seed in any::<u64>()) {
        let (p, q) = [(1.0, 2.0), (2.0, f64::INFINITY), (1.0, f64::INFINITY)][pq];
        let spec = BallSpec::uniform(m, p, q).unwrap();
        let b = ball::entropy_bracket(&spec, k, seed).unwrap();
        prop_assert!(0.0 <= b.lower && b.lower <= b.upper * (1.0 + 1e-12));
        prop_assert!(b.upper <= ball::trivial_radius(m, p, q) * (1.0 + 1e-12));
    }

    #[test]
    fn cubature_weights_are_positive_and_exact(k1 in 0.0f64..1.5, k2 in 0.0f64..1.5, degree in 2usize..12, seed in any::<u64>()) {
        let w = DunklWeight::z2d(&[k1, k2]).unwrap();
        let rule = cubature::build_rule(&w, degree, cubature::DEFAULT_DELTA, seed, 1e-10).unwrap();
        prop_assert!(rule.weights.iter().all(|&l| l > 0.0));
        prop_assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(cubature::exactness_check(&rule, &w, degree, 20, seed).unwrap() <= 1e-8);
    }

    #[test]
    fn projections_are_orthogonal_idempotent_and_parseval(k1 in 0.0f64..1.5, k2 in 0.0f64..1.5, seed in any::<u64>()) {
        let w = DunklWeight::z2d(&[k1, k2]).unwrap();
        let n = 6;
        let basis = HarmonicBasis::get(&w, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = harmonics::random_polynomial(&basis, n, &mut rng);
        let sampler = harmonics::NormSampler::new(&w, 2 * n + 2);
        let total = sampler.norm(|x| f.eval(x), 2.0);
        let blocks: Vec<_> = (0..=n).map(|k| f.block(k)).collect();
        let parseval: f64 = blocks.iter().map(|b| sampler.norm(|x| b.eval(x), 2.0).powi(2)).sum::<f64>().sqrt();
        prop_assert!((parseval - total).abs() <= 1e-9 * total);
        for (k, b) in blocks.iter().enumerate() {
            let again = b.block(k);
            let diff = sampler.norm(|x| again.eval(x) - b.eval(x), 2.0);
            prop_assert!(diff <= 1e-10 * total);
            if k < n {
                let ip = sampler.inner(|x| b.eval(x), |x| blocks[k + 1].eval(x));
                prop_assert!(ip.abs() <= 1e-9 * total * total);
            }
        }
    }
}

#[test]
fn upper_bound_is_non_increasing_along_the_default_grid() {
    for r in [1.0, 2.0, 3.0] {
        for kappa in [[0.0, 0.0], [0.5, 0.5]] {
            let cfg = PipelineConfig::new(r, 2.0, 2.0, DunklWeight::z2d(&kappa).unwrap()).unwrap();
            let vals: Vec<f64> =
                pipeline::default_n_grid().iter().map(|&n| pipeline::upper_bound_value(n as u64, &cfg).unwrap().value).collect();
            assert!(vals.windows(2).all(|v| v[1] <= v[0] * (1.0 + 1e-12)), "r={r} κ={kappa:?}: {vals:?}");
        }
    }
}

#[test]
fn bump_systems_verify_their_geometry() {
    let cfg = PipelineConfig::new(3.0, 1.0, 2.0, DunklWeight::z2d(&[1.0, 1.0]).unwrap()).unwrap();
    for l in [4, 8, 12] {
        let sys = pipeline::build_bump_system(l, &cfg, 3).unwrap();
        sys.verify().unwrap();
        assert!(sphere::min_pairwise_distance(&sys.centers) > 2.0 * sys.radius());
    }
}

#[test]
fn unweighted_d3_kernel_matches_legendre() {
    let w = DunklWeight::unweighted(3).unwrap();
    let x = UnitVector::normalize(&[0.3, -0.5, 0.8]).unwrap();
    let y = UnitVector::normalize(&[-0.7, 0.1, 0.4]).unwrap();
    let t = x.dot(&y);
    let (mut p0, mut p1) = (1.0, t);
    for n in 1..10usize {
        let spec = harmonics::KernelSpec { weight: w.clone(), degree: n, nodes: None };
        let got = harmonics::kernel_P(&spec, &x, &y).unwrap();
        assert!((got - (2 * n + 1) as f64 * p1).abs() <= 1e-9, "n={n}");
        let p2 = ((2 * n + 1) as f64 * t * p1 - n as f64 * p0) / (n + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
}
