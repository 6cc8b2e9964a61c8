use std::fmt::Write as _;

use dunkl_entropy::ball::{self, BallSpec};
use dunkl_entropy::cubature::{self, CubatureRule};
use dunkl_entropy::harmonics::{self, HarmonicBasis, HarmonicExpansion, NormSampler};
use dunkl_entropy::pipeline::{self, PipelineConfig};
use dunkl_entropy::sphere::{self, Cap, UnitVector};
use dunkl_entropy::weight::{self, DunklWeight};
use dunkl_entropy::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, Exponent, Resolved, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// What a subcommand produced before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub result: Value,
    pub checks: Vec<Check>,
    pub csv: String,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn execute(r: &Resolved) -> Result<Outcome> {
    let t = &r.raw.tolerance;
    match r.command {
        Command::Nodes => nodes(r, t),
        Command::Cubature => cubature(r, t),
        Command::Mz => mz(r, t),
        Command::Kernel => kernel(r, t),
        Command::Lemma31 => lemma31(r, t),
        Command::BallEntropy => ball_entropy(r),
        Command::SobolevUpper => sobolev_upper(r.pipeline.as_ref().expect("resolved")),
        Command::SobolevLower => sobolev_lower(r, t),
        Command::Rate => rate(r, t),
    }
}

fn within(v: f64, c: f64) -> bool {
    v >= 1.0 / c && v <= c
}

fn coords_csv(x: &UnitVector) -> String {
    x.coords().iter().map(|c| format!("{c:.17e}")).collect::<Vec<_>>().join(",")
}

fn coord_header(d: usize) -> String {
    ["x", "y", "z"][..d].join(",")
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Result<UnitVector> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let n2: f64 = v.iter().map(|a| a * a).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            return UnitVector::normalize(&v);
        }
    }
}

fn nodes(r: &Resolved, t: &Tolerances) -> Result<Outcome> {
    let p = r.raw.nodes.as_ref().expect("resolved");
    let d = r.weight.dim();
    let eps = p.eps.unwrap_or_else(|| p.delta / p.n.expect("resolved") as f64);
    let set = sphere::build_maximal_separated_set(d, eps, r.seed)?;
    let min_dist = sphere::min_pairwise_distance(&set.points);
    let mut checks = vec![
        Check::new("separation", min_dist >= eps * (1.0 - 1e-12), format!("min pairwise distance {min_dist:.6e} vs eps {eps:.6e}")),
        Check::new("covering", set.covering_radius <= eps * (1.0 + 1e-9), format!("covering radius {:.6e}", set.covering_radius)),
    ];
    let mut cap_model = Value::Null;
    if p.cap_samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(r.seed ^ 0xc0ff_ee00);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut samples = Vec::with_capacity(p.cap_samples);
        for _ in 0..p.cap_samples {
            let x = random_unit(d, &mut rng)?;
            let n = rng.random_range(p.cap_n_range[0]..=p.cap_n_range[1]);
            let measured = weight::cap_measure(&r.weight, &Cap::new(x, 1.0 / n as f64)?, 1);
            let model = weight::cap_measure_model(&r.weight, &x, n)?;
            let ratio = measured / model;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            samples.push(json!({ "x": x, "n": n, "ratio": ratio }));
        }
        checks.push(Check::new(
            "cap_model_bracket",
            within(lo, t.cap_model) && within(hi, t.cap_model),
            format!("ratios in [{lo:.4}, {hi:.4}], bracket [1/{0}, {0}]", t.cap_model),
        ));
        cap_model = json!({ "min": lo, "max": hi, "samples": samples });
    }
    let mut csv = format!("index,{}\n", coord_header(d));
    for (i, x) in set.points.iter().enumerate() {
        let _ = writeln!(csv, "{i},{}", coords_csv(x));
    }
    let result = json!({
        "d": d,
        "separation": eps,
        "count": set.len(),
        "min_pairwise_distance": min_dist,
        "covering_radius": set.covering_radius,
        "points": set.points,
        "cap_model": cap_model,
    });
    Ok(Outcome { result, checks, csv })
}

fn rule_checks(rule: &CubatureRule, t: &Tolerances, label: &str) -> Vec<Check> {
    let [lo, hi] = rule.weight_model_bracket;
    vec![
        Check::new(format!("{label}residual"), rule.residual <= t.residual, format!("moment residual {:.3e}", rule.residual)),
        Check::new(format!("{label}positive_weights"), rule.weights.iter().all(|&l| l > 0.0), format!("{} nodes", rule.len())),
        Check::new(
            format!("{label}weight_comparability"),
            within(lo, t.weight_bracket) && within(hi, t.weight_bracket),
            format!("λ/w(cap) in [{lo:.4}, {hi:.4}], bracket [1/{0}, {0}]", t.weight_bracket),
        ),
    ]
}

fn cubature(r: &Resolved, t: &Tolerances) -> Result<Outcome> {
    let p = r.raw.cubature.as_ref().expect("resolved");
    let rule = cubature::build_rule(&r.weight, p.degree, p.delta, r.seed, t.residual)?;
    let exactness = cubature::exactness_check(&rule, &r.weight, p.degree, p.exactness_trials, r.seed.wrapping_add(1))?;
    let mut checks = rule_checks(&rule, t, "");
    checks.push(Check::new(
        "exactness",
        exactness <= t.exactness,
        format!("relative error {exactness:.3e} over {} random polynomials", p.exactness_trials),
    ));
    let d = r.weight.dim();
    let mut csv = format!("index,{},weight\n", coord_header(d));
    for (i, (x, l)) in rule.nodes.points.iter().zip(&rule.weights).enumerate() {
        let _ = writeln!(csv, "{i},{},{l:.17e}", coords_csv(x));
    }
    let result = json!({ "rule": rule, "exactness_error": exactness, "node_count": rule.len() });
    Ok(Outcome { result, checks, csv })
}

fn mz(r: &Resolved, t: &Tolerances) -> Result<Outcome> {
    let p = r.raw.mz.as_ref().expect("resolved");
    let rule = cubature::build_rule(&r.weight, 3 * p.n, p.delta, r.seed, t.residual)?;
    let mut checks = rule_checks(&rule, t, "rule_");
    let mut rows = Vec::new();
    let mut csv = String::from("p,c_low,c_high\n");
    for (i, e) in p.ps.iter().enumerate() {
        let b = cubature::mz_check(&rule, &r.weight, e.0, p.n, p.trials, r.seed.wrapping_add(i as u64 + 1))?;
        let (ok, bracket) = if e.0 == 2.0 {
            ((b.c_low - 1.0).abs() <= t.mz_l2 && (b.c_high - 1.0).abs() <= t.mz_l2, format!("[1 − {0:e}, 1 + {0:e}]", t.mz_l2))
        } else {
            (b.within(t.mz_c_star), format!("[1/{0}, {0}]", t.mz_c_star))
        };
        checks.push(Check::new(format!("mz_p{e}"), ok, format!("ratios in [{:.6}, {:.6}], bracket {bracket}", b.c_low, b.c_high)));
        let _ = writeln!(csv, "{e},{:.17e},{:.17e}", b.c_low, b.c_high);
        rows.push(json!({ "p": e, "n": b.n, "c_low": b.c_low, "c_high": b.c_high, "trials": b.trials }));
    }
    let result = json!({ "n": p.n, "rule_degree": rule.exact_degree, "node_count": rule.len(), "brackets": rows });
    Ok(Outcome { result, checks, csv })
}

fn default_x(d: usize) -> Result<UnitVector> {
    match d {
        2 => Ok(UnitVector::from_angle(0.37)),
        _ => UnitVector::normalize(&[0.31, 0.52, 0.79]),
    }
}

fn table_points(d: usize, count: usize) -> Result<Vec<UnitVector>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|j| {
            let u = (j as f64 + 0.5) / count as f64;
            if d == 2 {
                Ok(UnitVector::from_angle(2.0 * std::f64::consts::PI * u + 0.1))
            } else {
                let z = 1.0 - 2.0 * u;
                let s = (1.0 - z * z).sqrt();
                let a = golden * j as f64;
                UnitVector::normalize(&[s * a.cos(), s * a.sin(), z])
            }
        })
        .collect()
}

/// Points whose coordinates all stay away from the root hyperplanes.
fn interior_points(w: &DunklWeight, count: usize, seed: u64) -> Result<Vec<UnitVector>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = random_unit(w.dim(), &mut rng)?;
        if w.roots().roots().iter().all(|v| x.dot(v).abs() > 0.2) {
            out.push(x);
        }
    }
    Ok(out)
}

fn sup_on(points: &[UnitVector], f: impl Fn(&UnitVector) -> f64) -> f64 {
    points.iter().fold(0.0f64, |m, x| m.max(f(x).abs()))
}

/// Sup-norm errors of the operator identities over `trials` random `f ∈ Π_n`.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorReport {
    pub n: usize,
    pub eta_reproduction: f64,
    pub projection_idempotence: f64,
    pub cross_degree_orthogonality: f64,
    pub eigenvalue_relative: f64,
}

pub fn operator_checks(w: &DunklWeight, n: usize, trials: usize, seed: u64) -> Result<OperatorReport> {
    let basis = HarmonicBasis::get(w, 2 * n)?;
    let sampler = NormSampler::new(w, 4 * n + 16);
    let probes = table_points(w.dim(), 400)?;
    let interior = interior_points(w, 24, seed ^ 0x5eed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = w.lambda_kappa;
    let mut rep = OperatorReport { n, eta_reproduction: 0.0, projection_idempotence: 0.0, cross_degree_orthogonality: 0.0, eigenvalue_relative: 0.0 };
    for _ in 0..trials {
        let f = harmonics::random_polynomial(&basis, n, &mut rng);
        let scale = sup_on(&probes, |x| f.eval(x));
        let g = harmonics::eta_n_apply(|x| f.eval(x), w, n)?;
        rep.eta_reproduction = rep.eta_reproduction.max(sup_on(&probes, |x| g.eval(x) - f.eval(x)) / scale);
        let blocks: Vec<HarmonicExpansion> = (0..=n).map(|k| f.block(k)).collect();
        for (k, b) in blocks.iter().enumerate() {
            let bs = sup_on(&probes, |x| b.eval(x));
            if bs < 1e-12 {
                continue;
            }
            let again = harmonics::project(|x| b.eval(x), w, k, harmonics::default_rule_degree(k))?;
            rep.projection_idempotence = rep.projection_idempotence.max(sup_on(&probes, |x| again.eval(x) - b.eval(x)) / bs);
            for c in blocks.iter().skip(k + 1) {
                let (nb, nc) = (b.norm2(), c.norm2());
                if nb > 0.0 && nc > 0.0 {
                    let ip = sampler.inner(|x| b.eval(x), |x| c.eval(x)).abs() / (nb * nc);
                    rep.cross_degree_orthogonality = rep.cross_degree_orthogonality.max(ip);
                }
            }
            if k > 0 {
                let mu = (k as f64) * (k as f64 + 2.0 * lambda);
                let mut err: f64 = 0.0;
                for x in &interior {
                    let lap = harmonics::dunkl_laplacian_fd(w, |y| b.eval(y), x, 1e-3);
                    err = err.max((lap + mu * b.eval(x)).abs());
                }
                rep.eigenvalue_relative = rep.eigenvalue_relative.max(err / (mu * bs));
            }
        }
    }
    Ok(rep)
}

fn stable(samples: &[pipeline::ConstantSample], drift: f64) -> (bool, f64) {
    let finite = samples.iter().all(|s| s.constant.is_finite() && s.constant > 0.0);
    let worst = samples.windows(2).map(|p| (p[1].constant / p[0].constant - 1.0).abs()).fold(0.0f64, f64::max);
    (finite && worst <= drift, worst)
}

fn kernel(r: &Resolved, t: &Tolerances) -> Result<Outcome> {
    let p = r.raw.kernel.as_ref().expect("resolved");
    let w = &r.weight;
    let d = w.dim();
    let x = match &p.x {
        Some(c) => UnitVector::normalize(c)?,
        None => default_x(d)?,
    };
    let spec = harmonics::KernelSpec { weight: w.clone(), degree: p.degree, nodes: None };
    let mut csv = format!("index,{},t,P_n,L_n\n", coord_header(d));
    let mut rows = Vec::new();
    let mut asym: f64 = 0.0;
    for (j, y) in table_points(d, p.samples)?.iter().enumerate() {
        let pn = harmonics::kernel_P(&spec, &x, y)?;
        let ln = harmonics::kernel_L(w, p.degree, &x, y)?;
        asym = asym.max((pn - harmonics::kernel_P(&spec, y, &x)?).abs() / pn.abs().max(1.0));
        let _ = writeln!(csv, "{j},{},{:.17e},{pn:.17e},{ln:.17e}", coords_csv(y), x.dot(y));
        rows.push(json!({ "y": y, "t": x.dot(y), "P_n": pn, "L_n": ln }));
    }
    let mut checks = vec![Check::new("kernel_symmetry", asym <= t.kernel, format!("max relative asymmetry {asym:.3e}"))];
    let mut operators = Value::Null;
    if p.operator_trials > 0 {
        let rep = operator_checks(w, p.degree, p.operator_trials, r.seed)?;
        for (name, v) in [
            ("eta_reproduction", rep.eta_reproduction),
            ("projection_idempotence", rep.projection_idempotence),
            ("cross_degree_orthogonality", rep.cross_degree_orthogonality),
            ("eigenvalue_scaling", rep.eigenvalue_relative),
        ] {
            checks.push(Check::new(name, v <= t.kernel, format!("{v:.3e} against {:e}", t.kernel)));
        }
        operators = serde_json::to_value(&rep).expect("plain data");
    }
    let mut constants = Value::Null;
    if let Some(c) = &p.constants {
        let jackson = pipeline::jackson_constants(w, c.r, c.p.0, &c.ns, &c.corpus, r.seed)?;
        let decay = pipeline::block_decay_constants(w, c.r, c.p.0, &c.levels, &c.corpus, r.seed)?;
        let (jo, jw) = stable(&jackson, t.constant_drift);
        let (bo, bw) = stable(&decay, t.constant_drift);
        checks.push(Check::new("jackson_stability", jo, format!("largest doubling drift {jw:.3}")));
        checks.push(Check::new("block_decay_stability", bo, format!("largest doubling drift {bw:.3}")));
        constants = json!({ "r": c.r, "p": c.p, "jackson": jackson, "block_decay": decay });
    }
    let result = json!({ "degree": p.degree, "x": x, "table": rows, "operators": operators, "constants": constants });
    Ok(Outcome { result, checks, csv })
}

/// `max / min` and whether the last three entries never increase.
pub fn spread_and_tail(values: &[f64]) -> (f64, bool) {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let tail = &values[values.len().saturating_sub(3)..];
    (max / min, tail.windows(2).all(|p| p[1] <= p[0]))
}

fn lemma31(r: &Resolved, t: &Tolerances) -> Result<Outcome> {
    let p = r.raw.lemma31.as_ref().expect("resolved");
    let w = &r.weight;
    let betas = p.betas.clone().unwrap_or_else(|| cubature::lemma31_beta_grid(w));
    let rules = p.ns.iter().map(|&n| cubature::build_rule(w, n, p.delta, r.seed, t.residual)).collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    let mut csv = String::from("beta,n,ratio\n");
    let mut sweeps = Vec::new();
    for &beta in &betas {
        let ratios = rules.iter().zip(&p.ns).map(|(rule, &n)| cubature::lemma31_ratio(rule, w, beta, n)).collect::<Result<Vec<_>>>()?;
        for (n, v) in p.ns.iter().zip(&ratios) {
            let _ = writeln!(csv, "{beta},{n},{v:.17e}");
        }
        let (spread, tail) = spread_and_tail(&ratios);
        checks.push(Check::new(format!("bounded_beta_{beta}"), spread <= t.lemma31_spread, format!("max/min {spread:.4}")));
        checks.push(Check::new(format!("non_increasing_beta_{beta}"), tail, format!("last three {:?}", &ratios[ratios.len().saturating_sub(3)..])));
        sweeps.push(json!({ "beta": beta, "ratios": ratios, "spread": spread, "tail_non_increasing": tail }));
    }
    let nodes: Vec<usize> = rules.iter().map(|r| r.len()).collect();
    let result = json!({ "ns": p.ns, "node_counts": nodes, "sweeps": sweeps });
    Ok(Outcome { result, checks, csv })
}

fn ball_entropy(r: &Resolved) -> Result<Outcome> {
    let p = r.raw.ball_entropy.as_ref().expect("resolved");
    let spec = BallSpec::uniform(p.m, p.p.0, p.q.0)?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut csv = String::from("k,lower,upper,schuett,lower_method,upper_method\n");
    let (mut c_lo, mut c_hi) = (0.0f64, f64::INFINITY);
    let mut ordered = true;
    for &k in &p.ks {
        let b = ball::entropy_bracket(&spec, k, r.seed)?;
        let s = ball::schuett_value(k, p.m, p.p.0, p.q.0)?;
        ordered &= b.lower <= b.upper;
        c_lo = c_lo.max(b.lower / s);
        c_hi = c_hi.min(b.upper / s);
        let _ = writeln!(csv, "{k},{:.17e},{:.17e},{s:.17e},{:?},{:?}", b.lower, b.upper, b.lower_method, b.upper_method);
        rows.push(json!({
            "k": k,
            "lower": b.lower,
            "upper": b.upper,
            "schuett": s,
            "lower_method": b.lower_method,
            "upper_method": b.upper_method,
            "cover_centers": b.cover.center_count,
            "packing_size": b.packing.as_ref().map(|pk| pk.size),
        }));
    }
    checks.push(Check::new("bracket_order", ordered, "lower ≤ upper for every k"));
    checks.push(Check::new("schuett_rescaling", c_lo <= c_hi, format!("constants fitting every bracket: [{c_lo:.4}, {c_hi:.4}]")));
    let mut weighted = Value::Null;
    if let (Some(wts), Some(gamma)) = (&p.weights, p.gamma) {
        let report = ball::sorted_weight_bound(wts, gamma)?;
        checks.push(Check::new(
            "sorted_weight_bound",
            !report.hypothesis_holds || report.bound_holds != Some(false),
            format!("hypothesis {}, worst ratio {:.4}", report.hypothesis_holds, report.worst_ratio),
        ));
        let plan = match p.budget {
            Some(k) => {
                let wspec = BallSpec { m: p.m, p: p.p.0, q: p.q.0, weights: Some(wts.clone()) };
                Some(ball::dyadic_reduce(&wspec, gamma, k)?)
            }
            None => None,
        };
        weighted = json!({ "sorted_weight": report, "reduction": plan });
    }
    let result = json!({
        "m": p.m,
        "p": p.p,
        "q": p.q,
        "brackets": rows,
        "schuett_constant_interval": [c_lo, c_hi],
        "weighted": weighted,
    });
    Ok(Outcome { result, checks, csv })
}

fn monotone_down(values: &[f64]) -> bool {
    values.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12))
}

fn sobolev_upper(cfg: &PipelineConfig) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut values = Vec::new();
    let mut csv = String::from("n,upper,j,j0,allocated\n");
    let mut schedules_ok = true;
    for &n in &cfg.n_grid {
        let sched = pipeline::allocate(n as u64, cfg)?;
        schedules_ok &= sched.verify().is_ok();
        let rep = pipeline::upper_bound_value(n as u64, cfg)?;
        let _ = writeln!(csv, "{n},{:.17e},{},{},{}", rep.value, rep.j, rep.j0, sched.total());
        values.push(rep.value);
        rows.push(json!({
            "report": rep,
            "c_alloc": sched.c_alloc,
            "degenerate": sched.degenerate,
            "allocated": sched.total(),
            "levels": sched.levels.len(),
        }));
    }
    let checks = vec![
        Check::new("schedule_budgets", schedules_ok, "Σ n_s ≤ n, Σ_k n_{s,k} ≤ n_s, blocks partition #Λ_s"),
        Check::new("upper_non_increasing", monotone_down(&values), "upper bound does not grow along the grid"),
    ];
    let result = json!({ "params": pipeline_json(cfg), "grid": rows });
    Ok(Outcome { result, checks, csv })
}

fn pipeline_json(cfg: &PipelineConfig) -> Value {
    json!({
        "d": cfg.d(),
        "kappa": cfg.weight.kappa(),
        "r": cfg.r,
        "p": Exponent(cfg.p),
        "q": Exponent(cfg.q),
        "rho": cfg.rho,
        "beta": cfg.beta,
        "lambda_factor": cfg.lambda_factor,
        "theta": cfg.theta(),
        "target_exponent": -cfg.r / (cfg.d() - 1) as f64,
    })
}

fn sobolev_lower(r: &Resolved, t: &Tolerances) -> Result<Outcome> {
    let cfg = r.pipeline.as_ref().expect("resolved");
    let s = r.raw.sobolev.as_ref().expect("resolved");
    let n_max = s.lower_ns.iter().copied().max().unwrap_or(1);
    let sys = pipeline::bump_system_for(n_max, cfg, r.seed)?;
    let geometry = sys.verify();
    let mut checks = vec![Check::new(
        "bump_geometry",
        geometry.is_ok(),
        match &geometry {
            Ok(()) => format!("{} bumps at scale l = {}", sys.len(), sys.l),
            Err(e) => e.to_string(),
        },
    )];
    let norms = pipeline::verify_bump_norms(&sys, cfg, cfg.p, s.norm_trials, r.seed)?;
    checks.push(Check::new(
        "bump_norm_bracket",
        within(norms.ratio_min, t.bump_norm) && within(norms.ratio_max, t.bump_norm),
        format!("ratios in [{:.4}, {:.4}], bracket [1/{2}, {2}]", norms.ratio_min, norms.ratio_max, t.bump_norm),
    ));
    let leakage = pipeline::orbit_leakage(&sys, &cfg.weight, 0, None)?;
    checks.push(Check::new("orbit_leakage", leakage.relative <= t.leakage, format!("relative leakage {:.3e} at degree {}", leakage.relative, leakage.degree)));
    let mut rows = Vec::new();
    let mut csv = String::from("n,lower,upper,ratio\n");
    let mut constant: f64 = 0.0;
    for &n in &s.lower_ns {
        let low = pipeline::lower_bound_value(n, cfg, s.embedding_trials, r.seed)?;
        let up = pipeline::upper_bound_value(n as u64, cfg)?;
        let ratio = low.value / up.value;
        constant = constant.max(ratio);
        let _ = writeln!(csv, "{n},{:.17e},{:.17e},{ratio:.17e}", low.value, up.value);
        rows.push(json!({ "lower": low, "upper": up.value, "ratio": ratio }));
    }
    checks.push(Check::new("ratio_bounded", constant.is_finite() && constant > 0.0, format!("lower/upper ≤ {constant:.4e} on n ≤ {n_max}")));
    let norm_json = json!({
        "p": Exponent(norms.p),
        "l": norms.l,
        "count": norms.count,
        "trials": norms.trials,
        "ratio_min": norms.ratio_min,
        "ratio_max": norms.ratio_max,
        "single": norms.single,
        "max_overlap": norms.max_overlap,
        "group_order": norms.group_order,
    });
    let result = json!({
        "params": pipeline_json(cfg),
        "bumps": { "l": sys.l, "count": sys.len(), "strip_width": sys.strip_width, "strip_fraction": sys.strip_fraction, "centers": sys.centers },
        "norms": norm_json,
        "leakage": leakage,
        "grid": rows,
        "ratio_constant": constant,
    });
    Ok(Outcome { result, checks, csv })
}

fn rate(r: &Resolved, t: &Tolerances) -> Result<Outcome> {
    let cfg = r.pipeline.as_ref().expect("resolved");
    let s = r.raw.sobolev.as_ref().expect("resolved");
    let report = pipeline::upper_rate(cfg)?;
    let slopes = pipeline::running_slopes(&report.n_grid, &report.values);
    let mut lowers = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        lowers.push(if n <= pipeline::LOWER_BOUND_MAX_N {
            Some(pipeline::lower_bound_value(n, cfg, s.embedding_trials, r.seed)?.value)
        } else {
            None
        });
    }
    let mut csv = String::from("n,upper,lower,slope_so_far\n");
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let _ = writeln!(csv, "{n},{:.17e},{},{}", report.values[i], opt(lowers[i]), opt(slopes[i]));
    }
    let gap = (report.slope - report.target_exponent).abs();
    let checks = vec![Check::new(
        "slope",
        gap <= t.slope,
        format!("slope {:.4} against target {:.4} (tolerance {})", report.slope, report.target_exponent, t.slope),
    )];
    let result = json!({ "params": pipeline_json(cfg), "report": report, "lower": lowers, "slope_so_far": slopes });
    Ok(Outcome { result, checks, csv })
}

/// Exit status classes for library errors.
pub fn error_status(e: &Error) -> u8 {
    match e {
        Error::Infeasible { .. } => 3,
        Error::Numerical(_) => 2,
        _ => 1,
    }
}
