use std::fmt;
use std::path::{Path, PathBuf};

use dunkl_entropy::harmonics::CorpusFunction;
use dunkl_entropy::pipeline::{self, PipelineConfig};
use dunkl_entropy::weight::{DunklWeight, RootSystem};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An exponent in `[1, ∞]`; TOML and JSON spell infinity as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Self(v as f64)),
            Raw::Num(v) => Ok(Self(v)),
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(Self(f64::INFINITY)),
                other => other.parse().map(Self).map_err(|_| serde::de::Error::custom(format!("not an exponent: {t}"))),
            },
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Nodes,
    Cubature,
    Mz,
    Kernel,
    Lemma31,
    BallEntropy,
    SobolevUpper,
    SobolevLower,
    Rate,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Self::Nodes,
        Self::Cubature,
        Self::Mz,
        Self::Kernel,
        Self::Lemma31,
        Self::BallEntropy,
        Self::SobolevUpper,
        Self::SobolevLower,
        Self::Rate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nodes => "nodes",
            Self::Cubature => "cubature",
            Self::Mz => "mz",
            Self::Kernel => "kernel",
            Self::Lemma31 => "lemma31",
            Self::BallEntropy => "ball-entropy",
            Self::SobolevUpper => "sobolev-upper",
            Self::SobolevLower => "sobolev-lower",
            Self::Rate => "rate",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// Acceptance tolerances; every field can be overridden from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Moment residual accepted by the cubature solver.
    pub residual: f64,
    /// Relative integration error on random band-limited functions.
    pub exactness: f64,
    /// `C` in `λ_ξ / w(c(ξ, δ/n)) ∈ [1/C, C]`.
    pub weight_bracket: f64,
    /// `C` in the cap-measure model bracket.
    pub cap_model: f64,
    /// `C*` in the `p ∈ {1, ∞}` MZ bracket.
    pub mz_c_star: f64,
    /// Half-width of the `p = 2` MZ bracket around 1.
    pub mz_l2: f64,
    /// Kernel and operator identities.
    pub kernel: f64,
    /// Allowed relative drift of measured constants across `n`-doubling.
    pub constant_drift: f64,
    /// Largest admissible `max / min` of a lemma31 ratio sweep.
    pub lemma31_spread: f64,
    /// Slope distance from `−r/(d−1)`.
    pub slope: f64,
    /// `C` in the bump-norm bracket `[1/C, C]`.
    pub bump_norm: f64,
    /// Relative orbit-support leakage after spectral truncation.
    pub leakage: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-10,
            exactness: 1e-7,
            weight_bracket: 32.0,
            cap_model: 8.0,
            mz_c_star: dunkl_entropy::cubature::DEFAULT_MZ_CSTAR,
            mz_l2: 1e-6,
            kernel: 1e-6,
            constant_drift: 0.25,
            lemma31_spread: 4.0,
            slope: 0.3,
            bump_norm: 8.0,
            leakage: 1e-3,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesParams {
    /// Separation angle; alternatively `delta / n`.
    pub eps: Option<f64>,
    pub n: Option<usize>,
    #[serde(default = "one")]
    pub delta: f64,
    /// Random `(x, n)` samples for the cap-measure model comparison.
    #[serde(default)]
    pub cap_samples: usize,
    #[serde(default = "default_cap_range")]
    pub cap_n_range: [u32; 2],
}

fn default_cap_range() -> [u32; 2] {
    [8, 128]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubatureParams {
    pub degree: usize,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "default_trials")]
    pub exactness_trials: usize,
}

fn default_trials() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MzParams {
    pub n: usize,
    #[serde(default = "default_mz_ps")]
    pub ps: Vec<Exponent>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "one")]
    pub delta: f64,
}

fn default_mz_ps() -> Vec<Exponent> {
    vec![Exponent(1.0), Exponent(2.0), Exponent(f64::INFINITY)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsParams {
    pub r: f64,
    pub p: Exponent,
    pub ns: Vec<usize>,
    pub levels: Vec<u32>,
    #[serde(default = "default_corpus")]
    pub corpus: Vec<CorpusFunction>,
}

pub fn default_corpus() -> Vec<CorpusFunction> {
    vec![
        CorpusFunction::Bump { center: vec![0.6, 0.8, 0.0], scale: 2.0 },
        CorpusFunction::CapIndicator { center: vec![0.8, 0.6, 0.0], radius: 0.7 },
        CorpusFunction::BandLimitedRandom { degree: 6, seed: 11 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub degree: usize,
    /// Number of `y` points in the kernel table.
    #[serde(default = "default_kernel_samples")]
    pub samples: usize,
    /// Fixed first argument; defaults to a generic unit vector.
    pub x: Option<Vec<f64>>,
    /// Random polynomials used by the operator identities; zero skips them.
    #[serde(default = "default_operator_trials")]
    pub operator_trials: usize,
    pub constants: Option<ConstantsParams>,
}

fn default_kernel_samples() -> usize {
    16
}

fn default_operator_trials() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma31Params {
    #[serde(default = "default_lemma31_ns")]
    pub ns: Vec<usize>,
    /// Defaults to the admissible grid of the weight.
    pub betas: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub delta: f64,
}

fn default_lemma31_ns() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallEntropyParams {
    pub m: usize,
    pub p: Exponent,
    pub q: Exponent,
    pub ks: Vec<usize>,
    /// Coordinate weights for the sorted-weight bound and the dyadic reduction.
    pub weights: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    /// Bit budget of the dyadic reduction.
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevParams {
    pub r: f64,
    pub p: Exponent,
    pub q: Exponent,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub n_grid: Option<Vec<usize>>,
    pub lambda_factor: Option<f64>,
    pub strip_width: Option<f64>,
    /// `n` values for the lower bound, each at most the lower-bound limit.
    #[serde(default = "default_lower_ns")]
    pub lower_ns: Vec<usize>,
    /// Coefficient vectors for the embedding constant.
    #[serde(default = "default_embedding_trials")]
    pub embedding_trials: usize,
    /// Coefficient vectors for the bump-norm bracket.
    #[serde(default = "default_norm_trials")]
    pub norm_trials: usize,
}

fn default_lower_ns() -> Vec<usize> {
    vec![2, 4, 6, 8, 10, 12]
}

fn default_embedding_trials() -> usize {
    8
}

fn default_norm_trials() -> usize {
    100
}

/// One self-contained run description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub d: Option<usize>,
    /// Inline `Z₂^d` multiplicities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Vec<f64>>,
    /// Root-system text file, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roots_file: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Output directory used when `--out` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<NodesParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cubature: Option<CubatureParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mz: Option<MzParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma31: Option<Lemma31Params>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball_entropy: Option<BallEntropyParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sobolev: Option<SobolevParams>,
}

/// Errors that map to exit status 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<dunkl_entropy::Error> for ConfigError {
    fn from(e: dunkl_entropy::Error) -> Self {
        match e {
            dunkl_entropy::Error::Config(msg) => Self(msg),
            other => Self(other.to_string()),
        }
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// A config with its weight resolved and its parameters checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub raw: RunConfig,
    pub weight: DunklWeight,
    pub seed: u64,
    pub pipeline: Option<PipelineConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn weight(&self, base: &Path) -> Result<DunklWeight, ConfigError> {
        let roots = match (&self.kappa, &self.roots_file) {
            (Some(_), Some(_)) => return bad("give either kappa or roots_file, not both"),
            (Some(k), None) => {
                if let Some(d) = self.d {
                    if d != k.len() {
                        return bad(format!("kappa has {} entries but d = {d}", k.len()));
                    }
                }
                RootSystem::z2d(k)?
            }
            (None, Some(file)) => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
                let rs = RootSystem::parse(&text)?;
                if let Some(d) = self.d {
                    if d != rs.dim() {
                        return bad(format!("root system has d = {} but the config says d = {d}", rs.dim()));
                    }
                }
                rs
            }
            (None, None) => match self.d {
                Some(d) => RootSystem::unweighted(d)?,
                // ball entropy never touches the sphere
                None if self.ball_entropy.is_some() => RootSystem::unweighted(2)?,
                None => return bad("dimension d is required when no weight is given"),
            },
        };
        Ok(DunklWeight::new(roots)?)
    }

    /// Resolves the weight and checks every invariant the command relies on.
    /// `base` anchors relative paths; `cli_command` must agree with `command`.
    pub fn resolve(&self, cli_command: Command, base: &Path, seed_override: Option<u64>) -> Result<Resolved, ConfigError> {
        if let Some(name) = &self.command {
            match Command::parse(name) {
                Some(c) if c == cli_command => {}
                Some(_) => return bad(format!("config is for `{name}` but `{}` was requested", cli_command.name())),
                None => return bad(format!("unknown command `{name}`")),
            }
        }
        let weight = self.weight(base)?;
        self.check_tolerances()?;
        let mut pipeline = None;
        let positive = |v: f64, what: &str| if v > 0.0 && v.is_finite() { Ok(()) } else { bad(format!("{what} must be positive, got {v}")) };
        match cli_command {
            Command::Nodes => {
                let p = self.nodes.as_ref().ok_or_else(|| ConfigError("missing [nodes] table".into()))?;
                match (p.eps, p.n) {
                    (Some(e), None) => positive(e, "separation eps")?,
                    (None, Some(n)) if n > 0 => positive(p.delta, "delta")?,
                    (None, Some(_)) => return bad("n must be at least 1"),
                    _ => return bad("give exactly one of eps and n in [nodes]"),
                }
                if p.cap_n_range[0] == 0 || p.cap_n_range[0] > p.cap_n_range[1] {
                    return bad(format!("cap_n_range must satisfy 1 ≤ lo ≤ hi, got {:?}", p.cap_n_range));
                }
            }
            Command::Cubature => {
                let p = self.cubature.as_ref().ok_or_else(|| ConfigError("missing [cubature] table".into()))?;
                positive(p.delta, "delta")?;
            }
            Command::Mz => {
                let p = self.mz.as_ref().ok_or_else(|| ConfigError("missing [mz] table".into()))?;
                positive(p.delta, "delta")?;
                if p.n == 0 || p.trials == 0 {
                    return bad("mz needs n ≥ 1 and trials ≥ 1");
                }
                if let Some(e) = p.ps.iter().find(|e| !(e.0 >= 1.0)) {
                    return bad(format!("exponents must lie in [1, ∞], got {e}"));
                }
            }
            Command::Kernel => {
                let p = self.kernel.as_ref().ok_or_else(|| ConfigError("missing [kernel] table".into()))?;
                weight.require_kernels()?;
                if p.degree == 0 {
                    return bad("kernel degree must be at least 1");
                }
                if let Some(c) = &p.constants {
                    positive(c.r, "smoothness r")?;
                    if !(c.p.0 == 1.0 || c.p.0 == 2.0 || c.p.0.is_infinite()) {
                        return bad(format!("measured constants need p ∈ {{1, 2, inf}}, got {}", c.p));
                    }
                }
            }
            Command::Lemma31 => {
                let p = self.lemma31.as_ref().ok_or_else(|| ConfigError("missing [lemma31] table".into()))?;
                positive(p.delta, "delta")?;
                if p.ns.is_empty() || p.ns.contains(&0) {
                    return bad("lemma31 needs a nonempty list of positive n");
                }
                let cap = if weight.gamma_kappa > 0.0 { 1.0 / (2.0 * weight.gamma_kappa) } else { f64::INFINITY };
                if let Some(b) = p.betas.iter().flatten().find(|&&b| !(b > 0.0 && b < cap)) {
                    return bad(format!("β must lie in (0, 1/(2γ_κ)) = (0, {cap}), got {b}"));
                }
            }
            Command::BallEntropy => {
                let p = self.ball_entropy.as_ref().ok_or_else(|| ConfigError("missing [ball_entropy] table".into()))?;
                if p.m == 0 || !(p.p.0 >= 1.0 && p.q.0 >= 1.0) {
                    return bad("ball entropy needs m ≥ 1 and exponents in [1, ∞]");
                }
                if p.ks.is_empty() || p.ks.contains(&0) {
                    return bad("ks must be a nonempty list of positive integers");
                }
                if let Some(w) = &p.weights {
                    if w.len() != p.m || w.iter().any(|&v| !(v > 0.0)) {
                        return bad(format!("weights must be {} positive numbers", p.m));
                    }
                    if p.gamma.is_none() {
                        return bad("weights require gamma");
                    }
                }
            }
            Command::SobolevUpper | Command::SobolevLower | Command::Rate => {
                let s = self.sobolev.as_ref().ok_or_else(|| ConfigError("missing [sobolev] table".into()))?;
                let mut cfg = raw_pipeline(s, &weight);
                if let Some(v) = s.rho {
                    cfg.rho = v;
                }
                if let Some(v) = s.beta {
                    cfg.beta = v;
                }
                if let Some(v) = &s.n_grid {
                    cfg.n_grid = v.clone();
                }
                if let Some(v) = s.lambda_factor {
                    cfg.lambda_factor = v;
                }
                cfg.strip_width = s.strip_width;
                cfg.validate()?;
                if let Some(&n) = s.lower_ns.iter().find(|&&n| n == 0 || n > pipeline::LOWER_BOUND_MAX_N) {
                    return bad(format!("lower_ns entries must lie in 1..={}, got {n}", pipeline::LOWER_BOUND_MAX_N));
                }
                if cli_command == Command::Rate && cfg.n_grid.len() < 4 {
                    return bad(format!("rate regression needs at least 4 grid points, got {}", cfg.n_grid.len()));
                }
                pipeline = Some(cfg);
            }
        }
        Ok(Resolved { command: cli_command, raw: self.clone(), weight, seed: seed_override.or(self.seed).unwrap_or(0), pipeline })
    }

    fn check_tolerances(&self) -> Result<(), ConfigError> {
        let t = &self.tolerance;
        let fields = [
            ("residual", t.residual),
            ("exactness", t.exactness),
            ("mz_l2", t.mz_l2),
            ("kernel", t.kernel),
            ("constant_drift", t.constant_drift),
            ("slope", t.slope),
            ("leakage", t.leakage),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return bad(format!("tolerance.{name} must be positive, got {v}"));
        }
        let brackets = [
            ("weight_bracket", t.weight_bracket),
            ("cap_model", t.cap_model),
            ("mz_c_star", t.mz_c_star),
            ("lemma31_spread", t.lemma31_spread),
            ("bump_norm", t.bump_norm),
        ];
        if let Some((name, v)) = brackets.iter().find(|(_, v)| !(*v >= 1.0 && v.is_finite())) {
            return bad(format!("tolerance.{name} must be at least 1, got {v}"));
        }
        Ok(())
    }
}

fn raw_pipeline(s: &SobolevParams, weight: &DunklWeight) -> PipelineConfig {
    PipelineConfig {
        r: s.r,
        p: s.p.0,
        q: s.q.0,
        weight: weight.clone(),
        rho: pipeline::DEFAULT_RHO,
        beta: pipeline::default_beta(weight),
        n_grid: pipeline::default_n_grid(),
        lambda_factor: pipeline::DEFAULT_LAMBDA_FACTOR,
        strip_width: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_round_trip() {
        let v: Vec<Exponent> = serde_json::from_str(r#"[1, 2.5, "inf"]"#).unwrap();
        assert_eq!(v, vec![Exponent(1.0), Exponent(2.5), Exponent(f64::INFINITY)]);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[1.0,2.5,"inf"]"#);
    }

    #[test]
    fn hypothesis_violation_names_the_invariant() {
        let cfg = RunConfig::from_toml("d = 2\nkappa = [1.0, 1.0]\n[sobolev]\nr = 0.5\np = 1\nq = \"inf\"\n").unwrap();
        let err = cfg.resolve(Command::SobolevUpper, Path::new("."), None).unwrap_err();
        assert!(err.0.contains("smoothness hypothesis"), "{err}");
    }

    #[test]
    fn mismatched_command_is_rejected() {
        let cfg = RunConfig::from_toml("command = \"mz\"\nd = 2\n[cubature]\ndegree = 4\n").unwrap();
        assert!(cfg.resolve(Command::Cubature, Path::new("."), None).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_toml("d = 2\ncolour = 1\n").is_err());
    }
}
