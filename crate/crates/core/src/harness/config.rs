//! Experiment configuration files.
//!
//! A config is TOML (or JSON when the file name ends in `.json`) with four
//! sections:
//!
//! ```toml
//! name = "bimodal-1d"
//!
//! [target]
//! kind = "bimodal"          # any `TargetSpec` family and its parameters
//!
//! [sampler]
//! n_qubits = 10             # per coordinate; omit for grid-file targets
//! m_qubits = 4
//! conditioner = "id"        # id | lblr | nblr | nn
//!
//! [train]
//! steps = 40000
//! batch = 32
//! alpha = 0.01
//! mu = 0.9
//! seed = 1
//!
//! [output]
//! snapshot_every = 0
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioner::{BasisChoice, Conditioner, ConditionerKind, ConditionerOptions, DEFAULT_HIDDEN};
use crate::engine::{TrainConfig, DEFAULT_GRAD_CLIP};
use crate::error::{Result, SlmcError};
use crate::fourier::MAX_QUBITS;
use crate::multistage::{MultistageSampler, Stage};
use crate::targets::{load_grid_file, TargetDensity, TargetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub target: TargetSpec,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default)]
    pub n_qubits: Option<u32>,
    pub m_qubits: u32,
    #[serde(default = "default_kind")]
    pub conditioner: ConditionerKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub basis: BasisChoice,
    #[serde(default)]
    pub raw_coords: bool,
    #[serde(default)]
    pub gaussian_init: bool,
}

fn default_kind() -> ConditionerKind {
    ConditionerKind::Id
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch: usize,
    pub alpha: f64,
    pub mu: f64,
    pub seed: u64,
    pub metric_every: usize,
    /// Zero disables clipping.
    pub grad_clip: f64,
    pub wasserstein_bins: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch: t.batch,
            alpha: t.alpha,
            mu: t.mu,
            seed: t.seed,
            metric_every: t.metric_every,
            grad_clip: DEFAULT_GRAD_CLIP,
            wasserstein_bins: t.wasserstein_bins,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Steps between parameter snapshots; zero writes none.
    pub snapshot_every: usize,
    pub write_samples: bool,
    /// Proposal draws for the histogram when the grid is too large to
    /// tabulate exactly.
    pub histogram_draws: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            snapshot_every: 0,
            write_samples: true,
            histogram_draws: 100_000,
        }
    }
}

/// 1-based line of `key` inside `[section]` (or at top level), falling back
/// to the section header and then to any line holding the key (JSON).
fn locate(source: &str, section: Option<&str>, key: &str) -> Option<usize> {
    locate_in_section(source, section, key).or_else(|| {
        source.lines().position(|l| !key.is_empty() && l.contains(&format!("\"{key}\""))).map(|i| i + 1)
    })
}

fn locate_in_section(source: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            current = Some(rest.trim_end_matches(']').trim().to_string());
            if current.as_deref() == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        // TOML `key = …` or JSON `"key": …`.
        let bare = t.trim_start_matches('"');
        if let Some(rest) = bare.strip_prefix(key) {
            let rest = rest.trim_start_matches('"').trim_start();
            if rest.starts_with('=') || rest.starts_with(':') {
                return Some(i + 1);
            }
        }
    }
    header_line
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    /// Parses and validates a config. Errors carry the offending line.
    pub fn parse(source: &str, json: bool) -> Result<Self> {
        let cfg: Self = if json {
            serde_json::from_str(source).map_err(|e| SlmcError::Config {
                line: Some(e.line()),
                msg: e.to_string(),
            })?
        } else {
            toml::from_str(source).map_err(|e| SlmcError::Config {
                line: e.span().map(|s| line_of_offset(source, s.start)),
                msg: e.message().to_string(),
            })?
        };
        cfg.validate(source)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path)?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = Self::parse(&source, json)?;
        // Grid paths are relative to the config file.
        if let TargetSpec::Grid { path: grid } = &mut cfg.target {
            let p = Path::new(grid.as_str());
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *grid = dir.join(p).to_string_lossy().into_owned();
                }
            }
        }
        cfg.check_grid_file(&source)?;
        Ok(cfg)
    }

    fn check_grid_file(&self, source: &str) -> Result<()> {
        if let TargetSpec::Grid { path } = &self.target {
            let table = load_grid_file(path).map_err(|e| SlmcError::Config {
                line: locate(source, Some("target"), "path"),
                msg: format!("grid file {path}: {e}"),
            })?;
            let sizes: Vec<u32> = table.shape.iter().map(|n| n.trailing_zeros()).collect();
            if let Some(n) = self.sampler.n_qubits {
                if sizes.iter().any(|&s| s != n) {
                    return Err(SlmcError::Config {
                        line: locate(source, Some("sampler"), "n_qubits"),
                        msg: format!("n_qubits = {n} does not match grid file axes {:?}", table.shape),
                    });
                }
            }
            if sizes.iter().any(|&s| s < self.sampler.m_qubits) {
                return Err(SlmcError::Config {
                    line: locate(source, Some("sampler"), "m_qubits"),
                    msg: format!("m_qubits = {} exceeds a grid axis of {:?}", self.sampler.m_qubits, table.shape),
                });
            }
        }
        Ok(())
    }

    fn validate(&self, source: &str) -> Result<()> {
        let err = |section: Option<&str>, key: &str, msg: String| SlmcError::Config {
            line: locate(source, section, key),
            msg,
        };
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(err(None, "name", "name must be non-empty and contain no path separators".into()));
        }
        let s = &self.sampler;
        match (s.n_qubits, &self.target) {
            (None, TargetSpec::Grid { .. }) => {}
            (None, _) => return Err(err(Some("sampler"), "", "sampler.n_qubits is required".into())),
            (Some(n), _) => {
                if n == 0 || n > MAX_QUBITS {
                    return Err(err(Some("sampler"), "n_qubits", format!("n_qubits must lie in 1..={MAX_QUBITS}")));
                }
                if s.m_qubits > n {
                    return Err(err(Some("sampler"), "m_qubits", format!("m_qubits must lie in 1..={n}")));
                }
            }
        }
        if s.m_qubits == 0 || s.m_qubits > 16 {
            return Err(err(Some("sampler"), "m_qubits", "m_qubits must lie in 1..=16".into()));
        }
        if s.hidden == 0 {
            return Err(err(Some("sampler"), "hidden", "hidden must be at least 1".into()));
        }
        let t = &self.train;
        if t.steps == 0 {
            return Err(err(Some("train"), "steps", "steps must be at least 1".into()));
        }
        if t.batch == 0 {
            return Err(err(Some("train"), "batch", "batch must be at least 1".into()));
        }
        if !(t.alpha.is_finite() && t.alpha > 0.0) {
            return Err(err(Some("train"), "alpha", "alpha must be a positive number".into()));
        }
        if !(0.0..1.0).contains(&t.mu) {
            return Err(err(Some("train"), "mu", "mu must lie in [0, 1)".into()));
        }
        if t.metric_every == 0 {
            return Err(err(Some("train"), "metric_every", "metric_every must be at least 1".into()));
        }
        if !(t.grad_clip >= 0.0) {
            return Err(err(Some("train"), "grad_clip", "grad_clip must be nonnegative".into()));
        }
        if t.wasserstein_bins == 0 || !t.wasserstein_bins.is_power_of_two() {
            return Err(err(Some("train"), "wasserstein_bins", "wasserstein_bins must be a power of two".into()));
        }
        if let (Some(d), Some(n)) = (self.target.fixed_dims(), s.n_qubits) {
            if d <= 2 && (n as usize) * d > 24 {
                return Err(err(
                    Some("sampler"),
                    "n_qubits",
                    format!("a {d}-D target supports at most {} qubits per coordinate", 24 / d),
                ));
            }
        }
        if let TargetSpec::Uniform { dims } = self.target {
            if dims == 0 {
                return Err(err(Some("target"), "dims", "dims must be at least 1".into()));
            }
        }
        if let Some(n) = s.n_qubits {
            if let Some(d) = self.target.fixed_dims() {
                TargetDensity::new(self.target.clone(), vec![n; d])
                    .map_err(|e| err(Some("target"), "kind", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            batch: t.batch,
            alpha: t.alpha,
            mu: t.mu,
            seed: t.seed,
            metric_every: t.metric_every,
            grad_clip: (t.grad_clip > 0.0).then_some(t.grad_clip),
            wasserstein_bins: t.wasserstein_bins,
        }
    }

    pub fn conditioner_options(&self) -> ConditionerOptions {
        ConditionerOptions {
            raw_coords: self.sampler.raw_coords,
            hidden: self.sampler.hidden,
            basis: self.sampler.basis,
            gaussian_init: self.sampler.gaussian_init,
        }
    }

    /// Target bound to its grid.
    pub fn build_target(&self) -> Result<TargetDensity> {
        match &self.target {
            TargetSpec::Grid { path } => {
                let table = load_grid_file(path)?;
                let qubits = table.shape.iter().map(|n| n.trailing_zeros()).collect();
                TargetDensity::new(self.target.clone(), qubits)
            }
            spec => {
                let n = self.sampler.n_qubits.expect("validated");
                TargetDensity::new(spec.clone(), vec![n; spec.fixed_dims().expect("analytic target")])
            }
        }
    }

    /// The initial sampler. Stage 1 has no inputs and is always `Id`; later
    /// stages use the configured conditioner. Initialization randomness
    /// comes from its own stream of the run seed.
    pub fn build_sampler(&self, grid_qubits: &[u32]) -> Result<MultistageSampler> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.train.seed);
        rng.set_stream(1);
        let opts = self.conditioner_options();
        let stages = (0..grid_qubits.len())
            .map(|k| {
                let kind = if k == 0 { ConditionerKind::Id } else { self.sampler.conditioner };
                Ok(Stage {
                    n_qubits: grid_qubits[k],
                    conditioner: Conditioner::new(kind, self.sampler.m_qubits, &grid_qubits[..k], &opts, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MultistageSampler::new(stages)
    }

    /// Echo used for `config.echo.json`; parsing it reproduces the run.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "uniform"

[target]
kind = "uniform"
dims = 1

[sampler]
n_qubits = 6
m_qubits = 2
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL, false).unwrap();
        assert_eq!(cfg.train, TrainSection::default());
        assert_eq!(cfg.sampler.conditioner, ConditionerKind::Id);
        assert_eq!(cfg.train_config().grad_clip, Some(DEFAULT_GRAD_CLIP));
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let src = MINIMAL.replace("m_qubits = 2", "m_qubits = 9");
        match ExperimentConfig::parse(&src, false) {
            Err(SlmcError::Config { line: Some(10), .. }) => {}
            other => panic!("{other:?}"),
        }
        let src = format!("{MINIMAL}\n[train]\nsteps = 5\nmu = 1.5\n");
        match ExperimentConfig::parse(&src, false) {
            Err(SlmcError::Config { line: Some(14), msg }) => assert!(msg.contains("mu")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_unknown_key_errors_have_lines() {
        let src = MINIMAL.replace("m_qubits = 2", "m_qubits = 2\nbogus = 1");
        assert!(matches!(ExperimentConfig::parse(&src, false), Err(SlmcError::Config { line: Some(11), .. })));
        let src = MINIMAL.replace("kind = \"uniform\"", "kind = \"nonsense\"");
        assert!(matches!(ExperimentConfig::parse(&src, false), Err(SlmcError::Config { line: Some(_), .. })));
    }

    #[test]
    fn json_echo_round_trips() {
        let cfg = ExperimentConfig::parse(MINIMAL, false).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_json(), true).unwrap(), cfg);
    }

    #[test]
    fn first_stage_is_id() {
        let src = r#"
name = "ring"
[target]
kind = "ring"
[sampler]
n_qubits = 5
m_qubits = 2
conditioner = "nn"
hidden = 4
"#;
        let cfg = ExperimentConfig::parse(src, false).unwrap();
        let t = cfg.build_target().unwrap();
        let s = cfg.build_sampler(t.grid_qubits()).unwrap();
        assert_eq!(s.stages()[0].conditioner.kind(), ConditionerKind::Id);
        assert_eq!(s.stages()[1].conditioner.kind(), ConditionerKind::Nn);
        assert_eq!(s, cfg.build_sampler(t.grid_qubits()).unwrap());
    }
}
