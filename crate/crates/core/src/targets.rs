//! Target densities on integer grids.
//!
//! Analytic targets are defined on scaled coordinates `x̄ ∈ [−1, 1]` (see
//! [`CoordinateScaler`]); they need only be known up to a constant. The
//! Lennard-Jones target is the Boltzmann density of two atoms in three
//! dimensions with coordinates ordered `r1x, r2x, r1y, r2y, r1z, r2z`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioner::CoordinateScaler;
use crate::error::{domain, Result, SlmcError};
use crate::fourier::check_outcome;

/// Grids up to this many cells are normalized by exhaustive summation.
pub const MAX_ENUMERABLE_CELLS: usize = 1 << 24;

/// Uniform draws used to estimate the normalizer of larger grids.
const NORMALIZER_DRAWS: usize = 1 << 20;
const NORMALIZER_SEED: u64 = 0x5eed_0f_2a;

fn gauss(x: f64, mean: f64, sigma: f64) -> f64 {
    (-0.5 * ((x - mean) / sigma).powi(2)).exp()
}

/// Lennard-Jones potential `a^-12 − a^-6`.
pub fn lennard_jones(a: f64) -> f64 {
    let inv6 = a.powi(-6);
    inv6 * inv6 - inv6
}

/// Named target families and their parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Uniform {
        dims: usize,
    },
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "defaults::sigma")]
        sigma: f64,
    },
    Bimodal {
        #[serde(default = "defaults::bimodal_means")]
        means: [f64; 2],
        #[serde(default = "defaults::bimodal_sigmas")]
        sigmas: [f64; 2],
        #[serde(default = "defaults::bimodal_weights")]
        weights: [f64; 2],
    },
    Triangular {
        #[serde(default)]
        center: f64,
        #[serde(default = "defaults::half_width")]
        half_width: f64,
    },
    /// Gaussian envelope modulated by `1 + depth·cos(π·freq·x̄)`.
    CosineModulated {
        #[serde(default)]
        mean: f64,
        #[serde(default = "defaults::wide_sigma")]
        sigma: f64,
        #[serde(default = "defaults::freq")]
        freq: f64,
        #[serde(default = "defaults::depth")]
        depth: f64,
    },
    AsymmetricExponential {
        #[serde(default)]
        center: f64,
        #[serde(default = "defaults::left_rate")]
        left_rate: f64,
        #[serde(default = "defaults::right_rate")]
        right_rate: f64,
    },
    Ring {
        #[serde(default = "defaults::radius")]
        radius: f64,
        #[serde(default = "defaults::ring_width")]
        width: f64,
    },
    CorrelatedGaussian {
        #[serde(default)]
        mean: [f64; 2],
        #[serde(default = "defaults::corr_sigmas")]
        sigmas: [f64; 2],
        #[serde(default = "defaults::rho")]
        rho: f64,
    },
    /// Gaussian in `x̄₁` times a two-component mixture in `x̄₂`.
    IndependentProduct {
        #[serde(default = "defaults::sigma")]
        sigma: f64,
        #[serde(default = "defaults::bimodal_means")]
        means: [f64; 2],
        #[serde(default = "defaults::product_sigma")]
        mode_sigma: f64,
    },
    /// `x̄₁ ~ N(0, σ₁²)`, `x̄₂ | x̄₁ ~ N(c·x̄₁² + offset, σ₂²)`.
    Banana {
        #[serde(default = "defaults::banana_sigmas")]
        sigmas: [f64; 2],
        #[serde(default = "defaults::curvature")]
        curvature: f64,
        #[serde(default = "defaults::banana_offset")]
        offset: f64,
    },
    MultimodalGrid {
        #[serde(default = "defaults::modes")]
        modes_per_axis: usize,
        #[serde(default = "defaults::mode_sigma")]
        sigma: f64,
    },
    Checkerboard {
        #[serde(default = "defaults::squares")]
        squares: usize,
        /// Density on the white squares relative to the black ones.
        #[serde(default = "defaults::floor")]
        floor: f64,
    },
    /// Mass concentrated along the spiral `r = a (φ + 2πk)`.
    Spiral {
        #[serde(default = "defaults::spiral_pitch")]
        pitch: f64,
        #[serde(default = "defaults::spiral_width")]
        width: f64,
    },
    LennardJones {
        #[serde(default = "defaults::beta")]
        beta: f64,
        #[serde(default = "defaults::lj_scale")]
        scale: f64,
    },
    /// Tabulated grid read from a file in the grid-target text format.
    Grid {
        path: String,
    },
}

mod defaults {
    pub fn sigma() -> f64 {
        0.2
    }
    pub fn wide_sigma() -> f64 {
        0.35
    }
    pub fn bimodal_means() -> [f64; 2] {
        [-0.45, 0.4]
    }
    pub fn bimodal_sigmas() -> [f64; 2] {
        [0.12, 0.16]
    }
    pub fn bimodal_weights() -> [f64; 2] {
        [0.55, 0.45]
    }
    pub fn half_width() -> f64 {
        0.5
    }
    pub fn freq() -> f64 {
        12.0
    }
    pub fn depth() -> f64 {
        0.6
    }
    pub fn left_rate() -> f64 {
        12.0
    }
    pub fn right_rate() -> f64 {
        3.0
    }
    pub fn radius() -> f64 {
        0.55
    }
    pub fn ring_width() -> f64 {
        0.1
    }
    pub fn corr_sigmas() -> [f64; 2] {
        [0.25, 0.25]
    }
    pub fn rho() -> f64 {
        0.9
    }
    pub fn product_sigma() -> f64 {
        0.15
    }
    pub fn banana_sigmas() -> [f64; 2] {
        [0.35, 0.08]
    }
    pub fn curvature() -> f64 {
        1.2
    }
    pub fn banana_offset() -> f64 {
        -0.4
    }
    pub fn modes() -> usize {
        3
    }
    pub fn mode_sigma() -> f64 {
        0.1
    }
    pub fn squares() -> usize {
        4
    }
    pub fn floor() -> f64 {
        0.05
    }
    pub fn spiral_pitch() -> f64 {
        0.08
    }
    pub fn spiral_width() -> f64 {
        0.06
    }
    pub fn beta() -> f64 {
        0.1
    }
    pub fn lj_scale() -> f64 {
        0.7
    }
}

impl TargetSpec {
    /// Number of coordinates, where fixed by the family.
    pub fn fixed_dims(&self) -> Option<usize> {
        match self {
            Self::Uniform { dims } => Some(*dims),
            Self::Gaussian { .. }
            | Self::Bimodal { .. }
            | Self::Triangular { .. }
            | Self::CosineModulated { .. }
            | Self::AsymmetricExponential { .. } => Some(1),
            Self::Ring { .. }
            | Self::CorrelatedGaussian { .. }
            | Self::IndependentProduct { .. }
            | Self::Banana { .. }
            | Self::MultimodalGrid { .. }
            | Self::Checkerboard { .. }
            | Self::Spiral { .. } => Some(2),
            Self::LennardJones { .. } => Some(6),
            Self::Grid { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "uniform",
            Self::Gaussian { .. } => "gaussian",
            Self::Bimodal { .. } => "bimodal",
            Self::Triangular { .. } => "triangular",
            Self::CosineModulated { .. } => "cosine_modulated",
            Self::AsymmetricExponential { .. } => "asymmetric_exponential",
            Self::Ring { .. } => "ring",
            Self::CorrelatedGaussian { .. } => "correlated_gaussian",
            Self::IndependentProduct { .. } => "independent_product",
            Self::Banana { .. } => "banana",
            Self::MultimodalGrid { .. } => "multimodal_grid",
            Self::Checkerboard { .. } => "checkerboard",
            Self::Spiral { .. } => "spiral",
            Self::LennardJones { .. } => "lennard_jones",
            Self::Grid { .. } => "grid",
        }
    }

    /// Unnormalized density at scaled coordinates.
    fn density_scaled(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Uniform { .. } | Self::Grid { .. } | Self::LennardJones { .. } => 1.0,
            Self::Gaussian { mean, sigma } => gauss(x[0], mean, sigma),
            Self::Bimodal { means, sigmas, weights } => {
                weights[0] * gauss(x[0], means[0], sigmas[0]) + weights[1] * gauss(x[0], means[1], sigmas[1])
            }
            Self::Triangular { center, half_width } => (1.0 - (x[0] - center).abs() / half_width).max(0.0),
            Self::CosineModulated { mean, sigma, freq, depth } => {
                gauss(x[0], mean, sigma) * (1.0 + depth * (PI * freq * x[0]).cos())
            }
            Self::AsymmetricExponential { center, left_rate, right_rate } => {
                let d = x[0] - center;
                let rate = if d < 0.0 { left_rate } else { right_rate };
                (-rate * d.abs()).exp()
            }
            Self::Ring { radius, width } => gauss(x[0].hypot(x[1]), radius, width),
            Self::CorrelatedGaussian { mean, sigmas, rho } => {
                correlated_gaussian(x[0] - mean[0], x[1] - mean[1], sigmas, rho)
            }
            Self::IndependentProduct { sigma, means, mode_sigma } => {
                gauss(x[0], 0.0, sigma) * (gauss(x[1], means[0], mode_sigma) + gauss(x[1], means[1], mode_sigma))
            }
            Self::Banana { sigmas, curvature, offset } => {
                gauss(x[0], 0.0, sigmas[0]) * gauss(x[1], curvature * x[0] * x[0] + offset, sigmas[1])
            }
            Self::MultimodalGrid { modes_per_axis, sigma } => {
                let centers: Vec<f64> = (0..modes_per_axis)
                    .map(|i| -0.6 + 1.2 * i as f64 / (modes_per_axis.max(2) - 1) as f64)
                    .collect();
                centers
                    .iter()
                    .flat_map(|&a| centers.iter().map(move |&b| (a, b)))
                    .map(|(a, b)| gauss(x[0], a, sigma) * gauss(x[1], b, sigma))
                    .sum()
            }
            Self::Checkerboard { squares, floor } => {
                let cell = |v: f64| (((v + 1.0) / 2.0 * squares as f64).floor() as i64).clamp(0, squares as i64 - 1);
                if (cell(x[0]) + cell(x[1])) % 2 == 0 {
                    1.0
                } else {
                    floor
                }
            }
            Self::Spiral { pitch, width } => {
                let r = x[0].hypot(x[1]);
                let phi = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
                // Distance to the nearest winding r = pitch·(φ + 2πk).
                let k = ((r / pitch - phi) / (2.0 * PI)).round().max(0.0);
                let d = (0..3)
                    .map(|o| (k + o as f64 - 1.0).max(0.0))
                    .map(|kk| (r - pitch * (phi + 2.0 * PI * kk)).abs())
                    .fold(f64::INFINITY, f64::min);
                (-0.5 * (d / width).powi(2)).exp() * (-r * r).exp()
            }
        }
    }
}

fn correlated_gaussian(dx: f64, dy: f64, sigmas: [f64; 2], rho: f64) -> f64 {
    let (u, v) = (dx / sigmas[0], dy / sigmas[1]);
    (-(u * u - 2.0 * rho * u * v + v * v) / (2.0 * (1.0 - rho * rho))).exp()
}

/// Tabulated density, row-major with the last coordinate fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridTable {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridTable {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let cells: usize = shape.iter().product();
        if shape.is_empty() || cells != values.len() {
            return Err(SlmcError::Shape {
                expected: cells,
                got: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn index(&self, r: &[u128]) -> usize {
        r.iter().zip(&self.shape).fold(0, |acc, (&x, &n)| acc * n + x as usize)
    }
}

/// Reads the grid-target text format: a header line `dims n_1 … n_D` (cells
/// per axis, each a power of two) followed by `Π n_i` whitespace-separated
/// nonnegative reals in row-major order. Lines starting with `#` are skipped.
pub fn parse_grid(text: &str) -> Result<GridTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(SlmcError::Parse {
        line: 1,
        msg: "missing `dims` header".into(),
    })?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("dims") {
        return Err(SlmcError::Parse {
            line: hline,
            msg: "header must start with `dims`".into(),
        });
    }
    let shape = fields
        .map(|f| match f.parse::<usize>() {
            Ok(n) if n.is_power_of_two() && n >= 2 => Ok(n),
            _ => Err(SlmcError::Parse {
                line: hline,
                msg: format!("axis size {f:?} is not a power of two >= 2"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    if shape.is_empty() {
        return Err(SlmcError::Parse {
            line: hline,
            msg: "header declares no axes".into(),
        });
    }
    let expected = shape.iter().try_fold(1usize, |a, &n| a.checked_mul(n)).ok_or(SlmcError::Parse {
        line: hline,
        msg: "declared grid is too large".into(),
    })?;
    let mut values = Vec::with_capacity(expected.min(1 << 24));
    let mut last_line = hline;
    for (line, text) in lines {
        last_line = line;
        for tok in text.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| SlmcError::Parse {
                line,
                msg: format!("invalid number {tok:?}"),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(SlmcError::Parse {
                    line,
                    msg: format!("entry {tok} is not a finite nonnegative number"),
                });
            }
            values.push(v);
        }
    }
    if values.len() != expected {
        return Err(SlmcError::Parse {
            line: last_line,
            msg: format!("expected {expected} entries for shape {shape:?}, found {}", values.len()),
        });
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(SlmcError::Parse {
            line: last_line,
            msg: "grid has no positive entry".into(),
        });
    }
    GridTable::new(shape, values)
}

/// Writes `table` in the grid-target text format; one axis-last row per line.
pub fn format_grid(shape: &[usize], values: &[f64]) -> String {
    let mut out = String::from("dims");
    for n in shape {
        write!(out, " {n}").expect("write to string");
    }
    out.push('\n');
    let row = *shape.last().unwrap_or(&1);
    for chunk in values.chunks(row.max(1)) {
        let line: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn load_grid_file(path: impl AsRef<Path>) -> Result<GridTable> {
    parse_grid(&std::fs::read_to_string(path)?)
}

/// A target density bound to a grid.
#[derive(Debug)]
pub struct TargetDensity {
    spec: TargetSpec,
    grid_qubits: Vec<u32>,
    table: Option<GridTable>,
    normalizer: OnceLock<f64>,
}

impl TargetDensity {
    /// Binds an analytic family to a grid with `grid_qubits[i]` qubits on
    /// axis `i`. Grid targets are read from disk and must match the grid.
    pub fn new(spec: TargetSpec, grid_qubits: Vec<u32>) -> Result<Self> {
        if let Some(d) = spec.fixed_dims() {
            if d != grid_qubits.len() {
                return domain(format!(
                    "target {} has {d} coordinates but the grid has {}",
                    spec.name(),
                    grid_qubits.len()
                ));
            }
        }
        let table = match &spec {
            TargetSpec::Grid { path } => {
                let t = load_grid_file(path)?;
                Self::check_table_shape(&t, &grid_qubits)?;
                Some(t)
            }
            _ => None,
        };
        Ok(Self {
            spec,
            grid_qubits,
            table,
            normalizer: OnceLock::new(),
        })
    }

    pub fn from_table(table: GridTable) -> Self {
        let grid_qubits = table.shape.iter().map(|n| n.trailing_zeros()).collect();
        Self {
            spec: TargetSpec::Grid { path: String::new() },
            grid_qubits,
            table: Some(table),
            normalizer: OnceLock::new(),
        }
    }

    fn check_table_shape(t: &GridTable, grid_qubits: &[u32]) -> Result<()> {
        let want: Vec<usize> = grid_qubits.iter().map(|&n| 1usize << n).collect();
        if t.shape != want {
            return domain(format!("grid file shape {:?} does not match sampler grid {want:?}", t.shape));
        }
        Ok(())
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    pub fn dims(&self) -> usize {
        self.grid_qubits.len()
    }

    pub fn grid_qubits(&self) -> &[u32] {
        &self.grid_qubits
    }

    /// Total number of grid cells as a float (may exceed `usize`).
    pub fn cells(&self) -> f64 {
        self.grid_qubits.iter().map(|&n| 2f64.powi(n as i32)).product()
    }

    pub fn is_enumerable(&self) -> bool {
        self.cells() <= MAX_ENUMERABLE_CELLS as f64
    }

    /// Unnormalized density at grid point `r`.
    pub fn eval(&self, r: &[u128]) -> Result<f64> {
        if r.len() != self.dims() {
            return Err(SlmcError::Shape {
                expected: self.dims(),
                got: r.len(),
            });
        }
        for (&x, &n) in r.iter().zip(&self.grid_qubits) {
            check_outcome(x, n)?;
        }
        Ok(self.eval_unchecked(r))
    }

    fn eval_unchecked(&self, r: &[u128]) -> f64 {
        match (&self.spec, &self.table) {
            (_, Some(t)) => t.values[t.index(r)],
            (TargetSpec::LennardJones { beta, scale }, None) => {
                let rescale = |i: usize| r[i] as f64 / (scale * (2f64.powi(self.grid_qubits[i] as i32) - 1.0));
                let d2: f64 = (0..3).map(|axis| (rescale(2 * axis) - rescale(2 * axis + 1)).powi(2)).sum();
                if d2 == 0.0 {
                    return 0.0;
                }
                (-beta * lennard_jones(d2.sqrt())).exp()
            }
            (spec, None) => {
                let xbar: Vec<f64> = r
                    .iter()
                    .zip(&self.grid_qubits)
                    .map(|(&x, &n)| CoordinateScaler::new(n).scale(x))
                    .collect();
                spec.density_scaled(&xbar)
            }
        }
    }

    /// `Σ_r p(r)`: exact for enumerable grids, otherwise a seeded uniform
    /// Monte-Carlo estimate.
    pub fn normalizer(&self) -> f64 {
        *self.normalizer.get_or_init(|| {
            if self.is_enumerable() {
                self.for_each_cell(|_, _| {}).max(f64::MIN_POSITIVE)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(NORMALIZER_SEED);
                let mut r = vec![0u128; self.dims()];
                let mut sum = 0.0;
                for _ in 0..NORMALIZER_DRAWS {
                    for (x, &n) in r.iter_mut().zip(&self.grid_qubits) {
                        *x = rng.random::<u128>() >> (128 - n);
                    }
                    sum += self.eval_unchecked(&r);
                }
                (self.cells() * sum / NORMALIZER_DRAWS as f64).max(f64::MIN_POSITIVE)
            }
        })
    }

    fn for_each_cell(&self, mut f: impl FnMut(usize, f64)) -> f64 {
        let dims = self.dims();
        let sizes: Vec<u128> = self.grid_qubits.iter().map(|&n| 1u128 << n).collect();
        let mut r = vec![0u128; dims];
        let cells = self.cells() as usize;
        let mut total = 0.0;
        for idx in 0..cells {
            let v = self.eval_unchecked(&r);
            total += v;
            f(idx, v);
            for d in (0..dims).rev() {
                r[d] += 1;
                if r[d] < sizes[d] {
                    break;
                }
                r[d] = 0;
            }
        }
        total
    }

    /// Normalized density over the whole grid, row-major.
    pub fn normalized_table(&self) -> Result<Vec<f64>> {
        if !self.is_enumerable() {
            return Err(SlmcError::Budget(format!(
                "grid of {} cells is too large to enumerate",
                self.cells()
            )));
        }
        let mut values = Vec::with_capacity(self.cells() as usize);
        let total = self.for_each_cell(|_, v| values.push(v));
        values.iter_mut().for_each(|v| *v /= total);
        Ok(values)
    }
}
