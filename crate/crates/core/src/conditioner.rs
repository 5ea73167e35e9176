//! Parametrized maps from earlier coordinates to a stage's parameter vector.
//!
//! Every conditioner computes a model-specific raw vector `z ∈ C^{2^M}` and
//! returns `Norm(z) = z / ‖z‖`. Gradients follow the conjugate (Wirtinger)
//! convention: an upstream `G = ∂L/∂f*` is pulled back to `∂L/∂θ*` for complex
//! parameters and to the ordinary `∂L/∂w` for the real network weights.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SlmcError};
use crate::fourier::{l2_norm, ParamVector, C64};

/// Hidden width of the network conditioner.
pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionerKind {
    Id,
    Lblr,
    Nblr,
    Nn,
}

impl std::fmt::Display for ConditionerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Id => "id",
            Self::Lblr => "lblr",
            Self::Nblr => "nblr",
            Self::Nn => "nn",
        };
        f.write_str(s)
    }
}

/// Maps a grid coordinate `x ∈ [0, 2^N)` to `x̄ = 2x/(2^N−1) − 1 ∈ [−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateScaler {
    pub n_qubits: u32,
}

impl CoordinateScaler {
    pub fn new(n_qubits: u32) -> Self {
        Self { n_qubits }
    }

    pub fn scale(&self, x: u128) -> f64 {
        let top = 2f64.powi(self.n_qubits as i32) - 1.0;
        2.0 * x as f64 / top - 1.0
    }
}

/// A fixed real basis function of the scaled coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFn {
    /// `Π_i x̄_i^{e_i}`.
    Monomial(Vec<u32>),
    /// `√|x̄_i|`.
    SqrtAbs(usize),
}

impl BasisFn {
    pub fn eval(&self, xbar: &[f64]) -> f64 {
        match self {
            Self::Monomial(exps) => exps
                .iter()
                .zip(xbar)
                .map(|(&e, &x)| x.powi(e as i32))
                .product(),
            Self::SqrtAbs(i) => xbar[*i].abs().sqrt(),
        }
    }
}

/// Basis families for the NBLR conditioner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    /// `x̄_i, x̄_i², x̄_i³, √|x̄_i|` for every input.
    #[default]
    Poly4,
    /// All monomials of total degree 1..=3.
    Poly3,
}

impl BasisChoice {
    pub fn build(self, inputs: usize) -> Result<Vec<BasisFn>> {
        match self {
            Self::Poly4 => Ok((0..inputs)
                .flat_map(|i| {
                    let mono = move |e: u32| {
                        let mut exps = vec![0; inputs];
                        exps[i] = e;
                        BasisFn::Monomial(exps)
                    };
                    [mono(1), mono(2), mono(3), BasisFn::SqrtAbs(i)]
                })
                .collect()),
            Self::Poly3 => make_poly3_basis(inputs + 1),
        }
    }
}

/// Every monomial of total degree 1..=3 in `x̄_1..x̄_{k-1}`, i.e. the
/// non-constant terms of `(1 + x̄_1 + … + x̄_{k-1})³`. Ordered by degree, then
/// lexicographically with `x̄_1` leading.
pub fn make_poly3_basis(k: usize) -> Result<Vec<BasisFn>> {
    if k < 2 {
        return domain(format!("polynomial basis needs k >= 2, got {k}"));
    }
    let vars = k - 1;
    let mut out = Vec::new();
    for degree in 1..=3u32 {
        let mut exps = vec![0u32; vars];
        push_compositions(&mut out, &mut exps, 0, degree);
    }
    Ok(out)
}

fn push_compositions(out: &mut Vec<BasisFn>, exps: &mut [u32], idx: usize, left: u32) {
    if idx == exps.len() - 1 {
        exps[idx] = left;
        out.push(BasisFn::Monomial(exps.to_vec()));
        exps[idx] = 0;
        return;
    }
    for e in (0..=left).rev() {
        exps[idx] = e;
        push_compositions(out, exps, idx + 1, left - e);
    }
    exps[idx] = 0;
}

/// Parameters flattened into a complex block and a real block.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub complex: Vec<C64>,
    pub real: Vec<f64>,
}

impl ParamBlock {
    pub fn zeros_like(other: &Self) -> Self {
        Self {
            complex: vec![C64::new(0.0, 0.0); other.complex.len()],
            real: vec![0.0; other.real.len()],
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.complex.len() == other.complex.len() && self.real.len() == other.real.len()
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (s, o) in self.complex.iter_mut().zip(&other.complex) {
            *s += o * a;
        }
        for (s, o) in self.real.iter_mut().zip(&other.real) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.complex.iter_mut().for_each(|c| *c *= a);
        self.real.iter_mut().for_each(|r| *r *= a);
    }

    pub fn norm_sqr(&self) -> f64 {
        self.complex.iter().map(|c| c.norm_sqr()).sum::<f64>()
            + self.real.iter().map(|r| r * r).sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.complex.iter().all(|c| c.norm_sqr() == 0.0) && self.real.iter().all(|&r| r == 0.0)
    }
}

/// Construction options shared by all conditioner kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionerOptions {
    /// Feed raw integer coordinates to LBLR and NN instead of `x̄`.
    pub raw_coords: bool,
    pub hidden: usize,
    pub basis: BasisChoice,
    /// Start from a random complex-Gaussian vector instead of `e_0`.
    pub gaussian_init: bool,
}

impl Default for ConditionerOptions {
    fn default() -> Self {
        Self {
            raw_coords: false,
            hidden: DEFAULT_HIDDEN,
            basis: BasisChoice::Poly4,
            gaussian_init: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum Body {
    Id,
    Lblr,
    Nblr { basis: Vec<BasisFn> },
    Nn { hidden: usize },
}

/// `f_k(x_1, …, x_{k-1}; θ_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioner {
    m_qubits: u32,
    inputs: Vec<CoordinateScaler>,
    raw_coords: bool,
    body: Body,
    params: ParamBlock,
}

/// Forward pass of the network, kept for the backward pass.
struct NnTrace {
    input: Array2<f64>,
    hidden: [Array2<f64>; 3],
    output: Array2<f64>,
}

impl Conditioner {
    /// Builds a conditioner of `kind` whose inputs are the earlier coordinates
    /// with the given register widths.
    pub fn new<R: Rng + ?Sized>(
        kind: ConditionerKind,
        m_qubits: u32,
        input_qubits: &[u32],
        opts: &ConditionerOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = 1usize << m_qubits;
        let inputs: Vec<CoordinateScaler> = input_qubits.iter().map(|&n| CoordinateScaler::new(n)).collect();
        let start = if opts.gaussian_init {
            ParamVector::random(m_qubits, rng).into_vec()
        } else {
            ParamVector::uniform(m_qubits).into_vec()
        };
        let linear = |terms: usize| {
            let mut complex = vec![C64::new(0.0, 0.0); terms * dim];
            complex.extend_from_slice(&start);
            ParamBlock {
                complex,
                real: Vec::new(),
            }
        };
        let (body, params) = match kind {
            ConditionerKind::Id => (
                Body::Id,
                ParamBlock {
                    complex: start.clone(),
                    real: Vec::new(),
                },
            ),
            ConditionerKind::Lblr => (Body::Lblr, linear(inputs.len())),
            ConditionerKind::Nblr => {
                let basis = opts.basis.build(inputs.len())?;
                let params = linear(basis.len());
                (Body::Nblr { basis }, params)
            }
            ConditionerKind::Nn => {
                if inputs.is_empty() {
                    return domain("network conditioner needs at least one input coordinate");
                }
                if opts.hidden == 0 {
                    return domain("hidden width must be positive");
                }
                let params = nn_init(inputs.len(), opts.hidden, 2 * dim, rng);
                (Body::Nn { hidden: opts.hidden }, params)
            }
        };
        Ok(Self {
            m_qubits,
            inputs,
            raw_coords: opts.raw_coords,
            body,
            params,
        })
    }

    /// `Norm(θ)` with the given starting vector and no inputs.
    pub fn id(theta: Vec<C64>) -> Result<Self> {
        if theta.is_empty() || !theta.len().is_power_of_two() {
            return domain("parameter length must be a power of two");
        }
        Ok(Self {
            m_qubits: theta.len().trailing_zeros(),
            inputs: Vec::new(),
            raw_coords: false,
            body: Body::Id,
            params: ParamBlock {
                complex: theta,
                real: Vec::new(),
            },
        })
    }

    pub fn kind(&self) -> ConditionerKind {
        match self.body {
            Body::Id => ConditionerKind::Id,
            Body::Lblr => ConditionerKind::Lblr,
            Body::Nblr { .. } => ConditionerKind::Nblr,
            Body::Nn { .. } => ConditionerKind::Nn,
        }
    }

    pub fn m_qubits(&self) -> u32 {
        self.m_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.m_qubits
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn basis(&self) -> Option<&[BasisFn]> {
        match &self.body {
            Body::Nblr { basis } => Some(basis),
            _ => None,
        }
    }

    pub fn params(&self) -> &ParamBlock {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamBlock {
        &mut self.params
    }

    /// Rescales complex parameters to unit norm; a no-op for models whose
    /// output is not scale invariant in their parameters.
    pub fn renormalize(&mut self) {
        if let Body::Id = self.body {
            let norm = l2_norm(&self.params.complex);
            if norm > 0.0 && norm.is_finite() {
                self.params.complex.iter_mut().for_each(|c| *c /= norm);
            }
        }
    }

    fn check_coords(&self, coords: &[u128]) -> Result<()> {
        if coords.len() != self.inputs.len() {
            return Err(SlmcError::Shape {
                expected: self.inputs.len(),
                got: coords.len(),
            });
        }
        for (&x, s) in coords.iter().zip(&self.inputs) {
            crate::fourier::check_outcome(x, s.n_qubits)?;
        }
        Ok(())
    }

    fn scaled(&self, coords: &[u128]) -> Vec<f64> {
        coords.iter().zip(&self.inputs).map(|(&x, s)| s.scale(x)).collect()
    }

    /// Real features multiplying the complex weight vectors (linear models)
    /// or feeding the first layer (network).
    fn features(&self, coords: &[u128]) -> Vec<f64> {
        match &self.body {
            Body::Id => Vec::new(),
            Body::Lblr | Body::Nn { .. } if self.raw_coords => coords.iter().map(|&x| x as f64).collect(),
            Body::Lblr | Body::Nn { .. } => self.scaled(coords),
            Body::Nblr { basis } => {
                let xbar = self.scaled(coords);
                basis.iter().map(|b| b.eval(&xbar)).collect()
            }
        }
    }

    fn linear_raw(&self, features: &[f64]) -> Vec<C64> {
        let dim = self.dim();
        let blocks = &self.params.complex;
        let mut z = blocks[features.len() * dim..].to_vec();
        for (j, &phi) in features.iter().enumerate() {
            for (zi, w) in z.iter_mut().zip(&blocks[j * dim..(j + 1) * dim]) {
                *zi += w * phi;
            }
        }
        z
    }

    /// Pre-normalization output for every coordinate tuple.
    pub fn raw_batch(&self, coords: &[&[u128]]) -> Result<Vec<Vec<C64>>> {
        for c in coords {
            self.check_coords(c)?;
        }
        match &self.body {
            Body::Nn { .. } => {
                let trace = self.nn_forward(coords);
                let dim = self.dim();
                Ok(trace
                    .output
                    .rows()
                    .into_iter()
                    .map(|y| (0..dim).map(|j| C64::new(y[j], y[dim + j])).collect())
                    .collect())
            }
            _ => Ok(coords.iter().map(|c| self.linear_raw(&self.features(c))).collect()),
        }
    }

    pub fn raw(&self, coords: &[u128]) -> Result<Vec<C64>> {
        Ok(self.raw_batch(&[coords])?.pop().expect("one row"))
    }

    /// `Norm(raw(coords))`.
    pub fn forward(&self, coords: &[u128]) -> Result<ParamVector> {
        ParamVector::new(self.raw(coords)?)
    }

    pub fn forward_batch(&self, coords: &[&[u128]]) -> Result<Vec<ParamVector>> {
        self.raw_batch(coords)?.into_iter().map(ParamVector::new).collect()
    }

    /// Vector-Jacobian product of one forward evaluation.
    pub fn vjp_params(&self, coords: &[u128], upstream: &[C64]) -> Result<ParamBlock> {
        self.vjp_batch(&[coords], &[upstream.to_vec()])
    }

    /// Sum of vector-Jacobian products over a batch: given `G_i = ∂L/∂f*` at
    /// each evaluation, returns the parameter gradient of `L`.
    pub fn vjp_batch(&self, coords: &[&[u128]], upstreams: &[Vec<C64>]) -> Result<ParamBlock> {
        if coords.len() != upstreams.len() {
            return Err(SlmcError::Shape {
                expected: coords.len(),
                got: upstreams.len(),
            });
        }
        let dim = self.dim();
        if let Some(bad) = upstreams.iter().find(|u| u.len() != dim) {
            return Err(SlmcError::Shape {
                expected: dim,
                got: bad.len(),
            });
        }
        let raws = self.raw_batch(coords)?;
        let raw_grads = raws
            .iter()
            .zip(upstreams)
            .map(|(z, g)| norm_vjp(z, g))
            .collect::<Result<Vec<_>>>()?;

        let mut grad = ParamBlock::zeros_like(&self.params);
        match &self.body {
            Body::Nn { .. } => self.nn_backward(coords, &raw_grads, &mut grad),
            _ => {
                for (c, gz) in coords.iter().zip(&raw_grads) {
                    let features = self.features(c);
                    for (j, &phi) in features.iter().enumerate() {
                        for (g, z) in grad.complex[j * dim..(j + 1) * dim].iter_mut().zip(gz) {
                            *g += z * phi;
                        }
                    }
                    let bias = features.len() * dim;
                    for (g, z) in grad.complex[bias..].iter_mut().zip(gz) {
                        *g += z;
                    }
                }
            }
        }
        Ok(grad)
    }

    fn nn_shapes(&self) -> [(usize, usize); 4] {
        let hidden = match self.body {
            Body::Nn { hidden } => hidden,
            _ => unreachable!("network shapes requested for a linear model"),
        };
        [
            (hidden, self.inputs.len()),
            (hidden, hidden),
            (hidden, hidden),
            (2 * self.dim(), hidden),
        ]
    }

    /// Weight and bias views of layer `l`.
    fn nn_layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let shapes = self.nn_shapes();
        let offset: usize = shapes[..l].iter().map(|(r, c)| r * c + r).sum();
        let (rows, cols) = shapes[l];
        let w = &self.params.real[offset..offset + rows * cols];
        let b = &self.params.real[offset + rows * cols..offset + rows * cols + rows];
        (
            ArrayView2::from_shape((rows, cols), w).expect("layer shape"),
            ArrayView1::from(b),
        )
    }

    fn nn_forward(&self, coords: &[&[u128]]) -> NnTrace {
        let n_in = self.inputs.len();
        let mut input = Array2::zeros((coords.len(), n_in));
        for (mut row, c) in input.rows_mut().into_iter().zip(coords) {
            row.assign(&Array1::from(self.features(c)));
        }
        let affine = |x: &Array2<f64>, l: usize| {
            let (w, b) = self.nn_layer(l);
            x.dot(&w.t()) + &b
        };
        let h1 = affine(&input, 0).mapv_into(sigmoid);
        let h2 = affine(&h1, 1).mapv_into(sigmoid);
        let h3 = affine(&h2, 2).mapv_into(sigmoid);
        let output = affine(&h3, 3);
        NnTrace {
            input,
            hidden: [h1, h2, h3],
            output,
        }
    }

    fn nn_backward(&self, coords: &[&[u128]], raw_grads: &[Vec<C64>], grad: &mut ParamBlock) {
        let trace = self.nn_forward(coords);
        let dim = self.dim();
        // z = y₁ + i y₂ ⇒ ∂L/∂y₁ = 2 Re G_z, ∂L/∂y₂ = 2 Im G_z.
        let mut delta = Array2::zeros(trace.output.raw_dim());
        for (mut row, gz) in delta.rows_mut().into_iter().zip(raw_grads) {
            for j in 0..dim {
                row[j] = 2.0 * gz[j].re;
                row[dim + j] = 2.0 * gz[j].im;
            }
        }
        let shapes = self.nn_shapes();
        let offsets: Vec<usize> = shapes
            .iter()
            .scan(0, |acc, (r, c)| {
                let o = *acc;
                *acc += r * c + r;
                Some(o)
            })
            .collect();
        for l in (0..4).rev() {
            let layer_input = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
            let (rows, cols) = shapes[l];
            let gw = delta.t().dot(layer_input);
            let gb = delta.sum_axis(Axis(0));
            let o = offsets[l];
            for (dst, src) in grad.real[o..o + rows * cols].iter_mut().zip(gw.iter()) {
                *dst += src;
            }
            for (dst, src) in grad.real[o + rows * cols..o + rows * cols + rows].iter_mut().zip(gb.iter()) {
                *dst += src;
            }
            if l > 0 {
                let (w, _) = self.nn_layer(l);
                let h = &trace.hidden[l - 1];
                delta = delta.dot(&w) * &h.mapv(|s| s * (1.0 - s));
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn nn_init<R: Rng + ?Sized>(n_in: usize, hidden: usize, n_out: usize, rng: &mut R) -> ParamBlock {
    let mut real = Vec::new();
    for (rows, cols) in [(hidden, n_in), (hidden, hidden), (hidden, hidden), (n_out, hidden)] {
        let s = 1.0 / (cols as f64).sqrt();
        real.extend((0..rows * cols).map(|_| rng.random_range(-s..=s)));
        real.extend(std::iter::repeat_n(0.0, rows));
    }
    ParamBlock {
        complex: Vec::new(),
        real,
    }
}

/// Pulls `G_f = ∂L/∂f*` back through `f = z/‖z‖`:
/// `G_z = (G_f − Re⟨f, G_f⟩ f) / ‖z‖`.
pub fn norm_vjp(z: &[C64], upstream: &[C64]) -> Result<Vec<C64>> {
    let norm = l2_norm(z);
    if norm == 0.0 {
        return Err(SlmcError::DegenerateNorm);
    }
    let radial: f64 = z.iter().zip(upstream).map(|(zi, g)| (zi.conj() * g).re).sum::<f64>() / norm;
    Ok(z.iter()
        .zip(upstream)
        .map(|(zi, g)| (g - zi / norm * radial) / norm)
        .collect())
}
