//! Metropolis-Hastings independence sampler and the self-learning loop.
//!
//! Each training step draws a batch from the current proposal, filters it
//! through the chain, and moves the proposal parameters along the cross
//! entropy gradient with momentum:
//!
//! ```text
//! m′ = μ m + (1 − μ) (∂L/∂θ)*,   θ′ = θ − α m′
//! ```

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::conditioner::{ConditionerKind, ParamBlock};
use crate::error::{domain, Result, SlmcError};
use crate::fourier::{FourierProposal, TableSampler, PROB_FLOOR};
use crate::metrics::{cross_entropy_tables, cross_entropy_terms, wasserstein_1d, wasserstein_2d, AcceptanceWindow, MetricRow};
use crate::multistage::{JointSample, MultistageSampler};
use crate::targets::{TargetDensity, MAX_ENUMERABLE_CELLS};

/// Default cap on the global gradient norm.
pub const DEFAULT_GRAD_CLIP: f64 = 1e3;

/// A proposal whose draws do not depend on the chain state.
pub trait IndependenceProposal {
    type Sample: Clone;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Self::Sample>;

    fn density(&self, s: &Self::Sample) -> Result<f64>;

    /// Lower clamp applied to densities before the acceptance test.
    fn prob_floor(&self) -> f64 {
        PROB_FLOOR
    }
}

impl IndependenceProposal for FourierProposal {
    type Sample = u128;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u128> {
        Ok(self.sample(rng))
    }

    fn density(&self, s: &u128) -> Result<f64> {
        self.prob(*s)
    }
}

impl IndependenceProposal for MultistageSampler {
    type Sample = JointSample;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<JointSample> {
        self.joint_sample(rng)
    }

    fn density(&self, s: &JointSample) -> Result<f64> {
        self.joint_prob(s)
    }

    fn prob_floor(&self) -> f64 {
        MultistageSampler::prob_floor(self)
    }
}

/// An explicit distribution over `0..n`.
#[derive(Clone, Debug)]
pub struct TableProposal {
    probs: Vec<f64>,
    sampler: TableSampler,
}

impl TableProposal {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sampler = TableSampler::new(&probs)?;
        Ok(Self { probs, sampler })
    }
}

impl IndependenceProposal for TableProposal {
    type Sample = usize;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        Ok(self.sampler.sample(rng))
    }

    fn density(&self, s: &usize) -> Result<f64> {
        self.probs.get(*s).copied().ok_or_else(|| SlmcError::Domain(format!("state {s} out of range")))
    }
}

/// Metropolis-Hastings decision for an independence proposal: accept with
/// probability `min{1, p_prop q_cur / (p_cur q_prop)}`. A current state of
/// zero density is always left. The uniform variate is drawn only when the
/// ratio is below one. Callers clamp `q` (see
/// [`IndependenceProposal::prob_floor`]); zero is treated as the smallest
/// positive double.
pub fn accept<R: Rng + ?Sized>(p_cur: f64, q_cur: f64, p_prop: f64, q_prop: f64, rng: &mut R) -> bool {
    if p_cur == 0.0 {
        return true;
    }
    let (q_cur, q_prop) = (q_cur.max(f64::MIN_POSITIVE), q_prop.max(f64::MIN_POSITIVE));
    let num = p_prop * q_cur;
    let den = p_cur * q_prop;
    if num >= den {
        return true;
    }
    rng.random::<f64>() < num / den
}

#[derive(Clone, Debug, PartialEq)]
struct Scored<S> {
    sample: S,
    p: f64,
    q: f64,
}

/// The chain's current sample and its counters.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState<S> {
    current: Option<Scored<S>>,
    accepted: u64,
    proposed: u64,
}

impl<S> Default for ChainState<S> {
    fn default() -> Self {
        Self {
            current: None,
            accepted: 0,
            proposed: 0,
        }
    }
}

impl<S: Clone> ChainState<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> Option<&S> {
        self.current.as_ref().map(|c| &c.sample)
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn proposed(&self) -> u64 {
        self.proposed
    }

    pub fn acceptance_ratio(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Offers `sample` with target density `p` and proposal density `q`.
    /// The first offer is always accepted. Returns whether it was accepted.
    pub fn mh_step<R: Rng + ?Sized>(&mut self, sample: S, p: f64, q: f64, rng: &mut R) -> bool {
        let take = match &self.current {
            None => true,
            Some(c) => accept(c.p, c.q, p, q, rng),
        };
        self.step_with(sample, p, q, take)
    }

    /// Applies a decision made elsewhere.
    pub fn step_with(&mut self, sample: S, p: f64, q: f64, take: bool) -> bool {
        self.proposed += 1;
        if take {
            self.accepted += 1;
            self.current = Some(Scored { sample, p, q });
        }
        take
    }

    /// Forgets the current state's densities after the proposal changed.
    fn rescore(&mut self, q: f64) {
        if let Some(c) = &mut self.current {
            c.q = q;
        }
    }
}

/// Runs `steps` MH steps with a frozen proposal, calling `visit` with the
/// chain state after every step.
pub fn run_chain<P, F, R>(
    proposal: &P,
    target: F,
    steps: usize,
    rng: &mut R,
    mut visit: impl FnMut(&P::Sample),
) -> Result<ChainState<P::Sample>>
where
    P: IndependenceProposal,
    F: Fn(&P::Sample) -> Result<f64>,
    R: Rng + ?Sized,
{
    let mut chain = ChainState::new();
    for _ in 0..steps {
        let s = proposal.draw(rng)?;
        let p = target(&s)?;
        let q = proposal.density(&s)?.max(proposal.prob_floor());
        chain.mh_step(s, p, q, rng);
        visit(chain.current().expect("first step always accepts"));
    }
    Ok(chain)
}

/// Momentum accumulators, one block per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    pub m: Vec<ParamBlock>,
    pub alpha: f64,
    pub mu: f64,
}

impl MomentumState {
    pub fn new(params: &[&ParamBlock], alpha: f64, mu: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return domain(format!("momentum coefficient {mu} outside [0, 1)"));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return domain(format!("learning coefficient {alpha} must be positive"));
        }
        Ok(Self {
            m: params.iter().map(|p| ParamBlock::zeros_like(p)).collect(),
            alpha,
            mu,
        })
    }

    /// `m ← μ m + (1 − μ) g`, then `θ ← θ − α m`.
    pub fn apply(&mut self, params: &mut [&mut ParamBlock], grads: &[ParamBlock]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(SlmcError::Shape {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        for ((m, g), p) in self.m.iter_mut().zip(grads).zip(params.iter_mut()) {
            if !m.same_shape(g) || !m.same_shape(p) {
                return domain("gradient shape does not match parameters");
            }
            m.scale(self.mu);
            m.axpy(1.0 - self.mu, g);
            p.axpy(-self.alpha, m);
        }
        Ok(())
    }
}

/// Optimization settings of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub alpha: f64,
    pub mu: f64,
    pub seed: u64,
    /// Steps per metric row.
    pub metric_every: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Coarsened cells per axis for the 2-D Wasserstein distance.
    pub wasserstein_bins: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch: 32,
            alpha: 0.01,
            mu: 0.9,
            seed: 0,
            metric_every: 100,
            grad_clip: Some(DEFAULT_GRAD_CLIP),
            wasserstein_bins: 16,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 || self.metric_every == 0 {
            return domain("steps, batch and metric cadence must be at least 1");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return domain("gradient clip must be positive");
            }
        }
        Ok(())
    }
}

/// What one training step did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub accepted: u64,
    pub proposed: u64,
    /// Chain states after each offer that was accepted.
    pub accepted_samples: Vec<JointSample>,
    /// Importance-sampling cross entropy terms of the batch.
    pub ce_terms: Vec<f64>,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    /// True when a degenerate normalization prevented the update.
    pub skipped: bool,
}

/// One self-learning step. All `B` raw proposals enter the gradient; the
/// same batch is then offered to the chain in order.
pub fn train_step<R: Rng + ?Sized>(
    sampler: &mut MultistageSampler,
    target: &TargetDensity,
    opt: &mut MomentumState,
    chain: &mut ChainState<JointSample>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let batch = sampler.joint_sample_batch(cfg.batch, rng)?;
    let z = target.normalizer();
    let floor = sampler.prob_floor();
    let mut p_raw = Vec::with_capacity(batch.len());
    let mut q = Vec::with_capacity(batch.len());
    for r in &batch {
        p_raw.push(target.eval(r)?);
        q.push(sampler.joint_prob(r)?.max(floor));
    }
    let p_hat: Vec<f64> = p_raw.iter().map(|p| p / z).collect();

    let mut out = StepOutcome {
        ce_terms: cross_entropy_terms(&p_hat, &q, floor),
        ..Default::default()
    };
    for (i, r) in batch.iter().enumerate() {
        out.proposed += 1;
        if chain.mh_step(r.clone(), p_raw[i], q[i], rng) {
            out.accepted += 1;
            out.accepted_samples.push(r.clone());
        }
    }

    let post_normalize = single_id(sampler);
    let grads = if post_normalize {
        let xs: Vec<u128> = batch.iter().map(|r| r[0]).collect();
        sampler.stage_proposal(0, &[]).and_then(|p| p.grad_theta(&xs, &p_hat)).map(|g| {
            vec![ParamBlock {
                complex: g,
                real: Vec::new(),
            }]
        })
    } else {
        sampler.joint_grad(&batch, &p_hat)
    };
    let mut grads = match grads {
        Ok(g) => g,
        Err(SlmcError::DegenerateNorm) => {
            log::warn!("degenerate normalization in gradient; update skipped");
            out.skipped = true;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let norm = grads.iter().map(ParamBlock::norm_sqr).sum::<f64>().sqrt();
    out.grad_norm = norm;
    if !norm.is_finite() {
        log::warn!("non-finite gradient; update skipped");
        out.skipped = true;
        return Ok(out);
    }
    if let Some(clip) = cfg.grad_clip {
        if norm > clip {
            grads.iter_mut().for_each(|g| g.scale(clip / norm));
        }
    }
    let before: Vec<ParamBlock> = sampler.stages().iter().map(|s| s.conditioner.params().clone()).collect();
    {
        let mut params: Vec<&mut ParamBlock> =
            sampler.stages_mut().iter_mut().map(|s| s.conditioner.params_mut()).collect();
        opt.apply(&mut params, &grads)?;
    }
    if post_normalize {
        sampler.stages_mut()[0].conditioner.renormalize();
    }
    // The chain's stored proposal density must follow the new parameters.
    if let Some(cur) = chain.current().cloned() {
        match sampler.joint_prob(&cur) {
            Ok(qc) => chain.rescore(qc.max(sampler.prob_floor())),
            Err(SlmcError::DegenerateNorm) => {
                log::warn!("update produced a degenerate normalization; reverted");
                for (s, p) in sampler.stages_mut().iter_mut().zip(before) {
                    *s.conditioner.params_mut() = p;
                }
                out.skipped = true;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// A one-dimensional sampler with a plain parameter vector is updated with
/// the direct gradient and renormalized afterwards. Every other stage keeps
/// free parameters and differentiates through the normalization.
fn single_id(sampler: &MultistageSampler) -> bool {
    sampler.dims() == 1 && sampler.stages()[0].conditioner.kind() == ConditionerKind::Id
}

/// Precomputed normalized target for exact metrics on small grids.
struct ExactMetrics {
    p_hat: Vec<f64>,
    shape: Vec<usize>,
}

/// A training run: sampler, optimizer, chain and a single seeded RNG.
pub struct Trainer<'t> {
    pub sampler: MultistageSampler,
    pub target: &'t TargetDensity,
    pub opt: MomentumState,
    pub chain: ChainState<JointSample>,
    pub cfg: TrainConfig,
    rng: ChaCha8Rng,
    step: usize,
    window: AcceptanceWindow,
    window_ce: Vec<f64>,
    exact: Option<ExactMetrics>,
}

impl<'t> Trainer<'t> {
    pub fn new(sampler: MultistageSampler, target: &'t TargetDensity, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if sampler.grid_qubits() != target.grid_qubits() {
            return domain(format!(
                "sampler grid {:?} does not match target grid {:?}",
                sampler.grid_qubits(),
                target.grid_qubits()
            ));
        }
        let params: Vec<&ParamBlock> = sampler.stages().iter().map(|s| s.conditioner.params()).collect();
        let opt = MomentumState::new(&params, cfg.alpha, cfg.mu)?;
        let exact = if target.dims() <= 2 && target.is_enumerable() {
            Some(ExactMetrics {
                p_hat: target.normalized_table()?,
                shape: target.grid_qubits().iter().map(|&n| 1usize << n).collect(),
            })
        } else {
            None
        };
        Ok(Self {
            sampler,
            target,
            opt,
            chain: ChainState::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            step: 0,
            window: AcceptanceWindow::default(),
            window_ce: Vec::new(),
            exact,
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Advances one step; returns a metric row at the end of each window.
    pub fn step(&mut self) -> Result<(StepOutcome, Option<MetricRow>)> {
        let out = train_step(
            &mut self.sampler,
            self.target,
            &mut self.opt,
            &mut self.chain,
            &self.cfg,
            &mut self.rng,
        )?;
        self.step += 1;
        self.window.record(out.accepted, out.proposed);
        self.window_ce.extend_from_slice(&out.ce_terms);
        let row = if self.step % self.cfg.metric_every == 0 || self.step == self.cfg.steps {
            Some(self.metric_row()?)
        } else {
            None
        };
        Ok((out, row))
    }

    /// Cross entropy and Wasserstein distance of the current proposal,
    /// exact on small grids; otherwise the window's importance-sampling
    /// cross entropy and no distance.
    fn metric_row(&mut self) -> Result<MetricRow> {
        let acceptance_ratio = self.window.take();
        let window_ce = std::mem::take(&mut self.window_ce);
        let (cross_entropy, wasserstein) = match &self.exact {
            Some(ex) => {
                let q = self.sampler.full_table(MAX_ENUMERABLE_CELLS)?;
                let ce = cross_entropy_tables(&ex.p_hat, &q, self.sampler.prob_floor())?;
                let w = match ex.shape.as_slice() {
                    [_] => Some(wasserstein_1d(&ex.p_hat, &q)?),
                    [a, b] => {
                        let bins = self.cfg.wasserstein_bins.clamp(1, (*a).min(*b));
                        let factor = (a.max(b) / bins).max(1);
                        Some(wasserstein_2d(&ex.p_hat, &q, [*a, *b], factor)?)
                    }
                    _ => None,
                };
                (ce, w)
            }
            None => (window_ce.iter().sum::<f64>() / window_ce.len().max(1) as f64, None),
        };
        Ok(MetricRow {
            step: self.step,
            cross_entropy,
            wasserstein,
            acceptance_ratio,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioner::Conditioner;
    use crate::fourier::{ParamVector, C64};
    use crate::stats::tv_distance;
    use crate::targets::{GridTable, TargetSpec};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn favourable_ratio_accepts_without_drawing() {
        let mut a = rng(1);
        let mut b = rng(1);
        assert!(accept(0.2, 0.5, 0.4, 0.5, &mut a));
        assert_eq!(a.random::<u64>(), b.random::<u64>());
        assert!(accept(0.0, 0.5, 0.0, 0.5, &mut a));
    }

    #[test]
    fn matching_densities_accept_everything() {
        let mut r = rng(2);
        let probs = vec![0.1, 0.2, 0.3, 0.4];
        let prop = TableProposal::new(probs.clone()).unwrap();
        let chain = run_chain(&prop, |&s| Ok(probs[s] * 7.0), 10_000, &mut r, |_| {}).unwrap();
        assert_eq!(chain.accepted(), chain.proposed());
    }

    #[test]
    fn two_point_acceptance_matches_kernel() {
        // Target (0.8, 0.2), uniform proposal. From state 0 a move to 1 is
        // accepted with probability 1/4; from 1 every proposal is accepted.
        // Stationary acceptance: 0.8·(½ + ½·¼) + 0.2·1 = 0.7.
        let mut r = rng(3);
        let p = [0.8, 0.2];
        let prop = TableProposal::new(vec![0.5, 0.5]).unwrap();
        let chain = run_chain(&prop, |&s| Ok(p[s]), 100_000, &mut r, |_| {}).unwrap();
        assert!((chain.acceptance_ratio() - 0.7).abs() < 0.01, "{}", chain.acceptance_ratio());
    }

    #[test]
    fn forced_decisions() {
        let mut chain = ChainState::new();
        chain.step_with(1usize, 1.0, 1.0, true);
        assert!(!chain.step_with(2, 1.0, 1.0, false));
        assert_eq!(chain.current(), Some(&1));
        assert_eq!((chain.accepted(), chain.proposed()), (1, 2));
        chain.step_with(3, 1.0, 1.0, true);
        assert_eq!(chain.current(), Some(&3));
    }

    #[test]
    fn sixteen_state_chain_reaches_target() {
        let mut r = rng(4);
        let p: Vec<f64> = (1..=16).map(|i| (i as f64).sqrt()).collect();
        let z: f64 = p.iter().sum();
        let p_hat: Vec<f64> = p.iter().map(|v| v / z).collect();
        let prop = TableProposal::new(vec![1.0 / 16.0; 16]).unwrap();
        let mut counts = vec![0u64; 16];
        run_chain(&prop, |&s| Ok(p[s]), 1_000_000, &mut r, |&s| counts[s] += 1).unwrap();
        assert!(tv_distance(&counts, &p_hat) < 0.01);
    }

    #[test]
    fn spike_target_pins_the_chain() {
        let mut r = rng(5);
        let mut values = vec![0.0; 16];
        values[11] = 1.0;
        let t = TargetDensity::from_table(GridTable::new(vec![16], values).unwrap());
        let prop = FourierProposal::uniform(4, 2).unwrap();
        let mut seen_spike = false;
        run_chain(&prop, |&s| t.eval(&[s]), 5000, &mut r, |&s| {
            if seen_spike {
                assert_eq!(s, 11);
            }
            seen_spike |= s == 11;
        })
        .unwrap();
        assert!(seen_spike);
    }

    fn block(v: &[f64]) -> ParamBlock {
        ParamBlock {
            complex: v.iter().map(|&x| C64::new(x, -x)).collect(),
            real: v.to_vec(),
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = block(&[1.0, 2.0]);
        let before = p.clone();
        let mut opt = MomentumState::new(&[&p], 0.1, 0.9).unwrap();
        opt.apply(&mut [&mut p], &[block(&[0.0, 0.0])]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn zero_momentum_is_plain_descent() {
        let mut p = block(&[1.0, 2.0]);
        let g = block(&[0.5, -1.0]);
        let mut opt = MomentumState::new(&[&p], 0.1, 0.0).unwrap();
        opt.apply(&mut [&mut p], &[g.clone()]).unwrap();
        let mut want = block(&[1.0, 2.0]);
        want.axpy(-0.1, &g);
        assert_eq!(p, want);
    }

    #[test]
    fn momentum_telescopes_under_constant_gradient() {
        // m_t = (1 − μ^t) g, θ_t = θ_0 − α g (t − μ(1 − μ^t)/(1 − μ)).
        let (alpha, mu) = (0.05, 0.9);
        let g = block(&[0.3, -0.7, 1.1]);
        let theta0 = block(&[1.0, 0.5, -0.25]);
        let mut p = theta0.clone();
        let mut opt = MomentumState::new(&[&p], alpha, mu).unwrap();
        for t in 1..=100 {
            opt.apply(&mut [&mut p], &[g.clone()]).unwrap();
            let mut m = g.clone();
            m.scale(1.0 - mu.powi(t));
            let mut dm = opt.m[0].clone();
            dm.axpy(-1.0, &m);
            assert!(dm.norm_sqr().sqrt() < 1e-12);
            let steps = t as f64 - mu * (1.0 - mu.powi(t)) / (1.0 - mu);
            let mut want = theta0.clone();
            want.axpy(-alpha * steps, &g);
            let mut d = p.clone();
            d.axpy(-1.0, &want);
            assert!(d.norm_sqr().sqrt() < 1e-10, "step {t}");
        }
    }

    #[test]
    fn momentum_rejects_bad_coefficients() {
        let p = block(&[1.0]);
        assert!(MomentumState::new(&[&p], 0.1, 1.0).is_err());
        assert!(MomentumState::new(&[&p], 0.0, 0.5).is_err());
    }

    #[test]
    fn uniform_target_keeps_uniform_proposal_and_full_acceptance() {
        let t = TargetDensity::new(TargetSpec::Uniform { dims: 1 }, vec![8]).unwrap();
        let s = MultistageSampler::single(&FourierProposal::uniform(8, 3).unwrap());
        // At the optimum the gradient estimate has zero mean but not zero
        // variance; a small step keeps the diffusion around it negligible.
        let cfg = TrainConfig { steps: 200, metric_every: 50, alpha: 1e-3, ..Default::default() };
        let mut tr = Trainer::new(s, &t, cfg).unwrap();
        let mut rows = Vec::new();
        for _ in 0..200 {
            if let (_, Some(row)) = tr.step().unwrap() {
                rows.push(row);
            }
        }
        assert_eq!(rows.len(), 4);
        for row in rows {
            assert!(row.acceptance_ratio > 0.99, "{row}");
            let excess = row.cross_entropy - 256f64.ln();
            assert!((-1e-12..1e-3).contains(&excess), "{row}");
        }
    }

    #[test]
    fn id_parameters_stay_normalized_and_runs_repeat() {
        let t = TargetDensity::new(TargetSpec::Gaussian { mean: 0.2, sigma: 0.2 }, vec![8]).unwrap();
        let run = || {
            let s = MultistageSampler::single(&FourierProposal::new(8, ParamVector::uniform(3)).unwrap());
            let cfg = TrainConfig { steps: 100, metric_every: 10, seed: 9, ..Default::default() };
            let mut tr = Trainer::new(s, &t, cfg).unwrap();
            let mut rows = Vec::new();
            for _ in 0..100 {
                rows.extend(tr.step().unwrap().1);
            }
            let theta = tr.sampler.stages()[0].conditioner.params().complex.clone();
            (rows, theta)
        };
        let (a, theta) = run();
        let norm: f64 = theta.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(a, run().0);
    }

    #[test]
    fn trainer_checks_grid_agreement() {
        let t = TargetDensity::new(TargetSpec::Gaussian { mean: 0.0, sigma: 0.2 }, vec![8]).unwrap();
        let s = MultistageSampler::single(&FourierProposal::uniform(7, 3).unwrap());
        assert!(Trainer::new(s, &t, TrainConfig::default()).is_err());
        let id = Conditioner::id(vec![C64::new(1.0, 0.0); 4]).unwrap();
        assert_eq!(id.m_qubits(), 2);
    }
}
