//! Multi-dimensional proposal as a chain of conditioned Fourier proposals:
//!
//! ```text
//! q(x; θ) = Π_k q_QFT(x_k; f_k(x_1, …, x_{k-1}; θ_k))
//! ```

use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::conditioner::{Conditioner, ParamBlock};
use crate::error::{domain, Result, SlmcError};
use crate::fourier::{check_outcome, FourierProposal, FourierRow, C64, PROB_FLOOR};

/// One joint draw `r = [r_1, …, r_D]`.
pub type JointSample = Vec<u128>;

/// Samples per parallel gradient chunk. Fixed so that the reduction order,
/// and hence every bit of the result, is independent of the thread count.
const GRAD_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub n_qubits: u32,
    pub conditioner: Conditioner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistageSampler {
    stages: Vec<Stage>,
}

impl MultistageSampler {
    /// Stage `k` (zero-based) must take exactly `k` input coordinates.
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return domain("sampler needs at least one stage");
        }
        for (k, s) in stages.iter().enumerate() {
            if s.conditioner.num_inputs() != k {
                return domain(format!(
                    "stage {k} conditioner takes {} inputs, expected {k}",
                    s.conditioner.num_inputs()
                ));
            }
            if s.conditioner.m_qubits() == 0 || s.conditioner.m_qubits() > s.n_qubits {
                return domain(format!("stage {k}: m_qubits must lie in 1..={}", s.n_qubits));
            }
        }
        Ok(Self { stages })
    }

    /// A one-stage sampler equivalent to a single `FourierProposal`.
    pub fn single(proposal: &FourierProposal) -> Self {
        Self {
            stages: vec![Stage {
                n_qubits: proposal.n_qubits(),
                conditioner: Conditioner::id(proposal.theta().as_slice().to_vec()).expect("valid theta"),
            }],
        }
    }

    pub fn dims(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [Stage] {
        &mut self.stages
    }

    pub fn grid_qubits(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.n_qubits).collect()
    }

    /// The stage-`k` conditional proposal given the earlier coordinates.
    pub fn stage_proposal(&self, k: usize, prefix: &[u128]) -> Result<FourierProposal> {
        let s = &self.stages[k];
        FourierProposal::new(s.n_qubits, s.conditioner.forward(&prefix[..k])?)
    }

    fn check_sample(&self, r: &[u128]) -> Result<()> {
        if r.len() != self.dims() {
            return Err(SlmcError::Shape {
                expected: self.dims(),
                got: r.len(),
            });
        }
        for (&x, s) in r.iter().zip(&self.stages) {
            check_outcome(x, s.n_qubits)?;
        }
        Ok(())
    }

    /// Draws `r_1` from stage 1, then each `r_k` conditioned on `r_<k`.
    pub fn joint_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<JointSample> {
        Ok(self.joint_sample_batch(1, rng)?.pop().expect("one draw"))
    }

    /// `count` independent joint draws. Stages are processed in order across
    /// the whole batch so that each conditioner is evaluated batch-wise.
    pub fn joint_sample_batch<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<JointSample>> {
        let mut draws: Vec<JointSample> = vec![Vec::with_capacity(self.dims()); count];
        for (k, stage) in self.stages.iter().enumerate() {
            let prefixes: Vec<&[u128]> = draws.iter().map(|d| &d[..k]).collect();
            let params = stage.conditioner.forward_batch(&prefixes)?;
            let xs: Vec<u128> = params
                .into_iter()
                .map(|theta| FourierProposal::new(stage.n_qubits, theta).map(|p| p.sample(rng)))
                .collect::<Result<_>>()?;
            for (d, x) in draws.iter_mut().zip(xs) {
                d.push(x);
            }
        }
        Ok(draws)
    }

    /// Per-stage conditionals `q_QFT(r_k; f_k(r_<k))`.
    pub fn stage_probs(&self, r: &[u128]) -> Result<Vec<f64>> {
        self.check_sample(r)?;
        (0..self.dims())
            .map(|k| self.stage_proposal(k, r)?.prob(r[k]))
            .collect()
    }

    pub fn joint_prob(&self, r: &[u128]) -> Result<f64> {
        Ok(self.stage_probs(r)?.iter().product())
    }

    /// Lower clamp for joint probabilities: every stage conditional floored
    /// at `PROB_FLOOR`, so `PROB_FLOOR^D`. A fixed floor would swamp the
    /// joint density once the grid has more than about 2^40 cells.
    pub fn prob_floor(&self) -> f64 {
        PROB_FLOOR.powi(self.dims() as i32)
    }

    /// Cross-entropy gradient estimate for every stage:
    ///
    /// ```text
    /// (∂L/∂θ_k)* ≈ −(1/B) Σ_i p(r_i)/q(r_i) · (u_{r_k}^T f_k) u_{r_k}^* / q_QFT(r_k; f_k) · ∂f_k/∂θ_k
    /// ```
    ///
    /// The stage conditional is clamped below at `PROB_FLOOR`, the joint
    /// probability at [`Self::prob_floor`].
    pub fn joint_grad(&self, batch: &[JointSample], target_vals: &[f64]) -> Result<Vec<ParamBlock>> {
        if batch.is_empty() {
            return domain("empty sample batch");
        }
        if batch.len() != target_vals.len() {
            return Err(SlmcError::Shape {
                expected: batch.len(),
                got: target_vals.len(),
            });
        }
        for r in batch {
            self.check_sample(r)?;
        }
        let inv_b = 1.0 / batch.len() as f64;
        let chunks: Vec<Vec<ParamBlock>> = batch
            .par_chunks(GRAD_CHUNK)
            .zip(target_vals.par_chunks(GRAD_CHUNK))
            .map(|(rs, ps)| self.grad_chunk(rs, ps, inv_b))
            .collect::<Result<_>>()?;
        let mut total: Vec<ParamBlock> = self
            .stages
            .iter()
            .map(|s| ParamBlock::zeros_like(s.conditioner.params()))
            .collect();
        for chunk in &chunks {
            for (t, g) in total.iter_mut().zip(chunk) {
                t.axpy(1.0, g);
            }
        }
        Ok(total)
    }

    fn grad_chunk(&self, batch: &[JointSample], target_vals: &[f64], inv_b: f64) -> Result<Vec<ParamBlock>> {
        let dims = self.dims();
        let floor = self.prob_floor();
        // Stage parameter vectors and conditionals for every sample.
        let mut thetas: Vec<Vec<Vec<C64>>> = Vec::with_capacity(dims);
        let mut joint = vec![1.0; batch.len()];
        let mut stage_q: Vec<Vec<f64>> = Vec::with_capacity(dims);
        for (k, stage) in self.stages.iter().enumerate() {
            let prefixes: Vec<&[u128]> = batch.iter().map(|r| &r[..k]).collect();
            let fs = stage.conditioner.forward_batch(&prefixes)?;
            let mut qs = Vec::with_capacity(batch.len());
            let mut ts = Vec::with_capacity(batch.len());
            for (i, f) in fs.into_iter().enumerate() {
                let p = FourierProposal::new(stage.n_qubits, f)?;
                let q = p.prob(batch[i][k])?;
                joint[i] *= q;
                qs.push(q);
                ts.push(p.theta().as_slice().to_vec());
            }
            thetas.push(ts);
            stage_q.push(qs);
        }

        let mut grads = Vec::with_capacity(dims);
        for (k, stage) in self.stages.iter().enumerate() {
            let m = stage.conditioner.m_qubits();
            let mut coords: Vec<&[u128]> = Vec::new();
            let mut upstreams: Vec<Vec<C64>> = Vec::new();
            for (i, r) in batch.iter().enumerate() {
                let p = target_vals[i];
                if p == 0.0 {
                    continue;
                }
                let weight = p / joint[i].max(floor);
                let q_k = stage_q[k][i].max(PROB_FLOOR);
                let row = FourierRow::new(stage.n_qubits, m, r[k])?;
                let amp = row.dot(&thetas[k][i]);
                let scale = -inv_b * weight / q_k;
                upstreams.push(row.as_slice().iter().map(|u| amp * u.conj() * scale).collect());
                coords.push(&r[..k]);
            }
            let g = if coords.is_empty() {
                ParamBlock::zeros_like(stage.conditioner.params())
            } else {
                stage.conditioner.vjp_batch(&coords, &upstreams)?
            };
            grads.push(g);
        }
        Ok(grads)
    }

    /// Every joint probability on the grid, row-major (last coordinate
    /// fastest). Each distinct conditioning prefix is evaluated once.
    pub fn full_table(&self, max_cells: usize) -> Result<Vec<f64>> {
        let cells = self
            .stages
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(1usize << s.n_qubits.min(63)))
            .filter(|&c| c <= max_cells);
        let Some(cells) = cells else {
            return Err(SlmcError::Budget(format!(
                "joint table over {:?} qubits exceeds {max_cells} cells",
                self.grid_qubits()
            )));
        };
        let mut table = vec![1.0; 1];
        let mut prefixes: Vec<JointSample> = vec![Vec::new()];
        for (k, stage) in self.stages.iter().enumerate() {
            let size = 1usize << stage.n_qubits;
            let refs: Vec<&[u128]> = prefixes.iter().map(|p| &p[..k]).collect();
            let fs = stage.conditioner.forward_batch(&refs)?;
            let fft = FftPlanner::<f64>::new().plan_fft_inverse(size);
            let rows: Vec<Vec<f64>> = fs
                .into_par_iter()
                .map(|f| Ok(FourierProposal::new(stage.n_qubits, f)?.table_with(fft.as_ref())))
                .collect::<Result<_>>()?;
            let mut next = Vec::with_capacity(table.len() * size);
            for (mass, row) in table.iter().zip(&rows) {
                next.extend(row.iter().map(|q| mass * q));
            }
            table = next;
            if k + 1 < self.dims() {
                prefixes = prefixes
                    .iter()
                    .flat_map(|p| {
                        (0..size as u128).map(move |x| {
                            let mut v = p.clone();
                            v.push(x);
                            v
                        })
                    })
                    .collect();
            }
        }
        debug_assert_eq!(table.len(), cells);
        Ok(table)
    }
}
