//! Built-in oracle suite run by `slmc validate`.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conditioner::{Conditioner, ConditionerKind, ConditionerOptions, ParamBlock};
use crate::engine::{run_chain, TableProposal};
use crate::fourier::{FourierProposal, ParamVector, C64};
use crate::multistage::{MultistageSampler, Stage};
use crate::stats::{chi_square_gof, tv_distance};
use crate::targets::load_grid_file;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Grid file to parse as an extra check.
    pub grid_file: Option<PathBuf>,
    /// Factor applied to the parameter vector before the normalization
    /// check; anything but 1 must make that check fail.
    pub theta_scale: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            grid_file: None,
            theta_scale: 1.0,
        }
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn run_validation(opts: &ValidateOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = vec![
        dft_equivalence(&mut rng),
        normalization(opts.theta_scale, &mut rng),
        chi_square_sampling(&mut rng),
        gradient_fd(&mut rng),
        mh_stationarity(&mut rng),
    ];
    if let Some(path) = &opts.grid_file {
        out.push(match load_grid_file(path) {
            Ok(t) => check("grid-file", true, format!("shape {:?}", t.shape)),
            Err(e) => check("grid-file", false, format!("{}: {e}", path.display())),
        });
    }
    out
}

/// Renders results as an aligned pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    results
        .iter()
        .map(|r| format!("{:<width$}  {}  {}\n", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail))
        .collect()
}

fn dft_equivalence(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst = 0f64;
    for n in [4u32, 6, 8, 10] {
        for _ in 0..5 {
            let m = rng.random_range(1..=n.min(4));
            let theta = ParamVector::random(m, rng);
            let p = FourierProposal::new(n, theta.clone()).expect("valid");
            let size = 1u64 << n;
            for x in 0..size {
                let amp: C64 = theta
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(j, t)| t * C64::from_polar(1.0, 2.0 * PI * ((x * j as u64) % size) as f64 / size as f64))
                    .sum::<C64>()
                    / (size as f64).sqrt();
                worst = worst.max((p.prob(x as u128).expect("on grid") - amp.norm_sqr()).abs());
            }
        }
    }
    check("dft-equivalence", worst < 1e-12, format!("max deviation {worst:.2e}"))
}

fn normalization(scale: f64, rng: &mut ChaCha8Rng) -> CheckResult {
    let theta: Vec<C64> = ParamVector::random(3, rng).into_vec().into_iter().map(|c| c * scale).collect();
    let norm = theta.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let accepted = FourierProposal::new(6, ParamVector::from_raw_unchecked(theta)).is_ok();
    let mass: f64 = if accepted {
        let p = FourierProposal::new(6, ParamVector::random(3, rng)).expect("valid");
        (0..64).map(|x| p.prob(x).expect("on grid")).sum()
    } else {
        f64::NAN
    };
    check(
        "normalization",
        accepted && (norm - 1.0).abs() < 1e-12 && (mass - 1.0).abs() < 1e-12,
        format!("|theta| = {norm:.3e}, total mass {mass:.15}"),
    )
}

fn chi_square_sampling(rng: &mut ChaCha8Rng) -> CheckResult {
    let p = FourierProposal::new(8, ParamVector::random(3, rng)).expect("valid");
    let probs = p.full_table().expect("small table");
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..200_000 {
        counts[p.sample(rng) as usize] += 1;
    }
    match chi_square_gof(&counts, &probs) {
        Ok(c) => check(
            "sampling-chi-square",
            c.p_value > 1e-3,
            format!("chi2 = {:.1}, dof = {}, p = {:.3}", c.statistic, c.dof, c.p_value),
        ),
        Err(e) => check("sampling-chi-square", false, e.to_string()),
    }
}

/// Surrogate loss `−(1/B) Σ w_i log q(r_i)` with the weights frozen.
fn surrogate(s: &MultistageSampler, batch: &[Vec<u128>], w: &[f64]) -> f64 {
    -batch
        .iter()
        .zip(w)
        .map(|(r, wi)| wi * s.joint_prob(r).expect("valid").max(s.prob_floor()).ln())
        .sum::<f64>()
        / batch.len() as f64
}

fn gradient_fd(rng: &mut ChaCha8Rng) -> CheckResult {
    let opts = ConditionerOptions {
        hidden: 6,
        gaussian_init: true,
        ..Default::default()
    };
    let mut worst = 0f64;
    for kind in [ConditionerKind::Id, ConditionerKind::Lblr, ConditionerKind::Nblr, ConditionerKind::Nn] {
        let mut stages = vec![Stage {
            n_qubits: 4,
            conditioner: Conditioner::new(ConditionerKind::Id, 2, &[], &opts, rng).expect("valid"),
        }];
        stages.push(Stage {
            n_qubits: 4,
            conditioner: Conditioner::new(kind, 2, &[4], &opts, rng).expect("valid"),
        });
        let mut s = MultistageSampler::new(stages).expect("valid");
        // Perturb the linear models off their zero-weight start.
        for c in &mut s.stages_mut()[1].conditioner.params_mut().complex {
            *c += C64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        }
        let batch = s.joint_sample_batch(16, rng).expect("valid");
        let p: Vec<f64> = (0..batch.len()).map(|_| rng.random::<f64>() * 0.01).collect();
        let w: Vec<f64> = batch.iter().zip(&p).map(|(r, pi)| pi / s.joint_prob(r).expect("valid").max(s.prob_floor())).collect();
        let grads = s.joint_grad(&batch, &p).expect("valid");
        let h = 1e-6;
        let k = 1;
        let base = s.stages()[k].conditioner.params().clone();
        let mut fd = ParamBlock::zeros_like(&base);
        let eval = |block: ParamBlock| {
            let mut t = s.clone();
            *t.stages_mut()[k].conditioner.params_mut() = block;
            surrogate(&t, &batch, &w)
        };
        for i in 0..base.complex.len() {
            let d = |delta: C64| {
                let mut plus = base.clone();
                plus.complex[i] += delta;
                let mut minus = base.clone();
                minus.complex[i] -= delta;
                (eval(plus) - eval(minus)) / (2.0 * h)
            };
            let (da, db) = (d(C64::new(h, 0.0)), d(C64::new(0.0, h)));
            fd.complex[i] = C64::new(0.5 * da, 0.5 * db);
        }
        for i in 0..base.real.len() {
            let mut plus = base.clone();
            plus.real[i] += h;
            let mut minus = base.clone();
            minus.real[i] -= h;
            fd.real[i] = (eval(plus) - eval(minus)) / (2.0 * h);
        }
        let mut diff = grads[k].clone();
        diff.axpy(-1.0, &fd);
        let rel = diff.norm_sqr().sqrt() / fd.norm_sqr().sqrt().max(1e-300);
        worst = worst.max(rel);
    }
    check("gradient-finite-difference", worst < 1e-4, format!("max relative error {worst:.2e}"))
}

fn mh_stationarity(rng: &mut ChaCha8Rng) -> CheckResult {
    let p: Vec<f64> = (0..16).map(|i| 1.0 + (i as f64 * 0.7).sin().abs() * 3.0).collect();
    let z: f64 = p.iter().sum();
    let p_hat: Vec<f64> = p.iter().map(|v| v / z).collect();
    let prop = TableProposal::new(vec![1.0 / 16.0; 16]).expect("valid");
    let mut counts = vec![0u64; 16];
    let result = run_chain(&prop, |&s| Ok(p[s]), 1_000_000, rng, |&s| counts[s] += 1);
    let tv = tv_distance(&counts, &p_hat);
    check("mh-stationarity", result.is_ok() && tv < 0.01, format!("TV = {tv:.4}"))
}
