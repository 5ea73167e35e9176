//! Cross entropy, Wasserstein-1 distance and acceptance accounting.
//!
//! Distances use the scaled coordinate `x̄ ∈ [−1, 1]` as ground metric, so a
//! grid of `n` cells has spacing `2 / (n − 1)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result, SlmcError};
use crate::multistage::MultistageSampler;
use crate::stats::mean_and_se;
use crate::targets::{TargetDensity, MAX_ENUMERABLE_CELLS};

/// Largest coarsened 2-D grid accepted by [`wasserstein_2d`] (cells per axis).
pub const MAX_W2D_SIDE: usize = 64;

const NORM_TOL: f64 = 1e-9;

/// One line of training telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub cross_entropy: f64,
    pub wasserstein: Option<f64>,
    /// Accepted over proposed in the window ending at `step`.
    pub acceptance_ratio: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str = "step,cross_entropy,wasserstein,acceptance_ratio";
}

impl fmt::Display for MetricRow {
    /// CSV line; `{:?}` on `f64` prints the shortest round-tripping form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{:?},", self.step, self.cross_entropy)?;
        if let Some(w) = self.wasserstein {
            write!(f, "{w:?}")?;
        }
        write!(f, ",{:?}", self.acceptance_ratio)
    }
}

impl std::str::FromStr for MetricRow {
    type Err = SlmcError;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |msg: &str| SlmcError::Parse {
            line: 0,
            msg: format!("{msg}: {line:?}"),
        };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        Ok(Self {
            step: f[0].parse().map_err(|_| bad("bad step"))?,
            cross_entropy: f[1].parse().map_err(|_| bad("bad cross entropy"))?,
            wasserstein: if f[2].is_empty() {
                None
            } else {
                Some(f[2].parse().map_err(|_| bad("bad wasserstein"))?)
            },
            acceptance_ratio: f[3].parse().map_err(|_| bad("bad acceptance ratio"))?,
        })
    }
}

/// `−Σ p̂ log max(q, floor)` over matching tables.
pub fn cross_entropy_tables(p_hat: &[f64], q: &[f64], floor: f64) -> Result<f64> {
    if p_hat.len() != q.len() {
        return Err(SlmcError::Shape {
            expected: p_hat.len(),
            got: q.len(),
        });
    }
    Ok(-p_hat
        .iter()
        .zip(q)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * q.max(floor).ln())
        .sum::<f64>())
}

/// Exact cross entropy of the sampler against the grid-normalized target.
pub fn cross_entropy_exact(target: &TargetDensity, sampler: &MultistageSampler) -> Result<f64> {
    let p_hat = target.normalized_table()?;
    let q = sampler.full_table(MAX_ENUMERABLE_CELLS)?;
    cross_entropy_tables(&p_hat, &q, sampler.prob_floor())
}

/// Importance-sampling terms `−(p̂/q) log q` for draws from the sampler,
/// with `q` clamped below at `floor`.
pub fn cross_entropy_terms(p_hat: &[f64], q: &[f64], floor: f64) -> Vec<f64> {
    p_hat
        .iter()
        .zip(q)
        .map(|(&p, &q)| {
            if p == 0.0 {
                0.0
            } else {
                let q = q.max(floor);
                -(p / q) * q.ln()
            }
        })
        .collect()
}

/// Monte-Carlo cross entropy with `n_samples` draws from the sampler;
/// returns `(estimate, standard error)`. The target is divided by its
/// normalizer (exact or estimated, see [`TargetDensity::normalizer`]).
pub fn cross_entropy_mc<R: rand::Rng + ?Sized>(
    target: &TargetDensity,
    sampler: &MultistageSampler,
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return domain("need at least one sample");
    }
    let z = target.normalizer();
    let draws = sampler.joint_sample_batch(n_samples, rng)?;
    let mut p = Vec::with_capacity(n_samples);
    let mut q = Vec::with_capacity(n_samples);
    for r in &draws {
        p.push(target.eval(r)? / z);
        q.push(sampler.joint_prob(r)?);
    }
    Ok(mean_and_se(&cross_entropy_terms(&p, &q, sampler.prob_floor())))
}

fn check_histogram(h: &[f64], name: &str) -> Result<()> {
    if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return domain(format!("{name} has a negative or non-finite entry"));
    }
    let total: f64 = h.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return domain(format!("{name} sums to {total}, not 1"));
    }
    Ok(())
}

/// Exact 1-D W₁ via `Σ |CDF_p − CDF_q| Δx`.
pub fn wasserstein_1d(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(SlmcError::Shape {
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.len() < 2 {
        return domain("need at least two bins");
    }
    check_histogram(p, "p")?;
    check_histogram(q, "q")?;
    let dx = 2.0 / (p.len() - 1) as f64;
    let mut diff = 0.0;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        diff += a - b;
        total += diff.abs();
    }
    Ok(total * dx)
}

/// Sums `factor × factor` blocks of a row-major `shape` grid. Returns the
/// coarse grid and each coarse cell's center in scaled coordinates.
fn coarsen(h: &[f64], shape: [usize; 2], factor: usize) -> (Vec<f64>, Vec<[f64; 2]>) {
    let side = [shape[0] / factor, shape[1] / factor];
    let mut out = vec![0.0; side[0] * side[1]];
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            out[(i / factor) * side[1] + j / factor] += h[i * shape[1] + j];
        }
    }
    let center = |b: usize, n: usize| -1.0 + 2.0 * (b as f64 * factor as f64 + (factor - 1) as f64 / 2.0) / (n - 1) as f64;
    let centers = (0..side[0])
        .flat_map(|a| (0..side[1]).map(move |b| [center(a, shape[0]), center(b, shape[1])]))
        .collect();
    (out, centers)
}

/// W₁ between two 2-D grids after summing `coarsen × coarsen` blocks, with
/// Euclidean ground cost between block centers. Solved exactly as a
/// min-cost flow; approximates the full-resolution distance.
pub fn wasserstein_2d(p: &[f64], q: &[f64], shape: [usize; 2], coarsen_by: usize) -> Result<f64> {
    let cells = shape[0] * shape[1];
    if p.len() != cells || q.len() != cells {
        return Err(SlmcError::Shape {
            expected: cells,
            got: if p.len() != cells { p.len() } else { q.len() },
        });
    }
    if shape[0] < 2 || shape[1] < 2 {
        return domain("need at least two cells per axis");
    }
    if coarsen_by == 0 || shape[0] % coarsen_by != 0 || shape[1] % coarsen_by != 0 {
        return domain(format!("coarsen factor {coarsen_by} must divide the grid shape {shape:?}"));
    }
    if shape[0] / coarsen_by > MAX_W2D_SIDE || shape[1] / coarsen_by > MAX_W2D_SIDE {
        return Err(SlmcError::Budget(format!(
            "coarsened grid {}x{} exceeds {MAX_W2D_SIDE}x{MAX_W2D_SIDE}; use a coarsen factor of at least {}",
            shape[0] / coarsen_by,
            shape[1] / coarsen_by,
            shape[0].max(shape[1]).div_ceil(MAX_W2D_SIDE)
        )));
    }
    check_histogram(p, "p")?;
    check_histogram(q, "q")?;
    let (pc, centers) = coarsen(p, shape, coarsen_by);
    let (qc, _) = coarsen(q, shape, coarsen_by);
    // Under a metric cost, mass shared by p and q stays in place.
    let mut sources = Vec::new();
    let mut sinks = Vec::new();
    for (k, (a, b)) in pc.iter().zip(&qc).enumerate() {
        let d = a - b;
        if d > 0.0 {
            sources.push((k, d));
        } else if d < 0.0 {
            sinks.push((k, -d));
        }
    }
    let dist = |a: usize, b: usize| {
        let (u, v) = (centers[a], centers[b]);
        (u[0] - v[0]).hypot(u[1] - v[1])
    };
    let cost: Vec<Vec<f64>> = sources
        .iter()
        .map(|&(s, _)| sinks.iter().map(|&(t, _)| dist(s, t)).collect())
        .collect();
    let supply: Vec<f64> = sources.iter().map(|s| s.1).collect();
    let demand: Vec<f64> = sinks.iter().map(|t| t.1).collect();
    Ok(transport_cost(&supply, &demand, &cost))
}

/// Minimum-cost transportation by successive shortest paths with Johnson
/// potentials and dense Dijkstra. Total supply and demand are assumed equal
/// up to rounding; leftover mass below `1e-15` is ignored.
pub fn transport_cost(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> f64 {
    const EPS: f64 = 1e-15;
    let (ns, nt) = (supply.len(), demand.len());
    if ns == 0 || nt == 0 {
        return 0.0;
    }
    let mut sup = supply.to_vec();
    let mut dem = demand.to_vec();
    let mut flow = vec![vec![0.0; nt]; ns];
    // Nodes 0..ns are sources, ns..ns+nt sinks.
    let n = ns + nt;
    let mut pot = vec![0.0; n];
    let mut dist = vec![0.0; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    loop {
        if sup.iter().all(|&s| s <= EPS) || dem.iter().all(|&d| d <= EPS) {
            break;
        }
        dist.fill(f64::INFINITY);
        prev.fill(usize::MAX);
        done.fill(false);
        for i in 0..ns {
            if sup[i] > EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..n {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < ns {
                for j in 0..nt {
                    let v = ns + j;
                    if done[v] {
                        continue;
                    }
                    let nd = dist[u] + cost[u][j] + pot[u] - pot[v];
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - ns;
                for i in 0..ns {
                    // Sources with supply are roots at distance zero.
                    if !done[i] && sup[i] <= EPS && flow[i][j] > EPS {
                        let nd = dist[u] - cost[i][j] + pot[u] - pot[i];
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        let Some(t) = (0..nt)
            .filter(|&j| dem[j] > EPS && dist[ns + j].is_finite())
            .min_by(|&a, &b| dist[ns + a].total_cmp(&dist[ns + b]))
        else {
            break;
        };
        let t_node = ns + t;
        let dt = dist[t_node];
        for v in 0..n {
            pot[v] += dist[v].min(dt);
        }
        // Bottleneck along the path.
        let mut amount = dem[t];
        let mut v = t_node;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= ns {
                amount = amount.min(flow[v][u - ns]);
            }
            v = u;
        }
        amount = amount.min(sup[v]);
        let mut v = t_node;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < ns {
                flow[u][v - ns] += amount;
            } else {
                flow[v][u - ns] -= amount;
            }
            v = u;
        }
        sup[v] -= amount;
        dem[t] -= amount;
    }
    flow.iter()
        .zip(cost)
        .flat_map(|(f, c)| f.iter().zip(c).map(|(a, b)| a * b))
        .sum()
}

/// Window counters for the acceptance ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AcceptanceWindow {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceWindow {
    pub fn record(&mut self, accepted: u64, proposed: u64) {
        self.accepted += accepted;
        self.proposed += proposed;
    }

    pub fn ratio(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Returns the current ratio and resets the counters.
    pub fn take(&mut self) -> f64 {
        let r = self.ratio();
        *self = Self::default();
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioner::{Conditioner, ConditionerKind, ConditionerOptions};
    use crate::fourier::{FourierProposal, ParamVector, PROB_FLOOR};
    use crate::multistage::Stage;
    use crate::targets::TargetSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hist<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    }

    #[test]
    fn ce_of_matching_uniform_is_log_cells() {
        let p = vec![0.25; 4];
        assert!((cross_entropy_tables(&p, &p, PROB_FLOOR).unwrap() - 4f64.ln()).abs() < 1e-15);
        let point = [0.0, 1.0, 0.0, 0.0];
        let q = [0.1, 0.2, 0.3, 0.4];
        assert!((cross_entropy_tables(&point, &q, PROB_FLOOR).unwrap() + 0.2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gibbs_inequality_on_random_proposals() {
        let t = TargetDensity::new(TargetSpec::Bimodal { means: [-0.4, 0.4], sigmas: [0.1, 0.2], weights: [0.5, 0.5] }, vec![6]).unwrap();
        let p = t.normalized_table().unwrap();
        let entropy: f64 = -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let s = MultistageSampler::single(&FourierProposal::new(6, ParamVector::random(3, &mut rng)).unwrap());
            assert!(cross_entropy_exact(&t, &s).unwrap() >= entropy - 1e-12);
        }
    }

    #[test]
    fn mc_cross_entropy_matches_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let t = TargetDensity::new(TargetSpec::Gaussian { mean: 0.1, sigma: 0.3 }, vec![6]).unwrap();
        let s = MultistageSampler::single(&FourierProposal::new(6, ParamVector::random(3, &mut rng)).unwrap());
        let exact = cross_entropy_exact(&t, &s).unwrap();
        let (est, se) = cross_entropy_mc(&t, &s, 200_000, &mut rng).unwrap();
        assert!((est - exact).abs() < 3.0 * se, "{est} ± {se} vs {exact}");
    }

    #[test]
    fn mc_cross_entropy_error_shrinks_like_inverse_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = TargetDensity::new(TargetSpec::Triangular { center: 0.0, half_width: 0.8 }, vec![5]).unwrap();
        let s = MultistageSampler::single(&FourierProposal::new(5, ParamVector::random(2, &mut rng)).unwrap());
        let (_, se_small) = cross_entropy_mc(&t, &s, 4_000, &mut rng).unwrap();
        let (_, se_large) = cross_entropy_mc(&t, &s, 64_000, &mut rng).unwrap();
        let ratio = se_small / se_large;
        assert!((ratio - 4.0).abs() < 0.6, "{ratio}");
    }

    #[test]
    fn exact_ce_on_two_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = ConditionerOptions { gaussian_init: true, ..Default::default() };
        let s = MultistageSampler::new(vec![
            Stage { n_qubits: 4, conditioner: Conditioner::new(ConditionerKind::Id, 2, &[], &opts, &mut rng).unwrap() },
            Stage { n_qubits: 4, conditioner: Conditioner::new(ConditionerKind::Lblr, 2, &[4], &opts, &mut rng).unwrap() },
        ])
        .unwrap();
        let t = TargetDensity::new(TargetSpec::Ring { radius: 0.5, width: 0.2 }, vec![4, 4]).unwrap();
        let p = t.normalized_table().unwrap();
        let mut direct = 0.0;
        for a in 0..16u128 {
            for b in 0..16u128 {
                direct -= p[(a * 16 + b) as usize] * s.joint_prob(&[a, b]).unwrap().max(s.prob_floor()).ln();
            }
        }
        assert!((cross_entropy_exact(&t, &s).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_1d_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_hist(64, &mut rng);
        assert_eq!(wasserstein_1d(&p, &p).unwrap(), 0.0);
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        a[0] = 1.0;
        b[15] = 1.0;
        assert!((wasserstein_1d(&a, &b).unwrap() - 2.0).abs() < 1e-15);
        assert!(wasserstein_1d(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn wasserstein_2d_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_hist(64, &mut rng);
        assert!(wasserstein_2d(&p, &p, [8, 8], 1).unwrap().abs() < 1e-15);
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        a[3 * 8 + 3] = 1.0;
        b[3 * 8 + 4] = 1.0;
        assert!((wasserstein_2d(&a, &b, [8, 8], 1).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        let big = vec![1.0 / (256.0 * 256.0); 256 * 256];
        assert!(matches!(wasserstein_2d(&big, &big, [256, 256], 2), Err(SlmcError::Budget(_))));
        assert!(wasserstein_2d(&big, &big, [256, 256], 4).is_ok());
    }

    #[test]
    fn coarsened_point_masses_use_block_centers() {
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        a[0] = 1.0;
        b[63] = 1.0;
        // 4x4 blocks of an 8x8 grid: centers at x̄ = ±(1 − 1.5·2/7).
        let c = 1.0 - 3.0 / 7.0;
        let want = 2.0 * c * 2f64.sqrt();
        assert!((wasserstein_2d(&a, &b, [8, 8], 4).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn transport_handles_split_mass() {
        // One source of mass 1 split between two sinks at distance 1 and 3.
        let c = transport_cost(&[1.0], &[0.25, 0.75], &[vec![1.0, 3.0]]);
        assert!((c - 2.5).abs() < 1e-15);
    }

    #[test]
    fn metric_row_csv_round_trip() {
        let row = MetricRow { step: 100, cross_entropy: 4.123456789012345, wasserstein: None, acceptance_ratio: 0.5 };
        let line = row.to_string();
        assert_eq!(line, "100,4.123456789012345,,0.5");
        assert_eq!(line.parse::<MetricRow>().unwrap(), row);
        let row = MetricRow { wasserstein: Some(0.01), ..row };
        assert_eq!(row.to_string().parse::<MetricRow>().unwrap(), row);
    }

    #[test]
    fn acceptance_window_resets() {
        let mut w = AcceptanceWindow::default();
        w.record(3, 4);
        w.record(1, 4);
        assert_eq!(w.take(), 0.5);
        assert_eq!(w.ratio(), 0.0);
    }

    proptest! {
        #[test]
        fn wasserstein_1d_is_a_metric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_hist(32, &mut rng), random_hist(32, &mut rng), random_hist(32, &mut rng));
            let ab = wasserstein_1d(&a, &b).unwrap();
            prop_assert!((ab - wasserstein_1d(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!(ab <= wasserstein_1d(&a, &c).unwrap() + wasserstein_1d(&c, &b).unwrap() + 1e-9);
        }

        #[test]
        fn wasserstein_2d_is_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_hist(36, &mut rng), random_hist(36, &mut rng));
            let ab = wasserstein_2d(&a, &b, [6, 6], 1).unwrap();
            prop_assert!((ab - wasserstein_2d(&b, &a, [6, 6], 1).unwrap()).abs() < 1e-9);
        }
    }
}
