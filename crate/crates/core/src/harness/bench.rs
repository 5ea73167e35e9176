//! Per-sample cost of the adaptive sampler against a full-table baseline
//! (inverse FFT of the zero-padded parameters, then inverse-CDF lookup).

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fourier::{FourierProposal, ParamVector, TableSampler};

/// Largest register the baseline is run on.
pub const BASELINE_MAX_QUBITS: u32 = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub n_qubits: u32,
    pub m_qubits: u32,
    pub adaptive_us_per_sample: f64,
    /// Table construction time; `None` above the baseline cap.
    pub table_build_ms: Option<f64>,
    pub table_us_per_sample: Option<f64>,
    /// Last adaptive draw, as evidence of a valid `N`-bit outcome.
    pub last_sample: u128,
}

/// Times `draws` samples per register width.
pub fn bench(qubits: &[u32], m_qubits: u32, draws: usize, seed: u64) -> Result<Vec<BenchRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = draws.max(1);
    qubits
        .iter()
        .map(|&n| {
            let m = m_qubits.min(n);
            let p = FourierProposal::new(n, ParamVector::random(m, &mut rng))?;
            let start = Instant::now();
            let mut last = 0;
            for _ in 0..draws {
                last = p.sample(&mut rng);
            }
            let adaptive = start.elapsed().as_secs_f64() * 1e6 / draws as f64;
            let (build, per) = if n <= BASELINE_MAX_QUBITS {
                let start = Instant::now();
                let sampler = TableSampler::new(&p.full_table()?)?;
                let build = start.elapsed().as_secs_f64() * 1e3;
                let start = Instant::now();
                let mut sink = 0usize;
                for _ in 0..draws {
                    sink ^= sampler.sample(&mut rng);
                }
                std::hint::black_box(sink);
                (Some(build), Some(start.elapsed().as_secs_f64() * 1e6 / draws as f64))
            } else {
                (None, None)
            };
            Ok(BenchRow {
                n_qubits: n,
                m_qubits: m,
                adaptive_us_per_sample: adaptive,
                table_build_ms: build,
                table_us_per_sample: per,
                last_sample: last,
            })
        })
        .collect()
}

pub fn format_report(rows: &[BenchRow]) -> String {
    let mut out = String::from("N    M  adaptive_us/sample  table_build_ms  table_us/sample\n");
    for r in rows {
        let opt = |v: Option<f64>| v.map_or_else(|| "infeasible".to_string(), |x| format!("{x:.3}"));
        out.push_str(&format!(
            "{:<4} {:<2} {:>18.3}  {:>14}  {:>15}\n",
            r.n_qubits,
            r.m_qubits,
            r.adaptive_us_per_sample,
            opt(r.table_build_ms),
            opt(r.table_us_per_sample)
        ));
    }
    out
}
