#![allow(dead_code)]

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simulst_latency::{simulate, ComputeModel, PolicySpec, SimulationOutcome, Trace, ValidTrace};

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn real(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn seed(&mut self) -> u64 {
        self.0.next_u64()
    }
}

pub struct SimCase {
    pub k: usize,
    pub n: usize,
    pub compute: ComputeModel,
    pub outcome: SimulationOutcome,
}

/// Seeded simulator suite: k in 1..=8, n in 1..=5, 4..=400 segments of
/// 100..=2000 ms, alternating constant and uniform compute.
pub fn simulator_suite(count: usize, seed: u64) -> Vec<SimCase> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|i| {
            let k = rng.int(1, 8);
            let n = rng.int(1, 5);
            let segments = rng.int(k.max(4), 400);
            let durations: Vec<f64> = (0..segments)
                .map(|_| {
                    if rng.int(0, 1) == 0 {
                        rng.int(100, 2000) as f64
                    } else {
                        rng.real(100.0, 2000.0)
                    }
                })
                .collect();
            let tail_tokens = rng.int(0, 6);
            let compute = if i % 2 == 0 {
                ComputeModel::Constant {
                    ms: rng.int(0, 1200) as f64,
                }
            } else {
                let lo = rng.real(0.0, 600.0);
                let hi = lo + rng.real(0.0, 900.0);
                ComputeModel::SeededUniform {
                    lo_ms: lo,
                    hi_ms: hi,
                    seed: rng.seed(),
                }
            };
            let policy = PolicySpec::WaitKStrideN { k, n, tail_tokens };
            let outcome = simulate(&durations, &policy, &compute)
                .expect("suite parameters are valid")
                .with_id(i.to_string());
            SimCase {
                k,
                n,
                compute,
                outcome,
            }
        })
        .collect()
}

/// Arbitrary block shapes (including silent segments and bursts) that no
/// wait-k policy would produce.
pub fn random_trace(rng: &mut Rng, id: usize) -> ValidTrace {
    let segments = rng.int(1, 60);
    let durations: Vec<f64> = (0..segments).map(|_| rng.real(10.0, 2000.0)).collect();
    let mut acc = 0.0;
    let mut c = 0.0;
    let mut tokens = Vec::new();
    for d in &durations {
        acc += d;
        for _ in 0..rng.int(0, 4) {
            c += if rng.int(0, 4) == 0 {
                0.0
            } else {
                rng.real(0.0, 1500.0)
            };
            tokens.push((acc, c));
        }
    }
    let ref_len = rng.int(1, tokens.len().max(1) * 2);
    Trace::from_parts(id.to_string(), &durations, &tokens, ref_len)
        .unwrap()
        .validate()
        .unwrap()
}
