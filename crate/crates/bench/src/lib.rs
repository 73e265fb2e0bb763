//! Shared fixtures for the benchmarks.

use gwasms::simulate::{simulate_trait, SyntheticGenotypes};
use gwasms::{Dataset, SimulationConfig};

/// `n` individuals, `p` independent SNPs and a trait driven by `k` of them
/// (spread evenly, effect 0.5, unit noise).
pub fn dataset(n: usize, p: usize, k: usize, seed: u64) -> Dataset {
    let g = SyntheticGenotypes {
        n,
        p,
        maf_min: 0.1,
        maf_max: 0.5,
    }
    .generate(seed)
    .expect("valid MAF range");
    let causal: Vec<usize> = (0..k).map(|l| l * p / k.max(1)).collect();
    let config = SimulationConfig::new(causal, vec![0.5; k], 1, seed);
    let y = simulate_trait(&g, &config, 0).expect("valid configuration");
    Dataset::from_genotypes(g).with_trait(y).expect("matching lengths")
}
