//! Shared fixtures for the criterion benches.

use icea_core::datasets::{generate, normalize_by_train, split, Dataset, GeneratorSpec, Rule};

/// Normalized Friedman-1 train/test pair, `n` rows each.
pub fn friedman1(n: usize, seed: u64) -> (Dataset, Dataset) {
    let spec = GeneratorSpec { rule: Rule::Friedman1, n: 2 * n, noise_sd: 0.0, seed, normalize_targets: false };
    let ds = generate(&spec).expect("valid spec");
    let (train, test) = split(&ds, n, n, seed).expect("enough rows");
    let (train, test, _) = normalize_by_train(train, test);
    (train, test)
}

/// Deterministic residual-like vector without pulling in an RNG.
pub fn wave(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i as f64) * 0.37).sin() + 0.1 * ((i * 7919) % 101) as f64 / 101.0).collect()
}
