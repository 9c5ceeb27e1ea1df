//! Shared fixtures for the pipeline benchmarks.

use deeperbind_core::{
    encode_set, generate_synthetic, normalize_self_fit, EncodedSet, NormKind, SyntheticSpec,
    Tensor,
};

/// Motif whose position t favors base t mod 4.
pub fn planted_pwm(width: usize) -> Tensor {
    let mut data = vec![0.0; 4 * width];
    for t in 0..width {
        data[(t % 4) * width + t] = 4.0;
    }
    Tensor::new(vec![4, width], data).unwrap()
}

/// Normalized, encoded synthetic probes for timing runs.
pub fn encoded_probes(count: usize, length: usize, seed: u64) -> EncodedSet {
    let spec = SyntheticSpec {
        pwm: planted_pwm(8),
        probe_count: count,
        probe_length: length,
        noise_sd: 0.5,
        planted_fraction: 0.5,
        seed,
    };
    let array = generate_synthetic(&spec).unwrap();
    let (normalized, _) = normalize_self_fit(&array, NormKind::ZScore).unwrap();
    encode_set(&normalized).unwrap()
}
