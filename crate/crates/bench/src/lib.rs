//! Deterministic workloads shared by the benchmarks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seqgp::kernels::points_1d;

/// Irregular timestamps with gaps in `[0.01, 0.3)` and a noisy sinusoid.
pub fn time_series(n: usize, seed: u64) -> (Vec<f64>, Vec<Option<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t: f64 = 0.0;
    let mut ts = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        t += rng.random_range(0.01..0.3);
        ts.push(t);
        ys.push(Some(
            (1.5 * t).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal),
        ));
    }
    (ts, ys)
}

/// Inputs uniform on `[−5, 5]` with `y = sin x + 0.3 ε`.
pub fn regression(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let ys = xs
        .iter()
        .map(|x| x.sin() + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (points_1d(&xs), ys)
}

/// Features for every input of a regression workload.
pub fn featurize_all(map: &seqgp::FeatureMap, xs: &[Vec<f64>]) -> Vec<DVector<f64>> {
    xs.iter()
        .map(|x| map.featurize(x).expect("inputs match the map"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_are_deterministic() {
        assert_eq!(time_series(50, 3), time_series(50, 3));
        assert_eq!(regression(50, 3), regression(50, 3));
        let (ts, _) = time_series(100, 1);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }
}
