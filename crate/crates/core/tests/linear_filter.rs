use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqgp::linear_filter::{laplace_1d, Likelihood};
use seqgp::{Dynamics, FeatureMap, GaussianBelief, Kernel};

fn stream(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let ys = xs
        .iter()
        .map(|x| x.sin() + 0.2 * rng.random_range(-1.0..1.0))
        .collect();
    (xs, ys)
}

fn maps() -> Vec<FeatureMap> {
    let se = Kernel::squared_exponential(1.3, 0.9).unwrap();
    let m32 = Kernel::matern32(0.8, 1.2).unwrap();
    vec![
        FeatureMap::sample_rff(&se, 40, 1, 11).unwrap(),
        FeatureMap::sample_rff(&m32, 200, 1, 12).unwrap(),
        FeatureMap::hsgp(&m32, 30, 6.0).unwrap(),
    ]
}

fn features(map: &FeatureMap, xs: &[f64]) -> DMatrix<f64> {
    let rows: Vec<_> = xs
        .iter()
        .map(|x| map.featurize(&[*x]).unwrap().transpose())
        .collect();
    DMatrix::from_rows(&rows)
}

fn filter(map: &FeatureMap, xs: &[f64], ys: &[f64], noise: f64) -> (GaussianBelief, f64) {
    let mut b = GaussianBelief::prior(map.dim(), map.prior_variance()).unwrap();
    let mut ll = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        ll += b
            .update_step(&map.featurize(&[*x]).unwrap(), *y, noise)
            .unwrap();
    }
    (b, ll)
}

/// Function-space posterior under the kernel `σ² φ(x)ᵀφ(x′)`, computed with
/// plain dense algebra.
fn degenerate_gp(
    map: &FeatureMap,
    xs: &[f64],
    ys: &[f64],
    noise: f64,
    xq: &[f64],
) -> (DVector<f64>, DVector<f64>, f64) {
    let phi = features(map, xs);
    let phiq = features(map, xq);
    let s2 = map.prior_variance();
    let n = xs.len();
    let k = &phi * phi.transpose() * s2 + DMatrix::identity(n, n) * noise;
    let kq = &phiq * phi.transpose() * s2;
    let kqq = &phiq * phiq.transpose() * s2;
    let y = DVector::from_column_slice(ys);
    let lu = k.clone().lu();
    let alpha = lu.solve(&y).unwrap();
    let mean = &kq * &alpha;
    let var = (kqq - &kq * lu.solve(&kq.transpose()).unwrap()).diagonal();
    let logdet = lu.determinant().ln();
    let lml = -0.5 * (y.dot(&alpha) + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln());
    (mean, var, lml)
}

#[test]
fn static_filter_equals_degenerate_kernel_gp() {
    let (xs, ys) = stream(100, 1);
    let xq: Vec<f64> = (0..25).map(|i| -4.5 + 0.37 * i as f64).collect();
    for map in maps() {
        let (b, ll) = filter(&map, &xs, &ys, 0.05);
        let (mean, var, lml) = degenerate_gp(&map, &xs, &ys, 0.05, &xq);
        for (i, x) in xq.iter().enumerate() {
            let (m, v) = b.predict_f(&map.featurize(&[*x]).unwrap()).unwrap();
            assert!((m - mean[i]).abs() < 1e-6, "mean {m} vs {}", mean[i]);
            assert!((v - var[i]).abs() < 1e-6, "var {v} vs {}", var[i]);
        }
        assert!((ll - lml).abs() < 1e-6, "{ll} vs {lml}");
    }
}

#[test]
fn static_filter_equals_batch_regression() {
    let (xs, ys) = stream(50, 2);
    let map = &maps()[0];
    let noise = 0.1;
    let (b, _) = filter(map, &xs, &ys, noise);
    let phi = features(map, &xs);
    let f = map.dim();
    let precision = phi.transpose() * &phi / noise + DMatrix::identity(f, f) / map.prior_variance();
    let cov = precision.try_inverse().unwrap();
    let mean = &cov * phi.transpose() * DVector::from_column_slice(&ys) / noise;
    assert!((b.mean() - mean).amax() < 1e-8);
    assert!((b.covariance() - cov).amax() < 1e-8);
}

#[test]
fn static_filter_is_order_invariant() {
    let (xs, ys) = stream(80, 3);
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in (1..idx.len()).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    let xs2: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let ys2: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    for map in maps() {
        let (a, _) = filter(&map, &xs, &ys, 0.1);
        let (b, _) = filter(&map, &xs2, &ys2, 0.1);
        assert!((a.mean() - b.mean()).amax() < 1e-8);
        assert!((a.covariance() - b.covariance()).amax() < 1e-8);
    }
}

#[test]
fn low_rank_and_dense_paths_agree() {
    let (xs, ys) = stream(30, 4);
    let map = &maps()[1];
    let mut lr = GaussianBelief::prior(map.dim(), map.prior_variance()).unwrap();
    let p0 = lr.covariance();
    let mut dense = GaussianBelief::from_moments(DVector::zeros(map.dim()), p0).unwrap();
    let dyns = [
        Dynamics::RandomWalk { sigma_rw2: 0.01 },
        Dynamics::BackToPrior {
            lambda: 0.97,
            prior_variance: map.prior_variance(),
        },
        Dynamics::General {
            a: 0.99,
            u: DVector::from_element(map.dim(), 0.001),
            c: DMatrix::identity(map.dim(), map.dim()) * 0.002,
        },
    ];
    for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
        let d = &dyns[i % 3];
        lr.predict_step(d).unwrap();
        dense.predict_step(d).unwrap();
        let phi = map.featurize(&[*x]).unwrap();
        let a = lr.update_step(&phi, *y, 0.1).unwrap();
        let b = dense.update_step(&phi, *y, 0.1).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
    assert!(lr.low_rank().is_some());
    assert!((lr.mean() - dense.mean()).amax() < 1e-10);
    assert!((lr.covariance() - dense.covariance()).amax() < 1e-10);
}

fn run_dynamics(map: &FeatureMap, d: &Dynamics, xs: &[f64], ys: &[f64]) -> GaussianBelief {
    let mut b = GaussianBelief::prior(map.dim(), map.prior_variance()).unwrap();
    for (x, y) in xs.iter().zip(ys) {
        b.predict_step(d).unwrap();
        b.update_step(&map.featurize(&[*x]).unwrap(), *y, 0.1)
            .unwrap();
    }
    b
}

#[test]
fn dynamics_identities_hold_exactly() {
    let (xs, ys) = stream(60, 5);
    for map in maps() {
        let f = map.dim();
        let stat = run_dynamics(&map, &Dynamics::Static, &xs, &ys);
        let b2p1 = run_dynamics(
            &map,
            &Dynamics::BackToPrior {
                lambda: 1.0,
                prior_variance: map.prior_variance(),
            },
            &xs,
            &ys,
        );
        assert!((stat.mean() - b2p1.mean()).amax() <= 1e-12);
        assert!((stat.covariance() - b2p1.covariance()).amax() <= 1e-12);

        let rw = run_dynamics(&map, &Dynamics::RandomWalk { sigma_rw2: 0.02 }, &xs, &ys);
        let gen = run_dynamics(
            &map,
            &Dynamics::General {
                a: 1.0,
                u: DVector::zeros(f),
                c: DMatrix::identity(f, f) * 0.02,
            },
            &xs,
            &ys,
        );
        assert!((rw.mean() - gen.mean()).amax() <= 1e-12);
        assert!((rw.covariance() - gen.covariance()).amax() <= 1e-12);
    }
}

#[test]
fn forgetting_contracts_geometrically_to_prior() {
    let (xs, ys) = stream(40, 6);
    let map = &maps()[0];
    let mut b = GaussianBelief::prior(map.dim(), map.prior_variance()).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        b.update_step(&map.featurize(&[*x]).unwrap(), *y, 0.1)
            .unwrap();
    }
    let lambda: f64 = 0.8;
    let d = Dynamics::BackToPrior {
        lambda,
        prior_variance: map.prior_variance(),
    };
    let prior = DMatrix::identity(map.dim(), map.dim()) * map.prior_variance();
    let start = b.mean().norm();
    let start_gap = (b.covariance() - &prior).norm();
    // The covariance gap halves every ln 2 / ln(1/λ) steps; the mean, scaled
    // by √λ per step, takes twice as long.
    let half_life = (2f64).ln() / (1.0 / lambda).ln();
    for step in 1..=40 {
        b.predict_step(&d).unwrap();
        let k = step as f64;
        let gap = (b.covariance() - &prior).norm();
        assert!((gap - start_gap * 0.5f64.powf(k / half_life)).abs() < 1e-10 * start_gap);
        let expected = start * 0.5f64.powf(k / (2.0 * half_life));
        assert!((b.mean().norm() - expected).abs() < 1e-10 * start);
    }
}

#[test]
fn joseph_update_stays_symmetric_psd_over_long_streams() {
    let map =
        FeatureMap::sample_rff(&Kernel::squared_exponential(1.0, 0.5).unwrap(), 16, 1, 7).unwrap();
    let mut b = GaussianBelief::prior(map.dim(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100_000 {
        let x: f64 = rng.random_range(-3.0..3.0);
        b.update_step(&map.featurize(&[x]).unwrap(), x.sin(), 1e-4)
            .unwrap();
    }
    let p = b.covariance();
    assert_eq!(p, p.transpose());
    let bound = -1e-9 * p.trace() / map.dim() as f64;
    assert!(p.symmetric_eigenvalues().min() >= bound);
}

/// Posterior mode and variance of f by brute-force quadrature on 10⁴ points.
fn quadrature(m0: f64, v0: f64, y: f64, lik: Likelihood) -> (f64, f64, f64) {
    let sd = v0.sqrt();
    let (lo, hi) = (m0 - 10.0 * sd, m0 + 10.0 * sd + 5.0);
    let n = 10_000;
    let h = (hi - lo) / (n - 1) as f64;
    let logp = |f: f64| lik.derivatives(y, f).0 - (f - m0).powi(2) / (2.0 * v0);
    let grid: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    let lp: Vec<f64> = grid.iter().map(|&f| logp(f)).collect();
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lp.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    let mean: f64 = grid.iter().zip(&w).map(|(f, w)| f * w).sum::<f64>() / z;
    let var: f64 = grid
        .iter()
        .zip(&w)
        .map(|(f, w)| (f - mean).powi(2) * w)
        .sum::<f64>()
        / z;
    // Refine the grid argmax with golden-section search on the log density.
    let i = lp
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(n - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if logp(c) > logp(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (0.5 * (a + b), mean, var)
}

#[test]
fn laplace_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let m0: f64 = rng.random_range(-2.0..2.0);
        let v0 = rng.random_range(0.05..1.0);
        for lik in [Likelihood::BernoulliLogit, Likelihood::PoissonLog] {
            let y = match lik {
                Likelihood::BernoulliLogit => f64::from(rng.random_bool(0.5) as u8),
                Likelihood::PoissonLog => m0.exp().round(),
            };
            let lap = laplace_1d(m0, v0, y, lik).unwrap();
            let (mode, mean, var) = quadrature(m0, v0, y, lik);
            assert!(
                (lap.mode - mode).abs() < 1e-6,
                "{lik:?} mode {} vs {mode}",
                lap.mode
            );
            assert!((lap.variance - var).abs() < 0.05 * var);
            assert!(var < v0);
            if lik == Likelihood::PoissonLog {
                assert!((mean - m0).abs() < v0.sqrt());
            }
        }
    }
}
