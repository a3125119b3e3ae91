//! Dense linear-algebra helpers shared by the inference engines.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter ladder tried after a plain factorization fails.
const JITTER_LADDER: [f64; 4] = [1e-10, 1e-9, 1e-8, 1e-7];

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factorization with jitter escalation.
///
/// Tries the matrix as given, then adds `ε · mean(diag)` to the diagonal for
/// ε in 1e-10, 1e-9, 1e-8, 1e-7. Returns the factor and the jitter actually
/// added.
pub fn cholesky_escalating(a: &DMatrix<f64>) -> Result<(Chol, f64)> {
    if let Some(c) = a.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let n = a.nrows();
    let scale = (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += jitter;
        }
        if let Some(c) = b.cholesky() {
            return Ok((c, jitter));
        }
    }
    Err(Error::numerical(format!(
        "Cholesky failed after jitter escalation to 1e-7; {}",
        condition_diagnostic(a)
    )))
}

fn condition_diagnostic(a: &DMatrix<f64>) -> String {
    if a.iter().any(|v| !v.is_finite()) {
        return "matrix has non-finite entries".to_string();
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 {
        format!("min eigenvalue {lo:.3e}, max eigenvalue {hi:.3e}")
    } else {
        format!("condition number {:.3e}", hi / lo)
    }
}

/// log|A| from its Cholesky factor.
pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
}

/// Forces exact symmetry by averaging with the transpose.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Symmetric rank-one Joseph-form correction `P ← P − k vᵀ − v kᵀ + s k kᵀ`
/// with `k = v / s`, written entrywise so the result is exactly symmetric.
pub(crate) fn joseph_rank_one(p: &mut DMatrix<f64>, v: &DVector<f64>, s: f64) {
    let n = p.nrows();
    let k: Vec<f64> = v.iter().map(|x| x / s).collect();
    for j in 0..n {
        let (kj, vj) = (k[j], v[j]);
        for i in j..n {
            let upd = p[(i, j)] - k[i] * vj - v[i] * kj + s * k[i] * kj;
            p[(i, j)] = upd;
            p[(j, i)] = upd;
        }
    }
}

/// log N(y | mean, var) for a scalar.
pub fn log_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + r * r / var)
}

/// Diagonal Padé order of the matrix exponential.
const PADE_ORDER: usize = 9;
/// 1-norm bound after scaling; well inside the order-9 accuracy region.
const PADE_THETA: f64 = 1.0;

/// Matrix exponential by scaling and squaring with a fixed-order diagonal
/// Padé approximant. Adds the floating-point operation count to `flops`.
pub fn expm(a: &DMatrix<f64>, flops: &mut u64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 1 {
        *flops += 1;
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let n3 = (n * n * n) as u64;
    let norm = a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let squarings = if norm > PADE_THETA {
        (norm / PADE_THETA).log2().ceil() as u32
    } else {
        0
    };
    let x = a / 2f64.powi(squarings as i32);

    let coeffs = pade_coefficients(PADE_ORDER);
    let eye = DMatrix::<f64>::identity(n, n);
    let mut num = &eye * coeffs[0];
    let mut den = &eye * coeffs[0];
    let mut power = eye;
    for (j, c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &x;
        num += &power * *c;
        if j % 2 == 0 {
            den += &power * *c;
        } else {
            den -= &power * *c;
        }
    }
    *flops += 2 * n3 * (PADE_ORDER as u64 - 1);
    let mut r = den
        .lu()
        .solve(&num)
        .expect("Padé denominator is nonsingular for scaled arguments");
    *flops += 2 * n3 + 2 * n3 / 3;
    for _ in 0..squarings {
        r = &r * &r;
    }
    *flops += 2 * n3 * squarings as u64;
    r
}

fn pade_coefficients(m: usize) -> Vec<f64> {
    // c_j = (2m − j)! m! / ((2m)! j! (m − j)!), computed by the ratio recursion.
    let mut c = vec![1.0];
    for j in 1..=m {
        let prev = c[j - 1];
        c.push(prev * (m + 1 - j) as f64 / (j as f64 * (2 * m + 1 - j) as f64));
    }
    c
}

/// Solves `F P + P Fᵀ + Q = 0` by vectorization. Requires a Hurwitz `F`.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if !is_hurwitz(f) {
        return Err(Error::Model(
            "drift matrix is not Hurwitz; no stationary covariance exists".to_string(),
        ));
    }
    // vec(F P) = (I ⊗ F) vec(P), vec(P Fᵀ) = (F ⊗ I) vec(P) in column-major order.
    let eye = DMatrix::<f64>::identity(n, n);
    let system = eye.kronecker(f) + f.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("Lyapunov system is singular"))?;
    let mut p = DMatrix::from_column_slice(n, n, sol.as_slice());
    symmetrize(&mut p);
    Ok(p)
}

pub fn is_hurwitz(f: &DMatrix<f64>) -> bool {
    if f.nrows() == 1 {
        return f[(0, 0)] < 0.0;
    }
    f.clone()
        .schur()
        .complex_eigenvalues()
        .iter()
        .all(|e| e.re < 0.0)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pade_coefficients_match_factorial_formula() {
        fn fact(n: usize) -> f64 {
            (1..=n).map(|v| v as f64).product()
        }
        let m = PADE_ORDER;
        let c = pade_coefficients(m);
        for (j, cj) in c.iter().enumerate() {
            let expected = fact(2 * m - j) * fact(m) / (fact(2 * m) * fact(j) * fact(m - j));
            assert_relative_eq!(*cj, expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn expm_agrees_with_reference_implementation() {
        let mut flops = 0;
        for scale in [0.01, 0.3, 1.0, 7.0, 40.0] {
            let a =
                DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, -0.5, -0.3, 1.0, 0.1, 0.0, -2.0])
                    * scale;
            let ours = expm(&a, &mut flops);
            let reference = a.exp();
            for (x, y) in ours.iter().zip(reference.iter()) {
                assert!(
                    (x - y).abs() <= 1e-12 * (1.0 + y.abs()),
                    "{scale}: {x} vs {y}"
                );
            }
        }
        assert!(flops > 0);
    }

    #[test]
    fn expm_of_rotation_generator() {
        let b = 1.3;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -b, b, 0.0]);
        let r = expm(&a, &mut 0);
        assert_relative_eq!(r[(0, 0)], b.cos(), epsilon = 1e-14);
        assert_relative_eq!(r[(1, 0)], b.sin(), epsilon = 1e-14);
        let zero = expm(&DMatrix::zeros(2, 2), &mut 0);
        assert_eq!(zero, DMatrix::identity(2, 2));
    }

    #[test]
    fn lyapunov_residual_vanishes() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -4.0]);
        let q = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 3.0]);
        let p = solve_lyapunov(&f, &q).unwrap();
        let resid = &f * &p + &p * f.transpose() + &q;
        assert!(resid.amax() < 1e-12);
    }

    #[test]
    fn lyapunov_rejects_unstable_drift() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let q = DMatrix::identity(2, 2);
        assert!(matches!(solve_lyapunov(&f, &q), Err(Error::Model(_))));
    }

    #[test]
    fn jitter_escalation_rescues_singular_gram() {
        let a = DMatrix::from_element(3, 3, 1.0);
        let (_, jitter) = cholesky_escalating(&a).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-7);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = cholesky_escalating(&bad).unwrap_err();
        assert!(err.to_string().contains("eigenvalue"));
    }

    #[test]
    fn joseph_rank_one_matches_short_form() {
        let mut p = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
        let phi = DVector::from_vec(vec![0.5, -1.0, 0.25]);
        let v = &p * &phi;
        let s = phi.dot(&v) + 0.4;
        let short = &p - &v * v.transpose() / s;
        joseph_rank_one(&mut p, &v, s);
        assert!((p.clone() - short).amax() < 1e-14);
        assert_eq!(p.clone(), p.transpose());
    }
}
