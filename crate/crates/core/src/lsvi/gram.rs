//! Regularised Gram matrix `Lambda = I + sum phi phi^T` with a maintained inverse.
//!
//! The inverse follows rank-one Sherman-Morrison updates and is recomputed
//! from a Cholesky factorisation every [`REFACTOR_INTERVAL`] updates, or
//! sooner if `Lambda * Lambda^-1` drifts from the identity by more than
//! [`RESIDUAL_TOL`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const REFACTOR_INTERVAL: usize = 64;
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Quadratic forms below `-QUAD_TOL` mean the matrix is not positive definite.
pub const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct GramMatrix {
    dim: usize,
    lambda: Vec<f64>,
    inv: Vec<f64>,
    since_refactor: usize,
    refactors: usize,
    // scratch for Lambda^-1 phi
    work: Vec<f64>,
}

impl GramMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut lambda = vec![0.0; dim * dim];
        for i in 0..dim {
            lambda[i * dim + i] = 1.0;
        }
        Self {
            dim,
            inv: lambda.clone(),
            lambda,
            since_refactor: 0,
            refactors: 0,
            work: vec![0.0; dim],
        }
    }

    /// From an explicit symmetric positive-definite matrix (row-major).
    pub fn from_matrix(dim: usize, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != dim * dim {
            return Err(Error::Numeric(format!("expected {dim}x{dim} matrix")));
        }
        let mut g = Self {
            dim,
            inv: vec![0.0; dim * dim],
            lambda,
            since_refactor: 0,
            refactors: 0,
            work: vec![0.0; dim],
        };
        g.refactor()?;
        g.refactors = 0;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.lambda
    }

    pub fn inverse(&self) -> &[f64] {
        &self.inv
    }

    /// How many full re-factorisations have happened since construction.
    pub fn refactor_count(&self) -> usize {
        self.refactors
    }

    /// `Lambda += phi phi^T`.
    pub fn update(&mut self, phi: &[f64]) -> Result<()> {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                self.lambda[i * d + j] += phi[i] * phi[j];
            }
        }
        for i in 0..d {
            self.work[i] = (0..d).map(|j| self.inv[i * d + j] * phi[j]).sum();
        }
        let denom = 1.0 + phi.iter().zip(&self.work).map(|(p, w)| p * w).sum::<f64>();
        for i in 0..d {
            for j in 0..d {
                self.inv[i * d + j] -= self.work[i] * self.work[j] / denom;
            }
        }
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_INTERVAL || self.residual() > RESIDUAL_TOL {
            self.refactor()?;
        }
        Ok(())
    }

    /// `max |Lambda Lambda^-1 - I|`.
    pub fn residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut x: f64 = (0..d).map(|k| self.lambda[i * d + k] * self.inv[k * d + j]).sum();
                if i == j {
                    x -= 1.0;
                }
                worst = worst.max(x.abs());
            }
        }
        worst
    }

    /// Recompute the inverse from a Cholesky factorisation of `Lambda`.
    pub fn refactor(&mut self) -> Result<()> {
        let d = self.dim;
        let m = DMatrix::from_row_slice(d, d, &self.lambda);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Numeric("Gram matrix is not positive definite".into()))?;
        let inv = chol.inverse();
        for i in 0..d {
            for j in 0..d {
                // symmetrise
                self.inv[i * d + j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        self.since_refactor = 0;
        self.refactors += 1;
        Ok(())
    }

    /// `||phi||_{Lambda^-1}`.
    #[inline]
    pub fn inverse_norm(&self, phi: &[f64]) -> f64 {
        quad_form(phi, &self.inv, self.dim).max(0.0).sqrt()
    }

    /// `Lambda^-1 b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.inv[i * d + j] * b[j]).sum())
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.lambda.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }
}

#[inline]
pub(crate) fn quad_form(v: &[f64], m: &[f64], d: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        let mut r = 0.0;
        for j in 0..d {
            r += row[j] * v[j];
        }
        acc += v[i] * r;
    }
    acc
}

/// `sqrt(v^T m_inv v)`.
pub fn weighted_norm(v: &[f64], m_inv: &DMatrix<f64>) -> Result<f64> {
    let d = v.len();
    if m_inv.nrows() != d || m_inv.ncols() != d {
        return Err(Error::Numeric(format!(
            "dimension mismatch: vector {d}, matrix {}x{}",
            m_inv.nrows(),
            m_inv.ncols()
        )));
    }
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            q += v[i] * m_inv[(i, j)] * v[j];
        }
    }
    if q < -QUAD_TOL {
        return Err(Error::Numeric(format!("negative quadratic form {q}: matrix is not positive definite")));
    }
    Ok(q.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_spd(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    #[test]
    fn zero_vector_has_zero_norm() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert_eq!(weighted_norm(&[0.0; 3], &m).unwrap(), 0.0);
    }

    #[test]
    fn identity_gives_euclidean_norm() {
        let m = DMatrix::<f64>::identity(2, 2);
        assert!((weighted_norm(&[3.0, 4.0], &m).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn matches_naive_triple_product() {
        let mut rng = seeded(1);
        let m = random_spd(3, &mut rng);
        let v: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let naive = {
            let mv = &m * nalgebra::DVector::from_column_slice(&v);
            v.iter().zip(mv.iter()).map(|(a, b)| a * b).sum::<f64>().sqrt()
        };
        assert!((weighted_norm(&v, &m).unwrap() - naive).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_is_a_numeric_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(weighted_norm(&[0.0, 1.0], &m), Err(Error::Numeric(_))));
    }

    #[test]
    fn sherman_morrison_tracks_true_inverse() {
        let mut rng = seeded(2);
        let mut g = GramMatrix::identity(4);
        for _ in 0..500 {
            let phi: Vec<f64> = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
            g.update(&phi).unwrap();
            assert!(g.residual() <= RESIDUAL_TOL);
        }
        assert!(g.refactor_count() >= 500 / REFACTOR_INTERVAL);
        let lambda = DMatrix::from_row_slice(4, 4, g.matrix());
        let exact = lambda.try_inverse().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((exact[(i, j)] - g.inverse()[i * 4 + j]).abs() < 1e-10);
            }
        }
    }
}
