//! Tridiagonal matrix storage, products and a partial-pivoting solver.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    /// Subdiagonal, length `n - 1`.
    pub sub: Vec<f64>,
    /// Main diagonal, length `n`.
    pub diag: Vec<f64>,
    /// Superdiagonal, length `n - 1`.
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            sup: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    /// Solves `A x = rhs` by LU with partial pivoting (LAPACK `gttrf`/`gtts2`
    /// scheme; one extra superdiagonal of fill).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut dl = self.sub.clone();
        let mut d = self.diag.clone();
        let mut du = self.sup.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let mut b = rhs.to_vec();

        // factorization
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(Error::NonCoerciveSystem);
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            return Err(Error::NonCoerciveSystem);
        }

        // forward substitution with the recorded row interchanges
        for i in 0..n.saturating_sub(1) {
            if swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl[i] * b[i + 1];
            } else {
                b[i + 1] -= dl[i] * b[i];
            }
        }

        // back substitution
        let mut x = vec![0.0; n];
        x[n - 1] = b[n - 1] / d[n - 1];
        if n >= 2 {
            x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [2 1 0; 1 3 1; 0 1 2] x = [3, 5, 3] -> x = [1, 1, 1]
        let a = Tridiagonal {
            sub: vec![1.0, 1.0],
            diag: vec![2.0, 3.0, 2.0],
            sup: vec![1.0, 1.0],
        };
        let x = a.solve(&[3.0, 5.0, 3.0]).unwrap();
        for v in &x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pivoting_handles_small_diagonal() {
        let a = Tridiagonal {
            sub: vec![1.0, 1.0],
            diag: vec![1e-18, 1.0, 1.0],
            sup: vec![1.0, 1.0],
        };
        let rhs = [1.0, 2.0, 3.0];
        let x = a.solve(&rhs).unwrap();
        let y = a.matvec(&x);
        for (got, want) in y.iter().zip(&rhs) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn random_residuals_small() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 3, 17, 101] {
            let a = Tridiagonal {
                sub: (0..n.saturating_sub(1))
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
                diag: (0..n).map(|_| rng.gen_range(2.0..4.0)).collect(),
                sup: (0..n.saturating_sub(1))
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            };
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = a.solve(&rhs).unwrap();
            let y = a.matvec(&x);
            for (got, want) in y.iter().zip(&rhs) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_reports_error() {
        let a = Tridiagonal {
            sub: vec![0.0],
            diag: vec![0.0, 1.0],
            sup: vec![0.0],
        };
        assert!(a.solve(&[1.0, 1.0]).is_err());
    }
}
