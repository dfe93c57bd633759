use super::sparse::{reverse_cuthill_mckee, CsrMatrix};
use crate::{Error, Result};

/// Whether a factorization may accept negative pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    /// Cholesky-style: all pivots must be positive.
    PositiveDefinite,
    /// LDLᵀ without pivoting: negative pivots allowed, zero pivots rejected.
    Indefinite,
}

/// Envelope (skyline) LDLᵀ factorization with RCM pre-ordering.
///
/// Rows store the lower-triangular envelope `fc[i]..=i` densely; fill-in is
/// confined to the envelope, which RCM keeps narrow for 2D meshes.
#[derive(Debug, Clone)]
pub struct EnvelopeFactor {
    n: usize,
    perm: Vec<usize>,     // perm[new] = old
    inv_perm: Vec<usize>, // inv_perm[old] = new
    fc: Vec<usize>,       // first column of each row's envelope
    rows: Vec<Vec<f64>>,  // L entries, unit diagonal implicit at the end
    diag: Vec<f64>,       // D
    min_pivot: f64,
}

impl EnvelopeFactor {
    /// Factor a symmetric CSR matrix. Fails on a (near-)zero pivot, or on a
    /// negative pivot in `PositiveDefinite` mode.
    pub fn factor(a: &CsrMatrix, kind: FactorKind) -> Result<EnvelopeFactor> {
        let n = a.n;
        let perm = reverse_cuthill_mckee(a);
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        // envelope: fc[i] = min over row i entries of the permuted column index
        let mut fc = vec![0usize; n];
        for new_i in 0..n {
            let mut lo = new_i;
            for (j, _) in a.row(perm[new_i]) {
                lo = lo.min(inv_perm[j]);
            }
            fc[new_i] = lo;
        }
        // scatter permuted rows into dense envelope storage
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i - fc[i] + 1]).collect();
        for new_i in 0..n {
            for (j, v) in a.row(perm[new_i]) {
                let new_j = inv_perm[j];
                if new_j <= new_i {
                    rows[new_i][new_j - fc[new_i]] = v;
                }
            }
        }
        // in-place LDLᵀ on the envelope
        let mut diag = vec![0.0; n];
        let mut scale: f64 = 0.0;
        for i in 0..n {
            scale = scale.max(rows[i].last().copied().unwrap_or(0.0).abs());
        }
        let drop_tol = (scale.max(1.0)) * 1e-300; // only to avoid literal 0/0
        let mut min_pivot = f64::INFINITY;
        for i in 0..n {
            let fci = fc[i];
            // update row i against previous rows; entries k < j already hold
            // w_k = L_ik * D_k, while row j holds final L_jk values
            for j in fci..i {
                let fcj = fc[j];
                let lo = fci.max(fcj);
                let mut s = rows[i][j - fci];
                for k in lo..j {
                    s -= rows[i][k - fci] * rows[j][k - fcj];
                }
                rows[i][j - fci] = s; // w_j = L_ij * D_j
            }
            let mut dii = rows[i][i - fci];
            for k in fci..i {
                let lik = rows[i][k - fci] / diag[k];
                dii -= lik * rows[i][k - fci];
                rows[i][k - fci] = lik;
            }
            if dii.abs() <= drop_tol {
                return Err(Error::Numerical(format!(
                    "zero pivot at elimination step {i} of {n}"
                )));
            }
            if kind == FactorKind::PositiveDefinite && dii <= 0.0 {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite: pivot {dii:e} at step {i}"
                )));
            }
            min_pivot = min_pivot.min(dii.abs());
            diag[i] = dii;
        }
        Ok(EnvelopeFactor {
            n,
            perm,
            inv_perm,
            fc,
            rows,
            diag,
            min_pivot,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Smallest |pivot| seen; tiny values signal near-singularity.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = (0..self.n).map(|i| b[self.perm[i]]).collect();
        // forward: L y = b
        for i in 0..self.n {
            let fci = self.fc[i];
            let mut s = y[i];
            for k in fci..i {
                s -= self.rows[i][k - fci] * y[k];
            }
            y[i] = s;
        }
        for i in 0..self.n {
            y[i] /= self.diag[i];
        }
        // backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let fci = self.fc[i];
            let yi = y[i];
            for k in fci..i {
                y[k] -= self.rows[i][k - fci] * yi;
            }
        }
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Triplets;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Triplets::new(n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i + 1 < n {
                t.push(i, i + 1, -1.0);
                t.push(i + 1, i, -1.0);
            }
        }
        t.to_csr()
    }

    #[test]
    fn solves_spd_system() {
        let a = laplacian_1d(50);
        let f = EnvelopeFactor::factor(&a, FactorKind::PositiveDefinite).unwrap();
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = f.solve(&b);
        for (xa, xb) in x.iter().zip(&x_true) {
            assert!((xa - xb).abs() < 1e-10, "{xa} vs {xb}");
        }
    }

    #[test]
    fn indefinite_solve() {
        // A - 3 M style shifted matrix with negative eigenvalues
        let mut t = Triplets::new(20);
        for i in 0..20 {
            t.push(i, i, 2.0 - 3.0 * 0.8);
            if i + 1 < 20 {
                t.push(i, i + 1, -1.0);
                t.push(i + 1, i, -1.0);
            }
        }
        let a = t.to_csr();
        assert!(EnvelopeFactor::factor(&a, FactorKind::PositiveDefinite).is_err());
        let f = EnvelopeFactor::factor(&a, FactorKind::Indefinite).unwrap();
        let x_true: Vec<f64> = (0..20).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let b = a.mul_vec(&x_true);
        let x = f.solve(&b);
        for (xa, xb) in x.iter().zip(&x_true) {
            assert!((xa - xb).abs() < 1e-9);
        }
    }
}
