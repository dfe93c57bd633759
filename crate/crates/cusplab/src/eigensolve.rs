//! Generalized symmetric eigensolve `A w = λ M_Γ w` by reduction to the
//! boundary unknowns: the interior block is eliminated with one sparse
//! factorization, the resulting dense Dirichlet-to-Neumann pencil is solved
//! by Cholesky congruence and a dense symmetric eigensolver.

use crate::assembly::{discrete_inner_product, AssembledSystem, DiscreteSteklovOp};
use crate::geometry::EndCondition;
use crate::linalg::{EnvelopeFactor, FactorKind};
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Relative residual bound every retained eigenpair must satisfy.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Eigenvalues and eigenvectors of the blunted problem at one ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub epsilon: f64,
    pub end_condition: EndCondition,
    pub odd_sector: bool,
    /// Ascending; `λ_1 = 0` only when no constraint exists.
    pub eigenvalues: Vec<f64>,
    /// Relative residuals `‖A w − λ M w‖ / ‖(A + M) w‖` per pair.
    pub residuals: Vec<f64>,
    /// Mesh provenance handle (geometry hash + mesh parameters).
    pub mesh_id: String,
    pub mesh_file: Option<String>,
    /// Full-domain nodal eigenvectors, `M_Γ`-orthonormal. Not serialized;
    /// empty after reload.
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn mu_values(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| 1.0 / (1.0 + l)).collect()
    }
}

/// First `count` eigenpairs of the pencil on the free unknowns.
///
/// The free set splits into the support `b` of `M_Γ` and the interior `i`;
/// the Schur complement `A_bb − A_bi A_ii⁻¹ A_ib` is the discrete DtN map,
/// and the dense pencil `(DtN) w = λ M_bb w` is solved by congruence.
pub fn steklov_spectrum(sys: &AssembledSystem, count: usize) -> Result<Spectrum> {
    let nf = sys.n_free();
    let bset = sys.m_gamma.support();
    let nb = bset.len();
    if nb == 0 {
        return Err(Error::invalid("system has no boundary mass support"));
    }
    if count > nb {
        return Err(Error::invalid(format!(
            "count = {count} exceeds boundary unknowns = {nb}"
        )));
    }
    let mut is_b = vec![false; nf];
    for &b in &bset {
        is_b[b] = true;
    }
    let iset: Vec<usize> = (0..nf).filter(|&i| !is_b[i]).collect();
    let ni = iset.len();
    let mut b_of = vec![usize::MAX; nf]; // free index -> position in bset
    for (k, &b) in bset.iter().enumerate() {
        b_of[b] = k;
    }
    let mut i_of = vec![usize::MAX; nf];
    for (k, &i) in iset.iter().enumerate() {
        i_of[i] = k;
    }

    let a_ii = sys.a.submatrix(&iset);
    let factor = EnvelopeFactor::factor(&a_ii, FactorKind::PositiveDefinite).map_err(|e| {
        Error::Numerical(format!(
            "interior factorization failed (broken mesh or constraints): {e}"
        ))
    })?;

    // DtN columns in parallel
    let columns: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        bset.par_iter()
            .map(|&bj| {
                // rhs = A_ib e_j gathered from row bj by symmetry
                let mut rhs = vec![0.0; ni];
                for (col, v) in sys.a.row(bj) {
                    if i_of[col] != usize::MAX {
                        rhs[i_of[col]] = v;
                    }
                }
                let x = factor.solve(&rhs);
                // col = A_bb e_j − A_bi x
                let mut col = vec![0.0; nb];
                for (c, v) in sys.a.row(bj) {
                    if b_of[c] != usize::MAX {
                        col[b_of[c]] = v;
                    }
                }
                for (r, &br) in bset.iter().enumerate() {
                    let mut s = 0.0;
                    for (c, v) in sys.a.row(br) {
                        if i_of[c] != usize::MAX {
                            s += v * x[i_of[c]];
                        }
                    }
                    col[r] -= s;
                }
                col
            })
            .collect()
    };
    let mut dtn = DMatrix::<f64>::zeros(nb, nb);
    for (j, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            dtn[(r, j)] = v;
        }
    }
    // symmetrize roundoff
    for r in 0..nb {
        for c in 0..r {
            let v = 0.5 * (dtn[(r, c)] + dtn[(c, r)]);
            dtn[(r, c)] = v;
            dtn[(c, r)] = v;
        }
    }
    let mut m_bb = DMatrix::<f64>::zeros(nb, nb);
    for (r, &br) in bset.iter().enumerate() {
        for (c, v) in sys.m_gamma.row(br) {
            if b_of[c] != usize::MAX {
                m_bb[(r, b_of[c])] = v;
            }
        }
    }
    let chol = m_bb
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("boundary mass not positive definite".into()))?;
    let l = chol.l();
    // C = L^{-1} K L^{-T}
    let y = l
        .solve_lower_triangular(&dtn)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut cmat = z.transpose();
    for r in 0..nb {
        for c in 0..r {
            let v = 0.5 * (cmat[(r, c)] + cmat[(c, r)]);
            cmat[(r, c)] = v;
            cmat[(c, r)] = v;
        }
    }
    let eig = cmat.symmetric_eigen();
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for &k in order.iter().take(count) {
        let lambda = eig.eigenvalues[k];
        let q = eig.eigenvectors.column(k).into_owned();
        let w_b = lt
            .solve_upper_triangular(&q)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        // harmonic extension to the interior: A_ii u_i = -A_ib w_b
        let mut rhs = vec![0.0; ni];
        for (r, &br) in bset.iter().enumerate() {
            let wv = w_b[r];
            if wv == 0.0 {
                continue;
            }
            for (c, v) in sys.a.row(br) {
                if i_of[c] != usize::MAX {
                    rhs[i_of[c]] -= v * wv;
                }
            }
        }
        let u_i = factor.solve(&rhs);
        let mut free = vec![0.0; nf];
        for (r, &b) in bset.iter().enumerate() {
            free[b] = w_b[r];
        }
        for (r, &i) in iset.iter().enumerate() {
            free[i] = u_i[r];
        }
        // residual ‖A w − λ M w‖ / ‖(A + M) w‖ on free dofs
        let aw = sys.a.mul_vec(&free);
        let mw = sys.m_gamma.mul_vec(&free);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..nf {
            num += (aw[i] - lambda * mw[i]).powi(2);
            den += (aw[i] + mw[i]).powi(2);
        }
        let res = num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE);
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::Numerical(format!(
                "eigenpair residual {res:e} above {RESIDUAL_TOL:e} at lambda = {lambda}"
            )));
        }
        // deterministic sign: first component of largest magnitude positive
        let mut full = sys.scatter(&free);
        let mut best = 0usize;
        for (i, &v) in full.iter().enumerate() {
            if v.abs() > full[best].abs() {
                best = i;
            }
        }
        if full[best] < 0.0 {
            for v in &mut full {
                *v = -*v;
            }
        }
        eigenvalues.push(lambda);
        eigenvectors.push(full);
        residuals.push(res);
    }
    if !sys.constrained.is_empty() {
        if let Some(&l1) = eigenvalues.first() {
            if !(l1 > 0.0) {
                return Err(Error::Numerical(format!(
                    "constrained system produced non-positive lambda_1 = {l1}"
                )));
            }
        }
    }
    Ok(Spectrum {
        epsilon: 0.0,
        end_condition: sys.end_condition,
        odd_sector: sys.odd_sector,
        eigenvalues,
        residuals,
        mesh_id: String::new(),
        mesh_file: None,
        eigenvectors,
    })
}

/// Outcome of the near-eigenvalue certificate for a trial pair `(U, M)`.
#[derive(Debug, Clone)]
pub struct NearEigenvalue {
    /// `δ = ‖S U − M U‖_ε` after normalizing `‖U‖_ε = 1`.
    pub delta: f64,
    /// Nearest computed eigenvalue `μ_p` of the discrete operator.
    pub matched: f64,
    /// Corresponding `λ_p = 1/μ_p − 1`.
    pub matched_lambda: f64,
    /// Whether `[M − δ, M + δ]` contains `matched` (always true on success).
    pub contains: bool,
    /// The λ-form bound `|1 + λ_p − 1/M| ≤ 2δ/M²`, checked when `δ/M ≤ ½`.
    pub lambda_bound_checked: bool,
}

/// Certify a near eigenvalue: given a trial vector and a trial value
/// `M ∈ (0, 1)`, compute the residual `δ` and verify that some true
/// discrete eigenvalue lies within `δ` of `M`.
///
/// Errors with [`Error::NearEigenvalueHypothesis`] when `δ >= M` (the lemma
/// then draws no conclusion).
pub fn near_eigenvalue_check(
    sys: &AssembledSystem,
    u: &[f64],
    m: f64,
) -> Result<NearEigenvalue> {
    let op = DiscreteSteklovOp::new(sys)?;
    let nb = sys.m_gamma.support().len();
    let spectrum = steklov_spectrum(sys, nb)?;
    near_eigenvalue_check_with(sys, &op, &spectrum, u, m)
}

/// Same as [`near_eigenvalue_check`] with the operator and full spectrum
/// supplied by the caller (amortized across many trials).
pub fn near_eigenvalue_check_with(
    sys: &AssembledSystem,
    op: &DiscreteSteklovOp,
    spectrum: &Spectrum,
    u: &[f64],
    m: f64,
) -> Result<NearEigenvalue> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::invalid(format!("trial value M = {m} outside (0, 1)")));
    }
    if u.len() != sys.n_free() {
        return Err(Error::DimensionMismatch {
            expected: sys.n_free(),
            got: u.len(),
        });
    }
    let norm = discrete_inner_product(sys, u, u)?.sqrt();
    if !(norm > 0.0) {
        return Err(Error::invalid("trial vector is zero"));
    }
    let un: Vec<f64> = u.iter().map(|x| x / norm).collect();
    let su = op.apply(&un)?;
    let r: Vec<f64> = su.iter().zip(&un).map(|(s, u)| s - m * u).collect();
    let delta = discrete_inner_product(sys, &r, &r)?.max(0.0).sqrt();
    if delta >= m {
        return Err(Error::NearEigenvalueHypothesis { delta, m });
    }
    let mus = spectrum.mu_values();
    let (matched_idx, matched) = mus
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - m).abs().total_cmp(&(b.1 - m).abs()))
        .map(|(i, &v)| (i, v))
        .ok_or_else(|| Error::Internal("empty spectrum".into()))?;
    let contains = (m - matched).abs() <= delta * (1.0 + 1e-10) + 1e-14;
    if !contains {
        return Err(Error::Internal(format!(
            "near-eigenvalue containment failed: |{m} - {matched}| > delta = {delta}"
        )));
    }
    let matched_lambda = spectrum.eigenvalues[matched_idx];
    let mut lambda_bound_checked = false;
    if delta / m <= 0.5 {
        let bound = 2.0 * delta / (m * m);
        let lhs = (1.0 + matched_lambda - 1.0 / m).abs();
        if lhs > bound * (1.0 + 1e-10) + 1e-12 {
            return Err(Error::Internal(format!(
                "lambda-form bound failed: {lhs} > {bound}"
            )));
        }
        lambda_bound_checked = true;
    }
    Ok(NearEigenvalue {
        delta,
        matched,
        matched_lambda,
        contains,
        lambda_bound_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::geometry::{disk_domain, make_domain, make_mesh, CuspGeometry};

    fn small_cusp_system() -> (crate::geometry::Mesh, AssembledSystem) {
        let geom = CuspGeometry::canonical(1.0, 1.0);
        let dom = make_domain(&geom, 0.1).unwrap();
        let mesh = make_mesh(&dom, 0.25, 1.0).unwrap();
        let sys = assemble(&mesh, EndCondition::Dirichlet, false).unwrap();
        (mesh, sys)
    }

    #[test]
    fn disk_steklov_eigenvalues() {
        // unit disk: lambda = 0, 1, 1, 2, 2, 3, 3 (k/R with multiplicity 2)
        let dom = disk_domain(1.0).unwrap();
        let mesh = make_mesh(&dom, 0.08, 0.0).unwrap();
        let sys = assemble(&mesh, EndCondition::Neumann, false).unwrap();
        let spec = steklov_spectrum(&sys, 7).unwrap();
        let expect = [0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        for (k, (&got, &want)) in spec.eigenvalues.iter().zip(&expect).enumerate() {
            if want == 0.0 {
                assert!(got.abs() < 1e-8, "lambda_1 = {got}");
            } else {
                let rel = (got - want).abs() / want;
                assert!(rel < 0.02, "lambda_{} = {got} vs {want}", k + 1);
            }
        }
    }

    #[test]
    fn constrained_system_lambda_positive_mu_in_unit_interval() {
        let (_, sys) = small_cusp_system();
        let spec = steklov_spectrum(&sys, 8).unwrap();
        assert!(spec.eigenvalues[0] > 0.0);
        for w in spec.eigenvalues.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
        for mu in spec.mu_values() {
            assert!(mu > 0.0 && mu < 1.0, "mu = {mu}");
        }
        for r in &spec.residuals {
            assert!(*r <= RESIDUAL_TOL);
        }
    }

    #[test]
    fn eigenvectors_m_orthonormal() {
        let (_, sys) = small_cusp_system();
        let spec = steklov_spectrum(&sys, 5).unwrap();
        for i in 0..5 {
            for j in 0..=i {
                let ui = sys.restrict(&spec.eigenvectors[i]);
                let uj = sys.restrict(&spec.eigenvectors[j]);
                let dot = sys.m_gamma.bilinear(&ui, &uj);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (dot - want).abs() < 1e-8,
                    "M-inner product [{i},{j}] = {dot}"
                );
            }
        }
    }

    #[test]
    fn dtn_matches_dense_pencil_oracle() {
        // brute-force dense solve of the full pencil on a small mesh
        let geom = CuspGeometry::canonical(1.0, 1.0);
        let dom = make_domain(&geom, 0.15).unwrap();
        let mesh = make_mesh(&dom, 0.4, 1.0).unwrap();
        let sys = assemble(&mesh, EndCondition::Dirichlet, false).unwrap();
        let nf = sys.n_free();
        assert!(nf <= 300, "oracle test needs a small mesh, got {nf}");
        let mut a = DMatrix::<f64>::zeros(nf, nf);
        let mut mm = DMatrix::<f64>::zeros(nf, nf);
        for i in 0..nf {
            for (j, v) in sys.a.row(i) {
                a[(i, j)] = v;
            }
            for (j, v) in sys.m_gamma.row(i) {
                mm[(i, j)] = v;
            }
        }
        // mu-form brute force: C = L^{-1} M L^{-T} with A + M = L L^T
        let apm = &a + &mm;
        let chol = apm.cholesky().unwrap();
        let l = chol.l();
        let y = l.solve_lower_triangular(&mm).unwrap();
        let c = l
            .solve_lower_triangular(&y.transpose())
            .unwrap()
            .transpose();
        let eig = c.symmetric_eigen();
        let mut mus: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        mus.sort_by(|x, y| y.total_cmp(x)); // descending mu = ascending lambda
        let nb = sys.m_gamma.support().len();
        let count = nb.min(12);
        let spec = steklov_spectrum(&sys, count).unwrap();
        for (k, &lam) in spec.eigenvalues.iter().enumerate() {
            let lam_oracle = 1.0 / mus[k] - 1.0;
            let rel = (lam - lam_oracle).abs() / lam_oracle.abs().max(1e-30);
            assert!(
                rel < 1e-9,
                "pencil mismatch at k={k}: {lam} vs {lam_oracle} (rel {rel:.2e})"
            );
        }
    }

    #[test]
    fn near_eigenvalue_examples() {
        let (_, sys) = small_cusp_system();
        let nb = sys.m_gamma.support().len();
        let spec = steklov_spectrum(&sys, nb).unwrap();
        let op = DiscreteSteklovOp::new(&sys).unwrap();
        // exact eigenvector at its own mu: delta ~ 0, matched = that mu
        let mu1 = spec.mu_values()[0];
        let u = sys.restrict(&spec.eigenvectors[0]);
        let r = near_eigenvalue_check_with(&sys, &op, &spec, &u, mu1).unwrap();
        assert!(r.delta <= 1e-8, "delta = {}", r.delta);
        assert!((r.matched - mu1).abs() <= 1e-10);
        // eigenvector at mu + 0.01: delta must be >= 0.01 (spectral theorem
        // makes it exactly |mu - M| here)
        let m_off = mu1 - 0.01;
        let r2 = near_eigenvalue_check_with(&sys, &op, &spec, &u, m_off).unwrap();
        assert!(r2.delta >= 0.01 * (1.0 - 1e-6), "delta = {}", r2.delta);
        assert!((r2.delta - 0.01).abs() < 1e-6);
        // random vector at M = 0.5: containment asserted internally
        let mut state = 0x243f6a8885a308d3u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let u3: Vec<f64> = (0..sys.n_free()).map(|_| rnd()).collect();
        match near_eigenvalue_check_with(&sys, &op, &spec, &u3, 0.5) {
            Ok(r3) => assert!(r3.contains),
            Err(Error::NearEigenvalueHypothesis { .. }) => {}
            Err(e) => panic!("unexpected: {e}"),
        }
    }

    #[test]
    fn near_eigenvalue_hypothesis_violation_flagged() {
        let (_, sys) = small_cusp_system();
        let u: Vec<f64> = (0..sys.n_free()).map(|i| (i as f64).sin() + 1.5).collect();
        // M tiny: delta >= M certain
        match near_eigenvalue_check(&sys, &u, 1e-9) {
            Err(Error::NearEigenvalueHypothesis { delta, m }) => {
                assert!(delta >= m);
            }
            other => panic!("expected hypothesis violation, got {other:?}"),
        }
    }

    #[test]
    fn count_exceeding_boundary_block_rejected() {
        let (_, sys) = small_cusp_system();
        let nb = sys.m_gamma.support().len();
        assert!(steklov_spectrum(&sys, nb + 1).is_err());
    }
}
