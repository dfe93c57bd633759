//! The 1D Euler-type model of the cusp: the cross-sectional compatibility
//! condition reduces the Steklov problem inside the cusp to
//! `−∂_z(z^{2(n−1)} ∂_z w) = Λ z^{2(n−2)} w` on `(ε, d)` with
//! `Λ = λ |∂ω| / |ω|`. With Dirichlet ends its eigenvalues are closed-form,
//! which makes this module the exact oracle for blinking periodicity and
//! gliding speeds.
//!
//! In the logarithmic variable `s = ln z` the pencil becomes
//! `−(p ẇ)' = Λ p w` with the single weight `p(s) = e^{(2n−3)s}`, so the
//! finite-difference path is a symmetric tridiagonal pencil on a log-uniform
//! grid, solved by Sturm bisection.

use crate::geometry::CuspGeometry;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Boundary condition of the reduced problem at one end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducedBc {
    Dirichlet,
    Neumann,
}

/// Eigenvalues of the reduced problem on `(ε, d)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedSpectrum {
    pub epsilon: f64,
    pub d: f64,
    /// Ascending `Λ` values.
    pub capital_lambda: Vec<f64>,
    /// `λ = Λ |ω| / |∂ω|`.
    pub lambda: Vec<f64>,
    pub end_bc_left: ReducedBc,
    pub end_bc_right: ReducedBc,
}

/// `Λ = λ |∂ω| / |ω|`.
pub fn capital_lambda(lambda: f64, geom: &CuspGeometry) -> f64 {
    lambda * geom.omega_boundary_measure() / geom.omega_measure()
}

/// `λ = Λ |ω| / |∂ω|`.
pub fn lambda_from_capital(capital: f64, geom: &CuspGeometry) -> f64 {
    capital * geom.omega_measure() / geom.omega_boundary_measure()
}

/// `Λ† = (n − 3/2)²`.
pub fn capital_lambda_threshold(geom: &CuspGeometry) -> f64 {
    let q = geom.n as f64 - 1.5;
    q * q
}

/// Exponents of the power solutions `w = z^τ`:
/// `τ± = −(n − 3/2) ± sqrt((n − 3/2)² − Λ)`, complex beyond the threshold.
pub fn euler_exponents(lambda: f64, geom: &CuspGeometry) -> (Complex64, Complex64) {
    let q = geom.n as f64 - 1.5;
    let disc = Complex64::new(q * q - capital_lambda(lambda, geom), 0.0).sqrt();
    let base = Complex64::new(-q, 0.0);
    (base + disc, base - disc)
}

/// Residual of the characteristic identity `τ² + (2n−3)τ + Λ = 0`, which is
/// the cross-section compatibility condition evaluated on `w = z^τ`.
/// Vanishes to machine precision for exponents from [`euler_exponents`].
pub fn compatibility_residual(lambda: f64, geom: &CuspGeometry, tau: Complex64) -> f64 {
    let c = 2.0 * geom.n as f64 - 3.0;
    (tau * tau + c * tau + capital_lambda(lambda, geom)).norm()
}

/// Closed-form Dirichlet–Dirichlet eigenvalues:
/// `Λ_k = Λ† + (kπ / ln(d/ε))²`, `k = 1..=count`.
pub fn reduced_eigenvalues_closed_form(
    epsilon: f64,
    d: f64,
    geom: &CuspGeometry,
    count: usize,
) -> Result<ReducedSpectrum> {
    if !(epsilon > 0.0 && epsilon < d) {
        return Err(Error::invalid(format!(
            "need 0 < epsilon < d, got epsilon = {epsilon}, d = {d}"
        )));
    }
    let ell = (d / epsilon).ln();
    let thr = capital_lambda_threshold(geom);
    let capital: Vec<f64> = (1..=count)
        .map(|k| thr + (k as f64 * std::f64::consts::PI / ell).powi(2))
        .collect();
    let lambda = capital
        .iter()
        .map(|&c| lambda_from_capital(c, geom))
        .collect();
    Ok(ReducedSpectrum {
        epsilon,
        d,
        capital_lambda: capital,
        lambda,
        end_bc_left: ReducedBc::Dirichlet,
        end_bc_right: ReducedBc::Dirichlet,
    })
}

/// The ε values at which a fixed `λ > λ†` belongs to the Dirichlet–Dirichlet
/// reduced spectrum: `ε_k = d e^{−kπ/τ₀(λ)}`, `k = k_first..`.
pub fn dd_crossing_epsilons(
    lambda: f64,
    d: f64,
    geom: &CuspGeometry,
    k_first: u32,
    count: usize,
) -> Result<Vec<f64>> {
    let tau0 = crate::asymptotics::tau0(lambda, geom)?;
    Ok((k_first..)
        .take(count)
        .map(|k| d * (-(k as f64) * std::f64::consts::PI / tau0).exp())
        .collect())
}

/// Exact derivative of the closed-form branch `λ_k(ε)`:
/// `dλ_k/dε = (2/ε)(λ_k − λ†)/ln(d/ε)`.
pub fn dd_gliding_speed(lambda_k: f64, epsilon: f64, d: f64, geom: &CuspGeometry) -> f64 {
    let thr = crate::asymptotics::threshold(geom);
    2.0 / epsilon * (lambda_k - thr) / (d / epsilon).ln()
}

struct Tridiag {
    diag: Vec<f64>,
    off: Vec<f64>, // off[i] couples i and i+1
}

/// Assemble the P1 pencil `(K, M)` in log coordinates on `m` nodes with the
/// given end conditions (rows/columns of Dirichlet nodes eliminated).
fn assemble_reduced(
    epsilon: f64,
    d: f64,
    n_dim: u32,
    m: usize,
    bc_left: ReducedBc,
    bc_right: ReducedBc,
) -> (Tridiag, Tridiag) {
    let s0 = epsilon.ln();
    let s1 = d.ln();
    let hs = (s1 - s0) / (m - 1) as f64;
    let c = 2.0 * n_dim as f64 - 3.0;
    // 3-point Gauss on each element integrates p(s)·poly2 essentially exactly
    const GP: [f64; 3] = [-0.774596669241483377, 0.0, 0.774596669241483377];
    const GW: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut kd = vec![0.0; m];
    let mut ko = vec![0.0; m - 1];
    let mut md = vec![0.0; m];
    let mut mo = vec![0.0; m - 1];
    for e in 0..m - 1 {
        let sa = s0 + e as f64 * hs;
        let mut pk = 0.0; // ∫ p over the element
        let mut m00 = 0.0;
        let mut m01 = 0.0;
        let mut m11 = 0.0;
        for g in 0..3 {
            let t = 0.5 * (GP[g] + 1.0); // in [0,1]
            let s = sa + t * hs;
            let w = GW[g] * 0.5 * hs;
            let p = (c * s).exp();
            pk += w * p;
            m00 += w * p * (1.0 - t) * (1.0 - t);
            m01 += w * p * (1.0 - t) * t;
            m11 += w * p * t * t;
        }
        let ke = pk / (hs * hs);
        kd[e] += ke;
        kd[e + 1] += ke;
        ko[e] -= ke;
        md[e] += m00;
        md[e + 1] += m11;
        mo[e] += m01;
    }
    // eliminate Dirichlet end rows
    let lo = if bc_left == ReducedBc::Dirichlet { 1 } else { 0 };
    let hi = if bc_right == ReducedBc::Dirichlet {
        m - 1
    } else {
        m
    };
    let k = Tridiag {
        diag: kd[lo..hi].to_vec(),
        off: ko[lo..hi.saturating_sub(1)].to_vec(),
    };
    let mm = Tridiag {
        diag: md[lo..hi].to_vec(),
        off: mo[lo..hi.saturating_sub(1)].to_vec(),
    };
    (k, mm)
}

/// Number of eigenvalues of the pencil `(K, M)` below `x` (Sturm count via
/// the inertia of `K − x M`).
fn sturm_count(k: &Tridiag, m: &Tridiag, x: f64) -> usize {
    let n = k.diag.len();
    let tiny = 1e-300;
    let mut count = 0;
    let mut dprev = 0.0;
    for i in 0..n {
        let a = k.diag[i] - x * m.diag[i];
        let mut d = if i == 0 {
            a
        } else {
            let b = k.off[i - 1] - x * m.off[i - 1];
            a - b * b / dprev
        };
        if d.abs() < tiny {
            d = -tiny;
        }
        if d < 0.0 {
            count += 1;
        }
        dprev = d;
    }
    count
}

fn kth_eigenvalue(k: &Tridiag, m: &Tridiag, kth: usize, mut lo: f64, mut hi: f64) -> f64 {
    // invariant: count(lo) < kth <= count(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sturm_count(k, m, mid) >= kth {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Finite-difference eigenvalues of the reduced problem.
///
/// Errors when the grid is too coarse: the result is compared against a
/// half-resolution solve and must agree to 1e-4 relative.
pub fn reduced_eigenvalues_fd(
    epsilon: f64,
    d: f64,
    geom: &CuspGeometry,
    grid_points: usize,
    count: usize,
    bc_left: ReducedBc,
    bc_right: ReducedBc,
) -> Result<ReducedSpectrum> {
    if !(epsilon > 0.0 && epsilon < d) {
        return Err(Error::invalid(format!(
            "need 0 < epsilon < d, got {epsilon}, {d}"
        )));
    }
    if grid_points < 200 {
        return Err(Error::invalid(format!(
            "grid_points = {grid_points} < 200"
        )));
    }
    let solve = |m: usize| -> Result<Vec<f64>> {
        let (k, mm) = assemble_reduced(epsilon, d, geom.n, m, bc_left, bc_right);
        if count >= k.diag.len() {
            return Err(Error::invalid(format!(
                "count = {count} too large for grid of {m} points"
            )));
        }
        // bracket from the closed-form scale
        let ell = (d / epsilon).ln();
        let thr = capital_lambda_threshold(geom);
        let mut hi = thr + ((count as f64 + 2.0) * std::f64::consts::PI / ell).powi(2) * 4.0 + 10.0;
        let mut grow = 0;
        while sturm_count(&k, &mm, hi) < count {
            hi *= 4.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::Numerical("Sturm bracket failed to close".into()));
            }
        }
        let mut lo = -1.0;
        let mut out = Vec::with_capacity(count);
        for kth in 1..=count {
            let v = kth_eigenvalue(&k, &mm, kth, lo, hi);
            lo = v - 1e-9 * v.abs().max(1.0); // eigenvalues ascend
            out.push(v);
        }
        Ok(out)
    };
    let fine = solve(grid_points)?;
    let coarse = solve(grid_points / 2)?;
    for (i, (f, c)) in fine.iter().zip(&coarse).enumerate() {
        let rel = (f - c).abs() / f.abs().max(1e-30);
        if rel > 1e-4 {
            return Err(Error::Numerical(format!(
                "grid too coarse: mode {i} changes by {rel:.2e} under refinement"
            )));
        }
    }
    let lambda = fine
        .iter()
        .map(|&c| lambda_from_capital(c, geom))
        .collect();
    Ok(ReducedSpectrum {
        epsilon,
        d,
        capital_lambda: fine,
        lambda,
        end_bc_left: bc_left,
        end_bc_right: bc_right,
    })
}

/// Solve the reduced boundary-value problem at a fixed `λ` on `(delta, d)`
/// with prescribed end values, and return `(z_j, w_j)` samples.
/// Used by the 1D scattering-phase analogue.
pub fn reduced_bvp_profile(
    lambda: f64,
    delta: f64,
    d: f64,
    geom: &CuspGeometry,
    grid_points: usize,
    left_value: f64,
    right_value: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(delta > 0.0 && delta < d) {
        return Err(Error::invalid("need 0 < delta < d"));
    }
    let m = grid_points.max(200);
    let (k, mm) = assemble_reduced(delta, d, geom.n, m, ReducedBc::Neumann, ReducedBc::Neumann);
    let x = capital_lambda(lambda, geom);
    // B = K − Λ M; prescribe w_0 and w_{m−1}; Thomas on the interior block
    let n = m - 2;
    let bd: Vec<f64> = (1..m - 1).map(|i| k.diag[i] - x * mm.diag[i]).collect();
    let bo: Vec<f64> = (1..m - 2).map(|i| k.off[i] - x * mm.off[i]).collect();
    let mut rhs = vec![0.0; n];
    rhs[0] -= (k.off[0] - x * mm.off[0]) * left_value;
    rhs[n - 1] -= (k.off[m - 2] - x * mm.off[m - 2]) * right_value;
    // LU (Thomas) without pivoting; a tiny pivot signals resonance
    let mut diag = bd.clone();
    let mut r = rhs.clone();
    for i in 1..n {
        if diag[i - 1].abs() < 1e-13 * k.diag[i].abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "reduced BVP near-singular at lambda = {lambda} (resonance); shift delta"
            )));
        }
        let f = bo[i - 1] / diag[i - 1];
        diag[i] -= f * bo[i - 1];
        r[i] -= f * r[i - 1];
    }
    let mut w = vec![0.0; n];
    if diag[n - 1].abs() < 1e-13 {
        return Err(Error::Numerical("reduced BVP singular".into()));
    }
    w[n - 1] = r[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        w[i] = (r[i] - bo[i] * w[i + 1]) / diag[i];
    }
    let s0 = delta.ln();
    let hs = ((d / delta).ln()) / (m - 1) as f64;
    let mut out = Vec::with_capacity(m);
    out.push((delta, left_value));
    for i in 0..n {
        out.push(((s0 + (i + 1) as f64 * hs).exp(), w[i]));
    }
    out.push((d, right_value));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CuspGeometry;

    fn geom() -> CuspGeometry {
        CuspGeometry::canonical(1.0, 1.0)
    }

    #[test]
    fn exponent_examples() {
        let g = geom();
        // n=2, Λ=0: roots 0 and −1
        let (tp, tm) = euler_exponents(0.0, &g);
        assert!((tp - Complex64::new(0.0, 0.0)).norm() < 1e-15);
        assert!((tm - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        // Λ = Λ† = 1/4: double root −1/2
        let lam_thr = lambda_from_capital(0.25, &g);
        let (tp, tm) = euler_exponents(lam_thr, &g);
        assert!((tp - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
        assert!((tm - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
        // Λ = 1/2: −1/2 ± i/2
        let lam = lambda_from_capital(0.5, &g);
        let (tp, tm) = euler_exponents(lam, &g);
        assert!((tp - Complex64::new(-0.5, 0.5)).norm() < 1e-14);
        assert!((tm - Complex64::new(-0.5, -0.5)).norm() < 1e-14);
        // compatibility identity for both branches
        for l in [0.3, 0.7, 1.9] {
            let (tp, tm) = euler_exponents(l, &g);
            assert!(compatibility_residual(l, &g, tp) < 1e-13);
            assert!(compatibility_residual(l, &g, tm) < 1e-13);
        }
    }

    #[test]
    fn closed_form_at_log_pi() {
        // ε = d e^{−π}: Λ₁ = 1/4 + 1 = 1.25
        let g = geom();
        let eps = (-std::f64::consts::PI).exp();
        let spec = reduced_eigenvalues_closed_form(eps, 1.0, &g, 3).unwrap();
        assert!((spec.capital_lambda[0] - 1.25).abs() < 1e-12);
        assert!((spec.capital_lambda[1] - (0.25 + 4.0)).abs() < 1e-12);
        // λ = Λ |ω|/|∂ω| = Λ at a = 1
        assert!((spec.lambda[0] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn threshold_absorbs_fixed_modes() {
        let g = geom();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-8, 1e-16] {
            let spec = reduced_eigenvalues_closed_form(eps, 1.0, &g, 1).unwrap();
            assert!(spec.capital_lambda[0] < prev);
            prev = spec.capital_lambda[0];
        }
        assert!((prev - 0.25) < 0.01);
    }

    #[test]
    fn log_periodicity_of_crossings_exact() {
        let g = geom();
        let lambda = 0.5;
        let eps = dd_crossing_epsilons(lambda, 1.0, &g, 1, 6).unwrap();
        let tau0 = crate::asymptotics::tau0(lambda, &g).unwrap();
        for w in eps.windows(2) {
            let gap = w[0].ln() - w[1].ln();
            assert!(
                (gap - std::f64::consts::PI / tau0).abs() < 1e-10,
                "gap {gap}"
            );
        }
        // each crossing is an eigenvalue of the reduced problem there
        for (k, &e) in eps.iter().enumerate().take(3) {
            let spec = reduced_eigenvalues_closed_form(e, 1.0, &g, k + 2).unwrap();
            let hit = spec
                .lambda
                .iter()
                .any(|&l| (l - lambda).abs() < 1e-9 * lambda);
            assert!(hit, "lambda not in spectrum at eps_{k}");
        }
    }

    #[test]
    fn fd_matches_closed_form() {
        let g = geom();
        let eps = 0.013;
        let fd = reduced_eigenvalues_fd(
            eps,
            1.0,
            &g,
            10_000,
            4,
            ReducedBc::Dirichlet,
            ReducedBc::Dirichlet,
        )
        .unwrap();
        let cf = reduced_eigenvalues_closed_form(eps, 1.0, &g, 4).unwrap();
        for (f, c) in fd.capital_lambda.iter().zip(&cf.capital_lambda) {
            let rel = (f - c).abs() / c;
            assert!(rel < 1e-6, "fd {f} vs closed {c} (rel {rel:.2e})");
        }
    }

    #[test]
    fn fd_general_dimension_matches_closed_form() {
        let mut g = geom();
        g.n = 3; // closed forms stay valid; FD grid is n-generic
        let eps = 0.05;
        let fd = reduced_eigenvalues_fd(
            eps,
            1.0,
            &g,
            8_000,
            3,
            ReducedBc::Dirichlet,
            ReducedBc::Dirichlet,
        )
        .unwrap();
        let cf = reduced_eigenvalues_closed_form(eps, 1.0, &g, 3).unwrap();
        for (f, c) in fd.capital_lambda.iter().zip(&cf.capital_lambda) {
            assert!((f - c).abs() / c < 1e-5);
        }
    }

    #[test]
    fn neumann_left_end_shifts_crossing_pattern_by_phase() {
        // e^{iϑ} = (q − iτ₀)/(q + iτ₀): the Neumann-at-ε eigencondition is the
        // Dirichlet one shifted by −ϑ/(2τ₀) in ln ε. Verified by locating the
        // first Neumann eigenvalue and comparing against the shifted pattern.
        let g = geom();
        let q: f64 = 0.5; // n − 3/2
        let eps = 0.02;
        let fd = reduced_eigenvalues_fd(
            eps,
            1.0,
            &g,
            20_000,
            3,
            ReducedBc::Neumann,
            ReducedBc::Dirichlet,
        )
        .unwrap();
        // exact Neumann-left condition: tan(τ₀ ln(d/ε)) = −τ₀/q
        let ell = (1.0f64 / eps).ln();
        for (k, &cap) in fd.capital_lambda.iter().enumerate() {
            let tau0 = (cap - 0.25f64).sqrt();
            let lhs = (tau0 * ell).tan();
            let rhs = -tau0 / q;
            // compare the angle, not tan (avoids pole blowup)
            let angle_err = ((tau0 * ell).atan2(1.0)
                - (k as f64 + 1.0) * std::f64::consts::PI
                - rhs.atan())
            .abs()
            .min(((lhs - rhs) / (1.0 + lhs * lhs)).abs());
            assert!(
                angle_err < 1e-3,
                "mode {k}: tan({}) = {lhs} vs {rhs}",
                tau0 * ell
            );
            // and the phase-shift form: τ₀ ln(d/ε) = kπ − atan(τ₀/q)
            // matches ϑ = −2 atan(τ₀/q):  shift in ln ε = −ϑ/(2τ₀)
            let theta_n = -2.0 * (tau0 / q).atan();
            let dirichlet_x = (k as f64 + 1.0) * std::f64::consts::PI;
            let neumann_x = dirichlet_x + theta_n / 2.0;
            assert!(
                (tau0 * ell - neumann_x).abs() < 2e-3,
                "mode {k}: x = {} vs {neumann_x}",
                tau0 * ell
            );
        }
    }

    #[test]
    fn gliding_speed_matches_finite_difference() {
        let g = geom();
        let d = 1.0;
        let eps = 3e-3;
        let de = eps * 1e-5;
        let lam = |e: f64| {
            reduced_eigenvalues_closed_form(e, d, &g, 1)
                .unwrap()
                .lambda[0]
        };
        let numeric = (lam(eps + de) - lam(eps - de)) / (2.0 * de);
        let exact = dd_gliding_speed(lam(eps), eps, d, &g);
        assert!(
            ((numeric - exact) / exact).abs() < 1e-5,
            "{numeric} vs {exact}"
        );
    }

    #[test]
    fn coarse_grid_flagged() {
        let g = geom();
        assert!(matches!(
            reduced_eigenvalues_fd(
                1e-6,
                1.0,
                &g,
                200,
                6,
                ReducedBc::Dirichlet,
                ReducedBc::Dirichlet
            ),
            Err(Error::Numerical(_))
        ));
        assert!(reduced_eigenvalues_fd(
            0.1,
            1.0,
            &g,
            100,
            1,
            ReducedBc::Dirichlet,
            ReducedBc::Dirichlet
        )
        .is_err());
    }

    #[test]
    fn bvp_profile_matches_exact_solution() {
        // fixed Λ below threshold: w = (z^{τ+} d^{τ−} − z^{τ−} d^{τ+}) scaled
        let g = geom();
        let lambda = lambda_from_capital(0.16, &g); // real exponents
        let (tp, tm) = euler_exponents(lambda, &g);
        let (tp, tm) = (tp.re, tm.re);
        let delta = 0.05f64;
        let d = 1.0f64;
        let exact = |z: f64| {
            let num = z.powf(tp) * d.powf(tm) - z.powf(tm) * d.powf(tp);
            let den = delta.powf(tp) * d.powf(tm) - delta.powf(tm) * d.powf(tp);
            num / den
        };
        let prof = reduced_bvp_profile(lambda, delta, d, &g, 20_000, 1.0, 0.0).unwrap();
        for &(z, w) in prof.iter().step_by(500) {
            assert!(
                (w - exact(z)).abs() < 1e-6,
                "z = {z}: {w} vs {}",
                exact(z)
            );
        }
    }
}
