//! Decomposition of computed fields in the cusp into the oscillating wave
//! basis `z^{−(n−3/2)} (α cos(τ₀ ln z) + β sin(τ₀ ln z))`, estimation of the
//! scattering phase Θ(λ), and the crossing relation that ties Θ to the
//! blinking ε-sequence.
//!
//! Cross-sectional averaging before fitting suppresses the corrector
//! (its cross-sectional mean vanishes) and the end boundary layer, so the
//! 2D field reduces to the clean 1D wave model inside the window.

use crate::assembly::assemble;
use crate::asymptotics::{phase_distance, tau0, threshold, wrap_phase};
use crate::eigensolve::steklov_spectrum;
use crate::geometry::{
    make_domain, make_mesh, BoundaryTag, CuspGeometry, EndCondition, Mesh,
};
use crate::linalg::{CsrMatrix, EnvelopeFactor, FactorKind, Triplets};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Result of fitting a cusp profile to the wave basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveFit {
    pub lambda: f64,
    pub window: (f64, f64),
    pub b_plus_abs: f64,
    pub b_minus_abs: f64,
    #[serde(skip)]
    pub b_plus: Complex64,
    #[serde(skip)]
    pub b_minus: Complex64,
    /// `arg(b₊ / b₋)` in `[0, 2π)`; absent when the amplitudes drown in the
    /// misfit.
    pub theta_hat: Option<f64>,
    /// Relative L² misfit of the fit (reported honestly, never clipped).
    pub residual: f64,
    /// Number of cross-sections used.
    pub samples: usize,
    /// Window shorter than half an oscillation period.
    pub low_confidence: bool,
}

/// Least-squares fit of samples `(z_j, w_j)` to the wave basis at `λ`.
/// Complex-valued samples are supported; real fields produce conjugate
/// amplitude pairs.
pub fn fit_profile(
    samples: &[(f64, Complex64)],
    lambda: f64,
    geom: &CuspGeometry,
) -> Result<WaveFit> {
    if samples.len() < 20 {
        return Err(Error::invalid(format!(
            "need >= 20 cross-sections, got {}",
            samples.len()
        )));
    }
    let t0 = tau0(lambda, geom)?;
    let q = geom.n as f64 - 1.5;
    let mut g11 = 0.0;
    let mut g12 = 0.0;
    let mut g22 = 0.0;
    let mut r1 = Complex64::new(0.0, 0.0);
    let mut r2 = Complex64::new(0.0, 0.0);
    let mut data_norm2 = 0.0;
    for &(z, w) in samples {
        let amp = z.powf(-q);
        let ph = t0 * z.ln();
        let g1 = amp * ph.cos();
        let g2 = amp * ph.sin();
        g11 += g1 * g1;
        g12 += g1 * g2;
        g22 += g2 * g2;
        r1 += g1 * w;
        r2 += g2 * w;
        data_norm2 += w.norm_sqr();
    }
    let det = g11 * g22 - g12 * g12;
    if det.abs() < 1e-14 * (g11 * g22).max(1e-300) {
        return Err(Error::Numerical(
            "wave basis degenerate on this window (tau0 ln(z2/z1) too small)".into(),
        ));
    }
    let alpha = (r1 * g22 - r2 * g12) / det;
    let beta = (r2 * g11 - r1 * g12) / det;
    let mut misfit2 = 0.0;
    for &(z, w) in samples {
        let amp = z.powf(-q);
        let ph = t0 * z.ln();
        let fit = alpha * (amp * ph.cos()) + beta * (amp * ph.sin());
        misfit2 += (w - fit).norm_sqr();
    }
    let residual = (misfit2 / data_norm2.max(1e-300)).sqrt();
    let b_plus = (alpha - Complex64::i() * beta) / 2.0;
    let b_minus = (alpha + Complex64::i() * beta) / 2.0;
    let amp_scale = ((alpha.norm_sqr() + beta.norm_sqr()) / 2.0).sqrt();
    let defined = b_plus.norm() > 10.0 * residual * amp_scale
        && b_minus.norm() > 10.0 * residual * amp_scale;
    let theta_hat = if defined {
        Some(wrap_phase((b_plus / b_minus).arg()))
    } else {
        None
    };
    let (z1, z2) = (
        samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min),
        samples.iter().map(|s| s.0).fold(0.0, f64::max),
    );
    Ok(WaveFit {
        lambda,
        window: (z1, z2),
        b_plus_abs: b_plus.norm(),
        b_minus_abs: b_minus.norm(),
        b_plus,
        b_minus,
        theta_hat,
        residual,
        samples: samples.len(),
        low_confidence: t0 * (z2 / z1).ln() < PI,
    })
}

/// Point-location accelerator: uniform bins over triangle bounding boxes.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    x0: f64,
    y0: f64,
    inv_h: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let target_bins = (mesh.triangles.len() as f64).sqrt().ceil() as usize + 1;
        let nx = target_bins.clamp(4, 512);
        let ny = nx;
        let wx = (hi[0] - lo[0]).max(1e-12);
        let wy = (hi[1] - lo[1]).max(1e-12);
        let cell = (wx / nx as f64).max(wy / ny as f64);
        let inv_h = 1.0 / cell;
        let nx = (wx * inv_h).ceil() as usize + 1;
        let ny = (wy * inv_h).ceil() as usize + 1;
        let mut bins = vec![Vec::new(); nx * ny];
        for (t_idx, t) in mesh.triangles.iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &v in t {
                let p = mesh.nodes[v as usize];
                for k in 0..2 {
                    tlo[k] = tlo[k].min(p[k]);
                    thi[k] = thi[k].max(p[k]);
                }
            }
            let ix0 = (((tlo[0] - lo[0]) * inv_h) as usize).min(nx - 1);
            let ix1 = (((thi[0] - lo[0]) * inv_h) as usize).min(nx - 1);
            let iy0 = (((tlo[1] - lo[1]) * inv_h) as usize).min(ny - 1);
            let iy1 = (((thi[1] - lo[1]) * inv_h) as usize).min(ny - 1);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    bins[iy * nx + ix].push(t_idx as u32);
                }
            }
        }
        PointLocator {
            mesh,
            x0: lo[0],
            y0: lo[1],
            inv_h,
            nx,
            ny,
            bins,
        }
    }

    /// P1 interpolation of a nodal field at a point, if inside the mesh.
    pub fn interpolate(&self, u: &[f64], p: [f64; 2]) -> Option<f64> {
        let ix = (((p[0] - self.x0) * self.inv_h) as isize).clamp(0, self.nx as isize - 1);
        let iy = (((p[1] - self.y0) * self.inv_h) as isize).clamp(0, self.ny as isize - 1);
        let m = self.mesh;
        for &t_idx in &self.bins[iy as usize * self.nx + ix as usize] {
            let t = m.triangles[t_idx as usize];
            let p0 = m.nodes[t[0] as usize];
            let p1 = m.nodes[t[1] as usize];
            let p2 = m.nodes[t[2] as usize];
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            if det == 0.0 {
                continue;
            }
            let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
            let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
            let l0 = 1.0 - l1 - l2;
            let tol = -1e-10;
            if l0 >= tol && l1 >= tol && l2 >= tol {
                return Some(
                    l0 * u[t[0] as usize] + l1 * u[t[1] as usize] + l2 * u[t[2] as usize],
                );
            }
        }
        None
    }
}

/// Cross-sectional means of a nodal field at the given heights.
/// Returns `(z, mean)` for every height where at least 8 interior sample
/// points landed inside the mesh.
pub fn cross_section_means(
    u: &[f64],
    mesh: &Mesh,
    geom: &CuspGeometry,
    zs: &[f64],
) -> Vec<(f64, f64)> {
    let locator = PointLocator::new(mesh);
    let mut out = Vec::with_capacity(zs.len());
    let n_pts = 16;
    for &z in zs {
        let w = geom.half_width(z) * 0.9;
        let mut sum = 0.0;
        let mut cnt = 0;
        for i in 0..n_pts {
            let y = -w + 2.0 * w * (i as f64 + 0.5) / n_pts as f64;
            if let Some(v) = locator.interpolate(u, [y, z]) {
                sum += v;
                cnt += 1;
            }
        }
        if cnt >= 8 {
            out.push((z, sum / cnt as f64));
        }
    }
    out
}

/// Fit a computed eigenfunction's cusp content to the wave basis over a
/// window `(z₁, z₂) ⊂ (ε, d)`. 40 log-uniform cross sections.
pub fn fit_cusp_wave(
    u: &[f64],
    mesh: &Mesh,
    lambda: f64,
    window: (f64, f64),
    geom: &CuspGeometry,
) -> Result<WaveFit> {
    let (z1, z2) = window;
    if !(z1 > 0.0 && z1 < z2 && z2 <= geom.d) {
        return Err(Error::invalid(format!(
            "window ({z1}, {z2}) not inside (0, d)"
        )));
    }
    if u.len() != mesh.nodes.len() {
        return Err(Error::DimensionMismatch {
            expected: mesh.nodes.len(),
            got: u.len(),
        });
    }
    let n_sections = 40;
    let zs: Vec<f64> = (0..n_sections)
        .map(|i| (z1.ln() + (z2 / z1).ln() * i as f64 / (n_sections - 1) as f64).exp())
        .collect();
    let means = cross_section_means(u, mesh, geom, &zs);
    let samples: Vec<(f64, Complex64)> = means
        .iter()
        .map(|&(z, m)| (z, Complex64::new(m, 0.0)))
        .collect();
    fit_profile(&samples, lambda, geom)
}

/// The crossing relation inverted: at an ε where `λ♭` is an eigenvalue,
/// `Θ = (−2 τ₀(λ♭) ln ε − π) mod 2π`.
pub fn estimate_theta_from_crossing(
    epsilon_star: f64,
    lambda_flat: f64,
    geom: &CuspGeometry,
) -> Result<f64> {
    if !(epsilon_star > 0.0 && epsilon_star < 1.0) {
        return Err(Error::invalid(format!(
            "crossing epsilon {epsilon_star} outside (0, 1)"
        )));
    }
    let t0 = tau0(lambda_flat, geom)?;
    Ok(wrap_phase(-2.0 * t0 * epsilon_star.ln() - PI))
}

/// Result of the two-solve scattering-phase extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScatteringPhase {
    pub lambda: f64,
    pub theta: f64,
    /// `|s|` from the fitted amplitude ratio (1 exactly for real solves).
    pub s_abs: f64,
    /// Phase from each of the two solves.
    pub theta_each: (f64, f64),
    /// Circular disagreement of the two estimates (radians).
    pub disagreement: f64,
    pub delta_used: f64,
    pub retried: bool,
    pub geom_hash: String,
}

/// Mesh resolution for the scattering solves.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitMeshParams {
    pub h: f64,
    pub grading: f64,
}

impl Default for FitMeshParams {
    fn default() -> Self {
        FitMeshParams {
            h: 0.03,
            grading: 1.0,
        }
    }
}

/// Estimate Θ(λ) by solving the fixed-λ problem twice on `Ω^δ` with two
/// independent Dirichlet end data and fitting each solution's cusp profile.
///
/// Every solution regular in the body carries the standing-wave phase of the
/// body reflection, so the two fitted `(α, β)` pairs must be parallel; their
/// common phase gives `Θ = arg(b₊/b₋)`. Disagreement between the two solves
/// measures the evanescent/resonance pollution: on disagreement the solve is
/// retried once with a shifted δ and stronger second datum.
pub fn scattering_phase(
    lambda: f64,
    delta: f64,
    window: (f64, f64),
    geom: &CuspGeometry,
    params: FitMeshParams,
) -> Result<ScatteringPhase> {
    let thr = threshold(geom);
    if !(lambda > thr) {
        return Err(Error::SpectralDomain {
            lambda,
            threshold: thr,
        });
    }
    if !(delta > 0.0 && delta < window.0) {
        return Err(Error::invalid(format!(
            "delta = {delta} must sit below the window ({}, {})",
            window.0, window.1
        )));
    }
    let attempt = |delta: f64, second_amp: f64| -> Result<(f64, f64, f64)> {
        let dom = make_domain(geom, delta)?;
        let mesh = make_mesh(&dom, params.h, params.grading)?;
        let sys = assemble(&mesh, EndCondition::Neumann, false)?;
        // resonance guard: keep λ away from the δ-truncated Dirichlet-end
        // spectrum
        {
            let dsys = assemble(&mesh, EndCondition::Dirichlet, false)?;
            let nb = dsys.m_gamma.support().len();
            let probe = steklov_spectrum(&dsys, nb.min(48))?;
            for &l in &probe.eigenvalues {
                if (l - lambda).abs() < 1e-3 * lambda.max(1.0) {
                    return Err(Error::Numerical(format!(
                        "lambda = {lambda} within 1e-3 of a truncated eigenvalue {l}"
                    )));
                }
            }
        }
        let end_nodes = mesh.boundary_nodes(BoundaryTag::ArtificialEnd);
        let w_end = geom.half_width(delta);
        let data1 = |_y: f64| 1.0;
        let data2 = move |y: f64| 1.0 + second_amp * (PI * (y + w_end) / w_end).cos();
        let u1 = solve_fixed_lambda(&sys, &mesh, lambda, &end_nodes, &data1)?;
        let u2 = solve_fixed_lambda(&sys, &mesh, lambda, &end_nodes, &data2)?;
        let f1 = fit_cusp_wave(&u1, &mesh, lambda, window, geom)?;
        let f2 = fit_cusp_wave(&u2, &mesh, lambda, window, geom)?;
        let th1 = f1
            .theta_hat
            .ok_or_else(|| Error::Numerical("first solve: phase undefined".into()))?;
        let th2 = f2
            .theta_hat
            .ok_or_else(|| Error::Numerical("second solve: phase undefined".into()))?;
        let s_abs = ((f1.b_plus_abs / f1.b_minus_abs) * (f2.b_plus_abs / f2.b_minus_abs)).sqrt();
        Ok((th1, th2, s_abs))
    };
    let mut retried = false;
    let mut delta_used = delta;
    let mut outcome = attempt(delta, 0.5);
    let acceptable = |o: &(f64, f64, f64)| phase_distance(o.0, o.1).abs() <= 0.3;
    if !outcome.as_ref().map(|o| acceptable(o)).unwrap_or(false) {
        retried = true;
        delta_used = delta * 1.25;
        outcome = attempt(delta_used, 2.0);
    }
    let (th1, th2, s_abs) = outcome?;
    let dis = phase_distance(th1, th2).abs();
    if dis > 0.5 {
        return Err(Error::Numerical(format!(
            "scattering phase estimates disagree by {dis:.3} rad after retry"
        )));
    }
    let theta = wrap_phase(th1 + 0.5 * phase_distance(th2, th1));
    Ok(ScatteringPhase {
        lambda,
        theta,
        s_abs,
        theta_each: (th1, th2),
        disagreement: dis,
        delta_used,
        retried,
        geom_hash: geom.geom_hash(),
    })
}

/// Solve `(A − λ M_Γ) u = 0` with prescribed values on the end nodes.
fn solve_fixed_lambda(
    sys: &crate::assembly::AssembledSystem,
    mesh: &Mesh,
    lambda: f64,
    end_nodes: &[usize],
    data: &dyn Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    let nf = sys.n_free();
    let mut prescribed: Vec<Option<f64>> = vec![None; nf];
    for &node in end_nodes {
        if let Some(eq) = sys.node_to_eq[node] {
            prescribed[eq] = Some(data(mesh.nodes[node][0]));
        }
    }
    let keep: Vec<usize> = (0..nf).filter(|&i| prescribed[i].is_none()).collect();
    let mut pos = vec![usize::MAX; nf];
    for (k, &i) in keep.iter().enumerate() {
        pos[i] = k;
    }
    let b = |i: usize, j: usize, a: f64, m: f64| -> f64 {
        let _ = (i, j);
        a - lambda * m
    };
    let mut trip = Triplets::new(keep.len());
    let mut rhs = vec![0.0; keep.len()];
    let m_of = |mat: &CsrMatrix, i: usize| -> Vec<(usize, f64)> { mat.row(i).collect() };
    for (r, &i) in keep.iter().enumerate() {
        let mut mrow = vec![0.0; 0];
        mrow.clear();
        let arow = m_of(&sys.a, i);
        let grow = m_of(&sys.m_gamma, i);
        // merge sparse rows of A and M
        let mut vals: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
        for (j, v) in arow {
            vals.entry(j).or_insert((0.0, 0.0)).0 += v;
        }
        for (j, v) in grow {
            vals.entry(j).or_insert((0.0, 0.0)).1 += v;
        }
        for (j, (av, mv)) in vals {
            let coeff = b(i, j, av, mv);
            match prescribed[j] {
                None => trip.push(r, pos[j], coeff),
                Some(g) => rhs[r] -= coeff * g,
            }
        }
    }
    let factor = EnvelopeFactor::factor(&trip.to_csr(), FactorKind::Indefinite)
        .map_err(|e| Error::Numerical(format!("fixed-lambda solve: {e}")))?;
    if factor.min_pivot() < 1e-10 {
        return Err(Error::Numerical(
            "fixed-lambda system nearly singular (resonance); shift delta".into(),
        ));
    }
    let sol = factor.solve(&rhs);
    let mut free = vec![0.0; nf];
    for (r, &i) in keep.iter().enumerate() {
        free[i] = sol[r];
    }
    for i in 0..nf {
        if let Some(g) = prescribed[i] {
            free[i] = g;
        }
    }
    Ok(sys.scatter(&free))
}

/// The 1D analogue of [`scattering_phase`] on the reduced model with a
/// Dirichlet condition at `z = d`: solve the fixed-λ two-point problem from
/// `z = delta`, fit the window profile, return Θ. Agrees with the
/// closed-form phase `(π − 2 τ₀ ln d) mod 2π` to high accuracy.
pub fn scattering_phase_reduced(
    lambda: f64,
    delta: f64,
    window: (f64, f64),
    d: f64,
    geom: &CuspGeometry,
) -> Result<f64> {
    let profile =
        crate::reduced_model::reduced_bvp_profile(lambda, delta, d, geom, 200_000, 1.0, 0.0)?;
    let samples: Vec<(f64, Complex64)> = profile
        .iter()
        .filter(|&&(z, _)| z >= window.0 && z <= window.1)
        .step_by(97)
        .map(|&(z, w)| (z, Complex64::new(w, 0.0)))
        .collect();
    let fit = fit_profile(&samples, lambda, geom)?;
    fit.theta_hat
        .ok_or_else(|| Error::Numerical("reduced-model phase undefined".into()))
}
