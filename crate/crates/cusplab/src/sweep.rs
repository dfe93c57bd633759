//! ε-sweep orchestration: spectra over a log grid of blunting parameters,
//! eigenvalue branch tracking, crossing detection for fixed `λ♭`, and the
//! stable / blinking / gliding reports.

use crate::assembly::assemble;
use crate::asymptotics::{gliding_speed, tau0, threshold};
use crate::eigensolve::{steklov_spectrum, Spectrum};
use crate::geometry::{
    make_domain, make_half_domain, make_mesh, CuspGeometry, EndCondition, Mesh,
};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Parameters of a single-ε solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveParams {
    pub h: f64,
    pub grading: f64,
    pub count: usize,
    pub end_condition: EndCondition,
    pub odd_sector: bool,
    /// Solve on the half domain (requires mirror symmetry).
    pub half_domain: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            h: 0.05,
            grading: 1.0,
            count: 12,
            end_condition: EndCondition::Dirichlet,
            odd_sector: false,
            half_domain: false,
        }
    }
}

/// Mesh + spectrum for one blunting parameter.
pub fn solve_at_epsilon(
    geom: &CuspGeometry,
    epsilon: f64,
    params: &SolveParams,
) -> Result<(Mesh, Spectrum)> {
    let dom = if params.half_domain {
        make_half_domain(geom, epsilon)?
    } else {
        make_domain(geom, epsilon)?
    };
    let mesh = make_mesh(&dom, params.h, params.grading)?;
    let sys = assemble(&mesh, params.end_condition, params.odd_sector)?;
    let mut spec = steklov_spectrum(&sys, params.count)?;
    spec.epsilon = epsilon;
    spec.mesh_id = format!(
        "{}:h={:.3e}:g={:.3}:eps={:.12e}{}{}",
        geom.geom_hash(),
        params.h,
        params.grading,
        epsilon,
        if params.half_domain { ":half" } else { "" },
        if params.odd_sector { ":odd" } else { "" },
    );
    Ok((mesh, spec))
}

/// Sweep settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepParams {
    pub eps_min: f64,
    pub eps_max: f64,
    pub points_per_decade: usize,
    #[serde(flatten)]
    pub solve: SolveParams,
}

/// Spectra over a descending log grid of ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub geom_hash: String,
    pub geometry: CuspGeometry,
    pub params: SweepParams,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    /// One per ε; `None` where the solve failed.
    pub spectra: Vec<Option<Spectrum>>,
    /// `(grid index, message)` for failed solves.
    pub failures: Vec<(usize, String)>,
}

impl SweepResult {
    /// Indices and spectra of the successful points, in grid order.
    pub fn solved(&self) -> impl Iterator<Item = (usize, &Spectrum)> {
        self.spectra
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|sp| (i, sp)))
    }
}

/// The descending ε grid: `eps_max · 10^{−i/ppd}` down to `eps_min`.
pub fn epsilon_grid(eps_min: f64, eps_max: f64, points_per_decade: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let e = eps_max * 10f64.powf(-(i as f64) / points_per_decade as f64);
        if e < eps_min * (1.0 - 1e-12) {
            break;
        }
        out.push(e);
        i += 1;
    }
    out
}

fn spectrum_file(out_dir: &Path, idx: usize) -> std::path::PathBuf {
    out_dir.join(format!("spectrum_{idx:04}.json"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Compute spectra across the ε grid. Individual solve failures are
/// recorded and the sweep continues; more than 10% failures aborts.
///
/// With `out_dir` set, per-ε spectra are persisted incrementally (atomic
/// replacement) and reloaded on restart, so an interrupted sweep resumes and
/// produces byte-identical results.
pub fn sweep_epsilon(
    geom: &CuspGeometry,
    params: &SweepParams,
    out_dir: Option<&Path>,
) -> Result<SweepResult> {
    geom.validate()?;
    if !(params.eps_min >= 1e-3 * geom.d) {
        return Err(Error::invalid(format!(
            "eps_min = {} below 1e-3 d = {}: the neck width a eps^2 = {:.2e} cannot be \
             resolved at feasible h",
            params.eps_min,
            1e-3 * geom.d,
            geom.a * params.eps_min * params.eps_min
        )));
    }
    if !(params.eps_max > params.eps_min) {
        return Err(Error::invalid("eps_max must exceed eps_min"));
    }
    if params.points_per_decade == 0 {
        return Err(Error::invalid("points_per_decade must be positive"));
    }
    let epsilons = epsilon_grid(params.eps_min, params.eps_max, params.points_per_decade);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    // reload persisted points
    let mut spectra: Vec<Option<Spectrum>> = vec![None; epsilons.len()];
    if let Some(dir) = out_dir {
        for (i, slot) in spectra.iter_mut().enumerate() {
            let path = spectrum_file(dir, i);
            if let Ok(text) = std::fs::read_to_string(&path) {
                if let Ok(spec) = serde_json::from_str::<Spectrum>(&text) {
                    *slot = Some(spec);
                }
            }
        }
    }
    let todo: Vec<usize> = (0..epsilons.len())
        .filter(|&i| spectra[i].is_none())
        .collect();
    let results: Vec<(usize, std::result::Result<Spectrum, String>)> = todo
        .par_iter()
        .map(|&i| {
            let r = solve_at_epsilon(geom, epsilons[i], &params.solve)
                .map(|(_, s)| s)
                .map_err(|e| e.to_string());
            (i, r)
        })
        .collect();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(spec) => {
                if let Some(dir) = out_dir {
                    write_atomic(
                        &spectrum_file(dir, i),
                        serde_json::to_string_pretty(&spec)?.as_bytes(),
                    )?;
                }
                spectra[i] = Some(spec);
            }
            Err(msg) => failures.push((i, msg)),
        }
    }
    failures.sort_unstable_by_key(|f| f.0);
    if failures.len() * 10 > epsilons.len() {
        return Err(Error::Numerical(format!(
            "{} of {} solves failed; first: {}",
            failures.len(),
            epsilons.len(),
            failures[0].1
        )));
    }
    let result = SweepResult {
        geom_hash: geom.geom_hash(),
        geometry: geom.clone(),
        params: *params,
        epsilons,
        spectra,
        failures,
    };
    if let Some(dir) = out_dir {
        write_atomic(
            &dir.join("sweep.json"),
            serde_json::to_string_pretty(&result)?.as_bytes(),
        )?;
    }
    Ok(result)
}

/// Diagnostic label of a tracked branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchLabel {
    Gliding,
    Stable,
    Unclassified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint {
    pub epsilon: f64,
    pub lambda: f64,
    /// Index into `SweepResult::epsilons`.
    pub grid_index: usize,
    /// Index of the eigenvalue within its spectrum.
    pub eigen_index: usize,
    /// Local `dλ/dε` from centered differences (0 at branch ends).
    pub slope: f64,
}

/// A tracked eigenvalue family across ε, ordered by decreasing ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub label: BranchLabel,
    /// Set when matching became ambiguous and the branch was split.
    pub ambiguous: bool,
}

/// Greedy bipartite matching between adjacent spectra, predicting each
/// branch forward with its local slope in `ln ε`. Ambiguous matches (two
/// candidates within 10% of each other) split the branch.
pub fn track_branches(sweep: &SweepResult) -> Result<Vec<Branch>> {
    let max_ratio = 10f64.powf(1.0 / 20.0) * (1.0 + 1e-9);
    let solved: Vec<(usize, &Spectrum)> = sweep.solved().collect();
    if solved.is_empty() {
        return Ok(Vec::new());
    }
    for w in solved.windows(2) {
        let r = sweep.epsilons[w[0].0] / sweep.epsilons[w[1].0];
        if r > max_ratio * 1.000001 {
            return Err(Error::invalid(format!(
                "consecutive eps ratio {r:.4} exceeds 10^(1/20); grid too coarse for tracking"
            )));
        }
    }
    struct Active {
        branch: usize,
        lambda: f64,
        slope_ln: f64, // dλ / d ln ε
    }
    let mut branches: Vec<Branch> = Vec::new();
    let mut active: Vec<Active> = Vec::new();
    let mut prev_lneps = 0.0;
    for (pos, &(gi, spec)) in solved.iter().enumerate() {
        let eps = sweep.epsilons[gi];
        let lneps = eps.ln();
        let lambdas = &spec.eigenvalues;
        let mut taken = vec![false; lambdas.len()];
        if pos == 0 {
            for (j, &l) in lambdas.iter().enumerate() {
                branches.push(Branch {
                    points: vec![BranchPoint {
                        epsilon: eps,
                        lambda: l,
                        grid_index: gi,
                        eigen_index: j,
                        slope: 0.0,
                    }],
                    label: BranchLabel::Unclassified,
                    ambiguous: false,
                });
                active.push(Active {
                    branch: branches.len() - 1,
                    lambda: l,
                    slope_ln: 0.0,
                });
            }
            prev_lneps = lneps;
            continue;
        }
        let dln = lneps - prev_lneps; // negative
        let spacing = |j: usize| -> f64 {
            let mut s = f64::INFINITY;
            if j > 0 {
                s = s.min(lambdas[j] - lambdas[j - 1]);
            }
            if j + 1 < lambdas.len() {
                s = s.min(lambdas[j + 1] - lambdas[j]);
            }
            s
        };
        // collect candidates per active branch
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new(); // (dist, active idx, eigen idx)
        let mut ambiguous_flags = vec![false; active.len()];
        for (ai, a) in active.iter().enumerate() {
            let pred = a.lambda + a.slope_ln * dln;
            let gate_base = (3.0 * (a.slope_ln * dln).abs()).max(1e-9 * (1.0 + pred.abs()));
            let mut cands: Vec<(f64, usize)> = Vec::new();
            for (j, &l) in lambdas.iter().enumerate() {
                let dist = (l - pred).abs();
                let gate = gate_base.max(0.45 * spacing(j));
                if dist <= gate {
                    cands.push((dist, j));
                }
            }
            cands.sort_by(|x, y| x.0.total_cmp(&y.0));
            if cands.len() >= 2 && cands[1].0 <= 1.1 * cands[0].0 {
                ambiguous_flags[ai] = true;
                continue;
            }
            if let Some(&(d, j)) = cands.first() {
                pairs.push((d, ai, j));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut assigned: Vec<Option<usize>> = vec![None; active.len()];
        for (_, ai, j) in pairs {
            if assigned[ai].is_none() && !taken[j] {
                assigned[ai] = Some(j);
                taken[j] = true;
            }
        }
        let mut next_active = Vec::new();
        for (ai, a) in active.iter().enumerate() {
            if let Some(j) = assigned[ai] {
                let l = lambdas[j];
                branches[a.branch].points.push(BranchPoint {
                    epsilon: eps,
                    lambda: l,
                    grid_index: gi,
                    eigen_index: j,
                    slope: 0.0,
                });
                next_active.push(Active {
                    branch: a.branch,
                    lambda: l,
                    slope_ln: (l - a.lambda) / dln,
                });
            } else if ambiguous_flags[ai] {
                branches[a.branch].ambiguous = true;
            }
        }
        for (j, &l) in lambdas.iter().enumerate() {
            if !taken[j] {
                branches.push(Branch {
                    points: vec![BranchPoint {
                        epsilon: eps,
                        lambda: l,
                        grid_index: gi,
                        eigen_index: j,
                        slope: 0.0,
                    }],
                    label: BranchLabel::Unclassified,
                    ambiguous: false,
                });
                next_active.push(Active {
                    branch: branches.len() - 1,
                    lambda: l,
                    slope_ln: 0.0,
                });
            }
        }
        active = next_active;
        prev_lneps = lneps;
    }
    // slope diagnostics by centered differences in ε
    for b in &mut branches {
        let n = b.points.len();
        for i in 0..n {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            if hi > lo {
                let de = b.points[hi].epsilon - b.points[lo].epsilon;
                b.points[i].slope = (b.points[hi].lambda - b.points[lo].lambda) / de;
            }
        }
    }
    Ok(branches)
}

/// Label branches: Stable needs ε-insensitivity over at least a decade,
/// Gliding needs the observed/predicted speed ratio within `[0.3, 3]` on at
/// least 5 points. Labels are diagnostics, not a partition.
pub fn classify_branches(branches: &mut [Branch], geom: &CuspGeometry) {
    let thr = threshold(geom);
    for b in branches.iter_mut() {
        if b.points.len() < 2 {
            continue;
        }
        let first = b.points.first().unwrap();
        let last = b.points.last().unwrap();
        let decades = (first.epsilon / last.epsilon).log10();
        let lmid: f64 = b.points.iter().map(|p| p.lambda).sum::<f64>() / b.points.len() as f64;
        let max_rel = b
            .points
            .iter()
            .map(|p| ((p.lambda - lmid) / lmid.max(1e-300)).abs())
            .fold(0.0, f64::max);
        if decades >= 1.0 - 1e-9 && max_rel <= 1e-3 {
            b.label = BranchLabel::Stable;
            continue;
        }
        let mut good = 0usize;
        let mut eligible = 0usize;
        for p in &b.points {
            if p.lambda <= thr * 1.0001 || p.slope == 0.0 {
                continue;
            }
            eligible += 1;
            if let Ok(pred) = gliding_speed(p.lambda, p.epsilon, geom) {
                let ratio = p.slope / pred;
                if (0.3..=3.0).contains(&ratio) {
                    good += 1;
                }
            }
        }
        if good >= 5 && good * 10 >= eligible * 6 {
            b.label = BranchLabel::Gliding;
        }
    }
}

/// Crossings of a fixed `λ♭`: sign changes along branches, located by
/// linear interpolation in `(ln ε, λ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingSet {
    pub lambda_flat: f64,
    /// Strictly decreasing interpolated ε* values.
    pub crossings: Vec<f64>,
    /// `ln ε*_k − ln ε*_{k+1}`.
    pub log_gaps: Vec<f64>,
    /// `π / τ₀(λ♭)`.
    pub predicted_gap: f64,
}

pub fn detect_crossings(sweep: &SweepResult, lambda_flat: f64) -> Result<CrossingSet> {
    let geom = &sweep.geometry;
    let t0 = tau0(lambda_flat, geom)?; // rejects lambda <= threshold
    let max_lambda = sweep
        .solved()
        .flat_map(|(_, s)| s.eigenvalues.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    if lambda_flat >= max_lambda {
        return Err(Error::invalid(format!(
            "lambda_flat = {lambda_flat} above the computed spectrum (max {max_lambda})"
        )));
    }
    let mut branches = track_branches(sweep)?;
    classify_branches(&mut branches, geom);
    let mut crossings = Vec::new();
    for b in &branches {
        let xs: Vec<f64> = b.points.iter().map(|p| p.epsilon.ln()).collect();
        let ys: Vec<f64> = b.points.iter().map(|p| p.lambda).collect();
        for i in 0..b.points.len().saturating_sub(1) {
            let (fa, fb) = (ys[i] - lambda_flat, ys[i + 1] - lambda_flat);
            if fa == 0.0 {
                crossings.push(b.points[i].epsilon);
            } else if fa * fb < 0.0 {
                crossings.push(monotone_root(&xs, &ys, i, lambda_flat).exp());
            }
        }
        if let Some(last) = ys.last() {
            if *last == lambda_flat && ys.len() >= 2 && ys[ys.len() - 2] != lambda_flat {
                crossings.push(b.points.last().unwrap().epsilon);
            }
        }
    }
    crossings.sort_by(|a, b| b.total_cmp(a));
    crossings.dedup_by(|a, b| ((*a - *b) / *b).abs() < 1e-12);
    let log_gaps = crossings
        .windows(2)
        .map(|w| w[0].ln() - w[1].ln())
        .collect();
    Ok(CrossingSet {
        lambda_flat,
        crossings,
        log_gaps,
        predicted_gap: std::f64::consts::PI / t0,
    })
}

/// Fritsch–Carlson monotone slope at point `i` of `(xs, ys)`.
fn pchip_slope(xs: &[f64], ys: &[f64], i: usize) -> f64 {
    let n = xs.len();
    let sec = |j: usize| (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]);
    if n < 2 {
        return 0.0;
    }
    if i == 0 {
        return sec(0);
    }
    if i == n - 1 {
        return sec(n - 2);
    }
    let d0 = sec(i - 1);
    let d1 = sec(i);
    if d0 * d1 <= 0.0 {
        return 0.0;
    }
    let h0 = xs[i] - xs[i - 1];
    let h1 = xs[i + 1] - xs[i];
    let w1 = 2.0 * h1 + h0;
    let w2 = h1 + 2.0 * h0;
    (w1 + w2) / (w1 / d0 + w2 / d1)
}

/// Root of the monotone cubic Hermite interpolant on `[xs[i], xs[i+1]]`
/// where `ys` crosses `target` (sign change assumed on that interval).
fn monotone_root(xs: &[f64], ys: &[f64], i: usize, target: f64) -> f64 {
    let (x0, x1) = (xs[i], xs[i + 1]);
    let (y0, y1) = (ys[i], ys[i + 1]);
    let h = x1 - x0;
    let m0 = pchip_slope(xs, ys, i) * h;
    let m1 = pchip_slope(xs, ys, i + 1) * h;
    let eval = |t: f64| {
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
            - target
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let flo = eval(lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) * flo.signum() >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    x0 + 0.5 * (lo + hi) * h
}

/// One row of the gliding-speed report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlidingRow {
    pub branch_id: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub observed: f64,
    pub predicted: f64,
    pub ratio: f64,
}

/// Observed vs predicted descent speed along every branch with at least
/// 5 points; branches shorter than that are skipped.
pub fn gliding_report(branches: &[Branch], geom: &CuspGeometry) -> Vec<GlidingRow> {
    let thr = threshold(geom);
    let mut rows = Vec::new();
    for (bi, b) in branches.iter().enumerate() {
        if b.points.len() < 5 {
            continue;
        }
        for p in &b.points {
            if p.lambda <= thr || p.slope == 0.0 {
                continue;
            }
            if let Ok(pred) = gliding_speed(p.lambda, p.epsilon, geom) {
                rows.push(GlidingRow {
                    branch_id: bi,
                    epsilon: p.epsilon,
                    lambda: p.lambda,
                    observed: p.slope,
                    predicted: pred,
                    ratio: p.slope / pred,
                });
            }
        }
    }
    rows
}

/// A trapped-mode candidate from the odd sector with its ε-insensitivity
/// certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrappedMode {
    pub lambda: f64,
    pub lambda_at_half_eps: f64,
    /// `|λ(ε) − λ(ε/2)| / λ(ε)`.
    pub rel_change: f64,
}

/// Odd-sector (half-domain, Dirichlet symmetry plane) eigenvalues at a very
/// small ε, certified by comparing against ε/2. The odd sector has no
/// propagating cusp channel, so these converge superpolynomially and the end
/// condition is immaterial.
pub fn trapped_modes(geom: &CuspGeometry, h: f64, count: usize) -> Result<Vec<TrappedMode>> {
    if !geom.mirror_symmetric {
        return Err(Error::SymmetryRequired);
    }
    let eps1 = 1e-2 * geom.d;
    let eps2 = eps1 / 2.0;
    let params = SolveParams {
        h,
        grading: 1.0,
        count,
        end_condition: EndCondition::Dirichlet,
        odd_sector: true,
        half_domain: true,
    };
    let (_, s1) = solve_at_epsilon(geom, eps1, &params)?;
    let (_, s2) = solve_at_epsilon(geom, eps2, &params)?;
    Ok(s1
        .eigenvalues
        .iter()
        .zip(&s2.eigenvalues)
        .map(|(&l1, &l2)| TrappedMode {
            lambda: l1,
            lambda_at_half_eps: l2,
            rel_change: (l1 - l2).abs() / l1,
        })
        .collect())
}

/// One row of the stable-eigenvalue convergence table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StableRow {
    pub epsilon: f64,
    pub nearest_lambda: f64,
    pub gap: f64,
    /// Fitted local order between this ε and the next smaller one.
    pub beta_obs: Option<f64>,
    /// Mirror parity of the matched eigenvector: −1 odd, +1 even.
    pub parity: f64,
    /// Set when no eigenvalue lies within half the local spectral gap
    /// (possible mis-tracking).
    pub flagged: bool,
}

/// Convergence of the full-problem spectrum toward a trapped-mode value
/// `λ^tr` as ε decreases, with parities for disambiguation from gliding
/// branches sweeping through.
pub fn stable_report(
    geom: &CuspGeometry,
    lambda_tr: f64,
    eps_list: &[f64],
    params: &SolveParams,
) -> Result<Vec<StableRow>> {
    let mut rows: Vec<StableRow> = Vec::new();
    let solves: Vec<Result<(Mesh, Spectrum)>> = eps_list
        .par_iter()
        .map(|&eps| solve_at_epsilon(geom, eps, params))
        .collect();
    for solve in solves {
        let (mesh, spec) = solve?;
        let (k, &nearest) = spec
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - lambda_tr).abs().total_cmp(&(b.1 - lambda_tr).abs()))
            .ok_or_else(|| Error::Internal("empty spectrum".into()))?;
        let gap = (nearest - lambda_tr).abs();
        let mut spacing = f64::INFINITY;
        if k > 0 {
            spacing = spacing.min(nearest - spec.eigenvalues[k - 1]);
        }
        if k + 1 < spec.eigenvalues.len() {
            spacing = spacing.min(spec.eigenvalues[k + 1] - nearest);
        }
        let flagged = gap > 0.5 * spacing;
        let parity = match (mesh.mirror_node_map(), spec.eigenvectors.get(k)) {
            (Some(map), Some(u)) => {
                let mut num = 0.0;
                let mut den = 0.0;
                for (i, &v) in u.iter().enumerate() {
                    num += v * u[map[i]];
                    den += v * v;
                }
                num / den.max(1e-300)
            }
            _ => f64::NAN,
        };
        rows.push(StableRow {
            epsilon: spec.epsilon,
            nearest_lambda: nearest,
            gap,
            beta_obs: None,
            parity,
            flagged,
        });
    }
    for i in 0..rows.len().saturating_sub(1) {
        let (g0, g1) = (rows[i].gap, rows[i + 1].gap);
        let (e0, e1) = (rows[i].epsilon, rows[i + 1].epsilon);
        if g0 > 0.0 && g1 > 0.0 && e0 != e1 {
            rows[i].beta_obs = Some((g0 / g1).ln() / (e0 / e1).ln());
        }
    }
    Ok(rows)
}

/// CSV table of branch points: `epsilon,lambda,branch_id,slope,label`.
pub fn branches_csv(branches: &[Branch]) -> String {
    let mut s = String::from("epsilon,lambda,branch_id,slope,label\n");
    for (bi, b) in branches.iter().enumerate() {
        for p in &b.points {
            s.push_str(&format!(
                "{:.16e},{:.16e},{},{:.16e},{:?}\n",
                p.epsilon, p.lambda, bi, p.slope, b.label
            ));
        }
    }
    s
}

/// SVG plot of λ against ln ε with branches, a horizontal `λ♭` line and the
/// predicted blinking grid.
pub fn render_svg(
    branches: &[Branch],
    lambda_flat: Option<f64>,
    predicted_epsilons: &[f64],
    lambda_max: f64,
) -> String {
    let (w, hgt) = (900.0, 600.0);
    let (ml, mr, mt, mb) = (60.0, 20.0, 20.0, 45.0);
    let mut lne_min = f64::INFINITY;
    let mut lne_max = f64::NEG_INFINITY;
    for b in branches {
        for p in &b.points {
            lne_min = lne_min.min(p.epsilon.ln());
            lne_max = lne_max.max(p.epsilon.ln());
        }
    }
    if !lne_min.is_finite() {
        lne_min = -7.0;
        lne_max = -2.0;
    }
    let xmap = |lne: f64| ml + (lne - lne_min) / (lne_max - lne_min).max(1e-9) * (w - ml - mr);
    let ymap = |l: f64| hgt - mb - (l / lambda_max).clamp(0.0, 1.0) * (hgt - mt - mb);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{hgt}\" \
         viewBox=\"0 0 {w} {hgt}\">\n<rect width=\"{w}\" height=\"{hgt}\" fill=\"white\"/>\n"
    );
    s.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        hgt - mb,
        w - mr,
        hgt - mb
    ));
    s.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        hgt - mb
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\">ln eps</text>\n",
        w / 2.0,
        hgt - 10.0
    ));
    s.push_str(&format!(
        "<text x=\"8\" y=\"{}\" font-size=\"13\">lambda</text>\n",
        hgt / 2.0
    ));
    for &pe in predicted_epsilons {
        let x = xmap(pe.ln());
        s.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{mt}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#bbbbbb\" \
             stroke-dasharray=\"5,4\"/>\n",
            hgt - mb
        ));
    }
    if let Some(lf) = lambda_flat {
        let y = ymap(lf);
        s.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#d06060\" \
             stroke-dasharray=\"7,4\"/>\n",
            w - mr
        ));
    }
    let palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];
    for (bi, b) in branches.iter().enumerate() {
        if b.points.is_empty() {
            continue;
        }
        let color = palette[bi % palette.len()];
        let pts: Vec<String> = b
            .points
            .iter()
            .filter(|p| p.lambda <= lambda_max)
            .map(|p| format!("{:.2},{:.2}", xmap(p.epsilon.ln()), ymap(p.lambda)))
            .collect();
        if pts.len() >= 2 {
            s.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.3\"/>\n",
                pts.join(" ")
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}
