//! Structured graded mesh of the cusp strip `ε <= z <= d`, `|y| <= a z²`.
//!
//! Layers march downward from `z = d`, so the layering above any given
//! height does not depend on `ε`; spectra computed at nearby blunting
//! parameters then share the mesh everywhere except near the end, which
//! keeps ε-comparisons (stable-eigenvalue certificates) free of mesh noise.
//!
//! Division counts across the width are powers of two times four and halve
//! at transition bands as the neck narrows, with at least four cells across
//! at every level. Cell aspect ratio is capped so the min-angle contract
//! can be met in the deep neck.

use super::{half_width, BoundaryTag};
use crate::{Error, Result};

/// Aspect-ratio cap: layer thickness at most this multiple of the local
/// across-width cell size.
const ASPECT_CAP: f64 = 1.5;

pub struct StripMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
    pub boundary: Vec<(u32, u32, BoundaryTag)>,
    /// Node indices of the interface level `z = d`, ordered left to right.
    pub top_nodes: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct Level {
    z: f64,
    n: usize, // cells across the full width
}

fn sizing(h: f64, grading: f64, z: f64, d: f64) -> f64 {
    h * (z / d).powf(grading).min(1.0)
}

fn division_count(a: f64, z: f64, s: f64) -> usize {
    let raw = 2.0 * half_width(a, z) / s;
    let mut n = 4usize;
    while (n as f64) < raw && n < 1 << 24 {
        n *= 2;
    }
    n
}

fn layer_levels(a: f64, d: f64, eps: f64, h: f64, grading: f64) -> Result<Vec<Level>> {
    let mut levels = vec![Level {
        z: d,
        n: division_count(a, d, sizing(h, grading, d, d)),
    }];
    let mut guard = 0usize;
    loop {
        let top = *levels.last().unwrap();
        if top.z <= eps {
            break;
        }
        let s = sizing(h, grading, top.z, d);
        let cell_w = 2.0 * half_width(a, top.z) / top.n as f64;
        // outer columns of the strip are sheared by the arc slope 2az;
        // thinner layers keep their min angle above the contract
        let shear = 2.0 * a * top.z;
        let dz = s.min(ASPECT_CAP * cell_w / (1.0 + shear));
        let z_next = if top.z - eps <= 1.45 * dz {
            eps
        } else {
            top.z - dz
        };
        let n_next = division_count(a, z_next, sizing(h, grading, z_next, d)).max(top.n / 2);
        levels.push(Level {
            z: z_next,
            n: n_next.min(top.n),
        });
        guard += 1;
        if guard > 4_000_000 {
            return Err(Error::MeshQuality(format!(
                "strip layering did not terminate (h = {h}, eps = {eps})"
            )));
        }
    }
    Ok(levels)
}

/// y-coordinates of the `n + 1` nodes of a level, exactly mirror symmetric.
fn level_ys(n: usize, w: f64) -> Vec<f64> {
    debug_assert!(n % 2 == 0);
    let half = n / 2;
    let mut ys = vec![0.0; n + 1];
    for j in 1..=half {
        let y = w * j as f64 / half as f64;
        ys[half + j] = y;
        ys[half - j] = -y;
    }
    ys
}

pub(crate) fn interface_ys(a: f64, d: f64, h: f64, grading: f64) -> (usize, Vec<f64>) {
    let n = division_count(a, d, sizing(h, grading, d, d));
    (n, level_ys(n, half_width(a, d)))
}

/// Build the strip. `half = true` keeps only `y >= 0` and tags the axis
/// edges as `SymmetryPlane`.
pub fn build_strip(
    a: f64,
    d: f64,
    eps: f64,
    h: f64,
    grading: f64,
    half: bool,
) -> Result<StripMesh> {
    let levels = layer_levels(a, d, eps, h, grading)?;
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut level_start: Vec<usize> = Vec::new();
    let mut level_counts: Vec<usize> = Vec::new(); // cells kept per level
    for lv in &levels {
        let ys = level_ys(lv.n, half_width(a, lv.z));
        let lo = if half { lv.n / 2 } else { 0 };
        level_start.push(nodes.len());
        level_counts.push(lv.n - lo);
        for &y in &ys[lo..] {
            nodes.push([y, lv.z]);
        }
    }
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for i in 0..levels.len() - 1 {
        let (nt, nb) = (levels[i].n, levels[i + 1].n);
        let (ts, bs) = (level_start[i], level_start[i + 1]);
        let lo_t = if half { nt / 2 } else { 0 };
        let lo_b = if half { nb / 2 } else { 0 };
        let tn = |j: usize| ts + j - lo_t;
        let bn = |j: usize| bs + j - lo_b;
        // right-half cells (full width spans j = 0..n; right half j >= n/2)
        let mut right: Vec<[usize; 3]> = Vec::new();
        if nb == nt {
            for j in nt / 2..nt {
                let (t1, t2) = best_split(&nodes, bn(j), bn(j + 1), tn(j + 1), tn(j));
                right.push(t1);
                right.push(t2);
            }
        } else {
            debug_assert_eq!(2 * nb, nt);
            for j in nb / 2..nb {
                right.push([bn(j), bn(j + 1), tn(2 * j + 1)]);
                right.push([bn(j), tn(2 * j + 1), tn(2 * j)]);
                right.push([bn(j + 1), tn(2 * j + 2), tn(2 * j + 1)]);
            }
        }
        for t in &right {
            triangles.push([t[0] as u32, t[1] as u32, t[2] as u32]);
        }
        if !half {
            // Left half by exact index mirroring (node j of a level maps to
            // node n - j); swap two vertices to restore orientation.
            let mirror = |idx: usize| -> usize {
                if idx >= bs {
                    bs + (nb - (idx - bs))
                } else {
                    ts + (nt - (idx - ts))
                }
            };
            for t in &right {
                triangles.push([
                    mirror(t[0]) as u32,
                    mirror(t[2]) as u32,
                    mirror(t[1]) as u32,
                ]);
            }
        }
    }
    // boundary edges
    let mut boundary: Vec<(u32, u32, BoundaryTag)> = Vec::new();
    let last = levels.len() - 1;
    for j in 0..level_counts[last] {
        boundary.push((
            (level_start[last] + j) as u32,
            (level_start[last] + j + 1) as u32,
            BoundaryTag::ArtificialEnd,
        ));
    }
    for i in 0..levels.len() - 1 {
        let right_t = level_start[i] + level_counts[i];
        let right_b = level_start[i + 1] + level_counts[i + 1];
        boundary.push((right_t as u32, right_b as u32, BoundaryTag::SteklovBoundary));
        let left_tag = if half {
            BoundaryTag::SymmetryPlane
        } else {
            BoundaryTag::SteklovBoundary
        };
        boundary.push((level_start[i] as u32, level_start[i + 1] as u32, left_tag));
    }
    let top_nodes: Vec<u32> = (0..level_counts[0] + 1)
        .map(|j| (level_start[0] + j) as u32)
        .collect();
    Ok(StripMesh {
        nodes,
        triangles,
        boundary,
        top_nodes,
    })
}

/// Split quad (b0, b1, t1, t0) [CCW] into two triangles, choosing the
/// diagonal that maximizes the minimum angle.
fn best_split(
    nodes: &[[f64; 2]],
    b0: usize,
    b1: usize,
    t1: usize,
    t0: usize,
) -> ([usize; 3], [usize; 3]) {
    let min_angle = |tri: &[usize; 3]| -> f64 {
        let p = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
        let mut worst = f64::INFINITY;
        for k in 0..3 {
            let a0 = p[k];
            let b = p[(k + 1) % 3];
            let c = p[(k + 2) % 3];
            let u = [b[0] - a0[0], b[1] - a0[1]];
            let v = [c[0] - a0[0], c[1] - a0[1]];
            let cross = u[0] * v[1] - u[1] * v[0];
            let dot = u[0] * v[0] + u[1] * v[1];
            worst = worst.min(cross.atan2(dot).abs());
        }
        worst
    };
    let split_a = ([b0, b1, t1], [b0, t1, t0]);
    let split_b = ([b0, b1, t0], [b1, t1, t0]);
    let qa = min_angle(&split_a.0).min(min_angle(&split_a.1));
    let qb = min_angle(&split_b.0).min(min_angle(&split_b.1));
    if qa >= qb {
        split_a
    } else {
        split_b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_reach_epsilon_exactly() {
        let levels = layer_levels(1.0, 1.0, 1e-2, 0.05, 1.0).unwrap();
        assert_eq!(levels.last().unwrap().z, 1e-2);
        assert_eq!(levels[0].z, 1.0);
        for w in levels.windows(2) {
            assert!(w[1].z < w[0].z);
            assert!(w[1].n == w[0].n || 2 * w[1].n == w[0].n);
            assert!(w[1].n >= 4);
        }
    }

    #[test]
    fn upper_layers_independent_of_epsilon() {
        let l1 = layer_levels(1.0, 1.0, 1e-2, 0.05, 1.0).unwrap();
        let l2 = layer_levels(1.0, 1.0, 5e-3, 0.05, 1.0).unwrap();
        for (a, b) in l1.iter().zip(l2.iter()).take(l1.len().saturating_sub(2)) {
            assert_eq!(a.z, b.z);
            assert_eq!(a.n, b.n);
        }
    }

    #[test]
    fn strip_triangles_positively_oriented() {
        for half in [false, true] {
            let s = build_strip(1.0, 1.0, 0.05, 0.1, 1.0, half).unwrap();
            assert!(!s.triangles.is_empty());
            for t in &s.triangles {
                let p0 = s.nodes[t[0] as usize];
                let p1 = s.nodes[t[1] as usize];
                let p2 = s.nodes[t[2] as usize];
                let area2 =
                    (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
                assert!(area2 > 0.0, "non-positive triangle in half={half}");
            }
        }
    }

    #[test]
    fn full_strip_nodes_mirror_symmetric() {
        let s = build_strip(1.0, 1.0, 0.05, 0.1, 1.0, false).unwrap();
        let mut set: std::collections::HashSet<(u64, u64)> = std::collections::HashSet::new();
        let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
        for p in &s.nodes {
            set.insert(key(*p));
        }
        for p in &s.nodes {
            let m = [if p[0] == 0.0 { 0.0 } else { -p[0] }, p[1]];
            assert!(set.contains(&key(m)), "missing mirror of {p:?}");
        }
    }

    #[test]
    fn strip_area_approximates_cusp_area() {
        // area of |y| <= z^2, 0.05 <= z <= 1 is 2/3 (1 - 0.05^3)
        let s = build_strip(1.0, 1.0, 0.05, 0.02, 1.0, false).unwrap();
        let mut area = 0.0;
        for t in &s.triangles {
            let p0 = s.nodes[t[0] as usize];
            let p1 = s.nodes[t[1] as usize];
            let p2 = s.nodes[t[2] as usize];
            area += 0.5
                * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]));
        }
        let exact = 2.0 / 3.0 * (1.0 - 0.05f64.powi(3));
        assert!(
            (area - exact).abs() < 2e-3 * exact,
            "area {area} vs {exact}"
        );
    }

    #[test]
    fn at_least_three_elements_across_at_end() {
        let s = build_strip(1.0, 1.0, 1e-2, 0.05, 1.0, false).unwrap();
        let end_edges = s
            .boundary
            .iter()
            .filter(|(_, _, t)| *t == BoundaryTag::ArtificialEnd)
            .count();
        assert!(end_edges >= 3, "only {end_edges} elements across the end");
    }
}
