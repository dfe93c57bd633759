//! Mesh data structure, the mesh generator entry point, validation and the
//! text serialization format.

use super::body::{mesh_polygon, RawRegion};
use super::strip::{build_strip, interface_ys};
use super::{
    body_chain, half_width, BoundaryTag, Curve, CuspGeometry, DomainBoundary, DomainShape,
};
use crate::{Error, Result};
use std::collections::HashMap;

/// Contractual minimum triangle angle in degrees.
pub const MIN_ANGLE_DEG: f64 = 15.0;

/// One tagged boundary edge (node indices into [`Mesh::nodes`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: u32,
    pub b: u32,
    pub tag: BoundaryTag,
}

/// Conforming triangulation of a blunted domain with tagged boundary.
///
/// Immutable after construction; node ordering is canonical (sorted by
/// `(z, y)`) so serializations are byte stable.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Blunting parameter of this mesh; 0 for domains without a cusp end.
    pub epsilon: f64,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Sorted, deduplicated node indices lying on edges with the given tag.
    pub fn boundary_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| [e.a as usize, e.b as usize])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Node indices with `y == 0` exactly.
    pub fn axis_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i][0] == 0.0)
            .collect()
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| self.tri_area(t))
            .sum::<f64>()
    }

    fn tri_area(&self, t: &[u32; 3]) -> f64 {
        let p0 = self.nodes[t[0] as usize];
        let p1 = self.nodes[t[1] as usize];
        let p2 = self.nodes[t[2] as usize];
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for t in &self.triangles {
            let p = [
                self.nodes[t[0] as usize],
                self.nodes[t[1] as usize],
                self.nodes[t[2] as usize],
            ];
            for k in 0..3 {
                let a = p[k];
                let b = p[(k + 1) % 3];
                let c = p[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cross = u[0] * v[1] - u[1] * v[0];
                let dot = u[0] * v[0] + u[1] * v[1];
                worst = worst.min(cross.atan2(dot).abs().to_degrees());
            }
        }
        worst
    }

    /// Whether the node set is invariant under `y -> -y` (bit exact).
    pub fn is_mirror_symmetric(&self) -> bool {
        self.mirror_node_map().is_some()
    }

    /// For a mirror-symmetric mesh, `map[i]` is the node at the reflected
    /// position of node `i`.
    pub fn mirror_node_map(&self) -> Option<Vec<usize>> {
        let mut lookup: HashMap<(u64, u64), usize> = HashMap::with_capacity(self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            lookup.insert(coord_key(*p), i);
        }
        let mut map = vec![0usize; self.nodes.len()];
        for (i, p) in self.nodes.iter().enumerate() {
            let m = [neg0(-p[0]), p[1]];
            match lookup.get(&coord_key(m)) {
                Some(&j) => map[i] = j,
                None => return None,
            }
        }
        Some(map)
    }

    /// Structural and quality invariants. Called by the generator; parsers
    /// may call it on untrusted input (never panics).
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len() as u32;
        if self.triangles.is_empty() {
            return Err(Error::MeshQuality("mesh has no triangles".into()));
        }
        for (i, p) in self.nodes.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::MeshQuality(format!("node {i} not finite")));
            }
        }
        {
            let mut seen = HashMap::with_capacity(self.nodes.len());
            for (i, p) in self.nodes.iter().enumerate() {
                if let Some(j) = seen.insert(coord_key(*p), i) {
                    return Err(Error::MeshQuality(format!("duplicate nodes {j} and {i}")));
                }
            }
        }
        for (k, t) in self.triangles.iter().enumerate() {
            if t[0] >= n || t[1] >= n || t[2] >= n {
                return Err(Error::MeshQuality(format!("triangle {k} index out of range")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::MeshQuality(format!("triangle {k} degenerate")));
            }
            if !(self.tri_area(t) > 0.0) {
                return Err(Error::MeshQuality(format!(
                    "triangle {k} not positively oriented"
                )));
            }
        }
        // conformity: every edge borders 1 or 2 triangles; the 1-triangle
        // edges must coincide with the tagged boundary
        let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        let mut tag_of: HashMap<(u32, u32), BoundaryTag> = HashMap::new();
        for e in &self.boundary_edges {
            if e.a >= n || e.b >= n {
                return Err(Error::MeshQuality("boundary edge index out of range".into()));
            }
            let key = (e.a.min(e.b), e.a.max(e.b));
            if tag_of.insert(key, e.tag).is_some() {
                return Err(Error::MeshQuality(
                    "boundary edge tagged more than once".into(),
                ));
            }
        }
        for (key, cnt) in &edge_count {
            match cnt {
                1 => {
                    if !tag_of.contains_key(key) {
                        return Err(Error::MeshQuality(format!(
                            "untagged boundary edge {key:?}"
                        )));
                    }
                }
                2 => {
                    if tag_of.contains_key(key) {
                        return Err(Error::MeshQuality(format!(
                            "interior edge {key:?} carries a boundary tag"
                        )));
                    }
                }
                _ => {
                    return Err(Error::MeshQuality(format!(
                        "edge {key:?} shared by {cnt} triangles"
                    )))
                }
            }
        }
        for key in tag_of.keys() {
            if !edge_count.contains_key(key) {
                return Err(Error::MeshQuality(format!(
                    "boundary edge {key:?} not an edge of any triangle"
                )));
            }
        }
        // artificial end lies exactly on z = epsilon
        for i in self.boundary_nodes(BoundaryTag::ArtificialEnd) {
            if self.nodes[i][1] != self.epsilon {
                return Err(Error::MeshQuality(format!(
                    "end node {i} at z = {} != epsilon = {}",
                    self.nodes[i][1], self.epsilon
                )));
            }
        }
        for i in self.boundary_nodes(BoundaryTag::SymmetryPlane) {
            if self.nodes[i][0] != 0.0 {
                return Err(Error::MeshQuality(format!(
                    "symmetry-plane node {i} off the axis: y = {}",
                    self.nodes[i][0]
                )));
            }
        }
        let ang = self.min_angle_deg();
        if !(ang >= MIN_ANGLE_DEG - 1e-9) {
            return Err(Error::MeshQuality(format!(
                "min angle {ang:.2} deg below {MIN_ANGLE_DEG}"
            )));
        }
        Ok(())
    }

    /// Text serialization:
    /// header `N nodes T triangles B edges`, then `x y` per node,
    /// `i j k` per triangle and `i j tag` per boundary edge
    /// (tags S = Steklov, E = artificial end, Y = symmetry plane).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{} nodes {} triangles {} edges\n",
            self.nodes.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        ));
        for p in &self.nodes {
            s.push_str(&format!("{:.16e} {:.16e}\n", p[0], p[1]));
        }
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        for e in &self.boundary_edges {
            s.push_str(&format!("{} {} {}\n", e.a, e.b, e.tag.letter()));
        }
        s
    }

    /// Parse the text format. Structural checks only; call
    /// [`Mesh::validate`] for the full invariants.
    pub fn from_text(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty input"))?;
        let hp: Vec<&str> = header.split_whitespace().collect();
        if hp.len() != 6 || hp[1] != "nodes" || hp[3] != "triangles" || hp[5] != "edges" {
            return Err(parse_err(1, "header must be 'N nodes T triangles B edges'"));
        }
        let nn: usize = hp[0].parse().map_err(|_| parse_err(1, "bad node count"))?;
        let nt: usize = hp[2]
            .parse()
            .map_err(|_| parse_err(1, "bad triangle count"))?;
        let nb: usize = hp[4].parse().map_err(|_| parse_err(1, "bad edge count"))?;
        let cap = |x: usize| x.min(1 << 20);
        let mut nodes = Vec::with_capacity(cap(nn));
        let mut triangles = Vec::with_capacity(cap(nt));
        let mut boundary_edges = Vec::with_capacity(cap(nb));
        for _ in 0..nn {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, "unexpected end of input in nodes"))?;
            let mut it = line.split_whitespace();
            let x: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln + 1, "bad node x"))?;
            let y: f64 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln + 1, "bad node y"))?;
            if it.next().is_some() {
                return Err(parse_err(ln + 1, "trailing tokens on node line"));
            }
            nodes.push([x, y]);
        }
        for _ in 0..nt {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, "unexpected end of input in triangles"))?;
            let mut t = [0u32; 3];
            let mut it = line.split_whitespace();
            for v in t.iter_mut() {
                *v = it
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err(ln + 1, "bad triangle index"))?;
                if *v as usize >= nn {
                    return Err(parse_err(ln + 1, "triangle index out of range"));
                }
            }
            if it.next().is_some() {
                return Err(parse_err(ln + 1, "trailing tokens on triangle line"));
            }
            triangles.push(t);
        }
        for _ in 0..nb {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, "unexpected end of input in edges"))?;
            let mut it = line.split_whitespace();
            let a: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln + 1, "bad edge index"))?;
            let b: u32 = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(ln + 1, "bad edge index"))?;
            if a as usize >= nn || b as usize >= nn {
                return Err(parse_err(ln + 1, "edge index out of range"));
            }
            let tag = it
                .next()
                .and_then(|s| {
                    let mut cs = s.chars();
                    match (cs.next(), cs.next()) {
                        (Some(c), None) => BoundaryTag::from_letter(c),
                        _ => None,
                    }
                })
                .ok_or_else(|| parse_err(ln + 1, "bad edge tag"))?;
            if it.next().is_some() {
                return Err(parse_err(ln + 1, "trailing tokens on edge line"));
            }
            boundary_edges.push(BoundaryEdge { a, b, tag });
        }
        if lines.next().is_some() {
            return Err(parse_err(0, "trailing lines after edge section"));
        }
        // reconstruct epsilon from the artificial end, if any
        let mut epsilon = 0.0;
        for e in &boundary_edges {
            if e.tag == BoundaryTag::ArtificialEnd {
                epsilon = nodes[e.a as usize][1];
                break;
            }
        }
        Ok(Mesh {
            nodes,
            triangles,
            boundary_edges,
            epsilon,
        })
    }
}

fn parse_err(line: usize, detail: &str) -> Error {
    Error::Parse {
        line,
        detail: detail.to_string(),
    }
}

#[inline]
fn neg0(y: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y
    }
}

#[inline]
fn coord_key(p: [f64; 2]) -> (u64, u64) {
    (neg0(p[0]).to_bits(), neg0(p[1]).to_bits())
}

/// Accumulates regions, merging nodes that coincide bit-exactly.
struct MeshBuilder {
    nodes: Vec<[f64; 2]>,
    map: HashMap<(u64, u64), u32>,
    triangles: Vec<[u32; 3]>,
    boundary: Vec<BoundaryEdge>,
}

impl MeshBuilder {
    fn new() -> Self {
        MeshBuilder {
            nodes: Vec::new(),
            map: HashMap::new(),
            triangles: Vec::new(),
            boundary: Vec::new(),
        }
    }

    fn node(&mut self, p: [f64; 2]) -> u32 {
        let q = [neg0(p[0]), p[1]];
        if let Some(&i) = self.map.get(&coord_key(q)) {
            return i;
        }
        let i = self.nodes.len() as u32;
        self.nodes.push(q);
        self.map.insert(coord_key(q), i);
        i
    }

    fn add_region(
        &mut self,
        nodes: &[[f64; 2]],
        triangles: &[[u32; 3]],
        boundary: &[(u32, u32, BoundaryTag)],
        mirrored: bool,
    ) {
        let ids: Vec<u32> = nodes
            .iter()
            .map(|p| {
                let q = if mirrored { [neg0(-p[0]), p[1]] } else { *p };
                self.node(q)
            })
            .collect();
        for t in triangles {
            let tri = if mirrored {
                [ids[t[0] as usize], ids[t[2] as usize], ids[t[1] as usize]]
            } else {
                [ids[t[0] as usize], ids[t[1] as usize], ids[t[2] as usize]]
            };
            self.triangles.push(tri);
        }
        for &(a, b, tag) in boundary {
            self.boundary.push(BoundaryEdge {
                a: ids[a as usize],
                b: ids[b as usize],
                tag,
            });
        }
    }

    /// Renumber nodes by `(z, y)`, orient and sort triangles and edges.
    fn finish(self, epsilon: f64) -> Mesh {
        let n = self.nodes.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let nodes = &self.nodes;
        order.sort_by(|&i, &j| {
            let a = nodes[i as usize];
            let b = nodes[j as usize];
            a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0]))
        });
        let mut rank = vec![0u32; n];
        for (new, &old) in order.iter().enumerate() {
            rank[old as usize] = new as u32;
        }
        let new_nodes: Vec<[f64; 2]> = order.iter().map(|&o| self.nodes[o as usize]).collect();
        let mut triangles: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .map(|t| {
                let m = [rank[t[0] as usize], rank[t[1] as usize], rank[t[2] as usize]];
                // rotate so the smallest index comes first (orientation kept)
                let k = (0..3).min_by_key(|&k| m[k]).unwrap();
                [m[k], m[(k + 1) % 3], m[(k + 2) % 3]]
            })
            .collect();
        triangles.sort_unstable();
        let mut boundary: Vec<BoundaryEdge> = self
            .boundary
            .iter()
            .map(|e| {
                let (a, b) = (rank[e.a as usize], rank[e.b as usize]);
                BoundaryEdge {
                    a: a.min(b),
                    b: a.max(b),
                    tag: e.tag,
                }
            })
            .collect();
        boundary.sort_unstable_by_key(|e| (e.a, e.b));
        boundary.dedup();
        Mesh {
            nodes: new_nodes,
            triangles,
            boundary_edges: boundary,
            epsilon,
        }
    }
}

/// Sample a curve into a polyline with spacing about `h`, forcing the exact
/// endpoint coordinates (junctions must chain bit-exactly).
fn sample_curve(curve: &Curve, h: f64, start: [f64; 2], end: [f64; 2]) -> Vec<[f64; 2]> {
    let m = ((curve.length() / h).ceil() as usize).max(1);
    let mut pts = Vec::with_capacity(m + 1);
    pts.push(start);
    for i in 1..m {
        pts.push(curve.eval(i as f64 / m as f64));
    }
    pts.push(end);
    pts
}

/// Generate a mesh of the given domain.
///
/// `h` is the target edge length; `grading >= 0` shrinks the local size
/// inside the cusp like `h · min(1, (z/d)^grading)`.
pub fn make_mesh(domain: &DomainBoundary, h: f64, grading: f64) -> Result<Mesh> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("mesh size h = {h} must be > 0")));
    }
    if !(grading >= 0.0) || !grading.is_finite() {
        return Err(Error::invalid(format!("grading = {grading} must be >= 0")));
    }
    let mesh = match &domain.shape {
        DomainShape::CuspFull { geom, epsilon } => cusp_mesh(geom, *epsilon, h, grading, false)?,
        DomainShape::CuspHalf { geom, epsilon } => cusp_mesh(geom, *epsilon, h, grading, true)?,
        DomainShape::Simple => simple_mesh(domain, h)?,
    };
    mesh.validate().map_err(|e| match e {
        Error::MeshQuality(msg) => Error::MeshQuality(format!(
            "{msg} (h = {h}, epsilon = {})",
            domain.epsilon()
        )),
        other => other,
    })?;
    Ok(mesh)
}

fn cusp_mesh(
    geom: &CuspGeometry,
    epsilon: f64,
    h: f64,
    grading: f64,
    half: bool,
) -> Result<Mesh> {
    if geom.n != 2 {
        return Err(Error::invalid(format!(
            "meshing requires n = 2 (got n = {})",
            geom.n
        )));
    }
    let a = geom.a;
    let d = geom.d;
    let strip = build_strip(a, d, epsilon, h, grading, half)?;
    let (n_top, iface) = interface_ys(a, d, h, grading);
    let w_d = half_width(a, d);
    let (right_curves, top_z) = body_chain(geom)?;

    // right body chain sampled with exact junctions
    let mut right_pieces: Vec<Vec<[f64; 2]>> = Vec::new();
    {
        let mut start = [w_d, d];
        for (k, c) in right_curves.iter().enumerate() {
            let end = if k + 1 == right_curves.len() {
                [0.0, top_z]
            } else {
                c.end()
            };
            right_pieces.push(sample_curve(c, h, start, end));
            start = end;
        }
    }

    let mut builder = MeshBuilder::new();
    builder.add_region(&strip.nodes, &strip.triangles, &strip.boundary, false);

    let axis_curve = Curve::Segment {
        p0: [0.0, top_z],
        p1: [0.0, d],
    };
    let axis_pts = sample_curve(&axis_curve, h, [0.0, top_z], [0.0, d]);
    let iface_half: Vec<[f64; 2]> = iface[n_top / 2..].iter().map(|&y| [y, d]).collect();

    if half {
        // half body: interface (y >= 0), right chain, axis back down
        let mut pieces: Vec<(Vec<[f64; 2]>, Option<BoundaryTag>)> = Vec::new();
        pieces.push((iface_half, None));
        for p in &right_pieces {
            pieces.push((p.clone(), Some(BoundaryTag::SteklovBoundary)));
        }
        pieces.push((axis_pts, Some(BoundaryTag::SymmetryPlane)));
        let body = mesh_polygon(&pieces, h)?;
        builder.add_region(&body.nodes, &body.triangles, &body.boundary, false);
        return Ok(builder.finish(epsilon));
    }

    if geom.mirror_symmetric {
        // mesh the right half of the body once, then reflect
        let mut pieces: Vec<(Vec<[f64; 2]>, Option<BoundaryTag>)> = Vec::new();
        pieces.push((iface_half, None));
        for p in &right_pieces {
            pieces.push((p.clone(), Some(BoundaryTag::SteklovBoundary)));
        }
        pieces.push((axis_pts, None));
        let body: RawRegion = mesh_polygon(&pieces, h)?;
        builder.add_region(&body.nodes, &body.triangles, &body.boundary, false);
        builder.add_region(&body.nodes, &body.triangles, &body.boundary, true);
    } else {
        // single unstructured pass over the whole body
        let mut pieces: Vec<(Vec<[f64; 2]>, Option<BoundaryTag>)> = Vec::new();
        let iface_full: Vec<[f64; 2]> = iface.iter().map(|&y| [y, d]).collect();
        pieces.push((iface_full, None));
        for p in &right_pieces {
            pieces.push((p.clone(), Some(BoundaryTag::SteklovBoundary)));
        }
        // mirrored left chain, reversed order, junctions exact by negation
        for p in right_pieces.iter().rev() {
            let q: Vec<[f64; 2]> = p.iter().rev().map(|&[y, z]| [neg0(-y), z]).collect();
            pieces.push((q, Some(BoundaryTag::SteklovBoundary)));
        }
        let body = mesh_polygon(&pieces, h)?;
        builder.add_region(&body.nodes, &body.triangles, &body.boundary, false);
    }
    Ok(builder.finish(epsilon))
}

fn simple_mesh(domain: &DomainBoundary, h: f64) -> Result<Mesh> {
    let n = domain.segments.len();
    let mut pieces: Vec<(Vec<[f64; 2]>, Option<BoundaryTag>)> = Vec::new();
    // junction coordinates fixed from the segment starts
    let starts: Vec<[f64; 2]> = domain.segments.iter().map(|s| s.curve.start()).collect();
    for (i, seg) in domain.segments.iter().enumerate() {
        let start = starts[i];
        let end = starts[(i + 1) % n];
        pieces.push((sample_curve(&seg.curve, h, start, end), Some(seg.tag)));
    }
    let region = mesh_polygon(&pieces, h)?;
    let mut builder = MeshBuilder::new();
    builder.add_region(&region.nodes, &region.triangles, &region.boundary, false);
    Ok(builder.finish(0.0))
}
