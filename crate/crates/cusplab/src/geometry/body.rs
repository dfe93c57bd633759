//! Unstructured meshing of polygonal regions (the body beyond `z = d` and
//! benchmark domains) via constrained Delaunay refinement.
//!
//! Input vertices and constraint edges are kept verbatim, so boundary edges
//! of the output are exactly the sampled polyline pieces with their tags;
//! only interior Steiner points are added.

use super::BoundaryTag;
use crate::{Error, Result};
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

pub struct RawRegion {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
    /// Boundary edges of tagged pieces; untagged pieces (interfaces shared
    /// with another region) emit none.
    pub boundary: Vec<(u32, u32, BoundaryTag)>,
}

/// Mesh the interior of a closed CCW chain of polyline pieces.
///
/// Each piece is a list of points; consecutive pieces must chain exactly
/// (last point of one == first point of the next), and the final piece must
/// close the loop.
pub fn mesh_polygon(
    pieces: &[(Vec<[f64; 2]>, Option<BoundaryTag>)],
    h: f64,
) -> Result<RawRegion> {
    // flatten to a closed vertex loop; edge i runs loop_pts[i] -> loop_pts[(i+1) % n]
    let mut loop_pts: Vec<[f64; 2]> = Vec::new();
    let mut edge_tags: Vec<Option<BoundaryTag>> = Vec::new();
    for (pi, (pts, tag)) in pieces.iter().enumerate() {
        if pts.len() < 2 {
            return Err(Error::Internal("polygon piece with < 2 points".into()));
        }
        if pi == 0 {
            loop_pts.push(pts[0]);
        } else if *loop_pts.last().unwrap() != pts[0] {
            return Err(Error::Internal(format!(
                "polygon pieces do not chain: {:?} vs {:?}",
                loop_pts.last().unwrap(),
                pts[0]
            )));
        }
        for w in pts.windows(2) {
            edge_tags.push(*tag);
            loop_pts.push(w[1]);
        }
    }
    let first = loop_pts[0];
    match loop_pts.pop() {
        Some(last) if last == first => {}
        _ => return Err(Error::Internal("polygon chain not closed".into())),
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = Default::default();
    let mut handles = Vec::with_capacity(loop_pts.len());
    for p in &loop_pts {
        let hdl = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::MeshQuality(format!("vertex insertion failed: {e:?}")))?;
        handles.push(hdl);
    }
    let n = handles.len();
    for i in 0..n {
        cdt.add_constraint(handles[i], handles[(i + 1) % n]);
    }
    let max_area = 0.5 * h * h;
    // shoelace area of the loop bounds the number of triangles the area
    // criterion could ask for; spade's default vertex budget is far below it
    let mut area2 = 0.0;
    for i in 0..n {
        let p = loop_pts[i];
        let q = loop_pts[(i + 1) % n];
        area2 += p[0] * q[1] - q[0] * p[1];
    }
    let vertex_budget = (4.0 * (0.5 * area2.abs()) / max_area) as usize + 20_000;
    let params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(true)
        .keep_constraint_edges()
        .with_angle_limit(AngleLimit::from_deg(26.0))
        .with_max_allowed_area(max_area)
        .with_max_additional_vertices(vertex_budget);
    let outcome = cdt.refine(params);
    if !outcome.refinement_complete {
        return Err(Error::MeshQuality(format!(
            "Delaunay refinement incomplete at h = {h}"
        )));
    }
    let excluded: std::collections::HashSet<usize> = outcome
        .excluded_faces
        .iter()
        .map(|f| f.index())
        .collect();

    // gather used vertices and inner faces
    let nv = cdt.num_vertices();
    let mut vert_map = vec![u32::MAX; nv];
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix().index()) {
            continue;
        }
        let vs = face.vertices();
        let mut tri = [0u32; 3];
        for (k, v) in vs.iter().enumerate() {
            let vi = v.fix().index();
            if vert_map[vi] == u32::MAX {
                vert_map[vi] = nodes.len() as u32;
                let pos = v.position();
                nodes.push([pos.x, pos.y]);
            }
            tri[k] = vert_map[vi];
        }
        // enforce positive orientation
        let p0 = nodes[tri[0] as usize];
        let p1 = nodes[tri[1] as usize];
        let p2 = nodes[tri[2] as usize];
        let area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
        if area2 < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }
    let mut boundary = Vec::new();
    for i in 0..n {
        if let Some(tag) = edge_tags[i] {
            let a = vert_map[handles[i].index()];
            let b = vert_map[handles[(i + 1) % n].index()];
            if a == u32::MAX || b == u32::MAX {
                return Err(Error::Internal(
                    "boundary vertex unused by any interior face".into(),
                ));
            }
            boundary.push((a, b, tag));
        }
    }
    Ok(RawRegion {
        nodes,
        triangles,
        boundary,
    })
}
