//! Domain description: a power cusp of sharpness 2 blunted at `z = ε`,
//! joined to a smooth body, together with graded triangular meshes.

mod body;
mod mesh;
mod strip;

pub use mesh::{make_mesh, BoundaryEdge, Mesh};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Boundary condition imposed on the artificial end `ω^ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndCondition {
    Dirichlet,
    Neumann,
    Steklov,
}

impl std::fmt::Display for EndCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EndCondition::Dirichlet => write!(f, "dirichlet"),
            EndCondition::Neumann => write!(f, "neumann"),
            EndCondition::Steklov => write!(f, "steklov"),
        }
    }
}

/// Tag attached to every boundary edge of a [`Mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Part of the boundary carrying the Steklov condition.
    SteklovBoundary,
    /// The flat artificial end at `z = ε`.
    ArtificialEnd,
    /// The symmetry plane `y = 0` (half-domain meshes only).
    SymmetryPlane,
}

impl BoundaryTag {
    pub fn letter(self) -> char {
        match self {
            BoundaryTag::SteklovBoundary => 'S',
            BoundaryTag::ArtificialEnd => 'E',
            BoundaryTag::SymmetryPlane => 'Y',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'S' => Some(BoundaryTag::SteklovBoundary),
            'E' => Some(BoundaryTag::ArtificialEnd),
            'Y' => Some(BoundaryTag::SymmetryPlane),
            _ => None,
        }
    }
}

/// Shape of the body attached to the cusp at `z = d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyKind {
    HalfDisk,
    Stadium,
}

/// Body specification. The boundary away from the cusp tip is smooth; the
/// body curve meets the cusp arcs at `z = d` with a continuous tangent via a
/// polynomial blend of the given degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub kind: BodyKind,
    /// Cap radius. The canonical choice matches the cusp half-opening `a d²`.
    pub radius: f64,
    /// Polynomial blend degree (2 = quadratic Bezier, >= 3 = cubic Hermite).
    pub join_smoothness: u32,
}

/// The blunted cuspidal domain: profile `y = ±a z²` for `z ∈ (0, d)`,
/// body beyond `z = d`, truncated at `z = ε` when meshed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspGeometry {
    /// Spatial dimension used by the closed-form operations. Meshing and FEM
    /// require `n = 2`.
    pub n: u32,
    /// Cusp half-width coefficient: cross-section at height `z` is
    /// `(-a z², a z²)`.
    pub a: f64,
    /// Cusp length.
    pub d: f64,
    pub body: BodySpec,
    pub end_condition: EndCondition,
    pub mirror_symmetric: bool,
}

impl CuspGeometry {
    /// The canonical test domain: cusp `(a, d)` joined to a half-disk body
    /// whose radius matches the cusp opening at `z = d`, C¹ cubic blend.
    pub fn canonical(a: f64, d: f64) -> Self {
        CuspGeometry {
            n: 2,
            a,
            d,
            body: BodySpec {
                kind: BodyKind::HalfDisk,
                radius: a * d * d,
                join_smoothness: 3,
            },
            end_condition: EndCondition::Dirichlet,
            mirror_symmetric: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("dimension n = {} < 2", self.n)));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::invalid(format!("cusp coefficient a = {}", self.a)));
        }
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(Error::invalid(format!("cusp length d = {}", self.d)));
        }
        if !(self.body.radius > 0.0) {
            return Err(Error::invalid("body radius must be positive"));
        }
        if self.body.radius < 0.5 * self.half_width(self.d) {
            return Err(Error::invalid(
                "body radius below half of the cusp opening; blend would fold",
            ));
        }
        if self.body.join_smoothness < 2 {
            return Err(Error::invalid("join_smoothness must be >= 2"));
        }
        Ok(())
    }

    /// Half-width of the cusp at height `z`.
    #[inline]
    pub fn half_width(&self, z: f64) -> f64 {
        half_width(self.a, z)
    }

    /// `|ω|`: measure of the cross-section, an `(n-1)`-ball of radius `a`.
    /// For `n = 2` this is the interval length `2a`.
    pub fn omega_measure(&self) -> f64 {
        ball_volume(self.n - 1, self.a)
    }

    /// `|∂ω|`: measure of the cross-section boundary. For `n = 2` the two
    /// endpoints count 2; in general `(n-1) |ω| / a`.
    pub fn omega_boundary_measure(&self) -> f64 {
        if self.n == 2 {
            2.0
        } else {
            (self.n - 1) as f64 * self.omega_measure() / self.a
        }
    }

    /// Stable hash of the geometry, carried by sweep reports so that
    /// body-dependent phases are never compared across different bodies.
    pub fn geom_hash(&self) -> String {
        let repr = format!(
            "n={};a={:.17e};d={:.17e};kind={:?};R={:.17e};js={};sym={}",
            self.n,
            self.a,
            self.d,
            self.body.kind,
            self.body.radius,
            self.body.join_smoothness,
            self.mirror_symmetric
        );
        format!("{:016x}", fnv1a(repr.as_bytes()))
    }
}

#[inline]
pub(crate) fn half_width(a: f64, z: f64) -> f64 {
    a * z * z
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Volume of the k-ball of radius r (k >= 1).
fn ball_volume(k: u32, r: f64) -> f64 {
    // V_k = pi^(k/2) / Gamma(k/2 + 1) * r^k, computed by the two-step recurrence
    let mut v = match k % 2 {
        0 => 1.0,            // V_0 = 1
        _ => 2.0 * r,        // V_1 = 2r
    };
    let mut dim = k % 2;
    while dim < k {
        dim += 2;
        v *= 2.0 * std::f64::consts::PI * r * r / dim as f64;
    }
    v
}

/// One tagged piece of the domain boundary.
#[derive(Debug, Clone)]
pub struct BoundarySegment {
    pub curve: Curve,
    pub tag: BoundaryTag,
}

/// Parametric curves making up the boundary; `t ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub enum Curve {
    /// Straight segment.
    Segment { p0: [f64; 2], p1: [f64; 2] },
    /// Cusp arc `y = sign · a z²`, traversed from `z0` to `z1`.
    CuspArc {
        a: f64,
        sign: f64,
        z0: f64,
        z1: f64,
    },
    /// Circle arc, angle from `th0` to `th1` (radians, CCW when increasing).
    CircleArc {
        center: [f64; 2],
        r: f64,
        th0: f64,
        th1: f64,
    },
    /// Cubic Hermite blend with endpoint tangent vectors.
    Hermite {
        p0: [f64; 2],
        m0: [f64; 2],
        p1: [f64; 2],
        m1: [f64; 2],
    },
    /// Quadratic Bezier blend.
    Quadratic {
        p0: [f64; 2],
        c: [f64; 2],
        p1: [f64; 2],
    },
}

impl Curve {
    pub fn eval(&self, t: f64) -> [f64; 2] {
        match *self {
            Curve::Segment { p0, p1 } => {
                [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]
            }
            Curve::CuspArc { a, sign, z0, z1 } => {
                let z = z0 + t * (z1 - z0);
                [sign * half_width(a, z), z]
            }
            Curve::CircleArc { center, r, th0, th1 } => {
                let th = th0 + t * (th1 - th0);
                [center[0] + r * th.cos(), center[1] + r * th.sin()]
            }
            Curve::Hermite { p0, m0, p1, m1 } => {
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + t;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                [
                    h00 * p0[0] + h10 * m0[0] + h01 * p1[0] + h11 * m1[0],
                    h00 * p0[1] + h10 * m0[1] + h01 * p1[1] + h11 * m1[1],
                ]
            }
            Curve::Quadratic { p0, c, p1 } => {
                let u = 1.0 - t;
                [
                    u * u * p0[0] + 2.0 * u * t * c[0] + t * t * p1[0],
                    u * u * p0[1] + 2.0 * u * t * c[1] + t * t * p1[1],
                ]
            }
        }
    }

    pub fn start(&self) -> [f64; 2] {
        self.eval(0.0)
    }

    pub fn end(&self) -> [f64; 2] {
        self.eval(1.0)
    }

    /// Polyline estimate of the arc length (128 samples).
    pub fn length(&self) -> f64 {
        let m = 128;
        let mut len = 0.0;
        let mut prev = self.eval(0.0);
        for i in 1..=m {
            let p = self.eval(i as f64 / m as f64);
            len += ((p[0] - prev[0]).powi(2) + (p[1] - prev[1]).powi(2)).sqrt();
            prev = p;
        }
        len
    }
}

/// Ordered, closed, tagged boundary description of the blunted domain.
#[derive(Debug, Clone)]
pub struct DomainBoundary {
    pub segments: Vec<BoundarySegment>,
    pub shape: DomainShape,
}

#[derive(Debug, Clone)]
pub enum DomainShape {
    /// Full blunted cusp domain.
    CuspFull { geom: CuspGeometry, epsilon: f64 },
    /// Half (`y >= 0`) of a mirror-symmetric blunted cusp domain; the
    /// symmetry plane is part of the boundary.
    CuspHalf { geom: CuspGeometry, epsilon: f64 },
    /// A plain region without a cusp (e.g. the disk benchmark).
    Simple,
}

impl DomainBoundary {
    pub fn epsilon(&self) -> f64 {
        match self.shape {
            DomainShape::CuspFull { epsilon, .. } | DomainShape::CuspHalf { epsilon, .. } => {
                epsilon
            }
            DomainShape::Simple => 0.0,
        }
    }

    /// Signed area enclosed by the boundary chain (shoelace over a fine
    /// polyline; each curve contributes its exact Green's-theorem integral in
    /// the limit, approximated with 512 samples per segment).
    pub fn area_quadrature(&self, samples_per_segment: usize) -> f64 {
        let mut acc = 0.0;
        for seg in &self.segments {
            let m = samples_per_segment.max(8);
            let mut prev = seg.curve.eval(0.0);
            for i in 1..=m {
                let p = seg.curve.eval(i as f64 / m as f64);
                acc += prev[0] * p[1] - p[0] * prev[1];
                prev = p;
            }
        }
        0.5 * acc
    }
}

pub(crate) fn body_chain(geom: &CuspGeometry) -> Result<(Vec<Curve>, f64)> {
    // Right-side body boundary from the cusp join up to the top axis point.
    // Returns the curves in CCW order and the top axis height.
    let a = geom.a;
    let d = geom.d;
    let w_d = half_width(a, d);
    let r = geom.body.radius;
    let rise = r;
    let zc = d + rise;
    let p0 = [w_d, d];
    let p1 = [r, zc];
    let t0n = (1.0 + 4.0 * a * a * d * d).sqrt();
    let t0 = [2.0 * a * d / t0n, 1.0 / t0n];
    let t1 = [0.0, 1.0];
    let blend = make_blend(p0, t0, p1, t1, geom.body.join_smoothness)?;
    let mut curves = vec![blend];
    let (cap_center_z, top_z) = match geom.body.kind {
        BodyKind::HalfDisk => (zc, zc + r),
        BodyKind::Stadium => {
            let side = r;
            curves.push(Curve::Segment {
                p0: [r, zc],
                p1: [r, zc + side],
            });
            (zc + side, zc + side + r)
        }
    };
    curves.push(Curve::CircleArc {
        center: [0.0, cap_center_z],
        r,
        th0: 0.0,
        th1: std::f64::consts::FRAC_PI_2,
    });
    Ok((curves, top_z))
}

fn make_blend(p0: [f64; 2], t0: [f64; 2], p1: [f64; 2], t1: [f64; 2], degree: u32) -> Result<Curve> {
    let chord = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
    if degree == 2 {
        // control point at the intersection of the tangent lines; falls back
        // to cubic when the tangents are (nearly) parallel or the
        // intersection is degenerate
        let det = t0[0] * t1[1] - t0[1] * t1[0];
        if det.abs() > 1e-8 {
            let dx = p1[0] - p0[0];
            let dy = p1[1] - p0[1];
            let s = (dx * t1[1] - dy * t1[0]) / det;
            if s > 0.05 * chord && s < 20.0 * chord {
                return Ok(Curve::Quadratic {
                    p0,
                    c: [p0[0] + s * t0[0], p0[1] + s * t0[1]],
                    p1,
                });
            }
        }
    }
    Ok(Curve::Hermite {
        p0,
        m0: [chord * t0[0], chord * t0[1]],
        p1,
        m1: [chord * t1[0], chord * t1[1]],
    })
}

fn mirror_curve(c: &Curve) -> Curve {
    // reflect y -> -y and reverse the traversal direction
    match *c {
        Curve::Segment { p0, p1 } => Curve::Segment {
            p0: [neg_y(p1[0]), p1[1]],
            p1: [neg_y(p0[0]), p0[1]],
        },
        Curve::CuspArc { a, sign, z0, z1 } => Curve::CuspArc {
            a,
            sign: -sign,
            z0: z1,
            z1: z0,
        },
        Curve::CircleArc { center, r, th0, th1 } => Curve::CircleArc {
            center: [neg_y(center[0]), center[1]],
            r,
            th0: std::f64::consts::PI - th1,
            th1: std::f64::consts::PI - th0,
        },
        Curve::Hermite { p0, m0, p1, m1 } => Curve::Hermite {
            p0: [neg_y(p1[0]), p1[1]],
            m0: [m1[0], -m1[1]],
            p1: [neg_y(p0[0]), p0[1]],
            m1: [m0[0], -m0[1]],
        },
        Curve::Quadratic { p0, c, p1 } => Curve::Quadratic {
            p0: [neg_y(p1[0]), p1[1]],
            c: [neg_y(c[0]), c[1]],
            p1: [neg_y(p0[0]), p0[1]],
        },
    }
}

#[inline]
fn neg_y(y: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        -y
    }
}

fn check_epsilon(geom: &CuspGeometry, epsilon: f64) -> Result<()> {
    geom.validate()?;
    if !(epsilon > 0.0 && epsilon < geom.d / 4.0) {
        return Err(Error::invalid(format!(
            "epsilon = {epsilon} outside (0, d/4) = (0, {}); mesh quality collapses near d",
            geom.d / 4.0
        )));
    }
    Ok(())
}

/// Boundary description of the full blunted domain `Ω^ε`.
///
/// The chain runs counterclockwise: flat end at `z = ε`, right cusp arc,
/// right blend, cap, left blend, left cusp arc.
pub fn make_domain(geom: &CuspGeometry, epsilon: f64) -> Result<DomainBoundary> {
    check_epsilon(geom, epsilon)?;
    let a = geom.a;
    let w_eps = half_width(a, epsilon);
    let (right_body, _top) = body_chain(geom)?;
    let mut segments = Vec::new();
    segments.push(BoundarySegment {
        curve: Curve::Segment {
            p0: [neg_y(w_eps), epsilon],
            p1: [w_eps, epsilon],
        },
        tag: BoundaryTag::ArtificialEnd,
    });
    segments.push(BoundarySegment {
        curve: Curve::CuspArc {
            a,
            sign: 1.0,
            z0: epsilon,
            z1: geom.d,
        },
        tag: BoundaryTag::SteklovBoundary,
    });
    for c in &right_body {
        segments.push(BoundarySegment {
            curve: c.clone(),
            tag: BoundaryTag::SteklovBoundary,
        });
    }
    for c in right_body.iter().rev() {
        segments.push(BoundarySegment {
            curve: mirror_curve(c),
            tag: BoundaryTag::SteklovBoundary,
        });
    }
    segments.push(BoundarySegment {
        curve: Curve::CuspArc {
            a,
            sign: -1.0,
            z0: geom.d,
            z1: epsilon,
        },
        tag: BoundaryTag::SteklovBoundary,
    });
    Ok(DomainBoundary {
        segments,
        shape: DomainShape::CuspFull {
            geom: geom.clone(),
            epsilon,
        },
    })
}

/// Boundary description of the half domain `Ω^ε ∩ {y > 0}` with the
/// symmetry plane as a tagged boundary part. Requires `mirror_symmetric`.
pub fn make_half_domain(geom: &CuspGeometry, epsilon: f64) -> Result<DomainBoundary> {
    check_epsilon(geom, epsilon)?;
    if !geom.mirror_symmetric {
        return Err(Error::SymmetryRequired);
    }
    let a = geom.a;
    let w_eps = half_width(a, epsilon);
    let (right_body, top_z) = body_chain(geom)?;
    let mut segments = Vec::new();
    segments.push(BoundarySegment {
        curve: Curve::Segment {
            p0: [0.0, epsilon],
            p1: [w_eps, epsilon],
        },
        tag: BoundaryTag::ArtificialEnd,
    });
    segments.push(BoundarySegment {
        curve: Curve::CuspArc {
            a,
            sign: 1.0,
            z0: epsilon,
            z1: geom.d,
        },
        tag: BoundaryTag::SteklovBoundary,
    });
    for c in &right_body {
        segments.push(BoundarySegment {
            curve: c.clone(),
            tag: BoundaryTag::SteklovBoundary,
        });
    }
    segments.push(BoundarySegment {
        curve: Curve::Segment {
            p0: [0.0, top_z],
            p1: [0.0, epsilon],
        },
        tag: BoundaryTag::SymmetryPlane,
    });
    Ok(DomainBoundary {
        segments,
        shape: DomainShape::CuspHalf {
            geom: geom.clone(),
            epsilon,
        },
    })
}

/// Disk of radius `r` centered at the origin, whole boundary Steklov.
/// Benchmark domain: its Steklov eigenvalues are `k / r`, doubly degenerate
/// for `k >= 1`.
pub fn disk_domain(r: f64) -> Result<DomainBoundary> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!("disk radius = {r}")));
    }
    Ok(DomainBoundary {
        segments: vec![BoundarySegment {
            curve: Curve::CircleArc {
                center: [0.0, 0.0],
                r,
                th0: 0.0,
                th1: 2.0 * std::f64::consts::PI,
            },
            tag: BoundaryTag::SteklovBoundary,
        }],
        shape: DomainShape::Simple,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn end_segment_length_follows_profile() {
        // geom(a=1, d=1), eps=0.1: end segment length 2 * 1 * 0.01 = 0.02
        let geom = CuspGeometry::canonical(1.0, 1.0);
        let dom = make_domain(&geom, 0.1).unwrap();
        let end = &dom.segments[0];
        assert_eq!(end.tag, BoundaryTag::ArtificialEnd);
        let p0 = end.curve.start();
        let p1 = end.curve.end();
        let len = (p1[0] - p0[0]).abs();
        assert!((len - 0.02).abs() < 1e-15, "end length {len}");
        assert_eq!(p0[1], 0.1);
        assert_eq!(p1[1], 0.1);
    }

    #[test]
    fn epsilon_out_of_range_rejected() {
        let geom = CuspGeometry::canonical(1.0, 1.0);
        assert!(make_domain(&geom, 1.0).is_err());
        assert!(make_domain(&geom, 0.25).is_err());
        assert!(make_domain(&geom, 0.0).is_err());
        assert!(make_domain(&geom, -0.1).is_err());
        assert!(make_domain(&geom, 0.2).is_ok());
    }

    #[test]
    fn cusp_arc_endpoint_matches_profile() {
        // geom(a=0.5, d=2), eps=0.2: arc endpoint (±0.02, 0.2)
        let geom = CuspGeometry::canonical(0.5, 2.0);
        let dom = make_domain(&geom, 0.2).unwrap();
        let arc = &dom.segments[1];
        let p = arc.curve.start();
        assert!((p[0] - 0.5 * 0.2 * 0.2).abs() < 1e-16);
        assert_eq!(p[1], 0.2);
        let last = dom.segments.last().unwrap();
        let q = last.curve.end();
        assert!((q[0] + 0.02).abs() < 1e-16);
    }

    #[test]
    fn boundary_chain_is_closed() {
        let geom = CuspGeometry::canonical(1.0, 1.0);
        for dom in [
            make_domain(&geom, 0.05).unwrap(),
            make_half_domain(&geom, 0.05).unwrap(),
        ] {
            let n = dom.segments.len();
            for i in 0..n {
                let e = dom.segments[i].curve.end();
                let s = dom.segments[(i + 1) % n].curve.start();
                let gap = ((e[0] - s[0]).powi(2) + (e[1] - s[1]).powi(2)).sqrt();
                assert!(gap < 1e-12, "segment {i} gap {gap}");
            }
            assert!(dom.area_quadrature(512) > 0.0, "chain must be CCW");
        }
    }

    #[test]
    fn measures_match_named_cases() {
        let g = CuspGeometry::canonical(1.0, 1.0);
        assert_eq!(g.omega_measure(), 2.0);
        assert_eq!(g.omega_boundary_measure(), 2.0);
        let mut g3 = CuspGeometry::canonical(1.0, 1.0);
        g3.n = 3;
        assert!((g3.omega_measure() - std::f64::consts::PI).abs() < 1e-14);
        assert!((g3.omega_boundary_measure() - 2.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn half_and_full_area_consistent() {
        let geom = CuspGeometry::canonical(1.0, 1.0);
        let full = make_domain(&geom, 0.01).unwrap().area_quadrature(1024);
        let half = make_half_domain(&geom, 0.01)
            .unwrap()
            .area_quadrature(1024);
        assert!((full - 2.0 * half).abs() < 1e-6 * full);
    }
}
