//! P1 finite-element assembly for the Steklov problem on a blunted domain:
//! stiffness `∫ ∇u·∇v`, boundary mass `∫ uv` on the Steklov part and on the
//! artificial end, with Dirichlet constraints handled by elimination.
//!
//! Element integrals are closed-form; there is no quadrature error.

use crate::geometry::{BoundaryTag, EndCondition, Mesh};
use crate::linalg::{CsrMatrix, EnvelopeFactor, FactorKind, Triplets};
use crate::{Error, Result};

/// Assembled matrices restricted to the free (unconstrained) unknowns.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Stiffness on free unknowns.
    pub a: CsrMatrix,
    /// Spectral boundary mass on free unknowns: Steklov part, plus the end
    /// mass when `end_condition == Steklov`.
    pub m_gamma: CsrMatrix,
    /// Boundary mass of the artificial end alone (free unknowns). Zero rows
    /// under a Dirichlet end (those nodes are eliminated).
    pub m_end: CsrMatrix,
    /// Eliminated node indices, sorted.
    pub constrained: Vec<usize>,
    /// Node index of each equation (sorted ascending).
    pub free_nodes: Vec<usize>,
    /// Inverse map: node -> equation.
    pub node_to_eq: Vec<Option<usize>>,
    pub end_condition: EndCondition,
    pub odd_sector: bool,
}

impl AssembledSystem {
    pub fn n_free(&self) -> usize {
        self.free_nodes.len()
    }

    /// Scatter a free-dof vector into a full nodal vector (zeros on
    /// constrained nodes).
    pub fn scatter(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.node_to_eq.len()];
        for (eq, &node) in self.free_nodes.iter().enumerate() {
            full[node] = u[eq];
        }
        full
    }

    /// Restrict a full nodal vector to the free dofs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&n| full[n]).collect()
    }
}

/// Assemble the system for a mesh under the given end condition.
///
/// `odd_sector` imposes `u = 0` on the symmetry plane, realizing the
/// half-domain problem; it requires a half mesh with tagged symmetry-plane
/// edges or a mirror-symmetric full mesh with nodes on the axis.
pub fn assemble(mesh: &Mesh, end_condition: EndCondition, odd_sector: bool) -> Result<AssembledSystem> {
    let n = mesh.nodes.len();
    let mut constrained: Vec<usize> = Vec::new();
    if end_condition == EndCondition::Dirichlet {
        constrained.extend(mesh.boundary_nodes(BoundaryTag::ArtificialEnd));
    }
    if odd_sector {
        let plane = mesh.boundary_nodes(BoundaryTag::SymmetryPlane);
        if !plane.is_empty() {
            constrained.extend(plane);
        } else {
            if !mesh.is_mirror_symmetric() {
                return Err(Error::SymmetryRequired);
            }
            let axis = mesh.axis_nodes();
            if axis.is_empty() {
                return Err(Error::SymmetryRequired);
            }
            constrained.extend(axis);
        }
    }
    constrained.sort_unstable();
    constrained.dedup();

    let mut node_to_eq: Vec<Option<usize>> = vec![None; n];
    let mut free_nodes = Vec::with_capacity(n - constrained.len());
    {
        let mut c_it = constrained.iter().peekable();
        for node in 0..n {
            if c_it.peek() == Some(&&node) {
                c_it.next();
            } else {
                node_to_eq[node] = Some(free_nodes.len());
                free_nodes.push(node);
            }
        }
    }
    let nf = free_nodes.len();
    let mut ta = Triplets::new(nf);
    let mut tg = Triplets::new(nf);
    let mut te = Triplets::new(nf);

    // stiffness: grad phi_i = (b_i, c_i) / (2A)
    for t in &mesh.triangles {
        let p = [
            mesh.nodes[t[0] as usize],
            mesh.nodes[t[1] as usize],
            mesh.nodes[t[2] as usize],
        ];
        let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
        let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
        let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
        if !(area2 > 0.0) {
            return Err(Error::Numerical("degenerate triangle in assembly".into()));
        }
        for i in 0..3 {
            let ei = match node_to_eq[t[i] as usize] {
                Some(e) => e,
                None => continue,
            };
            for j in 0..3 {
                if let Some(ej) = node_to_eq[t[j] as usize] {
                    let k = (b[i] * b[j] + c[i] * c[j]) / (2.0 * area2);
                    ta.push(ei, ej, k);
                }
            }
        }
    }
    // boundary masses: edge matrix L/6 [[2,1],[1,2]]
    for e in &mesh.boundary_edges {
        let target = match e.tag {
            BoundaryTag::SteklovBoundary => &mut tg,
            BoundaryTag::ArtificialEnd => &mut te,
            BoundaryTag::SymmetryPlane => continue,
        };
        let pa = mesh.nodes[e.a as usize];
        let pb = mesh.nodes[e.b as usize];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let ids = [e.a as usize, e.b as usize];
        for i in 0..2 {
            let ei = match node_to_eq[ids[i]] {
                Some(eq) => eq,
                None => continue,
            };
            for j in 0..2 {
                if let Some(ej) = node_to_eq[ids[j]] {
                    let v = if i == j { len / 3.0 } else { len / 6.0 };
                    target.push(ei, ej, v);
                }
            }
        }
    }
    if end_condition == EndCondition::Steklov {
        // the end participates in the spectral boundary
        for e in &mesh.boundary_edges {
            if e.tag != BoundaryTag::ArtificialEnd {
                continue;
            }
            let pa = mesh.nodes[e.a as usize];
            let pb = mesh.nodes[e.b as usize];
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let ids = [e.a as usize, e.b as usize];
            for i in 0..2 {
                let ei = match node_to_eq[ids[i]] {
                    Some(eq) => eq,
                    None => continue,
                };
                for j in 0..2 {
                    if let Some(ej) = node_to_eq[ids[j]] {
                        let v = if i == j { len / 3.0 } else { len / 6.0 };
                        tg.push(ei, ej, v);
                    }
                }
            }
        }
    }
    Ok(AssembledSystem {
        a: ta.to_csr(),
        m_gamma: tg.to_csr(),
        m_end: te.to_csr(),
        constrained,
        free_nodes,
        node_to_eq,
        end_condition,
        odd_sector,
    })
}

/// The inner product `⟨u, v⟩_ε = uᵀ (A + M_Γ) v` on free dofs.
pub fn discrete_inner_product(sys: &AssembledSystem, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != sys.n_free() || v.len() != sys.n_free() {
        return Err(Error::DimensionMismatch {
            expected: sys.n_free(),
            got: u.len().max(v.len()),
        });
    }
    Ok(sys.a.bilinear(u, v) + sys.m_gamma.bilinear(u, v))
}

/// Energy norm `⟨u, u⟩_ε^{1/2}`.
pub fn energy_norm(sys: &AssembledSystem, u: &[f64]) -> Result<f64> {
    Ok(discrete_inner_product(sys, u, u)?.max(0.0).sqrt())
}

/// The discrete operator `S = (A + M_Γ)⁻¹ M_Γ`, i.e. the unique `w` with
/// `⟨S u, v⟩_ε = (u, v)_Γ`. Holds one factorization; reuse across calls.
pub struct DiscreteSteklovOp<'a> {
    sys: &'a AssembledSystem,
    factor: EnvelopeFactor,
}

impl<'a> DiscreteSteklovOp<'a> {
    pub fn new(sys: &'a AssembledSystem) -> Result<Self> {
        let mut sum = Triplets::new(sys.n_free());
        for i in 0..sys.n_free() {
            for (j, v) in sys.a.row(i) {
                sum.push(i, j, v);
            }
            for (j, v) in sys.m_gamma.row(i) {
                sum.push(i, j, v);
            }
        }
        let factor = EnvelopeFactor::factor(&sum.to_csr(), FactorKind::PositiveDefinite)
            .map_err(|e| Error::Numerical(format!("energy matrix factorization: {e}")))?;
        Ok(DiscreteSteklovOp { sys, factor })
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.sys.n_free() {
            return Err(Error::DimensionMismatch {
                expected: self.sys.n_free(),
                got: u.len(),
            });
        }
        Ok(self.factor.solve(&self.sys.m_gamma.mul_vec(u)))
    }
}

/// Apply the discrete operator `S` once (builds a fresh factorization; use
/// [`DiscreteSteklovOp`] to amortize).
pub fn apply_s(sys: &AssembledSystem, u: &[f64]) -> Result<Vec<f64>> {
    DiscreteSteklovOp::new(sys)?.apply(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryEdge, Mesh};

    /// A reference triangle (0,0), (1,0), (0,1) with no boundary edges.
    fn reference_triangle() -> Mesh {
        Mesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            boundary_edges: vec![
                BoundaryEdge {
                    a: 0,
                    b: 1,
                    tag: BoundaryTag::SteklovBoundary,
                },
                BoundaryEdge {
                    a: 1,
                    b: 2,
                    tag: BoundaryTag::SteklovBoundary,
                },
                BoundaryEdge {
                    a: 0,
                    b: 2,
                    tag: BoundaryTag::SteklovBoundary,
                },
            ],
            epsilon: 0.0,
        }
    }

    /// Unit square split into two triangles; bottom edge is the end,
    /// the rest Steklov.
    fn two_triangle_square() -> Mesh {
        Mesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            triangles: vec![[0, 1, 3], [0, 3, 2]],
            boundary_edges: vec![
                BoundaryEdge {
                    a: 0,
                    b: 1,
                    tag: BoundaryTag::ArtificialEnd,
                },
                BoundaryEdge {
                    a: 1,
                    b: 3,
                    tag: BoundaryTag::SteklovBoundary,
                },
                BoundaryEdge {
                    a: 2,
                    b: 3,
                    tag: BoundaryTag::SteklovBoundary,
                },
                BoundaryEdge {
                    a: 0,
                    b: 2,
                    tag: BoundaryTag::SteklovBoundary,
                },
            ],
            epsilon: 0.0,
        }
    }

    #[test]
    fn reference_triangle_stiffness() {
        let sys = assemble(&reference_triangle(), EndCondition::Neumann, false).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(sys.a.get(i, j), expect[i][j], "A[{i}][{j}]");
            }
        }
    }

    #[test]
    fn edge_mass_matrix_exact() {
        // boundary edge of length L contributes [[L/3, L/6], [L/6, L/3]]
        let mesh = Mesh {
            nodes: vec![[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            boundary_edges: vec![BoundaryEdge {
                a: 0,
                b: 1,
                tag: BoundaryTag::SteklovBoundary,
            }],
            epsilon: 0.0,
        };
        let sys = assemble(&mesh, EndCondition::Neumann, false).unwrap();
        assert_eq!(sys.m_gamma.get(0, 0), 1.0);
        assert_eq!(sys.m_gamma.get(0, 1), 0.5);
        assert_eq!(sys.m_gamma.get(1, 1), 1.0);
        assert_eq!(sys.m_gamma.get(2, 2), 0.0);
    }

    #[test]
    fn dirichlet_end_eliminates_nodes() {
        let mesh = two_triangle_square();
        let sys = assemble(&mesh, EndCondition::Dirichlet, false).unwrap();
        assert_eq!(sys.constrained, vec![0, 1]);
        assert_eq!(sys.free_nodes, vec![2, 3]);
        assert_eq!(sys.a.n, 2);
        // Neumann keeps all nodes and adds no end mass to m_gamma
        let sysn = assemble(&mesh, EndCondition::Neumann, false).unwrap();
        assert_eq!(sysn.n_free(), 4);
        assert_eq!(sysn.m_gamma.get(0, 1), 0.0);
        assert!(sysn.m_end.get(0, 1) > 0.0);
        // Steklov end folds the end mass into m_gamma
        let syss = assemble(&mesh, EndCondition::Steklov, false).unwrap();
        assert!(syss.m_gamma.get(0, 1) > 0.0);
    }

    #[test]
    fn matrices_exactly_symmetric() {
        let geom = crate::geometry::CuspGeometry::canonical(1.0, 1.0);
        let dom = crate::geometry::make_domain(&geom, 0.05).unwrap();
        let mesh = crate::geometry::make_mesh(&dom, 0.15, 1.0).unwrap();
        let sys = assemble(&mesh, EndCondition::Dirichlet, false).unwrap();
        assert_eq!(sys.a.asymmetry(), 0.0);
        assert_eq!(sys.m_gamma.asymmetry(), 0.0);
    }

    #[test]
    fn inner_product_matches_independent_boundary_quadrature() {
        // <S u, v>_eps = (u, v)_Gamma: compare against a hand quadrature loop
        let mesh = two_triangle_square();
        let sys = assemble(&mesh, EndCondition::Neumann, false).unwrap();
        let u: Vec<f64> = vec![0.3, -1.2, 0.7, 2.1];
        let op = DiscreteSteklovOp::new(&sys).unwrap();
        let su = op.apply(&u).unwrap();
        let lhs = discrete_inner_product(&sys, &su, &u).unwrap();
        // independent trapezoid-free quadrature: integrate the product of
        // linear traces on each Steklov edge with Simpson (exact for P2)
        let mut rhs = 0.0;
        for e in &mesh.boundary_edges {
            if e.tag != BoundaryTag::SteklovBoundary {
                continue;
            }
            let (ia, ib) = (e.a as usize, e.b as usize);
            let pa = mesh.nodes[ia];
            let pb = mesh.nodes[ib];
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let (ua, ub) = (u[ia], u[ib]);
            let mid = 0.5 * (ua + ub);
            rhs += len / 6.0 * (ua * ua + 4.0 * mid * mid + ub * ub);
        }
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn apply_s_vanishes_off_boundary() {
        // u supported away from the Steklov boundary -> M u = 0 -> S u = 0
        let geom = crate::geometry::CuspGeometry::canonical(1.0, 1.0);
        let dom = crate::geometry::make_domain(&geom, 0.05).unwrap();
        let mesh = crate::geometry::make_mesh(&dom, 0.15, 1.0).unwrap();
        let sys = assemble(&mesh, EndCondition::Dirichlet, false).unwrap();
        let bset: std::collections::HashSet<usize> = mesh
            .boundary_nodes(BoundaryTag::SteklovBoundary)
            .into_iter()
            .collect();
        let mut u = vec![0.0; sys.n_free()];
        let mut touched = false;
        for (eq, &node) in sys.free_nodes.iter().enumerate() {
            if !bset.contains(&node) {
                // also keep away from boundary-adjacent entries of m_gamma
                if sys.m_gamma.row(eq).all(|(_, v)| v == 0.0) {
                    u[eq] = 1.0;
                    touched = true;
                }
            }
        }
        assert!(touched);
        let su = apply_s(&sys, &u).unwrap();
        let norm: f64 = su.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-12, "S u norm {norm}");
    }

    #[test]
    fn odd_sector_requires_symmetry() {
        let mesh = two_triangle_square(); // not mirror symmetric about y=0
        assert!(matches!(
            assemble(&mesh, EndCondition::Dirichlet, true),
            Err(Error::SymmetryRequired)
        ));
    }

    #[test]
    fn odd_sector_constrains_axis_or_plane() {
        let geom = crate::geometry::CuspGeometry::canonical(1.0, 1.0);
        // full symmetric mesh: axis nodes eliminated
        let dom = crate::geometry::make_domain(&geom, 0.05).unwrap();
        let mesh = crate::geometry::make_mesh(&dom, 0.2, 1.0).unwrap();
        let sys = assemble(&mesh, EndCondition::Dirichlet, true).unwrap();
        for &c in &sys.constrained {
            assert!(mesh.nodes[c][0] == 0.0 || mesh.nodes[c][1] == mesh.epsilon);
        }
        assert!(sys.constrained.len() > mesh.boundary_nodes(BoundaryTag::ArtificialEnd).len());
        // half mesh: symmetry-plane nodes eliminated
        let hdom = crate::geometry::make_half_domain(&geom, 0.05).unwrap();
        let hmesh = crate::geometry::make_mesh(&hdom, 0.2, 1.0).unwrap();
        let hsys = assemble(&hmesh, EndCondition::Dirichlet, true).unwrap();
        let plane = hmesh.boundary_nodes(BoundaryTag::SymmetryPlane);
        for p in plane {
            assert!(hsys.constrained.contains(&p));
        }
    }
}
