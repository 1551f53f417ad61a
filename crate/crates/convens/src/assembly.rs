//! Degree-of-freedom layout and sparse assembly of the discrete operators:
//! mass, diffusion, divergence, buoyancy coupling, the first-velocity-component
//! source, and the explicitly skew-symmetric convection forms.
//!
//! The default quadrature is exact through degree 5, which integrates the
//! trilinear form P2·∇P2·P2 exactly; discrete skew-symmetry then holds to
//! rounding rather than asymptotically.

use std::collections::HashMap;

use crate::elements::{eval_basis, quadrature, ElementGeometry, QuadratureRule};
use crate::error::{Error, Result};
use crate::linsolve::SparseMatrix;
use crate::mesh::{BoundaryTag, Region, TriMesh};

/// Which unknown a coefficient vector belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldRole {
    Velocity,
    Pressure,
    Temperature,
}

/// Coefficient vector indexed by the layout of its role.
#[derive(Clone, Debug)]
pub struct FieldVector {
    pub role: FieldRole,
    pub values: Vec<f64>,
}

impl FieldVector {
    pub fn zeros(role: FieldRole, layout: &DofLayout) -> FieldVector {
        let n = match role {
            FieldRole::Velocity => layout.n_velocity_dofs(),
            FieldRole::Pressure => layout.n_pressure_dofs(),
            FieldRole::Temperature => layout.n_temperature_dofs(),
        };
        FieldVector { role, values: vec![0.0; n] }
    }
}

/// Piecewise-constant material coefficient.
#[derive(Clone, Copy, Debug)]
pub struct RegionCoeff {
    pub fluid: f64,
    pub solid: f64,
}

impl RegionCoeff {
    pub fn uniform(k: f64) -> RegionCoeff {
        RegionCoeff { fluid: k, solid: k }
    }

    fn get(&self, r: Region) -> f64 {
        match r {
            Region::Fluid => self.fluid,
            Region::Solid => self.solid,
        }
    }
}

/// Maps P2/P1 mesh entities to velocity, pressure, and temperature degrees of
/// freedom, with constrained-dof masks.
///
/// Velocity and pressure dofs exist only on entities with fluid support;
/// temperature spans the whole mesh. Velocity is constrained on all of ∂Ω and
/// on every node touching a solid triangle; temperature is constrained on Γ1
/// nodes.
#[derive(Clone, Debug)]
pub struct DofLayout {
    /// Per-triangle global P2 node ids: three vertices, then the edge nodes
    /// opposite each vertex.
    pub tri_nodes: Vec<[usize; 6]>,
    /// Coordinates of every P2 node (vertices first, then edge midpoints).
    pub node_coords: Vec<[f64; 2]>,
    pub n_vertices: usize,

    vel_node: Vec<Option<u32>>,
    vel_node_inv: Vec<u32>,
    pub vel_constrained: Vec<bool>,

    pressure_dof: Vec<Option<u32>>,
    pressure_dof_inv: Vec<u32>,

    pub temp_constrained: Vec<bool>,
}

impl DofLayout {
    /// Build the layout for a boundary-classified mesh.
    pub fn new(mesh: &TriMesh) -> Result<DofLayout> {
        if mesh.boundary_edges.iter().any(|e| e.tag.is_none()) {
            return Err(Error::Assembly("mesh boundary must be classified before layout".into()));
        }
        let nv = mesh.n_vertices();

        // unique edges
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edge_list: Vec<[usize; 2]> = Vec::new();
        let mut edge_of = |a: usize, b: usize, list: &mut Vec<[usize; 2]>| -> usize {
            let key = if a < b { [a, b] } else { [b, a] };
            *edge_ids.entry(key).or_insert_with(|| {
                list.push(key);
                list.len() - 1
            })
        };
        let mut tri_nodes = Vec::with_capacity(mesh.n_triangles());
        for t in &mesh.triangles {
            let [a, b, c] = *t;
            let e0 = edge_of(b, c, &mut edge_list);
            let e1 = edge_of(a, c, &mut edge_list);
            let e2 = edge_of(a, b, &mut edge_list);
            tri_nodes.push([a, b, c, nv + e0, nv + e1, nv + e2]);
        }
        let n_nodes = nv + edge_list.len();
        let mut node_coords = mesh.vertices.clone();
        node_coords.extend(edge_list.iter().map(|e| {
            let p = mesh.vertices[e[0]];
            let q = mesh.vertices[e[1]];
            [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
        }));

        // fluid support
        let mut node_fluid = vec![false; n_nodes];
        let mut vertex_fluid = vec![false; nv];
        let mut node_solid = vec![false; n_nodes];
        for (t, nodes) in tri_nodes.iter().enumerate() {
            match mesh.region[t] {
                Region::Fluid => {
                    for &n in nodes {
                        node_fluid[n] = true;
                    }
                    for &v in &mesh.triangles[t] {
                        vertex_fluid[v] = true;
                    }
                }
                Region::Solid => {
                    for &n in nodes {
                        node_solid[n] = true;
                    }
                }
            }
        }

        let mut vel_node = vec![None; n_nodes];
        let mut vel_node_inv = Vec::new();
        for (n, &f) in node_fluid.iter().enumerate() {
            if f {
                vel_node[n] = Some(vel_node_inv.len() as u32);
                vel_node_inv.push(n as u32);
            }
        }
        let mut pressure_dof = vec![None; nv];
        let mut pressure_dof_inv = Vec::new();
        for (v, &f) in vertex_fluid.iter().enumerate() {
            if f {
                pressure_dof[v] = Some(pressure_dof_inv.len() as u32);
                pressure_dof_inv.push(v as u32);
            }
        }

        // boundary nodes: endpoints plus the edge midpoint node
        let mut on_boundary = vec![false; n_nodes];
        let mut on_gamma1 = vec![false; n_nodes];
        for e in &mesh.boundary_edges {
            let [a, b] = e.vertices;
            let key = if a < b { [a, b] } else { [b, a] };
            let mid = nv + edge_ids[&key];
            for n in [a, b, mid] {
                on_boundary[n] = true;
                if e.tag == Some(BoundaryTag::Gamma1DirichletT) {
                    on_gamma1[n] = true;
                }
            }
        }

        let mut vel_constrained = vec![false; 2 * vel_node_inv.len()];
        for n in 0..n_nodes {
            if let Some(k) = vel_node[n] {
                if on_boundary[n] || node_solid[n] {
                    vel_constrained[2 * k as usize] = true;
                    vel_constrained[2 * k as usize + 1] = true;
                }
            }
        }
        let temp_constrained: Vec<bool> = (0..n_nodes).map(|n| on_gamma1[n]).collect();

        Ok(DofLayout {
            tri_nodes,
            node_coords,
            n_vertices: nv,
            vel_node,
            vel_node_inv,
            vel_constrained,
            pressure_dof,
            pressure_dof_inv,
            temp_constrained,
        })
    }

    pub fn n_p2_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_velocity_dofs(&self) -> usize {
        2 * self.vel_node_inv.len()
    }

    pub fn n_pressure_dofs(&self) -> usize {
        self.pressure_dof_inv.len()
    }

    pub fn n_temperature_dofs(&self) -> usize {
        self.n_p2_nodes()
    }

    /// Velocity dof for a P2 node and component, when the node has fluid
    /// support.
    pub fn velocity_dof(&self, node: usize, comp: usize) -> Option<usize> {
        self.vel_node[node].map(|k| 2 * k as usize + comp)
    }

    pub fn pressure_dof(&self, vertex: usize) -> Option<usize> {
        self.pressure_dof[vertex].map(|k| k as usize)
    }

    /// Coordinates of the P2 node carrying a velocity dof.
    pub fn velocity_dof_coords(&self, dof: usize) -> [f64; 2] {
        self.node_coords[self.vel_node_inv[dof / 2] as usize]
    }

    pub fn pressure_dof_coords(&self, dof: usize) -> [f64; 2] {
        self.node_coords[self.pressure_dof_inv[dof] as usize]
    }

    pub fn velocity_constrained_dofs(&self) -> Vec<usize> {
        (0..self.n_velocity_dofs()).filter(|&d| self.vel_constrained[d]).collect()
    }

    pub fn temperature_constrained_dofs(&self) -> Vec<usize> {
        (0..self.n_temperature_dofs()).filter(|&d| self.temp_constrained[d]).collect()
    }
}

fn default_rule() -> QuadratureRule {
    quadrature(5).expect("degree-5 rule available")
}

struct ElementCtx {
    /// per quad point: P2 values, physical P2 gradients, P1 values, weight × detJ
    p2_vals: Vec<[f64; 6]>,
    p2_grads: Vec<[[f64; 2]; 6]>,
    p1_vals: Vec<[f64; 3]>,
    wdet: Vec<f64>,
    points: Vec<[f64; 2]>,
}

fn element_ctx(mesh: &TriMesh, tri: usize, rule: &QuadratureRule) -> Result<ElementCtx> {
    let geo = ElementGeometry::new(mesh, tri)?;
    let nq = rule.points.len();
    let mut p2_vals = Vec::with_capacity(nq);
    let mut p2_grads = Vec::with_capacity(nq);
    let mut p1_vals = Vec::with_capacity(nq);
    let mut wdet = Vec::with_capacity(nq);
    let mut points = Vec::with_capacity(nq);
    for (p, &w) in rule.points.iter().zip(&rule.weights) {
        let b2 = eval_basis(2, *p)?;
        let b1 = eval_basis(1, *p)?;
        let mut grads = [[0.0; 2]; 6];
        for j in 0..6 {
            grads[j] = geo.grad(b2.gradients[j]);
        }
        p2_vals.push(b2.values);
        p2_grads.push(grads);
        let mut v1 = [0.0; 3];
        v1.copy_from_slice(&b1.values[..3]);
        p1_vals.push(v1);
        // reference weights integrate to 1/2 = reference area, detJ = 2·area
        wdet.push(w * geo.det);
        points.push(geo.map(*p));
    }
    Ok(ElementCtx { p2_vals, p2_grads, p1_vals, wdet, points })
}

fn for_each_tri(mesh: &TriMesh, fluid_only: bool, mut f: impl FnMut(usize) -> Result<()>) -> Result<()> {
    for t in 0..mesh.n_triangles() {
        if fluid_only && mesh.region[t] != Region::Fluid {
            continue;
        }
        f(t)?;
    }
    Ok(())
}

/// Mass matrix of the requested space. Symmetric positive definite on free
/// dofs; velocity mass acts componentwise.
pub fn assemble_mass(mesh: &TriMesh, layout: &DofLayout, role: FieldRole) -> Result<SparseMatrix> {
    let rule = default_rule();
    let mut trips = Vec::new();
    match role {
        FieldRole::Temperature | FieldRole::Velocity => {
            let fluid_only = role == FieldRole::Velocity;
            for_each_tri(mesh, fluid_only, |t| {
                let ctx = element_ctx(mesh, t, &rule)?;
                let nodes = layout.tri_nodes[t];
                let mut local = [[0.0; 6]; 6];
                for (q, &w) in ctx.wdet.iter().enumerate() {
                    let v = ctx.p2_vals[q];
                    for i in 0..6 {
                        for j in 0..6 {
                            local[i][j] += w * v[i] * v[j];
                        }
                    }
                }
                for i in 0..6 {
                    for j in 0..6 {
                        match role {
                            FieldRole::Temperature => trips.push((nodes[i], nodes[j], local[i][j])),
                            FieldRole::Velocity => {
                                if let (Some(di), Some(dj)) = (
                                    layout.velocity_dof(nodes[i], 0),
                                    layout.velocity_dof(nodes[j], 0),
                                ) {
                                    trips.push((di, dj, local[i][j]));
                                    trips.push((di + 1, dj + 1, local[i][j]));
                                }
                            }
                            FieldRole::Pressure => unreachable!(),
                        }
                    }
                }
                Ok(())
            })?;
            let n = if role == FieldRole::Velocity {
                layout.n_velocity_dofs()
            } else {
                layout.n_temperature_dofs()
            };
            SparseMatrix::from_triplets(n, n, &trips)
        }
        FieldRole::Pressure => {
            for_each_tri(mesh, true, |t| {
                let ctx = element_ctx(mesh, t, &rule)?;
                let verts = mesh.triangles[t];
                for (q, &w) in ctx.wdet.iter().enumerate() {
                    let v = ctx.p1_vals[q];
                    for i in 0..3 {
                        for j in 0..3 {
                            if let (Some(di), Some(dj)) =
                                (layout.pressure_dof(verts[i]), layout.pressure_dof(verts[j]))
                            {
                                trips.push((di, dj, w * v[i] * v[j]));
                            }
                        }
                    }
                }
                Ok(())
            })?;
            let n = layout.n_pressure_dofs();
            SparseMatrix::from_triplets(n, n, &trips)
        }
    }
}

/// Diffusion matrix ∫ κ ∇φi·∇φj with piecewise-constant κ per region.
pub fn assemble_stiffness(
    mesh: &TriMesh,
    layout: &DofLayout,
    role: FieldRole,
    coeff: &RegionCoeff,
) -> Result<SparseMatrix> {
    if coeff.fluid <= 0.0 || (coeff.solid <= 0.0 && mesh.region.contains(&Region::Solid)) {
        return Err(Error::Assembly("diffusion coefficient must be positive on every region".into()));
    }
    if role == FieldRole::Pressure {
        return Err(Error::Assembly("pressure has no diffusion operator in these schemes".into()));
    }
    let rule = default_rule();
    let fluid_only = role == FieldRole::Velocity;
    let mut trips = Vec::new();
    for_each_tri(mesh, fluid_only, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let k = coeff.get(mesh.region[t]);
        let nodes = layout.tri_nodes[t];
        let mut local = [[0.0; 6]; 6];
        for (q, &w) in ctx.wdet.iter().enumerate() {
            let g = ctx.p2_grads[q];
            for i in 0..6 {
                for j in 0..6 {
                    local[i][j] += w * k * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                match role {
                    FieldRole::Temperature => trips.push((nodes[i], nodes[j], local[i][j])),
                    FieldRole::Velocity => {
                        if let (Some(di), Some(dj)) =
                            (layout.velocity_dof(nodes[i], 0), layout.velocity_dof(nodes[j], 0))
                        {
                            trips.push((di, dj, local[i][j]));
                            trips.push((di + 1, dj + 1, local[i][j]));
                        }
                    }
                    FieldRole::Pressure => unreachable!(),
                }
            }
        }
        Ok(())
    })?;
    let n = if role == FieldRole::Velocity {
        layout.n_velocity_dofs()
    } else {
        layout.n_temperature_dofs()
    };
    SparseMatrix::from_triplets(n, n, &trips)
}

/// Divergence coupling B with (B u)_q = (ψ_q, ∇·u).
pub fn assemble_divergence(mesh: &TriMesh, layout: &DofLayout) -> Result<SparseMatrix> {
    let rule = default_rule();
    let mut trips = Vec::new();
    for_each_tri(mesh, true, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let nodes = layout.tri_nodes[t];
        let verts = mesh.triangles[t];
        for (qp, &w) in ctx.wdet.iter().enumerate() {
            let p1 = ctx.p1_vals[qp];
            let g = ctx.p2_grads[qp];
            for (iq, &vq) in verts.iter().enumerate() {
                let Some(dq) = layout.pressure_dof(vq) else { continue };
                for j in 0..6 {
                    if let Some(dj) = layout.velocity_dof(nodes[j], 0) {
                        trips.push((dq, dj, w * p1[iq] * g[j][0]));
                        trips.push((dq, dj + 1, w * p1[iq] * g[j][1]));
                    }
                }
            }
        }
        Ok(())
    })?;
    SparseMatrix::from_triplets(layout.n_pressure_dofs(), layout.n_velocity_dofs(), &trips)
}

fn velocity_at(
    layout: &DofLayout,
    w: &[f64],
    nodes: &[usize; 6],
    vals: &[f64; 6],
) -> [f64; 2] {
    let mut out = [0.0; 2];
    for j in 0..6 {
        if let Some(d) = layout.velocity_dof(nodes[j], 0) {
            out[0] += w[d] * vals[j];
            out[1] += w[d + 1] * vals[j];
        }
    }
    out
}

/// Skew-symmetrized convection matrix N(w) with entries b(w, φj, φi) for the
/// requested space, where b(u,v,w) = ½(u·∇v, w) − ½(u·∇w, v). By
/// construction vᵀN(w)v = 0 up to quadrature rounding.
pub fn assemble_convection(
    mesh: &TriMesh,
    layout: &DofLayout,
    w: &FieldVector,
    role: FieldRole,
) -> Result<SparseMatrix> {
    if w.role != FieldRole::Velocity {
        return Err(Error::Assembly("convecting field must be a velocity".into()));
    }
    if w.values.len() != layout.n_velocity_dofs() {
        return Err(Error::DimensionMismatch { expected: layout.n_velocity_dofs(), got: w.values.len() });
    }
    if role == FieldRole::Pressure {
        return Err(Error::Assembly("no convection operator on the pressure space".into()));
    }
    let rule = default_rule();
    let fluid_only = role == FieldRole::Velocity;
    let mut trips = Vec::new();
    for_each_tri(mesh, fluid_only, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let nodes = layout.tri_nodes[t];
        let mut local = [[0.0; 6]; 6];
        for (q, &wq) in ctx.wdet.iter().enumerate() {
            let vals = ctx.p2_vals[q];
            let grads = ctx.p2_grads[q];
            let wvec = velocity_at(layout, &w.values, &nodes, &vals);
            for (j, gj) in grads.iter().enumerate() {
                let wdotgj = wvec[0] * gj[0] + wvec[1] * gj[1];
                for i in 0..6 {
                    let wdotgi = wvec[0] * grads[i][0] + wvec[1] * grads[i][1];
                    local[i][j] += wq * 0.5 * (wdotgj * vals[i] - wdotgi * vals[j]);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                match role {
                    FieldRole::Temperature => trips.push((nodes[i], nodes[j], local[i][j])),
                    FieldRole::Velocity => {
                        if let (Some(di), Some(dj)) =
                            (layout.velocity_dof(nodes[i], 0), layout.velocity_dof(nodes[j], 0))
                        {
                            trips.push((di, dj, local[i][j]));
                            trips.push((di + 1, dj + 1, local[i][j]));
                        }
                    }
                    FieldRole::Pressure => unreachable!(),
                }
            }
        }
        Ok(())
    })?;
    let n = if role == FieldRole::Velocity {
        layout.n_velocity_dofs()
    } else {
        layout.n_temperature_dofs()
    };
    SparseMatrix::from_triplets(n, n, &trips)
}

/// y_i = b(w, z, φ_i) evaluated directly, without forming the matrix. Used
/// for the lagged fluctuation terms on the right-hand side.
pub fn convection_apply(
    mesh: &TriMesh,
    layout: &DofLayout,
    w: &FieldVector,
    z: &FieldVector,
) -> Result<Vec<f64>> {
    if w.role != FieldRole::Velocity {
        return Err(Error::Assembly("convecting field must be a velocity".into()));
    }
    let rule = default_rule();
    match z.role {
        FieldRole::Velocity => {
            let mut y = vec![0.0; layout.n_velocity_dofs()];
            for_each_tri(mesh, true, |t| {
                let ctx = element_ctx(mesh, t, &rule)?;
                let nodes = layout.tri_nodes[t];
                for (q, &wq) in ctx.wdet.iter().enumerate() {
                    let vals = ctx.p2_vals[q];
                    let grads = ctx.p2_grads[q];
                    let wvec = velocity_at(layout, &w.values, &nodes, &vals);
                    // z value and gradient per component
                    let mut zval = [0.0; 2];
                    let mut zgrad = [[0.0; 2]; 2];
                    for j in 0..6 {
                        if let Some(d) = layout.velocity_dof(nodes[j], 0) {
                            for c in 0..2 {
                                zval[c] += z.values[d + c] * vals[j];
                                zgrad[c][0] += z.values[d + c] * grads[j][0];
                                zgrad[c][1] += z.values[d + c] * grads[j][1];
                            }
                        }
                    }
                    for i in 0..6 {
                        let Some(di) = layout.velocity_dof(nodes[i], 0) else { continue };
                        let wdotgi = wvec[0] * grads[i][0] + wvec[1] * grads[i][1];
                        for c in 0..2 {
                            let wdotgz = wvec[0] * zgrad[c][0] + wvec[1] * zgrad[c][1];
                            y[di + c] += wq * 0.5 * (wdotgz * vals[i] - wdotgi * zval[c]);
                        }
                    }
                }
                Ok(())
            })?;
            Ok(y)
        }
        FieldRole::Temperature => {
            let mut y = vec![0.0; layout.n_temperature_dofs()];
            for_each_tri(mesh, false, |t| {
                let ctx = element_ctx(mesh, t, &rule)?;
                let nodes = layout.tri_nodes[t];
                for (q, &wq) in ctx.wdet.iter().enumerate() {
                    let vals = ctx.p2_vals[q];
                    let grads = ctx.p2_grads[q];
                    let wvec = velocity_at(layout, &w.values, &nodes, &vals);
                    let mut zval = 0.0;
                    let mut zgrad = [0.0; 2];
                    for j in 0..6 {
                        let zv = z.values[nodes[j]];
                        zval += zv * vals[j];
                        zgrad[0] += zv * grads[j][0];
                        zgrad[1] += zv * grads[j][1];
                    }
                    let wdotgz = wvec[0] * zgrad[0] + wvec[1] * zgrad[1];
                    for i in 0..6 {
                        let wdotgi = wvec[0] * grads[i][0] + wvec[1] * grads[i][1];
                        y[nodes[i]] += wq * 0.5 * (wdotgz * vals[i] - wdotgi * zval);
                    }
                }
                Ok(())
            })?;
            Ok(y)
        }
        FieldRole::Pressure => Err(Error::Assembly("no convection of pressure".into())),
    }
}

/// Buoyancy coupling G with velocity-test × temperature-trial entries
/// (γ φ_T, φ_v). `gamma` must be a unit vector.
pub fn assemble_buoyancy(mesh: &TriMesh, layout: &DofLayout, gamma: [f64; 2]) -> Result<SparseMatrix> {
    let norm = (gamma[0] * gamma[0] + gamma[1] * gamma[1]).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Assembly(format!("gravity direction must be a unit vector, |γ| = {norm}")));
    }
    let rule = default_rule();
    let mut trips = Vec::new();
    for_each_tri(mesh, true, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let nodes = layout.tri_nodes[t];
        for (q, &w) in ctx.wdet.iter().enumerate() {
            let vals = ctx.p2_vals[q];
            for i in 0..6 {
                let Some(di) = layout.velocity_dof(nodes[i], 0) else { continue };
                for j in 0..6 {
                    let m = w * vals[i] * vals[j];
                    if gamma[0] != 0.0 {
                        trips.push((di, nodes[j], gamma[0] * m));
                    }
                    if gamma[1] != 0.0 {
                        trips.push((di + 1, nodes[j], gamma[1] * m));
                    }
                }
            }
        }
        Ok(())
    })?;
    SparseMatrix::from_triplets(layout.n_velocity_dofs(), layout.n_temperature_dofs(), &trips)
}

/// Source coupling for the thin-wall temperature equation: temperature-test ×
/// velocity-trial entries (φ_{u,1}, φ_S) selecting the first velocity
/// component.
pub fn assemble_u1_source(mesh: &TriMesh, layout: &DofLayout) -> Result<SparseMatrix> {
    let rule = default_rule();
    let mut trips = Vec::new();
    for_each_tri(mesh, false, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let nodes = layout.tri_nodes[t];
        for (q, &w) in ctx.wdet.iter().enumerate() {
            let vals = ctx.p2_vals[q];
            for i in 0..6 {
                for j in 0..6 {
                    if let Some(dj) = layout.velocity_dof(nodes[j], 0) {
                        trips.push((nodes[i], dj, w * vals[i] * vals[j]));
                    }
                }
            }
        }
        Ok(())
    })?;
    SparseMatrix::from_triplets(layout.n_temperature_dofs(), layout.n_velocity_dofs(), &trips)
}

/// ∫ φ_i for every dof of the role; used for the pressure zero-mean shift and
/// as a test functional.
pub fn integral_weights(mesh: &TriMesh, layout: &DofLayout, role: FieldRole) -> Result<Vec<f64>> {
    let rule = default_rule();
    let n = match role {
        FieldRole::Velocity => layout.n_velocity_dofs(),
        FieldRole::Pressure => layout.n_pressure_dofs(),
        FieldRole::Temperature => layout.n_temperature_dofs(),
    };
    let mut out = vec![0.0; n];
    let fluid_only = role != FieldRole::Temperature;
    for_each_tri(mesh, fluid_only, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let nodes = layout.tri_nodes[t];
        let verts = mesh.triangles[t];
        for (q, &w) in ctx.wdet.iter().enumerate() {
            match role {
                FieldRole::Pressure => {
                    for i in 0..3 {
                        if let Some(d) = layout.pressure_dof(verts[i]) {
                            out[d] += w * ctx.p1_vals[q][i];
                        }
                    }
                }
                FieldRole::Temperature => {
                    for i in 0..6 {
                        out[nodes[i]] += w * ctx.p2_vals[q][i];
                    }
                }
                FieldRole::Velocity => {
                    for i in 0..6 {
                        if let Some(d) = layout.velocity_dof(nodes[i], 0) {
                            out[d] += w * ctx.p2_vals[q][i];
                            out[d + 1] += w * ctx.p2_vals[q][i];
                        }
                    }
                }
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Load vector ∫ f·φ_i over the fluid for a vector-valued forcing.
pub fn assemble_load_velocity(
    mesh: &TriMesh,
    layout: &DofLayout,
    qdeg: usize,
    f: &mut dyn FnMut([f64; 2]) -> [f64; 2],
) -> Result<Vec<f64>> {
    let rule = quadrature(qdeg)?;
    let mut out = vec![0.0; layout.n_velocity_dofs()];
    for_each_tri(mesh, true, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let nodes = layout.tri_nodes[t];
        for (q, &w) in ctx.wdet.iter().enumerate() {
            let fv = f(ctx.points[q]);
            for i in 0..6 {
                if let Some(d) = layout.velocity_dof(nodes[i], 0) {
                    out[d] += w * fv[0] * ctx.p2_vals[q][i];
                    out[d + 1] += w * fv[1] * ctx.p2_vals[q][i];
                }
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Load vector ∫ g φ_i over the whole domain for a scalar heat source.
pub fn assemble_load_temperature(
    mesh: &TriMesh,
    layout: &DofLayout,
    qdeg: usize,
    g: &mut dyn FnMut([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    let rule = quadrature(qdeg)?;
    let mut out = vec![0.0; layout.n_temperature_dofs()];
    for_each_tri(mesh, false, |t| {
        let ctx = element_ctx(mesh, t, &rule)?;
        let nodes = layout.tri_nodes[t];
        for (q, &w) in ctx.wdet.iter().enumerate() {
            let gv = g(ctx.points[q]);
            for i in 0..6 {
                out[nodes[i]] += w * gv * ctx.p2_vals[q][i];
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Nodal interpolation of a velocity field onto the P2 dofs.
pub fn interpolate_velocity(
    mesh: &TriMesh,
    layout: &DofLayout,
    f: &mut dyn FnMut([f64; 2]) -> [f64; 2],
) -> FieldVector {
    let _ = mesh;
    let mut out = FieldVector::zeros(FieldRole::Velocity, layout);
    for d in (0..layout.n_velocity_dofs()).step_by(2) {
        let p = layout.velocity_dof_coords(d);
        let v = f(p);
        out.values[d] = v[0];
        out.values[d + 1] = v[1];
    }
    out
}

/// Nodal interpolation of a scalar field onto the temperature dofs.
pub fn interpolate_temperature(
    mesh: &TriMesh,
    layout: &DofLayout,
    f: &mut dyn FnMut([f64; 2]) -> f64,
) -> FieldVector {
    let _ = mesh;
    let mut out = FieldVector::zeros(FieldRole::Temperature, layout);
    for (n, p) in layout.node_coords.iter().enumerate() {
        out.values[n] = f(*p);
    }
    out
}

/// Vertex interpolation of a scalar field onto the pressure dofs.
pub fn interpolate_pressure(
    mesh: &TriMesh,
    layout: &DofLayout,
    f: &mut dyn FnMut([f64; 2]) -> f64,
) -> FieldVector {
    let _ = mesh;
    let mut out = FieldVector::zeros(FieldRole::Pressure, layout);
    for d in 0..layout.n_pressure_dofs() {
        out.values[d] = f(layout.pressure_dof_coords(d));
    }
    out
}

/// Evaluate a velocity field at a physical point.
pub fn eval_velocity(mesh: &TriMesh, layout: &DofLayout, u: &FieldVector, p: [f64; 2]) -> Result<[f64; 2]> {
    let (t, r) = mesh.locate(p)?;
    let b = eval_basis(2, clamp_ref(r))?;
    let nodes = layout.tri_nodes[t];
    let mut vals = [0.0; 6];
    vals.copy_from_slice(&b.values[..6]);
    Ok(velocity_at(layout, &u.values, &nodes, &vals))
}

/// Evaluate a temperature field and its gradient at a physical point.
pub fn eval_temperature(
    mesh: &TriMesh,
    layout: &DofLayout,
    f: &FieldVector,
    p: [f64; 2],
) -> Result<(f64, [f64; 2])> {
    let (t, r) = mesh.locate(p)?;
    let b = eval_basis(2, clamp_ref(r))?;
    let geo = ElementGeometry::new(mesh, t)?;
    let nodes = layout.tri_nodes[t];
    let mut val = 0.0;
    let mut grad = [0.0; 2];
    for j in 0..6 {
        let c = f.values[nodes[j]];
        val += c * b.values[j];
        let g = geo.grad(b.gradients[j]);
        grad[0] += c * g[0];
        grad[1] += c * g[1];
    }
    Ok((val, grad))
}

fn clamp_ref(r: [f64; 2]) -> [f64; 2] {
    let x = r[0].max(0.0);
    let y = r[1].max(0.0);
    if x + y > 1.0 {
        let s = x + y;
        [x / s, y / s]
    } else {
        [x, y]
    }
}

/// Row-replacement Dirichlet elimination with symmetric column lifting. The
/// constrained matrix is member-independent; boundary values enter only
/// through the right-hand side, so one factorization serves members with
/// different boundary data.
pub struct ConstrainedSystem {
    pub matrix: SparseMatrix,
    lift: SparseMatrix,
    pub constrained: Vec<usize>,
}

pub fn apply_dirichlet(a: &SparseMatrix, constrained: &[usize]) -> Result<ConstrainedSystem> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let mut dofs: Vec<usize> = constrained.to_vec();
    dofs.sort_unstable();
    dofs.dedup();
    if let Some(&bad) = dofs.iter().find(|&&d| d >= n) {
        return Err(Error::Assembly(format!("constrained dof {bad} out of range")));
    }
    let mut pos = vec![usize::MAX; n];
    for (k, &d) in dofs.iter().enumerate() {
        pos[d] = k;
    }
    let mut mat_trips = Vec::with_capacity(a.nnz());
    let mut lift_trips = Vec::new();
    for r in 0..n {
        if pos[r] != usize::MAX {
            mat_trips.push((r, r, 1.0));
            continue;
        }
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if pos[c] != usize::MAX {
                lift_trips.push((r, pos[c], v));
            } else {
                mat_trips.push((r, c, v));
            }
        }
    }
    Ok(ConstrainedSystem {
        matrix: SparseMatrix::from_triplets(n, n, &mat_trips)?,
        lift: SparseMatrix::from_triplets(n, dofs.len(), &lift_trips)?,
        constrained: dofs,
    })
}

impl ConstrainedSystem {
    /// Lift the boundary values into the right-hand side: subtract the
    /// constrained columns and overwrite constrained entries with their
    /// prescribed values. `values` is aligned with `self.constrained`.
    pub fn constrain_rhs(&self, rhs: &mut [f64], values: &[f64]) {
        assert_eq!(values.len(), self.constrained.len());
        if values.iter().any(|&v| v != 0.0) {
            self.lift.matvec_add(-1.0, values, rhs);
        }
        for (&d, &v) in self.constrained.iter().zip(values) {
            rhs[d] = v;
        }
    }

    /// Map-based variant that rejects a missing boundary value.
    pub fn constrain_rhs_checked(&self, rhs: &mut [f64], values: &HashMap<usize, f64>) -> Result<()> {
        let mut aligned = Vec::with_capacity(self.constrained.len());
        for &d in &self.constrained {
            match values.get(&d) {
                Some(&v) => aligned.push(v),
                None => {
                    return Err(Error::Assembly(format!("missing boundary value for constrained dof {d}")))
                }
            }
        }
        self.constrain_rhs(rhs, &aligned);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::{factorize, norm2};
    use crate::mesh::Side;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn square_layout(m: usize) -> (TriMesh, DofLayout) {
        let mesh = TriMesh::build_structured_unit_square(m)
            .unwrap()
            .classify_boundary(&[Side::Left, Side::Right])
            .unwrap();
        let layout = DofLayout::new(&mesh).unwrap();
        (mesh, layout)
    }

    #[test]
    fn dof_counts_unit_square() {
        let (mesh, layout) = square_layout(4);
        let nv = mesh.n_vertices();
        let nedges = 4 * 4 + 2 * 4 * 5; // diagonals + horizontal + vertical
        assert_eq!(nv, 25);
        assert_eq!(layout.n_p2_nodes(), nv + nedges);
        assert_eq!(layout.n_velocity_dofs(), 2 * (nv + nedges));
        assert_eq!(layout.n_pressure_dofs(), nv);
        assert_eq!(layout.n_temperature_dofs(), nv + nedges);
    }

    #[test]
    fn mass_integrates_constants_to_area() {
        let (mesh, layout) = square_layout(3);
        for role in [FieldRole::Temperature, FieldRole::Pressure] {
            let m = assemble_mass(&mesh, &layout, role).unwrap();
            let ones = vec![1.0; m.nrows()];
            let total: f64 = m.matvec(&ones).iter().sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-12);
        }
        // velocity mass: each component integrates to the area
        let mv = assemble_mass(&mesh, &layout, FieldRole::Velocity).unwrap();
        let mut ex = vec![0.0; layout.n_velocity_dofs()];
        for d in (0..ex.len()).step_by(2) {
            ex[d] = 1.0;
        }
        let total: f64 = mv.matvec(&ex).iter().zip(&ex).map(|(a, b)| a * b).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn mass_symmetric() {
        let (mesh, layout) = square_layout(3);
        let m = assemble_mass(&mesh, &layout, FieldRole::Temperature).unwrap();
        let mt = m.transpose();
        let diff = SparseMatrix::linear_combination(&[(1.0, &m), (-1.0, &mt)]).unwrap();
        assert!(diff.max_abs() <= 1e-14);
    }

    #[test]
    fn p1_mass_single_reference_triangle() {
        let mesh = TriMesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            boundary_edges: vec![],
            region: vec![Region::Fluid],
            h: 2.0_f64.sqrt(),
            grid_m: 1,
        };
        let layout = DofLayout::new(&mesh).unwrap();
        let m = assemble_mass(&mesh, &layout, FieldRole::Pressure).unwrap();
        let area = 0.5;
        for i in 0..3 {
            assert_relative_eq!(m.get(i, i), area / 6.0, max_relative = 1e-13);
            for j in 0..3 {
                if i != j {
                    assert_relative_eq!(m.get(i, j), area / 12.0, max_relative = 1e-13);
                }
            }
        }
    }

    #[test]
    fn stiffness_kernel_and_linearity() {
        let (mesh, layout) = square_layout(4);
        let a1 = assemble_stiffness(&mesh, &layout, FieldRole::Temperature, &RegionCoeff::uniform(1.0)).unwrap();
        let ones = vec![1.0; a1.nrows()];
        assert!(norm2(&a1.matvec(&ones)) <= 1e-12);
        let a2 = assemble_stiffness(&mesh, &layout, FieldRole::Temperature, &RegionCoeff::uniform(2.0)).unwrap();
        let diff = SparseMatrix::linear_combination(&[(2.0, &a1), (-1.0, &a2)]).unwrap();
        assert!(diff.max_abs() <= 1e-13);
        assert!(assemble_stiffness(&mesh, &layout, FieldRole::Temperature, &RegionCoeff::uniform(-1.0)).is_err());
    }

    #[test]
    fn stiffness_quadratic_energy() {
        // T = x² is exactly representable in P2; ∫|∇T|² = ∫ 4x² = 4/3
        let (mesh, layout) = square_layout(5);
        let a = assemble_stiffness(&mesh, &layout, FieldRole::Temperature, &RegionCoeff::uniform(1.0)).unwrap();
        let t = interpolate_temperature(&mesh, &layout, &mut |p| p[0] * p[0]);
        let at = a.matvec(&t.values);
        let energy: f64 = at.iter().zip(&t.values).map(|(x, y)| x * y).sum();
        assert_relative_eq!(energy, 4.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn divergence_free_fields_in_kernel() {
        let (mesh, layout) = square_layout(4);
        let b = assemble_divergence(&mesh, &layout).unwrap();
        let constant = interpolate_velocity(&mesh, &layout, &mut |_| [1.0, -2.0]);
        assert!(norm2(&b.matvec(&constant.values)) <= 1e-12);
        let rotation = interpolate_velocity(&mesh, &layout, &mut |p| [-p[1], p[0]]);
        assert!(norm2(&b.matvec(&rotation.values)) <= 1e-12);
    }

    #[test]
    fn divergence_of_linear_shear_gives_integrals() {
        let (mesh, layout) = square_layout(3);
        let b = assemble_divergence(&mesh, &layout).unwrap();
        let u = interpolate_velocity(&mesh, &layout, &mut |p| [p[0], 0.0]);
        let bu = b.matvec(&u.values);
        let w = integral_weights(&mesh, &layout, FieldRole::Pressure).unwrap();
        for (x, y) in bu.iter().zip(&w) {
            assert_relative_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn convection_zero_velocity_gives_zero() {
        let (mesh, layout) = square_layout(3);
        let w = FieldVector::zeros(FieldRole::Velocity, &layout);
        for role in [FieldRole::Velocity, FieldRole::Temperature] {
            let n = assemble_convection(&mesh, &layout, &w, role).unwrap();
            assert!(n.max_abs() <= 1e-15);
        }
    }

    #[test]
    fn convection_skew_symmetry_random() {
        let (mesh, layout) = square_layout(4);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut w = FieldVector::zeros(FieldRole::Velocity, &layout);
        for v in &mut w.values {
            *v = rng.gen::<f64>() - 0.5;
        }
        let nv = assemble_convection(&mesh, &layout, &w, FieldRole::Velocity).unwrap();
        let nt = assemble_convection(&mesh, &layout, &w, FieldRole::Temperature).unwrap();
        let w_inf = w.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for _ in 0..20 {
            let v: Vec<f64> = (0..nv.nrows()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let q: f64 = nv.matvec(&v).iter().zip(&v).map(|(a, b)| a * b).sum();
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            assert!(q.abs() <= 1e-12 * vnorm2 * w_inf);

            let s: Vec<f64> = (0..nt.nrows()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let qt: f64 = nt.matvec(&s).iter().zip(&s).map(|(a, b)| a * b).sum();
            let snorm2: f64 = s.iter().map(|x| x * x).sum();
            assert!(qt.abs() <= 1e-12 * snorm2 * w_inf);
        }
    }

    #[test]
    fn convection_role_mismatch_rejected() {
        let (mesh, layout) = square_layout(2);
        let t = FieldVector::zeros(FieldRole::Temperature, &layout);
        assert!(assemble_convection(&mesh, &layout, &t, FieldRole::Velocity).is_err());
        let w = FieldVector::zeros(FieldRole::Velocity, &layout);
        assert!(assemble_convection(&mesh, &layout, &w, FieldRole::Pressure).is_err());
    }

    #[test]
    fn convection_apply_matches_matrix() {
        let (mesh, layout) = square_layout(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = FieldVector::zeros(FieldRole::Velocity, &layout);
        let mut z = FieldVector::zeros(FieldRole::Velocity, &layout);
        for v in w.values.iter_mut().chain(z.values.iter_mut()) {
            *v = rng.gen::<f64>() - 0.5;
        }
        let n = assemble_convection(&mesh, &layout, &w, FieldRole::Velocity).unwrap();
        let via_matrix = n.matvec(&z.values);
        let direct = convection_apply(&mesh, &layout, &w, &z).unwrap();
        for (a, b) in via_matrix.iter().zip(&direct) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }

        let mut s = FieldVector::zeros(FieldRole::Temperature, &layout);
        for v in &mut s.values {
            *v = rng.gen::<f64>() - 0.5;
        }
        let nt = assemble_convection(&mesh, &layout, &w, FieldRole::Temperature).unwrap();
        let via_matrix = nt.matvec(&s.values);
        let direct = convection_apply(&mesh, &layout, &w, &s).unwrap();
        for (a, b) in via_matrix.iter().zip(&direct) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn buoyancy_vertical_only() {
        let (mesh, layout) = square_layout(3);
        let g = assemble_buoyancy(&mesh, &layout, [0.0, 1.0]).unwrap();
        // rows of x-velocity tests are identically zero
        for d in (0..layout.n_velocity_dofs()).step_by(2) {
            let (_, vals) = g.row(d);
            assert!(vals.iter().all(|&v| v == 0.0));
        }
        // vᵀ G T with T ≡ 1 and v the vertical unit field = |Ω|
        let t = interpolate_temperature(&mesh, &layout, &mut |_| 1.0);
        let gt = g.matvec(&t.values);
        let mut v = vec![0.0; layout.n_velocity_dofs()];
        for d in (0..v.len()).step_by(2) {
            v[d + 1] = 1.0;
        }
        let x: f64 = gt.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert_relative_eq!(x, 1.0, max_relative = 1e-12);
        assert!(assemble_buoyancy(&mesh, &layout, [0.0, 0.0]).is_err());
    }

    #[test]
    fn u1_source_selects_first_component() {
        let (mesh, layout) = square_layout(8);
        let u1 = assemble_u1_source(&mesh, &layout).unwrap();
        let vertical = interpolate_velocity(&mesh, &layout, &mut |_| [0.0, 3.0]);
        assert!(norm2(&u1.matvec(&vertical.values)) <= 1e-13);

        let ones = interpolate_velocity(&mesh, &layout, &mut |_| [1.0, 0.0]);
        let total: f64 = u1.matvec(&ones.values).iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);

        let shear = interpolate_velocity(&mesh, &layout, &mut |p| [p[0], 0.0]);
        let total_x: f64 = u1.matvec(&shear.values).iter().sum();
        assert_relative_eq!(total_x, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn dirichlet_zero_values_leave_free_rhs() {
        let (mesh, layout) = square_layout(3);
        let a = assemble_stiffness(&mesh, &layout, FieldRole::Temperature, &RegionCoeff::uniform(1.0)).unwrap();
        let constrained = layout.temperature_constrained_dofs();
        let sys = apply_dirichlet(&a, &constrained).unwrap();
        let mut rhs: Vec<f64> = (0..a.nrows()).map(|i| i as f64).collect();
        let orig = rhs.clone();
        sys.constrain_rhs(&mut rhs, &vec![0.0; constrained.len()]);
        for (d, (&r, &o)) in rhs.iter().zip(&orig).enumerate() {
            if constrained.contains(&d) {
                assert_eq!(r, 0.0);
            } else {
                assert_eq!(r, o);
            }
        }
    }

    #[test]
    fn dirichlet_all_constrained_is_identity() {
        let (mesh, layout) = square_layout(2);
        let a = assemble_mass(&mesh, &layout, FieldRole::Temperature).unwrap();
        let all: Vec<usize> = (0..a.nrows()).collect();
        let sys = apply_dirichlet(&a, &all).unwrap();
        assert_eq!(sys.matrix.nnz(), a.nrows());
        for i in 0..a.nrows() {
            assert_eq!(sys.matrix.get(i, i), 1.0);
        }
    }

    #[test]
    fn dirichlet_missing_value_rejected() {
        let (mesh, layout) = square_layout(2);
        let a = assemble_mass(&mesh, &layout, FieldRole::Temperature).unwrap();
        let constrained = layout.temperature_constrained_dofs();
        let sys = apply_dirichlet(&a, &constrained).unwrap();
        let mut rhs = vec![0.0; a.nrows()];
        let empty = HashMap::new();
        assert!(sys.constrain_rhs_checked(&mut rhs, &empty).is_err());
    }

    #[test]
    fn laplace_conduction_profile() {
        // T = 1 on the left wall, 0 on the right, insulated top/bottom:
        // the discrete solution is exactly 1 - x at every node
        let (mesh, layout) = square_layout(4);
        let a = assemble_stiffness(&mesh, &layout, FieldRole::Temperature, &RegionCoeff::uniform(1.0)).unwrap();
        let constrained = layout.temperature_constrained_dofs();
        let sys = apply_dirichlet(&a, &constrained).unwrap();
        let values: Vec<f64> = constrained
            .iter()
            .map(|&d| if layout.node_coords[d][0] < 0.5 { 1.0 } else { 0.0 })
            .collect();
        let mut rhs = vec![0.0; a.nrows()];
        sys.constrain_rhs(&mut rhs, &values);
        let f = factorize(&sys.matrix).unwrap();
        let t = f.solve(&rhs).unwrap();
        for (n, p) in layout.node_coords.iter().enumerate() {
            assert_relative_eq!(t[n], 1.0 - p[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn stiffness_psd_smallest_eigenvalue() {
        // dense eigensolve on a small mesh
        let (mesh, layout) = square_layout(3);
        let a = assemble_stiffness(&mesh, &layout, FieldRole::Temperature, &RegionCoeff::uniform(1.0)).unwrap();
        let n = a.nrows();
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for (r, c, v) in a.triplets() {
            dense[(r, c)] = v;
        }
        let sym = nalgebra::SymmetricEigen::new(dense);
        let min = sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-10, "smallest eigenvalue {min}");
    }

    #[test]
    fn skew_form_matches_divergence_identity() {
        // b(u,v,w) = ∫ u·∇v·w + ½∫(∇·u) v·w, checked against an independent
        // direct quadrature of both sides with random coefficient fields
        let (mesh, layout) = square_layout(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // fields must lie in the zero-trace space for the identity to hold
        let mut rand_vel = || {
            let mut f = FieldVector::zeros(FieldRole::Velocity, &layout);
            for (d, v) in f.values.iter_mut().enumerate() {
                if !layout.vel_constrained[d] {
                    *v = rng.gen::<f64>() - 0.5;
                }
            }
            f
        };
        let u = rand_vel();
        let v = rand_vel();
        let w = rand_vel();

        // skew route: wᵀ N(u) v
        let n = assemble_convection(&mesh, &layout, &u, FieldRole::Velocity).unwrap();
        let skew: f64 = n.matvec(&v.values).iter().zip(&w.values).map(|(a, b)| a * b).sum();

        // direct quadrature of ∫ u·∇v·w + ½ ∫ (∇·u) v·w
        let rule = quadrature(5).unwrap();
        let mut direct = 0.0;
        for t in 0..mesh.n_triangles() {
            let geo = ElementGeometry::new(&mesh, t).unwrap();
            let nodes = layout.tri_nodes[t];
            for (pt, &wq) in rule.points.iter().zip(&rule.weights) {
                let b = eval_basis(2, *pt).unwrap();
                let mut uval = [0.0; 2];
                let mut vval = [0.0; 2];
                let mut wval = [0.0; 2];
                let mut vgrad = [[0.0; 2]; 2];
                let mut udiv = 0.0;
                for j in 0..6 {
                    let d = layout.velocity_dof(nodes[j], 0).unwrap();
                    let g = geo.grad(b.gradients[j]);
                    for c in 0..2 {
                        uval[c] += u.values[d + c] * b.values[j];
                        vval[c] += v.values[d + c] * b.values[j];
                        wval[c] += w.values[d + c] * b.values[j];
                        vgrad[c][0] += v.values[d + c] * g[0];
                        vgrad[c][1] += v.values[d + c] * g[1];
                    }
                    udiv += u.values[d] * g[0] + u.values[d + 1] * g[1];
                }
                let mut term = 0.0;
                for c in 0..2 {
                    term += (uval[0] * vgrad[c][0] + uval[1] * vgrad[c][1]) * wval[c];
                }
                let vw = vval[0] * wval[0] + vval[1] * wval[1];
                direct += wq * geo.det * (term + 0.5 * udiv * vw);
            }
        }
        let scale = skew.abs().max(direct.abs()).max(1e-30);
        assert!((skew - direct).abs() / scale <= 1e-12, "skew {skew} direct {direct}");
    }
}
