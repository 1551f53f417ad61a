//! Triangulations of the computational domain.
//!
//! Meshes are structured subdivisions of the unit square: an `m`×`m` grid of
//! squares, each cut along the bottom-left to top-right diagonal. Triangles
//! carry a region label so that an embedded solid enclosure (conduction-only
//! wall strips) can share the same triangulation as the fluid. Boundary edges
//! are tagged for Dirichlet/Neumann temperature walls; velocity is no-slip on
//! the whole boundary regardless of the temperature tags.
//!
//! A mesh is immutable after construction and safe to share across threads.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Temperature boundary classification of a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Γ1: prescribed temperature.
    Gamma1DirichletT,
    /// Γ2: insulated (zero normal flux).
    Gamma2NeumannT,
}

/// Material region of a triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Fluid,
    Solid,
}

/// One of the four sides of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

/// Boundary edge: vertex pair (sorted) plus its tag once classified.
#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: Option<BoundaryTag>,
}

/// Axis-aligned rectangle with corners on the gridlines of the `m`×`m` grid.
#[derive(Clone, Copy, Debug)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Triangulated domain with boundary classification and region labels.
#[derive(Clone, Debug)]
pub struct TriMesh {
    /// Vertex coordinates.
    pub vertices: Vec<[f64; 2]>,
    /// Vertex-index triples, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    /// Edges of ∂Ω with classification tags.
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Per-triangle material label.
    pub region: Vec<Region>,
    /// Maximum triangle diameter (longest edge over all triangles).
    pub h: f64,
    /// Grid resolution used to build the mesh; enables O(1) point location.
    pub grid_m: usize,
}

const GRID_TOL: f64 = 1e-9;

impl TriMesh {
    /// Structured triangulation of [0,1]² into `m`² squares, each split along
    /// the bottom-left to top-right diagonal. All triangles are fluid.
    pub fn build_structured_unit_square(m: usize) -> Result<TriMesh> {
        Self::build_embedded_solid(m, &[])
    }

    /// Structured triangulation with solid wall strips. Triangles whose
    /// centroid falls inside any rectangle are labeled `Solid`; rectangle
    /// corners must lie on gridlines and each rectangle must touch ∂Ω so the
    /// solid forms an enclosure rather than an island.
    pub fn build_embedded_solid(m: usize, solid_strips: &[Rect]) -> Result<TriMesh> {
        if m == 0 {
            return Err(Error::InvalidConfig("mesh resolution m must be >= 1".into()));
        }
        for (k, r) in solid_strips.iter().enumerate() {
            r.validate(m, k)?;
        }

        let n = m + 1;
        let mut vertices = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push([i as f64 / m as f64, j as f64 / m as f64]);
            }
        }
        let vid = |i: usize, j: usize| j * n + i;

        let mut triangles = Vec::with_capacity(2 * m * m);
        for j in 0..m {
            for i in 0..m {
                let v00 = vid(i, j);
                let v10 = vid(i + 1, j);
                let v01 = vid(i, j + 1);
                let v11 = vid(i + 1, j + 1);
                // diagonal v00 -> v11
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }

        let region: Vec<Region> = triangles
            .iter()
            .map(|t| {
                let c = centroid(&vertices, t);
                if solid_strips.iter().any(|r| r.contains(c)) {
                    Region::Solid
                } else {
                    Region::Fluid
                }
            })
            .collect();

        let boundary_edges = extract_boundary_edges(vertices.len(), &triangles)?;

        let mut h: f64 = 0.0;
        for t in &triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let d = dist(vertices[a], vertices[b]);
                h = h.max(d);
            }
        }

        let mesh = TriMesh {
            vertices,
            triangles,
            boundary_edges,
            region,
            h,
            grid_m: m,
        };
        mesh.check_invariants()?;
        if !solid_strips.is_empty() {
            mesh.check_fluid_connectivity()?;
        }
        Ok(mesh)
    }

    /// Tag boundary edges: edges on the listed sides become Γ1 (Dirichlet
    /// temperature), the rest Γ2 (insulated). At least one Dirichlet side is
    /// required.
    pub fn classify_boundary(mut self, dirichlet_sides: &[Side]) -> Result<TriMesh> {
        if dirichlet_sides.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one Dirichlet temperature side required (|Γ1| > 0)".into(),
            ));
        }
        for e in &mut self.boundary_edges {
            let a = self.vertices[e.vertices[0]];
            let b = self.vertices[e.vertices[1]];
            let on = |side: Side| -> bool {
                let coord = |p: [f64; 2]| match side {
                    Side::Left | Side::Right => p[0],
                    Side::Top | Side::Bottom => p[1],
                };
                let target = match side {
                    Side::Left | Side::Bottom => 0.0,
                    Side::Right | Side::Top => 1.0,
                };
                (coord(a) - target).abs() <= GRID_TOL && (coord(b) - target).abs() <= GRID_TOL
            };
            e.tag = if dirichlet_sides.iter().any(|&s| on(s)) {
                Some(BoundaryTag::Gamma1DirichletT)
            } else {
                Some(BoundaryTag::Gamma2NeumannT)
            };
        }
        if !self
            .boundary_edges
            .iter()
            .any(|e| e.tag == Some(BoundaryTag::Gamma1DirichletT))
        {
            return Err(Error::InvalidConfig("no boundary edge matched a Dirichlet side".into()));
        }
        Ok(self)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of triangle `t` (positive for counterclockwise vertices).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = self.vertices[a];
        let q = self.vertices[b];
        let r = self.vertices[c];
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    /// Locate the triangle containing physical point `p` together with its
    /// reference coordinates. Relies on the structured layout.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 2])> {
        let m = self.grid_m as f64;
        if !(-GRID_TOL..=1.0 + GRID_TOL).contains(&p[0]) || !(-GRID_TOL..=1.0 + GRID_TOL).contains(&p[1]) {
            return Err(Error::Mesh(format!("point ({}, {}) outside unit square", p[0], p[1])));
        }
        let clampi = |x: f64| -> usize { (x * m).floor().clamp(0.0, m - 1.0) as usize };
        let i = clampi(p[0]);
        let j = clampi(p[1]);
        // cell-local coordinates
        let xi = p[0] * m - i as f64;
        let eta = p[1] * m - j as f64;
        let cell = 2 * (j * self.grid_m + i);
        // lower triangle (v00,v10,v11) covers eta <= xi
        if eta <= xi {
            // map with vertices v00=(0,0), v10=(1,0), v11=(1,1): x = xi0 + ..
            // reference coords: r = xi - eta ... derive from affine map:
            // F(r,s) = v00 + r*(v10-v00) + s*(v11-v00) = (r + s, s) in cell units
            // => r = xi - eta, s = eta
            Ok((cell, [xi - eta, eta]))
        } else {
            // upper triangle (v00,v11,v01): F(r,s) = (r, r + s)
            // => r = xi, s = eta - xi
            Ok((cell + 1, [xi, eta - xi]))
        }
    }

    /// Plain-text dump: vertices, then triangles with region, then tagged
    /// boundary edges, one entity per line.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "v {} {}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (t, r) in self.triangles.iter().zip(&self.region) {
            writeln!(w, "t {} {} {} {:?}", t[0], t[1], t[2], r)?;
        }
        writeln!(w, "boundary_edges {}", self.boundary_edges.len())?;
        for e in &self.boundary_edges {
            let tag = match e.tag {
                Some(BoundaryTag::Gamma1DirichletT) => "gamma1",
                Some(BoundaryTag::Gamma2NeumannT) => "gamma2",
                None => "untagged",
            };
            writeln!(w, "e {} {} {}", e.vertices[0], e.vertices[1], tag)?;
        }
        Ok(())
    }

    fn check_invariants(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} has non-positive area")));
            }
            for &v in &self.triangles[t] {
                if v >= self.vertices.len() {
                    return Err(Error::Mesh(format!("triangle {t} references missing vertex {v}")));
                }
            }
        }
        Ok(())
    }

    /// Fluid triangles must form one simply connected region (Euler
    /// characteristic 1 and a single adjacency component).
    fn check_fluid_connectivity(&self) -> Result<()> {
        let fluid: Vec<usize> = (0..self.triangles.len())
            .filter(|&t| self.region[t] == Region::Fluid)
            .collect();
        if fluid.is_empty() {
            return Err(Error::Mesh("solid strips cover the whole domain".into()));
        }
        // edge -> fluid triangles
        let mut edge_tris: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
        for &t in &fluid {
            let [a, b, c] = self.triangles[t];
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edge_tris.entry(sorted(u, v)).or_default().push(t);
            }
        }
        // BFS over shared edges
        let mut mark: HashMap<usize, bool> = fluid.iter().map(|&t| (t, false)).collect();
        let mut stack = vec![fluid[0]];
        mark.insert(fluid[0], true);
        while let Some(t) = stack.pop() {
            let [a, b, c] = self.triangles[t];
            for (u, v) in [(a, b), (b, c), (c, a)] {
                for &s in &edge_tris[&sorted(u, v)] {
                    if let Some(seen) = mark.get_mut(&s) {
                        if !*seen {
                            *seen = true;
                            stack.push(s);
                        }
                    }
                }
            }
        }
        if mark.values().any(|&seen| !seen) {
            return Err(Error::Mesh("fluid region is not connected".into()));
        }
        // Euler characteristic of the fluid subcomplex: V - E + F = 1 for a disk
        let mut verts: Vec<usize> = fluid.iter().flat_map(|&t| self.triangles[t]).collect();
        verts.sort_unstable();
        verts.dedup();
        let chi = verts.len() as i64 - edge_tris.len() as i64 + fluid.len() as i64;
        if chi != 1 {
            return Err(Error::Mesh(format!(
                "fluid region is not simply connected (Euler characteristic {chi})"
            )));
        }
        Ok(())
    }
}

impl Rect {
    fn validate(&self, m: usize, k: usize) -> Result<()> {
        if !(self.x0 < self.x1 && self.y0 < self.y1) {
            return Err(Error::InvalidConfig(format!("solid strip {k} is empty or inverted")));
        }
        for c in [self.x0, self.x1, self.y0, self.y1] {
            if !(0.0 - GRID_TOL..=1.0 + GRID_TOL).contains(&c) {
                return Err(Error::InvalidConfig(format!("solid strip {k} extends outside [0,1]²")));
            }
            let scaled = c * m as f64;
            if (scaled - scaled.round()).abs() > GRID_TOL * m as f64 {
                return Err(Error::InvalidConfig(format!(
                    "solid strip {k} corner coordinate {c} not on a gridline of the {m}x{m} grid"
                )));
            }
        }
        let touches = self.x0 <= GRID_TOL
            || self.x1 >= 1.0 - GRID_TOL
            || self.y0 <= GRID_TOL
            || self.y1 >= 1.0 - GRID_TOL;
        if !touches {
            return Err(Error::InvalidConfig(format!(
                "solid strip {k} does not touch the outer boundary"
            )));
        }
        Ok(())
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 - GRID_TOL
            && p[0] <= self.x1 + GRID_TOL
            && p[1] >= self.y0 - GRID_TOL
            && p[1] <= self.y1 + GRID_TOL
    }
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn centroid(vertices: &[[f64; 2]], t: &[usize; 3]) -> [f64; 2] {
    let p = vertices[t[0]];
    let q = vertices[t[1]];
    let r = vertices[t[2]];
    [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn extract_boundary_edges(n_vertices: usize, triangles: &[[usize; 3]]) -> Result<Vec<BoundaryEdge>> {
    let mut count: HashMap<[usize; 2], usize> = HashMap::new();
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *count.entry(sorted(a, b)).or_insert(0) += 1;
        }
    }
    let mut edges: Vec<BoundaryEdge> = Vec::new();
    for (e, c) in count {
        match c {
            1 => edges.push(BoundaryEdge { vertices: e, tag: None }),
            2 => {}
            _ => return Err(Error::Mesh(format!("edge {e:?} shared by {c} triangles"))),
        }
    }
    for e in &edges {
        if e.vertices[0] >= n_vertices || e.vertices[1] >= n_vertices {
            return Err(Error::Mesh("boundary edge references missing vertex".into()));
        }
    }
    edges.sort_by_key(|e| e.vertices);
    Ok(edges)
}
