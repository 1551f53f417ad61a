//! Reference-element machinery for the Taylor-Hood (P2-P1-P2) discretization.
//!
//! The reference triangle has vertices (0,0), (1,0), (0,1). P2 nodes are the
//! three vertices followed by the three edge midpoints, each midpoint opposite
//! its vertex: node 3 on edge (v1,v2), node 4 on (v0,v2), node 5 on (v0,v1).

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Basis values and gradients at one reference point. `n` is 3 for P1 and 6
/// for P2; entries beyond `n` are zero.
#[derive(Clone, Copy, Debug)]
pub struct BasisEval {
    pub n: usize,
    pub values: [f64; 6],
    pub gradients: [[f64; 2]; 6],
}

/// Quadrature points (reference coordinates) and weights summing to the
/// reference-triangle area 1/2. `degree` is the guaranteed polynomial
/// exactness.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Node coordinates for the reference basis, in local ordering.
pub fn reference_nodes(degree: u8) -> Result<Vec<[f64; 2]>> {
    match degree {
        1 => Ok(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        2 => Ok(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.5],
            [0.0, 0.5],
            [0.5, 0.0],
        ]),
        d => Err(Error::Element(format!("unsupported basis degree {d}"))),
    }
}

/// Evaluate the P1 or P2 Lagrange basis at a reference point.
pub fn eval_basis(degree: u8, p: [f64; 2]) -> Result<BasisEval> {
    const TOL: f64 = 1e-12;
    let [x, y] = p;
    if x < -TOL || y < -TOL || x + y > 1.0 + TOL {
        return Err(Error::Element(format!("point ({x}, {y}) outside reference triangle")));
    }
    let l0 = 1.0 - x - y;
    let (l1, l2) = (x, y);
    let g0 = [-1.0, -1.0];
    let g1 = [1.0, 0.0];
    let g2 = [0.0, 1.0];
    match degree {
        1 => {
            let mut out = BasisEval { n: 3, values: [0.0; 6], gradients: [[0.0; 2]; 6] };
            out.values[..3].copy_from_slice(&[l0, l1, l2]);
            out.gradients[0] = g0;
            out.gradients[1] = g1;
            out.gradients[2] = g2;
            Ok(out)
        }
        2 => {
            let mut out = BasisEval { n: 6, values: [0.0; 6], gradients: [[0.0; 2]; 6] };
            out.values = [
                l0 * (2.0 * l0 - 1.0),
                l1 * (2.0 * l1 - 1.0),
                l2 * (2.0 * l2 - 1.0),
                4.0 * l1 * l2,
                4.0 * l0 * l2,
                4.0 * l0 * l1,
            ];
            let axpy = |a: f64, u: [f64; 2], b: f64, v: [f64; 2]| [a * u[0] + b * v[0], a * u[1] + b * v[1]];
            out.gradients = [
                [(4.0 * l0 - 1.0) * g0[0], (4.0 * l0 - 1.0) * g0[1]],
                [(4.0 * l1 - 1.0) * g1[0], (4.0 * l1 - 1.0) * g1[1]],
                [(4.0 * l2 - 1.0) * g2[0], (4.0 * l2 - 1.0) * g2[1]],
                axpy(4.0 * l2, g1, 4.0 * l1, g2),
                axpy(4.0 * l2, g0, 4.0 * l0, g2),
                axpy(4.0 * l1, g0, 4.0 * l0, g1),
            ];
            Ok(out)
        }
        d => Err(Error::Element(format!("unsupported basis degree {d}"))),
    }
}

/// Quadrature rule exact for polynomials of at least the requested degree.
///
/// Degrees up to 5 use the 7-point rule; higher degrees use a collapsed
/// Gauss-Legendre product rule on the square mapped to the triangle.
pub fn quadrature(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > 30 {
        return Err(Error::Element(format!("unsupported quadrature order {order}")));
    }
    if order <= 5 {
        // 7-point rule, exact through degree 5. Barycentric data:
        // centroid w = 9/40, and two orbits with b = (6 ± sqrt(15))/21 and
        // weights (155 ± sqrt(15))/1200 (matching signs).
        let s15 = 15.0_f64.sqrt();
        let b_plus = (6.0 + s15) / 21.0;
        let b_minus = (6.0 - s15) / 21.0;
        let w_plus = (155.0 + s15) / 1200.0;
        let w_minus = (155.0 - s15) / 1200.0;
        let mut points = vec![[1.0 / 3.0, 1.0 / 3.0]];
        let mut weights = vec![9.0 / 40.0];
        for (b, w) in [(b_plus, w_plus), (b_minus, w_minus)] {
            let a = 1.0 - 2.0 * b;
            for bary in [[a, b, b], [b, a, b], [b, b, a]] {
                points.push([bary[1], bary[2]]);
                weights.push(w);
            }
        }
        // scale from unit total to reference area 1/2
        for w in &mut weights {
            *w *= 0.5;
        }
        return Ok(QuadratureRule { points, weights, degree: 5 });
    }
    // Collapsed product rule: x = s, y = t(1-s), dx dy = (1-s) ds dt.
    // A monomial x^a y^b becomes degree a+b+1 in s and b in t, so n Gauss
    // points per direction integrate total degree d exactly when 2n-1 >= d+1.
    let n = (order + 3) / 2;
    let (nodes, wts) = gauss_legendre_01(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&s, &ws) in nodes.iter().zip(&wts) {
        for (&t, &wt) in nodes.iter().zip(&wts) {
            points.push([s, t * (1.0 - s)]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    Ok(QuadratureRule { points, weights, degree: order })
}

/// Gauss-Legendre nodes and weights on [0,1] via Newton iteration on the
/// Legendre recurrence.
pub(crate) fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // initial guess on [-1,1]
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - k] = 0.5 * (x + 1.0);
        weights[n - 1 - k] = 0.5 * w;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x, by three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Geometry of one affinely mapped triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub origin: [f64; 2],
    /// Columns are the edge vectors v1-v0 and v2-v0.
    pub jac: [[f64; 2]; 2],
    /// Inverse transpose of the Jacobian, for gradient transforms.
    pub inv_jac_t: [[f64; 2]; 2],
    pub det: f64,
}

impl ElementGeometry {
    pub fn new(mesh: &TriMesh, tri: usize) -> Result<ElementGeometry> {
        let [a, b, c] = *mesh
            .triangles
            .get(tri)
            .ok_or_else(|| Error::Element(format!("triangle index {tri} out of range")))?;
        let p = mesh.vertices[a];
        let q = mesh.vertices[b];
        let r = mesh.vertices[c];
        let jac = [[q[0] - p[0], r[0] - p[0]], [q[1] - p[1], r[1] - p[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det <= 1e-300 {
            return Err(Error::Element(format!("triangle {tri} degenerate (detJ = {det})")));
        }
        let inv_jac_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Ok(ElementGeometry { origin: p, jac, inv_jac_t, det })
    }

    pub fn map(&self, r: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.origin[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    /// Transform a reference gradient to a physical gradient.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jac_t[0][0] * g[0] + self.inv_jac_t[0][1] * g[1],
            self.inv_jac_t[1][0] * g[0] + self.inv_jac_t[1][1] * g[1],
        ]
    }
}

/// Map a reference point of a triangle to physical coordinates, returning the
/// point, the Jacobian, and its determinant (= 2 × triangle area).
pub fn affine_map(mesh: &TriMesh, tri: usize, r: [f64; 2]) -> Result<([f64; 2], [[f64; 2]; 2], f64)> {
    let geo = ElementGeometry::new(mesh, tri)?;
    Ok((geo.map(r), geo.jac, geo.det))
}
