//! Independent oracles for the acceptance suite: direct quadrature of the
//! trilinear forms and exact polynomial integration over triangles via
//! Green's theorem. These deliberately avoid the assembly module's code
//! paths (different quadrature rule, no matrices).

use convens::assembly::{DofLayout, FieldVector};
use convens::elements::{eval_basis, quadrature, ElementGeometry};
use convens::mesh::TriMesh;

/// Velocity value + Jacobian of a coefficient field at a reference point.
fn velocity_eval(
    layout: &DofLayout,
    u: &FieldVector,
    nodes: &[usize; 6],
    vals: &[f64; 6],
    grads: &[[f64; 2]; 6],
) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut val = [0.0; 2];
    let mut grad = [[0.0; 2]; 2];
    for j in 0..6 {
        if let Some(d) = layout.velocity_dof(nodes[j], 0) {
            for c in 0..2 {
                val[c] += u.values[d + c] * vals[j];
                grad[c][0] += u.values[d + c] * grads[j][0];
                grad[c][1] += u.values[d + c] * grads[j][1];
            }
        }
    }
    (val, grad)
}

fn scalar_eval(
    field: &FieldVector,
    nodes: &[usize; 6],
    vals: &[f64; 6],
    grads: &[[f64; 2]; 6],
) -> (f64, [f64; 2]) {
    let mut val = 0.0;
    let mut grad = [0.0; 2];
    for j in 0..6 {
        let c = field.values[nodes[j]];
        val += c * vals[j];
        grad[0] += c * grads[j][0];
        grad[1] += c * grads[j][1];
    }
    (val, grad)
}

fn quad_sweep(
    mesh: &TriMesh,
    layout: &DofLayout,
    mut f: impl FnMut(&[usize; 6], &[f64; 6], &[[f64; 2]; 6]) -> f64,
) -> f64 {
    // degree-7 collapsed Gauss rule: a different construction from the
    // 7-point rule used inside the assembly module
    let rule = quadrature(7).unwrap();
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let geo = ElementGeometry::new(mesh, t).unwrap();
        let nodes = layout.tri_nodes[t];
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let b = eval_basis(2, *p).unwrap();
            let mut grads = [[0.0; 2]; 6];
            for j in 0..6 {
                grads[j] = geo.grad(b.gradients[j]);
            }
            let mut vals = [0.0; 6];
            vals.copy_from_slice(&b.values[..6]);
            total += w * geo.det * f(&nodes, &vals, &grads);
        }
    }
    total
}

/// Skew form b(u,v,w) = ½(u·∇v, w) − ½(u·∇w, v) by direct quadrature.
pub fn skew_form_direct(mesh: &TriMesh, layout: &DofLayout, u: &FieldVector, v: &FieldVector, w: &FieldVector) -> f64 {
    quad_sweep(mesh, layout, |nodes, vals, grads| {
        let (uv, _) = velocity_eval(layout, u, nodes, vals, grads);
        let (vv, vg) = velocity_eval(layout, v, nodes, vals, grads);
        let (wv, wg) = velocity_eval(layout, w, nodes, vals, grads);
        let mut acc = 0.0;
        for c in 0..2 {
            let udgv = uv[0] * vg[c][0] + uv[1] * vg[c][1];
            let udgw = uv[0] * wg[c][0] + uv[1] * wg[c][1];
            acc += 0.5 * (udgv * wv[c] - udgw * vv[c]);
        }
        acc
    })
}

/// Identity form ∫ u·∇v·w + ½ ∫ (∇·u) v·w by direct quadrature.
pub fn identity_form_direct(
    mesh: &TriMesh,
    layout: &DofLayout,
    u: &FieldVector,
    v: &FieldVector,
    w: &FieldVector,
) -> f64 {
    quad_sweep(mesh, layout, |nodes, vals, grads| {
        let (uv, ug) = velocity_eval(layout, u, nodes, vals, grads);
        let (vv, vg) = velocity_eval(layout, v, nodes, vals, grads);
        let (wv, _) = velocity_eval(layout, w, nodes, vals, grads);
        let udiv = ug[0][0] + ug[1][1];
        let mut acc = 0.0;
        for c in 0..2 {
            let udgv = uv[0] * vg[c][0] + uv[1] * vg[c][1];
            acc += udgv * wv[c] + 0.5 * udiv * vv[c] * wv[c];
        }
        acc
    })
}

/// Scalar skew form b*(u,T,S) = ½(u·∇T, S) − ½(u·∇S, T).
pub fn skew_star_direct(
    mesh: &TriMesh,
    layout: &DofLayout,
    u: &FieldVector,
    temp: &FieldVector,
    s: &FieldVector,
) -> f64 {
    quad_sweep(mesh, layout, |nodes, vals, grads| {
        let (uv, _) = velocity_eval(layout, u, nodes, vals, grads);
        let (tv, tg) = scalar_eval(temp, nodes, vals, grads);
        let (sv, sg) = scalar_eval(s, nodes, vals, grads);
        let udgt = uv[0] * tg[0] + uv[1] * tg[1];
        let udgs = uv[0] * sg[0] + uv[1] * sg[1];
        0.5 * (udgt * sv - udgs * tv)
    })
}

/// Identity form ∫ u·∇T S + ½ ∫ (∇·u) T S.
pub fn identity_star_direct(
    mesh: &TriMesh,
    layout: &DofLayout,
    u: &FieldVector,
    temp: &FieldVector,
    s: &FieldVector,
) -> f64 {
    quad_sweep(mesh, layout, |nodes, vals, grads| {
        let (uv, ug) = velocity_eval(layout, u, nodes, vals, grads);
        let (tv, tg) = scalar_eval(temp, nodes, vals, grads);
        let (sv, _) = scalar_eval(s, nodes, vals, grads);
        let udiv = ug[0][0] + ug[1][1];
        let udgt = uv[0] * tg[0] + uv[1] * tg[1];
        udgt * sv + 0.5 * udiv * tv * sv
    })
}

/// Exact integral of x^a y^b over an arbitrary triangle via Green's theorem:
/// ∫∫ x^a y^b dA = ∮ x^{a+1}/(a+1) · y^b dy, with the contour integral done
/// edge by edge with 1D Gauss-Legendre of sufficient order.
pub fn greens_integrate_monomial(verts: &[[f64; 2]; 3], a: u32, b: u32) -> f64 {
    // 1D Gauss nodes on [0,1]; degree of the edge integrand is a+b+1 <= 2n-1
    let n = ((a + b + 3) / 2 + 1) as usize;
    let (nodes, weights) = gauss01(n);
    let mut total = 0.0;
    for e in 0..3 {
        let p = verts[e];
        let q = verts[(e + 1) % 3];
        let dy = q[1] - p[1];
        for (&s, &w) in nodes.iter().zip(&weights) {
            let x = p[0] + s * (q[0] - p[0]);
            let y = p[1] + s * (q[1] - p[1]);
            total += w * dy * x.powi(a as i32 + 1) / (a as f64 + 1.0) * y.powi(b as i32);
        }
    }
    total
}

/// Gauss-Legendre on [0,1] (local copy so the oracle does not share the
/// library's implementation).
fn gauss01(n: usize) -> (Vec<f64>, Vec<f64>) {
    // nodes/weights on [-1,1] by Newton iteration on P_n
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (mut q0, mut q1) = (1.0, x);
                for j in 2..=n {
                    let q2 = ((2 * j - 1) as f64 * x * q1 - (j - 1) as f64 * q0) / j as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dp = n as f64 * (x * q1 - q0) / (x * x - 1.0);
                ws[k] = 2.0 / ((1.0 - x * x) * dp * dp);
                xs[k] = x;
                break;
            }
        }
    }
    let nodes = xs.iter().map(|&x| 0.5 * (x + 1.0)).collect();
    let weights = ws.iter().map(|&w| 0.5 * w).collect();
    (nodes, weights)
}

/// Deterministic dense random field helper.
pub fn random_field(values: &mut [f64], rng: &mut impl rand::Rng) {
    for v in values.iter_mut() {
        *v = rng.gen::<f64>() - 0.5;
    }
}
