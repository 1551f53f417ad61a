//! Manufactured solution for the convergence and predictability studies.
//!
//! The exact fields are the divergence-free velocity
//!   u = (10 x²(x−1)² y(y−1)(2y−1) cos t, −10 x(x−1)(2x−1) y²(y−1)² cos t),
//! temperature T = u₁ + u₂, and pressure p = 10(2x−1)(2y−1) cos t, on the
//! unit square. u vanishes on ∂Ω, hence so does T.
//!
//! Perturbed family members scale every field by (1+ε); the forcing is then
//! re-derived, with the quadratic convection terms scaling as (1+ε)².

use crate::assembly::DofLayout;
use crate::elements::{eval_basis, quadrature, ElementGeometry};
use crate::ensemble::{Physics, SchemeKind};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Closed-form solution family member (scaled by 1+ε), with all derivatives
/// needed to manufacture the forcing.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedSolution {
    scale: f64,
}

// 1D factor polynomials and derivatives
fn f_poly(x: f64) -> f64 {
    x * x * (x - 1.0) * (x - 1.0)
}
fn f_d1(x: f64) -> f64 {
    2.0 * x * (x - 1.0) * (2.0 * x - 1.0)
}
fn f_d2(x: f64) -> f64 {
    12.0 * x * x - 12.0 * x + 2.0
}
fn g_poly(y: f64) -> f64 {
    y * (y - 1.0) * (2.0 * y - 1.0)
}
fn g_d1(y: f64) -> f64 {
    6.0 * y * y - 6.0 * y + 1.0
}
fn g_d2(y: f64) -> f64 {
    12.0 * y - 6.0
}

impl ManufacturedSolution {
    pub fn unperturbed() -> ManufacturedSolution {
        ManufacturedSolution { scale: 1.0 }
    }

    /// Member with all fields scaled by (1+ε).
    pub fn perturbed(eps: f64) -> Result<ManufacturedSolution> {
        if eps.abs() >= 1.0 {
            return Err(Error::InvalidConfig(format!("perturbation magnitude |{eps}| must be < 1")));
        }
        let m = ManufacturedSolution { scale: 1.0 + eps };
        m.validate_derivatives()?;
        Ok(m)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn velocity(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let s = self.scale * t.cos();
        let [x, y] = p;
        [10.0 * f_poly(x) * g_poly(y) * s, -10.0 * (f_d1(x) / 2.0) * (g_poly_int(y)) * s]
    }

    pub fn velocity_t(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let s = -self.scale * t.sin();
        let [x, y] = p;
        [10.0 * f_poly(x) * g_poly(y) * s, -10.0 * (f_d1(x) / 2.0) * (g_poly_int(y)) * s]
    }

    /// grad[c] = (∂u_c/∂x, ∂u_c/∂y)
    pub fn velocity_grad(&self, p: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let s = self.scale * t.cos();
        let [x, y] = p;
        [
            [10.0 * f_d1(x) * g_poly(y) * s, 10.0 * f_poly(x) * g_d1(y) * s],
            [
                -10.0 * (f_d2(x) / 2.0) * g_poly_int(y) * s,
                -10.0 * (f_d1(x) / 2.0) * (2.0 * g_poly(y)) * s,
            ],
        ]
    }

    pub fn velocity_laplacian(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let s = self.scale * t.cos();
        let [x, y] = p;
        [
            10.0 * (f_d2(x) * g_poly(y) + f_poly(x) * g_d2(y)) * s,
            -10.0 * ((f_d3(x) / 2.0) * g_poly_int(y) + (f_d1(x) / 2.0) * (2.0 * g_d1(y))) * s,
        ]
    }

    pub fn temperature(&self, p: [f64; 2], t: f64) -> f64 {
        let u = self.velocity(p, t);
        u[0] + u[1]
    }

    pub fn temperature_t(&self, p: [f64; 2], t: f64) -> f64 {
        let u = self.velocity_t(p, t);
        u[0] + u[1]
    }

    pub fn temperature_grad(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let g = self.velocity_grad(p, t);
        [g[0][0] + g[1][0], g[0][1] + g[1][1]]
    }

    pub fn temperature_laplacian(&self, p: [f64; 2], t: f64) -> f64 {
        let l = self.velocity_laplacian(p, t);
        l[0] + l[1]
    }

    pub fn pressure(&self, p: [f64; 2], t: f64) -> f64 {
        let [x, y] = p;
        10.0 * (2.0 * x - 1.0) * (2.0 * y - 1.0) * self.scale * t.cos()
    }

    pub fn pressure_grad(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let [x, y] = p;
        let s = self.scale * t.cos();
        [20.0 * (2.0 * y - 1.0) * s, 20.0 * (2.0 * x - 1.0) * s]
    }

    /// Manufactured momentum and heat sources (f, g) such that the scaled
    /// fields solve the continuous system. Linear terms scale with (1+ε),
    /// the convection terms with (1+ε)².
    pub fn forcing(&self, scheme: &SchemeKind, p: [f64; 2], t: f64, physics: &Physics) -> ([f64; 2], f64) {
        let base = ManufacturedSolution { scale: 1.0 };
        let s = self.scale;
        let s2 = s * s;

        let u = base.velocity(p, t);
        let ut = base.velocity_t(p, t);
        let gu = base.velocity_grad(p, t);
        let lu = base.velocity_laplacian(p, t);
        let gp = base.pressure_grad(p, t);
        let temp = base.temperature(p, t);
        let tt = base.temperature_t(p, t);
        let gt = base.temperature_grad(p, t);
        let lt = base.temperature_laplacian(p, t);

        let conv_u = [
            u[0] * gu[0][0] + u[1] * gu[0][1],
            u[0] * gu[1][0] + u[1] * gu[1][1],
        ];
        let conv_t = u[0] * gt[0] + u[1] * gt[1];

        let f = [
            s * ut[0] + s2 * conv_u[0] - physics.pr * s * lu[0] + s * gp[0]
                - physics.pr * physics.ra * physics.gamma[0] * s * temp,
            s * ut[1] + s2 * conv_u[1] - physics.pr * s * lu[1] + s * gp[1]
                - physics.pr * physics.ra * physics.gamma[1] * s * temp,
        ];
        let mut g = s * tt + s2 * conv_t - physics.kappa_f * s * lt;
        if matches!(scheme, SchemeKind::ThinWall { include_u1_source: true }) {
            g -= s * u[0];
        }
        (f, g)
    }

    /// Cross-check the hand-coded derivatives against central finite
    /// differences. First derivatives use step 1e-6; second derivatives use
    /// 1e-4 because the difference quotient loses ~eps/h² to rounding.
    pub fn validate_derivatives(&self) -> Result<()> {
        let tol = 1e-5;
        let pts = [[0.3, 0.7], [0.12, 0.45], [0.81, 0.33], [0.5, 0.25]];
        let times = [0.0, 0.4, 1.3];
        for &p in &pts {
            for &t in &times {
                let h = 1e-6;
                let gu = self.velocity_grad(p, t);
                let gt = self.temperature_grad(p, t);
                let gp = self.pressure_grad(p, t);
                for axis in 0..2 {
                    let mut pp = p;
                    let mut pm = p;
                    pp[axis] += h;
                    pm[axis] -= h;
                    let dudx = [
                        (self.velocity(pp, t)[0] - self.velocity(pm, t)[0]) / (2.0 * h),
                        (self.velocity(pp, t)[1] - self.velocity(pm, t)[1]) / (2.0 * h),
                    ];
                    for c in 0..2 {
                        check(gu[c][axis], dudx[c], tol)?;
                    }
                    check(gt[axis], (self.temperature(pp, t) - self.temperature(pm, t)) / (2.0 * h), tol)?;
                    check(gp[axis], (self.pressure(pp, t) - self.pressure(pm, t)) / (2.0 * h), tol)?;
                }
                let ut = self.velocity_t(p, t);
                let fd_ut = [
                    (self.velocity(p, t + h)[0] - self.velocity(p, t - h)[0]) / (2.0 * h),
                    (self.velocity(p, t + h)[1] - self.velocity(p, t - h)[1]) / (2.0 * h),
                ];
                check(ut[0], fd_ut[0], tol)?;
                check(ut[1], fd_ut[1], tol)?;

                let h2 = 1e-4;
                let lap = self.velocity_laplacian(p, t);
                let lt = self.temperature_laplacian(p, t);
                let mut fd_lap = [0.0; 2];
                let mut fd_lt = 0.0;
                for axis in 0..2 {
                    let mut pp = p;
                    let mut pm = p;
                    pp[axis] += h2;
                    pm[axis] -= h2;
                    for c in 0..2 {
                        fd_lap[c] += (self.velocity(pp, t)[c] - 2.0 * self.velocity(p, t)[c]
                            + self.velocity(pm, t)[c])
                            / (h2 * h2);
                    }
                    fd_lt += (self.temperature(pp, t) - 2.0 * self.temperature(p, t)
                        + self.temperature(pm, t))
                        / (h2 * h2);
                }
                check(lap[0], fd_lap[0], tol)?;
                check(lap[1], fd_lap[1], tol)?;
                check(lt, fd_lt, tol)?;
            }
        }
        Ok(())
    }
}

fn f_d3(x: f64) -> f64 {
    24.0 * x - 12.0
}

/// y²(y−1)², the antiderivative pattern pairing with f_d1/2 in u₂.
fn g_poly_int(y: f64) -> f64 {
    y * y * (y - 1.0) * (y - 1.0)
}

fn check(analytic: f64, fd: f64, tol: f64) -> Result<()> {
    let scale = analytic.abs().max(fd.abs()).max(1.0);
    if (analytic - fd).abs() > tol * scale {
        return Err(Error::Undefined(format!(
            "manufactured-solution derivative mismatch: analytic {analytic}, finite difference {fd}"
        )));
    }
    Ok(())
}

/// L² and H¹-seminorm errors of discrete fields against the exact solution
/// at one time level.
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorSample {
    pub t: f64,
    pub u_l2: f64,
    pub u_h1: f64,
    pub temp_l2: f64,
    pub temp_h1: f64,
    pub p_l2: f64,
}

/// Quadrature errors of the (mean) discrete fields against the exact
/// solution. A degree-9 rule keeps quadrature error far below the
/// discretization error being measured.
pub fn field_errors(
    mesh: &TriMesh,
    layout: &DofLayout,
    exact: &ManufacturedSolution,
    t: f64,
    u: &[f64],
    temp: &[f64],
    p: &[f64],
) -> Result<ErrorSample> {
    let rule = quadrature(9)?;
    let mut acc = ErrorSample { t, ..Default::default() };
    for tri in 0..mesh.n_triangles() {
        let geo = ElementGeometry::new(mesh, tri)?;
        let nodes = layout.tri_nodes[tri];
        let verts = mesh.triangles[tri];
        for (rp, &w) in rule.points.iter().zip(&rule.weights) {
            let b2 = eval_basis(2, *rp)?;
            let b1 = eval_basis(1, *rp)?;
            let x = geo.map(*rp);
            let wd = w * geo.det;

            let mut uh = [0.0; 2];
            let mut guh = [[0.0; 2]; 2];
            let mut th = 0.0;
            let mut gth = [0.0; 2];
            for j in 0..6 {
                let g = geo.grad(b2.gradients[j]);
                if let Some(d) = layout.velocity_dof(nodes[j], 0) {
                    for c in 0..2 {
                        uh[c] += u[d + c] * b2.values[j];
                        guh[c][0] += u[d + c] * g[0];
                        guh[c][1] += u[d + c] * g[1];
                    }
                }
                th += temp[nodes[j]] * b2.values[j];
                gth[0] += temp[nodes[j]] * g[0];
                gth[1] += temp[nodes[j]] * g[1];
            }
            let mut ph = 0.0;
            for i in 0..3 {
                if let Some(d) = layout.pressure_dof(verts[i]) {
                    ph += p[d] * b1.values[i];
                }
            }

            let ue = exact.velocity(x, t);
            let gue = exact.velocity_grad(x, t);
            let te = exact.temperature(x, t);
            let gte = exact.temperature_grad(x, t);
            let pe = exact.pressure(x, t);

            acc.u_l2 += wd * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
            for c in 0..2 {
                acc.u_h1 += wd * ((guh[c][0] - gue[c][0]).powi(2) + (guh[c][1] - gue[c][1]).powi(2));
            }
            acc.temp_l2 += wd * (th - te).powi(2);
            acc.temp_h1 += wd * ((gth[0] - gte[0]).powi(2) + (gth[1] - gte[1]).powi(2));
            acc.p_l2 += wd * (ph - pe).powi(2);
        }
    }
    acc.u_l2 = acc.u_l2.sqrt();
    acc.u_h1 = acc.u_h1.sqrt();
    acc.temp_l2 = acc.temp_l2.sqrt();
    acc.temp_h1 = acc.temp_h1.sqrt();
    acc.p_l2 = acc.p_l2.sqrt();
    Ok(acc)
}

/// Default physics for the manufactured-solution studies.
pub fn mms_physics(ra: f64) -> Physics {
    Physics {
        pr: 1.0,
        ra,
        kappa_f: 1.0,
        kappa_s: 1.0,
        gamma: [0.0, 1.0],
    }
}
