//! Scalar outputs: energies, variances, separation growth, Nusselt numbers,
//! midline velocity maxima, discrete-time norms, and convergence rates.

use crate::assembly::{eval_temperature, eval_velocity, DofLayout, FieldVector};
use crate::elements::gauss_legendre_01;
use crate::ensemble::quad_norm;
use crate::error::{Error, Result};
use crate::linsolve::SparseMatrix;
use crate::mesh::{Region, TriMesh};

/// Which printed form of the energy to use. The published definition mixes an
/// unsquared temperature norm with a squared velocity norm; the symmetric
/// variant is available behind a flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyForm {
    /// ‖T‖ + ½‖u‖²
    AsPrinted,
    /// ½‖T‖² + ½‖u‖²
    Symmetric,
}

/// Energy of one member from its L² norms.
pub fn energy(mass_v: &SparseMatrix, mass_t: &SparseMatrix, u: &[f64], temp: &[f64], form: EnergyForm) -> f64 {
    let un = quad_norm(mass_v, u);
    let tn = quad_norm(mass_t, temp);
    match form {
        EnergyForm::AsPrinted => tn + 0.5 * un * un,
        EnergyForm::Symmetric => 0.5 * tn * tn + 0.5 * un * un,
    }
}

/// Ensemble variance V(χ) = ⟨‖χ′‖²⟩, computed from fluctuations.
pub fn variance(mass: &SparseMatrix, members: &[&[f64]]) -> f64 {
    variance_forms(mass, members).0
}

/// Both variance formulas: the fluctuation form ⟨‖χ′‖²⟩ and the moment form
/// ⟨‖χ‖²⟩ − ‖⟨χ⟩‖², which agree up to rounding.
pub fn variance_forms(mass: &SparseMatrix, members: &[&[f64]]) -> (f64, f64) {
    let j = members.len();
    assert!(j >= 1, "variance needs at least one member");
    let n = members[0].len();
    let mut mean = vec![0.0; n];
    for m in members {
        for (a, b) in mean.iter_mut().zip(*m) {
            *a += b;
        }
    }
    for a in &mut mean {
        *a /= j as f64;
    }
    let mut fluct = 0.0;
    let mut second = 0.0;
    for m in members {
        let diff: Vec<f64> = m.iter().zip(&mean).map(|(a, b)| a - b).collect();
        let dn = quad_norm(mass, &diff);
        fluct += dn * dn;
        let mn = quad_norm(mass, m);
        second += mn * mn;
    }
    let mean_norm = quad_norm(mass, &mean);
    (fluct / j as f64, second / j as f64 - mean_norm * mean_norm)
}

/// Relative energy fluctuation r = ‖χ₊ − χ₋‖² / (‖χ₊‖‖χ₋‖).
pub fn relative_energy_fluctuation(mass: &SparseMatrix, plus: &[f64], minus: &[f64]) -> Result<f64> {
    let np = quad_norm(mass, plus);
    let nm = quad_norm(mass, minus);
    if np == 0.0 || nm == 0.0 {
        return Err(Error::Undefined("relative energy fluctuation of a zero-norm member".into()));
    }
    let diff: Vec<f64> = plus.iter().zip(minus).map(|(a, b)| a - b).collect();
    let dn = quad_norm(mass, &diff);
    Ok(dn * dn / (np * nm))
}

/// Average effective Lyapunov exponent γ_τ(t) = (1/2τ) log(r(t+τ)/r(t)).
pub fn effective_lyapunov(r_t: f64, r_t_plus_tau: f64, tau: f64) -> Result<f64> {
    if r_t <= 0.0 || r_t_plus_tau <= 0.0 || tau <= 0.0 {
        return Err(Error::Undefined(format!(
            "effective Lyapunov exponent undefined for r(t) = {r_t}, r(t+τ) = {r_t_plus_tau}, τ = {tau}"
        )));
    }
    Ok((r_t_plus_tau / r_t).ln() / (2.0 * tau))
}

/// δ-predictability horizon t_p = (1/γ) log(δ / sep₀). Negative values pass
/// through unchanged.
pub fn predictability_horizon(gamma_ref: f64, delta: f64, initial_separation: f64) -> Result<f64> {
    if gamma_ref == 0.0 || delta <= 0.0 || initial_separation <= 0.0 {
        return Err(Error::Undefined(
            "predictability horizon needs nonzero growth rate and positive separations".into(),
        ));
    }
    Ok((delta / initial_separation).ln() / gamma_ref)
}

/// Vertical wall carrying the Nusselt evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    HotX0,
    ColdX1,
}

/// Local Nusselt profile along a vertical wall and its boundary average
/// Nu_avg = ∫₀¹ Nu_local dy.
///
/// Both walls use the positive-flux convention Nu_local = −∂T/∂x evaluated
/// one-sided from the adjacent elements, so the pure conduction profile
/// T = 1 − x gives Nu ≡ 1 on either wall.
pub fn nusselt(
    mesh: &TriMesh,
    layout: &DofLayout,
    temp: &FieldVector,
    wall: Wall,
) -> Result<(Vec<(f64, f64)>, f64)> {
    if mesh.region.iter().any(|&r| r == Region::Solid) {
        return Err(Error::Undefined(
            "Nusselt evaluation expects the all-fluid unit-square benchmark domain".into(),
        ));
    }
    let x_wall = match wall {
        Wall::HotX0 => 0.0,
        Wall::ColdX1 => 1.0,
    };
    let m = mesh.grid_m;
    let (nodes, weights) = gauss_legendre_01(3);
    let mut profile = Vec::with_capacity(3 * m);
    let mut avg = 0.0;
    for cell in 0..m {
        let y0 = cell as f64 / m as f64;
        let len = 1.0 / m as f64;
        for (&gp, &gw) in nodes.iter().zip(&weights) {
            let y = y0 + gp * len;
            let (_, grad) = eval_temperature(mesh, layout, temp, [x_wall, y])?;
            let nu_local = -grad[0];
            profile.push((y, nu_local));
            avg += gw * len * nu_local;
        }
    }
    Ok((profile, avg))
}

/// Midline velocity functionals of the double-pane benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Midline {
    /// max of u₁ along the vertical line x = 0.5
    HorizontalVelocityAtX05,
    /// max of u₂ along the horizontal line y = 0.5
    VerticalVelocityAtY05,
}

/// Maximum of the midline velocity component over a dense uniform sampling
/// (10 samples per grid interval).
pub fn midline_max_velocity(
    mesh: &TriMesh,
    layout: &DofLayout,
    u: &FieldVector,
    line: Midline,
) -> Result<f64> {
    let n = 10 * mesh.grid_m + 1;
    let mut best = f64::NEG_INFINITY;
    for k in 0..n {
        let s = k as f64 / (n - 1) as f64;
        let (point, comp) = match line {
            Midline::HorizontalVelocityAtX05 => ([0.5, s], 0),
            Midline::VerticalVelocityAtY05 => ([s, 0.5], 1),
        };
        let v = eval_velocity(mesh, layout, u, point)?;
        best = best.max(v[comp]);
    }
    Ok(best)
}

/// |||v|||_{∞} over a series of per-step norms.
pub fn sup_time_norm(series: &[f64]) -> f64 {
    series.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// |||v|||_{p} = (Δt Σₙ ‖vⁿ‖ᵖ)^{1/p} over a series of per-step norms.
pub fn lp_time_norm(series: &[f64], dt: f64, p: u32) -> f64 {
    let sum: f64 = series.iter().map(|&s| s.powi(p as i32)).sum();
    (dt * sum).powf(1.0 / p as f64)
}

/// Convergence rate between two (error, discretization-size) pairs; the size
/// is h or Δt (pass 1/m for spatial refinements).
pub fn convergence_rate(e1: f64, e2: f64, size1: f64, size2: f64) -> Result<f64> {
    if e1 <= 0.0 || e2 <= 0.0 || size1 <= 0.0 || size2 <= 0.0 {
        return Err(Error::Undefined("convergence rate needs positive errors and sizes".into()));
    }
    if size1 == size2 {
        return Err(Error::Undefined("convergence rate undefined for equal discretization sizes".into()));
    }
    Ok((e1 / e2).ln() / (size1 / size2).ln())
}

/// Per-step scalar diagnostics row.
#[derive(Clone, Debug, Default)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt: f64,
    pub member_energy: Vec<f64>,
    pub mean_energy: f64,
    pub member_u_norm: Vec<f64>,
    pub member_t_norm: Vec<f64>,
    pub stability_lhs: f64,
    pub variance_u: f64,
    pub variance_t: f64,
    pub separation_u: Option<f64>,
    pub separation_t: Option<f64>,
    pub r_u: Option<f64>,
    pub r_t: Option<f64>,
    pub nu_avg: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, interpolate_temperature, interpolate_velocity, DofLayout, FieldRole};
    use crate::mesh::Side;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn setup(m: usize) -> (TriMesh, DofLayout) {
        let mesh = TriMesh::build_structured_unit_square(m)
            .unwrap()
            .classify_boundary(&[Side::Left, Side::Right])
            .unwrap();
        let layout = DofLayout::new(&mesh).unwrap();
        (mesh, layout)
    }

    #[test]
    fn energy_basic_values() {
        let (mesh, layout) = setup(3);
        let mv = assemble_mass(&mesh, &layout, FieldRole::Velocity).unwrap();
        let mt = assemble_mass(&mesh, &layout, FieldRole::Temperature).unwrap();
        let zero_u = vec![0.0; layout.n_velocity_dofs()];
        let zero_t = vec![0.0; layout.n_temperature_dofs()];
        assert_eq!(energy(&mv, &mt, &zero_u, &zero_t, EnergyForm::AsPrinted), 0.0);
        // ‖T‖ = 1 for T ≡ 1 on the unit square
        let ones = interpolate_temperature(&mesh, &layout, &mut |_| 1.0);
        assert_relative_eq!(
            energy(&mv, &mt, &zero_u, &ones.values, EnergyForm::AsPrinted),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            energy(&mv, &mt, &zero_u, &ones.values, EnergyForm::Symmetric),
            0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn variance_identities() {
        let (mesh, layout) = setup(3);
        let mt = assemble_mass(&mesh, &layout, FieldRole::Temperature).unwrap();
        let n = layout.n_temperature_dofs();
        // identical members
        let a = vec![0.7; n];
        assert_relative_eq!(variance(&mt, &[&a, &a, &a]), 0.0, epsilon = 1e-14);
        // two members ±δ around zero: V = ‖δ‖²
        let delta = interpolate_temperature(&mesh, &layout, &mut |p| p[0] - 0.3);
        let minus: Vec<f64> = delta.values.iter().map(|v| -v).collect();
        let dn = quad_norm(&mt, &delta.values);
        assert_relative_eq!(variance(&mt, &[&delta.values, &minus]), dn * dn, max_relative = 1e-12);
        // both forms agree on random ensembles
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let members: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        let refs: Vec<&[f64]> = members.iter().map(|m| m.as_slice()).collect();
        let (fluct, moment) = variance_forms(&mt, &refs);
        assert_relative_eq!(fluct, moment, max_relative = 1e-12);
        assert!(fluct >= 0.0);
    }

    #[test]
    fn relative_fluctuation_limits() {
        let (mesh, layout) = setup(2);
        let mt = assemble_mass(&mesh, &layout, FieldRole::Temperature).unwrap();
        let chi = interpolate_temperature(&mesh, &layout, &mut |p| 1.0 + p[0]);
        assert_relative_eq!(
            relative_energy_fluctuation(&mt, &chi.values, &chi.values).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        let neg: Vec<f64> = chi.values.iter().map(|v| -v).collect();
        assert_relative_eq!(
            relative_energy_fluctuation(&mt, &chi.values, &neg).unwrap(),
            4.0,
            max_relative = 1e-12
        );
        let zeros = vec![0.0; chi.values.len()];
        assert!(relative_energy_fluctuation(&mt, &chi.values, &zeros).is_err());
        // scale invariance under χ± → cχ±
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a: Vec<f64> = (0..chi.values.len()).map(|_| rng.gen::<f64>() + 0.1).collect();
        let b: Vec<f64> = (0..chi.values.len()).map(|_| rng.gen::<f64>() + 0.1).collect();
        let r1 = relative_energy_fluctuation(&mt, &a, &b).unwrap();
        let ca: Vec<f64> = a.iter().map(|v| 3.7 * v).collect();
        let cb: Vec<f64> = b.iter().map(|v| 3.7 * v).collect();
        let r2 = relative_energy_fluctuation(&mt, &ca, &cb).unwrap();
        assert_relative_eq!(r1, r2, max_relative = 1e-12);
    }

    #[test]
    fn lyapunov_values() {
        assert_relative_eq!(effective_lyapunov(0.5, 0.5, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            effective_lyapunov(1.0, 2.0, 1.0).unwrap(),
            2.0_f64.ln() / 2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            effective_lyapunov(1e-4, 4e-4, 0.5).unwrap(),
            4.0_f64.ln(),
            max_relative = 1e-14
        );
        assert!(effective_lyapunov(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn horizon_values() {
        let sep0 = 0.01;
        assert_relative_eq!(predictability_horizon(0.5, sep0, sep0).unwrap(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            predictability_horizon(2.0_f64.ln(), 2.0 * sep0, sep0).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert!(predictability_horizon(0.0, 0.1, sep0).is_err());
        // monotone in δ for fixed γ
        let mut last = f64::NEG_INFINITY;
        for k in 1..=10 {
            let delta = sep0 * k as f64;
            let tp = predictability_horizon(0.8, delta, sep0).unwrap();
            assert!(tp >= last);
            last = tp;
        }
    }

    #[test]
    fn conduction_nusselt_is_one() {
        for m in [2, 5, 8] {
            let (mesh, layout) = setup(m);
            let temp = interpolate_temperature(&mesh, &layout, &mut |p| 1.0 - p[0]);
            for wall in [Wall::HotX0, Wall::ColdX1] {
                let (profile, avg) = nusselt(&mesh, &layout, &temp, wall).unwrap();
                assert_relative_eq!(avg, 1.0, epsilon = 1e-10);
                for &(_, nu) in &profile {
                    assert_relative_eq!(nu, 1.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn midline_maxima() {
        let (mesh, layout) = setup(4);
        let zero = FieldVector::zeros(FieldRole::Velocity, &layout);
        assert_relative_eq!(
            midline_max_velocity(&mesh, &layout, &zero, Midline::HorizontalVelocityAtX05).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        // u1 = y(1-y) has max 0.25 at y = 0.5 along x = 0.5
        let u = interpolate_velocity(&mesh, &layout, &mut |p| [p[1] * (1.0 - p[1]), 0.0]);
        let got = midline_max_velocity(&mesh, &layout, &u, Midline::HorizontalVelocityAtX05).unwrap();
        assert_relative_eq!(got, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn discrete_norm_collapse() {
        assert_relative_eq!(sup_time_norm(&[3.0, 3.0, 3.0]), 3.0);
        // single entry: p-norm is the value scaled by Δt^{1/p}
        let dt = 0.25;
        assert_relative_eq!(lp_time_norm(&[2.0], dt, 2), 2.0 * dt.sqrt(), max_relative = 1e-14);
        // two-step hand computation: (Δt(1² + 3²))^{1/2}
        assert_relative_eq!(
            lp_time_norm(&[1.0, 3.0], 0.1, 2),
            (0.1f64 * 10.0).sqrt(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn convergence_rate_examples() {
        // error halves when the mesh size halves
        assert_relative_eq!(convergence_rate(2.0, 1.0, 0.5, 0.25).unwrap(), 1.0, epsilon = 1e-14);
        // published spatial row, m = 8 -> 16
        let r = convergence_rate(3.68e-4, 5.56e-5, 1.0 / 8.0, 1.0 / 16.0).unwrap();
        assert!((r - 2.73).abs() < 0.01, "rate {r}");
        // published temporal row, Δt = 1/64 -> 1/128
        let r = convergence_rate(4.83e-4, 2.42e-4, 1.0 / 64.0, 1.0 / 128.0).unwrap();
        assert!((r - 1.0).abs() < 0.01, "rate {r}");
        // antisymmetric under swapping the error pair
        let a = convergence_rate(3e-3, 1e-3, 0.2, 0.1).unwrap();
        let b = convergence_rate(1e-3, 3e-3, 0.2, 0.1).unwrap();
        assert_relative_eq!(a, -b, max_relative = 1e-13);
        assert!(convergence_rate(0.0, 1.0, 0.2, 0.1).is_err());
        assert!(convergence_rate(1.0, 1.0, 0.2, 0.2).is_err());
    }
}
