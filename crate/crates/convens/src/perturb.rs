//! Bred-vector generation of initial-condition perturbations.
//!
//! A bred vector for a field χ with magnitude ε is grown by repeatedly
//! advancing a control run and a perturbed run together, rescaling their
//! separation in χ back to ‖·‖ = ε and re-seeding the perturbed run, so the
//! separation aligns with the fastest-growing error direction. The control
//! and perturbed trajectories advance as a two-member ensemble of the same
//! scheme that the production run uses.

use crate::assembly::DofLayout;
use crate::ensemble::{quad_norm, EnsembleState, Member, Stepper};
use crate::error::{Error, Result};

/// Which scalar field a bred vector perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BredField {
    VelocityX,
    VelocityY,
    Temperature,
}

/// Breeding parameters. `eps` are the magnitudes (ε₁, ε₂, ε₃) for the two
/// velocity components and temperature.
#[derive(Clone, Copy, Debug)]
pub struct BredVectorConfig {
    pub eps: [f64; 3],
    /// Reinitialization interval δt ≥ Δt.
    pub delta_t: f64,
    /// Number of breeding cycles k*.
    pub k_star: u32,
    /// Seed recorded in the run manifest; the ε draw is the only random step.
    pub seed: u64,
}

impl BredVectorConfig {
    pub fn validate(&self, dt: f64) -> Result<()> {
        for (i, &e) in self.eps.iter().enumerate() {
            if !(0.0 < e && e < 0.01) {
                return Err(Error::InvalidConfig(format!(
                    "bred-vector magnitude ε{} = {e} outside (0, 0.01)",
                    i + 1
                )));
            }
        }
        if self.delta_t < dt {
            return Err(Error::InvalidConfig(format!(
                "reinitialization interval δt = {} must be at least Δt = {dt}",
                self.delta_t
            )));
        }
        if self.k_star == 0 {
            return Err(Error::InvalidConfig("breeding needs k* >= 1 cycles".into()));
        }
        Ok(())
    }
}

/// Six bred vectors: one per perturbed field and sign. Velocity-component
/// vectors are scalar fields over velocity nodes; the temperature vector is a
/// scalar field over P2 nodes.
#[derive(Clone, Debug)]
pub struct BredVectors {
    pub u1_plus: Vec<f64>,
    pub u1_minus: Vec<f64>,
    pub u2_plus: Vec<f64>,
    pub u2_minus: Vec<f64>,
    pub t_plus: Vec<f64>,
    pub t_minus: Vec<f64>,
}

fn field_len(layout: &DofLayout, field: BredField) -> usize {
    match field {
        BredField::VelocityX | BredField::VelocityY => layout.n_velocity_dofs() / 2,
        BredField::Temperature => layout.n_temperature_dofs(),
    }
}

fn add_field(layout: &DofLayout, member: &mut Member, field: BredField, delta: &[f64], free_only: bool) {
    match field {
        BredField::VelocityX | BredField::VelocityY => {
            let comp = if field == BredField::VelocityX { 0 } else { 1 };
            for (k, &d) in delta.iter().enumerate() {
                let dof = 2 * k + comp;
                if !free_only || !layout.vel_constrained[dof] {
                    member.u.values[dof] += d;
                }
            }
        }
        BredField::Temperature => {
            for (n, &d) in delta.iter().enumerate() {
                if !free_only || !layout.temp_constrained[n] {
                    member.temp.values[n] += d;
                }
            }
        }
    }
}

fn extract_diff(layout: &DofLayout, perturbed: &Member, control: &Member, field: BredField) -> Vec<f64> {
    match field {
        BredField::VelocityX | BredField::VelocityY => {
            let comp = if field == BredField::VelocityX { 0 } else { 1 };
            (0..layout.n_velocity_dofs() / 2)
                .map(|k| perturbed.u.values[2 * k + comp] - control.u.values[2 * k + comp])
                .collect()
        }
        BredField::Temperature => perturbed
            .temp
            .values
            .iter()
            .zip(&control.temp.values)
            .map(|(a, b)| a - b)
            .collect(),
    }
}

/// L² norm of a scalar field in the space carrying `field`. Velocity
/// components reuse the (block-diagonal) velocity mass matrix.
fn field_norm(stepper: &Stepper, field: BredField, values: &[f64]) -> f64 {
    match field {
        BredField::VelocityX | BredField::VelocityY => {
            let mut embedded = vec![0.0; 2 * values.len()];
            for (k, &v) in values.iter().enumerate() {
                embedded[2 * k] = v;
            }
            quad_norm(&stepper.mass_v, &embedded)
        }
        BredField::Temperature => quad_norm(&stepper.mass_t, values),
    }
}

/// Grow one bred vector bv(χ; s·ε) from the control initial state.
pub fn breed_field(
    stepper: &Stepper,
    control0: &Member,
    field: BredField,
    eps: f64,
    sign: f64,
    config: &BredVectorConfig,
    dt: f64,
) -> Result<Vec<f64>> {
    let layout = stepper.layout;
    let steps_per_cycle = ((config.delta_t / dt).round() as usize).max(1);

    // Step one: uniform additive perturbation of the free dofs
    let mut perturbed0 = control0.clone();
    let uniform = vec![sign * eps; field_len(layout, field)];
    add_field(layout, &mut perturbed0, field, &uniform, true);

    let mut state = EnsembleState::new(vec![control0.clone(), perturbed0], 0.0, dt);
    let mut bv = Vec::new();
    for cycle in 0..config.k_star {
        // Step two: advance control and perturbed runs by δt
        for _ in 0..steps_per_cycle {
            stepper.advance(&mut state)?;
        }
        let diff = extract_diff(layout, &state.members[1], &state.members[0], field);
        let norm = field_norm(stepper, field, &diff);
        if norm == 0.0 {
            return Err(Error::ZeroSeparation);
        }
        bv = diff.iter().map(|d| d * eps / norm).collect();
        // Step three: re-seed the perturbed run at the control plus the bred
        // vector (remaining cycles only; Step five returns the last rescale)
        if cycle + 1 < config.k_star {
            let mut reseeded = state.members[0].clone();
            add_field(layout, &mut reseeded, field, &bv, false);
            state.members[1] = reseeded;
        }
    }
    Ok(bv)
}

/// Run the breeding algorithm for all three fields and both signs.
pub fn breed(
    stepper: &Stepper,
    control0: &Member,
    config: &BredVectorConfig,
    dt: f64,
) -> Result<BredVectors> {
    config.validate(dt)?;
    let b = |field: BredField, eps: f64, sign: f64| breed_field(stepper, control0, field, eps, sign, config, dt);
    Ok(BredVectors {
        u1_plus: b(BredField::VelocityX, config.eps[0], 1.0)?,
        u1_minus: b(BredField::VelocityX, config.eps[0], -1.0)?,
        u2_plus: b(BredField::VelocityY, config.eps[1], 1.0)?,
        u2_minus: b(BredField::VelocityY, config.eps[1], -1.0)?,
        t_plus: b(BredField::Temperature, config.eps[2], 1.0)?,
        t_minus: b(BredField::Temperature, config.eps[2], -1.0)?,
    })
}

/// Build the two-member initial state χ± = χ⁰ + bv(χ; ±ε). Velocity boundary
/// dofs are re-zeroed to keep no-slip exact; temperature constrained entries
/// keep the base boundary values.
pub fn perturbed_initial_pair(
    layout: &DofLayout,
    base: &Member,
    bv: &BredVectors,
    t0: f64,
    dt: f64,
) -> EnsembleState {
    let mut plus = base.clone();
    add_field(layout, &mut plus, BredField::VelocityX, &bv.u1_plus, false);
    add_field(layout, &mut plus, BredField::VelocityY, &bv.u2_plus, false);
    add_field(layout, &mut plus, BredField::Temperature, &bv.t_plus, false);
    let mut minus = base.clone();
    add_field(layout, &mut minus, BredField::VelocityX, &bv.u1_minus, false);
    add_field(layout, &mut minus, BredField::VelocityY, &bv.u2_minus, false);
    add_field(layout, &mut minus, BredField::Temperature, &bv.t_minus, false);
    for member in [&mut plus, &mut minus] {
        for d in 0..layout.n_velocity_dofs() {
            if layout.vel_constrained[d] {
                member.u.values[d] = base.u.values[d];
            }
        }
        for (n, &c) in layout.temp_constrained.iter().enumerate() {
            if c {
                member.temp.values[n] = base.temp.values[n];
            }
        }
    }
    EnsembleState::new(vec![plus, minus], t0, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{interpolate_temperature, DofLayout};
    use crate::ensemble::{Physics, Problem, SchemeKind};
    use crate::mesh::{Side, TriMesh};
    use approx::assert_relative_eq;

    fn setup() -> (TriMesh, DofLayout) {
        let mesh = TriMesh::build_structured_unit_square(4)
            .unwrap()
            .classify_boundary(&[Side::Left, Side::Right])
            .unwrap();
        let layout = DofLayout::new(&mesh).unwrap();
        (mesh, layout)
    }

    fn benchmark_problem() -> Problem {
        let mut p = Problem::homogeneous(
            SchemeKind::ThinWall { include_u1_source: false },
            Physics { pr: 0.71, ra: 1e3, kappa_f: 1.0, kappa_s: 1.0, gamma: [0.0, 1.0] },
        );
        p.temp_bc = Box::new(|_, pt, _| if pt[0] < 0.5 { 1.0 } else { 0.0 });
        p
    }

    fn benchmark_base(mesh: &TriMesh, layout: &DofLayout) -> Member {
        let mut base = Member::zeros(layout);
        base.temp = interpolate_temperature(mesh, layout, &mut |_| 1.0);
        for (n, &c) in layout.temp_constrained.iter().enumerate() {
            if c {
                base.temp.values[n] = if layout.node_coords[n][0] < 0.5 { 1.0 } else { 0.0 };
            }
        }
        for d in 0..layout.n_velocity_dofs() {
            if !layout.vel_constrained[d] {
                base.u.values[d] = 1.0;
            }
        }
        base
    }

    #[test]
    fn config_validation() {
        let ok = BredVectorConfig { eps: [0.005, 0.004, 0.003], delta_t: 0.001, k_star: 5, seed: 1 };
        assert!(ok.validate(0.001).is_ok());
        let bad_eps = BredVectorConfig { eps: [0.02, 0.004, 0.003], ..ok };
        assert!(bad_eps.validate(0.001).is_err());
        let bad_dt = BredVectorConfig { delta_t: 0.0001, ..ok };
        assert!(bad_dt.validate(0.001).is_err());
        let bad_k = BredVectorConfig { k_star: 0, ..ok };
        assert!(bad_k.validate(0.001).is_err());
    }

    #[test]
    fn bred_vector_norm_equals_eps() {
        let (mesh, layout) = setup();
        let stepper = Stepper::new(&mesh, &layout, benchmark_problem()).unwrap();
        let base = benchmark_base(&mesh, &layout);
        let config = BredVectorConfig { eps: [0.005, 0.004, 0.006], delta_t: 0.001, k_star: 3, seed: 7 };
        let bv = breed(&stepper, &base, &config, 0.001).unwrap();
        for (field, values, eps) in [
            (BredField::VelocityX, &bv.u1_plus, config.eps[0]),
            (BredField::VelocityX, &bv.u1_minus, config.eps[0]),
            (BredField::VelocityY, &bv.u2_plus, config.eps[1]),
            (BredField::Temperature, &bv.t_plus, config.eps[2]),
            (BredField::Temperature, &bv.t_minus, config.eps[2]),
        ] {
            let n = field_norm(&stepper, field, values);
            assert_relative_eq!(n, eps, max_relative = 1e-12);
        }
    }

    #[test]
    fn breeding_deterministic() {
        let (mesh, layout) = setup();
        let stepper = Stepper::new(&mesh, &layout, benchmark_problem()).unwrap();
        let base = benchmark_base(&mesh, &layout);
        let config = BredVectorConfig { eps: [0.005, 0.004, 0.006], delta_t: 0.001, k_star: 2, seed: 7 };
        let a = breed(&stepper, &base, &config, 0.001).unwrap();
        let b = breed(&stepper, &base, &config, 0.001).unwrap();
        assert_eq!(a.u1_plus, b.u1_plus);
        assert_eq!(a.t_minus, b.t_minus);
    }

    #[test]
    fn zero_separation_aborts() {
        // a steady conduction control with zero velocity and zero eps-field
        // dynamics: perturbing the temperature of a pure-conduction fixed
        // point by a constant on free dofs still evolves, so instead force the
        // degenerate case directly with eps at the validation boundary
        let (mesh, layout) = setup();
        let stepper = Stepper::new(&mesh, &layout, benchmark_problem()).unwrap();
        let base = benchmark_base(&mesh, &layout);
        let config = BredVectorConfig { eps: [0.005, 0.004, 0.006], delta_t: 0.001, k_star: 1, seed: 7 };
        // sign = 0 makes the perturbed run identical to the control
        let err = breed_field(&stepper, &base, BredField::Temperature, config.eps[2], 0.0, &config, 0.001);
        match err {
            Err(Error::ZeroSeparation) => {}
            other => panic!("expected zero-separation abort, got {other:?}"),
        }
    }

    #[test]
    fn perturbed_pair_respects_boundaries() {
        let (mesh, layout) = setup();
        let stepper = Stepper::new(&mesh, &layout, benchmark_problem()).unwrap();
        let base = benchmark_base(&mesh, &layout);
        let config = BredVectorConfig { eps: [0.005, 0.004, 0.006], delta_t: 0.001, k_star: 2, seed: 7 };
        let bv = breed(&stepper, &base, &config, 0.001).unwrap();
        let state = perturbed_initial_pair(&layout, &base, &bv, 0.0, 0.001);
        assert_eq!(state.j(), 2);
        for m in &state.members {
            for d in 0..layout.n_velocity_dofs() {
                if layout.vel_constrained[d] {
                    assert_eq!(m.u.values[d], 0.0);
                }
            }
            for (n, &c) in layout.temp_constrained.iter().enumerate() {
                if c {
                    assert_eq!(m.temp.values[n], base.temp.values[n]);
                }
            }
        }
        // zero bred vectors reproduce the base exactly
        let zeros = BredVectors {
            u1_plus: vec![0.0; layout.n_velocity_dofs() / 2],
            u1_minus: vec![0.0; layout.n_velocity_dofs() / 2],
            u2_plus: vec![0.0; layout.n_velocity_dofs() / 2],
            u2_minus: vec![0.0; layout.n_velocity_dofs() / 2],
            t_plus: vec![0.0; layout.n_temperature_dofs()],
            t_minus: vec![0.0; layout.n_temperature_dofs()],
        };
        let state = perturbed_initial_pair(&layout, &base, &zeros, 0.0, 0.001);
        for m in &state.members {
            assert_eq!(m.u.values, base.u.values);
            assert_eq!(m.temp.values, base.temp.values);
        }
    }
}
