//! Ensemble timestepping with a shared coefficient matrix per sub-problem.
//!
//! One step of either scheme solves, in order:
//! 1. the temperature system: (M/Δt + N*(⟨u⟩ⁿ) + A_κ) T^{n+1} = rhs_j, and
//! 2. the velocity saddle-point system in (u, p):
//!    (M/Δt + N(⟨u⟩ⁿ) + Pr·L) u^{n+1} − Bᵀ p^{n+1} = rhs_j,  B u^{n+1} = 0.
//! The implicit convection uses the ensemble-mean velocity, so both matrices
//! are independent of the member index: each is factorized once per step and
//! solved against J right-hand sides. Thick wall buoyancy uses T^{n+1}
//! (temperature must be solved first); thin wall lags buoyancy at Tⁿ and adds
//! the lagged (u₁ⁿ, S) source to the heat equation.
//!
//! The fluctuation timestep condition (C†Δt/h)·max_j ‖∇u′ⁿ‖² ≤ 1 is checked
//! before every step; on violation the step is retried with Δt halved. The
//! timestep is never increased.

use crate::assembly::{self, apply_dirichlet, DofLayout, FieldRole, FieldVector, RegionCoeff};
use crate::error::{Error, Result};
use crate::linsolve::{factorize, norm2, SparseMatrix};
use crate::mesh::TriMesh;

/// Nondimensional physical parameters.
#[derive(Clone, Copy, Debug)]
pub struct Physics {
    pub pr: f64,
    pub ra: f64,
    pub kappa_f: f64,
    pub kappa_s: f64,
    /// Unit vector in the direction buoyancy acts (opposite gravity).
    pub gamma: [f64; 2],
}

/// Which coupled system is being solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    /// Solid enclosure region conducts; buoyancy uses T^{n+1}.
    ThickWall,
    /// Wall collapsed to zero thickness; buoyancy lags at Tⁿ and the heat
    /// equation optionally carries the (u₁ⁿ, S) source of the homogenized
    /// formulation.
    ThinWall { include_u1_source: bool },
}

/// One ensemble member's coefficient vectors.
#[derive(Clone, Debug)]
pub struct Member {
    pub u: FieldVector,
    pub temp: FieldVector,
    pub p: FieldVector,
}

impl Member {
    pub fn zeros(layout: &DofLayout) -> Member {
        Member {
            u: FieldVector::zeros(FieldRole::Velocity, layout),
            temp: FieldVector::zeros(FieldRole::Temperature, layout),
            p: FieldVector::zeros(FieldRole::Pressure, layout),
        }
    }
}

/// The J-member ensemble at one time level.
#[derive(Clone, Debug)]
pub struct EnsembleState {
    pub members: Vec<Member>,
    pub t: f64,
    pub dt: f64,
    pub halving_count: u32,
}

impl EnsembleState {
    pub fn new(members: Vec<Member>, t: f64, dt: f64) -> EnsembleState {
        EnsembleState { members, t, dt, halving_count: 0 }
    }

    pub fn j(&self) -> usize {
        self.members.len()
    }
}

/// Componentwise arithmetic mean of the ensemble.
pub fn ensemble_mean(state: &EnsembleState) -> Member {
    let j = state.j() as f64;
    let mut mean = state.members[0].clone();
    for m in &state.members[1..] {
        for (a, b) in mean.u.values.iter_mut().zip(&m.u.values) {
            *a += b;
        }
        for (a, b) in mean.temp.values.iter_mut().zip(&m.temp.values) {
            *a += b;
        }
        for (a, b) in mean.p.values.iter_mut().zip(&m.p.values) {
            *a += b;
        }
    }
    for v in mean
        .u
        .values
        .iter_mut()
        .chain(mean.temp.values.iter_mut())
        .chain(mean.p.values.iter_mut())
    {
        *v /= j;
    }
    mean
}

/// Velocity fluctuation u′_j = u_j − ⟨u⟩.
pub fn fluctuation(state: &EnsembleState, j: usize) -> Result<FieldVector> {
    if j >= state.j() {
        return Err(Error::InvalidConfig(format!("member index {j} out of range (J = {})", state.j())));
    }
    let mean = ensemble_mean(state);
    let mut out = state.members[j].u.clone();
    for (a, b) in out.values.iter_mut().zip(&mean.u.values) {
        *a -= b;
    }
    Ok(out)
}

/// (member, point, time) -> (body force, heat source)
pub type ForcingFn = Box<dyn Fn(usize, [f64; 2], f64) -> ([f64; 2], f64) + Send + Sync>;
/// (member, point, time) -> prescribed scalar boundary value
pub type ScalarBcFn = Box<dyn Fn(usize, [f64; 2], f64) -> f64 + Send + Sync>;
/// (member, point, time) -> prescribed velocity boundary value
pub type VectorBcFn = Box<dyn Fn(usize, [f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Per-member boundary data and forcing. Closures receive the member index,
/// the physical point, and the evaluation time.
pub struct Problem {
    pub scheme: SchemeKind,
    pub physics: Physics,
    /// (f, g) body force and heat source; `None` means both vanish.
    pub forcing: Option<ForcingFn>,
    /// Temperature Dirichlet value on Γ1 nodes.
    pub temp_bc: ScalarBcFn,
    /// Velocity value on constrained velocity dofs (no-slip walls, solid).
    pub vel_bc: VectorBcFn,
    /// Stability-condition constant C†.
    pub c_dagger: f64,
}

impl Problem {
    pub fn homogeneous(scheme: SchemeKind, physics: Physics) -> Problem {
        Problem {
            scheme,
            physics,
            forcing: None,
            temp_bc: Box::new(|_, _, _| 0.0),
            vel_bc: Box::new(|_, _, _| [0.0, 0.0]),
            c_dagger: 1.0,
        }
    }
}

/// Outcome of the stability monitor.
#[derive(Clone, Copy, Debug)]
pub struct StabilityCheck {
    /// (C†Δt/h)·max_j ‖∇u′‖²
    pub lhs: f64,
    /// (J·C†Δt/h)·⟨‖∇u′‖²⟩, the mean-based alternative; logged only.
    pub mean_lhs: f64,
    pub pass: bool,
}

/// Per-step instrumentation.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepReport {
    pub factorizations: u32,
    pub solves: u32,
    pub stability_lhs: f64,
    /// The mean-based alternative condition value; logged, never used for
    /// timestep control.
    pub stability_mean_lhs: f64,
    pub halvings_this_step: u32,
    pub dt_used: f64,
    /// max over members of ‖B u^{n+1}‖ / (1 + ‖u^{n+1}‖)
    pub max_div_residual: f64,
}

const HALVING_CAP: u32 = 30;

/// Assembles the constant operators once and advances ensembles.
pub struct Stepper<'a> {
    pub mesh: &'a TriMesh,
    pub layout: &'a DofLayout,
    pub problem: Problem,
    pub mass_v: SparseMatrix,
    pub mass_t: SparseMatrix,
    pub mass_p: SparseMatrix,
    /// Unit-coefficient velocity stiffness, shared by the viscous term and
    /// the ‖∇u′‖² quadratic form of the stability monitor.
    pub stiff_v_unit: SparseMatrix,
    pub stiff_t: SparseMatrix,
    pub div: SparseMatrix,
    pub div_t: SparseMatrix,
    pub buoy: SparseMatrix,
    pub u1src: Option<SparseMatrix>,
    p_weights: Vec<f64>,
    p_weight_sum: f64,
    vel_constrained: Vec<usize>,
    temp_constrained: Vec<usize>,
    load_quad_degree: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(mesh: &'a TriMesh, layout: &'a DofLayout, problem: Problem) -> Result<Stepper<'a>> {
        let physics = problem.physics;
        if physics.pr <= 0.0 || physics.kappa_f <= 0.0 || physics.ra < 0.0 {
            return Err(Error::InvalidConfig("physical parameters must be positive".into()));
        }
        let mass_v = assembly::assemble_mass(mesh, layout, FieldRole::Velocity)?;
        let mass_t = assembly::assemble_mass(mesh, layout, FieldRole::Temperature)?;
        let mass_p = assembly::assemble_mass(mesh, layout, FieldRole::Pressure)?;
        let stiff_v_unit =
            assembly::assemble_stiffness(mesh, layout, FieldRole::Velocity, &RegionCoeff::uniform(1.0))?;
        let stiff_t = assembly::assemble_stiffness(
            mesh,
            layout,
            FieldRole::Temperature,
            &RegionCoeff { fluid: physics.kappa_f, solid: physics.kappa_s },
        )?;
        let div = assembly::assemble_divergence(mesh, layout)?;
        let div_t = div.transpose();
        let buoy = assembly::assemble_buoyancy(mesh, layout, physics.gamma)?;
        let u1src = match problem.scheme {
            SchemeKind::ThinWall { include_u1_source: true } => {
                Some(assembly::assemble_u1_source(mesh, layout)?)
            }
            _ => None,
        };
        let p_weights = assembly::integral_weights(mesh, layout, FieldRole::Pressure)?;
        let p_weight_sum = p_weights.iter().sum();
        Ok(Stepper {
            mesh,
            layout,
            problem,
            mass_v,
            mass_t,
            mass_p,
            stiff_v_unit,
            stiff_t,
            div,
            div_t,
            buoy,
            u1src,
            p_weights,
            p_weight_sum,
            vel_constrained: layout.velocity_constrained_dofs(),
            temp_constrained: layout.temperature_constrained_dofs(),
            load_quad_degree: 9,
        })
    }

    /// H¹-seminorm squared of a velocity coefficient vector via the
    /// unit-coefficient stiffness quadratic form.
    pub fn grad_norm_sq(&self, u: &[f64]) -> f64 {
        let au = self.stiff_v_unit.matvec(u);
        au.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    pub fn l2_norm_u(&self, u: &[f64]) -> f64 {
        quad_norm(&self.mass_v, u)
    }

    pub fn l2_norm_t(&self, t: &[f64]) -> f64 {
        quad_norm(&self.mass_t, t)
    }

    /// Evaluate the timestep condition (C†Δt/h)·max_j ‖∇u′ⁿ‖² ≤ 1 for the
    /// current state.
    pub fn check_stability(&self, state: &EnsembleState) -> StabilityCheck {
        let mean = ensemble_mean(state);
        let mut max_gn = 0.0f64;
        let mut sum_gn = 0.0f64;
        for m in &state.members {
            let diff: Vec<f64> =
                m.u.values.iter().zip(&mean.u.values).map(|(a, b)| a - b).collect();
            let gn = self.grad_norm_sq(&diff);
            max_gn = max_gn.max(gn);
            sum_gn += gn;
        }
        let j = state.j() as f64;
        let factor = self.problem.c_dagger * state.dt / self.mesh.h;
        let lhs = factor * max_gn;
        let mean_lhs = j * factor * (sum_gn / j);
        StabilityCheck { lhs, mean_lhs, pass: lhs <= 1.0 }
    }

    /// Check the stability condition, halving Δt until it passes, then take
    /// one step. The halving count is cumulative over the run and capped.
    pub fn advance(&self, state: &mut EnsembleState) -> Result<StepReport> {
        let mut halvings = 0u32;
        let mut check = self.check_stability(state);
        while !check.pass {
            state.dt *= 0.5;
            state.halving_count += 1;
            halvings += 1;
            if state.halving_count > HALVING_CAP {
                return Err(Error::HalvingLimit { limit: HALVING_CAP, t: state.t });
            }
            check = self.check_stability(state);
        }
        let (next, mut report) = self.step(state)?;
        *state = next;
        report.stability_lhs = check.lhs;
        report.stability_mean_lhs = check.mean_lhs;
        report.halvings_this_step = halvings;
        Ok(report)
    }

    /// One accepted step from tⁿ to t^{n+1}; the stability condition is the
    /// caller's responsibility (see [`Stepper::advance`]).
    pub fn step(&self, state: &EnsembleState) -> Result<(EnsembleState, StepReport)> {
        let dt = state.dt;
        let t_next = state.t + dt;
        let j_count = state.j();
        let phys = self.problem.physics;
        let mean = ensemble_mean(state);
        let fluctuations: Vec<FieldVector> = state
            .members
            .iter()
            .map(|m| {
                let mut f = m.u.clone();
                for (a, b) in f.values.iter_mut().zip(&mean.u.values) {
                    *a -= b;
                }
                f
            })
            .collect();

        let mut report = StepReport { dt_used: dt, ..Default::default() };

        // ---- temperature sub-problem -------------------------------------
        let conv_t = assembly::assemble_convection(self.mesh, self.layout, &mean.u, FieldRole::Temperature)?;
        let k_t = SparseMatrix::linear_combination(&[
            (1.0 / dt, &self.mass_t),
            (1.0, &conv_t),
            (1.0, &self.stiff_t),
        ])?;
        let sys_t = apply_dirichlet(&k_t, &self.temp_constrained)?;
        let fact_t = factorize(&sys_t.matrix)?;
        report.factorizations += 1;

        let mut temp_rhs: Vec<Vec<f64>> = Vec::with_capacity(j_count);
        for (j, m) in state.members.iter().enumerate() {
            let mut rhs = self.mass_t.matvec(&m.temp.values);
            for v in &mut rhs {
                *v /= dt;
            }
            let conv = assembly::convection_apply(self.mesh, self.layout, &fluctuations[j], &m.temp)?;
            for (r, c) in rhs.iter_mut().zip(&conv) {
                *r -= c;
            }
            if let Some(u1m) = &self.u1src {
                u1m.matvec_add(1.0, &m.u.values, &mut rhs);
            }
            if let Some(forcing) = &self.problem.forcing {
                let load = assembly::assemble_load_temperature(
                    self.mesh,
                    self.layout,
                    self.load_quad_degree,
                    &mut |p| forcing(j, p, t_next).1,
                )?;
                for (r, l) in rhs.iter_mut().zip(&load) {
                    *r += l;
                }
            }
            let bc: Vec<f64> = sys_t
                .constrained
                .iter()
                .map(|&d| (self.problem.temp_bc)(j, self.layout.node_coords[d], t_next))
                .collect();
            sys_t.constrain_rhs(&mut rhs, &bc);
            temp_rhs.push(rhs);
        }
        let temp_new = fact_t.solve_many(&temp_rhs)?;
        report.solves += j_count as u32;
        for (j, t) in temp_new.iter().enumerate() {
            ensure_finite(t, || format!("temperature of member {j} at t = {t_next}"))?;
        }

        // ---- velocity/pressure sub-problem -------------------------------
        let nu = self.layout.n_velocity_dofs();
        let np = self.layout.n_pressure_dofs();
        let conv_v = assembly::assemble_convection(self.mesh, self.layout, &mean.u, FieldRole::Velocity)?;
        let a_block = SparseMatrix::linear_combination(&[
            (1.0 / dt, &self.mass_v),
            (1.0, &conv_v),
            (phys.pr, &self.stiff_v_unit),
        ])?;
        let n_sys = nu + np;
        let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(a_block.nnz() + 2 * self.div.nnz() + 4);
        trips.extend(a_block.triplets());
        for (p_row, u_col, v) in self.div.triplets() {
            trips.push((nu + p_row, u_col, v));
            trips.push((u_col, nu + p_row, -v));
        }
        let saddle = SparseMatrix::from_triplets(n_sys, n_sys, &trips)?;
        // constrain no-slip/solid dofs plus one pinned pressure dof; the
        // pressure is shifted to zero mean after the solve
        let mut constrained: Vec<usize> = self.vel_constrained.clone();
        constrained.push(nu);
        let sys_v = apply_dirichlet(&saddle, &constrained)?;
        let fact_v = factorize(&sys_v.matrix)?;
        report.factorizations += 1;

        let mut vel_rhs: Vec<Vec<f64>> = Vec::with_capacity(j_count);
        for (j, m) in state.members.iter().enumerate() {
            let mut rhs = vec![0.0; n_sys];
            let mu = self.mass_v.matvec(&m.u.values);
            for (r, v) in rhs[..nu].iter_mut().zip(&mu) {
                *r = v / dt;
            }
            let conv = assembly::convection_apply(self.mesh, self.layout, &fluctuations[j], &m.u)?;
            for (r, c) in rhs[..nu].iter_mut().zip(&conv) {
                *r -= c;
            }
            // buoyancy: thick wall couples to the fresh temperature, thin
            // wall lags one level
            let t_star = match self.problem.scheme {
                SchemeKind::ThickWall => &temp_new[j],
                SchemeKind::ThinWall { .. } => &m.temp.values,
            };
            self.buoy.matvec_add(phys.pr * phys.ra, t_star, &mut rhs[..nu]);
            if let Some(forcing) = &self.problem.forcing {
                let load = assembly::assemble_load_velocity(
                    self.mesh,
                    self.layout,
                    self.load_quad_degree,
                    &mut |p| forcing(j, p, t_next).0,
                )?;
                for (r, l) in rhs[..nu].iter_mut().zip(&load) {
                    *r += l;
                }
            }
            let bc: Vec<f64> = sys_v
                .constrained
                .iter()
                .map(|&d| {
                    if d >= nu {
                        0.0 // pinned pressure dof
                    } else {
                        let p = self.layout.velocity_dof_coords(d);
                        (self.problem.vel_bc)(j, p, t_next)[d % 2]
                    }
                })
                .collect();
            sys_v.constrain_rhs(&mut rhs, &bc);
            vel_rhs.push(rhs);
        }
        let vel_new = fact_v.solve_many(&vel_rhs)?;
        report.solves += j_count as u32;

        let mut members = Vec::with_capacity(j_count);
        for (j, sol) in vel_new.iter().enumerate() {
            ensure_finite(sol, || format!("velocity of member {j} at t = {t_next}"))?;
            let u = sol[..nu].to_vec();
            let mut p = sol[nu..].to_vec();
            // enforce the zero-mean pressure gauge
            let mean_p: f64 =
                self.p_weights.iter().zip(&p).map(|(w, q)| w * q).sum::<f64>() / self.p_weight_sum;
            for q in &mut p {
                *q -= mean_p;
            }
            let div_res = norm2(&self.div.matvec(&u)) / (1.0 + norm2(&u));
            report.max_div_residual = report.max_div_residual.max(div_res);
            members.push(Member {
                u: FieldVector { role: FieldRole::Velocity, values: u },
                temp: FieldVector { role: FieldRole::Temperature, values: temp_new[j].clone() },
                p: FieldVector { role: FieldRole::Pressure, values: p },
            });
        }

        let next = EnsembleState {
            members,
            t: t_next,
            dt,
            halving_count: state.halving_count,
        };
        Ok((next, report))
    }

    /// Advance until every member's relative increments of u and T fall below
    /// `tolerance`, or until `max_steps`.
    pub fn run_to_steady(
        &self,
        state: &mut EnsembleState,
        tolerance: f64,
        max_steps: usize,
        mut on_step: Option<&mut dyn FnMut(&EnsembleState, &StepReport)>,
    ) -> Result<SteadyResult> {
        if tolerance < 0.0 {
            return Err(Error::InvalidConfig("steady tolerance must be nonnegative".into()));
        }
        let mut steps = 0usize;
        let mut reports = StepAggregate::default();
        while steps < max_steps {
            let prev = state.clone();
            let report = self.advance(state)?;
            reports.absorb(&report);
            steps += 1;
            if let Some(cb) = on_step.as_deref_mut() {
                cb(state, &report);
            }
            let mut worst: f64 = 0.0;
            for (m_new, m_old) in state.members.iter().zip(&prev.members) {
                worst = worst.max(rel_increment(self, &m_new.u.values, &m_old.u.values, true));
                worst = worst.max(rel_increment(self, &m_new.temp.values, &m_old.temp.values, false));
            }
            if worst <= tolerance {
                return Ok(SteadyResult { steps, converged: true, aggregate: reports });
            }
        }
        Ok(SteadyResult { steps, converged: false, aggregate: reports })
    }
}

fn rel_increment(stepper: &Stepper, new: &[f64], old: &[f64], velocity: bool) -> f64 {
    let diff: Vec<f64> = new.iter().zip(old).map(|(a, b)| a - b).collect();
    let dn = if velocity { stepper.l2_norm_u(&diff) } else { stepper.l2_norm_t(&diff) };
    if dn == 0.0 {
        return 0.0;
    }
    let nn = if velocity { stepper.l2_norm_u(new) } else { stepper.l2_norm_t(new) };
    dn / nn
}

/// Result of a steady-state run; `converged = false` flags a partial result
/// that hit the step cap.
#[derive(Clone, Copy, Debug)]
pub struct SteadyResult {
    pub steps: usize,
    pub converged: bool,
    pub aggregate: StepAggregate,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepAggregate {
    pub factorizations: u64,
    pub solves: u64,
    pub max_div_residual: f64,
    pub max_stability_lhs: f64,
}

impl StepAggregate {
    pub fn absorb(&mut self, r: &StepReport) {
        self.factorizations += r.factorizations as u64;
        self.solves += r.solves as u64;
        self.max_div_residual = self.max_div_residual.max(r.max_div_residual);
        self.max_stability_lhs = self.max_stability_lhs.max(r.stability_lhs);
    }
}

pub fn quad_norm(m: &SparseMatrix, x: &[f64]) -> f64 {
    let mx = m.matvec(x);
    mx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
}

fn ensure_finite(values: &[f64], context: impl Fn() -> String) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: context() });
    }
    Ok(())
}
