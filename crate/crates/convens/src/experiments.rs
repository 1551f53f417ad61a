//! The three batch experiments: the double-pane window benchmark, the
//! manufactured-solution convergence studies, and the predictability
//! exploration.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{self, DofLayout};
use crate::config::{Experiment, RunConfig};
use crate::diagnostics::{self, EnergyForm, Midline, Wall};
use crate::ensemble::{ensemble_mean, EnsembleState, Member, Physics, Problem, SchemeKind, Stepper};
use crate::error::Result;
use crate::mesh::{Side, TriMesh};
use crate::mms::{self, ManufacturedSolution};
use crate::perturb::{breed, perturbed_initial_pair, BredVectorConfig};
use crate::vtk;

fn scheme_of(config: &RunConfig) -> SchemeKind {
    if config.thick_wall {
        SchemeKind::ThickWall
    } else {
        SchemeKind::ThinWall { include_u1_source: config.include_u1_source }
    }
}

fn physics_of(config: &RunConfig, ra: f64) -> Physics {
    Physics {
        pr: config.pr,
        ra,
        kappa_f: config.kappa_f,
        kappa_s: config.kappa_s,
        gamma: config.gamma,
    }
}

fn energy_form(config: &RunConfig) -> EnergyForm {
    if config.energy_symmetric {
        EnergyForm::Symmetric
    } else {
        EnergyForm::AsPrinted
    }
}

/// ε = (ε₁, ε₂, ε₃): explicit from the config, or drawn uniformly in
/// (0, 0.01) from the seeded generator.
pub fn bv_eps(config: &RunConfig) -> [f64; 3] {
    if let Some(e) = config.bv_eps {
        return e;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = || loop {
        let e: f64 = rng.gen::<f64>() * 0.01;
        if e > 0.0 && e < 0.01 {
            return e;
        }
    };
    [draw(), draw(), draw()]
}

fn ensure_outdir(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.outdir)?;
    let mut manifest = config.manifest();
    let eps = bv_eps(config);
    manifest.push_str(&format!("bv_eps_effective={},{},{}\n", eps[0], eps[1], eps[2]));
    std::fs::write(config.outdir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn ra_label(ra: f64) -> String {
    if ra == 0.0 {
        "0".to_string()
    } else {
        format!("{ra:e}").replace('.', "p")
    }
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

/// Summary row for one Rayleigh number of the double-pane benchmark.
#[derive(Clone, Debug)]
pub struct BenchmarkRow {
    pub ra: f64,
    pub nu_avg_hot: f64,
    pub max_u1_x05: f64,
    pub max_u2_y05: f64,
    pub final_dt: f64,
    pub steps: usize,
    pub halvings: u32,
    pub converged: bool,
    pub max_div_residual: f64,
}

/// Benchmark setup: unit square, hot left wall T = 1, cold right wall T = 0,
/// insulated horizontal walls, initial fields (1 + bv, 1 + bv) and 1 + bv.
pub fn benchmark_problem(config: &RunConfig, ra: f64) -> Problem {
    let mut p = Problem::homogeneous(scheme_of(config), physics_of(config, ra));
    p.c_dagger = config.c_dagger;
    p.temp_bc = Box::new(|_, pt, _| if pt[0] < 0.5 { 1.0 } else { 0.0 });
    p
}

/// Base (pre-breeding) benchmark state: constant unit fields on free dofs,
/// boundary values on constrained dofs.
pub fn benchmark_base(mesh: &TriMesh, layout: &DofLayout) -> Member {
    let mut base = Member::zeros(layout);
    base.temp = assembly::interpolate_temperature(mesh, layout, &mut |_| 1.0);
    for (n, &c) in layout.temp_constrained.iter().enumerate() {
        if c {
            base.temp.values[n] = if layout.node_coords[n][0] < 0.5 { 1.0 } else { 0.0 };
        }
    }
    for d in 0..layout.n_velocity_dofs() {
        base.u.values[d] = if layout.vel_constrained[d] { 0.0 } else { 1.0 };
    }
    base
}

pub fn run_benchmark(config: &RunConfig) -> Result<Vec<BenchmarkRow>> {
    config.validate()?;
    ensure_outdir(config)?;
    let mesh = TriMesh::build_embedded_solid(config.m, &config.solid_strips)?
        .classify_boundary(&[Side::Left, Side::Right])?;
    let layout = DofLayout::new(&mesh)?;
    let eps = bv_eps(config);
    let mut rows = Vec::new();
    for &ra in &config.ra_list {
        let stepper = Stepper::new(&mesh, &layout, benchmark_problem(config, ra))?;
        let base = benchmark_base(&mesh, &layout);
        let bv_config = BredVectorConfig {
            eps,
            delta_t: config.bv_delta_t,
            k_star: config.bv_k_star,
            seed: config.seed,
        };
        let bv = breed(&stepper, &base, &bv_config, config.dt0)?;
        let mut state = perturbed_initial_pair(&layout, &base, &bv, 0.0, config.dt0);
        let form = energy_form(config);
        let mut series: Vec<diagnostics::DiagnosticsRecord> = Vec::new();
        let mut log_step = |s: &EnsembleState, r: &crate::ensemble::StepReport| {
            let mean = ensemble_mean(s);
            let u_refs: Vec<&[f64]> = s.members.iter().map(|m| m.u.values.as_slice()).collect();
            let t_refs: Vec<&[f64]> = s.members.iter().map(|m| m.temp.values.as_slice()).collect();
            series.push(diagnostics::DiagnosticsRecord {
                t: s.t,
                dt: s.dt,
                member_energy: s
                    .members
                    .iter()
                    .map(|m| diagnostics::energy(&stepper.mass_v, &stepper.mass_t, &m.u.values, &m.temp.values, form))
                    .collect(),
                mean_energy: diagnostics::energy(&stepper.mass_v, &stepper.mass_t, &mean.u.values, &mean.temp.values, form),
                member_u_norm: s.members.iter().map(|m| stepper.l2_norm_u(&m.u.values)).collect(),
                member_t_norm: s.members.iter().map(|m| stepper.l2_norm_t(&m.temp.values)).collect(),
                stability_lhs: r.stability_lhs,
                variance_u: diagnostics::variance(&stepper.mass_v, &u_refs),
                variance_t: diagnostics::variance(&stepper.mass_t, &t_refs),
                ..Default::default()
            });
        };
        let result =
            stepper.run_to_steady(&mut state, config.steady_tol, config.max_steps, Some(&mut log_step))?;
        write_benchmark_series(&config.outdir, ra, &series)?;

        let mean = ensemble_mean(&state);
        let (profile_hot, nu_avg_hot) = diagnostics::nusselt(&mesh, &layout, &mean.temp, Wall::HotX0)?;
        let (profile_cold, _) = diagnostics::nusselt(&mesh, &layout, &mean.temp, Wall::ColdX1)?;
        let max_u1 =
            diagnostics::midline_max_velocity(&mesh, &layout, &mean.u, Midline::HorizontalVelocityAtX05)?;
        let max_u2 =
            diagnostics::midline_max_velocity(&mesh, &layout, &mean.u, Midline::VerticalVelocityAtY05)?;

        let label = ra_label(ra);
        vtk::write_fields(
            &config.outdir.join(format!("fields_ra{label}.vtk")),
            &mesh,
            &layout,
            &mean,
            &format!("mean fields, Ra = {ra}"),
        )?;
        let mut nu_csv = std::io::BufWriter::new(std::fs::File::create(
            config.outdir.join(format!("nusselt_ra{label}.csv")),
        )?);
        writeln!(nu_csv, "y,nu_local_hot,nu_local_cold")?;
        for (hot, cold) in profile_hot.iter().zip(&profile_cold) {
            writeln!(nu_csv, "{},{},{}", hot.0, hot.1, cold.1)?;
        }

        rows.push(BenchmarkRow {
            ra,
            nu_avg_hot,
            max_u1_x05: max_u1,
            max_u2_y05: max_u2,
            final_dt: state.dt,
            steps: result.steps,
            halvings: state.halving_count,
            converged: result.converged,
            max_div_residual: result.aggregate.max_div_residual,
        });
    }
    let mut csv = std::io::BufWriter::new(std::fs::File::create(config.outdir.join("benchmark.csv"))?);
    writeln!(csv, "ra,nu_avg_hot,max_u1_x05,max_u2_y05,final_dt,steps,halvings,converged,max_div_residual")?;
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.ra,
            r.nu_avg_hot,
            r.max_u1_x05,
            r.max_u2_y05,
            r.final_dt,
            r.steps,
            r.halvings,
            r.converged,
            r.max_div_residual
        )?;
    }
    Ok(rows)
}

fn write_benchmark_series(outdir: &Path, ra: f64, series: &[diagnostics::DiagnosticsRecord]) -> Result<()> {
    let label = ra_label(ra);
    let mut csv = std::io::BufWriter::new(std::fs::File::create(
        outdir.join(format!("benchmark_series_ra{label}.csv")),
    )?);
    writeln!(csv, "t,dt,mean_energy,energy_member1,energy_member2,u_norm_member1,u_norm_member2,T_norm_member1,T_norm_member2,variance_u,variance_T,stability_lhs")?;
    for r in series {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.dt,
            r.mean_energy,
            r.member_energy.first().copied().unwrap_or(f64::NAN),
            r.member_energy.get(1).copied().unwrap_or(f64::NAN),
            r.member_u_norm.first().copied().unwrap_or(f64::NAN),
            r.member_u_norm.get(1).copied().unwrap_or(f64::NAN),
            r.member_t_norm.first().copied().unwrap_or(f64::NAN),
            r.member_t_norm.get(1).copied().unwrap_or(f64::NAN),
            r.variance_u,
            r.variance_t,
            r.stability_lhs
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// manufactured-solution runs
// ---------------------------------------------------------------------------

/// Sup-over-time error norms of one ensemble-mean trajectory.
#[derive(Clone, Copy, Debug, Default)]
pub struct MmsErrors {
    pub u_l2: f64,
    pub u_h1: f64,
    pub temp_l2: f64,
    pub temp_h1: f64,
    pub p_l2: f64,
    pub halvings: u32,
    pub max_div_residual: f64,
}

/// Two-member manufactured family (1 ± ε) advanced to t*, reporting the
/// L∞(L²)/L∞(H¹) errors of the ensemble mean against the unperturbed
/// solution. The pressure series starts at the first computed level.
pub fn mms_trajectory_errors(config: &RunConfig, m: usize, dt: f64, t_star: f64, ra: f64) -> Result<MmsErrors> {
    let mesh = TriMesh::build_structured_unit_square(m)?
        .classify_boundary(&[Side::Left, Side::Right, Side::Top, Side::Bottom])?;
    let layout = DofLayout::new(&mesh)?;
    let scheme = scheme_of(config);
    let physics = physics_of(config, ra);
    let exact = ManufacturedSolution::unperturbed();
    let members_ms =
        [ManufacturedSolution::perturbed(config.mms_eps)?, ManufacturedSolution::perturbed(-config.mms_eps)?];

    let mut problem = Problem::homogeneous(scheme, physics);
    problem.c_dagger = config.c_dagger;
    problem.forcing = Some(Box::new(move |j, p, t| members_ms[j].forcing(&scheme, p, t, &physics)));
    problem.temp_bc = Box::new(move |j, p, t| members_ms[j].temperature(p, t));
    problem.vel_bc = Box::new(move |j, p, t| members_ms[j].velocity(p, t));
    let stepper = Stepper::new(&mesh, &layout, problem)?;

    let members: Vec<Member> = members_ms
        .iter()
        .map(|ms| Member {
            u: assembly::interpolate_velocity(&mesh, &layout, &mut |p| ms.velocity(p, 0.0)),
            temp: assembly::interpolate_temperature(&mesh, &layout, &mut |p| ms.temperature(p, 0.0)),
            p: assembly::interpolate_pressure(&mesh, &layout, &mut |p| ms.pressure(p, 0.0)),
        })
        .collect();
    let mut state = EnsembleState::new(members, 0.0, dt);

    let n_steps = (t_star / dt).round().max(1.0) as usize;
    let mut out = MmsErrors::default();
    let mean0 = ensemble_mean(&state);
    let e0 = mms::field_errors(&mesh, &layout, &exact, 0.0, &mean0.u.values, &mean0.temp.values, &mean0.p.values)?;
    out.u_l2 = e0.u_l2;
    out.u_h1 = e0.u_h1;
    out.temp_l2 = e0.temp_l2;
    out.temp_h1 = e0.temp_h1;
    for _ in 0..n_steps {
        let report = stepper.advance(&mut state)?;
        out.max_div_residual = out.max_div_residual.max(report.max_div_residual);
        let mean = ensemble_mean(&state);
        let e = mms::field_errors(
            &mesh,
            &layout,
            &exact,
            state.t,
            &mean.u.values,
            &mean.temp.values,
            &mean.p.values,
        )?;
        out.u_l2 = out.u_l2.max(e.u_l2);
        out.u_h1 = out.u_h1.max(e.u_h1);
        out.temp_l2 = out.temp_l2.max(e.temp_l2);
        out.temp_h1 = out.temp_h1.max(e.temp_h1);
        out.p_l2 = out.p_l2.max(e.p_l2);
    }
    out.halvings = state.halving_count;
    Ok(out)
}

/// One resolution of a convergence table, with rates against the previous
/// row.
#[derive(Clone, Copy, Debug)]
pub struct ConvergenceRow {
    /// Discretization size: h-proxy 1/m for the spatial study, Δt for the
    /// temporal one.
    pub size: f64,
    pub errors: MmsErrors,
    pub rates: Option<[f64; 5]>,
}

pub fn run_convergence(config: &RunConfig) -> Result<Vec<ConvergenceRow>> {
    config.validate()?;
    ensure_outdir(config)?;
    let ra = *config.ra_list.first().unwrap_or(&100.0);
    let spatial = config.experiment == Experiment::ConvergenceSpace;
    let cases: Vec<(f64, usize, f64)> = if spatial {
        config.m_list.iter().map(|&m| (1.0 / m as f64, m, config.dt0)).collect()
    } else {
        config.dt_list.iter().map(|&dt| (dt, config.m, dt)).collect()
    };
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &(size, m, dt) in &cases {
        let errors = mms_trajectory_errors(config, m, dt, config.t_star, ra)?;
        let rates = rows.last().map(|prev| {
            let s1 = prev.size;
            let e1 = prev.errors;
            let rate = |a: f64, b: f64| diagnostics::convergence_rate(a, b, s1, size).unwrap_or(f64::NAN);
            [
                rate(e1.u_l2, errors.u_l2),
                rate(e1.u_h1, errors.u_h1),
                rate(e1.temp_l2, errors.temp_l2),
                rate(e1.temp_h1, errors.temp_h1),
                rate(e1.p_l2, errors.p_l2),
            ]
        });
        rows.push(ConvergenceRow { size, errors, rates });
    }
    let name = if spatial { "convergence_space.csv" } else { "convergence_time.csv" };
    let mut csv = std::io::BufWriter::new(std::fs::File::create(config.outdir.join(name))?);
    writeln!(
        csv,
        "size,err_u_l2,rate_u_l2,err_u_h1,rate_u_h1,err_T_l2,rate_T_l2,err_T_h1,rate_T_h1,err_p_l2,rate_p_l2"
    )?;
    for r in &rows {
        let fmt_rate = |k: usize| r.rates.map_or(String::new(), |x| x[k].to_string());
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.size,
            r.errors.u_l2,
            fmt_rate(0),
            r.errors.u_h1,
            fmt_rate(1),
            r.errors.temp_l2,
            fmt_rate(2),
            r.errors.temp_h1,
            fmt_rate(3),
            r.errors.p_l2,
            fmt_rate(4)
        )?;
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// predictability
// ---------------------------------------------------------------------------

/// Time series and derived predictability metrics for one Rayleigh number.
#[derive(Clone, Debug, Default)]
pub struct PredictabilityReport {
    pub ra: f64,
    pub times: Vec<f64>,
    pub energy_unperturbed: Vec<f64>,
    pub energy_mean: Vec<f64>,
    pub energy_members: Vec<Vec<f64>>,
    pub variance_u: Vec<f64>,
    pub variance_t: Vec<f64>,
    pub r_u: Vec<f64>,
    pub r_t: Vec<f64>,
    /// (t, γ_{t*}(t)) with γ over the remaining interval [t, t*]
    pub gamma_u: Vec<(f64, f64)>,
    pub gamma_t: Vec<(f64, f64)>,
    /// (t, γ_Δt(t)) single-step effective exponent
    pub gamma_loc_u: Vec<(f64, f64)>,
    pub gamma_loc_t: Vec<(f64, f64)>,
    pub gamma0_u: f64,
    pub gamma0_t: f64,
    pub sep0_u: f64,
    pub sep0_t: f64,
    /// (δ, t_p) sweeps
    pub tp_u: Vec<(f64, f64)>,
    pub tp_t: Vec<(f64, f64)>,
    pub sign_change_u: Option<f64>,
    pub sign_change_t: Option<f64>,
}

pub fn run_predictability(config: &RunConfig) -> Result<Vec<PredictabilityReport>> {
    config.validate()?;
    ensure_outdir(config)?;
    let mesh = TriMesh::build_structured_unit_square(config.m)?
        .classify_boundary(&[Side::Left, Side::Right, Side::Top, Side::Bottom])?;
    let layout = DofLayout::new(&mesh)?;
    let eps = bv_eps(config);
    let mut reports = Vec::new();
    for &ra in &config.ra_list {
        let scheme = scheme_of(config);
        let physics = physics_of(config, ra);
        let exact = ManufacturedSolution::unperturbed();
        // forcing and boundary conditions stay unperturbed for every member
        let mut problem = Problem::homogeneous(scheme, physics);
        problem.c_dagger = config.c_dagger;
        problem.forcing = Some(Box::new(move |_, p, t| exact.forcing(&scheme, p, t, &physics)));
        let stepper = Stepper::new(&mesh, &layout, problem)?;

        let base = Member {
            u: assembly::interpolate_velocity(&mesh, &layout, &mut |p| exact.velocity(p, 0.0)),
            temp: assembly::interpolate_temperature(&mesh, &layout, &mut |p| exact.temperature(p, 0.0)),
            p: assembly::interpolate_pressure(&mesh, &layout, &mut |p| exact.pressure(p, 0.0)),
        };
        let bv_config = BredVectorConfig {
            eps,
            delta_t: config.bv_delta_t,
            k_star: config.bv_k_star,
            seed: config.seed,
        };
        let bv = breed(&stepper, &base, &bv_config, config.dt0)?;
        let mut ens = perturbed_initial_pair(&layout, &base, &bv, 0.0, config.dt0);
        let mut ctrl = EnsembleState::new(vec![base.clone()], 0.0, config.dt0);

        let form = energy_form(config);
        let mut report = PredictabilityReport { ra, ..Default::default() };
        report.energy_members = vec![Vec::new(), Vec::new()];
        let record = |report: &mut PredictabilityReport, ens: &EnsembleState, ctrl: &EnsembleState| -> Result<()> {
            let mean = ensemble_mean(ens);
            report.times.push(ens.t);
            report.energy_mean.push(diagnostics::energy(
                &stepper.mass_v,
                &stepper.mass_t,
                &mean.u.values,
                &mean.temp.values,
                form,
            ));
            report.energy_unperturbed.push(diagnostics::energy(
                &stepper.mass_v,
                &stepper.mass_t,
                &ctrl.members[0].u.values,
                &ctrl.members[0].temp.values,
                form,
            ));
            for (k, m) in ens.members.iter().enumerate() {
                let e = diagnostics::energy(&stepper.mass_v, &stepper.mass_t, &m.u.values, &m.temp.values, form);
                report.energy_members[k].push(e);
            }
            let u_refs: Vec<&[f64]> = ens.members.iter().map(|m| m.u.values.as_slice()).collect();
            let t_refs: Vec<&[f64]> = ens.members.iter().map(|m| m.temp.values.as_slice()).collect();
            report.variance_u.push(diagnostics::variance(&stepper.mass_v, &u_refs));
            report.variance_t.push(diagnostics::variance(&stepper.mass_t, &t_refs));
            report.r_u.push(diagnostics::relative_energy_fluctuation(
                &stepper.mass_v,
                &ens.members[0].u.values,
                &ens.members[1].u.values,
            )?);
            report.r_t.push(diagnostics::relative_energy_fluctuation(
                &stepper.mass_t,
                &ens.members[0].temp.values,
                &ens.members[1].temp.values,
            )?);
            Ok(())
        };
        record(&mut report, &ens, &ctrl)?;

        while ens.t < config.t_star - 0.5 * ens.dt {
            let step_report = stepper.advance(&mut ens)?;
            // keep the control run on the ensemble's time grid
            ctrl.dt = step_report.dt_used;
            let (next, _) = stepper.step(&ctrl)?;
            ctrl = next;
            record(&mut report, &ens, &ctrl)?;
        }

        // separation norms at t = 0 for the horizon definition
        let sep = |a: &[f64], b: &[f64], mass: &crate::linsolve::SparseMatrix| {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            crate::ensemble::quad_norm(mass, &diff)
        };
        let first = perturbed_initial_pair(&layout, &base, &bv, 0.0, config.dt0);
        report.sep0_u = sep(&first.members[0].u.values, &first.members[1].u.values, &stepper.mass_v);
        report.sep0_t =
            sep(&first.members[0].temp.values, &first.members[1].temp.values, &stepper.mass_t);

        // γ over the remaining interval [t, t*]
        let n = report.times.len();
        let r_final_u = report.r_u[n - 1];
        let r_final_t = report.r_t[n - 1];
        let t_final = report.times[n - 1];
        for k in 0..n - 1 {
            let tau = t_final - report.times[k];
            if let Ok(g) = diagnostics::effective_lyapunov(report.r_u[k], r_final_u, tau) {
                report.gamma_u.push((report.times[k], g));
            }
            if let Ok(g) = diagnostics::effective_lyapunov(report.r_t[k], r_final_t, tau) {
                report.gamma_t.push((report.times[k], g));
            }
        }
        for k in 0..n - 1 {
            let tau = report.times[k + 1] - report.times[k];
            if let Ok(g) = diagnostics::effective_lyapunov(report.r_u[k], report.r_u[k + 1], tau) {
                report.gamma_loc_u.push((report.times[k], g));
            }
            if let Ok(g) = diagnostics::effective_lyapunov(report.r_t[k], report.r_t[k + 1], tau) {
                report.gamma_loc_t.push((report.times[k], g));
            }
        }
        report.gamma0_u = report.gamma_u.first().map_or(f64::NAN, |p| p.1);
        report.gamma0_t = report.gamma_t.first().map_or(f64::NAN, |p| p.1);
        // a sign change in either the remaining-window exponent or the
        // single-step exponent marks the predictability transition
        report.sign_change_u =
            first_of(sign_change(&report.gamma_u), sign_change(&report.gamma_loc_u));
        report.sign_change_t =
            first_of(sign_change(&report.gamma_t), sign_change(&report.gamma_loc_t));

        // δ-horizon sweeps
        for k in 0..=30 {
            let s = k as f64 / 30.0;
            let delta_u = report.sep0_u * (1.0 - s) + 0.15 * s;
            let delta_t = report.sep0_t * (1.0 - s) + 0.15 * s;
            if let Ok(tp) = diagnostics::predictability_horizon(report.gamma0_u, delta_u, report.sep0_u) {
                report.tp_u.push((delta_u, tp));
            }
            if let Ok(tp) = diagnostics::predictability_horizon(report.gamma0_t, delta_t, report.sep0_t) {
                report.tp_t.push((delta_t, tp));
            }
        }

        write_predictability_csv(&config.outdir, &report)?;
        reports.push(report);
    }
    Ok(reports)
}

fn first_of(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

fn sign_change(series: &[(f64, f64)]) -> Option<f64> {
    for w in series.windows(2) {
        if w[0].1.signum() != w[1].1.signum() {
            return Some(w[1].0);
        }
    }
    None
}

fn write_predictability_csv(outdir: &Path, report: &PredictabilityReport) -> Result<()> {
    let label = ra_label(report.ra);
    let mut series = std::io::BufWriter::new(std::fs::File::create(
        outdir.join(format!("predictability_ra{label}.csv")),
    )?);
    writeln!(
        series,
        "t,energy_unperturbed,energy_mean,energy_member1,energy_member2,variance_u,variance_T,r_u,r_T"
    )?;
    for k in 0..report.times.len() {
        writeln!(
            series,
            "{},{},{},{},{},{},{},{},{}",
            report.times[k],
            report.energy_unperturbed[k],
            report.energy_mean[k],
            report.energy_members[0][k],
            report.energy_members[1][k],
            report.variance_u[k],
            report.variance_t[k],
            report.r_u[k],
            report.r_t[k]
        )?;
    }
    let mut gamma = std::io::BufWriter::new(std::fs::File::create(
        outdir.join(format!("lyapunov_ra{label}.csv")),
    )?);
    writeln!(gamma, "t,gamma_u,gamma_T,gamma_local_u,gamma_local_T")?;
    let lookup = |series: &[(f64, f64)], t: f64| -> String {
        series
            .iter()
            .find(|&&(s, _)| s.to_bits() == t.to_bits())
            .map(|&(_, g)| g.to_string())
            .unwrap_or_default()
    };
    for &(t, gu) in &report.gamma_u {
        writeln!(
            gamma,
            "{t},{gu},{},{},{}",
            lookup(&report.gamma_t, t),
            lookup(&report.gamma_loc_u, t),
            lookup(&report.gamma_loc_t, t)
        )?;
    }
    let mut horizon = std::io::BufWriter::new(std::fs::File::create(
        outdir.join(format!("horizon_ra{label}.csv")),
    )?);
    writeln!(horizon, "delta_u,tp_u,delta_T,tp_T")?;
    for k in 0..report.tp_u.len().max(report.tp_t.len()) {
        let (du, tu) = report.tp_u.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
        let (dt_, tt) = report.tp_t.get(k).copied().unwrap_or((f64::NAN, f64::NAN));
        writeln!(horizon, "{du},{tu},{dt_},{tt}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

/// Dispatch on the experiment type; returns a console summary.
pub fn run(config: &RunConfig) -> Result<String> {
    match config.experiment {
        Experiment::Benchmark => {
            let rows = run_benchmark(config)?;
            let mut s = String::new();
            s.push_str("ra,nu_avg_hot,max_u1_x05,max_u2_y05,final_dt,steps,halvings,converged\n");
            for r in rows {
                s.push_str(&format!(
                    "{},{:.4},{:.4},{:.4},{:e},{},{},{}\n",
                    r.ra, r.nu_avg_hot, r.max_u1_x05, r.max_u2_y05, r.final_dt, r.steps, r.halvings, r.converged
                ));
            }
            Ok(s)
        }
        Experiment::ConvergenceSpace | Experiment::ConvergenceTime => {
            let rows = run_convergence(config)?;
            let mut s = String::new();
            s.push_str("size,err_u_l2,err_u_h1,err_T_l2,err_T_h1,err_p_l2,rates\n");
            for r in rows {
                let rates = r
                    .rates
                    .map(|x| format!("{:.2},{:.2},{:.2},{:.2},{:.2}", x[0], x[1], x[2], x[3], x[4]))
                    .unwrap_or_else(|| "-".into());
                s.push_str(&format!(
                    "{:.6},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},[{}]\n",
                    r.size, r.errors.u_l2, r.errors.u_h1, r.errors.temp_l2, r.errors.temp_h1, r.errors.p_l2, rates
                ));
            }
            Ok(s)
        }
        Experiment::Predictability => {
            let reports = run_predictability(config)?;
            let mut s = String::new();
            s.push_str("ra,gamma0_u,gamma0_T,sep0_u,sep0_T,sign_change_u,sign_change_T\n");
            for r in reports {
                s.push_str(&format!(
                    "{},{:.4},{:.4},{:.3e},{:.3e},{:?},{:?}\n",
                    r.ra, r.gamma0_u, r.gamma0_t, r.sep0_u, r.sep0_t, r.sign_change_u, r.sign_change_t
                ));
            }
            Ok(s)
        }
    }
}
