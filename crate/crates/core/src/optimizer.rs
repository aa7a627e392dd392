//! SCA drivers: the active-RIS loop, the passive-RIS loop with the
//! unit-modulus penalty schedule, the feasibility-restoration initializer,
//! and the channel-scaling wrapper for numerically hard instances.
//!
//! Every iteration rebuilds the convex subproblem around the previous
//! iterate and solves it with the embedded conic solver, so each recorded
//! iterate is feasible for the original design problem and the true
//! objective sequence is nondecreasing up to solver tolerance. The loops
//! stop when the relative change of the subproblem objective drops below
//! `sca_tolerance` or the iteration cap is reached.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use risbeam_conic::{solve, ConicProgram, SolveStatus, SolverSettings as ConicSettings};

use crate::metrics::{self, BeamformingSolution};
use crate::sca::{
    build_feasibility, build_gain_active, build_gain_passive, ExpansionPoint, VarMap,
};
use crate::scene::{ChannelSet, RisMode, SystemConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Relative objective-change threshold that stops the SCA loop.
    pub sca_tolerance: f64,
    pub max_sca_iters: usize,
    /// Passive-mode penalty weight; 0 selects the automatic schedule
    /// (falling back to `SystemConfig::zeta` when that is positive).
    pub zeta: f64,
    /// Unit-modulus binding test at passive-mode convergence.
    pub unit_modulus_tol: f64,
    /// Epsilon of the channel prescaling rule.
    pub scale_epsilon: f64,
    pub subproblem_tol_gap: f64,
    pub subproblem_tol_feas: f64,
    pub subproblem_max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            sca_tolerance: 1e-3,
            max_sca_iters: 50,
            zeta: 0.0,
            unit_modulus_tol: 1e-3,
            scale_epsilon: 10.0,
            subproblem_tol_gap: 1e-8,
            subproblem_tol_feas: 1e-8,
            subproblem_max_iters: 200,
        }
    }
}

impl SolverSettings {
    fn conic(&self) -> ConicSettings {
        ConicSettings {
            tol_gap: self.subproblem_tol_gap,
            tol_feas: self.subproblem_tol_feas,
            max_iters: self.subproblem_max_iters,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRow {
    pub iter: usize,
    /// Subproblem (surrogate) objective at the accepted iterate.
    pub objective: f64,
    /// Exact beampattern gain at the iterate.
    pub true_gain: f64,
    /// `true_gain + zeta ||theta||^2` in passive mode, `true_gain` otherwise.
    pub penalized_gain: f64,
    /// Worst signed constraint slack from the exact evaluators.
    pub worst_residual: f64,
    pub solve_time_s: f64,
    pub subproblem_iters: usize,
    pub zeta: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub rows: Vec<IterationRow>,
    /// Set when a subproblem failed after the rescale retry and the driver
    /// returned the last feasible iterate instead of aborting.
    pub degraded: bool,
    /// Set when the passive penalty never became binding within the
    /// escalation budget.
    pub binding_warning: bool,
}

impl IterationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iter,objective,true_gain,penalized_gain,worst_residual,solve_time_s,subproblem_iters,zeta\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{},{:.6e}\n",
                r.iter,
                r.objective,
                r.true_gain,
                r.penalized_gain,
                r.worst_residual,
                r.solve_time_s,
                r.subproblem_iters,
                r.zeta
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serialization")
    }

    pub fn final_gain(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.true_gain)
    }
}

/// True iff the loop may stop: the relative change of the subproblem
/// objective between the last two rows of the same penalty phase is within
/// tolerance, or the iteration cap is reached.
pub fn converged(trace: &IterationTrace, settings: &SolverSettings) -> bool {
    if trace.rows.is_empty() {
        return false;
    }
    if trace.rows.len() >= settings.max_sca_iters {
        return true;
    }
    if trace.rows.len() < 2 {
        return false;
    }
    let last = &trace.rows[trace.rows.len() - 1];
    let prev = &trace.rows[trace.rows.len() - 2];
    if last.zeta != prev.zeta {
        return false;
    }
    let denom = prev.objective.abs().max(1e-12);
    (last.objective - prev.objective).abs() / denom <= settings.sca_tolerance
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScaleState {
    pub varsigma: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("all channel entries are zero; nothing to scale")]
    AllZeroChannels,
    #[error("configuration mode does not match the requested algorithm: {0}")]
    WrongMode(&'static str),
    #[error("initializer contract violated: {0}")]
    InitializerContract(String),
    #[error("subproblem solve failed: {0}")]
    Subproblem(String),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Applies the numerical prescaling rule: `varsigma = eps / max|entry|`,
/// then `G <- sqrt(vs) G`, `h_D <- vs h_D`, `h_R <- sqrt(vs) h_R`,
/// `g_R <- sqrt(vs) g_R`, and all noise powers by `vs^2`. The beampattern
/// gain of the scaled instance is `vs^2` times the original.
pub fn scale_problem(
    channels: &ChannelSet,
    config: &SystemConfig,
    scale_epsilon: f64,
) -> Result<(ScaleState, ChannelSet, SystemConfig), OptimizerError> {
    let maxabs = channels.max_abs_entry();
    if !(maxabs > 0.0) {
        return Err(OptimizerError::AllZeroChannels);
    }
    let vs = scale_epsilon / maxabs;
    let rvs = vs.sqrt();
    let mut ch = channels.clone();
    for row in &mut ch.g_mat {
        for v in row {
            *v *= rvs;
        }
    }
    for row in &mut ch.h_direct {
        for v in row {
            *v *= vs;
        }
    }
    for row in &mut ch.h_ris {
        for v in row {
            *v *= rvs;
        }
    }
    for v in &mut ch.g_ris {
        *v *= rvs;
    }
    let mut cfg = config.clone();
    let vs2 = vs * vs;
    for s in &mut cfg.sigma2_user {
        *s *= vs2;
    }
    cfg.sigma2_target *= vs2;
    cfg.sigma2_ris *= vs2;
    Ok((ScaleState { varsigma: vs }, ch, cfg))
}

/// Recovers the true beampattern gain from a scaled run.
pub fn descale_gain(gain_scaled: f64, state: &ScaleState) -> f64 {
    gain_scaled / (state.varsigma * state.varsigma)
}

// ---------------------------------------------------------------------------
// starts and initialization
// ---------------------------------------------------------------------------

/// Documented deterministic start: matched-filter columns toward each
/// user's effective channel (sensing columns toward the target's), RIS at
/// phase zero with amplitude 1 (passive) or beta_max/2 (active), then the
/// whole point power-normalized to half the budget.
pub fn default_start(channels: &ChannelSet, config: &SystemConfig) -> BeamformingSolution {
    start_with_phases(channels, config, &vec![0.0; config.ris_elements])
}

/// Same construction with caller-chosen RIS phases; used to probe
/// initialization insensitivity.
pub fn start_with_phases(
    channels: &ChannelSet,
    config: &SystemConfig,
    phases: &[f64],
) -> BeamformingSolution {
    let l = config.bs_antennas;
    let n = config.ris_elements;
    let mut amp = match config.ris_mode {
        RisMode::Passive => 1.0,
        RisMode::Active => (config.beta_max / 2.0).max(1.0 / 2.0),
    };
    if config.sigma2_ris > 0.0 {
        // keep the dynamic-noise power alone under a quarter of the budget
        let cap = (config.p_max / (4.0 * config.sigma2_ris * n as f64)).sqrt();
        amp = amp.min(cap.max(1e-6));
    }
    let theta: Vec<Complex64> = phases
        .iter()
        .map(|p| Complex64::from_polar(amp, *p))
        .collect();

    let mut columns = Vec::with_capacity(config.total_columns());
    for k in 0..config.users {
        let h = metrics::effective_user_channel(k, channels, &theta).expect("dims");
        columns.push(h.iter().map(|v| v.conj()).collect::<Vec<_>>());
    }
    let g_t = metrics::effective_target_channel(channels, &theta).expect("dims");
    for _ in 0..config.sensing_streams {
        columns.push(g_t.iter().map(|v| v.conj()).collect::<Vec<_>>());
    }
    // unit-normalize columns so the power split is even
    for col in &mut columns {
        let nrm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-300 {
            for v in col.iter_mut() {
                *v /= nrm;
            }
        } else {
            for (li, v) in col.iter_mut().enumerate() {
                *v = Complex64::new(if li == 0 { 1.0 } else { 0.0 }, 0.0);
            }
        }
    }
    let mut sol = BeamformingSolution {
        columns,
        theta: theta.clone(),
    };
    // scale X so the mode's power consumption is half the budget
    let target = config.p_max / 2.0;
    let scale = match config.ris_mode {
        RisMode::Passive => {
            let p: f64 = sol
                .columns
                .iter()
                .flat_map(|c| c.iter().map(|v| v.norm_sqr()))
                .sum();
            (target / p).sqrt()
        }
        RisMode::Active => {
            let fixed = config.sigma2_ris * theta.iter().map(|t| t.norm_sqr()).sum::<f64>();
            let var_part =
                metrics::total_power(&sol.columns, &theta, &channels.g_mat, 0.0);
            ((target - fixed).max(target / 4.0) / var_part).sqrt()
        }
    };
    for col in &mut sol.columns {
        for v in col.iter_mut() {
            *v *= scale;
        }
    }
    let _ = l;
    sol
}

#[derive(Debug, Clone)]
pub enum InitOutcome {
    Feasible(BeamformingSolution),
    Infeasible { slack_sum: f64 },
}

fn solve_program(
    prog: &ConicProgram,
    settings: &SolverSettings,
) -> risbeam_conic::SolveResult {
    solve(prog, &settings.conic())
}

/// Feasibility-restoration loop from a given start; returns the final point
/// and the converged slack sum.
pub fn feasibility_loop(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SolverSettings,
    start: &BeamformingSolution,
) -> Result<(BeamformingSolution, f64), OptimizerError> {
    let mut current = start.clone();
    let mut prev_slack = f64::INFINITY;
    let mut slack = f64::INFINITY;
    for _ in 0..settings.max_sca_iters {
        let exp = ExpansionPoint::from_solution(&current, channels);
        let (prog, vm) = build_feasibility(&exp, channels, config);
        let res = solve_program(&prog, settings);
        match res.status {
            SolveStatus::Optimal | SolveStatus::NumericalLimit => {}
            s => {
                return Err(OptimizerError::Subproblem(format!(
                    "feasibility subproblem returned {s:?}"
                )))
            }
        }
        current = vm.extract(&res.x);
        slack = vm.delta_sum(&res.x);
        if slack <= 1e-9 {
            return Ok((current, slack.max(0.0)));
        }
        if prev_slack.is_finite()
            && (prev_slack - slack).abs() <= settings.sca_tolerance * prev_slack.max(1e-12)
        {
            break;
        }
        prev_slack = slack;
    }
    Ok((current, slack))
}

/// Runs the slack-minimization phase from the documented default start and
/// declares the instance feasible iff the converged slack sum is at most
/// 1e-7.
pub fn initialize(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SolverSettings,
) -> Result<InitOutcome, OptimizerError> {
    initialize_from(channels, config, settings, &default_start(channels, config))
}

/// Initialization from a caller-supplied start.
pub fn initialize_from(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SolverSettings,
    start: &BeamformingSolution,
) -> Result<InitOutcome, OptimizerError> {
    let (sol, slack) = feasibility_loop(channels, config, settings, start)?;
    if slack <= 1e-7 {
        Ok(InitOutcome::Feasible(sol))
    } else {
        Ok(InitOutcome::Infeasible { slack_sum: slack })
    }
}

// ---------------------------------------------------------------------------
// main loops
// ---------------------------------------------------------------------------

struct StepOutcome {
    solution: BeamformingSolution,
    objective: f64,
    iters: usize,
    time_s: f64,
}

/// Solves one subproblem; on a numerical failure retries once on rescaled
/// data (objective descaled back).
fn solve_step(
    build: &dyn Fn(&ExpansionPoint, &ChannelSet, &SystemConfig) -> (ConicProgram, VarMap),
    current: &BeamformingSolution,
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SolverSettings,
    first_iteration: bool,
) -> Result<Option<StepOutcome>, OptimizerError> {
    let started = Instant::now();
    let exp = ExpansionPoint::from_solution(current, channels);
    let (prog, vm) = build(&exp, channels, config);
    let res = solve_program(&prog, settings);
    match res.status {
        SolveStatus::Optimal => {
            return Ok(Some(StepOutcome {
                solution: vm.extract(&res.x),
                objective: res.objective,
                iters: res.iterations,
                time_s: started.elapsed().as_secs_f64(),
            }))
        }
        SolveStatus::PrimalInfeasible if first_iteration => {
            return Err(OptimizerError::InitializerContract(
                "first subproblem is infeasible; the initial point does not satisfy the \
                 original constraints"
                    .into(),
            ))
        }
        _ => {}
    }
    // rescale-and-retry once
    let (st, ch2, cfg2) = scale_problem(channels, config, settings.scale_epsilon)?;
    let exp2 = ExpansionPoint::from_solution(current, &ch2);
    let (prog2, vm2) = build(&exp2, &ch2, &cfg2);
    let res2 = solve_program(&prog2, settings);
    if res2.status == SolveStatus::Optimal {
        return Ok(Some(StepOutcome {
            solution: vm2.extract(&res2.x),
            objective: descale_gain(res2.objective, &st),
            iters: res2.iterations,
            time_s: started.elapsed().as_secs_f64(),
        }));
    }
    if first_iteration && res2.status == SolveStatus::PrimalInfeasible {
        return Err(OptimizerError::InitializerContract(
            "first subproblem is infeasible even after rescaling".into(),
        ));
    }
    Ok(None)
}

fn record_row(
    trace: &mut IterationTrace,
    step: &StepOutcome,
    channels: &ChannelSet,
    config: &SystemConfig,
    zeta: f64,
) -> Result<(), OptimizerError> {
    let report = metrics::constraint_report(&step.solution, channels, config)?;
    let theta_pow: f64 = step.solution.theta.iter().map(|t| t.norm_sqr()).sum();
    trace.rows.push(IterationRow {
        iter: trace.rows.len(),
        objective: step.objective,
        true_gain: report.beampattern_gain,
        penalized_gain: report.beampattern_gain + zeta * theta_pow,
        worst_residual: report.worst_residual(),
        solve_time_s: step.time_s,
        subproblem_iters: step.iters,
        zeta,
    });
    Ok(())
}

/// Active-RIS SCA loop. Requires a feasible starting point (from
/// [`initialize`]); every recorded iterate stays feasible and the true gain
/// sequence is nondecreasing up to solver tolerance.
pub fn optimize_aris(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SolverSettings,
    x0: &[Vec<Complex64>],
    theta0: &[Complex64],
) -> Result<(BeamformingSolution, IterationTrace), OptimizerError> {
    if config.ris_mode != RisMode::Active {
        return Err(OptimizerError::WrongMode("optimize_aris needs active mode"));
    }
    let mut current = BeamformingSolution {
        columns: x0.to_vec(),
        theta: theta0.to_vec(),
    };
    let mut trace = IterationTrace::default();
    let build = |e: &ExpansionPoint, c: &ChannelSet, s: &SystemConfig| build_gain_active(e, c, s);
    loop {
        let first = trace.rows.is_empty();
        match solve_step(&build, &current, channels, config, settings, first)? {
            Some(step) => {
                record_row(&mut trace, &step, channels, config, 0.0)?;
                current = step.solution;
            }
            None => {
                trace.degraded = true;
                break;
            }
        }
        if converged(&trace, settings) {
            break;
        }
    }
    Ok((current, trace))
}

/// Passive-RIS SCA loop on the penalized objective. At convergence the
/// unit-modulus binding test must pass; otherwise the penalty weight is
/// escalated (x10, three times at most) and the loop resumes.
pub fn optimize_pris(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SolverSettings,
    x0: &[Vec<Complex64>],
    theta0: &[Complex64],
) -> Result<(BeamformingSolution, IterationTrace), OptimizerError> {
    if config.ris_mode != RisMode::Passive {
        return Err(OptimizerError::WrongMode("optimize_pris needs passive mode"));
    }
    let mut current = BeamformingSolution {
        columns: x0.to_vec(),
        theta: theta0.to_vec(),
    };
    let mut trace = IterationTrace::default();

    let mut zeta = if settings.zeta > 0.0 {
        settings.zeta
    } else if config.zeta > 0.0 {
        config.zeta
    } else {
        let gain0 = metrics::beampattern_gain(&current, channels, config)?;
        if gain0 > 0.0 {
            10.0 * gain0 / config.ris_elements as f64
        } else {
            1.0
        }
    };
    let mut escalations = 0usize;

    loop {
        let first = trace.rows.is_empty();
        let z = zeta;
        let build =
            move |e: &ExpansionPoint, c: &ChannelSet, s: &SystemConfig| build_gain_passive(e, c, s, z);
        match solve_step(&build, &current, channels, config, settings, first)? {
            Some(step) => {
                record_row(&mut trace, &step, channels, config, zeta)?;
                current = step.solution;
            }
            None => {
                trace.degraded = true;
                break;
            }
        }
        if converged(&trace, settings) {
            if trace.rows.len() >= settings.max_sca_iters {
                break;
            }
            let worst_modulus = current
                .theta
                .iter()
                .map(|t| (1.0 - t.norm()).abs())
                .fold(0.0, f64::max);
            if worst_modulus <= settings.unit_modulus_tol {
                break;
            }
            if escalations < 3 {
                escalations += 1;
                zeta *= 10.0;
                continue;
            }
            trace.binding_warning = true;
            break;
        }
    }
    Ok((current, trace))
}
