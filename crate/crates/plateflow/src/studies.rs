//! Refinement studies: penalty strength down to zero, obstacle shift down to
//! zero, and time-step refinement. Trajectories of a study fan out across
//! worker threads; each trajectory itself is sequential.

use serde::Serialize;

use crate::diagnostics::{accumulate_bounds, regularity_report};
use crate::error::{FlowError, SolveError};
use crate::flow::{run_flow, Trajectory};
use crate::grid::{inner, max_norm_diff, DiscreteOperator, Grid};
use crate::obstacles::{ObstaclePair, PenaltyParams};
use crate::stepper::{StepEngine, StepMethod, StepOptions};

/// One row of the penalty study.
#[derive(Debug, Clone, Serialize)]
pub struct RhoStudyRow {
    pub rho: f64,
    /// Largest per-step weighted-norm gap to the constrained solution.
    pub gap_h: f64,
    /// Largest per-step lower/upper violation masses `|(.)^-|_h^2`.
    pub lower_violation_mass: f64,
    pub upper_violation_mass: f64,
    /// The bound `rho * E(u_0)` the violation masses must respect.
    pub bound_rho_e0: f64,
    pub newton_iterations: usize,
}

/// One row of the obstacle-shift study.
#[derive(Debug, Clone, Serialize)]
pub struct EpsStudyRow {
    pub epsilon: f64,
    pub step: usize,
    pub time: f64,
    /// Max-norm gap between the shifted and unshifted trajectories.
    pub gap_max: f64,
}

/// One row of the time-step refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct TauStudyRow {
    pub steps: usize,
    pub tau: f64,
    /// Max over shared timestamps of the weighted-norm gap to the run with
    /// doubled step count; NaN on the finest row.
    pub gap_to_double: f64,
    pub holder_quarter: f64,
    pub cumulative_tv2: f64,
    pub cumulative_signed2: f64,
    pub cumulative_d2_sup2: f64,
    pub velocity_square_sum: f64,
    pub bound_two_e0: f64,
    pub dissipation_ok: bool,
}

/// Penalty study: at each time step the penalized problem is anchored at the
/// previous *constrained* state, which is feasible and so carries zero
/// penalty; the violation bound `rho E(u_0)` then holds row by row.
pub fn study_rho(
    grid: &Grid,
    b_op: &DiscreteOperator,
    pair: &ObstaclePair,
    u0: &[f64],
    horizon: f64,
    n: usize,
    opts: &StepOptions,
    rhos: &[f64],
    epsilon: f64,
) -> Result<Vec<RhoStudyRow>, FlowError> {
    let mut base_opts = opts.clone();
    base_opts.method = StepMethod::Constrained;
    let shifted = pair.shift_lower(epsilon)?;
    let reference = run_flow(grid, b_op, &shifted, u0, horizon, n, &base_opts)?;
    let e0 = reference.initial_energy();
    let tau = reference.tau();

    let rows: Vec<Result<RhoStudyRow, FlowError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = rhos
            .iter()
            .map(|&rho| {
                let reference = &reference;
                let shifted = &shifted;
                let base_opts = &base_opts;
                scope.spawn(move || -> Result<RhoStudyRow, FlowError> {
                    let engine = StepEngine::new(grid, b_op, tau);
                    let mut opts = base_opts.clone();
                    opts.tau = tau;
                    opts.method = StepMethod::Penalized;
                    opts.penalty = Some(
                        PenaltyParams::new(0.0, rho).map_err(|e| FlowError::Step {
                            index: 0,
                            source: SolveError::Infeasible(e),
                        })?,
                    );
                    let mut gap_h = 0.0f64;
                    let mut lower_mass = 0.0f64;
                    let mut upper_mass = 0.0f64;
                    let mut newton_iterations = 0usize;
                    for i in 1..=n {
                        let anchor = reference.state(i - 1);
                        let res = engine
                            .penalized(shifted, anchor, &opts)
                            .map_err(|source| FlowError::Step { index: i, source })?;
                        newton_iterations += res.iterations;
                        let diff: Vec<f64> = res
                            .u_new
                            .iter()
                            .zip(reference.state(i))
                            .map(|(a, b)| a - b)
                            .collect();
                        gap_h = gap_h.max(inner(grid, &diff, &diff)?.sqrt());
                        let lower_neg: Vec<f64> = res
                            .u_new
                            .iter()
                            .zip(shifted.lower())
                            .map(|(&u, &f)| (f - u).max(0.0))
                            .collect();
                        let upper_neg: Vec<f64> = res
                            .u_new
                            .iter()
                            .zip(shifted.upper())
                            .map(|(&u, &g)| (u - g).max(0.0))
                            .collect();
                        lower_mass = lower_mass.max(inner(grid, &lower_neg, &lower_neg)?);
                        upper_mass = upper_mass.max(inner(grid, &upper_neg, &upper_neg)?);
                    }
                    Ok(RhoStudyRow {
                        rho,
                        gap_h,
                        lower_violation_mass: lower_mass,
                        upper_violation_mass: upper_mass,
                        bound_rho_e0: rho * e0,
                        newton_iterations,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    rows.into_iter().collect()
}

/// Obstacle-shift study: run the constrained flow with the lower obstacle
/// shifted down by each epsilon, from the same validated initial datum (the
/// unshifted box is contained in every shifted one), and record per-step
/// max-norm gaps to the unshifted run.
pub fn study_eps(
    grid: &Grid,
    b_op: &DiscreteOperator,
    pair: &ObstaclePair,
    u0: &[f64],
    horizon: f64,
    n: usize,
    opts: &StepOptions,
    epsilons: &[f64],
) -> Result<Vec<EpsStudyRow>, FlowError> {
    let mut base_opts = opts.clone();
    base_opts.method = StepMethod::Constrained;
    let (u0, _) = pair.clamp_initial(u0);
    let reference = run_flow(grid, b_op, pair, &u0, horizon, n, &base_opts)?;

    let runs: Vec<Result<Trajectory, FlowError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = epsilons
            .iter()
            .map(|&eps| {
                let u0 = &u0;
                let base_opts = &base_opts;
                scope.spawn(move || {
                    let shifted = pair.shift_lower(eps)?;
                    run_flow(grid, b_op, &shifted, u0, horizon, n, base_opts)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut rows = Vec::new();
    for (&eps, run) in epsilons.iter().zip(runs) {
        let run = run?;
        for i in 1..=n {
            rows.push(EpsStudyRow {
                epsilon: eps,
                step: i,
                time: run.timestamp(i),
                gap_max: max_norm_diff(run.state(i), reference.state(i)),
            });
        }
    }
    Ok(rows)
}

/// Time-step refinement: run the same instance at each step count, compare
/// consecutive runs at shared timestamps, and collect the cumulative
/// statistics whose boundedness the refinement checks.
pub fn study_tau(
    grid: &Grid,
    b_op: &DiscreteOperator,
    pair: &ObstaclePair,
    u0: &[f64],
    horizon: f64,
    n_list: &[usize],
    opts: &StepOptions,
) -> Result<Vec<TauStudyRow>, FlowError> {
    let runs: Vec<Result<Trajectory, FlowError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = n_list
            .iter()
            .map(|&n| {
                let opts = opts.clone();
                scope.spawn(move || run_flow(grid, b_op, pair, u0, horizon, n, &opts))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let runs: Result<Vec<Trajectory>, FlowError> = runs.into_iter().collect();
    let runs = runs?;

    let mut rows = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        let gap_to_double = match runs.get(k + 1) {
            Some(finer) => shared_timestamp_gap(grid, run, finer)?,
            None => f64::NAN,
        };
        let measure = accumulate_bounds(run);
        let regularity = regularity_report(run);
        let dissipation = run.dissipation_report();
        rows.push(TauStudyRow {
            steps: run.step_count(),
            tau: run.tau(),
            gap_to_double,
            holder_quarter: regularity.holder_quarter,
            cumulative_tv2: measure.cumulative_tv2,
            cumulative_signed2: measure.cumulative_signed2,
            cumulative_d2_sup2: regularity.cumulative_d2_sup2,
            velocity_square_sum: dissipation.velocity_square_sum,
            bound_two_e0: dissipation.bound_two_e0,
            dissipation_ok: dissipation.prefix_violations.is_empty()
                && dissipation.energy_increases.is_empty(),
        });
    }
    Ok(rows)
}

/// Max over shared timestamps of the weighted-norm distance between two runs
/// of the same instance. Comparison happens only at timestamps both runs own.
fn shared_timestamp_gap(
    grid: &Grid,
    coarse: &Trajectory,
    fine: &Trajectory,
) -> Result<f64, FlowError> {
    let ratio = fine.step_count() / coarse.step_count();
    let mut gap = 0.0f64;
    for i in 0..=coarse.step_count() {
        let j = i * ratio;
        let diff: Vec<f64> = coarse
            .state(i)
            .iter()
            .zip(fine.state(j))
            .map(|(a, b)| a - b)
            .collect();
        gap = gap.max(inner(grid, &diff, &diff)?.sqrt());
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_biharmonic, build_grid};
    use crate::obstacles::{sample_obstacles, ObstacleSource};
    use crate::presets::Preset;

    #[test]
    fn eps_zero_row_has_zero_gap() {
        let grid = build_grid(1, &[1.0], &[10]).unwrap();
        let b = assemble_biharmonic(&grid);
        let preset = Preset::by_name("squeeze", 1.0).unwrap();
        let pair = preset.obstacles(&grid).unwrap();
        let u0 = preset.initial_datum(&grid);
        let rows = study_eps(
            &grid,
            &b,
            &pair,
            &u0,
            0.01,
            3,
            &StepOptions::default(),
            &[0.0, 1e-2],
        )
        .unwrap();
        for row in rows.iter().filter(|r| r.epsilon == 0.0) {
            assert_eq!(row.gap_max, 0.0);
        }
        assert_eq!(rows.len(), 6);
    }

    #[test]
    fn rho_rows_respect_bound_and_shrink() {
        let grid = build_grid(1, &[1.0], &[12]).unwrap();
        let b = assemble_biharmonic(&grid);
        let f = |x: &[f64]| 0.05 - 0.55 * (x[0] - 0.5) * (x[0] - 0.5);
        let g = |_: &[f64]| 10.0;
        let pair = sample_obstacles(
            &grid,
            &ObstacleSource::Analytic(&f),
            &ObstacleSource::Analytic(&g),
        )
        .unwrap();
        let u0: Vec<f64> = (0..12)
            .map(|j| {
                let x = grid.coords(j)[0];
                0.15 * 16.0 * x * x * (1.0 - x) * (1.0 - x)
            })
            .collect();
        let rows = study_rho(
            &grid,
            &b,
            &pair,
            &u0,
            0.3,
            4,
            &StepOptions::default(),
            &[1e-2, 1e-3, 1e-4],
            0.0,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for row in &rows {
            assert!(row.lower_violation_mass <= row.bound_rho_e0 + 1e-14);
            assert!(row.upper_violation_mass <= row.bound_rho_e0 + 1e-14);
            assert!(row.gap_h <= last + 1e-12);
            last = row.gap_h;
        }
    }

    #[test]
    fn tau_rows_collect_shared_gaps() {
        let grid = build_grid(1, &[1.0], &[10]).unwrap();
        let b = assemble_biharmonic(&grid);
        let preset = Preset::by_name("diffuse", 1.0).unwrap();
        let pair = preset.obstacles(&grid).unwrap();
        let u0 = preset.initial_datum(&grid);
        let rows = study_tau(
            &grid,
            &b,
            &pair,
            &u0,
            0.002,
            &[2, 4, 8],
            &StepOptions::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].gap_to_double > rows[1].gap_to_double);
        assert!(rows[2].gap_to_double.is_nan());
        for row in &rows {
            assert!(row.dissipation_ok);
        }
    }
}
