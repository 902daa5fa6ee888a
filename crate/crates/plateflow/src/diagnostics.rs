//! Residual-measure and regularity diagnostics: sign/support structure of
//! the discrete reaction density, the coincidence-set identity, and the
//! cumulative statistics tracked under time refinement.

use serde::Serialize;

use crate::flow::Trajectory;
use crate::grid::{DiscreteOperator, Grid};
use crate::obstacles::ObstaclePair;
use crate::stepper::{residual_density, StepResult};

/// Tolerances for the structural checks.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReportTols {
    /// Bound on |mu| away from contacts and the coincidence set.
    pub support_tol: f64,
    /// Slack allowed on the contact-set sign conditions.
    pub sign_tol: f64,
    /// Bound on |mu - B f| over the coincidence set.
    pub coincidence_tol: f64,
}

impl Default for ReportTols {
    fn default() -> Self {
        ReportTols {
            support_tol: 1e-8,
            sign_tol: 1e-8,
            coincidence_tol: 1e-8,
        }
    }
}

/// Per-step measure statistics and structural violations.
#[derive(Debug, Clone, Serialize)]
pub struct StepMeasure {
    /// `w * sum_j mu_j`, the signed mass.
    pub signed_mass: f64,
    /// `w * sum_j |mu_j|`, the total variation.
    pub total_variation: f64,
    pub positive_mass: f64,
    pub negative_mass: f64,
    /// Largest |mu| over nodes in neither contact set nor the coincidence
    /// set.
    pub off_support_max: f64,
    /// Worst negative mu on the lower contact set (0 when clean).
    pub lower_sign_violation: f64,
    /// Worst positive mu on the upper contact set (0 when clean).
    pub upper_sign_violation: f64,
    pub support_violation_count: usize,
    pub sign_violation_count: usize,
    /// `max over the coincidence set of |mu_j - (B f)_j|`; 0 when the set is
    /// empty.
    pub coincidence_error: f64,
}

impl StepMeasure {
    pub fn violates(&self, tols: &ReportTols) -> bool {
        self.off_support_max > tols.support_tol
            || self.lower_sign_violation > tols.sign_tol
            || self.upper_sign_violation > tols.sign_tol
            || self.coincidence_error > tols.coincidence_tol
    }
}

/// Cumulative measure statistics over a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureReport {
    pub per_step: Vec<StepMeasure>,
    /// `tau * sum_i totalvariation_i^2`.
    pub cumulative_tv2: f64,
    /// `tau * sum_i signedmass_i^2`.
    pub cumulative_signed2: f64,
    /// Reporting-only right-hand side `C E(u_0) + T sup_{coincidence}|Bf|^2`.
    pub bound_rhs: f64,
    pub sup_bilaplacian_lower_on_coincidence: f64,
    pub max_off_support: f64,
    pub max_coincidence_error: f64,
}

/// Per-step sup of second differences and the cumulative statistic.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub second_difference_sup: Vec<f64>,
    /// `tau * sum_i |D2 u_i|_inf^2`.
    pub cumulative_d2_sup2: f64,
    /// Time-Hoelder quotient of the trajectory in the weighted L2 norm at
    /// exponent 1/4.
    pub holder_quarter: f64,
}

/// Reporting constant in `bound_rhs`; the acceptance checks are boundedness
/// under refinement, not any specific constant.
pub const REPORT_CONSTANT: f64 = 1.0;

/// Residual measure density `mu = B u_new / w + V` of a step.
pub fn residual_measure(b_op: &DiscreteOperator, step: &StepResult) -> Vec<f64> {
    residual_density(b_op, &step.u_new, &step.velocity)
}

/// Check the sign/support/coincidence structure of one step.
pub fn verify_structure(
    pair: &ObstaclePair,
    step: &StepResult,
    tols: &ReportTols,
) -> StepMeasure {
    let w = pair.grid().quadrature_weight();
    let coincidence = pair.coincidence_mask();
    let bilap = pair.bilaplacian_lower();
    let mut signed = 0.0;
    let mut pos = 0.0;
    let mut neg = 0.0;
    let mut off_support_max = 0.0f64;
    let mut lower_sign = 0.0f64;
    let mut upper_sign = 0.0f64;
    let mut support_violations = 0;
    let mut sign_violations = 0;
    let mut coincidence_error = 0.0f64;
    for j in 0..step.mu.len() {
        let m = step.mu[j];
        signed += m;
        pos += m.max(0.0);
        neg += (-m).max(0.0);
        if coincidence[j] {
            coincidence_error = coincidence_error.max((m - bilap[j]).abs());
            continue;
        }
        match (step.lower_contact[j], step.upper_contact[j]) {
            (false, false) => {
                off_support_max = off_support_max.max(m.abs());
                if m.abs() > tols.support_tol {
                    support_violations += 1;
                }
            }
            (true, _) => {
                lower_sign = lower_sign.max(-m);
                if -m > tols.sign_tol {
                    sign_violations += 1;
                }
            }
            (false, true) => {
                upper_sign = upper_sign.max(m);
                if m > tols.sign_tol {
                    sign_violations += 1;
                }
            }
        }
    }
    let positive_mass = w * pos;
    let negative_mass = w * neg;
    StepMeasure {
        signed_mass: w * signed,
        total_variation: positive_mass + negative_mass,
        positive_mass,
        negative_mass,
        off_support_max,
        lower_sign_violation: lower_sign,
        upper_sign_violation: upper_sign,
        support_violation_count: support_violations,
        sign_violation_count: sign_violations,
        coincidence_error,
    }
}

/// Accumulate the measure statistics of a whole trajectory.
pub fn accumulate_bounds(traj: &Trajectory) -> MeasureReport {
    accumulate_bounds_with(traj, &ReportTols::default())
}

pub fn accumulate_bounds_with(traj: &Trajectory, tols: &ReportTols) -> MeasureReport {
    let pair = traj.pair();
    let per_step: Vec<StepMeasure> = traj
        .step_results()
        .iter()
        .map(|s| verify_structure(pair, s, tols))
        .collect();
    let tau = traj.tau();
    let cumulative_tv2 = tau
        * per_step
            .iter()
            .map(|m| m.total_variation * m.total_variation)
            .sum::<f64>();
    let cumulative_signed2 = tau
        * per_step
            .iter()
            .map(|m| m.signed_mass * m.signed_mass)
            .sum::<f64>();
    let sup_bilap = pair.sup_bilap_lower_on_coincidence();
    let bound_rhs =
        REPORT_CONSTANT * traj.initial_energy() + traj.horizon() * sup_bilap * sup_bilap;
    MeasureReport {
        max_off_support: per_step
            .iter()
            .map(|m| m.off_support_max)
            .fold(0.0, f64::max),
        max_coincidence_error: per_step
            .iter()
            .map(|m| m.coincidence_error)
            .fold(0.0, f64::max),
        per_step,
        cumulative_tv2,
        cumulative_signed2,
        bound_rhs,
        sup_bilaplacian_lower_on_coincidence: sup_bilap,
    }
}

/// All second central differences of `u` per node: the axis-aligned ones
/// plus, in 2D, the mixed four-point difference. Boundary neighbors take
/// the value 0 under the clamped convention.
pub fn second_differences(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = grid.node_count();
    let dim = grid.dimension();
    let res = grid.resolutions();
    let h = grid.spacings();
    let at = |m: [isize; 2]| -> f64 {
        for a in 0..dim {
            if m[a] < 0 || m[a] >= res[a] as isize {
                return 0.0;
            }
        }
        u[grid.flat_index(&[m[0] as usize, if dim == 2 { m[1] as usize } else { 0 }])]
    };
    let mut out = vec![0.0; n];
    for flat in 0..n {
        let mi = grid.multi_index(flat);
        let m = [mi[0] as isize, mi[1] as isize];
        let mut worst = 0.0f64;
        for axis in 0..dim {
            let mut lo = m;
            lo[axis] -= 1;
            let mut hi = m;
            hi[axis] += 1;
            let d = (at(lo) - 2.0 * at(m) + at(hi)) / (h[axis] * h[axis]);
            worst = worst.max(d.abs());
        }
        if dim == 2 {
            let pp = at([m[0] + 1, m[1] + 1]);
            let pm = at([m[0] + 1, m[1] - 1]);
            let mp = at([m[0] - 1, m[1] + 1]);
            let mm = at([m[0] - 1, m[1] - 1]);
            let d = (pp - pm - mp + mm) / (4.0 * h[0] * h[1]);
            worst = worst.max(d.abs());
        }
        out[flat] = worst;
    }
    out
}

/// Sup norm of all second central differences.
pub fn second_difference_sup(grid: &Grid, u: &[f64]) -> f64 {
    second_differences(grid, u)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Regularity statistics of a trajectory.
pub fn regularity_report(traj: &Trajectory) -> RegularityReport {
    let sups: Vec<f64> = traj
        .states()
        .iter()
        .skip(1)
        .map(|u| second_difference_sup(traj.grid(), u))
        .collect();
    let cumulative = traj.tau() * sups.iter().map(|s| s * s).sum::<f64>();
    RegularityReport {
        second_difference_sup: sups,
        cumulative_d2_sup2: cumulative,
        holder_quarter: traj.holder_quotient(0.25),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{assemble_biharmonic, build_grid};
    use crate::obstacles::{sample_obstacles, ObstacleSource};
    use crate::oracle::{enumerate_step, NodeState};
    use crate::stepper::{solve_constrained, StepOptions};
    use crate::flow::run_flow;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unconstrained_step_is_stationary() {
        let grid = build_grid(1, &[1.0], &[8]).unwrap();
        let b = assemble_biharmonic(&grid);
        let f = |_: &[f64]| -1e6;
        let g = |_: &[f64]| 1e6;
        let pair = sample_obstacles(
            &grid,
            &ObstacleSource::Analytic(&f),
            &ObstacleSource::Analytic(&g),
        )
        .unwrap();
        let u0: Vec<f64> = (0..8).map(|j| (j as f64).sin() * 0.3).collect();
        let opts = StepOptions {
            tau: 0.01,
            ..Default::default()
        };
        let res = solve_constrained(&grid, &b, &pair, &u0, &opts).unwrap();
        let mu = residual_measure(&b, &res);
        assert!(mu.iter().all(|m| m.abs() <= 1e-9));
        let report = verify_structure(&pair, &res, &ReportTols::default());
        assert_eq!(report.support_violation_count, 0);
        assert_eq!(report.sign_violation_count, 0);
        assert_eq!(report.coincidence_error, 0.0);
        // exact decomposition of the total variation
        assert_eq!(
            report.total_variation,
            report.positive_mass + report.negative_mass
        );
        assert!(report.signed_mass.abs() <= report.total_variation);
    }

    #[test]
    fn structure_matches_oracle_on_random_tiny_instances() {
        let grid = build_grid(1, &[1.0], &[5]).unwrap();
        let b = assemble_biharmonic(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let f: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.1)).collect();
            let g: Vec<f64> = f.iter().map(|v| v + rng.gen_range(0.05..0.7)).collect();
            let total = grid.full_node_count();
            let mut f_full = vec![-1.0; total];
            let mut g_full = vec![1.0; total];
            for k in 0..total {
                if let Some(i) = grid.full_to_interior(k) {
                    f_full[k] = f[i];
                    g_full[k] = g[i];
                }
            }
            let pair = sample_obstacles(
                &grid,
                &ObstacleSource::FullValues(&f_full),
                &ObstacleSource::FullValues(&g_full),
            )
            .unwrap();
            let u_prev =
                pair.project_to_box(&(0..5).map(|_| rng.gen_range(-0.6..0.6)).collect::<Vec<_>>());
            let tau = rng.gen_range(1e-3..1e-1);
            let opts = StepOptions {
                tau,
                ..Default::default()
            };
            let res = solve_constrained(&grid, &b, &pair, &u_prev, &opts).unwrap();
            let oracle = enumerate_step(&grid, &b, &pair, &u_prev, tau).unwrap();
            if oracle.degenerate {
                continue;
            }
            for j in 0..5 {
                match oracle.node_states[j] {
                    NodeState::Lower => assert!(res.lower_contact[j]),
                    NodeState::Upper => assert!(res.upper_contact[j]),
                    NodeState::Free => {
                        assert!(!res.lower_contact[j] && !res.upper_contact[j])
                    }
                }
                assert!((res.mu[j] - oracle.multipliers[j]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn zero_trajectory_accumulates_nothing() {
        let grid = build_grid(1, &[1.0], &[6]).unwrap();
        let b = assemble_biharmonic(&grid);
        let f = |_: &[f64]| -1.0;
        let g = |_: &[f64]| 1.0;
        let pair = sample_obstacles(
            &grid,
            &ObstacleSource::Analytic(&f),
            &ObstacleSource::Analytic(&g),
        )
        .unwrap();
        let traj = run_flow(
            &grid,
            &b,
            &pair,
            &vec![0.0; 6],
            0.5,
            4,
            &StepOptions::default(),
        )
        .unwrap();
        let report = accumulate_bounds(&traj);
        assert_eq!(report.cumulative_tv2, 0.0);
        assert_eq!(report.cumulative_signed2, 0.0);
        assert_eq!(report.max_off_support, 0.0);
        let reg = regularity_report(&traj);
        assert_eq!(reg.cumulative_d2_sup2, 0.0);
    }

    #[test]
    fn second_difference_hand_values() {
        let grid = build_grid(1, &[1.0], &[3]).unwrap();
        assert_eq!(second_difference_sup(&grid, &[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(second_difference_sup(&grid, &[0.0, 1.0, 0.0]), 32.0);
    }

    #[test]
    fn second_difference_recovers_analytic_curvature() {
        // u = x^2 has exact second difference 2 away from the right
        // boundary, where the zero boundary value bites.
        let grid = build_grid(1, &[1.0], &[40]).unwrap();
        let u: Vec<f64> = (0..40)
            .map(|j| {
                let x = grid.coords(j)[0];
                x * x
            })
            .collect();
        let d2 = second_differences(&grid, &u);
        for j in 1..36 {
            assert!((d2[j] - 2.0).abs() < 1e-9, "node {j}: {}", d2[j]);
        }
    }

    #[test]
    fn mixed_second_difference_detected_in_2d() {
        let grid = build_grid(2, &[1.0, 1.0], &[8, 8]).unwrap();
        // u = x y has zero axis-aligned second differences and mixed
        // derivative 1 away from the boundary.
        let u: Vec<f64> = (0..grid.node_count())
            .map(|j| {
                let c = grid.coords(j);
                c[0] * c[1]
            })
            .collect();
        let d2 = second_differences(&grid, &u);
        let center = grid.flat_index(&[4, 4]);
        assert!((d2[center] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cumulative_statistic_is_stable_under_refinement() {
        // tiny coincidence-free contact instance
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
                0.2 * 16.0 * x * x * (1.0 - x) * (1.0 - x)
            })
            .collect();
        let u0 = pair.project_to_box(&u0);
        let mut stats = Vec::new();
        for n in [4usize, 8] {
            let traj =
                run_flow(&grid, &b, &pair, &u0, 0.4, n, &StepOptions::default()).unwrap();
            stats.push(accumulate_bounds(&traj).cumulative_tv2);
        }
        assert!(stats[0] > 0.0);
        let ratio = stats[1].max(stats[0]) / stats[1].min(stats[0]);
        assert!(ratio <= 2.0, "ratio {ratio}");
    }
}
