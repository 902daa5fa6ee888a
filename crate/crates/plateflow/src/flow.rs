//! The full minimizing-movements trajectory and its interpolants.

use serde::Serialize;

use crate::error::FlowError;
use crate::grid::{DiscreteOperator, Grid};
use crate::obstacles::ObstaclePair;
use crate::stepper::{quad_energy, StepEngine, StepMethod, StepOptions, StepResult};

/// A completed run `u_0, ..., u_n` with time step `tau = T / n`.
///
/// Trajectories are self-contained: they own the grid, obstacle pair, and
/// biharmonic operator they were produced with, so diagnostics need no
/// external state. Finished trajectories are immutable and shareable.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    pair: ObstaclePair,
    b_op: DiscreteOperator,
    tau: f64,
    horizon: f64,
    states: Vec<Vec<f64>>,
    step_results: Vec<StepResult>,
    energies: Vec<f64>,
    initial_energy: f64,
    /// Running value of `tau * sum |V_i|_h^2`.
    cumulative_velocity2: f64,
    /// Whether projecting the supplied initial datum into the box changed it.
    initial_projected: bool,
}

/// Energy bookkeeping of a completed trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    pub energies: Vec<f64>,
    /// `tau * sum_i |V_i|_h^2`.
    pub velocity_square_sum: f64,
    pub sup_energy: f64,
    /// The dissipation bound `2 E(u_0)`.
    pub bound_two_e0: f64,
    /// Prefix indices where the running velocity sum exceeded the bound;
    /// must be empty.
    pub prefix_violations: Vec<usize>,
    /// Step indices where the energy increased beyond tolerance; must be
    /// empty.
    pub energy_increases: Vec<usize>,
}

const DISSIPATION_SLACK: f64 = 1e-9;

/// Run the minimizing-movements scheme from `u0` over `n` steps of size
/// `T / n`, using the step method selected in `opts`.
pub fn run_flow(
    grid: &Grid,
    b_op: &DiscreteOperator,
    pair: &ObstaclePair,
    u0: &[f64],
    horizon: f64,
    n: usize,
    opts: &StepOptions,
) -> Result<Trajectory, FlowError> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(FlowError::NonPositiveHorizon(horizon));
    }
    if n == 0 {
        return Err(FlowError::ZeroSteps);
    }
    grid.check_size(u0)?;
    let tau = horizon / n as f64;
    let mut opts = opts.clone();
    opts.tau = tau;

    let (u0, initial_projected) = pair.clamp_initial(u0);
    let engine = StepEngine::new(grid, b_op, tau);
    let initial_energy = quad_energy(b_op, &u0);

    let mut states = Vec::with_capacity(n + 1);
    let mut energies = Vec::with_capacity(n + 1);
    let mut step_results = Vec::with_capacity(n);
    let mut cumulative_velocity2 = 0.0;
    states.push(u0);
    energies.push(initial_energy);

    for index in 1..=n {
        let prev = states.last().unwrap();
        let result = match opts.method {
            StepMethod::Constrained => engine.constrained(pair, prev, &opts),
            StepMethod::Penalized => engine.penalized(pair, prev, &opts),
        }
        .map_err(|source| FlowError::Step { index, source })?;
        let v2: f64 = result.velocity.iter().map(|v| v * v).sum::<f64>()
            * grid.quadrature_weight();
        cumulative_velocity2 += tau * v2;
        states.push(result.u_new.clone());
        energies.push(result.energy_after);
        step_results.push(result);
    }

    Ok(Trajectory {
        grid: grid.clone(),
        pair: pair.clone(),
        b_op: b_op.clone(),
        tau,
        horizon,
        states,
        step_results,
        energies,
        initial_energy,
        cumulative_velocity2,
        initial_projected,
    })
}

impl Trajectory {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn pair(&self) -> &ObstaclePair {
        &self.pair
    }

    pub fn biharmonic(&self) -> &DiscreteOperator {
        &self.b_op
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step_count(&self) -> usize {
        self.step_results.len()
    }

    /// States `u_0, ..., u_n`.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn step_results(&self) -> &[StepResult] {
        &self.step_results
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_energy
    }

    pub fn cumulative_velocity2(&self) -> f64 {
        self.cumulative_velocity2
    }

    pub fn initial_was_projected(&self) -> bool {
        self.initial_projected
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 * self.tau
    }

    /// Index of the interval `((i-1) tau, i tau]` owning `t`, with exact
    /// timestamps detected up to rounding noise in `t / tau`.
    fn owning_interval(&self, t: f64) -> (usize, bool) {
        let n = self.step_count();
        let ratio = t / self.tau;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * (1.0 + ratio.abs()) {
            let i = (nearest as usize).min(n);
            return (i, true);
        }
        ((ratio.ceil() as usize).clamp(1, n), false)
    }

    /// Piecewise-linear interpolant: `u_{i-1} + (t - (i-1) tau) V_i` on the
    /// owning subinterval. Exact states are returned at the timestamps.
    pub fn interpolate_linear(&self, t: f64) -> Result<Vec<f64>, FlowError> {
        if t < 0.0 || t > self.horizon {
            return Err(FlowError::TimeOutOfRange {
                t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        let (i, exact) = self.owning_interval(t);
        if exact {
            return Ok(self.states[i].clone());
        }
        let result = self.step_results[i - 1].velocity.iter();
        let offset = t - self.timestamp(i - 1);
        Ok(self.states[i - 1]
            .iter()
            .zip(result)
            .map(|(u, v)| u + offset * v)
            .collect())
    }

    /// Piecewise-constant interpolant on `((i-1) tau, i tau]`: the pair
    /// `(u_i, V_i)`.
    pub fn interpolate_constant(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
        if t <= 0.0 || t > self.horizon {
            return Err(FlowError::TimeOutOfRange {
                t,
                lo: 0.0,
                hi: self.horizon,
            });
        }
        let (i, exact) = self.owning_interval(t);
        let i = if exact { i.max(1) } else { i };
        Ok((
            self.states[i].clone(),
            self.step_results[i - 1].velocity.clone(),
        ))
    }

    /// Energy series, cumulative velocity statistic, and the `2 E(u_0)`
    /// bound with any prefix violations.
    pub fn dissipation_report(&self) -> DissipationReport {
        let bound = 2.0 * self.initial_energy;
        let mut prefix_violations = Vec::new();
        let mut running = 0.0;
        let w = self.grid.quadrature_weight();
        for (i, result) in self.step_results.iter().enumerate() {
            let v2: f64 = result.velocity.iter().map(|v| v * v).sum::<f64>() * w;
            running += self.tau * v2;
            if running > bound + DISSIPATION_SLACK {
                prefix_violations.push(i + 1);
            }
        }
        let mut energy_increases = Vec::new();
        for i in 1..self.energies.len() {
            if self.energies[i] > self.energies[i - 1] + DISSIPATION_SLACK {
                energy_increases.push(i);
            }
        }
        DissipationReport {
            energies: self.energies.clone(),
            velocity_square_sum: self.cumulative_velocity2,
            sup_energy: self.energies.iter().copied().fold(0.0, f64::max),
            bound_two_e0: bound,
            prefix_violations,
            energy_increases,
        }
    }

    /// Largest quotient `|u(t) - u(s)|_h / |t - s|^alpha` over state pairs.
    pub fn holder_quotient(&self, alpha: f64) -> f64 {
        let w = self.grid.quadrature_weight();
        let mut q: f64 = 0.0;
        for i in 0..self.states.len() {
            for j in (i + 1)..self.states.len() {
                let d2: f64 = self.states[i]
                    .iter()
                    .zip(&self.states[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    * w;
                let dt = self.timestamp(j) - self.timestamp(i);
                q = q.max(d2.sqrt() / dt.powf(alpha));
            }
        }
        q
    }
}
