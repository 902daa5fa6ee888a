//! One implicit time step: the box-constrained minimization solved by a
//! primal-dual active set method, and its penalty-regularized variant
//! solved by a damped semismooth Newton method.
//!
//! Both solvers work with the density-normalized step matrix
//! `A = B/w + I/tau`, so the per-node dual variable is directly the
//! residual density `mu = B u / w + V`.

use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use crate::error::SolveError;
use crate::grid::{DiscreteOperator, Grid};
use crate::linalg::{BandedCholesky, DiagShift, SymSparse};
use crate::obstacles::{ObstaclePair, PenaltyParams};

/// Which per-step problem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMethod {
    Constrained,
    Penalized,
}

/// Solver options for one time step.
#[derive(Debug, Clone)]
pub struct StepOptions {
    pub method: StepMethod,
    /// Time-step size `tau = T / n`.
    pub tau: f64,
    /// Penalty parameters; required by the penalized method.
    pub penalty: Option<PenaltyParams>,
    /// Complementarity residual tolerance.
    pub tol_kkt: f64,
    /// Nonlinear residual tolerance for the penalized solve.
    pub tol_newton: f64,
    pub max_iter: usize,
    /// Contact classification tolerance, in units of u.
    pub active_tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            method: StepMethod::Constrained,
            tau: 1e-2,
            penalty: None,
            tol_kkt: 1e-10,
            tol_newton: 1e-11,
            max_iter: 200,
            active_tol: 1e-9,
        }
    }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub u_new: Vec<f64>,
    /// Discrete velocity `(u_new - u_prev) / tau`.
    pub velocity: Vec<f64>,
    /// Residual measure density `B u_new / w + V`.
    pub mu: Vec<f64>,
    pub lower_contact: Vec<bool>,
    pub upper_contact: Vec<bool>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub energy_before: f64,
    pub energy_after: f64,
}

/// One-sided quadratic penalty: `lambda^2 / rho` for negative arguments,
/// zero otherwise (the value at zero is fixed by continuity).
pub fn gamma(lambda: f64, rho: f64) -> f64 {
    assert!(rho > 0.0, "penalty strength must be positive");
    if lambda < 0.0 {
        lambda * lambda / rho
    } else {
        0.0
    }
}

/// Derivative of [`gamma`]: `2 lambda / rho` for negative arguments, zero
/// otherwise (subdifferential selection 0 at the kink).
pub fn beta(lambda: f64, rho: f64) -> f64 {
    assert!(rho > 0.0, "penalty strength must be positive");
    if lambda < 0.0 {
        2.0 * lambda / rho
    } else {
        0.0
    }
}

/// Classify contact sets: a node touches the lower obstacle when
/// `u_j - f_j <= active_tol`, symmetrically for the upper one.
pub fn classify_contacts(
    pair: &ObstaclePair,
    u: &[f64],
    active_tol: f64,
) -> (Vec<bool>, Vec<bool>) {
    let lower = u
        .iter()
        .zip(pair.lower())
        .map(|(&v, &f)| v - f <= active_tol)
        .collect();
    let upper = u
        .iter()
        .zip(pair.upper())
        .map(|(&v, &g)| g - v <= active_tol)
        .collect();
    (lower, upper)
}

/// `1/2 u^T B u`; agrees with the Laplacian-based energy by construction.
pub(crate) fn quad_energy(b_op: &DiscreteOperator, u: &[f64]) -> f64 {
    let bu = b_op.apply(u);
    0.5 * u.iter().zip(&bu).map(|(a, b)| a * b).sum::<f64>()
}

/// Residual measure density `B u / w + v`, shared by the steppers and the
/// diagnostics so every consumer sees the same vector.
pub(crate) fn residual_density(b_op: &DiscreteOperator, u: &[f64], velocity: &[f64]) -> Vec<f64> {
    let mut mu = b_op.apply_density(u);
    for (m, v) in mu.iter_mut().zip(velocity) {
        *m += v;
    }
    mu
}

/// Smallest residual magnitude resolvable in f64 at the operator's scale;
/// tolerances below it cannot be met and are clamped up to it.
fn residual_floor(row_l1: f64, bw: usize, u_inf: f64, rhs_inf: f64) -> f64 {
    let c = 64.0 + 2.0 * bw as f64;
    c * f64::EPSILON * (row_l1 * u_inf + rhs_inf)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Shared per-trajectory state: the density-normalized step matrix and a few
/// cached scalars.
pub(crate) struct StepEngine<'a> {
    grid: &'a Grid,
    b_op: &'a DiscreteOperator,
    a_hat: SymSparse,
    tau: f64,
    row_l1: f64,
    bandwidth: usize,
}

impl<'a> StepEngine<'a> {
    pub(crate) fn new(grid: &'a Grid, b_op: &'a DiscreteOperator, tau: f64) -> StepEngine<'a> {
        assert!(tau > 0.0, "time step must be positive");
        let a_hat = b_op.density_matrix_shifted(1.0 / tau);
        let row_l1 = a_hat.max_row_l1();
        let bandwidth = a_hat.bandwidth();
        StepEngine {
            grid,
            b_op,
            a_hat,
            tau,
            row_l1,
            bandwidth,
        }
    }

    fn sets_signature(lower: &[bool], upper: &[bool]) -> u64 {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        lower.hash(&mut hasher);
        upper.hash(&mut hasher);
        hasher.finish()
    }

    /// Solve the reduced stationarity system on the free set, holding every
    /// other node at its assigned value. Returns false when the free set is
    /// empty (nothing to solve).
    fn solve_reduced(&self, free: &[usize], b_hat: &[f64], u: &mut [f64]) -> Result<bool, SolveError> {
        if free.is_empty() {
            return Ok(false);
        }
        let chol = BandedCholesky::factor_submatrix(&self.a_hat, free, 0.0)?;
        let mut rhs: Vec<f64> = free
            .iter()
            .map(|&i| {
                let mut r = b_hat[i];
                for (j, v) in self.a_hat.row(i) {
                    if free.binary_search(&j).is_err() {
                        r -= v * u[j];
                    }
                }
                r
            })
            .collect();
        chol.solve_in_place(&mut rhs);
        for (&i, &x) in free.iter().zip(&rhs) {
            u[i] = x;
        }
        // One refinement pass keeps the free-node stationarity residual near
        // the f64 floor.
        let au = self.a_hat.apply(u);
        let mut corr: Vec<f64> = free.iter().map(|&i| b_hat[i] - au[i]).collect();
        chol.solve_in_place(&mut corr);
        for (&i, &d) in free.iter().zip(&corr) {
            u[i] += d;
        }
        Ok(true)
    }

    fn merit(&self, u: &[f64], b_hat: &[f64]) -> f64 {
        let au = self.a_hat.apply(u);
        let mut m = 0.0;
        for i in 0..u.len() {
            m += 0.5 * u[i] * au[i] - b_hat[i] * u[i];
        }
        m
    }

    /// Monotone projected-gradient sweep used to break active-set cycles.
    /// Runs until the induced classification is one not seen before, or a
    /// sweep cap is hit; returns the classification.
    fn projected_gradient_reset(
        &self,
        pair: &ObstaclePair,
        b_hat: &[f64],
        u: &mut Vec<f64>,
        pinned: &[bool],
        active_tol: f64,
        seen: &HashSet<u64>,
    ) -> (Vec<bool>, Vec<bool>) {
        let step0 = 1.0 / self.row_l1.max(1.0 / self.tau);
        let classify = |u: &[f64]| {
            let (mut lo, mut up) = classify_contacts(pair, u, active_tol);
            for j in 0..lo.len() {
                if pinned[j] {
                    lo[j] = false;
                    up[j] = false;
                }
            }
            (lo, up)
        };
        *u = pair.project_to_box(u);
        let mut merit = self.merit(u, b_hat);
        for _ in 0..64 {
            let au = self.a_hat.apply(u);
            let grad: Vec<f64> = au.iter().zip(b_hat).map(|(a, b)| a - b).collect();
            let mut t = step0;
            let mut accepted = false;
            while t > 1e-18 * step0 {
                let trial: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - t * g).collect();
                let trial = pair.project_to_box(&trial);
                let m_trial = self.merit(&trial, b_hat);
                if m_trial < merit {
                    *u = trial;
                    merit = m_trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            let (lo, up) = classify(u);
            if !seen.contains(&Self::sets_signature(&lo, &up)) {
                return (lo, up);
            }
        }
        classify(u)
    }

    pub(crate) fn constrained(
        &self,
        pair: &ObstaclePair,
        u_prev: &[f64],
        opts: &StepOptions,
    ) -> Result<StepResult, SolveError> {
        self.grid.check_size(u_prev)?;
        let n = u_prev.len();
        for j in 0..n {
            let (lo, hi) = (pair.lower()[j], pair.upper()[j]);
            if u_prev[j] < lo - opts.active_tol || u_prev[j] > hi + opts.active_tol {
                return Err(SolveError::StateOutsideBox {
                    node: j,
                    value: u_prev[j],
                    lower: lo,
                    upper: hi,
                });
            }
        }
        let b_hat: Vec<f64> = u_prev.iter().map(|v| v / self.tau).collect();
        let pinned: Vec<bool> = pair.coincidence_mask().to_vec();
        // Warm start from the previous state's contacts.
        let (mut lower_set, mut upper_set) = classify_contacts(pair, u_prev, opts.active_tol);
        for j in 0..n {
            if pinned[j] {
                lower_set[j] = false;
                upper_set[j] = false;
            } else if lower_set[j] && upper_set[j] {
                upper_set[j] = false;
            }
        }
        let mut seen = HashSet::new();
        seen.insert(Self::sets_signature(&lower_set, &upper_set));

        let mut u = vec![0.0; n];
        let mut best: Option<(f64, Vec<f64>)> = None;
        let switching_weight = 1.0 / self.tau;

        for iteration in 1..=opts.max_iter {
            let mut free = Vec::with_capacity(n);
            for j in 0..n {
                if pinned[j] {
                    u[j] = pair.lower()[j];
                } else if lower_set[j] {
                    u[j] = pair.lower()[j];
                } else if upper_set[j] {
                    u[j] = pair.upper()[j];
                } else {
                    free.push(j);
                }
            }
            self.solve_reduced(&free, &b_hat, &mut u)?;
            let au = self.a_hat.apply(&u);
            let mu: Vec<f64> = au.iter().zip(&b_hat).map(|(a, b)| a - b).collect();

            let mut new_lower = vec![false; n];
            let mut new_upper = vec![false; n];
            for j in 0..n {
                if pinned[j] {
                    continue;
                }
                let lower_test = mu[j] + switching_weight * (pair.lower()[j] - u[j]);
                let upper_test = mu[j] + switching_weight * (pair.upper()[j] - u[j]);
                new_lower[j] = lower_test > 0.0;
                new_upper[j] = upper_test < 0.0;
            }

            let residual = kkt_residual_of(&u, &mu, pair, &pinned, &lower_set, &upper_set);
            if best.as_ref().map_or(true, |(r, _)| residual < *r) {
                best = Some((residual, u.clone()));
            }

            if new_lower == lower_set && new_upper == upper_set {
                let floor =
                    residual_floor(self.row_l1, self.bandwidth, max_abs(&u), max_abs(&b_hat));
                if residual <= opts.tol_kkt.max(floor) {
                    return Ok(self.finish(pair, u_prev, u, iteration, opts));
                }
            }

            let signature = Self::sets_signature(&new_lower, &new_upper);
            if seen.contains(&signature) && (new_lower != lower_set || new_upper != upper_set) {
                // Cycle: fall back to a monotone projected-gradient sweep and
                // resume from the classification it lands on.
                let (lo, up) = self.projected_gradient_reset(
                    pair,
                    &b_hat,
                    &mut u,
                    &pinned,
                    opts.active_tol,
                    &seen,
                );
                lower_set = lo;
                upper_set = up;
            } else {
                lower_set = new_lower;
                upper_set = new_upper;
            }
            seen.insert(Self::sets_signature(&lower_set, &upper_set));
        }

        let (residual, best_u) = best.unwrap_or((f64::INFINITY, u));
        Err(SolveError::NoConvergence {
            iterations: opts.max_iter,
            residual,
            best: best_u,
        })
    }

    pub(crate) fn penalized(
        &self,
        pair: &ObstaclePair,
        u_prev: &[f64],
        opts: &StepOptions,
    ) -> Result<StepResult, SolveError> {
        self.grid.check_size(u_prev)?;
        let penalty = opts.penalty.ok_or(SolveError::MissingPenalty)?;
        let rho = penalty.rho();
        let n = u_prev.len();
        let shifted_lower: Vec<f64> = pair
            .lower()
            .iter()
            .map(|f| f - penalty.epsilon())
            .collect();
        let upper = pair.upper();
        let b_hat: Vec<f64> = u_prev.iter().map(|v| v / self.tau).collect();
        let all: Vec<usize> = (0..n).collect();

        let merit = |w: &[f64]| -> f64 {
            let mut m = self.merit(w, &b_hat);
            for j in 0..n {
                m += gamma(w[j] - shifted_lower[j], rho) + gamma(upper[j] - w[j], rho);
            }
            m
        };
        let force = |w: &[f64], out: &mut Vec<f64>| {
            out.clear();
            for j in 0..n {
                let mut p = 0.0;
                if w[j] < shifted_lower[j] {
                    p += 2.0 * (w[j] - shifted_lower[j]) / rho;
                }
                if w[j] > upper[j] {
                    p += 2.0 * (w[j] - upper[j]) / rho;
                }
                out.push(p);
            }
        };

        let mut w = u_prev.to_vec();
        let mut merit_w = merit(&w);
        let mut pforce = Vec::with_capacity(n);
        let mut best: Option<(f64, Vec<f64>)> = None;

        for iteration in 1..=opts.max_iter {
            let aw = self.a_hat.apply(&w);
            force(&w, &mut pforce);
            let mut residual = 0.0f64;
            for j in 0..n {
                residual = residual.max((aw[j] - b_hat[j] + pforce[j]).abs());
            }
            if best.as_ref().map_or(true, |(r, _)| residual < *r) {
                best = Some((residual, w.clone()));
            }
            let floor = residual_floor(
                self.row_l1 + 4.0 / rho,
                self.bandwidth,
                max_abs(&w),
                max_abs(&b_hat),
            );
            if residual <= opts.tol_newton.max(floor) {
                return Ok(self.finish_penalized(
                    pair,
                    &shifted_lower,
                    u_prev,
                    w,
                    iteration,
                    residual,
                    opts,
                ));
            }

            // Newton step on the current piecewise-linear piece, posed for
            // the new iterate directly: (A + D) w+ = b + (2/rho) bound, which
            // reduces to the plain linear step when no penalty is active.
            let mut diag = vec![0.0; n];
            let mut rhs = b_hat.clone();
            for j in 0..n {
                if w[j] < shifted_lower[j] {
                    diag[j] += 2.0 / rho;
                    rhs[j] += 2.0 / rho * shifted_lower[j];
                }
                if w[j] > upper[j] {
                    diag[j] += 2.0 / rho;
                    rhs[j] += 2.0 / rho * upper[j];
                }
            }
            let chol =
                BandedCholesky::factor_submatrix_diag(&self.a_hat, &all, &DiagShift::PerNode(&diag))?;
            let mut w_next = rhs;
            chol.solve_in_place(&mut w_next);

            // Backtracking on the merit functional, halving down to 2^-30.
            let mut alpha = 1.0f64;
            let mut accepted = false;
            while alpha >= 2f64.powi(-30) {
                let trial: Vec<f64> = if alpha == 1.0 {
                    w_next.clone()
                } else {
                    w.iter()
                        .zip(&w_next)
                        .map(|(a, b)| a + alpha * (b - a))
                        .collect()
                };
                let m_trial = merit(&trial);
                if m_trial <= merit_w {
                    // Equal merit with an unchanged residual means stagnation;
                    // treat a strict decrease as progress.
                    accepted = m_trial < merit_w || trial != w;
                    if accepted {
                        w = trial;
                        merit_w = m_trial;
                    }
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                let (residual, best_w) = best.unwrap();
                return Err(SolveError::NoConvergence {
                    iterations: iteration,
                    residual,
                    best: best_w,
                });
            }
        }

        let (residual, best_w) = best.unwrap();
        Err(SolveError::NoConvergence {
            iterations: opts.max_iter,
            residual,
            best: best_w,
        })
    }

    fn finish(
        &self,
        pair: &ObstaclePair,
        u_prev: &[f64],
        u: Vec<f64>,
        iterations: usize,
        opts: &StepOptions,
    ) -> StepResult {
        let velocity: Vec<f64> = u
            .iter()
            .zip(u_prev)
            .map(|(a, b)| (a - b) / self.tau)
            .collect();
        let mu = residual_density(self.b_op, &u, &velocity);
        let (mut lower_contact, mut upper_contact) =
            classify_contacts(pair, &u, opts.active_tol);
        for j in 0..u.len() {
            if pair.coincidence_mask()[j] {
                lower_contact[j] = true;
                upper_contact[j] = true;
            }
        }
        let pinned = pair.coincidence_mask();
        let lower_set: Vec<bool> = lower_contact
            .iter()
            .zip(pinned)
            .map(|(&l, &p)| l && !p)
            .collect();
        let upper_set: Vec<bool> = upper_contact
            .iter()
            .zip(pinned)
            .map(|(&l, &p)| l && !p)
            .collect();
        let kkt_residual =
            kkt_residual_of(&u, &mu, pair, pinned, &lower_set, &upper_set);
        StepResult {
            energy_before: quad_energy(self.b_op, u_prev),
            energy_after: quad_energy(self.b_op, &u),
            u_new: u,
            velocity,
            mu,
            lower_contact,
            upper_contact,
            iterations,
            kkt_residual,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_penalized(
        &self,
        pair: &ObstaclePair,
        shifted_lower: &[f64],
        u_prev: &[f64],
        w: Vec<f64>,
        iterations: usize,
        residual: f64,
        opts: &StepOptions,
    ) -> StepResult {
        let velocity: Vec<f64> = w
            .iter()
            .zip(u_prev)
            .map(|(a, b)| (a - b) / self.tau)
            .collect();
        let mu = residual_density(self.b_op, &w, &velocity);
        // Contacts are measured against the shifted lower obstacle the
        // penalized problem actually uses.
        let lower_contact: Vec<bool> = w
            .iter()
            .zip(shifted_lower)
            .map(|(&v, &f)| v - f <= opts.active_tol)
            .collect();
        let upper_contact: Vec<bool> = w
            .iter()
            .zip(pair.upper())
            .map(|(&v, &g)| g - v <= opts.active_tol)
            .collect();
        StepResult {
            energy_before: quad_energy(self.b_op, u_prev),
            energy_after: quad_energy(self.b_op, &w),
            u_new: w,
            velocity,
            mu,
            lower_contact,
            upper_contact,
            iterations,
            kkt_residual: residual,
        }
    }
}

/// Worst violation of the complementarity system: stationarity on free
/// nodes, multiplier signs on contacts, and box feasibility.
fn kkt_residual_of(
    u: &[f64],
    mu: &[f64],
    pair: &ObstaclePair,
    pinned: &[bool],
    lower_set: &[bool],
    upper_set: &[bool],
) -> f64 {
    let mut r = 0.0f64;
    for j in 0..u.len() {
        r = r.max(pair.lower()[j] - u[j]).max(u[j] - pair.upper()[j]);
        if pinned[j] {
            continue; // multiplier sign is unconstrained on coincidence nodes
        }
        if lower_set[j] {
            r = r.max(-mu[j]);
        } else if upper_set[j] {
            r = r.max(mu[j]);
        } else {
            r = r.max(mu[j].abs());
        }
    }
    r
}

/// Solve one constrained step `min E(u) + |u - u_prev|^2 / (2 tau)` over the
/// box `f <= u <= g`.
pub fn solve_constrained(
    grid: &Grid,
    b_op: &DiscreteOperator,
    pair: &ObstaclePair,
    u_prev: &[f64],
    opts: &StepOptions,
) -> Result<StepResult, SolveError> {
    StepEngine::new(grid, b_op, opts.tau).constrained(pair, u_prev, opts)
}

/// Solve one penalized step: the semilinear system
/// `B w / w_q + (w - u_prev)/tau + beta(w - f_eps) - beta(g - w) = 0`.
pub fn solve_penalized(
    grid: &Grid,
    b_op: &DiscreteOperator,
    pair: &ObstaclePair,
    u_prev: &[f64],
    opts: &StepOptions,
) -> Result<StepResult, SolveError> {
    StepEngine::new(grid, b_op, opts.tau).penalized(pair, u_prev, opts)
}
