//! Brute-force reference solver for the per-step box-constrained problem on
//! tiny grids. Enumerates all per-node label assignments, solves each
//! reduced stationarity system densely, and keeps the assignment that passes
//! feasibility and multiplier-sign checks. Used to certify the production
//! solver before any acceptance run.

use crate::error::OracleError;
use crate::grid::{DiscreteOperator, Grid};
use crate::linalg::solve_dense_full_pivot;
use crate::obstacles::ObstaclePair;

/// Largest interior node count the enumeration accepts (3^7 labelings).
pub const MAX_ORACLE_NODES: usize = 7;

/// Per-node state in the enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Lower,
    Free,
    Upper,
}

/// Certified solution of one step problem.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub u: Vec<f64>,
    pub node_states: Vec<NodeState>,
    /// Residual density at the solution; the KKT multiplier pattern.
    pub multipliers: Vec<f64>,
    /// Objective value `E(u) + |u - u_prev|_h^2 / (2 tau)`.
    pub objective: f64,
    /// More than one labeling passed the checks (ties share the same u).
    pub degenerate: bool,
}

/// Feasibility and sign slack used when admitting a labeling.
const CHECK_TOL: f64 = 1e-9;

/// Exhaustively solve the step problem by trying every labeling in
/// lexicographic order (node 0 most significant; lower < free < upper).
pub fn enumerate_step(
    grid: &Grid,
    b_op: &DiscreteOperator,
    pair: &ObstaclePair,
    u_prev: &[f64],
    tau: f64,
) -> Result<OracleSolution, OracleError> {
    let n = grid.node_count();
    if n > MAX_ORACLE_NODES {
        return Err(OracleError::TooLarge {
            got: n,
            max: MAX_ORACLE_NODES,
        });
    }
    assert_eq!(u_prev.len(), n);
    assert!(tau > 0.0);

    let w = b_op.quadrature_weight();
    // Density-normalized dense step matrix A = B/w + I/tau.
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = b_op.entry(i, j) / w;
        }
        row[i] += 1.0 / tau;
    }
    let b_hat: Vec<f64> = u_prev.iter().map(|v| v / tau).collect();

    let total = 3usize.pow(n as u32);
    let mut found: Option<OracleSolution> = None;
    let mut degenerate = false;

    'labelings: for code in 0..total {
        let mut states = Vec::with_capacity(n);
        let mut rest = code;
        for _ in 0..n {
            let digit = rest / 3usize.pow((n - 1 - states.len()) as u32);
            rest -= digit * 3usize.pow((n - 1 - states.len()) as u32);
            states.push(match digit {
                0 => NodeState::Lower,
                1 => NodeState::Free,
                _ => NodeState::Upper,
            });
        }

        let mut u = vec![0.0; n];
        let mut free = Vec::new();
        for j in 0..n {
            match states[j] {
                NodeState::Lower => u[j] = pair.lower()[j],
                NodeState::Upper => u[j] = pair.upper()[j],
                NodeState::Free => free.push(j),
            }
        }
        if !free.is_empty() {
            let mut rows = Vec::with_capacity(free.len());
            let mut rhs = Vec::with_capacity(free.len());
            for &i in &free {
                let mut r = b_hat[i];
                let mut row = Vec::with_capacity(free.len());
                for j in 0..n {
                    if states[j] == NodeState::Free {
                        row.push(a[i][j]);
                    } else {
                        r -= a[i][j] * u[j];
                    }
                }
                rows.push(row);
                rhs.push(r);
            }
            let Some(x) = solve_dense_full_pivot(rows, rhs) else {
                return Err(OracleError::SingularSystem { labeling: code });
            };
            for (&j, &v) in free.iter().zip(&x) {
                u[j] = v;
            }
        }

        // Primal feasibility on free nodes, dual signs on labeled ones.
        let mut mu = vec![0.0; n];
        for i in 0..n {
            let mut r = -b_hat[i];
            for j in 0..n {
                r += a[i][j] * u[j];
            }
            mu[i] = r;
        }
        for j in 0..n {
            match states[j] {
                NodeState::Free => {
                    if u[j] < pair.lower()[j] - CHECK_TOL || u[j] > pair.upper()[j] + CHECK_TOL {
                        continue 'labelings;
                    }
                }
                NodeState::Lower => {
                    if mu[j] < -CHECK_TOL {
                        continue 'labelings;
                    }
                }
                NodeState::Upper => {
                    if mu[j] > CHECK_TOL {
                        continue 'labelings;
                    }
                }
            }
        }

        let objective = objective_of(b_op, &u, u_prev, tau);
        match &found {
            None => {
                found = Some(OracleSolution {
                    u,
                    node_states: states,
                    multipliers: mu,
                    objective,
                    degenerate: false,
                })
            }
            Some(first) => {
                degenerate = true;
                debug_assert!(
                    first
                        .u
                        .iter()
                        .zip(&u)
                        .all(|(a, b)| (a - b).abs() <= 1e-10 * (1.0 + a.abs())),
                    "tied labelings disagree on u"
                );
            }
        }
    }

    match found {
        Some(mut sol) => {
            sol.degenerate = degenerate;
            Ok(sol)
        }
        None => Err(OracleError::NoCandidate),
    }
}

/// Objective of the step problem, computed densely and independently of the
/// production solver path.
pub fn objective_of(b_op: &DiscreteOperator, u: &[f64], u_prev: &[f64], tau: f64) -> f64 {
    let n = u.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += u[i] * b_op.entry(i, j) * u[j];
        }
    }
    let w = b_op.quadrature_weight();
    let prox: f64 = u
        .iter()
        .zip(u_prev)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * w
        / (2.0 * tau);
    0.5 * quad + prox
}
