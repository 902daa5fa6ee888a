//! Obstacle pairs: sampling, validation, the epsilon shift of the lower
//! obstacle, and projection onto the admissible box.

use crate::error::ObstacleError;
use crate::grid::{assemble_biharmonic, Grid};

/// Where obstacle values come from: an analytic function evaluable anywhere
/// (presets), or explicit values over the full grid including the boundary
/// ring (files, bindings).
pub enum ObstacleSource<'a> {
    Analytic(&'a dyn Fn(&[f64]) -> f64),
    /// Row-major values over `resolution + 2` nodes per axis.
    FullValues(&'a [f64]),
}

/// Validity parameters for the penalized formulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams {
    epsilon: f64,
    rho: f64,
}

impl PenaltyParams {
    pub fn new(epsilon: f64, rho: f64) -> Result<PenaltyParams, ObstacleError> {
        if !(epsilon >= 0.0) {
            return Err(ObstacleError::NegativeEpsilon(epsilon));
        }
        if !(rho > 0.0) {
            return Err(ObstacleError::NonPositiveRho(rho));
        }
        Ok(PenaltyParams { epsilon, rho })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Validated lower/upper obstacle samples on a grid.
///
/// Interior samples must satisfy `f <= g`; the boundary-ring samples must
/// satisfy `f < 0 < g`. The coincidence mask records exact floating equality
/// of the sampled values, so presets that intend coincidence must produce
/// bitwise-identical values there.
#[derive(Debug, Clone)]
pub struct ObstaclePair {
    grid: Grid,
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_boundary: Vec<f64>,
    upper_boundary: Vec<f64>,
    coincidence: Vec<bool>,
    /// Density-normalized discrete bilaplacian of the lower obstacle,
    /// cached for the coincidence-set residual checks.
    bilaplacian_lower: Vec<f64>,
    sup_bilap_lower_on_coincidence: f64,
}

fn sample_full(grid: &Grid, source: &ObstacleSource) -> Result<Vec<f64>, ObstacleError> {
    let total = grid.full_node_count();
    match source {
        ObstacleSource::Analytic(f) => Ok((0..total)
            .map(|k| {
                let c = grid.full_coords(k);
                f(&c[..grid.dimension()])
            })
            .collect()),
        ObstacleSource::FullValues(vals) => {
            if vals.len() != total {
                return Err(ObstacleError::ShapeMismatch {
                    expected: total,
                    got: vals.len(),
                });
            }
            Ok(vals.to_vec())
        }
    }
}

/// Sample and validate an obstacle pair.
pub fn sample_obstacles(
    grid: &Grid,
    lower_source: &ObstacleSource,
    upper_source: &ObstacleSource,
) -> Result<ObstaclePair, ObstacleError> {
    let lower_full = sample_full(grid, lower_source)?;
    let upper_full = sample_full(grid, upper_source)?;
    let mut lower = Vec::with_capacity(grid.node_count());
    let mut upper = Vec::with_capacity(grid.node_count());
    let mut lower_boundary = Vec::new();
    let mut upper_boundary = Vec::new();
    for k in 0..grid.full_node_count() {
        let (fl, gu) = (lower_full[k], upper_full[k]);
        if !fl.is_finite() || !gu.is_finite() {
            return Err(ObstacleError::NonFinite { node: k });
        }
        if grid.full_index_is_boundary(k) {
            if !(fl < 0.0 && gu > 0.0) {
                return Err(ObstacleError::BoundarySign {
                    node: k,
                    lower: fl,
                    upper: gu,
                });
            }
            lower_boundary.push(fl);
            upper_boundary.push(gu);
        } else {
            lower.push(fl);
            upper.push(gu);
        }
    }
    for (node, (&fl, &gu)) in lower.iter().zip(&upper).enumerate() {
        if fl > gu {
            return Err(ObstacleError::OrderViolation {
                node,
                lower: fl,
                upper: gu,
            });
        }
    }
    Ok(ObstaclePair::assemble(
        grid.clone(),
        lower,
        upper,
        lower_boundary,
        upper_boundary,
    ))
}

impl ObstaclePair {
    fn assemble(
        grid: Grid,
        lower: Vec<f64>,
        upper: Vec<f64>,
        lower_boundary: Vec<f64>,
        upper_boundary: Vec<f64>,
    ) -> ObstaclePair {
        let coincidence: Vec<bool> = lower.iter().zip(&upper).map(|(a, b)| a == b).collect();
        let biharmonic = assemble_biharmonic(&grid);
        let bilaplacian_lower = biharmonic.apply_density(&lower);
        let sup = coincidence
            .iter()
            .zip(&bilaplacian_lower)
            .filter(|(c, _)| **c)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max);
        ObstaclePair {
            grid,
            lower,
            upper,
            lower_boundary,
            upper_boundary,
            coincidence,
            bilaplacian_lower,
            sup_bilap_lower_on_coincidence: sup,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Interior samples of the lower obstacle.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn lower_boundary(&self) -> &[f64] {
        &self.lower_boundary
    }

    pub fn upper_boundary(&self) -> &[f64] {
        &self.upper_boundary
    }

    /// Coincidence mask: true where the sampled obstacles are exactly equal.
    pub fn coincidence_mask(&self) -> &[bool] {
        &self.coincidence
    }

    pub fn has_coincidence(&self) -> bool {
        self.coincidence.iter().any(|&c| c)
    }

    /// Density-normalized `B f` of the lower obstacle.
    pub fn bilaplacian_lower(&self) -> &[f64] {
        &self.bilaplacian_lower
    }

    pub fn sup_bilap_lower_on_coincidence(&self) -> f64 {
        self.sup_bilap_lower_on_coincidence
    }

    /// Shift the lower obstacle down by `epsilon`. For `epsilon > 0` the
    /// shifted pair has an empty coincidence mask since `f - eps < f <= g`.
    pub fn shift_lower(&self, epsilon: f64) -> Result<ObstaclePair, ObstacleError> {
        if !(epsilon >= 0.0) {
            return Err(ObstacleError::NegativeEpsilon(epsilon));
        }
        if epsilon == 0.0 {
            return Ok(self.clone());
        }
        let lower: Vec<f64> = self.lower.iter().map(|v| v - epsilon).collect();
        let lower_boundary: Vec<f64> = self.lower_boundary.iter().map(|v| v - epsilon).collect();
        Ok(ObstaclePair::assemble(
            self.grid.clone(),
            lower,
            self.upper.clone(),
            lower_boundary,
            self.upper_boundary.clone(),
        ))
    }

    /// Componentwise projection onto the box `[f, g]`: `median(f, u, g)`.
    pub fn project_to_box(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.lower.len());
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
            .collect()
    }

    /// Project an initial datum into the box and report whether projection
    /// changed any value.
    pub fn clamp_initial(&self, u0: &[f64]) -> (Vec<f64>, bool) {
        let projected = self.project_to_box(u0);
        let changed = projected.iter().zip(u0).any(|(a, b)| a != b);
        (projected, changed)
    }

    /// Componentwise box membership up to `tol`.
    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, inner, norm};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn constant_pair(grid: &Grid, lo: f64, hi: f64) -> ObstaclePair {
        let f = move |_x: &[f64]| lo;
        let g = move |_x: &[f64]| hi;
        sample_obstacles(grid, &ObstacleSource::Analytic(&f), &ObstacleSource::Analytic(&g))
            .unwrap()
    }

    #[test]
    fn constant_pair_is_valid_with_empty_coincidence() {
        let grid = build_grid(1, &[1.0], &[5]).unwrap();
        let pair = constant_pair(&grid, -1.0, 1.0);
        assert!(!pair.has_coincidence());
        assert_eq!(pair.lower(), &[-1.0; 5]);
    }

    #[test]
    fn coincidence_on_an_interior_subregion() {
        let grid = build_grid(1, &[1.0], &[9]).unwrap();
        // f = g on |x - 1/2| <= 0.2, strictly below elsewhere
        let f = |x: &[f64]| {
            if (x[0] - 0.5).abs() <= 0.2 {
                0.25
            } else {
                -0.5
            }
        };
        let g = |x: &[f64]| {
            if (x[0] - 0.5).abs() <= 0.2 {
                0.25
            } else {
                0.5
            }
        };
        let pair = sample_obstacles(
            &grid,
            &ObstacleSource::Analytic(&f),
            &ObstacleSource::Analytic(&g),
        )
        .unwrap();
        let expected: Vec<bool> = (0..9)
            .map(|j| ((grid.coords(j)[0]) - 0.5).abs() <= 0.2)
            .collect();
        assert_eq!(pair.coincidence_mask(), expected.as_slice());
        assert!(pair.has_coincidence());
    }

    #[test]
    fn reversed_obstacles_fail_order() {
        let grid = build_grid(1, &[1.0], &[4]).unwrap();
        let f = |x: &[f64]| if x[0] == 0.0 || x[0] == 1.0 { -1.0 } else { 1.0 };
        let g = |x: &[f64]| if x[0] == 0.0 || x[0] == 1.0 { 1.0 } else { -1.0 };
        let err = sample_obstacles(
            &grid,
            &ObstacleSource::Analytic(&f),
            &ObstacleSource::Analytic(&g),
        );
        assert!(matches!(err, Err(ObstacleError::OrderViolation { .. })));
    }

    #[test]
    fn boundary_sign_violations_are_rejected() {
        let grid = build_grid(1, &[1.0], &[4]).unwrap();
        let f = |_x: &[f64]| 0.5; // f > 0 on the ring
        let g = |_x: &[f64]| 1.0;
        let err = sample_obstacles(
            &grid,
            &ObstacleSource::Analytic(&f),
            &ObstacleSource::Analytic(&g),
        );
        assert!(matches!(err, Err(ObstacleError::BoundarySign { .. })));
    }

    #[test]
    fn wrong_value_count_fails_shape() {
        let grid = build_grid(1, &[1.0], &[4]).unwrap();
        let vals = vec![0.0; 3];
        let g = |_x: &[f64]| 1.0;
        let err = sample_obstacles(
            &grid,
            &ObstacleSource::FullValues(&vals),
            &ObstacleSource::Analytic(&g),
        );
        assert!(matches!(err, Err(ObstacleError::ShapeMismatch { .. })));
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let grid = build_grid(1, &[1.0], &[5]).unwrap();
        let pair = constant_pair(&grid, -1.0, 1.0);
        let shifted = pair.shift_lower(0.0).unwrap();
        assert_eq!(shifted.lower(), pair.lower());
        assert_eq!(shifted.coincidence_mask(), pair.coincidence_mask());
    }

    #[test]
    fn shift_moves_lower_pointwise() {
        let grid = build_grid(1, &[1.0], &[5]).unwrap();
        let pair = constant_pair(&grid, -1.0, 1.0);
        let shifted = pair.shift_lower(0.1).unwrap();
        for v in shifted.lower() {
            assert!((v + 1.1).abs() < 1e-15);
        }
        assert!(pair.shift_lower(-0.5).is_err());
    }

    #[test]
    fn positive_shift_empties_coincidence() {
        let grid = build_grid(1, &[1.0], &[9]).unwrap();
        let f = |x: &[f64]| if (x[0] - 0.5).abs() <= 0.2 { 0.25 } else { -0.5 };
        let g = |x: &[f64]| if (x[0] - 0.5).abs() <= 0.2 { 0.25 } else { 0.5 };
        let pair = sample_obstacles(
            &grid,
            &ObstacleSource::Analytic(&f),
            &ObstacleSource::Analytic(&g),
        )
        .unwrap();
        assert!(pair.has_coincidence());
        let shifted = pair.shift_lower(0.05).unwrap();
        assert!(!shifted.has_coincidence());
    }

    #[test]
    fn shift_composition_is_additive() {
        let grid = build_grid(1, &[1.0], &[5]).unwrap();
        let pair = constant_pair(&grid, -1.0, 1.0);
        let a = pair.shift_lower(0.125).unwrap().shift_lower(0.25).unwrap();
        let b = pair.shift_lower(0.375).unwrap();
        for (x, y) in a.lower().iter().zip(b.lower()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_is_idempotent_and_clamps() {
        let grid = build_grid(1, &[1.0], &[5]).unwrap();
        let pair = constant_pair(&grid, -1.0, 1.0);
        let inside = vec![0.3, -0.7, 0.0, 0.9, -1.0];
        assert_eq!(pair.project_to_box(&inside), inside);
        let huge = vec![1e300; 5];
        assert_eq!(pair.project_to_box(&huge), vec![1.0; 5]);
        let p = pair.project_to_box(&vec![5.0, -5.0, 0.5, 2.0, -2.0]);
        assert_eq!(pair.project_to_box(&p), p);
    }

    #[test]
    fn projection_is_nearest_point_and_nonexpansive() {
        let grid = build_grid(1, &[1.0], &[6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..0.0)).collect();
        let g: Vec<f64> = f.iter().map(|v| v + rng.gen_range(0.0..1.5)).collect();
        let mut full_f = vec![-1.0];
        full_f.extend_from_slice(&f);
        full_f.push(-1.0);
        let mut full_g = vec![1.0];
        full_g.extend_from_slice(&g);
        full_g.push(1.0);
        let pair = sample_obstacles(
            &grid,
            &ObstacleSource::FullValues(&full_f),
            &ObstacleSource::FullValues(&full_g),
        )
        .unwrap();
        for _ in 0..100 {
            let u: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = pair.project_to_box(&u);
            assert!(pair.contains(&p, 0.0));
            // nearest point in the weighted norm: no feasible q beats it
            let dup: Vec<f64> = u.iter().zip(&p).map(|(a, b)| a - b).collect();
            let dp = inner(&grid, &dup, &dup).unwrap();
            for _ in 0..20 {
                let q: Vec<f64> = (0..6)
                    .map(|j| rng.gen_range(pair.lower()[j]..=pair.upper()[j]))
                    .collect();
                let duq: Vec<f64> = u.iter().zip(&q).map(|(a, b)| a - b).collect();
                assert!(dp <= inner(&grid, &duq, &duq).unwrap() + 1e-12);
            }
            // 1-Lipschitz
            let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let pv = pair.project_to_box(&v);
            let dpp: Vec<f64> = p.iter().zip(&pv).map(|(a, b)| a - b).collect();
            let duv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            assert!(norm(&grid, &dpp).unwrap() <= norm(&grid, &duv).unwrap() + 1e-12);
        }
    }

    #[test]
    fn clamp_initial_reports_changes() {
        let grid = build_grid(1, &[1.0], &[4]).unwrap();
        let pair = constant_pair(&grid, -1.0, 1.0);
        let (u, changed) = pair.clamp_initial(&[0.0, 0.5, -0.5, 0.9]);
        assert!(!changed);
        assert_eq!(u, vec![0.0, 0.5, -0.5, 0.9]);
        let (u, changed) = pair.clamp_initial(&[2.0, 0.0, 0.0, 0.0]);
        assert!(changed);
        assert_eq!(u[0], 1.0);
    }
}
