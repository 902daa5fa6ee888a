//! Built-in test instances. Each preset activates a different part of the
//! structure: inactive obstacles, a coincidence band, simultaneous lower and
//! upper contact, and the trivial resting state.

use crate::error::ConfigError;
use crate::grid::Grid;
use crate::obstacles::{sample_obstacles, ObstaclePair, ObstacleSource};

/// Names of the built-in presets.
pub const PRESET_NAMES: [&str; 4] = ["zero-start", "squeeze", "pinch", "diffuse"];

/// A preset: analytic obstacle pair plus an initial datum, both scalable.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub scale: f64,
}

fn radius(x: &[f64], center: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for (a, c) in x.iter().zip(center) {
        r2 += (a - c) * (a - c);
    }
    r2.sqrt()
}

impl Preset {
    pub fn by_name(name: &str, scale: f64) -> Result<Preset, ConfigError> {
        let name = match name {
            "zero-start" => "zero-start",
            "squeeze" => "squeeze",
            "pinch" => "pinch",
            "diffuse" => "diffuse",
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        Ok(Preset { name, scale })
    }

    /// Lower obstacle at a point of the (closed) domain.
    pub fn lower(&self, grid: &Grid, x: &[f64]) -> f64 {
        let s = self.scale;
        match self.name {
            "zero-start" => -s,
            "diffuse" => -10.0 * s,
            "squeeze" => {
                let r = radius(x, &center_of(grid));
                s * (0.05 - 0.55 * r * r + 0.325 * r.powi(4))
            }
            "pinch" => {
                let r = radius(x, &pinch_lower_center(grid));
                s * (0.08 - 3.0 * r * r + 2.0 * r.powi(4))
            }
            _ => unreachable!(),
        }
    }

    /// Upper obstacle at a point of the (closed) domain.
    pub fn upper(&self, grid: &Grid, x: &[f64]) -> f64 {
        let s = self.scale;
        match self.name {
            "zero-start" => s,
            "diffuse" => 10.0 * s,
            "squeeze" => {
                // g = f exactly on the band r <= 0.1: the gap term is an
                // exact floating zero there, so the sampled values coincide
                // bitwise.
                let r = radius(x, &center_of(grid));
                let gap = 8.0 * (r - 0.1).max(0.0).powi(4);
                self.lower(grid, x) + s * gap
            }
            "pinch" => {
                let r = radius(x, &pinch_upper_center(grid));
                s * (-0.1 + 2.0 * r * r - r.powi(4))
            }
            _ => unreachable!(),
        }
    }

    /// Initial datum at an interior point, before box projection.
    pub fn initial(&self, grid: &Grid, x: &[f64]) -> f64 {
        match self.name {
            // rests strictly inside the box
            "zero-start" => 0.0,
            // clamp-compatible polynomial bump
            "diffuse" => 0.5 * self.scale * bump(grid, x),
            // projected onto the obstacles by the run's initial validation
            "squeeze" | "pinch" => 0.0,
            _ => unreachable!(),
        }
    }

    /// Sample and validate the obstacle pair on a grid.
    pub fn obstacles(&self, grid: &Grid) -> Result<ObstaclePair, ConfigError> {
        let lower = |x: &[f64]| self.lower(grid, x);
        let upper = |x: &[f64]| self.upper(grid, x);
        Ok(sample_obstacles(
            grid,
            &ObstacleSource::Analytic(&lower),
            &ObstacleSource::Analytic(&upper),
        )?)
    }

    /// Initial datum sampled at the interior nodes.
    pub fn initial_datum(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.node_count())
            .map(|j| {
                let c = grid.coords(j);
                self.initial(grid, &c[..grid.dimension()])
            })
            .collect()
    }

    /// Default time horizon used by the command-line runs.
    pub fn default_horizon(&self) -> f64 {
        0.1
    }
}

fn center_of(grid: &Grid) -> Vec<f64> {
    grid.extents().iter().map(|e| 0.5 * e).collect()
}

fn pinch_lower_center(grid: &Grid) -> Vec<f64> {
    let mut c = center_of(grid);
    c[0] = 0.3 * grid.extents()[0];
    c
}

fn pinch_upper_center(grid: &Grid) -> Vec<f64> {
    let mut c = center_of(grid);
    c[0] = 0.7 * grid.extents()[0];
    c
}

/// Product bump `prod 16 x^2 (e - x)^2 / e^4`, vanishing to second order at
/// the boundary.
fn bump(grid: &Grid, x: &[f64]) -> f64 {
    let mut v = 1.0;
    for (a, e) in x.iter().zip(grid.extents()) {
        let t = a / e;
        v *= 16.0 * t * t * (1.0 - t) * (1.0 - t);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn all_presets_validate_on_both_reference_grids() {
        let grids = [
            build_grid(1, &[1.0], &[64]).unwrap(),
            build_grid(2, &[1.0, 1.0], &[24, 24]).unwrap(),
        ];
        for grid in &grids {
            for name in PRESET_NAMES {
                let preset = Preset::by_name(name, 1.0).unwrap();
                let pair = preset.obstacles(grid).unwrap_or_else(|e| {
                    panic!("preset {name} invalid on {}d grid: {e}", grid.dimension())
                });
                let u0 = preset.initial_datum(grid);
                let (_, _changed) = pair.clamp_initial(&u0);
            }
        }
    }

    #[test]
    fn squeeze_has_an_exact_coincidence_band() {
        for grid in [
            build_grid(1, &[1.0], &[64]).unwrap(),
            build_grid(2, &[1.0, 1.0], &[24, 24]).unwrap(),
        ] {
            let preset = Preset::by_name("squeeze", 1.0).unwrap();
            let pair = preset.obstacles(&grid).unwrap();
            let mask = pair.coincidence_mask();
            let mut count = 0;
            for j in 0..grid.node_count() {
                let c = grid.coords(j);
                let r = radius(&c[..grid.dimension()], &center_of(&grid));
                if r <= 0.1 {
                    assert!(mask[j], "node {j} at r={r} should coincide");
                    count += 1;
                }
            }
            assert!(count > 0);
        }
    }

    #[test]
    fn pinch_forces_both_contacts_in_the_initial_box() {
        let grid = build_grid(1, &[1.0], &[64]).unwrap();
        let preset = Preset::by_name("pinch", 1.0).unwrap();
        let pair = preset.obstacles(&grid).unwrap();
        assert!(!pair.has_coincidence());
        let (u0, changed) = pair.clamp_initial(&preset.initial_datum(&grid));
        assert!(changed);
        let lower_hits = u0.iter().zip(pair.lower()).filter(|(u, f)| u == f).count();
        let upper_hits = u0.iter().zip(pair.upper()).filter(|(u, g)| u == g).count();
        assert!(lower_hits > 0, "no lower contact at t=0");
        assert!(upper_hits > 0, "no upper contact at t=0");
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(Preset::by_name("nope", 1.0).is_err());
    }
}
