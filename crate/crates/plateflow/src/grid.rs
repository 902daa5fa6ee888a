//! Spatial discretization: uniform interior grids and the discrete
//! Laplacian/biharmonic operators with clamped boundary conditions.
//!
//! Only interior nodes carry unknowns; boundary nodes hold the value 0 and
//! are not indexed. The biharmonic operator is assembled variationally as
//! `B = L^T W L`, so the discrete energy `1/2 <Lu, Lu>_W` equals
//! `1/2 u^T B u` and `B` is positive semidefinite by construction.

use crate::error::GridError;
use crate::linalg::SymSparse;

/// Uniform tensor grid over a 1D interval or 2D rectangle.
///
/// `resolution` counts interior nodes per axis; with extent `e` the spacing
/// is `e / (resolution + 1)`, so node `i` along an axis sits at `(i + 1) h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dimension: usize,
    extents: [f64; 2],
    resolutions: [usize; 2],
    spacings: [f64; 2],
}

impl Grid {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Extents of the axes actually in use.
    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dimension]
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions[..self.dimension]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings[..self.dimension]
    }

    /// Number of interior nodes.
    pub fn node_count(&self) -> usize {
        self.resolutions[..self.dimension].iter().product()
    }

    /// Quadrature weight of one node: the product of the spacings.
    pub fn quadrature_weight(&self) -> f64 {
        self.spacings[..self.dimension].iter().product()
    }

    /// Flat index of an interior multi-index (row-major, x fastest).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        match self.dimension {
            1 => multi[0],
            _ => multi[1] * self.resolutions[0] + multi[0],
        }
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        match self.dimension {
            1 => [flat, 0],
            _ => [flat % self.resolutions[0], flat / self.resolutions[0]],
        }
    }

    /// Physical coordinates of an interior node. The second component is 0
    /// in one dimension.
    pub fn coords(&self, flat: usize) -> [f64; 2] {
        let m = self.multi_index(flat);
        let x = (m[0] as f64 + 1.0) * self.spacings[0];
        let y = if self.dimension == 2 {
            (m[1] as f64 + 1.0) * self.spacings[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Coordinates of every node of the full grid including the boundary
    /// ring, row-major over `resolution + 2` nodes per axis.
    pub fn full_coords(&self, flat: usize) -> [f64; 2] {
        let nx = self.resolutions[0] + 2;
        let (ix, iy) = match self.dimension {
            1 => (flat, 0),
            _ => (flat % nx, flat / nx),
        };
        [
            ix as f64 * self.spacings[0],
            if self.dimension == 2 {
                iy as f64 * self.spacings[1]
            } else {
                0.0
            },
        ]
    }

    /// Node count of the full grid including the boundary ring.
    pub fn full_node_count(&self) -> usize {
        self.resolutions[..self.dimension]
            .iter()
            .map(|r| r + 2)
            .product()
    }

    /// Whether a full-grid flat index lies on the boundary ring.
    pub fn full_index_is_boundary(&self, flat: usize) -> bool {
        let nx = self.resolutions[0] + 2;
        match self.dimension {
            1 => flat == 0 || flat == nx - 1,
            _ => {
                let ny = self.resolutions[1] + 2;
                let ix = flat % nx;
                let iy = flat / nx;
                ix == 0 || iy == 0 || ix == nx - 1 || iy == ny - 1
            }
        }
    }

    /// Map a full-grid flat index to the interior flat index, if interior.
    pub fn full_to_interior(&self, flat: usize) -> Option<usize> {
        if self.full_index_is_boundary(flat) {
            return None;
        }
        let nx = self.resolutions[0] + 2;
        match self.dimension {
            1 => Some(flat - 1),
            _ => {
                let ix = flat % nx - 1;
                let iy = flat / nx - 1;
                Some(self.flat_index(&[ix, iy]))
            }
        }
    }

    pub fn check_size(&self, u: &[f64]) -> Result<(), GridError> {
        if u.len() != self.node_count() {
            return Err(GridError::SizeMismatch {
                expected: self.node_count(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Construct without the public resolution floor. Used by tests and
    /// bindings that need degenerate grids.
    #[doc(hidden)]
    pub fn raw(dimension: usize, extents: &[f64], resolutions: &[usize]) -> Grid {
        let mut ext = [1.0; 2];
        let mut res = [1usize; 2];
        ext[..dimension].copy_from_slice(extents);
        res[..dimension].copy_from_slice(resolutions);
        let mut spc = [1.0; 2];
        for a in 0..dimension {
            spc[a] = ext[a] / (res[a] as f64 + 1.0);
        }
        Grid {
            dimension,
            extents: ext,
            resolutions: res,
            spacings: spc,
        }
    }
}

/// Build a validated grid.
pub fn build_grid(
    dimension: usize,
    extents: &[f64],
    resolutions: &[usize],
) -> Result<Grid, GridError> {
    if !(1..=2).contains(&dimension) {
        return Err(GridError::UnsupportedDimension(dimension));
    }
    if extents.len() != dimension {
        return Err(GridError::AxisCountMismatch {
            expected: dimension,
            got: extents.len(),
        });
    }
    if resolutions.len() != dimension {
        return Err(GridError::AxisCountMismatch {
            expected: dimension,
            got: resolutions.len(),
        });
    }
    for &e in extents {
        if !(e > 0.0) || !e.is_finite() {
            return Err(GridError::NonPositiveExtent(e));
        }
    }
    for &r in resolutions {
        // The Laplacian stencil needs an interior neighborhood to act on.
        if r < 3 {
            return Err(GridError::ResolutionTooSmall(r));
        }
    }
    Ok(Grid::raw(dimension, extents, resolutions))
}

/// Sparse symmetric operator on interior grid functions, together with the
/// quadrature weight used in every inner product.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    mat: SymSparse,
    quadrature_weight: f64,
}

impl DiscreteOperator {
    pub fn rows(&self) -> usize {
        self.mat.size()
    }

    pub fn cols(&self) -> usize {
        self.mat.size()
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.quadrature_weight
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.mat.entry(i, j)
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.mat.apply(u)
    }

    /// Density-normalized application: `(A u) / w`. For the biharmonic
    /// operator this is the discrete `Laplacian^2 u` as a node density.
    pub fn apply_density(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.mat.apply(u);
        for v in &mut y {
            *v /= self.quadrature_weight;
        }
        y
    }

    pub fn matrix(&self) -> &SymSparse {
        &self.mat
    }

    /// Density-normalized matrix `A / w`, optionally with a diagonal shift.
    pub fn density_matrix_shifted(&self, shift: f64) -> SymSparse {
        self.mat
            .scaled_with_diagonal(1.0 / self.quadrature_weight, shift)
    }

    pub fn is_symmetric_exact(&self) -> bool {
        self.mat.is_symmetric_exact()
    }

    #[doc(hidden)]
    pub fn from_parts(mat: SymSparse, quadrature_weight: f64) -> DiscreteOperator {
        DiscreteOperator {
            mat,
            quadrature_weight,
        }
    }
}

/// Second-order central-difference Laplacian on interior nodes with zero
/// boundary values (the clamped boundary encoding keeps the operator
/// symmetric; the boundary ring is not indexed).
pub fn assemble_laplacian(grid: &Grid) -> DiscreteOperator {
    let n = grid.node_count();
    let mut triplets = Vec::with_capacity(5 * n);
    let inv = [
        1.0 / (grid.spacings[0] * grid.spacings[0]),
        1.0 / (grid.spacings[1] * grid.spacings[1]),
    ];
    let dim = grid.dimension;
    let diag = -2.0 * inv[..dim].iter().sum::<f64>();
    for flat in 0..n {
        triplets.push((flat, flat, diag));
        let m = grid.multi_index(flat);
        for axis in 0..dim {
            for dir in [-1isize, 1] {
                let coord = m[axis] as isize + dir;
                if coord < 0 || coord >= grid.resolutions[axis] as isize {
                    continue; // boundary node: value 0, no unknown
                }
                let mut nb = m;
                nb[axis] = coord as usize;
                triplets.push((flat, grid.flat_index(&nb), inv[axis]));
            }
        }
    }
    DiscreteOperator {
        mat: SymSparse::from_triplets(n, &triplets),
        quadrature_weight: grid.quadrature_weight(),
    }
}

/// Biharmonic operator `B = L^T W L` built from the clamped Laplacian, so
/// that `u^T B u = <Lu, Lu>_W` exactly.
pub fn assemble_biharmonic(grid: &Grid) -> DiscreteOperator {
    let lap = assemble_laplacian(grid);
    let l = &lap.mat;
    let w = grid.quadrature_weight();
    let n = l.size();
    // Compute the upper triangle of w * L * L and mirror it, which keeps the
    // assembled matrix exactly symmetric.
    let mut triplets = Vec::new();
    let mut acc = vec![0.0f64; n];
    let mut touched = Vec::new();
    for i in 0..n {
        for (k, lik) in l.row(i) {
            for (j, lkj) in l.row(k) {
                if j < i {
                    continue;
                }
                if acc[j] == 0.0 {
                    touched.push(j);
                }
                acc[j] += lik * lkj;
            }
        }
        touched.sort_unstable();
        for &j in &touched {
            let v = w * acc[j];
            acc[j] = 0.0;
            if v != 0.0 {
                triplets.push((i, j, v));
                if j != i {
                    triplets.push((j, i, v));
                }
            }
        }
        touched.clear();
    }
    DiscreteOperator {
        mat: SymSparse::from_triplets(n, &triplets),
        quadrature_weight: w,
    }
}

/// Discrete energy `1/2 <Lu, Lu>_W = 1/2 w * sum_j (Lu)_j^2`.
pub fn energy(grid: &Grid, laplacian: &DiscreteOperator, u: &[f64]) -> Result<f64, GridError> {
    grid.check_size(u)?;
    let lu = laplacian.apply(u);
    let sum: f64 = lu.iter().map(|v| v * v).sum();
    Ok(0.5 * laplacian.quadrature_weight() * sum)
}

/// Weighted inner product `w * sum_j u_j v_j`.
pub fn inner(grid: &Grid, u: &[f64], v: &[f64]) -> Result<f64, GridError> {
    grid.check_size(u)?;
    grid.check_size(v)?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(grid.quadrature_weight() * dot)
}

/// Weighted norm, the square root of [`inner`] with itself.
pub fn norm(grid: &Grid, u: &[f64]) -> Result<f64, GridError> {
    Ok(inner(grid, u, u)?.sqrt())
}

/// Max-norm distance between two grid functions of equal length.
pub fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn build_grid_1d_spacing() {
        let g = build_grid(1, &[1.0], &[3]).unwrap();
        assert_eq!(g.spacings()[0], 0.25);
        assert_eq!(g.node_count(), 3);
        let xs: Vec<f64> = (0..3).map(|j| g.coords(j)[0]).collect();
        assert_eq!(xs, vec![0.25, 0.5, 0.75]);
    }

    #[test]
    fn build_grid_2d_spacing() {
        let g = build_grid(2, &[1.0, 1.0], &[4, 4]).unwrap();
        assert_eq!(g.node_count(), 16);
        assert!((g.spacings()[0] - 0.2).abs() < 1e-15);
        assert!((g.spacings()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn build_grid_rejects_bad_inputs() {
        assert!(matches!(
            build_grid(3, &[1.0, 1.0, 1.0], &[4, 4, 4]),
            Err(GridError::UnsupportedDimension(3))
        ));
        assert!(matches!(
            build_grid(0, &[], &[]),
            Err(GridError::UnsupportedDimension(0))
        ));
        assert!(matches!(
            build_grid(1, &[1.0], &[2]),
            Err(GridError::ResolutionTooSmall(2))
        ));
        assert!(matches!(
            build_grid(1, &[0.0], &[4]),
            Err(GridError::NonPositiveExtent(_))
        ));
    }

    #[test]
    fn node_index_is_a_bijection() {
        let g = build_grid(2, &[1.0, 2.0], &[5, 7]).unwrap();
        for flat in 0..g.node_count() {
            let m = g.multi_index(flat);
            assert_eq!(g.flat_index(&m), flat);
        }
    }

    #[test]
    fn laplacian_matches_hand_stencil_1d() {
        let g = build_grid(1, &[1.0], &[3]).unwrap();
        let l = assemble_laplacian(&g);
        let lu = l.apply(&[0.0, 1.0, 0.0]);
        assert_eq!(lu, vec![16.0, -32.0, 16.0]);
    }

    #[test]
    fn laplacian_of_constant_sees_zero_boundary() {
        let g = build_grid(1, &[1.0], &[6]).unwrap();
        let l = assemble_laplacian(&g);
        let c = 0.7;
        let lu = l.apply(&vec![c; 6]);
        let h2 = g.spacings()[0] * g.spacings()[0];
        // interior away from the boundary
        for j in 1..5 {
            assert!(lu[j].abs() < 1e-12, "node {j}: {}", lu[j]);
        }
        // first node: (0 - 2c + c) / h^2
        assert!((lu[0] - (-c / h2)).abs() < 1e-10);
        assert!((lu[5] - (-c / h2)).abs() < 1e-10);
    }

    #[test]
    fn laplacian_indicator_column_matches_five_point_stencil_2d() {
        // Hand-computed column of the 5-point stencil on a 4x4 interior.
        let g = build_grid(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let l = assemble_laplacian(&g);
        let h2 = g.spacings()[0] * g.spacings()[0];
        let center = g.flat_index(&[1, 2]);
        let mut u = vec![0.0; 16];
        u[center] = 1.0;
        let lu = l.apply(&u);
        for flat in 0..16 {
            let m = g.multi_index(flat);
            let dx = m[0] as isize - 1;
            let dy = m[1] as isize - 2;
            let expected = match (dx.abs(), dy.abs()) {
                (0, 0) => -4.0 / h2,
                (1, 0) | (0, 1) => 1.0 / h2,
                _ => 0.0,
            };
            assert!(
                (lu[flat] - expected).abs() < 1e-10,
                "node {m:?}: {} vs {expected}",
                lu[flat]
            );
        }
    }

    #[test]
    fn biharmonic_is_symmetric_and_psd() {
        let g = build_grid(2, &[1.0, 1.0], &[5, 4]).unwrap();
        let b = assemble_biharmonic(&g);
        assert!(b.is_symmetric_exact());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bu = b.apply(&u);
            let quad: f64 = u.iter().zip(&bu).map(|(a, c)| a * c).sum();
            assert!(quad >= -1e-12);
        }
        assert_eq!(b.apply(&vec![0.0; g.node_count()]), vec![0.0; g.node_count()]);
    }

    #[test]
    fn biharmonic_matches_dense_product_on_three_nodes() {
        let g = build_grid(1, &[1.0], &[3]).unwrap();
        let l = assemble_laplacian(&g);
        let b = assemble_biharmonic(&g);
        let w = g.quadrature_weight();
        let ld = l.matrix().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let mut prod = 0.0;
                for k in 0..3 {
                    prod += ld[k][i] * w * ld[k][j];
                }
                assert!((b.entry(i, j) - prod).abs() < of_abs(prod), "B[{i}][{j}]");
            }
        }
        // one frozen value: row sums of L are (-32+16, ...) with h = 1/4
        assert_eq!(b.entry(0, 0), 320.0);
        assert_eq!(b.entry(0, 1), -256.0);
        assert_eq!(b.entry(0, 2), 64.0);
        assert_eq!(b.entry(1, 1), 384.0);
    }

    fn of_abs(x: f64) -> f64 {
        1e-9 * (1.0 + x.abs())
    }

    #[test]
    fn energy_examples() {
        let g = build_grid(1, &[1.0], &[3]).unwrap();
        let l = assemble_laplacian(&g);
        assert_eq!(energy(&g, &l, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        // 1/2 * 0.25 * (16^2 + 32^2 + 16^2)
        let e = energy(&g, &l, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(e, 192.0);
        assert!(matches!(
            energy(&g, &l, &[0.0, 1.0]),
            Err(GridError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn energy_is_quadratic_and_ties_to_biharmonic() {
        let g = build_grid(2, &[1.0, 1.5], &[4, 5]).unwrap();
        let l = assemble_laplacian(&g);
        let b = assemble_biharmonic(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let u: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e1 = energy(&g, &l, &u).unwrap();
            let u2: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
            let e2 = energy(&g, &l, &u2).unwrap();
            assert!((e2 - 4.0 * e1).abs() <= 1e-12 * e2.abs().max(1.0));
            let bu = b.apply(&u);
            let quad: f64 = u.iter().zip(&bu).map(|(a, c)| a * c).sum();
            assert!((e1 - 0.5 * quad).abs() <= 1e-12 * e1.abs().max(1e-12));
        }
    }

    #[test]
    fn integration_by_parts_holds() {
        let g = build_grid(1, &[1.0], &[8]).unwrap();
        let l = assemble_laplacian(&g);
        let b = assemble_biharmonic(&g);
        let w = g.quadrature_weight();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bu = b.apply(&u);
            let lhs: f64 = bu.iter().zip(&v).map(|(a, c)| a * c).sum();
            let lu = l.apply(&u);
            let lv = l.apply(&v);
            let rhs: f64 = lu.iter().zip(&lv).map(|(a, c)| w * a * c).sum();
            assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn inner_and_norm_basics() {
        let g = build_grid(1, &[1.0], &[4]).unwrap();
        let zero = vec![0.0; 4];
        let u = vec![1.0, -2.0, 0.5, 3.0];
        assert_eq!(inner(&g, &u, &zero).unwrap(), 0.0);
        let mut ind = vec![0.0; 4];
        ind[2] = 1.0;
        let h = g.spacings()[0];
        assert!((norm(&g, &ind).unwrap() - h.sqrt()).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let ip = inner(&g, &a, &b).unwrap().abs();
            let bound = norm(&g, &a).unwrap() * norm(&g, &b).unwrap();
            assert!(ip <= bound + 1e-12);
        }
    }
}
