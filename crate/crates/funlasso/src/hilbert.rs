//! Product Hilbert space of mixed blocks.
//!
//! An observation is a tuple of `p` blocks, each living in its own space:
//! a curve sampled on a fixed grid (with the L2 inner product approximated
//! by trapezoidal quadrature), a Euclidean vector, or a scalar. The product
//! space carries the sum inner product over blocks.
//!
//! Every block kind reduces to a weighted Euclidean space: curves use the
//! trapezoid weights of their grid, vectors and scalars use unit weights.
//! All code downstream (covariance, solver, debias) relies on that single
//! representation.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The three supported block kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Curve,
    Vector,
    Scalar,
}

/// Static description of one block: kind, sampling grid (curves only) and
/// the quadrature weights that define the block inner product.
#[derive(Clone, Debug)]
pub struct BlockSpec<T> {
    kind: BlockKind,
    grid: Vec<T>,
    weights: Vec<T>,
    len: usize,
}

impl<T: Scalar> BlockSpec<T> {
    /// Curve block on a strictly increasing grid of at least two points.
    pub fn curve(grid: Vec<T>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "curve grid needs at least 2 points, got {}",
                grid.len()
            )));
        }
        for w in grid.windows(2) {
            if !(w[0].is_finite() && w[1].is_finite()) || w[1] <= w[0] {
                return Err(Error::InvalidSpec(
                    "curve grid must be finite and strictly increasing".into(),
                ));
            }
        }
        let g = grid.len();
        let half = T::from_f64_lossy(0.5);
        let mut weights = vec![T::zero(); g];
        weights[0] = (grid[1] - grid[0]) * half;
        weights[g - 1] = (grid[g - 1] - grid[g - 2]) * half;
        for k in 1..g - 1 {
            weights[k] = (grid[k + 1] - grid[k - 1]) * half;
        }
        Ok(Self { kind: BlockKind::Curve, len: g, grid, weights })
    }

    /// Euclidean vector block of dimension `dim >= 1`.
    pub fn vector(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("vector block needs dim >= 1".into()));
        }
        Ok(Self {
            kind: BlockKind::Vector,
            grid: Vec::new(),
            weights: vec![T::one(); dim],
            len: dim,
        })
    }

    /// Scalar block.
    pub fn scalar() -> Self {
        Self {
            kind: BlockKind::Scalar,
            grid: Vec::new(),
            weights: vec![T::one()],
            len: 1,
        }
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    /// Number of stored coordinates (grid length, vector dim, or 1).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Sampling grid (curves only).
    pub fn grid(&self) -> Option<&[T]> {
        match self.kind {
            BlockKind::Curve => Some(&self.grid),
            _ => None,
        }
    }

    /// Quadrature weights defining the block inner product.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

impl<T: Scalar> PartialEq for BlockSpec<T> {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.len == other.len && self.grid == other.grid
    }
}

fn same_spec<T: Scalar>(a: &Arc<BlockSpec<T>>, b: &Arc<BlockSpec<T>>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Ordered list of the `p` block specs of a product space.
#[derive(Clone, Debug)]
pub struct SpaceSpec<T> {
    blocks: Vec<Arc<BlockSpec<T>>>,
}

impl<T: Scalar> SpaceSpec<T> {
    pub fn new(blocks: Vec<BlockSpec<T>>) -> Self {
        Self { blocks: blocks.into_iter().map(Arc::new).collect() }
    }

    /// Number of blocks `p`.
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, j: usize) -> &BlockSpec<T> {
        &self.blocks[j]
    }

    pub(crate) fn block_arc(&self, j: usize) -> Arc<BlockSpec<T>> {
        Arc::clone(&self.blocks[j])
    }

    pub fn iter(&self) -> impl Iterator<Item = &BlockSpec<T>> {
        self.blocks.iter().map(|b| b.as_ref())
    }

    /// Total number of stored coordinates across blocks.
    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn compatible(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| same_spec(a, b))
    }
}

/// One element of a single block space.
#[derive(Clone, Debug)]
pub struct BlockElement<T> {
    spec: Arc<BlockSpec<T>>,
    values: Vec<T>,
}

impl<T: Scalar> BlockElement<T> {
    pub fn new(spec: Arc<BlockSpec<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidSpec(format!(
                "element has {} values, spec expects {}",
                values.len(),
                spec.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("element values must be finite".into()));
        }
        Ok(Self { spec, values })
    }

    /// Zero element of the given block space.
    pub fn zero(spec: Arc<BlockSpec<T>>) -> Self {
        let n = spec.len();
        Self { spec, values: vec![T::zero(); n] }
    }

    pub fn spec(&self) -> &BlockSpec<T> {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mutable view of the stored values.
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Block inner product; trapezoid quadrature for curves, dot product
    /// for vectors, plain product for scalars.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if !same_spec(&self.spec, &other.spec) {
            return Err(Error::SpecMismatch("block inner product".into()));
        }
        Ok(weighted_dot(&self.values, &other.values, self.spec.weights()))
    }

    pub fn norm_sq(&self) -> T {
        weighted_dot(&self.values, &self.values, self.spec.weights())
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// `self += c * other`; specs must match.
    pub fn add_scaled(&mut self, c: T, other: &Self) -> Result<()> {
        if !same_spec(&self.spec, &other.spec) {
            return Err(Error::SpecMismatch("block add_scaled".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + c * *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: T) {
        for a in self.values.iter_mut() {
            *a = *a * c;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }
}

pub(crate) fn weighted_dot<T: Scalar>(a: &[T], b: &[T], w: &[T]) -> T {
    let mut acc = T::zero();
    for ((&x, &y), &wk) in a.iter().zip(b).zip(w) {
        acc = acc + wk * x * y;
    }
    acc
}

/// One element of the product space: `p` blocks in a fixed order.
#[derive(Clone, Debug)]
pub struct Coefficient<T> {
    blocks: Vec<BlockElement<T>>,
}

impl<T: Scalar> Coefficient<T> {
    pub fn new(blocks: Vec<BlockElement<T>>) -> Self {
        Self { blocks }
    }

    /// Zero element of the given product space.
    pub fn zeros(space: &SpaceSpec<T>) -> Self {
        Self {
            blocks: (0..space.n_blocks())
                .map(|j| BlockElement::zero(space.block_arc(j)))
                .collect(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, j: usize) -> &BlockElement<T> {
        &self.blocks[j]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut BlockElement<T> {
        &mut self.blocks[j]
    }

    pub fn blocks(&self) -> &[BlockElement<T>] {
        &self.blocks
    }

    pub fn conforms_to(&self, space: &SpaceSpec<T>) -> bool {
        self.blocks.len() == space.n_blocks()
            && self
                .blocks
                .iter()
                .enumerate()
                .all(|(j, b)| same_spec(&b.spec, &space.blocks[j]))
    }

    /// Product-space inner product: sum of block inner products.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::SpecMismatch("coefficient inner product".into()));
        }
        let mut acc = T::zero();
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            acc = acc + a.inner(b)?;
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> T {
        self.blocks.iter().map(|b| b.norm_sq()).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// Per-block norms, in block order.
    pub fn block_norms(&self) -> Vec<T> {
        self.blocks.iter().map(|b| b.norm()).collect()
    }

    /// Indices of blocks with strictly positive norm.
    pub fn support(&self) -> BTreeSet<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.is_zero())
            .map(|(j, _)| j)
            .collect()
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: T, other: &Self) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::SpecMismatch("coefficient add_scaled".into()));
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add_scaled(c, b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: T) {
        for b in self.blocks.iter_mut() {
            b.scale(c);
        }
    }
}

/// Record of what `prepare` subtracted, kept for prediction-time use.
#[derive(Clone, Debug)]
pub struct CenteringMeta<T> {
    /// Per-block mean element values.
    pub block_means: Vec<Vec<T>>,
    /// Mean of the response.
    pub y_mean: T,
}

/// A sample of `n` observations with a real response.
///
/// Block data is stored column-major per block (`values[g * n + i]` is
/// coordinate `g` of observation `i`), which is the layout every hot loop
/// in the crate streams over.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    space: SpaceSpec<T>,
    blocks: Vec<Vec<T>>,
    y: Vec<T>,
    meta: Option<CenteringMeta<T>>,
}

impl<T: Scalar> Dataset<T> {
    /// Build a dataset from per-block coordinate matrices.
    ///
    /// `blocks[j]` must hold `space.block(j).len() * n` values, column-major
    /// (observation index fastest).
    pub fn from_parts(space: SpaceSpec<T>, blocks: Vec<Vec<T>>, y: Vec<T>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidDataset(format!("need n >= 2, got {n}")));
        }
        if blocks.len() != space.n_blocks() {
            return Err(Error::InvalidDataset(format!(
                "{} block matrices for {} blocks",
                blocks.len(),
                space.n_blocks()
            )));
        }
        for (j, mat) in blocks.iter().enumerate() {
            if mat.len() != space.block(j).len() * n {
                return Err(Error::InvalidDataset(format!(
                    "block {j} has {} values, expected {}",
                    mat.len(),
                    space.block(j).len() * n
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("block {j} has non-finite values")));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("response has non-finite values".into()));
        }
        Ok(Self { space, blocks, y, meta: None })
    }

    /// Build a dataset from observation rows.
    pub fn from_rows(
        space: SpaceSpec<T>,
        rows: Vec<Vec<BlockElement<T>>>,
        y: Vec<T>,
    ) -> Result<Self> {
        let n = rows.len();
        if n != y.len() {
            return Err(Error::InvalidDataset(format!(
                "{n} rows but {} responses",
                y.len()
            )));
        }
        let p = space.n_blocks();
        let mut blocks: Vec<Vec<T>> = (0..p)
            .map(|j| vec![T::zero(); space.block(j).len() * n])
            .collect();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} blocks, expected {p}",
                    row.len()
                )));
            }
            for (j, el) in row.iter().enumerate() {
                if !same_spec(&el.spec, &space.blocks[j]) {
                    return Err(Error::SpecMismatch(format!("row {i}, block {j}")));
                }
                for (g, &v) in el.values.iter().enumerate() {
                    blocks[j][g * n + i] = v;
                }
            }
        }
        Self::from_parts(space, blocks, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.space.n_blocks()
    }

    pub fn space(&self) -> &SpaceSpec<T> {
        &self.space
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn meta(&self) -> Option<&CenteringMeta<T>> {
        self.meta.as_ref()
    }

    /// Column-major coordinate matrix of block `j`.
    pub fn block_matrix(&self, j: usize) -> &[T] {
        &self.blocks[j]
    }

    /// Copy of observation `i`, block `j`.
    pub fn element(&self, i: usize, j: usize) -> BlockElement<T> {
        let n = self.n();
        let len = self.space.block(j).len();
        let values = (0..len).map(|g| self.blocks[j][g * n + i]).collect();
        BlockElement { spec: self.space.block_arc(j), values }
    }

    /// Copy of observation `i` as a row of block elements.
    pub fn row(&self, i: usize) -> Vec<BlockElement<T>> {
        (0..self.n_blocks()).map(|j| self.element(i, j)).collect()
    }

    /// `<beta, X_i>` for one observation.
    pub fn predict_row(&self, beta: &Coefficient<T>, i: usize) -> Result<T> {
        if !beta.conforms_to(&self.space) {
            return Err(Error::SpecMismatch("predict_row".into()));
        }
        Ok(self.predict_row_unchecked(beta, i))
    }

    pub(crate) fn predict_row_unchecked(&self, beta: &Coefficient<T>, i: usize) -> T {
        let n = self.n();
        let mut acc = T::zero();
        for (j, el) in beta.blocks.iter().enumerate() {
            let w = self.space.block(j).weights();
            let mat = &self.blocks[j];
            let mut s = T::zero();
            for (g, (&bv, &wv)) in el.values.iter().zip(w).enumerate() {
                s = s + wv * bv * mat[g * n + i];
            }
            acc = acc + s;
        }
        acc
    }

    /// Predictions `<beta, X_i>` for every observation.
    pub fn predict(&self, beta: &Coefficient<T>) -> Result<Vec<T>> {
        if !beta.conforms_to(&self.space) {
            return Err(Error::SpecMismatch("predict".into()));
        }
        let n = self.n();
        let mut out = vec![T::zero(); n];
        for (j, el) in beta.blocks.iter().enumerate() {
            let w = self.space.block(j).weights();
            let mat = &self.blocks[j];
            for (g, (&bv, &wv)) in el.values.iter().zip(w).enumerate() {
                let c = wv * bv;
                if c == T::zero() {
                    continue;
                }
                let col = &mat[g * n..(g + 1) * n];
                for (o, &x) in out.iter_mut().zip(col) {
                    *o = *o + c * x;
                }
            }
        }
        Ok(out)
    }

    /// Center every block and the response, recording the subtracted means.
    ///
    /// Idempotent up to rounding; calling it on an already-centered dataset
    /// composes the stored means.
    pub fn prepare(mut self) -> Result<Self> {
        let n = self.n();
        let inv_n = T::one() / T::from_count(n);
        let mut block_means = Vec::with_capacity(self.n_blocks());
        for j in 0..self.n_blocks() {
            let len = self.space.block(j).len();
            let mat = &mut self.blocks[j];
            let mut mean = vec![T::zero(); len];
            for (g, m) in mean.iter_mut().enumerate() {
                let col = &mat[g * n..(g + 1) * n];
                *m = col.iter().copied().sum::<T>() * inv_n;
            }
            for (g, &m) in mean.iter().enumerate() {
                for v in mat[g * n..(g + 1) * n].iter_mut() {
                    *v = *v - m;
                }
            }
            block_means.push(mean);
        }
        let y_mean = self.y.iter().copied().sum::<T>() * inv_n;
        for v in self.y.iter_mut() {
            *v = *v - y_mean;
        }
        let meta = match self.meta.take() {
            None => CenteringMeta { block_means, y_mean },
            Some(old) => CenteringMeta {
                block_means: old
                    .block_means
                    .into_iter()
                    .zip(block_means)
                    .map(|(a, b)| a.into_iter().zip(b).map(|(x, y)| x + y).collect())
                    .collect(),
                y_mean: old.y_mean + y_mean,
            },
        };
        self.meta = Some(meta);
        Ok(self)
    }

    /// Dataset restricted to the given observation indices (in order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::InvalidDataset("subset needs at least 2 rows".into()));
        }
        let n = self.n();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidDataset(format!("subset index {bad} out of range")));
        }
        let m = indices.len();
        let blocks = (0..self.n_blocks())
            .map(|j| {
                let len = self.space.block(j).len();
                let mat = &self.blocks[j];
                let mut out = vec![T::zero(); len * m];
                for g in 0..len {
                    for (ii, &i) in indices.iter().enumerate() {
                        out[g * m + ii] = mat[g * n + i];
                    }
                }
                out
            })
            .collect();
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Ok(Self {
            space: self.space.clone(),
            blocks,
            y,
            meta: self.meta.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn uniform_grid(g: usize) -> Vec<f64> {
        (0..g).map(|k| k as f64 / (g - 1) as f64).collect()
    }

    fn scalar_el(x: f64) -> BlockElement<f64> {
        BlockElement::new(Arc::new(BlockSpec::scalar()), vec![x]).unwrap()
    }

    #[test]
    fn curve_spec_rejects_bad_grids() {
        assert!(BlockSpec::<f64>::curve(vec![0.0]).is_err());
        assert!(BlockSpec::<f64>::curve(vec![0.0, 0.0]).is_err());
        assert!(BlockSpec::<f64>::curve(vec![0.0, -1.0]).is_err());
        assert!(BlockSpec::<f64>::curve(vec![0.0, f64::NAN]).is_err());
        assert!(BlockSpec::<f64>::vector(0).is_err());
    }

    #[test]
    fn scalar_inner_is_the_product() {
        let f = scalar_el(2.0);
        let g = scalar_el(3.0);
        close(f.inner(&g).unwrap(), 6.0, 0.0);
    }

    #[test]
    fn constant_curve_integrates_to_one() {
        let spec = Arc::new(BlockSpec::curve(uniform_grid(37)).unwrap());
        let ones = BlockElement::new(Arc::clone(&spec), vec![1.0; 37]).unwrap();
        close(ones.inner(&ones).unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn identity_curve_matches_exact_trapezoid_sum() {
        // f(t) = g(t) = t on the 101-point uniform grid over [0, 1].
        // Exact trapezoid value of t^2: h * (sum_{k=1..99} (k/100)^2 + 1/2)
        // computed in integer arithmetic: sum k^2 = 99*100*199/6 = 328350.
        let g = 101;
        let h = 0.01;
        let exact = h * (328350.0 / 10_000.0 + 0.5); // = 0.33335
        close(exact, 0.33335, 1e-15);
        let spec = Arc::new(BlockSpec::curve(uniform_grid(g)).unwrap());
        let f = BlockElement::new(Arc::clone(&spec), uniform_grid(g)).unwrap();
        close(f.inner(&f).unwrap(), exact, 1e-15);
        // Converges to 1/3 as the grid refines (error h^2/6).
        for g in [11usize, 101, 1001] {
            let spec = Arc::new(BlockSpec::curve(uniform_grid(g)).unwrap());
            let f = BlockElement::new(Arc::clone(&spec), uniform_grid(g)).unwrap();
            let h = 1.0 / (g - 1) as f64;
            close(f.inner(&f).unwrap(), 1.0 / 3.0 + h * h / 6.0, 1e-12);
        }
    }

    #[test]
    fn trapezoid_exact_for_piecewise_linear_integrand() {
        // Integrating h(t) against the constant 1 must equal the exact area
        // of the piecewise-linear interpolant.
        let grid = vec![0.0, 0.3, 0.45, 0.9, 1.7];
        let vals = vec![2.0, -1.0, 0.5, 3.0, 0.25];
        let mut exact = 0.0;
        for k in 0..grid.len() - 1 {
            exact += 0.5 * (vals[k] + vals[k + 1]) * (grid[k + 1] - grid[k]);
        }
        let spec = Arc::new(BlockSpec::curve(grid).unwrap());
        let h = BlockElement::new(Arc::clone(&spec), vals).unwrap();
        let one = BlockElement::new(Arc::clone(&spec), vec![1.0; 5]).unwrap();
        close(h.inner(&one).unwrap(), exact, 1e-14);
    }

    #[test]
    fn mismatched_specs_error() {
        let f = scalar_el(1.0);
        let spec = Arc::new(BlockSpec::curve(uniform_grid(3)).unwrap());
        let g = BlockElement::new(spec, vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(f.inner(&g), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn space_inner_sums_blocks() {
        let space = SpaceSpec::new(vec![BlockSpec::scalar(), BlockSpec::scalar()]);
        let a = Coefficient::new(vec![scalar_el(1.0), scalar_el(2.0)]);
        close(a.inner(&a).unwrap(), 5.0, 0.0);
        let zero = Coefficient::zeros(&space);
        close(a.inner(&zero).unwrap(), 0.0, 0.0);

        // Mixed curve + scalar space: additivity against per-block values.
        let curve_spec = Arc::new(BlockSpec::curve(uniform_grid(101)).unwrap());
        let f = BlockElement::new(Arc::clone(&curve_spec), uniform_grid(101)).unwrap();
        let expected = f.inner(&f).unwrap() + 6.0;
        let b = Coefficient::new(vec![f.clone(), scalar_el(2.0)]);
        let c = Coefficient::new(vec![f, scalar_el(3.0)]);
        close(b.inner(&c).unwrap(), expected, 1e-15);
    }

    #[test]
    fn prepare_centers_and_is_idempotent() {
        let space = SpaceSpec::new(vec![BlockSpec::scalar()]);
        let rows = vec![vec![scalar_el(4.0)], vec![scalar_el(4.0)]];
        let d = Dataset::from_rows(space.clone(), rows, vec![1.0, 3.0])
            .unwrap()
            .prepare()
            .unwrap();
        close(d.block_matrix(0)[0], 0.0, 0.0);
        close(d.block_matrix(0)[1], 0.0, 0.0);
        close(d.y()[0], -1.0, 0.0);
        close(d.y()[1], 1.0, 0.0);
        let meta = d.meta().unwrap();
        close(meta.block_means[0][0], 4.0, 0.0);
        close(meta.y_mean, 2.0, 0.0);

        let d2 = d.clone().prepare().unwrap();
        for (a, b) in d.block_matrix(0).iter().zip(d2.block_matrix(0)) {
            close(*a, *b, 1e-12);
        }
        for (a, b) in d.y().iter().zip(d2.y()) {
            close(*a, *b, 1e-12);
        }
        // Composed meta still records the original means.
        close(d2.meta().unwrap().block_means[0][0], 4.0, 1e-12);
        close(d2.meta().unwrap().y_mean, 2.0, 1e-12);
    }

    #[test]
    fn centering_invariant_after_prepare() {
        // Mean element norm small relative to mean block norm; same for y.
        let grid = uniform_grid(20);
        let spec = BlockSpec::curve(grid.clone()).unwrap();
        let space = SpaceSpec::new(vec![spec]);
        let arc = space.block_arc(0);
        let rows: Vec<Vec<BlockElement<f64>>> = (0..40)
            .map(|i| {
                let vals: Vec<f64> = grid
                    .iter()
                    .map(|t| (i as f64 * 0.37).sin() * t + (i as f64 * 0.11).cos())
                    .collect();
                vec![BlockElement::new(Arc::clone(&arc), vals).unwrap()]
            })
            .collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.73).sin() * 2.0 + 5.0).collect();
        let d = Dataset::from_rows(space, rows, y).unwrap().prepare().unwrap();

        let n = d.n();
        let mean_el: Vec<f64> = (0..20)
            .map(|g| d.block_matrix(0)[g * n..(g + 1) * n].iter().sum::<f64>() / n as f64)
            .collect();
        let mean_norm =
            weighted_dot(&mean_el, &mean_el, d.space().block(0).weights()).sqrt();
        let avg_norm: f64 = (0..n)
            .map(|i| d.element(i, 0).norm())
            .sum::<f64>()
            / n as f64;
        assert!(mean_norm <= 1e-10 * avg_norm.max(1e-300));

        let y_mean: f64 = d.y().iter().sum::<f64>() / n as f64;
        let sd = (d.y().iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        assert!(y_mean.abs() <= 1e-10 * sd);
    }

    #[test]
    fn support_tracks_nonzero_blocks() {
        let space = SpaceSpec::new(vec![
            BlockSpec::scalar(),
            BlockSpec::vector(3).unwrap(),
            BlockSpec::scalar(),
        ]);
        let mut c = Coefficient::zeros(&space);
        assert!(c.support().is_empty());
        c.block_mut(1).values_mut()[2] = 0.5;
        assert_eq!(c.support().into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn subset_picks_rows() {
        let space = SpaceSpec::new(vec![BlockSpec::vector(2).unwrap()]);
        let arc = space.block_arc(0);
        let rows: Vec<Vec<BlockElement<f64>>> = (0..5)
            .map(|i| {
                vec![BlockElement::new(Arc::clone(&arc), vec![i as f64, 10.0 + i as f64]).unwrap()]
            })
            .collect();
        let y: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let d = Dataset::from_rows(space, rows, y).unwrap();
        let s = d.subset(&[4, 1]).unwrap();
        assert_eq!(s.n(), 2);
        close(s.element(0, 0).values()[0], 4.0, 0.0);
        close(s.element(1, 0).values()[1], 11.0, 0.0);
        close(s.y()[0], 4.0, 0.0);
    }
}
