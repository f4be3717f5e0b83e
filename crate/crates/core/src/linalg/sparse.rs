use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::LinearOperator;

/// Square complex matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<C64>,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indptr: vec![0; dim + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from unordered `(row, col, value)` triplets; duplicates are summed
    /// and exact zeros are kept so that sparsity patterns stay predictable.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(u32, u32, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            indptr[i + 1] += indptr[i];
        }
        Self {
            dim,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != C64::new(0.0, 0.0) {
                    t.push((r as u32, c as u32, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    /// Iterates `(col, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.indptr[row], self.indptr[row + 1]);
        self.indices[a..b]
            .iter()
            .zip(&self.values[a..b])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let (a, b) = (self.indptr[row], self.indptr[row + 1]);
        match self.indices[a..b].binary_search(&(col as u32)) {
            Ok(p) => self.values[a + p],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn adjoint(&self) -> Self {
        let t = self
            .triplets()
            .map(|(r, c, v)| (c as u32, r as u32, v.conj()))
            .collect();
        Self::from_triplets(self.dim, t)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn scaled_add(&self, alpha: C64, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t: Vec<_> = self.triplets().map(|(r, c, v)| (r as u32, c as u32, v)).collect();
        t.extend(other.triplets().map(|(r, c, v)| (r as u32, c as u32, alpha * v)));
        Self::from_triplets(self.dim, t)
    }

    /// Largest element-wise magnitude of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.scaled_add(C64::new(-1.0, 0.0), other)
            .values
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Largest element of `|A - A^†|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Largest element of `[A, D]` for a diagonal `D`, i.e. `max |A_ij (d_j - d_i)|`.
    pub fn diagonal_commutator_norm(&self, diag: &[f64]) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v * (diag[c] - diag[r])).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, out) in y.iter_mut().enumerate() {
            let (a, b) = (self.indptr[r], self.indptr[r + 1]);
            let mut acc = C64::new(0.0, 0.0);
            for (c, v) in self.indices[a..b].iter().zip(&self.values[a..b]) {
                acc += v * x[*c as usize];
            }
            *out = acc;
        }
    }
}

/// Operator of the form `A_0 + Σ_k c_k A_k` sharing a single sparsity pattern, so
/// that re-assembling for new coefficients is a linear pass over the nonzeros.
#[derive(Clone, Debug)]
pub struct ParametricOperator {
    base: SparseOperator,
    static_values: Vec<C64>,
    components: Vec<Vec<(u32, C64)>>,
}

impl ParametricOperator {
    /// `tagged` carries `(row, col, value, component)` where `None` marks the static part.
    pub fn new(dim: usize, n_components: usize, tagged: Vec<(u32, u32, C64, Option<usize>)>) -> Self {
        let pattern = SparseOperator::from_triplets(
            dim,
            tagged
                .iter()
                .map(|&(r, c, _, _)| (r, c, C64::new(0.0, 0.0)))
                .collect(),
        );
        let mut static_values = vec![C64::new(0.0, 0.0); pattern.nnz()];
        let mut components = vec![Vec::new(); n_components];
        for (r, c, v, tag) in tagged {
            let (a, b) = (pattern.indptr[r as usize], pattern.indptr[r as usize + 1]);
            let pos = a + pattern.indices[a..b]
                .binary_search(&c)
                .expect("entry present in pattern");
            match tag {
                None => static_values[pos] += v,
                Some(k) => components[k].push((pos as u32, v)),
            }
        }
        let mut base = pattern;
        base.values.copy_from_slice(&static_values);
        Self {
            base,
            static_values,
            components,
        }
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    /// Writes `A_0 + Σ c_k A_k` into `out`, which must come from [`Self::template`].
    pub fn assemble_into(&self, coeffs: &[f64], out: &mut SparseOperator) {
        assert_eq!(coeffs.len(), self.components.len());
        out.values.copy_from_slice(&self.static_values);
        for (comp, &c) in self.components.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            for &(pos, v) in comp {
                out.values[pos as usize] += v * c;
            }
        }
    }

    pub fn assemble(&self, coeffs: &[f64]) -> SparseOperator {
        let mut out = self.template();
        self.assemble_into(coeffs, &mut out);
        out
    }

    pub fn template(&self) -> SparseOperator {
        self.base.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_are_merged_and_sorted() {
        let op = SparseOperator::from_triplets(
            2,
            vec![(1, 0, c(1.0, 0.0)), (0, 1, c(2.0, 0.0)), (1, 0, c(0.5, 1.0))],
        );
        assert_eq!(op.nnz(), 2);
        assert_eq!(op.get(1, 0), c(1.5, 1.0));
        assert_eq!(op.get(0, 0), c(0.0, 0.0));
    }

    #[test]
    fn matvec_matches_dense() {
        let op = SparseOperator::from_triplets(
            3,
            vec![
                (0, 0, c(1.0, 0.0)),
                (0, 2, c(0.0, 1.0)),
                (2, 0, c(0.0, -1.0)),
                (1, 1, c(-2.0, 0.0)),
            ],
        );
        let x = vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)];
        let mut y = vec![C64::default(); 3];
        op.apply(&x, &mut y);
        let d = op.to_dense() * nalgebra::DVector::from_vec(x);
        for i in 0..3 {
            assert!((y[i] - d[i]).norm() < 1e-15);
        }
        assert!(op.hermiticity_error() < 1e-15);
    }

    #[test]
    fn parametric_assembly() {
        let tagged = vec![
            (0, 0, c(1.0, 0.0), None),
            (0, 1, c(0.5, 0.0), Some(0)),
            (1, 0, c(0.5, 0.0), Some(0)),
            (1, 1, c(1.0, 0.0), Some(1)),
        ];
        let p = ParametricOperator::new(2, 2, tagged);
        let op = p.assemble(&[2.0, -3.0]);
        assert_eq!(op.get(0, 0), c(1.0, 0.0));
        assert_eq!(op.get(0, 1), c(1.0, 0.0));
        assert_eq!(op.get(1, 1), c(-3.0, 0.0));
    }
}
