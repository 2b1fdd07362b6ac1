//! Dense elimination-based linear algebra over an abstract scalar.
//!
//! The canonical-form pipeline has to run both in floating point and in
//! exact rational arithmetic, so rank, kernel, solve and determinant are
//! implemented once over [`Scalar`]. Pivots are chosen by an f64 magnitude
//! hint; zero decisions go through [`Scalar::is_negligible`], which ignores
//! the threshold for exact scalars.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub trait Scalar: Clone + PartialEq + std::fmt::Debug + 'static {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(v: i64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_zero(&self) -> bool;
    /// Approximate magnitude, used only for pivot selection.
    fn magnitude(&self) -> f64;
    /// Treat the value as zero at absolute threshold `tol_abs`.
    /// Exact scalars ignore the threshold and test equality with zero.
    fn is_negligible(&self, tol_abs: f64) -> bool;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_negligible(&self, tol_abs: f64) -> bool {
        self.abs() <= tol_abs
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        <BigRational as num_traits::One>::one()
    }
    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn magnitude(&self) -> f64 {
        ToPrimitive::to_f64(&self.abs()).unwrap_or(f64::INFINITY)
    }
    fn is_negligible(&self, _tol_abs: f64) -> bool {
        Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Row-major dense matrix over a generic scalar.
#[derive(Clone, PartialEq)]
pub struct Mat<F: Scalar> {
    pub rows: usize,
    pub cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> std::fmt::Debug for Mat<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Mat {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| format!("{:.4}", self.get(i, j).to_f64()))
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, F::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_i64_rows(rows: &[&[i64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        Mat::from_fn(r, c, |i, j| F::from_int(rows[i][j]))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &F {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "mat mul dims");
        let mut out: Mat<F> = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j).add(&a.mul(other.get(k, j)));
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn add_mat(&self, other: &Self) -> Self {
        assert!(self.rows == other.rows && self.cols == other.cols);
        Mat::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).add(other.get(i, j))
        })
    }

    pub fn sub_mat(&self, other: &Self) -> Self {
        assert!(self.rows == other.rows && self.cols == other.cols);
        Mat::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j).sub(other.get(i, j))
        })
    }

    pub fn scale(&self, s: &F) -> Self {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).mul(s))
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols);
        Mat::from_fn(nr, nc, |i, j| self.get(r0 + i, c0 + j).clone())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self.set(r0 + i, c0 + j, b.get(i, j).clone());
            }
        }
    }

    pub fn hstack(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        let mut m = Mat::zeros(self.rows, self.cols + other.cols);
        m.set_block(0, 0, self);
        m.set_block(0, self.cols, other);
        m
    }

    pub fn vstack(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols);
        let mut m = Mat::zeros(self.rows + other.rows, self.cols);
        m.set_block(0, 0, self);
        m.set_block(self.rows, 0, other);
        m
    }

    pub fn column(&self, j: usize) -> Vec<F> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn from_columns(cols: &[Vec<F>]) -> Self {
        let nc = cols.len();
        let nr = if nc == 0 { 0 } else { cols[0].len() };
        Mat::from_fn(nr, nc, |i, j| cols[j][i].clone())
    }

    /// Largest entry magnitude; 1.0 for an all-zero or empty matrix so that
    /// relative thresholds stay meaningful.
    pub fn scale_hint(&self) -> f64 {
        let m = self
            .data
            .iter()
            .map(|v| v.magnitude())
            .fold(0.0_f64, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.magnitude())
            .fold(0.0_f64, f64::max)
    }

    pub fn is_negligible(&self, tol_abs: f64) -> bool {
        self.data.iter().all(|v| v.is_negligible(tol_abs))
    }

    /// Zero out entries below the absolute threshold (no-op for exact
    /// scalars). Used to strip parent-scale roundoff before re-deriving
    /// structure from a sub-block.
    pub fn clean(&self, tol_abs: f64) -> Self {
        Mat::from_fn(self.rows, self.cols, |i, j| {
            let v = self.get(i, j);
            if v.is_negligible(tol_abs) {
                F::zero()
            } else {
                v.clone()
            }
        })
    }

    pub fn pow(&self, k: usize) -> Self {
        assert_eq!(self.rows, self.cols);
        let mut out = Mat::identity(self.rows);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Row echelon reduction in place. Returns pivot (row, col) pairs.
    /// Pivots are chosen by largest magnitude in the active column,
    /// ties broken by lowest row index.
    fn echelon(&mut self, tol_abs: f64) -> Vec<(usize, usize)> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row >= self.rows {
                break;
            }
            let mut best = row;
            let mut best_mag = self.get(row, col).magnitude();
            for r in row + 1..self.rows {
                let m = self.get(r, col).magnitude();
                if m > best_mag {
                    best = r;
                    best_mag = m;
                }
            }
            if self.get(best, col).is_negligible(tol_abs) {
                continue;
            }
            if best != row {
                for j in 0..self.cols {
                    self.data.swap(row * self.cols + j, best * self.cols + j);
                }
            }
            let piv = self.get(row, col).clone();
            for r in 0..self.rows {
                if r == row {
                    continue;
                }
                let factor = self.get(r, col).div(&piv);
                if factor.is_zero() {
                    continue;
                }
                for j in col..self.cols {
                    let v = self.get(r, j).sub(&factor.mul(self.get(row, j)));
                    self.set(r, j, v);
                }
                self.set(r, col, F::zero());
            }
            pivots.push((row, col));
            row += 1;
        }
        pivots
    }

    pub fn rank(&self, tol_rel: f64) -> usize {
        self.rank_abs(tol_rel * self.scale_hint())
    }

    /// Rank with an explicit absolute threshold; needed when the natural
    /// scale of the matrix is external (powers of a nilpotent, say).
    pub fn rank_abs(&self, tol_abs: f64) -> usize {
        let mut work = self.clone();
        work.echelon(tol_abs).len()
    }

    /// Basis of the right kernel, one column per free variable.
    pub fn kernel_basis(&self, tol_rel: f64) -> Mat<F> {
        self.kernel_basis_abs(tol_rel * self.scale_hint())
    }

    pub fn kernel_basis_abs(&self, tol_abs: f64) -> Mat<F> {
        let mut work = self.clone();
        let pivots = work.echelon(tol_abs);
        let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
        let free_cols: Vec<usize> = (0..self.cols)
            .filter(|c| !pivot_cols.contains(c))
            .collect();
        let mut basis = Mat::zeros(self.cols, free_cols.len());
        for (k, &fc) in free_cols.iter().enumerate() {
            basis.set(fc, k, F::one());
            for &(pr, pc) in &pivots {
                // pivot row pr: piv * x_pc + ... + a_fc * x_fc + ... = 0
                let coeff = work.get(pr, fc).clone();
                if coeff.is_zero() {
                    continue;
                }
                let piv = work.get(pr, pc).clone();
                basis.set(pc, k, coeff.div(&piv).neg());
            }
        }
        basis
    }

    /// Indices of a maximal set of linearly independent columns, chosen
    /// greedily by largest residual against the already-selected ones
    /// (ties by lowest index). The greedy rule keeps the selected basis
    /// well conditioned.
    pub fn independent_cols(&self, tol_rel: f64) -> Vec<usize> {
        self.independent_cols_abs(tol_rel * self.scale_hint())
    }

    pub fn independent_cols_abs(&self, tol_abs: f64) -> Vec<usize> {
        let mut span = Span::new(self.rows, tol_abs);
        let cols: Vec<Vec<F>> = (0..self.cols).map(|j| self.column(j)).collect();
        let mut chosen = Vec::new();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (j, c) in cols.iter().enumerate() {
                if chosen.contains(&j) {
                    continue;
                }
                let mag = span.residual_magnitude(c);
                if mag > tol_abs && best.map_or(true, |(_, bm)| mag > bm) {
                    best = Some((j, mag));
                }
            }
            match best {
                Some((j, _)) => {
                    span.try_insert(&cols[j]);
                    chosen.push(j);
                }
                None => break,
            }
        }
        chosen.sort_unstable();
        chosen
    }

    /// Solve `self * X = rhs` for square `self`. None when singular.
    pub fn solve(&self, rhs: &Self, tol_rel: f64) -> Option<Self> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(self.rows, rhs.rows);
        let tol_abs = tol_rel * self.scale_hint();
        let mut aug = self.hstack(rhs);
        let pivots = aug.echelon(tol_abs);
        if pivots.len() < self.rows || pivots.iter().any(|&(_, c)| c >= self.cols) {
            return None;
        }
        let mut x = Mat::zeros(self.cols, rhs.cols);
        for &(pr, pc) in &pivots {
            let piv = aug.get(pr, pc).clone();
            for j in 0..rhs.cols {
                x.set(pc, j, aug.get(pr, self.cols + j).div(&piv));
            }
        }
        Some(x)
    }

    pub fn inverse(&self, tol_rel: f64) -> Option<Self> {
        self.solve(&Mat::identity(self.rows), tol_rel)
    }

    pub fn determinant(&self, _tol_rel: f64) -> F {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut work = self.clone();
        let mut det = F::one();
        let mut sign_flip = false;
        for col in 0..n {
            let mut best = col;
            let mut best_mag = work.get(col, col).magnitude();
            for r in col + 1..n {
                let m = work.get(r, col).magnitude();
                if m > best_mag {
                    best = r;
                    best_mag = m;
                }
            }
            if work.get(best, col).is_zero() {
                return F::zero();
            }
            if best != col {
                for j in 0..n {
                    work.data.swap(col * n + j, best * n + j);
                }
                sign_flip = !sign_flip;
            }
            let piv = work.get(col, col).clone();
            det = det.mul(&piv);
            for r in col + 1..n {
                let factor = work.get(r, col).div(&piv);
                if factor.is_zero() {
                    continue;
                }
                for j in col..n {
                    let v = work.get(r, j).sub(&factor.mul(work.get(col, j)));
                    work.set(r, j, v);
                }
            }
        }
        if sign_flip {
            det.neg()
        } else {
            det
        }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_f64())
    }
}

impl Mat<f64> {
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Mat<BigRational> {
    /// Lossless conversion: every finite f64 is rational.
    pub fn from_dmatrix_exact(m: &DMatrix<f64>) -> Self {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
            BigRational::from_float(m[(i, j)]).expect("finite entries required")
        })
    }
}

/// Scale a vector so its largest-magnitude entry is one (no-op for zero
/// vectors). Exact division, so lossless for rational scalars; keeps the
/// iterated subspace computations scale-free for floats.
pub fn normalize_vec<F: Scalar>(v: &mut [F]) {
    let mut best = 0usize;
    let mut best_mag = 0.0;
    for (i, x) in v.iter().enumerate() {
        let m = x.magnitude();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag == 0.0 {
        return;
    }
    let pivot = v[best].clone();
    for x in v.iter_mut() {
        *x = x.div(&pivot);
    }
}

/// Incremental span of column vectors kept in eliminated form.
///
/// Supports the pivoted basis-completion steps of the canonical-form
/// construction: candidates are reduced against the current span and the
/// residual with the largest magnitude wins (ties by lowest index).
pub struct Span<F: Scalar> {
    dim_ambient: usize,
    vecs: Vec<Vec<F>>,
    pivots: Vec<usize>,
    tol_abs: f64,
}

impl<F: Scalar> Span<F> {
    pub fn new(dim_ambient: usize, tol_abs: f64) -> Self {
        Span {
            dim_ambient,
            vecs: Vec::new(),
            pivots: Vec::new(),
            tol_abs,
        }
    }

    pub fn dim(&self) -> usize {
        self.vecs.len()
    }

    /// Residual of `v` after eliminating against the span.
    pub fn reduce(&self, v: &[F]) -> Vec<F> {
        let mut r: Vec<F> = v.to_vec();
        for (w, &p) in self.vecs.iter().zip(self.pivots.iter()) {
            if r[p].is_zero() {
                continue;
            }
            let factor = r[p].div(&w[p]);
            for i in 0..self.dim_ambient {
                r[i] = r[i].sub(&factor.mul(&w[i]));
            }
            r[p] = F::zero();
        }
        r
    }

    pub fn residual_magnitude(&self, v: &[F]) -> f64 {
        self.reduce(v)
            .iter()
            .map(|x| x.magnitude())
            .fold(0.0, f64::max)
    }

    /// Insert `v` if independent of the span; returns true when inserted.
    pub fn try_insert(&mut self, v: &[F]) -> bool {
        let r = self.reduce(v);
        let (pivot, mag) = r
            .iter()
            .enumerate()
            .map(|(i, x)| (i, x.magnitude()))
            .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if mag == 0.0 || r[pivot].is_negligible(self.tol_abs) {
            return false;
        }
        self.vecs.push(r);
        self.pivots.push(pivot);
        true
    }

    pub fn contains(&self, v: &[F]) -> bool {
        let r = self.reduce(v);
        r.iter().all(|x| x.is_negligible(self.tol_abs))
    }
}
