//! Matrix-pencil algebra: regularity, Weierstrass decomposition for regular
//! pencils, Kronecker structure indices for arbitrary (possibly singular)
//! pencils, and nilpotent shift-block utilities.
//!
//! A pencil is the family `A + λE`. Regular pencils decompose under strict
//! equivalence into a slow part (`E`-block identity, `A`-block `A1`) and a
//! fast part (`E`-block nilpotent `G`, `A`-block identity). Non-regular
//! pencils only get structure indices here; the solvability analysis
//! downstream needs block existence, not transforms.

use nalgebra::DMatrix;
use num_rational::BigRational;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::linalg::{normalize_vec, Mat, Scalar, Span};

/// The pencil `A + λE` with square real coefficients.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

impl Pencil {
    pub fn new(e: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        if e.nrows() != e.ncols() || a.nrows() != a.ncols() || e.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "pencil blocks must be square and matched, got E {}x{}, A {}x{}",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if e.iter().chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch(
                "pencil entries must be finite".into(),
            ));
        }
        Ok(Pencil { e, a })
    }

    pub fn order(&self) -> usize {
        self.e.nrows()
    }
}

/// Outcome of the regularity test.
#[derive(Debug, Clone)]
pub enum Regularity {
    /// `det(A + λ*E)` is nonzero at the witness point.
    Regular {
        witness_lambda: f64,
        det_at_witness: f64,
    },
    /// All sampled determinants vanish; the interpolated polynomial
    /// `det(A + λE)` has every coefficient below threshold.
    NotRegular { det_poly_coeffs: Vec<f64> },
}

impl Regularity {
    pub fn is_regular(&self) -> bool {
        matches!(self, Regularity::Regular { .. })
    }
}

/// Weierstrass certificate: `M·E·N = diag(I_h, G)`, `M·A·N = diag(A1, I)`.
#[derive(Debug, Clone)]
pub struct WeierstrassForm {
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
    /// Slow-subsystem order.
    pub h: usize,
    pub a1: DMatrix<f64>,
    /// Fast-part nilpotent in shift-block form, (n-h) x (n-h).
    pub g: DMatrix<f64>,
    /// Shift-block sizes of `G`, largest first.
    pub block_sizes: Vec<usize>,
    /// Smallest m with `G^m = 0`; zero when there is no fast part.
    pub nilpotent_index: usize,
    pub cond_m: f64,
    pub cond_n: f64,
    pub ill_conditioned: bool,
}

/// Structure indices of the Kronecker canonical form.
///
/// `zero_block` counts the zero minimal indices (rows from the left ones,
/// columns from the right ones). `left_indices` are the sizes of the wide
/// `ζ x (ζ+1)` blocks, `right_indices` the sizes of the tall `(η+1) x η`
/// blocks. `nilpotent_sizes` lists the orders of the `I + λH` blocks and
/// `finite_block_order` the order of the finite-eigenvalue block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KroneckerStructure {
    pub zero_block: (usize, usize),
    pub left_indices: Vec<usize>,
    pub right_indices: Vec<usize>,
    pub nilpotent_sizes: Vec<usize>,
    pub finite_block_order: usize,
    pub diagnostic: Option<String>,
}

/// Threshold for inverting matrices that are invertible by construction
/// (basis changes, normalizers). Rank *decisions* use `Config::tol_rank`;
/// these inversions should only fail at machine-level degeneracy.
pub(crate) const INVERT_TOL: f64 = 1e-14;

/// Generic canonical pair used by both the f64 and the exact pipeline.
pub(crate) struct CanonicalPair<F: Scalar> {
    pub m: Mat<F>,
    pub n: Mat<F>,
    pub h: usize,
    pub a1: Mat<F>,
    pub block_sizes: Vec<usize>,
}

impl<F: Scalar> CanonicalPair<F> {
    pub fn g(&self) -> Mat<F> {
        canonical_nilpotent(&self.block_sizes)
    }
}

/// Shift-block nilpotent `diag(G_1, ..., G_l)` with ones on each block's
/// superdiagonal.
pub(crate) fn canonical_nilpotent<F: Scalar>(block_sizes: &[usize]) -> Mat<F> {
    let q: usize = block_sizes.iter().sum();
    let mut g = Mat::zeros(q, q);
    let mut off = 0;
    for &m in block_sizes {
        for i in 0..m.saturating_sub(1) {
            g.set(off + i, off + i + 1, F::one());
        }
        off += m;
    }
    g
}

/// λ sample sequence 0, 1, -1, 2, -2, ...: a degree-≤n polynomial vanishing
/// at n+1 of these points is identically zero; 2n+1 samples are used.
fn lambda_candidates(n: usize) -> Vec<i64> {
    let mut v = vec![0i64];
    for k in 1..=n as i64 {
        v.push(k);
        v.push(-k);
    }
    v
}

fn pencil_at<F: Scalar>(e: &Mat<F>, a: &Mat<F>, lambda: i64) -> Mat<F> {
    a.add_mat(&e.scale(&F::from_int(lambda)))
}

/// First λ0 in the sample sequence where `A + λ0·E` has full rank.
pub(crate) fn find_regular_point<F: Scalar>(e: &Mat<F>, a: &Mat<F>, cfg: &Config) -> Option<i64> {
    let n = e.rows;
    lambda_candidates(n)
        .into_iter()
        .find(|&l| pencil_at(e, a, l).rank(cfg.tol_rank) == n)
}

/// Coefficients of `det(A + λE)` by interpolation at the integer nodes
/// 0, 1, -1, ..., using the first n+1 candidates.
fn interpolate_det_poly<F: Scalar>(e: &Mat<F>, a: &Mat<F>, cfg: &Config) -> Vec<F> {
    let n = e.rows;
    let nodes: Vec<i64> = lambda_candidates(n).into_iter().take(n + 1).collect();
    let dets: Vec<F> = nodes
        .iter()
        .map(|&l| pencil_at(e, a, l).determinant(cfg.tol_rank))
        .collect();
    // Vandermonde solve V c = d with V[i][j] = node_i^j.
    let k = nodes.len();
    let vand = Mat::from_fn(k, k, |i, j| {
        let mut p = F::one();
        for _ in 0..j {
            p = p.mul(&F::from_int(nodes[i]));
        }
        p
    });
    let rhs = Mat::from_fn(k, 1, |i, _| dets[i].clone());
    let coeffs = vand
        .solve(&rhs, cfg.tol_rank)
        .expect("integer Vandermonde at distinct nodes is invertible");
    coeffs.column(0)
}

pub(crate) fn is_regular_impl<F: Scalar>(e: &Mat<F>, a: &Mat<F>, cfg: &Config) -> Regularity {
    if let Some(l) = find_regular_point(e, a, cfg) {
        let det = pencil_at(e, a, l).determinant(cfg.tol_rank).to_f64();
        return Regularity::Regular {
            witness_lambda: l as f64,
            det_at_witness: det,
        };
    }
    let coeffs = interpolate_det_poly(e, a, cfg)
        .iter()
        .map(|c| c.to_f64())
        .collect();
    Regularity::NotRegular {
        det_poly_coeffs: coeffs,
    }
}

/// Decide regularity of the pencil: `det(A + λE)` not identically zero.
pub fn is_regular(p: &Pencil, cfg: &Config) -> Regularity {
    if cfg.exact {
        is_regular_impl(
            &Mat::<BigRational>::from_dmatrix_exact(&p.e),
            &Mat::<BigRational>::from_dmatrix_exact(&p.a),
            cfg,
        )
    } else {
        is_regular_impl(&Mat::from_dmatrix(&p.e), &Mat::from_dmatrix(&p.a), cfg)
    }
}

/// Basis of `im(W^j)` at stabilization. Returns `(h, nu, basis)` with
/// `h = dim im(W^nu) = dim im(W^{nu+1})`.
///
/// The chain is computed by repeatedly mapping a normalized basis through
/// `W` and re-selecting independent columns, so no explicit power of `W` is
/// formed; tolerances stay relative to freshly normalized data.
fn image_chain<F: Scalar>(w: &Mat<F>, cfg: &Config) -> (usize, usize, Vec<Vec<F>>) {
    let n = w.rows;
    let mut basis: Vec<Vec<F>> = (0..n)
        .map(|i| {
            let mut v = vec![F::zero(); n];
            v[i] = F::one();
            v
        })
        .collect();
    // Basis columns are normalized to unit max-entry, so anything the map
    // produces below tol_rank * scale(W) is roundoff, not a direction.
    let map_tol = cfg.tol_rank * w.scale_hint();
    let mut nu = 0;
    loop {
        let mapped: Vec<Vec<F>> = basis.iter().map(|b| mat_vec(w, b)).collect();
        let m = Mat::from_columns(&mapped);
        let keep = m.independent_cols_abs(map_tol);
        if keep.len() == basis.len() {
            return (basis.len(), nu, basis);
        }
        basis = keep
            .iter()
            .map(|&j| {
                let mut c = m.column(j);
                normalize_vec(&mut c);
                c
            })
            .collect();
        nu += 1;
    }
}

/// Kernel bases of `Y^j` for j = 1, 2, ... until the dimension stabilizes;
/// level j sits at index j-1. Computed through preimages of the previous
/// level, never through explicit powers.
fn kernel_chain<F: Scalar>(y: &Mat<F>, cfg: &Config) -> Vec<Mat<F>> {
    let q = y.rows;
    let normalize = |m: &Mat<F>| -> Mat<F> {
        let cols: Vec<Vec<F>> = (0..m.cols)
            .map(|c| {
                let mut v = m.column(c);
                normalize_vec(&mut v);
                v
            })
            .collect();
        Mat::from_columns(&cols)
    };
    let mut levels: Vec<Mat<F>> = vec![normalize(&y.kernel_basis(cfg.tol_rank))];
    loop {
        let prev = levels.last().unwrap();
        if prev.cols == q {
            break;
        }
        // ker(Y^{j+1}) = preimage of span(prev): x with Yx = prev·c.
        let aug = y.hstack(&prev.scale(&F::one().neg()));
        let kb = aug.kernel_basis(cfg.tol_rank);
        let xs: Vec<Vec<F>> = (0..kb.cols).map(|c| kb.column(c)[..q].to_vec()).collect();
        let xm = Mat::from_columns(&xs);
        let keep = xm.independent_cols(cfg.tol_rank);
        if keep.len() <= prev.cols {
            break;
        }
        let next = keep.iter().map(|&j| xm.column(j)).collect::<Vec<_>>();
        levels.push(normalize(&Mat::from_columns(&next)));
    }
    levels
}

/// Jordan-chain canonicalization of a nilpotent matrix `Y`: returns `S` with
/// `S^{-1} Y S` in shift-block form, and the block sizes (largest first).
///
/// Chain tops are picked greedily by largest residual column norm against the
/// already-spanned subspace, ties broken by lowest index.
pub(crate) fn nilpotent_jordan<F: Scalar>(
    y: &Mat<F>,
    cfg: &Config,
) -> Result<(Mat<F>, Vec<usize>)> {
    let q = y.rows;
    if q == 0 {
        return Ok((Mat::identity(0), Vec::new()));
    }
    let tol_abs = cfg.tol_rank * y.scale_hint().max(1.0);

    // kernels[j] = basis of ker(Y^j); nilpotency index = first j covering
    // the whole space.
    let levels = kernel_chain(y, cfg);
    let nu = levels.len();
    if levels.last().map_or(true, |k| k.cols != q) {
        return Err(Error::Numerical(
            "fast-part matrix is not numerically nilpotent".into(),
        ));
    }
    let mut kernels: Vec<Mat<F>> = vec![Mat::zeros(q, 0)];
    kernels.extend(levels);

    let mut tops: Vec<(Vec<F>, usize)> = Vec::new();
    let mut fronts: Vec<Vec<F>> = Vec::new();
    for j in (1..=nu).rev() {
        let mut span = Span::new(q, tol_abs);
        for c in 0..kernels[j - 1].cols {
            span.try_insert(&kernels[j - 1].column(c));
        }
        let mut new_fronts = Vec::new();
        for f in &fronts {
            let yf = mat_vec(y, f);
            if !span.try_insert(&yf) {
                return Err(Error::Numerical(
                    "chain vectors collapsed during nilpotent canonicalization".into(),
                ));
            }
            new_fronts.push(yf);
        }
        let candidates: Vec<Vec<F>> = (0..kernels[j].cols).map(|c| kernels[j].column(c)).collect();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (idx, cand) in candidates.iter().enumerate() {
                let mag = span.residual_magnitude(cand);
                if mag > tol_abs && best.map_or(true, |(_, bm)| mag > bm) {
                    best = Some((idx, mag));
                }
            }
            match best {
                Some((idx, _)) => {
                    let v = candidates[idx].clone();
                    span.try_insert(&v);
                    new_fronts.push(v.clone());
                    tops.push((v, j));
                }
                None => break,
            }
        }
        fronts = new_fronts;
    }

    let mut block_sizes = Vec::new();
    let mut columns: Vec<Vec<F>> = Vec::new();
    for (top, height) in &tops {
        block_sizes.push(*height);
        // chain ordered so that Y maps each column to the previous one
        let mut chain = vec![top.clone()];
        for _ in 1..*height {
            let last = chain.last().unwrap();
            chain.push(mat_vec(y, last));
        }
        for v in chain.into_iter().rev() {
            columns.push(v);
        }
    }
    let s = Mat::from_columns(&columns);
    if s.rows != q || s.cols != q {
        return Err(Error::Numerical(format!(
            "nilpotent chain construction produced {} of {} basis vectors",
            s.cols, q
        )));
    }
    if s.inverse(INVERT_TOL).is_none() {
        return Err(Error::Numerical(
            "nilpotent chain basis is numerically singular".into(),
        ));
    }
    Ok((s, block_sizes))
}

fn mat_vec<F: Scalar>(m: &Mat<F>, v: &[F]) -> Vec<F> {
    let mut out = vec![F::zero(); m.rows];
    for i in 0..m.rows {
        let mut acc = F::zero();
        for j in 0..m.cols {
            if !v[j].is_zero() {
                acc = acc.add(&m.get(i, j).mul(&v[j]));
            }
        }
        out[i] = acc;
    }
    out
}

/// Weierstrass decomposition of a regular pencil.
///
/// Picks λ0 with `A + λ0·E` invertible, forms `W = (A+λ0E)^{-1}E`, splits
/// the space into the invertible and nilpotent invariant subspaces of `W`,
/// normalizes the slow block to identity and brings the fast nilpotent to
/// shift-block form.
pub(crate) fn weierstrass_impl<F: Scalar>(
    e: &Mat<F>,
    a: &Mat<F>,
    cfg: &Config,
) -> Result<CanonicalPair<F>> {
    let n = e.rows;
    // Among the sample points where A + λE is invertible, prefer the one
    // with the least-amplifying resolvent: a λ0 close to a generalized
    // eigenvalue blows up W and poisons every tolerance downstream.
    let mut best: Option<(i64, Mat<F>, f64)> = None;
    for l in lambda_candidates(n) {
        let f = pencil_at(e, a, l);
        if f.rank(cfg.tol_rank) < n {
            continue;
        }
        if let Some(f_inv) = f.inverse(INVERT_TOL) {
            let amp = f_inv.max_magnitude();
            if best.as_ref().map_or(true, |&(_, _, b)| amp < b) {
                best = Some((l, f_inv, amp));
            }
        }
    }
    let (lambda0, f_inv, _) = best.ok_or(Error::NotRegular)?;
    let w = f_inv.mul(e);

    // Split into the invertible and nilpotent invariant subspaces of W:
    // the image chain stabilizes at the slow subspace, the kernel chain at
    // the fast one.
    let (h, _nu, slow_basis) = image_chain(&w, cfg);
    let t2 = if h == n {
        Mat::zeros(n, 0)
    } else {
        kernel_chain(&w, cfg)
            .pop()
            .unwrap_or_else(|| Mat::zeros(n, 0))
    };
    if t2.cols != n - h {
        return Err(Error::Numerical(format!(
            "invariant-subspace split mismatch: kernel {} expected {}",
            t2.cols,
            n - h
        )));
    }
    let mut t = Mat::zeros(n, n);
    for (k, col) in slow_basis.iter().enumerate() {
        for i in 0..n {
            t.set(i, k, col[i].clone());
        }
    }
    t.set_block(0, h, &t2);
    let t_inv = t
        .inverse(INVERT_TOL)
        .ok_or_else(|| Error::Numerical("subspace basis numerically singular".into()))?;

    let w_t = t_inv.mul(&w).mul(&t);
    // Off-diagonal blocks and noise inside the fast block are roundoff at
    // the scale of the conjugated matrix; strip them before re-deriving the
    // nilpotent structure.
    let wt_tol = cfg.tol_rank * w_t.scale_hint();
    let w1 = w_t.block(0, 0, h, h);
    let w2 = w_t.block(h, h, n - h, n - h).clean(wt_tol);

    let w1_inv = w1
        .inverse(INVERT_TOL)
        .ok_or_else(|| Error::Numerical("slow block not invertible".into()))?;
    // A1 = W1^{-1} - λ0 I
    let mut a1 = w1_inv.clone();
    for i in 0..h {
        a1.set(i, i, a1.get(i, i).sub(&F::from_int(lambda0)));
    }

    // Fast part: G0 = (I - λ0 W2)^{-1} W2, then shift-block form.
    let q = n - h;
    let mut j_mat = Mat::identity(q);
    j_mat = j_mat.sub_mat(&w2.scale(&F::from_int(lambda0)));
    let j_inv = j_mat
        .inverse(INVERT_TOL)
        .ok_or_else(|| Error::Numerical("fast normalizer not invertible".into()))?;
    let g0 = j_inv.mul(&w2).clean(wt_tol);
    let (s, block_sizes) = nilpotent_jordan(&g0, cfg)?;
    let s_inv = s
        .inverse(INVERT_TOL)
        .ok_or_else(|| Error::Numerical("chain basis singular".into()))?;

    // M = diag(W1^{-1}, S^{-1} J^{-1}) T^{-1} F^{-1},  N = T diag(I, S)
    let mut row_scale = Mat::zeros(n, n);
    row_scale.set_block(0, 0, &w1_inv);
    row_scale.set_block(h, h, &s_inv.mul(&j_inv));
    let m = row_scale.mul(&t_inv).mul(&f_inv);
    let mut n_mat = t;
    let nt2 = n_mat.block(0, h, n, q).mul(&s);
    n_mat.set_block(0, h, &nt2);

    Ok(CanonicalPair {
        m,
        n: n_mat,
        h,
        a1,
        block_sizes,
    })
}

fn cond_estimate(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

fn pair_to_form<F: Scalar>(pair: CanonicalPair<F>, cfg: &Config) -> WeierstrassForm {
    let m = pair.m.to_f64();
    let n = pair.n.to_f64();
    let cond_m = cond_estimate(&m);
    let cond_n = cond_estimate(&n);
    let nilpotent_index = pair.block_sizes.iter().copied().max().unwrap_or(0);
    WeierstrassForm {
        a1: pair.a1.to_f64(),
        g: pair.g().to_f64(),
        h: pair.h,
        block_sizes: pair.block_sizes,
        nilpotent_index,
        ill_conditioned: cond_m > cfg.cond_cap || cond_n > cfg.cond_cap,
        cond_m,
        cond_n,
        m,
        n,
    }
}

/// Weierstrass decomposition of a regular pencil (errors with `NotRegular`
/// otherwise). Any `(M, N)` satisfying the reconstruction identity is a
/// valid output; callers must treat the pair as a certificate, not a
/// canonical representative.
pub fn weierstrass(p: &Pencil, cfg: &Config) -> Result<WeierstrassForm> {
    if cfg.exact {
        let e = Mat::<BigRational>::from_dmatrix_exact(&p.e);
        let a = Mat::<BigRational>::from_dmatrix_exact(&p.a);
        Ok(pair_to_form(weierstrass_impl(&e, &a, cfg)?, cfg))
    } else {
        let e = Mat::from_dmatrix(&p.e);
        let a = Mat::from_dmatrix(&p.a);
        Ok(pair_to_form(weierstrass_impl(&e, &a, cfg)?, cfg))
    }
}

/// Convolution matrix whose kernel is the space of polynomial solutions
/// `(A + λE) x(λ) = 0` of degree ≤ k: block rows A; E,A; ...; E.
fn poly_kernel_matrix<F: Scalar>(e: &Mat<F>, a: &Mat<F>, k: usize) -> Mat<F> {
    let n = e.rows;
    let mut s = Mat::zeros((k + 2) * n, (k + 1) * n);
    for blk in 0..=k {
        s.set_block(blk * n, blk * n, a);
        s.set_block((blk + 1) * n, blk * n, e);
    }
    s
}

/// Block-bidiagonal Toeplitz matrix (E on the diagonal, A above) whose rank
/// defect tracks the infinite elementary divisors.
fn infinite_structure_matrix<F: Scalar>(e: &Mat<F>, a: &Mat<F>, j: usize) -> Mat<F> {
    let n = e.rows;
    let mut m = Mat::zeros(j * n, j * n);
    for blk in 0..j {
        m.set_block(blk * n, blk * n, e);
        if blk + 1 < j {
            m.set_block(blk * n, (blk + 1) * n, a);
        }
    }
    m
}

/// Minimal indices (one side) from the kernel dimensions of the convolution
/// matrices: `d_k - d_{k-1}` counts indices ≤ k.
fn minimal_indices<F: Scalar>(e: &Mat<F>, a: &Mat<F>, cfg: &Config) -> Vec<usize> {
    let n = e.rows;
    let mut indices = Vec::new();
    let mut d_prev = 0usize;
    let mut count_prev = 0usize;
    for k in 0..=n {
        let s = poly_kernel_matrix(e, a, k);
        let d_k = (k + 1) * n - s.rank(cfg.tol_rank);
        let count_k = d_k.saturating_sub(d_prev); // #{indices ≤ k}
        for _ in 0..count_k.saturating_sub(count_prev) {
            indices.push(k);
        }
        d_prev = d_k;
        count_prev = count_k;
    }
    indices
}

pub(crate) fn kronecker_structure_impl<F: Scalar>(
    e: &Mat<F>,
    a: &Mat<F>,
    cfg: &Config,
) -> KroneckerStructure {
    let n = e.rows;
    let right_min = minimal_indices(e, a, cfg); // column (ε) indices: wide blocks
    let left_min = minimal_indices(&e.transpose(), &a.transpose(), cfg); // row (η) indices

    let n0_cols = right_min.iter().filter(|&&x| x == 0).count();
    let n0_rows = left_min.iter().filter(|&&x| x == 0).count();
    let left_indices: Vec<usize> = right_min.iter().copied().filter(|&x| x > 0).collect();
    let right_indices: Vec<usize> = left_min.iter().copied().filter(|&x| x > 0).collect();

    // ν_j = Σ_i min(j, ρ_i) from the rank of the block-bidiagonal matrix.
    let w_plus = left_indices.len();
    let core_cols = n - n0_cols - w_plus; // Σε + Ση + Σρ + f
    let mut nilpotent_sizes = Vec::new();
    let mut nu_prev = 0usize;
    let mut ge_prev = usize::MAX;
    for j in 1..=n {
        let r = infinite_structure_matrix(e, a, j).rank(cfg.tol_rank);
        let nu_j = (j * core_cols).saturating_sub(r);
        let ge_j = nu_j.saturating_sub(nu_prev); // #{ρ_i ≥ j}
        if ge_j == 0 {
            break;
        }
        let exactly = if ge_prev == usize::MAX { 0 } else { ge_prev - ge_j };
        for _ in 0..exactly {
            nilpotent_sizes.push(j - 1);
        }
        ge_prev = ge_j;
        nu_prev = nu_j;
        if j == n {
            for _ in 0..ge_j {
                nilpotent_sizes.push(j);
            }
        }
    }
    if ge_prev != usize::MAX && nilpotent_sizes.iter().sum::<usize>() < nu_prev {
        // close out blocks that ended exactly at the last examined size
        let missing = nu_prev - nilpotent_sizes.iter().sum::<usize>();
        let last_ge = ge_prev;
        if last_ge > 0 && missing % last_ge == 0 {
            let size = missing / last_ge;
            for _ in 0..last_ge {
                nilpotent_sizes.push(size);
            }
        }
    }
    nilpotent_sizes.sort_unstable_by(|x, y| y.cmp(x));

    let rows_used: usize = n0_rows
        + left_indices.iter().sum::<usize>()
        + right_indices.iter().map(|&x| x + 1).sum::<usize>()
        + nilpotent_sizes.iter().sum::<usize>();
    let finite_block_order = n.saturating_sub(rows_used);

    // Bookkeeping cross-check; tolerance trouble shows up here.
    let cols_used: usize = n0_cols
        + left_indices.iter().map(|&x| x + 1).sum::<usize>()
        + right_indices.iter().sum::<usize>()
        + nilpotent_sizes.iter().sum::<usize>()
        + finite_block_order;
    let diagnostic = if cols_used != n {
        Some(format!(
            "structure bookkeeping mismatch: columns {} of {}; results are tolerance-sensitive",
            cols_used, n
        ))
    } else {
        None
    };

    KroneckerStructure {
        zero_block: (n0_rows, n0_cols),
        left_indices,
        right_indices,
        nilpotent_sizes,
        finite_block_order,
        diagnostic,
    }
}

/// Structure indices of the Kronecker form, computed by rank peeling on
/// convolution matrices of the pencil; no transforms are returned.
pub fn kronecker_structure(p: &Pencil, cfg: &Config) -> KroneckerStructure {
    if cfg.exact {
        kronecker_structure_impl(
            &Mat::<BigRational>::from_dmatrix_exact(&p.e),
            &Mat::<BigRational>::from_dmatrix_exact(&p.a),
            cfg,
        )
    } else {
        kronecker_structure_impl(&Mat::from_dmatrix(&p.e), &Mat::from_dmatrix(&p.a), cfg)
    }
}

/// Basis of `{X : XG = GX}` for the shift-block nilpotent with the given
/// block sizes. The space has dimension `Σ_{j,k} min(m_j, m_k)`; each basis
/// element is a single stripe of ones along an admissible diagonal of one
/// block pair.
pub(crate) fn centralizer_basis_impl<F: Scalar>(block_sizes: &[usize]) -> Vec<Mat<F>> {
    let q: usize = block_sizes.iter().sum();
    let offsets: Vec<usize> = block_sizes
        .iter()
        .scan(0, |acc, &m| {
            let o = *acc;
            *acc += m;
            Some(o)
        })
        .collect();
    let mut basis = Vec::new();
    for (bj, &mj) in block_sizes.iter().enumerate() {
        for (bk, &mk) in block_sizes.iter().enumerate() {
            let d0 = mk.saturating_sub(mj);
            for s in 0..mj.min(mk) {
                let d = d0 + s;
                let mut x = Mat::zeros(q, q);
                let mut i = 0;
                while i < mj && i + d < mk {
                    x.set(offsets[bj] + i, offsets[bk] + i + d, F::one());
                    i += 1;
                }
                basis.push(x);
            }
        }
    }
    basis
}

/// Spanning set of the commutant of the shift-block nilpotent `G`.
pub fn nilpotent_centralizer_basis(block_sizes: &[usize]) -> Vec<DMatrix<f64>> {
    centralizer_basis_impl::<f64>(block_sizes)
        .into_iter()
        .map(|m| m.to_f64())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cfg() -> Config {
        Config::default()
    }

    fn reconstruct_error(p: &Pencil, w: &WeierstrassForm) -> f64 {
        let n = p.order();
        let h = w.h;
        let mut target_e = DMatrix::zeros(n, n);
        for i in 0..h {
            target_e[(i, i)] = 1.0;
        }
        target_e.view_mut((h, h), (n - h, n - h)).copy_from(&w.g);
        let mut target_a = DMatrix::zeros(n, n);
        target_a.view_mut((0, 0), (h, h)).copy_from(&w.a1);
        for i in h..n {
            target_a[(i, i)] = 1.0;
        }
        let err_e = (&w.m * &p.e * &w.n - target_e).norm();
        let err_a = (&w.m * &p.a * &w.n - target_a).norm();
        err_e + err_a
    }

    #[test]
    fn identity_pencil_is_regular() {
        let p = Pencil::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
        match is_regular(&p, &cfg()) {
            Regularity::Regular {
                witness_lambda,
                det_at_witness,
            } => {
                assert_eq!(witness_lambda, 1.0);
                assert!((det_at_witness - 1.0).abs() < 1e-12);
            }
            _ => panic!("identity pencil must be regular"),
        }
    }

    #[test]
    fn rank_deficient_pair_is_not_regular() {
        // E has a single entry in the (2,3) position, A = diag(0,1,1):
        // det(A + λE) vanishes identically.
        let e = dmatrix![0.0,0.0,0.0; 0.0,0.0,1.0; 0.0,0.0,0.0];
        let a = dmatrix![0.0,0.0,0.0; 0.0,1.0,0.0; 0.0,0.0,1.0];
        let p = Pencil::new(e, a).unwrap();
        match is_regular(&p, &cfg()) {
            Regularity::NotRegular { det_poly_coeffs } => {
                assert!(det_poly_coeffs.iter().all(|c| c.abs() < 1e-9));
            }
            _ => panic!("pencil must not be regular"),
        }
        // exact mode agrees
        assert!(!is_regular(&p, &Config::exact()).is_regular());
    }

    #[test]
    fn shifted_mass_pair_is_not_regular() {
        let e = dmatrix![1.0,0.0,0.0; 2.0,1.0,0.0; 0.0,1.0,0.0];
        let a = dmatrix![1.0,-1.0,0.0; 2.0,0.0,2.0; 0.0,2.0,2.0];
        let p = Pencil::new(e, a).unwrap();
        assert!(!is_regular(&p, &cfg()).is_regular());
        assert!(!is_regular(&p, &Config::exact()).is_regular());
    }

    #[test]
    fn weierstrass_diag_pair() {
        let p = Pencil::new(
            DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0]),
            DMatrix::from_diagonal(&nalgebra::dvector![-1.0, 1.0]),
        )
        .unwrap();
        let w = weierstrass(&p, &cfg()).unwrap();
        assert_eq!(w.h, 1);
        assert_eq!(w.block_sizes, vec![1]);
        assert!((w.a1[(0, 0)] + 1.0).abs() < 1e-10);
        assert!(reconstruct_error(&p, &w) < 1e-8);
    }

    #[test]
    fn weierstrass_two_trivial_fast_blocks() {
        let e = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0, 0.0]);
        let a = DMatrix::from_diagonal(&nalgebra::dvector![-1.0, 1.0, 1.0]);
        let p = Pencil::new(e, a).unwrap();
        let w = weierstrass(&p, &cfg()).unwrap();
        assert_eq!(w.h, 1);
        assert_eq!(w.block_sizes, vec![1, 1]);
        assert_eq!(w.nilpotent_index, 1);
        assert!(w.g.iter().all(|&v| v == 0.0));
        assert!(reconstruct_error(&p, &w) < 1e-8);
    }

    fn random_invertible(n: usize, rng: &mut StdRng) -> DMatrix<f64> {
        loop {
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let svd = m.clone().svd(false, false);
            let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
            let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
            if smin > 0.05 * smax && smin > 1e-3 {
                return m;
            }
        }
    }

    /// Random regular pencil assembled from a known canonical pair.
    fn random_regular_pencil(
        n: usize,
        rng: &mut StdRng,
    ) -> (Pencil, usize, Vec<usize>) {
        let h = rng.gen_range(0..=n);
        let mut rest = n - h;
        let mut blocks = Vec::new();
        while rest > 0 {
            let b = rng.gen_range(1..=rest.min(3));
            blocks.push(b);
            rest -= b;
        }
        blocks.sort_unstable_by(|a, b| b.cmp(a));
        let g = canonical_nilpotent::<f64>(&blocks).to_f64();
        let mut e = DMatrix::zeros(n, n);
        for i in 0..h {
            e[(i, i)] = 1.0;
        }
        e.view_mut((h, h), (n - h, n - h)).copy_from(&g);
        let mut a = DMatrix::from_fn(n, n, |i, j| {
            if i < h && j < h {
                rng.gen_range(-2.0..2.0)
            } else {
                0.0
            }
        });
        for i in h..n {
            a[(i, i)] = 1.0;
        }
        let u = random_invertible(n, rng);
        let v = random_invertible(n, rng);
        (
            Pencil::new(&u * e * &v, &u * a * &v).unwrap(),
            h,
            blocks,
        )
    }

    #[test]
    fn weierstrass_roundtrip_random() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..25 {
            let n = rng.gen_range(1..=6);
            let (p, h, blocks) = random_regular_pencil(n, &mut rng);
            let w = weierstrass(&p, &cfg()).unwrap();
            assert_eq!(w.h, h, "slow order is an invariant");
            assert_eq!(w.block_sizes, blocks, "fast structure is an invariant");
            let scale = p.e.norm() + p.a.norm();
            assert!(
                reconstruct_error(&p, &w) <= 1e-8 * scale.max(1.0),
                "reconstruction within tolerance"
            );
        }
    }

    #[test]
    fn weierstrass_exact_mode_matches_float() {
        let e = dmatrix![1.0,0.0,0.0; 2.0,1.0,0.0; 0.0,1.0,1.0];
        let a = dmatrix![1.0,-1.0,0.0; 2.0,0.0,2.0; 0.0,2.0,1.0];
        let p = Pencil::new(e, a).unwrap();
        let wf = weierstrass(&p, &cfg());
        let we = weierstrass(&p, &Config::exact());
        match (wf, we) {
            (Ok(wf), Ok(we)) => {
                assert_eq!(wf.h, we.h);
                assert_eq!(wf.block_sizes, we.block_sizes);
            }
            (Err(Error::NotRegular), Err(Error::NotRegular)) => {}
            (a, b) => panic!(
                "modes disagree: float={:?} exact={:?}",
                a.map(|w| w.h),
                b.map(|w| w.h)
            ),
        }
    }

    #[test]
    fn nilpotency_of_g() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.gen_range(2..=6);
            let (p, _, _) = random_regular_pencil(n, &mut rng);
            let w = weierstrass(&p, &cfg()).unwrap();
            let q = w.g.nrows();
            if q == 0 || w.nilpotent_index == 0 {
                continue;
            }
            let mut gk = DMatrix::<f64>::identity(q, q);
            for _ in 0..w.nilpotent_index {
                gk *= &w.g;
            }
            assert!(gk.iter().all(|&v| v == 0.0), "G^index must vanish exactly");
            if w.nilpotent_index > 1 {
                let mut gk1 = DMatrix::<f64>::identity(q, q);
                for _ in 0..w.nilpotent_index - 1 {
                    gk1 *= &w.g;
                }
                assert!(gk1.iter().any(|&v| v != 0.0));
            }
        }
    }

    #[test]
    fn kronecker_on_regular_pencil() {
        let e = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 0.0, 0.0]);
        let a = DMatrix::from_diagonal(&nalgebra::dvector![-1.0, 1.0, 1.0]);
        let p = Pencil::new(e, a).unwrap();
        let k = kronecker_structure(&p, &cfg());
        assert_eq!(k.zero_block, (0, 0));
        assert!(k.left_indices.is_empty());
        assert!(k.right_indices.is_empty());
        assert_eq!(k.nilpotent_sizes, vec![1, 1]);
        assert_eq!(k.finite_block_order, 1);
        assert!(k.diagnostic.is_none());
    }

    #[test]
    fn kronecker_on_singular_pencil() {
        let e = dmatrix![0.0,0.0,0.0; 0.0,0.0,1.0; 0.0,0.0,0.0];
        let a = dmatrix![0.0,0.0,0.0; 0.0,1.0,0.0; 0.0,0.0,1.0];
        let p = Pencil::new(e, a).unwrap();
        let k = kronecker_structure(&p, &Config::exact());
        assert_eq!(k.zero_block, (1, 1));
        assert!(k.left_indices.is_empty());
        assert!(k.right_indices.is_empty());
        assert_eq!(k.nilpotent_sizes, vec![2]);
        assert_eq!(k.finite_block_order, 0);
        // non-regular: at least one singular index present
        assert!(k.zero_block.0 + k.zero_block.1 > 0);
    }

    #[test]
    fn kronecker_zero_pencil() {
        let p = Pencil::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let k = kronecker_structure(&p, &cfg());
        assert_eq!(k.zero_block, (1, 1));
        assert!(k.left_indices.is_empty() && k.right_indices.is_empty());
        assert!(k.nilpotent_sizes.is_empty());
        assert_eq!(k.finite_block_order, 0);
    }

    #[test]
    fn kronecker_dimension_bookkeeping_random() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..40 {
            let n = rng.gen_range(1..=5);
            let e = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2i64..=2) as f64);
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2i64..=2) as f64);
            let p = Pencil::new(e, a).unwrap();
            let k = kronecker_structure(&p, &Config::exact());
            let rows = k.zero_block.0
                + k.left_indices.iter().sum::<usize>()
                + k.right_indices.iter().map(|&x| x + 1).sum::<usize>()
                + k.nilpotent_sizes.iter().sum::<usize>()
                + k.finite_block_order;
            let cols = k.zero_block.1
                + k.left_indices.iter().map(|&x| x + 1).sum::<usize>()
                + k.right_indices.iter().sum::<usize>()
                + k.nilpotent_sizes.iter().sum::<usize>()
                + k.finite_block_order;
            assert_eq!(rows, n, "row bookkeeping");
            assert_eq!(cols, n, "column bookkeeping");
        }
    }

    #[test]
    fn kronecker_agrees_with_weierstrass_on_regular() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..15 {
            let n = rng.gen_range(1..=5);
            let (p, h, blocks) = random_regular_pencil(n, &mut rng);
            let k = kronecker_structure(&p, &cfg());
            assert_eq!(k.zero_block, (0, 0));
            assert!(k.left_indices.is_empty() && k.right_indices.is_empty());
            assert_eq!(k.finite_block_order, h);
            let mut sizes = k.nilpotent_sizes.clone();
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            assert_eq!(sizes, blocks);
        }
    }

    #[test]
    fn centralizer_single_block() {
        let basis = nilpotent_centralizer_basis(&[2]);
        assert_eq!(basis.len(), 2);
        // {I, G}
        assert!(basis.iter().any(|b| *b == DMatrix::identity(2, 2)));
        assert!(basis
            .iter()
            .any(|b| *b == dmatrix![0.0, 1.0; 0.0, 0.0]));
    }

    #[test]
    fn centralizer_two_trivial_blocks_spans_everything() {
        let basis = nilpotent_centralizer_basis(&[1, 1]);
        assert_eq!(basis.len(), 4);
    }

    #[test]
    fn centralizer_dimension_and_commutation() {
        for blocks in [vec![2, 1], vec![3, 2], vec![2, 2, 1], vec![3]] {
            let basis = nilpotent_centralizer_basis(&blocks);
            let expected: usize = blocks
                .iter()
                .flat_map(|&mj| blocks.iter().map(move |&mk| mj.min(mk)))
                .sum();
            assert_eq!(basis.len(), expected);
            let g = canonical_nilpotent::<f64>(&blocks).to_f64();
            for x in &basis {
                let comm = x * &g - &g * x;
                assert!(comm.iter().all(|&v| v == 0.0), "XG = GX exactly");
            }
            // kernel-dimension oracle: solve XG - GX = 0 as a linear system
            let q: usize = blocks.iter().sum();
            let mut sys = Mat::<f64>::zeros(q * q, q * q);
            let gm = Mat::<f64>::from_dmatrix(&g);
            for r in 0..q {
                for c in 0..q {
                    let row = r * q + c;
                    for k in 0..q {
                        // (XG)_{rc} = X_{rk} G_{kc}
                        let v = sys.get(row, r * q + k) + gm.get(k, c);
                        sys.set(row, r * q + k, v);
                        // (GX)_{rc} = G_{rk} X_{kc}
                        let v = sys.get(row, k * q + c) - gm.get(r, k);
                        sys.set(row, k * q + c, v);
                    }
                }
            }
            assert_eq!(q * q - sys.rank(1e-12), expected);
        }
    }
}
