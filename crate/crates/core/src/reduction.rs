//! Reduction of the singular LQ problem to a normal one of order `h`.
//!
//! A pre-compensating feedback `u = Kx + v` is applied first; when the
//! closed loop admits a strongly regular certificate `(M1, N1)`, the state
//! splits as `x = N1 (x1; x2)` with the algebraic constraint `x2 = -B2 v`,
//! and the cost weights transform congruently into the reduced data
//! `(Qhat, S, Rhat)` plus the terminal weight `Hhat` and the completed
//! square `(Atilde1, Ctilde1, Qtilde)`.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::wellposed::{
    verify_certificate, CertificateReport, SingularSystem, StronglyRegularForm,
};

/// Quadratic cost data: running weights `Q`, `R` and (finite horizon only)
/// terminal weight `H` applied through `E' H E`.
#[derive(Debug, Clone)]
pub struct LQWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub h: Option<DMatrix<f64>>,
    /// `None` marks the infinite-horizon problem.
    pub horizon: Option<f64>,
}

impl LQWeights {
    pub fn validate(&self, n: usize, r: usize, tol: f64) -> Result<()> {
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(Error::DimensionMismatch("Q must be n x n".into()));
        }
        if self.r.nrows() != r || self.r.ncols() != r {
            return Err(Error::DimensionMismatch("R must be r x r".into()));
        }
        if let Some(h) = &self.h {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::DimensionMismatch("H must be n x n".into()));
            }
            if !is_symmetric(h, tol) {
                return Err(Error::DimensionMismatch("H must be symmetric".into()));
            }
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig("horizon must be positive".into()));
            }
        }
        if !is_symmetric(&self.q, tol) || !is_symmetric(&self.r, tol) {
            return Err(Error::DimensionMismatch("Q and R must be symmetric".into()));
        }
        Ok(())
    }
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let scale = m.iter().map(|v| v.abs()).fold(0.0_f64, f64::max).max(1.0);
    (m - m.transpose()).iter().all(|v| v.abs() <= tol * scale)
}

/// Order-`h` normal LQ data derived from a verified certificate.
#[derive(Debug, Clone)]
pub struct ReducedLQ {
    pub a1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub c11: DMatrix<f64>,
    /// `D1 - C12 B2`.
    pub dtilde1: DMatrix<f64>,
    /// `A1 - B1 Rhat^{-1} S`.
    pub atilde1: DMatrix<f64>,
    /// `C11 - Dtilde1 Rhat^{-1} S`.
    pub ctilde1: DMatrix<f64>,
    pub qhat: DMatrix<f64>,
    /// Stored r x h: rows index controls.
    pub s: DMatrix<f64>,
    pub rhat: DMatrix<f64>,
    /// `Qhat - S' Rhat^{-1} S`.
    pub qtilde: DMatrix<f64>,
    /// Reduced terminal weight; zero for infinite horizon.
    pub hhat: DMatrix<f64>,
    pub x10: DVector<f64>,
    pub k: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub n1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub block_sizes: Vec<usize>,
    /// Original system kept for cost reconstruction and simulation.
    pub sys: SingularSystem,
    pub weights: LQWeights,
}

impl ReducedLQ {
    pub fn h(&self) -> usize {
        self.a1.nrows()
    }

    pub fn r(&self) -> usize {
        self.rhat.nrows()
    }

    pub fn rhat_inv(&self) -> DMatrix<f64> {
        self.rhat
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| {
                self.rhat
                    .clone()
                    .try_inverse()
                    .expect("Rhat positive definite by construction")
            })
    }
}

/// Assumption report over the positivity and rank conditions that make the
/// reduced problem solvable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Q > 0, R > 0 (and H >= 0 for the finite horizon).
    pub h1: bool,
    /// Q >= 0, rank(I_r + K N1 (0; -B2)) = r, R > 0 (and H >= 0).
    pub h1_prime: bool,
    /// Infinite-horizon variants (no condition on H).
    pub h2: bool,
    pub h2_prime: bool,
    pub details: Vec<String>,
}

impl AssumptionReport {
    /// Whether some assumption sufficient for the requested horizon holds.
    pub fn sufficient(&self, finite: bool) -> bool {
        if finite {
            self.h1 || self.h1_prime
        } else {
            self.h2 || self.h2_prime
        }
    }
}

/// Closed-loop system under `u = Kx + v`:
/// `(E, A + BK, B, C + DK, D, x0)`.
pub fn close_loop(sys: &SingularSystem, k: &DMatrix<f64>) -> Result<SingularSystem> {
    if k.nrows() != sys.r() || k.ncols() != sys.n() {
        return Err(Error::DimensionMismatch(format!(
            "K must be {} x {}",
            sys.r(),
            sys.n()
        )));
    }
    SingularSystem::new(
        sys.e.clone(),
        &sys.a + &sys.b * k,
        sys.b.clone(),
        &sys.c + &sys.d * k,
        sys.d.clone(),
        sys.x0.clone(),
    )
}

/// Verify the pre-compensation conditions for `K` under the certificate
/// `(M1, N1, block_sizes)`: the strongly regular conditions of the closed
/// loop, reported per condition.
pub fn verify_k(
    sys: &SingularSystem,
    k: &DMatrix<f64>,
    m1: &DMatrix<f64>,
    n1: &DMatrix<f64>,
    block_sizes: &[usize],
    cfg: &Config,
) -> Result<CertificateReport> {
    let closed = close_loop(sys, k)?;
    verify_certificate(&closed, m1, n1, block_sizes, cfg)
}

fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

fn psd_scale(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0_f64, f64::max).max(1.0)
}

fn is_positive_definite(m: &DMatrix<f64>, tol: f64) -> bool {
    min_symmetric_eigenvalue(m) > tol * psd_scale(m)
}

fn is_positive_semidefinite(m: &DMatrix<f64>, tol: f64) -> bool {
    min_symmetric_eigenvalue(m) >= -tol * psd_scale(m)
}

/// Rank matrix of the primed assumptions: `I_r + K N1 (0; -B2)`.
fn prime_rank_matrix(
    k: &DMatrix<f64>,
    n1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    h: usize,
) -> DMatrix<f64> {
    let r = k.nrows();
    let n = n1.nrows();
    let q = n - h;
    let mut stack = DMatrix::zeros(n, r);
    stack.view_mut((h, 0), (q, r)).copy_from(&(-b2));
    DMatrix::identity(r, r) + k * n1 * stack
}

/// Evaluate the assumption variants by eigenvalue and rank tests.
pub fn check_assumptions(
    weights: &LQWeights,
    k: &DMatrix<f64>,
    n1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    h: usize,
    cfg: &Config,
) -> AssumptionReport {
    let tol = cfg.tol_block;
    let q_pd = is_positive_definite(&weights.q, tol);
    let q_psd = is_positive_semidefinite(&weights.q, tol);
    let r_pd = is_positive_definite(&weights.r, tol);
    let h_psd = weights
        .h
        .as_ref()
        .map(|hm| is_positive_semidefinite(hm, tol))
        .unwrap_or(true);
    let rank_mat = prime_rank_matrix(k, n1, b2, h);
    let r_dim = k.nrows();
    let rank_ok = rank_mat.rank(cfg.tol_rank * psd_scale(&rank_mat)) == r_dim;

    let mut details = Vec::new();
    details.push(format!("Q > 0: {}", q_pd));
    details.push(format!("Q >= 0: {}", q_psd));
    details.push(format!("R > 0: {}", r_pd));
    details.push(format!("H >= 0: {}", h_psd));
    details.push(format!("rank(I + K N1 (0; -B2)) = r: {}", rank_ok));

    AssumptionReport {
        h1: q_pd && r_pd && h_psd,
        h1_prime: q_psd && rank_ok && r_pd && h_psd,
        h2: q_pd && r_pd,
        h2_prime: q_psd && rank_ok && r_pd,
        details,
    }
}

/// Assemble the reduced LQ data from a verified certificate.
///
/// The congruence producing `(Qhat, S', S, Rhat)` maps `(x1, v)` through
/// `(x, u) = [[N1, 0], [K N1, I]] [[I, 0], [0, -B2], [0, I]] (x1, v)` and
/// conjugates `diag(Q, R)`; `Hhat` is the leading `h x h` block of
/// `M1^{-T} H M1^{-1}`.
pub fn assemble(
    sys: &SingularSystem,
    k: &DMatrix<f64>,
    m1: &DMatrix<f64>,
    n1: &DMatrix<f64>,
    block_sizes: &[usize],
    weights: &LQWeights,
    cfg: &Config,
) -> Result<ReducedLQ> {
    let n = sys.n();
    let r = sys.r();
    weights.validate(n, r, cfg.tol_block)?;
    let report = verify_k(sys, k, m1, n1, block_sizes, cfg)?;
    if !report.all_passed() {
        return Err(Error::KConditionsFailed(
            report.failed().iter().map(|c| c.to_string()).collect(),
        ));
    }
    let form = report
        .verdict
        .form
        .as_ref()
        .expect("verified certificate carries the block form");
    assemble_from_form(sys, k, form, weights, cfg)
}

/// Assembly given an already-validated block form (internal fast path for
/// the search pipeline, which produces its own certificate).
pub fn assemble_from_form(
    sys: &SingularSystem,
    k: &DMatrix<f64>,
    form: &StronglyRegularForm,
    weights: &LQWeights,
    cfg: &Config,
) -> Result<ReducedLQ> {
    let n = sys.n();
    let r = sys.r();
    weights.validate(n, r, cfg.tol_block)?;
    let h = form.h;
    let q_ord = n - h;

    // (x, u) = big * (x1, v)
    let mut inner = DMatrix::zeros(n + r, h + r);
    inner.view_mut((0, 0), (h, h)).copy_from(&DMatrix::identity(h, h));
    inner.view_mut((h, h), (q_ord, r)).copy_from(&(-&form.b2));
    inner
        .view_mut((n, h), (r, r))
        .copy_from(&DMatrix::identity(r, r));
    let mut outer = DMatrix::zeros(n + r, n + r);
    outer.view_mut((0, 0), (n, n)).copy_from(&form.n);
    outer.view_mut((n, 0), (r, n)).copy_from(&(k * &form.n));
    outer
        .view_mut((n, n), (r, r))
        .copy_from(&DMatrix::identity(r, r));
    let mut qr_weights = DMatrix::zeros(n + r, n + r);
    qr_weights.view_mut((0, 0), (n, n)).copy_from(&weights.q);
    qr_weights.view_mut((n, n), (r, r)).copy_from(&weights.r);
    let map = outer * inner;
    let big = map.transpose() * qr_weights * map;

    let qhat = big.view((0, 0), (h, h)).into_owned();
    let s = big.view((h, 0), (r, h)).into_owned();
    let rhat = big.view((h, h), (r, r)).into_owned();

    let assumptions = check_assumptions(weights, k, &form.n, &form.b2, h, cfg);
    let finite = weights.horizon.is_some();
    if !assumptions.sufficient(finite) {
        return Err(Error::AssumptionViolated(format!(
            "no sufficient assumption holds for the {} horizon: {}",
            if finite { "finite" } else { "infinite" },
            assumptions.details.join("; ")
        )));
    }
    if !is_positive_definite(&rhat, cfg.tol_block) {
        return Err(Error::AssumptionViolated(
            "reduced control weight lost positive definiteness".into(),
        ));
    }
    let rhat_inv = rhat
        .clone()
        .cholesky()
        .ok_or_else(|| {
            Error::AssumptionViolated("reduced control weight not factorizable".into())
        })?
        .inverse();
    let qtilde = &qhat - s.transpose() * &rhat_inv * &s;
    if !is_positive_semidefinite(&qtilde, cfg.tol_block) {
        return Err(Error::AssumptionViolated(
            "completed-square state weight lost positive semidefiniteness".into(),
        ));
    }

    let dtilde1 = &form.d1 - &form.c12 * &form.b2;
    let atilde1 = &form.a1 - &form.b1 * &rhat_inv * &s;
    let ctilde1 = &form.c11 - &dtilde1 * &rhat_inv * &s;

    let hhat = match (&weights.h, weights.horizon) {
        (Some(hm), Some(_)) => {
            let m1_inv = form.m.clone().try_inverse().ok_or_else(|| {
                Error::SingularTransform("certificate transform not invertible".into())
            })?;
            let full = m1_inv.transpose() * hm * &m1_inv;
            full.view((0, 0), (h, h)).into_owned()
        }
        _ => DMatrix::zeros(h, h),
    };

    let x10 = (form.m.clone() * &sys.x0).rows(0, h).into_owned();

    Ok(ReducedLQ {
        a1: form.a1.clone(),
        b1: form.b1.clone(),
        c11: form.c11.clone(),
        dtilde1,
        atilde1,
        ctilde1,
        qhat,
        s,
        rhat,
        qtilde,
        hhat,
        x10,
        k: k.clone(),
        m1: form.m.clone(),
        n1: form.n.clone(),
        b2: form.b2.clone(),
        block_sizes: form.block_sizes.clone(),
        sys: sys.clone(),
        weights: weights.clone(),
    })
}

/// Best-effort search for a pre-compensating feedback: sparse integer
/// candidates (up to two nonzero entries in {-2, ..., 2}) screened through
/// the full strongly-regular analysis of the closed loop. Heuristic; the
/// returned certificate should be re-verified by the caller.
pub fn suggest_feedback(
    sys: &SingularSystem,
    cfg: &Config,
    extra_random: u32,
) -> Option<(DMatrix<f64>, StronglyRegularForm)> {
    let r = sys.r();
    let n = sys.n();
    let mut candidates: Vec<DMatrix<f64>> = vec![DMatrix::zeros(r, n)];
    let values = [-2.0, -1.0, 1.0, 2.0];
    for i in 0..r {
        for j in 0..n {
            for &v in &values {
                let mut k = DMatrix::zeros(r, n);
                k[(i, j)] = v;
                candidates.push(k);
            }
        }
    }
    let single_end = candidates.len();
    for a_idx in 1..single_end {
        for b_idx in a_idx + 1..single_end {
            let k = &candidates[a_idx] + &candidates[b_idx];
            candidates.push(k);
        }
    }
    let mut rng = StdRng::seed_from_u64(cfg.search_seed);
    for _ in 0..extra_random {
        candidates.push(DMatrix::from_fn(r, n, |_, _| {
            rng.gen_range(-2i64..=2) as f64
        }));
    }
    for k in candidates {
        if let Ok(closed) = close_loop(sys, &k) {
            if let Ok(verdict) = crate::wellposed::check_strongly_regular(&closed, cfg) {
                if verdict.status == crate::wellposed::Status::WellPosed {
                    return Some((k, verdict.form.expect("well-posed carries form")));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn cfg() -> Config {
        Config::default()
    }

    fn finite_example() -> (SingularSystem, DMatrix<f64>, DMatrix<f64>, LQWeights) {
        let sys = SingularSystem::new(
            dmatrix![1.0,0.0,0.0; 2.0,1.0,0.0; 0.0,1.0,0.0],
            dmatrix![1.0,-1.0,0.0; 2.0,0.0,2.0; 0.0,2.0,2.0],
            dmatrix![3.0; 0.0; -1.0],
            DMatrix::zeros(3, 3),
            dmatrix![1.0; 4.0; 2.0],
            dvector![1.0, 2.0, 0.0],
        )
        .unwrap();
        let k = dmatrix![0.0, 0.0, 1.0];
        let m1 = dmatrix![-0.2, 0.6, -0.6; -0.4, 0.2, 0.8; 0.4, -0.2, 0.2];
        let weights = LQWeights {
            q: DMatrix::identity(3, 3),
            r: DMatrix::identity(1, 1),
            h: Some(DMatrix::identity(3, 3)),
            horizon: Some(1.0),
        };
        (sys, k, m1, weights)
    }

    fn infinite_example() -> (SingularSystem, LQWeights) {
        let c = dmatrix![1.0,0.0,0.0; 0.0,0.0,0.0; 0.0,0.0,0.0];
        let sys = SingularSystem::new(
            DMatrix::from_diagonal(&dvector![1.0, 0.0, 0.0]),
            DMatrix::from_diagonal(&dvector![-1.0, 1.0, 1.0]),
            dmatrix![0.0,1.0,0.0; 0.0,0.0,0.0; 0.0,0.0,1.0],
            c.clone(),
            c,
            dvector![1.0, 0.0, 0.0],
        )
        .unwrap();
        let weights = LQWeights {
            q: DMatrix::identity(3, 3),
            r: DMatrix::identity(3, 3),
            h: None,
            horizon: None,
        };
        (sys, weights)
    }

    #[test]
    fn close_loop_zero_k_is_identity() {
        let (sys, _, _, _) = finite_example();
        let k = DMatrix::zeros(1, 3);
        let closed = close_loop(&sys, &k).unwrap();
        assert_eq!(closed.a, sys.a);
        assert_eq!(closed.c, sys.c);
    }

    #[test]
    fn close_loop_adds_bk() {
        let (sys, k, _, _) = finite_example();
        let closed = close_loop(&sys, &k).unwrap();
        // oracle: direct multiply
        let expect_a = &sys.a + &sys.b * &k;
        let expect_c = &sys.c + &sys.d * &k;
        assert_eq!(closed.a, expect_a);
        assert_eq!(closed.c, expect_c);
        // random spot check
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let k2 = DMatrix::from_fn(1, 3, |_, _| rng.gen_range(-3.0..3.0));
        let closed2 = close_loop(&sys, &k2).unwrap();
        assert!((closed2.a - (&sys.a + &sys.b * &k2)).norm() == 0.0);
    }

    #[test]
    fn verify_k_accepts_certificate() {
        let (sys, k, m1, _) = finite_example();
        let rep = verify_k(&sys, &k, &m1, &DMatrix::identity(3, 3), &[1], &cfg()).unwrap();
        assert!(rep.all_passed(), "failed: {:?}", rep.failed());
    }

    #[test]
    fn verify_k_rejects_open_loop() {
        let (sys, _, m1, _) = finite_example();
        let k = DMatrix::zeros(1, 3);
        let rep = verify_k(&sys, &k, &m1, &DMatrix::identity(3, 3), &[1], &cfg()).unwrap();
        assert!(!rep.all_passed());
    }

    #[test]
    fn assemble_finite_example_blocks() {
        let (sys, k, m1, weights) = finite_example();
        let red = assemble(&sys, &k, &m1, &DMatrix::identity(3, 3), &[1], &weights, &cfg())
            .unwrap();
        assert_eq!(red.h(), 2);
        assert!((red.rhat[(0, 0)] - 1.0).abs() < 1e-12, "Rhat = 1");
        assert!(red.dtilde1.norm() < 1e-12, "Dtilde1 = 0");
        assert!(red.s.norm() < 1e-12, "S = 0");
        assert!((&red.qhat - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
        let hhat_expect = dmatrix![5.0, 2.0; 2.0, 2.0];
        assert!((&red.hhat - hhat_expect).norm() < 1e-9, "Hhat = [[5,2],[2,2]]");
        assert!((&red.a1 - dmatrix![1.0,-1.0; 0.0,2.0]).norm() < 1e-9);
        assert!((&red.b1 - dmatrix![0.0; -2.0]).norm() < 1e-9);
        assert!((red.x10.clone() - dvector![1.0, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn assemble_infinite_example_blocks() {
        let (sys, weights) = infinite_example();
        let k = DMatrix::zeros(3, 3);
        let red = assemble(
            &sys,
            &k,
            &DMatrix::identity(3, 3),
            &DMatrix::identity(3, 3),
            &[1, 1],
            &weights,
            &cfg(),
        )
        .unwrap();
        assert_eq!(red.h(), 1);
        assert!((red.qhat[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(red.s.norm() < 1e-12);
        let rhat_expect = DMatrix::from_diagonal(&dvector![1.0, 1.0, 2.0]);
        assert!((&red.rhat - rhat_expect).norm() < 1e-12);
        assert!((red.atilde1[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((red.ctilde1[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((&red.dtilde1 - dmatrix![1.0, 0.0, 0.0]).norm() < 1e-12);
        assert!((red.qtilde[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assemble_normal_system_passthrough() {
        // E = I: no fast part, weights map through unchanged with K = 0.
        let sys = SingularSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![0.0, 1.0; -1.0, 0.0],
            dmatrix![0.0; 1.0],
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            dvector![1.0, 1.0],
        )
        .unwrap();
        let weights = LQWeights {
            q: DMatrix::identity(2, 2) * 2.0,
            r: DMatrix::identity(1, 1) * 3.0,
            h: Some(DMatrix::identity(2, 2)),
            horizon: Some(1.0),
        };
        let red = assemble(
            &sys,
            &DMatrix::zeros(1, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
            &[],
            &weights,
            &cfg(),
        )
        .unwrap();
        assert_eq!(red.h(), 2);
        assert!((&red.qhat - &weights.q).norm() < 1e-12);
        assert!((&red.rhat - &weights.r).norm() < 1e-12);
        assert!(red.s.norm() < 1e-12);
    }

    #[test]
    fn assumptions_variants() {
        let (sys, _, _, mut weights) = finite_example();
        let n1 = DMatrix::identity(3, 3);
        let b2 = DMatrix::zeros(1, 1);
        let k = DMatrix::zeros(1, 3);
        let rep = check_assumptions(&weights, &k, &n1, &b2, 2, &cfg());
        assert!(rep.h1 && rep.h1_prime && rep.h2 && rep.h2_prime);

        // Q = 0 kills the strict variants but the rank condition holds
        weights.q = DMatrix::zeros(3, 3);
        let rep = check_assumptions(&weights, &k, &n1, &b2, 2, &cfg());
        assert!(!rep.h1 && rep.h1_prime);
        let _ = sys;
    }

    #[test]
    fn assumptions_rank_deficient_prime() {
        // engineer K, N1, B2 with I + K N1 (0; -B2) = 0 (rank 0)
        let k = dmatrix![0.0, 0.0, 1.0];
        let n1 = DMatrix::identity(3, 3);
        let b2 = dmatrix![1.0];
        let weights = LQWeights {
            q: DMatrix::zeros(3, 3),
            r: DMatrix::identity(1, 1),
            h: None,
            horizon: None,
        };
        let rep = check_assumptions(&weights, &k, &n1, &b2, 2, &cfg());
        assert!(!rep.h2 && !rep.h2_prime);
        // oracle: the matrix is 1x1 zero
        let m = DMatrix::identity(1, 1) + &k * &n1 * dmatrix![0.0; 0.0; -1.0];
        assert!(m.norm() < 1e-14);
    }

    #[test]
    fn schur_congruence_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(31);
        for _ in 0..20 {
            let h = rng.gen_range(1..=3);
            let r = rng.gen_range(1..=3);
            // random PD big matrix via congruence of identity-ish
            let m = DMatrix::from_fn(h + r, h + r, |_, _| rng.gen_range(-1.0..1.0));
            let big = &m * m.transpose() + DMatrix::identity(h + r, h + r) * 0.5;
            let qhat = big.view((0, 0), (h, h)).into_owned();
            let s = big.view((h, 0), (r, h)).into_owned();
            let rhat = big.view((h, h), (r, r)).into_owned();
            let rhat_inv = rhat.clone().try_inverse().unwrap();
            let qtilde = &qhat - s.transpose() * &rhat_inv * &s;
            // reassemble diag(Qtilde, Rhat) through the stated congruence
            let mut t = DMatrix::identity(h + r, h + r);
            t.view_mut((h, 0), (r, h)).copy_from(&(-&rhat_inv * &s));
            let back = t.transpose() * &big * &t;
            let mut expect = DMatrix::zeros(h + r, h + r);
            expect.view_mut((0, 0), (h, h)).copy_from(&qtilde);
            expect.view_mut((h, h), (r, r)).copy_from(&rhat);
            let rel = (&back - &expect).norm() / expect.norm();
            assert!(rel < 1e-12, "congruence identity to 1e-12, got {rel}");
        }
    }

    #[test]
    fn rhat_positive_definite_under_assumptions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(41);
        let (sys, k, m1, mut weights) = finite_example();
        for _ in 0..100 {
            // random PD Q and R keep (H1) and hence Rhat > 0
            let mq = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            weights.q = &mq * mq.transpose() + DMatrix::identity(3, 3) * 0.1;
            let mr = DMatrix::from_fn(1, 1, |_, _| rng.gen_range(-1.0..1.0));
            weights.r = &mr * mr.transpose() + DMatrix::identity(1, 1) * 0.1;
            let red = assemble(&sys, &k, &m1, &DMatrix::identity(3, 3), &[1], &weights, &cfg())
                .unwrap();
            let min_eig = red
                .rhat
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig > 0.0);
        }
    }

    #[test]
    fn suggest_feedback_finds_sparse_k() {
        let (sys, expected_k, _, _) = finite_example();
        let (k, form) = suggest_feedback(&sys, &cfg(), 0).expect("search must succeed");
        // the search need not return the canonical choice, but the closed
        // loop must verify; the canonical choice is reachable
        let closed = close_loop(&sys, &k).unwrap();
        let verdict = crate::wellposed::check_strongly_regular(&closed, &cfg()).unwrap();
        assert_eq!(verdict.status, crate::wellposed::Status::WellPosed);
        assert_eq!(form.h, 2);
        let _ = expected_k;
    }
}
