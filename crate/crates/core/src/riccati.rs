//! Backward matrix Riccati integration (finite horizon) and the stationary
//! algebraic Riccati equation (infinite horizon).
//!
//! The finite-horizon equation, integrated backward from `P(T) = Hhat`:
//!
//! ```text
//! P' + P A1 + A1' P + C11' P C11 + Qhat
//!    - (B1' P + S + D1~' P C11)' (Rhat + D1~' P D1~)^{-1}
//!      (B1' P + S + D1~' P C11) = 0
//! ```
//!
//! The stationary solution is obtained as the large-horizon limit of the
//! zero-terminal-weight value `P(0;T)`, which is nondecreasing in `T` in
//! the Loewner order; a Newton polish sharpens the limit to residual
//! tolerance. Two independent integration routes are provided: classical
//! fixed-step RK4 with per-step symmetrization, and an adaptive
//! Dormand-Prince 5(4) scheme used as a cross-check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::ReducedLQ;

/// Norm cap distinguishing finite-escape blow-up from slow convergence.
const GAIN_CAP: f64 = 1e12;

/// Coefficient bundle for the quadratic matrix flow
/// `Phi(P) = PA + A'P + C'PC + Q - (B'P + S + D'PC)'(R + D'PD)^{-1}(B'P + S + D'PC)`.
#[derive(Debug, Clone)]
pub(crate) struct RiccatiCoefficients {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// r x h, rows index controls.
    pub s: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl RiccatiCoefficients {
    /// Finite-horizon form: original blocks with the cross weight.
    pub fn full(red: &ReducedLQ) -> Self {
        RiccatiCoefficients {
            a: red.a1.clone(),
            c: red.c11.clone(),
            b: red.b1.clone(),
            d: red.dtilde1.clone(),
            q: red.qhat.clone(),
            s: red.s.clone(),
            r: red.rhat.clone(),
        }
    }

    /// Completed-square form: tilde matrices, no cross weight. Same flow
    /// as [`RiccatiCoefficients::full`] by the congruence identity.
    pub fn tilde(red: &ReducedLQ) -> Self {
        let h = red.h();
        RiccatiCoefficients {
            a: red.atilde1.clone(),
            c: red.ctilde1.clone(),
            b: red.b1.clone(),
            d: red.dtilde1.clone(),
            q: red.qtilde.clone(),
            s: DMatrix::zeros(red.r(), h),
            r: red.rhat.clone(),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `Rhat + D'PD`, which must stay positive definite along the flow.
    fn inner_weight(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        &self.r + self.d.transpose() * p * &self.d
    }

    /// Feedback kernel `(R + D'PD)^{-1} (B'P + S + D'PC)`.
    pub fn gain(&self, p: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        let w = self.inner_weight(p);
        let chol = w
            .clone()
            .cholesky()
            .ok_or(Error::FactorizationFailure { t })?;
        let rhs = self.b.transpose() * p + &self.s + self.d.transpose() * p * &self.c;
        Ok(chol.solve(&rhs))
    }

    /// The flow `Phi(P)`; the backward equation is `P' = -Phi(P)`.
    pub fn flow(&self, p: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        let gain = self.gain(p, t)?;
        let lin = p * &self.a
            + self.a.transpose() * p
            + self.c.transpose() * p * &self.c
            + &self.q;
        let quad =
            (self.b.transpose() * p + &self.s + self.d.transpose() * p * &self.c).transpose()
                * gain;
        Ok(lin - quad)
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let pt = p.transpose();
    *p += pt;
    *p *= 0.5;
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0_f64, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    /// Max centered-difference residual of the Riccati equation at
    /// interior grid points.
    pub max_residual: f64,
}

/// Finite-horizon solution on a uniform grid `0 = t_0 < ... < t_M = T`.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: Vec<f64>,
    pub p: Vec<DMatrix<f64>>,
    /// Gains `Psi(t_i) = (Rhat + D'PD)^{-1}(B1'P + S + D'PC11)`.
    pub psi: Vec<DMatrix<f64>>,
    /// Optimal value `x10' P(0) x10 / 2`.
    pub value: f64,
    pub stats: IntegratorStats,
}

/// Stationary solution with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct AreResult {
    pub p0: DMatrix<f64>,
    /// `Lambda0 = -(Rhat + D'P0D)^{-1}(B1'P0 + D'P0 Ctilde1)`.
    pub lambda0: DMatrix<f64>,
    /// Optimal value `x10' P0 x10` (no 1/2: infinite-horizon cost).
    pub value: f64,
    pub horizons_used: Vec<f64>,
    pub final_delta: f64,
    /// Max-norm residual of the stationary equation at `p0`.
    pub residual: f64,
    /// Smallest eigenvalue of successive horizon increments (monotonicity
    /// diagnostic; should not dip below the tolerance floor).
    pub monotonicity_floor: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AreOptions {
    /// Horizon increment between convergence checks.
    pub t_step: f64,
    /// Give up when the horizon exceeds this value.
    pub max_t: f64,
    /// Stop when the increment's max-norm falls below this.
    pub tol_conv: f64,
    /// RK4 steps per unit of horizon.
    pub steps_per_unit: usize,
    /// Newton polish budget.
    pub newton_steps: usize,
}

impl Default for AreOptions {
    fn default() -> Self {
        AreOptions {
            t_step: 1.0,
            max_t: 256.0,
            tol_conv: 1e-10,
            steps_per_unit: 1024,
            newton_steps: 20,
        }
    }
}

/// One classical RK4 step of `P' = sign * Phi(P)` over `dt > 0`, followed
/// by symmetrization.
fn rk4_step(
    coeffs: &RiccatiCoefficients,
    p: &DMatrix<f64>,
    dt: f64,
    sign: f64,
    t: f64,
) -> Result<DMatrix<f64>> {
    let k1 = coeffs.flow(p, t)? * sign;
    let k2 = coeffs.flow(&(p + &k1 * (dt / 2.0)), t)? * sign;
    let k3 = coeffs.flow(&(p + &k2 * (dt / 2.0)), t)? * sign;
    let k4 = coeffs.flow(&(p + &k3 * dt), t)? * sign;
    let mut next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    symmetrize(&mut next);
    if max_abs(&next) > GAIN_CAP {
        return Err(Error::GainBlowup { t });
    }
    Ok(next)
}

pub(crate) fn integrate_backward(
    coeffs: &RiccatiCoefficients,
    terminal: &DMatrix<f64>,
    horizon: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
    let dt = horizon / steps as f64;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let mut p = vec![DMatrix::zeros(coeffs.order(), coeffs.order()); steps + 1];
    p[steps] = terminal.clone();
    // In reversed time s = T - t the backward equation reads dP/ds = +Phi.
    for i in (0..steps).rev() {
        p[i] = rk4_step(coeffs, &p[i + 1], dt, 1.0, grid[i + 1])?;
    }
    Ok((grid, p))
}

fn grid_residual(
    coeffs: &RiccatiCoefficients,
    grid: &[f64],
    p: &[DMatrix<f64>],
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for i in 1..grid.len().saturating_sub(1) {
        let dt = grid[i + 1] - grid[i - 1];
        let pdot = (&p[i + 1] - &p[i - 1]) / dt;
        let res = &pdot + &coeffs.flow(&p[i], grid[i])?;
        worst = worst.max(max_abs(&res));
    }
    Ok(worst)
}

/// Backward RK4 integration of the finite-horizon equation with terminal
/// weight `Hhat`; also reports the gains and the optimal value.
pub fn solve_finite(red: &ReducedLQ, horizon: f64, steps: usize) -> Result<RiccatiSolution> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidConfig("horizon must be positive".into()));
    }
    if steps < 16 {
        return Err(Error::InvalidConfig("at least 16 steps required".into()));
    }
    let coeffs = RiccatiCoefficients::full(red);
    let (grid, p) = integrate_backward(&coeffs, &red.hhat, horizon, steps)?;
    let psi: Vec<DMatrix<f64>> = grid
        .iter()
        .zip(p.iter())
        .map(|(&t, pi)| coeffs.gain(pi, t))
        .collect::<Result<_>>()?;
    let max_residual = grid_residual(&coeffs, &grid, &p)?;
    let value = 0.5 * (red.x10.transpose() * &p[0] * &red.x10)[(0, 0)];
    Ok(RiccatiSolution {
        grid,
        p,
        psi,
        value,
        stats: IntegratorStats {
            steps,
            max_residual,
        },
    })
}

/// Dormand-Prince 5(4) adaptive integration of the same backward equation;
/// returns `P(0)`. Kept as an independent route for cross-validation of
/// the fixed-step integrator.
pub fn solve_finite_adaptive(red: &ReducedLQ, horizon: f64, tol: f64) -> Result<DMatrix<f64>> {
    let coeffs = RiccatiCoefficients::full(red);
    adaptive_backward(&coeffs, &red.hhat, horizon, tol)
}

pub(crate) fn adaptive_backward(
    coeffs: &RiccatiCoefficients,
    terminal: &DMatrix<f64>,
    horizon: f64,
    tol: f64,
) -> Result<DMatrix<f64>> {
    // Dormand-Prince coefficients.
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    // Integrate s = T - t forward from 0 to T: P' = Phi(P).
    let mut p = terminal.clone();
    let mut s = 0.0_f64;
    let mut dt = (horizon / 64.0).min(0.05);
    let mut guard = 0usize;
    while s < horizon {
        if guard > 2_000_000 {
            return Err(Error::Numerical(
                "adaptive integrator exceeded step budget".into(),
            ));
        }
        guard += 1;
        let step = dt.min(horizon - s);
        let mut k: Vec<DMatrix<f64>> = Vec::with_capacity(7);
        k.push(coeffs.flow(&p, horizon - s)?);
        for stage in 0..6 {
            let mut y = p.clone();
            for (j, kj) in k.iter().enumerate() {
                let w = A[stage][j];
                if w != 0.0 {
                    y += kj * (w * step);
                }
            }
            k.push(coeffs.flow(&y, horizon - s)?);
        }
        let mut p5 = p.clone();
        let mut p4 = p.clone();
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                p5 += kj * (B5[j] * step);
            }
            if B4[j] != 0.0 {
                p4 += kj * (B4[j] * step);
            }
        }
        let err = max_abs(&(&p5 - &p4));
        let scale = tol * (1.0 + max_abs(&p5));
        if err <= scale {
            symmetrize(&mut p5);
            p = p5;
            s += step;
            if max_abs(&p) > GAIN_CAP {
                return Err(Error::GainBlowup { t: horizon - s });
            }
        }
        let factor = if err > 0.0 {
            0.9 * (scale / err).powf(0.2)
        } else {
            2.0
        };
        dt = (step * factor.clamp(0.2, 5.0)).max(1e-12);
    }
    Ok(p)
}

/// Newton step for the stationary equation: solves the Lyapunov-type
/// linearization `X Acl + Acl' X + Ccl' X Ccl = -residual` by Kronecker
/// vectorization (the reduced orders here are small).
fn newton_polish(
    coeffs: &RiccatiCoefficients,
    p: &DMatrix<f64>,
    max_iter: usize,
) -> Result<(DMatrix<f64>, f64)> {
    let h = coeffs.order();
    let mut p = p.clone();
    let mut best_res = max_abs(&coeffs.flow(&p, 0.0)?);
    for _ in 0..max_iter {
        if best_res < 1e-15 * (1.0 + max_abs(&p)) {
            break;
        }
        let gain = coeffs.gain(&p, 0.0)?;
        let acl = &coeffs.a - &coeffs.b * &gain;
        let ccl = &coeffs.c - &coeffs.d * &gain;
        let lhs = acl.transpose().kronecker(&DMatrix::identity(h, h))
            + DMatrix::identity(h, h).kronecker(&acl.transpose())
            + ccl.transpose().kronecker(&ccl.transpose());
        let res = coeffs.flow(&p, 0.0)?;
        let rhs = DMatrix::from_column_slice(h * h, 1, res.as_slice());
        let delta = match lhs.lu().solve(&rhs) {
            Some(d) => d,
            None => break,
        };
        let mut step = DMatrix::zeros(h, h);
        for j in 0..h {
            for i in 0..h {
                step[(i, j)] = -delta[(j * h + i, 0)];
            }
        }
        symmetrize(&mut step);
        let mut cand = &p + &step;
        symmetrize(&mut cand);
        let cand_res = max_abs(&coeffs.flow(&cand, 0.0)?);
        if cand_res < best_res {
            p = cand;
            best_res = cand_res;
        } else {
            break;
        }
    }
    Ok((p, best_res))
}

/// Stationary solution by horizon extension: integrate the zero-terminal
/// flow forward, checking the increment every `t_step`, then polish with
/// Newton. Callers are expected to have confirmed exact controllability
/// (or to have waived it knowingly); divergence shows up as `Divergence`.
pub fn solve_are(red: &ReducedLQ, opts: &AreOptions) -> Result<AreResult> {
    let coeffs = RiccatiCoefficients::tilde(red);
    let h = coeffs.order();
    let steps = ((opts.t_step * opts.steps_per_unit as f64).ceil() as usize).max(16);
    let dt = opts.t_step / steps as f64;

    let mut p = DMatrix::zeros(h, h);
    let mut horizon = 0.0_f64;
    let mut horizons_used = Vec::new();
    let mut final_delta = f64::INFINITY;
    let mut monotonicity_floor = f64::INFINITY;
    let mut converged = false;

    while horizon < opts.max_t {
        let prev = p.clone();
        for i in 0..steps {
            let t = horizon + i as f64 * dt;
            p = rk4_step(&coeffs, &p, dt, 1.0, t)?;
            if max_abs(&p) > GAIN_CAP {
                return Err(Error::Divergence {
                    horizon: t,
                    norm: max_abs(&p),
                });
            }
        }
        horizon += opts.t_step;
        horizons_used.push(horizon);
        let diff = &p - &prev;
        final_delta = max_abs(&diff);
        if h > 0 {
            let min_eig = diff
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            monotonicity_floor = monotonicity_floor.min(min_eig);
        }
        if final_delta <= opts.tol_conv {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            max_t: opts.max_t,
            delta: final_delta,
        });
    }

    let (p0, residual) = newton_polish(&coeffs, &p, opts.newton_steps)?;
    let lambda0 = -coeffs.gain(&p0, 0.0)?;
    let value = (red.x10.transpose() * &p0 * &red.x10)[(0, 0)];
    Ok(AreResult {
        p0,
        lambda0,
        value,
        horizons_used,
        final_delta,
        residual,
        monotonicity_floor,
    })
}

/// Time-indexed full-state gain `F(t_i) = K - Psi(t_i) (I_h 0) N1^{-1}`;
/// consumers interpolate linearly between grid points.
pub fn feedback_finite(
    sol: &RiccatiSolution,
    k: &DMatrix<f64>,
    n1: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let n = n1.nrows();
    let h = sol.p.first().map(|p| p.nrows()).unwrap_or(0);
    let n1_inv = n1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularTransform("N1 not invertible".into()))?;
    let proj = DMatrix::identity(h, n) * &n1_inv;
    Ok(sol.psi.iter().map(|psi| k - psi * &proj).collect())
}

/// Constant full-state gain `F = K + (Lambda0 - Rhat^{-1} S) (I_h 0) N1^{-1}`.
pub fn feedback_infinite(are: &AreResult, red: &ReducedLQ) -> Result<DMatrix<f64>> {
    let n = red.n1.nrows();
    let h = red.h();
    let n1_inv = red
        .n1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularTransform("N1 not invertible".into()))?;
    let proj = DMatrix::identity(h, n) * &n1_inv;
    let gain = &are.lambda0 - red.rhat_inv() * &red.s;
    Ok(&red.k + gain * proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar_coeffs(a: f64, c: f64, b: f64, d: f64, q: f64, s: f64, r: f64) -> RiccatiCoefficients {
        RiccatiCoefficients {
            a: dmatrix![a],
            c: dmatrix![c],
            b: dmatrix![b],
            d: dmatrix![d],
            q: dmatrix![q],
            s: dmatrix![s],
            r: dmatrix![r],
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let coeffs = scalar_coeffs(0.5, 0.2, 1.0, 0.3, 0.0, 0.0, 1.0);
        let (_, p) = integrate_backward(&coeffs, &dmatrix![0.0], 1.0, 64).unwrap();
        assert!(p.iter().all(|pi| pi[(0, 0)].abs() < 1e-14));
    }

    #[test]
    fn tanh_closed_form() {
        // P' = -(1 - P^2), P(T) = 0  =>  P(t) = tanh(T - t)
        let coeffs = scalar_coeffs(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0);
        let (grid, p) = integrate_backward(&coeffs, &dmatrix![0.0], 1.0, 1024).unwrap();
        for (t, pi) in grid.iter().zip(p.iter()) {
            let expect = (1.0 - t).tanh();
            assert!(
                (pi[(0, 0)] - expect).abs() < 1e-8,
                "P({t}) = {} vs tanh {}",
                pi[(0, 0)],
                expect
            );
        }
    }

    #[test]
    fn rk4_is_fourth_order_on_tanh() {
        let coeffs = scalar_coeffs(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0);
        let exact = 1.0_f64.tanh();
        let err = |steps: usize| {
            let (_, p) = integrate_backward(&coeffs, &dmatrix![0.0], 1.0, steps).unwrap();
            (p[0][(0, 0)] - exact).abs()
        };
        let e1 = err(128);
        let e2 = err(256);
        let factor = e1 / e2;
        assert!(
            (12.0..=20.0).contains(&factor),
            "halving factor {factor} outside [12, 20]"
        );
    }

    #[test]
    fn adaptive_matches_fixed_step() {
        let coeffs = scalar_coeffs(0.3, 0.4, 1.0, 0.2, 2.0, 0.1, 1.5);
        let terminal = dmatrix![0.7];
        let (_, p) = integrate_backward(&coeffs, &terminal, 2.0, 4096).unwrap();
        let pa = adaptive_backward(&coeffs, &terminal, 2.0, 1e-10).unwrap();
        assert!((p[0][(0, 0)] - pa[(0, 0)]).abs() < 1e-7);
    }

    #[test]
    fn matrix_flow_full_equals_tilde() {
        // the completed square leaves the flow invariant
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let h = rng.gen_range(1..=3);
            let r = rng.gen_range(1..=3);
            let rand_mat =
                |rng: &mut rand::rngs::StdRng, nr: usize, nc: usize| {
                    DMatrix::from_fn(nr, nc, |_, _| rng.gen_range(-1.0..1.0))
                };
            let a = rand_mat(&mut rng, h, h);
            let c = rand_mat(&mut rng, h, h);
            let b = rand_mat(&mut rng, h, r);
            let d = rand_mat(&mut rng, h, r);
            let s = rand_mat(&mut rng, r, h);
            let mq = rand_mat(&mut rng, h, h);
            let q = &mq * mq.transpose() + DMatrix::identity(h, h);
            let mr = rand_mat(&mut rng, r, r);
            let rr = &mr * mr.transpose() + DMatrix::identity(r, r) * 2.0;
            let full = RiccatiCoefficients {
                a: a.clone(),
                c: c.clone(),
                b: b.clone(),
                d: d.clone(),
                q: q.clone(),
                s: s.clone(),
                r: rr.clone(),
            };
            let rinv = rr.clone().try_inverse().unwrap();
            let tilde = RiccatiCoefficients {
                a: &a - &b * &rinv * &s,
                c: &c - &d * &rinv * &s,
                b,
                d,
                q: &q - s.transpose() * &rinv * &s,
                s: DMatrix::zeros(r, h),
                r: rr,
            };
            let mp = rand_mat(&mut rng, h, h);
            let p = &mp * mp.transpose();
            let f1 = full.flow(&p, 0.0).unwrap();
            let f2 = tilde.flow(&p, 0.0).unwrap();
            let rel = (&f1 - &f2).norm() / (1.0 + f1.norm());
            assert!(rel < 1e-12, "flow forms disagree: {rel}");
        }
    }

    #[test]
    fn stationary_point_of_scalar_are() {
        // -2P + 1 - P^2 = 0 => P0 = sqrt(2) - 1
        let coeffs = scalar_coeffs(-1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0);
        let (p0, res) = {
            // crude start from horizon extension
            let mut p = dmatrix![0.0];
            for _ in 0..20_000 {
                p = rk4_step(&coeffs, &p, 1e-3, 1.0, 0.0).unwrap();
            }
            newton_polish(&coeffs, &p, 20).unwrap()
        };
        let expect = 2.0_f64.sqrt() - 1.0;
        assert!((p0[(0, 0)] - expect).abs() < 1e-12);
        assert!(res < 1e-14);
    }

    #[test]
    fn monotone_in_horizon_with_zero_terminal() {
        let coeffs = scalar_coeffs(0.4, 0.3, 1.0, 0.1, 1.0, 0.0, 1.0);
        let value_at = |horizon: f64| {
            let (_, p) = integrate_backward(&coeffs, &dmatrix![0.0], horizon, 2048).unwrap();
            p[0][(0, 0)]
        };
        let vals: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&t| value_at(t)).collect();
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "value must grow with horizon");
        }
    }
}
