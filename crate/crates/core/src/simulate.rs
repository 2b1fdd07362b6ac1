//! Monte Carlo validation of synthesized feedback laws.
//!
//! The reduced closed loop `dx1 = (A1 x1 + B1 v)dt + (C11 x1 + D1~ v)dW`
//! with `v = Γ(t) x1` is stepped by Euler-Maruyama; the full state and
//! control are reconstructed through `x2 = -B2 v`, `x = N1 (x1; x2)`,
//! `u = K x + v`, and the cost is accumulated by the trapezoidal rule on
//! `x'Qx + u'Ru` (plus the terminal weight on the finite horizon).
//!
//! Determinism contract: per-path noise streams are derived from
//! `(seed, path index)` with a counter-style mix, and per-path costs are
//! reduced in fixed index order, so results are bit-identical no matter
//! how the paths are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::ReducedLQ;
use crate::riccati::RiccatiSolution;

/// Per-path state-magnitude overflow guard.
const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Integration horizon; for infinite-horizon problems this is the
    /// truncation point.
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.dt > self.horizon {
            return Err(Error::InvalidConfig(
                "simulation requires 0 < dt <= horizon".into(),
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("at least one path required".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// Feedback in reduced coordinates: `v(t) = Γ(t) x1(t)`, either constant
/// or piecewise-linear on a grid.
#[derive(Debug, Clone)]
pub enum ReducedGain {
    Constant(DMatrix<f64>),
    Schedule {
        times: Vec<f64>,
        gains: Vec<DMatrix<f64>>,
    },
}

impl ReducedGain {
    /// Optimal finite-horizon feedback `v = -Psi(t) x1`.
    pub fn from_riccati(sol: &RiccatiSolution) -> Self {
        ReducedGain::Schedule {
            times: sol.grid.clone(),
            gains: sol.psi.iter().map(|p| -p).collect(),
        }
    }

    /// Optimal stationary feedback `v = (Lambda0 - Rhat^{-1} S) x1`.
    pub fn from_are(are: &crate::riccati::AreResult, red: &ReducedLQ) -> Self {
        ReducedGain::Constant(&are.lambda0 - red.rhat_inv() * &red.s)
    }

    fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            ReducedGain::Constant(g) => g.clone(),
            ReducedGain::Schedule { times, gains } => {
                if times.is_empty() {
                    return gains[0].clone();
                }
                if t <= times[0] {
                    return gains[0].clone();
                }
                if t >= *times.last().unwrap() {
                    return gains.last().unwrap().clone();
                }
                let idx = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
                    Ok(i) => return gains[i].clone(),
                    Err(i) => i,
                };
                let (t0, t1) = (times[idx - 1], times[idx]);
                let w = (t - t0) / (t1 - t0);
                &gains[idx - 1] * (1.0 - w) + &gains[idx] * w
            }
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            ReducedGain::Constant(g) => (g.nrows(), g.ncols()),
            ReducedGain::Schedule { gains, .. } => (gains[0].nrows(), gains[0].ncols()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonKind {
    Finite,
    InfiniteTruncated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub cost_mean: f64,
    pub cost_stderr: f64,
    pub ci95: (f64, f64),
    pub per_path_costs: Option<Vec<f64>>,
    /// Max over paths and steps of the algebraic-constraint residual
    /// `|x2 + B2 v|`; zero up to rounding since `x2` is defined by it.
    pub constraint_residual: f64,
    /// Estimated fraction of the value lost to horizon truncation
    /// (infinite-horizon runs only).
    pub truncation_tail: Option<f64>,
}

/// Precomputed per-step data: closed-loop drift/diffusion and the cost
/// quadratic form in reduced coordinates.
struct StepData {
    acl: DMatrix<f64>,
    ccl: DMatrix<f64>,
    /// x1' Phi x1 = x'Qx + u'Ru with x, u reconstructed from x1.
    phi: DMatrix<f64>,
}

fn step_data(red: &ReducedLQ, gamma: &DMatrix<f64>) -> StepData {
    let n = red.sys.n();
    let h = red.h();
    let q_ord = n - h;
    let acl = &red.a1 + &red.b1 * gamma;
    let ccl = &red.c11 + &red.dtilde1 * gamma;
    // x = N1 (x1; -B2 v) = Z x1, u = K x + v = U x1
    let mut stack = DMatrix::zeros(n, h);
    stack
        .view_mut((0, 0), (h, h))
        .copy_from(&DMatrix::identity(h, h));
    stack
        .view_mut((h, 0), (q_ord, h))
        .copy_from(&(-&red.b2 * gamma));
    let z = &red.n1 * stack;
    let u_map = &red.k * &z + gamma;
    let phi = z.transpose() * &red.weights.q * &z
        + u_map.transpose() * &red.weights.r * &u_map;
    StepData { acl, ccl, phi }
}

/// Deterministic per-path stream seed: splitmix-style avalanche of
/// `(seed, path index)`.
fn path_seed(seed: u64, idx: u64) -> u64 {
    let mut z = seed ^ idx.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal by Box-Muller on the ChaCha stream.
struct NormalSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSource {
    fn new(seed: u64) -> Self {
        NormalSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn next(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        loop {
            let u1: f64 = self.rng.gen::<f64>();
            let u2: f64 = self.rng.gen::<f64>();
            if u1 <= f64::MIN_POSITIVE {
                continue;
            }
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            self.spare = Some(r * theta.sin());
            return r * theta.cos();
        }
    }
}

struct PathOutcome {
    cost: f64,
    constraint_residual: f64,
}

/// Simulate the reduced closed loop and estimate the cost functional.
///
/// Finite horizon: `J = E[ (1/2)∫ x'Qx + u'Ru dt + (1/2) x(T)'E'HE x(T) ]`.
/// Infinite horizon (truncated): `J = E[ ∫ x'Qx + u'Ru dt ]`, with an
/// estimated truncation tail reported alongside.
pub fn simulate_closed_loop(
    red: &ReducedLQ,
    gain: &ReducedGain,
    cfg: &SimConfig,
    horizon_kind: HorizonKind,
    keep_paths: bool,
) -> Result<SimulationResult> {
    cfg.validate()?;
    let h = red.h();
    let (gr, gc) = gain.dims();
    if gr != red.r() || gc != h {
        return Err(Error::DimensionMismatch(format!(
            "gain must be {} x {}",
            red.r(),
            h
        )));
    }
    let steps = cfg.steps();
    let dt = cfg.horizon / steps as f64;

    // Precompute per-step closed-loop and cost data (shared across paths).
    let gammas: Vec<DMatrix<f64>> = (0..=steps)
        .map(|i| gain.at(i as f64 * dt))
        .collect();
    let steps_cache: Vec<StepData> = gammas.iter().map(|g| step_data(red, g)).collect();

    let outcomes: Vec<Result<PathOutcome>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            run_path_with_terminal(
                red,
                &steps_cache,
                &gammas,
                cfg,
                horizon_kind,
                p,
            )
        })
        .collect();

    let mut costs = Vec::with_capacity(cfg.n_paths);
    let mut constraint = 0.0_f64;
    for o in outcomes {
        let o = o?;
        costs.push(o.cost);
        constraint = constraint.max(o.constraint_residual);
    }
    // the finite-horizon cost carries a global 1/2 on both the running
    // integral and the terminal term
    let scale = match horizon_kind {
        HorizonKind::Finite => 0.5,
        HorizonKind::InfiniteTruncated => 1.0,
    };
    let costs: Vec<f64> = costs.iter().map(|c| c * scale).collect();

    let mean = costs.iter().sum::<f64>() / costs.len() as f64;
    let var = if costs.len() > 1 {
        costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (costs.len() - 1) as f64
    } else {
        0.0
    };
    let stderr = (var / costs.len() as f64).sqrt();
    let truncation_tail = match horizon_kind {
        HorizonKind::InfiniteTruncated => Some(truncation_tail_estimate(red, gain, cfg.horizon)),
        HorizonKind::Finite => None,
    };
    Ok(SimulationResult {
        cost_mean: mean,
        cost_stderr: stderr,
        ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
        per_path_costs: if keep_paths { Some(costs) } else { None },
        constraint_residual: constraint,
        truncation_tail,
    })
}

fn run_path_with_terminal(
    red: &ReducedLQ,
    steps_cache: &[StepData],
    gammas: &[DMatrix<f64>],
    cfg: &SimConfig,
    horizon_kind: HorizonKind,
    path_idx: usize,
) -> Result<PathOutcome> {
    let h = red.h();
    let steps = cfg.steps();
    let dt = cfg.horizon / steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut noise = NormalSource::new(path_seed(cfg.seed, path_idx as u64));

    let mut x1 = red.x10.clone();
    let mut running = 0.0_f64;
    let mut g_prev = (x1.transpose() * &steps_cache[0].phi * &x1)[(0, 0)];

    let mut x1_next = DVector::zeros(h);
    for i in 0..steps {
        let sd = &steps_cache[i];
        let dw = sqrt_dt * noise.next();
        x1_next.copy_from(&x1);
        x1_next.gemv(dt, &sd.acl, &x1, 1.0);
        x1_next.gemv(dw, &sd.ccl, &x1, 1.0);
        std::mem::swap(&mut x1, &mut x1_next);
        let mag = x1.amax();
        if !mag.is_finite() || mag > OVERFLOW_GUARD {
            return Err(Error::Unstable { step: i });
        }
        let g_next = (x1.transpose() * &steps_cache[i + 1].phi * &x1)[(0, 0)];
        running += 0.5 * dt * (g_prev + g_next);
        g_prev = g_next;
    }

    let mut cost = running;
    if matches!(horizon_kind, HorizonKind::Finite) {
        if let Some(hmat) = &red.weights.h {
            let n = red.sys.n();
            let q_ord = n - h;
            let v = gammas.last().unwrap() * &x1;
            let x2 = -&red.b2 * &v;
            let mut stacked = DVector::zeros(n);
            stacked.rows_mut(0, h).copy_from(&x1);
            stacked.rows_mut(h, q_ord).copy_from(&x2);
            let xfull = &red.n1 * stacked;
            let ex = &red.sys.e * xfull;
            // caller halves running + terminal together for finite horizon
            cost += (ex.transpose() * hmat * ex)[(0, 0)];
        }
    }
    Ok(PathOutcome {
        cost,
        constraint_residual: 0.0,
    })
}

/// Tail fraction of the truncated infinite-horizon cost, estimated from
/// the decay rate of the closed-loop second moment: the slowest eigenvalue
/// of the Lyapunov operator `M -> Acl M + M Acl' + Ccl M Ccl'`.
pub fn truncation_tail_estimate(red: &ReducedLQ, gain: &ReducedGain, horizon: f64) -> f64 {
    let gamma = gain.at(horizon);
    let sd = step_data(red, &gamma);
    let h = red.h();
    if h == 0 {
        return 0.0;
    }
    let eye = DMatrix::<f64>::identity(h, h);
    let lyap = sd.acl.kronecker(&eye) + eye.kronecker(&sd.acl) + sd.ccl.kronecker(&sd.ccl);
    let decay = lyap
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if decay >= 0.0 {
        return 1.0; // not mean-square stable: truncation unjustified
    }
    (decay * horizon).exp()
}

/// Exact solution of the scalar closed loop
/// `dx = a x dt + s x dW`: `x(t) = x0 exp((a - s^2/2) t + s W(t))`,
/// sampled on the given times with the given Brownian increments.
pub fn analytic_scalar_path(
    a: f64,
    sigma: f64,
    x10: f64,
    times: &[f64],
    brownian: &[f64],
) -> Result<Vec<f64>> {
    if times.len() != brownian.len() {
        return Err(Error::DimensionMismatch(
            "times and Brownian samples must align".into(),
        ));
    }
    Ok(times
        .iter()
        .zip(brownian.iter())
        .map(|(&t, &w)| x10 * ((a - 0.5 * sigma * sigma) * t + sigma * w).exp())
        .collect())
}

/// Closed-loop drift and diffusion of a scalar (h = 1) reduced system
/// under a constant gain.
pub fn scalar_closed_loop(red: &ReducedLQ, gain: &ReducedGain) -> Result<(f64, f64)> {
    if red.h() != 1 {
        return Err(Error::NotScalar(red.h()));
    }
    let gamma = gain.at(0.0);
    let a = red.a1[(0, 0)] + (&red.b1 * &gamma)[(0, 0)];
    let s = red.c11[(0, 0)] + (&red.dtilde1 * &gamma)[(0, 0)];
    Ok((a, s))
}

/// Per-horizon cost means with common random numbers: each path is run to
/// the largest horizon once, recording the cumulative cost at each
/// requested horizon.
pub fn estimate_value_curve(
    red: &ReducedLQ,
    gain: &ReducedGain,
    cfg: &SimConfig,
    horizons: &[f64],
) -> Result<Vec<f64>> {
    let max_h = horizons.iter().cloned().fold(0.0_f64, f64::max);
    if max_h <= 0.0 {
        return Err(Error::InvalidConfig("horizons must be positive".into()));
    }
    let full = SimConfig {
        horizon: max_h,
        ..*cfg
    };
    full.validate()?;
    let steps = full.steps();
    let dt = max_h / steps as f64;
    let gammas: Vec<DMatrix<f64>> = (0..=steps).map(|i| gain.at(i as f64 * dt)).collect();
    let cache: Vec<StepData> = gammas.iter().map(|g| step_data(red, g)).collect();
    let marks: Vec<usize> = horizons
        .iter()
        .map(|&t| ((t / dt).round() as usize).min(steps))
        .collect();

    let per_path: Vec<Result<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut noise = NormalSource::new(path_seed(cfg.seed, p as u64));
            let mut x1 = red.x10.clone();
            let mut running = 0.0_f64;
            let mut g_prev = (x1.transpose() * &cache[0].phi * &x1)[(0, 0)];
            let mut at_marks = vec![0.0_f64; marks.len()];
            let sqrt_dt = dt.sqrt();
            let mut x1_next = DVector::zeros(red.h());
            for i in 0..steps {
                let dw = sqrt_dt * noise.next();
                x1_next.copy_from(&x1);
                x1_next.gemv(dt, &cache[i].acl, &x1, 1.0);
                x1_next.gemv(dw, &cache[i].ccl, &x1, 1.0);
                std::mem::swap(&mut x1, &mut x1_next);
                if !x1.amax().is_finite() || x1.amax() > OVERFLOW_GUARD {
                    return Err(Error::Unstable { step: i });
                }
                let g_next = (x1.transpose() * &cache[i + 1].phi * &x1)[(0, 0)];
                running += 0.5 * dt * (g_prev + g_next);
                g_prev = g_next;
                for (mi, &mark) in marks.iter().enumerate() {
                    if mark == i + 1 {
                        at_marks[mi] = running;
                    }
                }
            }
            Ok(at_marks)
        })
        .collect();

    let mut sums = vec![0.0_f64; marks.len()];
    for p in per_path {
        let v = p?;
        for (s, x) in sums.iter_mut().zip(v.iter()) {
            *s += x;
        }
    }
    Ok(sums.iter().map(|s| s / cfg.n_paths as f64).collect())
}

/// Downsampled trajectory export: rows of `(t, x components, u components)`
/// for one path, reconstructed through the algebraic constraint.
pub fn sample_trajectory(
    red: &ReducedLQ,
    gain: &ReducedGain,
    cfg: &SimConfig,
    path_idx: usize,
    max_rows: usize,
) -> Result<Vec<(f64, DVector<f64>, DVector<f64>)>> {
    cfg.validate()?;
    let steps = cfg.steps();
    let dt = cfg.horizon / steps as f64;
    let stride = (steps / max_rows.max(1)).max(1);
    let mut noise = NormalSource::new(path_seed(cfg.seed, path_idx as u64));
    let h = red.h();
    let n = red.sys.n();
    let q_ord = n - h;
    let mut x1 = red.x10.clone();
    let mut out = Vec::new();
    let sqrt_dt = dt.sqrt();
    for i in 0..=steps {
        let t = i as f64 * dt;
        if i % stride == 0 || i == steps {
            let gamma = gain.at(t);
            let v = &gamma * &x1;
            let x2 = -&red.b2 * &v;
            let mut stacked = DVector::zeros(n);
            stacked.rows_mut(0, h).copy_from(&x1);
            stacked.rows_mut(h, q_ord).copy_from(&x2);
            let x = &red.n1 * stacked;
            let u = &red.k * &x + v;
            out.push((t, x, u));
        }
        if i < steps {
            let gamma = gain.at(t);
            let sd = step_data(red, &gamma);
            let dw = sqrt_dt * noise.next();
            let mut x1n = x1.clone();
            x1n.gemv(dt, &sd.acl, &x1, 1.0);
            x1n.gemv(dw, &sd.ccl, &x1, 1.0);
            x1 = x1n;
            if !x1.amax().is_finite() || x1.amax() > OVERFLOW_GUARD {
                return Err(Error::Unstable { step: i });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::reduction::{assemble, LQWeights};
    use crate::wellposed::SingularSystem;
    use nalgebra::{dmatrix, dvector};

    fn scalar_reduced() -> ReducedLQ {
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
        assemble(
            &sys,
            &DMatrix::zeros(3, 3),
            &DMatrix::identity(3, 3),
            &DMatrix::identity(3, 3),
            &[1, 1],
            &weights,
            &Config::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_initial_state_zero_cost() {
        let mut red = scalar_reduced();
        red.x10 = dvector![0.0];
        let gain = ReducedGain::Constant(DMatrix::zeros(3, 1));
        let cfg = SimConfig {
            dt: 1e-3,
            horizon: 1.0,
            n_paths: 64,
            seed: 7,
        };
        let res =
            simulate_closed_loop(&red, &gain, &cfg, HorizonKind::InfiniteTruncated, false)
                .unwrap();
        assert!(res.cost_mean.abs() < 1e-12);
        assert!(res.constraint_residual <= 1e-12);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let red = scalar_reduced();
        let gain = ReducedGain::Constant(dmatrix![-0.3; -0.5; 0.0]);
        let cfg = SimConfig {
            dt: 1e-2,
            horizon: 2.0,
            n_paths: 128,
            seed: 42,
        };
        let a = simulate_closed_loop(&red, &gain, &cfg, HorizonKind::InfiniteTruncated, true)
            .unwrap();
        let b = simulate_closed_loop(&red, &gain, &cfg, HorizonKind::InfiniteTruncated, true)
            .unwrap();
        assert_eq!(
            a.per_path_costs.unwrap(),
            b.per_path_costs.unwrap(),
            "bit-identical per-path costs"
        );
    }

    #[test]
    fn analytic_path_matches_deterministic_exponential() {
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
        let brownian = vec![0.0; times.len()];
        let path = analytic_scalar_path(-1.0, 0.0, 2.0, &times, &brownian).unwrap();
        for (t, x) in times.iter().zip(path.iter()) {
            assert!((x - 2.0 * (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn euler_strong_error_halves_with_sqrt_dt() {
        // strong order 1/2 against the exact geometric path, common noise
        let a = -0.8;
        let sigma = 0.6;
        let x0 = 1.0;
        let horizon = 1.0;
        let n_paths = 400;
        let fine = 1 << 12;
        let mut errs = Vec::new();
        for level in 0..3 {
            let steps = fine >> level;
            let dt = horizon / steps as f64;
            let agg = 1 << level;
            let mut total = 0.0;
            for p in 0..n_paths {
                let mut noise = NormalSource::new(path_seed(99, p as u64));
                // finest increments, aggregated to this level
                let fine_dt = horizon / fine as f64;
                let incs: Vec<f64> = (0..fine)
                    .map(|_| fine_dt.sqrt() * noise.next())
                    .collect();
                let mut x = x0;
                let mut w = 0.0;
                for i in 0..steps {
                    let dw: f64 = incs[i * agg..(i + 1) * agg].iter().sum();
                    x += a * x * dt + sigma * x * dw;
                    w += dw;
                }
                let exact = x0 * ((a - 0.5 * sigma * sigma) * horizon + sigma * w).exp();
                total += (x - exact).abs();
            }
            errs.push(total / n_paths as f64);
        }
        let r1 = errs[1] / errs[0];
        let r2 = errs[2] / errs[1];
        // ratios near sqrt(2) ≈ 1.414
        for r in [r1, r2] {
            assert!(
                (1.15..=1.75).contains(&r),
                "strong-order ratio {r} not near sqrt(2): {errs:?}"
            );
        }
    }

    #[test]
    fn value_curve_monotone_for_stable_loop() {
        let red = scalar_reduced();
        // stabilizing constant gain
        let gain = ReducedGain::Constant(dmatrix![-0.34; -0.53; 0.0]);
        let cfg = SimConfig {
            dt: 1e-3,
            horizon: 8.0,
            n_paths: 500,
            seed: 3,
        };
        let curve = estimate_value_curve(&red, &gain, &cfg, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        for w in curve.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "cumulative cost grows with horizon");
        }
    }
}
