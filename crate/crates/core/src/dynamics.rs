//! Time stepping for `û″ = −(1 + N(‖u‖²_{Ḣ¹})) λ² û` and its linearization.
//!
//! The rotation step freezes the wave speed at the discrete-gradient value
//! `N̄ = (𝒩(C₁) − 𝒩(C₀))/(C₁ − C₀)`, solved by fixed-point iteration, and then
//! rotates every shell exactly. That makes the Hamiltonian an exact
//! invariant of the scheme, up to the fixed-point tolerance.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::spectral::{FrequencyGrid, SpectralState};

pub const MAX_FIXED_POINT_ITERS: usize = 5;
pub const FIXED_POINT_TOL: f64 = 1e-14;
/// `dt · λ_max · sqrt(1 + N)` bound for the explicit step.
pub const RK4_GUARD: f64 = 2.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Rotation,
    Rk4,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rotation => "rotation",
            Integrator::Rk4 => "rk4",
        }
    }
}

/// `(ŵ, ŵ′)` riding on a base state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedState {
    pub w: Vec<Complex64>,
    pub w_vel: Vec<Complex64>,
}

impl LinearizedState {
    pub fn zero(m: usize) -> Self {
        Self { w: vec![Complex64::new(0.0, 0.0); m], w_vel: vec![Complex64::new(0.0, 0.0); m] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    fn check(&self, m: usize) -> Result<()> {
        if self.w.len() != m || self.w_vel.len() != m {
            return Err(Error::GridMismatch { expected: m, found: self.w.len().min(self.w_vel.len()) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub state: SpectralState,
    pub linearized: Option<LinearizedState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub integrator: Integrator,
    pub dt: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &SpectralState {
        &self.samples.last().expect("trajectory has at least one sample").state
    }

    /// Time between consecutive samples.
    pub fn sample_spacing(&self) -> Option<f64> {
        match self.samples.as_slice() {
            [a, b, ..] => Some(b.time - a.time),
            _ => None,
        }
    }
}

fn ht1_mass(grid: &FrequencyGrid, u: &[Complex64]) -> f64 {
    grid.lambdas().iter().zip(grid.weights()).zip(u).map(|((&l, &w), z)| w * l * l * z.norm_sqr()).sum()
}

/// `(û′, û″)`.
pub fn rhs(state: &SpectralState, n: &NonlinearitySpec) -> (Vec<Complex64>, Vec<Complex64>) {
    let omega = 1.0 + n.eval(ht1_mass(state.grid(), state.u()));
    let dv = state
        .grid()
        .lambdas()
        .iter()
        .zip(state.u())
        .map(|(&l, &u)| u * (-omega * l * l))
        .collect();
    (state.v().to_vec(), dv)
}

/// `½ Σ w|û′|² + ½ Σ w λ²|û|² + ½ 𝒩(Σ w λ²|û|²)`.
pub fn hamiltonian(state: &SpectralState, n: &NonlinearitySpec) -> f64 {
    let c = ht1_mass(state.grid(), state.u());
    let kinetic: f64 = state.grid().weights().iter().zip(state.v()).map(|(&w, z)| w * z.norm_sqr()).sum();
    0.5 * kinetic + 0.5 * c + 0.5 * n.antiderivative(c)
}

fn rotate(grid: &FrequencyGrid, u: &[Complex64], v: &[Complex64], speed_sq: f64, dt: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let c = speed_sq.sqrt();
    let m = u.len();
    let mut un = Vec::with_capacity(m);
    let mut vn = Vec::with_capacity(m);
    for k in 0..m {
        let omega = grid.lambdas()[k] * c;
        let (sn, cs) = (omega * dt).sin_cos();
        // sin(ωdt)/ω → dt as ω → 0
        let sinc = if omega == 0.0 { dt } else { sn / omega };
        un.push(u[k] * cs + v[k] * sinc);
        vn.push(u[k] * (-omega * sn) + v[k] * cs);
    }
    (un, vn)
}

fn rotation_attempt(state: &SpectralState, n: &NonlinearitySpec, dt: f64) -> Result<Option<SpectralState>> {
    let grid = state.grid();
    let c0 = ht1_mass(grid, state.u());
    let mut c1 = c0;
    for _ in 0..MAX_FIXED_POINT_ITERS {
        let speed = 1.0 + n.secant_mean(c0, c1);
        if !(speed > 0.0) {
            return Err(Error::Degenerate { index: grid.len().saturating_sub(1), value: speed });
        }
        let (u, v) = rotate(grid, state.u(), state.v(), speed, dt);
        let c_new = ht1_mass(grid, &u);
        let converged = (c_new - c1).abs() <= FIXED_POINT_TOL * (c0 + c_new) || n.is_zero();
        c1 = c_new;
        if converged {
            let st = SpectralState::from_parts_unchecked(Arc::clone(state.grid_arc()), u, v, state.time() + dt);
            return Ok(Some(st));
        }
    }
    Ok(None)
}

/// One energy-conserving rotation step. If the fixed point does not settle
/// the step is retried once as two half steps.
pub fn step_rotation(state: &SpectralState, n: &NonlinearitySpec, dt: f64) -> Result<SpectralState> {
    check_dt(dt)?;
    if let Some(next) = rotation_attempt(state, n, dt)? {
        return Ok(next);
    }
    let half = 0.5 * dt;
    let mid = rotation_attempt(state, n, half)?.ok_or(Error::FixedPoint { time: state.time() })?;
    let end = rotation_attempt(&mid, n, half)?.ok_or(Error::FixedPoint { time: mid.time() })?;
    Ok(end.with_time(state.time() + dt))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Largest step the explicit scheme accepts at this state.
pub fn rk4_max_dt(state: &SpectralState, n: &NonlinearitySpec) -> f64 {
    let speed = 1.0 + n.eval(ht1_mass(state.grid(), state.u()));
    match state.grid().lambda_max() {
        Some(l) if speed > 0.0 => RK4_GUARD / (l * speed.sqrt()),
        _ => f64::INFINITY,
    }
}

fn axpy(y: &[Complex64], a: f64, x: &[Complex64]) -> Vec<Complex64> {
    y.iter().zip(x).map(|(y, x)| y + x * a).collect()
}

/// Classical four-stage step.
pub fn step_rk4(state: &SpectralState, n: &NonlinearitySpec, dt: f64) -> Result<SpectralState> {
    check_dt(dt)?;
    let max_dt = rk4_max_dt(state, n);
    if dt > max_dt {
        return Err(Error::StabilityGuard { dt, max_dt });
    }
    let grid = state.grid();
    let field = |u: &[Complex64], v: &[Complex64]| -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let omega = 1.0 + n.eval(ht1_mass(grid, u));
        if !(omega > 0.0) {
            return Err(Error::Degenerate { index: grid.len().saturating_sub(1), value: omega });
        }
        let dv = grid.lambdas().iter().zip(u).map(|(&l, &z)| z * (-omega * l * l)).collect();
        Ok((v.to_vec(), dv))
    };
    let (u0, v0) = (state.u(), state.v());
    let (k1u, k1v) = field(u0, v0)?;
    let (k2u, k2v) = field(&axpy(u0, 0.5 * dt, &k1u), &axpy(v0, 0.5 * dt, &k1v))?;
    let (k3u, k3v) = field(&axpy(u0, 0.5 * dt, &k2u), &axpy(v0, 0.5 * dt, &k2v))?;
    let (k4u, k4v) = field(&axpy(u0, dt, &k3u), &axpy(v0, dt, &k3v))?;
    let combine = |y: &[Complex64], a: &[Complex64], b: &[Complex64], c: &[Complex64], d: &[Complex64]| -> Vec<Complex64> {
        (0..y.len()).map(|k| y[k] + (a[k] + (b[k] + c[k]) * 2.0 + d[k]) * (dt / 6.0)).collect()
    };
    let u = combine(u0, &k1u, &k2u, &k3u, &k4u);
    let v = combine(v0, &k1v, &k2v, &k3v, &k4v);
    Ok(SpectralState::from_parts_unchecked(Arc::clone(state.grid_arc()), u, v, state.time() + dt))
}

pub fn step(state: &SpectralState, n: &NonlinearitySpec, dt: f64, integrator: Integrator) -> Result<SpectralState> {
    match integrator {
        Integrator::Rotation => step_rotation(state, n, dt),
        Integrator::Rk4 => step_rk4(state, n, dt),
    }
}

/// Number of steps and the adjusted step that land exactly on `t_final`.
fn schedule(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("final time must be non-negative, got {t_final}")));
    }
    check_dt(dt)?;
    if t_final == 0.0 {
        return Ok((0, dt));
    }
    let steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

/// Steps from `state.time()` for a duration `t_final`, keeping every
/// `stride`-th state and the final one.
pub fn evolve(
    state: &SpectralState,
    n: &NonlinearitySpec,
    t_final: f64,
    dt: f64,
    integrator: Integrator,
    stride: usize,
) -> Result<Trajectory> {
    let (steps, h) = schedule(t_final, dt)?;
    let stride = stride.max(1);
    let t0 = state.time();
    let mut samples = vec![Sample { time: t0, state: state.clone(), linearized: None }];
    let mut cur = state.clone();
    for k in 1..=steps {
        let t = t0 + k as f64 * h;
        cur = step(&cur, n, h, integrator)
            .map_err(|e| Error::Step { time: cur.time(), source: Box::new(e) })?
            .with_time(t);
        if k % stride == 0 || k == steps {
            samples.push(Sample { time: t, state: cur.clone(), linearized: None });
        }
    }
    Ok(Trajectory { samples, integrator, dt: h, steps })
}

/// `(ŵ′, ŵ″)` for the model linearization
/// `w″ = −λ²(1 + A‖u‖²_{Ḣ¹}) ŵ − 2Aλ² û Σ w_j λ_j² Re(û_j ŵ̄_j)`.
pub fn linearized_rhs(base: &SpectralState, lin: &LinearizedState, a: f64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    lin.check(base.len())?;
    Ok((lin.w_vel.clone(), linearized_accel(base.grid(), base.u(), &lin.w, a)))
}

fn linearized_accel(grid: &FrequencyGrid, u: &[Complex64], w: &[Complex64], a: f64) -> Vec<Complex64> {
    let c = ht1_mass(grid, u);
    let coupling: f64 = grid
        .lambdas()
        .iter()
        .zip(grid.weights())
        .zip(u.iter().zip(w))
        .map(|((&l, &wt), (u, w))| wt * l * l * (u * w.conj()).re)
        .sum();
    grid.lambdas()
        .iter()
        .zip(u.iter().zip(w))
        .map(|(&l, (&u, &w))| {
            let x = l * l;
            w * (-x * (1.0 + a * c)) + u * (-2.0 * a * x * coupling)
        })
        .collect()
}

/// Co-evolves `u` (rotation steps) and `w` (RK4 on the linear system, with
/// `u` at the half step from cubic Hermite interpolation of the endpoints).
pub fn evolve_pair(
    base: &SpectralState,
    lin: &LinearizedState,
    n: &NonlinearitySpec,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    let a = n.model_constant().ok_or(Error::NotModelCase)?;
    lin.check(base.len())?;
    let (steps, h) = schedule(t_final, dt)?;
    let stride = stride.max(1);
    let grid = Arc::clone(base.grid_arc());
    let t0 = base.time();
    let mut samples = vec![Sample { time: t0, state: base.clone(), linearized: Some(lin.clone()) }];
    let mut u_cur = base.clone();
    let mut w_cur = lin.clone();
    for k in 1..=steps {
        let t = t0 + k as f64 * h;
        let u_next = step_rotation(&u_cur, n, h)
            .map_err(|e| Error::Step { time: u_cur.time(), source: Box::new(e) })?
            .with_time(t);
        let guard = rk4_max_dt(&u_cur, n);
        if h > guard {
            return Err(Error::Step { time: u_cur.time(), source: Box::new(Error::StabilityGuard { dt: h, max_dt: guard }) });
        }
        let u_mid: Vec<Complex64> = (0..grid.len())
            .map(|j| (u_cur.u()[j] + u_next.u()[j]) * 0.5 + (u_cur.v()[j] - u_next.v()[j]) * (h / 8.0))
            .collect();
        w_cur = rk4_linear(&grid, u_cur.u(), &u_mid, u_next.u(), &w_cur, a, h);
        u_cur = u_next;
        if k % stride == 0 || k == steps {
            samples.push(Sample { time: t, state: u_cur.clone(), linearized: Some(w_cur.clone()) });
        }
    }
    Ok(Trajectory { samples, integrator: Integrator::Rotation, dt: h, steps })
}

fn rk4_linear(
    grid: &FrequencyGrid,
    u0: &[Complex64],
    um: &[Complex64],
    u1: &[Complex64],
    lin: &LinearizedState,
    a: f64,
    h: f64,
) -> LinearizedState {
    let (w0, z0) = (&lin.w, &lin.w_vel);
    let k1w = z0.clone();
    let k1z = linearized_accel(grid, u0, w0, a);
    let w1 = axpy(w0, 0.5 * h, &k1w);
    let z1 = axpy(z0, 0.5 * h, &k1z);
    let k2z = linearized_accel(grid, um, &w1, a);
    let w2 = axpy(w0, 0.5 * h, &z1);
    let z2 = axpy(z0, 0.5 * h, &k2z);
    let k3z = linearized_accel(grid, um, &w2, a);
    let w3 = axpy(w0, h, &z2);
    let z3 = axpy(z0, h, &k3z);
    let k4z = linearized_accel(grid, u1, &w3, a);
    let m = w0.len();
    let w = (0..m).map(|k| w0[k] + (k1w[k] + (z1[k] + z2[k]) * 2.0 + z3[k]) * (h / 6.0)).collect();
    let w_vel = (0..m).map(|k| z0[k] + (k1z[k] + (k2z[k] + k3z[k]) * 2.0 + k4z[k]) * (h / 6.0)).collect();
    LinearizedState { w, w_vel }
}

/// Time derivative of the acceleration `−(1 + N(C)) λ² û` along the flow,
/// by the chain rule: `−(1 + N(C)) λ² û′ − N′(C) Ċ λ² û` with `Ċ = 2Σ w λ² Re(û ū′)`.
pub fn acceleration_rate(state: &SpectralState, n: &NonlinearitySpec) -> Vec<Complex64> {
    let g = state.grid();
    let c = ht1_mass(g, state.u());
    let c_dot: f64 = g
        .lambdas()
        .iter()
        .zip(g.weights())
        .zip(state.u().iter().zip(state.v()))
        .map(|((&l, &w), (u, v))| 2.0 * w * l * l * (u * v.conj()).re)
        .sum();
    let (omega, d_omega) = (1.0 + n.eval(c), n.d1(c) * c_dot);
    g.lambdas()
        .iter()
        .zip(state.u().iter().zip(state.v()))
        .map(|(&l, (&u, &v))| v * (-omega * l * l) + u * (-d_omega * l * l))
        .collect()
}

/// `½ Σ w λ^{2σ}|ŵ′|² + ½(1 + A‖u‖²_{Ḣ¹}) Σ w λ^{2+2σ}|ŵ|²`.
pub fn linearized_energy(base: &SpectralState, lin: &LinearizedState, a: f64, sigma: f64) -> Result<f64> {
    lin.check(base.len())?;
    let g = base.grid();
    let c = ht1_mass(g, base.u());
    let (mut kin, mut pot) = (0.0, 0.0);
    for k in 0..g.len() {
        let (l, w) = (g.lambdas()[k], g.weights()[k]);
        let ls = l.powf(2.0 * sigma);
        kin += w * ls * lin.w_vel[k].norm_sqr();
        pot += w * ls * l * l * lin.w[k].norm_sqr();
    }
    Ok(0.5 * kin + 0.5 * (1.0 + a * c) * pot)
}

/// The separated and mixed parts of the linearized energy derivative,
/// `A Σ λ_1² λ_2^{2+2σ} Re(û′_1 ū_1)|ŵ_2|²` and
/// `−2A Σ λ_1² λ_2^{2+2σ} Re(û_1 ŵ̄_1) Re(û_2 ŵ̄′_2)`.
pub fn sep_mixed(base: &SpectralState, lin: &LinearizedState, a: f64, sigma: f64) -> Result<(f64, f64)> {
    lin.check(base.len())?;
    let g = base.grid();
    let (mut flux, mut wpot, mut cross, mut cross_vel) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..g.len() {
        let (l, wt) = (g.lambdas()[k], g.weights()[k]);
        let x = l * l;
        let xs = x * l.powf(2.0 * sigma);
        let u = base.u()[k];
        flux += wt * x * (base.v()[k] * u.conj()).re;
        wpot += wt * xs * lin.w[k].norm_sqr();
        cross += wt * x * (u * lin.w[k].conj()).re;
        cross_vel += wt * xs * (u * lin.w_vel[k].conj()).re;
    }
    Ok((a * flux * wpot, -2.0 * a * cross * cross_vel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_random_decay, build_two_mode, Mode, RandomDecay};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random(m: usize, seed: u64, size: f64, lmax: f64) -> SpectralState {
        build_random_decay(&RandomDecay { modes: m, lambda_min: 1.0, lambda_max: lmax, regularity: 0.25, margin: 0.5, seed })
            .unwrap()
            .rescale_to(size, 0.0)
            .unwrap()
    }

    fn single(lambda: f64, u: Complex64, v: Complex64) -> SpectralState {
        SpectralState::from_modes(vec![Mode { lambda, weight: 1.0, u, v }], 0.0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let st = random(8, 1, 0.1, 4.0);
        let (du, dv) = rhs(&st.scaled(0.0), &NonlinearitySpec::model(1.0));
        assert!(du.iter().chain(&dv).all(|z| z.norm() == 0.0));
        let (_, dv) = rhs(&single(2.0, c(1.0, 0.0), c(0.0, 0.0)), &NonlinearitySpec::zero());
        assert_eq!(dv[0], c(-4.0, 0.0));
        let st = st.rescale_to(1.0, 0.0).unwrap();
        let mass = st.sobolev_norm_sq(1.0).unwrap();
        let st = st.scaled((0.01 / mass).sqrt());
        let (_, dv) = rhs(&st, &NonlinearitySpec::model(1.0));
        for k in 0..st.len() {
            let expect = st.u()[k] * (-1.01 * st.grid().lambdas()[k].powi(2));
            assert!((dv[k] - expect).norm() <= 1e-15 * expect.norm().max(1e-300));
        }
    }

    #[test]
    fn free_flow_is_exact() {
        let st = single(1.0, c(0.3, -0.2), c(0.5, 0.1));
        let out = step_rotation(&st, &NonlinearitySpec::zero(), 10.0 * std::f64::consts::PI).unwrap();
        assert!(out.sup_distance(&st).unwrap() < 1e-12);
        let st = build_two_mode([1.0, 3.0], [c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let out = step_rotation(&st, &NonlinearitySpec::zero(), std::f64::consts::FRAC_PI_2).unwrap();
        assert!((out.u()[0] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn two_mode_free_amplitude() {
        let (cp, cm) = ([c(0.3, 0.4), c(-0.2, 0.1)], [c(0.1, -0.25), c(0.05, 0.3)]);
        let lam = [1.3, 2.9];
        let st = build_two_mode(lam, cp, cm).unwrap();
        let traj = evolve(&st, &NonlinearitySpec::zero(), 4.5, 0.5, Integrator::Rotation, 1).unwrap();
        assert_eq!(traj.samples.len(), 10);
        for smp in &traj.samples {
            for k in 0..2 {
                let t = smp.time;
                let expect = cp[k].norm_sqr() + cm[k].norm_sqr() + 2.0 * (cp[k] * cm[k].conj() * Complex64::from_polar(1.0, 2.0 * lam[k] * t)).re;
                assert!((smp.state.u()[k].norm_sqr() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_examples() {
        let st = single(2.0, c(0.5, 0.0), c(0.0, 1.0));
        assert_eq!(hamiltonian(&st, &NonlinearitySpec::zero()), 0.5 + 0.5);
        let a = 0.7;
        let h = hamiltonian(&st, &NonlinearitySpec::model(a));
        assert!((h - (0.5 + 0.5 + 0.5 * a * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rotation_conserves_hamiltonian() {
        let n = NonlinearitySpec::model(1.0);
        let st = random(64, 2, 0.05, 8.0);
        let h0 = hamiltonian(&st, &n);
        let traj = evolve(&st, &n, 10.0, 1e-3, Integrator::Rotation, 10_000).unwrap();
        let h1 = hamiltonian(traj.last(), &n);
        assert!(((h1 - h0) / h0).abs() <= 1e-9, "{}", (h1 - h0) / h0);
    }

    #[test]
    fn single_mode_drift_per_step() {
        let n = NonlinearitySpec::quadratic(1.0, -0.5);
        let mut st = single(3.0, c(0.01, 0.002), c(-0.005, 0.02));
        let h0 = hamiltonian(&st, &n);
        for _ in 0..100 {
            let h_prev = hamiltonian(&st, &n);
            st = step_rotation(&st, &n, 0.05).unwrap();
            assert!(((hamiltonian(&st, &n) - h_prev) / h0).abs() <= 1e-13);
        }
    }

    fn convergence_errors(integrator: Integrator, n: &NonlinearitySpec, st: &SpectralState, t: f64, dts: &[f64]) -> Vec<f64> {
        let reference = evolve(st, n, t, dts.last().unwrap() / 8.0, Integrator::Rk4, usize::MAX).unwrap();
        dts.iter()
            .map(|&dt| {
                let out = evolve(st, n, t, dt, integrator, usize::MAX).unwrap();
                out.last().sup_distance(reference.last()).unwrap()
            })
            .collect()
    }

    #[test]
    fn rk4_is_fourth_order() {
        let st = single(1.0, c(0.6, 0.1), c(0.2, -0.4));
        let n = NonlinearitySpec::zero();
        let exact = step_rotation(&st, &n, 2.0).unwrap();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| evolve(&st, &n, 2.0, dt, Integrator::Rk4, usize::MAX).unwrap().last().sup_distance(&exact).unwrap())
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 4.0).abs() < 0.1, "slope {slope}");
        }
    }

    #[test]
    fn rotation_is_second_order() {
        let n = NonlinearitySpec::model(1.0);
        let st = random(16, 3, 0.3, 4.0);
        let errs = convergence_errors(Integrator::Rotation, &n, &st, 1.0, &[0.02, 0.01, 0.005]);
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
        }
    }

    #[test]
    fn integrators_agree() {
        let n = NonlinearitySpec::model(1.0);
        let st = random(64, 4, 0.05, 8.0);
        let a = evolve(&st, &n, 1.0, 1e-3, Integrator::Rk4, usize::MAX).unwrap();
        let b = evolve(&st, &n, 1.0, 1e-4, Integrator::Rotation, usize::MAX).unwrap();
        assert!(a.last().sup_distance(b.last()).unwrap() <= 1e-8);
    }

    #[test]
    fn rk4_guard() {
        let st = random(8, 5, 0.1, 100.0);
        let err = step_rk4(&st, &NonlinearitySpec::zero(), 0.1).unwrap_err();
        assert!(matches!(err, Error::StabilityGuard { .. }));
        assert!(step_rk4(&st, &NonlinearitySpec::zero(), 0.027).is_ok());
        let z = st.scaled(0.0);
        assert_eq!(step_rk4(&z, &NonlinearitySpec::model(1.0), 0.01).unwrap().u(), z.u());
    }

    #[test]
    fn zero_duration_and_reversal() {
        let n = NonlinearitySpec::model(1.0);
        let st = random(32, 6, 0.2, 6.0);
        assert_eq!(evolve(&st, &n, 0.0, 1e-3, Integrator::Rotation, 1).unwrap().samples.len(), 1);
        let fwd = evolve(&st, &n, 1.0, 1e-3, Integrator::Rotation, usize::MAX).unwrap();
        let back = evolve(&fwd.last().reversed(), &n, 1.0, 1e-3, Integrator::Rotation, usize::MAX).unwrap();
        assert!(back.last().reversed().sup_distance(&st).unwrap() <= 1e-8);
    }

    #[test]
    fn degenerate_step_fails_with_time() {
        let st = random(8, 7, 1.0, 4.0);
        let n = NonlinearitySpec::model(-2.0 / st.sobolev_norm_sq(1.0).unwrap());
        let err = evolve(&st, &n, 1.0, 0.1, Integrator::Rotation, 1).unwrap_err();
        assert!(matches!(err, Error::Step { time, .. } if time == 0.0));
    }

    #[test]
    fn linear_flow_superposition() {
        let x = random(20, 8, 0.3, 5.0);
        let y = random(20, 9, 0.3, 5.0);
        let combo = x.with_amplitudes(
            x.u().iter().zip(y.u()).map(|(a, b)| a * 2.0 - b * 0.5).collect(),
            x.v().iter().zip(y.v()).map(|(a, b)| a * 2.0 - b * 0.5).collect(),
            0.0,
        )
        .unwrap();
        let run = |s: &SpectralState, n: &NonlinearitySpec| evolve(s, n, 1.0, 0.01, Integrator::Rotation, usize::MAX).unwrap().last().clone();
        let residual = |n: &NonlinearitySpec| {
            let (fx, fy, fc) = (run(&x, n), run(&y, n), run(&combo, n));
            let lin = fx.with_amplitudes(
                fx.u().iter().zip(fy.u()).map(|(a, b)| a * 2.0 - b * 0.5).collect(),
                fx.v().iter().zip(fy.v()).map(|(a, b)| a * 2.0 - b * 0.5).collect(),
                fc.time(),
            )
            .unwrap();
            lin.sup_distance(&fc).unwrap()
        };
        assert!(residual(&NonlinearitySpec::zero()) < 1e-14);
        assert!(residual(&NonlinearitySpec::model(1.0)) > 1e-4);
    }

    #[test]
    fn linearized_rhs_examples() {
        let st = random(10, 10, 0.2, 4.0);
        let (dw, dz) = linearized_rhs(&st, &LinearizedState::zero(10), 1.0).unwrap();
        assert!(dw.iter().chain(&dz).all(|z| z.norm() == 0.0));
        assert!(linearized_rhs(&st, &LinearizedState::zero(9), 1.0).is_err());
    }

    #[test]
    fn velocity_solves_linearization() {
        let n = NonlinearitySpec::model(1.0);
        let st = random(24, 11, 0.3, 5.0);
        let traj = evolve(&st, &n, 1.0, 1e-2, Integrator::Rotation, 10).unwrap();
        for smp in &traj.samples {
            let s = &smp.state;
            let (_, accel) = rhs(s, &n);
            let lin = LinearizedState { w: s.v().to_vec(), w_vel: accel };
            let (_, via_lin) = linearized_rhs(s, &lin, 1.0).unwrap();
            let direct = acceleration_rate(s, &n);
            let worst = via_lin.iter().zip(&direct).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(worst <= 1e-10);
        }
    }

    #[test]
    fn evolve_pair_requires_model_and_keeps_zero() {
        let st = random(12, 12, 0.2, 4.0);
        let err = evolve_pair(&st, &LinearizedState::zero(12), &NonlinearitySpec::quadratic(1.0, 1.0), 1.0, 0.01, 1).unwrap_err();
        assert_eq!(err, Error::NotModelCase);
        assert!(err.to_string().contains("linearized flow implemented for model case only"));
        let traj = evolve_pair(&st, &LinearizedState::zero(12), &NonlinearitySpec::model(1.0), 0.5, 0.01, 10).unwrap();
        for smp in &traj.samples {
            let lin = smp.linearized.as_ref().unwrap();
            assert!(lin.w.iter().chain(&lin.w_vel).all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn linearized_energy_rate_is_sep_plus_mixed() {
        let a = 1.0;
        let n = NonlinearitySpec::model(a);
        let st = random(16, 13, 0.3, 4.0);
        let w0 = random(16, 14, 0.3, 4.0);
        let lin = LinearizedState { w: w0.u().to_vec(), w_vel: w0.v().to_vec() };
        let h = 1e-3;
        let traj = evolve_pair(&st, &lin, &n, 4.0 * h, h / 8.0, 8).unwrap();
        let e: Vec<f64> = traj
            .samples
            .iter()
            .map(|s| linearized_energy(&s.state, s.linearized.as_ref().unwrap(), a, 0.25).unwrap())
            .collect();
        let fd = (e[0] - 8.0 * e[1] + 8.0 * e[3] - e[4]) / (12.0 * h);
        let mid = &traj.samples[2];
        let (sep, mixed) = sep_mixed(&mid.state, mid.linearized.as_ref().unwrap(), a, 0.25).unwrap();
        assert!(((fd - (sep + mixed)) / (sep + mixed)).abs() < 1e-6, "{fd} vs {}", sep + mixed);
    }
}
