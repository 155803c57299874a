//! Verdicts built from the functionals and trajectories: derivative
//! estimation, scaling fits, comparability sweeps, identity checks, the
//! kernel and `F` property suites, the obstruction certificate for the
//! linearized system, the resonance experiment and truncation convergence.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, evolve, evolve_pair, Integrator, LinearizedState, Trajectory};
use crate::energy::{self, divided_difference, modified_energy, modified_energies, KERNEL_TOL};
use crate::error::{Error, Result};
use crate::nonlinearity::{build_profile, NonlinearitySpec};
use crate::spectral::{FrequencyGrid, SpectralState};

const UNIFORM_TOL: f64 = 1e-9;

fn check_uniform(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::NonUniformSeries);
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err(Error::NonUniformSeries);
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - h).abs() > UNIFORM_TOL * h.max(times[0].abs().max(1.0) * 1e-6) {
            return Err(Error::NonUniformSeries);
        }
    }
    Ok(h)
}

/// Fourth-order centered derivative at `index`: the Richardson combination
/// of the central differences at `h` and `2h`.
pub fn derivative_fd(series: &[(f64, f64)], index: usize) -> Result<f64> {
    if index < 2 || index + 2 >= series.len() {
        return Err(Error::StencilRange { index, len: series.len() });
    }
    let times: Vec<f64> = series[index - 2..=index + 2].iter().map(|p| p.0).collect();
    let h = check_uniform(&times)?;
    let f = |k: usize| series[k].1;
    let d1 = (f(index + 1) - f(index - 1)) / (2.0 * h);
    let d2 = (f(index + 2) - f(index - 2)) / (4.0 * h);
    Ok((4.0 * d1 - d2) / 3.0)
}

/// Second-order centered derivative at `index`.
pub fn derivative_fd2(series: &[(f64, f64)], index: usize) -> Result<f64> {
    if index < 1 || index + 1 >= series.len() {
        return Err(Error::StencilRange { index, len: series.len() });
    }
    let times: Vec<f64> = series[index - 1..=index + 1].iter().map(|p| p.0).collect();
    let h = check_uniform(&times)?;
    Ok((series[index + 1].1 - series[index - 1].1) / (2.0 * h))
}

/// Least-squares line through `(log ε, log y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

impl ScalingFit {
    pub fn fit(epsilons: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if epsilons.len() != values.len() || epsilons.len() < 3 {
            return Err(Error::InvalidArgument("a scaling fit needs at least 3 paired points".into()));
        }
        if epsilons.iter().chain(&values).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("scaling fit needs positive finite data".into()));
        }
        let lx: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let max_residual = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
        if !slope.is_finite() {
            return Err(Error::NonFinite("scaling fit slope"));
        }
        Ok(Self { epsilons, values, slope, intercept, max_residual })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FitOutcome {
    Fitted(ScalingFit),
    Degenerate { reason: String, values: Vec<f64> },
}

impl FitOutcome {
    pub fn slope(&self) -> Option<f64> {
        match self {
            FitOutcome::Fitted(f) => Some(f.slope),
            FitOutcome::Degenerate { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    pub integrator: Integrator,
    /// Integrator step.
    pub dt: f64,
    /// Spacing of the five samples used by the derivative stencil.
    pub fd_step: f64,
    /// Regularity of the size measurement `Ḣ^{1+r} × Ḣ^r`.
    pub size_regularity: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self { integrator: Integrator::Rk4, dt: 1e-3, fd_step: 1e-2, size_regularity: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingExperiment {
    pub s: f64,
    pub unmodified: FitOutcome,
    pub modified: FitOutcome,
    /// `|dE/dt| / E` of the modified energy from the exact tangent, for
    /// comparison with the trajectory estimate.
    pub modified_tangent: Vec<f64>,
}

impl ScalingExperiment {
    pub fn slope_difference(&self) -> Option<f64> {
        Some(self.modified.slope()? - self.unmodified.slope()?)
    }
}

/// Values at `t = −2h, −h, 0, h, 2h` of `f` along the flow through `state`,
/// the backward half obtained by running the reversed state forward.
fn centered_samples<F>(state: &SpectralState, n: &NonlinearitySpec, opts: &ScalingOptions, f: F) -> Result<[f64; 5]>
where
    F: Fn(&SpectralState) -> Result<f64>,
{
    let h = opts.fd_step;
    let stride = (h / opts.dt).round().max(1.0) as usize;
    let dt = h / stride as f64;
    let fwd = evolve(state, n, 2.0 * h, dt, opts.integrator, stride)?;
    let bwd = evolve(&state.reversed(), n, 2.0 * h, dt, opts.integrator, stride)?;
    if fwd.samples.len() != 3 || bwd.samples.len() != 3 {
        return Err(Error::InvalidArgument("fd_step must be a multiple of dt".into()));
    }
    Ok([
        f(&bwd.samples[2].state.reversed())?,
        f(&bwd.samples[1].state.reversed())?,
        f(state)?,
        f(&fwd.samples[1].state)?,
        f(&fwd.samples[2].state)?,
    ])
}

fn five_point(v: &[f64; 5], h: f64) -> f64 {
    (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * h)
}

/// Relative rates `|dE/dt|/E` of the unmodified and modified energies for
/// data rescaled to each `ε`, fitted against `ε` on log-log axes.
pub fn scaling_slope_experiment(
    base: &SpectralState,
    n: &NonlinearitySpec,
    s: f64,
    epsilons: &[f64],
    opts: &ScalingOptions,
) -> Result<ScalingExperiment> {
    if epsilons.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 epsilons".into()));
    }
    let mut y_unmod = Vec::with_capacity(epsilons.len());
    let mut y_mod = Vec::with_capacity(epsilons.len());
    let mut y_tan = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let st = base.rescale_to(eps, opts.size_regularity)?;
        let e_unmod = energy::unmodified_energy(&st, n, s)?;
        y_unmod.push((energy::unmodified_derivative_analytic(&st, n, s)? / e_unmod).abs());
        let e = centered_samples(&st, n, opts, |x| Ok(modified_energy(x, n, s)?.e_total))?;
        y_mod.push((five_point(&e, opts.fd_step) / e[2]).abs());
        let rate = energy::modified_energy_rate(&st, n, s)?;
        y_tan.push((rate.e_total / e[2]).abs());
    }
    let outcome = |values: Vec<f64>, what: &str| -> Result<FitOutcome> {
        if n.is_zero() {
            return Ok(FitOutcome::Degenerate { reason: "nonlinearity vanishes; energies are conserved".into(), values });
        }
        if values.iter().any(|v| !(*v > 0.0)) {
            return Ok(FitOutcome::Degenerate { reason: format!("{what} derivative vanishes at roundoff"), values });
        }
        Ok(FitOutcome::Fitted(ScalingFit::fit(epsilons.to_vec(), values)?))
    };
    Ok(ScalingExperiment {
        s,
        unmodified: outcome(y_unmod, "unmodified")?,
        modified: outcome(y_mod, "modified")?,
        modified_tangent: y_tan,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuinticPoint {
    pub t: f64,
    pub ratio: f64,
    pub gate_ok: bool,
}

/// `R(t) = |dE^s/dt| / (E^s (E^{1/4})²)` at interior samples, derivative by
/// [`derivative_fd`]. Samples above the gate keep their value and carry a
/// flag.
pub fn quintic_ratio_series(traj: &Trajectory, n: &NonlinearitySpec, s: f64, gate: f64) -> Result<Vec<QuinticPoint>> {
    if traj.samples.len() < 7 {
        return Err(Error::InvalidArgument("quintic ratio needs at least 7 samples".into()));
    }
    let mut es = Vec::with_capacity(traj.samples.len());
    let mut e14 = Vec::with_capacity(traj.samples.len());
    let mut ok = Vec::with_capacity(traj.samples.len());
    for smp in &traj.samples {
        let parts = modified_energies(&smp.state, n, &[s, 0.25])?;
        es.push((smp.time, parts[0].e_total));
        e14.push(parts[1].e_total);
        ok.push(smp.state.pair_norm(0.0)?.combined() <= gate);
    }
    (2..es.len() - 2)
        .map(|k| {
            let d = derivative_fd(&es, k)?;
            Ok(QuinticPoint { t: es[k].0, ratio: d.abs() / (es[k].1 * e14[k] * e14[k]), gate_ok: ok[k] })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityRow {
    pub s: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub rows: Vec<ComparabilityRow>,
    pub excluded: usize,
}

/// `e_total / (pos² + vel²)` over the states below `gate`, per `s`.
pub fn comparability_sweep(states: &[SpectralState], n: &NonlinearitySpec, s_list: &[f64], gate: f64) -> Result<ComparabilityReport> {
    let mut rows: Vec<ComparabilityRow> =
        s_list.iter().map(|&s| ComparabilityRow { s, min_ratio: f64::INFINITY, max_ratio: f64::NEG_INFINITY, count: 0 }).collect();
    let mut excluded = 0;
    for st in states {
        if st.pair_norm(0.0)?.combined() > gate {
            excluded += 1;
            continue;
        }
        for (row, e) in rows.iter_mut().zip(modified_energies(st, n, s_list)?) {
            let ratio = e.e_total / st.pair_norm(e.s)?.squared();
            row.min_ratio = row.min_ratio.min(ratio);
            row.max_ratio = row.max_ratio.max(ratio);
            row.count += 1;
        }
    }
    Ok(ComparabilityReport { rows, excluded })
}

/// The ratio for one data shape at a sequence of `Ḣ¹ × L²` sizes.
pub fn comparability_trend(shape: &SpectralState, n: &NonlinearitySpec, s: f64, sizes: &[f64]) -> Result<Vec<(f64, f64)>> {
    sizes
        .iter()
        .map(|&size| {
            let st = shape.rescale_to(size, 0.0)?;
            Ok((size, modified_energy(&st, n, s)?.e_total / st.pair_norm(s)?.squared()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub max_residual: f64,
    /// Largest magnitude of the directly evaluated side.
    pub scale: f64,
}

impl IdentityCheck {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.max_residual
        } else {
            self.max_residual / self.scale
        }
    }
}

/// Compares the centered difference of `Σ A E^s_{ξ1ξ2}` along a model
/// trajectory with the two integrals it should equal.
pub fn energy_identity_check(traj: &Trajectory, a: f64, s: f64) -> Result<IdentityCheck> {
    let series: Vec<(f64, f64)> = traj.samples.iter().map(|p| (p.time, energy::model_correction(&p.state, a, s))).collect();
    if series.len() < 3 {
        return Err(Error::StencilRange { index: 1, len: series.len() });
    }
    let mut out = IdentityCheck { max_residual: 0.0, scale: 0.0 };
    for k in 1..series.len() - 1 {
        let fd = derivative_fd2(&series, k)?;
        let exact = energy::model_correction_rate_identity(&traj.samples[k].state, a, s);
        out.max_residual = out.max_residual.max((fd - exact).abs());
        out.scale = out.scale.max(exact.abs());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelWitness {
    pub lambda1: f64,
    pub lambda2: f64,
    pub s: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSuiteReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `|kernel| / bound` seen.
    pub worst: KernelWitness,
    /// Largest `(|kernel| / bound) / (|s|/(1+|s|))` over samples with
    /// `|s| ≥ 1`, where the diagonal is the extremal case.
    pub extremal: f64,
    pub pass: bool,
}

/// Both branches of the divided-difference kernel bound on random samples:
/// half log-uniform on `[1e-6, 1e6]`, half within a relative gap of `10^{−12..−1}`.
pub fn kernel_bound_suite(n_samples: usize, seed: u64) -> Result<KernelSuiteReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("kernel suite needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = KernelWitness { lambda1: 1.0, lambda2: 1.0, s: 0.0, ratio: 0.0 };
    let mut extremal: f64 = 0.0;
    for i in 0..n_samples {
        let a = 10f64.powf(rng.random_range(-6.0..6.0));
        let b = if i % 2 == 0 {
            10f64.powf(rng.random_range(-6.0..6.0))
        } else {
            a * (1.0 + 10f64.powf(rng.random_range(-12.0..-1.0)))
        };
        let (l1, l2) = if a <= b { (a, b) } else { (b, a) };
        let s = if (i / 2) % 2 == 0 { rng.random_range(0.0..4.0) } else { rng.random_range(-2.0..0.0) };
        let kern = divided_difference(l1 * l1, l2 * l2, s, KERNEL_TOL).abs();
        let bound = if s >= 0.0 {
            (1.0 + s) * l2.powf(2.0 * s) / (l2 * l2)
        } else {
            (1.0 + s.abs()) * l1.powf(2.0 * s) / (l2 * l2)
        };
        let ratio = kern / bound;
        if !ratio.is_finite() {
            return Err(Error::NonFinite("kernel_bound_suite"));
        }
        if ratio > 1.0 + 1e-12 {
            violations += 1;
        }
        if ratio > worst.ratio {
            worst = KernelWitness { lambda1: l1, lambda2: l2, s, ratio };
        }
        if s.abs() >= 1.0 {
            extremal = extremal.max(ratio * (1.0 + s.abs()) / s.abs());
        }
    }
    let pass = violations == 0 && (extremal - 1.0).abs() <= 0.01;
    Ok(KernelSuiteReport { samples: n_samples, violations, worst, extremal, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FBoundsReport {
    pub pass: bool,
    pub skipped: usize,
    /// Smallest and largest `F` seen, with the bracket they must lie in.
    pub f_min: f64,
    pub f_max: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Largest `|ΔF/Δt|` over its bound plus the difference-quotient error
    /// estimate; at most 1 on a pass.
    pub worst_rate_ratio: f64,
}

/// Pointwise range of `F` and the bound on its time derivative,
/// `|∂_t F(r)| ≤ 3 max|N′| 2^{5/2} |Σ_{λ≤r} w λ² Re(û ū′)|`, along a uniformly
/// sampled trajectory. Samples above the gate are skipped.
pub fn f_bounds_suite(traj: &Trajectory, n: &NonlinearitySpec, gate: f64) -> Result<FBoundsReport> {
    let samples = &traj.samples;
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let h = check_uniform(&times)?;
    let mut profiles = Vec::with_capacity(samples.len());
    let mut gated = Vec::with_capacity(samples.len());
    let mut c_max: f64 = 0.0;
    for smp in samples {
        let p = build_profile(&smp.state, n)?;
        c_max = c_max.max(p.c_prefix.last().copied().unwrap_or(0.0));
        gated.push(smp.state.pair_norm(0.0)?.combined() <= gate && p.min_wave_speed_sq >= 0.5);
        profiles.push(p);
    }
    let (max_d1, _) = n.derivative_bounds(c_max);
    let n_max = (0..=256).map(|k| n.eval(c_max * k as f64 / 256.0)).fold(0.0, f64::max);
    let lower_bound = (1.0 + n_max).powf(-1.5);
    let upper_bound = 0.5f64.powf(-1.5);
    let mut report = FBoundsReport {
        pass: true,
        skipped: gated.iter().filter(|g| !**g).count(),
        f_min: f64::INFINITY,
        f_max: f64::NEG_INFINITY,
        lower_bound,
        upper_bound,
        worst_rate_ratio: 0.0,
    };
    let tiny = 1e-14;
    for (p, &ok) in profiles.iter().zip(&gated) {
        if !ok {
            continue;
        }
        for &f in &p.f_values {
            report.f_min = report.f_min.min(f);
            report.f_max = report.f_max.max(f);
            if f < lower_bound * (1.0 - tiny) || f > upper_bound * (1.0 + tiny) {
                report.pass = false;
            }
        }
    }
    let rate_const = 3.0 * max_d1 * 2f64.powf(2.5);
    for i in 2..samples.len().saturating_sub(2) {
        if !(gated[i - 2..=i + 2].iter().all(|g| *g)) {
            continue;
        }
        let st = &samples[i].state;
        let g = st.grid();
        let mut flux = 0.0;
        for k in 0..g.len() {
            let l = g.lambdas()[k];
            flux += g.weights()[k] * l * l * (st.u()[k] * st.v()[k].conj()).re;
            let fd_h = (profiles[i + 1].f_values[k] - profiles[i - 1].f_values[k]) / (2.0 * h);
            let fd_2h = (profiles[i + 2].f_values[k] - profiles[i - 2].f_values[k]) / (4.0 * h);
            // the h and 2h quotients differ by about 3× the error of the former
            let fd_err = (fd_h - fd_2h).abs();
            let allowed = rate_const * flux.abs() + fd_err + tiny;
            let ratio = fd_h.abs() / allowed;
            report.worst_rate_ratio = report.worst_rate_ratio.max(ratio);
            if ratio > 1.0 {
                report.pass = false;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionCertificate {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub feasible: bool,
    /// `|x^{1+σ} y|`, the forcing left after elimination.
    pub residual: f64,
    pub derived_identity: String,
    /// Minimal residual of the full 8-equation system by least squares.
    pub lsq_residual: f64,
    /// Length of the right-hand side projected on the two eliminating
    /// combinations of equations.
    pub projection_residual: f64,
    pub system_norm: f64,
}

/// Unknown order: `a, b, c12, c21, d12, d21, e, f`.
fn obstruction_system(x: f64, y: f64, sigma: f64) -> (DMatrix<f64>, DVector<f64>) {
    #[rustfmt::skip]
    let rows: [[f64; 8]; 8] = [
        [2.0, -2.0 * y, -y, 0.0, -x, 0.0, 0.0, 0.0],
        [2.0, 0.0, 0.0, -y, -x, 0.0, -2.0 * y, 0.0],
        [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 2.0, -2.0 * y],
        [0.0, 2.0, 0.0, 1.0, 1.0, 0.0, 0.0, -2.0 * y],
        [2.0, -2.0 * x, 0.0, -x, 0.0, -y, 0.0, 0.0],
        [2.0, 0.0, -x, 0.0, 0.0, -y, -2.0 * x, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 2.0, -2.0 * x],
        [0.0, 2.0, 1.0, 0.0, 0.0, 1.0, 0.0, -2.0 * x],
    ];
    let m = DMatrix::from_fn(8, 8, |i, j| rows[i][j]);
    let mut rhs = DVector::zeros(8);
    rhs[0] = x.powf(1.0 + sigma) * y;
    rhs[4] = y.powf(1.0 + sigma) * x;
    (m, rhs)
}

/// Decides whether a quadratic correction can cancel the mixed term at the
/// frequency pair `(ξ1², ξ2²) = (x, y)`. The swapped pair shares the
/// symmetric unknowns, so both orderings enter one 8-equation system.
/// Subtracting the second equation from the first and adding `y` times the
/// difference of the last two swapped equations cancels every unknown and
/// leaves `0 = x^{1+σ} y`; the mirrored combination leaves `0 = y^{1+σ} x`.
pub fn obstruction_certificate(x: f64, y: f64, sigma: f64) -> Result<ObstructionCertificate> {
    if !(x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite()) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("need finite x, y ≥ 0, got ({x}, {y})")));
    }
    let (m, rhs) = obstruction_system(x, y, sigma);
    if !(rhs[0].is_finite() && rhs[4].is_finite()) {
        return Err(Error::NonFinite("obstruction forcing"));
    }
    let mut l1 = DVector::zeros(8);
    l1[0] = 1.0;
    l1[1] = -1.0;
    l1[6] = -y;
    l1[7] = y;
    let mut l2 = DVector::zeros(8);
    l2[4] = 1.0;
    l2[5] = -1.0;
    l2[2] = -x;
    l2[3] = x;
    let basis = DMatrix::from_columns(&[l1, l2]);
    debug_assert!((basis.transpose() * &m).norm() <= 1e-12 * (1.0 + m.norm()));
    let gram = basis.transpose() * &basis;
    let proj = basis.transpose() * &rhs;
    let coeffs = gram.clone().lu().solve(&proj).ok_or(Error::NonFinite("obstruction projection"))?;
    let projection_residual = proj.dot(&coeffs).max(0.0).sqrt();

    let svd = m.clone().svd(true, true);
    let scale = svd.singular_values.max();
    let z = svd
        .solve(&rhs, 1e-12 * scale.max(1.0))
        .map_err(|_| Error::NonFinite("obstruction least squares"))?;
    let lsq_residual = (&m * z - &rhs).norm();

    let residual = (x.powf(1.0 + sigma) * y).abs();
    let feasible = residual == 0.0;
    let derived_identity = if feasible {
        "forcing vanishes: ξ1^{2+2σ} ξ2² = 0".to_string()
    } else {
        "0 = ξ1^{2+2σ} ξ2²".to_string()
    };
    Ok(ObstructionCertificate {
        x,
        y,
        sigma,
        feasible,
        residual,
        derived_identity,
        lsq_residual,
        projection_residual,
        system_norm: m.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRow {
    pub t: f64,
    pub sep: f64,
    pub mixed: f64,
    pub mean_sep: f64,
    pub mean_mixed: f64,
    pub linear_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub rows: Vec<ResonanceRow>,
    /// Relative mismatch between the difference quotient of the linearized
    /// energy and `sep + mixed` on a short resolved run from `t = 0`.
    pub identity_relative: f64,
}

impl ResonanceReport {
    /// `|mean mixed| / |mean sep|` at the final time.
    pub fn final_mean_ratio(&self) -> f64 {
        let last = self.rows.last().expect("report has rows");
        last.mean_mixed.abs() / last.mean_sep.abs()
    }
}

/// The separated and mixed parts of the linearized energy derivative along a
/// co-evolved pair, with running time averages.
pub fn resonance_report(
    u0: &SpectralState,
    w0: &LinearizedState,
    n: &NonlinearitySpec,
    sigma: f64,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<ResonanceReport> {
    let a = n.model_constant().ok_or(Error::NotModelCase)?;
    let traj = evolve_pair(u0, w0, n, t_final, dt, stride)?;
    let mut rows: Vec<ResonanceRow> = Vec::with_capacity(traj.samples.len());
    let (mut int_sep, mut int_mixed) = (0.0, 0.0);
    for smp in &traj.samples {
        let lin = smp.linearized.as_ref().expect("pair trajectory carries companions");
        let (sep, mixed) = dynamics::sep_mixed(&smp.state, lin, a, sigma)?;
        let energy = dynamics::linearized_energy(&smp.state, lin, a, sigma)?;
        let t = smp.time - u0.time();
        if let Some(prev) = rows.last() {
            let dt_s = t - (prev.t - u0.time());
            int_sep += 0.5 * dt_s * (prev.sep + sep);
            int_mixed += 0.5 * dt_s * (prev.mixed + mixed);
        }
        let (mean_sep, mean_mixed) = if t > 0.0 { (int_sep / t, int_mixed / t) } else { (sep, mixed) };
        rows.push(ResonanceRow { t: smp.time, sep, mixed, mean_sep, mean_mixed, linear_energy: energy });
    }
    let identity_relative = linearized_energy_identity(u0, w0, n, sigma, dt)?;
    Ok(ResonanceReport { rows, identity_relative })
}

/// Mismatch between the five-point derivative of the linearized energy at
/// `t = 2h` and `sep + mixed` there, with `h = min(dt, 1e-3)` and eight
/// substeps per `h`.
pub fn linearized_energy_identity(u0: &SpectralState, w0: &LinearizedState, n: &NonlinearitySpec, sigma: f64, dt: f64) -> Result<f64> {
    let a = n.model_constant().ok_or(Error::NotModelCase)?;
    let h = dt.min(1e-3);
    let traj = evolve_pair(u0, w0, n, 4.0 * h, h / 8.0, 8)?;
    let e: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .map(|s| Ok((s.time, dynamics::linearized_energy(&s.state, s.linearized.as_ref().unwrap(), a, sigma)?)))
        .collect::<Result<_>>()?;
    let fd = derivative_fd(&e, 2)?;
    let mid = &traj.samples[2];
    let (sep, mixed) = dynamics::sep_mixed(&mid.state, mid.linearized.as_ref().unwrap(), a, sigma)?;
    let exact = sep + mixed;
    Ok(if exact == 0.0 { fd.abs() } else { ((fd - exact) / exact).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationPoint {
    pub epsilon: f64,
    /// Sup over modes of `|(Φ_T(u₀ + εw₀) − Φ_T(u₀))/ε − w(T)|`, both
    /// components.
    pub error: f64,
}

/// Compares the flow-map difference quotient in the direction `w0` with the
/// co-evolved linearization at `T`.
pub fn linearization_fd_check(
    u0: &SpectralState,
    w0: &LinearizedState,
    n: &NonlinearitySpec,
    t_final: f64,
    dt: f64,
    epsilons: &[f64],
) -> Result<Vec<LinearizationPoint>> {
    let pair = evolve_pair(u0, w0, n, t_final, dt, usize::MAX)?;
    let lin = pair.samples.last().and_then(|s| s.linearized.clone()).expect("pair trajectory carries companions");
    let base = evolve(u0, n, t_final, dt, Integrator::Rotation, usize::MAX)?;
    let base = base.last();
    epsilons
        .iter()
        .map(|&eps| {
            let u = u0.u().iter().zip(&w0.w).map(|(a, b)| a + b * eps).collect();
            let v = u0.v().iter().zip(&w0.w_vel).map(|(a, b)| a + b * eps).collect();
            let pert = evolve(&u0.with_amplitudes(u, v, u0.time())?, n, t_final, dt, Integrator::Rotation, usize::MAX)?;
            let pert = pert.last();
            let mut error: f64 = 0.0;
            for k in 0..u0.len() {
                error = error
                    .max(((pert.u()[k] - base.u()[k]) / eps - lin.w[k]).norm())
                    .max(((pert.v()[k] - base.v()[k]) / eps - lin.w_vel[k]).norm());
            }
            Ok(LinearizationPoint { epsilon: eps, error })
        })
        .collect()
}

/// Largest mismatch, over the samples of a model trajectory, between the
/// linearized acceleration evaluated at `w = u′` and the time derivative of
/// the acceleration itself.
pub fn velocity_linearization_residual(traj: &Trajectory, n: &NonlinearitySpec) -> Result<f64> {
    let a = n.model_constant().ok_or(Error::NotModelCase)?;
    let mut worst: f64 = 0.0;
    for smp in &traj.samples {
        let s = &smp.state;
        let (_, accel) = dynamics::rhs(s, n);
        let lin = LinearizedState { w: s.v().to_vec(), w_vel: accel };
        let (_, via_lin) = dynamics::linearized_rhs(s, &lin, a)?;
        let direct = dynamics::acceleration_rate(s, n);
        worst = via_lin.iter().zip(&direct).map(|(p, q)| (p - q).norm()).fold(worst, f64::max);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub cutoff: f64,
    pub modes: usize,
    /// `sup_t ‖(u_K − u_{K′}, u′_K − u′_{K′})‖_{Ḣ¹×L²}` against the next cutoff.
    pub sup_difference: f64,
    /// `sup_t` of the modified energy at the low regularity.
    pub sup_energy_low: f64,
}

/// Zero-extends `st` onto `grid`, whose leading modes must coincide with it.
fn extend_to(st: &SpectralState, grid: &Arc<FrequencyGrid>) -> Result<SpectralState> {
    let m = grid.len();
    let mut u = vec![Complex64::new(0.0, 0.0); m];
    let mut v = vec![Complex64::new(0.0, 0.0); m];
    if st.len() > m || st.grid().lambdas() != &grid.lambdas()[..st.len()] {
        return Err(Error::GridMismatch { expected: m, found: st.len() });
    }
    u[..st.len()].copy_from_slice(st.u());
    v[..st.len()].copy_from_slice(st.v());
    SpectralState::new(Arc::clone(grid), u, v, st.time())
}

/// Evolves each frequency truncation of `rough` and measures how far
/// consecutive truncations drift apart over `[0, T]`.
pub fn truncation_convergence(
    rough: &SpectralState,
    cutoffs: &[f64],
    n: &NonlinearitySpec,
    t_final: f64,
    dt: f64,
    stride: usize,
    s_low: f64,
) -> Result<Vec<TruncationRow>> {
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("cutoffs must be increasing".into()));
    }
    let runs: Vec<Trajectory> = cutoffs
        .iter()
        .map(|&k| evolve(&rough.truncate(k), n, t_final, dt, Integrator::Rotation, stride))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(cutoffs.len());
    for (i, run) in runs.iter().enumerate() {
        let mut sup_e: f64 = 0.0;
        for smp in &run.samples {
            if !smp.state.is_empty() {
                sup_e = sup_e.max(modified_energy(&smp.state, n, s_low)?.e_total);
            }
        }
        let mut sup_diff: f64 = 0.0;
        if let Some(next) = runs.get(i + 1) {
            let grid = Arc::clone(next.samples[0].state.grid_arc());
            for (a, b) in run.samples.iter().zip(&next.samples) {
                let ext = extend_to(&a.state, &grid)?;
                let diff = b.state.with_amplitudes(
                    b.state.u().iter().zip(ext.u()).map(|(p, q)| p - q).collect(),
                    b.state.v().iter().zip(ext.v()).map(|(p, q)| p - q).collect(),
                    b.time,
                )?;
                sup_diff = sup_diff.max(diff.pair_norm(0.0)?.combined());
            }
        }
        rows.push(TruncationRow {
            cutoff: cutoffs[i],
            modes: run.samples[0].state.len(),
            sup_difference: sup_diff,
            sup_energy_low: sup_e,
        });
    }
    Ok(rows)
}
