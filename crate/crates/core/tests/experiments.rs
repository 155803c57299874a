use kirchhoff_core::analysis::{
    linearized_energy_identity, quintic_ratio_series, scaling_slope_experiment, FitOutcome, ScalingOptions,
};
use kirchhoff_core::dynamics::{evolve, Integrator, LinearizedState};
use kirchhoff_core::energy::model_gate;
use kirchhoff_core::nonlinearity::NonlinearitySpec;
use kirchhoff_core::spectral::{build_random_decay, build_two_mode, RandomDecay, SpectralState};
use num_complex::Complex64;

fn shape(seed: u64) -> SpectralState {
    build_random_decay(&RandomDecay { modes: 32, lambda_min: 1.0, lambda_max: 4.0, regularity: 0.25, margin: 0.5, seed }).unwrap()
}

fn epsilons() -> Vec<f64> {
    (0..7).map(|k| 3e-3 * 10f64.powf(k as f64 / 3.0)).collect()
}

fn slopes(opts: ScalingOptions) -> (f64, f64) {
    let out = scaling_slope_experiment(&shape(7), &NonlinearitySpec::model(1.0), 0.25, &epsilons(), &opts).unwrap();
    (out.unmodified.slope().unwrap(), out.modified.slope().unwrap())
}

#[test]
fn scaling_slopes_are_discretization_independent() {
    let base = ScalingOptions { integrator: Integrator::Rk4, dt: 1e-3, fd_step: 5e-2, size_regularity: 0.25 };
    let (u0, m0) = slopes(base);
    assert!((u0 - 2.0).abs() < 0.05 && m0 > 3.9, "{u0} {m0}");
    for opts in [
        ScalingOptions { dt: 5e-4, ..base },
        ScalingOptions { integrator: Integrator::Rotation, dt: 1e-4, ..base },
    ] {
        let (u, m) = slopes(opts);
        assert!(((u - u0) / u0).abs() < 0.05);
        assert!(((m - m0) / m0).abs() < 0.05, "{opts:?}: {m} vs {m0}");
    }
}

#[test]
fn trajectory_and_tangent_rates_agree() {
    let opts = ScalingOptions { integrator: Integrator::Rk4, dt: 1e-3, fd_step: 5e-2, size_regularity: 0.25 };
    let out = scaling_slope_experiment(&shape(3), &NonlinearitySpec::model(-1.0), 0.5, &[3e-2, 1e-1, 3e-1], &opts).unwrap();
    let FitOutcome::Fitted(fit) = &out.modified else { panic!("modified fit degenerate") };
    for (fd, tan) in fit.values.iter().zip(&out.modified_tangent) {
        assert!(((fd - tan) / tan).abs() < 1e-3, "{fd} vs {tan}");
    }
}

#[test]
fn quintic_ratio_stable_under_refinement() {
    let n = NonlinearitySpec::model(1.0);
    let gate = model_gate(1.0, 0.25);
    let st = shape(11).rescale_to(gate / 10.0, 0.0).unwrap();
    let max_ratio = |integrator, dt: f64| {
        let stride = (0.05 / dt).round() as usize;
        let traj = evolve(&st, &n, 2.0, dt, integrator, stride).unwrap();
        let series = quintic_ratio_series(&traj, &n, 0.25, gate).unwrap();
        assert!(series.iter().all(|p| p.gate_ok));
        series.iter().map(|p| p.ratio).fold(0.0, f64::max)
    };
    let r0 = max_ratio(Integrator::Rk4, 1e-3);
    assert!(r0.is_finite() && r0 > 0.0);
    for (integrator, dt) in [(Integrator::Rk4, 5e-4), (Integrator::Rotation, 1e-4), (Integrator::Rotation, 5e-5)] {
        let r = max_ratio(integrator, dt);
        assert!(((r - r0) / r0).abs() < 0.05, "{integrator:?} {dt}: {r} vs {r0}");
    }
}

#[test]
fn quintic_ratio_vanishes_for_free_flow() {
    let n = NonlinearitySpec::zero();
    let traj = evolve(&shape(2).rescale_to(0.1, 0.0).unwrap(), &n, 0.5, 0.01, Integrator::Rotation, 5).unwrap();
    for p in quintic_ratio_series(&traj, &n, 0.25, f64::INFINITY).unwrap() {
        assert!(p.ratio < 1e-10, "{p:?}");
    }
}

#[test]
fn linearized_energy_identity_two_mode() {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let u = build_two_mode([1.0, 1.7], [c(0.03, -0.01), c(0.02, 0.04)], [c(-0.01, 0.02), c(0.05, 0.0)]).unwrap();
    let w = build_two_mode([1.0, 1.7], [c(0.5, 0.2), c(-0.3, 0.1)], [c(0.1, -0.4), c(0.2, 0.2)]).unwrap();
    let lin = LinearizedState { w: w.u().to_vec(), w_vel: w.v().to_vec() };
    let rel = linearized_energy_identity(&u, &lin, &NonlinearitySpec::model(1.0), 0.3, 0.01).unwrap();
    assert!(rel < 1e-6, "{rel}");
}
