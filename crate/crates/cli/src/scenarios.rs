//! One function per scenario. Each builds its inputs from the config,
//! writes its tables, and returns named checks plus worst-case witnesses.

use std::f64::consts::TAU;
use std::path::Path;

use kirchhoff_core::analysis::{
    comparability_sweep, comparability_trend, f_bounds_suite, kernel_bound_suite, linearization_fd_check,
    obstruction_certificate, energy_identity_check, quintic_ratio_series, resonance_report, scaling_slope_experiment,
    truncation_convergence, velocity_linearization_residual, FitOutcome, ScalingExperiment, ScalingOptions,
};
use kirchhoff_core::dynamics::{self, evolve, evolve_pair, Integrator, LinearizedState, Trajectory};
use kirchhoff_core::energy::{self, brute};
use kirchhoff_core::nonlinearity::NonlinearitySpec;
use kirchhoff_core::spectral::{build_random_decay, build_two_mode, RandomDecay, SpectralState};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{DataKind, RunConfig, Scenario};
use crate::output::{json_float, Plot, Sink, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] kirchhoff_core::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("initial data Ḣ¹×L² size {size} exceeds the smallness gate {gate}; set allow_gate_violation to proceed")]
    Gate { size: f64, gate: f64 },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Value,
}

impl Check {
    fn new(name: &str, pass: bool, detail: Value) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub suite: String,
    pub params: Value,
    pub pass: bool,
    pub worst_case: Value,
    pub artifacts: Vec<String>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub verdict: Verdict,
    pub exit_code: i32,
}

type Res<T> = Result<T, RunError>;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    n: NonlinearitySpec,
    sink: Sink,
    warnings: Vec<String>,
}

/// Runs the configured scenario into `cfg.output.dir`. `threads = 0` uses
/// the ambient pool.
pub fn run(cfg: &RunConfig, threads: usize) -> Res<Outcome> {
    if threads == 0 {
        return run_inner(cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> Res<Outcome> {
    let n = NonlinearitySpec::from_kind(cfg.nonlinearity.clone())?;
    let sink = Sink::new(Path::new(&cfg.output.dir), cfg.output.format, cfg.output.plots)?;
    let mut ctx = Ctx { cfg, n, sink, warnings: Vec::new() };
    let (checks, worst) = match cfg.scenario {
        Scenario::Simulate => simulate(&mut ctx)?,
        Scenario::Energies => energies(&mut ctx)?,
        Scenario::Verify => verify(&mut ctx)?,
        Scenario::Sweep => sweep(&mut ctx)?,
        Scenario::Linearized => linearized(&mut ctx)?,
        Scenario::Resonance => resonance(&mut ctx)?,
        Scenario::Obstruction => obstruction(&mut ctx)?,
        Scenario::Truncation => truncation(&mut ctx)?,
    };
    let pass = checks.iter().all(|c| c.pass);
    let mut verdict = Verdict {
        suite: cfg.scenario.name().to_string(),
        params: cfg.params_json(),
        pass,
        worst_case: worst,
        artifacts: Vec::new(),
        checks,
        warnings: ctx.warnings,
    };
    verdict.artifacts = ctx.sink.artifacts();
    verdict.artifacts.push("verdict.json".into());
    ctx.sink.json("verdict.json", &verdict)?;
    Ok(Outcome { exit_code: if pass { 0 } else { 2 }, verdict })
}

fn random_shape(cfg: &RunConfig, seed: u64, modes: usize, lmin: f64, lmax: f64) -> Res<SpectralState> {
    Ok(build_random_decay(&RandomDecay {
        modes,
        lambda_min: lmin,
        lambda_max: lmax,
        regularity: cfg.data.regularity,
        margin: cfg.data.margin,
        seed,
    })?)
}

fn grid_shape(cfg: &RunConfig, seed: u64) -> Res<SpectralState> {
    random_shape(cfg, seed, cfg.grid.modes, cfg.grid.lambda_min, cfg.grid.lambda_max)
}

fn pairs(raw: [[f64; 2]; 2]) -> [Complex64; 2] {
    [Complex64::new(raw[0][0], raw[0][1]), Complex64::new(raw[1][0], raw[1][1])]
}

struct Data {
    state: SpectralState,
    companion: LinearizedState,
    gate: f64,
}

impl Ctx<'_> {
    fn gate_for(&self, shape: &SpectralState) -> Res<f64> {
        Ok(energy::smallness_gate(shape, &self.n, &self.cfg.analysis.s_list)?)
    }

    fn check_gate(&mut self, st: &SpectralState, gate: f64) -> Res<()> {
        let size = st.pair_norm(0.0)?.combined();
        if size > gate {
            if !self.cfg.allow_gate_violation {
                return Err(RunError::Gate { size, gate });
            }
            self.warnings.push(format!("initial data size {size} exceeds the smallness gate {gate}"));
        }
        Ok(())
    }

    /// Initial data and a companion direction, gate checked.
    fn data(&mut self) -> Res<Data> {
        let cfg = self.cfg;
        let (state, companion, gate) = match cfg.data.kind {
            DataKind::RandomDecay => {
                let shape = grid_shape(cfg, cfg.seed)?;
                let gate = self.gate_for(&shape)?;
                let size = cfg.data.size.unwrap_or(gate * cfg.data.gate_fraction);
                let state = shape.rescale_to(size, 0.0)?;
                let w = grid_shape(cfg, cfg.seed.wrapping_add(cfg.linearized.companion_seed_offset))?
                    .rescale_to(cfg.linearized.companion_size, 0.0)?;
                (state, LinearizedState { w: w.u().to_vec(), w_vel: w.v().to_vec() }, gate)
            }
            DataKind::TwoMode => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let amp = cfg.data.amplitude;
                let mut draw = || [(); 2].map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp);
                let (cp, cm) = (draw(), draw());
                let (dp, dm) = (draw(), draw());
                let (cp, cm) = match (cfg.data.c_plus, cfg.data.c_minus) {
                    (Some(p), Some(m)) => (pairs(p), pairs(m)),
                    _ => (cp, cm),
                };
                let mut state = build_two_mode(cfg.data.lambdas, cp, cm)?;
                if let Some(size) = cfg.data.size {
                    state = state.rescale_to(size, 0.0)?;
                }
                let w = build_two_mode(cfg.data.lambdas, dp, dm)?;
                let gate = self.gate_for(&state)?;
                (state, LinearizedState { w: w.u().to_vec(), w_vel: w.v().to_vec() }, gate)
            }
        };
        self.check_gate(&state, gate)?;
        Ok(Data { state, companion, gate })
    }

    fn evolve(&self, st: &SpectralState) -> Res<Trajectory> {
        let it = &self.cfg.integrator;
        Ok(evolve(st, &self.n, it.t_final, it.dt, it.kind, it.stride)?)
    }

    fn model_constant(&self) -> Res<f64> {
        Ok(self.n.model_constant().ok_or(kirchhoff_core::Error::NotModelCase)?)
    }
}

fn s_label(s: f64) -> String {
    format!("e_total_s{s}")
}

/// The samples of `traj` on its uniform stride, dropping a short last step.
fn uniform_prefix(traj: &Trajectory) -> Trajectory {
    let mut out = traj.clone();
    if out.samples.len() >= 3 {
        let h = out.samples[1].time - out.samples[0].time;
        let k = out.samples.len();
        let last = out.samples[k - 1].time - out.samples[k - 2].time;
        if (last - h).abs() > 1e-9 * h {
            out.samples.pop();
        }
    }
    out
}

fn max_relative_drift(traj: &Trajectory, n: &NonlinearitySpec) -> f64 {
    let h0 = dynamics::hamiltonian(&traj.samples[0].state, n);
    traj.samples
        .iter()
        .map(|s| {
            let h = dynamics::hamiltonian(&s.state, n);
            if h0 == 0.0 { h.abs() } else { ((h - h0) / h0).abs() }
        })
        .fold(0.0, f64::max)
}

/// `max|N′|`, `max|N″|` over the observed range `[0, c_max]` of the Ḣ¹ mass.
fn derivative_bounds(n: &NonlinearitySpec, c_max: f64) -> Value {
    let (d1, d2) = n.derivative_bounds(c_max);
    json!({ "c_max": c_max, "max_abs_d1": d1, "max_abs_d2": d2 })
}

fn simulate(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    let data = ctx.data()?;
    let traj = ctx.evolve(&data.state)?;
    let s_list = ctx.cfg.analysis.s_list.clone();
    let mut cols: Vec<String> = ["t", "hamiltonian", "norm_h1", "norm_l2"].iter().map(|s| s.to_string()).collect();
    cols.extend(s_list.iter().map(|&s| s_label(s)));
    let mut table = Table::with_columns("trajectory", cols);
    for smp in &traj.samples {
        let norms = smp.state.pair_norm(0.0)?;
        let mut row = vec![smp.time, dynamics::hamiltonian(&smp.state, &ctx.n), norms.pos, norms.vel];
        for e in energy::modified_energies(&smp.state, &ctx.n, &s_list)? {
            row.push(e.e_total);
        }
        table.push(row);
    }
    ctx.sink.table(&table)?;
    ctx.sink.json("final_state.json", traj.last())?;
    if ctx.sink.plots() {
        let t = table.column("t").unwrap();
        let mut plot = Plot::new("modified energies", "t", "e_total");
        for &s in &s_list {
            let e = table.column(&s_label(s)).unwrap();
            plot = plot.series(&format!("s = {s}"), t.iter().cloned().zip(e).collect());
        }
        ctx.sink.plot("trajectory", &plot)?;
    }
    let drift = max_relative_drift(&traj, &ctx.n);
    let mut c_max: f64 = 0.0;
    for smp in &traj.samples {
        c_max = c_max.max(smp.state.pair_norm(0.0)?.pos.powi(2));
    }
    Ok((
        Vec::new(),
        json!({
            "max_relative_hamiltonian_drift": drift,
            "gate": json_float(data.gate),
            "samples": traj.samples.len(),
            "nonlinearity_bounds": derivative_bounds(&ctx.n, c_max),
        }),
    ))
}

fn energies(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    let data = ctx.data()?;
    let st = &data.state;
    let mut table = Table::new(
        "energies",
        &["s", "e_unmodified", "e_second_order", "e_normal_form", "e_asym", "e_total", "norm_sq", "ratio"],
    );
    let mut worst: f64 = 0.0;
    for e in energy::modified_energies(st, &ctx.n, &ctx.cfg.analysis.s_list)? {
        let norm_sq = st.pair_norm(e.s)?.squared();
        let ratio = e.e_total / norm_sq;
        worst = worst.max((ratio - 0.5).abs());
        table.push(vec![e.s, e.e_unmodified, e.e_second_order, e.e_normal_form, e.e_asym, e.e_total, norm_sq, ratio]);
    }
    ctx.sink.table(&table)?;
    Ok((
        Vec::new(),
        json!({
            "max_ratio_deviation_from_half": worst,
            "gate": json_float(data.gate),
            "size": st.pair_norm(0.0)?.combined(),
            "nonlinearity_bounds": derivative_bounds(&ctx.n, st.pair_norm(0.0)?.pos.powi(2)),
        }),
    ))
}

fn rel_diff(fast: f64, slow: f64, floor: f64) -> f64 {
    (fast - slow).abs() / slow.abs().max(fast.abs()).max(floor)
}

fn oracle_check(ctx: &mut Ctx) -> Res<Check> {
    let cfg = ctx.cfg;
    let shape = random_shape(cfg, cfg.seed, cfg.analysis.oracle_modes, cfg.grid.lambda_min, cfg.grid.lambda_max)?;
    let gate = ctx.gate_for(&shape)?;
    let st = shape.rescale_to((gate * cfg.data.gate_fraction).min(1.0), 0.0)?;
    let prof = brute::point_profile(&st, &ctx.n)?;
    let mut table = Table::new("oracle", &["s", "second_order", "separable", "normal_form", "asym"]);
    let mut worst: f64 = 0.0;
    for &s in &cfg.analysis.s_list {
        let floor = 1e-14 * energy::unmodified_energy(&st, &ctx.n, s)?;
        let so = rel_diff(energy::second_order_term(&st, &ctx.n, s)?, brute::second_order(&st, &prof, s)?, floor);
        let sep = rel_diff(energy::second_order_separable_term(&st, &ctx.n, s)?, brute::second_order_a_part(&st, &prof, s)?, floor);
        let nf = rel_diff(energy::normal_form_term(&st, &ctx.n, s)?, brute::normal_form(&st, &prof, s), floor);
        let asym_slow = if ctx.n.model_constant().is_some() { 0.0 } else { brute::asym(&st, &prof, s) };
        let asym = rel_diff(energy::asym_term(&st, &ctx.n, s)?, asym_slow, floor);
        worst = worst.max(so).max(sep).max(nf).max(asym);
        table.push(vec![s, so, sep, nf, asym]);
    }
    ctx.sink.table(&table)?;
    Ok(Check::new("oracle", worst <= 1e-11, json!({ "modes": st.len(), "max_relative_difference": worst })))
}

fn identity_check(ctx: &mut Ctx) -> Res<Check> {
    let Some(a) = ctx.n.model_constant() else {
        return Ok(Check::new("identity_refinement", true, json!({ "skipped": "not the model case" })));
    };
    let id = &ctx.cfg.identity;
    let shape = random_shape(ctx.cfg, ctx.cfg.seed, id.modes, id.lambda_min, id.lambda_max)?;
    let st = shape.rescale_to(energy::model_gate(a, id.s) * ctx.cfg.data.gate_fraction, 0.0)?;
    let mut table = Table::new("identity", &["dt", "max_residual", "scale", "relative"]);
    let mut res = Vec::new();
    for &dt in &id.dts {
        let traj = evolve(&st, &ctx.n, id.t_final, dt / 4.0, Integrator::Rk4, 4)?;
        let chk = energy_identity_check(&uniform_prefix(&traj), a, id.s)?;
        table.push(vec![dt, chk.max_residual, chk.scale, chk.relative()]);
        res.push(chk);
    }
    ctx.sink.table(&table)?;
    let expected = (id.dts[0] / id.dts[1]).powi(2);
    let ratio = res[0].max_residual / res[1].max_residual;
    let finest = res.last().unwrap().relative();
    let pass = (ratio / expected - 1.0).abs() <= 0.25 && finest <= 1e-7;
    Ok(Check::new(
        "identity_refinement",
        pass,
        json!({ "refinement_ratio": ratio, "expected_ratio": expected, "finest_relative_residual": finest }),
    ))
}

fn verify(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    let data = ctx.data()?;
    let traj = ctx.evolve(&data.state)?;
    let mut checks = vec![oracle_check(ctx)?];

    let drift = max_relative_drift(&traj, &ctx.n);
    checks.push(Check::new("hamiltonian", drift <= 1e-9, json!({ "max_relative_drift": drift })));

    let kernel = kernel_bound_suite(ctx.cfg.analysis.kernel_samples, ctx.cfg.seed)?;
    checks.push(Check::new("kernel_bound", kernel.pass, serde_json::to_value(&kernel).expect("serializes")));

    let uniform = uniform_prefix(&traj);
    if uniform.samples.len() >= 5 {
        let fb = f_bounds_suite(&uniform, &ctx.n, data.gate)?;
        checks.push(Check::new("f_bounds", fb.pass, serde_json::to_value(&fb).expect("serializes")));
    } else {
        ctx.warnings.push("f_bounds skipped: fewer than 5 uniform samples".into());
    }

    checks.push(identity_check(ctx)?);

    let mut worst_ratio: f64 = 0.0;
    let mut ok = true;
    for e in energy::modified_energies(&data.state, &ctx.n, &ctx.cfg.analysis.s_list)? {
        let ratio = e.e_total / data.state.pair_norm(e.s)?.squared();
        ok &= (0.4..=0.6).contains(&ratio);
        worst_ratio = worst_ratio.max((ratio - 0.5).abs());
    }
    checks.push(Check::new("comparability", ok, json!({ "max_deviation_from_half": worst_ratio })));

    if uniform.samples.len() >= 7 {
        let s = ctx.cfg.analysis.scaling_s;
        let series = quintic_ratio_series(&uniform, &ctx.n, s, data.gate)?;
        let mut table = Table::new("quintic", &["t", "ratio", "gate_ok"]);
        for p in &series {
            table.push(vec![p.t, p.ratio, if p.gate_ok { 1.0 } else { 0.0 }]);
        }
        ctx.sink.table(&table)?;
        let max = series.iter().map(|p| p.ratio).fold(0.0, f64::max);
        let gate_ok = series.iter().all(|p| p.gate_ok);
        checks.push(Check::new("quintic_ratio", gate_ok && max.is_finite(), json!({ "max_ratio": max, "gate_held": gate_ok })));
        if ctx.sink.plots() {
            let pts = series.iter().map(|p| (p.t, p.ratio)).collect();
            ctx.sink.plot("quintic", &Plot::new("quintic ratio", "t", "R").series("R(t)", pts))?;
        }
    }
    let worst = json!({
        "failed": checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect::<Vec<_>>(),
        "hamiltonian_drift": drift,
        "kernel_worst": serde_json::to_value(kernel.worst).expect("serializes"),
    });
    Ok((checks, worst))
}

fn slope_check(name: &str, exp: &ScalingExperiment) -> Check {
    match (exp.unmodified.slope(), exp.modified.slope()) {
        (Some(u), Some(m)) => {
            let pass = m >= 3.5 && (u - 2.0).abs() <= 0.3 && (m - u - 2.0).abs() <= 0.4;
            Check::new(name, pass, json!({ "unmodified_slope": u, "modified_slope": m, "difference": m - u }))
        }
        _ => Check::new(name, true, json!({ "degenerate": true })),
    }
}

fn stability_check(base: &ScalingExperiment, other: &ScalingExperiment, name: &str) -> Check {
    match (base.unmodified.slope(), base.modified.slope(), other.unmodified.slope(), other.modified.slope()) {
        (Some(u0), Some(m0), Some(u1), Some(m1)) => {
            let du = ((u1 - u0) / u0).abs();
            let dm = ((m1 - m0) / m0).abs();
            Check::new(name, du < 0.05 && dm < 0.05, json!({ "unmodified_change": du, "modified_change": dm }))
        }
        _ => Check::new(name, true, json!({ "degenerate": true })),
    }
}

fn sweep(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    let cfg = ctx.cfg;
    let n = ctx.n.clone();
    let s_list = cfg.analysis.s_list.clone();
    let placed: Vec<Res<(SpectralState, f64)>> = (0..cfg.analysis.sweep_states as u64)
        .into_par_iter()
        .map(|k| {
            let shape = grid_shape(cfg, cfg.seed.wrapping_add(k))?;
            let gate = energy::smallness_gate(&shape, &n, &s_list)?;
            let size = cfg.data.size.unwrap_or(gate * cfg.data.gate_fraction);
            Ok((shape.rescale_to(size, 0.0)?, gate))
        })
        .collect();
    let mut states = Vec::with_capacity(placed.len());
    let mut excluded = 0;
    for p in placed {
        let (st, gate) = p?;
        if st.pair_norm(0.0)?.combined() <= gate {
            states.push(st);
        } else {
            excluded += 1;
        }
    }
    if excluded > 0 {
        ctx.warnings.push(format!("{excluded} sweep states above their gate were excluded"));
    }
    let report = comparability_sweep(&states, &n, &s_list, f64::INFINITY)?;
    let mut table = Table::new("comparability", &["s", "min_ratio", "max_ratio", "count"]);
    let mut bracket_ok = !states.is_empty();
    for row in &report.rows {
        bracket_ok &= row.min_ratio >= 0.4 && row.max_ratio <= 0.6;
        table.push(vec![row.s, row.min_ratio, row.max_ratio, row.count as f64]);
    }
    ctx.sink.table(&table)?;
    let mut checks = vec![Check::new(
        "comparability_bracket",
        bracket_ok,
        json!({
            "states": states.len(),
            "excluded": excluded,
            "min_ratio": report.rows.iter().map(|r| r.min_ratio).fold(f64::INFINITY, f64::min),
            "max_ratio": report.rows.iter().map(|r| r.max_ratio).fold(f64::NEG_INFINITY, f64::max),
        }),
    )];

    let shape = grid_shape(cfg, cfg.seed)?;
    let gate = ctx.gate_for(&shape)?;
    let top = cfg.data.size.unwrap_or(gate * cfg.data.gate_fraction);
    let sizes: Vec<f64> = (0..4).map(|k| top * 10f64.powi(-k)).collect();
    let mut trend = Table::new("trend", &["s", "size", "ratio"]);
    let mut monotone = true;
    for &s in &s_list {
        let pts = comparability_trend(&shape, &n, s, &sizes)?;
        let gaps: Vec<f64> = pts.iter().map(|p| (p.1 - 0.5).abs()).collect();
        monotone &= n.is_zero() || gaps.windows(2).all(|w| w[1] < w[0]);
        for (size, ratio) in pts {
            trend.push(vec![s, size, ratio]);
        }
    }
    ctx.sink.table(&trend)?;
    checks.push(Check::new("comparability_trend", monotone, json!({ "sizes": sizes })));

    let opts = ScalingOptions {
        integrator: cfg.integrator.kind,
        dt: cfg.integrator.dt,
        fd_step: cfg.analysis.fd_step,
        size_regularity: cfg.analysis.size_regularity,
    };
    for &eps in &cfg.analysis.epsilons {
        let sz = shape.rescale_to(eps, opts.size_regularity)?.pair_norm(0.0)?.combined();
        ctx.check_gate_scaled(sz, gate)?;
    }
    let (swap_kind, swap_dt) = match opts.integrator {
        Integrator::Rk4 => (Integrator::Rotation, opts.dt / 10.0),
        Integrator::Rotation => (Integrator::Rk4, opts.dt * 10.0),
    };
    let variants = [opts, ScalingOptions { dt: opts.dt / 2.0, ..opts }, ScalingOptions { integrator: swap_kind, dt: swap_dt, ..opts }];
    let runs: Vec<Res<ScalingExperiment>> = variants
        .par_iter()
        .map(|o| Ok(scaling_slope_experiment(&shape, &n, cfg.analysis.scaling_s, &cfg.analysis.epsilons, o)?))
        .collect();
    let mut runs = runs.into_iter().collect::<Res<Vec<_>>>()?.into_iter();
    let (base, half, swap) = (runs.next().unwrap(), runs.next().unwrap(), runs.next().unwrap());
    let mut table = Table::new("scaling", &["epsilon", "y_unmodified", "y_modified", "y_modified_tangent"]);
    let values = |f: &FitOutcome| match f {
        FitOutcome::Fitted(fit) => fit.values.clone(),
        FitOutcome::Degenerate { values, .. } => values.clone(),
    };
    let (yu, ym) = (values(&base.unmodified), values(&base.modified));
    for (i, &eps) in cfg.analysis.epsilons.iter().enumerate() {
        table.push(vec![eps, yu[i], ym[i], base.modified_tangent[i]]);
    }
    ctx.sink.table(&table)?;
    if ctx.sink.plots() {
        let e = &cfg.analysis.epsilons;
        let plot = Plot::new("derivative ratios", "epsilon", "|dE/dt| / E")
            .log_log()
            .series("unmodified", e.iter().cloned().zip(yu.iter().cloned()).collect())
            .series("modified", e.iter().cloned().zip(ym.iter().cloned()).collect());
        ctx.sink.plot("scaling", &plot)?;
    }
    checks.push(slope_check("scaling_slopes", &base));
    checks.push(stability_check(&base, &half, "scaling_dt_halving"));
    checks.push(stability_check(&base, &swap, "scaling_integrator_swap"));
    let worst = json!({
        "scaling": serde_json::to_value(&base).expect("serializes"),
        "failed": checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect::<Vec<_>>(),
    });
    Ok((checks, worst))
}

impl Ctx<'_> {
    fn check_gate_scaled(&mut self, size: f64, gate: f64) -> Res<()> {
        if size > gate {
            if !self.cfg.allow_gate_violation {
                return Err(RunError::Gate { size, gate });
            }
            self.warnings.push(format!("scaling point of size {size} exceeds the smallness gate {gate}"));
        }
        Ok(())
    }
}

fn linearized(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    let a = ctx.model_constant()?;
    let data = ctx.data()?;
    let it = ctx.cfg.integrator.clone();
    let sigma = ctx.cfg.linearized.sigma;
    let pair = evolve_pair(&data.state, &data.companion, &ctx.n, it.t_final, it.dt, it.stride)?;
    let mut table = Table::new("linearized", &["t", "linear_energy", "sep", "mixed"]);
    for smp in &pair.samples {
        let lin = smp.linearized.as_ref().expect("pair samples carry companions");
        let (sep, mixed) = dynamics::sep_mixed(&smp.state, lin, a, sigma)?;
        table.push(vec![smp.time, dynamics::linearized_energy(&smp.state, lin, a, sigma)?, sep, mixed]);
    }
    ctx.sink.table(&table)?;

    let eps = ctx.cfg.linearized.fd_epsilons.clone();
    let pts = linearization_fd_check(&data.state, &data.companion, &ctx.n, it.t_final, it.dt, &eps)?;
    let mut fd = Table::new("flow_difference", &["epsilon", "error"]);
    for p in &pts {
        fd.push(vec![p.epsilon, p.error]);
    }
    ctx.sink.table(&fd)?;
    let expected = eps[0] / eps[1];
    let ratio = pts[0].error / pts[1].error;
    let mut checks = vec![Check::new(
        "first_order_difference",
        (ratio / expected - 1.0).abs() <= 0.2,
        json!({ "error_ratio": ratio, "expected_ratio": expected }),
    )];
    let residual = velocity_linearization_residual(&pair, &ctx.n)?;
    checks.push(Check::new("velocity_solves_linearization", residual <= 1e-10, json!({ "max_residual": residual })));
    if ctx.sink.plots() {
        let t = table.column("t").unwrap();
        let plot = Plot::new("linearized energy", "t", "E_lin").series("E_lin", t.into_iter().zip(table.column("linear_energy").unwrap()).collect());
        ctx.sink.plot("linearized", &plot)?;
    }
    Ok((checks, json!({ "error_ratio": ratio, "velocity_residual": residual })))
}

fn resonance(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    ctx.model_constant()?;
    let data = ctx.data()?;
    let it = ctx.cfg.integrator.clone();
    let lmin = data.state.grid().lambda_min().expect("data is non-empty");
    let t_final = ctx.cfg.resonance.periods * TAU / lmin;
    let rep = resonance_report(&data.state, &data.companion, &ctx.n, ctx.cfg.linearized.sigma, t_final, it.dt, it.stride)?;
    let mut table = Table::new("resonance", &["t", "sep", "mixed", "mean_sep", "mean_mixed", "linear_energy"]);
    for r in &rep.rows {
        table.push(vec![r.t, r.sep, r.mixed, r.mean_sep, r.mean_mixed, r.linear_energy]);
    }
    ctx.sink.table(&table)?;
    if ctx.sink.plots() {
        let plot = Plot::new("running means", "t", "mean")
            .log_y()
            .series("mean sep", rep.rows.iter().map(|r| (r.t, r.mean_sep)).collect())
            .series("mean mixed", rep.rows.iter().map(|r| (r.t, r.mean_mixed)).collect());
        ctx.sink.plot("resonance", &plot)?;
    }
    let ratio = rep.final_mean_ratio();
    let mut checks = vec![Check::new(
        "energy_identity",
        rep.identity_relative <= 1e-6,
        json!({ "relative_mismatch": rep.identity_relative }),
    )];
    if let Some(min) = ctx.cfg.resonance.min_mean_ratio {
        checks.push(Check::new("mean_ratio", ratio >= min, json!({ "ratio": ratio, "threshold": min })));
    }
    Ok((checks, json!({ "final_mean_ratio": json_float(ratio), "t_final": t_final })))
}

fn obstruction(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    let ob = ctx.cfg.obstruction.clone();
    let mut table = Table::new(
        "obstruction",
        &["x", "y", "sigma", "feasible", "residual", "lsq_residual", "projection_residual", "system_norm"],
    );
    let primary = obstruction_certificate(ob.x, ob.y, ob.sigma)?;
    ctx.sink.json("certificate.json", &primary)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let mut inputs = vec![(ob.x, ob.y, ob.sigma)];
    for _ in 0..ob.random_samples {
        let x = 10f64.powf(rng.random_range(-3.0..3.0));
        let y = 10f64.powf(rng.random_range(-3.0..3.0));
        inputs.push((x, y, rng.random_range(-0.9..2.0)));
    }
    inputs.push((0.0, 2.0, 0.5));
    inputs.push((3.0, 0.0, -0.5));
    let mut mismatch: f64 = 0.0;
    let mut consistent = true;
    for &(x, y, sigma) in &inputs {
        let c = obstruction_certificate(x, y, sigma)?;
        let expect_feasible = x * y == 0.0;
        consistent &= c.feasible == expect_feasible && (c.residual == 0.0) == c.feasible;
        if c.feasible {
            consistent &= c.lsq_residual <= 1e-12 * c.system_norm;
        } else {
            let m = ((c.lsq_residual - c.projection_residual) / c.projection_residual).abs();
            mismatch = mismatch.max(m);
            consistent &= c.lsq_residual > 0.0 && c.lsq_residual >= c.residual / c.system_norm * (1.0 - 1e-9);
        }
        table.push(vec![
            x,
            y,
            sigma,
            if c.feasible { 1.0 } else { 0.0 },
            c.residual,
            c.lsq_residual,
            c.projection_residual,
            c.system_norm,
        ]);
    }
    ctx.sink.table(&table)?;
    let checks = vec![
        Check::new("classification", consistent, json!({ "inputs": inputs.len() })),
        Check::new("least_squares_agreement", mismatch <= 1e-10, json!({ "max_relative_mismatch": mismatch })),
    ];
    Ok((
        checks,
        json!({ "certificate": serde_json::to_value(&primary).expect("serializes"), "max_relative_mismatch": mismatch }),
    ))
}

fn truncation(ctx: &mut Ctx) -> Res<(Vec<Check>, Value)> {
    let data = ctx.data()?;
    let it = ctx.cfg.integrator.clone();
    let tc = ctx.cfg.truncation.clone();
    let rows = truncation_convergence(&data.state, &tc.cutoffs, &ctx.n, it.t_final, it.dt, it.stride, tc.s_low)?;
    let mut table = Table::new("truncation", &["cutoff", "modes", "sup_difference", "sup_energy_low"]);
    for r in &rows {
        table.push(vec![r.cutoff, r.modes as f64, r.sup_difference, r.sup_energy_low]);
    }
    ctx.sink.table(&table)?;
    let diffs: Vec<f64> = rows[..rows.len() - 1].iter().map(|r| r.sup_difference).collect();
    let factors: Vec<f64> = diffs
        .windows(2)
        .map(|w| if w[1] == 0.0 { f64::INFINITY } else { w[0] / w[1] })
        .collect();
    let min_factor = factors.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = rows.iter().map(|r| r.sup_energy_low).collect();
    let (e_min, e_max) = (e.iter().cloned().fold(f64::INFINITY, f64::min), e.iter().cloned().fold(0.0, f64::max));
    let spread = if e_max > 0.0 { (e_max - e_min) / e_max } else { 0.0 };
    if ctx.sink.plots() {
        let plot = Plot::new("consecutive truncation differences", "cutoff", "sup difference")
            .log_log()
            .series("difference", rows[..rows.len() - 1].iter().map(|r| (r.cutoff, r.sup_difference)).collect());
        ctx.sink.plot("truncation", &plot)?;
    }
    let checks = vec![
        Check::new(
            "cauchy_decay",
            min_factor >= 1.5,
            json!({ "factors": factors.iter().map(|f| json_float(*f)).collect::<Vec<_>>() }),
        ),
        Check::new("uniform_energy", spread <= 0.1, json!({ "relative_spread": spread })),
    ];
    Ok((checks, json!({ "min_factor": json_float(min_factor), "energy_spread": spread })))
}
