//! Run configuration: TOML in, a fully validated [`RunConfig`] out.
//!
//! Every key has a default except `scenario`, which the subcommand can also
//! supply. Parsing walks the whole document and reports every problem with
//! its dotted path instead of stopping at the first one.

use std::fmt;

use kirchhoff_core::dynamics::Integrator;
use kirchhoff_core::nonlinearity::NonlinearityKind;
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Simulate,
    Energies,
    Verify,
    Sweep,
    Linearized,
    Resonance,
    Obstruction,
    Truncation,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::Simulate,
        Scenario::Energies,
        Scenario::Verify,
        Scenario::Sweep,
        Scenario::Linearized,
        Scenario::Resonance,
        Scenario::Obstruction,
        Scenario::Truncation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::Energies => "energies",
            Scenario::Verify => "verify",
            Scenario::Sweep => "sweep",
            Scenario::Linearized => "linearized",
            Scenario::Resonance => "resonance",
            Scenario::Obstruction => "obstruction",
            Scenario::Truncation => "truncation",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            "both" => Some(Format::Both),
            _ => None,
        }
    }

    pub fn csv(self) -> bool {
        self != Format::Json
    }

    pub fn json(self) -> bool {
        self != Format::Csv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    RandomDecay,
    TwoMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub modes: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Initial data. Random-decay data lives on `[grid]`; two-mode data on
/// `lambdas`, with coefficients drawn from the seed unless given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub kind: DataKind,
    pub regularity: f64,
    pub margin: f64,
    /// `Ḣ¹ × L²` size; when absent random data is placed at
    /// `gate_fraction` times the smallness gate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
    pub gate_fraction: f64,
    pub lambdas: [f64; 2],
    pub amplitude: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_plus: Option<[[f64; 2]; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_minus: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub kind: Integrator,
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub s_list: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub scaling_s: f64,
    pub fd_step: f64,
    pub size_regularity: f64,
    pub sweep_states: usize,
    pub kernel_samples: usize,
    pub oracle_modes: usize,
}

/// The refinement study of the correction-rate identity runs on its own
/// grid so its step sizes can be chosen independently of the main run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityConfig {
    pub modes: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub s: f64,
    pub t_final: f64,
    pub dts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearizedConfig {
    pub sigma: f64,
    pub companion_seed_offset: u64,
    pub companion_size: f64,
    pub fd_epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceConfig {
    pub periods: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_mean_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionConfig {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub random_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationConfig {
    pub cutoffs: Vec<f64>,
    pub s_low: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: String,
    pub format: Format,
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub allow_gate_violation: bool,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub nonlinearity: NonlinearityKind,
    pub integrator: IntegratorConfig,
    pub analysis: AnalysisConfig,
    pub identity: IdentityConfig,
    pub linearized: LinearizedConfig,
    pub resonance: ResonanceConfig,
    pub obstruction: ObstructionConfig,
    pub truncation: TruncationConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Canonical TOML: every key, fixed order, shortest round-trip floats.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The configuration as recorded in verdicts: everything except the
    /// output section, so relocating the output leaves results unchanged.
    pub fn params_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn default_epsilons() -> Vec<f64> {
    (0..7).map(|k| 3e-3 * 10f64.powf(k as f64 / 3.0)).collect()
}

struct Reader {
    errors: Vec<ConfigError>,
}

impl Reader {
    fn err(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError { path: path.into(), message: message.into() });
    }

    fn check(&mut self, ok: bool, path: &str, message: impl FnOnce() -> String) {
        if !ok {
            self.err(path, message());
        }
    }

    /// A sub-table, with its keys checked against `allowed`.
    fn section<'t>(&mut self, root: &'t Table, name: &str, allowed: &[&str]) -> Option<&'t Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => {
                self.unknown_keys(t, name, allowed);
                Some(t)
            }
            Some(_) => {
                self.err(name, "expected a table");
                None
            }
        }
    }

    fn unknown_keys(&mut self, t: &Table, prefix: &str, allowed: &[&str]) {
        for key in t.keys() {
            if !allowed.contains(&key.as_str()) {
                let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
                self.err(path, "unknown key");
            }
        }
    }

    fn raw<'t>(t: Option<&'t Table>, key: &str) -> Option<&'t Value> {
        t.and_then(|t| t.get(key))
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(path, "expected a number");
                None
            }
        }
    }

    fn opt_float(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<f64> {
        let path = format!("{prefix}.{key}");
        let v = Self::raw(t, key)?;
        let x = self.number(v, &path)?;
        if !x.is_finite() {
            self.err(path, "must be finite");
            return None;
        }
        Some(x)
    }

    fn float(&mut self, t: Option<&Table>, prefix: &str, key: &str, default: f64) -> f64 {
        self.opt_float(t, prefix, key).unwrap_or(default)
    }

    fn uint(&mut self, t: Option<&Table>, prefix: &str, key: &str, default: u64) -> u64 {
        let path = if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
        match Self::raw(t, key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(Value::Integer(i)) => {
                self.err(path, format!("must be non-negative, got {i}"));
                default
            }
            Some(_) => {
                self.err(path, "expected an integer");
                default
            }
        }
    }

    fn boolean(&mut self, t: Option<&Table>, prefix: &str, key: &str, default: bool) -> bool {
        let path = if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
        match Self::raw(t, key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.err(path, "expected true or false");
                default
            }
        }
    }

    fn string<'t>(&mut self, t: Option<&'t Table>, prefix: &str, key: &str) -> Option<&'t str> {
        let path = if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") };
        match Self::raw(t, key) {
            None => None,
            Some(Value::String(s)) => Some(s.as_str()),
            Some(_) => {
                self.err(path, "expected a string");
                None
            }
        }
    }

    fn float_list(&mut self, t: Option<&Table>, prefix: &str, key: &str, default: Vec<f64>) -> Vec<f64> {
        let path = format!("{prefix}.{key}");
        match Self::raw(t, key) {
            None => default,
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, it) in items.iter().enumerate() {
                    let p = format!("{path}[{i}]");
                    match self.number(it, &p) {
                        Some(x) if x.is_finite() => out.push(x),
                        Some(_) => self.err(p, "must be finite"),
                        None => {}
                    }
                }
                out
            }
            Some(_) => {
                self.err(path, "expected an array of numbers");
                default
            }
        }
    }

    fn complex_pair(&mut self, t: Option<&Table>, prefix: &str, key: &str) -> Option<[[f64; 2]; 2]> {
        let path = format!("{prefix}.{key}");
        let v = Self::raw(t, key)?;
        let bad = |r: &mut Self| {
            r.err(path.clone(), "expected [[re, im], [re, im]]");
            None
        };
        let Value::Array(outer) = v else { return bad(self) };
        if outer.len() != 2 {
            return bad(self);
        }
        let mut out = [[0.0; 2]; 2];
        for (i, inner) in outer.iter().enumerate() {
            let Value::Array(pair) = inner else { return bad(self) };
            if pair.len() != 2 {
                return bad(self);
            }
            for (j, x) in pair.iter().enumerate() {
                match self.number(x, &format!("{path}[{i}][{j}]")) {
                    Some(x) if x.is_finite() => out[i][j] = x,
                    _ => return None,
                }
            }
        }
        Some(out)
    }
}

/// Parses and validates a configuration. `scenario` fills in a missing
/// top-level `scenario` key and must agree with it when both are present.
pub fn parse_config_for(text: &str, scenario: Option<Scenario>) -> Result<RunConfig, ConfigErrors> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![ConfigError { path: "<document>".into(), message: e.message().to_string() }])
    })?;
    let mut r = Reader { errors: Vec::new() };
    r.unknown_keys(
        &root,
        "",
        &[
            "scenario",
            "seed",
            "allow_gate_violation",
            "grid",
            "data",
            "nonlinearity",
            "integrator",
            "analysis",
            "identity",
            "linearized",
            "resonance",
            "obstruction",
            "truncation",
            "output",
        ],
    );
    let top = Some(&root);

    let scenario = match (r.string(top, "", "scenario"), scenario) {
        (Some(name), given) => match Scenario::parse(name) {
            Some(s) => {
                if let Some(g) = given.filter(|g| *g != s) {
                    r.err("scenario", format!("config says {name:?} but the command is {:?}", g.name()));
                }
                Some(s)
            }
            None => {
                r.err("scenario", format!("unknown scenario {name:?}"));
                given
            }
        },
        (None, Some(g)) => Some(g),
        (None, None) => {
            if !root.contains_key("scenario") {
                r.err("scenario", "missing required key");
            }
            None
        }
    };
    let seed = r.uint(top, "", "seed", 0);
    let allow_gate_violation = r.boolean(top, "", "allow_gate_violation", false);

    let truncation_run = scenario == Some(Scenario::Truncation);
    let resonance_run = scenario == Some(Scenario::Resonance);
    let (modes_default, lmax_default) = if truncation_run { (400, 1024.0) } else { (64, 8.0) };
    let g = r.section(&root, "grid", &["modes", "lambda_min", "lambda_max"]);
    let grid = GridConfig {
        modes: r.uint(g, "grid", "modes", modes_default) as usize,
        lambda_min: r.float(g, "grid", "lambda_min", 1.0),
        lambda_max: r.float(g, "grid", "lambda_max", lmax_default),
    };
    r.check(grid.modes >= 2, "grid.modes", || format!("must be at least 2, got {}", grid.modes));
    r.check(grid.lambda_min > 0.0, "grid.lambda_min", || format!("must be positive, got {}", grid.lambda_min));
    r.check(grid.lambda_max > grid.lambda_min, "grid.lambda_max", || {
        format!("must exceed grid.lambda_min, got {}", grid.lambda_max)
    });

    let d = r.section(
        &root,
        "data",
        &["kind", "regularity", "margin", "size", "gate_fraction", "lambdas", "amplitude", "c_plus", "c_minus"],
    );
    let kind = match r.string(d, "data", "kind") {
        None if resonance_run => DataKind::TwoMode,
        None | Some("random-decay") => DataKind::RandomDecay,
        Some("two-mode") => DataKind::TwoMode,
        Some(other) => {
            r.err("data.kind", format!("expected \"random-decay\" or \"two-mode\", got {other:?}"));
            DataKind::RandomDecay
        }
    };
    let lambdas = r.float_list(d, "data", "lambdas", vec![1.0, 1.7]);
    let lambdas = if lambdas.len() == 2 {
        [lambdas[0], lambdas[1]]
    } else {
        r.err("data.lambdas", format!("expected 2 frequencies, got {}", lambdas.len()));
        [1.0, 1.7]
    };
    let data = DataConfig {
        kind,
        regularity: r.float(d, "data", "regularity", 0.25),
        margin: r.float(d, "data", "margin", 0.5),
        size: r.opt_float(d, "data", "size"),
        gate_fraction: r.float(d, "data", "gate_fraction", 0.1),
        lambdas,
        amplitude: r.float(d, "data", "amplitude", 0.05),
        c_plus: r.complex_pair(d, "data", "c_plus"),
        c_minus: r.complex_pair(d, "data", "c_minus"),
    };
    r.check(data.margin >= 0.0, "data.margin", || format!("must be non-negative, got {}", data.margin));
    if let Some(s) = data.size {
        r.check(s > 0.0, "data.size", || format!("must be positive, got {s}"));
    }
    r.check(data.gate_fraction > 0.0, "data.gate_fraction", || format!("must be positive, got {}", data.gate_fraction));
    r.check(
        data.lambdas[0] > 0.0 && data.lambdas[1] > 0.0 && data.lambdas[0] != data.lambdas[1],
        "data.lambdas",
        || format!("need two distinct positive frequencies, got {:?}", data.lambdas),
    );
    r.check(data.amplitude > 0.0, "data.amplitude", || format!("must be positive, got {}", data.amplitude));
    r.check(data.c_plus.is_some() == data.c_minus.is_some(), "data.c_plus", || {
        "c_plus and c_minus must be given together".into()
    });

    let nl = r.section(&root, "nonlinearity", &["kind", "a", "b", "coefficients"]);
    let nonlinearity = match r.string(nl, "nonlinearity", "kind").unwrap_or("model") {
        "model" => {
            if nl.is_some_and(|t| t.contains_key("b") || t.contains_key("coefficients")) {
                r.err("nonlinearity", "model takes only `a`");
            }
            NonlinearityKind::Model { a: r.float(nl, "nonlinearity", "a", 1.0) }
        }
        "quadratic" => {
            if nl.is_some_and(|t| t.contains_key("coefficients")) {
                r.err("nonlinearity.coefficients", "quadratic takes `a` and `b`");
            }
            NonlinearityKind::Quadratic { a: r.float(nl, "nonlinearity", "a", 1.0), b: r.float(nl, "nonlinearity", "b", 1.0) }
        }
        "custom-polynomial" => {
            if nl.is_some_and(|t| t.contains_key("a") || t.contains_key("b")) {
                r.err("nonlinearity", "custom-polynomial takes only `coefficients`");
            }
            let coefficients = r.float_list(nl, "nonlinearity", "coefficients", Vec::new());
            if coefficients.is_empty() {
                r.err("nonlinearity.coefficients", "missing required key for custom-polynomial");
            }
            NonlinearityKind::CustomPolynomial { coefficients }
        }
        other => {
            r.err("nonlinearity.kind", format!("expected model, quadratic or custom-polynomial, got {other:?}"));
            NonlinearityKind::Model { a: 1.0 }
        }
    };

    let it = r.section(&root, "integrator", &["kind", "dt", "t_final", "stride"]);
    let integ_kind = match r.string(it, "integrator", "kind") {
        None | Some("rotation") => Integrator::Rotation,
        Some("rk4") => Integrator::Rk4,
        Some(other) => {
            r.err("integrator.kind", format!("expected \"rotation\" or \"rk4\", got {other:?}"));
            Integrator::Rotation
        }
    };
    let integrator = IntegratorConfig {
        kind: integ_kind,
        dt: r.float(it, "integrator", "dt", if truncation_run || resonance_run { 1e-2 } else { 1e-3 }),
        t_final: r.float(it, "integrator", "t_final", 1.0),
        stride: r.uint(it, "integrator", "stride", if resonance_run { 100 } else { 10 }) as usize,
    };
    r.check(integrator.dt > 0.0, "integrator.dt", || format!("must be positive, got {}", integrator.dt));
    r.check(integrator.t_final >= 0.0, "integrator.t_final", || {
        format!("must be non-negative, got {}", integrator.t_final)
    });
    r.check(integrator.stride >= 1, "integrator.stride", || "must be at least 1".into());

    let a = r.section(
        &root,
        "analysis",
        &["s_list", "epsilons", "scaling_s", "fd_step", "size_regularity", "sweep_states", "kernel_samples", "oracle_modes"],
    );
    let analysis = AnalysisConfig {
        s_list: r.float_list(a, "analysis", "s_list", vec![0.0, 0.25, 0.5]),
        epsilons: r.float_list(a, "analysis", "epsilons", default_epsilons()),
        scaling_s: r.float(a, "analysis", "scaling_s", 0.25),
        fd_step: r.float(a, "analysis", "fd_step", 0.05),
        size_regularity: r.float(a, "analysis", "size_regularity", 0.25),
        sweep_states: r.uint(a, "analysis", "sweep_states", 100) as usize,
        kernel_samples: r.uint(a, "analysis", "kernel_samples", 100_000) as usize,
        oracle_modes: r.uint(a, "analysis", "oracle_modes", 40) as usize,
    };
    r.check(!analysis.s_list.is_empty(), "analysis.s_list", || "must not be empty".into());
    {
        let e = &analysis.epsilons;
        let ok = e.len() >= 3 && e.iter().all(|x| *x > 0.0);
        r.check(ok, "analysis.epsilons", || "need at least 3 positive values".into());
        if ok {
            let span = e.iter().cloned().fold(0.0, f64::max) / e.iter().cloned().fold(f64::INFINITY, f64::min);
            r.check(span >= 99.999, "analysis.epsilons", || format!("must span at least 2 decades, spans {span}"));
        }
    }
    r.check(analysis.fd_step >= integrator.dt, "analysis.fd_step", || {
        format!("must be at least integrator.dt, got {}", analysis.fd_step)
    });
    r.check(analysis.sweep_states >= 1, "analysis.sweep_states", || "must be at least 1".into());
    r.check(analysis.kernel_samples >= 1, "analysis.kernel_samples", || "must be at least 1".into());
    r.check(analysis.oracle_modes >= 2, "analysis.oracle_modes", || "must be at least 2".into());

    let idt = r.section(&root, "identity", &["modes", "lambda_min", "lambda_max", "s", "t_final", "dts"]);
    let identity = IdentityConfig {
        modes: r.uint(idt, "identity", "modes", 30) as usize,
        lambda_min: r.float(idt, "identity", "lambda_min", 0.5),
        lambda_max: r.float(idt, "identity", "lambda_max", 2.0),
        s: r.float(idt, "identity", "s", 0.25),
        t_final: r.float(idt, "identity", "t_final", 0.05),
        dts: r.float_list(idt, "identity", "dts", vec![1e-3, 5e-4, 1e-4]),
    };
    r.check(identity.modes >= 2, "identity.modes", || "must be at least 2".into());
    r.check(identity.lambda_min > 0.0 && identity.lambda_max > identity.lambda_min, "identity.lambda_max", || {
        "need 0 < lambda_min < lambda_max".into()
    });
    r.check(identity.t_final > 0.0, "identity.t_final", || "must be positive".into());
    r.check(identity.dts.len() >= 2 && identity.dts.iter().all(|d| *d > 0.0), "identity.dts", || {
        "need at least 2 positive steps".into()
    });

    let l = r.section(&root, "linearized", &["sigma", "companion_seed_offset", "companion_size", "fd_epsilons"]);
    let linearized = LinearizedConfig {
        sigma: r.float(l, "linearized", "sigma", 0.0),
        companion_seed_offset: r.uint(l, "linearized", "companion_seed_offset", 1),
        companion_size: r.float(l, "linearized", "companion_size", 1.0),
        fd_epsilons: r.float_list(l, "linearized", "fd_epsilons", vec![1e-3, 1e-4]),
    };
    r.check(linearized.companion_size > 0.0, "linearized.companion_size", || "must be positive".into());
    r.check(
        linearized.fd_epsilons.len() >= 2 && linearized.fd_epsilons.iter().all(|e| *e > 0.0),
        "linearized.fd_epsilons",
        || "need at least 2 positive values".into(),
    );

    let rs = r.section(&root, "resonance", &["periods", "min_mean_ratio"]);
    let resonance = ResonanceConfig {
        periods: r.float(rs, "resonance", "periods", 200.0),
        min_mean_ratio: r.opt_float(rs, "resonance", "min_mean_ratio"),
    };
    r.check(resonance.periods > 0.0, "resonance.periods", || "must be positive".into());

    let ob = r.section(&root, "obstruction", &["x", "y", "sigma", "random_samples"]);
    let obstruction = ObstructionConfig {
        x: r.float(ob, "obstruction", "x", 1.0),
        y: r.float(ob, "obstruction", "y", 1.0),
        sigma: r.float(ob, "obstruction", "sigma", 0.0),
        random_samples: r.uint(ob, "obstruction", "random_samples", 50) as usize,
    };
    r.check(obstruction.x >= 0.0, "obstruction.x", || format!("must be non-negative, got {}", obstruction.x));
    r.check(obstruction.y >= 0.0, "obstruction.y", || format!("must be non-negative, got {}", obstruction.y));

    let tr = r.section(&root, "truncation", &["cutoffs", "s_low"]);
    let truncation = TruncationConfig {
        cutoffs: r.float_list(tr, "truncation", "cutoffs", (4..=9).map(|k| 2f64.powi(k)).collect()),
        s_low: r.float(tr, "truncation", "s_low", 0.25),
    };
    r.check(
        truncation.cutoffs.len() >= 2 && truncation.cutoffs.windows(2).all(|w| w[1] > w[0]),
        "truncation.cutoffs",
        || "need at least 2 increasing cutoffs".into(),
    );

    let o = r.section(&root, "output", &["dir", "format", "plots"]);
    let format = match r.string(o, "output", "format") {
        None => Format::Both,
        Some(f) => Format::parse(f).unwrap_or_else(|| {
            r.err("output.format", format!("expected csv, json or both, got {f:?}"));
            Format::Both
        }),
    };
    let output = OutputConfig {
        dir: r.string(o, "output", "dir").unwrap_or("out").to_string(),
        format,
        plots: r.boolean(o, "output", "plots", false),
    };
    r.check(!output.dir.is_empty(), "output.dir", || "must not be empty".into());

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    Ok(RunConfig {
        scenario: scenario.expect("scenario checked above"),
        seed,
        allow_gate_violation,
        grid,
        data,
        nonlinearity,
        integrator,
        analysis,
        identity,
        linearized,
        resonance,
        obstruction,
        truncation,
        output,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_config_for(text, None)
}
