//! The scalar nonlinearity `N`, and the frequency-filtered quantities built
//! from it: the cumulative Ḣ¹ mass `C(r)`, `A(r) = N′(C(r))` and the
//! correction `F(r) = (1 + N(C(r)))^{−3/2}`.

use serde::{Deserialize, Serialize};

use crate::dual::Scalar;
use crate::error::{Error, Result};
use crate::spectral::SpectralState;

/// Below this wave speed squared a profile carries a warning.
pub const WAVE_SPEED_WARNING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearityKind {
    Model { a: f64 },
    Quadratic { a: f64, b: f64 },
    CustomPolynomial { coefficients: Vec<f64> },
}

/// A polynomial nonlinearity `N(r) = Σ_{i≥1} c_i r^i`, so `N(0) = 0` holds by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    /// `coeffs[i]` multiplies `r^{i+1}`.
    coeffs: Vec<f64>,
}

impl NonlinearitySpec {
    /// `N(r) = A r`.
    pub fn model(a: f64) -> Self {
        Self { kind: NonlinearityKind::Model { a }, coeffs: vec![a] }
    }

    /// `N(r) = A r + B r²`.
    pub fn quadratic(a: f64, b: f64) -> Self {
        Self { kind: NonlinearityKind::Quadratic { a, b }, coeffs: vec![a, b] }
    }

    /// Coefficients in ascending degree starting at the constant term, which
    /// is dropped.
    pub fn custom_polynomial(coefficients: &[f64]) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("polynomial coefficients must be finite".into()));
        }
        let mut coeffs: Vec<f64> = coefficients.iter().skip(1).copied().collect();
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        let mut stored = coefficients.to_vec();
        if let Some(c0) = stored.first_mut() {
            *c0 = 0.0;
        }
        Ok(Self { kind: NonlinearityKind::CustomPolynomial { coefficients: stored }, coeffs })
    }

    pub fn zero() -> Self {
        Self::model(0.0)
    }

    pub fn from_kind(kind: NonlinearityKind) -> Result<Self> {
        match kind {
            NonlinearityKind::Model { a } => Ok(Self::model(a)),
            NonlinearityKind::Quadratic { a, b } => Ok(Self::quadratic(a, b)),
            NonlinearityKind::CustomPolynomial { coefficients } => Self::custom_polynomial(&coefficients),
        }
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            NonlinearityKind::Model { .. } => "model",
            NonlinearityKind::Quadratic { .. } => "quadratic",
            NonlinearityKind::CustomPolynomial { .. } => "custom-polynomial",
        }
    }

    /// Coefficients of `r, r², …`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// `Some(A)` when `N(r) = A r`, whatever variant produced it.
    pub fn model_constant(&self) -> Option<f64> {
        match self.coeffs.as_slice() {
            [] => Some(0.0),
            [a] => Some(*a),
            [a, rest @ ..] if rest.iter().all(|&c| c == 0.0) => Some(*a),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.eval_t(r)
    }

    pub fn d1(&self, r: f64) -> f64 {
        self.d1_t(r)
    }

    pub fn d2(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            let deg = (i + 1) as f64;
            acc = acc * r + c * deg * (deg - 1.0);
        }
        acc
    }

    /// `𝒩(r) = ∫₀^r N`.
    pub fn antiderivative(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * r + c / (i + 2) as f64;
        }
        acc * r * r
    }

    pub(crate) fn eval_t<T: Scalar>(&self, r: T) -> T {
        let mut acc = T::zero();
        for &c in self.coeffs.iter().rev() {
            acc = acc * r + c;
        }
        acc * r
    }

    pub(crate) fn d1_t<T: Scalar>(&self, r: T) -> T {
        let mut acc = T::zero();
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * r + c * (i + 1) as f64;
        }
        acc
    }

    /// `(𝒩(b) − 𝒩(a))/(b − a)` without cancellation; equals `N(a)` at `a = b`.
    pub fn secant_mean(&self, a: f64, b: f64) -> f64 {
        // (b^{i+1} − a^{i+1})/(b − a) = Σ_{j=0}^{i} a^j b^{i−j}
        let mut total = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate() {
            let i = k + 1;
            total += c / (i + 1) as f64 * geometric_sum(a, b, i);
        }
        total
    }

    /// `(N′(b) − N′(a))/(b − a)`; equals `N″(a)` at `a = b`.
    pub fn secant_d1(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for (k, &c) in self.coeffs.iter().enumerate().skip(1) {
            let i = k + 1;
            total += c * i as f64 * geometric_sum(a, b, i - 2);
        }
        total
    }

    /// `max |N′|` and `max |N″|` over `[0, r_max]`, sampled on a uniform grid
    /// including both endpoints.
    pub fn derivative_bounds(&self, r_max: f64) -> (f64, f64) {
        const SAMPLES: usize = 256;
        let r_max = r_max.max(0.0);
        (0..=SAMPLES).fold((0.0f64, 0.0f64), |(m1, m2), k| {
            let r = r_max * k as f64 / SAMPLES as f64;
            (m1.max(self.d1(r).abs()), m2.max(self.d2(r).abs()))
        })
    }
}

/// `Σ_{j=0}^{n} a^j b^{n−j}`.
fn geometric_sum(a: f64, b: f64, n: usize) -> f64 {
    let mut acc = 0.0;
    let mut apow = 1.0;
    let mut bpow = b.powi(n as i32);
    let inv_b = if b != 0.0 { 1.0 / b } else { 0.0 };
    for j in 0..=n {
        if b == 0.0 {
            if j == n {
                acc += apow;
            }
        } else {
            acc += apow * bpow;
            bpow *= inv_b;
        }
        apow *= a;
    }
    acc
}

/// `C`, `A` and `F` at every grid point, from one ascending pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredProfile<T = f64> {
    pub c_prefix: Vec<T>,
    pub a_values: Vec<T>,
    pub f_values: Vec<T>,
    /// `(C, A, F)` for `r < λ_1`.
    pub below_min: (f64, f64, f64),
    /// `min_k 1 + N(C(λ_k))`, including the value 1 below the grid.
    pub min_wave_speed_sq: f64,
}

impl<T> FilteredProfile<T> {
    /// True when `1 + N(C)` drops to the warning level somewhere.
    pub fn near_degenerate(&self) -> bool {
        self.min_wave_speed_sq <= WAVE_SPEED_WARNING
    }
}

/// `Σ_{λ_k ≤ r} w_k λ_k² |û_k|²`.
pub fn cumulative_mass(state: &SpectralState, r: f64) -> f64 {
    let g = state.grid();
    g.lambdas()
        .iter()
        .zip(g.weights())
        .zip(state.u())
        .take_while(|((&l, _), _)| l <= r)
        .map(|((&l, &w), u)| w * l * l * u.norm_sqr())
        .sum()
}

/// `A(r) = N′(C(r))`.
pub fn filtered_a(state: &SpectralState, n: &NonlinearitySpec, r: f64) -> f64 {
    n.d1(cumulative_mass(state, r))
}

/// `F(r) = (1 + N(C(r)))^{−3/2}`.
pub fn correction_f(state: &SpectralState, n: &NonlinearitySpec, r: f64) -> Result<f64> {
    let speed = 1.0 + n.eval(cumulative_mass(state, r));
    if speed <= 0.0 {
        let index = state.grid().lambdas().partition_point(|&l| l <= r).saturating_sub(1);
        return Err(Error::Degenerate { index, value: speed });
    }
    Ok(speed.powf(-1.5))
}

pub fn build_profile(state: &SpectralState, n: &NonlinearitySpec) -> Result<FilteredProfile> {
    let g = state.grid();
    let masses: Vec<f64> = g
        .lambdas()
        .iter()
        .zip(g.weights())
        .zip(state.u())
        .map(|((&l, &w), u)| w * l * l * u.norm_sqr())
        .collect();
    profile_from_masses(&masses, n)
}

/// Profile from per-mode masses `w λ² |û|²`, over any scalar type.
pub(crate) fn profile_from_masses<T: Scalar>(masses: &[T], n: &NonlinearitySpec) -> Result<FilteredProfile<T>> {
    let m = masses.len();
    let mut c_prefix = Vec::with_capacity(m);
    let mut a_values = Vec::with_capacity(m);
    let mut f_values = Vec::with_capacity(m);
    let mut c = T::zero();
    let mut min_speed = 1.0f64;
    for (k, &mass) in masses.iter().enumerate() {
        c += mass;
        let speed = n.eval_t(c) + 1.0;
        if speed.value() <= 0.0 || !speed.value().is_finite() {
            return Err(Error::Degenerate { index: k, value: speed.value() });
        }
        min_speed = min_speed.min(speed.value());
        c_prefix.push(c);
        a_values.push(n.d1_t(c));
        f_values.push(speed.powf(-1.5));
    }
    Ok(FilteredProfile {
        c_prefix,
        a_values,
        f_values,
        below_min: (0.0, n.d1(0.0), 1.0),
        min_wave_speed_sq: min_speed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_random_decay, Mode, RandomDecay};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, seed: u64) -> SpectralState {
        build_random_decay(&RandomDecay { modes: m, lambda_min: 0.5, lambda_max: 30.0, regularity: 0.25, margin: 0.4, seed })
            .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn model_values() {
        let n = NonlinearitySpec::model(1.0);
        assert_eq!((n.eval(0.25), n.d1(0.25), n.d2(0.25)), (0.25, 1.0, 0.0));
        let n = NonlinearitySpec::model(-3.0);
        assert_eq!(n.antiderivative(2.0), 2.0 * -3.0);
        assert_eq!(n.eval(0.0), 0.0);
        assert!(NonlinearitySpec::model(0.0).is_zero());
    }

    #[test]
    fn custom_polynomial_drops_constant() {
        let n = NonlinearitySpec::custom_polynomial(&[5.0, 1.0, 0.0, 2.0]).unwrap();
        assert_eq!(n.eval(0.0), 0.0);
        assert_eq!(n.eval(1.0), 3.0);
        assert_eq!(n.coefficients(), &[1.0, 0.0, 2.0]);
        assert_eq!(NonlinearitySpec::custom_polynomial(&[0.0, 2.0, 0.0]).unwrap().model_constant(), Some(2.0));
        assert_eq!(NonlinearitySpec::quadratic(1.0, 1.0).model_constant(), None);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let specs = [
            NonlinearitySpec::model(0.7),
            NonlinearitySpec::quadratic(1.0, 1.0),
            NonlinearitySpec::custom_polynomial(&[0.0, -0.5, 2.0, 3.0, -1.0]).unwrap(),
        ];
        let h = 1e-5;
        for n in &specs {
            for k in 0..=20 {
                let r = 0.005 * k as f64 + 1e-3;
                let fd1 = (n.eval(r + h) - n.eval(r - h)) / (2.0 * h);
                let fd2 = (n.d1(r + h) - n.d1(r - h)) / (2.0 * h);
                let fda = (n.antiderivative(r + h) - n.antiderivative(r - h)) / (2.0 * h);
                assert!((fd1 - n.d1(r)).abs() <= 1e-6 * n.d1(r).abs().max(1.0));
                assert!((fd2 - n.d2(r)).abs() <= 1e-6 * n.d2(r).abs().max(1.0));
                assert!((fda - n.eval(r)).abs() <= 1e-6 * n.eval(r).abs().max(1e-3));
            }
        }
    }

    #[test]
    fn secants_match_direct_quotients() {
        let n = NonlinearitySpec::custom_polynomial(&[0.0, 1.0, -2.0, 0.5]).unwrap();
        let (a, b) = (0.3, 0.7);
        let direct = (n.antiderivative(b) - n.antiderivative(a)) / (b - a);
        assert!(rel(n.secant_mean(a, b), direct) < 1e-14);
        let direct = (n.d1(b) - n.d1(a)) / (b - a);
        assert!(rel(n.secant_d1(a, b), direct) < 1e-14);
        assert!(rel(n.secant_mean(a, a), n.eval(a)) < 1e-15);
        assert!(rel(n.secant_d1(a, a), n.d2(a)) < 1e-15);
        assert_eq!(n.secant_mean(0.0, 0.0), 0.0);
        assert!(rel(n.secant_mean(0.0, b), n.antiderivative(b) / b) < 1e-14);
    }

    #[test]
    fn cumulative_mass_matches_filter_oracle() {
        let s = random(200, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(cumulative_mass(&s, 0.1), 0.0);
        let full = s.sobolev_norm_sq(1.0).unwrap();
        assert!(rel(cumulative_mass(&s, 1e3), full) < 1e-15);
        let profile = build_profile(&s, &NonlinearitySpec::zero()).unwrap();
        for _ in 0..50 {
            let r: f64 = rng.random_range(0.4..31.0);
            let oracle: f64 = s.modes().filter(|m| m.lambda <= r).map(|m| m.weight * m.lambda.powi(2) * m.u.norm_sqr()).sum();
            assert!(rel(cumulative_mass(&s, r), oracle) < 1e-13);
            let k = s.grid().lambdas().partition_point(|&l| l <= r);
            if k > 0 {
                assert!(rel(profile.c_prefix[k - 1], oracle) < 1e-13);
            }
        }
    }

    #[test]
    fn filtered_a_model_and_quadratic() {
        let s = random(50, 2);
        let m = NonlinearitySpec::model(-0.4);
        let q = NonlinearitySpec::quadratic(1.0, 1.0);
        for k in 0..20 {
            let r = 0.3 * 1.25f64.powi(k);
            assert_eq!(filtered_a(&s, &m, r), -0.4);
            let c = cumulative_mass(&s, r);
            assert!(rel(filtered_a(&s, &q, r), 1.0 + 2.0 * c) < 1e-15);
        }
        assert_eq!(filtered_a(&s, &q, 0.1), 1.0);
    }

    #[test]
    fn correction_f_explicit_form() {
        let s = random(10, 3);
        assert_eq!(correction_f(&s, &NonlinearitySpec::model(2.0), 0.1).unwrap(), 1.0);
        let rho: f64 = 0.3;
        let single = SpectralState::from_modes(
            vec![Mode { lambda: 1.0, weight: 1.0, u: Complex64::new(rho.sqrt(), 0.0), v: Complex64::new(0.0, 0.0) }],
            0.0,
        )
        .unwrap();
        let a = 0.8;
        let f = correction_f(&single, &NonlinearitySpec::model(a), 1.0).unwrap();
        assert!(rel(f, (1.0 + a * rho).powf(-1.5)) < 1e-15);
        let err = correction_f(&single, &NonlinearitySpec::model(-4.0), 2.0).unwrap_err();
        assert!(matches!(err, Error::Degenerate { index: 0, .. }));
        assert!(err.to_string().contains("nonlinearity degenerate at this data size"));
    }

    #[test]
    fn integral_equation_residual_is_bounded_by_mode_mass() {
        let check = |m: usize| {
            let s = random(m, 4).rescale_to(0.3, 0.0).unwrap();
            let n = NonlinearitySpec::quadratic(1.0, 1.0);
            let p = build_profile(&s, &n).unwrap();
            let masses: Vec<f64> = s.modes().map(|md| md.weight * md.lambda.powi(2) * md.u.norm_sqr()).collect();
            let max_mass = masses.iter().cloned().fold(0.0, f64::max);
            let max_a = p.a_values.iter().map(|a| a.abs()).fold(0.0, f64::max);
            let mut worst: f64 = 0.0;
            let (mut i1, mut i2) = (0.0, 0.0);
            for k in 0..m {
                i1 += p.a_values[k] * masses[k];
                i2 += p.f_values[k] * p.a_values[k] * masses[k];
                let resid = p.f_values[k] - (1.0 - p.f_values[k] * i1 - 0.5 * i2);
                worst = worst.max(resid.abs());
            }
            assert!(worst <= 3.0 * max_mass * max_a, "{worst} vs {max_mass}");
            worst
        };
        let coarse = check(64);
        let fine = check(512);
        assert!(fine < coarse);
    }

    #[test]
    fn profile_matches_pointwise_calls() {
        let s = random(120, 5).rescale_to(0.2, 0.0).unwrap();
        let n = NonlinearitySpec::quadratic(1.0, 1.0);
        let p = build_profile(&s, &n).unwrap();
        for (k, &l) in s.grid().lambdas().iter().enumerate() {
            assert!(rel(p.c_prefix[k], cumulative_mass(&s, l)) < 1e-14);
            assert!(rel(p.a_values[k], filtered_a(&s, &n, l)) < 1e-14);
            assert!(rel(p.f_values[k], correction_f(&s, &n, l).unwrap()) < 1e-14);
        }
        let zero = build_profile(&s.scaled(0.0), &n).unwrap();
        assert!(zero.c_prefix.iter().all(|&c| c == 0.0));
        assert!(zero.a_values.iter().all(|&a| a == 1.0));
        assert!(zero.f_values.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn telescoping_identity() {
        let s = random(300, 6).rescale_to(0.5, 0.0).unwrap();
        let n = NonlinearitySpec::quadratic(1.0, 1.0);
        let p = build_profile(&s, &n).unwrap();
        let total = s.sobolev_norm_sq(1.0).unwrap();
        let mut tele = 0.0;
        let mut prev = 0.0;
        for &c in &p.c_prefix {
            tele += n.eval(c) - n.eval(prev);
            prev = c;
        }
        assert!(rel(tele, n.eval(total)) < 1e-13);
        let midpoint: f64 = s.modes().zip(&p.a_values).map(|(m, a)| a * m.weight * m.lambda.powi(2) * m.u.norm_sqr()).sum();
        let max_mass = s.modes().map(|m| m.weight * m.lambda.powi(2) * m.u.norm_sqr()).fold(0.0, f64::max);
        let (_, max_d2) = n.derivative_bounds(total);
        assert!((midpoint - n.eval(total)).abs() <= max_d2 * max_mass * total);
    }

    #[test]
    fn near_degenerate_warning() {
        let s = random(20, 8).rescale_to(0.7, 0.0).unwrap();
        let c = s.sobolev_norm_sq(1.0).unwrap();
        let n = NonlinearitySpec::model(-0.6 / c);
        let p = build_profile(&s, &n).unwrap();
        assert!(p.near_degenerate());
        assert!(!build_profile(&s, &NonlinearitySpec::model(1.0)).unwrap().near_degenerate());
    }
}
