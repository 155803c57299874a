//! Discrete spectral measures: the frequency grid, the solution state
//! `(û, û′)` at one time, Sobolev norms and initial-data builders.
//!
//! Every functional in this crate depends on a state only through the
//! per-shell quadratics `|û|²`, `|û′|²` and `Re(û ū′)`, so a radial
//! frequency magnitude with a quadrature weight is all a mode carries.

use std::cmp::Ordering;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Strictly increasing positive frequencies with positive quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    lambdas: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyGrid {
    /// Builds a grid from unsorted input. Duplicate frequencies are merged
    /// by summing their weights.
    pub fn new(lambdas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if lambdas.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "{} frequencies but {} weights",
                lambdas.len(),
                weights.len()
            )));
        }
        if lambdas.is_empty() {
            return Err(Error::InvalidGrid("grid must contain at least one mode".into()));
        }
        let mut pairs: Vec<(f64, f64)> = lambdas.into_iter().zip(weights).collect();
        for &(l, w) in &pairs {
            check_mode(l, w)?;
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out_l: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut out_w: Vec<f64> = Vec::with_capacity(pairs.len());
        for (l, w) in pairs {
            if out_l.last() == Some(&l) {
                *out_w.last_mut().unwrap() += w;
            } else {
                out_l.push(l);
                out_w.push(w);
            }
        }
        Ok(Self { lambdas: out_l, weights: out_w })
    }

    /// Log-uniform grid on `[lambda_min, lambda_max]` with trapezoid weights
    /// for the measure `dλ/λ`.
    pub fn log_uniform(modes: usize, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        if modes < 2 {
            return Err(Error::InvalidGrid("log-uniform grid needs at least 2 modes".into()));
        }
        if !(lambda_min > 0.0 && lambda_max > lambda_min && lambda_max.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < lambda_min < lambda_max, got [{lambda_min}, {lambda_max}]"
            )));
        }
        let span = (lambda_max / lambda_min).ln();
        let h = span / (modes - 1) as f64;
        let lambdas = (0..modes)
            .map(|k| {
                if k == modes - 1 {
                    lambda_max
                } else {
                    lambda_min * (h * k as f64).exp()
                }
            })
            .collect();
        let weights = (0..modes)
            .map(|k| if k == 0 || k == modes - 1 { 0.5 * h } else { h })
            .collect();
        Self::new(lambdas, weights)
    }

    fn from_sorted_unchecked(lambdas: Vec<f64>, weights: Vec<f64>) -> Self {
        Self { lambdas, weights }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    /// Only a truncation below the lowest frequency yields an empty grid.
    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda_min(&self) -> Option<f64> {
        self.lambdas.first().copied()
    }

    pub fn lambda_max(&self) -> Option<f64> {
        self.lambdas.last().copied()
    }
}

fn check_mode(lambda: f64, weight: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidGrid(format!("frequency {lambda} is not a positive finite real")));
    }
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::InvalidGrid(format!("weight {weight} is not a positive finite real")));
    }
    Ok(())
}

/// `(‖u‖_{Ḣ^{1+s}}, ‖u′‖_{Ḣ^s})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormPair {
    pub pos: f64,
    pub vel: f64,
}

impl NormPair {
    /// Euclidean size of the pair.
    pub fn combined(&self) -> f64 {
        self.pos.hypot(self.vel)
    }

    pub fn squared(&self) -> f64 {
        self.pos * self.pos + self.vel * self.vel
    }
}

/// One frequency shell with its position and velocity amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub lambda: f64,
    pub weight: f64,
    pub u: Complex64,
    pub v: Complex64,
}

/// The solution `(û(t), û′(t))` at one time on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    grid: Arc<FrequencyGrid>,
    u: Vec<Complex64>,
    v: Vec<Complex64>,
    time: f64,
}

impl SpectralState {
    pub fn new(grid: Arc<FrequencyGrid>, u: Vec<Complex64>, v: Vec<Complex64>, time: f64) -> Result<Self> {
        if u.len() != grid.len() || v.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: if u.len() != grid.len() { u.len() } else { v.len() },
            });
        }
        if u.iter().chain(v.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        Ok(Self { grid, u, v, time })
    }

    pub fn zero(grid: Arc<FrequencyGrid>) -> Self {
        let m = grid.len();
        Self { grid, u: vec![Complex64::new(0.0, 0.0); m], v: vec![Complex64::new(0.0, 0.0); m], time: 0.0 }
    }

    /// Builds a state from modes in any order. Modes sharing a frequency are
    /// merged into one shell that preserves the weighted quadratics
    /// `w|û|²`, `w|û′|²` and `w Re(û ū′)`, which is all the dynamics sees.
    pub fn from_modes(mut modes: Vec<Mode>, time: f64) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidGrid("state must contain at least one mode".into()));
        }
        for m in &modes {
            check_mode(m.lambda, m.weight)?;
        }
        modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        let mut merged: Vec<Mode> = Vec::with_capacity(modes.len());
        for m in modes {
            match merged.last_mut() {
                Some(last) if last.lambda == m.lambda => *last = merge_modes(last, &m),
                _ => merged.push(m),
            }
        }
        let grid = FrequencyGrid::from_sorted_unchecked(
            merged.iter().map(|m| m.lambda).collect(),
            merged.iter().map(|m| m.weight).collect(),
        );
        Self::new(
            Arc::new(grid),
            merged.iter().map(|m| m.u).collect(),
            merged.iter().map(|m| m.v).collect(),
            time,
        )
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<FrequencyGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[Complex64] {
        &self.u
    }

    pub fn v(&self) -> &[Complex64] {
        &self.v
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(move |k| Mode {
            lambda: self.grid.lambdas[k],
            weight: self.grid.weights[k],
            u: self.u[k],
            v: self.v[k],
        })
    }

    /// Replaces the amplitudes, keeping the grid.
    pub fn with_amplitudes(&self, u: Vec<Complex64>, v: Vec<Complex64>, time: f64) -> Result<Self> {
        Self::new(Arc::clone(&self.grid), u, v, time)
    }

    pub(crate) fn from_parts_unchecked(grid: Arc<FrequencyGrid>, u: Vec<Complex64>, v: Vec<Complex64>, time: f64) -> Self {
        debug_assert_eq!(u.len(), grid.len());
        debug_assert_eq!(v.len(), grid.len());
        Self { grid, u, v, time }
    }

    /// Multiplies both amplitude vectors by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            u: self.u.iter().map(|z| z * factor).collect(),
            v: self.v.iter().map(|z| z * factor).collect(),
            time: self.time,
        }
    }

    /// Flips the sign of the velocity, the time-reversal map of the flow.
    pub fn reversed(&self) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            u: self.u.clone(),
            v: self.v.iter().map(|z| -z).collect(),
            time: self.time,
        }
    }

    /// `Σ w λ^{2σ} |û|²`, summed in ascending frequency.
    pub fn sobolev_norm_sq(&self, sigma: f64) -> Result<f64> {
        finite(weighted_sq_sum(&self.grid, &self.u, sigma), "sobolev_norm_sq")
    }

    /// `Σ w λ^{2σ} |û′|²`.
    pub fn velocity_norm_sq(&self, sigma: f64) -> Result<f64> {
        finite(weighted_sq_sum(&self.grid, &self.v, sigma), "velocity_norm_sq")
    }

    /// `(‖u‖_{Ḣ^{1+s}}, ‖u′‖_{Ḣ^s})`.
    pub fn pair_norm(&self, s: f64) -> Result<NormPair> {
        Ok(NormPair { pos: self.sobolev_norm_sq(1.0 + s)?.sqrt(), vel: self.velocity_norm_sq(s)?.sqrt() })
    }

    /// Rescales by one real factor so that the `Ḣ^{1+s} × Ḣ^s` size equals `target`.
    pub fn rescale_to(&self, target: f64, s: f64) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::InvalidArgument(format!("rescale target must be positive, got {target}")));
        }
        let current = self.pair_norm(s)?.combined();
        if current == 0.0 {
            return Err(Error::ZeroState);
        }
        if current == target {
            return Ok(self.clone());
        }
        Ok(self.scaled(target / current))
    }

    /// Keeps the modes with `λ ≤ cutoff`.
    pub fn truncate(&self, cutoff: f64) -> Self {
        let keep = self.grid.lambdas.partition_point(|&l| l <= cutoff);
        if keep == self.len() {
            return self.clone();
        }
        let grid = FrequencyGrid::from_sorted_unchecked(
            self.grid.lambdas[..keep].to_vec(),
            self.grid.weights[..keep].to_vec(),
        );
        Self {
            grid: Arc::new(grid),
            u: self.u[..keep].to_vec(),
            v: self.v[..keep].to_vec(),
            time: self.time,
        }
    }

    /// Supremum distance between amplitude vectors on a common grid.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch { expected: self.len(), found: other.len() });
        }
        Ok(self
            .u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

fn merge_modes(a: &Mode, b: &Mode) -> Mode {
    let w = a.weight + b.weight;
    let p = (a.weight * a.u.norm_sqr() + b.weight * b.u.norm_sqr()) / w;
    let q = (a.weight * a.v.norm_sqr() + b.weight * b.v.norm_sqr()) / w;
    let r = (a.weight * (a.u * b_conj(a.v)).re + b.weight * (b.u * b_conj(b.v)).re) / w;
    let (u, v) = if p > 0.0 {
        let su = p.sqrt();
        (Complex64::new(su, 0.0), Complex64::new(r / su, -(p * q - r * r).max(0.0).sqrt() / su))
    } else {
        (Complex64::new(0.0, 0.0), Complex64::new(q.sqrt(), 0.0))
    };
    Mode { lambda: a.lambda, weight: w, u, v }
}

fn b_conj(z: Complex64) -> Complex64 {
    z.conj()
}

fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn weighted_sq_sum(grid: &FrequencyGrid, amps: &[Complex64], sigma: f64) -> f64 {
    grid.lambdas
        .iter()
        .zip(&grid.weights)
        .zip(amps)
        .map(|((&l, &w), z)| w * l.powf(2.0 * sigma) * z.norm_sqr())
        .sum()
}

/// Two-shell data `û = c⁺ + c⁻`, `û′ = iλ(c⁺ − c⁻)`, so that the free flow is
/// `c⁺e^{iλt} + c⁻e^{−iλt}` in each shell. Unit weights.
pub fn build_two_mode(lambdas: [f64; 2], c_plus: [Complex64; 2], c_minus: [Complex64; 2]) -> Result<SpectralState> {
    if !(lambdas[0] > 0.0 && lambdas[1] > 0.0) || lambdas[0] == lambdas[1] {
        return Err(Error::InvalidArgument(format!(
            "two-mode data needs distinct positive frequencies, got {lambdas:?}"
        )));
    }
    let modes = (0..2)
        .map(|k| Mode {
            lambda: lambdas[k],
            weight: 1.0,
            u: c_plus[k] + c_minus[k],
            v: Complex64::new(0.0, lambdas[k]) * (c_plus[k] - c_minus[k]),
        })
        .collect();
    SpectralState::from_modes(modes, 0.0)
}

/// Parameters for [`build_random_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomDecay {
    pub modes: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub regularity: f64,
    pub margin: f64,
    pub seed: u64,
}

/// Seeded power-law data on a log-uniform grid:
/// `|û_k| = λ_k^{−(1+r)−m}`, `|û′_k| = λ_k^{−r−m}` with uniform random phases.
pub fn build_random_decay(p: &RandomDecay) -> Result<SpectralState> {
    if p.modes < 2 {
        return Err(Error::InvalidArgument("random data needs at least 2 modes".into()));
    }
    if !(p.margin >= 0.0 && p.margin.is_finite()) || !p.regularity.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "regularity must be finite and margin non-negative, got ({}, {})",
            p.regularity, p.margin
        )));
    }
    let grid = Arc::new(FrequencyGrid::log_uniform(p.modes, p.lambda_min, p.lambda_max)?);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let tau = std::f64::consts::TAU;
    let mut u = Vec::with_capacity(p.modes);
    let mut v = Vec::with_capacity(p.modes);
    for &l in grid.lambdas() {
        let pu: f64 = rng.random::<f64>() * tau;
        let pv: f64 = rng.random::<f64>() * tau;
        u.push(Complex64::from_polar(l.powf(-(1.0 + p.regularity) - p.margin), pu));
        v.push(Complex64::from_polar(l.powf(-p.regularity - p.margin), pv));
    }
    SpectralState::new(grid, u, v, 0.0)
}

#[derive(Serialize, Deserialize)]
struct ModeRecord {
    lambda: f64,
    weight: f64,
    u_re: f64,
    u_im: f64,
    v_re: f64,
    v_im: f64,
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    time: f64,
    modes: Vec<ModeRecord>,
}

impl Serialize for SpectralState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StateRecord {
            time: self.time,
            modes: self
                .modes()
                .map(|m| ModeRecord {
                    lambda: m.lambda,
                    weight: m.weight,
                    u_re: m.u.re,
                    u_im: m.u.im,
                    v_re: m.v.re,
                    v_im: m.v.im,
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpectralState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rec = StateRecord::deserialize(deserializer)?;
        let modes = rec
            .modes
            .into_iter()
            .map(|m| Mode {
                lambda: m.lambda,
                weight: m.weight,
                u: Complex64::new(m.u_re, m.u_im),
                v: Complex64::new(m.v_re, m.v_im),
            })
            .collect();
        SpectralState::from_modes(modes, rec.time).map_err(serde::de::Error::custom)
    }
}

/// Sorting helper for callers that keep their own frequency lists.
pub fn ascending(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single(lambda: f64, u: Complex64, v: Complex64) -> SpectralState {
        SpectralState::from_modes(vec![Mode { lambda, weight: 1.0, u, v }], 0.0).unwrap()
    }

    fn random(m: usize, seed: u64) -> SpectralState {
        build_random_decay(&RandomDecay {
            modes: m,
            lambda_min: 0.5,
            lambda_max: 20.0,
            regularity: 0.25,
            margin: 0.3,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn single_mode_norm() {
        let s = single(2.0, c(1.0, 0.0), c(0.0, 0.0));
        assert_eq!(s.sobolev_norm_sq(1.0).unwrap(), 4.0);
    }

    #[test]
    fn zero_state_norms() {
        let s = random(10, 1).scaled(0.0);
        assert_eq!(s.sobolev_norm_sq(1.3).unwrap(), 0.0);
        let p = s.pair_norm(0.5).unwrap();
        assert_eq!((p.pos, p.vel), (0.0, 0.0));
    }

    #[test]
    fn ascending_sum_matches_descending_oracle() {
        let s = random(100, 11);
        for sigma in [-0.5, 0.0, 0.25, 1.0, 1.25, 2.0] {
            let fast = s.sobolev_norm_sq(sigma).unwrap();
            let mut oracle = 0.0;
            for k in (0..s.len()).rev() {
                oracle += s.grid().weights()[k] * s.grid().lambdas()[k].powf(2.0 * sigma) * s.u()[k].norm_sqr();
            }
            assert!(((fast - oracle) / oracle).abs() < 1e-13, "sigma={sigma}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        let s = single(1e10, c(1.0, 0.0), c(1.0, 0.0));
        assert_eq!(s.sobolev_norm_sq(20.0), Err(Error::NonFinite("sobolev_norm_sq")));
    }

    #[test]
    fn pair_norm_single_mode() {
        let s = single(1.0, c(3.0, 0.0), c(0.0, 4.0));
        let p = s.pair_norm(0.0).unwrap();
        assert_eq!((p.pos, p.vel), (3.0, 4.0));
    }

    #[test]
    fn pair_norm_homogeneous() {
        let s = random(30, 3);
        let p = s.pair_norm(0.25).unwrap();
        for k in [-3.0, 0.5, 7.25] {
            let q = s.scaled(k).pair_norm(0.25).unwrap();
            assert!((q.pos - k.abs() * p.pos).abs() <= 1e-15 * q.pos.max(1.0));
            assert!((q.vel - k.abs() * p.vel).abs() <= 1e-15 * q.vel.max(1.0));
        }
    }

    #[test]
    fn rescale_doubles_amplitudes() {
        let s = single(1.0, c(1.2, 0.0), c(0.0, 1.6)); // pair norm 2
        let r = s.rescale_to(4.0, 0.0).unwrap();
        assert_eq!(r.u()[0], c(2.4, 0.0));
        assert_eq!(r.v()[0], c(0.0, 3.2));
    }

    #[test]
    fn rescale_identity_and_round_trip() {
        let s = random(40, 5);
        let n = s.pair_norm(0.25).unwrap().combined();
        assert_eq!(s.rescale_to(n, 0.25).unwrap(), s);
        for target in [1e-6, 0.03, 2.5] {
            let r = s.rescale_to(target, 0.25).unwrap();
            let back = r.pair_norm(0.25).unwrap().combined();
            assert!(((back - target) / target).abs() <= 1e-14);
        }
    }

    #[test]
    fn rescale_zero_state_fails() {
        let s = random(5, 1).scaled(0.0);
        assert_eq!(s.rescale_to(1.0, 0.0), Err(Error::ZeroState));
    }

    #[test]
    fn two_mode_values() {
        let half = c(0.5, 0.0);
        let s = build_two_mode([1.0, 3.0], [half, half], [half, half]).unwrap();
        assert_eq!(s.u()[0], c(1.0, 0.0));
        assert_eq!(s.v()[0], c(0.0, 0.0));
    }

    #[test]
    fn two_mode_rejects_equal_frequencies() {
        let one = c(1.0, 0.0);
        assert!(build_two_mode([2.0, 2.0], [one, one], [one, one]).is_err());
        assert!(build_two_mode([-1.0, 2.0], [one, one], [one, one]).is_err());
    }

    #[test]
    fn random_decay_is_deterministic() {
        assert_eq!(random(64, 9), random(64, 9));
        assert_ne!(random(64, 9), random(64, 10));
    }

    #[test]
    fn random_decay_rejects_bad_ranges() {
        let mut p = RandomDecay { modes: 8, lambda_min: 1.0, lambda_max: 10.0, regularity: 0.25, margin: 0.5, seed: 0 };
        p.lambda_max = 0.5;
        assert!(build_random_decay(&p).is_err());
        p.lambda_max = 10.0;
        p.modes = 1;
        assert!(build_random_decay(&p).is_err());
        p.modes = 8;
        p.margin = -0.1;
        assert!(build_random_decay(&p).is_err());
    }

    #[test]
    fn random_decay_norm_converges_under_refinement() {
        let norm = |m| {
            build_random_decay(&RandomDecay { modes: m, lambda_min: 1.0, lambda_max: 1e4, regularity: 0.25, margin: 0.55, seed: 4 })
                .unwrap()
                .pair_norm(0.25)
                .unwrap()
                .combined()
        };
        let (a, b) = (norm(512), norm(1024));
        assert!(((a - b) / b).abs() < 0.05, "{a} vs {b}");
    }

    #[test]
    fn zero_margin_norm_diverges_logarithmically() {
        let norm_sq = |lmax: f64| {
            build_random_decay(&RandomDecay { modes: 400, lambda_min: 1.0, lambda_max: lmax, regularity: 0.25, margin: 0.0, seed: 4 })
                .unwrap()
                .sobolev_norm_sq(1.25)
                .unwrap()
        };
        // With margin 0 the squared norm is the log-length of the band.
        let values: Vec<f64> = [1e1, 1e2, 1e3, 1e4].iter().map(|&l| norm_sq(l)).collect();
        for w in values.windows(2) {
            assert!(w[1] > w[0]);
            assert!((w[1] - w[0] - 10f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn truncate_identity_and_empty() {
        let s = random(20, 2);
        assert_eq!(s.truncate(1e9), s);
        let e = s.truncate(0.1);
        assert!(e.is_empty());
        assert_eq!(e.sobolev_norm_sq(1.0).unwrap(), 0.0);
        assert_eq!(e.pair_norm(0.25).unwrap().combined(), 0.0);
    }

    #[test]
    fn truncate_monotone_in_cutoff() {
        let s = random(50, 6);
        let mut prev = -1.0;
        for k in 0..10 {
            let cutoff = 0.5 * 1.5f64.powi(k);
            let n = s.truncate(cutoff).sobolev_norm_sq(1.0).unwrap();
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn duplicate_frequencies_merge() {
        let g = FrequencyGrid::new(vec![2.0, 1.0, 2.0], vec![0.5, 1.0, 0.25]).unwrap();
        assert_eq!(g.lambdas(), &[1.0, 2.0]);
        assert_eq!(g.weights(), &[1.0, 0.75]);

        let a = Mode { lambda: 2.0, weight: 1.0, u: c(1.0, 2.0), v: c(-0.5, 0.3) };
        let b = Mode { lambda: 2.0, weight: 3.0, u: c(0.2, -1.0), v: c(0.7, 0.1) };
        let s = SpectralState::from_modes(vec![a, b], 0.0).unwrap();
        assert_eq!(s.len(), 1);
        let (u, v, w) = (s.u()[0], s.v()[0], s.grid().weights()[0]);
        let close = |x: f64, y: f64| (x - y).abs() < 1e-14;
        assert!(close(w * u.norm_sqr(), a.u.norm_sqr() + 3.0 * b.u.norm_sqr()));
        assert!(close(w * v.norm_sqr(), a.v.norm_sqr() + 3.0 * b.v.norm_sqr()));
        assert!(close(w * (u * v.conj()).re, (a.u * a.v.conj()).re + 3.0 * (b.u * b.v.conj()).re));
    }

    #[test]
    fn grid_rejects_invalid_input() {
        assert!(FrequencyGrid::new(vec![], vec![]).is_err());
        assert!(FrequencyGrid::new(vec![1.0], vec![0.0]).is_err());
        assert!(FrequencyGrid::new(vec![0.0], vec![1.0]).is_err());
        assert!(FrequencyGrid::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn json_layout_and_round_trip() {
        let s = random(4, 8).with_time(0.5);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with("{\"time\":0.5,\"modes\":[{\"lambda\":0.5,\"weight\":"));
        let back: SpectralState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
