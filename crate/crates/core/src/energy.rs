//! Energy functionals at regularity `s`: the unmodified energy, the
//! second-order correction `∫∫ A F E_{ξ1ξ2}`, the normal-form term `E_n`,
//! the asymmetry term `E_A`, their sum, and the analytic derivative of the
//! unmodified energy.
//!
//! Every functional is written once over [`Scalar`], so the same code gives
//! values on `f64` and exact time derivatives along the flow on [`Dual`].
//! Sums over `min(λ_j, λ_k)` use the sorted grid: `min(λ_j, λ_k)` is the
//! frequency at index `min(j, k)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{pairwise_sum, Dual, Scalar};
use crate::error::{Error, Result};
use crate::nonlinearity::{profile_from_masses, FilteredProfile, NonlinearitySpec};
use crate::spectral::SpectralState;

/// Relative switch to the diagonal limit of the divided-difference kernel.
pub const KERNEL_TOL: f64 = 1e-8;

/// Below this relative gap the kernel is evaluated through `expm1`.
const NEAR_DIAGONAL: f64 = 0.1;

/// Rows per rayon task in the `b`/`c` double sum; below one chunk the sum
/// runs on the caller's thread.
const ROW_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub s: f64,
    pub e_unmodified: f64,
    pub e_second_order: f64,
    pub e_normal_form: f64,
    pub e_asym: f64,
    pub e_total: f64,
}

impl EnergyBreakdown {
    fn assemble(s: f64, e_unmodified: f64, e_second_order: f64, e_normal_form: f64, e_asym: f64) -> Self {
        Self {
            s,
            e_unmodified,
            e_second_order,
            e_normal_form,
            e_asym,
            e_total: e_unmodified + e_second_order + e_normal_form + e_asym,
        }
    }

    /// Sum of the three corrections.
    pub fn corrections(&self) -> f64 {
        self.e_second_order + self.e_normal_form + self.e_asym
    }
}

/// `(x^s − y^s)/(x − y)` for `x, y > 0`.
pub fn divided_difference(x: f64, y: f64, s: f64, tol: f64) -> f64 {
    kernel_from_powers(x, y, x.powf(s), y.powf(s), s, tol)
}

#[inline]
fn kernel_from_powers(x: f64, y: f64, xs: f64, ys: f64, s: f64, tol: f64) -> f64 {
    let gap = (x - y).abs();
    let top = x.max(y);
    if gap < tol * top {
        let mean = 0.5 * (x.sqrt() + y.sqrt());
        return s * mean.powf(2.0 * s - 2.0);
    }
    if gap < NEAR_DIAGONAL * top {
        let l = (x / y).ln();
        return (ys / y) * (s * l).exp_m1() / l.exp_m1();
    }
    (xs - ys) / (x - y)
}

pub fn pair_coefficients(lambda1: f64, lambda2: f64, s: f64, tol: f64) -> Result<PairCoefficients> {
    if !(lambda1 > 0.0 && lambda2 > 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pair coefficients need positive frequencies, got ({lambda1}, {lambda2})"
        )));
    }
    if !s.is_finite() || !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need finite s and tol > 0, got ({s}, {tol})")));
    }
    let (x, y) = (lambda1 * lambda1, lambda2 * lambda2);
    let a = -0.125 * x * y * (x.powf(s) + y.powf(s));
    let b = -0.25 * x * y * divided_difference(x, y, s, tol);
    Ok(PairCoefficients { a, b, c: -b })
}

/// Per-shell data shared by all functionals.
pub(crate) struct Shells<T> {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    /// `|û|²`, `|û′|²`, `Re(û ū′)`.
    pub p: Vec<T>,
    pub q: Vec<T>,
    pub r: Vec<T>,
}

impl<T: Scalar> Shells<T> {
    fn len(&self) -> usize {
        self.w.len()
    }

    /// `w λ² |û|²`.
    fn masses(&self) -> Vec<T> {
        (0..self.len()).map(|k| self.p[k] * (self.w[k] * self.x[k])).collect()
    }
}

pub(crate) fn shells(state: &SpectralState) -> Shells<f64> {
    let g = state.grid();
    Shells {
        w: g.weights().to_vec(),
        x: g.lambdas().iter().map(|l| l * l).collect(),
        p: state.u().iter().map(|z| z.norm_sqr()).collect(),
        q: state.v().iter().map(|z| z.norm_sqr()).collect(),
        r: state.u().iter().zip(state.v()).map(|(u, v)| (u * v.conj()).re).collect(),
    }
}

/// Shells carrying their exact time derivatives along the flow
/// `û″ = −(1 + N(‖u‖²_{Ḣ¹})) λ² û`.
pub(crate) fn shells_with_rates(state: &SpectralState, n: &NonlinearitySpec) -> Shells<Dual> {
    let base = shells(state);
    let c_tot: f64 = (0..base.len()).map(|k| base.w[k] * base.x[k] * base.p[k]).sum();
    let omega = 1.0 + n.eval(c_tot);
    let m = base.len();
    let mut p = Vec::with_capacity(m);
    let mut q = Vec::with_capacity(m);
    let mut r = Vec::with_capacity(m);
    for k in 0..m {
        let ox = omega * base.x[k];
        p.push(Dual::new(base.p[k], 2.0 * base.r[k]));
        q.push(Dual::new(base.q[k], -2.0 * ox * base.r[k]));
        r.push(Dual::new(base.r[k], base.q[k] - ox * base.p[k]));
    }
    Shells { w: base.w, x: base.x, p, q, r }
}

fn powers(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v.powf(s)).collect()
}

fn unmodified_t<T: Scalar>(sh: &Shells<T>, n: &NonlinearitySpec, s: f64) -> T {
    let xs = powers(&sh.x, s);
    let mut pos = T::zero();
    let mut vel = T::zero();
    let mut c = T::zero();
    for k in 0..sh.len() {
        let wx = sh.w[k] * sh.x[k];
        c += sh.p[k] * wx;
        pos += sh.p[k] * (wx * xs[k]);
        vel += sh.q[k] * (sh.w[k] * xs[k]);
    }
    (n.eval_t(c) + 1.0) * pos * 0.5 + vel * 0.5
}

/// `Σ_{j,k} g_{min(j,k)} f_j h_k` in one pass.
fn min_kernel_sum<T: Scalar>(g: &[T], f: &[T], h: &[T]) -> T {
    let m = g.len();
    let mut f_above = T::zero();
    let mut h_above = T::zero();
    let mut total = T::zero();
    for i in (0..m).rev() {
        total += g[i] * (f[i] * h[i] + f[i] * h_above + h[i] * f_above);
        f_above += f[i];
        h_above += h[i];
    }
    total
}

fn second_order_a_t<T: Scalar>(sh: &Shells<T>, g: &[T], xs: &[f64]) -> T {
    let m = sh.len();
    let f: Vec<T> = (0..m).map(|k| sh.p[k] * (sh.w[k] * sh.x[k] * xs[k])).collect();
    let h: Vec<T> = (0..m).map(|k| sh.p[k] * (sh.w[k] * sh.x[k])).collect();
    min_kernel_sum(g, &f, &h) * -0.25
}

/// `Σ_{j,k} w_j w_k g_{min}[a P_j P_k + b P_j Q_k + c R_j R_k]` for a
/// per-index weight `g`, which is `A F` for the modified energy.
fn second_order_t<T: Scalar>(sh: &Shells<T>, g: &[T], s: f64) -> T {
    let m = sh.len();
    let xs = powers(&sh.x, s);
    let a_part = second_order_a_t(sh, g, &xs);

    let row = |j: usize| -> T {
        let (xj, xsj) = (sh.x[j], xs[j]);
        let (pj, qj, rj) = (sh.p[j], sh.q[j], sh.r[j]);
        let diag = (pj * qj - rj * rj) * (sh.w[j] * kernel_from_powers(xj, xj, xsj, xsj, s, KERNEL_TOL) * xj);
        let mut acc = diag;
        for k in j + 1..m {
            let kern = kernel_from_powers(xj, sh.x[k], xsj, xs[k], s, KERNEL_TOL);
            let cross = pj * sh.q[k] + sh.p[k] * qj - rj * sh.r[k] * 2.0;
            acc += cross * (kern * sh.x[k] * sh.w[k]);
        }
        acc * g[j] * (-0.25 * xj * sh.w[j])
    };
    let rows: Vec<T> = if m >= 2 * ROW_CHUNK {
        (0..m).into_par_iter().with_min_len(ROW_CHUNK).map(row).collect()
    } else {
        (0..m).map(row).collect()
    };
    a_part + pairwise_sum(&rows)
}

fn normal_form_t<T: Scalar>(sh: &Shells<T>, prof: &FilteredProfile<T>, s: f64) -> T {
    let m = sh.len();
    let xs = powers(&sh.x, s);
    let a = &prof.a_values;
    let fv = &prof.f_values;
    let f1: Vec<T> = (0..m).map(|k| sh.p[k] * (sh.w[k] * sh.x[k])).collect();
    let f1s: Vec<T> = (0..m).map(|k| f1[k] * xs[k]).collect();

    // λ3 ≤ min(λ1, λ2): inner mass G(m) = Σ_{l≤m} A_l w x_l P_l.
    let mut g = Vec::with_capacity(m);
    let mut run = T::zero();
    for k in 0..m {
        run += a[k] * f1[k];
        g.push(a[k] * fv[k] * run);
    }
    let term1 = min_kernel_sum(&g, &f1, &f1s) * -0.25;

    // λ1 ≤ min(λ2, λ3) and λ1 ≤ λ3 ≤ λ2, from suffix sums.
    let mut s1s = T::zero();
    let mut sa = T::zero();
    let mut t = T::zero();
    let mut u = T::zero();
    let mut term2 = T::zero();
    let mut term3 = T::zero();
    for i in (0..m).rev() {
        s1s += f1s[i];
        sa += a[i] * f1[i];
        t += f1[i];
        u += a[i] * f1[i] * t;
        let af = a[i] * fv[i];
        term2 += af * f1[i] * s1s * sa;
        term3 += af * f1s[i] * u;
    }
    term1 - term2 * 0.25 + term3 * 0.25
}

fn asym_t<T: Scalar>(sh: &Shells<T>, prof: &FilteredProfile<T>, s: f64) -> T {
    let xs = powers(&sh.x, s);
    let a = &prof.a_values;
    let mut lower = T::zero();
    let mut lower_a = T::zero();
    let mut total = T::zero();
    for k in 0..sh.len() {
        let f1 = sh.p[k] * (sh.w[k] * sh.x[k]);
        let f1s = f1 * xs[k];
        lower += f1s;
        lower_a += a[k] * f1s;
        total += f1 * (a[k] * lower - lower_a);
    }
    total * -0.5
}

fn corrections_weight<T: Scalar>(prof: &FilteredProfile<T>) -> Vec<T> {
    prof.a_values.iter().zip(&prof.f_values).map(|(&a, &f)| a * f).collect()
}

fn breakdown_t<T: Scalar>(
    sh: &Shells<T>,
    n: &NonlinearitySpec,
    prof: &FilteredProfile<T>,
    s: f64,
) -> [T; 4] {
    let unmod = unmodified_t(sh, n, s);
    if n.is_zero() {
        return [unmod, T::zero(), T::zero(), T::zero()];
    }
    let g = corrections_weight(prof);
    let second = second_order_t(sh, &g, s);
    let normal = normal_form_t(sh, prof, s);
    let asym = if n.model_constant().is_some() { T::zero() } else { asym_t(sh, prof, s) };
    [unmod, second, normal, asym]
}

fn profile_of<T: Scalar>(sh: &Shells<T>, n: &NonlinearitySpec) -> Result<FilteredProfile<T>> {
    profile_from_masses(&sh.masses(), n)
}

fn check_finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `½(1 + N(‖u‖²_{Ḣ¹})) Σ w λ^{2+2s}|û|² + ½ Σ w λ^{2s}|û′|²`.
pub fn unmodified_energy(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<f64> {
    check_finite(unmodified_t(&shells(state), n, s), "unmodified_energy")
}

pub fn second_order_term(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<f64> {
    let sh = shells(state);
    let prof = profile_of(&sh, n)?;
    check_finite(second_order_t(&sh, &corrections_weight(&prof), s), "second_order_term")
}

/// The separable `a`-coefficient part of [`second_order_term`], which
/// collapses to a single min-kernel sum.
pub fn second_order_separable_term(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<f64> {
    let sh = shells(state);
    let prof = profile_of(&sh, n)?;
    let xs = powers(&sh.x, s);
    check_finite(second_order_a_t(&sh, &corrections_weight(&prof), &xs), "second_order_separable_term")
}

pub fn normal_form_term(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<f64> {
    let sh = shells(state);
    let prof = profile_of(&sh, n)?;
    check_finite(normal_form_t(&sh, &prof, s), "normal_form_term")
}

pub fn asym_term(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<f64> {
    let sh = shells(state);
    let prof = profile_of(&sh, n)?;
    if n.model_constant().is_some() {
        return Ok(0.0);
    }
    check_finite(asym_t(&sh, &prof, s), "asym_term")
}

pub fn modified_energy(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<EnergyBreakdown> {
    Ok(modified_energies(state, n, &[s])?.remove(0))
}

/// [`modified_energy`] at several regularities, sharing one profile.
pub fn modified_energies(state: &SpectralState, n: &NonlinearitySpec, s_list: &[f64]) -> Result<Vec<EnergyBreakdown>> {
    let sh = shells(state);
    let prof = profile_of(&sh, n)?;
    s_list
        .iter()
        .map(|&s| {
            let [u, b, e, a] = breakdown_t(&sh, n, &prof, s);
            let out = EnergyBreakdown::assemble(s, u, b, e, a);
            check_finite(out.e_total, "modified_energy")?;
            Ok(out)
        })
        .collect()
}

/// Exact time derivative of every part of the modified energy along the
/// flow, computed by forward-mode differentiation of the functionals.
pub fn modified_energy_rate(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<EnergyBreakdown> {
    let sh = shells_with_rates(state, n);
    let prof = profile_of(&sh, n)?;
    let [u, b, e, a] = breakdown_t(&sh, n, &prof, s);
    let out = EnergyBreakdown::assemble(s, u.eps, b.eps, e.eps, a.eps);
    check_finite(out.e_total, "modified_energy_rate")?;
    Ok(out)
}

/// `d/dt` of the unmodified energy, split by frequency as
/// `Σ_{j,k} w_j w_k λ_j^{2+2s} A(λ_k) λ_k² |û_j|² Re(û_k ū′_k)` plus the
/// `N″` remainder. The remainder pairs `Re(û_l ū′_l)` with the strictly
/// higher shells `k > l`, weighted by the secant
/// `(N′(C_k) − N′(C_{k−1}))/(C_k − C_{k−1})`, which makes the split exact.
pub fn unmodified_derivative_analytic(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> Result<f64> {
    let sh = shells(state);
    let prof = profile_of(&sh, n)?;
    let m = sh.len();
    let mut pos = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    let mut lower_r = 0.0;
    let mut c_prev = 0.0;
    for k in 0..m {
        let wx = sh.w[k] * sh.x[k];
        pos += wx * sh.x[k].powf(s) * sh.p[k];
        first += prof.a_values[k] * wx * sh.r[k];
        let c_k = prof.c_prefix[k];
        second += lower_r * wx * sh.p[k] * n.secant_d1(c_prev, c_k);
        lower_r += wx * sh.r[k];
        c_prev = c_k;
    }
    check_finite(pos * (first + second), "unmodified_derivative_analytic")
}

/// `Σ_{j,k} A·E^s_{ξ1ξ2}` for constant `A`, without the `F` weight.
pub fn model_correction(state: &SpectralState, a: f64, s: f64) -> f64 {
    let sh = shells(state);
    second_order_t(&sh, &vec![a; sh.len()], s)
}

/// The two integrals that the time derivative of [`model_correction`]
/// equals along the model flow:
/// `−A Σ λ_1^{2+2s} λ_2² |û_1|² Re(û_2 ū′_2)
///  − ½A² Σ (λ_1^{2s} − λ_2^{2s}) λ_1² λ_2² λ_3² |û_1|² Re(û_2 ū′_2) |û_3|²`.
pub fn model_correction_rate_identity(state: &SpectralState, a: f64, s: f64) -> f64 {
    let sh = shells(state);
    let (mut c, mut p1s, mut r1, mut r1s) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..sh.len() {
        let wx = sh.w[k] * sh.x[k];
        let xs = sh.x[k].powf(s);
        c += wx * sh.p[k];
        p1s += wx * xs * sh.p[k];
        r1 += wx * sh.r[k];
        r1s += wx * xs * sh.r[k];
    }
    -a * p1s * r1 - 0.5 * a * a * c * (p1s * r1 - c * r1s)
}

/// Model-case smallness gate `δ = (8(1+s₀)|A|)^{−1/2}` with
/// `s₀ = max(s_max, ¼)`.
pub fn model_gate(a: f64, s_max: f64) -> f64 {
    if a == 0.0 {
        return f64::INFINITY;
    }
    let s0 = s_max.max(0.25);
    1.0 / (8.0 * (1.0 + s0) * a.abs()).sqrt()
}

/// Largest `Ḣ¹ × L²` size of the given data shape at which
/// `1 + N(C) ≥ ½` on the whole grid and the corrections stay within half
/// of the unmodified energy for every `s`, found by bisection in `log δ`.
pub fn general_gate(shape: &SpectralState, n: &NonlinearitySpec, s_list: &[f64]) -> Result<f64> {
    if n.is_zero() {
        return Ok(f64::INFINITY);
    }
    let ok = |delta: f64| -> Result<bool> {
        let st = shape.rescale_to(delta, 0.0)?;
        let sh = shells(&st);
        let prof = match profile_of(&sh, n) {
            Ok(p) => p,
            Err(Error::Degenerate { .. }) => return Ok(false),
            Err(e) => return Err(e),
        };
        if prof.min_wave_speed_sq < 0.5 {
            return Ok(false);
        }
        for &s in s_list {
            let [u, b, e, a] = breakdown_t(&sh, n, &prof, s);
            let corr = b + e + a;
            if !(corr.abs() <= 0.5 * u) {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let (mut lo, mut hi) = (1e-8f64, 1.0f64);
    if !ok(lo)? {
        return Ok(0.0);
    }
    while ok(hi)? {
        lo = hi;
        hi *= 4.0;
        if hi > 1e6 {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-10 {
            break;
        }
    }
    Ok(lo)
}

/// The gate for a run: closed form in the model case, bisection otherwise.
pub fn smallness_gate(shape: &SpectralState, n: &NonlinearitySpec, s_list: &[f64]) -> Result<f64> {
    match n.model_constant() {
        Some(a) => Ok(model_gate(a, s_list.iter().cloned().fold(0.0, f64::max))),
        None => general_gate(shape, n, s_list),
    }
}

/// Direct-summation oracles for the fast paths. Profiles are rebuilt point
/// by point from the filtered definitions and regions are tested on the
/// frequencies themselves.
pub mod brute {
    use super::*;
    use crate::nonlinearity::{correction_f, filtered_a};

    pub struct PointProfile {
        pub a: Vec<f64>,
        pub f: Vec<f64>,
    }

    pub fn point_profile(state: &SpectralState, n: &NonlinearitySpec) -> Result<PointProfile> {
        let lambdas = state.grid().lambdas();
        let a = lambdas.iter().map(|&l| filtered_a(state, n, l)).collect();
        let f = lambdas.iter().map(|&l| correction_f(state, n, l)).collect::<Result<_>>()?;
        Ok(PointProfile { a, f })
    }

    struct Data {
        lam: Vec<f64>,
        w: Vec<f64>,
        p: Vec<f64>,
        q: Vec<f64>,
        r: Vec<f64>,
    }

    fn data(state: &SpectralState) -> Data {
        Data {
            lam: state.grid().lambdas().to_vec(),
            w: state.grid().weights().to_vec(),
            p: state.u().iter().map(|z| z.norm_sqr()).collect(),
            q: state.v().iter().map(|z| z.norm_sqr()).collect(),
            r: state.u().iter().zip(state.v()).map(|(u, v)| u.re * v.re + u.im * v.im).collect(),
        }
    }

    fn lower(d: &Data, j: usize, k: usize) -> usize {
        if d.lam[j] <= d.lam[k] {
            j
        } else {
            k
        }
    }

    /// Only the `a` coefficient of the second-order term.
    pub fn second_order_a_part(state: &SpectralState, prof: &PointProfile, s: f64) -> Result<f64> {
        let d = data(state);
        let m = d.lam.len();
        let mut total = 0.0;
        for j in 0..m {
            for k in 0..m {
                let pc = pair_coefficients(d.lam[j], d.lam[k], s, KERNEL_TOL)?;
                let i = lower(&d, j, k);
                total += d.w[j] * d.w[k] * prof.a[i] * prof.f[i] * pc.a * d.p[j] * d.p[k];
            }
        }
        Ok(total)
    }

    pub fn second_order(state: &SpectralState, prof: &PointProfile, s: f64) -> Result<f64> {
        let d = data(state);
        let m = d.lam.len();
        let mut total = 0.0;
        for j in 0..m {
            for k in 0..m {
                let pc = pair_coefficients(d.lam[j], d.lam[k], s, KERNEL_TOL)?;
                let i = lower(&d, j, k);
                let dens = pc.a * d.p[j] * d.p[k] + pc.b * d.p[j] * d.q[k] + pc.c * d.r[j] * d.r[k];
                total += d.w[j] * d.w[k] * prof.a[i] * prof.f[i] * dens;
            }
        }
        Ok(total)
    }

    pub fn normal_form(state: &SpectralState, prof: &PointProfile, s: f64) -> f64 {
        let d = data(state);
        let m = d.lam.len();
        let mut total = 0.0;
        for i1 in 0..m {
            for i2 in 0..m {
                for i3 in 0..m {
                    let (l1, l2, l3) = (d.lam[i1], d.lam[i2], d.lam[i3]);
                    let (x1, x2, x3) = (l1 * l1, l2 * l2, l3 * l3);
                    let mass = d.w[i1] * d.w[i2] * d.w[i3] * d.p[i1] * d.p[i2] * d.p[i3];
                    let mn = lower(&d, i1, i2);
                    if l3 <= l1 && l3 <= l2 {
                        total -= 0.25 * prof.a[i3] * prof.a[mn] * prof.f[mn] * x1 * x2.powf(1.0 + s) * x3 * mass;
                    }
                    if l1 <= l2 && l1 <= l3 {
                        total -= 0.25 * prof.a[i3] * prof.a[mn] * prof.f[i1] * x1 * x2.powf(1.0 + s) * x3 * mass;
                    }
                    if l1 <= l3 && l3 <= l2 {
                        total += 0.25 * prof.a[i3] * prof.a[mn] * prof.f[i1] * x1.powf(1.0 + s) * x2 * x3 * mass;
                    }
                }
            }
        }
        total
    }

    /// The model-case normal-form term with constant `A`, region by region
    /// with the `F` weights written out as in the model definition.
    pub fn normal_form_model(state: &SpectralState, a: f64, s: f64) -> Result<f64> {
        let n = NonlinearitySpec::model(a);
        let prof = point_profile(state, &n)?;
        let d = data(state);
        let m = d.lam.len();
        let mass: Vec<f64> = (0..m).map(|k| d.w[k] * d.lam[k].powi(2) * d.p[k]).collect();
        let below = |r: f64| -> f64 { (0..m).filter(|&l| d.lam[l] <= r).map(|l| mass[l]).sum() };
        let above = |r: f64, e: f64| -> f64 {
            (0..m).filter(|&l| d.lam[l] >= r).map(|l| mass[l] * d.lam[l].powf(2.0 * e)).sum()
        };
        let mut t1 = 0.0;
        let mut t2 = 0.0;
        let mut t3 = 0.0;
        for i1 in 0..m {
            let l1 = d.lam[i1];
            for i2 in 0..m {
                let l2 = d.lam[i2];
                let mn = if l1 <= l2 { i1 } else { i2 };
                t1 += prof.f[mn] * l2.powf(2.0 * s) * mass[i1] * mass[i2] * below(l1.min(l2));
                if l1 <= l2 {
                    // ξ3 between ξ1 and ξ2
                    let mid: f64 = (0..m).filter(|&l| l1 <= d.lam[l] && d.lam[l] <= l2).map(|l| mass[l]).sum();
                    t3 += prof.f[i1] * l1.powf(2.0 * s) * mass[i1] * mass[i2] * mid;
                }
            }
            t2 += prof.f[i1] * mass[i1] * above(l1, s) * above(l1, 0.0);
        }
        Ok(0.25 * a * a * (-t1 - t2 + t3))
    }

    pub fn asym(state: &SpectralState, prof: &PointProfile, s: f64) -> f64 {
        let d = data(state);
        let m = d.lam.len();
        let mut total = 0.0;
        for j in 0..m {
            for k in 0..m {
                if d.lam[j] <= d.lam[k] {
                    let (xj, xk) = (d.lam[j].powi(2), d.lam[k].powi(2));
                    total -= 0.5 * d.w[j] * d.w[k] * xj.powf(1.0 + s) * xk * (prof.a[k] - prof.a[j]) * d.p[j] * d.p[k];
                }
            }
        }
        total
    }

    /// `N′(‖u‖²_{Ḣ¹}) · Σ w λ^{2+2s}|û|² · 2Σ w λ² Re(û ū′) / 2`, the chain rule
    /// applied to the unmodified energy before any frequency split.
    pub fn unmodified_derivative(state: &SpectralState, n: &NonlinearitySpec, s: f64) -> f64 {
        let d = data(state);
        let m = d.lam.len();
        let c: f64 = (0..m).map(|k| d.w[k] * d.lam[k].powi(2) * d.p[k]).sum();
        let pos: f64 = (0..m).map(|k| d.w[k] * d.lam[k].powf(2.0 + 2.0 * s) * d.p[k]).sum();
        let flux: f64 = (0..m).map(|k| d.w[k] * d.lam[k].powi(2) * d.r[k]).sum();
        n.d1(c) * pos * flux
    }
}
