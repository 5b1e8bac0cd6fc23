//! The nonlinear construction: iterate `ℳW = V + σ|u_W̃|²` from
//! `W₀ = V + σ|A|²`, then assemble `(u, λ)`.
//!
//! Every iterate is stored as `W_m = V + N_m` with the nonlinear part `N_m`
//! kept separately, so successive differences are free of rounding noise
//! from `V`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{
    linear_eigenpair, periodic_eigenfunction, projection_distance, BlochEigenpair, FreeSpectrum,
};
use crate::context::ModelContext;
use crate::error::{Error, Result};
use crate::lattice::{complex_pair, LatticeIndex, PeriodicFunction, QuasiMomentum};
use crate::nonres::{check_quasimomentum, exponents, k1_threshold, NonResonanceReport};

/// One application of `ℳ`.
#[derive(Clone, Debug)]
pub struct MapOutput {
    /// `ℳW`.
    pub w_next: PeriodicFunction,
    /// `σ|ψ|²` after support truncation.
    pub nonlinear: PeriodicFunction,
    pub pair: BlochEigenpair,
    pub psi: PeriodicFunction,
    /// Star norm dropped by the support cap.
    pub tail: f64,
    /// Mean of the input `W`.
    pub mean: f64,
}

/// `ℳW`: shift `W` to zero mean, take the tracked eigenpair of
/// `H₀ + W̃`, and return `V + σ|ψ|²` with `ψ_q = A E_{j+q,j}`.
pub fn apply_map(
    w: &PeriodicFunction,
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
) -> Result<MapOutput> {
    let (wt, mean) = w.zero_mean_shift()?;
    let pair = linear_eigenpair(&wt, t, j, ctx)?;
    let psi = periodic_eigenfunction(&pair, ctx.amplitude);
    let full = psi.abs_squared().scale(Complex64::new(ctx.sigma, 0.0));
    let (nonlinear, tail) = full.truncate_support(ctx.support_cap());
    let defect = nonlinear.hermitian_defect();
    if defect > 1e-13 * nonlinear.star_norm() {
        return Err(Error::Contract(format!(
            "iterated potential lost realness (defect {defect:e})"
        )));
    }
    Ok(MapOutput {
        w_next: ctx.potential.add(&nonlinear),
        nonlinear,
        pair,
        psi,
        tail,
        mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub m: usize,
    /// `‖W_m − W_{m−1}‖₊`.
    pub dw: f64,
    /// Eigenvalue assembled from the eigenpair of `W̃_{m−1}`.
    pub lambda: f64,
    /// `λ_m − p_j^{2l}`.
    pub lambda_shift: f64,
    /// `‖E_{m−1} − E_{m−2}‖₁`; against the free projection at `m = 1`.
    pub de: f64,
    /// `‖ψ_{m−1} − ψ_{m−2}‖₊`; against `A` at `m = 1`.
    pub dpsi: f64,
    pub tail: f64,
    /// `‖W̃_m − V‖₊`.
    pub drift: f64,
    /// `‖N_m‖₊`, the scale of the nonlinear part.
    pub nonlinear_norm: f64,
    pub series_tail: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedPointTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub k: f64,
    pub sigma_a2: f64,
    /// `8|σ||A|²k^{−(2l−n−δ)}`.
    pub contraction_factor: f64,
    pub k1: f64,
    /// Any record whose support tail exceeded `tol_tail`.
    pub tail_flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub n: usize,
    pub l: u32,
    pub j: LatticeIndex,
    pub t: QuasiMomentum,
    #[serde(with = "complex_pair")]
    pub amplitude: Complex64,
    pub sigma: f64,
    pub k: f64,
    /// Periodic part of `u = ψ e^{i⟨p_j(t),x⟩}`.
    pub psi: PeriodicFunction,
    /// `ũ` with `ψ = A(1 + ũ)`.
    pub u_tilde: PeriodicFunction,
    pub lambda: f64,
    /// `λ − p_j^{2l}(t)`.
    pub lambda_shift: f64,
    pub w_fixed: PeriodicFunction,
    pub e_jj: f64,
    pub residual: f64,
    pub certified: bool,
    pub iterations: usize,
}

impl Solution {
    /// Restores dimension information lost in JSON for empty maps.
    pub fn normalize(mut self) -> Result<Self> {
        let n = self.n;
        self.psi = self.psi.with_dim(n)?;
        self.u_tilde = self.u_tilde.with_dim(n)?;
        self.w_fixed = self.w_fixed.with_dim(n)?;
        Ok(self)
    }

    /// `‖ũ‖₊`.
    pub fn u_tilde_norm(&self) -> f64 {
        self.u_tilde.star_norm()
    }
}

/// `λ = λ_W̃ + σ|A|² E_jj`.
pub fn assemble_lambda(lambda_w: f64, e_jj: f64, sigma: f64, a: Complex64) -> f64 {
    lambda_w + sigma * a.norm_sqr() * e_jj
}

/// Remainder of `λ − p_j^{2l} − σ|A|²` against the scale
/// `(k^{2l−n−δ} + σ|A|²)k^{−2γ₂}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticCheck {
    pub remainder: f64,
    pub scale: f64,
}

pub fn asymptotic_check(sol: &Solution, ctx: &ModelContext) -> AsymptoticCheck {
    let g2 = 2.0 * exponents(ctx).gamma2;
    let remainder = sol.lambda_shift - ctx.sigma_a2();
    let scale = (ctx.radius(sol.k) + ctx.sigma_a2().abs()) * sol.k.powf(-g2);
    AsymptoticCheck { remainder, scale }
}

/// Iterates `ℳ` to a fixed point and assembles the solution.
pub fn iterate(
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
) -> Result<(Solution, FixedPointTrace)> {
    iterate_gated(t, j, ctx, true)
}

/// Runs the iteration near an admitted point without re-checking the gate there.
pub(crate) fn iterate_gated(
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
    gate: bool,
) -> Result<(Solution, FixedPointTrace)> {
    ctx.validate()?;
    let fs = FreeSpectrum::new(t, *j, ctx.l)?;
    let k = fs.k();
    ctx.check_smallness(k)?;
    let report = check_quasimomentum(t, j, ctx)?;
    if gate && !report.admits(ctx.gate) {
        return Err(Error::Resonance(resonance_message(&report)));
    }
    let exps = exponents(ctx);
    let k1 = k1_threshold(ctx.v_star(), &exps, ctx.k0);
    let sa2 = ctx.sigma_a2();
    let factor = 8.0 * sa2.abs() * ctx.radius(k).recip();
    let n = ctx.n;

    let mut trace = FixedPointTrace {
        k,
        sigma_a2: sa2,
        contraction_factor: factor,
        k1,
        ..Default::default()
    };
    let mut nl = PeriodicFunction::constant(n, Complex64::new(sa2, 0.0));
    let mut prev_psi = PeriodicFunction::constant(n, ctx.amplitude);
    let mut prev_col: BTreeMap<LatticeIndex, Complex64> =
        [(*j, Complex64::new(1.0, 0.0))].into_iter().collect();
    let tol = ctx.tol_fp();

    for m in 1..=ctx.max_iterations {
        let out = apply_map(&ctx.potential.add(&nl), t, j, ctx)?;
        let dw = out.nonlinear.sub(&nl).star_norm();
        let e_jj = out.pair.e_jj();
        let lambda_shift = out.pair.lambda_shift + sa2 * e_jj;
        let record = IterationRecord {
            m,
            dw,
            lambda: fs.level() + lambda_shift,
            lambda_shift,
            de: projection_distance(&out.pair.proj_column, &prev_col, j),
            dpsi: out.psi.sub(&prev_psi).star_norm(),
            tail: out.tail,
            drift: out.nonlinear.zero_mean_shift()?.0.star_norm(),
            nonlinear_norm: out.nonlinear.star_norm(),
            series_tail: out.pair.tail_bound,
        };
        trace.tail_flagged |= out.tail > ctx.tol_tail;
        trace.records.push(record);

        if dw <= tol {
            trace.converged = true;
            let certified = factor < 1.0 && k > k1 && report.pass_all();
            let sol = build_solution(ctx, &fs, t, out, lambda_shift, e_jj, certified, m);
            return Ok((sol, trace));
        }
        prev_psi = out.psi;
        prev_col = out.pair.proj_column;
        nl = out.nonlinear;
    }
    Err(Error::NotConverged {
        trace: Box::new(trace),
    })
}

#[allow(clippy::too_many_arguments)]
fn build_solution(
    ctx: &ModelContext,
    fs: &FreeSpectrum,
    t: &QuasiMomentum,
    out: MapOutput,
    lambda_shift: f64,
    e_jj: f64,
    certified: bool,
    iterations: usize,
) -> Solution {
    let a = ctx.amplitude;
    let n = ctx.n;
    let u_tilde = if a.norm() > 0.0 {
        out.psi
            .scale(1.0 / a)
            .sub(&PeriodicFunction::constant(n, Complex64::new(1.0, 0.0)))
    } else {
        PeriodicFunction::zero(n)
    };
    let mut sol = Solution {
        n,
        l: ctx.l,
        j: fs.j(),
        t: t.clone(),
        amplitude: a,
        sigma: ctx.sigma,
        k: fs.k(),
        psi: out.psi,
        u_tilde,
        lambda: fs.level() + lambda_shift,
        lambda_shift,
        w_fixed: out.w_next,
        e_jj,
        residual: 0.0,
        certified,
        iterations,
    };
    sol.residual = residual(&sol, &ctx.potential);
    sol
}

pub(crate) fn resonance_message(r: &NonResonanceReport) -> String {
    format!(
        "quasimomentum rejected at level {} (k = {}): in {} ({:e}), in-a {} ({:e}), main {} ({:e})",
        r.j, r.k, r.pass_in, r.margin_in, r.pass_in_a, r.margin_in_a, r.pass_main, r.margin_main
    )
}

/// Fourier coefficients of `(−Δ)ˡu + Vu + σ|u|²u − λu`, divided by
/// `e^{i⟨p_j,x⟩}`: `(p_{j+q}^{2l} − λ)ψ_q + (Vψ)_q + σ(|ψ|²ψ)_q`.
pub fn residual_function(
    psi: &PeriodicFunction,
    j: &LatticeIndex,
    t: &QuasiMomentum,
    l: u32,
    lambda_shift: f64,
    sigma: f64,
    potential: &PeriodicFunction,
) -> Result<PeriodicFunction> {
    let fs = FreeSpectrum::new(t, *j, l)?;
    let n = psi.dim();
    let mut f = PeriodicFunction::from_coeffs(
        n,
        psi.iter()
            .map(|(q, c)| (*q, c * (fs.gap(&(*j + *q)) - lambda_shift))),
    );
    f = f.add(&potential.multiply(psi));
    if sigma != 0.0 {
        f = f.add(
            &psi.abs_squared()
                .multiply(psi)
                .scale(Complex64::new(sigma, 0.0)),
        );
    }
    Ok(f)
}

/// Star norm of the residual divided by `|A|`.
pub fn residual(sol: &Solution, potential: &PeriodicFunction) -> f64 {
    let f = residual_function(
        &sol.psi,
        &sol.j,
        &sol.t,
        sol.l,
        sol.lambda_shift,
        sol.sigma,
        potential,
    )
    .map(|f| f.star_norm())
    .unwrap_or(f64::NAN);
    let a = sol.amplitude.norm();
    if a > 0.0 {
        f / a
    } else {
        f
    }
}

/// Outcome of comparing a measured quantity with a bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Held,
    Violated,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub m: usize,
    pub value: Option<f64>,
    pub bound: f64,
    pub status: BoundStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub k: f64,
    pub k1: f64,
    pub factor: f64,
    /// `k > k₁`, so the explicit bounds are claimed.
    pub in_certified_regime: bool,
    /// Every `dW` vanished: the start was already a fixed point.
    pub exact_fixed_point: bool,
    /// `dW_{m+1}/dW_m` against the contraction factor.
    pub ratios: Vec<StepCheck>,
    /// `dW_m` against `4|σ||A|²‖V‖₊k^{−γ₂}(|σ||A|²k^{−γ₀})^{m−1}`.
    pub dw_bounds: Vec<StepCheck>,
    /// `‖E_{m−1} − E_{m−2}‖₁` against
    /// `8|σ||A|²‖V‖₊k^{−(2l−n−δ)−γ₂}(|σ||A|²k^{−γ₀})^{m−2}`.
    pub de_bounds: Vec<StepCheck>,
    /// `‖W̃_m − V‖₊` against `8|σ||A|²‖V‖₊k^{−γ₂}`.
    pub drift_bounds: Vec<StepCheck>,
    /// Measured `dW` decays: every resolved ratio is below one.
    pub geometric_decay: bool,
    /// `‖W̃_m − V‖₊` stays bounded by its first value up to round-off.
    pub drift_bounded: bool,
}

impl ContractionReport {
    /// No applicable comparison was violated.
    pub fn all_held(&self) -> bool {
        [&self.ratios, &self.dw_bounds, &self.de_bounds, &self.drift_bounds]
            .iter()
            .all(|v| v.iter().all(|c| c.status != BoundStatus::Violated))
    }
}

/// Compares a trace against the contraction bounds.
///
/// Differences below `64·eps·‖N‖₊` are round-off and make a ratio
/// meaningless; such steps are reported as not applicable. Below `k₁` the
/// bounds are not claimed at all and only geometric decay is checked.
pub fn contraction_report(trace: &FixedPointTrace, ctx: &ModelContext) -> ContractionReport {
    let k = trace.k;
    let exps = exponents(ctx);
    let sa2 = trace.sigma_a2.abs();
    let vs = ctx.v_star();
    let q = sa2 * k.powf(-exps.gamma0);
    let certified = k > trace.k1;
    let recs = &trace.records;
    let floor = |r: &IterationRecord| 64.0 * f64::EPSILON * r.nonlinear_norm.max(f64::MIN_POSITIVE);
    let status = |ok: bool| {
        if !certified {
            BoundStatus::NotApplicable
        } else if ok {
            BoundStatus::Held
        } else {
            BoundStatus::Violated
        }
    };

    let mut ratios = Vec::new();
    let mut decay = true;
    for w in recs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let resolved = a.dw > floor(a) && b.dw > floor(b);
        let value = resolved.then(|| b.dw / a.dw);
        if let Some(r) = value {
            decay &= r < 1.0;
        }
        ratios.push(StepCheck {
            m: b.m,
            value,
            bound: trace.contraction_factor,
            status: match value {
                Some(r) => status(r <= trace.contraction_factor),
                None => BoundStatus::NotApplicable,
            },
        });
    }

    let dw_bounds = recs
        .iter()
        .map(|r| {
            let bound = 4.0 * sa2 * vs * k.powf(-exps.gamma2) * q.powi(r.m as i32 - 1);
            StepCheck {
                m: r.m,
                value: Some(r.dw),
                bound,
                status: status(r.dw <= bound),
            }
        })
        .collect();

    let de_bounds = recs
        .iter()
        .filter(|r| r.m >= 2)
        .map(|r| {
            let bound = 8.0 * sa2 * vs * k.powf(-(2.0 * ctx.l as f64 - ctx.n as f64 - ctx.delta))
                * k.powf(-exps.gamma2)
                * q.powi(r.m as i32 - 2);
            let resolved = r.de > 64.0 * f64::EPSILON;
            StepCheck {
                m: r.m,
                value: Some(r.de),
                bound,
                status: if resolved {
                    status(r.de <= bound)
                } else {
                    BoundStatus::NotApplicable
                },
            }
        })
        .collect();

    let drift_bound = 8.0 * sa2 * vs * k.powf(-exps.gamma2);
    let drift_bounds = recs
        .iter()
        .map(|r| StepCheck {
            m: r.m,
            value: Some(r.drift),
            bound: drift_bound,
            status: status(r.drift <= drift_bound),
        })
        .collect();
    let first = recs.first().map_or(0.0, |r| r.drift);
    let drift_bounded = recs
        .iter()
        .all(|r| r.drift <= first * (1.0 + 1e-6) + floor(r));

    ContractionReport {
        k,
        k1: trace.k1,
        factor: trace.contraction_factor,
        in_certified_regime: certified,
        exact_fixed_point: recs.iter().all(|r| r.dw == 0.0),
        ratios,
        dw_bounds,
        de_bounds,
        drift_bounds,
        geometric_decay: decay,
        drift_bounded,
    }
}
