use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::PeriodicFunction;

/// Which linear solver produces the per-iteration eigenpair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Contour-integral perturbation series.
    Series,
    /// Dense diagonalization on a lattice window.
    Diag,
}

/// Which non-resonance conditions a quasimomentum must satisfy before the
/// solver accepts it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResonanceGate {
    /// Gap, slack-gap and product conditions.
    Strict,
    /// Only the gap condition: the tracked level is the single free level
    /// inside the contour. Used where the slack conditions are out of reach
    /// (low order `l` at moderate `k`).
    Isolated,
}

/// Problem constants and algorithm parameters.
///
/// Optional fields resolve to `k`- or `V`-dependent defaults through the
/// accessor methods.
#[derive(Clone, Debug)]
pub struct ModelContext {
    pub n: usize,
    pub l: u32,
    pub sigma: f64,
    pub amplitude: Complex64,
    pub potential: PeriodicFunction,
    pub delta: f64,
    pub beta: f64,
    /// Half-width of the dense diagonalization window; default `⌈2k⌉`.
    pub lin_window: Option<usize>,
    /// Support cap for iterated potentials; default `(8 + r_max)·R₀`.
    pub support_cap: Option<f64>,
    pub series_order: usize,
    pub quadrature_nodes: usize,
    /// Fixed-point stopping tolerance; default `1e-12·‖V‖₊`.
    pub tol_fp: Option<f64>,
    /// Root tolerance relative to the target eigenvalue.
    pub tol_root_rel: f64,
    pub tol_tail: f64,
    pub seed: u64,
    pub k0: f64,
    pub max_iterations: usize,
    pub backend: Backend,
    pub gate: ResonanceGate,
}

impl ModelContext {
    /// Context with default algorithm parameters, `σ = 0` and `A = 1`.
    pub fn new(n: usize, l: u32, potential: PeriodicFunction) -> Result<Self> {
        let ctx = ModelContext {
            n,
            l,
            sigma: 0.0,
            amplitude: Complex64::new(1.0, 0.0),
            potential,
            delta: 0.05,
            beta: 0.4,
            lin_window: None,
            support_cap: None,
            series_order: 6,
            quadrature_nodes: 64,
            tol_fp: None,
            tol_root_rel: 1e-9,
            tol_tail: 1e-12,
            seed: 42,
            k0: 2.0,
            max_iterations: 50,
            backend: Backend::Series,
            gate: ResonanceGate::Strict,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn with_nonlinearity(mut self, sigma: f64, amplitude: Complex64) -> Self {
        self.sigma = sigma;
        self.amplitude = amplitude;
        self
    }

    /// Checks every structural invariant of the parameters.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if !(2..=crate::lattice::MAX_DIM).contains(&n) {
            return Err(Error::param("n", format!("dimension {n} not in 2..=4")));
        }
        if self.l == 0 {
            return Err(Error::param("l", "order must be positive"));
        }
        if 4 * self.l as usize <= n + 1 {
            return Err(Error::param("l", format!("4l > n+1 fails for l={}, n={n}", self.l)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("beta", "0 < beta < 1 fails"));
        }
        let cap = (n as f64 - 1.0) * (1.0 - self.beta);
        if !(self.delta > 0.0 && 2.0 * self.delta < cap) {
            return Err(Error::param(
                "delta",
                format!(
                    "0 < 2·delta < (n-1)(1-beta) fails: 2·delta = {}, (n-1)(1-beta) = {cap}",
                    2.0 * self.delta
                ),
            ));
        }
        if self.potential.dim() != n && !self.potential.is_zero() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.potential.dim(),
            });
        }
        if self.potential.mean() != Complex64::new(0.0, 0.0) {
            return Err(Error::param("potential", "potential must have zero mean"));
        }
        let defect = self.potential.hermitian_defect();
        if defect > 1e-14 * self.potential.star_norm().max(1.0) {
            return Err(Error::param(
                "potential",
                format!("potential is not real-valued (v_-q != conj v_q by {defect:e})"),
            ));
        }
        if self.series_order < 2 {
            return Err(Error::param("series_order", "must be at least 2"));
        }
        if self.quadrature_nodes < 8 {
            return Err(Error::param("quadrature_nodes", "must be at least 8"));
        }
        if !self.sigma.is_finite() || !self.amplitude.norm().is_finite() {
            return Err(Error::param("sigma", "sigma and amplitude must be finite"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be positive"));
        }
        for (name, v) in [
            ("tol_root", self.tol_root_rel),
            ("tol_tail", self.tol_tail),
            ("k0", self.k0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if let Some(t) = self.tol_fp {
            if !(t >= 0.0) {
                return Err(Error::param("tol_fp", "must be non-negative"));
            }
        }
        Ok(())
    }

    /// `σ|A|²`.
    pub fn sigma_a2(&self) -> f64 {
        self.sigma * self.amplitude.norm_sqr()
    }

    pub fn v_star(&self) -> f64 {
        self.potential.star_norm()
    }

    /// Support radius `R₀` of the potential.
    pub fn r0(&self) -> f64 {
        self.potential.support_radius()
    }

    /// Contour radius `k^{2l−n−δ}`.
    pub fn radius(&self, k: f64) -> f64 {
        k.powf(2.0 * self.l as f64 - self.n as f64 - self.delta)
    }

    pub fn lin_window(&self, k: f64) -> usize {
        self.lin_window.unwrap_or((2.0 * k).ceil() as usize)
    }

    pub fn support_cap(&self) -> f64 {
        self.support_cap
            .unwrap_or((8.0 + self.series_order as f64) * self.r0())
    }

    pub fn tol_fp(&self) -> f64 {
        self.tol_fp.unwrap_or(1e-12 * self.v_star())
    }

    /// Checks `|σ||A|² < k^{γ₀−δ}` at the active `k`.
    pub fn check_smallness(&self, k: f64) -> Result<()> {
        let g0 = 2.0 * self.l as f64 - self.n as f64 - 2.0 * self.delta;
        let bound = k.powf(g0 - self.delta);
        if self.sigma_a2().abs() >= bound {
            return Err(Error::param(
                "sigma",
                format!(
                    "|sigma||A|^2 = {:e} is not below k^(gamma0-delta) = {bound:e}",
                    self.sigma_a2().abs()
                ),
            ));
        }
        Ok(())
    }
}
