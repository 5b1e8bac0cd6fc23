//! Exponent bookkeeping and non-resonance tests for quasimomenta.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::FreeSpectrum;
use crate::context::{ModelContext, ResonanceGate};
use crate::error::{Error, Result};
use crate::lattice::{decompose, lattice_ball, LatticeIndex, QuasiMomentum};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `γ₂ > 0` and `γ₁ > 0`.
    pub valid: bool,
}

pub fn exponents(ctx: &ModelContext) -> Exponents {
    let (l, n) = (ctx.l as f64, ctx.n as f64);
    let (b, d) = (ctx.beta, ctx.delta);
    let gamma2 = 0.5 * (4.0 * l - n - 1.0 - b * (n - 1.0) - 2.0 * d);
    let gamma0 = 2.0 * l - n - 2.0 * d;
    let gamma1 = 4.0 * l - 2.0 - b * (n - 1.0) - d;
    Exponents {
        gamma0,
        gamma1,
        gamma2,
        valid: gamma2 > 0.0 && gamma1 > 0.0,
    }
}

/// `max((16‖V‖₊)^{1/γ₂}, k₀)`; infinite when `γ₂ ≤ 0`.
pub fn k1_threshold(v_star: f64, exps: &Exponents, k0: f64) -> f64 {
    if exps.gamma2 <= 0.0 {
        return f64::INFINITY;
    }
    (16.0 * v_star).powf(1.0 / exps.gamma2).max(k0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonResonanceReport {
    pub k: f64,
    pub t: QuasiMomentum,
    pub j: LatticeIndex,
    pub radius: f64,
    pub delta: f64,
    pub beta: f64,
    pub pass_in: bool,
    pub margin_in: f64,
    pub pass_in_a: bool,
    pub margin_in_a: f64,
    pub pass_main: bool,
    pub margin_main: f64,
    /// `(i, q)` attaining the smallest product in the main condition.
    pub worst_pair: Option<(LatticeIndex, LatticeIndex)>,
    /// Smallest `|p_i^{2l} − p_j^{2l}|` over `i ≠ j`, in units of the radius.
    pub isolation: f64,
}

impl NonResonanceReport {
    pub fn pass_all(&self) -> bool {
        self.pass_in && self.pass_in_a && self.pass_main
    }

    pub fn admits(&self, gate: ResonanceGate) -> bool {
        match gate {
            ResonanceGate::Strict => self.pass_all(),
            ResonanceGate::Isolated => self.pass_in,
        }
    }
}

/// Evaluates the gap, slack-gap and product conditions at `(t, j)`.
///
/// Levels are enumerated on the ball `|p_i| ≤ 2k`; outside it
/// `|p_i^{2l} − k^{2l}| ≥ (4^l − 1)k^{2l}`, which exceeds `2ρ` for all `k ≥ 1`
/// and every product threshold once `d_i ≥ k^{2l}`.
pub fn check_quasimomentum(
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
) -> Result<NonResonanceReport> {
    let fs = FreeSpectrum::new(t, *j, ctx.l)?;
    let k = fs.k();
    if k <= 0.0 {
        return Err(Error::param("k", "momentum must be nonzero"));
    }
    let rho = ctx.radius(k);
    let exps = exponents(ctx);
    let ball = lattice_ball(t.as_slice(), 2.0 * k);

    let mut min_gap = f64::INFINITY;
    for a in &ball {
        if a != j {
            min_gap = min_gap.min(fs.gap(a).abs());
        }
    }
    let margin_in = min_gap - rho;
    // Δ_j = 0 exactly, so the inner condition holds with margin ρ/2.
    let margin_in_a = (min_gap - 2.0 * rho).min(0.5 * rho);

    let dist = |a: &LatticeIndex| -> f64 {
        if a == j {
            rho
        } else {
            (fs.gap(a).abs() - rho).abs()
        }
    };
    let qs: Vec<LatticeIndex> = {
        let kb = k.powf(ctx.beta);
        lattice_ball(&vec![0.0; ctx.n], kb)
            .into_iter()
            .filter(|q| !q.is_zero() && q.norm() < kb)
            .collect()
    };
    let mut by_dist: Vec<(f64, LatticeIndex)> = ball.iter().map(|a| (dist(a), *a)).collect();
    by_dist.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    // Every factor is at least the smallest in-ball distance (out-of-ball
    // levels are farther still), which bounds the remaining products.
    let d_floor = by_dist.first().map_or(rho, |x| x.0);
    let mut min_prod = f64::INFINITY;
    let mut worst = None;
    for (da, a) in &by_dist {
        if da * d_floor >= min_prod {
            break;
        }
        for q in &qs {
            let p = da * dist(&(*a + *q));
            if p < min_prod {
                min_prod = p;
                worst = Some((*a, *q));
            }
        }
    }
    let threshold = k.powf(2.0 * exps.gamma2);
    let margin_main = if qs.is_empty() {
        f64::INFINITY
    } else {
        200.0 * min_prod - threshold
    };

    Ok(NonResonanceReport {
        k,
        t: t.clone(),
        j: *j,
        radius: rho,
        delta: ctx.delta,
        beta: ctx.beta,
        pass_in: margin_in > 0.0,
        margin_in,
        pass_in_a: margin_in_a > 0.0,
        margin_in_a,
        pass_main: margin_main > 0.0,
        margin_main,
        worst_pair: worst,
        isolation: min_gap / rho,
    })
}

/// One sampled direction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Draw {
    pub index: u64,
    pub nu: Vec<f64>,
    pub report: NonResonanceReport,
}

/// Uniform direction on the unit sphere for draw `index`.
pub fn sample_direction(n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = crate::lattice::norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Draws `count` directions `ν`, checks `kν`, and returns every draw plus the
/// fraction admitted by the context's gate.
pub fn sample_nonresonant(k: f64, ctx: &ModelContext, count: usize) -> Result<(Vec<Draw>, f64)> {
    if !(k >= 2.0) {
        return Err(Error::param("k", format!("sampling needs k >= 2, got {k}")));
    }
    let draws: Vec<Draw> = (0..count as u64)
        .into_par_iter()
        .map(|index| {
            let nu = sample_direction(ctx.n, ctx.seed, index);
            let kvec: Vec<f64> = nu.iter().map(|x| k * x).collect();
            let (j, t) = decompose(&kvec);
            check_quasimomentum(&t, &j, ctx).map(|report| Draw { index, nu, report })
        })
        .collect::<Result<_>>()?;
    let pass = draws.iter().filter(|d| d.report.admits(ctx.gate)).count();
    Ok((draws, pass as f64 / count.max(1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PeriodicFunction;

    fn ctx(l: u32) -> ModelContext {
        ModelContext::new(2, l, PeriodicFunction::cosine(2, 1.0)).unwrap()
    }

    #[test]
    fn exponent_values() {
        let e = exponents(&ctx(3));
        assert!((e.gamma2 - 4.25).abs() < 1e-12);
        assert!((e.gamma0 - 3.9).abs() < 1e-12);
        assert!((e.gamma1 - 9.55).abs() < 1e-12);
        assert!(e.valid);
        let e = exponents(&ctx(1));
        assert!((e.gamma2 - 0.25).abs() < 1e-12);
        assert!((e.gamma0 + 0.1).abs() < 1e-12);
        assert!((e.gamma1 - 1.55).abs() < 1e-12);

        let mut c = ctx(1);
        c.beta = 0.99;
        c.delta = 0.05;
        assert!(!exponents(&c).valid);
    }

    #[test]
    fn k1_values() {
        let e = exponents(&ctx(3));
        assert!((k1_threshold(4.0, &e, 1.0) - 64f64.powf(1.0 / 4.25)).abs() < 1e-12);
        assert!((k1_threshold(4.0, &e, 1.0) - 2.66).abs() < 0.01);
        let e1 = exponents(&ctx(1));
        assert!((k1_threshold(4.0, &e1, 1.0) / 1.6777216e7 - 1.0).abs() < 1e-9);
        assert_eq!(k1_threshold(4.0, &e, 50.0), 50.0);
    }

    #[test]
    fn self_intersection_fails_gap() {
        // t = (0.5, 0): p_0 = (0.5, 0) and p_{(-1,0)} = (-0.5, 0) coincide in energy.
        let t = QuasiMomentum::new(vec![0.5, 0.0]).unwrap();
        let r = check_quasimomentum(&t, &LatticeIndex::new(&[3, 0]), &ctx(1)).unwrap();
        assert!(!r.pass_in);
        assert!(r.margin_in <= -r.radius + 1e-9);
    }

    #[test]
    fn report_ignores_potential() {
        let t = QuasiMomentum::new(vec![0.31, 0.77]).unwrap();
        let j = LatticeIndex::new(&[6, -7]);
        let a = check_quasimomentum(&t, &j, &ctx(3)).unwrap();
        let mut c = ctx(3);
        c.potential = PeriodicFunction::cosine(2, 5.0);
        assert_eq!(a, check_quasimomentum(&t, &j, &c).unwrap());
    }

    #[test]
    fn sampling_is_reproducible_and_guarded() {
        let c = ctx(3);
        let (a, fa) = sample_nonresonant(10.0, &c, 20).unwrap();
        let (b, fb) = sample_nonresonant(10.0, &c, 20).unwrap();
        assert_eq!(fa, fb);
        assert!(a.iter().zip(&b).all(|(x, y)| x.nu == y.nu));
        assert!(sample_nonresonant(1.5, &c, 10).is_err());
        for d in &a {
            assert!((crate::lattice::norm(&d.nu) - 1.0).abs() < 1e-14);
        }
    }
}
