//! Isoenergetic surfaces: for a direction `ν`, the radius `κ` with
//! `λ(κν, A) = λ`, written as `κ = k̃ + h` around `k̃ = (λ − σ|A|²)^{1/2l}`.
//!
//! The deviation `h` can be far below one ulp of `k̃` (about `1e-16` at
//! `l = 3`, `k = 24`), so the root is solved for `h` itself. The free part
//! `(k̃ + h)^{2l} − k̃^{2l}` is expanded binomially and the offset
//! `λ − σ|A|² − k̃^{2l}` is evaluated in double-double arithmetic.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::ModelContext;
use crate::error::{Error, Result};
use crate::fixed_point::iterate_gated;
use crate::lattice::{decompose, norm, LatticeIndex, QuasiMomentum};
use crate::nonres::{check_quasimomentum, sample_direction};

const MAX_ROOT_STEPS: usize = 80;
const MONOTONE_SAMPLES: usize = 6;
const MAX_SHRINK: usize = 20;

/// `k̃ = (λ − σ|A|²)^{1/2l}`.
pub fn ktilde(lambda: f64, sigma: f64, a: Complex64, l: u32) -> Result<f64> {
    let base = lambda - sigma * a.norm_sqr();
    if !(base > 0.0) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} does not exceed sigma|A|^2 = {}",
            sigma * a.norm_sqr()
        )));
    }
    Ok(base.powf(1.0 / (2.0 * l as f64)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoSurfaceSample {
    pub nu: Vec<f64>,
    pub kappa: Option<f64>,
    pub h: Option<f64>,
    pub root_residual: Option<f64>,
    /// Direction admitted by the non-resonance gate at `k̃ν`.
    pub in_b: bool,
    pub j: LatticeIndex,
    pub t: QuasiMomentum,
    pub evaluations: usize,
    /// `ok`, `excluded`, or a failure description.
    pub status: String,
    pub grad_h: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd {
        hi: s,
        lo: (a - (s - bb)) + (b - bb),
    }
}

fn dd_mul(a: Dd, b: Dd) -> Dd {
    let p = a.hi * b.hi;
    let e = a.hi.mul_add(b.hi, -p);
    let lo = e + (a.hi * b.lo + a.lo * b.hi);
    let s = p + lo;
    Dd {
        hi: s,
        lo: lo - (s - p),
    }
}

fn dd_sub(a: Dd, b: Dd) -> Dd {
    let s = two_sum(a.hi, -b.hi);
    let lo = s.lo + a.lo - b.lo;
    let hi = s.hi + lo;
    Dd {
        hi,
        lo: lo - (hi - s.hi),
    }
}

/// `(λ − s) − k^{2l}` to about 30 significant digits of the inputs.
fn level_offset(lambda: f64, s: f64, k: f64, l: u32) -> f64 {
    let mut p = Dd { hi: 1.0, lo: 0.0 };
    let kk = Dd { hi: k, lo: 0.0 };
    for _ in 0..2 * l {
        p = dd_mul(p, kk);
    }
    let target = two_sum(lambda, -s);
    let d = dd_sub(target, p);
    d.hi + d.lo
}

/// `(k + h)^{2l} − k^{2l}` by the binomial expansion.
fn free_increment(k: f64, h: f64, l: u32) -> f64 {
    let m = 2 * l as i32;
    let mut sum = 0.0;
    let mut binom = 1.0;
    for i in 1..=m {
        binom *= (m - i + 1) as f64 / i as f64;
        sum += binom * k.powi(m - i) * h.powi(i);
    }
    sum
}

struct Problem<'a> {
    ctx: &'a ModelContext,
    nu: &'a [f64],
    k: f64,
    offset: f64,
    evaluations: usize,
}

impl Problem<'_> {
    /// `λ(κν) − λ` at `κ = k̃ + h`.
    fn eval(&mut self, h: f64) -> Result<f64> {
        self.evaluations += 1;
        let kvec: Vec<f64> = self.nu.iter().map(|x| (self.k + h) * x).collect();
        let (j, t) = decompose(&kvec);
        let (sol, _) = iterate_gated(&t, &j, self.ctx, false)?;
        Ok(free_increment(self.k, h, self.ctx.l) + (sol.lambda_shift - self.ctx.sigma_a2())
            - self.offset)
    }

    /// Bracket `±half` (doubled at most twice), monotone check, then Illinois.
    fn bracketed_root(&mut self, half: f64, tol: f64) -> Result<(f64, f64)> {
        let mut half = half;
        let mut bracket = None;
        for _ in 0..3 {
            let (fl, fr) = (self.eval(-half)?, self.eval(half)?);
            if fl <= 0.0 && fr >= 0.0 {
                bracket = Some((-half, fl, half, fr));
                break;
            }
            half *= 2.0;
        }
        let Some((mut lo, mut flo, mut hi, mut fhi)) = bracket else {
            return Err(Error::RootNotFound(format!(
                "no sign change of lambda(kappa nu) - lambda within k~ +- {:e} along {:?}",
                half / 2.0,
                self.nu
            )));
        };

        let mut prev = flo;
        for i in 1..MONOTONE_SAMPLES {
            let h = lo + (hi - lo) * i as f64 / MONOTONE_SAMPLES as f64;
            let f = self.eval(h)?;
            if f <= prev {
                return Err(Error::RootNotFound(format!(
                    "lambda(kappa nu) is not increasing on the bracket along {:?}",
                    self.nu
                )));
            }
            prev = f;
        }

        // Illinois variant of regula falsi.
        let mut side = 0i8;
        let mut h = 0.0;
        let mut fh = f64::INFINITY;
        for _ in 0..MAX_ROOT_STEPS {
            let next = if fhi != flo {
                (lo * fhi - hi * flo) / (fhi - flo)
            } else {
                0.5 * (lo + hi)
            };
            let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            let step = (next - h).abs();
            h = next;
            fh = self.eval(h)?;
            if fh == 0.0 || step <= 1e-15 * h.abs() || hi - lo <= 1e-15 * h.abs() {
                break;
            }
            if fh < 0.0 {
                lo = h;
                flo = fh;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = h;
                fhi = fh;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
        }
        if !(fh.abs() < tol) {
            return Err(Error::RootNotFound(format!(
                "root residual {:e} above tolerance {tol:e} along {:?}",
                fh.abs(),
                self.nu
            )));
        }
        Ok((h, fh))
    }
}

/// Solves `λ(κν, A) = λ` for `κ` along the unit direction `ν`.
pub fn kappa_solve(lambda: f64, a: Complex64, nu: &[f64], ctx: &ModelContext) -> Result<IsoSurfaceSample> {
    if nu.len() != ctx.n {
        return Err(Error::DimensionMismatch {
            expected: ctx.n,
            found: nu.len(),
        });
    }
    if (norm(nu) - 1.0).abs() > 1e-12 {
        return Err(Error::param("nu", "direction must be a unit vector"));
    }
    let mut ctx = ctx.clone();
    ctx.amplitude = a;
    let ctx = &ctx;
    let k = ktilde(lambda, ctx.sigma, a, ctx.l)?;
    let kvec: Vec<f64> = nu.iter().map(|x| k * x).collect();
    let (j, t) = decompose(&kvec);
    let report = check_quasimomentum(&t, &j, ctx)?;
    let mut sample = IsoSurfaceSample {
        nu: nu.to_vec(),
        kappa: None,
        h: None,
        root_residual: None,
        in_b: report.admits(ctx.gate),
        j,
        t,
        evaluations: 0,
        status: "excluded".into(),
        grad_h: None,
    };
    if !sample.in_b {
        return Ok(sample);
    }

    let mut prob = Problem {
        ctx,
        nu,
        k,
        offset: level_offset(lambda, ctx.sigma_a2(), k, ctx.l),
        evaluations: 0,
    };
    let tol = ctx.tol_root_rel * lambda.abs();
    let base = k.powf(-(ctx.n as f64) + 1.0 - 2.0 * ctx.delta);

    // At desk k the nominal half-width can carry a free level inside the
    // contour somewhere on the bracket; retry on a narrower one.
    let mut half = base;
    let mut outcome = prob.bracketed_root(half, tol);
    for _ in 1..MAX_SHRINK {
        if !matches!(outcome, Err(Error::Resonance(_))) {
            break;
        }
        half *= 0.25;
        outcome = prob.bracketed_root(half, tol);
    }
    let (h, fh) = outcome?;
    let kappa_vec: Vec<f64> = nu.iter().map(|x| (k + h) * x).collect();
    let (j, t) = decompose(&kappa_vec);
    sample.j = j;
    sample.t = t;
    sample.kappa = Some(k + h);
    sample.h = Some(h);
    sample.root_residual = Some(fh.abs());
    sample.evaluations = prob.evaluations;
    sample.status = "ok".into();
    Ok(sample)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceStats {
    pub lambda: f64,
    pub ktilde: f64,
    pub samples: usize,
    pub admitted: usize,
    pub admitted_fraction: f64,
    pub solved: usize,
    pub failed: usize,
    pub max_abs_h: f64,
    pub mean_abs_h: f64,
    pub max_root_residual: f64,
}

/// Solves along `count` seeded directions.
pub fn sample_surface(
    lambda: f64,
    a: Complex64,
    count: usize,
    ctx: &ModelContext,
) -> Result<(Vec<IsoSurfaceSample>, SurfaceStats)> {
    let k = ktilde(lambda, ctx.sigma, a, ctx.l)?;
    let samples: Vec<IsoSurfaceSample> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let nu = sample_direction(ctx.n, ctx.seed, i);
            kappa_solve(lambda, a, &nu, ctx).or_else(|e| {
                let (j, t) = decompose(&nu.iter().map(|x| k * x).collect::<Vec<_>>());
                if matches!(e, Error::InvalidParameter { .. } | Error::DimensionMismatch { .. }) {
                    return Err(e);
                }
                Ok(IsoSurfaceSample {
                    nu,
                    kappa: None,
                    h: None,
                    root_residual: None,
                    in_b: true,
                    j,
                    t,
                    evaluations: 0,
                    status: format!("failed: {e}"),
                    grad_h: None,
                })
            })
        })
        .collect::<Result<_>>()?;

    let solved: Vec<&IsoSurfaceSample> = samples.iter().filter(|s| s.h.is_some()).collect();
    let admitted = samples.iter().filter(|s| s.in_b).count();
    let hs: Vec<f64> = solved.iter().map(|s| s.h.unwrap().abs()).collect();
    let stats = SurfaceStats {
        lambda,
        ktilde: k,
        samples: count,
        admitted,
        admitted_fraction: admitted as f64 / count.max(1) as f64,
        solved: solved.len(),
        failed: admitted - solved.len(),
        max_abs_h: hs.iter().copied().fold(0.0, f64::max),
        mean_abs_h: if hs.is_empty() {
            0.0
        } else {
            hs.iter().sum::<f64>() / hs.len() as f64
        },
        max_root_residual: solved
            .iter()
            .map(|s| s.root_residual.unwrap())
            .fold(0.0, f64::max),
    };
    Ok((samples, stats))
}

/// Solved samples of a planar surface ordered by polar angle.
pub fn angular_sweep(samples: &[IsoSurfaceSample]) -> Vec<(f64, &IsoSurfaceSample)> {
    let mut out: Vec<(f64, &IsoSurfaceSample)> = samples
        .iter()
        .filter(|s| s.nu.len() == 2 && s.kappa.is_some())
        .map(|s| (s.nu[1].atan2(s.nu[0]), s))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Orthonormal basis of the tangent space at the unit vector `nu`.
pub fn tangent_frame(nu: &[f64]) -> Vec<Vec<f64>> {
    let n = nu.len();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs()));
    for s in axes {
        let mut v: Vec<f64> = (0..n).map(|i| if i == s { 1.0 } else { 0.0 }).collect();
        for b in std::iter::once(nu).chain(frame.iter().map(|f| f.as_slice())) {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let r = norm(&v);
        if r > 1e-8 {
            frame.push(v.iter().map(|x| x / r).collect());
        }
        if frame.len() == n - 1 {
            break;
        }
    }
    frame
}

/// Central differences of `h` along an orthonormal tangent frame at `ν`.
pub fn h_gradient(lambda: f64, a: Complex64, nu: &[f64], step: f64, ctx: &ModelContext) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(nu.len() - 1);
    for tau in tangent_frame(nu) {
        let h_at = |sign: f64| -> Result<f64> {
            let v: Vec<f64> = nu.iter().zip(&tau).map(|(x, t)| x + sign * step * t).collect();
            let r = norm(&v);
            let v: Vec<f64> = v.iter().map(|x| x / r).collect();
            let s = kappa_solve(lambda, a, &v, ctx)?;
            s.h.ok_or_else(|| Error::Domain(format!("neighbouring direction {v:?} lies in a hole")))
        };
        let hp = h_at(1.0)?;
        let hm = h_at(-1.0)?;
        // The perturbed direction is at angle atan(step) from ν.
        grad.push((hp - hm) / (2.0 * step.atan()));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::PeriodicFunction;

    #[test]
    fn ktilde_examples() {
        let a = Complex64::new(1.0, 0.0);
        assert_eq!(ktilde(100.0, 0.0, a, 1).unwrap(), 10.0);
        assert!((ktilde(100.001, 0.001, a, 1).unwrap() - 10.0).abs() < 1e-14);
        assert!(ktilde(1.0, 2.0, a, 1).is_err());
        assert!(ktilde(100.0, 0.1, a, 2).unwrap() < ktilde(100.0, 0.01, a, 2).unwrap());
    }

    #[test]
    fn double_double_offset() {
        // k^{2l} is not representable, but the offset is recovered.
        let k = 24.000000000000004f64;
        let exact_lambda = 191102976.00000019; // ≈ k^6 rounded
        let off = level_offset(exact_lambda, 0.0, k, 3);
        let rough = exact_lambda - k.powi(6);
        assert!((off - rough).abs() < 1e-6);
        assert_eq!(level_offset(64.0, 0.0, 2.0, 3), 0.0);
        assert!((free_increment(2.0, 1e-3, 1) - (2.001f64 * 2.001 - 4.0)).abs() < 1e-15);
    }

    #[test]
    fn free_surface_is_a_circle() {
        let mut ctx = ModelContext::new(2, 3, PeriodicFunction::zero(2)).unwrap();
        ctx.gate = crate::context::ResonanceGate::Isolated;
        let a = Complex64::new(1.0, 0.0);
        let nu = [0.6, 0.8];
        let s = kappa_solve(1e6, a, &nu, &ctx).unwrap();
        if s.in_b {
            assert!(s.h.unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn tangent_frame_is_orthonormal() {
        let nu = [0.0, 0.6, 0.8];
        let f = tangent_frame(&nu);
        assert_eq!(f.len(), 2);
        for a in &f {
            assert!((norm(a) - 1.0).abs() < 1e-14);
            assert!(a.iter().zip(&nu).map(|(x, y)| x * y).sum::<f64>().abs() < 1e-14);
        }
    }
}
