//! Newton solver for the truncated nonlinear Galerkin system, used to
//! confirm that a fixed-point output is a genuine solution.
//!
//! Unknowns are the coefficients of `ψ` on the support of the initial guess
//! and `λ`. The coefficient at `q = 0` is pinned, which removes the phase and
//! scale freedom. The cubic term is not holomorphic in `ψ`, so the Jacobian
//! is assembled in real coordinates `ψ_b = x_b + i y_b`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::bloch::FreeSpectrum;
use crate::context::ModelContext;
use crate::error::{Error, Result};
use crate::fixed_point::{residual, residual_function, Solution};
use crate::lattice::{LatticeIndex, PeriodicFunction};

const MAX_STEPS: usize = 20;
const TOL: f64 = 1e-12;
/// Coefficients below this fraction of the largest are not unknowns.
const SUPPORT_REL: f64 = 1e-14;

/// The unknown layout of a Galerkin solve.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    /// Frequencies carrying unknowns; `support[0]` is the pinned `q = 0`.
    pub support: Vec<LatticeIndex>,
    pub pinned: Complex64,
}

impl GalerkinSystem {
    pub fn from_solution(sol: &Solution) -> Result<Self> {
        let zero = LatticeIndex::zero(sol.n);
        let pinned = sol.psi.get(&zero);
        if pinned.norm() == 0.0 {
            return Err(Error::Newton("pinned coefficient vanishes".into()));
        }
        let cut = SUPPORT_REL * sol.psi.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max);
        let mut support = vec![zero];
        support.extend(
            sol.psi
                .iter()
                .filter(|(q, c)| **q != zero && c.norm() >= cut)
                .map(|(q, _)| *q),
        );
        Ok(GalerkinSystem { support, pinned })
    }

    fn unknowns(&self) -> usize {
        2 * self.support.len() - 1
    }

    fn psi(&self, x: &DVector<f64>) -> PeriodicFunction {
        let n = self.support[0].dim();
        let mut f = PeriodicFunction::zero(n);
        f.add_at(self.support[0], self.pinned);
        for (i, q) in self.support.iter().enumerate().skip(1) {
            f.add_at(*q, Complex64::new(x[2 * i - 2], x[2 * i - 1]));
        }
        f
    }

    fn pack(&self, psi: &PeriodicFunction, lambda_shift: f64) -> DVector<f64> {
        let m = self.unknowns();
        let mut x = DVector::zeros(m);
        for (i, q) in self.support.iter().enumerate().skip(1) {
            let c = psi.get(q);
            x[2 * i - 2] = c.re;
            x[2 * i - 1] = c.im;
        }
        x[m - 1] = lambda_shift;
        x
    }

    /// Residual equations: real and imaginary parts at every non-pinned
    /// frequency, plus the pinned row `Re(conj(ψ₀)F₀)/|ψ₀|`.
    ///
    /// The imaginary part of the pinned row is implied by the others, since
    /// `Σ conj(ψ_a)F_a` is real for a Hermitian system.
    fn equations(&self, f: &PeriodicFunction) -> DVector<f64> {
        let m = self.unknowns();
        let mut e = DVector::zeros(m);
        let p = self.pinned;
        e[0] = (p.conj() * f.get(&self.support[0])).re / p.norm();
        for (i, q) in self.support.iter().enumerate().skip(1) {
            let c = f.get(q);
            e[2 * i - 1] = c.re;
            e[2 * i] = c.im;
        }
        e
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOutcome {
    pub solution: Solution,
    pub iterations: usize,
    /// `‖ψ_out − ψ_in‖₊`.
    pub psi_change: f64,
    /// `|λ_out − λ_in|`.
    pub lambda_change: f64,
    /// Residual of the restricted system at each accepted iterate.
    pub residual_history: Vec<f64>,
}

/// Newton iteration with damped line search starting from `init`.
pub fn newton_solve(init: &Solution, ctx: &ModelContext) -> Result<NewtonOutcome> {
    if !init.residual.is_finite() {
        return Err(Error::Newton("initial residual is not finite".into()));
    }
    let sys = GalerkinSystem::from_solution(init)?;
    let fs = FreeSpectrum::new(&init.t, init.j, init.l)?;
    let scale = init.amplitude.norm().max(f64::MIN_POSITIVE);
    let v = &ctx.potential;

    let eval = |x: &DVector<f64>| -> Result<(PeriodicFunction, DVector<f64>, f64)> {
        let psi = sys.psi(x);
        let f = residual_function(&psi, &init.j, &init.t, init.l, x[x.len() - 1], init.sigma, v)?;
        let e = sys.equations(&f);
        let norm = e.iter().map(|v| v.abs()).sum::<f64>() / scale;
        Ok((psi, e, norm))
    };

    let mut x = sys.pack(&init.psi, init.lambda_shift);
    let (mut psi, mut eqs, mut res) = eval(&x)?;
    let mut history = vec![res];
    let mut steps = 0;
    // At least one step is taken so that the oracle is exercised even when
    // the start is already within tolerance.
    while steps == 0 || res >= TOL {
        if steps == MAX_STEPS {
            return Err(Error::Newton(format!(
                "no convergence in {MAX_STEPS} steps (residual {res:e})"
            )));
        }
        steps += 1;
        let jac = jacobian(&sys, &psi, &fs, x[x.len() - 1], init.sigma, v);
        let dx = jac
            .lu()
            .solve(&(-&eqs))
            .ok_or_else(|| Error::Newton("singular Jacobian".into()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &x + &dx * alpha;
            let (p, e, r) = eval(&trial)?;
            if r < res || r < TOL {
                x = trial;
                psi = p;
                eqs = e;
                res = r;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        history.push(res);
        if !accepted {
            // No descent direction left: the iterate is at round-off level.
            break;
        }
    }

    let lambda_shift = x[x.len() - 1];
    let mut sol = init.clone();
    sol.psi = psi;
    sol.lambda_shift = lambda_shift;
    sol.lambda = fs.level() + lambda_shift;
    sol.u_tilde = if init.amplitude.norm() > 0.0 {
        sol.psi
            .scale(1.0 / init.amplitude)
            .sub(&PeriodicFunction::constant(init.n, Complex64::new(1.0, 0.0)))
    } else {
        PeriodicFunction::zero(init.n)
    };
    sol.residual = residual(&sol, v);
    Ok(NewtonOutcome {
        psi_change: sol.psi.sub(&init.psi).star_norm(),
        lambda_change: (sol.lambda_shift - init.lambda_shift).abs(),
        solution: sol,
        iterations: steps,
        residual_history: history,
    })
}

/// Real Jacobian of [`GalerkinSystem::equations`] with respect to the packed
/// unknowns.
fn jacobian(
    sys: &GalerkinSystem,
    psi: &PeriodicFunction,
    fs: &FreeSpectrum,
    lambda_shift: f64,
    sigma: f64,
    v: &PeriodicFunction,
) -> DMatrix<f64> {
    let s = sys.support.len();
    let m = sys.unknowns();
    let j = fs.j();
    let mod2: FxHashMap<LatticeIndex, Complex64> = psi
        .abs_squared()
        .iter()
        .map(|(q, c)| (*q, c * (2.0 * sigma)))
        .collect();
    let sq: FxHashMap<LatticeIndex, Complex64> = psi
        .multiply(psi)
        .iter()
        .map(|(q, c)| (*q, c * sigma))
        .collect();
    let get = |m: &FxHashMap<LatticeIndex, Complex64>, q: LatticeIndex| {
        m.get(&q).copied().unwrap_or_default()
    };

    // Complex derivative rows: dF_a/dx_b = P+Q, dF_a/dy_b = i(P−Q), dF_a/dλ = −ψ_a.
    let row = |a: usize| -> Vec<(Complex64, Complex64)> {
        let qa = sys.support[a];
        (0..s)
            .map(|b| {
                let qb = sys.support[b];
                let mut p = v.get(&(qa - qb)) + get(&mod2, qa - qb);
                if a == b {
                    p += fs.gap(&(j + qa)) - lambda_shift;
                }
                let q = get(&sq, qa + qb);
                (p + q, Complex64::i() * (p - q))
            })
            .collect()
    };

    let mut jac = DMatrix::zeros(m, m);
    let pin = sys.pinned;
    for a in 0..s {
        let derivs = row(a);
        let dl = -psi.get(&sys.support[a]);
        let mut put = |r: usize, map: &dyn Fn(Complex64) -> f64| {
            for (b, (dx, dy)) in derivs.iter().enumerate().skip(1) {
                jac[(r, 2 * b - 2)] = map(*dx);
                jac[(r, 2 * b - 1)] = map(*dy);
            }
            jac[(r, m - 1)] = map(dl);
        };
        if a == 0 {
            put(0, &|z| (pin.conj() * z).re / pin.norm());
        } else {
            put(2 * a - 1, &|z| z.re);
            put(2 * a, &|z| z.im);
        }
    }
    jac
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub psi_distance: f64,
    pub lambda_distance: f64,
    pub residual_a: f64,
    pub residual_b: f64,
}

/// Distances between two solutions of the same problem.
pub fn compare(a: &Solution, b: &Solution) -> Result<CompareReport> {
    if a.j != b.j || a.t != b.t || a.amplitude != b.amplitude || a.sigma != b.sigma || a.l != b.l {
        return Err(Error::Contract(
            "solutions belong to different (j, t, A, sigma, l)".into(),
        ));
    }
    Ok(CompareReport {
        psi_distance: a.psi.sub(&b.psi).star_norm(),
        lambda_distance: (a.lambda_shift - b.lambda_shift).abs(),
        residual_a: a.residual,
        residual_b: b.residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::ResonanceGate;
    use crate::fixed_point::iterate;
    use crate::lattice::QuasiMomentum;

    #[test]
    fn exact_plane_wave_needs_no_step() {
        let mut ctx = ModelContext::new(2, 1, PeriodicFunction::zero(2))
            .unwrap()
            .with_nonlinearity(2.0, Complex64::new(0.1, 0.0));
        ctx.gate = ResonanceGate::Isolated;
        let t = QuasiMomentum::new(vec![0.5423638067150449, 0.1566074012856089]).unwrap();
        let (sol, _) = iterate(&t, &LatticeIndex::new(&[9, 3]), &ctx).unwrap();
        let out = newton_solve(&sol, &ctx).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.psi_change, 0.0);
        assert!(out.lambda_change < 1e-12);
        let r = compare(&sol, &sol).unwrap();
        assert_eq!((r.psi_distance, r.lambda_distance), (0.0, 0.0));
    }
}
