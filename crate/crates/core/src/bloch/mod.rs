//! The linear fiber operator `H(t) = (−Δ)ˡ + W̃` near a single free level:
//! contour-integral perturbation series and a dense diagonalization oracle.

mod dense;
mod series;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::context::{Backend, ModelContext};
use crate::error::{Error, Result};
use crate::lattice::{momentum, LatticeIndex, PeriodicFunction, QuasiMomentum, PRUNE};
use crate::nonres::exponents;

pub use dense::{diagonalize_oracle, WindowOperator};
pub use series::{expand, SeriesExpansion};

/// Free levels `|t + a|^{2l}` measured from a reference level `j`.
#[derive(Clone, Debug)]
pub struct FreeSpectrum {
    t: Vec<f64>,
    l: u32,
    j: LatticeIndex,
    pj: Vec<f64>,
    sj: f64,
}

impl FreeSpectrum {
    pub fn new(t: &QuasiMomentum, j: LatticeIndex, l: u32) -> Result<Self> {
        let pj = momentum(&j, t)?;
        let sj = pj.iter().map(|x| x * x).sum();
        Ok(FreeSpectrum {
            t: t.as_slice().to_vec(),
            l,
            j,
            pj,
            sj,
        })
    }

    pub fn j(&self) -> LatticeIndex {
        self.j
    }

    /// `k = |p_j(t)|`.
    pub fn k(&self) -> f64 {
        self.sj.sqrt()
    }

    pub fn pj(&self) -> &[f64] {
        &self.pj
    }

    /// `p_j^{2l}(t)`.
    pub fn level(&self) -> f64 {
        self.sj.powi(self.l as i32)
    }

    /// `|t + a|^{2l}`.
    pub fn energy(&self, a: &LatticeIndex) -> f64 {
        self.sq(a).powi(self.l as i32)
    }

    fn sq(&self, a: &LatticeIndex) -> f64 {
        self.t
            .iter()
            .zip(a.coords())
            .map(|(t, &x)| {
                let p = t + x as f64;
                p * p
            })
            .sum()
    }

    /// `p_a^{2l} − p_j^{2l}` without cancellation:
    /// `(s_a − s_j)·Σ s_a^i s_j^{l−1−i}` with `s_a − s_j = Σ d(2p_j + d)`.
    pub fn gap(&self, a: &LatticeIndex) -> f64 {
        let mut ds = 0.0;
        let mut sa = 0.0;
        for s in 0..self.pj.len() {
            let d = (a.coords()[s] - self.j.coords()[s]) as f64;
            ds += d * (2.0 * self.pj[s] + d);
            let p = self.pj[s] + d;
            sa += p * p;
        }
        let mut factor = 0.0;
        let mut pa = 1.0;
        for i in 0..self.l {
            factor += pa * self.sj.powi((self.l - 1 - i) as i32);
            pa *= sa;
        }
        ds * factor
    }
}

/// All `(i, p_i^{2l}(t))` on the block `max_s |i_s − j_s| ≤ window`, sorted
/// by value.
pub fn eigenvalue_ladder(
    t: &QuasiMomentum,
    window: usize,
    j_center: &LatticeIndex,
    l: u32,
) -> Result<Vec<(LatticeIndex, f64)>> {
    if window < 1 {
        return Err(Error::param("window", "must be at least 1"));
    }
    let fs = FreeSpectrum::new(t, *j_center, l)?;
    let n = j_center.dim();
    let w = window as i64;
    let side = (2 * w + 1) as usize;
    let mut out: Vec<(LatticeIndex, f64)> = (0..side.pow(n as u32))
        .map(|mut code| {
            let d: Vec<i64> = (0..n)
                .map(|_| {
                    let x = (code % side) as i64 - w;
                    code /= side;
                    x
                })
                .collect();
            let a = *j_center + LatticeIndex::new(&d);
            (a, fs.energy(&a))
        })
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Lattice points within Euclidean distance `radius` of `center`.
pub fn lattice_window(center: &LatticeIndex, radius: f64) -> Vec<LatticeIndex> {
    crate::lattice::lattice_ball(&vec![0.0; center.dim()], radius)
        .into_iter()
        .map(|d| *center + d)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub center: f64,
    pub radius: f64,
    pub nodes: usize,
}

/// Circle of radius `k^{2l−n−δ}` around `k^{2l}`.
pub fn contour(k: f64, ctx: &ModelContext) -> Result<ContourSpec> {
    if !(k > 0.0) {
        return Err(Error::param("k", "must be positive"));
    }
    Ok(ContourSpec {
        center: k.powi(2 * ctx.l as i32),
        radius: ctx.radius(k),
        nodes: ctx.quadrature_nodes,
    })
}

/// How a tail estimate was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailKind {
    /// Geometric bound with ratio below one.
    Certified,
    /// Extrapolated from the measured ratio of the last two terms.
    Empirical,
    /// No usable estimate (ratio at or above one).
    Unbounded,
    /// Not a truncated series (dense backend).
    None,
}

/// The tracked eigenvalue and spectral-projection column of `H(t)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlochEigenpair {
    pub lambda: f64,
    /// `λ − p_j^{2l}(t)`, kept separately to avoid cancellation.
    pub lambda_shift: f64,
    pub j: LatticeIndex,
    pub t: QuasiMomentum,
    pub k: f64,
    pub backend: Backend,
    /// `g_1, …, g_{r_max}`.
    pub g_terms: Vec<f64>,
    /// `‖G_1‖₁, …, ‖G_{r_max}‖₁`.
    pub g_norms: Vec<f64>,
    pub tail_bound: f64,
    pub tail_kind: TailKind,
    /// Bound on the `‖·‖₁` error of the truncated projection.
    pub projection_tail: f64,
    /// Largest relative disagreement between `N_q` and `2N_q` quadrature.
    pub quadrature_discrepancy: f64,
    /// Largest imaginary part met in the eigenvalue quadrature.
    pub eigenvalue_imag: f64,
    /// Column `E_{·,j}` indexed by absolute lattice point.
    #[serde(with = "column_serde")]
    pub proj_column: BTreeMap<LatticeIndex, Complex64>,
}

impl BlochEigenpair {
    /// `E_jj`, real for a Hermitian projection.
    pub fn e_jj(&self) -> f64 {
        self.proj_column.get(&self.j).map_or(0.0, |c| c.re)
    }

    /// Whether the eigenvalue lies in `ε(k, δ)`.
    pub fn in_window(&self, radius: f64) -> bool {
        self.lambda_shift.abs() < radius
    }
}

mod column_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        c: &BTreeMap<LatticeIndex, Complex64>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let n = c.keys().next().map_or(1, |q| q.dim());
        let f = PeriodicFunction::from_coeffs(n, c.iter().map(|(q, v)| (*q, *v)));
        f.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<LatticeIndex, Complex64>, D::Error> {
        let f = PeriodicFunction::deserialize(d)?;
        Ok(f.iter().map(|(q, v)| (*q, *v)).collect())
    }
}

/// Eigenpair of `H(t) = (−Δ)ˡ + W̃` tracked at level `j`, using the
/// context's backend.
pub fn linear_eigenpair(
    w: &PeriodicFunction,
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
) -> Result<BlochEigenpair> {
    match ctx.backend {
        Backend::Series => series_eigenpair(w, t, j, ctx),
        Backend::Diag => {
            let fs = FreeSpectrum::new(t, *j, ctx.l)?;
            diagonalize_oracle(w, t, j, ctx, ctx.lin_window(fs.k()))
        }
    }
}

/// Perturbation-series eigenpair: eigenvalue, projection column, per-order
/// diagnostics and tail estimates.
pub fn series_eigenpair(
    w: &PeriodicFunction,
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
) -> Result<BlochEigenpair> {
    let fs = FreeSpectrum::new(t, *j, ctx.l)?;
    let k = fs.k();
    let rho = ctx.radius(k);
    let order = ctx.series_order;
    let ex = expand(w, &fs, rho, order, ctx.quadrature_nodes)?;

    let lambda_shift: f64 = ex.g.iter().sum();
    let g_norms = ex.g_norms();

    let x = 4.0 * w.star_norm() * k.powf(-exponents(ctx).gamma2);
    let (tail_bound, tail_kind) = if x < 1.0 {
        let r = (order + 1) as f64;
        (rho * x.powf(r) / (r * (1.0 - x)), TailKind::Certified)
    } else {
        empirical_tail(&ex.g.iter().map(|g| g.abs()).collect::<Vec<_>>())
    };
    let y = 0.5 * x;
    let projection_tail = if y < 1.0 {
        y.powi(order as i32 + 1) / (1.0 - y)
    } else {
        empirical_tail(&g_norms).0
    };

    let mut proj_column = BTreeMap::new();
    for (id, a) in ex.ids.iter().enumerate() {
        let v: Complex64 = ex.columns.iter().map(|c| c[id]).sum();
        if v.norm() >= PRUNE {
            proj_column.insert(*a, v);
        }
    }

    Ok(BlochEigenpair {
        lambda: fs.level() + lambda_shift,
        lambda_shift,
        j: *j,
        t: t.clone(),
        k,
        backend: Backend::Series,
        g_terms: ex.g.clone(),
        g_norms,
        tail_bound,
        tail_kind,
        projection_tail,
        quadrature_discrepancy: ex.discrepancy,
        eigenvalue_imag: ex.g_imag,
        proj_column,
    })
}

/// `λ` and the individual corrections `g_r`.
pub fn series_eigenvalue(
    w: &PeriodicFunction,
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
) -> Result<(f64, Vec<f64>)> {
    let p = series_eigenpair(w, t, j, ctx)?;
    Ok((p.lambda, p.g_terms))
}

/// Projection column and `‖G_r‖₁` per order.
pub fn series_projection(
    w: &PeriodicFunction,
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
) -> Result<(BTreeMap<LatticeIndex, Complex64>, Vec<f64>)> {
    let p = series_eigenpair(w, t, j, ctx)?;
    Ok((p.proj_column, p.g_norms))
}

/// Tail of a series from its last two term magnitudes.
fn empirical_tail(terms: &[f64]) -> (f64, TailKind) {
    // Odd orders vanish identically for some potentials, so the ratio is
    // taken between the last two nonzero terms.
    let mut nonzero = terms.iter().rev().filter(|t| **t != 0.0);
    let Some(&last) = nonzero.next() else {
        return (0.0, TailKind::Empirical);
    };
    let Some(&prev) = nonzero.next() else {
        return (f64::INFINITY, TailKind::Unbounded);
    };
    let q = last / prev;
    if q < 1.0 {
        (last * q / (1.0 - q), TailKind::Empirical)
    } else {
        (f64::INFINITY, TailKind::Unbounded)
    }
}

/// Maximum column absolute sum.
pub fn op_norm_1(t: &DMatrix<Complex64>) -> f64 {
    t.column_iter()
        .map(|c| c.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `ψ_q = A·E_{j+q,j}`.
pub fn periodic_eigenfunction(pair: &BlochEigenpair, a: Complex64) -> PeriodicFunction {
    PeriodicFunction::from_coeffs(
        pair.j.dim(),
        pair.proj_column.iter().map(|(i, e)| (*i - pair.j, a * e)),
    )
}

/// `‖E − F‖₁` for rank-one projections given by their `j`-columns,
/// using `E = c c†/c_j`.
pub fn projection_distance(
    a: &BTreeMap<LatticeIndex, Complex64>,
    b: &BTreeMap<LatticeIndex, Complex64>,
    j: &LatticeIndex,
) -> f64 {
    let mut support: Vec<LatticeIndex> = a.keys().chain(b.keys()).copied().collect();
    support.sort();
    support.dedup();
    let ca: Vec<Complex64> = support.iter().map(|i| a.get(i).copied().unwrap_or_default()).collect();
    let cb: Vec<Complex64> = support.iter().map(|i| b.get(i).copied().unwrap_or_default()).collect();
    let ja = a.get(j).map_or(1.0, |c| c.re);
    let jb = b.get(j).map_or(1.0, |c| c.re);
    let mut best: f64 = 0.0;
    for beta in 0..support.len() {
        let xa = ca[beta].conj() / ja;
        let xb = cb[beta].conj() / jb;
        let s: f64 = ca.iter().zip(&cb).map(|(u, v)| (u * xa - v * xb).norm()).sum();
        best = best.max(s);
    }
    best
}

/// Central-difference gradient of `λ(t)` and its deviation from the free
/// gradient `2l p_j |p_j|^{2l−2}`.
pub fn gradient_check(
    w: &PeriodicFunction,
    t: &QuasiMomentum,
    j: &LatticeIndex,
    step: f64,
    ctx: &ModelContext,
) -> Result<(Vec<f64>, f64)> {
    let fs = FreeSpectrum::new(t, *j, ctx.l)?;
    let l = ctx.l as i32;
    let mut grad = Vec::with_capacity(ctx.n);
    for s in 0..ctx.n {
        let shifted = |h: f64| -> Result<(f64, f64)> {
            let mut tv = t.as_slice().to_vec();
            tv[s] += h;
            // The free part is evaluated from the raw vector so that t may
            // leave [0,1) by `step`.
            let sq: f64 = tv.iter().zip(j.coords()).map(|(x, &a)| (x + a as f64).powi(2)).sum();
            let inner = QuasiMomentum::new(tv.iter().map(|x| x.rem_euclid(1.0)).collect())?;
            let shift_j = crate::lattice::decompose(
                &tv.iter().zip(j.coords()).map(|(x, &a)| x + a as f64).collect::<Vec<_>>(),
            )
            .0;
            let p = linear_eigenpair(w, &inner, &shift_j, ctx).map_err(|e| {
                Error::Resonance(format!("eigenvalue tracking failed at offset {h}: {e}"))
            })?;
            Ok((sq, p.lambda_shift))
        };
        let (sp, lp) = shifted(step)?;
        let (sm, lm) = shifted(-step)?;
        // s_+^l − s_-^l without cancellation.
        let mut factor = 0.0;
        for i in 0..l {
            factor += sp.powi(i) * sm.powi(l - 1 - i);
        }
        let free = (sp - sm) * factor;
        grad.push((free + lp - lm) / (2.0 * step));
    }
    let sj = fs.k() * fs.k();
    let coef = 2.0 * l as f64 * sj.powi(l - 1);
    let dev = grad
        .iter()
        .zip(fs.pj())
        .map(|(g, p)| (g - coef * p).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((grad, dev))
}
