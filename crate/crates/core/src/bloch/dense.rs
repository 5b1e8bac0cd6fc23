//! Dense diagonalization of `H(t)` on a finite lattice window.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustc_hash::FxHashMap;

use super::{lattice_window, BlochEigenpair, FreeSpectrum, TailKind};
use crate::context::{Backend, ModelContext};
use crate::error::{Error, Result};
use crate::lattice::{LatticeIndex, PeriodicFunction, QuasiMomentum, PRUNE};

/// `H(t) − p_j^{2l}` restricted to lattice points within distance `M` of `j`.
#[derive(Clone, Debug)]
pub struct WindowOperator {
    pub indices: Vec<LatticeIndex>,
    pub matrix: DMatrix<Complex64>,
    /// The subtracted level `p_j^{2l}(t)`.
    pub shift: f64,
}

impl WindowOperator {
    pub fn build(w: &PeriodicFunction, fs: &FreeSpectrum, window: usize) -> Self {
        let indices = lattice_window(&fs.j(), window as f64);
        let n = indices.len();
        let matrix = DMatrix::from_fn(n, n, |a, b| {
            let mut v = w.get(&(indices[a] - indices[b]));
            if a == b {
                v += fs.gap(&indices[a]);
            }
            v
        });
        WindowOperator {
            indices,
            matrix,
            shift: fs.level(),
        }
    }

    pub fn is_hermitian(&self) -> bool {
        let m = &self.matrix;
        (0..m.nrows()).all(|a| (0..m.ncols()).all(|b| m[(a, b)] == m[(b, a)].conj()))
    }
}

/// Eigenpair at level `j` by dense diagonalization on the window of radius
/// `window`, with the eigenvalue refined by a Rayleigh quotient.
pub fn diagonalize_oracle(
    w: &PeriodicFunction,
    t: &QuasiMomentum,
    j: &LatticeIndex,
    ctx: &ModelContext,
    window: usize,
) -> Result<BlochEigenpair> {
    let fs = FreeSpectrum::new(t, *j, ctx.l)?;
    let k = fs.k();
    let rho = ctx.radius(k);
    let indices = lattice_window(j, window as f64);
    let n = indices.len();
    let gaps: Vec<f64> = indices.iter().map(|a| fs.gap(a)).collect();

    let (values, vector): (Vec<f64>, Box<dyn Fn(usize) -> Vec<Complex64>>) =
        if w.has_real_coeffs() {
            let m = DMatrix::from_fn(n, n, |a, b| {
                let v = w.get(&(indices[a] - indices[b])).re;
                if a == b {
                    v + gaps[a]
                } else {
                    v
                }
            });
            let eig = SymmetricEigen::new(m);
            let vals = eig.eigenvalues.iter().copied().collect();
            let vecs = eig.eigenvectors;
            (
                vals,
                Box::new(move |c| vecs.column(c).iter().map(|x| Complex64::new(*x, 0.0)).collect()),
            )
        } else {
            let m = DMatrix::from_fn(n, n, |a, b| {
                let mut v = w.get(&(indices[a] - indices[b]));
                if a == b {
                    v += gaps[a];
                }
                v
            });
            let eig = SymmetricEigen::new(m);
            let vals = eig.eigenvalues.iter().copied().collect();
            let vecs = eig.eigenvectors;
            (vals, Box::new(move |c| vecs.column(c).iter().copied().collect()))
        };

    let inside: Vec<usize> = (0..n).filter(|&i| values[i].abs() < rho).collect();
    if inside.len() != 1 {
        return Err(Error::Resonance(format!(
            "{} window eigenvalues in the interval of radius {rho:e} around level {j} (window radius {window})",
            inside.len()
        )));
    }
    let phi = vector(inside[0]);

    let pos: FxHashMap<LatticeIndex, usize> =
        indices.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let taps: Vec<(LatticeIndex, Complex64)> = w.iter().map(|(q, c)| (*q, *c)).collect();
    let mut num = Complex64::default();
    let mut den = 0.0;
    for (a, ia) in indices.iter().zip(0..) {
        let mut hphi = phi[ia] * gaps[ia];
        for (q, c) in &taps {
            if let Some(&ib) = pos.get(&(*a - *q)) {
                hphi += c * phi[ib];
            }
        }
        num += phi[ia].conj() * hphi;
        den += phi[ia].norm_sqr();
    }
    let lambda_shift = num.re / den;

    let ij = pos[j];
    let anchor = phi[ij].conj() / den;
    let mut proj_column = BTreeMap::new();
    for (a, p) in indices.iter().zip(&phi) {
        let v = p * anchor;
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
        backend: Backend::Diag,
        g_terms: Vec::new(),
        g_norms: Vec::new(),
        tail_bound: 0.0,
        tail_kind: TailKind::None,
        projection_tail: 0.0,
        quadrature_discrepancy: 0.0,
        eigenvalue_imag: num.im.abs() / den,
        proj_column,
    })
}
