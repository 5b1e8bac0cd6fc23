//! Contour-integral perturbation series on a sparse propagation pattern.
//!
//! For `z` on the circle `|z − p_j^{2l}| = ρ` the vectors
//! `y_s = (R₀W̃)^s R₀ e_j` (with `R₀ = (H₀ − z)^{-1}`) only touch lattice
//! points reachable from `j` in `s` potential hops. The pattern of hops that
//! matter is discovered once at a few probe nodes and then reused for every
//! quadrature node, so each node costs one pass over a fixed edge list.
//!
//! The eigenvalue corrections use the first-return form of the trace: with
//! `Q = 1 − e_j e_j†`, `(1/r)(Tr M^r − Tr (QMQ)^r)` equals the `x^r`
//! coefficient of `−log(1 − u(x))` where `u(x) = Σ c_s x^s` collects the
//! loops from `j` back to `j` that avoid `j` in between. The `Q` part is
//! holomorphic inside the contour and integrates to zero.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustc_hash::{FxHashMap, FxHashSet};

use super::FreeSpectrum;
use crate::error::{Error, Result};
use crate::lattice::{lattice_ball, LatticeIndex, PeriodicFunction};

const PROBES: usize = 8;
/// Hops contributing less than this fraction of the largest hop at the same
/// order are left out of the pattern.
const EDGE_TOL: f64 = 1e-18;
/// Allowed relative disagreement between `N` and `2N` node quadrature.
const QUAD_TOL: f64 = 1e-10;
/// Absolute floor (relative to `E_jj ≈ 1`, or to `ρ` for eigenvalues) below
/// which quadrature disagreement is rounding noise.
const QUAD_FLOOR: f64 = 1e-14;
/// Disagreement below this multiple of `eps · Σ|node term|` is cancellation
/// noise in the node sum, which grows like `(‖W‖₊/ρ)^r` at high order.
const ROUNDING: f64 = 64.0 * f64::EPSILON;

/// Per-order series data around level `j`.
#[derive(Clone, Debug)]
pub struct SeriesExpansion {
    /// Lattice points touched by the pattern; `ids[0] = j`.
    pub ids: Vec<LatticeIndex>,
    /// `columns[r][id] = (G_r)_{id, j}` for `r = 0..=order` (`G_0 = E_j`).
    pub columns: Vec<Vec<Complex64>>,
    /// `g_1, …, g_order`.
    pub g: Vec<f64>,
    pub g_imag: f64,
    pub discrepancy: f64,
}

#[derive(Clone, Copy)]
struct Edge {
    dst: u32,
    src: u32,
    w: Complex64,
}

struct Pattern<'a> {
    fs: &'a FreeSpectrum,
    ids: Vec<LatticeIndex>,
    index: FxHashMap<LatticeIndex, u32>,
    gaps: Vec<f64>,
    levels: Vec<FxHashSet<(u32, u32)>>,
}

impl Pattern<'_> {
    fn insert(&mut self, a: LatticeIndex, gap: f64) -> u32 {
        let id = self.ids.len() as u32;
        self.ids.push(a);
        self.gaps.push(gap);
        self.index.insert(a, id);
        id
    }

    /// Dynamic propagation at one contour point, recording every hop kept.
    fn probe(&mut self, taps: &[(LatticeIndex, Complex64, f64)], zeta: Complex64, d_floor: f64) {
        let wmax = taps[0].2;
        let order = self.levels.len() - 1;
        let mut y: Vec<(u32, Complex64)> = vec![(0, 1.0 / -zeta)];
        for s in 1..=order {
            y.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()).then(a.0.cmp(&b.0)));
            let mut acc: FxHashMap<u32, Complex64> = FxHashMap::default();
            let mut cmax: f64 = 0.0;
            for &(b, yb) in &y {
                let yn = yb.norm();
                if yn * wmax / d_floor < EDGE_TOL * cmax {
                    break;
                }
                for &(q, wq, wn) in taps {
                    if wn * yn / d_floor < EDGE_TOL * cmax {
                        break;
                    }
                    let a = self.ids[b as usize] + q;
                    let (id, gap) = match self.index.get(&a) {
                        Some(&id) => (Some(id), self.gaps[id as usize]),
                        None => (None, self.fs.gap(&a)),
                    };
                    let contrib = wn * yn / (gap - zeta).norm();
                    if contrib < EDGE_TOL * cmax {
                        continue;
                    }
                    cmax = cmax.max(contrib);
                    let id = id.unwrap_or_else(|| self.insert(a, gap));
                    *acc.entry(id).or_default() += wq * yb;
                    self.levels[s].insert((id, b));
                }
            }
            y = acc
                .into_iter()
                .map(|(id, v)| (id, v / (self.gaps[id as usize] - zeta)))
                .collect();
        }
    }
}

/// Series data for `H₀(t) + W̃` at level `j` up to `order`, integrating over
/// `2·nodes` points and checking against the `nodes`-point rule.
pub fn expand(
    w: &PeriodicFunction,
    fs: &FreeSpectrum,
    radius: f64,
    order: usize,
    nodes: usize,
) -> Result<SeriesExpansion> {
    let j = fs.j();
    let k = fs.k();

    let mut min_gap = f64::INFINITY;
    for a in lattice_ball(&fs_t(fs), 2.0 * k) {
        if a != j {
            min_gap = min_gap.min(fs.gap(&a).abs());
        }
    }
    if min_gap <= radius {
        return Err(Error::Resonance(format!(
            "a free level at distance {min_gap:e} lies inside the contour of radius {radius:e} around level {j}"
        )));
    }
    let d_floor = radius.min(min_gap - radius);

    let mut taps: Vec<(LatticeIndex, Complex64, f64)> =
        w.iter().map(|(q, c)| (*q, *c, c.norm())).collect();
    taps.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let mut columns = vec![vec![Complex64::new(1.0, 0.0)]];
    if taps.is_empty() {
        columns.extend((0..order).map(|_| vec![Complex64::default()]));
        return Ok(SeriesExpansion {
            ids: vec![j],
            columns,
            g: vec![0.0; order],
            g_imag: 0.0,
            discrepancy: 0.0,
        });
    }

    let total = 2 * nodes;
    let mut pat = Pattern {
        fs,
        ids: Vec::new(),
        index: FxHashMap::default(),
        gaps: Vec::new(),
        levels: vec![FxHashSet::default(); order + 1],
    };
    pat.insert(j, 0.0);
    for p in 0..PROBES {
        let m = (p * total) / PROBES + total / (2 * PROBES);
        let theta = 2.0 * PI * m as f64 / total as f64;
        pat.probe(&taps, Complex64::from_polar(radius, theta), d_floor);
    }

    let wmap: FxHashMap<LatticeIndex, Complex64> = taps.iter().map(|t| (t.0, t.1)).collect();
    let mut edges: Vec<Vec<Edge>> = Vec::with_capacity(order + 1);
    let mut dsts: Vec<Vec<u32>> = Vec::with_capacity(order + 1);
    for level in &pat.levels {
        let mut e: Vec<Edge> = level
            .iter()
            .map(|&(dst, src)| Edge {
                dst,
                src,
                w: wmap[&(pat.ids[dst as usize] - pat.ids[src as usize])],
            })
            .collect();
        e.sort_by_key(|e| (e.dst, e.src));
        let mut d: Vec<u32> = e.iter().map(|e| e.dst).collect();
        d.dedup();
        edges.push(e);
        dsts.push(d);
    }

    let n_ids = pat.ids.len();
    let zero = Complex64::default();
    let mut col_full = vec![vec![zero; n_ids]; order + 1];
    let mut col_half = vec![vec![zero; n_ids]; order + 1];
    let mut g_full = vec![zero; order + 1];
    let mut g_half = vec![zero; order + 1];
    // Sums of absolute node contributions, for the rounding level of each sum.
    let mut g_abs = vec![0.0; order + 1];
    let mut col_abs = vec![0.0; order + 1];
    let mut inv = vec![zero; n_ids];
    let mut ylev = vec![vec![zero; n_ids]; order + 1];
    let mut qlev = vec![vec![zero; n_ids]; order + 1];
    let mut u = vec![zero; order + 1];

    for m in 0..total {
        let e = Complex64::from_polar(1.0, 2.0 * PI * m as f64 / total as f64);
        let zeta = e * radius;
        for (x, g) in inv.iter_mut().zip(&pat.gaps) {
            *x = 1.0 / (g - zeta);
        }
        ylev[0][0] = inv[0];
        for s in 1..=order {
            let (prev, cur) = ylev.split_at_mut(s);
            let (qprev, qcur) = qlev.split_at_mut(s);
            let (yp, yc) = (&prev[s - 1], &mut cur[0]);
            let (qp, qc) = (&qprev[s - 1], &mut qcur[0]);
            for &d in &dsts[s] {
                yc[d as usize] = zero;
                qc[d as usize] = zero;
            }
            let mut loop_sum = zero;
            for ed in &edges[s] {
                let (d, sr) = (ed.dst as usize, ed.src as usize);
                yc[d] += ed.w * yp[sr];
                if s == 1 {
                    if d == 0 {
                        loop_sum += ed.w;
                    } else {
                        qc[d] += ed.w;
                    }
                } else if sr != 0 {
                    if d == 0 {
                        loop_sum += ed.w * qp[sr];
                    } else {
                        qc[d] += ed.w * qp[sr];
                    }
                }
            }
            for &d in &dsts[s] {
                let d = d as usize;
                yc[d] *= inv[d];
                if d != 0 {
                    qc[d] *= inv[d];
                }
            }
            u[s] = loop_sum * inv[0];

            let even = m % 2 == 0;
            for &d in &dsts[s] {
                let v = yc[d as usize] * e;
                col_full[s][d as usize] += v;
                col_abs[s] += v.norm();
                if even {
                    col_half[s][d as usize] += v;
                }
            }
        }

        let log = log_series(&u);
        for r in 1..=order {
            let v = log[r] * e;
            g_full[r] += v;
            g_abs[r] += v.norm();
            if m % 2 == 0 {
                g_half[r] += v;
            }
        }
    }

    let wf = radius / total as f64;
    let wh = 2.0 * wf;
    let mut discrepancy: f64 = 0.0;
    let mut worst_order = 0;
    let mut g = Vec::with_capacity(order);
    let mut g_imag: f64 = 0.0;
    for r in 1..=order {
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        let full = g_full[r] * (sign * wf);
        let half = g_half[r] * (sign * wh);
        let dg = ((full - half).norm() - ROUNDING * g_abs[r] * wh).max(0.0)
            / (full.norm() + QUAD_FLOOR * radius);
        g.push(full.re);
        g_imag = g_imag.max(full.im.abs());

        let mut diff = 0.0;
        let mut size = 0.0;
        for (f, h) in col_full[r].iter_mut().zip(&col_half[r]) {
            *f *= -sign * wf;
            let hv = h * (-sign * wh);
            diff += (*f - hv).norm();
            size += f.norm();
        }
        let dc = (diff - ROUNDING * col_abs[r] * wh).max(0.0) / (size + QUAD_FLOOR);
        let d = dg.max(dc);
        if d > discrepancy {
            discrepancy = d;
            worst_order = r;
        }
    }
    col_full[0][0] = Complex64::new(1.0, 0.0);
    if discrepancy > QUAD_TOL {
        return Err(Error::Quadrature {
            order: worst_order,
            nodes,
            doubled: total,
            discrepancy,
        });
    }

    Ok(SeriesExpansion {
        ids: pat.ids,
        columns: col_full,
        g,
        g_imag,
        discrepancy,
    })
}

fn fs_t(fs: &FreeSpectrum) -> Vec<f64> {
    fs.pj()
        .iter()
        .zip(fs.j().coords())
        .map(|(p, &j)| p - j as f64)
        .collect()
}

/// Coefficients of `Σ_{m≥1} u(x)^m / m` up to the degree of `u` (`u[0] = 0`).
fn log_series(u: &[Complex64]) -> Vec<Complex64> {
    let r = u.len() - 1;
    let mut out = u.to_vec();
    let mut pow = u.to_vec();
    for m in 2..=r {
        let mut next = vec![Complex64::default(); r + 1];
        for d in m..=r {
            let mut s = Complex64::default();
            for i in (m - 1)..d {
                s += pow[i] * u[d - i];
            }
            next[d] = s;
        }
        pow = next;
        for d in m..=r {
            out[d] += pow[d] / m as f64;
        }
    }
    out
}

impl SeriesExpansion {
    /// `‖G_r‖₁` for `r = 1..=order`.
    ///
    /// The projection is rank one, `E = c c†/c_j` with `c = E e_j`, so order by
    /// order `G_r = Σ_{a+b+d=r} f_d c^{(a)} c^{(b)†}` where `f` is the series of
    /// `1/c_j`. Columns are scanned in decreasing order of a cheap upper bound
    /// and the scan stops once no remaining column can beat the best found.
    pub fn g_norms(&self) -> Vec<f64> {
        let order = self.columns.len() - 1;
        let n = self.ids.len();
        let e: Vec<Complex64> = self.columns.iter().map(|c| c[0]).collect();
        let mut f = vec![Complex64::default(); order + 1];
        f[0] = 1.0 / e[0];
        for d in 1..=order {
            let mut s = Complex64::default();
            for i in 1..=d {
                s += e[i] * f[d - i];
            }
            f[d] = -s / e[0];
        }
        let colnorm: Vec<f64> = self
            .columns
            .iter()
            .map(|c| c.iter().map(|x| x.norm()).sum())
            .collect();

        let kappa = |r: usize, beta: usize| -> Vec<Complex64> {
            (0..=r)
                .map(|a| {
                    (0..=r - a)
                        .map(|b| f[r - a - b] * self.columns[b][beta].conj())
                        .sum()
                })
                .collect()
        };

        let mut out = Vec::with_capacity(order);
        for r in 1..=order {
            let mut ub: Vec<(f64, usize)> = (0..n)
                .map(|beta| {
                    let k = kappa(r, beta);
                    let b: f64 = k.iter().zip(&colnorm).map(|(k, c)| k.norm() * c).sum();
                    (b, beta)
                })
                .collect();
            ub.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            let mut best: f64 = 0.0;
            for &(bound, beta) in &ub {
                if bound <= best {
                    break;
                }
                let k = kappa(r, beta);
                let norm: f64 = (0..n)
                    .map(|i| {
                        (0..=r)
                            .map(|a| self.columns[a][i] * k[a])
                            .sum::<Complex64>()
                            .norm()
                    })
                    .sum();
                best = best.max(norm);
            }
            out.push(best);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_series_matches_closed_form() {
        // u = a x: Σ u^m/m has coefficient a^r / r.
        let a = Complex64::new(0.3, -0.2);
        let mut u = vec![Complex64::default(); 6];
        u[1] = a;
        let l = log_series(&u);
        for r in 1..=5 {
            assert!((l[r] - a.powi(r as i32) / r as f64).norm() < 1e-16);
        }
        // u = x + x^2: −log(1 − x − x²) has coefficients L_r/r (Lucas numbers).
        let mut u = vec![Complex64::default(); 8];
        u[1] = Complex64::new(1.0, 0.0);
        u[2] = Complex64::new(1.0, 0.0);
        let l = log_series(&u);
        let lucas = [0.0, 1.0, 3.0, 4.0, 7.0, 11.0, 18.0, 29.0];
        for r in 1..=7 {
            assert!((l[r].re - lucas[r] / r as f64).abs() < 1e-14);
        }
    }
}
