//! Fourier-lattice arithmetic: integer frequencies, quasimomenta and
//! finitely supported periodic functions on the cell `[0, 2π]ⁿ`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;
use rustc_hash::FxHashMap;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 4;

/// Projection-column entries below this are dropped; columns are scaled so
/// that `E_jj ≈ 1`.
pub const PRUNE: f64 = 1e-15;

/// Products drop coefficients below this multiple of `‖f‖₊‖g‖₊`, far under
/// the round-off of any coefficient of the product.
pub const PRODUCT_PRUNE: f64 = 1e-20;

/// A point of the dual lattice `Zⁿ`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeIndex {
    dim: u8,
    c: [i32; MAX_DIM],
}

impl LatticeIndex {
    pub fn new(c: &[i64]) -> Self {
        assert!(
            !c.is_empty() && c.len() <= MAX_DIM,
            "lattice dimension must be in 1..={MAX_DIM}"
        );
        let mut out = [0i32; MAX_DIM];
        for (o, &v) in out.iter_mut().zip(c) {
            *o = i32::try_from(v).expect("lattice coordinate out of range");
        }
        LatticeIndex {
            dim: c.len() as u8,
            c: out,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(&vec![0; n])
    }

    /// Unit vector along axis `s`.
    pub fn unit(n: usize, s: usize) -> Self {
        let mut c = vec![0; n];
        c[s] = 1;
        Self::new(&c)
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.c[..self.dim as usize]
    }

    pub fn is_zero(&self) -> bool {
        self.coords().iter().all(|&x| x == 0)
    }

    pub fn norm_sq(&self) -> i64 {
        self.coords().iter().map(|&x| (x as i64) * (x as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// Apply a signed coordinate permutation: output axis `s` takes
    /// `sign[s] * self[perm[s]]`.
    pub fn permuted(&self, perm: &[usize], sign: &[i32]) -> Self {
        let mut out = *self;
        for s in 0..self.dim() {
            out.c[s] = sign[s] * self.c[perm[s]];
        }
        out
    }

    fn zip(self, o: Self, f: impl Fn(i32, i32) -> i32) -> Self {
        assert_eq!(self.dim, o.dim, "lattice dimension mismatch");
        let mut out = self;
        for s in 0..self.dim() {
            out.c[s] = f(self.c[s], o.c[s]);
        }
        out
    }

    fn key(&self) -> String {
        self.coords()
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    fn parse_key(s: &str) -> Option<Self> {
        let c: Option<Vec<i64>> = s.split(',').map(|p| p.trim().parse().ok()).collect();
        let c = c?;
        (!c.is_empty() && c.len() <= MAX_DIM).then(|| Self::new(&c))
    }
}

impl Add for LatticeIndex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
}

impl Sub for LatticeIndex {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
}

impl Neg for LatticeIndex {
    type Output = Self;
    fn neg(self) -> Self {
        let mut out = self;
        for s in 0..self.dim() {
            out.c[s] = -self.c[s];
        }
        out
    }
}

impl fmt::Debug for LatticeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.key())
    }
}

impl fmt::Display for LatticeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.key())
    }
}

impl Serialize for LatticeIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = Vec::<i64>::deserialize(d)?;
        if c.is_empty() || c.len() > MAX_DIM {
            return Err(de::Error::custom("lattice index dimension out of range"));
        }
        Ok(LatticeIndex::new(&c))
    }
}

/// Quasimomentum `t ∈ [0, 1)ⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuasiMomentum(Vec<f64>);

impl QuasiMomentum {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() > MAX_DIM {
            return Err(Error::param("t", "dimension out of range"));
        }
        if let Some(x) = t.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(Error::param("t", format!("component {x} outside [0, 1)")));
        }
        Ok(QuasiMomentum(t))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// `p_j(t) = t + j`.
pub fn momentum(j: &LatticeIndex, t: &QuasiMomentum) -> Result<Vec<f64>> {
    if j.dim() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            found: j.dim(),
        });
    }
    Ok(t.0.iter().zip(j.coords()).map(|(t, &j)| t + j as f64).collect())
}

/// Split a momentum into its lattice part and quasimomentum.
pub fn decompose(kvec: &[f64]) -> (LatticeIndex, QuasiMomentum) {
    let mut j = Vec::with_capacity(kvec.len());
    let mut t = Vec::with_capacity(kvec.len());
    for &x in kvec {
        let mut f = x.floor();
        let mut r = x - f;
        // x slightly below an integer can round the fraction up to 1.
        if r >= 1.0 {
            f += 1.0;
            r = 0.0;
        }
        j.push(f as i64);
        t.push(r);
    }
    (LatticeIndex::new(&j), QuasiMomentum(t))
}

/// All lattice points `a` with `|t + a| ≤ radius`.
pub fn lattice_ball(t: &[f64], radius: f64) -> Vec<LatticeIndex> {
    fn rec(t: &[f64], r2: f64, prefix: &mut Vec<i64>, out: &mut Vec<LatticeIndex>) {
        let s = prefix.len();
        if s == t.len() {
            out.push(LatticeIndex::new(prefix));
            return;
        }
        if r2 < 0.0 {
            return;
        }
        let h = r2.sqrt();
        let lo = (-t[s] - h).ceil() as i64;
        let hi = (-t[s] + h).floor() as i64;
        for a in lo..=hi {
            let x = t[s] + a as f64;
            prefix.push(a);
            rec(t, r2 - x * x, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(t, radius * radius, &mut Vec::new(), &mut out);
    out
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Finitely supported Fourier series `Σ_q f_q e^{i⟨q,x⟩}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicFunction {
    n: usize,
    coeffs: BTreeMap<LatticeIndex, Complex64>,
}

impl PeriodicFunction {
    pub fn zero(n: usize) -> Self {
        PeriodicFunction {
            n,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: Complex64) -> Self {
        Self::from_coeffs(n, [(LatticeIndex::zero(n), c)])
    }

    /// Builds from (frequency, coefficient) pairs, summing repeats.
    pub fn from_coeffs(n: usize, it: impl IntoIterator<Item = (LatticeIndex, Complex64)>) -> Self {
        let mut f = Self::zero(n);
        for (q, c) in it {
            f.add_at(q, c);
        }
        f.prune();
        f
    }

    /// `Σ_s 2a cos x_s`: coefficient `a` at every `±e_s`.
    pub fn cosine(n: usize, a: f64) -> Self {
        Self::from_coeffs(
            n,
            (0..n).flat_map(|s| {
                let e = LatticeIndex::unit(n, s);
                [(e, Complex64::new(a, 0.0)), (-e, Complex64::new(a, 0.0))]
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, q: &LatticeIndex) -> Complex64 {
        self.coeffs.get(q).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticeIndex, &Complex64)> {
        self.coeffs.iter()
    }

    /// Adds `c` at `q` without pruning.
    pub fn add_at(&mut self, q: LatticeIndex, c: Complex64) {
        assert_eq!(q.dim(), self.n, "lattice dimension mismatch");
        *self.coeffs.entry(q).or_default() += c;
    }

    /// Drops exact zeros.
    pub fn prune(&mut self) {
        self.coeffs.retain(|_, c| *c != Complex64::new(0.0, 0.0));
    }

    pub fn prune_below(&mut self, cut: f64) {
        self.coeffs.retain(|_, c| c.norm() >= cut && *c != Complex64::new(0.0, 0.0));
    }

    pub fn support_radius(&self) -> f64 {
        self.coeffs.keys().map(|q| q.norm()).fold(0.0, f64::max)
    }

    pub fn star_norm(&self) -> f64 {
        self.coeffs.values().fold(0.0, |s, c| s + c.norm())
    }

    pub fn mean(&self) -> Complex64 {
        self.get(&LatticeIndex::zero(self.n))
    }

    /// Complex conjugate function: coefficient `conj(f_{-q})` at `q`.
    pub fn conj(&self) -> Self {
        PeriodicFunction {
            n: self.n,
            coeffs: self.coeffs.iter().map(|(q, c)| (-*q, c.conj())).collect(),
        }
    }

    /// Real part `(f + conj f) / 2`.
    pub fn re(&self) -> Self {
        self.add(&self.conj()).scale(Complex64::new(0.5, 0.0))
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Self::from_coeffs(self.n, self.coeffs.iter().map(|(q, c)| (*q, c * a)))
    }

    pub fn add(&self, o: &Self) -> Self {
        self.check_dim(o);
        Self::from_coeffs(
            self.n,
            self.coeffs
                .iter()
                .chain(o.coeffs.iter())
                .map(|(q, c)| (*q, *c)),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Exact Fourier convolution.
    pub fn multiply(&self, o: &Self) -> Self {
        self.check_dim(o);
        let mut acc: FxHashMap<LatticeIndex, Complex64> = FxHashMap::default();
        for (p, a) in &self.coeffs {
            for (q, b) in &o.coeffs {
                *acc.entry(*p + *q).or_default() += a * b;
            }
        }
        let mut f = Self::from_coeffs(self.n, acc);
        f.prune_below(PRODUCT_PRUNE * self.star_norm() * o.star_norm());
        f
    }

    /// `|ψ|²` with Hermitian symmetry imposed exactly.
    ///
    /// Only the half-space of output frequencies is accumulated; the other
    /// half is its conjugate mirror, so realness holds bit-for-bit.
    pub fn abs_squared(&self) -> Self {
        let mut acc: FxHashMap<LatticeIndex, Complex64> = FxHashMap::default();
        for (p, a) in &self.coeffs {
            for (q, b) in &self.coeffs {
                let r = *p - *q;
                if r >= -r {
                    *acc.entry(r).or_default() += a * b.conj();
                }
            }
        }
        let zero = LatticeIndex::zero(self.n);
        let mut out = Self::zero(self.n);
        for (r, c) in acc {
            if r == zero {
                out.coeffs.insert(r, Complex64::new(c.re, 0.0));
            } else {
                out.coeffs.insert(r, c);
                out.coeffs.insert(-r, c.conj());
            }
        }
        out.prune_below(PRODUCT_PRUNE * self.star_norm().powi(2));
        out
    }

    /// Removes the mean; the mean must be real.
    pub fn zero_mean_shift(&self) -> Result<(Self, f64)> {
        let m = self.mean();
        let scale = self.star_norm().max(1.0);
        if m.im.abs() > 1e-12 * scale {
            return Err(Error::Contract(format!(
                "mean {m} of a shifted potential is not real"
            )));
        }
        let mut out = self.clone();
        out.coeffs.remove(&LatticeIndex::zero(self.n));
        Ok((out, m.re))
    }

    /// Drops frequencies with `|q| > radius` and returns the dropped star norm.
    pub fn truncate_support(&self, radius: f64) -> (Self, f64) {
        let mut tail = 0.0;
        let mut out = Self::zero(self.n);
        for (q, c) in &self.coeffs {
            if q.norm() > radius {
                tail += c.norm();
            } else {
                out.coeffs.insert(*q, *c);
            }
        }
        (out, tail)
    }

    /// `max_q |f_{-q} − conj(f_q)|`; zero for a real-valued function.
    pub fn hermitian_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(q, c)| (self.get(&-*q) - c.conj()).norm())
            .fold(0.0, f64::max)
    }

    /// True when every coefficient is real (so the multiplication operator
    /// has a real symmetric matrix, given Hermitian symmetry).
    pub fn has_real_coeffs(&self) -> bool {
        self.coeffs.values().all(|c| c.im == 0.0)
    }

    /// Relabel frequencies by a signed coordinate permutation.
    pub fn permuted(&self, perm: &[usize], sign: &[i32]) -> Self {
        PeriodicFunction {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .map(|(q, c)| (q.permuted(perm, sign), *c))
                .collect(),
        }
    }

    /// Fixes the dimension of a function read from JSON.
    pub fn with_dim(mut self, n: usize) -> Result<Self> {
        if let Some(q) = self.coeffs.keys().find(|q| q.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: q.dim(),
            });
        }
        self.n = n;
        Ok(self)
    }

    fn check_dim(&self, o: &Self) {
        assert_eq!(self.n, o.n, "periodic function dimension mismatch");
    }
}

impl Serialize for PeriodicFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.coeffs.len()))?;
        for (q, c) in &self.coeffs {
            m.serialize_entry(&q.key(), &[c.re, c.im])?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for PeriodicFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PeriodicFunction;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from \"q1,...,qn\" to [re, im]")
            }
            fn visit_map<M: MapAccess<'de>>(
                self,
                mut m: M,
            ) -> std::result::Result<PeriodicFunction, M::Error> {
                let mut coeffs = BTreeMap::new();
                let mut n = 0;
                while let Some((k, v)) = m.next_entry::<String, [f64; 2]>()? {
                    let q = LatticeIndex::parse_key(&k)
                        .ok_or_else(|| de::Error::custom(format!("bad frequency key `{k}`")))?;
                    if n != 0 && q.dim() != n {
                        return Err(de::Error::custom("mixed frequency dimensions"));
                    }
                    n = q.dim();
                    coeffs.insert(q, Complex64::new(v[0], v[1]));
                }
                Ok(PeriodicFunction { n, coeffs })
            }
        }
        d.deserialize_map(V)
    }
}

/// Serde adapter writing a complex number as `[re, im]`.
pub(crate) mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [c.re, c.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}
