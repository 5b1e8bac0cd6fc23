//! Independent checks of the contour-quadrature series against residue
//! formulas, dense diagonalization and projection identities.

use num_complex::Complex64;
use polywave::bloch::{diagonalize_oracle, expand, series_eigenpair, FreeSpectrum};
use polywave::lattice::{LatticeIndex, PeriodicFunction};
use polywave::nonres::sample_nonresonant;
use polywave::ModelContext;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random real-valued zero-mean potential supported on `|q| ≤ 2`.
fn random_potential(rng: &mut ChaCha8Rng) -> PeriodicFunction {
    let mut v = PeriodicFunction::zero(2);
    for x in -2i64..=2 {
        for y in -2i64..=2 {
            let q = LatticeIndex::new(&[x, y]);
            if q.is_zero() || q.norm() > 2.0 || q < -q {
                continue;
            }
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            v.add_at(q, c);
            v.add_at(-q, c.conj());
        }
    }
    v
}

#[test]
fn second_order_and_first_column_match_residues() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let v = random_potential(&mut rng);
        let mut ctx = ModelContext::new(2, 3, v.clone()).unwrap();
        ctx.seed = seed;
        let k = rng.random_range(8.0..12.0);
        let (draws, _) = sample_nonresonant(k, &ctx, 40).unwrap();
        let Some(d) = draws.iter().find(|d| d.report.pass_all()) else {
            continue;
        };
        let (t, j) = (&d.report.t, d.report.j);
        let fs = FreeSpectrum::new(t, j, 3).unwrap();
        let ex = expand(&v, &fs, ctx.radius(fs.k()), 2, 64).unwrap();

        let g2: f64 = v
            .iter()
            .map(|(q, c)| c.norm_sqr() / (-fs.gap(&(j + *q))))
            .sum();
        assert!((ex.g[1] - g2).abs() <= 1e-10 * g2.abs(), "g2 {} vs {}", ex.g[1], g2);
        assert_eq!(ex.g[0], 0.0);

        for (id, a) in ex.ids.iter().enumerate() {
            let q = *a - j;
            let expect = if q.is_zero() {
                Complex64::default()
            } else {
                v.get(&q) / (-fs.gap(a))
            };
            let got = ex.columns[1][id];
            if expect.norm() == 0.0 {
                assert!(got.norm() <= 1e-10 * v.star_norm() / fs.k().powi(5), "{a}: {got}");
            } else {
                assert!((got - expect).norm() <= 1e-10 * expect.norm(), "{a}: {got} vs {expect}");
            }
        }
        assert_eq!(ex.columns[1][0], Complex64::default());
        checked += 1;
    }
}

#[test]
fn projection_column_is_idempotent() {
    let v = PeriodicFunction::cosine(2, 1.0);
    let ctx = ModelContext::new(2, 3, v.clone()).unwrap();
    let (draws, _) = sample_nonresonant(10.0, &ctx, 200).unwrap();
    let d = draws.iter().find(|d| d.report.pass_all()).unwrap();
    let p = series_eigenpair(&v, &d.report.t, &d.report.j, &ctx).unwrap();
    // For a Hermitian projection (E²)_jj = Σ_a |E_aj|² = E_jj.
    let ejj = p.proj_column[&d.report.j];
    let sq: f64 = p.proj_column.values().map(|c| c.norm_sqr()).sum();
    assert!(ejj.im.abs() < 1e-14);
    assert!((sq - ejj.re).abs() <= 4.0 * p.projection_tail + 1e-12, "{sq} vs {ejj}");
    // Geometric decay of ‖G_r‖₁ in the certified regime.
    for w in p.g_norms.windows(2) {
        assert!(w[1] < w[0], "{:?}", p.g_norms);
    }
}

#[test]
fn series_matches_dense_diagonalization() {
    let v = PeriodicFunction::cosine(2, 1.0);
    let ctx = ModelContext::new(2, 3, v.clone()).unwrap();
    let (draws, _) = sample_nonresonant(10.0, &ctx, 200).unwrap();
    let d = draws.iter().find(|d| d.report.pass_all()).unwrap();
    let (t, j) = (&d.report.t, &d.report.j);
    let s = series_eigenpair(&v, t, j, &ctx).unwrap();
    let dense = diagonalize_oracle(&v, t, j, &ctx, 8).unwrap();
    assert!(
        (s.lambda_shift - dense.lambda_shift).abs() <= s.tail_bound + 1e-9,
        "{} vs {}",
        s.lambda_shift,
        dense.lambda_shift
    );
    for (a, c) in &s.proj_column {
        let e = dense.proj_column.get(a).copied().unwrap_or_default();
        assert!((c - e).norm() <= s.projection_tail + 1e-9, "{a}: {c} vs {e}");
    }
}
