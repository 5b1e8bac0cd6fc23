use polywave::bloch::FreeSpectrum;
use polywave::lattice::{lattice_ball, LatticeIndex, PeriodicFunction, QuasiMomentum};
use polywave::nonres::{check_quasimomentum, exponents};
use polywave::ModelContext;
use proptest::prelude::*;

fn ctx(l: u32, delta: f64) -> ModelContext {
    let mut c = ModelContext::new(2, l, PeriodicFunction::cosine(2, 1.0)).unwrap();
    c.delta = delta;
    c
}

fn point() -> impl Strategy<Value = (QuasiMomentum, LatticeIndex)> {
    (0.0f64..1.0, 0.0f64..1.0, 3i64..9, -8i64..8).prop_map(|(a, b, x, y)| {
        (QuasiMomentum::new(vec![a, b]).unwrap(), LatticeIndex::new(&[x, y]))
    })
}

/// Smallest `200|p_i^{2l} − z||p_{i+q}^{2l} − z|` over 1024 points `z` on
/// the contour and the same `(i, q)` range as the checker.
fn direct_main_minimum(t: &QuasiMomentum, j: &LatticeIndex, c: &ModelContext) -> f64 {
    let fs = FreeSpectrum::new(t, *j, c.l).unwrap();
    let k = fs.k();
    let rho = c.radius(k);
    let kb = k.powf(c.beta);
    let qs: Vec<LatticeIndex> = lattice_ball(&[0.0, 0.0], kb)
        .into_iter()
        .filter(|q| !q.is_zero() && q.norm() < kb)
        .collect();
    let ball = lattice_ball(t.as_slice(), 2.0 * k);
    let mut best = f64::INFINITY;
    for m in 0..1024 {
        let th = std::f64::consts::TAU * m as f64 / 1024.0;
        let (zr, zi) = (rho * th.cos(), rho * th.sin());
        let d = |a: &LatticeIndex| ((fs.gap(a) - zr).powi(2) + zi * zi).sqrt();
        for a in &ball {
            for q in &qs {
                best = best.min(200.0 * d(a) * d(&(*a + *q)));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tightening_delta_never_admits((t, j) in point(), d1 in 0.01f64..0.1, d2 in 0.01f64..0.1) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        // Smaller delta means larger radius k^{2l−n−δ} and larger thresholds.
        let loose = check_quasimomentum(&t, &j, &ctx(3, hi)).unwrap();
        let tight = check_quasimomentum(&t, &j, &ctx(3, lo)).unwrap();
        prop_assert!(!tight.pass_in || loose.pass_in);
        prop_assert!(!tight.pass_in_a || loose.pass_in_a);
    }

    #[test]
    fn report_permutes_with_coordinates((t, j) in point()) {
        let c = ctx(3, 0.05);
        let r = check_quasimomentum(&t, &j, &c).unwrap();
        let ts = t.as_slice();
        let tp = QuasiMomentum::new(vec![ts[1], ts[0]]).unwrap();
        let jp = j.permuted(&[1, 0], &[1, 1]);
        let rp = check_quasimomentum(&tp, &jp, &c).unwrap();
        prop_assert_eq!(r.pass_all(), rp.pass_all());
        prop_assert!((r.margin_in - rp.margin_in).abs() <= 1e-9 * r.margin_in.abs().max(1.0));
        prop_assert!((r.margin_main - rp.margin_main).abs() <= 1e-9 * r.margin_main.abs().max(1.0));
        if let (Some((a, q)), Some((ap, qp))) = (r.worst_pair, rp.worst_pair) {
            let fs = FreeSpectrum::new(&t, j, 3).unwrap();
            let fsp = FreeSpectrum::new(&tp, jp, 3).unwrap();
            let prod = |f: &FreeSpectrum, a: LatticeIndex, q: LatticeIndex| {
                let d = |x: LatticeIndex| (f.gap(&x).abs() - r.radius).abs();
                d(a) * d(a + q)
            };
            // Ties may resolve to a different but equally small pair.
            let p0 = prod(&fs, a, q);
            let p1 = prod(&fsp, ap, qp);
            prop_assert!((p0 - p1).abs() <= 1e-9 * p0.max(1.0));
            prop_assert!((prod(&fsp, a.permuted(&[1, 0], &[1, 1]), q.permuted(&[1, 0], &[1, 1])) - p0).abs()
                <= 1e-9 * p0.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn product_of_minima_is_conservative((t, j) in point()) {
        let c = ctx(3, 0.05);
        let r = check_quasimomentum(&t, &j, &c).unwrap();
        let threshold = r.k.powf(2.0 * exponents(&c).gamma2);
        let direct = direct_main_minimum(&t, &j, &c);
        // The checked quantity never exceeds the true minimum over the contour.
        prop_assert!(r.margin_main + threshold <= direct * (1.0 + 1e-12));
        if r.pass_main {
            prop_assert!(direct > threshold);
        }
    }
}
