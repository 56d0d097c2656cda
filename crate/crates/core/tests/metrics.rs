use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rstgcn::eval::{horizon_report, mae, mape, rmse, FnPredictor};
use rstgcn::windows::Sample;

fn loop_oracle(p: &Array2<f64>, a: &Array2<f64>, m: &Array2<u8>) -> Option<(f64, f64, f64)> {
    let (mut abs, mut sq, mut pct, mut n) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            if m[[i, j]] == 1 {
                let e = (p[[i, j]] - a[[i, j]]).abs();
                abs += e;
                sq += e * e;
                pct += if a[[i, j]] > 0.0 { e / a[[i, j]] } else { e };
                n += 1;
            }
        }
    }
    (n > 0).then(|| (abs / n as f64, 100.0 * pct / n as f64, (sq / n as f64).sqrt()))
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> (Array2<f64>, Array2<f64>, Array2<u8>) {
    let p = Array2::from_shape_fn((r, c), |_| rng.random_range(0.0..3.0));
    let a = Array2::from_shape_fn((r, c), |_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) });
    let m = Array2::from_shape_fn((r, c), |_| u8::from(rng.random_bool(0.7)));
    (p, a, m)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_loop_oracle(seed in any::<u64>(), r in 1usize..20, c in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, a, m) = random(&mut rng, r, c);
        let got = (mae(p.view(), a.view(), m.view()), mape(p.view(), a.view(), m.view()), rmse(p.view(), a.view(), m.view()));
        match loop_oracle(&p, &a, &m) {
            None => prop_assert!(got.0.is_none() && got.1.is_none() && got.2.is_none()),
            Some((e_mae, e_mape, e_rmse)) => {
                prop_assert!(close(got.0.unwrap(), e_mae));
                prop_assert!(close(got.1.unwrap(), e_mape));
                prop_assert!(close(got.2.unwrap(), e_rmse));
                prop_assert!(got.2.unwrap() >= got.0.unwrap());
            }
        }
    }

    #[test]
    fn error_metrics_scale_linearly(seed in any::<u64>(), k in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, a, mut m) = random(&mut rng, 6, 4);
        m[[0, 0]] = 1;
        let (ps, as_) = (&p * k, &a * k);
        prop_assert!(close(mae(ps.view(), as_.view(), m.view()).unwrap(), k * mae(p.view(), a.view(), m.view()).unwrap()));
        prop_assert!(close(rmse(ps.view(), as_.view(), m.view()).unwrap(), k * rmse(p.view(), a.view(), m.view()).unwrap()));
    }

    #[test]
    fn metrics_ignore_cell_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, a, m) = random(&mut rng, 7, 3);
        let perm: Vec<usize> = vec![3, 6, 0, 2, 5, 1, 4];
        let sel = |x: &Array2<f64>| x.select(ndarray::Axis(0), &perm);
        let mp = m.select(ndarray::Axis(0), &perm);
        for f in [mae, rmse] {
            let (x, y) = (f(p.view(), a.view(), m.view()), f(sel(&p).view(), sel(&a).view(), mp.view()));
            let same = match (x, y) {
                (Some(x), Some(y)) => close(x, y),
                (None, None) => true,
                _ => false,
            };
            prop_assert!(same);
        }
    }
}

#[test]
fn zero_actual_uses_absolute_error() {
    let m = Array2::from_elem((1, 1), 1u8);
    let v = mape(Array2::from_elem((1, 1), 0.1).view(), Array2::zeros((1, 1)).view(), m.view()).unwrap();
    assert!((v - 10.0).abs() < 1e-12, "term 0.1 reported as {v}%");
}

#[test]
fn report_rmse_dominates_mae_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<Sample> = (0..30)
        .map(|t0| {
            let (_, y, mask) = random(&mut rng, 6, 4);
            let x = Array3::from_shape_fn((6, 5, 3), |_| rng.random_range(0.0..2.0));
            Sample { x_h: x.clone(), x_d: x.clone(), x_w: x, y, mask, t0 }
        })
        .collect();
    let zones: Vec<String> = ["A", "B", "A", "C", "B", "A"].iter().map(|s| s.to_string()).collect();
    let noisy = FnPredictor("noisy".to_string(), |s: &Sample| s.y.mapv(|v| (v * 1.3 - 0.2).max(0.0)));
    let report = horizon_report(&noisy, &samples, Some(&zones)).unwrap();
    assert!(report.is_consistent());
    for z in std::iter::once(&report.overall).chain(&report.zones) {
        for h in z.per_horizon.iter().chain(&z.cumulative).chain(std::iter::once(&z.average)) {
            assert!(h.rmse.unwrap() >= h.mae.unwrap());
        }
    }
    let csv = report.to_csv();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "zone,MAE,MAPE,RMSE");
    assert!(rows[1].starts_with("ALL,"));
    assert_eq!(rows.len(), 5);
}
