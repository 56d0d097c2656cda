//! Reverse-mode gradients against central finite differences.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rstgcn::model::{backward, forward, forward_cached, GraphContext, ModelConfig, ModelParams};
use rstgcn::railnet::{RailGraph, Station};
use rstgcn::train::{batch_gradient, masked_mse};
use rstgcn::windows::{Sample, WindowConfig};

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-3;
/// Gradients below this magnitude on both sides are compared absolutely.
const FLOOR: f64 = 1e-7;

fn graph(n: usize, rng: &mut ChaCha8Rng) -> RailGraph {
    let stations = (0..n)
        .map(|i| Station { code: format!("S{i}"), name: format!("S{i}"), zone: "CR".into(), index: i })
        .collect();
    let mut edges: Vec<(usize, usize, f64, u32)> =
        (1..n).map(|i| (rng.random_range(0..i), i, rng.random_range(10.0..80.0), rng.random_range(1..6))).collect();
    edges.push((0, n - 1, 33.0, 2));
    RailGraph::from_edges(stations, &edges).unwrap()
}

fn tiny_config(final_relu: bool) -> ModelConfig {
    ModelConfig {
        window: WindowConfig { t_h: 3, t_d: 3, t_w: 3, t_p: 3, ..Default::default() },
        cheb_order: 3,
        channels: 4,
        blocks: 1,
        use_final_relu: final_relu,
        ..Default::default()
    }
}

fn random_sample(n: usize, rng: &mut ChaCha8Rng) -> Sample {
    let mut cube = |t: usize| Array3::from_shape_fn((n, 5, t), |_| rng.random_range(0.0..1.0));
    let (x_h, x_d, x_w) = (cube(3), cube(3), cube(3));
    Sample {
        x_h,
        x_d,
        x_w,
        y: Array2::from_shape_fn((n, 3), |_| rng.random_range(0.0..0.5)),
        mask: Array2::from_shape_fn((n, 3), |_| u8::from(rng.random_bool(0.8))),
        t0: 0,
    }
}

fn loss(s: &Sample, p: &ModelParams, cfg: &ModelConfig, ctx: &GraphContext) -> f64 {
    let pred = forward(s, p, cfg, ctx).unwrap();
    masked_mse(pred.view(), s.y.view(), s.mask.view())
}

struct CheckStats {
    checked: usize,
    skipped_kinks: usize,
    worst: f64,
    worst_name: String,
}

fn check_seed(seed: u64, final_relu: bool) -> CheckStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 5;
    let g = graph(n, &mut rng);
    let cfg = tiny_config(final_relu);
    let ctx = GraphContext::new(&g, &cfg).unwrap();
    let params = ModelParams::init(&cfg, n, seed);
    let sample = random_sample(n, &mut rng);

    let (_, analytic) = batch_gradient(&params, std::slice::from_ref(&sample), &cfg, &ctx).unwrap();
    let (_, base_cache) = forward_cached(&sample, &params, &cfg, &ctx).unwrap();
    let base_sig = base_cache.activation_signature();
    let names: Vec<(String, usize)> = params.tensors().into_iter().map(|t| (t.0, t.1.len())).collect();
    let flat = params.to_flat();

    let mut stats = CheckStats { checked: 0, skipped_kinks: 0, worst: 0.0, worst_name: String::new() };
    let mut offset = 0;
    for (name, len) in names {
        for j in 0..len {
            let i = offset + j;
            let eval = |delta: f64| {
                let mut f = flat.clone();
                f[i] += delta;
                let mut p = params.clone();
                p.assign_flat(&f).unwrap();
                let (_, cache) = forward_cached(&sample, &p, &cfg, &ctx).unwrap();
                (loss(&sample, &p, &cfg, &ctx), cache.activation_signature())
            };
            let (lp, sp) = eval(EPS);
            let (lm, sm) = eval(-EPS);
            if sp != base_sig || sm != base_sig {
                stats.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * EPS);
            let a = analytic[i];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < FLOOR { (a - numeric).abs() / FLOOR } else { (a - numeric).abs() / scale };
            stats.checked += 1;
            if err > stats.worst {
                stats.worst = err;
                stats.worst_name = format!("{name}[{j}] analytic {a:e} numeric {numeric:e}");
            }
        }
        offset += len;
    }
    stats
}

#[test]
fn gradients_match_finite_differences_over_ten_seeds() {
    for seed in 0..10 {
        for final_relu in [true, false] {
            let s = check_seed(seed, final_relu);
            println!(
                "seed {seed} relu {final_relu}: checked {} skipped {} worst {:.2e} ({})",
                s.checked, s.skipped_kinks, s.worst, s.worst_name
            );
            assert!(s.worst < TOL, "seed {seed}: relative error {} at {}", s.worst, s.worst_name);
            assert!(s.skipped_kinks * 20 < s.checked, "too many kink crossings: {}", s.skipped_kinks);
        }
    }
}

#[test]
fn zero_output_gradient_gives_zero_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = graph(5, &mut rng);
    let cfg = tiny_config(true);
    let ctx = GraphContext::new(&g, &cfg).unwrap();
    let params = ModelParams::init(&cfg, 5, 3);
    let s = random_sample(5, &mut rng);
    let (_, cache) = forward_cached(&s, &params, &cfg, &ctx).unwrap();
    let grads = backward(&cache, &params, &ctx, &Array2::zeros((5, 3))).unwrap();
    assert_eq!(grads.global_norm(), 0.0);
}

#[test]
fn fully_masked_batch_has_zero_loss_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = graph(5, &mut rng);
    let cfg = tiny_config(true);
    let ctx = GraphContext::new(&g, &cfg).unwrap();
    let params = ModelParams::init(&cfg, 5, 4);
    let mut s = random_sample(5, &mut rng);
    s.mask.fill(0);
    let (loss, grads) = batch_gradient(&params, &[s.clone(), s], &cfg, &ctx).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|&g| g == 0.0));
}

#[test]
fn fusion_gradient_has_closed_form() {
    // dL/dW_c = (dL/dY . relu'(fused)) . Y_c
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = graph(5, &mut rng);
    let cfg = tiny_config(true);
    let ctx = GraphContext::new(&g, &cfg).unwrap();
    let params = ModelParams::init(&cfg, 5, 5);
    let s = random_sample(5, &mut rng);
    let (_, cache) = forward_cached(&s, &params, &cfg, &ctx).unwrap();
    let upstream = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
    let grads = backward(&cache, &params, &ctx, &upstream).unwrap();
    let fused = cache.fused_pre_activation();
    for (c, yc) in cache.component_outputs().into_iter().enumerate() {
        for i in 0..5 {
            for h in 0..3 {
                let gate = if fused[[i, h]] > 0.0 { 1.0 } else { 0.0 };
                assert_eq!(grads.components[c].fusion[[i, h]], upstream[[i, h]] * gate * yc[[i, h]]);
            }
        }
    }
}
