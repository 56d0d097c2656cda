//! Network building blocks with their reverse-mode rules.
//!
//! Tensors use the node x time x channel layout, in standard (row-major)
//! order so they can be viewed as `N x (T*F)` or `(N*T) x F` matrices.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::{BlockParams, ModelError};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Gradient through a row softmax `p` given the upstream gradient `dp`.
pub fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(p.raw_dim());
    for ((mut o, pr), dr) in out.rows_mut().into_iter().zip(p.rows()).zip(dp.rows()) {
        let dot = pr.dot(&dr);
        for ((ov, &pv), &dv) in o.iter_mut().zip(pr.iter()).zip(dr.iter()) {
            *ov = pv * (dv - dot);
        }
    }
    out
}

fn check_finite(what: &str, values: impl IntoIterator<Item = f64>) -> Result<(), ModelError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what.to_string()))
    }
}

fn rows_nt(x: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (n, t, f) = x.dim();
    x.view().into_shape_with_order((n * t, f)).expect("standard layout")
}

fn rows_n(x: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (n, t, f) = x.dim();
    x.view().into_shape_with_order((n, t * f)).expect("standard layout")
}

fn reshape3(m: Array2<f64>, dims: (usize, usize, usize)) -> Array3<f64> {
    m.as_standard_layout().into_owned().into_shape_with_order(dims).expect("element count")
}

fn dsigmoid(s: &Array2<f64>, upstream: &Array2<f64>) -> Array2<f64> {
    let mut out = upstream.clone();
    out.zip_mut_with(s, |g, &sv| *g *= sv * (1.0 - sv));
    out
}

/// Temporal attention result and the intermediates its gradient needs.
#[derive(Debug, Clone)]
pub struct TemporalAttention {
    /// Row-stochastic `T x T` attention `Z'`.
    pub z: Array2<f64>,
    a1: Array2<f64>,
    lt: Array2<f64>,
    rt: Array2<f64>,
    st: Array2<f64>,
}

/// `Z' = softmax_rows(V_t . sigmoid(((X^T u1) U2) (u3 X) + b_t))` on an
/// `N x T x F` input.
pub fn temporal_attention(x: &Array3<f64>, p: &BlockParams) -> Result<TemporalAttention, ModelError> {
    let (n, t, f) = x.dim();
    if p.u1.len() != n || p.u3.len() != f || p.vt.dim() != (t, t) {
        return Err(ModelError::Shape(format!("temporal attention params do not fit input {n}x{t}x{f}")));
    }
    let a1 = p.u1.dot(&rows_n(x)).into_shape_with_order((t, f)).expect("t*f");
    let lt = a1.dot(&p.u2);
    let rt = rows_nt(x).dot(&p.u3).into_shape_with_order((n, t)).expect("n*t");
    let st = (lt.dot(&rt) + &p.bt).mapv(sigmoid);
    let z = softmax_rows(&p.vt.dot(&st));
    check_finite("temporal attention", z.iter().copied())?;
    Ok(TemporalAttention { z, a1, lt, rt, st })
}

/// Mixes time slots: `out[n, t, :] = sum_s Z'[t, s] x[n, s, :]`.
pub fn apply_temporal(x: &Array3<f64>, z: &Array2<f64>) -> Array3<f64> {
    let mut out = Array3::zeros(x.raw_dim());
    for (mut o, xn) in out.outer_iter_mut().zip(x.outer_iter()) {
        general_mat_mul(1.0, z, &xn, 0.0, &mut o);
    }
    out
}

/// Adds the input gradient of [`apply_temporal`] into `dx` and returns `dZ'`.
pub fn apply_temporal_backward(x: &Array3<f64>, z: &Array2<f64>, dout: &Array3<f64>, dx: &mut Array3<f64>) -> Array2<f64> {
    let t = z.nrows();
    let mut dz = Array2::zeros((t, t));
    for ((xn, dn), mut dxn) in x.outer_iter().zip(dout.outer_iter()).zip(dx.outer_iter_mut()) {
        general_mat_mul(1.0, &z.t(), &dn, 1.0, &mut dxn);
        general_mat_mul(1.0, &dn, &xn.t(), 1.0, &mut dz);
    }
    dz
}

#[derive(Debug, Clone)]
pub struct TemporalGrads {
    pub u1: Array1<f64>,
    pub u2: Array2<f64>,
    pub u3: Array1<f64>,
    pub vt: Array2<f64>,
    pub bt: Array2<f64>,
}

/// Backward of [`temporal_attention`]; adds the input gradient into `dx`.
pub fn temporal_attention_backward(
    x: &Array3<f64>,
    p: &BlockParams,
    att: &TemporalAttention,
    dz: &Array2<f64>,
    dx: &mut Array3<f64>,
) -> TemporalGrads {
    let (n, t, f) = x.dim();
    let dzt = softmax_rows_backward(&att.z, dz);
    let dvt = dzt.dot(&att.st.t());
    let dst = p.vt.t().dot(&dzt);
    let dpre = dsigmoid(&att.st, &dst);
    let dlt = dpre.dot(&att.rt.t());
    let drt = att.lt.t().dot(&dpre);
    let da1 = dlt.dot(&p.u2.t());
    let du2 = att.a1.t().dot(&dlt);
    let da1_flat = da1.as_standard_layout().into_owned().into_shape_with_order(t * f).expect("t*f");
    let du1 = rows_n(x).dot(&da1_flat);
    let drt_flat = drt.as_standard_layout().into_owned().into_shape_with_order(n * t).expect("n*t");
    let du3 = rows_nt(x).t().dot(&drt_flat);
    {
        let mut dxn = dx.view_mut().into_shape_with_order((n, t * f)).expect("standard layout");
        for (mut row, &u) in dxn.rows_mut().into_iter().zip(p.u1.iter()) {
            row.scaled_add(u, &da1_flat);
        }
    }
    {
        let mut dxr = dx.view_mut().into_shape_with_order((n * t, f)).expect("standard layout");
        for (mut row, &g) in dxr.rows_mut().into_iter().zip(drt_flat.iter()) {
            row.scaled_add(g, &p.u3);
        }
    }
    TemporalGrads { u1: du1, u2: du2, u3: du3, vt: dvt, bt: dpre }
}

/// Spatial attention result and intermediates.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    /// Row-stochastic `N x N` attention `Q`.
    pub q: Array2<f64>,
    a2: Array2<f64>,
    ls: Array2<f64>,
    rs: Array2<f64>,
    ss: Array2<f64>,
}

/// `Q = softmax_rows(C . M)` (elementwise with the spatial weights `M`),
/// `C = V_s . sigmoid(((X w1) W2)(w3 X)^T + b_s)`.
pub fn spatial_attention(x: &Array3<f64>, p: &BlockParams, weights: &Array2<f64>) -> Result<SpatialAttention, ModelError> {
    let (n, t, f) = x.dim();
    if p.w1.len() != t || p.w3.len() != f || p.vs.dim() != (n, n) || weights.dim() != (n, n) {
        return Err(ModelError::Shape(format!("spatial attention params do not fit input {n}x{t}x{f}")));
    }
    let mut a2 = Array2::zeros((n, f));
    for (mut row, xn) in a2.rows_mut().into_iter().zip(x.outer_iter()) {
        row.assign(&p.w1.dot(&xn));
    }
    let ls = a2.dot(&p.w2);
    let rs = rows_nt(x).dot(&p.w3).into_shape_with_order((n, t)).expect("n*t");
    let ss = (ls.dot(&rs.t()) + &p.bs).mapv(sigmoid);
    let q = softmax_rows(&(p.vs.dot(&ss) * weights));
    check_finite("spatial attention", q.iter().copied())?;
    Ok(SpatialAttention { q, a2, ls, rs, ss })
}

#[derive(Debug, Clone)]
pub struct SpatialGrads {
    pub w1: Array1<f64>,
    pub w2: Array2<f64>,
    pub w3: Array1<f64>,
    pub vs: Array2<f64>,
    pub bs: Array2<f64>,
}

/// Backward of [`spatial_attention`]; adds the input gradient into `dx`.
pub fn spatial_attention_backward(
    x: &Array3<f64>,
    p: &BlockParams,
    weights: &Array2<f64>,
    att: &SpatialAttention,
    dq: &Array2<f64>,
    dx: &mut Array3<f64>,
) -> SpatialGrads {
    let (n, t, f) = x.dim();
    let dcs = softmax_rows_backward(&att.q, dq) * weights;
    let dvs = dcs.dot(&att.ss.t());
    let dss = p.vs.t().dot(&dcs);
    let dpre = dsigmoid(&att.ss, &dss);
    let dls = dpre.dot(&att.rs);
    let drs = dpre.t().dot(&att.ls);
    let da2 = dls.dot(&p.w2.t());
    let dw2 = att.a2.t().dot(&dls);
    let mut dw1 = Array1::zeros(t);
    for ((xn, da), mut dxn) in x.outer_iter().zip(da2.rows()).zip(dx.outer_iter_mut()) {
        dw1 += &xn.dot(&da);
        for (mut row, &w) in dxn.rows_mut().into_iter().zip(p.w1.iter()) {
            row.scaled_add(w, &da);
        }
    }
    let drs_flat = drs.as_standard_layout().into_owned().into_shape_with_order(n * t).expect("n*t");
    let dw3 = rows_nt(x).t().dot(&drs_flat);
    let mut dxr = dx.view_mut().into_shape_with_order((n * t, f)).expect("standard layout");
    for (mut row, &g) in dxr.rows_mut().into_iter().zip(drs_flat.iter()) {
        row.scaled_add(g, &p.w3);
    }
    SpatialGrads { w1: dw1, w2: dw2, w3: dw3, vs: dvs, bs: dpre }
}

/// `T_0 = I`, `T_1 = L`, `T_k = 2 L T_{k-1} - T_{k-2}`; returns `order` terms.
pub fn chebyshev_polynomials(l: &Array2<f64>, order: usize) -> Vec<Array2<f64>> {
    let n = l.nrows();
    let mut out: Vec<Array2<f64>> = Vec::with_capacity(order);
    for k in 0..order {
        let next = match k {
            0 => Array2::eye(n),
            1 => l.clone(),
            _ => 2.0 * l.dot(&out[k - 1]) - &out[k - 2],
        };
        out.push(next);
    }
    out
}

/// Intermediates of [`cheb_graph_conv`].
#[derive(Debug, Clone)]
pub struct ChebCache {
    /// `T_k . Q` per term.
    attended: Vec<Array2<f64>>,
    /// `(T_k . Q) X` per term, `(N*T) x F`.
    propagated: Vec<Array2<f64>>,
}

/// `out[:, t, :] = sum_k (T_k . Q) X[:, t, :] theta_k` (pre-activation).
pub fn cheb_graph_conv(
    x: &Array3<f64>,
    q: &Array2<f64>,
    cheb: &[Array2<f64>],
    theta: &Array3<f64>,
) -> Result<(Array3<f64>, ChebCache), ModelError> {
    let (n, t, f) = x.dim();
    let (k, tf, c) = theta.dim();
    if k != cheb.len() {
        return Err(ModelError::Shape(format!("{} Chebyshev terms but theta has {k}", cheb.len())));
    }
    if tf != f || q.dim() != (n, n) {
        return Err(ModelError::Shape(format!("graph conv expects {f} input channels, theta has {tf}")));
    }
    let mut out = Array2::zeros((n * t, c));
    let mut attended = Vec::with_capacity(k);
    let mut propagated = Vec::with_capacity(k);
    for (tk, th) in cheb.iter().zip(theta.outer_iter()) {
        let a = tk * q;
        let e = a.dot(&rows_n(x)).into_shape_with_order((n * t, f)).expect("n*t*f");
        general_mat_mul(1.0, &e, &th, 1.0, &mut out);
        attended.push(a);
        propagated.push(e);
    }
    Ok((reshape3(out, (n, t, c)), ChebCache { attended, propagated }))
}

/// Backward of [`cheb_graph_conv`] given the pre-activation gradient.
/// Adds into `dx` and returns `(dQ, dtheta)`.
pub fn cheb_graph_conv_backward(
    x: &Array3<f64>,
    cheb: &[Array2<f64>],
    theta: &Array3<f64>,
    cache: &ChebCache,
    dout: &Array3<f64>,
    dx: &mut Array3<f64>,
) -> (Array2<f64>, Array3<f64>) {
    let (n, t, f) = x.dim();
    let dy = rows_nt(dout);
    let mut dq = Array2::zeros((n, n));
    let mut dtheta = Array3::zeros(theta.raw_dim());
    let xn = rows_n(x);
    let mut dxn = dx.view_mut().into_shape_with_order((n, t * f)).expect("standard layout");
    for (kk, tk) in cheb.iter().enumerate() {
        let th = theta.index_axis(Axis(0), kk);
        dtheta.index_axis_mut(Axis(0), kk).assign(&cache.propagated[kk].t().dot(&dy));
        let de = dy.dot(&th.t()).into_shape_with_order((n, t * f)).expect("n*t*f");
        let da = de.dot(&xn.t());
        general_mat_mul(1.0, &cache.attended[kk].t(), &de, 1.0, &mut dxn);
        dq += &(da * tk);
    }
    (dq, dtheta)
}

/// Pre-activation 1x3 temporal convolution with `pad` zero slots on each
/// side; `phi` is `taps x C_in x C_out`.
pub fn temporal_conv_linear(x: &Array3<f64>, phi: &Array3<f64>, pad: usize) -> Result<Array3<f64>, ModelError> {
    let (n, t, c) = x.dim();
    let (taps, cin, cout) = phi.dim();
    if cin != c {
        return Err(ModelError::Shape(format!("temporal conv expects {cin} channels, input has {c}")));
    }
    if t + 2 * pad < taps {
        return Err(ModelError::Shape(format!("{t} time slots are shorter than the {taps}-tap kernel")));
    }
    let t_out = t + 2 * pad + 1 - taps;
    let mut out = Array3::zeros((n, t_out, cout));
    for to in 0..t_out {
        let mut dst = out.slice_mut(s![.., to, ..]);
        for j in 0..taps {
            let Some(src) = (to + j).checked_sub(pad).filter(|&s| s < t) else {
                continue;
            };
            general_mat_mul(1.0, &x.slice(s![.., src, ..]), &phi.index_axis(Axis(0), j), 1.0, &mut dst);
        }
    }
    Ok(out)
}

/// Temporal convolution followed by ReLU.
pub fn temporal_conv(x: &Array3<f64>, phi: &Array3<f64>, pad: usize) -> Result<Array3<f64>, ModelError> {
    Ok(temporal_conv_linear(x, phi, pad)?.mapv(relu))
}

/// Backward of [`temporal_conv_linear`]; adds into `dx`, returns `dphi`.
pub fn temporal_conv_backward(x: &Array3<f64>, phi: &Array3<f64>, pad: usize, dout: &Array3<f64>, dx: &mut Array3<f64>) -> Array3<f64> {
    let t = x.dim().1;
    let taps = phi.dim().0;
    let mut dphi = Array3::zeros(phi.raw_dim());
    for to in 0..dout.dim().1 {
        let g = dout.slice(s![.., to, ..]);
        for j in 0..taps {
            let Some(src) = (to + j).checked_sub(pad).filter(|&s| s < t) else {
                continue;
            };
            let xs = x.slice(s![.., src, ..]);
            general_mat_mul(1.0, &xs.t(), &g, 1.0, &mut dphi.index_axis_mut(Axis(0), j));
            general_mat_mul(1.0, &g, &phi.index_axis(Axis(0), j).t(), 1.0, &mut dx.slice_mut(s![.., src, ..]));
        }
    }
    dphi
}

pub fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Zeroes the gradient where the pre-activation is not positive.
pub fn relu_backward(pre: &Array3<f64>, grad: &mut Array3<f64>) {
    grad.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}

/// `sum_c W_c . Y_c`, optionally clamped at zero.
pub fn fuse(outputs: &[Array2<f64>], weights: &[Array2<f64>], use_final_relu: bool) -> Array2<f64> {
    let mut acc = Array2::zeros(outputs[0].raw_dim());
    for (y, w) in outputs.iter().zip(weights) {
        acc += &(w * y);
    }
    if use_final_relu {
        acc.mapv_inplace(relu);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};

    #[test]
    fn zero_params_give_uniform_temporal_attention() {
        let cfg = ModelConfig { channels: 2, blocks: 1, ..Default::default() };
        let p = &ModelParams::zeros(&cfg, 4).components[0].blocks[0];
        let x = Array3::from_shape_fn((4, 3, 5), |(a, b, c)| (a + 2 * b + 3 * c) as f64);
        let att = temporal_attention(&x, p).unwrap();
        assert!(att.z.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn temporal_scores_match_hand_evaluation() {
        // N=2, F=1, T=2
        let cfg = ModelConfig { channels: 1, blocks: 1, cheb_order: 1, ..Default::default() };
        let mut p = ModelParams::zeros(&cfg, 2).components[0].blocks[0].clone();
        p.u1 = Array1::from(vec![0.5, -1.0]);
        p.u2 = Array2::from_shape_vec((1, 2), vec![2.0, 0.25]).unwrap();
        p.u3 = Array1::from(vec![1.5]);
        p.vt = Array2::from_shape_vec((2, 2), vec![1.0, 0.5, -0.5, 2.0]).unwrap();
        p.bt = Array2::from_shape_vec((2, 2), vec![0.1, 0.0, 0.0, -0.1]).unwrap();
        let x = Array3::from_shape_vec((2, 2, 1), vec![1.0, 2.0, 3.0, -1.0]).unwrap(); // x[n,t]
        let t = 2;
        let p_vt = p.vt.clone();
        let x_at = |n: usize, tt: usize| x[[n, tt, 0]];
        // (X^T u1)[t] = sum_n x[n,t] u1[n]; lhs[t, n] = that * u2[0, n]
        let a = |tt: usize| x_at(0, tt) * 0.5 + x_at(1, tt) * -1.0;
        let lhs = |tt: usize, n: usize| a(tt) * [2.0, 0.25][n];
        let rhs = |n: usize, tt: usize| 1.5 * x_at(n, tt);
        let mut zpre = [[0.0; 2]; 2];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let bt = [[0.1, 0.0], [0.0, -0.1]];
        for i in 0..t {
            for j in 0..t {
                let mut acc = 0.0;
                for m in 0..t {
                    let prod = lhs(m, 0) * rhs(0, j) + lhs(m, 1) * rhs(1, j);
                    acc += p_vt[[i, m]] * sig(prod + bt[m][j]);
                }
                zpre[i][j] = acc;
            }
        }
        let att = temporal_attention(&x, &p).unwrap();
        for i in 0..2 {
            let e: Vec<f64> = zpre[i].iter().map(|v| v.exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..2 {
                assert!((att.z[[i, j]] - e[j] / s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn isolated_row_gets_uniform_spatial_attention() {
        let cfg = ModelConfig { channels: 2, blocks: 1, ..Default::default() };
        let p = ModelParams::init(&cfg, 3, 5).components[0].blocks[0].clone();
        let x = Array3::from_shape_fn((3, 3, 5), |(a, b, c)| ((a * 7 + b * 3 + c) % 5) as f64 * 0.1);
        let mut m = Array2::zeros((3, 3));
        m[[0, 1]] = 0.5;
        m[[1, 0]] = 0.5;
        let att = spatial_attention(&x, &p, &m).unwrap();
        assert!(att.q.row(2).iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        for row in att.q.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cheb_identity_term() {
        let x = Array3::from_shape_fn((3, 2, 2), |(a, b, c)| (a + b * 10 + c * 100) as f64);
        let q = Array2::ones((3, 3));
        let theta = Array3::from_shape_fn((1, 2, 2), |(_, i, j)| if i == j { 1.0 } else { 0.0 });
        let cheb = chebyshev_polynomials(&Array2::zeros((3, 3)), 1);
        let (out, _) = cheb_graph_conv(&x, &q, &cheb, &theta).unwrap();
        assert_eq!(out, x);
        let (zero, _) = cheb_graph_conv(&Array3::zeros((3, 2, 2)), &q, &cheb, &theta).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let bad = Array3::zeros((2, 2, 2));
        assert!(cheb_graph_conv(&x, &q, &cheb, &bad).is_err());
    }

    #[test]
    fn conv_identity_and_relu() {
        let x = Array3::from_shape_fn((2, 4, 3), |(a, b, c)| a as f64 - b as f64 + 0.5 * c as f64 - 1.0);
        let mut phi = Array3::zeros((3, 3, 3));
        for c in 0..3 {
            phi[[1, c, c]] = 1.0;
        }
        assert_eq!(temporal_conv(&x, &phi, 1).unwrap(), x.mapv(relu));
        assert!(temporal_conv(&x.mapv(|v| -v.abs() - 1.0), &phi, 1).unwrap().iter().all(|&v| v == 0.0));
        assert!(temporal_conv(&Array3::zeros((2, 2, 3)), &phi, 0).is_err());
    }

    #[test]
    fn conv_matches_sliding_window_sum() {
        let x = Array3::from_shape_fn((2, 5, 3), |(a, b, c)| ((a * 13 + b * 7 + c * 3) % 11) as f64 / 11.0 - 0.4);
        let phi = Array3::from_shape_fn((3, 3, 4), |(j, i, o)| ((j * 5 + i * 3 + o) % 7) as f64 / 7.0 - 0.5);
        let out = temporal_conv_linear(&x, &phi, 1).unwrap();
        for n in 0..2 {
            for t in 0..5 {
                for o in 0..4 {
                    let mut acc = 0.0;
                    for j in 0..3i64 {
                        let s = t as i64 + j - 1;
                        if !(0..5).contains(&s) {
                            continue;
                        }
                        for i in 0..3 {
                            acc += x[[n, s as usize, i]] * phi[[j as usize, i, o]];
                        }
                    }
                    assert!((out[[n, t, o]] - acc).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn fuse_examples() {
        let y = Array2::from_elem((2, 3), -1.0);
        let one = Array2::ones((2, 3));
        let zero = Array2::zeros((2, 3));
        let outs = [y.clone(), y.clone(), y.clone()];
        assert!(fuse(&outs, &[one.clone(), one.clone(), one.clone()], true).iter().all(|&v| v == 0.0));
        assert!(fuse(&outs, &[one.clone(), one.clone(), one.clone()], false).iter().all(|&v| v == -3.0));
        let yh = Array2::from_shape_vec((2, 3), vec![0.5, -0.2, 1.0, 0.0, 3.0, -4.0]).unwrap();
        let got = fuse(&[yh.clone(), y.clone(), y], &[one, zero.clone(), zero], true);
        assert_eq!(got, yh.mapv(relu));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let m = Array2::from_shape_fn((4, 6), |(i, j)| (i as f64 - j as f64) * 37.5);
        for row in softmax_rows(&m).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
