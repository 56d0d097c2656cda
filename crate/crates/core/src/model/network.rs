use ndarray::{Array2, Array3, Axis};

use super::ops::{self, ChebCache, SpatialAttention, TemporalAttention};
use super::{BlockParams, ComponentKind, ComponentParams, GraphContext, ModelConfig, ModelError, ModelParams};
use crate::windows::Sample;

const CONV_PAD: usize = 1;

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array3<f64>,
    temporal: TemporalAttention,
    mixed: Array3<f64>,
    spatial: SpatialAttention,
    cheb: ChebCache,
    graph_pre: Array3<f64>,
    graph_out: Array3<f64>,
    conv_pre: Array3<f64>,
}

#[derive(Debug, Clone)]
struct ComponentCache {
    blocks: Vec<BlockCache>,
    flat: Array2<f64>,
    output: Array2<f64>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    components: Vec<ComponentCache>,
    fused: Array2<f64>,
    use_final_relu: bool,
}

impl ForwardCache {
    /// Per-component predictions before fusion.
    pub fn component_outputs(&self) -> Vec<&Array2<f64>> {
        self.components.iter().map(|c| &c.output).collect()
    }

    /// Fused prediction before the final ReLU.
    pub fn fused_pre_activation(&self) -> &Array2<f64> {
        &self.fused
    }

    /// Sign pattern of every ReLU input. Two passes with the same pattern
    /// lie on the same linear piece of the network.
    pub fn activation_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for comp in &self.components {
            for b in &comp.blocks {
                sig.extend(b.graph_pre.iter().map(|&v| v > 0.0));
                sig.extend(b.conv_pre.iter().map(|&v| v > 0.0));
            }
        }
        if self.use_final_relu {
            sig.extend(self.fused.iter().map(|&v| v > 0.0));
        }
        sig
    }
}

/// Window of `sample` feeding `kind`, restricted to the configured feature
/// channels and laid out `N x T x F`.
fn component_input(sample: &Sample, kind: ComponentKind, cfg: &ModelConfig) -> Result<Array3<f64>, ModelError> {
    let x = match kind {
        ComponentKind::Recent => &sample.x_h,
        ComponentKind::Daily => &sample.x_d,
        ComponentKind::Weekly => &sample.x_w,
    };
    let channels = cfg.features.channels();
    let (n, f, t) = x.dim();
    if t != kind.window_len(cfg) {
        return Err(ModelError::Shape(format!("{} window has {t} slots, config expects {}", kind.name(), kind.window_len(cfg))));
    }
    if channels.iter().any(|&c| c >= f) {
        return Err(ModelError::Shape(format!("sample has {f} channels")));
    }
    Ok(Array3::from_shape_fn((n, t, channels.len()), |(i, s, c)| x[[i, channels[c], s]]))
}

fn block_forward(x: Array3<f64>, p: &BlockParams, ctx: &GraphContext) -> Result<(Array3<f64>, BlockCache), ModelError> {
    let temporal = ops::temporal_attention(&x, p)?;
    let mixed = ops::apply_temporal(&x, &temporal.z);
    let spatial = ops::spatial_attention(&mixed, p, &ctx.weights)?;
    let (graph_pre, cheb) = ops::cheb_graph_conv(&mixed, &spatial.q, &ctx.cheb, &p.theta)?;
    let graph_out = graph_pre.mapv(ops::relu);
    let conv_pre = ops::temporal_conv_linear(&graph_out, &p.phi, CONV_PAD)?;
    let out = conv_pre.mapv(ops::relu);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("block output".into()));
    }
    Ok((out, BlockCache { input: x, temporal, mixed, spatial, cheb, graph_pre, graph_out, conv_pre }))
}

fn block_backward(
    cache: &BlockCache,
    p: &BlockParams,
    ctx: &GraphContext,
    mut dout: Array3<f64>,
    grad: &mut BlockParams,
) -> Array3<f64> {
    ops::relu_backward(&cache.conv_pre, &mut dout);
    let mut dgraph = Array3::zeros(cache.graph_out.raw_dim());
    grad.phi = ops::temporal_conv_backward(&cache.graph_out, &p.phi, CONV_PAD, &dout, &mut dgraph);
    ops::relu_backward(&cache.graph_pre, &mut dgraph);

    let mut dmixed = Array3::zeros(cache.mixed.raw_dim());
    let (dq, dtheta) = ops::cheb_graph_conv_backward(&cache.mixed, &ctx.cheb, &p.theta, &cache.cheb, &dgraph, &mut dmixed);
    grad.theta = dtheta;
    let sg = ops::spatial_attention_backward(&cache.mixed, p, &ctx.weights, &cache.spatial, &dq, &mut dmixed);
    grad.w1 = sg.w1;
    grad.w2 = sg.w2;
    grad.w3 = sg.w3;
    grad.vs = sg.vs;
    grad.bs = sg.bs;

    let mut dx = Array3::zeros(cache.input.raw_dim());
    let dz = ops::apply_temporal_backward(&cache.input, &cache.temporal.z, &dmixed, &mut dx);
    let tg = ops::temporal_attention_backward(&cache.input, p, &cache.temporal, &dz, &mut dx);
    grad.u1 = tg.u1;
    grad.u2 = tg.u2;
    grad.u3 = tg.u3;
    grad.vt = tg.vt;
    grad.bt = tg.bt;
    dx
}

fn component_forward(
    x: Array3<f64>,
    p: &ComponentParams,
    ctx: &GraphContext,
) -> Result<ComponentCache, ModelError> {
    let mut h = x;
    let mut blocks = Vec::with_capacity(p.blocks.len());
    for bp in &p.blocks {
        let (next, cache) = block_forward(h, bp, ctx)?;
        blocks.push(cache);
        h = next;
    }
    let (n, t, c) = h.dim();
    let flat = h.into_shape_with_order((n, t * c)).map_err(|e| ModelError::Shape(e.to_string()))?;
    if flat.ncols() != p.fc_weight.nrows() {
        return Err(ModelError::Shape(format!("head expects {} inputs, got {}", p.fc_weight.nrows(), flat.ncols())));
    }
    let output = flat.dot(&p.fc_weight) + &p.fc_bias;
    Ok(ComponentCache { blocks, flat, output })
}

fn check_shapes(sample: &Sample, params: &ModelParams, cfg: &ModelConfig, ctx: &GraphContext) -> Result<(), ModelError> {
    let n = sample.num_stations();
    if ctx.num_stations() != n || params.num_stations() != n {
        return Err(ModelError::Shape(format!(
            "sample has {n} stations, graph {} and parameters {}",
            ctx.num_stations(),
            params.num_stations()
        )));
    }
    if ctx.cheb.len() != cfg.cheb_order {
        return Err(ModelError::Shape("Chebyshev terms do not match config".into()));
    }
    let kinds: Vec<_> = params.components.iter().map(|c| c.kind).collect();
    if kinds != ModelParams::active_components(cfg) {
        return Err(ModelError::Shape("parameter components do not match config".into()));
    }
    Ok(())
}

/// Predicts `N x t_p` delays for one sample and keeps the activations
/// needed by [`backward`].
pub fn forward_cached(
    sample: &Sample,
    params: &ModelParams,
    cfg: &ModelConfig,
    ctx: &GraphContext,
) -> Result<(Array2<f64>, ForwardCache), ModelError> {
    check_shapes(sample, params, cfg, ctx)?;
    let mut components = Vec::with_capacity(params.components.len());
    for cp in &params.components {
        let x = component_input(sample, cp.kind, cfg)?;
        components.push(component_forward(x, cp, ctx)?);
    }
    let outputs: Vec<Array2<f64>> = components.iter().map(|c| c.output.clone()).collect();
    let weights: Vec<Array2<f64>> = params.components.iter().map(|c| c.fusion.clone()).collect();
    let fused = ops::fuse(&outputs, &weights, false);
    let pred = if cfg.use_final_relu { fused.mapv(ops::relu) } else { fused.clone() };
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("prediction".into()));
    }
    Ok((pred, ForwardCache { components, fused, use_final_relu: cfg.use_final_relu }))
}

pub fn forward(sample: &Sample, params: &ModelParams, cfg: &ModelConfig, ctx: &GraphContext) -> Result<Array2<f64>, ModelError> {
    forward_cached(sample, params, cfg, ctx).map(|r| r.0)
}

/// Gradient of `sum(dpred . prediction)` with respect to every parameter.
pub fn backward(
    cache: &ForwardCache,
    params: &ModelParams,
    ctx: &GraphContext,
    dpred: &Array2<f64>,
) -> Result<ModelParams, ModelError> {
    if dpred.dim() != cache.fused.dim() {
        return Err(ModelError::Shape("output gradient shape".into()));
    }
    let mut dfused = dpred.clone();
    if cache.use_final_relu {
        dfused.zip_mut_with(&cache.fused, |g, &f| {
            if f <= 0.0 {
                *g = 0.0;
            }
        });
    }
    let mut grads = params.zeros_like();
    for ((cp, cc), gc) in params.components.iter().zip(&cache.components).zip(grads.components.iter_mut()) {
        gc.fusion = &dfused * &cc.output;
        let dout = &dfused * &cp.fusion;
        gc.fc_weight = cc.flat.t().dot(&dout);
        gc.fc_bias = dout.sum_axis(Axis(0));
        let dflat = dout.dot(&cp.fc_weight.t());
        let last = cc.blocks.last().expect("at least one block");
        let (n, t, c) = last.conv_pre.dim();
        let mut dh = dflat.into_shape_with_order((n, t, c)).map_err(|e| ModelError::Shape(e.to_string()))?;
        for ((bc, bp), gb) in cc.blocks.iter().zip(&cp.blocks).zip(gc.blocks.iter_mut()).rev() {
            dh = block_backward(bc, bp, ctx, dh, gb);
        }
    }
    if let Some(name) = grads.first_non_finite() {
        return Err(ModelError::NonFinite(format!("gradient of {name}")));
    }
    Ok(grads)
}
