use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};

const CHECKPOINT_MAGIC: &[u8; 8] = b"RSTGCNCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Learnable tensors of one block. Shapes for a block with `n` stations,
/// `f` input channels, `t` time slots and `c` output channels are given
/// per field.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    /// Temporal attention, `n`.
    pub u1: Array1<f64>,
    /// Temporal attention, `f x n`.
    pub u2: Array2<f64>,
    /// Temporal attention, `f`.
    pub u3: Array1<f64>,
    /// `t x t`.
    pub vt: Array2<f64>,
    /// `t x t`.
    pub bt: Array2<f64>,
    /// Spatial attention, `t`.
    pub w1: Array1<f64>,
    /// Spatial attention, `f x t`.
    pub w2: Array2<f64>,
    /// Spatial attention, `f`.
    pub w3: Array1<f64>,
    /// `n x n`.
    pub vs: Array2<f64>,
    /// `n x n`.
    pub bs: Array2<f64>,
    /// Chebyshev coefficients, `K x f x c`.
    pub theta: Array3<f64>,
    /// Temporal kernel, `3 x c x c` indexed `[tap, in, out]`.
    pub phi: Array3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Recent,
    Daily,
    Weekly,
}

impl ComponentKind {
    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::Recent => "recent",
            ComponentKind::Daily => "daily",
            ComponentKind::Weekly => "weekly",
        }
    }

    pub fn window_len(self, cfg: &ModelConfig) -> usize {
        match self {
            ComponentKind::Recent => cfg.window.t_h,
            ComponentKind::Daily => cfg.window.t_d,
            ComponentKind::Weekly => cfg.window.t_w,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentParams {
    pub kind: ComponentKind,
    pub blocks: Vec<BlockParams>,
    /// `(t * c) x t_p`, rows ordered time-major.
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
    /// Fusion weights, `n x t_p`.
    pub fusion: Array2<f64>,
}

/// Every learnable tensor of the model. Components with an empty input
/// window are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub components: Vec<ComponentParams>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    stations: usize,
    config: ModelConfig,
    tensors: Vec<TensorInfo>,
}

trait Maker {
    fn block(&mut self, f: usize, t: usize) -> BlockParams;
    fn head(&mut self, fan_in: usize, t_p: usize) -> (Array2<f64>, Array1<f64>, Array2<f64>);
}

struct RandomMaker {
    rng: ChaCha8Rng,
    stations: usize,
    channels: usize,
    cheb_order: usize,
    fusion: f64,
}

impl RandomMaker {
    fn bound(fan_in: usize) -> f64 {
        (1.0 / fan_in.max(1) as f64).sqrt()
    }

    fn vec(&mut self, len: usize, fan_in: usize) -> Array1<f64> {
        let b = Self::bound(fan_in);
        Array1::from_shape_fn(len, |_| self.rng.random_range(-b..=b))
    }

    fn mat(&mut self, shape: (usize, usize), fan_in: usize) -> Array2<f64> {
        let b = Self::bound(fan_in);
        Array2::from_shape_fn(shape, |_| self.rng.random_range(-b..=b))
    }

    fn cube(&mut self, shape: (usize, usize, usize), fan_in: usize) -> Array3<f64> {
        let b = Self::bound(fan_in);
        Array3::from_shape_fn(shape, |_| self.rng.random_range(-b..=b))
    }
}

impl Maker for RandomMaker {
    fn block(&mut self, f: usize, t: usize) -> BlockParams {
        let (n, c, k) = (self.stations, self.channels, self.cheb_order);
        BlockParams {
            u1: self.vec(n, n),
            u2: self.mat((f, n), f),
            u3: self.vec(f, f),
            vt: self.mat((t, t), t),
            bt: self.mat((t, t), t),
            w1: self.vec(t, t),
            w2: self.mat((f, t), f),
            w3: self.vec(f, f),
            vs: self.mat((n, n), n),
            bs: self.mat((n, n), n),
            theta: self.cube((k, f, c), k * f),
            phi: self.cube((3, c, c), 3 * c),
        }
    }

    /// The head sees post-ReLU features, so nonnegative weights with mean
    /// `1/fan_in` start every forecast positive and at activation scale;
    /// a negative start would leave the final ReLU with no gradient.
    fn head(&mut self, fan_in: usize, t_p: usize) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        let hi = 2.0 / fan_in.max(1) as f64;
        let w = Array2::from_shape_fn((fan_in, t_p), |_| self.rng.random_range(0.0..=hi));
        (w, Array1::zeros(t_p), Array2::from_elem((self.stations, t_p), self.fusion))
    }
}

struct ZeroMaker {
    stations: usize,
    channels: usize,
    cheb_order: usize,
}

impl Maker for ZeroMaker {
    fn block(&mut self, f: usize, t: usize) -> BlockParams {
        BlockParams::zeros(self.stations, f, t, self.channels, self.cheb_order)
    }

    fn head(&mut self, fan_in: usize, t_p: usize) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
        (Array2::zeros((fan_in, t_p)), Array1::zeros(t_p), Array2::zeros((self.stations, t_p)))
    }
}

impl BlockParams {
    fn zeros(n: usize, f: usize, t: usize, c: usize, k: usize) -> Self {
        BlockParams {
            u1: Array1::zeros(n),
            u2: Array2::zeros((f, n)),
            u3: Array1::zeros(f),
            vt: Array2::zeros((t, t)),
            bt: Array2::zeros((t, t)),
            w1: Array1::zeros(t),
            w2: Array2::zeros((f, t)),
            w3: Array1::zeros(f),
            vs: Array2::zeros((n, n)),
            bs: Array2::zeros((n, n)),
            theta: Array3::zeros((k, f, c)),
            phi: Array3::zeros((3, c, c)),
        }
    }

    pub fn input_channels(&self) -> usize {
        self.u3.len()
    }

    pub fn time_len(&self) -> usize {
        self.w1.len()
    }

    fn named(&self) -> [(&'static str, &[f64], Vec<usize>); 12] {
        let s = |a: &[usize]| a.to_vec();
        [
            ("u1", self.u1.as_slice().unwrap(), s(self.u1.shape())),
            ("u2", self.u2.as_slice().unwrap(), s(self.u2.shape())),
            ("u3", self.u3.as_slice().unwrap(), s(self.u3.shape())),
            ("vt", self.vt.as_slice().unwrap(), s(self.vt.shape())),
            ("bt", self.bt.as_slice().unwrap(), s(self.bt.shape())),
            ("w1", self.w1.as_slice().unwrap(), s(self.w1.shape())),
            ("w2", self.w2.as_slice().unwrap(), s(self.w2.shape())),
            ("w3", self.w3.as_slice().unwrap(), s(self.w3.shape())),
            ("vs", self.vs.as_slice().unwrap(), s(self.vs.shape())),
            ("bs", self.bs.as_slice().unwrap(), s(self.bs.shape())),
            ("theta", self.theta.as_slice().unwrap(), s(self.theta.shape())),
            ("phi", self.phi.as_slice().unwrap(), s(self.phi.shape())),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut [f64]); 12] {
        [
            ("u1", self.u1.as_slice_mut().unwrap()),
            ("u2", self.u2.as_slice_mut().unwrap()),
            ("u3", self.u3.as_slice_mut().unwrap()),
            ("vt", self.vt.as_slice_mut().unwrap()),
            ("bt", self.bt.as_slice_mut().unwrap()),
            ("w1", self.w1.as_slice_mut().unwrap()),
            ("w2", self.w2.as_slice_mut().unwrap()),
            ("w3", self.w3.as_slice_mut().unwrap()),
            ("vs", self.vs.as_slice_mut().unwrap()),
            ("bs", self.bs.as_slice_mut().unwrap()),
            ("theta", self.theta.as_slice_mut().unwrap()),
            ("phi", self.phi.as_slice_mut().unwrap()),
        ]
    }
}

impl ModelParams {
    /// Components whose input window is nonempty, in recent/daily/weekly order.
    pub fn active_components(cfg: &ModelConfig) -> Vec<ComponentKind> {
        [ComponentKind::Recent, ComponentKind::Daily, ComponentKind::Weekly]
            .into_iter()
            .filter(|k| k.window_len(cfg) > 0)
            .collect()
    }

    fn build(cfg: &ModelConfig, maker: &mut dyn Maker) -> Self {
        let t_p = cfg.window.t_p;
        let components = Self::active_components(cfg)
            .into_iter()
            .map(|kind| {
                let t = kind.window_len(cfg);
                let blocks = (0..cfg.blocks)
                    .map(|b| maker.block(if b == 0 { cfg.input_channels() } else { cfg.channels }, t))
                    .collect();
                let (fc_weight, fc_bias, fusion) = maker.head(t * cfg.channels, t_p);
                ComponentParams { kind, blocks, fc_weight, fc_bias, fusion }
            })
            .collect();
        ModelParams { components }
    }

    /// Seeded initialization: every tensor uniform in `+-sqrt(1/fan_in)`,
    /// fusion weights at `1/components` so the initial output is the mean of
    /// the component outputs.
    pub fn init(cfg: &ModelConfig, stations: usize, seed: u64) -> Self {
        let mut maker = RandomMaker {
            rng: ChaCha8Rng::seed_from_u64(seed),
            stations,
            channels: cfg.channels,
            cheb_order: cfg.cheb_order,
            fusion: 1.0 / Self::active_components(cfg).len().max(1) as f64,
        };
        Self::build(cfg, &mut maker)
    }

    pub fn zeros(cfg: &ModelConfig, stations: usize) -> Self {
        let mut maker = ZeroMaker { stations, channels: cfg.channels, cheb_order: cfg.cheb_order };
        Self::build(cfg, &mut maker)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, s| s.fill(0.0));
        z
    }

    pub fn num_stations(&self) -> usize {
        self.components.first().map(|c| c.fusion.nrows()).unwrap_or(0)
    }

    /// Named tensors as flat slices, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64], Vec<usize>)> {
        let mut out = Vec::new();
        for comp in &self.components {
            let cname = comp.kind.name();
            for (b, block) in comp.blocks.iter().enumerate() {
                for (name, data, shape) in block.named() {
                    out.push((format!("{cname}.block{b}.{name}"), data, shape));
                }
            }
            out.push((format!("{cname}.fc_weight"), comp.fc_weight.as_slice().unwrap(), comp.fc_weight.shape().to_vec()));
            out.push((format!("{cname}.fc_bias"), comp.fc_bias.as_slice().unwrap(), comp.fc_bias.shape().to_vec()));
            out.push((format!("{cname}.fusion"), comp.fusion.as_slice().unwrap(), comp.fusion.shape().to_vec()));
        }
        out
    }

    /// Visits every tensor mutably, in the same order as [`Self::tensors`].
    pub fn for_each_mut(&mut self, mut f: impl FnMut(String, &mut [f64])) {
        for comp in &mut self.components {
            let cname = comp.kind.name();
            for (b, block) in comp.blocks.iter_mut().enumerate() {
                for (name, data) in block.named_mut() {
                    f(format!("{cname}.block{b}.{name}"), data);
                }
            }
            f(format!("{cname}.fc_weight"), comp.fc_weight.as_slice_mut().unwrap());
            f(format!("{cname}.fc_bias"), comp.fc_bias.as_slice_mut().unwrap());
            f(format!("{cname}.fusion"), comp.fusion.as_slice_mut().unwrap());
        }
    }

    /// All scalars concatenated in checkpoint order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|t| t.1.iter().copied()).collect()
    }

    /// Inverse of [`Self::to_flat`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.num_scalars() {
            return Err(ModelError::Shape(format!("{} values for {} parameters", flat.len(), self.num_scalars())));
        }
        let mut pos = 0;
        self.for_each_mut(|_, s| {
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        });
        Ok(())
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.1.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let src: Vec<Vec<f64>> = other.tensors().into_iter().map(|t| t.1.to_vec()).collect();
        let mut i = 0;
        self.for_each_mut(|_, dst| {
            for (d, s) in dst.iter_mut().zip(&src[i]) {
                *d += scale * s;
            }
            i += 1;
        });
    }

    pub fn scale(&mut self, factor: f64) {
        self.for_each_mut(|_, s| s.iter_mut().for_each(|v| *v *= factor));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.1.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// First tensor containing a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors().into_iter().find(|t| t.1.iter().any(|v| !v.is_finite())).map(|t| t.0)
    }

    pub fn manifest(&self) -> Vec<TensorInfo> {
        let mut offset = 0;
        self.tensors()
            .into_iter()
            .map(|(name, data, shape)| {
                let info = TensorInfo { name, shape, offset };
                offset += data.len();
                info
            })
            .collect()
    }

    /// JSON manifest of config and tensor shapes, as embedded in checkpoints.
    pub fn manifest_json(&self, cfg: &ModelConfig) -> Result<String, ModelError> {
        let header = CheckpointHeader {
            format: "rstgcn-checkpoint".into(),
            version: CHECKPOINT_VERSION,
            stations: self.num_stations(),
            config: *cfg,
            tensors: self.manifest(),
        };
        Ok(serde_json::to_string_pretty(&header)?)
    }

    /// Checkpoint layout: magic, u64 header length, JSON header (config echo
    /// and tensor manifest), then every tensor as little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, cfg: &ModelConfig, mut w: W) -> Result<(), ModelError> {
        let header = self.manifest_json(cfg)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(header.as_bytes());
        for (_, data, _) in self.tensors() {
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelConfig, ModelParams), ModelError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| ModelError::Checkpoint("truncated header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(body)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {}", header.version)));
        }
        header.config.validate()?;
        let mut params = ModelParams::zeros(&header.config, header.stations);
        let expected = params.manifest();
        if expected != header.tensors {
            return Err(ModelError::Checkpoint("tensor manifest does not match config".into()));
        }
        let payload = &bytes[16 + hlen..];
        if payload.len() != 8 * params.num_scalars() {
            return Err(ModelError::Checkpoint(format!(
                "payload holds {} bytes, expected {}",
                payload.len(),
                8 * params.num_scalars()
            )));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        params.for_each_mut(|_, s| {
            for v in s.iter_mut() {
                *v = values.next().unwrap();
            }
        });
        Ok((header.config, params))
    }
}
