//! The spatio-temporal graph network.
//!
//! Input clips `w x R x 2` pass through graph layers interleaved with node
//! pooling (10 -> 5 -> 1 nodes), then purely temporal layers. Every temporal
//! layer is a valid convolution, so the time axis shrinks from `w` to exactly 1
//! when the receptive field equals the window. The last hidden vector is
//! normalized into the embedding `z`; a linear head maps it to 10 logits.

use crate::error::{Error, Result};
use crate::expr::ExprType;
use crate::graph::{PoolHierarchy, NUM_ROIS};
use crate::motion::features::{FeatureTensor, FLOW_DIMS};
use crate::numcore::rng::label;
use crate::numcore::{glorot_init, Params, Scalar, Tape, Tensor, Var};
use crate::par::{self, Exec};
use serde::{Deserialize, Serialize};

/// Logits per expression type: onset, apex, offset, exp, norm.
pub const LOGITS_PER_TYPE: usize = 5;
pub const HEAD_DIM: usize = 2 * LOGITS_PER_TYPE;
pub const ONSET: usize = 0;
pub const APEX: usize = 1;
pub const OFFSET: usize = 2;
pub const EXP: usize = 3;
pub const NORM: usize = 4;

const EMBED_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpotGcnConfig {
    pub window: usize,
    /// Input channels followed by the output width of every temporal layer.
    pub channels: Vec<usize>,
    /// Temporal kernel of every layer; the first `scales - 1` layers are graph layers.
    pub kernels: Vec<usize>,
    pub hierarchy: PoolHierarchy,
}

impl Default for SpotGcnConfig {
    fn default() -> Self {
        Self {
            window: 17,
            channels: vec![FLOW_DIMS, 32, 64, 128, 128],
            kernels: vec![5; 4],
            hierarchy: PoolHierarchy::default(),
        }
    }
}

impl SpotGcnConfig {
    /// Narrow variant used for CPU-budget runs; same depth, kernels and window.
    pub fn desk() -> Self {
        Self {
            channels: vec![FLOW_DIMS, 8, 16, 32, 32],
            ..Self::default()
        }
    }

    pub fn graph_layers(&self) -> usize {
        self.hierarchy.groups.len()
    }

    pub fn embedding_dim(&self) -> usize {
        *self.channels.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        if self.hierarchy.scales.first() != Some(&NUM_ROIS) || self.hierarchy.scales.last() != Some(&1) {
            return Err(Error::Config(
                "hierarchy must pool the 10 regions down to one node".into(),
            ));
        }
        if self.channels.len() != self.kernels.len() + 1 || self.channels[0] != FLOW_DIMS {
            return Err(Error::Config(format!(
                "channels {:?} do not fit kernels {:?}",
                self.channels, self.kernels
            )));
        }
        if self.channels.contains(&0) || self.kernels.contains(&0) {
            return Err(Error::Config("channels and kernels must be positive".into()));
        }
        if self.kernels.len() < self.graph_layers() {
            return Err(Error::Config("fewer temporal layers than graph scales".into()));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::EvenWindow(self.window));
        }
        let rf = receptive_field(&self.kernels);
        if rf != self.window {
            return Err(Error::Config(format!(
                "receptive field {rf} differs from window {}",
                self.window
            )));
        }
        Ok(())
    }

    fn layer_name(&self, l: usize) -> String {
        let g = self.graph_layers();
        if l < g {
            format!("stgcn{}", l + 1)
        } else {
            format!("tcn{}", l - g + 1)
        }
    }

    /// Parameter names and shapes in checkpoint order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (l, &k) in self.kernels.iter().enumerate() {
            let name = self.layer_name(l);
            let (cin, cout) = (self.channels[l], self.channels[l + 1]);
            out.push((format!("{name}.weight"), vec![k * cin, cout]));
            out.push((format!("{name}.bias"), vec![cout]));
        }
        out.push(("head.weight".into(), vec![self.embedding_dim(), HEAD_DIM]));
        out.push(("head.bias".into(), vec![HEAD_DIM]));
        out
    }
}

/// Temporal receptive field of stacked valid convolutions.
pub fn receptive_field(kernels: &[usize]) -> usize {
    1 + kernels.iter().map(|k| k.saturating_sub(1)).sum::<usize>()
}

/// Glorot weights and zero biases, one derived stream per tensor.
pub fn init_params<T: Scalar>(cfg: &SpotGcnConfig, seed: u64) -> Result<Params<T>> {
    cfg.validate()?;
    let mut p = Params::new();
    for (name, shape) in cfg.param_shapes() {
        let t = if name.ends_with(".bias") {
            Tensor::zeros(&shape)
        } else {
            glorot_init(
                &shape,
                crate::numcore::SplitMix64::derive(seed, &[label(&name)]).next_u64(),
            )?
        };
        p.insert(name, t);
    }
    Ok(p)
}

/// Check that `params` has exactly the configured names and shapes.
pub fn check_params<T: Scalar>(cfg: &SpotGcnConfig, params: &Params<T>) -> Result<()> {
    let shapes = cfg.param_shapes();
    if params.len() != shapes.len() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} tensors, checkpoint has {}",
            shapes.len(),
            params.len()
        )));
    }
    for (name, shape) in shapes {
        let t = params.get(&name)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "`{name}` has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
    }
    Ok(())
}

/// Tape handles for every parameter, in [`SpotGcnConfig::param_shapes`] order.
pub struct ModelVars {
    pub layers: Vec<(Var, Var)>,
    pub head: (Var, Var),
    /// Handles aligned with `params.tensors()`.
    pub by_position: Vec<Var>,
}

/// Put the parameters on `tape`; `trainable = false` records them as constants.
pub fn bind_params<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &SpotGcnConfig,
    params: &Params<T>,
    trainable: bool,
) -> Result<ModelVars> {
    check_params(cfg, params)?;
    let by_position: Vec<Var> = params
        .tensors()
        .iter()
        .map(|t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect();
    let var = |name: &str| by_position[params.position(name).expect("checked above")];
    let layers = (0..cfg.kernels.len())
        .map(|l| {
            let n = cfg.layer_name(l);
            (var(&format!("{n}.weight")), var(&format!("{n}.bias")))
        })
        .collect();
    Ok(ModelVars {
        layers,
        head: (var("head.weight"), var("head.bias")),
        by_position,
    })
}

/// Stack clips (`w x R x 2` each, frame-major) into the network layout `[B, R, w, 2]`.
pub fn clips_to_input<T: Scalar>(clips: &[&[f32]], window: usize) -> Result<Tensor<T>> {
    let per = window * NUM_ROIS * FLOW_DIMS;
    let mut data = Vec::with_capacity(clips.len() * per);
    for clip in clips {
        if clip.len() != per {
            return Err(Error::ShapeMismatch(format!(
                "clip of {} values, expected {window}x{NUM_ROIS}x{FLOW_DIMS}",
                clip.len()
            )));
        }
        for r in 0..NUM_ROIS {
            for s in 0..window {
                let base = (s * NUM_ROIS + r) * FLOW_DIMS;
                data.extend(clip[base..base + FLOW_DIMS].iter().map(|&v| T::from_f64(v as f64)));
            }
        }
    }
    Tensor::new(vec![clips.len(), NUM_ROIS, window, FLOW_DIMS], data)
}

pub struct ForwardVars {
    /// Normalized embeddings, `[B, 1, 1, D]`.
    pub z: Var,
    /// Head logits, `[B, 1, 1, 10]`.
    pub logits: Var,
}

/// Record the network on `tape` for input `x` of shape `[B, R, w, 2]`.
pub fn forward_tape<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &SpotGcnConfig,
    vars: &ModelVars,
    x: Var,
) -> Result<ForwardVars> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 4 || shape[1] != NUM_ROIS || shape[2] != cfg.window || shape[3] != FLOW_DIMS {
        return Err(Error::ShapeMismatch(format!(
            "input {shape:?}, expected [B, {NUM_ROIS}, {}, {FLOW_DIMS}]",
            cfg.window
        )));
    }
    let h = &cfg.hierarchy;
    let mut cur = x;
    for (l, &k) in cfg.kernels.iter().enumerate() {
        let (w, b) = vars.layers[l];
        let u = tape.unfold(cur, k)?;
        let mixed = if l < cfg.graph_layers() {
            let adj: Vec<T> = h.normalized_adjacency(l)?.into_iter().map(T::from_f64).collect();
            tape.graph_mix(u, &adj, h.scales[l])?
        } else {
            u
        };
        let lin = tape.linear(mixed, w, Some(b))?;
        cur = tape.relu(lin);
        if l < cfg.graph_layers() {
            cur = tape.group_max(cur, &h.groups[l])?;
        }
    }
    let out_shape = tape.value(cur).shape();
    if out_shape[1] != 1 || out_shape[2] != 1 {
        return Err(Error::ShapeMismatch(format!(
            "network output {out_shape:?} is not one node at one time step"
        )));
    }
    let z = tape.l2_normalize(cur, T::from_f64(EMBED_EPS));
    let logits = tape.linear(z, vars.head.0, Some(vars.head.1))?;
    Ok(ForwardVars { z, logits })
}

/// Probabilities of one expression type at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeProbs {
    pub onset: f64,
    pub apex: f64,
    pub offset: f64,
    pub exp: f64,
    pub norm: f64,
}

/// The 10 per-frame probabilities, indexed by [`ExprType`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbabilityMap {
    pub types: [TypeProbs; 2],
}

/// Softmax over `logits`, written into `out`.
pub fn softmax(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

impl ProbabilityMap {
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut types = [TypeProbs::default(); 2];
        for t in ExprType::ALL {
            let l = &logits[t.index() * LOGITS_PER_TYPE..(t.index() + 1) * LOGITS_PER_TYPE];
            let mut b = [0.0; 3];
            softmax(&l[..3], &mut b);
            let mut e = [0.0; 2];
            softmax(&l[EXP..=NORM], &mut e);
            types[t.index()] = TypeProbs {
                onset: b[0],
                apex: b[1],
                offset: b[2],
                exp: e[0],
                norm: e[1],
            };
        }
        Self { types }
    }

    pub fn get(&self, t: ExprType) -> &TypeProbs {
        &self.types[t.index()]
    }

    /// Components in head order.
    pub fn to_array(&self) -> [f64; HEAD_DIM] {
        let mut out = [0.0; HEAD_DIM];
        for t in ExprType::ALL {
            let p = self.get(t);
            out[t.index() * LOGITS_PER_TYPE..(t.index() + 1) * LOGITS_PER_TYPE]
                .copy_from_slice(&[p.onset, p.apex, p.offset, p.exp, p.norm]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub probs: ProbabilityMap,
    pub embedding: FrameEmbedding,
    pub logits: Vec<f64>,
}

/// Inference on a batch of clips.
pub fn forward_batch<T: Scalar>(cfg: &SpotGcnConfig, params: &Params<T>, clips: &[&[f32]]) -> Result<Vec<FrameOutput>> {
    let mut tape = Tape::new();
    let vars = bind_params(&mut tape, cfg, params, false)?;
    let x = tape.constant(clips_to_input(clips, cfg.window)?);
    let out = forward_tape(&mut tape, cfg, &vars, x)?;
    let d = cfg.embedding_dim();
    let z = tape.value(out.z).data();
    let logits = tape.value(out.logits).data();
    Ok((0..clips.len())
        .map(|i| {
            let l: Vec<f64> = logits[i * HEAD_DIM..(i + 1) * HEAD_DIM]
                .iter()
                .map(|v| v.as_f64())
                .collect();
            FrameOutput {
                probs: ProbabilityMap::from_logits(&l),
                embedding: FrameEmbedding {
                    z: z[i * d..(i + 1) * d].iter().map(|v| v.as_f64()).collect(),
                },
                logits: l,
            }
        })
        .collect())
}

/// Inference on one clip `o_i`.
pub fn forward<T: Scalar>(cfg: &SpotGcnConfig, params: &Params<T>, clip: &[f32]) -> Result<FrameOutput> {
    Ok(forward_batch(cfg, params, &[clip])?.remove(0))
}

const INFER_CHUNK: usize = 256;

/// Per-frame outputs for a whole video, chunked and spread over `exec`.
pub fn infer_video(
    cfg: &SpotGcnConfig,
    params: &Params<f32>,
    features: &FeatureTensor,
    exec: Exec,
) -> Result<Vec<FrameOutput>> {
    if features.window() != cfg.window || features.rois() != NUM_ROIS {
        return Err(Error::ShapeMismatch(format!(
            "features with window {} and {} regions for a window-{} model",
            features.window(),
            features.rois(),
            cfg.window
        )));
    }
    let n = features.n_frames();
    let chunks = n.div_ceil(INFER_CHUNK);
    let parts = par::try_map_indexed(exec, chunks, |c| {
        let clips: Vec<&[f32]> = (c * INFER_CHUNK..((c + 1) * INFER_CHUNK).min(n))
            .map(|i| features.clip(i))
            .collect();
        forward_batch(cfg, params, &clips)
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// One graph layer on one sample: `relu(A * unfold(x) * W + b)`.
///
/// `x` is `S x T x C_in`, `w` is `(K * C_in) x C_out`; returns `S x (T-K+1) x C_out`.
pub fn stgcn_layer(
    x: &[f64],
    (s, t, cin): (usize, usize, usize),
    adj: &[f64],
    w: &[f64],
    b: &[f64],
    kernel: usize,
) -> Result<Vec<f64>> {
    let mut tape = Tape::<f64>::new();
    let xv = tape.constant(Tensor::new(vec![1, s, t, cin], x.to_vec())?);
    if !w.len().is_multiple_of((kernel * cin).max(1)) || b.len() * kernel * cin != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "weight of {} values for kernel {kernel}, {cin} inputs, {} outputs",
            w.len(),
            b.len()
        )));
    }
    let wv = tape.constant(Tensor::new(vec![kernel * cin, b.len()], w.to_vec())?);
    let bv = tape.constant(Tensor::new(vec![b.len()], b.to_vec())?);
    let u = tape.unfold(xv, kernel)?;
    let m = tape.graph_mix(u, adj, s)?;
    let l = tape.linear(m, wv, Some(bv))?;
    let r = tape.relu(l);
    Ok(tape.value(r).data().to_vec())
}

/// One temporal layer on a single-node sequence: `relu(unfold(x) * W + b)`.
pub fn tcn_layer(x: &[f64], (t, cin): (usize, usize), w: &[f64], b: &[f64], kernel: usize) -> Result<Vec<f64>> {
    stgcn_layer(x, (1, t, cin), &[1.0], w, b, kernel)
}
