//! Recurrent soft-attention model over per-frame region features.
//!
//! One unroll over frames `X_1..X_T` runs:
//!
//! ```text
//! h0, c0   = f_h(pool), f_c(pool)          pool = mean over frames and regions
//! l̂_1      = softmax(W_h·h0 + W_c·mean(X_1))
//! x_t      = Σ_i l̂_t[i] · X_t[i]                     t = 1..T-1
//! h_t, c_t = stacked LSTM step on x_t
//! l̂_{t+1}  = softmax(W_h·h_t(top) + W_c·mean(X_{t+1}))
//! ```
//!
//! The content term of the attention head reads the region mean of the frame
//! being predicted, which does not depend on the attention it produces.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::tensor::{self, Activation, Matrix};

/// Default grid side (7×7 regions).
pub const DEFAULT_GRID: usize = 7;
/// Default LSTM hidden size.
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// K: the frame is split into K×K regions.
    pub grid_side: usize,
    /// D: feature width of one region.
    pub depth: usize,
    /// H: LSTM hidden size.
    pub hidden: usize,
    pub num_layers: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn new(grid_side: usize, depth: usize, hidden: usize, num_layers: usize) -> Self {
        Self {
            grid_side,
            depth,
            hidden,
            num_layers,
            dropout_rate: DEFAULT_DROPOUT,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn regions(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_side == 0 || self.depth == 0 || self.hidden == 0 || self.num_layers == 0 {
            return Err(Error::invalid(format!(
                "model config needs K, D, H and layer count >= 1, got K={} D={} H={} layers={}",
                self.grid_side, self.depth, self.hidden, self.num_layers
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// One frame's region features: K² rows of width D.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCube {
    grid_side: usize,
    regions: Matrix,
}

impl FeatureCube {
    pub fn new(grid_side: usize, regions: Matrix) -> Result<Self> {
        if grid_side == 0 || regions.cols() == 0 {
            return Err(Error::invalid("feature cube needs K >= 1 and D >= 1"));
        }
        if regions.rows() != grid_side * grid_side {
            return Err(Error::shape(
                "FeatureCube::new",
                format!("{} region rows for K={grid_side}", grid_side * grid_side),
                format!("{} rows", regions.rows()),
            ));
        }
        if regions.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature cube contains a non-finite value"));
        }
        Ok(Self { grid_side, regions })
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn depth(&self) -> usize {
        self.regions.cols()
    }

    pub fn num_regions(&self) -> usize {
        self.regions.rows()
    }

    pub fn regions(&self) -> &Matrix {
        &self.regions
    }

    pub fn region(&self, i: usize) -> &[f64] {
        self.regions.row(i)
    }

    /// Average feature row over all regions.
    pub fn region_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.depth()];
        for i in 0..self.num_regions() {
            tensor::add_assign(&mut mean, self.region(i));
        }
        let n = self.num_regions() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        mean
    }
}

/// Probability distribution over the K² grid regions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    probs: Vec<f64>,
}

impl AttentionMap {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("attention map must be nonempty"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(
                "attention map has a negative or non-finite entry",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "attention map sums to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Affine map `M` of one LSTM layer, gate row blocks ordered i, f, o, g.
/// Columns are `[h_prev ; x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            weight: Matrix::zeros(4 * hidden, hidden + input),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols() - self.hidden()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// K²×H, row i scores region i from the hidden state.
    pub w_h: Matrix,
    /// K²×D, row i scores region i from frame content.
    pub w_c: Matrix,
}

/// Two-layer perceptron: tanh hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(output, hidden),
            b2: vec![0.0; output],
        }
    }

    /// Returns `(output, hidden activations)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let hidden = tensor::elementwise(Activation::Tanh, &tensor::affine(&self.w1, &self.b1, x)?);
        let out = tensor::affine(&self.w2, &self.b2, &hidden)?;
        Ok((out, hidden))
    }
}

/// Networks producing the initial LSTM state from pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct InitNetParams {
    pub h: Mlp,
    pub c: Mlp,
}

/// Every learnable weight of the model plus the config that fixes their shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LstmLayerParams>,
    pub attention: AttentionParams,
    pub init: InitNetParams,
}

/// Read-only view of one named parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct ParamTensor<'a> {
    pub name: &'a str,
    pub rows: usize,
    pub cols: usize,
    pub values: &'a [f64],
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ModelParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (k2, d, h) = (config.regions(), config.depth, config.hidden);
        let layers = (0..config.num_layers)
            .map(|l| LstmLayerParams::zeros(h, if l == 0 { d } else { h }))
            .collect();
        Ok(Self {
            config,
            layers,
            attention: AttentionParams {
                w_h: Matrix::zeros(k2, h),
                w_c: Matrix::zeros(k2, d),
            },
            init: InitNetParams {
                h: Mlp::zeros(d, h, h),
                c: Mlp::zeros(d, h, h),
            },
        })
    }

    /// Glorot-uniform weights, zero biases except forget-gate biases at 1.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        let h = config.hidden;
        for layer in &mut params.layers {
            let (rows, cols) = layer.weight.shape();
            layer.weight = Matrix::uniform(rows, cols, glorot_bound(cols, rows), rng);
            layer.bias[h..2 * h].fill(1.0);
        }
        let att = &mut params.attention;
        let (k2, d) = att.w_c.shape();
        att.w_h = Matrix::uniform(k2, h, glorot_bound(h, k2), rng);
        att.w_c = Matrix::uniform(k2, d, glorot_bound(d, k2), rng);
        for mlp in [&mut params.init.h, &mut params.init.c] {
            mlp.w1 = Matrix::uniform(h, config.depth, glorot_bound(config.depth, h), rng);
            mlp.w2 = Matrix::uniform(h, h, glorot_bound(h, h), rng);
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for buf in z.buffers_mut() {
            buf.fill(0.0);
        }
        z
    }

    /// Canonical tensor order; checkpoints and flat coordinates follow it.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.layers.len() {
            names.push(format!("lstm.{l}.weight"));
            names.push(format!("lstm.{l}.bias"));
        }
        names.push("attention.w_h".into());
        names.push("attention.w_c".into());
        for net in ["init_h", "init_c"] {
            for part in ["w1", "b1", "w2", "b2"] {
                names.push(format!("{net}.{part}"));
            }
        }
        names
    }

    /// `(rows, cols, values)` per tensor in canonical order. Biases are `n×1`.
    pub fn buffers(&self) -> Vec<(usize, usize, &[f64])> {
        fn mat(m: &Matrix) -> (usize, usize, &[f64]) {
            (m.rows(), m.cols(), m.as_slice())
        }
        fn vec(v: &[f64]) -> (usize, usize, &[f64]) {
            (v.len(), 1, v)
        }
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(mat(&layer.weight));
            out.push(vec(&layer.bias));
        }
        out.push(mat(&self.attention.w_h));
        out.push(mat(&self.attention.w_c));
        for net in [&self.init.h, &self.init.c] {
            out.push(mat(&net.w1));
            out.push(vec(&net.b1));
            out.push(mat(&net.w2));
            out.push(vec(&net.b2));
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.weight.as_mut_slice());
            out.push(&mut layer.bias);
        }
        out.push(self.attention.w_h.as_mut_slice());
        out.push(self.attention.w_c.as_mut_slice());
        for net in [&mut self.init.h, &mut self.init.c] {
            out.push(net.w1.as_mut_slice());
            out.push(&mut net.b1);
            out.push(net.w2.as_mut_slice());
            out.push(&mut net.b2);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.buffers().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// Value at a flat coordinate over the canonical tensor order.
    pub fn get_flat(&self, index: usize) -> Option<f64> {
        let mut rest = index;
        for (_, _, values) in self.buffers() {
            if rest < values.len() {
                return Some(values[rest]);
            }
            rest -= values.len();
        }
        None
    }

    pub fn set_flat(&mut self, index: usize, value: f64) -> Result<()> {
        let total = self.num_parameters();
        let mut rest = index;
        for buf in self.buffers_mut() {
            if rest < buf.len() {
                buf[rest] = value;
                return Ok(());
            }
            rest -= buf.len();
        }
        Err(Error::invalid(format!(
            "parameter coordinate {index} out of range (model has {total})"
        )))
    }

    /// Σθ² over every learnable parameter, biases included.
    pub fn sum_squares(&self) -> f64 {
        self.buffers()
            .iter()
            .flat_map(|(_, _, v)| v.iter())
            .map(|x| x * x)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.buffers()
            .iter()
            .all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// Checks every tensor shape against `config`.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let expected = Self::zeros(self.config)?;
        if expected.layers.len() != self.layers.len() {
            return Err(Error::shape(
                "ModelParams",
                expected.layers.len(),
                self.layers.len(),
            ));
        }
        for ((name, want), got) in expected
            .tensor_names()
            .into_iter()
            .zip(expected.buffers())
            .zip(self.buffers())
        {
            if (want.0, want.1) != (got.0, got.1) {
                return Err(Error::Shape {
                    op: "ModelParams",
                    expected: format!("{name} {}x{}", want.0, want.1),
                    found: format!("{}x{}", got.0, got.1),
                });
            }
        }
        Ok(())
    }
}

/// Double average over frames and regions, the input of the init networks.
pub fn mean_pool(frames: &[FeatureCube]) -> Result<Vec<f64>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("mean_pool of an empty sequence"))?;
    let mut pooled = vec![0.0; first.depth()];
    for (t, cube) in frames.iter().enumerate() {
        if cube.grid_side() != first.grid_side() || cube.depth() != first.depth() {
            return Err(Error::shape(
                "mean_pool",
                format!("K={} D={}", first.grid_side(), first.depth()),
                format!("frame {t} with K={} D={}", cube.grid_side(), cube.depth()),
            ));
        }
        tensor::add_assign(&mut pooled, &cube.region_mean());
    }
    let t = frames.len() as f64;
    pooled.iter_mut().for_each(|v| *v /= t);
    Ok(pooled)
}

/// Hidden activations of both init networks, kept for backprop.
#[derive(Debug, Clone)]
pub struct InitCache {
    pub pooled: Vec<f64>,
    pub h_hidden: Vec<f64>,
    pub c_hidden: Vec<f64>,
}

pub fn init_state(init: &InitNetParams, pooled: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h0, c0, _) = init_state_cached(init, pooled)?;
    Ok((h0, c0))
}

fn init_state_cached(
    init: &InitNetParams,
    pooled: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, InitCache)> {
    let (h0, h_hidden) = init.h.forward(pooled)?;
    let (c0, c_hidden) = init.c.forward(pooled)?;
    Ok((
        h0,
        c0,
        InitCache {
            pooled: pooled.to_vec(),
            h_hidden,
            c_hidden,
        },
    ))
}

/// Everything one LSTM layer computed at one step.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    /// Dropout mask applied to `h` on its way up; `None` outside training.
    pub mask: Option<Vec<f64>>,
}

impl LstmStepCache {
    /// `h` as seen by the next layer or the attention head.
    pub fn output(&self) -> Vec<f64> {
        match &self.mask {
            Some(m) => self.h.iter().zip(m).map(|(h, m)| h * m).collect(),
            None => self.h.clone(),
        }
    }
}

pub fn lstm_step(
    layer: &LstmLayerParams,
    h_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, LstmStepCache)> {
    let hsz = layer.hidden();
    if h_prev.len() != hsz || c_prev.len() != hsz || x.len() != layer.input_width() {
        return Err(Error::shape(
            "lstm_step",
            format!("h[{hsz}], c[{hsz}], x[{}]", layer.input_width()),
            format!("h[{}], c[{}], x[{}]", h_prev.len(), c_prev.len(), x.len()),
        ));
    }
    let mut joined = Vec::with_capacity(hsz + x.len());
    joined.extend_from_slice(h_prev);
    joined.extend_from_slice(x);
    let z = tensor::affine(&layer.weight, &layer.bias, &joined)?;

    let i = tensor::elementwise(Activation::Sigmoid, &z[..hsz]);
    let f = tensor::elementwise(Activation::Sigmoid, &z[hsz..2 * hsz]);
    let o = tensor::elementwise(Activation::Sigmoid, &z[2 * hsz..3 * hsz]);
    let g = tensor::elementwise(Activation::Tanh, &z[3 * hsz..]);
    let c: Vec<f64> = (0..hsz).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c = tensor::elementwise(Activation::Tanh, &c);
    let h: Vec<f64> = (0..hsz).map(|k| o[k] * tanh_c[k]).collect();

    let cache = LstmStepCache {
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        input: x.to_vec(),
        i,
        f,
        o,
        g,
        c: c.clone(),
        tanh_c,
        h: h.clone(),
        mask: None,
    };
    Ok((h, c, cache))
}

/// Unnormalized attention scores for the frame `next_cube`.
pub fn attention_logits(att: &AttentionParams, h_top: &[f64], content: &[f64]) -> Result<Vec<f64>> {
    let mut logits = att.w_h.matvec(h_top)?;
    let from_content = att.w_c.matvec(content)?;
    tensor::add_assign(&mut logits, &from_content);
    Ok(logits)
}

pub fn attend(
    att: &AttentionParams,
    h_top: &[f64],
    next_cube: &FeatureCube,
) -> Result<AttentionMap> {
    if next_cube.num_regions() != att.w_h.rows() {
        return Err(Error::shape(
            "attend",
            format!("{} regions", att.w_h.rows()),
            format!("{} regions", next_cube.num_regions()),
        ));
    }
    let logits = attention_logits(att, h_top, &next_cube.region_mean())?;
    Ok(AttentionMap {
        probs: tensor::softmax(&logits)?,
    })
}

/// Attention-weighted sum of region features.
pub fn blend(map: &AttentionMap, cube: &FeatureCube) -> Result<Vec<f64>> {
    blend_probs(map.probs(), cube)
}

fn blend_probs(probs: &[f64], cube: &FeatureCube) -> Result<Vec<f64>> {
    if probs.len() != cube.num_regions() {
        return Err(Error::shape("blend", cube.num_regions(), probs.len()));
    }
    cube.regions().matvec_t(probs)
}

/// Whether an unroll samples dropout masks.
pub enum Mode<'a> {
    Inference,
    Training(&'a mut dyn RngCore),
}

/// Intermediate values of one unroll, consumed by backprop.
#[derive(Debug, Clone)]
pub struct StateCache {
    pub frames: Vec<FeatureCube>,
    pub init: InitCache,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
    /// Region mean of every frame (the attention content input).
    pub region_means: Vec<Vec<f64>>,
    /// One logit vector and probability vector per frame.
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    /// Blended input `x_t` for t = 1..T-1.
    pub blended: Vec<Vec<f64>>,
    /// `steps[t][layer]` for t = 1..T-1.
    pub steps: Vec<Vec<LstmStepCache>>,
}

impl StateCache {
    /// Number of unrolled frames T.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_frames(config: &ModelConfig, frames: &[FeatureCube]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::invalid("cannot unroll over an empty frame sequence"));
    }
    for (t, cube) in frames.iter().enumerate() {
        if cube.grid_side() != config.grid_side || cube.depth() != config.depth {
            return Err(Error::shape(
                "forward_sequence",
                format!("K={} D={}", config.grid_side, config.depth),
                format!("frame {t} with K={} D={}", cube.grid_side(), cube.depth()),
            ));
        }
    }
    Ok(())
}

/// Unrolls the model over `frames`, emitting one attention map per frame.
pub fn forward_sequence(
    params: &ModelParams,
    frames: &[FeatureCube],
    mut mode: Mode<'_>,
) -> Result<(Vec<AttentionMap>, StateCache)> {
    let cfg = &params.config;
    check_frames(cfg, frames)?;

    let pooled = mean_pool(frames)?;
    let (h0, c0, init) = init_state_cached(&params.init, &pooled)?;
    let region_means: Vec<Vec<f64>> = frames.iter().map(FeatureCube::region_mean).collect();

    let t_len = frames.len();
    let mut logits = Vec::with_capacity(t_len);
    let mut probs = Vec::with_capacity(t_len);
    let mut blended = Vec::with_capacity(t_len.saturating_sub(1));
    let mut steps: Vec<Vec<LstmStepCache>> = Vec::with_capacity(t_len.saturating_sub(1));

    let first = attention_logits(&params.attention, &h0, &region_means[0])?;
    probs.push(tensor::softmax(&first)?);
    logits.push(first);

    let mut h_state = vec![h0.clone(); params.layers.len()];
    let mut c_state = vec![c0.clone(); params.layers.len()];

    for t in 0..t_len - 1 {
        let x = blend_probs(&probs[t], &frames[t])?;
        let mut input = x.clone();
        let mut layer_caches = Vec::with_capacity(params.layers.len());
        for (l, layer) in params.layers.iter().enumerate() {
            let (h, c, mut cache) = lstm_step(layer, &h_state[l], &c_state[l], &input)?;
            if let Mode::Training(rng) = &mut mode {
                if cfg.dropout_rate > 0.0 {
                    cache.mask = Some(tensor::dropout_mask(cfg.dropout_rate, h.len(), &mut **rng)?);
                }
            }
            input = cache.output();
            h_state[l] = h;
            c_state[l] = c;
            layer_caches.push(cache);
        }
        let next = attention_logits(&params.attention, &input, &region_means[t + 1])?;
        probs.push(tensor::softmax(&next)?);
        logits.push(next);
        blended.push(x);
        steps.push(layer_caches);
    }

    let maps = probs
        .iter()
        .map(|p| AttentionMap { probs: p.clone() })
        .collect();
    let cache = StateCache {
        frames: frames.to_vec(),
        init,
        h0,
        c0,
        region_means,
        logits,
        probs,
        blended,
        steps,
    };
    Ok((maps, cache))
}

/// Inference-mode unroll returning only the maps.
pub fn predict(params: &ModelParams, frames: &[FeatureCube]) -> Result<Vec<AttentionMap>> {
    forward_sequence(params, frames, Mode::Inference).map(|(maps, _)| maps)
}
