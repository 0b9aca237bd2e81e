//! Forward pass and backpropagation through time.
//!
//! Sequences flow between layers time-major, `(timesteps, batch, units)`, so
//! each timestep is a contiguous `(batch, units)` block and input projections
//! for all timesteps collapse into one matrix product. Parameters live in a
//! single flat vector; see [`parameter_blocks`] for the layout.

use ndarray::{linalg::general_mat_mul, s, Array2, Array3, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::batch::{LabeledBatch, Targets};
use crate::nn::loss::categorical_cross_entropy;
use crate::nn::spec::{layer_parameter_counts, Activation, GruVariant, LayerSpec, NetworkSpec, Task};
use crate::seed;
use crate::tensor::Tensor3;

/// Rows per chunk in [`Network::predict`]; bounds peak memory of the gate caches.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout is the identity.
    Inference,
    /// Dropout masks are drawn from a ChaCha stream seeded with `seed`.
    Train { seed: u64 },
}

/// A layer activation: a time-major sequence or a flat `(batch, units)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Act {
    Seq(Array3<f64>),
    Flat(Array2<f64>),
}

impl Act {
    pub fn is_finite(&self) -> bool {
        match self {
            Act::Seq(a) => a.iter().all(|v| v.is_finite()),
            Act::Flat(a) => a.iter().all(|v| v.is_finite()),
        }
    }

    fn flat(&self) -> &Array2<f64> {
        match self {
            Act::Flat(a) => a,
            Act::Seq(_) => unreachable!("validated specs never feed a sequence to a dense layer"),
        }
    }

    fn seq(&self) -> &Array3<f64> {
        match self {
            Act::Seq(a) => a,
            Act::Flat(_) => unreachable!("validated specs never feed a flat matrix to a recurrent layer"),
        }
    }
}

/// One named weight matrix or bias vector inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub layer: usize,
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Enumerate every weight matrix and bias vector of `spec`, in storage order.
///
/// Kernels are stored row-major as `(fan_in, gates * units)`. LSTM gate order
/// is input, forget, cell, output; GRU gate order is update, reset, candidate.
pub fn parameter_blocks(spec: &NetworkSpec) -> Vec<ParamBlock> {
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut push = |layer, name, rows, cols| {
        blocks.push(ParamBlock {
            layer,
            name,
            offset,
            rows,
            cols,
        });
        offset += rows * cols;
    };
    for (i, (layer, fan_in)) in spec.layers.iter().zip(spec.fan_ins()).enumerate() {
        match *layer {
            LayerSpec::Dense { units, .. } => {
                push(i, "kernel", fan_in, units);
                push(i, "bias", 1, units);
            }
            LayerSpec::Lstm { units, .. } => {
                push(i, "input_kernel", fan_in, 4 * units);
                push(i, "recurrent_kernel", units, 4 * units);
                push(i, "bias", 1, 4 * units);
            }
            LayerSpec::Gru { units, .. } => {
                push(i, "input_kernel", fan_in, 3 * units);
                push(i, "recurrent_kernel", units, 3 * units);
                match spec.gru_variant {
                    GruVariant::ResetAfter => {
                        push(i, "input_bias", 1, 3 * units);
                        push(i, "recurrent_bias", 1, 3 * units);
                    }
                    GruVariant::ResetBefore => push(i, "bias", 1, 3 * units),
                }
            }
            LayerSpec::Dropout { .. } => {}
        }
    }
    blocks
}

#[derive(Debug, Clone)]
enum Cache {
    Dense,
    Dropout { mask: Option<Act> },
    Lstm(LstmCache),
    Gru(GruCache),
}

#[derive(Debug, Clone)]
struct LstmCache {
    mask: Option<Array2<f64>>,
    /// Post-activation gates, `(T, B, 4U)`.
    gates: Array3<f64>,
    cell: Array3<f64>,
    hidden: Array3<f64>,
}

#[derive(Debug, Clone)]
struct GruCache {
    mask: Option<Array2<f64>>,
    update: Array3<f64>,
    reset: Array3<f64>,
    candidate: Array3<f64>,
    /// Recurrent candidate projection `h·W_hn + b_hn`, reset-after variant only.
    recurrent_candidate: Option<Array3<f64>>,
    hidden: Array3<f64>,
}

/// Everything recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Network input after the sequence/last-step conversion.
    pub input: Act,
    /// Output of each layer, same indexing as `NetworkSpec::layers`.
    pub activations: Vec<Act>,
    caches: Vec<Cache>,
}

impl ForwardPass {
    pub fn output(&self) -> &Array2<f64> {
        self.activations
            .last()
            .expect("validated specs have at least one layer")
            .flat()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<f64>,
    offsets: Vec<usize>,
    rng_seed: u64,
}

impl Network {
    /// Glorot-uniform kernels and zero biases (LSTM forget-gate bias 1),
    /// drawn from `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Network::zeros(spec)?;
        net.rng_seed = seed;
        let mut rng = seed::rng(seed::derive(seed, &[0x1417]));
        let blocks = parameter_blocks(&net.spec);
        for block in &blocks {
            let layer = &net.spec.layers[block.layer];
            let dst = &mut net.params[block.range()];
            match block.name {
                "kernel" | "input_kernel" | "recurrent_kernel" => {
                    let limit = (6.0 / (block.rows + block.cols) as f64).sqrt();
                    for w in dst.iter_mut() {
                        *w = rng.random_range(-limit..limit);
                    }
                }
                "bias" => {
                    if let LayerSpec::Lstm { units, .. } = *layer {
                        dst[units..2 * units].fill(1.0);
                    }
                }
                _ => {}
            }
        }
        Ok(net)
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let counts = layer_parameter_counts(&spec);
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let total = *offsets.last().unwrap();
        Ok(Network {
            spec,
            params: vec![0.0; total],
            offsets,
            rng_seed: 0,
        })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<f64>, rng_seed: u64) -> Result<Self> {
        let mut net = Network::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::shape(format!(
                "spec needs {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("parameter", None));
        }
        net.params = params;
        net.rng_seed = rng_seed;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape("parameter vector length mismatch"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn task(&self) -> Task {
        self.spec.task().expect("validated at construction")
    }

    pub fn outputs(&self) -> usize {
        self.spec.output_width()
    }

    fn layer_params(&self, i: usize) -> &[f64] {
        &self.params[self.offsets[i]..self.offsets[i + 1]]
    }

    fn check_input(&self, x: &Tensor3) -> Result<()> {
        let (_, t, f) = x.shape();
        if f != self.spec.input_features {
            return Err(Error::shape(format!(
                "model expects {} features, input has {f}",
                self.spec.input_features
            )));
        }
        if !self.spec.reads_last_step() {
            if let Some(expected) = self.spec.timesteps {
                if t != expected {
                    return Err(Error::shape(format!(
                        "model expects {expected} timesteps, input has {t}"
                    )));
                }
            }
        }
        if t == 0 {
            return Err(Error::shape("windows have zero timesteps"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor3, mode: Mode) -> Result<ForwardPass> {
        self.check_input(x)?;
        let input = if self.spec.reads_last_step() {
            Act::Flat(x.last_step())
        } else {
            Act::Seq(
                x.as_array()
                    .view()
                    .permuted_axes([1, 0, 2])
                    .as_standard_layout()
                    .into_owned(),
            )
        };
        let mut rng = match mode {
            Mode::Inference => None,
            Mode::Train { seed } => Some(seed::rng(seed)),
        };
        let fan_ins = self.spec.fan_ins();
        let mut activations: Vec<Act> = Vec::with_capacity(self.spec.layers.len());
        let mut caches = Vec::with_capacity(self.spec.layers.len());

        for (i, layer) in self.spec.layers.iter().enumerate() {
            let inp = if i == 0 { &input } else { &activations[i - 1] };
            let p = self.layer_params(i);
            let (out, cache) = match *layer {
                LayerSpec::Dense { units, activation } => (
                    Act::Flat(dense_forward(p, fan_ins[i], units, activation, inp.flat())),
                    Cache::Dense,
                ),
                LayerSpec::Dropout { rate } => {
                    let mask = match rng.as_mut() {
                        Some(rng) if rate > 0.0 => Some(dropout_mask_like(inp, rate, rng)),
                        _ => None,
                    };
                    let out = match &mask {
                        None => inp.clone(),
                        Some(Act::Seq(m)) => Act::Seq(inp.seq() * m),
                        Some(Act::Flat(m)) => Act::Flat(inp.flat() * m),
                    };
                    (out, Cache::Dropout { mask })
                }
                LayerSpec::Lstm {
                    units,
                    recurrent_dropout,
                } => {
                    let x = inp.seq();
                    let mask = recurrent_mask(rng.as_mut(), x.dim().1, units, recurrent_dropout);
                    let cache = lstm_forward(p, fan_ins[i], units, x, mask);
                    (self.recurrent_output(i, &cache.hidden), Cache::Lstm(cache))
                }
                LayerSpec::Gru {
                    units,
                    recurrent_dropout,
                } => {
                    let x = inp.seq();
                    let mask = recurrent_mask(rng.as_mut(), x.dim().1, units, recurrent_dropout);
                    let cache = gru_forward(p, fan_ins[i], units, self.spec.gru_variant, x, mask);
                    (self.recurrent_output(i, &cache.hidden), Cache::Gru(cache))
                }
            };
            if !out.is_finite() {
                return Err(Error::numeric("activation", Some(i)));
            }
            activations.push(out);
            caches.push(cache);
        }
        Ok(ForwardPass {
            input,
            activations,
            caches,
        })
    }

    fn recurrent_output(&self, i: usize, hidden: &Array3<f64>) -> Act {
        if self.spec.returns_sequence(i) {
            Act::Seq(hidden.clone())
        } else {
            let t = hidden.dim().0;
            Act::Flat(hidden.index_axis(Axis(0), t - 1).to_owned())
        }
    }

    /// Inference-mode outputs, `(batch, outputs)`: class probabilities or FMS.
    pub fn predict(&self, x: &Tensor3) -> Result<Array2<f64>> {
        let n = x.batch();
        if n <= PREDICT_CHUNK {
            return Ok(self.forward(x, Mode::Inference)?.output().clone());
        }
        let mut out = Array2::zeros((n, self.outputs()));
        let indices: Vec<usize> = (0..n).collect();
        for chunk in indices.chunks(PREDICT_CHUNK) {
            let part = self.forward(&x.select(chunk), Mode::Inference)?;
            out.slice_mut(s![chunk[0]..chunk[0] + chunk.len(), ..])
                .assign(part.output());
        }
        Ok(out)
    }

    /// Mean loss of the batch: cross-entropy for classification, RMSE for regression.
    pub fn loss(&self, batch: &LabeledBatch, mode: Mode) -> Result<f64> {
        let pass = self.forward(&batch.inputs, mode)?;
        Ok(head_gradient(pass.output(), &batch.targets, self.task())?.0)
    }

    /// Loss and its gradient with respect to every parameter.
    ///
    /// With `Mode::Train` the dropout masks are those of the forward pass
    /// drawn from the same seed.
    pub fn loss_and_gradient(&self, batch: &LabeledBatch, mode: Mode) -> Result<(f64, Vec<f64>)> {
        let pass = self.forward(&batch.inputs, mode)?;
        let (loss, d_head) = head_gradient(pass.output(), &batch.targets, self.task())?;
        let grad = self.backward(&pass, d_head)?;
        Ok((loss, grad))
    }

    fn backward(&self, pass: &ForwardPass, d_head: Array2<f64>) -> Result<Vec<f64>> {
        let fan_ins = self.spec.fan_ins();
        let last = self.spec.layers.len() - 1;
        let mut grad = vec![0.0; self.params.len()];
        // Gradient with respect to the output of layer i; for the head it is
        // already with respect to the pre-activation.
        let mut d = Act::Flat(d_head);

        for i in (0..=last).rev() {
            let inp = if i == 0 { &pass.input } else { &pass.activations[i - 1] };
            let need_dx = i > 0;
            let p = self.layer_params(i);
            let g = &mut grad[self.offsets[i]..self.offsets[i + 1]];
            d = match (&self.spec.layers[i], &pass.caches[i]) {
                (&LayerSpec::Dense { units, activation }, Cache::Dense) => {
                    let mut d_pre = match d {
                        Act::Flat(a) => a,
                        Act::Seq(_) => unreachable!(),
                    };
                    if i != last && activation == Activation::Relu {
                        let out = pass.activations[i].flat();
                        d_pre.zip_mut_with(out, |dv, &o| {
                            if o <= 0.0 {
                                *dv = 0.0
                            }
                        });
                    }
                    dense_backward(p, g, fan_ins[i], units, inp.flat(), &d_pre, need_dx)
                }
                (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => match (d, mask) {
                    (d, None) => d,
                    (Act::Seq(a), Some(Act::Seq(m))) => Act::Seq(a * m),
                    (Act::Flat(a), Some(Act::Flat(m))) => Act::Flat(a * m),
                    _ => unreachable!("dropout mask matches its activation"),
                },
                (&LayerSpec::Lstm { units, .. }, Cache::Lstm(cache)) => {
                    lstm_backward(p, g, fan_ins[i], units, inp.seq(), cache, &d, need_dx)
                }
                (&LayerSpec::Gru { units, .. }, Cache::Gru(cache)) => gru_backward(
                    p,
                    g,
                    fan_ins[i],
                    units,
                    self.spec.gru_variant,
                    inp.seq(),
                    cache,
                    &d,
                    need_dx,
                ),
                _ => unreachable!("cache kind follows layer kind"),
            };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("gradient", Some(i)));
            }
        }
        Ok(grad)
    }
}

/// Loss value and its gradient with respect to the head's pre-activation.
fn head_gradient(out: &Array2<f64>, targets: &Targets, task: Task) -> Result<(f64, Array2<f64>)> {
    let n = out.nrows() as f64;
    match (task, targets) {
        (Task::Classification, Targets::Classes(labels)) => {
            let loss = categorical_cross_entropy(out.view(), labels.view())?;
            // d/dlogits of mean CE through softmax; exact except where the
            // clamp is active.
            let d = (out - labels) / n;
            Ok((loss, d))
        }
        (Task::Regression, Targets::Fms(t)) => {
            if t.len() != out.nrows() {
                return Err(Error::shape("targets do not match predictions"));
            }
            let pred: Vec<f64> = out.column(0).to_vec();
            let loss = crate::nn::loss::rmse_loss(&pred, t)?;
            let mut d = Array2::zeros(out.raw_dim());
            if loss > 0.0 {
                for (i, (p, y)) in pred.iter().zip(t).enumerate() {
                    d[[i, 0]] = (p - y) / (n * loss);
                }
            }
            Ok((loss, d))
        }
        _ => Err(Error::arg("target kind does not match the network head")),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn kernel(p: &[f64], offset: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &p[offset..offset + rows * cols]).expect("block fits")
}

fn kernel_mut(g: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut g[..rows * cols]).expect("block fits")
}

fn add_row_sums(dst: &mut [f64], m: ArrayView2<'_, f64>) {
    let mut dst = ArrayViewMut1::from(dst);
    dst += &m.sum_axis(Axis(0));
}

fn dropout_mask_like(act: &Act, rate: f64, rng: &mut ChaCha8Rng) -> Act {
    let keep = 1.0 / (1.0 - rate);
    let mut draw = |_: &mut f64| -> f64 {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    };
    match act {
        Act::Seq(a) => {
            let mut m = Array3::zeros(a.raw_dim());
            m.map_inplace(|v| *v = draw(v));
            Act::Seq(m)
        }
        Act::Flat(a) => {
            let mut m = Array2::zeros(a.raw_dim());
            m.map_inplace(|v| *v = draw(v));
            Act::Flat(m)
        }
    }
}

/// Variational mask on the recurrent state: one draw per (sample, unit),
/// shared by every timestep.
fn recurrent_mask(rng: Option<&mut ChaCha8Rng>, batch: usize, units: usize, rate: f64) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_fn((batch, units), |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

fn masked(h: ArrayView2<'_, f64>, mask: Option<&Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => &h * m,
        None => h.to_owned(),
    }
}

fn dense_forward(p: &[f64], fan_in: usize, units: usize, activation: Activation, x: &Array2<f64>) -> Array2<f64> {
    let w = kernel(p, 0, fan_in, units);
    let b = ArrayView1::from(&p[fan_in * units..fan_in * units + units]);
    let mut y = x.dot(&w);
    y += &b;
    match activation {
        Activation::Linear => {}
        Activation::Relu => y.mapv_inplace(|v| v.max(0.0)),
        Activation::Softmax => {
            for mut row in y.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row /= sum;
            }
        }
    }
    y
}

fn dense_backward(
    p: &[f64],
    g: &mut [f64],
    fan_in: usize,
    units: usize,
    x: &Array2<f64>,
    d_pre: &Array2<f64>,
    need_dx: bool,
) -> Act {
    let (gw, gb) = g.split_at_mut(fan_in * units);
    let mut gw = kernel_mut(gw, fan_in, units);
    general_mat_mul(1.0, &x.t(), d_pre, 1.0, &mut gw);
    add_row_sums(gb, d_pre.view());
    if need_dx {
        Act::Flat(d_pre.dot(&kernel(p, 0, fan_in, units).t()))
    } else {
        Act::Flat(Array2::zeros((0, 0)))
    }
}

/// Input projections for every timestep at once: `(T, B, cols)`.
fn project_inputs(x: &Array3<f64>, w: ArrayView2<'_, f64>, bias: ArrayView1<'_, f64>) -> Array3<f64> {
    let (t, b, f) = x.dim();
    let x2 = x.view().into_shape_with_order((t * b, f)).expect("standard layout");
    let mut pre = x2.dot(&w);
    pre += &bias;
    let cols = w.ncols();
    pre.into_shape_with_order((t, b, cols)).expect("standard layout")
}

/// Accumulate input-kernel and input-bias gradients from `(T, B, cols)`
/// pre-activation gradients and return the gradient for the layer input.
fn input_projection_backward(
    x: &Array3<f64>,
    w: ArrayView2<'_, f64>,
    d_pre: Array3<f64>,
    gw: &mut [f64],
    gb: &mut [f64],
    need_dx: bool,
) -> Act {
    let (t, b, f) = x.dim();
    let cols = w.ncols();
    let x2 = x.view().into_shape_with_order((t * b, f)).expect("standard layout");
    let d2 = d_pre.into_shape_with_order((t * b, cols)).expect("standard layout");
    let mut gw = kernel_mut(gw, f, cols);
    general_mat_mul(1.0, &x2.t(), &d2, 1.0, &mut gw);
    add_row_sums(gb, d2.view());
    if need_dx {
        let dx = d2.dot(&w.t());
        Act::Seq(dx.into_shape_with_order((t, b, f)).expect("standard layout"))
    } else {
        Act::Flat(Array2::zeros((0, 0)))
    }
}

/// Add the upstream gradient for timestep `t` into `dh`.
fn add_upstream(dh: &mut Array2<f64>, d_out: &Act, t: usize, last: usize) {
    match d_out {
        Act::Seq(a) => *dh += &a.index_axis(Axis(0), t),
        Act::Flat(a) if t == last => *dh += a,
        Act::Flat(_) => {}
    }
}

fn lstm_forward(p: &[f64], fan_in: usize, u: usize, x: &Array3<f64>, mask: Option<Array2<f64>>) -> LstmCache {
    let (steps, b, _) = x.dim();
    let g4 = 4 * u;
    let wx = kernel(p, 0, fan_in, g4);
    let wh = kernel(p, fan_in * g4, u, g4);
    let bias = ArrayView1::from(&p[(fan_in + u) * g4..(fan_in + u + 1) * g4]);

    let mut gates = project_inputs(x, wx, bias);
    let mut cell = Array3::zeros((steps, b, u));
    let mut hidden = Array3::zeros((steps, b, u));

    let mut h = Array2::<f64>::zeros((b, u));
    let mut c = Array2::<f64>::zeros((b, u));
    for t in 0..steps {
        let mut z = gates.index_axis_mut(Axis(0), t);
        if t > 0 {
            match &mask {
                Some(m) => general_mat_mul(1.0, &(&h * m), &wh, 1.0, &mut z),
                None => general_mat_mul(1.0, &h, &wh, 1.0, &mut z),
            }
        }
        let zs = z.as_slice_mut().expect("contiguous timestep");
        let cs = c.as_slice_mut().unwrap();
        let hs = h.as_slice_mut().unwrap();
        for r in 0..b {
            let row = &mut zs[r * g4..(r + 1) * g4];
            for j in 0..u {
                let ig = sigmoid(row[j]);
                let fg = sigmoid(row[u + j]);
                let gg = row[2 * u + j].tanh();
                let og = sigmoid(row[3 * u + j]);
                row[j] = ig;
                row[u + j] = fg;
                row[2 * u + j] = gg;
                row[3 * u + j] = og;
                let k = r * u + j;
                let cv = fg * cs[k] + ig * gg;
                cs[k] = cv;
                hs[k] = og * cv.tanh();
            }
        }
        cell.index_axis_mut(Axis(0), t).assign(&c);
        hidden.index_axis_mut(Axis(0), t).assign(&h);
    }
    LstmCache {
        mask,
        gates,
        cell,
        hidden,
    }
}

#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    p: &[f64],
    g: &mut [f64],
    fan_in: usize,
    u: usize,
    x: &Array3<f64>,
    cache: &LstmCache,
    d_out: &Act,
    need_dx: bool,
) -> Act {
    let (steps, b, _) = x.dim();
    let g4 = 4 * u;
    let wx = kernel(p, 0, fan_in, g4);
    let wh = kernel(p, fan_in * g4, u, g4);
    let (gwx, rest) = g.split_at_mut(fan_in * g4);
    let (gwh, gb) = rest.split_at_mut(u * g4);
    let mut gwh = kernel_mut(gwh, u, g4);

    let mut d_pre = Array3::<f64>::zeros((steps, b, g4));
    let mut dh_next = Array2::<f64>::zeros((b, u));
    let mut dc_next = vec![0.0; b * u];
    let zero = Array2::<f64>::zeros((b, u));

    for t in (0..steps).rev() {
        let mut dh = dh_next;
        add_upstream(&mut dh, d_out, t, steps - 1);
        let gates_t = cache.gates.index_axis(Axis(0), t);
        let cell_t = cache.cell.index_axis(Axis(0), t);
        let cell_prev = if t > 0 {
            cache.cell.index_axis(Axis(0), t - 1)
        } else {
            zero.view()
        };
        let gs = gates_t.as_slice().unwrap();
        let cs = cell_t.as_slice().unwrap();
        let cps = cell_prev.as_slice().unwrap();
        let dhs = dh.as_slice().unwrap();
        let mut dz = d_pre.index_axis_mut(Axis(0), t);
        let dzs = dz.as_slice_mut().unwrap();
        for r in 0..b {
            for j in 0..u {
                let k = r * u + j;
                let base = r * g4;
                let (ig, fg, gg, og) = (gs[base + j], gs[base + u + j], gs[base + 2 * u + j], gs[base + 3 * u + j]);
                let tc = cs[k].tanh();
                let d_o = dhs[k] * tc;
                let dc = dc_next[k] + dhs[k] * og * (1.0 - tc * tc);
                dc_next[k] = dc * fg;
                dzs[base + j] = dc * gg * ig * (1.0 - ig);
                dzs[base + u + j] = dc * cps[k] * fg * (1.0 - fg);
                dzs[base + 2 * u + j] = dc * ig * (1.0 - gg * gg);
                dzs[base + 3 * u + j] = d_o * og * (1.0 - og);
            }
        }
        if t > 0 {
            let h_prev = masked(cache.hidden.index_axis(Axis(0), t - 1), cache.mask.as_ref());
            general_mat_mul(1.0, &h_prev.t(), &dz, 1.0, &mut gwh);
            let mut next = dz.dot(&wh.t());
            if let Some(m) = &cache.mask {
                next *= m;
            }
            dh_next = next;
        } else {
            dh_next = Array2::zeros((0, 0));
        }
    }
    input_projection_backward(x, wx, d_pre, gwx, gb, need_dx)
}

fn gru_forward(
    p: &[f64],
    fan_in: usize,
    u: usize,
    variant: GruVariant,
    x: &Array3<f64>,
    mask: Option<Array2<f64>>,
) -> GruCache {
    let (steps, b, _) = x.dim();
    let g3 = 3 * u;
    let wx = kernel(p, 0, fan_in, g3);
    let wh = kernel(p, fan_in * g3, u, g3);
    let bias_at = (fan_in + u) * g3;
    let bx = ArrayView1::from(&p[bias_at..bias_at + g3]);

    let xw = project_inputs(x, wx, bx);
    let mut update = Array3::zeros((steps, b, u));
    let mut reset = Array3::zeros((steps, b, u));
    let mut candidate = Array3::zeros((steps, b, u));
    let mut hidden = Array3::zeros((steps, b, u));
    let mut rec_cand = match variant {
        GruVariant::ResetAfter => Some(Array3::zeros((steps, b, u))),
        GruVariant::ResetBefore => None,
    };

    let mut h = Array2::<f64>::zeros((b, u));
    for t in 0..steps {
        let hm = masked(h.view(), mask.as_ref());
        let xw_t = xw.index_axis(Axis(0), t);
        let xs = xw_t.as_slice().unwrap();
        let mut zt = update.index_axis_mut(Axis(0), t);
        let mut rt = reset.index_axis_mut(Axis(0), t);
        let mut nt = candidate.index_axis_mut(Axis(0), t);
        let (zs, rs, ns) = (
            zt.as_slice_mut().unwrap(),
            rt.as_slice_mut().unwrap(),
            nt.as_slice_mut().unwrap(),
        );
        match variant {
            GruVariant::ResetAfter => {
                let bh = ArrayView1::from(&p[bias_at + g3..bias_at + 2 * g3]);
                let mut hw = hm.dot(&wh);
                hw += &bh;
                let hws = hw.as_slice().unwrap();
                let mut rc = rec_cand.as_mut().unwrap().index_axis_mut(Axis(0), t);
                let rcs = rc.as_slice_mut().unwrap();
                let hs = h.as_slice_mut().unwrap();
                for r in 0..b {
                    for j in 0..u {
                        let k = r * u + j;
                        let base = r * g3;
                        let z = sigmoid(xs[base + j] + hws[base + j]);
                        let rg = sigmoid(xs[base + u + j] + hws[base + u + j]);
                        let hn = hws[base + 2 * u + j];
                        let n = (xs[base + 2 * u + j] + rg * hn).tanh();
                        zs[k] = z;
                        rs[k] = rg;
                        ns[k] = n;
                        rcs[k] = hn;
                        hs[k] = z * hs[k] + (1.0 - z) * n;
                    }
                }
            }
            GruVariant::ResetBefore => {
                let hw = hm.dot(&wh.slice(s![.., ..2 * u]));
                let hws = hw.as_slice().unwrap();
                let cols = 2 * u;
                let mut rh = Array2::<f64>::zeros((b, u));
                {
                    let rhs = rh.as_slice_mut().unwrap();
                    let hms = hm.as_slice().unwrap();
                    for r in 0..b {
                        for j in 0..u {
                            let k = r * u + j;
                            zs[k] = sigmoid(xs[r * g3 + j] + hws[r * cols + j]);
                            rs[k] = sigmoid(xs[r * g3 + u + j] + hws[r * cols + u + j]);
                            rhs[k] = rs[k] * hms[k];
                        }
                    }
                }
                let hn = rh.dot(&wh.slice(s![.., 2 * u..]));
                let hns = hn.as_slice().unwrap();
                let hs = h.as_slice_mut().unwrap();
                for r in 0..b {
                    for j in 0..u {
                        let k = r * u + j;
                        let n = (xs[r * g3 + 2 * u + j] + hns[k]).tanh();
                        ns[k] = n;
                        hs[k] = zs[k] * hs[k] + (1.0 - zs[k]) * n;
                    }
                }
            }
        }
        hidden.index_axis_mut(Axis(0), t).assign(&h);
    }
    GruCache {
        mask,
        update,
        reset,
        candidate,
        recurrent_candidate: rec_cand,
        hidden,
    }
}

#[allow(clippy::too_many_arguments)]
fn gru_backward(
    p: &[f64],
    g: &mut [f64],
    fan_in: usize,
    u: usize,
    variant: GruVariant,
    x: &Array3<f64>,
    cache: &GruCache,
    d_out: &Act,
    need_dx: bool,
) -> Act {
    let (steps, b, _) = x.dim();
    let g3 = 3 * u;
    let wx = kernel(p, 0, fan_in, g3);
    let wh = kernel(p, fan_in * g3, u, g3);
    let (gwx, rest) = g.split_at_mut(fan_in * g3);
    let (gwh, gbias) = rest.split_at_mut(u * g3);
    let mut gwh = kernel_mut(gwh, u, g3);
    let (gbx, gbh) = gbias.split_at_mut(g3);

    let mut d_xw = Array3::<f64>::zeros((steps, b, g3));
    let mut dh_next = Array2::<f64>::zeros((b, u));
    let zero = Array2::<f64>::zeros((b, u));

    for t in (0..steps).rev() {
        let mut dh = dh_next;
        add_upstream(&mut dh, d_out, t, steps - 1);
        let h_prev_raw = if t > 0 {
            cache.hidden.index_axis(Axis(0), t - 1)
        } else {
            zero.view()
        };
        let hm = masked(h_prev_raw, cache.mask.as_ref());
        let zt = cache.update.index_axis(Axis(0), t);
        let rt = cache.reset.index_axis(Axis(0), t);
        let nt = cache.candidate.index_axis(Axis(0), t);
        let (zs, rs, ns) = (zt.as_slice().unwrap(), rt.as_slice().unwrap(), nt.as_slice().unwrap());
        let hps = h_prev_raw.as_slice().unwrap();
        let dhs = dh.as_slice().unwrap();
        let mut dxt = d_xw.index_axis_mut(Axis(0), t);
        let dxs = dxt.as_slice_mut().unwrap();
        let mut dh_direct = Array2::<f64>::zeros((b, u));
        let dds = dh_direct.as_slice_mut().unwrap();

        match variant {
            GruVariant::ResetAfter => {
                let rc = cache.recurrent_candidate.as_ref().unwrap().index_axis(Axis(0), t);
                let rcs = rc.as_slice().unwrap();
                let mut d_hw = Array2::<f64>::zeros((b, g3));
                let dhw = d_hw.as_slice_mut().unwrap();
                for r in 0..b {
                    for j in 0..u {
                        let k = r * u + j;
                        let base = r * g3;
                        let (z, rg, n) = (zs[k], rs[k], ns[k]);
                        let dz = dhs[k] * (hps[k] - n);
                        let dn = dhs[k] * (1.0 - z);
                        dds[k] = dhs[k] * z;
                        let dan = dn * (1.0 - n * n);
                        let daz = dz * z * (1.0 - z);
                        let dar = dan * rcs[k] * rg * (1.0 - rg);
                        dxs[base + j] = daz;
                        dxs[base + u + j] = dar;
                        dxs[base + 2 * u + j] = dan;
                        dhw[base + j] = daz;
                        dhw[base + u + j] = dar;
                        dhw[base + 2 * u + j] = dan * rg;
                    }
                }
                add_row_sums(gbh, d_hw.view());
                if t > 0 {
                    general_mat_mul(1.0, &hm.t(), &d_hw, 1.0, &mut gwh);
                    let mut dhm = d_hw.dot(&wh.t());
                    if let Some(m) = &cache.mask {
                        dhm *= m;
                    }
                    dh_next = dh_direct + dhm;
                } else {
                    dh_next = Array2::zeros((0, 0));
                }
            }
            GruVariant::ResetBefore => {
                let mut d_an = Array2::<f64>::zeros((b, u));
                let mut d_zr = Array2::<f64>::zeros((b, 2 * u));
                {
                    let dans = d_an.as_slice_mut().unwrap();
                    let dzrs = d_zr.as_slice_mut().unwrap();
                    for r in 0..b {
                        for j in 0..u {
                            let k = r * u + j;
                            let (z, n) = (zs[k], ns[k]);
                            let dz = dhs[k] * (hps[k] - n);
                            let dn = dhs[k] * (1.0 - z);
                            dds[k] = dhs[k] * z;
                            let dan = dn * (1.0 - n * n);
                            let daz = dz * z * (1.0 - z);
                            dans[k] = dan;
                            dzrs[r * 2 * u + j] = daz;
                            dxs[r * g3 + j] = daz;
                            dxs[r * g3 + 2 * u + j] = dan;
                        }
                    }
                }
                let wh_n = wh.slice(s![.., 2 * u..]);
                let wh_zr = wh.slice(s![.., ..2 * u]);
                let d_rh = d_an.dot(&wh_n.t());
                let mut dhm = Array2::<f64>::zeros((b, u));
                {
                    let drhs = d_rh.as_slice().unwrap();
                    let hms = hm.as_slice().unwrap();
                    let dzrs = d_zr.as_slice_mut().unwrap();
                    let dhms = dhm.as_slice_mut().unwrap();
                    for r in 0..b {
                        for j in 0..u {
                            let k = r * u + j;
                            let rg = rs[k];
                            let dar = drhs[k] * hms[k] * rg * (1.0 - rg);
                            dzrs[r * 2 * u + u + j] = dar;
                            dxs[r * g3 + u + j] = dar;
                            dhms[k] = drhs[k] * rg;
                        }
                    }
                }
                if t > 0 {
                    let rh = &rt * &hm;
                    general_mat_mul(1.0, &rh.t(), &d_an, 1.0, &mut gwh.slice_mut(s![.., 2 * u..]));
                    general_mat_mul(1.0, &hm.t(), &d_zr, 1.0, &mut gwh.slice_mut(s![.., ..2 * u]));
                    dhm += &d_zr.dot(&wh_zr.t());
                    if let Some(m) = &cache.mask {
                        dhm *= m;
                    }
                    dh_next = dh_direct + dhm;
                } else {
                    dh_next = Array2::zeros((0, 0));
                }
            }
        }
    }
    input_projection_backward(x, wx, d_xw, gwx, gbx, need_dx)
}
