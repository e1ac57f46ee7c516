//! The learned volumetric scene function: frequency encoding of position and
//! direction followed by a small MLP that emits color and density.
//!
//! All parameters live in one flat row-major buffer ([`MlpParams::values`]) so
//! the optimizer, checkpoints and finite-difference checks can treat them as a
//! single vector. A batched forward pass can record a [`FieldTape`] whose
//! [`FieldTape::backprop`] turns per-sample adjoints on color and density into
//! gradients for every parameter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::linalg::{gemm, View};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    pub levels_position: usize,
    pub levels_direction: usize,
    pub include_input: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            levels_position: 6,
            levels_direction: 2,
            include_input: true,
        }
    }
}

impl EncodingConfig {
    /// Encoded width of a 3-vector at `levels` frequencies.
    pub fn encoded_dim(&self, levels: usize) -> usize {
        3 * (2 * levels + usize::from(self.include_input))
    }

    pub fn position_dim(&self) -> usize {
        self.encoded_dim(self.levels_position)
    }

    pub fn direction_dim(&self) -> usize {
        self.encoded_dim(self.levels_direction)
    }
}

/// Writes `[x?, sin(2⁰πx), cos(2⁰πx), …, sin(2^{L-1}πx), cos(2^{L-1}πx)]`
/// (each term a 3-vector) into `out`.
pub fn encode_into(x: &Vec3, levels: usize, include_input: bool, out: &mut [f64]) {
    let mut at = 0;
    if include_input {
        out[..3].copy_from_slice(x.as_slice());
        at = 3;
    }
    let mut freq = std::f64::consts::PI;
    for _ in 0..levels {
        for c in 0..3 {
            out[at + c] = (freq * x[c]).sin();
        }
        for c in 0..3 {
            out[at + 3 + c] = (freq * x[c]).cos();
        }
        at += 6;
        freq *= 2.0;
    }
}

pub fn positional_encode(x: &Vec3, levels: usize, include_input: bool) -> Vec<f64> {
    let mut out = vec![0.0; 3 * (2 * levels + usize::from(include_input))];
    encode_into(x, levels, include_input, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z < 0.0 {
                    0.0
                } else {
                    z
                }
            }
            Activation::Softplus => softplus(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the preactivation `z` and output `h`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            hidden_width: 64,
            activation: Activation::Relu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldConfig {
    pub encoding: EncodingConfig,
    pub mlp: MlpConfig,
}

/// Shape and location of one affine layer inside the flat parameter buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major `outputs × inputs` weight block.
    pub fn weights<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.weight_offset..self.weight_offset + self.inputs * self.outputs]
    }

    pub fn bias<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.bias_offset..self.bias_offset + self.outputs]
    }

    /// `out[n×outputs] = x[n×inputs]·Wᵀ + b`.
    pub fn forward(&self, values: &[f64], x: &[f64], n: usize, out: &mut [f64]) {
        let bias = self.bias(values);
        for row in out[..n * self.outputs].chunks_exact_mut(self.outputs) {
            row.copy_from_slice(bias);
        }
        gemm(
            n,
            self.inputs,
            self.outputs,
            x,
            View::row_major(self.inputs),
            self.weights(values),
            View::transposed(self.inputs),
            1.0,
            out,
        );
    }

    /// Accumulates `dW += dyᵀ·x`, `db += Σ dy` into `grads` and, when asked,
    /// writes `dx = dy·W`.
    pub fn backward(
        &self,
        values: &[f64],
        x: &[f64],
        dy: &[f64],
        n: usize,
        grads: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let (i, o) = (self.inputs, self.outputs);
        {
            let dw = &mut grads[self.weight_offset..self.weight_offset + i * o];
            gemm(o, n, i, dy, View::transposed(o), x, View::row_major(i), 1.0, dw);
        }
        let db = &mut grads[self.bias_offset..self.bias_offset + o];
        for row in dy[..n * o].chunks_exact(o) {
            for (acc, g) in db.iter_mut().zip(row) {
                *acc += g;
            }
        }
        if let Some(dx) = dx {
            gemm(n, o, i, dy, View::row_major(o), self.weights(values), View::row_major(i), 0.0, dx);
        }
    }
}

/// Weights and biases of the field network.
///
/// Layers, in order: the hidden trunk fed by the encoded position, a density
/// head reading the last hidden layer, and a color head reading the last hidden
/// layer concatenated with the encoded direction. Together the heads emit the
/// four outputs (r, g, b, σ) as preactivations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<LayerShape>,
    pub activation: Activation,
    pub values: Vec<f64>,
}

impl MlpParams {
    pub fn layout(config: &FieldConfig) -> Vec<LayerShape> {
        let enc = &config.encoding;
        let mlp = &config.mlp;
        let mut dims: Vec<(usize, usize)> = Vec::new();
        let mut width_in = enc.position_dim();
        for _ in 0..mlp.hidden_layers {
            dims.push((width_in, mlp.hidden_width));
            width_in = mlp.hidden_width;
        }
        dims.push((width_in, 1));
        dims.push((width_in + enc.direction_dim(), 3));
        let mut offset = 0;
        dims.into_iter()
            .map(|(inputs, outputs)| {
                let shape = LayerShape {
                    inputs,
                    outputs,
                    weight_offset: offset,
                    bias_offset: offset + inputs * outputs,
                };
                offset += shape.len();
                shape
            })
            .collect()
    }

    pub fn zeros(config: &FieldConfig) -> Self {
        let layers = Self::layout(config);
        let n = layers.iter().map(LayerShape::len).sum();
        Self {
            layers,
            activation: config.mlp.activation,
            values: vec![0.0; n],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &FieldConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in params.layers.clone() {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut params.values
                [layer.weight_offset..layer.weight_offset + layer.inputs * layer.outputs]
            {
                *w = rng.random_range(-bound..bound);
            }
        }
        params
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn hidden(&self) -> &[LayerShape] {
        &self.layers[..self.layers.len() - 2]
    }

    pub fn density_head(&self) -> &LayerShape {
        &self.layers[self.layers.len() - 2]
    }

    pub fn color_head(&self) -> &LayerShape {
        &self.layers[self.layers.len() - 1]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "field parameter {i} is not finite ({})",
                self.values[i]
            ))),
        }
    }

    /// Whether these parameters were laid out for `config`.
    pub fn matches(&self, config: &FieldConfig) -> bool {
        self.activation == config.mlp.activation && self.layers == Self::layout(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldOutput {
    pub color: [f64; 3],
    pub density: f64,
}

/// Adjoint of a scalar loss with respect to one [`FieldOutput`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldAdjoint {
    pub color: [f64; 3],
    pub density: f64,
}

/// Anything that maps sample points and ray directions to color and density.
pub trait RadianceField: Sync {
    fn eval_batch(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Vec<FieldOutput>>;
}

/// A network together with the encoding it was built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralField {
    pub config: FieldConfig,
    pub params: MlpParams,
}

/// Activations recorded by [`NeuralField::forward`] for the backward pass.
pub struct FieldTape {
    n: usize,
    enc_x: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    color_in: Vec<f64>,
    density_pre: Vec<f64>,
    color: Vec<f64>,
}

impl NeuralField {
    pub fn new(config: FieldConfig, seed: u64) -> Self {
        Self {
            config,
            params: MlpParams::init(&config, seed),
        }
    }

    pub fn from_params(config: FieldConfig, params: MlpParams) -> Result<Self> {
        if !params.matches(&config) {
            return Err(Error::Checkpoint(
                "parameter layout does not match the field configuration".into(),
            ));
        }
        Ok(Self { config, params })
    }

    /// Batched forward pass; records the activations needed by `backprop`.
    pub fn forward(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<(Vec<FieldOutput>, FieldTape)> {
        if points.len() != dirs.len() {
            return Err(Error::Domain(format!(
                "{} points but {} directions",
                points.len(),
                dirs.len()
            )));
        }
        let n = points.len();
        let enc = &self.config.encoding;
        let p = &self.params;
        let values = &p.values;
        let (dx, dd) = (enc.position_dim(), enc.direction_dim());

        let mut enc_x = vec![0.0; n * dx];
        for (pt, row) in points.iter().zip(enc_x.chunks_exact_mut(dx.max(1))) {
            encode_into(pt, enc.levels_position, enc.include_input, row);
        }

        let mut pre = Vec::with_capacity(p.hidden().len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(p.hidden().len());
        for layer in p.hidden() {
            let input = post.last().unwrap_or(&enc_x);
            let mut z = vec![0.0; n * layer.outputs];
            layer.forward(values, input, n, &mut z);
            let h: Vec<f64> = z.iter().map(|&v| p.activation.apply(v)).collect();
            pre.push(z);
            post.push(h);
        }
        let trunk = post.last().unwrap_or(&enc_x);
        let width = p.density_head().inputs;

        let mut density_pre = vec![0.0; n];
        p.density_head().forward(values, trunk, n, &mut density_pre);

        let cin_w = width + dd;
        let mut color_in = vec![0.0; n * cin_w];
        for (r, row) in color_in.chunks_exact_mut(cin_w).enumerate() {
            row[..width].copy_from_slice(&trunk[r * width..(r + 1) * width]);
            encode_into(&dirs[r], enc.levels_direction, enc.include_input, &mut row[width..]);
        }
        let mut color = vec![0.0; n * 3];
        p.color_head().forward(values, &color_in, n, &mut color);
        color.iter_mut().for_each(|c| *c = sigmoid(*c));

        let outputs = (0..n)
            .map(|r| FieldOutput {
                color: [color[3 * r], color[3 * r + 1], color[3 * r + 2]],
                density: softplus(density_pre[r]),
            })
            .collect();
        let tape = FieldTape {
            n,
            enc_x,
            pre,
            post,
            color_in,
            density_pre,
            color,
        };
        Ok((outputs, tape))
    }

    pub fn eval(&self, x: &Vec3, d: &Vec3) -> Result<FieldOutput> {
        if ((d.norm() - 1.0).abs()) > 1e-6 {
            return Err(Error::Domain(format!(
                "direction must be unit length, got norm {}",
                d.norm()
            )));
        }
        self.params.check_finite()?;
        let (out, _) = self.forward(std::slice::from_ref(x), std::slice::from_ref(d))?;
        Ok(out[0])
    }
}

impl RadianceField for NeuralField {
    fn eval_batch(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Vec<FieldOutput>> {
        self.params.check_finite()?;
        Ok(self.forward(points, dirs)?.0)
    }
}

impl FieldTape {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// loss adjoint of each recorded output.
    pub fn backprop(&self, params: &MlpParams, upstream: &[FieldAdjoint]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; params.len()];
        self.backprop_into(params, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Like [`FieldTape::backprop`] but accumulates into `grads`.
    pub fn backprop_into(
        &self,
        params: &MlpParams,
        upstream: &[FieldAdjoint],
        grads: &mut [f64],
    ) -> Result<()> {
        let n = self.n;
        if upstream.len() != n {
            return Err(Error::Graph(format!(
                "tape recorded {n} samples but received {} adjoints",
                upstream.len()
            )));
        }
        if grads.len() != params.len() || self.pre.len() != params.hidden().len() {
            return Err(Error::Graph("tape was recorded with a different network".into()));
        }
        let values = &params.values;
        let color_head = params.color_head();
        let density_head = params.density_head();
        let width = density_head.inputs;
        let trunk = self.post.last().unwrap_or(&self.enc_x);

        let mut d_color = vec![0.0; n * 3];
        let mut d_density = vec![0.0; n];
        for (r, adj) in upstream.iter().enumerate() {
            for c in 0..3 {
                let s = self.color[3 * r + c];
                d_color[3 * r + c] = adj.color[c] * s * (1.0 - s);
            }
            d_density[r] = adj.density * sigmoid(self.density_pre[r]);
        }

        let cin_w = color_head.inputs;
        let mut d_cin = vec![0.0; n * cin_w];
        color_head.backward(values, &self.color_in, &d_color, n, grads, Some(&mut d_cin));
        let mut d_trunk = vec![0.0; n * width];
        density_head.backward(values, trunk, &d_density, n, grads, Some(&mut d_trunk));
        for (dst, src) in d_trunk.chunks_exact_mut(width.max(1)).zip(d_cin.chunks_exact(cin_w)) {
            for (a, b) in dst.iter_mut().zip(&src[..width]) {
                *a += b;
            }
        }

        let hidden = params.hidden();
        let mut dh = d_trunk;
        for l in (0..hidden.len()).rev() {
            let z = &self.pre[l];
            let h = &self.post[l];
            for ((g, &zv), &hv) in dh.iter_mut().zip(z).zip(h) {
                *g *= params.activation.derivative(zv, hv);
            }
            let input = if l == 0 { &self.enc_x } else { &self.post[l - 1] };
            if l == 0 {
                hidden[l].backward(values, input, &dh, n, grads, None);
            } else {
                let mut dx = vec![0.0; n * hidden[l].inputs];
                hidden[l].backward(values, input, &dh, n, grads, Some(&mut dx));
                dh = dx;
            }
        }
        Ok(())
    }
}
