//! Dense feed-forward network with an explicit forward cache.
//!
//! Parameters live in one flat row-major buffer: for every layer the
//! `(out, in)` weight matrix followed by the `out` biases. Gradients use the
//! same layout, so optimizers, EMA updates and checkpoints all work on plain
//! slices.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Keep/drop decisions for every hidden unit of one forward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask {
    keep: Vec<Vec<bool>>,
}

impl DropoutMask {
    pub fn keep(&self) -> &[Vec<bool>] {
        &self.keep
    }

    /// Builds a mask from explicit keep flags, one vector per hidden layer.
    pub fn from_keep(keep: Vec<Vec<bool>>) -> Self {
        Self { keep }
    }
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Input to each layer (post-activation, post-dropout of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    mask: Option<DropoutMask>,
}

impl ForwardCache {
    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    dropout_rate: f64,
    params: Vec<f64>,
    /// Offset of each layer's weight block; biases follow the weights.
    offsets: Vec<usize>,
    version: u64,
}

fn layout(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut total = 0;
    for w in sizes.windows(2) {
        offsets.push(total);
        total += w[0] * w[1] + w[1];
    }
    (offsets, total)
}

impl Mlp {
    /// Kaiming-uniform fan-in initialization with negative slope `√5`, i.e.
    /// weights and biases drawn from `U(±1/sqrt(fan_in))`, from a ChaCha
    /// stream seeded with `seed`.
    pub fn new(
        sizes: &[usize],
        output_activation: Activation,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, output_activation, dropout_rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.num_layers() {
            let limit = 1.0 / (net.sizes[l] as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let (w, b) = net.layer_mut(l);
            for x in w.iter_mut().chain(b.iter_mut()) {
                *x = dist.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output_activation: Activation, dropout_rate: f64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {dropout_rate}"
            )));
        }
        let (offsets, total) = layout(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            hidden_activation: Activation::Relu,
            output_activation,
            dropout_rate,
            params: vec![0.0; total],
            offsets,
            version: 0,
        })
    }

    /// Rebuilds a network around an existing parameter vector.
    pub fn from_params(
        sizes: &[usize],
        output_activation: Activation,
        dropout_rate: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, output_activation, dropout_rate)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters for sizes {sizes:?}, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameters. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix (row-major, `out × in`) and biases of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        let block = &self.params[start..start + n_in * n_out + n_out];
        block.split_at(n_in * n_out)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        self.version += 1;
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        let block = &mut self.params[start..start + n_in * n_out + n_out];
        block.split_at_mut(n_in * n_out)
    }

    /// Copies all parameters from a network of identical shape.
    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::Shape(format!(
                "cannot copy {:?} into {:?}",
                other.sizes, self.sizes
            )));
        }
        self.params_mut().copy_from_slice(&other.params);
        Ok(())
    }

    /// Samples an inverted-dropout mask for every hidden layer.
    pub fn sample_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> DropoutMask {
        let p = self.dropout_rate;
        let keep = self.sizes[1..self.sizes.len() - 1]
            .iter()
            .map(|&n| (0..n).map(|_| rng.gen::<f64>() >= p).collect())
            .collect();
        DropoutMask { keep }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.sizes[0] {
            return Err(Error::InputShape {
                expected: self.sizes[0],
                got: input.len(),
            });
        }
        Ok(())
    }

    fn check_mask(&self, mask: Option<&DropoutMask>) -> Result<()> {
        let Some(mask) = mask else { return Ok(()) };
        if self.dropout_rate == 0.0 {
            return Err(Error::Shape(
                "dropout mask supplied to a network without dropout".into(),
            ));
        }
        let hidden = &self.sizes[1..self.sizes.len() - 1];
        if mask.keep.len() != hidden.len()
            || mask.keep.iter().zip(hidden).any(|(k, &n)| k.len() != n)
        {
            return Err(Error::Shape("dropout mask does not match hidden layers".into()));
        }
        Ok(())
    }

    #[inline]
    fn affine(&self, l: usize, x: &[f64], out: &mut Vec<f64>) {
        let (w, b) = self.layer(l);
        let n_in = self.sizes[l];
        out.clear();
        out.extend(b.iter().enumerate().map(|(o, &bias)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        }));
    }

    /// Forward pass recording what `backward` needs. With `mask == None`
    /// dropout is disabled and the pass is deterministic.
    pub fn forward(
        &self,
        input: &[f64],
        mask: Option<&DropoutMask>,
    ) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        self.check_mask(mask)?;
        let n = self.num_layers();
        let scale = 1.0 / (1.0 - self.dropout_rate);
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut x = input.to_vec();
        for l in 0..n {
            let mut z = Vec::new();
            self.affine(l, &x, &mut z);
            let last = l + 1 == n;
            let act = if last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            let mut h: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            if !last {
                if let Some(mask) = mask {
                    for (v, &k) in h.iter_mut().zip(&mask.keep[l]) {
                        *v = if k { *v * scale } else { 0.0 };
                    }
                }
            }
            inputs.push(x);
            pre.push(z);
            x = h;
        }
        Ok((
            x,
            ForwardCache {
                version: self.version,
                inputs,
                pre,
                mask: mask.cloned(),
            },
        ))
    }

    /// Forward pass without cache bookkeeping.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.predict_masked(input, None)
    }

    pub fn predict_masked(&self, input: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<f64>> {
        self.check_input(input)?;
        self.check_mask(mask)?;
        let n = self.num_layers();
        let scale = 1.0 / (1.0 - self.dropout_rate);
        let mut x = input.to_vec();
        let mut z = Vec::new();
        for l in 0..n {
            self.affine(l, &x, &mut z);
            let last = l + 1 == n;
            let act = if last {
                self.output_activation
            } else {
                self.hidden_activation
            };
            x.clear();
            x.extend(z.iter().map(|&v| act.apply(v)));
            if !last {
                if let Some(mask) = mask {
                    for (v, &k) in x.iter_mut().zip(&mask.keep[l]) {
                        *v = if k { *v * scale } else { 0.0 };
                    }
                }
            }
        }
        Ok(x)
    }

    /// Returns `(∂loss/∂params, ∂loss/∂input)` for the given output gradient.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward_into(cache, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`Mlp::backward`] but accumulates parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        let n = self.num_layers();
        if cache.version != self.version {
            return Err(Error::Cache("parameters changed since the forward pass".into()));
        }
        if cache.pre.len() != n
            || cache
                .pre
                .iter()
                .zip(&self.sizes[1..])
                .any(|(z, &s)| z.len() != s)
        {
            return Err(Error::Cache("layer shapes differ".into()));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient has length {}, network output is {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer does not match parameters".into()));
        }
        let scale = 1.0 / (1.0 - self.dropout_rate);
        let mut delta: Vec<f64> = output_grad
            .iter()
            .zip(&cache.pre[n - 1])
            .map(|(g, &z)| g * self.output_activation.derivative(z))
            .collect();
        for l in (0..n).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &cache.inputs[l];
            let start = self.offsets[l];
            let (gw, gb) = grads[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (g, &xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
                gb[o] += d;
            }
            let (w, _) = self.layer(l);
            let mut dx = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (g, &wi) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *g += d * wi;
                    }
                }
            }
            if l > 0 {
                if let Some(mask) = &cache.mask {
                    for (g, &k) in dx.iter_mut().zip(&mask.keep[l - 1]) {
                        *g = if k { *g * scale } else { 0.0 };
                    }
                }
                for (g, &z) in dx.iter_mut().zip(&cache.pre[l - 1]) {
                    *g *= self.hidden_activation.derivative(z);
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}
