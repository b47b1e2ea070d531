use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    fn apply_graph(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

/// Fully connected network shape. The output layer is always linear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<(usize, Activation)>,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden: Vec<(usize, Activation)>,
        output_dim: usize,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|&(w, _)| w == 0) {
            return Err(Error::Config("MLP widths must be positive".into()));
        }
        Ok(Self {
            input_dim,
            output_dim,
            hidden,
        })
    }

    /// `(fan_in, fan_out, activation)` for every layer including the output.
    pub fn layers(&self) -> Vec<(usize, usize, Activation)> {
        let mut out = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.input_dim;
        for &(w, act) in &self.hidden {
            out.push((fan_in, w, act));
            fan_in = w;
        }
        out.push((fan_in, self.output_dim, Activation::Identity));
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|&(i, o, _)| i * o + o).sum()
    }

    /// Uniform `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(&self, rng: &mut impl Rng) -> ParamStore {
        let mut values = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out, _) in self.layers() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                values.push(rng.gen_range(-bound..bound));
            }
        }
        ParamStore::new(values)
    }

    fn check(&self, params: &ParamStore) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Config(format!(
                "parameter count {} does not match spec {} ({})",
                params.len(),
                self,
                self.param_count()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamStore, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim {
            return Err(Error::Config(format!(
                "input length {} does not match MLP input {}",
                input.len(),
                self.input_dim
            )));
        }
        Ok(self.forward_batch(params, &Matrix::row(input))?.into_vec())
    }

    /// Evaluates a batch (one row per example) without recording a tape.
    pub fn forward_batch(&self, params: &ParamStore, input: &Matrix) -> Result<Matrix> {
        self.check(params)?;
        if input.cols() != self.input_dim {
            return Err(Error::Config(format!(
                "input width {} does not match MLP input {}",
                input.cols(),
                self.input_dim
            )));
        }
        let mut x = input.clone();
        let mut off = 0;
        for (fan_in, fan_out, act) in self.layers() {
            let w = Matrix::from_vec(
                fan_in,
                fan_out,
                params.values[off..off + fan_in * fan_out].to_vec(),
            );
            off += fan_in * fan_out;
            let b = &params.values[off..off + fan_out];
            off += fan_out;
            let mut h = Matrix::matmul(&x, &w, false, false);
            let cols = h.cols();
            for (k, v) in h.data_mut().iter_mut().enumerate() {
                *v = act.apply(*v + b[k % cols]);
            }
            x = h;
        }
        Ok(x)
    }

    /// Places the parameters on `g` as differentiable leaves.
    pub fn bind(&self, g: &mut Graph, params: &ParamStore) -> Result<Binding> {
        self.bind_with(g, params, true)
    }

    /// Places the parameters on `g` as constants (frozen network).
    pub fn bind_frozen(&self, g: &mut Graph, params: &ParamStore) -> Result<Binding> {
        self.bind_with(g, params, false)
    }

    fn bind_with(&self, g: &mut Graph, params: &ParamStore, trainable: bool) -> Result<Binding> {
        self.check(params)?;
        let mut vars = Vec::new();
        let mut off = 0;
        for (fan_in, fan_out, _) in self.layers() {
            for (r, c) in [(fan_in, fan_out), (1, fan_out)] {
                let m = Matrix::from_vec(r, c, params.values[off..off + r * c].to_vec());
                off += r * c;
                vars.push(if trainable {
                    g.variable(m)
                } else {
                    g.constant(m)
                });
            }
        }
        Ok(Binding { vars })
    }

    /// Records a forward pass of a batch `x` on `g`.
    pub fn forward_graph(&self, g: &mut Graph, binding: &Binding, x: Var) -> Var {
        let mut h = x;
        for (l, (_, _, act)) in self.layers().into_iter().enumerate() {
            let z = g.matmul(h, binding.vars[2 * l]);
            let z = g.add_row(z, binding.vars[2 * l + 1]);
            h = act.apply_graph(g, z);
        }
        h
    }
}

impl fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hidden: Vec<String> = self
            .hidden
            .iter()
            .map(|(w, a)| format!("{w}:{}", a.name()))
            .collect();
        write!(
            f,
            "in={};hidden={};out={}",
            self.input_dim,
            hidden.join(","),
            self.output_dim
        )
    }
}

impl FromStr for MlpSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad MLP description `{s}`"));
        let mut input = None;
        let mut output = None;
        let mut hidden = Vec::new();
        for part in s.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            match k {
                "in" => input = Some(v.parse().map_err(|_| bad())?),
                "out" => output = Some(v.parse().map_err(|_| bad())?),
                "hidden" => {
                    for layer in v.split(',').filter(|l| !l.is_empty()) {
                        let (w, a) = layer.split_once(':').ok_or_else(bad)?;
                        hidden.push((w.parse().map_err(|_| bad())?, a.parse()?));
                    }
                }
                _ => return Err(bad()),
            }
        }
        MlpSpec::new(input.ok_or_else(bad)?, hidden, output.ok_or_else(bad)?)
    }
}

/// Graph leaves for one network's parameters, `[W0, b0, W1, b1, ...]`.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Flat parameters with gradient and Adam companions.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step_count: u64,
}

impl ParamStore {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            values,
            grads: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Accumulates d`loss`/d(params) into `params.grads`.
pub fn backward(
    g: &mut Graph,
    loss: Var,
    binding: &Binding,
    params: &mut ParamStore,
) -> Result<()> {
    let total: usize = binding.vars.iter().map(|v| g.value(*v).len()).sum();
    if total != params.len() {
        return Err(Error::Usage(
            "binding does not belong to this parameter store".into(),
        ));
    }
    let grads = g.grad(loss, &binding.vars)?;
    let mut off = 0;
    for (v, d) in binding.vars.iter().zip(grads) {
        let n = g.value(*v).len();
        if let Some(d) = d {
            for (dst, src) in params.grads[off..off + n].iter_mut().zip(g.value(d).data()) {
                *dst += src;
            }
        }
        off += n;
    }
    Ok(())
}
