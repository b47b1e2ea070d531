#![allow(dead_code)]

use lfgp_core::ndgrad::{backward, Activation, Graph, Matrix, MlpSpec, ParamStore};
use rand::seq::SliceRandom;
use rand::Rng;

/// Loss shapes exercised by the gradient checks.
#[derive(Clone, Copy, Debug)]
pub enum LossKind {
    SquaredError,
    MeanSoftplus,
    WeightedTanh,
    /// Squared norm of d(sum of outputs)/d(input); needs second-order terms.
    InputGradPenalty,
}

pub const LOSS_KINDS: [LossKind; 4] = [
    LossKind::SquaredError,
    LossKind::MeanSoftplus,
    LossKind::WeightedTanh,
    LossKind::InputGradPenalty,
];

pub struct Instance {
    pub spec: MlpSpec,
    pub params: ParamStore,
    pub input: Matrix,
    pub target: Matrix,
    pub loss: LossKind,
}

pub fn random_instance(rng: &mut impl Rng, max_width: usize) -> Instance {
    let depth = rng.gen_range(0..=3);
    let hidden = (0..depth)
        .map(|_| {
            let act = *[Activation::Relu, Activation::Tanh, Activation::Identity]
                .choose(rng)
                .unwrap();
            (rng.gen_range(1..=max_width), act)
        })
        .collect();
    let input_dim = rng.gen_range(1..=6);
    let output_dim = rng.gen_range(1..=4);
    let spec = MlpSpec::new(input_dim, hidden, output_dim).unwrap();
    let params = spec.init(rng);
    let batch = rng.gen_range(1..=3);
    let input = Matrix::from_vec(
        batch,
        input_dim,
        (0..batch * input_dim)
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect(),
    );
    let target = Matrix::from_vec(
        batch,
        output_dim,
        (0..batch * output_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    );
    let loss = *LOSS_KINDS.choose(rng).unwrap();
    Instance {
        spec,
        params,
        input,
        target,
        loss,
    }
}

/// Analytic gradient from the tape.
pub fn tape_gradient(inst: &Instance) -> Vec<f64> {
    let mut g = Graph::new();
    let b = inst.spec.bind(&mut g, &inst.params).unwrap();
    let x = g.variable(inst.input.clone());
    let y = inst.spec.forward_graph(&mut g, &b, x);
    let loss = match inst.loss {
        LossKind::SquaredError => {
            let t = g.constant(inst.target.clone());
            let d = g.sub(y, t);
            let d = g.square(d);
            g.sum(d)
        }
        LossKind::MeanSoftplus => {
            let s = g.softplus(y);
            g.mean(s)
        }
        LossKind::WeightedTanh => {
            let t = g.constant(inst.target.clone());
            let h = g.tanh(y);
            let w = g.mul(h, t);
            g.sum(w)
        }
        LossKind::InputGradPenalty => {
            let s = g.sum(y);
            let dx = g.grad(s, &[x]).unwrap()[0].unwrap();
            let sq = g.square(dx);
            g.sum(sq)
        }
    };
    let mut p = inst.params.clone();
    p.zero_grad();
    backward(&mut g, loss, &b, &mut p).unwrap();
    p.grads
}

/// Plain-loop forward pass for one example. Returns outputs, the sign of
/// every ReLU pre-activation, and d(sum of outputs)/d(input).
fn oracle_forward(spec: &MlpSpec, w: &[f64], x: &[f64]) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    let mut h = x.to_vec();
    let mut signs = Vec::new();
    // Jacobian of current activations w.r.t. input, row per unit.
    let mut jac: Vec<Vec<f64>> = (0..x.len())
        .map(|i| {
            (0..x.len())
                .map(|j| if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let mut off = 0;
    for (fi, fo, act) in spec.layers() {
        let mut next = vec![0.0; fo];
        let mut next_jac = vec![vec![0.0; x.len()]; fo];
        for j in 0..fo {
            let mut z = w[off + fi * fo + j];
            for i in 0..fi {
                z += h[i] * w[off + i * fo + j];
            }
            let (a, da) = match act {
                Activation::Relu => {
                    signs.push(z > 0.0);
                    if z > 0.0 {
                        (z, 1.0)
                    } else {
                        (0.0, 0.0)
                    }
                }
                Activation::Tanh => (z.tanh(), 1.0 - z.tanh().powi(2)),
                Activation::Identity => (z, 1.0),
            };
            next[j] = a;
            for k in 0..x.len() {
                let mut s = 0.0;
                for i in 0..fi {
                    s += w[off + i * fo + j] * jac[i][k];
                }
                next_jac[j][k] = da * s;
            }
        }
        off += fi * fo + fo;
        h = next;
        jac = next_jac;
    }
    let dx = (0..x.len())
        .map(|k| jac.iter().map(|row| row[k]).sum())
        .collect();
    (h, signs, dx)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Loss and ReLU sign pattern evaluated without the tape.
pub fn oracle_loss(inst: &Instance, w: &[f64]) -> (f64, Vec<bool>) {
    let (rows, cols) = inst.input.shape();
    let mut total = 0.0;
    let mut signs = Vec::new();
    let n_out = (rows * inst.spec.output_dim) as f64;
    for r in 0..rows {
        let x = &inst.input.data()[r * cols..(r + 1) * cols];
        let (y, s, dx) = oracle_forward(&inst.spec, w, x);
        signs.extend(s);
        let t = inst.target.row_slice(r);
        total += match inst.loss {
            LossKind::SquaredError => y.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            LossKind::MeanSoftplus => y.iter().map(|&a| softplus(a)).sum::<f64>() / n_out,
            LossKind::WeightedTanh => y.iter().zip(t).map(|(a, b)| a.tanh() * b).sum::<f64>(),
            LossKind::InputGradPenalty => dx.iter().map(|d| d * d).sum::<f64>(),
        };
    }
    (total, signs)
}

pub struct FdReport {
    pub checked: usize,
    pub skipped_at_kinks: usize,
    pub worst_rel_err: f64,
    pub worst_index: usize,
}

/// Central differences with step `h` on up to `max_coords` parameters.
/// Coordinates whose perturbation flips a ReLU are skipped: the loss is not
/// differentiable across the kink.
pub fn finite_difference_check(
    inst: &Instance,
    analytic: &[f64],
    h: f64,
    max_coords: usize,
    rng: &mut impl Rng,
) -> FdReport {
    let n = inst.params.len();
    let mut coords: Vec<usize> = (0..n).collect();
    if n > max_coords {
        coords.shuffle(rng);
        coords.truncate(max_coords);
    }
    let mut report = FdReport {
        checked: 0,
        skipped_at_kinks: 0,
        worst_rel_err: 0.0,
        worst_index: 0,
    };
    let mut w = inst.params.values.clone();
    for i in coords {
        let orig = w[i];
        w[i] = orig + h;
        let (lp, sp) = oracle_loss(inst, &w);
        w[i] = orig - h;
        let (lm, sm) = oracle_loss(inst, &w);
        w[i] = orig;
        if sp != sm {
            report.skipped_at_kinks += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        let rel = (analytic[i] - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.worst_rel_err {
            report.worst_rel_err = rel;
            report.worst_index = i;
        }
    }
    report
}
