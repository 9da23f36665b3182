//! Q-network function approximators over a flat parameter vector, with
//! hand-written backpropagation and an RMSProp optimizer.
//!
//! Two architectures are supported: a ReLU multilayer perceptron over the
//! flattened observation window, and a single-layer GRU that consumes the
//! window step by step and feeds its final hidden state to a linear head.
//!
//! GRU cell (gate order z, r, n in the parameter layout):
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arch {
    /// Layer widths from input to output; hidden layers use ReLU.
    Mlp { layers: Vec<usize> },
    /// `steps` inputs of `input` features each.
    Gru {
        input: usize,
        steps: usize,
        hidden: usize,
        output: usize,
    },
}

impl Arch {
    pub fn mlp(layers: Vec<usize>) -> Self {
        Arch::Mlp { layers }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Arch::Mlp { layers } => layers[0],
            Arch::Gru { input, steps, .. } => input * steps,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Arch::Mlp { layers } => *layers.last().expect("non-empty layer list"),
            Arch::Gru { output, .. } => *output,
        }
    }

    pub fn param_len(&self) -> usize {
        match self {
            Arch::Mlp { layers } => layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
            Arch::Gru {
                input, hidden, output, ..
            } => 3 * hidden * input + 3 * hidden * hidden + 3 * hidden + output * hidden + output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Arch::Mlp { layers } => layers.len() >= 2 && layers.iter().all(|&w| w > 0),
            Arch::Gru {
                input,
                steps,
                hidden,
                output,
            } => *input > 0 && *steps > 0 && *hidden > 0 && *output > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid network architecture {self:?}")))
        }
    }
}

/// Architecture plus its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub arch: Arch,
    pub theta: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    /// MLP: post-activation of every layer, input first.
    acts: Vec<Vec<f64>>,
    /// GRU: per step the blocks h_prev, z, r, n of `hidden` values each,
    /// followed by the final hidden state.
    gru: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// out[i] += Σ_j m[i, j] v[j] for a row-major `rows × v.len()` block.
#[inline]
fn matvec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// out[j] += Σ_i m[i, j] d[i].
#[inline]
fn matvec_t_add(m: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        let row = &m[i * cols..(i + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * di;
        }
    }
}

/// g[i, j] += d[i] v[j].
#[inline]
fn outer_add(d: &[f64], v: &[f64], g: &mut [f64]) {
    let cols = v.len();
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        let row = &mut g[i * cols..(i + 1) * cols];
        for (gij, vj) in row.iter_mut().zip(v) {
            *gij += di * vj;
        }
    }
}

struct GruLayout {
    w: usize,
    u: usize,
    b: usize,
    wo: usize,
    bo: usize,
}

fn gru_layout(input: usize, hidden: usize, output: usize) -> GruLayout {
    let w = 0;
    let u = w + 3 * hidden * input;
    let b = u + 3 * hidden * hidden;
    let wo = b + 3 * hidden;
    let bo = wo + output * hidden;
    GruLayout { w, u, b, wo, bo }
}

impl NetParams {
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_len();
        Ok(Self {
            arch,
            theta: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Arch, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut fill = |theta: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in theta.iter_mut() {
                *x = rng.random_range(-limit..limit);
            }
        };
        match p.arch.clone() {
            Arch::Mlp { layers } => {
                let mut off = 0;
                for w in layers.windows(2) {
                    fill(&mut p.theta[off..off + w[0] * w[1]], w[0], w[1]);
                    off += w[0] * w[1] + w[1];
                }
            }
            Arch::Gru {
                input, hidden, output, ..
            } => {
                let l = gru_layout(input, hidden, output);
                fill(&mut p.theta[l.w..l.u], input, hidden);
                fill(&mut p.theta[l.u..l.b], hidden, hidden);
                fill(&mut p.theta[l.wo..l.bo], hidden, output);
            }
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_len() {
            return Err(Error::ShapeMismatch {
                expected: self.arch.input_len(),
                actual: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Q-values for one observation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cache = Cache::default();
        Ok(self.forward_impl(x, &mut cache, false))
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    pub fn forward_cached(&self, x: &[f64], cache: &mut Cache) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_impl(x, cache, true))
    }

    fn forward_impl(&self, x: &[f64], cache: &mut Cache, keep: bool) -> Vec<f64> {
        let theta = &self.theta;
        match &self.arch {
            Arch::Mlp { layers } => {
                cache.acts.clear();
                let mut a = x.to_vec();
                let mut off = 0;
                let last = layers.len() - 2;
                for (li, w) in layers.windows(2).enumerate() {
                    let (n_in, n_out) = (w[0], w[1]);
                    let wm = &theta[off..off + n_in * n_out];
                    let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
                    let mut z = b.to_vec();
                    matvec_add(wm, &a, &mut z);
                    if li < last {
                        for v in z.iter_mut() {
                            *v = v.max(0.0);
                        }
                    }
                    if keep {
                        cache.acts.push(std::mem::take(&mut a));
                    }
                    a = z;
                    off += n_in * n_out + n_out;
                }
                a
            }
            Arch::Gru {
                input,
                steps,
                hidden,
                output,
            } => {
                let (ni, nh, no) = (*input, *hidden, *output);
                let l = gru_layout(ni, nh, no);
                let buf = &mut cache.gru;
                buf.clear();
                buf.resize((4 * steps + 1) * nh, 0.0);
                let mut a = vec![0.0; 3 * nh];
                let mut rh = vec![0.0; nh];
                for t in 0..*steps {
                    let xt = &x[t * ni..(t + 1) * ni];
                    // Layout of this step's block: h_prev, z, r, n; the next
                    // block (or the tail) receives h'.
                    let (cur, next) = buf[t * 4 * nh..].split_at_mut(4 * nh);
                    let (h, gates) = cur.split_at_mut(nh);
                    a.copy_from_slice(&theta[l.b..l.b + 3 * nh]);
                    matvec_add(&theta[l.w..l.u], xt, &mut a);
                    // z and r use U h; n uses U_n (r ⊙ h).
                    matvec_add(&theta[l.u..l.u + 2 * nh * nh], h, &mut a[..2 * nh]);
                    for k in 0..2 * nh {
                        gates[k] = sigmoid(a[k]);
                    }
                    for k in 0..nh {
                        rh[k] = gates[nh + k] * h[k];
                    }
                    matvec_add(&theta[l.u + 2 * nh * nh..l.b], &rh, &mut a[2 * nh..]);
                    for k in 0..nh {
                        let n = a[2 * nh + k].tanh();
                        gates[2 * nh + k] = n;
                        let z = gates[k];
                        next[k] = (1.0 - z) * n + z * h[k];
                    }
                }
                let h_last = &buf[4 * steps * nh..];
                let mut q = theta[l.bo..l.bo + no].to_vec();
                matvec_add(&theta[l.wo..l.bo], h_last, &mut q);
                q
            }
        }
    }

    /// Accumulates into `grad` the gradient of `Σ_k dq[k] · q[k]` with
    /// respect to θ, for the forward pass recorded in `cache` on input `x`.
    pub fn backward(&self, x: &[f64], cache: &Cache, dq: &[f64], grad: &mut [f64]) {
        let theta = &self.theta;
        debug_assert_eq!(grad.len(), theta.len());
        match &self.arch {
            Arch::Mlp { layers } => {
                let offsets: Vec<usize> = layers
                    .windows(2)
                    .scan(0, |off, w| {
                        let o = *off;
                        *off += w[0] * w[1] + w[1];
                        Some(o)
                    })
                    .collect();
                let mut delta = dq.to_vec();
                for li in (0..layers.len() - 1).rev() {
                    let (n_in, n_out) = (layers[li], layers[li + 1]);
                    let off = offsets[li];
                    let a_in = &cache.acts[li];
                    outer_add(&delta, a_in, &mut grad[off..off + n_in * n_out]);
                    for (g, d) in grad[off + n_in * n_out..off + n_in * n_out + n_out].iter_mut().zip(&delta) {
                        *g += d;
                    }
                    if li == 0 {
                        break;
                    }
                    let mut prev = vec![0.0; n_in];
                    matvec_t_add(&theta[off..off + n_in * n_out], &delta, &mut prev);
                    // ReLU derivative from the stored post-activation.
                    for (p, a) in prev.iter_mut().zip(a_in) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
            Arch::Gru {
                input,
                steps,
                hidden,
                output,
            } => {
                let (ni, nh, no) = (*input, *hidden, *output);
                let l = gru_layout(ni, nh, no);
                let buf = &cache.gru;
                outer_add(dq, &buf[4 * steps * nh..], &mut grad[l.wo..l.bo]);
                for (g, d) in grad[l.bo..l.bo + no].iter_mut().zip(dq) {
                    *g += d;
                }
                let mut dh = vec![0.0; nh];
                matvec_t_add(&theta[l.wo..l.bo], dq, &mut dh);
                let u_z = l.u;
                let u_n = l.u + 2 * nh * nh;
                let mut da = vec![0.0; 3 * nh];
                let mut rh = vec![0.0; nh];
                let mut drh = vec![0.0; nh];
                let mut dh_prev = vec![0.0; nh];
                for t in (0..*steps).rev() {
                    let block = &buf[t * 4 * nh..(t + 1) * 4 * nh];
                    let (h_prev, z, r, n) = (&block[..nh], &block[nh..2 * nh], &block[2 * nh..3 * nh], &block[3 * nh..]);
                    let xt = &x[t * ni..(t + 1) * ni];
                    for k in 0..nh {
                        dh_prev[k] = dh[k] * z[k];
                        let dn = dh[k] * (1.0 - z[k]);
                        let dz = dh[k] * (h_prev[k] - n[k]);
                        da[k] = dz * z[k] * (1.0 - z[k]);
                        da[2 * nh + k] = dn * (1.0 - n[k] * n[k]);
                        rh[k] = r[k] * h_prev[k];
                    }
                    outer_add(&da[2 * nh..], &rh, &mut grad[u_n..l.b]);
                    drh.iter_mut().for_each(|v| *v = 0.0);
                    matvec_t_add(&theta[u_n..l.b], &da[2 * nh..], &mut drh);
                    for k in 0..nh {
                        dh_prev[k] += drh[k] * r[k];
                        da[nh + k] = drh[k] * h_prev[k] * r[k] * (1.0 - r[k]);
                    }
                    outer_add(&da, xt, &mut grad[l.w..l.u]);
                    for (g, d) in grad[l.b..l.b + 3 * nh].iter_mut().zip(&da) {
                        *g += d;
                    }
                    outer_add(&da[..2 * nh], h_prev, &mut grad[u_z..u_n]);
                    matvec_t_add(&theta[u_z..u_n], &da[..2 * nh], &mut dh_prev);
                    std::mem::swap(&mut dh, &mut dh_prev);
                }
            }
        }
    }
}

/// RMSProp with decay `rho` and stabilizer `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub delta: f64,
    pub v: Vec<f64>,
}

impl RmsProp {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            rho: 0.99,
            delta: 1e-8,
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != theta.len() || self.v.len() != theta.len() {
            return Err(Error::ShapeMismatch {
                expected: theta.len(),
                actual: grad.len(),
            });
        }
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        for ((t, &g), v) in theta.iter_mut().zip(grad).zip(self.v.iter_mut()) {
            *v = self.rho * *v + (1.0 - self.rho) * g * g;
            *t -= self.lr * g / (v.sqrt() + self.delta);
        }
        Ok(())
    }
}
