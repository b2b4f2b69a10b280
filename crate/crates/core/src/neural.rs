//! A small dense value network with manual backpropagation.
//!
//! Parameters live in one flat `Vec<f64>`; layer boundaries are described
//! by [`NetDesc`]. That makes target-network copies, soft blending,
//! optimizer state, finite-difference checks, and checkpointing all
//! straightforward slice operations. Hidden layers use the rectifier, the
//! output is linear, and an optional dueling head splits the last hidden
//! activation into a scalar value stream and a per-action advantage
//! stream combined as `Q = V + A - mean(A)`.
//!
//! All arithmetic is in double precision.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const CHECKPOINT_MAGIC: &[u8; 4] = b"DSQN";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("feature length {got} does not match network input {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("action index {action} out of range for {actions} actions")]
    BadAction { action: usize, actions: usize },
    #[error("checkpoint i/o failed for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt checkpoint {path}: {message}")]
    Corrupt { path: String, message: String },
}

/// Architecture description: layer sizes and head kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDesc {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub dueling: bool,
}

impl NetDesc {
    pub fn new(input: usize, hidden: &[usize], output: usize, dueling: bool) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
            dueling,
        }
    }

    /// `(rows, cols)` of every weight matrix in storage order, hidden
    /// stack first, then the head (value stream before advantage stream
    /// when dueling). Each matrix is followed by its bias vector.
    fn matrices(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input;
        for &h in &self.hidden {
            dims.push((h, prev));
            prev = h;
        }
        if self.dueling {
            dims.push((1, prev));
            dims.push((self.output, prev));
        } else {
            dims.push((self.output, prev));
        }
        dims
    }

    pub fn param_len(&self) -> usize {
        self.matrices().iter().map(|&(r, c)| r * c + r).sum()
    }
}

/// The value network: a flat parameter vector plus its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub desc: NetDesc,
    pub params: Vec<f64>,
    pub init_seed: u64,
    pub train_steps: u64,
}

/// One labeled sample for a training step.
#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a> {
    pub features: &'a [f64],
    pub action: usize,
    pub target: f64,
    pub weight: f64,
}

/// Loss applied to the per-sample TD error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Mean importance-weighted squared TD error.
    Squared,
    /// Huber-smoothed alternative; off by default.
    Huber,
}

pub struct BackwardResult {
    pub grads: Vec<f64>,
    /// Signed per-sample TD errors `Q(s,a) - y`.
    pub td_errors: Vec<f64>,
    pub loss: f64,
}

struct Workspace {
    /// Post-activation per hidden layer.
    acts: Vec<Vec<f64>>,
    /// Backpropagated error per hidden layer (same shapes as `acts`).
    deltas: Vec<Vec<f64>>,
    q: Vec<f64>,
    advantage: Vec<f64>,
}

impl Workspace {
    fn new(desc: &NetDesc) -> Self {
        Self {
            acts: desc.hidden.iter().map(|&h| vec![0.0; h]).collect(),
            deltas: desc.hidden.iter().map(|&h| vec![0.0; h]).collect(),
            q: vec![0.0; desc.output],
            advantage: vec![0.0; desc.output],
        }
    }
}

impl Network {
    /// Fresh network with fan-in-scaled uniform weights and zero biases,
    /// deterministic for a given seed.
    pub fn new(desc: NetDesc, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(desc.param_len());
        for (rows, cols) in desc.matrices() {
            let scale = 1.0 / (cols as f64).sqrt();
            for _ in 0..rows * cols {
                params.push(rng.random_range(-scale..scale));
            }
            params.extend(std::iter::repeat_n(0.0, rows));
        }
        Self {
            desc,
            params,
            init_seed: seed,
            train_steps: 0,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.desc.output
    }

    /// Q-values for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, NeuralError> {
        if features.len() != self.desc.input {
            return Err(NeuralError::ShapeMismatch {
                expected: self.desc.input,
                got: features.len(),
            });
        }
        let mut ws = Workspace::new(&self.desc);
        self.forward_into(features, &mut ws);
        Ok(ws.q)
    }

    fn forward_into(&self, features: &[f64], ws: &mut Workspace) {
        let mut offset = 0;
        for l in 0..self.desc.hidden.len() {
            let (below, rest) = ws.acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { features } else { &below[l - 1] };
            let out = &mut rest[0];
            let rows = self.desc.hidden[l];
            let cols = input.len();
            for r in 0..rows {
                let w = &self.params[offset + r * cols..offset + (r + 1) * cols];
                let b = self.params[offset + rows * cols + r];
                let z = b + dot(w, input);
                out[r] = if z > 0.0 { z } else { 0.0 };
            }
            offset += rows * cols + rows;
        }
        let hid: &[f64] = if self.desc.hidden.is_empty() {
            features
        } else {
            &ws.acts[self.desc.hidden.len() - 1]
        };
        let n = self.desc.output;
        let hlen = hid.len();
        if self.desc.dueling {
            let value = self.params[offset + hlen] + dot(&self.params[offset..offset + hlen], hid);
            offset += hlen + 1;
            let mut mean_adv = 0.0;
            for r in 0..n {
                let w = &self.params[offset + r * hlen..offset + (r + 1) * hlen];
                let b = self.params[offset + n * hlen + r];
                ws.advantage[r] = b + dot(w, hid);
                mean_adv += ws.advantage[r];
            }
            mean_adv /= n as f64;
            for r in 0..n {
                ws.q[r] = value + ws.advantage[r] - mean_adv;
            }
        } else {
            for r in 0..n {
                let w = &self.params[offset + r * hlen..offset + (r + 1) * hlen];
                let b = self.params[offset + n * hlen + r];
                ws.q[r] = b + dot(w, hid);
            }
        }
    }

    /// Gradients of the importance-weighted mean TD loss over a batch,
    /// taken on each sample's chosen action only. Also returns the signed
    /// TD errors for priority updates.
    pub fn backward_batch(
        &self,
        batch: &[TrainSample<'_>],
        loss_kind: LossKind,
    ) -> Result<BackwardResult, NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        for s in batch {
            if s.features.len() != self.desc.input {
                return Err(NeuralError::ShapeMismatch {
                    expected: self.desc.input,
                    got: s.features.len(),
                });
            }
            if s.action >= self.desc.output {
                return Err(NeuralError::BadAction {
                    action: s.action,
                    actions: self.desc.output,
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFinite("features"));
            }
            if !s.target.is_finite() || !s.weight.is_finite() {
                return Err(NeuralError::NonFinite("targets or weights"));
            }
        }

        let mut grads = vec![0.0; self.params.len()];
        let mut td_errors = Vec::with_capacity(batch.len());
        let mut loss = 0.0;
        let inv_b = 1.0 / batch.len() as f64;
        let mut ws = Workspace::new(&self.desc);

        for s in batch {
            self.forward_into(s.features, &mut ws);
            let err = ws.q[s.action] - s.target;
            td_errors.push(err);
            let g = match loss_kind {
                LossKind::Squared => {
                    loss += inv_b * s.weight * err * err;
                    inv_b * s.weight * 2.0 * err
                }
                LossKind::Huber => {
                    let (l, d) = if err.abs() <= 1.0 {
                        (0.5 * err * err, err)
                    } else {
                        (err.abs() - 0.5, err.signum())
                    };
                    loss += inv_b * s.weight * l;
                    inv_b * s.weight * d
                }
            };
            self.accumulate_sample_grads(s.features, s.action, g, &mut ws, &mut grads);
        }
        Ok(BackwardResult {
            grads,
            td_errors,
            loss,
        })
    }

    /// Backprop one sample's output gradient `g` (on `action`) into the
    /// parameter gradient accumulator. `ws` must hold the activations of
    /// the corresponding forward pass.
    fn accumulate_sample_grads(
        &self,
        features: &[f64],
        action: usize,
        g: f64,
        ws: &mut Workspace,
        grads: &mut [f64],
    ) {
        let k = self.desc.hidden.len();
        let acts = &ws.acts;
        let deltas = &mut ws.deltas;
        let hid: &[f64] = if k == 0 { features } else { &acts[k - 1] };
        let hlen = hid.len();
        let n = self.desc.output;
        let head_offset = self.params.len()
            - if self.desc.dueling {
                hlen + 1 + n * hlen + n
            } else {
                n * hlen + n
            };

        // Head gradients, plus the error flowing into the last hidden
        // activation when there is a hidden stack.
        if k > 0 {
            for v in deltas[k - 1].iter_mut() {
                *v = 0.0;
            }
        }
        if self.desc.dueling {
            let v_off = head_offset;
            let a_off = head_offset + hlen + 1;
            // dQ_a/dV = 1.
            for (i, &h) in hid.iter().enumerate() {
                grads[v_off + i] += g * h;
            }
            grads[v_off + hlen] += g;
            if k > 0 {
                for i in 0..hlen {
                    deltas[k - 1][i] += g * self.params[v_off + i];
                }
            }
            // dQ_a/dA_j = [j == a] - 1/n.
            for j in 0..n {
                let da = g * (((j == action) as u8 as f64) - 1.0 / n as f64);
                let w = a_off + j * hlen;
                for (i, &h) in hid.iter().enumerate() {
                    grads[w + i] += da * h;
                }
                grads[a_off + n * hlen + j] += da;
                if k > 0 {
                    for i in 0..hlen {
                        deltas[k - 1][i] += da * self.params[w + i];
                    }
                }
            }
        } else {
            let w = head_offset + action * hlen;
            for (i, &h) in hid.iter().enumerate() {
                grads[w + i] += g * h;
            }
            grads[head_offset + n * hlen + action] += g;
            if k > 0 {
                for i in 0..hlen {
                    deltas[k - 1][i] += g * self.params[w + i];
                }
            }
        }

        // Hidden stack, last layer to first. The input layer's upstream
        // error is never needed, so layer 0 skips that accumulation.
        let mut offsets = Vec::with_capacity(k);
        let mut off = 0;
        let mut prev = self.desc.input;
        for &h in &self.desc.hidden {
            offsets.push(off);
            off += h * prev + h;
            prev = h;
        }
        for l in (0..k).rev() {
            let rows = self.desc.hidden[l];
            let cols = if l == 0 {
                self.desc.input
            } else {
                self.desc.hidden[l - 1]
            };
            let below: &[f64] = if l == 0 { features } else { &acts[l - 1] };
            let off = offsets[l];
            let (lower, upper) = deltas.split_at_mut(l);
            let delta = &mut upper[0];
            // Rectifier gate.
            for r in 0..rows {
                if acts[l][r] <= 0.0 {
                    delta[r] = 0.0;
                }
            }
            if l > 0 {
                for v in lower[l - 1].iter_mut() {
                    *v = 0.0;
                }
            }
            for r in 0..rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                let w = off + r * cols;
                for i in 0..cols {
                    grads[w + i] += d * below[i];
                }
                grads[off + rows * cols + r] += d;
                if l > 0 {
                    let dprev = &mut lower[l - 1];
                    for i in 0..cols {
                        dprev[i] += d * self.params[w + i];
                    }
                }
            }
        }
    }

    /// Writes the network to a binary checkpoint: a header with the layer
    /// sizes, dueling flag, init seed and training step, followed by the
    /// flat parameter array. Round trip is exact.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), NeuralError> {
        let io_err = |source| NeuralError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io_err);
        put(CHECKPOINT_MAGIC)?;
        put(&CHECKPOINT_VERSION.to_le_bytes())?;
        put(&[self.desc.dueling as u8])?;
        let sizes: Vec<u32> = std::iter::once(self.desc.input as u32)
            .chain(self.desc.hidden.iter().map(|&h| h as u32))
            .chain(std::iter::once(self.desc.output as u32))
            .collect();
        put(&(sizes.len() as u32).to_le_bytes())?;
        for s in &sizes {
            put(&s.to_le_bytes())?;
        }
        put(&self.init_seed.to_le_bytes())?;
        put(&self.train_steps.to_le_bytes())?;
        put(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            put(&p.to_le_bytes())?;
        }
        w.into_inner()
            .map_err(|e| io_err(e.into_error()))?
            .sync_all()
            .ok();
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, NeuralError> {
        let io_err = |source| NeuralError::Io {
            path: path.display().to_string(),
            source,
        };
        let corrupt = |message: String| NeuralError::Corrupt {
            path: path.display().to_string(),
            message,
        };
        let file = std::fs::File::open(path).map_err(io_err)?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let version = read_u32(&mut r).map_err(io_err)?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(io_err)?;
        let dueling = flag[0] != 0;
        let n_sizes = read_u32(&mut r).map_err(io_err)? as usize;
        if n_sizes < 2 {
            return Err(corrupt(format!(
                "need at least 2 layer sizes, got {n_sizes}"
            )));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(read_u32(&mut r).map_err(io_err)? as usize);
        }
        let init_seed = read_u64(&mut r).map_err(io_err)?;
        let train_steps = read_u64(&mut r).map_err(io_err)?;
        let count = read_u64(&mut r).map_err(io_err)? as usize;
        let desc = NetDesc::new(
            sizes[0],
            &sizes[1..n_sizes - 1],
            sizes[n_sizes - 1],
            dueling,
        );
        if count != desc.param_len() {
            return Err(corrupt(format!(
                "parameter count {count} does not match architecture ({})",
                desc.param_len()
            )));
        }
        let mut params = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf).map_err(io_err)?;
            params.push(f64::from_le_bytes(buf));
        }
        Ok(Self {
            desc,
            params,
            init_seed,
            train_steps,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Adaptive moment-tracking optimizer over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_len: usize, step_size: f64) -> Self {
        Self {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
