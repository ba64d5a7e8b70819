//! Fully connected sigmoid network with a per-symbol softmax output.
//!
//! Observations are rows: a mini-batch of `b` observations is a `b×n` matrix
//! at every layer, so layer `l` computes `S = X·W + bias` with `W` stored as
//! `n_{l-1}×n_l`. The output layer holds three logits per symbol, ordered
//! (down, flat, up), and each triple is normalized independently.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabelMatrix, OneHotTargets};
use crate::error::{Error, Result};
use crate::matrixkit::{axpy_inplace, map_sigmoid, matmul, matmul_nt, matmul_tn, Matrix};
use crate::rng::Mt64;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DFN1";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: [usize; 4] = [1000, 900, 800, 700];
pub const INIT_STD: f64 = 0.01;
pub const HIDDEN_BIAS: f64 = 1.0;
/// Lower clamp applied to a true-class probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    layer_sizes: Vec<usize>,
    n_symbols: usize,
}

impl Topology {
    pub fn new(layer_sizes: Vec<usize>, n_symbols: usize) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid(
                "topology needs an input and an output layer",
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if n_symbols == 0 || *layer_sizes.last().expect("len >= 2") != 3 * n_symbols {
            return Err(Error::invalid(format!(
                "output layer must have 3 units per symbol: {} symbols, {} outputs",
                n_symbols,
                layer_sizes.last().expect("len >= 2")
            )));
        }
        Ok(Self {
            layer_sizes,
            n_symbols,
        })
    }

    /// `[n_features, hidden..., 3·n_symbols]`.
    pub fn with_hidden(n_features: usize, hidden: &[usize], n_symbols: usize) -> Result<Self> {
        let mut sizes = vec![n_features];
        sizes.extend_from_slice(hidden);
        sizes.push(3 * n_symbols);
        Self::new(sizes, n_symbols)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// Weights and biases, one entry per layer `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    topology: Topology,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Same shapes as [`NetworkParams`]; not yet scaled by a learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-layer pre-activations and activations of one mini-batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub act: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn output(&self) -> &Matrix {
        self.act.last().expect("at least one layer")
    }

    /// Activations feeding layer `l` (0-based), i.e. X^(l-1).
    fn layer_input(&self, l: usize) -> &Matrix {
        if l == 0 {
            &self.input
        } else {
            &self.act[l - 1]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    /// Mean over observations and symbols.
    pub value: f64,
    /// True-class probabilities that had to be clamped to [`PROB_FLOOR`].
    pub clamped: usize,
}

pub fn init_params(topo: &Topology, seed: u64) -> NetworkParams {
    init_params_with_std(topo, seed, INIT_STD)
}

/// Gaussian weights by inverse-CDF transform of MT19937-64 uniforms; hidden
/// biases start at 1 and output biases at 0.
pub fn init_params_with_std(topo: &Topology, seed: u64, std: f64) -> NetworkParams {
    let mut rng = Mt64::new(seed);
    let sizes = topo.layer_sizes();
    let depth = topo.depth();
    let mut weights = Vec::with_capacity(depth);
    let mut biases = Vec::with_capacity(depth);
    for l in 0..depth {
        weights.push(Matrix::from_fn(sizes[l], sizes[l + 1], |_, _| {
            rng.gaussian(0.0, std)
        }));
        let b = if l + 1 == depth { 0.0 } else { HIDDEN_BIAS };
        biases.push(vec![b; sizes[l + 1]]);
    }
    NetworkParams {
        topology: topo.clone(),
        weights,
        biases,
    }
}

pub fn count_params(topo: &Topology) -> usize {
    topo.layer_sizes()
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

impl NetworkParams {
    pub fn from_parts(
        topology: Topology,
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let sizes = topology.layer_sizes();
        if weights.len() != topology.depth() || biases.len() != topology.depth() {
            return Err(Error::invalid("layer count does not match topology"));
        }
        for l in 0..topology.depth() {
            if weights[l].shape() != (sizes[l], sizes[l + 1]) || biases[l].len() != sizes[l + 1] {
                return Err(Error::Shape {
                    op: "NetworkParams::from_parts",
                    left: weights[l].shape(),
                    right: (sizes[l], sizes[l + 1]),
                });
            }
        }
        Ok(Self {
            topology,
            weights,
            biases,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// `params += scale · grads`.
    pub fn apply(&mut self, scale: f64, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != self.weights.len() {
            return Err(Error::invalid("gradient layer count mismatch"));
        }
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            axpy_inplace(w, scale, g)?;
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            if b.len() != g.len() {
                return Err(Error::Shape {
                    op: "apply",
                    left: (1, b.len()),
                    right: (1, g.len()),
                });
            }
            for (x, d) in b.iter_mut().zip(g) {
                *x += scale * d;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.topology.layer_sizes();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u64).to_le_bytes());
        for &s in sizes {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.data().iter().chain(b) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Format {
            what: "DFN1 checkpoint",
            msg,
        };
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4).ok_or_else(|| bad("truncated header".into()))? != CHECKPOINT_MAGIC {
            return Err(bad("missing DFN1 magic".into()));
        }
        let version = cur.u32().ok_or_else(|| bad("truncated header".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = cur.u64().ok_or_else(|| bad("truncated header".into()))? as usize;
        if !(2..=1 << 16).contains(&count) {
            return Err(bad(format!("implausible layer count {count}")));
        }
        let mut sizes = Vec::with_capacity(count);
        for _ in 0..count {
            sizes.push(
                cur.u64()
                    .ok_or_else(|| bad("truncated layer sizes".into()))? as usize,
            );
        }
        let out = *sizes.last().expect("count >= 2");
        let topology = Topology::new(sizes.clone(), out / 3).map_err(|e| bad(e.to_string()))?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..topology.depth() {
            let (r, c) = (sizes[l], sizes[l + 1]);
            let w = cur
                .f64s(r * c)
                .ok_or_else(|| bad(format!("truncated layer {}", l + 1)))?;
            let b = cur
                .f64s(c)
                .ok_or_else(|| bad(format!("truncated layer {}", l + 1)))?;
            weights.push(Matrix::new(r, c, w)?);
            biases.push(b);
        }
        if cur.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Self::from_parts(topology, weights, biases)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n.checked_mul(8)?)?;
        Some(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        )
    }
}

/// Softmax over each consecutive triple of columns, with per-triple max
/// subtraction.
pub fn block_softmax(s: &Matrix) -> Matrix {
    let mut out = s.clone();
    for r in 0..out.rows() {
        for block in out.row_mut(r).chunks_exact_mut(3) {
            let m = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in block.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            for v in block.iter_mut() {
                *v /= sum;
            }
        }
    }
    out
}

pub fn forward(params: &NetworkParams, x: &Matrix) -> Result<ForwardCache> {
    if x.cols() != params.topology.n_inputs() {
        return Err(Error::Shape {
            op: "forward",
            left: x.shape(),
            right: params.weights[0].shape(),
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("network input"));
    }
    let depth = params.topology.depth();
    let mut pre = Vec::with_capacity(depth);
    let mut act: Vec<Matrix> = Vec::with_capacity(depth);
    for l in 0..depth {
        let input = if l == 0 { x } else { &act[l - 1] };
        let mut s = matmul(input, &params.weights[l])?;
        s.add_row_vector(&params.biases[l])?;
        let a = if l + 1 == depth {
            block_softmax(&s)
        } else {
            map_sigmoid(&s)
        };
        pre.push(s);
        act.push(a);
    }
    Ok(ForwardCache {
        input: x.clone(),
        pre,
        act,
    })
}

/// Mean over observations and symbols of `-Σ_k y_k ln ŷ_k`.
pub fn cross_entropy(yhat: &Matrix, y: &OneHotTargets) -> Result<CrossEntropy> {
    if yhat.shape() != y.y.shape() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: yhat.shape(),
            right: y.y.shape(),
        });
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for (&p, &t) in yhat.data().iter().zip(y.y.data()) {
        if t != 0.0 {
            // NaN fails the comparison and propagates to the caller.
            let p = if p <= PROB_FLOOR {
                clamped += 1;
                PROB_FLOOR
            } else {
                p
            };
            total -= t * p.ln();
        }
    }
    Ok(CrossEntropy {
        value: total / (yhat.rows() * y.n_symbols) as f64,
        clamped,
    })
}

/// Gradients of [`cross_entropy`] with respect to every weight and bias.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    y: &OneHotTargets,
) -> Result<Gradients> {
    let depth = params.topology.depth();
    if cache.pre.len() != depth || cache.output().shape() != y.y.shape() {
        return Err(Error::Shape {
            op: "backward",
            left: cache.output().shape(),
            right: y.y.shape(),
        });
    }
    for l in 0..depth {
        if cache.pre[l].cols() != params.weights[l].cols() {
            return Err(Error::Shape {
                op: "backward",
                left: cache.pre[l].shape(),
                right: params.weights[l].shape(),
            });
        }
    }
    let scale = 1.0 / (cache.batch_size() * params.topology.n_symbols()) as f64;

    // Softmax with cross-entropy: dE/dS = ŷ - y.
    let mut delta = cache.output().clone();
    for (d, t) in delta.data_mut().iter_mut().zip(y.y.data()) {
        *d = (*d - t) * scale;
    }

    let mut gw = vec![None; depth];
    let mut gb = vec![None; depth];
    for l in (0..depth).rev() {
        let input = cache.layer_input(l);
        gw[l] = Some(matmul_tn(input, &delta)?);
        gb[l] = Some(delta.column_sums());
        if l > 0 {
            let mut next = matmul_nt(&delta, &params.weights[l])?;
            for (d, &a) in next.data_mut().iter_mut().zip(input.data()) {
                *d *= a * (1.0 - a);
            }
            delta = next;
        }
    }
    Ok(Gradients {
        weights: gw.into_iter().map(|g| g.expect("filled")).collect(),
        biases: gb.into_iter().map(|g| g.expect("filled")).collect(),
    })
}

/// Class per symbol from block probabilities. Ties prefer 0, then -1.
pub fn labels_from_probs(yhat: &Matrix, n_symbols: usize) -> LabelMatrix {
    let mut data = Vec::with_capacity(yhat.rows() * n_symbols);
    for r in 0..yhat.rows() {
        for b in yhat.row(r).chunks_exact(3) {
            let mut best = 1;
            for k in [0, 2] {
                if b[k] > b[best] {
                    best = k;
                }
            }
            data.push(best as i8 - 1);
        }
    }
    LabelMatrix::new(yhat.rows(), n_symbols, data).expect("classes are in range")
}

pub fn predict_labels(params: &NetworkParams, x: &Matrix) -> Result<LabelMatrix> {
    let cache = forward(params, x)?;
    Ok(labels_from_probs(
        cache.output(),
        params.topology.n_symbols(),
    ))
}
