//! GCN encoder and MLP predictor over the autodiff tape.
//!
//! Each GCN layer computes `Â·H·W + b`, then batch normalization over all
//! nodes, then PReLU. The predictor is `PReLU(H·W1 + b1)·W2 + b2`.

use std::rc::Rc;

use rand::Rng;

use crate::autodiff::{BatchNormMode, BatchStats, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, Matrix};

/// Lower bound applied to batch variances before taking the square root.
pub const BN_VAR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    /// Output width of each GCN layer; the last entry is the embedding size.
    pub encoder_dims: Vec<usize>,
    pub predictor_hidden: usize,
    pub batch_norm: bool,
    /// Weight of the current batch in running-statistic updates.
    pub bn_momentum: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            encoder_dims: vec![256, 128],
            predictor_hidden: 512,
            batch_norm: true,
            bn_momentum: 0.1,
        }
    }
}

impl Architecture {
    pub fn embedding_dim(&self) -> usize {
        *self.encoder_dims.last().expect("at least one layer")
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_dims.is_empty() || self.encoder_dims.contains(&0) || self.predictor_hidden == 0 {
            return Err(Error::Config("layer sizes must be positive and non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Config(format!("bn_momentum {} outside [0, 1]", self.bn_momentum)));
        }
        Ok(())
    }
}

/// Role of a trainable parameter, used for weight-decay exemptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    PreluSlope,
    BatchNormAffine,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Bias)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub prelu_slope: Matrix,
    pub bn_gamma: Matrix,
    pub bn_beta: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
}

impl GcnLayer {
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        GcnLayer {
            weight: glorot(d_in, d_out, rng),
            bias: Matrix::zeros(1, d_out),
            prelu_slope: Matrix::scalar(0.25),
            bn_gamma: Matrix::filled(1, d_out, 1.0),
            bn_beta: Matrix::zeros(1, d_out),
            running_mean: Matrix::zeros(1, d_out),
            running_var: Matrix::filled(1, d_out, 1.0),
        }
    }

    fn trainable(&self) -> [(&Matrix, ParamKind); 5] {
        [
            (&self.weight, ParamKind::Weight),
            (&self.bias, ParamKind::Bias),
            (&self.prelu_slope, ParamKind::PreluSlope),
            (&self.bn_gamma, ParamKind::BatchNormAffine),
            (&self.bn_beta, ParamKind::BatchNormAffine),
        ]
    }

    fn trainable_mut(&mut self) -> [&mut Matrix; 5] {
        [
            &mut self.weight,
            &mut self.bias,
            &mut self.prelu_slope,
            &mut self.bn_gamma,
            &mut self.bn_beta,
        ]
    }

    /// Trainable parameters followed by the running statistics.
    pub fn all_matrices(&self) -> [&Matrix; 7] {
        [
            &self.weight,
            &self.bias,
            &self.prelu_slope,
            &self.bn_gamma,
            &self.bn_beta,
            &self.running_mean,
            &self.running_var,
        ]
    }

    pub fn all_matrices_mut(&mut self) -> [&mut Matrix; 7] {
        [
            &mut self.weight,
            &mut self.bias,
            &mut self.prelu_slope,
            &mut self.bn_gamma,
            &mut self.bn_beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    /// Folds batch statistics into the running estimates. The running
    /// variance uses the unbiased batch variance.
    pub fn update_running(&mut self, stats: &BatchStats, momentum: f64) {
        let n = stats.n as f64;
        let correction = if stats.n > 1 { n / (n - 1.0) } else { 1.0 };
        for (r, &m) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - momentum) * *r + momentum * m;
        }
        for (r, &v) in self.running_var.data_mut().iter_mut().zip(&stats.var) {
            *r = (1.0 - momentum) * *r + momentum * v * correction;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub w1: Matrix,
    pub b1: Matrix,
    pub prelu_slope: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl Predictor {
    pub fn new<R: Rng + ?Sized>(d: usize, hidden: usize, rng: &mut R) -> Self {
        Predictor {
            w1: glorot(d, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            prelu_slope: Matrix::scalar(0.25),
            w2: glorot(hidden, d, rng),
            b2: Matrix::zeros(1, d),
        }
    }

    fn trainable(&self) -> [(&Matrix, ParamKind); 5] {
        [
            (&self.w1, ParamKind::Weight),
            (&self.b1, ParamKind::Bias),
            (&self.prelu_slope, ParamKind::PreluSlope),
            (&self.w2, ParamKind::Weight),
            (&self.b2, ParamKind::Bias),
        ]
    }

    fn trainable_mut(&mut self) -> [&mut Matrix; 5] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.prelu_slope,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Glorot/Xavier uniform initialization.
pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction")
}

/// Online encoder, target encoder and predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    pub arch: Architecture,
    pub online: Vec<GcnLayer>,
    pub target: Vec<GcnLayer>,
    pub predictor: Predictor,
}

impl EncoderState {
    /// Fresh parameters; the target starts as an exact copy of the online
    /// encoder.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, in_dim: usize, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut online = Vec::with_capacity(arch.encoder_dims.len());
        let mut d_in = in_dim;
        for &d_out in &arch.encoder_dims {
            online.push(GcnLayer::new(d_in, d_out, rng));
            d_in = d_out;
        }
        let predictor = Predictor::new(arch.embedding_dim(), arch.predictor_hidden, rng);
        Ok(EncoderState {
            target: online.clone(),
            online,
            predictor,
            arch,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.online[0].weight.rows()
    }

    /// Trainable online-side parameters (encoder then predictor) in a fixed
    /// order shared by [`OnlineVars`] and the optimizer.
    pub fn trainable(&self) -> Vec<(&Matrix, ParamKind)> {
        let mut out: Vec<_> = self.online.iter().flat_map(|l| l.trainable()).collect();
        out.extend(self.predictor.trainable());
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<_> = self.online.iter_mut().flat_map(|l| l.trainable_mut()).collect();
        out.extend(self.predictor.trainable_mut());
        out
    }

    /// Records the online parameters as tracked leaves.
    pub fn register_online(&self, tape: &mut Tape) -> OnlineVars {
        let vars: Vec<Var> = self.trainable().iter().map(|(m, _)| tape.param((*m).clone())).collect();
        OnlineVars::from_flat(&vars, self.online.len())
    }

    /// Records the target parameters as constants.
    pub fn register_target(&self, tape: &mut Tape) -> Vec<LayerVars> {
        self.target
            .iter()
            .map(|l| {
                let [w, b, s, g, be] = l.trainable().map(|(m, _)| tape.constant(m.clone()));
                LayerVars {
                    weight: w,
                    bias: b,
                    slope: s,
                    gamma: g,
                    beta: be,
                }
            })
            .collect()
    }

    /// Checks that online and target layers have identical shapes.
    pub fn check_shapes(&self) -> Result<()> {
        if self.online.len() != self.target.len() {
            return Err(Error::Validation("online and target depth differ".into()));
        }
        for (o, t) in self.online.iter().zip(&self.target) {
            for (a, b) in o.all_matrices().iter().zip(t.all_matrices()) {
                if a.shape() != b.shape() {
                    return Err(Error::Dimension {
                        op: "encoder_state",
                        left: a.shape(),
                        right: b.shape(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
    pub slope: Var,
    pub gamma: Var,
    pub beta: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct PredictorVars {
    pub w1: Var,
    pub b1: Var,
    pub slope: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Tape handles of the online parameters.
#[derive(Clone, Debug)]
pub struct OnlineVars {
    pub layers: Vec<LayerVars>,
    pub predictor: PredictorVars,
}

impl OnlineVars {
    /// Rebuilds the structure from a flat list in [`EncoderState::trainable`]
    /// order.
    pub fn from_flat(vars: &[Var], n_layers: usize) -> Self {
        assert_eq!(vars.len(), 5 * n_layers + 5, "flat parameter count");
        let layers = vars[..5 * n_layers]
            .chunks_exact(5)
            .map(|c| LayerVars {
                weight: c[0],
                bias: c[1],
                slope: c[2],
                gamma: c[3],
                beta: c[4],
            })
            .collect();
        let p = &vars[5 * n_layers..];
        OnlineVars {
            layers,
            predictor: PredictorVars {
                w1: p[0],
                b1: p[1],
                slope: p[2],
                w2: p[3],
                b2: p[4],
            },
        }
    }

    pub fn flat(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self
            .layers
            .iter()
            .flat_map(|l| [l.weight, l.bias, l.slope, l.gamma, l.beta])
            .collect();
        let p = &self.predictor;
        out.extend([p.w1, p.b1, p.slope, p.w2, p.b2]);
        out
    }
}

/// How batch normalization behaves during a forward pass.
#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a> {
    /// Batch statistics; returned for running-estimate updates.
    Train,
    /// Running statistics of the given layers.
    Eval(&'a [GcnLayer]),
    /// No normalization at all.
    Off,
}

/// Runs the GCN stack. Returns the node representations and, in train mode,
/// the batch statistics of each layer.
pub fn gcn_forward(
    tape: &mut Tape,
    layers: &[LayerVars],
    norm_adj: &Rc<CsrMatrix>,
    x: Var,
    mode: NormMode<'_>,
) -> Result<(Var, Vec<BatchStats>)> {
    let mut h = x;
    let mut stats = Vec::new();
    for (li, l) in layers.iter().enumerate() {
        let (d_in, d_out) = tape.value(l.weight).shape();
        if tape.value(h).cols() != d_in {
            return Err(Error::Dimension {
                op: "gcn_forward",
                left: tape.value(h).shape(),
                right: (d_in, d_out),
            });
        }
        // Propagate on the narrower side of the weight matrix.
        let z = if d_in <= d_out {
            let p = tape.spmm(norm_adj, h)?;
            tape.matmul(p, l.weight)?
        } else {
            let p = tape.matmul(h, l.weight)?;
            tape.spmm(norm_adj, p)?
        };
        let z = tape.add_bias(z, l.bias)?;
        let z = match mode {
            NormMode::Train => {
                let (y, s) = tape.batch_norm(z, l.gamma, l.beta, BatchNormMode::Train { var_floor: BN_VAR_FLOOR })?;
                stats.push(s.expect("train mode yields statistics"));
                y
            }
            NormMode::Eval(params) => {
                let p = &params[li];
                let m = BatchNormMode::Eval {
                    mean: p.running_mean.data(),
                    var: p.running_var.data(),
                    var_floor: BN_VAR_FLOOR,
                };
                tape.batch_norm(z, l.gamma, l.beta, m)?.0
            }
            NormMode::Off => z,
        };
        h = tape.prelu(z, l.slope)?;
    }
    Ok((h, stats))
}

pub fn predictor_forward(tape: &mut Tape, p: &PredictorVars, h: Var) -> Result<Var> {
    let z = tape.matmul(h, p.w1)?;
    let z = tape.add_bias(z, p.b1)?;
    let z = tape.prelu(z, p.slope)?;
    let z = tape.matmul(z, p.w2)?;
    tape.add_bias(z, p.b2)
}

/// Online-encoder embeddings of a graph in inference mode.
pub fn embed(state: &EncoderState, norm_adj: &Rc<CsrMatrix>, features: &Matrix) -> Result<Matrix> {
    embed_layers(&state.online, state.arch.batch_norm, norm_adj, features)
}

/// Inference-mode output of any layer stack, normalized with the stack's
/// own running statistics.
pub fn embed_layers(
    stack: &[GcnLayer],
    batch_norm: bool,
    norm_adj: &Rc<CsrMatrix>,
    features: &Matrix,
) -> Result<Matrix> {
    let mut tape = Tape::new();
    let layers: Vec<LayerVars> = stack
        .iter()
        .map(|l| {
            let [w, b, s, g, be] = l.trainable().map(|(m, _)| tape.constant(m.clone()));
            LayerVars {
                weight: w,
                bias: b,
                slope: s,
                gamma: g,
                beta: be,
            }
        })
        .collect();
    let x = tape.constant(features.clone());
    let mode = if batch_norm { NormMode::Eval(stack) } else { NormMode::Off };
    let (h, _) = gcn_forward(&mut tape, &layers, norm_adj, x, mode)?;
    Ok(tape.value(h).clone())
}
