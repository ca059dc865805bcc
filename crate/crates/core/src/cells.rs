//! Standard LSTM and the two time-modulated variants, with hand-derived
//! backpropagation through time.
//!
//! For every gate `g ∈ {f, i, o}` and the candidate `c`:
//!
//! ```text
//! a_g = W_gl·l(t-1) + W_gx·x(t) [+ w_gj·δ(t)] + b_g      (w_gj: v1 only)
//! f, i, o = σ(a_f), σ(a_i), σ(a_o);   c = tanh(a_c)
//! h(t) = f ∘ h(t-1) + i ∘ c [+ w_tj·δ(t)]                (w_tj: v2 only)
//! y(t) = o ∘ tanh(h(t))
//! p(t) = σ(W_y·y(t) + b_y)
//! ```
//!
//! The gates see the previous labels, the current image features and the
//! time lapse; they do not see `h(t-1)`. The recurrence runs only through
//! the internal state `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid_scalar, Matrix, Vector};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    StandardLstm,
    TlstmV1,
    TlstmV2,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::StandardLstm, CellKind::TlstmV1, CellKind::TlstmV2];

    pub fn has_gate_delta(self) -> bool {
        self == CellKind::TlstmV1
    }

    pub fn has_state_delta(self) -> bool {
        self == CellKind::TlstmV2
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::StandardLstm => "lstm",
            CellKind::TlstmV1 => "tlstmv1",
            CellKind::TlstmV2 => "tlstmv2",
        }
    }
}

/// Gate order used for storage, checkpoints and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Forget,
    Input,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Candidate];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDims {
    pub hidden: usize,
    pub labels: usize,
    pub features: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateWeights<T> {
    /// `H × L`
    pub label: Matrix<T>,
    /// `H × D`
    pub feature: Matrix<T>,
    /// `H`, present only for tLSTMv1.
    pub delta: Option<Vector<T>>,
    pub bias: Vector<T>,
}

impl<T: Scalar> GateWeights<T> {
    fn zeros(dims: CellDims, with_delta: bool) -> Self {
        GateWeights {
            label: Matrix::zeros(dims.hidden, dims.labels),
            feature: Matrix::zeros(dims.hidden, dims.features),
            delta: with_delta.then(|| Vector::zeros(dims.hidden)),
            bias: Vector::zeros(dims.hidden),
        }
    }

    /// `out = W_l·l + W_x·x + w_j·δ + b`
    fn preactivation(&self, label: &[T], features: &[T], delta: T, out: &mut [T]) {
        out.copy_from_slice(self.bias.as_slice());
        self.label.matvec_acc(label, out);
        self.feature.matvec_acc(features, out);
        if let (Some(w), false) = (&self.delta, delta == T::zero()) {
            for (o, &wj) in out.iter_mut().zip(w.iter()) {
                *o += wj * delta;
            }
        }
    }
}

/// Affine map followed by an elementwise sigmoid: `p = σ(W·v + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout<T> {
    pub weight: Matrix<T>,
    pub bias: Vector<T>,
}

impl<T: Scalar> Readout<T> {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Readout {
            weight: Matrix::zeros(outputs, inputs),
            bias: Vector::zeros(outputs),
        }
    }

    pub fn init(outputs: usize, inputs: usize, rng: &mut Rng) -> Self {
        Readout {
            weight: uniform_matrix(outputs, inputs, inputs, rng),
            bias: Vector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, input: &Vector<T>) -> Result<Vector<T>> {
        if input.len() != self.inputs() {
            return Err(Error::shape(
                "readout",
                self.weight.shape(),
                format!("input of length {}", input.len()),
            ));
        }
        let mut z = self.bias.clone();
        self.weight.matvec_acc(input.as_slice(), z.as_mut_slice());
        Ok(z.map(sigmoid_scalar))
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂input`.
    pub fn backward(
        &self,
        input: &Vector<T>,
        probs: &Vector<T>,
        d_probs: &Vector<T>,
        grads: &mut Readout<T>,
    ) -> Vector<T> {
        let dz: Vec<T> = probs
            .iter()
            .zip(d_probs.iter())
            .map(|(&p, &dp)| dp * p * (T::one() - p))
            .collect();
        grads.weight.add_outer(&dz, input.as_slice());
        for (b, &d) in grads.bias.as_mut_slice().iter_mut().zip(&dz) {
            *b += d;
        }
        let mut d_input = Vector::zeros(self.inputs());
        self.weight.matvec_t_acc(&dz, d_input.as_mut_slice());
        d_input
    }

    pub(crate) fn check_finite_grad(d_probs: &Vector<T>) -> Result<()> {
        if d_probs.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("readout upstream gradient".into()))
        }
    }
}

/// Weights of one recurrent cell plus its label readout.
///
/// The δ weights exist exactly when the cell kind uses them: none for the
/// standard LSTM, one vector per gate for tLSTMv1, a single state vector for
/// tLSTMv2.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParameters<T> {
    kind: CellKind,
    dims: CellDims,
    gates: [GateWeights<T>; 4],
    time_delta: Option<Vector<T>>,
    readout: Readout<T>,
}

/// Gradient container; shape-congruent with the parameters it was made from.
pub type CellGradients<T> = CellParameters<T>;

const GATE_BLOCK_NAMES: [[&str; 4]; 4] = [
    ["f.label", "f.feature", "f.delta", "f.bias"],
    ["i.label", "i.feature", "i.delta", "i.bias"],
    ["o.label", "o.feature", "o.delta", "o.bias"],
    ["c.label", "c.feature", "c.delta", "c.bias"],
];

impl<T: Scalar> CellParameters<T> {
    pub fn zeros(kind: CellKind, dims: CellDims) -> Self {
        let gate = || GateWeights::zeros(dims, kind.has_gate_delta());
        CellParameters {
            kind,
            dims,
            gates: [gate(), gate(), gate(), gate()],
            time_delta: kind.has_state_delta().then(|| Vector::zeros(dims.hidden)),
            readout: Readout::zeros(dims.labels, dims.hidden),
        }
    }

    /// Uniform `±1/√fan_in` weights, zero biases, forget bias `+1`.
    pub fn init(kind: CellKind, dims: CellDims, rng: &mut Rng) -> Self {
        let fan_in = dims.labels + dims.features + usize::from(kind.has_gate_delta());
        let mut gate = |g: Gate| {
            let bias = if g == Gate::Forget {
                Vector::filled(dims.hidden, T::one())
            } else {
                Vector::zeros(dims.hidden)
            };
            GateWeights {
                label: uniform_matrix(dims.hidden, dims.labels, fan_in, rng),
                feature: uniform_matrix(dims.hidden, dims.features, fan_in, rng),
                delta: kind
                    .has_gate_delta()
                    .then(|| uniform_vector(dims.hidden, fan_in, rng)),
                bias,
            }
        };
        let gates = Gate::ALL.map(&mut gate);
        let time_delta = kind
            .has_state_delta()
            .then(|| uniform_vector(dims.hidden, 1, rng));
        let readout = Readout::init(dims.labels, dims.hidden, rng);
        CellParameters {
            kind,
            dims,
            gates,
            time_delta,
            readout,
        }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn dims(&self) -> CellDims {
        self.dims
    }

    pub fn gate(&self, g: Gate) -> &GateWeights<T> {
        &self.gates[g as usize]
    }

    pub fn gate_mut(&mut self, g: Gate) -> &mut GateWeights<T> {
        &mut self.gates[g as usize]
    }

    pub fn time_delta(&self) -> Option<&Vector<T>> {
        self.time_delta.as_ref()
    }

    pub fn time_delta_mut(&mut self) -> Option<&mut Vector<T>> {
        self.time_delta.as_mut()
    }

    pub fn readout(&self) -> &Readout<T> {
        &self.readout
    }

    pub fn readout_mut(&mut self) -> &mut Readout<T> {
        &mut self.readout
    }

    /// Same recurrent and readout weights, viewed as a different cell kind:
    /// δ weights the target kind needs are zero-filled, others dropped.
    pub fn with_kind(&self, kind: CellKind) -> Self {
        let mut out = self.clone();
        out.kind = kind;
        for g in out.gates.iter_mut() {
            g.delta = match (kind.has_gate_delta(), g.delta.take()) {
                (true, Some(d)) => Some(d),
                (true, None) => Some(Vector::zeros(self.dims.hidden)),
                (false, _) => None,
            };
        }
        out.time_delta = match (kind.has_state_delta(), out.time_delta.take()) {
            (true, Some(d)) => Some(d),
            (true, None) => Some(Vector::zeros(self.dims.hidden)),
            (false, _) => None,
        };
        out
    }

    /// Checks that every block has the shape the dims and kind require.
    pub fn validate(&self) -> Result<()> {
        let CellDims {
            hidden: h,
            labels: l,
            features: d,
        } = self.dims;
        let expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(Error::shape(
                    "CellParameters",
                    format!("{name} {}x{}", got.0, got.1),
                    format!("expected {}x{}", want.0, want.1),
                ))
            }
        };
        for (gate, names) in self.gates.iter().zip(GATE_BLOCK_NAMES) {
            expect(names[0], (gate.label.rows(), gate.label.cols()), (h, l))?;
            expect(names[1], (gate.feature.rows(), gate.feature.cols()), (h, d))?;
            expect(names[3], (gate.bias.len(), 1), (h, 1))?;
            match (&gate.delta, self.kind.has_gate_delta()) {
                (Some(v), true) => expect(names[2], (v.len(), 1), (h, 1))?,
                (None, false) => {}
                _ => {
                    return Err(Error::Incompatible(format!(
                        "{} presence does not match {:?}",
                        names[2], self.kind
                    )))
                }
            }
        }
        match (&self.time_delta, self.kind.has_state_delta()) {
            (Some(v), true) => expect("time_delta", (v.len(), 1), (h, 1))?,
            (None, false) => {}
            _ => {
                return Err(Error::Incompatible(format!(
                    "time_delta presence does not match {:?}",
                    self.kind
                )))
            }
        }
        expect(
            "readout.weight",
            (self.readout.weight.rows(), self.readout.weight.cols()),
            (l, h),
        )?;
        expect("readout.bias", (self.readout.bias.len(), 1), (l, 1))
    }

    /// Parameter blocks in checkpoint order.
    pub fn blocks(&self) -> Vec<(&'static str, &[T])> {
        let mut out = Vec::with_capacity(19);
        for (gate, names) in self.gates.iter().zip(GATE_BLOCK_NAMES) {
            out.push((names[0], gate.label.as_slice()));
            out.push((names[1], gate.feature.as_slice()));
            if let Some(d) = &gate.delta {
                out.push((names[2], d.as_slice()));
            }
            out.push((names[3], gate.bias.as_slice()));
        }
        if let Some(d) = &self.time_delta {
            out.push(("time_delta", d.as_slice()));
        }
        out.push(("readout.weight", self.readout.weight.as_slice()));
        out.push(("readout.bias", self.readout.bias.as_slice()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        let mut out = Vec::with_capacity(19);
        for (gate, names) in self.gates.iter_mut().zip(GATE_BLOCK_NAMES) {
            out.push((names[0], gate.label.as_mut_slice()));
            out.push((names[1], gate.feature.as_mut_slice()));
            if let Some(d) = &mut gate.delta {
                out.push((names[2], d.as_mut_slice()));
            }
            out.push((names[3], gate.bias.as_mut_slice()));
        }
        if let Some(d) = &mut self.time_delta {
            out.push(("time_delta", d.as_mut_slice()));
        }
        out.push(("readout.weight", self.readout.weight.as_mut_slice()));
        out.push(("readout.bias", self.readout.bias.as_mut_slice()));
        out
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.dims)
    }
}

/// Cached activations of one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace<T> {
    pub label_in: Vector<T>,
    pub features: Vector<T>,
    pub delta: T,
    pub state_prev: Vector<T>,
    pub forget: Vector<T>,
    pub input: Vector<T>,
    pub output: Vector<T>,
    pub candidate: Vector<T>,
    /// Internal state `h(t)`.
    pub state: Vector<T>,
    /// `tanh(h(t))`
    pub state_tanh: Vector<T>,
    /// `y(t) = o ∘ tanh(h(t))`, before the readout.
    pub emission: Vector<T>,
    /// Label probabilities from the readout.
    pub probs: Vector<T>,
}

pub fn forward_step<T: Scalar>(
    params: &CellParameters<T>,
    label_prev: &Vector<T>,
    features: &Vector<T>,
    delta: T,
    state_prev: &Vector<T>,
) -> Result<StepTrace<T>> {
    let dims = params.dims;
    if label_prev.len() != dims.labels {
        return Err(Error::shape("forward_step labels", dims.labels, label_prev.len()));
    }
    if features.len() != dims.features {
        return Err(Error::shape("forward_step features", dims.features, features.len()));
    }
    if state_prev.len() != dims.hidden {
        return Err(Error::shape("forward_step state", dims.hidden, state_prev.len()));
    }
    if !label_prev.is_finite() || !features.is_finite() || !state_prev.is_finite() {
        return Err(Error::NonFinite("forward_step input".into()));
    }
    if !delta.is_finite() {
        return Err(Error::NonFinite("forward_step time lapse".into()));
    }
    if delta < T::zero() {
        return Err(Error::Config(format!("negative time lapse {delta}")));
    }
    // The standard LSTM carries no δ weights, so δ contributes nothing.
    let h = dims.hidden;
    let mut pre = [
        vec![T::zero(); h],
        vec![T::zero(); h],
        vec![T::zero(); h],
        vec![T::zero(); h],
    ];
    for (gate, out) in params.gates.iter().zip(pre.iter_mut()) {
        gate.preactivation(label_prev.as_slice(), features.as_slice(), delta, out);
    }
    let [a_f, a_i, a_o, a_c] = pre;
    let forget = Vector::from_vec(a_f.into_iter().map(sigmoid_scalar).collect());
    let input = Vector::from_vec(a_i.into_iter().map(sigmoid_scalar).collect());
    let output = Vector::from_vec(a_o.into_iter().map(sigmoid_scalar).collect());
    let candidate = Vector::from_vec(a_c.into_iter().map(|v| v.tanh()).collect());

    let mut state = Vector::zeros(h);
    for k in 0..h {
        state[k] = forget[k] * state_prev[k] + input[k] * candidate[k];
    }
    if let (Some(w), false) = (&params.time_delta, delta == T::zero()) {
        for k in 0..h {
            state[k] += w[k] * delta;
        }
    }
    let state_tanh = state.map(|v| v.tanh());
    let mut emission = Vector::zeros(h);
    for k in 0..h {
        emission[k] = output[k] * state_tanh[k];
    }
    let probs = params.readout.forward(&emission)?;
    Ok(StepTrace {
        label_in: label_prev.clone(),
        features: features.clone(),
        delta,
        state_prev: state_prev.clone(),
        forget,
        input,
        output,
        candidate,
        state,
        state_tanh,
        emission,
        probs,
    })
}

/// Cell inputs for one sequence: per-step features, ground-truth labels and
/// time lapses (already scaled). `deltas[0]` is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSequence<T> {
    pub features: Vec<Vector<T>>,
    pub labels: Vec<Vector<T>>,
    pub deltas: Vec<T>,
}

impl<T: Scalar> CellSequence<T> {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Runs the cell over a whole sequence with teacher forcing.
///
/// Step 1 sees an all-zero label vector and `δ = 0`; step `t > 1` sees the
/// ground-truth labels of step `t - 1`. The labels of the last step are
/// never fed in; its readout is the prediction.
pub fn forward_sequence<T: Scalar>(
    params: &CellParameters<T>,
    seq: &CellSequence<T>,
) -> Result<Vec<StepTrace<T>>> {
    params.validate()?;
    let n = seq.len();
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    if seq.labels.len() != n || seq.deltas.len() != n {
        return Err(Error::shape(
            "forward_sequence",
            format!("{n} feature steps"),
            format!("{} label steps, {} deltas", seq.labels.len(), seq.deltas.len()),
        ));
    }
    let dims = params.dims;
    let zero_labels = Vector::zeros(dims.labels);
    let mut state = Vector::zeros(dims.hidden);
    let mut traces = Vec::with_capacity(n);
    for t in 0..n {
        let (label_prev, delta) = if t == 0 {
            (&zero_labels, T::zero())
        } else {
            (&seq.labels[t - 1], seq.deltas[t])
        };
        let trace = forward_step(params, label_prev, &seq.features[t], delta, &state)?;
        state = trace.state.clone();
        traces.push(trace);
    }
    Ok(traces)
}

/// Output of [`backward_sequence`].
#[derive(Clone, Debug)]
pub struct CellBackward<T> {
    pub grads: CellGradients<T>,
    /// `∂L/∂x(t)` for every step, for the feature extractor.
    pub feature_grads: Vec<Vector<T>>,
}

/// Reverse-mode gradients through the unrolled sequence.
///
/// `d_probs[t]` is `∂L/∂p(t)` for supervised steps and `None` elsewhere.
pub fn backward_sequence<T: Scalar>(
    params: &CellParameters<T>,
    traces: &[StepTrace<T>],
    d_probs: &[Option<Vector<T>>],
) -> Result<CellBackward<T>> {
    let mut grads = params.zeros_like();
    let feature_grads = accumulate_backward(params, traces, d_probs, &mut grads)?;
    Ok(CellBackward {
        grads,
        feature_grads,
    })
}

/// Same as [`backward_sequence`] but adds into an existing gradient set.
pub fn accumulate_backward<T: Scalar>(
    params: &CellParameters<T>,
    traces: &[StepTrace<T>],
    d_probs: &[Option<Vector<T>>],
    grads: &mut CellGradients<T>,
) -> Result<Vec<Vector<T>>> {
    if traces.len() != d_probs.len() {
        return Err(Error::shape("backward_sequence", traces.len(), d_probs.len()));
    }
    if grads.kind != params.kind || grads.dims != params.dims {
        return Err(Error::Incompatible(format!(
            "gradient set {:?}/{:?} vs parameters {:?}/{:?}",
            grads.kind, grads.dims, params.kind, params.dims
        )));
    }
    let dims = params.dims;
    let h = dims.hidden;
    for tr in traces {
        if tr.state.len() != h || tr.features.len() != dims.features || tr.probs.len() != dims.labels {
            return Err(Error::Incompatible("trace does not match parameters".into()));
        }
    }
    for dp in d_probs.iter().flatten() {
        if dp.len() != dims.labels {
            return Err(Error::shape("backward_sequence upstream", dims.labels, dp.len()));
        }
        Readout::check_finite_grad(dp)?;
    }

    let mut feature_grads = vec![Vector::zeros(dims.features); traces.len()];
    let mut dh_carry = vec![T::zero(); h];
    let mut da = [vec![T::zero(); h], vec![T::zero(); h], vec![T::zero(); h], vec![T::zero(); h]];
    let one = T::one();

    for t in (0..traces.len()).rev() {
        let tr = &traces[t];
        let d_emission = match &d_probs[t] {
            Some(dp) => params
                .readout
                .backward(&tr.emission, &tr.probs, dp, &mut grads.readout),
            None => Vector::zeros(h),
        };
        let mut dh = vec![T::zero(); h];
        for k in 0..h {
            let th = tr.state_tanh[k];
            dh[k] = dh_carry[k] + d_emission[k] * tr.output[k] * (one - th * th);
            let (f, i, o, c) = (tr.forget[k], tr.input[k], tr.output[k], tr.candidate[k]);
            da[0][k] = dh[k] * tr.state_prev[k] * f * (one - f);
            da[1][k] = dh[k] * c * i * (one - i);
            da[2][k] = d_emission[k] * th * o * (one - o);
            da[3][k] = dh[k] * i * (one - c * c);
        }
        for (gi, (gate, ggrad)) in params.gates.iter().zip(grads.gates.iter_mut()).enumerate() {
            let d = &da[gi];
            ggrad.label.add_outer(d, tr.label_in.as_slice());
            ggrad.feature.add_outer(d, tr.features.as_slice());
            for (b, &v) in ggrad.bias.as_mut_slice().iter_mut().zip(d) {
                *b += v;
            }
            if let Some(gd) = &mut ggrad.delta {
                for (w, &v) in gd.as_mut_slice().iter_mut().zip(d) {
                    *w += v * tr.delta;
                }
            }
            gate.feature
                .matvec_t_acc(d, feature_grads[t].as_mut_slice());
        }
        if let Some(td) = &mut grads.time_delta {
            for (w, &v) in td.as_mut_slice().iter_mut().zip(&dh) {
                *w += v * tr.delta;
            }
        }
        for k in 0..h {
            dh_carry[k] = dh[k] * tr.forget[k];
        }
    }
    Ok(feature_grads)
}

pub(crate) fn uniform_matrix<T: Scalar>(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Matrix<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::lit(rng.uniform(-bound, bound)))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

fn uniform_vector<T: Scalar>(len: usize, fan_in: usize, rng: &mut Rng) -> Vector<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Vector::from_vec((0..len).map(|_| T::lit(rng.uniform(-bound, bound))).collect())
}

#[cfg(test)]
mod tests;
