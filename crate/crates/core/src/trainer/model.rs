//! Encoder plus either a recurrent cell or a single-image readout.

use serde::{Deserialize, Serialize};

use crate::cells::{
    accumulate_backward, forward_sequence, CellDims, CellKind, CellParameters, CellSequence,
    Readout,
};
use crate::encoder::{encode_backward, encode_with_cache, EncoderCache, EncoderDims, EncoderParameters};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::Rng;
use crate::simulator::{Image, Observation, SequenceSample, IMAGE_PIXELS, NUM_DIGITS};
use crate::trainer::loss::bce_loss;

/// Subtracted from every pixel before it enters the encoder, so that a
/// mid-grey background maps to zero.
pub const PIXEL_CENTER: f64 = 0.5;

/// Pixel values shifted by [`PIXEL_CENTER`], in row-major order.
pub fn encoder_input(image: &Image) -> Vec<f64> {
    image.values().into_iter().map(|v| v - PIXEL_CENTER).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Encoder and readout on the current image only.
    Baseline,
    Lstm,
    TlstmV1,
    TlstmV2,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Baseline,
        ModelKind::Lstm,
        ModelKind::TlstmV1,
        ModelKind::TlstmV2,
    ];

    pub fn cell_kind(self) -> Option<CellKind> {
        match self {
            ModelKind::Baseline => None,
            ModelKind::Lstm => Some(CellKind::StandardLstm),
            ModelKind::TlstmV1 => Some(CellKind::TlstmV1),
            ModelKind::TlstmV2 => Some(CellKind::TlstmV2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Lstm => "lstm",
            ModelKind::TlstmV1 => "tlstmv1",
            ModelKind::TlstmV2 => "tlstmv2",
        }
    }

    /// Display name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Baseline => "Baseline",
            ModelKind::Lstm => "LSTM",
            ModelKind::TlstmV1 => "tLSTMv1",
            ModelKind::TlstmV2 => "tLSTMv2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        ModelKind::ALL.get(code as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub labels: usize,
    pub hidden: usize,
    pub features: usize,
    pub encoder_hidden: usize,
    pub input: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            labels: NUM_DIGITS,
            hidden: 64,
            features: 64,
            encoder_hidden: 128,
            input: IMAGE_PIXELS,
        }
    }
}

impl ModelDims {
    pub fn encoder(&self) -> EncoderDims {
        EncoderDims {
            input: self.input,
            hidden: self.encoder_hidden,
            output: self.features,
        }
    }

    pub fn cell(&self) -> CellDims {
        CellDims {
            hidden: self.hidden,
            labels: self.labels,
            features: self.features,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Supervision {
    FinalStep,
    AllSteps,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Recurrent(CellParameters<f64>),
    SingleImage(Readout<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    kind: ModelKind,
    dims: ModelDims,
    /// Raw time lapses are divided by this before entering the cell.
    delta_divisor: f64,
    pub encoder: EncoderParameters<f64>,
    pub head: Head,
}

impl Model {
    pub fn zeros(kind: ModelKind, dims: ModelDims, delta_divisor: f64) -> Self {
        let head = match kind.cell_kind() {
            Some(ck) => Head::Recurrent(CellParameters::zeros(ck, dims.cell())),
            None => Head::SingleImage(Readout::zeros(dims.labels, dims.features)),
        };
        Model {
            kind,
            dims,
            delta_divisor,
            encoder: EncoderParameters::zeros(dims.encoder()),
            head,
        }
    }

    pub fn init(kind: ModelKind, dims: ModelDims, delta_divisor: f64, rng: &mut Rng) -> Self {
        let encoder = EncoderParameters::init(dims.encoder(), rng);
        let head = match kind.cell_kind() {
            Some(ck) => Head::Recurrent(CellParameters::init(ck, dims.cell(), rng)),
            None => Head::SingleImage(Readout::init(dims.labels, dims.features, rng)),
        };
        Model {
            kind,
            dims,
            delta_divisor,
            encoder,
            head,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn delta_divisor(&self) -> f64 {
        self.delta_divisor
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.dims, self.delta_divisor)
    }

    /// Encoder blocks followed by head blocks.
    pub fn blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut out = self.encoder.blocks();
        match &self.head {
            Head::Recurrent(c) => out.extend(c.blocks()),
            Head::SingleImage(r) => {
                out.push(("readout.weight", r.weight.as_slice()));
                out.push(("readout.bias", r.bias.as_slice()));
            }
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.encoder.blocks_mut();
        match &mut self.head {
            Head::Recurrent(c) => out.extend(c.blocks_mut()),
            Head::SingleImage(r) => {
                out.push(("readout.weight", r.weight.as_mut_slice()));
                out.push(("readout.bias", r.bias.as_mut_slice()));
            }
        }
        out
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks().iter().map(|(_, b)| b.len()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.block_sizes().iter().sum()
    }

    /// Checks that a sample's observations fit this model.
    pub fn check_sample(&self, sample: &SequenceSample) -> Result<()> {
        if sample.is_empty() {
            return Err(Error::EmptySequence);
        }
        for (t, step) in sample.steps.iter().enumerate() {
            let ok = match &step.observation {
                Observation::Pixels(_) => self.dims.input == IMAGE_PIXELS,
                Observation::Features(f) => f.len() == self.dims.features,
            };
            if !ok {
                return Err(Error::Incompatible(format!(
                    "sequence {} step {t}: observation does not fit model with input {} and feature dim {}",
                    sample.id, self.dims.input, self.dims.features
                )));
            }
        }
        if self.dims.labels != NUM_DIGITS {
            return Err(Error::Incompatible(format!(
                "model has {} labels, data has {NUM_DIGITS}",
                self.dims.labels
            )));
        }
        Ok(())
    }

    fn scaled_delta(&self, delta: u32) -> f64 {
        f64::from(delta) / self.delta_divisor
    }

    /// Label probabilities for the last step of the sequence.
    pub fn predict(&self, sample: &SequenceSample) -> Result<Vec<f64>> {
        self.check_sample(sample)?;
        match &self.head {
            Head::SingleImage(readout) => {
                let last = sample.steps.last().expect("checked non-empty");
                let (features, _) = self.features(&last.observation)?;
                Ok(readout.forward(&features)?.into_vec())
            }
            Head::Recurrent(cell) => {
                let seq = self.cell_sequence(sample)?.0;
                let traces = forward_sequence(cell, &seq)?;
                Ok(traces.last().expect("non-empty").probs.clone().into_vec())
            }
        }
    }

    pub fn loss(&self, sample: &SequenceSample, supervision: Supervision) -> Result<f64> {
        let mut scratch = self.zeros_like();
        self.loss_and_grad_impl(sample, supervision, &mut scratch, None)
    }

    /// Loss of one sample; adds `scale · ∂loss/∂θ` into `grads`.
    pub fn accumulate_grad(
        &self,
        sample: &SequenceSample,
        supervision: Supervision,
        scale: f64,
        grads: &mut Model,
    ) -> Result<f64> {
        if grads.kind != self.kind || grads.dims != self.dims {
            return Err(Error::Incompatible("gradient container does not match model".into()));
        }
        self.loss_and_grad_impl(sample, supervision, grads, Some(scale))
    }

    fn features(&self, obs: &Observation) -> Result<(Vector<f64>, Option<(Vec<f64>, EncoderCache<f64>)>)> {
        match obs {
            Observation::Pixels(img) => {
                let pixels = encoder_input(img);
                let (f, cache) = encode_with_cache(&self.encoder, &pixels)?;
                Ok((f, Some((pixels, cache))))
            }
            Observation::Features(f) => Ok((Vector::from_vec(f.clone()), None)),
        }
    }

    #[allow(clippy::type_complexity)]
    fn cell_sequence(
        &self,
        sample: &SequenceSample,
    ) -> Result<(CellSequence<f64>, Vec<Option<(Vec<f64>, EncoderCache<f64>)>>)> {
        let mut features = Vec::with_capacity(sample.len());
        let mut caches = Vec::with_capacity(sample.len());
        for step in &sample.steps {
            let (f, c) = self.features(&step.observation)?;
            features.push(f);
            caches.push(c);
        }
        let seq = CellSequence {
            features,
            labels: sample
                .steps
                .iter()
                .map(|s| Vector::from_vec(s.state.labels().map(f64::from).to_vec()))
                .collect(),
            deltas: sample
                .steps
                .iter()
                .enumerate()
                .map(|(t, s)| if t == 0 { 0.0 } else { self.scaled_delta(s.delta) })
                .collect(),
        };
        Ok((seq, caches))
    }

    fn loss_and_grad_impl(
        &self,
        sample: &SequenceSample,
        supervision: Supervision,
        grads: &mut Model,
        grad_scale: Option<f64>,
    ) -> Result<f64> {
        self.check_sample(sample)?;
        let n = sample.len();
        let supervised: Vec<usize> = match supervision {
            Supervision::FinalStep => vec![n - 1],
            Supervision::AllSteps => (0..n).collect(),
        };
        let weight = 1.0 / supervised.len() as f64;
        let targets = |t: usize| sample.steps[t].state.labels().map(f64::from);
        match &self.head {
            Head::SingleImage(readout) => {
                let Head::SingleImage(rgrad) = &mut grads.head else {
                    unreachable!("gradient head matches model kind")
                };
                let mut total = 0.0;
                for &t in &supervised {
                    let (features, cache) = self.features(&sample.steps[t].observation)?;
                    let probs = readout.forward(&features)?;
                    let (loss, d_probs) = bce_loss(&probs, &targets(t))?;
                    total += weight * loss;
                    if let Some(scale) = grad_scale {
                        let d_probs = d_probs.scale(weight * scale);
                        let d_feat = readout.backward(&features, &probs, &d_probs, rgrad);
                        if let Some((pixels, cache)) = cache {
                            encode_backward(&self.encoder, &cache, &pixels, &d_feat, &mut grads.encoder)?;
                        }
                    }
                }
                Ok(total)
            }
            Head::Recurrent(cell) => {
                let (seq, caches) = self.cell_sequence(sample)?;
                let traces = forward_sequence(cell, &seq)?;
                let mut total = 0.0;
                let mut upstream = vec![None; n];
                for &t in &supervised {
                    let (loss, d_probs) = bce_loss(&traces[t].probs, &targets(t))?;
                    total += weight * loss;
                    upstream[t] = grad_scale.map(|scale| d_probs.scale(weight * scale));
                }
                if grad_scale.is_some() {
                    let Head::Recurrent(cgrad) = &mut grads.head else {
                        unreachable!("gradient head matches model kind")
                    };
                    let d_feats = accumulate_backward(cell, &traces, &upstream, cgrad)?;
                    for (cache, d) in caches.iter().zip(&d_feats) {
                        if let Some((pixels, cache)) = cache {
                            encode_backward(&self.encoder, cache, pixels, d, &mut grads.encoder)?;
                        }
                    }
                }
                Ok(total)
            }
        }
    }
}
