//! Event-driven synthetic image sequences.
//!
//! A sequence starts from an empty image. At every later step a time lapse
//! δ ∈ [1, 10] is drawn, the transition table decides which digits may be
//! present next given the current digits and δ, each permitted digit is
//! kept with its own fixed probability, and the resulting digit set is
//! rendered on a noisy grey background.

mod dataset;
mod image;
mod table;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use dataset::{
    read_dataset, read_dataset_from, write_dataset, write_dataset_to, Dataset, SCHEMA_VERSION,
};
pub use image::{
    glyph_ink_count, glyph_pixel, quantize, render_image, render_with_placements, Image,
    Placement, RenderConfig, GLYPH_SIDE, IMAGE_PIXELS, IMAGE_SIDE,
};
pub use table::{AllowedSet, TransitionTable, MAX_DELTA, MIN_DELTA, NULL};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const NUM_DIGITS: usize = 5;

/// Digit values in label order. Label vector position `k` refers to
/// `DIGITS[k]`.
pub const DIGITS: [u8; NUM_DIGITS] = [0, 6, 8, 3, 9];

pub fn digit_index(digit: u8) -> Option<usize> {
    DIGITS.iter().position(|&d| d == digit)
}

/// Set of digits present in one image, as a bit mask over label indices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DigitState(u8);

impl DigitState {
    pub fn empty() -> Self {
        DigitState(0)
    }

    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        let mut s = DigitState::empty();
        for &d in digits {
            let i = digit_index(d)
                .ok_or_else(|| Error::Config(format!("digit {d} is not one of {DIGITS:?}")))?;
            s.insert_index(i);
        }
        Ok(s)
    }

    pub fn from_labels(labels: &[u8]) -> Result<Self> {
        if labels.len() != NUM_DIGITS || labels.iter().any(|&v| v > 1) {
            return Err(Error::format("label vector", format!("{labels:?}")));
        }
        let mut s = DigitState::empty();
        for (i, &v) in labels.iter().enumerate() {
            if v == 1 {
                s.insert_index(i);
            }
        }
        Ok(s)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains_index(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn contains(self, digit: u8) -> bool {
        digit_index(digit).is_some_and(|i| self.contains_index(i))
    }

    pub fn insert_index(&mut self, i: usize) {
        debug_assert!(i < NUM_DIGITS);
        self.0 |= 1 << i;
    }

    pub fn is_subset_of(self, other: DigitState) -> bool {
        self.0 & !other.0 == 0
    }

    /// Label indices present, ascending.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        (0..NUM_DIGITS).filter(move |&i| self.contains_index(i))
    }

    pub fn digits(self) -> Vec<u8> {
        self.indices().map(|i| DIGITS[i]).collect()
    }

    pub fn labels(self) -> [u8; NUM_DIGITS] {
        std::array::from_fn(|i| u8::from(self.contains_index(i)))
    }
}

impl fmt::Display for DigitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "null");
        }
        let parts: Vec<String> = self.digits().iter().map(u8::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Samples the next digit state.
///
/// Every permitted digit is kept independently with its probability (draws
/// in label order). When nothing is kept, "no digit" was not permitted and
/// at least one digit was, the permitted digit with the highest probability
/// is forced in; ties go to the lowest digit value.
pub fn step_state(
    table: &TransitionTable,
    state: DigitState,
    delta: i64,
    probs: &[f64; NUM_DIGITS],
    rng: &mut Rng,
) -> Result<DigitState> {
    let allowed = table.allowed_digits(state, delta)?;
    Ok(sample_allowed(allowed, probs, rng))
}

pub fn sample_allowed(allowed: AllowedSet, probs: &[f64; NUM_DIGITS], rng: &mut Rng) -> DigitState {
    let mut next = DigitState::empty();
    for i in allowed.digits.indices() {
        if rng.bernoulli(probs[i]) {
            next.insert_index(i);
        }
    }
    if next.is_empty() && !allowed.null && !allowed.digits.is_empty() {
        let forced = allowed
            .digits
            .indices()
            .max_by(|&a, &b| {
                probs[a]
                    .total_cmp(&probs[b])
                    .then_with(|| DIGITS[b].cmp(&DIGITS[a]))
            })
            .expect("non-empty");
        next.insert_index(forced);
    }
    next
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    /// Per-digit keep probabilities, label order `0 6 8 3 9`.
    pub probs: [f64; NUM_DIGITS],
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
    pub render: RenderConfig,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            probs: [0.25, 0.6, 0.5, 0.7, 0.6],
            min_len: 10,
            max_len: 100,
            mean_len: 20.0,
            render: RenderConfig::default(),
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!("digit probabilities {:?} outside [0, 1]", self.probs)));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "sequence length range [{}, {}]",
                self.min_len, self.max_len
            )));
        }
        if !(self.mean_len > self.min_len as f64) && self.min_len != self.max_len {
            return Err(Error::Config(format!(
                "mean length {} must exceed the minimum {}",
                self.mean_len, self.min_len
            )));
        }
        let r = &self.render;
        for (name, v) in [("background", r.background), ("ink", r.ink)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} level {v} outside [0, 1]")));
            }
        }
        if !(r.noise_sigma >= 0.0 && r.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma {}", r.noise_sigma)));
        }
        Ok(())
    }

    /// Canonical `key=value` listing, used for hashing.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (d, p) in DIGITS.iter().zip(self.probs) {
            out.push_str(&format!("prob_{d}={p:?}\n"));
        }
        out.push_str(&format!("min_len={}\n", self.min_len));
        out.push_str(&format!("max_len={}\n", self.max_len));
        out.push_str(&format!("mean_len={:?}\n", self.mean_len));
        out.push_str(&format!("background={:?}\n", self.render.background));
        out.push_str(&format!("ink={:?}\n", self.render.ink));
        out.push_str(&format!("noise_sigma={:?}\n", self.render.noise_sigma));
        out
    }

    pub fn hash(&self) -> String {
        short_hash(&self.canonical())
    }

    /// Sequence length: `min_len` plus a geometric count of extra steps with
    /// mean `mean_len - min_len`, redrawn while it exceeds `max_len`.
    pub fn sample_length(&self, rng: &mut Rng) -> usize {
        let extra_mean = self.mean_len - self.min_len as f64;
        if extra_mean <= 0.0 || self.min_len == self.max_len {
            return self.min_len;
        }
        // Failures before the first success with success probability p.
        let p = 1.0 / (1.0 + extra_mean);
        let log_q = (1.0 - p).ln();
        loop {
            let u = 1.0 - rng.unit();
            let extra = (u.ln() / log_q).floor();
            let len = self.min_len as f64 + extra;
            if len <= self.max_len as f64 {
                return len as usize;
            }
        }
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// What the model sees at one step.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    Pixels(Image),
    /// Precomputed features from a frozen encoder.
    Features(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    /// Time since the previous step; 0 for the first step.
    pub delta: u32,
    pub state: DigitState,
    pub observation: Observation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub id: u64,
    pub steps: Vec<Step>,
}

impl SequenceSample {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_labels(&self) -> [u8; NUM_DIGITS] {
        self.steps.last().map_or([0; NUM_DIGITS], |s| s.state.labels())
    }
}

/// Dataset split. Each split has its own random namespace and id range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn id_base(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1 << 40,
        }
    }
}

/// Generates one sequence from its own random stream.
pub fn generate_sequence(
    table: &TransitionTable,
    config: &SimulatorConfig,
    id: u64,
    rng: &mut Rng,
) -> SequenceSample {
    let len = config.sample_length(rng);
    let mut steps = Vec::with_capacity(len);
    let mut state = DigitState::empty();
    for t in 0..len {
        let delta = if t == 0 {
            0
        } else {
            let d = rng.uniform_int(MIN_DELTA, MAX_DELTA).expect("valid range");
            state = step_state(table, state, d, &config.probs, rng).expect("delta in range");
            d as u32
        };
        let image = render_image(state, &config.render, rng);
        steps.push(Step {
            delta,
            state,
            observation: Observation::Pixels(image),
        });
    }
    SequenceSample { id, steps }
}

/// `n` sequences of one split; sequence `k` uses substream `k`, so the
/// result does not depend on generation order.
pub fn generate_split(config: &SimulatorConfig, seed: u64, split: Split, n: usize) -> Result<Dataset> {
    config.validate()?;
    let table = TransitionTable::standard();
    let label = format!("simulate/{}", split.name());
    let sequences = (0..n as u64)
        .map(|k| {
            let mut rng = Rng::substream(seed, &label, k);
            generate_sequence(&table, config, split.id_base() + k, &mut rng)
        })
        .collect();
    Ok(Dataset {
        config_hash: config.hash(),
        sequences,
    })
}

#[cfg(test)]
mod tests;
