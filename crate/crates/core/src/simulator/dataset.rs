//! JSON-lines dataset files.
//!
//! One record per line:
//!
//! ```text
//! {"schema_version":1,"config_hash":"<16 hex>","id":<u64>,
//!  "steps":[{"delta":0,"labels":[0,0,0,0,0],"pixels":"<base64>"}, ...]}
//! ```
//!
//! `labels` follow the digit order `0 6 8 3 9`. `pixels` is the standard
//! base64 encoding of the 1024 image bytes, one unsigned byte per pixel
//! (value / 255), row-major from the top-left corner; single-byte samples
//! make the byte order moot. A step may carry `"features":[f64; D]` instead
//! of `pixels` when features were precomputed by a frozen encoder.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode, EncoderParameters};
use crate::error::{Error, Result};
use crate::simulator::{DigitState, Image, Observation, SequenceSample, Step, NUM_DIGITS};
use crate::trainer::encoder_input;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config_hash: String,
    pub sequences: Vec<SequenceSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Replaces every image by the features of a frozen encoder.
    pub fn with_features(&self, encoder: &EncoderParameters<f64>) -> Result<Dataset> {
        let mut out = self.clone();
        for seq in &mut out.sequences {
            for step in &mut seq.steps {
                if let Observation::Pixels(img) = &step.observation {
                    let f = encode(encoder, &encoder_input(img))?;
                    step.observation = Observation::Features(f.into_vec());
                }
            }
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    schema_version: u32,
    config_hash: String,
    id: u64,
    steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    delta: u32,
    labels: [u8; NUM_DIGITS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pixels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
}

fn to_record(config_hash: &str, seq: &SequenceSample) -> Record {
    Record {
        schema_version: SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        id: seq.id,
        steps: seq
            .steps
            .iter()
            .map(|s| {
                let (pixels, features) = match &s.observation {
                    Observation::Pixels(img) => (Some(STANDARD.encode(img.bytes())), None),
                    Observation::Features(f) => (None, Some(f.clone())),
                };
                StepRecord {
                    delta: s.delta,
                    labels: s.state.labels(),
                    pixels,
                    features,
                }
            })
            .collect(),
    }
}

fn from_record(rec: Record, line: usize) -> Result<(String, SequenceSample)> {
    let bad = |why: String| Error::format(format!("dataset line {line}"), why);
    if rec.schema_version != SCHEMA_VERSION {
        return Err(bad(format!("schema version {}", rec.schema_version)));
    }
    if rec.steps.is_empty() {
        return Err(bad("sequence has no steps".into()));
    }
    let mut steps = Vec::with_capacity(rec.steps.len());
    for (t, s) in rec.steps.into_iter().enumerate() {
        if (t == 0) != (s.delta == 0) {
            return Err(bad(format!("step {t} has time lapse {}", s.delta)));
        }
        let state = DigitState::from_labels(&s.labels).map_err(|e| bad(e.to_string()))?;
        let observation = match (s.pixels, s.features) {
            (Some(p), None) => {
                let bytes = STANDARD.decode(p).map_err(|e| bad(e.to_string()))?;
                let n = bytes.len();
                Observation::Pixels(
                    Image::from_bytes(bytes).ok_or_else(|| bad(format!("image with {n} bytes")))?,
                )
            }
            (None, Some(f)) => Observation::Features(f),
            _ => return Err(bad(format!("step {t} needs exactly one of pixels/features"))),
        };
        steps.push(Step {
            delta: s.delta,
            state,
            observation,
        });
    }
    Ok((rec.config_hash, SequenceSample { id: rec.id, steps }))
}

pub fn write_dataset_to(mut out: impl Write, dataset: &Dataset) -> std::io::Result<()> {
    for seq in &dataset.sequences {
        serde_json::to_writer(&mut out, &to_record(&dataset.config_hash, seq))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(BufWriter::new(file), dataset).map_err(|e| Error::io(path, e))
}

pub fn read_dataset_from(input: impl Read) -> Result<Dataset> {
    let mut config_hash = None;
    let mut sequences = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::format("dataset", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("dataset line {}", i + 1), e))?;
        let (hash, seq) = from_record(rec, i + 1)?;
        match &config_hash {
            None => config_hash = Some(hash),
            Some(h) if *h != hash => {
                return Err(Error::format(
                    format!("dataset line {}", i + 1),
                    format!("config hash {hash} differs from {h}"),
                ))
            }
            _ => {}
        }
        sequences.push(seq);
    }
    Ok(Dataset {
        config_hash: config_hash.unwrap_or_default(),
        sequences,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(file).map_err(|e| match e {
        Error::Format { what, reason } => Error::Format {
            what: format!("{}: {what}", path.display()),
            reason,
        },
        other => other,
    })
}
