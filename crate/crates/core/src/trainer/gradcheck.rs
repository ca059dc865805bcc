//! Central-difference check of the analytic gradients of whole models.

use serde::Serialize;

use crate::error::Result;
use crate::rng::Rng;
use crate::simulator::{generate_sequence, SequenceSample, SimulatorConfig, TransitionTable};
use crate::trainer::model::{Model, ModelDims, ModelKind, Supervision};

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub dims: ModelDims,
    pub sequences: usize,
    pub max_len: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Entries checked per block; larger blocks are sampled at even strides.
    pub max_entries_per_block: usize,
    pub simulator: SimulatorConfig,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            dims: ModelDims {
                hidden: 6,
                features: 5,
                encoder_hidden: 7,
                ..ModelDims::default()
            },
            sequences: 3,
            max_len: 6,
            step: 1e-5,
            tolerance: 1e-4,
            max_entries_per_block: 400,
            simulator: SimulatorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub model: &'static str,
    pub block: &'static str,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance)
    }

    pub fn worst(&self) -> Option<&GradcheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn blocks_of(&self, model: ModelKind) -> Vec<&'static str> {
        self.entries
            .iter()
            .filter(|e| e.model == model.name())
            .map(|e| e.block)
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let status = if e.max_rel_error < self.tolerance { "ok" } else { "FAIL" };
            out.push_str(&format!(
                "{:<9} {:<16} n={:<5} max_rel={:.3e} {status}\n",
                e.model, e.block, e.entries, e.max_rel_error
            ));
        }
        out
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Short random sequences (length 2..=`max_len`) cut from simulated ones.
pub fn short_sequences(config: &GradcheckConfig, seed: u64) -> Vec<SequenceSample> {
    let table = TransitionTable::standard();
    (0..config.sequences as u64)
        .map(|k| {
            let mut rng = Rng::substream(seed, "gradcheck/data", k);
            let mut s = generate_sequence(&table, &config.simulator, k, &mut rng);
            let len = rng.uniform_int(2, config.max_len.max(2) as i64).expect("valid range") as usize;
            s.steps.truncate(len);
            s
        })
        .collect()
}

fn total_loss(model: &Model, seqs: &[SequenceSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in seqs {
        total += model.loss(s, Supervision::AllSteps)?;
    }
    Ok(total)
}

/// Checks every model kind: the three recurrent cells with their encoders and
/// readouts, and the single-image baseline. Every step is supervised so that
/// every block receives a gradient.
pub fn gradcheck(config: &GradcheckConfig, seed: u64) -> Result<GradcheckReport> {
    let seqs = short_sequences(config, seed);
    let mut entries = Vec::new();
    for kind in ModelKind::ALL {
        let mut rng = Rng::substream(seed, "gradcheck/init", kind.code() as u64);
        let mut model = Model::init(kind, config.dims, 10.0, &mut rng);
        perturb_biases(&mut model, &mut rng);
        let mut grads = model.zeros_like();
        for s in &seqs {
            model.accumulate_grad(s, Supervision::AllSteps, 1.0, &mut grads)?;
        }
        let analytic: Vec<(&'static str, Vec<f64>)> =
            grads.blocks().into_iter().map(|(n, g)| (n, g.to_vec())).collect();
        for (b, (name, g)) in analytic.iter().enumerate() {
            let n = g.len();
            let stride = n.div_ceil(config.max_entries_per_block.max(1)).max(1);
            let mut worst: f64 = 0.0;
            let mut checked = 0;
            for i in (0..n).step_by(stride) {
                let orig = model.blocks()[b].1[i];
                model.blocks_mut()[b].1[i] = orig + config.step;
                let plus = total_loss(&model, &seqs)?;
                model.blocks_mut()[b].1[i] = orig - config.step;
                let minus = total_loss(&model, &seqs)?;
                model.blocks_mut()[b].1[i] = orig;
                let numeric = (plus - minus) / (2.0 * config.step);
                worst = worst.max(relative_error(g[i], numeric));
                checked += 1;
            }
            entries.push(GradcheckEntry {
                model: kind.name(),
                block: name,
                entries: checked,
                max_rel_error: worst,
            });
        }
    }
    Ok(GradcheckReport {
        tolerance: config.tolerance,
        entries,
    })
}

/// Biases start at fixed values; nudging them keeps the check away from
/// symmetric points.
fn perturb_biases(model: &mut Model, rng: &mut Rng) {
    for (name, block) in model.blocks_mut() {
        if name.ends_with("bias") || name.ends_with("b1") || name.ends_with("b2") {
            for v in block.iter_mut() {
                *v += rng.uniform(-0.3, 0.3);
            }
        }
    }
}
