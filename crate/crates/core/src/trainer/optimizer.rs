use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators, one per parameter block, plus the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, block_sizes: &[usize]) -> Self {
        let moments = || match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam { .. } => block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        };
        OptimizerState {
            kind,
            step: 0,
            first: moments(),
            second: moments(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every block. All gradients are checked for finiteness
    /// before any parameter changes.
    pub fn apply(
        &mut self,
        params: Vec<(&'static str, &mut [f64])>,
        grads: Vec<(&'static str, &[f64])>,
        learning_rate: f64,
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("optimizer blocks", params.len(), grads.len()));
        }
        for ((pn, p), (gn, g)) in params.iter().zip(&grads) {
            if pn != gn || p.len() != g.len() {
                return Err(Error::shape(
                    "optimizer block",
                    format!("{pn}[{}]", p.len()),
                    format!("{gn}[{}]", g.len()),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient block {gn}")));
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for ((_, p), (_, g)) in params.into_iter().zip(grads) {
                    for (w, &d) in p.iter_mut().zip(g) {
                        *w -= learning_rate * d;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if self.first.len() != params.len() {
                    return Err(Error::shape("optimizer state", self.first.len(), params.len()));
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (bi, ((_, p), (_, g))) in params.into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.first[bi], &mut self.second[bi]);
                    if m.len() != p.len() {
                        return Err(Error::shape("optimizer state block", m.len(), p.len()));
                    }
                    for k in 0..p.len() {
                        let d = g[k];
                        m[k] = beta1 * m[k] + (1.0 - beta1) * d;
                        v[k] = beta2 * v[k] + (1.0 - beta2) * d * d;
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        p[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
