use super::*;

fn dims() -> CellDims {
    CellDims {
        hidden: 4,
        labels: 3,
        features: 5,
    }
}

fn random_vec(n: usize, rng: &mut Rng, scale: f64) -> Vector<f64> {
    Vector::from_vec((0..n).map(|_| rng.uniform(-scale, scale)).collect())
}

/// Parameters with every block (biases and δ weights included) random.
fn random_params(kind: CellKind, dims: CellDims, rng: &mut Rng) -> CellParameters<f64> {
    let mut p = CellParameters::zeros(kind, dims);
    for (_, block) in p.blocks_mut() {
        for v in block.iter_mut() {
            *v = rng.uniform(-0.8, 0.8);
        }
    }
    p
}

fn random_sequence(len: usize, dims: CellDims, rng: &mut Rng) -> CellSequence<f64> {
    CellSequence {
        features: (0..len).map(|_| random_vec(dims.features, rng, 1.0)).collect(),
        labels: (0..len)
            .map(|_| {
                Vector::from_vec(
                    (0..dims.labels)
                        .map(|_| f64::from(rng.bernoulli(0.5) as u8))
                        .collect(),
                )
            })
            .collect(),
        deltas: (0..len)
            .map(|t| if t == 0 { 0.0 } else { rng.uniform_int(1, 10).unwrap() as f64 / 10.0 })
            .collect(),
    }
}

/// Straight-line evaluation written against plain nested vectors.
fn reference_step(
    p: &CellParameters<f64>,
    l: &[f64],
    x: &[f64],
    delta: f64,
    h_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let d = p.dims();
    let pre = |g: Gate| -> Vec<f64> {
        let w = p.gate(g);
        (0..d.hidden)
            .map(|r| {
                let mut s = w.bias[r];
                for c in 0..d.labels {
                    s += w.label.get(r, c) * l[c];
                }
                for c in 0..d.features {
                    s += w.feature.get(r, c) * x[c];
                }
                if let Some(wj) = &w.delta {
                    s += wj[r] * delta;
                }
                s
            })
            .collect()
    };
    let f: Vec<f64> = pre(Gate::Forget).into_iter().map(sig).collect();
    let i: Vec<f64> = pre(Gate::Input).into_iter().map(sig).collect();
    let o: Vec<f64> = pre(Gate::Output).into_iter().map(sig).collect();
    let c: Vec<f64> = pre(Gate::Candidate).into_iter().map(f64::tanh).collect();
    let h: Vec<f64> = (0..d.hidden)
        .map(|k| {
            f[k] * h_prev[k]
                + i[k] * c[k]
                + p.time_delta().map_or(0.0, |w| w[k] * delta)
        })
        .collect();
    let y: Vec<f64> = (0..d.hidden).map(|k| o[k] * h[k].tanh()).collect();
    let r = p.readout();
    let probs = (0..d.labels)
        .map(|j| {
            let mut s = r.bias[j];
            for k in 0..d.hidden {
                s += r.weight.get(j, k) * y[k];
            }
            sig(s)
        })
        .collect();
    (h, probs)
}

#[test]
fn zero_parameters_give_half_gates() {
    let d = dims();
    for kind in CellKind::ALL {
        let p = CellParameters::<f64>::zeros(kind, d);
        let tr = forward_step(
            &p,
            &Vector::zeros(d.labels),
            &Vector::zeros(d.features),
            0.0,
            &Vector::zeros(d.hidden),
        )
        .unwrap();
        for g in [&tr.forget, &tr.input, &tr.output] {
            assert!(g.iter().all(|&v| v == 0.5));
        }
        assert!(tr.candidate.iter().all(|&v| v == 0.0));
        assert!(tr.state.iter().all(|&v| v == 0.0));
        assert!(tr.emission.iter().all(|&v| v == 0.0));
        assert!(tr.probs.iter().all(|&v| v == 0.5));
    }
}

#[test]
fn parameter_presence_follows_kind() {
    let d = dims();
    let names = |k| {
        CellParameters::<f64>::zeros(k, d)
            .blocks()
            .into_iter()
            .map(|(n, _)| n)
            .collect::<Vec<_>>()
    };
    let lstm = names(CellKind::StandardLstm);
    assert!(!lstm.iter().any(|n| n.contains("delta")));
    let v1 = names(CellKind::TlstmV1);
    assert_eq!(v1.iter().filter(|n| n.ends_with(".delta")).count(), 4);
    assert!(!v1.contains(&"time_delta"));
    let v2 = names(CellKind::TlstmV2);
    assert_eq!(v2.iter().filter(|n| n.contains("delta")).collect::<Vec<_>>(), vec![&"time_delta"]);
}

#[test]
fn init_sets_forget_bias_and_bounds() {
    let d = dims();
    let mut rng = Rng::new(3);
    let p = CellParameters::<f64>::init(CellKind::TlstmV1, d, &mut rng);
    p.validate().unwrap();
    assert!(p.gate(Gate::Forget).bias.iter().all(|&b| b == 1.0));
    assert!(p.gate(Gate::Input).bias.iter().all(|&b| b == 0.0));
    let bound = 1.0 / ((d.labels + d.features + 1) as f64).sqrt();
    assert!(p.gate(Gate::Output).feature.as_slice().iter().all(|v| v.abs() <= bound));
}

#[test]
fn forward_step_matches_reference() {
    let d = dims();
    let mut rng = Rng::new(11);
    for kind in CellKind::ALL {
        let p = random_params(kind, d, &mut rng);
        for _ in 0..5 {
            let l = random_vec(d.labels, &mut rng, 1.0);
            let x = random_vec(d.features, &mut rng, 2.0);
            let h_prev = random_vec(d.hidden, &mut rng, 1.5);
            let delta = rng.uniform(0.0, 1.0);
            let tr = forward_step(&p, &l, &x, delta, &h_prev).unwrap();
            let (h, probs) = reference_step(&p, l.as_slice(), x.as_slice(), delta, h_prev.as_slice());
            for (a, b) in tr.state.iter().zip(&h) {
                assert!((a - b).abs() <= 1e-12, "{kind:?} state {a} vs {b}");
            }
            for (a, b) in tr.probs.iter().zip(&probs) {
                assert!((a - b).abs() <= 1e-12, "{kind:?} probs {a} vs {b}");
            }
        }
    }
}

#[test]
fn forward_step_rejects_bad_inputs() {
    let d = dims();
    let p = CellParameters::<f64>::zeros(CellKind::TlstmV1, d);
    let (l, x, h) = (Vector::zeros(d.labels), Vector::zeros(d.features), Vector::zeros(d.hidden));
    assert!(matches!(
        forward_step(&p, &Vector::zeros(2), &x, 0.0, &h),
        Err(Error::Shape { .. })
    ));
    assert!(matches!(
        forward_step(&p, &l, &x, f64::NAN, &h),
        Err(Error::NonFinite(_))
    ));
    let mut bad = x.clone();
    bad[0] = f64::INFINITY;
    assert!(matches!(forward_step(&p, &l, &bad, 0.0, &h), Err(Error::NonFinite(_))));
    assert!(forward_step(&p, &l, &x, -1.0, &h).is_err());
}

#[test]
fn v1_with_zero_deltas_reduces_to_standard_lstm() {
    let d = dims();
    let mut rng = Rng::new(5);
    let v1 = random_params(CellKind::TlstmV1, d, &mut rng);
    let lstm = v1.with_kind(CellKind::StandardLstm);
    let mut seq = random_sequence(7, d, &mut rng);
    seq.deltas.iter_mut().for_each(|v| *v = 0.0);
    let a = forward_sequence(&v1, &seq).unwrap();
    let b = forward_sequence(&lstm, &seq).unwrap();
    for (ta, tb) in a.iter().zip(&b) {
        let bits = |v: &Vector<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ta.state), bits(&tb.state));
        assert_eq!(bits(&ta.emission), bits(&tb.emission));
        assert_eq!(bits(&ta.probs), bits(&tb.probs));
    }
}

#[test]
fn scaling_deltas_equals_scaling_gate_delta_weights() {
    let d = dims();
    let mut rng = Rng::new(8);
    let p = random_params(CellKind::TlstmV1, d, &mut rng);
    let seq = random_sequence(6, d, &mut rng);
    // Powers of two keep the products exact.
    for k in [0.25, 2.0, 8.0] {
        let mut scaled_seq = seq.clone();
        scaled_seq.deltas.iter_mut().for_each(|v| *v *= k);
        let mut scaled_p = p.clone();
        for g in Gate::ALL {
            let w = scaled_p.gate_mut(g).delta.as_mut().unwrap();
            *w = w.scale(k);
        }
        let a = forward_sequence(&p, &scaled_seq).unwrap();
        let b = forward_sequence(&scaled_p, &seq).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            assert_eq!(ta.forget, tb.forget);
            assert_eq!(ta.input, tb.input);
            assert_eq!(ta.output, tb.output);
            assert_eq!(ta.candidate, tb.candidate);
            assert_eq!(ta.probs, tb.probs);
        }
    }
}

#[test]
fn single_step_sequence_is_one_forward_step() {
    let d = dims();
    let mut rng = Rng::new(21);
    let p = random_params(CellKind::TlstmV2, d, &mut rng);
    let mut seq = random_sequence(1, d, &mut rng);
    seq.deltas[0] = 0.7;
    let traces = forward_sequence(&p, &seq).unwrap();
    assert_eq!(traces.len(), 1);
    let direct = forward_step(
        &p,
        &Vector::zeros(d.labels),
        &seq.features[0],
        0.0,
        &Vector::zeros(d.hidden),
    )
    .unwrap();
    assert_eq!(traces[0], direct);
}

#[test]
fn sequence_bookkeeping() {
    let d = dims();
    let mut rng = Rng::new(22);
    let p = random_params(CellKind::TlstmV1, d, &mut rng);
    let seq = random_sequence(9, d, &mut rng);
    let traces = forward_sequence(&p, &seq).unwrap();
    assert_eq!(traces.len(), 9);
    assert_eq!(traces[0].delta, 0.0);
    assert!(traces[0].label_in.iter().all(|&v| v == 0.0));
    for t in 1..9 {
        assert_eq!(traces[t].delta, seq.deltas[t]);
        assert_eq!(traces[t].label_in, seq.labels[t - 1]);
        assert_eq!(traces[t].state_prev, traces[t - 1].state);
    }
    let empty = CellSequence::<f64> {
        features: vec![],
        labels: vec![],
        deltas: vec![],
    };
    assert!(matches!(forward_sequence(&p, &empty), Err(Error::EmptySequence)));
}

#[test]
fn delta_changes_time_modulated_output_only() {
    let d = dims();
    let mut rng = Rng::new(23);
    let v1 = random_params(CellKind::TlstmV1, d, &mut rng);
    let lstm = v1.with_kind(CellKind::StandardLstm);
    let a = random_sequence(5, d, &mut rng);
    let mut b = a.clone();
    for t in 1..5 {
        b.deltas[t] = 1.0 - a.deltas[t] + 0.05;
    }
    let last = |p: &CellParameters<f64>, s: &CellSequence<f64>| {
        forward_sequence(p, s).unwrap().last().unwrap().probs.clone()
    };
    assert_eq!(last(&lstm, &a), last(&lstm, &b));
    assert_ne!(last(&v1, &a), last(&v1, &b));
}

#[test]
fn activations_stay_in_range() {
    let d = dims();
    let mut rng = Rng::new(24);
    for kind in CellKind::ALL {
        let p = random_params(kind, d, &mut rng);
        let seq = random_sequence(20, d, &mut rng);
        for tr in forward_sequence(&p, &seq).unwrap() {
            for g in [&tr.forget, &tr.input, &tr.output] {
                assert!(g.iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(tr.candidate.iter().all(|&v| v > -1.0 && v < 1.0));
            assert!(tr.emission.iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let d = dims();
    let mut rng = Rng::new(31);
    for kind in CellKind::ALL {
        let p = random_params(kind, d, &mut rng);
        let seq = random_sequence(4, d, &mut rng);
        let traces = forward_sequence(&p, &seq).unwrap();
        let upstream = vec![Some(Vector::zeros(d.labels)); 4];
        let back = backward_sequence(&p, &traces, &upstream).unwrap();
        for (name, block) in back.grads.blocks() {
            assert!(block.iter().all(|&v| v == 0.0), "{name}");
        }
        assert!(back.feature_grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }
}

#[test]
fn state_delta_gradient_vanishes_without_elapsed_time() {
    let d = dims();
    let mut rng = Rng::new(32);
    let p = random_params(CellKind::TlstmV2, d, &mut rng);
    let seq = random_sequence(1, d, &mut rng);
    let traces = forward_sequence(&p, &seq).unwrap();
    let upstream = vec![Some(random_vec(d.labels, &mut rng, 1.0))];
    let back = backward_sequence(&p, &traces, &upstream).unwrap();
    assert!(back.grads.time_delta().unwrap().iter().all(|&v| v == 0.0));
    assert!(back.grads.readout().weight.as_slice().iter().any(|&v| v != 0.0));
}

#[test]
fn backward_rejects_mismatched_upstream() {
    let d = dims();
    let mut rng = Rng::new(33);
    let p = random_params(CellKind::StandardLstm, d, &mut rng);
    let traces = forward_sequence(&p, &random_sequence(3, d, &mut rng)).unwrap();
    assert!(backward_sequence(&p, &traces, &[None, None]).is_err());
    let mut nan = Vector::zeros(d.labels);
    nan[0] = f64::NAN;
    assert!(matches!(
        backward_sequence(&p, &traces, &[None, None, Some(nan)]),
        Err(Error::NonFinite(_))
    ));
    let other = random_params(CellKind::TlstmV1, d, &mut rng);
    let mut grads = other.zeros_like();
    assert!(accumulate_backward(&p, &traces, &[None, None, None], &mut grads).is_err());
}

/// Linear functional of the readout probabilities; its gradient with respect
/// to the probabilities is the weight table itself.
fn weighted_loss(traces: &[StepTrace<f64>], weights: &[Option<Vector<f64>>]) -> f64 {
    traces
        .iter()
        .zip(weights)
        .filter_map(|(tr, w)| w.as_ref().map(|w| tr.probs.dot(w).unwrap()))
        .sum()
}

#[test]
fn gradients_match_central_differences() {
    let d = dims();
    let step = 1e-5;
    for kind in CellKind::ALL {
        for trial in 0..3u64 {
            let mut rng = Rng::substream(40, kind.name(), trial);
            let p = random_params(kind, d, &mut rng);
            let len = 2 + trial as usize * 2;
            let seq = random_sequence(len, d, &mut rng);
            let weights: Vec<Option<Vector<f64>>> = (0..len)
                .map(|t| (t + 1 == len || rng.bernoulli(0.5)).then(|| random_vec(d.labels, &mut rng, 1.0)))
                .collect();
            let traces = forward_sequence(&p, &seq).unwrap();
            let back = backward_sequence(&p, &traces, &weights).unwrap();
            let analytic: Vec<(&str, Vec<f64>)> = back
                .grads
                .blocks()
                .into_iter()
                .map(|(n, b)| (n, b.to_vec()))
                .collect();
            let mut probe = p.clone();
            for (bi, (name, grad)) in analytic.iter().enumerate() {
                let mut worst = 0.0f64;
                for j in 0..grad.len() {
                    let orig = probe.blocks()[bi].1[j];
                    probe.blocks_mut()[bi].1[j] = orig + step;
                    let up = weighted_loss(&forward_sequence(&probe, &seq).unwrap(), &weights);
                    probe.blocks_mut()[bi].1[j] = orig - step;
                    let down = weighted_loss(&forward_sequence(&probe, &seq).unwrap(), &weights);
                    probe.blocks_mut()[bi].1[j] = orig;
                    let numeric = (up - down) / (2.0 * step);
                    let rel = (grad[j] - numeric).abs() / grad[j].abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
                assert!(worst < 1e-4, "{kind:?} trial {trial} block {name}: {worst:e}");
            }
            // Feature gradients, used by the encoder.
            for t in 0..len {
                for j in 0..d.features {
                    let mut s = seq.clone();
                    s.features[t][j] += step;
                    let up = weighted_loss(&forward_sequence(&p, &s).unwrap(), &weights);
                    s.features[t][j] -= 2.0 * step;
                    let down = weighted_loss(&forward_sequence(&p, &s).unwrap(), &weights);
                    let numeric = (up - down) / (2.0 * step);
                    let a = back.feature_grads[t][j];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                    assert!(rel < 1e-4, "{kind:?} feature grad t={t} j={j}: {rel:e}");
                }
            }
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let d = dims();
    let mut rng = Rng::new(50);
    let p64 = random_params(CellKind::TlstmV1, d, &mut rng);
    let seq64 = random_sequence(5, d, &mut rng);
    let mut p32 = CellParameters::<f32>::zeros(CellKind::TlstmV1, d);
    for ((_, dst), (_, src)) in p32.blocks_mut().into_iter().zip(p64.blocks()) {
        for (a, &b) in dst.iter_mut().zip(src) {
            *a = b as f32;
        }
    }
    let conv = |v: &Vector<f64>| Vector::from_vec(v.iter().map(|&x| x as f32).collect());
    let seq32 = CellSequence {
        features: seq64.features.iter().map(conv).collect(),
        labels: seq64.labels.iter().map(conv).collect(),
        deltas: seq64.deltas.iter().map(|&x| x as f32).collect(),
    };
    let a = forward_sequence(&p64, &seq64).unwrap();
    let b = forward_sequence(&p32, &seq32).unwrap();
    for (ta, tb) in a.iter().zip(&b) {
        for (x, y) in ta.probs.iter().zip(tb.probs.iter()) {
            assert!((x - f64::from(*y)).abs() < 1e-5);
        }
    }
}
