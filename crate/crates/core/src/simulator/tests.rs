use super::*;

#[test]
fn digit_state_roundtrips_labels() {
    let s = DigitState::from_digits(&[9, 0, 3]).unwrap();
    assert_eq!(s.labels(), [1, 0, 0, 1, 1]);
    assert_eq!(DigitState::from_labels(&s.labels()).unwrap(), s);
    assert_eq!(s.digits(), vec![0, 3, 9]);
    assert_eq!(s.to_string(), "{0,3,9}");
    assert_eq!(DigitState::empty().to_string(), "null");
    assert!(DigitState::from_digits(&[5]).is_err());
    assert!(DigitState::from_labels(&[0, 2, 0, 0, 0]).is_err());
}

#[test]
fn certain_digit_is_kept() {
    let allowed = AllowedSet {
        digits: DigitState::from_digits(&[9]).unwrap(),
        null: true,
    };
    let mut probs = [0.0; NUM_DIGITS];
    probs[4] = 1.0;
    let mut rng = Rng::new(1);
    for _ in 0..50 {
        assert_eq!(sample_allowed(allowed, &probs, &mut rng), allowed.digits);
    }
}

#[test]
fn nothing_allowed_gives_empty_state() {
    let mut rng = Rng::new(2);
    for null in [false, true] {
        let allowed = AllowedSet {
            digits: DigitState::empty(),
            null,
        };
        assert!(sample_allowed(allowed, &[0.9; 5], &mut rng).is_empty());
    }
}

#[test]
fn forced_digit_prefers_probability_then_lowest_value() {
    let mut rng = Rng::new(3);
    let allowed = AllowedSet {
        digits: DigitState::from_digits(&[6, 9, 8]).unwrap(),
        null: false,
    };
    // Nothing is ever kept, so the forcing rule decides.
    let zero = [0.0; 5];
    // Ties between 6, 8 and 9 at probability 0 go to the lowest value, 6.
    assert_eq!(sample_allowed(allowed, &zero, &mut rng).digits(), vec![6]);
    let mut probs = [0.0, 0.3, 0.2, 0.0, 0.3];
    // Keep probabilities are tiny in effect: use a stream that rejects.
    probs.iter_mut().for_each(|p| *p *= 1e-12);
    let s = sample_allowed(allowed, &probs, &mut rng);
    assert_eq!(s.digits(), vec![6]);
    let probs = [0.0, 1e-12, 1e-12, 0.0, 2e-12];
    assert_eq!(sample_allowed(allowed, &probs, &mut rng).digits(), vec![9]);
}

#[test]
fn inclusion_frequencies_match_probabilities() {
    let table = TransitionTable::standard();
    let cfg = SimulatorConfig::default();
    // Row 3 permits "no digit" at every δ, so no forcing happens; at δ=6 it
    // permits 8 and 3.
    let state = DigitState::from_digits(&[3]).unwrap();
    let allowed = table.allowed_digits(state, 6).unwrap();
    assert!(allowed.null);
    let mut rng = Rng::new(4);
    let n = 10_000;
    let mut counts = [0usize; NUM_DIGITS];
    for _ in 0..n {
        let next = step_state(&table, state, 6, &cfg.probs, &mut rng).unwrap();
        assert!(next.is_subset_of(allowed.digits));
        for i in next.indices() {
            counts[i] += 1;
        }
    }
    for i in allowed.digits.indices() {
        let freq = counts[i] as f64 / n as f64;
        assert!((freq - cfg.probs[i]).abs() <= 0.02, "digit {} freq {freq}", DIGITS[i]);
    }
}

#[test]
fn length_distribution() {
    let cfg = SimulatorConfig::default();
    let mut rng = Rng::new(5);
    let lens: Vec<usize> = (0..2000).map(|_| cfg.sample_length(&mut rng)).collect();
    assert!(lens.iter().all(|&l| (10..=100).contains(&l)));
    let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    assert!((17.0..=23.0).contains(&mean), "mean {mean}");
}

#[test]
fn sequences_start_empty_and_follow_the_table() {
    let table = TransitionTable::standard();
    let cfg = SimulatorConfig::default();
    let ds = generate_split(&cfg, 9, Split::Train, 200).unwrap();
    for seq in &ds.sequences {
        assert_eq!(seq.steps[0].delta, 0);
        assert!(seq.steps[0].state.is_empty());
        for w in seq.steps.windows(2) {
            let allowed = table.allowed_digits(w[0].state, i64::from(w[1].delta)).unwrap();
            assert!(w[1].state.is_subset_of(allowed.digits));
            assert!(!w[1].state.is_empty() || allowed.null || allowed.digits.is_empty());
        }
    }
}

#[test]
fn labels_match_rendered_glyphs_without_noise() {
    let mut cfg = SimulatorConfig::default();
    cfg.render.noise_sigma = 0.0;
    let table = TransitionTable::standard();
    let mut rng = Rng::new(6);
    let seq = generate_sequence(&table, &cfg, 0, &mut rng);
    // Replay the stream: the image must be exactly the glyphs of the labels.
    let mut replay = Rng::new(6);
    let _ = cfg.sample_length(&mut replay);
    let mut state = DigitState::empty();
    for (t, step) in seq.steps.iter().enumerate() {
        if t > 0 {
            let d = replay.uniform_int(1, 10).unwrap();
            assert_eq!(d as u32, step.delta);
            state = step_state(&table, state, d, &cfg.probs, &mut replay).unwrap();
        }
        assert_eq!(state, step.state);
        let (img, placements) = render_with_placements(state, &cfg.render, &mut replay);
        assert_eq!(Observation::Pixels(img), step.observation);
        let drawn: Vec<usize> = placements.iter().map(|p| p.index).collect();
        assert_eq!(drawn, step.state.indices().collect::<Vec<_>>());
    }
}

#[test]
fn generation_is_reproducible_and_order_free() {
    let cfg = SimulatorConfig::default();
    let a = generate_split(&cfg, 17, Split::Test, 12).unwrap();
    let b = generate_split(&cfg, 17, Split::Test, 12).unwrap();
    assert_eq!(a, b);
    let table = TransitionTable::standard();
    let single = generate_sequence(
        &table,
        &cfg,
        Split::Test.id_base() + 7,
        &mut Rng::substream(17, "simulate/test", 7),
    );
    assert_eq!(single, a.sequences[7]);
    let train = generate_split(&cfg, 17, Split::Train, 12).unwrap();
    assert!(train
        .sequences
        .iter()
        .all(|s| a.sequences.iter().all(|t| t.id != s.id)));
}

#[test]
fn dataset_file_roundtrip_and_bytes() {
    let cfg = SimulatorConfig::default();
    let ds = generate_split(&cfg, 3, Split::Train, 5).unwrap();
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, &ds).unwrap();
    let back = read_dataset_from(buf.as_slice()).unwrap();
    assert_eq!(back, ds);
    let mut again = Vec::new();
    write_dataset_to(&mut again, &back).unwrap();
    assert_eq!(buf, again);
    let first: serde_json::Value =
        serde_json::from_slice(buf.split(|&b| b == b'\n').next().unwrap()).unwrap();
    assert_eq!(first["schema_version"], 1);
    assert_eq!(first["config_hash"], cfg.hash());
    assert_eq!(first["steps"][0]["delta"], 0);
}

#[test]
fn feature_datasets_roundtrip() {
    use crate::encoder::{EncoderDims, EncoderParameters};
    let cfg = SimulatorConfig::default();
    let ds = generate_split(&cfg, 3, Split::Train, 2).unwrap();
    let dims = EncoderDims {
        input: IMAGE_PIXELS,
        hidden: 4,
        output: 3,
    };
    let enc = EncoderParameters::init(dims, &mut Rng::new(1));
    let feats = ds.with_features(&enc).unwrap();
    assert!(feats.sequences[0]
        .steps
        .iter()
        .all(|s| matches!(&s.observation, Observation::Features(f) if f.len() == 3)));
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, &feats).unwrap();
    assert_eq!(read_dataset_from(buf.as_slice()).unwrap(), feats);
}

#[test]
fn malformed_records_are_rejected() {
    let bad = [
        r#"{"schema_version":2,"config_hash":"x","id":0,"steps":[{"delta":0,"labels":[0,0,0,0,0],"features":[]}]}"#,
        r#"{"schema_version":1,"config_hash":"x","id":0,"steps":[]}"#,
        r#"{"schema_version":1,"config_hash":"x","id":0,"steps":[{"delta":3,"labels":[0,0,0,0,0],"features":[]}]}"#,
        r#"{"schema_version":1,"config_hash":"x","id":0,"steps":[{"delta":0,"labels":[0,0,0,0,0],"pixels":"AAAA"}]}"#,
        r#"{"schema_version":1,"config_hash":"x","id":0,"steps":[{"delta":0,"labels":[0,0,0,0,0]}]}"#,
        "not json",
    ];
    for line in bad {
        assert!(read_dataset_from(line.as_bytes()).is_err(), "{line}");
    }
}

#[test]
fn missing_file_reports_path() {
    let err = read_dataset(std::path::Path::new("/nonexistent/data.jsonl")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/data.jsonl"));
}

#[test]
fn allowed_set_admits() {
    let table = TransitionTable::standard();
    let from_zero = table.allowed_digits(DigitState::from_digits(&[0]).unwrap(), 7).unwrap();
    assert!(from_zero.admits(DigitState::from_digits(&[0, 3]).unwrap()));
    assert!(!from_zero.admits(DigitState::from_digits(&[6]).unwrap()));
    assert!(!from_zero.admits(DigitState::empty()));
    let nothing = AllowedSet::default();
    assert!(nothing.admits(DigitState::empty()));
}

#[test]
fn digit_prevalence_pattern() {
    let cfg = SimulatorConfig::default();
    let table = TransitionTable::standard();
    let ds = generate_split(&cfg, 21, Split::Train, 2000).unwrap();
    let mut present = [0usize; NUM_DIGITS];
    let mut steps = 0;
    // Per digit: times it was allowed with nothing forced, and times drawn.
    let mut offered = [(0usize, 0usize); NUM_DIGITS];
    for s in &ds.sequences {
        for st in &s.steps {
            steps += 1;
            for i in st.state.indices() {
                present[i] += 1;
            }
        }
        for w in s.steps.windows(2) {
            let allowed = table.allowed_digits(w[0].state, i64::from(w[1].delta)).unwrap();
            if !allowed.null {
                continue;
            }
            for i in allowed.digits.indices() {
                offered[i].0 += 1;
                offered[i].1 += usize::from(w[1].state.contains_index(i));
            }
        }
    }
    let rate: Vec<f64> = present.iter().map(|&c| c as f64 / steps as f64).collect();
    let zero = digit_index(0).unwrap();
    for (i, &r) in rate.iter().enumerate() {
        if i != zero {
            assert!(rate[zero] < r, "digit 0 should be rarest: {rate:?}");
        }
    }
    // Whenever a digit is offered it is drawn with its own probability, so
    // 3 is the most likely to be taken and 0 the least.
    for (i, &(n, kept)) in offered.iter().enumerate() {
        let p = cfg.probs[i];
        let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!(n >= 200, "{offered:?}");
        assert!((kept as f64 / n as f64 - p).abs() < tol, "digit {}: {kept}/{n}", DIGITS[i]);
    }
    let three = digit_index(3).unwrap();
    assert!(cfg.probs.iter().all(|&p| p <= cfg.probs[three]));
    assert!(cfg.probs.iter().all(|&p| p >= cfg.probs[zero]));
}

#[test]
fn generated_deltas_are_uniform() {
    let ds = generate_split(&SimulatorConfig::default(), 4, Split::Train, 600).unwrap();
    let deltas: Vec<u32> = ds
        .sequences
        .iter()
        .flat_map(|s| s.steps.iter().skip(1).map(|st| st.delta))
        .take(10_000)
        .collect();
    assert_eq!(deltas.len(), 10_000);
    for d in 1..=10 {
        let f = deltas.iter().filter(|&&x| x == d).count() as f64 / deltas.len() as f64;
        assert!((f - 0.1).abs() <= 0.02, "delta {d}: {f}");
    }
}

#[test]
fn nine_is_allowed_by_its_own_row_only() {
    let table = TransitionTable::standard();
    let nine = digit_index(9).unwrap();
    for bits in 0u8..32 {
        let mut state = DigitState::empty();
        for i in (0..NUM_DIGITS).filter(|i| bits & (1 << i) != 0) {
            state.insert_index(i);
        }
        for delta in MIN_DELTA..=MAX_DELTA {
            let allowed = table.allowed_digits(state, delta).unwrap();
            let expected = if state.contains_index(nine) {
                table.permits(nine, nine, delta)
            } else if state.is_empty() {
                table.permits(NULL, nine, delta)
            } else {
                false
            };
            assert_eq!(allowed.digits.contains_index(nine), expected, "{state} delta {delta}");
        }
    }
}

#[test]
fn nine_persistence_ignores_other_digits() {
    // Where no digit can be forced in, 9 stays with its own probability
    // whichever other digits are present.
    let cfg = SimulatorConfig::default();
    let table = TransitionTable::standard();
    let nine = digit_index(9).unwrap();
    let ds = generate_split(&cfg, 8, Split::Train, 4000).unwrap();
    let mut by_group: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
    for s in &ds.sequences {
        for w in s.steps.windows(2) {
            let delta = i64::from(w[1].delta);
            let allowed = table.allowed_digits(w[0].state, delta).unwrap();
            if !w[0].state.contains_index(nine) || !allowed.null || !table.permits(nine, nine, delta) {
                continue;
            }
            let with_six = w[0].state.contains(6);
            let e = by_group.entry(format!("with 6: {with_six}")).or_default();
            e.0 += 1;
            e.1 += usize::from(w[1].state.contains_index(nine));
        }
    }
    let p = cfg.probs[nine];
    let groups: Vec<_> = by_group.iter().filter(|(_, (n, _))| *n >= 200).collect();
    assert!(groups.len() >= 2, "{by_group:?}");
    for (group, &(n, kept)) in groups {
        let rate = kept as f64 / n as f64;
        let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() < tol, "{group}: rate {rate} over {n}");
    }
}
