use proptest::prelude::*;
use socialtyper::classifier::{
    argmax, softmax, train, Example, InputView, Layer, LossWeights, MlpModel, TrainConfig, CONTENT_SEGMENT,
    NETWORK_SEGMENT,
};
use socialtyper::embedstore::SegmentMap;

/// (network dim, content dim, hidden sizes, classes, seed)
fn shape() -> impl Strategy<Value = (usize, usize, Vec<usize>, usize, u64)> {
    (1usize..5, 1usize..5, prop::collection::vec(1usize..7, 0..3), 2usize..6, any::<u64>())
}

fn weights() -> impl Strategy<Value = LossWeights> {
    (0.0f64..6.0, 0.0f64..6.0, 0.0f64..6.0)
        .prop_filter_map("some weight must be positive", |(a, b, g)| LossWeights::new(a, b, g).ok())
}

fn build(shape: &(usize, usize, Vec<usize>, usize, u64), w: LossWeights) -> MlpModel {
    let (net, content, hidden, classes, seed) = shape;
    let segments = SegmentMap::from_lengths([(NETWORK_SEGMENT, *net), (CONTENT_SEGMENT, *content)]).unwrap();
    let vocab = (0..*classes).map(|c| format!("c{c}")).collect();
    MlpModel::init(net + content, hidden, vocab, segments, w, *seed).unwrap()
}

fn input(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn loss_terms_match_single_view_cross_entropy(s in shape(), w in weights(), seed in any::<u64>()) {
        let model = build(&s, w);
        let x: Vec<f64> = (0..model.input_dim()).map(|i| ((seed >> (i % 60)) % 17) as f64 / 4.0 - 2.0).collect();
        let y = (seed as usize) % s.3;
        let out = model.composite_loss(&x, y).unwrap();
        let views = [
            (w.alpha, out.terms.network, InputView::Only(NETWORK_SEGMENT)),
            (w.beta, out.terms.content, InputView::Only(CONTENT_SEGMENT)),
            (w.gamma, out.terms.full, InputView::Full),
        ];
        let mut total = 0.0;
        for (weight, term, view) in views {
            let ce = model.cross_entropy(&x, y, view).unwrap();
            prop_assert_eq!(term.is_some(), weight > 0.0);
            if let Some(t) = term {
                prop_assert_eq!(t, ce);
                total += weight * t;
            }
        }
        prop_assert_eq!(out.loss, total);
    }

    #[test]
    fn masked_view_ignores_other_segments(s in shape(), x in input(8), noise in input(8)) {
        let model = build(&s, LossWeights::default());
        let (net, content) = (s.0, s.1);
        let x = &x[..net + content];
        let mut perturbed = x.to_vec();
        // change only the content coordinates
        for i in net..net + content {
            perturbed[i] += noise[i];
        }
        let a = model.logits(x, InputView::Only(NETWORK_SEGMENT)).unwrap();
        let b = model.logits(&perturbed, InputView::Only(NETWORK_SEGMENT)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn softmax_shift_keeps_argmax(z in prop::collection::vec(-20.0f64..20.0, 1..10), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let (p, q) = (softmax(&z), softmax(&shifted));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(argmax(&z).0, argmax(&shifted).0);
    }

    #[test]
    fn permuting_the_vocabulary_permutes_outputs(s in shape(), x in input(8), rot in 1usize..5) {
        let model = build(&s, LossWeights::default());
        let x = &x[..model.input_dim()];
        let classes = s.3;
        let perm: Vec<usize> = (0..classes).map(|i| (i + rot) % classes).collect();
        let mut layers = model.layers().to_vec();
        let last = layers.pop().unwrap();
        let rows: Vec<Vec<f64>> = last.weight_rows().map(<[f64]>::to_vec).collect();
        let new_last = Layer::new(
            perm.iter().map(|&p| rows[p].clone()).collect(),
            perm.iter().map(|&p| last.bias()[p]).collect(),
        ).unwrap();
        layers.push(new_last);
        let vocab = perm.iter().map(|&p| model.label_vocab()[p].clone()).collect();
        let permuted = MlpModel::from_layers(vocab, layers, model.segment_map().clone(), model.loss_weights()).unwrap();

        let (p, q) = (model.forward(x).unwrap(), permuted.forward(x).unwrap());
        for (i, &src) in perm.iter().enumerate() {
            prop_assert!((q[i] - p[src]).abs() < 1e-12);
        }
        let a = model.label_vocab()[model.classify(x).unwrap().0].clone();
        let b = permuted.label_vocab()[permuted.classify(x).unwrap().0].clone();
        // ties aside, the winning label is the same
        let top = p.iter().copied().fold(f64::MIN, f64::max);
        if p.iter().filter(|&&v| v == top).count() == 1 {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn gradient_matches_finite_differences(s in shape(), w in weights(), x in input(8), yseed in any::<usize>()) {
        let mut model = build(&s, w);
        // zero biases put dead units exactly on the rectifier's kink
        for i in 0..model.parameter_count() {
            if model.parameter(i) == 0.0 {
                model.set_parameter(i, if i % 2 == 0 { 0.3 } else { -0.2 });
            }
        }
        let x = &x[..model.input_dim()];
        let y = yseed % s.3;
        let grad = model.composite_loss(x, y).unwrap().gradients.flatten();
        let h = 1e-5;
        for (i, g) in grad.iter().enumerate() {
            let orig = model.parameter(i);
            model.set_parameter(i, orig + h);
            let up = model.loss(x, y).unwrap();
            model.set_parameter(i, orig - h);
            let down = model.loss(x, y).unwrap();
            model.set_parameter(i, orig);
            let fd = (up - down) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
            prop_assert!(rel < 1e-4, "parameter {}: {} vs {}", i, g, fd);
        }
    }

    #[test]
    fn json_round_trip_is_exact(s in shape(), w in weights(), x in input(8)) {
        let model = build(&s, w);
        let back = MlpModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &model);
        let x = &x[..model.input_dim()];
        let (p, q) = (model.forward(x).unwrap(), back.forward(x).unwrap());
        prop_assert!(p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn full_batch_loss_decreases_for_ten_epochs() {
    let data: Vec<Example> = (0..60)
        .map(|i| {
            let label = i % 3;
            let mut features = vec![0.1 * (i as f64 % 7.0); 6];
            features[label] += 2.0;
            features[3 + label] += 1.5;
            Example { features, label }
        })
        .collect();
    let segments = SegmentMap::from_lengths([(NETWORK_SEGMENT, 3), (CONTENT_SEGMENT, 3)]).unwrap();
    let vocab = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let model = MlpModel::init(6, &[50], vocab, segments, LossWeights::default(), 42).unwrap();
    let config = TrainConfig {
        epochs: 10,
        batch_size: data.len(),
        learning_rate: 0.01,
        seed: 42,
        shuffle: false,
    };
    let (_, history) = train(model, &data, &config).unwrap();
    assert_eq!(history.len(), 10);
    for w in history.windows(2) {
        assert!(w[1] < w[0], "{history:?}");
    }
}

#[test]
fn training_is_seeded() {
    let data: Vec<Example> = (0..40)
        .map(|i| Example {
            features: vec![(i % 2) as f64, 1.0 - (i % 2) as f64, 0.5],
            label: i % 2,
        })
        .collect();
    let run = |seed| {
        let segments = SegmentMap::from_lengths([(NETWORK_SEGMENT, 1), (CONTENT_SEGMENT, 2)]).unwrap();
        let model = MlpModel::init(3, &[4], vec!["x".into(), "y".into()], segments, LossWeights::default(), seed).unwrap();
        let config = TrainConfig { epochs: 3, batch_size: 8, seed, ..TrainConfig::default() };
        train(model, &data, &config).unwrap()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).0, run(2).0);
}
