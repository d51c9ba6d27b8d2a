use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use ricworld::policy_format::{
    softmax, Activation, Layer, Normalization, PolicyFileError, PolicyNetwork, StateLayout,
};

#[derive(Deserialize)]
struct GoldenFile {
    file: String,
    n_ues: usize,
    vectors: Vec<GoldenVector>,
}

#[derive(Deserialize)]
struct GoldenVector {
    state: Vec<f64>,
    logits: Vec<f64>,
    weights: Vec<f64>,
}

type ErrCheck = fn(&PolicyFileError) -> bool;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn net(seed: u64, n_ues: usize, layout: StateLayout, hidden: &[usize]) -> PolicyNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PolicyNetwork::random(n_ues, layout, Normalization::new(3e6), hidden, &mut rng).unwrap()
}

#[test]
fn golden_files_match_independent_writer() {
    let text = std::fs::read_to_string(data_dir().join("golden_vectors.json")).unwrap();
    let golden: Vec<GoldenFile> = serde_json::from_str(&text).unwrap();
    assert_eq!(golden.len(), 2);
    for g in golden {
        let net = PolicyNetwork::load(&data_dir().join(&g.file)).unwrap();
        assert_eq!(net.n_ues(), g.n_ues);
        assert_eq!(net.layers().len(), 3);
        assert_eq!(net.layers()[0].rows, 64);
        assert_eq!(g.vectors.len(), 16);
        for v in &g.vectors {
            let logits = net.forward(&v.state).unwrap();
            let weights = softmax(&logits);
            for (a, b) in logits.iter().zip(&v.logits) {
                assert!(
                    (a - b).abs() <= 1e-5 * b.abs().max(1.0),
                    "{} logit {a} vs {b}",
                    g.file
                );
            }
            for (a, b) in weights.iter().zip(&v.weights) {
                assert!((a - b).abs() <= 1e-5, "{} weight {a} vs {b}", g.file);
            }
        }
        // reserializing reproduces the file byte for byte
        let bytes = std::fs::read(data_dir().join(&g.file)).unwrap();
        assert_eq!(net.to_bytes(), bytes);
    }
}

#[test]
fn header_layout_is_fixed() {
    let n = net(1, 2, StateLayout::Video, &[3]);
    let b = n.to_bytes();
    assert_eq!(&b[..4], b"RWPN");
    assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
    assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 2);
    assert_eq!(b[10], 1);
    assert_eq!(f32::from_le_bytes(b[11..15].try_into().unwrap()), 15.0);
    assert_eq!(f32::from_le_bytes(b[15..19].try_into().unwrap()), 3e6);
    assert_eq!(f32::from_le_bytes(b[19..23].try_into().unwrap()), 6.0);
    assert_eq!(u32::from_le_bytes(b[23..27].try_into().unwrap()), 2);
    // first layer: 3 rows reading 6 inputs, tanh
    assert_eq!(u32::from_le_bytes(b[27..31].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(b[31..35].try_into().unwrap()), 6);
    assert_eq!(b[35], 0);
    let layer0 = 4 * (3 * 6 + 3);
    let layer1 = 9 + 4 * (2 * 3 + 2);
    assert_eq!(b.len(), 27 + 9 + layer0 + layer1);
}

#[test]
fn header_corruptions_are_rejected() {
    let good = net(2, 3, StateLayout::Throughput, &[4, 4]).to_bytes();
    let cases: Vec<(usize, u8, ErrCheck)> = vec![
        (0, b'X', |e| matches!(e, PolicyFileError::BadMagic(_))),
        (4, 9, |e| {
            matches!(e, PolicyFileError::UnsupportedVersion(9))
        }),
        (10, 7, |e| matches!(e, PolicyFileError::UnknownLayout(7))),
        (6, 4, |e| {
            matches!(e, PolicyFileError::InputMismatch { layer: 0, .. })
        }),
        (23, 0, |e| matches!(e, PolicyFileError::NoLayers)),
        (35, 5, |e| {
            matches!(e, PolicyFileError::UnknownActivation { layer: 0, tag: 5 })
        }),
    ];
    for (offset, value, check) in cases {
        let mut b = good.clone();
        b[offset] = value;
        let err = PolicyNetwork::from_bytes(&b).unwrap_err();
        assert!(check(&err), "offset {offset}: {err}");
    }
    let mut b = good.clone();
    b.push(0);
    assert!(matches!(
        PolicyNetwork::from_bytes(&b),
        Err(PolicyFileError::TrailingBytes(1))
    ));
    let mut b = good.clone();
    b[15..19].copy_from_slice(&(-1.0f32).to_le_bytes());
    assert!(matches!(
        PolicyNetwork::from_bytes(&b),
        Err(PolicyFileError::BadNormalization { .. })
    ));
}

#[test]
fn every_truncation_is_an_error() {
    let b = net(3, 2, StateLayout::Video, &[5]).to_bytes();
    for cut in 0..b.len() {
        assert!(
            matches!(
                PolicyNetwork::from_bytes(&b[..cut]),
                Err(PolicyFileError::Truncated { .. })
            ),
            "cut {cut}"
        );
    }
}

#[test]
fn output_width_must_match_ue_count() {
    let layer = |rows, cols, activation| Layer {
        rows,
        cols,
        activation,
        weights: vec![0.1; rows * cols],
        bias: vec![0.0; rows],
    };
    let r = PolicyNetwork::new(
        2,
        StateLayout::Throughput,
        Normalization::new(1.0),
        vec![
            layer(3, 4, Activation::Relu),
            layer(3, 3, Activation::Linear),
        ],
    );
    assert!(matches!(
        r,
        Err(PolicyFileError::OutputMismatch {
            expected: 2,
            found: 3
        })
    ));
    let ok = PolicyNetwork::new(
        2,
        StateLayout::Throughput,
        Normalization::new(1.0),
        vec![
            layer(3, 4, Activation::Relu),
            layer(2, 3, Activation::Linear),
        ],
    )
    .unwrap();
    assert!(matches!(
        ok.forward(&[0.0; 3]),
        Err(PolicyFileError::StateLength {
            expected: 4,
            found: 3
        })
    ));
}

#[test]
fn missing_file_names_the_path() {
    let err = PolicyNetwork::load(Path::new("/nonexistent/p.rwpn")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/p.rwpn"));
}

#[test]
fn save_load_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.rwpn");
    let n = net(4, 5, StateLayout::Throughput, &[16, 8]);
    n.save(&path).unwrap();
    assert_eq!(PolicyNetwork::load(&path).unwrap(), n);
}

proptest! {
    #[test]
    fn roundtrip_preserves_every_bit(
        seed in any::<u64>(),
        n_ues in 1usize..6,
        video in any::<bool>(),
        hidden in prop::collection::vec(1usize..12, 0..3),
    ) {
        let layout = if video { StateLayout::Video } else { StateLayout::Throughput };
        let n = net(seed, n_ues, layout, &hidden);
        let b = n.to_bytes();
        let back = PolicyNetwork::from_bytes(&b).unwrap();
        prop_assert_eq!(back.to_bytes(), b);
        prop_assert_eq!(back, n);
    }

    #[test]
    fn non_finite_parameters_are_rejected(seed in any::<u64>(), which in any::<prop::sample::Index>(), nan in any::<bool>()) {
        let b = net(seed, 2, StateLayout::Throughput, &[3]).to_bytes();
        // parameter floats start after each layer's 9-byte header
        let l0 = 36..36 + 4 * (3 * 4 + 3);
        let l1 = l0.end + 9..b.len();
        let offsets: Vec<usize> = l0.step_by(4).chain(l1.step_by(4)).collect();
        let at = offsets[which.index(offsets.len())];
        let mut m = b.clone();
        let v = if nan { f32::NAN } else { f32::INFINITY };
        m[at..at + 4].copy_from_slice(&v.to_le_bytes());
        let rejected = matches!(PolicyNetwork::from_bytes(&m), Err(PolicyFileError::NonFinite { .. }));
        prop_assert!(rejected);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = PolicyNetwork::from_bytes(&bytes);
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..20)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}
