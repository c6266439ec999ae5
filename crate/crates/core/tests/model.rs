use std::sync::Arc;

use duplex_core::model::variants::{self, VariantSpec};
use duplex_core::model::{
    Activation, Layer, LayerKind, ModelWeights, Network, QuantMatrix, NETWORK_INPUT,
};
use duplex_core::{Error, NB_BANDS, NB_FEATURES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn head(source: Vec<u8>, in_dim: usize) -> Layer {
    Layer {
        kind: LayerKind::Dense,
        activation: Activation::Sigmoid,
        sources: source,
        in_dim,
        out_dim: NB_BANDS,
        kernel_width: 0,
        sparse: false,
        matrices: vec![QuantMatrix::dense(NB_BANDS, in_dim, vec![0; NB_BANDS * in_dim]).unwrap()],
        bias: vec![0.0; NB_BANDS],
    }
}

fn wrap(mut layers: Vec<Layer>) -> ModelWeights {
    let last = layers.len() as u8 - 1;
    let dim = layers.last().unwrap().out_dim;
    layers.push(head(vec![last], dim));
    layers.push(head(vec![last], dim));
    ModelWeights {
        sample_rate: 16_000,
        norm_offset: vec![0.0; NB_FEATURES],
        norm_scale: vec![1.0; NB_FEATURES],
        layers,
    }
}

fn features(rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..NB_FEATURES).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn zero_gru_stays_at_zero() {
    let z = |r, c| QuantMatrix::dense(r, c, vec![0; r * c]).unwrap();
    let gru = Layer {
        kind: LayerKind::Gru,
        activation: Activation::Tanh,
        sources: vec![NETWORK_INPUT],
        in_dim: NB_FEATURES,
        out_dim: 8,
        kernel_width: 0,
        sparse: false,
        matrices: vec![z(8, 100), z(8, 100), z(8, 100), z(8, 8), z(8, 8), z(8, 8)],
        bias: vec![0.0; 24],
    };
    let mut net = Network::new(Arc::new(wrap(vec![gru])));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        net.forward(&features(&mut rng)).unwrap();
        assert!(net.layer_output(0).iter().all(|&h| h == 0.0));
    }
}

/// Two-unit GRU on the first two features, checked against a scalar
/// reference written out gate by gate.
#[test]
fn two_unit_gru_matches_hand_computation() {
    let wx = |codes: [[i8; 2]; 2]| {
        let mut c = vec![0i8; 2 * NB_FEATURES];
        for r in 0..2 {
            c[r * NB_FEATURES] = codes[r][0];
            c[r * NB_FEATURES + 1] = codes[r][1];
        }
        QuantMatrix::dense(2, NB_FEATURES, c).unwrap()
    };
    let wh = |codes: [[i8; 2]; 2]| {
        QuantMatrix::dense(2, 2, codes.iter().flatten().copied().collect()).unwrap()
    };
    let cw = [[[64, -32], [16, 100]], [[-64, 8], [40, -100]], [[127, -128], [-50, 90]]];
    let cu = [[[20, -40], [60, 10]], [[-90, 30], [5, 70]], [[100, -20], [-60, 110]]];
    let bias = [0.1f32, -0.2, 0.05, 0.3, -0.1, 0.2];
    let gru = Layer {
        kind: LayerKind::Gru,
        activation: Activation::Tanh,
        sources: vec![NETWORK_INPUT],
        in_dim: NB_FEATURES,
        out_dim: 2,
        kernel_width: 0,
        sparse: false,
        matrices: vec![wx(cw[0]), wx(cw[1]), wx(cw[2]), wh(cu[0]), wh(cu[1]), wh(cu[2])],
        bias: bias.to_vec(),
    };
    let mut net = Network::new(Arc::new(wrap(vec![gru])));
    let q = |c: i8| c as f64 / 256.0;
    let mv = |m: [[i8; 2]; 2], v: [f64; 2]| {
        [q(m[0][0]) * v[0] + q(m[0][1]) * v[1], q(m[1][0]) * v[0] + q(m[1][1]) * v[1]]
    };
    let mut h = [0.0f64; 2];
    let inputs = [[0.5f32, -0.25], [1.0, 0.75], [-0.8, 0.3], [0.1, -0.9]];
    for x in inputs {
        let mut f = vec![0.0f32; NB_FEATURES];
        f[0] = x[0];
        f[1] = x[1];
        net.forward(&f).unwrap();
        let x = [x[0] as f64, x[1] as f64];
        let (wz, uz) = (mv(cw[0], x), mv(cu[0], h));
        let (wr, ur) = (mv(cw[1], x), mv(cu[1], h));
        let z: Vec<f64> = (0..2).map(|i| sig(wz[i] + uz[i] + bias[i] as f64)).collect();
        let r: Vec<f64> = (0..2).map(|i| sig(wr[i] + ur[i] + bias[2 + i] as f64)).collect();
        let rh = [r[0] * h[0], r[1] * h[1]];
        let (wc, uc) = (mv(cw[2], x), mv(cu[2], rh));
        for i in 0..2 {
            let cand = (wc[i] + uc[i] + bias[4 + i] as f64).tanh();
            h[i] = (1.0 - z[i]) * h[i] + z[i] * cand;
        }
        for i in 0..2 {
            let got = net.layer_output(0)[i] as f64;
            assert!((got - h[i]).abs() < 1e-6, "unit {i}: {got} vs {}", h[i]);
        }
    }
}

fn conv_layer(rng: &mut ChaCha8Rng, out: usize, kernel: usize) -> Layer {
    let codes = (0..out * NB_FEATURES * kernel).map(|_| rng.gen_range(-20..=20) as i8).collect();
    Layer {
        kind: LayerKind::Conv,
        activation: Activation::Tanh,
        sources: vec![NETWORK_INPUT],
        in_dim: NB_FEATURES,
        out_dim: out,
        kernel_width: kernel as u8,
        sparse: false,
        matrices: vec![QuantMatrix::dense(out, NB_FEATURES * kernel, codes).unwrap()],
        bias: (0..out).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    }
}

#[test]
fn conv_with_empty_buffer_gives_tanh_of_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layer = conv_layer(&mut rng, 16, 5);
    let bias = layer.bias.clone();
    let mut net = Network::new(Arc::new(wrap(vec![layer])));
    net.forward(&[0.0; NB_FEATURES]).unwrap();
    for (o, b) in net.layer_output(0).iter().zip(&bias) {
        assert_eq!(*o, b.tanh());
    }
}

#[test]
fn centered_delta_kernel_reproduces_center_frame() {
    let out = 16;
    let mut codes = vec![0i8; out * NB_FEATURES * 5];
    for r in 0..out {
        codes[r * NB_FEATURES * 5 + 2 * NB_FEATURES + r] = 64;
    }
    let layer = Layer {
        kind: LayerKind::Conv,
        activation: Activation::None,
        sources: vec![NETWORK_INPUT],
        in_dim: NB_FEATURES,
        out_dim: out,
        kernel_width: 5,
        sparse: false,
        matrices: vec![QuantMatrix::dense(out, NB_FEATURES * 5, codes).unwrap()],
        bias: vec![0.0; out],
    };
    let mut net = Network::new(Arc::new(wrap(vec![layer])));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frames: Vec<Vec<f32>> = (0..12).map(|_| features(&mut rng)).collect();
    for (t, f) in frames.iter().enumerate() {
        net.forward(f).unwrap();
        for r in 0..out {
            let expect = if t >= 2 { 0.25 * frames[t - 2][r] } else { 0.0 };
            assert_eq!(net.layer_output(0)[r], expect);
        }
    }
}

#[test]
fn conv_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let layer = conv_layer(&mut rng, 32, 3);
    let w = layer.matrices[0].to_dense();
    let bias = layer.bias.clone();
    let mut net = Network::new(Arc::new(wrap(vec![layer])));
    let frames: Vec<Vec<f32>> = (0..30).map(|_| features(&mut rng)).collect();
    let cols = 3 * NB_FEATURES;
    for (t, f) in frames.iter().enumerate() {
        net.forward(f).unwrap();
        for r in 0..32 {
            let mut acc = bias[r] as f64;
            for tap in 0..3 {
                // tap 0 is the oldest frame
                let Some(src) = (t + tap).checked_sub(2) else { continue };
                for i in 0..NB_FEATURES {
                    acc += w[r * cols + tap * NB_FEATURES + i] * frames[src][i] as f64;
                }
            }
            let got = net.layer_output(0)[r] as f64;
            assert!((got - acc.tanh()).abs() < 1e-6, "frame {t} row {r}");
        }
    }
}

#[test]
fn size_ladder_matches_budget() {
    let full = variants::build(&VariantSpec::full(), 16_000, 1).nonzeros() as f64;
    let sparse = variants::build(&VariantSpec::sparse(), 16_000, 1).nonzeros() as f64;
    let small = variants::build(&VariantSpec::small(), 16_000, 1).nonzeros() as f64;
    assert!((full / 8.0e6 - 1.0).abs() <= 0.05, "full {full}");
    assert!((sparse / 2.1e6 - 1.0).abs() <= 0.05, "sparse {sparse}");
    assert!((small / 8.0e5 - 1.0).abs() <= 0.05, "small {small}");
}

#[test]
fn mac_probe_counts_full_model() {
    let w = Arc::new(variants::build(&VariantSpec::full(), 16_000, 2));
    let per_frame = w.macs_per_frame() as f64;
    let mut net = Network::new(w);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        net.forward(&features(&mut rng)).unwrap();
    }
    assert_eq!(net.mac_count() as f64, 10.0 * per_frame);
    let per_second = per_frame * 100.0;
    assert!((per_second / 8.0e8 - 1.0).abs() <= 0.05, "{per_second}");
}

#[test]
fn round_trip_is_bit_exact() {
    let w = variants::build(&VariantSpec::small(), 16_000, 3);
    let bytes = w.to_bytes();
    let back = ModelWeights::from_bytes(&bytes).unwrap();
    assert_eq!(back, w);
    assert_eq!(back.to_bytes(), bytes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pnw");
    w.save(&path).unwrap();
    assert_eq!(ModelWeights::load(&path).unwrap(), w);
}

#[test]
fn decoded_weights_are_within_half() {
    let w = variants::build(&VariantSpec::small(), 16_000, 9);
    for l in &w.layers {
        for m in &l.matrices {
            assert!(m.to_dense().iter().all(|v| v.abs() <= 0.5));
        }
    }
}

#[test]
fn sparse_layers_match_dense_oracle() {
    let w = variants::build(&VariantSpec::small(), 16_000, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for l in w.layers.iter().filter(|l| l.sparse) {
        for m in &l.matrices {
            let d = m.to_dense();
            for _ in 0..100 {
                let x: Vec<f32> = (0..m.cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut y = vec![0.0; m.rows()];
                m.matvec(&x, &mut y);
                let oracle: Vec<f64> = (0..m.rows())
                    .map(|r| (0..m.cols()).map(|c| d[r * m.cols() + c] * x[c] as f64).sum())
                    .collect();
                let scale = oracle.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for (a, b) in y.iter().zip(&oracle) {
                    assert!((*a as f64 - b).abs() <= 1e-5 * scale);
                }
            }
        }
    }
}

fn assert_layer_error(bytes: &[u8], layer: usize) {
    match ModelWeights::from_bytes(bytes) {
        Err(Error::Layer { index, .. }) => assert_eq!(index, layer),
        other => panic!("expected layer {layer} error, got {other:?}"),
    }
}

fn layer_len(l: &Layer) -> usize {
    let mats: usize = l
        .matrices
        .iter()
        .map(|m| m.codes().len() + m.blocks().map_or(0, |b| 4 + 4 * b.len()))
        .sum();
    3 + l.sources.len() + 10 + mats + 4 * l.bias.len()
}

fn recrc(bytes: &mut [u8]) {
    let n = bytes.len() - 4;
    let crc = crc32fast::hash(&bytes[..n]);
    bytes[n..].copy_from_slice(&crc.to_le_bytes());
}

#[test]
fn bad_files_are_rejected() {
    let w = variants::build(&VariantSpec::small(), 16_000, 5);
    let good = w.to_bytes();

    let mut b = good.clone();
    b[0] = b'X';
    assert!(matches!(ModelWeights::from_bytes(&b), Err(Error::Format(_))));

    let mut b = good.clone();
    b[4] = 2;
    recrc(&mut b);
    assert!(matches!(ModelWeights::from_bytes(&b), Err(Error::Format(_))));

    let mut b = good.clone();
    let mid = b.len() / 2;
    b[mid] ^= 1;
    assert!(matches!(ModelWeights::from_bytes(&b), Err(Error::Format(_))));

    assert!(ModelWeights::from_bytes(&good[..good.len() / 2]).is_err());

    // dimension chain broken at layer 1
    let mut bad = w.clone();
    bad.layers[1].sources = vec![NETWORK_INPUT];
    assert_layer_error(&bad.to_bytes(), 1);

    // block index out of range in layer 1: first block pair follows the
    // layer header and block count
    let mut b = good.clone();
    let hdr = 4 + 4 + 4 + 800 + 4;
    let l1_pairs = hdr + layer_len(&w.layers[0]) + 3 + 1 + 10 + 4;
    b[l1_pairs..l1_pairs + 2].copy_from_slice(&999u16.to_le_bytes());
    recrc(&mut b);
    assert_layer_error(&b, 1);

    // duplicate block in layer 2
    let m = &w.layers[2].matrices[0];
    let mut blocks = m.blocks().unwrap().to_vec();
    blocks[1] = blocks[0];
    let rows = m.rows();
    let cols = m.cols();
    let codes = m.codes().to_vec();
    assert!(QuantMatrix::sparse(rows, cols, blocks.clone(), codes.clone()).is_err());
    // bypass the constructor check by editing the serialized table
    let mut b = good.clone();
    let needle: Vec<u8> = [blocks[0].0.to_le_bytes(), blocks[0].1.to_le_bytes()].concat();
    let second: Vec<u8> = {
        let orig = w.layers[2].matrices[0].blocks().unwrap()[1];
        [orig.0.to_le_bytes(), orig.1.to_le_bytes()].concat()
    };
    let l2_start = hdr + layer_len(&w.layers[0]) + layer_len(&w.layers[1]);
    let pos = l2_start
        + b[l2_start..]
        .windows(8)
        .position(|s| s[..4] == needle[..] && s[4..] == second[..])
        .expect("block table found");
    b[pos + 4..pos + 8].copy_from_slice(&needle);
    recrc(&mut b);
    assert_layer_error(&b, 2);
}

#[test]
fn identity_stub_is_exact() {
    let mut net = Network::new(Arc::new(variants::identity_stub(16_000)));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (g, r) = net.forward(&features(&mut rng)).unwrap();
        assert!(g.iter().all(|&v| v == 1.0));
        assert!(r.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn stream_start_and_determinism() {
    let w = Arc::new(variants::build(&VariantSpec::small(), 16_000, 8));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let frames: Vec<Vec<f32>> = (0..50).map(|_| features(&mut rng)).collect();
    let run = |w: &Arc<ModelWeights>| {
        let mut net = Network::new(Arc::clone(w));
        frames
            .iter()
            .map(|f| {
                let (g, r) = net.forward(f).unwrap();
                (g.to_vec(), r.to_vec())
            })
            .collect::<Vec<_>>()
    };
    let a = run(&w);
    let b = run(&w);
    assert_eq!(a, b);
    for (g, r) in &a {
        assert_eq!(g.len(), NB_BANDS);
        assert!(g.iter().chain(r).all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn gru_state_stays_bounded(seed in 0u64..1000) {
        let w = Arc::new(variants::build(&VariantSpec::small(), 16_000, seed));
        let mut net = Network::new(w);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..2000 {
            let f: Vec<f32> = (0..NB_FEATURES).map(|_| rng.gen_range(-20.0..20.0)).collect();
            net.forward(&f).unwrap();
            for l in 2..7 {
                prop_assert!(net.layer_output(l).iter().all(|h| h.abs() < 1.0));
            }
        }
    }
}

#[test]
fn gru_state_bounded_over_long_run() {
    let w = Arc::new(variants::build(&VariantSpec::small(), 16_000, 11));
    let mut net = Network::new(w);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut f = vec![0.0f32; NB_FEATURES];
    for _ in 0..100_000 {
        for v in f.iter_mut() {
            *v = rng.gen_range(-10.0..10.0);
        }
        net.forward(&f).unwrap();
    }
    for l in 2..7 {
        assert!(net.layer_output(l).iter().all(|h| h.abs() < 1.0));
    }
}
