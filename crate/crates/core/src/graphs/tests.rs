use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor<T: Element>(shape: Shape, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| T::of_f64(rng.gen_range(-1.0..1.0))).unwrap()
}

/// Conv block, pool, conv block, upsample, concat with the first block, predict.
fn tiny_unet<T: Element>(seed: u64) -> Network<T> {
    let mut b = GraphBuilder::new(3);
    let skip = b.conv_block(4);
    b.maxpool();
    b.conv_block(5);
    b.upsample();
    b.concat(skip);
    b.conv_block(3);
    b.predict();
    b.build("tiny", seed).unwrap()
}

#[test]
fn finalnet_schedule() {
    let net: Network = build_finalnet(0);
    let convs: Vec<usize> = net
        .layers()
        .iter()
        .filter(|l| matches!(l.kind, LayerKind::ConvBlock | LayerKind::Predict))
        .map(|l| l.c_out)
        .collect();
    assert_eq!(convs, vec![32, 64, 128, 256, 256, 171, 100, 55, 29, 2]);
    let concats: Vec<usize> = net
        .layers()
        .iter()
        .filter(|l| l.kind == LayerKind::Concat)
        .map(|l| l.c_out)
        .collect();
    assert_eq!(concats, vec![512, 299, 164, 87]);
    assert_eq!(net.size_multiple(), 16);
}

#[test]
fn finalnet_stage_sizes() {
    let net: Network = build_finalnet(0);
    let shapes = net.layer_output_shapes([1, 64, 64, 8]).unwrap();
    let pooled: Vec<usize> = net
        .layers()
        .iter()
        .zip(&shapes)
        .filter(|(l, _)| l.kind == LayerKind::MaxPool)
        .map(|(_, s)| s[1])
        .collect();
    assert_eq!(pooled, vec![32, 16, 8, 4]);
    // bottleneck block
    assert_eq!(shapes[8], [1, 4, 4, 256]);
    assert_eq!(*shapes.last().unwrap(), [1, 64, 64, 2]);
    let shapes = net.layer_output_shapes([1, 48, 48, 8]).unwrap();
    assert_eq!(&shapes[8][1..3], &[3, 3]);
}

#[test]
fn finalnet_forward_shape() {
    let net: Network = build_finalnet(1);
    let out = net.predict(&random_tensor([1, 64, 64, 8], 2)).unwrap();
    assert_eq!(out.shape(), [1, 64, 64, 2]);
    assert!(out.all_finite());
}

#[test]
fn plainnet_is_full_resolution() {
    let net: Network = build_plainnet(1);
    assert!(net
        .layers()
        .iter()
        .all(|l| matches!(l.kind, LayerKind::ConvBlock | LayerKind::Predict)));
    assert_eq!(net.layers().len(), 7);
    assert_eq!(net.size_multiple(), 1);
    let out = net.predict(&random_tensor([1, 64, 64, 8], 2)).unwrap();
    assert_eq!(out.shape(), [1, 64, 64, 2]);
}

#[test]
fn plainnet_filter_count_near_906() {
    let r = build_plainnet::<f32>(0).parameter_report();
    assert_eq!(r.filters, 898);
    assert!((r.filters as f64 - 906.0).abs() / 906.0 <= 0.05);
    assert_eq!(r.window_parameters, 25 * 904);
    assert_eq!(r.conv_parameters, 25 * (8 * 64 + 64 * 128 + 128 * 256 + 256 * 256 + 256 * 128 + 128 * 64 + 64 * 2) + 898);
}

#[test]
fn prediction_only_graph() {
    let mut b = GraphBuilder::new(8);
    b.predict();
    let net: Network = b.build("bare", 3).unwrap();
    let out = net.predict(&random_tensor([2, 5, 7, 8], 1)).unwrap();
    assert_eq!(out.shape(), [2, 5, 7, 2]);
}

#[test]
fn zero_parameters_give_zero_flow() {
    let mut net: Network = build_finalnet(5);
    for s in net.param_slices_mut() {
        s.fill(0.0);
    }
    let x = random_tensor([1, 32, 32, 8], 3);
    let out = net.predict(&x).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
    let (out, _) = net.forward(&x, Mode::Train).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn inference_is_deterministic_and_pure() {
    let mut net: Network = build_finalnet(7);
    let x = random_tensor([1, 16, 32, 8], 4);
    let before = net.clone();
    let (a, cache) = net.forward(&x, Mode::Inference).unwrap();
    let (b, _) = net.forward(&x, Mode::Inference).unwrap();
    assert_eq!(a, b);
    assert_eq!(net, before);
    assert_eq!(net.predict(&x).unwrap(), a);
    assert!(matches!(net.backward(cache, &a), Err(Error::State(_))));
}

#[test]
fn train_forward_updates_running_stats() {
    let mut net: Network = tiny_unet(1);
    let before = net.clone();
    net.forward(&random_tensor([2, 4, 4, 3], 1), Mode::Train).unwrap();
    assert_ne!(net, before);
}

#[test]
fn bad_divisibility_names_layer() {
    let mut net: Network = build_finalnet(0);
    let err = net.forward(&random_tensor([1, 24, 24, 8], 1), Mode::Train).unwrap_err();
    let Error::Shape(msg) = err else { panic!("{err:?}") };
    assert!(msg.contains("layer 7 (maxpool)"), "{msg}");
    assert!(net.layer_output_shapes([1, 24, 24, 8]).is_err());
    let err = net.predict(&random_tensor([1, 16, 16, 3], 1)).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

#[test]
fn cache_from_other_network_is_rejected() {
    let mut a: Network = tiny_unet(1);
    let b: Network = build_plainnet(1);
    let (out, cache) = a.forward(&random_tensor([1, 4, 4, 3], 1), Mode::Train).unwrap();
    assert!(matches!(b.backward(cache, &out), Err(Error::State(_))));
}

#[test]
fn invalid_graphs_are_rejected() {
    let mut b = GraphBuilder::new(8);
    b.conv_block(4);
    assert!(matches!(b.clone().build::<f32>("x", 0), Err(Error::Config(_))));
    b.maxpool();
    b.predict();
    assert!(b.build::<f32>("x", 0).is_err());
    let bad = vec![
        LayerSpec { kind: LayerKind::Concat, c_out: 16, skip_source: Some(0) },
        LayerSpec { kind: LayerKind::Predict, c_out: 2, skip_source: None },
    ];
    assert!(Network::<f32>::from_specs("x", 8, bad, 0).is_err());
}

fn sum_weighted<T: Element>(net: &mut Network<T>, x: &Tensor<T>, r: &Tensor<T>) -> f64 {
    net.forward(x, Mode::Train).unwrap().0.dot(r).unwrap()
}

#[test]
fn whole_graph_gradients_match_finite_differences() {
    for seed in 0..3 {
        let mut net: Network<f64> = tiny_unet(seed);
        let x = random_tensor::<f64>([2, 4, 4, 3], 10 + seed);
        let (out, cache) = net.forward(&x, Mode::Train).unwrap();
        let r = random_tensor::<f64>(out.shape(), 20 + seed);
        let grads = net.backward(cache, &r).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
        let h = 1e-5;
        for (k, len) in net.param_lengths().into_iter().enumerate() {
            for i in (0..len).step_by(7) {
                let orig = net.param_slices_mut()[k][i];
                net.param_slices_mut()[k][i] = orig + h;
                let up = sum_weighted(&mut net, &x, &r);
                net.param_slices_mut()[k][i] = orig - h;
                let down = sum_weighted(&mut net, &x, &r);
                net.param_slices_mut()[k][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic[k][i];
                assert!((fd - a).abs() <= 1e-6 + 1e-5 * fd.abs().max(a.abs()), "seed {seed} buffer {k}[{i}]: fd {fd} vs {a}");
            }
        }
        let mut xp = x.clone();
        for i in (0..x.len()).step_by(5) {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + h;
            let up = sum_weighted(&mut net, &xp, &r);
            xp.data_mut()[i] = orig - h;
            let down = sum_weighted(&mut net, &xp, &r);
            xp.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = grads.input.data()[i];
            assert!((fd - a).abs() <= 1e-6 + 1e-5 * fd.abs().max(a.abs()), "input[{i}]: fd {fd} vs {a}");
        }
    }
}

/// Zeroes the weights that the conv after `concat` applies to skip channels.
fn cut_skip(net: &mut Network, concat: usize) {
    let main = net.input_channels_per_layer()[concat];
    let LayerParams::ConvBlock { conv, .. } = &mut net.params_mut()[concat + 1] else {
        panic!("conv block expected after concat")
    };
    let [kh, kw, c_in, c_out] = conv.weights.shape();
    for a in 0..kh {
        for b in 0..kw {
            for ci in main..c_in {
                for co in 0..c_out {
                    conv.weights.set([a, b, ci, co], 0.0).unwrap();
                }
            }
        }
    }
}

#[test]
fn skip_connections_matter() {
    let net: Network = build_finalnet(11);
    let x = random_tensor([1, 32, 32, 8], 12);
    let full = net.predict(&x).unwrap();
    let concats: Vec<usize> = (0..net.layers().len())
        .filter(|&i| net.layers()[i].kind == LayerKind::Concat)
        .collect();
    assert_eq!(concats.len(), 4);
    for &c in &concats {
        let mut cut = net.clone();
        cut_skip(&mut cut, c);
        assert_ne!(cut.predict(&x).unwrap(), full, "concat at layer {c}");
    }
}

#[test]
fn skip_path_delivers_gradient_to_encoder() {
    let mut net: Network = build_finalnet(13);
    let x = random_tensor([2, 16, 16, 8], 14);
    let mut cut = net.clone();
    let last_concat = net.layers().iter().rposition(|l| l.kind == LayerKind::Concat).unwrap();
    cut_skip(&mut cut, last_concat);
    let grad_of_first_block = |net: &mut Network| {
        let (out, cache) = net.forward(&x, Mode::Train).unwrap();
        let r = random_tensor(out.shape(), 15);
        let g = net.backward(cache, &r).unwrap();
        g.slices()[0].to_vec()
    };
    let with_skip = grad_of_first_block(&mut net);
    let without = grad_of_first_block(&mut cut);
    assert!(with_skip.iter().any(|v| *v != 0.0));
    assert_ne!(with_skip, without);
}

#[test]
fn guide_passthrough_copies_guide() {
    let net: Network = guide_passthrough();
    let x = random_tensor([1, 6, 5, 8], 3);
    let out = net.predict(&x).unwrap();
    for (o, i) in out.data().chunks(2).zip(x.data().chunks(8)) {
        assert_eq!(o, &i[6..8]);
    }
}

#[test]
fn build_named_dispatch() {
    assert_eq!(build_named::<f32>("PlainNet", 0).unwrap().name(), "PlainNet");
    assert_eq!(build_named::<f32>("finalnet", 0).unwrap().name(), "FinalNet");
    assert!(matches!(build_named::<f32>("resnet", 0), Err(Error::Config(_))));
}

#[test]
fn checkpoint_round_trip() {
    let mut net: Network = build_finalnet(21);
    net.forward(&random_tensor([2, 16, 16, 8], 1), Mode::Train).unwrap();
    let mut bytes = Vec::new();
    write_network(&mut bytes, &net).unwrap();
    let loaded = read_network(&mut bytes.as_slice()).unwrap();
    assert_eq!(loaded, net);
    let mut again = Vec::new();
    write_network(&mut again, &loaded).unwrap();
    assert_eq!(again, bytes);
    let x = random_tensor([1, 16, 16, 8], 2);
    assert_eq!(loaded.predict(&x).unwrap(), net.predict(&x).unwrap());
}

#[test]
fn checkpoint_rejects_corruption() {
    let net: Network = tiny_unet(2);
    let mut bytes = Vec::new();
    write_network(&mut bytes, &net).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_network(&mut bad.as_slice()), Err(Error::Format(_))));
    let truncated = &bytes[..bytes.len() - 3];
    assert!(matches!(read_network(&mut &truncated[..]), Err(Error::Format(_))));
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(read_network(&mut version.as_slice()), Err(Error::Format(_))));
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let net: Network = build_plainnet(4);
    save_network(&path, &net).unwrap();
    assert_eq!(load_network(&path).unwrap(), net);
    assert!(matches!(load_network(dir.path().join("missing")), Err(Error::Io { .. })));
}
