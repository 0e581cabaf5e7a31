use std::path::Path;
use std::process::{Command, Output};

use flowcnn::data::synthetic::{textured_pair, write_middlebury_tree, write_sintel_tree, SyntheticScene};
use flowcnn::data::{read_flo, write_flo, write_png, FlowField};
use flowcnn::graphs::{build_finalnet, guide_passthrough, save_network};

const BM: [&str; 6] = ["--block-size", "5", "--search-radius", "3", "--step", "4"];

fn flowcnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcnn")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstdout {}\nstderr {}", o.status, String::from_utf8_lossy(&o.stdout), stderr(o));
}

const SEQS: [(&str, (f32, f32)); 3] = [("Grove2", (1.0, -2.0)), ("Urban2", (0.5, 1.5)), ("Venus", (-2.0, 0.0))];

fn middlebury(root: &Path) {
    write_middlebury_tree(root, &SEQS, 24, 20, 5).unwrap();
}

/// Network column of an eval CSV, keyed by pair id.
fn network_column(csv: &Path) -> Vec<(String, f64)> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(flowcnn(&[]).status.code(), Some(2));
    assert_eq!(flowcnn(&["nonsense"]).status.code(), Some(2));
    let o = flowcnn(&["viz", "/nonexistent/a.flo", "/tmp/out.ppm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/a.flo"));
    let o = flowcnn(&["inspect", "--net", "resnet"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn frame_size_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = textured_pair(16, 16, (0.0, 0.0), 2.0, 1);
    let (b, _) = textured_pair(20, 16, (0.0, 0.0), 2.0, 1);
    write_png(dir.path().join("a.png"), &a.to_rgb8()).unwrap();
    write_png(dir.path().join("b.png"), &b.to_rgb8()).unwrap();
    let ckpt = dir.path().join("net.ckpt");
    save_network(&ckpt, &build_finalnet::<f32>(0)).unwrap();
    let out = dir.path().join("o.flo");
    let o = flowcnn(&["infer", p(&ckpt), p(&dir.path().join("a.png")), p(&dir.path().join("b.png")), p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("sizes differ"));
    assert!(!out.exists());
}

#[test]
fn numerical_blowup_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = flowcnn(&[
        "train", "--dataset", "synthetic", "--synthetic-pairs", "8", "--synthetic-size", "16",
        "--out", p(&dir.path().join("run")), "--epochs", "3", "--batch-size", "2", "--crop-size", "0",
        "--lr", "1e38", "--lr-after-half", "1e38", "--set", "block_size=3", "--set", "search_radius=1",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn infer_then_eval_matches_internal_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mb");
    middlebury(&data);
    let ckpt = dir.path().join("net.ckpt");
    save_network(&ckpt, &build_finalnet::<f32>(3)).unwrap();
    let preds = dir.path().join("preds");
    std::fs::create_dir(&preds).unwrap();
    for (name, _) in SEQS {
        let seq = data.join(name);
        let out = preds.join(format!("{name}.flo"));
        let (f10, f11) = (seq.join("frame10.png"), seq.join("frame11.png"));
        let mut args = vec!["infer", p(&ckpt), p(&f10), p(&f11), p(&out)];
        args.extend(BM);
        assert_ok(&flowcnn(&args));
        let flow = read_flo(&out).unwrap();
        assert_eq!((flow.width(), flow.height()), (24, 20));
    }
    let (internal, external) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let mut args = vec!["eval", p(&ckpt), "--data", p(&data), "--dataset", "middlebury", "--csv", p(&internal)];
    args.extend(BM);
    let o = flowcnn(&args);
    assert_ok(&o);
    let table = String::from_utf8_lossy(&o.stdout);
    let bm_col = table.find("block").unwrap();
    let net_col = table.find("network").unwrap();
    assert!(bm_col < net_col, "{table}");
    let mut args = vec!["eval", "--pred-dir", p(&preds), "--data", p(&data), "--dataset", "middlebury", "--csv", p(&external)];
    args.extend(BM);
    assert_ok(&flowcnn(&args));
    let (a, b) = (network_column(&internal), network_column(&external));
    assert_eq!(a.len(), SEQS.len() + 1);
    for ((ia, va), (ib, vb)) in a.iter().zip(&b) {
        assert_eq!(ia, ib);
        assert!((va - vb).abs() <= 1e-6, "{ia}: {va} vs {vb}");
    }
}

#[test]
fn oracle_guides_through_passthrough_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mb");
    middlebury(&data);
    let cache = dir.path().join("guides");
    std::fs::create_dir(&cache).unwrap();
    for (name, _) in SEQS {
        std::fs::copy(data.join(name).join("flow10.flo"), cache.join(format!("{name}.flo"))).unwrap();
    }
    let ckpt = dir.path().join("oracle.ckpt");
    save_network(&ckpt, &guide_passthrough::<f32>()).unwrap();
    let csv = dir.path().join("r.csv");
    assert_ok(&flowcnn(&[
        "eval", p(&ckpt), "--data", p(&data), "--dataset", "middlebury", "--guide-cache", p(&cache), "--csv", p(&csv),
    ]));
    for (id, v) in network_column(&csv) {
        assert_eq!(v, 0.0, "{id}");
    }
}

#[test]
fn missing_ground_truth_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    middlebury(dir.path());
    std::fs::remove_file(dir.path().join("Urban2/flow10.flo")).unwrap();
    let ckpt = dir.path().join("n.ckpt");
    save_network(&ckpt, &guide_passthrough::<f32>()).unwrap();
    let o = flowcnn(&["eval", p(&ckpt), "--data", p(dir.path()), "--dataset", "middlebury"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Urban2"), "{}", stderr(&o));
}

#[test]
fn smoke_training_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    for net in ["finalnet", "plainnet"] {
        let out = dir.path().join(net);
        let o = flowcnn(&[
            "train", "--dataset", "synthetic", "--synthetic-pairs", "4", "--synthetic-size", "16", "--net", net,
            "--out", p(&out), "--epochs", "2", "--batch-size", "2", "--crop-size", "0", "--lr", "1e-5",
            "--set", "block_size=3", "--set", "search_radius=1", "--set", "checkpoint_every=1",
        ]);
        assert_ok(&o);
        assert_eq!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.starts_with("epoch ")).count(), 2);
        for f in ["last.ckpt", "best.ckpt", "epoch_0001.ckpt", "metrics.csv", "config.txt"] {
            assert!(out.join(f).is_file(), "{net}: {f}");
        }
        let o = flowcnn(&["inspect", p(&out.join("last.ckpt"))]);
        assert_ok(&o);
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("after epoch 2"), "{text}");
        assert!(text.lines().any(|l| l.eq_ignore_ascii_case(net)), "{text}");
    }
}

#[test]
fn training_with_missing_flow_directory_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = [SyntheticScene { name: "alley_1".into(), frames: 3, shift: (1.0, 0.0) }];
    write_sintel_tree(dir.path(), &scenes, 16, 16, 0).unwrap();
    std::fs::remove_dir_all(dir.path().join("flow")).unwrap();
    let o = flowcnn(&["train", "--data", p(dir.path()), "--out", p(&dir.path().join("run")), "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(p(&dir.path().join("flow"))), "{}", stderr(&o));
}

#[test]
fn blockmatch_recovers_integer_shift_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = textured_pair(40, 40, (2.0, -1.0), 1.0, 8);
    let (fa, fb) = (dir.path().join("a.png"), dir.path().join("b.png"));
    write_png(&fa, &a.to_rgb8()).unwrap();
    write_png(&fb, &b.to_rgb8()).unwrap();
    let (o1, o2) = (dir.path().join("1.flo"), dir.path().join("2.flo"));
    for out in [&o1, &o2] {
        let mut args = vec!["blockmatch", p(&fa), p(&fb), p(out)];
        args.extend(BM);
        assert_ok(&flowcnn(&args));
    }
    assert_eq!(std::fs::read(&o1).unwrap(), std::fs::read(&o2).unwrap());
    let flow = read_flo(&o1).unwrap();
    for y in 10..30 {
        for x in 10..30 {
            assert_eq!(flow.get(x, y), (2.0, -1.0));
        }
    }
}

fn read_ppm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let text = String::from_utf8_lossy(&bytes[..20]).into_owned();
    let fields: Vec<&str> = text.split_whitespace().take(4).collect();
    assert_eq!(fields[0], "P6");
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    let pixels = bytes[bytes.len() - 3 * w * h..].to_vec();
    (w, h, pixels)
}

#[test]
fn viz_renders_zero_flow_white_and_invalid_black() {
    let dir = tempfile::tempdir().unwrap();
    let mut flow = FlowField::zeros(7, 5);
    flow.set_valid(3, 2, false);
    let f = dir.path().join("z.flo");
    write_flo(&f, &flow).unwrap();
    let out = dir.path().join("z.ppm");
    assert_ok(&flowcnn(&["viz", p(&f), p(&out), "--max-mag", "4"]));
    let (w, h, px) = read_ppm(&out);
    assert_eq!((w, h), (7, 5));
    assert_eq!(&px[(2 * 7 + 3) * 3..][..3], &[0, 0, 0]);
    assert_eq!(&px[..3], &[255, 255, 255]);
    let o = flowcnn(&["viz", p(&f), p(&out), "--max-mag", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infer_viz_matches_frame_size() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = textured_pair(21, 13, (1.0, 1.0), 2.0, 2);
    let (fa, fb) = (dir.path().join("a.png"), dir.path().join("b.png"));
    write_png(&fa, &a.to_rgb8()).unwrap();
    write_png(&fb, &b.to_rgb8()).unwrap();
    let ckpt = dir.path().join("n.ckpt");
    save_network(&ckpt, &build_finalnet::<f32>(1)).unwrap();
    let (flo, ppm) = (dir.path().join("o.flo"), dir.path().join("o.ppm"));
    let mut args = vec!["infer", p(&ckpt), p(&fa), p(&fb), p(&flo), "--viz", p(&ppm)];
    args.extend(BM);
    assert_ok(&flowcnn(&args));
    let flow = read_flo(&flo).unwrap();
    assert_eq!((flow.width(), flow.height()), (21, 13));
    let (w, h, _) = read_ppm(&ppm);
    assert_eq!((w, h), (21, 13));
}

#[test]
fn inspect_prints_shapes() {
    let o = flowcnn(&["inspect", "--net", "finalnet", "--input", "64x48"]);
    assert_ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("maxpool"));
    assert!(text.contains("-> 4x3x256"), "{text}");
    assert!(text.contains("-> 64x48x2"), "{text}");
}
