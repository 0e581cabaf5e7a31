use flowcnn::blockmatch::BlockMatchConfig;
use flowcnn::data::synthetic::{write_middlebury_tree, write_sintel_tree, SyntheticScene};
use flowcnn::data::{load_middlebury, load_sintel, SintelPass, SintelSubset, SplitList};
use flowcnn::Error;

const SINTEL_SCENES: [(&str, usize); 23] = [
    ("alley_1", 49),
    ("alley_2", 49),
    ("ambush_2", 20),
    ("ambush_4", 32),
    ("ambush_5", 49),
    ("ambush_6", 19),
    ("ambush_7", 49),
    ("bamboo_1", 49),
    ("bamboo_2", 49),
    ("bandage_1", 49),
    ("bandage_2", 49),
    ("cave_2", 49),
    ("cave_4", 49),
    ("market_2", 49),
    ("market_5", 49),
    ("market_6", 39),
    ("mountain_1", 49),
    ("shaman_2", 49),
    ("shaman_3", 49),
    ("sleeping_1", 49),
    ("sleeping_2", 49),
    ("temple_2", 49),
    ("temple_3", 49),
];

fn bm() -> BlockMatchConfig {
    BlockMatchConfig { block_size: 3, search_radius: 1, step: 4 }
}

fn full_sintel(root: &std::path::Path) {
    let scenes: Vec<SyntheticScene> = SINTEL_SCENES
        .iter()
        .map(|&(name, pairs)| SyntheticScene { name: name.into(), frames: pairs + 1, shift: (1.0, 0.5) })
        .collect();
    write_sintel_tree(root, &scenes, 8, 8, 0).unwrap();
}

#[test]
fn sintel_split_sizes() {
    let dir = tempfile::tempdir().unwrap();
    full_sintel(dir.path());
    let split = SplitList::default();
    let count = |pass, subset| load_sintel(dir.path(), pass, subset, &split, bm()).unwrap().len();
    assert_eq!(count(SintelPass::Clean, SintelSubset::All), 1041);
    assert_eq!(count(SintelPass::Clean, SintelSubset::Train), 900);
    assert_eq!(count(SintelPass::Clean, SintelSubset::Validation), 141);
    assert_eq!(count(SintelPass::Final, SintelSubset::Validation), 141);

    let val = load_sintel(dir.path(), SintelPass::Clean, SintelSubset::Validation, &split, bm()).unwrap();
    let train = load_sintel(dir.path(), SintelPass::Clean, SintelSubset::Train, &split, bm()).unwrap();
    for e in val.entries() {
        assert!(!train.entries().iter().any(|t| t.id == e.id), "{} in both subsets", e.id);
    }
    assert!(val.entries().iter().any(|e| e.id == "cave_4/frame_0029"));
    assert!(train.entries().iter().any(|e| e.id == "cave_4/frame_0028"));
}

#[test]
fn sintel_order_is_deterministic_and_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = [
        SyntheticScene { name: "b_scene".into(), frames: 4, shift: (0.0, 1.0) },
        SyntheticScene { name: "a_scene".into(), frames: 3, shift: (1.0, 0.0) },
    ];
    write_sintel_tree(dir.path(), &scenes, 8, 8, 1).unwrap();
    let split = SplitList::parse("").unwrap();
    let load = || load_sintel(dir.path(), SintelPass::Final, SintelSubset::All, &split, bm()).unwrap();
    let ids: Vec<String> = load().entries().iter().map(|e| e.id.clone()).collect();
    assert_eq!(
        ids,
        ["a_scene/frame_0001", "a_scene/frame_0002", "b_scene/frame_0001", "b_scene/frame_0002", "b_scene/frame_0003"]
    );
    assert_eq!(load().entries(), load().entries());
    let s = load().load(0).unwrap();
    assert_eq!(s.gt_flow.unwrap().get(3, 3), (1.0, 0.0));
    assert_eq!((s.frame1.width(), s.frame1.height()), (8, 8));
}

#[test]
fn middlebury_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let names = ["Dimetrodon", "Grove2", "Grove3", "Hydrangea", "RubberWhale", "Urban2", "Urban3", "Venus"];
    let seqs: Vec<(&str, (f32, f32))> = names.iter().map(|&n| (n, (0.5, -0.5))).collect();
    write_middlebury_tree(dir.path(), &seqs, 12, 10, 3).unwrap();
    let ds = load_middlebury(dir.path(), bm()).unwrap();
    assert_eq!(ds.len(), 8);
    assert!(ds.all_have_gt());
    let ids: Vec<&str> = ds.entries().iter().map(|e| e.id.as_str()).collect();
    assert_eq!(ids, names);
    let s = ds.load(7).unwrap();
    assert_eq!((s.width(), s.height()), (12, 10));
}

#[test]
fn missing_flow_directory_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = [SyntheticScene { name: "alley_1".into(), frames: 3, shift: (0.0, 0.0) }];
    write_sintel_tree(dir.path(), &scenes, 8, 8, 0).unwrap();
    std::fs::remove_dir_all(dir.path().join("flow")).unwrap();
    let err = load_sintel(dir.path(), SintelPass::Clean, SintelSubset::All, &SplitList::default(), bm())
        .unwrap_err();
    assert!(matches!(err, Error::Load(_)));
    assert!(err.to_string().contains(&dir.path().join("flow").display().to_string()), "{err}");
}

#[test]
fn missing_flow_file_names_pair() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = [SyntheticScene { name: "alley_1".into(), frames: 3, shift: (0.0, 0.0) }];
    write_sintel_tree(dir.path(), &scenes, 8, 8, 0).unwrap();
    std::fs::remove_file(dir.path().join("flow/alley_1/frame_0002.flo")).unwrap();
    let err = load_sintel(dir.path(), SintelPass::Clean, SintelSubset::All, &SplitList::default(), bm())
        .unwrap_err();
    assert!(err.to_string().contains("alley_1/frame_0002"), "{err}");
}

#[test]
fn missing_middlebury_root() {
    let err = load_middlebury("/nonexistent/middlebury", bm()).unwrap_err();
    assert!(matches!(err, Error::Load(_)));
    assert!(err.to_string().contains("/nonexistent/middlebury"));
}
