//! File formats end to end: grid CSV and manifest, heatmap SVG, dataset
//! JSON lines, checkpoints and training traces.

use benign_xor::data::{build_basis, sample_dataset, DataConfig, Dataset};
use benign_xor::decomposition::DecompositionTracker;
use benign_xor::experiments::{
    emit_csv, emit_svg, read_csv, run_grid, truncate_heatmap, write_svg, FixedParams, GridMode, GridSpec, HeatGrid, Manifest, Palette,
};
use benign_xor::model::{init_weights, CnnWeights};
use benign_xor::rng::{stream_rng, Stream};
use benign_xor::train::{train, TrainConfig};

fn small_spec(seed: u64) -> GridSpec {
    GridSpec {
        mode: GridMode::FixNVaryD,
        axis1: vec![20.0, 60.0],
        axis2: vec![0.5, 2.0, 8.0],
        fixed: FixedParams { n: 16, m: 4, epochs: 20, n_test: 200, ..FixedParams::default() },
        base_seed: seed,
        repeats: 2,
    }
}

fn svg_cells(svg: &str) -> Vec<(usize, usize, String)> {
    let doc = roxmltree::Document::parse(svg).expect("well-formed SVG");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    doc.descendants()
        .filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("cell"))
        .map(|n| {
            (
                n.attribute("data-i").unwrap().parse().unwrap(),
                n.attribute("data-j").unwrap().parse().unwrap(),
                n.attribute("fill").unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn grid_is_identical_across_worker_counts() {
    let spec = small_spec(3);
    let one = run_grid(&spec, 1).unwrap();
    let four = run_grid(&spec, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    emit_csv(&one.results, &a).unwrap();
    emit_csv(&four.results, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn grid_csv_and_manifest_round_trip() {
    let spec = small_spec(5);
    let run = run_grid(&spec, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    emit_csv(&run.results, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "mode,i,j,axis1,axis2,mu_norm,accuracy,stderr,train_loss_final,seed,error");
    assert_eq!(text.lines().count(), 1 + spec.rows() * spec.cols());

    let back = read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back.len(), run.results.len());
    for (x, y) in back.iter().zip(&run.results) {
        assert_eq!((x.i, x.j, x.seed), (y.i, y.j, y.seed));
        assert_eq!(x.accuracy.to_bits(), y.accuracy.to_bits());
        assert_eq!(x.mu_norm.to_bits(), y.mu_norm.to_bits());
    }

    let mut buf = Vec::new();
    run.manifest.write(&mut buf).unwrap();
    let manifest = Manifest::read(buf.as_slice()).unwrap();
    assert_eq!(manifest, run.manifest);
    assert_eq!(manifest.cells, spec.rows() * spec.cols());
}

#[test]
fn heatmap_svg_has_one_rect_per_cell() {
    let run = run_grid(&small_spec(9), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heat.svg");
    emit_svg(&run.results, &path, Palette::Continuous).unwrap();
    let svg = std::fs::read_to_string(&path).unwrap();
    let mut cells: Vec<(usize, usize)> = svg_cells(&svg).into_iter().map(|(i, j, _)| (i, j)).collect();
    cells.sort_unstable();
    let expected: Vec<(usize, usize)> = (0..2).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
    assert_eq!(cells, expected);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let labels = doc.descendants().filter(|n| n.attribute("class") == Some("axis-label")).count();
    assert_eq!(labels, 2);
}

#[test]
fn truncated_heatmap_uses_two_colours() {
    let run = run_grid(&small_spec(11), 2).unwrap();
    let trunc = truncate_heatmap(&run.results, 0.7).unwrap();
    assert!(trunc.values.iter().all(|&v| v == 0.0 || v == 1.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trunc.svg");
    write_svg(&trunc, &path, Palette::Binary, "accuracy >= 0.7").unwrap();
    let fills: std::collections::BTreeSet<String> = svg_cells(&std::fs::read_to_string(&path).unwrap()).into_iter().map(|c| c.2).collect();
    assert!(fills.is_subset(&["#2b59c3".to_string(), "#f5d547".to_string()].into()));
}

#[test]
fn failed_cells_render_as_missing() {
    let mut results = run_grid(&small_spec(13), 1).unwrap().results;
    results[0].accuracy = f64::NAN;
    results[0].error = Some("diverged".into());
    let grid = HeatGrid::from_results(&results).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.svg");
    write_svg(&grid, &path, Palette::Continuous, "with a failure").unwrap();
    let cells = svg_cells(&std::fs::read_to_string(&path).unwrap());
    let first = cells.iter().find(|c| c.0 == results[0].i && c.1 == results[0].j).unwrap();
    assert_eq!(first.2, "#bbbbbb");

    let csv = dir.path().join("g.csv");
    emit_csv(&results, &csv).unwrap();
    let back = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(back[0].error.as_deref(), Some("diverged"));
    assert!(back[0].accuracy.is_nan());
}

fn tiny_dataset(seed: u64) -> Dataset<f64> {
    let basis = build_basis::<f64, _>(12, 2.0, 0.8, &mut stream_rng(seed, Stream::Basis)).unwrap();
    sample_dataset(&basis, &DataConfig { n: 10, sigma_p: 1.0, flip_p: 0.1, seed }, &mut stream_rng(seed, Stream::Data)).unwrap()
}

#[test]
fn dataset_json_lines_round_trip_exactly() {
    let ds = tiny_dataset(21);
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf).unwrap();
    let back = Dataset::<f64>::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.points, ds.points);
    assert_eq!(back.basis, ds.basis);
    let mut again = Vec::new();
    back.write_jsonl(&mut again).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn training_outputs_are_reproducible() {
    let ds = tiny_dataset(22);
    let w0 = init_weights::<f64, _>(3, 12, 0.1, &mut stream_rng(22, Stream::Init)).unwrap();
    let cfg = TrainConfig { eta: 0.5, epochs: 30, record_every: 5, ..TrainConfig::default() };
    let run = || {
        let mut dt = DecompositionTracker::new(3, &ds);
        let trace = train(&ds, w0.clone(), &cfg, &mut [&mut dt]).unwrap();
        let (mut t, mut d, mut c) = (Vec::new(), Vec::new(), Vec::new());
        trace.write_csv(&mut t).unwrap();
        dt.write_csv(&mut d).unwrap();
        trace.weights_final.write_checkpoint(&mut c).unwrap();
        (t, d, c)
    };
    let (t1, d1, c1) = run();
    let (t2, d2, c2) = run();
    assert_eq!((&t1, &d1, &c1), (&t2, &d2, &c2));
    // step 0 plus every fifth step through 30
    assert_eq!(String::from_utf8(t1).unwrap().lines().count(), 1 + 7);
    let w = CnnWeights::<f64>::read_checkpoint(c1.as_slice()).unwrap();
    assert_eq!(w.step, 30);
}
