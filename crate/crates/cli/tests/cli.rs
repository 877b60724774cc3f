use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use declip_core::audio_io::{read_wav, write_wav, AudioBuffer};
use declip_core::corpus::{write_corpus, CorpusSpec};
use declip_core::SDR_CAP_DB;

fn declip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_declip"))
        .args(args)
        .output()
        .expect("failed to launch declip")
}

fn ok(args: &[&str]) -> String {
    let out = declip(args);
    assert!(
        out.status.success(),
        "declip {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tones(freqs: &[f64], peak: f64, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            freqs
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    (1.0 / (k + 1) as f64)
                        * (std::f64::consts::TAU * f * i as f64 / 16000.0 + k as f64).sin()
                })
                .sum()
        })
        .collect();
    let max = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    raw.iter().map(|v| v * peak / max).collect()
}

fn write(dir: &Path, name: &str, samples: Vec<f64>) -> PathBuf {
    let path = dir.join(name);
    write_wav(&AudioBuffer::new(samples, 16000), &path).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

const HEADER: &str =
    "signal_id,level_db,variant,redundancy,sdr_y,sdr_x_hat,delta_sdr,iterations,wall_time_s,error";

#[test]
fn clip_at_fixed_level() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "sine.wav", tones(&[440.0], 1.0, 4000));
    let clipped = dir.path().join("clipped.wav");
    let mask = dir.path().join("mask.json");
    ok(&[
        "clip",
        s(&clean),
        s(&clipped),
        "--tau",
        "0.5",
        "--mask",
        s(&mask),
    ]);
    let y = read_wav(&clipped, None).unwrap().samples;
    let peak = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert_eq!(peak, 0.5);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&mask).unwrap()).unwrap();
    assert_eq!(sidecar["tau"], 0.5);
    assert!(!sidecar["clipped_pos"].as_array().unwrap().is_empty());
}

#[test]
fn clip_flags_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "sine.wav", tones(&[440.0], 0.9, 2000));
    let out = dir.path().join("o.wav");
    for args in [
        vec!["clip", s(&clean), s(&out)],
        vec!["clip", s(&clean), s(&out), "--sdr", "3", "--tau", "0.2"],
        vec!["clip", s(&clean), s(&out), "--sdr", "-1"],
        vec![
            "clip",
            s(&dir.path().join("missing.wav")),
            s(&out),
            "--sdr",
            "3",
        ],
    ] {
        assert_eq!(declip(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn eval_identity_and_perfect_restoration() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(
        dir.path(),
        "clean.wav",
        tones(&[300.0, 770.0, 1250.0], 0.9, 8000),
    );
    let clipped = dir.path().join("clipped.wav");
    let mask = dir.path().join("mask.json");
    let printed = ok(&[
        "clip",
        s(&clean),
        s(&clipped),
        "--sdr",
        "10",
        "--mask",
        s(&mask),
    ]);
    assert!(printed.contains("SDR_y 10.0"), "{printed}");

    let csv = dir.path().join("eval.csv");
    let base = [
        "eval",
        "--ref",
        s(&clean),
        "--clipped",
        s(&clipped),
        "--mask",
        s(&mask),
    ];
    ok(&[
        &base[..],
        &["--restored", s(&clipped), "--csv", s(&csv), "--id", "same"],
    ]
    .concat());
    ok(&[
        &base[..],
        &["--restored", s(&clean), "--csv", s(&csv), "--id", "perfect"],
    ]
    .concat());

    assert_eq!(
        std::fs::read_to_string(&csv)
            .unwrap()
            .lines()
            .next()
            .unwrap(),
        HEADER
    );
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "same");
    assert_eq!(rows[1][6].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[2][5].parse::<f64>().unwrap(), SDR_CAP_DB);

    // the mask can also be derived from the clipped file itself
    let csv2 = dir.path().join("derived.csv");
    ok(&[
        "eval",
        "--ref",
        s(&clean),
        "--clipped",
        s(&clipped),
        "--restored",
        s(&clipped),
        "--csv",
        s(&csv2),
    ]);
    assert_eq!(csv_rows(&csv2)[1][4], rows[1][4]);
}

#[test]
fn eval_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "clean.wav", tones(&[300.0], 0.9, 4000));
    let short = write(dir.path(), "short.wav", tones(&[300.0], 0.9, 3000));
    let csv = dir.path().join("e.csv");
    let out = declip(&[
        "eval",
        "--ref",
        s(&clean),
        "--clipped",
        s(&clean),
        "--restored",
        s(&short),
        "--csv",
        s(&csv),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // nothing is clipped when the mask says so
    let mask = dir.path().join("mask.json");
    std::fs::write(
        &mask,
        r#"{"tau": 1.0, "clipped_pos": [], "clipped_neg": []}"#,
    )
    .unwrap();
    let out = declip(&[
        "eval",
        "--ref",
        s(&clean),
        "--clipped",
        s(&clean),
        "--restored",
        s(&clean),
        "--mask",
        s(&mask),
        "--csv",
        s(&csv),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn declip_leaves_unclipped_input_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "in.wav",
        tones(&[220.0, 530.0, 1900.0], 0.5, 6000),
    );
    let out = dir.path().join("out.wav");
    ok(&["declip", s(&input), s(&out)]);
    assert_eq!(std::fs::read(&input).unwrap(), std::fs::read(&out).unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.json")).unwrap())
            .unwrap();
    assert_eq!(report["totals"]["clipped_samples"], 0);
    assert_eq!(report["parameters"]["chunk_len"], 1024);
    assert_eq!(report["parameters"]["hop"], 256);
}

#[test]
fn declip_improves_five_tone_signal_at_one_db() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(
        dir.path(),
        "clean.wav",
        tones(&[180.0, 410.0, 660.0, 1130.0, 2020.0], 0.9, 8000),
    );
    let clipped = dir.path().join("clipped.wav");
    let mask = dir.path().join("mask.json");
    ok(&[
        "clip",
        s(&clean),
        s(&clipped),
        "--sdr",
        "1",
        "--mask",
        s(&mask),
    ]);
    let restored = dir.path().join("restored.wav");
    let report = dir.path().join("report.json");
    let printed = ok(&[
        "declip",
        s(&clipped),
        s(&restored),
        "--mask",
        s(&mask),
        "--reference",
        s(&clean),
        "--report",
        s(&report),
        "--variant",
        "s",
        "--redundancy",
        "2",
        "--jobs",
        "2",
    ]);
    assert!(printed.contains("delta"), "{printed}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(report["sdr"]["delta_sdr"].as_f64().unwrap() > 0.0);
    assert_eq!(report["parameters"]["variant"], "synthesis");
    assert_eq!(report["totals"]["anomalies"], 0);
    let histogram_total: u64 = report["iteration_histogram"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(
        histogram_total,
        report["totals"]["chunks"].as_u64().unwrap()
    );
}

#[test]
fn declip_flag_validation() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "in.wav", tones(&[440.0], 0.5, 3000));
    let out = dir.path().join("o.wav");
    for extra in [
        vec!["--redundancy", "3"],
        vec!["--frame", "1000"],
        vec!["--overlap", "1.5"],
        vec!["--variant", "x"],
        vec!["--eps-mode", "percent"],
        vec!["--s", "0"],
        vec!["--jobs", "0"],
        vec!["--tau", "0.3", "--mask", "m.json"],
    ] {
        let args = [&["declip", s(&input), s(&out)][..], &extra[..]].concat();
        assert_eq!(declip(&args).status.code(), Some(2), "{extra:?}");
    }
}

#[test]
fn variants_agree_without_redundancy() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(
        dir.path(),
        "clean.wav",
        tones(&[250.0, 900.0, 1700.0], 0.9, 6000),
    );
    let clipped = dir.path().join("clipped.wav");
    ok(&["clip", s(&clean), s(&clipped), "--sdr", "5"]);
    let a = dir.path().join("a.wav");
    let b = dir.path().join("s.wav");
    ok(&[
        "declip",
        s(&clipped),
        s(&a),
        "--variant",
        "a",
        "--redundancy",
        "1",
    ]);
    ok(&[
        "declip",
        s(&clipped),
        s(&b),
        "--variant",
        "s",
        "--redundancy",
        "1",
    ]);
    let xa = read_wav(&a, None).unwrap().samples;
    let xs = read_wav(&b, None).unwrap().samples;
    let worst = xa
        .iter()
        .zip(&xs)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1.0 / 32768.0, "{worst}");
}

#[test]
fn declip_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write(dir.path(), "clean.wav", tones(&[330.0, 1400.0], 0.9, 5000));
    let clipped = dir.path().join("clipped.wav");
    ok(&["clip", s(&clean), s(&clipped), "--sdr", "3"]);
    let outs: Vec<Vec<u8>> = ["1", "1", "3"]
        .iter()
        .enumerate()
        .map(|(i, jobs)| {
            let out = dir.path().join(format!("out{i}.wav"));
            ok(&["declip", s(&clipped), s(&out), "--jobs", jobs]);
            std::fs::read(&out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
}

fn without_timing(rows: Vec<Vec<String>>) -> Vec<Vec<String>> {
    rows.into_iter()
        .map(|mut r| {
            r.remove(8);
            r
        })
        .collect()
}

#[test]
fn bench_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let spec = CorpusSpec {
        files: 2,
        duration_s: 0.25,
        ..CorpusSpec::default()
    };
    std::fs::create_dir(&corpus).unwrap();
    write_corpus(&spec, &corpus).unwrap();
    std::fs::write(corpus.join("notes.txt"), "not audio").unwrap();

    let run = |name: &str, jobs: &str| {
        let csv = dir.path().join(name);
        ok(&[
            "bench",
            "--corpus",
            s(&corpus),
            "--levels",
            "3,7",
            "--variants",
            "a,s",
            "--redundancies",
            "1",
            "--csv",
            s(&csv),
            "--jobs",
            jobs,
        ]);
        csv_rows(&csv)
    };
    let first = run("a.csv", "1");
    let second = run("b.csv", "1");
    let parallel = run("c.csv", "2");
    assert_eq!(first[0].join(","), HEADER);
    assert_eq!(first.len(), 1 + 2 * 2 * 2);
    assert_eq!(without_timing(first.clone()), without_timing(second));
    assert_eq!(without_timing(first.clone()), without_timing(parallel));

    let body = &first[1..];
    let order: Vec<(&str, &str, &str)> = body
        .iter()
        .map(|r| (r[0].as_str(), r[1].as_str(), r[2].as_str()))
        .collect();
    assert_eq!(order[0], ("synth_00", "3.0", "a"));
    assert_eq!(order[1], ("synth_00", "3.0", "s"));
    assert_eq!(order[2], ("synth_00", "7.0", "a"));
    assert_eq!(order[4], ("synth_01", "3.0", "a"));
    for pair in body.chunks(2) {
        let da: f64 = pair[0][6].parse().unwrap();
        let ds: f64 = pair[1][6].parse().unwrap();
        assert!((da - ds).abs() <= 0.01, "{da} vs {ds}");
        assert!(da > 0.0);
        assert!(pair[0][9].is_empty());
        let sdr_y: f64 = pair[0][4].parse().unwrap();
        let sdr_x: f64 = pair[0][5].parse().unwrap();
        assert!((sdr_x - sdr_y - da).abs() < 1e-9);
    }
}

#[test]
fn bench_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty");
    std::fs::create_dir(&corpus).unwrap();
    let csv = dir.path().join("out.csv");
    let out = declip(&["bench", "--corpus", s(&corpus), "--csv", s(&csv)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert_eq!(
        std::fs::read_to_string(&csv).unwrap(),
        format!("{HEADER}\n")
    );
}

#[test]
fn bench_records_cell_failures() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    write(&corpus, "silent.wav", vec![0.0; 2000]);
    let csv = dir.path().join("out.csv");
    let out = declip(&[
        "bench",
        "--corpus",
        s(&corpus),
        "--levels",
        "3",
        "--variants",
        "a",
        "--redundancies",
        "1,2",
        "--csv",
        s(&csv),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| !r[9].is_empty()));
}

#[test]
fn corpus_command_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let printed = ok(&[
        "corpus",
        s(dir.path()),
        "--files",
        "3",
        "--duration",
        "0.1",
        "--no-noise",
    ]);
    assert!(printed.starts_with('3'));
    for i in 0..3 {
        let buf = read_wav(dir.path().join(format!("synth_{i:02}.wav")), None).unwrap();
        assert_eq!(buf.samples.len(), 1600);
        assert_eq!(buf.sample_rate, 16000);
    }
}
