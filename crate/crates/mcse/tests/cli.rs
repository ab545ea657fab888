use std::path::Path;
use std::process::{Command, Output};

fn mcse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcse")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(csv: &Path) -> Vec<(f64, f64, f64)> {
    std::fs::read_to_string(csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

#[test]
fn absorbing_walls_give_a_single_impulse_per_channel() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = mcse(&["simulate-rir", "--room-dims", "5,4,3", "--source-pos", "1,1,1.5", "--t60", "0", "--output-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (rir, side) = mcse::rir::import_rir(&out.join("rir.wav")).unwrap();
    for (h, d) in rir.channels.iter().zip(&side.direct_path_delays) {
        let nonzero: Vec<usize> = (0..h.len()).filter(|&i| h[i] != 0.0).collect();
        assert_eq!(nonzero, vec![*d]);
    }
    assert!(out.join("config.resolved.json").is_file());
}

#[test]
fn random_rirs_reproduce_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mcse(&["simulate-rir", "--seed", "42", "--count", "2", "--output-dir", p(&out), "--jobs", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for i in 0..2 {
        for role in ["target", "noise"] {
            for ext in ["wav", "json"] {
                let f = format!("scene_{i:04}_{role}.{ext}");
                assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
            }
        }
    }
}

#[test]
fn invalid_geometry_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = mcse(&["simulate-rir", "--room-dims", "5,4,3", "--source-pos", "6,1,1", "--output-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("source_pos"), "{}", stderr(&o));
    let o = mcse(&["simulate-rir", "--room-dims=-5,4,3", "--source-pos", "1,1,1", "--output-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("room_dims"), "{}", stderr(&o));
    let o = mcse(&["simulate-rir", "--set", "t60_range=[0.5,0.1]", "--output-dir", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("t60_range"), "{}", stderr(&o));
}

#[test]
fn exit_codes_follow_the_contract() {
    assert_eq!(mcse(&["--help"]).status.code(), Some(0));
    assert_eq!(mcse(&["simulate-rir", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mcse(&[]).status.code(), Some(1));
    let o = mcse(&["beamform", "--set", "nonsense=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nonsense"));
    let o = mcse(&["beamform", "--manifest", "/nonexistent/manifest.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/manifest.json"));
    let o = mcse(&["evaluate", "--manifest", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(1), "outputs or --noisy is required");
}

#[test]
fn config_precedence_is_cli_then_file_then_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("bp");
    std::fs::write(&cfg, r#"{"angle_step_deg": 10, "freq_step_hz": 500, "weights": "delay-and-sum"}"#).unwrap();
    let o = mcse(&["beampattern", "--config", p(&cfg), "--freq-step-hz", "1000", "--output-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["angle_step_deg"], 10.0);
    assert_eq!(resolved["freq_step_hz"], 1000.0);
    assert_eq!(resolved["weights"], "delay-and-sum");
    assert_eq!(resolved["target_doa_deg"], 125.0);
    assert_eq!(rows(&out.join("beampattern.csv")).len(), 19 * 9);

    std::fs::write(&cfg, r#"{"count": "many"}"#).unwrap();
    let o = mcse(&["synth-dataset", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`count`"), "{}", stderr(&o));
    std::fs::write(&cfg, r#"{"cuont": 3}"#).unwrap();
    let o = mcse(&["synth-dataset", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cuont"));
}

#[test]
fn mvdr_beampattern_points_at_target_and_nulls_interferer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bp");
    let o = mcse(&["beampattern", "--output-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = rows(&out.join("beampattern.csv"));
    assert_eq!(table.len(), 181 * 33);
    for f in [1000.0, 1500.0, 2000.0, 2500.0, 3000.0] {
        let col: Vec<(f64, f64)> = table.iter().filter(|r| r.1 == f).map(|r| (r.0, r.2)).collect();
        let max = col.iter().cloned().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        let min = col.iter().cloned().fold((0.0, f64::MAX), |a, b| if b.1 < a.1 { b } else { a });
        let at55 = col.iter().find(|r| r.0 == 55.0).unwrap().1;
        assert!((max.0 - 125.0).abs() <= 10.0, "{f} Hz: max at {}", max.0);
        assert!((min.0 - 55.0).abs() <= 10.0, "{f} Hz: min at {}", min.0);
        assert!(at55 <= max.1 - 20.0, "{f} Hz: {at55} vs {}", max.1);
    }
}

#[test]
fn reference_weights_give_a_flat_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bp");
    let o = mcse(&["beampattern", "--weights", "reference", "--angle-step-deg", "5", "--output-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = rows(&out.join("beampattern.csv"));
    assert_eq!(table.len(), 37 * 33);
    assert!(table.iter().all(|r| r.2.abs() < 1e-12));
}

#[test]
fn end_to_end_dataset_beamform_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let enh = dir.path().join("enh");
    let rep = dir.path().join("rep");
    let o = mcse(&["synth-dataset", "--count", "3", "--duration-s", "0.5", "--seed", "3", "--output-dir", p(&ds)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = mcse(&["beamform", "--manifest", p(&ds), "--mode", "ti-mvdr", "--dump-weights", "--output-dir", p(&enh)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = mcse(&["evaluate", "--manifest", p(&ds.join("manifest.json")), "--outputs", p(&enh), "--output-dir", p(&rep)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("3 utterances"));
    let bp = dir.path().join("bp");
    let w = enh.join("scene_0000.weights.bin");
    let o = mcse(&["beampattern", "--weights-file", p(&w), "--angle-step-deg", "10", "--output-dir", p(&bp)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(rows(&bp.join("beampattern.csv")).len(), 19 * 33);
}
