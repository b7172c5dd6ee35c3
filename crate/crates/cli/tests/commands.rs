use std::fs;
use std::path::{Path, PathBuf};

use wban_cli::{
    cmd_opcount, cmd_randomness, cmd_simulate, cmd_vectors, CliError, OpcountFormat, RunConfig, Scheme, VectorMode,
};

fn config(out: &Path) -> RunConfig {
    RunConfig {
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../vectors/golden.txt")
}

#[test]
fn simulate_lossless_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_simulate(&RunConfig {
        frames: Some(100),
        ..config(dir.path())
    })
    .unwrap();
    assert_eq!(report.summary.iamkeys_accepted, 100);
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("iamkeys accepted: 100/100"));
    let log = fs::read_to_string(dir.path().join("trace.log")).unwrap();
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(log.lines().count() + 1, csv.lines().count());
    assert!(csv.starts_with("slot,actor,event,detail\n"));
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        cmd_simulate(&RunConfig {
            loss: Some(0.1),
            seed: Some(77),
            ..config(dir.path())
        })
        .unwrap();
    }
    for name in ["trace.log", "trace.csv", "summary.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
}

#[test]
fn simulate_rejects_bad_loss() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_simulate(&RunConfig {
        loss: Some(1.5),
        ..config(dir.path())
    })
    .unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert!(!dir.path().join("trace.log").exists());
}

#[test]
fn script_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("scenario.txt");
    fs::write(&script, "# short run\nframes = 12\nseed = 3\ndrop_data = 4,5\n").unwrap();
    let cfg = RunConfig {
        script: Some(script),
        seed: Some(9),
        ..config(dir.path())
    };
    let scenario = cfg.scenario().unwrap();
    assert_eq!((scenario.frames, scenario.seed), (12, 9));
    let report = cmd_simulate(&cfg).unwrap();
    assert_eq!(report.summary.drops, 2);

    let missing = RunConfig {
        script: Some(dir.path().join("nope.txt")),
        ..config(dir.path())
    };
    assert!(matches!(missing.scenario(), Err(CliError::Io { .. })));
}

#[test]
fn randomness_rows_and_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_randomness(&config(dir.path())).unwrap();
    let iamkeys: Vec<_> = report.rows_for(Scheme::Iamkeys).collect();
    assert_eq!(iamkeys.len(), 100);
    assert!(iamkeys
        .iter()
        .all(|r| r.index < 5 && r.field < 4 && (1..=5).contains(&r.variant)));
    let csv = fs::read_to_string(dir.path().join("randomness.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("scheme,frame,index,field,variant"));
    assert_eq!(csv.lines().count(), 201);
    let chis = report.chi_squares();
    assert!(chis.iter().all(|(_, c)| c.is_some()));
    assert_eq!(chis[2].1.unwrap().df, 15);
}

#[test]
fn randomness_single_frame_omits_chi_square() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_randomness(&RunConfig {
        frames: Some(1),
        ..config(dir.path())
    })
    .unwrap();
    assert_eq!(report.rows_for(Scheme::Iamkeys).count(), 1);
    assert!(report.chi_squares().iter().all(|(_, c)| c.is_none()));
    let text = fs::read_to_string(dir.path().join("randomness.txt")).unwrap();
    assert!(text.contains("omitted"));
}

#[test]
fn opcount_text_and_csv_agree() {
    let text = cmd_opcount(OpcountFormat::Text);
    let csv = cmd_opcount(OpcountFormat::Csv);
    for (e, d) in [(240, 197), (242, 199), (244, 201), (93, 51), (94, 52)] {
        assert!(csv.lines().any(|l| l.ends_with(&format!(",{e},{d}"))), "{e},{d}");
        assert!(text
            .lines()
            .any(|l| l.split_whitespace().rev().take(2).eq([d.to_string(), e.to_string()])));
    }
}

#[test]
fn vectors_generate_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.txt");
    let n = cmd_vectors(VectorMode::Generate, &path).unwrap();
    assert_eq!(cmd_vectors(VectorMode::Verify, &path).unwrap(), n);
}

#[test]
fn checked_in_vectors_verify() {
    cmd_vectors(VectorMode::Verify, &golden()).unwrap();
}

#[test]
fn flipped_digit_names_the_vector() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.txt");
    let text = fs::read_to_string(golden()).unwrap();
    let tampered = text.replace("frame.ack: acdeadbeef", "frame.ack: acdeadbeee");
    assert_ne!(tampered, text);
    fs::write(&path, tampered).unwrap();
    match cmd_vectors(VectorMode::Verify, &path) {
        Err(CliError::Mismatch { names }) => assert_eq!(names, ["frame.ack"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn verify_missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_vectors(VectorMode::Verify, &dir.path().join("absent.txt")).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }));
}

#[test]
fn binary_exit_status() {
    let bin = env!("CARGO_BIN_EXE_wban");
    let dir = tempfile::tempdir().unwrap();
    let ok = std::process::Command::new(bin).arg("opcount").output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("240"));
    let bad = std::process::Command::new(bin)
        .args(["simulate", "--loss", "1.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let missing = std::process::Command::new(bin)
        .args(["vectors", "verify"])
        .arg(dir.path().join("absent.txt"))
        .output()
        .unwrap();
    assert!(!missing.status.success());
}
