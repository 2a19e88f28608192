//! End-to-end tests of the `timelinear` binary: spawn the real executable
//! and check artifacts, stdout and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use timelinear::forecaster::TimeLinear;
use timelinear::train::MetricsRecord;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_timelinear"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Write a small hourly two-variable CSV starting 2021-01-01 00:00.
fn write_csv(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("toy.csv");
    let mut text = String::from("date,a,OT\n");
    let (mut month, mut day, mut hour) = (1u32, 1u32, 0u32);
    let lengths = [31u32, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    for i in 0..n {
        let w = 2.0 * std::f64::consts::PI * i as f64 / 24.0;
        text.push_str(&format!(
            "2021-{month:02}-{day:02} {hour:02}:00:00,{},{}\n",
            w.sin() + 0.002 * i as f64,
            w.cos() - 0.001 * i as f64,
        ));
        hour += 1;
        if hour == 24 {
            hour = 0;
            day += 1;
            if day > lengths[(month - 1) as usize] {
                day = 1;
                month += 1;
            }
        }
    }
    std::fs::write(&path, text).expect("write csv");
    path
}

#[test]
fn train_writes_all_artifacts_and_the_model_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_csv(tmp.path(), 260);
    let out_dir = tmp.path().join("run");
    let out = run(bin()
        .arg("train")
        .args(["--data", csv.to_str().unwrap()])
        .args(["--split", "ratio"])
        .args(["--seq-len", "12"])
        .args(["--pred-len", "4"])
        .args(["--epochs", "2"])
        .args(["--seed", "7"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for file in ["model.bin", "train_log.csv", "metrics.json", "config.txt"] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }
    let records = MetricsRecord::read_json(&out_dir.join("metrics.json")).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!((records[0].seq_len, records[0].pred_len), (12, 4));
    assert_eq!(records[0].seed, 7);
    assert!(records[0].mse.is_finite());
    let model = TimeLinear::load(&out_dir.join("model.bin")).unwrap();
    assert_eq!(model.config().seq_len, 12);
    assert!(stdout(&out).contains("seed 7:"));
}

#[test]
fn flags_override_config_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_csv(tmp.path(), 260);
    let conf = tmp.path().join("toy.conf");
    std::fs::write(
        &conf,
        format!(
            "data = {}\nsplit = ratio\nseq_len = 12\npred_len = 4\n\
             epochs = 2\nbatch = 16\nseed = 3\n",
            csv.display()
        ),
    )
    .unwrap();
    let out_dir = tmp.path().join("run");
    let out = run(bin()
        .arg("train")
        .args(["--config", conf.to_str().unwrap()])
        .args(["--seq-len", "16"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let recorded = std::fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(recorded.contains("seq_len = 16"), "flag should win: {recorded}");
    assert!(recorded.contains("pred_len = 4"), "file value should hold: {recorded}");
    assert!(recorded.contains("batch = 16"), "file value should hold: {recorded}");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("bad.conf");
    std::fs::write(&conf, "learning_rate = 0.1\n").unwrap();
    let out = run(bin()
        .arg("train")
        .args(["--config", conf.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("unknown setting"));
}

#[test]
fn multi_seed_training_summarizes_and_records_every_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_csv(tmp.path(), 260);
    let out_dir = tmp.path().join("run");
    let out = run(bin()
        .arg("train")
        .args(["--data", csv.to_str().unwrap()])
        .args(["--split", "ratio"])
        .args(["--seq-len", "12"])
        .args(["--pred-len", "4"])
        .args(["--epochs", "2"])
        .args(["--seeds", "1,2"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(out_dir.join("model_1.bin").is_file());
    assert!(out_dir.join("model_2.bin").is_file());
    let records = MetricsRecord::read_json(&out_dir.join("metrics.json")).unwrap();
    assert_eq!(records.len(), 2);
    assert!(stdout(&out).contains("mean over 2 seeds"));
}

#[test]
fn ablate_decoder_tabulates_all_six_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_csv(tmp.path(), 260);
    let out_dir = tmp.path().join("run");
    let out = run(bin()
        .arg("ablate-decoder")
        .args(["--data", csv.to_str().unwrap()])
        .args(["--split", "ratio"])
        .args(["--seq-len", "12"])
        .args(["--pred-len", "4"])
        .args(["--epochs", "1"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv_text = std::fs::read_to_string(out_dir.join("ablate_decoder.csv")).unwrap();
    let lines: Vec<&str> = csv_text.lines().collect();
    assert_eq!(lines.len(), 7, "header + six variants: {csv_text}");
    assert_eq!(lines[0], "variant,label,beta,mse,mae");
    assert!(lines[6].starts_with("6,full,"));
}

#[test]
fn ablate_features_covers_the_grid_with_a_stampless_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_csv(tmp.path(), 260);
    let out_dir = tmp.path().join("run");
    let out = run(bin()
        .arg("ablate-features")
        .args(["--data", csv.to_str().unwrap()])
        .args(["--split", "ratio"])
        .args(["--seq-len", "12"])
        .args(["--pred-len", "4"])
        .args(["--epochs", "1"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv_text = std::fs::read_to_string(out_dir.join("ablate_features.csv")).unwrap();
    let lines: Vec<&str> = csv_text.lines().collect();
    assert_eq!(lines.len(), 10, "header + nine feature sets: {csv_text}");
    assert!(lines[1].starts_with("x,1,"), "baseline pins beta to one: {}", lines[1]);
    assert!(lines[9].starts_with("H_D_M_S,"));
}

#[test]
fn acf_detects_the_daily_cycle_on_hourly_data() {
    let out = run(bin()
        .arg("acf")
        .args(["--data", data_dir().join("ETTh2.csv").to_str().unwrap()])
        .args(["--column", "OT"])
        .args(["--max-lag", "48"]));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("0,1.000000"), "rho_0 must be 1: {text}");
    assert!(text.contains("dominant peak: lag 24"), "{text}");
}

#[test]
fn acf_downsampling_rescales_the_period() {
    // Two-hour blocks halve the daily period: the peak moves from 24 to 12.
    let out = run(bin()
        .arg("acf")
        .args(["--data", data_dir().join("ETTh2.csv").to_str().unwrap()])
        .args(["--column", "OT"])
        .args(["--max-lag", "24"])
        .args(["--downsample", "2"]));
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("dominant peak: lag 12"), "{}", stdout(&out));
}

#[test]
fn unknown_column_is_a_usage_error_listing_the_names() {
    let out = run(bin()
        .arg("acf")
        .args(["--data", data_dir().join("ETTh2.csv").to_str().unwrap()])
        .args(["--column", "NOPE"]));
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("NOPE") && err.contains("OT"), "{err}");
}

#[test]
fn bad_variant_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = write_csv(tmp.path(), 260);
    let out = run(bin()
        .arg("train")
        .args(["--data", csv.to_str().unwrap()])
        .args(["--variant", "7"]));
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("variant"));
}
