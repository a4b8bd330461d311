//! The `velgan` binary end to end on a tiny dataset and network.

use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::{Array2, Array3};
use velgan_core::metrics::{EvalConfig, PatchPredictor};
use velgan_core::segy::read_segy;
use velgan_core::PatchPair;
use velgan_harness::pipeline::{self, read_log, read_origins, LOG_FILE};
use velgan_harness::RunConfig;

struct Fixture {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    run: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let f = Self { data: tmp.path().join("data"), run: tmp.path().join("run"), _tmp: tmp };
        let out = f.velgan("synth", &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        f
    }

    fn settings(&self) -> Vec<String> {
        [
            format!("dataset.dir={}", toml_str(&self.data)),
            format!("train.run_dir={}", toml_str(&self.run)),
            "synth.n_inlines=2".into(),
            "synth.n_crosslines=120".into(),
            "synth.n_samples=48".into(),
            "preprocess.crop_top=4".into(),
            "preprocess.patch_size=32".into(),
            "preprocess.n_train=16".into(),
            "preprocess.n_test=8".into(),
            "generator.base_width=8".into(),
            "generator.max_width=32".into(),
            "train.epochs=2".into(),
            "train.eval_every=1".into(),
            "train.checkpoint_every=1".into(),
        ]
        .into()
    }

    fn config(&self, extra: &[&str]) -> RunConfig {
        let mut s = self.settings();
        s.extend(extra.iter().map(|e| e.to_string()));
        RunConfig::load(None, &s).unwrap()
    }

    fn velgan(&self, cmd: &str, extra: &[&str]) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_velgan"));
        c.arg(cmd);
        for s in self.settings().iter().map(String::as_str).chain(extra.iter().copied()) {
            if s.starts_with("--") {
                c.arg(s);
            } else if s.contains('=') {
                c.args(["--set", s]);
            } else {
                c.arg(s);
            }
        }
        c.output().unwrap()
    }

    fn ok(&self, cmd: &str, extra: &[&str]) -> String {
        let out = self.velgan(cmd, extra);
        assert!(out.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8_lossy(&out.stdout).into_owned()
    }
}

fn toml_str(p: &Path) -> String {
    format!("\"{}\"", p.display())
}

#[test]
fn train_evaluate_report_predict() {
    let f = Fixture::new();
    f.ok("train", &[]);
    let rows = read_log(&f.run.join(LOG_FILE)).unwrap();
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2]);
    assert!(rows.iter().all(|r| r.test_pe.is_some() && r.d_loss.is_finite()));
    assert_eq!(read_origins(&f.run.join("origins_train.csv")).unwrap().len(), 16);
    assert_eq!(read_origins(&f.run.join("origins_test.csv")).unwrap().len(), 8);

    // Evaluating the final checkpoint reproduces the logged test metrics.
    let cfg = f.config(&[]);
    let eval = pipeline::cmd_evaluate(&cfg, None, None).unwrap();
    let last = rows.last().unwrap();
    assert!((eval.report.pe_mean - last.test_pe.unwrap()).abs() < 1e-9);
    assert!((eval.report.ssim_mean - last.test_ssim.unwrap()).abs() < 1e-9);
    assert!(f.run.join("eval/summary.csv").exists());
    assert!(f.run.join("eval/histogram.png").exists());
    assert_eq!(eval.panels.len(), 3);
    let stdout = f.ok("evaluate", &[]);
    assert!(stdout.contains(&eval.checkpoint_crc32), "{stdout}");

    f.ok("report", &[]);
    for name in ["pe_vs_epoch.png", "ssim_vs_epoch.png", "adversarial_losses.png", "summary.toml"] {
        assert!(f.run.join("report").join(name).exists(), "{name}");
    }

    let (a, b) = (f.run.join("pred_a.sgy"), f.run.join("pred_b.sgy"));
    f.ok("predict", &["--out", a.to_str().unwrap()]);
    f.ok("predict", &["--out", b.to_str().unwrap()]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let pred = read_segy(&a).unwrap();
    let truth = read_segy(f.data.join("v_int.sgy")).unwrap();
    assert!(pred.same_geometry(&truth));
    let norm = eval.report.norm;
    assert!(pred.samples().iter().all(|v| *v >= norm.x_min - 1e-3 && *v <= norm.x_max + 1e-3));
}

#[test]
fn resume_continues_the_epoch_counter() {
    let f = Fixture::new();
    f.ok("train", &["train.epochs=1"]);
    f.ok("train", &["--resume", "train.epochs=3"]);
    let rows = read_log(&f.run.join(LOG_FILE)).unwrap();
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(rows.windows(2).all(|w| w[1].wall_time_s >= w[0].wall_time_s));

    // Resumed training follows the same trajectory as an uninterrupted run
    // up to float32 storage of the checkpoint.
    let g = Fixture::new();
    g.ok("train", &["train.epochs=3"]);
    let straight = read_log(&g.run.join(LOG_FILE)).unwrap();
    assert_eq!(rows[0].d_loss, straight[0].d_loss);
    assert!((rows[2].g_l1 - straight[2].g_l1).abs() < 1e-3 * straight[2].g_l1.max(1e-3));
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let f = Fixture::new();
    let out = f.velgan("evaluate", &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = f.velgan("train", &["preprocess.channels=2"]);
    assert!(!out.status.success());
    let out = f.velgan("train", &["dataset.dir=\"/nonexistent/velgan\""]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth"));
    let out = f.velgan("train", &["--resume"]);
    assert!(!out.status.success());
}

#[test]
fn tampered_dataset_is_detected() {
    let f = Fixture::new();
    let path = f.data.join("v_int.sgy");
    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    let out = f.velgan("train", &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

/// Returns the stored target of whichever test patch it is shown.
struct Oracle(Vec<PatchPair>);

impl PatchPredictor for Oracle {
    type Error = Infallible;

    fn predict(&mut self, input: &Array3<f64>) -> Result<Array2<f64>, Infallible> {
        Ok(self.0.iter().find(|p| p.input == *input).expect("known patch").target.clone())
    }
}

#[test]
fn perfect_predictor_scores_zero_error_and_unit_ssim() {
    let f = Fixture::new();
    let prep = pipeline::prepare_data(&f.config(&[])).unwrap();
    let report = pipeline::evaluate_patches(
        &mut Oracle(prep.test.clone()),
        &prep.test,
        prep.stats.v_int.norm,
        &EvalConfig::default(),
    )
    .unwrap();
    assert_eq!(report.pe_mean, 0.0);
    assert!((report.ssim_mean - 1.0).abs() < 1e-12);
    let out = tempfile::tempdir().unwrap();
    let panels = pipeline::write_report_files(&report, out.path(), &[]).unwrap();
    assert_eq!(panels.len(), 3);
}

#[test]
fn predict_rejects_a_foreign_grid() {
    let f = Fixture::new();
    f.ok("train", &["train.epochs=1"]);
    let other = Fixture::new();
    other.ok("synth", &["synth.n_crosslines=130"]);
    let ckpt = pipeline::latest_checkpoint(&f.run);
    let out_path = f.run.join("x.sgy");
    let out = other.velgan("predict", &["--checkpoint", ckpt.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("crosslines"));
    assert!(!out_path.exists());
}
