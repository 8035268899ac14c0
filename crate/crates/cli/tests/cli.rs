use std::fs;
use std::path::Path;
use std::process::Command;

use advspeech::corpus::AttackGrid;
use advspeech::defense::Variant;
use advspeech_cli::{
    read_heldout, read_results, AttackSetting, ExperimentConfig, Layout, Runner, System,
};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_advspeech"));
    c.env("RUST_LOG", "warn");
    c
}

/// Every stage at toy size.
fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out: out.to_path_buf(),
        ..Default::default()
    };
    cfg.corpus.vocab_size = 8;
    cfg.corpus.n_train = 24;
    cfg.corpus.n_test = 6;
    cfg.corpus.words_max = 4;
    cfg.asr.channels = 12;
    cfg.asr_train.epochs = 2;
    cfg.asr_train.average_last = 0;
    cfg.attacks.train_utterances = 8;
    cfg.attacks.heldout_utterances = 4;
    cfg.attacks.grid = AttackGrid {
        iterations: vec![2],
        ..AttackGrid::default()
    };
    cfg.denoiser.layers = 2;
    cfg.denoiser_train.epochs = 1;
    cfg.finetune.epochs = 1;
    cfg.finetune.max_utterances = 8;
    cfg.finetune.inner_iterations = 2;
    cfg.evaluation.attacks = vec![AttackSetting {
        name: "PGD-2".into(),
        iterations: 2,
        epsilons: vec![1e-9, 0.05],
    }];
    cfg.evaluation.boxplot_exclude_epsilon = None;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, cfg.to_toml().unwrap()).unwrap();
    p
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "seed = 1\n[corpus]\nvocab_sise = 20\n").unwrap();
    let st = bin()
        .args(["show-config", "--config"])
        .arg(&p)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn invalid_value_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "[smoothing]\nsigma = -1.0\n").unwrap();
    let st = bin()
        .args(["show-config", "--config"])
        .arg(&p)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("train-asr")
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth-corpus"));
    let st = bin()
        .arg("evaluate")
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(3));
}

#[test]
fn show_config_roundtrips() {
    let out = bin().arg("show-config").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        ExperimentConfig::from_toml(&text).unwrap(),
        ExperimentConfig::default()
    );
    assert!(text.contains("sigma = 0.001\n"), "{text}");
}

#[test]
fn tiny_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = tiny(&out);
    let p = write_config(dir.path(), &cfg);
    let st = bin()
        .arg("pipeline")
        .arg("--config")
        .arg(&p)
        .args(["--workers", "2"])
        .status()
        .unwrap();
    assert!(st.success());

    let layout = Layout::new(&out);
    for f in [
        layout.snapshot(),
        layout.timings(),
        layout.results(),
        layout.boxplot(),
        layout.heldout_mrstft(),
    ] {
        assert!(f.exists(), "{}", f.display());
    }
    for v in [Variant::AsrOnly, Variant::Joint] {
        assert!(layout.finetuned(v).join("asr/meta.json").exists());
    }
    assert!(layout
        .finetuned(Variant::JointFrozen)
        .join("denoiser/meta.json")
        .exists());
    assert!(!layout.finetuned(Variant::JointFrozen).join("asr").exists());

    let rows = read_results(&layout.results()).unwrap();
    assert_eq!(rows.len(), System::ALL.len() * 2);
    for r in &rows {
        assert_eq!(r.n_failed, 0);
        assert_eq!(r.n_utts, 6);
        // without input noise, a vanishing budget leaves every transcript where it was
        if r.epsilon == "0.000000001" && !r.system.contains("RS") {
            assert_eq!(r.gt_wer, r.benign_wer, "{r:?}");
        }
    }
    assert_eq!(read_heldout(&layout.heldout_mrstft()).unwrap().len(), 4);

    // same seeds, same tables
    let again = dir.path().join("again");
    let st = bin()
        .arg("pipeline")
        .arg("--config")
        .arg(&p)
        .arg("--out")
        .arg(&again)
        .status()
        .unwrap();
    assert!(st.success());
    let other = Layout::new(&again);
    for (a, b) in [
        (layout.results(), other.results()),
        (layout.boxplot(), other.boxplot()),
        (layout.heldout_mrstft(), other.heldout_mrstft()),
    ] {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }

    // a rerun without --overwrite skips finished stages
    let before = fs::read(layout.timings()).unwrap();
    let st = bin()
        .arg("pipeline")
        .arg("--config")
        .arg(&p)
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(fs::read(layout.timings()).unwrap(), before);
}

#[test]
fn finetune_refuses_to_run_before_the_denoiser() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = Runner::new(tiny(&dir.path().join("run")), false).unwrap();
    r.synth_corpus().unwrap();
    r.train_asr().unwrap();
    r.finetune(Variant::AsrOnly).unwrap();
    let err = r.finetune(Variant::Joint).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
