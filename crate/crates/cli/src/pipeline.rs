//! Stages of an experiment and the on-disk layout they share.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use advspeech::asr::{train, AsrModel};
use advspeech::attack::{AttackSpec, ModelChain};
use advspeech::corpus::{
    generate_offline_attacks, synthesize_corpus, AttackDataset, Corpus, OfflineConfig,
};
use advspeech::defense::{
    adv_finetune_asr, adv_finetune_joint, adv_finetune_joint_frozen, Variant,
};
use advspeech::denoiser::{train_offline, Denoiser, TasNet};
use advspeech::signal::MrStftLoss;
use advspeech::wer::{evaluate_cell, summarize_boxplot, CellOptions, Setting, Target};
use serde::Serialize;

use crate::config::{ExperimentConfig, Stage};
use crate::error::CliError;
use crate::systems::System;

type Result<T> = std::result::Result<T, CliError>;

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn snapshot(&self) -> PathBuf {
        self.root.join("config.resolved.toml")
    }

    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn baseline(&self) -> PathBuf {
        self.root.join("models/baseline")
    }

    pub fn attacks_train(&self) -> PathBuf {
        self.root.join("attacks/train")
    }

    pub fn attacks_heldout(&self) -> PathBuf {
        self.root.join("attacks/heldout")
    }

    pub fn denoiser(&self) -> PathBuf {
        self.root.join("models/denoiser")
    }

    pub fn finetuned(&self, variant: Variant) -> PathBuf {
        self.root
            .join(format!("models/adv_finetune_{}", variant.as_str()))
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results/wer.csv")
    }

    pub fn boxplot(&self) -> PathBuf {
        self.root.join("results/boxplot.csv")
    }

    pub fn heldout_mrstft(&self) -> PathBuf {
        self.root.join("results/denoiser_heldout.csv")
    }
}

/// One line of `wer.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub system: String,
    pub attack: String,
    pub norm: String,
    pub epsilon: String,
    pub iterations: usize,
    pub benign_wer: String,
    pub gt_wer: String,
    pub tgt_wer: String,
    pub n_utts: usize,
    pub n_failed: usize,
}

#[derive(Debug, Serialize)]
struct BoxRow {
    system: String,
    n_settings: usize,
    min: String,
    q1: String,
    median: String,
    q3: String,
    max: String,
}

/// One line of `denoiser_heldout.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct HeldoutRow {
    pub utt_id: String,
    pub norm: String,
    pub epsilon: String,
    pub iterations: usize,
    pub raw_mrstft: f32,
    pub denoised_mrstft: f32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalSummary {
    pub cells: usize,
    pub partial_cells: usize,
}

fn wer_cell(v: f64) -> String {
    format!("{v:.2}")
}

pub struct Runner {
    pub cfg: ExperimentConfig,
    pub layout: Layout,
    overwrite: bool,
    timings: BTreeMap<String, f64>,
}

impl Runner {
    /// Validates the config and writes its resolved snapshot.
    pub fn new(cfg: ExperimentConfig, overwrite: bool) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg.out);
        fs::create_dir_all(&layout.root)?;
        fs::write(layout.snapshot(), cfg.to_toml()?)?;
        let timings = fs::read(layout.timings())
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default();
        Ok(Self {
            cfg,
            layout,
            overwrite,
            timings,
        })
    }

    /// Runs `body` unless `marker` exists (and overwriting is off).
    fn stage(
        &mut self,
        name: &str,
        marker: &Path,
        clear: &[PathBuf],
        body: impl FnOnce(&Self) -> Result<()>,
    ) -> Result<()> {
        if marker.exists() && !self.overwrite {
            log::info!(
                "{name}: {} exists, skipping (pass --overwrite to redo)",
                marker.display()
            );
            return Ok(());
        }
        for dir in clear {
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
        }
        log::info!("{name}: running");
        let t0 = Instant::now();
        body(self)?;
        let secs = t0.elapsed().as_secs_f64();
        log::info!("{name}: done in {secs:.1}s");
        self.timings.insert(name.to_string(), secs);
        fs::write(
            self.layout.timings(),
            serde_json::to_vec_pretty(&self.timings)?,
        )?;
        Ok(())
    }

    fn need(path: PathBuf, what: &'static str, stage: &'static str) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(CliError::MissingArtifact { what, stage, path })
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let dir = Self::need(self.layout.corpus(), "corpus", "synth-corpus")?;
        Ok(Corpus::load(&dir)?)
    }

    pub fn load_baseline(&self) -> Result<AsrModel> {
        let dir = Self::need(self.layout.baseline(), "baseline recognizer", "train-asr")?;
        Ok(AsrModel::load(&dir)?)
    }

    pub fn load_denoiser(&self) -> Result<TasNet> {
        let dir = Self::need(self.layout.denoiser(), "denoiser", "train-denoiser")?;
        Ok(TasNet::load(&dir)?)
    }

    fn load_finetuned_asr(&self, variant: Variant) -> Result<AsrModel> {
        let dir = Self::need(
            self.layout.finetuned(variant).join("asr"),
            "fine-tuned recognizer",
            "finetune",
        )?;
        Ok(AsrModel::load(&dir)?)
    }

    fn load_finetuned_denoiser(&self, variant: Variant) -> Result<TasNet> {
        let dir = Self::need(
            self.layout.finetuned(variant).join("denoiser"),
            "fine-tuned denoiser",
            "finetune",
        )?;
        Ok(TasNet::load(&dir)?)
    }

    pub fn synth_corpus(&mut self) -> Result<()> {
        let dir = self.layout.corpus();
        self.stage(
            "synth-corpus",
            &dir.join("corpus.json"),
            std::slice::from_ref(&dir),
            |r| {
                let mut cc = r.cfg.corpus.clone();
                cc.seed = r.cfg.stage_seed(Stage::Corpus);
                synthesize_corpus(&cc)?.save(&dir)?;
                Ok(())
            },
        )
    }

    pub fn train_asr(&mut self) -> Result<()> {
        let dir = self.layout.baseline();
        self.stage(
            "train-asr",
            &dir.join("meta.json"),
            std::slice::from_ref(&dir),
            |r| {
                let corpus = r.load_corpus()?;
                let mut model = AsrModel::new(
                    r.cfg.asr.clone(),
                    corpus.vocab.clone(),
                    r.cfg.stage_seed(Stage::AsrInit),
                )?;
                let mut tc = r.cfg.asr_train.clone();
                tc.seed = r.cfg.stage_seed(Stage::AsrTrain);
                let log = train(&mut model, &corpus.train, &tc)?;
                log::info!("train-asr: epoch losses {:?}", log.epoch_losses);
                model.save(&dir)?;
                Ok(())
            },
        )
    }

    fn offline_config(&self, max_utterances: usize, split: &str) -> OfflineConfig {
        OfflineConfig {
            grid: self.cfg.attacks.grid.clone(),
            max_utterances,
            seed: advspeech::seed::derive_seed(self.cfg.stage_seed(Stage::Attacks), split),
        }
    }

    pub fn gen_attacks(&mut self) -> Result<()> {
        let (train_dir, held_dir) = (self.layout.attacks_train(), self.layout.attacks_heldout());
        let marker = held_dir.join("manifest.jsonl");
        self.stage(
            "gen-attacks",
            &marker,
            &[train_dir.clone(), held_dir.clone()],
            |r| {
                let corpus = r.load_corpus()?;
                let asr = r.load_baseline()?;
                let a = &r.cfg.attacks;
                let train = generate_offline_attacks(
                    &asr,
                    &corpus,
                    &corpus.train,
                    &r.offline_config(a.train_utterances, "train"),
                )?;
                train.save(&train_dir)?;
                let held = generate_offline_attacks(
                    &asr,
                    &corpus,
                    &corpus.test,
                    &r.offline_config(a.heldout_utterances, "heldout"),
                )?;
                held.save(&held_dir)?;
                log::info!(
                    "gen-attacks: {} training and {} held-out pairs",
                    train.rows.len(),
                    held.rows.len()
                );
                Ok(())
            },
        )
    }

    pub fn train_denoiser(&mut self) -> Result<()> {
        let dir = self.layout.denoiser();
        let report = self.layout.heldout_mrstft();
        self.stage(
            "train-denoiser",
            &dir.join("meta.json"),
            std::slice::from_ref(&dir),
            |r| {
                let corpus = r.load_corpus()?;
                let load = |p: PathBuf| -> Result<AttackDataset> {
                    let p = Self::need(p, "attack dataset", "gen-attacks")?;
                    Ok(AttackDataset::load(&p)?)
                };
                let train_set = load(r.layout.attacks_train())?;
                let held = load(r.layout.attacks_heldout())?;
                let pairs: Vec<(Vec<f32>, Vec<f32>)> = train_set
                    .pairs(&corpus)?
                    .into_iter()
                    .map(|p| (p.clean, p.attacked))
                    .collect();
                let mut den = TasNet::new(
                    r.cfg.denoiser.clone(),
                    r.cfg.stage_seed(Stage::DenoiserInit),
                )?;
                let mut tc = r.cfg.denoiser_train.clone();
                tc.seed = r.cfg.stage_seed(Stage::DenoiserTrain);
                let log = train_offline(&mut den, &pairs, &tc)?;
                log::info!(
                    "train-denoiser: loss {} -> best {:?} (epoch {:?})",
                    log.initial_loss,
                    log.eval_losses
                        .iter()
                        .cloned()
                        .fold(f32::INFINITY, f32::min),
                    log.best_epoch
                );
                den.save(&dir)?;
                write_heldout(&report, &corpus, &held, &den, &tc.mrstft)?;
                Ok(())
            },
        )
    }

    pub fn finetune(&mut self, variant: Variant) -> Result<()> {
        let dir = self.layout.finetuned(variant);
        let marker = match variant {
            Variant::JointFrozen => dir.join("denoiser/meta.json"),
            _ => dir.join("asr/meta.json"),
        };
        self.stage(
            &format!("finetune-{}", variant.as_str()),
            &marker,
            std::slice::from_ref(&dir),
            |r| {
                let corpus = r.load_corpus()?;
                let mut asr = r.load_baseline()?;
                let mut fc = r.cfg.finetune.clone();
                fc.seed = advspeech::seed::derive_seed(
                    r.cfg.stage_seed(Stage::Finetune),
                    variant.as_str(),
                );
                fc.signal_scale = corpus.signal_scale();
                let log = match variant {
                    Variant::AsrOnly => {
                        let log = adv_finetune_asr(&mut asr, &corpus.train, &fc)?;
                        asr.save(&dir.join("asr"))?;
                        log
                    }
                    Variant::Joint => {
                        let mut den = r.load_denoiser()?;
                        let log = adv_finetune_joint(&mut den, &mut asr, &corpus.train, &fc)?;
                        asr.save(&dir.join("asr"))?;
                        den.save(&dir.join("denoiser"))?;
                        log
                    }
                    Variant::JointFrozen => {
                        let mut den = r.load_denoiser()?;
                        let log = adv_finetune_joint_frozen(&mut den, &asr, &corpus.train, &fc)?;
                        den.save(&dir.join("denoiser"))?;
                        log
                    }
                };
                log::info!(
                    "finetune-{}: epoch losses {:?}",
                    variant.as_str(),
                    log.epoch_losses
                );
                Ok(())
            },
        )
    }

    pub fn evaluate(&mut self) -> Result<EvalSummary> {
        let mut summary = EvalSummary::default();
        let marker = self.layout.results();
        let results_dir = self.layout.root.join("results");
        fs::create_dir_all(&results_dir)?;
        self.stage("evaluate", &marker, &[], |r| {
            summary = r.run_evaluation()?;
            Ok(())
        })?;
        if summary.partial_cells > 0 {
            return Err(CliError::PartialCells(summary.partial_cells));
        }
        Ok(summary)
    }

    fn run_evaluation(&self) -> Result<EvalSummary> {
        let ev = &self.cfg.evaluation;
        let corpus = self.load_corpus()?;
        let utts = match ev.max_utterances {
            0 => &corpus.test[..],
            n => &corpus.test[..n.min(corpus.test.len())],
        };
        let seed = self.cfg.stage_seed(Stage::Evaluate);
        let targets: Vec<Target> = utts
            .iter()
            .map(|u| corpus.target_for(u, seed))
            .collect::<advspeech::Result<_>>()?;
        let needs = |s: &[System]| ev.systems.iter().any(|x| s.contains(x));
        let base = self.load_baseline()?;
        let den = if needs(&[System::Denoiser, System::DenoiserNonAdaptive]) {
            Some(self.load_denoiser()?)
        } else {
            None
        };
        let ft_asr = if needs(&[System::AdvFinetuneAsr]) {
            Some(self.load_finetuned_asr(Variant::AsrOnly)?)
        } else {
            None
        };
        let joint = if needs(&[System::AdvFinetuneJoint]) {
            Some((
                self.load_finetuned_asr(Variant::Joint)?,
                self.load_finetuned_denoiser(Variant::Joint)?,
            ))
        } else {
            None
        };
        let frozen = if needs(&[System::AdvFinetuneJointFrozen]) {
            Some(self.load_finetuned_denoiser(Variant::JointFrozen)?)
        } else {
            None
        };
        let rs = self.cfg.smoothing;
        let sigma = rs.sigma;
        let scale = corpus.signal_scale();
        let mut rows = Vec::new();
        let mut settings = Vec::new();
        let mut summary = EvalSummary::default();
        for system in &ev.systems {
            let chain = match system {
                System::Baseline => ModelChain::new(&base),
                System::BaselineRs => ModelChain::new(&base).with_smoothing(rs),
                System::DenoiserNonAdaptive => ModelChain::new(&base)
                    .with_denoiser(den.as_ref().expect("loaded") as &dyn Denoiser)
                    .non_adaptive(),
                System::Denoiser => ModelChain::new(&base)
                    .with_denoiser(den.as_ref().expect("loaded") as &dyn Denoiser)
                    .with_smoothing(rs),
                System::AdvFinetuneAsr => {
                    ModelChain::new(ft_asr.as_ref().expect("loaded")).with_smoothing(rs)
                }
                System::AdvFinetuneJoint => {
                    let (a, d) = joint.as_ref().expect("loaded");
                    ModelChain::new(a)
                        .with_denoiser(d as &dyn Denoiser)
                        .with_smoothing(rs)
                }
                System::AdvFinetuneJointFrozen => ModelChain::new(&base)
                    .with_denoiser(frozen.as_ref().expect("loaded") as &dyn Denoiser)
                    .with_smoothing(rs),
            };
            let label = system.label(sigma);
            for attack in &ev.attacks {
                for &eps in &attack.epsilons {
                    let budget = eps * scale;
                    let spec = if attack.iterations == 1 {
                        AttackSpec::fgsm(budget, ev.mode)?
                    } else {
                        AttackSpec::pgd(ev.norm, budget, attack.iterations, ev.mode)?
                    };
                    let t0 = Instant::now();
                    let report =
                        evaluate_cell(&chain, utts, &spec, Some(&targets), CellOptions { seed })?;
                    log::info!(
                        "evaluate: {label} {} eps {eps}: benign {:.2} gt {:.2} tgt {} ({:.1}s)",
                        attack.name,
                        report.benign_wer(),
                        report.gt_wer(),
                        report.tgt_wer().map(wer_cell).unwrap_or_default(),
                        t0.elapsed().as_secs_f64()
                    );
                    summary.cells += 1;
                    if report.is_partial() {
                        summary.partial_cells += 1;
                    }
                    settings.push(Setting {
                        system: label.clone(),
                        epsilon: eps,
                        gt_wer: report.gt_wer(),
                    });
                    rows.push(ResultRow {
                        system: label.clone(),
                        attack: attack.name.clone(),
                        norm: ev.norm.to_string(),
                        epsilon: eps.to_string(),
                        iterations: attack.iterations,
                        benign_wer: wer_cell(report.benign_wer()),
                        gt_wer: wer_cell(report.gt_wer()),
                        tgt_wer: report.tgt_wer().map(wer_cell).unwrap_or_default(),
                        n_utts: report.n_utts,
                        n_failed: report.failures.len(),
                    });
                }
            }
        }
        let mut w = csv::Writer::from_path(self.layout.results())?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(self.layout.boxplot())?;
        for (system, b) in summarize_boxplot(&settings, ev.boxplot_exclude_epsilon) {
            w.serialize(BoxRow {
                system,
                n_settings: b.n,
                min: wer_cell(b.min),
                q1: wer_cell(b.q1),
                median: wer_cell(b.median),
                q3: wer_cell(b.q3),
                max: wer_cell(b.max),
            })?;
        }
        w.flush()?;
        Ok(summary)
    }

    /// Every stage in order.
    pub fn pipeline(&mut self) -> Result<EvalSummary> {
        self.synth_corpus()?;
        self.train_asr()?;
        self.gen_attacks()?;
        self.train_denoiser()?;
        for v in [Variant::AsrOnly, Variant::Joint, Variant::JointFrozen] {
            self.finetune(v)?;
        }
        self.evaluate()
    }
}

fn write_heldout(
    path: &Path,
    corpus: &Corpus,
    held: &AttackDataset,
    den: &TasNet,
    mrstft: &advspeech::signal::MrStftConfig,
) -> Result<()> {
    use rayon::prelude::*;
    let loss = MrStftLoss::new(mrstft)?;
    let pairs = held.pairs(corpus)?;
    let rows: Vec<advspeech::Result<HeldoutRow>> = pairs
        .par_iter()
        .zip(&held.rows)
        .map(|(p, r)| {
            Ok(HeldoutRow {
                utt_id: p.utt_id.clone(),
                norm: r.meta.norm.to_string(),
                epsilon: r.meta.epsilon.to_string(),
                iterations: r.meta.iterations,
                raw_mrstft: loss.value(&p.clean, &p.attacked)?,
                denoised_mrstft: loss.value(&p.clean, &den.denoise(&p.attacked)?)?,
            })
        })
        .collect();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row?)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `wer.csv` back.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Reads `denoiser_heldout.csv` back.
pub fn read_heldout(path: &Path) -> Result<Vec<HeldoutRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
