mod support;

use std::sync::atomic::{AtomicUsize, Ordering};

use advspeech::asr::{asr_loss, AsrConfig, AsrModel, CrossEntropy, Objective, Vocab};
use advspeech::defense::{
    adv_finetune, adv_finetune_asr, adv_finetune_joint_frozen, FinetuneConfig, Variant,
};
use advspeech::denoiser::{Denoiser, DenoiserConfig, IdentityDenoiser, TasNet};
use advspeech::tensor::{Tape, Var};
use advspeech::Error;
use support::{fd_check, rand_vec, rng, tiny_asr, tiny_corpus};

fn small_asr() -> AsrModel {
    let cfg = AsrConfig {
        channels: 6,
        layers: 2,
        kernel: 3,
        ..AsrConfig::default()
    };
    AsrModel::new(cfg, Vocab::phonetic(4).unwrap(), 5).unwrap()
}

fn small_denoiser(seed: u64) -> TasNet {
    let cfg = DenoiserConfig {
        enc_dim: 16,
        enc_kernel: 8,
        enc_stride: 4,
        layers: 2,
        // mild log curvature so finite differences resolve it
        sep_floor: 0.1,
        ..DenoiserConfig::default()
    };
    let mut d = TasNet::new(cfg, seed).unwrap();
    // move away from the identity initialization
    let mut r = rng(seed);
    for t in d.params_mut().tensors_mut() {
        let n = t.numel();
        for (v, e) in t.data_mut().iter_mut().zip(rand_vec(&mut r, n, 0.05)) {
            *v += e;
        }
    }
    d
}

#[test]
fn recognizer_input_gradient_matches_finite_differences() {
    let m = small_asr();
    let x = rand_vec(&mut rng(2), 128, 0.3);
    let err = fd_check(&[(vec![128], x)], 1e-3, 4, |tape: &Tape, v: &[Var]| {
        m.forward(tape, v[0])
    });
    assert!(err < 1e-3, "max relative error {err:.2e}");
}

#[test]
fn recognizer_weight_gradient_matches_finite_differences() {
    let m = small_asr();
    let x = rand_vec(&mut rng(3), 112, 0.3);
    let inputs: Vec<(Vec<usize>, Vec<f32>)> = m
        .params()
        .tensors()
        .iter()
        .map(|t| (t.shape().to_vec(), t.data().to_vec()))
        .collect();
    let err = fd_check(&inputs, 1e-3, 5, |tape: &Tape, params: &[Var]| {
        let xv = tape.input(vec![x.len()], x.clone(), false)?;
        m.forward_with(params, xv)
    });
    assert!(err < 1e-3, "max relative error {err:.2e}");
}

#[test]
fn denoiser_input_gradient_matches_finite_differences() {
    let d = small_denoiser(7);
    let x = rand_vec(&mut rng(8), 96, 0.3);
    let err = fd_check(&[(vec![96], x)], 3e-4, 9, |tape: &Tape, v: &[Var]| {
        d.forward(tape, v[0])
    });
    assert!(err < 1e-3, "max relative error {err:.2e}");
}

#[test]
fn composed_chain_gradient_matches_finite_differences() {
    let m = small_asr();
    let d = small_denoiser(10);
    let x = rand_vec(&mut rng(11), 112, 0.3);
    let labels: Vec<usize> = (0..m.num_frames(112).unwrap()).map(|i| i % 4).collect();
    let err = fd_check(&[(vec![112], x)], 1e-3, 12, |tape: &Tape, v: &[Var]| {
        asr_loss(m.forward(tape, d.forward(tape, v[0])?)?, &labels)
    });
    assert!(err < 1e-3, "max relative error {err:.2e}");
}

#[test]
fn asr_loss_matches_direct_mean() {
    let m = small_asr();
    let x = rand_vec(&mut rng(13), 160, 0.3);
    let lp = m.log_posteriors(&x).unwrap();
    let v = lp.shape()[1];
    let labels: Vec<usize> = (0..lp.shape()[0]).map(|i| (i * 7) % v).collect();
    let expected = labels
        .iter()
        .enumerate()
        .map(|(t, &l)| -(lp.data()[t * v + l] as f64))
        .sum::<f64>()
        / labels.len() as f64;
    let tape = Tape::new();
    let lv = tape.constant(&lp);
    let got = asr_loss(lv, &labels).unwrap().item() as f64;
    assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
}

fn quick_cfg() -> FinetuneConfig {
    FinetuneConfig {
        epochs: 1,
        batch_size: 4,
        inner_iterations: 2,
        max_utterances: 8,
        ..FinetuneConfig::default()
    }
}

#[test]
fn frozen_variant_leaves_recognizer_untouched() {
    let c = tiny_corpus();
    let asr = tiny_asr(&c);
    let before = asr.params().checksum();
    let mut den = TasNet::new(DenoiserConfig::default(), 1).unwrap();
    den.mark_trained(1);
    let den_before = den.params().checksum();
    adv_finetune_joint_frozen(&mut den, &asr, &c.train, &quick_cfg()).unwrap();
    assert_eq!(asr.params().checksum(), before);
    assert_ne!(den.params().checksum(), den_before);
}

#[test]
fn identity_denoiser_joint_equals_recognizer_only() {
    let c = tiny_corpus();
    let asr = tiny_asr(&c);
    let mut a = asr.clone();
    let mut b = asr.clone();
    let la = adv_finetune_asr(&mut a, &c.train, &quick_cfg()).unwrap();
    let mut id = IdentityDenoiser::default();
    let lb = adv_finetune(
        Variant::Joint,
        &mut b,
        Some(&mut id),
        &c.train,
        &quick_cfg(),
        &CrossEntropy,
    )
    .unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.params(), b.params());
}

struct Counting(AtomicUsize);

impl Objective for Counting {
    fn loss<'t>(&self, lp: Var<'t>, labels: &[usize]) -> advspeech::Result<Var<'t>> {
        self.0.fetch_add(1, Ordering::Relaxed);
        CrossEntropy.loss(lp, labels)
    }
}

#[test]
fn inner_attack_and_outer_step_share_one_objective() {
    let c = tiny_corpus();
    let mut asr = tiny_asr(&c);
    let obj = Counting(AtomicUsize::new(0));
    let cfg = FinetuneConfig {
        eps_min: 0.01,
        ..quick_cfg()
    };
    adv_finetune(Variant::AsrOnly, &mut asr, None, &c.train, &cfg, &obj).unwrap();
    // one call per inner iteration plus one for the outer gradient
    let expected = cfg.epochs * cfg.max_utterances * (cfg.inner_iterations + 1);
    assert_eq!(obj.0.load(Ordering::Relaxed), expected);
}

#[test]
fn untrained_models_are_refused() {
    let c = tiny_corpus();
    let mut fresh = AsrModel::new(AsrConfig::default(), c.vocab.clone(), 0).unwrap();
    assert!(matches!(
        adv_finetune_asr(&mut fresh, &c.train, &quick_cfg()),
        Err(Error::NotPretrained(_))
    ));
    let asr = tiny_asr(&c);
    let mut den = TasNet::new(DenoiserConfig::default(), 0).unwrap();
    assert!(matches!(
        adv_finetune_joint_frozen(&mut den, &asr, &c.train, &quick_cfg()),
        Err(Error::NotPretrained(_))
    ));
}

#[test]
fn denoiser_is_deterministic_and_length_preserving() {
    let d = small_denoiser(3);
    for n in [160, 161, 1024] {
        let x = rand_vec(&mut rng(n as u64), n, 0.2);
        let a = d.denoise(&x).unwrap();
        assert_eq!(a.len(), n);
        assert_eq!(a, d.denoise(&x).unwrap());
    }
}
