use dlscf_core::dataset::{Dataset, Split};
use dlscf_core::dlflip::DlFlipDecoder;
use dlscf_core::lstm::{load_checkpoint, save_checkpoint, CheckpointHeader, LstmNet, NetworkConfig};
use dlscf_core::polar::{CodeConfig, Crc};
use dlscf_core::sc::{first_error_index, sc_decode, FlipSet, Kernel};
use dlscf_core::training::{
    dataset_loss, feature_encode, gen_stage1_dataset, gen_stage2_dataset, train_stage2, train_supervised, NetScorer,
    StageConfig,
};
use dlscf_core::trial::Trial;
use dlscf_core::{snr_to_sigma, RngStream};

fn code64() -> CodeConfig {
    CodeConfig::new(64, 32, Crc::CRC8, 1.0).unwrap()
}

fn small_stage() -> StageConfig {
    StageConfig {
        training_size: 1000,
        validation_size: 200,
        minibatch: 50,
        epochs: 1,
        iterations: 1,
        dropout: 0.0,
        input_chunk: 8,
        learning_rate: 3e-3,
        lr_halving_epochs: 0,
        budget: 5,
    }
}

fn small_net(code: &CodeConfig, seed: u64) -> LstmNet<f32> {
    let cfg = NetworkConfig::new(1, 24, 8, code.nonfrozen_count() + 1);
    LstmNet::new(cfg, &RngStream::new(seed, 0)).unwrap()
}

#[test]
fn stage1_labels_replay_from_trial_ids() {
    let code = code64();
    let stream = RngStream::new(51, 0);
    let ds = gen_stage1_dataset(&code, 1.0, 300, &stream, Split::Training).unwrap();
    assert_eq!(ds.len(), 300);
    assert_eq!(ds.undo_fraction(), 0.0);
    assert!(ds.samples.windows(2).all(|w| w[0].trial_id < w[1].trial_id));
    let sigma = snr_to_sigma(1.0, code.rate()).unwrap();
    for s in &ds.samples {
        let t = Trial::generate(&code, sigma, &stream, u64::from(s.trial_id));
        let r = sc_decode(&t.llr, &code, &FlipSet::empty(), Kernel::Exact).unwrap();
        assert!(!r.crc_ok);
        let first = first_error_index(&r.u_hat, &t.u, &code).unwrap();
        assert_eq!(code.info_positions()[s.label as usize], first);
        assert_eq!(s.features, feature_encode(&r.trace));
    }
    // Every skipped id decoded correctly.
    let last = ds.samples.last().unwrap().trial_id;
    let labelled: std::collections::HashSet<u32> = ds.samples.iter().map(|s| s.trial_id).collect();
    for id in (0..=last).filter(|id| !labelled.contains(id)).take(200) {
        let t = Trial::generate(&code, sigma, &stream, u64::from(id));
        assert!(sc_decode(&t.llr, &code, &FlipSet::empty(), Kernel::Exact).unwrap().crc_ok);
    }
}

#[test]
fn datasets_roundtrip_through_files() {
    let code = code64();
    let ds = gen_stage1_dataset(&code, 1.5, 50, &RngStream::new(52, 0), Split::Validation).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("val.bin");
    ds.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), ds);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(Dataset::load(&path).is_err());
}

#[test]
fn tiny_set_can_be_memorised() {
    let code = code64();
    let mut train = gen_stage1_dataset(&code, 1.0, 100, &RngStream::new(53, 0), Split::Training).unwrap();
    train.samples.truncate(100);
    let stage = StageConfig { minibatch: 100, epochs: 500, learning_rate: 1e-2, ..small_stage() };
    let net = LstmNet::new(NetworkConfig::new(1, 64, 8, 33), &RngStream::new(1, 0)).unwrap();
    let empty = Dataset::new(&code, 1.0, Split::Validation, true);
    let out = train_supervised(net, &train, &empty, &stage, &RngStream::new(53, 1)).unwrap();
    let loss = dataset_loss(&out.net, &train).unwrap();
    assert!(loss < 0.01, "training loss {loss}");
}

#[test]
fn one_epoch_lowers_validation_loss_and_is_reproducible() {
    let code = code64();
    let train = gen_stage1_dataset(&code, 1.0, 2000, &RngStream::new(54, 0), Split::Training).unwrap();
    let val = gen_stage1_dataset(&code, 1.0, 300, &RngStream::new(54, 1), Split::Validation).unwrap();
    let stage = StageConfig { dropout: 0.05, ..small_stage() };
    let run = || train_supervised(small_net(&code, 2), &train, &val, &stage, &RngStream::new(54, 2)).unwrap();
    let a = run();
    assert!(a.curve[0].validation_loss < a.initial_validation_loss, "{:?} vs {}", a.curve, a.initial_validation_loss);
    let b = run();
    assert_eq!(a.net, b.net);
    assert_eq!(a.curve, b.curve);
}

#[test]
fn training_rejects_mismatched_shapes() {
    let code = code64();
    let other = CodeConfig::new(64, 40, Crc::CRC8, 1.0).unwrap();
    let train = gen_stage1_dataset(&other, 1.0, 20, &RngStream::new(55, 0), Split::Training).unwrap();
    let val = Dataset::new(&other, 1.0, Split::Validation, true);
    assert!(train_supervised(small_net(&code, 3), &train, &val, &small_stage(), &RngStream::new(55, 1)).is_err());
    assert!(NetScorer::new(small_net(&code, 3), &other).is_err());
}

/// Label oracle: an attempt is on the right track iff it decoded correctly
/// at least up to its last flipped bit.
fn oracle_label(code: &CodeConfig, trial: &Trial, flips: &FlipSet, u_hat: &[u8]) -> u16 {
    let first = first_error_index(u_hat, &trial.u, code).unwrap();
    match flips.max_index() {
        Some(last) if first <= last => code.nonfrozen_count() as u16,
        _ => code.info_slot(first).unwrap() as u16,
    }
}

#[test]
fn stage2_labels_match_the_prefix_oracle() {
    let code = code64();
    let scorer = NetScorer::new(small_net(&code, 4), &code).unwrap();
    let stream = RngStream::new(56, 0);
    let ds = gen_stage2_dataset(&scorer, &code, 1.0, 600, 5, &stream, Split::Training).unwrap();
    assert!(ds.len() >= 600 && ds.len() < 605);
    let undo = ds.undo_fraction();
    assert!(undo > 0.0 && undo < 1.0, "undo fraction {undo}");
    for s in &ds.samples {
        let hot = s.one_hot(code.nonfrozen_count() + 1);
        assert_eq!(hot.iter().sum::<f64>(), 1.0);
        assert_eq!(hot[s.label as usize], 1.0);
    }

    let sigma = snr_to_sigma(1.0, code.rate()).unwrap();
    for group in ds.groups() {
        let id = ds.samples[group.start].trial_id;
        let trial = Trial::generate(&code, sigma, &stream, u64::from(id));
        let out = DlFlipDecoder::new(&scorer, 5).decode(&trial.llr, &code).unwrap();
        let want: Vec<u16> = out
            .log
            .attempts
            .iter()
            .filter(|a| !a.result.crc_ok)
            .map(|a| oracle_label(&code, &trial, &a.flips, &a.result.u_hat))
            .collect();
        let got: Vec<u16> = ds.samples[group].iter().map(|s| s.label).collect();
        assert_eq!(got, want, "trial {id}");
    }
}

#[test]
fn zero_iterations_leave_the_network_alone() {
    let code = code64();
    let net = small_net(&code, 5);
    let stage = StageConfig { iterations: 0, ..small_stage() };
    let out = train_stage2(net.clone(), &code, 1.0, &stage, &RngStream::new(57, 0)).unwrap();
    assert_eq!(out.net, net);
    assert!(out.iterations.is_empty());
}

#[test]
fn stage2_iteration_reports_progress() {
    let code = code64();
    let stage = StageConfig { training_size: 300, validation_size: 100, ..small_stage() };
    let out = train_stage2(small_net(&code, 6), &code, 1.0, &stage, &RngStream::new(58, 0)).unwrap();
    assert_eq!(out.iterations.len(), 1);
    let it = &out.iterations[0];
    assert!(it.training_samples >= 300);
    assert!(it.undo_fraction > 0.0 && it.undo_fraction < 1.0);
    assert!(it.validation_loss.is_finite());
}

#[test]
fn checkpoint_roundtrip_keeps_scores() {
    let code = code64();
    let net = small_net(&code, 7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&path, CheckpointHeader::of(&code), &net).unwrap();
    let (header, back) = load_checkpoint(&path).unwrap();
    header.check(&code).unwrap();
    assert!(header.check(&CodeConfig::new(128, 64, Crc::CRC8, 1.0).unwrap()).is_err());
    assert_eq!(back, net);
    let features = vec![0.3f32; 64];
    assert_eq!(back.score(&features).unwrap(), net.score(&features).unwrap());
}
