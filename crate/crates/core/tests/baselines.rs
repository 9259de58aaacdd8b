use dlscf_core::baselines::{dscf_flip_order, dscf_metric, magnitude_flip_order, AlphaTable, DscfDecoder};
use dlscf_core::polar::{CodeConfig, Crc};
use dlscf_core::sc::{sc_decode, FlipSet, Kernel};
use dlscf_core::trial::Trial;
use dlscf_core::{snr_to_sigma, RngStream};

fn code64() -> CodeConfig {
    CodeConfig::new(64, 32, Crc::CRC8, 1.0).unwrap()
}

/// D-SCF with an unbounded candidate list re-sorted before every pop.
fn reference_dscf(llr: &[f64], code: &CodeConfig, alpha: f64, t_max: usize) -> Vec<FlipSet> {
    let first = sc_decode(llr, code, &FlipSet::empty(), Kernel::Exact).unwrap();
    let mut tried = vec![FlipSet::empty()];
    if first.crc_ok || t_max == 1 {
        return tried;
    }
    let mut pool: Vec<(FlipSet, f64)> = code
        .info_positions()
        .iter()
        .map(|&j| {
            let s = FlipSet::from_indices([j]);
            let m = dscf_metric(&first.trace, &s, alpha, code).unwrap();
            (s, m)
        })
        .collect();
    while tried.len() < t_max && !pool.is_empty() {
        let best = (0..pool.len())
            .min_by(|&a, &b| pool[a].1.total_cmp(&pool[b].1).then_with(|| pool[a].0.cmp(&pool[b].0)))
            .unwrap();
        let (set, _) = pool.swap_remove(best);
        let r = sc_decode(llr, code, &set, Kernel::Exact).unwrap();
        tried.push(set.clone());
        if r.crc_ok {
            break;
        }
        if set.len() < t_max - 1 {
            let last = set.max_index().unwrap();
            for &j in code.info_positions().iter().filter(|&&j| j > last) {
                let child = set.with(j);
                let m = dscf_metric(&r.trace, &child, alpha, code).unwrap();
                pool.push((child, m));
            }
        }
    }
    tried
}

#[test]
fn dscf_matches_unbounded_reference() {
    let code = code64();
    let sigma = snr_to_sigma(1.0, code.rate()).unwrap();
    let stream = RngStream::new(31, 0);
    for (alpha, t_max) in [(0.7, 5), (0.3, 8), (1.2, 3)] {
        let decoder = DscfDecoder::new(alpha, t_max);
        for id in 0..400 {
            let t = Trial::generate(&code, sigma, &stream, id);
            let got = decoder.decode(&t.llr, &code).unwrap();
            assert_eq!(got.attempts, reference_dscf(&t.llr, &code, alpha, t_max), "trial {id}");
            let last = sc_decode(&t.llr, &code, got.attempts.last().unwrap(), Kernel::Exact).unwrap();
            assert_eq!(got.result, last);
        }
    }
}

#[test]
fn single_attempt_is_plain_sc() {
    let code = code64();
    let sigma = snr_to_sigma(1.0, code.rate()).unwrap();
    let stream = RngStream::new(32, 0);
    for id in 0..300 {
        let t = Trial::generate(&code, sigma, &stream, id);
        let sc = sc_decode(&t.llr, &code, &FlipSet::empty(), Kernel::Exact).unwrap();
        let d = DscfDecoder::new(0.7, 1).decode(&t.llr, &code).unwrap();
        assert_eq!(d.result, sc);
        assert_eq!(d.attempts.len(), 1);
    }
}

#[test]
fn dscf_attempts_are_unique_and_bounded() {
    let code = code64();
    let sigma = snr_to_sigma(0.5, code.rate()).unwrap();
    let stream = RngStream::new(33, 0);
    for id in 0..300 {
        let t = Trial::generate(&code, sigma, &stream, id);
        let d = DscfDecoder::new(0.5, 6).decode(&t.llr, &code).unwrap();
        assert!(d.attempts.len() <= 6);
        let mut seen = d.attempts.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), d.attempts.len());
    }
}

#[test]
fn metric_reduces_to_magnitude_plus_penalty() {
    let code = CodeConfig::with_frozen_set(8, 4, Crc::new(1, 1).unwrap(), 1.0, &[0, 1, 2, 4]).unwrap();
    let trace = [0.0, 0.0, 0.0, 2.0, 0.0, -0.5, 1.0, 3.0];
    let alpha = 0.5;
    // {6}: |ᾱ6| + (1/α)(ln(1+e^{-α·2}) + ln(1+e^{-α·0.5}))
    let want = 1.0 + ((1.0 + (-1.0f64).exp()).ln() + (1.0 + (-0.25f64).exp()).ln()) / alpha;
    let got = dscf_metric(&trace, &FlipSet::from_indices([6]), alpha, &code).unwrap();
    assert!((got - want).abs() < 1e-12);
    assert!(dscf_metric(&trace, &FlipSet::empty(), alpha, &code).is_err());
    assert!(dscf_metric(&trace, &FlipSet::from_indices([6]), 0.0, &code).is_err());

    // Large α ranks like the plain magnitude order.
    let order = dscf_flip_order(&trace, &code, 50.0, 4).singleton_indices();
    assert_eq!(order, magnitude_flip_order(&trace, &code, 4).singleton_indices());
}

#[test]
fn alpha_table_roundtrip() {
    let mut table = AlphaTable::default();
    table.insert(64, 32, 1.0, 0.7);
    table.insert(64, 32, 2.5, 0.4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alpha.txt");
    table.save(&path).unwrap();
    let back = AlphaTable::load(&path).unwrap();
    assert_eq!(back, table);
    assert_eq!(back.get(64, 32, 1.0), Some(0.7));
    assert_eq!(back.get(64, 32, 1.5), None);
    assert!(AlphaTable::parse("64 32 1.0\n").is_err());
}
