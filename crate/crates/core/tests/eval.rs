use dlscf_core::eval::{
    bler_csv, run_bler_sweep, run_identification_experiment, session_logs, BlerDecoder, FlipProposer, BLER_CSV_HEADER,
};
use dlscf_core::lstm::ActionScores;
use dlscf_core::dlflip::ActionScorer;
use dlscf_core::polar::{CodeConfig, Crc};
use dlscf_core::sc::{first_error_index, sc_decode, FlipSet, Kernel};
use dlscf_core::trial::Trial;
use dlscf_core::{snr_to_sigma, RngStream};

fn code64() -> CodeConfig {
    CodeConfig::new(64, 32, Crc::CRC8, 1.0).unwrap()
}

#[test]
fn genie_always_hits_on_the_first_attempt() {
    let code = code64();
    let r = run_identification_experiment(FlipProposer::Genie, &code, 1.0, 4, 300, &RngStream::new(61, 0)).unwrap();
    assert_eq!(r.failures, 300);
    assert_eq!(r.rate(1), 1.0);
    assert_eq!(r.successes[1..], [0, 0, 0]);
}

/// Straight sequential count of how often the m-th smallest `|ᾱ|` is the first error.
fn magnitude_oracle(code: &CodeConfig, ebn0: f64, attempts: usize, failures: usize, stream: &RngStream) -> Vec<usize> {
    let sigma = snr_to_sigma(ebn0, code.rate()).unwrap();
    let mut hits = vec![0; attempts];
    let mut seen = 0;
    let mut id = 0;
    while seen < failures {
        let t = Trial::generate(code, sigma, stream, id);
        id += 1;
        let r = sc_decode(&t.llr, code, &FlipSet::empty(), Kernel::Exact).unwrap();
        if r.crc_ok {
            continue;
        }
        seen += 1;
        let truth = first_error_index(&r.u_hat, &t.u, code).unwrap();
        let mut order = code.info_positions().to_vec();
        order.sort_by(|&a, &b| r.trace[a].abs().total_cmp(&r.trace[b].abs()).then(a.cmp(&b)));
        if let Some(m) = order.iter().take(attempts).position(|&i| i == truth) {
            hits[m] += 1;
        }
    }
    hits
}

#[test]
fn magnitude_rates_match_a_sequential_count() {
    let code = code64();
    let stream = RngStream::new(62, 0);
    let r = run_identification_experiment(FlipProposer::Magnitude, &code, 1.0, 4, 2000, &stream).unwrap();
    assert_eq!(r.successes, magnitude_oracle(&code, 1.0, 4, 2000, &stream));
    let total: f64 = (1..=4).map(|m| r.rate(m)).sum();
    assert!(total <= 1.0);
    assert!((1..4).all(|m| r.cumulative_rate(m) <= r.cumulative_rate(m + 1)));
    assert!((r.cumulative_rate(4) - total).abs() < 1e-12);

    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("attempt,successes,failures_total,rate,cumulative_rate"));
    assert_eq!(lines.count(), 4);
}

#[test]
fn large_alpha_dscf_proposes_like_magnitude() {
    let code = code64();
    let stream = RngStream::new(63, 0);
    let a = run_identification_experiment(FlipProposer::Magnitude, &code, 1.0, 3, 500, &stream).unwrap();
    let b = run_identification_experiment(FlipProposer::Dscf { alpha: 60.0 }, &code, 1.0, 3, 500, &stream).unwrap();
    assert_eq!(a.successes, b.successes);
}

#[test]
fn sc_is_reliable_at_high_snr() {
    let code = code64();
    let p = run_bler_sweep(&[BlerDecoder::Sc], &code, &[6.0], usize::MAX, 10_000, &RngStream::new(64, 0)).unwrap();
    assert_eq!(p[0].trials, 10_000);
    assert!(p[0].bler < 1e-2, "BLER {}", p[0].bler);
}

#[test]
fn sweep_pairs_noise_across_decoders() {
    let code = code64();
    let decoders = [BlerDecoder::Sc, BlerDecoder::CaScl { list_size: 4 }, BlerDecoder::Dscf { alpha: 0.7, budget: 1 }];
    let run = || run_bler_sweep(&decoders, &code, &[1.0, 2.0], usize::MAX, 3000, &RngStream::new(65, 0)).unwrap();
    let points = run();
    assert_eq!(points.len(), 6);
    for pair in points.chunks(3) {
        let (sc, scl, dscf1) = (&pair[0], &pair[1], &pair[2]);
        assert_eq!(sc.noise_digest, scl.noise_digest);
        assert_eq!(sc.noise_digest, dscf1.noise_digest);
        assert!(scl.block_errors <= sc.block_errors);
        assert_eq!(dscf1.block_errors, sc.block_errors);
    }
    assert_ne!(points[0].noise_digest, points[3].noise_digest);
    assert_eq!(run(), points);

    let csv = bler_csv(&points);
    assert_eq!(csv.lines().next(), Some(BLER_CSV_HEADER));
    assert!(csv.lines().nth(2).unwrap().starts_with("CA-SCL-4,64,32,1,3000,"));
}

#[test]
fn sweep_stops_at_the_error_target() {
    let code = code64();
    let stream = RngStream::new(66, 0);
    let p = run_bler_sweep(&[BlerDecoder::Sc], &code, &[1.0], 25, 100_000, &stream).unwrap();
    let sigma = snr_to_sigma(1.0, code.rate()).unwrap();
    let (mut trials, mut errors) = (0, 0);
    while errors < 25 {
        let t = Trial::generate(&code, sigma, &stream.substream(0), trials);
        let r = sc_decode(&t.llr, &code, &FlipSet::empty(), Kernel::Exact).unwrap();
        errors += usize::from(t.is_block_error(&r.u_hat, &code));
        trials += 1;
    }
    assert_eq!((p[0].trials, p[0].block_errors), (trials as usize, 25));
}

#[test]
fn sweep_rejects_empty_inputs() {
    let code = code64();
    let s = RngStream::new(67, 0);
    assert!(run_bler_sweep(&[], &code, &[1.0], 1, 1, &s).is_err());
    assert!(run_bler_sweep(&[BlerDecoder::Sc], &code, &[], 1, 1, &s).is_err());
    assert!(run_bler_sweep(&[BlerDecoder::Sc], &code, &[1.0], 0, 1, &s).is_err());
    assert!(run_identification_experiment(FlipProposer::Genie, &code, 1.0, 0, 1, &s).is_err());
}

struct Uniform;

impl ActionScorer for Uniform {
    fn score(&self, _trace: &[f64]) -> ActionScores {
        ActionScores::new(vec![1.0 / 33.0; 33])
    }
}

#[test]
fn session_log_headers_carry_trial_ids() {
    let code = code64();
    let text = session_logs(&Uniform, &code, 1.0, 3, 5, &RngStream::new(68, 0)).unwrap();
    let headers: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert_eq!(headers.len(), 5);
    for (id, h) in headers.iter().enumerate() {
        assert!(h.starts_with(&format!("# trial {id} llr ")), "{h}");
    }
    assert!(text.lines().filter(|l| !l.starts_with('#')).all(|l| l.split('\t').count() == 4));
}
