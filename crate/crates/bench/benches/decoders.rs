use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use dlscf_core::baselines::DscfDecoder;
use dlscf_core::lstm::{LstmNet, NetworkConfig};
use dlscf_core::sc::{ca_scl_decode, sc_decode, FlipSet, Kernel};
use dlscf_core::training::feature_encode;
use dlscf_core::trial::Trial;
use dlscf_core::{snr_to_sigma, CodeConfig, Crc, RngStream};
use ndarray::Array2;

fn decoders(c: &mut Criterion) {
    let code = CodeConfig::new(64, 32, Crc::CRC8, 1.0).unwrap();
    let sigma = snr_to_sigma(1.0, code.rate()).unwrap();
    let stream = RngStream::new(1, 0);
    let trials: Vec<Trial> = (0..256).map(|id| Trial::generate(&code, sigma, &stream, id)).collect();
    let mut next = 0;
    let mut pick = || {
        next = (next + 1) % trials.len();
        trials[next].llr.clone()
    };

    c.bench_function("sc_n64", |b| {
        b.iter_batched(|| pick(), |llr| sc_decode(black_box(&llr), &code, &FlipSet::empty(), Kernel::Exact), BatchSize::SmallInput)
    });
    c.bench_function("ca_scl4_n64", |b| {
        b.iter_batched(|| pick(), |llr| ca_scl_decode(black_box(&llr), &code, 4, Kernel::Exact), BatchSize::SmallInput)
    });
    let dscf = DscfDecoder::new(0.7, 5);
    c.bench_function("dscf_t5_n64", |b| {
        b.iter_batched(|| pick(), |llr| dscf.decode(black_box(&llr), &code), BatchSize::SmallInput)
    });
}

fn network(c: &mut Criterion) {
    let code = CodeConfig::new(64, 32, Crc::CRC8, 1.0).unwrap();
    let net = LstmNet::<f32>::new(NetworkConfig::new(2, 128, 4, 33), &RngStream::new(2, 0)).unwrap();
    let sigma = snr_to_sigma(1.0, code.rate()).unwrap();
    let trial = Trial::generate(&code, sigma, &RngStream::new(3, 0), 0);
    let trace = sc_decode(&trial.llr, &code, &FlipSet::empty(), Kernel::Exact).unwrap().trace;
    let features = feature_encode(&trace);
    c.bench_function("lstm_score_single", |b| b.iter(|| net.score(black_box(&features))));

    let batch = Array2::from_shape_fn((250, 64), |(_, j)| features[j]);
    let labels = vec![3usize; 250];
    let weights = vec![1.0 / 250.0; 250];
    let mut group = c.benchmark_group("lstm_train");
    group.sample_size(10);
    group.bench_function("forward_backward_250", |b| {
        b.iter(|| {
            let cache = net.forward(batch.view(), None).unwrap();
            net.backward(batch.view(), &cache, &labels, &weights).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, decoders, network);
criterion_main!(benches);
