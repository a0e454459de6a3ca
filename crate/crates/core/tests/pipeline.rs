use fhdpsk::io::{read_capture, write_capture, IqFormat, IqMetadata};
use fhdpsk::metrics::binomial_standard_error;
use fhdpsk::num::db_to_linear;
use fhdpsk::{
    apply_channel, decode_capture, run_ber_sweep, synthesize_train, theoretical_dbpsk_ber,
    CaptureOptions, ChannelState, FhCodeMatrix, Modulation, SweepSpec, WaveformParams,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn dbpsk_at_seven_db_matches_closed_form() {
    let spec = SweepSpec {
        modulations: vec![Modulation::Dbpsk],
        snr_db: vec![7.0],
        min_bits: 1_000_000,
        seed: 77,
        ..Default::default()
    };
    let report = run_ber_sweep(&spec, 4).unwrap();
    let p = &report.points[0];
    let want = theoretical_dbpsk_ber(db_to_linear(7.0)).unwrap();
    assert!((want - 3.32e-3).abs() < 1e-5);
    assert_eq!(p.bits_sent, 1_000_000);
    assert!(
        (p.ber - want).abs() < 3.0 * binomial_standard_error(want, p.bits_sent),
        "{} vs {want}",
        p.ber
    );
    assert_eq!(p.oracle_ber, Some(want));
}

#[test]
fn capture_survives_a_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let config = WaveformParams::bench_default(Modulation::Dqpsk)
        .build()
        .unwrap();
    let codes = FhCodeMatrix::default_for(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bits: Vec<u8> = (0..4000).map(|_| rng.random_range(0..2)).collect();
    let tx = synthesize_train::<f32>(&config, &codes, &bits).unwrap();
    let state = ChannelState {
        alpha: Complex64::from_polar(0.05, 1.0),
        delay: 123,
        dc_offset: Complex64::new(-0.01, 0.02),
        iq_gain: 0.9,
        iq_phase: -0.1,
        noise_variance: 1e-4,
        ..Default::default()
    };
    let rx = apply_channel(&tx.antennas, config.element_positions(), &state, 3).unwrap();
    for name in ["rx.iq", "rx.csv"] {
        let path = dir.path().join(name);
        let meta = IqMetadata {
            num_pulses: Some(tx.num_pulses()),
            ..IqMetadata::new(IqFormat::Cf32le, 0.0)
        };
        write_capture(std::slice::from_ref(&rx), meta, &path).unwrap();
        let (mut back, meta) = read_capture::<f64>(&path).unwrap();
        let options = CaptureOptions {
            iq_gain: 0.9,
            iq_phase: -0.1,
            num_pulses: meta.num_pulses,
            ..Default::default()
        };
        let d = decode_capture(&back.remove(0), &codes, &config, &options).unwrap();
        assert_eq!(d.timing.delay, 123);
        assert_eq!(d.frame.count_bit_errors(&bits).unwrap(), 0);
    }
}

#[test]
fn rayleigh_sweep_degrades_gracefully() {
    let spec = SweepSpec {
        modulations: vec![Modulation::Dbpsk],
        snr_db: vec![10.0, 20.0],
        min_bits: 50_000,
        channel: fhdpsk::ChannelTemplate {
            rayleigh: true,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = run_ber_sweep(&spec, 2).unwrap();
    let (lo, hi) = (&report.points[0], &report.points[1]);
    assert!(lo.oracle_ber.is_none());
    // Averaged over Rayleigh gains the D-BPSK error rate is 1/(2(1+γ_b)).
    for p in [lo, hi] {
        let want = 0.5 / (1.0 + db_to_linear(p.snr_db));
        assert!(
            (p.ber - want).abs() < 0.25 * want,
            "{} dB: {} vs {want}",
            p.snr_db,
            p.ber
        );
    }
}
