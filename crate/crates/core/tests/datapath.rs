mod common;

use proptest::prelude::*;

use spade_core::channel::{draw_channel, draw_symbols, draw_unit_noise, receive_with_noise, ChannelKind, Domain, Mode};
use spade_core::datapath::{
    effective_throughput, power_proxy_rate, simulate_stream, throughput_bps, MuteTrace, PipelineConfig,
    PowerCoefficients,
};
use spade_core::equalizer::{descale, mvm, BeamVector, Equalizer, EqualizerSettings};
use spade_core::qam::Constellation;

struct Setup {
    eq: Equalizer,
    ys: Vec<Vec<num_complex::Complex64>>,
    vectors: Vec<BeamVector>,
}

fn setup(seed: u64, n: usize, tau_w: f64, tau_y: f64) -> Setup {
    let mut rng = common::rng(seed);
    let h = draw_channel(ChannelKind::Los, 64, 16, &mut rng).unwrap();
    let n0 = 0.05;
    let settings = EqualizerSettings {
        tau_w,
        tau_y,
        ..Default::default()
    };
    let eq = Equalizer::prepare(&h, n0, 1.0, &[Domain::Antenna, Domain::Beamspace], settings).unwrap();
    let c = Constellation::new(16, 1.0).unwrap();
    let ys: Vec<_> = (0..n)
        .map(|_| {
            let s = draw_symbols(&c, 16, &mut rng);
            receive_with_noise(&h, &s.symbols, &draw_unit_noise(64, &mut rng), n0).unwrap()
        })
        .collect();
    let vectors = ys
        .iter()
        .map(|y| eq.front_end().prepare(Domain::Beamspace, y).unwrap())
        .collect();
    Setup { eq, ys, vectors }
}

#[test]
fn cycle_count_for_a_full_block() {
    let s = setup(51, 1000, 0.05, 0.1);
    let w = s.eq.weights(Domain::Beamspace).unwrap();
    let r = simulate_stream(w, &s.vectors, &PipelineConfig::default(), true).unwrap();
    assert_eq!(r.cycles, 16 + 1000 + 4);
    assert_eq!(r.outputs.len(), 1000);
}

#[test]
fn empty_stream_still_loads_and_drains() {
    let s = setup(52, 0, 0.05, 0.1);
    let w = s.eq.weights(Domain::Beamspace).unwrap();
    let r = simulate_stream(w, &[], &PipelineConfig::default(), true).unwrap();
    assert_eq!(r.cycles, 16 + 4);
    assert!(r.outputs.is_empty());
    assert_eq!(r.trace.count(), 0);
}

#[test]
fn outputs_match_equalizer_bit_for_bit() {
    let s = setup(53, 100, 0.1, 0.2);
    let w = s.eq.weights(Domain::Beamspace).unwrap();
    let pipe = PipelineConfig::default();
    let r = simulate_stream(w, &s.vectors, &pipe, true).unwrap();
    for (i, out) in r.outputs.iter().enumerate() {
        assert_eq!(out.vector, i);
        assert_eq!(out.cycle, (16 + i + pipe.latency()) as u64);
        let (acc, executed) = mvm(w, &s.vectors[i], true).unwrap();
        assert_eq!(out.accumulators, acc);
        assert_eq!(out.executed, executed);
        let (est, report) = s.eq.equalize(Mode::LmmseSpade, &s.ys[i]).unwrap();
        assert_eq!(descale(&out.accumulators, w.alpha(), s.eq.front_end().input_gain), est);
        assert_eq!(report.executed, executed as u64);
    }
}

#[test]
fn mute_count_equals_skipped_products() {
    let s = setup(54, 200, 0.1, 0.3);
    let w = s.eq.weights(Domain::Beamspace).unwrap();
    let r = simulate_stream(w, &s.vectors, &PipelineConfig::default(), true).unwrap();
    assert!(r.activity.skipped() > 0);
    assert_eq!(r.trace.count(), r.activity.total - r.activity.executed);
    let off = simulate_stream(w, &s.vectors, &PipelineConfig::default(), false).unwrap();
    assert_eq!(off.trace.count(), 0);
    assert_eq!(off.activity.rate(), 1.0);
}

#[test]
fn muted_registers_follow_comparison_bits() {
    let s = setup(55, 20, 0.1, 0.3);
    let w = s.eq.weights(Domain::Beamspace).unwrap();
    let r = simulate_stream(w, &s.vectors, &PipelineConfig::default(), true).unwrap();
    assert_eq!(r.loaded_w_bits, w.bits());
    let b = 64;
    for (i, x) in s.vectors.iter().enumerate() {
        let cycle = (16 + i) as u64;
        for u in 0..16 {
            for j in 0..b {
                let cw = w.bits()[u * b + j];
                let cy = x.y_bits[j];
                let expect = [cw.re && cy.re, cw.im && cy.im, cw.re && cy.im, cw.im && cy.re];
                for (reg, e) in expect.iter().enumerate() {
                    assert_eq!(r.trace.is_muted(cycle, u * b + j, reg), *e);
                }
            }
        }
    }
}

#[test]
fn antenna_mode_never_mutes() {
    let s = setup(56, 10, 0.5, 0.5);
    let w = s.eq.weights(Domain::Antenna).unwrap();
    let xs: Vec<BeamVector> = s
        .ys
        .iter()
        .map(|y| s.eq.front_end().prepare(Domain::Antenna, y).unwrap())
        .collect();
    let r = simulate_stream(w, &xs, &PipelineConfig::default(), Mode::LmmseA.save_power()).unwrap();
    assert_eq!(r.trace.count(), 0);
}

#[test]
fn trace_exports_round_trip() {
    let s = setup(57, 30, 0.1, 0.3);
    let w = s.eq.weights(Domain::Beamspace).unwrap();
    let r = simulate_stream(w, &s.vectors, &PipelineConfig::default(), true).unwrap();
    let mut bin = Vec::new();
    r.trace.write_bitmap(&mut bin).unwrap();
    assert_eq!(MuteTrace::read_bitmap(&bin).unwrap(), r.trace);
    let mut csv = Vec::new();
    r.trace.write_summary_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some("cycle,cm,register"));
    assert_eq!(text.lines().count() as u64, r.trace.count() + 1);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let s = setup(58, 1, 0.0, 0.0);
    let w = s.eq.weights(Domain::Beamspace).unwrap();
    let short = common::random_vector(&mut common::rng(1), 16, 0.0, spade_core::numerics::QFormat::INPUT);
    assert!(simulate_stream(w, &[short], &PipelineConfig::default(), true).is_err());
}

#[test]
fn table_throughputs() {
    let gbps = |f| throughput_bps(f, 16, 16).unwrap() / 1e9;
    assert!((gbps(720e6) - 46.08).abs() < 1e-9);
    assert!((gbps(600e6) - 38.4).abs() < 1e-9);
    assert!((gbps(920e6) - 58.88).abs() < 1e-9);
    assert!((gbps(720e6) - 46.0).abs() <= 1.0);
    assert!((gbps(600e6) - 39.0).abs() <= 1.0);
    assert!((gbps(920e6) - 58.8).abs() <= 1.0);
}

#[test]
fn effective_throughput_amortizes_reload() {
    let peak = throughput_bps(720e6, 16, 16).unwrap();
    let t16 = effective_throughput(720e6, 16, 16, 16, 4).unwrap();
    assert!((t16 / peak - 16.0 / 36.0).abs() < 1e-12);
    let t1000 = effective_throughput(720e6, 16, 16, 1000, 4).unwrap();
    assert!(t1000 / peak > 0.98);
    let huge = effective_throughput(720e6, 16, 16, 1 << 40, 4).unwrap();
    assert!((huge / peak - 1.0).abs() < 1e-9);
    assert!(effective_throughput(720e6, 16, 16, 0, 4).is_err());
}

#[test]
fn proxy_with_activity_only_coefficients() {
    let c = PowerCoefficients::activity_only();
    assert_eq!(power_proxy_rate(0.62, &c, Mode::LmmseSpade).unwrap(), 0.62);
    let full = power_proxy_rate(1.0, &c, Mode::LmmseB).unwrap();
    assert_eq!(full, power_proxy_rate(1.0, &c, Mode::LmmseA).unwrap());
    assert_eq!(power_proxy_rate(0.5, &c, Mode::LmmseSpade).unwrap(), full / 2.0);
    let bad = PowerCoefficients {
        fixed: -1.0,
        ..c
    };
    assert!(power_proxy_rate(0.5, &bad, Mode::LmmseA).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cycles_are_affine_in_stream_length(n in 0usize..60, seed in any::<u64>()) {
        let s = setup(seed, n, 0.05, 0.1);
        let w = s.eq.weights(Domain::Beamspace).unwrap();
        let pipe = PipelineConfig::default();
        let r = simulate_stream(w, &s.vectors, &pipe, true).unwrap();
        prop_assert_eq!(r.cycles, (16 + n + pipe.latency()) as u64);
    }
}
