use holo_core::synth::{make_object, ObjectKind, SynthConfig};
use holo_core::{simulate_hologram_stack, OpticalGrid};
use holo_spaf::io::{weights_from_bytes, weights_to_bytes};
use holo_spaf::net::parameter_shapes;
use holo_spaf::{network_forward, OutputNorm, SpafConfig, SpafWeights};
use proptest::prelude::*;

/// Valid configurations on 8×8 and 16×16 inputs.
fn config() -> impl Strategy<Value = SpafConfig> {
    (
        prop_oneof![Just(8usize), Just(16)],
        1usize..4,
        1usize..4,
        1usize..3,
        1usize..3,
        any::<bool>(),
    )
        .prop_flat_map(|(n, m, channels, blocks, recursion, complex_mean)| {
            proptest::collection::vec(0usize..n / 2, blocks).prop_map(move |mut hw| {
                hw.sort_unstable_by(|a, b| b.cmp(a));
                SpafConfig {
                    m_inputs: m,
                    n,
                    channels,
                    blocks,
                    half_windows: hw,
                    recursion,
                    output_norm: if complex_mean {
                        OutputNorm::ComplexMean
                    } else {
                        OutputNorm::MeanPhase
                    },
                }
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weights_survive_flat_and_file_round_trips(cfg in config(), seed in any::<u64>()) {
        let w = SpafWeights::<f32>::init(&cfg, seed).unwrap();
        let flat = w.to_flat();
        let expected: usize = parameter_shapes(&cfg).iter().map(|s| s.shape.iter().product::<usize>()).sum();
        prop_assert_eq!(flat.len(), expected);
        prop_assert_eq!(SpafWeights::from_flat(&cfg, &flat).unwrap().to_flat(), flat.clone());

        let bytes = weights_to_bytes(&w, &cfg, seed, "fp").unwrap();
        let (header, back) = weights_from_bytes::<f32>(&bytes).unwrap();
        prop_assert_eq!(&header.cfg, &cfg);
        prop_assert_eq!(back.to_flat(), flat);
    }

    #[test]
    fn truncated_weight_files_are_rejected(cfg in config(), cut in 0.0f64..1.0) {
        let w = SpafWeights::<f32>::init(&cfg, 1).unwrap();
        let bytes = weights_to_bytes(&w, &cfg, 1, "fp").unwrap();
        let keep = (cut * bytes.len() as f64) as usize;
        prop_assert!(weights_from_bytes::<f32>(&bytes[..keep]).is_err());
    }

    #[test]
    fn output_mean_is_real_and_positive(cfg in config(), seed in any::<u64>()) {
        let grid = OpticalGrid::with_defaults(cfg.n).unwrap();
        let sc = SynthConfig { n: cfg.n, ..SynthConfig::default() };
        let o = make_object(&sc, grid, ObjectKind::AmplitudePhase, seed).unwrap().into_field();
        let zs: Vec<f64> = (0..cfg.m_inputs).map(|k| 300.0 + 75.0 * k as f64).collect();
        let stack = simulate_hologram_stack(&o, &zs, 0.0, 0).unwrap();
        let w = SpafWeights::<f64>::init(&cfg, seed).unwrap();
        let mean = network_forward(&stack, &w, &cfg).unwrap().complex_mean();
        prop_assert!(mean.im.abs() < 1e-9 * mean.norm().max(1.0));
        prop_assert!(mean.re > 0.0);
        if cfg.output_norm == OutputNorm::ComplexMean {
            prop_assert!((mean.re - 1.0).abs() < 1e-9);
        }
    }
}
