use std::collections::BTreeSet;

use proptest::prelude::*;
use trajmine_core::sim::{run_scenario, NoiseSpec, SceneSpec, ScoreModel};
use trajmine_core::tmm::{Provenance, PseudoFrame};
use trajmine_core::{EntryKind, MatchingStrategy, MiningConfig};

fn noisy_case() -> impl Strategy<Value = (SceneSpec, NoiseSpec, MatchingStrategy)> {
    (
        1usize..6,
        8u32..40,
        any::<bool>(),
        any::<u64>(),
        0.0f64..0.5,
        0.0f64..2.0,
        0.0f64..0.5,
        any::<bool>(),
    )
        .prop_map(|(n, frames, crossing, seed, p_miss, sigma, p_false, greedy)| {
            let scene = SceneSpec {
                n_instances: n,
                n_frames: frames,
                crossing,
                seed,
                ..SceneSpec::default()
            };
            let noise = NoiseSpec {
                p_miss,
                jitter_sigma: sigma,
                p_false,
                ..NoiseSpec::default()
            };
            let strategy = if greedy {
                MatchingStrategy::Greedy
            } else {
                MatchingStrategy::MutualBest
            };
            (scene, noise, strategy)
        })
}

fn check_label_identities(f: &PseudoFrame, hp_boxes: &[[f64; 4]], dets: &[[f64; 4]]) {
    let hn: BTreeSet<usize> = f.hard_negatives.iter().map(|h| h.det_index).collect();
    for l in &f.labels {
        let soft = l.soft_label.expect("soft label assigned");
        assert!((0.0..=1.0).contains(&soft));
        match l.provenance {
            Provenance::Detection => {
                let i = l.det_index.expect("detection labels keep their index");
                assert!(!hn.contains(&i), "label also rejected as hard negative");
                assert_eq!(l.bbox.to_array(), dets[i]);
                assert_eq!(soft, l.score);
            }
            Provenance::HardPositive => assert_eq!(soft, 1.0),
        }
    }
    let hp_labels: Vec<[f64; 4]> = f
        .labels
        .iter()
        .filter(|l| l.provenance == Provenance::HardPositive)
        .map(|l| l.bbox.to_array())
        .collect();
    for b in hp_boxes {
        assert!(hp_labels.contains(b), "hard positive missing from labels");
    }
    assert!(!f.labels.is_empty() || !f.hard_negatives.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mining_invariants((scene, noise, strategy) in noisy_case()) {
        let cfg = MiningConfig::default();
        let out = run_scenario(&scene, &noise, &cfg, strategy).unwrap();
        let by_frame = out.detections.by_frame();

        for t in &out.trajectories {
            for w in t.entries().windows(2) {
                prop_assert!(w[0].frame < w[1].frame);
                prop_assert!(w[1].frame - w[0].frame <= cfg.max_missed);
            }
            prop_assert!(t.entries()[0].kind == EntryKind::Detection);
        }
        for hp in &out.mining.hard_positives {
            prop_assert!(hp.entry.mask.is_some());
            prop_assert_eq!(hp.entry.kind, EntryKind::Tracking);
        }
        for f in &out.mining.frames {
            let hp: Vec<[f64; 4]> = out
                .mining
                .hard_positives
                .iter()
                .filter(|m| m.entry.frame == f.frame)
                .map(|m| m.entry.bbox.to_array())
                .collect();
            let dets: Vec<[f64; 4]> = by_frame
                .get(&f.frame)
                .map(|d| d.iter().map(|d| d.bbox.to_array()).collect())
                .unwrap_or_default();
            check_label_identities(f, &hp, &dets);
        }
        let m = out.metrics;
        for v in [m.purity, m.hp_precision, m.hp_recall, m.hn_precision, m.pseudo_noise_rate] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn noiseless_runs_are_inert(n in 1usize..6, frames in 5u32..40, crossing: bool, seed: u64) {
        let scene = SceneSpec { n_instances: n, n_frames: frames, crossing, seed, ..SceneSpec::default() };
        let noise = NoiseSpec { score: ScoreModel::Constant { value: 0.9 }, ..NoiseSpec::default() };
        for strategy in [MatchingStrategy::MutualBest, MatchingStrategy::Greedy] {
            let out = run_scenario(&scene, &noise, &MiningConfig::default(), strategy).unwrap();
            prop_assert_eq!(out.trajectories.len(), n);
            prop_assert!(out.trajectories.iter().all(|t| t.len() == frames as usize));
            prop_assert_eq!(out.metrics.purity, 1.0);
            prop_assert_eq!(out.mining.report.hard_positives, 0);
            prop_assert_eq!(out.mining.report.hard_negatives, 0);
            prop_assert_eq!(out.mining.report.admitted_frames, 0);
        }
    }

    #[test]
    fn single_dropout_is_recovered(n in 1usize..5, seed: u64, k in 0usize..5, f in 2u32..28) {
        let k = k % n;
        let scene = SceneSpec { n_instances: n, seed, ..SceneSpec::default() };
        let noise = NoiseSpec { forced_dropouts: vec![(k, f)], ..NoiseSpec::default() };
        let out = run_scenario(&scene, &noise, &MiningConfig::default(), MatchingStrategy::MutualBest).unwrap();
        prop_assert_eq!(out.mining.hard_positives.len(), 1);
        let hp = &out.mining.hard_positives[0].entry;
        prop_assert_eq!(hp.frame, f);
        let truth = out.gt.at(k, f).unwrap().bbox.to_array();
        for (a, b) in hp.bbox.to_array().iter().zip(truth) {
            prop_assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", hp.bbox, truth);
        }
        prop_assert_eq!(out.mining.report.admitted_frames, 1);
        prop_assert_eq!(out.metrics.hp_precision, 1.0);
        prop_assert_eq!(out.metrics.hp_recall, 1.0);
    }
}
