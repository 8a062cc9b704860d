mod common;

use std::collections::HashMap;

use common::*;
use hsmm_core::decoding::{ffbs_sample, viterbi_decode};
use hsmm_core::Model;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn viterbi_matches_exhaustive_enumeration() {
    let report = viterbi_report(23, 100);
    assert!(report.score_gap < 1e-9, "{report:?}");
    assert_eq!(report.argmax_mismatches, 0, "{report:?}");
    assert!(report.unique_optima > 50, "{report:?}");
}

#[test]
fn ffbs_frequencies_follow_the_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inst = random_instance(&mut rng, 6, 2, 4);
    while inst.params.n_states() < 2 || inst.data.len() < 5 {
        inst = random_instance(&mut rng, 6, 2, 4);
    }
    // flatten the emissions so many segmentations carry visible mass
    inst.params.sigma2 = vec![25.0; 2];
    let model = Model::new(inst.data.clone(), inst.spec.clone()).unwrap();
    let all = enumerate_segmentations(&inst);
    let scores: Vec<f64> = all.iter().map(|(s, d)| oracle_complete_loglik(&inst, s, d)).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - top).exp()).sum();

    let draws = 40_000;
    let mut counts: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
    let mut sampler_rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..draws {
        let d = ffbs_sample(&model, &inst.params, inst.d_max, &mut sampler_rng).unwrap();
        let key = (d.segmentation.states().to_vec(), d.segmentation.durations().to_vec());
        *counts.entry(key).or_default() += 1;
    }
    for ((s, d), score) in all.iter().zip(&scores) {
        let p = (score - top).exp() / z;
        let observed = *counts.get(&(s.clone(), d.clone())).unwrap_or(&0) as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((observed - p).abs() <= 4.0 * se + 1e-4, "{s:?} {d:?}: observed {observed}, expected {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn raising_d_max_never_lowers_the_optimum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 12, 3, 5);
        let model = Model::new(inst.data.clone(), inst.spec.clone()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for d_max in 1..=inst.data.len() {
            if let Ok(d) = viterbi_decode(&model, &inst.params, d_max) {
                d.segmentation.validate(&inst.data, inst.params.n_states()).unwrap();
                prop_assert!(d.log_score >= prev - 1e-9);
                prev = d.log_score;
            }
        }
    }
}
