use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ospo_core::pair_selection::{select_pair, GapRecord, DEFAULT_EPSILON};
use ospo_core::perturbation::{apply_swap, swap_sites, PerturbKind};
use ospo_core::prompt_forge::{sample_structured, Category, KeywordPools};
use ospo_core::simpo_trainer::{simpo_loss, PreferenceRecord, SimpoConfig, ToyPolicy};

fn gaps(l: [f64; 3], g: [f64; 3]) -> Vec<GapRecord> {
    (0..3)
        .map(|i| GapRecord {
            kind: PerturbKind::ALL[i],
            delta_local: l[i],
            delta_global: g[i],
        })
        .collect()
}

proptest! {
    #[test]
    fn selection_ignores_uniform_rescaling(
        l in prop::array::uniform3(0.01f64..2.0),
        g in prop::array::uniform3(0.01f64..2.0),
        a in 0.1f64..1.0,
        b in 0.1f64..1.0,
    ) {
        let base = select_pair(&gaps(l, g), DEFAULT_EPSILON).unwrap();
        let scaled = select_pair(&gaps(l.map(|x| x * a), g.map(|x| x * b)), DEFAULT_EPSILON).unwrap();
        for (x, y) in base.t_scores.iter().zip(&scaled.t_scores) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() <= 1e-9 * x.unwrap().max(1.0));
        }
    }

    #[test]
    fn every_swap_is_an_involution(seed in any::<u64>(), category in 0usize..4) {
        let pools = KeywordPools::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sample_structured(Category::ALL[category], &pools, &mut rng);
        for site in swap_sites(&p) {
            let q = apply_swap(&p, site).unwrap();
            prop_assert_ne!(q.bindings(), p.bindings());
            prop_assert_eq!(apply_swap(&q, site).unwrap(), p.clone());
        }
    }

    #[test]
    fn a_gradient_step_lowers_the_loss(
        w in prop::collection::vec(0u32..6, 1..5),
        l in prop::collection::vec(0u32..6, 1..5),
        seed in any::<u64>(),
    ) {
        let cfg = SimpoConfig { vocab: 6, max_len: 4, buckets: 1, ..SimpoConfig::toy() };
        let policy = ToyPolicy::random(6, 4, 1, 0.5, seed);
        let record = PreferenceRecord::new(&policy, "s", "p", w, l);
        let eval = simpo_loss(&policy, std::slice::from_ref(&record), &cfg).unwrap();
        prop_assert!(eval.loss > 0.0);
        let stepped = {
            let mut p = policy.clone();
            for (t, g) in p.params_mut().iter_mut().zip(&eval.grad) {
                *t -= 1e-3 * g;
            }
            p
        };
        let after = simpo_loss(&stepped, &[record], &cfg).unwrap();
        prop_assert!(after.loss <= eval.loss + 1e-12);
    }
}
