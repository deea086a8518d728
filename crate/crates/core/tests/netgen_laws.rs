mod common;

use misinfo_core::netgen::GenParams;
use misinfo_core::persona::{AttributeSpace, PERSONA_PREFIX};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_networks_are_trees(
        m in 1usize..25,
        alpha in 0.0f64..=1.0,
        beta in 0.0f64..=1.0,
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        let net = common::mock_network(GenParams { m, alpha, beta, k }, seed);
        prop_assert_eq!(common::tree_law_violation(&net, m), None);
        prop_assert!(net.validate().is_ok());
    }

    #[test]
    fn persona_has_eight_sentences(seed in any::<u64>()) {
        let space = AttributeSpace::canonical();
        let text = space.verbalize(&space.sample_seeded(seed));
        prop_assert!(text.starts_with(PERSONA_PREFIX));
        prop_assert!(text.ends_with('.'));
        prop_assert_eq!(text.split(". ").count(), 8);
    }
}

#[test]
fn alpha_one_gives_stars() {
    for seed in 0..20 {
        let net = common::mock_network(GenParams { m: 15, alpha: 1.0, beta: 0.5, k: 3 }, seed);
        assert!(net.edges.iter().all(|e| e.parent == 0), "seed {seed}");
        assert_eq!(common::diameter(&net), 2);
    }
}

#[test]
fn higher_alpha_gives_smaller_diameter() {
    let mean = |alpha: f64| {
        (0..15)
            .map(|seed| common::diameter(&common::mock_network(GenParams { m: 30, alpha, beta: 0.05, k: 3 }, seed)) as f64)
            .sum::<f64>()
            / 15.0
    };
    let (shallow, deep) = (mean(0.8), mean(0.2));
    assert!(shallow < deep, "{shallow} vs {deep}");
}

#[test]
fn same_seed_same_network() {
    let p = GenParams { m: 12, alpha: 0.4, beta: 0.3, k: 2 };
    assert_eq!(common::mock_network(p, 5), common::mock_network(p, 5));
    assert_ne!(common::mock_network(p, 5), common::mock_network(p, 6));
}

/// Pearson chi-square per category against the uniform law, at p = 0.001.
#[test]
fn persona_categories_are_uniform() {
    let space = AttributeSpace::canonical();
    let n = 20_000u64;
    let profiles: Vec<_> = (0..n).map(|i| space.sample_seeded(i)).collect();
    for (ci, cat) in space.categories().iter().enumerate() {
        let r = cat.options.len();
        let mut counts = vec![0f64; r];
        for p in &profiles {
            counts[p.choices[ci]] += 1.0;
        }
        let expected = n as f64 / r as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let critical = match r - 1 {
            1 => 10.828,
            2 => 13.816,
            4 => 18.467,
            df => panic!("no critical value for df={df}"),
        };
        assert!(chi2 < critical, "{}: chi2={chi2:.2}", cat.name);
    }
}

#[test]
fn pinned_category_never_varies() {
    let space = AttributeSpace::canonical().restrict("political_leaning", "Politically, you are a Democrat.").unwrap();
    for seed in 0..200 {
        assert!(space.verbalize(&space.sample_seeded(seed)).contains("Politically, you are a Democrat."));
    }
}
