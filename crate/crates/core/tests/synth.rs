mod common;

use common::*;
use emolabel::aggregation::{consensus_split, Rule};
use emolabel::synth::{empirical_check, generate, Ambiguity, RaterProfile, SynthConfig, TrueLabel};

const CLASSES: [&str; 4] = ["N", "H", "A", "S"];

#[test]
fn class_frequencies_track_a_skewed_prior() {
    let mut cfg = SynthConfig::simple(&CLASSES, 10_000, 3, 0.8, 1.0, 1);
    cfg.prior = vec![0.4, 0.3, 0.2, 0.1];
    let g = generate(&cfg).unwrap();
    let mut freq = [0.0; 4];
    for t in g.truth.values() {
        match *t {
            TrueLabel::Class(k) => freq[k] += 1.0 / 10_000.0,
            TrueLabel::Mixture { .. } => panic!("no ambiguity configured"),
        }
    }
    for (f, p) in freq.iter().zip(&cfg.prior) {
        assert!((f - p).abs() <= 0.02, "{freq:?}");
    }
    assert!(empirical_check(&g.corpus, &g.truth, &cfg).passed());
}

#[test]
fn half_coverage_rates_about_half_the_utterances() {
    let n = 4000;
    let mut cfg = SynthConfig::simple(&CLASSES, n, 1, 0.9, 1.0, 2);
    cfg.raters.push(RaterProfile::uniform_noise("half", 4, 0.9, 0.5));
    let g = generate(&cfg).unwrap();
    let rated = g
        .corpus
        .utterances()
        .iter()
        .filter(|u| u.ratings.iter().any(|r| r.rater_id == "half"))
        .count() as f64;
    let nf = n as f64;
    assert!((rated - 0.5 * nf).abs() <= 3.0 * nf.sqrt(), "rated {rated}");
}

#[test]
fn even_mixtures_tie_at_the_binomial_rate() {
    let n = 5000;
    let mut cfg = SynthConfig::simple(&CLASSES, n, 4, 1.0, 1.0, 3);
    cfg.ambiguity = Some(Ambiguity { rate: 1.0, weight: 0.5 });
    let g = generate(&cfg).unwrap();
    let ties = g
        .corpus
        .utterances()
        .iter()
        .filter(|u| {
            let votes: Vec<usize> = u.ratings.iter().map(|r| CLASSES.iter().position(|c| *c == r.class_name).unwrap()).collect();
            let (counts, _) = counts_of(4, &votes);
            plurality(&counts).is_none()
        })
        .count() as f64;
    // four fair coins split two and two with probability 6/16
    assert!((ties / n as f64 - 0.375).abs() <= 0.02, "tie rate {}", ties / n as f64);
}

#[test]
fn faithful_raters_leave_nothing_for_the_rules_to_disagree_on() {
    let mut cfg = SynthConfig::simple(&CLASSES, 500, 5, 1.0, 1.0, 4);
    cfg.raters = (0..5).map(|r| RaterProfile::faithful(format!("r{r}"), 4)).collect();
    let g = generate(&cfg).unwrap();
    let all: Vec<String> = g.corpus.utterances().iter().map(|u| u.id.clone()).collect();
    for rule in [Rule::Mr, Rule::Pr, Rule::Ar] {
        let split = consensus_split(&g.corpus, rule);
        assert!(split.dropped.is_empty(), "{rule:?}");
        assert_eq!(split.kept.len(), all.len());
    }
    for u in g.corpus.utterances() {
        let TrueLabel::Class(k) = g.truth[&u.id] else { panic!("unmixed") };
        assert!(u.ratings.iter().all(|r| r.class_name == CLASSES[k]));
    }
}

#[test]
fn generation_is_a_function_of_the_seed() {
    let cfg = SynthConfig::simple(&CLASSES, 300, 3, 0.6, 0.7, 5);
    let a = generate(&cfg).unwrap();
    let b = generate(&cfg).unwrap();
    assert_eq!(a.corpus, b.corpus);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.features, b.features);
    let c = generate(&SynthConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.corpus, c.corpus);
}

#[test]
fn every_utterance_has_a_rating_even_at_low_coverage() {
    let cfg = SynthConfig::simple(&CLASSES, 400, 2, 0.7, 0.05, 7);
    let g = generate(&cfg).unwrap();
    assert!(g.corpus.utterances().iter().all(|u| !u.ratings.is_empty()));
}

#[test]
fn invalid_configurations_are_rejected() {
    let base = SynthConfig::simple(&CLASSES, 10, 2, 0.7, 1.0, 8);
    let bad_prior = SynthConfig { prior: vec![0.5, 0.5, 0.5, 0.0], ..base.clone() };
    assert!(generate(&bad_prior).is_err());
    let no_raters = SynthConfig { raters: Vec::new(), ..base.clone() };
    assert!(generate(&no_raters).is_err());
    let mut bad_cov = base.clone();
    bad_cov.raters[0].coverage = 0.0;
    assert!(generate(&bad_cov).is_err());
    let empty = SynthConfig { n_utterances: 0, ..base };
    assert!(generate(&empty).is_err());
}
