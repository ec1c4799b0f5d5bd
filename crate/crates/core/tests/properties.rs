use proptest::prelude::*;

use rslab::analysis::{
    count_rss_bruteforce, count_rss_sat, enumerate_rss, mix_remaps, verify_mixture_is_rs, FamilyBase, Pin, RemapFamily,
};
use rslab::inference::{fuzzy_satisfaction, pnsp_label_dist, ConceptDistribution};
use rslab::logic::{build_beta_star, parse_task, InferenceTable, TaskSpec};
use rslab::mitigation::{constrain_family, merge_multitask, transform_support, FamilyConstraint, SupportMode};
use rslab::train::{generate_dataset, Render, SyntheticTaskConfig};
use rslab::Error;

const BUDGET: u128 = 200_000;

/// A deterministic task whose knowledge lists each concept vector with its label.
#[derive(Clone, Debug)]
struct Spec {
    cards: Vec<u32>,
    ycard: u32,
    labels: Vec<u32>,
    support: Vec<bool>,
}

impl Spec {
    fn vectors(&self) -> Vec<Vec<u32>> {
        let mut out = vec![vec![]];
        for c in &self.cards {
            out = out.into_iter().flat_map(|v| (0..*c).map(move |x| [v.clone(), vec![x]].concat())).collect();
        }
        out
    }

    fn text_with(&self, labels: &[u32], label_name: &str, support: &[Vec<u32>]) -> String {
        let mut s = String::new();
        for (i, c) in self.cards.iter().enumerate() {
            s += &format!("concept C{i} : {c};\n");
        }
        s += &format!("label {label_name} : {};\n", self.ycard);
        s += "support {";
        for g in support {
            s += &format!(" ({});", g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        }
        s += " }\nknowledge { ";
        let rows: Vec<String> = self
            .vectors()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut atoms: Vec<String> = v.iter().enumerate().map(|(s, x)| format!("C{s}={x}")).collect();
                atoms.push(format!("{label_name}={}", labels[i] % self.ycard));
                format!("({})", atoms.join(" & "))
            })
            .collect();
        s += &rows.join(" | ");
        s += " }";
        s
    }

    fn support_vectors(&self) -> Vec<Vec<u32>> {
        let all = self.vectors();
        let mut out: Vec<Vec<u32>> = all.iter().zip(&self.support).filter(|(_, b)| **b).map(|(v, _)| v.clone()).collect();
        if out.is_empty() {
            out.push(all[0].clone());
        }
        out
    }

    fn task(&self) -> TaskSpec {
        parse_task(&self.text_with(&self.labels, "Y", &self.support_vectors())).unwrap()
    }
}

fn spec() -> impl Strategy<Value = Spec> {
    (2u32..=3, 1usize..=3, 2u32..=3).prop_flat_map(|(card, k, ycard)| {
        let cards = vec![card; k];
        let n: usize = cards.iter().map(|c| *c as usize).product();
        (
            Just(cards),
            Just(ycard),
            prop::collection::vec(0u32..3, n),
            prop::collection::vec(prop::bool::weighted(0.4), n),
        )
            .prop_map(|(cards, ycard, labels, support)| Spec { cards, ycard, labels, support })
    })
}

fn base() -> impl Strategy<Value = FamilyBase> {
    prop_oneof![Just(FamilyBase::FullTable), Just(FamilyBase::PerSlot), Just(FamilyBase::SharedSlot)]
}

fn family(base: FamilyBase, injective: bool) -> RemapFamily {
    let f = RemapFamily::new(base);
    if injective {
        f.injective()
    } else {
        f
    }
}

fn setup(s: &Spec) -> (TaskSpec, InferenceTable) {
    let t = s.task();
    let table = build_beta_star(&t).unwrap();
    (t, table)
}

/// Brute-force count, or `None` when the family is too large to walk.
fn brute(t: &TaskSpec, table: &InferenceTable, f: &RemapFamily) -> Option<u128> {
    match count_rss_bruteforce(t, table, f, BUDGET) {
        Ok(n) => Some(n),
        Err(Error::BudgetExceeded { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, ..ProptestConfig::default() })]

    #[test]
    fn model_counting_matches_brute_force(s in spec(), b in base(), injective in any::<bool>()) {
        let (t, table) = setup(&s);
        let f = family(b, injective);
        if let Some(n) = brute(&t, &table, &f) {
            prop_assert_eq!(count_rss_sat(&t, &table, &f).unwrap(), n);
        }
    }

    #[test]
    fn family_constraints_never_add_shortcuts(s in spec(), b in base(), pin_at in any::<prop::sample::Index>()) {
        let (t, table) = setup(&s);
        let f = RemapFamily::new(b);
        let before = count_rss_sat(&t, &table, &f).unwrap();
        let support = t.support_vectors();
        let g = support[pin_at.index(support.len())].clone();
        let mut constraints = vec![FamilyConstraint::Pin { pins: vec![Pin::Vector { g }] }];
        // injective counts grow with the subsets of a label class
        if t.concepts().size() <= 16 {
            constraints.push(FamilyConstraint::Injective);
        }
        for c in constraints {
            let after = count_rss_sat(&t, &table, &constrain_family(&f, &c).unwrap()).unwrap();
            prop_assert!(after <= before, "{:?}: {} > {}", c, after, before);
        }
    }

    #[test]
    fn conjoined_knowledge_never_adds_shortcuts(s in spec(), other in prop::collection::vec(0u32..3, 27), b in base()) {
        let (t, table) = setup(&s);
        let second = parse_task(&s.text_with(&other, "Z", &s.support_vectors())).unwrap();
        let merged = merge_multitask(&[t.clone(), second]).unwrap();
        let mt = build_beta_star(&merged).unwrap();
        let f = RemapFamily::new(b);
        let alone = count_rss_sat(&t, &table, &f).unwrap();
        prop_assert!(count_rss_sat(&merged, &mt, &f).unwrap() <= alone);
        let twice = merge_multitask(&[t.clone(), t.clone()]).unwrap();
        prop_assert_eq!(count_rss_sat(&twice, &build_beta_star(&twice).unwrap(), &f).unwrap(), alone);
    }

    #[test]
    fn support_on_seen_symbols_never_adds_shared_shortcuts(s in spec(), pick in any::<prop::sample::Index>()) {
        let (t, table) = setup(&s);
        let support = t.support_vectors();
        let seen: Vec<u32> = support.iter().flatten().copied().collect();
        let fresh: Vec<Vec<u32>> = s
            .vectors()
            .into_iter()
            .filter(|v| !support.contains(v) && v.iter().all(|x| seen.contains(x)))
            .collect();
        prop_assume!(!fresh.is_empty());
        let add = fresh[pick.index(fresh.len())].clone();
        let bigger = transform_support(&t, &[add], SupportMode::Add).unwrap();
        let f = RemapFamily::new(FamilyBase::SharedSlot);
        let before = count_rss_sat(&t, &table, &f).unwrap();
        prop_assert!(count_rss_sat(&bigger, &build_beta_star(&bigger).unwrap(), &f).unwrap() <= before);
    }

    #[test]
    fn mixtures_of_shortcuts_keep_labels(s in spec(), b in base(), raw in prop::collection::vec(0.01f64..1.0, 8)) {
        let (t, table) = setup(&s);
        let f = RemapFamily::new(b);
        prop_assume!(brute(&t, &table, &f).is_some());
        let e = enumerate_rss(&t, &table, &f, 8, BUDGET).unwrap();
        prop_assume!(!e.remaps.is_empty());
        let w: Vec<f64> = raw[..e.remaps.len()].to_vec();
        let z: f64 = w.iter().sum();
        let mix = mix_remaps(e.remaps.clone(), w.iter().map(|x| x / z).collect()).unwrap();
        let check = verify_mixture_is_rs(&mix, &table, &t.support_vectors()).unwrap();
        prop_assert!(check.label_preserving && check.max_tv <= 1e-9);
    }

    #[test]
    fn label_distributions_are_normalized(s in spec(), raw in prop::collection::vec(0.0f64..1.0, 27)) {
        let (t, table) = setup(&s);
        let n = t.concepts().size();
        let z: f64 = raw[..n].iter().sum::<f64>() + 1e-9;
        let q: Vec<f64> = raw[..n].iter().map(|x| (x + 1e-9 / n as f64) / z).collect();
        let p = pnsp_label_dist(&ConceptDistribution::tabular(q).unwrap(), &table).unwrap();
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.probs.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn printed_tasks_parse_back(s in spec()) {
        let t = s.task();
        let back = parse_task(&t.pretty_print()).unwrap();
        prop_assert_eq!(back.support(), t.support());
        let (a, b) = (build_beta_star(&t).unwrap(), build_beta_star(&back).unwrap());
        for c in 0..t.concepts().size() {
            prop_assert_eq!(a.consistent(c), b.consistent(c));
        }
    }

    #[test]
    fn fuzzy_truth_is_boolean_at_vertices(labels in prop::collection::vec(0u32..2, 8), k in 1usize..=3) {
        let s = Spec { cards: vec![2; k], ycard: 2, labels, support: vec![true; 8] };
        let t = s.task();
        for c in t.concepts().vectors() {
            for y in 0..2u32 {
                let v = fuzzy_satisfaction(&ConceptDistribution::one_hot(t.concepts(), &c), &[y], &t).unwrap();
                prop_assert_eq!(v, t.satisfies(&c, &[y]) as u8 as f64);
            }
        }
    }

    #[test]
    fn datasets_depend_only_on_the_seed(s in spec(), seed in any::<u64>(), entangled in any::<bool>()) {
        let t = s.task();
        let cfg = SyntheticTaskConfig {
            render: if entangled { Render::Entangled } else { Render::Blockwise },
            noise_rate: 0.1,
            samples_per_support_vector: 2,
            seed,
        };
        let (a, b) = (generate_dataset(&t, &cfg).unwrap(), generate_dataset(&t, &cfg).unwrap());
        prop_assert_eq!(&a.inputs, &b.inputs);
        prop_assert_eq!(&a.labels, &b.labels);
        for (g, y) in a.concepts.iter().zip(&a.labels) {
            prop_assert_eq!(Some(*y), a.table.label_of(t.concepts().index_of(g)));
        }
    }
}

#[test]
fn full_table_count_grows_with_support() {
    let three = "concept A : 2; concept B : 2; label Y : 2; support { (0,0); (0,1); (1,0); } knowledge { (A=1 ^ B=1) <-> Y=1 }";
    let t = parse_task(three).unwrap();
    let four = transform_support(&t, &[vec![1, 1]], SupportMode::Add).unwrap();
    let f = RemapFamily::new(FamilyBase::FullTable);
    let count = |t: &TaskSpec| count_rss_sat(t, &build_beta_star(t).unwrap(), &f).unwrap();
    // every support vector may go to either vector of its label
    assert_eq!((count(&t), count(&four)), (2u128.pow(3) - 1, 2u128.pow(4) - 1));
}
