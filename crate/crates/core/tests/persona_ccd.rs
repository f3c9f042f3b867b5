mod common;

use std::collections::{BTreeMap, BTreeSet};

use personasim::ccd::{
    appraise, apply_belief_update, strategy_fires, CcdModel, CopingStrategy, CoreBelief, Emotion, EmotionVector,
    IntermediateBelief, SituationTrigger,
};
use personasim::memory::BeliefLevel;
use personasim::persona::{
    load_profile, ocean_distance, save_profile, AgentProfile, Demographics, HealthStatus, OceanVector, RoleCategory,
    RoleType, SocialContext,
};
use proptest::prelude::*;

fn trait_value() -> impl Strategy<Value = f64> {
    prop_oneof![(2u8..=10).prop_map(|v| v as f64 / 2.0), 1.0f64..=5.0]
}

fn ocean() -> impl Strategy<Value = OceanVector> {
    prop::array::uniform5(trait_value()).prop_map(|a| OceanVector::from_array(a).unwrap())
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 _\\-\"'éü中]{1,16}".prop_filter("non-blank", |s| !s.trim().is_empty())
}

fn profile() -> impl Strategy<Value = AgentProfile> {
    (
        text(),
        (text(), 0i64..110, 0i64..8),
        prop::collection::vec(text(), 0..4),
        ocean(),
        prop::collection::vec(text(), 0..5),
        prop::option::of((0usize..5, text(), prop::option::of(ocean()))),
    )
        .prop_map(|(id, (name, age, children), conditions, personality, constraints, role)| AgentProfile {
            agent_id: id,
            demographics: Demographics {
                name,
                age,
                gender: "female".into(),
                education: "primary".into(),
                occupation: "farmer".into(),
                living_situation: "alone".into(),
                marital_status: "widowed".into(),
                children,
                income_level: "low".into(),
            },
            health_status: HealthStatus {
                chronic_conditions: conditions,
                cognitive_status: "normal".into(),
                functional_status: "independent".into(),
                medication_adherence: "high".into(),
            },
            personality,
            social_context: SocialContext {
                family_support: "moderate".into(),
                community_engagement: "active".into(),
                discrimination_history: vec![],
            },
            behavior_constraints: constraints,
            role_type: role.map(|(c, subtype, typical_ocean)| RoleType {
                category: RoleCategory::ALL[c],
                subtype,
                typical_ocean,
            }),
        })
}

proptest! {
    #[test]
    fn save_then_load_is_identity(p in profile()) {
        let text = save_profile(&p);
        prop_assert_eq!(&text, &save_profile(&p));
        let back = load_profile(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(save_profile(&back), text);
    }

    #[test]
    fn distance_is_a_metric(a in ocean(), b in ocean(), c in ocean()) {
        let ab = ocean_distance(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ocean_distance(&b, &a));
        prop_assert_eq!(ocean_distance(&a, &a), 0.0);
        if a != b {
            prop_assert!(ab > 0.0);
        }
        prop_assert!(ocean_distance(&a, &c) <= ab + ocean_distance(&b, &c) + 1e-12);
    }

    #[test]
    fn out_of_range_trait_is_rejected_with_its_name(dim in 0usize..5, v in prop_oneof![-10.0f64..0.999, 5.001f64..20.0]) {
        let base = load_profile(&std::fs::read_to_string(common::fixtures().join("profiles/provider_001.json")).unwrap()).unwrap();
        let mut json: serde_json::Value = serde_json::from_str(&save_profile(&base)).unwrap();
        let name = ["openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism"][dim];
        json["personality"][name] = serde_json::json!(v);
        let err = load_profile(&json.to_string()).unwrap_err();
        prop_assert!(err.to_string().contains(name), "{}", err);
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let base = std::fs::read_to_string(common::fixtures().join("profiles/provider_001.json")).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&base).unwrap();
    json["favourite_colour"] = "blue".into();
    let err = load_profile(&json.to_string()).unwrap_err();
    assert!(err.to_string().contains("favourite_colour"), "{err}");
}

#[test]
fn every_fixture_profile_loads() {
    let roster = common::roster();
    assert_eq!(roster.len(), 6);
    for p in roster.profiles() {
        assert_eq!(load_profile(&save_profile(p)).unwrap(), *p);
    }
}

const TAGS: [&str; 4] = ["health", "family", "money", "loss"];

fn emotion_map() -> impl Strategy<Value = BTreeMap<Emotion, f64>> {
    prop::collection::btree_map(prop::sample::select(Emotion::ALL.to_vec()), -1.5f64..1.5, 0..4)
}

fn tag_set() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set(prop::sample::select(TAGS.to_vec()).prop_map(String::from), 1..3)
}

fn ccd() -> impl Strategy<Value = CcdModel> {
    (
        prop::collection::vec((tag_set(), 0.0f64..=1.0, emotion_map()), 0..5),
        prop::collection::vec((prop::collection::btree_set(prop::sample::select(Emotion::ALL.to_vec()), 1..3), 0.0f64..=1.0), 0..4),
    )
        .prop_map(|(beliefs, strategies)| CcdModel {
            agent_id: "a".into(),
            background: vec![],
            core_beliefs: vec![CoreBelief {
                id: "cb1".into(),
                schema_label: "helplessness".into(),
                statement: "I cannot cope".into(),
                strength: 0.7,
            }],
            intermediate_beliefs: beliefs
                .into_iter()
                .enumerate()
                .map(|(i, (tags, strength, deltas))| IntermediateBelief {
                    id: format!("ib{i}"),
                    statement: format!("rule {i}"),
                    parent: "cb1".into(),
                    trigger_tags: tags,
                    strength,
                    automatic_thought: format!("thought {i}"),
                    emotion_deltas: deltas,
                })
                .collect(),
            coping_strategies: strategies
                .into_iter()
                .enumerate()
                .map(|(i, (emotions, threshold))| CopingStrategy {
                    label: format!("s{i}"),
                    behavior: format!("behavior {i}"),
                    activating_emotions: emotions,
                    activation_threshold: threshold,
                })
                .collect(),
        })
}

fn baseline() -> impl Strategy<Value = EmotionVector> {
    prop::array::uniform7(0.0f64..=1.0).prop_map(|v| {
        let mut e = EmotionVector::default();
        for (em, x) in Emotion::ALL.into_iter().zip(v) {
            *e.slot(em) = x;
        }
        e
    })
}

fn trigger() -> impl Strategy<Value = SituationTrigger> {
    (tag_set(), 0.0f64..=1.0, emotion_map()).prop_map(|(tags, intensity, bias)| {
        let mut t = SituationTrigger::new("something happens", tags, intensity);
        t.emotion_bias = bias;
        t
    })
}

proptest! {
    #[test]
    fn appraisal_is_pure_and_bounded(m in ccd(), t in trigger(), b in baseline()) {
        let a = appraise(&m, &t, &b);
        prop_assert_eq!(&a, &appraise(&m, &t, &b));
        prop_assert!(a.emotions.is_valid());
        for th in &a.automatic_thoughts {
            prop_assert!(m.intermediate_belief(&th.source_belief).is_some());
        }
        let fired: Vec<&str> = a.behaviors.iter().map(|x| x.strategy.as_str()).collect();
        for s in &m.coping_strategies {
            prop_assert_eq!(fired.contains(&s.label.as_str()), strategy_fires(s, &a.emotions));
        }
    }

    #[test]
    fn stronger_trigger_never_lowers_credibility(m in ccd(), t in trigger(), b in baseline(), extra in 0.0f64..=1.0) {
        let mut hi = t.clone();
        hi.intensity = (t.intensity + extra).min(1.0);
        let low = appraise(&m, &t, &b);
        let high = appraise(&m, &hi, &b);
        for th in &low.automatic_thoughts {
            let h = high.automatic_thoughts.iter().find(|x| x.source_belief == th.source_belief).unwrap();
            prop_assert!(h.credibility >= th.credibility);
        }
    }

    #[test]
    fn belief_update_leaves_input_untouched(m in ccd(), core in any::<bool>()) {
        let before = m.clone();
        let at = common::t0();
        let (level, target) = if core || m.intermediate_beliefs.is_empty() {
            (BeliefLevel::Core, "cb1")
        } else {
            (BeliefLevel::Intermediate, "ib0")
        };
        let (next, rec) = apply_belief_update(&m, level, target, "a new view", "session", at).unwrap();
        prop_assert_eq!(&m, &before);
        prop_assert_eq!(rec.new_value.as_str(), "a new view");
        prop_assert_ne!(next, m);
    }
}

#[test]
fn fixture_ccds_validate() {
    for entry in std::fs::read_dir(common::fixtures().join("ccd")).unwrap() {
        let path = entry.unwrap().path();
        let m = CcdModel::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(CcdModel::from_json(&m.to_json()).unwrap(), m, "{}", path.display());
    }
}
