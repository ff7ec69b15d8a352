use std::collections::{BTreeMap, HashMap};

use serde_json::json;

use sentidrop_core::eval::{ablation, cross_validate, grid_search, group_kfold, PipelineSpec};
use sentidrop_core::models::ModelFamily;
use sentidrop_core::sentiment::{sentiment_features, temporal_risk, train_scorer, ScorerConfig};
use sentidrop_core::synth::{generate, EffectWeights, SynthConfig};

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) }
}

fn light(mut spec: PipelineSpec) -> PipelineSpec {
    spec.params.gbdt.n_rounds = 30;
    spec.params.random_forest.n_trees = 30;
    spec
}

#[test]
fn default_cohort_separates_well() {
    let (ds, cs, _) = generate(&SynthConfig::default()).unwrap();
    let plan = group_kfold(&ds.ids(), 5, 0).unwrap();
    let spec = PipelineSpec { families: vec![], ..Default::default() };
    let report = cross_validate(&ds, &cs, &spec, &plan).unwrap();
    let auc = report.mean("ensemble", "auc").unwrap();
    assert!(auc > 0.8, "mean held-out AUC {auc}");
    assert_eq!(report.folds.len(), 5);
}

#[test]
fn null_mechanism_gives_chance_auc() {
    let families = [ModelFamily::Logistic, ModelFamily::NaiveBayes, ModelFamily::Gbdt];
    let mut per_family: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in 0..10 {
        let cfg = SynthConfig { n_students: 800, weights: EffectWeights::zero(), seed, ..Default::default() };
        let (ds, cs, _) = generate(&cfg).unwrap();
        let plan = group_kfold(&ds.ids(), 5, seed).unwrap();
        let spec = light(PipelineSpec { families: families.to_vec(), ensemble: false, seed, ..Default::default() });
        let report = cross_validate(&ds, &cs, &spec, &plan).unwrap();
        for f in families {
            per_family.entry(f.as_str()).or_default().push(report.mean(f.as_str(), "auc").unwrap());
        }
    }
    for (family, aucs) in per_family {
        let m = median(aucs);
        assert!((m - 0.5).abs() <= 0.05, "{family}: median AUC {m}");
    }
}

#[test]
fn early_negative_students_drop_out_more() {
    let (ds, cs, _) = generate(&SynthConfig { n_students: 3000, seed: 8, ..Default::default() }).unwrap();
    let scorer = train_scorer(&cs, &ScorerConfig::default()).unwrap();
    let cfg = SynthConfig::default();
    let rows = sentiment_features(&cs, &scorer, cfg.term_start, &ds.ids());
    let labels: HashMap<String, u8> = ds.ids().into_iter().zip(ds.labels().unwrap()).collect();
    let report = temporal_risk(&rows, &labels);
    let early = report.early_negative.dropout_rate.unwrap();
    let never = report.never_negative.dropout_rate.unwrap();
    assert!(early > never, "early {early} vs never {never}");
}

#[test]
fn noise_block_has_no_effect() {
    let mut deltas: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for seed in 0..10 {
        let (ds, cs, _) = generate(&SynthConfig { n_students: 800, seed, ..Default::default() }).unwrap();
        let plan = group_kfold(&ds.ids(), 5, seed).unwrap();
        let mut spec = light(PipelineSpec { families: ModelFamily::ALL.to_vec(), seed, ..Default::default() });
        spec.sentiment.noise_control = true;
        let report = ablation(&ds, &cs, &spec, &plan).unwrap();
        for row in report.rows.iter().filter(|r| r.metric == "auc") {
            deltas.entry(row.model.clone()).or_default().push(row.delta);
        }
    }
    assert_eq!(deltas.len(), 6);
    for (model, d) in deltas {
        let m = median(d);
        assert!(m.abs() <= 0.02, "{model}: median AUC delta {m}");
    }
}

#[test]
fn grid_search_is_deterministic() {
    let (ds, cs, _) = generate(&SynthConfig { n_students: 300, seed: 2, ..Default::default() }).unwrap();
    let plan = group_kfold(&ds.ids(), 3, 2).unwrap();
    let spec = light(PipelineSpec { seed: 5, ..Default::default() });
    let grid = BTreeMap::from([
        ("max_depth".to_string(), vec![json!(2), json!(4)]),
        ("n_rounds".to_string(), vec![json!(10), json!(20)]),
    ]);
    let a = grid_search(&ds, &cs, &spec, ModelFamily::Gbdt, &grid, &plan).unwrap();
    let b = grid_search(&ds, &cs, &spec, ModelFamily::Gbdt, &grid, &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 4);
}

#[test]
fn duplicated_students_stay_in_one_fold() {
    // each student appears twice, as a leaked copy would
    let groups: Vec<String> = (0..40).flat_map(|i| [format!("S{i:03}"), format!("S{i:03}")]).collect();
    let plan = group_kfold(&groups, 5, 3).unwrap();
    assert_eq!(plan.assignments.len(), 40);
    for fold in 0..5 {
        let (train, test) = (plan.train_ids(fold), plan.test_ids(fold));
        for g in &groups {
            assert!(train.contains(g) != test.contains(g));
        }
    }
}
