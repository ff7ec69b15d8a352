//! End-to-end acceptance checks, one line per criterion.
//!
//! Each check returns `Ok(detail)` or `Err(detail)`; the summary lines go straight
//! to stderr so they show up in captured test runs.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::json;

use sentidrop_core::data::{CommentSet, Dataset, FeatureMatrix, SentimentClass};
use sentidrop_core::ensemble::{bce_loss, Reduction};
use sentidrop_core::eval::{
    ablation, confusion, evaluate, fit_fold, fit_pipeline, group_kfold, grid_search, metrics, PipelineSpec,
};
use sentidrop_core::explain::{shap_exact, shap_sampling};
use sentidrop_core::models::{self, logistic, GbdtParams, HyperParams, ModelFamily, Predictor};
use sentidrop_core::rng;
use sentidrop_core::sentiment::{paired_ttest, student_t_two_sided_p};
use sentidrop_core::synth::{generate, Preset, SynthConfig};

type Check = Result<String, String>;

fn close(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{label}: got {got}, want {want} (tol {tol})"))
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn metric_oracles() -> Check {
    // 8 positives, 4 negatives; thresholds at 0.5 give tp=6, fp=1, fn=2, tn=3
    let y = [1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1];
    let p = [0.9, 0.8, 0.2, 0.6, 0.7, 0.3, 0.95, 0.55, 0.1, 0.4, 0.2, 0.65];
    let cm = confusion(&y, &p, 0.5).map_err(|e| e.to_string())?;
    if (cm.tp, cm.fp, cm.fn_, cm.tn) != (6, 1, 2, 3) {
        return Err(format!("confusion {cm:?}"));
    }
    let r = metrics(&cm, &y, &p).map_err(|e| e.to_string())?;
    close("accuracy", r.accuracy, 0.75, 1e-4)?;
    close("precision", r.precision, 0.8571, 1e-4)?;
    close("recall", r.recall, 0.75, 1e-4)?;
    close("f1", r.f1, 0.8000, 1e-4)?;
    close("mcc", r.mcc, 0.4781, 1e-4)?;
    close("kappa", r.kappa, 0.4706, 1e-4)?;
    let auc = sentidrop_core::eval::auc(&[0, 0, 1, 1], &[0.1, 0.4, 0.35, 0.8]);
    if auc != Some(0.75) {
        return Err(format!("auc fixture {auc:?}"));
    }
    Ok(format!("acc {:.4} prec {:.4} rec {:.4} f1 {:.4} mcc {:.4} kappa {:.4} auc 0.75", r.accuracy, r.precision, r.recall, r.f1, r.mcc, r.kappa))
}

struct Linear {
    w: Vec<f64>,
    b: f64,
}

impl Predictor for Linear {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.b + self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

fn shap_axioms() -> Check {
    // feature 4 is held at 0 during training, so no family can depend on it
    let mut r = rng::rng(11);
    let n = 120;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut v: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
            v.push(0.0);
            v
        })
        .collect();
    let y: Vec<u8> = rows.iter().map(|v| u8::from(v[0] - 0.7 * v[1] + 0.4 * v[2] * v[3] + 0.2 * r.random_range(-1.0..1.0) > 0.0)).collect();
    let x = FeatureMatrix::from_unnamed_rows(&rows);
    let background: Vec<Vec<f64>> = (0..25)
        .map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let instances: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect()).collect();

    let mut worst_eff = 0.0f64;
    let mut worst_dummy = 0.0f64;
    let mut worst_sampling = 0.0f64;
    for family in ModelFamily::ALL {
        let model = models::train(&HyperParams::default_for(family).with_seed(3), &x, &y).map_err(|e| e.to_string())?;
        for (k, inst) in instances.iter().enumerate() {
            let exact = shap_exact(&model, inst, &background, "i", None).map_err(|e| e.to_string())?;
            let eff = (exact.total() - model.predict_row(inst)).abs();
            worst_eff = worst_eff.max(eff);
            worst_dummy = worst_dummy.max(exact.values[4].abs());
            let sampled =
                shap_sampling(&model, inst, &background, 2000, k as u64, "i", None).map_err(|e| e.to_string())?;
            let gap = exact.values.iter().zip(&sampled.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst_sampling = worst_sampling.max(gap);
        }
    }
    if worst_eff > 1e-6 {
        return Err(format!("efficiency gap {worst_eff:e}"));
    }
    if worst_dummy != 0.0 {
        return Err(format!("dummy feature phi {worst_dummy:e}"));
    }
    if worst_sampling > 0.05 {
        return Err(format!("sampling vs exact {worst_sampling}"));
    }

    // linear closed form uses the logistic model's own weights on the margin scale
    let lr = models::train(&HyperParams::default_for(ModelFamily::Logistic), &x, &y).map_err(|e| e.to_string())?;
    let models::Model::Logistic(fit) = &lr.model else { return Err("logistic model expected".into()) };
    let lin = Linear { w: fit.weights.clone(), b: fit.intercept };
    let mu: Vec<f64> = (0..5).map(|j| background.iter().map(|b| b[j]).sum::<f64>() / background.len() as f64).collect();
    let mut worst_linear = 0.0f64;
    for inst in &instances {
        let e = shap_exact(&lin, inst, &background, "i", None).map_err(|e| e.to_string())?;
        for j in 0..5 {
            worst_linear = worst_linear.max((e.values[j] - lin.w[j] * (inst[j] - mu[j])).abs());
        }
    }
    if worst_linear > 1e-9 {
        return Err(format!("linear closed form gap {worst_linear:e}"));
    }
    Ok(format!(
        "5 families: efficiency {worst_eff:.1e}, dummy {worst_dummy}, linear {worst_linear:.1e}, sampling(2000) {worst_sampling:.4}"
    ))
}

fn tuning_analog() -> Check {
    let grid = BTreeMap::from([
        ("learning_rate".to_string(), vec![json!(0.05), json!(0.1), json!(0.3)]),
        ("max_depth".to_string(), vec![json!(2), json!(3), json!(6)]),
    ]);
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let (ds, cs, _) = generate(&SynthConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        // outer holdout fold; the grid only sees the training students
        let outer = group_kfold(&ds.ids(), 5, seed).map_err(|e| e.to_string())?;
        let (train, test) = (outer.train_ids(0), outer.test_ids(0));
        let (tr, trc) = (ds.subset(&train), cs.subset(&train));
        let (te, tec) = (ds.subset(&test), cs.subset(&test));
        let inner = group_kfold(&tr.ids(), 3, seed ^ 1).map_err(|e| e.to_string())?;
        let spec = PipelineSpec { families: vec![ModelFamily::Gbdt], ensemble: false, seed, ..Default::default() };
        let g = grid_search(&tr, &trc, &spec, ModelFamily::Gbdt, &grid, &inner).map_err(|e| e.to_string())?;
        let mut tuned = spec.clone();
        tuned.params.set(&g.best_row().params);
        let held_out = |s: &PipelineSpec| -> Result<f64, String> {
            let f = fit_pipeline(&tr, &trc, s, 7).map_err(|e| e.to_string())?;
            let p = f.predict(&te, &tec).map_err(|e| e.to_string())?;
            Ok(evaluate(p.labels.as_ref().unwrap(), &p.by_model["gbdt"], 0.5).map_err(|e| e.to_string())?.accuracy)
        };
        let (a_tuned, a_default) = (held_out(&tuned)?, held_out(&spec)?);
        if a_tuned >= a_default {
            wins += 1;
        }
        lines.push(format!("{a_tuned:.3}/{a_default:.3}"));
    }
    let detail = format!("tuned >= default in {wins}/10 seeds (tuned/default: {})", lines.join(" "));
    if wins >= 8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ablation_analog() -> Check {
    let mut recall = Vec::new();
    let mut accuracy = Vec::new();
    let mut null_auc = Vec::new();
    for preset in [Preset::SentimentDriven, Preset::Null] {
        for seed in 0..10u64 {
            let cfg = SynthConfig { n_students: 2000, seed, ..preset.config() };
            let (ds, cs, _) = generate(&cfg).map_err(|e| e.to_string())?;
            let plan = group_kfold(&ds.ids(), 5, seed).map_err(|e| e.to_string())?;
            let spec = PipelineSpec { families: vec![], ensemble: true, seed, ..Default::default() };
            let r = ablation(&ds, &cs, &spec, &plan).map_err(|e| e.to_string())?;
            let d = |m: &str| r.delta("ensemble", m).unwrap();
            if preset == Preset::SentimentDriven {
                recall.push(d("recall"));
                accuracy.push(d("accuracy"));
            } else {
                null_auc.push(d("auc"));
            }
        }
    }
    let (dr, da, dn) = (median(recall), median(accuracy), median(null_auc));
    let detail = format!("sentiment-driven median delta recall {dr:+.4}, accuracy {da:+.4}; null median delta AUC {dn:+.4}");
    if dr > 0.0 && da > 0.0 && dn.abs() <= 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn quick_spec() -> PipelineSpec {
    let mut spec = PipelineSpec::default();
    spec.params.gbdt.n_rounds = 15;
    spec.params.random_forest.n_trees = 10;
    spec
}

fn perturb_outside(ds: &Dataset, cs: &CommentSet, keep: &HashSet<String>) -> (Dataset, CommentSet) {
    let records = ds
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if !keep.contains(&r.student_id) {
                r.features.iter_mut().for_each(|v| *v = v.map(|x| -3.0 * x + 100.0));
                r.label = r.label.map(|l| 1 - l);
            }
            r
        })
        .collect();
    let comments = cs
        .comments()
        .iter()
        .map(|c| {
            let mut c = c.clone();
            if !keep.contains(&c.student_id) {
                c.text = format!("{} terrible", c.text);
                c.gold_label = Some(SentimentClass::Negative);
            }
            c
        })
        .collect();
    (Dataset::new(ds.feature_names().to_vec(), records).unwrap(), CommentSet::new(comments))
}

fn group_integrity() -> Check {
    let (ds, cs, _) = generate(&SynthConfig { n_students: 300, seed: 5, ..Default::default() }).map_err(|e| e.to_string())?;
    // one group entry per comment plus one per tabular row
    let mut groups: Vec<String> = cs.comments().iter().map(|c| c.student_id.clone()).collect();
    groups.extend(ds.ids());
    let mut r = rng::rng(99);
    let mut spans = 0usize;
    for plan_seed in 0..100u64 {
        let k = r.random_range(2..=10);
        let plan = group_kfold(&groups, k, plan_seed).map_err(|e| e.to_string())?;
        if plan.assignments.len() != ds.n() {
            return Err(format!("plan {plan_seed} covers {} of {} students", plan.assignments.len(), ds.n()));
        }
        for fold in 0..k {
            let (train, test) = (plan.train_ids(fold), plan.test_ids(fold));
            let tr = ds.subset(&train);
            let trc = cs.subset(&train);
            spans += tr.ids().iter().filter(|id| test.contains(*id)).count();
            spans += trc.comments().iter().filter(|c| test.contains(&c.student_id)).count();
            spans += cs.subset(&test).comments().iter().filter(|c| train.contains(&c.student_id)).count();
        }
    }
    if spans > 0 {
        return Err(format!("{spans} rows or comments on both sides"));
    }
    let spec = quick_spec();
    for plan_seed in 0..5u64 {
        let plan = group_kfold(&ds.ids(), 4, plan_seed).map_err(|e| e.to_string())?;
        let train = plan.train_ids(0);
        let base = fit_fold(&ds, &cs, &spec, &train, plan_seed).map_err(|e| e.to_string())?;
        let (pds, pcs) = perturb_outside(&ds, &cs, &train);
        let probe = fit_fold(&pds, &pcs, &spec, &train, plan_seed).map_err(|e| e.to_string())?;
        if base != probe {
            return Err(format!("leakage: plan {plan_seed} parameters changed when test rows were perturbed"));
        }
    }
    Ok("100 plans, 0 spanning rows or comments; 5 leakage probes left fitted parameters identical".into())
}

fn statistical_tests() -> Check {
    let t = paired_ttest(&[1.0, 2.0, 3.0], 0.0).map_err(|e| e.to_string())?;
    close("t", t.t_statistic, 3.4641, 1e-3)?;
    if t.degrees_of_freedom != 2 {
        return Err(format!("df {}", t.degrees_of_freedom));
    }
    close("p", t.p_value_two_sided, 0.0742, 1e-3)?;
    let p10 = student_t_two_sided_p(2.228, 10.0);
    close("p(df=10, t=2.228)", p10, 0.050, 1e-3)?;
    Ok(format!("t {:.4} df 2 p {:.4}; p(10, 2.228) {p10:.4}", t.t_statistic, t.p_value_two_sided))
}

fn optimization_checks() -> Check {
    let mut r = rng::rng(2024);
    let mut worst_grad = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(5..40);
        let d = r.random_range(1..6);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
        let lambda = r.random_range(0.0..0.5);
        let params: Vec<f64> = (0..=d).map(|_| r.random_range(-1.5..1.5)).collect();
        let mut grad = vec![0.0; d + 1];
        logistic::objective(&refs, &y, lambda, &params, &mut grad);
        let h = 1e-5;
        let mut scratch = vec![0.0; d + 1];
        for j in 0..=d {
            let (mut up, mut down) = (params.clone(), params.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (logistic::objective(&refs, &y, lambda, &up, &mut scratch)
                - logistic::objective(&refs, &y, lambda, &down, &mut scratch))
                / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-8);
            worst_grad = worst_grad.max(rel);
        }
    }
    if worst_grad > 1e-4 {
        return Err(format!("gradient relative error {worst_grad:e}"));
    }

    let mut worst_rise = f64::NEG_INFINITY;
    for case in 0..50u64 {
        let n = r.random_range(10..60);
        let d = r.random_range(1..5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let mut y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
        y[0] = 0;
        y[1] = 1;
        let x = FeatureMatrix::from_unnamed_rows(&rows);
        let params = GbdtParams { n_rounds: 20, gamma: 0.0, seed: case, ..Default::default() };
        let losses = models::gbdt_loss_history(&x, &y, &params).map_err(|e| e.to_string())?;
        for w in losses.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    if worst_rise > 1e-12 {
        return Err(format!("GBDT training loss rose by {worst_rise:e}"));
    }

    for _ in 0..50 {
        let n = r.random_range(2..50);
        let y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
        let mean = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
        let loss = |p: f64| bce_loss(&y, &vec![p; n], Reduction::Mean).unwrap();
        let best = loss(mean);
        for k in 1..200 {
            let p = k as f64 / 200.0;
            if loss(p) < best - 1e-12 {
                return Err(format!("constant {p} beats mean {mean}"));
            }
        }
    }
    Ok(format!("gradient rel err {worst_grad:.1e}; GBDT max per-round change {worst_rise:.1e}; BCE minimum at mean(y)"))
}

fn run_cli(args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sentidrop"))
        .args(args)
        .args(["--threads", threads])
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("config.json");
    std::fs::write(&config, r#"{"synth": {"n_students": 800}, "seed": 17}"#).map_err(|e| e.to_string())?;
    let cfg = config.to_str().unwrap();
    let mut dirs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let dir = tmp.path().join(name);
        let d = dir.to_str().unwrap();
        run_cli(&["gen", "--config", cfg, "--out", d], threads)?;
        run_cli(&["pipeline", "--config", cfg, "--out", d], threads)?;
        dirs.push(dir);
    }
    let files = ["cv_metrics.json", "predictions.csv", "shap.csv", "ablation.json"];
    for f in files {
        let read = |d: &Path| std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"));
        let first = read(&dirs[0])?;
        for d in &dirs[1..] {
            if read(d)? != first {
                return Err(format!("{f} differs in {}", d.display()));
            }
        }
    }
    Ok(format!("3 pipeline runs (threads 1, 1, 3): {} byte-identical", files.join(", ")))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, Duration, fn() -> Check); 8] = [
        (1, "metric oracle suite", Duration::from_secs(1), metric_oracles),
        (2, "SHAP axioms", Duration::from_secs(60), shap_axioms),
        (3, "tuning analog", Duration::from_secs(600), tuning_analog),
        (4, "ablation analog", Duration::from_secs(900), ablation_analog),
        (5, "group CV integrity", Duration::from_secs(60), group_integrity),
        (6, "statistical tests", Duration::from_secs(1), statistical_tests),
        (7, "optimization checks", Duration::from_secs(120), optimization_checks),
        (8, "determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        let status = if ok { "PASS" } else { "FAIL" };
        let line = format!("criterion {id} ({name}): {status} [{:.2}s] {detail}", elapsed.as_secs_f64());
        writeln!(std::io::stderr(), "{line}").unwrap();
        if !ok {
            failed.push(line);
        }
    }
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
