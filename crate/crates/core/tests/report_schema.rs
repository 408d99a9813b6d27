//! Golden test for the emitted report: every consumer-visible key must be
//! present with the right shape, for every enabled attack, plus the
//! epsilon and sweep blocks and the CSV side files.

mod common;

use common::*;
use privaudit::*;
use serde_json::Value;

fn field<'a>(v: &'a Value, key: &str) -> &'a Value {
    v.get(key)
        .unwrap_or_else(|| panic!("missing key {key:?} in {v}"))
}

fn key_set(v: &Value) -> Vec<&str> {
    let mut keys: Vec<&str> = v
        .as_object()
        .unwrap_or_else(|| panic!("expected an object, got {v}"))
        .keys()
        .map(|s| s.as_str())
        .collect();
    keys.sort_unstable();
    keys
}

fn ids_of(list: &Value) -> Vec<u64> {
    list.as_array()
        .unwrap()
        .iter()
        .map(|r| field(r, "record_id").as_u64().unwrap())
        .collect()
}

#[test]
fn report_schema_is_complete() {
    let seed = 99;
    let sc = scene(seed);
    let target = init_mlp(&TARGET_LAYERS, seed).unwrap();

    let mut cfg = shadow_recipe(seed);
    cfg.n_shadows = 2;
    cfg.shadow_train_config.epochs = 20;
    cfg.attack_train_config.epochs = 30;
    let selection = AttackSelection {
        population_loss: true,
        shadow_blackbox: true,
        shadow_whitebox: true,
        shadow: Some(cfg),
    };
    let groups = run_attacks(&target, &sc.data, &sc.split, &selection).unwrap();
    let summary = TargetSummary::measure(&target, &sc.data, &sc.split).unwrap();
    let epsilon = epsilon_of(1.2, 600, 1e-5).unwrap();

    let mut sweep_train = memorizing_recipe(7);
    sweep_train.epochs = 5;
    sweep_train.dp = Some(DpParams {
        clip_norm: 1.0,
        noise_multiplier: 0.0,
        delta: 1e-5,
    });
    let sweep_spec = SweepSpec {
        model_layers: TARGET_LAYERS.to_vec(),
        base_train: sweep_train,
        sigmas: vec![0.5, 1.0],
        attacks: AttackSelection {
            population_loss: true,
            shadow_blackbox: false,
            shadow_whitebox: false,
            shadow: None,
        },
        seed: 7,
    };
    let sweep_rows = sweep_tradeoff(&sc.data, &sc.split, &sweep_spec).unwrap();

    let report = build_report(
        summary,
        &groups,
        &MetricsOptions::default(),
        Some(epsilon),
        Some(sweep_rows),
        "a1b2c3",
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let manifest = emit(&report, dir.path()).unwrap();
    assert_eq!(
        manifest.len(),
        1 + 3 * 3 + 1,
        "report.json, three CSVs per attack, sweep.csv"
    );
    for name in &manifest {
        assert!(dir.path().join(name).is_file(), "{name} missing on disk");
    }

    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(
        key_set(&v),
        vec!["attacks", "epsilon", "meta", "sweep", "target"]
    );

    let meta = field(&v, "meta");
    assert_eq!(
        key_set(meta),
        vec!["config_digest", "prng_version", "timestamp", "tool_version"]
    );
    assert_eq!(field(meta, "tool_version").as_str().unwrap(), TOOL_VERSION);
    assert_eq!(
        field(meta, "prng_version").as_str().unwrap(),
        rng::PRNG_VERSION
    );
    assert_eq!(field(meta, "config_digest").as_str().unwrap(), "a1b2c3");
    chrono::DateTime::parse_from_rfc3339(field(meta, "timestamp").as_str().unwrap())
        .expect("timestamp must be RFC 3339");

    let target_block = field(&v, "target");
    assert_eq!(
        key_set(target_block),
        vec![
            "accuracy_gap",
            "architecture",
            "loss_gap",
            "test_accuracy",
            "train_accuracy",
            "train_size"
        ]
    );
    let arch: Vec<u64> = field(target_block, "architecture")
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap())
        .collect();
    assert_eq!(arch, vec![4, 64, 64, 2]);
    assert_eq!(
        field(target_block, "train_size").as_u64().unwrap() as usize,
        N_MEMBERS
    );

    let audited: Vec<u64> = sc.split.audited_ids().iter().map(|&i| i as u64).collect();
    let attacks = field(&v, "attacks").as_array().unwrap();
    let names: Vec<&str> = attacks
        .iter()
        .map(|b| field(b, "attack_name").as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        vec!["population_loss", "shadow_blackbox", "shadow_whitebox"]
    );

    for block in attacks {
        let name = field(block, "attack_name").as_str().unwrap();
        assert_eq!(
            key_set(block),
            vec![
                "attack_name",
                "auc",
                "histogram",
                "membership_advantage",
                "per_class_auc",
                "records",
                "risks",
                "roc",
                "skipped_classes",
                "tpr_at_fpr"
            ],
            "block {name}"
        );

        let records = field(block, "records").as_array().unwrap();
        assert_eq!(records.len(), N_MEMBERS + N_NONMEMBERS, "block {name}");
        assert_eq!(ids_of(field(block, "records")), audited, "block {name}");
        for r in records {
            assert_eq!(
                key_set(r),
                vec![
                    "attack_name",
                    "class_label",
                    "is_member",
                    "record_id",
                    "score"
                ]
            );
            assert_eq!(field(r, "attack_name").as_str().unwrap(), name);
        }

        let roc = field(block, "roc");
        assert_eq!(key_set(roc), vec!["auc", "fpr", "thresholds", "tpr"]);
        let n_points = field(roc, "thresholds").as_array().unwrap().len();
        assert!(n_points >= 2, "block {name}: ROC needs real points");
        assert_eq!(field(roc, "fpr").as_array().unwrap().len(), n_points);
        assert_eq!(field(roc, "tpr").as_array().unwrap().len(), n_points);

        let auc = field(block, "auc").as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc), "block {name}: auc {auc}");
        assert_eq!(auc, field(roc, "auc").as_f64().unwrap());
        let advantage = field(block, "membership_advantage").as_f64().unwrap();
        assert!((0.0..=1.0).contains(&advantage));

        let points = field(block, "tpr_at_fpr").as_array().unwrap();
        let targets: Vec<f64> = points
            .iter()
            .map(|p| field(p, "fpr").as_f64().unwrap())
            .collect();
        assert_eq!(targets, vec![0.01, 0.05, 0.1], "block {name}");
        for p in points {
            let tpr = field(p, "tpr").as_f64().unwrap();
            assert!((0.0..=1.0).contains(&tpr));
        }

        let mut covered: Vec<u64> = key_set(field(block, "per_class_auc"))
            .iter()
            .map(|k| k.parse().unwrap())
            .collect();
        covered.extend(
            field(block, "skipped_classes")
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c.as_u64().unwrap()),
        );
        covered.sort_unstable();
        assert_eq!(covered, vec![0, 1], "block {name}: every class accounted");

        let hist = field(block, "histogram");
        assert_eq!(
            key_set(hist),
            vec!["bin_edges", "member_counts", "nonmember_counts"]
        );
        let bins = field(hist, "member_counts").as_array().unwrap().len();
        assert!(bins >= 1);
        assert_eq!(
            field(hist, "bin_edges").as_array().unwrap().len(),
            bins + 1
        );
        assert_eq!(
            field(hist, "nonmember_counts").as_array().unwrap().len(),
            bins
        );

        let risks = field(block, "risks").as_array().unwrap();
        assert_eq!(
            risks.len(),
            N_MEMBERS + N_NONMEMBERS,
            "block {name}: one risk per audited record"
        );
        assert_eq!(ids_of(field(block, "risks")), audited, "block {name}");
        for r in risks {
            assert_eq!(key_set(r), vec!["record_id", "risk", "score"]);
            let risk = field(r, "risk").as_f64().unwrap();
            assert!(risk > 0.0 && risk < 1.0, "smoothed risk stays inside (0,1)");
        }
    }

    let eps = field(&v, "epsilon");
    assert_eq!(
        key_set(eps),
        vec!["delta", "epsilon", "method", "rho", "sigma", "steps"]
    );
    assert_eq!(
        field(eps, "method").as_str().unwrap(),
        "zcdp-no-subsampling"
    );

    let sweep = field(&v, "sweep").as_array().unwrap();
    assert_eq!(sweep.len(), 2);
    for row in sweep {
        assert_eq!(
            key_set(row),
            vec![
                "attack_auc",
                "epsilon",
                "loss_gap",
                "sigma",
                "test_accuracy"
            ]
        );
        assert!(field(row, "attack_auc").get("population_loss").is_some());
    }

    let roc_csv = std::fs::read_to_string(dir.path().join("roc_population_loss.csv")).unwrap();
    let mut roc_lines = roc_csv.lines();
    assert_eq!(roc_lines.next().unwrap(), "threshold,fpr,tpr");

    let risks_csv = std::fs::read_to_string(dir.path().join("risks_shadow_whitebox.csv")).unwrap();
    let mut risk_lines = risks_csv.lines();
    assert_eq!(risk_lines.next().unwrap(), "record_id,class,is_member,score,risk");
    assert_eq!(risk_lines.count(), N_MEMBERS + N_NONMEMBERS);

    let hist_csv = std::fs::read_to_string(dir.path().join("histogram_shadow_blackbox.csv")).unwrap();
    assert_eq!(
        hist_csv.lines().next().unwrap(),
        "bin_lo,bin_hi,member_count,nonmember_count"
    );

    let sweep_csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(
        sweep_csv.lines().next().unwrap(),
        "sigma,epsilon,test_accuracy,auc_population_loss,loss_gap"
    );
    assert_eq!(sweep_csv.lines().count(), 3);
}
