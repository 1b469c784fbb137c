use flowcorrupt::metrics::{
    aggregate, compensated_mean, epe, rank_models, rcre, CellMeasure, CompensatedSum, RankKey, ReportInput,
    ReportMetadata, RobustnessReport,
};
use flowcorrupt::{CorruptionKind, FlowField, Severity, ValidMask};
use proptest::prelude::*;

const RAFT_OOD_CRE: [f64; 20] = [
    5.99, 0.24, 0.48, 1.44, 0.90, 2.95, 2.45, 0.05, 17.20, 2.05, 23.46, 9.71, 9.48, 7.92, 9.91, 1.85, 2.02, 4.72, 0.93,
    1.11,
];
const ARFLOW_ID_CRE: [f64; 20] = [
    0.92, 0.05, 4.67, 0.34, 1.64, 3.86, 0.64, 0.42, 5.74, 4.10, 15.51, 7.58, 2.28, 1.77, 2.35, 0.28, 0.30, 0.81, 0.84,
    0.73,
];

/// Report whose every severity of kind `i` sits `per_kind[i]` above the clean EPE.
fn report_from_row(model: &str, clean: f64, per_kind: &[f64]) -> RobustnessReport {
    let kinds = CorruptionKind::kitti_set();
    assert_eq!(kinds.len(), per_kind.len());
    let cells = kinds
        .iter()
        .zip(per_kind)
        .flat_map(|(&kind, &cre)| {
            Severity::ALL.into_iter().map(move |severity| CellMeasure {
                kind,
                severity,
                epe: Some(clean + cre),
                rcre: None,
            })
        })
        .collect();
    aggregate(ReportInput {
        model_id: model.into(),
        benchmark: "kitti-fc".into(),
        corruption_set: kinds,
        epe_clean: Some(clean),
        cells,
        metadata: ReportMetadata::default(),
    })
    .unwrap()
}

/// Report with a chosen clean EPE of 1, so CREr equals CRE.
fn report_with_crer(model: &str, crer: f64) -> RobustnessReport {
    report_from_row(model, 1.0, &[crer; 20])
}

#[test]
fn published_rows_reproduce_averages() {
    let raft = report_from_row("raft", 4.29, &RAFT_OOD_CRE);
    assert!((raft.cre.unwrap() - 5.24).abs() <= 0.02, "{:?}", raft.cre);
    assert!((raft.crer.unwrap() - 1.22).abs() <= 0.01, "{:?}", raft.crer);
    let arflow = report_from_row("arflow", 3.02, &ARFLOW_ID_CRE);
    assert!((arflow.cre.unwrap() - 2.74).abs() <= 0.02, "{:?}", arflow.cre);
    assert!((arflow.crer.unwrap() - 0.91).abs() <= 0.01, "{:?}", arflow.crer);
}

#[test]
fn per_kind_cre_is_severity_mean() {
    let r = report_from_row("raft", 4.29, &RAFT_OOD_CRE);
    for (k, &expected) in r.per_kind.iter().zip(&RAFT_OOD_CRE) {
        assert!((k.cre.unwrap() - expected).abs() < 1e-9, "{}", k.kind);
    }
}

#[test]
fn published_ood_ranking() {
    let table = [
        ("SAMFlow-B", 1.09, 1),
        ("FlowFormer", 1.13, 2),
        ("CSFlow", 1.16, 3),
        ("SAMFlow-T", 1.17, 4),
        ("GMFlowNet", 1.21, 5),
        ("RAFT", 1.22, 6),
        ("FlowFormer++", 1.22, 6),
        ("SAMFlow-H", 1.22, 6),
        ("SKFlow", 1.34, 9),
        ("CRAFT", 1.37, 10),
        ("GMA", 1.38, 11),
    ];
    let reports: Vec<_> = table.iter().rev().map(|(m, v, _)| report_with_crer(m, *v)).collect();
    let ranked = rank_models(&reports, RankKey::Crer).unwrap();
    for (model, _, rank) in table {
        let e = ranked.iter().find(|e| e.model_id == model).unwrap();
        assert_eq!(e.rank, rank, "{model}");
    }
    // Ties are listed by model id.
    let tied: Vec<&str> = ranked
        .iter()
        .filter(|e| e.rank == 6)
        .map(|e| e.model_id.as_str())
        .collect();
    assert_eq!(tied, ["FlowFormer++", "RAFT", "SAMFlow-H"]);
}

#[test]
fn published_id_ranking_ends() {
    let table = [
        ("ARFlow", 0.91),
        ("BrightFlow", 1.06),
        ("UPFlow", 1.08),
        ("CRAFT", 1.49),
        ("CSFlow", 2.19),
        ("SAMFlow-H", 2.25),
        ("SAMFlow-T", 2.33),
        ("SAMFlow-B", 2.36),
        ("SKFlow", 2.46),
        ("FlowFormer++", 2.77),
        ("FlowFormer", 2.93),
        ("GMFlowNet", 3.02),
        ("GMA", 3.38),
        ("RAFT", 3.70),
    ];
    let reports: Vec<_> = table.iter().map(|(m, v)| report_with_crer(m, *v)).collect();
    let ranked = rank_models(&reports, RankKey::Crer).unwrap();
    let order: Vec<&str> = ranked.iter().map(|e| e.model_id.as_str()).collect();
    let expected: Vec<&str> = table.iter().map(|(m, _)| *m).collect();
    assert_eq!(order, expected);
    assert_eq!(ranked.last().unwrap().rank, 14);
}

fn oracle_mean_distance(a: &FlowField, b: &FlowField, mask: Option<&ValidMask>) -> Option<f64> {
    let (w, h) = a.dims();
    let mut total = 0.0f64;
    let mut n = 0u32;
    for y in 0..h {
        for x in 0..w {
            if let Some(m) = mask {
                if !m.is_valid(x, y) {
                    continue;
                }
            }
            let (au, av) = a.at(x, y);
            let (bu, bv) = b.at(x, y);
            let du = au as f64 - bu as f64;
            let dv = av as f64 - bv as f64;
            total += (du * du + dv * dv).sqrt();
            n += 1;
        }
    }
    (n > 0).then(|| total / n as f64)
}

fn field_8x8() -> impl Strategy<Value = FlowField> {
    (
        prop::collection::vec(-50f32..50.0, 64),
        prop::collection::vec(-50f32..50.0, 64),
    )
        .prop_map(|(u, v)| FlowField::new(8, 8, u, v).unwrap())
}

fn mask_8x8() -> impl Strategy<Value = ValidMask> {
    prop::collection::vec(any::<bool>(), 64).prop_map(|m| ValidMask::new(8, 8, m).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn epe_and_rcre_match_scalar_loop(a in field_8x8(), b in field_8x8(), mask in mask_8x8()) {
        match oracle_mean_distance(&a, &b, Some(&mask)) {
            Some(expected) => {
                let got = epe(&a, &b, &mask).unwrap();
                prop_assert!((got.value - expected).abs() <= 1e-6);
                prop_assert_eq!(got.pixel_count, mask.count());
                prop_assert!((rcre(&a, &b, Some(&mask)).unwrap() - expected).abs() <= 1e-6);
            }
            None => prop_assert!(epe(&a, &b, &mask).is_err()),
        }
        let unmasked = oracle_mean_distance(&a, &b, None).unwrap();
        prop_assert!((rcre(&a, &b, None).unwrap() - unmasked).abs() <= 1e-6);
    }

    #[test]
    fn epe_is_symmetric_and_zero_on_self(a in field_8x8(), b in field_8x8()) {
        let all = ValidMask::all_valid(8, 8);
        prop_assert_eq!(epe(&a, &a, &all).unwrap().value, 0.0);
        let ab = epe(&a, &b, &all).unwrap().value;
        let ba = epe(&b, &a, &all).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-12);
    }

    #[test]
    fn ranking_survives_monotone_transforms(values in prop::collection::vec(0.01f64..10.0, 2..12)) {
        let plain: Vec<_> = values.iter().enumerate().map(|(i, v)| report_with_crer(&format!("m{i:02}"), *v)).collect();
        let squashed: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, v)| report_with_crer(&format!("m{i:02}"), (v.ln() + 5.0).sqrt()))
            .collect();
        let a = rank_models(&plain, RankKey::Crer).unwrap();
        let b = rank_models(&squashed, RankKey::Crer).unwrap();
        let key = |r: &[flowcorrupt::metrics::RankEntry]| r.iter().map(|e| (e.model_id.clone(), e.rank)).collect::<Vec<_>>();
        prop_assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn compensated_sum_ignores_order(
        (values, shuffled) in prop::collection::vec(-1e6f64..1e6, 1..200)
            .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
    ) {
        let a = compensated_mean(values).unwrap();
        let b = compensated_mean(shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn compensation_recovers_small_terms() {
    let mut s = CompensatedSum::default();
    s.add(1e16);
    for _ in 0..1000 {
        s.add(1.0);
    }
    s.add(-1e16);
    assert_eq!(s.total(), 1000.0);
}
