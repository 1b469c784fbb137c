//! End-point error and the corruption robustness metrics built on it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corruption::{CorruptionClass, CorruptionKind, Severity};
use crate::error::{Error, Result};
use crate::flow::{FlowField, ValidMask};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut s = CompensatedSum::default();
    let mut n = 0usize;
    for v in values {
        s.add(v);
        n += 1;
    }
    (n > 0).then(|| s.total() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpeValue {
    pub value: f64,
    pub pixel_count: usize,
}

fn check_pair(a: &FlowField, b: &FlowField, mask: Option<&ValidMask>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "flow {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if let Some(m) = mask {
        if m.dims() != a.dims() {
            return Err(Error::DimensionMismatch(format!(
                "mask {:?} vs flow {:?}",
                m.dims(),
                a.dims()
            )));
        }
    }
    a.check_finite()?;
    b.check_finite()
}

fn mean_distance(a: &FlowField, b: &FlowField, mask: Option<&ValidMask>) -> Result<EpeValue> {
    check_pair(a, b, mask)?;
    let mut s = CompensatedSum::default();
    let mut n = 0usize;
    for i in 0..a.u().len() {
        if mask.is_some_and(|m| !m.valid()[i]) {
            continue;
        }
        let du = (a.u()[i] - b.u()[i]) as f64;
        let dv = (a.v()[i] - b.v()[i]) as f64;
        s.add(du.hypot(dv));
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(EpeValue {
        value: s.total() / n as f64,
        pixel_count: n,
    })
}

/// Mean Euclidean distance between prediction and ground truth over valid pixels.
pub fn epe(pred: &FlowField, gt: &FlowField, mask: &ValidMask) -> Result<EpeValue> {
    mean_distance(pred, gt, Some(mask))
}

/// `EPE_{c,s} − EPE_clean`; negative when the corruption helped.
pub fn cre(epe_cs: EpeValue, epe_clean: EpeValue) -> Result<f64> {
    if epe_cs.pixel_count != epe_clean.pixel_count {
        return Err(Error::MaskMismatch {
            corrupted: epe_cs.pixel_count,
            clean: epe_clean.pixel_count,
        });
    }
    Ok(epe_cs.value - epe_clean.value)
}

pub fn crer(cre_total: f64, epe_clean: f64) -> Result<f64> {
    if !(epe_clean > 0.0) {
        return Err(Error::NonPositiveCleanEpe(epe_clean));
    }
    Ok(cre_total / epe_clean)
}

/// Mean distance between the corrupted-input and clean-input predictions.
/// Without a mask every pixel counts.
pub fn rcre(pred_corrupt: &FlowField, pred_clean: &FlowField, mask: Option<&ValidMask>) -> Result<f64> {
    Ok(mean_distance(pred_corrupt, pred_clean, mask)?.value)
}

/// Benchmark-level measurements for one (kind, severity) cell, already
/// averaged over pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMeasure {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub epe: Option<f64>,
    pub rcre: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub epe: Option<f64>,
    pub cre: Option<f64>,
    pub rcre: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindResult {
    pub kind: CorruptionKind,
    pub class: CorruptionClass,
    pub epe: Option<f64>,
    pub cre: Option<f64>,
    pub rcre: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub global_seed: Option<u64>,
    pub pair_count: usize,
    #[serde(default)]
    pub encoder_versions: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub schema_version: u32,
    pub model_id: String,
    pub benchmark: String,
    pub corruption_set: Vec<CorruptionKind>,
    pub epe_clean: Option<f64>,
    pub epe_corrupt: Option<f64>,
    pub cre: Option<f64>,
    pub crer: Option<f64>,
    pub rcre: Option<f64>,
    pub per_kind: Vec<KindResult>,
    pub cells: Vec<CellResult>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub metadata: ReportMetadata,
}

/// Inputs to [`aggregate`].
#[derive(Debug, Clone)]
pub struct ReportInput {
    pub model_id: String,
    pub benchmark: String,
    pub corruption_set: Vec<CorruptionKind>,
    pub epe_clean: Option<f64>,
    pub cells: Vec<CellMeasure>,
    pub metadata: ReportMetadata,
}

fn mean_opt(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let collected: Option<Vec<f64>> = values.into_iter().collect();
    collected.and_then(compensated_mean)
}

/// Builds a report from a complete (kind × severity) grid.
pub fn aggregate(input: ReportInput) -> Result<RobustnessReport> {
    let mut grid: BTreeMap<(CorruptionKind, Severity), CellMeasure> = BTreeMap::new();
    for c in &input.cells {
        if !input.corruption_set.contains(&c.kind) {
            return Err(Error::ReportMismatch(format!(
                "cell for {} outside the corruption set",
                c.kind
            )));
        }
        grid.insert((c.kind, c.severity), *c);
    }
    let mut kinds = input.corruption_set.clone();
    kinds.sort();
    kinds.dedup();
    let missing: Vec<(CorruptionKind, u8)> = kinds
        .iter()
        .flat_map(|&k| Severity::ALL.iter().map(move |&s| (k, s)))
        .filter(|key| !grid.contains_key(key))
        .map(|(k, s)| (k, s.get()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(missing));
    }

    let mut warnings = Vec::new();
    let cre_of = |epe: Option<f64>| Some(epe? - input.epe_clean?);
    let cells: Vec<CellResult> = grid
        .values()
        .map(|c| CellResult {
            kind: c.kind,
            severity: c.severity,
            epe: c.epe,
            cre: cre_of(c.epe),
            rcre: c.rcre,
        })
        .collect();
    let per_kind: Vec<KindResult> = kinds
        .iter()
        .map(|&k| {
            let of_kind = || cells.iter().filter(move |c| c.kind == k);
            KindResult {
                kind: k,
                class: k.class(),
                epe: mean_opt(of_kind().map(|c| c.epe)),
                cre: mean_opt(of_kind().map(|c| c.cre)),
                rcre: mean_opt(of_kind().map(|c| c.rcre)),
            }
        })
        .collect();
    let epe_corrupt = mean_opt(per_kind.iter().map(|k| k.epe));
    let cre = mean_opt(per_kind.iter().map(|k| k.cre));
    let rcre = mean_opt(per_kind.iter().map(|k| k.rcre));
    let crer_value = match (cre, input.epe_clean) {
        (Some(c), Some(clean)) => match crer(c, clean) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(format!("CREr not reported: {e}"));
                None
            }
        },
        _ => None,
    };
    Ok(RobustnessReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_id: input.model_id,
        benchmark: input.benchmark,
        corruption_set: kinds,
        epe_clean: input.epe_clean,
        epe_corrupt,
        cre,
        crer: crer_value,
        rcre,
        per_kind,
        cells,
        warnings,
        metadata: input.metadata,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankKey {
    Cre,
    Crer,
    Rcre,
    Epe,
}

impl RankKey {
    pub fn of(self, r: &RobustnessReport) -> Option<f64> {
        match self {
            RankKey::Cre => r.cre,
            RankKey::Crer => r.crer,
            RankKey::Rcre => r.rcre,
            RankKey::Epe => r.epe_clean,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RankKey::Cre => "CRE",
            RankKey::Crer => "CREr",
            RankKey::Rcre => "RCRE",
            RankKey::Epe => "EPE",
        }
    }
}

impl std::str::FromStr for RankKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cre" => Ok(RankKey::Cre),
            "crer" => Ok(RankKey::Crer),
            "rcre" => Ok(RankKey::Rcre),
            "epe" => Ok(RankKey::Epe),
            _ => Err(Error::Usage(format!(
                "unknown ranking key {s:?}; expected cre, crer, rcre or epe"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub model_id: String,
    pub value: f64,
}

/// Ascending ranking (lower is better). Equal values share the smaller rank
/// and are listed by model id.
pub fn rank_models(reports: &[RobustnessReport], key: RankKey) -> Result<Vec<RankEntry>> {
    rank_values(reports, key, |_, v| v)
}

pub(crate) fn rank_values(
    reports: &[RobustnessReport],
    key: RankKey,
    transform: impl Fn(&RobustnessReport, f64) -> f64,
) -> Result<Vec<RankEntry>> {
    let first = reports.first().ok_or(Error::NoReports)?;
    for r in reports {
        if r.benchmark != first.benchmark {
            return Err(Error::ReportMismatch(format!(
                "benchmark ({} vs {})",
                r.benchmark, first.benchmark
            )));
        }
        if r.corruption_set != first.corruption_set {
            return Err(Error::ReportMismatch(format!(
                "corruption set ({} vs {})",
                r.model_id, first.model_id
            )));
        }
    }
    let mut rows = reports
        .iter()
        .map(|r| {
            let v = key
                .of(r)
                .ok_or_else(|| Error::ReportMismatch(format!("{} has no {} value", r.model_id, key.label())))?;
            Ok((transform(r, v), r.model_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut out: Vec<RankEntry> = Vec::with_capacity(rows.len());
    for (i, (value, model_id)) in rows.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if prev.value == value => prev.rank,
            _ => i + 1,
        };
        out.push(RankEntry { rank, model_id, value });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let pred = FlowField::constant(4, 3, 3.0, 4.0);
        let gt = FlowField::zeros(4, 3);
        let e = epe(&pred, &gt, &ValidMask::all_valid(4, 3)).unwrap();
        assert_eq!(e.value, 5.0);
        assert_eq!(e.pixel_count, 12);
    }

    #[test]
    fn empty_mask_and_nan_rejected() {
        let f = FlowField::zeros(2, 2);
        let none = ValidMask::new(2, 2, vec![false; 4]).unwrap();
        assert!(matches!(epe(&f, &f, &none), Err(Error::EmptyMask)));
        let mut bad = FlowField::zeros(2, 2);
        bad.set(1, 0, f32::NAN, 0.0);
        assert!(epe(&bad, &f, &ValidMask::all_valid(2, 2)).is_err());
    }

    #[test]
    fn cre_and_crer() {
        let a = EpeValue {
            value: 9.54,
            pixel_count: 10,
        };
        let b = EpeValue {
            value: 4.29,
            pixel_count: 10,
        };
        assert!((cre(a, b).unwrap() - 5.25).abs() < 1e-12);
        assert!(cre(b, a).unwrap() < 0.0);
        assert!(matches!(
            cre(
                a,
                EpeValue {
                    value: 1.0,
                    pixel_count: 9
                }
            ),
            Err(Error::MaskMismatch { .. })
        ));
        assert!((crer(5.24, 4.29).unwrap() - 1.2214).abs() < 1e-4);
        assert!((crer(2.74, 3.02).unwrap() - 0.9073).abs() < 1e-4);
        assert_eq!(crer(0.0, 2.0).unwrap(), 0.0);
        assert!(crer(1.0, 0.0).is_err());
    }

    #[test]
    fn rcre_constant_offset() {
        let clean = FlowField::constant(5, 5, 0.3, -2.0);
        let shifted = FlowField::constant(5, 5, 0.3, -1.0);
        assert!((rcre(&shifted, &clean, None).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(rcre(&clean, &clean, None).unwrap(), 0.0);
    }

    fn input(cells: Vec<CellMeasure>, kinds: Vec<CorruptionKind>) -> ReportInput {
        ReportInput {
            model_id: "m".into(),
            benchmark: "kitti-fc".into(),
            corruption_set: kinds,
            epe_clean: Some(2.0),
            cells,
            metadata: ReportMetadata::default(),
        }
    }

    #[test]
    fn single_kind_mean() {
        let cells = Severity::ALL
            .iter()
            .map(|&s| CellMeasure {
                kind: CorruptionKind::Fog,
                severity: s,
                epe: Some(2.0 + s.get() as f64),
                rcre: Some(s.get() as f64),
            })
            .collect();
        let r = aggregate(input(cells, vec![CorruptionKind::Fog])).unwrap();
        assert_eq!(r.per_kind[0].cre, Some(3.0));
        assert_eq!(r.cre, Some(3.0));
        assert_eq!(r.rcre, Some(3.0));
        assert_eq!(r.crer, Some(1.5));
    }

    #[test]
    fn missing_cells_listed() {
        let cells = vec![CellMeasure {
            kind: CorruptionKind::Fog,
            severity: Severity::new(1).unwrap(),
            epe: Some(1.0),
            rcre: None,
        }];
        match aggregate(input(cells, vec![CorruptionKind::Fog, CorruptionKind::Snow])) {
            Err(Error::IncompleteGrid(m)) => {
                assert_eq!(m.len(), 9);
                assert!(m.contains(&(CorruptionKind::Snow, 5)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_clean_epe_warns() {
        let cells = Severity::ALL
            .iter()
            .map(|&s| CellMeasure {
                kind: CorruptionKind::Fog,
                severity: s,
                epe: Some(1.0),
                rcre: Some(0.0),
            })
            .collect();
        let mut inp = input(cells, vec![CorruptionKind::Fog]);
        inp.epe_clean = Some(0.0);
        let r = aggregate(inp).unwrap();
        assert_eq!(r.crer, None);
        assert!(r.warnings[0].contains("CREr"));
    }

    #[test]
    fn ties_share_rank() {
        let mk = |id: &str, v: f64| {
            let cells = Severity::ALL
                .iter()
                .map(|&s| CellMeasure {
                    kind: CorruptionKind::Fog,
                    severity: s,
                    epe: Some(2.0 + v),
                    rcre: None,
                })
                .collect();
            let mut i = input(cells, vec![CorruptionKind::Fog]);
            i.model_id = id.into();
            aggregate(i).unwrap()
        };
        let ranks = rank_models(&[mk("b", 1.0), mk("a", 1.0), mk("c", 0.5)], RankKey::Cre).unwrap();
        let got: Vec<(usize, &str)> = ranks.iter().map(|r| (r.rank, r.model_id.as_str())).collect();
        assert_eq!(got, vec![(1, "c"), (2, "a"), (2, "b")]);
        assert!(matches!(rank_models(&[], RankKey::Cre), Err(Error::NoReports)));
    }
}
