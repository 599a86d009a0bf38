//! Segmentation scores (APE, part-aware IoU, part-aware Hausdorff@95),
//! step classification and per-category benchmark reports.

mod distance;
mod hungarian;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use distance::{directed_hausdorff95, hausdorff95_pair, nearest_rank, squared_distance_transform};
pub use hungarian::{hungarian, AssignMode, Assignment};

use crate::grid::{LabelImage, Mask};
use crate::harness::EpisodeRecord;
use crate::memory::{Segmentation, UpdateCase};
use crate::sim::{Action, PartLabelImage, StepOutcome};
use crate::{Error, Result, MIN_PART_AREA};

fn check(g: &[Mask], h: &[Mask]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::UndefinedMetric("empty ground truth"));
    }
    if let Some(i) = g.iter().chain(h).position(Mask::is_empty) {
        return Err(Error::DegenerateMask(i));
    }
    Ok(())
}

pub fn ape(g: &[Mask], h: &[Mask]) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::UndefinedMetric("empty ground truth"));
    }
    Ok((g.len() as f64 - h.len() as f64).abs() / g.len() as f64)
}

pub fn part_iou(g: &[Mask], h: &[Mask]) -> Result<f64> {
    check(g, h)?;
    if h.is_empty() {
        return Ok(0.0);
    }
    let iou: Vec<Vec<f64>> = g.iter().map(|a| h.iter().map(|b| a.iou(b)).collect()).collect();
    let total = hungarian(&iou, AssignMode::Maximize).total;
    Ok(total / g.len().max(h.len()) as f64)
}

pub fn hausdorff95(g: &[Mask], h: &[Mask]) -> Result<f64> {
    check(g, h)?;
    let cost: Vec<Vec<f64>> = g.iter().map(|a| h.iter().map(|b| hausdorff95_pair(a, b)).collect()).collect();
    let matched = hungarian(&cost, AssignMode::Minimize);
    let ones = Mask::full();
    let mut total = matched.total;
    for (i, a) in g.iter().enumerate() {
        if matched.col_of(i).is_none() {
            total += hausdorff95_pair(a, &ones);
        }
    }
    for (j, b) in h.iter().enumerate() {
        if !matched.pairs.iter().any(|p| p.1 == j) {
            total += hausdorff95_pair(b, &ones);
        }
    }
    Ok(total / g.len().max(h.len()) as f64)
}

/// Non-empty ground-truth part masks for labels `1..=links`.
pub fn ground_truth_masks(labels: &LabelImage, links: usize) -> Vec<Mask> {
    (1..=links as u8).map(|l| labels.mask_of(l)).filter(|m| !m.is_empty()).collect()
}

/// Predicted masks from a flattened memory; parts smaller than the motion
/// threshold are dropped.
pub fn predicted_masks(seg: &Segmentation) -> Vec<Mask> {
    (1..=seg.max_label())
        .map(|l| seg.mask_of(l))
        .filter(|m| m.area() >= MIN_PART_AREA)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepClassification {
    pub effective: bool,
    pub optimal: bool,
}

pub fn classify_step(
    labels_t: &PartLabelImage,
    action: &Action,
    outcome: &StepOutcome,
    case: UpdateCase,
    discovered_before: usize,
    gt_parts: usize,
) -> StepClassification {
    let hold = action.hold.map_or(0, |p| labels_t.get(p));
    let push = labels_t.get(action.push);
    let effective = hold > 0 && push > 0 && hold != push && outcome.moved_pixel_count >= MIN_PART_AREA;
    let optimal = (effective && case.discovers_part())
        || (discovered_before >= gt_parts && case == UpdateCase::ExistingPart);
    StepClassification { effective, optimal }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    pub ape: f64,
    pub hausdorff95: f64,
    pub part_iou: f64,
    pub effective: bool,
    pub optimal: bool,
}

/// Score a flattened memory against ground-truth labels.
pub fn score(labels: &LabelImage, links: usize, seg: &Segmentation) -> Result<(f64, f64, f64)> {
    let g = ground_truth_masks(labels, links);
    let h = predicted_masks(seg);
    Ok((ape(&g, &h)?, hausdorff95(&g, &h)?, part_iou(&g, &h)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub category: String,
    /// 1-based interaction count.
    pub timestep: usize,
    pub episodes: usize,
    pub mape: f64,
    pub dh95_px: f64,
    pub miou_pct: f64,
    pub effective_rate: f64,
    pub optimal_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: String,
    pub episodes: usize,
    /// Perceptual means at the final timestep.
    pub mape: f64,
    pub dh95_px: f64,
    pub miou_pct: f64,
    /// Rates over all timesteps.
    pub effective_rate: f64,
    pub optimal_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<CategorySummary>,
}

#[derive(Default)]
struct Acc {
    n: usize,
    ape: f64,
    h95: f64,
    iou: f64,
    eff: usize,
    opt: usize,
}

impl Acc {
    fn add(&mut self, m: &StepMetrics) {
        self.n += 1;
        self.ape += m.ape;
        self.h95 += m.hausdorff95;
        self.iou += m.part_iou;
        self.eff += m.effective as usize;
        self.opt += m.optimal as usize;
    }

    fn rate(&self, k: usize) -> f64 {
        k as f64 / self.n.max(1) as f64
    }

    fn mean(&self, s: f64) -> f64 {
        s / self.n.max(1) as f64
    }
}

/// Per-(category, timestep) means. Input order fixes the summation order.
pub fn aggregate_metrics<'a>(episodes: impl IntoIterator<Item = (&'a str, &'a [StepMetrics])>, seeds: &[u64]) -> BenchmarkReport {
    let mut cells: BTreeMap<(String, usize), Acc> = BTreeMap::new();
    let mut all: BTreeMap<String, (Acc, usize, usize)> = BTreeMap::new();
    for (category, steps) in episodes {
        let entry = all.entry(category.to_string()).or_insert_with(|| (Acc::default(), 0, 0));
        entry.1 += 1;
        entry.2 = entry.2.max(steps.len());
        for (t, m) in steps.iter().enumerate() {
            entry.0.add(m);
            cells.entry((category.to_string(), t + 1)).or_default().add(m);
        }
    }
    let rows: Vec<ReportRow> = cells
        .iter()
        .map(|((category, timestep), a)| ReportRow {
            category: category.clone(),
            timestep: *timestep,
            episodes: a.n,
            mape: a.mean(a.ape),
            dh95_px: a.mean(a.h95),
            miou_pct: 100.0 * a.mean(a.iou),
            effective_rate: a.rate(a.eff),
            optimal_rate: a.rate(a.opt),
        })
        .collect();
    let summary = all
        .iter()
        .map(|(category, (a, n, last))| {
            let fin = rows.iter().find(|r| &r.category == category && r.timestep == *last);
            CategorySummary {
                category: category.clone(),
                episodes: *n,
                mape: fin.map_or(0.0, |r| r.mape),
                dh95_px: fin.map_or(0.0, |r| r.dh95_px),
                miou_pct: fin.map_or(0.0, |r| r.miou_pct),
                effective_rate: a.rate(a.eff),
                optimal_rate: a.rate(a.opt),
            }
        })
        .collect();
    BenchmarkReport {
        seeds: seeds.to_vec(),
        rows,
        summary,
    }
}

pub fn aggregate(records: &[EpisodeRecord], seeds: &[u64]) -> BenchmarkReport {
    let metrics: Vec<Vec<StepMetrics>> = records.iter().map(EpisodeRecord::step_metrics).collect();
    aggregate_metrics(
        records.iter().zip(&metrics).map(|(r, m)| (r.category.as_str(), m.as_slice())),
        seeds,
    )
}

impl BenchmarkReport {
    pub fn row(&self, category: &str, timestep: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.category == category && r.timestep == timestep)
    }

    pub fn summary_for(&self, category: &str) -> Option<&CategorySummary> {
        self.summary.iter().find(|s| s.category == category)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,timestep,MAPE,dH95_px,mIoU_pct,effective_rate,optimal_rate\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.category, r.timestep, r.mape, r.dh95_px, r.miou_pct, r.effective_rate, r.optimal_rate
            );
        }
        out
    }

    pub fn write(&self, json_path: &std::path::Path) -> Result<()> {
        std::fs::write(json_path, self.to_json())?;
        std::fs::write(json_path.with_extension("csv"), self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Direction, Pixel};

    fn parts() -> Vec<Mask> {
        vec![Mask::rect(10, 10, 30, 20), Mask::rect(30, 10, 40, 50)]
    }

    #[test]
    fn ape_examples() {
        let m = parts();
        assert_eq!(ape(&m, &m).unwrap(), 0.0);
        let three = [m.clone(), vec![Mask::rect(0, 0, 2, 2)]].concat();
        assert_eq!(ape(&three, &m).unwrap(), 1.0 / 3.0);
        assert_eq!(ape(&m, &three).unwrap(), 0.5);
        assert!(matches!(ape(&[], &m), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn identities() {
        let g = parts();
        assert_eq!(part_iou(&g, &g).unwrap(), 1.0);
        assert_eq!(hausdorff95(&g, &g).unwrap(), 0.0);
        let rev: Vec<Mask> = g.iter().rev().cloned().collect();
        assert_eq!(part_iou(&g, &rev).unwrap(), 1.0);
        assert_eq!(part_iou(&g, &g[..1]).unwrap(), 0.5);
        assert_eq!(part_iou(&g, &[]).unwrap(), 0.0);
    }

    #[test]
    fn unmatched_part_scores_against_ones() {
        let g = vec![Mask::rect(40, 40, 50, 50)];
        let extra = Mask::rect(0, 0, 5, 5);
        let h = vec![g[0].clone(), extra.clone()];
        let expected = hausdorff95_pair(&extra, &Mask::full()) / 2.0;
        assert_eq!(hausdorff95(&g, &h).unwrap(), expected);
        assert!(expected > 0.0);
        assert!(hausdorff95(&g, &[]).unwrap() > 0.0);
    }

    #[test]
    fn step_classification() {
        let mut labels = LabelImage::default();
        for p in Mask::rect(0, 0, 10, 10).pixels() {
            labels.set(p, 1);
        }
        for p in Mask::rect(0, 10, 10, 20).pixels() {
            labels.set(p, 2);
        }
        let moved = StepOutcome { moved_pixel_count: 50, per_link_transform: vec![], clamped: false };
        let act = Action { hold: Some(Pixel::new(5, 5)), push: Pixel::new(5, 15), direction: Direction::new(2).unwrap() };
        let c = classify_step(&labels, &act, &moved, UpdateCase::NewPart, 0, 2);
        assert_eq!(c, StepClassification { effective: true, optimal: true });
        let bg = Action { push: Pixel::new(50, 50), ..act };
        assert_eq!(classify_step(&labels, &bg, &moved, UpdateCase::NoMovement, 0, 2), StepClassification::default());
        let free = Action { hold: None, ..act };
        let c = classify_step(&labels, &free, &moved, UpdateCase::ExistingPart, 2, 2);
        assert_eq!(c, StepClassification { effective: false, optimal: true });
    }

    #[test]
    fn aggregate_means() {
        let a = [StepMetrics { part_iou: 0.4, effective: true, ..Default::default() }];
        let b = [StepMetrics { part_iou: 0.6, optimal: true, ..Default::default() }];
        let r = aggregate_metrics([("2-link", &a[..]), ("2-link", &b[..])], &[1]);
        let row = r.row("2-link", 1).unwrap();
        assert!((row.miou_pct - 50.0).abs() < 1e-12);
        assert_eq!((row.effective_rate, row.optimal_rate, row.episodes), (0.5, 0.5, 2));
        assert!(r.to_csv().starts_with("category,timestep,MAPE,dH95_px,mIoU_pct,effective_rate,optimal_rate\n2-link,1,"));
        let single = aggregate_metrics([("3-link", &a[..])], &[]);
        assert_eq!(single.row("3-link", 1).unwrap().miou_pct, 40.0);
    }
}
