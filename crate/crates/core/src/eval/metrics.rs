use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::degrade::BoxXywh;
use crate::error::{Error, Result};
use crate::routing::{iou, Detection};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_rows(counts: Vec<Vec<u64>>) -> Result<Self> {
        let l = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != l) {
            return Err(Error::DimensionMismatch(format!("row of length {} in a {l}x{l} matrix", row.len())));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// One comma-separated row per line, no header.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<u64>().map_err(|e| Error::CorruptStream(format!("confusion cell {c:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch(preds.len(), truth.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    Ok(ratio(preds.iter().zip(truth).filter(|(p, t)| p == t).count() as u64, preds.len() as u64))
}

pub fn confusion(preds: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::LengthMismatch(preds.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&p, &t) in preds.iter().zip(truth) {
        if let Some(&label) = [p, t].iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Fraction of samples predicted within `radius` of their true index.
pub fn adjacent_accuracy(cm: &ConfusionMatrix, radius: usize) -> f64 {
    let near: u64 = cm
        .counts
        .iter()
        .enumerate()
        .flat_map(|(t, row)| row.iter().enumerate().filter(move |(p, _)| t.abs_diff(*p) <= radius).map(|(_, c)| c))
        .sum();
    ratio(near, cm.total())
}

/// A detection tagged with the test image it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDetection {
    pub image: usize,
    pub det: Detection,
}

/// True/false positive flag for each detection, in descending score order (ties keep
/// input order). Each detection claims the unmatched ground truth box it overlaps most.
fn match_detections(dets: &[ImageDetection], gts: &[Vec<BoxXywh>], iou_thresh: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].det.score.total_cmp(&dets[a].det.score));
    let mut taken: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    order
        .into_iter()
        .map(|i| {
            let d = &dets[i];
            let Some(boxes) = gts.get(d.image) else { return false };
            let best = boxes
                .iter()
                .enumerate()
                .filter(|(j, _)| !taken[d.image][*j])
                .map(|(j, g)| (j, iou(&d.det.bbox, g)))
                .filter(|(_, o)| *o >= iou_thresh)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            match best {
                Some((j, _)) => {
                    taken[d.image][j] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the precision/recall curve with the all-points precision envelope.
/// Zero when there is no ground truth.
pub fn average_precision(dets: &[ImageDetection], gts: &[Vec<BoxXywh>], iou_thresh: f64) -> f64 {
    let positives: usize = gts.iter().map(Vec::len).sum();
    if positives == 0 {
        return 0.0;
    }
    let flags = match_detections(dets, gts, iou_thresh);
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(flags.len());
    for (rank, hit) in flags.iter().enumerate() {
        tp += *hit as usize;
        points.push((tp as f64 / positives as f64, tp as f64 / (rank + 1) as f64));
    }
    // precision envelope from the right
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    ap.clamp(0.0, 1.0)
}

/// AP over the pooled test set for the single face class.
pub fn mean_ap(per_image: &[Vec<Detection>], gts: &[Vec<BoxXywh>], iou_thresh: f64) -> Result<f64> {
    if per_image.len() != gts.len() {
        return Err(Error::LengthMismatch(per_image.len(), gts.len()));
    }
    if gts.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let pooled: Vec<ImageDetection> = per_image
        .iter()
        .enumerate()
        .flat_map(|(image, dets)| dets.iter().map(move |&det| ImageDetection { image, det }))
        .collect();
    Ok(average_precision(&pooled, gts, iou_thresh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(image: usize, b: BoxXywh, score: f64) -> ImageDetection {
        ImageDetection { image, det: Detection::new(b, score) }
    }

    const GT: BoxXywh = [10.0, 10.0, 20.0, 20.0];
    const AWAY: BoxXywh = [60.0, 60.0, 10.0, 10.0];

    #[test]
    fn accuracy_and_confusion_fixture() {
        assert!((accuracy(&[0, 1, 1], &[0, 1, 0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let cm = confusion(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.row_sums(), vec![2, 1]);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert!(matches!(accuracy(&[0], &[0, 1]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(confusion(&[3], &[0], 2), Err(Error::LabelOutOfRange { label: 3, classes: 2 })));
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let t = [0, 2, 1, 2, 0];
        let cm = confusion(&t, &t, 3).unwrap();
        assert_eq!(cm.trace(), cm.total());
        assert_eq!(adjacent_accuracy(&cm, 0), 1.0);
        assert_eq!(accuracy(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let cm = confusion(&[0, 1, 2, 2, 1], &[0, 2, 2, 1, 1], 3).unwrap();
        assert_eq!(ConfusionMatrix::from_csv(&cm.to_csv()).unwrap(), cm);
    }

    fn jpeg_level_table() -> ConfusionMatrix {
        ConfusionMatrix::from_rows(vec![
            vec![2000, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![11, 1688, 194, 105, 0, 0, 0, 0, 0, 0, 0],
            vec![0, 153, 1653, 157, 37, 0, 0, 0, 0, 0, 0],
            vec![0, 9, 346, 1580, 65, 0, 0, 0, 0, 0, 0],
            vec![0, 9, 31, 102, 1649, 209, 0, 0, 0, 0, 0],
            vec![0, 0, 0, 11, 105, 1651, 233, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 8, 159, 1694, 139, 0, 0, 0],
            vec![0, 0, 0, 0, 0, 0, 64, 1910, 26, 0, 0],
            vec![0, 0, 0, 0, 0, 0, 0, 35, 1798, 167, 0],
            vec![0, 0, 0, 0, 0, 0, 0, 21, 105, 1853, 21],
            vec![0, 0, 8, 4, 0, 4, 0, 1, 0, 143, 1840],
        ])
        .unwrap()
    }

    #[test]
    fn published_jpeg_level_table_is_near_diagonal() {
        let cm = jpeg_level_table();
        // 248 of 21998 samples land two or more levels away
        let total = cm.total();
        assert_eq!(total, 21998);
        let adj = adjacent_accuracy(&cm, 1);
        assert_eq!(adj, (total - 248) as f64 / total as f64);
        assert!(adj > 0.988 && adj < 0.99);
        assert_eq!(adjacent_accuracy(&cm, 10), 1.0);
    }

    #[test]
    fn ap_worked_examples() {
        let gts = vec![vec![GT]];
        assert_eq!(average_precision(&[det(0, GT, 0.9)], &gts, 0.5), 1.0);
        assert_eq!(average_precision(&[det(0, GT, 0.9), det(0, AWAY, 0.5)], &gts, 0.5), 1.0);
        assert_eq!(average_precision(&[det(0, AWAY, 0.9), det(0, GT, 0.5)], &gts, 0.5), 0.5);
        assert_eq!(average_precision(&[], &gts, 0.5), 0.0);
    }

    #[test]
    fn duplicate_detection_of_one_box_is_a_false_positive() {
        let gts = vec![vec![GT]];
        let flags = match_detections(&[det(0, GT, 0.9), det(0, GT, 0.8)], &gts, 0.5);
        assert_eq!(flags, vec![true, false]);
    }

    #[test]
    fn mean_ap_three_image_fixture() {
        // ranked: img0 TP (.95), img1 FP (.9), img2 TP (.8), img1 TP (.6); 4 GT boxes in all
        // precision 1, 1/2, 2/3, 3/4 at recall 1/4, 1/4, 2/4, 3/4
        // envelope: 1, 3/4, 3/4, 3/4 -> AP = 1/4 + 1/4 * 3/4 + 1/4 * 3/4 = 0.625
        let gts = vec![vec![GT], vec![GT], vec![GT, AWAY]];
        let per_image = vec![
            vec![Detection::new(GT, 0.95)],
            vec![Detection::new([40.0, 40.0, 5.0, 5.0], 0.9), Detection::new(GT, 0.6)],
            vec![Detection::new(GT, 0.8)],
        ];
        assert!((mean_ap(&per_image, &gts, 0.5).unwrap() - 0.625).abs() < 1e-15);
        let perfect: Vec<Vec<Detection>> = gts.iter().map(|g| g.iter().map(|b| Detection::new(*b, 1.0)).collect()).collect();
        assert_eq!(mean_ap(&perfect, &gts, 0.5).unwrap(), 1.0);
        assert_eq!(mean_ap(&vec![vec![]; 3], &gts, 0.5).unwrap(), 0.0);
        assert!(matches!(mean_ap(&[], &[], 0.5), Err(Error::EmptyTestSet)));
    }

    /// AP from scratch: one operating point per score threshold, each matched
    /// independently, then precision maximised over all points at or beyond each recall.
    fn brute_force_ap(dets: &[ImageDetection], gts: &[Vec<BoxXywh>], t: f64) -> f64 {
        let positives: usize = gts.iter().map(Vec::len).sum();
        let mut points = Vec::new();
        for d in dets {
            let kept: Vec<ImageDetection> = dets.iter().copied().filter(|e| e.det.score >= d.det.score).collect();
            let tp = match_detections(&kept, gts, t).iter().filter(|&&h| h).count();
            points.push((tp as f64 / positives as f64, tp as f64 / kept.len() as f64));
        }
        let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
        recalls.sort_by(f64::total_cmp);
        recalls.dedup();
        let mut ap = 0.0;
        let mut prev = 0.0;
        for r in recalls {
            let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
            ap += (r - prev) * best;
            prev = r;
        }
        ap
    }

    fn fixture() -> impl Strategy<Value = (Vec<ImageDetection>, Vec<Vec<BoxXywh>>)> {
        let bx = (0u8..6, 0u8..6).prop_map(|(x, y)| [x as f64 * 8.0, y as f64 * 8.0, 12.0, 12.0]);
        let gts = prop::collection::vec(prop::collection::vec(bx.clone(), 1..3), 1..3);
        (gts, prop::collection::vec((0usize..2, bx), 0..=6)).prop_flat_map(|(gts, raw)| {
            let n = raw.len();
            (Just(gts), Just(raw), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
        })
        .prop_map(|(gts, raw, ranks)| {
            let dets = raw
                .into_iter()
                .zip(ranks)
                .map(|((img, b), r)| det(img % gts.len(), b, (r as f64 + 1.0) / 8.0))
                .collect();
            (dets, gts)
        })
    }

    proptest! {
        #[test]
        fn ap_matches_threshold_enumeration((dets, gts) in fixture()) {
            let ap = average_precision(&dets, &gts, 0.5);
            prop_assert!((0.0..=1.0).contains(&ap));
            prop_assert!((ap - brute_force_ap(&dets, &gts, 0.5)).abs() < 1e-12);
        }

        #[test]
        fn ap_depends_only_on_score_ranks((dets, gts) in fixture(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let warped: Vec<ImageDetection> = dets.iter().map(|d| det(d.image, d.det.bbox, (a * d.det.score).exp() + b)).collect();
            prop_assert_eq!(average_precision(&dets, &gts, 0.5), average_precision(&warped, &gts, 0.5));
        }

        #[test]
        fn confusion_rows_sum_to_supports(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50)) {
            let (p, t): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cm = confusion(&p, &t, 4).unwrap();
            for c in 0..4 {
                prop_assert_eq!(cm.row_sums()[c], t.iter().filter(|&&x| x == c).count() as u64);
            }
            prop_assert_eq!(cm.accuracy(), accuracy(&p, &t).unwrap());
            prop_assert_eq!(adjacent_accuracy(&cm, 3), 1.0);
        }
    }
}
