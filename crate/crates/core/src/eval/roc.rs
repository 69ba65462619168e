//! Mann–Whitney AUC, ROC staircases and threshold detection rates.
//! Adversarial is the positive class; higher scores mean "more adversarial".

use crate::error::{Error, Result};
use crate::td::Label;

/// Exact AUC as `num / den`, with `den = 2·n_adv·n_benign` and ties worth
/// one unit (half a win).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AucRatio {
    pub num: u128,
    pub den: u128,
}

impl AucRatio {
    /// Correctly rounded value. Values above one half are computed as
    /// `1 - (den - num) / den` so that flipping labels sums to exactly 1.0.
    pub fn value(&self) -> f64 {
        let (n, d) = (self.num as f64, self.den as f64);
        if 2 * self.num <= self.den {
            n / d
        } else {
            1.0 - (self.den - self.num) as f64 / d
        }
    }
}

fn counts(records: &[(f64, Label)]) -> Result<(usize, usize)> {
    if records.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let pos = records.iter().filter(|(_, l)| l.is_adversarial()).count();
    let neg = records.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidParameter(format!(
            "AUC needs both labels (adversarial {pos}, benign {neg})"
        )));
    }
    Ok((pos, neg))
}

pub fn auc_ratio(records: &[(f64, Label)]) -> Result<AucRatio> {
    let (pos, neg) = counts(records)?;
    let mut sorted: Vec<(f64, Label)> = records.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut num: u128 = 0;
    let mut benign_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let group = &sorted[i..j];
        let adv = group.iter().filter(|(_, l)| l.is_adversarial()).count() as u128;
        let ben = group.len() as u128 - adv;
        num += adv * (2 * benign_below + ben);
        benign_below += ben;
        i = j;
    }
    Ok(AucRatio {
        num,
        den: 2 * pos as u128 * neg as u128,
    })
}

/// P(score_adv > score_benign) + ½·P(tie).
pub fn auc(records: &[(f64, Label)]) -> Result<f64> {
    Ok(auc_ratio(records)?.value())
}

/// `(fpr, tpr)` points from `(0,0)` to `(1,1)`, one step per distinct score
/// taken as a `score >= threshold` cut, highest first.
pub fn roc_curve(records: &[(f64, Label)]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = counts(records)?;
    let mut sorted: Vec<(f64, Label)> = records.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1.is_adversarial() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoid area under a point sequence.
pub fn roc_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Fraction of adversarial records scoring strictly above `threshold`;
/// 0 when there are none.
pub fn detection_rate(records: &[(f64, Label)], threshold: f64) -> f64 {
    let adv: Vec<f64> = records
        .iter()
        .filter(|(_, l)| l.is_adversarial())
        .map(|(s, _)| *s)
        .collect();
    if adv.is_empty() {
        return 0.0;
    }
    adv.iter().filter(|&&s| s > threshold).count() as f64 / adv.len() as f64
}

/// Gnuplot-friendly `fpr tpr` lines.
pub fn roc_points_text(points: &[(f64, f64)]) -> String {
    let mut out = String::from("# fpr tpr\n");
    for (x, y) in points {
        out.push_str(&format!("{x:.6} {y:.6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Adversarial as A, Benign as B};

    fn flip(records: &[(f64, Label)]) -> Vec<(f64, Label)> {
        records
            .iter()
            .map(|&(s, l)| (s, if l == A { B } else { A }))
            .collect()
    }

    /// Direct pair enumeration.
    fn pairwise(records: &[(f64, Label)]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for &(sa, la) in records {
            for &(sb, lb) in records {
                if la == A && lb == B {
                    pairs += 1.0;
                    credit += if sa > sb {
                        1.0
                    } else if sa == sb {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn hand_enumerated_example() {
        let r = [(0.1, B), (0.4, B), (0.3, A), (0.9, A)];
        assert_eq!(auc(&r).unwrap(), 0.75);
        assert_eq!(auc_ratio(&r).unwrap(), AucRatio { num: 6, den: 8 });
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(auc(&[(0.0, B), (0.2, B), (0.5, A)]).unwrap(), 1.0);
        assert_eq!(auc(&[(0.3, B), (0.3, A), (0.3, B), (0.3, A)]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auc(&[(0.1, A), (0.2, A)]).is_err());
        assert!(roc_curve(&[(0.1, B)]).is_err());
        assert!(auc(&[]).is_err());
    }

    #[test]
    fn two_point_curve() {
        assert_eq!(
            roc_curve(&[(0.1, B), (0.9, A)]).unwrap(),
            vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
        );
    }

    #[test]
    fn detection_rate_examples() {
        let r = [(0.5, A), (0.2, A), (0.0, B)];
        assert_eq!(detection_rate(&r, 0.0), 1.0);
        assert_eq!(detection_rate(&r, 0.9), 0.0);
        assert_eq!(detection_rate(&r, 0.3), 0.5);
        assert_eq!(detection_rate(&[(0.1, B)], 0.0), 0.0);
    }

    fn arb_records() -> impl Strategy<Value = Vec<(f64, Label)>> {
        (
            prop::collection::vec((0u8..12, any::<bool>()), 0..40),
            0u8..12,
            0u8..12,
        )
            .prop_map(|(mut v, a, b)| {
                v.push((a, true));
                v.push((b, false));
                v.into_iter()
                    .map(|(s, adv)| (f64::from(s) / 11.0, if adv { A } else { B }))
                    .collect()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_pairwise_and_trapezoid(r in arb_records()) {
            let a = auc(&r).unwrap();
            prop_assert!((a - pairwise(&r)).abs() < 1e-12);
            prop_assert!((roc_area(&roc_curve(&r).unwrap()) - a).abs() < 1e-12);
        }

        #[test]
        fn flipped_labels_sum_to_one(r in arb_records()) {
            let a = auc_ratio(&r).unwrap();
            let f = auc_ratio(&flip(&r)).unwrap();
            prop_assert_eq!(a.num + f.num, a.den);
            prop_assert_eq!(a.value() + f.value(), 1.0);
        }

        #[test]
        fn monotone_invariance(r in arb_records()) {
            let mapped: Vec<(f64, Label)> = r.iter().map(|&(s, l)| ((3.0 * s).exp() - 7.0, l)).collect();
            prop_assert_eq!(auc_ratio(&r).unwrap(), auc_ratio(&mapped).unwrap());
        }

        #[test]
        fn staircase_is_monotone(r in arb_records()) {
            let pts = roc_curve(&r).unwrap();
            prop_assert_eq!(pts[0], (0.0, 0.0));
            prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
            for w in pts.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn detection_rate_counts(r in arb_records(), t in 0.0f64..1.0) {
            let adv: Vec<f64> = r.iter().filter(|x| x.1 == A).map(|x| x.0).collect();
            let brute = adv.iter().filter(|&&s| s > t).count() as f64 / adv.len() as f64;
            prop_assert_eq!(detection_rate(&r, t), brute);
        }
    }
}
