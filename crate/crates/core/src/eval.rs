//! Final change-map composition and accuracy criteria.
//!
//! With `N_c = TP + FN` changed and `N_uc = TN + FP` unchanged reference
//! pixels, `FA = FP` and `MD = FN`:
//!
//! ```text
//! P_FA = FA / (TP + FP)          P_MD = MD / N_c
//! PCC  = 1 - (FA + MD) / (N_c + N_uc)
//! PRE  = (N_c·(TP + FP) + N_uc·(FN + TN)) / N²
//! KC   = (PCC - PRE) / (1 - PRE)
//! F1   = 2·precision·recall / (precision + recall)
//! ```

use serde::{Deserialize, Serialize};

use crate::clustering::{PixelClass, TernaryMap};
use crate::error::{arg_err, Result};
use crate::raster::Raster;

/// Changed pixels of the ternary map plus the classifier's verdict on the
/// hard pixels (raster scan order). Output is `{0, 1}`.
pub fn compose_change_map(ternary: &TernaryMap, hard_labels: &[u8]) -> Result<Raster> {
    let hard = ternary.counts().hard;
    if hard_labels.len() != hard {
        return arg_err(format!("{} hard labels for {hard} hard pixels", hard_labels.len()));
    }
    let mut next = hard_labels.iter();
    let data = ternary
        .labels()
        .iter()
        .map(|l| match l {
            PixelClass::Changed => 1.0,
            PixelClass::Unchanged => 0.0,
            PixelClass::Hard => f64::from(*next.next().expect("counted above")),
        })
        .collect();
    Raster::new(ternary.width(), ternary.height(), data)
}

/// Nonzero samples are changed.
pub fn binarize(r: &Raster) -> Vec<bool> {
    r.as_slice().iter().map(|&v| v != 0.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// From false alarms, missed detections and reference class sizes.
    pub fn from_errors(fa: u64, md: u64, n_c: u64, n_uc: u64) -> Result<Self> {
        if md > n_c || fa > n_uc {
            return arg_err("error counts exceed their class sizes");
        }
        Ok(Self { tp: n_c - md, fp: fa, fn_: md, tn: n_uc - fa })
    }
}

pub fn confusion(pred: &Raster, reference: &Raster) -> Result<Counts> {
    if !pred.same_shape(reference) {
        return arg_err(format!(
            "maps differ in size: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            reference.width(),
            reference.height()
        ));
    }
    let mut c = Counts::default();
    for (p, r) in binarize(pred).into_iter().zip(binarize(reference)) {
        match (p, r) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// All rates as fractions in `[0, 1]` (KC in `[-1, 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub fa: u64,
    pub md: u64,
    pub p_fa: f64,
    pub p_md: f64,
    pub pcc: f64,
    pub pre: f64,
    pub kc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn metrics(c: &Counts) -> Result<Metrics> {
    let n = c.total();
    if n == 0 {
        return arg_err("no pixels to score");
    }
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let n_c = tp + fn_;
    let n_uc = tn + fp;
    let nf = n as f64;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, n_c);
    let pcc = 1.0 - (fp + fn_) / nf;
    let pre = (n_c * (tp + fp) + n_uc * (fn_ + tn)) / (nf * nf);
    let kc = if pre == 1.0 { if pcc == 1.0 { 1.0 } else { 0.0 } } else { (pcc - pre) / (1.0 - pre) };
    Ok(Metrics {
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        tn: c.tn,
        fa: c.fp,
        md: c.fn_,
        p_fa: ratio(fp, tp + fp),
        p_md: ratio(fn_, n_c),
        pcc,
        pre,
        kc,
        f1: ratio(2.0 * precision * recall, precision + recall),
        precision,
        recall,
    })
}

fn pct(v: f64) -> f64 {
    (v * 10000.0).round() / 100.0
}

impl Metrics {
    /// Rates as percentages rounded to two decimals, for reports.
    pub fn to_percent_report(&self) -> Metrics {
        Metrics {
            p_fa: pct(self.p_fa),
            p_md: pct(self.p_md),
            pcc: pct(self.pcc),
            pre: pct(self.pre),
            kc: pct(self.kc),
            f1: pct(self.f1),
            precision: pct(self.precision),
            recall: pct(self.recall),
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reported_row_d() {
        let m = metrics(&Counts::from_errors(279, 217, 4685, 60851).unwrap()).unwrap();
        assert_abs_diff_eq!(m.pcc * 100.0, 99.24, epsilon = 0.01);
        assert_abs_diff_eq!(m.p_fa * 100.0, 5.88, epsilon = 0.01);
        assert_abs_diff_eq!(m.p_md * 100.0, 4.63, epsilon = 0.01);
        assert_abs_diff_eq!(m.f1 * 100.0, 94.74, epsilon = 0.01);
        assert_abs_diff_eq!(m.kc * 100.0, 94.33, epsilon = 0.05);
    }

    #[test]
    fn reported_pcc_rows() {
        for &(fa, md, nc, nuc, pcc) in &[
            (390, 241, 1066, 158934, 99.61),
            (596, 315, 1492, 158508, 99.43),
            (196, 1406, 3467, 156533, 99.00),
        ] {
            let m = metrics(&Counts::from_errors(fa, md, nc, nuc).unwrap()).unwrap();
            assert_abs_diff_eq!(m.pcc * 100.0, pcc, epsilon = 0.01);
        }
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = metrics(&Counts { tp: 5, fp: 0, fn_: 0, tn: 95 }).unwrap();
        assert_eq!((m.pcc, m.kc, m.f1), (1.0, 1.0, 1.0));
        let m = metrics(&Counts { tp: 0, fp: 0, fn_: 5, tn: 95 }).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.p_fa), (0.0, 0.0, 0.0, 0.0));
        let m = metrics(&Counts { tp: 0, fp: 0, fn_: 0, tn: 10 }).unwrap();
        assert_eq!((m.pcc, m.kc), (1.0, 1.0));
        assert!(metrics(&Counts::default()).is_err());
    }

    #[test]
    fn algebraic_identities_on_random_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let c = Counts { tp: rng.random_range(0..500), fp: rng.random_range(0..500), fn_: rng.random_range(0..500), tn: rng.random_range(1..5000) };
            let m = metrics(&c).unwrap();
            let n = c.total() as f64;
            assert_abs_diff_eq!(m.pcc, (c.tp + c.tn) as f64 / n, epsilon = 1e-12);
            let d = (2 * c.tp + c.fp + c.fn_) as f64;
            assert_abs_diff_eq!(m.f1, if d == 0.0 { 0.0 } else { 2.0 * c.tp as f64 / d }, epsilon = 1e-12);
            assert!((-1.0..=1.0).contains(&m.kc));
            assert_eq!(m.kc == 1.0, c.fp == 0 && c.fn_ == 0);
        }
    }

    #[test]
    fn confusion_cases() {
        let r = Raster::new(2, 2, vec![1.0, 0.0, 255.0, 0.0]).unwrap();
        assert_eq!(confusion(&r, &r).unwrap(), Counts { tp: 2, fp: 0, fn_: 0, tn: 2 });
        let inv = r.map(|v| if v != 0.0 { 0.0 } else { 1.0 });
        assert_eq!(confusion(&inv, &r).unwrap(), Counts { tp: 0, fp: 2, fn_: 2, tn: 0 });
        assert!(confusion(&r, &Raster::zeros(3, 2)).is_err());
    }

    #[test]
    fn confusion_matches_loop_and_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Raster::from_fn(10, 10, |_, _| f64::from(rng.random_range(0..2u8)));
        let b = Raster::from_fn(10, 10, |_, _| f64::from(rng.random_range(0..2u8)));
        let c = confusion(&a, &b).unwrap();
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for i in 0..10 {
            for j in 0..10 {
                match (a.get(i, j) == 1.0, b.get(i, j) == 1.0) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => tn += 1,
                }
            }
        }
        assert_eq!(c, Counts { tp, fp, fn_, tn });
        let not_a = a.map(|v| 1.0 - v);
        let ci = confusion(&not_a, &b).unwrap();
        assert_eq!((ci.tp, ci.fn_, ci.fp, ci.tn), (c.fn_, c.tp, c.tn, c.fp));
    }

    #[test]
    fn composition() {
        use PixelClass::*;
        // 3x3: C H U / H H C / U U H  with hard verdicts 1 0 1 0
        let t = TernaryMap::new(3, 3, vec![Changed, Hard, Unchanged, Hard, Hard, Changed, Unchanged, Unchanged, Hard]).unwrap();
        let m = compose_change_map(&t, &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let all = compose_change_map(&t, &[1; 4]).unwrap();
        assert_eq!(all.as_slice().iter().sum::<f64>(), 6.0);
        assert!(compose_change_map(&t, &[1; 3]).is_err());
        let plain = TernaryMap::new(2, 1, vec![Changed, Unchanged]).unwrap();
        assert_eq!(compose_change_map(&plain, &[]).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn percent_report_rounds() {
        let m = metrics(&Counts::from_errors(279, 217, 4685, 60851).unwrap()).unwrap().to_percent_report();
        assert_eq!(m.pcc, 99.24);
        assert_eq!(m.tp, 4468);
    }
}
