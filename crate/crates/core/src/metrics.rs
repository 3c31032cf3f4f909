//! Voxelwise overlap metrics, aggregation and the paired t-test.
//!
//! Empty-mask conventions: both empty gives 1 for all three metrics; an
//! empty prediction against a nonempty truth gives 0 for all three, as does
//! a nonempty prediction against an empty truth.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::volume::BinaryMask;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CaseMetrics {
    pub case_id: String,
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl CaseMetrics {
    pub fn from_counts(case_id: impl Into<String>, tp: u64, fp: u64, fn_: u64) -> Self {
        let (dice, precision, recall) = if tp + fp + fn_ == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            (ratio(2 * tp, 2 * tp + fp + fn_), ratio(tp, tp + fp), ratio(tp, tp + fn_))
        };
        Self { case_id: case_id.into(), dice, precision, recall, tp, fp, fn_ }
    }
}

pub fn compute_case_metrics(case_id: &str, pred: &BinaryMask, truth: &BinaryMask) -> Result<CaseMetrics> {
    if pred.dims() != truth.dims() {
        return Err(Error::GridMismatch("prediction and truth dims differ"));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(CaseMetrics::from_counts(case_id, tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single case.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("no values to summarize"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        };
        Ok(Self { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Comparison {
    pub dice: TTest,
    pub precision: TTest,
    pub recall: TTest,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub cases: Vec<CaseMetrics>,
    pub dice: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub comparison: Option<Comparison>,
}

pub fn aggregate(cases: &[CaseMetrics]) -> Result<MetricsReport> {
    if cases.is_empty() {
        return Err(Error::EmptyInput("no cases to aggregate"));
    }
    let col = |f: fn(&CaseMetrics) -> f64| -> Vec<f64> { cases.iter().map(f).collect() };
    Ok(MetricsReport {
        cases: cases.to_vec(),
        dice: Summary::of(&col(|c| c.dice))?,
        precision: Summary::of(&col(|c| c.precision))?,
        recall: Summary::of(&col(|c| c.recall))?,
        comparison: None,
    })
}

impl MetricsReport {
    /// Paired t-tests against `baseline`, matching cases by position.
    pub fn compare_with(&mut self, baseline: &MetricsReport) -> Result<()> {
        if self.cases.len() != baseline.cases.len() {
            return Err(Error::param("baseline", "case counts differ"));
        }
        let col = |r: &MetricsReport, f: fn(&CaseMetrics) -> f64| -> Vec<f64> { r.cases.iter().map(f).collect() };
        self.comparison = Some(Comparison {
            dice: paired_t_test(&col(self, |c| c.dice), &col(baseline, |c| c.dice))?,
            precision: paired_t_test(&col(self, |c| c.precision), &col(baseline, |c| c.precision))?,
            recall: paired_t_test(&col(self, |c| c.recall), &col(baseline, |c| c.recall))?,
        });
        Ok(())
    }
}

/// Two-sided paired Student's t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::param("b", "samples must have equal length"));
    }
    if a.len() < 2 {
        return Err(Error::param("a", "need at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = Summary::of(&d)?;
    if s.std == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let n = d.len() as f64;
    let t = s.mean / (s.std / libm::sqrt(n));
    let df = d.len() - 1;
    Ok(TTest { t, p_value: student_t_two_sided(t, df as f64), degrees_of_freedom: df })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom, via
/// `I_{df / (df + t^2)}(df / 2, 1 / 2)`. Accurate to about 1e-12.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    // The fraction converges fast for x < (a + 1) / (a + b + 2).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_fraction(1.0 - x, b, a) / b
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn mask_from(g: Grid, idx: &[usize]) -> BinaryMask {
        let mut m = BinaryMask::empty(g);
        for &i in idx {
            m.set(i, true);
        }
        m
    }

    #[test]
    fn identical_and_disjoint() {
        let g = Grid::cube(4).unwrap();
        let a = mask_from(g, &[1, 2, 3]);
        let c = compute_case_metrics("c", &a, &a).unwrap();
        assert_eq!((c.dice, c.precision, c.recall), (1.0, 1.0, 1.0));
        let b = mask_from(g, &[10, 11]);
        let c = compute_case_metrics("c", &a, &b).unwrap();
        assert_eq!((c.dice, c.precision, c.recall), (0.0, 0.0, 0.0));
    }

    #[test]
    fn eight_versus_four_overlap_four() {
        let g = Grid::cube(4).unwrap();
        let pred = mask_from(g, &[0, 1, 2, 3, 4, 5, 6, 7]);
        let truth = mask_from(g, &[0, 1, 2, 3]);
        let c = compute_case_metrics("c", &pred, &truth).unwrap();
        assert!((c.dice - 8.0 / 12.0).abs() < 1e-15);
        assert_eq!(c.precision, 0.5);
        assert_eq!(c.recall, 1.0);
        assert_eq!((c.tp, c.fp, c.fn_), (4, 4, 0));
    }

    #[test]
    fn empty_conventions() {
        let g = Grid::cube(3).unwrap();
        let e = BinaryMask::empty(g);
        let f = mask_from(g, &[4]);
        let both = compute_case_metrics("", &e, &e).unwrap();
        assert_eq!((both.dice, both.precision, both.recall), (1.0, 1.0, 1.0));
        let miss = compute_case_metrics("", &e, &f).unwrap();
        assert_eq!((miss.dice, miss.precision, miss.recall), (0.0, 0.0, 0.0));
        let spurious = compute_case_metrics("", &f, &e).unwrap();
        assert_eq!((spurious.dice, spurious.precision, spurious.recall), (0.0, 0.0, 0.0));
    }

    #[test]
    fn dims_mismatch() {
        let a = BinaryMask::empty(Grid::cube(3).unwrap());
        let b = BinaryMask::empty(Grid::cube(4).unwrap());
        assert!(compute_case_metrics("", &a, &b).is_err());
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let one = aggregate(&[CaseMetrics::from_counts("a", 3, 1, 1)]).unwrap();
        assert_eq!(one.dice.mean, 0.75);
        assert_eq!(one.dice.std, 0.0);
        let mut a = CaseMetrics::from_counts("a", 1, 1, 0);
        a.dice = 0.5;
        let mut b = a.clone();
        b.dice = 0.7;
        let r = aggregate(&[a.clone(), b.clone()]).unwrap();
        assert!((r.dice.mean - 0.6).abs() < 1e-15);
        assert!((r.dice.std - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert_eq!(aggregate(&[b, a]).unwrap().dice, r.dice);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn t_test_cases() {
        assert_eq!(paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateVariance));
        let zero = [0.0; 4];
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &zero).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = paired_t_test(&[1.0, 1.1, 0.9, 1.05], &zero).unwrap();
        assert!(r.p_value < 1e-3, "{}", r.p_value);
        assert_eq!(r.degrees_of_freedom, 3);
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn t_tail_known_values() {
        // df = 1 is Cauchy: P(|T| >= 1) = 0.5.
        assert!((student_t_two_sided(1.0, 1.0) - 0.5).abs() < 1e-12);
        // df = 2 closed form: p = 1 - t / sqrt(2 + t^2).
        for t in [0.3, 1.7, 4.2, 12.0] {
            let p = 1.0 - t / libm::sqrt(2.0 + t * t);
            assert!((student_t_two_sided(t, 2.0) - p).abs() < 1e-12);
        }
        assert!((student_t_two_sided(-1.7, 2.0) - student_t_two_sided(1.7, 2.0)).abs() < 1e-15);
    }
}
