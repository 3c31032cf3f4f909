//! Checkpoint and epoch-budget selection from validation-task curves.
//!
//! The turning point of a curve is its global maximum of validation Dice,
//! earliest epoch on ties. Across budgets the best selected Dice wins,
//! smaller budget on ties.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Epoch budgets tried by default.
pub const DEFAULT_BUDGETS: [u32; 5] = [100, 50, 20, 10, 5];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveEntry {
    pub epoch: u32,
    pub dice: f64,
    pub train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricCurve {
    pub budget: u32,
    pub entries: Vec<CurveEntry>,
}

impl MetricCurve {
    pub fn new(budget: u32, entries: Vec<CurveEntry>) -> Result<Self> {
        let c = Self { budget, entries };
        c.validate()?;
        Ok(c)
    }

    /// Curve with epochs `1..=dice.len()` and no loss column.
    pub fn from_dice(budget: u32, dice: &[f64]) -> Result<Self> {
        let entries = dice
            .iter()
            .enumerate()
            .map(|(i, &d)| CurveEntry { epoch: i as u32 + 1, dice: d, train_loss: None })
            .collect();
        Self::new(budget, entries)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::param("budget", "must be >= 1"));
        }
        let mut prev = 0;
        for e in &self.entries {
            if e.epoch <= prev || e.epoch > self.budget {
                return Err(Error::param("entries", "epochs must increase strictly within 1..=budget"));
            }
            if !(0.0..=1.0).contains(&e.dice) {
                return Err(Error::param("entries", "dice must lie in [0, 1]"));
            }
            prev = e.epoch;
        }
        Ok(())
    }

    /// Centered moving average of the Dice column (window shrinks at the ends).
    pub fn smoothed(&self, window: usize) -> MetricCurve {
        let half = window / 2;
        let n = self.entries.len();
        let entries = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(n);
                let mean = self.entries[lo..hi].iter().map(|e| e.dice).sum::<f64>() / (hi - lo) as f64;
                CurveEntry { dice: mean, ..self.entries[i] }
            })
            .collect();
        MetricCurve { budget: self.budget, entries }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionResult {
    pub budget: u32,
    pub epoch: u32,
    pub dice: f64,
    pub curves: Vec<MetricCurve>,
}

/// Argmax of Dice, earliest epoch on ties.
pub fn select_epoch(curve: &MetricCurve) -> Result<(u32, f64)> {
    let mut best: Option<&CurveEntry> = None;
    for e in &curve.entries {
        if best.is_none_or(|b| e.dice > b.dice) {
            best = Some(e);
        }
    }
    best.map(|e| (e.epoch, e.dice)).ok_or(Error::EmptyInput("empty metric curve"))
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectOptions {
    /// Moving-average window applied before the argmax; `None` disables it.
    pub smoothing_window: Option<usize>,
}

/// Picks the budget and epoch with the best validation Dice among
/// `curves`. Every curve's budget must be one of `candidates`.
pub fn select_budget(curves: &[MetricCurve], candidates: &[u32], opts: &SelectOptions) -> Result<SelectionResult> {
    if curves.is_empty() {
        return Err(Error::EmptyInput("no metric curves"));
    }
    let mut best: Option<(u32, u32, f64)> = None;
    for curve in curves {
        curve.validate()?;
        if !candidates.contains(&curve.budget) {
            return Err(Error::param("curves", "curve budget is not a candidate"));
        }
        let (epoch, score) = match opts.smoothing_window {
            Some(w) if w > 1 => select_epoch(&curve.smoothed(w))?,
            _ => select_epoch(curve)?,
        };
        let better = match best {
            None => true,
            Some((t, _, d)) => score > d || (score == d && curve.budget < t),
        };
        if better {
            best = Some((curve.budget, epoch, score));
        }
    }
    let (budget, epoch, _) = best.expect("nonempty");
    // Report the raw Dice of the chosen checkpoint even when smoothing picked it.
    let dice = curves
        .iter()
        .find(|c| c.budget == budget)
        .and_then(|c| c.entries.iter().find(|e| e.epoch == epoch))
        .map(|e| e.dice)
        .expect("chosen entry exists");
    Ok(SelectionResult { budget, epoch, dice, curves: curves.to_vec() })
}
