use serde::{Deserialize, Serialize};

use super::grid::eval_grid;
use super::ppl::EvalMode;
use crate::error::{ensure, Error, Result};
use crate::model::Model;
use crate::Scalar;

/// A training regime: window, sequence length and total token budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub train_window: usize,
    pub train_length: usize,
    pub token_budget: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeLabel {
    /// Sequence length equals the window.
    Vanilla,
    /// Sequences longer than the window.
    Sliding,
}

impl Regime {
    pub fn label(&self) -> Result<RegimeLabel> {
        ensure!(
            self.train_length >= self.train_window && self.train_window >= 1,
            Config,
            "train_length {} must be at least train_window {}",
            self.train_length,
            self.train_window
        );
        Ok(if self.train_length == self.train_window {
            RegimeLabel::Vanilla
        } else {
            RegimeLabel::Sliding
        })
    }
}

/// A trained model together with the regime that produced it.
pub struct RegimeRun<'a, T> {
    pub name: String,
    pub regime: Regime,
    pub model: &'a Model<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPlan {
    pub lengths: Vec<usize>,
    /// Defaults to each model's training window.
    #[serde(default)]
    pub eval_window: Option<usize>,
    pub max_examples: usize,
    pub mode: EvalMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub name: String,
    pub label: RegimeLabel,
    pub train_window: usize,
    pub train_length: usize,
    pub eval_window: usize,
    pub ppl: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub lengths: Vec<usize>,
    pub token_budget: usize,
    pub rows: Vec<RegimeRow>,
}

/// Evaluates each run on identical example prefixes at every evaluation
/// length. All runs must share model size and token budget.
pub fn compare_training_regimes<T: Scalar>(
    runs: &[RegimeRun<'_, T>],
    tokens: &[usize],
    plan: &EvalPlan,
) -> Result<RegimeReport> {
    ensure!(!runs.is_empty(), Config, "no regimes to compare");
    let budget = runs[0].regime.token_budget;
    let params = runs[0].model.param_count();
    for r in runs {
        if r.regime.token_budget != budget {
            return Err(Error::Protocol(format!(
                "token budget of {} is {}, expected {budget}",
                r.name, r.regime.token_budget
            )));
        }
        if r.model.param_count() != params {
            return Err(Error::Protocol(format!(
                "{} has {} parameters, expected {params}",
                r.name,
                r.model.param_count()
            )));
        }
    }
    let mut rows = Vec::with_capacity(runs.len());
    for r in runs {
        let eval_window = plan.eval_window.unwrap_or(r.regime.train_window);
        let g = eval_grid(
            r.model,
            tokens,
            &[eval_window],
            &plan.lengths,
            plan.max_examples,
            plan.mode,
        )?;
        rows.push(RegimeRow {
            name: r.name.clone(),
            label: r.regime.label()?,
            train_window: r.regime.train_window,
            train_length: r.regime.train_length,
            eval_window,
            ppl: g.ppl.iter().map(|row| row[0]).collect(),
        });
    }
    Ok(RegimeReport {
        lengths: plan.lengths.clone(),
        token_budget: budget,
        rows,
    })
}

impl RegimeReport {
    pub fn row(&self, name: &str) -> Option<&RegimeRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Markdown table; the lowest perplexity of each column is bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model | Training Window | Training Length | Eval Window |");
        for l in &self.lengths {
            out.push_str(&format!(" {l} |"));
        }
        out.push_str("\n|---|---:|---:|---:|");
        out.push_str(&"---:|".repeat(self.lengths.len()));
        out.push('\n');
        let best: Vec<Option<f64>> = (0..self.lengths.len())
            .map(|c| {
                self.rows
                    .iter()
                    .filter_map(|r| r.ppl[c])
                    .min_by(|a, b| a.total_cmp(b))
            })
            .collect();
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} |",
                r.name, r.train_window, r.train_length, r.eval_window
            ));
            for (c, p) in r.ppl.iter().enumerate() {
                match p {
                    Some(v) if Some(*v) == best[c] => out.push_str(&format!(" **{v:.4}** |")),
                    Some(v) => out.push_str(&format!(" {v:.4} |")),
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}
