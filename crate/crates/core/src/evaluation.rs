//! Direction prediction for extended-dictionary terms.
//!
//! Every full-tier term is projected into the space and its coordinate on
//! its own axis is compared against zero (or against the axis mean of all
//! evaluated values): positive predicts the high pole, anything else low.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dimension, Direction, StereotypeDictionary, Tier};
use crate::error::{Error, Result};
use crate::polar::PolarSpace;
use crate::store::{ContextFilter, EmbeddingStore, LayerSelector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Cutoff {
    #[default]
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "mean")]
    MeanCentered,
}

impl Cutoff {
    pub fn name(self) -> &'static str {
        match self {
            Cutoff::Zero => "zero",
            Cutoff::MeanCentered => "mean",
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Cutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" => Ok(Cutoff::Zero),
            "mean" | "mean_centered" | "mean-centered" => Ok(Cutoff::MeanCentered),
            other => Err(Error::Validation(format!("cutoff must be `zero` or `mean`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionPrediction {
    pub term: String,
    /// Axis the term is evaluated on (warmth for a sociability term in 2D).
    pub dimension: String,
    pub projected_value: f64,
    /// Value after the cut-off shift; its sign decides the prediction.
    pub shifted_value: f64,
    pub predicted: Direction,
    pub label: Direction,
}

impl DirectionPrediction {
    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }
}

/// Exactly zero predicts low.
pub fn predict_sign(value: f64) -> Direction {
    if value > 0.0 {
        Direction::High
    } else {
        Direction::Low
    }
}

/// Applies the cut-off to one axis worth of (term, value, label) triples.
pub fn apply_cutoff(
    dimension: &str,
    values: &[(String, f64, Direction)],
    cutoff: Cutoff,
) -> Vec<DirectionPrediction> {
    let shift = match cutoff {
        Cutoff::Zero => 0.0,
        Cutoff::MeanCentered if values.is_empty() => 0.0,
        Cutoff::MeanCentered => values.iter().map(|v| v.1).sum::<f64>() / values.len() as f64,
    };
    values
        .iter()
        .map(|(term, value, label)| {
            let shifted = value - shift;
            DirectionPrediction {
                term: term.clone(),
                dimension: dimension.to_string(),
                projected_value: *value,
                shifted_value: shifted,
                predicted: predict_sign(shifted),
                label: *label,
            }
        })
        .collect()
}

/// Per-axis bookkeeping of the labeled full-tier terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTally {
    pub labeled: usize,
    pub n_high_labels: usize,
    pub n_low_labels: usize,
    pub skipped_missing: usize,
    pub excluded_overlap: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    pub cutoff: Cutoff,
    /// Keep full-tier terms that are also seed (pole) terms.
    pub allow_seed_overlap: bool,
    pub filter: ContextFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub cutoff: Cutoff,
    pub predictions: Vec<DirectionPrediction>,
    /// Keyed by axis, in scheme order.
    pub tallies: Vec<(String, LabelTally)>,
    pub warnings: Vec<String>,
}

impl PredictionSet {
    /// Wraps bare predictions (every prediction counts as labeled and evaluated).
    pub fn from_predictions(cutoff: Cutoff, predictions: Vec<DirectionPrediction>) -> Self {
        let mut tallies: Vec<(String, LabelTally)> = Vec::new();
        for p in &predictions {
            let idx = match tallies.iter().position(|(d, _)| *d == p.dimension) {
                Some(i) => i,
                None => {
                    tallies.push((p.dimension.clone(), LabelTally::default()));
                    tallies.len() - 1
                }
            };
            let t = &mut tallies[idx].1;
            t.labeled += 1;
            match p.label {
                Direction::High => t.n_high_labels += 1,
                Direction::Low => t.n_low_labels += 1,
            }
        }
        PredictionSet {
            cutoff,
            predictions,
            tallies,
            warnings: Vec::new(),
        }
    }
}

/// Projects every full-tier term of `full_dict` and predicts its direction.
pub fn predict_directions(
    space: &PolarSpace,
    store: &EmbeddingStore,
    full_dict: &StereotypeDictionary,
    selector: LayerSelector,
    options: &EvaluationOptions,
) -> Result<PredictionSet> {
    let scheme = space.scheme();
    let seed_terms: HashSet<&str> = full_dict
        .entries_of(Tier::Seed)
        .map(|e| e.term.as_str())
        .collect();

    let mut tallies: Vec<(String, LabelTally)> = scheme
        .axes
        .iter()
        .map(|a| (a.name.clone(), LabelTally::default()))
        .collect();
    let mut values: Vec<Vec<(String, f64, Direction)>> = vec![Vec::new(); scheme.len()];
    let mut uncovered: BTreeSet<Dimension> = BTreeSet::new();
    let mut sources = BTreeSet::new();

    for entry in full_dict.entries_of(Tier::Full) {
        let Some(axis) = scheme.axis_of(entry.dimension) else {
            uncovered.insert(entry.dimension);
            continue;
        };
        let tally = &mut tallies[axis].1;
        tally.labeled += 1;
        match entry.direction {
            Direction::High => tally.n_high_labels += 1,
            Direction::Low => tally.n_low_labels += 1,
        }
        if !options.allow_seed_overlap && seed_terms.contains(entry.term.as_str()) {
            tally.excluded_overlap += 1;
            continue;
        }
        match store.term_vector_filtered(&entry.term, selector, &options.filter) {
            Ok(tv) => {
                let d = space.project(&tv.vector)?;
                values[axis].push((entry.term.clone(), d[axis], entry.direction));
                sources.extend(store.sources_of(&entry.term));
            }
            Err(Error::MissingTerm(_)) => tally.skipped_missing += 1,
            Err(e) => return Err(e),
        }
    }
    if let Some(allowed) = &options.filter.sources {
        sources.retain(|s| allowed.contains(s));
    }

    let mut warnings = Vec::new();
    if !uncovered.is_empty() {
        let names: Vec<&str> = uncovered.iter().map(|d| d.name()).collect();
        warnings.push(format!(
            "dimensions not covered by scheme {} were ignored: {}",
            scheme.id,
            names.join(", ")
        ));
    }
    if let Some(w) = space.context_mismatch(&sources) {
        warnings.push(w);
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let predictions = scheme
        .axes
        .iter()
        .zip(&values)
        .flat_map(|(axis, vals)| apply_cutoff(&axis.name, vals, options.cutoff))
        .collect();
    Ok(PredictionSet {
        cutoff: options.cutoff,
        predictions,
        tallies,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub dimension: String,
    pub n_evaluated: usize,
    pub n_correct: usize,
    pub n_skipped_missing: usize,
    pub n_excluded_overlap: usize,
    pub n_high_labels: usize,
    pub n_low_labels: usize,
    /// None when nothing was evaluated on this dimension.
    pub accuracy: Option<f64>,
    pub cutoff: Cutoff,
}

impl AccuracyRow {
    /// Skipped for any reason (missing from the store or seed overlap).
    pub fn n_skipped(&self) -> usize {
        self.n_skipped_missing + self.n_excluded_overlap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
    /// Evaluated / labeled over all dimensions.
    pub coverage: f64,
    /// True when no prediction was made at all.
    pub empty: bool,
    pub warnings: Vec<String>,
}

impl AccuracyReport {
    pub fn row(&self, dimension: &str) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.dimension == dimension)
    }

    /// Writes `dimension,n_evaluated,n_skipped,cutoff,accuracy`, preceded by
    /// `# key=value` provenance lines.
    pub fn write_csv(&self, path: impl AsRef<Path>, provenance: &BTreeMap<String, String>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (k, v) in provenance {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str(&self.to_csv());
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,n_evaluated,n_skipped,cutoff,accuracy\n");
        for r in &self.rows {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.dimension,
                r.n_evaluated,
                r.n_skipped(),
                r.cutoff,
                acc
            ));
        }
        out
    }
}

/// Per-dimension fraction of correct predictions.
pub fn accuracy(set: &PredictionSet) -> AccuracyReport {
    let mut rows: Vec<AccuracyRow> = set
        .tallies
        .iter()
        .map(|(dim, t)| AccuracyRow {
            dimension: dim.clone(),
            n_evaluated: 0,
            n_correct: 0,
            n_skipped_missing: t.skipped_missing,
            n_excluded_overlap: t.excluded_overlap,
            n_high_labels: t.n_high_labels,
            n_low_labels: t.n_low_labels,
            accuracy: None,
            cutoff: set.cutoff,
        })
        .collect();
    for p in &set.predictions {
        let row = match rows.iter_mut().find(|r| r.dimension == p.dimension) {
            Some(r) => r,
            None => {
                rows.push(AccuracyRow {
                    dimension: p.dimension.clone(),
                    n_evaluated: 0,
                    n_correct: 0,
                    n_skipped_missing: 0,
                    n_excluded_overlap: 0,
                    n_high_labels: 0,
                    n_low_labels: 0,
                    accuracy: None,
                    cutoff: set.cutoff,
                });
                rows.last_mut().expect("just pushed")
            }
        };
        row.n_evaluated += 1;
        if p.correct() {
            row.n_correct += 1;
        }
    }
    for r in &mut rows {
        if r.n_evaluated > 0 {
            r.accuracy = Some(r.n_correct as f64 / r.n_evaluated as f64);
        }
    }
    let evaluated: usize = rows.iter().map(|r| r.n_evaluated).sum();
    let labeled: usize = rows.iter().map(|r| r.n_evaluated + r.n_skipped()).sum();
    let mut warnings = set.warnings.clone();
    let empty = evaluated == 0;
    if empty {
        warnings.push("no terms were evaluated; the report is empty".into());
    }
    AccuracyReport {
        rows,
        coverage: if labeled == 0 { 0.0 } else { evaluated as f64 / labeled as f64 },
        empty,
        warnings,
    }
}
