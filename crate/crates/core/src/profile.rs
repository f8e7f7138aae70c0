//! Gender-bias profiles over vocabulary populations.
//!
//! Terms of each population are projected into a stereotype space,
//! z-scored per dimension within their kind (names pooled across both
//! groups, gendered terms likewise) and compared group-against-group with a
//! two-sample t-test per dimension.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dictionary::{DimensionScheme, SchemeId, StereotypeDictionary};
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, predict_directions, AccuracyReport, EvaluationOptions};
use crate::polar::{build_space, PolarSpace};
use crate::stats::{mean, t_test, TTestKind};
use crate::store::{ContextFilter, ContextSource, EmbeddingStore, LayerSelector};

pub const FEMALE_TERMS: [&str; 9] = [
    "female",
    "woman",
    "girl",
    "sister",
    "she",
    "daughter",
    "mother",
    "aunt",
    "grandmother",
];

pub const MALE_TERMS: [&str; 9] = [
    "male",
    "man",
    "boy",
    "brother",
    "he",
    "son",
    "father",
    "uncle",
    "grandfather",
];

pub const DEFAULT_TEMPLATES: [&str; 5] = [
    "This is [X].",
    "[X] is here.",
    "[X] is a person.",
    "Here is [X].",
    "That is [X].",
];

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_COVERAGE_FLOOR: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationKind {
    Names,
    Terms,
}

impl fmt::Display for PopulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PopulationKind::Names => "names",
            PopulationKind::Terms => "terms",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyPopulation {
    pub id: String,
    pub kind: PopulationKind,
    pub terms: Vec<String>,
}

impl VocabularyPopulation {
    pub fn new(id: impl Into<String>, kind: PopulationKind, terms: impl IntoIterator<Item = impl Into<String>>) -> Self {
        VocabularyPopulation {
            id: id.into(),
            kind,
            terms: terms.into_iter().map(Into::into).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Validation(format!("population `{}` is empty", self.id)));
        }
        let mut seen = HashSet::new();
        for t in &self.terms {
            if t.trim().is_empty() {
                return Err(Error::Validation(format!("population `{}` has an empty term", self.id)));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::Validation(format!(
                    "population `{}` lists `{t}` more than once",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub a: String,
    pub b: String,
    /// Overrides the run-wide α.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// A term projected individually and drawn without a significance test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayTerm {
    pub term: String,
    pub kind: PopulationKind,
}

/// Populations, the comparisons between them, and optional overlay terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupsFile {
    pub populations: Vec<VocabularyPopulation>,
    pub comparisons: Vec<ComparisonSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overlays: Vec<OverlayTerm>,
}

impl GroupsFile {
    /// The nine female and nine male gendered terms, compared with each other.
    pub fn gendered_terms() -> Self {
        GroupsFile {
            populations: vec![
                VocabularyPopulation::new("female_terms", PopulationKind::Terms, FEMALE_TERMS),
                VocabularyPopulation::new("male_terms", PopulationKind::Terms, MALE_TERMS),
            ],
            comparisons: vec![ComparisonSpec {
                a: "female_terms".into(),
                b: "male_terms".into(),
                alpha: None,
            }],
            overlays: Vec::new(),
        }
    }

    /// Adds a female/male name comparison next to the existing ones.
    pub fn with_names(mut self, female: Vec<String>, male: Vec<String>) -> Self {
        self.populations.push(VocabularyPopulation::new("female_names", PopulationKind::Names, female));
        self.populations.push(VocabularyPopulation::new("male_names", PopulationKind::Names, male));
        self.comparisons.insert(
            0,
            ComparisonSpec {
                a: "female_names".into(),
                b: "male_names".into(),
                alpha: None,
            },
        );
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let groups: GroupsFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        groups.validate()?;
        Ok(groups)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn population(&self, id: &str) -> Result<&VocabularyPopulation> {
        self.populations
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::Validation(format!("unknown population `{id}`")))
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for p in &self.populations {
            p.validate()?;
            if !ids.insert(p.id.as_str()) {
                return Err(Error::Validation(format!("duplicate population id `{}`", p.id)));
            }
        }
        for c in &self.comparisons {
            let (a, b) = (self.population(&c.a)?, self.population(&c.b)?);
            if a.id == b.id {
                return Err(Error::Validation(format!("comparison of `{}` with itself", a.id)));
            }
            if a.kind != b.kind {
                return Err(Error::Validation(format!(
                    "comparison `{}` vs `{}` mixes {} and {}",
                    a.id, b.id, a.kind, b.kind
                )));
            }
            if let Some(alpha) = c.alpha {
                check_alpha(alpha)?;
            }
        }
        Ok(())
    }

    /// Populations that take part in at least one comparison, in file order.
    fn compared(&self, kind: PopulationKind) -> Vec<&VocabularyPopulation> {
        let used: BTreeSet<&str> = self
            .comparisons
            .iter()
            .flat_map(|c| [c.a.as_str(), c.b.as_str()])
            .collect();
        self.populations
            .iter()
            .filter(|p| p.kind == kind && used.contains(p.id.as_str()))
            .collect()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisScale {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug)]
pub struct Standardized {
    /// Row per input vector; None on excluded dimensions.
    pub values: Vec<Vec<Option<f64>>>,
    /// Per dimension; None when excluded.
    pub scales: Vec<Option<AxisScale>>,
    /// One `ConstantValues` error per excluded dimension.
    pub errors: Vec<Error>,
}

/// Z-scores every dimension to sample mean 0 and sample sd 1 (n − 1).
/// Constant dimensions are excluded and reported rather than failing the call.
pub fn standardize(values: &[Vec<f64>], axes: &[&str]) -> Result<Standardized> {
    if values.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            got: values.len(),
        });
    }
    let h = axes.len();
    if let Some(row) = values.iter().find(|r| r.len() != h) {
        return Err(Error::DimensionMismatch {
            expected: h,
            actual: row.len(),
        });
    }
    let mut out = vec![vec![None; h]; values.len()];
    let mut scales = Vec::with_capacity(h);
    let mut errors = Vec::new();
    for (j, axis) in axes.iter().enumerate() {
        let column: Vec<f64> = values.iter().map(|r| r[j]).collect();
        // Centre in two steps and keep them apart: a single rounded mean of
        // an offset-heavy column is off by up to half an ulp of the offset.
        let rough = mean(&column);
        let residual: Vec<f64> = column.iter().map(|x| x - rough).collect();
        let correction = mean(&residual);
        let centred: Vec<f64> = residual.iter().map(|r| r - correction).collect();
        let m = rough + correction;
        let sd = (centred.iter().map(|c| c * c).sum::<f64>() / (column.len() as f64 - 1.0)).sqrt();
        if sd.is_nan() || sd <= 0.0 || column.iter().all(|&x| x == column[0]) {
            errors.push(Error::ConstantValues {
                axis: axis.to_string(),
            });
            scales.push(None);
            continue;
        }
        for (row, c) in out.iter_mut().zip(&centred) {
            row[j] = Some(c / sd);
        }
        scales.push(Some(AxisScale { mean: m, sd }));
    }
    Ok(Standardized {
        values: out,
        scales,
        errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    pub alpha: f64,
    pub coverage_floor: f64,
    pub test: TTestKind,
    /// Divide α by the number of dimensions.
    pub bonferroni: bool,
    pub filter: ContextFilter,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            alpha: DEFAULT_ALPHA,
            coverage_floor: DEFAULT_COVERAGE_FLOOR,
            test: TTestKind::Welch,
            bonferroni: false,
            filter: ContextFilter::any(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStats {
    pub n_a: usize,
    pub n_b: usize,
    /// Group means in standardized units.
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStat {
    pub axis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<TestStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excluded: Option<String>,
}

impl DimensionStat {
    pub fn is_significant(&self) -> bool {
        self.stats.as_ref().is_some_and(|s| s.significant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub population_a: String,
    pub population_b: String,
    pub kind: PopulationKind,
    pub scheme: SchemeId,
    /// Effective per-dimension threshold.
    pub alpha: f64,
    pub test: TTestKind,
    pub dimensions: Vec<DimensionStat>,
}

impl GroupComparison {
    pub fn dimension(&self, axis: &str) -> Option<&DimensionStat> {
        self.dimensions.iter().find(|d| d.axis == axis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCoordinates {
    pub term: String,
    /// Population id, or "overlay".
    pub population: String,
    pub kind: PopulationKind,
    pub contexts: usize,
    pub raw: Vec<f64>,
    pub standardized: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationCoverage {
    pub id: String,
    pub requested: usize,
    pub resolved: usize,
    pub fraction: f64,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisLabel {
    pub name: String,
    pub high_label: String,
    pub low_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    pub model_label: String,
    pub scheme: SchemeId,
    pub layers: LayerSelector,
    pub pole_context_sources: BTreeSet<ContextSource>,
    pub term_context_sources: BTreeSet<ContextSource>,
    pub dictionary_label: String,
    pub alpha: f64,
    pub test: TTestKind,
    pub bonferroni: bool,
    pub coverage_floor: f64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub metadata: ProfileMetadata,
    pub axes: Vec<AxisLabel>,
    pub comparisons: Vec<GroupComparison>,
    pub terms: Vec<TermCoordinates>,
    #[serde(default)]
    pub overlays: Vec<TermCoordinates>,
    pub coverage: Vec<PopulationCoverage>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Profile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn axis_labels(scheme: &DimensionScheme) -> Vec<AxisLabel> {
    scheme
        .axes
        .iter()
        .map(|a| AxisLabel {
            name: a.name.clone(),
            high_label: a.high_label.clone(),
            low_label: a.low_label.clone(),
        })
        .collect()
}

struct Projected {
    term: String,
    contexts: usize,
    coords: Vec<f64>,
}

fn project_population(
    space: &PolarSpace,
    store: &EmbeddingStore,
    terms: &[String],
    selector: LayerSelector,
    filter: &ContextFilter,
    sources: &mut BTreeSet<ContextSource>,
) -> Result<(Vec<Projected>, Vec<String>)> {
    let mut out = Vec::with_capacity(terms.len());
    let mut missing = Vec::new();
    for term in terms {
        match store.term_vector_filtered(term, selector, filter) {
            Ok(tv) => {
                out.push(Projected {
                    term: term.clone(),
                    contexts: tv.contexts,
                    coords: space.project(&tv.vector)?,
                });
                sources.extend(store.sources_of(term));
            }
            Err(Error::MissingTerm(_)) => missing.push(term.clone()),
            Err(e) => return Err(e),
        }
    }
    Ok((out, missing))
}

/// Projects, standardizes and tests every comparison in `groups`.
pub fn build_profile(
    space: &PolarSpace,
    store: &EmbeddingStore,
    groups: &GroupsFile,
    selector: LayerSelector,
    options: &ProfileOptions,
) -> Result<Profile> {
    check_alpha(options.alpha)?;
    groups.validate()?;
    let scheme = space.scheme();
    let h = scheme.len();
    let axis_names = scheme.axis_names();
    let mut warnings = Vec::new();
    let mut coverage = Vec::new();
    let mut term_sources = BTreeSet::new();
    let mut terms_out = Vec::new();
    let mut projected: BTreeMap<&str, Vec<Projected>> = BTreeMap::new();
    let mut scales: BTreeMap<PopulationKind, Vec<Option<AxisScale>>> = BTreeMap::new();
    let mut excluded: BTreeMap<PopulationKind, BTreeMap<String, String>> = BTreeMap::new();

    for kind in [PopulationKind::Names, PopulationKind::Terms] {
        let pops = groups.compared(kind);
        if pops.is_empty() {
            continue;
        }
        for pop in &pops {
            let (rows, missing) =
                project_population(space, store, &pop.terms, selector, &options.filter, &mut term_sources)?;
            let fraction = rows.len() as f64 / pop.terms.len() as f64;
            if rows.is_empty() {
                return Err(Error::Validation(format!(
                    "population `{}`: none of its {} terms resolve in the store",
                    pop.id,
                    pop.terms.len()
                )));
            }
            if rows.len() < 2 {
                return Err(Error::SampleTooSmall {
                    needed: 2,
                    got: rows.len(),
                });
            }
            if fraction < options.coverage_floor {
                warnings.push(format!(
                    "population `{}` coverage {:.3} is below the floor {:.3} ({} of {} terms missing)",
                    pop.id,
                    fraction,
                    options.coverage_floor,
                    missing.len(),
                    pop.terms.len()
                ));
            }
            coverage.push(PopulationCoverage {
                id: pop.id.clone(),
                requested: pop.terms.len(),
                resolved: rows.len(),
                fraction,
                missing,
            });
            projected.insert(pop.id.as_str(), rows);
        }

        // pooled across every compared population of this kind
        let pooled: Vec<Vec<f64>> = pops
            .iter()
            .flat_map(|p| projected[p.id.as_str()].iter().map(|r| r.coords.clone()))
            .collect();
        let z = standardize(&pooled, &axis_names)?;
        let kind_excluded = excluded.entry(kind).or_default();
        for err in &z.errors {
            if let Error::ConstantValues { axis } = err {
                kind_excluded.insert(axis.clone(), err.to_string());
                warnings.push(format!("{kind}: {err}; dimension excluded"));
            }
        }
        let mut z_rows = z.values.into_iter();
        for pop in &pops {
            for row in &projected[pop.id.as_str()] {
                terms_out.push(TermCoordinates {
                    term: row.term.clone(),
                    population: pop.id.clone(),
                    kind,
                    contexts: row.contexts,
                    raw: row.coords.clone(),
                    standardized: z_rows.next().expect("one standardized row per projected term"),
                });
            }
        }
        scales.insert(kind, z.scales);
    }

    let per_dim_alpha = |alpha: f64| if options.bonferroni { alpha / h as f64 } else { alpha };
    let mut comparisons = Vec::with_capacity(groups.comparisons.len());
    for spec in &groups.comparisons {
        let kind = groups.population(&spec.a)?.kind;
        let alpha = per_dim_alpha(spec.alpha.unwrap_or(options.alpha));
        let sample = |id: &str, j: usize| -> Vec<f64> {
            terms_out
                .iter()
                .filter(|t| t.population == id)
                .filter_map(|t| t.standardized[j])
                .collect()
        };
        let mut dimensions = Vec::with_capacity(h);
        for (j, axis) in axis_names.iter().enumerate() {
            if let Some(reason) = excluded.get(&kind).and_then(|m| m.get(*axis)) {
                dimensions.push(DimensionStat {
                    axis: axis.to_string(),
                    stats: None,
                    excluded: Some(reason.clone()),
                });
                continue;
            }
            let (a, b) = (sample(&spec.a, j), sample(&spec.b, j));
            let test = t_test(options.test, &a, &b)?;
            dimensions.push(DimensionStat {
                axis: axis.to_string(),
                stats: Some(TestStats {
                    n_a: a.len(),
                    n_b: b.len(),
                    mean_a: mean(&a),
                    mean_b: mean(&b),
                    t_statistic: test.t,
                    degrees_of_freedom: test.df,
                    p_value: test.p_value,
                    significant: test.p_value < alpha,
                }),
                excluded: None,
            });
        }
        comparisons.push(GroupComparison {
            population_a: spec.a.clone(),
            population_b: spec.b.clone(),
            kind,
            scheme: scheme.id,
            alpha,
            test: options.test,
            dimensions,
        });
    }

    let mut overlays = Vec::new();
    for overlay in &groups.overlays {
        let (rows, missing) = project_population(
            space,
            store,
            std::slice::from_ref(&overlay.term),
            selector,
            &options.filter,
            &mut term_sources,
        )?;
        if !missing.is_empty() {
            warnings.push(format!("overlay term `{}` is missing from the store", overlay.term));
            continue;
        }
        let row = &rows[0];
        let standardized = match scales.get(&overlay.kind) {
            Some(sc) => row
                .coords
                .iter()
                .zip(sc)
                .map(|(x, s)| s.map(|s| (x - s.mean) / s.sd))
                .collect(),
            None => vec![None; h],
        };
        overlays.push(TermCoordinates {
            term: row.term.clone(),
            population: "overlay".into(),
            kind: overlay.kind,
            contexts: row.contexts,
            raw: row.coords.clone(),
            standardized,
        });
    }

    if let Some(w) = space.context_mismatch(&term_sources) {
        warnings.push(w);
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(Profile {
        metadata: ProfileMetadata {
            model_label: space.metadata.model_label.clone(),
            scheme: scheme.id,
            layers: selector,
            pole_context_sources: space.metadata.context_sources.clone(),
            term_context_sources: term_sources,
            dictionary_label: space.metadata.dictionary_label.clone(),
            alpha: options.alpha,
            test: options.test,
            bonferroni: options.bonferroni,
            coverage_floor: options.coverage_floor,
            tool_version: crate::VERSION.to_string(),
        },
        axes: axis_labels(scheme),
        comparisons,
        terms: terms_out,
        overlays,
        coverage,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPoint {
    pub layer: usize,
    /// Standardized mean difference a − b; None if the layer failed or the
    /// dimension was excluded there.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBiasCurve {
    pub comparison: String,
    pub dimension: String,
    pub points: Vec<LayerPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAccuracy {
    pub layer: usize,
    pub report: AccuracyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerError {
    pub layer: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSweep {
    pub model_label: String,
    pub scheme: SchemeId,
    pub dictionary_label: String,
    pub layer_count: usize,
    pub axes: Vec<AxisLabel>,
    pub curves: Vec<LayerBiasCurve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy: Vec<LayerAccuracy>,
    #[serde(default)]
    pub errors: Vec<LayerError>,
    pub tool_version: String,
}

impl LayerSweep {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

/// Extended-dictionary evaluation to run at every layer of a sweep.
pub struct SweepEvaluation<'a> {
    pub full_dict: &'a StereotypeDictionary,
    pub options: EvaluationOptions,
}

/// Rebuilds the space from each layer's pole embeddings and records the
/// standardized group mean difference per comparison and dimension.
/// A failing layer is recorded and does not stop the others.
pub fn layer_sweep(
    store: &EmbeddingStore,
    dict: &StereotypeDictionary,
    scheme: &DimensionScheme,
    groups: &GroupsFile,
    options: &ProfileOptions,
    evaluation: Option<&SweepEvaluation<'_>>,
) -> Result<LayerSweep> {
    let layers = store.layer_count();
    if layers < 2 {
        return Err(Error::Validation(format!(
            "layer sweep needs at least 2 layers, store has {layers}"
        )));
    }
    groups.validate()?;
    let mut curves: Vec<LayerBiasCurve> = groups
        .comparisons
        .iter()
        .flat_map(|c| {
            scheme.axes.iter().map(move |a| LayerBiasCurve {
                comparison: format!("{} vs {}", c.a, c.b),
                dimension: a.name.clone(),
                points: Vec::with_capacity(layers),
            })
        })
        .collect();
    let mut accuracy_out = Vec::new();
    let mut errors = Vec::new();

    for layer in 0..layers {
        let selector = LayerSelector::SingleLayer(layer);
        let result = build_space(store, dict, scheme, selector, &options.filter).and_then(|space| {
            let profile = build_profile(&space, store, groups, selector, options)?;
            let report = match evaluation {
                Some(ev) => Some(accuracy(&predict_directions(
                    &space,
                    store,
                    ev.full_dict,
                    selector,
                    &ev.options,
                )?)),
                None => None,
            };
            Ok((profile, report))
        });
        match result {
            Ok((profile, report)) => {
                let mut curve = curves.iter_mut();
                for cmp in &profile.comparisons {
                    for dim in &cmp.dimensions {
                        let value = dim.stats.as_ref().map(|s| s.mean_a - s.mean_b);
                        curve
                            .next()
                            .expect("one curve per comparison and axis")
                            .points
                            .push(LayerPoint { layer, value });
                    }
                }
                if let Some(report) = report {
                    accuracy_out.push(LayerAccuracy { layer, report });
                }
            }
            Err(e) => {
                log::warn!("layer {layer}: {e}");
                errors.push(LayerError {
                    layer,
                    message: e.to_string(),
                });
                for c in &mut curves {
                    c.points.push(LayerPoint { layer, value: None });
                }
            }
        }
    }

    Ok(LayerSweep {
        model_label: store.model_label().to_string(),
        scheme: scheme.id,
        dictionary_label: dict.label.clone(),
        layer_count: layers,
        axes: axis_labels(scheme),
        curves,
        accuracy: accuracy_out,
        errors,
        tool_version: crate::VERSION.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextExample {
    pub term: String,
    pub example_id: String,
    pub source: ContextSource,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateExpansion {
    pub examples: Vec<ContextExample>,
    pub duplicate_templates: usize,
}

impl TemplateExpansion {
    /// Writes the `term,example_id,source,text` examples CSV read by the extractor.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e: csv::Error| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::io(path, source),
            other => Error::Validation(format!("{}: {other:?}", path.display())),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["term", "example_id", "source", "text"]).map_err(io)?;
        for ex in &self.examples {
            w.write_record([&ex.term, &ex.example_id, ex.source.name(), &ex.text])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn placeholder() -> Regex {
    Regex::new(r"\[[A-Z][A-Z_]*\]").expect("static regex")
}

/// Fills every template with every term. Templates must contain exactly one
/// bracketed upper-case placeholder such as `[X]`, `[NAME]` or `[TERM]`.
/// Repeated templates are dropped; example ids are `tpl<i>` by template position.
pub fn template_contexts(terms: &[String], templates: &[String]) -> Result<TemplateExpansion> {
    let re = placeholder();
    let mut unique: Vec<&str> = Vec::with_capacity(templates.len());
    let mut duplicates = 0;
    for t in templates {
        match re.find_iter(t).count() {
            1 => {}
            0 => {
                return Err(Error::Template {
                    template: t.clone(),
                    message: "no placeholder".into(),
                })
            }
            n => {
                return Err(Error::Template {
                    template: t.clone(),
                    message: format!("{n} placeholders, expected exactly one"),
                })
            }
        }
        if unique.contains(&t.as_str()) {
            duplicates += 1;
        } else {
            unique.push(t);
        }
    }
    if duplicates > 0 {
        log::warn!("dropped {duplicates} duplicate templates");
    }
    let mut examples = Vec::with_capacity(terms.len() * unique.len());
    for term in terms {
        for (i, t) in unique.iter().enumerate() {
            examples.push(ContextExample {
                term: term.clone(),
                example_id: format!("tpl{i}"),
                source: ContextSource::Template,
                text: re.replace(t, regex::NoExpand(term)).into_owned(),
            });
        }
    }
    Ok(TemplateExpansion {
        examples,
        duplicate_templates: duplicates,
    })
}
