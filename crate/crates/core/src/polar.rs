//! Stereotype space construction and projection.
//!
//! Each axis row of the basis is the difference between the mean sense
//! embedding of its high pole terms and that of its low pole terms. Since the
//! basis is h×D with h ≪ D, projection solves `aᵀ d ≈ x` in the least-squares
//! sense: `d = (a aᵀ)⁻¹ a x`, falling back to an SVD pseudo-inverse when
//! `a aᵀ` is badly conditioned.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::{pole_overlap, pole_terms, Axis, Dimension, Direction, DimensionScheme, StereotypeDictionary, Tier};
use crate::error::{Error, Result};
use crate::store::{ContextFilter, ContextSource, EmbeddingStore, LayerSelector};

pub const SPACE_FORMAT: &str = "polarspace/1";

/// Singular-value ratio below which the basis counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Condition number of `a aᵀ` above which the SVD route is used.
pub const NORMAL_EQUATIONS_MAX_CONDITION: f64 = 1e8;

/// Mean of a term's context vectors: its sense embedding.
pub fn build_sense_embedding(
    store: &EmbeddingStore,
    term: &str,
    selector: LayerSelector,
    filter: &ContextFilter,
) -> Result<Vec<f64>> {
    Ok(store.term_vector_filtered(term, selector, filter)?.vector)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleEmbedding {
    pub axis: String,
    pub direction: Direction,
    pub vector: Vec<f64>,
    pub n_terms: usize,
    pub total_contexts: usize,
    /// Requested terms without records under the selector/filter.
    pub missing: Vec<String>,
}

impl PoleEmbedding {
    pub fn coverage(&self) -> f64 {
        let requested = self.n_terms + self.missing.len();
        if requested == 0 {
            0.0
        } else {
            self.n_terms as f64 / requested as f64
        }
    }
}

/// Averages the sense embeddings of every resolvable term, summed in term
/// order so the result does not depend on how the list was arranged.
/// Unresolvable terms are recorded, and only a pole with no resolvable term
/// is an error.
pub fn build_pole(
    store: &EmbeddingStore,
    axis: &str,
    direction: Direction,
    terms: &[String],
    selector: LayerSelector,
    filter: &ContextFilter,
) -> Result<PoleEmbedding> {
    let mut sum = vec![0.0f64; store.dim()];
    let mut n_terms = 0;
    let mut total_contexts = 0;
    let mut missing = Vec::new();
    let mut ordered: Vec<&String> = terms.iter().collect();
    ordered.sort();
    for term in ordered {
        match store.term_vector_filtered(term, selector, filter) {
            Ok(tv) => {
                for (s, x) in sum.iter_mut().zip(&tv.vector) {
                    *s += x;
                }
                n_terms += 1;
                total_contexts += tv.contexts;
            }
            Err(Error::MissingTerm(t)) => missing.push(t),
            Err(e) => return Err(e),
        }
    }
    if n_terms == 0 {
        return Err(Error::EmptyPole {
            axis: axis.to_string(),
            direction: direction.to_string(),
        });
    }
    let n = n_terms as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(PoleEmbedding {
        axis: axis.to_string(),
        direction,
        vector: sum,
        n_terms,
        total_contexts,
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleCoverage {
    pub axis: String,
    pub direction: Direction,
    pub requested: usize,
    pub resolved: usize,
    pub total_contexts: usize,
    /// Terms shared between member dimensions of a composite pole.
    pub overlap: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpaceMetadata {
    pub model_label: String,
    pub layers: LayerSelector,
    pub context_filter: ContextFilter,
    /// Sources actually seen among the pole terms' records.
    pub context_sources: BTreeSet<ContextSource>,
    pub dictionary_label: String,
    pub coverage: Vec<PoleCoverage>,
    pub tool_version: String,
}

impl SpaceMetadata {
    /// Fraction of requested pole terms that resolved, over all poles.
    pub fn coverage_fraction(&self) -> f64 {
        let requested: usize = self.coverage.iter().map(|c| c.requested).sum();
        let resolved: usize = self.coverage.iter().map(|c| c.resolved).sum();
        if requested == 0 {
            0.0
        } else {
            resolved as f64 / requested as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    NormalEquations,
    Svd,
}

/// The change-of-basis matrix and its precomputed least-squares projector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSpace {
    scheme: DimensionScheme,
    dim: usize,
    basis: Vec<Vec<f64>>,
    condition_number: f64,
    solver: Solver,
    /// h×D, row-major.
    projector: Vec<f64>,
    pub metadata: SpaceMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarProjection {
    pub term: String,
    pub coordinates: Vec<f64>,
    pub contexts: usize,
}

impl PolarSpace {
    /// Validates the basis (shape, finiteness, full row rank) and
    /// precomputes the projector.
    pub fn from_basis(
        scheme: DimensionScheme,
        basis: Vec<Vec<f64>>,
        metadata: SpaceMetadata,
    ) -> Result<Self> {
        let h = scheme.len();
        if basis.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                actual: basis.len(),
            });
        }
        let dim = basis.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::Validation("basis rows are empty".into()));
        }
        for row in &basis {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("basis".into()));
            }
        }

        let zero_rows: Vec<String> = basis
            .iter()
            .zip(&scheme.axes)
            .filter(|(row, _)| row.iter().all(|&x| x == 0.0))
            .map(|(_, axis)| axis.name.clone())
            .collect();
        if !zero_rows.is_empty() {
            return Err(Error::DegenerateSpace {
                expected: h,
                axes: zero_rows,
            });
        }
        if dim < h {
            return Err(Error::DegenerateSpace {
                expected: h,
                axes: scheme.axis_names().iter().map(|s| s.to_string()).collect(),
            });
        }

        let a = DMatrix::from_fn(h, dim, |i, j| basis[i][j]);
        let svd = a.clone().svd(true, false);
        let s = &svd.singular_values;
        let s_max = s.max();
        let s_min = s.min();
        if s_min / s_max < RANK_TOLERANCE {
            let u = svd.u.as_ref().expect("requested U");
            let mut dependent = BTreeSet::new();
            for (k, &sv) in s.iter().enumerate() {
                if sv / s_max < RANK_TOLERANCE {
                    for i in 0..h {
                        if u[(i, k)].abs() > 1e-3 {
                            dependent.insert(i);
                        }
                    }
                }
            }
            return Err(Error::DegenerateSpace {
                expected: h,
                axes: dependent
                    .into_iter()
                    .map(|i| scheme.axes[i].name.clone())
                    .collect(),
            });
        }
        let ratio = s_max / s_min;
        let condition_number = ratio * ratio;

        let (solver, projector) = if condition_number <= NORMAL_EQUATIONS_MAX_CONDITION {
            (Solver::NormalEquations, normal_equations_projector(&basis)?)
        } else {
            (Solver::Svd, svd_projector(&a))
        };

        Ok(PolarSpace {
            scheme,
            dim,
            basis,
            condition_number,
            solver,
            projector,
            metadata,
        })
    }

    pub fn scheme(&self) -> &DimensionScheme {
        &self.scheme
    }

    pub fn axes(&self) -> &[Axis] {
        &self.scheme.axes
    }

    /// Number of stereotype dimensions h.
    pub fn h(&self) -> usize {
        self.basis.len()
    }

    /// Embedding dimension D.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Condition number of `a aᵀ`.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn solver(&self) -> Solver {
        self.solver
    }

    /// Least-squares coordinates of `x` in the space.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projected vector".into()));
        }
        Ok(self
            .projector
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(p, v)| p * v).sum())
            .collect())
    }

    /// Warning text when `sources` differ from the pole contexts.
    pub fn context_mismatch(&self, sources: &BTreeSet<ContextSource>) -> Option<String> {
        let poles = &self.metadata.context_sources;
        if poles.is_empty() || sources.is_empty() || poles == sources {
            return None;
        }
        let names = |s: &BTreeSet<ContextSource>| {
            s.iter().map(|c| c.name()).collect::<Vec<_>>().join("+")
        };
        Some(format!(
            "context sources differ: space built from {}, projected terms use {}",
            names(poles),
            names(sources)
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = SpaceFile {
            format: SPACE_FORMAT.into(),
            scheme: self.scheme.id,
            axes: self.scheme.axes.clone(),
            dim: self.dim,
            h: self.h(),
            solver: self.solver,
            condition_number: self.condition_number,
            basis: self.basis.clone(),
            metadata: self.metadata.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SpaceFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.format != SPACE_FORMAT {
            return Err(Error::Validation(format!(
                "{}: expected format `{SPACE_FORMAT}`, found `{}`",
                path.display(),
                file.format
            )));
        }
        let scheme = DimensionScheme::new(file.scheme);
        if scheme.axes != file.axes || file.h != scheme.len() || file.basis.first().map(Vec::len) != Some(file.dim) {
            return Err(Error::Validation(format!(
                "{}: axes/shape do not match scheme {}",
                path.display(),
                file.scheme
            )));
        }
        let space = PolarSpace::from_basis(scheme, file.basis, file.metadata)?;
        if space.condition_number != file.condition_number {
            log::warn!(
                "{}: stored condition number {} differs from recomputed {}",
                path.display(),
                file.condition_number,
                space.condition_number
            );
        }
        Ok(space)
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    format: String,
    scheme: crate::dictionary::SchemeId,
    axes: Vec<Axis>,
    dim: usize,
    h: usize,
    solver: Solver,
    condition_number: f64,
    basis: Vec<Vec<f64>>,
    metadata: SpaceMetadata,
}

/// `(a aᵀ)⁻¹ a` via a Cholesky factorization of the h×h Gram matrix.
fn normal_equations_projector(basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let h = basis.len();
    let dim = basis[0].len();
    let mut gram = vec![0.0; h * h];
    for i in 0..h {
        for j in 0..=i {
            let g: f64 = basis[i].iter().zip(&basis[j]).map(|(x, y)| x * y).sum();
            gram[i * h + j] = g;
            gram[j * h + i] = g;
        }
    }
    let l = cholesky(&gram, h).ok_or_else(|| Error::DegenerateSpace {
        expected: h,
        axes: Vec::new(),
    })?;

    let mut projector = vec![0.0; h * dim];
    let mut col = vec![0.0; h];
    for j in 0..dim {
        for (i, c) in col.iter_mut().enumerate() {
            *c = basis[i][j];
        }
        cholesky_solve(&l, h, &mut col);
        for (i, c) in col.iter().enumerate() {
            projector[i * dim + j] = *c;
        }
    }
    Ok(projector)
}

/// Lower-triangular L with L Lᵀ = m, or None if m is not positive definite.
fn cholesky(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// `U Σ⁻¹ Vᵀ` for a = U Σ Vᵀ, i.e. the pseudo-inverse of aᵀ.
fn svd_projector(a: &DMatrix<f64>) -> Vec<f64> {
    let (h, dim) = a.shape();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut out = vec![0.0; h * dim];
    for (k, &s) in svd.singular_values.iter().enumerate() {
        for i in 0..h {
            let coef = u[(i, k)] / s;
            for j in 0..dim {
                out[i * dim + j] += coef * v_t[(k, j)];
            }
        }
    }
    out
}

/// Builds the space for `scheme` from seed-tier pole terms.
pub fn build_space(
    store: &EmbeddingStore,
    dict: &StereotypeDictionary,
    scheme: &DimensionScheme,
    selector: LayerSelector,
    filter: &ContextFilter,
) -> Result<PolarSpace> {
    let mut basis = Vec::with_capacity(scheme.len());
    let mut coverage = Vec::new();
    let mut sources = BTreeSet::new();
    let present = dict.dimensions(Tier::Seed);
    for axis in &scheme.axes {
        // a composite axis may lack a member, but not a member's pole
        let members: Vec<Dimension> = axis.members.iter().copied().filter(|d| present.contains(d)).collect();
        if members.is_empty() {
            dict.require_seed_pole(axis.members[0])?;
        }
        for dim in members {
            dict.require_seed_pole(dim)?;
        }
        let mut poles = Vec::with_capacity(2);
        for direction in [Direction::High, Direction::Low] {
            let terms = pole_terms(dict, scheme, &axis.name, direction)?;
            let pole = build_pole(store, &axis.name, direction, &terms, selector, filter)?;
            if !pole.missing.is_empty() {
                log::warn!(
                    "{} {}: {} of {} pole terms missing from store",
                    axis.name,
                    direction,
                    pole.missing.len(),
                    terms.len()
                );
            }
            for term in &terms {
                sources.extend(store.sources_of(term));
            }
            coverage.push(PoleCoverage {
                axis: axis.name.clone(),
                direction,
                requested: terms.len(),
                resolved: pole.n_terms,
                total_contexts: pole.total_contexts,
                overlap: pole_overlap(dict, scheme, &axis.name, direction)?,
            });
            poles.push(pole.vector);
        }
        let row = poles[0].iter().zip(&poles[1]).map(|(hi, lo)| hi - lo).collect();
        basis.push(row);
    }
    if let Some(allowed) = &filter.sources {
        sources.retain(|s| allowed.contains(s));
    }
    let metadata = SpaceMetadata {
        model_label: store.model_label().to_string(),
        layers: selector,
        context_filter: filter.clone(),
        context_sources: sources,
        dictionary_label: dict.label.clone(),
        coverage,
        tool_version: crate::VERSION.to_string(),
    };
    PolarSpace::from_basis(scheme.clone(), basis, metadata)
}

/// Mean context vector of `term`, projected into the space.
pub fn project_term(
    space: &PolarSpace,
    store: &EmbeddingStore,
    term: &str,
    selector: LayerSelector,
    filter: &ContextFilter,
) -> Result<PolarProjection> {
    let tv = store.term_vector_filtered(term, selector, filter)?;
    Ok(PolarProjection {
        term: term.to_string(),
        coordinates: space.project(&tv.vector)?,
        contexts: tv.contexts,
    })
}
