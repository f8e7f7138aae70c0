//! Deterministic synthetic stores with known pole geometry and planted
//! group effects.
//!
//! A dictionary term on axis `i` gets `±axis_i / 2` plus Gaussian noise, a
//! population term gets `Σ offset · axis` plus noise. Noise for every record
//! comes from a ChaCha8 stream seeded with SHA-256 of
//! (seed, term, example id, layer), so a store does not depend on generation
//! order or platform.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::{Dimension, DictionaryEntry, Direction, StereotypeDictionary, Tier};
use crate::error::{Error, Result};
use crate::profile::GroupsFile;
use crate::store::{write_store, ContextSource, EmbeddingRecord, EmbeddingStore, StoreHeader};

/// Seed-tier pole sizes (high, low) of the published stereotype dictionary.
pub const REFERENCE_SEED_POLE_SIZES: [(Dimension, usize, usize); 7] = [
    (Dimension::Sociability, 43, 42),
    (Dimension::Morality, 51, 69),
    (Dimension::Ability, 40, 39),
    (Dimension::Agency, 42, 39),
    (Dimension::Status, 21, 13),
    (Dimension::Politics, 12, 16),
    (Dimension::Religion, 18, 10),
];

/// Extended-tier sizes (high, low) of the published stereotype dictionary.
pub const REFERENCE_FULL_POLE_SIZES: [(Dimension, usize, usize); 7] = [
    (Dimension::Sociability, 199, 162),
    (Dimension::Morality, 205, 635),
    (Dimension::Ability, 302, 160),
    (Dimension::Agency, 256, 113),
    (Dimension::Status, 187, 117),
    (Dimension::Politics, 34, 45),
    (Dimension::Religion, 146, 6),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisDirection {
    /// `"random-orthogonal"`: a distinct signed coordinate axis per name.
    /// `"random-dense"`: Gram–Schmidt over Gaussian draws.
    Generated(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAxis {
    /// A dimension name, or `warmth` / `competence`.
    pub name: String,
    pub direction: AxisDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub population: String,
    pub axis: String,
    /// In axis units.
    pub offset: f64,
    /// Restrict to these layers; all layers when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisOffset {
    pub axis: String,
    pub offset: f64,
}

fn default_examples() -> usize {
    5
}

fn default_label() -> String {
    "synthetic".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub dim: usize,
    pub layers: usize,
    #[serde(default = "default_examples")]
    pub examples_per_term: usize,
    pub axes: Vec<SynthAxis>,
    pub noise_sd: f64,
    #[serde(default)]
    pub planted_effects: Vec<PlantedEffect>,
    /// Constant shift added to every extended-tier term on an axis.
    #[serde(default)]
    pub full_tier_offsets: Vec<AxisOffset>,
    #[serde(default = "default_label")]
    pub model_label: String,
}

impl SynthSpec {
    /// Warmth and competence as signed coordinate axes.
    pub fn two_d(seed: u64, dim: usize, layers: usize, noise_sd: f64) -> Self {
        SynthSpec {
            seed,
            dim,
            layers,
            examples_per_term: default_examples(),
            axes: ["warmth", "competence"]
                .into_iter()
                .map(|name| SynthAxis {
                    name: name.into(),
                    direction: AxisDirection::Generated("random-orthogonal".into()),
                })
                .collect(),
            noise_sd,
            planted_effects: Vec::new(),
            full_tier_offsets: Vec::new(),
            model_label: default_label(),
        }
    }

    /// All seven dimensions as signed coordinate axes.
    pub fn seven_d(seed: u64, dim: usize, layers: usize, noise_sd: f64) -> Self {
        SynthSpec {
            axes: Dimension::ALL
                .into_iter()
                .map(|d| SynthAxis {
                    name: d.name().into(),
                    direction: AxisDirection::Generated("random-orthogonal".into()),
                })
                .collect(),
            ..Self::two_d(seed, dim, layers, noise_sd)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: SynthSpec = crate::profile::read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.dim == 0 || self.layers == 0 || self.examples_per_term == 0 {
            return bad("dim, layers and examples_per_term must be positive".into());
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return bad(format!("noise_sd must be finite and ≥ 0, got {}", self.noise_sd));
        }
        if self.axes.is_empty() {
            return bad("at least one axis is required".into());
        }
        if self.dim < self.axes.len() {
            return bad(format!(
                "dimension {} is too small for {} axes",
                self.dim,
                self.axes.len()
            ));
        }
        let mut names = BTreeSet::new();
        for axis in &self.axes {
            let known = axis.name == "warmth"
                || axis.name == "competence"
                || axis.name.parse::<Dimension>().is_ok();
            if !known {
                return bad(format!("unknown axis name `{}`", axis.name));
            }
            if !names.insert(axis.name.as_str()) {
                return bad(format!("axis `{}` listed twice", axis.name));
            }
            match &axis.direction {
                AxisDirection::Generated(kind) if kind == "random-orthogonal" || kind == "random-dense" => {}
                AxisDirection::Generated(kind) => {
                    return bad(format!("unknown axis generator `{kind}`"));
                }
                AxisDirection::Explicit(v) => {
                    if v.len() != self.dim {
                        return bad(format!(
                            "axis `{}` has length {}, expected {}",
                            axis.name,
                            v.len(),
                            self.dim
                        ));
                    }
                    if v.iter().any(|x| !x.is_finite()) || v.iter().all(|&x| x == 0.0) {
                        return bad(format!("axis `{}` must be finite and nonzero", axis.name));
                    }
                }
            }
        }
        let orthogonal = self
            .axes
            .iter()
            .filter(|a| a.direction == AxisDirection::Generated("random-orthogonal".into()))
            .count();
        if orthogonal > self.dim {
            return bad(format!("dimension {} is too small for {orthogonal} orthogonal axes", self.dim));
        }
        for e in &self.planted_effects {
            if !names.contains(e.axis.as_str()) {
                return bad(format!("planted effect on unknown axis `{}`", e.axis));
            }
            if !e.offset.is_finite() {
                return bad(format!("planted offset for `{}` is not finite", e.population));
            }
            if let Some(layers) = &e.layers {
                if let Some(&l) = layers.iter().find(|&&l| l >= self.layers) {
                    return bad(format!("planted effect layer {l} ≥ layer count {}", self.layers));
                }
            }
        }
        for o in &self.full_tier_offsets {
            if !names.contains(o.axis.as_str()) || !o.offset.is_finite() {
                return bad(format!("invalid full-tier offset on `{}`", o.axis));
            }
        }
        Ok(())
    }

    /// Axis index a dictionary dimension is generated on.
    fn axis_for(&self, dim: Dimension) -> Option<usize> {
        self.axes
            .iter()
            .position(|a| a.name == dim.name())
            .or_else(|| dim.parent().and_then(|p| self.axes.iter().position(|a| a.name == p)))
    }

    fn axis_index(&self, name: &str) -> usize {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .expect("validated axis name")
    }
}

/// Deterministic stream keyed on (seed, parts...).
fn keyed_rng(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"scm-profile/synth/1");
    hasher.update(seed.to_le_bytes());
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> impl Iterator<Item = f64> + '_ {
    (0..n).map(move |_| StandardNormal.sample(rng))
}

/// Resolves every axis to a concrete D-vector.
pub fn axis_vectors(spec: &SynthSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let d = spec.dim;
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); spec.axes.len()];

    // signed coordinate axes: a seeded permutation of coordinates
    let mut coords: Vec<usize> = (0..d).collect();
    {
        let mut rng = keyed_rng(spec.seed, &[b"coordinates"]);
        use rand::seq::SliceRandom;
        coords.shuffle(&mut rng);
    }
    let mut next_coord = coords.into_iter();
    for (i, axis) in spec.axes.iter().enumerate() {
        if axis.direction == AxisDirection::Generated("random-orthogonal".into()) {
            let c = next_coord.next().expect("validated dim ≥ axis count");
            let mut rng = keyed_rng(spec.seed, &[b"sign", axis.name.as_bytes()]);
            let sign = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 };
            let mut v = vec![0.0; d];
            v[c] = sign;
            out[i] = v;
        } else if let AxisDirection::Explicit(v) = &axis.direction {
            out[i] = v.clone();
        }
    }

    // dense axes: orthonormalize against everything placed so far
    for (i, axis) in spec.axes.iter().enumerate() {
        if axis.direction != AxisDirection::Generated("random-dense".into()) {
            continue;
        }
        let mut rng = keyed_rng(spec.seed, &[b"dense", axis.name.as_bytes()]);
        let mut v: Vec<f64> = normals(&mut rng, d).collect();
        for other in out.iter().filter(|o| !o.is_empty()) {
            let norm2: f64 = other.iter().map(|x| x * x).sum();
            let dot: f64 = v.iter().zip(other).map(|(a, b)| a * b).sum();
            for (x, o) in v.iter_mut().zip(other) {
                *x -= dot / norm2 * o;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            return Err(Error::Synth(format!("could not orthogonalize axis `{}`", axis.name)));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out[i] = v;
    }
    Ok(out)
}

struct TermPlan {
    source: ContextSource,
    /// Per layer, the noiseless base vector.
    base: Vec<Vec<f64>>,
}

fn example_ids(source: ContextSource, m: usize) -> Vec<String> {
    let prefix = if source == ContextSource::Template { "tpl" } else { "ex" };
    (0..m).map(|i| format!("{prefix}{i}")).collect()
}

/// Generates all records for the dictionary and the populations in `groups`.
pub fn generate_records(
    spec: &SynthSpec,
    dict: &StereotypeDictionary,
    groups: &GroupsFile,
) -> Result<(StoreHeader, Vec<EmbeddingRecord>)> {
    let axes = axis_vectors(spec)?;
    groups.validate()?;
    for e in &spec.planted_effects {
        groups
            .population(&e.population)
            .map_err(|_| Error::Synth(format!("planted effect on unknown population `{}`", e.population)))?;
    }
    if dict.is_empty() {
        return Err(Error::Synth("dictionary is empty".into()));
    }

    let d = spec.dim;
    let layers = spec.layers;
    let add = |base: &mut [Vec<f64>], axis: usize, scale: f64, layer_filter: Option<&[usize]>| {
        for (l, b) in base.iter_mut().enumerate() {
            if layer_filter.is_some_and(|f| !f.contains(&l)) {
                continue;
            }
            for (x, a) in b.iter_mut().zip(&axes[axis]) {
                *x += scale * a;
            }
        }
    };

    let mut plans: BTreeMap<String, TermPlan> = BTreeMap::new();
    let mut unmapped = 0usize;

    // one contribution per distinct (axis, direction) of a term
    let mut dict_contrib: BTreeMap<&str, BTreeSet<(usize, Direction, Tier)>> = BTreeMap::new();
    for e in &dict.entries {
        match spec.axis_for(e.dimension) {
            Some(axis) => {
                dict_contrib.entry(&e.term).or_default().insert((axis, e.direction, e.tier));
            }
            None => unmapped += 1,
        }
    }
    if unmapped > 0 {
        log::info!("{unmapped} dictionary entries have no synthetic axis and were not generated");
    }
    for (term, contribs) in dict_contrib {
        let mut base = vec![vec![0.0; d]; layers];
        let distinct: BTreeSet<(usize, Direction)> = contribs.iter().map(|&(a, dir, _)| (a, dir)).collect();
        for (axis, dir) in distinct {
            let sign = if dir == Direction::High { 0.5 } else { -0.5 };
            add(&mut base, axis, sign, None);
        }
        if contribs.iter().any(|&(_, _, tier)| tier == Tier::Full) {
            for o in &spec.full_tier_offsets {
                add(&mut base, spec.axis_index(&o.axis), o.offset, None);
            }
        }
        plans.insert(
            term.to_string(),
            TermPlan {
                source: ContextSource::Generated,
                base,
            },
        );
    }

    let mut population_terms: Vec<(&str, &str)> = groups
        .populations
        .iter()
        .flat_map(|p| p.terms.iter().map(move |t| (p.id.as_str(), t.as_str())))
        .collect();
    population_terms.extend(groups.overlays.iter().map(|o| ("overlay", o.term.as_str())));
    for (pop, term) in population_terms {
        let plan = plans.entry(term.to_string()).or_insert_with(|| TermPlan {
            source: ContextSource::Template,
            base: vec![vec![0.0; d]; layers],
        });
        for e in spec.planted_effects.iter().filter(|e| e.population == pop) {
            add(&mut plan.base, spec.axis_index(&e.axis), e.offset, e.layers.as_deref());
        }
    }

    let m = spec.examples_per_term;
    let mut records = Vec::with_capacity(plans.len() * m * layers);
    for (term, plan) in &plans {
        for ex in example_ids(plan.source, m) {
            for (layer, base) in plan.base.iter().enumerate() {
                let vector: Vec<f32> = if spec.noise_sd == 0.0 {
                    base.iter().map(|&x| x as f32).collect()
                } else {
                    let mut rng = keyed_rng(
                        spec.seed,
                        &[term.as_bytes(), ex.as_bytes(), &(layer as u64).to_le_bytes()],
                    );
                    base.iter()
                        .zip(normals(&mut rng, d))
                        .map(|(&b, z)| (b + spec.noise_sd * z) as f32)
                        .collect()
                };
                records.push(EmbeddingRecord {
                    term: term.clone(),
                    example_id: ex.clone(),
                    source: plan.source,
                    layer,
                    vector,
                });
            }
        }
    }

    let mut header = StoreHeader::new(spec.model_label.clone(), d, layers);
    header.metadata.insert("generator".into(), "synth".into());
    header.metadata.insert("seed".into(), spec.seed.to_string());
    header.metadata.insert("noise_sd".into(), spec.noise_sd.to_string());
    Ok((header, records))
}

/// Generates and writes a `polarstore/1` directory.
pub fn generate_store(
    spec: &SynthSpec,
    dict: &StereotypeDictionary,
    groups: &GroupsFile,
    dir: impl AsRef<Path>,
) -> Result<usize> {
    let (header, records) = generate_records(spec, dict, groups)?;
    write_store(dir, &header, &records)?;
    Ok(records.len())
}

/// Generates straight into an in-memory store.
pub fn generate_in_memory(
    spec: &SynthSpec,
    dict: &StereotypeDictionary,
    groups: &GroupsFile,
) -> Result<EmbeddingStore> {
    let (header, records) = generate_records(spec, dict, groups)?;
    EmbeddingStore::from_records(&header, &records)
}

/// Dictionary with placeholder terms (`<dimension>_<direction>_<tier><i>`)
/// and the given pole sizes.
pub fn synthetic_dictionary(
    label: &str,
    seed_sizes: &[(Dimension, usize, usize)],
    full_sizes: &[(Dimension, usize, usize)],
) -> StereotypeDictionary {
    let mut entries = Vec::new();
    for (tier, sizes) in [(Tier::Seed, seed_sizes), (Tier::Full, full_sizes)] {
        for &(dim, n_high, n_low) in sizes {
            for (dir, n) in [(Direction::High, n_high), (Direction::Low, n_low)] {
                for i in 0..n {
                    let term = format!("{}_{}_{}{i:03}", dim.name(), dir.name(), tier.name());
                    entries.push(DictionaryEntry::new(&term, dim, dir, tier));
                }
            }
        }
    }
    StereotypeDictionary::from_entries(label, entries).expect("placeholder terms are unique")
}

/// `n` placeholder names per group, e.g. `female_name_000`.
pub fn synthetic_names(group: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{group}_name_{i:03}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dict() -> StereotypeDictionary {
        synthetic_dictionary(
            "tiny",
            &[(Dimension::Sociability, 1, 1), (Dimension::Ability, 1, 1)],
            &[],
        )
    }

    #[test]
    fn record_count_is_product() {
        // 4 pole terms + 3 population terms = 7 terms
        let groups = GroupsFile {
            populations: vec![
                crate::profile::VocabularyPopulation::new("a", crate::profile::PopulationKind::Names, ["x", "y"]),
                crate::profile::VocabularyPopulation::new("b", crate::profile::PopulationKind::Names, ["z"]),
            ],
            comparisons: vec![],
            overlays: vec![],
        };
        let mut spec = SynthSpec::two_d(1, 8, 3, 0.1);
        spec.examples_per_term = 5;
        let (_, records) = generate_records(&spec, &tiny_dict(), &groups).unwrap();
        assert_eq!(records.len(), 7 * 5 * 3);
    }

    #[test]
    fn same_seed_same_records() {
        let groups = GroupsFile::gendered_terms();
        let spec = SynthSpec::two_d(42, 6, 2, 0.3);
        let (_, a) = generate_records(&spec, &tiny_dict(), &groups).unwrap();
        let (_, b) = generate_records(&spec, &tiny_dict(), &groups).unwrap();
        assert_eq!(a, b);
        let (_, c) = generate_records(&SynthSpec { seed: 43, ..spec }, &tiny_dict(), &groups).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_depends_only_on_key() {
        let spec = SynthSpec::two_d(7, 4, 1, 1.0);
        let groups = GroupsFile::gendered_terms();
        let mut bigger = groups.clone();
        bigger.populations[0].terms.push("extra".into());
        let (_, a) = generate_records(&spec, &tiny_dict(), &groups).unwrap();
        let (_, b) = generate_records(&spec, &tiny_dict(), &bigger).unwrap();
        let find = |rs: &[EmbeddingRecord], t: &str| rs.iter().find(|r| r.term == t).unwrap().vector.clone();
        assert_eq!(find(&a, "mother"), find(&b, "mother"));
    }

    #[test]
    fn axes_are_orthonormal() {
        let mut spec = SynthSpec::seven_d(3, 16, 1, 0.0);
        spec.axes[6].direction = AxisDirection::Generated("random-dense".into());
        let axes = axis_vectors(&spec).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let dot: f64 = axes[i].iter().zip(&axes[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "{i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn bad_specs() {
        assert!(SynthSpec::seven_d(0, 6, 1, 0.0).validate().is_err());
        assert!(SynthSpec::two_d(0, 6, 1, -1.0).validate().is_err());
        let mut s = SynthSpec::two_d(0, 6, 1, 0.0);
        s.axes[0].name = "kindness".into();
        assert!(s.validate().is_err());
        let mut s = SynthSpec::two_d(0, 6, 2, 0.0);
        s.planted_effects.push(PlantedEffect {
            population: "p".into(),
            axis: "warmth".into(),
            offset: 1.0,
            layers: Some(vec![2]),
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn reference_dictionary_shape() {
        let dict = synthetic_dictionary("ref", &REFERENCE_SEED_POLE_SIZES, &REFERENCE_FULL_POLE_SIZES);
        assert_eq!(dict.terms(Dimension::Sociability, Direction::High, Tier::Seed).len(), 43);
        assert_eq!(dict.terms(Dimension::Religion, Direction::High, Tier::Full).len(), 146);
        dict.validate_seed_poles().unwrap();
    }
}
