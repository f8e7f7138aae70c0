//! Stereotype dictionaries and the 2D / 7D dimension schemes built on them.
//!
//! A dictionary is a flat list of labeled terms. Each term belongs to one of
//! the seven granular stereotype dimensions, sits on its high or low pole, and
//! is either part of the theory-driven seed list (used to build poles) or of
//! the extended list (used for held-out direction prediction).
//!
//! The on-disk format is a UTF-8 CSV with the header
//! `term,dimension,direction,tier,gloss,synset_id`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["term", "dimension", "direction", "tier", "gloss", "synset_id"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Sociability,
    Morality,
    Ability,
    Agency,
    Status,
    Politics,
    Religion,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::Sociability,
        Dimension::Morality,
        Dimension::Ability,
        Dimension::Agency,
        Dimension::Status,
        Dimension::Politics,
        Dimension::Religion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Sociability => "sociability",
            Dimension::Morality => "morality",
            Dimension::Ability => "ability",
            Dimension::Agency => "agency",
            Dimension::Status => "status",
            Dimension::Politics => "politics",
            Dimension::Religion => "religion",
        }
    }

    /// The warmth/competence axis this dimension rolls up into, if any.
    pub fn parent(self) -> Option<&'static str> {
        match self {
            Dimension::Sociability | Dimension::Morality => Some("warmth"),
            Dimension::Ability | Dimension::Agency => Some("competence"),
            _ => None,
        }
    }

    /// Source-data labels that map onto the canonical high/low directions.
    fn source_direction(self, label: &str) -> Option<Direction> {
        match (self, label) {
            (Dimension::Politics, "traditional") => Some(Direction::High),
            (Dimension::Politics, "progressive") => Some(Direction::Low),
            (Dimension::Religion, "religious") => Some(Direction::High),
            (Dimension::Religion, "non-religious" | "nonreligious") => Some(Direction::Low),
            _ => None,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Validation(format!(
                    "`{s}` is not one of the seven stereotype dimensions"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    High,
    Low,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::High => "high",
            Direction::Low => "low",
        }
    }

    pub fn flipped(self) -> Direction {
        match self {
            Direction::High => Direction::Low,
            Direction::Low => Direction::High,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Seed,
    Full,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Seed => "seed",
            Tier::Full => "full",
        }
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seed" => Ok(Tier::Seed),
            "full" => Ok(Tier::Full),
            other => Err(Error::Validation(format!(
                "tier must be `seed` or `full`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub term: String,
    pub dimension: Dimension,
    pub direction: Direction,
    pub tier: Tier,
    pub gloss: Option<String>,
    pub synset_id: Option<String>,
}

impl DictionaryEntry {
    pub fn new(term: &str, dimension: Dimension, direction: Direction, tier: Tier) -> Self {
        DictionaryEntry {
            term: normalize_term(term),
            dimension,
            direction,
            tier,
            gloss: None,
            synset_id: None,
        }
    }
}

/// Lowercases and trims a term; inner whitespace of multi-word terms is kept.
pub fn normalize_term(term: &str) -> String {
    term.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StereotypeDictionary {
    pub label: String,
    pub entries: Vec<DictionaryEntry>,
    /// Rows dropped on load because they repeated an earlier
    /// (term, dimension, direction, tier).
    #[serde(default)]
    pub duplicates_collapsed: usize,
}

impl StereotypeDictionary {
    /// Builds a dictionary from in-memory entries, collapsing duplicates and
    /// rejecting terms that sit on both poles of one dimension.
    pub fn from_entries(label: impl Into<String>, entries: Vec<DictionaryEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(entries.len());
        let mut duplicates = 0;
        for mut entry in entries {
            entry.term = normalize_term(&entry.term);
            if entry.term.is_empty() {
                return Err(Error::Validation("empty term".into()));
            }
            let key = (
                entry.term.clone(),
                entry.dimension,
                entry.direction,
                entry.tier,
            );
            if seen.insert(key) {
                kept.push(entry);
            } else {
                duplicates += 1;
            }
        }
        let dict = StereotypeDictionary {
            label: label.into(),
            entries: kept,
            duplicates_collapsed: duplicates,
        };
        dict.check_pole_conflicts()?;
        Ok(dict)
    }

    /// Loads the canonical dictionary CSV. With `tier_filter`, entries of the
    /// other tier are dropped after validation.
    ///
    /// Pole completeness is not enforced here, since a one-sided file is a
    /// valid input for evaluation; see [`StereotypeDictionary::validate_seed_poles`].
    pub fn load(path: impl AsRef<Path>, tier_filter: Option<Tier>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut records = reader.records().peekable();

        // A header row is optional; without one the columns are positional.
        let first = match records.peek() {
            Some(Ok(r)) => Some(r.clone()),
            Some(Err(_)) => return Err(csv_error(path, records.next().unwrap().unwrap_err())),
            None => None,
        };
        let column = |name: &str| first.as_ref().and_then(|h| h.iter().position(|f| f.trim() == name));
        let has_header = column("term").is_some() || column("dimension").is_some();
        let (c_term, c_dim, c_dir, c_tier, c_gloss, c_synset) = if has_header {
            let (Some(t), Some(d), Some(r), Some(i)) =
                (column("term"), column("dimension"), column("direction"), column("tier"))
            else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("header must be `{}`", CSV_HEADER.join(",")),
                });
            };
            records.next();
            (t, d, r, i, column("gloss"), column("synset_id"))
        } else {
            (0, 1, 2, 3, Some(4), Some(5))
        };

        let mut entries = Vec::new();
        for record in records {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            let field = |idx: usize| record.get(idx).map(str::trim);
            let optional = |idx: Option<usize>| {
                idx.and_then(|i| record.get(i))
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
            };

            let (Some(term), Some(dim), Some(dir), Some(tier)) =
                (field(c_term), field(c_dim), field(c_dir), field(c_tier))
            else {
                return Err(parse_err(format!(
                    "expected at least 4 fields, found {}",
                    record.len()
                )));
            };
            let term = normalize_term(term);
            if term.is_empty() {
                return Err(parse_err("empty term".into()));
            }
            let dimension: Dimension = dim.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let direction = parse_direction(dimension, dir).ok_or_else(|| {
                parse_err(format!("unknown direction `{dir}` for {dimension}"))
            })?;
            let tier: Tier = tier.parse().map_err(|e: Error| parse_err(e.to_string()))?;

            entries.push(DictionaryEntry {
                term,
                dimension,
                direction,
                tier,
                gloss: optional(c_gloss),
                synset_id: optional(c_synset),
            });
        }

        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut dict = StereotypeDictionary::from_entries(label, entries)?;
        if dict.duplicates_collapsed > 0 {
            log::warn!(
                "{}: collapsed {} duplicate rows",
                path.display(),
                dict.duplicates_collapsed
            );
        }
        if let Some(tier) = tier_filter {
            dict.entries.retain(|e| e.tier == tier);
        }
        Ok(dict)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        writer
            .write_record(CSV_HEADER)
            .map_err(|e| csv_error(path, e))?;
        for e in &self.entries {
            writer
                .write_record([
                    e.term.as_str(),
                    e.dimension.name(),
                    e.direction.name(),
                    e.tier.name(),
                    e.gloss.as_deref().unwrap_or(""),
                    e.synset_id.as_deref().unwrap_or(""),
                ])
                .map_err(|e| csv_error(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries_of(&self, tier: Tier) -> impl Iterator<Item = &DictionaryEntry> {
        self.entries.iter().filter(move |e| e.tier == tier)
    }

    /// Terms of one dimension/direction in the given tier, first occurrence order.
    pub fn terms(&self, dimension: Dimension, direction: Direction, tier: Tier) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.dimension == dimension && e.direction == direction && e.tier == tier)
            .map(|e| e.term.clone())
            .collect()
    }

    pub fn dimensions(&self, tier: Tier) -> BTreeSet<Dimension> {
        self.entries_of(tier).map(|e| e.dimension).collect()
    }

    /// Every dimension with seed entries must have both a high and a low pole.
    pub fn validate_seed_poles(&self) -> Result<()> {
        for dim in self.dimensions(Tier::Seed) {
            self.require_seed_pole(dim)?;
        }
        Ok(())
    }

    /// Errors unless `dim` has at least one seed term on each pole.
    pub fn require_seed_pole(&self, dim: Dimension) -> Result<()> {
        for dir in [Direction::High, Direction::Low] {
            if self.terms(dim, dir, Tier::Seed).is_empty() {
                return Err(Error::Validation(format!(
                    "dictionary `{}` has no seed-tier {dir} terms for {dim}",
                    self.label
                )));
            }
        }
        Ok(())
    }

    /// Entry counts keyed by (dimension, direction, tier).
    pub fn counts(&self) -> BTreeMap<(Dimension, Direction, Tier), usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.dimension, e.direction, e.tier)).or_insert(0) += 1;
        }
        out
    }

    fn check_pole_conflicts(&self) -> Result<()> {
        let mut poles: HashSet<(&str, Dimension, Direction)> = HashSet::new();
        for e in &self.entries {
            poles.insert((&e.term, e.dimension, e.direction));
        }
        let mut conflicts: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.direction == Direction::High)
            .filter(|e| poles.contains(&(e.term.as_str(), e.dimension, Direction::Low)))
            .map(|e| format!("{} ({})", e.term, e.dimension))
            .collect();
        conflicts.sort();
        conflicts.dedup();
        if conflicts.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "terms on both poles of a dimension: {}",
                conflicts.join(", ")
            )))
        }
    }
}

fn parse_direction(dimension: Dimension, label: &str) -> Option<Direction> {
    let label = label.trim().to_ascii_lowercase();
    match label.as_str() {
        "high" => Some(Direction::High),
        "low" => Some(Direction::Low),
        other => dimension.source_direction(other),
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "7d")]
    SevenD,
}

impl SchemeId {
    pub fn name(self) -> &'static str {
        match self {
            SchemeId::TwoD => "2d",
            SchemeId::SevenD => "7d",
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2d" | "two_d" => Ok(SchemeId::TwoD),
            "7d" | "seven_d" => Ok(SchemeId::SevenD),
            other => Err(Error::Validation(format!(
                "scheme must be `2d` or `7d`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub high_label: String,
    pub low_label: String,
    /// Granular dimensions whose pole lists make up this axis.
    pub members: Vec<Dimension>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionScheme {
    pub id: SchemeId,
    pub axes: Vec<Axis>,
}

impl DimensionScheme {
    pub fn new(id: SchemeId) -> Self {
        let axes = match id {
            SchemeId::TwoD => vec![
                Axis {
                    name: "warmth".into(),
                    high_label: "high warmth".into(),
                    low_label: "low warmth".into(),
                    members: vec![Dimension::Sociability, Dimension::Morality],
                },
                Axis {
                    name: "competence".into(),
                    high_label: "high competence".into(),
                    low_label: "low competence".into(),
                    members: vec![Dimension::Ability, Dimension::Agency],
                },
            ],
            SchemeId::SevenD => Dimension::ALL
                .into_iter()
                .map(|d| {
                    let (high, low) = match d {
                        Dimension::Politics => ("traditional".to_string(), "progressive".to_string()),
                        Dimension::Religion => ("religious".to_string(), "non-religious".to_string()),
                        _ => (format!("high {d}"), format!("low {d}")),
                    };
                    Axis {
                        name: d.name().into(),
                        high_label: high,
                        low_label: low,
                        members: vec![d],
                    }
                })
                .collect(),
        };
        DimensionScheme { id, axes }
    }

    pub fn two_d() -> Self {
        Self::new(SchemeId::TwoD)
    }

    pub fn seven_d() -> Self {
        Self::new(SchemeId::SevenD)
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn axis_names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn axis(&self, name: &str) -> Result<&Axis> {
        self.axes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAxis {
                axis: name.to_string(),
                scheme: self.id.to_string(),
            })
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAxis {
                axis: name.to_string(),
                scheme: self.id.to_string(),
            })
    }

    /// Index of the axis a granular dimension is evaluated on, if covered.
    pub fn axis_of(&self, dim: Dimension) -> Option<usize> {
        self.axes.iter().position(|a| a.members.contains(&dim))
    }
}

/// Seed-tier terms of one pole of `axis`. Composite axes take the union of
/// their member dimensions' lists in member order, without duplicates.
pub fn pole_terms(
    dict: &StereotypeDictionary,
    scheme: &DimensionScheme,
    axis: &str,
    direction: Direction,
) -> Result<Vec<String>> {
    let axis = scheme.axis(axis)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &dim in &axis.members {
        for term in dict.terms(dim, direction, Tier::Seed) {
            if seen.insert(term.clone()) {
                out.push(term);
            }
        }
    }
    Ok(out)
}

/// Number of seed terms that appear in more than one member list of a
/// composite pole (0 for single-dimension axes).
pub fn pole_overlap(
    dict: &StereotypeDictionary,
    scheme: &DimensionScheme,
    axis: &str,
    direction: Direction,
) -> Result<usize> {
    let axis = scheme.axis(axis)?;
    let total: usize = axis
        .members
        .iter()
        .map(|&d| {
            dict.terms(d, direction, Tier::Seed)
                .into_iter()
                .collect::<HashSet<_>>()
                .len()
        })
        .sum();
    let union = pole_terms(dict, scheme, &axis.name, direction)?.len();
    Ok(total - union)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_row_file() {
        let f = write_tmp("term,dimension,direction,tier,gloss,synset_id\nnice,sociability,high,seed,,\n");
        let dict = StereotypeDictionary::load(f.path(), None).unwrap();
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.entries[0].term, "nice");
        assert!(dict.validate_seed_poles().is_err());
    }

    #[test]
    fn normalizes_and_collapses_duplicates() {
        let f = write_tmp(
            "term,dimension,direction,tier,gloss,synset_id\n  Nice ,sociability,high,seed,,\nnice,sociability,high,seed,pleasant,\nCold Heart,sociability,low,seed,,\n",
        );
        let dict = StereotypeDictionary::load(f.path(), None).unwrap();
        assert_eq!(dict.len(), 2);
        assert_eq!(dict.duplicates_collapsed, 1);
        assert_eq!(dict.entries[1].term, "cold heart");
        dict.validate_seed_poles().unwrap();
    }

    #[test]
    fn source_direction_labels_map_to_canonical() {
        let f = write_tmp(
            "term,dimension,direction,tier,gloss,synset_id\nconservative,politics,traditional,seed,,\nliberal,politics,progressive,seed,,\nchurch,religion,religious,seed,,\natheist,religion,non-religious,seed,,\n",
        );
        let dict = StereotypeDictionary::load(f.path(), None).unwrap();
        let dirs: Vec<_> = dict.entries.iter().map(|e| e.direction).collect();
        assert_eq!(
            dirs,
            [Direction::High, Direction::Low, Direction::High, Direction::Low]
        );
    }

    #[test]
    fn unknown_dimension_names_its_line() {
        let f = write_tmp("term,dimension,direction,tier,gloss,synset_id\nnice,kindness,high,seed,,\n");
        assert!(matches!(
            StereotypeDictionary::load(f.path(), None),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_tmp("term,dimension,direction,tier,gloss,synset_id\nnice,sociability,high,seed,,\nrude,sociability\n");
        match StereotypeDictionary::load(f.path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_tmp("term,dimension,direction,tier,gloss,synset_id\nnice,sociability,sideways,seed,,\n");
        match StereotypeDictionary::load(f.path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn both_poles_of_one_dimension_rejected() {
        let f = write_tmp(
            "term,dimension,direction,tier,gloss,synset_id\ncool,sociability,high,seed,,\ncool,sociability,low,full,,\n",
        );
        assert!(matches!(
            StereotypeDictionary::load(f.path(), None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn tier_filter() {
        let f = write_tmp(
            "term,dimension,direction,tier,gloss,synset_id\nnice,sociability,high,seed,,\nwitty,sociability,high,full,,\n",
        );
        let dict = StereotypeDictionary::load(f.path(), Some(Tier::Full)).unwrap();
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.entries[0].term, "witty");
    }

    #[test]
    fn scheme_orders_and_labels() {
        let seven = DimensionScheme::seven_d();
        assert_eq!(
            seven.axis_names(),
            ["sociability", "morality", "ability", "agency", "status", "politics", "religion"]
        );
        let politics = seven.axis("politics").unwrap();
        assert_eq!(politics.high_label, "traditional");
        assert_eq!(politics.low_label, "progressive");
        let religion = seven.axis("religion").unwrap();
        assert_eq!(religion.high_label, "religious");
        assert_eq!(religion.low_label, "non-religious");
        assert_eq!(DimensionScheme::two_d().axis_names(), ["warmth", "competence"]);
    }

    #[test]
    fn composite_pole_is_deduplicated_union() {
        let entries = vec![
            DictionaryEntry::new("nice", Dimension::Sociability, Direction::High, Tier::Seed),
            DictionaryEntry::new("kind", Dimension::Sociability, Direction::High, Tier::Seed),
            DictionaryEntry::new("kind", Dimension::Morality, Direction::High, Tier::Seed),
            DictionaryEntry::new("honest", Dimension::Morality, Direction::High, Tier::Seed),
        ];
        let dict = StereotypeDictionary::from_entries("t", entries).unwrap();
        let two = DimensionScheme::two_d();
        let warm = pole_terms(&dict, &two, "warmth", Direction::High).unwrap();
        assert_eq!(warm, ["nice", "kind", "honest"]);
        assert_eq!(pole_overlap(&dict, &two, "warmth", Direction::High).unwrap(), 1);
        let seven = DimensionScheme::seven_d();
        assert!(pole_terms(&dict, &seven, "agency", Direction::Low)
            .unwrap()
            .is_empty());
        assert!(matches!(
            pole_terms(&dict, &two, "morality", Direction::High),
            Err(Error::UnknownAxis { .. })
        ));
    }
}
