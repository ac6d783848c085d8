//! Type paths and the two-level (fine/coarse) labeling schema.
//!
//! A [`TypePath`] is a root-to-leaf walk through a tree-shaped ontology such as
//! `Thing/Agent/Person/Artist/MusicalArtist`. The leaf of a path is its most
//! specialized type. [`induce_schema`] turns a bag of counted paths into a
//! [`TypeSchema`]: leaves that sit below the abstract top levels and occur often
//! enough become fine types, and each fine type is attached to one of five
//! coarse classes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Separator between path segments in the text format.
pub const SEPARATOR: char = '/';

/// Number of top ontology levels treated as abstract.
pub const DEFAULT_DEPTH_CUTOFF: usize = 3;

/// Leaves seen fewer times than this are pruned from the schema.
pub const DEFAULT_MIN_COUNT: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypePath {
    segments: Vec<String>,
}

impl TypePath {
    pub fn new<I, S>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(Error::InvalidPath("path has no segments".into()));
        }
        if let Some(pos) = segments.iter().position(|s| s.trim().is_empty()) {
            return Err(Error::InvalidPath(format!("segment {} is empty", pos + 1)));
        }
        if let Some(w) = segments.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidPath(format!(
                "segment `{}` repeats itself",
                w[0]
            )));
        }
        Ok(TypePath { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// Always false: a path has at least one segment.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// The most specialized type on the path.
    pub fn leaf(&self) -> &str {
        self.segments.last().expect("TypePath is never empty")
    }

    /// Segments below the first `depth_cutoff` abstract levels.
    pub fn below(&self, depth_cutoff: usize) -> &[String] {
        &self.segments[depth_cutoff.min(self.segments.len())..]
    }
}

impl FromStr for TypePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TypePath::new(s.trim().split(SEPARATOR).map(str::trim))
    }
}

impl fmt::Display for TypePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.segments.join("/"))
    }
}

/// Returns the last segment of `path`.
pub fn leaf_type(path: &TypePath) -> &str {
    path.leaf()
}

/// Parses one path per line. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_type_paths<I, S>(lines: I) -> Result<Vec<TypePath>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = Vec::new();
    for (i, line) in lines.into_iter().enumerate() {
        let line = line.as_ref();
        if line.trim().is_empty() {
            continue;
        }
        out.push(line.parse().map_err(|e| parse_error(i + 1, e))?);
    }
    Ok(out)
}

/// Parses the counted path-file format: `path[\tcount]`, count defaulting to 1.
pub fn parse_counted_paths(text: &str) -> Result<Vec<(TypePath, u64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (path, count) = match line.split_once('\t') {
            Some((p, c)) => {
                let count = c.trim().parse::<u64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid count `{}`", c.trim()),
                })?;
                (p, count)
            }
            None => (line, 1),
        };
        let path = path.parse().map_err(|e| parse_error(i + 1, e))?;
        out.push((path, count));
    }
    Ok(out)
}

pub fn read_counted_paths(path: impl AsRef<Path>) -> Result<Vec<(TypePath, u64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_counted_paths(&text)
}

fn parse_error(line: usize, err: Error) -> Error {
    let message = match err {
        Error::InvalidPath(m) => m,
        other => other.to_string(),
    };
    Error::Parse { line, message }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoarseType {
    Person,
    Organisation,
    Place,
    Work,
    Other,
}

impl CoarseType {
    pub const ALL: [CoarseType; 5] = [
        CoarseType::Person,
        CoarseType::Organisation,
        CoarseType::Place,
        CoarseType::Work,
        CoarseType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseType::Person => "Person",
            CoarseType::Organisation => "Organisation",
            CoarseType::Place => "Place",
            CoarseType::Work => "Work",
            CoarseType::Other => "Other",
        }
    }
}

impl fmt::Display for CoarseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoarseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CoarseType::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownType(s.to_string()))
    }
}

/// The conventional mapping from ontology segment names to coarse classes.
pub fn default_coarse_roots() -> BTreeMap<String, CoarseType> {
    [
        ("Person", CoarseType::Person),
        ("Organisation", CoarseType::Organisation),
        ("Place", CoarseType::Place),
        ("Work", CoarseType::Work),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

// Field order is alphabetical so the serialized keys come out sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineType {
    pub coarse: CoarseType,
    pub name: String,
}

/// The induced label set. Only `depth_cutoff`, `fine_types` and `min_count` are
/// persisted; `coarse_roots` is reattached on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSchema {
    pub depth_cutoff: usize,
    /// Sorted by name.
    pub fine_types: Vec<FineType>,
    pub min_count: u64,
    #[serde(skip, default = "default_coarse_roots")]
    pub coarse_roots: BTreeMap<String, CoarseType>,
}

/// How a single path relates to a schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathClass<'a> {
    /// The leaf is a fine type of the schema.
    Fine(&'a str, CoarseType),
    /// The leaf is too general or was pruned; only a coarse class is known.
    CoarseOnly(CoarseType),
    /// No coarse root was found on the path.
    Unknown,
}

impl TypeSchema {
    pub fn len(&self) -> usize {
        self.fine_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine_types.is_empty()
    }

    pub fn contains(&self, fine: &str) -> bool {
        self.find(fine).is_some()
    }

    fn find(&self, fine: &str) -> Option<&FineType> {
        self.fine_types
            .binary_search_by(|t| t.name.as_str().cmp(fine))
            .ok()
            .map(|i| &self.fine_types[i])
    }

    pub fn coarse_of(&self, fine: &str) -> Result<CoarseType> {
        self.find(fine)
            .map(|t| t.coarse)
            .ok_or_else(|| Error::UnknownType(fine.to_string()))
    }

    pub fn fine_names(&self) -> impl Iterator<Item = &str> {
        self.fine_types.iter().map(|t| t.name.as_str())
    }

    /// Coarse class of a path under this schema's roots.
    pub fn coarse_for_path(&self, path: &TypePath) -> Option<CoarseType> {
        coarse_for_path(path, &self.coarse_roots)
    }

    pub fn classify_path<'a>(&'a self, path: &TypePath) -> PathClass<'a> {
        if let Some(t) = self.find(path.leaf()) {
            return PathClass::Fine(&t.name, t.coarse);
        }
        match self.coarse_for_path(path) {
            Some(c) => PathClass::CoarseOnly(c),
            None => PathClass::Unknown,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut schema: TypeSchema = serde_json::from_str(text)?;
        if schema.depth_cutoff < 1 || schema.min_count < 1 {
            return Err(Error::InvalidConfig(
                "schema needs depth_cutoff >= 1 and min_count >= 1".into(),
            ));
        }
        schema.fine_types.sort_by(|a, b| a.name.cmp(&b.name));
        if let Some(w) = schema.fine_types.windows(2).find(|w| w[0].name == w[1].name) {
            return Err(Error::SchemaConflict {
                leaf: w[0].name.clone(),
                first: w[0].coarse.to_string(),
                second: w[1].coarse.to_string(),
            });
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// First segment, scanning from the root, that names a coarse root.
fn coarse_for_path(path: &TypePath, coarse_roots: &BTreeMap<String, CoarseType>) -> Option<CoarseType> {
    path.segments().iter().find_map(|s| coarse_roots.get(s).copied())
}

/// Builds the fine/coarse schema from counted paths.
///
/// A leaf qualifies when its path extends past `depth_cutoff` levels and its
/// summed count reaches `min_count`. The coarse class is taken from the first
/// path segment that appears in `coarse_roots`, and is `Other` when there is
/// none. A leaf reached under two different coarse classes is a conflict.
pub fn induce_schema(
    paths: &[(TypePath, u64)],
    depth_cutoff: usize,
    min_count: u64,
    coarse_roots: &BTreeMap<String, CoarseType>,
) -> Result<TypeSchema> {
    if depth_cutoff < 1 {
        return Err(Error::InvalidConfig("depth_cutoff must be >= 1".into()));
    }
    if min_count < 1 {
        return Err(Error::InvalidConfig("min_count must be >= 1".into()));
    }

    let mut leaves: BTreeMap<&str, (CoarseType, u64)> = BTreeMap::new();
    for (path, count) in paths {
        if path.below(depth_cutoff).is_empty() {
            continue;
        }
        let coarse = coarse_for_path(path, coarse_roots).unwrap_or(CoarseType::Other);
        let entry = leaves.entry(path.leaf()).or_insert((coarse, 0));
        if entry.0 != coarse {
            return Err(Error::SchemaConflict {
                leaf: path.leaf().to_string(),
                first: entry.0.to_string(),
                second: coarse.to_string(),
            });
        }
        entry.1 += count;
    }

    let fine_types = leaves
        .into_iter()
        .filter(|(_, (_, total))| *total >= min_count)
        .map(|(name, (coarse, _))| FineType {
            coarse,
            name: name.to_string(),
        })
        .collect();

    Ok(TypeSchema {
        depth_cutoff,
        fine_types,
        min_count,
        coarse_roots: coarse_roots.clone(),
    })
}

/// Frequency of each path with the abstract top levels dropped, most common
/// first. Paths are rendered with `.` between the remaining segments, lower-cased
/// except for the leaf (`person.artist.MusicalArtist`).
pub fn path_frequencies(paths: &[(TypePath, u64)], depth_cutoff: usize) -> Vec<(String, u64, f64)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (path, count) in paths {
        let tail = path.below(depth_cutoff);
        if tail.is_empty() {
            continue;
        }
        let (leaf, inner) = tail.split_last().expect("non-empty");
        let mut key: Vec<String> = inner.iter().map(|s| s.to_lowercase()).collect();
        key.push(leaf.clone());
        *counts.entry(key.join(".")).or_default() += count;
    }
    let total: u64 = counts.values().sum();
    let mut rows: Vec<_> = counts
        .into_iter()
        .map(|(k, c)| (k, c, c as f64 / total as f64))
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> TypePath {
        s.parse().unwrap()
    }

    #[test]
    fn parses_guitarist_path() {
        let paths = parse_type_paths([
            "Thing/Species/Eukaryote/Animal/Person/Artist/MusicalArtist/Instrumentalist/Guitarist",
        ])
        .unwrap();
        assert_eq!(paths[0].len(), 9);
        assert_eq!(leaf_type(&paths[0]), "Guitarist");
    }

    #[test]
    fn single_segment_path() {
        let paths = parse_type_paths(["Person"]).unwrap();
        assert_eq!(paths[0].len(), 1);
        assert_eq!(paths[0].leaf(), "Person");
    }

    #[test]
    fn empty_segment_reports_line() {
        match parse_type_paths(["A//B"]) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_type_paths(["A/B", "", "C/"]) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_lines_skipped() {
        let paths = parse_type_paths(["A/B", "  ", "C"]).unwrap();
        assert_eq!(paths.len(), 2);
    }

    #[test]
    fn adjacent_duplicates_rejected() {
        assert!(TypePath::new(["A", "A"]).is_err());
        assert!(TypePath::new(["A", "B", "A"]).is_ok());
        assert!(TypePath::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn counted_paths() {
        let rows = parse_counted_paths("A/B\t7\nA/C\n\nA/D\t x").unwrap_err();
        assert!(matches!(rows, Error::Parse { line: 4, .. }));
        let rows = parse_counted_paths("A/B\t7\nA/C\n").unwrap();
        assert_eq!(rows, vec![(p("A/B"), 7), (p("A/C"), 1)]);
    }

    #[test]
    fn company_leaf() {
        assert_eq!(leaf_type(&p("Thing/Agent/Organisation/Company")), "Company");
    }

    #[test]
    fn prunes_rare_leaves() {
        let paths = vec![
            (p("Thing/Agent/Person/Artist/MusicalArtist"), 10),
            (p("Thing/Agent/Person/Chef"), 2),
        ];
        let schema = induce_schema(&paths, 3, 5, &default_coarse_roots()).unwrap();
        assert_eq!(schema.fine_names().collect::<Vec<_>>(), ["MusicalArtist"]);
        assert_eq!(schema.coarse_of("MusicalArtist").unwrap(), CoarseType::Person);

        let all = induce_schema(&paths, 3, 1, &default_coarse_roots()).unwrap();
        assert_eq!(all.fine_names().collect::<Vec<_>>(), ["Chef", "MusicalArtist"]);
    }

    #[test]
    fn counts_sum_across_paths() {
        let paths = vec![
            (p("Thing/Agent/Person/Writer"), 3),
            (p("Thing/Agent/Person/Artist/Writer"), 3),
        ];
        let schema = induce_schema(&paths, 3, 5, &default_coarse_roots()).unwrap();
        assert!(schema.contains("Writer"));
    }

    #[test]
    fn abstract_levels_are_not_fine_types() {
        let paths = vec![(p("Thing/Agent/Person"), 100)];
        let schema = induce_schema(&paths, 3, 1, &default_coarse_roots()).unwrap();
        assert!(schema.is_empty());
        assert_eq!(
            schema.classify_path(&p("Thing/Agent/Person")),
            PathClass::CoarseOnly(CoarseType::Person)
        );
    }

    #[test]
    fn coarse_lookup() {
        let paths = vec![
            (p("Thing/Agent/Person/Artist/MusicalArtist"), 5),
            (p("Thing/Agent/Organisation/Company"), 5),
            (p("Thing/ArchitecturalStructure/Venue/Stadium"), 5),
        ];
        let schema = induce_schema(&paths, 3, 5, &default_coarse_roots()).unwrap();
        assert_eq!(schema.coarse_of("MusicalArtist").unwrap(), CoarseType::Person);
        assert_eq!(schema.coarse_of("Company").unwrap(), CoarseType::Organisation);
        assert_eq!(schema.coarse_of("Stadium").unwrap(), CoarseType::Other);
        assert!(matches!(schema.coarse_of("Chef"), Err(Error::UnknownType(t)) if t == "Chef"));
    }

    #[test]
    fn conflicting_leaf_fails() {
        let paths = vec![
            (p("Thing/Agent/Person/Broadcaster"), 5),
            (p("Thing/Agent/Organisation/Broadcaster"), 5),
        ];
        assert!(matches!(
            induce_schema(&paths, 3, 1, &default_coarse_roots()),
            Err(Error::SchemaConflict { .. })
        ));
    }

    #[test]
    fn empty_input_gives_empty_schema() {
        let schema = induce_schema(&[], 3, 5, &default_coarse_roots()).unwrap();
        assert!(schema.is_empty());
        assert!(induce_schema(&[], 0, 5, &default_coarse_roots()).is_err());
        assert!(induce_schema(&[], 3, 0, &default_coarse_roots()).is_err());
    }

    #[test]
    fn schema_json_keys_sorted() {
        let paths = vec![(p("Thing/Agent/Organisation/Company"), 5)];
        let schema = induce_schema(&paths, 3, 5, &default_coarse_roots()).unwrap();
        let json = schema.to_json().unwrap();
        let a = json.find("depth_cutoff").unwrap();
        let b = json.find("fine_types").unwrap();
        let c = json.find("min_count").unwrap();
        assert!(a < b && b < c);
        assert!(json.find("\"coarse\"").unwrap() < json.find("\"name\"").unwrap());
        assert!(!json.contains("coarse_roots"));
        assert_eq!(TypeSchema::from_json(&json).unwrap(), schema);
    }

    #[test]
    fn path_frequency_rendering() {
        let paths = vec![
            (p("Thing/Agent/Person/Artist/MusicalArtist"), 3),
            (p("Thing/Agent/Organisation/Company"), 1),
            (p("Thing/Agent/Person"), 9),
        ];
        let rows = path_frequencies(&paths, 2);
        assert_eq!(rows[0].0, "Person");
        assert_eq!(rows[1].0, "person.artist.MusicalArtist");
        assert_eq!(rows[2].0, "organisation.Company");
        assert!((rows.iter().map(|r| r.2).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
