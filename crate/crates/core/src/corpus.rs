//! Social-KB entities, alignment joins against KB dump extracts, and label records.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ontology::{CoarseType, PathClass, TypePath, TypeSchema};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub handle: String,
    pub followers: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// Parses JSON-lines entity records, rejecting duplicate ids.
pub fn parse_entities(reader: impl BufRead) -> Result<Vec<EntityRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EntityRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_entities(path: impl AsRef<Path>) -> Result<Vec<EntityRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_entities(BufReader::new(file))
}

/// One row of the Wikidata extract: an item and the account id it lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikidataRow {
    pub qid: String,
    pub account_id: String,
    pub description: Option<String>,
}

/// Parses `qid \t account_id \t description` rows.
pub fn parse_wikidata_index(text: &str) -> Result<Vec<WikidataRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let qid = cols.next().unwrap_or_default().trim();
        let account = cols.next().map(str::trim).unwrap_or_default();
        if qid.is_empty() || account.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `qid \\t account_id \\t description`".into(),
            });
        }
        let description = cols.next().map(str::trim).filter(|d| !d.is_empty());
        rows.push(WikidataRow {
            qid: qid.to_string(),
            account_id: account.to_string(),
            description: description.map(str::to_string),
        });
    }
    Ok(rows)
}

pub fn read_wikidata_index(path: impl AsRef<Path>) -> Result<Vec<WikidataRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_wikidata_index(&text)
}

/// Parses `qid \t path` rows. When a qid has several paths the first one in
/// file order is kept.
pub fn parse_dbpedia_types(text: &str) -> Result<HashMap<String, TypePath>> {
    let mut out: HashMap<String, TypePath> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (qid, path) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected `qid \\t path`".into(),
        })?;
        let path: TypePath = path.parse().map_err(|e: Error| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let qid = qid.trim();
        match out.get(qid) {
            Some(existing) if *existing != path => {
                log::warn!("{qid}: keeping {existing}, ignoring later path {path}");
            }
            Some(_) => {}
            None => {
                out.insert(qid.to_string(), path);
            }
        }
    }
    Ok(out)
}

pub fn read_dbpedia_types(path: impl AsRef<Path>) -> Result<HashMap<String, TypePath>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dbpedia_types(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub entity_id: String,
    pub qid: Option<String>,
    pub wikidata_description: Option<String>,
    #[serde(with = "opt_path")]
    pub dbpedia_path: Option<TypePath>,
}

mod opt_path {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::ontology::TypePath;

    pub fn serialize<S: Serializer>(p: &Option<TypePath>, s: S) -> Result<S::Ok, S::Error> {
        p.as_ref().map(|p| p.to_string()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<TypePath>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Exact join of entities against the Wikidata index on account id.
///
/// Output follows entity order. An entity listed by two different items is an
/// error; repeated identical rows are tolerated and the first description wins.
pub fn align_wikidata(entities: &[EntityRecord], index: &[WikidataRow]) -> Result<Vec<AlignmentRecord>> {
    let mut by_account: HashMap<&str, Vec<&WikidataRow>> = HashMap::new();
    for row in index {
        by_account.entry(&row.account_id).or_default().push(row);
    }
    let mut out = Vec::new();
    for entity in entities {
        let Some(rows) = by_account.get(entity.id.as_str()) else {
            continue;
        };
        let first = rows[0];
        if let Some(other) = rows.iter().find(|r| r.qid != first.qid) {
            return Err(Error::AmbiguousIndex {
                account: entity.id.clone(),
                first: first.qid.clone(),
                second: other.qid.clone(),
            });
        }
        out.push(AlignmentRecord {
            entity_id: entity.id.clone(),
            qid: Some(first.qid.clone()),
            wikidata_description: rows.iter().find_map(|r| r.description.clone()),
            dbpedia_path: None,
        });
    }
    Ok(out)
}

/// Attaches DBpedia type paths to alignments through their Wikidata qid.
pub fn attach_dbpedia(alignments: &[AlignmentRecord], dbpedia: &HashMap<String, TypePath>) -> Vec<AlignmentRecord> {
    alignments
        .iter()
        .map(|a| {
            let mut a = a.clone();
            if let Some(path) = a.qid.as_deref().and_then(|q| dbpedia.get(q)) {
                a.dbpedia_path = Some(path.clone());
            }
            a
        })
        .collect()
}

pub fn write_alignments(path: impl AsRef<Path>, alignments: &[AlignmentRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for a in alignments {
        serde_json::to_writer(&mut buf, a)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_alignments(path: impl AsRef<Path>) -> Result<Vec<AlignmentRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    AlignedDbpedia,
    WeakWikidata,
    WeakSpecialized,
    ManualPrimary,
    ManualSecondary,
    Predicted,
}

impl LabelSource {
    pub const ALL: [LabelSource; 6] = [
        LabelSource::AlignedDbpedia,
        LabelSource::WeakWikidata,
        LabelSource::WeakSpecialized,
        LabelSource::ManualPrimary,
        LabelSource::ManualSecondary,
        LabelSource::Predicted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::AlignedDbpedia => "aligned_dbpedia",
            LabelSource::WeakWikidata => "weak_wikidata",
            LabelSource::WeakSpecialized => "weak_specialized",
            LabelSource::ManualPrimary => "manual_primary",
            LabelSource::ManualSecondary => "manual_secondary",
            LabelSource::Predicted => "predicted",
        }
    }

    pub fn is_weak(self) -> bool {
        matches!(self, LabelSource::WeakWikidata | LabelSource::WeakSpecialized)
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LabelSource::ALL
            .into_iter()
            .find(|l| l.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown label source `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelRecord {
    pub entity_id: String,
    pub fine: String,
    pub source: LabelSource,
}

impl LabelRecord {
    pub fn new(entity_id: impl Into<String>, fine: impl Into<String>, source: LabelSource) -> Self {
        LabelRecord {
            entity_id: entity_id.into(),
            fine: fine.into(),
            source,
        }
    }
}

/// Parses `entity_id \t fine_type \t source` rows. A fourth column (prediction
/// confidence) is accepted and ignored.
pub fn parse_labels(text: &str) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&cols.len()) || cols[0].is_empty() || cols[1].is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `entity_id \\t fine_type \\t source`".into(),
            });
        }
        let source = cols[2].parse().map_err(|e: Error| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(LabelRecord::new(cols[0], cols[1], source));
    }
    Ok(out)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[LabelRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for l in labels {
        writeln!(buf, "{}\t{}\t{}", l.entity_id, l.fine, l.source).expect("write to Vec");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Gold labels for alignments whose DBpedia leaf is a schema fine type.
///
/// Alignments whose leaf is only a coarse type or was pruned get no label here.
pub fn build_gold_labels(alignments: &[AlignmentRecord], schema: &TypeSchema) -> Vec<LabelRecord> {
    alignments
        .iter()
        .filter_map(|a| {
            let path = a.dbpedia_path.as_ref()?;
            match schema.classify_path(path) {
                PathClass::Fine(name, _) => Some(LabelRecord::new(&a.entity_id, name, LabelSource::AlignedDbpedia)),
                _ => None,
            }
        })
        .collect()
}

/// What is already known about an aligned entity that still needs a fine label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    NoLabel,
    CoarseOnly(CoarseType),
}

impl TargetKind {
    pub fn label_source(self) -> LabelSource {
        match self {
            TargetKind::NoLabel => LabelSource::WeakWikidata,
            TargetKind::CoarseOnly(_) => LabelSource::WeakSpecialized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakTarget {
    pub entity_id: String,
    pub kind: TargetKind,
}

/// Aligned entities without a gold label: either no DBpedia type at all, or a
/// type above fine granularity.
pub fn weak_targets(alignments: &[AlignmentRecord], schema: &TypeSchema) -> Vec<WeakTarget> {
    alignments
        .iter()
        .filter_map(|a| {
            let kind = match a.dbpedia_path.as_ref().map(|p| schema.classify_path(p)) {
                Some(PathClass::Fine(..)) => return None,
                Some(PathClass::CoarseOnly(c)) => TargetKind::CoarseOnly(c),
                Some(PathClass::Unknown) | None => TargetKind::NoLabel,
            };
            Some(WeakTarget {
                entity_id: a.entity_id.clone(),
                kind,
            })
        })
        .collect()
}

/// Rows: `entity_id \t no_label` or `entity_id \t coarse_only \t <Coarse>`.
pub fn write_targets(path: impl AsRef<Path>, targets: &[WeakTarget]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for t in targets {
        match t.kind {
            TargetKind::NoLabel => writeln!(buf, "{}\tno_label", t.entity_id),
            TargetKind::CoarseOnly(c) => writeln!(buf, "{}\tcoarse_only\t{}", t.entity_id, c),
        }
        .expect("write to Vec");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_targets(text: &str) -> Result<Vec<WeakTarget>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Parse {
            line: i + 1,
            message: "expected `entity_id \\t no_label` or `entity_id \\t coarse_only \\t coarse`".into(),
        };
        let kind = match cols.as_slice() {
            [_, "no_label"] => TargetKind::NoLabel,
            [_, "coarse_only", c] => TargetKind::CoarseOnly(c.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        out.push(WeakTarget {
            entity_id: cols[0].to_string(),
            kind,
        });
    }
    Ok(out)
}

pub fn read_targets(path: impl AsRef<Path>) -> Result<Vec<WeakTarget>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_targets(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergedLabels {
    pub labels: Vec<LabelRecord>,
    pub counts: BTreeMap<LabelSource, usize>,
}

/// One training label per entity; gold labels take precedence over weak ones.
///
/// Output lists gold labels in input order followed by weak labels for
/// entities without a gold label, also in input order. Among several weak
/// labels for one entity the first wins.
pub fn merge_label_sources(gold: &[LabelRecord], weak: &[LabelRecord]) -> Result<MergedLabels> {
    let mut chosen: HashMap<&str, &LabelRecord> = HashMap::new();
    let mut labels = Vec::new();
    for g in gold {
        match chosen.get(g.entity_id.as_str()) {
            Some(prev) if prev.fine != g.fine => {
                return Err(Error::ConflictingGold {
                    entity: g.entity_id.clone(),
                    first: prev.fine.clone(),
                    second: g.fine.clone(),
                })
            }
            Some(_) => {}
            None => {
                chosen.insert(&g.entity_id, g);
                labels.push(g.clone());
            }
        }
    }
    for w in weak {
        if !chosen.contains_key(w.entity_id.as_str()) {
            chosen.insert(&w.entity_id, w);
            labels.push(w.clone());
        }
    }
    let mut counts = BTreeMap::new();
    for l in &labels {
        *counts.entry(l.source).or_insert(0) += 1;
    }
    Ok(MergedLabels { labels, counts })
}

/// Moves `round(fraction * n)` randomly chosen non-weak labels into a test
/// set. Both halves keep input order; weak labels always stay in training.
pub fn holdout_split(labels: &[LabelRecord], fraction: f64, seed: u64) -> Result<(Vec<LabelRecord>, Vec<LabelRecord>)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!("test fraction must lie in [0, 1), got {fraction}")));
    }
    let mut eligible: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].source.is_weak()).collect();
    let n_test = (fraction * eligible.len() as f64).round() as usize;
    eligible.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let test: HashSet<usize> = eligible[..n_test].iter().copied().collect();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, l) in labels.iter().enumerate() {
        if test.contains(&i) { held.push(l.clone()) } else { train.push(l.clone()) }
    }
    Ok((train, held))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageBin {
    /// 1-based popularity rank of the first entity in the bin.
    pub first_rank: usize,
    pub last_rank: usize,
    pub entities: usize,
    pub aligned: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub bin_size: usize,
    pub entities: usize,
    pub aligned: usize,
    pub ratio: f64,
    pub bins: Vec<CoverageBin>,
}

/// Alignment coverage by popularity: entities sorted by descending followers
/// (ties by id) and cut into bins of `bin_size`.
pub fn coverage_by_popularity(
    entities: &[EntityRecord],
    aligned_ids: &HashSet<String>,
    bin_size: usize,
) -> Result<CoverageReport> {
    if bin_size == 0 {
        return Err(Error::InvalidConfig("bin size must be >= 1".into()));
    }
    let mut order: Vec<&EntityRecord> = entities.iter().collect();
    order.sort_by(|a, b| b.followers.cmp(&a.followers).then_with(|| a.id.cmp(&b.id)));
    let bins: Vec<CoverageBin> = order
        .chunks(bin_size)
        .enumerate()
        .map(|(i, chunk)| {
            let aligned = chunk.iter().filter(|e| aligned_ids.contains(&e.id)).count();
            CoverageBin {
                first_rank: i * bin_size + 1,
                last_rank: i * bin_size + chunk.len(),
                entities: chunk.len(),
                aligned,
                ratio: aligned as f64 / chunk.len() as f64,
            }
        })
        .collect();
    let aligned: usize = bins.iter().map(|b| b.aligned).sum();
    Ok(CoverageReport {
        bin_size,
        entities: entities.len(),
        aligned,
        ratio: if entities.is_empty() {
            0.0
        } else {
            aligned as f64 / entities.len() as f64
        },
        bins,
    })
}
