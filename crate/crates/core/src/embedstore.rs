//! Embedding sets, the EMB1 file format, mean aggregation and fusion.
//!
//! EMB1 layout (all integers and floats little-endian):
//!
//! ```text
//! b"EMB1" | dim: u32 | count: u32 | count × (id_len: u16 | id: [u8; id_len] | dim × f32)
//! ```
//!
//! Vectors are held as `f64` in memory and rounded to `f32` on write.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";

/// Id → vector store with a uniform dimension. Iteration follows insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingSet {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    /// Builds a set from row-major data without copying it.
    pub fn from_flat(dim: usize, ids: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::InvalidConfig(format!(
                "{} values do not form {} vectors of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
            if !data[i * dim..(i + 1) * dim].iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(id.clone()));
            }
        }
        Ok(EmbeddingSet { dim, ids, index, data })
    }

    pub fn from_pairs<I, S>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut set = EmbeddingSet::new(dim)?;
        for (id, v) in pairs {
            set.insert(id, v)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                id,
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().zip(self.data.chunks_exact(self.dim)).map(|(id, v)| (id.as_str(), v))
    }

    /// Serializes to EMB1 bytes.
    pub fn to_emb1(&self) -> Result<Vec<u8>> {
        let count = u32::try_from(self.len())
            .map_err(|_| Error::InvalidConfig("too many vectors for EMB1".into()))?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::InvalidConfig("dimension too large for EMB1".into()))?;
        let mut buf = Vec::with_capacity(12 + self.len() * (2 + 16 + 4 * self.dim));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&dim.to_le_bytes());
        buf.extend_from_slice(&count.to_le_bytes());
        for (id, v) in self.iter() {
            let len = u16::try_from(id.len())
                .map_err(|_| Error::InvalidConfig(format!("id `{id}` longer than 65535 bytes")))?;
            buf.extend_from_slice(&len.to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            for &x in v {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Ok(buf)
    }

    /// Parses EMB1 bytes. Errors carry the byte offset where decoding failed.
    pub fn from_emb1(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected EMB1".into(),
            });
        }
        let dim = cur.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format {
                offset: 4,
                message: "dimension must be positive".into(),
            });
        }
        let count = cur.u32()? as usize;
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        let mut data = Vec::with_capacity(count.min(1 << 20) * dim);
        let mut seen = HashSet::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let start = cur.pos;
            let len = cur.u16()? as usize;
            let id = std::str::from_utf8(cur.take(len)?).map_err(|_| Error::Format {
                offset: start as u64 + 2,
                message: "id is not valid UTF-8".into(),
            })?;
            if !seen.insert(id) {
                return Err(Error::Format {
                    offset: start as u64,
                    message: format!("duplicate id `{id}`"),
                });
            }
            let values_at = cur.pos;
            let raw = cur.take(4 * dim)?;
            for chunk in raw.chunks_exact(4) {
                let x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                if !x.is_finite() {
                    return Err(Error::Format {
                        offset: values_at as u64,
                        message: format!("non-finite value in `{id}`"),
                    });
                }
                data.push(x as f64);
            }
            ids.push(id.to_string());
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format {
                offset: cur.pos as u64,
                message: format!("{} trailing bytes after {count} records", bytes.len() - cur.pos),
            });
        }
        EmbeddingSet::from_flat(dim, ids, data)
    }

    /// Tab-separated text: `id \t v1 v2 ...`.
    pub fn to_etsv(&self) -> String {
        let mut out = String::new();
        for (id, v) in self.iter() {
            out.push_str(id);
            out.push('\t');
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_etsv(text: &str) -> Result<Self> {
        let mut set: Option<EmbeddingSet> = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (id, values) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `id \\t values`".into(),
            })?;
            let v = values
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let set = match &mut set {
                Some(s) => s,
                None => set.insert(EmbeddingSet::new(v.len()).map_err(|_| Error::Parse {
                    line: i + 1,
                    message: "empty vector".into(),
                })?),
            };
            set.insert(id, v).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        set.ok_or_else(|| Error::EmptyInput("no vectors in text embedding file".into()))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated: needed {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn is_text_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "etsv")
}

/// Reads an embedding file: `.etsv` as text, anything else as EMB1.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    if is_text_path(path) {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return EmbeddingSet::from_etsv(&text);
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingSet::from_emb1(&bytes)
}

/// Writes an embedding file: `.etsv` as text, anything else as EMB1.
pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_text_path(path) {
        set.to_etsv().into_bytes()
    } else {
        set.to_emb1()?
    };
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Component-wise mean of each entity's vectors. Entities appear in order of
/// first occurrence.
pub fn aggregate_mean<S: AsRef<str>, V: AsRef<[f64]>>(per_item: &[(S, V)]) -> Result<EmbeddingSet> {
    let Some((_, first)) = per_item.first() else {
        return Err(Error::EmptyInput("no vectors to aggregate".into()));
    };
    let dim = first.as_ref().len();
    let mut order: Vec<&str> = Vec::new();
    let mut sums: HashMap<&str, (Vec<f64>, usize)> = HashMap::new();
    for (id, v) in per_item {
        let (id, v) = (id.as_ref(), v.as_ref());
        if v.len() != dim {
            return Err(Error::DimMismatch {
                id: id.to_string(),
                expected: dim,
                actual: v.len(),
            });
        }
        let entry = sums.entry(id).or_insert_with(|| {
            order.push(id);
            (vec![0.0; dim], 0)
        });
        for (s, x) in entry.0.iter_mut().zip(v) {
            *s += x;
        }
        entry.1 += 1;
    }
    let mut out = EmbeddingSet::new(dim)?;
    for id in order {
        let (sum, n) = sums.remove(id).expect("entity recorded");
        out.insert(id, sum.into_iter().map(|s| s / n as f64).collect())?;
    }
    Ok(out)
}

/// Groups per-item ids of the form `entity#index` by entity and averages them.
pub fn aggregate_items(items: &EmbeddingSet) -> Result<EmbeddingSet> {
    let pairs: Vec<(&str, &[f64])> = items
        .iter()
        .map(|(id, v)| (id.rsplit_once('#').map_or(id, |(entity, _)| entity), v))
        .collect();
    aggregate_mean(&pairs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub length: usize,
}

/// Named, contiguous coordinate ranges of a fused vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct SegmentMap {
    segments: Vec<Segment>,
}

impl SegmentMap {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let mut next = 0;
        let mut names = HashSet::new();
        for s in &segments {
            if !names.insert(s.name.as_str()) {
                return Err(Error::DuplicateSegment(s.name.clone()));
            }
            if s.length == 0 {
                return Err(Error::InvalidSegments(format!("segment `{}` is empty", s.name)));
            }
            if s.offset != next {
                return Err(Error::InvalidSegments(format!(
                    "segment `{}` starts at {} instead of {next}",
                    s.name, s.offset
                )));
            }
            next += s.length;
        }
        Ok(SegmentMap { segments })
    }

    /// Builds a map from `(name, length)` pairs laid out back to back.
    pub fn from_lengths<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut offset = 0;
        let segments = parts
            .into_iter()
            .map(|(name, length)| {
                let s = Segment {
                    name: name.into(),
                    offset,
                    length,
                };
                offset += length;
                s
            })
            .collect();
        SegmentMap::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.length)
    }

    pub fn slice<'a>(&self, v: &'a [f64], name: &str) -> Option<&'a [f64]> {
        let s = self.get(name)?;
        v.get(s.offset..s.offset + s.length)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl TryFrom<Vec<Segment>> for SegmentMap {
    type Error = Error;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        SegmentMap::new(segments)
    }
}

impl From<SegmentMap> for Vec<Segment> {
    fn from(m: SegmentMap) -> Self {
        m.segments
    }
}

/// Concatenates the parts' vectors for ids present in every part.
///
/// Ids keep the order of the first part. Entities missing from any part are dropped.
pub fn fuse<S: AsRef<str>>(parts: &[(S, &EmbeddingSet)]) -> Result<(EmbeddingSet, SegmentMap)> {
    let Some((_, first)) = parts.first() else {
        return Err(Error::EmptyInput("fuse needs at least one part".into()));
    };
    let segments = SegmentMap::from_lengths(parts.iter().map(|(name, set)| (name.as_ref(), set.dim())))?;
    let dim = segments.total_len();
    let ids: Vec<String> = first
        .ids()
        .iter()
        .filter(|id| parts[1..].iter().all(|(_, s)| s.contains(id)))
        .cloned()
        .collect();
    if ids.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let mut data = Vec::with_capacity(ids.len() * dim);
    for id in &ids {
        for (_, set) in parts {
            data.extend_from_slice(set.get(id).expect("id in intersection"));
        }
    }
    Ok((EmbeddingSet::from_flat(dim, ids, data)?, segments))
}
