//! A small synthetic social KB written to disk, plus helpers to drive the binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use socialtyper::embedstore::{write_embeddings, EmbeddingSet};

/// (fine leaf, full path, coarse-only path)
pub const TYPES: [(&str, &str, &str); 6] = [
    ("MusicalArtist", "Thing/Agent/Person/Artist/MusicalArtist", "Thing/Agent/Person"),
    ("SoccerPlayer", "Thing/Agent/Person/Athlete/SoccerPlayer", "Thing/Agent/Person"),
    ("Politician", "Thing/Agent/Person/Politician", "Thing/Agent/Person"),
    ("Company", "Thing/Agent/Organisation/Company", "Thing/Agent/Organisation"),
    ("RadioStation", "Thing/Agent/Organisation/Broadcaster/RadioStation", "Thing/Agent/Organisation"),
    ("VideoGame", "Thing/Work/Software/VideoGame", "Thing/Work"),
];

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_socialtyper")
}

/// Runs the binary in `dir` with `SOCIALTYPER_SEED` cleared.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .env_remove("SOCIALTYPER_SEED")
        .args(args)
        .output()
        .expect("spawn socialtyper")
}

pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn cluster_vector(rng: &mut ChaCha8Rng, t: usize, dim: usize, spread: f64, noise: f64) -> Vec<f64> {
    let n = Normal::new(0.0, noise).unwrap();
    (0..dim)
        .map(|d| {
            let centre = if d % TYPES.len() == t { spread } else { 0.0 };
            centre + n.sample(rng)
        })
        .collect()
}

/// Writes the raw inputs of the pipeline into `dir` and returns the file names.
pub fn write_world(dir: &Path, n: usize, seed: u64) -> Vec<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entities = String::new();
    let mut wikidata = String::new();
    let mut dbpedia = String::new();
    let mut counts = std::collections::BTreeMap::<&str, u64>::new();
    let mut network = EmbeddingSet::new(8).unwrap();
    let mut items = EmbeddingSet::new(6).unwrap();
    let mut desc = EmbeddingSet::new(6).unwrap();

    for i in 0..n {
        let id = format!("u{i:05}");
        let t = rng.random_range(0..TYPES.len());
        let followers: u64 = rng.random_range(1_000..5_000_000);
        entities.push_str(&format!(
            "{{\"id\":\"{id}\",\"handle\":\"@acct{i}\",\"followers\":{followers},\"description\":\"about {}\"}}\n",
            TYPES[t].0
        ));
        let roll: f64 = rng.random();
        if roll < 0.8 {
            let qid = format!("Q{}", 1000 + i);
            wikidata.push_str(&format!("{qid}\t{id}\tentry {i}\n"));
            let path = match roll {
                r if r < 0.55 => Some(TYPES[t].1),
                r if r < 0.7 => Some(TYPES[t].2),
                _ => None,
            };
            if let Some(p) = path {
                dbpedia.push_str(&format!("{qid}\t{p}\n"));
                *counts.entry(p).or_default() += 1;
            }
        }
        network.insert(&id, cluster_vector(&mut rng, t, 8, 3.0, 0.6)).unwrap();
        for k in 0..2 {
            items.insert(format!("{id}#{k}"), cluster_vector(&mut rng, t, 6, 2.0, 0.8)).unwrap();
        }
        desc.insert(&id, cluster_vector(&mut rng, t, 6, 3.0, 0.5)).unwrap();
    }
    // accounts absent from the social KB
    wikidata.push_str("Q1\tghost1\tnobody\nQ2\tghost2\t\n");

    let mut paths = String::new();
    for (p, c) in &counts {
        paths.push_str(&format!("{p}\t{c}\n"));
    }

    let files = [
        ("entities.jsonl", entities),
        ("wikidata.tsv", wikidata),
        ("dbpedia.tsv", dbpedia),
        ("paths.txt", paths),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        std::fs::write(dir.join(name), text).unwrap();
        written.push(PathBuf::from(name));
    }
    for (name, set) in [("network.emb", &network), ("items.emb", &items), ("desc.emb", &desc)] {
        write_embeddings(set, dir.join(name)).unwrap();
        written.push(PathBuf::from(name));
    }
    written
}

/// Every subcommand, in pipeline order, with relative paths.
pub const PIPELINE: &[&[&str]] = &[
    &["schema-induce", "--paths", "paths.txt", "--min-count", "2", "--out", "schema.json", "--frequencies", "freq.tsv"],
    &["align", "--entities", "entities.jsonl", "--wikidata", "wikidata.tsv", "--dbpedia", "dbpedia.tsv", "--out", "alignments.jsonl"],
    &["coverage-report", "--entities", "entities.jsonl", "--alignments", "alignments.jsonl", "--bin-size", "50", "--out", "coverage.tsv", "--json", "coverage.json"],
    &["weak-label", "--alignments", "alignments.jsonl", "--schema", "schema.json", "--desc", "desc.emb", "--epochs", "30", "--holdout-fraction", "0.1", "--out", "weak.tsv", "--report", "weak.json"],
    &["dataset-build", "--alignments", "alignments.jsonl", "--schema", "schema.json", "--weak", "weak.tsv", "--out", "train.tsv", "--test-out", "test.tsv", "--test-fraction", "0.2", "--report", "dataset.json"],
    &["aggregate", "--items", "items.emb", "--out", "content.emb"],
    &["fuse", "--part", "network=network.emb", "--part", "content=content.emb", "--out", "fused.emb"],
    &["train", "--labels", "train.tsv", "--emb", "fused.emb", "--alpha", "5", "--beta", "1", "--gamma", "1", "--epochs", "40", "--out", "model.json", "--history", "history.tsv"],
    &["evaluate", "--model", "model.json", "--emb", "fused.emb", "--gold", "test.tsv", "--schema", "schema.json", "--out", "metrics.json", "--text", "metrics.txt"],
    &["predict", "--model", "model.json", "--emb", "fused.emb", "--exclude", "train.tsv", "--out", "predictions.tsv"],
    &["distribution", "--labels", "train.tsv", "--labels", "predictions.tsv", "--schema", "schema.json", "--out", "distribution.txt", "--json", "distribution.json"],
    &["similar", "--query", "u00007", "--first", "content.emb", "--second", "network.emb", "--k", "10", "--entities", "entities.jsonl", "--out", "similar.tsv"],
];

/// Builds the world in `dir` and runs the full pipeline there.
pub fn run_pipeline(dir: &Path, n: usize) {
    write_world(dir, n, 7);
    for args in PIPELINE {
        run_ok(dir, args);
    }
}

/// All regular files in `dir`, sorted by name, with their bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}
