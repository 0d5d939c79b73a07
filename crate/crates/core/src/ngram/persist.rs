//! On-disk model layout:
//!
//! ```text
//! header.json        max order, thresholds, seed, corpus hash, table sizes
//! vocab.tsv          token <TAB> id <TAB> count
//! order_<j>.tsv      id_1 ... id_j <TAB> count      (thresholded counts)
//! context_<j>.tsv    id_1 ... id_{j-1} <TAB> total  (pre-threshold totals)
//! ```
//!
//! All TSV rows are sorted by key so the files are byte-stable.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CountTable, NgramModel, VocabId, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub max_order: usize,
    pub thresholds: Vec<u64>,
    pub seed: Option<u64>,
    pub corpus_hash: String,
    pub vocab_size: usize,
    pub table_sizes: Vec<usize>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn join_ids(ids: &[u32]) -> String {
    ids.iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join("\t")
}

pub fn save(model: &NgramModel, dir: impl AsRef<Path>, seed: Option<u64>) -> Result<ModelHeader> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = ModelHeader {
        max_order: model.max_order(),
        thresholds: model.thresholds().to_vec(),
        seed,
        corpus_hash: model.corpus_hash().to_string(),
        vocab_size: model.vocabulary().len(),
        table_sizes: model.table_sizes(),
    };
    let path = dir.join("header.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &header)?;
    writeln!(w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("vocab.tsv");
    let mut w = create(&path)?;
    let unigrams = model.table(1);
    for (i, token) in model.vocabulary().tokens().iter().enumerate() {
        let count = unigrams.count(&[VocabId(i as u32)]);
        writeln!(w, "{token}\t{i}\t{count}").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    for order in 1..=model.max_order() {
        let table = model.table(order);
        let path = dir.join(format!("order_{order}.tsv"));
        let mut w = create(&path)?;
        for (key, count) in table.sorted_counts() {
            writeln!(w, "{}\t{count}", join_ids(key)).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join(format!("context_{order}.tsv"));
        let mut w = create(&path)?;
        for (key, total) in table.sorted_context_totals() {
            let line = if key.is_empty() {
                total.to_string()
            } else {
                format!("{}\t{total}", join_ids(key))
            };
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(header)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, what: &str) -> Error {
    Error::Format {
        path: PathBuf::from(path),
        message: format!("line {}: {what}", line + 1),
    }
}

/// Parses `width` ids followed by a count.
fn parse_row(path: &Path, n: usize, line: &str, width: usize) -> Result<(Box<[u32]>, u64)> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != width + 1 {
        return Err(malformed(path, n, &format!("expected {} fields", width + 1)));
    }
    let key = fields[..width]
        .iter()
        .map(|f| f.parse::<u32>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| malformed(path, n, "bad id"))?;
    let count = fields[width]
        .parse::<u64>()
        .map_err(|_| malformed(path, n, "bad count"))?;
    Ok((key.into(), count))
}

pub fn load(dir: impl AsRef<Path>) -> Result<(NgramModel, ModelHeader)> {
    let dir = dir.as_ref();
    let path = dir.join("header.json");
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let header: ModelHeader = serde_json::from_slice(&raw)?;
    if header.max_order == 0 || header.thresholds.len() != header.max_order {
        return Err(Error::Format {
            path,
            message: "max_order and thresholds disagree".into(),
        });
    }

    let path = dir.join("vocab.tsv");
    let mut tokens = Vec::new();
    for (n, line) in read_lines(&path)?.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields[1].parse::<usize>().ok() != Some(n) {
            return Err(malformed(&path, n, "expected `token id count` with dense ids"));
        }
        tokens.push(fields[0].to_string());
    }
    let min_unigram = header.thresholds[0].max(1);
    let vocabulary = Vocabulary::from_tokens(tokens, min_unigram)?;

    let mut tables = Vec::with_capacity(header.max_order);
    for order in 1..=header.max_order {
        let path = dir.join(format!("order_{order}.tsv"));
        let mut counts = HashMap::new();
        for (n, line) in read_lines(&path)?.iter().enumerate() {
            let (key, count) = parse_row(&path, n, line, order)?;
            if key.iter().any(|&id| id as usize >= vocabulary.len()) {
                return Err(malformed(&path, n, "id outside the vocabulary"));
            }
            counts.insert(key, count);
        }
        let path = dir.join(format!("context_{order}.tsv"));
        let mut totals = HashMap::new();
        for (n, line) in read_lines(&path)?.iter().enumerate() {
            let (key, total) = parse_row(&path, n, line, order - 1)?;
            totals.insert(key, total);
        }
        tables.push(CountTable::from_parts(order, counts, totals));
    }
    let model = NgramModel::from_parts(
        vocabulary,
        tables,
        header.thresholds.clone(),
        header.corpus_hash.clone(),
    );
    Ok((model, header))
}
