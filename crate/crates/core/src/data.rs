//! Loading rating files and signed edge lists, and random train/test splits.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::sparse::ObservedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Ratings,
    /// ±1 labels.
    Signed,
}

/// Field separator of a rating file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `user<TAB>item<TAB>rating[<TAB>timestamp]`
    Tab,
    /// `user::item::rating[::timestamp]`
    DoubleColon,
}

impl RatingFormat {
    fn separator(self) -> &'static str {
        match self {
            RatingFormat::Tab => "\t",
            RatingFormat::DoubleColon => "::",
        }
    }
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml-tab" | "tab" => Ok(RatingFormat::Tab),
            "ml-colon" | "colon" => Ok(RatingFormat::DoubleColon),
            other => Err(Error::Config(format!("unknown rating format {other:?}"))),
        }
    }
}

/// Bijection between raw ids and dense indices, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense index of `raw`, allocating the next one if unseen.
    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&i) = self.index.get(raw) {
            return i;
        }
        let i = self.raw.len();
        self.raw.push(raw.to_owned());
        self.index.insert(raw.to_owned(), i);
        i
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, i: usize) -> &str {
        &self.raw[i]
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

impl FromIterator<String> for IdMap {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut map = IdMap::new();
        for id in iter {
            map.intern(&id);
        }
        map
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub observed: ObservedMatrix,
    pub kind: DataKind,
    pub row_ids: IdMap,
    pub col_ids: IdMap,
    /// Source path and any filtering applied.
    pub provenance: String,
}

impl Dataset {
    /// Raw `(row id, col id, value)` triples in storage order.
    pub fn raw_entries(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.observed
            .iter()
            .map(|(i, j, x)| (self.row_ids.raw(i), self.col_ids.raw(j), x))
    }

    /// Re-expresses the entries in the index space of `rows × cols`. Ids
    /// unknown to either map are rejected.
    pub fn remap(&self, rows: &IdMap, cols: &IdMap) -> Result<ObservedMatrix> {
        let mut entries = Vec::with_capacity(self.observed.nnz());
        for (r, c, x) in self.raw_entries() {
            let i = rows.get(r).ok_or_else(|| Error::ColdId {
                axis: "row",
                id: r.to_owned(),
            })?;
            let j = cols.get(c).ok_or_else(|| Error::ColdId {
                axis: "column",
                id: c.to_owned(),
            })?;
            entries.push((i, j, x));
        }
        ObservedMatrix::new(rows.len().max(1), cols.len().max(1), entries)
    }

    /// Same ids and kind, different entries (e.g. one side of a split).
    pub fn with_observed(&self, observed: ObservedMatrix, note: &str) -> Dataset {
        Dataset {
            observed,
            kind: self.kind,
            row_ids: self.row_ids.clone(),
            col_ids: self.col_ids.clone(),
            provenance: format!("{} [{note}]", self.provenance),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// MovieLens star range.
pub const DEFAULT_RATING_RANGE: (f64, f64) = (1.0, 5.0);

/// Reads a rating file with ratings in [`DEFAULT_RATING_RANGE`].
pub fn load_ratings(path: &Path, format: RatingFormat) -> Result<Dataset> {
    load_ratings_in_range(path, format, DEFAULT_RATING_RANGE)
}

pub fn load_ratings_in_range(
    path: &Path,
    format: RatingFormat,
    range: (f64, f64),
) -> Result<Dataset> {
    read_ratings(open(path)?, path, format, range)
}

pub fn read_ratings<R: BufRead>(
    input: R,
    path: &Path,
    format: RatingFormat,
    (lo, hi): (f64, f64),
) -> Result<Dataset> {
    let sep = format.separator();
    let mut rows = IdMap::new();
    let mut cols = IdMap::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut entries = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 3 or 4 fields, found {}", fields.len()),
            ));
        }
        if fields[..2].iter().any(|f| f.is_empty()) {
            return Err(parse_err(path, lineno, "empty id"));
        }
        let rating: f64 = fields[2]
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("rating {:?}: {e}", fields[2])))?;
        if !(rating >= lo && rating <= hi) {
            return Err(parse_err(
                path,
                lineno,
                format!("rating {rating} outside [{lo}, {hi}]"),
            ));
        }
        let i = rows.intern(fields[0]);
        let j = cols.intern(fields[1]);
        match seen.entry((i, j)) {
            Entry::Occupied(first) => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!(
                        "duplicate rating for ({}, {}), first seen on line {}",
                        fields[0],
                        fields[1],
                        first.get()
                    ),
                ))
            }
            Entry::Vacant(slot) => {
                slot.insert(lineno);
            }
        }
        entries.push((i, j, rating));
    }
    if entries.is_empty() {
        return Err(Error::Data(format!("{}: no ratings", path.display())));
    }
    Ok(Dataset {
        observed: ObservedMatrix::new(rows.len(), cols.len(), entries)?,
        kind: DataKind::Ratings,
        row_ids: rows,
        col_ids: cols,
        provenance: path.display().to_string(),
    })
}

/// Reads a signed edge list `src dst sign`, keeping only users with at least
/// two incident edges (repeated until no more users drop out).
///
/// With `zero_one`, signs are given as `0`/`1` and mapped to `−1`/`+1`.
pub fn load_signed_edges(path: &Path, zero_one: bool) -> Result<Dataset> {
    read_signed_edges(open(path)?, path, zero_one)
}

pub fn read_signed_edges<R: BufRead>(input: R, path: &Path, zero_one: bool) -> Result<Dataset> {
    let mut users = IdMap::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let raw: i64 = fields[2]
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("sign {:?}: {e}", fields[2])))?;
        let sign = match (zero_one, raw) {
            (false, 1) | (true, 1) => 1.0,
            (false, -1) | (true, 0) => -1.0,
            _ => {
                let expect = if zero_one { "0 or 1" } else { "-1 or +1" };
                return Err(parse_err(
                    path,
                    lineno,
                    format!("sign {raw} is not {expect}"),
                ));
            }
        };
        let src = users.intern(fields[0]);
        let dst = users.intern(fields[1]);
        if let Some(first) = seen.insert((src, dst), lineno) {
            return Err(parse_err(
                path,
                lineno,
                format!(
                    "duplicate edge ({}, {}), first seen on line {first}",
                    fields[0], fields[1]
                ),
            ));
        }
        edges.push((src, dst, sign));
    }
    if edges.is_empty() {
        return Err(Error::Data(format!("{}: no edges", path.display())));
    }

    let total = edges.len();
    let mut removed_users = 0;
    let mut alive = vec![true; users.len()];
    loop {
        let mut degree = vec![0usize; users.len()];
        for &(s, d, _) in &edges {
            degree[s] += 1;
            degree[d] += 1;
        }
        let drop: Vec<usize> = (0..users.len())
            .filter(|&u| alive[u] && degree[u] < 2)
            .collect();
        if drop.is_empty() {
            break;
        }
        for &u in &drop {
            alive[u] = false;
        }
        removed_users += drop.len();
        edges.retain(|&(s, d, _)| alive[s] && alive[d]);
    }
    if edges.is_empty() {
        return Err(Error::Data(format!(
            "{}: no edges left after removing users with fewer than two observations",
            path.display()
        )));
    }

    let mut rows = IdMap::new();
    let mut cols = IdMap::new();
    let entries = edges
        .iter()
        .map(|&(s, d, x)| (rows.intern(users.raw(s)), cols.intern(users.raw(d)), x))
        .collect();
    Ok(Dataset {
        observed: ObservedMatrix::new(rows.len(), cols.len(), entries)?,
        kind: DataKind::Signed,
        row_ids: rows,
        col_ids: cols,
        provenance: format!(
            "{} (degree >= 2 filter: removed {removed_users} users, {} of {total} edges)",
            path.display(),
            total - edges.len()
        ),
    })
}

/// Writes the entries back in a form the matching loader reads.
pub fn write_entries<W: Write>(
    out: &mut W,
    d: &Dataset,
    observed: &ObservedMatrix,
    format: FileFormat,
) -> Result<()> {
    for (i, j, x) in observed.iter() {
        let (r, c) = (d.row_ids.raw(i), d.col_ids.raw(j));
        match format {
            FileFormat::Ratings(f) => writeln!(out, "{r}{sep}{c}{sep}{x}", sep = f.separator())?,
            FileFormat::Signed => writeln!(out, "{r}\t{c}\t{}", x as i64)?,
        }
    }
    out.flush()?;
    Ok(())
}

/// Any supported input file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Ratings(RatingFormat),
    Signed,
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(FileFormat::Signed),
            other => other.parse().map(FileFormat::Ratings),
        }
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileFormat::Ratings(RatingFormat::Tab) => "ml-tab",
            FileFormat::Ratings(RatingFormat::DoubleColon) => "ml-colon",
            FileFormat::Signed => "signed",
        })
    }
}

/// Loads `path` in `format`; `zero_one` applies to signed files only.
pub fn load(path: &Path, format: FileFormat, zero_one: bool) -> Result<Dataset> {
    match format {
        FileFormat::Ratings(f) => load_ratings(path, f),
        FileFormat::Signed => load_signed_edges(path, zero_one),
    }
}

fn shuffled(n: usize, seed: u64, stream: Stream) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, stream, 0));
    order
}

/// Random partition into `round(train_fraction · N)` training entries
/// (at least one on each side) and the rest.
pub fn split(
    d: &ObservedMatrix,
    train_fraction: f64,
    seed: u64,
) -> Result<(ObservedMatrix, ObservedMatrix)> {
    let n = d.nnz();
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Data(format!("cannot split {n} entries")));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let order = shuffled(n, seed, Stream::Split);
    let (train, test) = order.split_at(n_train);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((d.select(&train)?, d.select(&test)?))
}

/// `k` (train, test) pairs; after a seeded shuffle, position `p` goes to
/// fold `p mod k`.
pub fn kfold(
    d: &ObservedMatrix,
    k: usize,
    seed: u64,
) -> Result<Vec<(ObservedMatrix, ObservedMatrix)>> {
    let n = d.nnz();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Data(format!("{k} folds for {n} entries")));
    }
    let order = shuffled(n, seed, Stream::Folds);
    let mut fold_of = vec![0usize; n];
    for (p, &e) in order.iter().enumerate() {
        fold_of[e] = p % k;
    }
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&e| fold_of[e] == f);
            Ok((d.select(&train)?, d.select(&test)?))
        })
        .collect()
}
