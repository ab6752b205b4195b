//! Interaction ingestion, per-user stratified splits, synthetic long-tail
//! benchmarks, and the on-disk dataset format.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexSet;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LagclError, Result};

/// One raw row of an interaction log.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user_raw: String,
    pub item_raw: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Deduplicated implicit-feedback interactions over dense user/item ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub edges: Vec<(u32, u32)>,
    /// Raw user id at each dense index.
    pub user_map: IndexSet<String>,
    /// Raw item id at each dense index.
    pub item_map: IndexSet<String>,
}

/// Train/validation/test partition of an [`InteractionDataset`].
///
/// `dropped` holds validation/test edges whose item never occurs in
/// training; `train ∪ val ∪ test ∪ dropped` is the full edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<(u32, u32)>,
    pub val: Vec<(u32, u32)>,
    pub test: Vec<(u32, u32)>,
    pub dropped: Vec<(u32, u32)>,
    pub user_map: IndexSet<String>,
    pub item_map: IndexSet<String>,
    pub ratios: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub power_exponent: f64,
    pub num_blocks: usize,
    pub edges_target: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 2000,
            num_items: 1000,
            power_exponent: 2.1,
            num_blocks: 10,
            edges_target: 40_000,
            seed: 0,
        }
    }
}

/// Probability that a synthetic interaction stays inside the user's block.
const IN_BLOCK_PROB: f64 = 0.8;

fn detect_delimiter(line: &str) -> char {
    if line.contains('\t') {
        '\t'
    } else {
        ','
    }
}

/// Parse delimiter-separated `user, item, [rating], [timestamp]` rows.
///
/// The delimiter is taken from the first non-empty line. A first line whose
/// rating column is not numeric is treated as a header.
pub fn parse_interactions<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Interaction>> {
    let mut rows = Vec::new();
    let mut delimiter = None;
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| LagclError::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let delim = *delimiter.get_or_insert_with(|| detect_delimiter(trimmed));
        let fields: Vec<&str> = trimmed.split(delim).map(str::trim).collect();
        let malformed = |reason: String| LagclError::MalformedRow {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        if fields.len() < 2 || fields.len() > 4 {
            return Err(malformed(format!(
                "expected 2 to 4 columns, found {}",
                fields.len()
            )));
        }
        let is_first = std::mem::replace(&mut first, false);
        if is_first && fields.len() >= 3 && fields[2].parse::<f64>().is_err() {
            continue;
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(malformed("empty user or item id".into()));
        }
        let rating = match fields.get(2) {
            Some(s) if !s.is_empty() => s
                .parse::<f64>()
                .map_err(|_| malformed(format!("rating `{s}` is not a number")))?,
            _ => 1.0,
        };
        if !rating.is_finite() {
            return Err(malformed(format!("rating `{rating}` is not finite")));
        }
        let timestamp = match fields.get(3) {
            Some(s) if !s.is_empty() => Some(
                s.parse::<i64>()
                    .map_err(|_| malformed(format!("timestamp `{s}` is not an integer")))?,
            ),
            _ => None,
        };
        rows.push(Interaction {
            user_raw: fields[0].to_string(),
            item_raw: fields[1].to_string(),
            rating,
            timestamp,
        });
    }
    Ok(rows)
}

impl InteractionDataset {
    /// Filter by rating, binarize, and assign dense ids in first-seen order.
    pub fn from_interactions(rows: &[Interaction], min_rating: f64) -> Result<Self> {
        let mut user_map = IndexSet::new();
        let mut item_map = IndexSet::new();
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for row in rows.iter().filter(|r| r.rating >= min_rating) {
            let (u, _) = user_map.insert_full(row.user_raw.clone());
            let (i, _) = item_map.insert_full(row.item_raw.clone());
            let pair = (u as u32, i as u32);
            if seen.insert(pair) {
                edges.push(pair);
            }
        }
        if edges.is_empty() {
            return Err(LagclError::EmptyDataset(format!(
                "no interactions with rating >= {min_rating}"
            )));
        }
        Ok(InteractionDataset {
            num_users: user_map.len(),
            num_items: item_map.len(),
            edges,
            user_map,
            item_map,
        })
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_users];
        for &(u, _) in &self.edges {
            deg[u as usize] += 1;
        }
        deg
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for &(_, i) in &self.edges {
            deg[i as usize] += 1;
        }
        deg
    }
}

pub fn load_interactions(path: impl AsRef<Path>, min_rating: f64) -> Result<InteractionDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| LagclError::io(path, e))?;
    let rows = parse_interactions(BufReader::new(file), path)?;
    InteractionDataset::from_interactions(&rows, min_rating)
}

/// Number of (train, val, test) edges for a user with `n` interactions.
fn stratum_sizes(n: usize, ratios: [f64; 3]) -> (usize, usize, usize) {
    let mut test = (n as f64 * ratios[2]).round() as usize;
    let mut val = (n as f64 * ratios[1]).round() as usize;
    while val + test >= n && (val + test) > 0 {
        if test > 0 && test >= val {
            test -= 1;
        } else {
            val -= 1;
        }
    }
    (n - val - test, val, test)
}

/// Per-user stratified random split. Every user keeps at least one training
/// edge; validation/test edges on items that never appear in training are
/// moved to [`SplitDataset::dropped`].
pub fn split_dataset(ds: &InteractionDataset, ratios: [f64; 3], seed: u64) -> Result<SplitDataset> {
    if ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite())
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(LagclError::InvalidRatios(ratios));
    }
    if ds.edges.is_empty() {
        return Err(LagclError::EmptyDataset("cannot split an empty dataset".into()));
    }
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); ds.num_users];
    for &(u, i) in &ds.edges {
        per_user[u as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, items) in per_user.iter_mut().enumerate() {
        items.sort_unstable();
        items.shuffle(&mut rng);
        let (n_train, n_val, _) = stratum_sizes(items.len(), ratios);
        for (pos, &i) in items.iter().enumerate() {
            let pair = (u as u32, i);
            if pos < n_train {
                train.push(pair);
            } else if pos < n_train + n_val {
                val.push(pair);
            } else {
                test.push(pair);
            }
        }
    }
    let mut in_train = vec![false; ds.num_items];
    for &(_, i) in &train {
        in_train[i as usize] = true;
    }
    let mut dropped = Vec::new();
    let mut keep = |edges: Vec<(u32, u32)>| -> Vec<(u32, u32)> {
        let (kept, gone): (Vec<_>, Vec<_>) =
            edges.into_iter().partition(|&(_, i)| in_train[i as usize]);
        dropped.extend(gone);
        kept
    };
    let val = keep(val);
    let test = keep(test);
    if !dropped.is_empty() {
        log::warn!(
            "{} validation/test interactions reference items absent from training; dropped",
            dropped.len()
        );
    }
    for list in [&mut train, &mut dropped] {
        list.sort_unstable();
    }
    let mut val = val;
    let mut test = test;
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitDataset {
        num_users: ds.num_users,
        num_items: ds.num_items,
        train,
        val,
        test,
        dropped,
        user_map: ds.user_map.clone(),
        item_map: ds.item_map.clone(),
        ratios,
        seed,
    })
}

fn group_by_user(num_users: usize, edges: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); num_users];
    for &(u, i) in edges {
        out[u as usize].push(i);
    }
    for items in &mut out {
        items.sort_unstable();
    }
    out
}

impl SplitDataset {
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn train_by_user(&self) -> Vec<Vec<u32>> {
        group_by_user(self.num_users, &self.train)
    }

    pub fn val_by_user(&self) -> Vec<Vec<u32>> {
        group_by_user(self.num_users, &self.val)
    }

    pub fn test_by_user(&self) -> Vec<Vec<u32>> {
        group_by_user(self.num_users, &self.test)
    }

    pub fn train_user_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_users];
        for &(u, _) in &self.train {
            deg[u as usize] += 1;
        }
        deg
    }
}

/// Synthesize a long-tail dataset with latent preference blocks.
///
/// User degrees follow the rank-size form of a truncated power law
/// (`deg(r) ∝ r^{-1/(exponent-1)}`), scaled so the total matches
/// `edges_target`. Users and items are assigned to blocks; most of a user's
/// interactions fall inside its own block, weighted by item popularity.
/// Items left without any interaction receive one by swapping out a
/// redundant edge; items that still cannot be covered are removed.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<InteractionDataset> {
    let SyntheticConfig {
        num_users,
        num_items,
        power_exponent,
        num_blocks,
        edges_target,
        seed,
    } = *cfg;
    if num_users == 0 || num_items == 0 || num_blocks == 0 {
        return Err(LagclError::Infeasible("counts must be positive".into()));
    }
    if !(power_exponent > 1.0) || !power_exponent.is_finite() {
        return Err(LagclError::Infeasible(format!(
            "power exponent {power_exponent} must exceed 1"
        )));
    }
    if edges_target > num_users.saturating_mul(num_items) {
        return Err(LagclError::Infeasible(format!(
            "edges_target {edges_target} exceeds num_users × num_items = {}",
            num_users * num_items
        )));
    }
    if edges_target < num_users {
        return Err(LagclError::Infeasible(format!(
            "edges_target {edges_target} is below num_users {num_users}; every user needs an edge"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slope = 1.0 / (power_exponent - 1.0);
    let cap = (num_items / 4)
        .max(edges_target.div_ceil(num_users))
        .clamp(1, num_items);
    let degrees_for = |scale: f64| -> Vec<usize> {
        (1..=num_users)
            .map(|r| ((scale * (r as f64).powf(-slope)).round() as usize).clamp(1, cap))
            .collect()
    };
    let (mut lo, mut hi) = (0.0_f64, cap as f64 * (num_users as f64).powf(slope) + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if degrees_for(mid).iter().sum::<usize>() >= edges_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut by_rank = degrees_for(hi);
    let mut excess = by_rank.iter().sum::<usize>() - edges_target;
    while excess > 0 {
        let mut changed = false;
        for d in by_rank.iter_mut() {
            if excess == 0 {
                break;
            }
            if *d > 1 {
                *d -= 1;
                excess -= 1;
                changed = true;
            }
        }
        debug_assert!(changed);
        if !changed {
            break;
        }
    }

    let mut user_perm: Vec<usize> = (0..num_users).collect();
    user_perm.shuffle(&mut rng);
    let mut user_degree = vec![0usize; num_users];
    for (rank, &u) in user_perm.iter().enumerate() {
        user_degree[u] = by_rank[rank];
    }
    let user_block: Vec<usize> = (0..num_users).map(|_| rng.gen_range(0..num_blocks)).collect();
    let item_block: Vec<usize> = (0..num_items).map(|_| rng.gen_range(0..num_blocks)).collect();
    let mut item_perm: Vec<usize> = (0..num_items).collect();
    item_perm.shuffle(&mut rng);
    let mut item_weight = vec![0.0; num_items];
    for (rank, &i) in item_perm.iter().enumerate() {
        item_weight[i] = ((rank + 1) as f64).powf(-0.5 * slope);
    }
    let mut block_items: Vec<Vec<usize>> = vec![Vec::new(); num_blocks];
    for i in 0..num_items {
        block_items[item_block[i]].push(i);
    }
    let block_dist: Vec<Option<WeightedIndex<f64>>> = block_items
        .iter()
        .map(|items| {
            if items.is_empty() {
                None
            } else {
                WeightedIndex::new(items.iter().map(|&i| item_weight[i])).ok()
            }
        })
        .collect();
    let global_dist = WeightedIndex::new(&item_weight).expect("positive weights");
    let mut by_weight: Vec<usize> = (0..num_items).collect();
    by_weight.sort_by(|&a, &b| item_weight[b].total_cmp(&item_weight[a]).then(a.cmp(&b)));

    let mut user_items: Vec<Vec<usize>> = Vec::with_capacity(num_users);
    for u in 0..num_users {
        let want = user_degree[u];
        let mut chosen = HashSet::with_capacity(want);
        let mut picks = Vec::with_capacity(want);
        let mut attempts = 0usize;
        while picks.len() < want && attempts < 50 * want + 100 {
            attempts += 1;
            let item = match &block_dist[user_block[u]] {
                Some(dist) if rng.gen_bool(IN_BLOCK_PROB) => {
                    block_items[user_block[u]][dist.sample(&mut rng)]
                }
                _ => global_dist.sample(&mut rng),
            };
            if chosen.insert(item) {
                picks.push(item);
            }
        }
        for &item in &by_weight {
            if picks.len() >= want {
                break;
            }
            if chosen.insert(item) {
                picks.push(item);
            }
        }
        picks.sort_unstable();
        user_items.push(picks);
    }

    // Cover items that received no interaction.
    let mut item_degree = vec![0usize; num_items];
    for items in &user_items {
        for &i in items {
            item_degree[i] += 1;
        }
    }
    let mut donors: Vec<usize> = (0..num_users).collect();
    donors.sort_by(|&a, &b| user_degree[b].cmp(&user_degree[a]).then(a.cmp(&b)));
    for item in 0..num_items {
        if item_degree[item] > 0 {
            continue;
        }
        let same_block = donors.iter().copied().filter(|&u| user_block[u] == item_block[item]);
        let any_block = donors.iter().copied();
        let mut swapped = false;
        for u in same_block.chain(any_block) {
            if user_items[u].len() < 2 {
                continue;
            }
            if let Some(pos) = user_items[u].iter().position(|&j| item_degree[j] > 1) {
                let old = user_items[u][pos];
                item_degree[old] -= 1;
                user_items[u][pos] = item;
                item_degree[item] += 1;
                user_items[u].sort_unstable();
                swapped = true;
                break;
            }
        }
        if !swapped {
            break;
        }
    }

    let mut remap = vec![u32::MAX; num_items];
    let mut item_map = IndexSet::new();
    for i in 0..num_items {
        if item_degree[i] > 0 {
            remap[i] = item_map.len() as u32;
            item_map.insert(format!("i{i}"));
        }
    }
    if item_map.len() < num_items {
        log::warn!(
            "{} synthetic items could not be covered and were removed",
            num_items - item_map.len()
        );
    }
    let user_map: IndexSet<String> = (0..num_users).map(|u| format!("u{u}")).collect();
    let mut edges = Vec::with_capacity(edges_target);
    for (u, items) in user_items.iter().enumerate() {
        for &i in items {
            edges.push((u as u32, remap[i]));
        }
    }
    edges.sort_unstable();
    Ok(InteractionDataset {
        num_users,
        num_items: item_map.len(),
        edges,
        user_map,
        item_map,
    })
}

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DATASET_MANIFEST: &str = "dataset.json";
const SPLIT_PARTS: [&str; 4] = ["train", "val", "test", "dropped"];

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    format_version: u32,
    num_users: usize,
    num_items: usize,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    split_sizes: indexmap::IndexMap<String, usize>,
    ratios: [f64; 3],
    seed: u64,
}

fn write_pairs(path: &Path, edges: &[(u32, u32)]) -> Result<()> {
    let mut buf = Vec::with_capacity(edges.len() * 8);
    for &(u, i) in edges {
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&i.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| LagclError::io(path, e))
}

fn read_pairs(path: &Path, expected: usize) -> Result<Vec<(u32, u32)>> {
    let bytes = fs::read(path).map_err(|e| LagclError::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(LagclError::Corrupt(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            expected * 8,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            (
                u32::from_le_bytes(c[0..4].try_into().unwrap()),
                u32::from_le_bytes(c[4..8].try_into().unwrap()),
            )
        })
        .collect())
}

impl SplitDataset {
    /// Write the manifest plus one little-endian `u32` pair array per part.
    /// Returns the paths written.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| LagclError::io(dir, e))?;
        let parts = [&self.train, &self.val, &self.test, &self.dropped];
        let manifest = DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            num_users: self.num_users,
            num_items: self.num_items,
            user_ids: self.user_map.iter().cloned().collect(),
            item_ids: self.item_map.iter().cloned().collect(),
            split_sizes: SPLIT_PARTS
                .iter()
                .zip(parts.iter())
                .map(|(name, edges)| (name.to_string(), edges.len()))
                .collect(),
            ratios: self.ratios,
            seed: self.seed,
        };
        let mut written = Vec::new();
        let manifest_path = dir.join(DATASET_MANIFEST);
        let mut f = fs::File::create(&manifest_path).map_err(|e| LagclError::io(&manifest_path, e))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n").map_err(|e| LagclError::io(&manifest_path, e))?;
        written.push(manifest_path);
        for (name, edges) in SPLIT_PARTS.iter().zip(parts) {
            let path = dir.join(format!("{name}.bin"));
            write_pairs(&path, edges)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(DATASET_MANIFEST);
        let text = fs::read_to_string(&manifest_path).map_err(|e| LagclError::io(&manifest_path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        if m.format_version != DATASET_FORMAT_VERSION {
            return Err(LagclError::Version {
                found: m.format_version,
                expected: DATASET_FORMAT_VERSION,
            });
        }
        if m.user_ids.len() != m.num_users || m.item_ids.len() != m.num_items {
            return Err(LagclError::Corrupt("id map sizes disagree with counts".into()));
        }
        let mut parts = Vec::new();
        for name in SPLIT_PARTS {
            let n = *m
                .split_sizes
                .get(name)
                .ok_or_else(|| LagclError::Corrupt(format!("missing split size `{name}`")))?;
            let edges = read_pairs(&dir.join(format!("{name}.bin")), n)?;
            if edges
                .iter()
                .any(|&(u, i)| u as usize >= m.num_users || i as usize >= m.num_items)
            {
                return Err(LagclError::IndexOutOfRange(format!("{name}.bin")));
            }
            parts.push(edges);
        }
        let dropped = parts.pop().unwrap();
        let test = parts.pop().unwrap();
        let val = parts.pop().unwrap();
        let train = parts.pop().unwrap();
        Ok(SplitDataset {
            num_users: m.num_users,
            num_items: m.num_items,
            train,
            val,
            test,
            dropped,
            user_map: m.user_ids.into_iter().collect(),
            item_map: m.item_ids.into_iter().collect(),
            ratios: m.ratios,
            seed: m.seed,
        })
    }

    /// Files that make up a saved dataset, in a fixed order.
    pub fn files(dir: impl AsRef<Path>) -> Vec<PathBuf> {
        let dir = dir.as_ref();
        std::iter::once(dir.join(DATASET_MANIFEST))
            .chain(SPLIT_PARTS.iter().map(|n| dir.join(format!("{n}.bin"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<Vec<Interaction>> {
        parse_interactions(Cursor::new(text), Path::new("mem"))
    }

    #[test]
    fn low_ratings_are_discarded() {
        let rows = parse("u1,i1,3.5\nu1,i2,4.0\nu2,i1,5\n").unwrap();
        let ds = InteractionDataset::from_interactions(&rows, 4.0).unwrap();
        assert_eq!(ds.edges, vec![(0, 0), (1, 1)]);
        assert_eq!(ds.item_map.get_index(0).unwrap(), "i2");
    }

    #[test]
    fn no_filter_keeps_all_rows() {
        let rows = parse("a\tx\t1\nb\ty\t2\nc\tz\t0.5\n").unwrap();
        let ds = InteractionDataset::from_interactions(&rows, 0.0).unwrap();
        assert_eq!(ds.edges.len(), 3);
        assert_eq!((ds.num_users, ds.num_items), (3, 3));
    }

    #[test]
    fn duplicates_collapse() {
        let rows = parse("u1,i1\nu1,i1\n").unwrap();
        let ds = InteractionDataset::from_interactions(&rows, 0.0).unwrap();
        assert_eq!(ds.edges, vec![(0, 0)]);
    }

    #[test]
    fn header_and_timestamp_are_handled() {
        let rows = parse("userId,movieId,rating,timestamp\n1,10,4.5,99\n").unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].timestamp, Some(99));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("u1,i1,4\nu2,i2,abc\n").unwrap_err();
        match err {
            LagclError::MalformedRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("u1\n").is_err());
    }

    #[test]
    fn empty_after_filter_is_an_error() {
        let rows = parse("u1,i1,1\n").unwrap();
        assert!(matches!(
            InteractionDataset::from_interactions(&rows, 4.0),
            Err(LagclError::EmptyDataset(_))
        ));
    }

    fn dataset(users: &[usize]) -> InteractionDataset {
        let mut rows = Vec::new();
        for (u, &n) in users.iter().enumerate() {
            for i in 0..n {
                rows.push(Interaction {
                    user_raw: format!("u{u}"),
                    item_raw: format!("i{i}"),
                    rating: 1.0,
                    timestamp: None,
                });
            }
        }
        InteractionDataset::from_interactions(&rows, 0.0).unwrap()
    }

    #[test]
    fn ten_edges_split_seven_one_two() {
        assert_eq!(stratum_sizes(10, [0.7, 0.1, 0.2]), (7, 1, 2));
        let ds = dataset(&[10, 10]);
        for seed in 0..5 {
            let s = split_dataset(&ds, [0.7, 0.1, 0.2], seed).unwrap();
            let count = |e: &[(u32, u32)]| e.iter().filter(|p| p.0 == 0).count();
            assert_eq!(count(&s.train), 7);
            assert_eq!(count(&s.val) + count(&s.test) + count(&s.dropped), 3);
        }
    }

    #[test]
    fn single_edge_user_stays_in_train() {
        let ds = dataset(&[1, 6]);
        let s = split_dataset(&ds, [0.7, 0.1, 0.2], 3).unwrap();
        assert!(s.train.contains(&(0, 0)));
        assert!(s.val.iter().chain(&s.test).all(|p| p.0 != 0));
    }

    #[test]
    fn small_users_keep_a_training_edge() {
        for n in 1..8 {
            let (tr, v, te) = stratum_sizes(n, [0.7, 0.1, 0.2]);
            assert!(tr >= 1);
            assert_eq!(tr + v + te, n);
        }
    }

    #[test]
    fn split_is_deterministic() {
        let ds = dataset(&[9, 4, 13, 2]);
        let a = split_dataset(&ds, [0.7, 0.1, 0.2], 11).unwrap();
        let b = split_dataset(&ds, [0.7, 0.1, 0.2], 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_ratios_rejected() {
        let ds = dataset(&[3]);
        assert!(split_dataset(&ds, [0.7, 0.1, 0.1], 0).is_err());
        assert!(split_dataset(&ds, [1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn val_test_only_items_are_dropped() {
        // user 0 has items 0..10; item 9 only reachable via user 0.
        let ds = dataset(&[10]);
        let s = split_dataset(&ds, [0.7, 0.1, 0.2], 0).unwrap();
        // With one user every non-train item is unseen in training.
        assert_eq!(s.dropped.len(), 3);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn synthetic_is_deterministic_and_exact() {
        let cfg = SyntheticConfig {
            num_users: 300,
            num_items: 150,
            edges_target: 4000,
            seed: 9,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.edges.len(), 4000);
        assert!(a.user_degrees().iter().all(|&d| d >= 1));
        assert!(a.item_degrees().iter().all(|&d| d >= 1));
    }

    #[test]
    fn synthetic_one_edge_per_user() {
        let cfg = SyntheticConfig {
            num_users: 50,
            num_items: 20,
            edges_target: 50,
            seed: 1,
            ..Default::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert!(ds.user_degrees().iter().all(|&d| d == 1));
    }

    #[test]
    fn synthetic_rejects_infeasible() {
        let cfg = SyntheticConfig {
            num_users: 10,
            num_items: 10,
            edges_target: 101,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(LagclError::Infeasible(_))));
    }

    #[test]
    fn save_and_load_round_trip() {
        let ds = dataset(&[9, 4, 13, 2]);
        let s = split_dataset(&ds, [0.7, 0.1, 0.2], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        assert_eq!(SplitDataset::load(dir.path()).unwrap(), s);
        let train = dir.path().join("train.bin");
        let bytes = fs::read(&train).unwrap();
        fs::write(&train, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(SplitDataset::load(dir.path()), Err(LagclError::Corrupt(_))));
    }
}
