//! Interaction data: parsing, k-core filtering, leave-one-out splits and
//! batching.
//!
//! Input files hold one user per line, `user item item ...`, items in time
//! order. Internal item ids are dense in `1..|V|` in first-seen order; 0 is
//! the padding id.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PADDING_ID;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Raw user ids, one per sequence.
    pub users: Vec<String>,
    /// Internal item ids per user, chronological.
    pub sequences: Vec<Vec<usize>>,
    /// Raw id of internal item `i` at index `i - 1`.
    items: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub avg_length: f64,
    pub sparsity: f64,
}

impl Dataset {
    /// Builds a dataset from raw `(user, items)` rows, assigning item ids in
    /// first-seen order.
    pub fn from_raw<U, I, S>(rows: impl IntoIterator<Item = (U, I)>) -> Self
    where
        U: Into<String>,
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ds = Dataset {
            users: Vec::new(),
            sequences: Vec::new(),
            items: Vec::new(),
            index: HashMap::new(),
        };
        for (user, seq) in rows {
            let ids = seq.into_iter().map(|raw| ds.intern(raw.as_ref())).collect();
            ds.users.push(user.into());
            ds.sequences.push(ids);
        }
        ds
    }

    fn intern(&mut self, raw: &str) -> usize {
        if let Some(&id) = self.index.get(raw) {
            return id;
        }
        self.items.push(raw.to_string());
        let id = self.items.len();
        self.index.insert(raw.to_string(), id);
        id
    }

    /// Item count plus the padding id.
    pub fn vocab_size(&self) -> usize {
        self.items.len() + 1
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn raw_item(&self, id: usize) -> Option<&str> {
        id.checked_sub(1).and_then(|i| self.items.get(i)).map(String::as_str)
    }

    pub fn item_id(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw_sequence(&self, user: usize) -> Vec<&str> {
        self.sequences[user]
            .iter()
            .map(|&i| self.items[i - 1].as_str())
            .collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let interactions: usize = self.sequences.iter().map(Vec::len).sum();
        let (u, v) = (self.num_users(), self.num_items());
        DatasetStats {
            users: u,
            items: v,
            interactions,
            avg_length: if u == 0 { 0.0 } else { interactions as f64 / u as f64 },
            sparsity: if u * v == 0 {
                1.0
            } else {
                1.0 - interactions as f64 / (u as f64 * v as f64)
            },
        }
    }

    /// Serializes to the input text format (raw ids).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for u in 0..self.num_users() {
            out.push_str(&self.users[u]);
            for raw in self.raw_sequence(u) {
                out.push(' ');
                out.push_str(raw);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the text format. Blank lines and `#` lines are skipped.
pub fn parse_sequences(text: &str, origin: &str) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let user = parts.next().unwrap_or_default();
        let items: Vec<&str> = parts.collect();
        let err = |msg: String| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg,
        };
        if items.is_empty() {
            return Err(err(format!("user {user} has no items")));
        }
        if !seen.insert(user) {
            return Err(err(format!("user {user} appears twice")));
        }
        rows.push((user.to_string(), items));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{origin}: no interactions")));
    }
    Ok(Dataset::from_raw(rows))
}

pub fn load_sequences(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequences(&text, &path.display().to_string())
}

/// Repeatedly drops users with fewer than `min_core` interactions and items
/// with fewer than `min_core` occurrences until nothing changes, then
/// renumbers items densely.
pub fn five_core_filter(ds: &Dataset, min_core: usize) -> Result<Dataset> {
    let mut rows: Vec<(usize, Vec<usize>)> = ds.sequences.iter().cloned().enumerate().collect();
    loop {
        let mut counts = vec![0usize; ds.vocab_size()];
        for (_, s) in &rows {
            for &i in s {
                counts[i] += 1;
            }
        }
        let before: usize = rows.iter().map(|(_, s)| s.len()).sum::<usize>() + rows.len();
        rows = rows
            .into_iter()
            .map(|(u, s)| (u, s.into_iter().filter(|&i| counts[i] >= min_core).collect::<Vec<_>>()))
            .filter(|(_, s)| s.len() >= min_core)
            .collect();
        let after: usize = rows.iter().map(|(_, s)| s.len()).sum::<usize>() + rows.len();
        if after == before {
            break;
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("no users survive {min_core}-core filtering")));
    }
    Ok(Dataset::from_raw(rows.into_iter().map(|(u, s)| {
        let raw: Vec<&str> = s.iter().map(|&i| ds.items[i - 1].as_str()).collect();
        (ds.users[u].clone(), raw)
    })))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidInput(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    /// Left-padded, length `N`.
    pub input: Vec<usize>,
    pub target: usize,
    pub user: usize,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrainMode {
    /// Every prefix predicts its next item.
    #[default]
    Prefixes,
    /// Only the longest training prefix per user.
    LastOnly,
}

#[derive(Clone, Debug, Default)]
pub struct Splits {
    pub train: Vec<Instance>,
    pub valid: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[Instance] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

/// Keeps the last `n` items and left-pads with zeros.
pub fn pad_left(items: &[usize], n: usize) -> Vec<usize> {
    let tail = &items[items.len().saturating_sub(n)..];
    let mut out = vec![PADDING_ID; n - tail.len()];
    out.extend_from_slice(tail);
    out
}

/// Leave-one-out splits: last item is the test target, second-to-last the
/// validation target, earlier positions the training targets.
pub fn make_splits(ds: &Dataset, n: usize, mode: TrainMode) -> Result<Splits> {
    if n == 0 {
        return Err(Error::InvalidInput("sequence length must be positive".into()));
    }
    let mut out = Splits::default();
    for (user, seq) in ds.sequences.iter().enumerate() {
        let len = seq.len();
        if len < 3 {
            return Err(Error::Data(format!(
                "user {} has {len} interactions, at least 3 are needed for leave-one-out",
                ds.users[user]
            )));
        }
        let inst = |t: usize, split| Instance {
            input: pad_left(&seq[..t], n),
            target: seq[t],
            user,
            split,
        };
        out.test.push(inst(len - 1, Split::Test));
        out.valid.push(inst(len - 2, Split::Valid));
        let ts = match mode {
            TrainMode::Prefixes => 1..len - 2,
            TrainMode::LastOnly => (len - 3).max(1)..len - 2,
        };
        out.train.extend(ts.map(|t| inst(t, Split::Train)));
    }
    Ok(out)
}

/// Instance order for one epoch: identity without shuffling, otherwise a
/// permutation determined by `(seed, epoch)`.
pub fn epoch_order(len: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::indexed(seed, epoch as u64, 0));
        order.shuffle(&mut rng);
    }
    order
}

pub type Batch<'a> = Vec<&'a Instance>;

/// Batches of `batch_size` (last one possibly smaller) in epoch order.
pub fn batch_iter(
    instances: &[Instance],
    batch_size: usize,
    seed: u64,
    epoch: usize,
    shuffle: bool,
) -> impl Iterator<Item = Batch<'_>> {
    let order = epoch_order(instances.len(), seed, epoch, shuffle);
    let size = batch_size.max(1);
    let batches: Vec<Batch<'_>> = order
        .chunks(size)
        .map(|c| c.iter().map(|&i| &instances[i]).collect())
        .collect();
    batches.into_iter()
}

/// Audit dump of instances: a `#split:` header, then `user item ... target`
/// in raw ids with padding dropped.
pub fn split_to_text(ds: &Dataset, split: Split, instances: &[Instance]) -> String {
    let mut out = format!("#split: {}\n", split.as_str());
    for inst in instances {
        out.push_str(&ds.users[inst.user]);
        for &i in inst.input.iter().filter(|&&i| i != PADDING_ID) {
            let _ = write!(out, " {}", ds.items[i - 1]);
        }
        let _ = writeln!(out, " {}", ds.items[inst.target - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[(&str, &[&str])]) -> Dataset {
        Dataset::from_raw(rows.iter().map(|(u, s)| (*u, s.iter().copied())))
    }

    #[test]
    fn mapping_contract() {
        let d = parse_sequences("u1 a b a\n", "mem").unwrap();
        assert_eq!(d.sequences, vec![vec![1, 2, 1]]);
        assert_eq!(d.vocab_size(), 3);
        assert_eq!(d.raw_item(2), Some("b"));
        assert_eq!(d.item_id("a"), Some(1));
    }

    #[test]
    fn blank_lines_and_trailing_whitespace() {
        let d = parse_sequences("\nu1 a b  \n\n  u2 b c\t\n", "mem").unwrap();
        assert_eq!(d.num_users(), 2);
        assert_eq!(d.sequences[1], vec![2, 3]);
    }

    #[test]
    fn malformed_and_empty_inputs() {
        match parse_sequences("u1 a\nu2\n", "f.txt") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(path, "f.txt");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_sequences("\n\n", "f"), Err(Error::Data(_))));
        assert!(parse_sequences("u a\nu b\n", "f").is_err());
    }

    #[test]
    fn splits_by_hand() {
        let d = Dataset {
            users: vec!["u".into()],
            sequences: vec![vec![3, 7, 9, 2, 5]],
            items: (1..=9).map(|i| i.to_string()).collect(),
            index: HashMap::new(),
        };
        let s = make_splits(&d, 4, TrainMode::Prefixes).unwrap();
        assert_eq!(s.test[0].input, vec![3, 7, 9, 2]);
        assert_eq!(s.test[0].target, 5);
        assert_eq!(s.valid[0].input, vec![0, 3, 7, 9]);
        assert_eq!(s.valid[0].target, 2);
        let train: Vec<_> = s.train.iter().map(|i| (i.input.clone(), i.target)).collect();
        assert_eq!(train, vec![(vec![0, 0, 0, 3], 7), (vec![0, 0, 3, 7], 9)]);

        let last = make_splits(&d, 4, TrainMode::LastOnly).unwrap();
        assert_eq!(last.train.len(), 1);
        assert_eq!(last.train[0].target, 9);
    }

    #[test]
    fn truncation_drops_earliest() {
        assert_eq!(pad_left(&[1, 2, 3, 4, 5, 6], 4), vec![3, 4, 5, 6]);
        assert_eq!(pad_left(&[1], 3), vec![0, 0, 1]);
    }

    #[test]
    fn five_core_keeps_dense_data() {
        let items = ["a", "b", "c", "d", "e"];
        let rows: Vec<(String, &[&str])> = (0..5).map(|u| (format!("u{u}"), &items[..])).collect();
        let d = Dataset::from_raw(rows.iter().map(|(u, s)| (u.clone(), s.iter().copied())));
        assert_eq!(five_core_filter(&d, 5).unwrap(), d);
    }

    #[test]
    fn five_core_drops_short_user() {
        let items = ["a", "b", "c", "d", "e"];
        let mut rows: Vec<(String, Vec<&str>)> = (0..5).map(|u| (format!("u{u}"), items.to_vec())).collect();
        rows.push(("short".into(), vec!["a", "b", "c"]));
        let d = Dataset::from_raw(rows);
        let f = five_core_filter(&d, 5).unwrap();
        assert_eq!(f.num_users(), 5);
        assert!(!f.users.contains(&"short".to_string()));
        assert!(matches!(five_core_filter(&ds(&[("u", &["a"])]), 5), Err(Error::Data(_))));
    }

    #[test]
    fn batches_and_order() {
        let d = ds(&[("u", &["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l", "m"])]);
        let s = make_splits(&d, 5, TrainMode::Prefixes).unwrap();
        assert_eq!(s.train.len(), 10);
        let sizes: Vec<usize> = batch_iter(&s.train, 4, 1, 0, true).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let plain: Vec<usize> = batch_iter(&s.train, 4, 1, 0, false).flatten().map(|i| i.target).collect();
        assert_eq!(plain, s.train.iter().map(|i| i.target).collect::<Vec<_>>());
        assert_eq!(epoch_order(50, 9, 3, true), epoch_order(50, 9, 3, true));
        assert_ne!(epoch_order(50, 9, 3, true), epoch_order(50, 9, 4, true));
    }

    #[test]
    fn split_dump_has_header() {
        let d = ds(&[("u", &["a", "b", "c", "d"])]);
        let s = make_splits(&d, 3, TrainMode::Prefixes).unwrap();
        assert_eq!(split_to_text(&d, Split::Test, &s.test), "#split: test\nu a b c d\n");
    }
}
