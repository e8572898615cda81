//! Rating datasets: ingestion, train/test splitting and the two analytic
//! toy fixtures used throughout the tests.

mod parse;
mod split;
mod toys;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::{parse_ratings, Format};
pub use split::{split_ratings, write_split_manifest, Split};
pub use toys::{ladder_toy_26, square_toy, ToyFixture, LADDER_OBSERVED};

/// Legal rating range `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::InvalidArgument(format!(
                "rating bounds must satisfy low < high, got [{low}, {high}]"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, rating: f64) -> bool {
        rating >= self.low && rating <= self.high
    }

    pub fn clamp(&self, rating: f64) -> f64 {
        rating.clamp(self.low, self.high)
    }
}

/// One observed rating with its original identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Dense bidirectional mapping between opaque string ids and indices,
/// assigned in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.lookup.get(id) {
            return idx;
        }
        let idx = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl FromIterator<String> for IdIndex {
    fn from_iter<T: IntoIterator<Item = String>>(iter: T) -> Self {
        let mut index = IdIndex::default();
        for id in iter {
            index.get_or_insert(&id);
        }
        index
    }
}

/// Sparse user x item matrix of observed ratings.
///
/// Rows are stored per user and sorted by item index, so iteration order is
/// fully determined by the input file.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    users: IdIndex,
    items: IdIndex,
    rows: Vec<Vec<(usize, f64)>>,
    bounds: Bounds,
    nnz: usize,
}

impl RatingMatrix {
    pub fn empty(bounds: Bounds) -> Self {
        Self::with_index(IdIndex::default(), IdIndex::default(), bounds)
    }

    /// Empty matrix sharing an existing id index (used for train sides of splits).
    pub fn with_index(users: IdIndex, items: IdIndex, bounds: Bounds) -> Self {
        let rows = vec![Vec::new(); users.len()];
        Self {
            users,
            items,
            rows,
            bounds,
            nnz: 0,
        }
    }

    /// Inserts a rating by index. Rows are re-sorted lazily by [`finish`](Self::finish).
    pub(crate) fn push(&mut self, user: usize, item: usize, rating: f64) {
        if user >= self.rows.len() {
            self.rows.resize_with(user + 1, Vec::new);
        }
        self.rows[user].push((item, rating));
        self.nnz += 1;
    }

    pub(crate) fn users_mut(&mut self) -> &mut IdIndex {
        &mut self.users
    }

    pub(crate) fn items_mut(&mut self) -> &mut IdIndex {
        &mut self.items
    }

    pub(crate) fn finish(&mut self) {
        self.rows.resize_with(self.users.len(), Vec::new);
        for row in &mut self.rows {
            row.sort_unstable_by_key(|&(item, _)| item);
        }
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn users(&self) -> &IdIndex {
        &self.users
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    /// Number of stored ratings.
    pub fn len(&self) -> usize {
        self.nnz
    }

    pub fn is_empty(&self) -> bool {
        self.nnz == 0
    }

    /// A user's ratings as `(item index, rating)`, sorted by item index.
    pub fn user_ratings(&self, user: usize) -> &[(usize, f64)] {
        &self.rows[user]
    }

    pub fn get(&self, user: usize, item: usize) -> Option<f64> {
        let row = &self.rows[user];
        row.binary_search_by_key(&item, |&(i, _)| i).ok().map(|pos| row[pos].1)
    }

    /// Iterates `(user, item, rating)` in user-major, item-sorted order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(i, r)| (u, i, r)))
    }

    /// Column view: for each item, `(user index, rating)` sorted by user.
    pub fn item_columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.items.len()];
        for (u, i, r) in self.entries() {
            cols[i].push((u, r));
        }
        cols
    }

    pub fn user_mean(&self, user: usize) -> Option<f64> {
        let row = &self.rows[user];
        if row.is_empty() {
            None
        } else {
            Some(row.iter().map(|&(_, r)| r).sum::<f64>() / row.len() as f64)
        }
    }

    pub fn global_mean(&self) -> Option<f64> {
        if self.nnz == 0 {
            None
        } else {
            Some(self.entries().map(|(_, _, r)| r).sum::<f64>() / self.nnz as f64)
        }
    }

    pub fn record(&self, user: usize, item: usize, rating: f64) -> RatingRecord {
        RatingRecord {
            user: self.users.id(user).to_owned(),
            item: self.items.id(item).to_owned(),
            rating,
            timestamp: None,
        }
    }

    /// Writes the matrix as a ratings CSV with a `user,item,rating` header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user,item,rating")?;
        for (u, i, r) in self.entries() {
            writeln!(out, "{},{},{}", self.users.id(u), self.items.id(i), r)?;
        }
        Ok(())
    }
}
