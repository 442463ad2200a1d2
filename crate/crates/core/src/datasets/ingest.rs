//! Ratings ingestion and threshold filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use super::DatasetError;

/// Filtered ratings with users and items re-indexed densely in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    /// `(user index, item index, rating)`.
    pub triples: Vec<(usize, usize, f64)>,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

/// Row counts before and after filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FilterCounts {
    pub raw_ratings: usize,
    pub raw_users: usize,
    pub raw_items: usize,
    pub ratings: usize,
    pub users: usize,
    pub items: usize,
}

impl RatingsTable {
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Drops users and items below the thresholds until every remaining
    /// user and item meets them.
    pub fn from_raw(
        raw: &[(u64, u64, f64)],
        min_user_ratings: usize,
        min_item_ratings: usize,
    ) -> Result<(Self, FilterCounts), DatasetError> {
        let mut keep: Vec<bool> = vec![true; raw.len()];
        loop {
            let mut per_user: BTreeMap<u64, usize> = BTreeMap::new();
            let mut per_item: BTreeMap<u64, usize> = BTreeMap::new();
            for (&(u, i, _), _) in raw.iter().zip(&keep).filter(|(_, k)| **k) {
                *per_user.entry(u).or_default() += 1;
                *per_item.entry(i).or_default() += 1;
            }
            let mut changed = false;
            for ((u, i, _), k) in raw.iter().zip(keep.iter_mut()) {
                if *k && (per_user[u] < min_user_ratings || per_item[i] < min_item_ratings) {
                    *k = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let kept: Vec<&(u64, u64, f64)> = raw.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r).collect();
        if kept.is_empty() {
            return Err(DatasetError::EmptyAfterFilter);
        }
        let user_ids: Vec<u64> = kept.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
        let item_ids: Vec<u64> = kept.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
        let user_index: BTreeMap<u64, usize> = user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let item_index: BTreeMap<u64, usize> = item_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let triples = kept
            .iter()
            .map(|&&(u, i, r)| (user_index[&u], item_index[&i], r))
            .collect();
        let counts = FilterCounts {
            raw_ratings: raw.len(),
            raw_users: raw.iter().map(|r| r.0).collect::<BTreeSet<_>>().len(),
            raw_items: raw.iter().map(|r| r.1).collect::<BTreeSet<_>>().len(),
            ratings: kept.len(),
            users: user_ids.len(),
            items: item_ids.len(),
        };
        Ok((
            Self {
                triples,
                user_ids,
                item_ids,
            },
            counts,
        ))
    }
}

fn detect_delimiter(line: &str) -> &'static str {
    if line.contains("::") {
        "::"
    } else if line.contains('\t') {
        "\t"
    } else {
        ","
    }
}

/// Parses `user<d>item<d>rating[<d>...]` lines. The delimiter is `::`, tab
/// or comma, detected from the first non-empty line; that line is skipped as
/// a header when its rating field is not a number. Extra fields (such as
/// timestamps) are ignored.
pub fn parse_ratings(text: &str) -> Result<Vec<(u64, u64, f64)>, DatasetError> {
    let mut delimiter = None;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let first = delimiter.is_none();
        let d = *delimiter.get_or_insert_with(|| detect_delimiter(line));
        let fields: Vec<&str> = line.split(d).map(str::trim).collect();
        if first && fields.get(2).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let bad = |reason: &str| DatasetError::Parse {
            line: line_no,
            reason: reason.to_string(),
        };
        if fields.len() < 3 {
            return Err(bad("expected at least 3 fields"));
        }
        let user = fields[0].parse::<u64>().map_err(|_| bad("user id is not an integer"))?;
        let item = fields[1].parse::<u64>().map_err(|_| bad("item id is not an integer"))?;
        let rating = fields[2].parse::<f64>().map_err(|_| bad("rating is not a number"))?;
        if !rating.is_finite() {
            return Err(bad("rating is not finite"));
        }
        out.push((user, item, rating));
    }
    Ok(out)
}

/// Reads, parses and filters a ratings file.
pub fn ingest_ratings(
    path: &Path,
    min_user_ratings: usize,
    min_item_ratings: usize,
) -> Result<(RatingsTable, FilterCounts), DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let raw = parse_ratings(&text)?;
    RatingsTable::from_raw(&raw, min_user_ratings, min_item_ratings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delimiters_and_headers() {
        let ml = "1::10::5::978300760\n1::20::3::978302109\n2::10::4::1\n";
        assert_eq!(parse_ratings(ml).unwrap(), vec![(1, 10, 5.0), (1, 20, 3.0), (2, 10, 4.0)]);
        let csv = "user,item,rating\n1,2,3.5\n";
        assert_eq!(parse_ratings(csv).unwrap(), vec![(1, 2, 3.5)]);
        let tsv = "7\t8\t1\n";
        assert_eq!(parse_ratings(tsv).unwrap(), vec![(7, 8, 1.0)]);
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let err = parse_ratings("1,2,3\n\n1,x,3\n").unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 3, .. }), "{err:?}");
        let err = parse_ratings("1,2,3\n1,2\n").unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 2, .. }));
    }

    #[test]
    fn zero_thresholds_keep_everything() {
        let raw = vec![(5, 1, 1.0), (3, 2, 2.0), (5, 2, 3.0)];
        let (t, c) = RatingsTable::from_raw(&raw, 0, 0).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.user_ids, vec![3, 5]);
        assert_eq!(c.ratings, c.raw_ratings);
        assert_eq!(t.triples[0], (1, 0, 1.0));
    }

    #[test]
    fn filtering_matches_recount_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut raw = Vec::new();
        for u in 0..50u64 {
            for i in 0..40u64 {
                // sparser for high ids so thresholds bite
                if rng.random::<f64>() < 0.95 - 0.01 * (u + i) as f64 {
                    raw.push((u, i, rng.random_range(1.0..5.0)));
                }
            }
        }
        let (t, c) = RatingsTable::from_raw(&raw, 15, 12).unwrap();
        // oracle: recount on the output
        let mut users = vec![0; t.num_users()];
        let mut items = vec![0; t.num_items()];
        for &(u, i, _) in &t.triples {
            users[u] += 1;
            items[i] += 1;
        }
        assert!(users.iter().all(|&n| n >= 15));
        assert!(items.iter().all(|&n| n >= 12));
        assert_eq!(c.users, t.num_users());
        assert!(c.users < 50);
        // every kept triple is an original one
        for &(u, i, r) in &t.triples {
            assert!(raw.contains(&(t.user_ids[u], t.item_ids[i], r)));
        }
        // nothing removable was kept and nothing keepable dropped: a kept
        // set is a fixpoint, and rerunning the filter changes nothing
        let back: Vec<(u64, u64, f64)> =
            t.triples.iter().map(|&(u, i, r)| (t.user_ids[u], t.item_ids[i], r)).collect();
        let (again, _) = RatingsTable::from_raw(&back, 15, 12).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn empty_after_filter() {
        assert!(matches!(
            RatingsTable::from_raw(&[(1, 1, 1.0)], 2, 0),
            Err(DatasetError::EmptyAfterFilter)
        ));
    }
}
