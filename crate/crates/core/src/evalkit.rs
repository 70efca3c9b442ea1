//! Session-based precision@K / recall@K, anchor coverage, and the raw and
//! covered-by-all evaluation protocols.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::delimited::{self, CsvText};
use crate::ann::{top_n_recommendations, AnnIndex, Recommendation};
use crate::baselines::{AttributeRecommender, CoCompareCounts};
use crate::catalog::SkippedLine;
use crate::embedding_store::EmbeddingStore;
use crate::neural::ExactSum;
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: String,
    pub anchor_id: String,
    pub purchased_ids: BTreeSet<String>,
}

impl Session {
    /// `None` when nothing was purchased.
    pub fn new<I, S>(session_id: impl Into<String>, anchor_id: impl Into<String>, purchased: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let purchased_ids: BTreeSet<String> = purchased.into_iter().map(Into::into).collect();
        if purchased_ids.is_empty() {
            return None;
        }
        Some(Session {
            session_id: session_id.into(),
            anchor_id: anchor_id.into(),
            purchased_ids,
        })
    }
}

pub struct SessionLoad {
    pub sessions: Vec<Session>,
    pub skipped: Vec<SkippedLine>,
}

/// Sessions file: `session_id,anchor_id,p1|p2|...` per line, optional header.
pub fn load_sessions(path: &Path) -> Result<SessionLoad> {
    let mut sessions = Vec::new();
    let mut skipped = Vec::new();
    delimited::for_each_in_file(path, false, |r| {
        if r.first_is("session_id") {
            return Ok(());
        }
        let parsed = match r.fields().as_slice() {
            [sid, anchor, purchased] if !sid.is_empty() && !anchor.is_empty() => {
                Session::new(*sid, *anchor, purchased.split('|').map(str::trim).filter(|p| !p.is_empty()))
            }
            _ => None,
        };
        match parsed {
            Some(s) => sessions.push(s),
            None => skipped.push(SkippedLine {
                line: r.line,
                reason: format!("expected `session_id,anchor_id,p1|p2`, got `{}`", r.text()),
            }),
        }
        Ok(())
    })?;
    Ok(SessionLoad { sessions, skipped })
}

pub fn sessions_to_text(sessions: &[Session]) -> String {
    let mut w = CsvText::new(&["session_id", "anchor_id", "purchased_ids"]);
    for x in sessions {
        let purchased: Vec<&str> = x.purchased_ids.iter().map(String::as_str).collect();
        w.row([x.session_id.as_str(), &x.anchor_id, &purchased.join("|")]);
    }
    w.finish()
}

fn hits(recommended: &[Recommendation], purchased: &BTreeSet<String>, k: usize) -> usize {
    recommended
        .iter()
        .take(k)
        .filter(|r| purchased.contains(&r.neighbor_id))
        .count()
}

/// Hits in the top `k` over `k`; missing slots count as misses.
pub fn precision_at_k(recommended: &[Recommendation], purchased: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    hits(recommended, purchased, k) as f64 / k as f64
}

/// Hits in the top `k` over the number of purchases.
pub fn recall_at_k(recommended: &[Recommendation], purchased: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    assert!(!purchased.is_empty(), "purchased set must be non-empty");
    hits(recommended, purchased, k) as f64 / purchased.len() as f64
}

/// Anything that produces a ranked list for an anchor. An anchor the
/// recommender cannot serve yields an empty list.
pub trait Recommender {
    fn name(&self) -> &str;
    fn recommend(&self, anchor_id: &str, n: usize) -> Result<Vec<Recommendation>>;
}

/// Thresholded ANN top-N over the learned embeddings.
pub struct DeepRecommender<'a> {
    pub index: &'a AnnIndex,
    pub store: &'a EmbeddingStore,
    pub threshold: f64,
    pub ef_search: usize,
}

impl Recommender for DeepRecommender<'_> {
    fn name(&self) -> &str {
        "deep_learning"
    }

    fn recommend(&self, anchor_id: &str, n: usize) -> Result<Vec<Recommendation>> {
        if self.store.get(anchor_id).is_none() {
            return Ok(Vec::new());
        }
        top_n_recommendations(self.index, self.store, anchor_id, n, self.threshold, self.ef_search)
    }
}

impl Recommender for AttributeRecommender {
    fn name(&self) -> &str {
        "attribute_based"
    }

    fn recommend(&self, anchor_id: &str, n: usize) -> Result<Vec<Recommendation>> {
        match AttributeRecommender::recommend(self, anchor_id, n) {
            Err(Error::NoCoverage(_)) => Ok(Vec::new()),
            other => other,
        }
    }
}

impl Recommender for CoCompareCounts {
    fn name(&self) -> &str {
        "frequently_compared"
    }

    fn recommend(&self, anchor_id: &str, n: usize) -> Result<Vec<Recommendation>> {
        Ok(CoCompareCounts::recommend(self, anchor_id, n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmMetrics {
    pub name: String,
    /// Indexed like [`MetricsTable::ks`].
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub protocol: String,
    pub sessions: usize,
    pub ks: Vec<usize>,
    pub rows: Vec<AlgorithmMetrics>,
}

/// Means of precision/recall at each `k` over all sessions. A recommender
/// that cannot serve an anchor scores zero for that session. Sums run in
/// session-id order and are exactly rounded.
pub fn evaluate(recommenders: &[&dyn Recommender], sessions: &[Session], ks: &[usize]) -> Result<MetricsTable> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("ks must be non-empty and >= 1".into()));
    }
    let mut ordered: Vec<&Session> = sessions.iter().collect();
    ordered.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let depth = *ks.iter().max().unwrap();
    let mut rows = Vec::with_capacity(recommenders.len());
    for rec in recommenders {
        let mut p_sums = vec![ExactSum::new(); ks.len()];
        let mut r_sums = vec![ExactSum::new(); ks.len()];
        for s in &ordered {
            let list = rec.recommend(&s.anchor_id, depth)?;
            for (j, &k) in ks.iter().enumerate() {
                p_sums[j].add(precision_at_k(&list, &s.purchased_ids, k));
                r_sums[j].add(recall_at_k(&list, &s.purchased_ids, k));
            }
        }
        let mean = |sums: Vec<ExactSum>| -> Vec<f64> {
            sums.iter()
                .map(|s| if ordered.is_empty() { 0.0 } else { s.value() / ordered.len() as f64 })
                .collect()
        };
        rows.push(AlgorithmMetrics {
            name: rec.name().to_string(),
            precision: mean(p_sums),
            recall: mean(r_sums),
            coverage: None,
        });
    }
    Ok(MetricsTable {
        protocol: "raw".into(),
        sessions: ordered.len(),
        ks: ks.to_vec(),
        rows,
    })
}

/// Sessions whose anchor gets a non-empty list from every recommender.
pub fn filter_covered_sessions(sessions: &[Session], recommenders: &[&dyn Recommender]) -> Result<Vec<Session>> {
    let mut kept = Vec::new();
    'sessions: for s in sessions {
        for rec in recommenders {
            if rec.recommend(&s.anchor_id, 1)?.is_empty() {
                continue 'sessions;
            }
        }
        kept.push(s.clone());
    }
    Ok(kept)
}

/// Fraction of `catalog` for which `recommender` returns at least one item.
pub fn anchor_coverage<'a>(recommender: &dyn Recommender, catalog: impl IntoIterator<Item = &'a str>) -> Result<f64> {
    let mut total = 0usize;
    let mut covered = 0usize;
    for id in catalog {
        total += 1;
        if !recommender.recommend(id, 1)?.is_empty() {
            covered += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument("coverage of an empty catalog".into()));
    }
    Ok(covered as f64 / total as f64)
}

/// Relative lift `(a - b) / b`; infinite when `b` is zero and `a` is not.
pub fn lift(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b) / b
    }
}

impl MetricsTable {
    pub fn with_protocol(mut self, protocol: &str) -> Self {
        self.protocol = protocol.to_string();
        self
    }

    pub fn row(&self, name: &str) -> Option<&AlgorithmMetrics> {
        self.rows.iter().find(|r| r.name == name)
    }

    fn header(&self) -> Vec<String> {
        let mut cols = vec!["algorithm".to_string()];
        cols.extend(self.ks.iter().map(|k| format!("precision@{k}")));
        cols.extend(self.ks.iter().map(|k| format!("recall@{k}")));
        cols.push("coverage".into());
        cols
    }

    fn cells(row: &AlgorithmMetrics, fmt: impl Fn(f64) -> String) -> Vec<String> {
        let mut cells = vec![row.name.clone()];
        cells.extend(row.precision.iter().map(|&x| fmt(x)));
        cells.extend(row.recall.iter().map(|&x| fmt(x)));
        cells.push(row.coverage.map(&fmt).unwrap_or_default());
        cells
    }

    /// `protocol,sessions,algorithm,precision@k...,recall@k...,coverage`.
    /// Values use shortest round-trip formatting.
    pub fn to_csv_rows(&self, with_header: bool) -> String {
        let mut s = String::new();
        if with_header {
            let _ = writeln!(s, "protocol,sessions,{}", self.header().join(","));
        }
        for row in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{}",
                self.protocol,
                self.sessions,
                Self::cells(row, |x| format!("{x}")).join(",")
            );
        }
        s
    }

    /// Fixed-width table, one algorithm per row.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| Self::cells(r, |x| format!("{x:.4}")))
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
            .collect();
        let line = |cells: &[String]| -> String {
            let mut out = String::new();
            for (c, cell) in cells.iter().enumerate() {
                if c == 0 {
                    let _ = write!(out, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(out, "  {cell:>w$}", w = widths[c]);
                }
            }
            out.trim_end().to_string()
        };
        let mut s = format!("{} sessions ({} protocol)\n", self.sessions, self.protocol);
        s.push_str(&line(&header));
        s.push('\n');
        for r in &body {
            s.push_str(&line(r));
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::rank_list;
    use proptest::prelude::*;

    fn recs(ids: &[&str]) -> Vec<Recommendation> {
        rank_list("x", ids.iter().map(|id| (id.to_string(), 1.0)))
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    struct Fixed(&'static str, Vec<(&'static str, Vec<&'static str>)>);

    impl Recommender for Fixed {
        fn name(&self) -> &str {
            self.0
        }
        fn recommend(&self, anchor_id: &str, n: usize) -> Result<Vec<Recommendation>> {
            let list = self.1.iter().find(|(a, _)| *a == anchor_id).map(|(_, l)| l.clone()).unwrap_or_default();
            Ok(recs(&list).into_iter().take(n).collect())
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(precision_at_k(&recs(&["p1", "p2", "p3"]), &set(&["p2"]), 3), 1.0 / 3.0);
        assert_eq!(precision_at_k(&recs(&["a", "b"]), &set(&["a", "b", "c"]), 2), 1.0);
        assert_eq!(precision_at_k(&[], &set(&["a"]), 5), 0.0);
        assert_eq!(precision_at_k(&recs(&["a"]), &set(&["a"]), 5), 0.2);
        assert_eq!(recall_at_k(&recs(&["p1", "p2"]), &set(&["p1", "p9"]), 2), 0.5);
        assert_eq!(recall_at_k(&recs(&["a", "b", "c"]), &set(&["b", "c"]), 3), 1.0);
        assert_eq!(recall_at_k(&recs(&["a"]), &set(&["z"]), 1), 0.0);
    }

    #[test]
    fn evaluate_single_session_and_zero_coverage() {
        let sessions = vec![Session::new("s1", "a", ["b"]).unwrap()];
        let good = Fixed("good", vec![("a", vec!["b", "c"])]);
        let none = Fixed("none", vec![]);
        let table = evaluate(&[&good, &none], &sessions, &DEFAULT_KS).unwrap();
        assert_eq!(table.row("good").unwrap().precision, [1.0, 0.2, 0.1]);
        assert_eq!(table.row("good").unwrap().recall, [1.0, 1.0, 1.0]);
        assert_eq!(table.row("none").unwrap().precision, [0.0; 3]);
        assert_eq!(table.row("none").unwrap().recall, [0.0; 3]);
    }

    #[test]
    fn three_session_fixture() {
        let sessions = vec![
            Session::new("s3", "c", ["x"]).unwrap(),
            Session::new("s1", "a", ["b", "d"]).unwrap(),
            Session::new("s2", "b", ["q"]).unwrap(),
        ];
        let alg = Fixed("alg", vec![("a", vec!["d", "e", "b"]), ("b", vec!["z"]), ("c", vec!["y", "x"])]);
        let t = evaluate(&[&alg], &sessions, &[1, 2, 3]).unwrap();
        // hits per session at k=1,2,3: s1 1,1,2; s2 0,0,0; s3 0,1,1
        let row = t.row("alg").unwrap();
        assert_eq!(row.precision, [1.0 / 3.0, (0.5 + 0.5) / 3.0, (2.0 / 3.0 + 1.0 / 3.0) / 3.0]);
        assert_eq!(row.recall, [0.5 / 3.0, 1.5 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn filtering_and_coverage() {
        let sessions = vec![
            Session::new("s1", "a", ["b"]).unwrap(),
            Session::new("s2", "lonely", ["b"]).unwrap(),
        ];
        let both = Fixed("both", vec![("a", vec!["b"]), ("lonely", vec!["b"])]);
        let some = Fixed("some", vec![("a", vec!["b"])]);
        let kept = filter_covered_sessions(&sessions, &[&both, &some]).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].session_id, "s1");
        assert_eq!(filter_covered_sessions(&sessions, &[]).unwrap(), sessions);
        assert_eq!(anchor_coverage(&both, ["a", "lonely"]).unwrap(), 1.0);
        assert_eq!(anchor_coverage(&some, ["a", "lonely"]).unwrap(), 0.5);
        assert!(anchor_coverage(&some, []).is_err());
        assert_eq!(lift(0.9, 0.6), (0.9 - 0.6) / 0.6);
        assert_eq!(lift(0.0, 0.0), 0.0);
    }

    #[test]
    fn report_formats() {
        let sessions = vec![Session::new("s1", "a", ["b"]).unwrap()];
        let good = Fixed("good", vec![("a", vec!["b"])]);
        let mut t = evaluate(&[&good], &sessions, &DEFAULT_KS).unwrap();
        t.rows[0].coverage = Some(0.5);
        let csv = t.to_csv_rows(true);
        assert_eq!(
            csv,
            "protocol,sessions,algorithm,precision@1,precision@5,precision@10,recall@1,recall@5,recall@10,coverage\n\
             raw,1,good,1,0.2,0.1,1,1,1,0.5\n"
        );
        let text = t.to_text();
        assert!(text.lines().nth(2).unwrap().starts_with("good"));
    }

    #[test]
    fn session_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "session_id,anchor_id,purchased_ids\ns1,a,b|c\ns2,a,\nbad\n").unwrap();
        let load = load_sessions(&path).unwrap();
        assert_eq!(load.sessions.len(), 1);
        assert_eq!(load.skipped.len(), 2);
        std::fs::write(&path, sessions_to_text(&load.sessions)).unwrap();
        assert_eq!(load_sessions(&path).unwrap().sessions, load.sessions);
    }

    proptest! {
        #[test]
        fn precision_recall_identity_and_monotone_recall(
            list in proptest::collection::vec(0u8..20, 0..15),
            purchased in proptest::collection::btree_set(0u8..20, 1..6),
            k in 1usize..15,
        ) {
            let mut seen = BTreeSet::new();
            let ids: Vec<String> = list.iter().filter(|x| seen.insert(**x)).map(|x| format!("p{x}")).collect();
            let recs = rank_list("a", ids.into_iter().map(|id| (id, 1.0)));
            let bought: BTreeSet<String> = purchased.iter().map(|x| format!("p{x}")).collect();
            let p = precision_at_k(&recs, &bought, k);
            let r = recall_at_k(&recs, &bought, k);
            let h = hits(&recs, &bought, k) as f64;
            prop_assert_eq!((p * k as f64).round(), h);
            prop_assert_eq!((r * bought.len() as f64).round(), h);
            prop_assert!(recall_at_k(&recs, &bought, k + 1) >= r);
            prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        }
    }
}
