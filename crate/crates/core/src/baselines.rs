//! The two comparison recommenders: cosine similarity over one-hot and
//! min-max scaled product attributes, and raw co-compare counts.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::delimited::{self, CsvText};
use crate::ann::{rank_list, Recommendation};
use crate::catalog::{Product, SkippedLine};
use crate::compare_graph::{read_pair_stream, ComparePair};
use crate::neural::loss::cosine_from_parts;
use crate::neural::tensor::dot;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeKind {
    Categorical { values: Vec<String> },
    Numerical { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeSpec {
    fn width(&self) -> usize {
        match &self.kind {
            AttributeKind::Categorical { values } => values.len(),
            AttributeKind::Numerical { .. } => 1,
        }
    }
}

/// Attribute layout shared by every product's vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttributeSchema {
    pub attributes: Vec<AttributeSpec>,
}

impl AttributeSchema {
    pub fn dim(&self) -> usize {
        self.attributes.iter().map(AttributeSpec::width).sum()
    }

    /// Schema file: one attribute per line, either
    /// `name,categorical,v1|v2|...` or `name,numerical,min,max`.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut attributes = Vec::new();
        delimited::for_each(text.as_bytes(), path, true, |r| {
            if r.first_is("attribute_name") {
                return Ok(());
            }
            let fields = r.fields();
            let bad = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line: r.line,
                message: format!("{message}: `{}`", r.text()),
            };
            let kind = match fields.as_slice() {
                [_, "categorical", values] => AttributeKind::Categorical {
                    values: values.split('|').map(str::to_string).collect(),
                },
                [_, "numerical", min, max] => {
                    let min: f64 = min.parse().map_err(|_| bad("bad minimum"))?;
                    let max: f64 = max.parse().map_err(|_| bad("bad maximum"))?;
                    if min.is_nan() || max.is_nan() || min > max {
                        return Err(bad("minimum exceeds maximum"));
                    }
                    AttributeKind::Numerical { min, max }
                }
                _ => return Err(bad("expected `name,categorical,values` or `name,numerical,min,max`")),
            };
            attributes.push(AttributeSpec {
                name: fields[0].to_string(),
                kind,
            });
            Ok(())
        })?;
        Ok(AttributeSchema { attributes })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("attribute_name,kind,values\n");
        for a in &self.attributes {
            match &a.kind {
                AttributeKind::Categorical { values } => {
                    s.push_str(&format!("{},categorical,{}\n", a.name, values.join("|")))
                }
                AttributeKind::Numerical { min, max } => s.push_str(&format!("{},numerical,{min},{max}\n", a.name)),
            }
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Per-product attribute values read from an attribute file.
pub type AttributeTable = BTreeMap<String, BTreeMap<String, String>>;

/// Attribute file: `product_id,attribute_name,attribute_value` per line.
/// Malformed lines are skipped and returned.
pub fn load_attributes(path: &Path) -> Result<(AttributeTable, Vec<SkippedLine>)> {
    let mut table = AttributeTable::new();
    let mut skipped = Vec::new();
    delimited::for_each_in_file(path, false, |r| {
        if r.first_is("product_id") {
            return Ok(());
        }
        match r.fields().as_slice() {
            [id, name, value] if !id.is_empty() && !name.is_empty() => {
                table
                    .entry(id.to_string())
                    .or_default()
                    .insert(name.to_string(), value.to_string());
            }
            _ => skipped.push(SkippedLine {
                line: r.line,
                reason: format!("expected `product_id,attribute_name,attribute_value`, got `{}`", r.text()),
            }),
        }
        Ok(())
    })?;
    Ok((table, skipped))
}

pub fn attributes_to_text(table: &AttributeTable) -> String {
    let mut w = CsvText::new(&["product_id", "attribute_name", "attribute_value"]);
    for (id, attrs) in table {
        for (name, value) in attrs {
            w.row([id, name, value]);
        }
    }
    w.finish()
}

/// Copies attribute-file values onto catalog products (file values win).
pub fn merge_attributes(products: &mut [Product], table: &AttributeTable) {
    for p in products {
        if let Some(attrs) = table.get(&p.product_id) {
            p.attributes.extend(attrs.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeVector {
    pub product_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct AttributeBuild {
    pub vectors: Vec<AttributeVector>,
    /// Products carrying none of the schema attributes.
    pub excluded: Vec<String>,
    /// Unknown categorical values and unparsable numbers, encoded as zeros.
    pub warnings: usize,
}

pub fn build_attribute_vectors(products: &[Product], schema: &AttributeSchema) -> AttributeBuild {
    let mut out = AttributeBuild::default();
    for p in products {
        if !schema.attributes.iter().any(|a| p.attributes.contains_key(&a.name)) {
            out.excluded.push(p.product_id.clone());
            continue;
        }
        let mut values = Vec::with_capacity(schema.dim());
        for spec in &schema.attributes {
            let raw = p.attributes.get(&spec.name);
            match &spec.kind {
                AttributeKind::Categorical { values: domain } => {
                    let hit = raw.and_then(|v| domain.iter().position(|d| d == v));
                    if let (Some(v), None) = (raw, hit) {
                        log::warn!("`{}`: unknown {} value {v:?}", p.product_id, spec.name);
                        out.warnings += 1;
                    }
                    values.extend((0..domain.len()).map(|i| if Some(i) == hit { 1.0 } else { 0.0 }));
                }
                AttributeKind::Numerical { min, max } => {
                    let x = match raw.map(|v| v.parse::<f64>()) {
                        None => 0.0,
                        Some(Ok(x)) if max > min => (x - min) / (max - min),
                        Some(Ok(_)) => 0.0,
                        Some(Err(_)) => {
                            out.warnings += 1;
                            0.0
                        }
                    };
                    values.push(x);
                }
            }
        }
        out.vectors.push(AttributeVector {
            product_id: p.product_id.clone(),
            values,
        });
    }
    out
}

/// Exact cosine top-N over attribute vectors.
#[derive(Debug, Clone)]
pub struct AttributeRecommender {
    // sorted by product id
    vectors: Vec<AttributeVector>,
    norms_sq: Vec<f64>,
    position: HashMap<String, usize>,
}

impl AttributeRecommender {
    pub fn new(mut vectors: Vec<AttributeVector>) -> Self {
        vectors.sort_by(|a, b| a.product_id.cmp(&b.product_id));
        let norms_sq = vectors.iter().map(|v| dot(&v.values, &v.values)).collect();
        let position = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (v.product_id.clone(), i))
            .collect();
        AttributeRecommender {
            vectors,
            norms_sq,
            position,
        }
    }

    pub fn covers(&self, anchor_id: &str) -> bool {
        self.position.get(anchor_id).is_some_and(|&i| self.norms_sq[i] > 0.0)
    }

    /// Top `n` by cosine, anchor excluded, ties by id. Anchors without an
    /// attribute vector (or with an all-zero one) are not covered.
    pub fn recommend(&self, anchor_id: &str, n: usize) -> Result<Vec<Recommendation>> {
        let &a = self
            .position
            .get(anchor_id)
            .filter(|&&i| self.norms_sq[i] > 0.0)
            .ok_or_else(|| Error::NoCoverage(anchor_id.to_string()))?;
        let av = &self.vectors[a].values;
        let mut scored: Vec<(String, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != a && self.norms_sq[i] > 0.0)
            .map(|(i, v)| {
                let sim = cosine_from_parts(dot(av, &v.values), self.norms_sq[a], self.norms_sq[i]);
                (v.product_id.clone(), sim)
            })
            .collect();
        scored.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        scored.truncate(n);
        Ok(rank_list(anchor_id, scored))
    }
}

/// Unordered pair -> number of times the pair was co-compared.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoCompareCounts {
    counts: BTreeMap<ComparePair, u64>,
    partners: HashMap<String, Vec<(String, u64)>>,
}

impl CoCompareCounts {
    pub fn count(&self, a: &str, b: &str) -> u64 {
        ComparePair::new(a, b)
            .and_then(|p| self.counts.get(&p).copied())
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn has_partners(&self, anchor_id: &str) -> bool {
        self.partners.contains_key(anchor_id)
    }

    /// Partners sorted by count descending, then id ascending, cut to `n`.
    /// `similarity` carries the raw count. Never-compared anchors get an
    /// empty list.
    pub fn recommend(&self, anchor_id: &str, n: usize) -> Vec<Recommendation> {
        let Some(partners) = self.partners.get(anchor_id) else {
            return Vec::new();
        };
        rank_list(
            anchor_id,
            partners.iter().take(n).map(|(id, c)| (id.clone(), *c as f64)),
        )
    }
}

/// Aggregates a raw (non-deduplicated) co-compare event stream.
pub fn build_cocompare_counts(events: &[ComparePair]) -> CoCompareCounts {
    let mut counts: BTreeMap<ComparePair, u64> = BTreeMap::new();
    for e in events {
        *counts.entry(e.clone()).or_default() += 1;
    }
    let mut partners: HashMap<String, Vec<(String, u64)>> = HashMap::new();
    for (p, &c) in &counts {
        partners
            .entry(p.product_id_1.clone())
            .or_default()
            .push((p.product_id_2.clone(), c));
        partners
            .entry(p.product_id_2.clone())
            .or_default()
            .push((p.product_id_1.clone(), c));
    }
    for list in partners.values_mut() {
        list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    }
    CoCompareCounts { counts, partners }
}

pub fn load_cocompare_counts(path: &Path) -> Result<CoCompareCounts> {
    Ok(build_cocompare_counts(&read_pair_stream(path)?.events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> AttributeSchema {
        AttributeSchema::from_text(
            "attribute_name,kind,values\ncolor,categorical,red|blue\ncapacity,numerical,10,30\n",
            Path::new("schema.csv"),
        )
        .unwrap()
    }

    fn product(id: &str, attrs: &[(&str, &str)]) -> Product {
        let mut p = Product::new(id, "t", "");
        p.attributes = attrs.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect();
        p
    }

    #[test]
    fn one_hot_and_min_max() {
        let build = build_attribute_vectors(
            &[
                product("a", &[("color", "red"), ("capacity", "25.5")]),
                product("b", &[("color", "green")]),
                product("c", &[("weight", "3")]),
            ],
            &schema(),
        );
        assert_eq!(build.vectors[0].values, [1.0, 0.0, 0.775]);
        assert_eq!(build.vectors[1].values, [0.0, 0.0, 0.0]);
        assert_eq!(build.excluded, ["c"]);
        assert_eq!(build.warnings, 1);
    }

    #[test]
    fn schema_round_trip_and_errors() {
        let s = schema();
        assert_eq!(AttributeSchema::from_text(&s.to_text(), Path::new("x")).unwrap(), s);
        assert_eq!(s.dim(), 3);
        assert!(AttributeSchema::from_text("w,numerical,5,1\n", Path::new("x")).is_err());
        assert!(AttributeSchema::from_text("w,ordinal,1\n", Path::new("x")).is_err());
    }

    #[test]
    fn attribute_recommendations() {
        let vectors = vec![
            AttributeVector { product_id: "a".into(), values: vec![1.0, 0.0, 0.5] },
            AttributeVector { product_id: "b".into(), values: vec![1.0, 0.0, 0.5] },
            AttributeVector { product_id: "c".into(), values: vec![0.0, 1.0, 0.5] },
            AttributeVector { product_id: "z".into(), values: vec![0.0, 0.0, 0.0] },
        ];
        let rec = AttributeRecommender::new(vectors);
        let out = rec.recommend("a", 5).unwrap();
        assert_eq!(out[0].neighbor_id, "b");
        assert_eq!(out[0].similarity, 1.0);
        assert_eq!(out[0].rank, 1);
        assert!(out.iter().all(|r| r.neighbor_id != "a" && r.neighbor_id != "z"));
        assert!(matches!(rec.recommend("z", 5), Err(Error::NoCoverage(_))));
        assert!(matches!(rec.recommend("missing", 5), Err(Error::NoCoverage(_))));
    }

    fn pair(a: &str, b: &str) -> ComparePair {
        ComparePair::new(a, b).unwrap()
    }

    #[test]
    fn cocompare_counts() {
        let mut events = vec![pair("a", "b"); 3];
        events.push(pair("b", "a"));
        let counts = build_cocompare_counts(&events);
        assert_eq!(counts.count("a", "b"), 4);
        assert_eq!(counts.count("b", "a"), 4);
        assert!(build_cocompare_counts(&[]).is_empty());
        assert_eq!(build_cocompare_counts(&[pair("x", "y")]).count("x", "y"), 1);
    }

    #[test]
    fn frequently_compared_ranking() {
        let mut events = vec![pair("a", "b"); 5];
        events.extend(vec![pair("a", "c"); 2]);
        events.extend(vec![pair("a", "d"); 2]);
        let counts = build_cocompare_counts(&events);
        let recs = counts.recommend("a", 10);
        let got: Vec<_> = recs.iter().map(|r| (r.neighbor_id.as_str(), r.similarity, r.rank)).collect();
        assert_eq!(got, [("b", 5.0, 1), ("c", 2.0, 2), ("d", 2.0, 3)]);
        assert_eq!(counts.recommend("a", 1).len(), 1);
        assert!(counts.recommend("never", 10).is_empty());
    }

    #[test]
    fn attribute_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attrs.csv");
        std::fs::write(&path, "product_id,attribute_name,attribute_value\na,color,red\na,capacity,12\nbroken\n").unwrap();
        let (table, skipped) = load_attributes(&path).unwrap();
        assert_eq!(table["a"]["capacity"], "12");
        assert_eq!(skipped.len(), 1);
        assert_eq!(attributes_to_text(&table).lines().count(), 3);
    }

    proptest! {
        #[test]
        fn attribute_ranking_matches_brute_force(
            raw in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 2..40),
        ) {
            let vectors: Vec<AttributeVector> = raw.iter().enumerate()
                .map(|(i, v)| AttributeVector { product_id: format!("p{i:02}"), values: v.clone() })
                .collect();
            let rec = AttributeRecommender::new(vectors.clone());
            let anchor = &vectors[0];
            prop_assume!(anchor.values.iter().any(|&x| x > 0.0));
            let got = rec.recommend(&anchor.product_id, vectors.len()).unwrap();
            // brute force: every other non-zero vector scored independently
            let mut expected: Vec<(String, f64)> = vectors[1..].iter()
                .filter(|v| v.values.iter().any(|&x| x != 0.0))
                .map(|v| {
                    let num: f64 = anchor.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
                    let den = (anchor.values.iter().map(|a| a * a).sum::<f64>() * v.values.iter().map(|b| b * b).sum::<f64>()).sqrt();
                    (v.product_id.clone(), (num / den).clamp(-1.0, 1.0))
                })
                .collect();
            expected.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
            prop_assert_eq!(got.len(), expected.len());
            for (g, e) in got.iter().zip(&expected) {
                prop_assert_eq!(&g.neighbor_id, &e.0);
                prop_assert_eq!(g.similarity, e.1);
            }
        }

        #[test]
        fn frequently_compared_is_a_stable_count_sort(
            raw in proptest::collection::vec(0usize..8, 0..60),
        ) {
            let events: Vec<ComparePair> = raw.iter().map(|&i| pair("anchor", &format!("q{i}"))).collect();
            let counts = build_cocompare_counts(&events);
            let recs = counts.recommend("anchor", 100);
            let mut expected: BTreeMap<String, u64> = BTreeMap::new();
            for &i in &raw {
                *expected.entry(format!("q{i}")).or_default() += 1;
            }
            prop_assert_eq!(recs.len(), expected.len());
            for w in recs.windows(2) {
                prop_assert!(w[0].similarity > w[1].similarity
                    || (w[0].similarity == w[1].similarity && w[0].neighbor_id < w[1].neighbor_id));
            }
            for r in &recs {
                prop_assert_eq!(r.similarity as u64, expected[&r.neighbor_id]);
            }
        }
    }
}
