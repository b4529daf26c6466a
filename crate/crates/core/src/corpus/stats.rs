//! Corpus totals and the category × five-year-period page counts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::CanvasRecord;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Catalogue size; equals `digitized_items` unless set explicitly.
    pub total_items: usize,
    pub digitized_items: usize,
    pub total_pages: usize,
    pub blank_removed: usize,
    pub retained: usize,
    /// Pages keyed by (category letter, first year of the 5-year period).
    #[serde(with = "rows")]
    pub per_category_per_period: BTreeMap<(String, i32), usize>,
    /// Pages without a category or a year.
    pub unknown: usize,
}

impl CorpusStats {
    pub fn with_catalogue_size(mut self, items: usize) -> Self {
        self.total_items = items;
        self
    }
}

mod rows {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row {
        category: String,
        period_start: i32,
        page_count: usize,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<(String, i32), usize>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row> = map
            .iter()
            .map(|((category, period_start), &page_count)| Row {
                category: category.clone(),
                period_start: *period_start,
                page_count,
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(String, i32), usize>, D::Error> {
        let rows = Vec::<Row>::deserialize(d)?;
        Ok(rows.into_iter().map(|r| ((r.category, r.period_start), r.page_count)).collect())
    }
}

pub fn period_start(year: i32) -> i32 {
    year.div_euclid(5) * 5
}

pub fn corpus_stats(records: &[CanvasRecord]) -> CorpusStats {
    let manifests: BTreeSet<&str> = records.iter().map(|r| r.manifest_id.as_str()).collect();
    let blank_removed = records.iter().filter(|r| r.is_blank).count();
    let mut per = BTreeMap::new();
    let mut unknown = 0;
    for r in records {
        match (&r.robin_category, r.year) {
            (Some(c), Some(y)) => *per.entry((c.clone(), period_start(y))).or_insert(0) += 1,
            _ => unknown += 1,
        }
    }
    CorpusStats {
        total_items: manifests.len(),
        digitized_items: manifests.len(),
        total_pages: records.len(),
        blank_removed,
        retained: records.len() - blank_removed,
        per_category_per_period: per,
        unknown,
    }
}

/// `category,period_start,page_count`, sorted, with the unknown bucket last.
pub fn write_stats_csv(stats: &CorpusStats, out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["category", "period_start", "page_count"])?;
    for ((category, period), count) in &stats.per_category_per_period {
        w.write_record([category.clone(), period.to_string(), count.to_string()])?;
    }
    if stats.unknown > 0 {
        w.write_record(["unknown".to_string(), String::new(), stats.unknown.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::record;

    #[test]
    fn five_year_floor() {
        let mut recs: Vec<CanvasRecord> = [1902, 1903, 1906]
            .iter()
            .enumerate()
            .map(|(i, &y)| CanvasRecord { year: Some(y), ..record(i, "p") })
            .collect();
        recs.push(CanvasRecord { year: None, ..record(3, "blank") });
        let s = corpus_stats(&recs);
        assert_eq!(s.per_category_per_period[&("D".to_string(), 1900)], 2);
        assert_eq!(s.per_category_per_period[&("D".to_string(), 1905)], 1);
        assert_eq!((s.unknown, s.total_pages, s.blank_removed, s.retained), (1, 4, 1, 3));
        let mut csv = Vec::new();
        write_stats_csv(&s, &mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "category,period_start,page_count\nD,1900,2\nD,1905,1\nunknown,,1\n"
        );
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(corpus_stats(&[]), CorpusStats::default());
        assert_eq!(period_start(1839), 1835);
    }

    #[test]
    fn json_rows() {
        let s = corpus_stats(&[record(0, "p")]);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains(r#"[{"category":"D","period_start":1900,"page_count":1}]"#), "{text}");
        assert_eq!(serde_json::from_str::<CorpusStats>(&text).unwrap(), s);
    }
}
