//! Merges per-seed metric tables into mean and sample standard deviation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Aggregate {
    pub values: Vec<f64>,
}

impl Aggregate {
    pub fn mean(&self) -> Option<f64> {
        (!self.values.is_empty()).then(|| self.values.iter().sum::<f64>() / self.values.len() as f64)
    }

    /// Sample standard deviation; 0 for a single value.
    pub fn stddev(&self) -> Option<f64> {
        let mean = self.mean()?;
        let n = self.values.len();
        if n < 2 {
            return Some(0.0);
        }
        let ss: f64 = self.values.iter().map(|v| (v - mean).powi(2)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    }
}

/// Row key: bucket index, bucket end, metric name. Ordered as in the inputs.
type Key = (usize, String, String);

/// Parses `bucket,time_end,metric,value` tables and groups values by row key.
/// Empty values (undefined averages) are skipped.
pub fn merge(tables: &[(String, String)]) -> Result<Vec<(Key, Aggregate)>> {
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, Aggregate> = BTreeMap::new();
    for (name, text) in tables {
        let mut lines = text.lines();
        if lines.next() != Some("bucket,time_end,metric,value") {
            bail!("{name}: not a metrics table");
        }
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            let [bucket, time_end, metric, value] = cells[..] else {
                bail!("{name}: line {} has {} columns", i + 2, cells.len());
            };
            let key = (
                bucket.parse().with_context(|| format!("{name}: bad bucket on line {}", i + 2))?,
                time_end.to_string(),
                metric.to_string(),
            );
            let entry = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key.clone());
                Aggregate::default()
            });
            if !value.is_empty() {
                entry.values.push(value.parse().with_context(|| format!("{name}: bad value on line {}", i + 2))?);
            }
        }
    }
    Ok(order.into_iter().map(|k| {
        let agg = groups.remove(&k).expect("key recorded");
        (k, agg)
    }).collect())
}

pub fn to_csv(rows: &[(Key, Aggregate)]) -> String {
    let mut out = String::from("bucket,time_end,metric,n,mean,stddev\n");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for ((bucket, time_end, metric), agg) in rows {
        let _ = writeln!(out, "{bucket},{time_end},{metric},{},{},{}", agg.values.len(), fmt(agg.mean()), fmt(agg.stddev()));
    }
    out
}
