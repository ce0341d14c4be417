// Copyright 2026 The mosco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! File writers. CSV values carry 17 significant digits; JSON summaries
//! carry `schema_version` and the resolved configuration.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use mosco::{HVec, Observation, SampleSet};
use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: &str = "1";

pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `{"schema_version", "command", "config", ...fields}`.
pub fn write_summary<C: Serialize>(path: &Path, command: &str, config: &C, fields: Value) -> Result<()> {
    let mut obj = Map::new();
    obj.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    obj.insert("command".into(), Value::from(command));
    obj.insert("config".into(), serde_json::to_value(config)?);
    match fields {
        Value::Object(m) => obj.extend(m),
        Value::Null => {}
        other => bail!("summary fields must be an object, got {other}"),
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(obj))?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Dataset header: `y,x1,…,xd,residual`.
pub fn dataset_header(dim: usize) -> Vec<String> {
    let mut h = vec!["y".to_string()];
    h.extend((1..=dim).map(|k| format!("x{k}")));
    h.push("residual".into());
    h
}

/// Writes observations with the residual `y − ⟨x, θ₀⟩`.
pub fn write_dataset(path: &Path, samples: &SampleSet, theta0: &HVec) -> Result<()> {
    let header = dataset_header(samples.dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = samples.observations().iter().map(|o| {
        let mut row = vec![num(o.y)];
        row.extend(o.x.as_slice().iter().map(|v| num(*v)));
        let fitted: f64 = o.x.as_slice().iter().zip(theta0.as_slice()).map(|(a, b)| a * b).sum();
        row.push(num(o.y - fitted));
        row
    });
    write_csv(path, &header, rows)
}

/// Reads a dataset written by [`write_dataset`]; the residual column is
/// optional and ignored.
pub fn read_dataset(path: &Path) -> Result<SampleSet> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    ensure!(!header.is_empty(), "{}: dataset is empty", path.display());
    ensure!(header.first().map(String::as_str) == Some("y"), "{}: first column must be `y`", path.display());
    let mut dim = 0;
    while header.get(dim + 1).is_some_and(|h| *h == format!("x{}", dim + 1)) {
        dim += 1;
    }
    ensure!(dim > 0, "{}: no regressor columns x1, x2, …", path.display());
    let extra = &header[dim + 1..];
    ensure!(
        extra.is_empty() || extra == ["residual"],
        "{}: unexpected columns {:?}",
        path.display(),
        extra
    );
    let mut obs = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            let cell = rec.get(k).with_context(|| format!("row {}: missing column {}", i + 1, k + 1))?;
            cell.trim().parse::<f64>().with_context(|| format!("row {}: bad number {cell:?}", i + 1))
        };
        let y = parse(0)?;
        let x = (1..=dim).map(parse).collect::<Result<Vec<f64>>>()?;
        obs.push(Observation { y, x: HVec::new(x)? });
    }
    ensure!(!obs.is_empty(), "{}: dataset has no rows", path.display());
    Ok(SampleSet::new(dim, obs)?)
}
