//! Run reports and the JSON writer shared with checkpoints.
//!
//! Every finite float is written with 17 significant digits, so parsing the
//! text recovers the exact value; non-finite ones become `null`. Struct fields serialize in declaration
//! order and maps are `BTreeMap`s, which keeps the byte layout stable.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::ser::Serialize;
use serde::{Deserialize, Serialize as SerializeDerive};
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::error::{Error, Result};

/// Delegates layout to `F` and prints floats as `{:.16e}`.
pub struct ExactFloats<F>(pub F);

macro_rules! forward {
    ($($name:ident ( $($arg:ident : $ty:ty),* );)*) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(w $(, $arg)*)
        })*
    };
}

impl<F: Formatter> Formatter for ExactFloats<F> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(v))
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

fn serialize_with<V: Serialize, F: Formatter>(v: &V, f: F) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(f));
    v.serialize(&mut ser)?;
    String::from_utf8(buf).map_err(|e| Error::Validation(e.to_string()))
}

/// Single-line JSON with exact floats.
pub fn to_json_string<V: Serialize>(v: &V) -> Result<String> {
    serialize_with(v, CompactFormatter)
}

/// Indented JSON with exact floats.
pub fn to_json_pretty<V: Serialize>(v: &V) -> Result<String> {
    serialize_with(v, PrettyFormatter::new())
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub attacker: String,
    pub misclassification: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub smoothness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detection_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub defended_misclassification: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epochs_run: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub best_epoch: Option<usize>,
}

impl SeedRow {
    pub fn metrics(&self) -> BTreeMap<&'static str, f64> {
        let mut m = BTreeMap::new();
        m.insert("misclassification", self.misclassification);
        let opt = [
            ("cad", self.cad),
            ("smoothness", self.smoothness),
            ("detection_auc", self.detection_auc),
            ("defended_misclassification", self.defended_misclassification),
        ];
        for (k, v) in opt {
            if let Some(v) = v {
                m.insert(k, v);
            }
        }
        m
    }
}

/// Per-seed facts about the clean setting.
#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct VictimRow {
    pub seed: u64,
    pub val_accuracy: f64,
    pub clean_misclassification: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, SerializeDerive, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, SerializeDerive, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config_hash: String,
    pub provenance: String,
    pub ablation: String,
    pub seeds: Vec<u64>,
    pub victims: Vec<VictimRow>,
    pub rows: Vec<SeedRow>,
    /// attacker -> metric -> mean and std over seeds.
    pub summary: BTreeMap<String, BTreeMap<String, MeanStd>>,
    pub wall_clock_seconds: f64,
}

pub const SCHEMA: &str = "janus-report/1";

pub fn summarize(rows: &[SeedRow]) -> BTreeMap<String, BTreeMap<String, MeanStd>> {
    let mut acc: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let slot = acc.entry(r.attacker.clone()).or_default();
        for (k, v) in r.metrics() {
            slot.entry(k.to_string()).or_default().push(v);
        }
    }
    acc.into_iter()
        .map(|(a, m)| (a, m.into_iter().map(|(k, xs)| (k, MeanStd::of(&xs))).collect()))
        .collect()
}

pub fn write_report(r: &RunReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, to_json_pretty(r)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
