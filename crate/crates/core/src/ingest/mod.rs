//! Sensor ingestion: paired-sensor averaging, nearest-neighbour gap filling,
//! aggregation onto a coarse grid and min-max normalization.

mod files;

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use files::{
    format_timestamp, load_dataset_dir, parse_timestamp, read_label_csv, read_room_meta,
    read_sensor_csv, write_label_csv, write_room_meta, write_sensor_csv, LABELS_FILE, ROOM_FILE,
    SENSORS_FILE,
};

/// Plausible range of a CO₂ reading in ppm.
pub const CO2_RANGE_PPM: (f64, f64) = (0.0, 50_000.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceMeta {
    pub device_id: String,
    pub height_m: f64,
    pub distance_to_window_m: f64,
    /// Optional horizontal coordinates; when both devices of a pair carry
    /// them, pair selection uses the Euclidean horizontal distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_m: Option<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub position_label: String,
}

impl DeviceMeta {
    pub fn new(id: &str, height_m: f64, distance_to_window_m: f64) -> Self {
        DeviceMeta {
            device_id: id.to_string(),
            height_m,
            distance_to_window_m,
            x_m: None,
            y_m: None,
            position_label: String::new(),
        }
    }
}

/// Room dimensions and installed devices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomMeta {
    pub room_id: String,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub devices: Vec<DeviceMeta>,
}

impl RoomMeta {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length_m", self.length_m),
            ("width_m", self.width_m),
            ("height_m", self.height_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.devices {
            if !seen.insert(d.device_id.as_str()) {
                return Err(Error::invalid(
                    "device_id",
                    format!("duplicate device `{}`", d.device_id),
                ));
            }
            if !(d.height_m.is_finite() && d.height_m > 0.0) {
                return Err(Error::invalid(
                    "height_m",
                    format!("device `{}`: must be > 0", d.device_id),
                ));
            }
            if !(d.distance_to_window_m.is_finite() && d.distance_to_window_m >= 0.0) {
                return Err(Error::invalid(
                    "distance_to_window_m",
                    format!("device `{}`: must be >= 0", d.device_id),
                ));
            }
        }
        Ok(())
    }

    pub fn volume_m3(&self) -> f64 {
        self.length_m * self.width_m * self.height_m
    }

    pub fn device(&self, id: &str) -> Option<&DeviceMeta> {
        self.devices.iter().find(|d| d.device_id == id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawSample {
    pub timestamp: DateTime<Utc>,
    pub device_id: String,
    pub co2_a: Option<f64>,
    pub co2_b: Option<f64>,
}

/// One row of the label file: occupant count and window rating valid from
/// `timestamp` until the next row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelRow {
    pub timestamp: DateTime<Utc>,
    pub occupants: u32,
    pub ventilation: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Summer,
}

impl Season {
    /// April through September count as summer.
    pub fn of(ts: &DateTime<Utc>) -> Season {
        if (4..=9).contains(&ts.month()) {
            Season::Summer
        } else {
            Season::Winter
        }
    }
}

/// Device series, labels and ventilation ratings on a common grid.
///
/// Grid points are spaced by multiples of `interval_s`; spans without any
/// data (nights, weekends) are simply absent.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub interval_s: u32,
    pub grid: Vec<DateTime<Utc>>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub labels: Vec<u32>,
    pub ventilation: Option<Vec<f64>>,
    pub room: RoomMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if self.labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.labels.len(),
            });
        }
        for (id, s) in &self.series {
            if s.len() != n {
                return Err(Error::invalid(
                    "series",
                    format!("device `{id}` has {} points, grid has {n}", s.len()),
                ));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "series",
                    format!("device `{id}` not finite"),
                ));
            }
        }
        if let Some(v) = &self.ventilation {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: v.len(),
                });
            }
            if v.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::invalid("ventilation", "rating outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn seasons(&self) -> Vec<Season> {
        self.grid.iter().map(Season::of).collect()
    }
}

/// Mean of the present readings of a two-sensor device.
pub fn pair_average(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        (Some(v), None) | (None, Some(v)) => Some(v),
        (None, None) => None,
    }
}

/// Replaces every missing point with the temporally nearest present value;
/// equidistant gaps take the earlier neighbour.
pub fn fill_missing(series: &[Option<f64>], device_id: &str) -> Result<Vec<f64>> {
    let n = series.len();
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut last = None;
    for (i, v) in series.iter().enumerate() {
        if v.is_some() {
            last = Some(i);
        }
        prev[i] = last;
    }
    if last.is_none() {
        return Err(Error::EmptySeries(device_id.to_string()));
    }
    let mut out = vec![0.0; n];
    let mut next = None;
    for i in (0..n).rev() {
        if series[i].is_some() {
            next = Some(i);
        }
        let src = match (prev[i], next) {
            (Some(p), Some(q)) => {
                if i - p <= q - i {
                    p
                } else {
                    q
                }
            }
            (Some(p), None) => p,
            (None, Some(q)) => q,
            (None, None) => unreachable!("series has at least one value"),
        };
        out[i] = series[src].expect("source index holds a value");
    }
    Ok(out)
}

fn bin_ratio(native_s: u32, target_s: u32) -> Result<usize> {
    if native_s == 0 || target_s == 0 || !target_s.is_multiple_of(native_s) {
        return Err(Error::invalid(
            "interval",
            format!("target {target_s} s is not a positive multiple of native {native_s} s"),
        ));
    }
    Ok((target_s / native_s) as usize)
}

/// Bin means of a contiguous native-rate series; a partial trailing bin is
/// averaged over the points it has.
pub fn aggregate(series: &[f64], native_s: u32, target_s: u32) -> Result<Vec<f64>> {
    let ratio = bin_ratio(native_s, target_s)?;
    Ok(series
        .chunks(ratio)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub native_interval_s: u32,
    pub target_interval_s: u32,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            native_interval_s: 15,
            target_interval_s: 300,
        }
    }
}

/// Turns raw records into a gridded [`Dataset`].
///
/// Native timestamps are the union over devices; each device is averaged
/// across its two sensors, gap-filled on that union, then binned into
/// epoch-aligned windows of `target_interval_s`. Each bin takes the label
/// valid at its start.
pub fn build_dataset(
    samples: &[RawSample],
    labels: &[LabelRow],
    room: &RoomMeta,
    cfg: &IngestConfig,
) -> Result<Dataset> {
    room.validate()?;
    bin_ratio(cfg.native_interval_s, cfg.target_interval_s)?;
    if room.devices.is_empty() {
        return Err(Error::invalid("devices", "room has no devices"));
    }

    let mut last_ts: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    for s in samples {
        if room.device(&s.device_id).is_none() {
            return Err(Error::invalid(
                "device_id",
                format!("`{}` is not listed in the room metadata", s.device_id),
            ));
        }
        for v in [s.co2_a, s.co2_b].into_iter().flatten() {
            if !(CO2_RANGE_PPM.0..=CO2_RANGE_PPM.1).contains(&v) {
                return Err(Error::invalid(
                    "co2",
                    format!("{v} ppm outside [0, 50000] for `{}`", s.device_id),
                ));
            }
        }
        if let Some(prev) = last_ts.insert(&s.device_id, s.timestamp) {
            if s.timestamp < prev {
                return Err(Error::invalid(
                    "timestamp",
                    format!("decreasing timestamps for device `{}`", s.device_id),
                ));
            }
        }
    }

    let mut native: Vec<DateTime<Utc>> = samples.iter().map(|s| s.timestamp).collect();
    native.sort_unstable();
    native.dedup();
    if native.is_empty() {
        return Err(Error::invalid("samples", "no sensor samples"));
    }
    let pos: BTreeMap<DateTime<Utc>, usize> =
        native.iter().enumerate().map(|(i, t)| (*t, i)).collect();

    let mut raw: BTreeMap<&str, Vec<Option<f64>>> = room
        .devices
        .iter()
        .map(|d| (d.device_id.as_str(), vec![None; native.len()]))
        .collect();
    for s in samples {
        let slot =
            &mut raw.get_mut(s.device_id.as_str()).expect("device checked")[pos[&s.timestamp]];
        // a later duplicate record for the same instant wins
        if let Some(v) = pair_average(s.co2_a, s.co2_b) {
            *slot = Some(v);
        }
    }

    let target = i64::from(cfg.target_interval_s);
    let bin_of = |t: &DateTime<Utc>| t.timestamp().div_euclid(target);
    let mut bins: Vec<(i64, usize, usize)> = Vec::new();
    for (i, t) in native.iter().enumerate() {
        let b = bin_of(t);
        match bins.last_mut() {
            Some((key, _, end)) if *key == b => *end = i + 1,
            _ => bins.push((b, i, i + 1)),
        }
    }
    let grid: Vec<DateTime<Utc>> = bins
        .iter()
        .map(|(b, _, _)| {
            Utc.timestamp_opt(b * target, 0)
                .single()
                .expect("valid epoch")
        })
        .collect();

    let mut series = BTreeMap::new();
    for (id, vals) in raw {
        let filled = fill_missing(&vals, id)?;
        let coarse = bins
            .iter()
            .map(|&(_, s, e)| filled[s..e].iter().sum::<f64>() / (e - s) as f64)
            .collect();
        series.insert(id.to_string(), coarse);
    }

    let mut sorted_labels: Vec<&LabelRow> = labels.iter().collect();
    sorted_labels.sort_by_key(|l| l.timestamp);
    if sorted_labels.is_empty() {
        return Err(Error::invalid("labels", "no label rows"));
    }
    let mut occ = Vec::with_capacity(grid.len());
    let mut vent = Vec::with_capacity(grid.len());
    for start in &grid {
        let end = *start + chrono::Duration::seconds(target);
        let idx = sorted_labels.partition_point(|l| l.timestamp <= *start);
        let row = if idx > 0 {
            sorted_labels[idx - 1]
        } else if sorted_labels[0].timestamp < end {
            sorted_labels[0]
        } else {
            return Err(Error::invalid(
                "labels",
                format!("no label covers {}", format_timestamp(start)),
            ));
        };
        occ.push(row.occupants);
        vent.push(row.ventilation);
    }
    let ventilation = if vent.iter().all(Option::is_none) {
        None
    } else {
        Some(fill_missing(&vent, "ventilation")?)
    };

    let ds = Dataset {
        interval_s: cfg.target_interval_s,
        grid,
        series,
        labels: occ,
        ventilation,
        room: room.clone(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Per-column min-max statistics fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub source: String,
}

impl NormStats {
    /// Fits on the given rows of `x` only.
    pub fn fit(x: &Matrix, rows: &[usize], source: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid(
                "rows",
                "cannot fit normalization on zero rows",
            ));
        }
        let d = x.n_cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for &i in rows {
            for (j, v) in x.row(i).iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Ok(NormStats {
            min,
            max,
            source: source.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, (v, o)) in row.iter().zip(out.iter_mut()).enumerate() {
            *o = normalize_value(*v, self.min[j], self.max[j]);
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.n_cols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.n_cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..x.n_rows() {
            self.apply_row(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// Inverse of [`NormStats::apply`] for non-constant columns.
    pub fn invert(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.n_rows() {
            for j in 0..x.n_cols() {
                let span = self.max[j] - self.min[j];
                out.set(i, j, self.min[j] + x.get(i, j) * span);
            }
        }
        out
    }
}

/// `(x - min) / (max - min)`, or 0 for a constant column.
pub fn normalize_value(x: f64, min: f64, max: f64) -> f64 {
    let span = max - min;
    if span > 0.0 {
        (x - min) / span
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(s, 0).unwrap()
    }

    #[test]
    fn pair_average_cases() {
        assert_eq!(pair_average(Some(500.0), Some(500.0)), Some(500.0));
        assert_eq!(pair_average(Some(400.0), Some(420.0)), Some(410.0));
        assert_eq!(pair_average(Some(480.0), None), Some(480.0));
        assert_eq!(pair_average(None, Some(480.0)), Some(480.0));
        assert_eq!(pair_average(None, None), None);
    }

    #[test]
    fn fill_missing_examples() {
        let f = |s: &[Option<f64>]| fill_missing(s, "d").unwrap();
        assert_eq!(
            f(&[Some(400.0), None, Some(406.0)]),
            vec![400.0, 400.0, 406.0]
        );
        assert_eq!(f(&[None, Some(500.0)]), vec![500.0, 500.0]);
        assert_eq!(
            f(&[Some(400.0), None, None, None, Some(480.0)]),
            vec![400.0, 400.0, 400.0, 480.0, 480.0]
        );
        assert_eq!(f(&[Some(1.0), None, None]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn fill_missing_all_missing_names_device() {
        let err = fill_missing(&[None, None], "dev-7").unwrap_err();
        assert!(err.to_string().contains("dev-7"));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[600.0; 20], 15, 300).unwrap(), vec![600.0]);
        assert_eq!(aggregate(&[400.0, 500.0], 15, 30).unwrap(), vec![450.0]);
        assert_eq!(aggregate(&[1.0, 2.0, 3.0], 15, 30).unwrap(), vec![1.5, 3.0]);
        assert!(aggregate(&[1.0], 15, 20).is_err());
        assert!(aggregate(&[1.0], 15, 0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let x = Matrix::from_rows(&[[400.0, 700.0], [600.0, 700.0], [500.0, 700.0]]).unwrap();
        let stats = NormStats::fit(&x, &[0, 1, 2], "train").unwrap();
        let n = stats.apply(&x).unwrap();
        assert_eq!(n.column(0), vec![0.0, 1.0, 0.5]);
        assert_eq!(n.column(1), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize_value(650.0, 400.0, 600.0), 1.25);
    }

    fn room() -> RoomMeta {
        RoomMeta {
            room_id: "r".into(),
            length_m: 8.0,
            width_m: 7.0,
            height_m: 3.0,
            devices: vec![
                DeviceMeta::new("a", 0.6, 1.0),
                DeviceMeta::new("b", 2.0, 1.0),
            ],
        }
    }

    fn sample(t: i64, id: &str, a: Option<f64>, b: Option<f64>) -> RawSample {
        RawSample {
            timestamp: ts(t),
            device_id: id.into(),
            co2_a: a,
            co2_b: b,
        }
    }

    #[test]
    fn build_dataset_bins_fills_and_labels() {
        // two 30 s bins at 15 s native, device b misses one instant
        let samples = vec![
            sample(0, "a", Some(400.0), Some(420.0)),
            sample(0, "b", Some(500.0), None),
            sample(15, "a", Some(420.0), Some(420.0)),
            sample(15, "b", None, None),
            sample(30, "a", Some(430.0), None),
            sample(30, "b", Some(520.0), Some(520.0)),
        ];
        let labels = vec![
            LabelRow {
                timestamp: ts(0),
                occupants: 3,
                ventilation: Some(0.0),
            },
            LabelRow {
                timestamp: ts(15),
                occupants: 5,
                ventilation: None,
            },
        ];
        let cfg = IngestConfig {
            native_interval_s: 15,
            target_interval_s: 30,
        };
        let ds = build_dataset(&samples, &labels, &room(), &cfg).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.series["a"], vec![415.0, 430.0]);
        // b at t=15 is equidistant from t=0 and t=30, takes the earlier 500
        assert_eq!(ds.series["b"], vec![500.0, 520.0]);
        assert_eq!(ds.labels, vec![3, 5]);
        assert_eq!(ds.ventilation, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn build_dataset_rejects_unknown_device_and_bad_ppm() {
        let cfg = IngestConfig::default();
        let labels = vec![LabelRow {
            timestamp: ts(0),
            occupants: 0,
            ventilation: None,
        }];
        let bad = vec![sample(0, "zz", Some(400.0), None)];
        assert!(build_dataset(&bad, &labels, &room(), &cfg).is_err());
        let bad = vec![sample(0, "a", Some(60_000.0), None)];
        assert!(build_dataset(&bad, &labels, &room(), &cfg).is_err());
    }

    #[test]
    fn device_without_readings_is_named() {
        let cfg = IngestConfig::default();
        let labels = vec![LabelRow {
            timestamp: ts(0),
            occupants: 0,
            ventilation: None,
        }];
        let only_a = vec![sample(0, "a", Some(400.0), None)];
        let err = build_dataset(&only_a, &labels, &room(), &cfg).unwrap_err();
        assert!(matches!(err, Error::EmptySeries(ref d) if d == "b"));
    }
}
