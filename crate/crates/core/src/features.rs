//! Temporal (AVG, FD) and spatial (VD, FDVD, HD) CO₂ features plus the
//! window-opening rating (VENT).

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, DeviceMeta, RoomMeta};
use crate::matrix::Matrix;

/// Minimum height separation of a vertical pair, in metres.
pub const VERTICAL_MIN_DH_M: f64 = 1.0;

/// Feature kinds in canonical column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureKind {
    Avg,
    Fd,
    Vd,
    Fdvd,
    Hd,
    Vent,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Avg,
        FeatureKind::Fd,
        FeatureKind::Vd,
        FeatureKind::Fdvd,
        FeatureKind::Hd,
        FeatureKind::Vent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Avg => "AVG",
            FeatureKind::Fd => "FD",
            FeatureKind::Vd => "VD",
            FeatureKind::Fdvd => "FDVD",
            FeatureKind::Hd => "HD",
            FeatureKind::Vent => "VENT",
        }
    }

    pub fn is_difference(self) -> bool {
        matches!(self, FeatureKind::Fd | FeatureKind::Fdvd)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| {
                Error::invalid(
                    "features",
                    format!("unknown feature `{t}`; valid: avg,fd,vd,fdvd,hd,vent"),
                )
            })
    }
}

/// Parses a comma list such as `avg,fd,vd` into a canonical feature set.
pub fn parse_feature_list(s: &str) -> Result<BTreeSet<FeatureKind>> {
    let set: BTreeSet<FeatureKind> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if set.is_empty() {
        return Err(Error::invalid("features", "empty feature list"));
    }
    Ok(set)
}

pub fn feature_set_label(kinds: &BTreeSet<FeatureKind>) -> String {
    kinds
        .iter()
        .map(|k| k.name())
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Which features to compute, and from which device pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kinds: BTreeSet<FeatureKind>,
    /// (upper, lower)
    pub vd_pair: Option<(String, String)>,
    /// (near window, far from window)
    pub hd_pair: Option<(String, String)>,
}

impl FeatureSpec {
    /// Resolves the device pairs a feature set needs from the room layout.
    pub fn for_room(kinds: BTreeSet<FeatureKind>, room: &RoomMeta) -> Result<Self> {
        let vd_pair = if kinds.contains(&FeatureKind::Vd) || kinds.contains(&FeatureKind::Fdvd) {
            Some(select_vertical_pair(&room.devices)?)
        } else {
            None
        };
        let hd_pair = if kinds.contains(&FeatureKind::Hd) {
            Some(select_horizontal_pair(&room.devices)?)
        } else {
            None
        };
        Ok(FeatureSpec {
            kinds,
            vd_pair,
            hd_pair,
        })
    }

    pub fn column_names(&self) -> Vec<String> {
        self.kinds.iter().map(|k| k.name().to_string()).collect()
    }

    fn check(&self, ds: &Dataset) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::invalid("features", "empty feature set"));
        }
        let needs_vd =
            self.kinds.contains(&FeatureKind::Vd) || self.kinds.contains(&FeatureKind::Fdvd);
        let pairs = [
            (needs_vd, &self.vd_pair, "vd_pair"),
            (
                self.kinds.contains(&FeatureKind::Hd),
                &self.hd_pair,
                "hd_pair",
            ),
        ];
        for (needed, pair, field) in pairs {
            if !needed {
                continue;
            }
            let (a, b) = pair
                .as_ref()
                .ok_or_else(|| Error::invalid(field, "required by the feature set"))?;
            for id in [a, b] {
                if !ds.series.contains_key(id) {
                    return Err(Error::invalid(
                        field,
                        format!("device `{id}` not in dataset"),
                    ));
                }
            }
        }
        if self.kinds.contains(&FeatureKind::Vent) && ds.ventilation.is_none() {
            return Err(Error::invalid(
                "ventilation",
                "VENT selected but dataset has no ratings",
            ));
        }
        Ok(())
    }
}

fn horizontal_distance(a: &DeviceMeta, b: &DeviceMeta) -> f64 {
    match (a.x_m, a.y_m, b.x_m, b.y_m) {
        (Some(ax), Some(ay), Some(bx), Some(by)) => (ax - bx).hypot(ay - by),
        _ => (a.distance_to_window_m - b.distance_to_window_m).abs(),
    }
}

fn id_key<'a>(a: &'a DeviceMeta, b: &'a DeviceMeta) -> (&'a str, &'a str) {
    if a.device_id <= b.device_id {
        (&a.device_id, &b.device_id)
    } else {
        (&b.device_id, &a.device_id)
    }
}

fn pairs(devices: &[DeviceMeta]) -> impl Iterator<Item = (&DeviceMeta, &DeviceMeta)> {
    devices
        .iter()
        .enumerate()
        .flat_map(move |(i, a)| devices[i + 1..].iter().map(move |b| (a, b)))
}

/// Picks the horizontally closest pair whose heights differ by more than
/// 1 m. Returns `(upper, lower)`.
pub fn select_vertical_pair(devices: &[DeviceMeta]) -> Result<(String, String)> {
    if devices.len() < 2 {
        return Err(Error::invalid("devices", "need at least two devices"));
    }
    let best = pairs(devices)
        .filter(|(a, b)| (a.height_m - b.height_m).abs() > VERTICAL_MIN_DH_M)
        .min_by(|(a1, b1), (a2, b2)| {
            horizontal_distance(a1, b1)
                .total_cmp(&horizontal_distance(a2, b2))
                .then_with(|| id_key(a1, b1).cmp(&id_key(a2, b2)))
        })
        .ok_or(Error::NoVerticalPair)?;
    let (a, b) = best;
    let (hi, lo) = if a.height_m > b.height_m {
        (a, b)
    } else {
        (b, a)
    };
    Ok((hi.device_id.clone(), lo.device_id.clone()))
}

/// Picks the pair spanning the room away from the windows with the smallest
/// height difference: minimal |Δheight| first, then the widest spread in
/// distance to the window. Returns `(near, far)`.
pub fn select_horizontal_pair(devices: &[DeviceMeta]) -> Result<(String, String)> {
    if devices.len() < 2 {
        return Err(Error::invalid("devices", "need at least two devices"));
    }
    let best = pairs(devices)
        .filter(|(a, b)| a.distance_to_window_m != b.distance_to_window_m)
        .min_by(|(a1, b1), (a2, b2)| {
            let dh1 = (a1.height_m - b1.height_m).abs();
            let dh2 = (a2.height_m - b2.height_m).abs();
            let dd1 = (a1.distance_to_window_m - b1.distance_to_window_m).abs();
            let dd2 = (a2.distance_to_window_m - b2.distance_to_window_m).abs();
            dh1.total_cmp(&dh2)
                .then_with(|| dd2.total_cmp(&dd1))
                .then_with(|| id_key(a1, b1).cmp(&id_key(a2, b2)))
        })
        .ok_or_else(|| {
            Error::DegenerateHorizontal("all devices share the same distance to the window".into())
        })?;
    let (a, b) = best;
    let (near, far) = if a.distance_to_window_m < b.distance_to_window_m {
        (a, b)
    } else {
        (b, a)
    };
    Ok((near.device_id.clone(), far.device_id.clone()))
}

/// Feature rows with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub x: Matrix,
    /// Occupant count per row.
    pub occupants: Vec<u32>,
    /// Grid index in the source dataset for each row.
    pub grid_index: Vec<usize>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    /// Appends an extra named column (e.g. a probe feature).
    pub fn push_column(&mut self, name: &str, values: &[f64]) -> Result<()> {
        self.x.push_column(values)?;
        self.columns.push(name.to_string());
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let f = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "{},occupants", self.columns.join(",")).map_err(io)?;
        for (row, occ) in self.x.rows().zip(&self.occupants) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{occ}", cells.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn diff(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    out.push(0.0);
    out.extend(v.windows(2).map(|w| w[1] - w[0]));
    out
}

/// Computes the selected columns; when FD or FDVD is present the first grid
/// point is dropped rather than padded.
pub fn build_features(ds: &Dataset, spec: &FeatureSpec) -> Result<FeatureMatrix> {
    spec.check(ds)?;
    let n = ds.len();
    let skip = usize::from(spec.kinds.iter().any(|k| k.is_difference()));
    if n <= skip {
        return Err(Error::invalid(
            "dataset",
            format!("{n} grid points is too short"),
        ));
    }

    let devices = ds.series.len() as f64;
    let avg: Vec<f64> = (0..n)
        .map(|t| ds.series.values().map(|s| s[t]).sum::<f64>() / devices)
        .collect();
    let pair_diff = |pair: &Option<(String, String)>| -> Vec<f64> {
        let (a, b) = pair.as_ref().expect("pair checked");
        ds.series[a]
            .iter()
            .zip(&ds.series[b])
            .map(|(x, y)| x - y)
            .collect()
    };

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut vd = None;
    for kind in &spec.kinds {
        let col = match kind {
            FeatureKind::Avg => avg.clone(),
            FeatureKind::Fd => diff(&avg),
            FeatureKind::Vd => vd.get_or_insert_with(|| pair_diff(&spec.vd_pair)).clone(),
            FeatureKind::Fdvd => diff(vd.get_or_insert_with(|| pair_diff(&spec.vd_pair))),
            FeatureKind::Hd => pair_diff(&spec.hd_pair),
            FeatureKind::Vent => ds.ventilation.clone().expect("ventilation checked"),
        };
        columns.push(col);
    }

    let rows = n - skip;
    let mut x = Matrix::zeros(rows, columns.len());
    for (j, col) in columns.iter().enumerate() {
        x.set_column(j, &col[skip..]);
    }
    Ok(FeatureMatrix {
        columns: spec.column_names(),
        x,
        occupants: ds.labels[skip..].to_vec(),
        grid_index: (skip..n).collect(),
    })
}
