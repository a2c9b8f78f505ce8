use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{build_dataset, Dataset, IngestConfig, LabelRow, RawSample, RoomMeta};
use crate::error::{Error, Result};

pub const SENSORS_FILE: &str = "sensors.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const ROOM_FILE: &str = "room.json";

const SENSOR_HEADER: [&str; 4] = ["timestamp", "device_id", "co2_a", "co2_b"];
const LABEL_HEADER: [&str; 3] = ["timestamp", "occupants", "ventilation"];

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("`{s}` is not an ISO-8601 timestamp: {e}"))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, want: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if got != want {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            field: "header".into(),
            msg: format!("expected `{}`, got `{}`", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn parse_field<T, F>(path: &Path, line: u64, field: &str, raw: &str, f: F) -> Result<T>
where
    F: FnOnce(&str) -> std::result::Result<T, String>,
{
    f(raw).map_err(|msg| Error::Parse {
        path: path.into(),
        line,
        field: field.into(),
        msg,
    })
}

fn opt_f64(raw: &str) -> std::result::Result<Option<f64>, String> {
    let t = raw.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("`{t}` is not a number"))
}

pub fn read_sensor_csv(path: &Path) -> Result<Vec<RawSample>> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &SENSOR_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or("");
        let timestamp = parse_field(path, line, "timestamp", get(0), parse_timestamp)?;
        let device_id = get(1).trim().to_string();
        if device_id.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                field: "device_id".into(),
                msg: "empty".into(),
            });
        }
        let co2_a = parse_field(path, line, "co2_a", get(2), opt_f64)?;
        let co2_b = parse_field(path, line, "co2_b", get(3), opt_f64)?;
        out.push(RawSample {
            timestamp,
            device_id,
            co2_a,
            co2_b,
        });
    }
    Ok(out)
}

pub fn read_label_csv(path: &Path) -> Result<Vec<LabelRow>> {
    let mut rdr = open_reader(path)?;
    check_header(path, &mut rdr, &LABEL_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or("");
        let timestamp = parse_field(path, line, "timestamp", get(0), parse_timestamp)?;
        let occupants = parse_field(path, line, "occupants", get(1), |s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| format!("`{s}` is not a non-negative integer"))
        })?;
        let ventilation = parse_field(path, line, "ventilation", get(2), |s| {
            let v = opt_f64(s)?;
            match v {
                Some(r) if !(0.0..=1.0).contains(&r) => Err(format!("{r} outside [0, 1]")),
                _ => Ok(v),
            }
        })?;
        out.push(LabelRow {
            timestamp,
            occupants,
            ventilation,
        });
    }
    Ok(out)
}

pub fn read_room_meta(path: &Path) -> Result<RoomMeta> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let room: RoomMeta = serde_json::from_str(&text)?;
    room.validate()?;
    Ok(room)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

pub fn write_sensor_csv(path: &Path, samples: &[RawSample]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", SENSOR_HEADER.join(",")).map_err(io)?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{}",
            format_timestamp(&s.timestamp),
            s.device_id,
            fmt_opt(s.co2_a),
            fmt_opt(s.co2_b)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_label_csv(path: &Path, labels: &[LabelRow]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", LABEL_HEADER.join(",")).map_err(io)?;
    for l in labels {
        let vent = l.ventilation.map(|v| format!("{v:.3}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{}",
            format_timestamp(&l.timestamp),
            l.occupants,
            vent
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_room_meta(path: &Path, room: &RoomMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(room)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads `sensors.csv`, `labels.csv` and `room.json` from `dir`.
pub fn load_dataset_dir(dir: &Path, cfg: &IngestConfig) -> Result<Dataset> {
    let room = read_room_meta(&dir.join(ROOM_FILE))?;
    let samples = read_sensor_csv(&dir.join(SENSORS_FILE))?;
    let labels = read_label_csv(&dir.join(LABELS_FILE))?;
    build_dataset(&samples, &labels, &room, cfg)
}
