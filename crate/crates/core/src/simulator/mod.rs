//! Two-zone well-mixed classroom model.
//!
//! The room is split at `split_height_m` into a lower and an upper zone.
//! Occupants exhale into the upper zone (thermal plumes carry breath
//! upward); the zones exchange air at a base rate plus a per-occupant plume
//! term, and both zones exchange with outdoors through infiltration and
//! open windows:
//!
//! ```text
//! V_l dC_l/dt = q (C_u - C_l) + λ V_l (C_out - C_l)
//! V_u dC_u/dt = n G + q (C_l - C_u) + λ V_u (C_out - C_u)
//! q = q_base + n q_plume,   λ = (ach_inf + opening * ach_window) / 3600
//! ```

mod presets;
mod schedule;

use std::path::Path;

use chrono::Duration;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{self, Dataset, DeviceMeta, IngestConfig, LabelRow, RawSample, RoomMeta};
use crate::rng::rng_for;

pub use presets::{
    default_days, default_rooms, default_scenarios, school_schedule, Scenario, DEFAULT_SEED,
};
pub use schedule::{Change, Schedule, Span};

/// ppm per (L/s of pure CO₂ per m³ of air) per second.
const PPM_PER_LPS: f64 = 1e-3 * 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub room: RoomMeta,
    /// Devices at or above this height read the upper zone.
    pub split_height_m: f64,
    pub outdoor_ppm: f64,
    /// Exhaled CO₂ per occupant, L/s.
    pub emission_lps_per_person: f64,
    /// Base inter-zone exchange, m³/s.
    pub interzone_base_m3s: f64,
    /// Additional inter-zone exchange per occupant (plume), m³/s.
    pub plume_m3s_per_person: f64,
    /// Air changes per hour with every window fully open.
    pub window_ach_open: f64,
    /// Air changes per hour with all windows closed.
    pub infiltration_ach: f64,
    pub sensor_noise_sd_ppm: f64,
    pub noise_clip_ppm: f64,
    /// Devices at most this far from the window see outdoor air mixing in
    /// while any window is open.
    pub near_window_m: f64,
    pub near_window_blend: f64,
    /// Integration step, s.
    pub dt_s: u32,
    /// Sensor sampling interval, s; a multiple of `dt_s`.
    pub sample_interval_s: u32,
    pub initial_ppm: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    /// Defaults for a room: outdoor 420 ppm, 0.0035 L/s per occupant,
    /// 0.15 m³/s + 0.004 m³/s per occupant between zones, 8 ACH with windows
    /// open, 10 ppm sensor noise clipped at ±30 ppm.
    pub fn for_room(room: RoomMeta, seed: u64) -> Self {
        SimConfig {
            room,
            split_height_m: 1.5,
            outdoor_ppm: 420.0,
            emission_lps_per_person: 0.0035,
            interzone_base_m3s: 0.15,
            plume_m3s_per_person: 0.004,
            window_ach_open: 8.0,
            infiltration_ach: 0.15,
            sensor_noise_sd_ppm: 10.0,
            noise_clip_ppm: 30.0,
            near_window_m: 1.0,
            near_window_blend: 0.3,
            dt_s: 15,
            sample_interval_s: 15,
            initial_ppm: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if self.room.devices.is_empty() {
            return Err(Error::invalid("room.devices", "no devices"));
        }
        if !(self.split_height_m > 0.0 && self.split_height_m < self.room.height_m) {
            return Err(Error::invalid(
                "split_height_m",
                format!(
                    "must lie strictly inside the room height {}",
                    self.room.height_m
                ),
            ));
        }
        let positive = [
            ("outdoor_ppm", self.outdoor_ppm),
            ("emission_lps_per_person", self.emission_lps_per_person),
            ("interzone_base_m3s", self.interzone_base_m3s),
            ("plume_m3s_per_person", self.plume_m3s_per_person),
            ("window_ach_open", self.window_ach_open),
            ("noise_clip_ppm", self.noise_clip_ppm),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("infiltration_ach", self.infiltration_ach),
            ("sensor_noise_sd_ppm", self.sensor_noise_sd_ppm),
            ("near_window_m", self.near_window_m),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, format!("must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.near_window_blend) {
            return Err(Error::invalid("near_window_blend", "must lie in [0, 1]"));
        }
        if self.dt_s == 0 || self.dt_s > 15 {
            return Err(Error::invalid(
                "dt_s",
                format!("must be in 1..=15, got {}", self.dt_s),
            ));
        }
        if self.sample_interval_s == 0 || !self.sample_interval_s.is_multiple_of(self.dt_s) {
            return Err(Error::invalid(
                "sample_interval_s",
                "must be a positive multiple of dt_s",
            ));
        }
        if let Some(c) = self.initial_ppm {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::invalid("initial_ppm", "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn floor_area_m2(&self) -> f64 {
        self.room.length_m * self.room.width_m
    }

    pub fn lower_volume_m3(&self) -> f64 {
        self.floor_area_m2() * self.split_height_m
    }

    pub fn upper_volume_m3(&self) -> f64 {
        self.floor_area_m2() * (self.room.height_m - self.split_height_m)
    }

    pub fn is_upper(&self, device: &DeviceMeta) -> bool {
        device.height_m >= self.split_height_m
    }
}

/// Zone concentrations in ppm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneState {
    pub lower: f64,
    pub upper: f64,
}

impl ZoneState {
    pub fn uniform(ppm: f64) -> Self {
        ZoneState {
            lower: ppm,
            upper: ppm,
        }
    }

    /// Total CO₂ held by the room, ppm·m³.
    pub fn mass(&self, cfg: &SimConfig) -> f64 {
        self.lower * cfg.lower_volume_m3() + self.upper * cfg.upper_volume_m3()
    }
}

/// Time derivative of the zone concentrations, ppm/s.
pub fn derivative(state: &ZoneState, cfg: &SimConfig, occupants: u32, opening: f64) -> ZoneState {
    let n = f64::from(occupants);
    let v_l = cfg.lower_volume_m3();
    let v_u = cfg.upper_volume_m3();
    let q = cfg.interzone_base_m3s + n * cfg.plume_m3s_per_person;
    let lambda = (cfg.infiltration_ach + opening * cfg.window_ach_open) / 3600.0;
    let source = n * cfg.emission_lps_per_person * PPM_PER_LPS;
    let exchange = q * (state.upper - state.lower);
    ZoneState {
        lower: (exchange + lambda * v_l * (cfg.outdoor_ppm - state.lower)) / v_l,
        upper: (source - exchange + lambda * v_u * (cfg.outdoor_ppm - state.upper)) / v_u,
    }
}

/// One explicit Euler step of length `dt` seconds.
pub fn step(
    state: &ZoneState,
    cfg: &SimConfig,
    occupants: u32,
    opening: f64,
    dt: f64,
) -> ZoneState {
    let d = derivative(state, cfg, occupants, opening);
    ZoneState {
        lower: state.lower + dt * d.lower,
        upper: state.upper + dt * d.upper,
    }
}

/// Noise-free reading of each device, in room device order.
pub fn true_readings(state: &ZoneState, cfg: &SimConfig, opening: f64) -> Vec<f64> {
    cfg.room
        .devices
        .iter()
        .map(|d| {
            let zone = if cfg.is_upper(d) {
                state.upper
            } else {
                state.lower
            };
            if opening > 0.0 && d.distance_to_window_m <= cfg.near_window_m {
                zone + cfg.near_window_blend * (cfg.outdoor_ppm - zone)
            } else {
                zone
            }
        })
        .collect()
}

/// One noisy reading per device. Noise is Gaussian with the configured
/// standard deviation, clipped to ±`noise_clip_ppm`.
pub fn sample_sensors<R: Rng>(
    state: &ZoneState,
    cfg: &SimConfig,
    opening: f64,
    rng: &mut R,
) -> Vec<f64> {
    let truth = true_readings(state, cfg, opening);
    if cfg.sensor_noise_sd_ppm == 0.0 {
        return truth;
    }
    let normal = Normal::new(0.0, cfg.sensor_noise_sd_ppm).expect("sd validated");
    truth
        .into_iter()
        .map(|v| {
            v + normal
                .sample(rng)
                .clamp(-cfg.noise_clip_ppm, cfg.noise_clip_ppm)
        })
        .collect()
}

/// Raw records of one simulation, in the ingest file formats.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub samples: Vec<RawSample>,
    pub labels: Vec<LabelRow>,
    pub room: RoomMeta,
}

impl SimRun {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        ingest::write_sensor_csv(&dir.join(ingest::SENSORS_FILE), &self.samples)?;
        ingest::write_label_csv(&dir.join(ingest::LABELS_FILE), &self.labels)?;
        ingest::write_room_meta(&dir.join(ingest::ROOM_FILE), &self.room)
    }

    pub fn to_dataset(&self, cfg: &IngestConfig) -> Result<Dataset> {
        ingest::build_dataset(&self.samples, &self.labels, &self.room, cfg)
    }
}

/// Integrates over the whole schedule and records two noisy sensor
/// readings per device, plus the label row, at every sampling instant
/// inside a recording span.
pub fn simulate(cfg: &SimConfig, schedule: &Schedule) -> Result<SimRun> {
    cfg.validate()?;
    schedule.validate()?;
    let mut rng: ChaCha8Rng = rng_for(cfg.seed, &[0x5e_45]);
    let mut state = ZoneState::uniform(cfg.initial_ppm.unwrap_or(cfg.outdoor_ppm));
    let dt = i64::from(cfg.dt_s);
    let steps = (schedule.end - schedule.start).num_seconds() / dt;
    let per_sample = i64::from(cfg.sample_interval_s / cfg.dt_s);
    let mut cursor = schedule.cursor();
    let mut samples = Vec::new();
    let mut labels = Vec::new();

    for k in 0..steps {
        let t = schedule.start + Duration::seconds(k * dt);
        let (occupants, opening) = cursor.at(t);
        if k % per_sample == 0 && schedule.is_recording(t) {
            let a = sample_sensors(&state, cfg, opening, &mut rng);
            let b = sample_sensors(&state, cfg, opening, &mut rng);
            for (d, (va, vb)) in cfg.room.devices.iter().zip(a.into_iter().zip(b)) {
                samples.push(RawSample {
                    timestamp: t,
                    device_id: d.device_id.clone(),
                    co2_a: Some(round2(va)),
                    co2_b: Some(round2(vb)),
                });
            }
            labels.push(LabelRow {
                timestamp: t,
                occupants,
                ventilation: Some(round3(opening)),
            });
        }
        state = step(&state, cfg, occupants, opening, dt as f64);
    }
    Ok(SimRun {
        samples,
        labels,
        room: cfg.room.clone(),
    })
}

// Readings are stored at the precision written to CSV so that in-memory
// and file-based pipelines see identical values.
fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Simulates and grids the result at the native sampling interval.
pub fn generate(cfg: &SimConfig, schedule: &Schedule) -> Result<Dataset> {
    let run = simulate(cfg, schedule)?;
    run.to_dataset(&IngestConfig {
        native_interval_s: cfg.sample_interval_s,
        target_interval_s: cfg.sample_interval_s,
    })
}
