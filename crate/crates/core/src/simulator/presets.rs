//! Synthetic school weeks for three classrooms.

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{Change, Schedule, Span};
use super::SimConfig;
use crate::ingest::{DeviceMeta, RoomMeta, Season};
use crate::rng::rng_for;

pub const DEFAULT_SEED: u64 = 42;

/// Lesson start times (hour, minute); every lesson lasts 45 minutes.
const SLOTS: [(u32, u32); 8] = [
    (8, 0),
    (8, 50),
    (9, 55),
    (10, 45),
    (11, 45),
    (12, 35),
    (13, 40),
    (14, 30),
];
const LESSON_MIN: i64 = 45;
/// Chance that a free slot hosts a small group (teacher and a few pupils).
const SMALL_GROUP_P: f64 = 0.4;
const SMALL_GROUP: (u32, u32) = (2, 5);
/// Chance that summer windows are closed when a lesson ends.
const SUMMER_CLOSE_P: f64 = 0.7;
const RECORD_FROM: (u32, u32) = (7, 30);
const RECORD_TO: (u32, u32) = (16, 30);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub config: SimConfig,
    pub schedule: Schedule,
}

fn at(day: NaiveDate, h: u32, m: u32) -> DateTime<Utc> {
    Utc.from_utc_datetime(&day.and_hms_opt(h, m, 0).expect("valid time"))
}

/// Five winter and five summer school days (Monday to Friday).
pub fn default_days() -> Vec<NaiveDate> {
    let winter = NaiveDate::from_ymd_opt(2021, 12, 13).expect("date");
    let summer = NaiveDate::from_ymd_opt(2022, 5, 30).expect("date");
    (0..5)
        .map(|d| winter + Duration::days(d))
        .chain((0..5).map(|d| summer + Duration::days(d)))
        .collect()
}

/// Scripted lessons with randomized attendance and teacher window habits.
///
/// Winter: windows stay closed during lessons and are often opened at the
/// end of a lesson for the break. Summer: windows are usually opened at the
/// start of a lesson. Free slots sometimes host a small group that leaves
/// the windows alone. Every window change happens while someone is present.
pub fn school_schedule(days: &[NaiveDate], count_range: (u32, u32), seed: u64) -> Schedule {
    assert!(!days.is_empty(), "at least one day");
    let mut occupancy = Vec::new();
    let mut opening: Vec<Change<f64>> = Vec::new();
    let mut recording = Vec::new();
    let mut seasons = std::collections::BTreeMap::new();
    let mut window = 0.0;
    let set_window =
        |opening: &mut Vec<Change<f64>>, t: DateTime<Utc>, v: f64, window: &mut f64| {
            if v != *window {
                opening.push(Change { at: t, value: v });
                *window = v;
            }
        };

    for (d, &day) in days.iter().enumerate() {
        let season = Season::of(&at(day, 12, 0));
        seasons.insert(day, season);
        recording.push(Span {
            start: at(day, RECORD_FROM.0, RECORD_FROM.1),
            end: at(day, RECORD_TO.0, RECORD_TO.1),
        });
        let mut rng = rng_for(seed, &[0xda7, d as u64]);
        for (s, &(h, m)) in SLOTS.iter().enumerate() {
            let p = if s < 6 { 0.75 } else { 0.35 };
            if !rng.random_bool(p) {
                if rng.random_bool(SMALL_GROUP_P) {
                    let start = at(day, h, m) + Duration::minutes(rng.random_range(0..=10));
                    let end = start + Duration::minutes(rng.random_range(20..=35));
                    occupancy.push(Change {
                        at: start,
                        value: rng.random_range(SMALL_GROUP.0..=SMALL_GROUP.1),
                    });
                    occupancy.push(Change { at: end, value: 0 });
                }
                continue;
            }
            let start = at(day, h, m);
            let end = start + Duration::minutes(LESSON_MIN);
            let count = rng.random_range(count_range.0..=count_range.1);
            occupancy.push(Change {
                at: start,
                value: count,
            });
            occupancy.push(Change { at: end, value: 0 });

            let settle = start + Duration::minutes(1);
            let closing = end - Duration::minutes(2);
            match season {
                Season::Winter => {
                    set_window(&mut opening, settle, 0.0, &mut window);
                    if rng.random_bool(0.2) {
                        set_window(
                            &mut opening,
                            start + Duration::minutes(20),
                            0.25,
                            &mut window,
                        );
                    }
                    let v = if rng.random_bool(0.6) { 1.0 } else { 0.0 };
                    set_window(&mut opening, closing, v, &mut window);
                }
                Season::Summer => {
                    let v = if rng.random_bool(0.85) {
                        if rng.random_bool(0.5) {
                            1.0
                        } else {
                            0.5
                        }
                    } else {
                        0.0
                    };
                    set_window(&mut opening, settle, v, &mut window);
                    if rng.random_bool(SUMMER_CLOSE_P) {
                        set_window(&mut opening, closing, 0.0, &mut window);
                    }
                }
            }
        }
    }
    Schedule {
        start: at(days[0], 0, 0),
        end: at(*days.last().expect("non-empty"), 0, 0) + Duration::days(1),
        occupancy,
        opening,
        recording,
        seasons,
    }
}

fn device(id: &str, height_m: f64, distance_to_window_m: f64, label: &str) -> DeviceMeta {
    DeviceMeta {
        position_label: label.to_string(),
        ..DeviceMeta::new(id, height_m, distance_to_window_m)
    }
}

/// The three default classrooms. Room 1 has every device at the same
/// distance from the window, so no horizontal pair exists there.
pub fn default_rooms() -> Vec<(RoomMeta, (u32, u32))> {
    vec![
        (
            RoomMeta {
                room_id: "room1".into(),
                length_m: 7.64,
                width_m: 7.55,
                height_m: 3.12,
                devices: vec![
                    device("43", 2.1, 3.0, "wall, high"),
                    device("37", 0.6, 3.0, "desk, low"),
                    device("12", 1.1, 3.0, "desk, seated head height"),
                ],
            },
            (6, 18),
        ),
        (
            RoomMeta {
                room_id: "room2".into(),
                length_m: 9.15,
                width_m: 6.70,
                height_m: 3.30,
                devices: vec![
                    device("19", 2.0, 0.5, "window wall, high"),
                    device("47", 0.6, 0.6, "window wall, low"),
                    device("09", 2.0, 6.0, "door wall, high"),
                    device("52", 1.1, 5.5, "door side desk"),
                ],
            },
            (16, 30),
        ),
        (
            RoomMeta {
                room_id: "room3".into(),
                length_m: 8.15,
                width_m: 7.05,
                height_m: 2.82,
                devices: vec![
                    device("24", 2.0, 0.6, "window wall, high"),
                    device("03", 0.6, 0.6, "window wall, low"),
                    device("15", 2.0, 6.5, "door wall, high"),
                    device("31", 1.1, 4.0, "centre desk"),
                ],
            },
            (14, 28),
        ),
    ]
}

/// Three rooms over [`default_days`], each with its own derived seed.
pub fn default_scenarios(seed: u64) -> Vec<Scenario> {
    let days = default_days();
    default_rooms()
        .into_iter()
        .enumerate()
        .map(|(r, (room, counts))| {
            let room_seed = crate::rng::derive_seed(seed, &[r as u64]);
            Scenario {
                name: room.room_id.clone(),
                schedule: school_schedule(&days, counts, room_seed),
                config: SimConfig::for_room(room, room_seed),
            }
        })
        .collect()
}
