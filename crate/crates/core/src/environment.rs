//! Environment snapshots: timestamp, day of week, weather and one
//! scenario-specific payload entry.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::json::Json;

pub const TIME_KEY: &str = "time";
pub const DAY_KEY: &str = "Day of the week";
pub const WEATHER_KEY: &str = "Weather";

pub const WEEKDAYS: [&str; 7] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];

pub const WEATHERS: [&str; 5] = ["Sunny", "Rainy", "Cloudy", "Snowy", "Windy"];

/// `YYYY-MM-DD HH:MM:SS`, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    pub year: u16,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

fn is_leap(y: u16) -> bool {
    (y.is_multiple_of(4) && !y.is_multiple_of(100)) || y.is_multiple_of(400)
}

pub fn days_in_month(year: u16, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl Timestamp {
    pub fn parse(s: &str) -> Option<Timestamp> {
        let b = s.as_bytes();
        if b.len() != 19 || b[4] != b'-' || b[7] != b'-' || b[10] != b' ' || b[13] != b':' || b[16] != b':' {
            return None;
        }
        let num = |r: core::ops::Range<usize>| -> Option<u16> {
            let part = &s[r];
            if !part.bytes().all(|c| c.is_ascii_digit()) {
                return None;
            }
            part.parse().ok()
        };
        let t = Timestamp {
            year: num(0..4)?,
            month: num(5..7)? as u8,
            day: num(8..10)? as u8,
            hour: num(11..13)? as u8,
            minute: num(14..16)? as u8,
            second: num(17..19)? as u8,
        };
        let ok = (1..=12).contains(&t.month)
            && t.day >= 1
            && t.day <= days_in_month(t.year, t.month)
            && t.hour < 24
            && t.minute < 60
            && t.second < 60;
        ok.then_some(t)
    }

    /// Day of week name for the calendar date (proleptic Gregorian).
    pub fn weekday(&self) -> &'static str {
        const OFFSETS: [i32; 12] = [0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4];
        let mut y = self.year as i32;
        if self.month < 3 {
            y -= 1;
        }
        // 0 = Sunday
        let dow = (y + y / 4 - y / 100 + y / 400 + OFFSETS[self.month as usize - 1] + self.day as i32) % 7;
        WEEKDAYS[((dow + 6) % 7) as usize]
    }

    /// Adds whole days, rolling months and years.
    pub fn plus_days(mut self, days: u32) -> Timestamp {
        for _ in 0..days {
            if self.day < days_in_month(self.year, self.month) {
                self.day += 1;
            } else {
                self.day = 1;
                if self.month == 12 {
                    self.month = 1;
                    self.year += 1;
                } else {
                    self.month += 1;
                }
            }
        }
        self
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02} {:02}:{:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute, self.second
        )
    }
}

/// One environment snapshot. Field values are kept as written so that
/// malformed data can be reported instead of rejected at parse time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalInfo {
    pub time: String,
    pub day_of_week: String,
    pub weather: String,
    pub payload_key: String,
    pub payload: String,
}

impl ExternalInfo {
    pub fn timestamp(&self) -> Option<Timestamp> {
        Timestamp::parse(&self.time)
    }

    /// Human readable problems with this snapshot; empty when well formed.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.timestamp().is_none() {
            out.push(alloc::format!("bad time {:?}", self.time));
        }
        if !WEEKDAYS.contains(&self.day_of_week.as_str()) {
            out.push(alloc::format!("bad day of week {:?}", self.day_of_week));
        }
        if !WEATHERS.contains(&self.weather.as_str()) {
            out.push(alloc::format!("bad weather {:?}", self.weather));
        }
        if self.payload_key.is_empty() || [TIME_KEY, DAY_KEY, WEATHER_KEY].contains(&self.payload_key.as_str()) {
            out.push(alloc::format!("bad payload key {:?}", self.payload_key));
        }
        out
    }

    pub fn to_json(&self) -> Json {
        Json::Object(alloc::vec![
            (TIME_KEY.into(), Json::str(&self.time)),
            (DAY_KEY.into(), Json::str(&self.day_of_week)),
            (WEATHER_KEY.into(), Json::str(&self.weather)),
            (self.payload_key.clone(), Json::str(&self.payload)),
        ])
    }

    pub fn from_json(v: &Json) -> Result<ExternalInfo, String> {
        let Json::Object(entries) = v else {
            return Err("external info is not an object".into());
        };
        let mut time = None;
        let mut day = None;
        let mut weather = None;
        let mut payload = None;
        for (k, val) in entries {
            let text = val
                .as_str()
                .ok_or_else(|| alloc::format!("value of {k:?} is not a string"))?
                .to_string();
            let slot = match k.as_str() {
                TIME_KEY => &mut time,
                DAY_KEY => &mut day,
                WEATHER_KEY => &mut weather,
                _ => {
                    if payload.is_some() {
                        return Err(alloc::format!("more than one payload key (extra {k:?})"));
                    }
                    payload = Some((k.clone(), text));
                    continue;
                }
            };
            *slot = Some(text);
        }
        let (payload_key, payload) = payload.ok_or("missing payload entry")?;
        Ok(ExternalInfo {
            time: time.ok_or("missing time")?,
            day_of_week: day.ok_or("missing day of week")?,
            weather: weather.ok_or("missing weather")?,
            payload_key,
            payload,
        })
    }
}

impl Serialize for ExternalInfo {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(4))?;
        m.serialize_entry(TIME_KEY, &self.time)?;
        m.serialize_entry(DAY_KEY, &self.day_of_week)?;
        m.serialize_entry(WEATHER_KEY, &self.weather)?;
        m.serialize_entry(&self.payload_key, &self.payload)?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for ExternalInfo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ExternalInfo;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an environment snapshot object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<ExternalInfo, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    entries.push((k, Json::String(v)));
                }
                ExternalInfo::from_json(&Json::Object(entries)).map_err(de::Error::custom)
            }
        }
        d.deserialize_map(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_parse_and_display() {
        let t = Timestamp::parse("2025-08-15 17:45:00").unwrap();
        assert_eq!(t.to_string(), "2025-08-15 17:45:00");
        assert!(Timestamp::parse("2025-02-29 00:00:00").is_none());
        assert!(Timestamp::parse("2024-02-29 00:00:00").is_some());
        assert!(Timestamp::parse("2025-8-15 17:45:00").is_none());
        assert!(Timestamp::parse("2025-08-15T17:45:00").is_none());
        assert!(Timestamp::parse("2025-08-15 24:00:00").is_none());
    }

    #[test]
    fn weekday_matches_known_dates() {
        for (date, day) in [
            ("2025-08-15 17:45:00", "Friday"),
            ("2025-08-28 09:30:20", "Thursday"),
            ("2025-09-10 18:05:40", "Wednesday"),
            ("2026-03-13 10:20:12", "Friday"),
            ("2000-01-01 00:00:00", "Saturday"),
        ] {
            assert_eq!(Timestamp::parse(date).unwrap().weekday(), day, "{date}");
        }
    }

    #[test]
    fn plus_days_rolls_over() {
        let t = Timestamp::parse("2025-12-30 08:00:00").unwrap().plus_days(3);
        assert_eq!(t.to_string(), "2026-01-02 08:00:00");
    }

    #[test]
    fn json_order_is_fixed() {
        let info = ExternalInfo {
            time: "2025-08-15 17:45:00".into(),
            day_of_week: "Friday".into(),
            weather: "Cloudy".into(),
            payload_key: "sales_info".into(),
            payload: "A: 1".into(),
        };
        assert_eq!(
            info.to_json().render(),
            r#"{"time": "2025-08-15 17:45:00", "Day of the week": "Friday", "Weather": "Cloudy", "sales_info": "A: 1"}"#
        );
        assert!(info.problems().is_empty());
        assert_eq!(ExternalInfo::from_json(&info.to_json()).unwrap(), info);
    }

    #[test]
    fn problems_flag_bad_fields() {
        let info = ExternalInfo {
            time: "yesterday".into(),
            day_of_week: "Funday".into(),
            weather: "Foggy".into(),
            payload_key: "Weather".into(),
            payload: String::new(),
        };
        assert_eq!(info.problems().len(), 4);
    }
}
