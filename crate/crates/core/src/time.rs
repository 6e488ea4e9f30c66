//! Timestamp handling: ISO-8601 with offset in, UTC epoch seconds inside.
//!
//! Call logs carry wall-clock timestamps with an offset designator; all
//! internal arithmetic (span assignment, recontact horizons) runs on UTC
//! epoch seconds. The canonical serialized form is `YYYY-MM-DDTHH:MM:SSZ`.

use alloc::format;
use alloc::string::String;

use crate::{Error, Result};

/// Days from civil date to days since 1970-01-01 (Howard Hinnant's algorithm).
fn days_from_civil(year: i64, month: u32, day: u32) -> i64 {
    let y = if month <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400; // [0, 399]
    let m = month as i64;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + day as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Inverse of `days_from_civil`.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097; // [0, 146096]
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn is_leap(year: i64) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i64, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if is_leap(year) {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

fn parse_fixed_u32(s: &str) -> Option<u32> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Parse an ISO-8601 timestamp with an explicit offset (`Z` or `±HH:MM`)
/// into UTC epoch seconds. Fractional seconds are rejected; the study data
/// is second-resolution.
pub fn parse_iso8601(s: &str) -> Result<i64> {
    let bad = || Error::data(format!("unparseable timestamp: {s:?}"));
    let bytes = s.as_bytes();
    if bytes.len() < 20 {
        return Err(bad());
    }
    if bytes[4] != b'-' || bytes[7] != b'-' || (bytes[10] != b'T' && bytes[10] != b' ') {
        return Err(bad());
    }
    if bytes[13] != b':' || bytes[16] != b':' {
        return Err(bad());
    }
    let year: i64 = s[0..4].parse().map_err(|_| bad())?;
    let month = parse_fixed_u32(&s[5..7]).ok_or_else(bad)?;
    let day = parse_fixed_u32(&s[8..10]).ok_or_else(bad)?;
    let hour = parse_fixed_u32(&s[11..13]).ok_or_else(bad)?;
    let minute = parse_fixed_u32(&s[14..16]).ok_or_else(bad)?;
    let second = parse_fixed_u32(&s[17..19]).ok_or_else(bad)?;
    if !(1..=12).contains(&month)
        || day < 1
        || day > days_in_month(year, month)
        || hour > 23
        || minute > 59
        || second > 60
    {
        return Err(bad());
    }
    let rest = &s[19..];
    let offset_secs: i64 = if rest == "Z" {
        0
    } else {
        let rb = rest.as_bytes();
        if rb.len() != 6 || (rb[0] != b'+' && rb[0] != b'-') || rb[3] != b':' {
            return Err(bad());
        }
        let oh = parse_fixed_u32(&rest[1..3]).ok_or_else(bad)? as i64;
        let om = parse_fixed_u32(&rest[4..6]).ok_or_else(bad)? as i64;
        if oh > 18 || om > 59 {
            return Err(bad());
        }
        let sign = if rb[0] == b'+' { 1 } else { -1 };
        sign * (oh * 3600 + om * 60)
    };
    // Leap second: clamp to :59 (epoch seconds cannot represent :60).
    let second = second.min(59);
    let days = days_from_civil(year, month, day);
    Ok(
        days * 86_400 + i64::from(hour) * 3600 + i64::from(minute) * 60 + i64::from(second)
            - offset_secs,
    )
}

/// Format UTC epoch seconds in the canonical form `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_utc(epoch: i64) -> String {
    let days = epoch.div_euclid(86_400);
    let secs = epoch.rem_euclid(86_400);
    let (y, m, d) = civil_from_days(days);
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z",
        y,
        m,
        d,
        secs / 3600,
        (secs % 3600) / 60,
        secs % 60
    )
}

/// Midnight UTC of the day containing the given instant.
pub fn floor_to_midnight(epoch: i64) -> i64 {
    epoch.div_euclid(86_400) * 86_400
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_reference_points() {
        assert_eq!(parse_iso8601("1970-01-01T00:00:00Z").unwrap(), 0);
        assert_eq!(
            parse_iso8601("2023-03-01T00:00:00Z").unwrap(),
            1_677_628_800
        );
        assert_eq!(
            parse_iso8601("2023-05-01T00:00:00Z").unwrap(),
            1_682_899_200
        );
    }

    #[test]
    fn offsets_convert_to_utc() {
        // 08:00 at -05:00 is 13:00 UTC.
        let a = parse_iso8601("2023-03-01T08:00:00-05:00").unwrap();
        let b = parse_iso8601("2023-03-01T13:00:00Z").unwrap();
        assert_eq!(a, b);
        let c = parse_iso8601("2023-03-01T08:00:00+00:00").unwrap();
        let d = parse_iso8601("2023-03-01T08:00:00Z").unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn format_round_trips() {
        for &e in &[0i64, 1_677_628_800, 1_682_899_199, 951_868_800] {
            assert_eq!(parse_iso8601(&format_utc(e)).unwrap(), e);
        }
    }

    #[test]
    fn leap_year_handling() {
        // 2000-02-29 was valid; 1900-02-29 was not.
        assert!(parse_iso8601("2000-02-29T12:00:00Z").is_ok());
        assert!(parse_iso8601("1900-02-29T12:00:00Z").is_err());
        assert_eq!(
            format_utc(parse_iso8601("2000-02-29T23:59:59Z").unwrap()),
            "2000-02-29T23:59:59Z"
        );
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "2023-03-01",
            "2023-03-01T08:00:00",
            "2023-13-01T08:00:00Z",
            "2023-03-32T08:00:00Z",
            "2023-03-01T24:00:00Z",
            "2023-03-01T08:61:00Z",
            "not a time",
            "2023-03-01T08:00:00.123Z",
        ] {
            assert!(parse_iso8601(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn midnight_floor() {
        let t = parse_iso8601("2023-03-01T17:45:12Z").unwrap();
        assert_eq!(
            floor_to_midnight(t),
            parse_iso8601("2023-03-01T00:00:00Z").unwrap()
        );
    }
}
