//! Calendar timestamps and their encoding as model features.
//!
//! Each timestamp contributes one scalar per selected calendar feature,
//! normalized to `[-0.5, 0.5]` by `value / (cardinality - 1) - 0.5`. The
//! feature set is an ordered subset of {minute, hour, day-of-week, month,
//! season}, written in labels as e.g. `"H_D_S"`.

use crate::{Error, Result};

/// A parsed wall-clock timestamp (no time zone; proleptic Gregorian).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CalendarStamp {
    pub year: i32,
    /// 0-based month, January = 0.
    pub month: u8,
    /// 1-based day of month.
    pub day: u8,
    /// 0-based day of week, Monday = 0.
    pub day_of_week: u8,
    /// 0-23.
    pub hour: u8,
    /// 0-59.
    pub minute: u8,
}

fn is_leap(year: i32) -> bool {
    year % 4 == 0 && (year % 100 != 0 || year % 400 == 0)
}

fn days_in_month(year: i32, month0: u8) -> u8 {
    match month0 {
        0 | 2 | 4 | 6 | 7 | 9 | 11 => 31,
        3 | 5 | 8 | 10 => 30,
        1 => {
            if is_leap(year) {
                29
            } else {
                28
            }
        }
        _ => unreachable!("month0 out of range"),
    }
}

/// Day of week with Monday = 0, via Sakamoto's method.
fn weekday_monday0(year: i32, month1: u8, day: u8) -> u8 {
    const T: [i32; 12] = [0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4];
    let y = if month1 < 3 { year - 1 } else { year };
    let sunday0 =
        (y + y / 4 - y / 100 + y / 400 + T[month1 as usize - 1] + day as i32).rem_euclid(7);
    ((sunday0 + 6) % 7) as u8
}

/// Days since 1970-01-01 in the proleptic Gregorian calendar.
fn days_from_civil(year: i64, month1: u64, day: u64) -> i64 {
    let y = if month1 <= 2 { year - 1 } else { year };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as u64;
    let mp = (month1 + 9) % 12;
    let doy = (153 * mp + 2) / 5 + day - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe as i64 - 719468
}

impl CalendarStamp {
    /// Build from human fields (1-based month) with full range validation.
    pub fn from_ymd_hm(year: i32, month1: u8, day: u8, hour: u8, minute: u8) -> Result<Self> {
        let input = format!("{year:04}-{month1:02}-{day:02} {hour:02}:{minute:02}");
        let field_err = |field: &str, detail: String| Error::Timestamp {
            input: input.clone(),
            reason: format!("{field} {detail}"),
        };
        if !(1..=9999).contains(&year) {
            return Err(field_err("year", "must be in 1..=9999".into()));
        }
        if !(1..=12).contains(&month1) {
            return Err(field_err("month", "must be in 01..=12".into()));
        }
        let dim = days_in_month(year, month1 - 1);
        if day < 1 || day > dim {
            return Err(field_err(
                "day",
                format!("must be in 01..={dim} for {year:04}-{month1:02}"),
            ));
        }
        if hour > 23 {
            return Err(field_err("hour", "must be in 00..=23".into()));
        }
        if minute > 59 {
            return Err(field_err("minute", "must be in 00..=59".into()));
        }
        Ok(CalendarStamp {
            year,
            month: month1 - 1,
            day,
            day_of_week: weekday_monday0(year, month1, day),
            hour,
            minute,
        })
    }

    /// Parse `"YYYY-MM-DD HH:MM"`; a trailing `":SS"` is validated and then
    /// truncated toward the minute.
    pub fn parse(s: &str) -> Result<Self> {
        let err = |reason: &str| Error::Timestamp {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let bytes = s.as_bytes();
        if bytes.len() != 16 && bytes.len() != 19 {
            return Err(err("expected \"YYYY-MM-DD HH:MM\" or \"YYYY-MM-DD HH:MM:SS\""));
        }
        let sep_ok = bytes[4] == b'-'
            && bytes[7] == b'-'
            && bytes[10] == b' '
            && bytes[13] == b':'
            && (bytes.len() == 16 || bytes[16] == b':');
        if !sep_ok {
            return Err(err("expected separators \"YYYY-MM-DD HH:MM[:SS]\""));
        }
        let digits = |range: std::ops::Range<usize>, field: &'static str| -> Result<u32> {
            let part = &s[range];
            if !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err(&format!("{field} must be decimal digits, got {part:?}")));
            }
            Ok(part.parse().expect("digit-checked"))
        };
        let year = digits(0..4, "year")? as i32;
        let month = digits(5..7, "month")? as u8;
        let day = digits(8..10, "day")? as u8;
        let hour = digits(11..13, "hour")? as u8;
        let minute = digits(14..16, "minute")? as u8;
        if bytes.len() == 19 {
            let sec = digits(17..19, "second")?;
            if sec > 59 {
                return Err(err("second must be in 00..=59"));
            }
        }
        Self::from_ymd_hm(year, month, day, hour, minute)
    }

    /// Season index 0-3 (Jan-Mar = 0, …, Oct-Dec = 3).
    pub fn season(&self) -> u8 {
        self.month / 3
    }

    /// Minutes since 1970-01-01 00:00; used for spacing checks.
    pub fn minutes_since_epoch(&self) -> i64 {
        days_from_civil(self.year as i64, self.month as u64 + 1, self.day as u64) * 1440
            + self.hour as i64 * 60
            + self.minute as i64
    }
}

/// A calendar feature with its category cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Feature {
    /// Minute of hour, 60 categories.
    Minute,
    /// Hour of day, 24 categories.
    Hour,
    /// Day of week, 7 categories (Monday = 0).
    DayOfWeek,
    /// Month of year, 12 categories.
    Month,
    /// Season (quarter), 4 categories.
    Season,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::Minute,
        Feature::Hour,
        Feature::DayOfWeek,
        Feature::Month,
        Feature::Season,
    ];

    /// Label token used in specs like `"H_D_S"`.
    pub fn token(&self) -> &'static str {
        match self {
            Feature::Minute => "Min",
            Feature::Hour => "H",
            Feature::DayOfWeek => "D",
            Feature::Month => "M",
            Feature::Season => "S",
        }
    }

    pub fn from_token(tok: &str) -> Result<Self> {
        match tok {
            "Min" => Ok(Feature::Minute),
            "H" => Ok(Feature::Hour),
            "D" => Ok(Feature::DayOfWeek),
            "M" => Ok(Feature::Month),
            "S" => Ok(Feature::Season),
            other => Err(Error::Config(format!(
                "unknown feature token {other:?} (expected Min, H, D, M or S)"
            ))),
        }
    }

    /// Number of categories.
    pub fn cardinality(&self) -> u32 {
        match self {
            Feature::Minute => 60,
            Feature::Hour => 24,
            Feature::DayOfWeek => 7,
            Feature::Month => 12,
            Feature::Season => 4,
        }
    }

    /// Raw 0-based category of `stamp` for this feature.
    pub fn raw_value(&self, stamp: &CalendarStamp) -> u32 {
        match self {
            Feature::Minute => stamp.minute as u32,
            Feature::Hour => stamp.hour as u32,
            Feature::DayOfWeek => stamp.day_of_week as u32,
            Feature::Month => stamp.month as u32,
            Feature::Season => stamp.season() as u32,
        }
    }

    /// Normalized encoding in `[-0.5, 0.5]`.
    pub fn encode(&self, stamp: &CalendarStamp) -> f64 {
        self.raw_value(stamp) as f64 / (self.cardinality() - 1) as f64 - 0.5
    }
}

/// A non-empty, duplicate-free feature list held in canonical order
/// (Min < H < D < M < S).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    feats: Vec<Feature>,
}

impl FeatureSpec {
    /// Canonicalize (sort) and validate; rejects empty lists and duplicates.
    pub fn new(feats: &[Feature]) -> Result<Self> {
        if feats.is_empty() {
            return Err(Error::Config("feature spec must not be empty".into()));
        }
        let mut sorted = feats.to_vec();
        sorted.sort();
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::Config(format!(
                    "duplicate feature {:?} in feature spec",
                    pair[0].token()
                )));
            }
        }
        Ok(FeatureSpec { feats: sorted })
    }

    /// Parse a label like `"H_M_S"` or `"Min_H"`.
    pub fn parse(label: &str) -> Result<Self> {
        let feats = label
            .split('_')
            .map(Feature::from_token)
            .collect::<Result<Vec<_>>>()?;
        Self::new(&feats)
    }

    pub fn features(&self) -> &[Feature] {
        &self.feats
    }

    /// Number of encoded columns, `r`.
    pub fn dim(&self) -> usize {
        self.feats.len()
    }

    /// Canonical label, e.g. `"H_M_S"`.
    pub fn label(&self) -> String {
        self.feats
            .iter()
            .map(|f| f.token())
            .collect::<Vec<_>>()
            .join("_")
    }

    /// Encode one stamp into its `r` feature values.
    pub fn encode_stamp(&self, stamp: &CalendarStamp) -> Vec<f64> {
        self.feats.iter().map(|f| f.encode(stamp)).collect()
    }
}

impl std::fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Row-major matrix of encoded features: one row per stamp, one column per
/// feature in canonical order.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Encode a stamp sequence; errors on an empty sequence.
pub fn build_feature_matrix(stamps: &[CalendarStamp], spec: &FeatureSpec) -> Result<FeatureMatrix> {
    if stamps.is_empty() {
        return Err(Error::Data("cannot encode an empty stamp sequence".into()));
    }
    let cols = spec.dim();
    let mut data = Vec::with_capacity(stamps.len() * cols);
    for stamp in stamps {
        for f in spec.features() {
            data.push(f.encode(stamp));
        }
    }
    Ok(FeatureMatrix {
        rows: stamps.len(),
        cols,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> CalendarStamp {
        CalendarStamp::parse(s).unwrap()
    }

    #[test]
    fn known_weekdays() {
        assert_eq!(parse("2016-07-01 00:00").day_of_week, 4); // Friday
        assert_eq!(parse("2024-07-15 14:10").day_of_week, 0); // Monday
        assert_eq!(parse("2000-01-01 00:00").day_of_week, 5); // Saturday
        assert_eq!(parse("1970-01-01 00:00").day_of_week, 3); // Thursday
    }

    #[test]
    fn summer_monday_afternoon_encodes_as_expected() {
        // July 15th 2024, 14:10 — a July Monday afternoon in Q3.
        let stamp = parse("2024-07-15 14:10");
        let spec = FeatureSpec::new(&Feature::ALL).unwrap();
        let v = spec.encode_stamp(&stamp);
        let expect = [
            10.0 / 59.0 - 0.5, // minute 10
            14.0 / 23.0 - 0.5, // hour 14
            -0.5,              // Monday
            6.0 / 11.0 - 0.5,  // July (month index 6)
            2.0 / 3.0 - 0.5,   // season index 2
        ];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "got {v:?}");
        }
    }

    #[test]
    fn category_extremes_map_to_interval_ends() {
        let jan1 = parse("2023-01-01 00:00");
        let dec31 = parse("2023-12-31 23:59");
        assert_eq!(Feature::Hour.encode(&jan1), -0.5);
        assert_eq!(Feature::Month.encode(&jan1), -0.5);
        assert_eq!(Feature::Season.encode(&jan1), -0.5);
        assert_eq!(Feature::Minute.encode(&jan1), -0.5);
        assert_eq!(Feature::Hour.encode(&dec31), 0.5);
        assert_eq!(Feature::Month.encode(&dec31), 0.5);
        assert_eq!(Feature::Season.encode(&dec31), 0.5);
        assert_eq!(Feature::Minute.encode(&dec31), 0.5);
        // Sunday is the top of the week scale.
        let sunday = parse("2024-07-14 12:00");
        assert_eq!(Feature::DayOfWeek.encode(&sunday), 0.5);
    }

    #[test]
    fn leap_day_and_invalid_dates() {
        assert!(CalendarStamp::parse("2020-02-29 12:00").is_ok());
        let e = CalendarStamp::parse("2021-02-29 12:00").unwrap_err();
        assert!(e.to_string().contains("day"), "{e}");
        let e = CalendarStamp::parse("2021-13-01 00:00").unwrap_err();
        assert!(e.to_string().contains("month"), "{e}");
        let e = CalendarStamp::parse("2021-01-01 24:00").unwrap_err();
        assert!(e.to_string().contains("hour"), "{e}");
        let e = CalendarStamp::parse("2021-01-01 10:60").unwrap_err();
        assert!(e.to_string().contains("minute"), "{e}");
    }

    #[test]
    fn malformed_strings_name_the_problem() {
        assert!(CalendarStamp::parse("2021-1-05 00:00").is_err());
        assert!(CalendarStamp::parse("2021/01/05 00:00").is_err());
        assert!(CalendarStamp::parse("garbage").is_err());
        assert!(CalendarStamp::parse("2021-01-05T00:00").is_err());
        let e = CalendarStamp::parse("2021-01-05 00:0x").unwrap_err();
        assert!(e.to_string().contains("minute"), "{e}");
    }

    #[test]
    fn seconds_are_validated_then_truncated() {
        let s = parse("2016-07-01 00:00:59");
        assert_eq!((s.hour, s.minute), (0, 0));
        assert!(CalendarStamp::parse("2016-07-01 00:00:60").is_err());
    }

    #[test]
    fn minutes_since_epoch_reference_points() {
        assert_eq!(parse("1970-01-01 00:00").minutes_since_epoch(), 0);
        assert_eq!(parse("1970-01-02 00:00").minutes_since_epoch(), 1440);
        // 16983 days from epoch to 2016-07-01.
        assert_eq!(parse("2016-07-01 00:00").minutes_since_epoch(), 16983 * 1440);
        assert_eq!(parse("2000-03-01 00:00").minutes_since_epoch(), 11017 * 1440);
    }

    #[test]
    fn feature_spec_parsing_and_canonical_order() {
        let spec = FeatureSpec::parse("H_M_S").unwrap();
        assert_eq!(spec.dim(), 3);
        assert_eq!(spec.label(), "H_M_S");
        // Out-of-order input is canonicalized.
        let spec = FeatureSpec::parse("S_H").unwrap();
        assert_eq!(spec.label(), "H_S");
        let spec = FeatureSpec::parse("Min_H").unwrap();
        assert_eq!(
            spec.features(),
            &[Feature::Minute, Feature::Hour],
            "Min sorts before H"
        );
        assert!(FeatureSpec::parse("").is_err());
        assert!(FeatureSpec::parse("H_H").is_err());
        assert!(FeatureSpec::parse("H_X").is_err());
    }

    #[test]
    fn feature_matrix_layout() {
        let stamps = [parse("2021-01-01 00:00"), parse("2021-07-01 13:00")];
        let spec = FeatureSpec::parse("H_M").unwrap();
        let m = build_feature_matrix(&stamps, &spec).unwrap();
        assert_eq!((m.rows, m.cols), (2, 2));
        assert_eq!(m.row(0), &[-0.5, -0.5]);
        assert!((m.row(1)[0] - (13.0 / 23.0 - 0.5)).abs() < 1e-15);
        assert!((m.row(1)[1] - (6.0 / 11.0 - 0.5)).abs() < 1e-15);
        assert!(build_feature_matrix(&[], &spec).is_err());
    }

    #[test]
    fn encodings_stay_bounded_over_a_dense_year() {
        // Every hour of a leap year: all encodings stay in [-0.5, 0.5] and
        // repeat with their natural period.
        let mut stamps = Vec::new();
        for month1 in 1..=12u8 {
            for day in 1..=days_in_month(2020, month1 - 1) {
                for hour in 0..24 {
                    stamps.push(CalendarStamp::from_ymd_hm(2020, month1, day, hour, 0).unwrap());
                }
            }
        }
        let spec = FeatureSpec::new(&Feature::ALL).unwrap();
        for s in &stamps {
            for v in spec.encode_stamp(s) {
                assert!((-0.5..=0.5).contains(&v));
            }
        }
        // Hour encoding is 24-periodic along the hourly sequence.
        for (i, s) in stamps.iter().enumerate().skip(24) {
            assert_eq!(
                Feature::Hour.encode(s),
                Feature::Hour.encode(&stamps[i - 24])
            );
        }
    }

    proptest! {
        #[test]
        fn encodings_stay_in_the_half_unit_band(
            year in 1900i32..2100,
            month in 1u8..=12,
            day in 1u8..=28,
            hour in 0u8..24,
            minute in 0u8..60,
        ) {
            let stamp = CalendarStamp::from_ymd_hm(year, month, day, hour, minute).unwrap();
            for f in Feature::ALL {
                let v = f.encode(&stamp);
                prop_assert!((-0.5..=0.5).contains(&v), "{:?} -> {}", f, v);
            }
        }

        #[test]
        fn weekdays_advance_cyclically(
            year in 1900i32..2100,
            month in 1u8..=12,
            day in 1u8..=27,
        ) {
            let today = CalendarStamp::from_ymd_hm(year, month, day, 0, 0).unwrap();
            let tomorrow = CalendarStamp::from_ymd_hm(year, month, day + 1, 0, 0).unwrap();
            prop_assert_eq!(tomorrow.day_of_week, (today.day_of_week + 1) % 7);
        }
    }
}
