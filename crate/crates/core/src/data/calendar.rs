use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// One of the four three-month blocks of a year.
///
/// Names assume the default block boundary (December); with another start
/// month `Winter` is simply the block that begins at that month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Winter = 0,
    Spring = 1,
    Summer = 2,
    Autumn = 3,
}

impl Season {
    pub fn from_index(idx: u8) -> Season {
        match idx % 4 {
            0 => Season::Winter,
            1 => Season::Spring,
            2 => Season::Summer,
            _ => Season::Autumn,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }
}

/// A concrete seasonal block: the season plus its season-year.
///
/// A season-year is labelled with the calendar year holding most of its
/// months, so with the default December boundary December 2015 and
/// January 2016 share the key `(2016, Winter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeasonKey {
    pub year: i32,
    pub season: Season,
}

impl SeasonKey {
    /// Position of the block on a continuous quarter axis.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + self.season.index() as i64
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        SeasonKey {
            year: ordinal.div_euclid(4) as i32,
            season: Season::from_index(ordinal.rem_euclid(4) as u8),
        }
    }
}

/// Maps dates onto three-month seasonal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonCalendar {
    /// Month (1..=12) that opens the first block of the season year.
    pub start_month: u32,
}

impl Default for SeasonCalendar {
    fn default() -> Self {
        Self { start_month: 12 }
    }
}

impl SeasonCalendar {
    pub fn new(start_month: u32) -> Self {
        assert!((1..=12).contains(&start_month), "start month must be 1..=12");
        Self { start_month }
    }

    pub fn season_of(&self, date: NaiveDate) -> SeasonKey {
        SeasonKey::from_ordinal(self.month_index(date.year(), date.month()).div_euclid(3))
    }

    /// Months since the start of season-year zero.
    fn month_index(&self, year: i32, month: u32) -> i64 {
        let shift = if self.start_month >= 7 { 12 } else { 0 };
        year as i64 * 12 + month as i64 - self.start_month as i64 + shift
    }

    /// Block ordinal of every date, for fast comparisons during search.
    pub fn ordinals(&self, dates: &[NaiveDate]) -> Vec<i64> {
        dates.iter().map(|&d| self.season_of(d).ordinal()).collect()
    }

    /// First day of the block containing `date`.
    pub fn block_start(&self, date: NaiveDate) -> NaiveDate {
        let ordinal = self.season_of(date).ordinal();
        let shift = if self.start_month >= 7 { 12 } else { 0 };
        let months = ordinal * 3 + self.start_month as i64 - shift - 1;
        let year = months.div_euclid(12) as i32;
        let month = (months.rem_euclid(12) + 1) as u32;
        NaiveDate::from_ymd_opt(year, month, 1).expect("valid first of month")
    }
}
