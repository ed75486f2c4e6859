//! Calendar quarters.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// A calendar quarter. Ordering follows calendar time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    year: i32,
    q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Option<Self> {
        (1..=4).contains(&q).then_some(Quarter { year, q })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn q(self) -> u8 {
        self.q
    }

    pub fn succ(self) -> Self {
        if self.q == 4 {
            Quarter {
                year: self.year + 1,
                q: 1,
            }
        } else {
            Quarter {
                year: self.year,
                q: self.q + 1,
            }
        }
    }

    pub fn pred(self) -> Self {
        if self.q == 1 {
            Quarter {
                year: self.year - 1,
                q: 4,
            }
        } else {
            Quarter {
                year: self.year,
                q: self.q - 1,
            }
        }
    }

    /// Quarters elapsed since year 0 Q1; differences give distances.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 4 + (self.q as i64 - 1)
    }

    pub fn from_ordinal(n: i64) -> Self {
        Quarter {
            year: n.div_euclid(4) as i32,
            q: (n.rem_euclid(4) + 1) as u8,
        }
    }

    /// Quarter containing an ISO `YYYY-MM-DD` date.
    pub fn from_date(date: &str) -> Result<Self, Error> {
        let bad = || Error::Data(format!("unparsable date `{date}`"));
        let mut parts = date.trim().split('-');
        let year: i32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let month: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let day: u32 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() || !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return Err(bad());
        }
        Ok(Quarter {
            year,
            q: ((month - 1) / 3 + 1) as u8,
        })
    }

    /// ISO date of the last calendar day of the quarter.
    pub fn end_date(self) -> String {
        let (m, d) = match self.q {
            1 => (3, 31),
            2 => (6, 30),
            3 => (9, 30),
            _ => (12, 31),
        };
        format!("{:04}-{m:02}-{d:02}", self.year)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    /// Accepts `2001Q3` or an ISO date.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((y, q)) = s.split_once(['Q', 'q']) {
            let year = y.parse().map_err(|_| Error::Data(format!("bad quarter `{s}`")))?;
            let q = q.parse().map_err(|_| Error::Data(format!("bad quarter `{s}`")))?;
            return Quarter::new(year, q).ok_or_else(|| Error::Data(format!("bad quarter `{s}`")));
        }
        Quarter::from_date(s)
    }
}
