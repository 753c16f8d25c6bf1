//! Quote files.
//!
//! One row per quoted option with the columns
//! `ticker,type,bid_qty,bid_price,ask_price,ask_qty`. Quantities are in
//! contracts. Tickers follow `SPX US <M/D/YYYY> <C|P><strike> Index` and the
//! maturity date selects the period through the configured maturity list.

use std::io::{Read, Write};

use semistatic::instruments::{OptionKind, Quote};

use crate::error::{Result, RowError};

pub const COLUMNS: [&str; 6] = ["ticker", "type", "bid_qty", "bid_price", "ask_price", "ask_qty"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Date {
    pub year: u32,
    pub month: u32,
    pub day: u32,
}

impl Date {
    /// `M/D/YYYY`; leading zeros are accepted.
    pub fn parse(s: &str) -> Option<Date> {
        let mut parts = s.split('/');
        let mut field = || parts.next().filter(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()));
        let month: u32 = field()?.parse().ok()?;
        let day: u32 = field()?.parse().ok()?;
        let year_str = field()?;
        if parts.next().is_some() || year_str.len() != 4 {
            return None;
        }
        let year: u32 = year_str.parse().ok()?;
        if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return None;
        }
        Some(Date { year, month, day })
    }
}

impl std::fmt::Display for Date {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.month, self.day, self.year)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ticker {
    pub date: Date,
    pub kind: OptionKind,
    pub strike: f64,
}

impl Ticker {
    pub fn parse(s: &str) -> std::result::Result<Ticker, String> {
        let tokens: Vec<&str> = s.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(format!("ticker '{s}' must have 5 tokens, found {}", tokens.len()));
        }
        for (i, expected) in [(0, "SPX"), (1, "US"), (4, "Index")] {
            if tokens[i] != expected {
                return Err(format!("ticker '{s}': expected '{expected}', found token '{}'", tokens[i]));
            }
        }
        let date = Date::parse(tokens[2]).ok_or_else(|| format!("ticker '{s}': bad date token '{}'", tokens[2]))?;
        let option = tokens[3];
        let kind = match option.chars().next() {
            Some('C') => OptionKind::Call,
            Some('P') => OptionKind::Put,
            _ => return Err(format!("ticker '{s}': bad option token '{option}', expected C or P followed by a strike")),
        };
        let strike: f64 = option[1..]
            .parse()
            .ok()
            .filter(|k: &f64| k.is_finite() && *k > 0.0)
            .ok_or_else(|| format!("ticker '{s}': bad strike in token '{option}'"))?;
        Ok(Ticker { date, kind, strike })
    }
}

impl std::fmt::Display for Ticker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let letter = match self.kind {
            OptionKind::Call => 'C',
            OptionKind::Put => 'P',
        };
        write!(f, "SPX US {} {letter}{} Index", self.date, self.strike)
    }
}

/// Maturity dates in period order.
#[derive(Clone, Debug, PartialEq)]
pub struct MaturityCalendar {
    dates: Vec<Date>,
}

impl MaturityCalendar {
    pub fn new(dates: &[String]) -> std::result::Result<Self, String> {
        let parsed = dates
            .iter()
            .map(|d| Date::parse(d).ok_or_else(|| format!("bad maturity date '{d}'")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if parsed.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("maturity dates must be increasing: {dates:?}"));
        }
        Ok(MaturityCalendar { dates: parsed })
    }

    pub fn period(&self, date: Date) -> Option<usize> {
        self.dates.iter().position(|d| *d == date).map(|i| i + 1)
    }

    pub fn date(&self, period: usize) -> Option<Date> {
        period.checked_sub(1).and_then(|i| self.dates.get(i)).copied()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

fn kind_name(kind: OptionKind) -> &'static str {
    match kind {
        OptionKind::Call => "call",
        OptionKind::Put => "put",
    }
}

fn parse_kind(s: &str) -> Option<OptionKind> {
    match s.to_ascii_lowercase().as_str() {
        "c" | "call" => Some(OptionKind::Call),
        "p" | "put" => Some(OptionKind::Put),
        _ => None,
    }
}

/// Parses one row. The quote id is the canonical form of the ticker.
pub fn parse_row(fields: &[&str; 6], calendar: &MaturityCalendar) -> std::result::Result<Quote, String> {
    let ticker = Ticker::parse(fields[0])?;
    let kind = parse_kind(fields[1]).ok_or_else(|| format!("type '{}' is not call or put", fields[1]))?;
    if kind != ticker.kind {
        return Err(format!("type '{}' disagrees with ticker '{}'", fields[1], fields[0]));
    }
    let maturity = calendar
        .period(ticker.date)
        .ok_or_else(|| format!("maturity {} is not in the configured maturity list", ticker.date))?;
    let number = |i: usize| -> std::result::Result<f64, String> {
        fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| format!("{} '{}' is not a number", COLUMNS[i], fields[i]))
    };
    let (bid_qty, bid_price, ask_price, ask_qty) = (number(2)?, number(3)?, number(4)?, number(5)?);
    Quote::new(
        ticker.to_string(),
        kind,
        ticker.strike,
        maturity,
        bid_price,
        ask_price,
        bid_qty,
        ask_qty,
    )
    .map_err(|e| e.to_string())
}

/// Reads a quote file. The first malformed row aborts the read with its
/// line number and the reason.
pub fn read_quotes<R: Read>(input: R, calendar: &MaturityCalendar) -> Result<Vec<Quote>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut index = [0usize; 6];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| RowError {
            line: 1,
            message: format!("missing column '{name}'"),
        })?;
    }
    let mut quotes = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let fields = index.map(|i| record.get(i).unwrap_or(""));
        quotes.push(parse_row(&fields, calendar).map_err(|message| RowError { line, message })?);
    }
    Ok(quotes)
}

/// Writes quotes in the format read by [`read_quotes`]. Tickers are rebuilt
/// from the quote fields, so ids that are not tickers are not preserved.
pub fn write_quotes<W: Write>(out: W, quotes: &[Quote], calendar: &MaturityCalendar) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(COLUMNS)?;
    for q in quotes {
        let date = calendar.date(q.maturity).ok_or_else(|| RowError {
            line: 0,
            message: format!("quote {} matures at period {} with no configured date", q.id, q.maturity),
        })?;
        let ticker = Ticker {
            date,
            kind: q.kind,
            strike: q.strike,
        };
        writer.write_record([
            ticker.to_string(),
            kind_name(q.kind).to_string(),
            q.bid_qty.to_string(),
            q.bid_price.to_string(),
            q.ask_price.to_string(),
            q.ask_qty.to_string(),
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
