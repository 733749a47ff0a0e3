//! Price, rate and option-chain ingestion; log-returns, rolling upturn
//! probabilities and sign tests.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_string, parse_date, parse_f64, read_columns};
use crate::stats::binomial_pmf;

/// Column names used when reading a price file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PriceSchema {
    pub date_column: String,
    pub price_column: String,
}

impl Default for PriceSchema {
    fn default() -> Self {
        PriceSchema { date_column: "date".into(), price_column: "close".into() }
    }
}

/// Dated, strictly positive prices in ascending date order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    /// Validates and sorts the observations.
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::invalid("dates and prices differ in length"));
        }
        let mut rows: Vec<(NaiveDate, f64)> = dates.into_iter().zip(prices).collect();
        rows.sort_by_key(|r| r.0);
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("duplicate date {}", w[0].0)));
            }
        }
        if let Some((d, p)) = rows.iter().find(|r| !(r.1 > 0.0) || !r.1.is_finite()) {
            return Err(Error::invalid(format!("non-positive price {p} on {d}")));
        }
        let (dates, prices) = rows.into_iter().unzip();
        Ok(PriceSeries { dates, prices })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn to_csv(&self) -> String {
        csv_string(&["date", "close"], self.dates.iter().zip(&self.prices).map(|(d, p)| [d.to_string(), p.to_string()]))
    }
}

pub fn load_price_series(path: &Path, schema: &PriceSchema) -> Result<PriceSeries> {
    let (records, idx) = read_columns(path, &[&schema.date_column, &schema.price_column])?;
    let mut dates = Vec::with_capacity(records.len());
    let mut prices = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        dates.push(parse_date(path, line, &rec[idx[0]])?);
        prices.push(parse_f64(path, line, &schema.price_column, &rec[idx[1]])?);
    }
    PriceSeries::new(dates, prices).map_err(|e| match e {
        Error::InvalidInput(m) => Error::parse(path, m),
        other => other,
    })
}

/// Per-period log-returns; `dates[k]` is the date the return is realized.
#[derive(Debug, Clone, PartialEq)]
pub struct LogReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl LogReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

pub fn log_returns(series: &PriceSeries) -> Result<LogReturnSeries> {
    if series.len() < 2 {
        return Err(Error::invalid("log-returns need at least two prices"));
    }
    let returns = series.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    Ok(LogReturnSeries { dates: series.dates[1..].to_vec(), returns })
}

/// Annualized risk-free rates keyed by date.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub dates: Vec<NaiveDate>,
    pub rates: Vec<f64>,
}

impl RateCurve {
    pub fn new(dates: Vec<NaiveDate>, rates: Vec<f64>) -> Result<Self> {
        if dates.is_empty() || dates.len() != rates.len() {
            return Err(Error::invalid("rate curve needs matching, non-empty dates and rates"));
        }
        let mut rows: Vec<(NaiveDate, f64)> = dates.into_iter().zip(rates).collect();
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate date in rate curve"));
        }
        if rows.iter().any(|r| !r.1.is_finite()) {
            return Err(Error::invalid("non-finite rate"));
        }
        let (dates, rates) = rows.into_iter().unzip();
        Ok(RateCurve { dates, rates })
    }

    /// A curve holding one rate for all dates.
    pub fn flat(rate: f64) -> Self {
        RateCurve { dates: vec![NaiveDate::MIN], rates: vec![rate] }
    }

    /// Rate of the nearest quote on or before `date`; dates before the first
    /// quote take the first rate.
    pub fn rate_at(&self, date: NaiveDate) -> f64 {
        match self.dates.binary_search(&date) {
            Ok(i) => self.rates[i],
            Err(0) => self.rates[0],
            Err(i) => self.rates[i - 1],
        }
    }
}

pub fn load_rate_curve(path: &Path) -> Result<RateCurve> {
    let (records, idx) = read_columns(path, &["date", "rate"])?;
    let mut dates = Vec::new();
    let mut rates = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        dates.push(parse_date(path, i + 2, &rec[idx[0]])?);
        rates.push(parse_f64(path, i + 2, "rate", &rec[idx[1]])?);
    }
    RateCurve::new(dates, rates).map_err(|e| Error::parse(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl std::str::FromStr for OptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(Error::invalid(format!("unknown option kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionQuote {
    pub expiry: NaiveDate,
    pub strike: f64,
    pub kind: OptionKind,
    pub price: f64,
}

/// Option quotes observed on a single date.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionChain {
    pub quote_date: NaiveDate,
    pub quotes: Vec<OptionQuote>,
}

impl OptionChain {
    pub fn new(quote_date: NaiveDate, quotes: Vec<OptionQuote>) -> Result<Self> {
        for q in &quotes {
            if !(q.strike > 0.0) {
                return Err(Error::invalid(format!("non-positive strike {}", q.strike)));
            }
            if q.expiry <= quote_date {
                return Err(Error::invalid(format!("expiry {} not after quote date {quote_date}", q.expiry)));
            }
            if !(q.price >= 0.0) || !q.price.is_finite() {
                return Err(Error::invalid(format!("negative or non-finite price {}", q.price)));
            }
        }
        Ok(OptionChain { quote_date, quotes })
    }

    /// Calendar days from the quote date to an expiry.
    pub fn days_to(&self, expiry: NaiveDate) -> i64 {
        (expiry - self.quote_date).num_days()
    }

    pub fn to_csv(&self) -> String {
        csv_string(
            &["quote_date", "expiry", "strike", "kind", "price"],
            self.quotes.iter().map(|q| {
                [
                    self.quote_date.to_string(),
                    q.expiry.to_string(),
                    q.strike.to_string(),
                    q.kind.to_string(),
                    q.price.to_string(),
                ]
            }),
        )
    }
}

pub fn load_option_chain(path: &Path) -> Result<OptionChain> {
    let (records, idx) = read_columns(path, &["quote_date", "expiry", "strike", "kind", "price"])?;
    if records.is_empty() {
        return Err(Error::parse(path, "empty option chain"));
    }
    let mut quote_date = None;
    let mut quotes = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        let qd = parse_date(path, line, &rec[idx[0]])?;
        match quote_date {
            None => quote_date = Some(qd),
            Some(d) if d != qd => {
                return Err(Error::parse(path, format!("line {line}: chain mixes quote dates {d} and {qd}")))
            }
            _ => {}
        }
        quotes.push(OptionQuote {
            expiry: parse_date(path, line, &rec[idx[1]])?,
            strike: parse_f64(path, line, "strike", &rec[idx[2]])?,
            kind: rec[idx[3]].parse().map_err(|e: Error| Error::parse(path, format!("line {line}: {e}")))?,
            price: parse_f64(path, line, "price", &rec[idx[4]])?,
        });
    }
    OptionChain::new(quote_date.expect("non-empty"), quotes).map_err(|e| Error::parse(path, e.to_string()))
}

/// Upturn-probability estimate over one window of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub window_end: NaiveDate,
    pub p_hat: f64,
    pub n_up: usize,
    pub n_total: usize,
}

/// Fraction of non-negative returns in each trailing window of `window`
/// observations. Zero returns count as upturns.
pub fn rolling_upturn_probability(returns: &LogReturnSeries, window: usize) -> Result<Vec<WindowEstimate>> {
    if window == 0 || window > returns.len() {
        return Err(Error::invalid(format!("window {window} must be in 1..={}", returns.len())));
    }
    let up: Vec<usize> = returns.returns.iter().map(|&r| usize::from(r >= 0.0)).collect();
    let mut n_up: usize = up[..window].iter().sum();
    let mut out = Vec::with_capacity(returns.len() - window + 1);
    for end in window - 1..returns.len() {
        if end >= window {
            n_up = n_up + up[end] - up[end - window];
        }
        out.push(WindowEstimate {
            window_end: returns.dates[end],
            p_hat: n_up as f64 / window as f64,
            n_up,
            n_total: window,
        });
    }
    Ok(out)
}

pub fn window_estimates_csv(estimates: &[WindowEstimate]) -> String {
    csv_string(
        &["window_end", "p_hat", "n_up", "n_total"],
        estimates
            .iter()
            .map(|e| [e.window_end.to_string(), e.p_hat.to_string(), e.n_up.to_string(), e.n_total.to_string()]),
    )
}

/// Exact two-sided binomial sign test:
/// `min(1, 2·min(P(X ≤ n_up), P(X ≥ n_up)))` with `X ~ Binomial(n_total, p0)`.
pub fn sign_test_two_sided(n_up: usize, n_total: usize, p0: f64) -> Result<f64> {
    if n_up > n_total {
        return Err(Error::invalid(format!("n_up {n_up} exceeds n_total {n_total}")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::invalid(format!("p0 {p0} outside (0,1)")));
    }
    let pmf = binomial_pmf(n_total, p0);
    let lower: f64 = pmf[..=n_up].iter().sum();
    let upper: f64 = pmf[n_up..].iter().rev().sum();
    Ok((2.0 * lower.min(upper)).min(1.0))
}

/// Upturn probabilities implied by the CRR and JR parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedUpturn {
    pub p_crr: f64,
    pub p_jr: f64,
    pub crr_clamped: bool,
    pub jr_clamped: bool,
}

const CLAMP_EPS: f64 = 1e-12;

fn clamp_open(p: f64) -> (f64, bool) {
    if p <= 0.0 {
        (CLAMP_EPS, true)
    } else if p >= 1.0 {
        (1.0 - CLAMP_EPS, true)
    } else {
        (p, false)
    }
}

pub fn crr_jr_implied_p(mu: f64, sigma: f64, r: f64, dt: f64) -> Result<ImpliedUpturn> {
    if !(sigma > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid("sigma and dt must be positive"));
    }
    let sq = dt.sqrt();
    let (p_crr, crr_clamped) = clamp_open(0.5 + (mu - 0.5 * sigma * sigma) / (2.0 * sigma) * sq);
    let theta = (mu - r) / sigma;
    let (p_jr, jr_clamped) = clamp_open(0.5 + theta.abs() * sq);
    Ok(ImpliedUpturn { p_crr, p_jr, crr_clamped, jr_clamped })
}

/// Rolling CRR/JR implied upturn probabilities, one per window end, with μ
/// and σ estimated from the window's log-returns and `r` from the curve.
pub fn rolling_crr_jr(
    returns: &LogReturnSeries,
    window: usize,
    dt: f64,
    rates: &RateCurve,
) -> Result<Vec<(NaiveDate, ImpliedUpturn)>> {
    if window < 2 || window > returns.len() {
        return Err(Error::invalid(format!("window {window} must be in 2..={}", returns.len())));
    }
    let mut out = Vec::with_capacity(returns.len() - window + 1);
    for end in window - 1..returns.len() {
        let w = &returns.returns[end + 1 - window..=end];
        let m = crate::stats::mean(w);
        let var = crate::stats::sample_variance(w);
        let sigma = (var / dt).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::numerical(format!("zero return variance in window ending {}", returns.dates[end])));
        }
        let mu = m / dt + 0.5 * sigma * sigma;
        let r = rates.rate_at(returns.dates[end]);
        out.push((returns.dates[end], crr_jr_implied_p(mu, sigma, r, dt)?));
    }
    Ok(out)
}

/// Calendar partition used for interval sign tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Week,
    Month,
    Year,
}

impl Period {
    fn key(self, d: NaiveDate) -> (i32, u32) {
        match self {
            Period::Week => {
                let w = d.iso_week();
                (w.year(), w.week())
            }
            Period::Month => (d.year(), d.month()),
            Period::Year => (d.year(), 0),
        }
    }
}

/// Paired sign test over one calendar interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSignTest {
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Observations strictly above the reference.
    pub n_above: usize,
    /// Observations differing from the reference (ties dropped).
    pub n_nonzero: usize,
    pub p_value: f64,
}

/// Splits a dated series into non-overlapping calendar intervals and runs a
/// two-sided sign test of `values = reference` on each, with H0 success
/// probability 1/2 and ties dropped.
///
/// The first and last intervals are treated as partial and dropped, as are
/// intervals in which every observation ties with the reference.
pub fn interval_sign_tests(
    dates: &[NaiveDate],
    values: &[f64],
    reference: &[f64],
    period: Period,
) -> Result<Vec<IntervalSignTest>> {
    if dates.len() != values.len() || values.len() != reference.len() {
        return Err(Error::invalid("dates, values and reference differ in length"));
    }
    let mut groups: BTreeMap<(i32, u32), Vec<usize>> = BTreeMap::new();
    for (i, &d) in dates.iter().enumerate() {
        groups.entry(period.key(d)).or_default().push(i);
    }
    let n_groups = groups.len();
    let mut out = Vec::new();
    for (g, idx) in groups.values().enumerate() {
        if g == 0 || g + 1 == n_groups {
            continue;
        }
        let mut above = 0;
        let mut nonzero = 0;
        for &i in idx {
            let diff = values[i] - reference[i];
            if diff != 0.0 {
                nonzero += 1;
                if diff > 0.0 {
                    above += 1;
                }
            }
        }
        if nonzero == 0 {
            continue;
        }
        out.push(IntervalSignTest {
            start: dates[idx[0]],
            end: dates[*idx.last().expect("non-empty group")],
            n_above: above,
            n_nonzero: nonzero,
            p_value: sign_test_two_sided(above, nonzero, 0.5)?,
        });
    }
    Ok(out)
}

pub fn interval_sign_tests_csv(period: Period, tests: &[IntervalSignTest]) -> String {
    let name = match period {
        Period::Week => "week",
        Period::Month => "month",
        Period::Year => "year",
    };
    csv_string(
        &["period", "start", "end", "n_above", "n_nonzero", "p_value"],
        tests.iter().map(|t| {
            [
                name.to_string(),
                t.start.to_string(),
                t.end.to_string(),
                t.n_above.to_string(),
                t.n_nonzero.to_string(),
                t.p_value.to_string(),
            ]
        }),
    )
}
