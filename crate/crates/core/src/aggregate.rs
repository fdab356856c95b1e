//! Per-region cohort counts, population normalization and country summaries.
//!
//! Aggregation is a commutative fold: [`RegionTally`] values built from any
//! partition of the records merge into the same table.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::AddAssign;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Flag, Outcome, PatientRecord, PopulationTable, Sex};

/// Age ranges `[0,20) [20,40) [40,60) [60,80) [80,110]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBin {
    #[serde(rename = "0_20")]
    Age0To20,
    #[serde(rename = "20_40")]
    Age20To40,
    #[serde(rename = "40_60")]
    Age40To60,
    #[serde(rename = "60_80")]
    Age60To80,
    #[serde(rename = "80_110")]
    Age80To110,
}

impl AgeBin {
    pub const ALL: [AgeBin; 5] = [
        AgeBin::Age0To20,
        AgeBin::Age20To40,
        AgeBin::Age40To60,
        AgeBin::Age60To80,
        AgeBin::Age80To110,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgeBin::Age0To20 => "0_20",
            AgeBin::Age20To40 => "20_40",
            AgeBin::Age40To60 => "40_60",
            AgeBin::Age60To80 => "60_80",
            AgeBin::Age80To110 => "80_110",
        }
    }

    /// Inclusive lower and exclusive upper bound (the last bin includes 110).
    pub fn bounds(self) -> (u32, u32) {
        let lo = self as u32 * 20;
        (lo, if self == AgeBin::Age80To110 { 110 } else { lo + 20 })
    }
}

impl fmt::Display for AgeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (lo, hi) = self.bounds();
        write!(f, "{lo}-{hi}")
    }
}

pub fn bin_age(age: u32) -> Result<AgeBin> {
    match age {
        0..=19 => Ok(AgeBin::Age0To20),
        20..=39 => Ok(AgeBin::Age20To40),
        40..=59 => Ok(AgeBin::Age40To60),
        60..=79 => Ok(AgeBin::Age60To80),
        80..=110 => Ok(AgeBin::Age80To110),
        _ => Err(Error::Contract(format!("age {age} outside [0, 110]"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    State,
    Municipality,
}

impl Level {
    fn code_of(self, r: &PatientRecord) -> u32 {
        match self {
            Level::State => r.state,
            Level::Municipality => r.municipality,
        }
    }

    fn format(self, code: u32) -> String {
        match self {
            Level::State => format!("{code:02}"),
            Level::Municipality => format!("{code:05}"),
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(Level::State),
            "municipality" => Ok(Level::Municipality),
            _ => Err(Error::Config(format!("unknown level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    DeceasedOnly,
    All,
}

impl Cohort {
    fn admits(self, r: &PatientRecord) -> bool {
        match self {
            Cohort::DeceasedOnly => r.outcome == Outcome::Deceased,
            Cohort::All => true,
        }
    }
}

impl FromStr for Cohort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deceased_only" | "deceased" => Ok(Cohort::DeceasedOnly),
            "all" => Ok(Cohort::All),
            _ => Err(Error::Config(format!("unknown cohort {s:?}"))),
        }
    }
}

/// What to do with records whose region is not in the population table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownRegions {
    Reject,
    /// Drop them and report per-code counts in [`AggregateTable::unknown`].
    Drop,
}

/// Raw counts for one region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub total: u64,
    pub male: u64,
    pub female: u64,
    pub ages: [u64; 5],
    pub flags: [u64; 11],
}

impl Counts {
    pub fn add(&mut self, r: &PatientRecord) {
        self.total += 1;
        match r.sex {
            Sex::Male => self.male += 1,
            Sex::Female => self.female += 1,
        }
        // records are validated upstream; clamp rather than fail in the hot loop
        let bin = bin_age(r.age.min(110)).expect("age clamped");
        self.ages[bin as usize] += 1;
        for (slot, flag) in self.flags.iter_mut().zip(Flag::ALL) {
            *slot += u64::from(r.has(flag));
        }
    }
}

impl AddAssign<&Counts> for Counts {
    fn add_assign(&mut self, o: &Counts) {
        self.total += o.total;
        self.male += o.male;
        self.female += o.female;
        for (a, b) in self.ages.iter_mut().zip(o.ages) {
            *a += b;
        }
        for (a, b) in self.flags.iter_mut().zip(o.flags) {
            *a += b;
        }
    }
}

/// Chunk-local accumulator keyed by numeric region code.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionTally {
    counts: HashMap<u32, Counts>,
}

impl RegionTally {
    pub fn add(&mut self, r: &PatientRecord, level: Level, cohort: Cohort) {
        if cohort.admits(r) {
            self.counts.entry(level.code_of(r)).or_default().add(r);
        }
    }

    pub fn merge(mut self, other: RegionTally) -> RegionTally {
        for (code, c) in &other.counts {
            *self.counts.entry(*code).or_default() += c;
        }
        self
    }

    fn finish(
        self,
        level: Level,
        cohort: Cohort,
        population: &PopulationTable,
        policy: UnknownRegions,
    ) -> Result<AggregateTable> {
        let mut regions = BTreeMap::new();
        let mut unknown = BTreeMap::new();
        let mut codes: Vec<_> = self.counts.into_iter().collect();
        codes.sort_by_key(|(code, _)| *code);
        for (code, counts) in codes {
            let code = level.format(code);
            match population.get(&code) {
                Some(pop) => {
                    regions.insert(code.clone(), RegionAggregate::from_counts(code, &counts, pop));
                }
                None if policy == UnknownRegions::Drop => {
                    unknown.insert(code, counts.total);
                }
                None => return Err(Error::UnknownRegion(code)),
            }
        }
        Ok(AggregateTable {
            level,
            cohort,
            regions,
            unknown,
        })
    }
}

/// Per-region cohort counts plus population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionAggregate {
    pub region_code: String,
    /// Records in the cohort; equal to deaths for the deceased-only cohort.
    pub total_deceased: u64,
    pub male: u64,
    pub female: u64,
    /// Indexed by [`AgeBin`] order.
    pub age_counts: [u64; 5],
    /// Indexed by [`Flag::ALL`] order: nine conditions then pneumonia and intubation.
    pub flag_counts: [u64; 11],
    pub population: u64,
}

impl RegionAggregate {
    fn from_counts(region_code: String, c: &Counts, population: u64) -> Self {
        let agg = RegionAggregate {
            region_code,
            total_deceased: c.total,
            male: c.male,
            female: c.female,
            age_counts: c.ages,
            flag_counts: c.flags,
            population,
        };
        debug_assert!(agg.check().is_ok());
        agg
    }

    pub fn age_count(&self, bin: AgeBin) -> u64 {
        self.age_counts[bin as usize]
    }

    pub fn flag_count(&self, flag: Flag) -> u64 {
        self.flag_counts[flag as usize]
    }

    pub fn count(&self, variable: &Variable) -> u64 {
        match *variable {
            Variable::Deaths => self.total_deceased,
            Variable::Male => self.male,
            Variable::Female => self.female,
            Variable::Age(bin) => self.age_count(bin),
            Variable::Flag(flag) => self.flag_count(flag),
        }
    }

    /// Verifies the count invariants.
    pub fn check(&self) -> Result<()> {
        let fail = |what: &str| {
            Err(Error::Contract(format!(
                "region {}: {what}",
                self.region_code
            )))
        };
        if self.male + self.female != self.total_deceased {
            return fail("male + female != total");
        }
        if self.age_counts.iter().sum::<u64>() != self.total_deceased {
            return fail("age bins do not sum to total");
        }
        if self.flag_counts.iter().any(|&c| c > self.total_deceased) {
            return fail("flag count exceeds total");
        }
        if self.population == 0 {
            return fail("population is zero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateTable {
    pub level: Level,
    pub cohort: Cohort,
    pub regions: BTreeMap<String, RegionAggregate>,
    /// Records dropped for lack of a population entry, by region code.
    pub unknown: BTreeMap<String, u64>,
}

pub fn tally<I>(records: I, level: Level, cohort: Cohort) -> RegionTally
where
    I: IntoIterator,
    I::Item: Borrow<PatientRecord>,
{
    let mut t = RegionTally::default();
    for r in records {
        t.add(r.borrow(), level, cohort);
    }
    t
}

/// Groups records into one [`RegionAggregate`] per observed region.
pub fn aggregate_regions<I>(
    records: I,
    level: Level,
    cohort: Cohort,
    population: &PopulationTable,
    unknown: UnknownRegions,
) -> Result<AggregateTable>
where
    I: IntoIterator,
    I::Item: Borrow<PatientRecord>,
{
    tally(records, level, cohort).finish(level, cohort, population, unknown)
}

/// Parallel [`aggregate_regions`] over `chunk`-sized slices.
pub fn aggregate_regions_par(
    records: &[PatientRecord],
    chunk: usize,
    level: Level,
    cohort: Cohort,
    population: &PopulationTable,
    unknown: UnknownRegions,
) -> Result<AggregateTable> {
    records
        .par_chunks(chunk.max(1))
        .map(|c| tally(c, level, cohort))
        .reduce(RegionTally::default, RegionTally::merge)
        .finish(level, cohort, population, unknown)
}

/// Sums a municipality table into states by 2-digit prefix.
pub fn rollup_to_states(
    table: &AggregateTable,
    state_population: &PopulationTable,
) -> Result<AggregateTable> {
    if table.level != Level::Municipality {
        return Err(Error::Contract("rollup needs a municipality table".into()));
    }
    let mut by_state: BTreeMap<String, Counts> = BTreeMap::new();
    for agg in table.regions.values() {
        let c = by_state.entry(agg.region_code[..2].to_string()).or_default();
        *c += &Counts {
            total: agg.total_deceased,
            male: agg.male,
            female: agg.female,
            ages: agg.age_counts,
            flags: agg.flag_counts,
        };
    }
    let mut regions = BTreeMap::new();
    for (code, counts) in by_state {
        let pop = state_population
            .get(&code)
            .ok_or_else(|| Error::UnknownRegion(code.clone()))?;
        regions.insert(code.clone(), RegionAggregate::from_counts(code, &counts, pop));
    }
    Ok(AggregateTable {
        level: Level::State,
        cohort: table.cohort,
        regions,
        unknown: BTreeMap::new(),
    })
}

/// A named cohort count that can be mapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Deaths,
    Male,
    Female,
    Age(AgeBin),
    Flag(Flag),
}

impl Variable {
    pub fn sexes() -> [Variable; 2] {
        [Variable::Male, Variable::Female]
    }

    pub fn ages() -> [Variable; 5] {
        AgeBin::ALL.map(Variable::Age)
    }

    /// The eight panels of the condition facet: six conditions, pneumonia
    /// and intubation.
    pub fn condition_panels() -> [Variable; 8] {
        [
            Flag::Diabetes,
            Flag::Obesity,
            Flag::Cardiovascular,
            Flag::Hypertension,
            Flag::Asthma,
            Flag::ChronicKidney,
            Flag::Pneumonia,
            Flag::Intubated,
        ]
        .map(Variable::Flag)
    }

    pub fn title(&self) -> String {
        match self {
            Variable::Deaths => "deaths".into(),
            Variable::Male => "male".into(),
            Variable::Female => "female".into(),
            Variable::Age(b) => format!("age {b}"),
            Variable::Flag(f) => f.name().replace('_', " "),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Deaths => f.write_str("deaths"),
            Variable::Male => f.write_str("deaths_male"),
            Variable::Female => f.write_str("deaths_female"),
            Variable::Age(b) => write!(f, "deaths_age_{}", b.label()),
            Variable::Flag(flag) => write!(f, "deaths_with_{flag}"),
        }
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deaths" => return Ok(Variable::Deaths),
            "deaths_male" => return Ok(Variable::Male),
            "deaths_female" => return Ok(Variable::Female),
            _ => {}
        }
        if let Some(label) = s.strip_prefix("deaths_age_") {
            if let Some(b) = AgeBin::ALL.into_iter().find(|b| b.label() == label) {
                return Ok(Variable::Age(b));
            }
        }
        if let Some(flag) = s.strip_prefix("deaths_with_") {
            return flag.parse().map(Variable::Flag);
        }
        Err(Error::Config(format!("unknown variable {s:?}")))
    }
}

impl Serialize for Variable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Per100k,
    PerMillion,
    ShareOfNationalTotal,
    /// Raw counts, for absolute maps.
    Count,
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_100k" | "per_100k_population" => Ok(Basis::Per100k),
            "per_million" | "per_million_population" => Ok(Basis::PerMillion),
            "share" | "share_of_national_total" => Ok(Basis::ShareOfNationalTotal),
            "count" => Ok(Basis::Count),
            _ => Err(Error::Config(format!("unknown basis {s:?}"))),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Per100k => "per_100k",
            Basis::PerMillion => "per_million",
            Basis::ShareOfNationalTotal => "share",
            Basis::Count => "count",
        })
    }
}

/// Region code → nonnegative value for one variable on one basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub variable: Variable,
    pub basis: Basis,
    pub values: BTreeMap<String, f64>,
}

impl RateTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let ctx = "rate table";
        let err = |e: csv::Error| Error::data(ctx, e);
        w.write_record(["region_code", "value"]).map_err(err)?;
        for (code, v) in &self.values {
            w.write_record([code.as_str(), &v.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(ctx, e))
    }
}

pub fn normalize_rates(
    agg: &BTreeMap<String, RegionAggregate>,
    variable: &Variable,
    basis: Basis,
) -> Result<RateTable> {
    let national: u64 = agg.values().map(|a| a.count(variable)).sum();
    if basis == Basis::ShareOfNationalTotal && national == 0 {
        return Err(Error::Contract(format!(
            "national total of {variable} is zero; shares undefined"
        )));
    }
    let mut values = BTreeMap::new();
    for (code, a) in agg {
        if a.population == 0 {
            return Err(Error::Contract(format!("region {code} has zero population")));
        }
        let count = a.count(variable) as f64;
        let v = match basis {
            Basis::Per100k => count * 100_000.0 / a.population as f64,
            Basis::PerMillion => count * 1_000_000.0 / a.population as f64,
            Basis::ShareOfNationalTotal => count / national as f64,
            Basis::Count => count,
        };
        values.insert(code.clone(), v);
    }
    Ok(RateTable {
        variable: *variable,
        basis,
        values,
    })
}

const AGG_FIXED: [&str; 4] = ["region_code", "total_deceased", "male", "female"];

fn aggregate_header() -> Vec<String> {
    AGG_FIXED
        .iter()
        .map(|s| s.to_string())
        .chain(AgeBin::ALL.iter().map(|b| format!("age_{}", b.label())))
        .chain(Flag::ALL.iter().map(|f| f.name().to_string()))
        .chain(std::iter::once("population".to_string()))
        .collect()
}

pub fn write_aggregates<W: Write>(out: W, table: &BTreeMap<String, RegionAggregate>) -> Result<()> {
    let ctx = "aggregates";
    let err = |e: csv::Error| Error::data(ctx, e);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(aggregate_header()).map_err(err)?;
    for a in table.values() {
        let mut row = vec![
            a.region_code.clone(),
            a.total_deceased.to_string(),
            a.male.to_string(),
            a.female.to_string(),
        ];
        row.extend(a.age_counts.iter().map(u64::to_string));
        row.extend(a.flag_counts.iter().map(u64::to_string));
        row.push(a.population.to_string());
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn read_aggregates<R: Read>(input: R) -> Result<BTreeMap<String, RegionAggregate>> {
    let ctx = "aggregates";
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::data(ctx, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != aggregate_header() {
        return Err(Error::SchemaMismatch("unexpected aggregates header".into()));
    }
    let mut out = BTreeMap::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::data(ctx, e))?;
        let num = |i: usize| -> Result<u64> {
            row[i]
                .parse()
                .map_err(|_| Error::data(ctx, format!("bad count {:?}", &row[i])))
        };
        let mut age_counts = [0; 5];
        for (k, slot) in age_counts.iter_mut().enumerate() {
            *slot = num(4 + k)?;
        }
        let mut flag_counts = [0; 11];
        for (k, slot) in flag_counts.iter_mut().enumerate() {
            *slot = num(9 + k)?;
        }
        let agg = RegionAggregate {
            region_code: row[0].to_string(),
            total_deceased: num(1)?,
            male: num(2)?,
            female: num(3)?,
            age_counts,
            flag_counts,
            population: num(20)?,
        };
        agg.check()?;
        out.insert(agg.region_code.clone(), agg);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrueFalse {
    #[serde(rename = "true")]
    pub yes: u64,
    #[serde(rename = "false")]
    pub no: u64,
}

/// Distribution of every variable over a record set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VariableSummary {
    pub records: u64,
    pub flags: BTreeMap<Flag, TrueFalse>,
    pub sex: BTreeMap<Sex, u64>,
    pub age_bins: BTreeMap<AgeBin, u64>,
    pub outcome: BTreeMap<Outcome, u64>,
}

pub fn variable_summary<I>(records: I) -> VariableSummary
where
    I: IntoIterator,
    I::Item: Borrow<PatientRecord>,
{
    let mut s = VariableSummary {
        flags: Flag::ALL.iter().map(|f| (*f, TrueFalse::default())).collect(),
        sex: [(Sex::Male, 0), (Sex::Female, 0)].into(),
        age_bins: AgeBin::ALL.iter().map(|b| (*b, 0)).collect(),
        outcome: [(Outcome::Deceased, 0), (Outcome::Survived, 0)].into(),
        ..Default::default()
    };
    for r in records {
        let r = r.borrow();
        s.records += 1;
        for flag in Flag::ALL {
            let tf = s.flags.get_mut(&flag).expect("all flags present");
            if r.has(flag) {
                tf.yes += 1;
            } else {
                tf.no += 1;
            }
        }
        *s.sex.get_mut(&r.sex).expect("both sexes") += 1;
        if let Ok(bin) = bin_age(r.age) {
            *s.age_bins.get_mut(&bin).expect("all bins") += 1;
        }
        *s.outcome.get_mut(&r.outcome).expect("both outcomes") += 1;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Cases,
    Recovered,
    Deaths,
}

impl Indicator {
    pub fn column(self) -> &'static str {
        match self {
            Indicator::Cases => "cases",
            Indicator::Recovered => "recovered",
            Indicator::Deaths => "deaths",
        }
    }
}

impl FromStr for Indicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cases" => Ok(Indicator::Cases),
            "recovered" => Ok(Indicator::Recovered),
            "deaths" => Ok(Indicator::Deaths),
            _ => Err(Error::Config(format!("unknown indicator {s:?}"))),
        }
    }
}

fn parse_count(text: &str) -> Option<u64> {
    let t = text.trim();
    t.parse::<u64>().ok().or_else(|| {
        let f: f64 = t.parse().ok()?;
        (f.is_finite() && f >= 0.0 && f.fract() == 0.0).then_some(f as u64)
    })
}

/// Top `n` countries by an indicator, descending, ties by country name.
/// Rows with an empty value for the indicator are skipped.
pub fn read_rank_totals<R: Read>(input: R, indicator: Indicator, n: usize) -> Result<Vec<(String, u64)>> {
    let ctx = "country totals";
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::data(ctx, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::SchemaMismatch(format!("country file has no {name} column")))
    };
    let country_col = find("country")?;
    let value_col = find(indicator.column())?;
    let mut rows = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::data(ctx, e))?;
        let raw = row.get(value_col).unwrap_or("").trim();
        if raw.is_empty() {
            continue;
        }
        let value = parse_count(raw)
            .ok_or_else(|| Error::data(ctx, format!("bad {} value {raw:?}", indicator.column())))?;
        rows.push((row.get(country_col).unwrap_or("").trim().to_string(), value));
    }
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(n);
    Ok(rows)
}

pub fn rank_totals(path: impl AsRef<Path>, indicator: &str, n: usize) -> Result<Vec<(String, u64)>> {
    let indicator: Indicator = indicator.parse()?;
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rank_totals(file, indicator, n)
}

/// Daily counts scaled to deaths per million inhabitants.
pub fn per_million_series(
    daily: &[(NaiveDate, u64)],
    population: u64,
) -> Result<Vec<(NaiveDate, f64)>> {
    if population == 0 {
        return Err(Error::Contract("population must be positive".into()));
    }
    if let Some(w) = daily.windows(2).find(|w| w[1].0 <= w[0].0) {
        return Err(Error::Contract(format!(
            "dates not strictly increasing at {}",
            w[1].0
        )));
    }
    Ok(daily
        .iter()
        .map(|&(d, c)| (d, c as f64 * 1_000_000.0 / population as f64))
        .collect())
}

/// Reads a `date,count` CSV.
pub fn read_daily_series<R: Read>(input: R) -> Result<Vec<(NaiveDate, u64)>> {
    let ctx = "daily series";
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::data(ctx, e))?;
        if row.len() < 2 {
            return Err(Error::data(ctx, "expected date,count"));
        }
        let date = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d")
            .map_err(|e| Error::data(ctx, format!("{:?}: {e}", &row[0])))?;
        let count = parse_count(&row[1]).ok_or_else(|| Error::data(ctx, format!("bad count {:?}", &row[1])))?;
        out.push((date, count));
    }
    Ok(out)
}
