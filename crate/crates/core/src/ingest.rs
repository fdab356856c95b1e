//! Schema dictionaries, patient-record cleaning, population tables and region
//! geometry.
//!
//! Patient files are comma-delimited UTF-8 with a header row. Every logical
//! field is located through the [`Schema`] column map, decoded, and the row is
//! either kept as a [`PatientRecord`] or counted once in the [`DropLog`] under
//! the most severe reason found.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use csv::ByteRecord;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{self, Point, Polygon, Ring};

/// INEGI state codes run 01..=32.
pub const MAX_STATE_CODE: u32 = 32;

/// Three-digit municipality placeholders used for "not specified".
const MUNICIPALITY_SENTINELS: [u32; 3] = [997, 998, 999];

/// Logical columns the pipeline reads from a patient file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    State,
    Municipality,
    Sex,
    Age,
    Outcome,
    Diabetes,
    Copd,
    Asthma,
    Immunosuppression,
    Hypertension,
    Cardiovascular,
    Obesity,
    ChronicKidney,
    OtherComorbidity,
    Pneumonia,
    Intubated,
}

impl Field {
    pub const ALL: [Field; 16] = [
        Field::State,
        Field::Municipality,
        Field::Sex,
        Field::Age,
        Field::Outcome,
        Field::Diabetes,
        Field::Copd,
        Field::Asthma,
        Field::Immunosuppression,
        Field::Hypertension,
        Field::Cardiovascular,
        Field::Obesity,
        Field::ChronicKidney,
        Field::OtherComorbidity,
        Field::Pneumonia,
        Field::Intubated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::State => "state",
            Field::Municipality => "municipality",
            Field::Sex => "sex",
            Field::Age => "age",
            Field::Outcome => "outcome",
            Field::Diabetes => "diabetes",
            Field::Copd => "copd",
            Field::Asthma => "asthma",
            Field::Immunosuppression => "immunosuppression",
            Field::Hypertension => "hypertension",
            Field::Cardiovascular => "cardiovascular",
            Field::Obesity => "obesity",
            Field::ChronicKidney => "chronic_kidney",
            Field::OtherComorbidity => "other_comorbidity",
            Field::Pneumonia => "pneumonia",
            Field::Intubated => "intubated",
        }
    }

    fn as_flag(self) -> Option<Flag> {
        Flag::ALL.into_iter().find(|f| f.field() == self)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown logical field {s:?}")))
    }
}

/// Boolean patient attributes: nine pre-existing conditions and two clinical
/// features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Diabetes,
    Copd,
    Asthma,
    Immunosuppression,
    Hypertension,
    Cardiovascular,
    Obesity,
    ChronicKidney,
    OtherComorbidity,
    Pneumonia,
    Intubated,
}

impl Flag {
    pub const ALL: [Flag; 11] = [
        Flag::Diabetes,
        Flag::Copd,
        Flag::Asthma,
        Flag::Immunosuppression,
        Flag::Hypertension,
        Flag::Cardiovascular,
        Flag::Obesity,
        Flag::ChronicKidney,
        Flag::OtherComorbidity,
        Flag::Pneumonia,
        Flag::Intubated,
    ];

    pub const CONDITIONS: [Flag; 9] = [
        Flag::Diabetes,
        Flag::Copd,
        Flag::Asthma,
        Flag::Immunosuppression,
        Flag::Hypertension,
        Flag::Cardiovascular,
        Flag::Obesity,
        Flag::ChronicKidney,
        Flag::OtherComorbidity,
    ];

    pub const CLINICAL: [Flag; 2] = [Flag::Pneumonia, Flag::Intubated];

    pub fn field(self) -> Field {
        match self {
            Flag::Diabetes => Field::Diabetes,
            Flag::Copd => Field::Copd,
            Flag::Asthma => Field::Asthma,
            Flag::Immunosuppression => Field::Immunosuppression,
            Flag::Hypertension => Field::Hypertension,
            Flag::Cardiovascular => Field::Cardiovascular,
            Flag::Obesity => Field::Obesity,
            Flag::ChronicKidney => Field::ChronicKidney,
            Flag::OtherComorbidity => Field::OtherComorbidity,
            Flag::Pneumonia => Field::Pneumonia,
            Flag::Intubated => Field::Intubated,
        }
    }

    pub fn name(self) -> &'static str {
        self.field().name()
    }

    pub fn is_condition(self) -> bool {
        !matches!(self, Flag::Pneumonia | Flag::Intubated)
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Flag::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown flag {s:?}")))
    }
}

/// Compact set of [`Flag`]s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FlagSet(u16);

impl FlagSet {
    pub fn contains(self, flag: Flag) -> bool {
        self.0 & flag.bit() != 0
    }

    pub fn insert(&mut self, flag: Flag) {
        self.0 |= flag.bit();
    }

    pub fn with(mut self, flag: Flag, value: bool) -> Self {
        if value {
            self.insert(flag);
        } else {
            self.0 &= !flag.bit();
        }
        self
    }
}

impl FromIterator<Flag> for FlagSet {
    fn from_iter<I: IntoIterator<Item = Flag>>(iter: I) -> Self {
        let mut set = FlagSet::default();
        for f in iter {
            set.insert(f);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Deceased,
    Survived,
}

/// One cleaned patient row.
///
/// Region codes are stored numerically; [`state_code`](Self::state_code) and
/// [`municipality_code`](Self::municipality_code) give the zero-padded join
/// keys (2 and 5 digits, the municipality code carrying its state prefix).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatientRecord {
    pub state: u32,
    pub municipality: u32,
    pub sex: Sex,
    pub age: u32,
    pub outcome: Outcome,
    pub flags: FlagSet,
}

impl PatientRecord {
    pub fn state_code(&self) -> String {
        format!("{:02}", self.state)
    }

    pub fn municipality_code(&self) -> String {
        format!("{:05}", self.municipality)
    }

    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(flag)
    }

    pub fn is_deceased(&self) -> bool {
        self.outcome == Outcome::Deceased
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexCodes {
    pub male: i64,
    pub female: i64,
}

impl Default for SexCodes {
    // ministry dictionary: 1 = MUJER, 2 = HOMBRE
    fn default() -> Self {
        SexCodes { male: 2, female: 1 }
    }
}

/// Digit widths of zero-padded region codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegionCodeWidth {
    pub state: usize,
    pub municipality: usize,
}

impl Default for RegionCodeWidth {
    fn default() -> Self {
        RegionCodeWidth {
            state: 2,
            municipality: 5,
        }
    }
}

/// Validated column dictionary and value encodings for a patient file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schema {
    /// Logical field → source column name.
    pub column_map: BTreeMap<Field, String>,
    pub flag_true_code: i64,
    pub flag_false_code: i64,
    pub sentinel_codes: BTreeSet<i64>,
    /// Further codes decoded as false, e.g. "not applicable".
    pub extra_false_codes: BTreeSet<i64>,
    /// Codes in the age column that mean "unknown". Kept apart from
    /// `sentinel_codes` because 97-99 are valid ages.
    pub age_sentinel_codes: BTreeSet<i64>,
    pub sex_codes: SexCodes,
    pub region_code_width: RegionCodeWidth,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    column_map: BTreeMap<String, String>,
    #[serde(default = "default_true_code")]
    flag_true_code: i64,
    #[serde(default = "default_false_code")]
    flag_false_code: i64,
    #[serde(default = "default_sentinels")]
    sentinel_codes: BTreeSet<i64>,
    #[serde(default)]
    extra_false_codes: BTreeSet<i64>,
    #[serde(default)]
    age_sentinel_codes: BTreeSet<i64>,
    #[serde(default)]
    sex_codes: SexCodes,
}

fn default_true_code() -> i64 {
    1
}

fn default_false_code() -> i64 {
    2
}

fn default_sentinels() -> BTreeSet<i64> {
    BTreeSet::from([97, 98, 99])
}

impl Schema {
    /// The schema of cleaned-record files written by [`write_patients`]:
    /// columns named after their logical fields, default codes.
    pub fn canonical() -> Self {
        Schema {
            column_map: Field::ALL
                .into_iter()
                .map(|f| (f, f.name().to_string()))
                .collect(),
            flag_true_code: default_true_code(),
            flag_false_code: default_false_code(),
            sentinel_codes: default_sentinels(),
            extra_false_codes: BTreeSet::new(),
            age_sentinel_codes: BTreeSet::new(),
            sex_codes: SexCodes::default(),
            region_code_width: RegionCodeWidth::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SchemaFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        let mut column_map = BTreeMap::new();
        for (logical, source) in raw.column_map {
            let field: Field = logical.parse()?;
            column_map.insert(field, source);
        }
        let schema = Schema {
            column_map,
            flag_true_code: raw.flag_true_code,
            flag_false_code: raw.flag_false_code,
            sentinel_codes: raw.sentinel_codes,
            extra_false_codes: raw.extra_false_codes,
            age_sentinel_codes: raw.age_sentinel_codes,
            sex_codes: raw.sex_codes,
            region_code_width: RegionCodeWidth::default(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for field in Field::ALL {
            if !self.column_map.contains_key(&field) {
                return Err(Error::Config(format!("missing mapping: {field}")));
            }
        }
        let mut seen: HashMap<&str, Field> = HashMap::new();
        for (field, source) in &self.column_map {
            if source.is_empty() {
                return Err(Error::Config(format!("empty source column for {field}")));
            }
            if let Some(other) = seen.insert(source.as_str(), *field) {
                return Err(Error::Config(format!(
                    "duplicate source column {source:?} mapped by {other} and {field}"
                )));
            }
        }
        if self.flag_true_code == self.flag_false_code {
            return Err(Error::Config(
                "flag_true_code and flag_false_code must differ".into(),
            ));
        }
        for code in [self.flag_true_code, self.flag_false_code] {
            if self.sentinel_codes.contains(&code) {
                return Err(Error::Config(format!(
                    "flag code {code} is also listed in sentinel_codes"
                )));
            }
        }
        if let Some(code) = self
            .extra_false_codes
            .iter()
            .find(|c| **c == self.flag_true_code || self.sentinel_codes.contains(c))
        {
            return Err(Error::Config(format!(
                "extra false code {code} clashes with the true code or a sentinel"
            )));
        }
        let SexCodes { male, female } = self.sex_codes;
        if male == female || self.sentinel_codes.contains(&male) || self.sentinel_codes.contains(&female) {
            return Err(Error::Config("sex codes must be distinct non-sentinel values".into()));
        }
        Ok(())
    }

    pub fn column(&self, field: Field) -> &str {
        &self.column_map[&field]
    }
}

pub fn parse_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schema::from_json(&text)
}

/// Why a patient row was not kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MissingField,
    SentinelValue,
    AgeOutOfRange,
    UnknownRegion,
    MalformedRow,
}

impl DropReason {
    pub const ALL: [DropReason; 5] = [
        DropReason::MissingField,
        DropReason::SentinelValue,
        DropReason::AgeOutOfRange,
        DropReason::UnknownRegion,
        DropReason::MalformedRow,
    ];

    /// Lower is more severe; a row failing several checks is logged once
    /// under its most severe reason.
    fn severity(self) -> u8 {
        match self {
            DropReason::MalformedRow => 0,
            DropReason::MissingField => 1,
            DropReason::SentinelValue => 2,
            DropReason::AgeOutOfRange => 3,
            DropReason::UnknownRegion => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagValue {
    True,
    False,
    /// Not usable; the reason is either a sentinel or a malformed code.
    Missing(DropReason),
}

/// Decodes one binary-coded cell. Total and pure.
pub fn decode_flag(raw: i64, schema: &Schema) -> FlagValue {
    if raw == schema.flag_true_code {
        FlagValue::True
    } else if raw == schema.flag_false_code || schema.extra_false_codes.contains(&raw) {
        FlagValue::False
    } else if schema.sentinel_codes.contains(&raw) {
        FlagValue::Missing(DropReason::SentinelValue)
    } else {
        FlagValue::Missing(DropReason::MalformedRow)
    }
}

/// Accounting for every row read from a patient file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropLog {
    pub rows_read: u64,
    pub rows_kept: u64,
    pub drops_by_reason: BTreeMap<DropReason, u64>,
}

impl Default for DropLog {
    fn default() -> Self {
        DropLog {
            rows_read: 0,
            rows_kept: 0,
            drops_by_reason: DropReason::ALL.into_iter().map(|r| (r, 0)).collect(),
        }
    }
}

impl DropLog {
    pub fn record_kept(&mut self) {
        self.rows_read += 1;
        self.rows_kept += 1;
    }

    pub fn record_drop(&mut self, reason: DropReason) {
        self.rows_read += 1;
        *self.drops_by_reason.entry(reason).or_default() += 1;
    }

    pub fn dropped(&self, reason: DropReason) -> u64 {
        self.drops_by_reason.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_dropped(&self) -> u64 {
        self.drops_by_reason.values().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.rows_read == self.rows_kept + self.total_dropped()
    }

    pub fn merge(&mut self, other: &DropLog) {
        self.rows_read += other.rows_read;
        self.rows_kept += other.rows_kept;
        for (reason, n) in &other.drops_by_reason {
            *self.drops_by_reason.entry(*reason).or_default() += n;
        }
    }
}

/// Column positions of every logical field in a particular file.
#[derive(Debug, Clone)]
struct ColumnIndex {
    positions: [usize; Field::ALL.len()],
    width: usize,
}

impl ColumnIndex {
    fn resolve(header: &ByteRecord, schema: &Schema) -> Result<Self> {
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let s = String::from_utf8_lossy(h);
                let s = if i == 0 { s.trim_start_matches('\u{feff}') } else { &s };
                s.trim().to_string()
            })
            .collect();
        let mut positions = [0usize; Field::ALL.len()];
        let mut missing = Vec::new();
        for (slot, field) in positions.iter_mut().zip(Field::ALL) {
            let source = schema.column(field);
            match names.iter().position(|n| n == source) {
                Some(i) => *slot = i,
                None => missing.push(format!("{source} ({field})")),
            }
        }
        if !missing.is_empty() {
            return Err(Error::SchemaMismatch(format!(
                "header is missing column(s): {}",
                missing.join(", ")
            )));
        }
        Ok(ColumnIndex {
            positions,
            width: names.len(),
        })
    }

    fn cell<'r>(&self, record: &'r ByteRecord, field: Field) -> Option<&'r [u8]> {
        record.get(self.positions[field as usize])
    }
}

enum Cell<'a> {
    Empty,
    Text(&'a str),
}

fn read_cell<'r>(
    record: &'r ByteRecord,
    cols: &ColumnIndex,
    field: Field,
) -> std::result::Result<Cell<'r>, DropReason> {
    let bytes = cols.cell(record, field).ok_or(DropReason::MalformedRow)?;
    let text = std::str::from_utf8(bytes)
        .map_err(|_| DropReason::MalformedRow)?
        .trim();
    Ok(if text.is_empty() {
        Cell::Empty
    } else {
        Cell::Text(text)
    })
}

fn read_int(
    record: &ByteRecord,
    cols: &ColumnIndex,
    field: Field,
) -> std::result::Result<i64, DropReason> {
    match read_cell(record, cols, field)? {
        Cell::Empty => Err(DropReason::MissingField),
        Cell::Text(t) => t.parse().map_err(|_| DropReason::MalformedRow),
    }
}

fn decode_outcome(text: &str, schema: &Schema) -> std::result::Result<Outcome, DropReason> {
    // death-date column: a real date means deceased, 9999-99-99 means alive
    if text.len() == 10 && text.as_bytes()[4] == b'-' && text.as_bytes()[7] == b'-' {
        if text == "9999-99-99" {
            return Ok(Outcome::Survived);
        }
        return NaiveDate::parse_from_str(text, "%Y-%m-%d")
            .map(|_| Outcome::Deceased)
            .map_err(|_| DropReason::MalformedRow);
    }
    let raw: i64 = text.parse().map_err(|_| DropReason::MalformedRow)?;
    match decode_flag(raw, schema) {
        FlagValue::True => Ok(Outcome::Deceased),
        FlagValue::False => Ok(Outcome::Survived),
        FlagValue::Missing(reason) => Err(reason),
    }
}

fn decode_region(
    state_raw: i64,
    municipality_text: &str,
    schema: &Schema,
) -> std::result::Result<(u32, u32), DropReason> {
    if schema.sentinel_codes.contains(&state_raw) {
        return Err(DropReason::SentinelValue);
    }
    if !(1..=MAX_STATE_CODE as i64).contains(&state_raw) {
        return Err(DropReason::UnknownRegion);
    }
    let state = state_raw as u32;
    if !municipality_text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(DropReason::MalformedRow);
    }
    let value: u32 = municipality_text
        .parse()
        .map_err(|_| DropReason::MalformedRow)?;
    let digits = municipality_text.len();
    let (full, local) = if digits <= 3 {
        (state * 1000 + value, value)
    } else if digits <= schema.region_code_width.municipality {
        if value / 1000 != state {
            return Err(DropReason::UnknownRegion);
        }
        (value, value % 1000)
    } else {
        return Err(DropReason::MalformedRow);
    };
    if schema.sentinel_codes.contains(&(local as i64)) || MUNICIPALITY_SENTINELS.contains(&local) {
        return Err(DropReason::SentinelValue);
    }
    if local == 0 {
        return Err(DropReason::UnknownRegion);
    }
    Ok((state, full))
}

/// Decodes one CSV row into a record, or the most severe reason it is unusable.
fn decode_row(
    record: &ByteRecord,
    cols: &ColumnIndex,
    schema: &Schema,
) -> std::result::Result<PatientRecord, DropReason> {
    if record.len() != cols.width {
        return Err(DropReason::MalformedRow);
    }
    let mut worst: Option<DropReason> = None;
    let mut note = |r: DropReason| {
        if worst.is_none_or(|w| r.severity() < w.severity()) {
            worst = Some(r);
        }
    };

    let region = match (
        read_int(record, cols, Field::State),
        read_cell(record, cols, Field::Municipality),
    ) {
        (Err(e), _) | (_, Err(e)) => Err(e),
        (Ok(_), Ok(Cell::Empty)) => Err(DropReason::MissingField),
        (Ok(state), Ok(Cell::Text(m))) => decode_region(state, m, schema),
    };
    let region = region.map_err(&mut note).ok();

    let sex = read_int(record, cols, Field::Sex)
        .and_then(|raw| {
            if raw == schema.sex_codes.male {
                Ok(Sex::Male)
            } else if raw == schema.sex_codes.female {
                Ok(Sex::Female)
            } else if schema.sentinel_codes.contains(&raw) {
                Err(DropReason::SentinelValue)
            } else {
                Err(DropReason::MalformedRow)
            }
        })
        .map_err(&mut note)
        .ok();

    let age = read_int(record, cols, Field::Age)
        .and_then(|raw| {
            if schema.age_sentinel_codes.contains(&raw) {
                Err(DropReason::SentinelValue)
            } else if !(0..=110).contains(&raw) {
                Err(DropReason::AgeOutOfRange)
            } else {
                Ok(raw as u32)
            }
        })
        .map_err(&mut note)
        .ok();

    let outcome = read_cell(record, cols, Field::Outcome)
        .and_then(|c| match c {
            Cell::Empty => Err(DropReason::MissingField),
            Cell::Text(t) => decode_outcome(t, schema),
        })
        .map_err(&mut note)
        .ok();

    let mut flags = FlagSet::default();
    for field in Field::ALL {
        let Some(flag) = field.as_flag() else { continue };
        match read_int(record, cols, field).map(|raw| decode_flag(raw, schema)) {
            Ok(FlagValue::True) => flags.insert(flag),
            Ok(FlagValue::False) => {}
            Ok(FlagValue::Missing(r)) | Err(r) => note(r),
        }
    }

    if let Some(reason) = worst {
        return Err(reason);
    }
    // every component decoded, otherwise `worst` would be set
    let (state, municipality) = region.expect("region decoded");
    Ok(PatientRecord {
        state,
        municipality,
        sex: sex.expect("sex decoded"),
        age: age.expect("age decoded"),
        outcome: outcome.expect("outcome decoded"),
        flags,
    })
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

fn csv_error(context: &str, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(context, io),
        other => Error::data(context, format!("{other:?}")),
    }
}

/// Streaming patient reader: yields kept records in input order and keeps a
/// running [`DropLog`].
pub struct PatientReader<R: Read> {
    reader: csv::Reader<R>,
    cols: ColumnIndex,
    schema: Schema,
    log: DropLog,
    buf: ByteRecord,
    context: String,
}

impl PatientReader<File> {
    pub fn open(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(file, schema, path.display().to_string())
    }
}

impl<R: Read> PatientReader<R> {
    pub fn new(input: R, schema: &Schema, context: impl Into<String>) -> Result<Self> {
        let context = context.into();
        let mut reader = csv_reader(input);
        let header = reader
            .byte_headers()
            .map_err(|e| csv_error(&context, e))?
            .clone();
        let cols = ColumnIndex::resolve(&header, schema)?;
        Ok(PatientReader {
            reader,
            cols,
            schema: schema.clone(),
            log: DropLog::default(),
            buf: ByteRecord::new(),
            context,
        })
    }

    pub fn drop_log(&self) -> &DropLog {
        &self.log
    }

    pub fn into_drop_log(self) -> DropLog {
        self.log
    }

    /// Reads up to `n` raw rows. Returns an empty vector at end of input.
    fn next_raw_chunk(&mut self, n: usize) -> Result<Vec<ByteRecord>> {
        let mut chunk = Vec::with_capacity(n);
        while chunk.len() < n {
            let mut rec = ByteRecord::new();
            if !self
                .reader
                .read_byte_record(&mut rec)
                .map_err(|e| csv_error(&self.context, e))?
            {
                break;
            }
            chunk.push(rec);
        }
        Ok(chunk)
    }
}

impl<R: Read> Iterator for PatientReader<R> {
    type Item = Result<PatientRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.reader.read_byte_record(&mut self.buf) {
                Ok(false) => return None,
                Ok(true) => match decode_row(&self.buf, &self.cols, &self.schema) {
                    Ok(rec) => {
                        self.log.record_kept();
                        return Some(Ok(rec));
                    }
                    Err(reason) => self.log.record_drop(reason),
                },
                Err(e) => return Some(Err(csv_error(&self.context, e))),
            }
        }
    }
}

/// Loads and cleans a patient file in a single pass.
pub fn load_patients(
    path: impl AsRef<Path>,
    schema: &Schema,
) -> Result<(Vec<PatientRecord>, DropLog)> {
    let mut reader = PatientReader::open(path, schema)?;
    let records = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((records, reader.into_drop_log()))
}

/// Same as [`load_patients`] on any reader.
pub fn read_patients<R: Read>(input: R, schema: &Schema) -> Result<(Vec<PatientRecord>, DropLog)> {
    let mut reader = PatientReader::new(input, schema, "<patients>")?;
    let records = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((records, reader.into_drop_log()))
}

/// Chunked variant of [`read_patients`]: rows are read sequentially in chunks
/// of `chunk_rows` and each chunk is decoded on the rayon pool. Records come
/// back in input order and the drop log is identical to the single-pass one.
pub fn read_patients_parallel<R: Read>(
    input: R,
    schema: &Schema,
    chunk_rows: usize,
) -> Result<(Vec<PatientRecord>, DropLog)> {
    let chunk_rows = chunk_rows.max(1);
    let mut reader = PatientReader::new(input, schema, "<patients>")?;
    let mut records = Vec::new();
    let mut log = DropLog::default();
    loop {
        let chunk = reader.next_raw_chunk(chunk_rows)?;
        if chunk.is_empty() {
            break;
        }
        let decoded: Vec<_> = chunk
            .par_iter()
            .map(|raw| decode_row(raw, &reader.cols, &reader.schema))
            .collect();
        for d in decoded {
            match d {
                Ok(rec) => {
                    log.record_kept();
                    records.push(rec);
                }
                Err(reason) => log.record_drop(reason),
            }
        }
    }
    Ok((records, log))
}

pub fn load_patients_parallel(
    path: impl AsRef<Path>,
    schema: &Schema,
    chunk_rows: usize,
) -> Result<(Vec<PatientRecord>, DropLog)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_patients_parallel(io::BufReader::new(file), schema, chunk_rows)
}

/// Writes cleaned records in the input dialect, readable with
/// [`Schema::canonical`].
pub fn write_patients<W: Write>(out: W, records: &[PatientRecord]) -> Result<()> {
    let schema = Schema::canonical();
    let mut w = csv::Writer::from_writer(out);
    let ctx = "<cleaned records>";
    w.write_record(Field::ALL.iter().map(|f| f.name()))
        .map_err(|e| csv_error(ctx, e))?;
    let code = |b: bool| {
        if b {
            schema.flag_true_code
        } else {
            schema.flag_false_code
        }
    };
    for r in records {
        let mut row: Vec<String> = vec![
            r.state_code(),
            r.municipality_code(),
            match r.sex {
                Sex::Male => schema.sex_codes.male,
                Sex::Female => schema.sex_codes.female,
            }
            .to_string(),
            r.age.to_string(),
            code(r.is_deceased()).to_string(),
        ];
        row.extend(Flag::ALL.iter().map(|f| code(r.has(*f)).to_string()));
        w.write_record(&row).map_err(|e| csv_error(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))?;
    Ok(())
}

/// Normalizes a region code to its zero-padded form: up to two digits is a
/// state, three to five digits a municipality.
pub fn normalize_region_code(raw: &str) -> Option<String> {
    let raw = raw.trim();
    if raw.is_empty() || raw.len() > 5 || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(if raw.len() <= 2 {
        format!("{raw:0>2}")
    } else {
        format!("{raw:0>5}")
    })
}

/// Region code → population, every population positive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationTable(BTreeMap<String, u64>);

impl PopulationTable {
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, i64)>,
        S: AsRef<str>,
    {
        let mut table = BTreeMap::new();
        for (code, population) in pairs {
            let raw = code.as_ref();
            let code = normalize_region_code(raw)
                .ok_or_else(|| Error::data("population", format!("invalid region code {raw:?}")))?;
            if population <= 0 {
                return Err(Error::data(
                    "population",
                    format!("non-positive population {population} for {code}"),
                ));
            }
            if table.insert(code.clone(), population as u64).is_some() {
                return Err(Error::data("population", format!("duplicate region code {code}")));
            }
        }
        Ok(PopulationTable(table))
    }

    pub fn get(&self, code: &str) -> Option<u64> {
        self.0.get(code).copied()
    }

    pub fn contains(&self, code: &str) -> bool {
        self.0.contains_key(code)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Deserialize)]
struct PopulationRow {
    region_code: String,
    population: String,
}

pub fn read_population<R: Read>(input: R) -> Result<PopulationTable> {
    let ctx = "population";
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| csv_error(ctx, e))?.clone();
    for col in ["region_code", "population"] {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(Error::SchemaMismatch(format!(
                "population file has no {col} column"
            )));
        }
    }
    let mut pairs = Vec::new();
    for (i, row) in reader.deserialize::<PopulationRow>().enumerate() {
        let row = row.map_err(|e| csv_error(ctx, e))?;
        let population: i64 = row.population.trim().parse().map_err(|_| {
            Error::data(
                ctx,
                format!("row {}: population {:?} is not an integer", i + 1, row.population),
            )
        })?;
        pairs.push((row.region_code, population));
    }
    PopulationTable::from_pairs(pairs)
}

pub fn load_population(path: impl AsRef<Path>) -> Result<PopulationTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_population(file)
}

/// Outline of one region, with its area-weighted centroid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionGeometry {
    pub region_code: String,
    pub name: String,
    pub polygons: Vec<Polygon>,
    pub centroid: Point,
}

impl RegionGeometry {
    pub fn new(region_code: impl Into<String>, name: impl Into<String>, polygons: Vec<Polygon>) -> Result<Self> {
        let region_code = region_code.into();
        for ring in polygons.iter().flat_map(|p| p.rings()) {
            if !geometry::is_closed(ring) {
                return Err(Error::Geometry(format!("region {region_code}: unclosed ring")));
            }
        }
        let centroid = geometry::centroid(&polygons)
            .ok_or_else(|| Error::Geometry(format!("region {region_code}: empty geometry")))?;
        Ok(RegionGeometry {
            region_code,
            name: name.into(),
            polygons,
            centroid,
        })
    }

    pub fn bbox(&self) -> geometry::BoundingBox {
        geometry::bbox(&self.polygons)
    }
}

fn parse_ring(value: &Value, feature: usize) -> Result<Ring> {
    let err = |msg: &str| Error::Geometry(format!("feature {feature}: {msg}"));
    let coords = value.as_array().ok_or_else(|| err("ring is not an array"))?;
    let ring: Ring = coords
        .iter()
        .map(|c| {
            let xy = c.as_array().filter(|a| a.len() >= 2);
            match xy.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                Some((Some(x), Some(y))) => Ok(Point::new(x, y)),
                _ => Err(err("position is not a number pair")),
            }
        })
        .collect::<Result<_>>()?;
    if !geometry::is_closed(&ring) {
        return Err(err("unclosed ring"));
    }
    Ok(ring)
}

fn parse_polygon(value: &Value, feature: usize) -> Result<Polygon> {
    let rings = value
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::Geometry(format!("feature {feature}: polygon has no rings")))?;
    let mut rings = rings.iter().map(|r| parse_ring(r, feature));
    let exterior = rings.next().expect("nonempty")?;
    Ok(Polygon {
        exterior,
        holes: rings.collect::<Result<_>>()?,
    })
}

fn property_code(props: Option<&Value>) -> Option<String> {
    match props?.get("region_code")? {
        Value::String(s) => normalize_region_code(s),
        Value::Number(n) => n.as_u64().and_then(|n| normalize_region_code(&n.to_string())),
        _ => None,
    }
}

/// Parses a GeoJSON FeatureCollection whose features carry a `region_code`
/// property and Polygon or MultiPolygon geometry.
pub fn parse_geometry(text: &str) -> Result<Vec<RegionGeometry>> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| Error::Geometry(format!("invalid GeoJSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Geometry("expected a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Geometry("FeatureCollection has no features array".into()))?;

    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(features.len());
    for (i, feature) in features.iter().enumerate() {
        let props = feature.get("properties");
        let code = property_code(props)
            .ok_or_else(|| Error::Geometry(format!("feature {i}: missing or invalid region_code")))?;
        if !seen.insert(code.clone()) {
            return Err(Error::Geometry(format!("feature {i}: duplicate region_code {code}")));
        }
        let name = props
            .and_then(|p| p.get("name"))
            .and_then(Value::as_str)
            .map_or_else(|| code.clone(), str::to_string);
        let geom = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| Error::Geometry(format!("feature {i}: no geometry")))?;
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| Error::Geometry(format!("feature {i}: no coordinates")))?;
        let polygons = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![parse_polygon(coords, i)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| Error::Geometry(format!("feature {i}: bad MultiPolygon")))?
                .iter()
                .map(|p| parse_polygon(p, i))
                .collect::<Result<_>>()?,
            other => {
                return Err(Error::Geometry(format!(
                    "feature {i}: unsupported geometry type {other:?}"
                )))
            }
        };
        if polygons.is_empty() {
            return Err(Error::Geometry(format!("feature {i}: empty MultiPolygon")));
        }
        out.push(RegionGeometry::new(code, name, polygons)?);
    }
    Ok(out)
}

pub fn load_geometry(path: impl AsRef<Path>) -> Result<Vec<RegionGeometry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_geometry(&text)
}
