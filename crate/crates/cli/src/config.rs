use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hexmort::aggregate::{Basis, Cohort, Level, Variable};
use hexmort::render::Classing;
use hexmort::stats::{LambdaRule, LassoOptions, PathOptions, StatsOptions};
use hexmort::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "HEXMORT_SEED";

#[derive(Debug, Parser)]
#[command(name = "hexmort", version, about = "Regional mortality maps, hexagonal cartograms and lasso feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Print a summary of each step on stdout.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a patient file; writes cleaned.csv, drop_log.json and variable_summary.json.
    Ingest(Overrides),
    /// Per-region cohort counts and rates; writes aggregates.csv and values.csv.
    Aggregate(Overrides),
    /// Hexagon layout from region geometry; writes layout.csv and layout_report.json.
    Layout(Overrides),
    /// Choropleth or hexbin map, optionally faceted.
    Map(Overrides),
    /// Correlation and lasso logistic regression per sex; writes stats.json and correlation.svg.
    Stats(Overrides),
    /// Every output above plus country rankings and the daily series.
    Report(Overrides),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Aggregate(_) => "aggregate",
            Command::Layout(_) => "layout",
            Command::Map(_) => "map",
            Command::Stats(_) => "stats",
            Command::Report(_) => "report",
        }
    }

    pub fn overrides(&self) -> &Overrides {
        match self {
            Command::Ingest(o)
            | Command::Aggregate(o)
            | Command::Layout(o)
            | Command::Map(o)
            | Command::Stats(o)
            | Command::Report(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Choropleth,
    Hexbin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Facet {
    None,
    Sex,
    Age,
    Conditions,
}

impl Facet {
    pub fn name(self) -> &'static str {
        match self {
            Facet::None => "none",
            Facet::Sex => "sex",
            Facet::Age => "age",
            Facet::Conditions => "conditions",
        }
    }
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run config, or a manifest.json from an earlier run.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// GeoJSON region outlines.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// region_code,q,r hexagon layout.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// country,cases,recovered,deaths totals.
    #[arg(long)]
    pub countries: Option<PathBuf>,
    /// date,count daily deaths.
    #[arg(long)]
    pub daily_deaths: Option<PathBuf>,
    #[arg(long)]
    pub national_population: Option<u64>,
    /// state or municipality.
    #[arg(long)]
    pub level: Option<String>,
    /// deceased_only or all.
    #[arg(long)]
    pub cohort: Option<String>,
    /// per_100k, per_million, share or count.
    #[arg(long)]
    pub basis: Option<String>,
    /// deaths, deaths_male, deaths_age_60-80, deaths_with_diabetes, ...
    #[arg(long)]
    pub variable: Option<String>,
    /// continuous or quantile(k).
    #[arg(long)]
    pub classing: Option<String>,
    #[arg(long, value_enum)]
    pub kind: Option<MapKind>,
    #[arg(long, value_enum)]
    pub facet: Option<Facet>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub adjacency_weight: Option<f64>,
    /// Seed for the layout search.
    #[arg(long)]
    pub solver_seed: Option<u64>,
    /// Seed for the train/test split.
    #[arg(long)]
    pub stats_seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// one_standard_error or min_loss.
    #[arg(long)]
    pub lambda_rule: Option<String>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Weight per broken adjacency; 10 × mean squared neighbor spacing when absent.
    pub adjacency_weight: Option<f64>,
    pub iterations: usize,
    pub seed: u64,
    /// Distance under which two outlines count as touching.
    pub adjacency_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            adjacency_weight: None,
            iterations: 500,
            seed: 2020,
            adjacency_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub test_fraction: f64,
    pub seed: u64,
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_rule: String,
    pub include_intubated: bool,
    pub selection_threshold: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        let d = StatsOptions::default();
        StatsConfig {
            test_fraction: d.test_fraction,
            seed: d.seed,
            grid_size: d.path.grid_size,
            grid_ratio: d.path.ratio,
            tol: d.path.lasso.tol,
            max_iter: d.path.lasso.max_iter,
            lambda_rule: "one_standard_error".into(),
            include_intubated: d.include_intubated,
            selection_threshold: d.selection_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub patients: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub geometry: Option<PathBuf>,
    pub layout: Option<PathBuf>,
    pub countries: Option<PathBuf>,
    pub daily_deaths: Option<PathBuf>,
    pub national_population: Option<u64>,
    pub level: String,
    pub cohort: String,
    pub basis: String,
    pub variable: String,
    pub classing: String,
    pub kind: MapKind,
    pub facet: Facet,
    /// Records whose region has no population entry are dropped (and
    /// counted) instead of failing the run.
    pub drop_unknown_regions: bool,
    pub chunk_rows: usize,
    pub solver: SolverConfig,
    pub stats: StatsConfig,
    /// Not part of the recorded config, so manifests of identical runs into
    /// different directories match.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            patients: None,
            schema: None,
            population: None,
            geometry: None,
            layout: None,
            countries: None,
            daily_deaths: None,
            national_population: None,
            level: "state".into(),
            cohort: "deceased_only".into(),
            basis: "per_100k".into(),
            variable: "deaths".into(),
            classing: "quantile(7)".into(),
            kind: MapKind::Hexbin,
            facet: Facet::None,
            drop_unknown_regions: false,
            chunk_rows: 65_536,
            solver: SolverConfig::default(),
            stats: StatsConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn config_error(msg: impl std::fmt::Display) -> Error {
    Error::Config(msg.to_string())
}

impl RunConfig {
    /// Config file (or manifest), then `HEXMORT_SEED`, then flags.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(path) => Self::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|_| config_error(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
            cfg.solver.seed = seed;
            cfg.stats.seed = seed;
        }
        macro_rules! take {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &o.$flag {
                    cfg.$($field).+ = v.clone().into();
                })*
            };
        }
        take!(
            patients => patients,
            schema => schema,
            population => population,
            geometry => geometry,
            layout => layout,
            countries => countries,
            daily_deaths => daily_deaths,
            national_population => national_population,
            level => level,
            cohort => cohort,
            basis => basis,
            variable => variable,
            classing => classing,
            kind => kind,
            facet => facet,
            iterations => solver.iterations,
            adjacency_weight => solver.adjacency_weight,
            solver_seed => solver.seed,
            stats_seed => stats.seed,
            test_fraction => stats.test_fraction,
            lambda_rule => stats.lambda_rule,
            out => out_dir,
        );
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        if value.get("tool").and_then(|t| t.as_str()) == Some(crate::manifest::TOOL) {
            value = value
                .get_mut("config")
                .map(serde_json::Value::take)
                .ok_or_else(|| config_error(format!("{}: manifest has no config", path.display())))?;
        }
        serde_json::from_value(value).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    /// Checks every enum string and number, and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.level()?;
        self.cohort()?;
        self.basis()?;
        self.variable()?;
        self.classing()?;
        self.lambda_rule()?;
        if self.chunk_rows == 0 {
            return Err(config_error("chunk_rows must be positive"));
        }
        let s = &self.stats;
        if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
            return Err(config_error("stats.test_fraction must lie in (0, 1)"));
        }
        if s.grid_size == 0 || s.grid_ratio < 1.0 || !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(config_error("stats grid_size, grid_ratio, tol or max_iter out of range"));
        }
        if let Some(w) = self.solver.adjacency_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(config_error("solver.adjacency_weight must be finite and nonnegative"));
            }
        }
        for (key, path) in self.paths() {
            if !path.is_file() {
                return Err(config_error(format!("{key} file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn paths(&self) -> Vec<(&'static str, &Path)> {
        [
            ("patients", &self.patients),
            ("schema", &self.schema),
            ("population", &self.population),
            ("geometry", &self.geometry),
            ("layout", &self.layout),
            ("countries", &self.countries),
            ("daily_deaths", &self.daily_deaths),
        ]
        .into_iter()
        .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
        .collect()
    }

    pub fn require<'a>(&self, key: &str, path: &'a Option<PathBuf>) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| config_error(format!("this command needs --{}", key.replace('_', "-"))))
    }

    pub fn level(&self) -> Result<Level> {
        self.level.parse()
    }

    pub fn cohort(&self) -> Result<Cohort> {
        self.cohort.parse()
    }

    pub fn basis(&self) -> Result<Basis> {
        self.basis.parse()
    }

    pub fn variable(&self) -> Result<Variable> {
        self.variable.parse()
    }

    pub fn classing(&self) -> Result<Classing> {
        self.classing.parse()
    }

    fn lambda_rule(&self) -> Result<LambdaRule> {
        self.stats.lambda_rule.parse()
    }

    pub fn stats_options(&self) -> Result<StatsOptions> {
        let s = &self.stats;
        Ok(StatsOptions {
            test_fraction: s.test_fraction,
            seed: s.seed,
            include_intubated: s.include_intubated,
            selection_threshold: s.selection_threshold,
            path: PathOptions {
                grid_size: s.grid_size,
                ratio: s.grid_ratio,
                rule: self.lambda_rule()?,
                lasso: LassoOptions {
                    tol: s.tol,
                    max_iter: s.max_iter,
                },
            },
        })
    }
}
