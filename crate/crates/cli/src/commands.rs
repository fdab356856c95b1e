use std::collections::BTreeMap;

use hexmort::aggregate::*;
use hexmort::cartogram::*;
use hexmort::ingest::*;
use hexmort::render::*;
use hexmort::stats::*;
use hexmort::{Error, Result};
use serde::Serialize;

use crate::config::{Cli, Command, Facet, MapKind, RunConfig};
use crate::manifest::Run;

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.command.overrides())?;
    let mut run = Run::start(cli.command.name(), &cfg, cli.verbose)?;
    match cli.command {
        Command::Ingest(_) => {
            let (records, log) = load_records(&cfg, &mut run)?;
            write_ingest(&mut run, &records, &log)?;
        }
        Command::Aggregate(_) => {
            let (records, _) = load_records(&cfg, &mut run)?;
            let (table, _) = aggregate_table(&cfg, &mut run, &records)?;
            write_aggregates_out(&cfg, &mut run, &table)?;
        }
        Command::Layout(_) => {
            build_layout(&cfg, &mut run)?;
        }
        Command::Map(_) => {
            let (records, _) = load_records(&cfg, &mut run)?;
            let (table, pop) = aggregate_table(&cfg, &mut run, &records)?;
            match cfg.kind {
                MapKind::Hexbin => {
                    let built = match (&cfg.layout, &cfg.geometry) {
                        (None, Some(_)) => Some(build_layout(&cfg, &mut run)?.0),
                        _ => None,
                    };
                    let (layout, labels) = hexbin_layout(&cfg, &mut run, built)?;
                    let regions = with_empty_regions(&table, &pop, layout.iter().map(|(c, _)| c));
                    render_map(&cfg, &mut run, &regions, Target::Hexbin(&layout, &labels), cfg.facet)?;
                }
                MapKind::Choropleth => {
                    let geoms = load_geoms(&cfg, &mut run)?;
                    let regions = with_empty_regions(&table, &pop, geoms.iter().map(|g| g.region_code.as_str()));
                    render_map(&cfg, &mut run, &regions, Target::Choropleth(&geoms), cfg.facet)?;
                }
            }
        }
        Command::Stats(_) => {
            let (records, _) = load_records(&cfg, &mut run)?;
            stats(&cfg, &mut run, &records)?;
        }
        Command::Report(_) => report(&cfg, &mut run)?,
    }
    run.finish(&cfg)
}

fn load_records(cfg: &RunConfig, run: &mut Run) -> Result<(Vec<PatientRecord>, DropLog)> {
    let path = cfg.require("patients", &cfg.patients)?;
    let schema = match &cfg.schema {
        Some(p) => {
            run.input(p)?;
            parse_schema(p)?
        }
        None => Schema::canonical(),
    };
    run.input(path)?;
    let (records, log) = load_patients_parallel(path, &schema, cfg.chunk_rows)?;
    run.say(format_args!(
        "{} rows read, {} kept, {} dropped",
        log.rows_read,
        log.rows_kept,
        log.total_dropped()
    ));
    Ok((records, log))
}

fn write_ingest(run: &mut Run, records: &[PatientRecord], log: &DropLog) -> Result<()> {
    let mut cleaned = Vec::new();
    write_patients(&mut cleaned, records)?;
    run.write("cleaned.csv", cleaned)?;
    run.write_json("drop_log.json", log)?;
    run.write_json("variable_summary.json", &variable_summary(records))
}

fn aggregate_table(cfg: &RunConfig, run: &mut Run, records: &[PatientRecord]) -> Result<(AggregateTable, PopulationTable)> {
    let path = cfg.require("population", &cfg.population)?;
    run.input(path)?;
    let pop = load_population(path)?;
    let unknown = if cfg.drop_unknown_regions {
        UnknownRegions::Drop
    } else {
        UnknownRegions::Reject
    };
    let table = aggregate_regions_par(records, cfg.chunk_rows, cfg.level()?, cfg.cohort()?, &pop, unknown)?;
    if !table.unknown.is_empty() {
        log::warn!(
            "dropped {} records from {} regions missing from the population table",
            table.unknown.values().sum::<u64>(),
            table.unknown.len()
        );
    }
    run.say(format_args!("{} regions aggregated", table.regions.len()));
    Ok((table, pop))
}

fn write_aggregates_out(cfg: &RunConfig, run: &mut Run, table: &AggregateTable) -> Result<()> {
    let mut buf = Vec::new();
    write_aggregates(&mut buf, &table.regions)?;
    run.write("aggregates.csv", buf)?;
    let rates = normalize_rates(&table.regions, &cfg.variable()?, cfg.basis()?)?;
    let mut buf = Vec::new();
    rates.write_csv(&mut buf)?;
    run.write("values.csv", buf)
}

fn load_geoms(cfg: &RunConfig, run: &mut Run) -> Result<Vec<RegionGeometry>> {
    let path = cfg.require("geometry", &cfg.geometry)?;
    run.input(path)?;
    load_geometry(path)
}

#[derive(Serialize)]
struct LayoutReport {
    regions: usize,
    adjacencies: usize,
    adjacency_weight: f64,
    iterations: usize,
    seed: u64,
    initial: LayoutCost,
    #[serde(rename = "final")]
    refined: LayoutCost,
}

fn build_layout(cfg: &RunConfig, run: &mut Run) -> Result<(HexLayout, Vec<RegionGeometry>)> {
    let geoms = load_geoms(cfg, run)?;
    let centroids = centroids_of(&geoms);
    let adj = derive_adjacency(&geoms, cfg.solver.adjacency_tolerance);
    let lambda = cfg
        .solver
        .adjacency_weight
        .unwrap_or_else(|| default_adjacency_weight(&centroids, 1.0));
    let seeded = seed_layout(&centroids, 1.0)?;
    let refined = refine_layout(&seeded, &centroids, &adj, lambda, cfg.solver.iterations, cfg.solver.seed)?;
    let report = LayoutReport {
        regions: refined.len(),
        adjacencies: adj.len(),
        adjacency_weight: lambda,
        iterations: cfg.solver.iterations,
        seed: cfg.solver.seed,
        initial: layout_cost(&seeded, &centroids, &adj, lambda)?,
        refined: layout_cost(&refined, &centroids, &adj, lambda)?,
    };
    run.say(format_args!(
        "layout cost {} -> {}, broken adjacencies {} -> {}",
        fmt_num(report.initial.total),
        fmt_num(report.refined.total),
        report.initial.adjacency_penalty,
        report.refined.adjacency_penalty
    ));
    let mut buf = Vec::new();
    write_layout(&mut buf, &refined)?;
    run.write("layout.csv", buf)?;
    run.write_json("layout_report.json", &report)?;
    Ok((refined, geoms))
}

/// Layout file, else a freshly built layout, else the bundled state preset.
fn hexbin_layout(
    cfg: &RunConfig,
    run: &mut Run,
    built: Option<HexLayout>,
) -> Result<(HexLayout, BTreeMap<String, String>)> {
    let level = cfg.level()?;
    let layout = match (&cfg.layout, built) {
        (Some(path), _) => {
            run.input(path)?;
            load_layout(path)?
        }
        (None, Some(l)) => l,
        (None, None) if level == Level::State => mexico_state_preset(),
        (None, None) => {
            return Err(Error::Config(
                "a municipality hexbin needs --layout or --geometry".into(),
            ))
        }
    };
    let labels = if level == Level::State {
        mexico_state_labels()
    } else {
        BTreeMap::new()
    };
    Ok((layout, labels))
}

/// Adds a zero-count entry for every drawable region that has a population
/// but no records, so it is drawn as zero rather than as missing.
fn with_empty_regions<'a>(
    table: &AggregateTable,
    pop: &PopulationTable,
    drawable: impl Iterator<Item = &'a str>,
) -> BTreeMap<String, RegionAggregate> {
    let mut regions = table.regions.clone();
    for code in drawable {
        if let (false, Some(population)) = (regions.contains_key(code), pop.get(code)) {
            regions.insert(
                code.to_string(),
                RegionAggregate {
                    region_code: code.to_string(),
                    total_deceased: 0,
                    male: 0,
                    female: 0,
                    age_counts: [0; 5],
                    flag_counts: [0; 11],
                    population,
                },
            );
        }
    }
    regions
}

#[derive(Clone, Copy)]
enum Target<'a> {
    Choropleth(&'a [RegionGeometry]),
    Hexbin(&'a HexLayout, &'a BTreeMap<String, String>),
}

fn basis_label(basis: Basis) -> &'static str {
    match basis {
        Basis::Per100k => "per 100k",
        Basis::PerMillion => "per million",
        Basis::ShareOfNationalTotal => "share of national total",
        Basis::Count => "count",
    }
}

fn render_map(
    cfg: &RunConfig,
    run: &mut Run,
    regions: &BTreeMap<String, RegionAggregate>,
    target: Target<'_>,
    facet: Facet,
) -> Result<()> {
    let basis = cfg.basis()?;
    let variables: Vec<Variable> = match facet {
        Facet::None => vec![cfg.variable()?],
        Facet::Sex => Variable::sexes().to_vec(),
        Facet::Age => Variable::ages().to_vec(),
        Facet::Conditions => Variable::condition_panels().to_vec(),
    };
    let tables = variables
        .iter()
        .map(|v| normalize_rates(regions, v, basis))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<f64> = tables.iter().flat_map(|t| t.values.values().copied()).collect();
    let scale = build_scale(&all, cfg.classing()?, &RDYLBU_REVERSED)?;
    let single = variables.len() == 1;
    let specs: Vec<(String, MapSpec<'_>)> = variables
        .iter()
        .zip(&tables)
        .map(|(v, t)| {
            let style = if single {
                MapStyle::titled(format!("{} {}", v.title(), basis_label(basis)))
            } else {
                MapStyle {
                    width: 420.0,
                    height: 360.0,
                    legend: LegendPlacement::None,
                    ..MapStyle::default()
                }
            };
            let spec = match target {
                Target::Choropleth(geoms) => MapSpec::Choropleth {
                    geoms,
                    rates: t.clone(),
                    scale: scale.clone(),
                    style,
                },
                Target::Hexbin(layout, labels) => MapSpec::Hexbin {
                    layout,
                    rates: t.clone(),
                    scale: scale.clone(),
                    style,
                    labels,
                },
            };
            (v.title(), spec)
        })
        .collect();
    let svg = if single {
        specs[0].1.render()?
    } else {
        let style = FacetStyle {
            title: Some(format!("deaths {} by {}", basis_label(basis), facet.name())),
            columns: None,
            shared_legend: Some(scale),
        };
        render_facets(&specs, &style)?
    };
    let kind = match target {
        Target::Choropleth(_) => "choropleth",
        Target::Hexbin(..) => "hexbin",
    };
    let stem = format!("{kind}_{}", facet.name());
    run.write(&format!("{stem}.svg"), svg.document())?;
    let mut values = String::from("variable,region_code,value\n");
    for t in &tables {
        for (code, v) in &t.values {
            values.push_str(&format!("{},{code},{v}\n", t.variable));
        }
    }
    run.write(&format!("{stem}_values.csv"), values)
}

#[derive(Serialize)]
struct StatsFile<'a> {
    male: &'a CohortReport,
    female: &'a CohortReport,
}

fn stats(cfg: &RunConfig, run: &mut Run, records: &[PatientRecord]) -> Result<()> {
    let opts = cfg.stats_options()?;
    let male = analyze_cohort(records, SexFilter::Male, &opts)?;
    let female = analyze_cohort(records, SexFilter::Female, &opts)?;
    for r in [&male, &female] {
        run.say(format_args!(
            "{}: lambda {}, selected {}",
            r.sex.name(),
            fmt_num(r.chosen_lambda),
            r.selected.join(", ")
        ));
    }
    run.write_json("stats.json", &StatsFile { male: &male, female: &female })?;
    let style = MapStyle {
        width: 560.0,
        height: 560.0,
        ..MapStyle::default()
    };
    let panels = [("male", &male), ("female", &female)]
        .into_iter()
        .map(|(name, r)| Ok((name.to_string(), render_heatmap(&r.correlation.names, &r.correlation.values, &style)?)))
        .collect::<Result<Vec<_>>>()?;
    let figure = compose_facets(
        &panels,
        &FacetStyle {
            title: Some("correlation matrix".into()),
            ..FacetStyle::default()
        },
    )?;
    run.write("correlation.svg", figure.document())
}

fn report(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let (records, log) = load_records(cfg, run)?;
    write_ingest(run, &records, &log)?;
    let (table, pop) = aggregate_table(cfg, run, &records)?;
    write_aggregates_out(cfg, run, &table)?;

    let built = match (&cfg.layout, &cfg.geometry) {
        (_, Some(_)) => Some(build_layout(cfg, run)?),
        _ => None,
    };
    let (layout, labels) = hexbin_layout(cfg, run, built.as_ref().map(|b| b.0.clone()))?;
    let regions = with_empty_regions(&table, &pop, layout.iter().map(|(c, _)| c));
    for facet in [Facet::None, Facet::Sex, Facet::Age, Facet::Conditions] {
        render_map(cfg, run, &regions, Target::Hexbin(&layout, &labels), facet)?;
    }
    if let Some((_, geoms)) = &built {
        let regions = with_empty_regions(&table, &pop, geoms.iter().map(|g| g.region_code.as_str()));
        for facet in [Facet::None, Facet::Sex] {
            render_map(cfg, run, &regions, Target::Choropleth(geoms), facet)?;
        }
    }

    if let Some(path) = &cfg.countries {
        run.input(path)?;
        for indicator in ["cases", "recovered", "deaths"] {
            let top = rank_totals(path, indicator, 15)?;
            let series = Series {
                label: indicator.into(),
                points: top.into_iter().map(|(c, v)| (c, v as f64)).collect(),
            };
            let style = MapStyle::titled(format!("top 15 countries by {indicator}"));
            run.write(&format!("countries_{indicator}.svg"), render_series(&[series], SeriesKind::Bar, &style)?.document())?;
        }
    }

    if let Some(path) = &cfg.daily_deaths {
        run.input(path)?;
        let file = std::fs::File::open(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let daily = read_daily_series(file)?;
        let national = cfg
            .national_population
            .unwrap_or_else(|| pop.iter().map(|(_, p)| p).sum());
        let series = per_million_series(&daily, national)?;
        let mut csv = String::from("date,deaths_per_million\n");
        for (d, v) in &series {
            csv.push_str(&format!("{d},{v}\n"));
        }
        let line = Series {
            label: "deaths per million".into(),
            points: series.into_iter().map(|(d, v)| (d.to_string(), v)).collect(),
        };
        let style = MapStyle::titled("daily deaths per million");
        run.write("daily_deaths.svg", render_series(&[line], SeriesKind::Line, &style)?.document())?;
        run.write("daily_deaths.csv", csv)?;
    }

    stats(cfg, run, &records)
}
