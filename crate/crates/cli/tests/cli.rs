use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const HEADER: &str = "state,municipality,sex,age,outcome,diabetes,copd,asthma,immunosuppression,hypertension,cardiovascular,obesity,chronic_kidney,other_comorbidity,pneumonia,intubated";

fn core(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

fn hexmort(args: &[&str]) -> Output {
    hexmort_env(args, &[])
}

fn hexmort_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hexmort"));
    cmd.args(args).env_remove("HEXMORT_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Deterministic canonical-schema patients. Death risk rises with age and
/// pneumonia; `municipality` picks the municipal code within the state.
fn patients(n: usize, state: impl Fn(usize) -> u32, municipality: impl Fn(usize) -> u32, sex: impl Fn(usize) -> u32) -> String {
    let mut text = format!("{HEADER}\n");
    for i in 0..n {
        let age = (i * 37 + i / 7) % 100;
        let flag = |k: usize| if (i * (k + 3) + k * k + i / 11).is_multiple_of(5) { 1 } else { 2 };
        let pneumonia = flag(9) == 1;
        let noise = (i * 7919) % 17;
        let dies = age > 70 || (pneumonia && age > 45) || noise == 0;
        let outcome = if dies { "2020-06-01" } else { "9999-99-99" };
        let flags: Vec<String> = (0..11).map(|k| flag(k).to_string()).collect();
        text.push_str(&format!(
            "{},{},{},{age},{outcome},{}\n",
            state(i),
            municipality(i),
            sex(i),
            flags.join(",")
        ));
    }
    text
}

fn state_patients(n: usize) -> String {
    patients(n, |i| (i % 32) as u32 + 1, |i| (i % 5) as u32 + 1, |i| (i % 2) as u32 + 1)
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture { dir: TempDir::new().unwrap() }
    }

    fn file(&self, name: &str, text: &str) -> String {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p.display().to_string()
    }

    fn out(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }
}

fn hash(path: impl AsRef<Path>) -> String {
    Sha256::digest(fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn ingest_reconciles_and_writes_manifest() {
    let fx = Fixture::new();
    let out = fx.out("ingest");
    let schema = core("tests/fixtures/ministry_schema.json");
    let input = core("tests/fixtures/patients_5.csv");
    let o = hexmort(&["ingest", "--patients", input.to_str().unwrap(), "--schema", schema.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let log = json(format!("{out}/drop_log.json"));
    let dropped: u64 = log["drops_by_reason"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(log["rows_read"], 5);
    assert_eq!(log["rows_kept"].as_u64().unwrap() + dropped, 5);
    let cleaned = fs::read_to_string(format!("{out}/cleaned.csv")).unwrap();
    assert_eq!(cleaned.lines().count(), 5);
    assert!(cleaned.starts_with(HEADER));

    let manifest = json(format!("{out}/manifest.json"));
    assert_eq!(manifest["command"], "ingest");
    assert!(manifest["seeds"]["solver"].is_u64() && manifest["seeds"]["stats"].is_u64());
    for (name, h) in manifest["outputs"].as_object().unwrap() {
        assert_eq!(h.as_str().unwrap(), hash(format!("{out}/{name}")), "{name}");
    }
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 2);
}

#[test]
fn missing_schema_file_exits_2() {
    let fx = Fixture::new();
    let input = core("tests/fixtures/patients_5.csv");
    let o = hexmort(&["ingest", "--patients", input.to_str().unwrap(), "--schema", "/no/such/schema.json", "--out", &fx.out("x")]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn bad_config_values_exit_2() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &state_patients(10));
    assert_eq!(code(&hexmort(&["ingest", "--patients", &p, "--level", "county", "--out", &fx.out("a")])), 2);
    let cfg = fx.file("c.json", r#"{"no_such_key": 1}"#);
    assert_eq!(code(&hexmort(&["ingest", "--config", &cfg, "--patients", &p, "--out", &fx.out("b")])), 2);
    let o = hexmort_env(&["ingest", "--patients", &p, "--out", &fx.out("c")], &[("HEXMORT_SEED", "abc")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_row_is_counted_not_fatal() {
    let fx = Fixture::new();
    let mut text = state_patients(20);
    text.push_str("9,2,1,50,9999-99-99,1,2,x,2,2,2,2,2,2,2,2\n");
    let p = fx.file("p.csv", &text);
    let out = fx.out("o");
    let o = hexmort(&["ingest", "--patients", &p, "--out", &out]);
    assert_eq!(code(&o), 0);
    let log = json(format!("{out}/drop_log.json"));
    assert_eq!(log["rows_read"], 21);
    assert_eq!(log["rows_kept"], 20);
    assert_eq!(log["drops_by_reason"]["malformed_row"], 1);
}

#[test]
fn unwritable_output_exits_3() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &state_patients(10));
    let blocker = fx.file("blocker", "");
    let o = hexmort(&["ingest", "--patients", &p, "--out", &format!("{blocker}/sub")]);
    assert_eq!(code(&o), 3);
}

fn layout_rows(path: &str) -> Vec<(String, i64, i64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn layout_command() {
    let fx = Fixture::new();
    let geo = core("data/mx_states.geojson");
    let geo = geo.to_str().unwrap();
    let (a, b, zero) = (fx.out("a"), fx.out("b"), fx.out("zero"));
    assert_eq!(code(&hexmort(&["layout", "--geometry", geo, "--out", &a])), 0);
    assert_eq!(code(&hexmort(&["layout", "--geometry", geo, "--out", &b])), 0);
    let rows = layout_rows(&format!("{a}/layout.csv"));
    assert_eq!(rows.len(), 32);
    let cells: std::collections::BTreeSet<(i64, i64)> = rows.iter().map(|r| (r.1, r.2)).collect();
    assert_eq!(cells.len(), 32);
    let report = json(format!("{a}/layout_report.json"));
    assert!(report["final"]["total"].as_f64().unwrap() <= report["initial"]["total"].as_f64().unwrap());
    for f in ["layout.csv", "layout_report.json", "manifest.json"] {
        assert_eq!(fs::read(format!("{a}/{f}")).unwrap(), fs::read(format!("{b}/{f}")).unwrap(), "{f}");
    }
    assert_eq!(code(&hexmort(&["layout", "--geometry", geo, "--iterations", "0", "--out", &zero])), 0);
    let report = json(format!("{zero}/layout_report.json"));
    assert_eq!(report["final"], report["initial"]);
}

#[test]
fn broken_geometry_exits_4() {
    let fx = Fixture::new();
    let g = fx.file(
        "g.geojson",
        r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{"region_code":"01","name":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}]}"#,
    );
    let o = hexmort(&["layout", "--geometry", &g, "--out", &fx.out("o")]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

fn panels(svg_path: &str) -> usize {
    fs::read_to_string(svg_path).unwrap().matches("<g class=\"panel\"").count()
}

#[test]
fn hexbin_facets() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &state_patients(3000));
    let pop = core("data/mx_state_population.csv");
    let pop = pop.to_str().unwrap();
    for (facet, n) in [("sex", 2), ("age", 5), ("conditions", 8)] {
        let out = fx.out(facet);
        let o = hexmort(&["map", "--patients", &p, "--population", pop, "--kind", "hexbin", "--facet", facet, "--out", &out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let svg = format!("{out}/hexbin_{facet}.svg");
        assert_eq!(panels(&svg), n, "{facet}");
        let text = fs::read_to_string(&svg).unwrap();
        assert_eq!(text.matches("<polygon class=\"hex\"").count(), 32 * n);
        let values = fs::read_to_string(format!("{out}/hexbin_{facet}_values.csv")).unwrap();
        assert_eq!(values.lines().count(), 1 + 32 * n);
    }
    let out = fx.out("single");
    assert_eq!(code(&hexmort(&["map", "--patients", &p, "--population", pop, "--out", &out])), 0);
    assert_eq!(panels(&format!("{out}/hexbin_none.svg")), 0);
}

#[test]
fn municipal_choropleth() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &patients(800, |_| 9, |i| (i % 16) as u32 + 2, |i| (i % 2) as u32 + 1));
    let pop = core("data/cdmx_population.csv");
    let geo = core("data/cdmx_municipalities.geojson");
    let out = fx.out("o");
    let o = hexmort(&[
        "map", "--patients", &p, "--population", pop.to_str().unwrap(), "--geometry", geo.to_str().unwrap(),
        "--level", "municipality", "--kind", "choropleth", "--out", &out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let svg = fs::read_to_string(format!("{out}/choropleth_none.svg")).unwrap();
    assert_eq!(svg.matches("<g class=\"region\"").count(), 16);
    assert_eq!(svg.matches("data-value=").count(), 16);
}

#[test]
fn region_without_hexagon_exits_4() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &patients(100, |_| 9, |i| (i % 4) as u32 + 2, |i| (i % 2) as u32 + 1));
    let layout = fx.file("layout.csv", "region_code,q,r\n09002,0,0\n09003,1,0\n09004,0,1\n");
    let pop = core("data/cdmx_population.csv");
    let o = hexmort(&[
        "map", "--patients", &p, "--population", pop.to_str().unwrap(), "--layout", &layout,
        "--level", "municipality", "--out", &fx.out("o"),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("09005"));
}

#[test]
fn stats_command() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &state_patients(3000));
    let (a, b) = (fx.out("a"), fx.out("b"));
    assert_eq!(code(&hexmort(&["stats", "--patients", &p, "--out", &a])), 0);
    assert_eq!(code(&hexmort(&["stats", "--patients", &p, "--out", &b])), 0);
    let stats = json(format!("{a}/stats.json"));
    for sex in ["male", "female"] {
        let selected: Vec<&str> = stats[sex]["selected"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
        assert!(selected.contains(&"age"), "{sex}: {selected:?}");
        assert!(selected.contains(&"pneumonia"), "{sex}: {selected:?}");
    }
    assert_eq!(fs::read(format!("{a}/stats.json")).unwrap(), fs::read(format!("{b}/stats.json")).unwrap());
    let heat = fs::read_to_string(format!("{a}/correlation.svg")).unwrap();
    assert_eq!(heat.matches("<g class=\"panel\"").count(), 2);
}

#[test]
fn empty_sex_cohort_exits_5() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &patients(400, |i| (i % 32) as u32 + 1, |_| 1, |_| 1));
    let o = hexmort(&["stats", "--patients", &p, "--out", &fx.out("o")]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("male"));
}

#[test]
fn seeds_env_and_flag_precedence() {
    let fx = Fixture::new();
    let geo = core("data/mx_states.geojson");
    let geo = geo.to_str().unwrap();
    let cfg = fx.file("c.json", r#"{"solver": {"seed": 5, "iterations": 50}, "classing": "continuous"}"#);

    let out = fx.out("file");
    assert_eq!(code(&hexmort(&["layout", "--config", &cfg, "--geometry", geo, "--out", &out])), 0);
    let m = json(format!("{out}/manifest.json"));
    assert_eq!(m["seeds"]["solver"], 5);
    assert_eq!(m["config"]["solver"]["iterations"], 50);

    let out = fx.out("env");
    assert_eq!(code(&hexmort_env(&["layout", "--config", &cfg, "--geometry", geo, "--out", &out], &[("HEXMORT_SEED", "77")])), 0);
    let m = json(format!("{out}/manifest.json"));
    assert_eq!((m["seeds"]["solver"].as_u64(), m["seeds"]["stats"].as_u64()), (Some(77), Some(77)));

    let out = fx.out("flag");
    let o = hexmort_env(&["layout", "--config", &cfg, "--geometry", geo, "--solver-seed", "9", "--out", &out], &[("HEXMORT_SEED", "77")]);
    assert_eq!(code(&o), 0);
    let m = json(format!("{out}/manifest.json"));
    assert_eq!((m["seeds"]["solver"].as_u64(), m["seeds"]["stats"].as_u64()), (Some(9), Some(77)));
    assert_eq!(m["config"]["classing"], "continuous");
}

#[test]
fn manifest_replays_to_identical_outputs() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &state_patients(1500));
    let pop = core("data/mx_state_population.csv");
    let first = fx.out("first");
    let o = hexmort(&["map", "--patients", &p, "--population", pop.to_str().unwrap(), "--facet", "age", "--classing", "quantile(5)", "--out", &first]);
    assert_eq!(code(&o), 0);
    let second = fx.out("second");
    let o = hexmort(&["map", "--config", &format!("{first}/manifest.json"), "--out", &second]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(format!("{first}/manifest.json"));
    let outputs = m["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("hexbin_age.svg"));
    for name in outputs.keys().chain(std::iter::once(&"manifest.json".to_string())) {
        assert_eq!(fs::read(format!("{first}/{name}")).unwrap(), fs::read(format!("{second}/{name}")).unwrap(), "{name}");
    }
}

#[test]
fn verbose_controls_stdout() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &state_patients(50));
    let quiet = hexmort(&["ingest", "--patients", &p, "--out", &fx.out("q")]);
    assert!(quiet.stdout.is_empty());
    let loud = hexmort(&["ingest", "--verbose", "--patients", &p, "--out", &fx.out("v")]);
    assert!(String::from_utf8_lossy(&loud.stdout).contains("50 rows read"));
}

#[test]
fn report_bundle() {
    let fx = Fixture::new();
    let p = fx.file("p.csv", &state_patients(3000));
    let args = [
        "report",
        "--patients", &p,
        "--population", core("data/mx_state_population.csv").to_str().unwrap(),
        "--geometry", core("data/mx_states.geojson").to_str().unwrap(),
        "--countries", core("tests/fixtures/country_totals.csv").to_str().unwrap(),
        "--daily-deaths", core("tests/fixtures/mexico_daily_deaths.csv").to_str().unwrap(),
        "--national-population", "128932753",
        "--out", &fx.out("r"),
    ]
    .map(String::from);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = hexmort(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = fx.out("r");
    for f in [
        "cleaned.csv", "drop_log.json", "variable_summary.json", "aggregates.csv", "values.csv",
        "layout.csv", "layout_report.json", "hexbin_none.svg", "hexbin_sex.svg", "hexbin_age.svg",
        "hexbin_conditions.svg", "choropleth_none.svg", "choropleth_sex.svg", "countries_cases.svg",
        "countries_recovered.svg", "countries_deaths.svg", "daily_deaths.svg", "daily_deaths.csv",
        "stats.json", "correlation.svg", "manifest.json", "hexbin_none_values.csv", "choropleth_sex_values.csv",
    ] {
        assert!(Path::new(&format!("{out}/{f}")).is_file(), "{f}");
    }
    let bars = fs::read_to_string(format!("{out}/countries_cases.svg")).unwrap();
    assert_eq!(bars.matches("<rect class=\"bar\"").count(), 15);
    let daily = fs::read_to_string(format!("{out}/daily_deaths.csv")).unwrap();
    let peak = daily.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!((peak - 23.0).abs() < 0.05);
    let m = json(format!("{out}/manifest.json"));
    assert_eq!(m["outputs"].as_object().unwrap().len(), 26);
}
