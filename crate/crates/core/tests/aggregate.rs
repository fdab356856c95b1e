mod common;

use common::synth_records;
use hexmort::aggregate::*;
use hexmort::ingest::{load_population, PatientRecord, PopulationTable};
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn state_population() -> PopulationTable {
    load_population(concat!(env!("CARGO_MANIFEST_DIR"), "/data/mx_state_population.csv")).unwrap()
}

fn municipal_population(records: &[PatientRecord]) -> PopulationTable {
    let codes: std::collections::BTreeSet<String> = records.iter().map(|r| r.municipality_code()).collect();
    PopulationTable::from_pairs(codes.into_iter().map(|c| (c, 50_000i64))).unwrap()
}

#[test]
fn conservation_on_10k_rows() {
    let records = synth_records(10_000, 99);
    let pop = state_population();
    for cohort in [Cohort::DeceasedOnly, Cohort::All] {
        let single = aggregate_regions(&records, Level::State, cohort, &pop, UnknownRegions::Reject).unwrap();
        for a in single.regions.values() {
            assert_eq!(a.male + a.female, a.total_deceased);
            assert_eq!(a.age_counts.iter().sum::<u64>(), a.total_deceased);
            a.check().unwrap();
        }
        for chunk in [1, 13, 1000, 10_000] {
            let par = aggregate_regions_par(&records, chunk, Level::State, cohort, &pop, UnknownRegions::Reject).unwrap();
            assert_eq!(par, single);
        }
    }
    let deceased = records.iter().filter(|r| r.is_deceased()).count() as u64;
    let t = aggregate_regions(&records, Level::State, Cohort::DeceasedOnly, &pop, UnknownRegions::Reject).unwrap();
    assert_eq!(t.regions.values().map(|a| a.total_deceased).sum::<u64>(), deceased);
}

#[test]
fn municipal_rollup_matches_state_level() {
    let records = synth_records(3000, 5);
    let states = state_population();
    let muni = aggregate_regions(&records, Level::Municipality, Cohort::DeceasedOnly, &municipal_population(&records), UnknownRegions::Reject).unwrap();
    let rolled = rollup_to_states(&muni, &states).unwrap();
    let direct = aggregate_regions(&records, Level::State, Cohort::DeceasedOnly, &states, UnknownRegions::Reject).unwrap();
    assert_eq!(rolled.regions, direct.regions);
}

#[test]
fn shares_sum_to_one() {
    let records = synth_records(2000, 6);
    let t = aggregate_regions(&records, Level::State, Cohort::DeceasedOnly, &state_population(), UnknownRegions::Reject).unwrap();
    let r = normalize_rates(&t.regions, &Variable::Deaths, Basis::ShareOfNationalTotal).unwrap();
    assert!((r.values.values().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn ranking_fixture() {
    let path = fixture("country_totals.csv");
    let cases = rank_totals(&path, "cases", 15).unwrap();
    let deaths = rank_totals(&path, "deaths", 15).unwrap();
    let recovered = rank_totals(&path, "recovered", 15).unwrap();
    let pos = |v: &[(String, u64)], name: &str| v.iter().position(|(c, _)| c == name).unwrap() + 1;
    assert_eq!(pos(&cases, "Mexico"), 13);
    assert_eq!(cases[12].1, 1_437_185);
    assert_eq!(pos(&deaths, "Mexico"), 4);
    assert_eq!(deaths[3].1, 126_507);
    assert_eq!(cases[0], ("United States".to_string(), 20_132_054));
    assert_eq!(deaths[0], ("United States".to_string(), 347_894));
    assert_eq!(pos(&recovered, "Mexico"), 10);
    assert_eq!(recovered[0], ("India".to_string(), 9_883_461));
}

#[test]
fn daily_series_peak_per_million() {
    let file = std::fs::File::open(fixture("mexico_daily_deaths.csv")).unwrap();
    let daily = read_daily_series(file).unwrap();
    let series = per_million_series(&daily, 128_932_753).unwrap();
    let peak = series.iter().map(|p| p.1).fold(0.0, f64::max);
    assert!((peak - 23.0).abs() < 0.05, "{peak}");
    assert_eq!(series.iter().filter(|p| p.1 >= 10.0).count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tallies_merge_like_a_monoid(seed in any::<u64>(), n in 0usize..300, cut in 0usize..300) {
        let records = synth_records(n, seed);
        let cut = cut.min(n);
        let whole = tally(&records, Level::State, Cohort::All);
        let left = tally(&records[..cut], Level::State, Cohort::All);
        let right = tally(&records[cut..], Level::State, Cohort::All);
        prop_assert_eq!(left.clone().merge(right.clone()), whole.clone());
        prop_assert_eq!(right.merge(left), whole);
    }

    #[test]
    fn aggregate_counts_are_consistent(seed in any::<u64>(), n in 1usize..400) {
        let records = synth_records(n, seed);
        let t = aggregate_regions(&records, Level::State, Cohort::DeceasedOnly, &state_population(), UnknownRegions::Reject).unwrap();
        for a in t.regions.values() {
            prop_assert_eq!(a.male + a.female, a.total_deceased);
            prop_assert_eq!(a.age_counts.iter().sum::<u64>(), a.total_deceased);
            for f in a.flag_counts {
                prop_assert!(f <= a.total_deceased);
            }
        }
        let mut buf = Vec::new();
        write_aggregates(&mut buf, &t.regions).unwrap();
        prop_assert_eq!(read_aggregates(buf.as_slice()).unwrap(), t.regions);
    }
}
