use healthledger::bench::parse_size;
use healthledger::formats::{parse_scenario, reports_csv};
use healthledger_core::harness::{run_scenario, ScenarioConfig, WorkloadConfig};
use healthledger_core::keys::NodeId;
use healthledger_core::simnet::{FaultBehavior, FaultSpec};
use proptest::prelude::*;

fn behavior() -> impl Strategy<Value = FaultBehavior> {
    prop_oneof![
        Just(FaultBehavior::Silent),
        Just(FaultBehavior::Equivocate),
        Just(FaultBehavior::CorruptStorage),
        Just(FaultBehavior::Crash),
        (0.0f64..500.0).prop_map(|extra_ms| FaultBehavior::Delayed { extra_ms }),
    ]
}

fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    let faults = proptest::collection::vec((0u32..15, behavior(), 0.0f64..1e5, proptest::option::of(1e5f64..2e5)), 0..5);
    // TOML integers are signed 64-bit, so seeds stay below 2^63 there
    (0..=i64::MAX as u64, 4usize..40, 0.1f64..1e4, 0.0f64..0.5, 0.0f64..600.0, faults).prop_map(
        |(seed, nodes, duration_s, drop, rate, faults)| {
            let mut cfg = ScenarioConfig { seed, nodes, duration_s, ..ScenarioConfig::default() };
            cfg.link.drop_probability = drop;
            cfg.workload = WorkloadConfig { records_per_minute: rate, ..cfg.workload };
            cfg.faults = faults
                .into_iter()
                .map(|(node, behavior, at_ms, until_ms)| FaultSpec { node: NodeId(node), behavior, at_ms, until_ms })
                .collect();
            cfg
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scenarios_round_trip_through_toml_and_json(cfg in scenario()) {
        let toml = toml::to_string(&cfg).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(&parse_scenario(&toml, true).unwrap(), &cfg);
        prop_assert_eq!(&parse_scenario(&json, false).unwrap(), &cfg);
    }

    #[test]
    fn sizes_scale_by_their_suffix(n in 1usize..1 << 20) {
        prop_assert_eq!(parse_size(&n.to_string()), Ok(n));
        prop_assert_eq!(parse_size(&format!("{n}K")), Ok(n * 1024));
        prop_assert_eq!(parse_size(&format!(" {n}m ")), Ok(n * 1024 * 1024));
    }
}

#[test]
fn csv_rows_line_up_with_the_header() {
    let reports: Vec<_> = (1..=3)
        .map(|seed| {
            let cfg = ScenarioConfig { seed, duration_s: 4.0, drain_s: 5.0, ..ScenarioConfig::default() };
            run_scenario(&cfg).unwrap().report
        })
        .collect();
    let csv = String::from_utf8(reports_csv(&reports).unwrap()).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let header = reader.headers().unwrap().clone();
    assert!(header.iter().all(|h| !h.starts_with("definitions")));
    let seed_col = header.iter().position(|h| h == "seed").unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (row, report) in rows.iter().zip(&reports) {
        assert_eq!(row.len(), header.len());
        assert_eq!(row[seed_col].parse::<u64>().unwrap(), report.seed);
        let ft = header.iter().position(|h| h == "metrics.fault_tolerance_pct").unwrap();
        assert_eq!(row[ft].parse::<f64>().unwrap(), report.metrics.fault_tolerance_pct);
    }
}

#[test]
fn shipped_scenarios_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = healthledger::formats::load_scenario(&path).unwrap_or_else(|e| panic!("{e}"));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), cfg.name);
        seen += 1;
    }
    assert!(seen >= 4);
}
