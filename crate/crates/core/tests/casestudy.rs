use equity_core::casestudy::views::flags_from_sums;
use equity_core::casestudy::{
    build_case_study_views, load_uci_students, run_case_study, synthetic_uci_csv, RegimeFlags, ReportFormat, RunConfig,
};
use equity_core::report::{case_study_reports, emit_report, long_rows};
use equity_core::{EquityError, Group};

fn fixture(n: usize, seed: u64) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("students.csv");
    std::fs::write(&path, synthetic_uci_csv(n, seed)).unwrap();
    (dir, path)
}

#[test]
fn row_count_matches_data_lines() {
    let (_dir, path) = fixture(123, 4);
    let lines = std::fs::read_to_string(&path).unwrap().lines().count() - 1;
    assert_eq!(load_uci_students(&path).unwrap().len(), lines);
}

#[test]
fn missing_file_and_missing_columns() {
    let err = load_uci_students(std::path::Path::new("/nonexistent/students.csv")).unwrap_err();
    assert!(matches!(err, EquityError::Io { .. }));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("partial.csv");
    std::fs::write(&path, "sex;G3\n\"F\";12\n").unwrap();
    let table = load_uci_students(&path).unwrap();
    let err = build_case_study_views(&table, &RunConfig::default()).unwrap_err();
    assert!(matches!(err, EquityError::MissingColumn(_)));
}

#[test]
fn flagged_share_is_interior_and_median_rule_holds() {
    let (_dir, path) = fixture(395, 7);
    let table = load_uci_students(&path).unwrap();
    let views = build_case_study_views(&table, &RunConfig::default()).unwrap();
    let rate = views.obstacle_flags.iter().filter(|&&f| f).count() as f64 / 395.0;
    assert!(rate > 0.0 && rate < 1.0, "{rate}");
    assert_eq!(flags_from_sums(&[4, 4]), vec![false, false]);
}

#[test]
fn full_run_reports_every_regime_and_is_byte_stable() {
    let (dir, path) = fixture(395, 7);
    let cfg = RunConfig { input: path, ..RunConfig::default() };
    let first = run_case_study(&cfg).unwrap();
    assert_eq!(first.regimes.len(), 8);
    for r in &first.regimes {
        assert!(r.report.is_some() || r.error.is_some(), "{}", r.name);
        if let Some(rep) = &r.report {
            assert!((0.0..=3.0).contains(&rep.score));
        }
    }
    // Equal outcome never raises the EO violation of its access counterpart.
    for a in [false, true] {
        let eo = |o| {
            first
                .regime(RegimeFlags { equal_access: a, equal_outcome: o, equal_utilization: false })
                .and_then(|r| r.eo_violation())
                .unwrap()
        };
        assert!(eo(true) <= eo(false) + 1e-12);
    }
    // Equal access raises the positive-qualification rate of both sexes.
    let rate = |flags: RegimeFlags, g| first.regime(flags).unwrap().positive_rate_by_group[&g];
    for g in [Group::Zero, Group::One] {
        assert!(rate(RegimeFlags { equal_access: true, ..RegimeFlags::NO_EQUITY }, g) >= rate(RegimeFlags::NO_EQUITY, g));
    }

    let reports = case_study_reports(&first);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let written = emit_report(&reports, ReportFormat::Csv, &out_a).unwrap();
    let again = run_case_study(&cfg).unwrap();
    emit_report(&case_study_reports(&again), ReportFormat::Csv, &out_b).unwrap();
    for p in &written {
        let twin = out_b.join(p.file_name().unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(twin).unwrap());
        let rows = std::fs::read_to_string(p).unwrap().lines().count() - 1;
        let name = p.file_stem().unwrap().to_str().unwrap();
        let report = reports.iter().find(|r| r.name == name).unwrap();
        assert_eq!(rows, long_rows(report).len());
    }
}

#[test]
fn zero_alleviation_budget_collapses_equal_access() {
    let (_dir, path) = fixture(300, 5);
    let cfg = RunConfig { input: path, alleviation_budget: Some(0.0), ..RunConfig::default() };
    let result = run_case_study(&cfg).unwrap();
    let equal = RegimeFlags { equal_access: true, ..RegimeFlags::NO_EQUITY };
    let rates = |f| result.regime(f).unwrap().positive_rate_by_group.clone();
    assert_eq!(rates(equal), rates(RegimeFlags::NO_EQUITY));
    let bad = RunConfig { alleviation_budget: Some(-1.0), ..cfg };
    assert!(run_case_study(&bad).is_err());
}
