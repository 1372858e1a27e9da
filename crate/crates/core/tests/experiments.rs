//! Sweep harness: agreement with single runs, table layout and reproducibility.

use momentnet::experiments::{run_training_experiment, sweep, ExperimentConfig, SweepTable};

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(vec![3, 3, 4, 4], vec![2, 2]);
    cfg.samples = 10;
    cfg.seed = seed;
    cfg.hierarchy.k_max = Some(2);
    cfg
}

fn without_timing(mut t: SweepTable) -> SweepTable {
    t.rows.iter_mut().for_each(|r| r.time_secs = 0.0);
    t
}

#[test]
fn one_row_sweep_matches_a_single_run() {
    let cfg = small(3);
    let report = run_training_experiment(&cfg).unwrap();
    let table = sweep(std::slice::from_ref(&cfg), 1).unwrap();
    assert_eq!(table.rows.len(), 1);
    let row = &table.rows[0];
    assert_eq!(row.abs_err, report.abs_err);
    assert_eq!(row.rel_err, report.rel_err);
    assert_eq!(row.noise_norm, Some(report.noise.mean_noise_norm));
    assert_eq!(row.certified, report.certified);
    assert_eq!(row.dims_label(), "(10, 3, 3, 4, 4)");
}

#[test]
fn five_row_table_has_one_line_per_config() {
    let cfgs: Vec<_> = (0..5).map(small).collect();
    let table = sweep(&cfgs, 2).unwrap();
    assert_eq!(table.rows.len(), 5);
    assert_eq!(table.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);

    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("dims,abs_err,rel_err,time_secs,noise_norm"));

    let text = table.to_text();
    let header = text.lines().next().unwrap();
    for col in SweepTable::COLUMNS {
        assert!(header.contains(col), "{header}");
    }
    assert!(text.lines().skip(2).take(5).all(|l| l.starts_with("(10, 3, 3, 4, 4)")));

    let json = serde_json::to_string(&table).unwrap();
    let back: SweepTable = serde_json::from_str(&json).unwrap();
    assert_eq!(back, table);
}

#[test]
fn rerunning_a_sweep_reproduces_everything_but_timing() {
    let cfgs: Vec<_> = (5..8).map(small).collect();
    let a = without_timing(sweep(&cfgs, 1).unwrap());
    let b = without_timing(sweep(&cfgs, 3).unwrap());
    assert_eq!(a, b);
}

#[test]
fn empty_sweep_is_an_error() {
    assert!(sweep(&[], 1).is_err());
}
