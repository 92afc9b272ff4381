//! Fixed-seed batch summaries compared byte for byte with checked-in files.
//! Set `WISERX_BLESS=1` to rewrite them.

use std::path::PathBuf;

use wiserx_core::engine::batch;
use wiserx_core::experiments::base_config;
use wiserx_core::metrics::{parse_summaries, summaries_csv, summarize_run};
use wiserx_core::world::Strategy;

fn golden(strategy: Strategy) {
    let cfg = base_config(strategy);
    let runs = batch(&cfg, 4, 1000).unwrap();
    let summaries: Vec<_> = runs.iter().map(|r| summarize_run(r, strategy.as_str()).unwrap()).collect();
    let got = summaries_csv(&summaries);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/summary_{}.csv", strategy.as_str()));
    if std::env::var_os("WISERX_BLESS").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap();
    assert_eq!(got, want, "{} drifted from {}", strategy.as_str(), path.display());
    assert_eq!(parse_summaries(&want).unwrap().len(), 4);
}

#[test]
fn wiserx_batch_matches_golden() {
    golden(Strategy::WiserX);
}

#[test]
fn baseline2_batch_matches_golden() {
    golden(Strategy::Baseline2);
}
