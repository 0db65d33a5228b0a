use localu::harness::{Experiment, ExperimentConfig, PNorm};
use localu::Error;

fn parse(text: &str) -> ExperimentConfig {
    serde_json::from_str(text).unwrap()
}

fn field_of(cfg: ExperimentConfig) -> String {
    match Experiment::new(cfg) {
        Err(Error::Config { field, .. }) => field,
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn defaults_and_aliases() {
    let cfg = parse(r#"{"model": "normal01:sum:m=2", "kernel": "gaussian", "n": 500, "R": 10}"#);
    assert_eq!(cfg.n, vec![500]);
    assert_eq!(cfg.replications, 10);
    assert_eq!(cfg.lambda_grid, vec![1.0]);
    assert_eq!(cfg.p_norms, vec![PNorm::Sup]);
    let cfg = parse(
        r#"{"model": "normal01:sum:m=2", "kernel": "gaussian", "n": [250, 1000],
            "replications": 5, "p_norms": [1, "2", "inf"], "path": "naive"}"#,
    );
    assert_eq!(cfg.n, vec![250, 1000]);
    assert_eq!(cfg.p_norms, vec![PNorm::L1, PNorm::L2, PNorm::Sup]);
    assert!(Experiment::new(cfg).is_ok());
}

#[test]
fn round_trip() {
    let mut cfg = ExperimentConfig::new("uniform01:distance", "indicator-ball", vec![100, 200]);
    cfg.p_norms = vec![PNorm::L2, PNorm::Sup];
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(parse(&text), cfg);
}

#[test]
fn unknown_keys_are_rejected() {
    let r: Result<ExperimentConfig, _> = serde_json::from_str(
        r#"{"model": "normal01:sum", "kernel": "gaussian", "n": 5, "bogus": 1}"#,
    );
    assert!(r.unwrap_err().to_string().contains("bogus"));
}

#[test]
fn invalid_fields_are_named() {
    let base = || ExperimentConfig::new("normal01:sum:m=2", "gaussian", vec![500]);
    let mut c = base();
    c.gamma = 1.0;
    assert_eq!(field_of(c), "gamma");
    let mut c = base();
    c.c = 0.001;
    assert_eq!(field_of(c), "gamma");
    let mut c = base();
    c.replications = 1;
    assert_eq!(field_of(c), "R");
    let mut c = base();
    c.n = vec![1000, 500];
    assert_eq!(field_of(c), "n");
    let mut c = base();
    c.kernel = "cosine".into();
    assert_eq!(field_of(c), "kernel");
    let mut c = base();
    c.model = "normal01:cube".into();
    assert_eq!(field_of(c), "model");
    let mut c = base();
    c.lambda_grid = vec![];
    assert_eq!(field_of(c), "lambda_grid");
}

#[test]
fn ladder_bandwidths() {
    let mut cfg = ExperimentConfig::new("normal01:sum:m=2", "gaussian", vec![125, 1000]);
    cfg.c = 2.0;
    let exp = Experiment::new(cfg).unwrap();
    assert!((exp.h_n(1000) - 0.2).abs() < 1e-12);
    assert!((exp.h_n(125) - 0.4).abs() < 1e-12);
}
