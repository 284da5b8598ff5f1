use std::path::Path;

use prvr_core::harness::report::{plot_csv, render_summary};
use prvr_core::harness::{run_pipeline, synth_generate, PipelineConfig, SynthSpec};
use prvr_core::losses::Stage;
use serde_json::Value;

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn report_value(stage: Stage, planted: bool) -> Value {
    let mut inst = synth_generate(&SynthSpec {
        n_queries: 40,
        n_videos: 8,
        seed: 13,
        ..SynthSpec::default()
    })
    .unwrap();
    if !planted {
        inst.planted = None;
    }
    let cfg = PipelineConfig {
        stage,
        ..PipelineConfig::default()
    };
    serde_json::from_str(&run_pipeline(&inst, &cfg).unwrap().to_json().unwrap()).unwrap()
}

#[test]
fn reports_validate_against_documented_schema() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    for (stage, planted) in [(Stage::Full, true), (Stage::WarmUp, true), (Stage::Full, false)] {
        let report = report_value(stage, planted);
        let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
}

#[test]
fn schema_rejects_tampered_reports() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let mut report = report_value(Stage::Full, true);
    report["schema_version"] = Value::from(2);
    assert!(!validator.is_valid(&report));
    let mut report = report_value(Stage::Full, true);
    report["losses"]["l_sim"] = Value::Null;
    assert!(!validator.is_valid(&report));
}

#[test]
fn summary_and_plot_render_from_json() {
    let report = report_value(Stage::Full, true);
    let text = render_summary(&report).unwrap();
    assert!(text.contains("recovery: fused"));
    assert!(text.contains("l_agg"));
    let csv = plot_csv(&report).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert!(csv.starts_with("query,category,"));
}
