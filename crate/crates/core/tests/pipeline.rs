use prvr_core::aggregation::{ds_combine, opinion_to_dirichlet};
use prvr_core::evidence::{assess_row, SimilarityRow};
use prvr_core::harness::{run_pipeline, synth_generate, ArchetypeMix, Instance, PipelineConfig, SynthSpec};
use prvr_core::identification::{identify_branch, udpf_fuse, QueryCategory};
use prvr_core::losses::{calibrate_labels, evidential_loss, intra_loss, Stage};
use prvr_core::numeric::compensated_sum;
use prvr_core::transport::{flexible_ot, plan_as_labels, OTConfig};
use prvr_core::{Error, Matrix};

fn instance(seed: u64) -> Instance {
    synth_generate(&SynthSpec {
        n_queries: 60,
        n_videos: 12,
        n_clips: 8,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
}

#[test]
fn pipeline_equals_manual_composition() {
    let inst = instance(3);
    let cfg = PipelineConfig::default();
    let report = run_pipeline(&inst, &cfg).unwrap();
    let n = inst.n_queries();

    let mut partitions = Vec::new();
    let mut evidence = Vec::new();
    for scores in [&inst.s_f, &inst.s_c] {
        let rows: Vec<_> = (0..n)
            .map(|i| SimilarityRow::new(scores.row(i), inst.labels[i]).unwrap())
            .collect();
        let ev: Vec<_> = rows.iter().map(|r| assess_row(r, cfg.tau).unwrap()).collect();
        let u: Vec<f64> = ev.iter().map(|e| e.uncertainty()).collect();
        let c: Vec<f64> = ev.iter().map(|e| e.consistency).collect();
        let xi: Vec<f64> = ev.iter().map(|e| e.aleatoric).collect();
        partitions.push(identify_branch(&rows, &u, &c, &xi, cfg.beta).unwrap());
        evidence.push(ev);
    }
    assert_eq!(report.branches.frame.identification, partitions[0]);
    assert_eq!(report.branches.clip.identification, partitions[1]);
    assert_eq!(report.branches.frame.evidence, evidence[0]);

    let fused = udpf_fuse(&partitions[0].partition, &partitions[1].partition).unwrap();
    assert_eq!(report.fused.categories, fused);

    let labels = inst.label_rows();
    let calibrated = calibrate_labels(&fused, &labels, &inst.s_f, &inst.s_c, cfg.gamma).unwrap();
    assert_eq!(report.calibrated_labels.as_ref().unwrap(), &calibrated);

    let mut inter = Vec::new();
    for i in 0..n {
        let o = ds_combine(&evidence[0][i].opinion, &evidence[1][i].opinion).unwrap();
        assert_eq!(report.fused.opinions[i], o);
        let a_o = opinion_to_dirichlet(&o, inst.n_videos()).unwrap();
        let y = calibrated.row(i);
        let terms = [
            evidential_loss(&evidence[0][i].dirichlet, y).unwrap(),
            evidential_loss(&evidence[1][i].dirichlet, y).unwrap(),
            evidential_loss(&a_o, y).unwrap(),
        ];
        let q = &report.losses.per_query[i];
        assert_eq!([q.frame, q.clip, q.fused], terms);
        inter.push(terms.iter().sum::<f64>());
    }
    let l_inter = compensated_sum(inter) / n as f64;
    assert!((report.losses.l_inter - l_inter).abs() <= 1e-12);

    let mut intra = Vec::new();
    for (v, cq) in &inst.clip_query {
        let plan = flexible_ot(&cq.scores, &cfg.ot).unwrap();
        let video = report.transport.iter().find(|t| t.video == *v).unwrap();
        assert_eq!(video.plan, plan);
        let loss = intra_loss(&cq.scores, &plan_as_labels(&plan), cfg.tau).unwrap();
        intra.extend(loss.per_query.iter().flatten().copied());
    }
    let l_intra = compensated_sum(intra.iter().copied()) / intra.len() as f64;
    assert!((report.losses.l_intra - l_intra).abs() <= 1e-12);
    let l = &report.losses;
    assert!((l.l_agg - (l.l_sim + l.l_div + l.l_inter + l.l_intra)).abs() <= 1e-12);
}

#[test]
fn warm_up_has_no_calibration_or_intra_loss() {
    let inst = instance(4);
    let cfg = PipelineConfig {
        stage: Stage::WarmUp,
        ..PipelineConfig::default()
    };
    let report = run_pipeline(&inst, &cfg).unwrap();
    assert!(report.calibrated_labels.is_none());
    assert_eq!(report.losses.l_intra, 0.0);
    assert!(report.losses.per_query.iter().all(|q| q.intra.is_none()));
    let json = report.to_json().unwrap();
    assert!(!json.contains("calibrated_labels"));
    assert!(!json.contains("null"));
}

#[test]
fn all_precise_instance_keeps_one_hot_labels() {
    let inst = synth_generate(&SynthSpec {
        n_queries: 50,
        n_videos: 10,
        mix: ArchetypeMix {
            precise: 1.0,
            polysemous: 0.0,
            under_determined: 0.0,
        },
        seed: 9,
        ..SynthSpec::default()
    })
    .unwrap();
    let cfg = PipelineConfig::default();
    let report = run_pipeline(&inst, &cfg).unwrap();
    let cal = report.calibrated_labels.unwrap();
    let labels = inst.label_rows();
    // The median refinement demotes part of every initially precise set, so
    // only rows that stay out of the polysemous category pass through.
    for (i, row) in cal.rows().iter().enumerate() {
        if report.fused.categories.category(i) == QueryCategory::Polysemous {
            assert!(row[inst.labels[i]] >= 1.0 - cfg.gamma);
        } else {
            assert_eq!(row, &labels[i]);
        }
    }
}

#[test]
fn reports_are_identical_across_runs_and_thread_counts() {
    let inst = instance(5);
    let one = PipelineConfig {
        threads: 1,
        ..PipelineConfig::default()
    };
    let many = PipelineConfig { threads: 4, ..one.clone() };
    let a = run_pipeline(&inst, &one).unwrap().to_json().unwrap();
    let b = run_pipeline(&inst, &one).unwrap().to_json().unwrap();
    let c = run_pipeline(&inst, &many).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn strict_mode_reports_non_convergence_with_video_index() {
    let inst = instance(6);
    let cfg = PipelineConfig {
        strict: true,
        ot: OTConfig {
            max_iterations: 1,
            ..OTConfig::default()
        },
        ..PipelineConfig::default()
    };
    let err = run_pipeline(&inst, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(matches!(err, Error::AtVideo { .. }), "{err}");
    // Without strict mode the plan is reported as unconverged instead.
    let lax = PipelineConfig { strict: false, ..cfg };
    let report = run_pipeline(&inst, &lax).unwrap();
    assert!(report.transport.iter().any(|t| !t.plan.converged));
}

#[test]
fn invalid_inputs_carry_indices() {
    let mut inst = instance(7);
    inst.s_c.set(2, 1, f64::NAN);
    let err = run_pipeline(&inst, &PipelineConfig::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(matches!(err, Error::AtQuery { index: 2, .. }), "{err}");

    let mut inst = instance(7);
    inst.s_f = Matrix::zeros(3, 3);
    assert_eq!(run_pipeline(&inst, &PipelineConfig::default()).unwrap_err().exit_code(), 1);

    let bad = PipelineConfig {
        tau: -1.0,
        ..PipelineConfig::default()
    };
    assert_eq!(run_pipeline(&instance(7), &bad).unwrap_err().exit_code(), 3);
}

#[test]
fn instance_without_optional_parts() {
    let mut inst = instance(8);
    inst.clip_query.clear();
    inst.query_embeddings = None;
    inst.planted = None;
    let report = run_pipeline(&inst, &PipelineConfig::default()).unwrap();
    assert!(report.transport.is_empty());
    assert!(report.intra_all_excluded);
    assert_eq!(report.losses.l_intra, 0.0);
    assert_eq!(report.losses.l_div, 0.0);
    assert!(report.recovery.is_none());
    assert!(!report.to_json().unwrap().contains("null"));
}
