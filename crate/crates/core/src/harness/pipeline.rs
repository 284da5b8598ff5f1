//! End-to-end orchestration over both branches.
//!
//! Per-query and per-video work runs on a dedicated rayon pool; results are
//! collected in index order and every reduction is sequential, so reports do
//! not depend on the thread count.

use rayon::prelude::*;

use super::config::PipelineConfig;
use super::instance::{ClipQueryMatrix, Instance};
use super::report::{
    BranchReport, BranchReports, ColumnReport, FusedReport, RecallReport, RecoveryReport, Report,
    RetrievalReport, VideoReport, SCHEMA_VERSION,
};
use crate::aggregation::{ds_combine, opinion_to_dirichlet};
use crate::evidence::{assess_row, DirichletParams, QueryEvidence, SimilarityRow, SubjectiveOpinion};
use crate::identification::{identify_branch, udpf_fuse, BranchIdentification, PartitionSet, QueryCategory};
use crate::losses::{
    aggregate_loss, calibrate_labels, diversity_loss, inter_loss, intra_loss, similarity_loss,
    CalibratedLabels, IntraLoss, LossComponents, QueryLossTerms, Stage,
};
use crate::matrix::SimilarityMatrix;
use crate::similarity::{overall_similarity_matrix, EmbeddingRole, EmbeddingSet};
use crate::transport::{flexible_ot, plan_as_labels, PlanLabels, TransportPlan};
use crate::{Error, Result};

/// Maps `f` over `0..n` in parallel, keeping index order. The first failing
/// index wins, independent of scheduling.
fn par_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(&f).collect();
    results.into_iter().collect()
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(f)
}

/// Evidence and identification for one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchAssessment {
    pub evidence: Vec<QueryEvidence>,
    pub identification: BranchIdentification,
}

pub fn assess_branch(
    scores: &SimilarityMatrix,
    labels: &[usize],
    tau: f64,
    beta: f64,
) -> Result<BranchAssessment> {
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| SimilarityRow::new(scores.row(i), l).map_err(|e| e.at_query(i)))
        .collect::<Result<Vec<_>>>()?;
    let evidence = par_indexed(rows.len(), |i| {
        assess_row(&rows[i], tau).map_err(|e| e.at_query(i))
    })?;
    let u: Vec<f64> = evidence.iter().map(QueryEvidence::uncertainty).collect();
    let c: Vec<f64> = evidence.iter().map(|e| e.consistency).collect();
    let xi: Vec<f64> = evidence.iter().map(|e| e.aleatoric).collect();
    let identification = identify_branch(&rows, &u, &c, &xi, beta)?;
    Ok(BranchAssessment {
        evidence,
        identification,
    })
}

/// Both branches, the fused partition and the fused opinions.
#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub frame: BranchAssessment,
    pub clip: BranchAssessment,
    pub fused: PartitionSet,
    pub fused_opinions: Vec<SubjectiveOpinion>,
    pub fused_dirichlet: Vec<DirichletParams>,
}

pub fn identify(inst: &Instance, cfg: &PipelineConfig) -> Result<Identification> {
    let frame = assess_branch(&inst.s_f, &inst.labels, cfg.tau, cfg.beta)?;
    let clip = assess_branch(&inst.s_c, &inst.labels, cfg.tau, cfg.beta)?;
    let fused = udpf_fuse(&frame.identification.partition, &clip.identification.partition)?;
    let k = inst.n_videos();
    let combined = par_indexed(inst.n_queries(), |i| {
        let o = ds_combine(&frame.evidence[i].opinion, &clip.evidence[i].opinion)
            .map_err(|e| e.at_query(i))?;
        let d = opinion_to_dirichlet(&o, k).map_err(|e| e.at_query(i))?;
        Ok((o, d))
    })?;
    let (fused_opinions, fused_dirichlet) = combined.into_iter().unzip();
    Ok(Identification {
        frame,
        clip,
        fused,
        fused_opinions,
        fused_dirichlet,
    })
}

pub fn calibrate(inst: &Instance, ident: &Identification, gamma: f64) -> Result<CalibratedLabels> {
    calibrate_labels(&ident.fused, &inst.label_rows(), &inst.s_f, &inst.s_c, gamma)
}

/// Flexible transport and intra-video loss for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTransport {
    pub video: usize,
    pub queries: Vec<usize>,
    pub plan: TransportPlan,
    pub labels: PlanLabels,
    pub intra: IntraLoss,
}

pub fn transport_video(
    video: usize,
    cq: &ClipQueryMatrix,
    cfg: &PipelineConfig,
) -> Result<VideoTransport> {
    let plan = flexible_ot(&cq.scores, &cfg.ot).map_err(|e| e.at_video(video))?;
    if cfg.strict && !plan.converged {
        return Err(Error::NotConverged {
            iterations: plan.iterations,
            residual: plan.row_residual.max(plan.col_residual),
        }
        .at_video(video));
    }
    let labels = plan_as_labels(&plan);
    let intra = intra_loss(&cq.scores, &labels, cfg.tau).map_err(|e| match e {
        Error::AtQuery { index, source } => Error::AtQuery {
            index: cq.queries[index],
            source,
        }
        .at_video(video),
        e => e.at_video(video),
    })?;
    Ok(VideoTransport {
        video,
        queries: cq.queries.clone(),
        plan,
        labels,
        intra,
    })
}

pub fn transport_all(inst: &Instance, cfg: &PipelineConfig) -> Result<Vec<VideoTransport>> {
    let entries: Vec<(&usize, &ClipQueryMatrix)> = inst.clip_query.iter().collect();
    par_indexed(entries.len(), |i| transport_video(*entries[i].0, entries[i].1, cfg))
}

/// Rank of the labelled video, counting ties against it.
fn label_rank(row: &[f64], label: usize) -> usize {
    let s = row[label];
    1 + row
        .iter()
        .enumerate()
        .filter(|&(j, &v)| j != label && v >= s)
        .count()
}

pub fn recall(scores: &SimilarityMatrix, labels: &[usize]) -> RecallReport {
    let ranks: Vec<usize> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| label_rank(scores.row(i), l))
        .collect();
    let at = |k: usize| {
        if ranks.is_empty() {
            0.0
        } else {
            100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
        }
    };
    let (r1, r5, r10) = (at(1), at(5), at(10));
    RecallReport {
        r1,
        r5,
        r10,
        sum_r: r1 + r5 + r10,
    }
}

fn accuracy(predicted: &[QueryCategory], planted: &[QueryCategory]) -> f64 {
    let hits = predicted.iter().zip(planted).filter(|(a, b)| a == b).count();
    hits as f64 / planted.len().max(1) as f64
}

pub fn recovery(ident: &Identification, planted: &[QueryCategory]) -> RecoveryReport {
    let mut confusion = [[0usize; 3]; 3];
    for (&p, &q) in planted.iter().zip(ident.fused.categories()) {
        confusion[p as usize][q as usize] += 1;
    }
    RecoveryReport {
        accuracy: accuracy(ident.fused.categories(), planted),
        frame_accuracy: accuracy(ident.frame.identification.partition.categories(), planted),
        clip_accuracy: accuracy(ident.clip.identification.partition.categories(), planted),
        confusion,
    }
}

pub fn branch_report(b: BranchAssessment) -> BranchReport {
    BranchReport {
        counts: b.identification.partition.counts().into(),
        evidence: b.evidence,
        identification: b.identification,
    }
}

pub fn video_report(v: VideoTransport) -> VideoReport {
    let columns = v
        .queries
        .iter()
        .enumerate()
        .map(|(j, &query)| ColumnReport {
            query,
            excluded: v.labels.columns[j].is_none(),
            clip_distribution: v.labels.columns[j].clone(),
            intra_loss: v.intra.per_query[j],
        })
        .collect();
    VideoReport {
        video: v.video,
        plan: v.plan,
        columns,
        intra_mean: v.intra.mean,
        all_excluded: v.intra.all_excluded,
    }
}

pub fn identification_report(ident: Identification) -> (BranchReports, FusedReport) {
    let Identification {
        frame,
        clip,
        fused,
        fused_opinions,
        fused_dirichlet,
    } = ident;
    (
        BranchReports {
            frame: branch_report(frame),
            clip: branch_report(clip),
        },
        FusedReport {
            counts: fused.counts().into(),
            categories: fused,
            opinions: fused_opinions,
            dirichlet: fused_dirichlet,
        },
    )
}

/// Runs identification, fusion, calibration, transport and the loss
/// schedule, and collects every intermediate quantity into a [`Report`].
pub fn run_pipeline(inst: &Instance, cfg: &PipelineConfig) -> Result<Report> {
    cfg.validate()?;
    inst.validate()?;
    with_pool(cfg.threads, || build_report(inst, cfg))
}

/// Runs `f` on a pool sized by `cfg.threads` after validating both inputs.
pub fn run_in_pool<T: Send>(
    inst: &Instance,
    cfg: &PipelineConfig,
    f: impl FnOnce(&Instance, &PipelineConfig) -> Result<T> + Send,
) -> Result<T> {
    cfg.validate()?;
    inst.validate()?;
    with_pool(cfg.threads, || f(inst, cfg))
}

fn build_report(inst: &Instance, cfg: &PipelineConfig) -> Result<Report> {
    let n = inst.n_queries();
    let ident = identify(inst, cfg)?;

    let calibrated = match cfg.stage {
        Stage::Full => Some(calibrate(inst, &ident, cfg.gamma)?),
        Stage::WarmUp => None,
    };
    let targets = match &calibrated {
        Some(c) => c.rows().to_vec(),
        None => inst.label_rows(),
    };
    let dirichlet = |b: &BranchAssessment| -> Vec<DirichletParams> {
        b.evidence.iter().map(|e| e.dirichlet.clone()).collect()
    };
    let inter = inter_loss(
        &dirichlet(&ident.frame),
        &dirichlet(&ident.clip),
        &ident.fused_dirichlet,
        &targets,
    )?;

    let videos = transport_all(inst, cfg)?;
    let mut intra_of = vec![None; n];
    for v in &videos {
        for (j, &q) in v.queries.iter().enumerate() {
            intra_of[q] = v.intra.per_query[j];
        }
    }
    let included: Vec<f64> = intra_of.iter().flatten().copied().collect();
    let intra_all_excluded = included.is_empty();
    let l_intra = if intra_all_excluded {
        0.0
    } else {
        crate::numeric::compensated_sum(included.iter().copied()) / included.len() as f64
    };

    let l_sim = similarity_loss(&inst.s_f, &inst.s_c, &inst.labels, &cfg.loss)?;
    let l_div = match &inst.query_embeddings {
        Some(q) => diversity_loss(
            &EmbeddingSet::new(q.clone(), EmbeddingRole::Query)?,
            &inst.labels,
            cfg.loss.diversity_delta,
            cfg.loss.diversity_scale,
        )?,
        None => 0.0,
    };
    let per_query = inter
        .per_query
        .iter()
        .zip(&intra_of)
        .map(|(t, &intra)| QueryLossTerms {
            frame: t[0],
            clip: t[1],
            fused: t[2],
            intra,
        })
        .collect();
    let losses = aggregate_loss(
        cfg.stage,
        LossComponents {
            l_sim,
            l_div,
            l_inter: inter.mean,
            l_intra,
            per_query,
        },
    );

    let overall = overall_similarity_matrix(&inst.s_f, &inst.s_c, &cfg.weights)?;
    let retrieval = RetrievalReport {
        frame: recall(&inst.s_f, &inst.labels),
        clip: recall(&inst.s_c, &inst.labels),
        overall: recall(&overall, &inst.labels),
    };
    let recovery = inst.planted.as_deref().map(|p| recovery(&ident, p));

    let (branches, fused) = identification_report(ident);
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        stage: cfg.stage,
        config: cfg.clone(),
        n_queries: n,
        n_videos: inst.n_videos(),
        branches,
        fused,
        calibrated_labels: calibrated,
        transport: videos.into_iter().map(video_report).collect(),
        losses,
        intra_all_excluded: intra_all_excluded && cfg.stage == Stage::Full,
        retrieval,
        recovery,
    })
}
