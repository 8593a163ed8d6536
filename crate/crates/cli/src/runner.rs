//! Experiment orchestration: builds the dataset, networks and samplers for a
//! task, runs training with file-emitting hooks, evaluates the result and
//! writes all artifacts into the output directory.

use anyhow::{bail, Context, Result};
use gwgen_core::datasets::{
    community_labels, make_community_graph, make_glyphs, make_scurve,
    FixedSetSampler, MixtureSampler, MixtureSpec,
};
use gwgen_core::eval::{
    community_separation, evaluate, knn_overlap_permutation_baseline, match_generated, EvalConfig,
    EvalReference, EvalReport,
};
use gwgen_core::metric_spaces::{floyd_warshall, knn_graph, DistanceMatrix};
use gwgen_core::neural::{forward, orthogonal_init, sample_noise, DenseNet};
use gwgen_core::regularizers::ThicknessProxy;
use gwgen_core::trainer::{
    train, IterationRecord, ReferenceSampler, TrainHooks, TrainOutcome, TrainOutput,
};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{ExperimentConfig, Task};
use crate::formats::{
    read_graph_file, save_checkpoint, save_checkpoint_json, write_graph_file, write_samples_csv,
    JsonlWriter,
};

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub outcome: TrainOutcome,
    pub report: EvalReport,
    pub extras: serde_json::Value,
}

struct FileHooks {
    start: Instant,
    jsonl: JsonlWriter,
    out_dir: PathBuf,
    io_error: Option<anyhow::Error>,
}

impl TrainHooks for FileHooks {
    fn now_s(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_record(&mut self, record: &IterationRecord) {
        if self.io_error.is_none() {
            if let Err(e) = self.jsonl.write(record) {
                self.io_error = Some(e);
            }
        }
    }

    fn on_checkpoint(&mut self, iteration: usize, samples: &Array2<f64>) {
        if self.io_error.is_none() {
            let path = self.out_dir.join(format!("samples_iter{iteration}.csv"));
            if let Err(e) = write_samples_csv(&path, samples) {
                self.io_error = Some(e);
            }
        }
    }
}

fn mixture_spec(cfg: &ExperimentConfig) -> Result<MixtureSpec> {
    let centers = cfg.dataset.centers_for(cfg.task);
    let modes: Vec<(Array1<f64>, f64)> = centers
        .iter()
        .map(|c| (Array1::from_vec(c.clone()), cfg.dataset.sigma))
        .collect();
    Ok(MixtureSpec::new(modes)?)
}

fn centers_matrix(centers: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((centers.len(), centers[0].len()), |(i, j)| centers[i][j])
}

/// Generates evaluation samples from the trained generator with a dedicated
/// deterministic stream.
fn generate_samples(generator: &DenseNet, n: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51ed_270a_96a3_11c7);
    let z = sample_noise(&mut rng, n, generator.input_dim());
    Ok(forward(generator, &z)?.0)
}

fn mean_tail(records: &[IterationRecord], tail: usize, f: impl Fn(&IterationRecord) -> Option<f64>) -> f64 {
    let vals: Vec<f64> = records.iter().rev().filter_map(|r| f(r)).take(tail).collect();
    if vals.is_empty() {
        return f64::NAN;
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn penalty_value(record: &IterationRecord, name: &str) -> Option<f64> {
    record
        .penalties
        .iter()
        .find(|p| p.name == name)
        .map(|p| p.value)
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output dir {}", out_dir.display()))?;
    std::fs::write(
        out_dir.join("config_resolved.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;

    let train_cfg = cfg.train_config();
    let gen_dim = cfg.task.generated_dim();

    // Reference structures per task.
    let mut sampler: Box<dyn ReferenceSampler>;
    let mut geodesic: Option<DistanceMatrix> = None;
    let mut communities: Option<Vec<usize>> = None;
    let mut glyphs: Option<Array2<f64>> = None;

    match cfg.task {
        Task::Mixture2d | Task::Mixture3dTo2d | Task::Mixture2dTo3d => {
            sampler = Box::new(MixtureSampler {
                spec: mixture_spec(cfg)?,
            });
        }
        Task::Scurve => {
            let cloud = make_scurve(cfg.dataset.scurve_samples, cfg.seed ^ 0x5c)?;
            let graph = knn_graph(&cloud.points, cfg.dataset.knn_k)?;
            let geo = floyd_warshall(&graph)?;
            geodesic = Some(geo.clone());
            sampler = Box::new(FixedSetSampler::from_distances(geo, Some(cloud.points))?);
        }
        Task::Graph => {
            let graph = match &cfg.dataset.graph_file {
                Some(path) => read_graph_file(Path::new(path))?,
                None => {
                    let g = make_community_graph(
                        cfg.dataset.communities,
                        cfg.dataset.community_size,
                        cfg.dataset.p_in,
                        cfg.dataset.p_out,
                        cfg.seed ^ 0x6b,
                    )?;
                    write_graph_file(&out_dir.join("graph.txt"), &g)?;
                    communities = Some(community_labels(
                        cfg.dataset.communities,
                        cfg.dataset.community_size,
                    ));
                    g
                }
            };
            let geo = floyd_warshall(&graph)?;
            geodesic = Some(geo.clone());
            sampler = Box::new(FixedSetSampler::from_distances(geo, None)?);
        }
        Task::Style => {
            let g = make_glyphs(cfg.dataset.glyph_count, cfg.seed ^ 0x91);
            glyphs = Some(g.clone());
            sampler = Box::new(FixedSetSampler::from_points(g)?);
        }
    }

    // Networks.
    let mut generator = DenseNet::mlp(cfg.model.noise_dim, &cfg.model.gen_hidden, gen_dim)?;
    orthogonal_init(&mut generator, cfg.seed.wrapping_add(1));
    let adversary = match train_cfg.adversary_mode {
        gwgen_core::trainer::AdversaryMode::Identity => None,
        _ => {
            let data_dim = cfg.task.data_dim();
            if data_dim != gen_dim {
                bail!("learned adversary needs matching data and generator dimensions");
            }
            let mut adv = DenseNet::mlp(
                data_dim,
                &cfg.model.adv_hidden,
                cfg.feature_dim(data_dim),
            )?;
            orthogonal_init(&mut adv, cfg.seed.wrapping_add(2));
            Some(adv)
        }
    };

    let style_adv = ThicknessProxy {
        threshold: cfg.train.style_threshold,
        gain: cfg.train.style_gain,
        lambda: cfg.train.style_lambda,
    };
    let style: Option<&dyn gwgen_core::regularizers::StyleAdversary> =
        if matches!(cfg.task, Task::Style) {
            Some(&style_adv)
        } else {
            None
        };

    let mut hooks = FileHooks {
        start: Instant::now(),
        jsonl: JsonlWriter::create(&out_dir.join("metrics.jsonl"))?,
        out_dir: out_dir.clone(),
        io_error: None,
    };

    let output: TrainOutput = train(
        generator,
        adversary,
        sampler.as_mut(),
        style,
        &train_cfg,
        &mut hooks,
    )?;
    hooks.jsonl.flush()?;
    if let Some(e) = hooks.io_error.take() {
        return Err(e);
    }

    // Final checkpoints.
    save_checkpoint(&out_dir.join("generator.ckpt"), &output.generator, None)?;
    save_checkpoint_json(&out_dir.join("generator.json"), &output.generator)?;
    if let Some(pair) = &output.adversary {
        save_checkpoint(&out_dir.join("adversary_data.ckpt"), &pair.data_net, None)?;
        save_checkpoint(&out_dir.join("adversary_gen.ckpt"), &pair.gen_net, None)?;
    }

    // Evaluation.
    let eval_cfg = EvalConfig {
        kmeans_seed: cfg.eval.kmeans_seed,
        knn_k: cfg.eval.knn_k,
        ..EvalConfig::default()
    };
    let records = output.metrics.records();
    let mut extras = json!({
        "outcome": format!("{:?}", output.outcome),
        "iterations": records.len(),
        "final_gw_loss_mean50": mean_tail(records, 50, |r| Some(r.gw_loss)),
        "max_marginal_violation": records
            .iter()
            .map(|r| r.marginal_violation)
            .fold(0.0f64, f64::max),
        "max_feature_stretch": records
            .iter()
            .map(|r| r.feature_stretch)
            .fold(0.0f64, f64::max),
    });

    let report = match cfg.task {
        Task::Mixture2d | Task::Mixture3dTo2d | Task::Mixture2dTo3d => {
            let generated =
                generate_samples(&output.generator, train_cfg.eval_samples, cfg.seed)?;
            write_samples_csv(&out_dir.join("samples_final.csv"), &generated)?;
            let spec = mixture_spec(cfg)?;
            let mut ref_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e);
            let reference_points = spec.draw(&mut ref_rng, cfg.dataset.reference_samples);
            let reference = EvalReference::Modes {
                centers: centers_matrix(&cfg.dataset.centers_for(cfg.task)),
                points: Some(reference_points),
            };
            evaluate(&generated, &reference, &eval_cfg)?
        }
        Task::Scurve => {
            let geo = geodesic.expect("set above");
            let generated = generate_samples(&output.generator, geo.n(), cfg.seed)?;
            write_samples_csv(&out_dir.join("samples_final.csv"), &generated)?;
            let baseline =
                knn_overlap_permutation_baseline(&geo, &generated, eval_cfg.knn_k, cfg.seed)?;
            extras["knn_overlap_permutation_baseline"] = json!(baseline);
            evaluate(&generated, &EvalReference::Geodesic { distances: geo }, &eval_cfg)?
        }
        Task::Graph => {
            let geo = geodesic.expect("set above");
            let generated = generate_samples(&output.generator, geo.n(), cfg.seed)?;
            write_samples_csv(&out_dir.join("samples_final.csv"), &generated)?;
            let report = evaluate(
                &generated,
                &EvalReference::Graph {
                    distances: geo.clone(),
                    communities: communities.clone().unwrap_or_default(),
                },
                &eval_cfg,
            )?;
            if let Some(labels) = &communities {
                let (matching, _) = match_generated(&geo, &generated, &eval_cfg.gw)?;
                let (intra, inter) = community_separation(&generated, &matching, labels)?;
                extras["intra_community_distance"] = json!(intra);
                extras["inter_community_distance"] = json!(inter);
            }
            report
        }
        Task::Style => {
            let glyphs = glyphs.expect("set above");
            let generated = generate_samples(&output.generator, 256, cfg.seed)?;
            write_samples_csv(&out_dir.join("samples_final.csv"), &generated)?;
            let activate_at = match train_cfg
                .gen_penalties
                .iter()
                .find_map(|p| match p {
                    gwgen_core::trainer::GenPenaltySpec::Style { activate_at } => {
                        Some(*activate_at)
                    }
                    _ => None,
                }) {
                Some(t) => t,
                None => records.len() / 2,
            };
            let phase1 = &records[..activate_at.min(records.len())];
            let phase1_score = mean_tail(phase1, 50, |r| penalty_value(r, "style_score"));
            let final_score = mean_tail(records, 50, |r| penalty_value(r, "style_score"));
            let phase1_gw = mean_tail(phase1, 50, |r| Some(r.gw_loss));
            let final_gw = mean_tail(records, 50, |r| Some(r.gw_loss));
            extras["style_phase1_end_score"] = json!(phase1_score);
            extras["style_final_score"] = json!(final_score);
            extras["style_phase1_end_gw"] = json!(phase1_gw);
            extras["style_final_gw"] = json!(final_gw);
            extras["style_activate_at"] = json!(activate_at);

            // Structural comparison against a held-out glyph batch.
            let mut idx_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x44);
            let take = 256.min(glyphs.nrows());
            let idx = rand::seq::index::sample(&mut idx_rng, glyphs.nrows(), take).into_vec();
            let ref_batch =
                Array2::from_shape_fn((take, glyphs.ncols()), |(i, j)| glyphs[[idx[i], j]]);
            let proxy = ThicknessProxy {
                threshold: cfg.train.style_threshold,
                gain: cfg.train.style_gain,
                lambda: cfg.train.style_lambda,
            };
            let gen_scores = gwgen_core::regularizers::StyleAdversary::score(&proxy, &generated);
            let ref_scores = gwgen_core::regularizers::StyleAdversary::score(&proxy, &ref_batch);
            extras["generated_mean_style_score"] =
                json!(gen_scores.sum() / gen_scores.len() as f64);
            extras["reference_mean_style_score"] =
                json!(ref_scores.sum() / ref_scores.len() as f64);
            EvalReport {
                mode_coverage: Vec::new(),
                centroid_distance_correlation: 0.0,
                knn_overlap: 0.0,
                final_gw,
            }
        }
    };

    let eval_doc = json!({
        "mode_coverage": report.mode_coverage,
        "centroid_distance_correlation": report.centroid_distance_correlation,
        "knn_overlap": report.knn_overlap,
        "final_gw": report.final_gw,
        "extras": extras,
    });
    std::fs::write(
        out_dir.join("eval.json"),
        serde_json::to_string_pretty(&eval_doc)?,
    )?;

    Ok(RunArtifacts {
        out_dir,
        outcome: output.outcome,
        report,
        extras,
    })
}

/// Deterministically subsamples `points` to `n` rows (identity when already
/// that size).
fn equalize(points: &Array2<f64>, n: usize, seed: u64) -> Array2<f64> {
    if points.nrows() <= n {
        return points.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, points.nrows(), n).into_vec();
    Array2::from_shape_fn((n, points.ncols()), |(i, j)| points[[idx[i], j]])
}

/// `gwgen eval`: scores a sample CSV against a reference (CSV of points or a
/// graph edge list).
pub fn eval_command(
    samples: &Path,
    reference: &Path,
    task: Task,
    modes: usize,
    knn_k: usize,
    seed: u64,
) -> Result<(EvalReport, serde_json::Value)> {
    let generated = crate::formats::read_samples_csv(samples)?;
    let eval_cfg = EvalConfig {
        kmeans_seed: seed,
        knn_k,
        ..EvalConfig::default()
    };
    let mut extras = json!({});
    let report = match task {
        Task::Mixture2d | Task::Mixture3dTo2d | Task::Mixture2dTo3d => {
            let ref_points = crate::formats::read_samples_csv(reference)?;
            let (centers, _, _) = gwgen_core::eval::kmeans(&ref_points, modes, seed);
            let reference = EvalReference::Modes {
                centers,
                points: Some(ref_points),
            };
            evaluate(&generated, &reference, &eval_cfg)?
        }
        Task::Scurve => {
            let ref_points = crate::formats::read_samples_csv(reference)?;
            let n = ref_points.nrows().min(generated.nrows());
            let ref_sub = equalize(&ref_points, n, seed ^ 1);
            let gen_sub = equalize(&generated, n, seed ^ 2);
            let graph = knn_graph(&ref_sub, knn_k)?;
            let geo = floyd_warshall(&graph)?;
            let baseline = knn_overlap_permutation_baseline(&geo, &gen_sub, knn_k, seed)?;
            extras["knn_overlap_permutation_baseline"] = json!(baseline);
            evaluate(&gen_sub, &EvalReference::Geodesic { distances: geo }, &eval_cfg)?
        }
        Task::Graph => {
            let graph = read_graph_file(reference)?;
            let geo = floyd_warshall(&graph)?;
            if generated.nrows() < geo.n() {
                bail!(
                    "need at least {} generated samples for {} graph nodes",
                    geo.n(),
                    geo.n()
                );
            }
            let gen_sub = equalize(&generated, geo.n(), seed ^ 2);
            evaluate(&gen_sub, &EvalReference::Geodesic { distances: geo }, &eval_cfg)?
        }
        Task::Style => bail!("style runs are evaluated from their metrics; see eval.json"),
    };
    Ok((report, extras))
}
