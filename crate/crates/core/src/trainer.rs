//! Alternating generator/adversary training on the normalized entropic GW
//! objective.
//!
//! Each iteration samples a reference batch `X` and noise `Z`, pushes `Z`
//! through the generator, maps both batches into feature space (through the
//! adversary pair, or identically), builds intra-space distance matrices and
//! evaluates the normalized GW loss. Generator steps descend through the
//! envelope gradient chain (coupling frozen, distances differentiated);
//! adversary steps ascend on the loss minus the orthogonality regularizer of
//! both branches. The loop is strictly sequential and bitwise deterministic
//! for a fixed config and seed (wall-clock aside).

use alloc::vec::Vec;
use ndarray::Array2;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gw::{
    normalized_gw_full, normalized_gw_grad_d_frozen, normalized_gw_grad_dbar_frozen, GwConfig,
    NormalizedGwSolve,
};
use crate::metric_spaces::{
    pairwise_euclidean, pairwise_euclidean_backward, DistanceMatrix, ProbabilityVector,
};
use crate::neural::{
    adam_step, backward, forward, sample_noise, AdamState, DenseNet, Direction, GradientSet, Tape,
};
use crate::regularizers::{
    l1_penalty, layerwise_orthogonality_penalty, procrustes_penalty, style_penalty,
    OrthogonalityMode, PenaltyResult, StyleAdversary,
};
use crate::{Error, Result};

/// How the intra-space metric is parametrized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AdversaryMode {
    /// Feature maps learned adversarially (Euclidean distances in feature
    /// space).
    Learned,
    /// Raw Euclidean distances, no adversary.
    Identity,
    /// Learned until the given iteration, then held fixed (the nets keep
    /// defining distances but stop updating).
    FrozenAfter(usize),
}

/// Which orthogonality regularizer constrains the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum OrthMode {
    /// Whole-network Procrustes penalty (the default).
    Procrustes,
    /// Per-layer `||W^T W - I||_F^2`.
    LayerwiseFull,
    /// Per-layer off-diagonal-only penalty.
    LayerwiseOffdiag,
    /// Orthogonal initialization only, no penalty during training.
    SaxeInitOnly,
}

/// Generator shaping penalties applied on top of the GW loss.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GenPenaltySpec {
    L1 { lambda: f64 },
    Tv { lambda: f64, h: usize, w: usize },
    /// Style adversary activated from the given iteration (two-phase
    /// protocol); the scorer itself is passed to [`train`].
    Style { activate_at: usize },
}

/// All hyperparameters of the training loop.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    /// Adam learning rate for both players.
    pub lr: f64,
    /// Generator steps per adversary step.
    pub n_g: usize,
    /// Mini-batch size (needs >= 2 for pairwise distances).
    pub batch_size: usize,
    /// Total training iterations.
    pub total_iters: usize,
    pub gw: GwConfig,
    /// Procrustes / layerwise penalty weight.
    pub beta: f64,
    pub gen_penalties: Vec<GenPenaltySpec>,
    pub adversary_mode: AdversaryMode,
    pub orth_mode: OrthMode,
    pub seed: u64,
    /// Dump generated samples every this many iterations (0 disables).
    pub checkpoint_every: usize,
    /// Samples per checkpoint dump.
    pub eval_samples: usize,
    /// Abort when the loss magnitude exceeds this guard.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            n_g: 3,
            batch_size: 256,
            total_iters: 3000,
            gw: GwConfig::default(),
            beta: 1.0,
            gen_penalties: Vec::new(),
            adversary_mode: AdversaryMode::Learned,
            orth_mode: OrthMode::Procrustes,
            seed: 0,
            checkpoint_every: 500,
            eval_samples: 1000,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidInput(
                "batch size must be >= 2 (pairwise distances)".into(),
            ));
        }
        if self.total_iters == 0 {
            return Err(Error::InvalidInput("total_iters must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum StepKind {
    Generator,
    Adversary,
}

/// One adversary step per `n_g + 1` consecutive iterations, at the fixed
/// residue class `t = n_g (mod n_g + 1)` — the generator trains first.
pub fn adversary_schedule(t: usize, n_g: usize) -> StepKind {
    if t % (n_g + 1) == n_g {
        StepKind::Adversary
    } else {
        StepKind::Generator
    }
}

/// One logged penalty value.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PenaltyValue {
    pub name: &'static str,
    pub value: f64,
}

/// Per-iteration metrics record.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IterationRecord {
    pub iteration: usize,
    pub step: StepKind,
    /// Normalized GW loss of the iteration's batches.
    pub gw_loss: f64,
    /// Total adversary regularizer value (both branches; 0 when not learned).
    pub adversary_reg: f64,
    pub penalties: Vec<PenaltyValue>,
    /// Max marginal violation over the three GW solves.
    pub marginal_violation: f64,
    /// Max ratio of feature-space to raw-space distance-matrix maxima
    /// (1 in identity mode).
    pub feature_stretch: f64,
    /// Seconds since training start as reported by the hooks (0 without a
    /// clock).
    pub wall_clock_s: f64,
}

impl IterationRecord {
    /// Record with the wall-clock field zeroed; the deterministic part.
    pub fn without_wall_clock(&self) -> IterationRecord {
        IterationRecord {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }
}

/// Append-only per-iteration log.
#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    records: Vec<IterationRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum TrainOutcome {
    Completed,
    /// Non-finite loss; the returned nets are the last finite state.
    AbortedNonFinite { iteration: usize },
    /// Loss exceeded the divergence guard.
    AbortedDiverged { iteration: usize },
}

/// The adversary pair of Algorithm-style training: one feature net per space.
#[derive(Debug, Clone)]
pub struct AdversaryPair {
    /// Data-branch feature map.
    pub data_net: DenseNet,
    /// Generator-branch feature map.
    pub gen_net: DenseNet,
}

/// Trained networks plus the metrics log.
#[derive(Debug)]
pub struct TrainOutput {
    pub generator: DenseNet,
    pub adversary: Option<AdversaryPair>,
    pub metrics: MetricsLog,
    pub outcome: TrainOutcome,
}

/// One reference mini-batch: raw coordinates, precomputed intra-batch
/// distances (geodesics), or both.
#[derive(Debug, Clone)]
pub struct RefBatch {
    pub points: Option<Array2<f64>>,
    pub distances: Option<DistanceMatrix>,
}

/// Source of reference mini-batches.
pub trait ReferenceSampler {
    fn sample_batch(&mut self, rng: &mut ChaCha8Rng, m: usize) -> Result<RefBatch>;
}

/// Training-loop callbacks: wall-clock source, per-iteration metrics sink and
/// checkpoint sample sink. All default to no-ops so the loop runs unhooked.
pub trait TrainHooks {
    fn now_s(&mut self) -> f64 {
        0.0
    }
    fn on_record(&mut self, _record: &IterationRecord) {}
    fn on_checkpoint(&mut self, _iteration: usize, _samples: &Array2<f64>) {}
}

/// No-op hooks.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

struct Branch {
    features: Array2<f64>,
    tape: Option<Tape>,
    distances: DistanceMatrix,
    raw_max: f64,
}

/// Feature branch for one batch: through the adversary when learned,
/// identically otherwise. Precomputed distances short-circuit everything.
fn make_branch(
    points: Option<&Array2<f64>>,
    precomputed: Option<&DistanceMatrix>,
    net: Option<&DenseNet>,
) -> Result<Branch> {
    if let Some(d) = precomputed {
        if net.is_some() {
            return Err(Error::InvalidInput(
                "learned adversary needs raw coordinates, not precomputed distances".into(),
            ));
        }
        return Ok(Branch {
            features: Array2::zeros((0, 0)),
            tape: None,
            distances: d.clone(),
            raw_max: d.max_off_diagonal(),
        });
    }
    let pts = points.ok_or_else(|| {
        Error::InvalidInput("reference batch carries neither points nor distances".into())
    })?;
    let raw_max = pairwise_euclidean(pts)?.max_off_diagonal();
    match net {
        Some(net) => {
            let (features, tape) = forward(net, pts)?;
            let distances = pairwise_euclidean(&features)?;
            Ok(Branch {
                features,
                tape: Some(tape),
                distances,
                raw_max,
            })
        }
        None => Ok(Branch {
            features: pts.clone(),
            tape: None,
            distances: pairwise_euclidean(pts)?,
            raw_max,
        })
    }
}

/// Adversary regularizer for one branch: value plus, when the penalty acts on
/// the features, its gradient with respect to them.
fn branch_regularizer(
    orth_mode: OrthMode,
    beta: f64,
    net: &DenseNet,
    features: &Array2<f64>,
    inputs: &Array2<f64>,
) -> Result<(f64, Option<PenaltyResult>, Option<GradientSet>)> {
    match orth_mode {
        OrthMode::Procrustes => {
            let pen = procrustes_penalty(features, inputs, beta)?;
            Ok((pen.value, Some(pen), None))
        }
        OrthMode::LayerwiseFull => {
            let (value, grads) =
                layerwise_orthogonality_penalty(net, beta, OrthogonalityMode::Full);
            Ok((value, None, Some(grads)))
        }
        OrthMode::LayerwiseOffdiag => {
            let (value, grads) =
                layerwise_orthogonality_penalty(net, beta, OrthogonalityMode::OffDiagonal);
            Ok((value, None, Some(grads)))
        }
        OrthMode::SaxeInitOnly => Ok((0.0, None, None)),
    }
}

/// Generator gradient chain at frozen couplings: envelope gradient of the
/// normalized loss in the generated-side distances, chained through the
/// pairwise-distance backward, the adversary input gradient (when learned)
/// and the generator backward pass.
#[derive(Debug)]
pub struct GeneratorChain {
    pub loss: f64,
    /// `dL/dY`: gradient of the GW term with respect to the generator output.
    pub upstream_y: Array2<f64>,
    pub grads: GradientSet,
    pub solve: NormalizedGwSolve,
}

/// Standalone version of the generator update used by the training loop;
/// exposed so the full chain can be checked against finite differences.
pub fn generator_gw_gradient(
    d_data: &DistanceMatrix,
    generator: &DenseNet,
    z: &Array2<f64>,
    adversary_gen: Option<&DenseNet>,
    gw_cfg: &GwConfig,
) -> Result<GeneratorChain> {
    let (y, y_tape) = forward(generator, z)?;
    let branch = make_branch(Some(&y), None, adversary_gen)?;
    let m = y.nrows();
    let p = ProbabilityVector::uniform(d_data.n());
    let q = ProbabilityVector::uniform(m);
    let solve = normalized_gw_full(d_data, &branch.distances, &p, &q, gw_cfg)?;
    let g_dbar = normalized_gw_grad_dbar_frozen(
        d_data,
        &branch.distances,
        &solve.cross.coupling,
        &solve.self_second.coupling,
    )?;
    let feat_grad = pairwise_euclidean_backward(&branch.features, &g_dbar)?;
    let upstream_y = match (&branch.tape, adversary_gen) {
        (Some(tape), Some(net)) => backward(net, tape, &feat_grad)?.1,
        _ => feat_grad,
    };
    let (grads, _) = backward(generator, &y_tape, &upstream_y)?;
    Ok(GeneratorChain {
        loss: solve.loss,
        upstream_y,
        grads,
        solve,
    })
}

/// Runs the alternating minimax loop.
///
/// `adversary_template` seeds both branch nets (cloned, then trained
/// separately); it is ignored in identity mode. A style scorer must be
/// supplied iff `gen_penalties` contains a `Style` entry.
pub fn train(
    generator: DenseNet,
    adversary_template: Option<DenseNet>,
    sampler: &mut dyn ReferenceSampler,
    style: Option<&dyn StyleAdversary>,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let wants_style = cfg
        .gen_penalties
        .iter()
        .any(|p| matches!(p, GenPenaltySpec::Style { .. }));
    if wants_style != style.is_some() {
        return Err(Error::InvalidInput(
            "style penalty spec and style adversary must be supplied together".into(),
        ));
    }

    let mut generator = generator;
    let mut adversary = match cfg.adversary_mode {
        AdversaryMode::Identity => None,
        AdversaryMode::Learned | AdversaryMode::FrozenAfter(_) => {
            let template = adversary_template.ok_or_else(|| {
                Error::InvalidInput("learned adversary mode needs an adversary net".into())
            })?;
            Some(AdversaryPair {
                data_net: template.clone(),
                gen_net: template,
            })
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let m = cfg.batch_size;
    let uniform = ProbabilityVector::uniform(m);

    let mut gen_state = AdamState::new(&generator, cfg.lr);
    let mut adv_states = adversary
        .as_ref()
        .map(|a| (AdamState::new(&a.data_net, cfg.lr), AdamState::new(&a.gen_net, cfg.lr)));

    let mut metrics = MetricsLog::default();
    let mut outcome = TrainOutcome::Completed;

    for t in 0..cfg.total_iters {
        let batch = sampler.sample_batch(&mut rng, m)?;
        let z = sample_noise(&mut rng, m, generator.input_dim());
        let (y, y_tape) = forward(&generator, &z)?;

        let data_branch = make_branch(
            batch.points.as_ref(),
            batch.distances.as_ref(),
            adversary.as_ref().map(|a| &a.data_net),
        )?;
        let gen_branch = make_branch(Some(&y), None, adversary.as_ref().map(|a| &a.gen_net))?;

        if data_branch.distances.n() != m {
            return Err(Error::ShapeMismatch {
                context: "reference batch size",
                expected: (m, m),
                got: (data_branch.distances.n(), data_branch.distances.n()),
            });
        }

        let solve = normalized_gw_full(
            &data_branch.distances,
            &gen_branch.distances,
            &uniform,
            &uniform,
            &cfg.gw,
        )?;
        let loss = solve.loss;
        if !loss.is_finite() {
            outcome = TrainOutcome::AbortedNonFinite { iteration: t };
            break;
        }
        if loss.abs() > cfg.divergence_threshold {
            outcome = TrainOutcome::AbortedDiverged { iteration: t };
            break;
        }

        // Generator penalties (values logged every iteration).
        let mut penalty_values = Vec::new();
        let mut penalty_grad: Option<Array2<f64>> = None;
        let add_penalty = |acc: &mut Option<Array2<f64>>, pen: &PenaltyResult| {
            match acc {
                Some(g) => *g += &pen.grad,
                None => *acc = Some(pen.grad.clone()),
            }
        };
        for spec in &cfg.gen_penalties {
            match spec {
                GenPenaltySpec::L1 { lambda } => {
                    let pen = l1_penalty(&y, *lambda);
                    penalty_values.push(PenaltyValue {
                        name: "l1",
                        value: pen.value,
                    });
                    add_penalty(&mut penalty_grad, &pen);
                }
                GenPenaltySpec::Tv { lambda, h, w } => {
                    let pen = tv(&y, *h, *w, *lambda)?;
                    penalty_values.push(PenaltyValue {
                        name: "tv",
                        value: pen.value,
                    });
                    add_penalty(&mut penalty_grad, &pen);
                }
                GenPenaltySpec::Style { activate_at } => {
                    let scorer = style.expect("checked above");
                    let batch_mean_score = {
                        let scores = scorer.score(&y);
                        scores.sum() / scores.len().max(1) as f64
                    };
                    penalty_values.push(PenaltyValue {
                        name: "style_score",
                        value: batch_mean_score,
                    });
                    if t >= *activate_at {
                        let pen = style_penalty(scorer, &y)?;
                        penalty_values.push(PenaltyValue {
                            name: "style",
                            value: pen.value,
                        });
                        add_penalty(&mut penalty_grad, &pen);
                    }
                }
            }
        }

        // Adversary regularizer values (logged every iteration when learned).
        let mut adversary_reg = 0.0;
        let mut reg_data: Option<(f64, Option<PenaltyResult>, Option<GradientSet>)> = None;
        let mut reg_gen: Option<(f64, Option<PenaltyResult>, Option<GradientSet>)> = None;
        if let Some(pair) = &adversary {
            let x_points = batch
                .points
                .as_ref()
                .expect("learned adversary implies raw points");
            let rd = branch_regularizer(
                cfg.orth_mode,
                cfg.beta,
                &pair.data_net,
                &data_branch.features,
                x_points,
            )?;
            let rg = branch_regularizer(
                cfg.orth_mode,
                cfg.beta,
                &pair.gen_net,
                &gen_branch.features,
                &y,
            )?;
            adversary_reg = rd.0 + rg.0;
            reg_data = Some(rd);
            reg_gen = Some(rg);
        }

        let feature_stretch = {
            let ratio = |branch: &Branch| {
                if branch.raw_max > 0.0 {
                    branch.distances.max_off_diagonal() / branch.raw_max
                } else {
                    1.0
                }
            };
            if adversary.is_some() {
                ratio(&data_branch).max(ratio(&gen_branch))
            } else {
                1.0
            }
        };

        let frozen = match cfg.adversary_mode {
            AdversaryMode::FrozenAfter(t0) => t >= t0,
            _ => false,
        };
        let step = if adversary.is_none() || frozen {
            StepKind::Generator
        } else {
            adversary_schedule(t, cfg.n_g)
        };

        match step {
            StepKind::Generator => {
                let g_dbar = normalized_gw_grad_dbar_frozen(
                    &data_branch.distances,
                    &gen_branch.distances,
                    &solve.cross.coupling,
                    &solve.self_second.coupling,
                )?;
                let feat_grad = pairwise_euclidean_backward(&gen_branch.features, &g_dbar)?;
                let mut upstream_y = match (&gen_branch.tape, &adversary) {
                    (Some(tape), Some(pair)) => backward(&pair.gen_net, tape, &feat_grad)?.1,
                    _ => feat_grad,
                };
                if let Some(pg) = &penalty_grad {
                    upstream_y += pg;
                }
                let (grads, _) = backward(&generator, &y_tape, &upstream_y)?;
                adam_step(&mut generator, &grads, &mut gen_state, Direction::Descend)?;
            }
            StepKind::Adversary => {
                let pair = adversary.as_mut().expect("step implies adversary");
                let (data_state, gen_state_adv) =
                    adv_states.as_mut().expect("states exist with adversary");

                // Data branch: ascend on L - R(data).
                let g_d = normalized_gw_grad_d_frozen(
                    &data_branch.distances,
                    &gen_branch.distances,
                    &solve.cross.coupling,
                    &solve.self_first.coupling,
                )?;
                let mut feat_grad = pairwise_euclidean_backward(&data_branch.features, &g_d)?;
                let (rd_value, rd_pen, rd_layer) = reg_data.take().expect("learned branch");
                let _ = rd_value;
                if let Some(pen) = &rd_pen {
                    feat_grad -= &pen.grad;
                }
                let tape = data_branch.tape.as_ref().expect("learned branch has tape");
                let (mut grads, _) = backward(&pair.data_net, tape, &feat_grad)?;
                if let Some(layer_grads) = &rd_layer {
                    grads.add_scaled(layer_grads, -1.0);
                }
                adam_step(&mut pair.data_net, &grads, data_state, Direction::Ascend)?;

                // Generator branch: ascend on L - R(gen).
                let g_dbar = normalized_gw_grad_dbar_frozen(
                    &data_branch.distances,
                    &gen_branch.distances,
                    &solve.cross.coupling,
                    &solve.self_second.coupling,
                )?;
                let mut feat_grad = pairwise_euclidean_backward(&gen_branch.features, &g_dbar)?;
                let (rg_value, rg_pen, rg_layer) = reg_gen.take().expect("learned branch");
                let _ = rg_value;
                if let Some(pen) = &rg_pen {
                    feat_grad -= &pen.grad;
                }
                let tape = gen_branch.tape.as_ref().expect("learned branch has tape");
                let (mut grads, _) = backward(&pair.gen_net, tape, &feat_grad)?;
                if let Some(layer_grads) = &rg_layer {
                    grads.add_scaled(layer_grads, -1.0);
                }
                adam_step(&mut pair.gen_net, &grads, gen_state_adv, Direction::Ascend)?;
            }
        }

        let record = IterationRecord {
            iteration: t,
            step,
            gw_loss: loss,
            adversary_reg,
            penalties: penalty_values,
            marginal_violation: solve.max_marginal_violation(),
            feature_stretch,
            wall_clock_s: hooks.now_s(),
        };
        hooks.on_record(&record);
        metrics.push(record);

        if cfg.checkpoint_every > 0
            && (t % cfg.checkpoint_every == 0 || t + 1 == cfg.total_iters)
        {
            let zs = sample_noise(&mut eval_rng, cfg.eval_samples, generator.input_dim());
            let (samples, _) = forward(&generator, &zs)?;
            hooks.on_checkpoint(t, &samples);
        }
    }

    Ok(TrainOutput {
        generator,
        adversary,
        metrics,
        outcome,
    })
}

fn tv(y: &Array2<f64>, h: usize, w: usize, lambda: f64) -> Result<PenaltyResult> {
    crate::regularizers::tv_penalty(y, h, w, lambda)
}
