use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::plot::ContactSheet;
use super::{accuracy, BaselineMode, EvalPoint, EvalReport, SampleRecord};
use crate::channel::{ChannelTap, EavesdropDataset};
use crate::data::LabeledImages;
use crate::error::{Error, Result};
use crate::model::{ClassificationResult, ModelPartition};
use crate::tensor::ActivationTensor;
use crate::vae::{generate_adversarial, train_vae, AttackConfig, Interpolation, LatentPool, VaeConfig, VaeModel};

/// Device side: the head's activation for every test image.
fn device_outputs(partition: &ModelPartition<f32>, testset: &LabeledImages<f32>) -> Result<Vec<ActivationTensor<f32>>> {
    partition.input_shape().expect(testset.shape())?;
    let heads = partition.forward_head_batch(testset.images().view())?;
    heads
        .rows()
        .into_iter()
        .map(|r| Ok(ActivationTensor::new(partition.cut_shape().clone(), r.to_vec())?.with_source_layer(partition.cut_index)))
        .collect()
}

/// Sends every activation across `tap` and classifies what the server receives.
fn serve(
    partition: &ModelPartition<f32>,
    tap: &ChannelTap<'_>,
    heads: &[ActivationTensor<f32>],
    labels: &[usize],
) -> Result<(Vec<SampleRecord>, Vec<ActivationTensor<f32>>)> {
    let received = heads.iter().map(|h| tap.transmit(h)).collect::<Result<Vec<_>>>()?;
    let d = partition.cut_shape().numel();
    let mut batch = Array2::<f32>::zeros((received.len(), d));
    for (mut row, h) in batch.rows_mut().into_iter().zip(&received) {
        row.assign(&ndarray::ArrayView1::from(h.values()));
    }
    let probs = partition.forward_tail_batch(batch.view())?;
    let records = ClassificationResult::from_rows(&probs)
        .iter()
        .zip(labels)
        .map(|(r, &t)| SampleRecord::new(r, t))
        .collect();
    Ok((records, received))
}

fn attacked(
    partition: &ModelPartition<f32>,
    vae: &VaeModel<f32>,
    pool: &LatentPool<f32>,
    heads: &[ActivationTensor<f32>],
    labels: &[usize],
    config: &AttackConfig,
) -> Result<(Vec<SampleRecord>, Vec<ActivationTensor<f32>>)> {
    let tap = ChannelTap::active(|h| generate_adversarial(vae, h, pool, config));
    serve(partition, &tap, heads, labels)
}

/// Unattacked split inference over the test set, through a passive tap.
pub fn classify_clean(partition: &ModelPartition<f32>, testset: &LabeledImages<f32>) -> Result<Vec<SampleRecord>> {
    let heads = device_outputs(partition, testset)?;
    Ok(serve(partition, &ChannelTap::passive(), &heads, testset.labels())?.0)
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::Precondition("empty alpha grid".into()));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Precondition(format!("alphas {alphas:?} outside [0, 1]")));
    }
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(format!("alphas {alphas:?} not strictly ascending")));
    }
    Ok(())
}

/// End-to-end attack sweep: device head -> active tap running the VAE
/// attack at each α -> server tail, scored against the true labels.
///
/// The clean pass and the α = 0 pass are run first and fix the baseline.
pub fn sweep(
    partition: &ModelPartition<f32>,
    vae: &VaeModel<f32>,
    pool: &LatentPool<f32>,
    testset: &LabeledImages<f32>,
    alphas: &[f64],
    config: &AttackConfig,
    baseline_mode: BaselineMode,
) -> Result<EvalReport> {
    check_alphas(alphas)?;
    config.validate()?;
    if testset.is_empty() {
        return Err(Error::Precondition("empty test set".into()));
    }
    let heads = device_outputs(partition, testset)?;
    let labels = testset.labels();
    let clean_records = serve(partition, &ChannelTap::passive(), &heads, labels)?.0;
    let clean_accuracy = accuracy(&clean_records)?;
    let alpha0_records = attacked(partition, vae, pool, &heads, labels, &config.with_alpha(0.0))?.0;
    let alpha0_accuracy = accuracy(&alpha0_records)?;
    let baseline_value = match baseline_mode {
        BaselineMode::CleanAccuracy => clean_accuracy,
        BaselineMode::Alpha0Accuracy => alpha0_accuracy,
    };

    let mut points = Vec::with_capacity(alphas.len());
    let mut point_records = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let records = if alpha == 0.0 {
            alpha0_records.clone()
        } else {
            attacked(partition, vae, pool, &heads, labels, &config.with_alpha(alpha))?.0
        };
        points.push(EvalPoint::from_records(alpha, &records, baseline_value)?);
        point_records.push(records);
    }
    Ok(EvalReport {
        model_id: partition.model_id.clone(),
        cut_index: partition.cut_index,
        baseline_mode,
        baseline_value,
        clean_accuracy,
        alpha0_accuracy,
        config: config.clone(),
        points,
        clean_records,
        point_records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub budget: usize,
    /// α at which `misclassified_confidence` is read: the largest in the grid.
    pub confidence_alpha: f64,
    pub misclassified_confidence: Option<f64>,
    pub report: EvalReport,
}

/// Trains one VAE per budget on the first `budget` captures and sweeps it.
#[allow(clippy::too_many_arguments)]
pub fn budget_study(
    partition: &ModelPartition<f32>,
    captures: &EavesdropDataset<f32>,
    testset: &LabeledImages<f32>,
    budgets: &[usize],
    vae_config: &VaeConfig,
    alphas: &[f64],
    config: &AttackConfig,
    baseline_mode: BaselineMode,
) -> Result<Vec<BudgetPoint>> {
    check_alphas(alphas)?;
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(format!("budgets {budgets:?} must be nonempty and ascending")));
    }
    let max = *budgets.last().expect("nonempty");
    if max > captures.len() {
        return Err(Error::InsufficientData { requested: max, available: captures.len() });
    }
    let confidence_alpha = *alphas.last().expect("nonempty");
    budgets
        .iter()
        .map(|&budget| {
            let data = captures.first(budget)?;
            let vae = train_vae(&data, vae_config)?;
            let pool = LatentPool::from_dataset(&vae, &data)?;
            let report = sweep(partition, &vae, &pool, testset, alphas, config, baseline_mode)?;
            let misclassified_confidence = report.point(confidence_alpha).and_then(|p| p.misclassified_confidence);
            Ok(BudgetPoint { budget, confidence_alpha, misclassified_confidence, report })
        })
        .collect()
}

/// Lerp and slerp arms that differ only in the interpolation operator.
pub fn paired_configs(base: &AttackConfig) -> (AttackConfig, AttackConfig) {
    (
        AttackConfig { interpolation: Interpolation::Lerp, ..base.clone() },
        AttackConfig { interpolation: Interpolation::Slerp, ..base.clone() },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReports {
    pub lerp: EvalReport,
    pub slerp: EvalReport,
}

/// Runs the same sweep with lerp and with slerp.
#[allow(clippy::too_many_arguments)]
pub fn interpolation_study(
    partition: &ModelPartition<f32>,
    vae: &VaeModel<f32>,
    pool: &LatentPool<f32>,
    testset: &LabeledImages<f32>,
    alphas: &[f64],
    lerp: &AttackConfig,
    slerp: &AttackConfig,
    baseline_mode: BaselineMode,
) -> Result<PairedReports> {
    if lerp.interpolation != Interpolation::Lerp || slerp.interpolation != Interpolation::Slerp {
        return Err(Error::Config("interpolation arms must be (lerp, slerp)".into()));
    }
    if lerp.seed != slerp.seed {
        return Err(Error::Config(format!("arm seeds differ: {} vs {}", lerp.seed, slerp.seed)));
    }
    if *lerp != (AttackConfig { interpolation: Interpolation::Lerp, ..slerp.clone() }) {
        return Err(Error::Config("arms differ in more than the interpolation operator".into()));
    }
    Ok(PairedReports {
        lerp: sweep(partition, vae, pool, testset, alphas, lerp, baseline_mode)?,
        slerp: sweep(partition, vae, pool, testset, alphas, slerp, baseline_mode)?,
    })
}

/// Renders selected test samples under the clean pass and each α: every
/// cell shows the input image beside the activation the server received.
#[allow(clippy::too_many_arguments)]
pub fn contact_sheet(
    partition: &ModelPartition<f32>,
    vae: &VaeModel<f32>,
    pool: &LatentPool<f32>,
    testset: &LabeledImages<f32>,
    indices: &[usize],
    alphas: &[f64],
    config: &AttackConfig,
) -> Result<ContactSheet> {
    check_alphas(alphas)?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= testset.len()) {
        return Err(Error::Precondition(format!("sample index {bad} outside test set of {}", testset.len())));
    }
    let subset = LabeledImages::new(
        testset.shape().clone(),
        testset.gather(indices),
        indices.iter().map(|&i| testset.labels()[i]).collect(),
    )?;
    let heads = device_outputs(partition, &subset)?;
    let labels = subset.labels();
    let mut sheet = ContactSheet::new(&subset);
    let (records, received) = serve(partition, &ChannelTap::passive(), &heads, labels)?;
    sheet.push_row("clean", &records, &received)?;
    for &alpha in alphas {
        let (records, received) = attacked(partition, vae, pool, &heads, labels, &config.with_alpha(alpha))?;
        sheet.push_row(&format!("alpha={alpha}"), &records, &received)?;
    }
    Ok(sheet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;
    use crate::model::{build_model, train_model, Classifier, TrainOptions};

    struct Fixture {
        model: Classifier<f32>,
        partition: ModelPartition<f32>,
        captures: EavesdropDataset<f32>,
        vae: VaeModel<f32>,
        pool: LatentPool<f32>,
        test: LabeledImages<f32>,
    }

    /// Briefly trained tinynet and a tiny VAE: exercises plumbing, not
    /// attack strength.
    fn fixture() -> Fixture {
        let opts = TrainOptions { epochs: 2, seed: 1, ..Default::default() };
        let model = train_model(&build_model::<f32>("tinynet", 1).unwrap(), &synthetic_dataset(400, 9), None, &opts).unwrap();
        let partition = model.partition(9).unwrap();
        let images = synthetic_dataset::<f32>(80, 3);
        let tap = ChannelTap::passive();
        for h in device_outputs(&partition, &images).unwrap() {
            tap.transmit(&h).unwrap();
        }
        let captures = tap.collect(80).unwrap();
        let cfg = VaeConfig { hidden_size: 32, latent_dim: 4, epochs: 2, ..VaeConfig::new(partition.cut_shape().clone()) };
        let vae = train_vae(&captures, &cfg).unwrap();
        let pool = LatentPool::from_dataset(&vae, &captures).unwrap();
        Fixture { model, partition, captures, vae, pool, test: synthetic_dataset::<f32>(20, 4) }
    }

    #[test]
    fn sweep_structure_and_alpha0_baseline() {
        let f = fixture();
        let cfg = AttackConfig { seed: 3, ..Default::default() };
        let r = sweep(&f.partition, &f.vae, &f.pool, &f.test, &[0.0], &cfg, BaselineMode::Alpha0Accuracy).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.points[0].asr, 0.0);
        assert_eq!(r.baseline_value, r.alpha0_accuracy);
        let r = sweep(&f.partition, &f.vae, &f.pool, &f.test, &[0.0, 0.5, 1.0], &cfg, BaselineMode::CleanAccuracy).unwrap();
        assert_eq!(r.points.len(), 3);
        assert_eq!(r.point_records.len(), 3);
        assert!(r.points.iter().all(|p| p.n_samples_evaluated == 20));
        assert_eq!(r.baseline_value, r.clean_accuracy);
        assert_eq!(r.points[0].accuracy, r.alpha0_accuracy);
        let again = sweep(&f.partition, &f.vae, &f.pool, &f.test, &[0.0, 0.5, 1.0], &cfg, BaselineMode::CleanAccuracy).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn unsorted_alphas_rejected() {
        let f = fixture();
        let cfg = AttackConfig::default();
        for grid in [&[0.5, 0.2][..], &[0.2, 0.2], &[], &[1.5]] {
            assert!(matches!(
                sweep(&f.partition, &f.vae, &f.pool, &f.test, grid, &cfg, BaselineMode::CleanAccuracy),
                Err(Error::Precondition(_))
            ));
        }
    }

    #[test]
    fn clean_pass_matches_full_model() {
        let f = fixture();
        let records = classify_clean(&f.partition, &f.test).unwrap();
        for (i, r) in records.iter().enumerate() {
            let full = f.model.forward_full(&f.test.image(i)).unwrap();
            assert_eq!(r.predicted, full.predicted_class);
        }
    }

    #[test]
    fn budget_needs_enough_captures() {
        let f = fixture();
        let vcfg = f.vae.config().clone();
        let cfg = AttackConfig::default();
        let err = budget_study(&f.partition, &f.captures, &f.test, &[500], &vcfg, &[1.0], &cfg, BaselineMode::CleanAccuracy);
        assert!(matches!(err, Err(Error::InsufficientData { requested: 500, available: 80 })));
        let err = budget_study(&f.partition, &f.captures, &f.test, &[60, 40], &vcfg, &[1.0], &cfg, BaselineMode::CleanAccuracy);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn paired_arms_validation() {
        let f = fixture();
        let (l, s) = paired_configs(&AttackConfig { seed: 4, ..Default::default() });
        let run = |l: &AttackConfig, s: &AttackConfig| {
            interpolation_study(&f.partition, &f.vae, &f.pool, &f.test, &[0.0, 1.0], l, s, BaselineMode::CleanAccuracy)
        };
        let bad_seed = AttackConfig { seed: 5, ..s.clone() };
        assert!(matches!(run(&l, &bad_seed), Err(Error::Config(_))));
        assert!(matches!(run(&s, &l), Err(Error::Config(_))));
        let bad_k = AttackConfig { target_pool_size: 3, ..s.clone() };
        assert!(matches!(run(&l, &bad_k), Err(Error::Config(_))));
        let p = run(&l, &s).unwrap();
        assert_eq!(p.lerp.point_records, p.slerp.point_records);
        assert_eq!(p.lerp.points, p.slerp.points);
    }
}
