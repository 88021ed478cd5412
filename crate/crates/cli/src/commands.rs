use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use ttstack_core::io::{sha256_hex, write_atomic};
use ttstack_core::meta::{LogRegOptions, Provenance};
use ttstack_core::metrics::{classification_report, roc_curve, write_roc_csv};
use ttstack_core::synth::SyntheticSpec;
use ttstack_core::trainer::train_with_observer;
use ttstack_core::vit::{argmax, cross_entropy, softmax};
use ttstack_core::{Dataset, Error, Label, LogitPair, MetaFeatures, MetaModel, MetricsReport, Result, TinyViT};

use crate::config::{validate_learner_id, RunConfig, STACK_ID};
use crate::layout;
use crate::manifest::RunManifest;

/// Which logit files `extract-logits` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Val,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub corpus_checksum: String,
    pub class_names: [String; 2],
    pub corpus_counts: [usize; 2],
    pub train_counts: [usize; 2],
    pub balanced_train_counts: [usize; 2],
    pub val_counts: [usize; 2],
}

pub struct PreparedData {
    /// Balanced training set; also the meta-training rows.
    pub train: Dataset,
    pub val: Dataset,
    pub summary: DataSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub roc_auc: f64,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn corpus_checksum(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    for s in ds.samples() {
        buf.extend_from_slice(s.id.as_bytes());
        buf.push(0);
        buf.push(s.label);
        buf.extend_from_slice(&(s.image.width() as u64).to_le_bytes());
        buf.extend_from_slice(&(s.image.height() as u64).to_le_bytes());
        buf.extend_from_slice(s.image.pixels());
    }
    sha256_hex(&buf)
}

pub fn gen_synthetic(out: &Path, spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.negatives == 0 || spec.positives == 0 || spec.size == 0 {
        return Err(Error::Config("synthetic corpus needs both classes and a non-zero size".into()));
    }
    if !(spec.texture_std.is_finite() && spec.texture_std >= 0.0) {
        return Err(Error::Config("texture_std must be finite and >= 0".into()));
    }
    let ds = spec.write_corpus(out)?;
    eprintln!(
        "gen-synthetic: wrote {} images ({} cancer, {} non-cancer) to {}",
        ds.len(),
        spec.positives,
        spec.negatives,
        out.display()
    );
    Ok(ds)
}

/// Load, split and balance. Validation data never passes through balancing.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let corpus = Dataset::load(&cfg.corpus)?;
    let (train, val) = corpus.stratified_split(cfg.pipeline.split_ratio, cfg.seed)?;
    let balanced = train.balance_by_upsampling(cfg.seed)?;
    let summary = DataSummary {
        corpus_checksum: corpus_checksum(&corpus),
        class_names: corpus.mapping.names.clone(),
        corpus_counts: corpus.class_counts(),
        train_counts: train.class_counts(),
        balanced_train_counts: balanced.class_counts(),
        val_counts: val.class_counts(),
    };
    Ok(PreparedData { train: balanced, val, summary })
}

fn write_run_files(cfg: &RunConfig, data: &PreparedData) -> Result<()> {
    write_atomic(&cfg.output_dir.join(layout::RUN_CONFIG), cfg.canonical_json()?.as_bytes())?;
    write_json(&cfg.output_dir.join(layout::DATA_SUMMARY), &data.summary)
}

fn train_learners(cfg: &RunConfig, data: &PreparedData) -> Result<()> {
    let k = cfg.learners.len();
    for (i, spec) in cfg.learners.iter().enumerate() {
        let id = &spec.id;
        let model = TinyViT::new(spec.vit.clone()).map_err(|e| e.context(format!("learner `{id}`")))?;
        let train_cfg = cfg.train_config_for(id);
        let epochs = train_cfg.max_epochs;
        let (best, history) = train_with_observer(model, &data.train, &data.val, &cfg.pipeline, &train_cfg, |r| {
            eprintln!(
                "train-base [{}/{k}] {id} epoch {}/{epochs}: train_loss {:.4} train_acc {:.4} val_loss {:.4} val_acc {:.4} lr {:.2e}",
                i + 1,
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                r.val_loss,
                r.val_accuracy,
                r.lr
            )
        })
        .map_err(|e| e.context(format!("learner `{id}`")))?;
        best.save(&layout::checkpoint_path(&cfg.output_dir, id))?;
        history.write_csv(&layout::history_path(&cfg.output_dir, id))?;
        eprintln!("train-base: {id} best epoch {} (val_loss {:.6})", history.best_epoch, history.best_val_loss);
    }
    Ok(())
}

pub fn train_base(cfg: &RunConfig) -> Result<RunManifest> {
    let data = prepare_data(cfg)?;
    write_run_files(cfg, &data)?;
    train_learners(cfg, &data)?;
    RunManifest::refresh(&cfg.output_dir)
}

fn load_learners(cfg: &RunConfig) -> Result<Vec<(String, TinyViT)>> {
    cfg.learners
        .iter()
        .map(|spec| {
            let path = layout::checkpoint_path(&cfg.output_dir, &spec.id);
            if !path.is_file() {
                return Err(Error::Data(format!("missing checkpoint for learner `{}`: {}", spec.id, path.display())));
            }
            let model = TinyViT::load(&path)?;
            if model.config() != &spec.vit {
                return Err(Error::Config(format!(
                    "checkpoint for learner `{}` was trained with a different configuration",
                    spec.id
                )));
            }
            Ok((spec.id.clone(), model))
        })
        .collect()
}

fn extract_with(cfg: &RunConfig, data: &PreparedData, split: Split) -> Result<()> {
    let learners = load_learners(cfg)?;
    let refs: Vec<(&str, &TinyViT)> = learners.iter().map(|(id, m)| (id.as_str(), m)).collect();
    let jobs = [
        (Split::Train, &data.train, Provenance::MetaTrain, layout::TRAIN_LOGITS),
        (Split::Val, &data.val, Provenance::MetaValidation, layout::VAL_LOGITS),
    ];
    for (which, ds, provenance, file) in jobs {
        if split == which || split == Split::All {
            let feats = ttstack_core::meta::extract_logits(&refs, ds, &cfg.pipeline, provenance)?;
            feats.write_csv(&cfg.output_dir.join(file))?;
            eprintln!("extract-logits: {} rows x {} learners -> {file}", feats.len(), refs.len());
        }
    }
    Ok(())
}

pub fn extract_logits(cfg: &RunConfig, split: Split) -> Result<RunManifest> {
    let data = prepare_data(cfg)?;
    write_run_files(cfg, &data)?;
    extract_with(cfg, &data, split)?;
    RunManifest::refresh(&cfg.output_dir)
}

fn read_logits(out: &Path, file: &str, provenance: Provenance, order: Option<&[String]>) -> Result<MetaFeatures> {
    let path = out.join(file);
    if !path.is_file() {
        return Err(Error::Data(format!("missing logit file {}", path.display())));
    }
    let feats = MetaFeatures::read_csv(&path, provenance, order).map_err(|e| e.context(path.display()))?;
    for id in &feats.learner_order {
        validate_learner_id(id).map_err(|e| e.context(path.display()))?;
    }
    Ok(feats)
}

fn sorted(v: &[String]) -> Vec<String> {
    let mut v = v.to_vec();
    v.sort();
    v
}

/// Train and validation logit files with identical learner sets, both in
/// `order` (or the train file's order when none is given).
fn read_logit_pair(out: &Path, order: Option<&[String]>) -> Result<(MetaFeatures, MetaFeatures)> {
    let train = read_logits(out, layout::TRAIN_LOGITS, Provenance::MetaTrain, None)?;
    let val = read_logits(out, layout::VAL_LOGITS, Provenance::MetaValidation, None)?;
    if sorted(&train.learner_order) != sorted(&val.learner_order) {
        return Err(Error::Data(format!(
            "learner sets differ between logit files: train {:?}, val {:?}",
            train.learner_order, val.learner_order
        )));
    }
    let order = order.map(<[String]>::to_vec).unwrap_or_else(|| train.learner_order.clone());
    if sorted(&order) != sorted(&train.learner_order) {
        return Err(Error::Data(format!(
            "logit files hold learners {:?} but {:?} were expected",
            train.learner_order, order
        )));
    }
    let train = read_logits(out, layout::TRAIN_LOGITS, Provenance::MetaTrain, Some(&order))?;
    let val = read_logits(out, layout::VAL_LOGITS, Provenance::MetaValidation, Some(&order))?;
    Ok((train, val))
}

fn stack_report(meta: &MetaModel, val: &MetaFeatures) -> Result<MetricsReport> {
    let preds = meta.predict(val)?;
    let y_pred: Vec<Label> = preds.iter().map(|p| p.0).collect();
    let probs: Vec<f64> = preds.iter().map(|p| p.1).collect();
    classification_report(&val.labels, &y_pred, &probs)
}

fn write_report(out: &Path, id: &str, report: &MetricsReport, labels: &[Label], scores: &[f64]) -> Result<()> {
    report.write_json(&layout::report_path(out, id))?;
    write_roc_csv(&layout::roc_path(out, id), &roc_curve(labels, scores)?)
}

/// Fits the meta-learner from logit files alone; no checkpoints needed.
pub fn train_meta(out: &Path, order: Option<&[String]>, opts: &LogRegOptions) -> Result<MetricsReport> {
    let (train, val) = read_logit_pair(out, order)?;
    let meta = MetaModel::fit(&train, opts)?;
    if !meta.logreg.converged {
        eprintln!("train-meta: warning: logistic regression stopped after {} iterations", meta.logreg.iterations_run);
    }
    meta.save(&out.join(layout::META_MODEL))?;
    let report = stack_report(&meta, &val)?;
    write_report(out, STACK_ID, &report, &val.labels, &meta.predict_proba(&val)?)?;
    eprintln!(
        "train-meta: {} learners, val accuracy {:.6}, roc_auc {:.6}",
        meta.learner_order.len(),
        report.accuracy,
        report.roc_auc
    );
    Ok(report)
}

pub fn train_meta_cmd(out: &Path, order: Option<&[String]>, opts: &LogRegOptions) -> Result<RunManifest> {
    train_meta(out, order, opts)?;
    RunManifest::refresh(out)
}

fn pairs(logits: &[[f64; 2]]) -> Vec<LogitPair> {
    logits.iter().map(|l| LogitPair::new(l[0], l[1])).collect()
}

fn accuracy(labels: &[Label], preds: &[Label]) -> f64 {
    labels.iter().zip(preds).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
}

/// `-log p(y)` for a logistic decision value, computed stably.
fn logistic_loss(z: f64, y: Label) -> f64 {
    z.max(0.0) - z * y as f64 + (-z.abs()).exp().ln_1p()
}

fn stack_loss_accuracy(meta: &MetaModel, feats: &MetaFeatures) -> Result<(f64, f64)> {
    let x = meta.standardizer.apply(&feats.rows)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &y) in x.iter().zip(&feats.labels) {
        let z = meta.logreg.decision(row);
        loss += logistic_loss(z, y);
        correct += usize::from(u8::from(meta.logreg.probability(row) >= 0.5) == y);
    }
    let n = feats.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("model,precision,recall,f1,train_accuracy,train_loss,val_accuracy,val_loss,roc_auc\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model, r.precision, r.recall, r.f1, r.train_accuracy, r.train_loss, r.val_accuracy, r.val_loss, r.roc_auc
        ));
    }
    s
}

/// Reports for every learner and the stack, from logit files and the meta model.
pub fn evaluate(out: &Path) -> Result<Vec<ComparisonRow>> {
    let meta_path = out.join(layout::META_MODEL);
    if !meta_path.is_file() {
        return Err(Error::Data(format!("missing meta model {}", meta_path.display())));
    }
    let meta = MetaModel::load(&meta_path)?;
    let (train, val) = read_logit_pair(out, Some(&meta.learner_order))?;

    let mut rows = Vec::with_capacity(meta.learner_order.len() + 1);
    for id in &meta.learner_order {
        let tr = pairs(&train.learner_logits(id).expect("order checked"));
        let va = pairs(&val.learner_logits(id).expect("order checked"));
        let tr_pred: Vec<Label> = tr.iter().map(|&l| argmax(l)).collect();
        let va_pred: Vec<Label> = va.iter().map(|&l| argmax(l)).collect();
        let scores: Vec<f64> = va.iter().map(|&l| softmax(l)[1]).collect();
        let report = classification_report(&val.labels, &va_pred, &scores)?;
        write_report(out, id, &report, &val.labels, &scores)?;
        rows.push(ComparisonRow {
            model: id.clone(),
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            train_accuracy: accuracy(&train.labels, &tr_pred),
            train_loss: cross_entropy(&tr, &train.labels),
            val_accuracy: report.accuracy,
            val_loss: cross_entropy(&va, &val.labels),
            roc_auc: report.roc_auc,
        });
    }

    let report = stack_report(&meta, &val)?;
    write_report(out, STACK_ID, &report, &val.labels, &meta.predict_proba(&val)?)?;
    let (train_loss, train_accuracy) = stack_loss_accuracy(&meta, &train)?;
    let (val_loss, _) = stack_loss_accuracy(&meta, &val)?;
    rows.push(ComparisonRow {
        model: STACK_ID.to_string(),
        precision: report.precision,
        recall: report.recall,
        f1: report.f1,
        train_accuracy,
        train_loss,
        val_accuracy: report.accuracy,
        val_loss,
        roc_auc: report.roc_auc,
    });

    write_atomic(&out.join(layout::COMPARISON), format_comparison(&rows).as_bytes())?;
    for r in &rows {
        eprintln!(
            "evaluate: {:<16} acc {:.6} p {:.6} r {:.6} f1 {:.6} auc {:.6}",
            r.model, r.val_accuracy, r.precision, r.recall, r.f1, r.roc_auc
        );
    }
    Ok(rows)
}

pub fn evaluate_cmd(out: &Path) -> Result<RunManifest> {
    evaluate(out)?;
    RunManifest::refresh(out)
}

#[derive(Serialize)]
struct Timing {
    finished_unix_seconds: u64,
    stages: Vec<(String, f64)>,
}

/// Every stage in order; wall-clock times go to `timing.json` only.
pub fn run_all(cfg: &RunConfig) -> Result<RunManifest> {
    let mut stages = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, stages: &mut Vec<(String, f64)>| {
        stages.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let data = prepare_data(cfg)?;
    write_run_files(cfg, &data)?;
    lap("prepare-data", &mut stages);
    train_learners(cfg, &data)?;
    lap("train-base", &mut stages);
    extract_with(cfg, &data, Split::All)?;
    lap("extract-logits", &mut stages);
    let order = cfg.learner_ids();
    train_meta(&cfg.output_dir, Some(&order), &cfg.meta)?;
    lap("train-meta", &mut stages);
    evaluate(&cfg.output_dir)?;
    lap("evaluate", &mut stages);

    let finished = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    write_json(&cfg.output_dir.join(layout::TIMING), &Timing { finished_unix_seconds: finished, stages })?;
    RunManifest::refresh(&cfg.output_dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_loss_matches_direct_formula() {
        for z in [-8.0, -2.0, 0.0, 0.5, 3.0, 8.0] {
            let p = 1.0 / (1.0 + f64::exp(-z));
            assert!((logistic_loss(z, 1) - -p.ln()).abs() < 1e-9);
            assert!((logistic_loss(z, 0) - -(1.0 - p).ln()).abs() < 1e-9);
        }
        assert!(logistic_loss(800.0, 0).is_finite());
    }

    #[test]
    fn comparison_header() {
        let text = format_comparison(&[]);
        assert_eq!(text, "model,precision,recall,f1,train_accuracy,train_loss,val_accuracy,val_loss,roc_auc\n");
    }
}
